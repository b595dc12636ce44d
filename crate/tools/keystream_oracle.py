"""Straight-line reference for the Chen-system keystream.

Integrates with classical RK4 (h = 0.001), one step per (x, y, z) sample, and
quantizes each component as floor(frac(|v|) * 1e14) mod 256.  Written without
sharing code with the Rust crate; its output is frozen as a test fixture.

    python3 tools/keystream_oracle.py 16
"""
import math
import sys

A, B, C = 35.0, 3.0, 28.0
H = 0.001


def chen(x, y, z):
    return (A * (y - x), (C - A) * x - x * z + C * y, x * y - B * z)


def main(count):
    x, y, z = -10.058, 0.368, 37.368
    out = []
    while len(out) < count:
        k1 = chen(x, y, z)
        k2 = chen(x + H / 2.0 * k1[0], y + H / 2.0 * k1[1], z + H / 2.0 * k1[2])
        k3 = chen(x + H / 2.0 * k2[0], y + H / 2.0 * k2[1], z + H / 2.0 * k2[2])
        k4 = chen(x + H * k3[0], y + H * k3[1], z + H * k3[2])
        x = x + H / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y = y + H / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        z = z + H / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        for v in (x, y, z):
            a = abs(v)
            out.append(int(math.floor((a - math.floor(a)) * 1e14)) % 256)
    print(bytes(out[:count]).hex())


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 16)
