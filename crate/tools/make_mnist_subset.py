"""Convert the digit samples bundled with the npm `mnist` package into IDX files.

The package ships 1000 MNIST digits per class as [0,1] floats rounded to three
decimals; round(v * 255) recovers the original bytes exactly.  Each class is
split 850/150 into train/test, then both splits are shuffled with a fixed seed.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import gzip
import json
import os
import struct
import sys

import numpy as np

TRAIN_PER_CLASS = 850


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload.tobytes())


def main(src, dst):
    train_x, train_y, test_x, test_y = [], [], [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        images = np.round(flat * 255.0).astype(np.uint8).reshape(-1, 28, 28)
        train_x.append(images[:TRAIN_PER_CLASS])
        test_x.append(images[TRAIN_PER_CLASS:])
        train_y += [digit] * TRAIN_PER_CLASS
        test_y += [digit] * (len(images) - TRAIN_PER_CLASS)

    rng = np.random.RandomState(0)
    os.makedirs(dst, exist_ok=True)
    for name, xs, ys in (("train", train_x, train_y), ("t10k", test_x, test_y)):
        x = np.concatenate(xs)
        y = np.asarray(ys, dtype=np.uint8)
        order = rng.permutation(len(y))
        x, y = x[order], y[order]
        write_idx(os.path.join(dst, f"{name}-images-idx3-ubyte.gz"), 0x803, (len(y), 28, 28), x)
        write_idx(os.path.join(dst, f"{name}-labels-idx1-ubyte.gz"), 0x801, (len(y),), y)
        print(name, len(y))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
