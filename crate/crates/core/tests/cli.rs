use std::path::Path;
use std::process::{Command, Output};

use chaoscrack::cipher::{self, CipherKey};
use chaoscrack::image::GrayImage;
use chaoscrack::seed::sha256_hex;

const KEY: &str = "4,7,5,-10.058,0.368,37.368,35,3,28";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaoscrack"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> String {
    stderr(o)
        .lines()
        .find(|l| l.starts_with("error["))
        .unwrap_or_else(|| panic!("no error line in {:?}", stderr(o)))
        .to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sample_image(side: usize) -> GrayImage {
    GrayImage::new(side, (0..side * side).map(|i| (i * 37 % 251) as u8).collect()).unwrap()
}

#[test]
fn encrypt_then_decrypt_restores_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let (plain, enc, dec) = (dir.path().join("p.png"), dir.path().join("e.png"), dir.path().join("d.png"));
    let img = sample_image(32);
    img.write_png(&plain).unwrap();
    let o = run(&["encrypt", "--in", p(&plain), "--out", p(&enc), "--key", KEY]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["decrypt", "--in", p(&enc), "--out", p(&dec), "--key", KEY]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(GrayImage::read_png(&dec).unwrap(), img);
    let expected = cipher::encrypt(&img, &CipherKey::reference()).unwrap();
    assert_eq!(GrayImage::read_png(&enc).unwrap(), expected);
}

#[test]
fn errors_have_a_one_line_prefix() {
    let o = run(&["encrypt", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o).starts_with("error[usage]: "));

    let o = run(&["encrypt", "--in", "/no/such/file.png", "--out", "/tmp/x.png", "--key", KEY]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o).starts_with("error[io]: "), "{}", stderr(&o));

    let o = run(&["encrypt", "--in", "a.png", "--out", "b.png", "--key", "1,2"]);
    assert!(error_line(&o).starts_with("error[cipher]: "));

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-dataset", "--out-dir", p(dir.path()), "--mode", "static", "--replicas", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o).starts_with("error[config]: "));

    let o = run(&["keysearch", "--pairs", p(dir.path()), "--bounds", "1..9,1..9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o).starts_with("error[usage]: "));

    let o = run(&["--help"]);
    assert!(o.status.success());
}

#[test]
fn corpus_train_attack_keysearch_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = run(&[
        "gen-dataset", "--out-dir", p(&corpus), "--mode", "static", "--side", "32",
        "--train-limit", "48", "--test-limit", "8", "--verify",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("run-config {"));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("train pairs: 48") && out.contains("regeneration check passed"));

    let train = |name: &str| {
        let ckpt = dir.path().join(name);
        let o = run(&[
            "train", "--corpus", p(&corpus), "--out-checkpoint", p(&ckpt), "--epochs", "1",
            "--batch", "16", "--seed", "3",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stderr(&o).contains("checkpoint digest"));
        sha256_hex(&std::fs::read(&ckpt).unwrap())
    };
    assert_eq!(train("a.ckpt"), train("b.ckpt"));

    let o = run(&[
        "train", "--corpus", p(&corpus), "--out-checkpoint", p(&dir.path().join("c.ckpt")),
        "--scale", "paper",
    ]);
    assert!(error_line(&o).starts_with("error[config]: "));

    let cipher = corpus.join("test/0_0_cipher.png");
    let attacked = dir.path().join("attacked.png");
    let o = run(&["attack", "--checkpoint", p(&dir.path().join("a.ckpt")), "--in", p(&cipher), "--out", p(&attacked)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(GrayImage::read_png(&attacked).unwrap().side(), 32);

    let record = dir.path().join("recovered.tsv");
    let o = run(&["keysearch", "--pairs", p(&corpus.join("test")), "--out-record", p(&record)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let plain = dir.path().join("plain.png");
    let o = run(&["decrypt", "--in", p(&cipher), "--out", p(&plain), "--recovered", p(&record)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        GrayImage::read_png(&plain).unwrap(),
        GrayImage::read_png(corpus.join("test/0_0_plain.png")).unwrap()
    );

    let o = run(&[
        "decrypt", "--in", p(&cipher), "--out", p(&plain), "--key-record",
        p(&corpus.join("test/keys.tsv")), "--index", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn keysearch_rejects_mixed_keys() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("dyn");
    let o = run(&[
        "gen-dataset", "--out-dir", p(&corpus), "--mode", "dynamic", "--replicas", "4",
        "--train-limit", "2", "--test-limit", "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("test pairs: 12"));
    let o = run(&["keysearch", "--pairs", p(&corpus.join("test"))]);
    assert!(!o.status.success());
    assert!(error_line(&o).starts_with("error[validation]: "));
}
