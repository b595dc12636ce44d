//! Command-line front end.
//!
//! Failures print one line `error[<kind>]: <message>` to stderr and exit
//! non-zero (2 for usage errors, 1 otherwise). The resolved arguments of every
//! run are logged as `run-config {json}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::cipher::{self, CipherError, CipherKey};
use crate::dataset::{
    build_corpus, default_mnist_dir, load_mnist_split, verify_regeneration, Corpus, DatasetError,
    DatasetManifest, KeyMode, MnistSplit, ParamRange, RecordLine,
};
use crate::eval::{self, train_classifier, Classifier, ClassifierConfig, CorpusIdentity};
use crate::image::{GrayImage, ImageError};
use crate::keysearch::{self, KeySearchError, RecoveredKey, SearchBounds};
use crate::net::{self, DecryptionNet, ModelConfig, NetError, TrainConfig, DESK_WEIGHT_DECAY, WEIGHT_DECAY};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] NetError),
    #[error(transparent)]
    KeySearch(#[from] KeySearchError),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Cipher(_) => "cipher",
            CliError::Image(_) => "image",
            CliError::Dataset(_) => "dataset",
            CliError::Model(_) => "model",
            CliError::KeySearch(_) => "keysearch",
            CliError::Validation(_) => "validation",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "chaoscrack", version, about = "Chaos image cipher, corpus builder and attacks")]
pub struct Cli {
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Encrypt one PNG.
    Encrypt(CryptArgs),
    /// Decrypt one PNG with a known key.
    Decrypt(DecryptArgs),
    /// Build a cipher/plain corpus from MNIST.
    GenDataset(GenDatasetArgs),
    /// Train the learned decryptor on a corpus.
    Train(TrainArgs),
    /// Decrypt one PNG with a trained decryptor.
    Attack(AttackArgs),
    /// Recover an equivalent key from cipher/plain pairs.
    Keysearch(KeysearchArgs),
    /// Train the digit classifier used by `eval`.
    TrainClassifier(TrainClassifierArgs),
    /// Score decrypted (or plain) corpus images.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct KeyArgs {
    /// p,q,n,x0,y0,z0,a,b,c
    #[arg(long, allow_hyphen_values = true, conflicts_with = "key_record")]
    pub key: Option<String>,
    /// keys.tsv file; the first record is used unless --index/--replica pick one.
    #[arg(long)]
    pub key_record: Option<PathBuf>,
    #[arg(long, requires = "key_record")]
    pub index: Option<usize>,
    #[arg(long, requires = "key_record")]
    pub replica: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct CryptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DecryptArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub key: KeyArgs,
    /// Record written by `keysearch --out-record` instead of a full key.
    #[arg(long, conflicts_with_all = ["key", "key_record"])]
    pub recovered: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Static,
    Dynamic,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDatasetArgs {
    /// Directory with MNIST IDX files (default: $MNIST_DIR or the bundled subset).
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "static")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 32)]
    pub side: usize,
    /// Ciphers per plain image (default: 1 static, 4 dynamic).
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Static key, or base key for dynamic mode (default: reference key).
    #[arg(long, allow_hyphen_values = true)]
    pub key: Option<String>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// Rebuild from the written manifest and compare digests.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: Scale,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// L2 weight (default: 1e-3 desk, 0.01 paper).
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Use only the first N training pairs.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct KeysearchArgs {
    /// Directory of `<stem>_plain.png` / `<stem>_cipher.png` pairs (e.g. a corpus split).
    #[arg(long)]
    pub pairs: PathBuf,
    /// p1..p2,q1..q2,n1..n2
    #[arg(long, default_value = "1..9,1..9,1..8")]
    pub bounds: String,
    /// Pairs used for the search; any further pairs are held out for validation.
    #[arg(long, default_value_t = 2)]
    pub use_pairs: usize,
    /// At most this many held-out pairs are checked.
    #[arg(long, default_value_t = 16)]
    pub holdout: usize,
    #[arg(long)]
    pub out_record: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Decryptor checkpoint; without it the plain images are scored.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    /// Appends one JSON line per run.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub limit: Option<usize>,
}

fn parse_key(s: &str) -> Result<CipherKey, CliError> {
    Ok(s.parse::<CipherKey>()?)
}

fn resolve_key(k: &KeyArgs) -> Result<CipherKey, CliError> {
    match (&k.key, &k.key_record) {
        (Some(s), None) => parse_key(s),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(io(path))?;
            let recs = RecordLine::parse_file(&text)?;
            recs.iter()
                .find(|r| {
                    k.index.is_none_or(|i| r.record.index == i)
                        && k.replica.is_none_or(|i| r.record.replica == i)
                })
                .map(|r| r.record.key)
                .ok_or_else(|| CliError::Config(format!("{}: no matching key record", path.display())))
        }
        _ => Err(CliError::Usage("one of --key or --key-record is required".into())),
    }
}

fn read_png(path: &Path) -> Result<GrayImage, CliError> {
    if !path.is_file() {
        return Err(CliError::Io {
            path: path.display().to_string(),
            message: "no such file".into(),
        });
    }
    Ok(GrayImage::read_png(path)?)
}

fn parse_range(s: &str) -> Result<ParamRange, CliError> {
    s.parse::<ParamRange>()
        .map_err(|e| CliError::Usage(format!("bounds {s:?}: {e}")))
}

pub fn parse_bounds(s: &str) -> Result<SearchBounds, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    let [p, q, n] = parts[..] else {
        return Err(CliError::Usage(format!("bounds {s:?}: expected p1..p2,q1..q2,n1..n2")));
    };
    Ok(SearchBounds {
        p: parse_range(p)?,
        q: parse_range(q)?,
        n: parse_range(n)?,
    })
}

/// `<stem>_plain.png` / `<stem>_cipher.png` pairs sorted by numeric stem parts.
pub fn collect_pairs(dir: &Path) -> Result<Vec<(String, GrayImage, GrayImage)>, CliError> {
    let entries = fs::read_dir(dir).map_err(io(dir))?;
    let mut stems = Vec::new();
    for e in entries {
        let name = e.map_err(io(dir))?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_cipher.png") {
            if dir.join(format!("{stem}_plain.png")).is_file() {
                stems.push(stem.to_string());
            }
        }
    }
    let sort_key = |s: &String| -> (Vec<u64>, String) {
        (s.split('_').map(|p| p.parse().unwrap_or(u64::MAX)).collect(), s.clone())
    };
    stems.sort_by_key(sort_key);
    stems
        .into_iter()
        .map(|s| {
            let c = read_png(&dir.join(format!("{s}_cipher.png")))?;
            let p = read_png(&dir.join(format!("{s}_plain.png")))?;
            Ok((s, c, p))
        })
        .collect()
}

fn split_of(s: SplitArg) -> MnistSplit {
    match s {
        SplitArg::Train => MnistSplit::Train,
        SplitArg::Test => MnistSplit::Test,
    }
}

fn run_encrypt(a: &CryptArgs) -> Result<(), CliError> {
    let key = resolve_key(&a.key)?;
    let img = read_png(&a.input)?;
    cipher::encrypt(&img, &key)?.write_png(&a.out)?;
    println!("encrypted {} -> {} ({}x{})", a.input.display(), a.out.display(), img.side(), img.side());
    Ok(())
}

fn run_decrypt(a: &DecryptArgs) -> Result<(), CliError> {
    let img = read_png(&a.input)?;
    let out = match &a.recovered {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io(path))?;
            RecoveredKey::from_record(&text)?.decrypt(&img)?
        }
        None => cipher::decrypt(&img, &resolve_key(&a.key)?)?,
    };
    out.write_png(&a.out)?;
    println!("decrypted {} -> {}", a.input.display(), a.out.display());
    Ok(())
}

fn run_gen_dataset(a: &GenDatasetArgs) -> Result<(), CliError> {
    let key = match &a.key {
        Some(s) => parse_key(s)?,
        None => CipherKey::reference(),
    };
    let mut manifest = match a.mode {
        ModeArg::Static => {
            if a.replicas.is_some_and(|r| r != 1) {
                return Err(CliError::Config(
                    "static mode encrypts each image once; --replicas must be 1".into(),
                ));
            }
            DatasetManifest::new_static(a.side, key, a.seed)
        }
        ModeArg::Dynamic => DatasetManifest::new_dynamic(a.side, key, a.replicas.unwrap_or(4), a.seed),
    };
    manifest.validate()?;
    let dir = a.mnist_dir.clone().unwrap_or_else(default_mnist_dir);
    let mut train = load_mnist_split(&dir, MnistSplit::Train)?;
    let mut test = load_mnist_split(&dir, MnistSplit::Test)?;
    if let Some(n) = a.train_limit {
        train.truncate(n);
    }
    if let Some(n) = a.test_limit {
        test.truncate(n);
    }
    log::info!("building corpus from {} train / {} test images", train.len(), test.len());
    manifest = build_corpus(&manifest, &train, &test, &a.out_dir)?;
    if a.verify {
        verify_regeneration(&manifest, &train, &test)?;
        println!("regeneration check passed");
    }
    println!(
        "train pairs: {}\ntest pairs: {}\ntrain digest: {}\ntest digest: {}",
        manifest.train_pairs,
        manifest.test_pairs,
        manifest.train_digest.as_deref().unwrap_or("-"),
        manifest.test_digest.as_deref().unwrap_or("-")
    );
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<(), CliError> {
    let corpus = Corpus::open(&a.corpus)?;
    let config = match a.scale {
        Scale::Desk => ModelConfig::desk(a.seed),
        Scale::Paper => ModelConfig::paper(a.seed),
    };
    if corpus.manifest.side != config.side {
        return Err(CliError::Config(format!(
            "--scale {} expects {}x{} images but the corpus holds {}x{}",
            a.scale.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
            config.side, config.side, corpus.manifest.side, corpus.manifest.side
        )));
    }
    let pairs = corpus.load(MnistSplit::Train, a.limit)?;
    let ciphers: Vec<GrayImage> = pairs.iter().map(|p| p.cipher.clone()).collect();
    let plains: Vec<GrayImage> = pairs.into_iter().map(|p| p.plain).collect();
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: crate::nn::AdamConfig {
            learning_rate: a.lr,
            ..Default::default()
        },
        weight_decay: a.weight_decay.unwrap_or(match a.scale {
            Scale::Desk => DESK_WEIGHT_DECAY,
            Scale::Paper => WEIGHT_DECAY,
        }),
        seed: a.seed,
        max_steps: None,
    };
    log::info!("train config {cfg:?}, {} pairs", ciphers.len());
    let mut model = DecryptionNet::<f32>::new(config)?;
    model.training.corpus_digest = corpus.manifest.train_digest.clone();
    let report = net::train(&mut model, &ciphers, &plains, &cfg, |s| {
        log::debug!("epoch {} batch {} loss {:.6}", s.epoch, s.batch, s.loss)
    })?;
    model.save(&a.out_checkpoint)?;
    let digest = eval::file_digest(&a.out_checkpoint).map_err(io(&a.out_checkpoint))?;
    log::info!("checkpoint digest {digest}");
    for (e, (l, m)) in report.epoch_losses.iter().zip(&report.epoch_mse).enumerate() {
        println!("epoch {e}: loss {l:.6} mse {m:.6}");
    }
    println!("checkpoint: {}\ncheckpoint digest: {digest}", a.out_checkpoint.display());
    Ok(())
}

fn run_attack(a: &AttackArgs) -> Result<(), CliError> {
    let model = DecryptionNet::<f32>::load(&a.checkpoint)?;
    let img = read_png(&a.input)?;
    model.decrypt_learned(&img)?.write_png(&a.out)?;
    println!("attacked {} -> {}", a.input.display(), a.out.display());
    Ok(())
}

fn run_keysearch(a: &KeysearchArgs) -> Result<(), CliError> {
    let bounds = parse_bounds(&a.bounds)?;
    if a.use_pairs < 2 {
        return Err(CliError::Usage("--use-pairs must be at least 2".into()));
    }
    let all = collect_pairs(&a.pairs)?;
    if all.len() < a.use_pairs {
        return Err(KeySearchError::TooFewPairs(all.len()).into());
    }
    let (search, held) = all.split_at(a.use_pairs);
    let pairs: Vec<(GrayImage, GrayImage)> = search.iter().map(|(_, c, p)| (c.clone(), p.clone())).collect();
    log::info!("searching {} candidates with {} pairs", bounds.size(), pairs.len());
    let Some(found) = keysearch::recover(&pairs, &bounds)? else {
        println!("no key found within bounds ({} candidates)", bounds.size());
        return Err(CliError::Validation("no candidate validated".into()));
    };
    println!("recovered: {found}");
    let held = &held[..held.len().min(a.holdout)];
    let mut exact = 0;
    for (stem, c, p) in held {
        if &found.decrypt(c)? == p {
            exact += 1;
        } else {
            log::warn!("held-out pair {stem} does not decrypt exactly");
        }
    }
    println!("held-out: {exact}/{} pairs decrypted exactly", held.len());
    if let Some(path) = &a.out_record {
        found.write(path).map_err(io(path))?;
        println!("record: {}", path.display());
    }
    if exact != held.len() {
        return Err(CliError::Validation(format!(
            "{} held-out pairs do not decrypt with the recovered key (different key per pair?)",
            held.len() - exact
        )));
    }
    Ok(())
}

fn run_train_classifier(a: &TrainClassifierArgs) -> Result<(), CliError> {
    let dir = a.mnist_dir.clone().unwrap_or_else(default_mnist_dir);
    let mut train = load_mnist_split(&dir, MnistSplit::Train)?;
    if let Some(n) = a.limit {
        train.truncate(n);
    }
    let test = load_mnist_split(&dir, MnistSplit::Test)?;
    let cfg = ClassifierConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        ..Default::default()
    };
    let (clf, report) = train_classifier(cfg, &train)?;
    let imgs: Vec<GrayImage> = test.iter().map(|t| t.image.clone()).collect();
    let labels: Vec<u8> = test.iter().map(|t| t.label).collect();
    let acc = clf.accuracy(&imgs, &labels)?;
    clf.save(&a.out)?;
    for (e, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {e}: loss {l:.5}");
    }
    println!("plain test accuracy: {acc:.4} ({} images)", labels.len());
    println!(
        "classifier: {}\nclassifier digest: {}",
        a.out.display(),
        eval::file_digest(&a.out).map_err(io(&a.out))?
    );
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<(), CliError> {
    let corpus = Corpus::open(&a.corpus)?;
    let split = split_of(a.split);
    let clf = Classifier::load(&a.classifier)?;
    let pairs = corpus.load(split, a.limit)?;
    let plains: Vec<GrayImage> = pairs.iter().map(|p| p.plain.clone()).collect();
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    let (identity, images, ckpt_digest) = match &a.checkpoint {
        Some(path) => {
            let model = DecryptionNet::<f32>::load(path)?;
            let ciphers: Vec<GrayImage> = pairs.iter().map(|p| p.cipher.clone()).collect();
            let identity = match corpus.manifest.mode {
                KeyMode::Static => CorpusIdentity::DecryptedStatic,
                KeyMode::Dynamic => CorpusIdentity::DecryptedDynamic,
            };
            let digest = eval::file_digest(path).map_err(io(path))?;
            (identity, model.decrypt_batch(&ciphers)?, Some(digest))
        }
        None => (CorpusIdentity::Plain, plains.clone(), None),
    };
    let mut report = eval::score(&clf, identity, &images, &plains, &labels)?;
    report.corpus_digest = match split {
        MnistSplit::Train => corpus.manifest.train_digest.clone(),
        MnistSplit::Test => corpus.manifest.test_digest.clone(),
    };
    report.checkpoint_digest = ckpt_digest;
    print!("{}", report.to_text());
    if let Some(path) = &a.report {
        use std::io::Write;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io(path))?;
        writeln!(f, "{}", report.to_json_line()).map_err(io(path))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Encrypt(a) => run_encrypt(a),
        Command::Decrypt(a) => run_decrypt(a),
        Command::GenDataset(a) => run_gen_dataset(a),
        Command::Train(a) => run_train(a),
        Command::Attack(a) => run_attack(a),
        Command::Keysearch(a) => run_keysearch(a),
        Command::TrainClassifier(a) => run_train_classifier(a),
        Command::Eval(a) => run_eval(a),
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Parses `args`, runs the command and reports failures on stderr.
pub fn main_with_args<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let text = text.join(" ");
            eprintln!("error[usage]: {}", text.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    init_logging(&cli);
    log::info!(
        "run-config {}",
        serde_json::to_string(&cli).unwrap_or_else(|_| "{}".into())
    );
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {line}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_parse() {
        let b = parse_bounds("1..9,2..3,1..8").unwrap();
        assert_eq!(b.size(), 9 * 2 * 8);
        assert!(parse_bounds("1..9,1..9").is_err());
        assert!(parse_bounds("1..9,1..9,0..2").is_err());
    }

    #[test]
    fn key_flag_or_record() {
        let k = KeyArgs {
            key: Some("4,7,5,-10.058,0.368,37.368,35,3,28".into()),
            key_record: None,
            index: None,
            replica: None,
        };
        assert_eq!(resolve_key(&k).unwrap(), CipherKey::reference());
        let none = KeyArgs {
            key: None,
            key_record: None,
            index: None,
            replica: None,
        };
        assert!(matches!(resolve_key(&none), Err(CliError::Usage(_))));
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
