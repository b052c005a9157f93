use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qsalab::complexity::{crossover_csv, crossover_report, default_slope_checks, slopes_csv, terms_csv, count_gates, Sizes, VARIANTS};
use qsalab::data::{build_ising, generate_classical_dataset_with, generate_quantum_dataset, Records, SequenceDataset};
use qsalab::trainer::{
    evaluate_with, predict_scores, threads_from_env, train_with, with_thread_cap, Checkpoint, ExpectationRoute, GradientMode,
    ModelKind, TrainConfig, TrainOptions,
};
use qsalab::QsaError;

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_COMPAT: u8 = 4;

#[derive(Parser)]
#[command(name = "qsalab", version, about = "Quantum self-attention experiments: data, training, evaluation, audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a classical Markov or quantum Ising dataset (JSON Lines).
    Generate(GenerateArgs),
    /// Train a model and write checkpoint, loss curve and report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one or more datasets.
    Eval(EvalArgs),
    /// Write top-k next-token predictions for every record and step.
    Predict(PredictArgs),
    /// Write gate-count tables, crossover table and scaling fits.
    Audit(AuditArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Classical,
    Quantum,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Qsa,
    Scsa,
    Lcsa,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Qsa => ModelKind::Qsa,
            ModelArg::Scsa => ModelKind::Scsa,
            ModelArg::Lcsa => ModelKind::Lcsa,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Analytic,
    Circuit,
}

impl From<RouteArg> for ExpectationRoute {
    fn from(r: RouteArg) -> Self {
        match r {
            RouteArg::Analytic => ExpectationRoute::Analytic,
            RouteArg::Circuit => ExpectationRoute::Circuit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    ParameterShift,
    FiniteDifference,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Vocabulary size D (classical); must equal 2^qubits if given for quantum data.
    #[arg(long)]
    vocab: Option<usize>,
    /// Ising qubit count q (quantum).
    #[arg(long)]
    qubits: Option<usize>,
    /// Record length T+1.
    #[arg(long)]
    len: usize,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    /// Seed of the generating process (transition matrix or Hamiltonian); defaults to --seed.
    #[arg(long)]
    process_seed: Option<u64>,
    /// Nonzero transitions per word (classical).
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    data: PathBuf,
    /// JSON training configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    embedding_learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    token_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, value_enum)]
    expectation: Option<RouteArg>,
    #[arg(long, value_enum)]
    gradient_mode: Option<GradientArg>,
    /// Test sets evaluated after training.
    #[arg(long)]
    test: Vec<PathBuf>,
    /// Record wall-clock seconds in the loss CSV (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "analytic")]
    expectation: RouteArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2u64, 8, 32, 128, 512, 2048, 8192])]
    t_values: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [2u64, 8, 32, 128, 512, 2048])]
    d_values: Vec<u64>,
    #[arg(long, default_value_t = 16)]
    vocab: u64,
    #[arg(long, default_value_t = 5)]
    layers: u64,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Lib(QsaError),
}

impl From<QsaError> for CliError {
    fn from(e: QsaError) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(QsaError::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) => EXIT_USAGE,
        CliError::Lib(err) => match err {
            QsaError::Io(_) | QsaError::Parse(_) => EXIT_IO,
            QsaError::Numeric(_) | QsaError::DegenerateInput(_) | QsaError::DegeneratePrediction(_) => EXIT_NUMERIC,
            QsaError::Config(_) | QsaError::ModelMismatch { .. } | QsaError::UnsupportedVersion { .. } => EXIT_COMPAT,
        },
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    wall_time_seconds: f64,
}

struct Run {
    command: &'static str,
    start: Instant,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Self { command, start: Instant::now(), inputs: Vec::new(), outputs: Vec::new() }
    }

    fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| QsaError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        write_atomic(path, bytes)?;
        self.outputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn finish(self, manifest_path: &Path, config: Value, seed: Option<u64>) -> CliResult<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_time_seconds: self.start.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(manifest_path, text.as_bytes())
    }
}

fn manifest_for(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn load_dataset(run: &mut Run, path: &Path) -> CliResult<SequenceDataset> {
    let bytes = run.read(path)?;
    Ok(SequenceDataset::read_jsonl(BufReader::new(bytes.as_slice()))?)
}

fn load_checkpoint(run: &mut Run, path: &Path) -> CliResult<Checkpoint> {
    let bytes = run.read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| QsaError::Parse(e.to_string()))?;
    Ok(Checkpoint::from_json(&text)?)
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    if a.len < 2 {
        return Err(CliError::Usage("--len must be at least 2 (T+1 with T >= 1)".into()));
    }
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let process_seed = a.process_seed.unwrap_or(a.seed);
    let seq_len = a.len - 1;
    let (dataset, resolved) = match a.kind {
        KindArg::Classical => {
            if a.qubits.is_some() {
                return Err(CliError::Usage("--qubits applies to quantum data only".into()));
            }
            let vocab = a.vocab.ok_or_else(|| CliError::Usage("classical data needs --vocab".into()))?;
            if vocab < 2 || a.order == 0 || a.order > vocab {
                return Err(CliError::Usage("need --vocab >= 2 and 1 <= --order <= vocab".into()));
            }
            let ds = generate_classical_dataset_with(vocab, seq_len, a.count, a.seed, a.order, process_seed)?;
            (ds, json!({"kind": "classical", "vocab": vocab, "len": a.len, "count": a.count, "order": a.order, "process_seed": process_seed}))
        }
        KindArg::Quantum => {
            let q = a.qubits.unwrap_or(4);
            if !(1..=qsalab::data::MAX_ISING_QUBITS).contains(&q) {
                return Err(CliError::Usage(format!("--qubits must lie in 1..={}", qsalab::data::MAX_ISING_QUBITS)));
            }
            if let Some(v) = a.vocab {
                if v != 1 << q {
                    return Err(CliError::Usage(format!("--vocab {v} conflicts with --qubits {q} (vocabulary is 2^q = {})", 1 << q)));
                }
            }
            let model = build_ising(q, process_seed)?;
            let ds = generate_quantum_dataset(&model, seq_len, a.count, a.seed)?;
            (ds, json!({"kind": "quantum", "qubits": q, "len": a.len, "count": a.count, "process_seed": process_seed}))
        }
    };
    let mut run = Run::new("generate");
    run.write(&a.out, dataset.to_jsonl_string().as_bytes())?;
    run.finish(&manifest_for(&a.out), resolved, Some(a.seed))
}

fn resolve_train_config(a: &TrainArgs, run: &mut Run) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let bytes = run.read(p)?;
            let text = String::from_utf8(bytes).map_err(|e| QsaError::Parse(e.to_string()))?;
            TrainConfig::from_json(&text).map_err(|e| match e {
                QsaError::Config(m) => CliError::Usage(format!("config file: {m}")),
                other => CliError::Lib(other),
            })?
        }
        None => TrainConfig::default(),
    };
    if let Some(m) = a.model {
        cfg.model_kind = m.into();
    } else if a.config.is_none() {
        return Err(CliError::Usage("train needs --model or a --config naming model_kind".into()));
    }
    macro_rules! set {
        ($field:ident, $val:expr) => {
            if let Some(v) = $val {
                cfg.$field = v;
            }
        };
    }
    set!(epochs, a.epochs);
    set!(seed, a.seed);
    set!(learning_rate, a.learning_rate);
    set!(embedding_learning_rate, a.embedding_learning_rate);
    set!(token_dim, a.token_dim);
    set!(ansatz_layers, a.layers);
    set!(expectation, a.expectation.map(Into::into));
    set!(gradient_mode, a.gradient_mode.map(|g| match g {
        GradientArg::ParameterShift => GradientMode::ParameterShift,
        GradientArg::FiniteDifference => GradientMode::FiniteDifference,
    }));
    if a.batch_size.is_some() {
        cfg.batch_size = a.batch_size;
    }
    if a.shots.is_some() {
        cfg.shots = a.shots;
    }
    cfg.dataset = Some(a.data.display().to_string());
    cfg.output = Some(a.out.display().to_string());
    cfg.validate().map_err(|e| match e {
        QsaError::Config(m) => CliError::Usage(m),
        other => CliError::Lib(other),
    })?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let mut run = Run::new("train");
    let cfg = resolve_train_config(a, &mut run)?;
    let dataset = load_dataset(&mut run, &a.data)?;
    let data_sha = run.inputs.last().map(|d| d.sha256.clone());
    let tests = a.test.iter().map(|p| load_dataset(&mut run, p)).collect::<CliResult<Vec<_>>>()?;
    let outcome = match train_with(&cfg, &dataset, None, TrainOptions { timing: a.timing }) {
        Ok(o) => o,
        Err(e @ (QsaError::Numeric(_) | QsaError::DegenerateInput(_) | QsaError::DegeneratePrediction(_))) => {
            let diag = json!({
                "error": e.to_string(),
                "config": cfg.without_paths(),
                "dataset": a.data.display().to_string(),
                "dataset_sha256": data_sha,
            });
            let mut text = serde_json::to_string_pretty(&diag).expect("diagnostic serializes");
            text.push('\n');
            write_atomic(&a.out.join("diagnostic.json"), text.as_bytes())?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let mut report = outcome.report;
    if !tests.is_empty() {
        report.test = Some(evaluate_with(&outcome.params, &tests, cfg.expectation)?);
    }
    let checkpoint = Checkpoint::new(&outcome.params, &cfg);
    run.write(&a.out.join("checkpoint.json"), checkpoint.to_json().as_bytes())?;
    run.write(&a.out.join("loss.csv"), report.to_csv().as_bytes())?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    run.write(&a.out.join("report.json"), text.as_bytes())?;
    let seed = cfg.seed;
    run.finish(&a.out.join("manifest.json"), serde_json::to_value(&cfg).expect("config serializes"), Some(seed))
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let mut run = Run::new("eval");
    let checkpoint = load_checkpoint(&mut run, &a.checkpoint)?;
    let params = checkpoint.params()?;
    let sets = a.data.iter().map(|p| load_dataset(&mut run, p)).collect::<CliResult<Vec<_>>>()?;
    let report = evaluate_with(&params, &sets, a.expectation.into())?;
    let per_set: Vec<Value> = a
        .data
        .iter()
        .zip(&report.sets)
        .map(|(p, s)| {
            json!({"path": p.display().to_string(), "loss_offset": s.loss_offset, "loss": s.loss, "perplexity": s.perplexity, "clamped": s.clamped})
        })
        .collect();
    let out = json!({
        "model_kind": report.model_kind,
        "mean": report.mean,
        "stdev": report.stdev,
        "sets": per_set,
    });
    let mut text = serde_json::to_string_pretty(&out).expect("report serializes");
    text.push('\n');
    run.write(&a.out, text.as_bytes())?;
    let route = match a.expectation {
        RouteArg::Analytic => "analytic",
        RouteArg::Circuit => "circuit",
    };
    run.finish(&manifest_for(&a.out), json!({"expectation": route, "config_hash": checkpoint.config_hash}), Some(checkpoint.seed))
}

fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    if a.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    let mut run = Run::new("predict");
    let checkpoint = load_checkpoint(&mut run, &a.checkpoint)?;
    let params = checkpoint.params()?;
    let dataset = load_dataset(&mut run, &a.data)?;
    if dataset.vocab != params.shape().vocab || dataset.seq_len != params.shape().seq_len {
        return Err(QsaError::Config(format!(
            "dataset (D={}, T={}) does not match checkpoint (D={}, T={})",
            dataset.vocab,
            dataset.seq_len,
            params.shape().vocab,
            params.shape().seq_len
        ))
        .into());
    }
    let mut csv = String::from("record,step,rank,word,score,target\n");
    for r in 0..dataset.len() {
        let inputs = dataset.inputs::<f64>(r)?;
        for j in 1..=dataset.seq_len {
            let scores = predict_scores(&params, &inputs, j)?;
            let target = match &dataset.records {
                Records::Classical(rs) => rs[r][j].to_string(),
                Records::Quantum(_) => String::new(),
            };
            for (rank, (word, score)) in qsalab::qsa::top_k(&scores, a.top_k).into_iter().enumerate() {
                csv.push_str(&format!("{r},{j},{},{word},{score},{target}\n", rank + 1));
            }
        }
    }
    run.write(&a.out, csv.as_bytes())?;
    run.finish(&manifest_for(&a.out), json!({"top_k": a.top_k, "config_hash": checkpoint.config_hash}), Some(checkpoint.seed))
}

fn cmd_audit(a: &AuditArgs) -> CliResult<()> {
    if a.t_values.is_empty() || a.d_values.is_empty() || a.t_values.iter().chain(&a.d_values).any(|&v| v == 0) {
        return Err(CliError::Usage("--t-values and --d-values must be non-empty lists of positive integers".into()));
    }
    let mut run = Run::new("audit");
    let rows = crossover_report(&a.t_values, &a.d_values, a.vocab, a.layers)?;
    let mut counts = Vec::new();
    for &t in &a.t_values {
        for &d in &a.d_values {
            for v in VARIANTS {
                if let Ok(c) = count_gates(v, Sizes::new(t, d, a.vocab, a.layers)) {
                    counts.push(c);
                }
            }
        }
    }
    let checks = default_slope_checks()?;
    run.write(&a.out.join("terms.csv"), terms_csv(&counts).as_bytes())?;
    run.write(&a.out.join("crossover.csv"), crossover_csv(&rows, a.vocab, a.layers).as_bytes())?;
    run.write(&a.out.join("slopes.csv"), slopes_csv(&checks).as_bytes())?;
    let config = json!({"t_values": a.t_values, "d_values": a.d_values, "vocab": a.vocab, "layers": a.layers});
    run.finish(&a.out.join("manifest.json"), config, None)
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Audit(a) => cmd_audit(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = with_thread_cap(threads, || run(&cli)).unwrap_or_else(|e| Err(CliError::Lib(e)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Lib(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
