//! The `graphnorm` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure (divergence or a failed gradient check).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcheck::gradcheck_suite;
use crate::graph::{dataset_read, dataset_write, sbm_generate, SbmConfig, SbmTask, Split};
use crate::layers::{Activation, NormKind};
use crate::model::Arch;
use crate::train::{
    eval_csv, evaluate, extract_lambda_distribution, lambda_csv, lambda_trajectory_csv,
    load_checkpoint, metrics_csv, save_checkpoint, train, Dataset, OptimizerKind, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(
    name = "graphnorm",
    version,
    about = "Graph normalization experiments on synthetic graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a stochastic block model dataset split 80/10/10.
    Gen(GenArgs),
    /// Train a model and write metrics, gate weights and a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Compare gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the averaged normalization gate weights of a checkpoint.
    InspectWeights(InspectArgs),
    /// Run the command recorded in a manifest again.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, default_value = "node-cluster", value_parser = parse_task)]
    pub task: SbmTask,
    #[arg(long, default_value_t = 200)]
    pub graphs: usize,
    #[arg(long, default_value_t = 30)]
    pub nodes_min: usize,
    #[arg(long, default_value_t = 50)]
    pub nodes_max: usize,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p_intra: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p_inter: f64,
    #[arg(long, env = "GRAPHNORM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Dataset file prefix.
    #[arg(long, default_value = "sbm")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Directory holding `<name>.{train,val,test}.graphs`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "sbm")]
    pub name: String,
    #[arg(long, default_value = "gcn", value_parser = parse_arch)]
    pub arch: Arch,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// none, n, a, g, b, gn or gn:<subset> such as gn:g,b.
    #[arg(long, default_value = "gn", value_parser = parse_norm)]
    pub norm: NormKind,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long)]
    pub no_residual: bool,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, env = "GRAPHNORM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "sbm")]
    pub name: String,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: String,
    /// Also write `eval.csv` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckArgs {
    /// `all` or one check name.
    #[arg(long, default_value = "all")]
    pub scope: String,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, env = "GRAPHNORM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write `gradcheck.csv` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Also write `lambda.csv` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_task(s: &str) -> std::result::Result<SbmTask, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("expected node-cluster, graph-parity, graph-regression or link, got '{s}'")
    })
}

fn parse_arch(s: &str) -> std::result::Result<Arch, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_norm(s: &str) -> std::result::Result<NormKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        _ => Err(format!("expected sgd or adam, got '{s}'")),
    }
}

fn parse_split(s: &str) -> std::result::Result<String, String> {
    s.parse::<Split>()
        .map(|sp| sp.as_str().to_string())
        .map_err(|e| e.to_string())
}

/// Record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// The command with every default filled in.
    pub invocation: Command,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_secs: f64,
    pub finished_unix_secs: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn now_secs() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFinite { .. } | Error::NonFiniteGradient(_) | Error::Diverged { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_DATA,
    }
}

/// What a command produced.
struct Outcome {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Printed to stdout.
    stdout: String,
    /// Nonzero when the command ran but the result is a numerical failure.
    code: i32,
}

impl Outcome {
    fn new(seed: Option<u64>, inputs: Vec<PathBuf>) -> Self {
        Outcome {
            seed,
            inputs,
            outputs: Vec::new(),
            stdout: String::new(),
            code: EXIT_OK,
        }
    }
}

fn write_file(path: &Path, text: &str, outcome: &mut Outcome) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    outcome.outputs.push(path.to_path_buf());
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_dataset(dir: &Path, name: &str) -> Result<(Dataset, Vec<PathBuf>)> {
    let paths: Vec<PathBuf> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .map(|s| s.path(dir, name))
        .collect();
    let data = Dataset {
        train: dataset_read(&paths[0])?,
        val: dataset_read(&paths[1])?,
        test: dataset_read(&paths[2])?,
    };
    Ok((data, paths))
}

fn cmd_gen(a: &GenArgs) -> Result<Outcome> {
    let config = SbmConfig {
        num_graphs: a.graphs,
        nodes_min: a.nodes_min,
        nodes_max: a.nodes_max,
        num_clusters: a.clusters,
        p_intra: a.p_intra,
        p_inter: a.p_inter,
        seed: a.seed,
        task: a.task,
    };
    config.validate().map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("--{m}")),
        e => e,
    })?;
    let n_train = a.graphs * 8 / 10;
    let n_val = a.graphs / 10;
    if n_val == 0 {
        return Err(Error::Config(format!(
            "--graphs ({}) must be at least 10 for an 80/10/10 split",
            a.graphs
        )));
    }
    let graphs = sbm_generate(&config)?;
    create_dir(&a.out)?;
    let mut outcome = Outcome::new(Some(a.seed), Vec::new());
    let parts = [
        (Split::Train, &graphs[..n_train]),
        (Split::Val, &graphs[n_train..n_train + n_val]),
        (Split::Test, &graphs[n_train + n_val..]),
    ];
    for (split, part) in parts {
        let path = split.path(&a.out, &a.name);
        dataset_write(&path, part)?;
        outcome.outputs.push(path);
        outcome.stdout += &format!("{} {}\n", split.as_str(), part.len());
    }
    Ok(outcome)
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        arch: a.arch,
        depth: a.depth,
        hidden: a.hidden,
        norm: a.norm,
        heads: a.heads,
        residual: !a.no_residual,
        activation: Activation::Relu,
        optimizer: a.optimizer,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        patience: a.patience,
        ..TrainConfig::default()
    }
}

fn cmd_train(a: &TrainArgs) -> Result<Outcome> {
    let config = train_config(a);
    config.validate()?;
    let (data, inputs) = load_dataset(&a.data, &a.name)?;
    let result = train(&data, &config)?;
    let report = &result.report;
    create_dir(&a.out)?;
    let mut outcome = Outcome::new(Some(a.seed), inputs);
    save_checkpoint(&a.out.join("checkpoint.json"), &result.model, Some(&config))?;
    outcome.outputs.push(a.out.join("checkpoint.json"));
    write_file(
        &a.out.join("metrics.csv"),
        &metrics_csv(report),
        &mut outcome,
    )?;
    if config.norm.is_unified() {
        write_file(
            &a.out.join("lambda.csv"),
            &lambda_csv(&report.lambda),
            &mut outcome,
        )?;
        write_file(
            &a.out.join("lambda_trajectory.csv"),
            &lambda_trajectory_csv(report),
            &mut outcome,
        )?;
    }
    write_file(
        &a.out.join("report.json"),
        &serde_json::to_string_pretty(report)?,
        &mut outcome,
    )?;
    outcome.stdout = format!(
        "best_epoch {}\ntest_loss {:.16e}\ntest_metric {:.16e}\n",
        report.best_epoch,
        report.test.loss,
        report.test.primary()
    );
    if let Some(d) = &report.diverged {
        outcome.stdout += &format!("diverged {d}\n");
        outcome.code = EXIT_NUMERICAL;
    }
    Ok(outcome)
}

fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    let (model, config) = load_checkpoint(&a.checkpoint)?;
    let split: Split = a.split.parse()?;
    let path = split.path(&a.data, &a.name);
    let graphs = dataset_read(&path)?;
    if let Some(g) = graphs.first() {
        if g.feature_dim() != model.config.in_dim {
            return Err(Error::Validation(format!(
                "dataset feature dim d={} does not match checkpoint d={}",
                g.feature_dim(),
                model.config.in_dim
            )));
        }
    }
    let batch_size = config.map_or(TrainConfig::default().batch_size, |c| c.batch_size);
    let metrics = evaluate(&model, &graphs, batch_size)?;
    let mut outcome = Outcome::new(None, vec![a.checkpoint.clone(), path]);
    outcome.stdout = eval_csv(split.as_str(), &metrics);
    if let Some(out) = &a.out {
        create_dir(out)?;
        let text = outcome.stdout.clone();
        write_file(&out.join("eval.csv"), &text, &mut outcome)?;
    }
    Ok(outcome)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<Outcome> {
    let report = gradcheck_suite(Some(&a.scope), a.trials, a.seed)?;
    let mut outcome = Outcome::new(Some(a.seed), Vec::new());
    outcome.stdout = report.to_csv();
    if let Some(out) = &a.out {
        create_dir(out)?;
        let text = outcome.stdout.clone();
        write_file(&out.join("gradcheck.csv"), &text, &mut outcome)?;
    }
    if !report.passes() {
        outcome.code = EXIT_NUMERICAL;
    }
    Ok(outcome)
}

fn cmd_inspect(a: &InspectArgs) -> Result<Outcome> {
    let (model, _) = load_checkpoint(&a.checkpoint)?;
    let rows = extract_lambda_distribution(&model)?;
    let mut outcome = Outcome::new(None, vec![a.checkpoint.clone()]);
    outcome.stdout = lambda_csv(&rows);
    if let Some(out) = &a.out {
        create_dir(out)?;
        let text = outcome.stdout.clone();
        write_file(&out.join("lambda.csv"), &text, &mut outcome)?;
    }
    Ok(outcome)
}

/// Where the manifest of `command` goes, if it writes files.
fn manifest_dir(command: &Command) -> Option<&Path> {
    match command {
        Command::Gen(a) => Some(&a.out),
        Command::Train(a) => Some(&a.out),
        Command::Eval(a) => a.out.as_deref(),
        Command::Gradcheck(a) => a.out.as_deref(),
        Command::InspectWeights(a) => a.out.as_deref(),
        Command::Replay(_) => None,
    }
}

fn with_out(command: Command, out: PathBuf) -> Command {
    match command {
        Command::Gen(a) => Command::Gen(GenArgs { out, ..a }),
        Command::Train(a) => Command::Train(TrainArgs { out, ..a }),
        Command::Eval(a) => Command::Eval(EvalArgs {
            out: Some(out),
            ..a
        }),
        Command::Gradcheck(a) => Command::Gradcheck(GradcheckArgs {
            out: Some(out),
            ..a
        }),
        Command::InspectWeights(a) => Command::InspectWeights(InspectArgs {
            out: Some(out),
            ..a
        }),
        Command::Replay(a) => Command::Replay(a),
    }
}

/// Runs `command`, writes its manifest and returns the stdout text and
/// exit code.
pub fn execute(command: Command) -> Result<(String, i32)> {
    let command = match command {
        Command::Replay(r) => {
            let recorded = RunManifest::read(&r.manifest)?.invocation;
            if matches!(recorded, Command::Replay(_)) {
                return Err(Error::Validation(
                    "a manifest cannot record a replay".into(),
                ));
            }
            match r.out {
                Some(out) => with_out(recorded, out),
                None => recorded,
            }
        }
        c => c,
    };
    let started = now_secs();
    let outcome = match &command {
        Command::Gen(a) => cmd_gen(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Gradcheck(a) => cmd_gradcheck(a)?,
        Command::InspectWeights(a) => cmd_inspect(a)?,
        Command::Replay(_) => unreachable!("replay resolved above"),
    };
    if let Some(dir) = manifest_dir(&command) {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            invocation: command.clone(),
            seed: outcome.seed,
            inputs: outcome.inputs.clone(),
            outputs: outcome.outputs.clone(),
            started_unix_secs: started,
            finished_unix_secs: now_secs(),
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok((outcome.stdout, outcome.code))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Output goes to stdout, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok((stdout, code)) => {
            print!("{stdout}");
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
