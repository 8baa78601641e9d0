//! Argument definitions and command implementations behind the `crvae`
//! binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use crvae_core::datagen::{
    gen_henon, gen_lorenz96, gen_var, Dataset, HenonConfig, LorenzConfig, Scaler, VarConfig,
};
use crvae_core::eval::{auroc, flatten_sequences, mmd, tstr, TstrConfig, EVAL_WINDOW, MMD_BANDWIDTHS};
use crvae_core::numcore::Stream;
use crvae_core::pipeline::{generate_many, train, Checkpoint, GenerateOptions, InitMode, TrainConfig};
use crvae_core::recnet::{CellKind, EncoderMode};
use crvae_core::tebase::{te_matrix, GramSpec, SIGMA_GRID};
use crvae_core::{Rng, Tensor};
use serde::Serialize;

use crate::files::{self, sibling};
use crate::manifest::RunManifest;
use crate::report::Report;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "crvae", version, about = "Causal recurrent VAE: Granger causal discovery and time-series generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a benchmark system and write its data and true graph.
    Simulate(SimulateArgs),
    /// Train a model on a data CSV.
    Train(TrainArgs),
    /// Sample free-running sequences from a checkpoint.
    Generate(GenerateArgs),
    /// Score causal graphs or generated data.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Var,
    Henon,
    Lorenz96,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub system: System,
    /// Data CSV to write; the truth goes to `<stem>_truth.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of recorded time steps.
    #[arg(long, default_value_t = 2048)]
    pub length: usize,
    /// Number of series (m for var, k for henon, p for lorenz96).
    #[arg(long)]
    pub series: Option<usize>,
    /// Maximum lag of the var system.
    #[arg(long, default_value_t = 3)]
    pub lag: usize,
    /// Coupling strength of the henon chain.
    #[arg(long, default_value_t = 0.3)]
    pub coupling: f64,
    /// Forcing constant of lorenz96.
    #[arg(long, default_value_t = 10.0)]
    pub forcing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Unidirectional,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CellArg {
    Gru,
    Vanilla,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data CSV.
    #[arg(long, required_unless_present = "print_config")]
    pub data: Option<PathBuf>,
    /// Checkpoint to write; the adjacency goes to `<stem>_adjacency.csv` and
    /// the loss history to `<stem>_loss.csv`.
    #[arg(long, required_unless_present = "print_config")]
    pub out: Option<PathBuf>,
    /// JSON training config; unspecified fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_compensation: bool,
    #[arg(long, value_enum)]
    pub encoder_mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub cell: Option<CellArg>,
    /// Rescale each column to [0, 1] before training, as for recorded data.
    #[arg(long)]
    pub normalize: bool,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Projected,
    DirectDraw,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory receiving `synth_000.csv`, `synth_001.csv`, ...
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub length: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Roll out the causal decoder alone.
    #[arg(long)]
    pub no_compensation: bool,
    /// How the initial hidden state is drawn.
    #[arg(long, value_enum, default_value_t = InitArg::Projected)]
    pub init: InitArg,
    /// Keep the model's normalized units instead of mapping back.
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// AUROC of a score matrix against a true graph.
    Causal(CausalArgs),
    /// MMD between windows of real and synthetic data.
    Mmd(MmdArgs),
    /// Train-on-synthetic, test-on-real one-step prediction error.
    Tstr(TstrArgs),
    /// Transfer-entropy baseline graph and its AUROC.
    Te(TeArgs),
}

#[derive(Debug, Args)]
pub struct ReportOut {
    /// Also write the report here, with a manifest next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CausalArgs {
    /// Estimated score matrix, or a checkpoint whose graph is used.
    #[arg(long)]
    pub scores: PathBuf,
    /// True adjacency CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Leave self-causes out of the ranking.
    #[arg(long)]
    pub exclude_diagonal: bool,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct MmdArgs {
    #[arg(long)]
    pub real: PathBuf,
    /// One or more synthetic CSVs.
    #[arg(long, num_args = 1.., required = true)]
    pub synth: Vec<PathBuf>,
    #[arg(long, default_value_t = EVAL_WINDOW)]
    pub window: usize,
    /// Windows drawn from each side.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the flattened windows with a real/synth label column.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct TstrArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub synth: Vec<PathBuf>,
    /// Trailing fraction of the real series used as the test set.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Also train on the leading part of the real series.
    #[arg(long)]
    pub trtr: bool,
    /// JSON predictor config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct TeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Kernel width; when absent the best width on the grid is reported
    /// (requires --truth).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1.01)]
    pub alpha: f64,
    /// Delay-embedding length.
    #[arg(long, default_value_t = 2)]
    pub lag: usize,
    #[arg(long, default_value_t = 256)]
    pub max_samples: usize,
    /// Write the TE score matrix here.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportOut,
}

/// Process exit status for an error: 2 for usage errors, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

/// Runs a parsed command; reports go to `stdout`.
pub fn run(cli: Cli, args: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, args),
        Command::Train(a) => train_cmd(&a, args, stdout),
        Command::Generate(a) => generate_cmd(&a, args),
        Command::Eval(EvalCommand::Causal(a)) => causal_cmd(&a, args, stdout),
        Command::Eval(EvalCommand::Mmd(a)) => mmd_cmd(&a, args, stdout),
        Command::Eval(EvalCommand::Tstr(a)) => tstr_cmd(&a, args, stdout),
        Command::Eval(EvalCommand::Te(a)) => te_cmd(&a, args, stdout),
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn simulate_dataset(a: &SimulateArgs) -> Result<Dataset> {
    if a.length < 2 {
        return Err(usage("--length must be at least 2"));
    }
    let mut rng = Rng::new(a.seed);
    let d = match a.system {
        System::Var => {
            let m = a.series.unwrap_or(10);
            if m < 1 || a.lag < 1 {
                return Err(usage("var needs --series >= 1 and --lag >= 1"));
            }
            let cfg = VarConfig {
                m,
                lag: a.lag,
                length: a.length,
                ..Default::default()
            };
            gen_var(&cfg, &mut rng)?
        }
        System::Henon => {
            let k = a.series.unwrap_or(6);
            if k < 1 || !(0.0..=1.0).contains(&a.coupling) {
                return Err(usage("henon needs --series >= 1 and --coupling in [0, 1]"));
            }
            let cfg = HenonConfig {
                k,
                length: a.length,
                coupling: a.coupling,
                ..Default::default()
            };
            gen_henon(&cfg, &mut rng)?
        }
        System::Lorenz96 => {
            let p = a.series.unwrap_or(10);
            if p < 4 || !a.forcing.is_finite() {
                return Err(usage("lorenz96 needs --series >= 4 and a finite --forcing"));
            }
            let cfg = LorenzConfig {
                p,
                length: a.length,
                forcing: a.forcing,
                ..Default::default()
            };
            gen_lorenz96(&cfg, &mut rng)?
        }
    };
    Ok(d)
}

fn simulate(a: &SimulateArgs, args: Vec<String>) -> Result<()> {
    let d = simulate_dataset(a)?;
    let truth_path = sibling(&a.out, "truth", "csv");
    files::save_csv(&a.out, &d.observations)?;
    let truth = d.truth.as_ref().expect("simulators know their graph");
    files::save_adjacency(&truth_path, truth)?;
    let config = serde_json::json!({
        "system": a.system,
        "length": a.length,
        "series": d.series(),
        "lag": a.lag,
        "coupling": a.coupling,
        "forcing": a.forcing,
        "known_lag": d.known_lag,
    });
    let mut man = RunManifest::new("simulate", args, Some(a.seed), config);
    man.output(&a.out)?;
    man.output(&truth_path)?;
    man.write(&sibling(&a.out, "manifest", "json"))
}

/// Config file, then flag overrides, then validation.
pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => files::load_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.no_compensation {
        cfg.compensation = false;
    }
    if a.normalize {
        cfg.normalize = true;
    }
    if let Some(m) = a.encoder_mode {
        cfg.encoder_mode = match m {
            ModeArg::Unidirectional => EncoderMode::Unidirectional,
            ModeArg::Overlap => EncoderMode::Overlap,
        };
    }
    if let Some(c) = a.cell {
        cfg.cell = match c {
            CellArg::Gru => CellKind::Gru,
            CellArg::Vanilla => CellKind::Vanilla,
        };
    }
    cfg.validate().map_err(Error::Config)?;
    Ok(cfg)
}

fn train_cmd(a: &TrainArgs, args: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    let cfg = resolve_train_config(a)?;
    if a.print_config {
        let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
        return writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e));
    }
    let (Some(data_path), Some(out)) = (&a.data, &a.out) else {
        return Err(usage("train needs --data and --out"));
    };
    let obs = files::load_csv(data_path)?;
    let stem = data_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let outcome = train(&Dataset::new(stem, obs), &cfg)?;
    if let Some(w) = &outcome.prune.warning {
        eprintln!("warning: {w}");
    }
    let ckpt = Checkpoint {
        config: cfg.clone(),
        model: outcome.model,
        phase: outcome.phase,
        history: outcome.history,
    };
    let adj = sibling(out, "adjacency", "csv");
    let loss = sibling(out, "loss", "csv");
    files::save_checkpoint(out, &ckpt)?;
    files::save_scores(&adj, &ckpt.model.causal_matrix())?;
    files::save_history(&loss, &ckpt.history)?;
    let mut man = RunManifest::new("train", args, Some(cfg.seed), serde_json::to_value(&cfg).expect("config serializes"));
    man.input(data_path)?;
    if let Some(c) = &a.config {
        man.input(c)?;
    }
    for p in [out, &adj, &loss] {
        man.output(p)?;
    }
    man.write(&sibling(out, "manifest", "json"))
}

fn generate_cmd(a: &GenerateArgs, args: Vec<String>) -> Result<()> {
    let ckpt = files::load_checkpoint(&a.checkpoint)?;
    let opts = GenerateOptions {
        init: match a.init {
            InitArg::Projected => InitMode::Projected,
            InitArg::DirectDraw => InitMode::DirectDraw,
        },
        compensation: !a.no_compensation,
        denormalize: !a.normalized,
    };
    let seqs = generate_many(&ckpt.model, a.length as usize, a.count as usize, a.seed, &opts)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let config = serde_json::json!({
        "length": a.length,
        "count": a.count,
        "options": opts,
    });
    let mut man = RunManifest::new("generate", args, Some(a.seed), config);
    man.input(&a.checkpoint)?;
    for (i, s) in seqs.iter().enumerate() {
        let p = a.out.join(format!("synth_{i:03}.csv"));
        files::save_csv(&p, s)?;
        man.output(&p)?;
    }
    man.write(&a.out.join("manifest.json"))
}

fn emit(report: &Report, out: &ReportOut, args: Vec<String>, inputs: &[&Path], stdout: &mut dyn Write) -> Result<()> {
    let text = report.render();
    stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    if let Some(p) = &out.out {
        files::write_atomic(p, text.as_bytes())?;
        let mut man = RunManifest::new(&report.command, args, None, report.config.clone());
        for i in inputs {
            man.input(i)?;
        }
        man.output(p)?;
        man.write(&sibling(p, "manifest", "json"))?;
    }
    Ok(())
}

fn is_checkpoint(path: &Path) -> Result<bool> {
    let mut head = [0u8; 5];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let n = std::io::Read::read(&mut f, &mut head).map_err(|e| Error::io(path, e))?;
    Ok(n == 5 && &head == crvae_core::pipeline::MAGIC)
}

fn causal_cmd(a: &CausalArgs, args: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    let Some(truth_path) = &a.truth else {
        return Err(usage("eval causal needs the true graph: pass --truth PATH"));
    };
    let scores = if is_checkpoint(&a.scores)? {
        files::load_checkpoint(&a.scores)?.model.causal_matrix()
    } else {
        files::load_scores(&a.scores)?
    };
    let truth = files::load_adjacency(truth_path)?;
    if truth.size() != scores.size() {
        return Err(usage(format!(
            "score matrix is {0} x {0} but the truth is {1} x {1}",
            scores.size(),
            truth.size()
        )));
    }
    let include_diagonal = !a.exclude_diagonal;
    let value = auroc(&scores, &truth, include_diagonal)?;
    let mut r = Report::new("eval causal", &serde_json::json!({ "include_diagonal": include_diagonal }));
    r.push("auroc", value);
    r.push("edges", truth.count() as f64);
    emit(&r, &a.report, args, &[&a.scores, truth_path], stdout)
}

/// `count` windows of length `len`, each from a uniformly chosen sequence
/// with a uniform start, flattened to rows.
pub fn sample_windows_from(seqs: &[Tensor], len: usize, count: usize, rng: &mut Rng) -> Result<Tensor> {
    for s in seqs {
        if s.rows() < len {
            return Err(usage(format!("a sequence has {} rows, shorter than the window {len}", s.rows())));
        }
    }
    let mut wins = Vec::with_capacity(count);
    for _ in 0..count {
        let s = &seqs[rng.below(seqs.len())];
        let start = rng.below(s.rows() - len + 1);
        wins.push(s.slice_rows(start, len)?);
    }
    Ok(flatten_sequences(&wins)?)
}

fn load_synth(paths: &[PathBuf], scaler: &Scaler, m: usize) -> Result<Vec<Tensor>> {
    paths
        .iter()
        .map(|p| {
            let s = files::load_csv(p)?;
            if s.cols() != m {
                return Err(Error::Format {
                    path: p.clone(),
                    message: format!("expected {m} columns like the real data, found {}", s.cols()),
                });
            }
            Ok(scaler.transform(&s)?)
        })
        .collect()
}

#[derive(Serialize)]
struct MmdSettings {
    window: usize,
    samples: usize,
    seed: u64,
    bandwidths: [f64; 5],
}

fn mmd_cmd(a: &MmdArgs, args: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    if a.window < 1 || a.samples < 1 {
        return Err(usage("--window and --samples must be at least 1"));
    }
    let raw = files::load_csv(&a.real)?;
    let scaler = Scaler::fit(&raw)?;
    let real = scaler.transform(&raw)?;
    let synth = load_synth(&a.synth, &scaler, real.cols())?;
    // Both sides draw from identically seeded streams, so identical inputs
    // give identical window sets.
    let rw = sample_windows_from(&[real], a.window, a.samples, &mut Rng::stream(a.seed, Stream::Eval))?;
    let sw = sample_windows_from(&synth, a.window, a.samples, &mut Rng::stream(a.seed, Stream::Eval))?;
    let settings = MmdSettings {
        window: a.window,
        samples: a.samples,
        seed: a.seed,
        bandwidths: MMD_BANDWIDTHS,
    };
    let mut r = Report::new("eval mmd", &settings);
    r.push("mmd", mmd(&rw, &sw, &MMD_BANDWIDTHS)?);
    if let Some(p) = &a.export {
        files::save_pointcloud(p, &rw, &sw)?;
    }
    let mut inputs: Vec<&Path> = vec![&a.real];
    inputs.extend(a.synth.iter().map(PathBuf::as_path));
    emit(&r, &a.report, args, &inputs, stdout)
}

/// Leading and trailing parts of `real` for a given test fraction.
pub fn split_real(real: &Tensor, test_fraction: f64, order: usize) -> Result<(Tensor, Tensor)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(usage("--test-fraction must lie in (0, 1)"));
    }
    let t = real.rows();
    let test = ((t as f64) * test_fraction).round() as usize;
    if test <= order || t - test <= order {
        return Err(usage(format!(
            "{t} rows cannot be split into train and test parts longer than the predictor order {order}"
        )));
    }
    Ok((real.slice_rows(0, t - test)?, real.slice_rows(t - test, test)?))
}

#[derive(Serialize)]
struct TstrSettings<'a> {
    predictor: &'a TstrConfig,
    test_fraction: f64,
    seed: u64,
}

fn tstr_cmd(a: &TstrArgs, args: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    let cfg: TstrConfig = match &a.config {
        Some(p) => files::load_json(p)?,
        None => TstrConfig::default(),
    };
    let raw = files::load_csv(&a.real)?;
    let scaler = Scaler::fit(&raw)?;
    let real = scaler.transform(&raw)?;
    let (train_part, test_part) = split_real(&real, a.test_fraction, cfg.order)?;
    let synth = load_synth(&a.synth, &scaler, real.cols())?;
    let settings = TstrSettings {
        predictor: &cfg,
        test_fraction: a.test_fraction,
        seed: a.seed,
    };
    let mut r = Report::new("eval tstr", &settings);
    let s = tstr(&synth, &test_part, &cfg, a.seed)?;
    r.push("tstr_rmse", s.rmse);
    r.push("tstr_epochs", s.epochs as f64);
    if a.trtr {
        let t = tstr(&[train_part], &test_part, &cfg, a.seed)?;
        r.push("trtr_rmse", t.rmse);
        r.push("trtr_epochs", t.epochs as f64);
    }
    let mut inputs: Vec<&Path> = vec![&a.real];
    inputs.extend(a.synth.iter().map(PathBuf::as_path));
    if let Some(c) = &a.config {
        inputs.push(c);
    }
    emit(&r, &a.report, args, &inputs, stdout)
}

fn te_cmd(a: &TeArgs, args: Vec<String>, stdout: &mut dyn Write) -> Result<()> {
    let obs = files::load_csv(&a.data)?;
    let truth = a.truth.as_ref().map(files::load_adjacency).transpose()?;
    if a.sigma.is_none() && truth.is_none() && a.matrix.is_none() {
        return Err(usage("eval te needs --truth, --matrix or --sigma"));
    }
    let dataset = Dataset::new("data", obs);
    let base = GramSpec {
        sigma: a.sigma.unwrap_or(SIGMA_GRID[0]),
        alpha: a.alpha,
        lag: a.lag,
        max_samples: a.max_samples,
    };
    let sigmas: Vec<f64> = match (a.sigma, &truth) {
        (Some(s), _) => vec![s],
        (None, Some(_)) => SIGMA_GRID.to_vec(),
        (None, None) => vec![base.sigma],
    };
    let mut best: Option<(f64, f64, crvae_core::CausalMatrix)> = None;
    for &sigma in &sigmas {
        let scores = te_matrix(&dataset, &GramSpec { sigma, ..base })?;
        let value = match &truth {
            Some(t) => auroc(&scores, t, true)?,
            None => f64::NAN,
        };
        if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
            best = Some((value, sigma, scores));
        }
    }
    let (value, sigma, scores) = best.expect("at least one width");
    if let Some(p) = &a.matrix {
        files::save_scores(p, &scores)?;
    }
    let mut r = Report::new("eval te", &GramSpec { sigma, ..base });
    if truth.is_some() {
        r.push("auroc", value);
    }
    r.push("sigma", sigma);
    let mut inputs: Vec<&Path> = vec![&a.data];
    if let Some(t) = &a.truth {
        inputs.push(t);
    }
    emit(&r, &a.report, args, &inputs, stdout)
}
