//! Command-line front end: train, eval, sweep, analyze and selftest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    cluster_points, collect_discrepant, correlate, kmeans, outlier_table, write_events_csv, CLUSTER_FEATURE_NAMES,
};
use crate::analysis::kmeans::DEFAULT_RESTARTS;
use crate::ber::{run_ber, sweep, StopRule, SweepGrid, CSV_HEADER};
use crate::channel::draw_block_noise;
use crate::encoder::{encode_raw, write_trace_csv};
use crate::error::{Error, Result};
use crate::model::transmit;
use crate::params::ParamSet;
use crate::selftest::{gradient_suite, oracle_equivalence};
use crate::trainer::{train, Freeze, TrainConfig};
use crate::types::{ChannelConfig, FeedbackSnr, ModelSpec};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FBCODE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "fbcode", version, about = "Interpretable feedback codes: train, evaluate and analyze")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its parameter file.
    Train(TrainArgs),
    /// Estimate the BER of one parameter file at one channel point.
    Eval(EvalArgs),
    /// Run every model of a grid file at every grid point and write a CSV.
    Sweep(SweepArgs),
    /// Collect discrepant errors between two models and run the forensics.
    Analyze(AnalyzeArgs),
    /// Run the oracle-equivalence and gradient-check suites.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FreezeArg {
    None,
    Encoder,
    Decoder,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model name such as `enc2/dec2` or `enc3/dec4-two-stage`.
    #[arg(long)]
    pub spec: Option<ModelSpec>,
    /// JSON training configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Forward SNRs in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_f: Vec<f64>,
    /// Feedback SNRs in dB or `inf`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_fb: Vec<FeedbackSnr>,
    /// Optimizer steps of the final run.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Blocks per mini-batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for initialization and noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random restarts screened before the final run.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Steps per screening restart.
    #[arg(long)]
    pub restart_steps: Option<usize>,
    /// Parameter group held fixed (needs --init).
    #[arg(long, value_enum)]
    pub freeze: Option<FreezeArg>,
    /// Parameter file to start from instead of random restarts.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Blocks in the frozen power calibration pass.
    #[arg(long)]
    pub calibration_blocks: Option<u64>,
    /// Parameter file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV (step,bce,grad_norm,lr,val_ber).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StopArgs {
    /// Stop once this many bit errors are seen.
    #[arg(long, default_value_t = 200)]
    pub target_errors: u64,
    /// Never stop before this many bits.
    #[arg(long, default_value_t = 0)]
    pub min_bits: u64,
    /// Stop after this many bits regardless of errors.
    #[arg(long, default_value_t = 50_000_000)]
    pub max_bits: u64,
}

impl StopArgs {
    fn rule(&self) -> StopRule {
        StopRule {
            target_errors: self.target_errors,
            min_bits: self.min_bits,
            max_bits: self.max_bits,
            ..StopRule::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Parameter file to evaluate.
    #[arg(long)]
    pub params: PathBuf,
    /// Forward SNR in dB (`inf` for a noiseless forward link).
    #[arg(long, allow_hyphen_values = true)]
    pub snr_f: f64,
    /// Feedback SNR in dB or `inf`.
    #[arg(long, default_value = "inf", allow_hyphen_values = true)]
    pub snr_fb: FeedbackSnr,
    /// Noise seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Write seconds as 0 so repeated runs are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
    /// Append the result row to this CSV instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Debug: write the encoder hidden trace of this block index.
    #[arg(long)]
    pub trace_block: Option<u64>,
    /// Trace CSV path (decoder states go to *.decoder.csv).
    #[arg(long, requires = "trace_block")]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Grid file: models, points, seed and stopping rule.
    #[arg(long)]
    pub grid: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write seconds as 0 so repeated runs are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Model whose errors are studied.
    #[arg(long)]
    pub model_a: PathBuf,
    /// Reference model that decodes those positions correctly.
    #[arg(long)]
    pub model_b: PathBuf,
    /// Number of discrepant events to collect.
    #[arg(long, default_value_t = 5000)]
    pub events: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub snr_f: f64,
    /// Feedback SNR in dB or `inf`.
    #[arg(long, default_value = "inf", allow_hyphen_values = true)]
    pub snr_fb: FeedbackSnr,
    /// Noise seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Give up after this many blocks.
    #[arg(long, default_value_t = 20_000_000)]
    pub max_blocks: u64,
    /// K-means restarts.
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Outlier magnitude in units of the forward noise standard deviation.
    #[arg(long, default_value_t = 2.0)]
    pub outlier_sigmas: f64,
    /// Output directory for the reports (default: current directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Blocks per variant in the oracle-equivalence suite.
    #[arg(long, default_value_t = 10_000)]
    pub blocks: u64,
    /// Random parameter/batch pairs per variant in the gradient check.
    #[arg(long, default_value_t = 10)]
    pub pairs: usize,
    /// Seed for parameters and noise.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.clone(),
                source: e,
            })?
        }
        None => TrainConfig::default(),
    };
    if let Some(spec) = a.spec {
        cfg.spec = spec;
    }
    if !a.snr_f.is_empty() {
        cfg.snr_f_db = a.snr_f;
    }
    if !a.snr_fb.is_empty() {
        cfg.snr_fb = a.snr_fb;
    }
    cfg.steps = a.steps.unwrap_or(cfg.steps);
    cfg.batch_blocks = a.batch.unwrap_or(cfg.batch_blocks);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.restarts = a.restarts.unwrap_or(cfg.restarts);
    cfg.restart_steps = a.restart_steps.unwrap_or(cfg.restart_steps);
    cfg.calibration_blocks = a.calibration_blocks.unwrap_or(cfg.calibration_blocks);
    if let Some(f) = a.freeze {
        cfg.freeze = match f {
            FreezeArg::None => Freeze::Nothing,
            FreezeArg::Encoder => Freeze::Encoder,
            FreezeArg::Decoder => Freeze::Decoder,
        };
    }
    let init = a.init.as_ref().map(ParamSet::load).transpose()?;
    let report = train(&cfg, init.as_ref())?;
    report.params.save(&a.out)?;
    if let Some(log) = &a.log {
        write_with(log, |w| report.write_log_csv(w))?;
    }
    eprintln!(
        "{}: validation bce {:.5}, ber {:.3e}, restarts {:?}",
        cfg.spec, report.final_val_bce, report.final_val_ber, report.restart_scores
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let params = ParamSet::load(&a.params)?;
    let cfg = ChannelConfig::new(a.snr_f, a.snr_fb, a.seed, params.spec.block_len)?;
    let report = run_ber(&params, &cfg, &a.stop.rule())?;
    let row = report.csv_row(a.deterministic);
    match &a.out {
        Some(path) => write_with(path, |w| writeln!(w, "{CSV_HEADER}\n{row}"))?,
        None => println!("{CSV_HEADER}\n{row}"),
    }
    if let (Some(index), Some(path)) = (a.trace_block, &a.trace_out) {
        let noise = draw_block_noise(&cfg, index);
        let raw = encode_raw(&noise, &params);
        write_with(path, |w| write_trace_csv(&raw, w))?;
        let tx = transmit(&params, &noise)?;
        let dec_path = path.with_extension("decoder.csv");
        write_with(&dec_path, |w| tx.trace.write_csv(w))?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let grid = SweepGrid::load(&a.grid)?;
    let base = a.grid.parent().unwrap_or(Path::new("."));
    let models = grid
        .models
        .iter()
        .map(|m| {
            let p = Path::new(m);
            ParamSet::load(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
        })
        .collect::<Result<Vec<_>>>()?;
    match &a.out {
        Some(path) => {
            let w = create(path)?;
            sweep(&models, &grid.points, grid.seed, &grid.stop, a.deterministic, w)?;
        }
        None => {
            sweep(&models, &grid.points, grid.seed, &grid.stop, a.deterministic, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let model_a = ParamSet::load(&a.model_a)?;
    let model_b = ParamSet::load(&a.model_b)?;
    let cfg = ChannelConfig::new(a.snr_f, a.snr_fb, a.seed, model_a.spec.block_len)?;
    let dir = out_dir(a.out_dir);
    let events = collect_discrepant(&model_a, &model_b, &cfg, a.events, a.max_blocks)?;
    eprintln!("collected {} discrepant events", events.len());
    write_with(&dir.join("events.csv"), |w| write_events_csv(&events, w))?;

    let corr = correlate(&events);
    write_with(&dir.join("correlation.csv"), |w| corr.write_csv(w))?;
    for f in corr.ranked().iter().take(5) {
        println!("rho(b[i], {}) = {:+.3}", f.name, f.rho);
    }
    for s in &corr.skipped {
        println!("skipped {s}: zero variance");
    }

    let points = cluster_points(&events);
    if points.len() >= 2 {
        let clusters = kmeans(&points, 2, a.restarts, a.seed)?;
        write_with(&dir.join("centroids.csv"), |w| {
            clusters.write_centroids_csv(&CLUSTER_FEATURE_NAMES, w)
        })?;
        for (c, centroid) in clusters.centroids.iter().enumerate() {
            let vals: Vec<String> = centroid.iter().map(|v| format!("{v:+.3}")).collect();
            println!("centroid {c}: {}", vals.join(" "));
        }
    }

    let magnitude = a.outlier_sigmas * cfg.sigma_f();
    for (tag, params) in [("a", &model_a), ("b", &model_b)] {
        let table = outlier_table(params, magnitude);
        println!("model {tag} ({}):\n{table}", params.spec);
        write_with(&dir.join(format!("outliers_{tag}.csv")), |w| table.write_csv(w))?;
        write_with(&dir.join(format!("outliers_{tag}.txt")), |w| write!(w, "{table}"))?;
    }
    Ok(())
}

fn cmd_selftest(a: SelftestArgs) -> Result<bool> {
    let mut ok = true;
    for check in oracle_equivalence(a.blocks, a.seed)? {
        let pass = check.worst() <= 1e-12;
        ok &= pass;
        println!(
            "oracle {:<28} blocks {:>6}  max rel {:.2e}  {}",
            check.model,
            check.blocks,
            check.worst(),
            if pass { "ok" } else { "FAIL" }
        );
    }
    let mut by_model: Vec<(String, f64, String)> = Vec::new();
    for check in gradient_suite(a.pairs, a.seed)? {
        match by_model.iter_mut().find(|(m, _, _)| *m == check.model) {
            Some(entry) if check.max_rel_error > entry.1 => {
                entry.1 = check.max_rel_error;
                entry.2 = check.worst_coordinate;
            }
            Some(_) => {}
            None => by_model.push((check.model, check.max_rel_error, check.worst_coordinate)),
        }
    }
    for (model, worst, coord) in by_model {
        let pass = worst < 1e-5;
        ok &= pass;
        println!(
            "gradient {model:<26} pairs {:>3}  max rel {worst:.2e} ({coord})  {}",
            a.pairs,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a runtime or configuration error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Analyze(a) => cmd_analyze(a).map(|_| true),
        Command::Selftest(a) => cmd_selftest(a),
    });
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: selftest failed");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
