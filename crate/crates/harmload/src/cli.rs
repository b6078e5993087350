//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use harmload_core::circuits::{build_house_with, equivalent_supply, simulate, METER_CHANNELS};
use harmload_core::datagen::{alpha_grid, case_to_loads, Dataset, Extraction, MeasurementPoint, SweepConfig};
use harmload_core::fcm::{
    condition_number, evaluate, fit, model_order_sweep, predict, select_voltage_orders, PointId, Split,
};
use harmload_core::harmonics::align_phase_reference;
use harmload_core::signal::{synthesize, thd};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::FileError;
use crate::files::write_atomic;
use crate::manifest::RunManifest;
use crate::model::{curve_to_json, load_model, report_to_json, save_model};
use crate::sweep::{run_sweeps, SweepError};
use crate::waveform::{netlist_to_json, save_waveform, spectra_to_json};
use crate::{dataset, plots};

/// Environment variable that overrides `--seed` for shuffled splits.
pub const SEED_ENV: &str = "HARMLOAD_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "harmload",
    version,
    about = "Residential harmonic load simulation and frequency coupling matrix identification",
    after_help = "Exit codes: 0 success, 1 usage or validation error, 2 numerical or simulation failure, 3 I/O error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one house and write the meter waveform and spectra.
    #[command(after_help = "Writes <out>.bin (channel-major little-endian f64), <out>.json (sidecar) \
                            and <out>.spectrum.json (RMS phasors and THD per channel).")]
    Simulate(SimulateArgs),
    /// Sweep the impedance gain for one or more cases and write a dataset.
    #[command(after_help = "fig8 CSV columns: case, alpha [dimensionless], v_thd [ratio], i_thd [ratio].")]
    Sweep(SweepArgs),
    /// Fit a frequency coupling matrix to the training points of one case.
    Fit(FitArgs),
    /// Evaluate a fitted model on dataset points.
    #[command(after_help = "errors CSV columns: case, point [index], alpha [dimensionless], order [harmonic], \
                            error [|predicted - measured| / |I_1|].\n\
                            parasitic CSV columns: case, alpha [dimensionless], ratio [harmonic / fundamental active power].")]
    Eval(EvalArgs),
    /// Training and test error against the number of voltage orders.
    #[command(after_help = "CSV columns: n_prime [count], train_err, test_err [mean squared residual \
                            over mean squared fundamental current].")]
    OrderSweep(OrderSweepArgs),
    /// Condition number of the voltage matrix against the number of orders.
    #[command(after_help = "CSV columns: orders [count], cond [ratio; inf when rank deficient].")]
    Condition(ConditionArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dft,
    Esprit,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Solver time steps per fundamental cycle [count]
    #[arg(long, default_value_t = 16_800)]
    pub steps_per_cycle: usize,
    /// Simulated-time budget for reaching steady state [s]
    #[arg(long, default_value_t = 4.0)]
    pub max_sim_time: f64,
    /// Current harmonic orders kept, M [count]
    #[arg(long, default_value_t = 25)]
    pub current_orders: usize,
    /// Voltage harmonic orders kept, N [count]
    #[arg(long, default_value_t = 25)]
    pub voltage_orders: usize,
    /// Harmonic extraction method
    #[arg(long, value_enum, default_value_t = Method::Dft)]
    pub method: Method,
    /// Block-averaging factor applied before ESPRIT [samples]
    #[arg(long, default_value_t = 120)]
    pub decimation: usize,
}

impl SolverArgs {
    fn config(&self, grid: Vec<f64>) -> SweepConfig {
        SweepConfig {
            steps_per_cycle: self.steps_per_cycle,
            max_sim_time: self.max_sim_time,
            current_orders: self.current_orders,
            voltage_orders: self.voltage_orders,
            extraction: match self.method {
                Method::Dft => Extraction::Dft,
                Method::Esprit => Extraction::Esprit {
                    decimation: self.decimation,
                },
            },
            alpha_grid: grid,
            ..SweepConfig::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Load combination case [1-16]
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=16))]
    pub case: u8,
    /// Impedance gain applied to the service impedance [dimensionless, >= 1]
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Output prefix for <out>.bin, <out>.json and <out>.spectrum.json [path]
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the netlist as JSON [path]
    #[arg(long)]
    pub dump_netlist: Option<PathBuf>,
    /// Run manifest to append to; default is beside the output [path]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Load combination cases, comma separated or repeated [1-16]
    #[arg(long, required = true, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=16))]
    pub case: Vec<u8>,
    /// First impedance gain of the grid [dimensionless, must be 1]
    #[arg(long, default_value_t = 1.0)]
    pub alpha_start: f64,
    /// Last impedance gain of the grid [dimensionless]
    #[arg(long, default_value_t = 10.0)]
    pub alpha_end: f64,
    /// Number of uniformly spaced gains [count]
    #[arg(long, default_value_t = 19)]
    pub points: usize,
    /// Dataset file (JSON Lines) [path]
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses every logical core [count]
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Directory for the raw waveform of every point [path]
    #[arg(long)]
    pub waveforms: Option<PathBuf>,
    /// Distortion-versus-gain CSV [path]
    #[arg(long)]
    pub fig8: Option<PathBuf>,
    /// Run manifest to append to; default is beside the output [path]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset file (JSON Lines) [path]
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Case to use when the dataset holds several [1-16]
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=16))]
    pub case: Option<u8>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    /// Hold out points spread evenly along the gain grid
    Interleaved,
    /// Train on the lowest gains, test on the rest
    First,
    /// Seeded random permutation
    Shuffle,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Training points; the rest of the case is held out [count]
    #[arg(long, default_value_t = 15)]
    pub train: usize,
    /// How points are assigned to the training set
    #[arg(long, value_enum, default_value_t = SplitKind::Interleaved)]
    pub split: SplitKind,
    /// Shuffle seed; HARMLOAD_SEED takes precedence when set [integer]
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Most significant voltage orders to keep, or `auto` for the lowest test error [count]
    #[arg(long, default_value = "auto", conflicts_with = "orders")]
    pub nprime: String,
    /// Explicit voltage orders, comma separated; must include 1 [harmonic orders]
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Model file (JSON) [path]
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest to append to; default is beside the output [path]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model file written by `fit` [path]
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Evaluate every point of the case, not only those held out of training
    #[arg(long)]
    pub all: bool,
    /// Report file (JSON); default is <model stem>.report.json beside the model [path]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-harmonic error CSV [path]
    #[arg(long)]
    pub errors_csv: Option<PathBuf>,
    /// Parasitic power CSV from predicted currents [path]
    #[arg(long)]
    pub parasitic_csv: Option<PathBuf>,
    /// Directory for reconstructed current waveforms [path]
    #[arg(long)]
    pub reconstruct: Option<PathBuf>,
    /// Run manifest to append to; default is beside the output [path]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OrderSweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Smallest model order evaluated [count]
    #[arg(long, default_value_t = 1)]
    pub min_nprime: usize,
    /// Largest model order evaluated; default is every voltage order [count]
    #[arg(long)]
    pub max_nprime: Option<usize>,
    /// Curve CSV [path]
    #[arg(long)]
    pub out: PathBuf,
    /// Curve JSON with selected orders and skipped model orders [path]
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Run manifest to append to; default is beside the output [path]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConditionArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Largest number of voltage orders [count]
    #[arg(long, default_value_t = 10)]
    pub max_orders: usize,
    /// Condition number CSV [path]
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest to append to; default is beside the output [path]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Failure classes mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

fn is_usage(e: &harmload_core::Error) -> bool {
    use harmload_core::Error as E;
    match e {
        E::InvalidArgument(_)
        | E::TooFewPoints { .. }
        | E::MissingOrder(_)
        | E::FundamentalMismatch(..)
        | E::EmptySpectrum => true,
        E::SweepPoint { source, .. } => is_usage(source),
        _ => false,
    }
}

impl From<harmload_core::Error> for Failure {
    fn from(e: harmload_core::Error) -> Self {
        if is_usage(&e) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<FileError> for Failure {
    fn from(e: FileError) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Core(e) => e.into(),
            SweepError::File(e) => e.into(),
            SweepError::Pool(m) => Failure::Io(m),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if !e.to_string().contains("Usage:") {
                let mut cmd = Cli::command();
                cmd.build();
                let name = argv.get(1).and_then(|a| a.to_str()).unwrap_or_default();
                let usage = match cmd.find_subcommand_mut(name) {
                    Some(sub) => sub.render_usage(),
                    None => cmd.render_usage(),
                };
                eprintln!("\n{usage}");
            }
            return 1;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, args),
        Command::Sweep(a) => cmd_sweep(a, args),
        Command::Fit(a) => cmd_fit(a, args),
        Command::Eval(a) => cmd_eval(a, args),
        Command::OrderSweep(a) => cmd_order_sweep(a, args),
        Command::Condition(a) => cmd_condition(a, args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn finish(mut m: RunManifest, explicit: Option<&Path>, started: Instant) -> Outcome {
    m.duration_seconds = started.elapsed().as_secs_f64();
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| m.default_path());
    m.append(&path)?;
    Ok(())
}

fn snapshot<T: serde::Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).unwrap_or(serde_json::Value::Null)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_simulate(a: &SimulateArgs, args: Vec<String>) -> Outcome {
    let started = Instant::now();
    let cfg = a.solver.config(vec![1.0]);
    cfg.validate()?;
    let loads = case_to_loads(a.case)?;
    let netlist = build_house_with(&cfg.house, loads, a.alpha)?;
    let mut manifest = RunManifest::new(
        "simulate",
        args,
        serde_json::json!({"case": a.case, "alpha": a.alpha, "sweep": snapshot(&cfg)}),
    );
    if let Some(p) = &a.dump_netlist {
        write_atomic(p, netlist_to_json(&netlist).as_bytes())?;
    }
    let wave = simulate(&netlist, &cfg.simulation(&netlist))?;
    let (bin, side) = save_waveform(&wave, &a.out)?;
    let orders = cfg.current_orders.max(cfg.voltage_orders);
    let mut spectra = Vec::new();
    for name in METER_CHANNELS {
        let view = wave
            .channel(name)
            .ok_or_else(|| Failure::Numerical(format!("waveform lacks channel `{name}`")))?;
        spectra.push(cfg.extraction.extract(view, orders)?);
    }
    let (v, i) = equivalent_supply(&spectra[0], &spectra[1], &spectra[2], &spectra[3])?;
    let (v, i) = align_phase_reference(&v, &i)?;
    let mut entries: Vec<(&str, &_)> = METER_CHANNELS.iter().copied().zip(spectra.iter()).collect();
    entries.push(("v_eq", &v));
    entries.push(("i_eq", &i));
    let spec_path = with_suffix(&a.out, ".spectrum.json");
    write_atomic(&spec_path, spectra_to_json(&entries).as_bytes())?;
    for p in [&bin, &side, &spec_path] {
        manifest.output(p)?;
    }
    if let Some(p) = &a.dump_netlist {
        manifest.output(p)?;
    }
    let fmt = |x: Result<f64, _>| x.map(|t| format!("{t:.4}")).unwrap_or_else(|_| "undefined".into());
    println!(
        "case {} alpha {}: settled after {} cycles; |I1| = {:.4} A, current THD {}, voltage THD {}",
        a.case,
        a.alpha,
        wave.meta.get("settle_cycles").map(String::as_str).unwrap_or("?"),
        i.fundamental().norm(),
        fmt(thd(&i)),
        fmt(thd(&v)),
    );
    finish(manifest, a.manifest.as_deref(), started)
}

fn cmd_sweep(a: &SweepArgs, args: Vec<String>) -> Outcome {
    let started = Instant::now();
    let grid = alpha_grid(a.alpha_start, a.alpha_end, a.points)?;
    let cfg = a.solver.config(grid);
    cfg.validate()?;
    let mut cases = a.case.clone();
    cases.sort_unstable();
    cases.dedup();
    let data = run_sweeps(&cases, &cfg, a.jobs, a.waveforms.as_deref())?;
    dataset::save(&data, &a.out)?;
    let mut manifest = RunManifest::new(
        "sweep",
        args,
        serde_json::json!({"cases": cases, "jobs": a.jobs, "sweep": snapshot(&cfg)}),
    );
    manifest.output(&a.out)?;
    if let Some(p) = &a.fig8 {
        plots::write_distortion(p, &data.points)?;
        manifest.output(p)?;
    }
    if let Some(dir) = &a.waveforms {
        for p in &data.points {
            if let Some(side) = &p.provenance.waveform {
                let side = dir.join(side);
                manifest.output(&side.with_extension("bin"))?;
                manifest.output(&side)?;
            }
        }
    }
    for p in &data.points {
        println!(
            "case {:2} alpha {:6.3}: voltage THD {:.5}, current THD {}",
            p.case_id,
            p.alpha_imp,
            thd(&p.v).unwrap_or(f64::NAN),
            thd(&p.i).map(|t| format!("{t:.5}")).unwrap_or_else(|_| "undefined".into())
        );
    }
    println!("wrote {} points to {}", data.len(), a.out.display());
    finish(manifest, a.manifest.as_deref(), started)
}

/// Points of the requested case, or of the only case present.
fn case_points(data: &Dataset, case: Option<u8>) -> Result<(u8, Vec<MeasurementPoint>), Failure> {
    let mut cases: Vec<u8> = data.points.iter().map(|p| p.case_id).collect();
    cases.dedup();
    let c = match (case, cases.as_slice()) {
        (Some(c), _) => c,
        (None, [c]) => *c,
        (None, []) => return Err(Failure::Usage("dataset holds no points".into())),
        (None, many) => {
            return Err(Failure::Usage(format!(
                "dataset holds cases {many:?}; choose one with --case"
            )))
        }
    };
    let pts = data.case(c);
    if pts.is_empty() {
        return Err(Failure::Usage(format!("dataset holds no points for case {c}")));
    }
    Ok((c, pts))
}

/// Shuffle seed: the environment variable wins over the flag.
pub fn effective_seed(flag: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(flag),
    }
}

fn make_split(len: usize, a: &SplitArgs) -> Result<Split, Failure> {
    if a.train == 0 || a.train > len {
        return Err(Failure::Usage(format!(
            "--train must lie in 1..={len} for this case, got {}",
            a.train
        )));
    }
    Ok(match a.split {
        SplitKind::Interleaved => Split::interleaved(len, len - a.train)?,
        SplitKind::First => Split::first(len, a.train)?,
        SplitKind::Shuffle => {
            let mut order: Vec<usize> = (0..len).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(effective_seed(a.seed)?));
            Split::from_permutation(&order, a.train)?
        }
    })
}

fn split_ids(points: &[MeasurementPoint], split: &Split) -> (Vec<PointId>, Vec<PointId>) {
    let ids = |ix: &[usize]| ix.iter().map(|&i| PointId::of(&points[i])).collect();
    (ids(&split.train), ids(&split.test))
}

fn cmd_fit(a: &FitArgs, args: Vec<String>) -> Outcome {
    let started = Instant::now();
    let data = dataset::load(&a.data.input)?;
    let (case, pts) = case_points(&data, a.data.case)?;
    let split = make_split(pts.len(), &a.split)?;
    let (train, _) = split.apply(&pts)?;
    let orders = match (&a.orders, a.nprime.as_str()) {
        (Some(o), _) => o.clone(),
        (None, "auto") => {
            let max = (train.len() - 1).min(data.config.voltage_orders);
            let curve = model_order_sweep(&pts, &split, 1..=max)?;
            curve
                .best()
                .map(|b| b.orders.clone())
                .ok_or_else(|| Failure::Usage("no feasible model order for this split".into()))?
        }
        (None, n) => {
            let n: usize = n
                .parse()
                .map_err(|_| Failure::Usage(format!("--nprime expects a count or `auto`, got `{n}`")))?;
            select_voltage_orders(&train, n)?
        }
    };
    let model = fit(&train, &orders)?;
    save_model(&model, &a.out)?;
    let mut manifest = RunManifest::new(
        "fit",
        args,
        serde_json::json!({"case": case, "split": format!("{:?}", a.split.split), "train": a.split.train,
                           "seed": effective_seed(a.split.seed)?, "orders": orders}),
    );
    manifest.input(&a.data.input)?;
    manifest.output(&a.out)?;
    println!(
        "case {case}: fitted on {} points with voltage orders {:?}; cond(Z) = {:.4e}{}",
        train.len(),
        model.voltage_orders,
        model.training.condition_number,
        if model.training.rank_deficient { " (rank deficient)" } else { "" }
    );
    finish(manifest, a.manifest.as_deref(), started)
}

fn cmd_eval(a: &EvalArgs, args: Vec<String>) -> Outcome {
    let started = Instant::now();
    let model = load_model(&a.model)?;
    let data = dataset::load(&a.data.input)?;
    let (case, pts) = case_points(&data, a.data.case.or(model.training.case_id))?;
    let test: Vec<MeasurementPoint> = if a.all {
        pts
    } else {
        pts.into_iter()
            .filter(|p| !model.training.points.contains(&PointId::of(p)))
            .collect()
    };
    if test.is_empty() {
        return Err(Failure::Usage(format!(
            "every point of case {case} was used for training; pass --all to evaluate them"
        )));
    }
    let report = evaluate(&model, &test)?;
    let out = a.out.clone().unwrap_or_else(|| a.model.with_extension("report.json"));
    let mut manifest = RunManifest::new("eval", args, serde_json::json!({"case": case, "all": a.all}));
    manifest.input(&a.model)?;
    manifest.input(&a.data.input)?;
    let mut refs = vec![None; test.len()];
    let mut extra = Vec::new();
    if let Some(dir) = &a.reconstruct {
        let f0 = model.fundamental_hz;
        let rate = f0 * (4 * model.current_orders()).max(200) as f64;
        for (k, p) in test.iter().enumerate() {
            let predicted = predict(&model, &p.v)?;
            let mut w = synthesize(&predicted, 1.0 / f0, rate)?;
            w.channels[0].name = "i_predicted".into();
            w.channels.push(synthesize(&p.i, 1.0 / f0, rate)?.channels.remove(0));
            w.channels[1].name = "i_measured".into();
            w.meta.insert("case".into(), p.case_id.to_string());
            w.meta.insert("alpha_imp".into(), p.alpha_imp.to_string());
            let (bin, side) = save_waveform(&w, &dir.join(format!("case{:02}_eval{k:02}", p.case_id)))?;
            refs[k] = Some(side.display().to_string());
            extra.push(bin);
            extra.push(side);
        }
    }
    write_atomic(
        &out,
        report_to_json(&report, &model, &a.model.display().to_string(), &refs).as_bytes(),
    )?;
    manifest.output(&out)?;
    if let Some(p) = &a.errors_csv {
        plots::write_errors(p, &report)?;
        manifest.output(p)?;
    }
    if let Some(p) = &a.parasitic_csv {
        let rows: Vec<_> = report
            .points
            .iter()
            .map(|p| (p.id.case_id, p.id.alpha_imp, p.parasitic_ratio))
            .collect();
        plots::write_parasitic(p, &rows)?;
        manifest.output(p)?;
    }
    for p in &extra {
        manifest.output(p)?;
    }
    let s = report.summary;
    println!(
        "case {case}: {} points, {} errors; median {:.3e}, p95 {:.3e}, max {:.3e}; {} flagged",
        report.points.len(),
        s.count,
        s.median,
        s.p95,
        s.max,
        report.flagged().count()
    );
    finish(manifest, a.manifest.as_deref(), started)
}

fn cmd_order_sweep(a: &OrderSweepArgs, args: Vec<String>) -> Outcome {
    let started = Instant::now();
    let data = dataset::load(&a.data.input)?;
    let (case, pts) = case_points(&data, a.data.case)?;
    let split = make_split(pts.len(), &a.split)?;
    let max = a.max_nprime.unwrap_or(data.config.voltage_orders);
    if a.min_nprime == 0 || a.min_nprime > max {
        return Err(Failure::Usage(format!(
            "model order range {}..={max} is empty",
            a.min_nprime
        )));
    }
    let curve = model_order_sweep(&pts, &split, a.min_nprime..=max)?;
    plots::write_order_curve(&a.out, &curve)?;
    let mut manifest = RunManifest::new(
        "order-sweep",
        args,
        serde_json::json!({"case": case, "split": format!("{:?}", a.split.split), "train": a.split.train,
                           "seed": effective_seed(a.split.seed)?, "range": [a.min_nprime, max]}),
    );
    manifest.input(&a.data.input)?;
    manifest.output(&a.out)?;
    if let Some(p) = &a.json {
        let (train, test) = split_ids(&pts, &split);
        write_atomic(p, curve_to_json(&curve, Some(case), train, test).as_bytes())?;
        manifest.output(p)?;
    }
    for (n, e) in &curve.skipped {
        eprintln!("skipped n_prime {n}: {e}");
    }
    match curve.best() {
        Some(b) => println!(
            "case {case}: lowest test error {:.4e} at n_prime {} with orders {:?}",
            b.test_error, b.n_prime, b.orders
        ),
        None => println!("case {case}: no feasible model order"),
    }
    finish(manifest, a.manifest.as_deref(), started)
}

fn cmd_condition(a: &ConditionArgs, args: Vec<String>) -> Outcome {
    let started = Instant::now();
    let data = dataset::load(&a.data.input)?;
    let (case, pts) = case_points(&data, a.data.case)?;
    if a.max_orders == 0 || a.max_orders > data.config.voltage_orders {
        return Err(Failure::Usage(format!(
            "--max-orders must lie in 1..={}",
            data.config.voltage_orders
        )));
    }
    let mut rows = Vec::with_capacity(a.max_orders);
    for n in 1..=a.max_orders {
        let orders = select_voltage_orders(&pts, n)?;
        rows.push((n, condition_number(&pts, &orders)?));
    }
    plots::write_condition(&a.out, &rows)?;
    let mut manifest = RunManifest::new(
        "condition",
        args,
        serde_json::json!({"case": case, "max_orders": a.max_orders}),
    );
    manifest.input(&a.data.input)?;
    manifest.output(&a.out)?;
    println!(
        "case {case}: condition number {:.4e} with 1 order, {:.4e} with {}",
        rows[0].1,
        rows[rows.len() - 1].1,
        a.max_orders
    );
    finish(manifest, a.manifest.as_deref(), started)
}
