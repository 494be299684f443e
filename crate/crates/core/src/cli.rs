//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 cap/contract refusal
//! or a failed verification.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{NandError, Result};
use crate::fit::fit_loglog;
use crate::formula::{build_schedule, calibrate_trotter_constants, random_probe, ErrorMeter};
use crate::gadget::{verify_gadget, ANCILLA_TOLERANCE};
use crate::graph::WalkSystem;
use crate::nand::{eval_exact, eval_randomized_pruning, expected_pruning_queries, worst_case_table, NandInstance};
use crate::record::{Cell, ExperimentRecord, Format};
use crate::runner::{
    calibrate, run_instance_exact, run_instance_with_state, runway_layout, sweep_scaling, CalibrationPlan, PacketWidth,
    RunConfig, NORM_BOUND,
};

/// Gadget deviation allowed by `gadget-verify`.
pub const GADGET_TOLERANCE: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "nandwalk", version, about = "Discrete-query NAND-tree evaluation by scattering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact value of a NAND tree; optionally the randomized pruning cost.
    Eval(EvalArgs),
    /// Worst-case expected query table of the pruning evaluator.
    ClassicalSweep(ClassicalSweepArgs),
    /// Checks the two-query gadget against the spectral exponential.
    GadgetVerify(GadgetVerifyArgs),
    /// Prints the walk system's edge lists as JSON.
    DumpSystem(DumpSystemArgs),
    /// Product-formula error against the exact evolution.
    TrotterError(TrotterErrorArgs),
    /// Scattering run on one or more instances.
    Run(RunArgs),
    /// Query-count scaling over depths and orders.
    Sweep(SweepArgs),
    /// Regenerates the Trotter constants or the walk calibration.
    Calibrate(CalibrateArgs),
    /// Log-log least squares over two columns of a CSV record.
    Fit(FitArgs),
}

#[derive(Args, Debug, Clone)]
struct InstanceArgs {
    /// Tree depth n.
    #[arg(long)]
    depth: Option<u32>,
    /// Leaf bits as a 0/1 string of length 2^n, or @file with the instance JSON.
    #[arg(long)]
    bits: Option<String>,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<Option<NandInstance>> {
        let Some(bits) = &self.bits else {
            return Ok(None);
        };
        let instance = match bits.strip_prefix('@') {
            Some(path) => NandInstance::load(path)?,
            None => {
                let depth = self
                    .depth
                    .ok_or_else(|| NandError::InvalidArgument("--bits needs --depth".into()))?;
                return NandInstance::from_bit_str(depth, bits).map(Some);
            }
        };
        if let Some(d) = self.depth {
            if d != instance.depth() {
                return Err(NandError::InvalidArgument(format!(
                    "--depth {d} disagrees with the instance file (depth {})",
                    instance.depth()
                )));
            }
        }
        Ok(Some(instance))
    }

    fn require(&self) -> Result<NandInstance> {
        self.resolve()?
            .ok_or_else(|| NandError::InvalidArgument("an instance is required (--depth and --bits)".into()))
    }
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

impl OutputArgs {
    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(File::create(path)?),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn emit(&self, record: &ExperimentRecord) -> Result<()> {
        let mut sink = self.sink()?;
        record.write(self.format.into(), &mut sink)?;
        sink.flush()?;
        Ok(())
    }
}

/// Overrides on top of the calibrated run configuration.
#[derive(Args, Debug, Clone)]
struct WalkArgs {
    /// Order index k of the product formula (order 2k).
    #[arg(long)]
    order: Option<u32>,
    /// Evolution time constant: t = c_t·√(N·max(1, ln N)).
    #[arg(long)]
    time_const: Option<f64>,
    /// Runway constant: M = ⌈c_run·⌈√(N·max(1, ln N))⌉⌉.
    #[arg(long)]
    runway_const: Option<f64>,
    /// Fixed packet width σ in runway sites.
    #[arg(long)]
    sigma: Option<f64>,
    /// Target simulation error of the product formula.
    #[arg(long)]
    eps_sim: Option<f64>,
    /// Decision threshold on the deciding side's probability.
    #[arg(long)]
    threshold: Option<f64>,
}

impl WalkArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::calibrated();
        if let Some(k) = self.order {
            c.order_index = k;
        }
        if let Some(v) = self.time_const {
            c.time_const = v;
        }
        if let Some(v) = self.runway_const {
            c.runway_const = v;
        }
        if let Some(v) = self.sigma {
            c.packet_width = PacketWidth::Fixed(v);
        }
        if let Some(v) = self.eps_sim {
            c.eps_sim = v;
        }
        if let Some(v) = self.threshold {
            c.threshold = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Also run the randomized pruning evaluator with this seed and print its query count.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ClassicalSweepArgs {
    /// Largest depth of the table.
    #[arg(long, default_value_t = 24)]
    max_depth: u32,
    /// Smallest depth included in the fit.
    #[arg(long, default_value_t = 14)]
    fit_from: u32,
    /// With an instance: randomized pruning trials instead of the table.
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct GadgetVerifyArgs {
    /// Largest depth checked; every depth from 0 up is covered.
    #[arg(long, default_value_t = 3)]
    depth: u32,
    /// Random inputs and times per depth.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DumpSystemArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Runway length M; defaults to the calibrated layout for the depth.
    #[arg(long)]
    runway_len: Option<usize>,
    /// Attach position; defaults to ⌈M/2⌉.
    #[arg(long)]
    attach: Option<usize>,
    #[arg(long)]
    runway_const: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrotterErrorArgs {
    /// Random instance depth when no bits are given.
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 16)]
    runway_len: usize,
    /// Order indices, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    order: Vec<u32>,
    /// Evolution time.
    #[arg(long, default_value_t = 1.0)]
    time: f64,
    /// Segment counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    segments: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[command(flatten)]
    walk: WalkArgs,
    /// Random instances to run when no bits are given.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the dense reference evolution instead of the product formula.
    #[arg(long)]
    exact: bool,
    /// Write the final state of the first run as JSON [re, im] pairs.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Depths, as a list (4,6,8) or an inclusive range (4..12).
    #[arg(long, default_value = "4..12")]
    depths: String,
    /// Order indices, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    orders: Vec<u32>,
    /// Execute runs on random instances up to this depth.
    #[arg(long)]
    execute_max_depth: Option<u32>,
    #[command(flatten)]
    walk: WalkArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Fit the product-formula error constants instead of the walk parameters.
    #[arg(long)]
    trotter: bool,
    /// Largest order index fitted by --trotter.
    #[arg(long, default_value_t = 4)]
    max_order: u32,
    /// Multiplier on the worst observed error ratio.
    #[arg(long, default_value_t = 2.0)]
    safety: f64,
    /// Walk calibration depths.
    #[arg(long, default_value = "2,3,4")]
    depths: String,
    /// Sampled instances per depth above 2.
    #[arg(long, default_value_t = 24)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    eps_sim: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Column used as x.
    #[arg(long)]
    x: String,
    /// Column used as y.
    #[arg(long)]
    y: String,
    /// Keep only rows where column == value.
    #[arg(long = "where", value_name = "COLUMN=VALUE")]
    filter: Option<String>,
    file: PathBuf,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_refusal() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Eval(a) => eval(a),
        Command::ClassicalSweep(a) => classical_sweep(a),
        Command::GadgetVerify(a) => gadget_verify(a),
        Command::DumpSystem(a) => dump_system(a),
        Command::TrotterError(a) => trotter_error(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Fit(a) => fit(a),
    }
}

fn eval(a: EvalArgs) -> Result<i32> {
    let instance = a.instance.require()?;
    println!("{}", eval_exact(&instance) as u8);
    if let Some(seed) = a.seed {
        let (_, q) = eval_randomized_pruning(&instance, seed);
        println!("queries {}", q.0);
    }
    Ok(0)
}

fn classical_sweep(a: ClassicalSweepArgs) -> Result<i32> {
    if let Some(instance) = a.instance.resolve()? {
        let expected = expected_pruning_queries(&instance);
        let config = json!({"depth": instance.depth(), "bits": instance.bit_string(), "expected_queries": expected});
        let mut rec = ExperimentRecord::new("classical-sweep", config, Some(a.seed), &["trial", "value", "queries"]);
        for trial in 0..a.trials {
            let (value, q) = eval_randomized_pruning(&instance, a.seed.wrapping_add(trial));
            rec.push(vec![trial.into(), value.into(), q.0.into()]);
        }
        a.output.emit(&rec)?;
        return Ok(0);
    }
    let table = worst_case_table(a.max_depth)?;
    let config = json!({"max_depth": a.max_depth, "fit_from": a.fit_from});
    let mut rec = ExperimentRecord::new("classical-sweep", config, None, &["depth", "N", "w0", "w1", "worst", "log2_ratio"]);
    let mut fit_x = Vec::new();
    let mut fit_y = Vec::new();
    for (i, w) in table.iter().enumerate() {
        let leaves = 2f64.powi(w.depth as i32);
        let ratio = if i == 0 { f64::NAN } else { (w.max() / table[i - 1].max()).log2() };
        rec.push(vec![
            w.depth.into(),
            leaves.into(),
            w.w0.into(),
            w.w1.into(),
            w.max().into(),
            if ratio.is_finite() { Cell::Float(ratio) } else { Cell::Text(String::new()) },
        ]);
        if w.depth >= a.fit_from {
            fit_x.push(leaves);
            fit_y.push(w.max());
        }
    }
    if fit_x.len() >= 3 {
        rec.add_fit("worst~N", fit_loglog(&fit_x, &fit_y)?);
    }
    a.output.emit(&rec)?;
    Ok(0)
}

fn gadget_verify(a: GadgetVerifyArgs) -> Result<i32> {
    let report = verify_gadget(a.depth, a.trials, a.seed)?;
    println!("{}", serde_json::to_string(&report)?);
    let ok = report.max_deviation <= GADGET_TOLERANCE
        && report.max_ancilla_mass <= ANCILLA_TOLERANCE
        && report.queries == 2 * report.invocations;
    if ok {
        Ok(0)
    } else {
        eprintln!("gadget verification failed");
        Ok(2)
    }
}

fn dump_system(a: DumpSystemArgs) -> Result<i32> {
    let instance = a.instance.require()?;
    let runway_len = match a.runway_len {
        Some(m) => m,
        None => {
            let c = a.runway_const.unwrap_or_else(|| RunConfig::calibrated().runway_const);
            runway_layout(c, instance.depth()).1
        }
    };
    let attach = a.attach.unwrap_or(runway_len.div_ceil(2));
    let system = WalkSystem::build(&instance, runway_len, attach)?;
    let text = system.dump_json();
    match a.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn trotter_error(a: TrotterErrorArgs) -> Result<i32> {
    let instance = match a.instance.resolve()? {
        Some(i) => i,
        None => {
            let depth = a.instance.depth.unwrap_or(2);
            NandInstance::random(depth, &mut ChaCha8Rng::seed_from_u64(a.seed))?
        }
    };
    let attach = a.runway_len.div_ceil(2).max(1);
    let system = WalkSystem::build(&instance, a.runway_len, attach)?;
    let meter = ErrorMeter::new(&system)?;
    let probe = random_probe(system.dim(), a.seed);
    let config = json!({
        "depth": instance.depth(),
        "bits": instance.bit_string(),
        "runway_len": a.runway_len,
        "time": a.time,
    });
    let mut rec = ExperimentRecord::new(
        "trotter-error",
        config,
        Some(a.seed),
        &["n", "M", "k", "t", "r", "lambda", "error", "queries"],
    );
    for &k in &a.order {
        let mut lambdas = Vec::new();
        let mut errors = Vec::new();
        for &r in &a.segments {
            let schedule = build_schedule(k, a.time, r)?;
            let err = meter.measure(a.time, k, r, &probe)?;
            rec.push(vec![
                instance.depth().into(),
                a.runway_len.into(),
                k.into(),
                a.time.into(),
                r.into(),
                schedule.lambda().into(),
                err.into(),
                schedule.query_cost().into(),
            ]);
            if err > 1e-13 {
                lambdas.push(schedule.lambda());
                errors.push(err);
            }
        }
        if lambdas.len() >= 3 {
            rec.add_fit(format!("error~lambda k={k}"), fit_loglog(&lambdas, &errors)?);
        }
    }
    a.output.emit(&rec)?;
    Ok(0)
}

fn run_instances(a: &RunArgs) -> Result<Vec<NandInstance>> {
    if let Some(i) = a.instance.resolve()? {
        return Ok(vec![i]);
    }
    let depth = a
        .instance
        .depth
        .ok_or_else(|| NandError::InvalidArgument("run needs --depth (and optionally --bits)".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    (0..a.trials).map(|_| NandInstance::random(depth, &mut rng)).collect()
}

fn run_cmd(a: RunArgs) -> Result<i32> {
    let config = a.walk.config()?;
    let instances = run_instances(&a)?;
    let header_config = serde_json::to_value(&config)?;
    if a.exact {
        let mut rec = ExperimentRecord::new(
            "run --exact",
            header_config,
            Some(a.seed),
            &["depth", "bits", "truth", "decided_bit", "transmitted_prob", "reflected_prob", "tree_region_prob", "energy_before", "energy_after", "final_norm"],
        );
        for instance in &instances {
            let out = run_instance_exact(instance, &config)?;
            let decision = crate::runner::Decision::from_probabilities(&out.probabilities, config.threshold, config.polarity);
            rec.push(vec![
                instance.depth().into(),
                instance.bit_string().into(),
                eval_exact(instance).into(),
                decision_cell(decision),
                out.probabilities.transmitted.into(),
                out.probabilities.reflected.into(),
                out.probabilities.tree.into(),
                out.energy_before.into(),
                out.energy_after.into(),
                out.final_norm.into(),
            ]);
        }
        a.output.emit(&rec)?;
        return Ok(0);
    }

    let mut results = Vec::new();
    for (i, instance) in instances.iter().enumerate() {
        let (result, state) = run_instance_with_state(instance, &config)?;
        if i == 0 {
            if let Some(path) = &a.snapshot {
                std::fs::write(path, state.snapshot_json() + "\n")?;
            }
        }
        results.push((eval_exact(instance), result));
    }
    match a.output.format {
        FormatArg::Jsonl => {
            let rec = ExperimentRecord::new("run", header_config, Some(a.seed), &[]);
            let mut sink = a.output.sink()?;
            writeln!(sink, "{}", serde_json::to_string(&rec.header)?)?;
            for (_, r) in &results {
                writeln!(sink, "{}", serde_json::to_string(r)?)?;
            }
            sink.flush()?;
        }
        FormatArg::Csv => {
            // wall time is left out so the body depends only on the inputs
            let mut rec = ExperimentRecord::new(
                "run",
                header_config,
                Some(a.seed),
                &["depth", "bits", "truth", "decided_bit", "transmitted_prob", "reflected_prob", "tree_region_prob", "queries_total", "segments", "time", "dim", "runway_len", "final_norm"],
            );
            for (truth, r) in &results {
                rec.push(vec![
                    r.depth.into(),
                    r.bits.clone().into(),
                    (*truth).into(),
                    decision_cell(r.decided_bit),
                    r.transmitted_prob.into(),
                    r.reflected_prob.into(),
                    r.tree_region_prob.into(),
                    r.queries.total().into(),
                    r.segments.into(),
                    r.time.into(),
                    r.dim.into(),
                    r.runway_len.into(),
                    r.final_norm.into(),
                ]);
            }
            a.output.emit(&rec)?;
        }
    }
    Ok(0)
}

fn decision_cell(d: crate::runner::Decision) -> Cell {
    match d.bit() {
        Some(b) => b.into(),
        None => "inconclusive".into(),
    }
}

/// `"4..12"` (inclusive) or `"4,6,8"`.
pub fn parse_depths(list: &str) -> Result<Vec<u32>> {
    let bad = || NandError::InvalidArgument(format!("cannot parse depth list {list:?}"));
    if let Some((lo, hi)) = list.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    list.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn sweep(a: SweepArgs) -> Result<i32> {
    let config = a.walk.config()?;
    let depths = parse_depths(&a.depths)?;
    let rows = sweep_scaling(&depths, &config, &a.orders, a.execute_max_depth, a.seed)?;
    let header = json!({"run_config": config, "depths": depths, "orders": a.orders, "norm_bound": NORM_BOUND});
    let mut rec = ExperimentRecord::new(
        "sweep",
        header,
        Some(a.seed),
        &["n", "N", "k", "time", "segments", "queries", "executed", "correct"],
    );
    for row in &rows {
        rec.push(vec![
            row.depth.into(),
            row.leaves.into(),
            row.order_index.into(),
            row.time.into(),
            row.segments.into(),
            row.queries.into(),
            row.executed.into(),
            match row.correct {
                Some(c) => c.into(),
                None => "".into(),
            },
        ]);
    }
    for &k in &a.orders {
        let filter = Cell::Int(k as i64);
        let xs = rec.numeric_column("N", Some(("k", &filter)))?;
        let ys = rec.numeric_column("queries", Some(("k", &filter)))?;
        if xs.len() >= 3 {
            rec.add_fit(format!("queries~N k={k}"), fit_loglog(&xs, &ys)?);
        }
    }
    a.output.emit(&rec)?;
    Ok(0)
}

fn write_json_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<i32> {
    if a.trotter {
        let seed = a.seed.unwrap_or(0);
        let constants = calibrate_trotter_constants(a.max_order, a.safety, seed, NORM_BOUND)?;
        write_json_out(&a.out, &serde_json::to_string_pretty(&constants)?)?;
        return Ok(0);
    }
    let mut plan = CalibrationPlan {
        depths: parse_depths(&a.depths)?,
        trials_per_depth: a.trials,
        ..CalibrationPlan::default()
    };
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    if let Some(k) = a.order {
        plan.order_index = k;
    }
    if let Some(e) = a.eps_sim {
        plan.eps_sim = e;
    }
    let mut report = calibrate(&plan)?;
    report.generated_by = format!(
        "nandwalk calibrate --depths {} --trials {} --seed {} --order {} --eps-sim {}",
        a.depths, plan.trials_per_depth, plan.seed, plan.order_index, plan.eps_sim
    );
    write_json_out(&a.out, &serde_json::to_string_pretty(&report)?)?;
    Ok(0)
}

fn fit(a: FitArgs) -> Result<i32> {
    let rec = ExperimentRecord::read_csv(BufReader::new(File::open(&a.file)?))?;
    let filter = match &a.filter {
        Some(f) => {
            let (col, val) = f
                .split_once('=')
                .ok_or_else(|| NandError::InvalidArgument(format!("--where expects COLUMN=VALUE, got {f:?}")))?;
            Some((col.to_string(), Cell::Text(val.to_string())))
        }
        None => None,
    };
    let filter_ref = filter.as_ref().map(|(c, v)| (c.as_str(), v));
    let xs = rec.numeric_column(&a.x, filter_ref)?;
    let ys = rec.numeric_column(&a.y, filter_ref)?;
    let fit = fit_loglog(&xs, &ys)?;
    println!("{}", serde_json::to_string(&fit)?);
    Ok(0)
}
