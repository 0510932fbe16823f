use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cvep::dataset::{Dataset, RawRecording};
use cvep::decoder::{fit_reconvolution_cca, StructurePair};
use cvep::eval::{cross_validate, length_samples, sweep_response_length, EvalOptions};
use cvep::pipeline::{default_code_book, rerun_manifest, run_experiment, CodeBook, RunConfig};
use cvep::preprocess::{preprocess_to_dataset, PreprocessConfig};
use cvep::reconvolution::{derive_events, events_to_csv, structure_for_code};
use cvep::report::{read_curve_csv, write_curve_csv, write_curve_svg};
use cvep::simulator::{default_forward_model, simulate_dataset, simulate_raw, EEG_RATE_HZ};
use cvep::stimulus::{make_session_plan, Condition, SessionPlan, Side, TRIAL_DURATION_S};
use cvep::{Error, Result};

#[derive(Parser)]
#[command(name = "cvep", version, about = "c-VEP stimulus generation, simulation and decoding")]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory of the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run configuration supplying defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gold code generation and verification.
    #[command(subcommand)]
    Codes(CodesCommand),
    /// Session plans and flash events.
    #[command(subcommand)]
    Stim(StimCommand),
    /// Simulate a session as epoched trials or a continuous recording.
    Simulate(SimulateArgs),
    /// Filter, epoch and resample a continuous recording.
    Preprocess(PreprocessArgs),
    /// Cross-validated accuracy at one response length.
    Evaluate(EvaluateArgs),
    /// Cross-validated accuracy over a grid of response lengths.
    Sweep(SweepArgs),
    /// Plot one or more curves as SVG.
    Report(ReportArgs),
    /// The whole pipeline, or a re-run of a manifest.
    Run(RunArgs),
}

#[derive(Subcommand)]
enum CodesCommand {
    Generate {
        /// LFSR degree; the shipped preferred pair is degree 6.
        #[arg(long, default_value_t = 6)]
        degree: u32,
    },
    Verify {
        /// Codes file; the built-in set when omitted.
        codes: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StimCommand {
    Plan,
    Events {
        #[arg(long)]
        codes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "left")]
        side: SideArg,
        /// Also write the structure matrix for this response length (s).
        #[arg(long)]
        structure: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConditionArg {
    Overt,
    Covert,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::Overt => Condition::Overt,
            ConditionArg::Covert => Condition::Covert,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    /// Write a continuous 512 Hz recording instead of epochs.
    #[arg(long)]
    raw: bool,
    /// Only the first N trials of the plan.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    condition: Option<ConditionArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    n_perm: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: EvalArgs,
    /// Response length in seconds.
    #[arg(long = "L")]
    length: Option<f64>,
    /// Fit on all trials of the condition and save the model here.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: EvalArgs,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, required = true)]
    curve: Vec<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Re-run the configuration recorded in this manifest and compare.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

struct Ctx {
    seed: Option<u64>,
    out: Option<PathBuf>,
    config: RunConfig,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.config.seed)
    }

    fn out(&self, what: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidInput(format!("--out is required for {what}")))
    }

    fn options(&self, args: &EvalArgs) -> EvalOptions {
        EvalOptions {
            k: args.k.unwrap_or(self.config.k),
            ridge: args.ridge.unwrap_or(self.config.ridge),
            n_perm: args.n_perm.unwrap_or(self.config.n_perm),
            seed: self.seed(),
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable") + "\n";
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn code_book(path: Option<&Path>) -> Result<CodeBook> {
    match path {
        Some(p) => CodeBook::load(p),
        None => default_code_book(),
    }
}

fn conditions_of(dataset: &Dataset, arg: Option<ConditionArg>) -> Vec<Condition> {
    match arg {
        Some(c) => vec![c.into()],
        None => [Condition::Overt, Condition::Covert]
            .into_iter()
            .filter(|c| dataset.trials.conditions.contains(c))
            .collect(),
    }
}

fn codes(ctx: &Ctx, cmd: CodesCommand) -> Result<()> {
    match cmd {
        CodesCommand::Generate { degree } => {
            if degree != 6 {
                return Err(Error::InvalidInput(format!(
                    "only degree 6 has a built-in preferred pair, got {degree}"
                )));
            }
            let book = default_code_book()?;
            let out = ctx.out.clone().unwrap_or_else(|| "codes.json".into());
            write_json(&out, &book)?;
            print_json(&json!({
                "codes": book.codes.len(),
                "left": book.pair.left.name(),
                "right": book.pair.right.name(),
                "shift_bits": book.pair.shift_bits,
                "out": out,
            }));
        }
        CodesCommand::Verify { codes } => {
            let report = code_book(codes.as_deref())?.verify()?;
            print_json(&serde_json::to_value(report).expect("serialisable"));
        }
    }
    Ok(())
}

fn stim(ctx: &Ctx, cmd: StimCommand) -> Result<()> {
    match cmd {
        StimCommand::Plan => {
            let plan = make_session_plan(ctx.seed())?;
            let out = ctx.out.clone().unwrap_or_else(|| "plan.json".into());
            plan.save(&out)?;
            print_json(&json!({ "trials": plan.n_trials(), "seed": plan.rng_seed, "out": out }));
        }
        StimCommand::Events { codes, side, structure } => {
            let book = code_book(codes.as_deref())?;
            let label = match side {
                SideArg::Left => Side::Left,
                SideArg::Right => Side::Right,
            }
            .label();
            let code = book.pair.for_label(label);
            let duration = TRIAL_DURATION_S as f64;
            let events = derive_events(code, duration, EEG_RATE_HZ)?;
            let out = ctx.out.clone().unwrap_or_else(|| "events.csv".into());
            fs::write(&out, events_to_csv(&events)).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            if let Some(length_s) = structure {
                let l = length_samples(length_s, EEG_RATE_HZ)?;
                let m = structure_for_code(code, duration, EEG_RATE_HZ, l)?;
                let path = out.with_extension("structure.csv");
                fs::write(&path, m.to_csv()).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
            print_json(&json!({ "code": code.name(), "samples": events.n_samples(), "out": out }));
        }
    }
    Ok(())
}

fn simulate(ctx: &Ctx, args: SimulateArgs) -> Result<()> {
    let out = ctx.out("simulate")?;
    let plan = match &args.plan {
        Some(p) => SessionPlan::load(p)?,
        None => make_session_plan(ctx.seed())?,
    };
    let cfg = &ctx.config;
    let mut fm = default_forward_model(
        args.channels.unwrap_or(cfg.n_channels),
        cfg.generation_length_s,
        ctx.seed().wrapping_add(1),
    )?
    .with_snr(args.snr.unwrap_or(cfg.snr));
    fm.overt_gain = cfg.overt_gain;
    fm.covert_gain = cfg.covert_gain;
    fm.lateralization = cfg.lateralization;
    fm.noise_model = cfg.noise_model;
    let pair = default_code_book()?.pair;
    let sim_seed = ctx.seed().wrapping_add(2);
    if args.raw {
        let trials: Vec<_> = plan.trials().take(args.trials.unwrap_or(usize::MAX)).cloned().collect();
        let raw = simulate_raw(&fm, &trials, &pair, 2.0, 5.0, sim_seed)?;
        raw.save(out)?;
        print_json(&json!({ "kind": "raw", "trials": trials.len(), "samples": raw.n_samples(), "out": out }));
    } else {
        let mut dataset = simulate_dataset(&plan, &fm, &pair, sim_seed)?;
        if let Some(n) = args.trials {
            let idx: Vec<usize> = (0..n.min(dataset.trials.len())).collect();
            dataset.trials = dataset.trials.subset(&idx);
        }
        dataset.save(out)?;
        print_json(&json!({ "kind": "epochs", "trials": dataset.trials.len(), "out": out }));
    }
    Ok(())
}

fn preprocess(ctx: &Ctx, args: PreprocessArgs) -> Result<()> {
    let out = ctx.out("preprocess")?;
    let raw = RawRecording::load(&args.data)?;
    let dataset = preprocess_to_dataset(&raw, &PreprocessConfig::default())?;
    dataset.save(out)?;
    print_json(&json!({
        "trials": dataset.trials.len(),
        "samples": dataset.trials.n_samples(),
        "rate_hz": dataset.trials.rate_hz,
        "out": out,
    }));
    Ok(())
}

fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<()> {
    let dataset = Dataset::load(&args.common.data)?;
    let options = ctx.options(&args.common);
    let length_s = args.length.unwrap_or(ctx.config.eval_length_s);
    let l = length_samples(length_s, dataset.trials.rate_hz)?;
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for condition in conditions_of(&dataset, args.common.condition) {
        let subset = dataset.condition(condition);
        let result = cross_validate(&subset, l, &options)?;
        summary.push(json!({
            "condition": condition,
            "length_s": length_s,
            "fold_accuracies": result.fold_accuracies,
            "mean_accuracy": result.mean_accuracy,
            "p_value": result.p_value,
        }));
        if let Some(path) = &args.model {
            let prov = &subset.provenance;
            let structures = StructurePair::new(&prov.codes, prov.duration_s, subset.trials.rate_hz, l)?;
            let model = fit_reconvolution_cca(&subset.trials, &structures, options.ridge)?;
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("model.json");
            model.save(&path.with_file_name(format!("{}_{name}", condition.as_str())))?;
        }
        results.push(result);
    }
    if results.is_empty() {
        return Err(Error::InvalidInput("dataset has no trials of the requested condition".into()));
    }
    if let Some(out) = &ctx.out {
        write_json(out, &results)?;
    }
    print_json(&serde_json::Value::Array(summary));
    Ok(())
}

fn sweep(ctx: &Ctx, args: SweepArgs) -> Result<()> {
    let dataset = Dataset::load(&args.common.data)?;
    let lengths = args.lengths.unwrap_or_else(|| ctx.config.lengths_s.clone());
    let condition: Condition = args.common.condition.unwrap_or(ConditionArg::Covert).into();
    let subset = dataset.condition(condition);
    let results = sweep_response_length(&subset, &lengths, &ctx.options(&args.common))?;
    let out = ctx.out.clone().unwrap_or_else(|| "curve.csv".into());
    write_curve_csv(&out, &results)?;
    let curve: Vec<_> = results
        .iter()
        .map(|r| json!({ "length_s": r.config.length_s, "mean_accuracy": r.mean_accuracy, "p_value": r.p_value }))
        .collect();
    print_json(&json!({ "condition": condition, "curve": curve, "out": out }));
    Ok(())
}

fn report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let series = args
        .curve
        .iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("curve").to_string();
            read_curve_csv(p).map(|rows| (name, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = args
        .svg
        .or_else(|| ctx.out.clone())
        .unwrap_or_else(|| "report.svg".into());
    write_curve_svg(&out, &series)?;
    print_json(&json!({ "series": series.len(), "out": out }));
    Ok(())
}

fn run(ctx: &Ctx, args: RunArgs) -> Result<bool> {
    if let Some(manifest) = &args.manifest {
        let (summary, mismatches) = rerun_manifest(manifest, ctx.out.as_deref())?;
        print_json(&json!({
            "out": summary.out_dir,
            "config_sha256": summary.manifest.config_sha256,
            "reproduced": mismatches.is_empty(),
            "mismatches": mismatches,
        }));
        return Ok(mismatches.is_empty());
    }
    let mut config = ctx.config.clone();
    if let Some(seed) = ctx.seed {
        config.seed = seed;
    }
    let out = ctx.out.clone().or_else(|| config.out_dir.clone()).unwrap_or_else(|| "out".into());
    let summary = run_experiment(&config, Some(&out))?;
    let conditions: Vec<_> = summary
        .conditions
        .iter()
        .map(|c| {
            json!({
                "condition": c.condition,
                "mean_accuracy": c.evaluation.mean_accuracy,
                "p_value": c.evaluation.p_value,
                "sweep": c.sweep.iter().map(|r| r.mean_accuracy).collect::<Vec<_>>(),
            })
        })
        .collect();
    print_json(&json!({
        "out": summary.out_dir,
        "config_sha256": summary.manifest.config_sha256,
        "conditions": conditions,
    }));
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        config,
    };
    match cli.command {
        Command::Codes(c) => codes(&ctx, c)?,
        Command::Stim(c) => stim(&ctx, c)?,
        Command::Simulate(a) => simulate(&ctx, a)?,
        Command::Preprocess(a) => preprocess(&ctx, a)?,
        Command::Evaluate(a) => evaluate(&ctx, a)?,
        Command::Sweep(a) => sweep(&ctx, a)?,
        Command::Report(a) => report(&ctx, a)?,
        Command::Run(a) => return run(&ctx, a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let report = json!({
                "error": {
                    "kind": e.kind(),
                    "stage": e.stage(),
                    "message": e.to_string(),
                    "validation": e.is_validation(),
                }
            });
            eprintln!("{}", serde_json::to_string(&report).expect("serialisable"));
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
