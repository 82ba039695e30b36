use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leakage_core::agent::RetryPolicy;
use leakage_core::harness::{
    self, BackendKind, Backends, RunConfig, RunDir, RunStatus,
};
use leakage_core::inference::{infer_wtp, InferenceSettings};
use leakage_core::model::{Condition, Design, ExperimentPlan, InferenceVariant, PackSet, Scaffold, Transcript};
use leakage_core::redaction::{redact_dollars, redact_persona};
use leakage_core::stats::{group_cells, write_cell_table, VariantMetrics};
use leakage_core::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "leakage", version, about = "Preference-leakage measurement harness")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an experiment plan and write it as JSON.
    Plan {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the dialogues of a plan into a run directory (resumes if present).
    Run {
        dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also run inference and write the report.
        #[arg(long)]
        pipeline: bool,
    },
    /// Redact one transcript file.
    Redact {
        input: PathBuf,
        #[arg(long, value_parser = parse_variant, default_value = "dollar_redacted")]
        variant: InferenceVariant,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Where to write the redaction report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run inference on a run directory, or on one transcript with --transcript.
    Infer {
        dir: Option<PathBuf>,
        #[arg(long, conflicts_with = "dir")]
        transcript: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Slope, rank and cell statistics for a CSV of cell_id,target,estimate.
    Stats {
        input: PathBuf,
        #[arg(long, default_value_t = leakage_core::stats::DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 20_250_101)]
        seed: u64,
        /// Print the full metrics as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Compute metrics for a run directory and write reports/.
    Report {
        dir: PathBuf,
        #[arg(long)]
        resamples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Append new trial numbers to cells of an existing run and execute them.
    TopUp {
        dir: PathBuf,
        /// Add as many trials as each cell lost.
        #[arg(long, conflicts_with = "cell")]
        lost: bool,
        /// Design cell as condition:cell:variant:scaffold, e.g. verbal:vp_50:1:A.
        #[arg(long, value_parser = parse_cell_key)]
        cell: Vec<harness::CellKey>,
        #[arg(long, default_value_t = 1)]
        count: u32,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Scripted,
    Remote,
}

/// Config file plus flag overrides.
#[derive(Args, Default)]
struct ConfigArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_design, value_delimiter = ',')]
    design: Vec<Design>,
    #[arg(short = 'n', long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_variant, value_delimiter = ',')]
    variants: Vec<InferenceVariant>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    packs: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<KindArg>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Trial id whose buyer calls always fail (repeatable).
    #[arg(long = "inject-failure")]
    inject_failures: Vec<String>,
}

fn parse_design(s: &str) -> Result<Design, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<InferenceVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_cell_key(s: &str) -> Result<harness::CellKey, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [cond, cell, variant, scaffold] = parts[..] else {
        return Err("expected condition:cell:variant:scaffold".into());
    };
    let condition = match cond {
        "verbal" => Condition::Verbal,
        "numeric" => Condition::Numeric,
        "stripped" => Condition::Stripped,
        other => return Err(format!("unknown condition `{other}`")),
    };
    let variant: u8 = variant
        .trim_start_matches('v')
        .parse()
        .map_err(|_| format!("bad variant `{variant}`"))?;
    let scaffold = match scaffold {
        "A" | "a" => Scaffold::A,
        "B" | "b" => Scaffold::B,
        other => return Err(format!("unknown scaffold `{other}`")),
    };
    Ok((condition, cell.to_string(), variant, scaffold))
}

impl ConfigArgs {
    /// Config file (or `fallback`, or defaults) with flags applied on top.
    fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match (&self.config, fallback) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(p)) if p.exists() => RunConfig::load(p)?,
            _ => RunConfig::default(),
        };
        if !self.design.is_empty() {
            cfg.designs = self.design.clone();
        }
        if let Some(n) = self.trials {
            cfg.trials_per_cell = n;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if !self.variants.is_empty() {
            cfg.variants = self.variants.clone();
        }
        if let Some(c) = self.concurrency {
            cfg.concurrency = c;
        }
        if let Some(p) = &self.packs {
            cfg.packs_dir = Some(p.clone());
        }
        if let Some(k) = self.backend {
            cfg.backend.kind = match k {
                KindArg::Scripted => BackendKind::Scripted,
                KindArg::Remote => BackendKind::Remote,
            };
        }
        if let Some(e) = &self.endpoint {
            cfg.backend.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            cfg.backend.model = m.clone();
        }
        if !self.inject_failures.is_empty() {
            cfg.inject_failures = self.inject_failures.clone();
        }
        if cfg.backend.kind == BackendKind::Scripted {
            cfg.retry = RetryPolicy::immediate(cfg.retry.max_retries);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Context {
    cfg: RunConfig,
    packs: Arc<PackSet>,
    backends: Backends,
}

impl Context {
    fn new(cfg: RunConfig) -> Result<Self> {
        let packs = Arc::new(cfg.load_packs()?);
        let backends = Backends::from_config(&cfg, packs.clone())?;
        Ok(Context { cfg, packs, backends })
    }

    fn settings(&self) -> InferenceSettings {
        InferenceSettings {
            ceiling_dollars: self.cfg.ceiling_dollars,
            retry: self.cfg.retry,
        }
    }

    fn plan(&self) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::build_many(
            &self.packs,
            &self.cfg.designs,
            self.cfg.trials_per_cell,
            self.cfg.master_seed,
        )?;
        plan.name = self.cfg.name.clone();
        Ok(plan)
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io { path: p.to_path_buf(), source: e }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io { path: "<stdout>".into(), source: e }),
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run_trials(dir: &RunDir, ctx: &Context, plan: &ExperimentPlan) -> Result<harness::RunManifest> {
    let seeds = harness::fault_seeds(plan, &ctx.cfg.inject_failures)?;
    let backends = ctx.backends.clone().with_buyer_faults(seeds);
    harness::execute(dir, plan, &ctx.packs, &backends, &ctx.cfg)
}

fn print_manifest(m: &harness::RunManifest) {
    println!(
        "{}: {} complete, {} lost, {} pending",
        m.run_id,
        m.count(RunStatus::Complete),
        m.count(RunStatus::Lost),
        m.count(RunStatus::Pending)
    );
}

fn print_report(r: &harness::RunReport) -> Result<()> {
    leakage_core::stats::write_summary_table(io::stdout(), &r.metrics)?;
    for f in &r.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan { cfg, out } => {
            let ctx = Context::new(cfg.resolve(None)?)?;
            let plan = ctx.plan()?;
            write_output(out.as_deref(), &pretty(&plan))?;
            eprintln!("{} trials, digest {}", plan.trials.len(), plan.digest());
        }
        Command::Run { dir, cfg, pipeline } => {
            let dir = RunDir::new(dir);
            let ctx = Context::new(cfg.resolve(Some(&dir.config_path()))?)?;
            let plan = if dir.plan_path().exists() {
                harness::load_plan(&dir)?
            } else {
                ctx.plan()?
            };
            let manifest = run_trials(&dir, &ctx, &plan)?;
            print_manifest(&manifest);
            if pipeline {
                let s = harness::run_inference_pass(
                    &dir,
                    &ctx.cfg.variants,
                    &ctx.packs,
                    &ctx.backends,
                    &ctx.settings(),
                    ctx.cfg.concurrency,
                )?;
                eprintln!("inference: {:?} written, {:?} lost", s.written, s.lost);
                print_report(&harness::report(&dir, &ctx.cfg.bootstrap)?)?;
            }
        }
        Command::Redact { input, variant, cfg, out, report } => {
            let ctx = Context::new(cfg.resolve(None)?)?;
            let text = fs::read_to_string(&input).map_err(|e| Error::Io { path: input.clone(), source: e })?;
            let t = Transcript::parse_marker_text(&text)?;
            let (redacted, rep) = match variant {
                InferenceVariant::Full => {
                    return Err(Error::Validation("nothing to redact for the full variant".into()))
                }
                InferenceVariant::DollarRedacted => redact_dollars(&t, &ctx.packs),
                InferenceVariant::PersonaRedacted => {
                    redact_persona(&t, &*ctx.backends.redactor, &ctx.packs, &ctx.cfg.retry, ctx.cfg.master_seed)?
                }
            };
            let mut body = redacted.to_marker_text();
            body.push('\n');
            write_output(out.as_deref(), &body)?;
            match report {
                Some(p) => write_output(Some(&p), &pretty(&rep))?,
                None => eprintln!(
                    "{} replacements, {} residual violations",
                    rep.replacements,
                    rep.residual_violations.len()
                ),
            }
            if !rep.is_clean() {
                return Err(Error::Data(format!(
                    "redaction left {} violations",
                    rep.residual_violations.len()
                )));
            }
        }
        Command::Infer { dir, transcript, cfg } => match (dir, transcript) {
            (_, Some(path)) => {
                let ctx = Context::new(cfg.resolve(None)?)?;
                let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                let t = Transcript::parse_marker_text(&text)?;
                let variant = ctx.cfg.variants.first().copied().unwrap_or(InferenceVariant::Full);
                let (rep, _) = infer_wtp(&t, variant, &*ctx.backends.inference, &ctx.packs, &ctx.settings(), ctx.cfg.master_seed)?;
                write_output(None, &pretty(&rep))?;
            }
            (Some(dir), None) => {
                let dir = RunDir::new(dir);
                let ctx = Context::new(cfg.resolve(Some(&dir.config_path()))?)?;
                let s = harness::run_inference_pass(
                    &dir,
                    &ctx.cfg.variants,
                    &ctx.packs,
                    &ctx.backends,
                    &ctx.settings(),
                    ctx.cfg.concurrency,
                )?;
                write_output(None, &pretty(&s))?;
            }
            (None, None) => return Err(Error::Validation("give a run directory or --transcript".into())),
        },
        Command::Stats { input, resamples, seed, json } => {
            let mut reader = csv::Reader::from_path(&input)
                .map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
            let mut targets = BTreeMap::new();
            let mut estimates = Vec::new();
            for row in reader.deserialize::<(String, f64, f64)>() {
                let (cell, target, estimate) = row?;
                if let Some(prev) = targets.insert(cell.clone(), target) {
                    if prev != target {
                        return Err(Error::Data(format!("cell {cell} has two targets")));
                    }
                }
                estimates.push((cell, estimate));
            }
            let cells = group_cells(&estimates, &targets)?;
            let m = VariantMetrics::compute(InferenceVariant::Full, &cells, resamples, seed)?;
            if json {
                write_output(None, &pretty(&m))?;
            } else {
                write_cell_table(io::stdout(), &m)?;
                println!(
                    "slope {:.4} [{:.4}, {:.4}]  spearman {}  mae {:.2}  within_25 {:.1}%  n {}",
                    m.slope.slope,
                    m.slope.ci_low,
                    m.slope.ci_high,
                    m.spearman.map_or("undefined".into(), |r| format!("{r:.4}")),
                    m.mae,
                    100.0 * m.within_25,
                    m.n
                );
            }
        }
        Command::Report { dir, resamples, seed } => {
            let dir = RunDir::new(dir);
            let mut boot = if dir.config_path().exists() {
                RunConfig::load(&dir.config_path())?.bootstrap
            } else {
                Default::default()
            };
            if let Some(r) = resamples {
                boot.resamples = r;
            }
            if let Some(s) = seed {
                boot.seed = s;
            }
            print_report(&harness::report(&dir, &boot)?)?;
        }
        Command::TopUp { dir, lost, cell, count, cfg } => {
            let dir = RunDir::new(dir);
            let ctx = Context::new(cfg.resolve(Some(&dir.config_path()))?)?;
            let requests = if lost {
                let plan = harness::load_plan(&dir)?;
                let manifest = harness::RunManifest::load(&dir)?;
                harness::lost_requests(&plan, &manifest)
            } else if cell.is_empty() {
                return Err(Error::Validation("give --lost or at least one --cell".into()));
            } else {
                cell.into_iter().map(|k| (k, count)).collect()
            };
            let seeds = harness::fault_seeds(&harness::load_plan(&dir)?, &ctx.cfg.inject_failures)?;
            let backends = ctx.backends.clone().with_buyer_faults(seeds);
            let (added, manifest) = harness::top_up_run(&dir, &requests, &ctx.packs, &backends, &ctx.cfg)?;
            eprintln!("added {} trials", added.len());
            print_manifest(&manifest);
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Backend => 3,
        ErrorKind::Data => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
