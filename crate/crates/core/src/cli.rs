//! Command-line front end. Every subcommand prints a `key=value` summary
//! (or JSON with `--json`) and writes its machine-readable artifacts, each
//! carrying the effective configuration and seed.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::capacity::{solve_capacity, CapacityResult};
use crate::channel::{validate, ChannelDocument, Family, UnifilarChannelSpec};
use crate::config::{load_config, RunConfig};
use crate::diagnostics::{append_drift_csv, bhat_vs_b_distance, drift_check, BeliefMetric, DriftOptions, DriftStage};
use crate::error::{Error, Result};
use crate::exponent::{solve_ctilde1, ExponentReport};
use crate::montecarlo::{run_trials, sweep, TrialPlan};
use crate::scheme::{run_episode_observed, write_drpm_trace_csv, write_trace_csv, Arithmetic, SchemePolicies, StepRecord, Variant};
use crate::units::LogBase;

#[derive(Parser, Debug)]
#[command(name = "unifeed", version, about = "Feedback coding over unifilar finite-state channels")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report information quantities in nats instead of bits.
    #[arg(long, global = true)]
    pub nats: bool,
    /// Print the machine-readable result on stdout instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ChannelArgs {
    /// Built-in family: trapdoor, chemical, symmetric, asymmetric.
    #[arg(long)]
    pub family: Option<Family>,
    /// Family parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    /// Channel JSON document (explicit kernel or family).
    #[arg(long, conflicts_with = "family")]
    pub channel: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SolverArgs {
    #[arg(long)]
    pub grid_res: Option<f64>,
    #[arg(long)]
    pub action_res: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SchemeArgs {
    #[arg(long = "K")]
    pub k: Option<u32>,
    #[arg(long)]
    pub pe: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    /// one_stage, two_stage_full or two_stage_alternative.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub precision_bits: Option<u32>,
    /// mpfr or log.
    #[arg(long)]
    pub arithmetic: Option<String>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the capacity MDP on a belief grid.
    Capacity {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// JSON result path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Policy table CSV path.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Capacity plus the stage-two exponent constants.
    Bounds {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hypothesis policies CSV (s0, s1, x0, x1).
        #[arg(long)]
        policies_out: Option<PathBuf>,
    },
    /// Run one or more transmission episodes.
    Simulate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 1)]
        episodes: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-step trace CSV of the first episode.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Per-message DRPM CSV of the first episode.
        #[arg(long)]
        drpm_trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over K, Pe and variants, written as CSV.
    Sweep {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long = "K", value_delimiter = ',')]
        k: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        pe: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        precision_bits: Option<u32>,
        /// Fixed number of trials per row (default: run to convergence).
        #[arg(long)]
        trials: Option<u64>,
        /// Relative CI half-width target for convergence mode.
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long, env = "UNIFEED_JOBS")]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical drift checks of the log-likelihood ratio.
    Drift {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// one, two or both.
        #[arg(long, default_value = "both")]
        stage: String,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        window: Option<usize>,
        /// Also compare bhat against the autonomous belief chain.
        #[arg(long)]
        distance: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, env = "UNIFEED_JOBS")]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV the reports are appended to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a channel description.
    Validate {
        #[command(flatten)]
        channel: ChannelArgs,
    },
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

struct Ctx<'a> {
    cfg: RunConfig,
    base: LogBase,
    json: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit(&mut self, summary: &[(&str, String)], value: &serde_json::Value) -> Result<()> {
        if self.json {
            writeln!(self.out, "{}", serde_json::to_string_pretty(value)?)?;
        } else {
            for (k, v) in summary {
                writeln!(self.out, "{k}={v}")?;
            }
        }
        Ok(())
    }
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let base = if cli.nats { LogBase::Nats } else { cfg.units };
    cfg.units = base;
    let mut ctx = Ctx {
        cfg,
        base,
        json: cli.json,
        out: stdout,
        err: stderr,
    };
    match &cli.command {
        Command::Validate { channel } => cmd_validate(&mut ctx, channel),
        Command::Capacity {
            channel,
            solver,
            out,
            policy_out,
        } => {
            apply_channel(&mut ctx.cfg, channel)?;
            apply_solver(&mut ctx.cfg, solver);
            ctx.cfg.validate()?;
            cmd_capacity(&mut ctx, out.as_deref(), policy_out.as_deref())
        }
        Command::Bounds {
            channel,
            solver,
            out,
            policies_out,
        } => {
            apply_channel(&mut ctx.cfg, channel)?;
            apply_solver(&mut ctx.cfg, solver);
            ctx.cfg.validate()?;
            cmd_bounds(&mut ctx, out.as_deref(), policies_out.as_deref())
        }
        Command::Simulate {
            channel,
            solver,
            scheme,
            episodes,
            seed,
            trace,
            drpm_trace,
            out,
        } => {
            apply_channel(&mut ctx.cfg, channel)?;
            apply_solver(&mut ctx.cfg, solver);
            apply_scheme(&mut ctx.cfg, scheme)?;
            if let Some(s) = seed {
                ctx.cfg.seed = *s;
            }
            ctx.cfg.validate()?;
            if *episodes == 0 {
                return Err(Error::InvalidArgument("episodes must be positive".into()));
            }
            cmd_simulate(&mut ctx, *episodes, trace.as_deref(), drpm_trace.as_deref(), out.as_deref())
        }
        Command::Sweep {
            channel,
            solver,
            k,
            pe,
            variants,
            p0,
            precision_bits,
            trials,
            rel_tol,
            jobs,
            seed,
            out,
        } => {
            apply_channel(&mut ctx.cfg, channel)?;
            apply_solver(&mut ctx.cfg, solver);
            let c = &mut ctx.cfg;
            if !k.is_empty() {
                c.sweep.k = k.clone();
            }
            if !pe.is_empty() {
                c.sweep.pe = pe.clone();
            }
            if !variants.is_empty() {
                c.sweep.variants = variants.clone();
            }
            if let Some(v) = p0 {
                c.scheme.p0 = *v;
            }
            if let Some(v) = precision_bits {
                c.scheme.precision_bits = *v;
            }
            match (trials, rel_tol) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidArgument("--trials and --rel-tol are exclusive".into()))
                }
                (Some(n), None) => c.trials = TrialPlan::Fixed { n: *n },
                (None, Some(r)) => c.trials = TrialPlan::convergence(*r),
                (None, None) => {}
            }
            if jobs.is_some() {
                c.jobs = *jobs;
            }
            if let Some(s) = seed {
                c.seed = *s;
            }
            if let Some(o) = out {
                c.out = Some(o.display().to_string());
            }
            // validate() checks every (K, pe) pair against the scheme
            c.validate()?;
            cmd_sweep(&mut ctx)
        }
        Command::Drift {
            channel,
            solver,
            scheme,
            stage,
            episodes,
            window,
            distance,
            epsilon,
            jobs,
            seed,
            out,
        } => {
            apply_channel(&mut ctx.cfg, channel)?;
            apply_solver(&mut ctx.cfg, solver);
            apply_scheme(&mut ctx.cfg, scheme)?;
            let c = &mut ctx.cfg;
            if let Some(v) = episodes {
                c.drift.episodes = *v;
            }
            if let Some(v) = window {
                c.drift.window = *v;
            }
            if let Some(v) = epsilon {
                c.drift.epsilon = *v;
            }
            if jobs.is_some() {
                c.jobs = *jobs;
            }
            if let Some(s) = seed {
                c.seed = *s;
            }
            c.validate()?;
            let stages = match stage.to_ascii_lowercase().as_str() {
                "one" | "1" => vec![DriftStage::StageOne],
                "two" | "2" => vec![DriftStage::StageTwo],
                "both" => vec![DriftStage::StageOne, DriftStage::StageTwo],
                other => return Err(Error::InvalidArgument(format!("unknown stage {other:?}"))),
            };
            cmd_drift(&mut ctx, &stages, *distance, out.as_deref())
        }
    }
}

fn apply_channel(cfg: &mut RunConfig, a: &ChannelArgs) -> Result<()> {
    if let Some(p) = &a.channel {
        cfg.channel = ChannelDocument::from_json(&std::fs::read_to_string(p)?)?;
    } else if let Some(f) = a.family {
        cfg.channel = ChannelDocument::Builtin {
            family: f,
            params: a.params.clone(),
        };
    } else if !a.params.is_empty() {
        return Err(Error::InvalidArgument("--params needs --family".into()));
    }
    Ok(())
}

fn apply_solver(cfg: &mut RunConfig, a: &SolverArgs) {
    let c = &mut cfg.capacity;
    if let Some(v) = a.grid_res {
        c.grid_res = v;
    }
    if let Some(v) = a.action_res {
        c.action_res = v;
    }
    if let Some(v) = a.tol {
        c.tol = v;
    }
    if let Some(v) = a.max_iter {
        c.max_iter = v;
    }
}

fn apply_scheme(cfg: &mut RunConfig, a: &SchemeArgs) -> Result<()> {
    let s = &mut cfg.scheme;
    if let Some(v) = a.k {
        s.k = v;
    }
    if let Some(v) = a.pe {
        s.pe_target = v;
    }
    if let Some(v) = a.p0 {
        s.p0 = v;
    }
    if let Some(v) = a.variant {
        s.variant = v;
    }
    if let Some(v) = a.precision_bits {
        s.precision_bits = v;
    }
    if let Some(v) = a.max_steps {
        s.max_steps = Some(v);
    }
    if let Some(a) = &a.arithmetic {
        s.arithmetic = match a.to_ascii_lowercase().as_str() {
            "mpfr" => Arithmetic::Mpfr,
            "log" | "log_domain" | "logdomain" => Arithmetic::LogDomain,
            other => return Err(Error::InvalidArgument(format!("unknown arithmetic {other:?}"))),
        };
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(value)?)?;
    f.flush()?;
    Ok(())
}

fn ext(v: f64, base: LogBase) -> serde_json::Value {
    if v.is_infinite() {
        json!("inf")
    } else {
        json!(base.convert(v))
    }
}

fn cmd_validate(ctx: &mut Ctx, a: &ChannelArgs) -> Result<i32> {
    apply_channel(&mut ctx.cfg, a)?;
    let report = validate(&ctx.cfg.channel);
    let value = serde_json::to_value(&report)?;
    let mut summary = vec![
        ("channel", report.name.clone()),
        ("valid", report.valid.to_string()),
        ("strictly_positive", report.strictly_positive.to_string()),
    ];
    let details: Vec<String> = report.violations.iter().map(|v| format!("{v:?}")).collect();
    if !details.is_empty() {
        summary.push(("violations", details.join("; ")));
    }
    ctx.emit(&summary, &value)?;
    if report.valid {
        Ok(0)
    } else {
        Ok(Error::InvalidChannel(String::new()).exit_code())
    }
}

fn solve_cap(ctx: &Ctx, spec: &UnifilarChannelSpec) -> Result<CapacityResult> {
    let cap = solve_capacity(spec, &ctx.cfg.capacity)?;
    Ok(cap)
}

fn cmd_capacity(ctx: &mut Ctx, out: Option<&Path>, policy_out: Option<&Path>) -> Result<i32> {
    let spec = ctx.cfg.channel.build()?;
    let cap = solve_cap(ctx, &spec)?;
    if !cap.converged {
        writeln!(ctx.err, "warning: capacity iteration stopped at max_iter without meeting tol")?;
    }
    let b = ctx.base;
    let value = json!({
        "channel": spec.name(),
        "C": b.convert(cap.capacity),
        "lower": b.convert(cap.lower),
        "upper": b.convert(cap.upper),
        "grid_res": cap.options.grid_res,
        "action_res": cap.options.action_res,
        "residual": b.convert(cap.residual),
        "iterations": cap.iterations,
        "converged": cap.converged,
        "strictly_positive": cap.strictly_positive,
        "units": b,
        "config": ctx.cfg.to_value(),
    });
    if let Some(p) = out {
        write_json(p, &value)?;
    }
    if let Some(p) = policy_out {
        let mut f = create(p)?;
        cap.policy.write_csv(&mut f)?;
        f.flush()?;
    }
    ctx.emit(
        &[
            ("channel", spec.name().to_string()),
            ("C", b.convert(cap.capacity).to_string()),
            ("residual", b.convert(cap.residual).to_string()),
            ("iterations", cap.iterations.to_string()),
            ("converged", cap.converged.to_string()),
        ],
        &value,
    )?;
    Ok(0)
}

fn solve_bounds(ctx: &mut Ctx, spec: &UnifilarChannelSpec) -> Result<(CapacityResult, ExponentReport)> {
    let cap = solve_cap(ctx, spec)?;
    let rep = solve_ctilde1(spec, &ctx.cfg.exponent)?.with_capacity(cap.capacity);
    if rep.dominance_flag == Some(false) {
        writeln!(
            ctx.err,
            "warning: C~1* = {} is below C = {}; the stage-two exponent argument does not apply",
            rep.ctilde1_star, cap.capacity
        )?;
    }
    Ok((cap, rep))
}

fn cmd_bounds(ctx: &mut Ctx, out: Option<&Path>, policies_out: Option<&Path>) -> Result<i32> {
    let spec = ctx.cfg.channel.build()?;
    let (cap, rep) = solve_bounds(ctx, &spec)?;
    let b = ctx.base;
    let value = json!({
        "channel": spec.name(),
        "C": b.convert(cap.capacity),
        "ctilde1": ext(rep.ctilde1.value(), b),
        "ctilde1_star": ext(rep.ctilde1_star.value(), b),
        "dominance_flag": rep.dominance_flag,
        "star_exceeds_ctilde1": rep.star_exceeds_ctilde1,
        "sustained_infinite": rep.sustained_infinite,
        "per_initial_state_gains": rep.per_initial_state_gains.iter().map(|g| ext(g.value(), b)).collect::<Vec<_>>(),
        "policies": rep.policies,
        "converged": rep.converged && cap.converged,
        "units": b,
        "config": ctx.cfg.to_value(),
    });
    if let Some(p) = out {
        write_json(p, &value)?;
    }
    if let Some(p) = policies_out {
        let mut f = create(p)?;
        rep.policies.write_csv(&mut f)?;
        f.flush()?;
    }
    let show = |v: f64| if v.is_infinite() { "inf".to_string() } else { b.convert(v).to_string() };
    ctx.emit(
        &[
            ("channel", spec.name().to_string()),
            ("C", show(cap.capacity)),
            ("ctilde1", show(rep.ctilde1.value())),
            ("ctilde1_star", show(rep.ctilde1_star.value())),
            (
                "dominance_flag",
                rep.dominance_flag.map(|f| f.to_string()).unwrap_or_default(),
            ),
        ],
        &value,
    )?;
    Ok(0)
}

fn policies_for(ctx: &mut Ctx, spec: &UnifilarChannelSpec) -> Result<(CapacityResult, ExponentReport, SchemePolicies)> {
    let (cap, rep) = solve_bounds(ctx, spec)?;
    let pols = SchemePolicies::new(spec, cap.policy.clone(), rep.policies.clone())?;
    Ok((cap, rep, pols))
}

fn cmd_simulate(
    ctx: &mut Ctx,
    episodes: u64,
    trace: Option<&Path>,
    drpm_trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<i32> {
    let spec = ctx.cfg.channel.build()?;
    let (_, _, pols) = policies_for(ctx, &spec)?;
    let cfg = ctx.cfg.scheme.clone();
    let b = ctx.base;
    let mut results = Vec::new();
    let mut records: Vec<StepRecord> = Vec::new();
    for i in 0..episodes {
        let seed = crate::montecarlo::trial_seed(ctx.cfg.seed, i);
        let keep = i == 0 && (trace.is_some() || drpm_trace.is_some());
        let mut obs = |r: &StepRecord| {
            if keep {
                records.push(r.clone());
            }
        };
        results.push(run_episode_observed(&spec, &pols, &cfg, seed, &mut obs)?);
    }
    if b == LogBase::Nats {
        for r in records.iter_mut() {
            r.llr_before = b.convert(r.llr_before);
            r.llr_after = b.convert(r.llr_after);
        }
    }
    if let Some(p) = trace {
        let mut f = create(p)?;
        write_trace_csv(&records, &mut f)?;
        f.flush()?;
    }
    if let Some(p) = drpm_trace {
        let mut f = create(p)?;
        write_drpm_trace_csv(&records, &mut f)?;
        f.flush()?;
    }
    let n = results.len() as f64;
    let mean_t = results.iter().map(|r| r.t as f64).sum::<f64>() / n;
    let errors = results.iter().filter(|r| r.error).count();
    let truncated = results.iter().filter(|r| r.truncated).count();
    let value = json!({
        "channel": spec.name(),
        "episodes": results,
        "mean_T": mean_t,
        "errors": errors,
        "truncated": truncated,
        "seed": ctx.cfg.seed,
        "config": ctx.cfg.to_value(),
    });
    if let Some(p) = out {
        write_json(p, &value)?;
    }
    let mut summary = vec![
        ("channel", spec.name().to_string()),
        ("episodes", results.len().to_string()),
        ("mean_T", mean_t.to_string()),
        ("errors", errors.to_string()),
        ("truncated", truncated.to_string()),
    ];
    if results.len() == 1 {
        let r = &results[0];
        summary.push(("w", r.w.to_string()));
        summary.push(("decoded", r.decoded.to_string()));
        summary.push(("T", r.t.to_string()));
    }
    ctx.emit(&summary, &value)?;
    Ok(0)
}

fn cmd_sweep(ctx: &mut Ctx) -> Result<i32> {
    let spec = ctx.cfg.channel.build()?;
    let (_, _, pols) = policies_for(ctx, &spec)?;
    let jobs = ctx.cfg.effective_jobs();
    let meta = json!({ "config": ctx.cfg.to_value(), "master_seed": ctx.cfg.seed });
    let rows = match &ctx.cfg.out {
        Some(out) => sweep(
            &spec,
            &pols,
            &ctx.cfg.scheme,
            &ctx.cfg.sweep,
            &ctx.cfg.trials,
            ctx.cfg.seed,
            jobs,
            ctx.base,
            Path::new(out),
            &meta,
        )?,
        None => {
            let mut rows = Vec::new();
            for &variant in &ctx.cfg.sweep.variants {
                for &k in &ctx.cfg.sweep.k {
                    for &pe in &ctx.cfg.sweep.pe {
                        let mut c = ctx.cfg.scheme.clone();
                        c.k = k;
                        c.pe_target = pe;
                        c.variant = variant;
                        rows.push(run_trials(&spec, &pols, &c, &ctx.cfg.trials, ctx.cfg.seed, jobs, ctx.base)?);
                    }
                }
            }
            rows
        }
    };
    if ctx.json {
        writeln!(ctx.out, "{}", serde_json::to_string_pretty(&json!({ "rows": rows, "meta": meta }))?)?;
    } else {
        if ctx.cfg.out.is_none() {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            ctx.out.write_all(&bytes)?;
        }
        writeln!(ctx.out, "rows={}", rows.len())?;
        if let Some(o) = &ctx.cfg.out {
            writeln!(ctx.out, "csv={o}")?;
            writeln!(ctx.out, "meta={}", crate::montecarlo::meta_path(Path::new(o)).display())?;
        }
    }
    Ok(0)
}

fn cmd_drift(ctx: &mut Ctx, stages: &[DriftStage], distance: bool, out: Option<&Path>) -> Result<i32> {
    let spec = ctx.cfg.channel.build()?;
    let (_, rep, pols) = policies_for(ctx, &spec)?;
    let d = ctx.cfg.drift.clone();
    let opts = DriftOptions {
        window: d.window,
        ctilde1: rep.ctilde1.value(),
        jobs: ctx.cfg.effective_jobs(),
    };
    let mut reports = Vec::new();
    for &stage in stages {
        let mut cfg = ctx.cfg.scheme.clone();
        if stage == DriftStage::StageTwo {
            if rep.ctilde1.is_infinite() {
                writeln!(ctx.err, "warning: C~1 is infinite; skipping the stage-two window check")?;
                continue;
            }
            cfg.variant = Variant::TwoStageAlternative;
            cfg.p0 = d.p0;
            cfg.pe_target = d.pe_target;
        }
        reports.push(drift_check(&spec, &pols, &cfg, stage, d.episodes, ctx.cfg.seed, &opts)?);
    }
    let dist = if distance {
        let mut cfg = ctx.cfg.scheme.clone();
        cfg.variant = Variant::OneStage;
        let metric = if spec.ns() == 2 {
            BeliefMetric::Wasserstein1
        } else {
            BeliefMetric::BinnedTv
        };
        let tv = bhat_vs_b_distance(&spec, &pols, &cfg, d.epsilon, d.distance_samples, ctx.cfg.seed, BeliefMetric::BinnedTv, d.bins)?;
        let w1 = if metric == BeliefMetric::Wasserstein1 {
            Some(bhat_vs_b_distance(&spec, &pols, &cfg, d.epsilon, d.distance_samples, ctx.cfg.seed, metric, d.bins)?)
        } else {
            None
        };
        Some((tv, w1))
    } else {
        None
    };
    if let Some(p) = out {
        append_drift_csv(p, &reports)?;
    }
    let value = json!({
        "channel": spec.name(),
        "reports": reports,
        "distance": dist.as_ref().map(|(tv, w1)| json!({"binned_tv": tv, "wasserstein1": w1})),
        "seed": ctx.cfg.seed,
        "units": "bits",
        "config": ctx.cfg.to_value(),
    });
    let mut summary = vec![("channel", spec.name().to_string())];
    let mut lines = Vec::new();
    for r in &reports {
        let tag = match r.stage {
            DriftStage::StageOne => "stage_one",
            DriftStage::StageTwo => "stage_two",
        };
        lines.push((
            tag,
            format!(
                "mean_drift={:.6} reference={:.6} se={:.6} n={} passed={} c2_violations={}",
                r.mean_drift, r.mean_reference, r.std_error, r.n_samples, r.passed, r.c2_violations
            ),
        ));
    }
    summary.extend(lines);
    if let Some((tv, w1)) = &dist {
        summary.push(("binned_tv", format!("{:.6} (n={})", tv.distance, tv.n_bhat)));
        if let Some(w) = w1 {
            summary.push(("wasserstein1", format!("{:.6}", w.distance)));
        }
    }
    ctx.emit(&summary, &value)?;
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { 1 })
}
