//! Batches of episodes, summary rows and parameter sweeps.
//!
//! Trial `i` of a batch runs with seed [`trial_seed`]`(master, i)`, so the
//! result of every trial depends only on its index. Summaries are built from
//! integer sufficient statistics and never depend on the worker count.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::UnifilarChannelSpec;
use crate::error::{Error, Result};
use crate::scheme::{run_episode, EpisodeResult, SchemeConfig, SchemePolicies, Variant};
use crate::units::LogBase;

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 13] = [
    "channel",
    "K",
    "pe_target",
    "p0",
    "variant",
    "n_trials",
    "mean_T",
    "ci_halfwidth_T",
    "rbar",
    "exponent",
    "empirical_error_rate",
    "truncation_count",
    "seed",
];

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(master) ^ i)`.
pub fn trial_seed(master: u64, i: u64) -> u64 {
    splitmix64(splitmix64(master) ^ i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TrialPlan {
    Fixed { n: u64 },
    /// Batches of `batch` trials until the 95% half-width of `mean_T` drops
    /// below `rel_tol * mean_T`, or `max_trials` have run.
    Convergence {
        rel_tol: f64,
        batch: u64,
        max_trials: u64,
    },
}

impl TrialPlan {
    pub fn convergence(rel_tol: f64) -> Self {
        TrialPlan::Convergence {
            rel_tol,
            batch: 500,
            max_trials: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrialPlan::Fixed { n: 0 } => Err(Error::InvalidConfig("need at least one trial".into())),
            TrialPlan::Convergence { rel_tol, batch, max_trials }
                if !(rel_tol > 0.0) || batch < 2 || max_trials < batch =>
            {
                Err(Error::InvalidConfig(format!(
                    "bad convergence plan: rel_tol {rel_tol}, batch {batch}, max_trials {max_trials}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Integer sufficient statistics of a set of episodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TrialStats {
    pub n_trials: u64,
    pub completed: u64,
    pub errors: u64,
    pub truncated: u64,
    pub sum_t: u64,
    pub sum_t2: u128,
}

impl TrialStats {
    pub fn add(&mut self, r: &EpisodeResult) {
        self.n_trials += 1;
        if r.truncated {
            self.truncated += 1;
            return;
        }
        self.completed += 1;
        self.errors += r.error as u64;
        self.sum_t += r.t;
        self.sum_t2 += (r.t as u128) * (r.t as u128);
    }

    pub fn merge(&mut self, o: &TrialStats) {
        self.n_trials += o.n_trials;
        self.completed += o.completed;
        self.errors += o.errors;
        self.truncated += o.truncated;
        self.sum_t += o.sum_t;
        self.sum_t2 += o.sum_t2;
    }

    pub fn mean_t(&self) -> f64 {
        self.sum_t as f64 / self.completed as f64
    }

    /// Unbiased sample variance of `T` over completed episodes.
    pub fn var_t(&self) -> f64 {
        let n = self.completed as u128;
        if n < 2 {
            return f64::NAN;
        }
        let s = self.sum_t as u128;
        let num = n * self.sum_t2 - s * s;
        num as f64 / (n * (n - 1)) as f64
    }

    /// 95% normal half-width of `mean_T`.
    pub fn ci_halfwidth(&self) -> f64 {
        1.959_963_984_540_054 * (self.var_t() / self.completed as f64).sqrt()
    }
}

/// One summarized setting. Field order matches [`SWEEP_COLUMNS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub channel: String,
    #[serde(rename = "K")]
    pub k: u32,
    pub pe_target: f64,
    pub p0: f64,
    pub variant: Variant,
    pub n_trials: u64,
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    #[serde(rename = "ci_halfwidth_T")]
    pub ci_halfwidth_t: f64,
    pub rbar: f64,
    pub exponent: f64,
    pub empirical_error_rate: f64,
    pub truncation_count: u64,
    pub seed: u64,
}

impl SweepRow {
    pub fn from_stats(
        channel: &str,
        cfg: &SchemeConfig,
        stats: &TrialStats,
        seed: u64,
        base: LogBase,
    ) -> Result<Self> {
        if stats.completed == 0 {
            return Err(Error::AllTruncated(stats.n_trials as usize));
        }
        let mean_t = stats.mean_t();
        Ok(SweepRow {
            channel: channel.to_string(),
            k: cfg.k,
            pe_target: cfg.pe_target,
            p0: cfg.p0,
            variant: cfg.variant,
            n_trials: stats.n_trials,
            mean_t,
            ci_halfwidth_t: if stats.completed > 1 { stats.ci_halfwidth() } else { 0.0 },
            rbar: base.convert(cfg.k as f64) / mean_t,
            exponent: -base.log(cfg.pe_target) / mean_t,
            empirical_error_rate: stats.errors as f64 / stats.completed as f64,
            truncation_count: stats.truncated,
            seed,
        })
    }

    /// Half-width of the exponent estimate, by the delta method on `mean_T`.
    pub fn exponent_ci(&self) -> f64 {
        self.exponent * self.ci_halfwidth_t / self.mean_t
    }

    /// Identity of the setting, used to skip finished rows on resume.
    fn key(&self) -> (String, u32, String, String, Variant) {
        (
            self.channel.clone(),
            self.k,
            self.pe_target.to_string(),
            self.p0.to_string(),
            self.variant,
        )
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs trials `lo..hi` and returns their results in index order.
pub fn run_range(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    master_seed: u64,
    lo: u64,
    hi: u64,
    jobs: usize,
) -> Result<Vec<EpisodeResult>> {
    pool(jobs)?.install(|| {
        (lo..hi)
            .into_par_iter()
            .map(|i| run_episode(spec, policies, cfg, trial_seed(master_seed, i)))
            .collect()
    })
}

/// Runs a batch of episodes and summarizes it.
pub fn run_trials(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    plan: &TrialPlan,
    master_seed: u64,
    jobs: usize,
    base: LogBase,
) -> Result<SweepRow> {
    let stats = run_trial_stats(spec, policies, cfg, plan, master_seed, jobs)?;
    SweepRow::from_stats(spec.name(), cfg, &stats, master_seed, base)
}

pub fn run_trial_stats(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    plan: &TrialPlan,
    master_seed: u64,
    jobs: usize,
) -> Result<TrialStats> {
    cfg.validate()?;
    plan.validate()?;
    let mut stats = TrialStats::default();
    match *plan {
        TrialPlan::Fixed { n } => {
            for r in run_range(spec, policies, cfg, master_seed, 0, n, jobs)? {
                stats.add(&r);
            }
        }
        TrialPlan::Convergence {
            rel_tol,
            batch,
            max_trials,
        } => {
            let mut done = 0;
            while done < max_trials {
                let hi = (done + batch).min(max_trials);
                for r in run_range(spec, policies, cfg, master_seed, done, hi, jobs)? {
                    stats.add(&r);
                }
                done = hi;
                if stats.completed >= 2 && stats.ci_halfwidth() < rel_tol * stats.mean_t() {
                    break;
                }
            }
        }
    }
    Ok(stats)
}

/// Grid of settings for [`sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(rename = "K")]
    pub k: Vec<u32>,
    pub pe: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            k: vec![10, 20, 30],
            pe: vec![1e-3, 1e-6, 1e-9, 1e-12],
            variants: vec![Variant::TwoStageAlternative],
        }
    }
}

/// Path of the metadata file written next to a sweep CSV.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn read_existing(path: &Path) -> Result<Vec<SweepRow>> {
    let file = File::open(path)?;
    let mut first = String::new();
    BufReader::new(&file).read_line(&mut first)?;
    if first.trim_end() != SWEEP_COLUMNS.join(",") {
        return Err(Error::InvalidConfig(format!(
            "{} exists with a different header",
            path.display()
        )));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Runs every `(K, pe, variant)` combination (in that nesting order) and
/// appends one row per setting to `out`, flushing after each row.
///
/// Rows already present in `out` are kept and skipped, so an interrupted
/// sweep can be resumed. `meta` is written to [`meta_path`]`(out)`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    base_cfg: &SchemeConfig,
    grid: &SweepGrid,
    plan: &TrialPlan,
    master_seed: u64,
    jobs: usize,
    log_base: LogBase,
    out: &Path,
    meta: &serde_json::Value,
) -> Result<Vec<SweepRow>> {
    if grid.k.is_empty() || grid.pe.is_empty() || grid.variants.is_empty() {
        return Err(Error::InvalidConfig("sweep lists must be non-empty".into()));
    }
    let mut rows = if out.exists() && std::fs::metadata(out)?.len() > 0 {
        read_existing(out)?
    } else {
        let mut f = File::create(out)?;
        writeln!(f, "{}", SWEEP_COLUMNS.join(","))?;
        Vec::new()
    };
    std::fs::write(meta_path(out), serde_json::to_string_pretty(meta)? + "\n")?;
    let done: Vec<_> = rows.iter().map(SweepRow::key).collect();
    for &k in &grid.k {
        for &pe in &grid.pe {
            for &variant in &grid.variants {
                let cfg = SchemeConfig {
                    k,
                    pe_target: pe,
                    variant,
                    ..base_cfg.clone()
                };
                let key = (spec.name().to_string(), k, pe.to_string(), cfg.p0.to_string(), variant);
                if done.contains(&key) {
                    continue;
                }
                let row = run_trials(spec, policies, &cfg, plan, master_seed, jobs, log_base)?;
                let file = OpenOptions::new().append(true).open(out)?;
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
                w.serialize(&row)?;
                w.flush()?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
