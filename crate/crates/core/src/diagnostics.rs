//! Empirical checks of the drift behaviour of the log-likelihood ratio and of
//! how closely the common-information belief follows the autonomous belief
//! chain.

use rand::Rng;
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::capacity::{belief_update, mutual_information, output_distribution, sample_index, Belief, InputPolicyTable};
use crate::channel::UnifilarChannelSpec;
use crate::error::{Error, Result};
use crate::montecarlo::trial_seed;
use crate::scheme::{episode_rng, ChannelOutput, SchemeConfig, SchemePolicies, StageKind, Status, Transmission};
use crate::simplex::SimplexLattice;

/// `I(bhat)`: the information term of the one-step drift, in bits, with the
/// policy row taken at the grid point nearest to `bhat`.
pub fn info_rate(spec: &UnifilarChannelSpec, bhat: &Belief, policy: &InputPolicyTable) -> f64 {
    let row = policy.row_for(bhat.as_slice());
    mutual_information(spec, bhat.as_slice(), &row)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftStage {
    /// One-step increments minus `I(bhat)` over stage-one steps.
    StageOne,
    /// `window`-step sums right after synchronization, under a correct estimate.
    StageTwo,
}

#[derive(Clone, Debug)]
pub struct DriftOptions {
    pub window: usize,
    /// Reference rate for [`DriftStage::StageTwo`].
    pub ctilde1: f64,
    pub jobs: usize,
}

impl Default for DriftOptions {
    fn default() -> Self {
        DriftOptions {
            window: 50,
            ctilde1: 0.0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub stage: DriftStage,
    pub n_samples: u64,
    pub n_episodes: u64,
    /// Mean of the observed drift samples (increments, or window sums).
    pub mean_drift: f64,
    /// Mean of the matching reference (`I(bhat)`, or `window * C~1`).
    pub mean_reference: f64,
    /// Standard error of `mean_drift - mean_reference`, clustered by episode.
    pub std_error: f64,
    /// Fraction of individual samples falling below their reference.
    pub violation_fraction_of_bound: f64,
    pub passed: bool,
    pub c2_bound: f64,
    pub max_abs_increment: f64,
    /// Steps with `|dL| > C2` (only counted for strictly positive kernels).
    pub c2_violations: u64,
    pub steps_checked: u64,
}

#[derive(Default)]
struct EpisodeDrift {
    n: u64,
    sum_drift: f64,
    sum_ref: f64,
    below: u64,
    max_abs: f64,
    c2_violations: u64,
    steps: u64,
}

fn drift_episode(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    stage: DriftStage,
    opts: &DriftOptions,
    seed: u64,
) -> Result<EpisodeDrift> {
    let c2 = spec.c2_bound();
    let mut out = EpisodeDrift::default();
    let mut rng = episode_rng(seed);
    let w = rng.random_range(0..cfg.messages());
    let mut tx = Transmission::<Float>::new(spec, policies, cfg, w)?;
    let mut v = vec![0.0; spec.ns()];
    // stage two: running window sum after the first sync step
    let mut window: Option<(usize, f64)> = None;
    while tx.status() == Status::Running && tx.time() < cfg.max_steps() {
        for vs in v.iter_mut() {
            *vs = rng.random::<f64>();
        }
        let rec = tx.step(&v, ChannelOutput::Noise(rng.random::<f64>()))?;
        let dl = rec.llr_after - rec.llr_before;
        if dl.is_finite() {
            out.steps += 1;
            out.max_abs = out.max_abs.max(dl.abs());
            if let Some(bound) = c2.finite_value() {
                if dl.abs() > bound + 1e-9 {
                    out.c2_violations += 1;
                }
            }
        }
        match stage {
            DriftStage::StageOne => {
                if rec.stage == StageKind::One && dl.is_finite() {
                    let b = Belief::new(rec.bhat.clone())?;
                    let i = info_rate(spec, &b, &policies.capacity);
                    out.n += 1;
                    out.sum_drift += dl;
                    out.sum_ref += i;
                    out.below += (dl < i) as u64;
                }
            }
            DriftStage::StageTwo => {
                match (&mut window, rec.stage) {
                    (None, StageKind::TwoSync) if tx.estimate() == Some(w) => window = Some((0, 0.0)),
                    (Some((n, sum)), StageKind::Two) if rec.estimate_correct == Some(true) => {
                        *n += 1;
                        *sum += dl;
                        if *n == opts.window {
                            let reference = opts.window as f64 * opts.ctilde1;
                            out.n = 1;
                            out.sum_drift = *sum;
                            out.sum_ref = reference;
                            out.below = (*sum < reference) as u64;
                            break;
                        }
                    }
                    // interrupted window (revert, stop, wrong estimate): discard
                    (Some(_), _) => break,
                    _ => {}
                }
                if tx.estimate().is_none() && window.is_some() {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Collects drift samples over `n_episodes` episodes (trial seeds derived
/// from `seed`). A report passes when the mean excess
/// `drift - reference` is at least `-3` standard errors for
/// [`DriftStage::StageOne`], and within `3` standard errors of zero for
/// [`DriftStage::StageTwo`].
pub fn drift_check(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    stage: DriftStage,
    n_episodes: u64,
    seed: u64,
    opts: &DriftOptions,
) -> Result<DriftReport> {
    cfg.validate()?;
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    if stage == DriftStage::StageTwo && opts.window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per: Vec<EpisodeDrift> = pool.install(|| {
        (0..n_episodes)
            .into_par_iter()
            .map(|i| drift_episode(spec, policies, cfg, stage, opts, trial_seed(seed, i)))
            .collect::<Result<_>>()
    })?;
    let n: u64 = per.iter().map(|e| e.n).sum();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{n} qualifying samples from {n_episodes} episodes"
        )));
    }
    let nf = n as f64;
    let mean_drift = per.iter().map(|e| e.sum_drift).sum::<f64>() / nf;
    let mean_ref = per.iter().map(|e| e.sum_ref).sum::<f64>() / nf;
    let excess = mean_drift - mean_ref;
    // cluster-robust variance of a ratio mean
    let ss: f64 = per
        .iter()
        .map(|e| {
            let r = (e.sum_drift - e.sum_ref) - excess * e.n as f64;
            r * r
        })
        .sum();
    let clusters = per.iter().filter(|e| e.n > 0).count() as f64;
    let std_error = (ss * clusters / (clusters - 1.0).max(1.0)).sqrt() / nf;
    let passed = match stage {
        DriftStage::StageOne => excess >= -3.0 * std_error,
        DriftStage::StageTwo => excess.abs() <= 3.0 * std_error,
    };
    let c2 = spec.c2_bound();
    Ok(DriftReport {
        stage,
        n_samples: n,
        n_episodes,
        mean_drift,
        mean_reference: mean_ref,
        std_error,
        violation_fraction_of_bound: per.iter().map(|e| e.below).sum::<u64>() as f64 / nf,
        passed,
        c2_bound: c2.value(),
        max_abs_increment: per.iter().map(|e| e.max_abs).fold(0.0, f64::max),
        c2_violations: if c2.is_finite() {
            per.iter().map(|e| e.c2_violations).sum()
        } else {
            0
        },
        steps_checked: per.iter().map(|e| e.steps).sum(),
    })
}

/// Appends drift reports to a CSV, writing the header for a new file.
pub fn append_drift_csv(path: &std::path::Path, reports: &[DriftReport]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefMetric {
    /// Total variation between histograms on a simplex lattice with `bins` divisions.
    BinnedTv,
    /// Wasserstein-1 between the laws of `b(0)`; two-state channels only.
    Wasserstein1,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub metric: BeliefMetric,
    pub distance: f64,
    pub n_bhat: u64,
    pub n_b: u64,
    pub episodes: u64,
}

/// Compares stage-one beliefs `bhat` from scheme episodes, restricted to
/// steps with `max Pi < epsilon`, against the autonomous belief chain
/// sampled at the same time indices (restarted per episode).
#[allow(clippy::too_many_arguments)]
pub fn bhat_vs_b_distance(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    epsilon: f64,
    n: u64,
    seed: u64,
    metric: BeliefMetric,
    bins: u32,
) -> Result<DistanceReport> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside (0, 1]")));
    }
    if metric == BeliefMetric::Wasserstein1 && spec.ns() != 2 {
        return Err(Error::InvalidArgument("Wasserstein-1 needs a two-state channel".into()));
    }
    let mut bhat_samples: Vec<Vec<f64>> = Vec::new();
    let mut b_samples: Vec<Vec<f64>> = Vec::new();
    let mut episodes = 0u64;
    let max_episodes = n.max(1) * 10;
    while (bhat_samples.len() as u64) < n && episodes < max_episodes {
        let ep_seed = trial_seed(seed, episodes);
        episodes += 1;
        let mut rng = episode_rng(ep_seed);
        let w = rng.random_range(0..cfg.messages());
        let mut tx = Transmission::<Float>::new(spec, policies, cfg, w)?;
        let mut times = Vec::new();
        let mut v = vec![0.0; spec.ns()];
        while tx.status() == Status::Running && tx.time() < cfg.max_steps() {
            let before_max = tx.max_posterior();
            for vs in v.iter_mut() {
                *vs = rng.random::<f64>();
            }
            let rec = tx.step(&v, ChannelOutput::Noise(rng.random::<f64>()))?;
            if rec.stage != StageKind::One {
                break;
            }
            if before_max < epsilon {
                times.push(rec.t);
                bhat_samples.push(rec.bhat);
            } else {
                break;
            }
        }
        // autonomous chain, own stream
        let mut chain_rng = episode_rng(ep_seed ^ 0x5bd1_e995_0000_0001);
        let mut b = Belief::degenerate(spec.ns(), spec.s1());
        let last = times.last().copied().unwrap_or(0);
        let mut next = 0;
        for t in 1..=last {
            if times.get(next) == Some(&t) {
                b_samples.push(b.as_slice().to_vec());
                next += 1;
            }
            let row = policies.capacity.row_for(b.as_slice());
            let py = output_distribution(spec, b.as_slice(), &row);
            let y = sample_index(&py, chain_rng.random::<f64>());
            b = belief_update(spec, b.as_slice(), y, &row)?;
        }
    }
    if bhat_samples.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} qualifying steps with max posterior below {epsilon}",
            bhat_samples.len()
        )));
    }
    let distance = match metric {
        BeliefMetric::BinnedTv => binned_tv(spec.ns(), bins, &bhat_samples, &b_samples)?,
        BeliefMetric::Wasserstein1 => {
            let a: Vec<f64> = bhat_samples.iter().map(|b| b[0]).collect();
            let c: Vec<f64> = b_samples.iter().map(|b| b[0]).collect();
            wasserstein1(&a, &c)
        }
    };
    Ok(DistanceReport {
        metric,
        distance,
        n_bhat: bhat_samples.len() as u64,
        n_b: b_samples.len() as u64,
        episodes,
    })
}

/// Total variation between the empirical laws of two belief samples after
/// snapping each to the nearest point of a simplex lattice.
pub fn binned_tv(ns: usize, bins: u32, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientSamples("empty belief sample".into()));
    }
    let lattice = SimplexLattice::new(ns, bins.max(1))?;
    let hist = |xs: &[Vec<f64>]| {
        let mut h = vec![0.0; lattice.len()];
        for x in xs {
            h[lattice.nearest(x)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// `integral |F_a - F_b|` for two real samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut points: Vec<f64> = a.iter().chain(&b).copied().collect();
    points.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut total = 0.0;
    for win in points.windows(2) {
        while ia < a.len() && a[ia] <= win[0] {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= win[0] {
            ib += 1;
        }
        total += (ia as f64 / na - ib as f64 / nb).abs() * (win[1] - win[0]);
    }
    total
}
