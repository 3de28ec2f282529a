//! The variable-length two-stage transmission scheme.
//!
//! The posterior over `M = 2^K` messages is stored as runs of consecutive
//! messages that share a mass and a hypothesized channel state. DRPM splits
//! a run into at most `|X|` pieces per step, so the number of runs stays
//! small and `K = 30` is as cheap as `K = 10`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::capacity::{sample_index, InputPolicyTable};
use crate::channel::{SyncInput, UnifilarChannelSpec};
use crate::encoding::{batch_counts, belief_f64, cumulative, pmf_to_real, DrpmTrace, SimplifiedAdapter, StageTwoPolicy};
use crate::error::{Error, Result};
use crate::exponent::HypothesisPolicies;
use crate::real::{decimal_repr, LogF64, Real};
use crate::units::LogBase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    OneStage,
    TwoStageFull,
    TwoStageAlternative,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::OneStage => "one_stage",
            Variant::TwoStageFull => "two_stage_full",
            Variant::TwoStageAlternative => "two_stage_alternative",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "one_stage" | "one" => Ok(Variant::OneStage),
            "two_stage_full" | "full" => Ok(Variant::TwoStageFull),
            "two_stage_alternative" | "alternative" | "alt" => Ok(Variant::TwoStageAlternative),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// Posterior arithmetic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    /// MPFR floats with `precision_bits` of mantissa.
    #[default]
    Mpfr,
    /// Log-domain doubles; for quick runs only.
    LogDomain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(rename = "K")]
    pub k: u32,
    pub pe_target: f64,
    pub p0: f64,
    pub variant: Variant,
    pub precision_bits: u32,
    /// Defaults to `2000 * K`.
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub arithmetic: Arithmetic,
    #[serde(default)]
    pub record_llr: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            k: 10,
            pe_target: 1e-3,
            p0: 0.9,
            variant: Variant::TwoStageAlternative,
            precision_bits: 256,
            max_steps: None,
            arithmetic: Arithmetic::Mpfr,
            record_llr: false,
        }
    }
}

impl SchemeConfig {
    pub fn new(k: u32, pe_target: f64, variant: Variant) -> Self {
        SchemeConfig {
            k,
            pe_target,
            variant,
            ..Default::default()
        }
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps.unwrap_or(2000 * self.k as u64)
    }

    pub fn messages(&self) -> u64 {
        1u64 << self.k
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k == 0 || self.k > 62 {
            return bad(format!("K = {} outside 1..=62", self.k));
        }
        if !(self.pe_target > 0.0 && self.pe_target < 1.0) {
            return bad(format!("pe_target = {} outside (0, 1)", self.pe_target));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return bad(format!("p0 = {} outside (0, 1)", self.p0));
        }
        if self.p0 >= 1.0 - self.pe_target {
            return bad(format!(
                "p0 = {} must be below 1 - pe_target = {}",
                self.p0,
                1.0 - self.pe_target
            ));
        }
        if self.precision_bits < 32 {
            return bad(format!("precision_bits = {} below 32", self.precision_bits));
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }
}

/// Everything the encoders need besides the channel.
#[derive(Clone)]
pub struct SchemePolicies {
    pub capacity: InputPolicyTable,
    pub hypothesis: HypothesisPolicies,
    pub stage_two: Arc<dyn StageTwoPolicy>,
    pub sync: Option<SyncInput>,
}

impl fmt::Debug for SchemePolicies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemePolicies")
            .field("hypothesis", &self.hypothesis)
            .field("sync", &self.sync)
            .finish_non_exhaustive()
    }
}

impl SchemePolicies {
    /// Full-mode stage two uses [`SimplifiedAdapter`] unless replaced with
    /// [`SchemePolicies::with_stage_two`].
    pub fn new(
        spec: &UnifilarChannelSpec,
        capacity: InputPolicyTable,
        hypothesis: HypothesisPolicies,
    ) -> Result<Self> {
        if capacity.ns() != spec.ns() || capacity.nx() != spec.nx() {
            return Err(Error::InvalidArgument("capacity policy does not fit the channel".into()));
        }
        hypothesis.check(spec)?;
        let stage_two = Arc::new(SimplifiedAdapter::new(hypothesis.clone(), spec.nx()));
        Ok(SchemePolicies {
            capacity,
            hypothesis,
            stage_two,
            sync: spec.sync_input(),
        })
    }

    pub fn with_stage_two(mut self, policy: Arc<dyn StageTwoPolicy>) -> Self {
        self.stage_two = policy;
        self
    }
}

/// Outcome of one transmission.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeResult {
    #[serde(rename = "T")]
    pub t: u64,
    pub decoded: u64,
    pub w: u64,
    pub error: bool,
    pub stage2_entries: u32,
    pub reverted: u32,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llr_trace: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    One,
    TwoSync,
    Two,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::One => "one",
            StageKind::TwoSync => "sync",
            StageKind::Two => "two",
        }
    }
}

/// What happened during one channel use.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// 1-based channel use.
    pub t: u64,
    pub stage: StageKind,
    /// In stage two: whether the estimate equals the true message.
    pub estimate_correct: Option<bool>,
    pub state: usize,
    pub x: usize,
    pub y: usize,
    /// Stage-one state belief before the step.
    pub bhat: Vec<f64>,
    /// True-message log-likelihood ratio (bits) before and after.
    pub llr_before: f64,
    pub llr_after: f64,
    pub max_pi: f64,
    /// Geometry of the true message's DRPM draw, when one was made.
    pub drpm: Option<DrpmTrace>,
}

/// Source of the channel output for a step.
#[derive(Clone, Copy, Debug)]
pub enum ChannelOutput {
    /// Inverse-CDF draw from `Q(.|x, S_t)`.
    Noise(f64),
    /// A prescribed output, which must have positive probability.
    Forced(usize),
}

/// Runs paired with the input their messages send.
type Pieces<R> = Vec<(Run<R>, usize)>;

#[derive(Clone, Debug)]
struct Run<R> {
    start: u64,
    len: u64,
    mass: R,
    state: usize,
}

impl<R> Run<R> {
    fn end(&self) -> u64 {
        self.start + self.len
    }

    fn contains(&self, m: u64) -> bool {
        self.start <= m && m < self.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    One,
    Two { w_hat: u64, sync_pending: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Running,
    Stopped { decoded: u64 },
}

fn same<R: PartialOrd>(a: &R, b: &R) -> bool {
    a.partial_cmp(b) == Some(Ordering::Equal)
}

/// A transmission in progress, as seen by both ends.
pub struct Transmission<'a, R: Real> {
    spec: &'a UnifilarChannelSpec,
    policies: &'a SchemePolicies,
    cfg: SchemeConfig,
    prec: u32,
    kernel: Vec<R>,
    pe: R,
    p0: R,
    runs: Vec<Run<R>>,
    w: u64,
    state: usize,
    stage: Stage,
    status: Status,
    t: u64,
    stage2_entries: u32,
    reverted: u32,
    exhausted: bool,
}

impl<'a, R: Real> Transmission<'a, R> {
    pub fn new(
        spec: &'a UnifilarChannelSpec,
        policies: &'a SchemePolicies,
        cfg: &SchemeConfig,
        w: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if w >= cfg.messages() {
            return Err(Error::IndexOutOfRange(format!("message {w} of {}", cfg.messages())));
        }
        if cfg.variant == Variant::TwoStageAlternative && policies.sync.is_none() {
            return Err(Error::MissingSyncInput);
        }
        let prec = cfg.precision_bits;
        let (nx, ny, ns) = (spec.nx(), spec.ny(), spec.ns());
        let mut kernel = Vec::with_capacity(nx * ns * ny);
        for x in 0..nx {
            for s in 0..ns {
                for y in 0..ny {
                    kernel.push(R::from_decimal(&spec.q_decimal(y, x, s), prec));
                }
            }
        }
        let m = cfg.messages();
        let mut mass = R::one_prec(prec);
        mass.div_assign_ref(&R::from_f64(m as f64, prec));
        let mut tx = Transmission {
            spec,
            policies,
            cfg: cfg.clone(),
            prec,
            kernel,
            pe: R::from_decimal(&decimal_repr(cfg.pe_target), prec),
            p0: R::from_decimal(&decimal_repr(cfg.p0), prec),
            runs: vec![Run {
                start: 0,
                len: m,
                mass,
                state: spec.s1(),
            }],
            w,
            state: spec.s1(),
            stage: Stage::One,
            status: Status::Running,
            t: 0,
            stage2_entries: 0,
            reverted: 0,
            exhausted: false,
        };
        tx.transitions();
        Ok(tx)
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn stage2_entries(&self) -> u32 {
        self.stage2_entries
    }

    pub fn reverted(&self) -> u32 {
        self.reverted
    }

    /// Posterior mass ran out at working precision.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn channel_state(&self) -> usize {
        self.state
    }

    /// Current estimate in stage two.
    pub fn estimate(&self) -> Option<u64> {
        match self.stage {
            Stage::Two { w_hat, .. } => Some(w_hat),
            Stage::One => None,
        }
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// Largest single-message posterior mass.
    pub fn max_posterior(&self) -> f64 {
        self.argmax().1.to_f64()
    }

    fn run_index(&self, m: u64) -> usize {
        self.runs.partition_point(|r| r.start <= m) - 1
    }

    pub fn mass(&self, m: u64) -> &R {
        &self.runs[self.run_index(m)].mass
    }

    pub fn message_state(&self, m: u64) -> usize {
        self.runs[self.run_index(m)].state
    }

    /// `sum_{j != m} Pi(j)`, accumulated without cancellation.
    pub fn residual(&self, m: u64) -> R {
        let mut acc = R::zero_prec(self.prec);
        for r in &self.runs {
            let n = if r.contains(m) { r.len - 1 } else { r.len };
            if n > 0 && !r.mass.is_nil() {
                acc.add_assign_ref(&r.mass.mul_u64(n));
            }
        }
        acc
    }

    /// Log-likelihood ratio of message `m` in bits; `±inf` at the boundary.
    pub fn llr_of(&self, m: u64) -> f64 {
        self.mass(m).log2() - self.residual(m).log2()
    }

    /// Dense posterior; only sensible for small `M`.
    pub fn posterior_dense(&self) -> Vec<R> {
        self.runs
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.mass.clone(), r.len as usize))
            .collect()
    }

    pub fn states_dense(&self) -> Vec<usize> {
        self.runs
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.state, r.len as usize))
            .collect()
    }

    /// Largest posterior mass and its smallest index.
    fn argmax(&self) -> (u64, R) {
        let mut best = 0;
        for (i, r) in self.runs.iter().enumerate() {
            if r.mass > self.runs[best].mass {
                best = i;
            }
        }
        (self.runs[best].start, self.runs[best].mass.clone())
    }

    /// Unnormalized per-state pool masses, skipping message `skip`.
    fn pools(&self, skip: Option<u64>) -> Vec<R> {
        let mut z = vec![R::zero_prec(self.prec); self.spec.ns()];
        for r in &self.runs {
            let n = match skip {
                Some(m) if r.contains(m) => r.len - 1,
                _ => r.len,
            };
            if n > 0 && !r.mass.is_nil() {
                z[r.state].add_assign_ref(&r.mass.mul_u64(n));
            }
        }
        z
    }

    /// Stage-one belief `bhat` as `f64`.
    pub fn bhat(&self) -> Vec<f64> {
        belief_f64(&self.pools(None))
    }

    fn split_at(&mut self, m: u64) {
        let i = self.run_index(m);
        let r = self.runs[i].clone();
        if r.len == 1 {
            return;
        }
        let mut pieces = Vec::with_capacity(3);
        if m > r.start {
            pieces.push(Run { start: r.start, len: m - r.start, ..r.clone() });
        }
        pieces.push(Run { start: m, len: 1, ..r.clone() });
        if m + 1 < r.end() {
            pieces.push(Run { start: m + 1, len: r.end() - m - 1, ..r });
        }
        self.runs.splice(i..=i, pieces);
    }

    /// DRPM over the pool of messages other than `skip`, with per-state input
    /// pmfs `pmfs[s]`; pushes `(run, input)` pieces in index order.
    fn drpm_pieces(
        &self,
        v: &[R],
        pmfs: &[Vec<f64>],
        skip: Option<u64>,
        fixed: Option<usize>,
        out: &mut Vec<(Run<R>, usize)>,
        trace: &mut Option<DrpmTrace>,
    ) {
        let z = self.pools(skip);
        let cums: Vec<Vec<R>> = pmfs
            .iter()
            .map(|p| cumulative(&pmf_to_real::<R>(p, self.prec)))
            .collect();
        let mut c = vec![R::zero_prec(self.prec); self.spec.ns()];
        for r in &self.runs {
            if skip.is_some_and(|m| r.contains(m)) {
                // estimate is a singleton in stage two
                out.push((r.clone(), fixed.expect("input for the skipped message")));
                continue;
            }
            let s = r.state;
            let counts = batch_counts(&c[s], &r.mass, r.len, &z[s], &cums[s], &v[s]);
            let mut lo = 0;
            for (x, &hi) in counts.iter().enumerate() {
                if hi > lo {
                    out.push((
                        Run {
                            start: r.start + lo,
                            len: hi - lo,
                            mass: r.mass.clone(),
                            state: s,
                        },
                        x,
                    ));
                    if r.contains(self.w) && (lo..hi).contains(&(self.w - r.start)) {
                        *trace = Some(self.trace_for(r, &c[s], &z[s], &cums[s], &v[s], x));
                    }
                }
                lo = hi;
            }
            if !r.mass.is_nil() {
                c[s].add_assign_ref(&r.mass.mul_u64(r.len));
            }
        }
    }

    fn trace_for(&self, r: &Run<R>, c: &R, z: &R, cum: &[R], v: &R, x: usize) -> DrpmTrace {
        let k = self.w - r.start;
        let zf = z.to_f64();
        let lo = c.add_ref(&r.mass.mul_u64(k));
        let hi = lo.add_ref(&r.mass);
        let u = lo.add_ref(&r.mass.mul_ref(v));
        let nx = cum.len();
        DrpmTrace {
            w: self.w as usize,
            u: u.to_f64() / zf,
            message_interval: (lo.to_f64() / zf, hi.to_f64() / zf),
            input_interval: (
                if x == 0 { 0.0 } else { cum[x - 1].to_f64() },
                if x + 1 == nx { 1.0 } else { cum[x].to_f64() },
            ),
            x,
        }
    }

    /// Inputs of every message for this step, as run pieces.
    fn assign(&self, v: &[R]) -> (StageKind, Pieces<R>, Option<DrpmTrace>) {
        let mut out = Vec::with_capacity(self.runs.len() + 4);
        let mut trace = None;
        let ns = self.spec.ns();
        match self.stage {
            Stage::One => {
                let row = self.policies.capacity.row_for(&self.bhat());
                let pmfs: Vec<Vec<f64>> = row.iter().map(|p| p.to_vec()).collect();
                self.drpm_pieces(v, &pmfs, None, None, &mut out, &mut trace);
                (StageKind::One, out, trace)
            }
            Stage::Two { sync_pending: true, .. } => {
                let sync = self.policies.sync.as_ref().expect("checked at construction");
                for r in &self.runs {
                    out.push((r.clone(), sync.x_star[r.state]));
                }
                (StageKind::TwoSync, out, None)
            }
            Stage::Two { w_hat, .. } => {
                let s_hat = self.message_state(w_hat);
                if self.cfg.variant == Variant::TwoStageAlternative {
                    let pols = &self.policies.hypothesis;
                    let s1 = self
                        .runs
                        .iter()
                        .find(|r| !r.contains(w_hat) && !r.mass.is_nil())
                        .map_or(s_hat, |r| r.state);
                    debug_assert!(self
                        .runs
                        .iter()
                        .all(|r| r.contains(w_hat) || r.mass.is_nil() || r.state == s1));
                    for r in &self.runs {
                        let x = if r.contains(w_hat) {
                            pols.x0(s_hat, s1)
                        } else {
                            pols.x1(s_hat, r.state)
                        };
                        out.push((r.clone(), x));
                    }
                    (StageKind::Two, out, None)
                } else {
                    let b1 = belief_f64(&self.pools(Some(w_hat)));
                    let pol = &self.policies.stage_two;
                    let x0 = pol.h0_input(s_hat, &b1);
                    let pmfs: Vec<Vec<f64>> = (0..ns).map(|s| pol.h1_pmf(s_hat, &b1, s)).collect();
                    self.drpm_pieces(v, &pmfs, Some(w_hat), Some(x0), &mut out, &mut trace);
                    (StageKind::Two, out, trace)
                }
            }
        }
    }

    fn q(&self, y: usize, x: usize, s: usize) -> &R {
        let (ns, ny) = (self.spec.ns(), self.spec.ny());
        &self.kernel[(x * ns + s) * ny + y]
    }

    /// One channel use with shared uniforms `v` (one per state).
    pub fn step(&mut self, v: &[f64], output: ChannelOutput) -> Result<StepRecord> {
        if self.status != Status::Running {
            return Err(Error::InvalidArgument("transmission already stopped".into()));
        }
        if v.len() != self.spec.ns() {
            return Err(Error::InvalidArgument(format!("need {} uniforms", self.spec.ns())));
        }
        let vr: Vec<R> = v.iter().map(|&u| R::from_f64(u, self.prec)).collect();
        let bhat = self.bhat();
        let llr_before = self.llr_of(self.w);
        let estimate_correct = self.estimate().map(|e| e == self.w);
        let (stage, pieces, drpm) = self.assign(&vr);

        let x = pieces
            .iter()
            .find(|(r, _)| r.contains(self.w))
            .map(|&(_, x)| x)
            .expect("true message is covered");
        let s = self.state;
        let y = match output {
            ChannelOutput::Noise(u) => sample_index(self.spec.row(x, s), u),
            ChannelOutput::Forced(y) => {
                if y >= self.spec.ny() {
                    return Err(Error::IndexOutOfRange(format!("output {y}")));
                }
                if self.spec.q(y, x, s) <= 0.0 {
                    return Err(Error::ZeroProbabilityOutput { y });
                }
                y
            }
        };

        let mut runs = Vec::with_capacity(pieces.len());
        let mut total = R::zero_prec(self.prec);
        for (mut r, xi) in pieces {
            if !r.mass.is_nil() {
                r.mass.mul_assign_ref(self.q(y, xi, r.state));
                if !r.mass.is_nil() {
                    total.add_assign_ref(&r.mass.mul_u64(r.len));
                }
            }
            r.state = self.spec.next_state(r.state, xi, y);
            runs.push(r);
        }
        self.state = self.spec.next_state(s, x, y);
        if total.is_nil() {
            self.exhausted = true;
        } else {
            for r in runs.iter_mut() {
                r.mass.div_assign_ref(&total);
            }
        }
        self.runs = runs;
        self.merge();
        debug_assert_eq!(self.message_state(self.w), self.state);
        self.t += 1;
        if let Stage::Two { w_hat, sync_pending: true } = self.stage {
            self.stage = Stage::Two { w_hat, sync_pending: false };
        }
        self.transitions();

        let (_, max) = self.argmax();
        Ok(StepRecord {
            t: self.t,
            stage,
            estimate_correct,
            state: s,
            x,
            y,
            bhat,
            llr_before,
            llr_after: self.llr_of(self.w),
            max_pi: max.to_f64(),
            drpm,
        })
    }

    fn merge(&mut self) {
        let keep = self.estimate();
        let mut merged: Vec<Run<R>> = Vec::with_capacity(self.runs.len());
        for r in self.runs.drain(..) {
            if let Some(last) = merged.last_mut() {
                let guarded = keep.is_some_and(|m| last.contains(m) || r.contains(m));
                let both_zero = last.mass.is_nil() && r.mass.is_nil();
                if !guarded && (both_zero || (last.state == r.state && same(&last.mass, &r.mass))) {
                    last.len += r.len;
                    continue;
                }
            }
            merged.push(r);
        }
        self.runs = merged;
    }

    fn transitions(&mut self) {
        let (top, top_mass) = self.argmax();
        if self.residual(top) < self.pe || self.exhausted {
            self.status = Status::Stopped { decoded: top };
            return;
        }
        if let Stage::Two { w_hat, .. } = self.stage {
            if *self.mass(w_hat) < self.p0 {
                self.stage = Stage::One;
                self.reverted += 1;
            }
        }
        if self.stage == Stage::One && self.cfg.variant != Variant::OneStage && top_mass > self.p0 {
            self.split_at(top);
            self.stage = Stage::Two {
                w_hat: top,
                sync_pending: self.cfg.variant == Variant::TwoStageAlternative,
            };
            self.stage2_entries += 1;
        }
    }
}

/// `log(pi(w) / (1 - pi(w)))` in the requested base; `±inf` at the boundary.
pub fn llr<R: Real>(pi: &[R], w: usize, base: LogBase) -> Result<f64> {
    if w >= pi.len() {
        return Err(Error::IndexOutOfRange(format!("message {w}")));
    }
    let mut rest: Option<R> = None;
    for (j, p) in pi.iter().enumerate() {
        if j != w {
            rest = Some(match rest {
                None => p.clone(),
                Some(a) => a.add_ref(p),
            });
        }
    }
    let num = pi[w].log2();
    let den = rest.map_or(f64::NEG_INFINITY, |r| r.log2());
    let bits = if num == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if den == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        num - den
    };
    Ok(base.convert(bits))
}

/// Per-episode random stream.
pub fn episode_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs one episode; see [`run_episode_observed`].
pub fn run_episode(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    run_episode_observed(spec, policies, cfg, seed, &mut |_| {})
}

/// Draws `W`, then per step the uniforms `V_t` (one per state) followed by
/// the channel noise, until the stopping rule fires or `max_steps` is hit.
pub fn run_episode_observed(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<EpisodeResult> {
    match cfg.arithmetic {
        Arithmetic::Mpfr => run_generic::<Float>(spec, policies, cfg, seed, observer),
        Arithmetic::LogDomain => run_generic::<LogF64>(spec, policies, cfg, seed, observer),
    }
}

fn run_generic<R: Real>(
    spec: &UnifilarChannelSpec,
    policies: &SchemePolicies,
    cfg: &SchemeConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let mut rng = episode_rng(seed);
    let w = rng.random_range(0..cfg.messages());
    let mut tx = Transmission::<R>::new(spec, policies, cfg, w)?;
    let mut llr_trace = cfg.record_llr.then(|| vec![tx.llr_of(w)]);
    let max_steps = cfg.max_steps();
    let mut v = vec![0.0; spec.ns()];
    while tx.status() == Status::Running && tx.time() < max_steps {
        for vs in v.iter_mut() {
            *vs = rng.random::<f64>();
        }
        let noise = rng.random::<f64>();
        let rec = tx.step(&v, ChannelOutput::Noise(noise))?;
        if let Some(tr) = llr_trace.as_mut() {
            tr.push(rec.llr_after);
        }
        observer(&rec);
    }
    let (decoded, truncated) = match tx.status() {
        Status::Stopped { decoded } => (decoded, tx.exhausted()),
        Status::Running => (tx.argmax().0, true),
    };
    Ok(EpisodeResult {
        t: tx.time(),
        decoded,
        w,
        error: decoded != w,
        stage2_entries: tx.stage2_entries(),
        reverted: tx.reverted(),
        truncated,
        llr_trace,
    })
}

/// Per-step trace CSV: `t, stage, x, y, max_pi, llr`.
pub fn write_trace_csv<W: std::io::Write>(records: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "stage", "x", "y", "max_pi", "llr"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.stage.name().to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.max_pi.to_string(),
            r.llr_after.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// True-message DRPM geometry per step:
/// `t, w, u, msg_lo, msg_hi, in_lo, in_hi, x`.
pub fn write_drpm_trace_csv<W: std::io::Write>(records: &[StepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "w", "u", "msg_lo", "msg_hi", "in_lo", "in_hi", "x"])?;
    for r in records {
        if let Some(d) = &r.drpm {
            w.write_record([
                r.t.to_string(),
                d.w.to_string(),
                d.u.to_string(),
                d.message_interval.0.to_string(),
                d.message_interval.1.to_string(),
                d.input_interval.0.to_string(),
                d.input_interval.1.to_string(),
                d.x.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
