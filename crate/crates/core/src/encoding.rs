//! Discrete randomized posterior matching and the stage encoders.
//!
//! A message `w` owns the interval `[F(w-), F(w))` of the cumulative
//! message pmf; the shared uniform `v` picks the point
//! `u = F(w-) + v * pi(w)` inside it, and the transmitted input is the one
//! whose cumulative input interval contains `u`. Messages and inputs are
//! laid out in ascending index order.
//!
//! The functions here take dense message vectors. The scheme works on runs
//! of equal messages and uses [`batch_counts`] to split a whole run at once.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::capacity::InputPolicyTable;
use crate::channel::SyncInput;
use crate::error::{Error, Result};
use crate::exponent::HypothesisPolicies;
use crate::real::Real;

/// Cumulative sums `cum[x] = px(0) + ... + px(x)`.
pub fn cumulative<R: Real>(px: &[R]) -> Vec<R> {
    let mut out = Vec::with_capacity(px.len());
    let mut acc: Option<R> = None;
    for p in px {
        let next = match acc {
            None => p.clone(),
            Some(ref a) => a.add_ref(p),
        };
        out.push(next.clone());
        acc = Some(next);
    }
    out
}

/// Converts an `f64` pmf to working precision.
pub fn pmf_to_real<R: Real>(px: &[f64], prec: u32) -> Vec<R> {
    px.iter().map(|&p| R::from_f64(p, prec)).collect()
}

/// One DRPM evaluation with its geometry, normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DrpmTrace {
    pub w: usize,
    pub u: f64,
    pub message_interval: (f64, f64),
    pub input_interval: (f64, f64),
    pub x: usize,
}

/// DRPM input for message `w`. `pi` need not be normalized.
pub fn drpm<R: Real>(w: usize, px: &[R], pi: &[R], v: &R) -> Result<usize> {
    drpm_traced(w, px, pi, v).map(|t| t.x)
}

/// [`drpm`] together with the intervals involved.
pub fn drpm_traced<R: Real>(w: usize, px: &[R], pi: &[R], v: &R) -> Result<DrpmTrace> {
    if w >= pi.len() {
        return Err(Error::IndexOutOfRange(format!("message {w} of {}", pi.len())));
    }
    if px.is_empty() {
        return Err(Error::InvalidArgument("empty input pmf".into()));
    }
    if pi[w].is_nil() {
        return Err(Error::ZeroMass(w as u64));
    }
    let mut before = pi[w].sub_ref(&pi[w]);
    for p in &pi[..w] {
        before.add_assign_ref(p);
    }
    let mut total = before.clone();
    for p in &pi[w..] {
        total.add_assign_ref(p);
    }
    // u * total = F(w-) + v pi(w)
    let mut pos = pi[w].mul_ref(v);
    pos.add_assign_ref(&before);
    let cum = cumulative(px);
    let nx = px.len();
    let x = (0..nx - 1)
        .find(|&x| pos < cum[x].mul_ref(&total))
        .unwrap_or(nx - 1);
    let t = total.to_f64();
    let lo = if x == 0 { 0.0 } else { cum[x - 1].to_f64() };
    let hi = if x == nx - 1 { 1.0 } else { cum[x].to_f64() };
    Ok(DrpmTrace {
        w,
        u: pos.to_f64() / t,
        message_interval: (before.to_f64() / t, before.add_ref(&pi[w]).to_f64() / t),
        input_interval: (lo, hi),
        x,
    })
}

/// Exact conditional law `P(X = x | w) = |I_px(x) ∩ I_pi(w)| / pi(w)`.
pub fn drpm_law(w: usize, px: &[BigRational], pi: &[BigRational]) -> Result<Vec<BigRational>> {
    if w >= pi.len() {
        return Err(Error::IndexOutOfRange(format!("message {w} of {}", pi.len())));
    }
    if Zero::is_zero(&pi[w]) {
        return Err(Error::ZeroMass(w as u64));
    }
    let total: BigRational = pi.iter().sum();
    let lo: BigRational = pi[..w].iter().sum::<BigRational>() / &total;
    let hi = &lo + &pi[w] / &total;
    let width = &hi - &lo;
    let mut out = Vec::with_capacity(px.len());
    let mut a = <BigRational as Zero>::zero();
    for (x, p) in px.iter().enumerate() {
        let b = if x + 1 == px.len() {
            <BigRational as One>::one()
        } else {
            &a + p
        };
        let l = if a > lo { a.clone() } else { lo.clone() };
        let h = if b < hi { b.clone() } else { hi.clone() };
        out.push(if h > l { (h - l) / &width } else { <BigRational as Zero>::zero() });
        a = b;
    }
    Ok(out)
}

/// Splits a run of `n` equal messages of mass `p` whose predecessors (in the
/// same pool) carry mass `c`, out of a pool total `z`.
///
/// Returns `counts` with `counts[x]` the number of leading messages of the
/// run whose input is at most `x`; `counts[nx-1] = n`. `cum` holds the
/// cumulative input pmf. Zero-mass runs are placed at position `c`.
pub fn batch_counts<R: Real>(c: &R, p: &R, n: u64, z: &R, cum: &[R], v: &R) -> Vec<u64> {
    let nx = cum.len();
    let mut counts = vec![n; nx];
    if p.is_nil() {
        let x = (0..nx - 1).find(|&x| *c < cum[x].mul_ref(z)).unwrap_or(nx - 1);
        for (k, slot) in counts.iter_mut().enumerate() {
            *slot = if k < x { 0 } else { n };
        }
        return counts;
    }
    let mut prev = 0;
    for (x, slot) in counts.iter_mut().enumerate().take(nx - 1) {
        // messages k with c + (k + v) p < cum_x z
        let mut t = cum[x].mul_ref(z).sub_ref(c);
        t.div_assign_ref(p);
        let t = t.sub_ref(v);
        let k = t.ceil_clamp(n).max(prev);
        *slot = k;
        prev = k;
    }
    counts
}

/// Stage-one belief quantities: `bhat(s)` and the per-state message pmfs.
#[derive(Clone, Debug)]
pub struct Stage1Quantities<R> {
    pub bhat: Vec<R>,
    /// `None` where `bhat(s) = 0`.
    pub pi_s: Vec<Option<Vec<R>>>,
}

/// Normalized `f64` copy of a belief held at working precision.
pub fn belief_f64<R: Real>(b: &[R]) -> Vec<f64> {
    let v: Vec<f64> = b.iter().map(Real::to_f64).collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter().map(|x| x / s).collect()
    } else {
        v
    }
}

pub fn stage1_quantities<R: Real>(pi: &[R], sv: &[usize], ns: usize) -> Result<Stage1Quantities<R>> {
    if pi.len() != sv.len() || pi.is_empty() {
        return Err(Error::InvalidArgument("posterior and state vector lengths differ".into()));
    }
    let zero = pi[0].sub_ref(&pi[0]);
    let mut bhat = vec![zero.clone(); ns];
    let mut total = zero.clone();
    for (p, &s) in pi.iter().zip(sv) {
        if s >= ns {
            return Err(Error::IndexOutOfRange(format!("state {s}")));
        }
        bhat[s].add_assign_ref(p);
        total.add_assign_ref(p);
    }
    let pi_s = bhat
        .iter()
        .enumerate()
        .map(|(s, b)| {
            (!b.is_nil()).then(|| {
                pi.iter()
                    .zip(sv)
                    .map(|(p, &si)| if si == s { p.div_ref(b) } else { zero.clone() })
                    .collect()
            })
        })
        .collect();
    for b in bhat.iter_mut() {
        b.div_assign_ref(&total);
    }
    Ok(Stage1Quantities { bhat, pi_s })
}

/// Stage-one input of message `i`: the policy row at the grid point nearest
/// to `bhat`, matched against `pi_s(sv(i))` with `v[sv(i)]`.
pub fn stage1_encode<R: Real>(
    i: usize,
    sv: &[usize],
    pi: &[R],
    v: &[R],
    policy: &InputPolicyTable,
) -> Result<usize> {
    let q = stage1_quantities(pi, sv, policy.ns())?;
    let s = sv[i];
    let prec = pi[i].precision();
    let px: Vec<R> = pmf_to_real(policy.row_for(&belief_f64(&q.bhat))[s], prec);
    let pis = q.pi_s[s].as_ref().ok_or(Error::ZeroMass(i as u64))?;
    drpm(i, &px, pis, &v[s])
}

/// Beliefs conditioned on the estimate `w_hat` being wrong.
#[derive(Clone, Debug)]
pub struct Stage2Quantities<R> {
    pub bhat1: Vec<R>,
    pub pi1_s: Vec<Option<Vec<R>>>,
}

pub fn stage2_quantities<R: Real>(
    pi: &[R],
    sv: &[usize],
    w_hat: usize,
    ns: usize,
) -> Result<Stage2Quantities<R>> {
    if w_hat >= pi.len() {
        return Err(Error::IndexOutOfRange(format!("estimate {w_hat}")));
    }
    let zero = pi[0].sub_ref(&pi[0]);
    let masked: Vec<R> = pi
        .iter()
        .enumerate()
        .map(|(i, p)| if i == w_hat { zero.clone() } else { p.clone() })
        .collect();
    if masked.iter().all(Real::is_nil) {
        return Err(Error::DegenerateHypothesis);
    }
    let q = stage1_quantities(&masked, sv, ns)?;
    Ok(Stage2Quantities {
        bhat1: q.bhat,
        pi1_s: q.pi_s,
    })
}

/// Stage-two policies over `(state of the estimate, belief under H1)`.
///
/// `h0_input` is the input sent under `H0`; `h1_pmf` is the input pmf
/// matched under `H1` by a message whose own state is `s`.
pub trait StageTwoPolicy: Send + Sync {
    fn h0_input(&self, s_hat: usize, bhat1: &[f64]) -> usize;
    fn h1_pmf(&self, s_hat: usize, bhat1: &[f64], s: usize) -> Vec<f64>;
}

/// Evaluates the two-state hypothesis policies at the most likely `H1`
/// state; under `H1` each message sends `X1(s_hat, s)` for its own state.
#[derive(Clone, Debug)]
pub struct SimplifiedAdapter {
    pub policies: HypothesisPolicies,
    pub nx: usize,
}

impl SimplifiedAdapter {
    pub fn new(policies: HypothesisPolicies, nx: usize) -> Self {
        SimplifiedAdapter { policies, nx }
    }
}

fn mode_of(b: &[f64]) -> usize {
    crate::capacity::argmax_first(b)
}

impl StageTwoPolicy for SimplifiedAdapter {
    fn h0_input(&self, s_hat: usize, bhat1: &[f64]) -> usize {
        self.policies.x0(s_hat, mode_of(bhat1))
    }

    fn h1_pmf(&self, s_hat: usize, _bhat1: &[f64], s: usize) -> Vec<f64> {
        let mut pmf = vec![0.0; self.nx];
        pmf[self.policies.x1(s_hat, s)] = 1.0;
        pmf
    }
}

/// Which stage-two rule is in force.
pub enum StageTwoMode<'a> {
    Full(&'a dyn StageTwoPolicy),
    Alternative {
        policies: &'a HypothesisPolicies,
        sync: Option<&'a SyncInput>,
        sync_pending: bool,
    },
}

/// Stage-two input of message `i` with estimate `w_hat`.
pub fn stage2_encode<R: Real>(
    w_hat: usize,
    i: usize,
    sv: &[usize],
    pi: &[R],
    v: &[R],
    mode: &StageTwoMode<'_>,
) -> Result<usize> {
    if i >= pi.len() || w_hat >= pi.len() {
        return Err(Error::IndexOutOfRange(format!("message {i} or estimate {w_hat}")));
    }
    match mode {
        StageTwoMode::Alternative {
            policies,
            sync,
            sync_pending,
        } => {
            if *sync_pending {
                let sync = sync.ok_or(Error::MissingSyncInput)?;
                return Ok(sync.x_star[sv[i]]);
            }
            let s0 = sv[w_hat];
            let s1 = common_alternative_state(pi, sv, w_hat).ok_or(Error::DegenerateHypothesis)?;
            Ok(if i == w_hat {
                policies.x0(s0, s1)
            } else {
                policies.x1(s0, sv[i])
            })
        }
        StageTwoMode::Full(policy) => {
            let ns = v.len();
            let q = stage2_quantities(pi, sv, w_hat, ns)?;
            let b1 = belief_f64(&q.bhat1);
            let s_hat = sv[w_hat];
            if i == w_hat {
                return Ok(policy.h0_input(s_hat, &b1));
            }
            let s = sv[i];
            let prec = pi[i].precision();
            let px: Vec<R> = pmf_to_real(&policy.h1_pmf(s_hat, &b1, s), prec);
            let pis = q.pi1_s[s].as_ref().ok_or(Error::ZeroMass(i as u64))?;
            drpm(i, &px, pis, &v[s])
        }
    }
}

/// State shared by the positive-mass alternatives after synchronization.
fn common_alternative_state<R: Real>(pi: &[R], sv: &[usize], w_hat: usize) -> Option<usize> {
    (0..pi.len())
        .find(|&i| i != w_hat && !pi[i].is_nil())
        .map(|i| sv[i])
}
