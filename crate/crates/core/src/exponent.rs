//! The two-state hypothesis MDP behind the exponent bound.
//!
//! State `(s0, s1)` holds the channel state under the estimated message and
//! under the alternative, the action is a pair of inputs `(x0, x1)`, the
//! output is drawn from `Q(.|x0, s0)` and both states follow `g` with the
//! common output. The forward divergence rate optimized here is `C~1`; the
//! reverse rate under the resulting policies is `C~1*`.

use serde::{Deserialize, Serialize};

use crate::channel::{Direction, ExtendedReal, UnifilarChannelSpec};
use crate::error::{Error, Result};

/// Deterministic stage-two policies `X0, X1 : S x S -> X`, indexed `s0 * ns + s1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisPolicies {
    pub ns: usize,
    pub x0: Vec<usize>,
    pub x1: Vec<usize>,
}

impl HypothesisPolicies {
    pub fn new(ns: usize, x0: Vec<usize>, x1: Vec<usize>) -> Result<Self> {
        if x0.len() != ns * ns || x1.len() != ns * ns {
            return Err(Error::InvalidArgument(format!(
                "hypothesis policies need {} entries each",
                ns * ns
            )));
        }
        Ok(HypothesisPolicies { ns, x0, x1 })
    }

    /// Same input pair at every state pair.
    pub fn constant(ns: usize, x0: usize, x1: usize) -> Self {
        HypothesisPolicies {
            ns,
            x0: vec![x0; ns * ns],
            x1: vec![x1; ns * ns],
        }
    }

    #[inline]
    pub fn x0(&self, s0: usize, s1: usize) -> usize {
        self.x0[s0 * self.ns + s1]
    }

    #[inline]
    pub fn x1(&self, s0: usize, s1: usize) -> usize {
        self.x1[s0 * self.ns + s1]
    }

    pub fn check(&self, spec: &UnifilarChannelSpec) -> Result<()> {
        if self.ns != spec.ns() {
            return Err(Error::InvalidArgument("policy state count differs from channel".into()));
        }
        if self.x0.iter().chain(&self.x1).any(|&x| x >= spec.nx()) {
            return Err(Error::InvalidArgument("policy input out of range".into()));
        }
        Ok(())
    }

    /// CSV with columns `s0, s1, x0, x1`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s0", "s1", "x0", "x1"])?;
        for s0 in 0..self.ns {
            for s1 in 0..self.ns {
                w.write_record([
                    s0.to_string(),
                    s1.to_string(),
                    self.x0(s0, s1).to_string(),
                    self.x1(s0, s1).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Self-loop weight of the aperiodicity transform, in `[0, 1)`.
    pub aperiodicity: f64,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        ExponentOptions {
            tol: 1e-12,
            max_iter: 1_000_000,
            aperiodicity: 0.5,
        }
    }
}

/// Result of [`solve_ctilde1`] (plus [`ExponentReport::with_capacity`]).
#[derive(Clone, Debug, Serialize)]
pub struct ExponentReport {
    pub ctilde1: ExtendedReal,
    pub ctilde1_star: ExtendedReal,
    /// Optimal gain from each initial pair, indexed `s0 * ns + s1`.
    pub per_initial_state_gains: Vec<ExtendedReal>,
    pub policies: HypothesisPolicies,
    /// Some policy keeps collecting infinite reward forever.
    pub sustained_infinite: bool,
    /// `C~1* >= C`, once a capacity has been supplied.
    pub dominance_flag: Option<bool>,
    /// `C~1* >= C~1`, the literal reading of the stage-two assumption.
    pub star_exceeds_ctilde1: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl ExponentReport {
    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.dominance_flag = Some(self.ctilde1_star.value() >= capacity);
        self
    }
}

/// Dense one-step model over pairs for all input pairs.
struct PairModel {
    ns: usize,
    nx: usize,
    ny: usize,
    /// reward[p * na + a], `a = x0 * nx + x1`
    reward: Vec<ExtendedReal>,
    /// (probability, next pair) per output, for each (p, a)
    trans: Vec<Vec<(f64, usize)>>,
}

impl PairModel {
    fn new(spec: &UnifilarChannelSpec) -> Self {
        let (ns, nx, ny) = (spec.ns(), spec.nx(), spec.ny());
        let na = nx * nx;
        let mut reward = Vec::with_capacity(ns * ns * na);
        let mut trans = Vec::with_capacity(ns * ns * na);
        for s0 in 0..ns {
            for s1 in 0..ns {
                for x0 in 0..nx {
                    for x1 in 0..nx {
                        reward.push(
                            spec.kl_reward(s0, x0, s1, x1, Direction::Forward)
                                .expect("indices in range"),
                        );
                        trans.push(pair_transitions(spec, s0, s1, x0, x1, Direction::Forward));
                    }
                }
            }
        }
        PairModel {
            ns,
            nx,
            ny,
            reward,
            trans,
        }
    }

    fn n_pairs(&self) -> usize {
        self.ns * self.ns
    }

    fn n_actions(&self) -> usize {
        self.nx * self.nx
    }
}

/// Successor pairs with their probabilities; the output law is `Q(.|x0,s0)`
/// for [`Direction::Forward`] and `Q(.|x1,s1)` for [`Direction::Reverse`].
fn pair_transitions(
    spec: &UnifilarChannelSpec,
    s0: usize,
    s1: usize,
    x0: usize,
    x1: usize,
    direction: Direction,
) -> Vec<(f64, usize)> {
    let ns = spec.ns();
    (0..spec.ny())
        .filter_map(|y| {
            let p = match direction {
                Direction::Forward => spec.q(y, x0, s0),
                Direction::Reverse => spec.q(y, x1, s1),
            };
            (p > 0.0).then(|| (p, spec.next_state(s0, x0, y) * ns + spec.next_state(s1, x1, y)))
        })
        .collect()
}

/// Solves the forward-divergence hypothesis MDP.
///
/// A pair from which some input pair with infinite divergence is reachable
/// has infinite gain. Policies are extracted from the model with infinite
/// rewards replaced by a cap above every finite reward, so that perfectly
/// discriminating inputs are still chosen where available.
pub fn solve_ctilde1(spec: &UnifilarChannelSpec, opts: &ExponentOptions) -> Result<ExponentReport> {
    if !(0.0..1.0).contains(&opts.aperiodicity) {
        return Err(Error::InvalidArgument("aperiodicity weight must lie in [0, 1)".into()));
    }
    let model = PairModel::new(spec);
    let (np, na) = (model.n_pairs(), model.n_actions());

    let has_infinite: Vec<bool> = (0..np)
        .map(|p| (0..na).any(|a| model.reward[p * na + a].is_infinite()))
        .collect();
    let reach = reachability(np, |p| {
        (0..na)
            .flat_map(|a| model.trans[p * na + a].iter().map(|&(_, q)| q))
            .collect()
    });
    let infinite_from: Vec<bool> = (0..np)
        .map(|p| (0..np).any(|q| reach[p][q] && has_infinite[q]))
        .collect();
    let sustained_infinite = sustained_infinite_set(&model, &has_infinite);

    let max_finite = model
        .reward
        .iter()
        .filter_map(|r| r.finite_value())
        .fold(0.0f64, f64::max);
    let cap = 2.0 * max_finite + 1.0;
    let reward: Vec<f64> = model
        .reward
        .iter()
        .map(|r| r.finite_value().unwrap_or(cap))
        .collect();

    let tau = opts.aperiodicity;
    let mut v = vec![0.0; np];
    let mut gain = vec![0.0; np];
    let mut iterations = 0;
    let mut converged = false;
    let lookahead = |v: &[f64], p: usize, a: usize| -> f64 {
        let k = p * na + a;
        reward[k] + (1.0 - tau) * model.trans[k].iter().map(|&(pr, q)| pr * v[q]).sum::<f64>()
    };
    while iterations < opts.max_iter {
        iterations += 1;
        let next: Vec<f64> = (0..np)
            .map(|p| transformed_backup(&reward, &model, &v, p, tau))
            .collect();
        let d: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
        let change = d
            .iter()
            .zip(&gain)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        gain = d;
        let shift = next[0];
        v = next.into_iter().map(|x| x - shift).collect();
        if iterations > 2 && change < opts.tol {
            converged = true;
            break;
        }
    }

    let mut x0 = vec![0; np];
    let mut x1 = vec![0; np];
    for p in 0..np {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for a in 0..na {
            let val = lookahead(&v, p, a);
            if val > best {
                best = val;
                arg = a;
            }
        }
        x0[p] = arg / model.nx;
        x1[p] = arg % model.nx;
    }
    let policies = HypothesisPolicies {
        ns: model.ns,
        x0,
        x1,
    };

    let per_initial_state_gains: Vec<ExtendedReal> = (0..np)
        .map(|p| {
            if infinite_from[p] {
                ExtendedReal::INFINITY
            } else {
                ExtendedReal::finite(gain[p].max(0.0))
            }
        })
        .collect();
    let ctilde1 = per_initial_state_gains
        .iter()
        .copied()
        .fold(ExtendedReal::ZERO, |a, b| if b > a { b } else { a });
    let ctilde1_star = evaluate_ctilde1_star(spec, &policies)?;
    debug_assert_eq!(model.ny, spec.ny());
    Ok(ExponentReport {
        ctilde1,
        ctilde1_star,
        star_exceeds_ctilde1: ctilde1_star >= ctilde1,
        per_initial_state_gains,
        policies,
        sustained_infinite,
        dominance_flag: None,
        converged,
        iterations,
    })
}

fn transformed_backup(reward: &[f64], model: &PairModel, v: &[f64], p: usize, tau: f64) -> f64 {
    let na = model.n_actions();
    let mut best = f64::NEG_INFINITY;
    for a in 0..na {
        let k = p * na + a;
        let pv: f64 = model.trans[k].iter().map(|&(pr, q)| pr * v[q]).sum();
        let val = reward[k] + tau * v[p] + (1.0 - tau) * pv;
        if val > best {
            best = val;
        }
    }
    best
}

/// Whether some set of pairs can be held forever using only
/// infinite-reward input pairs (greatest fixed point).
fn sustained_infinite_set(model: &PairModel, has_infinite: &[bool]) -> bool {
    let (np, na) = (model.n_pairs(), model.n_actions());
    let mut alive: Vec<bool> = has_infinite.to_vec();
    loop {
        let mut changed = false;
        for p in 0..np {
            if !alive[p] {
                continue;
            }
            let keeps = (0..na).any(|a| {
                let k = p * na + a;
                model.reward[k].is_infinite() && model.trans[k].iter().all(|&(_, q)| alive[q])
            });
            if !keeps {
                alive[p] = false;
                changed = true;
            }
        }
        if !changed {
            return alive.iter().any(|&a| a);
        }
    }
}

fn reachability(n: usize, succ: impl Fn(usize) -> Vec<usize>) -> Vec<Vec<bool>> {
    let mut reach = vec![vec![false; n]; n];
    for (p, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![p];
        row[p] = true;
        while let Some(u) = stack.pop() {
            for q in succ(u) {
                if !row[q] {
                    row[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    reach
}

/// Long-run average reward of the pair chain induced by fixed policies, per
/// initial pair. With [`Direction::Forward`] the output follows hypothesis 0
/// and the reward is the forward divergence; with [`Direction::Reverse`]
/// both are taken under hypothesis 1.
pub fn policy_gains(
    spec: &UnifilarChannelSpec,
    policies: &HypothesisPolicies,
    direction: Direction,
) -> Result<Vec<ExtendedReal>> {
    policies.check(spec)?;
    let ns = spec.ns();
    let np = ns * ns;
    let mut p_mat = vec![vec![0.0; np]; np];
    let mut reward = vec![ExtendedReal::ZERO; np];
    for s0 in 0..ns {
        for s1 in 0..ns {
            let p = s0 * ns + s1;
            let (x0, x1) = (policies.x0(s0, s1), policies.x1(s0, s1));
            reward[p] = spec.kl_reward(s0, x0, s1, x1, direction)?;
            for (pr, q) in pair_transitions(spec, s0, s1, x0, x1, direction) {
                p_mat[p][q] += pr;
            }
        }
    }
    let reach = reachability(np, |p| (0..np).filter(|&q| p_mat[p][q] > 0.0).collect());
    let recurrent: Vec<bool> = (0..np)
        .map(|p| (0..np).all(|q| !reach[p][q] || reach[q][p]))
        .collect();
    // Closed classes and their gains.
    let mut class_of = vec![usize::MAX; np];
    let mut class_gain = Vec::new();
    for p in 0..np {
        if !recurrent[p] || class_of[p] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = (0..np).filter(|&q| reach[p][q]).collect();
        let id = class_gain.len();
        for &q in &members {
            class_of[q] = id;
        }
        let pi = stationary(&p_mat, &members);
        let mut g = 0.0;
        let mut infinite = false;
        for (i, &q) in members.iter().enumerate() {
            if pi[i] > 0.0 {
                if reward[q].is_infinite() {
                    infinite = true;
                } else {
                    g += pi[i] * reward[q].value();
                }
            }
        }
        class_gain.push(if infinite {
            ExtendedReal::INFINITY
        } else {
            ExtendedReal::finite(g.max(0.0))
        });
    }
    // Absorption probabilities via repeated squaring of the kernel.
    let mut pow = p_mat.clone();
    for _ in 0..40 {
        pow = mat_mul(&pow, &pow);
        for row in pow.iter_mut() {
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    let gains = (0..np)
        .map(|p| {
            let mut g = 0.0;
            let mut infinite = false;
            for (c, cg) in class_gain.iter().enumerate() {
                let mass: f64 = (0..np).filter(|&q| class_of[q] == c).map(|q| pow[p][q]).sum();
                if mass > 1e-12 {
                    if cg.is_infinite() {
                        infinite = true;
                    } else {
                        g += mass * cg.value();
                    }
                }
            }
            if infinite {
                ExtendedReal::INFINITY
            } else {
                ExtendedReal::finite(g)
            }
        })
        .collect();
    Ok(gains)
}

/// `C~1*`: the reverse divergence rate under fixed policies, maximized over
/// initial pairs (equivalently over recurrent classes).
pub fn evaluate_ctilde1_star(
    spec: &UnifilarChannelSpec,
    policies: &HypothesisPolicies,
) -> Result<ExtendedReal> {
    let gains = policy_gains(spec, policies, Direction::Reverse)?;
    Ok(gains
        .into_iter()
        .fold(ExtendedReal::ZERO, |a, b| if b > a { b } else { a }))
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Stationary distribution of the chain restricted to a closed class.
fn stationary(p_mat: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let m = members.len();
    // Rows: pi (P - I) = 0 for all but the last column, plus sum(pi) = 1.
    let mut a = vec![vec![0.0; m + 1]; m];
    for j in 0..m {
        for (i, &qi) in members.iter().enumerate() {
            let mut coef = p_mat[qi][members[j]];
            if i == j {
                coef -= 1.0;
            }
            a[j][i] = coef;
        }
    }
    for i in 0..m {
        a[m - 1][i] = 1.0;
    }
    a[m - 1][m] = 1.0;
    solve_dense(a)
}

fn solve_dense(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for j in col..=n {
            a[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in col..=n {
                        a[i][j] -= f * a[col][j];
                    }
                }
            }
        }
    }
    a.iter().map(|row| row[n]).collect()
}

/// Monte Carlo estimate of the reverse rate from `start`, with a batch-means
/// standard error. Used to cross-check [`evaluate_ctilde1_star`].
pub fn reverse_rate_monte_carlo(
    spec: &UnifilarChannelSpec,
    policies: &HypothesisPolicies,
    start: (usize, usize),
    steps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    policies.check(spec)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut s0, mut s1) = start;
    let n_batches = 100usize;
    let batch = (steps / n_batches).max(1);
    let mut batch_means = Vec::with_capacity(n_batches);
    let mut acc = 0.0;
    for t in 0..batch * n_batches {
        let (x0, x1) = (policies.x0(s0, s1), policies.x1(s0, s1));
        let r = spec.kl_reward(s0, x0, s1, x1, Direction::Reverse)?;
        if r.is_infinite() {
            return Ok((f64::INFINITY, 0.0));
        }
        acc += r.value();
        let y = crate::capacity::sample_index(spec.row(x1, s1), rng.random::<f64>());
        let (n0, n1) = (spec.next_state(s0, x0, y), spec.next_state(s1, x1, y));
        s0 = n0;
        s1 = n1;
        if (t + 1) % batch == 0 {
            batch_means.push(acc / batch as f64);
            acc = 0.0;
        }
    }
    let mean = batch_means.iter().sum::<f64>() / n_batches as f64;
    let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    Ok((mean, (var / n_batches as f64).sqrt()))
}

/// The straight exponent line `ctilde1 * (1 - rbar / C)`.
///
/// An infinite slope stays infinite below capacity and is zero at `rbar = C`.
pub fn bound_line(capacity: f64, ctilde1: ExtendedReal, rbar: f64) -> Result<ExtendedReal> {
    if !(capacity > 0.0) {
        return Err(Error::InvalidArgument(format!("capacity {capacity} must be positive")));
    }
    if !(0.0..=capacity).contains(&rbar) {
        return Err(Error::InvalidArgument(format!("rate {rbar} outside [0, C={capacity}]")));
    }
    if rbar == capacity {
        return Ok(ExtendedReal::ZERO);
    }
    if ctilde1.is_infinite() {
        return Ok(ExtendedReal::INFINITY);
    }
    Ok(ExtendedReal::finite(ctilde1.value() * (1.0 - rbar / capacity)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{builtin, Family};

    fn bsc_exponent(p: f64) -> f64 {
        (1.0 - 2.0 * p) * ((1.0 - p) / p).log2()
    }

    #[test]
    fn bsc_single_state() {
        let spec = UnifilarChannelSpec::bsc(0.1).unwrap();
        let r = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
        assert!((r.ctilde1.value() - bsc_exponent(0.1)).abs() < 1e-9);
        assert!((r.ctilde1.value() - 2.535940).abs() < 1e-6);
        assert!((r.ctilde1_star.value() - bsc_exponent(0.1)).abs() < 1e-9);
        // collapses to the best input pair
        let best = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| spec.kl_reward(0, a, 0, b, Direction::Forward).unwrap().value())
            .fold(0.0, f64::max);
        assert_eq!(r.ctilde1.value(), best);
    }

    #[test]
    fn infinite_for_channels_with_zeros() {
        for spec in [
            builtin(Family::Trapdoor, &[]).unwrap(),
            builtin(Family::Chemical, &[0.9]).unwrap(),
        ] {
            let r = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
            assert!(r.ctilde1.is_infinite(), "{}", spec.name());
            r.policies.check(&spec).unwrap();
        }
    }

    #[test]
    fn identical_rows_give_zero() {
        let spec = builtin(Family::Symmetric, &[0.5, 0.5]).unwrap();
        let r = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
        assert_eq!(r.ctilde1.value(), 0.0);
        assert_eq!(r.ctilde1_star.value(), 0.0);
    }

    #[test]
    fn symmetric_alternation_value() {
        // Hand analysis: the state difference d = s0 xor s1 moves by x0 xor x1,
        // so the best policy alternates D(B||A) on d = 0 with D(A||C) on d = 1.
        let spec = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let r = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
        let a = [0.9, 0.1];
        let b = [0.5, 0.5];
        let c = [0.1, 0.9];
        let d = |p: &[f64; 2], q: &[f64; 2]| -> f64 {
            p.iter().zip(q).map(|(x, y)| x * (x / y).log2()).sum()
        };
        let expected = 0.5 * (d(&b, &a) + d(&a, &c));
        assert!((r.ctilde1.value() - expected).abs() < 1e-9, "{} vs {expected}", r.ctilde1.value());
        for g in &r.per_initial_state_gains {
            assert!((g.value() - expected).abs() < 1e-9);
        }
        let star_expected = 0.5 * (d(&a, &b) + d(&c, &a));
        assert!(
            (r.ctilde1_star.value() - star_expected).abs() < 1e-9,
            "{} vs {star_expected} {:?}",
            r.ctilde1_star.value(),
            r.policies
        );
        assert!(r.converged);
    }

    #[test]
    fn value_iteration_dominates_every_stationary_policy() {
        for spec in [
            builtin(Family::Symmetric, &[0.5, 0.1]).unwrap(),
            builtin(Family::Symmetric, &[0.9, 0.1]).unwrap(),
            builtin(Family::Asymmetric, &[0.5, 0.1, 0.1, 0.1]).unwrap(),
            builtin(Family::Asymmetric, &[0.9, 0.1, 0.1, 0.1]).unwrap(),
        ] {
            let r = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
            let mut best_enum = 0.0f64;
            for c0 in 0u32..16 {
                for c1 in 0u32..16 {
                    let x0 = (0..4).map(|i| ((c0 >> i) & 1) as usize).collect();
                    let x1 = (0..4).map(|i| ((c1 >> i) & 1) as usize).collect();
                    let pol = HypothesisPolicies::new(2, x0, x1).unwrap();
                    let gains = policy_gains(&spec, &pol, Direction::Forward).unwrap();
                    for (p, g) in gains.iter().enumerate() {
                        assert!(
                            r.per_initial_state_gains[p].value() >= g.value() - 1e-9,
                            "{}: pair {p} enum {} > vi {}",
                            spec.name(),
                            g.value(),
                            r.per_initial_state_gains[p].value()
                        );
                        best_enum = best_enum.max(g.value());
                    }
                }
            }
            // and the optimum is attained by some deterministic stationary policy
            assert!((r.ctilde1.value() - best_enum).abs() < 1e-7, "{}", spec.name());
        }
    }

    #[test]
    fn output_relabeling_invariance() {
        let spec = builtin(Family::Asymmetric, &[0.9, 0.1, 0.2, 0.3]).unwrap();
        let doc = spec.to_document();
        let crate::channel::ChannelDocument::Explicit { nx, ny, ns, q, g, s1, .. } = doc else {
            unreachable!()
        };
        let q_swapped: Vec<Vec<f64>> = q.iter().map(|r| vec![r[1], r[0]]).collect();
        let g_swapped: Vec<Vec<Vec<usize>>> =
            g.iter().map(|gs| gs.iter().map(|gx| vec![gx[1], gx[0]]).collect()).collect();
        let swapped =
            UnifilarChannelSpec::from_f64_rows("swap", nx, ny, ns, q_swapped, g_swapped, s1).unwrap();
        let a = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
        let b = solve_ctilde1(&swapped, &ExponentOptions::default()).unwrap();
        assert!((a.ctilde1.value() - b.ctilde1.value()).abs() < 1e-9);
    }

    #[test]
    fn star_matches_long_simulation() {
        let spec = builtin(Family::Asymmetric, &[0.9, 0.1, 0.1, 0.1]).unwrap();
        let r = solve_ctilde1(&spec, &ExponentOptions::default()).unwrap();
        let gains = policy_gains(&spec, &r.policies, Direction::Reverse).unwrap();
        let (start, g) = gains
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let (mean, se) =
            reverse_rate_monte_carlo(&spec, &r.policies, (start / 2, start % 2), 1_000_000, 3)
                .unwrap();
        assert!((mean - g.value()).abs() <= 3.0 * se + 1e-12, "{mean} vs {} (se {se})", g.value());
    }

    #[test]
    fn bound_line_examples() {
        let c = 0.531;
        let k = ExtendedReal::finite(2.536);
        assert_eq!(bound_line(c, k, c).unwrap().value(), 0.0);
        assert_eq!(bound_line(c, k, 0.0).unwrap().value(), 2.536);
        assert!((bound_line(c, k, 0.2655).unwrap().value() - 1.268).abs() < 1e-12);
        assert!(bound_line(c, ExtendedReal::INFINITY, 0.1).unwrap().is_infinite());
        assert_eq!(bound_line(c, ExtendedReal::INFINITY, c).unwrap().value(), 0.0);
        assert!(bound_line(c, k, 0.6).is_err());
        assert!(bound_line(0.0, k, 0.0).is_err());
    }

    #[test]
    fn policies_csv() {
        let p = HypothesisPolicies::constant(2, 0, 1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s0,s1,x0,x1\n0,0,0,1\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
