//! Feedback capacity as the optimal average reward of the belief-state MDP.
//!
//! The belief `b` over the current channel state is quantized onto a simplex
//! lattice, actions are per-state input pmfs on a second lattice, the reward
//! is `I(X,S;Y | b)` and transitions follow the Bayes update `phi(b, y)`
//! snapped to the nearest lattice point. Relative value iteration with an
//! aperiodicity transform runs until the span of `Th - h` drops below `tol`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::UnifilarChannelSpec;
use crate::error::{Error, Result};
use crate::simplex::SimplexLattice;

/// Posterior over the current channel state.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("not a belief: {p:?}")));
        }
        Ok(Belief(p))
    }

    pub fn degenerate(ns: usize, s: usize) -> Self {
        let mut p = vec![0.0; ns];
        p[s] = 1.0;
        Belief(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Most likely state, smallest index on ties.
    pub fn mode(&self) -> usize {
        argmax_first(&self.0)
    }
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Uniform quantization of the state simplex.
#[derive(Clone, Debug)]
pub struct BeliefGrid {
    lattice: SimplexLattice,
    resolution: f64,
}

impl BeliefGrid {
    pub fn new(ns: usize, resolution: f64) -> Result<Self> {
        Ok(BeliefGrid {
            lattice: SimplexLattice::with_resolution(ns, resolution)?,
            resolution,
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        self.lattice.point(idx)
    }

    /// Nearest grid point in L1; ties go to the lexicographically smaller point.
    pub fn nearest(&self, b: &[f64]) -> usize {
        self.lattice.nearest(b)
    }
}

/// `P_{X|S,B}` on a belief grid: for each grid point and state, a pmf over inputs.
#[derive(Clone, Debug)]
pub struct InputPolicyTable {
    grid: BeliefGrid,
    ns: usize,
    nx: usize,
    probs: Vec<f64>,
}

impl InputPolicyTable {
    /// Same pmf at every grid point and state.
    pub fn constant(grid: BeliefGrid, ns: usize, pmf: &[f64]) -> Self {
        let nx = pmf.len();
        let mut probs = Vec::with_capacity(grid.len() * ns * nx);
        for _ in 0..grid.len() * ns {
            probs.extend_from_slice(pmf);
        }
        InputPolicyTable { grid, ns, nx, probs }
    }

    /// Uniform inputs everywhere.
    pub fn uniform(spec: &UnifilarChannelSpec, grid_res: f64) -> Result<Self> {
        let grid = BeliefGrid::new(spec.ns(), grid_res)?;
        let nx = spec.nx();
        Ok(Self::constant(grid, spec.ns(), &vec![1.0 / nx as f64; nx]))
    }

    /// Builds a table from `f(grid_point, state) -> pmf`.
    pub fn from_fn(
        grid: BeliefGrid,
        ns: usize,
        nx: usize,
        mut f: impl FnMut(&[f64], usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(grid.len() * ns * nx);
        for idx in 0..grid.len() {
            for s in 0..ns {
                let pmf = f(grid.point(idx), s);
                let sum: f64 = pmf.iter().sum();
                if pmf.len() != nx || pmf.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!("invalid input pmf {pmf:?}")));
                }
                probs.extend(pmf);
            }
        }
        Ok(InputPolicyTable { grid, ns, nx, probs })
    }

    pub fn grid(&self) -> &BeliefGrid {
        &self.grid
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn pmf_at(&self, point: usize, s: usize) -> &[f64] {
        let start = (point * self.ns + s) * self.nx;
        &self.probs[start..start + self.nx]
    }

    /// Per-state pmfs at a grid point.
    pub fn row_at(&self, point: usize) -> Vec<&[f64]> {
        (0..self.ns).map(|s| self.pmf_at(point, s)).collect()
    }

    /// Per-state pmfs at the grid point nearest to `b`.
    pub fn row_for(&self, b: &[f64]) -> Vec<&[f64]> {
        self.row_at(self.grid.nearest(b))
    }

    /// Rows as `(belief coordinates, state, input, probability)` tuples.
    pub fn entries(&self) -> impl Iterator<Item = (&[f64], usize, usize, f64)> + '_ {
        (0..self.grid.len()).flat_map(move |p| {
            (0..self.ns).flat_map(move |s| {
                (0..self.nx).map(move |x| (self.grid.point(p), s, x, self.pmf_at(p, s)[x]))
            })
        })
    }

    /// Writes the table as CSV with columns `b0..b{ns-1}, state, input, probability`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.ns).map(|s| format!("b{s}")).collect();
        header.extend(["state", "input", "probability"].map(String::from));
        w.write_record(&header)?;
        for (b, s, x, p) in self.entries() {
            let mut rec: Vec<String> = b.iter().map(|v| v.to_string()).collect();
            rec.push(s.to_string());
            rec.push(x.to_string());
            rec.push(p.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `P(y | b)` under per-state input pmfs.
pub fn output_distribution<P: AsRef<[f64]>>(
    spec: &UnifilarChannelSpec,
    b: &[f64],
    policy_row: &[P],
) -> Vec<f64> {
    let mut py = vec![0.0; spec.ny()];
    for (s, &bs) in b.iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        for (x, &px) in policy_row[s].as_ref().iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let w = bs * px;
            for (y, p) in py.iter_mut().enumerate() {
                *p += w * spec.q(y, x, s);
            }
        }
    }
    py
}

/// Bayes update of the state belief after observing `y`.
pub fn belief_update<P: AsRef<[f64]>>(
    spec: &UnifilarChannelSpec,
    b: &[f64],
    y: usize,
    policy_row: &[P],
) -> Result<Belief> {
    let mut next = vec![0.0; spec.ns()];
    let mut norm = 0.0;
    for (s, &bs) in b.iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        for (x, &px) in policy_row[s].as_ref().iter().enumerate() {
            let w = bs * px * spec.q(y, x, s);
            if w > 0.0 {
                next[spec.next_state(s, x, y)] += w;
                norm += w;
            }
        }
    }
    if norm <= 0.0 {
        return Err(Error::ZeroProbabilityOutput { y });
    }
    for v in &mut next {
        *v /= norm;
    }
    Ok(Belief(next))
}

/// `I(X,S;Y | b)` in bits for per-state input pmfs.
pub fn mutual_information<P: AsRef<[f64]>>(
    spec: &UnifilarChannelSpec,
    b: &[f64],
    policy_row: &[P],
) -> f64 {
    let py = output_distribution(spec, b, policy_row);
    let mut info = 0.0;
    for (s, &bs) in b.iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        for (x, &px) in policy_row[s].as_ref().iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (y, &pyv) in py.iter().enumerate() {
                let q = spec.q(y, x, s);
                if q > 0.0 {
                    info += bs * px * q * (q / pyv).log2();
                }
            }
        }
    }
    let cap = (spec.ny() as f64).log2();
    debug_assert!(info <= cap + 1e-9, "reward {info} exceeds log2|Y| = {cap}");
    info.max(0.0)
}

/// Solver settings for [`solve_capacity`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityOptions {
    pub grid_res: f64,
    pub action_res: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Self-loop weight of the aperiodicity transform, in `[0, 1)`.
    pub aperiodicity: f64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            grid_res: 1.0 / 200.0,
            action_res: 1.0 / 100.0,
            tol: 1e-6,
            max_iter: 20_000,
            aperiodicity: 0.5,
        }
    }
}

/// Output of [`solve_capacity`].
#[derive(Clone, Debug)]
pub struct CapacityResult {
    /// Gain estimate (midpoint of the final span bounds), bits per channel use.
    pub capacity: f64,
    pub lower: f64,
    pub upper: f64,
    /// Span of `Th - h` at exit.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub strictly_positive: bool,
    pub policy: InputPolicyTable,
    pub options: CapacityOptions,
}

/// Product action set: one input-lattice index per state.
struct ActionSet {
    inputs: SimplexLattice,
    ns: usize,
    count: usize,
}

impl ActionSet {
    fn new(ns: usize, nx: usize, action_res: f64) -> Result<Self> {
        let inputs = SimplexLattice::with_resolution(nx, action_res)?;
        let count = inputs
            .len()
            .checked_pow(ns as u32)
            .filter(|&c| c <= 50_000_000)
            .ok_or_else(|| Error::InvalidArgument("action set too large".into()))?;
        Ok(ActionSet { inputs, ns, count })
    }

    fn row(&self, mut a: usize) -> Vec<&[f64]> {
        let l = self.inputs.len();
        (0..self.ns)
            .map(|_| {
                let idx = a % l;
                a /= l;
                self.inputs.point(idx)
            })
            .collect()
    }
}

/// Precomputed one-step model: rewards and snapped transitions.
struct GridModel {
    n_points: usize,
    n_actions: usize,
    ny: usize,
    reward: Vec<f64>,
    prob: Vec<f64>,
    next: Vec<u32>,
}

impl GridModel {
    fn build(spec: &UnifilarChannelSpec, grid: &BeliefGrid, actions: &ActionSet) -> Self {
        let (n_points, n_actions, ny) = (grid.len(), actions.count, spec.ny());
        let per_point: Vec<(Vec<f64>, Vec<f64>, Vec<u32>)> = (0..n_points)
            .into_par_iter()
            .map(|p| {
                let b = grid.point(p);
                let mut reward = Vec::with_capacity(n_actions);
                let mut prob = Vec::with_capacity(n_actions * ny);
                let mut next = Vec::with_capacity(n_actions * ny);
                for a in 0..n_actions {
                    let row = actions.row(a);
                    reward.push(mutual_information(spec, b, &row));
                    let py = output_distribution(spec, b, &row);
                    for (y, &pyv) in py.iter().enumerate() {
                        if pyv > 0.0 {
                            let nb = belief_update(spec, b, y, &row)
                                .expect("positive output probability");
                            prob.push(pyv);
                            next.push(grid.nearest(nb.as_slice()) as u32);
                        } else {
                            prob.push(0.0);
                            next.push(0);
                        }
                    }
                }
                (reward, prob, next)
            })
            .collect();
        let mut model = GridModel {
            n_points,
            n_actions,
            ny,
            reward: Vec::with_capacity(n_points * n_actions),
            prob: Vec::with_capacity(n_points * n_actions * ny),
            next: Vec::with_capacity(n_points * n_actions * ny),
        };
        for (r, p, n) in per_point {
            model.reward.extend(r);
            model.prob.extend(p);
            model.next.extend(n);
        }
        model
    }

    /// Best one-step lookahead value and its action (smallest index on ties).
    fn backup(&self, p: usize, h: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        let base = p * self.n_actions;
        for a in 0..self.n_actions {
            let k = base + a;
            let mut v = self.reward[k];
            let t = k * self.ny;
            for y in 0..self.ny {
                v += self.prob[t + y] * h[self.next[t + y] as usize];
            }
            if v > best {
                best = v;
                arg = a;
            }
        }
        (best, arg)
    }
}

/// Relative value iteration for the feedback capacity on a quantized belief simplex.
pub fn solve_capacity(spec: &UnifilarChannelSpec, opts: &CapacityOptions) -> Result<CapacityResult> {
    if !(opts.grid_res > 0.0) || !(opts.action_res > 0.0) {
        return Err(Error::InvalidArgument("grid_res and action_res must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.aperiodicity) {
        return Err(Error::InvalidArgument("aperiodicity weight must lie in [0, 1)".into()));
    }
    let grid = BeliefGrid::new(spec.ns(), opts.grid_res)?;
    let actions = ActionSet::new(spec.ns(), spec.nx(), opts.action_res)?;
    let model = GridModel::build(spec, &grid, &actions);
    let tau = opts.aperiodicity;

    let mut h = vec![0.0; model.n_points];
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let backed: Vec<f64> = (0..model.n_points)
            .into_par_iter()
            .map(|p| model.backup(p, &h).0)
            .collect();
        // Transformed operator: T'h = (1 - tau) Th + tau h.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (p, &v) in backed.iter().enumerate() {
            let d = (1.0 - tau) * (v - h[p]);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        // Gain of the transformed chain is (1 - tau) times the original one.
        lower = lo / (1.0 - tau);
        upper = hi / (1.0 - tau);
        let reference = h[0] + (1.0 - tau) * (backed[0] - h[0]);
        for (p, v) in backed.into_iter().enumerate() {
            h[p] = h[p] + (1.0 - tau) * (v - h[p]) - reference;
        }
        if upper - lower < opts.tol {
            converged = true;
            break;
        }
    }

    let greedy: Vec<usize> = (0..model.n_points)
        .into_par_iter()
        .map(|p| model.backup(p, &h).1)
        .collect();
    let mut probs = Vec::with_capacity(model.n_points * spec.ns() * spec.nx());
    for &a in &greedy {
        for pmf in actions.row(a) {
            probs.extend_from_slice(pmf);
        }
    }
    let policy = InputPolicyTable {
        grid,
        ns: spec.ns(),
        nx: spec.nx(),
        probs,
    };
    Ok(CapacityResult {
        capacity: 0.5 * (lower + upper),
        lower,
        upper,
        residual: upper - lower,
        iterations,
        converged,
        strictly_positive: spec.strictly_positive(),
        policy,
        options: opts.clone(),
    })
}

/// Simulates the autonomous belief chain under `policy` from the degenerate
/// belief at the initial state and returns the average per-step reward.
pub fn policy_rate(
    spec: &UnifilarChannelSpec,
    policy: &InputPolicyTable,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Belief::degenerate(spec.ns(), spec.s1());
    let mut total = 0.0;
    for _ in 0..horizon {
        let row = policy.row_for(b.as_slice());
        total += mutual_information(spec, b.as_slice(), &row);
        let py = output_distribution(spec, b.as_slice(), &row);
        let y = sample_index(&py, rng.random::<f64>());
        b = belief_update(spec, b.as_slice(), y, &row)?;
    }
    Ok(total / horizon as f64)
}

/// Inverse-CDF draw from a pmf; the last positive entry absorbs rounding.
pub fn sample_index(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in pmf.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{builtin, Family};
    use proptest::prelude::*;

    fn h2(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    /// Joint-table Bayes: enumerate (s, x, s') with explicit probabilities.
    fn brute_bayes(spec: &UnifilarChannelSpec, b: &[f64], y: usize, row: &[Vec<f64>]) -> Vec<f64> {
        let ns = spec.ns();
        let mut joint = vec![0.0; ns];
        for s in 0..ns {
            for x in 0..spec.nx() {
                for sn in 0..ns {
                    let ind = if spec.next_state(s, x, y) == sn { 1.0 } else { 0.0 };
                    joint[sn] += b[s] * row[s][x] * spec.q(y, x, s) * ind;
                }
            }
        }
        let z: f64 = joint.iter().sum();
        joint.iter().map(|v| v / z).collect()
    }

    #[test]
    fn degenerate_update_follows_g() {
        let g = vec![vec![vec![1, 0], vec![0, 1]], vec![vec![0, 0], vec![1, 1]]];
        // rows indexed x * ns + s; the output copies the input
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let spec = UnifilarChannelSpec::from_f64_rows("det", 2, 2, 2, rows, g, 0).unwrap();
        // state 0, input 1 -> y = 1, next g(0,1,1) = 1
        let row = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let nb = belief_update(&spec, &[1.0, 0.0], 1, &row).unwrap();
        assert_eq!(nb.as_slice(), &[0.0, 1.0]);
        assert!(matches!(
            belief_update(&spec, &[1.0, 0.0], 0, &row),
            Err(Error::ZeroProbabilityOutput { y: 0 })
        ));
    }

    #[test]
    fn symmetric_update_by_hand() {
        let spec = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let row = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let nb = belief_update(&spec, &[0.5, 0.5], 0, &row).unwrap();
        // Next state s' = s xor x xor 0. Terms (s,x): (0,0)->0: .5*.5*.9, (0,1)->1: .5*.5*.5,
        // (1,0)->1: .5*.5*.5, (1,1)->0: .5*.5*.1
        let to0 = 0.25 * 0.9 + 0.25 * 0.1;
        let to1 = 0.25 * 0.5 + 0.25 * 0.5;
        let z = to0 + to1;
        assert!((nb.as_slice()[0] - to0 / z).abs() < 1e-15);
        assert!((nb.as_slice()[1] - to1 / z).abs() < 1e-15);
    }

    #[test]
    fn state_blind_channel_tracks_preimages() {
        // Q independent of s, policy independent of s: b'(s') is the g-preimage mass.
        let rows = vec![vec![0.7, 0.3], vec![0.7, 0.3], vec![0.2, 0.8], vec![0.2, 0.8]];
        let g = vec![vec![vec![0, 1], vec![1, 1]], vec![vec![0, 0], vec![1, 0]]];
        let spec = UnifilarChannelSpec::from_f64_rows("blind", 2, 2, 2, rows, g, 0).unwrap();
        let pmf = vec![0.4, 0.6];
        let row = vec![pmf.clone(), pmf.clone()];
        for b0 in [0.0, 0.3, 0.5, 1.0] {
            let b = [b0, 1.0 - b0];
            for y in 0..2 {
                let nb = belief_update(&spec, &b, y, &row).unwrap();
                let mut pre = [0.0; 2];
                for s in 0..2 {
                    for x in 0..2 {
                        pre[spec.next_state(s, x, y)] += b[s] * pmf[x] * spec.q(y, x, 0);
                    }
                }
                let z = pre[0] + pre[1];
                assert!((nb.as_slice()[0] - pre[0] / z).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn update_matches_joint_table(
            q in proptest::collection::vec(0.05f64..1.0, 3 * 3 * 3),
            gcode in proptest::collection::vec(0usize..3, 27),
            bw in proptest::collection::vec(0.0f64..1.0, 3),
            pw in proptest::collection::vec(0.0f64..1.0, 9),
            y in 0usize..3,
        ) {
            // |S| = |X| = |Y| = 3
            let rows: Vec<Vec<f64>> = q.chunks(3).map(|c| {
                let z: f64 = c.iter().sum();
                c.iter().map(|v| v / z).collect()
            }).collect();
            let g: Vec<Vec<Vec<usize>>> = (0..3).map(|s| (0..3).map(|x| (0..3).map(|yy| gcode[s * 9 + x * 3 + yy]).collect()).collect()).collect();
            let spec = UnifilarChannelSpec::from_f64_rows("p", 3, 3, 3, rows.clone(), g, 0);
            prop_assume!(spec.is_ok());
            let spec = spec.unwrap();
            let bz: f64 = bw.iter().sum();
            prop_assume!(bz > 1e-6);
            let b: Vec<f64> = bw.iter().map(|v| v / bz).collect();
            let row: Vec<Vec<f64>> = pw.chunks(3).map(|c| {
                let z: f64 = c.iter().sum::<f64>() + 1e-3;
                let mut r: Vec<f64> = c.iter().map(|v| (v + 1e-3 / 3.0) / z).collect();
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|v| *v /= s);
                r
            }).collect();
            let nb = belief_update(&spec, &b, y, &row).unwrap();
            let oracle = brute_bayes(&spec, &b, y, &row);
            let sum: f64 = nb.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (a, o) in nb.as_slice().iter().zip(&oracle) {
                prop_assert!((a - o).abs() < 1e-12);
            }
            let info = mutual_information(&spec, &b, &row);
            prop_assert!(info <= 3f64.log2() + 1e-12);
        }
    }

    #[test]
    fn bsc_capacity_closed_form() {
        let spec = UnifilarChannelSpec::bsc(0.1).unwrap();
        let r = solve_capacity(&spec, &CapacityOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.capacity - (1.0 - h2(0.1))).abs() < 1e-3, "{}", r.capacity);
        assert!((r.capacity - 0.531004).abs() < 1e-3);
    }

    #[test]
    fn noiseless_capacity_is_one_bit() {
        let spec =
            UnifilarChannelSpec::memoryless("id", vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = solve_capacity(&spec, &CapacityOptions::default()).unwrap();
        assert!((r.capacity - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coarser_actions_never_win() {
        let spec = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let mut opts = CapacityOptions {
            grid_res: 0.05,
            action_res: 0.25,
            tol: 1e-8,
            ..CapacityOptions::default()
        };
        let coarse = solve_capacity(&spec, &opts).unwrap();
        opts.action_res = 0.125;
        let fine = solve_capacity(&spec, &opts).unwrap();
        assert!(fine.capacity >= coarse.capacity - 1e-7, "{} < {}", fine.capacity, coarse.capacity);
    }

    #[test]
    fn policy_rate_on_bsc() {
        let spec = UnifilarChannelSpec::bsc(0.1).unwrap();
        let policy = InputPolicyTable::uniform(&spec, 0.01).unwrap();
        let r = policy_rate(&spec, &policy, 100_000, 7).unwrap();
        assert!((r - 0.531).abs() < 0.01);
        assert!(policy_rate(&spec, &policy, 0, 7).is_err());
    }

    #[test]
    fn policy_rate_zero_for_constant_output() {
        let spec =
            UnifilarChannelSpec::memoryless("stuck", vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let policy = InputPolicyTable::uniform(&spec, 0.1).unwrap();
        assert_eq!(policy_rate(&spec, &policy, 50, 1).unwrap(), 0.0);
    }

    #[test]
    fn policy_csv_columns() {
        let spec = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let policy = InputPolicyTable::uniform(&spec, 0.5).unwrap();
        let mut buf = Vec::new();
        policy.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "b0,b1,state,input,probability");
        assert_eq!(lines.count(), 3 * 2 * 2);
    }
}
