//! Uniform lattices on the probability simplex, used both for belief grids
//! and for discretized input distributions.

use crate::error::{Error, Result};

/// All points `c / n` with `c` a composition of `n` into `dim` nonnegative
/// parts, stored in lexicographic order of `c`.
#[derive(Clone, Debug)]
pub struct SimplexLattice {
    dim: usize,
    divisions: u32,
    points: Vec<Vec<f64>>,
    // counts[m][p] = number of compositions of m into p parts
    counts: Vec<Vec<usize>>,
}

impl SimplexLattice {
    pub fn new(dim: usize, divisions: u32) -> Result<Self> {
        if dim == 0 || divisions == 0 {
            return Err(Error::InvalidArgument(format!(
                "simplex lattice needs dim > 0 and divisions > 0 (got {dim}, {divisions})"
            )));
        }
        let n = divisions as usize;
        let mut counts = vec![vec![0usize; dim + 1]; n + 1];
        for row in counts.iter_mut() {
            row[1] = 1;
        }
        for p in 2..=dim {
            for m in 0..=n {
                counts[m][p] = (0..=m).map(|v| counts[m - v][p - 1]).sum();
            }
        }
        let total = counts[n][dim];
        if total > 50_000_000 {
            return Err(Error::InvalidArgument(format!("simplex lattice too large ({total} points)")));
        }
        let mut points = Vec::with_capacity(total);
        let mut comp = vec![0u32; dim];
        enumerate(&mut comp, 0, divisions, &mut |c| {
            points.push(c.iter().map(|&v| v as f64 / n as f64).collect());
        });
        Ok(SimplexLattice {
            dim,
            divisions,
            points,
            counts,
        })
    }

    /// Lattice whose spacing is the closest step not coarser than `res`.
    pub fn with_resolution(dim: usize, res: f64) -> Result<Self> {
        if !(res > 0.0 && res <= 1.0) {
            return Err(Error::InvalidArgument(format!("resolution {res} outside (0, 1]")));
        }
        Self::new(dim, divisions_for(res))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn divisions(&self) -> u32 {
        self.divisions
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Index of a composition (entries summing to `divisions`).
    pub fn rank(&self, comp: &[u32]) -> usize {
        let mut rank = 0;
        let mut remaining = self.divisions as usize;
        for (i, &c) in comp.iter().enumerate().take(self.dim - 1) {
            let parts_after = self.dim - i - 1;
            for v in 0..c as usize {
                rank += self.counts[remaining - v][parts_after];
            }
            remaining -= c as usize;
        }
        rank
    }

    /// Nearest lattice point in L1, ties to the lexicographically smaller point.
    pub fn nearest(&self, b: &[f64]) -> usize {
        self.rank(&self.round(b))
    }

    /// Largest-remainder rounding of `n * b` onto compositions of `n`.
    pub fn round(&self, b: &[f64]) -> Vec<u32> {
        debug_assert_eq!(b.len(), self.dim);
        let n = self.divisions as f64;
        let mut comp = Vec::with_capacity(self.dim);
        let mut fracs = Vec::with_capacity(self.dim);
        let mut used: i64 = 0;
        for (i, &v) in b.iter().enumerate() {
            let scaled = (v.max(0.0) * n).min(n);
            let fl = scaled.floor();
            comp.push(fl as u32);
            fracs.push((scaled - fl, i));
            used += fl as i64;
        }
        let mut missing = self.divisions as i64 - used;
        if missing > 0 {
            // Largest fraction first; on equal fractions the later coordinate
            // takes the unit, which keeps earlier coordinates small.
            fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.cmp(&a.1)));
            for &(_, i) in fracs.iter().cycle() {
                if missing == 0 {
                    break;
                }
                comp[i] += 1;
                missing -= 1;
            }
        } else {
            // Rounding noise can push the floor sum past n.
            while missing < 0 {
                let i = (0..self.dim).rev().max_by_key(|&i| comp[i]).unwrap();
                comp[i] -= 1;
                missing += 1;
            }
        }
        comp
    }
}

/// Number of lattice divisions for a step size, `round(1/res)`.
pub fn divisions_for(res: f64) -> u32 {
    (1.0 / res).round().max(1.0) as u32
}

fn enumerate(comp: &mut [u32], pos: usize, remaining: u32, f: &mut dyn FnMut(&[u32])) {
    if pos == comp.len() - 1 {
        comp[pos] = remaining;
        f(comp);
        return;
    }
    for v in 0..=remaining {
        comp[pos] = v;
        enumerate(comp, pos + 1, remaining - v, f);
    }
}
