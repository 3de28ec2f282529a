//! Unifilar channel definitions: kernel `Q(y|x,s)`, deterministic state
//! update `g(s,x,y)` and the built-in binary families.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::real::{decimal_repr, parse_decimal_rational};

const ROW_SUM_TOL: f64 = 1e-12;

/// A nonnegative quantity that may be `+inf` (divergences, exponent constants).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const INFINITY: ExtendedReal = ExtendedReal(f64::INFINITY);
    pub const ZERO: ExtendedReal = ExtendedReal(0.0);

    pub fn finite(v: f64) -> Self {
        debug_assert!(v.is_finite());
        ExtendedReal(v)
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn finite_value(&self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    pub fn scale(&self, factor: f64) -> Self {
        ExtendedReal(self.0 * factor)
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        ExtendedReal(v)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(ExtendedReal(v)),
            Repr::Str(s) if s == "inf" || s == "+inf" => Ok(ExtendedReal::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad extended real {s:?}"))),
        }
    }
}

/// Direction of the per-pair divergence reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `D(Q(.|x0,s0) || Q(.|x1,s1))`, output drawn under hypothesis 0.
    Forward,
    /// `D(Q(.|x1,s1) || Q(.|x0,s0))`, output drawn under hypothesis 1.
    Reverse,
}

/// The four binary families with `g(s,x,y) = s xor x xor y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Trapdoor,
    Chemical,
    Symmetric,
    Asymmetric,
}

impl Family {
    pub fn arity(self) -> usize {
        match self {
            Family::Trapdoor => 0,
            Family::Chemical => 1,
            Family::Symmetric => 2,
            Family::Asymmetric => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Trapdoor => "trapdoor",
            Family::Chemical => "chemical",
            Family::Symmetric => "symmetric",
            Family::Asymmetric => "asymmetric",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trapdoor" => Ok(Family::Trapdoor),
            "chemical" => Ok(Family::Chemical),
            "symmetric" => Ok(Family::Symmetric),
            "asymmetric" => Ok(Family::Asymmetric),
            other => Err(Error::InvalidChannel(format!("unknown family {other:?}"))),
        }
    }
}

/// JSON document describing a channel, either explicitly or by family.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ChannelDocument {
    Builtin {
        family: Family,
        #[serde(default)]
        params: Vec<f64>,
    },
    Explicit {
        name: String,
        nx: usize,
        ny: usize,
        ns: usize,
        /// Rows indexed `x * ns + s`, each a pmf over outputs.
        q: Vec<Vec<f64>>,
        /// Indexed `g[s][x][y]`.
        g: Vec<Vec<Vec<usize>>>,
        #[serde(default)]
        s1: usize,
    },
}

impl ChannelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<UnifilarChannelSpec> {
        match self {
            ChannelDocument::Builtin { family, params } => builtin(*family, params),
            ChannelDocument::Explicit {
                name,
                nx,
                ny,
                ns,
                q,
                g,
                s1,
            } => {
                let exact: Vec<Vec<BigRational>> = q
                    .iter()
                    .map(|row| row.iter().map(|&v| exact_decimal(v)).collect())
                    .collect::<Result<_>>()?;
                UnifilarChannelSpec::from_parts(name.clone(), *nx, *ny, *ns, exact, g.clone(), *s1)
            }
        }
    }
}

fn exact_decimal(v: f64) -> Result<BigRational> {
    if !v.is_finite() {
        return Err(Error::InvalidChannel(format!("non-finite kernel entry {v}")));
    }
    parse_decimal_rational(&decimal_repr(v))
        .ok_or_else(|| Error::InvalidChannel(format!("unparseable kernel entry {v}")))
}

/// A single problem found by [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { detail: String },
    NegativeEntry { x: usize, s: usize, y: usize, value: f64 },
    RowSum { x: usize, s: usize, sum: f64 },
    NextStateRange { s: usize, x: usize, y: usize, value: usize },
    InitialState { s1: usize },
}

/// Outcome of [`validate`]: never an error, only a list of findings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub name: String,
    pub valid: bool,
    pub strictly_positive: bool,
    pub violations: Vec<Violation>,
}

/// Checks a channel document without constructing it.
pub fn validate(doc: &ChannelDocument) -> ValidationReport {
    match doc {
        ChannelDocument::Builtin { family, params } => match builtin(*family, params) {
            Ok(spec) => ValidationReport {
                name: spec.name.clone(),
                valid: true,
                strictly_positive: spec.strictly_positive,
                violations: Vec::new(),
            },
            Err(e) => ValidationReport {
                name: family.name().to_string(),
                valid: false,
                strictly_positive: false,
                violations: vec![Violation::Shape {
                    detail: e.to_string(),
                }],
            },
        },
        ChannelDocument::Explicit {
            name,
            nx,
            ny,
            ns,
            q,
            g,
            s1,
        } => {
            let violations = check_tables(*nx, *ny, *ns, q, g, *s1);
            let strictly_positive =
                q.iter().flatten().all(|&v| v > 0.0) && !q.is_empty();
            ValidationReport {
                name: name.clone(),
                valid: violations.is_empty(),
                strictly_positive,
                violations,
            }
        }
    }
}

fn check_tables(
    nx: usize,
    ny: usize,
    ns: usize,
    q: &[Vec<f64>],
    g: &[Vec<Vec<usize>>],
    s1: usize,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if nx == 0 || ny == 0 || ns == 0 {
        out.push(Violation::Shape {
            detail: format!("alphabet sizes must be positive (nx={nx}, ny={ny}, ns={ns})"),
        });
        return out;
    }
    if q.len() != nx * ns {
        out.push(Violation::Shape {
            detail: format!("q has {} rows, expected nx*ns = {}", q.len(), nx * ns),
        });
    }
    for (r, row) in q.iter().enumerate() {
        let (x, s) = (r / ns, r % ns);
        if row.len() != ny {
            out.push(Violation::Shape {
                detail: format!("q row {r} has {} entries, expected {ny}", row.len()),
            });
            continue;
        }
        for (y, &v) in row.iter().enumerate() {
            if v < 0.0 || !v.is_finite() {
                out.push(Violation::NegativeEntry { x, s, y, value: v });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            out.push(Violation::RowSum { x, s, sum });
        }
    }
    if g.len() != ns || g.iter().any(|gs| gs.len() != nx || gs.iter().any(|gx| gx.len() != ny)) {
        out.push(Violation::Shape {
            detail: format!("g must be shaped [ns={ns}][nx={nx}][ny={ny}]"),
        });
    } else {
        for (s, gs) in g.iter().enumerate() {
            for (x, gx) in gs.iter().enumerate() {
                for (y, &v) in gx.iter().enumerate() {
                    if v >= ns {
                        out.push(Violation::NextStateRange { s, x, y, value: v });
                    }
                }
            }
        }
    }
    if s1 >= ns {
        out.push(Violation::InitialState { s1 });
    }
    out
}

/// State-synchronizing input `X*(s)` and the induced output-determined
/// next state `g'(y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SyncInput {
    pub x_star: Vec<usize>,
    pub g_prime: Vec<usize>,
}

/// A validated unifilar channel. Immutable after construction.
#[derive(Clone, Debug)]
pub struct UnifilarChannelSpec {
    name: String,
    nx: usize,
    ny: usize,
    ns: usize,
    q_exact: Vec<Vec<BigRational>>,
    q: Vec<Vec<f64>>,
    g: Vec<usize>,
    s1: usize,
    strictly_positive: bool,
}

impl UnifilarChannelSpec {
    /// Builds a channel from exact kernel rows (indexed `x * ns + s`) and a
    /// next-state table indexed `g[s][x][y]`.
    pub fn from_parts(
        name: String,
        nx: usize,
        ny: usize,
        ns: usize,
        q_exact: Vec<Vec<BigRational>>,
        g: Vec<Vec<Vec<usize>>>,
        s1: usize,
    ) -> Result<Self> {
        let q: Vec<Vec<f64>> = q_exact
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
            .collect();
        let violations = check_tables(nx, ny, ns, &q, &g, s1);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidChannel(format!("{v:?}")));
        }
        let strictly_positive = q_exact.iter().flatten().all(|v| *v > BigRational::zero());
        let g = g.into_iter().flatten().flatten().collect();
        Ok(UnifilarChannelSpec {
            name,
            nx,
            ny,
            ns,
            q_exact,
            q,
            g,
            s1,
            strictly_positive,
        })
    }

    /// Convenience constructor from `f64` rows; entries are read back as
    /// their shortest decimal representation.
    pub fn from_f64_rows(
        name: &str,
        nx: usize,
        ny: usize,
        ns: usize,
        q: Vec<Vec<f64>>,
        g: Vec<Vec<Vec<usize>>>,
        s1: usize,
    ) -> Result<Self> {
        ChannelDocument::Explicit {
            name: name.to_string(),
            nx,
            ny,
            ns,
            q,
            g,
            s1,
        }
        .build()
    }

    /// Single-state channel (a DMC) with rows indexed by input.
    pub fn memoryless(name: &str, rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        let g = vec![vec![vec![0; ny]; nx]];
        Self::from_f64_rows(name, nx, ny, 1, rows, g, 0)
    }

    /// Binary symmetric channel with crossover `p`, as a one-state channel.
    pub fn bsc(p: f64) -> Result<Self> {
        let q = exact_decimal(p)?;
        let r = BigRational::one() - &q;
        let rows = vec![vec![r.clone(), q.clone()], vec![q, r]];
        Self::from_parts(format!("bsc({p})"), 2, 2, 1, rows, vec![vec![vec![0, 0], vec![0, 0]]], 0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn ns(&self) -> usize {
        self.ns
    }
    pub fn s1(&self) -> usize {
        self.s1
    }
    pub fn strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    pub fn with_initial_state(mut self, s1: usize) -> Result<Self> {
        if s1 >= self.ns {
            return Err(Error::InvalidChannel(format!("initial state {s1} >= ns")));
        }
        self.s1 = s1;
        Ok(self)
    }

    /// `Q(y|x,s)` at `f64`.
    #[inline]
    pub fn q(&self, y: usize, x: usize, s: usize) -> f64 {
        self.q[x * self.ns + s][y]
    }

    /// The pmf `Q(.|x,s)`.
    #[inline]
    pub fn row(&self, x: usize, s: usize) -> &[f64] {
        &self.q[x * self.ns + s]
    }

    /// Exact decimal-derived value of `Q(y|x,s)`.
    pub fn q_exact(&self, y: usize, x: usize, s: usize) -> &BigRational {
        &self.q_exact[x * self.ns + s][y]
    }

    /// Terminating decimal literal of `Q(y|x,s)`, suitable for
    /// [`crate::real::Real::from_decimal`].
    pub fn q_decimal(&self, y: usize, x: usize, s: usize) -> String {
        rational_to_decimal(self.q_exact(y, x, s))
    }

    #[inline]
    pub fn next_state(&self, s: usize, x: usize, y: usize) -> usize {
        self.g[(s * self.nx + x) * self.ny + y]
    }

    /// Explicit JSON form of this channel.
    pub fn to_document(&self) -> ChannelDocument {
        let mut g = vec![vec![vec![0; self.ny]; self.nx]; self.ns];
        for (s, gs) in g.iter_mut().enumerate() {
            for (x, gx) in gs.iter_mut().enumerate() {
                for (y, v) in gx.iter_mut().enumerate() {
                    *v = self.next_state(s, x, y);
                }
            }
        }
        ChannelDocument::Explicit {
            name: self.name.clone(),
            nx: self.nx,
            ny: self.ny,
            ns: self.ns,
            q: self.q.clone(),
            g,
            s1: self.s1,
        }
    }

    fn check_index(&self, what: &str, v: usize, n: usize) -> Result<()> {
        if v >= n {
            return Err(Error::IndexOutOfRange(format!("{what}={v} (size {n})")));
        }
        Ok(())
    }

    /// Per-pair divergence reward in bits.
    ///
    /// Forward: `sum_y Q(y|x0,s0) log2(Q(y|x0,s0)/Q(y|x1,s1))`. Reverse swaps
    /// the two conditionals. Infinite iff the measure puts mass where the
    /// reference is zero.
    pub fn kl_reward(
        &self,
        s0: usize,
        x0: usize,
        s1: usize,
        x1: usize,
        direction: Direction,
    ) -> Result<ExtendedReal> {
        self.check_index("s0", s0, self.ns)?;
        self.check_index("s1", s1, self.ns)?;
        self.check_index("x0", x0, self.nx)?;
        self.check_index("x1", x1, self.nx)?;
        let (p, r) = match direction {
            Direction::Forward => (self.row(x0, s0), self.row(x1, s1)),
            Direction::Reverse => (self.row(x1, s1), self.row(x0, s0)),
        };
        Ok(divergence_bits(p, r))
    }

    /// `X*(s)` making the next state a function of the output alone, with
    /// the smallest such input per state.
    pub fn sync_input(&self) -> Option<SyncInput> {
        // Candidate g' rows come from the choices at state 0; each must be
        // matched by some input at every other state.
        for x0 in 0..self.nx {
            let g_prime: Vec<usize> = (0..self.ny).map(|y| self.next_state(0, x0, y)).collect();
            let mut x_star = vec![x0];
            let mut ok = true;
            for s in 1..self.ns {
                match (0..self.nx)
                    .find(|&x| (0..self.ny).all(|y| self.next_state(s, x, y) == g_prime[y]))
                {
                    Some(x) => x_star.push(x),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Some(SyncInput { x_star, g_prime });
            }
        }
        None
    }

    /// Largest one-step log-likelihood increment
    /// `max_{y,(x,s),(x',s')} log2(Q(y|x,s)/Q(y|x',s'))`.
    pub fn c2_bound(&self) -> ExtendedReal {
        if !self.strictly_positive {
            return ExtendedReal::INFINITY;
        }
        let mut best = 0.0f64;
        for y in 0..self.ny {
            let col = self.q.iter().map(|row| row[y]);
            let (lo, hi) = col.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            best = best.max((hi / lo).log2());
        }
        ExtendedReal::finite(best)
    }

    /// `(x, s)` pairs whose kernel rows coincide with those of another pair.
    pub fn rows_identical(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        self.row(a.0, a.1) == self.row(b.0, b.1)
    }
}

/// `D(p||r)` in bits with `0 log 0 = 0` and `a log(a/0) = +inf`.
pub fn divergence_bits(p: &[f64], r: &[f64]) -> ExtendedReal {
    let mut d = 0.0;
    for (&pi, &ri) in p.iter().zip(r) {
        if pi == 0.0 {
            continue;
        }
        if ri == 0.0 {
            return ExtendedReal::INFINITY;
        }
        d += pi * (pi / ri).log2();
    }
    ExtendedReal::finite(d.max(0.0))
}

/// Exact decimal expansion of a rational whose denominator divides a power
/// of ten; other rationals are rendered to 60 significant digits.
pub fn rational_to_decimal(r: &BigRational) -> String {
    let mut scaled = r.clone();
    let ten = BigRational::from_integer(10.into());
    for k in 0..400 {
        if scaled.is_integer() {
            return if k == 0 {
                scaled.to_integer().to_string()
            } else {
                format!("{}e-{k}", scaled.to_integer())
            };
        }
        scaled *= &ten;
    }
    format!("{:.60e}", r.to_f64().unwrap_or(f64::NAN))
}

fn check_param(v: f64) -> Result<BigRational> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::ParameterRange { value: v });
    }
    exact_decimal(v)
}

/// One of the binary families with `g(s,x,y) = s xor x xor y` and `s1 = 0`.
///
/// Parameters follow the table convention: chemical `(p0)`, symmetric
/// `(p0, q0)`, asymmetric `(p0, q0, p1, q1)`.
pub fn builtin(family: Family, params: &[f64]) -> Result<UnifilarChannelSpec> {
    if params.len() != family.arity() {
        return Err(Error::FamilyArity {
            family: family.name().to_string(),
            expected: family.arity(),
            got: params.len(),
        });
    }
    let p: Vec<BigRational> = params.iter().map(|&v| check_param(v)).collect::<Result<_>>()?;
    let one = BigRational::one();
    let zero = BigRational::zero();
    let half = BigRational::new(1.into(), 2.into());
    // Q(0|x,s) for (x,s) = (0,0), (1,0), (0,1), (1,1).
    let q0: [BigRational; 4] = match family {
        Family::Trapdoor => [one.clone(), half.clone(), half, zero],
        Family::Chemical => [one.clone(), p[0].clone(), &one - &p[0], zero],
        Family::Symmetric => [&one - &p[1], p[0].clone(), &one - &p[0], p[1].clone()],
        Family::Asymmetric => [&one - &p[1], p[0].clone(), &one - &p[2], p[3].clone()],
    };
    let zero_prob = |x: usize, s: usize| -> BigRational {
        let idx = match (x, s) {
            (0, 0) => 0,
            (1, 0) => 1,
            (0, 1) => 2,
            _ => 3,
        };
        q0[idx].clone()
    };
    // rows indexed x * ns + s
    let mut rows = Vec::with_capacity(4);
    for x in 0..2 {
        for s in 0..2 {
            let z = zero_prob(x, s);
            rows.push(vec![z.clone(), &one - &z]);
        }
    }
    let g = (0..2)
        .map(|s| (0..2).map(|x| (0..2).map(|y| s ^ x ^ y).collect()).collect())
        .collect();
    let name = if params.is_empty() {
        family.name().to_string()
    } else {
        let list: Vec<String> = params.iter().map(|v| v.to_string()).collect();
        format!("{}({})", family.name(), list.join(","))
    };
    UnifilarChannelSpec::from_parts(name, 2, 2, 2, rows, g, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q0(spec: &UnifilarChannelSpec, x: usize, s: usize) -> f64 {
        spec.q(0, x, s)
    }

    #[test]
    fn table_entries() {
        let t = builtin(Family::Trapdoor, &[]).unwrap();
        assert_eq!([q0(&t, 0, 0), q0(&t, 1, 0), q0(&t, 0, 1), q0(&t, 1, 1)], [1.0, 0.5, 0.5, 0.0]);
        let c = builtin(Family::Chemical, &[0.9]).unwrap();
        assert_eq!(q0(&c, 1, 0), 0.9);
        assert_eq!(q0(&c, 0, 1), 0.1);
        let s = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        assert_eq!([q0(&s, 0, 0), q0(&s, 1, 0), q0(&s, 0, 1), q0(&s, 1, 1)], [0.9, 0.5, 0.5, 0.1]);
        let a = builtin(Family::Asymmetric, &[0.5, 0.1, 0.2, 0.3]).unwrap();
        assert_eq!([q0(&a, 0, 0), q0(&a, 1, 0), q0(&a, 0, 1), q0(&a, 1, 1)], [0.9, 0.5, 0.8, 0.3]);
        for s in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    assert_eq!(t.next_state(s, x, y), s ^ x ^ y);
                }
            }
        }
        assert_eq!(t.s1(), 0);
    }

    #[test]
    fn complements_are_exact_decimals() {
        let c = builtin(Family::Chemical, &[0.9]).unwrap();
        assert_eq!(c.q_decimal(0, 0, 1), "1e-1");
        assert_eq!(c.q(0, 0, 1), 0.1);
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            builtin(Family::Symmetric, &[0.5]),
            Err(Error::FamilyArity { expected: 2, got: 1, .. })
        ));
        assert!(matches!(
            builtin(Family::Chemical, &[1.5]),
            Err(Error::ParameterRange { .. })
        ));
    }

    #[test]
    fn validation_reports() {
        let r = validate(&ChannelDocument::Builtin {
            family: Family::Trapdoor,
            params: vec![],
        });
        assert!(r.valid && !r.strictly_positive);
        let r = validate(&ChannelDocument::Builtin {
            family: Family::Symmetric,
            params: vec![0.5, 0.1],
        });
        assert!(r.valid && r.strictly_positive);
        let bad = ChannelDocument::Explicit {
            name: "bad".into(),
            nx: 1,
            ny: 2,
            ns: 1,
            q: vec![vec![0.5, 0.6]],
            g: vec![vec![vec![0, 0]]],
            s1: 0,
        };
        let r = validate(&bad);
        assert!(!r.valid);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::RowSum { .. })));
        assert!(bad.build().is_err());
        let bad_g = ChannelDocument::Explicit {
            name: "bad-g".into(),
            nx: 1,
            ny: 1,
            ns: 1,
            q: vec![vec![1.0]],
            g: vec![vec![vec![3]]],
            s1: 0,
        };
        assert!(validate(&bad_g)
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NextStateRange { value: 3, .. })));
    }

    #[test]
    fn json_documents() {
        let doc = ChannelDocument::from_json(r#"{"family": "chemical", "params": [0.9]}"#).unwrap();
        assert_eq!(doc.build().unwrap().q(0, 1, 0), 0.9);
        let doc = ChannelDocument::from_json(
            r#"{"name": "z", "nx": 2, "ny": 2, "ns": 1, "q": [[1, 0], [0.5, 0.5]], "g": [[[0, 0], [0, 0]]], "s1": 0}"#,
        )
        .unwrap();
        let spec = doc.build().unwrap();
        assert!(!spec.strictly_positive());
        let again = spec.to_document().build().unwrap();
        assert_eq!(again.row(1, 0), spec.row(1, 0));
    }

    #[test]
    fn kl_examples() {
        let s = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let d = s.kl_reward(0, 0, 0, 1, Direction::Forward).unwrap().value();
        let oracle = 0.9 * 1.8f64.log2() + 0.1 * 0.2f64.log2();
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.531004).abs() < 1e-6);
        for st in 0..2 {
            for x in 0..2 {
                assert_eq!(s.kl_reward(st, x, st, x, Direction::Forward).unwrap().value(), 0.0);
            }
        }
        let t = builtin(Family::Trapdoor, &[]).unwrap();
        assert!(t.kl_reward(0, 0, 1, 1, Direction::Forward).unwrap().is_infinite());
        assert!(t.kl_reward(0, 0, 2, 1, Direction::Forward).is_err());
    }

    #[test]
    fn kl_reverse_swaps_measures() {
        let s = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let f = s.kl_reward(1, 0, 0, 0, Direction::Forward).unwrap();
        let r = s.kl_reward(0, 0, 1, 0, Direction::Reverse).unwrap();
        assert_eq!(f, r);
    }

    #[test]
    fn kl_nonnegative_and_support() {
        for spec in [
            builtin(Family::Trapdoor, &[]).unwrap(),
            builtin(Family::Chemical, &[0.9]).unwrap(),
            builtin(Family::Symmetric, &[0.9, 0.1]).unwrap(),
        ] {
            for s0 in 0..2 {
                for x0 in 0..2 {
                    for s1 in 0..2 {
                        for x1 in 0..2 {
                            let d = spec.kl_reward(s0, x0, s1, x1, Direction::Forward).unwrap();
                            assert!(d.value() >= 0.0);
                            let same = spec.rows_identical((x0, s0), (x1, s1));
                            assert_eq!(d.value() == 0.0, same);
                            let contained = (0..2)
                                .all(|y| spec.q(y, x0, s0) == 0.0 || spec.q(y, x1, s1) > 0.0);
                            assert_eq!(d.is_finite(), contained);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sync_input_cases() {
        let s = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        let sync = s.sync_input().unwrap();
        assert_eq!(sync.x_star, vec![0, 1]);
        assert_eq!(sync.g_prime, vec![0, 1]);

        // g(s,x,y) = y for every input: already state independent.
        let g = vec![vec![vec![0, 1]; 2]; 2];
        let rows = vec![vec![0.5, 0.5]; 4];
        let spec = UnifilarChannelSpec::from_f64_rows("ydet", 2, 2, 2, rows.clone(), g, 0).unwrap();
        assert_eq!(spec.sync_input().unwrap().x_star, vec![0, 0]);

        // g(s,x,y) = s: state never moves, nothing decouples it.
        let g = vec![vec![vec![0, 0]; 2], vec![vec![1, 1]; 2]];
        let spec = UnifilarChannelSpec::from_f64_rows("frozen", 2, 2, 2, rows, g, 0).unwrap();
        assert!(spec.sync_input().is_none());
    }

    #[test]
    fn sync_input_property_exhaustive() {
        // Every binary next-state table: when X* exists it must decouple state.
        for code in 0u32..256 {
            let g: Vec<Vec<Vec<usize>>> = (0..2)
                .map(|s| {
                    (0..2)
                        .map(|x| (0..2).map(|y| ((code >> (s * 4 + x * 2 + y)) & 1) as usize).collect())
                        .collect()
                })
                .collect();
            let spec =
                UnifilarChannelSpec::from_f64_rows("g", 2, 2, 2, vec![vec![0.5, 0.5]; 4], g, 0).unwrap();
            let found = spec.sync_input();
            let brute = (0..2).any(|a| {
                (0..2).any(|b| (0..2).all(|y| spec.next_state(0, a, y) == spec.next_state(1, b, y)))
            });
            assert_eq!(found.is_some(), brute, "code {code}");
            if let Some(sync) = found {
                for y in 0..2 {
                    for s in 0..2 {
                        assert_eq!(spec.next_state(s, sync.x_star[s], y), sync.g_prime[y]);
                    }
                }
            }
        }
    }

    #[test]
    fn c2_examples() {
        let s = builtin(Family::Symmetric, &[0.5, 0.1]).unwrap();
        assert!((s.c2_bound().value() - 9f64.log2()).abs() < 1e-12);
        assert!((s.c2_bound().value() - 3.169925).abs() < 1e-6);
        let u = UnifilarChannelSpec::memoryless("u", vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(u.c2_bound().value(), 0.0);
        assert!(builtin(Family::Trapdoor, &[]).unwrap().c2_bound().is_infinite());
    }

    #[test]
    fn row_sums_hold() {
        for spec in [
            builtin(Family::Asymmetric, &[0.9, 0.1, 0.1, 0.1]).unwrap(),
            builtin(Family::Symmetric, &[0.3, 0.7]).unwrap(),
            UnifilarChannelSpec::bsc(0.1).unwrap(),
        ] {
            for x in 0..spec.nx() {
                for s in 0..spec.ns() {
                    let sum: f64 = spec.row(x, s).iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn extended_real_json() {
        let v = serde_json::to_string(&ExtendedReal::INFINITY).unwrap();
        assert_eq!(v, "\"inf\"");
        let back: ExtendedReal = serde_json::from_str(&v).unwrap();
        assert!(back.is_infinite());
        let back: ExtendedReal = serde_json::from_str("2.5").unwrap();
        assert_eq!(back.value(), 2.5);
    }
}
