//! Degree-one circle maps, rotation numbers and periodic points of
//! abelian-by-cyclic actions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intmat::IntMatrix;
use crate::poly::classify_roots;

/// Lift of an orientation preserving circle homeomorphism, sampled at
/// `i / N` for `i = 0..=N` and linearly interpolated; `lift(x + 1) =
/// lift(x) + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CircleMap {
    samples: Vec<f64>,
}

impl TryFrom<Vec<f64>> for CircleMap {
    type Error = Error;

    fn try_from(samples: Vec<f64>) -> Result<Self> {
        Self::from_samples(samples)
    }
}

impl From<CircleMap> for Vec<f64> {
    fn from(c: CircleMap) -> Self {
        c.samples
    }
}

impl CircleMap {
    /// `samples` has `N + 1` entries with the last one equal to the first
    /// plus one.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(
                "a circle map needs at least two samples".into(),
            ));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite circle map sample".into()));
        }
        let n = samples.len() - 1;
        if (samples[n] - samples[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "lift is not degree one: last - first = {}",
                samples[n] - samples[0]
            )));
        }
        if let Some(i) = samples.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "non-monotone grid sample at index {i}"
            )));
        }
        Ok(Self { samples })
    }

    /// Samples `f` on `[0, 1)` and closes the lift with `f(0) + 1`.
    pub fn from_fn(f: impl Fn(f64) -> f64, resolution: usize) -> Result<Self> {
        let n = resolution.max(1);
        let mut s: Vec<f64> = (0..n).map(|i| f(i as f64 / n as f64)).collect();
        s.push(s[0] + 1.0);
        Self::from_samples(s)
    }

    pub fn rotation(rho: f64, resolution: usize) -> Self {
        let n = resolution.max(1);
        Self {
            samples: (0..=n).map(|i| i as f64 / n as f64 + rho).collect(),
        }
    }

    pub fn identity(resolution: usize) -> Self {
        Self::rotation(0.0, resolution)
    }

    pub fn resolution(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.resolution();
        let k = x.floor();
        let u = (x - k) * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        let t = u - i as f64;
        self.samples[i] + t * (self.samples[i + 1] - self.samples[i]) + k
    }

    /// Exact inverse of the piecewise linear lift.
    pub fn eval_inverse(&self, y: f64) -> f64 {
        let n = self.resolution();
        let s0 = self.samples[0];
        let k = (y - s0).floor();
        let y0 = y - k;
        let i = self.samples.partition_point(|&s| s <= y0).clamp(1, n) - 1;
        let t = (y0 - self.samples[i]) / (self.samples[i + 1] - self.samples[i]);
        (i as f64 + t) / n as f64 + k
    }

    /// `self^e`, using the inverse for negative exponents.
    pub fn eval_pow(&self, x: f64, e: i64) -> f64 {
        let mut y = x;
        for _ in 0..e.unsigned_abs() {
            y = if e > 0 {
                self.eval(y)
            } else {
                self.eval_inverse(y)
            };
        }
        y
    }

    /// `self o other`, resampled at the finer resolution.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let n = self.resolution().max(other.resolution());
        Self::from_fn(|x| self.eval(other.eval(x)), n)
    }

    /// Inverse resampled on this map's grid.
    pub fn inverse(&self) -> Result<Self> {
        Self::from_fn(|y| self.eval_inverse(y), self.resolution())
    }
}

/// Distance on `R / Z`.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RotationNumber {
    /// Rotation number in `[0, 1)`.
    pub value: f64,
    /// `(lift^n(x0) - x0) / n`.
    pub translation: f64,
    /// `|translation - true value| <= error_bound`.
    pub error_bound: f64,
    pub iterations: usize,
}

pub fn rotation_number(c: &CircleMap, iterations: usize) -> RotationNumber {
    rotation_number_from(c, iterations, 0.0)
}

/// Birkhoff average of the displacement from `x0`; the integer part of the
/// orbit is tracked separately to keep full precision.
pub fn rotation_number_from(c: &CircleMap, iterations: usize, x0: f64) -> RotationNumber {
    let n = iterations.max(1);
    let mut whole = x0.floor();
    let mut frac = x0 - whole;
    for _ in 0..n {
        let y = c.eval(frac);
        let k = y.floor();
        whole += k;
        frac = y - k;
    }
    let translation = ((whole - x0.floor()) + (frac - (x0 - x0.floor()))) / n as f64;
    RotationNumber {
        value: translation.rem_euclid(1.0),
        translation,
        error_bound: 1.0 / n as f64,
        iterations: n,
    }
}

/// Finite union of closed intervals in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    pub intervals: Vec<(f64, f64)>,
}

impl CompactSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidInput("compact set must be nonempty".into()));
        }
        for &(a, b) in &intervals {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
                return Err(Error::InvalidInput(format!("bad interval [{a}, {b}]")));
            }
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(Self { intervals })
    }

    pub fn circle() -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
        }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        let y = x.rem_euclid(1.0);
        self.intervals.iter().any(|&(a, b)| {
            (y >= a - tol && y <= b + tol)
                || (b >= 1.0 - tol && y <= tol)
                || (a <= tol && y >= 1.0 - tol)
        })
    }

    /// `count` points spread over the intervals in proportion to length,
    /// endpoints included.
    pub fn sample(&self, count: usize) -> Vec<f64> {
        let total: f64 = self.intervals.iter().map(|(a, b)| b - a).sum();
        let mut out = Vec::new();
        for &(a, b) in &self.intervals {
            let k = if total > 0.0 {
                ((b - a) / total * count as f64).round() as usize
            } else {
                0
            };
            out.push(a);
            for i in 1..k {
                out.push(a + (b - a) * i as f64 / k as f64);
            }
            out.push(b);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbcOptions {
    pub samples: usize,
    pub relation_tol: f64,
    pub cauchy_tol: f64,
    pub max_iterations: usize,
    /// Start of the iteration; defaults to a golden-section point of the
    /// first interval of `K`.
    pub start: Option<f64>,
}

impl Default for AbcOptions {
    fn default() -> Self {
        Self {
            samples: 1 << 10,
            relation_tol: 1e-6,
            cauchy_tol: 1e-9,
            max_iterations: 10_000_000,
            start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbcResult {
    pub point: f64,
    /// Basis of the finite-index subgroup with zero rotation numbers.
    pub lattice: Vec<Vec<i64>>,
    pub index: i64,
    /// `max_i dist(beta^{e_i} p, p)`.
    pub residual: f64,
    pub iterations: Vec<usize>,
    pub relation_residual: f64,
}

/// `f_1^{n_1} ... f_k^{n_k} (x)`.
pub fn beta(fs: &[CircleMap], n: &[i64], x: f64) -> f64 {
    fs.iter()
        .zip(n)
        .rev()
        .fold(x, |y, (f, &e)| f.eval_pow(y, e))
}

/// Hermite normal form (lower triangular, positive diagonal) of the lattice
/// spanned by the columns of a nonsingular square matrix.
pub fn column_hnf(m: &IntMatrix) -> Result<Vec<Vec<i64>>> {
    let k = m.rows();
    let mut cols: Vec<Vec<i128>> = (0..m.cols())
        .map(|j| (0..k).map(|i| m[(i, j)] as i128).collect())
        .collect();
    let ovf = |x: Option<i128>| x.ok_or(Error::Overflow);
    for r in 0..k {
        loop {
            let nz: Vec<usize> = (r..cols.len()).filter(|&j| cols[j][r] != 0).collect();
            if nz.is_empty() {
                return Err(Error::Precondition("matrix is singular".into()));
            }
            let piv = *nz
                .iter()
                .min_by_key(|&&j| cols[j][r].abs())
                .expect("nonempty");
            cols.swap(r, piv);
            let mut done = true;
            for j in r + 1..cols.len() {
                let q = cols[j][r].div_euclid(cols[r][r]);
                if q != 0 {
                    for i in 0..k {
                        cols[j][i] = ovf(cols[j][i].checked_sub(ovf(q.checked_mul(cols[r][i]))?))?;
                    }
                }
                if cols[j][r] != 0 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if cols[r][r] < 0 {
            for x in cols[r].iter_mut() {
                *x = -*x;
            }
        }
        for j in 0..r {
            let q = cols[j][r].div_euclid(cols[r][r]);
            if q != 0 {
                for i in 0..k {
                    cols[j][i] = ovf(cols[j][i].checked_sub(ovf(q.checked_mul(cols[r][i]))?))?;
                }
            }
        }
    }
    cols.truncate(k);
    cols.into_iter()
        .map(|c| {
            c.into_iter()
                .map(|x| i64::try_from(x).map_err(|_| Error::Overflow))
                .collect()
        })
        .collect()
}

fn check_relations(fs: &[CircleMap], g: &CircleMap, a: &IntMatrix, pts: &[f64]) -> f64 {
    let k = fs.len();
    let rel = (0..k)
        .into_par_iter()
        .map(|i| {
            let row: Vec<i64> = (0..k).map(|j| a[(i, j)]).collect();
            pts.iter()
                .map(|&x| circle_dist(g.eval(fs[i].eval(x)), beta(fs, &row, g.eval(x))))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let comm = (0..k * k)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / k, ij % k);
            if i >= j {
                return 0.0;
            }
            pts.iter()
                .map(|&x| circle_dist(fs[i].eval(fs[j].eval(x)), fs[j].eval(fs[i].eval(x))))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    rel.max(comm)
}

/// Periodic point of the `Z^k` action generated by `fs` on `K`, given
/// `g f_i = f_1^{A_i1} ... f_k^{A_ik} g` on `K` with `A` hyperbolic.
pub fn find_periodic_point_abc(
    fs: &[CircleMap],
    g: &CircleMap,
    a: &IntMatrix,
    k_set: &CompactSet,
    opts: &AbcOptions,
) -> Result<AbcResult> {
    let k = fs.len();
    if k == 0 || a.rows() != k || a.cols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: a.rows(),
        });
    }
    if !classify_roots(&a.charpoly()?)?.hyperbolic {
        return Err(Error::NotHyperbolic(
            "the matrix A has an eigenvalue on the unit circle".into(),
        ));
    }
    let pts = k_set.sample(opts.samples);
    let endpoints: Vec<f64> = k_set.intervals.iter().flat_map(|&(a, b)| [a, b]).collect();
    for (idx, f) in fs.iter().chain(std::iter::once(g)).enumerate() {
        if let Some(x) = endpoints
            .iter()
            .find(|&&x| !k_set.contains(f.eval(x), 1e-9))
        {
            return Err(Error::Precondition(format!(
                "K is not invariant under map {idx}: endpoint {x} leaves K"
            )));
        }
    }
    let relation_residual = check_relations(fs, g, a, &pts);
    if relation_residual > opts.relation_tol {
        return Err(Error::Precondition(format!(
            "relation violated on K: residual {relation_residual:e}"
        )));
    }
    let id = IntMatrix::identity(k);
    let lambda = column_hnf(&a.transpose().sub(&id)?)?;
    let index = (0..k).map(|i| lambda[i][i]).product();
    let (a0, b0) = k_set.intervals[0];
    let mut p = opts
        .start
        .unwrap_or(a0 + (b0 - a0) * (3.0 - 5f64.sqrt()) / 2.0);
    let mut iterations = Vec::with_capacity(k);
    for e in &lambda {
        let mut converged = false;
        let mut it = 0;
        while it < opts.max_iterations {
            let q = beta(fs, e, p).rem_euclid(1.0);
            it += 1;
            let step = circle_dist(q, p);
            p = q;
            if step < opts.cauchy_tol {
                converged = true;
                break;
            }
        }
        iterations.push(it);
        if !converged {
            let residual = circle_dist(beta(fs, e, p), p);
            return Err(Error::NoConvergence(format!(
                "fixed point of beta^{e:?} not reached in {it} iterations; best candidate {p}, residual {residual:e}"
            )));
        }
    }
    let residual = lambda
        .iter()
        .map(|e| circle_dist(beta(fs, e, p), p))
        .fold(0.0, f64::max);
    Ok(AbcResult {
        point: p,
        lattice: lambda,
        index,
        residual,
        iterations,
        relation_residual,
    })
}

/// Circle maps of the demo in one dimension: `f` is a north-south map with
/// fixed points `0` (repelling) and `1/2` (attracting), and `g f = f^2 g`.
pub fn abc_demo_maps(c: f64, resolution: usize) -> Result<(CircleMap, CircleMap)> {
    use std::f64::consts::PI;
    let lam = (2.0 * PI * c).exp();
    let through_tan = |h: &dyn Fn(f64) -> f64, x: f64| -> f64 {
        if x == 0.5 {
            return 0.5;
        }
        let u = (PI * x).tan();
        let y = h(u).atan() / PI;
        if x > 0.5 {
            y + 1.0
        } else {
            y
        }
    };
    let f = CircleMap::from_fn(|x| through_tan(&|u| u * lam, x), resolution)?;
    let g = CircleMap::from_fn(|x| through_tan(&|u| u * u.abs(), x), resolution)?;
    Ok((f, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let c = CircleMap::from_fn(
            |x| x + 0.3 + 0.05 * (std::f64::consts::TAU * x).sin() / std::f64::consts::TAU,
            512,
        )
        .unwrap();
        for i in 0..100 {
            let x = i as f64 * 0.0371 - 1.3;
            assert!((c.eval_inverse(c.eval(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn non_monotone_rejected() {
        assert!(CircleMap::from_samples(vec![0.0, 0.6, 0.5, 1.0]).is_err());
        assert!(CircleMap::from_samples(vec![0.0, 0.5, 1.5]).is_err());
    }

    #[test]
    fn rigid_rotation() {
        let r = rotation_number(&CircleMap::rotation(0.375, 64), 1000);
        assert!((r.value - 0.375).abs() < 1e-12);
    }

    #[test]
    fn hnf_of_small_lattice() {
        let m = IntMatrix::from_rows(&[vec![2, 1], vec![2, 0]]).unwrap();
        let h = column_hnf(&m).unwrap();
        assert_eq!(h, vec![vec![1, 0], vec![0, 2]]);
    }

    #[test]
    fn demo_converges_to_half() {
        let (f, g) = abc_demo_maps(0.1, 1 << 14).unwrap();
        let a = IntMatrix::from_rows(&[vec![2]]).unwrap();
        let r =
            find_periodic_point_abc(&[f], &g, &a, &CompactSet::circle(), &AbcOptions::default())
                .unwrap();
        assert!((r.point - 0.5).abs() < 1e-8, "{}", r.point);
        assert_eq!(r.lattice, vec![vec![1]]);
    }
}
