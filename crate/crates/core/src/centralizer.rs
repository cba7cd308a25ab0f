//! Centralizer ranks in `GL(d, Z)` and `Sp(d, Z)`, the wedge-square
//! homomorphism and a brute-force commuting-matrix oracle.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::affine::SymplecticMatrix;
use crate::error::{Error, Result};
use crate::intmat::{integer_kernel, solve_in_span, IntMatrix};
use crate::poly::{classify_roots, eigenvalues, mahler_measure, IntPoly, RootClassification};
use crate::spectral::{lyapunov_exponents, numeric_rank, ActionSpec};

/// Working lower bound for the Mahler measure of a non-cyclotomic
/// polynomial of degree at most 10 (Lehmer's value, rounded down).
pub const WORKING_MAHLER_BOUND: f64 = 1.17;

/// Candidate cap for the brute-force oracle.
pub const ORACLE_CANDIDATE_CAP: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MahlerGate {
    pub mahler: f64,
    pub unit_circle_only: bool,
    pub passes: bool,
}

/// Either every root is on the unit circle or `M(p) >= 1.17`.
pub fn mahler_gate(p: &IntPoly) -> Result<MahlerGate> {
    let mahler = mahler_measure(p)?;
    let roots = p.roots()?;
    let unit_circle_only = roots.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-9);
    Ok(MahlerGate {
        mahler,
        unit_circle_only,
        passes: unit_circle_only || mahler >= WORKING_MAHLER_BOUND,
    })
}

/// Classification with the irreducibility and hyperbolicity checks the
/// rank formulas need.
pub fn admissible_classification(a: &IntMatrix) -> Result<RootClassification> {
    let p = a.charpoly()?;
    let c = classify_roots(&p)?;
    match c.irreducible {
        None => {
            return Err(Error::Unsupported(format!(
                "irreducibility check for degree {}",
                c.roots.len()
            )))
        }
        Some(false) => {
            let f = p.factor()?;
            return Err(Error::Reducible(f[0].0.to_string()));
        }
        Some(true) => {}
    }
    if let Some(z) = c.unit_circle_root() {
        return Err(Error::NotHyperbolic(format!(
            "root {:.6}{:+.6}i has modulus {:.12}",
            z.re,
            z.im,
            z.norm()
        )));
    }
    Ok(c)
}

/// `r1 + r2 - 1`.
pub fn rank_centralizer_gl(a: &IntMatrix) -> Result<usize> {
    let c = admissible_classification(a)?;
    Ok(c.r1 + c.r2 - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpRank {
    pub rank: usize,
    /// `d >= 6`, where the rank is forced above 1.
    pub d_at_least_6: bool,
    pub r0_exceeds_1: bool,
}

/// `r1/2 + r2/2`.
pub fn rank_centralizer_sp(a: &SymplecticMatrix) -> Result<SpRank> {
    let c = admissible_classification(a.matrix())?;
    let rank = c.r1 / 2 + c.r2 / 2;
    Ok(SpRank {
        rank,
        d_at_least_6: a.d() >= 6,
        r0_exceeds_1: rank > 1,
    })
}

/// `Psi(B) = (B ^ B)|_W` with `W` the 1-eigenspace of `A ^ A`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WedgeRestriction {
    /// Integer basis of `W` in the `e_i ^ e_j` coordinates.
    pub w_basis: Vec<Vec<i64>>,
    pub dim: usize,
}

pub fn wedge_restriction(a: &SymplecticMatrix) -> Result<WedgeRestriction> {
    let aa = a.matrix().wedge2();
    let n = aa.rows();
    let shifted = aa.sub(&IntMatrix::identity(n))?;
    let rows: Vec<Vec<i128>> = shifted
        .to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(i128::from).collect())
        .collect();
    let w_basis = integer_kernel(&rows, n)?;
    if w_basis.len() != a.d() / 2 {
        return Err(Error::Precondition(format!(
            "1-eigenspace of A^A has dimension {}, expected {}",
            w_basis.len(),
            a.d() / 2
        )));
    }
    let dim = w_basis.len();
    Ok(WedgeRestriction { w_basis, dim })
}

impl WedgeRestriction {
    /// Exact matrix of `Psi(B)` in the `W` basis (column `j` is the image
    /// of basis vector `j`).
    pub fn psi(&self, b: &IntMatrix) -> Result<Vec<Vec<BigRational>>> {
        let bb = b.wedge2();
        let images: Vec<Vec<i64>> = self
            .w_basis
            .iter()
            .map(|w| {
                (0..bb.rows())
                    .map(|i| (0..bb.cols()).map(|j| bb[(i, j)] * w[j]).sum())
                    .collect()
            })
            .collect();
        let cols = solve_in_span(&self.w_basis, &images).ok_or_else(|| {
            Error::Precondition("B ^ B does not preserve W; B does not commute with A".into())
        })?;
        Ok((0..self.dim)
            .map(|i| (0..self.dim).map(|j| cols[j][i].clone()).collect())
            .collect())
    }

    pub fn psi_f64(&self, b: &IntMatrix) -> Result<DMatrix<f64>> {
        let p = self.psi(b)?;
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            p[i][j].to_f64().unwrap_or(f64::NAN)
        }))
    }

    pub fn psi_is_identity(&self, b: &IntMatrix) -> Result<bool> {
        let p = self.psi(b)?;
        Ok(p.iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(j, x)| if i == j { x.is_one() } else { x.is_zero() })
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub bound: i64,
    pub symplectic_only: bool,
    /// Number of bounded commuting unimodular matrices found.
    pub found: usize,
    /// Independent elements whose log-modulus vectors span the rank.
    pub generators: Vec<IntMatrix>,
    /// `None` when `A` has a repeated eigenvalue, so that the eigenbasis
    /// does not determine the log-modulus vectors.
    pub rank: Option<usize>,
    #[serde(skip)]
    pub elements: Vec<IntMatrix>,
}

/// Kronecker system `AB - BA = 0` on `vec(B)` (row-major).
fn commutant_system(a: &IntMatrix) -> Vec<Vec<i128>> {
    let d = a.rows();
    let mut rows = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut row = vec![0i128; d * d];
            for k in 0..d {
                row[k * d + j] += a[(i, k)] as i128;
                row[i * d + k] -= a[(k, j)] as i128;
            }
            rows.push(row);
        }
    }
    rows
}

fn pseudo_inverse_bounds(basis: &[Vec<i64>], bound: i64) -> Vec<i64> {
    let rows = basis[0].len();
    let phi = DMatrix::from_fn(rows, basis.len(), |i, j| basis[j][i] as f64);
    let pinv = phi
        .pseudo_inverse(1e-12)
        .expect("pseudo-inverse of a full-rank basis");
    (0..basis.len())
        .map(|l| {
            let s: f64 = pinv.row(l).iter().map(|x| x.abs()).sum();
            (s * bound as f64 + 1e-9).floor() as i64
        })
        .collect()
}

/// Enumerate lattice points of the commutant with entries bounded by
/// `bound`: outer coordinates by box bounds with partial-sum pruning, the
/// last coordinate as an interval.
fn enumerate_commutant(basis: &[Vec<i64>], bound: i64) -> Result<Vec<Vec<i64>>> {
    let r = basis.len();
    let e = basis[0].len();
    let boxb = pseudo_inverse_bounds(basis, bound);
    let volume: f64 = boxb[..r - 1].iter().map(|&b| (2 * b + 1) as f64).product();
    if volume > ORACLE_CANDIDATE_CAP {
        return Err(Error::Unsupported(format!(
            "oracle box has {volume:.3e} candidates, above the cap {ORACLE_CANDIDATE_CAP:.0e}"
        )));
    }
    // tail[l][i] = sum_{j >= l} |basis_j[i]| * boxb_j
    let mut tail = vec![vec![0i64; e]; r + 1];
    for l in (0..r).rev() {
        for i in 0..e {
            tail[l][i] = tail[l + 1][i] + basis[l][i].abs() * boxb[l];
        }
    }
    let first: Vec<i64> = if r == 1 {
        vec![0]
    } else {
        (-boxb[0]..=boxb[0]).collect()
    };
    let out: Vec<Vec<Vec<i64>>> = first
        .into_par_iter()
        .map(|c0| {
            let mut found = Vec::new();
            let mut partial = vec![0i64; e];
            let mut coeffs = vec![0i64; r];
            if r == 1 {
                last_coordinate(basis, bound, &partial, &mut coeffs, &mut found);
                return found;
            }
            coeffs[0] = c0;
            for i in 0..e {
                partial[i] = c0 * basis[0][i];
            }
            if feasible(&partial, &tail[1], bound) {
                descend(
                    basis,
                    bound,
                    &boxb,
                    &tail,
                    1,
                    &mut partial,
                    &mut coeffs,
                    &mut found,
                );
            }
            found
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

fn feasible(partial: &[i64], tail: &[i64], bound: i64) -> bool {
    partial.iter().zip(tail).all(|(p, t)| p.abs() <= bound + t)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    basis: &[Vec<i64>],
    bound: i64,
    boxb: &[i64],
    tail: &[Vec<i64>],
    level: usize,
    partial: &mut Vec<i64>,
    coeffs: &mut Vec<i64>,
    found: &mut Vec<Vec<i64>>,
) {
    let r = basis.len();
    if level == r - 1 {
        last_coordinate(basis, bound, partial, coeffs, found);
        return;
    }
    for c in -boxb[level]..=boxb[level] {
        coeffs[level] = c;
        for (p, b) in partial.iter_mut().zip(&basis[level]) {
            *p += c * b;
        }
        if feasible(partial, &tail[level + 1], bound) {
            descend(basis, bound, boxb, tail, level + 1, partial, coeffs, found);
        }
        for (p, b) in partial.iter_mut().zip(&basis[level]) {
            *p -= c * b;
        }
    }
}

fn last_coordinate(
    basis: &[Vec<i64>],
    bound: i64,
    partial: &[i64],
    coeffs: &mut [i64],
    found: &mut Vec<Vec<i64>>,
) {
    let last = &basis[basis.len() - 1];
    let (mut lo, mut hi) = (i64::MIN / 4, i64::MAX / 4);
    for (p, &b) in partial.iter().zip(last) {
        // -bound <= p + b c <= bound
        if b == 0 {
            if p.abs() > bound {
                return;
            }
            continue;
        }
        let (a1, a2) = (-bound - p, bound - p);
        let (l, h) = if b > 0 {
            (div_ceil(a1, b), a2.div_euclid(b))
        } else {
            (div_ceil(-a2, -b), (-a1).div_euclid(-b))
        };
        lo = lo.max(l);
        hi = hi.min(h);
        if lo > hi {
            return;
        }
    }
    for c in lo..=hi {
        let entries: Vec<i64> = partial.iter().zip(last).map(|(p, b)| p + c * b).collect();
        *coeffs.last_mut().expect("nonempty") = c;
        found.push(entries);
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Log-moduli of `B` on the eigenvectors of `A` (one entry per
/// eigenvalue of `A`, which must be simple).
pub fn log_modulus_vector(eigvecs: &DMatrix<Complex64>, b: &IntMatrix) -> Vec<f64> {
    let bc = DMatrix::from_fn(b.rows(), b.cols(), |i, j| {
        Complex64::new(b[(i, j)] as f64, 0.0)
    });
    eigvecs
        .column_iter()
        .map(|v| {
            let num = (v.adjoint() * (&bc * v))[(0, 0)];
            let den = (v.adjoint() * v)[(0, 0)];
            (num / den).norm().ln()
        })
        .collect()
}

/// Eigenvectors of `A`, or `None` if some eigenvalue is repeated.
pub fn simple_eigenvectors(a: &IntMatrix) -> Option<DMatrix<Complex64>> {
    let d = a.rows();
    let af = a.to_f64();
    let ev = eigenvalues(&af);
    let scale = af.norm().max(1.0);
    for i in 0..d {
        for j in i + 1..d {
            if (ev[i] - ev[j]).norm() < 1e-6 * scale {
                return None;
            }
        }
    }
    let ac = DMatrix::from_fn(d, d, |i, j| Complex64::new(a[(i, j)] as f64, 0.0));
    let mut cols = Vec::with_capacity(d);
    for mu in ev {
        let shifted = &ac - DMatrix::<Complex64>::identity(d, d) * mu;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("v_t requested");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        cols.push(vt.row(imin).adjoint());
    }
    Some(DMatrix::from_columns(&cols))
}

pub fn brute_force_centralizer(
    a: &IntMatrix,
    bound: i64,
    symplectic_only: bool,
) -> Result<OracleResult> {
    let d = a.rows();
    if !a.is_square() || d > 4 {
        return Err(Error::Unsupported(format!(
            "oracle limited to d <= 4, got {d}"
        )));
    }
    if bound < 0 {
        return Err(Error::InvalidInput(
            "entry bound must be non-negative".into(),
        ));
    }
    let basis = integer_kernel(&commutant_system(a), d * d)?;
    let j = IntMatrix::symplectic_form(d);
    let mut elements: Vec<IntMatrix> = enumerate_commutant(&basis, bound)?
        .into_par_iter()
        .filter_map(|entries| {
            let b = IntMatrix::from_fn(d, d, |i, k| entries[i * d + k]);
            let unimodular = b.det().map(|x| x.abs() == 1).unwrap_or(false);
            if !unimodular {
                return None;
            }
            if symplectic_only && b.transpose().mul(&j).and_then(|x| x.mul(&b)).ok()? != j {
                return None;
            }
            Some(b)
        })
        .collect();
    elements.sort_by(|x, y| (x.max_abs(), x.data()).cmp(&(y.max_abs(), y.data())));
    let found = elements.len();
    let (generators, rank) = match simple_eigenvectors(a) {
        Some(ev) => {
            let mut gens = Vec::new();
            let mut vecs: Vec<Vec<f64>> = Vec::new();
            for b in &elements {
                let v = log_modulus_vector(&ev, b);
                let mut trial = vecs.clone();
                trial.push(v);
                if numeric_rank(&trial) > vecs.len() {
                    vecs = trial;
                    gens.push(b.clone());
                }
            }
            (gens, Some(vecs.len()))
        }
        None => (vec![], None),
    };
    Ok(OracleResult {
        bound,
        symplectic_only,
        found,
        generators,
        rank,
        elements,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankBound {
    pub rank: usize,
    pub independent_exponents: usize,
    pub holds: bool,
}

/// `rank <= N` with `N` the dimension of the span of the Lyapunov
/// functionals, after checking that no nonzero `n` in `[-2, 2]^k` acts
/// with all eigenvalues on the unit circle.
pub fn rank_bound_check(spec: &ActionSpec, seed: u64) -> Result<RankBound> {
    let s = lyapunov_exponents(spec, seed)?;
    let k = spec.k();
    let total = 5usize.pow(k as u32);
    for idx in 0..total {
        let n: Vec<f64> = (0..k)
            .map(|i| ((idx / 5usize.pow(i as u32)) % 5) as f64 - 2.0)
            .collect();
        if n.iter().all(|&x| x == 0.0) {
            continue;
        }
        if s.exponents.iter().all(|e| e.eval(&n).abs() <= 1e-9) {
            return Err(Error::Precondition(format!(
                "element n = {:?} has all eigenvalues on the unit circle",
                n.iter().map(|&x| x as i64).collect::<Vec<_>>()
            )));
        }
    }
    let coeffs: Vec<Vec<f64>> = s.exponents.iter().map(|e| e.coeffs.clone()).collect();
    let n = numeric_rank(&coeffs);
    Ok(RankBound {
        rank: k,
        independent_exponents: n,
        holds: k <= n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CentralizerReport {
    pub matrix: IntMatrix,
    pub classification: RootClassification,
    pub rank_gl: usize,
    pub rank_sp: Option<usize>,
    pub r0: Option<usize>,
    pub d_at_least_6: bool,
    pub r0_exceeds_1: Option<bool>,
    pub oracle_gl: Option<OracleResult>,
    pub oracle_sp: Option<OracleResult>,
}

/// Ranks from the formulas, optionally checked against the oracle. With
/// `sp_only` the matrix must be symplectic and only the `Sp` oracle runs.
pub fn centralizer_report(
    a: &IntMatrix,
    oracle_bound: Option<i64>,
    sp_only: bool,
) -> Result<CentralizerReport> {
    let sp = if sp_only {
        Some(SymplecticMatrix::new(a.clone())?)
    } else if a.is_square() && a.rows().is_multiple_of(2) {
        SymplecticMatrix::new(a.clone()).ok()
    } else {
        None
    };
    let classification = admissible_classification(a)?;
    let rank_gl = classification.r1 + classification.r2 - 1;
    let sp_rank = sp.as_ref().map(rank_centralizer_sp).transpose()?;
    let (oracle_gl, oracle_sp) = match oracle_bound {
        Some(b) => (
            (!sp_only)
                .then(|| brute_force_centralizer(a, b, false))
                .transpose()?,
            sp.as_ref()
                .map(|_| brute_force_centralizer(a, b, true))
                .transpose()?,
        ),
        None => (None, None),
    };
    Ok(CentralizerReport {
        matrix: a.clone(),
        classification,
        rank_gl,
        rank_sp: sp_rank.as_ref().map(|s| s.rank),
        r0: sp_rank.as_ref().map(|s| s.rank),
        d_at_least_6: a.rows() >= 6,
        r0_exceeds_1: sp_rank.as_ref().map(|s| s.r0_exceeds_1),
        oracle_gl,
        oracle_sp,
    })
}

impl CentralizerReport {
    /// Formula and oracle agree wherever the oracle ran.
    pub fn oracle_agrees(&self) -> bool {
        let gl = self
            .oracle_gl
            .as_ref()
            .is_none_or(|o| o.rank == Some(self.rank_gl));
        let sp = match (&self.oracle_sp, self.rank_sp) {
            (Some(o), Some(r)) => o.rank == Some(r),
            _ => true,
        };
        gl && sp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> IntMatrix {
        IntMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn cat() -> IntMatrix {
        m(&[&[2, 1], &[1, 1]])
    }

    #[test]
    fn cat_map_ranks() {
        assert_eq!(rank_centralizer_gl(&cat()).unwrap(), 1);
        let sp = rank_centralizer_sp(&SymplecticMatrix::new(cat()).unwrap()).unwrap();
        assert_eq!(sp.rank, 1);
        assert!(!sp.d_at_least_6);
    }

    #[test]
    fn rejects_elliptic_and_reducible() {
        assert!(matches!(
            rank_centralizer_gl(&m(&[&[0, -1], &[1, 0]])),
            Err(Error::NotHyperbolic(_))
        ));
        let a = cat();
        let i = IntMatrix::identity(2);
        assert!(matches!(
            rank_centralizer_gl(&IntMatrix::block_diag(&a, &i)),
            Err(Error::Reducible(_))
        ));
    }

    #[test]
    fn cat_map_oracle() {
        let gl = brute_force_centralizer(&cat(), 50, false).unwrap();
        assert_eq!(gl.rank, Some(1));
        let sp = brute_force_centralizer(&cat(), 50, true).unwrap();
        assert_eq!(sp.rank, Some(1));
        assert!(
            sp.elements.contains(&m(&[&[1, 1], &[1, 0]]))
                || gl.elements.contains(&m(&[&[1, 1], &[1, 0]]))
        );
    }

    #[test]
    fn identity_smoke_test() {
        let r = brute_force_centralizer(&IntMatrix::identity(2), 1, true).unwrap();
        assert!(r.found > 1);
        assert_eq!(r.rank, None);
    }

    #[test]
    fn wedge_in_dimension_two_is_determinant() {
        let w = wedge_restriction(&SymplecticMatrix::new(cat()).unwrap()).unwrap();
        assert_eq!(w.dim, 1);
        assert!(w.psi_is_identity(&IntMatrix::identity(2)).unwrap());
        assert!(w.psi_is_identity(&cat()).unwrap());
        let flip = m(&[&[1, 1], &[1, 0]]);
        assert_eq!(w.psi_f64(&flip).unwrap()[(0, 0)], -1.0);
    }

    #[test]
    fn mahler_gate_examples() {
        let cyc = IntPoly::from_descending(&[1, -1, 1]);
        let g = mahler_gate(&cyc).unwrap();
        assert!(g.unit_circle_only && g.passes);
        let g = mahler_gate(&IntPoly::from_descending(&[1, -3, 1])).unwrap();
        assert!((g.mahler - 2.618_033_988_7).abs() < 1e-6);
        assert!(g.passes);
    }

    #[test]
    fn rank_bound_on_cat_and_identity() {
        let rb = rank_bound_check(&ActionSpec::new(vec![cat()]).unwrap(), 0).unwrap();
        assert_eq!((rb.rank, rb.independent_exponents), (1, 1));
        let err = rank_bound_check(&ActionSpec::new(vec![IntMatrix::identity(2)]).unwrap(), 0)
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
