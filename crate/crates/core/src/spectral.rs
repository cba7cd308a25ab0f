//! Lyapunov exponents, coarse exponents, Weyl chambers and rank-one
//! factors of commuting families of integer matrices.
//!
//! Joint eigenspaces are read off a generic integer combination
//! `C = sum c_i A_i`. Rational invariant subspaces come from the
//! factorization of the characteristic polynomial of `C`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::affine::NilAutomorphism;
use crate::error::{Error, Result};
use crate::intmat::{integer_kernel, IntMatrix};
use crate::poly::{eigenvalues, IntPoly};

/// Proportionality tolerance after unit normalization.
pub const PROPORTIONALITY_TOL: f64 = 1e-9;
/// Absolute tolerance below which a functional counts as zero.
pub const ZERO_EXPONENT_TOL: f64 = 1e-9;
const MAX_RETRIES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionSpec {
    pub generators: Vec<IntMatrix>,
    pub pairwise_commute: bool,
}

impl ActionSpec {
    pub fn new(generators: Vec<IntMatrix>) -> Result<Self> {
        let d = generators
            .first()
            .map(IntMatrix::rows)
            .ok_or_else(|| Error::InvalidInput("an action needs at least one generator".into()))?;
        for g in &generators {
            if !g.is_square() || g.rows() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: g.rows(),
                });
            }
        }
        for i in 0..generators.len() {
            for j in i + 1..generators.len() {
                if !generators[i].commutes_with(&generators[j])? {
                    return Err(Error::NonCommuting(i, j));
                }
            }
        }
        Ok(Self {
            generators,
            pairwise_commute: true,
        })
    }

    /// Linearization on the base torus: `diag(M, A)` per generator.
    pub fn from_automorphisms(auts: &[NilAutomorphism]) -> Result<Self> {
        Self::new(auts.iter().map(NilAutomorphism::su_matrix).collect())
    }

    pub fn k(&self) -> usize {
        self.generators.len()
    }

    pub fn d(&self) -> usize {
        self.generators[0].rows()
    }

    pub fn combination(&self, c: &[i64]) -> Result<IntMatrix> {
        let d = self.d();
        let mut acc = IntMatrix::zeros(d, d);
        for (g, &ci) in self.generators.iter().zip(c) {
            acc = acc.add(&g.scale(ci))?;
        }
        Ok(acc)
    }

    /// `rho(n) = prod A_i^{n_i}` for `n_i >= 0`, inverses used otherwise.
    pub fn element(&self, n: &[i64]) -> Result<IntMatrix> {
        let mut acc = IntMatrix::identity(self.d());
        for (g, &ni) in self.generators.iter().zip(n) {
            let base = if ni < 0 {
                g.inverse_unimodular()?
            } else {
                g.clone()
            };
            acc = acc.mul(&base.pow(ni.unsigned_abs() as u32)?)?;
        }
        Ok(acc)
    }
}

/// One joint eigenvalue cluster of a generic combination.
#[derive(Clone, Debug)]
pub struct JointEigenspace {
    /// Eigenvalue of the combination.
    pub mu: Complex64,
    pub dim: usize,
    /// Eigenvalue of each generator.
    pub eigenvalues: Vec<Complex64>,
    pub coeffs: Vec<f64>,
    /// Orthonormal complex basis.
    pub basis: DMatrix<Complex64>,
}

impl JointEigenspace {
    /// Real basis: real vectors for a real cluster, real and imaginary
    /// parts for the upper member of a conjugate pair, nothing for the
    /// lower member.
    pub fn real_basis(&self, c: &DMatrix<f64>) -> Vec<Vec<f64>> {
        if self.mu.im.abs() <= 1e-9 * self.mu.norm().max(1.0) {
            real_null_space(c, self.mu.re, self.dim)
        } else if self.mu.im > 0.0 {
            let mut out = Vec::with_capacity(2 * self.dim);
            for col in self.basis.column_iter() {
                out.push(col.iter().map(|z| z.re).collect());
                out.push(col.iter().map(|z| z.im).collect());
            }
            out
        } else {
            vec![]
        }
    }
}

#[derive(Clone, Debug)]
pub struct JointDecomposition {
    pub combination: Vec<i64>,
    pub matrix: IntMatrix,
    pub spaces: Vec<JointEigenspace>,
    pub retries: usize,
}

fn frob(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn to_complex(m: &IntMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        Complex64::new(m[(i, j)] as f64, 0.0)
    })
}

/// Null space of `m`, as orthonormal columns, from singular values below
/// `tol`.
fn complex_null_space(m: DMatrix<Complex64>, tol: f64) -> DMatrix<Complex64> {
    let d = m.nrows();
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let idx: Vec<usize> = (0..d).filter(|&i| svd.singular_values[i] < tol).collect();
    DMatrix::from_fn(d, idx.len(), |r, c| vt[(idx[c], r)].conj())
}

fn real_null_space(c: &DMatrix<f64>, mu: f64, dim: usize) -> Vec<Vec<f64>> {
    let d = c.nrows();
    let m = c - DMatrix::identity(d, d) * mu;
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    idx.into_iter()
        .take(dim)
        .map(|i| {
            let mut v: Vec<f64> = vt.row(i).iter().copied().collect();
            let lead = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect()
}

fn random_combination(rng: &mut ChaCha8Rng, k: usize) -> Vec<i64> {
    (0..k)
        .map(|_| {
            let m = rng.gen_range(1..=4i64);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

enum Attempt {
    Ok(Vec<JointEigenspace>),
    Collision,
    Defective(String),
}

fn try_decompose(spec: &ActionSpec, c: &IntMatrix) -> Attempt {
    let d = spec.d();
    let cf = c.to_f64();
    let scale = cf.norm().max(1.0);
    let mut eig = eigenvalues(&cf);
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    // cluster eigenvalues of C
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in eig {
        let tol = 1e-6 * scale;
        match clusters.iter_mut().find(|cl| (cl[0] - z).norm() < tol) {
            Some(cl) => cl.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let cc = to_complex(c);
    let gens: Vec<DMatrix<Complex64>> = spec.generators.iter().map(to_complex).collect();
    let mut spaces = Vec::with_capacity(clusters.len());
    for cl in clusters {
        let mu = cl.iter().sum::<Complex64>() / cl.len() as f64;
        let shifted = &cc - DMatrix::<Complex64>::identity(d, d) * mu;
        let basis = complex_null_space(shifted, 1e-7 * scale);
        if basis.ncols() < cl.len() {
            return Attempt::Defective(format!(
                "eigenvalue {mu:.6} of the combination has multiplicity {} but a {}-dimensional eigenspace",
                cl.len(),
                basis.ncols()
            ));
        }
        if basis.ncols() > cl.len() {
            return Attempt::Collision;
        }
        let mut eigs = Vec::with_capacity(gens.len());
        for (g, gi) in gens.iter().zip(&spec.generators) {
            let ab = g * &basis;
            let lam = (basis.adjoint() * &ab).trace() / cl.len() as f64;
            let resid = frob(&(ab - &basis * lam));
            if resid > 1e-7 * (gi.max_abs() as f64).max(1.0) * d as f64 {
                return Attempt::Collision;
            }
            eigs.push(lam);
        }
        let coeffs = eigs.iter().map(|l| l.norm().ln()).collect();
        spaces.push(JointEigenspace {
            mu,
            dim: cl.len(),
            eigenvalues: eigs,
            coeffs,
            basis,
        });
    }
    Attempt::Ok(spaces)
}

/// Joint eigenstructure from a generic combination, retried on collision
/// or defect up to 10 times.
pub fn joint_decomposition(spec: &ActionSpec, seed: u64) -> Result<JointDecomposition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.k();
    let mut last_defect = String::new();
    for retry in 0..=MAX_RETRIES {
        let combination = if retry == 0 && k == 1 {
            vec![1]
        } else {
            random_combination(&mut rng, k)
        };
        let matrix = spec.combination(&combination)?;
        match try_decompose(spec, &matrix) {
            Attempt::Ok(spaces) => {
                return Ok(JointDecomposition {
                    combination,
                    matrix,
                    spaces,
                    retries: retry,
                })
            }
            Attempt::Collision => {}
            Attempt::Defective(msg) => last_defect = msg,
        }
    }
    Err(Error::Defective(if last_defect.is_empty() {
        format!("no collision-free generic combination after {MAX_RETRIES} retries")
    } else {
        last_defect
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFunctional {
    pub coeffs: Vec<f64>,
    pub space_dim: usize,
    pub space_basis: Vec<Vec<f64>>,
}

impl ExponentFunctional {
    pub fn eval(&self, n: &[f64]) -> f64 {
        self.coeffs.iter().zip(n).map(|(a, b)| a * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.abs() <= ZERO_EXPONENT_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovSpectrum {
    /// Nonzero functionals, sorted by coefficients in decreasing order.
    pub exponents: Vec<ExponentFunctional>,
    pub center_dim: usize,
    pub center_basis: Vec<Vec<f64>>,
    pub combination: Vec<i64>,
}

impl LyapunovSpectrum {
    pub fn total_dim(&self) -> usize {
        self.center_dim + self.exponents.iter().map(|e| e.space_dim).sum::<usize>()
    }
}

fn same_coeffs(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= ZERO_EXPONENT_TOL)
}

pub fn lyapunov_exponents(spec: &ActionSpec, seed: u64) -> Result<LyapunovSpectrum> {
    let jd = joint_decomposition(spec, seed)?;
    Ok(spectrum_from(&jd))
}

pub fn spectrum_from(jd: &JointDecomposition) -> LyapunovSpectrum {
    let cf = jd.matrix.to_f64();
    let mut groups: Vec<ExponentFunctional> = Vec::new();
    for s in &jd.spaces {
        let basis = s.real_basis(&cf);
        match groups
            .iter_mut()
            .find(|g| same_coeffs(&g.coeffs, &s.coeffs))
        {
            Some(g) => {
                g.space_dim += s.dim;
                g.space_basis.extend(basis);
            }
            None => groups.push(ExponentFunctional {
                coeffs: s.coeffs.clone(),
                space_dim: s.dim,
                space_basis: basis,
            }),
        }
    }
    for g in groups.iter_mut() {
        for c in g.coeffs.iter_mut() {
            if c.abs() <= ZERO_EXPONENT_TOL {
                *c = 0.0;
            }
        }
    }
    let (zero, mut exponents): (Vec<_>, Vec<_>) = groups.into_iter().partition(|g| g.is_zero());
    exponents.sort_by(|a, b| {
        b.coeffs
            .iter()
            .zip(&a.coeffs)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (center_dim, center_basis) = zero.into_iter().fold((0, vec![]), |(d, mut b), g| {
        b.extend(g.space_basis);
        (d + g.space_dim, b)
    });
    LyapunovSpectrum {
        exponents,
        center_dim,
        center_basis,
        combination: jd.combination.clone(),
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoarseExponent {
    pub members: Vec<ExponentFunctional>,
    pub direction: Vec<f64>,
    pub space_dim: usize,
}

pub fn coarse_exponents(exps: &[ExponentFunctional]) -> Vec<CoarseExponent> {
    let mut out: Vec<CoarseExponent> = Vec::new();
    for e in exps.iter().filter(|e| !e.is_zero()) {
        let dir = unit(&e.coeffs);
        match out
            .iter_mut()
            .find(|c| dist(&c.direction, &dir) <= PROPORTIONALITY_TOL)
        {
            Some(c) => {
                c.members.push(e.clone());
                c.space_dim += e.space_dim;
            }
            None => out.push(CoarseExponent {
                members: vec![e.clone()],
                direction: dir,
                space_dim: e.space_dim,
            }),
        }
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Numerical rank of a set of vectors at tolerance `1e-9`.
pub fn numeric_rank(vectors: &[Vec<f64>]) -> usize {
    let Some(first) = vectors.first() else {
        return 0;
    };
    let m = DMatrix::from_fn(vectors.len(), first.len(), |i, j| vectors[i][j]);
    if m.ncols() == 0 {
        return 0;
    }
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max().max(1.0);
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * smax)
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chamber {
    pub signs: Vec<i8>,
    pub witness: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChamberComplex {
    /// Unit normals, first nonzero coordinate positive.
    pub walls: Vec<Vec<f64>>,
    pub chambers: Vec<Chamber>,
    /// False when `k > 3`: walls only.
    pub enumerated: bool,
}

fn canonical_sign(v: Vec<f64>) -> Vec<f64> {
    match v.iter().find(|x| x.abs() > 1e-12) {
        Some(x) if *x < 0.0 => v.into_iter().map(|y| -y).collect(),
        _ => v,
    }
}

pub fn walls_of(coarse: &[CoarseExponent]) -> Vec<Vec<f64>> {
    let mut walls: Vec<Vec<f64>> = Vec::new();
    for c in coarse {
        let w = canonical_sign(c.direction.clone());
        if !walls.iter().any(|x| dist(x, &w) <= PROPORTIONALITY_TOL) {
            walls.push(w);
        }
    }
    walls
}

pub fn sign_vector(walls: &[Vec<f64>], n: &[f64]) -> Option<Vec<i8>> {
    walls
        .iter()
        .map(|w| {
            let v: f64 = w.iter().zip(n).map(|(a, b)| a * b).sum();
            if v.abs() <= 1e-12 {
                None
            } else {
                Some(if v > 0.0 { 1 } else { -1 })
            }
        })
        .collect()
}

fn margin(walls: &[Vec<f64>], u: &[f64]) -> f64 {
    walls
        .iter()
        .map(|w| w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().abs())
        .fold(f64::INFINITY, f64::min)
}

/// Integer point in the chamber of `signs`, found by scaling and rounding
/// an interior direction.
fn integer_witness(walls: &[Vec<f64>], signs: &[i8], u: &[f64]) -> Option<Vec<i64>> {
    let m = u.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut s = 1.0;
    for _ in 0..40 {
        let n: Vec<i64> = u.iter().map(|x| (x / m * s).round() as i64).collect();
        let nf: Vec<f64> = n.iter().map(|&x| x as f64).collect();
        if n.iter().any(|&x| x != 0) && sign_vector(walls, &nf).as_deref() == Some(signs) {
            return Some(n);
        }
        s *= 2.0;
    }
    None
}

/// Fibonacci-sphere directions in `R^3`.
fn sphere_points(n: usize) -> impl IndexedParallelIterator<Item = [f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n).into_par_iter().map(move |i| {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - y * y).sqrt();
        let th = golden * i as f64;
        [r * th.cos(), y, r * th.sin()]
    })
}

const SPHERE_SAMPLES: usize = 400_000;

pub fn weyl_chambers(coarse: &[CoarseExponent], k: usize) -> Result<ChamberComplex> {
    if k == 0 {
        return Err(Error::InvalidInput("rank k must be at least 1".into()));
    }
    let walls = walls_of(coarse);
    if k > 3 {
        return Ok(ChamberComplex {
            walls,
            chambers: vec![],
            enumerated: false,
        });
    }
    // interior directions keyed by sign vector, keeping the most interior one
    let mut interior: BTreeMap<Vec<i8>, (f64, Vec<f64>)> = BTreeMap::new();
    match k {
        1 => {
            offer_pure(&walls, vec![1.0], &mut interior);
            offer_pure(&walls, vec![-1.0], &mut interior);
        }
        2 => {
            // arcs between consecutive wall rays; the bisector is interior
            let mut angles: Vec<f64> = walls
                .iter()
                .flat_map(|w| {
                    let a = (-w[0]).atan2(w[1]);
                    [a, a + std::f64::consts::PI]
                })
                .map(|a| a.rem_euclid(2.0 * std::f64::consts::PI))
                .collect();
            angles.sort_by(f64::total_cmp);
            if angles.is_empty() {
                offer_pure(&walls, vec![1.0, 0.0], &mut interior);
            }
            for i in 0..angles.len() {
                let a = angles[i];
                let mut b = angles[(i + 1) % angles.len()];
                if b <= a {
                    b += 2.0 * std::f64::consts::PI;
                }
                let mid = 0.5 * (a + b);
                offer_pure(&walls, vec![mid.cos(), mid.sin()], &mut interior);
            }
        }
        _ => {
            let local = sphere_points(SPHERE_SAMPLES)
                .fold(BTreeMap::new, |mut map, u| {
                    offer_pure(&walls, u.to_vec(), &mut map);
                    map
                })
                .reduce(BTreeMap::new, merge_interior);
            interior = local;
        }
    }
    let mut chambers = Vec::with_capacity(interior.len());
    for (signs, (_, u)) in interior {
        let witness = integer_witness(&walls, &signs, &u).ok_or_else(|| {
            Error::NoConvergence(format!("no integer witness for chamber {signs:?}"))
        })?;
        chambers.push(Chamber { signs, witness });
    }
    Ok(ChamberComplex {
        walls,
        chambers,
        enumerated: true,
    })
}

fn offer_pure(walls: &[Vec<f64>], u: Vec<f64>, map: &mut BTreeMap<Vec<i8>, (f64, Vec<f64>)>) {
    if let Some(s) = sign_vector(walls, &u) {
        let mg = margin(walls, &u);
        let e = map.entry(s).or_insert((f64::NEG_INFINITY, vec![]));
        if better(mg, &u, e) {
            *e = (mg, u);
        }
    }
}

/// Larger margin wins; ties go to the lexicographically smaller direction
/// so the result does not depend on how samples were sharded.
fn better(mg: f64, u: &[f64], cur: &(f64, Vec<f64>)) -> bool {
    mg > cur.0
        || (mg == cur.0
            && u.iter()
                .zip(&cur.1)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .is_some_and(|o| o.is_lt()))
}

fn merge_interior(
    mut a: BTreeMap<Vec<i8>, (f64, Vec<f64>)>,
    b: BTreeMap<Vec<i8>, (f64, Vec<f64>)>,
) -> BTreeMap<Vec<i8>, (f64, Vec<f64>)> {
    for (s, (mg, u)) in b {
        let e = a.entry(s).or_insert((f64::NEG_INFINITY, vec![]));
        if better(mg, &u, e) {
            *e = (mg, u);
        }
    }
    a
}

/// Sampling oracle: number of distinct sign vectors over `samples`
/// uniformly random unit directions.
pub fn sampled_chamber_count(walls: &[Vec<f64>], k: usize, samples: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut drawn = 0;
    while drawn < samples {
        let u: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = u.iter().map(|x| x * x).sum();
        if !(1e-6..=1.0).contains(&r2) {
            continue;
        }
        drawn += 1;
        if let Some(s) = sign_vector(walls, &u) {
            seen.insert(s);
        }
    }
    seen.len()
}

/// Rational invariant subspaces attached to the factors of the
/// characteristic polynomial of the generic combination.
#[derive(Clone, Debug)]
pub struct FactorStructure {
    pub decomposition: JointDecomposition,
    pub factors: Vec<(IntPoly, u32)>,
    /// Index into `factors` for each joint eigenspace.
    pub space_factor: Vec<usize>,
}

pub fn factor_structure(spec: &ActionSpec, seed: u64) -> Result<FactorStructure> {
    let decomposition = joint_decomposition(spec, seed)?;
    let factors = decomposition.matrix.charpoly()?.factor()?;
    let space_factor = decomposition
        .spaces
        .iter()
        .map(|s| {
            factors
                .iter()
                .enumerate()
                .map(|(i, (f, _))| {
                    let scale: f64 = f.coeffs().iter().map(|&c| (c as f64).abs()).sum::<f64>()
                        * s.mu.norm().max(1.0).powi(f.degree().unwrap_or(0) as i32);
                    (i, f.eval(s.mu).norm() / scale)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect();
    Ok(FactorStructure {
        decomposition,
        factors,
        space_factor,
    })
}

impl FactorStructure {
    /// Integer basis of `ker prod_{i in set} f_i(C)^{m_i}`.
    pub fn kernel_basis(&self, set: &[usize]) -> Result<Vec<Vec<i64>>> {
        let c = &self.decomposition.matrix;
        let d = c.rows();
        if set.is_empty() {
            return Ok(vec![]);
        }
        let mut p = IntPoly::new(vec![1]);
        for &i in set {
            let (f, m) = &self.factors[i];
            p = p.mul(&f.pow(*m)?)?;
        }
        // Horner evaluation of p at C
        let mut acc = IntMatrix::zeros(d, d);
        for &a in p.coeffs().iter().rev() {
            acc = acc.mul(c)?.add(&IntMatrix::identity(d).scale(a))?;
        }
        let rows: Vec<Vec<i128>> = acc
            .to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(i128::from).collect())
            .collect();
        integer_kernel(&rows, d)
    }

    pub fn factor_dim(&self, i: usize) -> usize {
        let (f, m) = &self.factors[i];
        f.degree().unwrap_or(0) * *m as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankOneReport {
    pub has_rank_one_factor: bool,
    /// Integer basis of the invariant subspace `W` quotiented out.
    pub witness_subspace: Option<Vec<Vec<i64>>>,
    pub quotient_dim: usize,
    pub quotient_exponent_rank: usize,
    pub factors: Vec<IntPoly>,
}

pub fn has_rank_one_factor(spec: &ActionSpec, seed: u64) -> Result<RankOneReport> {
    let fs = factor_structure(spec, seed)?;
    let nf = fs.factors.len();
    if nf > 16 {
        return Err(Error::Unsupported(format!("{nf} rational factors")));
    }
    let mut masks: Vec<u32> = (0..(1u32 << nf) - 1).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let factors: Vec<IntPoly> = fs.factors.iter().map(|(f, _)| f.clone()).collect();
    let mut best_rank = usize::MAX;
    for mask in masks {
        let coeffs: Vec<Vec<f64>> = fs
            .decomposition
            .spaces
            .iter()
            .zip(&fs.space_factor)
            .filter(|(_, &fi)| mask & (1 << fi) == 0)
            .map(|(s, _)| s.coeffs.clone())
            .collect();
        let rank = numeric_rank(&coeffs);
        best_rank = best_rank.min(rank);
        if rank <= 1 {
            let set: Vec<usize> = (0..nf).filter(|i| mask & (1 << i) != 0).collect();
            let w = fs.kernel_basis(&set)?;
            let quotient_dim = spec.d() - w.len();
            return Ok(RankOneReport {
                has_rank_one_factor: true,
                witness_subspace: Some(w),
                quotient_dim,
                quotient_exponent_rank: rank,
                factors,
            });
        }
    }
    Ok(RankOneReport {
        has_rank_one_factor: false,
        witness_subspace: None,
        quotient_dim: 0,
        quotient_exponent_rank: best_rank,
        factors,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HigherRankReport {
    pub higher_rank: bool,
    pub independent_coarse_exponents: usize,
    pub rank_one: RankOneReport,
    pub note: &'static str,
}

pub fn is_higher_rank(spec: &ActionSpec, seed: u64) -> Result<HigherRankReport> {
    let spectrum = lyapunov_exponents(spec, seed)?;
    let coarse = coarse_exponents(&spectrum.exponents);
    let dirs: Vec<Vec<f64>> = coarse.iter().map(|c| c.direction.clone()).collect();
    let rank_one = has_rank_one_factor(spec, seed)?;
    Ok(HigherRankReport {
        higher_rank: spec.k() > 1 && !rank_one.has_rank_one_factor,
        independent_coarse_exponents: numeric_rank(&dirs),
        rank_one,
        note: "factors searched among rational invariant subspaces of the base torus only",
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosureReport {
    pub minimal: bool,
    pub closure_dim: usize,
    pub d: usize,
}

/// Rational closure of the sum of coarse Lyapunov spaces other than
/// `+-[chi]`; minimal when it is the whole space.
pub fn rational_closure_minimality(
    excluded: &[f64],
    spec: &ActionSpec,
    seed: u64,
) -> Result<ClosureReport> {
    let fs = factor_structure(spec, seed)?;
    let ex = unit(excluded);
    let mut touched = vec![false; fs.factors.len()];
    for (s, &fi) in fs.decomposition.spaces.iter().zip(&fs.space_factor) {
        if s.coeffs.iter().all(|c| c.abs() <= ZERO_EXPONENT_TOL) {
            continue;
        }
        let dir = unit(&s.coeffs);
        let neg: Vec<f64> = dir.iter().map(|x| -x).collect();
        if dist(&dir, &ex) <= PROPORTIONALITY_TOL || dist(&neg, &ex) <= PROPORTIONALITY_TOL {
            continue;
        }
        touched[fi] = true;
    }
    let closure_dim = (0..fs.factors.len())
        .filter(|&i| touched[i])
        .map(|i| fs.factor_dim(i))
        .sum();
    Ok(ClosureReport {
        minimal: closure_dim == spec.d(),
        closure_dim,
        d: spec.d(),
    })
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

    fn block() -> ActionSpec {
        let a = cat();
        let i = IntMatrix::identity(2);
        ActionSpec::new(vec![
            IntMatrix::block_diag(&a, &i),
            IntMatrix::block_diag(&i, &a),
        ])
        .unwrap()
    }

    fn quartic_units() -> ActionSpec {
        let m4 = m(&[&[3, 1, -1, 0], &[1, 4, 0, -1], &[1, 0, 0, 0], &[0, 1, 0, 0]]);
        let p = m(&[&[0, -1], &[-1, -1]]);
        ActionSpec::new(vec![m4, IntMatrix::block_diag(&p, &p)]).unwrap()
    }

    const LOG_GOLDEN_SQ: f64 = 0.962_423_650_119_206_9;

    #[test]
    fn rejects_non_commuting() {
        let err = ActionSpec::new(vec![cat(), m(&[&[1, 1], &[0, 1]])]).unwrap_err();
        assert_eq!(err, Error::NonCommuting(0, 1));
    }

    #[test]
    fn cat_map_exponents() {
        let s = lyapunov_exponents(&ActionSpec::new(vec![cat()]).unwrap(), 0).unwrap();
        assert_eq!(s.exponents.len(), 2);
        assert!((s.exponents[0].coeffs[0] - LOG_GOLDEN_SQ).abs() < 1e-12);
        assert!((s.exponents[1].coeffs[0] + LOG_GOLDEN_SQ).abs() < 1e-12);
        assert_eq!(s.center_dim, 0);
        assert_eq!(coarse_exponents(&s.exponents).len(), 2);
    }

    #[test]
    fn identity_is_all_center() {
        let s =
            lyapunov_exponents(&ActionSpec::new(vec![IntMatrix::identity(3)]).unwrap(), 0).unwrap();
        assert!(s.exponents.is_empty());
        assert_eq!(s.center_dim, 3);
    }

    #[test]
    fn defective_generator_reported() {
        let err = lyapunov_exponents(&ActionSpec::new(vec![m(&[&[1, 1], &[0, 1]])]).unwrap(), 0)
            .unwrap_err();
        assert!(matches!(err, Error::Defective(_)));
    }

    #[test]
    fn block_action_structure() {
        let spec = block();
        let s = lyapunov_exponents(&spec, 7).unwrap();
        let got: Vec<Vec<f64>> = s.exponents.iter().map(|e| e.coeffs.clone()).collect();
        let want = [
            [LOG_GOLDEN_SQ, 0.0],
            [0.0, LOG_GOLDEN_SQ],
            [0.0, -LOG_GOLDEN_SQ],
            [-LOG_GOLDEN_SQ, 0.0],
        ];
        for (g, w) in got.iter().zip(want) {
            assert!(dist(g, &w) < 1e-9, "{got:?}");
        }
        let ch = weyl_chambers(&coarse_exponents(&s.exponents), 2).unwrap();
        assert_eq!(ch.walls.len(), 2);
        let mut wit: Vec<Vec<i64>> = ch.chambers.iter().map(|c| c.witness.clone()).collect();
        wit.sort();
        assert_eq!(
            wit,
            vec![vec![-1, -1], vec![-1, 1], vec![1, -1], vec![1, 1]]
        );
        let r1 = has_rank_one_factor(&spec, 7).unwrap();
        assert!(r1.has_rank_one_factor);
        assert_eq!(r1.witness_subspace.as_ref().unwrap().len(), 2);
        assert!(!is_higher_rank(&spec, 7).unwrap().higher_rank);
        let cl = rational_closure_minimality(&[1.0, 0.0], &spec, 7).unwrap();
        assert!(!cl.minimal);
        assert_eq!(cl.closure_dim, 2);
    }

    #[test]
    fn quartic_units_are_higher_rank() {
        let spec = quartic_units();
        let s = lyapunov_exponents(&spec, 3).unwrap();
        assert_eq!(s.exponents.len(), 4);
        assert_eq!(coarse_exponents(&s.exponents).len(), 4);
        let r = is_higher_rank(&spec, 3).unwrap();
        assert!(r.higher_rank);
        assert!(r.independent_coarse_exponents >= 2);
        for e in &s.exponents {
            assert!(
                rational_closure_minimality(&e.coeffs, &spec, 3)
                    .unwrap()
                    .minimal
            );
        }
    }

    #[test]
    fn proportional_exponents_share_a_class() {
        let e = |c: f64, dim| ExponentFunctional {
            coeffs: vec![c, 2.0 * c],
            space_dim: dim,
            space_basis: vec![],
        };
        let classes = coarse_exponents(&[e(1.0, 1), e(2.0, 1), e(-1.0, 1)]);
        assert_eq!(classes.len(), 2);
        assert_eq!(classes[0].space_dim, 2);
    }

    #[test]
    fn chamber_counts_in_the_plane() {
        let c = |d: Vec<f64>| CoarseExponent {
            members: vec![],
            direction: unit(&d),
            space_dim: 1,
        };
        let one = weyl_chambers(&[c(vec![1.0, 1.0]), c(vec![-1.0, -1.0])], 2).unwrap();
        assert_eq!(one.chambers.len(), 2);
        let two = weyl_chambers(&[c(vec![1.0, 1.0]), c(vec![1.0, -2.0])], 2).unwrap();
        assert_eq!(two.chambers.len(), 4);
        for ch in &two.chambers {
            let nf: Vec<f64> = ch.witness.iter().map(|&x| x as f64).collect();
            assert_eq!(sign_vector(&two.walls, &nf).unwrap(), ch.signs);
        }
        assert_eq!(sampled_chamber_count(&two.walls, 2, 100_000, 1), 4);
    }

    #[test]
    fn chambers_in_three_dimensions() {
        let c = |d: Vec<f64>| CoarseExponent {
            members: vec![],
            direction: unit(&d),
            space_dim: 1,
        };
        // three generic planes through the origin cut R^3 into 8 chambers
        let cx = weyl_chambers(
            &[
                c(vec![1.0, 0.0, 0.0]),
                c(vec![0.0, 1.0, 0.0]),
                c(vec![1.0, 1.0, 1.0]),
            ],
            3,
        )
        .unwrap();
        assert_eq!(cx.chambers.len(), 8);
        assert_eq!(sampled_chamber_count(&cx.walls, 3, 100_000, 2), 8);
        for ch in &cx.chambers {
            let nf: Vec<f64> = ch.witness.iter().map(|&x| x as f64).collect();
            assert_eq!(sign_vector(&cx.walls, &nf).unwrap(), ch.signs);
        }
    }

    #[test]
    fn k1_is_rank_one() {
        let spec = ActionSpec::new(vec![cat()]).unwrap();
        assert!(has_rank_one_factor(&spec, 0).unwrap().has_rank_one_factor);
        assert!(!is_higher_rank(&spec, 0).unwrap().higher_rank);
        let ch = weyl_chambers(
            &coarse_exponents(&lyapunov_exponents(&spec, 0).unwrap().exponents),
            1,
        )
        .unwrap();
        assert_eq!(ch.chambers.len(), 2);
    }

    #[test]
    fn functional_linearity_and_determinant_balance() {
        let spec = quartic_units();
        let jd = joint_decomposition(&spec, 5).unwrap();
        for (n, mm) in [([1i64, 2], [-1i64, 1]), ([2, -1], [0, 3])] {
            let nm = [n[0] + mm[0], n[1] + mm[1]];
            let a = spec.element(&nm).unwrap();
            let a = to_complex(&a);
            for s in &jd.spaces {
                let v = s.basis.column(0);
                let lam = (v.adjoint() * (&a * v))[(0, 0)];
                let chi = |x: [i64; 2]| s.coeffs[0] * x[0] as f64 + s.coeffs[1] * x[1] as f64;
                assert!((lam.norm().ln() - (chi(n) + chi(mm))).abs() < 1e-9);
            }
        }
        let s = spectrum_from(&jd);
        for n in [[1.0, 0.0], [0.3, -2.0]] {
            let total: f64 = s
                .exponents
                .iter()
                .map(|e| e.space_dim as f64 * e.eval(&n))
                .sum();
            assert!(total.abs() < 1e-9);
        }
        assert_eq!(s.total_dim(), 4);
    }
}
