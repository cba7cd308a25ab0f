//! Franks-Manning coordinates for perturbed affine maps.
//!
//! A perturbation `F(x) = f(x) exp(-v(x))` of an affine map `f` with
//! hyperbolic base part `A` admits a unique bounded `phi` with
//! `phi(Fx) - A phi(x) = v_su(x) + pi(g0)`, where `g0` is the translation of
//! `f`. The map `Phi = pi + phi` then satisfies `Phi(Fx) = A Phi(x)`.
//! `phi` is computed pointwise from exact orbits:
//! `phi_s(x) = sum_j A_s^j u_s(F^{-j-1} x)` and
//! `phi_u(x) = -sum_j A_u^{-j-1} u_u(F^j x)`.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::intmat::IntMatrix;
use crate::nilpotent::{lattice_reduce, GroupElement, LatticeSpec, LieElement};
use crate::poly::classify_roots;

pub const DEFAULT_GRID_SU: usize = 64;
pub const DEFAULT_GRID_CENTER: usize = 16;
pub const DEFAULT_DEPTH: usize = 60;
/// The perturbation gate compares the C^1 size of `v` with this fraction of
/// the spectral gap.
pub const GATE_FRACTION: f64 = 0.2;

const GRID_MAGIC: &[u8; 8] = b"NILDYNG1";
const NEWTON_MAX_ITERS: usize = 60;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    #[default]
    Cos,
    Sin,
}

/// `amp * cos(2 pi freq.x + phase)` (or `sin`), with `x` the
/// fundamental-domain coordinates `(q, p, z, t)` and `amp` a Lie algebra
/// coefficient in the same flat layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub freq: Vec<i64>,
    pub amp: Vec<f64>,
    #[serde(default)]
    pub kind: TermKind,
    #[serde(default)]
    pub phase: f64,
}

/// Trigonometric polynomial `v: X_Gamma -> g`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleField {
    lattice: LatticeSpec,
    terms: Vec<FourierTerm>,
    center_dependent: bool,
}

impl CocycleField {
    pub fn new(lattice: LatticeSpec, terms: Vec<FourierTerm>) -> Result<Self> {
        let dim = lattice.dim();
        let zi = 2 * lattice.n;
        for (i, term) in terms.iter().enumerate() {
            if term.freq.len() != dim || term.amp.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "term {i}: freq and amp need {dim} entries (q, p, z, t)"
                )));
            }
            if term.amp.iter().any(|a| !a.is_finite()) || !term.phase.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "term {i}: non-finite amplitude"
                )));
            }
            if term.freq[zi] % lattice.r as i64 != 0 {
                return Err(Error::InvalidInput(format!(
                    "term {i}: center frequency {} is not a multiple of r = {}",
                    term.freq[zi], lattice.r
                )));
            }
        }
        let center_dependent = terms.iter().any(|t| t.freq[zi] != 0);
        Ok(Self {
            lattice,
            terms,
            center_dependent,
        })
    }

    pub fn zero(lattice: LatticeSpec) -> Self {
        Self {
            lattice,
            terms: Vec::new(),
            center_dependent: false,
        }
    }

    /// Constant field with the given base part `(a, b, s)`.
    pub fn constant(lattice: LatticeSpec, su: &[f64]) -> Result<Self> {
        let amp = LieElement::from_base(lattice.n, su).to_flat();
        Self::new(
            lattice,
            vec![FourierTerm {
                freq: vec![0; lattice.dim()],
                amp,
                kind: TermKind::Cos,
                phase: 0.0,
            }],
        )
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn is_center_dependent(&self) -> bool {
        self.center_dependent
    }

    /// Sum over terms of `|amp_su| * 2 pi |freq|`.
    pub fn c1_size(&self) -> f64 {
        let zi = 2 * self.lattice.n;
        self.terms
            .iter()
            .map(|t| {
                let amp: f64 = t
                    .amp
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != zi)
                    .map(|(_, a)| a * a)
                    .sum::<f64>()
                    .sqrt();
                let freq: f64 = t.freq.iter().map(|&f| (f * f) as f64).sum::<f64>().sqrt();
                amp * TAU * freq
            })
            .sum()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.center_dependent {
            out.push(
                "terms with nonzero center frequency are discontinuous across the \
                 fundamental-domain boundary"
                    .to_string(),
            );
        }
        out
    }

    fn coords(&self, x: &[f64]) -> Vec<f64> {
        if self.center_dependent {
            let mut y = x.to_vec();
            reduce_flat(
                &mut y,
                self.lattice.n,
                self.lattice.m,
                self.lattice.r as f64,
            );
            y
        } else {
            x.to_vec()
        }
    }

    /// Flat Lie element `v(x)`.
    fn eval_flat(&self, x: &[f64]) -> Vec<f64> {
        let c = self.coords(x);
        let mut out = vec![0.0; c.len()];
        for t in &self.terms {
            let w = trig(t, &c);
            for (o, a) in out.iter_mut().zip(&t.amp) {
                *o += a * w;
            }
        }
        out
    }

    pub fn eval(&self, x: &GroupElement<f64>) -> LieElement<f64> {
        let flat = self.eval_flat(&x.to_flat());
        LieElement::from_flat(self.lattice.n, self.lattice.m, &flat).expect("layout fixed")
    }

    /// Derivative of the base part of `v` with respect to the base
    /// coordinates, row-major `d x d`.
    fn jac_su(&self, x: &[f64]) -> Vec<f64> {
        let c = self.coords(x);
        let zi = 2 * self.lattice.n;
        let d = c.len() - 1;
        let mut out = vec![0.0; d * d];
        for t in &self.terms {
            let arg = phase_arg(t, &c);
            let dw = match t.kind {
                TermKind::Cos => -arg.sin(),
                TermKind::Sin => arg.cos(),
            } * TAU;
            for i in 0..d {
                let a = t.amp[su_index(i, zi)];
                if a == 0.0 {
                    continue;
                }
                for k in 0..d {
                    out[i * d + k] += a * dw * t.freq[su_index(k, zi)] as f64;
                }
            }
        }
        out
    }
}

fn phase_arg(t: &FourierTerm, c: &[f64]) -> f64 {
    let s: f64 = t.freq.iter().zip(c).map(|(&f, x)| f as f64 * x).sum();
    TAU * s + t.phase
}

fn trig(t: &FourierTerm, c: &[f64]) -> f64 {
    let arg = phase_arg(t, c);
    match t.kind {
        TermKind::Cos => arg.cos(),
        TermKind::Sin => arg.sin(),
    }
}

/// Flat index of base coordinate `k` (skipping the center slot).
fn su_index(k: usize, zi: usize) -> usize {
    if k < zi {
        k
    } else {
        k + 1
    }
}

fn flat_base(x: &[f64], zi: usize) -> Vec<f64> {
    x.iter()
        .enumerate()
        .filter(|(i, _)| *i != zi)
        .map(|(_, v)| *v)
        .collect()
}

/// `(q, p, z, t)(q', p', z', t')` on flat coordinates.
fn mul_flat(g: &[f64], h: &[f64], n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = g.iter().zip(h).map(|(a, b)| a + b).collect();
    out[2 * n] += (0..n).map(|i| g[i] * h[n + i]).sum::<f64>();
    out
}

fn exp_flat(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out[2 * n] += 0.5 * (0..n).map(|i| v[i] * v[n + i]).sum::<f64>();
    out
}

/// Fundamental-domain representative: `q, p, t` in `[0, 1)`, `z` in `[0, 1/r)`.
fn reduce_flat(x: &mut [f64], n: usize, m: usize, r: f64) {
    let zi = 2 * n;
    let mut k = vec![0.0; n];
    for i in 0..n {
        k[i] = x[i].floor();
    }
    let mut z = x[zi];
    for i in 0..n {
        let l = x[n + i].floor();
        let p0 = x[n + i] - l;
        z -= k[i] * p0;
        x[i] -= k[i];
        x[n + i] = p0;
    }
    for j in 0..m {
        x[zi + 1 + j] -= x[zi + 1 + j].floor();
    }
    x[zi] = z.rem_euclid(1.0 / r);
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn mat_vec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    if d == 0 {
        return Vec::new();
    }
    (0..a.len() / d)
        .map(|i| (0..d).map(|j| a[i * d + j] * x[j]).sum())
        .collect()
}

fn solve_small(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    DMatrix::from_row_slice(d, d, a)
        .lu()
        .solve(&nalgebra::DVector::from_column_slice(b))
        .map(|v| v.iter().copied().collect())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Stable/unstable splitting of a hyperbolic matrix, from the matrix sign
/// function of its Cayley transform.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub basis: DMatrix<f64>,
    pub basis_inv: DMatrix<f64>,
    pub stable_dim: usize,
    pub a_stable: DMatrix<f64>,
    pub a_unstable: DMatrix<f64>,
}

pub fn hyperbolic_splitting(a: &DMatrix<f64>) -> Result<Splitting> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let plus = (a + &id)
        .try_inverse()
        .ok_or_else(|| Error::NotHyperbolic("eigenvalue -1".into()))?;
    let mut s = (a - &id) * plus;
    let mut converged = false;
    for _ in 0..100 {
        let inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotHyperbolic("eigenvalue on the unit circle".into()))?;
        let mu = s.determinant().abs().powf(-1.0 / d as f64);
        let mu = if mu.is_finite() && mu > 0.0 { mu } else { 1.0 };
        let next = (&s * mu + inv / mu) * 0.5;
        let delta = (&next - &s).norm();
        let scale = next.norm();
        s = next;
        if delta <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence("matrix sign iteration".into()));
    }
    let p_s = (&id - &s) * 0.5;
    let p_u = (&id + &s) * 0.5;
    let ds = p_s.trace().round() as usize;
    let mut cols = range_basis(&p_s, ds);
    cols.extend(range_basis(&p_u, d - ds));
    let basis = DMatrix::from_columns(&cols);
    let basis_inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NoConvergence("degenerate stable/unstable basis".into()))?;
    let conj = &basis_inv * a * &basis;
    let off = conj.view((0, ds), (ds, d - ds)).norm() + conj.view((ds, 0), (d - ds, ds)).norm();
    if off > 1e-8 * a.norm() {
        return Err(Error::NoConvergence(format!(
            "splitting not invariant (off-diagonal {off:e})"
        )));
    }
    Ok(Splitting {
        a_stable: conj.view((0, 0), (ds, ds)).into_owned(),
        a_unstable: conj.view((ds, ds), (d - ds, d - ds)).into_owned(),
        basis,
        basis_inv,
        stable_dim: ds,
    })
}

fn range_basis(p: &DMatrix<f64>, k: usize) -> Vec<nalgebra::DVector<f64>> {
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    idx.into_iter()
        .take(k)
        .map(|i| u.column(i).into_owned())
        .collect()
}

/// C^1 size of `v` against the spectral gap of `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationGate {
    pub c1_size: f64,
    pub spectral_gap: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// `F(x) = f(x) exp(-v(x))` together with the data needed to solve for
/// `phi`.
#[derive(Clone, Debug)]
pub struct PerturbedMap {
    lattice: LatticeSpec,
    field: CocycleField,
    su: IntMatrix,
    a: Vec<f64>,
    a_inv: Vec<f64>,
    base_m: Vec<f64>,
    abel: Vec<f64>,
    beta: Vec<f64>,
    g0: Vec<f64>,
    g0_inv: Vec<f64>,
    shift: Vec<f64>,
    pub splitting: Splitting,
    pub gate: PerturbationGate,
}

impl PerturbedMap {
    pub fn new(f: &AffineMap<f64>, v: &CocycleField) -> Result<Self> {
        let lattice = *f.lattice();
        if v.lattice().n != lattice.n || v.lattice().m != lattice.m {
            return Err(Error::DimensionMismatch {
                expected: lattice.dim(),
                found: v.lattice().dim(),
            });
        }
        let aut = &f.automorphism;
        let field = if v.lattice().r == lattice.r {
            v.clone()
        } else {
            CocycleField::new(lattice, v.terms().to_vec())?
        };
        let su = aut.su_matrix();
        let cls = classify_roots(&su.charpoly()?)?;
        if !cls.hyperbolic {
            return Err(Error::NotHyperbolic(
                "the base part of the automorphism has an eigenvalue on the unit circle".into(),
            ));
        }
        let spectral_gap = cls
            .roots
            .iter()
            .map(|z| {
                let r = z.norm();
                if r > 1.0 {
                    r
                } else {
                    1.0 / r
                }
            })
            .fold(f64::INFINITY, f64::min)
            - 1.0;
        let threshold = GATE_FRACTION * spectral_gap;
        let c1_size = field.c1_size();
        let gate = PerturbationGate {
            c1_size,
            spectral_gap,
            threshold,
            passes: c1_size <= threshold,
        };
        let a_f = su.to_f64();
        let splitting = hyperbolic_splitting(&a_f)?;
        let g0 = f.translation.to_flat();
        let g0_inv = f.translation.inverse().to_flat();
        let shift = flat_base(&g0, 2 * lattice.n);
        Ok(Self {
            lattice,
            field,
            a: row_major(&a_f),
            a_inv: row_major(&su.inverse_unimodular()?.to_f64()),
            base_m: row_major(&aut.base().matrix().to_f64()),
            abel: row_major(&aut.abelian().to_f64()),
            beta: row_major(&aut.beta().to_f64()),
            su,
            g0,
            g0_inv,
            shift,
            splitting,
            gate,
        })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn field(&self) -> &CocycleField {
        &self.field
    }

    pub fn su_matrix(&self) -> &IntMatrix {
        &self.su
    }

    pub fn d(&self) -> usize {
        self.su.rows()
    }

    fn zi(&self) -> usize {
        2 * self.lattice.n
    }

    fn reduce(&self, x: &mut [f64]) {
        reduce_flat(x, self.lattice.n, self.lattice.m, self.lattice.r as f64);
    }

    fn beta_val(&self, xy: &[f64]) -> f64 {
        let k = xy.len();
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                acc += self.beta[i * k + j] * xy[i] * xy[j];
            }
        }
        0.5 * acc
    }

    fn automorphism_flat(&self, x: &[f64]) -> Vec<f64> {
        let n = self.lattice.n;
        let zi = self.zi();
        let xy = &x[..zi];
        let mut out = mat_vec(&self.base_m, xy);
        out.push(x[zi] + self.beta_val(xy));
        out.extend(mat_vec(&self.abel, &x[zi + 1..]));
        debug_assert_eq!(out.len(), 2 * n + 1 + self.lattice.m);
        out
    }

    /// `F(x)` on flat coordinates, without reduction.
    fn forward_flat(&self, x: &[f64]) -> Vec<f64> {
        let n = self.lattice.n;
        let v: Vec<f64> = self.field.eval_flat(x).iter().map(|a| -a).collect();
        let lx = self.automorphism_flat(x);
        mul_flat(&mul_flat(&lx, &self.g0_inv, n), &exp_flat(&v, n), n)
    }

    /// `F^{-1}(y)`: Newton on the base equation `A x - v_su(x) = y + pi(g0)`,
    /// then the center coordinate from the group law.
    fn backward_flat(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.lattice.n;
        let zi = self.zi();
        let d = self.d();
        let yb = flat_base(y, zi);
        let rhs: Vec<f64> = yb.iter().zip(&self.shift).map(|(a, b)| a + b).collect();
        let mut xb = mat_vec(&self.a_inv, &rhs);
        let mut z = y[zi];
        let outer = if self.field.is_center_dependent() {
            4
        } else {
            1
        };
        let mut x = vec![0.0; y.len()];
        for _ in 0..outer {
            let mut done = self.field.terms().is_empty();
            for _ in 0..NEWTON_MAX_ITERS {
                if done {
                    break;
                }
                fill_flat(&mut x, &xb, z, zi);
                let v = self.field.eval_flat(&x);
                let ax = mat_vec(&self.a, &xb);
                let g: Vec<f64> = (0..d)
                    .map(|i| ax[i] - v[su_index(i, zi)] - rhs[i])
                    .collect();
                let dv = self.field.jac_su(&x);
                let jac: Vec<f64> = self.a.iter().zip(&dv).map(|(a, b)| a - b).collect();
                let step = solve_small(&jac, &g)
                    .ok_or_else(|| Error::NoConvergence("singular Jacobian in F^-1".into()))?;
                let scale = 1.0 + xb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, s) in xb.iter_mut().zip(&step) {
                    *a -= s;
                }
                let sn = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sn <= 1e-15 * scale {
                    done = true;
                }
            }
            if !done {
                fill_flat(&mut x, &xb, z, zi);
                let v = self.field.eval_flat(&x);
                let ax = mat_vec(&self.a, &xb);
                let g = (0..d)
                    .map(|i| (ax[i] - v[su_index(i, zi)] - rhs[i]).abs())
                    .fold(0.0, f64::max);
                if g > 1e-10 {
                    return Err(Error::NoConvergence(format!("F^-1 Newton residual {g:e}")));
                }
            }
            fill_flat(&mut x, &xb, z, zi);
            let v = self.field.eval_flat(&x);
            let lx = mul_flat(&mul_flat(y, &exp_flat(&v, n), n), &self.g0, n);
            z = lx[zi] - self.beta_val(&xb[..zi]);
        }
        fill_flat(&mut x, &xb, z, zi);
        Ok(x)
    }

    pub fn forward(&self, x: &GroupElement<f64>) -> GroupElement<f64> {
        let y = self.forward_flat(&x.to_flat());
        GroupElement::from_flat(self.lattice.n, self.lattice.m, &y).expect("layout fixed")
    }

    pub fn backward(&self, y: &GroupElement<f64>) -> Result<GroupElement<f64>> {
        let x = self.backward_flat(&y.to_flat())?;
        GroupElement::from_flat(self.lattice.n, self.lattice.m, &x)
    }

    /// `u(x) = v_su(x) + pi(g0)`, the right-hand side of the cohomological
    /// equation.
    fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let v = self.field.eval_flat(x);
        let mut u = flat_base(&v, self.zi());
        for (a, b) in u.iter_mut().zip(&self.shift) {
            *a += b;
        }
        u
    }

    /// `u` along `x_{-depth-1} .. x_{depth+1}`; index `depth + 1` is `x`.
    fn orbit_rhs(&self, x: &[f64], depth: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); 2 * depth + 3];
        let mut cur = x.to_vec();
        self.reduce(&mut cur);
        out[depth + 1] = self.rhs(&cur);
        let start = cur.clone();
        for j in 0..=depth {
            cur = self.backward_flat(&cur)?;
            self.reduce(&mut cur);
            out[depth - j] = self.rhs(&cur);
        }
        cur = start;
        for j in 0..=depth {
            cur = self.forward_flat(&cur);
            self.reduce(&mut cur);
            out[depth + 2 + j] = self.rhs(&cur);
        }
        Ok(out)
    }

    fn kernels(&self, depth: usize) -> Kernels {
        let sp = &self.splitting;
        let d = self.d();
        let ds = sp.stable_dim;
        let bs = sp.basis.columns(0, ds);
        let bu = sp.basis.columns(ds, d - ds);
        let is = sp.basis_inv.rows(0, ds);
        let iu = sp.basis_inv.rows(ds, d - ds);
        let au_inv = sp
            .a_unstable
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::zeros(d - ds, d - ds));
        let mut ps = DMatrix::<f64>::identity(ds, ds);
        let mut pu = au_inv.clone();
        let mut stable = Vec::with_capacity(depth + 1);
        let mut unstable = Vec::with_capacity(depth + 1);
        for _ in 0..=depth {
            stable.push(row_major(&(bs * &ps * is)));
            unstable.push(row_major(&(bu * &pu * iu)));
            ps = &sp.a_stable * ps;
            pu = &au_inv * pu;
        }
        Kernels { stable, unstable }
    }

    /// `(phi(x), phi(Fx))` from one orbit, both in standard coordinates.
    fn phi_pair(
        &self,
        x: &[f64],
        depth: usize,
        k: &Kernels,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let d = self.d();
        let u = self.orbit_rhs(x, depth)?;
        let c = depth + 1;
        let mut phi = vec![0.0; d];
        let mut phi_f = vec![0.0; d];
        for j in 0..=depth {
            add_mv(&mut phi, &k.stable[j], &u[c - j - 1], 1.0);
            add_mv(&mut phi, &k.unstable[j], &u[c + j], -1.0);
            add_mv(&mut phi_f, &k.stable[j], &u[c - j], 1.0);
            add_mv(&mut phi_f, &k.unstable[j], &u[c + j + 1], -1.0);
        }
        Ok((phi, phi_f, u[c].clone()))
    }

    /// Truncated series for `phi` at an arbitrary point.
    pub fn phi_series(&self, x: &GroupElement<f64>, depth: usize) -> Result<Vec<f64>> {
        let k = self.kernels(depth);
        Ok(self.phi_pair(&x.to_flat(), depth, &k)?.0)
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<SemiconjugacyField> {
        if opts.grid_su == 0 || opts.grid_center == 0 {
            return Err(Error::InvalidInput("grid sizes must be positive".into()));
        }
        let l = self.lattice;
        let d = self.d();
        let zi = self.zi();
        let mut grid = vec![opts.grid_su; l.dim()];
        grid[zi] = if l.n == 0 { 1 } else { opts.grid_center };
        let kern = self.kernels(opts.depth);
        // without center dependence phi is constant along center circles
        let mut solve_grid = grid.clone();
        if !self.field.is_center_dependent() {
            solve_grid[zi] = 1;
        }
        let count: usize = solve_grid.iter().product();
        let a = &self.a;
        let results: Vec<Result<(Vec<f64>, f64)>> = (0..count)
            .into_par_iter()
            .map(|idx| {
                let x = grid_point(&solve_grid, idx, l.r, zi);
                let (phi, phi_f, u) = self.phi_pair(&x, opts.depth, &kern)?;
                let aphi = mat_vec(a, &phi);
                let res: Vec<f64> = (0..d).map(|i| phi_f[i] - aphi[i] - u[i]).collect();
                Ok((phi, norm2(&res)))
            })
            .collect();
        let mut solved = Vec::with_capacity(count);
        for r in results {
            solved.push(r?);
        }
        let total: usize = grid.iter().product();
        let mut phi = Vec::with_capacity(total * d);
        let mut residual = Vec::with_capacity(total);
        for idx in 0..total {
            let src = if self.field.is_center_dependent() {
                idx
            } else {
                let mut multi = unravel(&grid, idx);
                multi[zi] = 0;
                ravel(&solve_grid, &multi)
            };
            phi.extend_from_slice(&solved[src].0);
            residual.push(solved[src].1);
        }
        let residual_max = residual.iter().copied().fold(0.0, f64::max);
        let residual_mean = residual.iter().sum::<f64>() / total as f64;
        let mut warnings = self.field.warnings();
        if !self.gate.passes {
            warnings.push(format!(
                "C^1 size {:.4} of v exceeds {GATE_FRACTION} x spectral gap = {:.4}",
                self.gate.c1_size, self.gate.threshold
            ));
        }
        Ok(SemiconjugacyField {
            lattice: l,
            grid,
            d,
            truncation_depth: opts.depth,
            phi,
            residual,
            residual_max,
            residual_mean,
            su_matrix: self.su.clone(),
            gate: self.gate.clone(),
            warnings,
        })
    }
}

struct Kernels {
    stable: Vec<Vec<f64>>,
    unstable: Vec<Vec<f64>>,
}

fn add_mv(acc: &mut [f64], k: &[f64], u: &[f64], sign: f64) {
    let d = acc.len();
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..d {
            s += k[i * d + j] * u[j];
        }
        acc[i] += sign * s;
    }
}

fn fill_flat(x: &mut [f64], base: &[f64], z: f64, zi: usize) {
    x[..zi].copy_from_slice(&base[..zi]);
    x[zi] = z;
    x[zi + 1..].copy_from_slice(&base[zi..]);
}

fn unravel(grid: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; grid.len()];
    for k in (0..grid.len()).rev() {
        out[k] = idx % grid[k];
        idx /= grid[k];
    }
    out
}

fn ravel(grid: &[usize], multi: &[usize]) -> usize {
    grid.iter().zip(multi).fold(0, |acc, (g, i)| acc * g + i)
}

fn grid_point(grid: &[usize], idx: usize, r: u32, zi: usize) -> Vec<f64> {
    unravel(grid, idx)
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let scale = if k == zi {
                grid[k] as f64 * r as f64
            } else {
                grid[k] as f64
            };
            i as f64 / scale
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub grid_su: usize,
    pub grid_center: usize,
    pub depth: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grid_su: DEFAULT_GRID_SU,
            grid_center: DEFAULT_GRID_CENTER,
            depth: DEFAULT_DEPTH,
        }
    }
}

/// Grid samples of `phi` over the fundamental domain, point-major with `d`
/// values per point; the grid axes follow `(q, p, z, t)` with the last axis
/// varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiconjugacyField {
    pub lattice: LatticeSpec,
    pub grid: Vec<usize>,
    pub d: usize,
    pub truncation_depth: usize,
    pub phi: Vec<f64>,
    pub residual: Vec<f64>,
    pub residual_max: f64,
    pub residual_mean: f64,
    pub su_matrix: IntMatrix,
    pub gate: PerturbationGate,
    pub warnings: Vec<String>,
}

pub fn solve_franks_manning(
    f: &AffineMap<f64>,
    v: &CocycleField,
    opts: &SolveOptions,
) -> Result<SemiconjugacyField> {
    PerturbedMap::new(f, v)?.solve(opts)
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    dims: LatticeSpec,
    grid: Vec<usize>,
    d: usize,
    depth: usize,
    residuals: ResidualStats,
    su_matrix: IntMatrix,
    gate: PerturbationGate,
    warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

impl SemiconjugacyField {
    pub fn points(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn point_coords(&self, idx: usize) -> Vec<f64> {
        grid_point(&self.grid, idx, self.lattice.r, 2 * self.lattice.n)
    }

    pub fn phi_at(&self, idx: usize) -> &[f64] {
        &self.phi[idx * self.d..(idx + 1) * self.d]
    }

    fn sample(&self, multi: &[usize]) -> &[f64] {
        self.phi_at(ravel(&self.grid, multi))
    }

    /// Multilinear interpolation of `phi` at fundamental-domain coordinates.
    pub fn interpolate(&self, coords: &[f64]) -> Vec<f64> {
        let zi = 2 * self.lattice.n;
        let dim = self.grid.len();
        let mut lo = vec![0usize; dim];
        let mut hi = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for k in 0..dim {
            let g = self.grid[k];
            let scale = if k == zi {
                g as f64 * self.lattice.r as f64
            } else {
                g as f64
            };
            let u = coords[k] * scale;
            let i0 = u.floor();
            let f = u - i0;
            let i0 = (i0 as i64).rem_euclid(g as i64) as usize;
            lo[k] = i0;
            hi[k] = (i0 + 1) % g;
            frac[k] = if g == 1 { 0.0 } else { f };
        }
        let mut out = vec![0.0; self.d];
        let mut corner = vec![0usize; dim];
        for mask in 0..(1usize << dim) {
            let mut w = 1.0;
            for k in 0..dim {
                if mask >> k & 1 == 1 {
                    corner[k] = hi[k];
                    w *= frac[k];
                } else {
                    corner[k] = lo[k];
                    w *= 1.0 - frac[k];
                }
            }
            if w == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(self.sample(&corner)) {
                *o += w * s;
            }
        }
        out
    }

    /// Estimate of the multilinear interpolation error from second
    /// differences along each axis.
    pub fn interpolation_error_estimate(&self) -> f64 {
        let dim = self.grid.len();
        let mut total = 0.0;
        for k in 0..dim {
            let g = self.grid[k];
            if g < 3 {
                continue;
            }
            let mut worst = 0.0f64;
            for idx in 0..self.points() {
                let multi = unravel(&self.grid, idx);
                let mut prev = multi.clone();
                prev[k] = (multi[k] + g - 1) % g;
                let mut next = multi.clone();
                next[k] = (multi[k] + 1) % g;
                let (a, b, c) = (self.sample(&prev), self.sample(&multi), self.sample(&next));
                for i in 0..self.d {
                    worst = worst.max((a[i] - 2.0 * b[i] + c[i]).abs());
                }
            }
            total += worst / 8.0;
        }
        total
    }

    pub fn write_grid<W: Write>(&self, mut w: W) -> Result<()> {
        let header = GridHeader {
            dims: self.lattice,
            grid: self.grid.clone(),
            d: self.d,
            depth: self.truncation_depth,
            residuals: ResidualStats {
                max: self.residual_max,
                mean: self.residual_mean,
            },
            su_matrix: self.su_matrix.clone(),
            gate: self.gate.clone(),
            warnings: self.warnings.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let io = |e: std::io::Error| Error::InvalidInput(e.to_string());
        w.write_all(GRID_MAGIC).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for x in self.phi.iter().chain(&self.residual) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_grid<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::InvalidInput(format!("grid file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != GRID_MAGIC {
            return Err(Error::InvalidInput("grid file: bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::InvalidInput("grid file: header too large".into()));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(io)?;
        let h: GridHeader = serde_json::from_slice(&json)
            .map_err(|e| Error::InvalidInput(format!("grid header: {e}")))?;
        if h.grid.len() != h.dims.dim() || h.grid.contains(&0) {
            return Err(Error::InvalidInput("grid header: bad grid shape".into()));
        }
        let points: usize = h.grid.iter().product();
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf).map_err(io)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect())
        };
        let phi = read_f64s(points * h.d)?;
        let residual = read_f64s(points)?;
        Ok(Self {
            lattice: h.dims,
            grid: h.grid,
            d: h.d,
            truncation_depth: h.depth,
            phi,
            residual,
            residual_max: h.residuals.max,
            residual_mean: h.residuals.mean,
            su_matrix: h.su_matrix,
            gate: h.gate,
            warnings: h.warnings,
        })
    }

    /// One row per grid point: coordinates, `phi` components, residual.
    pub fn write_residual_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidInput(e.to_string());
        let (n, m) = (self.lattice.n, self.lattice.m);
        let mut cols: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
        cols.extend((1..=n).map(|i| format!("p{i}")));
        cols.push("z".into());
        cols.extend((1..=m).map(|i| format!("t{i}")));
        cols.extend((1..=self.d).map(|i| format!("phi{i}")));
        cols.push("residual".into());
        writeln!(w, "{}", cols.join(",")).map_err(io)?;
        for idx in 0..self.points() {
            let mut row: Vec<String> = self
                .point_coords(idx)
                .iter()
                .map(|x| x.to_string())
                .collect();
            row.extend(self.phi_at(idx).iter().map(|x| format!("{x:e}")));
            row.push(format!("{:e}", self.residual[idx]));
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// `Phi(x) = pi(x) + phi(x)` with `phi` interpolated on the grid.
pub fn phi_map(s: &SemiconjugacyField, x: &GroupElement<f64>) -> Result<Vec<f64>> {
    let (_, x0) = lattice_reduce(x, &s.lattice)?;
    let phi = s.interpolate(&x0.to_flat());
    Ok(x.base().iter().zip(phi).map(|(a, b)| a + b).collect())
}

/// `max |Phi(gamma x) - Phi(x) - pi(gamma)|` over grid points `x` and the
/// lattice generators `gamma`, with `Phi(gamma x)` read back through
/// reduction and interpolation.
pub fn equivariance_defect(s: &SemiconjugacyField) -> Result<f64> {
    let (n, m) = (s.lattice.n, s.lattice.m);
    let gens: Vec<GroupElement<f64>> = s.lattice.generators();
    let defects: Vec<Result<f64>> = (0..s.points())
        .into_par_iter()
        .map(|idx| {
            let x = GroupElement::from_flat(n, m, &s.point_coords(idx))?;
            let phi_x: Vec<f64> = x
                .base()
                .iter()
                .zip(s.phi_at(idx))
                .map(|(a, b)| a + b)
                .collect();
            let mut worst = 0.0f64;
            for g in &gens {
                let phi_gx = phi_map(s, &g.mul(&x)?)?;
                for ((a, b), c) in phi_gx.iter().zip(&phi_x).zip(g.base()) {
                    worst = worst.max((a - b - c).abs());
                }
            }
            Ok(worst)
        })
        .collect();
    let mut max = 0.0f64;
    for d in defects {
        max = max.max(d?);
    }
    Ok(max)
}

/// `|Phi(Fx) - A Phi(x)|` over the grid, with `phi(Fx)` recomputed from a
/// fresh orbit of `Fx`.
pub fn conjugacy_residual(s: &SemiconjugacyField, f: &PerturbedMap) -> Result<ResidualStats> {
    if s.lattice.n != f.lattice.n || s.lattice.m != f.lattice.m || s.d != f.d() {
        return Err(Error::DimensionMismatch {
            expected: f.lattice.dim(),
            found: s.lattice.dim(),
        });
    }
    let zi = 2 * s.lattice.n;
    let kern = f.kernels(s.truncation_depth);
    let mut eval_grid = s.grid.clone();
    if !f.field.is_center_dependent() {
        eval_grid[zi] = 1;
    }
    let count: usize = eval_grid.iter().product();
    let gaps: Vec<Result<f64>> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let multi = unravel(&eval_grid, idx);
            let x = grid_point(&eval_grid, idx, s.lattice.r, zi);
            let phi = s.sample(&multi);
            let fx = f.forward_flat(&x);
            let phi_fx = f.phi_pair(&fx, s.truncation_depth, &kern)?.0;
            let big_phi: Vec<f64> = flat_base(&x, zi)
                .iter()
                .zip(phi)
                .map(|(a, b)| a + b)
                .collect();
            let big_phi_f: Vec<f64> = flat_base(&fx, zi)
                .iter()
                .zip(&phi_fx)
                .map(|(a, b)| a + b)
                .collect();
            let a_phi = mat_vec(&f.a, &big_phi);
            let gap: Vec<f64> = big_phi_f.iter().zip(&a_phi).map(|(a, b)| a - b).collect();
            Ok(norm2(&gap))
        })
        .collect();
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for g in gaps {
        let g = g?;
        max = max.max(g);
        sum += g;
    }
    Ok(ResidualStats {
        max,
        mean: sum / count as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FiberProbeOptions {
    /// Newton starting points per base dimension.
    pub starts_per_dim: usize,
    pub center_samples: usize,
    /// Random points for the monotonicity proxy.
    pub monotone_points: usize,
    pub line_steps: usize,
    pub seed: u64,
}

impl Default for FiberProbeOptions {
    fn default() -> Self {
        Self {
            starts_per_dim: 3,
            center_samples: 16,
            monotone_points: 1000,
            line_steps: 40,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberReport {
    pub center_samples: usize,
    pub starts: usize,
    pub converged: usize,
    pub failed: usize,
    /// Largest distance mod `Z^d` between base solutions at one center value.
    pub max_spread: f64,
    /// Largest distance mod `Z^d` between base solutions at different
    /// center values.
    pub max_center_drift: f64,
    pub single_circle: bool,
    pub monotone_points: usize,
    pub monotone_passed: usize,
    pub monotone_fraction: f64,
}

fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(1.0);
            d.min(1.0 - d)
        })
        .fold(0.0, f64::max)
}

/// Samples `Phi^{-1}(y)` along center circles and checks monotonicity of
/// `Phi` along straight stable and unstable lines.
pub fn fiber_probe(
    s: &SemiconjugacyField,
    f: &PerturbedMap,
    y: &[f64],
    opts: &FiberProbeOptions,
) -> Result<FiberReport> {
    if !f.gate.passes {
        return Err(Error::Precondition(format!(
            "C^1 size {:.4} of v exceeds {GATE_FRACTION} x spectral gap = {:.4}",
            f.gate.c1_size, f.gate.threshold
        )));
    }
    let d = s.d;
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: y.len(),
        });
    }
    let (n, m, r) = (s.lattice.n, s.lattice.m, s.lattice.r);
    let zi = 2 * n;
    let cz = if n == 0 {
        1
    } else {
        opts.center_samples.max(1)
    };
    let per = opts.starts_per_dim.max(1);
    let starts = per.pow(d as u32);
    let big_phi = |b: &[f64], z: f64| -> Result<Vec<f64>> {
        let mut flat = vec![0.0; zi + 1 + m];
        fill_flat(&mut flat, b, z, zi);
        phi_map(s, &GroupElement::from_flat(n, m, &flat)?)
    };
    let mut converged = 0;
    let mut failed = 0;
    let mut max_spread = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut reference: Option<Vec<f64>> = None;
    for kz in 0..cz {
        let z = kz as f64 / (cz as f64 * r as f64);
        let mut found: Vec<Vec<f64>> = Vec::new();
        for st in 0..starts {
            let mut b: Vec<f64> = unravel(&vec![per; d], st)
                .iter()
                .map(|&i| (i as f64 + 0.5) / per as f64)
                .collect();
            let mut ok = false;
            for _ in 0..50 {
                let h: Vec<f64> = big_phi(&b, z)?.iter().zip(y).map(|(a, t)| a - t).collect();
                let h: Vec<f64> = h.iter().map(|v| v - v.round()).collect();
                if h.iter().all(|v| v.abs() < 1e-10) {
                    ok = true;
                    break;
                }
                let eps = 1e-6;
                let mut jac = vec![0.0; d * d];
                for k in 0..d {
                    let mut bp = b.clone();
                    let mut bm = b.clone();
                    bp[k] += eps;
                    bm[k] -= eps;
                    let (fp, fm) = (big_phi(&bp, z)?, big_phi(&bm, z)?);
                    for i in 0..d {
                        jac[i * d + k] = (fp[i] - fm[i]) / (2.0 * eps);
                    }
                }
                match solve_small(&jac, &h) {
                    Some(step) => {
                        for (a, s) in b.iter_mut().zip(step) {
                            *a -= s;
                        }
                    }
                    None => break,
                }
            }
            if ok {
                converged += 1;
                let mut flat = vec![0.0; zi + 1 + m];
                fill_flat(&mut flat, &b, z, zi);
                reduce_flat(&mut flat, n, m, r as f64);
                found.push(flat_base(&flat, zi));
            } else {
                failed += 1;
            }
        }
        for a in &found {
            for b in &found {
                max_spread = max_spread.max(torus_dist(a, b));
            }
            match &reference {
                None => reference = Some(a.clone()),
                Some(rf) => max_drift = max_drift.max(torus_dist(a, rf)),
            }
        }
    }
    let single_circle = failed == 0 && max_spread < 1e-6;

    let sp = &f.splitting;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let steps = opts.line_steps.max(2);
    let mut passed = 0;
    for _ in 0..opts.monotone_points {
        let flat: Vec<f64> = (0..zi + 1 + m)
            .map(|k| {
                let u: f64 = rng.gen();
                if k == zi {
                    u / r as f64
                } else {
                    u
                }
            })
            .collect();
        let x = GroupElement::from_flat(n, m, &flat)?;
        let phi_x = phi_map(s, &x)?;
        let mut ok = true;
        'dirs: for sigma in 0..d {
            let e: Vec<f64> = sp.basis.column(sigma).iter().copied().collect();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=steps {
                let t = -0.5 + i as f64 / steps as f64;
                let dir: Vec<f64> = e.iter().map(|v| v * t).collect();
                let xt = x.mul(&LieElement::from_base(n, &dir).exp())?;
                let diff: Vec<f64> = phi_map(s, &xt)?
                    .iter()
                    .zip(&phi_x)
                    .map(|(a, b)| a - b)
                    .collect();
                let coord: f64 = (0..d).map(|j| sp.basis_inv[(sigma, j)] * diff[j]).sum();
                if coord <= prev {
                    ok = false;
                    break 'dirs;
                }
                prev = coord;
            }
        }
        if ok {
            passed += 1;
        }
    }
    Ok(FiberReport {
        center_samples: cz,
        starts,
        converged,
        failed,
        max_spread,
        max_center_drift: max_drift,
        single_circle,
        monotone_points: opts.monotone_points,
        monotone_passed: passed,
        monotone_fraction: if opts.monotone_points == 0 {
            1.0
        } else {
            passed as f64 / opts.monotone_points as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{NilAutomorphism, SymplecticMatrix};

    fn cat_map() -> AffineMap<f64> {
        let m = SymplecticMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let aut = NilAutomorphism::new(
            m,
            IntMatrix::zeros(0, 0),
            LatticeSpec::new(1, 0, 1).unwrap(),
        )
        .unwrap();
        AffineMap::linear(aut)
    }

    fn sine_field(f: &AffineMap<f64>, eps: f64) -> CocycleField {
        let sp = hyperbolic_splitting(&f.automorphism.su_matrix().to_f64()).unwrap();
        let eu = sp.basis.column(1);
        CocycleField::new(
            *f.lattice(),
            vec![FourierTerm {
                freq: vec![1, 0, 0],
                amp: vec![eps * eu[0], eps * eu[1], 0.0],
                kind: TermKind::Sin,
                phase: 0.0,
            }],
        )
        .unwrap()
    }

    fn small() -> SolveOptions {
        SolveOptions {
            grid_su: 8,
            grid_center: 2,
            depth: 30,
        }
    }

    #[test]
    fn zero_field_gives_zero() {
        let f = cat_map();
        let v = CocycleField::zero(*f.lattice());
        let s = solve_franks_manning(&f, &v, &small()).unwrap();
        assert!(s.phi.iter().all(|&x| x == 0.0));
        assert_eq!(s.residual_max, 0.0);
    }

    #[test]
    fn splitting_of_cat_map() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let sp = hyperbolic_splitting(&a).unwrap();
        assert_eq!(sp.stable_dim, 1);
        let lam = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((sp.a_stable[(0, 0)] - lam).abs() < 1e-12);
        assert!((sp.a_unstable[(0, 0)] - 1.0 / lam).abs() < 1e-12);
    }

    #[test]
    fn backward_inverts_forward() {
        let f = cat_map();
        let v = sine_field(&f, 0.05);
        let pm = PerturbedMap::new(&f, &v).unwrap();
        let x = GroupElement::from_flat(1, 0, &[0.3, 0.7, 0.1]).unwrap();
        let back = pm.backward(&pm.forward(&x)).unwrap();
        assert!(back.coord_dist(&x) < 1e-13);
    }

    #[test]
    fn sine_residual_small() {
        let f = cat_map();
        let v = sine_field(&f, 0.05);
        let s = solve_franks_manning(&f, &v, &small()).unwrap();
        assert!(s.gate.passes);
        assert!(s.residual_max < 1e-10, "{}", s.residual_max);
        let pm = PerturbedMap::new(&f, &v).unwrap();
        let again = conjugacy_residual(&s, &pm).unwrap();
        assert!(again.max < 1e-10, "{}", again.max);
    }

    #[test]
    fn grid_round_trip() {
        let f = cat_map();
        let v = sine_field(&f, 0.05);
        let s = solve_franks_manning(&f, &v, &small()).unwrap();
        let mut buf = Vec::new();
        s.write_grid(&mut buf).unwrap();
        let back = SemiconjugacyField::read_grid(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(SemiconjugacyField::read_grid(&buf[..20]).is_err());
    }

    #[test]
    fn center_frequency_must_respect_r() {
        let l = LatticeSpec::new(1, 0, 2).unwrap();
        let term = FourierTerm {
            freq: vec![0, 0, 1],
            amp: vec![0.1, 0.0, 0.0],
            kind: TermKind::Cos,
            phase: 0.0,
        };
        assert!(CocycleField::new(l, vec![term.clone()]).is_err());
        let ok = FourierTerm {
            freq: vec![0, 0, 2],
            ..term
        };
        let v = CocycleField::new(l, vec![ok]).unwrap();
        assert!(v.is_center_dependent());
        assert_eq!(v.warnings().len(), 1);
    }
}
