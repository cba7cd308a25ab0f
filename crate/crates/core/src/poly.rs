//! Integer polynomials: roots, square-free decomposition, factorization
//! over the integers, root classification and Mahler measure.

use std::fmt;

use nalgebra::{DMatrix, Schur};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree accepted by the exact factorization.
pub const MAX_FACTOR_DEGREE: usize = 8;

/// Tolerance on `|log|lambda||` below which a root counts as on the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;

/// Integer polynomial, coefficients in ascending degree order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntPoly {
    c: Vec<i64>,
}

impl fmt::Debug for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntPoly({})", self)
    }
}

impl fmt::Display for IntPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &a) in self.c.iter().enumerate().rev() {
            if a == 0 {
                continue;
            }
            let sign = if a < 0 { "-" } else { "+" };
            if first {
                if a < 0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let m = a.unsigned_abs();
            match (i, m) {
                (0, _) => write!(f, "{m}")?,
                (1, 1) => write!(f, "t")?,
                (1, _) => write!(f, "{m}t")?,
                (_, 1) => write!(f, "t^{i}")?,
                _ => write!(f, "{m}t^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

impl Serialize for IntPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.descending().serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i64>::deserialize(d)?;
        Ok(IntPoly::from_descending(&v))
    }
}

impl IntPoly {
    pub fn new(mut ascending: Vec<i64>) -> Self {
        while ascending.last() == Some(&0) {
            ascending.pop();
        }
        Self { c: ascending }
    }

    /// Build from coefficients listed leading term first.
    pub fn from_descending(c: &[i64]) -> Self {
        Self::new(c.iter().rev().copied().collect())
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.c
    }

    pub fn descending(&self) -> Vec<i64> {
        self.c.iter().rev().copied().collect()
    }

    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    pub fn leading(&self) -> i64 {
        self.c.last().copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    pub fn content(&self) -> i64 {
        self.c.iter().fold(0i64, |g, &a| g.gcd(&a))
    }

    /// Primitive part with positive leading coefficient.
    pub fn primitive(&self) -> Self {
        let g = self.content();
        if g == 0 {
            return self.clone();
        }
        let s = if self.leading() < 0 { -g } else { g };
        Self::new(self.c.iter().map(|a| a / s).collect())
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.c
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * x + a as f64)
    }

    fn eval_deriv(&self, x: Complex64) -> Complex64 {
        self.c
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (i, &a)| {
                acc * x + (i as f64) * a as f64
            })
    }

    pub fn mul(&self, o: &Self) -> Result<Self> {
        if self.is_zero() || o.is_zero() {
            return Ok(Self::new(vec![]));
        }
        let mut out = vec![0i64; self.c.len() + o.c.len() - 1];
        for (i, &a) in self.c.iter().enumerate() {
            for (j, &b) in o.c.iter().enumerate() {
                let v = a.checked_mul(b).ok_or(Error::Overflow)?;
                out[i + j] = out[i + j].checked_add(v).ok_or(Error::Overflow)?;
            }
        }
        Ok(Self::new(out))
    }

    pub fn pow(&self, e: u32) -> Result<Self> {
        let mut acc = Self::new(vec![1]);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// Exact quotient `self / d` if `d` divides `self` over the integers.
    pub fn exact_div(&self, d: &Self) -> Option<Self> {
        let dd = d.degree()?;
        let lc = d.leading() as i128;
        let mut r: Vec<i128> = self.c.iter().map(|&a| a as i128).collect();
        if r.len() < d.c.len() {
            return if self.is_zero() {
                Some(self.clone())
            } else {
                None
            };
        }
        let mut q = vec![0i128; r.len() - dd];
        for k in (0..q.len()).rev() {
            let top = r[k + dd];
            if top % lc != 0 {
                return None;
            }
            let f = top / lc;
            q[k] = f;
            for (j, &b) in d.c.iter().enumerate() {
                r[k + j] = r[k + j].checked_sub(f.checked_mul(b as i128)?)?;
            }
        }
        if r.iter().any(|&x| x != 0) {
            return None;
        }
        let q: Option<Vec<i64>> = q.into_iter().map(|x| i64::try_from(x).ok()).collect();
        Some(Self::new(q?))
    }

    /// Complex roots with multiplicity, computed per square-free part so
    /// that repeated roots stay accurate.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let mut out = Vec::new();
        for (f, mult) in self.square_free_decomposition()? {
            let r = simple_roots(&f);
            for _ in 0..mult {
                out.extend_from_slice(&r);
            }
        }
        sort_roots(&mut out);
        Ok(out)
    }

    /// Yun decomposition `self = c * prod f_i^i` with each `f_i` primitive
    /// and square-free. Constant factors are dropped.
    pub fn square_free_decomposition(&self) -> Result<Vec<(IntPoly, u32)>> {
        if self.degree().unwrap_or(0) == 0 {
            return Ok(vec![]);
        }
        let f = QPoly::from_int(self);
        let fp = f.derivative();
        let a0 = f.gcd(&fp);
        let mut b = f.div_exact(&a0);
        let mut c = fp.div_exact(&a0);
        let mut d = c.sub(&b.derivative());
        let mut out = Vec::new();
        let mut i = 1u32;
        while b.degree() > 0 {
            let a = b.gcd(&d);
            b = b.div_exact(&a);
            c = d.div_exact(&a);
            d = c.sub(&b.derivative());
            if a.degree() > 0 {
                out.push((a.to_primitive_int()?, i));
            }
            i += 1;
        }
        Ok(out)
    }

    /// Factorization into irreducible primitive integer polynomials with
    /// multiplicities (content dropped), for degree at most 8.
    pub fn factor(&self) -> Result<Vec<(IntPoly, u32)>> {
        let deg = self.degree().unwrap_or(0);
        if deg > MAX_FACTOR_DEGREE {
            return Err(Error::Unsupported(format!(
                "exact factorization limited to degree {MAX_FACTOR_DEGREE}, got {deg}"
            )));
        }
        let mut out = Vec::new();
        for (f, mult) in self.square_free_decomposition()? {
            for g in factor_square_free(&f)? {
                out.push((g, mult));
            }
        }
        out.sort_by_key(|a| (a.0.degree(), a.0.descending()));
        Ok(out)
    }

    pub fn is_irreducible(&self) -> Result<bool> {
        let f = self.factor()?;
        Ok(f.len() == 1 && f[0].1 == 1)
    }
}

fn sort_roots(r: &mut [Complex64]) {
    r.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Roots of a square-free polynomial: companion eigensolve then Newton.
fn simple_roots(f: &IntPoly) -> Vec<Complex64> {
    let Some(d) = f.degree() else { return vec![] };
    if d == 0 {
        return vec![];
    }
    let lc = f.leading() as f64;
    let comp = DMatrix::from_fn(d, d, |i, j| {
        if j == d - 1 {
            -(f.c[i] as f64) / lc
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots = eigenvalues(&comp);
    for z in roots.iter_mut() {
        let mut best = *z;
        let mut best_res = f.eval(best).norm();
        let mut cur = *z;
        for _ in 0..60 {
            let dp = f.eval_deriv(cur);
            if dp.norm() == 0.0 {
                break;
            }
            cur -= f.eval(cur) / dp;
            let res = f.eval(cur).norm();
            if res < best_res {
                best = cur;
                best_res = res;
            } else {
                break;
            }
        }
        if best.im.abs() <= 1e-12 * best.norm().max(1.0) {
            best.im = 0.0;
        }
        *z = best;
    }
    roots
}

/// Eigenvalues by bounded Schur iteration. Real shifts are tried first;
/// spectra symmetric under `z -> -z` (where real QR stalls) fall through to
/// complex shifts, which break the symmetry.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let d = m.nrows();
    for shift in [0.0, 0.31, -0.57, 1.37] {
        let shifted = m + DMatrix::identity(d, d) * shift;
        if let Some(s) = Schur::try_new(shifted, f64::EPSILON, 10_000) {
            return s.complex_eigenvalues().iter().map(|z| z - shift).collect();
        }
    }
    let mc: DMatrix<Complex64> = m.map(|x| Complex64::new(x, 0.0));
    let scale = m.norm().max(1.0);
    for k in 1..=16 {
        let shift = Complex64::from_polar(0.1 * scale * k as f64, 0.618_033_988 * k as f64);
        let shifted = &mc + DMatrix::identity(d, d) * shift;
        if let Some(ev) =
            Schur::try_new(shifted, f64::EPSILON, 10_000).and_then(|s| s.eigenvalues())
        {
            return ev.iter().map(|z| z - shift).collect();
        }
    }
    panic!("Schur iteration failed to converge on a {d}x{d} matrix")
}

fn divisors(n: i64) -> Vec<i64> {
    let n = n.abs();
    (1..=n).filter(|d| n % d == 0).collect()
}

fn factor_square_free(f: &IntPoly) -> Result<Vec<IntPoly>> {
    let f = f.primitive();
    let deg = f.degree().unwrap_or(0);
    if deg <= 1 {
        return Ok(vec![f]);
    }
    let roots = simple_roots(&f);
    let norm2 = f.c.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let lc = f.leading();
    for size in 1..=deg / 2 {
        // Mignotte: coefficients of a degree-`size` factor are bounded by
        // binom(size, j) * ||f||_2 <= 2^size * ||f||_2
        let bound = 2f64.powi(size as i32) * norm2 * lc.abs() as f64;
        for mask in 0u32..(1u32 << deg) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let mut prod = vec![Complex64::new(1.0, 0.0)];
            for (i, r) in roots.iter().enumerate() {
                if mask & (1 << i) == 0 {
                    continue;
                }
                let mut next = vec![Complex64::new(0.0, 0.0); prod.len() + 1];
                for (j, &p) in prod.iter().enumerate() {
                    next[j + 1] += p;
                    next[j] -= p * r;
                }
                prod = next;
            }
            if prod.iter().any(|c| c.im.abs() > 1e-6 * (1.0 + c.re.abs())) {
                continue;
            }
            for c in divisors(lc) {
                let coeffs: Vec<f64> = prod.iter().map(|z| z.re * c as f64).collect();
                if coeffs.iter().any(|x| x.abs() > bound + 0.5) {
                    continue;
                }
                if coeffs.iter().any(|x| x.abs() > 1e15) {
                    return Err(Error::Overflow);
                }
                let cand =
                    IntPoly::new(coeffs.iter().map(|x| x.round() as i64).collect()).primitive();
                if cand.degree() != Some(size) {
                    continue;
                }
                if let Some(q) = f.exact_div(&cand) {
                    let mut out = vec![cand];
                    out.extend(factor_square_free(&q)?);
                    return Ok(out);
                }
            }
        }
    }
    Ok(vec![f])
}

/// Polynomial over the rationals, ascending coefficients, trimmed.
#[derive(Clone, Debug)]
struct QPoly(Vec<BigRational>);

impl QPoly {
    fn from_int(p: &IntPoly) -> Self {
        Self(
            p.c.iter()
                .map(|&a| BigRational::from_integer(BigInt::from(a)))
                .collect(),
        )
        .trim()
    }

    fn trim(mut self) -> Self {
        while self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        self
    }

    fn degree(&self) -> isize {
        self.0.len() as isize - 1
    }

    fn derivative(&self) -> Self {
        Self(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, a)| a * BigRational::from_integer(BigInt::from(i)))
                .collect(),
        )
        .trim()
    }

    fn sub(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        let z = BigRational::zero();
        Self(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&z) - o.0.get(i).unwrap_or(&z))
                .collect(),
        )
        .trim()
    }

    fn divrem(&self, d: &Self) -> (Self, Self) {
        let dd = d.0.len() - 1;
        let lc = d.0[dd].clone();
        let mut r = self.0.clone();
        if r.len() <= dd {
            return (Self(vec![]), self.clone());
        }
        let mut q = vec![BigRational::zero(); r.len() - dd];
        for k in (0..q.len()).rev() {
            let f = &r[k + dd] / &lc;
            for (j, b) in d.0.iter().enumerate() {
                r[k + j] = &r[k + j] - &f * b;
            }
            q[k] = f;
        }
        (Self(q).trim(), Self(r).trim())
    }

    fn div_exact(&self, d: &Self) -> Self {
        self.divrem(d).0
    }

    fn monic(self) -> Self {
        match self.0.last().cloned() {
            Some(lc) => Self(self.0.into_iter().map(|a| a / &lc).collect()),
            None => self,
        }
    }

    fn gcd(&self, o: &Self) -> Self {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.0.is_empty() {
            let r = a.divrem(&b).1;
            a = b;
            b = r;
        }
        a.monic()
    }

    fn to_primitive_int(&self) -> Result<IntPoly> {
        let l = self
            .0
            .iter()
            .fold(BigInt::one(), |acc, a| acc.lcm(a.denom()));
        let lr = BigRational::from_integer(l);
        let ints: Vec<BigInt> = self.0.iter().map(|a| (a * &lr).to_integer()).collect();
        let g = ints.iter().fold(BigInt::zero(), |acc, a| acc.gcd(a));
        let sign = BigInt::from(if ints.last().is_some_and(|x| x.is_negative()) {
            -1
        } else {
            1
        });
        let c: Option<Vec<i64>> = ints.iter().map(|a| (a / &g * &sign).to_i64()).collect();
        Ok(IntPoly::new(c.ok_or(Error::Overflow)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootClassification {
    pub r1: usize,
    pub r2: usize,
    pub hyperbolic: bool,
    /// `None` when the degree exceeds the factorization limit.
    pub irreducible: Option<bool>,
    #[serde(serialize_with = "ser_roots")]
    pub roots: Vec<Complex64>,
}

fn ser_roots<S: serde::Serializer>(r: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = r.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(s)
}

impl RootClassification {
    pub fn log_moduli(&self) -> Vec<f64> {
        self.roots.iter().map(|z| z.norm().ln()).collect()
    }

    /// The root closest to the unit circle, if any lies within tolerance.
    pub fn unit_circle_root(&self) -> Option<Complex64> {
        self.roots
            .iter()
            .copied()
            .filter(|z| z.norm().ln().abs() <= UNIT_CIRCLE_TOL)
            .min_by(|a, b| a.norm().ln().abs().total_cmp(&b.norm().ln().abs()))
    }
}

/// Whether a root counts as real for the `r1` count.
pub fn is_real_root(z: Complex64) -> bool {
    z.im.abs() <= 1e-9 * z.norm().max(1.0)
}

pub fn classify_roots(p: &IntPoly) -> Result<RootClassification> {
    let deg = p
        .degree()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::InvalidInput("polynomial must have positive degree".into()))?;
    let roots = p.roots()?;
    let r1 = roots.iter().filter(|z| is_real_root(**z)).count();
    let r2 = (deg - r1) / 2;
    let hyperbolic = roots.iter().all(|z| z.norm().ln().abs() > UNIT_CIRCLE_TOL);
    let irreducible = if deg <= MAX_FACTOR_DEGREE {
        Some(p.is_irreducible()?)
    } else {
        None
    };
    Ok(RootClassification {
        r1,
        r2,
        hyperbolic,
        irreducible,
        roots,
    })
}

/// Product of `max(1, |root|)`; requires a monic polynomial with constant
/// term `+-1`.
pub fn mahler_measure(p: &IntPoly) -> Result<f64> {
    if p.leading() != 1 {
        return Err(Error::InvalidInput(format!("{p} is not monic")));
    }
    let c0 = p.c.first().copied().unwrap_or(0);
    if c0.abs() != 1 {
        return Err(Error::InvalidInput(format!(
            "{p} has constant term {c0}, not +-1"
        )));
    }
    Ok(p.roots()?.iter().map(|z| z.norm().max(1.0)).product())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_serde() {
        let p = IntPoly::from_descending(&[1, -3, 1]);
        assert_eq!(p.to_string(), "t^2 - 3t + 1");
        assert_eq!(serde_json::to_string(&p).unwrap(), "[1,-3,1]");
    }

    #[test]
    fn golden_quadratic() {
        let c = classify_roots(&IntPoly::from_descending(&[1, -3, 1])).unwrap();
        assert_eq!((c.r1, c.r2), (2, 0));
        assert!(c.hyperbolic);
        assert_eq!(c.irreducible, Some(true));
        assert!((c.roots[0].re - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_quadratic() {
        let c = classify_roots(&IntPoly::from_descending(&[1, 0, 1])).unwrap();
        assert_eq!((c.r1, c.r2), (0, 1));
        assert!(!c.hyperbolic);
    }

    #[test]
    fn reciprocal_quartic() {
        let c = classify_roots(&IntPoly::from_descending(&[1, -1, -1, -1, 1])).unwrap();
        assert_eq!(c.r1 + 2 * c.r2, 4);
        assert_eq!((c.r1, c.r2), (2, 1));
        assert_eq!(c.irreducible, Some(true));
    }

    #[test]
    fn factors_products() {
        let a = IntPoly::from_descending(&[1, -3, 1]);
        let b = IntPoly::from_descending(&[1, 1, 1]);
        let l = IntPoly::from_descending(&[2, -1]);
        let p = a.mul(&b).unwrap().mul(&l).unwrap().mul(&l).unwrap();
        let f = p.factor().unwrap();
        assert_eq!(f, vec![(l.clone(), 2), (a.clone(), 1), (b.clone(), 1)]);
        assert!(!p.is_irreducible().unwrap());
        // (t^2-3t+1)^2 keeps multiplicity
        let sq = a.pow(2).unwrap();
        assert_eq!(sq.factor().unwrap(), vec![(a, 2)]);
    }

    #[test]
    fn swinnerton_dyer_is_irreducible() {
        // minimal polynomial of sqrt2 + sqrt3: irreducible but splits mod every prime
        let p = IntPoly::from_descending(&[1, 0, -10, 0, 1]);
        assert!(p.is_irreducible().unwrap());
        // t^4 + 4 = (t^2+2t+2)(t^2-2t+2)
        let q = IntPoly::from_descending(&[1, 0, 0, 0, 4]);
        assert_eq!(q.factor().unwrap().len(), 2);
    }

    #[test]
    fn mahler_values() {
        let cyc = IntPoly::from_descending(&[1, -1, 1]);
        assert!((mahler_measure(&cyc).unwrap() - 1.0).abs() < 1e-9);
        let lehmer = IntPoly::from_descending(&[1, 1, 0, -1, -1, -1, -1, -1, 0, 1, 1]);
        assert!((mahler_measure(&lehmer).unwrap() - 1.176_280_818).abs() < 1e-6);
        assert!(mahler_measure(&IntPoly::from_descending(&[2, 1])).is_err());
        assert!(mahler_measure(&IntPoly::from_descending(&[1, 0, 2])).is_err());
    }

    #[test]
    fn degree_limit() {
        let lehmer = IntPoly::from_descending(&[1, 1, 0, -1, -1, -1, -1, -1, 0, 1, 1]);
        assert!(matches!(lehmer.factor(), Err(Error::Unsupported(_))));
        let c = classify_roots(&lehmer).unwrap();
        assert_eq!(c.irreducible, None);
        assert_eq!(c.roots.len(), 10);
    }
}
