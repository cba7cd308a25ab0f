//! Arithmetic in the 2-step group `G = H^n x R^m` and its Lie algebra.
//!
//! Coordinates are `(q, p, z, t)` with `q, p` in `R^n`, the center
//! coordinate `z`, and the abelian factor `t` in `R^m`. The product is
//!
//! ```text
//! (q, p, z, t)(q', p', z', t') = (q + q', p + p', z + z' + q.p', t + t')
//! ```
//!
//! and the bracket of the Lie algebra is `[(X, c), (X', c')] = (0, w(X, X'))`
//! with `w((a, b), (a', b')) = a.b' - b.a'`.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub z: T,
    pub t: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LieElement<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: T,
    pub s: Vec<T>,
}

/// Standard lattice: `q, p` in `Z^n`, `z` in `(1/r) Z`, `t` in `Z^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n: usize,
    pub m: usize,
    pub r: u32,
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn add_vec<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.clone() + y.clone())
        .collect()
}

fn neg_vec<T: Scalar>(a: &[T]) -> Vec<T> {
    a.iter().map(|x| -x.clone()).collect()
}

impl<T: Scalar> GroupElement<T> {
    pub fn new(q: Vec<T>, p: Vec<T>, z: T, t: Vec<T>) -> Result<Self> {
        check_len(q.len(), p.len())?;
        Ok(Self { q, p, z, t })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            q: vec![T::zero(); n],
            p: vec![T::zero(); n],
            z: T::zero(),
            t: vec![T::zero(); m],
        }
    }

    pub fn central(n: usize, m: usize, z: T) -> Self {
        Self {
            z,
            ..Self::identity(n, m)
        }
    }

    /// Parse the flat layout `[q..., p..., z, t...]`.
    pub fn from_flat(n: usize, m: usize, flat: &[T]) -> Result<Self> {
        check_len(2 * n + 1 + m, flat.len())?;
        Ok(Self {
            q: flat[..n].to_vec(),
            p: flat[n..2 * n].to_vec(),
            z: flat[2 * n].clone(),
            t: flat[2 * n + 1..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.q.len() * 2 + 1 + self.t.len());
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out.push(self.z.clone());
        out.extend_from_slice(&self.t);
        out
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.t.len()
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        check_len(self.n(), other.n())?;
        check_len(self.m(), other.m())
    }

    /// Base projection `(q, p, t)` onto `R^{2n+m}`.
    pub fn base(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(2 * self.n() + self.m());
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out.extend_from_slice(&self.t);
        out
    }

    pub fn mul(&self, h: &Self) -> Result<Self> {
        self.same_shape(h)?;
        Ok(self.mul_unchecked(h))
    }

    pub(crate) fn mul_unchecked(&self, h: &Self) -> Self {
        Self {
            q: add_vec(&self.q, &h.q),
            p: add_vec(&self.p, &h.p),
            z: self.z.clone() + h.z.clone() + dot(&self.q, &h.p),
            t: add_vec(&self.t, &h.t),
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            q: neg_vec(&self.q),
            p: neg_vec(&self.p),
            z: dot(&self.q, &self.p) - self.z.clone(),
            t: neg_vec(&self.t),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.q
            .iter()
            .chain(&self.p)
            .chain(&self.t)
            .all(|x| x.is_zero())
            && self.z.is_zero()
    }

    /// Dilation `(q, p, z, t) -> (lq, lp, l^2 z, lt)`.
    pub fn dilate(&self, l: &T) -> Self {
        let sc = |v: &[T]| v.iter().map(|x| x.clone() * l.clone()).collect();
        Self {
            q: sc(&self.q),
            p: sc(&self.p),
            z: self.z.clone() * l.clone() * l.clone(),
            t: sc(&self.t),
        }
    }

    pub fn to_f64(&self) -> GroupElement<f64> {
        let f = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect();
        GroupElement {
            q: f(&self.q),
            p: f(&self.p),
            z: self.z.to_f64_lossy(),
            t: f(&self.t),
        }
    }

    /// Logarithm, exact inverse of [`exp`].
    pub fn log(&self) -> LieElement<T> {
        LieElement {
            a: self.q.clone(),
            b: self.p.clone(),
            c: self.z.clone() - dot(&self.q, &self.p) * T::half(),
            s: self.t.clone(),
        }
    }
}

impl GroupElement<f64> {
    /// Max-norm distance between coordinate vectors.
    pub fn coord_dist(&self, other: &Self) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl<T: Scalar> LieElement<T> {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            a: vec![T::zero(); n],
            b: vec![T::zero(); n],
            c: T::zero(),
            s: vec![T::zero(); m],
        }
    }

    pub fn from_flat(n: usize, m: usize, flat: &[T]) -> Result<Self> {
        let g = GroupElement::from_flat(n, m, flat)?;
        Ok(Self {
            a: g.q,
            b: g.p,
            c: g.z,
            s: g.t,
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.a.len() * 2 + 1 + self.s.len());
        out.extend_from_slice(&self.a);
        out.extend_from_slice(&self.b);
        out.push(self.c.clone());
        out.extend_from_slice(&self.s);
        out
    }

    /// Element with only the given base part `(a, b, s)` and zero center.
    pub fn from_base(n: usize, base: &[T]) -> Self {
        Self {
            a: base[..n].to_vec(),
            b: base[n..2 * n].to_vec(),
            c: T::zero(),
            s: base[2 * n..].to_vec(),
        }
    }

    pub fn base(&self) -> Vec<T> {
        let mut out = self.a.clone();
        out.extend_from_slice(&self.b);
        out.extend_from_slice(&self.s);
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            a: add_vec(&self.a, &o.a),
            b: add_vec(&self.b, &o.b),
            c: self.c.clone() + o.c.clone(),
            s: add_vec(&self.s, &o.s),
        }
    }

    pub fn scale(&self, k: &T) -> Self {
        let sc = |v: &[T]| v.iter().map(|x| x.clone() * k.clone()).collect();
        Self {
            a: sc(&self.a),
            b: sc(&self.b),
            c: self.c.clone() * k.clone(),
            s: sc(&self.s),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(&-T::one())
    }

    /// Symplectic pairing of the Heisenberg parts.
    pub fn omega(&self, o: &Self) -> T {
        dot(&self.a, &o.b) - dot(&self.b, &o.a)
    }

    pub fn bracket(&self, o: &Self) -> Self {
        Self {
            c: self.omega(o),
            ..Self::zero(self.a.len(), self.s.len())
        }
    }

    pub fn exp(&self) -> GroupElement<T> {
        exp(self)
    }
}

/// Symplectic form on base vectors `(q, p, t)`; the abelian part is ignored.
pub fn omega_base(n: usize, x: &[f64], y: &[f64]) -> f64 {
    (0..n).map(|i| x[i] * y[n + i] - x[n + i] * y[i]).sum()
}

pub fn group_mul<T: Scalar>(g: &GroupElement<T>, h: &GroupElement<T>) -> Result<GroupElement<T>> {
    g.mul(h)
}

/// `exp(a, b, c, s) = (a, b, c + a.b/2, s)`.
pub fn exp<T: Scalar>(x: &LieElement<T>) -> GroupElement<T> {
    GroupElement {
        q: x.a.clone(),
        p: x.b.clone(),
        z: x.c.clone() + dot(&x.a, &x.b) * T::half(),
        t: x.s.clone(),
    }
}

pub fn log<T: Scalar>(g: &GroupElement<T>) -> LieElement<T> {
    g.log()
}

fn euclid<T: Scalar>(v: &[T]) -> f64 {
    v.iter()
        .map(|x| x.to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Norm of `log(exp X exp Y) - (X + Y + [X, Y]/2)`.
pub fn bch_check<T: Scalar>(x: &LieElement<T>, y: &LieElement<T>) -> Result<f64> {
    let prod = exp(x).mul(&exp(y))?;
    let lhs = prod.log();
    let rhs = x.add(y).add(&x.bracket(y).scale(&T::half()));
    let diff: Vec<T> = lhs
        .to_flat()
        .into_iter()
        .zip(rhs.to_flat())
        .map(|(a, b)| a - b)
        .collect();
    Ok(euclid(&diff))
}

/// `g h g^-1 h^-1`.
pub fn commutator<T: Scalar>(g: &GroupElement<T>, h: &GroupElement<T>) -> Result<GroupElement<T>> {
    g.same_shape(h)?;
    Ok(g.mul_unchecked(h)
        .mul_unchecked(&g.inverse())
        .mul_unchecked(&h.inverse()))
}

impl LatticeSpec {
    pub fn new(n: usize, m: usize, r: u32) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidInput(
                "center denominator r must be positive".into(),
            ));
        }
        Ok(Self { n, m, r })
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1 + self.m
    }

    /// Membership test; exact for rational scalars, `tol` for floats.
    pub fn contains<T: Scalar>(&self, g: &GroupElement<T>, tol: f64) -> bool {
        if g.n() != self.n || g.m() != self.m {
            return false;
        }
        let r = T::from_int(self.r as i64);
        g.q.iter()
            .chain(&g.p)
            .chain(&g.t)
            .all(|x| x.is_integral(tol))
            && (g.z.clone() * r).is_integral(tol)
    }

    /// Generators of the lattice: unit translations in `q`, `p`, `t` and
    /// the central element `1/r`.
    pub fn generators<T: Scalar>(&self) -> Vec<GroupElement<T>> {
        let mut out = Vec::new();
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            let mut g = GroupElement::identity(n, m);
            g.q[i] = T::one();
            out.push(g);
        }
        for i in 0..n {
            let mut g = GroupElement::identity(n, m);
            g.p[i] = T::one();
            out.push(g);
        }
        if n > 0 {
            out.push(GroupElement::central(
                n,
                m,
                T::one() / T::from_int(self.r as i64),
            ));
        }
        for i in 0..m {
            let mut g = GroupElement::identity(n, m);
            g.t[i] = T::one();
            out.push(g);
        }
        out
    }
}

/// Split `g = gamma * g0` with `gamma` in the lattice and `g0` in the
/// fundamental domain `q, p in [0,1)^n`, `z in [0, 1/r)`, `t in [0,1)^m`.
pub fn lattice_reduce<T: Scalar>(
    g: &GroupElement<T>,
    lattice: &LatticeSpec,
) -> Result<(GroupElement<T>, GroupElement<T>)> {
    if g.n() != lattice.n {
        return Err(Error::DimensionMismatch {
            expected: lattice.n,
            found: g.n(),
        });
    }
    if g.m() != lattice.m {
        return Err(Error::DimensionMismatch {
            expected: lattice.m,
            found: g.m(),
        });
    }
    let one = T::one();
    let floor_vec = |v: &[T]| v.iter().map(|x| x.floor_s()).collect::<Vec<T>>();
    let mut gamma = GroupElement {
        q: floor_vec(&g.q),
        p: floor_vec(&g.p),
        z: T::zero(),
        t: floor_vec(&g.t),
    };
    let mut g1 = gamma.inverse().mul_unchecked(g);
    // float rounding can push a coordinate onto 1.0; shift it down and clamp
    // the tiny negative remainder
    let mut shifted = false;
    for (gv, rv) in [
        (&mut gamma.q, &g1.q),
        (&mut gamma.p, &g1.p),
        (&mut gamma.t, &g1.t),
    ] {
        for (a, x) in gv.iter_mut().zip(rv) {
            if *x >= one {
                *a = a.clone() + one.clone();
                shifted = true;
            }
        }
    }
    if shifted {
        g1 = gamma.inverse().mul_unchecked(g);
        for x in
            g1.q.iter_mut()
                .chain(g1.p.iter_mut())
                .chain(g1.t.iter_mut())
        {
            if *x < T::zero() {
                *x = T::zero();
            }
        }
    }
    let r = T::from_int(lattice.r as i64);
    let mut c = (g1.z.clone() * r.clone()).floor_s() / r.clone();
    let mut z0 = g1.z.clone() - c.clone();
    let width = one.clone() / r;
    if z0 >= width {
        c = c + width.clone();
        z0 = z0 - width;
        if z0 < T::zero() {
            z0 = T::zero();
        }
    }
    let gamma = gamma.mul_unchecked(&GroupElement::central(g.n(), g.m(), c));
    let g0 = GroupElement { z: z0, ..g1 };
    Ok((gamma, g0))
}

/// Homogeneous quasi-norm `max(|(q, p, t)|_2, sqrt|z|)`.
pub fn quasi_norm<T: Scalar>(g: &GroupElement<T>) -> f64 {
    euclid(&g.base()).max(g.z.to_f64_lossy().abs().sqrt())
}

/// Quasi-norm of the central element `exp(0, 0, Z, 0)`; it never exceeds
/// `4 sqrt|Z|`.
pub fn center_distance_bound(z: f64) -> f64 {
    quasi_norm(&exp(&LieElement {
        c: z,
        ..LieElement::zero(0, 0)
    }))
}

struct FlatSeq<'a, T>(&'a [T]);

impl<T: Serialize> Serialize for FlatSeq<'_, T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for x in self.0 {
            seq.serialize_element(x)?;
        }
        seq.end()
    }
}

impl<T: Scalar + Serialize> Serialize for GroupElement<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FlatSeq(&self.to_flat()).serialize(s)
    }
}

impl<T: Scalar + Serialize> Serialize for LieElement<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FlatSeq(&self.to_flat()).serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn g1(q: f64, p: f64, z: f64) -> GroupElement<f64> {
        GroupElement::new(vec![q], vec![p], z, vec![]).unwrap()
    }

    fn lie1(a: f64, b: f64, c: f64) -> LieElement<f64> {
        LieElement {
            a: vec![a],
            b: vec![b],
            c,
            s: vec![],
        }
    }

    #[test]
    fn group_law_example() {
        let g = g1(1.0, 0.0, 0.0).mul(&g1(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(g, g1(1.0, 1.0, 1.0));
    }

    #[test]
    fn inverse_solves_group_equation() {
        let g = g1(0.3, -1.7, 2.5);
        let inv = g.inverse();
        assert_eq!(inv, g1(-0.3, 1.7, 0.3 * -1.7 - 2.5));
        assert!(
            g.mul(&inv)
                .unwrap()
                .coord_dist(&GroupElement::identity(1, 0))
                < 1e-15
        );
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let g = GroupElement::<f64>::identity(1, 0);
        let h = GroupElement::<f64>::identity(2, 0);
        assert!(matches!(g.mul(&h), Err(Error::DimensionMismatch { .. })));
        assert!(GroupElement::<f64>::from_flat(1, 1, &[0.0; 3]).is_err());
    }

    #[test]
    fn exp_examples() {
        assert!(exp(&LieElement::<f64>::zero(2, 1)).is_identity());
        assert_eq!(exp(&lie1(1.0, 1.0, 0.0)), g1(1.0, 1.0, 0.5));
    }

    #[test]
    fn exp_one_parameter_subgroup() {
        // f(s) = exp(sX) must satisfy f(s) f(t) = f(s + t)
        let x = lie1(0.7, -1.3, 0.4);
        for (s, t) in [(0.5, 1.5), (-2.0, 0.25), (3.0, -3.0)] {
            let lhs = exp(&x.scale(&s)).mul(&exp(&x.scale(&t))).unwrap();
            let rhs = exp(&x.scale(&(s + t)));
            assert!(lhs.coord_dist(&rhs) < 1e-13);
        }
    }

    #[test]
    fn bch_on_basis_vectors() {
        let x = lie1(1.0, 0.0, 0.0);
        let y = lie1(0.0, 1.0, 0.0);
        assert_eq!(x.bracket(&y), lie1(0.0, 0.0, 1.0));
        assert!(bch_check(&x, &y).unwrap() < 1e-12);
        let c1 = lie1(0.0, 0.0, 2.0);
        let c2 = lie1(0.0, 0.0, -0.5);
        assert_eq!(bch_check(&c1, &c2).unwrap(), 0.0);
    }

    #[test]
    fn commutator_examples() {
        let x = lie1(1.0, 0.0, 0.0);
        let y = lie1(0.0, 1.0, 0.0);
        let c = commutator(&exp(&x), &exp(&y)).unwrap();
        assert!(c.coord_dist(&g1(0.0, 0.0, 1.0)) < 1e-12);
        let c = commutator(&exp(&x.scale(&0.5)), &exp(&y.scale(&0.5))).unwrap();
        assert!(c.coord_dist(&g1(0.0, 0.0, 0.25)) < 1e-12);
        let z = commutator(&g1(0.0, 0.0, 3.0), &g1(0.0, 0.0, -1.0)).unwrap();
        assert!(z.is_identity());
    }

    #[test]
    fn lattice_reduce_examples() {
        let lat = LatticeSpec::new(1, 0, 1).unwrap();
        let (gamma, g0) = lattice_reduce(&g1(1.5, 0.0, 0.0), &lat).unwrap();
        assert_eq!(gamma, g1(1.0, 0.0, 0.0));
        assert_eq!(g0, g1(0.5, 0.0, 0.0));
        let (gamma, g0) = lattice_reduce(&g1(0.0, 1.25, 0.7), &lat).unwrap();
        assert_eq!(gamma, g1(0.0, 1.0, 0.0));
        assert_eq!(g0, g1(0.0, 0.25, 0.7));
        let inside = g1(0.2, 0.9, 0.1);
        let (gamma, g0) = lattice_reduce(&inside, &lat).unwrap();
        assert!(gamma.is_identity());
        assert_eq!(g0, inside);
    }

    #[test]
    fn lattice_reduce_handles_rounding_to_one() {
        let lat = LatticeSpec::new(1, 1, 2).unwrap();
        let g = GroupElement::new(vec![-1e-18], vec![0.3], -1e-19, vec![-5e-17]).unwrap();
        let (gamma, g0) = lattice_reduce(&g, &lat).unwrap();
        assert!(lat.contains(&gamma, 0.0));
        for x in g0.q.iter().chain(&g0.p).chain(&g0.t) {
            assert!((0.0..1.0).contains(x));
        }
        assert!((0.0..0.5).contains(&g0.z));
    }

    #[test]
    fn exact_rational_lattice_reduce() {
        let lat = LatticeSpec::new(1, 0, 3).unwrap();
        let r = |a, b| Ratio::new(a, b);
        let g = GroupElement::new(vec![r(7, 2)], vec![r(-5, 3)], r(11, 7), vec![]).unwrap();
        let (gamma, g0) = lattice_reduce(&g, &lat).unwrap();
        assert!(lat.contains(&gamma, 0.0));
        assert_eq!(gamma.mul(&g0).unwrap(), g);
        assert!(g0.z < r(1, 3) && g0.z >= r(0, 1));
    }

    #[test]
    fn center_bound_examples() {
        assert_eq!(center_distance_bound(0.0), 0.0);
        assert!((center_distance_bound(1.0) - 1.0).abs() < 1e-15);
        assert!((center_distance_bound(0.01) - 0.1).abs() < 1e-15);
        for z in [1e-6, 0.3, 7.0, 1e4] {
            assert!(center_distance_bound(z) <= 4.0 * z.sqrt());
        }
    }

    #[test]
    fn serializes_flat() {
        let g = GroupElement::new(vec![1.0], vec![2.0], 3.0, vec![4.0]).unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), "[1.0,2.0,3.0,4.0]");
        let back = GroupElement::from_flat(1, 1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(back, g);
    }

    fn arb_elem(n: usize, m: usize) -> impl Strategy<Value = GroupElement<f64>> {
        prop::collection::vec(-10.0..10.0f64, 2 * n + 1 + m)
            .prop_map(move |v| GroupElement::from_flat(n, m, &v).unwrap())
    }

    proptest! {
        #[test]
        fn associativity(g in arb_elem(2, 1), h in arb_elem(2, 1), k in arb_elem(2, 1)) {
            let a = g.mul(&h).unwrap().mul(&k).unwrap();
            let b = g.mul(&h.mul(&k).unwrap()).unwrap();
            prop_assert!(a.coord_dist(&b) < 1e-12);
        }

        #[test]
        fn center_commutes(g in arb_elem(2, 1), z in -5.0..5.0f64) {
            let c = GroupElement::central(2, 1, z);
            prop_assert_eq!(g.mul(&c).unwrap(), c.mul(&g).unwrap());
        }

        #[test]
        fn exp_log_roundtrip(g in arb_elem(3, 2)) {
            let x = g.log();
            prop_assert!(exp(&x).coord_dist(&g) < 1e-12);
            let back = exp(&x).log();
            prop_assert!(back.to_flat().iter().zip(x.to_flat()).all(|(a, b)| (a - b).abs() < 1e-12));
        }

        #[test]
        fn reduce_reconstructs(g in arb_elem(1, 1), r in 1u32..4) {
            let lat = LatticeSpec::new(1, 1, r).unwrap();
            let (gamma, g0) = lattice_reduce(&g, &lat).unwrap();
            prop_assert!(lat.contains(&gamma, 1e-9));
            prop_assert!(gamma.mul(&g0).unwrap().coord_dist(&g) < 1e-12);
            let (again, g00) = lattice_reduce(&g0, &lat).unwrap();
            prop_assert!(again.is_identity());
            prop_assert_eq!(g00, g0);
        }

        #[test]
        fn quasi_norm_is_homogeneous(g in arb_elem(1, 1), l in 0.1..10.0f64) {
            let lhs = quasi_norm(&g.dilate(&l));
            prop_assert!((lhs - l * quasi_norm(&g)).abs() < 1e-10 * (1.0 + lhs));
        }
    }
}
