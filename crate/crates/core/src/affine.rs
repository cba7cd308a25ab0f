//! Automorphisms of `X_Gamma` covering symplectic integer matrices and the
//! affine maps `f(x) = L(x) g0^{-1}` built from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::intmat::IntMatrix;
use crate::nilpotent::{GroupElement, LatticeSpec};
use crate::poly::{classify_roots, RootClassification};
use crate::scalar::Scalar;

/// Integer matrix with `M^T J M = J`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct SymplecticMatrix(IntMatrix);

impl SymplecticMatrix {
    pub fn new(m: IntMatrix) -> Result<Self> {
        let defect = m.symplectic_defect()?;
        for i in 0..defect.rows() {
            for j in 0..defect.cols() {
                if defect[(i, j)] != 0 {
                    return Err(Error::NotSymplectic {
                        row: i,
                        col: j,
                        value: defect[(i, j)],
                    });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        Self::new(IntMatrix::from_rows(rows)?)
    }

    pub fn d(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.0
    }

    /// `M^{-1} = -J M^T J`.
    pub fn inverse(&self) -> Self {
        let j = IntMatrix::symplectic_form(self.d());
        let inv = j
            .mul(&self.0.transpose())
            .and_then(|x| x.mul(&j))
            .map(|x| x.scale(-1))
            .expect("square matrices of equal size");
        Self(inv)
    }
}

/// Bilinear form `B(v, w) = (Mv)_q . (Mw)_p - v_q . w_p` as a matrix,
/// i.e. `M^T E M - E` with `E = [[0, I], [0, 0]]`. Symmetric exactly when
/// `M` is symplectic.
pub fn correction_form(m: &IntMatrix) -> Result<IntMatrix> {
    let d = m.rows();
    let n = d / 2;
    let e = IntMatrix::from_fn(d, d, |i, j| (i < n && j == i + n) as i64);
    m.transpose().mul(&e)?.mul(m)?.sub(&e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NilAutomorphism {
    base: SymplecticMatrix,
    abelian: IntMatrix,
    beta: IntMatrix,
    lattice: LatticeSpec,
    /// Whether the center denominator had to be doubled.
    pub lattice_raised: bool,
}

/// Automorphism on the standard lattice with center denominator 1.
pub fn automorphism_from_symplectic(
    m: SymplecticMatrix,
    abelian: IntMatrix,
) -> Result<NilAutomorphism> {
    let lattice = LatticeSpec::new(m.d() / 2, abelian.rows(), 1)?;
    NilAutomorphism::new(m, abelian, lattice)
}

impl NilAutomorphism {
    /// `lattice.r` is doubled when `B` has an odd diagonal entry and `r` is
    /// odd, so that `beta` maps integer points into `(1/r) Z`.
    pub fn new(
        base: SymplecticMatrix,
        abelian: IntMatrix,
        mut lattice: LatticeSpec,
    ) -> Result<Self> {
        if base.d() != 2 * lattice.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * lattice.n,
                found: base.d(),
            });
        }
        if !abelian.is_square() || abelian.rows() != lattice.m {
            return Err(Error::DimensionMismatch {
                expected: lattice.m,
                found: abelian.rows(),
            });
        }
        if abelian.det()?.abs() != 1 {
            return Err(Error::InvalidInput(
                "abelian block must lie in GL(m, Z)".into(),
            ));
        }
        let beta = correction_form(base.matrix())?;
        let odd_diag = (0..beta.rows()).any(|i| beta[(i, i)] % 2 != 0);
        let lattice_raised = odd_diag && lattice.r % 2 == 1;
        if lattice_raised {
            lattice.r *= 2;
        }
        Ok(Self {
            base,
            abelian,
            beta,
            lattice,
            lattice_raised,
        })
    }

    pub fn identity(lattice: LatticeSpec) -> Self {
        Self::new(
            SymplecticMatrix(IntMatrix::identity(2 * lattice.n)),
            IntMatrix::identity(lattice.m),
            lattice,
        )
        .expect("identity is an automorphism")
    }

    pub fn base(&self) -> &SymplecticMatrix {
        &self.base
    }

    pub fn abelian(&self) -> &IntMatrix {
        &self.abelian
    }

    pub fn beta(&self) -> &IntMatrix {
        &self.beta
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn center_denominator(&self) -> u32 {
        self.lattice.r
    }

    /// Linear part on `(q, p, t)`: `diag(M, A)`.
    pub fn su_matrix(&self) -> IntMatrix {
        IntMatrix::block_diag(self.base.matrix(), &self.abelian)
    }

    pub fn beta_value<T: Scalar>(&self, x: &[T]) -> T {
        let d = x.len();
        let mut acc = T::zero();
        for i in 0..d {
            for j in 0..d {
                let b = self.beta[(i, j)];
                if b != 0 {
                    acc = acc + T::from_int(b) * x[i].clone() * x[j].clone();
                }
            }
        }
        acc * T::half()
    }

    pub fn apply<T: Scalar>(&self, g: &GroupElement<T>) -> GroupElement<T> {
        let n = self.lattice.n;
        let x: Vec<T> = g.q.iter().chain(&g.p).cloned().collect();
        let mx = mat_vec(self.base.matrix(), &x);
        let t = mat_vec(&self.abelian, &g.t);
        GroupElement {
            q: mx[..n].to_vec(),
            p: mx[n..].to_vec(),
            z: g.z.clone() + self.beta_value(&x),
            t,
        }
    }

    pub fn compose(&self, o: &Self) -> Result<Self> {
        let base = SymplecticMatrix(self.base.matrix().mul(o.base.matrix())?);
        let abelian = self.abelian.mul(&o.abelian)?;
        let r = num_integer::lcm(self.lattice.r, o.lattice.r);
        Self::new(
            base,
            abelian,
            LatticeSpec::new(self.lattice.n, self.lattice.m, r)?,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(
            self.base.inverse(),
            self.abelian.inverse_unimodular()?,
            self.lattice,
        )
    }
}

pub(crate) fn mat_vec<T: Scalar>(m: &IntMatrix, x: &[T]) -> Vec<T> {
    (0..m.rows())
        .map(|i| {
            (0..m.cols()).fold(T::zero(), |acc, j| {
                let a = m[(i, j)];
                if a == 0 {
                    acc
                } else {
                    acc + T::from_int(a) * x[j].clone()
                }
            })
        })
        .collect()
}

/// `f(x) = L(x) g0^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T = f64> {
    pub automorphism: NilAutomorphism,
    pub translation: GroupElement<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn new(automorphism: NilAutomorphism, translation: GroupElement<T>) -> Result<Self> {
        let l = automorphism.lattice();
        if translation.n() != l.n || translation.m() != l.m {
            return Err(Error::DimensionMismatch {
                expected: l.dim(),
                found: translation.to_flat().len(),
            });
        }
        Ok(Self {
            automorphism,
            translation,
        })
    }

    pub fn linear(automorphism: NilAutomorphism) -> Self {
        let (n, m) = (automorphism.lattice().n, automorphism.lattice().m);
        Self {
            automorphism,
            translation: GroupElement::identity(n, m),
        }
    }

    pub fn lattice(&self) -> &LatticeSpec {
        self.automorphism.lattice()
    }

    pub fn apply(&self, x: &GroupElement<T>) -> GroupElement<T> {
        apply_affine(self, x)
    }

    /// `(self o other)(x) = self(other(x))`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let automorphism = self.automorphism.compose(&other.automorphism)?;
        let translation = self
            .translation
            .mul(&self.automorphism.apply(&other.translation))?;
        Ok(Self {
            automorphism,
            translation,
        })
    }

    /// `f^{-1}(y) = L^{-1}(y) L^{-1}(g0)`.
    pub fn inverse(&self) -> Result<Self> {
        let inv = self.automorphism.inverse()?;
        let translation = inv.apply(&self.translation).inverse();
        Ok(Self {
            automorphism: inv,
            translation,
        })
    }
}

pub fn apply_affine<T: Scalar>(f: &AffineMap<T>, x: &GroupElement<T>) -> GroupElement<T> {
    f.automorphism
        .apply(x)
        .mul(&f.translation.inverse())
        .expect("shapes checked at construction")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialHyperbolicity {
    pub partially_hyperbolic: bool,
    pub stable_dim: usize,
    pub center_dim: usize,
    pub unstable_dim: usize,
    pub classification: RootClassification,
}

/// Hyperbolicity of `diag(M, A)`; the center is the derived subgroup,
/// so its dimension is 1.
pub fn is_partially_hyperbolic_1d_center<T: Scalar>(
    f: &AffineMap<T>,
) -> Result<PartialHyperbolicity> {
    if f.lattice().n == 0 {
        return Err(Error::Precondition(
            "a Heisenberg factor (n >= 1) is needed for a one-dimensional center".into(),
        ));
    }
    let su = f.automorphism.su_matrix();
    let classification = classify_roots(&su.charpoly()?)?;
    let stable_dim = classification
        .roots
        .iter()
        .filter(|z| z.norm() < 1.0)
        .count();
    let unstable_dim = su.rows() - stable_dim;
    let ph = classification.hyperbolic;
    Ok(PartialHyperbolicity {
        partially_hyperbolic: ph,
        stable_dim: if ph { stable_dim } else { 0 },
        center_dim: if ph { 1 } else { 1 + su.rows() },
        unstable_dim: if ph { unstable_dim } else { 0 },
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nilpotent::lattice_reduce;
    use proptest::prelude::*;

    fn cat() -> SymplecticMatrix {
        SymplecticMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn quartic() -> SymplecticMatrix {
        SymplecticMatrix::from_rows(&[
            vec![3, 1, -1, 0],
            vec![1, 4, 0, -1],
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
        ])
        .unwrap()
    }

    #[test]
    fn rejects_non_symplectic_with_location() {
        let err = SymplecticMatrix::from_rows(&[vec![2, 0], vec![0, 1]]).unwrap_err();
        assert_eq!(
            err,
            Error::NotSymplectic {
                row: 0,
                col: 1,
                value: 1
            }
        );
    }

    #[test]
    fn identity_has_zero_correction() {
        let id = automorphism_from_symplectic(
            SymplecticMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap(),
            IntMatrix::identity(0),
        )
        .unwrap();
        assert!(id.beta().data().iter().all(|&x| x == 0));
        assert!(!id.lattice_raised);
    }

    #[test]
    fn correction_symmetry_tracks_symplecticity() {
        let b = correction_form(cat().matrix()).unwrap();
        assert_eq!(b, b.transpose());
        let bad = IntMatrix::from_rows(&[vec![2, 1], vec![0, 1]]).unwrap();
        let b = correction_form(&bad).unwrap();
        assert_ne!(b, b.transpose());
    }

    #[test]
    fn odd_correction_raises_denominator() {
        // B = [[2, 0], [0, 0]], even diagonal
        let lower = SymplecticMatrix::from_rows(&[vec![1, 0], vec![2, 1]]).unwrap();
        let f = automorphism_from_symplectic(lower, IntMatrix::identity(0)).unwrap();
        assert_eq!(f.center_denominator(), 1);
        // cat map: B = [[2, 1], [1, 1]], so beta(0, 1) = 1/2
        let f = automorphism_from_symplectic(cat(), IntMatrix::identity(0)).unwrap();
        assert_eq!(
            f.beta(),
            &IntMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
        );
        assert_eq!(f.center_denominator(), 2);
        assert!(f.lattice_raised);
        let shear = SymplecticMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
        let f = automorphism_from_symplectic(shear, IntMatrix::identity(0)).unwrap();
        assert_eq!(f.center_denominator(), 2);
    }

    #[test]
    fn lattice_points_map_to_lattice_points() {
        for m in [
            cat(),
            quartic(),
            SymplecticMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap(),
        ] {
            let f = automorphism_from_symplectic(m, IntMatrix::identity(1)).unwrap();
            let l = *f.lattice();
            for g in l.generators::<crate::Rational>() {
                assert!(l.contains(&f.apply(&g), 0.0));
                assert!(l.contains(&f.inverse().unwrap().apply(&g), 0.0));
            }
        }
    }

    #[test]
    fn cat_map_on_torus() {
        let aut = NilAutomorphism::new(
            SymplecticMatrix::from_rows(&[]).unwrap(),
            IntMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap(),
            LatticeSpec::new(0, 2, 1).unwrap(),
        )
        .unwrap();
        let f = AffineMap::linear(aut);
        let x = GroupElement::new(vec![], vec![], 0.0, vec![0.5, 0.5]).unwrap();
        let y = f.apply(&x);
        assert_eq!(y.t, vec![1.5, 1.0]);
        let (_, y0) = lattice_reduce(&y, f.lattice()).unwrap();
        assert_eq!(y0.t, vec![0.5, 0.0]);
    }

    #[test]
    fn central_translation_shifts_z() {
        let aut = automorphism_from_symplectic(cat(), IntMatrix::identity(0)).unwrap();
        let id = NilAutomorphism::identity(*aut.lattice());
        let f = AffineMap::new(id, GroupElement::central(1, 0, 0.25)).unwrap();
        let x = GroupElement::new(vec![0.3], vec![0.6], 0.1, vec![]).unwrap();
        assert!((f.apply(&x).z - (0.1f64 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn partial_hyperbolicity_dims() {
        let f = AffineMap::<f64>::linear(
            automorphism_from_symplectic(cat(), IntMatrix::identity(0)).unwrap(),
        );
        let ph = is_partially_hyperbolic_1d_center(&f).unwrap();
        assert!(ph.partially_hyperbolic);
        assert_eq!((ph.stable_dim, ph.center_dim, ph.unstable_dim), (1, 1, 1));
        let f = AffineMap::<f64>::linear(
            automorphism_from_symplectic(quartic(), IntMatrix::identity(0)).unwrap(),
        );
        let ph = is_partially_hyperbolic_1d_center(&f).unwrap();
        assert_eq!((ph.stable_dim, ph.center_dim, ph.unstable_dim), (2, 1, 2));
        let f = AffineMap::<f64>::linear(NilAutomorphism::identity(
            LatticeSpec::new(1, 0, 1).unwrap(),
        ));
        assert!(
            !is_partially_hyperbolic_1d_center(&f)
                .unwrap()
                .partially_hyperbolic
        );
    }

    #[test]
    fn exact_homomorphism_over_rationals() {
        let f = automorphism_from_symplectic(quartic(), IntMatrix::identity(1)).unwrap();
        let g = crate::GroupElementQ::from_flat(
            2,
            1,
            &[(1, 2), (-3, 4), (5, 1), (2, 3), (7, 5), (1, 9)]
                .map(|(a, b)| crate::Rational::new(a, b)),
        )
        .unwrap();
        let h = crate::GroupElementQ::from_flat(
            2,
            1,
            &[(3, 2), (1, 4), (-1, 1), (2, 7), (1, 5), (-4, 9)]
                .map(|(a, b)| crate::Rational::new(a, b)),
        )
        .unwrap();
        assert_eq!(
            f.apply(&g.mul(&h).unwrap()),
            f.apply(&g).mul(&f.apply(&h)).unwrap()
        );
    }

    fn elem(n: usize, m: usize) -> impl Strategy<Value = GroupElement<f64>> {
        proptest::collection::vec(-2.0f64..2.0, 2 * n + 1 + m)
            .prop_map(move |v| GroupElement::from_flat(n, m, &v).unwrap())
    }

    proptest! {
        #[test]
        fn homomorphism_d4(g in elem(2, 1), h in elem(2, 1)) {
            let f = automorphism_from_symplectic(quartic(), IntMatrix::identity(1)).unwrap();
            let lhs = f.apply(&g.mul(&h).unwrap());
            let rhs = f.apply(&g).mul(&f.apply(&h)).unwrap();
            prop_assert!(lhs.coord_dist(&rhs) < 1e-10);
        }

        #[test]
        fn fixes_center(z in -5.0f64..5.0) {
            let f = automorphism_from_symplectic(quartic(), IntMatrix::identity(0)).unwrap();
            let c = GroupElement::central(2, 0, z);
            prop_assert_eq!(f.apply(&c), c);
        }

        #[test]
        fn affine_composition(x in elem(1, 0), a in elem(1, 0), b in elem(1, 0)) {
            let shear = SymplecticMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap();
            let f = AffineMap::new(automorphism_from_symplectic(cat(), IntMatrix::identity(0)).unwrap(), a).unwrap();
            let g = AffineMap::new(automorphism_from_symplectic(shear, IntMatrix::identity(0)).unwrap(), b).unwrap();
            let fg = f.compose(&g).unwrap();
            prop_assert!(fg.apply(&x).coord_dist(&f.apply(&g.apply(&x))) < 1e-10);
            let back = f.inverse().unwrap().apply(&f.apply(&x));
            prop_assert!(back.coord_dist(&x) < 1e-10);
        }

        #[test]
        fn equivariance_under_lattice(x in elem(1, 0), a in elem(1, 0), k in -3i64..3, l in -3i64..3, c in -3i64..3) {
            let f = AffineMap::new(automorphism_from_symplectic(cat(), IntMatrix::identity(0)).unwrap(), a).unwrap();
            let gamma = GroupElement::new(vec![k as f64], vec![l as f64], c as f64, vec![]).unwrap();
            let lhs = f.apply(&gamma.mul(&x).unwrap());
            let rhs = f.automorphism.apply(&gamma).mul(&f.apply(&x)).unwrap();
            prop_assert!(lhs.coord_dist(&rhs) < 1e-9);
        }

        #[test]
        fn symplectic_log_moduli_sum_to_zero(i in 0usize..3) {
            let m = [cat(), quartic(), SymplecticMatrix::from_rows(&[vec![1, 0, 1, 1], vec![0, 1, 1, -1], vec![0, 2, 3, -2], vec![2, 2, 4, 1]]).unwrap()][i].clone();
            let c = classify_roots(&m.matrix().charpoly().unwrap()).unwrap();
            let s: f64 = c.log_moduli().iter().sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }
}
