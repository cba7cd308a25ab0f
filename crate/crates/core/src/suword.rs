//! Words in the free product `E^s * E^u` and their action on the affine
//! model by right translations.

use serde::{Deserialize, Serialize};

use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::nilpotent::{omega_base, GroupElement, LieElement};
use crate::semiconjugacy::{hyperbolic_splitting, Splitting};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    S,
    U,
}

impl Slot {
    pub fn other(self) -> Self {
        match self {
            Slot::S => Slot::U,
            Slot::U => Slot::S,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Letter {
    pub slot: Slot,
    pub vec: Vec<f64>,
}

impl Letter {
    pub fn new(slot: Slot, vec: Vec<f64>) -> Self {
        Self { slot, vec }
    }

    fn neg(&self) -> Self {
        Self::new(self.slot, self.vec.iter().map(|x| -x).collect())
    }

    fn max_abs(&self) -> f64 {
        self.vec.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Reduced word: adjacent letters in one slot are merged and zero letters
/// dropped. Serialized as the list of letters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Letter>", into = "Vec<Letter>")]
pub struct SuWord {
    letters: Vec<Letter>,
}

impl From<Vec<Letter>> for SuWord {
    fn from(letters: Vec<Letter>) -> Self {
        Self::new(letters)
    }
}

impl From<SuWord> for Vec<Letter> {
    fn from(w: SuWord) -> Self {
        w.letters
    }
}

fn reduce(letters: Vec<Letter>, tol: f64) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
    for l in letters {
        if l.max_abs() <= tol {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.slot == l.slot => {
                for (a, b) in last.vec.iter_mut().zip(&l.vec) {
                    *a += b;
                }
                if last.max_abs() <= tol {
                    out.pop();
                }
            }
            _ => out.push(l),
        }
    }
    out
}

impl SuWord {
    pub fn new(letters: Vec<Letter>) -> Self {
        Self {
            letters: reduce(letters, 0.0),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn letter(slot: Slot, vec: Vec<f64>) -> Self {
        Self::new(vec![Letter::new(slot, vec)])
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut l = self.letters.clone();
        l.extend(other.letters.iter().cloned());
        Self::new(l)
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.letters.iter().rev().map(Letter::neg).collect())
    }

    /// Sum of all letter vectors.
    pub fn pi(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for l in &self.letters {
            for (o, x) in out.iter_mut().zip(&l.vec) {
                *o += x;
            }
        }
        out
    }

    /// Equality after reduction with letters below `tol` treated as zero.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let a = reduce(self.letters.clone(), tol);
        let b = reduce(other.letters.clone(), tol);
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.slot == y.slot
                    && x.vec.len() == y.vec.len()
                    && x.vec.iter().zip(&y.vec).all(|(p, q)| (p - q).abs() <= tol)
            })
    }
}

/// `w = c_1 ... c_l v u` with each `c_i` a commutator word.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalForm {
    pub commutators: Vec<SuWord>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl NormalForm {
    pub fn recompose(&self) -> SuWord {
        let mut letters: Vec<Letter> = self
            .commutators
            .iter()
            .flat_map(|c| c.letters.iter().cloned())
            .collect();
        letters.push(Letter::new(Slot::S, self.v.clone()));
        letters.push(Letter::new(Slot::U, self.u.clone()));
        SuWord::new(letters)
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn commutator(first: Letter, second: Letter) -> SuWord {
    let (a, b) = (first.neg(), second.neg());
    SuWord::new(vec![first, second, a, b])
}

/// Peels `[v1 u1 (-v1)(-u1)]` and `[u1 (v1+v2)(-u1)(-v1-v2)]` off the front
/// of `v1 u1 v2 u2 ...` until one `(v, u)` pair remains.
pub fn word_normal_form(w: &SuWord, d: usize) -> NormalForm {
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut pending_v: Option<Vec<f64>> = None;
    for l in &w.letters {
        match l.slot {
            Slot::S => {
                if let Some(v) = pending_v.take() {
                    pairs.push((v, vec![0.0; d]));
                }
                pending_v = Some(l.vec.clone());
            }
            Slot::U => {
                let v = pending_v.take().unwrap_or_else(|| vec![0.0; d]);
                pairs.push((v, l.vec.clone()));
            }
        }
    }
    if let Some(v) = pending_v {
        pairs.push((v, vec![0.0; d]));
    }
    let mut commutators = Vec::new();
    let mut iter = pairs.into_iter();
    let (mut v, mut u) = iter.next().unwrap_or_else(|| (vec![0.0; d], vec![0.0; d]));
    for (vi, ui) in iter {
        let vv = add(&v, &vi);
        for c in [
            commutator(
                Letter::new(Slot::S, v.clone()),
                Letter::new(Slot::U, u.clone()),
            ),
            commutator(
                Letter::new(Slot::U, u.clone()),
                Letter::new(Slot::S, vv.clone()),
            ),
        ] {
            if !c.is_empty() {
                commutators.push(c);
            }
        }
        v = vv;
        u = add(&u, &ui);
    }
    NormalForm { commutators, v, u }
}

/// The stable/unstable splitting of an affine model, used to validate
/// letters before they act.
#[derive(Clone, Debug)]
pub struct SuModel {
    n: usize,
    m: usize,
    splitting: Splitting,
    tol: f64,
}

impl SuModel {
    pub fn new(f: &AffineMap<f64>) -> Result<Self> {
        let l = f.lattice();
        let splitting = hyperbolic_splitting(&f.automorphism.su_matrix().to_f64())?;
        Ok(Self {
            n: l.n,
            m: l.m,
            splitting,
            tol: 1e-9,
        })
    }

    pub fn d(&self) -> usize {
        2 * self.n + self.m
    }

    pub fn splitting(&self) -> &Splitting {
        &self.splitting
    }

    /// Basis vectors of `E^s` or `E^u` in base coordinates.
    pub fn basis(&self, slot: Slot) -> Vec<Vec<f64>> {
        let ds = self.splitting.stable_dim;
        let range = match slot {
            Slot::S => 0..ds,
            Slot::U => ds..self.d(),
        };
        range
            .map(|j| self.splitting.basis.column(j).iter().copied().collect())
            .collect()
    }

    /// Letter with coordinates in the basis of `E^s` or `E^u`. For `d = 2`
    /// the unstable vector is scaled so that `omega(e_s, e_u) = 1`.
    pub fn letter_from_coords(&self, slot: Slot, coords: &[f64]) -> Result<Letter> {
        let basis = self.basis(slot);
        if coords.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: coords.len(),
            });
        }
        let mut scale = 1.0;
        if self.d() == 2 && self.n == 1 && slot == Slot::U {
            let es = &self.basis(Slot::S)[0];
            scale = 1.0 / omega_base(1, es, &basis[0]);
        }
        let mut vec = vec![0.0; self.d()];
        for (c, b) in coords.iter().zip(&basis) {
            for (v, x) in vec.iter_mut().zip(b) {
                *v += scale * c * x;
            }
        }
        Ok(Letter::new(slot, vec))
    }

    /// Rejects letters of the wrong length or off their subspace.
    pub fn check_letter(&self, l: &Letter) -> Result<()> {
        let d = self.d();
        if l.vec.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: l.vec.len(),
            });
        }
        let ds = self.splitting.stable_dim;
        let wrong = match l.slot {
            Slot::S => ds..d,
            Slot::U => 0..ds,
        };
        let coords = &self.splitting.basis_inv * nalgebra::DVector::from_column_slice(&l.vec);
        let off = wrong.map(|i| coords[i].abs()).fold(0.0, f64::max);
        let scale = l.max_abs().max(1.0);
        if off > self.tol * scale {
            return Err(Error::InvalidInput(format!(
                "letter is not in E^{:?} (off-subspace component {off:e})",
                l.slot
            )));
        }
        Ok(())
    }
}

/// `eta^w x`, letters applied right to left as `x -> x exp(letter)`.
pub fn apply_su_word_affine(
    w: &SuWord,
    x: &GroupElement<f64>,
    model: &SuModel,
) -> Result<GroupElement<f64>> {
    if x.n() != model.n || x.m() != model.m {
        return Err(Error::DimensionMismatch {
            expected: model.d() + 1,
            found: x.to_flat().len(),
        });
    }
    let mut y = x.clone();
    for l in w.letters.iter().rev() {
        model.check_letter(l)?;
        y = y.mul(&LieElement::from_base(model.n, &l.vec).exp())?;
    }
    Ok(y)
}

/// Signed `omega`-area of the polygon traced by the partial sums of the
/// letters in application order.
pub fn symplectic_area(w: &SuWord, n: usize) -> f64 {
    let mut area = 0.0;
    let mut pos: Option<Vec<f64>> = None;
    for l in w.letters.iter().rev() {
        if let Some(p) = &pos {
            area += omega_base(n, p, &l.vec);
            pos = Some(add(p, &l.vec));
        } else {
            pos = Some(l.vec.clone());
        }
    }
    0.5 * area
}

/// Center displacement of a closed word; it does not depend on the base
/// point.
pub fn center_drift(w: &SuWord, model: &SuModel) -> Result<f64> {
    let d = model.d();
    let pi = w.pi(d);
    let scale = w.letters.iter().map(Letter::max_abs).fold(1.0, f64::max);
    let gap = pi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if gap > 1e-9 * scale {
        return Err(Error::Precondition(format!(
            "word is not closed: |Pi(w)| = {gap:e}"
        )));
    }
    let e = GroupElement::identity(model.n, model.m);
    Ok(apply_su_word_affine(w, &e, model)?.z)
}

/// Displacement of `Phi` under `eta^w`, i.e. `pi(eta^w x) - pi(x)`.
pub fn phi_shift(w: &SuWord, x: &GroupElement<f64>, model: &SuModel) -> Result<Vec<f64>> {
    let y = apply_su_word_affine(w, x, model)?;
    Ok(y.base().iter().zip(x.base()).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_merges_and_drops() {
        let w = SuWord::new(vec![
            Letter::new(Slot::S, vec![1.0, 0.0]),
            Letter::new(Slot::S, vec![-1.0, 0.0]),
            Letter::new(Slot::U, vec![0.0, 2.0]),
            Letter::new(Slot::U, vec![0.0, 0.0]),
            Letter::new(Slot::U, vec![0.0, 1.0]),
        ]);
        assert_eq!(w.letters(), &[Letter::new(Slot::U, vec![0.0, 3.0])]);
    }

    #[test]
    fn normal_form_of_vu_is_trivial() {
        let w = SuWord::new(vec![
            Letter::new(Slot::S, vec![1.0, 2.0]),
            Letter::new(Slot::U, vec![3.0, 4.0]),
        ]);
        let nf = word_normal_form(&w, 2);
        assert!(nf.commutators.is_empty());
        assert_eq!(nf.v, vec![1.0, 2.0]);
        assert_eq!(nf.u, vec![3.0, 4.0]);
    }

    #[test]
    fn normal_form_of_uv_peels_one_commutator() {
        let (u1, v1) = (vec![0.0, 1.0], vec![1.0, 0.0]);
        let w = SuWord::new(vec![
            Letter::new(Slot::U, u1.clone()),
            Letter::new(Slot::S, v1.clone()),
        ]);
        let nf = word_normal_form(&w, 2);
        assert_eq!(nf.commutators.len(), 1);
        assert_eq!(nf.v, v1);
        assert_eq!(nf.u, u1);
        assert!(nf.recompose().approx_eq(&w, 0.0));
    }
}
