//! Dense integer matrices with exact determinant, characteristic
//! polynomial, kernel lattices and wedge squares.

use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::IntPoly;

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl TryFrom<Vec<Vec<i64>>> for IntMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        IntMatrix::from_rows(&rows)
    }
}

impl From<IntMatrix> for Vec<Vec<i64>> {
    fn from(m: IntMatrix) -> Self {
        m.to_rows()
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_rows())
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_rows())
    }
}

impl IntMatrix {
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                expected: c,
                found: bad.len(),
            });
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> i64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| 0)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, d, |i, j| (i == j) as i64)
    }

    /// Standard symplectic form `[[0, I], [-I, 0]]`.
    pub fn symplectic_form(d: usize) -> Self {
        let n = d / 2;
        Self::from_fn(d, d, |i, j| {
            if i < n && j == i + n {
                1
            } else if i >= n && j + n == i {
                -1
            } else {
                0
            }
        })
    }

    pub fn block_diag(a: &Self, b: &Self) -> Self {
        let (ra, ca) = (a.rows, a.cols);
        Self::from_fn(ra + b.rows, ca + b.cols, |i, j| {
            if i < ra && j < ca {
                a[(i, j)]
            } else if i >= ra && j >= ca {
                b[(i - ra, j - ca)]
            } else {
                0
            }
        })
    }

    /// Companion matrix of a monic polynomial.
    pub fn companion(p: &IntPoly) -> Result<Self> {
        let d = p
            .degree()
            .ok_or_else(|| Error::InvalidInput("zero polynomial".into()))?;
        if p.leading() != 1 {
            return Err(Error::InvalidInput(
                "companion matrix needs a monic polynomial".into(),
            ));
        }
        let c = p.coeffs();
        Ok(Self::from_fn(d, d, |i, j| {
            if j == d - 1 {
                -c[i]
            } else if i == j + 1 {
                1
            } else {
                0
            }
        }))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        self.data
            .chunks(self.cols.max(1))
            .map(<[i64]>::to_vec)
            .take(self.rows)
            .collect()
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul(&self, o: &Self) -> Result<Self> {
        if self.cols != o.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: o.rows,
            });
        }
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0 {
                    continue;
                }
                for j in 0..o.cols {
                    let v = a.checked_mul(o[(k, j)]).ok_or(Error::Overflow)?;
                    out.data[i * o.cols + j] = out.data[i * o.cols + j]
                        .checked_add(v)
                        .ok_or(Error::Overflow)?;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: o.rows * o.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.sub(&o.scale(-1))
    }

    pub fn scale(&self, k: i64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Result<Self> {
        let mut acc = Self::identity(self.rows);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    pub fn commutes_with(&self, o: &Self) -> Result<bool> {
        Ok(self.mul(o)? == o.mul(self)?)
    }

    pub fn mul_vec_f64(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] as f64 * v[j]).sum())
            .collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] as f64)
    }

    /// Exact determinant by fraction-free elimination.
    pub fn det(&self) -> Result<i128> {
        if !self.is_square() {
            return Err(Error::InvalidInput(
                "determinant of non-square matrix".into(),
            ));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(1);
        }
        let mut a: Vec<Vec<i128>> = self
            .to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(i128::from).collect())
            .collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n - 1 {
            if a[k][k] == 0 {
                match (k + 1..n).find(|&i| a[i][k] != 0) {
                    Some(i) => {
                        a.swap(i, k);
                        sign = -sign;
                    }
                    None => return Ok(0),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = a[i][j]
                        .checked_mul(a[k][k])
                        .and_then(|x| x.checked_sub(a[i][k].checked_mul(a[k][j])?))
                        .ok_or(Error::Overflow)?;
                    a[i][j] = v / prev;
                }
            }
            prev = a[k][k];
        }
        Ok(sign * a[n - 1][n - 1])
    }

    /// Characteristic polynomial `det(tI - A)` via Faddeev-LeVerrier.
    pub fn charpoly(&self) -> Result<IntPoly> {
        if !self.is_square() {
            return Err(Error::InvalidInput(
                "characteristic polynomial of non-square matrix".into(),
            ));
        }
        let n = self.rows;
        let a: Vec<i128> = self.data.iter().map(|&x| x as i128).collect();
        let matmul = |x: &[i128], y: &[i128]| -> Result<Vec<i128>> {
            let mut out = vec![0i128; n * n];
            for i in 0..n {
                for k in 0..n {
                    let xv = x[i * n + k];
                    if xv == 0 {
                        continue;
                    }
                    for j in 0..n {
                        out[i * n + j] = xv
                            .checked_mul(y[k * n + j])
                            .and_then(|v| out[i * n + j].checked_add(v))
                            .ok_or(Error::Overflow)?;
                    }
                }
            }
            Ok(out)
        };
        // coefficients c[k] of t^{n-k}
        let mut c = vec![0i128; n + 1];
        c[0] = 1;
        let mut mk = vec![0i128; n * n];
        for k in 1..=n {
            // M_k = A M_{k-1} + c_{k-1} I
            let mut next = matmul(&a, &mk)?;
            for i in 0..n {
                next[i * n + i] += c[k - 1];
            }
            mk = next;
            let am = matmul(&a, &mk)?;
            let tr: i128 = (0..n).map(|i| am[i * n + i]).sum();
            if tr % k as i128 != 0 {
                return Err(Error::Overflow);
            }
            c[k] = -tr / k as i128;
        }
        let asc: Result<Vec<i64>> = c
            .iter()
            .rev()
            .map(|&x| i64::try_from(x).map_err(|_| Error::Overflow))
            .collect();
        Ok(IntPoly::new(asc?))
    }

    /// Inverse of a unimodular matrix.
    pub fn inverse_unimodular(&self) -> Result<Self> {
        let det = self.det()?;
        if det.abs() != 1 {
            return Err(Error::InvalidInput(format!(
                "matrix has determinant {det}, not +-1"
            )));
        }
        let inv = rational_inverse(self)?;
        let data: Option<Vec<i64>> = inv
            .iter()
            .map(|x| {
                if x.is_integer() {
                    i64::try_from(x.to_integer()).ok()
                } else {
                    None
                }
            })
            .collect();
        let data = data.ok_or(Error::Overflow)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `M^T J M - J`; zero iff `M` is symplectic for the standard form.
    pub fn symplectic_defect(&self) -> Result<Self> {
        if !self.is_square() || !self.rows.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "symplectic matrices are square of even size, got {}x{}",
                self.rows, self.cols
            )));
        }
        let j = Self::symplectic_form(self.rows);
        self.transpose().mul(&j)?.mul(self)?.sub(&j)
    }

    pub fn is_symplectic(&self) -> bool {
        self.symplectic_defect()
            .map(|d| d.data.iter().all(|&x| x == 0))
            .unwrap_or(false)
    }

    /// Induced map on 2-vectors in the basis `e_i ^ e_j`, `i < j`,
    /// ordered lexicographically.
    pub fn wedge2(&self) -> Self {
        let pairs = wedge_pairs(self.rows);
        Self::from_fn(pairs.len(), pairs.len(), |r, c| {
            let (i, j) = pairs[r];
            let (k, l) = pairs[c];
            self[(i, k)] * self[(j, l)] - self[(i, l)] * self[(j, k)]
        })
    }
}

pub fn wedge_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            out.push((i, j));
        }
    }
    out
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = i64;

    fn index(&self, (i, j): (usize, usize)) -> &i64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut i64 {
        &mut self.data[i * self.cols + j]
    }
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// Z-basis of the lattice `{x in Z^c : K x = 0}` for an integer `r x c`
/// matrix given row-major, computed by unimodular column operations and
/// then pairwise size-reduced.
pub fn integer_kernel(k: &[Vec<i128>], cols: usize) -> Result<Vec<Vec<i64>>> {
    let rows = k.len();
    // work column-major: columns of K stacked over columns of U
    let mut col: Vec<Vec<i128>> = (0..cols)
        .map(|j| {
            let mut v: Vec<i128> = (0..rows).map(|i| k[i][j]).collect();
            v.extend((0..cols).map(|i| (i == j) as i128));
            v
        })
        .collect();
    let mut piv = 0;
    for i in 0..rows {
        if piv == cols {
            break;
        }
        for j in piv + 1..cols {
            let b = col[j][i];
            if b == 0 {
                continue;
            }
            let a = col[piv][i];
            let (g, x, y) = ext_gcd(a, b);
            let (ag, bg) = (a / g, b / g);
            let mut new_p = Vec::with_capacity(rows + cols);
            let mut new_j = Vec::with_capacity(rows + cols);
            for t in 0..rows + cols {
                let (u, w) = (col[piv][t], col[j][t]);
                new_p.push(
                    x.checked_mul(u)
                        .and_then(|s| s.checked_add(y.checked_mul(w)?))
                        .ok_or(Error::Overflow)?,
                );
                new_j.push(
                    ag.checked_mul(w)
                        .and_then(|s| s.checked_sub(bg.checked_mul(u)?))
                        .ok_or(Error::Overflow)?,
                );
            }
            col[piv] = new_p;
            col[j] = new_j;
        }
        if col[piv][i] != 0 {
            piv += 1;
        }
    }
    let mut basis: Vec<Vec<i128>> = col[piv..].iter().map(|c| c[rows..].to_vec()).collect();
    size_reduce(&mut basis);
    basis
        .into_iter()
        .map(|v| {
            v.into_iter()
                .map(|x| i64::try_from(x).map_err(|_| Error::Overflow))
                .collect()
        })
        .collect()
}

fn norm2(v: &[i128]) -> i128 {
    v.iter().map(|x| x * x).sum()
}

/// Greedy pairwise size reduction (Lagrange style) until no pair improves.
fn size_reduce(basis: &mut [Vec<i128>]) {
    let n = basis.len();
    for _ in 0..200 {
        let mut improved = false;
        basis.sort_by_key(|v| norm2(v));
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let nj = norm2(&basis[j]);
                if nj == 0 {
                    continue;
                }
                let d: i128 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                let mu = (d as f64 / nj as f64).round() as i128;
                if mu != 0 {
                    let cand: Vec<i128> = basis[i]
                        .iter()
                        .zip(&basis[j])
                        .map(|(a, b)| a - mu * b)
                        .collect();
                    if norm2(&cand) < norm2(&basis[i]) {
                        basis[i] = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    for v in basis.iter_mut() {
        if let Some(first) = v.iter().find(|x| **x != 0) {
            if *first < 0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
}

fn to_big(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Exact inverse over the rationals, row-major.
pub fn rational_inverse(m: &IntMatrix) -> Result<Vec<BigRational>> {
    let n = m.rows;
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            let mut row: Vec<BigRational> = (0..n).map(|j| to_big(m[(i, j)])).collect();
            row.extend((0..n).map(|j| to_big((i == j) as i64)));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .find(|&r| !a[r][c].is_zero())
            .ok_or_else(|| Error::InvalidInput("singular matrix".into()))?;
        a.swap(p, c);
        let inv = BigRational::one() / a[c][c].clone();
        for x in a[c].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                for k in 0..2 * n {
                    let v = a[c][k].clone() * f.clone();
                    a[r][k] = a[r][k].clone() - v;
                }
            }
        }
    }
    Ok(a.into_iter()
        .flat_map(|row| row.into_iter().skip(n))
        .collect())
}

/// Solve `W X = Y` exactly for a full-column-rank `W` (`r x k`) whose
/// columns are given, with `Y` given column by column. Returns `X` as
/// columns, or `None` if some column of `Y` is outside the span of `W`.
pub fn solve_in_span(w_cols: &[Vec<i64>], y_cols: &[Vec<i64>]) -> Option<Vec<Vec<BigRational>>> {
    let k = w_cols.len();
    let r = w_cols.first().map_or(0, Vec::len);
    let ny = y_cols.len();
    let mut a: Vec<Vec<BigRational>> = (0..r)
        .map(|i| {
            w_cols
                .iter()
                .map(|c| to_big(c[i]))
                .chain(y_cols.iter().map(|c| to_big(c[i])))
                .collect()
        })
        .collect();
    let mut row = 0;
    let mut pivots = Vec::with_capacity(k);
    for c in 0..k {
        let p = (row..r).find(|&i| !a[i][c].is_zero())?;
        a.swap(p, row);
        let inv = BigRational::one() / a[row][c].clone();
        for x in a[row].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        for i in 0..r {
            if i != row && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in 0..k + ny {
                    let v = a[row][j].clone() * f.clone();
                    a[i][j] = a[i][j].clone() - v;
                }
            }
        }
        pivots.push(row);
        row += 1;
    }
    // consistency: remaining rows must vanish on the Y block
    for i in row..r {
        if (k..k + ny).any(|j| !a[i][j].is_zero()) {
            return None;
        }
    }
    Some(
        (0..ny)
            .map(|j| pivots.iter().map(|&pr| a[pr][k + j].clone()).collect())
            .collect(),
    )
}

/// Rational vector as an integer matrix entry if integral.
pub fn rational_to_i64(x: &BigRational) -> Option<i64> {
    if x.is_integer() {
        i64::try_from(x.to_integer()).ok()
    } else {
        None
    }
}

pub fn is_positive(x: &BigRational) -> bool {
    x.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> IntMatrix {
        IntMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn det_and_charpoly() {
        let a = m(&[&[2, 1], &[1, 1]]);
        assert_eq!(a.det().unwrap(), 1);
        assert_eq!(a.charpoly().unwrap(), IntPoly::from_descending(&[1, -3, 1]));
        let b = m(&[&[3, 1, -1, 0], &[1, 4, 0, -1], &[1, 0, 0, 0], &[0, 1, 0, 0]]);
        assert_eq!(
            b.charpoly().unwrap(),
            IntPoly::from_descending(&[1, -7, 13, -7, 1])
        );
        assert_eq!(b.det().unwrap(), 1);
        assert_eq!(m(&[&[0, 1], &[1, 0]]).det().unwrap(), -1);
        assert_eq!(m(&[&[1, 2], &[2, 4]]).det().unwrap(), 0);
    }

    #[test]
    fn companion_has_its_polynomial() {
        let p = IntPoly::from_descending(&[1, 0, -1, -1, 3]);
        assert_eq!(IntMatrix::companion(&p).unwrap().charpoly().unwrap(), p);
    }

    #[test]
    fn symplectic_checks() {
        assert!(m(&[&[2, 1], &[1, 1]]).is_symplectic());
        assert!(m(&[&[1, 1], &[0, 1]]).is_symplectic());
        assert!(!m(&[&[2, 0], &[0, 1]]).is_symplectic());
        assert!(m(&[&[3, 1, -1, 0], &[1, 4, 0, -1], &[1, 0, 0, 0], &[0, 1, 0, 0]]).is_symplectic());
    }

    #[test]
    fn unimodular_inverse() {
        let a = m(&[&[2, 1], &[1, 1]]);
        let inv = a.inverse_unimodular().unwrap();
        assert_eq!(a.mul(&inv).unwrap(), IntMatrix::identity(2));
        assert!(m(&[&[2, 0], &[0, 1]]).inverse_unimodular().is_err());
    }

    #[test]
    fn kernel_lattice_basis() {
        // x + 2y + 3z = 0 has kernel lattice of rank 2
        let k = vec![vec![1i128, 2, 3]];
        let basis = integer_kernel(&k, 3).unwrap();
        assert_eq!(basis.len(), 2);
        for v in &basis {
            assert_eq!(v[0] + 2 * v[1] + 3 * v[2], 0);
        }
        // and it is a Z-basis: determinant of the basis against a complement is +-1
        let full =
            IntMatrix::from_rows(&[basis[0].clone(), basis[1].clone(), vec![1, 0, 0]]).unwrap();
        assert_eq!(full.det().unwrap().abs(), 1);
    }

    #[test]
    fn wedge_of_two_by_two_is_det() {
        let a = m(&[&[2, 1], &[1, 1]]);
        assert_eq!(a.wedge2(), m(&[&[1]]));
        let b = m(&[&[0, 1], &[1, 0]]);
        assert_eq!(b.wedge2(), m(&[&[-1]]));
    }

    #[test]
    fn wedge_is_multiplicative() {
        let a = m(&[&[3, 1, -1, 0], &[1, 4, 0, -1], &[1, 0, 0, 0], &[0, 1, 0, 0]]);
        let b = m(&[&[1, 2, 0, 1], &[0, 1, 1, 0], &[2, 0, 1, 1], &[1, 1, 0, 2]]);
        let lhs = a.mul(&b).unwrap().wedge2();
        let rhs = a.wedge2().mul(&b.wedge2()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn serde_rows() {
        let a = m(&[&[2, 1], &[1, 1]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[2,1],[1,1]]");
        let back: IntMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<IntMatrix>("[[1,2],[3]]").is_err());
    }
}
