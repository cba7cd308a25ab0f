use nildyn::centralizer::{brute_force_centralizer, wedge_restriction};
use nildyn::poly::IntPoly;
use nildyn::{IntMatrix, SymplecticMatrix};
use proptest::prelude::*;

fn m4() -> IntMatrix {
    IntMatrix::from_rows(&[
        vec![3, 1, -1, 0],
        vec![1, 4, 0, -1],
        vec![1, 0, 0, 0],
        vec![0, 1, 0, 0],
    ])
    .unwrap()
}

#[test]
fn psi_is_a_homomorphism_on_the_centralizer() {
    let a = SymplecticMatrix::new(m4()).unwrap();
    let w = wedge_restriction(&a).unwrap();
    assert!(w.psi_is_identity(a.matrix()).unwrap());
    let oracle = brute_force_centralizer(a.matrix(), 6, true).unwrap();
    assert!(oracle.elements.len() >= 3);
    let elems = &oracle.elements[..oracle.elements.len().min(12)];
    for b in elems {
        assert!(b.is_symplectic());
        for c in elems {
            let lhs = w.psi(&b.mul(c).unwrap()).unwrap();
            let (pb, pc) = (w.psi(b).unwrap(), w.psi(c).unwrap());
            for i in 0..w.dim {
                for j in 0..w.dim {
                    let rhs = (0..w.dim)
                        .map(|k| &pb[i][k] * &pc[k][j])
                        .fold(num_rational::BigRational::from_integer(0.into()), |s, x| {
                            s + x
                        });
                    assert_eq!(lhs[i][j], rhs);
                }
            }
        }
    }
}

/// `[[I, S], [0, I]]` or `[[I, 0], [S, I]]` with `S` symmetric.
fn transvection(lower: bool, s: [i64; 3]) -> IntMatrix {
    let sym = [[s[0], s[1]], [s[1], s[2]]];
    IntMatrix::from_fn(4, 4, |i, j| {
        if i == j {
            1
        } else if !lower && i < 2 && j >= 2 {
            sym[i][j - 2]
        } else if lower && i >= 2 && j < 2 {
            sym[i - 2][j]
        } else {
            0
        }
    })
}

fn symplectic_word() -> impl Strategy<Value = IntMatrix> {
    prop::collection::vec((any::<bool>(), prop::array::uniform3(-2i64..=2)), 1..5).prop_map(|ts| {
        ts.into_iter().fold(IntMatrix::identity(4), |m, (l, s)| {
            m.mul(&transvection(l, s)).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symplectic_charpoly_is_reciprocal(m in symplectic_word()) {
        prop_assert!(m.is_symplectic());
        let p: IntPoly = m.charpoly().unwrap();
        let c = p.coeffs().to_vec();
        let mut r = c.clone();
        r.reverse();
        prop_assert_eq!(c, r);
    }

    #[test]
    fn eigenvalues_pair_with_their_inverses(m in symplectic_word()) {
        let roots = m.charpoly().unwrap().roots().unwrap();
        for z in &roots {
            let inv = 1.0 / *z;
            let best = roots.iter().map(|w| (w - inv).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(best < 1e-6 * (1.0 + inv.norm()), "no partner for {z}");
        }
    }
}
