use nalgebra::DVector;
use nildyn::cli::Action;
use nildyn::semiconjugacy::{
    fiber_probe, hyperbolic_splitting, phi_map, CocycleField, FiberProbeOptions, FourierTerm,
    PerturbedMap, SemiconjugacyField, SolveOptions, TermKind,
};
use nildyn::{AffineMap, Error, GroupElement, LatticeSpec, NilAutomorphism, SymplecticMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PERTURBED_CAT: &str = include_str!("../data/perturbed_cat.toml");

fn cat(translation: [f64; 3]) -> AffineMap<f64> {
    let m = SymplecticMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
    let lattice = LatticeSpec::new(1, 0, 2).unwrap();
    let aut = NilAutomorphism::new(m, nildyn::IntMatrix::zeros(0, 0), lattice).unwrap();
    let g0 = GroupElement::from_flat(1, 0, &translation).unwrap();
    AffineMap::new(aut, g0).unwrap()
}

fn unstable_sine(f: &AffineMap<f64>, eps: f64) -> CocycleField {
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

fn random_point(rng: &mut ChaCha8Rng, r: u32) -> GroupElement<f64> {
    let z = rng.gen::<f64>() / r as f64;
    GroupElement::from_flat(1, 0, &[rng.gen(), rng.gen(), z]).unwrap()
}

/// Interpolation error of `phi` at `y`, against the series value.
fn interpolation_error(s: &SemiconjugacyField, pm: &PerturbedMap, y: &GroupElement<f64>) -> f64 {
    let big = phi_map(s, y).unwrap();
    let exact = pm.phi_series(y, s.truncation_depth).unwrap();
    big.iter()
        .zip(y.base())
        .zip(exact)
        .map(|((p, b), e)| (p - b - e).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn conjugacy_holds_off_grid() {
    let action = Action::parse_toml(PERTURBED_CAT).unwrap();
    let (g, v) = action.field().unwrap().unwrap();
    let pm = PerturbedMap::new(&action.maps[g], &v).unwrap();
    let s = pm
        .solve(&SolveOptions {
            grid_su: 64,
            grid_center: 2,
            depth: 60,
        })
        .unwrap();
    let a = pm.su_matrix().to_f64();
    let a_norm = a.clone().svd(false, false).singular_values.max();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let x = random_point(&mut rng, pm.lattice().r);
        let fx = pm.forward(&x);
        let lhs = DVector::from_vec(phi_map(&s, &fx).unwrap());
        let rhs = &a * DVector::from_vec(phi_map(&s, &x).unwrap());
        let gap = (lhs - rhs).norm();
        let bound = s.residual_max
            + interpolation_error(&s, &pm, &fx)
            + a_norm * interpolation_error(&s, &pm, &x)
            + 1e-12;
        assert!(gap <= bound, "gap {gap} exceeds {bound}");
        worst = worst.max(gap);
    }
    assert!(worst < 1e-2);
}

#[test]
fn inverse_map_has_the_same_coordinates() {
    let f = cat([0.17, -0.31, 0.05]);
    let finv = f.inverse().unwrap();
    let zero = CocycleField::zero(*f.lattice());
    let opts = SolveOptions {
        grid_su: 4,
        grid_center: 2,
        depth: 60,
    };
    let s = PerturbedMap::new(&f, &zero).unwrap().solve(&opts).unwrap();
    let si = PerturbedMap::new(&finv, &zero)
        .unwrap()
        .solve(&opts)
        .unwrap();
    assert!(s.residual_max < 1e-12 && si.residual_max < 1e-12);
    let gap = s
        .phi
        .iter()
        .zip(&si.phi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-10, "phi differs by {gap}");
    assert!(s.phi.iter().any(|x| x.abs() > 1e-3));
}

#[test]
fn field_is_lattice_invariant() {
    let f = cat([0.0; 3]);
    let v = CocycleField::new(
        *f.lattice(),
        vec![
            FourierTerm {
                freq: vec![2, -1, 0],
                amp: vec![0.1, 0.2, 0.0],
                kind: TermKind::Cos,
                phase: 0.4,
            },
            FourierTerm {
                freq: vec![0, 1, 2],
                amp: vec![-0.05, 0.0, 0.3],
                kind: TermKind::Sin,
                phase: 0.0,
            },
        ],
    )
    .unwrap();
    let gens = f.lattice().generators::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let x = random_point(&mut rng, 2);
        let vx = v.eval(&x).to_flat();
        for g in &gens {
            let vg = v.eval(&g.mul(&x).unwrap()).to_flat();
            for (a, b) in vx.iter().zip(&vg) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gate_failure_stops_the_fiber_probe() {
    let f = cat([0.0; 3]);
    assert!(
        !PerturbedMap::new(&f, &unstable_sine(&f, 5.0))
            .unwrap()
            .gate
            .passes
    );
    let pm = PerturbedMap::new(&f, &unstable_sine(&f, 0.06)).unwrap();
    assert!(!pm.gate.passes);
    let s = pm
        .solve(&SolveOptions {
            grid_su: 8,
            grid_center: 2,
            depth: 30,
        })
        .unwrap();
    let err = fiber_probe(&s, &pm, &[0.3, 0.4], &FiberProbeOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn grid_file_round_trips() {
    let f = cat([0.1, 0.2, 0.0]);
    let s = PerturbedMap::new(&f, &unstable_sine(&f, 0.05))
        .unwrap()
        .solve(&SolveOptions {
            grid_su: 8,
            grid_center: 2,
            depth: 30,
        })
        .unwrap();
    let mut buf = Vec::new();
    s.write_grid(&mut buf).unwrap();
    let back = SemiconjugacyField::read_grid(buf.as_slice()).unwrap();
    assert_eq!(s, back);
}
