use nildyn::cli::Action;
use nildyn::suword::{
    apply_su_word_affine, center_drift, phi_shift, symplectic_area, word_normal_form, Slot,
    SuModel, SuWord,
};
use nildyn::GroupElement;
use proptest::prelude::*;

const CAT: &str = include_str!("../data/cat.toml");
const QUARTIC: &str = include_str!("../data/quartic_units.toml");

fn model(src: &str) -> SuModel {
    SuModel::new(&Action::parse_toml(src).unwrap().maps[0]).unwrap()
}

fn word(model: &SuModel, raw: &[(bool, Vec<f64>)]) -> SuWord {
    let half = model.d() / 2;
    SuWord::new(
        raw.iter()
            .map(|(u, c)| {
                let slot = if *u { Slot::U } else { Slot::S };
                model.letter_from_coords(slot, &c[..half]).unwrap()
            })
            .collect(),
    )
}

fn raw_word() -> impl Strategy<Value = Vec<(bool, Vec<f64>)>> {
    prop::collection::vec(
        (any::<bool>(), prop::collection::vec(-2.0f64..2.0, 2)),
        0..8,
    )
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 5)
}

fn base_point(m: &SuModel, p: &[f64]) -> GroupElement<f64> {
    let d = m.d();
    let mut flat = p[..d].to_vec();
    flat.insert(d, p[4]);
    GroupElement::from_flat(d / 2, 0, &flat).unwrap()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn base_displacement_is_pi(raw in raw_word(), p in point(), quartic in any::<bool>()) {
        let m = model(if quartic { QUARTIC } else { CAT });
        let w = word(&m, &raw);
        let x = base_point(&m, &p);
        prop_assert!(max_gap(&phi_shift(&w, &x, &m).unwrap(), &w.pi(m.d())) < 1e-10);
    }

    #[test]
    fn normal_form_recomposes(raw in raw_word(), quartic in any::<bool>()) {
        let m = model(if quartic { QUARTIC } else { CAT });
        let w = word(&m, &raw);
        let nf = word_normal_form(&w, m.d());
        let x = GroupElement::identity(m.d() / 2, 0);
        let a = apply_su_word_affine(&w, &x, &m).unwrap().to_flat();
        let b = apply_su_word_affine(&nf.recompose(), &x, &m).unwrap().to_flat();
        prop_assert!(max_gap(&a, &b) < 1e-9);
    }

    #[test]
    fn word_times_inverse_is_identity(raw in raw_word(), p in point()) {
        let m = model(QUARTIC);
        let w = word(&m, &raw);
        let x = base_point(&m, &p);
        let y = apply_su_word_affine(&w.inverse().concat(&w), &x, &m).unwrap();
        prop_assert!(max_gap(&y.to_flat(), &x.to_flat()) < 1e-10);
        prop_assert!(w.concat(&w.inverse()).is_empty());
    }

    #[test]
    fn closed_drift_is_the_enclosed_area(raw in raw_word(), quartic in any::<bool>()) {
        let m = model(if quartic { QUARTIC } else { CAT });
        let w = word(&m, &raw);
        let nf = word_normal_form(&w, m.d());
        let mut closing = SuWord::new(vec![]);
        closing = closing.concat(&SuWord::letter(Slot::U, nf.u.iter().map(|x| -x).collect()));
        closing = closing.concat(&SuWord::letter(Slot::S, nf.v.iter().map(|x| -x).collect()));
        let closed = w.concat(&closing);
        let drift = center_drift(&closed, &m).unwrap();
        let area = symplectic_area(&closed, m.d() / 2);
        prop_assert!((drift - area).abs() < 1e-9 * (1.0 + area.abs()));
    }

    #[test]
    fn phi_shift_is_additive(a in raw_word(), b in raw_word(), p in point()) {
        let m = model(QUARTIC);
        let (wa, wb) = (word(&m, &a), word(&m, &b));
        let x = base_point(&m, &p);
        let whole = phi_shift(&wa.concat(&wb), &x, &m).unwrap();
        let inner = phi_shift(&wb, &x, &m).unwrap();
        let y = apply_su_word_affine(&wb, &x, &m).unwrap();
        let outer = phi_shift(&wa, &y, &m).unwrap();
        let sum: Vec<f64> = inner.iter().zip(&outer).map(|(p, q)| p + q).collect();
        prop_assert!(max_gap(&whole, &sum) < 1e-10);
    }
}

#[test]
fn open_word_has_no_drift() {
    let m = model(CAT);
    let w = word(&m, &[(true, vec![1.0, 0.0])]);
    assert!(center_drift(&w, &m).is_err());
}
