use num_complex::Complex64;
use oml_core::optics::{
    coherent_rt, evaluate_stack, stack_rt, wavelength_grid, ComplexIndex, Layer, Polarization, Quantity, SpectrumQuery,
    Stack,
};
use proptest::prelude::*;

fn lossless(n: f64) -> ComplexIndex {
    ComplexIndex::lossless(n)
}

fn layer(n: f64, k: f64, d: f64) -> Layer {
    Layer {
        index: ComplexIndex { n, k },
        thickness_nm: d,
    }
}

/// Fresnel power reflectance of a bare interface, written out independently
/// of the transfer-matrix code.
fn fresnel_r(n1: f64, n2: f64, theta: f64, pol: Polarization) -> f64 {
    let n1c = Complex64::new(n1, 0.0);
    let n2c = Complex64::new(n2, 0.0);
    let cos1 = Complex64::new(theta.cos(), 0.0);
    let sin2 = n1 * theta.sin() / n2;
    let cos2 = (Complex64::new(1.0 - sin2 * sin2, 0.0)).sqrt();
    let r = match pol {
        Polarization::S => (n1c * cos1 - n2c * cos2) / (n1c * cos1 + n2c * cos2),
        Polarization::P => (n2c * cos1 - n1c * cos2) / (n2c * cos1 + n1c * cos2),
        Polarization::Unpolarized => unreachable!(),
    };
    r.norm_sqr()
}

#[test]
fn air_glass_interface_reflects_four_percent() {
    let stack = Stack {
        ambient: lossless(1.0),
        layers: vec![],
        substrate: lossless(1.5),
    };
    let rt = stack_rt(&stack, 550.0, 0.0, Polarization::Unpolarized);
    assert!((rt.r - 0.04).abs() < 1e-12);
    assert!((rt.t - 0.96).abs() < 1e-12);
}

#[test]
fn single_interface_matches_fresnel() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n1 = rng.random_range(1.0..2.5);
        let n2 = rng.random_range(1.0..4.0);
        let theta = rng.random_range(0.0..89.0_f64).to_radians();
        let pol = if rng.random::<bool>() {
            Polarization::S
        } else {
            Polarization::P
        };
        let stack = Stack {
            ambient: lossless(n1),
            layers: vec![],
            substrate: lossless(n2),
        };
        let got = coherent_rt(&stack, 700.0, theta, pol).r;
        let want = fresnel_r(n1, n2, theta, pol);
        assert!(
            (got - want).abs() < 1e-10,
            "n1={n1} n2={n2} theta={theta} {pol:?}: {got} vs {want}"
        );
    }
}

#[test]
fn total_internal_reflection() {
    let stack = Stack {
        ambient: lossless(1.5),
        layers: vec![],
        substrate: lossless(1.0),
    };
    for pol in [Polarization::S, Polarization::P] {
        let rt = coherent_rt(&stack, 600.0, 60f64.to_radians(), pol);
        assert!((rt.r - 1.0).abs() < 1e-12);
        assert!(rt.t.abs() < 1e-12);
    }
}

/// Air / (H L)^N H / substrate with quarter-wave layers at the design
/// wavelength. The input admittance is (nH/nL)^(2N) nH^2 / ns.
fn quarter_wave_closed_form(n_h: f64, n_l: f64, n_sub: f64, pairs: i32) -> f64 {
    let y = (n_h / n_l).powi(2 * pairs) * n_h * n_h / n_sub;
    ((1.0 - y) / (1.0 + y)).powi(2)
}

#[test]
fn quarter_wave_stack_matches_closed_form() {
    let (n_h, n_l, n_sub, lambda) = (2.3, 1.38, 1.5, 550.0);
    for pairs in 1..=6 {
        let mut layers = Vec::new();
        for _ in 0..pairs {
            layers.push(layer(n_h, 0.0, lambda / (4.0 * n_h)));
            layers.push(layer(n_l, 0.0, lambda / (4.0 * n_l)));
        }
        layers.push(layer(n_h, 0.0, lambda / (4.0 * n_h)));
        let stack = Stack {
            ambient: lossless(1.0),
            layers,
            substrate: lossless(n_sub),
        };
        let got = stack_rt(&stack, lambda, 0.0, Polarization::Unpolarized).r;
        let want = quarter_wave_closed_form(n_h, n_l, n_sub, pairs);
        assert!((got - want).abs() < 1e-8, "N={pairs}: {got} vs {want}");
    }
}

#[test]
fn half_wave_layer_is_absentee() {
    let bare = Stack {
        ambient: lossless(1.0),
        layers: vec![],
        substrate: lossless(1.5),
    };
    let with = Stack {
        layers: vec![layer(2.0, 0.0, 600.0 / 4.0)],
        ..bare.clone()
    };
    let a = stack_rt(&bare, 600.0, 0.0, Polarization::S).r;
    let b = stack_rt(&with, 600.0, 0.0, Polarization::S).r;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn thick_metal_is_opaque() {
    let stack = Stack {
        ambient: lossless(1.0),
        layers: vec![layer(3.0, 4.0, 500.0)],
        substrate: lossless(1.5),
    };
    let rt = stack_rt(&stack, 800.0, 0.0, Polarization::Unpolarized);
    assert!(rt.t < 1e-12);
}

#[test]
fn rejects_bad_inputs() {
    assert!(ComplexIndex::new(f64::NAN, 0.0).is_err());
    assert!(ComplexIndex::new(1.5, -0.1).is_err());
    let stack = Stack {
        ambient: lossless(1.0),
        layers: vec![layer(1.5, 0.0, 0.0)],
        substrate: lossless(1.5),
    };
    assert!(evaluate_stack(&stack, &SpectrumQuery::normal_incidence(vec![500.0])).is_err());
    let ok = Stack {
        layers: vec![],
        ..stack
    };
    assert!(evaluate_stack(&ok, &SpectrumQuery::normal_incidence(vec![-1.0])).is_err());
    assert!(wavelength_grid(400.0, 300.0, 5.0).is_err());
    assert_eq!(wavelength_grid(400.0, 2000.0, 5.0).unwrap().len(), 321);
}

fn arb_layer(lossy: bool) -> impl Strategy<Value = Layer> {
    (1.0..5.0f64, 0.0..5.0f64, 1.0..400.0f64).prop_map(move |(n, k, d)| layer(n, if lossy { k } else { 0.0 }, d))
}

fn arb_stack(lossy: bool) -> impl Strategy<Value = Stack> {
    (
        1.0..2.0f64,
        prop::collection::vec(arb_layer(lossy), 0..8),
        1.0..4.0f64,
        0.0..3.0f64,
    )
        .prop_map(move |(n0, layers, ns, ks)| Stack {
            ambient: lossless(n0),
            layers,
            substrate: ComplexIndex {
                n: ns,
                k: if lossy { ks } else { 0.0 },
            },
        })
}

fn pol() -> impl Strategy<Value = Polarization> {
    prop_oneof![
        Just(Polarization::S),
        Just(Polarization::P),
        Just(Polarization::Unpolarized)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn energy_is_conserved(stack in arb_stack(true), wl in 300.0..3000.0f64, deg in 0.0..85.0f64, p in pol()) {
        let q = SpectrumQuery { wavelengths_nm: vec![wl], angles_rad: vec![deg.to_radians()], polarization: p };
        let s = evaluate_stack(&stack, &q).unwrap();
        prop_assert!((1.0 - (s.r[0] + s.t[0] + s.a[0])).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&s.r[0]) && (0.0..=1.0).contains(&s.t[0]));
    }

    #[test]
    fn lossless_stacks_do_not_absorb(stack in arb_stack(false), wl in 300.0..3000.0f64, deg in 0.0..85.0f64, p in pol()) {
        let q = SpectrumQuery { wavelengths_nm: vec![wl], angles_rad: vec![deg.to_radians()], polarization: p };
        let s = evaluate_stack(&stack, &q).unwrap();
        prop_assert!(s.a[0] < 1e-9, "A = {}", s.a[0]);
    }

    #[test]
    fn reflectance_is_reciprocal_at_normal_incidence(stack in arb_stack(false), wl in 300.0..3000.0f64) {
        let mut reversed = stack.clone();
        reversed.layers.reverse();
        std::mem::swap(&mut reversed.ambient, &mut reversed.substrate);
        let a = stack_rt(&stack, wl, 0.0, Polarization::Unpolarized).r;
        let b = stack_rt(&reversed, wl, 0.0, Polarization::Unpolarized).r;
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn polarizations_agree_at_normal_incidence(stack in arb_stack(true), wl in 300.0..3000.0f64) {
        let s = coherent_rt(&stack, wl, 0.0, Polarization::S);
        let p = coherent_rt(&stack, wl, 0.0, Polarization::P);
        prop_assert!((s.r - p.r).abs() < 1e-10);
        prop_assert!((s.t - p.t).abs() < 1e-10);
    }

    #[test]
    fn splitting_a_layer_changes_nothing(
        stack in arb_stack(true),
        at in 0usize..8,
        frac in 0.05..0.95f64,
        wl in 300.0..3000.0f64,
        deg in 0.0..80.0f64,
    ) {
        prop_assume!(!stack.layers.is_empty());
        let at = at % stack.layers.len();
        let mut split = stack.clone();
        let l = split.layers[at];
        split.layers[at].thickness_nm = l.thickness_nm * frac;
        split.layers.insert(at + 1, Layer { thickness_nm: l.thickness_nm * (1.0 - frac), ..l });
        let q = SpectrumQuery { wavelengths_nm: vec![wl], angles_rad: vec![deg.to_radians()], polarization: Polarization::Unpolarized };
        let a = evaluate_stack(&stack, &q).unwrap();
        let b = evaluate_stack(&split, &q).unwrap();
        for quantity in [Quantity::R, Quantity::T, Quantity::A] {
            prop_assert!((a.values(quantity)[0] - b.values(quantity)[0]).abs() < 1e-10);
        }
    }
}
