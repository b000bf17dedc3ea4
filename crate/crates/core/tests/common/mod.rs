//! Helpers shared by the integration tests.
#![allow(dead_code)]

use oml_core::materials::{MaterialLibrary, MaterialTable, Sample};
use oml_core::nn::{ParamStore, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Compares analytic parameter gradients of `f` (a scalar tape output) with
/// central differences over every parameter scalar.
pub fn check_params(store: &ParamStore, f: impl Fn(&mut Tape<'_>) -> Var) -> f64 {
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        assert_eq!(tape.len(out), 1);
        let bw = tape.backward(&[(out, vec![1.0])]);
        let mut flat = Vec::new();
        for id in store.ids() {
            let n = store.get(id).len();
            flat.extend(bw.grads.get(id).map_or(vec![0.0; n], <[f64]>::to_vec));
        }
        flat
    };
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let out = f(&mut tape);
        tape.scalar(out)
    };
    let base = store.flat_values();
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut x = base.clone();
        x[i] = base[i] + H;
        probe.set_flat_values(&x).unwrap();
        let up = eval(&probe);
        x[i] = base[i] - H;
        probe.set_flat_values(&x).unwrap();
        let down = eval(&probe);
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

/// Same for the adjoint of an input vector.
pub fn check_input(store: &ParamStore, x0: &[f64], f: impl Fn(&mut Tape<'_>, Var) -> Var) -> f64 {
    let mut tape = Tape::new(store);
    let x = tape.input(x0.to_vec());
    let out = f(&mut tape, x);
    let analytic = tape.backward(&[(out, vec![1.0])]).wrt(x, x0.len());
    let eval = |xs: Vec<f64>| {
        let mut tape = Tape::new(store);
        let x = tape.input(xs);
        let out = f(&mut tape, x);
        tape.scalar(out)
    };
    let mut worst: f64 = 0.0;
    for i in 0..x0.len() {
        let mut up = x0.to_vec();
        up[i] += H;
        let mut down = x0.to_vec();
        down[i] -= H;
        let numeric = (eval(up) - eval(down)) / (2.0 * H);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

/// Reduces a vector node to a scalar with fixed random weights.
pub fn project(tape: &mut Tape<'_>, v: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..tape.len(v)).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c = tape.input(c);
    let prod = tape.mul(v, c);
    let parts: Vec<Var> = (0..tape.len(prod)).map(|i| tape.pick(prod, i)).collect();
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = tape.add(acc, p);
    }
    acc
}

/// Three flat-dispersion materials: low, high and lossy.
pub fn toy_library() -> MaterialLibrary {
    let flat = |name: &str, n: f64, k: f64| {
        MaterialTable::new(
            name,
            vec![
                Sample {
                    wavelength_nm: 300.0,
                    n,
                    k,
                },
                Sample {
                    wavelength_nm: 900.0,
                    n: n * 1.1,
                    k,
                },
            ],
        )
        .unwrap()
    };
    MaterialLibrary::from_tables([flat("L", 1.4, 0.0), flat("H", 2.3, 0.0), flat("M", 3.0, 2.5)]).unwrap()
}
