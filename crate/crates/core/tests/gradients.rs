//! Central finite-difference checks of every differentiable building block.

use oml_core::nn::{Embedding, GruCell, Linear, Mlp, ParamStore, Tape, Var};
use oml_core::optics::{Quantity, SpectrumQuery};
use oml_core::policy::{DesignVocabulary, Generator, NetworkConfig, VariantFlags};
use oml_core::ppo::{collect_batch, ppo_loss, prepare_batch, RewardCache, TrainConfig};
use oml_core::reward::RewardSpec;
use oml_core::structure::Environment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{check_input, check_params, project, rel_err, toy_library, H, TOL};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(2024)
}

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.random_range(-1.5..1.5)).collect()
}

#[test]
fn linear_layer() {
    let mut store = ParamStore::new();
    let mut r = rng();
    let lin = Linear::new(&mut store, "lin", 4, 3, &mut r);
    // Non-zero biases so their gradient path is exercised with real values.
    for b in store.get_mut(lin.b).values.iter_mut() {
        *b = r.random_range(-0.5..0.5);
    }
    let x0 = random_input(4, 1);
    let f = |t: &mut Tape<'_>, x: Var| {
        let y = lin.forward(t, x).unwrap();
        project(t, y, 7)
    };
    assert!(check_input(&store, &x0, f) < TOL);
    assert!(
        check_params(&store, |t| {
            let x = t.input(x0.clone());
            f(t, x)
        }) < TOL
    );
}

#[test]
fn mlp_with_tanh_hidden_layers() {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", &[5, 6, 4, 3], &mut rng());
    let x0 = random_input(5, 2);
    let f = |t: &mut Tape<'_>, x: Var| {
        let y = mlp.forward(t, x).unwrap();
        project(t, y, 8)
    };
    assert!(check_input(&store, &x0, f) < TOL);
    assert!(
        check_params(&store, |t| {
            let x = t.input(x0.clone());
            f(t, x)
        }) < TOL
    );
}

#[test]
fn gru_cell_over_two_steps() {
    let mut store = ParamStore::new();
    let gru = GruCell::new(&mut store, "gru", 3, 4, &mut rng());
    let x0 = random_input(3, 3);
    let x1 = random_input(3, 4);
    let h0 = random_input(4, 5);
    let f = |t: &mut Tape<'_>, h: Var| {
        let a = t.input(x0.clone());
        let b = t.input(x1.clone());
        let h1 = gru.step(t, a, h).unwrap();
        let h2 = gru.step(t, b, h1).unwrap();
        project(t, h2, 9)
    };
    assert!(check_input(&store, &h0, f) < TOL);
    assert!(
        check_params(&store, |t| {
            let h = t.input(h0.clone());
            f(t, h)
        }) < TOL
    );
}

#[test]
fn embedding_lookup() {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "emb", 4, 3, &mut rng());
    let err = check_params(&store, |t| {
        let a = emb.lookup(t, 1).unwrap();
        let b = emb.lookup(t, 3).unwrap();
        let again = emb.lookup(t, 1).unwrap();
        let s = t.mul(a, b);
        let s = t.add(s, again);
        project(t, s, 10)
    });
    assert!(err < TOL);
}

#[test]
fn softmax_heads_select_and_entropy() {
    let store = ParamStore::new();
    let x0 = random_input(5, 6);
    let err = check_input(&store, &x0, |t, x| {
        let gated = t.select(x, &[0, 2, 3, 4]);
        let lp = t.log_softmax(gated);
        let pick = t.pick(lp, 2);
        let h = t.entropy(x);
        let s = t.sigmoid(x);
        let om = t.one_minus(s);
        let th = t.tanh(om);
        let cat = t.concat(&[th, pick, h]);
        project(t, cat, 11)
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn full_ppo_surrogate() {
    let lib = toy_library();
    let vocab = DesignVocabulary::new(vec!["L".into(), "H".into(), "M".into()], vec![20.0, 50.0, 80.0, 120.0]).unwrap();
    let grid = SpectrumQuery::normal_incidence(vec![400.0, 500.0, 600.0, 700.0]);
    let spec = RewardSpec::from_fn(grid, Quantity::A, Environment::default(), |_, _| 1.0).unwrap();
    let network = NetworkConfig {
        embedding_dim: 3,
        hidden_size: 6,
        head_hidden: vec![5],
        critic_hidden: vec![4, 4],
    };
    for flags in [VariantFlags::default(), VariantFlags::baseline()] {
        let cfg = TrainConfig {
            batch_steps: 12,
            max_length: 4,
            flags,
            network: network.clone(),
            ..TrainConfig::default()
        };
        let (generator, params) = Generator::new(vocab.clone(), flags, network.clone(), &mut rng()).unwrap();
        let mut cache = RewardCache::default();
        let batch = collect_batch(&generator, &params, &cfg, &spec, &lib, 5, &mut cache).unwrap();
        let mut prepared = prepare_batch(&batch, &cfg).unwrap();
        // Shift the behaviour log-probs so that some ratios land in the
        // clipped region on both sides.
        let mut r = ChaCha8Rng::seed_from_u64(12);
        for p in &mut prepared {
            for lp in &mut p.old_logp {
                *lp += r.random_range(-0.5..0.5);
            }
        }
        let eval = ppo_loss(&generator, &params, &prepared, &cfg).unwrap();
        assert!(eval.clip_fraction > 0.0 && eval.clip_fraction < 1.0);
        let mut analytic = Vec::new();
        for id in params.ids() {
            let n = params.get(id).len();
            analytic.extend(eval.grads.get(id).map_or(vec![0.0; n], <[f64]>::to_vec));
        }
        let base = params.flat_values();
        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut x = base.clone();
            x[i] = base[i] + H;
            probe.set_flat_values(&x).unwrap();
            let up = ppo_loss(&generator, &probe, &prepared, &cfg).unwrap().loss;
            x[i] = base[i] - H;
            probe.set_flat_values(&x).unwrap();
            let down = ppo_loss(&generator, &probe, &prepared, &cfg).unwrap().loss;
            worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
        }
        assert!(worst < TOL, "{flags:?}: worst relative error {worst}");
    }
}
