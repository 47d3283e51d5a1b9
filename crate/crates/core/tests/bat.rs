mod common;

use common::{random_labels, random_tensor, random_transducer, Reference};
use proptest::prelude::*;
use rwkv_asr::bat::{
    bat_loss, bat_loss_graph, band_centers, build_band, cif_align, cif_pretrain_step, cif_weights, fire,
    quantity_loss_graph, CifParams, PruneBand, DEFAULT_BAND_WIDTH,
};
use rwkv_asr::numerics::gradcheck::check_gradients;
use rwkv_asr::optim::{Adam, AdamConfig};
use rwkv_asr::params::{Bound, ParamStore};
use rwkv_asr::rng::run_rng;
use rwkv_asr::transducer::rnnt_loss;
use rwkv_asr::{Error, Tensor};

fn band_from_alpha(alpha: &[f64], u_len: usize, r: usize) -> PruneBand {
    let b = fire(alpha, u_len).unwrap();
    build_band(&b, alpha.len(), u_len, r).unwrap()
}

fn in_band(band: &PruneBand) -> impl Fn(usize, usize) -> bool + '_ {
    move |t, u| band.ranges[t].0 <= u && u <= band.ranges[t].1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fire_is_monotone_and_exact(alpha in prop::collection::vec(0.001f64..1.0, 1..60), u in 0usize..30) {
        let b = fire(&alpha, u).unwrap();
        prop_assert_eq!(b.len(), u);
        prop_assert!(b.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(b.iter().all(|&x| (1..=alpha.len()).contains(&x)));
    }

    #[test]
    fn band_is_connected_and_bounded(
        alpha in prop::collection::vec(0.01f64..1.0, 1..40),
        u_frac in 0.0f64..1.0,
        r in 2usize..8,
    ) {
        let t_len = alpha.len();
        let u_len = ((t_len * (r - 1)).min(25) as f64 * u_frac) as usize;
        let band = band_from_alpha(&alpha, u_len, r);
        prop_assert_eq!(band.ranges.len(), t_len);
        prop_assert_eq!(band.ranges[0].0, 0);
        prop_assert_eq!(band.ranges[t_len - 1].1, u_len);
        for (t, &(lo, hi)) in band.ranges.iter().enumerate() {
            prop_assert!(lo <= hi && hi <= u_len && hi - lo < r);
            if t > 0 {
                let (plo, phi) = band.ranges[t - 1];
                prop_assert!(plo <= lo && lo <= phi);
                prop_assert!(phi <= hi);
            }
        }
        prop_assert!(band.num_cells() <= t_len * r);
    }
}

#[test]
fn banded_loss_matches_restricted_enumeration() {
    let mut rng = run_rng(21);
    for seed in 0..30 {
        let (store, tp) = random_transducer(seed, 4, 3, 3, 4, 1.0);
        let reference = Reference::from_store(&store);
        let t_len = 2 + (seed as usize % 5);
        let u_len = seed as usize % 5;
        let r = 2 + seed as usize % 3;
        if u_len > t_len * (r - 1) {
            continue;
        }
        let h = random_tensor(&mut rng, &[t_len, 3], 1.0);
        let y = random_labels(&mut rng, 4, u_len);
        let alpha: Vec<f64> = (0..t_len).map(|t| 0.2 + 0.1 * ((t * 7 + seed as usize) % 5) as f64).collect();
        let band = band_from_alpha(&alpha, u_len, r);
        let (nll, lattice) = bat_loss(&store, &tp, &h, &y, &band).unwrap();
        let (p, _) = reference.likelihood(&h, &y, in_band(&band));
        assert!((nll + p.ln()).abs() < 1e-10, "seed {seed}");
        assert_eq!(lattice.evaluated_cells, band.num_cells());
        let (full, _) = rnnt_loss(&store, &tp, &h, &y).unwrap();
        assert!(nll >= full - 1e-12);
        if r > u_len {
            assert!((nll - full).abs() < 1e-12);
        }
    }
}

#[test]
fn default_width_caps_the_cell_count() {
    let (store, tp) = random_transducer(2, 6, 4, 4, 4, 1.0);
    let h = random_tensor(&mut run_rng(3), &[20, 4], 1.0);
    let y = random_labels(&mut run_rng(4), 6, 10);
    let alpha: Vec<f64> = (0..20).map(|t| 0.3 + 0.05 * (t % 4) as f64).collect();
    let band = band_from_alpha(&alpha, 10, DEFAULT_BAND_WIDTH);
    let (_, lattice) = bat_loss(&store, &tp, &h, &y, &band).unwrap();
    assert!(lattice.evaluated_cells <= 100, "{}", lattice.evaluated_cells);
    let (_, full) = rnnt_loss(&store, &tp, &h, &y).unwrap();
    assert_eq!(full.evaluated_cells, 220);
}

#[test]
fn band_errors() {
    assert!(matches!(build_band(&[1], 3, 1, 1), Err(Error::BandTooNarrow(1))));
    assert!(matches!(
        build_band(&[1, 1, 2, 2, 2], 2, 5, 3),
        Err(Error::BandDisconnected { r: 3, t: 2, u: 5 })
    ));
    assert!(build_band(&[1, 2], 3, 3, 3).is_err());
}

#[test]
fn uniform_weights_fire_evenly() {
    let b = fire(&[0.5; 8], 4).unwrap();
    assert_eq!(b, vec![2, 4, 6, 8]);
    assert_eq!(band_centers(&b, 8), vec![0, 1, 1, 2, 2, 3, 3, 4]);
    // Unscaled sum 2.4 is rescaled to 3 labels.
    let b = fire(&[0.3; 8], 3).unwrap();
    assert_eq!(b, vec![3, 6, 8]);
}

fn cif_fixture(seed: u64) -> (ParamStore<f64>, CifParams, Vec<(Tensor<f64>, usize)>) {
    let mut rng = run_rng(seed);
    let mut store = ParamStore::new();
    let p = CifParams::register(&mut store, 4, &mut rng);
    let batch = (0..6)
        .map(|i| {
            let t = 6 + i;
            let h = random_tensor(&mut rng, &[t, 4], 1.0);
            (h, t / 3)
        })
        .collect();
    (store, p, batch)
}

#[test]
fn cif_pretraining_reduces_quantity_loss() {
    let (mut store, p, batch) = cif_fixture(5);
    let mut adam = Adam::new(&store, AdamConfig { lr: 0.05, ..Default::default() });
    let first = cif_pretrain_step(&mut store, &p, &mut adam, &batch).unwrap();
    let mut last = first;
    for _ in 0..49 {
        last = cif_pretrain_step(&mut store, &p, &mut adam, &batch).unwrap();
    }
    assert!(last < 0.5 * first, "{first} -> {last}");
    let mean: f64 = batch
        .iter()
        .map(|(h, u)| cif_align(&store, &p, h, *u).unwrap().quantity_loss)
        .sum::<f64>()
        / batch.len() as f64;
    assert!(mean < 0.5 * first, "{first} -> {mean}");
}

#[test]
fn calibrated_head_is_a_fixed_point() {
    let mut store = ParamStore::new();
    let p = CifParams::register(&mut store, 3, &mut run_rng(1));
    store.set(p.weight_proj, Tensor::matrix(1, 3, vec![0.0; 3]).unwrap()).unwrap();
    store.set(p.bias, Tensor::vector(vec![0.0])).unwrap();
    let h = random_tensor(&mut run_rng(2), &[4, 3], 1.0);
    assert_eq!(cif_weights(&store, &p, &h), vec![0.5; 4]);
    let before = store.clone();
    let mut adam = Adam::new(&store, AdamConfig { lr: 0.1, ..Default::default() });
    let loss = cif_pretrain_step(&mut store, &p, &mut adam, &[(h, 2)]).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(store, before);
}

#[test]
fn cif_pretraining_touches_only_the_head() {
    let (store, tp) = random_transducer(3, 3, 4, 3, 3, 1.0);
    let mut store = store;
    let p = CifParams::register(&mut store, 4, &mut run_rng(3));
    let before = store.clone();
    let (_, _, batch) = cif_fixture(7);
    let mut adam = Adam::new(&store, AdamConfig::default());
    cif_pretrain_step(&mut store, &p, &mut adam, &batch).unwrap();
    for (a, b) in store.iter().zip(before.iter()) {
        if a.name.starts_with("cif.") {
            assert_ne!(a.value, b.value);
        } else {
            assert_eq!(a.value, b.value, "{}", a.name);
        }
    }
    let _ = tp;
}

#[test]
fn banded_and_quantity_gradients_match_finite_differences() {
    let (mut store, tp) = random_transducer(11, 3, 4, 3, 4, 0.8);
    let p = CifParams::register(&mut store, 4, &mut run_rng(12));
    let h = random_tensor(&mut run_rng(13), &[7, 4], 1.0);
    let y = [2, 3, 1, 1];
    let align = cif_align(&store, &p, &h, y.len()).unwrap();
    let band = build_band(&align.boundaries, 7, 4, 3).unwrap();
    assert!(band.num_cells() < 7 * 5);
    let n = store.len();
    let mut inputs: Vec<_> = store.iter().map(|q| q.value.clone()).collect();
    inputs.push(h);
    let report = check_gradients(&inputs, 1e-6, |_, _| None, |g, vars| {
        let b = Bound::from_vars(vars[..n].to_vec());
        let nll = bat_loss_graph(g, &b, &tp, vars[n], &y, &band)?.nll;
        let q = quantity_loss_graph(g, &b, &p, vars[n], y.len())?;
        g.add(nll, q)
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}
