mod common;

use common::{binomial, random_labels, random_tensor, random_transducer, Reference};
use rwkv_asr::numerics::gradcheck::check_gradients;
use rwkv_asr::params::Bound;
use rwkv_asr::rng::run_rng;
use rwkv_asr::transducer::{joint_log_probs, predict_states, rnnt_loss, rnnt_loss_bruteforce, rnnt_loss_graph};
use rwkv_asr::Error;

#[test]
fn forward_recursion_matches_reference_enumeration() {
    let mut rng = run_rng(100);
    for seed in 0..8 {
        let (store, tp) = random_transducer(seed, 3, 4, 5, 6, 1.0);
        let reference = Reference::from_store(&store);
        for t_len in 1..=5 {
            for u_len in 0..=3 {
                let h = random_tensor(&mut rng, &[t_len, 4], 1.5);
                let y = random_labels(&mut rng, 3, u_len);
                let (nll, lattice) = rnnt_loss(&store, &tp, &h, &y).unwrap();
                let (p, paths) = reference.likelihood(&h, &y, |_, _| true);
                assert!((nll + p.ln()).abs() < 1e-10, "T={t_len} U={u_len}: {nll} vs {}", -p.ln());
                assert_eq!(paths, binomial(t_len + u_len - 1, u_len));
                assert_eq!(lattice.evaluated_cells, t_len * (u_len + 1));
                let brute = rnnt_loss_bruteforce(&store, &tp, &h, &y).unwrap();
                assert_eq!(brute.paths, paths);
                assert!((brute.nll - nll).abs() < 1e-10);
                assert!(nll > 0.0);
            }
        }
    }
}

#[test]
fn joint_and_predictor_match_plain_formulas() {
    let (store, tp) = random_transducer(9, 2, 3, 4, 5, 1.2);
    let reference = Reference::from_store(&store);
    let y = [2, 1, 1, 2];
    let preds = predict_states(&store, &tp.predictor, &y).unwrap();
    let want = reference.predictions(&y);
    for (u, row) in want.iter().enumerate() {
        for (a, b) in preds.row(u).iter().zip(row) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    let h_t = [0.3, -1.1, 0.8];
    let lp = joint_log_probs(&store, &tp.joint, &h_t, preds.row(2)).unwrap();
    let p = reference.probs(&h_t, &want[2]);
    assert_eq!(lp.len(), 3);
    for (a, b) in lp.iter().zip(&p) {
        assert!((a - b.ln()).abs() < 1e-13);
    }
}

#[test]
fn lattice_terminal_cell_gives_the_loss() {
    let (store, tp) = random_transducer(3, 4, 3, 3, 4, 1.0);
    let h = random_tensor(&mut run_rng(4), &[5, 3], 1.0);
    let y = [4, 1, 3];
    let (nll, lattice) = rnnt_loss(&store, &tp, &h, &y).unwrap();
    assert_eq!(lattice.log_alpha.shape(), &[6, 4]);
    assert_eq!(lattice.log_alpha.at(1, 0), 0.0);
    let preds = predict_states(&store, &tp.predictor, &y).unwrap();
    let last = joint_log_probs(&store, &tp.joint, h.row(4), preds.row(3)).unwrap();
    assert!((nll + lattice.log_alpha.at(5, 3) + last[0]).abs() < 1e-12);
}

#[test]
fn gradients_match_finite_differences() {
    let (store, tp) = random_transducer(5, 3, 4, 3, 5, 0.8);
    let h = random_tensor(&mut run_rng(6), &[4, 4], 1.0);
    let y = [1, 3];
    let n = store.len();
    let mut inputs: Vec<_> = store.iter().map(|p| p.value.clone()).collect();
    inputs.push(h);
    let report = check_gradients(&inputs, 1e-6, |_, _| None, |g, vars| {
        let b = Bound::from_vars(vars[..n].to_vec());
        Ok(rnnt_loss_graph(g, &b, &tp, vars[n], &y)?.nll)
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
    assert_eq!(report.checked, store.num_scalars() + 16);
}

#[test]
fn rejects_bad_labels_and_empty_input() {
    let (store, tp) = random_transducer(1, 3, 2, 2, 2, 1.0);
    let h = random_tensor(&mut run_rng(2), &[3, 2], 1.0);
    assert!(matches!(rnnt_loss(&store, &tp, &h, &[4]), Err(Error::LabelOutOfRange { label: 4, vocab: 3 })));
    assert!(matches!(rnnt_loss(&store, &tp, &h, &[0]), Err(Error::LabelOutOfRange { .. })));
    let empty = rwkv_asr::Tensor::<f64>::zeros(&[0, 2]);
    assert!(rnnt_loss(&store, &tp, &empty, &[1]).is_err());
    let long = random_tensor(&mut run_rng(2), &[12, 2], 1.0);
    assert!(matches!(
        rnnt_loss_bruteforce(&store, &tp, &long, &[1, 2, 3]),
        Err(Error::BudgetExceeded(15))
    ));
}

#[test]
fn f32_loss_tracks_f64() {
    let (store, tp) = random_transducer(8, 5, 4, 4, 4, 1.0);
    let h = random_tensor(&mut run_rng(9), &[7, 4], 1.0);
    let y = [5, 2, 2, 1];
    let (a, _) = rnnt_loss(&store, &tp, &h, &y).unwrap();
    let store32 = store.cast::<f32>();
    let (b, _) = rnnt_loss(&store32, &tp, &h.cast::<f32>(), &y).unwrap();
    assert!((a - b as f64).abs() < 1e-4 * a.abs().max(1.0));
}
