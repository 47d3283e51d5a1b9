//! Minibatch training with Adam over the full or banded transducer loss.
//!
//! Randomness order for a run seeded with `s`: parameter initialization, then
//! per epoch one shuffle of the training order followed by the dropout masks of
//! each step, all from `run_rng(s)`. Synthetic data uses its own stream.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::bat::{bat_loss_graph, build_band, cif_align, cif_pretrain_step, quantity_loss_graph};
use crate::encoder::{Dropout, Mode};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Scalar, Tensor};
use crate::optim::Adam;
use crate::rng::{run_rng, RunRng};
use crate::runtime::config::{LossKind, RunConfig, TrainConfig};
use crate::runtime::decode::greedy_decode_offline;
use crate::runtime::metrics::token_accuracy;
use crate::runtime::model::Model;
use crate::runtime::synth::{synth_with, Dataset, SynthConfig, Utterance};
use crate::transducer::{rnnt_loss, rnnt_loss_graph};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-utterance transducer nll over the epoch's training steps.
    pub train_nll: f64,
    /// Mean full-lattice nll on the held-out split, dropout off.
    pub held_out_nll: f64,
    pub held_out_accuracy: f64,
    pub steps: usize,
    /// Joint evaluations performed by the training loss.
    pub joint_evals: usize,
    /// Joint evaluations the full loss would need for the same steps.
    pub full_joint_evals: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_held_out_nll: f64,
    pub cif_pretrain_losses: Vec<f64>,
    pub epochs: Vec<EpochMetrics>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.held_out_accuracy)
    }
}

fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("float")
}

fn features<T: Scalar>(u: &Utterance) -> Tensor<T> {
    u.features.frames.cast()
}

/// Greedy token accuracy with the parallel encoder.
pub fn evaluate_accuracy<T: Scalar>(model: &Model<T>, utts: &[Utterance]) -> Result<f64> {
    let hyps = utts
        .iter()
        .map(|u| greedy_decode_offline(model, &model.encode(&features(u), Mode::Parallel)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(token_accuracy(hyps.iter().zip(utts).map(|(h, u)| (h.as_slice(), u.labels.as_slice()))))
}

/// Mean full-lattice nll, dropout off.
pub fn evaluate_nll<T: Scalar>(model: &Model<T>, utts: &[Utterance]) -> Result<f64> {
    if utts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for u in utts {
        let h = model.encode(&features(u), Mode::Parallel)?;
        total += to_f64(rnnt_loss(&model.store, &model.transducer, &h, &u.labels)?.0);
    }
    Ok(total / utts.len() as f64)
}

#[derive(Debug, Default)]
struct StepStats {
    nll_sum: f64,
    cells: usize,
    full_cells: usize,
}

fn train_step<T: Scalar>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    batch: &[&Utterance],
    cfg: &TrainConfig,
    rng: &mut RunRng,
) -> Result<StepStats> {
    let g = Graph::new();
    let b = model.store.bind(&g)?;
    let mut terms = Vec::with_capacity(2 * batch.len());
    let mut stats = StepStats::default();
    let rate = model.config.encoder.dropout_rate;
    for u in batch {
        let x = g.constant(features::<T>(u))?;
        let mut dropout = Dropout { rate, rng: &mut *rng };
        let h = model.encode_graph(&g, &b, x, Some(&mut dropout))?;
        let (t_len, u_len) = (g.shape(h)[0], u.labels.len());
        stats.full_cells += t_len * (u_len + 1);
        let out = match cfg.loss {
            LossKind::Full => rnnt_loss_graph(&g, &b, &model.transducer, h, &u.labels)?,
            LossKind::Bat => {
                let detached = g.value(h).clone();
                let align = cif_align(&model.store, &model.cif, &detached, u_len)?;
                let band = build_band(&align.boundaries, t_len, u_len, cfg.band_width)?;
                let hc = g.constant(detached)?;
                terms.push(quantity_loss_graph(&g, &b, &model.cif, hc, u_len)?);
                bat_loss_graph(&g, &b, &model.transducer, h, &u.labels, &band)?
            }
        };
        stats.nll_sum += to_f64(g.scalar_value(out.nll));
        stats.cells += out.lattice.evaluated_cells;
        terms.push(out.nll);
    }
    let stacked = g.concat_rows(&terms)?;
    let loss = g.scale(g.sum(stacked)?, T::one() / T::from_usize(batch.len()).expect("count"))?;
    let grads = g.backward(loss)?;
    let update: Vec<Option<Tensor<T>>> = b.vars().iter().map(|&v| grads.get(v).cloned()).collect();
    adam.step(&mut model.store, &update)?;
    Ok(stats)
}

fn diverged(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } => Error::Diverged { step },
        e => e,
    }
}

/// Trains `model` in place. `on_epoch` sees each epoch's metrics as they finish.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    cfg: &TrainConfig,
    train_set: &[Utterance],
    held_out: &[Utterance],
    rng: &mut RunRng,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let start = Instant::now();
    let out_of_time = |start: &Instant| cfg.time_limit_secs.is_some_and(|s| start.elapsed().as_secs_f64() > s);
    let initial_held_out_nll = evaluate_nll(model, held_out)?;

    let mut cif_pretrain_losses = Vec::new();
    if cfg.loss == LossKind::Bat {
        let mut cif_adam = Adam::new(&model.store, cfg.adam);
        for _ in 0..cfg.cif_pretrain_epochs {
            let mut sum = 0.0;
            let mut n = 0;
            for chunk in train_set.chunks(cfg.batch_size) {
                let batch = chunk
                    .iter()
                    .map(|u| Ok((model.encode(&features(u), Mode::Parallel)?, u.labels.len())))
                    .collect::<Result<Vec<_>>>()?;
                sum += to_f64(cif_pretrain_step(&mut model.store, &model.cif, &mut cif_adam, &batch)?);
                n += 1;
            }
            cif_pretrain_losses.push(sum / n as f64);
        }
    }

    let mut adam = Adam::new(&model.store, cfg.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::new();
    let mut step = 0;
    let mut stopped_early = false;
    'epochs: for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        order.shuffle(rng);
        let mut stats = StepStats::default();
        let mut seen = 0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if out_of_time(&start) {
                stopped_early = true;
                break;
            }
            step += 1;
            let batch: Vec<&Utterance> = chunk.iter().map(|&i| &train_set[i]).collect();
            let s = train_step(model, &mut adam, &batch, cfg, rng).map_err(diverged(step))?;
            if !s.nll_sum.is_finite() {
                return Err(Error::Diverged { step });
            }
            stats.nll_sum += s.nll_sum;
            stats.cells += s.cells;
            stats.full_cells += s.full_cells;
            seen += batch.len();
            steps += 1;
        }
        let metrics = EpochMetrics {
            epoch,
            train_nll: stats.nll_sum / seen.max(1) as f64,
            held_out_nll: evaluate_nll(model, held_out)?,
            held_out_accuracy: evaluate_accuracy(model, held_out)?,
            steps,
            joint_evals: stats.cells,
            full_joint_evals: stats.full_cells,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        let done = cfg.stop_at_accuracy.is_some_and(|a| metrics.held_out_accuracy >= a);
        epochs.push(metrics);
        if done || stopped_early {
            stopped_early = true;
            break 'epochs;
        }
    }
    Ok(TrainReport {
        initial_held_out_nll,
        cif_pretrain_losses,
        epochs,
        stopped_early,
    })
}

/// Synthesizes the toy task for `run`, initializes a model and trains it.
pub fn train_synthetic<T: Scalar>(
    run: &RunConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(Model<T>, TrainReport)> {
    let t = &run.train;
    let mut synth = SynthConfig::new(run.model.vocab, t.min_len..=t.max_len);
    synth.feat_dim = run.model.feat_dim;
    let data: Dataset = synth_with(seed, t.num_utts, &synth)?;
    let (train_set, held_out) = data.split(t.held_out);
    let mut rng = run_rng(seed);
    let mut model = Model::new(run.model, &mut rng)?;
    let report = train(&mut model, t, train_set, held_out, &mut rng, on_epoch)?;
    Ok((model, report))
}
