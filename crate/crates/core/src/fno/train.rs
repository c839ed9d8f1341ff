//! Adam training loop over encoded samples, deterministic per seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encode::Target;
use crate::error::{Error, Result};
use crate::fno::head::CellContext;
use crate::fno::loss::{loss_and_grad, relative_l2};
use crate::fno::model::{FnoModel, HeadKind};
use crate::grid::ChannelTensor;

/// Arithmetic is always performed in f64; `F32` additionally rounds the
/// parameters and optimizer state through single precision after every
/// update, which is what a single-precision deployment would hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 5,
            epochs: 2000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // A zero rate is the documented no-op configuration.
        if !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("moment decay rates must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

/// One training pair. `ctx` is required by coefficient-head models and
/// ignored by field-head models; the target then lives on the
/// reconstruction grid.
#[derive(Clone, Copy)]
pub struct TrainSample<'a> {
    pub input: &'a ChannelTensor,
    pub target: &'a ChannelTensor,
    pub ctx: Option<&'a CellContext>,
}

/// Loss targets and cell contexts staged from a dataset for one head,
/// owned so `TrainSample` views can borrow them.
///
/// The field head trains against field targets as stored; a coefficient
/// target is evaluated on the input grid first. The coefficient head
/// needs coefficient targets: the loss compares the reconstruction
/// against the target field on its native grid, with the cell context
/// restricted onto the input grid.
pub struct Staged {
    targets: Vec<ChannelTensor>,
    ctxs: Vec<Option<CellContext>>,
}

impl Staged {
    pub fn prepare(ds: &Dataset, head: HeadKind) -> Result<Staged> {
        let mut targets = Vec::with_capacity(ds.samples.len());
        let mut ctxs = Vec::with_capacity(ds.samples.len());
        for s in &ds.samples {
            match (head, &s.target) {
                (HeadKind::Field, Target::Field(u)) => {
                    targets.push(u.clone());
                    ctxs.push(None);
                }
                (HeadKind::Field, Target::Tfpm(tf)) => {
                    let grid = s.input.tensor.grid;
                    targets.push(ChannelTensor::single(grid, tf.sample_on(&grid)?)?);
                    ctxs.push(None);
                }
                (HeadKind::TfpmCoeffs, Target::Tfpm(tf)) => {
                    targets.push(ChannelTensor::single(tf.grid, tf.sample_on(&tf.grid)?)?);
                    ctxs.push(Some(CellContext::from_field_on(tf, &s.input.tensor.grid)?));
                }
                (HeadKind::TfpmCoeffs, Target::Field(_)) => {
                    return Err(Error::unsupported(
                        "coefficient-head training needs coefficient targets",
                    ))
                }
            }
        }
        Ok(Staged { targets, ctxs })
    }

    /// Views over the staged samples at `indices`, typically one half of
    /// the dataset split. Indices must be in range.
    pub fn samples<'a>(&'a self, ds: &'a Dataset, indices: &[usize]) -> Vec<TrainSample<'a>> {
        indices
            .iter()
            .map(|&i| TrainSample {
                input: &ds.samples[i].input.tensor,
                target: &self.targets[i],
                ctx: self.ctxs[i].as_ref(),
            })
            .collect()
    }
}

/// Bias-corrected Adam over the flat parameter vector.
pub struct Adam {
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam { t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let b1 = cfg.beta1;
        let b2 = cfg.beta2;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }

    fn round_to_f32(&mut self) {
        for v in self.m.iter_mut().chain(self.v.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

fn round_params_to_f32(params: &mut [f64]) {
    for v in params.iter_mut() {
        *v = *v as f32 as f64;
    }
}

/// Mean loss over `batch` and the summed parameter gradient of that
/// mean. Samples are reduced in slice order, so the result does not
/// depend on scheduling.
pub fn compute_gradients(model: &FnoModel, batch: &[TrainSample]) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let mut grads = model.zero_gradients();
    let scale = 1.0 / batch.len() as f64;
    let mut loss_acc = 0.0;
    for sample in batch {
        let ctx = match model.arch.head {
            HeadKind::Field => None,
            HeadKind::TfpmCoeffs => {
                let ctx = sample.ctx.ok_or_else(|| {
                    Error::invalid("coefficient-head training sample is missing cell context")
                })?;
                Some((ctx, sample.target.grid))
            }
        };
        let trace = model.forward_traced(sample.input, ctx)?;
        let (loss, g_out) = loss_and_grad(&trace.output, sample.target, scale)?;
        loss_acc += loss * scale;
        model.backward(&trace, &g_out, &mut grads)?;
    }
    for b in &model.blocks {
        if grads[b.offset..b.offset + b.len()].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter block {}", b.name)));
        }
    }
    Ok((grads, loss_acc))
}

/// Per-epoch mean training loss and the final test error.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    /// Mean per-sample relative L2 over the test set, when one was
    /// given and at least one sample had a nonzero target.
    pub test_rel_l2: Option<f64>,
    /// Test samples skipped because their target norm vanishes.
    pub test_degenerate: usize,
}

/// Mean per-sample relative L2 error of the model over `set`, plus the
/// count of degenerate (zero-target) samples excluded from the mean.
pub fn evaluate(model: &FnoModel, set: &[TrainSample]) -> Result<(Option<f64>, usize)> {
    let mut acc = 0.0;
    let mut kept = 0usize;
    let mut degenerate = 0usize;
    for sample in set {
        let pred = match model.arch.head {
            HeadKind::Field => model.forward(sample.input)?,
            HeadKind::TfpmCoeffs => {
                let ctx = sample.ctx.ok_or_else(|| {
                    Error::invalid("coefficient-head evaluation sample is missing cell context")
                })?;
                model.forward_tfpm(sample.input, ctx, &sample.target.grid)?
            }
        };
        let rel = relative_l2(&pred, sample.target)?;
        if rel.degenerate {
            degenerate += 1;
        } else {
            acc += rel.value;
            kept += 1;
        }
    }
    Ok((if kept > 0 { Some(acc / kept as f64) } else { None }, degenerate))
}

/// Seeded shuffled mini-batch Adam. Shuffling, batching, and the
/// gradient reduction order are all deterministic functions of the
/// seed, so a rerun reproduces the loss history exactly in f64.
pub fn train(
    model: &mut FnoModel,
    train_set: &[TrainSample],
    test_set: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut adam = Adam::new(model.num_params());
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| train_set[i]).collect();
            // A forward or gradient overflow mid-training is the same
            // event as a non-finite loss: report where it happened.
            let (grads, loss) = match compute_gradients(model, &batch) {
                Ok(pair) => pair,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, batch: bi }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            adam.step(&mut model.params, &grads, cfg);
            if cfg.precision == Precision::F32 {
                round_params_to_f32(&mut model.params);
                adam.round_to_f32();
            }
            acc += loss * chunk.len() as f64;
        }
        epoch_loss.push(acc / n as f64);
    }

    let (test_rel_l2, test_degenerate) = if test_set.is_empty() {
        (None, 0)
    } else {
        evaluate(model, test_set)?
    };
    Ok(TrainReport { epoch_loss, test_rel_l2, test_degenerate })
}
