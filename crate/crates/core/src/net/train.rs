//! Training loops: stage 2 (interpreter on synthetic 3D targets), heatmap refiner,
//! and stage 3 (fine-tuning through the projection layer with 2D targets only).

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::dense::{DenseNet, ForwardCache, Gradients};
use super::normalizer::Normalizer;
use crate::camera::{projection_with_jacobian, Keypoints2D, ParamVector};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, sub_seed, STREAM_INIT, STREAM_NOISE, STREAM_TRAIN};
use crate::skeleton::BaseShapeSet;
use crate::synth::{corrupt_in_place, HeatmapStack, SynthSample};

/// Hyperparameters shared by all three training loops.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hidden-layer widths; the output width is implied by the task.
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning rate is multiplied by this every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Trailing fraction of the data held out for validation.
    pub validation_fraction: f64,
    /// Salt-and-pepper levels drawn uniformly per sample and epoch to corrupt inputs.
    pub noise_levels: Vec<f64>,
    /// Per-output loss weights (uniform when `None`).
    pub loss_weights: Option<Vec<f64>>,
    /// Fine-tuning aborts when more than this fraction of an epoch hits a depth singularity.
    pub max_skip_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale interpreter: hidden widths 256, 128, 64.
    pub fn interpreter() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            batch_size: 32,
            learning_rate: 2e-3,
            momentum: 0.9,
            lr_decay: 0.5,
            decay_every: 20,
            epochs: 60,
            weight_decay: 1e-5,
            validation_fraction: 0.1,
            noise_levels: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            loss_weights: None,
            max_skip_fraction: 0.1,
            seed: 0,
        }
    }

    /// Interpreter with the widths 2048, 512, 128.
    pub fn interpreter_paper_scale() -> Self {
        Self {
            hidden: vec![2048, 512, 128],
            ..Self::interpreter()
        }
    }

    /// Desk-scale refiner bottleneck: 512, 128, 512.
    pub fn refiner() -> Self {
        Self {
            hidden: vec![512, 128, 512],
            batch_size: 32,
            learning_rate: 5e-3,
            momentum: 0.9,
            lr_decay: 0.5,
            decay_every: 10,
            epochs: 25,
            weight_decay: 0.0,
            validation_fraction: 0.1,
            noise_levels: vec![0.0, 0.1, 0.2, 0.3],
            loss_weights: None,
            max_skip_fraction: 0.1,
            seed: 0,
        }
    }

    /// Refiner with the widths 8192, 4096, 8192.
    pub fn refiner_paper_scale() -> Self {
        Self {
            hidden: vec![8192, 4096, 8192],
            ..Self::refiner()
        }
    }

    /// Stage-3 fine-tuning defaults: small steps, few epochs.
    pub fn finetune() -> Self {
        Self {
            hidden: Vec::new(),
            batch_size: 32,
            learning_rate: 3e-3,
            momentum: 0.9,
            lr_decay: 0.5,
            decay_every: 5,
            epochs: 10,
            weight_decay: 0.0,
            validation_fraction: 0.2,
            noise_levels: vec![0.0],
            loss_weights: None,
            max_skip_fraction: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.epochs > 0
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.lr_decay > 0.0
            && self.decay_every > 0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.validation_fraction)
            && !self.noise_levels.is_empty()
            && self.noise_levels.iter().all(|p| (0.0..=1.0).contains(p))
            && self.hidden.iter().all(|w| *w > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad training configuration {self:?}")))
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    fn split(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        let n_val = ((n as f64) * self.validation_fraction).floor() as usize;
        let n_val = n_val.min(n.saturating_sub(1));
        ((0..n - n_val).collect(), (n - n_val..n).collect())
    }
}

/// Per-epoch losses; `best_epoch` is the epoch whose weights were kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    /// Samples skipped per epoch (fine-tuning only).
    pub skipped: Vec<usize>,
}

/// Stage-2 model: a dense net regressing standardized parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpreter {
    pub net: DenseNet,
    pub normalizer: Normalizer,
    pub num_bases: usize,
}

impl Interpreter {
    pub fn predict(&self, h: &HeatmapStack) -> Result<ParamVector> {
        predict(self, h)
    }
}

/// Denormalized single forward pass; `inv_f` is clamped at 0.
pub fn predict(model: &Interpreter, h: &HeatmapStack) -> Result<ParamVector> {
    let out = model.net.forward(&flatten_heatmaps(h))?;
    let mut s = ParamVector::from_slice(&model.normalizer.denormalize(&out), model.num_bases)?;
    s.inv_f = s.inv_f.max(0.0);
    Ok(s)
}

/// Bottleneck autoencoder over the flattened heatmap stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Refiner {
    pub net: DenseNet,
}

impl Refiner {
    /// Refined stack, clamped to `[0, 1]`.
    pub fn refine(&self, h: &HeatmapStack) -> Result<HeatmapStack> {
        let out = self.net.forward(&flatten_heatmaps(h))?;
        let data = out.iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
        HeatmapStack::from_data(h.grid, h.channels, data)
    }
}

pub fn flatten_heatmaps(h: &HeatmapStack) -> Vec<f64> {
    h.data.iter().map(|v| *v as f64).collect()
}

struct Momentum {
    velocity: Gradients,
    momentum: f64,
    weight_decay: f64,
}

impl Momentum {
    fn new(net: &DenseNet, cfg: &TrainConfig) -> Self {
        Self {
            velocity: Gradients::zeros_like(net),
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        }
    }

    fn step(&mut self, net: &mut DenseNet, grads: &Gradients, lr: f64) {
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let vw = &mut self.velocity.weights[l];
            let wd = self.weight_decay;
            vw.zip_zip_apply(&grads.weights[l], &layer.weights, |v, g, w| {
                *v = self.momentum * *v - lr * (g + wd * w);
            });
            layer.weights += &*vw;
            let vb = &mut self.velocity.bias[l];
            vb.zip_apply(&grads.bias[l], |v, g| *v = self.momentum * *v - lr * g);
            layer.bias += &*vb;
        }
    }
}

fn pick_noise(levels: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    if levels.len() == 1 {
        levels[0]
    } else {
        levels[rng.random_range(0..levels.len())]
    }
}

/// Fills column `col` of `x` with sample `idx`'s heatmaps, corrupted at a noise level
/// drawn from `levels` with an rng keyed by `(seed, epoch, idx)`.
fn fill_input(
    x: &mut DMatrix<f64>,
    col: usize,
    h: &HeatmapStack,
    levels: &[f64],
    seed: u64,
    epoch: u64,
    idx: usize,
) {
    let mut rng = stream_rng(sub_seed(seed, STREAM_NOISE, epoch), STREAM_NOISE, idx as u64);
    let p = pick_noise(levels, &mut rng);
    let mut col_view = x.column_mut(col);
    if p > 0.0 {
        let mut data = h.data.clone();
        corrupt_in_place(&mut data, p, &mut rng);
        for (dst, v) in col_view.iter_mut().zip(&data) {
            *dst = *v as f64;
        }
    } else {
        for (dst, v) in col_view.iter_mut().zip(&h.data) {
            *dst = *v as f64;
        }
    }
}

const VALIDATION_EPOCH: u64 = u64::MAX;

/// Mini-batch SGD on a squared-error regression; keeps the weights with the lowest
/// validation loss (training loss when there is no validation split).
fn train_regression(
    net: &mut DenseNet,
    inputs: &[&HeatmapStack],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let (train_idx, val_idx) = cfg.split(inputs.len());
    let out_dim = net.output_dim();
    let weights = match &cfg.loss_weights {
        Some(w) if w.len() == out_dim => w.clone(),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                what: "loss weights",
                expected: out_dim,
                got: w.len(),
            })
        }
        None => vec![1.0; out_dim],
    };
    let in_dim = net.input_dim();
    let mut opt = Momentum::new(net, cfg);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, DenseNet)> = None;
    let mut order = train_idx.clone();
    let mut last_finite = f64::NAN;

    let batch_loss = |net: &DenseNet, idx: &[usize], epoch: u64, grad: bool| -> (f64, Option<Gradients>) {
        let mut x = DMatrix::zeros(in_dim, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            fill_input(&mut x, c, inputs[i], &cfg.noise_levels, cfg.seed, epoch, i);
        }
        let cache: ForwardCache = net.forward_cached(x);
        let out = cache.output();
        let mut g = DMatrix::zeros(out_dim, idx.len());
        let mut loss = 0.0;
        for (c, &i) in idx.iter().enumerate() {
            for d in 0..out_dim {
                let diff = out[(d, c)] - targets[i][d];
                loss += weights[d] * diff * diff;
                g[(d, c)] = 2.0 * weights[d] * diff / idx.len() as f64;
            }
        }
        let grads = grad.then(|| net.backward_batch(&cache, &g));
        (loss, grads)
    };

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, STREAM_TRAIN, epoch as u64);
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_loss(net, batch, epoch as u64, true);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, last_finite_loss: last_finite });
            }
            total += loss;
            opt.step(net, &grads.expect("requested"), lr);
        }
        let train_loss = total / order.len().max(1) as f64;
        last_finite = train_loss;
        report.train_loss.push(train_loss);

        let monitor = if val_idx.is_empty() {
            train_loss
        } else {
            let mut total = 0.0;
            for batch in val_idx.chunks(256) {
                total += batch_loss(net, batch, VALIDATION_EPOCH, false).0;
            }
            let v = total / val_idx.len() as f64;
            report.val_loss.push(v);
            v
        };
        if !monitor.is_finite() {
            return Err(Error::Divergence { epoch, last_finite_loss: last_finite });
        }
        log::info!("epoch {epoch}: train {train_loss:.6e} monitor {monitor:.6e}");
        if best.as_ref().is_none_or(|(b, _)| monitor < *b) {
            best = Some((monitor, net.clone()));
            report.best_epoch = epoch;
        }
    }
    if let Some((_, snapshot)) = best {
        *net = snapshot;
    }
    Ok(report)
}

fn init_net(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<DenseNet> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    DenseNet::init(&dims, &mut stream_rng(seed, STREAM_INIT, 0))
}

fn check_uniform_inputs(samples: &[SynthSample]) -> Result<usize> {
    let first = samples.first().ok_or(Error::EmptyInput("training samples"))?;
    let dim = first.heatmaps.len();
    let k = first.s_true.dim();
    for s in samples {
        if s.heatmaps.len() != dim || s.s_true.dim() != k {
            return Err(Error::DimensionMismatch {
                what: "training sample",
                expected: dim,
                got: s.heatmaps.len(),
            });
        }
    }
    Ok(dim)
}

/// Stage 2: regress standardized parameter vectors from (optionally corrupted)
/// heatmaps. When a refiner is given, inputs pass through it first.
pub fn train_interpreter(
    samples: &[SynthSample],
    cfg: &TrainConfig,
    refiner: Option<&Refiner>,
) -> Result<(Interpreter, TrainReport)> {
    cfg.validate()?;
    let in_dim = check_uniform_inputs(samples)?;
    let num_bases = samples[0].s_true.alpha_free.len() + 1;
    let raw: Vec<Vec<f64>> = samples.iter().map(|s| s.s_true.to_vec()).collect();
    let (train_idx, _) = cfg.split(samples.len());
    let normalizer = Normalizer::fit(train_idx.iter().map(|&i| raw[i].as_slice()))?;
    let targets: Vec<Vec<f64>> = raw.iter().map(|r| normalizer.normalize(r)).collect();
    let mut net = init_net(in_dim, &cfg.hidden, raw[0].len(), cfg.seed)?;

    let report = match refiner {
        None => {
            let inputs: Vec<&HeatmapStack> = samples.iter().map(|s| &s.heatmaps).collect();
            train_regression(&mut net, &inputs, &targets, cfg)?
        }
        Some(r) => {
            // corrupt once per sample (deterministically), then refine
            let refined: Vec<HeatmapStack> = samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut rng = stream_rng(cfg.seed, STREAM_NOISE, i as u64);
                    let mut h = s.heatmaps.clone();
                    corrupt_in_place(&mut h.data, pick_noise(&cfg.noise_levels, &mut rng), &mut rng);
                    r.refine(&h)
                })
                .collect::<Result<_>>()?;
            let inputs: Vec<&HeatmapStack> = refined.iter().collect();
            let clean_cfg = TrainConfig { noise_levels: vec![0.0], ..cfg.clone() };
            train_regression(&mut net, &inputs, &targets, &clean_cfg)?
        }
    };
    Ok((Interpreter { net, normalizer, num_bases }, report))
}

/// Trains the bottleneck refiner to map corrupted stacks back to the samples' own
/// heatmaps, which are taken as the clean targets.
pub fn train_refiner(samples: &[SynthSample], cfg: &TrainConfig) -> Result<(Refiner, TrainReport)> {
    cfg.validate()?;
    let dim = check_uniform_inputs(samples)?;
    let inputs: Vec<&HeatmapStack> = samples.iter().map(|s| &s.heatmaps).collect();
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| flatten_heatmaps(&s.heatmaps)).collect();
    let mut net = init_net(dim, &cfg.hidden, dim, cfg.seed)?;
    let report = train_regression(&mut net, &inputs, &targets, cfg)?;
    Ok((Refiner { net }, report))
}

/// Mean 2D reprojection loss of the interpreter over `samples` (heatmaps in, observed
/// keypoints as targets) and its gradient with respect to every network parameter,
/// chained through the projection Jacobian, the parameter decoding and the target
/// normalizer. Samples hitting a depth singularity are skipped and counted.
pub fn projection_loss_gradient(
    model: &Interpreter,
    inputs: &[&HeatmapStack],
    observed: &[&Keypoints2D],
    bases: &BaseShapeSet,
) -> Result<(f64, Gradients, usize)> {
    let in_dim = model.net.input_dim();
    let mut x = DMatrix::zeros(in_dim, inputs.len());
    for (c, h) in inputs.iter().enumerate() {
        if h.len() != in_dim {
            return Err(Error::DimensionMismatch { what: "network input", expected: in_dim, got: h.len() });
        }
        for (dst, v) in x.column_mut(c).iter_mut().zip(&h.data) {
            *dst = *v as f64;
        }
    }
    let cache = model.net.forward_cached(x);
    let out = cache.output();
    let dim = out.nrows();
    let mut g = DMatrix::zeros(dim, inputs.len());
    let mut loss = 0.0;
    let mut skipped = 0;
    let b = inputs.len() as f64;
    for (c, obs) in observed.iter().enumerate() {
        let raw = model.normalizer.denormalize(out.column(c).as_slice());
        let s = ParamVector::from_slice(&raw, model.num_bases)?;
        let Ok((x_hat, jac)) = projection_with_jacobian(&s, bases) else {
            skipped += 1;
            continue;
        };
        let n = obs.num_visible().max(1) as f64;
        let mut resid = nalgebra::DVector::zeros(jac.nrows());
        for i in 0..obs.len() {
            if obs.visible[i] {
                for a in 0..2 {
                    resid[2 * i + a] = x_hat.coords[(a, i)] - obs.coords[(a, i)];
                }
            }
        }
        loss += resid.norm_squared() / n;
        let mut ds = jac.tr_mul(&resid) * (2.0 / n);
        // the clamp at inv_f = 0 blocks the gradient below zero
        if raw[dim - 1] < 0.0 {
            ds[dim - 1] = 0.0;
        }
        for d in 0..dim {
            g[(d, c)] = ds[d] * model.normalizer.std[d] / b;
        }
    }
    let grads = model.net.backward_batch(&cache, &g);
    Ok((loss / b, grads, skipped))
}

/// Stage 3: fine-tune the interpreter so that the projection of its prediction matches
/// observed 2D keypoints. Only heatmaps and 2D keypoints of `samples` are used.
pub fn finetune_through_projection(
    model: &Interpreter,
    samples: &[SynthSample],
    bases: &BaseShapeSet,
    cfg: &TrainConfig,
) -> Result<(Interpreter, TrainReport)> {
    cfg.validate()?;
    check_uniform_inputs(samples)?;
    let mut tuned = model.clone();
    let (train_idx, val_idx) = cfg.split(samples.len());
    let mut opt = Momentum::new(&tuned.net, cfg);
    let mut report = TrainReport::default();
    let mut order = train_idx.clone();
    let mut last_finite = f64::NAN;
    let mut best: Option<(f64, Interpreter)> = None;

    let eval_loss = |m: &Interpreter, idx: &[usize]| -> Result<f64> {
        let mut total = 0.0;
        for batch in idx.chunks(256) {
            let h: Vec<&HeatmapStack> = batch.iter().map(|&i| &samples[i].heatmaps).collect();
            let o: Vec<&Keypoints2D> = batch.iter().map(|&i| &samples[i].x_true).collect();
            total += projection_loss_gradient(m, &h, &o, bases)?.0 * batch.len() as f64;
        }
        Ok(total / idx.len().max(1) as f64)
    };

    let initial = if val_idx.is_empty() { eval_loss(&tuned, &train_idx)? } else { eval_loss(&tuned, &val_idx)? };
    best = best.or(Some((initial, tuned.clone())));

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, STREAM_TRAIN, epoch as u64);
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut total = 0.0;
        let mut skipped = 0;
        for batch in order.chunks(cfg.batch_size) {
            let h: Vec<&HeatmapStack> = batch.iter().map(|&i| &samples[i].heatmaps).collect();
            let o: Vec<&Keypoints2D> = batch.iter().map(|&i| &samples[i].x_true).collect();
            let (loss, grads, skip) = projection_loss_gradient(&tuned, &h, &o, bases)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, last_finite_loss: last_finite });
            }
            total += loss * batch.len() as f64;
            skipped += skip;
            opt.step(&mut tuned.net, &grads, lr);
        }
        if skipped as f64 > cfg.max_skip_fraction * order.len() as f64 {
            return Err(Error::TooManySkipped { skipped, total: order.len() });
        }
        let train_loss = total / order.len().max(1) as f64;
        last_finite = train_loss;
        report.train_loss.push(train_loss);
        report.skipped.push(skipped);
        let monitor = if val_idx.is_empty() {
            eval_loss(&tuned, &train_idx)?
        } else {
            let v = eval_loss(&tuned, &val_idx)?;
            report.val_loss.push(v);
            v
        };
        log::info!("finetune epoch {epoch}: train {train_loss:.6e} monitor {monitor:.6e}");
        if best.as_ref().is_none_or(|(b, _)| monitor < *b) {
            best = Some((monitor, tuned.clone()));
            report.best_epoch = epoch + 1;
        }
    }
    Ok((best.expect("initial model recorded").1, report))
}
