//! Adam on class-balanced epochs, with per-epoch validation.
//!
//! Training runs on one thread and draws all randomness from two ChaCha
//! streams derived from the seed, so a seed fixes the trained weights bit for
//! bit. Scoring may be spread over threads since it is deterministic per window.

mod adam;
mod sampler;

use std::fmt::Write as _;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::Network;
use crate::engine::ops::bce_loss;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::metrics::{self, ScoredSample, DEFAULT_THRESHOLD};
use crate::pipeline::{Label, WindowSample};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use sampler::balanced_epoch;

const SAMPLER_STREAM: u64 = 0;
const DROPOUT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Decision threshold for the validation metrics.
    pub threshold: f64,
    /// Seconds of signal per interictal window, for the false prediction rate.
    pub window_s: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            epochs: 100,
            samples_per_epoch: 6400,
            batch_size: 32,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            window_s: 20.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.samples_per_epoch == 0 || self.samples_per_epoch % 2 != 0 {
            return Err(Error::Parameter(format!(
                "samples per epoch must be a positive even number, got {}",
                self.samples_per_epoch
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Parameter(format!("threshold must be in [0, 1], got {}", self.threshold)));
        }
        if !(self.window_s > 0.0) {
            return Err(Error::Parameter("window length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// Optimizer state plus the dropout stream, stepping one batch at a time.
pub struct Trainer {
    adam: AdamConfig,
    state: AdamState,
    dropout_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(net: &Network, adam: AdamConfig, seed: u64) -> Result<Self> {
        adam.validate()?;
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
        dropout_rng.set_stream(DROPOUT_STREAM);
        Ok(Trainer {
            adam,
            state: AdamState::new(net.parameters()),
            dropout_rng,
        })
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    /// Mean cross-entropy gradient over the batch, then one Adam update.
    pub fn step(&mut self, net: &mut Network, batch: &[(&Tensor, Label)]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let mut sum: Vec<Vec<f64>> = net.parameters().iter().map(|p| vec![0.0; p.value.len()]).collect();
        let mut loss = 0.0;
        for (x, label) in batch {
            let g = net.sample_gradients(x, label.class_index(), &mut self.dropout_rng)?;
            loss += g.loss;
            for (acc, gi) in sum.iter_mut().zip(&g.grads) {
                for (a, b) in acc.iter_mut().zip(gi) {
                    *a += b;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let mut sq = 0.0;
        for acc in &mut sum {
            for a in acc.iter_mut() {
                *a *= scale;
                sq += *a * *a;
            }
        }
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(Error::Data(format!("training loss became {loss}")));
        }
        adam_step(net.parameters_mut(), &sum, &mut self.state, &self.adam)?;
        Ok(StepStats {
            loss,
            grad_norm: sq.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_sensitivity: Option<f64>,
    pub val_fpr_per_h: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// Undefined metrics (e.g. no validation windows) are left empty.
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from("epoch,train_loss,val_sensitivity,val_fpr_per_h,val_auc\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                opt(r.val_sensitivity),
                opt(r.val_fpr_per_h),
                opt(r.val_auc)
            );
        }
        out
    }
}

fn check_shapes(net: &Network, samples: &[WindowSample]) -> Result<()> {
    for s in samples {
        net.check_input(s.data.shape())?;
    }
    Ok(())
}

/// Inference-mode preictal probability for every window, in input order.
pub fn score_windows(net: &Network, samples: &[WindowSample], threads: usize) -> Result<Vec<ScoredSample>> {
    let score = |chunk: &[WindowSample]| -> Result<Vec<ScoredSample>> {
        chunk
            .iter()
            .map(|s| Ok(ScoredSample::new(net.predict_preictal(&s.data)?, s.label)))
            .collect()
    };
    let threads = threads.max(1);
    if threads == 1 || samples.len() < 2 {
        return score(samples);
    }
    let chunk = samples.len().div_ceil(threads);
    thread::scope(|scope| {
        let handles: Vec<_> = samples.chunks(chunk).map(|c| scope.spawn(move || score(c))).collect();
        let mut out = Vec::with_capacity(samples.len());
        for h in handles {
            out.extend(h.join().expect("scoring thread panicked")?);
        }
        Ok(out)
    })
}

/// Mean cross-entropy over a batch with dropout disabled.
pub fn mean_loss(net: &Network, batch: &[(&Tensor, Label)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::UndefinedMetric("loss of an empty batch".into()));
    }
    let mut total = 0.0;
    for (x, label) in batch {
        total += bce_loss(net.predict(x)?.data(), label.class_index())?;
    }
    Ok(total / batch.len() as f64)
}

/// Share of windows whose arg-max class matches the label, in inference mode.
pub fn accuracy(net: &Network, samples: &[WindowSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let mut correct = 0;
    for s in samples {
        let p = net.predict_preictal(&s.data)?;
        if (p > 0.5) == s.label.is_preictal() {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn validation_record(net: &Network, val: &[WindowSample], config: &TrainConfig, epoch: usize, loss: f64) -> Result<EpochRecord> {
    let scored = score_windows(net, val, 1)?;
    let thr = config.threshold;
    Ok(EpochRecord {
        epoch,
        train_loss: loss,
        val_sensitivity: metrics::sensitivity(&scored, thr).ok(),
        val_fpr_per_h: metrics::fpr_per_hour(&scored, thr, config.window_s).ok(),
        val_auc: metrics::roc_and_auc(&scored).ok().map(|r| r.auc),
    })
}

pub fn train(net: &mut Network, train: &[WindowSample], val: &[WindowSample], config: &TrainConfig) -> Result<History> {
    train_with_observer(net, train, val, config, |_| {})
}

/// Same as [`train`], calling `observer` after every epoch.
pub fn train_with_observer<F: FnMut(&EpochRecord)>(
    net: &mut Network,
    train: &[WindowSample],
    val: &[WindowSample],
    config: &TrainConfig,
    mut observer: F,
) -> Result<History> {
    config.validate()?;
    check_shapes(net, train)?;
    check_shapes(net, val)?;
    let labels: Vec<Label> = train.iter().map(|s| s.label).collect();
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sampler_rng.set_stream(SAMPLER_STREAM);
    let mut trainer = Trainer::new(net, config.adam, config.seed)?;
    let mut history = History::default();

    for epoch in 1..=config.epochs {
        let batches = balanced_epoch(&labels, config.samples_per_epoch, config.batch_size, &mut sampler_rng)?;
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for idx in &batches {
            let batch: Vec<(&Tensor, Label)> = idx.iter().map(|&i| (&train[i].data, train[i].label)).collect();
            let stats = trainer.step(net, &batch)?;
            loss_sum += stats.loss * idx.len() as f64;
            seen += idx.len();
        }
        let record = validation_record(net, val, config, epoch, loss_sum / seen as f64)?;
        observer(&record);
        history.epochs.push(record);
    }
    Ok(history)
}
