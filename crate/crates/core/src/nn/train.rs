use core::fmt;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, argmax, AdamConfig, AdamState, Mode, Network};
use crate::conv::FeatureMap;
use crate::error::{Error, Result};

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub input: FeatureMap,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub init_std: f64,
    pub iters: usize,
    pub seed: u64,
    /// Iterations between log entries; 0 logs only the final iteration.
    pub log_every: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 64,
            init_std: 0.01,
            iters: 1000,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Hyper("learning rate must be finite and non-negative"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Hyper("beta1 and beta2 must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Hyper("epsilon must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::Hyper("batch size must be at least 1"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Hyper("init std must be finite and non-negative"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Mean training loss over the logging window and the accuracy at that point
/// (held-out when an eval set is given, training-batch otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iter: usize,
    pub loss: f64,
    pub acc: f64,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iter={} loss={:.6} acc={:.4}", self.iter, self.loss, self.acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    /// Loss of the first mini-batch, before any update.
    pub initial_loss: f64,
    /// Mean loss over the last logging window.
    pub final_loss: f64,
}

/// Fraction of clips whose eval-mode argmax equals the label.
pub fn accuracy(net: &Network, clips: &[Clip]) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut correct = 0usize;
    for chunk in clips.chunks(64) {
        let inputs: Vec<FeatureMap> = chunk.iter().map(|c| c.input.clone()).collect();
        let logits = net.predict(&inputs)?;
        correct += logits.iter().zip(chunk).filter(|(z, c)| argmax(z) == c.label).count();
    }
    Ok(correct as f64 / clips.len() as f64)
}

pub fn train(net: &mut Network, data: &[Clip], eval: Option<&[Clip]>, hyper: &TrainHyper) -> Result<TrainLog> {
    train_with(net, data, eval, hyper, |_| {})
}

/// Mini-batch Adam training; `on_log` sees each log entry as it is produced.
pub fn train_with(
    net: &mut Network,
    data: &[Clip],
    eval: Option<&[Clip]>,
    hyper: &TrainHyper,
    mut on_log: impl FnMut(&LogEntry),
) -> Result<TrainLog> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cfg = hyper.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut state = AdamState::new(net.params().iter().map(|p| p.values.len()));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let batch = hyper.batch.min(data.len());

    let mut entries = Vec::new();
    let mut initial_loss = f64::NAN;
    let (mut window_loss, mut window_steps) = (0.0, 0usize);
    let (mut window_hits, mut window_seen) = (0usize, 0usize);
    let mut final_loss = f64::NAN;
    for iter in 1..=hyper.iters {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let inputs: Vec<FeatureMap> = idx.iter().map(|&i| data[i].input.clone()).collect();
        let labels: Vec<usize> = idx.iter().map(|&i| data[i].label).collect();
        let fwd = net.forward(&inputs, Mode::Train)?;
        let grads = net.backward(&fwd, &labels)?;
        if !grads.loss.is_finite() {
            return Err(Error::Diverged { iter });
        }
        if iter == 1 {
            initial_loss = grads.loss;
        }
        window_loss += grads.loss;
        window_steps += 1;
        window_hits += fwd.logits.iter().zip(&labels).filter(|(z, &y)| argmax(z) == y).count();
        window_seen += labels.len();

        let gs: Vec<&[f64]> = grads.blocks.iter().map(|b| &b.values[..]).collect();
        let mut params = net.params_mut();
        let mut ps: Vec<&mut [f64]> = params.iter_mut().map(|(_, p)| &mut **p).collect();
        adam_step(&mut ps, &gs, &mut state, &cfg).map_err(|e| match e {
            Error::NonFiniteGradient { block } => {
                let name = block
                    .strip_prefix('#')
                    .and_then(|i| i.parse::<usize>().ok())
                    .and_then(|i| grads.blocks.get(i))
                    .map_or(block.clone(), |b| b.name.clone());
                Error::NonFiniteGradient { block: name }
            }
            other => other,
        })?;

        let at_log = (hyper.log_every > 0 && iter % hyper.log_every == 0) || iter == hyper.iters;
        if at_log {
            let loss = window_loss / window_steps as f64;
            let acc = match eval {
                Some(e) => accuracy(net, e)?,
                None => window_hits as f64 / window_seen as f64,
            };
            let entry = LogEntry { iter, loss, acc };
            on_log(&entry);
            entries.push(entry);
            final_loss = loss;
            (window_loss, window_steps, window_hits, window_seen) = (0.0, 0, 0, 0);
        }
    }
    Ok(TrainLog {
        entries,
        initial_loss,
        final_loss,
    })
}
