//! Networks of weight-sampled layers: forward, backward and training.

mod adam;
mod check;
mod layers;
mod loss;
mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use check::{gradient_check, rel_err, GradCheck};
pub use layers::{grad_condensed, max_pool_forward, BatchNorm, ConvPath, Layer, Mode, SampledConv, BN_EPS, BN_MOMENTUM};
pub use loss::{argmax, cross_entropy, softmax};
pub use train::{accuracy, train, train_with, Clip, LogEntry, TrainHyper, TrainLog};

use crate::arch::NetworkSpec;
use crate::conv::{FeatureMap, PointwiseWeights};
use crate::error::{Error, Result};
use crate::sampling::CondensedFilter;
use layers::LayerCache;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedLayer {
    pub name: String,
    pub layer: Layer,
}

/// A feed-forward stack of layers ending in class logits.
#[derive(Debug, Clone)]
pub struct Network {
    input_len: usize,
    input_channels: usize,
    classes: usize,
    layers: Vec<NamedLayer>,
    path: ConvPath,
    version: u64,
    rng: ChaCha8Rng,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    mode: Mode,
    version: u64,
    layers: Vec<LayerCache>,
}

impl Cache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<Vec<f64>>,
    pub cache: Cache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradBlock {
    pub name: String,
    pub values: Vec<f64>,
}

/// Loss and gradients for every learnable block, in [`Network::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub blocks: Vec<GradBlock>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.blocks.iter().find(|b| b.name == name).map(|b| &b.values[..])
    }
}

/// Learnable block or running statistic, by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRef<'a> {
    pub name: &'a str,
    pub suffix: &'static str,
    pub values: &'a [f64],
}

impl ParamRef<'_> {
    pub fn full_name(&self) -> String {
        format!("{}.{}", self.name, self.suffix)
    }
}

impl Network {
    /// Builds the network described by `spec`, drawing every sampled weight
    /// from `Normal(0, init_std)`.
    pub fn from_spec(spec: &NetworkSpec, init_std: f64, seed: u64) -> Result<Self> {
        if !(init_std >= 0.0 && init_std.is_finite()) {
            return Err(Error::Hyper("init std must be finite and non-negative"));
        }
        let resolved = spec.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, init_std).map_err(|_| Error::Hyper("init std"))?;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let mut layers = Vec::new();
        for r in &resolved {
            let s = &r.sampling;
            let phi = CondensedFilter::new(*s, draw(s.condensed_params()))?;
            let reduce = s.reduction_shape().map(|(_, a, b)| PointwiseWeights {
                in_channels: a,
                out_channels: b,
                values: draw(a * b),
            });
            let conv = SampledConv { phi, reduce };
            let layer = match r.kind {
                crate::arch::LayerKind::Conv => Layer::Conv(conv),
                crate::arch::LayerKind::Fc => Layer::Fc(conv),
            };
            layers.push(NamedLayer {
                name: r.name.clone(),
                layer,
            });
            let aux = [
                (r.relu, "relu", Layer::Relu),
                (r.batch_norm, "bn", Layer::BatchNorm(BatchNorm::new(r.channels_out))),
                (r.pool_kernel.is_some(), "pool", Layer::MaxPool(r.pool_kernel.unwrap_or(1))),
                (r.dropout_keep < 1.0, "dropout", Layer::Dropout(r.dropout_keep)),
            ];
            for (on, suffix, layer) in aux {
                if on {
                    layers.push(NamedLayer {
                        name: format!("{}.{}", r.name, suffix),
                        layer,
                    });
                }
            }
        }
        Network::new(spec.input_len, spec.input_channels, spec.classes, layers, seed)
    }

    /// Assembles a network from explicit layers, checking every shape.
    pub fn new(input_len: usize, input_channels: usize, classes: usize, layers: Vec<NamedLayer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ZeroDimension { what: "layer count" });
        }
        let (mut len, mut ch) = (input_len, input_channels);
        for l in &layers {
            (len, ch) = l.layer.output_shape(len, ch).map_err(|e| e.in_layer(&l.name))?;
        }
        if len * ch != classes {
            return Err(Error::ShapeMismatch {
                what: "network output size",
                expected: classes,
                found: len * ch,
            });
        }
        Ok(Network {
            input_len,
            input_channels,
            classes,
            layers,
            path: ConvPath::default(),
            version: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d50f),
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[NamedLayer] {
        &self.layers
    }

    pub fn path(&self) -> ConvPath {
        self.path
    }

    pub fn set_path(&mut self, path: ConvPath) {
        self.path = path;
    }

    fn run(&mut self, batch: &[FeatureMap], mode: Mode, keep: bool) -> Result<(Vec<Vec<f64>>, Vec<LayerCache>)> {
        check_batch(self, batch)?;
        let mut acts = batch.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &mut self.layers {
            let out = l
                .layer
                .forward(acts, mode, self.path, &mut self.rng, keep)
                .map_err(|e| e.in_layer(&l.name))?;
            if let (Some(stats), Layer::BatchNorm(bn)) = (out.stats, &mut l.layer) {
                for c in 0..bn.gamma.len() {
                    bn.running_mean[c] = BN_MOMENTUM * bn.running_mean[c] + (1.0 - BN_MOMENTUM) * stats.mean[c];
                    bn.running_var[c] = BN_MOMENTUM * bn.running_var[c] + (1.0 - BN_MOMENTUM) * stats.var[c];
                }
            }
            acts = out.outputs;
            caches.push(out.cache);
        }
        Ok((acts.into_iter().map(FeatureMap::into_values).collect(), caches))
    }

    /// Forward pass over a batch. Train mode updates batch-norm running
    /// statistics and draws dropout masks.
    pub fn forward(&mut self, batch: &[FeatureMap], mode: Mode) -> Result<Forward> {
        let (logits, layers) = self.run(batch, mode, true)?;
        Ok(Forward {
            logits,
            cache: Cache {
                mode,
                version: self.version,
                layers,
            },
        })
    }

    /// Eval-mode logits; leaves the network untouched.
    pub fn predict(&self, batch: &[FeatureMap]) -> Result<Vec<Vec<f64>>> {
        check_batch(self, batch)?;
        let mut rng = self.rng.clone();
        let mut acts = batch.to_vec();
        for l in &self.layers {
            acts = l
                .layer
                .forward(acts, Mode::Eval, self.path, &mut rng, false)
                .map_err(|e| e.in_layer(&l.name))?
                .outputs;
        }
        Ok(acts.into_iter().map(FeatureMap::into_values).collect())
    }

    pub fn backward(&self, fwd: &Forward, labels: &[usize]) -> Result<Gradients> {
        self.backward_scaled(fwd, labels, 1.0)
    }

    /// Gradients of `scale * loss`.
    pub fn backward_scaled(&self, fwd: &Forward, labels: &[usize], scale: f64) -> Result<Gradients> {
        let cache = &fwd.cache;
        if cache.mode != Mode::Train {
            return Err(Error::EvalModeCache);
        }
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let (loss, d_logits) = cross_entropy(&fwd.logits, labels)?;
        let mut d: Vec<FeatureMap> = d_logits
            .into_iter()
            .map(|g| FeatureMap::new(1, g.len(), g.into_iter().map(|v| v * scale).collect()))
            .collect::<Result<_>>()?;
        let mut per_layer: Vec<Vec<Vec<f64>>> = self
            .layers
            .iter()
            .map(|l| l.layer.param_sizes().into_iter().map(|n| vec![0.0; n]).collect())
            .collect();
        for (i, l) in self.layers.iter().enumerate().rev() {
            d = l
                .layer
                .backward(&cache.layers[i], d, self.path, &mut per_layer[i])
                .map_err(|e| e.in_layer(&l.name))?;
        }
        let mut blocks = Vec::new();
        for (l, grads) in self.layers.iter().zip(per_layer) {
            for (suffix, values) in l.layer.param_suffixes().iter().zip(grads) {
                blocks.push(GradBlock {
                    name: format!("{}.{}", l.name, suffix),
                    values,
                });
            }
        }
        Ok(Gradients { loss: loss * scale, blocks })
    }

    /// Learnable blocks in a fixed order.
    pub fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (suffix, values) in l.layer.param_suffixes().iter().zip(l.layer.params()) {
                out.push(ParamRef {
                    name: &l.name,
                    suffix,
                    values,
                });
            }
        }
        out
    }

    /// Mutable learnable blocks; any outstanding cache becomes stale.
    pub fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.version += 1;
        let mut out = Vec::new();
        for l in &mut self.layers {
            let suffixes = l.layer.param_suffixes();
            for (suffix, values) in suffixes.iter().zip(l.layer.params_mut()) {
                out.push((format!("{}.{}", l.name, suffix), values));
            }
        }
        out
    }

    /// Batch-norm running statistics.
    pub fn buffers(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Layer::BatchNorm(bn) = &l.layer {
                out.push(ParamRef {
                    name: &l.name,
                    suffix: "running_mean",
                    values: &bn.running_mean,
                });
                out.push(ParamRef {
                    name: &l.name,
                    suffix: "running_var",
                    values: &bn.running_var,
                });
            }
        }
        out
    }

    /// Overwrites one learnable block or running statistic by full name.
    pub fn set_block(&mut self, name: &str, values: &[f64]) -> Result<()> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "parameter block" });
        }
        self.version += 1;
        for l in &mut self.layers {
            let Some(suffix) = name.strip_prefix(l.name.as_str()).and_then(|s| s.strip_prefix('.')) else {
                continue;
            };
            let target: Option<&mut [f64]> = match (&mut l.layer, suffix) {
                (Layer::Conv(c) | Layer::Fc(c), "phi") => Some(c.phi.values_mut()),
                (Layer::Conv(c) | Layer::Fc(c), "reduce") => c.reduce.as_mut().map(|w| &mut w.values[..]),
                (Layer::BatchNorm(bn), "gamma") => Some(&mut bn.gamma),
                (Layer::BatchNorm(bn), "beta") => Some(&mut bn.beta),
                (Layer::BatchNorm(bn), "running_mean") => Some(&mut bn.running_mean),
                (Layer::BatchNorm(bn), "running_var") => Some(&mut bn.running_var),
                _ => None,
            };
            if let Some(t) = target {
                if t.len() != values.len() {
                    return Err(Error::ShapeMismatch {
                        what: "parameter block size",
                        expected: t.len(),
                        found: values.len(),
                    }
                    .in_layer(&l.name));
                }
                t.copy_from_slice(values);
                return Ok(());
            }
        }
        Err(Error::Layer {
            name: name.into(),
            source: alloc::boxed::Box::new(Error::Hyper("no such parameter block")),
        })
    }

    /// Number of learnable sampled weights (condensed filters and 1x1 reductions).
    pub fn weight_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.layer, Layer::Conv(_) | Layer::Fc(_)))
            .flat_map(|l| l.layer.param_sizes())
            .sum()
    }
}

fn check_batch(net: &Network, batch: &[FeatureMap]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    for f in batch {
        if f.channels() != net.input_channels {
            return Err(Error::ShapeMismatch {
                what: "input channels",
                expected: net.input_channels,
                found: f.channels(),
            });
        }
        if f.len() != batch[0].len() {
            return Err(Error::ShapeMismatch {
                what: "input length",
                expected: batch[0].len(),
                found: f.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
