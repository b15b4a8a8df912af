use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{conv_condensed, conv_naive, conv_naive_backward, pointwise_backward, pointwise_conv, FeatureMap, PointwiseWeights};
use crate::error::{Error, Result};
use crate::sampling::{position_map, sample_filters, CondensedFilter, FilterBank, PositionMap};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// How a sampled layer evaluates its convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvPath {
    /// Materialize the filter bank and convolve directly.
    Naive,
    /// Work on the condensed filter: integral image, or direct taps over the
    /// channel-wrapped input when those are fewer.
    #[default]
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Condensed filter plus the optional 1x1 reduction that follows denser sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledConv {
    pub phi: CondensedFilter,
    pub reduce: Option<PointwiseWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(SampledConv),
    /// Sampled fully-connected layer over the flattened input.
    Fc(SampledConv),
    Relu,
    /// Stride-2 max-pool with kernel `k`.
    MaxPool(usize),
    BatchNorm(BatchNorm),
    /// Inverted dropout with the given keep probability.
    Dropout(f64),
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Conv {
        inputs: Vec<FeatureMap>,
        mid: Vec<FeatureMap>,
    },
    Fc {
        shape: (usize, usize),
        inputs: Vec<FeatureMap>,
        mid: Vec<FeatureMap>,
    },
    Relu(Vec<FeatureMap>),
    MaxPool {
        in_len: usize,
        argmax: Vec<Vec<usize>>,
    },
    BatchNorm {
        normalized: Vec<FeatureMap>,
        inv_std: Vec<f64>,
    },
    Dropout(Vec<Vec<f64>>),
    None,
}

pub(crate) struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn flatten(f: &FeatureMap) -> FeatureMap {
    FeatureMap::new(f.len() * f.channels(), 1, f.values().to_vec()).expect("flatten keeps size")
}

impl SampledConv {
    fn forward(&self, batch: &[FeatureMap], path: ConvPath, keep: bool) -> Result<(Vec<FeatureMap>, Vec<FeatureMap>)> {
        let spec = self.phi.spec();
        let bank = (path == ConvPath::Naive).then(|| sample_filters(&self.phi));
        let mut outs = Vec::with_capacity(batch.len());
        let mut mids = Vec::new();
        for f in batch {
            let g = match &bank {
                Some(k) => conv_naive(f, k, spec.conv_stride(), spec.padding())?,
                None => conv_condensed(f, &self.phi)?,
            };
            match &self.reduce {
                Some(w) => {
                    outs.push(pointwise_conv(&g, w)?);
                    if keep {
                        mids.push(g);
                    }
                }
                None => outs.push(g),
            }
        }
        Ok((outs, mids))
    }

    /// Returns input gradients and accumulates `(dPhi, dReduce)`.
    fn backward(
        &self,
        inputs: &[FeatureMap],
        mid: &[FeatureMap],
        d_out: Vec<FeatureMap>,
        path: ConvPath,
        d_phi: &mut [f64],
        d_reduce: &mut [f64],
    ) -> Result<Vec<FeatureMap>> {
        let d_conv: Vec<FeatureMap> = match &self.reduce {
            Some(w) => mid.iter().zip(&d_out).map(|(g, d)| pointwise_backward(g, w, d, d_reduce)).collect(),
            None => d_out,
        };
        let spec = self.phi.spec();
        match path {
            ConvPath::Naive => {
                let bank = sample_filters(&self.phi);
                let mut d_bank = FilterBank::zeros(bank.filter_len(), bank.channels(), bank.filters());
                let mut d_in = Vec::with_capacity(inputs.len());
                for (f, d) in inputs.iter().zip(&d_conv) {
                    d_in.push(conv_naive_backward(f, &bank, spec.conv_stride(), spec.padding(), d, &mut d_bank)?);
                }
                let g = grad_condensed(&d_bank, &position_map(spec))?;
                for (a, b) in d_phi.iter_mut().zip(g) {
                    *a += b;
                }
                Ok(d_in)
            }
            ConvPath::Fast => inputs
                .iter()
                .zip(&d_conv)
                .map(|(f, d)| condensed_backward(f, &self.phi, d, d_phi))
                .collect(),
        }
    }
}

/// Gradient of a sampled convolution taken directly on the condensed filter,
/// working on the channel-wrapped input.
fn condensed_backward(f: &FeatureMap, phi: &CondensedFilter, d_out: &FeatureMap, d_phi: &mut [f64]) -> Result<FeatureMap> {
    let spec = phi.spec();
    let (len, stride, step) = (spec.filter_len(), spec.conv_stride(), spec.sample_stride());
    let mc = spec.condensed_channels();
    let m = f.channels();
    let (left, _) = spec.padding().amounts(len);
    let out_len = spec.output_len(f.len())?;
    if d_out.len() != out_len || d_out.channels() != spec.sampled_filters() {
        return Err(Error::ShapeMismatch {
            what: "output gradient size",
            expected: out_len * spec.sampled_filters(),
            found: d_out.len() * d_out.channels(),
        });
    }
    // wrapped input, zero padded on both sides
    let rows = (out_len - 1) * stride + len;
    let mut wrapped = vec![0.0; rows * mc];
    for t in 0..f.len() {
        let u = t + left;
        if u >= rows {
            break;
        }
        let dst = &mut wrapped[u * mc..(u + 1) * mc];
        for (c, &x) in f.row(t).iter().enumerate() {
            dst[c % mc] += x;
        }
    }
    let mut d_wrapped = vec![0.0; rows * mc];
    let phi_values = phi.values();
    for t in 0..out_len {
        for (n, &g) in d_out.row(t).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            // taps l = 0..len cover consecutive rows of both buffers
            let (u0, v0) = (t * stride, n * step);
            let x = &wrapped[u0 * mc..(u0 + len) * mc];
            let w = &phi_values[v0 * mc..(v0 + len) * mc];
            for (dp, &xv) in d_phi[v0 * mc..(v0 + len) * mc].iter_mut().zip(x) {
                *dp += g * xv;
            }
            for (dx, &wv) in d_wrapped[u0 * mc..(u0 + len) * mc].iter_mut().zip(w) {
                *dx += g * wv;
            }
        }
    }
    let mut d_in = FeatureMap::zeros(f.len(), m);
    for t in 0..f.len() {
        let u = t + left;
        if u >= rows {
            break;
        }
        let src = &d_wrapped[u * mc..(u + 1) * mc];
        for (c, dv) in d_in.row_mut(t).iter_mut().enumerate() {
            *dv = src[c % mc];
        }
    }
    Ok(d_in)
}

/// Sums the filter-bank gradient over every kernel entry tied to each condensed weight.
pub fn grad_condensed(grad_k: &FilterBank, pmap: &PositionMap) -> Result<Vec<f64>> {
    let shape = (grad_k.filter_len(), grad_k.channels(), grad_k.filters());
    let (l, m, n) = pmap.kernel_shape();
    if shape != (l, m, n) {
        return Err(Error::ShapeMismatch {
            what: "kernel gradient size",
            expected: l * m * n,
            found: shape.0 * shape.1 * shape.2,
        });
    }
    Ok(pmap
        .cells()
        .map(|(_, tied)| tied.iter().map(|k| grad_k.get(k.l, k.m, k.n)).sum())
        .collect())
}

fn pool_window(k: usize, in_len: usize) -> (usize, usize) {
    let out = in_len.div_ceil(2);
    let total = ((out - 1) * 2 + k).saturating_sub(in_len);
    (out, total / 2)
}

fn max_pool(f: &FeatureMap, k: usize) -> Result<(FeatureMap, Vec<usize>)> {
    if k > f.len() {
        return Err(Error::ShapeMismatch {
            what: "pool window",
            expected: f.len(),
            found: k,
        });
    }
    let m = f.channels();
    let (out_len, left) = pool_window(k, f.len());
    let mut out = FeatureMap::zeros(out_len, m);
    let mut arg = vec![0usize; out_len * m];
    for t in 0..out_len {
        let start = (t * 2).saturating_sub(left);
        let end = (t * 2 + k - left).min(f.len());
        for c in 0..m {
            let mut best = start;
            for u in start + 1..end {
                if f.get(u, c) > f.get(best, c) {
                    best = u;
                }
            }
            out.row_mut(t)[c] = f.get(best, c);
            arg[t * m + c] = best;
        }
    }
    Ok((out, arg))
}

/// Forward pass of one stride-2 max-pool over a single map.
pub fn max_pool_forward(f: &FeatureMap, k: usize) -> Result<FeatureMap> {
    max_pool(f, k).map(|(o, _)| o)
}

pub(crate) struct LayerOutput {
    pub outputs: Vec<FeatureMap>,
    pub cache: LayerCache,
    pub stats: Option<BnStats>,
}

impl Layer {
    /// Output `(len, channels)` for an input of the given shape.
    pub fn output_shape(&self, len: usize, channels: usize) -> Result<(usize, usize)> {
        match self {
            Layer::Conv(c) => {
                let spec = c.phi.spec();
                if spec.in_channels() != channels {
                    return Err(Error::ShapeMismatch {
                        what: "input channels",
                        expected: spec.in_channels(),
                        found: channels,
                    });
                }
                Ok((spec.output_len(len)?, spec.filters()))
            }
            Layer::Fc(c) => {
                let spec = c.phi.spec();
                if spec.filter_len() != len * channels {
                    return Err(Error::ShapeMismatch {
                        what: "fc input size",
                        expected: spec.filter_len(),
                        found: len * channels,
                    });
                }
                Ok((1, spec.filters()))
            }
            Layer::MaxPool(k) => {
                if *k == 0 || *k > len {
                    return Err(Error::ShapeMismatch {
                        what: "pool window",
                        expected: len,
                        found: *k,
                    });
                }
                Ok((len.div_ceil(2), channels))
            }
            Layer::BatchNorm(bn) => {
                if bn.gamma.len() != channels {
                    return Err(Error::ShapeMismatch {
                        what: "batch-norm channels",
                        expected: bn.gamma.len(),
                        found: channels,
                    });
                }
                Ok((len, channels))
            }
            Layer::Relu | Layer::Dropout(_) => Ok((len, channels)),
        }
    }

    pub(crate) fn forward(
        &self,
        batch: Vec<FeatureMap>,
        mode: Mode,
        path: ConvPath,
        rng: &mut ChaCha8Rng,
        keep: bool,
    ) -> Result<LayerOutput> {
        let mut stats = None;
        let (outputs, cache) = match self {
            Layer::Conv(c) => {
                let (outs, mid) = c.forward(&batch, path, keep)?;
                let cache = if keep {
                    LayerCache::Conv { inputs: batch, mid }
                } else {
                    LayerCache::None
                };
                (outs, cache)
            }
            Layer::Fc(c) => {
                let shape = batch.first().map_or((0, 0), |f| (f.len(), f.channels()));
                let flat: Vec<FeatureMap> = batch.iter().map(flatten).collect();
                let (outs, mid) = c.forward(&flat, path, keep)?;
                let cache = if keep {
                    LayerCache::Fc {
                        shape,
                        inputs: flat,
                        mid,
                    }
                } else {
                    LayerCache::None
                };
                (outs, cache)
            }
            Layer::Relu => {
                let outs = batch
                    .iter()
                    .map(|f| {
                        let mut o = f.clone();
                        o.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                        o
                    })
                    .collect();
                (outs, if keep { LayerCache::Relu(batch) } else { LayerCache::None })
            }
            Layer::MaxPool(k) => {
                let in_len = batch.first().map_or(0, |f| f.len());
                let mut outs = Vec::with_capacity(batch.len());
                let mut args = Vec::with_capacity(batch.len());
                for f in &batch {
                    let (o, a) = max_pool(f, *k)?;
                    outs.push(o);
                    args.push(a);
                }
                let cache = if keep {
                    LayerCache::MaxPool { in_len, argmax: args }
                } else {
                    LayerCache::None
                };
                (outs, cache)
            }
            Layer::BatchNorm(bn) => {
                let m = bn.gamma.len();
                let (mean, var) = match mode {
                    Mode::Train => {
                        let (mean, var) = channel_moments(&batch, m)?;
                        stats = Some(BnStats {
                            mean: mean.clone(),
                            var: var.clone(),
                        });
                        (mean, var)
                    }
                    Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPS)).collect();
                let mut outs = Vec::with_capacity(batch.len());
                let mut normalized = Vec::with_capacity(batch.len());
                for f in &batch {
                    let mut xh = f.clone();
                    for row in xh.values_mut().chunks_mut(m) {
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = (*v - mean[c]) * inv_std[c];
                        }
                    }
                    let mut o = xh.clone();
                    for row in o.values_mut().chunks_mut(m) {
                        for (c, v) in row.iter_mut().enumerate() {
                            *v = bn.gamma[c] * *v + bn.beta[c];
                        }
                    }
                    outs.push(o);
                    if keep {
                        normalized.push(xh);
                    }
                }
                let cache = if keep {
                    LayerCache::BatchNorm { normalized, inv_std }
                } else {
                    LayerCache::None
                };
                (outs, cache)
            }
            Layer::Dropout(p) => match mode {
                Mode::Eval => (batch, LayerCache::None),
                Mode::Train => {
                    let scale = 1.0 / p;
                    let mut masks = Vec::with_capacity(batch.len());
                    let mut outs = Vec::with_capacity(batch.len());
                    for mut f in batch {
                        let mask: Vec<f64> = (0..f.values().len())
                            .map(|_| if rng.random::<f64>() < *p { scale } else { 0.0 })
                            .collect();
                        for (v, s) in f.values_mut().iter_mut().zip(&mask) {
                            *v *= s;
                        }
                        outs.push(f);
                        masks.push(mask);
                    }
                    (outs, if keep { LayerCache::Dropout(masks) } else { LayerCache::None })
                }
            },
        };
        Ok(LayerOutput { outputs, cache, stats })
    }

    /// Propagates `d_out` back through the layer, accumulating parameter
    /// gradients into `grads` in the order of [`Layer::param_sizes`].
    pub(crate) fn backward(
        &self,
        cache: &LayerCache,
        d_out: Vec<FeatureMap>,
        path: ConvPath,
        grads: &mut [Vec<f64>],
    ) -> Result<Vec<FeatureMap>> {
        match (self, cache) {
            (Layer::Conv(c), LayerCache::Conv { inputs, mid }) => {
                let (d_phi, rest) = grads.split_first_mut().ok_or(Error::StaleCache)?;
                let mut empty = Vec::new();
                let d_reduce = rest.first_mut().unwrap_or(&mut empty);
                c.backward(inputs, mid, d_out, path, d_phi, d_reduce)
            }
            (Layer::Fc(c), LayerCache::Fc { shape, inputs, mid }) => {
                let (d_phi, rest) = grads.split_first_mut().ok_or(Error::StaleCache)?;
                let mut empty = Vec::new();
                let d_reduce = rest.first_mut().unwrap_or(&mut empty);
                let d_flat = c.backward(inputs, mid, d_out, path, d_phi, d_reduce)?;
                d_flat
                    .into_iter()
                    .map(|d| FeatureMap::new(shape.0, shape.1, d.into_values()))
                    .collect()
            }
            (Layer::Relu, LayerCache::Relu(inputs)) => Ok(inputs
                .iter()
                .zip(d_out)
                .map(|(x, mut d)| {
                    for (dv, &xv) in d.values_mut().iter_mut().zip(x.values()) {
                        if xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    d
                })
                .collect()),
            (Layer::MaxPool(_), LayerCache::MaxPool { in_len, argmax }) => Ok(argmax
                .iter()
                .zip(d_out)
                .map(|(arg, d)| {
                    let m = d.channels();
                    let mut dx = FeatureMap::zeros(*in_len, m);
                    for (i, &g) in d.values().iter().enumerate() {
                        let c = i % m;
                        dx.values_mut()[arg[i] * m + c] += g;
                    }
                    dx
                })
                .collect()),
            (Layer::BatchNorm(bn), LayerCache::BatchNorm { normalized, inv_std }) => {
                let m = bn.gamma.len();
                let count = normalized.iter().map(|f| f.len()).sum::<usize>() as f64;
                let mut sum_d = vec![0.0; m];
                let mut sum_dx = vec![0.0; m];
                for (xh, d) in normalized.iter().zip(&d_out) {
                    for (xr, dr) in xh.values().chunks(m).zip(d.values().chunks(m)) {
                        for c in 0..m {
                            sum_d[c] += dr[c];
                            sum_dx[c] += dr[c] * xr[c];
                        }
                    }
                }
                let mut out = Vec::with_capacity(d_out.len());
                for (xh, mut d) in normalized.iter().zip(d_out) {
                    for (xr, dr) in xh.values().chunks(m).zip(d.values_mut().chunks_mut(m)) {
                        for c in 0..m {
                            let k = bn.gamma[c] * inv_std[c] / count;
                            dr[c] = k * (count * dr[c] - sum_d[c] - xr[c] * sum_dx[c]);
                        }
                    }
                    out.push(d);
                }
                for c in 0..m {
                    grads[0][c] += sum_dx[c];
                    grads[1][c] += sum_d[c];
                }
                Ok(out)
            }
            (Layer::Dropout(_), LayerCache::Dropout(masks)) => Ok(masks
                .iter()
                .zip(d_out)
                .map(|(mask, mut d)| {
                    for (v, s) in d.values_mut().iter_mut().zip(mask) {
                        *v *= s;
                    }
                    d
                })
                .collect()),
            _ => Err(Error::StaleCache),
        }
    }

    /// Sizes of the learnable blocks, in a fixed order.
    pub fn param_sizes(&self) -> Vec<usize> {
        match self {
            Layer::Conv(c) | Layer::Fc(c) => {
                let mut s = vec![c.phi.values().len()];
                if let Some(w) = &c.reduce {
                    s.push(w.values.len());
                }
                s
            }
            Layer::BatchNorm(bn) => vec![bn.gamma.len(), bn.beta.len()],
            _ => Vec::new(),
        }
    }

    pub(crate) fn param_suffixes(&self) -> &'static [&'static str] {
        match self {
            Layer::Conv(c) | Layer::Fc(c) if c.reduce.is_some() => &["phi", "reduce"],
            Layer::Conv(_) | Layer::Fc(_) => &["phi"],
            Layer::BatchNorm(_) => &["gamma", "beta"],
            _ => &[],
        }
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Conv(c) | Layer::Fc(c) => {
                let mut p = vec![c.phi.values()];
                if let Some(w) = &c.reduce {
                    p.push(&w.values[..]);
                }
                p
            }
            Layer::BatchNorm(bn) => vec![&bn.gamma[..], &bn.beta[..]],
            _ => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Conv(c) | Layer::Fc(c) => {
                let mut p = vec![c.phi.values_mut()];
                if let Some(w) = &mut c.reduce {
                    p.push(&mut w.values[..]);
                }
                p
            }
            Layer::BatchNorm(bn) => vec![&mut bn.gamma[..], &mut bn.beta[..]],
            _ => Vec::new(),
        }
    }
}

fn channel_moments(batch: &[FeatureMap], m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut mean = vec![0.0; m];
    let mut count = 0usize;
    for f in batch {
        if f.channels() != m {
            return Err(Error::ShapeMismatch {
                what: "batch-norm channels",
                expected: m,
                found: f.channels(),
            });
        }
        for row in f.values().chunks(m) {
            for (a, &v) in mean.iter_mut().zip(row) {
                *a += v;
            }
        }
        count += f.len();
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    mean.iter_mut().for_each(|v| *v /= count as f64);
    let mut var = vec![0.0; m];
    for f in batch {
        for row in f.values().chunks(m) {
            for c in 0..m {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SamplingSpec;
    use rand::SeedableRng;

    fn fm(len: usize, ch: usize, v: &[f64]) -> FeatureMap {
        FeatureMap::new(len, ch, v.to_vec()).unwrap()
    }

    fn run(layer: &Layer, batch: Vec<FeatureMap>, mode: Mode) -> Vec<FeatureMap> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        layer.forward(batch, mode, ConvPath::Fast, &mut rng, false).unwrap().outputs
    }

    #[test]
    fn relu_clamps() {
        let out = run(&Layer::Relu, vec![fm(2, 1, &[-1.0, 2.0])], Mode::Train);
        assert_eq!(out[0].values(), &[0.0, 2.0]);
    }

    #[test]
    fn maxpool_pairs() {
        let out = run(&Layer::MaxPool(2), vec![fm(4, 1, &[1.0, 3.0, 2.0, 0.0])], Mode::Train);
        assert_eq!(out[0].values(), &[3.0, 2.0]);
    }

    #[test]
    fn maxpool_odd_and_wide() {
        // k = 4 on 5 samples: out 3, pad total 3, left 1 -> windows [0,3), [1,5), [3,5)
        let out = run(&Layer::MaxPool(4), vec![fm(5, 1, &[5.0, 1.0, 4.0, 2.0, 3.0])], Mode::Train);
        assert_eq!(out[0].values(), &[5.0, 4.0, 3.0]);
        assert!(Layer::MaxPool(6).output_shape(5, 1).is_err());
    }

    #[test]
    fn batchnorm_constant_channel_is_zero() {
        let bn = Layer::BatchNorm(BatchNorm::new(1));
        let out = run(&bn, vec![fm(3, 1, &[2.5; 3]), fm(3, 1, &[2.5; 3])], Mode::Train);
        assert!(out.iter().all(|f| f.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dropout_eval_is_identity() {
        let x = fm(4, 1, &[1.0, -2.0, 3.0, 4.0]);
        let out = run(&Layer::Dropout(0.5), vec![x.clone()], Mode::Eval);
        assert_eq!(out[0], x);
    }

    #[test]
    fn dropout_train_scales_kept_units() {
        let x = fm(64, 1, &[1.0; 64]);
        let out = run(&Layer::Dropout(0.8), vec![x], Mode::Train);
        assert!(out[0].values().iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
    }

    #[test]
    fn grad_condensed_ties() {
        // phi = [a, b, c], L = 2, S = 1, N = 2
        let spec = SamplingSpec::new(2, 2, 1, 1, 1).unwrap();
        let (g00, g01, g10, g11) = (1.0, 2.0, 4.0, 8.0);
        let gk = FilterBank::new(2, 1, 2, vec![g00, g01, g10, g11]).unwrap();
        let g = grad_condensed(&gk, &position_map(&spec)).unwrap();
        assert_eq!(g, vec![g00, g01 + g10, g11]);
    }

    #[test]
    fn grad_condensed_disjoint_is_reshape() {
        let spec = SamplingSpec::new(3, 2, 3, 1, 2).unwrap();
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let gk = FilterBank::new(3, 2, 2, values).unwrap();
        let g = grad_condensed(&gk, &position_map(&spec)).unwrap();
        let mut expected = vec![0.0; 12];
        for l in 0..3 {
            for m in 0..2 {
                for n in 0..2 {
                    expected[(n * 3 + l) * 2 + m] = gk.get(l, m, n);
                }
            }
        }
        assert_eq!(g, expected);
    }

    #[test]
    fn grad_condensed_rejects_wrong_shape() {
        let spec = SamplingSpec::new(2, 2, 1, 1, 1).unwrap();
        let gk = FilterBank::zeros(3, 1, 2);
        assert!(grad_condensed(&gk, &position_map(&spec)).is_err());
    }
}
