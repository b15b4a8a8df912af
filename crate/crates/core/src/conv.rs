//! Layer execution: direct convolution over a materialized filter bank, and
//! the integral-image path that works straight from the condensed filter.
//!
//! The fast path wraps the input's channel groups down to `M*` channels,
//! forms the inner-product map `P[u, v] = F~[u, :] . phi[v, :]`, accumulates
//! its diagonals into `I[u, v] = I[u-1, v-1] + P[u, v]`, and reads every
//! output as one difference of two entries of `I`. All accumulation is f64.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sampling::{CondensedFilter, FilterBank, Padding, SamplingSpec};

/// A 1D activation map of `len` positions and `channels` channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    len: usize,
    channels: usize,
    values: Vec<f64>,
}

/// Output of a convolution: `(T_out, N)`.
pub type OutputMap = FeatureMap;

impl FeatureMap {
    pub fn new(len: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if len == 0 || channels == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != len * channels {
            return Err(Error::ShapeMismatch {
                what: "feature map size",
                expected: len * channels,
                found: values.len(),
            });
        }
        Ok(FeatureMap {
            len,
            channels,
            values,
        })
    }

    pub fn zeros(len: usize, channels: usize) -> Self {
        FeatureMap {
            len,
            channels,
            values: vec![0.0; len * channels],
        }
    }

    /// Single-channel map from samples.
    pub fn from_signal(samples: Vec<f64>) -> Result<Self> {
        let len = samples.len();
        Self::new(len, 1, samples)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, t: usize, m: usize) -> f64 {
        self.values[t * self.channels + m]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.channels..(t + 1) * self.channels]
    }

    /// Copy with `left` and `right` zero rows added.
    pub fn padded(&self, left: usize, right: usize) -> FeatureMap {
        let mut values = vec![0.0; (self.len + left + right) * self.channels];
        values[left * self.channels..(left + self.len) * self.channels].copy_from_slice(&self.values);
        FeatureMap {
            len: self.len + left + right,
            channels: self.channels,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Multiply-add tallies, split by pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    /// Direct convolution taps.
    pub direct: u64,
    /// Channel-wrap additions.
    pub wrap: u64,
    /// Inner-product map multiply-adds.
    pub inner_product: u64,
    /// Integral-image accumulations, one per entry.
    pub integral: u64,
    /// Output retrievals, one subtraction each.
    pub lookup: u64,
    /// 1x1 convolution multiply-adds.
    pub pointwise: u64,
}

impl OpCounter {
    pub fn fast_total(&self) -> u64 {
        self.wrap + self.inner_product + self.integral + self.lookup
    }

    pub fn total(&self) -> u64 {
        self.direct + self.fast_total() + self.pointwise
    }
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::ZeroDimension {
            what: "convolution stride",
        });
    }
    Ok(())
}

/// Direct convolution `G[t, n] = sum_{l,m} F_pad[t*stride + l, m] * K[l, m, n]`.
pub fn conv_naive(f: &FeatureMap, k: &FilterBank, conv_stride: usize, padding: Padding) -> Result<OutputMap> {
    conv_naive_counted(f, k, conv_stride, padding, &mut OpCounter::default())
}

pub fn conv_naive_counted(
    f: &FeatureMap,
    k: &FilterBank,
    conv_stride: usize,
    padding: Padding,
    ops: &mut OpCounter,
) -> Result<OutputMap> {
    check_stride(conv_stride)?;
    if k.channels() != f.channels() {
        return Err(Error::ShapeMismatch {
            what: "filter channels",
            expected: f.channels(),
            found: k.channels(),
        });
    }
    let (len, m, count) = (k.filter_len(), f.channels(), k.filters());
    let out_len = padding.output_len(f.len(), len, conv_stride)?;
    let (left, right) = padding.amounts(len);
    let fp = f.padded(left, right);
    let mut out = FeatureMap::zeros(out_len, count);
    for t in 0..out_len {
        let acc = out.row_mut(t);
        for l in 0..len {
            let row = fp.row(t * conv_stride + l);
            for (c, &x) in row.iter().enumerate() {
                for (a, &w) in acc.iter_mut().zip(k.tap(l, c)) {
                    *a += x * w;
                }
            }
        }
    }
    ops.direct += (out_len * len * m * count) as u64;
    Ok(out)
}

/// Gradients of a direct convolution: `(dF, dK)` given `dG`.
pub fn conv_naive_backward(
    f: &FeatureMap,
    k: &FilterBank,
    conv_stride: usize,
    padding: Padding,
    d_out: &FeatureMap,
    d_kernel: &mut FilterBank,
) -> Result<FeatureMap> {
    check_stride(conv_stride)?;
    let (len, m, count) = (k.filter_len(), f.channels(), k.filters());
    let out_len = padding.output_len(f.len(), len, conv_stride)?;
    if d_out.len() != out_len || d_out.channels() != count {
        return Err(Error::ShapeMismatch {
            what: "output gradient size",
            expected: out_len * count,
            found: d_out.len() * d_out.channels(),
        });
    }
    let (left, right) = padding.amounts(len);
    let fp = f.padded(left, right);
    let mut d_fp = FeatureMap::zeros(fp.len(), m);
    for t in 0..out_len {
        let g = d_out.row(t);
        for l in 0..len {
            let u = t * conv_stride + l;
            for c in 0..m {
                let x = fp.get(u, c);
                let start = d_kernel.index(l, c, 0);
                let dk = &mut d_kernel.values_mut()[start..start + count];
                let mut s = 0.0;
                for ((dkv, &gv), &w) in dk.iter_mut().zip(g).zip(k.tap(l, c)) {
                    *dkv += x * gv;
                    s += w * gv;
                }
                d_fp.values[u * m + c] += s;
            }
        }
    }
    let values = d_fp.values[left * m..(left + f.len()) * m].to_vec();
    FeatureMap::new(f.len(), m, values)
}

/// Input with its `C` channel groups summed: `(T, M*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedFeatureMap(pub FeatureMap);

pub fn channel_wrap(f: &FeatureMap, condensed_channels: usize) -> Result<WrappedFeatureMap> {
    channel_wrap_counted(f, condensed_channels, &mut OpCounter::default())
}

fn channel_wrap_counted(f: &FeatureMap, mc: usize, ops: &mut OpCounter) -> Result<WrappedFeatureMap> {
    if mc == 0 || f.channels() % mc != 0 {
        return Err(Error::ChannelFactor {
            channels: f.channels(),
            factor: mc,
        });
    }
    let groups = f.channels() / mc;
    let mut out = FeatureMap::zeros(f.len(), mc);
    for t in 0..f.len() {
        let src = f.row(t);
        let dst = out.row_mut(t);
        dst.copy_from_slice(&src[..mc]);
        for g in 1..groups {
            for (d, s) in dst.iter_mut().zip(&src[g * mc..(g + 1) * mc]) {
                *d += s;
            }
        }
    }
    ops.wrap += (f.len() * mc * (groups - 1)) as u64;
    Ok(WrappedFeatureMap(out))
}

/// `P[u, v]` over padded rows `u` and condensed positions `v`; padding rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl InnerProductMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.cols + v]
    }

    /// Builds a map from explicit values (row-major).
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "inner product map size",
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(InnerProductMap { rows, cols, values })
    }
}

fn inner_product_row(x: &[f64], phi: &CondensedFilter, out: &mut [f64]) {
    for (v, p) in out.iter_mut().enumerate() {
        *p = x.iter().zip(phi.row(v)).map(|(a, b)| a * b).sum();
    }
}

pub fn inner_product_map(wrapped: &WrappedFeatureMap, phi: &CondensedFilter) -> Result<InnerProductMap> {
    let spec = phi.spec();
    let f = &wrapped.0;
    if f.channels() != spec.condensed_channels() {
        return Err(Error::ShapeMismatch {
            what: "wrapped channels",
            expected: spec.condensed_channels(),
            found: f.channels(),
        });
    }
    let (left, right) = spec.padding().amounts(spec.filter_len());
    let rows = f.len() + left + right;
    let cols = spec.condensed_len();
    let mut values = vec![0.0; rows * cols];
    for t in 0..f.len() {
        let u = t + left;
        inner_product_row(f.row(t), phi, &mut values[u * cols..(u + 1) * cols]);
    }
    Ok(InnerProductMap { rows, cols, values })
}

/// Diagonal prefix sums of an inner-product map.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl IntegralImage {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `I[u, v]`, with zero for any negative index.
    pub fn at(&self, u: isize, v: isize) -> f64 {
        if u < 0 || v < 0 {
            0.0
        } else {
            self.values[u as usize * self.cols + v as usize]
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.cols + v]
    }

    /// Sum of the `len` diagonal entries of `P` starting at `(u, v)`.
    pub fn diagonal_sum(&self, u: usize, v: usize, len: usize) -> f64 {
        let end = self.at((u + len - 1) as isize, (v + len - 1) as isize);
        end - self.at(u as isize - 1, v as isize - 1)
    }
}

#[inline]
fn integral_row(prev: Option<&[f64]>, p: &[f64], out: &mut [f64]) {
    match prev {
        Some(prev) => {
            out[0] = p[0];
            for v in 1..p.len() {
                out[v] = prev[v - 1] + p[v];
            }
        }
        None => out.copy_from_slice(p),
    }
}

pub fn integral_image(p: &InnerProductMap) -> IntegralImage {
    let (rows, cols) = (p.rows, p.cols);
    let mut values = vec![0.0; rows * cols];
    for u in 0..rows {
        let (done, rest) = values.split_at_mut(u * cols);
        let prev = (u > 0).then(|| &done[(u - 1) * cols..]);
        integral_row(prev, &p.values[u * cols..(u + 1) * cols], &mut rest[..cols]);
    }
    IntegralImage { rows, cols, values }
}

/// Integral-image convolution straight from the condensed filter.
///
/// Produces `(T_out, N*D)`: the sampled filters before any 1x1 reduction.
/// Rows of `I` are streamed through a ring of `L + 1` rows, so memory is
/// `O(L * L*)` regardless of the input length.
pub fn conv_fast(f: &FeatureMap, phi: &CondensedFilter) -> Result<OutputMap> {
    conv_fast_counted(f, phi, &mut OpCounter::default())
}

pub fn conv_fast_counted(f: &FeatureMap, phi: &CondensedFilter, ops: &mut OpCounter) -> Result<OutputMap> {
    let spec = phi.spec();
    if f.channels() != spec.in_channels() {
        return Err(Error::ShapeMismatch {
            what: "input channels",
            expected: spec.in_channels(),
            found: f.channels(),
        });
    }
    let len = spec.filter_len();
    let stride = spec.conv_stride();
    let out_len = spec.output_len(f.len())?;
    let (left, right) = spec.padding().amounts(len);
    let rows = f.len() + left + right;
    let cols = spec.condensed_len();
    let count = spec.sampled_filters();
    let step = spec.sample_stride();

    let wrapped = channel_wrap_counted(f, spec.condensed_channels(), ops)?.0;

    let ring_rows = len + 1;
    let mut ring = vec![0.0; ring_rows * cols];
    let mut p = vec![0.0; cols];
    let mut out = FeatureMap::zeros(out_len, count);
    for u in 0..rows {
        if u >= left && u < left + f.len() {
            inner_product_row(wrapped.row(u - left), phi, &mut p);
            ops.inner_product += (cols * wrapped.channels()) as u64;
        } else {
            p.fill(0.0);
        }
        let slot = u % ring_rows;
        if u == 0 {
            integral_row(None, &p, &mut ring[..cols]);
        } else {
            let prev_slot = (u - 1) % ring_rows;
            let (a, b) = if prev_slot < slot {
                let (lo, hi) = ring.split_at_mut(slot * cols);
                (&lo[prev_slot * cols..(prev_slot + 1) * cols], &mut hi[..cols])
            } else {
                let (lo, hi) = ring.split_at_mut(prev_slot * cols);
                (&hi[..cols], &mut lo[slot * cols..(slot + 1) * cols])
            };
            integral_row(Some(a), &p, b);
        }
        ops.integral += cols as u64;

        // output t reads rows t*stride - 1 and t*stride + L - 1
        if u + 1 < len || (u + 1 - len) % stride != 0 {
            continue;
        }
        let t = (u + 1 - len) / stride;
        if t >= out_len {
            continue;
        }
        let end = &ring[slot * cols..(slot + 1) * cols];
        let start_row = t * stride;
        let g = out.row_mut(t);
        if start_row == 0 {
            for (n, gv) in g.iter_mut().enumerate() {
                *gv = end[n * step + len - 1];
            }
        } else {
            let s = (start_row - 1) % ring_rows;
            let begin = &ring[s * cols..(s + 1) * cols];
            for (n, gv) in g.iter_mut().enumerate() {
                let v = n * step;
                let before = if v == 0 { 0.0 } else { begin[v - 1] };
                *gv = end[v + len - 1] - before;
            }
        }
        ops.lookup += count as u64;
    }
    Ok(out)
}

/// Direct convolution with taps read from the condensed filter, over the
/// channel-wrapped input. Same output as [`conv_fast`].
pub fn conv_wrapped_direct(f: &FeatureMap, phi: &CondensedFilter) -> Result<OutputMap> {
    let spec = phi.spec();
    if f.channels() != spec.in_channels() {
        return Err(Error::ShapeMismatch {
            what: "input channels",
            expected: spec.in_channels(),
            found: f.channels(),
        });
    }
    let (len, stride, step) = (spec.filter_len(), spec.conv_stride(), spec.sample_stride());
    let mc = spec.condensed_channels();
    let out_len = spec.output_len(f.len())?;
    let (left, _) = spec.padding().amounts(len);
    let wrapped = channel_wrap(f, mc)?.0;
    let x = wrapped.values();
    let w = phi.values();
    let mut out = FeatureMap::zeros(out_len, spec.sampled_filters());
    for t in 0..out_len {
        // taps that land inside the unpadded input
        let first = left.saturating_sub(t * stride);
        let last = (f.len() + left).saturating_sub(t * stride).min(len);
        if first >= last {
            continue;
        }
        // consecutive taps walk consecutive rows of both the input and phi
        let u0 = t * stride + first - left;
        let x_rows = &x[u0 * mc..(u0 + last - first) * mc];
        for (n, g) in out.row_mut(t).iter_mut().enumerate() {
            let v0 = n * step + first;
            let w_rows = &w[v0 * mc..(v0 + last - first) * mc];
            *g = x_rows.iter().zip(w_rows).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

/// Mult-adds of [`conv_wrapped_direct`]: the wrap plus `T_out * N * D * L * M*`.
pub fn wrapped_direct_ops(spec: &SamplingSpec, len: usize) -> Result<u64> {
    let out_len = spec.output_len(len)? as u64;
    let mc = spec.condensed_channels() as u64;
    let wrap = len as u64 * mc * (spec.channel_factor() as u64 - 1);
    Ok(wrap + out_len * spec.sampled_filters() as u64 * spec.filter_len() as u64 * mc)
}

/// Evaluates a condensed layer by whichever of the integral image and the
/// wrapped direct convolution needs fewer mult-adds. The integral image
/// wins when outputs are dense; large convolution strides and
/// fully-connected layers favour direct taps.
pub fn conv_condensed(f: &FeatureMap, phi: &CondensedFilter) -> Result<OutputMap> {
    let spec = phi.spec();
    if fast_op_counts(spec, f.len())?.fast_total() <= wrapped_direct_ops(spec, f.len())? {
        conv_fast(f, phi)
    } else {
        conv_wrapped_direct(f, phi)
    }
}

/// Weights `(1, N_in, N_out)` of a 1x1 convolution, row-major `(N_in, N_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseWeights {
    pub in_channels: usize,
    pub out_channels: usize,
    pub values: Vec<f64>,
}

pub fn pointwise_conv(f: &FeatureMap, w: &PointwiseWeights) -> Result<OutputMap> {
    pointwise_conv_counted(f, w, &mut OpCounter::default())
}

pub fn pointwise_conv_counted(f: &FeatureMap, w: &PointwiseWeights, ops: &mut OpCounter) -> Result<OutputMap> {
    if f.channels() != w.in_channels {
        return Err(Error::ShapeMismatch {
            what: "1x1 input channels",
            expected: w.in_channels,
            found: f.channels(),
        });
    }
    if w.values.len() != w.in_channels * w.out_channels {
        return Err(Error::ShapeMismatch {
            what: "1x1 weight size",
            expected: w.in_channels * w.out_channels,
            found: w.values.len(),
        });
    }
    let n = w.out_channels;
    let mut out = FeatureMap::zeros(f.len(), n);
    for t in 0..f.len() {
        let acc = out.row_mut(t);
        for (m, &x) in f.row(t).iter().enumerate() {
            for (a, &wv) in acc.iter_mut().zip(&w.values[m * n..(m + 1) * n]) {
                *a += x * wv;
            }
        }
    }
    ops.pointwise += (f.len() * w.in_channels * n) as u64;
    Ok(out)
}

/// `(dF, dW)` of a 1x1 convolution; `dW` accumulates into `d_weights`.
pub fn pointwise_backward(
    f: &FeatureMap,
    w: &PointwiseWeights,
    d_out: &FeatureMap,
    d_weights: &mut [f64],
) -> FeatureMap {
    let n = w.out_channels;
    let mut d_in = FeatureMap::zeros(f.len(), w.in_channels);
    for t in 0..f.len() {
        let g = d_out.row(t);
        let x = f.row(t);
        let dx = d_in.row_mut(t);
        for m in 0..w.in_channels {
            let wrow = &w.values[m * n..(m + 1) * n];
            let drow = &mut d_weights[m * n..(m + 1) * n];
            let mut s = 0.0;
            for ((dw, &wv), &gv) in drow.iter_mut().zip(wrow).zip(g) {
                *dw += x[m] * gv;
                s += wv * gv;
            }
            dx[m] = s;
        }
    }
    d_in
}

/// Multi-channel 2D map `(width, height, channels)`, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap2D {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureMap2D {
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[(x * self.height + y) * self.channels + c]
    }
}

/// Direct 2D convolution (stride 1, same padding) with a materialized bank.
pub fn conv2d_naive(f: &FeatureMap2D, k: &crate::sampling::FilterBank2D) -> Result<FeatureMap2D> {
    if f.channels != k.channels {
        return Err(Error::ShapeMismatch {
            what: "filter channels",
            expected: f.channels,
            found: k.channels,
        });
    }
    let (left_x, _) = Padding::Same.amounts(k.width);
    let (left_y, _) = Padding::Same.amounts(k.height);
    let n = k.filters;
    let mut values = vec![0.0; f.width * f.height * n];
    for x in 0..f.width {
        for y in 0..f.height {
            let acc = &mut values[(x * f.height + y) * n..(x * f.height + y + 1) * n];
            for dx in 0..k.width {
                let Some(sx) = (x + dx).checked_sub(left_x).filter(|&s| s < f.width) else {
                    continue;
                };
                for dy in 0..k.height {
                    let Some(sy) = (y + dy).checked_sub(left_y).filter(|&s| s < f.height) else {
                        continue;
                    };
                    for c in 0..f.channels {
                        let v = f.get(sx, sy, c);
                        let base = ((dx * k.height + dy) * k.channels + c) * n;
                        for (a, &w) in acc.iter_mut().zip(&k.values[base..base + n]) {
                            *a += v * w;
                        }
                    }
                }
            }
        }
    }
    Ok(FeatureMap2D {
        width: f.width,
        height: f.height,
        channels: n,
        values,
    })
}

/// Analytic operation counts of [`conv_fast_counted`] on an input of `len` rows.
pub fn fast_op_counts(spec: &SamplingSpec, len: usize) -> Result<OpCounter> {
    let out_len = spec.output_len(len)?;
    let (left, right) = spec.padding().amounts(spec.filter_len());
    let rows = (len + left + right) as u64;
    let (len, mc, c) = (len as u64, spec.condensed_channels() as u64, spec.channel_factor() as u64);
    let cols = spec.condensed_len() as u64;
    Ok(OpCounter {
        wrap: len * mc * (c - 1),
        inner_product: len * mc * cols,
        integral: rows * cols,
        lookup: out_len as u64 * spec.sampled_filters() as u64,
        ..OpCounter::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sample_filters;

    fn signal(v: &[f64]) -> FeatureMap {
        FeatureMap::from_signal(v.to_vec()).unwrap()
    }

    #[test]
    fn naive_identity_tap() {
        let k = FilterBank::new(2, 1, 1, vec![1.0, 0.0]).unwrap();
        let g = conv_naive(&signal(&[1., 2., 3.]), &k, 1, Padding::Same).unwrap();
        assert_eq!(g.values(), [1., 2., 3.]);
    }

    #[test]
    fn naive_box_filter() {
        let k = FilterBank::new(2, 1, 1, vec![1.0, 1.0]).unwrap();
        let g = conv_naive(&signal(&[1., 2., 3.]), &k, 1, Padding::Same).unwrap();
        assert_eq!(g.values(), [3., 5., 3.]);
    }

    #[test]
    fn naive_zero_kernel() {
        let k = FilterBank::zeros(3, 2, 4);
        let f = FeatureMap::new(5, 2, (0..10).map(|v| v as f64).collect()).unwrap();
        let g = conv_naive(&f, &k, 2, Padding::Same).unwrap();
        assert_eq!((g.len(), g.channels()), (3, 4));
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn naive_rejects_mismatch() {
        let k = FilterBank::zeros(3, 2, 4);
        assert!(matches!(
            conv_naive(&signal(&[1., 2.]), &k, 1, Padding::Same),
            Err(Error::ShapeMismatch { .. })
        ));
        let k1 = FilterBank::zeros(3, 1, 1);
        assert_eq!(
            conv_naive(&signal(&[1., 2.]), &k1, 1, Padding::Valid),
            Err(Error::InputTooShort { len: 2, filter_len: 3 })
        );
        assert_eq!(FeatureMap::new(0, 1, vec![]), Err(Error::EmptyInput));
    }

    #[test]
    fn wrap_sums_groups() {
        let f = FeatureMap::new(1, 4, vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(channel_wrap(&f, 2).unwrap().0.values(), [4., 6.]);
        assert_eq!(channel_wrap(&f, 4).unwrap().0, f);
        assert!(channel_wrap(&f, 3).is_err());
    }

    #[test]
    fn inner_products_outer_product_for_one_channel() {
        let spec = SamplingSpec::new(2, 2, 1, 1, 1).unwrap().with_padding(Padding::Valid);
        let phi = CondensedFilter::new(spec, vec![1., 2., 3.]).unwrap();
        let f = channel_wrap(&signal(&[2., -1.]), 1).unwrap();
        let p = inner_product_map(&f, &phi).unwrap();
        assert_eq!((p.rows(), p.cols()), (2, 3));
        assert_eq!(p.values, [2., 4., 6., -1., -2., -3.]);

        let zero = CondensedFilter::zeros(spec);
        assert!(inner_product_map(&f, &zero).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integral_of_ones() {
        let p = InnerProductMap::from_values(3, 3, vec![1.0; 9]).unwrap();
        let i = integral_image(&p);
        assert_eq!(i.values, [1., 1., 1., 1., 2., 2., 1., 2., 3.]);
        let z = integral_image(&InnerProductMap::from_values(2, 3, vec![0.0; 6]).unwrap());
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn integral_single_spike() {
        let mut values = vec![0.0; 16];
        values[4 + 1] = 5.0;
        let i = integral_image(&InnerProductMap::from_values(4, 4, values).unwrap());
        for u in 0..4 {
            for v in 0..4 {
                let on_diagonal = u == v && u >= 1;
                assert_eq!(i.get(u, v), if on_diagonal { 5.0 } else { 0.0 }, "({u},{v})");
            }
        }
    }

    #[test]
    fn fast_small_example() {
        let spec = SamplingSpec::new(2, 2, 1, 1, 1).unwrap();
        let phi = CondensedFilter::new(spec, vec![1., 2., 3.]).unwrap();
        let g = conv_fast(&signal(&[1., 1., 1.]), &phi).unwrap();
        assert_eq!(g.values(), [3., 5., 3., 5., 1., 2.]);
    }

    #[test]
    fn fast_matches_naive_conventional_layout() {
        let spec = SamplingSpec::conventional(3, 2, 2).unwrap();
        let phi = CondensedFilter::new(spec, (0..12).map(|v| v as f64 * 0.5 - 2.0).collect()).unwrap();
        let f = FeatureMap::new(6, 2, (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let fast = conv_fast(&f, &phi).unwrap();
        let naive = conv_naive(&f, &sample_filters(&phi), 1, Padding::Same).unwrap();
        for (a, b) in fast.values().iter().zip(naive.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_identity_and_zero() {
        let f = FeatureMap::new(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let eye = PointwiseWeights {
            in_channels: 2,
            out_channels: 2,
            values: vec![1., 0., 0., 1.],
        };
        assert_eq!(pointwise_conv(&f, &eye).unwrap(), f);
        let zero = PointwiseWeights {
            in_channels: 2,
            out_channels: 3,
            values: vec![0.0; 6],
        };
        assert!(pointwise_conv(&f, &zero).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(pointwise_conv(&FeatureMap::zeros(3, 3), &eye).is_err());
    }
}
