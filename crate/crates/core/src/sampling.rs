//! Condensed-filter geometry.
//!
//! A weight-sampled layer owns a single condensed filter `phi` of shape
//! `(condensed_len, condensed_channels)`. Its `N` convolution filters are
//! windows of length `L` taken from `phi` every `S` rows, and each filter's
//! `M` input channels tile the condensed channels `C` times:
//!
//! ```text
//! K[l, m, n] = phi[n * S + l, m mod M*]
//! ```
//!
//! Denser sampling takes `N * D` windows at stride `S / D` and relies on a
//! trailing 1x1 convolution to reduce back to `N` output channels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    /// Output length `ceil(T / stride)`; `floor((L-1)/2)` zeros on the left,
    /// the remainder on the right.
    #[default]
    Same,
    /// No padding; output length `floor((T - L) / stride) + 1`.
    Valid,
}

impl Padding {
    /// Zero rows added before and after an input for a filter of length `filter_len`.
    pub fn amounts(self, filter_len: usize) -> (usize, usize) {
        match self {
            Padding::Same => {
                let left = (filter_len - 1) / 2;
                (left, filter_len - 1 - left)
            }
            Padding::Valid => (0, 0),
        }
    }

    pub fn output_len(self, len: usize, filter_len: usize, stride: usize) -> Result<usize> {
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        match self {
            Padding::Same => Ok(len.div_ceil(stride)),
            Padding::Valid => {
                if len < filter_len {
                    return Err(Error::InputTooShort { len, filter_len });
                }
                Ok((len - filter_len) / stride + 1)
            }
        }
    }
}

/// Geometry tying a condensed filter to the filter bank sampled from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamplingSpec {
    filter_len: usize,
    filters: usize,
    stride: usize,
    channel_factor: usize,
    in_channels: usize,
    conv_stride: usize,
    denser: usize,
    padding: Padding,
}

impl SamplingSpec {
    /// Spatial/channel sampling geometry with unit convolution stride, same
    /// padding and no denser sampling.
    pub fn new(
        filter_len: usize,
        filters: usize,
        stride: usize,
        channel_factor: usize,
        in_channels: usize,
    ) -> Result<Self> {
        for (value, what) in [
            (filter_len, "filter length"),
            (filters, "filter count"),
            (stride, "sampling stride"),
            (channel_factor, "channel factor"),
            (in_channels, "input channels"),
        ] {
            if value == 0 {
                return Err(Error::ZeroDimension { what });
            }
        }
        if stride > filter_len {
            return Err(Error::StrideExceedsFilter { stride, filter_len });
        }
        if in_channels % channel_factor != 0 {
            return Err(Error::ChannelFactor {
                channels: in_channels,
                factor: channel_factor,
            });
        }
        Ok(SamplingSpec {
            filter_len,
            filters,
            stride,
            channel_factor,
            in_channels,
            conv_stride: 1,
            denser: 1,
            padding: Padding::Same,
        })
    }

    /// A layer whose filters do not share weights (`S = L`, `C = 1`).
    pub fn conventional(filter_len: usize, filters: usize, in_channels: usize) -> Result<Self> {
        Self::new(filter_len, filters, filter_len, 1, in_channels)
    }

    pub fn with_conv_stride(mut self, conv_stride: usize) -> Result<Self> {
        if conv_stride == 0 {
            return Err(Error::ZeroDimension {
                what: "convolution stride",
            });
        }
        self.conv_stride = conv_stride;
        Ok(self)
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    /// Denser sampling: `N * D` windows at stride `S / D`. `D = 1` is the identity.
    pub fn denser(mut self, denser: usize) -> Result<Self> {
        if denser == 0 {
            return Err(Error::ZeroDimension {
                what: "denser factor",
            });
        }
        if self.stride % denser != 0 {
            return Err(Error::DenserFactor {
                stride: self.stride,
                denser,
            });
        }
        self.denser = denser;
        Ok(self)
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    /// Output filters of the layer (after any 1x1 reduction).
    pub fn filters(&self) -> usize {
        self.filters
    }

    /// Nominal sampling stride `S`.
    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn channel_factor(&self) -> usize {
        self.channel_factor
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn conv_stride(&self) -> usize {
        self.conv_stride
    }

    pub fn denser_factor(&self) -> usize {
        self.denser
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    /// Stride between consecutive sampled windows, `S / D`.
    pub fn sample_stride(&self) -> usize {
        self.stride / self.denser
    }

    /// Number of filters sampled from the condensed filter, `N * D`.
    pub fn sampled_filters(&self) -> usize {
        self.filters * self.denser
    }

    pub fn condensed_len(&self) -> usize {
        self.filter_len + (self.sampled_filters() - 1) * self.sample_stride()
    }

    pub fn condensed_channels(&self) -> usize {
        self.in_channels / self.channel_factor
    }

    pub fn condensed_params(&self) -> usize {
        self.condensed_len() * self.condensed_channels()
    }

    /// Shape `(1, N*D, N)` of the trailing 1x1 reduction, present only when `D > 1`.
    pub fn reduction_shape(&self) -> Option<(usize, usize, usize)> {
        (self.denser > 1).then(|| (1, self.sampled_filters(), self.filters))
    }

    /// `L*M*N`: parameter count of the equivalent conventional layer.
    pub fn dense_params(&self) -> usize {
        self.filter_len * self.in_channels * self.filters
    }

    /// Condensed parameters plus the 1x1 reduction weights.
    pub fn params(&self) -> usize {
        self.condensed_params() + self.reduction_shape().map_or(0, |(_, a, b)| a * b)
    }

    /// True when filters share weights in any way.
    pub fn is_condensed(&self) -> bool {
        self.stride < self.filter_len || self.channel_factor > 1 || self.denser > 1
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        self.padding.output_len(len, self.filter_len, self.conv_stride)
    }
}

/// Compactness `L*M*N / (L* * M*)` of a layer.
pub fn compactness(spec: &SamplingSpec) -> f64 {
    spec.dense_params() as f64 / spec.condensed_params() as f64
}

/// The learnable block of a weight-sampled layer. Row-major `(L*, M*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedFilter {
    spec: SamplingSpec,
    values: Vec<f64>,
}

impl CondensedFilter {
    pub fn new(spec: SamplingSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.condensed_params() {
            return Err(Error::ShapeMismatch {
                what: "condensed filter size",
                expected: spec.condensed_params(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "condensed filter",
            });
        }
        Ok(CondensedFilter { spec, values })
    }

    pub fn zeros(spec: SamplingSpec) -> Self {
        CondensedFilter {
            spec,
            values: vec![0.0; spec.condensed_params()],
        }
    }

    pub fn spec(&self) -> &SamplingSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.condensed_channels() + j]
    }

    /// Row `i` of the condensed filter (all condensed channels).
    pub fn row(&self, i: usize) -> &[f64] {
        let mc = self.spec.condensed_channels();
        &self.values[i * mc..(i + 1) * mc]
    }
}

/// Filter bank `K` of shape `(L, M, N)`, stored with the filter index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filter_len: usize,
    channels: usize,
    filters: usize,
    values: Vec<f64>,
}

impl FilterBank {
    pub fn new(filter_len: usize, channels: usize, filters: usize, values: Vec<f64>) -> Result<Self> {
        let expected = filter_len * channels * filters;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "filter bank size",
                expected,
                found: values.len(),
            });
        }
        Ok(FilterBank {
            filter_len,
            channels,
            filters,
            values,
        })
    }

    pub fn zeros(filter_len: usize, channels: usize, filters: usize) -> Self {
        FilterBank {
            filter_len,
            channels,
            filters,
            values: vec![0.0; filter_len * channels * filters],
        }
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index(&self, l: usize, m: usize, n: usize) -> usize {
        (l * self.channels + m) * self.filters + n
    }

    pub fn get(&self, l: usize, m: usize, n: usize) -> f64 {
        self.values[self.index(l, m, n)]
    }

    /// The `N` weights at tap `(l, m)`.
    pub fn tap(&self, l: usize, m: usize) -> &[f64] {
        let start = (l * self.channels + m) * self.filters;
        &self.values[start..start + self.filters]
    }
}

/// Materializes the filter bank sampled from `phi`: `(L, M, N*D)`.
pub fn sample_filters(phi: &CondensedFilter) -> FilterBank {
    let spec = phi.spec();
    let (len, channels, count) = (spec.filter_len(), spec.in_channels(), spec.sampled_filters());
    let mc = spec.condensed_channels();
    let step = spec.sample_stride();
    let mut values = Vec::with_capacity(len * channels * count);
    for l in 0..len {
        for m in 0..channels {
            let j = m % mc;
            values.extend((0..count).map(|n| phi.get(n * step + l, j)));
        }
    }
    FilterBank {
        filter_len: len,
        channels,
        filters: count,
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelIndex {
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

/// For each condensed weight `(i, j)`, the kernel entries tied to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionMap {
    kernel_shape: (usize, usize, usize),
    condensed_len: usize,
    condensed_channels: usize,
    offsets: Vec<usize>,
    entries: Vec<KernelIndex>,
}

impl PositionMap {
    /// `(L, M, N*D)` of the tied filter bank.
    pub fn kernel_shape(&self) -> (usize, usize, usize) {
        self.kernel_shape
    }

    pub fn condensed_len(&self) -> usize {
        self.condensed_len
    }

    pub fn condensed_channels(&self) -> usize {
        self.condensed_channels
    }

    pub fn cell(&self, i: usize, j: usize) -> &[KernelIndex] {
        let c = i * self.condensed_channels + j;
        &self.entries[self.offsets[c]..self.offsets[c + 1]]
    }

    /// Total number of tied kernel entries, `L*M*N*D`.
    pub fn total(&self) -> usize {
        self.entries.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), &[KernelIndex])> + '_ {
        (0..self.condensed_len)
            .flat_map(move |i| (0..self.condensed_channels).map(move |j| (i, j)))
            .map(move |(i, j)| ((i, j), self.cell(i, j)))
    }
}

pub fn position_map(spec: &SamplingSpec) -> PositionMap {
    let (len, channels, count) = (spec.filter_len(), spec.in_channels(), spec.sampled_filters());
    let mc = spec.condensed_channels();
    let step = spec.sample_stride();
    let cells = spec.condensed_len() * mc;
    let cell_of = |k: &KernelIndex| (k.n * step + k.l) * mc + k.m % mc;

    let mut counts = vec![0usize; cells + 1];
    for n in 0..count {
        for l in 0..len {
            for m in 0..channels {
                counts[cell_of(&KernelIndex { l, m, n }) + 1] += 1;
            }
        }
    }
    for c in 0..cells {
        counts[c + 1] += counts[c];
    }
    let offsets = counts.clone();
    let mut cursor = counts;
    let mut entries = vec![KernelIndex { l: 0, m: 0, n: 0 }; len * channels * count];
    for n in 0..count {
        for l in 0..len {
            for m in 0..channels {
                let k = KernelIndex { l, m, n };
                let c = cell_of(&k);
                entries[cursor[c]] = k;
                cursor[c] += 1;
            }
        }
    }
    PositionMap {
        kernel_shape: (len, channels, count),
        condensed_len: spec.condensed_len(),
        condensed_channels: mc,
        offsets,
        entries,
    }
}

/// Geometry of a weight-sampled fully-connected layer: the weights are a
/// flattened single-channel vector sampled with window `n_in` and stride `S`.
pub fn fc_spec(n_in: usize, n_out: usize, stride: usize) -> Result<SamplingSpec> {
    SamplingSpec::new(n_in, n_out, stride, 1, 1).map(|s| s.with_padding(Padding::Valid))
}

/// Weight matrix `(n_in, n_out)`, row-major, whose column `k` is
/// `phi[k*S .. k*S + n_in]`.
pub fn sample_fc(phi: &[f64], n_in: usize, n_out: usize, stride: usize) -> Result<Vec<f64>> {
    let spec = fc_spec(n_in, n_out, stride)?;
    let phi = CondensedFilter::new(spec, phi.to_vec())?;
    Ok(sample_filters(&phi).values)
}

/// Geometry of 2D weight sampling: filters are `(w, h)` patches taken on a
/// `G x G` grid (`G = ceil(sqrt(N))`) from a `(W, H, M*)` condensed filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingSpec2D {
    width: usize,
    height: usize,
    filters: usize,
    stride_w: usize,
    stride_h: usize,
    channel_factor: usize,
    in_channels: usize,
}

impl SamplingSpec2D {
    pub fn new(
        (width, height): (usize, usize),
        filters: usize,
        (stride_w, stride_h): (usize, usize),
        channel_factor: usize,
        in_channels: usize,
    ) -> Result<Self> {
        for (value, what) in [
            (width, "filter width"),
            (height, "filter height"),
            (filters, "filter count"),
            (stride_w, "sampling stride"),
            (stride_h, "sampling stride"),
            (channel_factor, "channel factor"),
            (in_channels, "input channels"),
        ] {
            if value == 0 {
                return Err(Error::ZeroDimension { what });
            }
        }
        if stride_w > width {
            return Err(Error::StrideExceedsFilter {
                stride: stride_w,
                filter_len: width,
            });
        }
        if stride_h > height {
            return Err(Error::StrideExceedsFilter {
                stride: stride_h,
                filter_len: height,
            });
        }
        if in_channels % channel_factor != 0 {
            return Err(Error::ChannelFactor {
                channels: in_channels,
                factor: channel_factor,
            });
        }
        Ok(SamplingSpec2D {
            width,
            height,
            filters,
            stride_w,
            stride_h,
            channel_factor,
            in_channels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn channel_factor(&self) -> usize {
        self.channel_factor
    }

    /// Side of the sampling grid, `ceil(sqrt(N))`.
    pub fn grid(&self) -> usize {
        let mut g = 1;
        while g * g < self.filters {
            g += 1;
        }
        g
    }

    pub fn condensed_width(&self) -> usize {
        self.width + (self.grid() - 1) * self.stride_w
    }

    pub fn condensed_height(&self) -> usize {
        self.height + (self.grid() - 1) * self.stride_h
    }

    pub fn condensed_channels(&self) -> usize {
        self.in_channels / self.channel_factor
    }

    pub fn condensed_params(&self) -> usize {
        self.condensed_width() * self.condensed_height() * self.condensed_channels()
    }

    /// Patch origin `(x, y)` of filter `n`: grid cell `(n / G, n % G)` in
    /// row-major order, the row stepping along height.
    pub fn origin(&self, n: usize) -> (usize, usize) {
        let g = self.grid();
        let (row, col) = (n / g, n % g);
        (col * self.stride_w, row * self.stride_h)
    }
}

/// 2D filter bank `(w, h, M, N)`, filter index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank2D {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub filters: usize,
    pub values: Vec<f64>,
}

impl FilterBank2D {
    pub fn get(&self, x: usize, y: usize, m: usize, n: usize) -> f64 {
        self.values[((x * self.height + y) * self.channels + m) * self.filters + n]
    }
}

/// Samples the 2D filter bank from `phi`, laid out `(W, H, M*)` row-major.
pub fn sample_filters_2d(phi: &[f64], spec: &SamplingSpec2D) -> Result<FilterBank2D> {
    if phi.len() != spec.condensed_params() {
        return Err(Error::ShapeMismatch {
            what: "2D condensed filter size",
            expected: spec.condensed_params(),
            found: phi.len(),
        });
    }
    let (w, h, m, count) = (spec.width, spec.height, spec.in_channels, spec.filters);
    let (ch, mc) = (spec.condensed_height(), spec.condensed_channels());
    let origins: Vec<(usize, usize)> = (0..count).map(|n| spec.origin(n)).collect();
    let mut values = Vec::with_capacity(w * h * m * count);
    for x in 0..w {
        for y in 0..h {
            for c in 0..m {
                let j = c % mc;
                values.extend(
                    origins
                        .iter()
                        .map(|&(x0, y0)| phi[((x0 + x) * ch + (y0 + y)) * mc + j]),
                );
            }
        }
    }
    Ok(FilterBank2D {
        width: w,
        height: h,
        channels: m,
        filters: count,
        values,
    })
}
