//! Parameter and multiply-add accounting.

use alloc::string::String;
use alloc::vec::Vec;

use crate::arch::{LayerKind, NetworkSpec};
use crate::conv::fast_op_counts;
use crate::error::{Error, Result};
use crate::sampling::{compactness, SamplingSpec};

/// Bytes per stored codebook (256 single-precision entries).
pub const CODEBOOK_BYTES: u64 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub name: String,
    pub len_in: usize,
    pub len_out: usize,
    /// Stored weights: condensed filter plus any 1x1 reduction.
    pub params: u64,
    /// `L*M*N` of the conventional layer with the same geometry.
    pub dense_params: u64,
    /// Direct convolution over the materialized filters, `T_out*M*L*N*D`,
    /// plus the 1x1 reduction when present.
    pub multadds_naive: u64,
    /// Integral-image pipeline plus the 1x1 reduction; condensed layers only.
    pub multadds_fast: Option<u64>,
    pub compactness: f64,
    /// `multadds_naive / multadds_fast`.
    pub speedup: Option<f64>,
    /// Number of stored weight tensors.
    pub weight_blocks: u64,
}

impl LayerCost {
    /// Mult-adds of the cheaper applicable path.
    pub fn multadds(&self) -> u64 {
        self.multadds_fast.map_or(self.multadds_naive, |f| f.min(self.multadds_naive))
    }
}

fn pointwise_cost(spec: &SamplingSpec, len_out: usize) -> u64 {
    spec.reduction_shape()
        .map_or(0, |(_, a, b)| (len_out * a * b) as u64)
}

/// Cost of evaluating the layer with materialized filters.
pub fn layer_cost_naive(spec: &SamplingSpec, len_in: usize) -> Result<LayerCost> {
    let len_out = spec.output_len(len_in)?;
    let direct = (len_out * spec.in_channels() * spec.filter_len() * spec.sampled_filters()) as u64;
    let params = if spec.is_condensed() {
        spec.params()
    } else {
        spec.dense_params()
    } as u64;
    Ok(LayerCost {
        name: String::new(),
        len_in,
        len_out,
        params,
        dense_params: spec.dense_params() as u64,
        multadds_naive: direct + pointwise_cost(spec, len_out),
        multadds_fast: None,
        compactness: compactness(spec),
        speedup: None,
        weight_blocks: 1 + spec.reduction_shape().is_some() as u64,
    })
}

/// Cost of a condensed layer with both paths filled in.
pub fn layer_cost_fast(spec: &SamplingSpec, len_in: usize) -> Result<LayerCost> {
    if !spec.is_condensed() {
        return Err(Error::NotCondensed);
    }
    let mut cost = layer_cost_naive(spec, len_in)?;
    let fast = fast_op_counts(spec, len_in)?.fast_total() + pointwise_cost(spec, cost.len_out);
    cost.multadds_fast = Some(fast);
    cost.speedup = Some(cost.multadds_naive as f64 / fast as f64);
    Ok(cost)
}

/// Ratio of naive to fast mult-adds for a condensed layer.
pub fn speedup(spec: &SamplingSpec, len_in: usize) -> Result<f64> {
    layer_cost_fast(spec, len_in).map(|c| c.speedup.unwrap_or(1.0))
}

/// Length-independent speedup estimate `MLN / (M*(C + L* - 1) + L* + N)`.
pub fn theoretical_speedup(spec: &SamplingSpec) -> f64 {
    let (m, l, n) = (spec.in_channels() as f64, spec.filter_len() as f64, spec.filters() as f64);
    let mc = spec.condensed_channels() as f64;
    let c = spec.channel_factor() as f64;
    let ls = spec.condensed_len() as f64;
    m * l * n / (mc * (c + ls - 1.0) + ls + n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub params: u64,
    pub dense_params: u64,
    pub multadds: u64,
    pub multadds_naive: u64,
    /// Weights at four bytes each.
    pub float_bytes: u64,
    /// Weights at one byte each plus one codebook per stored tensor.
    pub quantized_bytes: u64,
}

impl CostReport {
    /// `(model size ratio, mult-adds ratio)` of `baseline` over `self`.
    pub fn ratios_against(&self, baseline: &CostReport) -> (f64, f64) {
        (
            baseline.params as f64 / self.params as f64,
            baseline.multadds as f64 / self.multadds as f64,
        )
    }
}

/// Per-layer costs of `net` on an input of `len_in` samples.
pub fn network_report(net: &NetworkSpec, len_in: usize) -> Result<CostReport> {
    let resolved = net.resolve_with_len(len_in)?;
    let mut layers = Vec::with_capacity(resolved.len());
    for r in &resolved {
        let len = match r.kind {
            LayerKind::Conv => r.len_in,
            LayerKind::Fc => r.len_in * r.channels_in,
        };
        let mut cost = if r.sampling.is_condensed() {
            layer_cost_fast(&r.sampling, len)
        } else {
            layer_cost_naive(&r.sampling, len)
        }
        .map_err(|e| e.in_layer(&r.name))?;
        cost.name = r.name.clone();
        layers.push(cost);
    }
    let params = layers.iter().map(|c| c.params).sum();
    let blocks: u64 = layers.iter().map(|c| c.weight_blocks).sum();
    Ok(CostReport {
        params,
        dense_params: layers.iter().map(|c| c.dense_params).sum(),
        multadds: layers.iter().map(LayerCost::multadds).sum(),
        multadds_naive: layers.iter().map(|c| c.multadds_naive).sum(),
        float_bytes: 4 * params,
        quantized_bytes: params + CODEBOOK_BYTES * blocks,
        layers,
    })
}

/// Per-layer `(spatial compactness, channel compactness, denser factor)` targets.
pub type Cell = (usize, usize, usize);

/// One row of the ablation presets for the eight-layer audio baseline.
/// Cells cover conv1-4, conv5, conv6, conv7 and conv8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub cells: [Cell; 5],
    pub quantized: bool,
    /// Published model-size and mult-adds ratios.
    pub reported: (f64, f64),
}

const fn uniform(s: usize, c: usize) -> [Cell; 5] {
    [(s, c, 1); 5]
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "Baseline", cells: uniform(1, 1), quantized: false, reported: (1.0, 1.0) },
    Preset { name: "BaselineQ4", cells: uniform(1, 1), quantized: true, reported: (4.0, 1.0) },
    Preset { name: "S2", cells: uniform(2, 1), quantized: false, reported: (2.0, 1.0) },
    Preset { name: "S4", cells: uniform(4, 1), quantized: false, reported: (4.0, 1.6) },
    Preset {
        name: "S8",
        cells: [(8, 1, 1), (4, 1, 1), (4, 1, 1), (4, 1, 1), (8, 1, 1)],
        quantized: false,
        reported: (7.0, 4.7),
    },
    Preset { name: "C2", cells: uniform(1, 2), quantized: false, reported: (2.0, 1.0) },
    Preset { name: "C4", cells: uniform(1, 4), quantized: false, reported: (4.0, 1.6) },
    Preset {
        name: "C8",
        cells: [(1, 8, 1), (1, 4, 1), (1, 4, 1), (1, 4, 1), (1, 8, 1)],
        quantized: false,
        reported: (8.0, 2.8),
    },
    Preset { name: "S4C4", cells: uniform(4, 4), quantized: false, reported: (16.0, 6.3) },
    Preset {
        name: "S8C8",
        cells: [(4, 4, 1), (4, 8, 1), (4, 8, 1), (4, 8, 1), (8, 8, 1)],
        quantized: false,
        reported: (60.0, 18.1),
    },
    Preset {
        name: "S8C4D2",
        cells: [(4, 4, 2), (4, 4, 1), (4, 4, 1), (4, 4, 1), (8, 4, 1)],
        quantized: false,
        reported: (25.0, 2.3),
    },
    Preset {
        name: "S8C4D2Q4",
        cells: [(4, 4, 2), (4, 4, 1), (4, 4, 1), (4, 4, 1), (8, 4, 1)],
        quantized: true,
        reported: (100.0, 2.3),
    },
    Preset {
        name: "S8C8D2",
        cells: [(4, 4, 2), (4, 8, 1), (4, 8, 1), (4, 8, 1), (8, 8, 1)],
        quantized: false,
        reported: (45.0, 2.4),
    },
    Preset {
        name: "S8C8D2Q4",
        cells: [(4, 4, 2), (4, 8, 1), (4, 8, 1), (4, 8, 1), (8, 8, 1)],
        quantized: true,
        reported: (180.0, 2.4),
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// A requested factor that had to be reduced to fit the layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clamp {
    pub layer: String,
    pub what: &'static str,
    pub requested: usize,
    pub applied: usize,
}

fn largest_divisor_at_most(n: usize, cap: usize) -> usize {
    (1..=cap.min(n)).rev().find(|d| n % d == 0).unwrap_or(1)
}

/// Rewrites an eight-layer conventional network with the sampling factors of
/// `preset`. Spatial compactness `s` becomes sampling stride `L / s`; channel
/// and denser factors shrink to the largest feasible divisor.
pub fn apply_preset(baseline: &NetworkSpec, preset: &Preset) -> Result<(NetworkSpec, Vec<Clamp>)> {
    if baseline.layers.len() != 8 {
        return Err(Error::ShapeMismatch {
            what: "preset layer count",
            expected: 8,
            found: baseline.layers.len(),
        });
    }
    let resolved = baseline.resolve()?;
    let mut out = baseline.clone();
    let mut clamps = Vec::new();
    for (i, (layer, r)) in out.layers.iter_mut().zip(&resolved).enumerate() {
        let (s, c, d) = preset.cells[i.saturating_sub(3)];
        let len = r.sampling.filter_len();
        let channels = r.channels_in;
        let mut note = |what, requested, applied| {
            if requested != applied {
                clamps.push(Clamp {
                    layer: layer.name.clone(),
                    what,
                    requested,
                    applied,
                });
            }
        };
        let s_applied = largest_divisor_at_most(len, s);
        note("spatial compactness", s, s_applied);
        let stride = len / s_applied;
        let c_applied = largest_divisor_at_most(channels, c);
        note("channel compactness", c, c_applied);
        let d_applied = largest_divisor_at_most(stride, d);
        note("denser factor", d, d_applied);
        layer.sample_stride = Some(stride);
        layer.channel_factor = c_applied;
        layer.denser = d_applied;
    }
    out.resolve()?;
    Ok((out, clamps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::LayerSpec;
    use alloc::vec;

    #[test]
    fn unit_layer_costs_output_positions() {
        let spec = SamplingSpec::conventional(1, 1, 1).unwrap();
        let c = layer_cost_naive(&spec, 37).unwrap();
        assert_eq!(c.multadds_naive, 37);
        assert_eq!(c.params, 1);
    }

    #[test]
    fn conventional_layer_has_no_fast_path() {
        let spec = SamplingSpec::conventional(4, 3, 2).unwrap();
        assert_eq!(layer_cost_fast(&spec, 10), Err(Error::NotCondensed));
    }

    #[test]
    fn fast_cost_with_unit_channel_factor() {
        let spec = SamplingSpec::new(8, 16, 2, 1, 3).unwrap();
        let t = 100u64;
        let ls = spec.condensed_len() as u64;
        let c = layer_cost_fast(&spec, 100).unwrap();
        // same padding adds L - 1 integral rows
        assert_eq!(c.multadds_fast, Some(t * 3 * ls + (t + 7) * ls + t * 16));
    }

    #[test]
    fn channel_wrap_is_cheaper() {
        let plain = SamplingSpec::new(8, 16, 2, 1, 8).unwrap();
        let wrapped = SamplingSpec::new(8, 16, 2, 4, 8).unwrap();
        let a = layer_cost_fast(&plain, 500).unwrap().multadds_fast.unwrap();
        let b = layer_cost_fast(&wrapped, 500).unwrap().multadds_fast.unwrap();
        assert!(b < a);
    }

    #[test]
    fn theoretical_speedup_limits() {
        let dense = SamplingSpec::new(8, 4096, 8, 1, 64).unwrap();
        assert!((theoretical_speedup(&dense) - 1.0).abs() < 0.05);
        let shared = SamplingSpec::new(8, 4096, 1, 1, 64).unwrap();
        let r = theoretical_speedup(&shared);
        assert!(r > 7.5 && r < 8.0, "{r}");
    }

    #[test]
    fn report_totals_are_column_sums() {
        let mut conv = LayerSpec::conv("conv1", 8, 4);
        conv.sample_stride = Some(2);
        conv.pool_kernel = Some(2);
        let net = NetworkSpec {
            input_len: 64,
            input_channels: 2,
            classes: 3,
            layers: vec![conv, LayerSpec::fc("fc", 3)],
        };
        let r = network_report(&net, 64).unwrap();
        assert_eq!(r.params, r.layers.iter().map(|c| c.params).sum::<u64>());
        assert_eq!(r.multadds, r.layers.iter().map(|c| c.multadds()).sum::<u64>());
        assert_eq!(r.float_bytes, 4 * r.params);
        assert_eq!(r.quantized_bytes, r.params + 2 * CODEBOOK_BYTES);
    }

    #[test]
    fn preset_clamps_infeasible_channels() {
        let mut layers = Vec::new();
        let mut m = 1;
        for (i, (l, n)) in [(8, 4), (8, 4), (4, 8), (4, 8), (4, 8), (4, 8), (4, 8), (4, 4)].into_iter().enumerate() {
            layers.push(LayerSpec::conv(alloc::format!("conv{}", i + 1), l, n));
            m = n;
        }
        let net = NetworkSpec {
            input_len: 32,
            input_channels: 1,
            classes: m * 32,
            layers,
        };
        let (out, clamps) = apply_preset(&net, preset("s8c8").unwrap()).unwrap();
        assert_eq!(out.layers[0].channel_factor, 1);
        assert_eq!(out.layers[0].sample_stride, Some(2));
        assert!(clamps.iter().any(|c| c.layer == "conv1" && c.what == "channel compactness" && c.applied == 1));
        // conv2 has 4 input channels, conv8 has 8
        assert_eq!(out.layers[1].channel_factor, 4);
        assert_eq!(out.layers[7].channel_factor, 8);
        assert_eq!(out.layers[7].sample_stride, Some(1));
        assert!(clamps.iter().any(|c| c.layer == "conv8" && c.what == "spatial compactness"));
    }
}
