//! Layer-list description of a network and its shape propagation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sampling::{fc_spec, Padding, SamplingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Fc,
}

/// One conv or fc layer plus the auxiliary layers that follow it
/// (ReLU unless last, then batch norm, max-pool and dropout when enabled).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Filter length `L`. For fc layers, when present, must equal the flattened input size.
    pub filter_len: Option<usize>,
    /// Filter count `N` (output units for fc).
    pub filters: usize,
    /// Sampling stride `S`; absent means no spatial sharing.
    pub sample_stride: Option<usize>,
    pub channel_factor: usize,
    pub denser: usize,
    pub conv_stride: usize,
    pub padding: Padding,
    pub batch_norm: bool,
    pub pool_kernel: Option<usize>,
    pub dropout_keep: f64,
}

impl LayerSpec {
    pub fn conv(name: impl Into<String>, filter_len: usize, filters: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv,
            filter_len: Some(filter_len),
            filters,
            sample_stride: None,
            channel_factor: 1,
            denser: 1,
            conv_stride: 1,
            padding: Padding::Same,
            batch_norm: false,
            pool_kernel: None,
            dropout_keep: 1.0,
        }
    }

    pub fn fc(name: impl Into<String>, filters: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Fc,
            filter_len: None,
            ..LayerSpec::conv(name, 1, filters)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_len: usize,
    pub input_channels: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// A layer with every shape resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedLayer {
    pub name: String,
    pub kind: LayerKind,
    pub sampling: SamplingSpec,
    pub len_in: usize,
    pub channels_in: usize,
    /// Length after the conv/fc itself.
    pub len_out: usize,
    /// Length after the optional pooling layer.
    pub len_pooled: usize,
    pub channels_out: usize,
    pub relu: bool,
    pub batch_norm: bool,
    pub pool_kernel: Option<usize>,
    pub dropout_keep: f64,
}

/// Output length of a stride-2 max-pool with same-style padding.
pub fn pooled_len(len: usize) -> usize {
    len.div_ceil(2)
}

impl NetworkSpec {
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        self.resolve_with_len(self.input_len)
    }

    /// Resolves shapes for an input of `input_len` positions.
    pub fn resolve_with_len(&self, input_len: usize) -> Result<Vec<ResolvedLayer>> {
        if self.layers.is_empty() {
            return Err(Error::ZeroDimension { what: "layer count" });
        }
        if input_len == 0 || self.input_channels == 0 {
            return Err(Error::EmptyInput);
        }
        let mut len = input_len;
        let mut channels = self.input_channels;
        let last = self.layers.len() - 1;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let resolved = resolve_layer(layer, len, channels, i != last).map_err(|e| e.in_layer(&layer.name))?;
            len = resolved.len_pooled;
            channels = resolved.channels_out;
            out.push(resolved);
        }
        Ok(out)
    }
}

fn resolve_layer(layer: &LayerSpec, len: usize, channels: usize, relu: bool) -> Result<ResolvedLayer> {
    if !(layer.dropout_keep > 0.0 && layer.dropout_keep <= 1.0) {
        return Err(Error::Hyper("dropout keep probability must lie in (0, 1]"));
    }
    if layer.pool_kernel == Some(0) {
        return Err(Error::ZeroDimension { what: "pool kernel" });
    }
    let (sampling, len_out, channels_out) = match layer.kind {
        LayerKind::Conv => {
            let filter_len = layer.filter_len.ok_or(Error::ZeroDimension {
                what: "filter length",
            })?;
            let spec = SamplingSpec::new(
                filter_len,
                layer.filters,
                layer.sample_stride.unwrap_or(filter_len),
                layer.channel_factor,
                channels,
            )?
            .with_conv_stride(layer.conv_stride)?
            .with_padding(layer.padding)
            .denser(layer.denser)?;
            let len_out = spec.output_len(len)?;
            (spec, len_out, layer.filters)
        }
        LayerKind::Fc => {
            let n_in = len * channels;
            if let Some(l) = layer.filter_len {
                if l != n_in {
                    return Err(Error::ShapeMismatch {
                        what: "fc input size",
                        expected: l,
                        found: n_in,
                    });
                }
            }
            if layer.channel_factor != 1 || layer.denser != 1 || layer.conv_stride != 1 {
                return Err(Error::Hyper("fc layers take only a sampling stride"));
            }
            if layer.pool_kernel.is_some() {
                return Err(Error::Hyper("fc layers cannot be pooled"));
            }
            let spec = fc_spec(n_in, layer.filters, layer.sample_stride.unwrap_or(n_in))?;
            (spec, 1, layer.filters)
        }
    };
    let len_pooled = if layer.pool_kernel.is_some() {
        pooled_len(len_out)
    } else {
        len_out
    };
    Ok(ResolvedLayer {
        name: layer.name.clone(),
        kind: layer.kind,
        sampling,
        len_in: len,
        channels_in: channels,
        len_out,
        len_pooled,
        channels_out,
        relu,
        batch_norm: layer.batch_norm,
        pool_kernel: layer.pool_kernel,
        dropout_keep: layer.dropout_keep,
    })
}
