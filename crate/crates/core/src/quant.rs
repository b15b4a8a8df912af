//! 8-bit weight quantization with per-block min-max codebooks.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const LEVELS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    codes: Vec<u8>,
    codebook: Vec<f64>,
}

impl QuantizedBlock {
    /// Rebuilds a block from stored parts, checking the codebook.
    pub fn from_parts(codes: Vec<u8>, codebook: Vec<f64>) -> Result<Self> {
        if codebook.len() != LEVELS
            || codebook.iter().any(|v| !v.is_finite())
            || codebook.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Codebook);
        }
        Ok(QuantizedBlock { codes, codebook })
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn codebook(&self) -> &[f64] {
        &self.codebook
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Bin width `(max - min) / 255`.
    pub fn step(&self) -> f64 {
        (self.codebook[LEVELS - 1] - self.codebook[0]) / (LEVELS - 1) as f64
    }
}

/// Uniform min-max binning into 256 levels.
pub fn quantize(values: &[f64]) -> Result<QuantizedBlock> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "weights" });
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max == min {
        let level = if values.is_empty() { 0.0 } else { min };
        return Ok(QuantizedBlock {
            codes: alloc::vec![0; values.len()],
            codebook: alloc::vec![level; LEVELS],
        });
    }
    let top = (LEVELS - 1) as f64;
    let step = (max - min) / top;
    let mut codebook: Vec<f64> = (0..LEVELS).map(|k| min + k as f64 * step).collect();
    codebook[LEVELS - 1] = max;
    let codes = values
        .iter()
        .map(|&w| {
            let k = libm::round((w - min) / step).clamp(0.0, top) as usize;
            // settle rounding ties against the stored levels
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(LEVELS - 1);
            (lo..=hi)
                .min_by(|&a, &b| (w - codebook[a]).abs().total_cmp(&(w - codebook[b]).abs()))
                .unwrap_or(k) as u8
        })
        .collect();
    Ok(QuantizedBlock { codes, codebook })
}

pub fn dequantize(block: &QuantizedBlock) -> Vec<f64> {
    block.codes.iter().map(|&c| block.codebook[c as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn endpoints_exact() {
        let q = quantize(&[0.0, 1.0]).unwrap();
        assert_eq!(q.codes(), &[0, 255]);
        assert_eq!(dequantize(&q), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_block() {
        let q = quantize(&[0.7; 5]).unwrap();
        assert!(q.codes().iter().all(|&c| c == 0));
        assert_eq!(dequantize(&q), vec![0.7; 5]);
    }

    #[test]
    fn empty_block() {
        let q = quantize(&[]).unwrap();
        assert!(q.is_empty());
        assert_eq!(q.codebook().len(), LEVELS);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(quantize(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn codebook_must_be_sorted() {
        let mut book = vec![0.0; LEVELS];
        book[3] = -1.0;
        assert_eq!(QuantizedBlock::from_parts(vec![0], book), Err(Error::Codebook));
        assert_eq!(QuantizedBlock::from_parts(vec![0], vec![0.0; 4]), Err(Error::Codebook));
    }
}
