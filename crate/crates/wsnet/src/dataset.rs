//! `WSDS0001` datasets and the synthetic tone corpus.
//!
//! Header: magic, then u32 clip count, u32 clip length `T`, u32 class count.
//! Each clip is a u32 label followed by `T` float32 samples. Little-endian.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use wsnet_core::conv::FeatureMap;
use wsnet_core::nn::Clip;

use crate::error::{Error, FormatError, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"WSDS0001";
pub const HEADER_BYTES: u64 = 8 + 3 * 4;

/// Relative amplitude of the second harmonic.
pub const HARMONIC: f64 = 0.5;
pub const NOISE_STD: f64 = 0.1;
/// Fundamental of the highest class, in cycles per sample.
pub const TOP_FREQ: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub len: usize,
    pub classes: usize,
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn new(len: usize, classes: usize, clips: Vec<Clip>) -> Result<Dataset> {
        for (i, c) in clips.iter().enumerate() {
            if c.input.len() != len || c.input.channels() != 1 {
                return Err(FormatError::Size {
                    what: "clip samples",
                    expected: len as u64,
                    found: (c.input.len() * c.input.channels()) as u64,
                }
                .into());
            }
            if c.label >= classes {
                return Err(FormatError::Label {
                    clip: i,
                    label: c.label as u32,
                    classes: classes as u32,
                }
                .into());
            }
        }
        Ok(Dataset { len, classes, clips })
    }

    pub fn encoded_len(&self) -> u64 {
        HEADER_BYTES + self.clips.len() as u64 * (4 + 4 * self.len as u64)
    }

    /// Samples are narrowed to f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len() as usize);
        out.extend_from_slice(DATASET_MAGIC);
        for v in [self.clips.len(), self.len, self.classes] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for c in &self.clips {
            out.extend_from_slice(&(c.label as u32).to_le_bytes());
            for &x in c.input.values() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        if bytes.len() < 8 || &bytes[..8] != DATASET_MAGIC {
            return Err(FormatError::BadMagic { expected: "WSDS0001" }.into());
        }
        if (bytes.len() as u64) < HEADER_BYTES {
            return Err(FormatError::Truncated { what: "dataset header" }.into());
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let (count, len, classes) = (word(8) as u64, word(12) as u64, word(16));
        let expected = HEADER_BYTES + count * (4 + 4 * len);
        if bytes.len() as u64 != expected {
            return Err(FormatError::Size {
                what: "dataset file",
                expected,
                found: bytes.len() as u64,
            }
            .into());
        }
        let stride = 4 + 4 * len as usize;
        let mut clips = Vec::with_capacity(count as usize);
        for (i, rec) in bytes[HEADER_BYTES as usize..].chunks_exact(stride).enumerate() {
            let label = u32::from_le_bytes(rec[..4].try_into().unwrap());
            if label >= classes {
                return Err(FormatError::Label { clip: i, label, classes }.into());
            }
            let samples = rec[4..]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            clips.push(Clip {
                input: FeatureMap::from_signal(samples)?,
                label: label as usize,
            });
        }
        Ok(Dataset {
            len: len as usize,
            classes: classes as usize,
            clips,
        })
    }

    /// Splits off the trailing `fraction` of clips as a held-out set.
    pub fn split_holdout(&self, fraction: f64) -> (Dataset, Dataset) {
        let held = ((self.clips.len() as f64) * fraction).round() as usize;
        let cut = self.clips.len() - held.min(self.clips.len());
        let part = |clips: &[Clip]| Dataset {
            len: self.len,
            classes: self.classes,
            clips: clips.to_vec(),
        };
        (part(&self.clips[..cut]), part(&self.clips[cut..]))
    }
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, data.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_bytes(&bytes)
}

/// Fundamental frequency of class `k`; classes sit one octave apart with
/// the highest at [`TOP_FREQ`].
pub fn class_frequency(k: usize, classes: usize) -> f64 {
    TOP_FREQ / 2f64.powi((classes - 1 - k) as i32)
}

/// Tones with one harmonic in Gaussian noise, peak-normalized to [-1, 1].
/// Clips cycle through the classes so any contiguous tail is balanced.
pub fn synth_dataset(classes: usize, per_class: usize, len: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Usage("synthetic data needs at least 2 classes".into()));
    }
    if len < 64 {
        return Err(Error::Usage("synthetic clips need at least 64 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let mut clips = Vec::with_capacity(classes * per_class);
    for i in 0..classes * per_class {
        let label = i % classes;
        let f = class_frequency(label, classes);
        let (p1, p2): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
        let mut x: Vec<f64> = (0..len)
            .map(|t| {
                let t = t as f64;
                (TAU * f * t + p1).sin() + HARMONIC * (2.0 * TAU * f * t + p2).sin() + noise.sample(&mut rng)
            })
            .collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // round through f32 so the in-memory set equals what a file holds
        x.iter_mut().for_each(|v| *v = f64::from((*v / peak) as f32));
        clips.push(Clip {
            input: FeatureMap::from_signal(x)?,
            label,
        });
    }
    Dataset::new(len, classes, clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Labels a clip by the class whose fundamental has the most DFT energy.
    fn dft_label(x: &[f64], classes: usize) -> usize {
        let power = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = TAU * f * t as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            re * re + im * im
        };
        // scan a band around each fundamental, spectral leakage included
        (0..classes)
            .map(|k| {
                let f = class_frequency(k, classes);
                let bins = (-3..=3).map(|d| f + d as f64 / x.len() as f64);
                bins.map(power).fold(0.0, f64::max)
            })
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    #[test]
    fn balanced_and_deterministic() {
        let a = synth_dataset(3, 5, 128, 9).unwrap();
        for k in 0..3 {
            assert_eq!(a.clips.iter().filter(|c| c.label == k).count(), 5);
        }
        let b = synth_dataset(3, 5, 128, 9).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), synth_dataset(3, 5, 128, 10).unwrap().to_bytes());
    }

    #[test]
    fn samples_are_normalized() {
        let d = synth_dataset(4, 3, 256, 1).unwrap();
        for c in &d.clips {
            let peak = c.input.max_abs();
            assert!((peak - 1.0).abs() < 1e-6, "{peak}");
        }
    }

    #[test]
    fn spectral_peak_recovers_labels() {
        let d = synth_dataset(4, 50, 1024, 0).unwrap();
        let hits = d.clips.iter().filter(|c| dft_label(c.input.values(), 4) == c.label).count();
        assert!(hits as f64 >= 0.99 * d.clips.len() as f64, "{hits}");
    }

    #[test]
    fn round_trip_and_size() {
        let d = synth_dataset(2, 4, 64, 3).unwrap();
        let bytes = d.to_bytes();
        assert_eq!(bytes.len() as u64, HEADER_BYTES + 8 * (4 + 4 * 64));
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn bad_label_and_size() {
        let d = synth_dataset(2, 2, 64, 3).unwrap();
        let mut bytes = d.to_bytes();
        bytes[HEADER_BYTES as usize] = 7;
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(FormatError::Label { label: 7, .. }))));
        let bytes = d.to_bytes();
        assert!(matches!(
            Dataset::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(FormatError::Size { .. }))
        ));
        assert!(matches!(Dataset::from_bytes(b"WSNET001"), Err(Error::Format(FormatError::BadMagic { .. }))));
    }

    #[test]
    fn holdout_is_the_tail() {
        let d = synth_dataset(4, 8, 64, 0).unwrap();
        let (train, held) = d.split_holdout(0.25);
        assert_eq!((train.clips.len(), held.clips.len()), (24, 8));
        assert_eq!(held.clips[0], d.clips[24]);
        for k in 0..4 {
            assert_eq!(held.clips.iter().filter(|c| c.label == k).count(), 2);
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(synth_dataset(1, 5, 128, 0).is_err());
        assert!(synth_dataset(2, 5, 32, 0).is_err());
    }
}
