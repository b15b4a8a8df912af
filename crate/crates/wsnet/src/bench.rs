//! Wall-clock comparison of the naive and integral-image convolution paths.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsnet_core::arch::{LayerKind, NetworkSpec};
use wsnet_core::conv::{conv_fast, conv_naive, fast_op_counts, FeatureMap};
use wsnet_core::cost::theoretical_speedup;
use wsnet_core::sampling::{sample_filters, CondensedFilter, SamplingSpec};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub len_in: usize,
    pub naive: Duration,
    pub fast: Duration,
    /// Ratio of analytic mult-add counts, naive over fast.
    pub analytic: f64,
    /// Length-independent estimate from the layer geometry alone.
    pub theoretical: f64,
}

impl BenchRow {
    pub fn measured(&self) -> f64 {
        self.naive.as_secs_f64() / self.fast.as_secs_f64().max(1e-12)
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn time(repeat: usize, mut f: impl FnMut() -> Result<()>) -> Result<Duration> {
    let mut runs = Vec::with_capacity(repeat);
    for _ in 0..repeat.max(1) {
        let start = Instant::now();
        f()?;
        runs.push(start.elapsed());
    }
    Ok(median(runs))
}

/// Times one layer on a random input of `len` samples. The filter bank is
/// materialized before timing starts; 1x1 reductions are left out of both paths.
pub fn bench_spec(name: &str, spec: SamplingSpec, len: usize, repeat: usize, seed: u64) -> Result<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = CondensedFilter::new(spec, (0..spec.condensed_params()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let m = spec.in_channels();
    let input = FeatureMap::new(len, m, (0..len * m).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let bank = sample_filters(&phi);
    let naive = time(repeat, || {
        std::hint::black_box(conv_naive(&input, &bank, spec.conv_stride(), spec.padding())?);
        Ok(())
    })?;
    let fast = time(repeat, || {
        std::hint::black_box(conv_fast(&input, &phi)?);
        Ok(())
    })?;
    let direct = spec.output_len(len)? * m * spec.filter_len() * spec.sampled_filters();
    let fast_ops = fast_op_counts(&spec, len)?.fast_total();
    Ok(BenchRow {
        name: name.to_string(),
        len_in: len,
        naive,
        fast,
        analytic: direct as f64 / fast_ops as f64,
        theoretical: theoretical_speedup(&spec),
    })
}

/// One row per conv layer of `net` at input length `len`.
pub fn bench_network(net: &NetworkSpec, len: usize, repeat: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let resolved = net.resolve_with_len(len)?;
    resolved
        .iter()
        .filter(|r| r.kind == LayerKind::Conv)
        .enumerate()
        .map(|(i, r)| bench_spec(&r.name, r.sampling, r.len_in, repeat, seed.wrapping_add(i as u64)))
        .collect()
}

pub struct BenchTable<'a>(pub &'a [BenchRow]);

impl fmt::Display for BenchTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>9} {:>12} {:>12} {:>9} {:>9} {:>11}",
            "layer", "T_in", "naive_ms", "fast_ms", "measured", "analytic", "theoretical"
        )?;
        for r in self.0 {
            writeln!(
                f,
                "{:<10} {:>9} {:>12.3} {:>12.3} {:>8.2}x {:>8.2}x {:>10.2}x",
                r.name,
                r.len_in,
                r.naive.as_secs_f64() * 1e3,
                r.fast.as_secs_f64() * 1e3,
                r.measured(),
                r.analytic,
                r.theoretical
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_runs_once() {
        let mut calls = 0;
        time(1, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 1);
    }

    #[test]
    fn table_has_theoretical_column() {
        let spec = SamplingSpec::new(8, 16, 1, 1, 2).unwrap();
        let row = bench_spec("conv1", spec, 256, 1, 0).unwrap();
        let text = BenchTable(&[row]).to_string();
        assert!(text.lines().next().unwrap().contains("theoretical"));
        assert_eq!(text.lines().count(), 2);
    }
}
