//! Randomized self-checks: fast path against naive convolution, analytic
//! gradients against central differences, and instrumented op counts against
//! the closed-form formulas.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wsnet_core::conv::{conv_fast_counted, conv_naive, fast_op_counts, FeatureMap, OpCounter, PointwiseWeights};
use wsnet_core::nn::{gradient_check, BatchNorm, ConvPath, GradCheck, Layer, NamedLayer, Network, SampledConv};
use wsnet_core::sampling::{fc_spec, sample_filters, CondensedFilter, Padding, SamplingSpec};

use crate::error::Result;

pub const EQUIV_TOL: f64 = 1e-10;
pub const GRAD_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-3;
/// Denominator floor of the relative gradient error; entries below it are
/// compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-3;

fn describe(s: &SamplingSpec) -> String {
    let pad = match s.padding() {
        Padding::Same => "same",
        Padding::Valid => "valid",
    };
    format!(
        "L={} N={} S={} C={} M={} D={} stride={} {pad}",
        s.filter_len(),
        s.filters(),
        s.stride(),
        s.channel_factor(),
        s.in_channels(),
        s.denser_factor(),
        s.conv_stride()
    )
}

/// A random layer geometry with `L, N, M <= 8`, `C` in {1, 2, 4} dividing `M`,
/// stride 1 or 2, either padding, and any denser factor dividing `S`.
pub fn random_spec(rng: &mut impl Rng) -> SamplingSpec {
    let len = rng.random_range(1..=8);
    let filters = rng.random_range(1..=8);
    let s = rng.random_range(1..=len);
    let c = *[1usize, 2, 4].choose(rng).unwrap();
    let m = c * rng.random_range(1..=8 / c);
    let padding = if rng.random() { Padding::Same } else { Padding::Valid };
    let divisors: Vec<usize> = (1..=s).filter(|d| s % d == 0).collect();
    let d = *divisors.choose(rng).unwrap();
    SamplingSpec::new(len, filters, s, c, m)
        .and_then(|sp| sp.with_conv_stride(rng.random_range(1..=2)))
        .and_then(|sp| sp.with_padding(padding).denser(d))
        .expect("generated spec is feasible")
}

fn uniform(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_input(rng: &mut impl Rng, spec: &SamplingSpec, max_len: usize) -> FeatureMap {
    let t = rng.random_range(spec.filter_len()..=max_len);
    let m = spec.in_channels();
    FeatureMap::new(t, m, uniform(rng, t * m, 1.0)).expect("sized input")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivTrial {
    pub spec: String,
    pub len: usize,
    pub max_abs: f64,
    /// `max |fast - naive| / max |naive|` over the output map.
    pub rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradTrial {
    pub spec: String,
    pub params: usize,
    pub check: GradCheck,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub equivalence: Vec<EquivTrial>,
    pub gradients: Vec<GradTrial>,
}

impl VerifyReport {
    pub fn worst_equivalence(&self) -> f64 {
        self.equivalence.iter().map(|t| t.rel).fold(0.0, f64::max)
    }

    pub fn worst_gradient(&self) -> f64 {
        self.gradients.iter().map(|t| t.check.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst_equivalence() <= EQUIV_TOL && self.worst_gradient() < GRAD_TOL
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.equivalence.iter().enumerate() {
            writeln!(f, "equiv {i:>4}  {:<44} T={:<3} max|fast-naive|={:.3e} rel={:.3e}", t.spec, t.len, t.max_abs, t.rel)?;
        }
        for (i, t) in self.gradients.iter().enumerate() {
            writeln!(
                f,
                "grad  {i:>4}  {:<44} params={:<5} max_rel_err={:.3e} ({})",
                t.spec, t.params, t.check.max_rel_err, t.check.worst_block
            )?;
        }
        writeln!(
            f,
            "worst fast/naive deviation {:.3e} (tol {EQUIV_TOL:e}), worst gradient error {:.3e} (tol {GRAD_TOL:e})",
            self.worst_equivalence(),
            self.worst_gradient()
        )?;
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Fast-path output against direct convolution over the materialized bank.
pub fn equivalence_suite(trials: usize, seed: u64) -> Result<Vec<EquivTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let spec = random_spec(&mut rng);
        let phi = CondensedFilter::new(spec, uniform(&mut rng, spec.condensed_params(), 1.0))?;
        let input = random_input(&mut rng, &spec, 64);
        let fast = wsnet_core::conv::conv_fast(&input, &phi)?;
        let naive = conv_naive(&input, &sample_filters(&phi), spec.conv_stride(), spec.padding())?;
        let max_abs = fast
            .values()
            .iter()
            .zip(naive.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = naive.max_abs().max(f64::MIN_POSITIVE);
        out.push(EquivTrial {
            spec: describe(&spec),
            len: input.len(),
            max_abs,
            rel: max_abs / scale,
        });
    }
    Ok(out)
}

fn random_conv(rng: &mut impl Rng, spec: SamplingSpec, scale: f64) -> Result<SampledConv> {
    let phi = CondensedFilter::new(spec, uniform(rng, spec.condensed_params(), scale))?;
    let reduce = spec.reduction_shape().map(|(_, a, b)| PointwiseWeights {
        in_channels: a,
        out_channels: b,
        values: uniform(rng, a * b, scale),
    });
    Ok(SampledConv { phi, reduce })
}

/// A sampled conv (optionally batch-normalized) followed by a sampled fc
/// layer, plus a batch of three labelled inputs.
///
/// No ReLU or pooling: their kinks make central differences unreliable.
/// Weight scales keep the loss surface gentle enough that the `O(h^2)`
/// truncation error of the difference stays well under the tolerance;
/// batch norm is scale invariant, so its conv weights can be large.
pub fn random_two_layer_net(rng: &mut impl Rng) -> Result<(Network, Vec<FeatureMap>, Vec<usize>, String)> {
    let spec = random_spec(rng);
    let input_len = rng.random_range(spec.filter_len().max(2)..=24);
    let out_len = spec.output_len(input_len)?;
    let bn = rng.random();
    let classes = rng.random_range(2..=4);
    let mut layers = vec![NamedLayer {
        name: "conv".into(),
        layer: Layer::Conv(random_conv(rng, spec, if bn { 4.0 } else { 0.15 })?),
    }];
    if bn {
        let mut norm = BatchNorm::new(spec.filters());
        norm.gamma.iter_mut().for_each(|g| *g = rng.random_range(0.1..0.3));
        norm.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        layers.push(NamedLayer {
            name: "conv.bn".into(),
            layer: Layer::BatchNorm(norm),
        });
    }
    let n_in = out_len * spec.filters();
    let fc = fc_spec(n_in, classes, rng.random_range(1..=n_in))?;
    layers.push(NamedLayer {
        name: "fc".into(),
        layer: Layer::Fc(random_conv(rng, fc, 0.1)?),
    });
    let net = Network::new(input_len, spec.in_channels(), classes, layers, rng.random())?;
    let batch = (0..3)
        .map(|_| FeatureMap::new(input_len, spec.in_channels(), uniform(rng, input_len * spec.in_channels(), 1.0)))
        .collect::<wsnet_core::Result<Vec<_>>>()?;
    let labels = (0..3).map(|_| rng.random_range(0..classes)).collect();
    let desc = format!("{} T={input_len}{} fc->{classes}", describe(&spec), if bn { " bn" } else { "" });
    Ok((net, batch, labels, desc))
}

/// Central differences against backprop on random two-layer networks,
/// through both convolution paths.
pub fn gradient_suite(trials: usize, seed: u64) -> Result<Vec<GradTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6164);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (mut net, x, y, spec) = random_two_layer_net(&mut rng)?;
        let params = net.params().iter().map(|p| p.values.len()).sum();
        let mut worst: Option<GradCheck> = None;
        for path in [ConvPath::Fast, ConvPath::Naive] {
            net.set_path(path);
            let check = gradient_check(&mut net, &x, &y, FD_STEP, FD_FLOOR)?;
            if worst.as_ref().is_none_or(|w| check.max_rel_err > w.max_rel_err) {
                worst = Some(check);
            }
        }
        out.push(GradTrial {
            spec,
            params,
            check: worst.expect("two paths checked"),
        });
    }
    Ok(out)
}

pub fn verify(equiv_trials: usize, grad_trials: usize, seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        equivalence: equivalence_suite(equiv_trials, seed)?,
        gradients: gradient_suite(grad_trials, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterTrial {
    pub spec: String,
    pub measured: OpCounter,
    pub formula: OpCounter,
}

/// Instrumented fast-path counts against the closed-form counts.
pub fn counter_suite(trials: usize, seed: u64) -> Result<Vec<CounterTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f_756e);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let spec = random_spec(&mut rng);
        let phi = CondensedFilter::new(spec, uniform(&mut rng, spec.condensed_params(), 1.0))?;
        let input = random_input(&mut rng, &spec, 64);
        let mut measured = OpCounter::default();
        conv_fast_counted(&input, &phi, &mut measured)?;
        out.push(CounterTrial {
            spec: format!("{} T={}", describe(&spec), input.len()),
            measured,
            formula: fast_op_counts(&spec, input.len())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let report = verify(30, 3, 5).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.equivalence.len(), 30);
        assert!(report.to_string().lines().count() >= 34);
    }

    #[test]
    fn generated_nets_stay_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let (net, ..) = random_two_layer_net(&mut rng).unwrap();
            assert!(net.params().iter().map(|p| p.values.len()).sum::<usize>() <= 10_000);
        }
    }

    #[test]
    fn counters_agree() {
        for t in counter_suite(20, 1).unwrap() {
            assert_eq!(t.measured, t.formula, "{}", t.spec);
        }
    }

    #[test]
    fn same_seed_same_report() {
        assert_eq!(verify(5, 1, 3).unwrap(), verify(5, 1, 3).unwrap());
    }
}
