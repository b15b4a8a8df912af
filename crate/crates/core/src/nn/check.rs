use alloc::string::String;

use super::{cross_entropy, Mode, Network};
use crate::conv::FeatureMap;
use crate::error::{Error, Result};

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_block: String,
    pub checked: usize,
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn train_loss(net: &mut Network, inputs: &[FeatureMap], labels: &[usize]) -> Result<f64> {
    let fwd = net.forward(inputs, Mode::Train)?;
    Ok(cross_entropy(&fwd.logits, labels)?.0)
}

/// Compares every analytic gradient entry with a central difference of step `h`.
///
/// The network must be free of dropout, otherwise the train-mode loss is not
/// a deterministic function of the weights.
pub fn gradient_check(net: &mut Network, inputs: &[FeatureMap], labels: &[usize], h: f64, floor: f64) -> Result<GradCheck> {
    if net.layers().iter().any(|l| matches!(l.layer, super::Layer::Dropout(p) if p < 1.0)) {
        return Err(Error::Hyper("gradient check needs a dropout-free network"));
    }
    let fwd = net.forward(inputs, Mode::Train)?;
    let grads = net.backward(&fwd, labels)?;
    let mut worst = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_block: String::new(),
        checked: 0,
    };
    for (b, block) in grads.blocks.iter().enumerate() {
        for (i, &analytic) in block.values.iter().enumerate() {
            let orig = net.params()[b].values[i];
            net.params_mut()[b].1[i] = orig + h;
            let plus = train_loss(net, inputs, labels)?;
            net.params_mut()[b].1[i] = orig - h;
            let minus = train_loss(net, inputs, labels)?;
            net.params_mut()[b].1[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = rel_err(analytic, numeric, floor);
            worst.max_abs_err = worst.max_abs_err.max((analytic - numeric).abs());
            if err > worst.max_rel_err || worst.worst_block.is_empty() {
                worst.max_rel_err = err;
                worst.worst_block.clone_from(&block.name);
            }
            worst.checked += 1;
        }
    }
    Ok(worst)
}
