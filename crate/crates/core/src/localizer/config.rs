use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open range `[min, max)` of regression distances, in window units,
/// that a pyramid level is responsible for. `max = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionRange {
    pub min: f64,
    pub max: Option<f64>,
}

impl RegressionRange {
    pub fn new(min: f64, max: Option<f64>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.min && self.max.is_none_or(|m| d < m)
    }
}

/// Ranges `[0, b0), [b0, b1), ..., [b_{L-2}, inf)` doubling from `first`.
pub fn doubling_ranges(levels: usize, first: f64) -> Vec<RegressionRange> {
    let mut out = Vec::with_capacity(levels);
    let mut lo = 0.0;
    let mut hi = first;
    for l in 0..levels {
        let max = (l + 1 < levels).then_some(hi);
        out.push(RegressionRange::new(lo, max));
        lo = hi;
        hi *= 2.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub hidden_dim: usize,
    pub pyramid_levels: usize,
    /// Convolution layers (kernel 3) in each head before the output map.
    pub head_layers: usize,
    pub regression_ranges: Vec<RegressionRange>,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub reg_loss_weight: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// When set, the classification output bias starts at the logit of this
    /// probability instead of the uniform draw.
    pub cls_prior: Option<f64>,
    /// Rescale each step's gradient to at most this L2 norm.
    pub grad_clip: Option<f64>,
    /// Decode drops class probabilities below this value.
    pub decode_min_prob: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            pyramid_levels: 4,
            head_layers: 2,
            regression_ranges: doubling_ranges(4, 4.0),
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            reg_loss_weight: 1.0,
            learning_rate: 1e-4,
            momentum: 0.9,
            weight_decay: 1e-6,
            epochs: 100,
            seed: 1,
            cls_prior: None,
            grad_clip: None,
            decode_min_prob: 1e-3,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim must be positive"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::invalid("pyramid needs at least one level"));
        }
        if self.regression_ranges.len() != self.pyramid_levels {
            return Err(Error::invalid(format!(
                "{} regression ranges for {} pyramid levels",
                self.regression_ranges.len(),
                self.pyramid_levels
            )));
        }
        let ranges = &self.regression_ranges;
        for (i, r) in ranges.iter().enumerate() {
            match r.max {
                Some(m) if !(m > r.min) => {
                    return Err(Error::invalid(format!("regression range {i} is empty")))
                }
                None if i + 1 != ranges.len() => {
                    return Err(Error::invalid("only the last regression range may be unbounded"))
                }
                _ => {}
            }
            if i > 0 && ranges[i - 1].max != Some(r.min) {
                return Err(Error::invalid(format!(
                    "regression ranges {} and {i} are not contiguous",
                    i - 1
                )));
            }
        }
        if !(self.focal_alpha >= 0.0 && self.focal_alpha <= 1.0) || !(self.focal_gamma >= 0.0) {
            return Err(Error::invalid("focal alpha must be in [0, 1] and gamma >= 0"));
        }
        if self.cls_prior.is_some_and(|p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::invalid("cls_prior must be a probability in (0, 1)"));
        }
        if !(self.learning_rate > 0.0) || !(self.reg_loss_weight >= 0.0) {
            return Err(Error::invalid("learning rate must be positive, loss weight >= 0"));
        }
        Ok(())
    }
}
