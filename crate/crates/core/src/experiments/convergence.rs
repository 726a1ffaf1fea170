//! Observed convergence orders and error-regime segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise orders with magnitude below this count as a plateau.
pub const PLATEAU_ORDER: f64 = 0.5;

/// Behaviour of the error between two neighbouring samples as the step shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Decreasing,
    Plateau,
    Increasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Step sizes, largest first.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log(e_i / e_{i+1}) / log(s_i / s_{i+1})` for neighbouring samples.
    pub orders: Vec<f64>,
    pub regimes: Vec<Regime>,
    /// `regimes` with consecutive repeats merged.
    pub pattern: Vec<Regime>,
}

impl ConvergenceReport {
    /// True when the error decreases, levels off, then increases as the step shrinks.
    pub fn has_three_regimes(&self) -> bool {
        let want = [Regime::Decreasing, Regime::Plateau, Regime::Increasing];
        let mut k = 0;
        for r in &self.pattern {
            if k < want.len() && *r == want[k] {
                k += 1;
            }
        }
        k == want.len()
    }

    /// Step with the smallest error.
    pub fn best(&self) -> (f64, f64) {
        let i = (0..self.errors.len()).min_by(|&a, &b| self.errors[a].total_cmp(&self.errors[b])).unwrap_or(0);
        (self.steps[i], self.errors[i])
    }
}

/// Orders and regimes of `errors` sampled at step sizes `steps` (any order).
pub fn convergence_order(errors: &[f64], steps: &[f64]) -> Result<ConvergenceReport> {
    if errors.len() != steps.len() {
        return Err(Error::Usage(format!("{} errors but {} step sizes", errors.len(), steps.len())));
    }
    if errors.len() < 2 {
        return Err(Error::Usage("need at least two samples".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Usage(format!("errors must be positive and finite, got {e}")));
    }
    if let Some(s) = steps.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::Usage(format!("step sizes must be positive and finite, got {s}")));
    }
    let mut pairs: Vec<(f64, f64)> = steps.iter().copied().zip(errors.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Usage("step sizes must be distinct".into()));
    }
    let orders: Vec<f64> = pairs.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect();
    let regimes: Vec<Regime> = orders
        .iter()
        .map(|&p| {
            if p > PLATEAU_ORDER {
                Regime::Decreasing
            } else if p < -PLATEAU_ORDER {
                Regime::Increasing
            } else {
                Regime::Plateau
            }
        })
        .collect();
    let mut pattern = regimes.clone();
    pattern.dedup();
    Ok(ConvergenceReport {
        steps: pairs.iter().map(|p| p.0).collect(),
        errors: pairs.iter().map(|p| p.1).collect(),
        orders,
        regimes,
        pattern,
    })
}
