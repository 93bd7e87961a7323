//! Uncertainty-guided selection of training pixels.
//!
//! Of `N_s = round(r_s · #valid)` pixels, the `⌊β·N_s⌋` valid pixels with
//! the highest uncertainty form the importance set; the rest are drawn
//! uniformly without replacement from the remaining valid pixels (coverage).
//! β = 1 trains on the hardest pixels only, β = 0 is plain uniform sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Sampled fraction used in all reference experiments.
pub const DEFAULT_RS: f64 = 0.4;
/// Importance ratio that performed best in the reference ablation.
pub const DEFAULT_BETA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    r_s: f64,
    beta_ug: f64,
}

impl SelectionConfig {
    pub fn new(r_s: f64, beta_ug: f64) -> Result<Self> {
        if !(r_s > 0.0 && r_s <= 1.0) {
            return Err(Error::domain("r_s", r_s, "(0, 1]"));
        }
        if !(0.0..=1.0).contains(&beta_ug) {
            return Err(Error::domain("beta_ug", beta_ug, "[0, 1]"));
        }
        Ok(SelectionConfig { r_s, beta_ug })
    }

    pub fn r_s(&self) -> f64 {
        self.r_s
    }

    pub fn beta_ug(&self) -> f64 {
        self.beta_ug
    }

    /// `(N_s, importance count)` for a given number of valid pixels.
    pub fn counts(&self, valid: usize) -> (usize, usize) {
        let total = (self.r_s * valid as f64).round() as usize;
        let importance = (self.beta_ug * total as f64).floor() as usize;
        (total, importance.min(total))
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            r_s: DEFAULT_RS,
            beta_ug: DEFAULT_BETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PixelSelection {
    /// Highest-uncertainty pixels, in descending uncertainty order.
    pub importance: Vec<usize>,
    /// Uniformly drawn pixels, in draw order.
    pub coverage: Vec<usize>,
}

impl PixelSelection {
    pub fn len(&self) -> usize {
        self.importance.len() + self.coverage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.importance.iter().chain(&self.coverage).copied()
    }
}

/// Picks training pixels from a row-major uncertainty grid.
///
/// Ties in uncertainty go to the lower pixel index.
pub fn select_pixels(
    uncertainty: &[f64],
    valid: &[bool],
    cfg: &SelectionConfig,
    rng: &mut RngState,
) -> Result<PixelSelection> {
    if uncertainty.len() != valid.len() {
        return Err(Error::Shape(format!(
            "{} uncertainties vs {} mask flags",
            uncertainty.len(),
            valid.len()
        )));
    }
    let mut candidates: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    if let Some(&bad) = candidates.iter().find(|&&i| uncertainty[i].is_nan()) {
        return Err(Error::domain("uncertainty", uncertainty[bad], "not NaN"));
    }
    let (total, n_importance) = cfg.counts(candidates.len());
    if total == 0 || total > candidates.len() {
        return Err(Error::InsufficientPixels {
            needed: total.max(1),
            available: candidates.len(),
        });
    }

    // descending uncertainty, ascending index
    candidates.sort_by(|&a, &b| uncertainty[b].total_cmp(&uncertainty[a]).then(a.cmp(&b)));
    let mut rest = candidates.split_off(n_importance);
    let importance = candidates;

    // partial Fisher-Yates over the remaining pixels in index order
    rest.sort_unstable();
    let n_coverage = total - n_importance;
    for i in 0..n_coverage {
        let j = i + rng.below((rest.len() - i) as u64) as usize;
        rest.swap(i, j);
    }
    rest.truncate(n_coverage);

    Ok(PixelSelection {
        importance,
        coverage: rest,
    })
}
