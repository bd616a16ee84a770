//! Weighted straight-line fits of histogram tails in log-log or semi-log form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::histogram::PdfHistogram;

/// Fewest occupied bins a fit accepts.
pub const MIN_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// `ln P` linear in `ln l`.
    PowerLaw,
    /// `ln P` linear in `l`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: TailModel,
    pub l_min: u64,
    pub l_max: u64,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    /// `Σ n_i (ln P_i − fit_i)²`; the variance of `ln P_i` is about `1/n_i`.
    pub chi2: f64,
    pub bins: usize,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub power_law: FitReport,
    pub exponential: FitReport,
    pub preferred: TailModel,
}

/// Fits the occupied bins lying wholly inside `[l_min, l_max]`, weighted by count.
pub fn fit_tail(h: &PdfHistogram, l_min: u64, l_max: u64, model: TailModel) -> Result<FitReport> {
    if l_min > l_max {
        return Err(Error::invalid("empty fit range"));
    }
    let mut pts = Vec::new();
    for i in 0..h.len() {
        let (lo, hi) = h.bounds(i);
        if lo < l_min || hi - 1 > l_max || h.count(i) == 0 || lo == 0 {
            continue;
        }
        let c = h.center(i);
        let x = match model {
            TailModel::PowerLaw => c.ln(),
            TailModel::Exponential => c,
        };
        pts.push((x, h.density(i).ln(), h.count(i) as f64));
    }
    if pts.len() < MIN_BINS {
        return Err(Error::InsufficientData { needed: MIN_BINS, found: pts.len() });
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - ym).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 2, found: 1 });
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = (pts.len() - 2) as f64;
    // Inflate the error when the scatter exceeds the Poisson expectation.
    let scale = (chi2 / dof).max(1.0);
    Ok(FitReport {
        model,
        l_min,
        l_max,
        slope,
        intercept,
        slope_se: (scale / sxx).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 },
        chi2,
        bins: pts.len(),
        events: pts.iter().map(|p| p.2 as u64).sum(),
    })
}

/// Fits both models over the same bins; the smaller χ² wins.
pub fn compare_models(h: &PdfHistogram, l_min: u64, l_max: u64) -> Result<ModelComparison> {
    let power_law = fit_tail(h, l_min, l_max, TailModel::PowerLaw)?;
    let exponential = fit_tail(h, l_min, l_max, TailModel::Exponential)?;
    let preferred = if power_law.chi2 <= exponential.chi2 { TailModel::PowerLaw } else { TailModel::Exponential };
    Ok(ModelComparison { power_law, exponential, preferred })
}
