//! Closed-form flight and trapping statistics of the node-crossing map.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{EnergyH, LatticeParams};
use crate::error::{Error, Result};
use crate::nodemap::{jump_amplitude, NodeMomentum};

use super::EventClass;

/// Hard cap on series terms.
pub const MAX_TERMS: usize = 10_000;
/// Relative size of the next term at which a series stops.
pub const SERIES_RTOL: f64 = 1e-16;

fn check_energy(h: EnergyH) -> Result<()> {
    if h.0 > 0.0 && h.0 < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("H = {} outside (0, 1)", h.0)))
    }
}

/// `(P₋, P₊)`: probabilities to turn and to keep going after a crossing.
pub fn turn_probability(h: EnergyH) -> Result<(f64, f64)> {
    check_energy(h)?;
    let pm = h.0.acos() / PI;
    Ok((pm, 1.0 - pm))
}

/// Geometric laws `P₊^l P₋` (flight) and `P₋^l P₊` (trapping), `l ≥ 0`.
pub fn pdf_large_jump(l: u64, h: EnergyH, kind: EventClass) -> Result<f64> {
    let (pm, pp) = turn_probability(h)?;
    let l = l as i32;
    Ok(match kind {
        EventClass::Flight => pp.powi(l) * pm,
        EventClass::Trapping => pm.powi(l) * pp,
    })
}

/// Diffusion coefficient of the map angle per crossing, `K²/4`.
pub fn diffusion_coefficient(params: &LatticeParams, pn: NodeMomentum) -> f64 {
    let k = jump_amplitude(params, pn).0;
    0.25 * k * k
}

/// Half-width of the flight (`arcsin H`) or trapping (`arccos H`) arc.
pub fn theta_max(h: EnergyH, kind: EventClass) -> Result<f64> {
    check_energy(h)?;
    Ok(match kind {
        EventClass::Flight => h.0.asin(),
        EventClass::Trapping => h.0.acos(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstPassageParams {
    pub theta0: f64,
    pub theta_c: f64,
    pub theta_max: f64,
    pub d: f64,
    pub terms: usize,
    pub epsilon: f64,
}

impl FirstPassageParams {
    /// Start at the centre of the arc.
    pub fn centered(theta_c: f64, theta_max: f64, d: f64) -> Self {
        FirstPassageParams { theta0: theta_c, theta_c, theta_max, d, terms: MAX_TERMS, epsilon: 0.0 }
    }

    /// Start a distance `epsilon` inside the lower edge of the arc.
    pub fn near_boundary(theta_c: f64, theta_max: f64, d: f64, epsilon: f64) -> Self {
        FirstPassageParams { theta0: theta_c - theta_max + epsilon, theta_c, theta_max, d, terms: MAX_TERMS, epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_max > 0.0 && self.theta_max <= PI / 2.0 + 1e-15) {
            return Err(Error::invalid(format!("theta_max = {} outside (0, π/2]", self.theta_max)));
        }
        if !(self.d > 0.0) {
            return Err(Error::invalid("D must be positive"));
        }
        if (self.theta0 - self.theta_c).abs() > self.theta_max {
            return Err(Error::invalid("theta0 lies outside the arc"));
        }
        if self.terms == 0 {
            return Err(Error::invalid("terms must be positive"));
        }
        Ok(())
    }
}

/// Sums `Σ_j f(j)` with `|f(j)| ≤ bound(j)` decreasing; stops when the bound of the
/// next term falls below `SERIES_RTOL` of the partial sum.
fn sum_series(max_terms: usize, mut f: impl FnMut(usize) -> (f64, f64)) -> Result<f64> {
    let mut s = 0.0;
    let mut last = f64::INFINITY;
    for j in 0..max_terms {
        let (term, bound) = f(j);
        s += term;
        last = bound;
        if bound <= SERIES_RTOL * s.abs() || bound == 0.0 {
            return Ok(s);
        }
    }
    Err(Error::Truncation { value: s, terms: max_terms, last_term: last })
}

/// Exit probability after `l` steps for diffusion on `θ_c ± θ_max`.
pub fn first_passage_pdf(l: f64, fp: &FirstPassageParams) -> Result<f64> {
    fp.validate()?;
    if !(l > 0.0) {
        return Err(Error::domain("l must be positive"));
    }
    let tm = fp.theta_max;
    let c = PI * PI * fp.d * l / (tm * tm);
    let x = PI * (fp.theta0 - fp.theta_c) / tm;
    let s = sum_series(fp.terms, |j| {
        let a = j as f64 + 0.5;
        let mag = a * (-a * a * c).exp();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        (sign * mag * (a * x).cos(), mag)
    })?;
    Ok(2.0 * PI * fp.d / (tm * tm) * s)
}

/// How `Q` is fixed in the small-jump PDFs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    /// Each kind carries unit mass over `l ≥ 1`.
    PerKind,
    /// One `Q` for both kinds, chosen so that their masses add up to 2.
    Shared,
}

fn small_jump_sum(l: f64, tm: f64, d: f64) -> Result<f64> {
    let c = PI * PI * d * l / (tm * tm);
    sum_series(MAX_TERMS, |j| {
        let a = j as f64 + 0.5;
        let t = a * a * (-a * a * c).exp();
        (t, t)
    })
}

/// `Σ_{l≥1}` of the unnormalized small-jump series divided by `θ_max³`.
fn small_jump_mass(tm: f64, d: f64) -> Result<f64> {
    let c1 = PI * PI * d / (tm * tm);
    // Σ_l exp(−a²c₁l) = 1/(exp(a²c₁) − 1).
    let s = sum_series(MAX_TERMS * 10, |j| {
        let a = j as f64 + 0.5;
        let t = a * a / (a * a * c1).exp_m1();
        (t, t)
    })?;
    Ok(s / tm.powi(3))
}

/// Normalization constant `Q` for the small-jump PDFs.
pub fn small_jump_q(h: EnergyH, d: f64, kind: EventClass, mode: QMode) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::invalid("D must be positive"));
    }
    match mode {
        QMode::PerKind => Ok(1.0 / small_jump_mass(theta_max(h, kind)?, d)?),
        QMode::Shared => {
            let m = small_jump_mass(theta_max(h, EventClass::Flight)?, d)?
                + small_jump_mass(theta_max(h, EventClass::Trapping)?, d)?;
            Ok(2.0 / m)
        }
    }
}

/// Boundary-start small-jump PDF `Q/θ_max³ Σ (j+½)² exp(−(j+½)²π²Dl/θ_max²)`.
pub fn pdf_small_jump(l: f64, h: EnergyH, d: f64, kind: EventClass, q: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::invalid("D must be positive"));
    }
    if !(l > 0.0) {
        return Err(Error::domain("l must be positive"));
    }
    let tm = theta_max(h, kind)?;
    Ok(q / tm.powi(3) * small_jump_sum(l, tm, d)?)
}

/// Power-law head `Q π^{−5/2} D^{−3/2} l^{−3/2} / 4`.
pub fn power_law_head(l: f64, d: f64, q: f64) -> f64 {
    q * PI.powf(-2.5) * d.powf(-1.5) * l.powf(-1.5) / 4.0
}

/// Minimum number of crossings needed to traverse an arc: `θ_max/√D`.
pub fn l_critical(theta_max: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::invalid("D must be positive"));
    }
    Ok(theta_max / d.sqrt())
}

/// Critical length measured across the full arc, `2θ_max/√D`.
pub fn l_critical_full_width(theta_max: f64, d: f64) -> Result<f64> {
    Ok(2.0 * l_critical(theta_max, d)?)
}

/// Asymptotic ratio `P(l+1)/P(l)` of the single-term exponential tail.
pub fn tail_ratio(theta_max: f64, d: f64) -> f64 {
    (-PI * PI * d / (4.0 * theta_max * theta_max)).exp()
}
