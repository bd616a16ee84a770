//! Maximum Lyapunov exponent by the two-trajectory method with periodic
//! renormalization, and λ-maps over the `(Δ, p₀)` plane.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::rhs;
use crate::dynamics::{AtomState, LatticeParams};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::ode::{Dop853, OdeSystem};
use crate::par::map_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub d0: f64,
    pub renorm_interval: f64,
    pub tau_max: f64,
    /// Defaults to a tenth of `tau_max`.
    pub transient_skip: Option<f64>,
    pub integrator: IntegratorConfig,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            d0: 1e-6,
            renorm_interval: 1000.0,
            tau_max: 1e6,
            transient_skip: None,
            integrator: IntegratorConfig { abs_tol: 1e-11, rel_tol: 1e-11, ..IntegratorConfig::default() },
        }
    }
}

/// Number of batches the epoch series is cut into for the error estimate.
const BATCHES: usize = 20;

impl LyapunovConfig {
    pub fn skip(&self) -> f64 {
        self.transient_skip.unwrap_or(0.1 * self.tau_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0 < 1e-3) {
            return Err(Error::invalid("d0 must lie in (0, 1e-3)"));
        }
        if !(self.renorm_interval > 0.0) {
            return Err(Error::invalid("renorm_interval must be positive"));
        }
        let skip = self.skip();
        if !(skip >= 0.0 && self.tau_max > skip) {
            return Err(Error::invalid("need tau_max > transient_skip >= 0"));
        }
        if self.tau_max - skip < 2.0 * self.renorm_interval {
            return Err(Error::invalid("fewer than two renormalization epochs after the transient"));
        }
        self.integrator.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub std_err: f64,
    pub epochs: usize,
}

/// Reference and shadow advanced with one step sequence, so that truncation
/// errors largely cancel in their difference.
struct Pair(LatticeParams);

impl OdeSystem<10> for Pair {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 10], dy: &mut [f64; 10]) {
        let (a, b) = y.split_at(5);
        let (da, db) = dy.split_at_mut(5);
        rhs(a.try_into().unwrap(), &self.0, da.try_into().unwrap());
        rhs(b.try_into().unwrap(), &self.0, db.try_into().unwrap());
    }
}

fn dist(y: &[f64; 10]) -> f64 {
    (0..5).map(|i| (y[i] - y[i + 5]).powi(2)).sum::<f64>().sqrt()
}

/// Mean of `ln(d_k/d0)/interval` over the epochs after the transient.
pub fn max_lyapunov(s0: &AtomState, params: LatticeParams, cfg: &LyapunovConfig) -> Result<LyapunovEstimate> {
    cfg.validate()?;
    s0.validate()?;
    let sys = Pair(params);
    let a0 = s0.to_array();
    let b0 = AtomState::normalized(s0.x + cfg.d0, s0.p, s0.u, s0.v, s0.z)?.to_array();
    let mut y0 = [0.0; 10];
    y0[..5].copy_from_slice(&a0);
    y0[5..].copy_from_slice(&b0);
    let mut st = Dop853::new(&sys, s0.tau, y0, cfg.integrator.step_control())?;
    let mut rates = Vec::new();
    let skip_until = s0.tau + cfg.skip();
    let end = s0.tau + cfg.tau_max;
    let mut t = s0.tau;
    let mut d_ref = dist(&y0);
    while t < end - 1e-9 {
        let t_next = (t + cfg.renorm_interval).min(end);
        while st.t() < t_next {
            st.step(&sys, t_next)?;
        }
        let mut y = *st.y();
        let d = dist(&y);
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::StepFailure { tau: t_next, step: 0.0 });
        }
        if t >= skip_until - 1e-9 {
            rates.push((d / d_ref).ln() / (t_next - t));
        }
        let scale = cfg.d0 / d;
        for i in 0..5 {
            y[i + 5] = y[i] + (y[i + 5] - y[i]) * scale;
        }
        st.reset(&sys, t_next, y);
        d_ref = cfg.d0;
        t = t_next;
    }
    if rates.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, found: rates.len() });
    }
    let n = rates.len();
    let lambda = rates.iter().sum::<f64>() / n as f64;
    let nb = BATCHES.min(n);
    let per = n / nb;
    let means: Vec<f64> = (0..nb).map(|k| rates[k * per..(k + 1) * per].iter().sum::<f64>() / per as f64).collect();
    let mb = means.iter().sum::<f64>() / nb as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (nb as f64 - 1.0).max(1.0);
    Ok(LyapunovEstimate { lambda, std_err: (var / nb as f64).sqrt(), epochs: n })
}

/// Fixed part of the initial state across a λ-map; `p` comes from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseState {
    pub x0: f64,
    pub u0: f64,
    pub v0: f64,
    pub z0: f64,
}

impl BaseState {
    pub fn with_p(&self, p0: f64) -> Result<AtomState> {
        AtomState::normalized(self.x0, p0, self.u0, self.v0, self.z0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LambdaCell {
    Ok { lambda: f64, std_err: f64 },
    Failed { reason: String },
}

impl LambdaCell {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            LambdaCell::Ok { lambda, .. } => Some(*lambda),
            LambdaCell::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMeta {
    pub omega_r: f64,
    pub base: BaseState,
    pub seed: u64,
    pub config: LyapunovConfig,
}

/// `cells[i][j]` belongs to `p0_axis[i]` and `delta_axis[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub delta_axis: Vec<f64>,
    pub p0_axis: Vec<f64>,
    pub cells: Vec<Vec<LambdaCell>>,
    pub meta: LambdaMeta,
}

/// `n` evenly spaced points from `lo` to `hi`; a single point sits at `lo`.
pub fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn lambda_map(
    delta_range: (f64, f64),
    p0_range: (f64, f64),
    resolution: (usize, usize),
    base: BaseState,
    omega_r: f64,
    cfg: &LyapunovConfig,
    seed: u64,
) -> Result<LambdaGrid> {
    cfg.validate()?;
    let (nd, np) = resolution;
    if nd == 0 || np == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    if (nd > 1 && !(delta_range.1 > delta_range.0)) || (np > 1 && !(p0_range.1 > p0_range.0)) {
        return Err(Error::invalid("degenerate range"));
    }
    let delta_axis = axis(delta_range.0, delta_range.1, nd);
    let p0_axis = axis(p0_range.0, p0_range.1, np);
    let flat = map_indexed(nd * np, |k| {
        let (i, j) = (k / nd, k % nd);
        let run = || -> Result<LyapunovEstimate> {
            let params = LatticeParams::new(omega_r, delta_axis[j])?;
            max_lyapunov(&base.with_p(p0_axis[i])?, params, cfg)
        };
        match run() {
            Ok(e) => LambdaCell::Ok { lambda: e.lambda, std_err: e.std_err },
            Err(e) => LambdaCell::Failed { reason: e.to_string() },
        }
    });
    let mut it = flat.into_iter();
    let cells = (0..np).map(|_| it.by_ref().take(nd).collect()).collect();
    Ok(LambdaGrid { delta_axis, p0_axis, cells, meta: LambdaMeta { omega_r, base, seed, config: *cfg } })
}

impl LambdaGrid {
    /// Matrix with a `p0` column followed by one column per Δ; failed cells are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "p0")?;
        for d in &self.delta_axis {
            write!(w, ",{d:e}")?;
        }
        writeln!(w)?;
        for (p, row) in self.p0_axis.iter().zip(&self.cells) {
            write!(w, "{p:e}")?;
            for c in row {
                match c.lambda() {
                    Some(l) => write!(w, ",{l:.17e}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        let failures: Vec<_> = self
            .cells
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().enumerate().filter_map(move |(j, c)| match c {
                    LambdaCell::Failed { reason } => {
                        Some(serde_json::json!({"p0_index": i, "delta_index": j, "reason": reason}))
                    }
                    LambdaCell::Ok { .. } => None,
                })
            })
            .collect();
        let std_err: Vec<Vec<Option<f64>>> = self
            .cells
            .iter()
            .map(|r| {
                r.iter().map(|c| if let LambdaCell::Ok { std_err, .. } = c { Some(*std_err) } else { None }).collect()
            })
            .collect();
        serde_json::json!({
            "delta_axis": self.delta_axis,
            "p0_axis": self.p0_axis,
            "std_err": std_err,
            "failures": failures,
            "meta": self.meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> LyapunovConfig {
        LyapunovConfig { tau_max: 5e4, renorm_interval: 500.0, ..LyapunovConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(LyapunovConfig::default().validate().is_ok());
        assert!(LyapunovConfig { d0: 0.0, ..quick() }.validate().is_err());
        assert!(LyapunovConfig { transient_skip: Some(6e4), ..quick() }.validate().is_err());
        assert!(LyapunovConfig { renorm_interval: -1.0, ..quick() }.validate().is_err());
    }

    #[test]
    fn resonant_motion_is_regular() {
        let s = AtomState::normalized(0.0, 200.0, 0.7071, 0.0, 0.7071).unwrap();
        let e = max_lyapunov(&s, LatticeParams::with_delta(0.0), &quick()).unwrap();
        assert!(e.lambda.abs() < 1e-3, "{e:?}");
    }

    #[test]
    fn degenerate_grid_and_determinism() {
        let base = BaseState { x0: 0.0, u0: 0.0, v0: 0.0, z0: -1.0 };
        let g = lambda_map((0.0, 0.0), (200.0, 200.0), (1, 1), base, 1e-5, &quick(), 3).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert!(g.cells[0][0].lambda().unwrap().abs() < 1e-4);
        let a = lambda_map((-0.05, 0.0), (100.0, 300.0), (2, 2), base, 1e-5, &quick(), 3).unwrap();
        let b = lambda_map((-0.05, 0.0), (100.0, 300.0), (2, 2), base, 1e-5, &quick(), 3).unwrap();
        assert_eq!(a, b);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let base = BaseState { x0: 0.0, u0: 0.0, v0: 0.0, z0: -1.0 };
        let bad = LatticeParams::new(-1.0, 0.0).is_err();
        assert!(bad);
        let g = lambda_map((0.0, 0.0), (200.0, 200.0), (1, 1), base, -1.0, &quick(), 0).unwrap();
        assert!(matches!(g.cells[0][0], LambdaCell::Failed { .. }));
        assert_eq!(g.sidecar_json()["failures"].as_array().unwrap().len(), 1);
    }
}
