//! State space and equations of motion of a two-level atom moving in a 1D
//! standing light wave.
//!
//! All quantities are dimensionless: time in units of the inverse Rabi
//! frequency, position in units of the inverse wave number, momentum in
//! units of the photon momentum. The Bloch variables `(u, v, z)` are the
//! synchronized and quadrature dipole components and the population
//! inversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `u² + v² + z² = 1` accepted at construction.
pub const BLOCH_TOLERANCE: f64 = 1e-12;

/// `|H₀ − u₀|` below which resonant motion counts as a separatrix.
pub const SEPARATRIX_TOLERANCE: f64 = 1e-12;

/// Recoil frequency used throughout the reference experiments.
pub const DEFAULT_OMEGA_R: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Recoil frequency `ħk²/(mΩ)`.
    pub omega_r: f64,
    /// Atom-field detuning `(ω_f − ω_a)/Ω`.
    pub delta: f64,
}

impl LatticeParams {
    pub fn new(omega_r: f64, delta: f64) -> Result<Self> {
        if !(omega_r > 0.0 && omega_r.is_finite()) {
            return Err(Error::invalid(format!("omega_r must be positive, got {omega_r}")));
        }
        if !delta.is_finite() {
            return Err(Error::invalid("delta must be finite"));
        }
        Ok(LatticeParams { omega_r, delta })
    }

    /// Reference recoil frequency with the given detuning.
    pub fn with_delta(delta: f64) -> Self {
        LatticeParams { omega_r: DEFAULT_OMEGA_R, delta }
    }
}

/// Full dynamical state `(τ, x, p, u, v, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub tau: f64,
    pub x: f64,
    pub p: f64,
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

impl AtomState {
    /// Builds a state at `τ = 0`, rejecting Bloch vectors off the unit sphere.
    pub fn new(x: f64, p: f64, u: f64, v: f64, z: f64) -> Result<Self> {
        let s = AtomState { tau: 0.0, x, p, u, v, z };
        s.validate()?;
        Ok(s)
    }

    /// Builds a state at `τ = 0` after scaling `(u, v, z)` onto the unit sphere.
    ///
    /// Useful for rounded literature values such as `u = z = 0.7071`.
    pub fn normalized(x: f64, p: f64, u: f64, v: f64, z: f64) -> Result<Self> {
        let n = (u * u + v * v + z * z).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::domain("Bloch vector must be non-zero"));
        }
        Self::new(x, p, u / n, v / n, z / n)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.tau, self.x, self.p, self.u, self.v, self.z];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("state contains non-finite values"));
        }
        if self.u.abs() > 1.0 || self.v.abs() > 1.0 || self.z.abs() > 1.0 {
            return Err(Error::domain("Bloch components must lie in [-1, 1]"));
        }
        let drift = (bloch_norm(self) - 1.0).abs();
        if drift > BLOCH_TOLERANCE {
            return Err(Error::domain(format!("Bloch norm off the unit sphere by {drift:e}")));
        }
        Ok(())
    }

    pub(crate) fn to_array(self) -> [f64; 5] {
        [self.x, self.p, self.u, self.v, self.z]
    }

    pub(crate) fn from_array(tau: f64, y: &[f64; 5]) -> Self {
        AtomState { tau, x: y[0], p: y[1], u: y[2], v: y[3], z: y[4] }
    }
}

/// Time derivatives of `(x, p, u, v, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dx: f64,
    pub dp: f64,
    pub du: f64,
    pub dv: f64,
    pub dz: f64,
}

/// Right-hand side of the Hamilton–Schrödinger equations.
pub fn derivatives(s: &AtomState, params: &LatticeParams) -> StateDerivative {
    let mut d = [0.0; 5];
    rhs(&s.to_array(), params, &mut d);
    StateDerivative { dx: d[0], dp: d[1], du: d[2], dv: d[3], dz: d[4] }
}

#[inline(always)]
pub(crate) fn rhs(y: &[f64; 5], params: &LatticeParams, dy: &mut [f64; 5]) {
    let (sin_x, cos_x) = y[0].sin_cos();
    dy[0] = params.omega_r * y[1];
    dy[1] = -y[2] * sin_x;
    dy[2] = params.delta * y[3];
    dy[3] = -params.delta * y[2] + 2.0 * y[4] * cos_x;
    dy[4] = -2.0 * y[3] * cos_x;
}

/// Conserved total energy `H`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EnergyH(pub f64);

impl EnergyH {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `0 < H < 1`: the atom alternates between flights and trappings.
    pub fn in_transport_window(self) -> bool {
        self.0 > 0.0 && self.0 < 1.0
    }
}

pub fn total_energy(s: &AtomState, params: &LatticeParams) -> EnergyH {
    EnergyH(energy_of(&s.to_array(), params))
}

#[inline]
pub(crate) fn energy_of(y: &[f64; 5], params: &LatticeParams) -> f64 {
    0.5 * params.omega_r * y[1] * y[1] - y[2] * y[0].cos() - 0.5 * params.delta * y[4]
}

pub fn bloch_norm(s: &AtomState) -> f64 {
    s.u * s.u + s.v * s.v + s.z * s.z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonantMotion {
    Trapped,
    Separatrix,
    Ballistic,
}

/// Pendulum regime at exact resonance, where `u ≡ u₀` and the potential is `−u₀ cos x`.
pub fn classify_resonant_motion(h0: EnergyH, u0: f64) -> ResonantMotion {
    let gap = h0.0 - u0;
    if gap.abs() < SEPARATRIX_TOLERANCE {
        ResonantMotion::Separatrix
    } else if gap < 0.0 {
        ResonantMotion::Trapped
    } else {
        ResonantMotion::Ballistic
    }
}

/// Phase of the Bloch vector rotation at exact resonance.
///
/// `v = σ·√(1−u₀²)·cos χ`, `z = −σ·√(1−u₀²)·sin χ` with `χ = χ₀ + 2∫cos x dτ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantPhase {
    pub chi0: f64,
    pub chi: f64,
    /// `σ = ±1`, the sign of `z₀` (upper sign when `z₀ = v₀ = 0`).
    pub branch_sign: f64,
}

impl ResonantPhase {
    /// Phase at `τ = 0` reproducing `(v₀, z₀)` exactly.
    pub fn new(u0: f64, v0: f64, z0: f64) -> Result<Self> {
        let amp = transverse_amplitude(u0)?;
        if z0.abs() > amp * (1.0 + 1e-12) {
            return Err(Error::domain(format!("|z0| = {} exceeds sqrt(1 - u0^2) = {amp}", z0.abs())));
        }
        let branch_sign = if z0 < 0.0 || (z0 == 0.0 && v0 < 0.0) { -1.0 } else { 1.0 };
        // On the principal branch this is -σ·arcsin(z0/amp).
        let chi0 = (-branch_sign * z0).atan2(branch_sign * v0);
        Ok(ResonantPhase { chi0, chi: chi0, branch_sign })
    }

    /// Adds `2∫cos x dτ` accumulated along the trajectory.
    pub fn advanced(self, accumulated: f64) -> Self {
        ResonantPhase { chi: self.chi0 + accumulated, ..self }
    }
}

fn transverse_amplitude(u0: f64) -> Result<f64> {
    if !(u0.abs() <= 1.0) {
        return Err(Error::domain(format!("|u0| = {} exceeds 1", u0.abs())));
    }
    Ok((1.0 - u0 * u0).sqrt())
}

/// Closed-form `(v, z)` at exact resonance.
pub fn resonant_vz(u0: f64, z0: f64, phase: &ResonantPhase) -> Result<(f64, f64)> {
    let amp = transverse_amplitude(u0)?;
    if z0.abs() > amp * (1.0 + 1e-12) {
        return Err(Error::domain(format!("|z0| = {} exceeds sqrt(1 - u0^2) = {amp}", z0.abs())));
    }
    let (s, c) = phase.chi.sin_cos();
    Ok((phase.branch_sign * amp * c, -phase.branch_sign * amp * s))
}
