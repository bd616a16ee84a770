//! Jumps of the synchronized dipole component `u` at node crossings and the
//! stochastic map built on them.
//!
//! The map angle `θ` lives on the full circle; `u = sin θ`. Flight arcs are
//! `|sin θ| < H`, trapping arcs the remainder.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EnergyH, LatticeParams, SEPARATRIX_TOLERANCE};
use crate::error::{Error, Result};
use crate::integrator::{
    locate_events, node_between, node_cell, CrossingEvent, EventKind, IntegratorConfig, TurningEvent,
};
use crate::ode::{Dop853, OdeSystem};

/// Momentum magnitude at every node crossing for a given energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMomentum(pub f64);

/// Angular jump scale `K` of `arcsin u` per crossing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct JumpAmplitude(pub f64);

pub fn p_node(h: EnergyH, omega_r: f64) -> Result<NodeMomentum> {
    if !(h.0 > 0.0) {
        return Err(Error::domain(format!("H = {} does not reach the nodes", h.0)));
    }
    if !(omega_r > 0.0) {
        return Err(Error::invalid("omega_r must be positive"));
    }
    Ok(NodeMomentum((2.0 * h.0 / omega_r).sqrt()))
}

pub fn jump_amplitude(params: &LatticeParams, pn: NodeMomentum) -> JumpAmplitude {
    JumpAmplitude(params.delta.abs() * (PI / (params.omega_r * pn.0)).sqrt())
}

/// `θ` wrapped into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let t = theta.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapState {
    pub m: u64,
    /// Angle on the circle, in `(−π, π]`.
    pub theta: f64,
}

impl MapState {
    pub fn new(u0: f64) -> Result<Self> {
        if !(u0.abs() <= 1.0) {
            return Err(Error::domain(format!("|u0| = {} exceeds 1", u0.abs())));
        }
        Ok(MapState { m: 0, theta: u0.asin() })
    }

    pub fn u(&self) -> f64 {
        self.theta.sin()
    }

    /// `arcsin u`, in `[−π/2, π/2]`.
    pub fn theta_principal(&self) -> f64 {
        self.u().asin()
    }

    pub fn in_flight_arc(&self, h: EnergyH) -> bool {
        self.u().abs() < h.0
    }
}

pub fn stochastic_jump(state: &MapState, k: JumpAmplitude, phi: f64) -> MapState {
    MapState { m: state.m + 1, theta: wrap_angle(state.theta + k.0 * phi.sin()) }
}

pub fn draw_phase(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>() * TAU
}

/// `u` after one crossing from the large-argument asymptotics of the exact single-node integral.
///
/// `branch` is the `±` sign tied to the resonant Bloch rotation. The additive `z₀`
/// term, dropped in the stochastic map, is kept when `with_z_term` is set.
pub fn deterministic_jump(
    u_prev: f64,
    v_prev: f64,
    z_prev: f64,
    params: &LatticeParams,
    pn: NodeMomentum,
    branch: f64,
    with_z_term: bool,
) -> Result<f64> {
    if !(u_prev.abs() < 1.0) {
        return Err(Error::domain("|u| = 1 leaves the jump undefined"));
    }
    let a = 2.0 / (params.omega_r * pn.0);
    let root = (PI / (params.omega_r * pn.0)).sqrt();
    let mut bracket = root * (v_prev * (a - FRAC_PI_4).cos() - z_prev * (a - FRAC_PI_4).sin());
    if with_z_term {
        bracket -= z_prev;
    }
    let jump = branch.signum() * params.delta / (1.0 - u_prev * u_prev).sqrt() * bracket;
    Ok((u_prev.asin() + jump).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingOutcome {
    Continue,
    Turn,
    SeparatrixLike,
}

/// Whether the atom keeps its direction after crossing `m` with dipole value `u_m`.
pub fn classify_crossing(u_m: f64, m: u64, h: EnergyH) -> CrossingOutcome {
    let s = if m % 2 == 1 { u_m } else { -u_m };
    if (s - h.0).abs() < SEPARATRIX_TOLERANCE {
        CrossingOutcome::SeparatrixLike
    } else if s < h.0 {
        CrossingOutcome::Continue
    } else {
        CrossingOutcome::Turn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    LargeJump,
    SmallJumpDiffusive,
    SmallJumpBoundary,
}

/// Ratio of `K` to the narrower arc below which the walk counts as diffusive.
pub const DIFFUSIVE_RATIO: f64 = 0.2;

pub fn regime_classify(k: JumpAmplitude, h: EnergyH) -> Regime {
    let narrow = h.0.clamp(-1.0, 1.0).asin().min(h.0.clamp(-1.0, 1.0).acos());
    if k.0 >= PI / 2.0 {
        Regime::LargeJump
    } else if k.0 <= DIFFUSIVE_RATIO * narrow {
        Regime::SmallJumpDiffusive
    } else {
        Regime::SmallJumpBoundary
    }
}

/// One node crossing produced by the map walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCrossing {
    pub m: u64,
    /// Direction of travel through the node.
    pub direction: i8,
    pub u_after: f64,
    pub outcome: CrossingOutcome,
}

/// Crossing-level walk equivalent to the reduced equations: the atom crosses
/// a node, `u` jumps, and the turn rule decides the direction of the next crossing.
#[derive(Debug, Clone)]
pub struct MapWalk {
    pub state: MapState,
    pub k: JumpAmplitude,
    pub h: EnergyH,
    direction: i8,
    rng: ChaCha8Rng,
}

impl MapWalk {
    /// Starts in a cell with `cos x > 0` moving towards larger x.
    pub fn new(u0: f64, k: JumpAmplitude, h: EnergyH, rng: ChaCha8Rng) -> Result<Self> {
        if !(h.0 > 0.0) {
            return Err(Error::domain("the walk needs H > 0"));
        }
        Ok(MapWalk { state: MapState::new(u0)?, k, h, direction: 1, rng })
    }

    pub fn step(&mut self) -> MapCrossing {
        let phi = draw_phase(&mut self.rng);
        self.state = stochastic_jump(&self.state, self.k, phi);
        let u = self.state.u();
        let outcome = classify_crossing(u, self.state.m, self.h);
        let direction = self.direction;
        // A separatrix-like approach never completes; it is resolved as a turn.
        if outcome != CrossingOutcome::Continue {
            self.direction = -self.direction;
        }
        MapCrossing { m: self.state.m, direction, u_after: u, outcome }
    }
}

struct Reduced {
    omega_r: f64,
    u: f64,
}

impl OdeSystem<2> for Reduced {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 2], dy: &mut [f64; 2]) {
        dy[0] = self.omega_r * y[1];
        dy[1] = -self.u * y[0].sin();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedSample {
    pub tau: f64,
    pub x: f64,
    pub p: f64,
    pub u_m: f64,
    pub m: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub samples: Vec<ReducedSample>,
    pub crossings: Vec<CrossingEvent>,
    pub turns: Vec<TurningEvent>,
}

/// Integrates `ẋ = ω_r p`, `ṗ = −u_m sin x` with `u_m` updated by the stochastic map at
/// every node crossing. The stepper restarts at each crossing.
pub fn integrate_reduced(
    x0: f64,
    p0: f64,
    state: MapState,
    params: &LatticeParams,
    cfg: &IntegratorConfig,
    tau_max: f64,
    rng: &mut impl Rng,
) -> Result<ReducedTrajectory> {
    cfg.validate()?;
    if !(tau_max > 0.0) {
        return Err(Error::invalid("tau_max must be positive"));
    }
    let pn = {
        let h = 0.5 * params.omega_r * p0 * p0 - state.u() * x0.cos();
        p_node(EnergyH(h), params.omega_r)?
    };
    let k = jump_amplitude(params, pn);
    let mut st = state;
    if x0.cos() < 0.0 && st.m.is_multiple_of(2) {
        st.m += 1;
    }
    let mut sys = Reduced { omega_r: params.omega_r, u: st.u() };
    let mut stepper = Dop853::new(&sys, 0.0, [x0, p0], cfg.step_control())?;
    let mut samples = vec![ReducedSample { tau: 0.0, x: x0, p: p0, u_m: sys.u, m: st.m }];
    let mut crossings = Vec::new();
    let mut turns = Vec::new();
    let mut steps: u64 = 0;
    while stepper.t() < tau_max {
        stepper.step(&sys, tau_max)?;
        steps += 1;
        let (y0, y1) = (*stepper.y_prev(), *stepper.y());
        let crossing = node_cell(y0[0]) != node_cell(y1[0]);
        let turn = (y0[1] > 0.0) != (y1[1] > 0.0);
        if crossing || turn {
            let seg = stepper.dense(&sys).clone();
            for root in locate_events(&seg, &[EventKind::NodeCrossing, EventKind::Turn], cfg.event_tol) {
                let y = seg.eval(root.tau);
                match root.kind {
                    EventKind::Turn => turns.push(TurningEvent { tau: root.tau, x: y[0], m: st.m }),
                    EventKind::NodeCrossing => {
                        let before = node_cell(seg.eval_component(seg.t0(), 0));
                        let after = node_cell(y[0]);
                        st = stochastic_jump(&st, k, draw_phase(rng));
                        sys.u = st.u();
                        crossings.push(CrossingEvent {
                            m: st.m,
                            tau: root.tau,
                            x_node: node_between(before.min(after)),
                            p_at_node: y[1],
                            direction: if after > before { 1 } else { -1 },
                            u_after: Some(sys.u),
                        });
                        stepper.reset(&sys, root.tau, y);
                        break;
                    }
                }
            }
        }
        if cfg.sample_stride > 0 && steps.is_multiple_of(cfg.sample_stride as u64) {
            let y = stepper.y();
            samples.push(ReducedSample { tau: stepper.t(), x: y[0], p: y[1], u_m: sys.u, m: st.m });
        }
    }
    let y = stepper.y();
    if samples.last().map(|s| s.tau) != Some(stepper.t()) {
        samples.push(ReducedSample { tau: stepper.t(), x: y[0], p: y[1], u_m: sys.u, m: st.m });
    }
    Ok(ReducedTrajectory { samples, crossings, turns })
}

/// Energy of the reduced dynamics, `ω_r p²/2 − u_m cos x`.
pub fn reduced_energy(s: &ReducedSample, omega_r: f64) -> f64 {
    0.5 * omega_r * s.p * s.p - s.u_m * s.x.cos()
}

/// Reduced samples as CSV with columns `tau,x,p,u_m,m`.
pub fn write_reduced_csv<W: Write>(samples: &[ReducedSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "tau,x,p,u_m,m")?;
    for s in samples {
        writeln!(w, "{},{},{},{},{}", s.tau, s.x, s.p, s.u_m, s.m)?;
    }
    Ok(())
}
