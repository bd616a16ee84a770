//! Long-horizon integration of the full equations of motion with node-crossing
//! and turning-point events.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::dynamics::{bloch_norm, energy_of, rhs, AtomState, LatticeParams};
use crate::error::{Error, Result};
use crate::ode::{DenseOutput, Dop853, OdeSystem, StepControl, StepStats};

/// Residual on `|x − x_node|` at which crossing refinement stops.
pub const NODE_RESIDUAL: f64 = 1e-10;
/// Iteration cap for every bisection.
pub const MAX_BISECTIONS: usize = 128;
/// Dense-output subsamples per step used to separate close roots.
const SUBSAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Localization tolerance on τ for turning points.
    pub event_tol: f64,
    /// Store a sample every `sample_stride` accepted steps; 0 keeps only the end points.
    pub sample_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-13,
            max_step: 10.0,
            min_step: 1e-12,
            event_tol: 1e-9,
            sample_stride: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.event_tol > 0.0) {
            return Err(Error::invalid("event_tol must be positive"));
        }
        self.step_control().validate()
    }

    pub fn step_control(&self) -> StepControl {
        StepControl { abs_tol: self.abs_tol, rel_tol: self.rel_tol, max_step: self.max_step, min_step: self.min_step }
    }

    /// Both tolerances scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        IntegratorConfig { abs_tol: self.abs_tol * factor, rel_tol: self.rel_tol * factor, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(m: u64) -> Self {
        if m.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    /// Crossing counter; even values are followed by `cos x > 0`.
    pub m: u64,
    pub tau: f64,
    pub x_node: f64,
    pub p_at_node: f64,
    /// +1 when crossing towards larger x.
    pub direction: i8,
    /// `u` once the atom has left the node: at the next antinode or turning point.
    pub u_after: Option<f64>,
}

impl CrossingEvent {
    pub fn parity(&self) -> Parity {
        Parity::of(self.m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningEvent {
    pub tau: f64,
    pub x: f64,
    /// Number of crossings before the turn.
    pub m: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Crossing(CrossingEvent),
    Turn { turn: TurningEvent, u: f64 },
    Antinode { tau: f64, x: f64, u: f64 },
}

/// Running maxima of the invariant errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub max_delta_h: f64,
    pub max_delta_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: LatticeParams,
    pub samples: Vec<AtomState>,
    pub crossings: Vec<CrossingEvent>,
    pub turns: Vec<TurningEvent>,
    /// Maxima over every accepted step, not only the stored samples.
    pub drift: Drift,
    pub stats: StepStats,
}

pub(crate) struct Lattice(pub(crate) LatticeParams);

impl OdeSystem<5> for Lattice {
    #[inline]
    fn rhs(&self, _t: f64, y: &[f64; 5], dy: &mut [f64; 5]) {
        rhs(y, &self.0, dy);
    }
}

/// Index of the inter-node cell containing `x`; nodes sit at `π/2 + kπ`.
#[inline]
pub fn node_cell(x: f64) -> i64 {
    ((x - FRAC_PI_2) / PI).floor() as i64
}

/// Node separating cell `k` from cell `k + 1`.
#[inline]
pub fn node_between(k: i64) -> f64 {
    FRAC_PI_2 + (k + 1) as f64 * PI
}

#[inline]
fn antinode_cell(x: f64) -> i64 {
    (x / PI).floor() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    NodeCrossing,
    Turn,
}

/// A root located on a dense segment. `tau` is the far-side end of the final bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub tau: f64,
    pub kind: EventKind,
}

/// Bisects `f` on `[a, b]` where `f(a)` and `f(b)` differ in sign; returns the far-side end.
pub(crate) fn bisect(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    done: impl Fn(f64, f64, f64) -> bool,
) -> f64 {
    let fa = f(a);
    let mut fb = f(b);
    for _ in 0..MAX_BISECTIONS {
        if done(a, b, fb) {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (fa > 0.0) && fm != 0.0 {
            a = mid;
        } else {
            b = mid;
            fb = fm;
        }
    }
    b
}

/// Every node crossing and turning point on one dense segment, in time order.
///
/// Roots are separated by subsampling the interpolant, then refined by bisection:
/// crossings to `|x − x_node| ≤ 10⁻¹⁰`, turns to `event_tol` in τ.
pub fn locate_events<const N: usize>(seg: &DenseOutput<N>, kinds: &[EventKind], event_tol: f64) -> Vec<Root> {
    let (t0, t1) = (seg.t0(), seg.t1());
    let mut roots = Vec::new();
    let at = |j: usize| if j == SUBSAMPLES { t1 } else { t0 + (t1 - t0) * j as f64 / SUBSAMPLES as f64 };
    for j in 0..SUBSAMPLES {
        let (a, b) = (at(j), at(j + 1));
        for &kind in kinds {
            match kind {
                EventKind::NodeCrossing => {
                    let (ca, cb) = (node_cell(seg.eval_component(a, 0)), node_cell(seg.eval_component(b, 0)));
                    if ca == cb {
                        continue;
                    }
                    // Several nodes inside one subsample would need a finer split; the
                    // step-size limit keeps this from happening for physical momenta.
                    let node = node_between(ca.min(cb));
                    let t = bisect(|t| seg.eval_component(t, 0) - node, a, b, |_, _, fb| fb.abs() <= NODE_RESIDUAL);
                    roots.push(Root { tau: t, kind });
                }
                EventKind::Turn => {
                    let (pa, pb) = (seg.eval_component(a, 1), seg.eval_component(b, 1));
                    if (pa > 0.0) == (pb > 0.0) {
                        continue;
                    }
                    let t = bisect(|t| seg.eval_component(t, 1), a, b, |lo, hi, _| hi - lo <= event_tol);
                    roots.push(Root { tau: t, kind });
                }
            }
        }
    }
    roots.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    roots
}

/// Incremental integrator holding the stepper and event bookkeeping.
pub struct Propagator {
    sys: Lattice,
    cfg: IntegratorConfig,
    stepper: Dop853<5>,
    h0: f64,
    m: u64,
    drift: Drift,
    steps: u64,
}

impl Propagator {
    pub fn new(s0: &AtomState, params: LatticeParams, cfg: IntegratorConfig) -> Result<Self> {
        s0.validate()?;
        cfg.validate()?;
        let sys = Lattice(params);
        let stepper = Dop853::new(&sys, s0.tau, s0.to_array(), cfg.step_control())?;
        // Offset so that even counts are followed by cos x > 0.
        let m = if s0.x.cos() >= 0.0 { 0 } else { 1 };
        let h0 = energy_of(&s0.to_array(), &params);
        Ok(Propagator { sys, cfg, stepper, h0, m, drift: Drift::default(), steps: 0 })
    }

    pub fn state(&self) -> AtomState {
        AtomState::from_array(self.stepper.t(), self.stepper.y())
    }

    pub fn tau(&self) -> f64 {
        self.stepper.t()
    }

    pub fn crossings(&self) -> u64 {
        self.m
    }

    pub fn drift(&self) -> Drift {
        self.drift
    }

    pub fn stats(&self) -> StepStats {
        self.stepper.stats()
    }

    pub fn initial_energy(&self) -> f64 {
        self.h0
    }

    /// Steps until `tau_end`, reporting events in time order.
    ///
    /// `on_step` sees every accepted step; `on_event` may stop the integration, in which
    /// case the propagator is left at the end of the step containing the event.
    pub fn advance(
        &mut self,
        tau_end: f64,
        on_step: &mut dyn FnMut(u64, &AtomState),
        on_event: &mut dyn FnMut(Event) -> ControlFlow<()>,
    ) -> Result<ControlFlow<()>> {
        while self.stepper.t() < tau_end {
            self.stepper.step(&self.sys, tau_end)?;
            self.steps += 1;
            let y = *self.stepper.y();
            let y0 = *self.stepper.y_prev();
            let dh = (energy_of(&y, &self.sys.0) - self.h0).abs();
            let dn = (y[2] * y[2] + y[3] * y[3] + y[4] * y[4] - 1.0).abs();
            self.drift.max_delta_h = self.drift.max_delta_h.max(dh);
            self.drift.max_delta_norm = self.drift.max_delta_norm.max(dn);
            if !(dh.is_finite() && dn.is_finite()) {
                return Err(Error::StepFailure { tau: self.stepper.t(), step: 0.0 });
            }
            on_step(self.steps, &AtomState::from_array(self.stepper.t(), &y));

            let crossing = node_cell(y0[0]) != node_cell(y[0]);
            let turn = (y0[1] > 0.0) != (y[1] > 0.0);
            let antinode = antinode_cell(y0[0]) != antinode_cell(y[0]);
            if !(crossing || turn || antinode) {
                continue;
            }
            if self.emit_events(on_event).is_break() {
                return Ok(ControlFlow::Break(()));
            }
        }
        Ok(ControlFlow::Continue(()))
    }

    fn emit_events(&mut self, on_event: &mut dyn FnMut(Event) -> ControlFlow<()>) -> ControlFlow<()> {
        #[derive(Clone, Copy)]
        enum Tag {
            Node,
            Turn,
            Antinode,
        }
        let seg = self.stepper.dense(&self.sys).clone();
        let mut found: Vec<(f64, Tag)> =
            locate_events(&seg, &[EventKind::NodeCrossing, EventKind::Turn], self.cfg.event_tol)
                .into_iter()
                .map(|r| (r.tau, if r.kind == EventKind::NodeCrossing { Tag::Node } else { Tag::Turn }))
                .collect();
        // Antinodes only need u, which varies slowly; a coarse bisection suffices.
        let (t0, t1) = (seg.t0(), seg.t1());
        let at = |j: usize| if j == SUBSAMPLES { t1 } else { t0 + (t1 - t0) * j as f64 / SUBSAMPLES as f64 };
        for j in 0..SUBSAMPLES {
            let (a, b) = (at(j), at(j + 1));
            let (ka, kb) = (antinode_cell(seg.eval_component(a, 0)), antinode_cell(seg.eval_component(b, 0)));
            if ka != kb {
                let xa = ka.max(kb) as f64 * PI;
                let t = bisect(|t| seg.eval_component(t, 0) - xa, a, b, |lo, hi, _| hi - lo <= 1e-6);
                found.push((t, Tag::Antinode));
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cell = node_cell(seg.eval_component(t0, 0));
        for (t, tag) in found {
            let y = seg.eval(t);
            let ev = match tag {
                Tag::Node => {
                    self.m += 1;
                    let k = node_cell(y[0]);
                    let direction: i8 = if k > cell { 1 } else { -1 };
                    let x_node = node_between(k.min(cell));
                    cell = k;
                    Event::Crossing(CrossingEvent {
                        m: self.m,
                        tau: t,
                        x_node,
                        p_at_node: y[1],
                        direction,
                        u_after: None,
                    })
                }
                Tag::Turn => Event::Turn { turn: TurningEvent { tau: t, x: y[0], m: self.m }, u: y[2] },
                Tag::Antinode => Event::Antinode { tau: t, x: y[0], u: y[2] },
            };
            on_event(ev)?;
        }
        ControlFlow::Continue(())
    }
}

/// Integrates from `s0` over `[s0.tau, s0.tau + tau_max]`.
pub fn integrate(s0: &AtomState, params: LatticeParams, cfg: IntegratorConfig, tau_max: f64) -> Result<Trajectory> {
    if !(tau_max > 0.0) {
        return Err(Error::invalid("tau_max must be positive"));
    }
    let mut prop = Propagator::new(s0, params, cfg)?;
    let mut samples = vec![*s0];
    let mut crossings: Vec<CrossingEvent> = Vec::new();
    let mut turns = Vec::new();
    let stride = cfg.sample_stride;
    let mut last = *s0;
    let _ = prop.advance(
        s0.tau + tau_max,
        &mut |n, s| {
            if stride > 0 && n % stride as u64 == 0 {
                samples.push(*s);
            }
            last = *s;
        },
        &mut |ev| {
            match ev {
                Event::Crossing(c) => crossings.push(c),
                Event::Turn { turn, u } => {
                    settle(&mut crossings, u);
                    turns.push(turn);
                }
                Event::Antinode { u, .. } => settle(&mut crossings, u),
            }
            ControlFlow::Continue(())
        },
    )?;
    if samples.last().map(|s| s.tau) != Some(last.tau) {
        samples.push(last);
    }
    Ok(Trajectory { params, samples, crossings, turns, drift: prop.drift(), stats: prop.stats() })
}

fn settle(crossings: &mut [CrossingEvent], u: f64) {
    if let Some(c) = crossings.last_mut() {
        if c.u_after.is_none() {
            c.u_after = Some(u);
        }
    }
}

/// Maxima of `|H(τ) − H(0)|` and `|norm(τ) − 1|` over the stored samples.
pub fn invariant_drift(traj: &Trajectory) -> Result<(f64, f64)> {
    let first = traj.samples.first().ok_or(Error::EmptySample)?;
    let h0 = energy_of(&first.to_array(), &traj.params);
    let mut dh: f64 = 0.0;
    let mut dn: f64 = 0.0;
    for s in &traj.samples {
        dh = dh.max((energy_of(&s.to_array(), &traj.params) - h0).abs());
        dn = dn.max((bloch_norm(s) - 1.0).abs());
    }
    Ok((dh, dn))
}

/// Samples as CSV with columns `tau,x,p,u,v,z`.
pub fn write_samples_csv<W: Write>(samples: &[AtomState], mut w: W) -> std::io::Result<()> {
    writeln!(w, "tau,x,p,u,v,z")?;
    for s in samples {
        writeln!(w, "{},{},{},{},{},{}", s.tau, s.x, s.p, s.u, s.v, s.z)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EventRecord {
    kind: &'static str,
    m: u64,
    tau: f64,
    x: f64,
    p: f64,
}

/// Crossings and turns merged in time order, one JSON object per line.
pub fn write_events_jsonl<W: Write>(
    crossings: &[CrossingEvent],
    turns: &[TurningEvent],
    mut w: W,
) -> std::io::Result<()> {
    let mut recs: Vec<EventRecord> = crossings
        .iter()
        .map(|c| EventRecord { kind: "crossing", m: c.m, tau: c.tau, x: c.x_node, p: c.p_at_node })
        .chain(turns.iter().map(|t| EventRecord { kind: "turn", m: t.m, tau: t.tau, x: t.x, p: 0.0 }))
        .collect();
    recs.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    for r in recs {
        serde_json::to_writer(&mut w, &r)?;
        writeln!(w)?;
    }
    Ok(())
}
