//! Exit-time scans `T(Δ)` between the nodes at `x = −π/2` and `x = 3π/2`,
//! their smooth/unresolved classification, recursive refinement, and the
//! conditions for first- and second-order singular structure.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AtomState, EnergyH, LatticeParams, DEFAULT_OMEGA_R};
use crate::error::{Error, Result};
use crate::integrator::{Event, IntegratorConfig, Propagator};
use crate::nodemap::{jump_amplitude, p_node};
use crate::par::map_indexed;

const LEFT_BORDER: f64 = -FRAC_PI_2;
const RIGHT_BORDER: f64 = 3.0 * FRAC_PI_2;
const CENTRAL_NODE: f64 = FRAC_PI_2;

/// Default detuning range of a scan.
pub const DEFAULT_SCAN_RANGE: (f64, f64) = (-0.035, -0.001);

/// Relative neighbour-to-neighbour change of `T` allowed inside a smooth segment.
pub const SMOOTH_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExitProtocol {
    pub p0: f64,
    pub omega_r: f64,
    pub x0: f64,
    pub u0: f64,
    pub v0: f64,
    pub z0: f64,
    pub tau_max: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ExitProtocol {
    fn default() -> Self {
        ExitProtocol {
            p0: 200.0,
            omega_r: DEFAULT_OMEGA_R,
            x0: 0.0,
            u0: 0.0,
            v0: 0.0,
            z0: -1.0,
            tau_max: 1e6,
            integrator: IntegratorConfig { abs_tol: 1e-11, rel_tol: 1e-11, ..IntegratorConfig::default() },
        }
    }
}

impl ExitProtocol {
    pub fn state(&self) -> Result<AtomState> {
        AtomState::normalized(self.x0, self.p0, self.u0, self.v0, self.z0)
    }

    /// Energy at detuning `delta`.
    pub fn energy(&self, delta: f64) -> EnergyH {
        EnergyH(0.5 * self.omega_r * self.p0 * self.p0 - self.u0 * self.x0.cos() - 0.5 * delta * self.z0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0) {
            return Err(Error::invalid("p0 must be positive"));
        }
        if !(self.tau_max > 0.0) {
            return Err(Error::invalid("tau_max must be positive"));
        }
        if !(self.x0 > LEFT_BORDER && self.x0 < RIGHT_BORDER) {
            return Err(Error::invalid("x0 must lie between the border nodes"));
        }
        LatticeParams::new(self.omega_r, 0.0)?;
        self.integrator.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitSide {
    Left,
    Right,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeRecord {
    pub delta: f64,
    /// Exit time, or the cap when censored.
    pub t: f64,
    pub censored: bool,
    /// Crossings of the central node before exit.
    pub m: u64,
    pub exit_side: ExitSide,
}

pub fn exit_time(delta: f64, proto: &ExitProtocol) -> Result<ExitTimeRecord> {
    proto.validate()?;
    let s0 = proto.state()?;
    let mut prop = Propagator::new(&s0, LatticeParams::new(proto.omega_r, delta)?, proto.integrator)?;
    let mut m = 0;
    let mut exit = None;
    let flow = prop.advance(proto.tau_max, &mut |_, _| {}, &mut |ev| {
        if let Event::Crossing(c) = ev {
            if (c.x_node - CENTRAL_NODE).abs() < 1e-6 {
                m += 1;
            } else if (c.x_node - LEFT_BORDER).abs() < 1e-6 {
                exit = Some((c.tau, ExitSide::Left));
                return ControlFlow::Break(());
            } else if (c.x_node - RIGHT_BORDER).abs() < 1e-6 {
                exit = Some((c.tau, ExitSide::Right));
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(match (flow, exit) {
        (ControlFlow::Break(()), Some((t, side))) => ExitTimeRecord { delta, t, censored: false, m, exit_side: side },
        _ => ExitTimeRecord { delta, t: proto.tau_max, censored: true, m, exit_side: ExitSide::None },
    })
}

/// One failed scan cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub delta: f64,
    pub reason: String,
}

/// Exit times on `resolution` evenly spaced detunings including both ends.
pub fn scan(
    lo: f64,
    hi: f64,
    resolution: usize,
    proto: &ExitProtocol,
) -> Result<(Vec<ExitTimeRecord>, Vec<CellFailure>)> {
    if resolution < 2 {
        return Err(Error::invalid("resolution must be at least 2"));
    }
    if !(hi > lo) {
        return Err(Error::invalid("empty detuning interval"));
    }
    proto.validate()?;
    let cells = map_indexed(resolution, |i| {
        let delta = lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
        exit_time(delta, proto).map_err(|e| CellFailure { delta, reason: e.to_string() })
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for c in cells {
        match c {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok((records, failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Smooth,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Inclusive record indices.
    pub first: usize,
    pub last: usize,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub m_min: u64,
    pub m_max: u64,
    pub censored: usize,
}

fn smooth_link(a: &ExitTimeRecord, b: &ExitTimeRecord, threshold: f64) -> bool {
    !a.censored && !b.censored && a.m == b.m && (a.t - b.t).abs() < threshold * a.t.min(b.t)
}

/// Splits a scan into maximal smooth runs (at least two samples linked by
/// constant `m` and small relative change of `T`) and the unresolved runs between them.
pub fn classify_intervals(records: &[ExitTimeRecord], threshold: f64) -> Vec<Segment> {
    let n = records.len();
    let mut smooth = vec![false; n];
    for i in 1..n {
        if smooth_link(&records[i - 1], &records[i], threshold) {
            smooth[i - 1] = true;
            smooth[i] = true;
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let kind = if smooth[i] { SegmentKind::Smooth } else { SegmentKind::Unresolved };
        let mut j = i;
        while j + 1 < n {
            let next_kind = if smooth[j + 1] { SegmentKind::Smooth } else { SegmentKind::Unresolved };
            let continues = match kind {
                SegmentKind::Smooth => next_kind == kind && smooth_link(&records[j], &records[j + 1], threshold),
                SegmentKind::Unresolved => next_kind == kind,
            };
            if !continues {
                break;
            }
            j += 1;
        }
        let run = &records[i..=j];
        out.push(Segment {
            kind,
            first: i,
            last: j,
            delta_lo: run[0].delta,
            delta_hi: run[run.len() - 1].delta,
            m_min: run.iter().map(|r| r.m).min().unwrap(),
            m_max: run.iter().map(|r| r.m).max().unwrap(),
            censored: run.iter().filter(|r| r.censored).count(),
        });
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub resolution: usize,
    pub max_depth: usize,
    pub factor: f64,
    pub threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { resolution: 1000, max_depth: 4, factor: 10.0, threshold: SMOOTH_THRESHOLD }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::invalid("resolution must be at least 2"));
        }
        if !(self.factor >= 10.0) {
            return Err(Error::invalid("refinement factor must be at least 10"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanInterval {
    pub id: usize,
    pub parent: Option<usize>,
    pub level: usize,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub records: Vec<ExitTimeRecord>,
    pub failures: Vec<CellFailure>,
    pub segments: Vec<Segment>,
}

impl ScanInterval {
    pub fn has_both_kinds(&self) -> bool {
        self.segments.iter().any(|s| s.kind == SegmentKind::Smooth)
            && self.segments.iter().any(|s| s.kind == SegmentKind::Unresolved)
    }
}

/// Scans `[lo, hi]`, then repeatedly magnifies the largest unresolved segment by `factor`.
pub fn refine(lo: f64, hi: f64, proto: &ExitProtocol, cfg: &RefineConfig) -> Result<Vec<ScanInterval>> {
    cfg.validate()?;
    let mut out: Vec<ScanInterval> = Vec::new();
    let (mut a, mut b) = (lo, hi);
    let mut parent = None;
    for level in 0..cfg.max_depth {
        let (records, failures) = scan(a, b, cfg.resolution, proto)?;
        let segments = classify_intervals(&records, cfg.threshold);
        let id = out.len();
        out.push(ScanInterval { id, parent, level, delta_lo: a, delta_hi: b, records, failures, segments });
        let node = &out[id];
        let Some(target) = node
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::Unresolved)
            .max_by_key(|s| (s.last - s.first, std::cmp::Reverse(s.first)))
        else {
            break;
        };
        let width = (b - a) / cfg.factor;
        let centre = 0.5 * (target.delta_lo + target.delta_hi);
        let new_a = (centre - 0.5 * width).clamp(a, b - width);
        a = new_a;
        b = new_a + width;
        parent = Some(id);
    }
    Ok(out)
}

/// CSV of all records with their level and interval id.
pub fn write_scan_csv<W: Write>(tree: &[ScanInterval], mut w: W) -> std::io::Result<()> {
    writeln!(w, "delta,T_or_censored,m,exit_side,level,parent_interval_id")?;
    for node in tree {
        for r in &node.records {
            let t = if r.censored { "censored".to_string() } else { format!("{:.17e}", r.t) };
            let side = match r.exit_side {
                ExitSide::Left => "left",
                ExitSide::Right => "right",
                ExitSide::None => "none",
            };
            let parent = node.parent.map_or(String::new(), |p| p.to_string());
            writeln!(w, "{:.17e},{t},{},{side},{},{parent}", r.delta, r.m, node.level)?;
        }
    }
    Ok(())
}

/// Refinement tree without the per-sample records.
pub fn tree_json(tree: &[ScanInterval]) -> serde_json::Value {
    let nodes: Vec<_> = tree
        .iter()
        .map(|n| {
            serde_json::json!({
                "id": n.id,
                "parent": n.parent,
                "level": n.level,
                "delta_lo": n.delta_lo,
                "delta_hi": n.delta_hi,
                "samples": n.records.len(),
                "failures": n.failures,
                "segments": n.segments,
                "children": tree.iter().filter(|c| c.parent == Some(n.id)).map(|c| c.id).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({ "intervals": nodes })
}

fn outcome(r: &ExitTimeRecord) -> (u64, ExitSide, bool) {
    (r.m, r.exit_side, r.censored)
}

/// Bisects the detuning between two records with different outcomes towards the
/// singular point separating them. Stops at a censored record, after `max_iter`
/// halvings, or when the bracket reaches floating-point resolution. Returns every
/// evaluated record in evaluation order.
pub fn probe_border(
    a: &ExitTimeRecord,
    b: &ExitTimeRecord,
    proto: &ExitProtocol,
    max_iter: usize,
) -> Result<Vec<ExitTimeRecord>> {
    let (mut lo, mut hi) = (*a, *b);
    let mut out = Vec::new();
    for _ in 0..max_iter {
        if outcome(&lo) == outcome(&hi) {
            break;
        }
        let mid = 0.5 * (lo.delta + hi.delta);
        if mid == lo.delta || mid == hi.delta {
            break;
        }
        let r = exit_time(mid, proto)?;
        out.push(r);
        if r.censored {
            break;
        }
        if outcome(&r) == outcome(&lo) {
            lo = r;
        } else {
            hi = r;
        }
    }
    Ok(out)
}

/// Whether a single jump of size `K` can carry `θ` from `arcsin u₀` past `arcsin H`.
pub fn first_order_condition(u0: f64, h: EnergyH, k: f64) -> bool {
    (u0.asin() - h.0.asin()).abs() < k
}

fn jump_at(delta: f64, proto: &ExitProtocol) -> Result<(f64, f64)> {
    let h = proto.energy(delta);
    if !(h.0 > 0.0 && h.0 < 1.0) {
        return Err(Error::domain(format!("H = {} outside (0, 1)", h.0)));
    }
    let params = LatticeParams::new(proto.omega_r, delta)?;
    let k = jump_amplitude(&params, p_node(h, proto.omega_r)?).0;
    Ok((h.0, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureOrder {
    /// `|arcsin u₀ − arcsin H| = K`.
    First,
    /// `2 arcsin H = K`.
    Second,
}

/// Positive while the structure of the given order is absent, at `Δ = sign·s`.
fn structure_gap(s: f64, sign: f64, proto: &ExitProtocol, order: StructureOrder) -> Result<f64> {
    let (h, k) = jump_at(sign * s, proto)?;
    Ok(match order {
        StructureOrder::First => (proto.u0.asin() - h.asin()).abs() - k,
        StructureOrder::Second => 2.0 * h.asin() - k,
    })
}

/// Largest `|Δ|` keeping `0 < H < 1` along `Δ = sign·s`, capped at 1.
fn bracket_end(sign: f64, proto: &ExitProtocol) -> f64 {
    let h0 = proto.energy(0.0).0;
    let slope = -0.5 * sign * proto.z0;
    let lim = if slope < 0.0 {
        h0 / -slope
    } else if slope > 0.0 {
        (1.0 - h0) / slope
    } else {
        1.0
    };
    lim.min(1.0) * (1.0 - 1e-9)
}

/// Smallest `|Δ|` along `Δ = sign·|Δ|` at which structure of the given order can appear, by bisection.
pub fn structure_threshold(proto: &ExitProtocol, sign: f64, order: StructureOrder) -> Result<f64> {
    let gap = |s| structure_gap(s, sign, proto, order);
    let hi_end = bracket_end(sign, proto);
    let lo_end = hi_end * 1e-9;
    if gap(lo_end)? <= 0.0 {
        return Err(Error::NoRoot { lo: lo_end, hi: hi_end });
    }
    // Walk out to the first sign change so that the smallest root is bracketed.
    const SCAN: usize = 1000;
    let mut a = lo_end;
    let mut b = None;
    for i in 1..=SCAN {
        let s = lo_end + (hi_end - lo_end) * i as f64 / SCAN as f64;
        if gap(s)? <= 0.0 {
            b = Some(s);
            break;
        }
        a = s;
    }
    let mut b = b.ok_or(Error::NoRoot { lo: lo_end, hi: hi_end })?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if gap(mid)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-15 * b {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

pub fn second_order_threshold(proto: &ExitProtocol, sign: f64) -> Result<f64> {
    structure_threshold(proto, sign, StructureOrder::Second)
}

/// The second-order threshold by iterating `s ← 2 arcsin H(s) / (K(s)/s)`.
pub fn second_order_threshold_fixed_point(proto: &ExitProtocol, sign: f64, s0: f64) -> Result<f64> {
    let mut s = s0;
    for _ in 0..10_000 {
        let (h, k) = jump_at(sign * s, proto)?;
        let next = 2.0 * h.asin() * s / k;
        if (next - s).abs() < 1e-14 * s.max(1e-300) {
            return Ok(next);
        }
        s = next;
    }
    Err(Error::NoRoot { lo: s0, hi: s })
}

/// Force-free exit time to the right border, exact at `u₀ = 0`, `Δ = 0`.
pub fn ballistic_exit_time(proto: &ExitProtocol) -> f64 {
    (RIGHT_BORDER - proto.x0) / (proto.omega_r * proto.p0)
}
