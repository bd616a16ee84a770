//! Splitting crossing sequences into flights and trappings.

use serde::{Deserialize, Serialize};

use crate::dynamics::EnergyH;
use crate::error::{Error, Result};
use crate::integrator::{CrossingEvent, TurningEvent};

use super::EventClass;

/// Shortest run between turns that counts as a flight.
pub const MIN_FLIGHT_RUN: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportEvent {
    pub kind: EventClass,
    /// Number of node crossings in the event.
    pub l: u64,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Distance between the bounding turns of a flight, when both are known.
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmentation {
    /// Runs of at least three crossings between turns are flights; shorter
    /// consecutive runs merge into one trapping.
    TurnBased,
    /// Runs of consecutive crossings after which `u` lies on the same arc:
    /// `|u| < H` for flights.
    RegionBased,
}

/// Streaming turn-based segmenter. Feed crossings and turns in time order.
#[derive(Debug, Clone, Default)]
pub struct TurnSegmenter {
    run: u64,
    run_start: f64,
    trap: u64,
    trap_start: f64,
    last_turn_x: Option<f64>,
}

impl TurnSegmenter {
    pub fn new(tau0: f64) -> Self {
        TurnSegmenter { run_start: tau0, trap_start: tau0, ..Default::default() }
    }

    pub fn crossing(&mut self, _tau: f64) {
        self.run += 1;
    }

    /// `x` is the turning position, if known.
    pub fn turn(&mut self, tau: f64, x: Option<f64>, emit: &mut impl FnMut(TransportEvent)) {
        if self.run >= MIN_FLIGHT_RUN {
            if self.trap > 0 {
                emit(TransportEvent {
                    kind: EventClass::Trapping,
                    l: self.trap,
                    tau_start: self.trap_start,
                    tau_end: self.run_start,
                    length: None,
                });
            }
            let length = match (self.last_turn_x, x) {
                (Some(a), Some(b)) => Some((b - a).abs()),
                _ => None,
            };
            emit(TransportEvent {
                kind: EventClass::Flight,
                l: self.run,
                tau_start: self.run_start,
                tau_end: tau,
                length,
            });
            self.trap = 0;
            self.trap_start = tau;
        } else {
            if self.trap == 0 {
                self.trap_start = self.run_start;
            }
            self.trap += self.run;
        }
        self.run = 0;
        self.run_start = tau;
        self.last_turn_x = x;
    }

    /// Crossings still open at the end; they belong to no event.
    pub fn censored(&self) -> u64 {
        self.run + self.trap
    }
}

/// Streaming region-based segmenter.
#[derive(Debug, Clone)]
pub struct RegionSegmenter {
    h: f64,
    current: Option<(EventClass, u64, f64)>,
    last_tau: f64,
}

impl RegionSegmenter {
    pub fn new(h: EnergyH, tau0: f64) -> Self {
        RegionSegmenter { h: h.0, current: None, last_tau: tau0 }
    }

    pub fn classify(&self, u_after: f64) -> EventClass {
        if u_after.abs() < self.h {
            EventClass::Flight
        } else {
            EventClass::Trapping
        }
    }

    pub fn crossing(&mut self, tau: f64, u_after: f64, emit: &mut impl FnMut(TransportEvent)) {
        let kind = self.classify(u_after);
        match &mut self.current {
            Some((k, l, _)) if *k == kind => *l += 1,
            _ => {
                if let Some((k, l, start)) = self.current.take() {
                    emit(TransportEvent { kind: k, l, tau_start: start, tau_end: self.last_tau, length: None });
                }
                self.current = Some((kind, 1, self.last_tau));
            }
        }
        self.last_tau = tau;
    }

    pub fn censored(&self) -> u64 {
        self.current.map_or(0, |c| c.1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segmented {
    pub events: Vec<TransportEvent>,
    /// Crossings of the unfinished last event.
    pub censored: u64,
}

/// Segments a recorded trajectory. Region-based segmentation needs `u_after` on every crossing.
pub fn segment_events(
    crossings: &[CrossingEvent],
    turns: &[TurningEvent],
    h: EnergyH,
    mode: Segmentation,
    tau0: f64,
) -> Result<Segmented> {
    let mut out = Segmented::default();
    let mut emit = |e| out.events.push(e);
    match mode {
        Segmentation::TurnBased => {
            let mut seg = TurnSegmenter::new(tau0);
            let mut ti = 0;
            for c in crossings {
                while ti < turns.len() && turns[ti].tau < c.tau {
                    seg.turn(turns[ti].tau, Some(turns[ti].x), &mut emit);
                    ti += 1;
                }
                seg.crossing(c.tau);
            }
            for t in &turns[ti..] {
                seg.turn(t.tau, Some(t.x), &mut emit);
            }
            out.censored = seg.censored();
        }
        Segmentation::RegionBased => {
            let mut seg = RegionSegmenter::new(h, tau0);
            let mut unsettled = 0;
            for (i, c) in crossings.iter().enumerate() {
                match c.u_after {
                    Some(u) => seg.crossing(c.tau, u, &mut emit),
                    // The horizon ended before u settled; it joins the censored tail.
                    None if i + 1 == crossings.len() => unsettled = 1,
                    None => return Err(Error::domain("crossing without u_after")),
                }
            }
            out.censored = seg.censored() + unsettled;
        }
    }
    Ok(out)
}
