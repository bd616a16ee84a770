//! Flight and trapping statistics: segmentation, histograms, tail fits,
//! analytic laws and ensemble drivers.

pub mod analytic;
pub mod fit;
pub mod histogram;
pub mod segment;

use serde::{Deserialize, Serialize};

use crate::dynamics::{total_energy, AtomState, EnergyH, LatticeParams};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig};
use crate::nodemap::{CrossingOutcome, JumpAmplitude, MapWalk};
use crate::par::map_indexed;
use crate::seed::task_rng;

pub use analytic::*;
pub use fit::{compare_models, fit_tail, FitReport, ModelComparison, TailModel};
pub use histogram::{empirical_pdf, PdfHistogram};
pub use segment::{segment_events, RegionSegmenter, Segmentation, Segmented, TransportEvent, TurnSegmenter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Flight,
    Trapping,
}

/// Flight and trapping histograms of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PdfPair {
    pub flight: PdfHistogram,
    pub trapping: PdfHistogram,
    pub censored: u64,
    pub crossings: u64,
}

impl PdfPair {
    pub fn add(&mut self, e: &TransportEvent) {
        self.get_mut(e.kind).add(e.l);
    }

    pub fn get(&self, kind: EventClass) -> &PdfHistogram {
        match kind {
            EventClass::Flight => &self.flight,
            EventClass::Trapping => &self.trapping,
        }
    }

    pub fn get_mut(&mut self, kind: EventClass) -> &mut PdfHistogram {
        match kind {
            EventClass::Flight => &mut self.flight,
            EventClass::Trapping => &mut self.trapping,
        }
    }

    pub fn merge(&mut self, other: &PdfPair) {
        self.flight.merge(&other.flight);
        self.trapping.merge(&other.trapping);
        self.censored += other.censored;
        self.crossings += other.crossings;
    }
}

fn merge_all(parts: Vec<PdfPair>) -> PdfPair {
    let mut out = PdfPair::default();
    for p in &parts {
        out.merge(p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEnsemble {
    pub k: f64,
    pub h: f64,
    pub u0: f64,
    pub crossings_per_task: u64,
    pub tasks: usize,
    pub seed: u64,
    pub segmentation: Segmentation,
}

impl MapEnsemble {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::invalid("K must be finite and non-negative"));
        }
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::domain(format!("H = {} outside (0, 1)", self.h)));
        }
        if !(self.u0.abs() <= 1.0) {
            return Err(Error::invalid("|u0| must not exceed 1"));
        }
        if self.tasks == 0 || self.crossings_per_task == 0 {
            return Err(Error::invalid("tasks and crossings_per_task must be positive"));
        }
        Ok(())
    }

    fn run_task(&self, i: usize) -> Result<PdfPair> {
        let h = EnergyH(self.h);
        let mut walk = MapWalk::new(self.u0, JumpAmplitude(self.k), h, task_rng(self.seed, i as u64))?;
        let mut pair = PdfPair { crossings: self.crossings_per_task, ..Default::default() };
        let mut emit = |e: TransportEvent| pair_add(&mut pair.flight, &mut pair.trapping, &e);
        match self.segmentation {
            Segmentation::TurnBased => {
                let mut seg = TurnSegmenter::new(0.0);
                for n in 0..self.crossings_per_task {
                    let c = walk.step();
                    seg.crossing(n as f64);
                    if c.outcome != CrossingOutcome::Continue {
                        seg.turn(n as f64 + 0.5, None, &mut emit);
                    }
                }
                pair.censored = seg.censored();
            }
            Segmentation::RegionBased => {
                let mut seg = RegionSegmenter::new(h, 0.0);
                for n in 0..self.crossings_per_task {
                    let c = walk.step();
                    seg.crossing(n as f64, c.u_after, &mut emit);
                }
                pair.censored = seg.censored();
            }
        }
        Ok(pair)
    }

    /// Flight and trapping histograms from `tasks` independent walks.
    pub fn run(&self) -> Result<PdfPair> {
        self.validate()?;
        let parts: Result<Vec<_>> = map_indexed(self.tasks, |i| self.run_task(i)).into_iter().collect();
        Ok(merge_all(parts?))
    }
}

fn pair_add(flight: &mut PdfHistogram, trapping: &mut PdfHistogram, e: &TransportEvent) {
    match e.kind {
        EventClass::Flight => flight.add(e.l),
        EventClass::Trapping => trapping.add(e.l),
    }
}

/// Lengths of runs of equal turn-rule decisions: a flight of length `l` is
/// `l` continues closed by a turn, a trapping `l` turns closed by a continue.
#[derive(Debug, Clone, Default)]
pub struct DecisionRuns {
    continues: u64,
    turns: u64,
    seen_turn: bool,
    seen_continue: bool,
}

impl DecisionRuns {
    pub fn push(&mut self, outcome: CrossingOutcome, pair: &mut PdfPair) {
        if outcome == CrossingOutcome::Continue {
            if self.seen_continue {
                pair.trapping.add(self.turns);
            }
            self.seen_continue = true;
            self.turns = 0;
            self.continues += 1;
        } else {
            if self.seen_turn {
                pair.flight.add(self.continues);
            }
            self.seen_turn = true;
            self.continues = 0;
            self.turns += 1;
        }
    }
}

/// Decision-run histograms of the map walk.
pub fn map_decision_runs(ens: &MapEnsemble) -> Result<PdfPair> {
    ens.validate()?;
    let parts: Result<Vec<_>> = map_indexed(ens.tasks, |i| -> Result<PdfPair> {
        let mut walk = MapWalk::new(ens.u0, JumpAmplitude(ens.k), EnergyH(ens.h), task_rng(ens.seed, i as u64))?;
        let mut pair = PdfPair { crossings: ens.crossings_per_task, ..Default::default() };
        let mut runs = DecisionRuns::default();
        for _ in 0..ens.crossings_per_task {
            runs.push(walk.step().outcome, &mut pair);
        }
        Ok(pair)
    })
    .into_iter()
    .collect();
    Ok(merge_all(parts?))
}

/// Histograms from full trajectories started at each of `starts`.
pub fn ode_ensemble(
    starts: &[AtomState],
    params: LatticeParams,
    cfg: IntegratorConfig,
    tau_max: f64,
    segmentation: Segmentation,
) -> Result<PdfPair> {
    let parts: Result<Vec<_>> = map_indexed(starts.len(), |i| -> Result<PdfPair> {
        let s0 = &starts[i];
        let h = total_energy(s0, &params);
        let traj = integrate(s0, params, IntegratorConfig { sample_stride: 0, ..cfg }, tau_max)?;
        let seg = segment_events(&traj.crossings, &traj.turns, h, segmentation, s0.tau)?;
        let mut pair = PdfPair { censored: seg.censored, crossings: traj.crossings.len() as u64, ..Default::default() };
        for e in &seg.events {
            pair.add(e);
        }
        Ok(pair)
    })
    .into_iter()
    .collect();
    Ok(merge_all(parts?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(seg: Segmentation) -> MapEnsemble {
        MapEnsemble { k: 0.05, h: 0.6, u0: 0.0, crossings_per_task: 20_000, tasks: 3, seed: 7, segmentation: seg }
    }

    #[test]
    fn ensembles_are_reproducible() {
        for seg in [Segmentation::TurnBased, Segmentation::RegionBased] {
            let a = ens(seg).run().unwrap();
            let b = ens(seg).run().unwrap();
            assert_eq!(a, b);
            assert!(a.flight.total() > 0 && a.trapping.total() > 0);
        }
    }

    #[test]
    fn region_events_account_for_every_crossing() {
        let e = ens(Segmentation::RegionBased);
        let p = e.run().unwrap();
        let mass = |h: &PdfHistogram| -> u64 {
            (0..h.len()).map(|i| if h.width(i) == 1 { h.bounds(i).0 * h.count(i) } else { 0 }).sum()
        };
        let wide = |h: &PdfHistogram| (0..h.len()).any(|i| h.width(i) > 1 && h.count(i) > 0);
        if !wide(&p.flight) && !wide(&p.trapping) {
            assert_eq!(mass(&p.flight) + mass(&p.trapping) + p.censored, e.crossings_per_task * e.tasks as u64);
        }
    }

    #[test]
    fn decision_runs_follow_outcomes() {
        use CrossingOutcome::*;
        let mut pair = PdfPair::default();
        let mut r = DecisionRuns::default();
        for o in [Continue, Continue, Turn, Turn, Continue, Turn] {
            r.push(o, &mut pair);
        }
        // The first run of each kind is censored.
        assert_eq!(pair.flight.total(), 2);
        assert_eq!((pair.flight.count(0), pair.flight.count(1)), (1, 1));
        assert_eq!(pair.trapping.total(), 2);
        assert_eq!((pair.trapping.count(0), pair.trapping.count(2)), (1, 1));
    }

    #[test]
    fn bad_ensemble_is_rejected() {
        let mut e = ens(Segmentation::TurnBased);
        e.h = 1.5;
        assert!(e.run().is_err());
        e.h = 0.5;
        e.tasks = 0;
        assert!(e.run().is_err());
    }
}
