//! Event-length histograms: unit bins up to 100, ten log bins per decade above.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest length with its own unit bin.
pub const LINEAR_MAX: u64 = 100;
pub const BINS_PER_DECADE: u32 = 10;
const LOG_DECADES: u32 = 12;

fn standard_edges() -> Vec<u64> {
    let mut edges: Vec<u64> = (0..=LINEAR_MAX + 1).collect();
    let mut k = 1;
    loop {
        let e = (LINEAR_MAX as f64 * 10f64.powf(k as f64 / BINS_PER_DECADE as f64)).ceil() as u64;
        if e > *edges.last().unwrap() {
            edges.push(e);
        }
        if k >= LOG_DECADES * BINS_PER_DECADE {
            break;
        }
        k += 1;
    }
    edges
}

/// Counts of event lengths. `mass` of a bin is its share of all recorded events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfHistogram {
    edges: Vec<u64>,
    counts: Vec<u64>,
    total: u64,
    overflow: u64,
}

impl Default for PdfHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl PdfHistogram {
    pub fn new() -> Self {
        let edges = standard_edges();
        let counts = vec![0; edges.len() - 1];
        PdfHistogram { edges, counts, total: 0, overflow: 0 }
    }

    pub fn bin_index(&self, l: u64) -> Option<usize> {
        if l <= LINEAR_MAX {
            return Some(l as usize);
        }
        if l >= *self.edges.last().unwrap() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= l) - 1)
    }

    pub fn add(&mut self, l: u64) {
        self.add_n(l, 1);
    }

    pub fn add_n(&mut self, l: u64, n: u64) {
        match self.bin_index(l) {
            Some(i) => self.counts[i] += n,
            None => self.overflow += n,
        }
        self.total += n;
    }

    pub fn merge(&mut self, other: &PdfHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.overflow += other.overflow;
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Events longer than the last edge; counted in `total` but in no bin.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// `[l_lo, l_hi)` of bin `i`.
    pub fn bounds(&self, i: usize) -> (u64, u64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn width(&self, i: usize) -> u64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mass(&self, i: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[i] as f64 / self.total as f64
        }
    }

    /// Mass per unit length.
    pub fn density(&self, i: usize) -> f64 {
        self.mass(i) / self.width(i) as f64
    }

    /// Representative length of bin `i`: its integer value, or the geometric mean
    /// of the first and last lengths of a wide bin.
    pub fn center(&self, i: usize) -> f64 {
        let (lo, hi) = self.bounds(i);
        if hi - lo == 1 {
            lo as f64
        } else {
            ((lo as f64) * ((hi - 1) as f64)).sqrt()
        }
    }

    /// Last bin holding any events.
    pub fn last_occupied(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "l_lo,l_hi,count,mass")?;
        let last = self.last_occupied().unwrap_or(0);
        for i in 0..=last {
            let (lo, hi) = self.bounds(i);
            writeln!(w, "{lo},{hi},{},{:.17e}", self.counts[i], self.mass(i))?;
        }
        Ok(())
    }
}

/// Histogram of the given lengths.
pub fn empirical_pdf(lengths: impl IntoIterator<Item = u64>) -> Result<PdfHistogram> {
    let mut h = PdfHistogram::new();
    for l in lengths {
        h.add(l);
    }
    if h.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_are_strictly_increasing() {
        let h = PdfHistogram::new();
        assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(h.bounds(100), (100, 101));
        assert_eq!(h.bounds(101), (101, 126));
        assert_eq!(h.bounds(102), (126, 159));
        assert_eq!(h.bounds(103).1, 200);
    }

    #[test]
    fn binning_examples() {
        let h = empirical_pdf([1, 1, 2, 5]).unwrap();
        assert_eq!(h.count(1), 2);
        assert_eq!(h.count(2), 1);
        assert_eq!(h.count(5), 1);
        assert_eq!(h.mass(1), 0.5);
        let h = empirical_pdf([150]).unwrap();
        assert_eq!(h.count(h.bin_index(150).unwrap()), 1);
        assert_eq!(h.bounds(h.bin_index(150).unwrap()), (126, 159));
        assert!(matches!(empirical_pdf([]), Err(Error::EmptySample)));
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = empirical_pdf([1, 2, 3000]).unwrap();
        let b = empirical_pdf([2, 7]).unwrap();
        a.merge(&b);
        assert_eq!(a.total(), 5);
        assert_eq!(a.count(2), 2);
        let s: f64 = (0..a.len()).map(|i| a.mass(i)).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let h = empirical_pdf([0, 2]).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "l_lo,l_hi,count,mass");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1,1,"));
    }
}
