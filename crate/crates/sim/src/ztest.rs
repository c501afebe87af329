//! Statistical martingale tests on simulated increments.

use std::collections::BTreeMap;

use martrep_core::exec::ExecPolicy;
use serde::Serialize;

use crate::paths::{Channel, PathBatch};

/// Violation threshold in standard errors.
pub const Z_THRESHOLD: f64 = 4.0;

/// Information the increments are conditioned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Conditioning {
    Unconditional,
    /// Whether `τ` has occurred.
    Survival,
    /// Occurrence status of `η` and of `τ`.
    Status,
    /// The `G`-cell: when `η` and `τ` were observed.
    Full,
}

impl Conditioning {
    fn key(self, batch: &PathBatch, path: usize, i: usize) -> (i32, i32) {
        let (e, t) = batch.cell(path, i);
        match self {
            Conditioning::Unconditional => (0, 0),
            Conditioning::Survival => (0, (t >= 0) as i32),
            Conditioning::Status => ((e >= 0) as i32, (t >= 0) as i32),
            Conditioning::Full => (e, t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZCell {
    /// Start and end of the increment.
    pub from: f64,
    pub to: f64,
    /// Cell key at `from`: record indices at which `η` and `τ` were seen.
    pub cell: (i32, i32),
    pub n: usize,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZTestReport {
    pub channel: Channel,
    pub conditioning: Conditioning,
    pub cells: Vec<ZCell>,
    /// Cells with fewer than two paths, skipped.
    pub skipped: Vec<(f64, (i32, i32), usize)>,
    pub max_abs_z: f64,
    pub passes: bool,
}

impl ZTestReport {
    /// Largest `|z|` among cells whose increment ends at `t`.
    pub fn max_abs_z_at(&self, t: f64) -> f64 {
        self.cells
            .iter()
            .filter(|c| (c.to - t).abs() < 1e-9)
            .map(|c| c.z.abs())
            .fold(0.0, f64::max)
    }
}

fn z_score(mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        mean / se
    } else if mean.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY.copysign(mean)
    }
}

/// `z = mean(increment) / SE` per record interval and conditioning cell;
/// sums run in path order, so results are reproducible.
pub fn martingale_ztest(batch: &PathBatch, channel: Channel, conditioning: Conditioning) -> ZTestReport {
    let per_interval = ExecPolicy::default().map_range(batch.n_times().saturating_sub(1), |j| {
        let i = j + 1;
        let mut groups: BTreeMap<(i32, i32), Vec<f64>> = BTreeMap::new();
        for p in 0..batch.n {
            groups
                .entry(conditioning.key(batch, p, i - 1))
                .or_default()
                .push(batch.increment(p, i, channel));
        }
        let mut cells = Vec::new();
        let mut skipped = Vec::new();
        for (cell, xs) in groups {
            let n = xs.len();
            if n < 2 {
                skipped.push((batch.times[i], cell, n));
                continue;
            }
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let std_error = (var / n as f64).sqrt();
            let z = z_score(mean, std_error);
            cells.push(ZCell {
                from: batch.times[i - 1],
                to: batch.times[i],
                cell,
                n,
                mean,
                std_error,
                z,
                violation: z.abs() > Z_THRESHOLD,
            });
        }
        (cells, skipped)
    });
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for (c, s) in per_interval {
        cells.extend(c);
        skipped.extend(s);
    }
    let max_abs_z = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    ZTestReport {
        channel,
        conditioning,
        passes: cells.iter().all(|c| !c.violation),
        cells,
        skipped,
        max_abs_z,
    }
}
