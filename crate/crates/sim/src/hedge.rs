//! Least-squares Monte Carlo replication.

use std::collections::BTreeMap;

use martrep_core::exec::ExecPolicy;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::paths::{Channel, PathBatch};
use crate::payoff::Payoff;

/// Designs whose condition number exceeds this are solved with a ridge.
pub const MAX_CONDITION: f64 = 1e10;

/// Regression of one interval's value increments inside one cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRegression {
    pub from: f64,
    pub to: f64,
    pub cell: (i32, i32),
    pub n: usize,
    /// One coefficient per basis channel.
    pub coefficients: Vec<f64>,
    pub condition: f64,
    pub ridge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HedgeReport {
    pub payoff: String,
    pub basis: Vec<Channel>,
    pub initial_value: f64,
    pub regressions: Vec<CellRegression>,
    pub rmse: f64,
    pub r_squared: f64,
    pub ridge_cells: usize,
}

impl HedgeReport {
    pub fn max_abs_coefficient(&self, channel: Channel) -> f64 {
        let j = self.basis.iter().position(|c| *c == channel);
        j.map_or(0.0, |j| {
            self.regressions
                .iter()
                .map(|r| r.coefficients[j].abs())
                .fold(0.0, f64::max)
        })
    }
}

fn condition_number(gram: &DMatrix<f64>) -> f64 {
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn solve(x: &DMatrix<f64>, y: &DVector<f64>) -> (Vec<f64>, f64, bool) {
    let k = x.ncols();
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    let condition = condition_number(&gram);
    if condition.is_finite() && condition <= MAX_CONDITION {
        if let Some(chol) = gram.clone().cholesky() {
            return (chol.solve(&rhs).iter().cloned().collect(), condition, false);
        }
    }
    let scale = gram.trace() / k as f64;
    let lambda = if scale > 0.0 { 1e-10 * scale } else { 1e-12 };
    let ridged = gram + DMatrix::identity(k, k) * lambda;
    let coef = ridged
        .cholesky()
        .map(|c| c.solve(&rhs).iter().cloned().collect())
        .unwrap_or_else(|| vec![0.0; k]);
    (coef, condition, true)
}

/// Value process from cell means of the payoff, regressed interval by
/// interval on the basis increments within each `G`-cell.
pub fn hedge_mc(batch: &PathBatch, payoff: &Payoff, payoff_text: &str, basis: &[Channel]) -> HedgeReport {
    let x = payoff.eval(batch);
    let n_times = batch.n_times();
    // V_i per path: mean payoff over the path's cell at record i.
    let values: Vec<Vec<f64>> = ExecPolicy::default().map_range(n_times, |i| {
        let mut sums: BTreeMap<(i32, i32), (f64, usize)> = BTreeMap::new();
        for p in 0..batch.n {
            let e = sums.entry(batch.cell(p, i)).or_insert((0.0, 0));
            e.0 += x[p];
            e.1 += 1;
        }
        (0..batch.n)
            .map(|p| {
                let (s, c) = sums[&batch.cell(p, i)];
                s / c as f64
            })
            .collect()
    });
    let per_interval = ExecPolicy::default().map_range(n_times.saturating_sub(1), |j| {
        let i = j + 1;
        let mut groups: BTreeMap<(i32, i32), Vec<usize>> = BTreeMap::new();
        for p in 0..batch.n {
            groups.entry(batch.cell(p, i - 1)).or_default().push(p);
        }
        let mut regs = Vec::new();
        let mut gains = vec![0.0; batch.n];
        for (cell, paths) in groups {
            let design = DMatrix::from_fn(paths.len(), basis.len(), |r, c| batch.increment(paths[r], i, basis[c]));
            let target = DVector::from_fn(paths.len(), |r, _| values[i][paths[r]] - values[i - 1][paths[r]]);
            let (coefficients, condition, ridge) = if basis.is_empty() {
                (Vec::new(), 1.0, false)
            } else {
                solve(&design, &target)
            };
            for (r, &p) in paths.iter().enumerate() {
                gains[p] = (0..basis.len()).map(|c| coefficients[c] * design[(r, c)]).sum();
            }
            regs.push(CellRegression {
                from: batch.times[i - 1],
                to: batch.times[i],
                cell,
                n: paths.len(),
                coefficients,
                condition,
                ridge,
            });
        }
        (regs, gains)
    });
    let initial_value = x.iter().sum::<f64>() / batch.n as f64;
    let mut replicated = vec![initial_value; batch.n];
    let mut regressions = Vec::new();
    for (regs, gains) in per_interval {
        regressions.extend(regs);
        for (r, g) in replicated.iter_mut().zip(gains) {
            *r += g;
        }
    }
    let sse: f64 = x.iter().zip(&replicated).map(|(a, b)| (a - b) * (a - b)).sum();
    let sst: f64 = x.iter().map(|a| (a - initial_value) * (a - initial_value)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse <= 1e-18 {
        1.0
    } else {
        0.0
    };
    HedgeReport {
        payoff: payoff_text.to_string(),
        basis: basis.to_vec(),
        initial_value,
        ridge_cells: regressions.iter().filter(|r| r.ridge).count(),
        regressions,
        rmse: (sse / batch.n as f64).sqrt(),
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{simulate, SimConfig};
    use crate::presets::preset;

    fn run(preset_name: &str, payoff: &str, basis: &[Channel], n: usize, dt: f64) -> HedgeReport {
        let b = simulate(&preset(preset_name).unwrap(), &SimConfig::new(n, dt, 17)).unwrap();
        hedge_mc(&b, &Payoff::parse(payoff).unwrap(), payoff, basis)
    }

    #[test]
    fn constant_payoff_needs_no_hedge() {
        let r = run("baseline", "3", &Channel::TRIPLET, 2000, 0.01);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.r_squared, 1.0);
        for c in Channel::TRIPLET {
            assert!(r.max_abs_coefficient(c) < 1e-9);
        }
    }

    #[test]
    fn terminal_h_prime_is_its_own_hedge() {
        let r = run("baseline", "H_prime", &Channel::TRIPLET, 20_000, 0.01);
        assert!(r.r_squared > 0.99, "{}", r.r_squared);
        for reg in r.regressions.iter().filter(|g| g.n > 1000 && !g.ridge) {
            assert!((reg.coefficients[1] - 1.0).abs() < 0.05, "{reg:?}");
        }
    }

    #[test]
    fn bracket_channel_is_needed() {
        let full = run("baseline", "1{tau==2}*1{eta==2}", &Channel::TRIPLET, 20_000, 1e-3);
        let pair = run("baseline", "1{tau==2}*1{eta==2}", &[Channel::M, Channel::HPrime], 20_000, 1e-3);
        assert!(full.r_squared >= 0.99, "{}", full.r_squared);
        assert!(pair.r_squared < full.r_squared);
    }

    #[test]
    fn error_shrinks_with_dt() {
        let coarse = run("baseline", "1{tau==2}", &Channel::TRIPLET, 20_000, 0.1);
        let fine = run("baseline", "1{tau==2}", &Channel::TRIPLET, 20_000, 1e-3);
        assert!(fine.rmse < coarse.rmse);
    }

    #[test]
    fn density_law_needs_no_bracket_channel() {
        let full = run("density", "1{tau<=2}", &Channel::TRIPLET, 20_000, 1e-2);
        let pair = run("density", "1{tau<=2}", &[Channel::M, Channel::HPrime], 20_000, 1e-2);
        assert!((full.r_squared - pair.r_squared).abs() < 1e-6);
        assert!(full.ridge_cells > 0);
    }
}
