//! Closed-form triplet evaluators and the simulate, test, hedge pipeline.

use martrep_core::mixed::{MixedModel, TripletValues};
use martrep_core::Result;
use serde::Serialize;

use crate::hedge::{hedge_mc, HedgeReport};
use crate::paths::{simulate, Channel, PathBatch, SimConfig, CONDITIONING_READING};
use crate::payoff::Payoff;
use crate::ztest::{martingale_ztest, Conditioning, ZTestReport};
use crate::SimError;

pub const DEFAULT_PAYOFF: &str = "1{tau==2}*1{eta==2}";

/// `M_t = W_t + 1_{η≤t} - A^η_t`, `H'_t = 1_{τ≤t} - A^{P,G}_t` and
/// `[M,H]_t` on one path.
#[derive(Clone, Copy, Debug)]
pub struct ExactTriplet<'a> {
    model: &'a MixedModel,
}

/// Contract error if a jump time is not a multiple of `dt`.
pub fn exact_triplet(model: &MixedModel, dt: f64) -> Result<ExactTriplet<'_>> {
    model.validate()?;
    model.check_commensurate(dt)?;
    Ok(ExactTriplet { model })
}

impl ExactTriplet<'_> {
    pub fn m(&self, t: f64, w: f64, eta: f64) -> f64 {
        self.model.evaluate(t, w, eta, None).m
    }

    pub fn h_prime(&self, t: f64, eta: f64, tau: Option<f64>) -> f64 {
        self.model.evaluate(t, 0.0, eta, tau).h_prime
    }

    pub fn mh(&self, t: f64, eta: f64, tau: Option<f64>) -> f64 {
        self.model.bracket_mh(t, eta, tau)
    }

    pub fn evaluate(&self, t: f64, w: f64, eta: f64, tau: Option<f64>) -> TripletValues {
        self.model.evaluate(t, w, eta, tau)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimReport {
    pub preset: String,
    pub model: MixedModel,
    pub seed: u64,
    pub n: usize,
    pub dt: f64,
    pub conditioning_reading: &'static str,
    pub record_times: Vec<f64>,
    pub ztests: Vec<ZTestReport>,
    pub hedges: Vec<HedgeReport>,
}

impl SimReport {
    pub fn ztest(&self, channel: Channel) -> Option<&ZTestReport> {
        self.ztests.iter().find(|z| z.channel == channel)
    }
}

/// Simulates, tests `M`, `H'` and `[M,H]` against the `G`-cells, and
/// hedges `payoff` with the full triplet and with `[M,H]` dropped.
pub fn run(
    label: &str,
    model: &MixedModel,
    cfg: &SimConfig,
    payoff: Option<&str>,
) -> std::result::Result<(SimReport, PathBatch), SimError> {
    let text = payoff.unwrap_or(DEFAULT_PAYOFF);
    let parsed = Payoff::parse(text)?;
    let batch = simulate(model, cfg)?;
    let ztests = Channel::TRIPLET
        .iter()
        .map(|&c| martingale_ztest(&batch, c, Conditioning::Full))
        .collect();
    let hedges = vec![
        hedge_mc(&batch, &parsed, text, &Channel::TRIPLET),
        hedge_mc(&batch, &parsed, text, &[Channel::M, Channel::HPrime]),
    ];
    let report = SimReport {
        preset: label.to_string(),
        model: model.clone(),
        seed: cfg.seed,
        n: cfg.n,
        dt: cfg.dt,
        conditioning_reading: CONDITIONING_READING,
        record_times: batch.times.clone(),
        ztests,
        hedges,
    };
    Ok((report, batch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;
    use martrep_core::mixed::{MixedMartingale, RandomTimeLaw};

    #[test]
    fn evaluators_on_the_baseline_preset() {
        let m = preset("baseline").unwrap();
        let x = exact_triplet(&m, 1.0).unwrap();
        // Before any jump only W moves M.
        assert!((x.m(0.5, 0.3, 2.0) - 0.3).abs() < 1e-12);
        // η = 1 at t = 1: jump 1 - P(η = 1).
        assert!((x.m(1.0, 0.0, 1.0) - 0.7).abs() < 1e-12);
        // η = 1 known before t = 2: the hazard of τ at 2 is P(τ=2 | η=1) = 0.6.
        assert!((x.h_prime(2.0, 1.0, Some(2.0)) - 0.4).abs() < 1e-12);
        // On {η ≥ 2} it is P(τ=2 | η ≥ 2) = 0.3.
        assert!((x.h_prime(2.0, 3.0, Some(4.0)) + 0.3).abs() < 1e-12);
        // After τ = 2 the remaining compensator jump at 4 is zero.
        assert!((x.h_prime(4.0, 3.0, Some(2.0)) - 0.7).abs() < 1e-12);
        // [M,H] jumps only at 2, on {η ≥ 2}: (1 - 4/7)(1 - 0.39).
        let b = 0.4 / 0.7;
        assert!((x.mh(4.0, 2.0, Some(2.0)) - (1.0 - b) * (1.0 - 0.39)).abs() < 1e-12);
        assert_eq!(x.mh(4.0, 1.0, Some(2.0)), 0.0);
        assert_eq!(x.mh(1.9, 2.0, Some(2.0)), 0.0);
        assert!(exact_triplet(&m, 0.3).is_err());
    }

    #[test]
    fn independence_keeps_the_shared_atom() {
        let m = preset("independent").unwrap();
        assert!(m.bracket_mh(4.0, 2.0, Some(2.0)).abs() > 0.1);
        assert!(m.bracket_drift(2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_tau_is_fully_compensated() {
        let eta = vec![(1.0, 0.5), (3.0, 0.5)];
        let laws = vec![RandomTimeLaw::atomic(vec![(4.0, 1.0)]).unwrap(); 2];
        let m = MixedModel::new(4.0, true, eta, laws).unwrap();
        for t in [0.0, 1.0, 2.5, 3.999, 4.0] {
            for e in [1.0, 3.0] {
                assert!(m.evaluate(t, 0.0, e, Some(4.0)).h_prime.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn density_part_leaves_bracket_atoms_alone() {
        let atomic = preset("baseline").unwrap();
        let mixed = preset("baseline-density").unwrap();
        assert_eq!(mixed.common_atom_times(), atomic.common_atom_times());
        // [M,H] is a pure jump process: constant off the shared atoms.
        for tau in [Some(0.7), Some(2.0), Some(3.3), Some(4.0), None] {
            for e in [1.0, 2.0, 3.0] {
                let before = mixed.bracket_mh(1.99, e, tau);
                assert_eq!(before, 0.0);
                let after = mixed.bracket_mh(2.0, e, tau);
                assert_eq!(after, mixed.bracket_mh(4.0, e, tau));
            }
        }
        // Its G-compensator has no jump where only the density acts.
        let g = |t: f64| mixed.g_compensator(t, 3.0, None);
        assert!((g(0.5) - g(0.5 - 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn covariation_only_sees_accessible_parts() {
        let model = preset("baseline-density").unwrap();
        let m = MixedMartingale {
            brownian: true,
            law: model.eta_law(),
        };
        let h = MixedMartingale {
            brownian: false,
            law: model.tau_marginal().unwrap(),
        };
        let (mp, hp) = (m.yoeurp_parts().unwrap(), h.yoeurp_parts().unwrap());
        let eps = 1e-9;
        for e in [1.0, 2.0, 3.0] {
            for tau in [Some(0.7), Some(2.0), Some(3.3), Some(4.0), None] {
                let mut jumps = vec![e, 0.7, 3.3];
                jumps.extend(model.tau_atom_times());
                let mut total = 0.0;
                let mut dp_total = 0.0;
                for &s in &jumps {
                    let dm = m.evaluate(s, 0.0, Some(e)) - m.evaluate(s - eps, 0.0, Some(e));
                    let dh = h.evaluate(s, 0.0, tau) - h.evaluate(s - eps, 0.0, tau);
                    total += dm * dh;
                    let dmp = mp.evaluate(s, 0.0, Some(e))[1] - mp.evaluate(s - eps, 0.0, Some(e))[1];
                    let dhp = hp.evaluate(s, 0.0, tau)[1] - hp.evaluate(s - eps, 0.0, tau)[1];
                    dp_total += dmp * dhp;
                }
                assert!((total - dp_total).abs() < 1e-6, "{e} {tau:?}");
            }
        }
    }

    #[test]
    fn pipeline_smoke_and_determinism() {
        let m = preset("baseline").unwrap();
        let cfg = SimConfig::new(10, 1e-2, 5);
        let (a, _) = run("baseline", &m, &cfg, None).unwrap();
        let (b, _) = run("baseline", &m, &cfg, None).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.hedges.len(), 2);
        assert!(matches!(run("baseline", &m, &cfg, Some("1{")), Err(SimError::Payoff { .. })));
    }
}
