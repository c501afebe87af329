//! Named mixed models.

use martrep_core::mixed::{MixedModel, RandomTimeLaw, UniformDensity};
use martrep_core::Result;

pub const PRESETS: [&str; 6] = ["baseline", "baseline-violating", "independent", "baseline-density", "density", "m2"];

/// Joint law of `(η, τ)` with `η ∈ {1,2,3}`, `τ ∈ {2,4}` and
/// `P(τ=2 | η=2) = P(τ=2 | η=3)`, so that `P` is the minimal martingale
/// measure.
pub const BASELINE_JOINT: [(f64, f64, f64); 6] = [
    (1.0, 2.0, 0.18),
    (1.0, 4.0, 0.12),
    (2.0, 2.0, 0.12),
    (2.0, 4.0, 0.28),
    (3.0, 2.0, 0.09),
    (3.0, 4.0, 0.21),
];

/// Same support and `η`-marginal, with `P(τ=2 | η=2) = 0.5` against
/// `P(τ=2 | η=3) = 0.1`.
pub const VIOLATING_JOINT: [(f64, f64, f64); 6] = [
    (1.0, 2.0, 0.18),
    (1.0, 4.0, 0.12),
    (2.0, 2.0, 0.20),
    (2.0, 4.0, 0.20),
    (3.0, 2.0, 0.03),
    (3.0, 4.0, 0.27),
];

/// Product of the `η`-marginal `(0.3, 0.4, 0.3)` and `τ`-marginal
/// `(0.39, 0.61)` of the baseline law.
pub const INDEPENDENT_JOINT: [(f64, f64, f64); 6] = [
    (1.0, 2.0, 0.117),
    (1.0, 4.0, 0.183),
    (2.0, 2.0, 0.156),
    (2.0, 4.0, 0.244),
    (3.0, 2.0, 0.117),
    (3.0, 4.0, 0.183),
];

pub const M2_JOINT: [(f64, f64, f64); 4] = [(1.0, 1.0, 0.1), (1.0, 2.0, 0.2), (2.0, 1.0, 0.3), (2.0, 2.0, 0.4)];

/// Mass moved from the atoms of `τ` to a uniform density on `(0, T)`.
const DENSITY_SHARE: f64 = 0.2;

pub fn preset(name: &str) -> Result<MixedModel> {
    match name {
        "baseline" => MixedModel::from_joint(4.0, true, &BASELINE_JOINT),
        "baseline-violating" => MixedModel::from_joint(4.0, true, &VIOLATING_JOINT),
        "independent" => MixedModel::from_joint(4.0, true, &INDEPENDENT_JOINT),
        "m2" => MixedModel::from_joint(2.0, false, &M2_JOINT),
        "baseline-density" => {
            let base = MixedModel::from_joint(4.0, true, &BASELINE_JOINT)?;
            let laws = base
                .tau_given_eta
                .iter()
                .map(|law| {
                    let atoms = law.atoms.iter().map(|(t, p)| (*t, p * (1.0 - DENSITY_SHARE))).collect();
                    RandomTimeLaw::new(
                        atoms,
                        Some(UniformDensity {
                            lo: 0.0,
                            hi: 4.0,
                            mass: DENSITY_SHARE,
                        }),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            MixedModel::new(4.0, true, base.eta, laws)
        }
        "density" => {
            let base = MixedModel::from_joint(4.0, true, &BASELINE_JOINT)?;
            // Occurrence probability depends on η; the rest never defaults.
            let laws = [0.9, 0.7, 0.5]
                .iter()
                .map(|&mass| RandomTimeLaw::density_only(0.0, 4.0, mass))
                .collect::<Result<Vec<_>>>()?;
            MixedModel::new(4.0, true, base.eta, laws)
        }
        other => Err(martrep_core::Error::Unsupported(format!(
            "unknown preset {other:?}; known: {}",
            PRESETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load_and_decouple() {
        for name in PRESETS {
            let m = preset(name).unwrap();
            assert!(m.decoupling_holds(), "{name}");
            m.check_commensurate(1e-3).unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn conditional_laws_of_the_baseline_preset() {
        let m = preset("baseline").unwrap();
        let c: Vec<f64> = m.tau_given_eta.iter().map(|l| l.atom_mass(2.0)).collect();
        assert!((c[0] - 0.6).abs() < 1e-12 && (c[1] - 0.3).abs() < 1e-12 && (c[2] - 0.3).abs() < 1e-12);
        assert!(m.bracket_drift(2.0).abs() < 1e-12);
        assert!(preset("baseline-violating").unwrap().bracket_drift(2.0).abs() > 0.05);
    }
}
