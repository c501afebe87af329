//! Finite grid model induced by an atomic mixed model: drop `W`, keep
//! the joint law of `(η, τ)` on the grid `{0} ∪ jump times ∪ {T}`.

use martrep_core::enlargement::JointModel;
use martrep_core::mixed::MixedModel;
use martrep_core::{Error, Rational, Result, Scalar};

/// Joint probabilities are rounded to twelve decimals and read exactly,
/// so decimal presets keep their identities in rational arithmetic.
pub fn induced_grid_model(model: &MixedModel) -> Result<JointModel<Rational>> {
    model.validate()?;
    if model.has_tau_density() {
        return Err(Error::Unsupported(
            "the induced grid model needs an atomic law for tau".into(),
        ));
    }
    let mut grid: Vec<f64> = model.event_times();
    if grid.first() != Some(&0.0) {
        grid.insert(0, 0.0);
    }
    let index = |t: f64| grid.iter().position(|g| (g - t).abs() < 1e-9).expect("event time on grid");
    let mut eta = Vec::new();
    let mut tau = Vec::new();
    let mut masses = Vec::new();
    for ((e, pe), law) in model.eta.iter().zip(&model.tau_given_eta) {
        let mut outcomes: Vec<(Option<usize>, f64)> = law.atoms.iter().map(|(t, p)| (Some(index(*t)), *p)).collect();
        if law.never_mass() > 1e-12 {
            outcomes.push((None, law.never_mass()));
        }
        for (t, p) in outcomes {
            let mass = Rational::parse_literal(&format!("{:.12}", pe * p)).expect("decimal literal");
            eta.push(Some(index(*e)));
            tau.push(t);
            masses.push(mass);
        }
    }
    let total: Rational = masses.iter().sum();
    let weights = masses.into_iter().map(|m| m / total.clone()).collect();
    JointModel::from_occurrences(grid, eta, tau, weights)
}
