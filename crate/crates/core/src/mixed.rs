//! Brownian motion plus atomic/density jump times.
//!
//! A [`RandomTimeLaw`] has finitely many atoms, an optional uniform density
//! piece and leftover mass beyond the horizon. Compensators are computed in
//! closed form: atoms contribute `m / S(a-)`, density pieces integrate the
//! hazard of a linear survival function, `∫ β / (α - βu) du`.
//!
//! [`MixedModel`] is the two-variable model used by the simulator: an
//! atomic time `η` feeding `F` (together with an independent Brownian
//! motion `W`) and a time `τ` feeding `H`, with `τ | η` given per value of
//! `η`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOL: f64 = 1e-12;

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformDensity {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

impl UniformDensity {
    pub fn rate(&self) -> f64 {
        self.mass / (self.hi - self.lo)
    }

    fn active_on(&self, x0: f64, x1: f64) -> bool {
        self.mass > 0.0 && x0 >= self.lo - 1e-15 && x1 <= self.hi + 1e-15
    }

    fn cdf(&self, t: f64) -> f64 {
        self.mass * ((t - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Law of a random time on `(0, ∞]`: atoms, an optional uniform density
/// piece, and the remaining mass at `+∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomTimeLaw {
    pub atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pub density: Option<UniformDensity>,
}

/// Split of a law into its atomic (accessible) and density (totally
/// inaccessible) components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawDecomposition {
    pub accessible_support: Vec<f64>,
    pub accessible_mass: f64,
    pub inaccessible_mass: f64,
    pub never_mass: f64,
}

impl RandomTimeLaw {
    pub fn new(mut atoms: Vec<(f64, f64)>, density: Option<UniformDensity>) -> Result<Self> {
        atoms.retain(|(_, m)| *m != 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, (t, m)) in atoms.iter().enumerate() {
            if !(t.is_finite() && *t > 0.0) {
                return Err(Error::at(format!("atoms[{i}]"), "atom times must be positive"));
            }
            if !(m.is_finite() && *m > 0.0) {
                return Err(Error::at(format!("atoms[{i}]"), "atom masses must be positive"));
            }
        }
        if atoms.windows(2).any(|w| same_time(w[0].0, w[1].0)) {
            return Err(Error::at("atoms", "duplicate atom time"));
        }
        if let Some(d) = &density {
            if !(d.lo >= 0.0 && d.hi > d.lo && d.hi.is_finite()) {
                return Err(Error::at("density", "need 0 <= lo < hi < inf"));
            }
            if !(d.mass >= 0.0 && d.mass.is_finite()) {
                return Err(Error::at("density.mass", "must be nonnegative"));
            }
        }
        let law = RandomTimeLaw { atoms, density };
        if law.finite_mass() > 1.0 + TOL {
            return Err(Error::at("atoms", "total mass exceeds one"));
        }
        Ok(law)
    }

    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(atoms, None)
    }

    pub fn density_only(lo: f64, hi: f64, mass: f64) -> Result<Self> {
        Self::new(Vec::new(), Some(UniformDensity { lo, hi, mass }))
    }

    pub fn finite_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, m)| m).sum::<f64>()
            + self.density.as_ref().map_or(0.0, |d| d.mass)
    }

    pub fn never_mass(&self) -> f64 {
        (1.0 - self.finite_mass()).max(0.0)
    }

    pub fn has_density(&self) -> bool {
        self.density.as_ref().is_some_and(|d| d.mass > 0.0)
    }

    pub fn is_atomic(&self) -> bool {
        !self.has_density()
    }

    pub fn atom_times(&self) -> Vec<f64> {
        self.atoms.iter().map(|(t, _)| *t).collect()
    }

    pub fn atom_mass(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .find(|(a, _)| same_time(*a, t))
            .map_or(0.0, |(_, m)| *m)
    }

    /// `P(τ <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|(a, _)| *a <= t + 1e-12).map(|(_, m)| m).sum();
        atoms + self.density.as_ref().map_or(0.0, |d| d.cdf(t))
    }

    /// `P(τ > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        (1.0 - self.cdf(t)).max(0.0)
    }

    /// `P(τ >= t)`.
    pub fn survival_before(&self, t: f64) -> f64 {
        self.survival(t) + self.atom_mass(t)
    }

    /// Density rate on an interval free of density endpoints.
    fn rate_on(&self, x0: f64, x1: f64) -> f64 {
        self.density
            .as_ref()
            .filter(|d| d.active_on(x0, x1))
            .map_or(0.0, UniformDensity::rate)
    }

    fn breakpoints(&self, into: &mut Vec<f64>) {
        into.extend(self.atom_times());
        if let Some(d) = &self.density {
            into.push(d.lo);
            into.push(d.hi);
        }
    }

    /// Atoms with conditional hazard strictly between 0 and 1 and positive
    /// probability of being reached: the mass points of `d⟨H⟩`.
    pub fn bracket_atoms(&self) -> Vec<f64> {
        self.atoms
            .iter()
            .filter(|(t, _)| {
                let h = self.hazard_at(*t);
                self.survival_before(*t) > TOL && h > TOL && h < 1.0 - TOL
            })
            .map(|(t, _)| *t)
            .collect()
    }

    /// `P(τ = t | τ >= t)`.
    pub fn hazard_at(&self, t: f64) -> f64 {
        let s = self.survival_before(t);
        if s <= TOL {
            0.0
        } else {
            self.atom_mass(t) / s
        }
    }

    pub fn decompose(&self) -> LawDecomposition {
        LawDecomposition {
            accessible_support: self.atom_times(),
            accessible_mass: self.atoms.iter().map(|(_, m)| m).sum(),
            inaccessible_mass: self.density.as_ref().map_or(0.0, |d| d.mass),
            never_mass: self.never_mass(),
        }
    }

    /// Smallest `t` with `P(τ <= t) >= u`, or `None` for `+∞`.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        let mut points = vec![0.0];
        self.breakpoints(&mut points);
        let points = sorted_unique(points);
        let mut cum = 0.0;
        for w in points.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let rate = self.rate_on(x0, x1);
            let d = rate * (x1 - x0);
            if d > 0.0 && cum + d >= u {
                return Some(x0 + (u - cum) / rate);
            }
            cum += d;
            let m = self.atom_mass(x1);
            if m > 0.0 && cum + m >= u {
                return Some(x1);
            }
            cum += m;
        }
        None
    }

    /// Compensator of `1_{τ <= t}` in the natural filtration of `τ`,
    /// evaluated on the path where `τ` takes `value`.
    pub fn compensator(&self, t: f64, value: Option<f64>) -> f64 {
        Mixture::single(self).compensator_between(0.0, stop(t, value))
    }

    /// Compensated occurrence `1_{τ <= t} - A_t`.
    pub fn compensated(&self, t: f64, value: Option<f64>) -> f64 {
        occurred(t, value) - self.compensator(t, value)
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| same_time(*a, *b));
    v
}

fn stop(t: f64, value: Option<f64>) -> f64 {
    value.map_or(t, |v| v.min(t))
}

fn occurred(t: f64, value: Option<f64>) -> f64 {
    if value.is_some_and(|v| v <= t + 1e-12) {
        1.0
    } else {
        0.0
    }
}

/// Weighted mixture of laws; its survival is linear between breakpoints,
/// so the density hazard integrates to a log ratio.
#[derive(Clone, Debug)]
pub struct Mixture<'a> {
    parts: Vec<(f64, &'a RandomTimeLaw)>,
}

impl<'a> Mixture<'a> {
    pub fn new(parts: Vec<(f64, &'a RandomTimeLaw)>) -> Self {
        Mixture { parts }
    }

    pub fn single(law: &'a RandomTimeLaw) -> Self {
        Mixture { parts: vec![(1.0, law)] }
    }

    fn survival(&self, t: f64) -> f64 {
        self.parts.iter().map(|(w, l)| w * l.survival(t)).sum()
    }

    fn survival_before(&self, t: f64) -> f64 {
        self.parts.iter().map(|(w, l)| w * l.survival_before(t)).sum()
    }

    fn atom_mass(&self, t: f64) -> f64 {
        self.parts.iter().map(|(w, l)| w * l.atom_mass(t)).sum()
    }

    fn rate_on(&self, x0: f64, x1: f64) -> f64 {
        self.parts.iter().map(|(w, l)| w * l.rate_on(x0, x1)).sum()
    }

    pub fn atom_times(&self) -> Vec<f64> {
        sorted_unique(self.parts.iter().flat_map(|(_, l)| l.atom_times()).collect())
    }

    /// `∫_{(a,b]} dF(u) / S(u-)` for the mixture.
    pub fn compensator_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut points = vec![a, b];
        for (_, law) in &self.parts {
            law.breakpoints(&mut points);
        }
        let points: Vec<f64> = sorted_unique(points)
            .into_iter()
            .filter(|x| *x >= a - 1e-12 && *x <= b + 1e-12)
            .collect();
        let mut total = 0.0;
        for w in points.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let rate = self.rate_on(x0, x1);
            if rate > 0.0 {
                let start = self.survival(x0);
                let end = start - rate * (x1 - x0);
                total += if end <= TOL {
                    f64::INFINITY
                } else {
                    (start / end).ln()
                };
            }
            let m = self.atom_mass(x1);
            if m > 0.0 {
                let s = self.survival_before(x1);
                if s > TOL {
                    total += m / s;
                }
            }
        }
        total
    }
}

/// `W` (optionally) plus the compensated occurrence of a time in its own
/// natural filtration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedMartingale {
    pub brownian: bool,
    pub law: RandomTimeLaw,
}

/// Yoeurp split of a [`MixedMartingale`] as closed-form evaluators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedParts {
    /// The continuous part is `W` when set, zero otherwise.
    pub continuous_is_brownian: bool,
    /// Atom times of the accessible part.
    pub accessible_atoms: Vec<f64>,
    /// Mass of the density part driving the totally inaccessible part.
    pub inaccessible_mass: f64,
    law: RandomTimeLaw,
}

impl MixedParts {
    /// `(continuous, accessible, totally inaccessible)` at time `t` on the
    /// path with Brownian value `w` and occurrence time `value`.
    pub fn evaluate(&self, t: f64, w: f64, value: Option<f64>) -> [f64; 3] {
        let continuous = if self.continuous_is_brownian { w } else { 0.0 };
        let end = stop(t, value);
        let atomic = RandomTimeLaw {
            atoms: self.law.atoms.clone(),
            density: None,
        };
        // Compensator pieces of the full law, split by source.
        let total = self.law.compensator(t, value);
        let dq_comp = total - self.atomic_compensator(end);
        let at_atom = value.is_some_and(|v| atomic.atom_mass(v) > 0.0);
        let occ = occurred(t, value);
        let (occ_dp, occ_dq) = if at_atom { (occ, 0.0) } else { (0.0, occ) };
        [
            continuous,
            occ_dp - (total - dq_comp),
            occ_dq - dq_comp,
        ]
    }

    fn atomic_compensator(&self, end: f64) -> f64 {
        self.law
            .atoms
            .iter()
            .filter(|(a, _)| *a <= end + 1e-12)
            .map(|(a, _)| self.law.hazard_at(*a))
            .sum()
    }
}

impl MixedMartingale {
    pub fn evaluate(&self, t: f64, w: f64, value: Option<f64>) -> f64 {
        let c = if self.brownian { w } else { 0.0 };
        c + self.law.compensated(t, value)
    }

    /// Continuous part `W`, accessible part from the atoms, totally
    /// inaccessible part from the density. Checks that the parts add up
    /// and that the jump parts never jump together.
    pub fn yoeurp_parts(&self) -> Result<MixedParts> {
        let parts = MixedParts {
            continuous_is_brownian: self.brownian,
            accessible_atoms: self.law.atom_times(),
            inaccessible_mass: self.law.density.as_ref().map_or(0.0, |d| d.mass),
            law: self.law.clone(),
        };
        let horizon = self.horizon_hint();
        let mut values: Vec<Option<f64>> = vec![None];
        values.extend(self.law.atom_times().into_iter().map(Some));
        if let Some(d) = &self.law.density {
            values.push(Some(0.5 * (d.lo + d.hi)));
        }
        for value in values {
            for i in 0..=20 {
                let t = horizon * i as f64 / 20.0;
                let w = 0.3 * t - 0.1;
                let [c, a, q] = parts.evaluate(t, w, value);
                let total = self.evaluate(t, w, value);
                if (c + a + q - total).abs() > 1e-9 {
                    return Err(Error::InternalConsistency(format!(
                        "Yoeurp parts do not sum to M at t={t}"
                    )));
                }
            }
            // The accessible part jumps only at atoms, the inaccessible
            // part only at non-atom occurrences.
            if let Some(v) = value {
                let eps = 1e-7;
                let [_, a0, q0] = parts.evaluate(v - eps, 0.0, value);
                let [_, a1, q1] = parts.evaluate(v, 0.0, value);
                if (a1 - a0).abs() > 1e-4 && (q1 - q0).abs() > 1e-4 {
                    return Err(Error::InternalConsistency(
                        "accessible and inaccessible parts jump together".into(),
                    ));
                }
            }
        }
        Ok(parts)
    }

    fn horizon_hint(&self) -> f64 {
        let mut h = self.law.atom_times().into_iter().fold(1.0, f64::max);
        if let Some(d) = &self.law.density {
            h = h.max(d.hi);
        }
        h + 1.0
    }
}

/// Values of the channels on one path at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TripletValues {
    pub w: f64,
    pub ieta: f64,
    pub itau: f64,
    pub m: f64,
    pub h: f64,
    pub h_prime: f64,
    pub mh: f64,
}

/// `W + H^η` with atomic `η` feeding `F` and `τ | η` feeding `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedModel {
    pub horizon: f64,
    #[serde(default = "default_true")]
    pub brownian: bool,
    /// Atomic law of `η`: `(time, probability)`, summing to one.
    pub eta: Vec<(f64, f64)>,
    /// Law of `τ` given each value of `η`, in the order of `eta`.
    pub tau_given_eta: Vec<RandomTimeLaw>,
}

fn default_true() -> bool {
    true
}

impl MixedModel {
    pub fn new(
        horizon: f64,
        brownian: bool,
        eta: Vec<(f64, f64)>,
        tau_given_eta: Vec<RandomTimeLaw>,
    ) -> Result<Self> {
        let model = MixedModel {
            horizon,
            brownian,
            eta,
            tau_given_eta,
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds the conditional laws from a joint atomic table
    /// `(η value, τ value, probability)`.
    pub fn from_joint(horizon: f64, brownian: bool, joint: &[(f64, f64, f64)]) -> Result<Self> {
        let etas = sorted_unique(joint.iter().map(|j| j.0).collect());
        let mut eta = Vec::new();
        let mut tau_given_eta = Vec::new();
        for e in etas {
            let rows: Vec<&(f64, f64, f64)> = joint.iter().filter(|j| same_time(j.0, e)).collect();
            let pe: f64 = rows.iter().map(|j| j.2).sum();
            eta.push((e, pe));
            let atoms = rows.iter().map(|j| (j.1, j.2 / pe)).collect();
            tau_given_eta.push(RandomTimeLaw::atomic(atoms)?);
        }
        Self::new(horizon, brownian, eta, tau_given_eta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::at("horizon", "must be positive"));
        }
        if self.eta.is_empty() {
            return Err(Error::at("eta", "needs at least one value"));
        }
        if self.eta.len() != self.tau_given_eta.len() {
            return Err(Error::at("tau_given_eta", "one law per value of eta"));
        }
        let mut total = 0.0;
        for (i, (t, p)) in self.eta.iter().enumerate() {
            if !(*t > 0.0 && *t <= self.horizon + 1e-12) {
                return Err(Error::at(format!("eta[{i}]"), "time outside (0, T]"));
            }
            if !(*p > 0.0) {
                return Err(Error::at(format!("eta[{i}]"), "probability must be positive"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::at("eta", format!("probabilities sum to {total}")));
        }
        if self.eta.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::at("eta", "times must be strictly increasing"));
        }
        for (i, law) in self.tau_given_eta.iter().enumerate() {
            let checked = RandomTimeLaw::new(law.atoms.clone(), law.density.clone())
                .map_err(|e| prefix_path(e, &format!("tau_given_eta[{i}]")))?;
            if checked != *law {
                return Err(Error::at(format!("tau_given_eta[{i}]"), "atoms must be sorted and positive"));
            }
            for (j, (t, _)) in law.atoms.iter().enumerate() {
                if *t > self.horizon + 1e-12 {
                    return Err(Error::at(format!("tau_given_eta[{i}].atoms[{j}]"), "time outside (0, T]"));
                }
            }
            if let Some(d) = &law.density {
                if d.hi > self.horizon + 1e-12 {
                    return Err(Error::at(format!("tau_given_eta[{i}].density"), "extends past T"));
                }
            }
        }
        Ok(())
    }

    /// Contract error unless every jump time is a multiple of `dt`.
    pub fn check_commensurate(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Contract("dt must be positive".into()));
        }
        let mut times: Vec<f64> = self.eta.iter().map(|e| e.0).collect();
        for law in &self.tau_given_eta {
            times.extend(law.atom_times());
        }
        times.push(self.horizon);
        for t in times {
            let steps = t / dt;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(Error::Contract(format!("jump time {t} is not a multiple of dt={dt}")));
            }
        }
        Ok(())
    }

    pub fn eta_law(&self) -> RandomTimeLaw {
        RandomTimeLaw {
            atoms: self.eta.clone(),
            density: None,
        }
    }

    pub fn eta_times(&self) -> Vec<f64> {
        self.eta.iter().map(|e| e.0).collect()
    }

    fn eta_index(&self, eta: f64) -> usize {
        self.eta
            .iter()
            .position(|e| same_time(e.0, eta))
            .expect("eta value in support")
    }

    /// Marginal law of `τ` as a mixture.
    pub fn tau_mixture(&self) -> Mixture<'_> {
        Mixture::new(self.eta.iter().map(|e| e.1).zip(&self.tau_given_eta).collect())
    }

    pub fn tau_atom_times(&self) -> Vec<f64> {
        self.tau_mixture().atom_times()
    }

    /// `P(η = e, τ = t)` for atomic `τ` values.
    pub fn joint_atom(&self, eta: f64, tau: f64) -> f64 {
        let i = self.eta_index(eta);
        self.eta[i].1 * self.tau_given_eta[i].atom_mass(tau)
    }

    pub fn has_tau_density(&self) -> bool {
        self.tau_given_eta.iter().any(RandomTimeLaw::has_density)
    }

    /// Marginal `P(τ = t)`.
    pub fn tau_atom_mass(&self, t: f64) -> f64 {
        self.tau_mixture().atom_mass(t)
    }

    /// Marginal law of `τ` when every conditional density shares one
    /// interval (always true for the presets).
    pub fn tau_marginal(&self) -> Result<RandomTimeLaw> {
        let atoms = self
            .tau_atom_times()
            .into_iter()
            .map(|t| (t, self.tau_atom_mass(t)))
            .collect();
        let mut density: Option<UniformDensity> = None;
        for ((_, p), law) in self.eta.iter().zip(&self.tau_given_eta) {
            if let Some(d) = law.density.as_ref().filter(|d| d.mass > 0.0) {
                match &mut density {
                    None => {
                        density = Some(UniformDensity {
                            lo: d.lo,
                            hi: d.hi,
                            mass: p * d.mass,
                        })
                    }
                    Some(acc) if same_time(acc.lo, d.lo) && same_time(acc.hi, d.hi) => {
                        acc.mass += p * d.mass
                    }
                    Some(_) => {
                        return Err(Error::Unsupported(
                            "conditional densities of tau on different intervals".into(),
                        ))
                    }
                }
            }
        }
        RandomTimeLaw::new(atoms, density)
    }

    /// Compensator of `η` in its natural filtration.
    pub fn eta_compensator(&self, t: f64, eta: f64) -> f64 {
        self.eta_law().compensator(t, Some(eta))
    }

    /// `(P,H)`-compensator of `τ`.
    pub fn h_compensator(&self, t: f64, tau: Option<f64>) -> f64 {
        self.tau_mixture().compensator_between(0.0, stop(t, tau))
    }

    /// `(P,G)`-compensator of `τ`: on each stretch the hazard is that of
    /// `τ` given the `η`-information available just before.
    pub fn g_compensator(&self, t: f64, eta: f64, tau: Option<f64>) -> f64 {
        let end = stop(t, tau);
        let mut total = 0.0;
        let mut start = 0.0;
        for (i, (e, _)) in self.eta.iter().enumerate() {
            if start >= end {
                return total;
            }
            // On (start, e] the state is {η >= e}.
            let stretch_end = e.min(end);
            let parts: Vec<(f64, &RandomTimeLaw)> = self.eta[i..]
                .iter()
                .map(|x| x.1)
                .zip(&self.tau_given_eta[i..])
                .collect();
            total += Mixture::new(parts).compensator_between(start, stretch_end);
            start = *e;
            if same_time(*e, eta) {
                break;
            }
        }
        if start < end {
            let i = self.eta_index(eta);
            total += Mixture::single(&self.tau_given_eta[i]).compensator_between(start, end);
        }
        total
    }

    /// `[M,H]_t`: products of simultaneous jumps at common atom times.
    pub fn bracket_mh(&self, t: f64, eta: f64, tau: Option<f64>) -> f64 {
        let eta_law = self.eta_law();
        let tau_mix = self.tau_mixture();
        let mut total = 0.0;
        for s in self.common_atom_times() {
            if s > t + 1e-12 || eta < s - 1e-12 || tau.is_some_and(|v| v < s - 1e-12) {
                continue;
            }
            let dm = occurred_at(s, Some(eta)) - eta_law.hazard_at(s);
            let s_before = tau_mix.survival_before(s);
            let hz = if s_before > TOL { tau_mix.atom_mass(s) / s_before } else { 0.0 };
            let dh = occurred_at(s, tau) - hz;
            total += dm * dh;
        }
        total
    }

    /// Jump times shared by `η` and the atomic part of `τ`.
    pub fn common_atom_times(&self) -> Vec<f64> {
        let tau_atoms = self.tau_atom_times();
        self.eta_times()
            .into_iter()
            .filter(|e| tau_atoms.iter().any(|t| same_time(*t, *e)))
            .collect()
    }

    /// All channels at time `t` on the path `(w, η, τ)`.
    pub fn evaluate(&self, t: f64, w: f64, eta: f64, tau: Option<f64>) -> TripletValues {
        let ieta = occurred(t, Some(eta));
        let itau = occurred(t, tau);
        let w = if self.brownian { w } else { 0.0 };
        TripletValues {
            w,
            ieta,
            itau,
            m: w + ieta - self.eta_compensator(t, eta),
            h: itau - self.h_compensator(t, tau),
            h_prime: itau - self.g_compensator(t, eta, tau),
            mh: self.bracket_mh(t, eta, tau),
        }
    }

    /// Event times that any channel can jump at, together with `0` and `T`.
    pub fn event_times(&self) -> Vec<f64> {
        let mut v = vec![0.0, self.horizon];
        v.extend(self.eta_times());
        v.extend(self.tau_atom_times());
        sorted_unique(v.into_iter().filter(|t| *t <= self.horizon + 1e-12).collect())
    }

    /// Support of `(η, τ)` is a product set: per value of `η` the
    /// conditional law of `τ` has the same atoms, density interval and
    /// never-occurrence status.
    pub fn decoupling_holds(&self) -> bool {
        let signature = |law: &RandomTimeLaw| {
            (
                law.atom_times().iter().map(|t| (t * 1e6).round() as i64).collect::<Vec<_>>(),
                law.density
                    .as_ref()
                    .filter(|d| d.mass > 0.0)
                    .map(|d| ((d.lo * 1e6).round() as i64, (d.hi * 1e6).round() as i64)),
                law.never_mass() > 1e-12,
            )
        };
        let first = signature(&self.tau_given_eta[0]);
        self.tau_given_eta.iter().all(|l| signature(l) == first)
    }

    /// `P(τ = s | η state known just before s)` for the state `η >= s` on
    /// shared atom times: the per-value conditionals must agree for `P` to
    /// keep `[M,H]` a martingale.
    pub fn bracket_drift(&self, s: f64) -> f64 {
        let eta_law = self.eta_law();
        let tau_mix = self.tau_mixture();
        let s_before = tau_mix.survival_before(s);
        let hz = if s_before > TOL { tau_mix.atom_mass(s) / s_before } else { 0.0 };
        let mut num = 0.0;
        let mut den = 0.0;
        for ((e, p), law) in self.eta.iter().zip(&self.tau_given_eta) {
            if *e < s - 1e-12 {
                continue;
            }
            let reach = law.survival_before(s);
            let dm = if same_time(*e, s) { 1.0 } else { 0.0 } - eta_law.hazard_at(s);
            let dh = law.atom_mass(s) - hz * reach;
            num += p * dm * dh;
            den += p * reach;
        }
        if den <= TOL {
            0.0
        } else {
            num / den
        }
    }
}

fn occurred_at(s: f64, value: Option<f64>) -> f64 {
    if value.is_some_and(|v| same_time(v, s)) {
        1.0
    } else {
        0.0
    }
}

fn prefix_path(err: Error, prefix: &str) -> Error {
    match err {
        Error::Validation { path, message } => Error::Validation {
            path: format!("{prefix}.{path}"),
            message,
        },
        other => other,
    }
}

/// One side of the bracket comparison: an optional Brownian component plus
/// the compensated occurrence of a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketSide {
    pub brownian: bool,
    pub law: RandomTimeLaw,
}

impl BracketSide {
    /// Intervals carrying the Lebesgue part of the bracket.
    fn lebesgue_intervals(&self, horizon: f64) -> Vec<(f64, f64)> {
        let mut v = Vec::new();
        if self.brownian {
            v.push((0.0, horizon));
        }
        if let Some(d) = self.law.density.as_ref().filter(|d| d.mass > 0.0) {
            v.push((d.lo, d.hi.min(horizon)));
        }
        v
    }

    fn continuous_sources_at(&self, t: f64) -> usize {
        self.lebesgue_intervals(f64::INFINITY)
            .iter()
            .filter(|(a, b)| *a < t && t < *b)
            .count()
    }

    fn bracket_atoms(&self, horizon: f64) -> Vec<f64> {
        self.law
            .bracket_atoms()
            .into_iter()
            .filter(|t| *t <= horizon + 1e-12)
            .collect()
    }
}

/// Verdict of the multiplicity classifier on a mixed pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedClassification {
    /// 1, 2 or 3; 0 when both brackets vanish.
    pub verdict: usize,
    pub total_singular: bool,
    pub accessible_singular: bool,
    pub witness: Option<String>,
    /// Multiplicity counted from local branching, independently of the
    /// bracket comparison.
    pub local_dimension: usize,
}

/// Multiplicity of `F ∨ H` under the decoupled measure for `M` and `N`
/// from the mixed class.
pub fn classify_mixed(m: &BracketSide, n: &BracketSide, horizon: f64) -> Result<MixedClassification> {
    for (name, side) in [("M", m), ("N", n)] {
        if side.brownian && side.law.has_density() {
            return Err(Error::assumption(
                "A1",
                format!("{name} has two continuous sources and cannot represent its own filtration"),
            ));
        }
    }
    let overlap = m.lebesgue_intervals(horizon).iter().find_map(|(a0, a1)| {
        n.lebesgue_intervals(horizon).iter().find_map(|(b0, b1)| {
            let lo = a0.max(*b0);
            let hi = a1.min(*b1);
            (hi - lo > 1e-12).then_some((lo, hi))
        })
    });
    let m_atoms = m.bracket_atoms(horizon);
    let n_atoms = n.bracket_atoms(horizon);
    let shared_atom = m_atoms
        .iter()
        .copied()
        .find(|a| n_atoms.iter().any(|b| same_time(*a, *b)));
    let accessible_singular = shared_atom.is_none();
    let total_singular = accessible_singular && overlap.is_none();
    let m_trivial = m_atoms.is_empty() && m.lebesgue_intervals(horizon).is_empty();
    let n_trivial = n_atoms.is_empty() && n.lebesgue_intervals(horizon).is_empty();
    let (verdict, witness) = if m_trivial && n_trivial {
        (0, None)
    } else if total_singular {
        (1, None)
    } else if accessible_singular {
        let (lo, hi) = overlap.expect("overlap when not singular");
        (2, Some(format!("Lebesgue parts overlap on ({lo}, {hi})")))
    } else {
        (3, Some(format!("shared atom at t={}", shared_atom.unwrap())))
    };
    let local_dimension = local_dimension(m, n, horizon);
    if local_dimension != verdict {
        return Err(Error::InternalConsistency(format!(
            "bracket classifier says {verdict}, local branching count says {local_dimension}"
        )));
    }
    Ok(MixedClassification {
        verdict,
        total_singular,
        accessible_singular,
        witness,
        local_dimension,
    })
}

/// Largest number of orthogonal directions needed at any instant: the
/// count of simultaneously active continuous sources, or `b_η b_τ - 1` at
/// an atom where `b` counts the possible outcomes of each side.
fn local_dimension(m: &BracketSide, n: &BracketSide, horizon: f64) -> usize {
    let mut points = vec![0.0, horizon];
    for side in [m, n] {
        side.law.breakpoints(&mut points);
    }
    let points = sorted_unique(points.into_iter().filter(|t| *t <= horizon).collect());
    let continuous = points
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            m.continuous_sources_at(mid) + n.continuous_sources_at(mid)
        })
        .max()
        .unwrap_or(0);
    let branches = |side: &BracketSide, t: f64| -> usize {
        let h = side.law.hazard_at(t);
        if side.law.survival_before(t) > TOL && h > TOL && h < 1.0 - TOL {
            2
        } else {
            1
        }
    };
    let atomic = points
        .iter()
        .filter(|t| **t > 0.0)
        .map(|&t| branches(m, t) * branches(n, t) - 1)
        .max()
        .unwrap_or(0);
    continuous.max(atomic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline_model() -> MixedModel {
        MixedModel::from_joint(
            4.0,
            true,
            &[
                (1.0, 2.0, 0.18),
                (1.0, 4.0, 0.12),
                (2.0, 2.0, 0.12),
                (2.0, 4.0, 0.28),
                (3.0, 2.0, 0.09),
                (3.0, 4.0, 0.21),
            ],
        )
        .unwrap()
    }

    #[test]
    fn law_split_and_quantiles() {
        let law = RandomTimeLaw::new(
            vec![(2.0, 0.5), (4.0, 0.3)],
            Some(UniformDensity { lo: 0.0, hi: 4.0, mass: 0.2 }),
        )
        .unwrap();
        let d = law.decompose();
        assert_eq!(d.accessible_support, vec![2.0, 4.0]);
        assert!((d.accessible_mass - 0.8).abs() < 1e-15);
        assert!((d.inaccessible_mass - 0.2).abs() < 1e-15);
        assert_eq!(law.quantile(0.05), Some(1.0));
        assert_eq!(law.quantile(0.3), Some(2.0));
        assert_eq!(law.quantile(0.99), Some(4.0));
        let atomic = RandomTimeLaw::atomic(vec![(2.0, 0.4), (4.0, 0.6)]).unwrap();
        assert_eq!(atomic.decompose().inaccessible_mass, 0.0);
    }

    #[test]
    fn density_compensator_is_minus_log_survival() {
        let law = RandomTimeLaw::density_only(0.0, 4.0, 0.8).unwrap();
        for t in [0.5, 1.0, 3.0] {
            let expected = -law.survival(t).ln();
            assert!((law.compensator(t, None) - expected).abs() < 1e-12);
        }
        // Stopped at the occurrence.
        assert!((law.compensator(3.0, Some(1.0)) + law.survival(1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn baseline_example_closed_forms() {
        let model = baseline_model();
        // P(η = 1) = 0.3, P(η = 2 | η > 1) = 4/7.
        let v = model.evaluate(1.0, 0.0, 1.0, Some(2.0));
        assert!((v.m - 0.7).abs() < 1e-12);
        let v = model.evaluate(2.0, 0.0, 2.0, Some(2.0));
        assert!((v.m - (-0.3 + 1.0 - 4.0 / 7.0)).abs() < 1e-12);
        // η = 3 is certain at t = 3 on {η > 2}.
        let v = model.evaluate(3.0, 0.0, 3.0, Some(4.0));
        assert!((v.m - (-0.3 - 4.0 / 7.0)).abs() < 1e-12);
        // H' compensates τ = 2 with P(τ = 2 | η = 1) = 0.6 on {η = 1}, and
        // P(τ = 2 | η > 1) = 0.3 elsewhere; τ = 4 is then certain.
        let v = model.evaluate(4.0, 0.0, 1.0, Some(2.0));
        assert!((v.h_prime - 0.4).abs() < 1e-12);
        let v = model.evaluate(4.0, 0.0, 3.0, Some(4.0));
        assert!((v.h_prime - (1.0 - 0.3 - 1.0)).abs() < 1e-12);
        // [M,H] = (1_{η=2} - 4/7)(1_{τ=2} - 0.39) on {η > 1}, from t = 2.
        let v = model.evaluate(2.0, 0.0, 2.0, Some(2.0));
        assert!((v.mh - (3.0 / 7.0) * 0.61).abs() < 1e-12);
        let v = model.evaluate(1.5, 0.0, 2.0, Some(2.0));
        assert_eq!(v.mh, 0.0);
        let v = model.evaluate(4.0, 0.0, 1.0, Some(2.0));
        assert_eq!(v.mh, 0.0);
        assert!(model.bracket_drift(2.0).abs() < 1e-12);
    }

    #[test]
    fn density_tau_keeps_g_compensator_continuous() {
        let law = RandomTimeLaw::density_only(0.0, 4.0, 0.9).unwrap();
        let model = MixedModel::new(4.0, true, vec![(1.0, 0.5), (3.0, 0.5)], vec![law.clone(), law])
            .unwrap();
        let a = |t: f64| model.g_compensator(t, 3.0, None);
        for s in [1.0, 2.0, 3.0] {
            assert!((a(s + 1e-9) - a(s - 1e-9)).abs() < 1e-6);
        }
        assert_eq!(model.bracket_mh(4.0, 1.0, Some(1.0)), 0.0);
        // τ independent of η: G and H compensators agree.
        assert!((model.g_compensator(2.5, 1.0, None) - model.h_compensator(2.5, None)).abs() < 1e-12);
    }

    #[test]
    fn classifier_verdicts() {
        let eta13 = RandomTimeLaw::atomic(vec![(1.0, 0.5), (3.0, 0.5)]).unwrap();
        let tau24 = RandomTimeLaw::atomic(vec![(2.0, 0.4), (4.0, 0.6)]).unwrap();
        let m = BracketSide { brownian: true, law: eta13.clone() };
        let n = BracketSide { brownian: false, law: tau24.clone() };
        assert_eq!(classify_mixed(&m, &n, 4.0).unwrap().verdict, 1);
        let tau_mixed = RandomTimeLaw::new(
            vec![(2.0, 0.3), (4.0, 0.3)],
            Some(UniformDensity { lo: 0.0, hi: 4.0, mass: 0.4 }),
        )
        .unwrap();
        let n2 = BracketSide { brownian: false, law: tau_mixed };
        let c = classify_mixed(&m, &n2, 4.0).unwrap();
        assert_eq!((c.verdict, c.total_singular, c.accessible_singular), (2, false, true));
        let eta123 = RandomTimeLaw::atomic(vec![(1.0, 0.3), (2.0, 0.4), (3.0, 0.3)]).unwrap();
        let m3 = BracketSide { brownian: true, law: eta123 };
        assert_eq!(classify_mixed(&m3, &n, 4.0).unwrap().verdict, 3);
        let bad = BracketSide {
            brownian: true,
            law: RandomTimeLaw::density_only(0.0, 1.0, 1.0).unwrap(),
        };
        assert!(matches!(classify_mixed(&bad, &n, 4.0), Err(Error::Assumption { .. })));
    }

    #[test]
    fn yoeurp_parts_of_mixed_martingales() {
        let eta = RandomTimeLaw::atomic(vec![(1.0, 0.3), (2.0, 0.4), (3.0, 0.3)]).unwrap();
        let m = MixedMartingale { brownian: true, law: eta };
        let parts = m.yoeurp_parts().unwrap();
        assert!(parts.continuous_is_brownian);
        assert_eq!(parts.inaccessible_mass, 0.0);
        let [c, _, q] = parts.evaluate(2.5, 0.7, Some(2.0));
        assert_eq!((c, q), (0.7, 0.0));
        let density = MixedMartingale {
            brownian: false,
            law: RandomTimeLaw::density_only(0.0, 4.0, 1.0).unwrap(),
        };
        let parts = density.yoeurp_parts().unwrap();
        let [c, a, q] = parts.evaluate(3.0, 0.5, Some(2.0));
        assert_eq!((c, a), (0.0, 0.0));
        assert!((q - density.evaluate(3.0, 0.5, Some(2.0))).abs() < 1e-12);
    }

    #[test]
    fn decoupling_and_commensurability() {
        let model = baseline_model();
        assert!(model.decoupling_holds());
        assert!(model.check_commensurate(1e-3).is_ok());
        assert!(model.check_commensurate(0.3).is_err());
        let broken = MixedModel::from_joint(4.0, true, &[(1.0, 2.0, 0.5), (2.0, 4.0, 0.5)]).unwrap();
        assert!(!broken.decoupling_holds());
    }
}
