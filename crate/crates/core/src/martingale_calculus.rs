//! Martingale calculus on finite filtered spaces: Doob decomposition,
//! compensators, quadratic covariation, sharp brackets, predictable
//! supports and mutual singularity of bracket measures.
//!
//! "Almost surely" means "on every atom of positive measure"; null atoms
//! are ignored by every check in this module.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite_space::{
    cond_exp_as, Filtration, MeasureVector, Partition, ProcessKind, ProcessTable, RandomTime,
};
use crate::mixed::{MixedMartingale, MixedParts};
use crate::scalar::Scalar;

/// `X = X_0 + martingale + predictable`, both parts starting at zero.
#[derive(Clone, Debug)]
pub struct DoobDecomposition<S> {
    pub martingale: ProcessTable<S>,
    pub predictable: ProcessTable<S>,
}

/// Why a process fails to be a martingale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MartingaleFailure {
    NotAdapted { time: usize },
    /// Nonzero conditional drift of the increment into `time` on `cell` of
    /// the partition at `time - 1`.
    Drift { time: usize, cell: usize, drift: f64 },
}

impl std::fmt::Display for MartingaleFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MartingaleFailure::NotAdapted { time } => write!(f, "not adapted at t_{time}"),
            MartingaleFailure::Drift { time, cell, drift } => {
                write!(f, "drift {drift:.6} into t_{time} on cell {cell} of t_{}", time - 1)
            }
        }
    }
}

fn adapted_on_support<S: Scalar>(
    values: &[S],
    partition: &Partition,
    measure: &MeasureVector<S>,
) -> bool {
    partition.cells().iter().all(|cell| {
        let mut live = cell.iter().filter(|&&a| !measure.is_null(a));
        match live.next() {
            None => true,
            Some(&first) => live.all(|&a| values[a].approx_eq(&values[first])),
        }
    })
}

pub fn martingale_failure<S: Scalar>(
    x: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Option<MartingaleFailure> {
    for k in 0..x.n_times() {
        if !adapted_on_support(x.at(k), filtration.at(k), measure) {
            return Some(MartingaleFailure::NotAdapted { time: k });
        }
    }
    for k in 1..x.n_times() {
        let parent = filtration.at(k - 1);
        let drift = cond_exp_as(&x.increment(k), parent, measure);
        for (id, cell) in parent.cells().iter().enumerate() {
            let d = &drift[cell[0]];
            if !d.negligible() {
                return Some(MartingaleFailure::Drift {
                    time: k,
                    cell: id,
                    drift: d.to_f64_lossy(),
                });
            }
        }
    }
    None
}

pub fn is_martingale<S: Scalar>(
    x: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> bool {
    martingale_failure(x, filtration, measure).is_none()
}

fn check_shape<S: Scalar>(
    x: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<()> {
    if x.n_times() != filtration.n_times()
        || x.n_atoms() != filtration.n_atoms()
        || measure.n_atoms() != x.n_atoms()
    {
        return Err(Error::Structural(format!(
            "process {}x{}, filtration {}x{}, measure over {} atoms",
            x.n_times(),
            x.n_atoms(),
            filtration.n_times(),
            filtration.n_atoms(),
            measure.n_atoms()
        )));
    }
    Ok(())
}

/// Discrete Doob decomposition: `ΔA_k = E[ΔX_k | F_{k-1}]`.
pub fn doob_decomposition<S: Scalar>(
    x: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<DoobDecomposition<S>> {
    check_shape(x, filtration, measure)?;
    if let Some(k) = (0..x.n_times()).find(|&k| !adapted_on_support(x.at(k), filtration.at(k), measure)) {
        return Err(Error::Contract(format!("process is not adapted at t_{k}")));
    }
    let n = x.n_atoms();
    let mut a_rows = vec![vec![S::zero(); n]];
    let mut m_rows = vec![vec![S::zero(); n]];
    for k in 1..x.n_times() {
        let dx = x.increment(k);
        let da = cond_exp_as(&dx, filtration.at(k - 1), measure);
        let a_prev = &a_rows[k - 1];
        let m_prev = &m_rows[k - 1];
        let a_next: Vec<S> = a_prev.iter().zip(&da).map(|(a, d)| a.clone() + d.clone()).collect();
        let m_next: Vec<S> = m_prev
            .iter()
            .zip(dx.iter().zip(&da))
            .map(|(m, (x, d))| m.clone() + x.clone() - d.clone())
            .collect();
        a_rows.push(a_next);
        m_rows.push(m_next);
    }
    Ok(DoobDecomposition {
        martingale: ProcessTable::raw(m_rows),
        predictable: ProcessTable::raw(a_rows),
    })
}

/// Compensator of `1_{tau <= .}`; `1_{tau <= .} - A` is a martingale.
pub fn compensator_of_occurrence<S: Scalar>(
    tau: &RandomTime,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<ProcessTable<S>> {
    tau.validate_stopping_time(filtration, "tau")?;
    let occ = tau.occurrence::<S>(filtration.n_times());
    Ok(doob_decomposition(&occ, filtration, measure)?.predictable)
}

/// Compensated occurrence process `1_{tau <= .} - A`.
pub fn compensated_occurrence<S: Scalar>(
    tau: &RandomTime,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<ProcessTable<S>> {
    let a = compensator_of_occurrence(tau, filtration, measure)?;
    tau.occurrence::<S>(filtration.n_times()).minus(&a)
}

/// Compensator of a pure-jump increasing process, assembled jump by jump:
/// for the n-th jump time and each enveloping constant time `t_m`,
/// `E[ΔZ_{t_m} 1_{ζ_n = t_m} | F_{m-1}]`. Cross-checked against the Doob
/// decomposition.
pub fn enveloping_compensator<S: Scalar>(
    z: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<ProcessTable<S>> {
    check_shape(z, filtration, measure)?;
    let n_atoms = z.n_atoms();
    let n_times = z.n_times();
    if z.at(0).iter().any(|v| !v.negligible()) {
        return Err(Error::Contract("pure-jump process must start at zero".into()));
    }
    let increments: Vec<Vec<S>> = (1..n_times).map(|k| z.increment(k)).collect();
    if increments.iter().flatten().any(|d| d.is_negative() && !d.negligible()) {
        return Err(Error::Contract("process is not increasing".into()));
    }
    // Jump times per atom, in order.
    let jump_times: Vec<Vec<usize>> = (0..n_atoms)
        .map(|a| {
            (1..n_times)
                .filter(|&k| increments[k - 1][a].is_mass())
                .collect()
        })
        .collect();
    let max_jumps = jump_times.iter().map(Vec::len).max().unwrap_or(0);
    let mut db = vec![vec![S::zero(); n_atoms]; n_times];
    for n in 0..max_jumps {
        for m in 1..n_times {
            let term: Vec<S> = (0..n_atoms)
                .map(|a| {
                    if jump_times[a].get(n) == Some(&m) {
                        increments[m - 1][a].clone()
                    } else {
                        S::zero()
                    }
                })
                .collect();
            let projected = cond_exp_as(&term, filtration.at(m - 1), measure);
            for (acc, v) in db[m].iter_mut().zip(projected) {
                *acc = acc.clone() + v;
            }
        }
    }
    let mut rows = vec![vec![S::zero(); n_atoms]];
    for m in 1..n_times {
        let next = rows[m - 1].iter().zip(&db[m]).map(|(a, b)| a.clone() + b.clone()).collect();
        rows.push(next);
    }
    let b = ProcessTable::raw(rows);
    let doob = doob_decomposition(z, filtration, measure)?.predictable;
    if !b.approx_eq_as(&doob, measure) {
        return Err(Error::InternalConsistency(
            "jump-by-jump compensator differs from the Doob predictable part".into(),
        ));
    }
    Ok(b.with_kind(ProcessKind::Predictable("compensator".into())))
}

/// Pathwise `[X,Y]_t = sum_{s <= t} ΔX_s ΔY_s`, starting at zero.
pub fn covariation<S: Scalar>(x: &ProcessTable<S>, y: &ProcessTable<S>) -> Result<ProcessTable<S>> {
    x.same_shape(y)?;
    let n = x.n_atoms();
    let mut rows = vec![vec![S::zero(); n]];
    for k in 1..x.n_times() {
        let dx = x.increment(k);
        let dy = y.increment(k);
        let next = rows[k - 1]
            .iter()
            .zip(dx.iter().zip(&dy))
            .map(|(acc, (a, b))| acc.clone() + a.clone() * b.clone())
            .collect();
        rows.push(next);
    }
    Ok(ProcessTable::raw(rows))
}

/// Predictable compensator of `[M,N]`; `⟨M,N⟩ ≡ 0` is strong
/// orthogonality.
pub fn sharp_bracket<S: Scalar>(
    m: &ProcessTable<S>,
    n: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<ProcessTable<S>> {
    for (name, x) in [("first", m), ("second", n)] {
        check_shape(x, filtration, measure)?;
        if let Some(failure) = martingale_failure(x, filtration, measure) {
            return Err(Error::Contract(format!("{name} argument is not a martingale: {failure}")));
        }
    }
    let cov = covariation(m, n)?;
    Ok(doob_decomposition(&cov, filtration, measure)?
        .predictable
        .with_kind(ProcessKind::Predictable("sharp bracket".into())))
}

pub fn strongly_orthogonal<S: Scalar>(
    m: &ProcessTable<S>,
    n: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<bool> {
    Ok(sharp_bracket(m, n, filtration, measure)?.vanishes_as(measure))
}

/// The random measure `dA(ω)` of an increasing process: per atom, the grid
/// times carrying mass and the masses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketMeasure {
    n_times: usize,
    masses: Vec<Vec<(usize, f64)>>,
    #[serde(skip)]
    exact: Vec<Vec<(usize, String)>>,
}

impl BracketMeasure {
    /// Reads the masses `ΔA_k > 0` of a nondecreasing process.
    pub fn from_process<S: Scalar>(a: &ProcessTable<S>) -> Result<Self> {
        let mut masses = vec![Vec::new(); a.n_atoms()];
        let mut exact = vec![Vec::new(); a.n_atoms()];
        for k in 1..a.n_times() {
            for (atom, d) in a.increment(k).into_iter().enumerate() {
                if d.is_negative() && !d.negligible() {
                    return Err(Error::Contract(format!(
                        "bracket process decreases at t_{k} on atom {atom}"
                    )));
                }
                if d.is_mass() {
                    masses[atom].push((k, d.to_f64_lossy()));
                    exact[atom].push((k, d.to_string()));
                }
            }
        }
        Ok(BracketMeasure {
            n_times: a.n_times(),
            masses,
            exact,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.masses.len()
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// Mass points of `dA(ω)`.
    pub fn atom_times(&self, atom: usize) -> Vec<usize> {
        self.masses[atom].iter().map(|(k, _)| *k).collect()
    }

    pub fn masses(&self, atom: usize) -> &[(usize, f64)] {
        &self.masses[atom]
    }

    pub fn has_mass_at(&self, atom: usize, k: usize) -> bool {
        self.masses[atom].iter().any(|(t, _)| *t == k)
    }

    /// Rebuilds the cumulative process in the requested arithmetic.
    pub fn cumulative<S: Scalar>(&self) -> ProcessTable<S> {
        let n = self.n_atoms();
        let mut rows = vec![vec![S::zero(); n]; self.n_times];
        for (atom, list) in self.exact.iter().enumerate() {
            for (k, text) in list {
                let v = S::parse_literal(text).unwrap_or_else(S::zero);
                for row in rows.iter_mut().skip(*k) {
                    row[atom] = row[atom].clone() + v.clone();
                }
            }
        }
        ProcessTable::raw(rows)
    }
}

/// Membership per (grid time, atom); `conditional` keeps the generating
/// conditional expectations of the raw support indicator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictableRandomSet {
    pub members: Vec<Vec<bool>>,
    pub conditional: Vec<Vec<f64>>,
}

impl PredictableRandomSet {
    pub fn empty(n_times: usize, n_atoms: usize) -> Self {
        PredictableRandomSet {
            members: vec![vec![false; n_atoms]; n_times],
            conditional: vec![vec![0.0; n_atoms]; n_times],
        }
    }

    pub fn contains(&self, k: usize, atom: usize) -> bool {
        self.members[k][atom]
    }

    /// Grid times in the ω-section.
    pub fn section(&self, atom: usize) -> Vec<usize> {
        (0..self.members.len()).filter(|&k| self.members[k][atom]).collect()
    }

    pub fn complement(&self) -> Self {
        PredictableRandomSet {
            members: self
                .members
                .iter()
                .map(|r| r.iter().map(|m| !m).collect())
                .collect(),
            conditional: self
                .conditional
                .iter()
                .map(|r| r.iter().map(|c| 1.0 - c).collect())
                .collect(),
        }
    }

    /// Membership constant on cells of the previous-time partition.
    pub fn is_predictable(&self, filtration: &Filtration) -> bool {
        (0..self.members.len()).all(|k| {
            let part = filtration.predictable_partition(k);
            part.cells()
                .iter()
                .all(|cell| cell.iter().all(|&a| self.members[k][a] == self.members[k][cell[0]]))
        })
    }

    /// Total `dA(ω)` mass carried by grid times outside the ω-section.
    pub fn mass_outside(&self, measure: &BracketMeasure, atom: usize) -> f64 {
        measure
            .masses(atom)
            .iter()
            .filter(|(k, _)| !self.members[*k][atom])
            .map(|(_, m)| m)
            .sum()
    }

    pub fn mass_inside(&self, measure: &BracketMeasure, atom: usize) -> f64 {
        measure
            .masses(atom)
            .iter()
            .filter(|(k, _)| self.members[*k][atom])
            .map(|(_, m)| m)
            .sum()
    }
}

/// Predictable support of `dA`: `(ω, t_k)` belongs iff the conditional
/// expectation of the raw support indicator given `t_{k-1}` is positive.
pub fn predictable_support<S: Scalar>(
    a: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<PredictableRandomSet> {
    check_shape(a, filtration, measure)?;
    let bracket = BracketMeasure::from_process(a)?;
    let n = a.n_atoms();
    let mut set = PredictableRandomSet::empty(a.n_times(), n);
    for k in 1..a.n_times() {
        let raw: Vec<S> = (0..n)
            .map(|atom| if bracket.has_mass_at(atom, k) { S::one() } else { S::zero() })
            .collect();
        let cond = cond_exp_as(&raw, filtration.at(k - 1), measure);
        for atom in 0..n {
            set.members[k][atom] = cond[atom].is_mass();
            set.conditional[k][atom] = cond[atom].to_f64_lossy();
        }
    }
    for atom in measure.support() {
        if set.mass_outside(&bracket, atom) > 0.0 {
            return Err(Error::InternalConsistency(format!(
                "predictable support misses mass of dA on atom {atom}"
            )));
        }
    }
    Ok(set)
}

/// Outcome of a mutual-singularity test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularityVerdict {
    pub singular: bool,
    /// Disjoint predictable supports `(C^A, C^B)` when singular.
    pub supports: Option<(PredictableRandomSet, PredictableRandomSet)>,
    /// `(atom, grid time)` carrying mass under both measures otherwise.
    pub witness: Option<(usize, usize)>,
}

/// Decides whether `da` and `db` are mutually singular for a.e. atom.
/// Both must come from processes predictable for `filtration`.
pub fn mutually_singular<S: Scalar>(
    da: &BracketMeasure,
    db: &BracketMeasure,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<SingularityVerdict> {
    if da.n_atoms() != db.n_atoms() || da.n_times() != db.n_times() {
        return Err(Error::Structural("bracket measures live on different spaces".into()));
    }
    for atom in measure.support() {
        if let Some(k) = da.atom_times(atom).into_iter().find(|&k| db.has_mass_at(atom, k)) {
            return Ok(SingularityVerdict {
                singular: false,
                supports: None,
                witness: Some((atom, k)),
            });
        }
    }
    let ca = predictable_support(&da.cumulative::<S>(), filtration, measure)?;
    let cb = ca.complement();
    for atom in measure.support() {
        if ca.mass_inside(db, atom) > 0.0 || cb.mass_inside(da, atom) > 0.0 {
            return Err(Error::InternalConsistency(format!(
                "predictable supports are not disjoint supports on atom {atom}"
            )));
        }
    }
    Ok(SingularityVerdict {
        singular: true,
        supports: Some((ca, cb)),
        witness: None,
    })
}

/// Constant predictable time `t_k` restricted to `{tau = t_k}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EnvelopingTime {
    pub time: usize,
    pub atoms: Vec<usize>,
}

/// Accessible / totally inaccessible split of a discrete stopping time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeDecomposition {
    pub accessible: RandomTime,
    pub totally_inaccessible: RandomTime,
    pub enveloping: Vec<EnvelopingTime>,
}

/// Every finite stopping time on a grid is accessible, enveloped by the
/// constant times of the grid.
pub fn classify_time(tau: &RandomTime, filtration: &Filtration) -> Result<TimeDecomposition> {
    tau.validate_stopping_time(filtration, "tau")?;
    let n = tau.values().len();
    let enveloping = (0..filtration.n_times())
        .filter_map(|k| {
            let atoms: Vec<usize> = (0..n).filter(|&a| tau.at(a) == Some(k)).collect();
            (!atoms.is_empty()).then_some(EnvelopingTime { time: k, atoms })
        })
        .collect();
    Ok(TimeDecomposition {
        accessible: tau.clone(),
        totally_inaccessible: RandomTime::never(n),
        enveloping,
    })
}

/// Continuous, accessible and totally inaccessible parts of a martingale.
#[derive(Clone, Debug)]
pub struct DiscreteParts<S> {
    pub continuous: ProcessTable<S>,
    pub accessible: ProcessTable<S>,
    pub inaccessible: ProcessTable<S>,
}

/// Supported model classes for the Yoeurp split.
pub enum ModelClass<'a, S> {
    Discrete {
        martingale: &'a ProcessTable<S>,
        filtration: &'a Filtration,
        measure: &'a MeasureVector<S>,
    },
    Mixed(&'a MixedMartingale),
    /// Anything else, named for the error message.
    Other(&'a str),
}

pub enum YoeurpParts<S> {
    Discrete(DiscreteParts<S>),
    Mixed(MixedParts),
}

pub fn yoeurp_parts<S: Scalar>(class: ModelClass<'_, S>) -> Result<YoeurpParts<S>> {
    match class {
        ModelClass::Discrete {
            martingale,
            filtration,
            measure,
        } => yoeurp_parts_discrete(martingale, filtration, measure).map(YoeurpParts::Discrete),
        ModelClass::Mixed(m) => m.yoeurp_parts().map(YoeurpParts::Mixed),
        ModelClass::Other(name) => Err(Error::Unsupported(format!(
            "Yoeurp decomposition is only computed for finite and mixed models, not {name}"
        ))),
    }
}

/// On a grid every jump is accessible: `(0, M - M_0, 0)`.
pub fn yoeurp_parts_discrete<S: Scalar>(
    m: &ProcessTable<S>,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<DiscreteParts<S>> {
    if let Some(failure) = martingale_failure(m, filtration, measure) {
        return Err(Error::Contract(format!("input is not a martingale: {failure}")));
    }
    let zero = ProcessTable::zeros(m.n_times(), m.n_atoms());
    let parts = DiscreteParts {
        continuous: zero.clone(),
        accessible: m.started_at_zero(),
        inaccessible: zero,
    };
    let total = parts.continuous.plus(&parts.accessible)?.plus(&parts.inaccessible)?;
    if !total.approx_eq_as(&m.started_at_zero(), measure) {
        return Err(Error::InternalConsistency("parts do not sum to M - M_0".into()));
    }
    let pairs = [
        (&parts.continuous, &parts.accessible),
        (&parts.continuous, &parts.inaccessible),
        (&parts.accessible, &parts.inaccessible),
    ];
    for (x, y) in pairs {
        if !strongly_orthogonal(x, y, filtration, measure)? {
            return Err(Error::InternalConsistency("parts are not strongly orthogonal".into()));
        }
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    struct M2 {
        eta: RandomTime,
        tau: RandomTime,
        f: Filtration,
        h: Filtration,
        g: Filtration,
        p: MeasureVector<Rational>,
        pstar: MeasureVector<Rational>,
    }

    fn m2() -> M2 {
        let eta = RandomTime::new(vec![Some(1), Some(1), Some(2), Some(2)]);
        let tau = RandomTime::new(vec![Some(1), Some(2), Some(1), Some(2)]);
        let f = Filtration::natural_of_occurrence(&eta, 3);
        let h = Filtration::natural_of_occurrence(&tau, 3);
        let g = f.join(&h).unwrap();
        let p = MeasureVector::new(vec![ratio(1, 10), ratio(2, 10), ratio(3, 10), ratio(4, 10)])
            .unwrap();
        let pstar =
            MeasureVector::new(vec![ratio(12, 100), ratio(18, 100), ratio(28, 100), ratio(42, 100)])
                .unwrap();
        M2 { eta, tau, f, h, g, p, pstar }
    }

    fn q(x: i64, y: i64) -> Rational {
        ratio(x, y)
    }

    #[test]
    fn doob_of_deterministic_increasing_process() {
        let m = m2();
        let x = ProcessTable::deterministic(&[q(1, 1), q(2, 1), q(5, 1)], 4);
        let d = doob_decomposition(&x, &m.g, &m.p).unwrap();
        assert!(d.martingale.vanishes_as(&m.p));
        assert_eq!(d.predictable, x.started_at_zero());
    }

    #[test]
    fn doob_of_occurrence_in_m2() {
        let m = m2();
        let occ = m.tau.occurrence::<Rational>(3);
        let d = doob_decomposition(&occ, &m.h, &m.p).unwrap();
        let a = &d.predictable;
        assert_eq!(a.increment(1), vec![q(2, 5); 4]);
        // {τ=1} atoms 0 and 2; {τ>1} atoms 1 and 3.
        assert_eq!(a.increment(2), vec![q(0, 1), q(1, 1), q(0, 1), q(1, 1)]);
        // Idempotence: the martingale part has no predictable part.
        let again = doob_decomposition(&d.martingale, &m.h, &m.p).unwrap();
        assert!(again.predictable.vanishes_as(&m.p));
        assert_eq!(again.martingale, d.martingale);
    }

    #[test]
    fn compensated_occurrence_values() {
        let m = m2();
        for measure in [&m.p, &m.pstar] {
            let h = compensated_occurrence(&m.tau, &m.h, measure).unwrap();
            assert_eq!(h.at(2), &[q(3, 5), q(-2, 5), q(3, 5), q(-2, 5)]);
            assert_eq!(measure.expectation(h.at(2)), q(0, 1));
        }
        let det = RandomTime::constant(1, 4);
        let a = compensator_of_occurrence(&det, &m.h, &m.p).unwrap();
        assert_eq!(a, det.occurrence::<Rational>(3));
    }

    #[test]
    fn enveloping_compensator_examples() {
        let m = m2();
        let h = compensated_occurrence(&m.tau, &m.h, &m.p).unwrap();
        let z = covariation(&h, &h).unwrap();
        let b = enveloping_compensator(&z, &m.h, &m.p).unwrap();
        assert_eq!(b.increment(1), vec![q(6, 25); 4]);
        let zero = ProcessTable::<Rational>::zeros(3, 4);
        assert!(enveloping_compensator(&zero, &m.h, &m.p).unwrap().vanishes_as(&m.p));
        // Single atom: no randomness, the compensator is Z itself.
        let one = MeasureVector::new(vec![q(1, 1)]).unwrap();
        let f1 = Filtration::trivial(1, 3);
        let z1 = ProcessTable::raw(vec![vec![q(0, 1)], vec![q(2, 1)], vec![q(3, 1)]]);
        assert_eq!(enveloping_compensator(&z1, &f1, &one).unwrap().values(), z1.values());
    }

    #[test]
    fn covariation_of_m2_occurrence_martingales() {
        let m = m2();
        let mm = compensated_occurrence(&m.eta, &m.f, &m.p).unwrap();
        let nn = compensated_occurrence(&m.tau, &m.h, &m.p).unwrap();
        let c = covariation(&mm, &nn).unwrap();
        let expected = vec![q(42, 100), q(-28, 100), q(-18, 100), q(12, 100)];
        assert_eq!(c.at(1), expected.as_slice());
        assert_eq!(c.at(2), expected.as_slice());
        assert_eq!(m.pstar.expectation(c.at(1)), q(0, 1));
        assert_eq!(m.p.expectation(c.at(1)), q(-2, 100));
        let constant = ProcessTable::deterministic(&vec![q(3, 1); 3], 4);
        assert!(covariation(&mm, &constant).unwrap().vanishes_as(&m.p));
    }

    #[test]
    fn sharp_brackets_of_m2() {
        let m = m2();
        let mm = compensated_occurrence(&m.eta, &m.f, &m.p).unwrap();
        let nn = compensated_occurrence(&m.tau, &m.h, &m.p).unwrap();
        let bm = sharp_bracket(&mm, &mm, &m.f, &m.p).unwrap();
        assert_eq!(bm.increment(1), vec![q(21, 100); 4]);
        assert_eq!(bm.increment(2), vec![q(0, 1); 4]);
        let bn = sharp_bracket(&nn, &nn, &m.h, &m.p).unwrap();
        assert_eq!(bn.increment(1), vec![q(24, 100); 4]);
        let constant = ProcessTable::deterministic(&vec![q(1, 1); 3], 4);
        assert!(strongly_orthogonal(&mm, &constant, &m.f, &m.p).unwrap());
        // Not a martingale under P with respect to F.
        let occ = m.eta.occurrence::<Rational>(3);
        assert!(matches!(sharp_bracket(&occ, &mm, &m.f, &m.p), Err(Error::Contract(_))));
    }

    #[test]
    fn predictable_support_examples() {
        let m = m2();
        let zero = ProcessTable::<Rational>::zeros(3, 4);
        let s = predictable_support(&zero, &m.f, &m.p).unwrap();
        assert!(s.members.iter().flatten().all(|x| !x));
        let mm = compensated_occurrence(&m.eta, &m.f, &m.p).unwrap();
        let bm = sharp_bracket(&mm, &mm, &m.f, &m.p).unwrap();
        let s = predictable_support(&bm, &m.f, &m.p).unwrap();
        for atom in 0..4 {
            assert_eq!(s.section(atom), vec![1]);
        }
        assert!(s.is_predictable(&m.f));
        let full = ProcessTable::deterministic(&[q(0, 1), q(1, 1), q(2, 1)], 4);
        let s = predictable_support(&full, &m.f, &m.p).unwrap();
        for atom in 0..4 {
            assert_eq!(s.section(atom), vec![1, 2]);
        }
    }

    #[test]
    fn singularity_examples() {
        let m = m2();
        let a = ProcessTable::deterministic(&[q(0, 1), q(1, 1), q(1, 1)], 4);
        let b = ProcessTable::deterministic(&[q(0, 1), q(0, 1), q(1, 1)], 4);
        let da = BracketMeasure::from_process(&a).unwrap();
        let db = BracketMeasure::from_process(&b).unwrap();
        let v = mutually_singular(&da, &db, &m.g, &m.p).unwrap();
        assert!(v.singular);
        let (ca, cb) = v.supports.unwrap();
        assert_eq!(ca.section(0), vec![1]);
        assert!(cb.section(0).contains(&2));

        let mm = compensated_occurrence(&m.eta, &m.f, &m.p).unwrap();
        let nn = compensated_occurrence(&m.tau, &m.h, &m.p).unwrap();
        let bm = BracketMeasure::from_process(&sharp_bracket(&mm, &mm, &m.f, &m.p).unwrap()).unwrap();
        let bn = BracketMeasure::from_process(&sharp_bracket(&nn, &nn, &m.h, &m.p).unwrap()).unwrap();
        let v = mutually_singular(&bm, &bn, &m.g, &m.p).unwrap();
        assert!(!v.singular);
        assert_eq!(v.witness.map(|w| w.1), Some(1));
    }

    #[test]
    fn bracket_measure_reconstructs_its_process() {
        let m = m2();
        let nn = compensated_occurrence(&m.tau, &m.h, &m.p).unwrap();
        let bn = sharp_bracket(&nn, &nn, &m.h, &m.p).unwrap();
        let measure = BracketMeasure::from_process(&bn).unwrap();
        assert_eq!(measure.cumulative::<Rational>().values(), bn.values());
    }

    #[test]
    fn discrete_times_are_accessible() {
        let m = m2();
        let d = classify_time(&m.tau, &m.h).unwrap();
        assert_eq!(d.totally_inaccessible, RandomTime::never(4));
        let times: Vec<usize> = d.enveloping.iter().map(|e| e.time).collect();
        assert_eq!(times, vec![1, 2]);
        assert!(classify_time(&m.tau, &m.f).is_err());
    }

    #[test]
    fn yoeurp_split_of_discrete_martingale() {
        let m = m2();
        let mm = compensated_occurrence(&m.eta, &m.f, &m.p).unwrap();
        let parts = yoeurp_parts_discrete(&mm, &m.f, &m.p).unwrap();
        assert!(parts.continuous.vanishes_as(&m.p));
        assert!(parts.inaccessible.vanishes_as(&m.p));
        assert_eq!(parts.accessible, mm.started_at_zero());
        let other = yoeurp_parts::<Rational>(ModelClass::Other("Levy"));
        assert!(matches!(other, Err(Error::Unsupported(_))));
    }
}
