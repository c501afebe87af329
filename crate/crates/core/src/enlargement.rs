//! Progressive enlargement `G = F ∨ H` on finite spaces: decoupling
//! measures, the martingale-preserving measure `P*`, `G`-compensators of
//! the random time, immersion and the minimal martingale measure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite_space::{
    cond_exp_as, FiniteFilteredSpace, Filtration, MeasureVector, Node, Partition, ProcessKind,
    ProcessTable, RandomTime,
};
use crate::linalg::null_space;
use crate::martingale_calculus::{
    compensated_occurrence, compensator_of_occurrence, covariation, is_martingale,
    martingale_failure, MartingaleFailure,
};
use crate::scalar::Scalar;

pub const F_LABEL: &str = "F";
pub const H_LABEL: &str = "H";
pub const G_LABEL: &str = "G";

/// A finite space carrying `F`, the natural filtration `H` of the
/// occurrence of `τ`, their join `G`, the reference measure `P`, and the
/// time `η` whose compensated occurrence is the `F`-martingale `M`.
#[derive(Clone, Debug)]
pub struct JointModel<S> {
    space: FiniteFilteredSpace,
    eta: RandomTime,
    tau: RandomTime,
    p: MeasureVector<S>,
}

impl<S: Scalar> JointModel<S> {
    pub fn new(
        mut space: FiniteFilteredSpace,
        f: Filtration,
        eta: RandomTime,
        tau: RandomTime,
        p: MeasureVector<S>,
    ) -> Result<Self> {
        let n = space.n_atoms();
        if f.n_atoms() != n || f.n_times() != space.n_times() || p.n_atoms() != n {
            return Err(Error::Structural("joint model pieces disagree on atoms or grid".into()));
        }
        if !f.starts_trivial() {
            return Err(Error::Structural("F must start from the trivial partition".into()));
        }
        eta.validate_stopping_time(&f, "eta")?;
        let h = Filtration::natural_of_occurrence(&tau, space.n_times());
        tau.validate_stopping_time(&h, "tau")?;
        if !h.starts_trivial() {
            return Err(Error::Structural("tau may not occur at t_0".into()));
        }
        let g = f.join(&h)?;
        space.insert_filtration(F_LABEL, f)?;
        space.insert_filtration(H_LABEL, h)?;
        space.insert_filtration(G_LABEL, g)?;
        Ok(JointModel { space, eta, tau, p })
    }

    /// `F` is the natural filtration of `η`; atoms are named after their
    /// `(η, τ)` grid indices.
    pub fn from_occurrences(
        grid: Vec<f64>,
        eta: Vec<Option<usize>>,
        tau: Vec<Option<usize>>,
        weights: Vec<S>,
    ) -> Result<Self> {
        let name = |v: Option<usize>| v.map_or("inf".to_string(), |k| k.to_string());
        let atoms: Vec<String> = eta
            .iter()
            .zip(&tau)
            .enumerate()
            .map(|(i, (e, t))| format!("w{i}({},{})", name(*e), name(*t)))
            .collect();
        let space = FiniteFilteredSpace::new(atoms, grid)?;
        let eta = RandomTime::new(eta);
        let f = Filtration::natural_of_occurrence(&eta, space.n_times());
        Self::new(space, f, eta, RandomTime::new(tau), MeasureVector::new(weights)?)
    }

    pub fn space(&self) -> &FiniteFilteredSpace {
        &self.space
    }

    pub fn n_atoms(&self) -> usize {
        self.space.n_atoms()
    }

    pub fn n_times(&self) -> usize {
        self.space.n_times()
    }

    pub fn f(&self) -> &Filtration {
        self.space.filtration(F_LABEL).expect("F present")
    }

    pub fn h(&self) -> &Filtration {
        self.space.filtration(H_LABEL).expect("H present")
    }

    pub fn g(&self) -> &Filtration {
        self.space.filtration(G_LABEL).expect("G present")
    }

    pub fn p(&self) -> &MeasureVector<S> {
        &self.p
    }

    pub fn eta(&self) -> &RandomTime {
        &self.eta
    }

    pub fn tau(&self) -> &RandomTime {
        &self.tau
    }

    pub fn with_measure(&self, p: MeasureVector<S>) -> Result<Self> {
        if p.n_atoms() != self.n_atoms() {
            return Err(Error::Structural("measure over the wrong number of atoms".into()));
        }
        Ok(JointModel { p, ..self.clone() })
    }

    /// Compensated occurrence of `η` in `F` under `measure`.
    pub fn m(&self, measure: &MeasureVector<S>) -> Result<ProcessTable<S>> {
        Ok(compensated_occurrence(&self.eta, self.f(), measure)?
            .with_kind(ProcessKind::Adapted(F_LABEL.into())))
    }

    /// Compensated occurrence of `τ` in `H` under `measure`.
    pub fn h_martingale(&self, measure: &MeasureVector<S>) -> Result<ProcessTable<S>> {
        Ok(compensated_occurrence(&self.tau, self.h(), measure)?
            .with_kind(ProcessKind::Adapted(H_LABEL.into())))
    }

    pub fn to_f64(&self) -> JointModel<f64> {
        JointModel {
            space: self.space.clone(),
            eta: self.eta.clone(),
            tau: self.tau.clone(),
            p: self.p.to_f64(),
        }
    }
}

/// Two support points `(c, d')`, `(c', d)` whose cross pair `(c, d)` is
/// null: no equivalent measure can make `F_T` and `H_T` independent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonRectangular {
    pub f_cell: usize,
    pub h_cell: usize,
    pub f_cell_atoms: Vec<usize>,
    pub h_cell_atoms: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct Decoupling<S> {
    pub q: Option<MeasureVector<S>>,
    pub certificate: Option<NonRectangular>,
}

/// `P(c ∩ d)` for every pair of terminal cells.
fn joint_table<S: Scalar>(f: &Partition, h: &Partition, measure: &MeasureVector<S>) -> Vec<Vec<S>> {
    let mut table = vec![vec![S::zero(); h.n_cells()]; f.n_cells()];
    for atom in 0..measure.n_atoms() {
        let (c, d) = (f.cell_of(atom), h.cell_of(atom));
        table[c][d] = table[c][d].clone() + measure.weight(atom).clone();
    }
    table
}

/// Existence of an equivalent measure under which `F_T` and `H_T` are
/// independent: the support of the joint cell law must be a rectangle.
/// When it is, `Q` is the product of the `P`-marginals, spread within each
/// `G_T` cell proportionally to `P`.
pub fn decoupling_exists<S: Scalar>(model: &JointModel<S>) -> Decoupling<S> {
    let f = model.f().terminal();
    let h = model.h().terminal();
    let p = model.p();
    let table = joint_table(f, h, p);
    let f_mass: Vec<S> = table.iter().map(|row| S::sum_of(row)).collect();
    let h_mass: Vec<S> = (0..h.n_cells())
        .map(|d| S::sum_of(table.iter().map(|row| &row[d])))
        .collect();
    for (c, fm) in f_mass.iter().enumerate() {
        for (d, hm) in h_mass.iter().enumerate() {
            if fm.is_mass() && hm.is_mass() && !table[c][d].is_mass() {
                return Decoupling {
                    q: None,
                    certificate: Some(NonRectangular {
                        f_cell: c,
                        h_cell: d,
                        f_cell_atoms: f.cell(c).to_vec(),
                        h_cell_atoms: h.cell(d).to_vec(),
                    }),
                };
            }
        }
    }
    let weights: Vec<S> = (0..model.n_atoms())
        .map(|atom| {
            let (c, d) = (f.cell_of(atom), h.cell_of(atom));
            if p.is_null(atom) {
                S::zero()
            } else {
                f_mass[c].clone() * h_mass[d].clone() * p.weight(atom).clone()
                    / table[c][d].clone()
            }
        })
        .collect();
    let q = MeasureVector::normalized(weights).expect("product of marginals is a measure");
    Decoupling {
        q: Some(q),
        certificate: None,
    }
}

/// `F_T ⟂ H_T` under `measure`.
pub fn terminal_independent<S: Scalar>(model: &JointModel<S>, measure: &MeasureVector<S>) -> bool {
    let f = model.f().terminal();
    let h = model.h().terminal();
    let table = joint_table(f, h, measure);
    let f_mass: Vec<S> = table.iter().map(|row| S::sum_of(row)).collect();
    let h_mass: Vec<S> = (0..h.n_cells())
        .map(|d| S::sum_of(table.iter().map(|row| &row[d])))
        .collect();
    table.iter().enumerate().all(|(c, row)| {
        row.iter()
            .enumerate()
            .all(|(d, x)| x.approx_eq(&(f_mass[c].clone() * h_mass[d].clone())))
    })
}

fn marginal<S: Scalar>(partition: &Partition, measure: &MeasureVector<S>) -> Vec<S> {
    partition.cells().iter().map(|c| measure.mass_of(c)).collect()
}

/// `P*(ω) = (dP/dQ|F_T)(ω) (dP/dQ|H_T)(ω) Q(ω)`; verifies marginal
/// preservation and independence under `P*`.
pub fn martingale_preserving_measure<S: Scalar>(
    model: &JointModel<S>,
    q: &MeasureVector<S>,
) -> Result<MeasureVector<S>> {
    let p = model.p();
    if !q.equivalent(p) {
        return Err(Error::Contract("decoupling measure is not equivalent to P".into()));
    }
    if !terminal_independent(model, q) {
        return Err(Error::Contract("Q does not make F_T and H_T independent".into()));
    }
    let f = model.f().terminal();
    let h = model.h().terminal();
    let weights: Vec<S> = (0..model.n_atoms())
        .map(|atom| {
            if q.is_null(atom) {
                return S::zero();
            }
            let c = f.cell(f.cell_of(atom));
            let d = h.cell(h.cell_of(atom));
            p.mass_of(c) / q.mass_of(c) * (p.mass_of(d) / q.mass_of(d)) * q.weight(atom).clone()
        })
        .collect();
    let sum = S::sum_of(&weights);
    if !sum.approx_eq(&S::one()) {
        return Err(Error::InternalConsistency(format!("P* has total mass {sum}")));
    }
    let pstar = MeasureVector::normalized(weights)?;
    let same = |part: &Partition| {
        marginal(part, &pstar)
            .iter()
            .zip(marginal(part, p))
            .all(|(a, b)| a.approx_eq(&b))
    };
    if !same(f) || !same(h) {
        return Err(Error::InternalConsistency("P* changes a marginal law".into()));
    }
    if !terminal_independent(model, &pstar) {
        return Err(Error::InternalConsistency("F and H are dependent under P*".into()));
    }
    Ok(pstar)
}

/// Canonical `P*`: decide decoupling, build `Q`, apply the construction and
/// check that it agrees with `Q` itself (product of marginals).
pub fn canonical_pstar<S: Scalar>(model: &JointModel<S>) -> Result<MeasureVector<S>> {
    let dec = decoupling_exists(model);
    let Some(q) = dec.q else {
        let c = dec.certificate.expect("certificate when no Q");
        return Err(Error::assumption(
            "D",
            format!(
                "joint support is not a product set: F_T cell {} and H_T cell {} never meet",
                c.f_cell, c.h_cell
            ),
        ));
    };
    let pstar = martingale_preserving_measure(model, &q)?;
    if !pstar.approx_eq(&q) {
        return Err(Error::InternalConsistency(
            "P* differs from the product of marginals".into(),
        ));
    }
    Ok(pstar)
}

/// A grid time at which the hazard route could not be used.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HazardFallback {
    pub time: usize,
    pub reason: String,
}

/// `A^{P,G}` by two routes.
#[derive(Clone, Debug)]
pub struct GCompensator<S> {
    /// Doob decomposition of the occurrence process in `G`.
    pub direct: ProcessTable<S>,
    /// Hazard increments `1_{τ >= t_k} P(τ = t_k | F_k) / P(τ >= t_k | F_k)`
    /// at the times where that ratio is `F`-predictable; direct values
    /// elsewhere.
    pub hazard: ProcessTable<S>,
    pub fallbacks: Vec<HazardFallback>,
}

pub fn g_compensator_of_tau<S: Scalar>(
    model: &JointModel<S>,
    measure: &MeasureVector<S>,
) -> Result<GCompensator<S>> {
    let g = model.g();
    let f = model.f();
    let tau = model.tau();
    let n = model.n_atoms();
    let direct = compensator_of_occurrence(tau, g, measure)?;
    let mut fallbacks = Vec::new();
    let mut rows = vec![vec![S::zero(); n]];
    for k in 1..model.n_times() {
        let at_k: Vec<S> = indicator(n, |a| tau.at(a) == Some(k));
        let from_k: Vec<S> = indicator(n, |a| tau.at(a).is_none_or(|j| j >= k));
        let num = cond_exp_as(&at_k, f.at(k), measure);
        let den = cond_exp_as(&from_k, f.at(k), measure);
        let ratio: Vec<Option<S>> = (0..n)
            .map(|a| {
                (!measure.is_null(a) && den[a].is_mass())
                    .then(|| num[a].clone() / den[a].clone())
            })
            .collect();
        let mut undefined = false;
        for a in measure.support() {
            if !den[a].is_mass() {
                undefined = true;
            }
        }
        let predictable = f.at(k - 1).cells().iter().all(|cell| {
            let mut defined = cell.iter().filter_map(|&a| ratio[a].as_ref());
            match defined.next() {
                None => true,
                Some(first) => defined.all(|x| x.approx_eq(first)),
            }
        });
        let dd = direct.increment(k);
        let inc: Vec<S> = if predictable {
            (0..n)
                .map(|a| match (&ratio[a], from_k[a].is_zero()) {
                    (_, true) => S::zero(),
                    (Some(r), false) => r.clone(),
                    (None, false) => dd[a].clone(),
                })
                .collect()
        } else {
            fallbacks.push(HazardFallback {
                time: k,
                reason: "hazard given F_k is not F-predictable".into(),
            });
            dd.clone()
        };
        if undefined {
            fallbacks.push(HazardFallback {
                time: k,
                reason: "zero hazard denominator on a cell where tau has occurred".into(),
            });
        }
        let next = rows[k - 1].iter().zip(&inc).map(|(a, b)| a.clone() + b.clone()).collect();
        rows.push(next);
    }
    let hazard = ProcessTable::raw(rows);
    if !hazard.approx_eq_as(&direct, measure) {
        return Err(Error::InternalConsistency(
            "hazard route and Doob route for the G-compensator disagree".into(),
        ));
    }
    Ok(GCompensator {
        direct: direct.with_kind(ProcessKind::Predictable(G_LABEL.into())),
        hazard,
        fallbacks,
    })
}

fn indicator<S: Scalar>(n: usize, pred: impl Fn(usize) -> bool) -> Vec<S> {
    (0..n).map(|a| if pred(a) { S::one() } else { S::zero() }).collect()
}

/// `H' = 1_{τ <= .} - A^{P,G}` together with the pieces of
/// `H' = H + A^{P,H} - A^{P,G}`.
#[derive(Clone, Debug)]
pub struct CompensatedInG<S> {
    pub h_prime: ProcessTable<S>,
    pub h: ProcessTable<S>,
    pub a_h: ProcessTable<S>,
    pub a_g: ProcessTable<S>,
    pub fallbacks: Vec<HazardFallback>,
}

pub fn compensated_occurrence_g<S: Scalar>(
    model: &JointModel<S>,
    measure: &MeasureVector<S>,
) -> Result<CompensatedInG<S>> {
    let gc = g_compensator_of_tau(model, measure)?;
    let a_g = gc.direct;
    let a_h = compensator_of_occurrence(model.tau(), model.h(), measure)?;
    let occ = model.tau().occurrence::<S>(model.n_times());
    let h = occ.minus(&a_h)?;
    let h_prime = occ.minus(&a_g)?.with_kind(ProcessKind::Adapted(G_LABEL.into()));
    let rebuilt = h.plus(&a_h)?.minus(&a_g)?;
    if !rebuilt.approx_eq_as(&h_prime, measure) {
        return Err(Error::InternalConsistency("H' differs from H + A^H - A^G".into()));
    }
    if let Some(failure) = martingale_failure(&h_prime, model.g(), measure) {
        return Err(Error::InternalConsistency(format!("H' is not a G-martingale: {failure}")));
    }
    Ok(CompensatedInG {
        h_prime,
        h,
        a_h,
        a_g,
        fallbacks: gc.fallbacks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImmersionWitness {
    /// Terminal `F` cell whose conditional-probability martingale fails.
    pub f_cell: usize,
    pub failure: MartingaleFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImmersionVerdict {
    pub holds: bool,
    pub witness: Option<ImmersionWitness>,
}

/// Every `F`-martingale stays a `G`-martingale: tested on the spanning
/// family `E[1_c | F_t]` over terminal `F` cells `c`.
pub fn immersion_check<S: Scalar>(model: &JointModel<S>, measure: &MeasureVector<S>) -> ImmersionVerdict {
    let f = model.f();
    let n = model.n_atoms();
    for (c, cell) in f.terminal().cells().iter().enumerate() {
        if !measure.mass_of(cell).is_mass() {
            continue;
        }
        let x: Vec<S> = indicator(n, |a| cell.contains(&a));
        let rows = (0..f.n_times()).map(|k| cond_exp_as(&x, f.at(k), measure)).collect();
        let y = ProcessTable::raw(rows);
        if let Some(failure) = martingale_failure(&y, model.g(), measure) {
            return ImmersionVerdict {
                holds: false,
                witness: Some(ImmersionWitness { f_cell: c, failure }),
            };
        }
    }
    ImmersionVerdict {
        holds: true,
        witness: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteVerdict {
    pub holds: bool,
    /// Number of martingales tested.
    pub checked: usize,
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MmmVerdict {
    pub is_mmm: bool,
    /// Every base-measure martingale strongly orthogonal to `H` stays a
    /// martingale under the candidate.
    pub definition_route: RouteVerdict,
    /// `M` and `[M,H]` are candidate-measure `G`-martingales.
    pub bracket_route: RouteVerdict,
}

/// Whether `candidate` is the minimal martingale measure for `H'` on
/// `(G, base)`. Both routes must agree.
pub fn is_minimal_martingale_measure<S: Scalar>(
    model: &JointModel<S>,
    candidate: &MeasureVector<S>,
    base: &MeasureVector<S>,
) -> Result<MmmVerdict> {
    let g = model.g();
    let h = model.h_martingale(base)?;
    if let Some(failure) = martingale_failure(&h, g, base) {
        return Err(Error::Contract(format!("H is not a G-martingale under the base measure: {failure}")));
    }
    let definition_route = orthogonal_complement_route(g, &h, candidate, base);
    let m = model.m(base)?;
    let mh = covariation(&m, &h)?;
    let mut bracket_route = RouteVerdict {
        holds: true,
        checked: 2,
        witness: None,
    };
    for (name, x) in [("M", &m), ("[M,H]", &mh)] {
        if let Some(failure) = martingale_failure(x, g, candidate) {
            bracket_route.holds = false;
            bracket_route.witness = Some(format!("{name}: {failure}"));
            break;
        }
    }
    if definition_route.holds != bracket_route.holds {
        return Err(Error::InternalConsistency(format!(
            "minimal martingale measure routes disagree: definition {:?}, brackets {:?}",
            definition_route, bracket_route
        )));
    }
    Ok(MmmVerdict {
        is_mmm: definition_route.holds,
        definition_route,
        bracket_route,
    })
}

/// Node-wise basis of base-measure martingale increments orthogonal to the
/// increment of `h`, each tested for zero drift under `candidate`.
fn orthogonal_complement_route<S: Scalar>(
    g: &Filtration,
    h: &ProcessTable<S>,
    candidate: &MeasureVector<S>,
    base: &MeasureVector<S>,
) -> RouteVerdict {
    let mut checked = 0;
    for node in g.nodes(base) {
        let k = node.time + 1;
        let child = g.at(k);
        let w: Vec<S> = node.children.iter().map(|&c| base.mass_of(child.cell(c))).collect();
        let dh: Vec<S> = node
            .children
            .iter()
            .map(|&c| {
                let a = child.cell(c)[0];
                h.value(k, a).clone() - h.value(k - 1, a).clone()
            })
            .collect();
        let wh: Vec<S> = w.iter().zip(&dh).map(|(a, b)| a.clone() * b.clone()).collect();
        for v in null_space(&[w.clone(), wh]) {
            checked += 1;
            let drift = node.children.iter().zip(&v).fold(S::zero(), |acc, (&c, x)| {
                acc + candidate.mass_of(child.cell(c)) * x.clone()
            });
            if !drift.negligible() {
                return RouteVerdict {
                    holds: false,
                    checked,
                    witness: Some(format!(
                        "increment {:?} at node {node} has drift {:.6}",
                        v.iter().map(S::to_f64_lossy).collect::<Vec<_>>(),
                        drift.to_f64_lossy()
                    )),
                };
            }
        }
    }
    RouteVerdict {
        holds: true,
        checked,
        witness: None,
    }
}

/// `L_t = dP/dP*` on `G_t`, with `γ` recovered from
/// `ΔL = -γ L_- ΔH` where that representation exists.
#[derive(Clone, Debug)]
pub struct DensityProcess<S> {
    pub l: ProcessTable<S>,
    pub gamma: ProcessTable<S>,
    /// Nodes where `ΔL` is not proportional to `ΔH`.
    pub unrepresentable: Vec<Node>,
}

impl<S: Scalar> DensityProcess<S> {
    pub fn representable(&self) -> bool {
        self.unrepresentable.is_empty()
    }

    pub fn is_constant(&self, measure: &MeasureVector<S>) -> bool {
        let one = ProcessTable::deterministic(&vec![S::one(); self.l.n_times()], self.l.n_atoms());
        self.l.approx_eq_as(&one, measure)
    }
}

pub fn density_process<S: Scalar>(
    target: &MeasureVector<S>,
    base: &MeasureVector<S>,
    filtration: &Filtration,
    h: &ProcessTable<S>,
) -> Result<DensityProcess<S>> {
    if !target.equivalent(base) {
        return Err(Error::Contract("density needs equivalent measures".into()));
    }
    let n = base.n_atoms();
    let rows: Vec<Vec<S>> = filtration
        .partitions()
        .iter()
        .map(|part| {
            let mut row = vec![S::zero(); n];
            for cell in part.cells() {
                let b = base.mass_of(cell);
                if b.is_mass() {
                    let v = target.mass_of(cell) / b;
                    for &a in cell {
                        row[a] = v.clone();
                    }
                }
            }
            row
        })
        .collect();
    let l = ProcessTable::raw(rows);
    if !is_martingale(&l, filtration, base) {
        return Err(Error::InternalConsistency("density is not a base-measure martingale".into()));
    }
    for a in base.support() {
        let lhs = l.terminal()[a].clone() * base.weight(a).clone();
        if !lhs.approx_eq(target.weight(a)) {
            return Err(Error::InternalConsistency(format!("L_T P*({a}) differs from P({a})")));
        }
    }
    let mut gamma = vec![vec![S::zero(); n]; filtration.n_times()];
    let mut unrepresentable = Vec::new();
    for node in filtration.nodes(base) {
        let k = node.time + 1;
        let parent = filtration.at(node.time).cell(node.cell);
        let a0 = parent[0];
        let l_prev = l.value(k - 1, a0).clone();
        let child = filtration.at(k);
        let pairs: Vec<(S, S)> = node
            .children
            .iter()
            .map(|&c| {
                let a = child.cell(c)[0];
                (
                    l.value(k, a).clone() - l_prev.clone(),
                    h.value(k, a).clone() - h.value(k - 1, a).clone(),
                )
            })
            .collect();
        let g = pairs
            .iter()
            .find(|(_, dh)| !dh.negligible())
            .map(|(dl, dh)| -(dl.clone()) / (l_prev.clone() * dh.clone()))
            .unwrap_or_else(S::zero);
        let fits = pairs.iter().all(|(dl, dh)| {
            (dl.clone() + g.clone() * l_prev.clone() * dh.clone()).negligible()
        });
        if !fits {
            unrepresentable.push(node.clone());
        }
        for &a in parent {
            gamma[k][a] = g.clone();
        }
    }
    Ok(DensityProcess {
        l,
        gamma: ProcessTable::raw(gamma),
        unrepresentable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn q(a: i64, b: i64) -> Rational {
        ratio(a, b)
    }

    fn m2(weights: [Rational; 4]) -> JointModel<Rational> {
        JointModel::from_occurrences(
            vec![0.0, 1.0, 2.0],
            vec![Some(1), Some(1), Some(2), Some(2)],
            vec![Some(1), Some(2), Some(1), Some(2)],
            weights.to_vec(),
        )
        .unwrap()
    }

    fn m2_p() -> JointModel<Rational> {
        m2([q(1, 10), q(2, 10), q(3, 10), q(4, 10)])
    }

    #[test]
    fn decoupling_of_m2() {
        let model = m2_p();
        let d = decoupling_exists(&model);
        let expected = vec![q(12, 100), q(18, 100), q(28, 100), q(42, 100)];
        assert_eq!(d.q.as_ref().unwrap().weights(), expected.as_slice());
        let pstar = canonical_pstar(&model).unwrap();
        assert_eq!(pstar.weights(), expected.as_slice());
        // An already-independent measure is its own P*.
        let indep = model.with_measure(pstar.clone()).unwrap();
        assert_eq!(canonical_pstar(&indep).unwrap(), pstar);
    }

    #[test]
    fn diagonal_support_has_no_decoupling() {
        let model = m2([q(1, 2), q(0, 1), q(0, 1), q(1, 2)]);
        let d = decoupling_exists(&model);
        assert!(d.q.is_none());
        let c = d.certificate.unwrap();
        // {η = 1} against {τ = 2}.
        assert_eq!((c.f_cell_atoms, c.h_cell_atoms), (vec![0, 1], vec![1, 3]));
        assert!(matches!(canonical_pstar(&model), Err(Error::Assumption { .. })));
    }

    #[test]
    fn pstar_does_not_depend_on_the_product_q() {
        let model = m2_p();
        // Another decoupling measure: product of different marginals.
        let (a, b) = (q(1, 2), q(1, 5));
        let other = MeasureVector::new(vec![
            a.clone() * b.clone(),
            a.clone() * (q(1, 1) - b.clone()),
            (q(1, 1) - a.clone()) * b.clone(),
            (q(1, 1) - a) * (q(1, 1) - b),
        ])
        .unwrap();
        let pstar = martingale_preserving_measure(&model, &other).unwrap();
        assert_eq!(pstar, canonical_pstar(&model).unwrap());
        assert!(martingale_preserving_measure(&model, model.p()).is_err());
    }

    #[test]
    fn g_compensator_of_m2() {
        let model = m2_p();
        let gc = g_compensator_of_tau(&model, model.p()).unwrap();
        assert_eq!(gc.direct.increment(1), vec![q(2, 5); 4]);
        assert_eq!(gc.direct.increment(2), vec![q(0, 1), q(1, 1), q(0, 1), q(1, 1)]);
        assert_eq!(gc.fallbacks.iter().map(|f| f.time).collect::<Vec<_>>(), vec![1]);
        let hp = compensated_occurrence_g(&model, model.p()).unwrap();
        assert_eq!(hp.h_prime.at(1), &[q(3, 5), q(-2, 5), q(3, 5), q(-2, 5)]);
    }

    #[test]
    fn deterministic_tau_has_null_h_prime() {
        let model = JointModel::from_occurrences(
            vec![0.0, 1.0, 2.0],
            vec![Some(1), Some(2)],
            vec![Some(2), Some(2)],
            vec![q(1, 2), q(1, 2)],
        )
        .unwrap();
        let hp = compensated_occurrence_g(&model, model.p()).unwrap();
        assert!(hp.h_prime.vanishes_as(model.p()));
        // Independent τ: G-compensator equals the H-compensator.
        assert_eq!(hp.a_g.values(), hp.a_h.values());
    }

    #[test]
    fn immersion_and_mmm_in_m2() {
        let model = m2_p();
        let pstar = canonical_pstar(&model).unwrap();
        assert!(immersion_check(&model, &pstar).holds);
        let v = is_minimal_martingale_measure(&model, model.p(), &pstar).unwrap();
        assert!(!v.is_mmm);
        assert!(v.bracket_route.witness.unwrap().starts_with("[M,H]"));
        let same = is_minimal_martingale_measure(&model, &pstar, &pstar).unwrap();
        assert!(same.is_mmm);
    }

    #[test]
    fn density_of_m2() {
        let model = m2_p();
        let pstar = canonical_pstar(&model).unwrap();
        let h = model.h_martingale(&pstar).unwrap();
        let d = density_process(model.p(), &pstar, model.g(), &h).unwrap();
        assert_eq!(d.l.at(0), vec![q(1, 1); 4].as_slice());
        assert_eq!(d.l.at(1), &[q(10, 12), q(20, 18), q(30, 28), q(40, 42)]);
        // P is not the m.m.m., so L is not driven by H alone.
        assert!(!d.representable());
        let d = density_process(&pstar, &pstar, model.g(), &h).unwrap();
        assert!(d.is_constant(&pstar) && d.representable());
    }
}
