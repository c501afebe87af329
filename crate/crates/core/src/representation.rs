//! Stochastic integrals on trees, predictable representation certificates,
//! multiplicity with an explicit orthogonal basis, the multiplicity
//! classifier, the `(M, H', [M,H])` triplet, uniqueness of equivalent
//! martingale measures and exact hedging.

use serde::Serialize;

use crate::enlargement::{
    canonical_pstar, compensated_occurrence_g, density_process, immersion_check,
    is_minimal_martingale_measure, ImmersionVerdict, JointModel, MmmVerdict,
};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::finite_space::{
    cond_exp_as, Filtration, MeasureVector, Node, ProcessKind, ProcessTable, RandomTime,
};
use crate::linalg::{gram_schmidt, rank, solve_min_norm, transpose, weighted_dot};
use crate::martingale_calculus::{
    covariation, martingale_failure, mutually_singular, sharp_bracket, BracketMeasure,
    SingularityVerdict,
};
use crate::scalar::Scalar;

/// Initial value plus one predictable integrand per basis martingale.
#[derive(Clone, Debug)]
pub struct IntegrandVector<S> {
    pub initial: S,
    pub components: Vec<ProcessTable<S>>,
}

impl<S: Scalar> IntegrandVector<S> {
    /// `v_0 + (ξ·X)`.
    pub fn value_process(&self, basis: &[ProcessTable<S>], filtration: &Filtration) -> Result<ProcessTable<S>> {
        let integral = stochastic_integral(self, basis, filtration)?;
        let n = integral.n_atoms();
        let shift = ProcessTable::deterministic(&vec![self.initial.clone(); integral.n_times()], n);
        integral.plus(&shift)
    }
}

/// `(ξ·X)_t = Σ_{k ≤ t} Σ_i ξ_i(t_k) ΔX^i(t_k)`; componentwise sums, which
/// on a finite tree coincide with the vector integral.
pub fn stochastic_integral<S: Scalar>(
    xi: &IntegrandVector<S>,
    basis: &[ProcessTable<S>],
    filtration: &Filtration,
) -> Result<ProcessTable<S>> {
    if xi.components.len() != basis.len() {
        return Err(Error::Structural(format!(
            "{} integrands for {} martingales",
            xi.components.len(),
            basis.len()
        )));
    }
    let n_times = filtration.n_times();
    let n = filtration.n_atoms();
    for (i, (c, x)) in xi.components.iter().zip(basis).enumerate() {
        c.same_shape(x)?;
        if c.n_times() != n_times || c.n_atoms() != n {
            return Err(Error::Structural(format!("integrand {i} has the wrong shape")));
        }
        if !c.is_predictable(filtration) {
            return Err(Error::Contract(format!("integrand {i} is not predictable")));
        }
    }
    let mut rows = vec![vec![S::zero(); n]];
    for k in 1..n_times {
        let mut next = rows[k - 1].clone();
        for (c, x) in xi.components.iter().zip(basis) {
            for (a, dx) in x.increment(k).into_iter().enumerate() {
                next[a] = next[a].clone() + c.value(k, a).clone() * dx;
            }
        }
        rows.push(next);
    }
    Ok(ProcessTable::raw(rows))
}

/// Local rank evidence at one node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeCertificate {
    pub time: usize,
    pub cell: usize,
    pub children: usize,
    pub child_probabilities: Vec<f64>,
    /// One row per candidate: its increment on each child.
    pub increments: Vec<Vec<f64>>,
    pub rank: usize,
    pub required: usize,
}

impl NodeCertificate {
    pub fn spans(&self) -> bool {
        self.rank == self.required
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrpVerdict {
    pub holds: bool,
    pub certificates: Vec<NodeCertificate>,
    /// Index of the first certificate with a rank deficit.
    pub deficient: Option<usize>,
}

impl PrpVerdict {
    pub fn deficient_node(&self) -> Option<&NodeCertificate> {
        self.deficient.map(|i| &self.certificates[i])
    }
}

/// Increments of `xs` on the children of `node`, one row per process.
fn node_increments<S: Scalar>(node: &Node, filtration: &Filtration, xs: &[&ProcessTable<S>]) -> Vec<Vec<S>> {
    let k = node.time + 1;
    let child = filtration.at(k);
    xs.iter()
        .map(|x| {
            node.children
                .iter()
                .map(|&c| {
                    let a = child.cell(c)[0];
                    x.value(k, a).clone() - x.value(k - 1, a).clone()
                })
                .collect()
        })
        .collect()
}

fn child_masses<S: Scalar>(node: &Node, filtration: &Filtration, measure: &MeasureVector<S>) -> Vec<S> {
    let child = filtration.at(node.time + 1);
    node.children.iter().map(|&c| measure.mass_of(child.cell(c))).collect()
}

fn certificate<S: Scalar>(
    node: &Node,
    filtration: &Filtration,
    measure: &MeasureVector<S>,
    xs: &[&ProcessTable<S>],
) -> NodeCertificate {
    let masses = child_masses(node, filtration, measure);
    let total = S::sum_of(&masses);
    let inc = node_increments(node, filtration, xs);
    NodeCertificate {
        time: node.time,
        cell: node.cell,
        children: node.children.len(),
        child_probabilities: masses.iter().map(|m| (m.clone() / total.clone()).to_f64_lossy()).collect(),
        increments: inc.iter().map(|r| r.iter().map(S::to_f64_lossy).collect()).collect(),
        rank: rank(&inc),
        required: node.children.len() - 1,
    }
}

/// Predictable representation: at every positive node the increments of
/// the candidates span the mean-zero functions of the children.
pub fn prp_check<S: Scalar>(
    candidates: &[ProcessTable<S>],
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<PrpVerdict> {
    for (i, x) in candidates.iter().enumerate() {
        if let Some(failure) = martingale_failure(x, filtration, measure) {
            return Err(Error::Contract(format!("candidate {i} is not a martingale: {failure}")));
        }
    }
    let refs: Vec<&ProcessTable<S>> = candidates.iter().collect();
    let nodes = filtration.nodes(measure);
    let certificates = ExecPolicy::default().map_slice(&nodes, |node| certificate(node, filtration, measure, &refs));
    let deficient = certificates.iter().position(|c| !c.spans());
    Ok(PrpVerdict {
        holds: deficient.is_none(),
        certificates,
        deficient,
    })
}

#[derive(Clone, Debug)]
pub struct MultiplicityReport<S> {
    pub multiplicity: usize,
    pub extremal_node: Option<Node>,
    /// Pairwise strongly orthogonal martingales with the representation
    /// property; orthogonal, not normalised, so exact over rationals.
    pub basis: Vec<ProcessTable<S>>,
    pub certificates: Vec<NodeCertificate>,
}

/// Multiplicity `max (children - 1)` over positive nodes, with a basis
/// built node by node from weighted Gram-Schmidt on mean-zero child
/// vectors.
pub fn multiplicity<S: Scalar>(filtration: &Filtration, measure: &MeasureVector<S>) -> Result<MultiplicityReport<S>> {
    let nodes = filtration.nodes(measure);
    let (extremal_node, multiplicity) = nodes
        .iter()
        .map(|n| (Some(n.clone()), n.children.len() - 1))
        .fold((None, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let n = filtration.n_atoms();
    let n_times = filtration.n_times();
    let mut increments = vec![vec![vec![S::zero(); n]; n_times]; multiplicity];
    let vectors = ExecPolicy::default().map_slice(&nodes, |node| {
        let w = child_masses(node, filtration, measure);
        let total = S::sum_of(&w);
        let k = node.children.len();
        let raw: Vec<Vec<S>> = (0..k.saturating_sub(1))
            .map(|j| {
                (0..k)
                    .map(|i| {
                        let ind = if i == j { S::one() } else { S::zero() };
                        ind - w[j].clone() / total.clone()
                    })
                    .collect()
            })
            .collect();
        gram_schmidt(&w, &raw)
    });
    for (node, vs) in nodes.iter().zip(&vectors) {
        let child = filtration.at(node.time + 1);
        for (slot, v) in vs.iter().enumerate() {
            for (&c, x) in node.children.iter().zip(v) {
                for &a in child.cell(c) {
                    increments[slot][node.time + 1][a] = x.clone();
                }
            }
        }
    }
    let basis: Vec<ProcessTable<S>> = increments
        .into_iter()
        .map(|inc| {
            let mut rows = vec![vec![S::zero(); n]];
            for k in 1..n_times {
                let next = rows[k - 1].iter().zip(&inc[k]).map(|(a, b)| a.clone() + b.clone()).collect();
                rows.push(next);
            }
            ProcessTable::raw(rows)
        })
        .collect();
    let prp = prp_check(&basis, filtration, measure)?;
    if !prp.holds {
        return Err(Error::InternalConsistency(format!(
            "constructed basis fails the representation check at {:?}",
            prp.deficient_node()
        )));
    }
    for i in 0..basis.len() {
        for j in i + 1..basis.len() {
            if !sharp_bracket(&basis[i], &basis[j], filtration, measure)?.vanishes_as(measure) {
                return Err(Error::InternalConsistency(format!(
                    "basis elements {i} and {j} are not strongly orthogonal"
                )));
            }
        }
    }
    Ok(MultiplicityReport {
        multiplicity,
        extremal_node,
        basis,
        certificates: prp.certificates,
    })
}

/// Equivalent martingale measures for `martingales`: dimension of the
/// affine family, node by node `children - rank([1; ΔX])`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub unique: bool,
    pub dimension: usize,
    /// Free directions per node, only nodes with a positive count.
    pub free_nodes: Vec<(Node, usize)>,
    /// Agreement with the rank certificates of [`prp_check`].
    pub agrees_with_prp: bool,
}

pub fn uniqueness_check<S: Scalar>(
    martingales: &[ProcessTable<S>],
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<UniquenessReport> {
    let refs: Vec<&ProcessTable<S>> = martingales.iter().collect();
    let mut dimension = 0;
    let mut free_nodes = Vec::new();
    for node in filtration.nodes(measure) {
        let mut rows = vec![vec![S::one(); node.children.len()]];
        rows.extend(node_increments(&node, filtration, &refs));
        let free = node.children.len() - rank(&rows);
        if free > 0 {
            dimension += free;
            free_nodes.push((node, free));
        }
    }
    let unique = dimension == 0;
    let prp = prp_check(martingales, filtration, measure)?;
    if prp.holds != unique {
        return Err(Error::InternalConsistency(
            "uniqueness of the martingale measure disagrees with the rank certificates".into(),
        ));
    }
    Ok(UniquenessReport {
        unique,
        dimension,
        free_nodes,
        agrees_with_prp: true,
    })
}

/// Law of the `H_T` cells recovered from an `H`-compensator of `τ`:
/// `P(τ = t_k) = ΔA_k Π_{j<k} (1 - ΔA_j)` along the survival path.
/// Returns, per atom, the probability of the atom's value of `τ`.
pub fn occurrence_law_from_compensator<S: Scalar>(tau: &RandomTime, a: &ProcessTable<S>) -> Vec<S> {
    let n_times = a.n_times();
    // The compensator on the survival path is read off any atom that has
    // not yet seen τ; on the natural filtration those atoms share a cell.
    let mut hazard = vec![S::zero(); n_times];
    for (k, h) in hazard.iter_mut().enumerate().skip(1) {
        if let Some(atom) = (0..tau.values().len()).find(|&i| tau.at(i).is_none_or(|v| v >= k)) {
            *h = a.value(k, atom).clone() - a.value(k - 1, atom).clone();
        }
    }
    let mut point = vec![S::zero(); n_times];
    let mut survive = S::one();
    for k in 1..n_times {
        point[k] = survive.clone() * hazard[k].clone();
        survive = survive.clone() * (S::one() - hazard[k].clone());
    }
    (0..tau.values().len())
        .map(|i| match tau.at(i) {
            Some(k) => point[k].clone(),
            None => survive.clone(),
        })
        .collect()
}

/// Classifier verdict with the clauses that fired.
#[derive(Clone, Debug)]
pub struct Classification<S> {
    /// 0 when both brackets vanish, otherwise 1, 2 or 3.
    pub verdict: usize,
    pub total: SingularityVerdict,
    pub accessible: SingularityVerdict,
    pub clause: String,
    pub pstar: MeasureVector<S>,
    pub multiplicity: MultiplicityReport<S>,
}

/// Multiplicity of `G` under `P*` from the brackets of `M` and `H`,
/// checked against [`multiplicity`].
pub fn classify_multiplicity<S: Scalar>(model: &JointModel<S>) -> Result<Classification<S>> {
    let pstar = canonical_pstar(model)?;
    let p = model.p();
    let m = model.m(p)?;
    let h = model.h_martingale(p)?;
    check_a1(model, &m, &h)?;
    let g = model.g();
    let bm = sharp_bracket(&m, &m, g, &pstar)?;
    let bn = sharp_bracket(&h, &h, g, &pstar)?;
    let own_m = sharp_bracket(&m, &m, model.f(), p)?;
    let own_n = sharp_bracket(&h, &h, model.h(), p)?;
    if !bm.approx_eq_as(&own_m, &pstar) || !bn.approx_eq_as(&own_n, &pstar) {
        return Err(Error::InternalConsistency(
            "brackets change between the own filtrations under P and G under P*".into(),
        ));
    }
    let dm = BracketMeasure::from_process(&bm)?;
    let dn = BracketMeasure::from_process(&bn)?;
    let total = mutually_singular(&dm, &dn, g, &pstar)?;
    // On a grid every martingale is purely accessible.
    let accessible = total.clone();
    let both_null = bm.vanishes_as(&pstar) && bn.vanishes_as(&pstar);
    let (verdict, clause) = if both_null {
        (0, "both brackets vanish".to_string())
    } else if total.singular {
        (1, "d<M> and d<N> are mutually singular".to_string())
    } else if accessible.singular {
        (2, "only the accessible brackets are singular".to_string())
    } else {
        let (atom, k) = accessible.witness.expect("witness when not singular");
        (3, format!("accessible brackets share mass at t_{k} on atom {atom}"))
    };
    let report = multiplicity(g, &pstar)?;
    if report.multiplicity != verdict {
        return Err(Error::InternalConsistency(format!(
            "classifier verdict {verdict} but direct multiplicity {}",
            report.multiplicity
        )));
    }
    Ok(Classification {
        verdict,
        total,
        accessible,
        clause,
        pstar,
        multiplicity: report,
    })
}

/// `M` represents every `F`-martingale and `H` every `H`-martingale.
fn check_a1<S: Scalar>(model: &JointModel<S>, m: &ProcessTable<S>, h: &ProcessTable<S>) -> Result<()> {
    let p = model.p();
    let um = uniqueness_check(std::slice::from_ref(m), model.f(), p)?;
    if !um.unique {
        let (node, free) = &um.free_nodes[0];
        return Err(Error::assumption(
            "A1",
            format!("M does not represent F: {free} free direction(s) at node {node}"),
        ));
    }
    let uh = uniqueness_check(std::slice::from_ref(h), model.h(), p)?;
    if !uh.unique {
        return Err(Error::InternalConsistency(
            "H fails to represent its own filtration".into(),
        ));
    }
    Ok(())
}

/// The triplet and the checks it must pass under `P`.
#[derive(Clone, Debug)]
pub struct Triplet<S> {
    pub m: ProcessTable<S>,
    pub h: ProcessTable<S>,
    pub h_prime: ProcessTable<S>,
    pub mh: ProcessTable<S>,
    pub pstar: MeasureVector<S>,
    pub mmm: MmmVerdict,
    pub immersion: ImmersionVerdict,
    pub prp: PrpVerdict,
    /// `⟨M, H'⟩^{P,G} ≡ 0`.
    pub m_h_prime_orthogonal: bool,
    /// `[M,H] ≡ 0`.
    pub mh_vanishes: bool,
    /// `dP/dP*` is constant.
    pub density_constant: bool,
    /// `⟨M, [M,H]⟩^{P,G} ≡ 0`.
    pub m_mh_orthogonal: bool,
}

impl<S: Scalar> Triplet<S> {
    pub fn basis(&self) -> [ProcessTable<S>; 3] {
        [self.m.clone(), self.h_prime.clone(), self.mh.clone()]
    }

    /// Non-orthogonality of `M` and `[M,H]` under `P` whenever `[M,H]` is
    /// nontrivial and `P ≠ P*`.
    pub fn remark_non_orthogonality_holds(&self) -> bool {
        self.mh_vanishes || self.density_constant || !self.m_mh_orthogonal
    }
}

/// Builds `(M, H', [M,H])` and verifies the representation theorem under
/// `P`. Refuses when a hypothesis fails.
pub fn kusuoka_triplet<S: Scalar>(model: &JointModel<S>) -> Result<Triplet<S>> {
    let p = model.p();
    let pstar = canonical_pstar(model)?;
    let m = model.m(p)?;
    let h = model.h_martingale(p)?;
    check_a1(model, &m, &h)?;
    let mmm = is_minimal_martingale_measure(model, p, &pstar)?;
    if !mmm.is_mmm {
        return Err(Error::assumption(
            "m.m.m.",
            format!(
                "P is not the minimal martingale measure: {}",
                mmm.bracket_route.witness.clone().unwrap_or_default()
            ),
        ));
    }
    let g = model.g();
    let hp = compensated_occurrence_g(model, p)?;
    let mh = covariation(&m, &h)?;
    for (name, x) in [("M", &m), ("[M,H]", &mh)] {
        if let Some(f) = martingale_failure(x, g, p) {
            return Err(Error::InternalConsistency(format!("{name} is not a (P,G)-martingale: {f}")));
        }
    }
    let immersion = immersion_check(model, p);
    if !immersion.holds {
        return Err(Error::InternalConsistency("immersion fails under the m.m.m.".into()));
    }
    let m_h_prime_orthogonal = sharp_bracket(&m, &hp.h_prime, g, p)?.vanishes_as(p);
    if !m_h_prime_orthogonal {
        return Err(Error::InternalConsistency("M and H' are not strongly orthogonal".into()));
    }
    let basis = [m.clone(), hp.h_prime.clone(), mh.clone()];
    let prp = prp_check(&basis, g, p)?;
    if !prp.holds {
        return Err(Error::InternalConsistency(format!(
            "triplet fails the representation check at {:?}",
            prp.deficient_node()
        )));
    }
    let density = density_process(p, &pstar, g, &model.h_martingale(&pstar)?)?;
    let mh_vanishes = mh.vanishes_as(p);
    let m_mh_orthogonal = sharp_bracket(&m, &mh, g, p)?.vanishes_as(p);
    Ok(Triplet {
        m,
        h,
        h_prime: hp.h_prime,
        mh,
        pstar: pstar.clone(),
        mmm,
        immersion,
        prp,
        m_h_prime_orthogonal,
        mh_vanishes,
        density_constant: density.is_constant(&pstar),
        m_mh_orthogonal,
    })
}

/// Per-node weighted least-squares replication.
#[derive(Clone, Debug)]
pub struct Hedge<S> {
    pub integrands: IntegrandVector<S>,
    pub value: ProcessTable<S>,
    /// Payoff minus replicated terminal value, per atom.
    pub residual: Vec<S>,
    /// `sqrt(E[residual^2])`.
    pub residual_norm: f64,
}

pub fn hedge<S: Scalar>(
    payoff: &[S],
    basis: &[ProcessTable<S>],
    filtration: &Filtration,
    measure: &MeasureVector<S>,
) -> Result<Hedge<S>> {
    let n = filtration.n_atoms();
    let n_times = filtration.n_times();
    if payoff.len() != n {
        return Err(Error::Structural("payoff over the wrong number of atoms".into()));
    }
    for (i, x) in basis.iter().enumerate() {
        if let Some(failure) = martingale_failure(x, filtration, measure) {
            return Err(Error::Contract(format!("basis element {i} is not a martingale: {failure}")));
        }
    }
    let v: Vec<Vec<S>> = (0..n_times)
        .map(|k| cond_exp_as(payoff, filtration.at(k), measure))
        .collect();
    let v_table = ProcessTable::raw(v);
    let initial = measure.expectation(payoff);
    let refs: Vec<&ProcessTable<S>> = basis.iter().collect();
    let nodes = filtration.nodes(measure);
    let solutions = ExecPolicy::default().map_slice(&nodes, |node| {
        let w = child_masses(node, filtration, measure);
        let a = transpose(&node_increments(node, filtration, &refs));
        let b = &node_increments(node, filtration, &[&v_table])[0];
        let at = transpose(&a);
        let normal: Vec<Vec<S>> = at
            .iter()
            .map(|ri| at.iter().map(|rj| weighted_dot(&w, ri, rj)).collect())
            .collect();
        let rhs: Vec<S> = at.iter().map(|ri| weighted_dot(&w, ri, b)).collect();
        if basis.is_empty() {
            Vec::new()
        } else {
            solve_min_norm(&normal, &rhs).expect("normal equations are consistent")
        }
    });
    let mut components = vec![vec![vec![S::zero(); n]; n_times]; basis.len()];
    for (node, xi) in nodes.iter().zip(&solutions) {
        for &a in filtration.at(node.time).cell(node.cell) {
            for (i, x) in xi.iter().enumerate() {
                components[i][node.time + 1][a] = x.clone();
            }
        }
    }
    let integrands = IntegrandVector {
        initial,
        components: components
            .into_iter()
            .map(|c| ProcessTable::raw(c).with_kind(ProcessKind::Predictable("hedge".into())))
            .collect(),
    };
    let value = integrands.value_process(basis, filtration)?;
    let residual: Vec<S> = payoff
        .iter()
        .zip(value.terminal())
        .map(|(x, y)| x.clone() - y.clone())
        .collect();
    let sq: Vec<S> = residual.iter().map(|r| r.clone() * r.clone()).collect();
    let residual_norm = measure.expectation(&sq).to_f64_lossy().max(0.0).sqrt();
    Ok(Hedge {
        integrands,
        value,
        residual,
        residual_norm,
    })
}

/// `X̃ = X - Σ (1/L_-) Δ⟨L, X⟩^{base}`: base-measure martingales turned
/// into martingales under the measure with density `l`.
pub fn girsanov<S: Scalar>(
    xs: &[ProcessTable<S>],
    l: &ProcessTable<S>,
    filtration: &Filtration,
    base: &MeasureVector<S>,
) -> Result<Vec<ProcessTable<S>>> {
    xs.iter()
        .map(|x| {
            let bracket = sharp_bracket(l, x, filtration, base)?;
            let n = x.n_atoms();
            let mut rows = vec![vec![S::zero(); n]];
            for k in 1..x.n_times() {
                let db = bracket.increment(k);
                let next = (0..n)
                    .map(|a| {
                        let lm = l.value(k - 1, a);
                        let drift = if lm.is_mass() { db[a].clone() / lm.clone() } else { S::zero() };
                        rows[k - 1][a].clone() + drift
                    })
                    .collect();
                rows.push(next);
            }
            x.minus(&ProcessTable::raw(rows))
        })
        .collect()
}
