//! Finite filtered probability spaces: atoms, refining partitions,
//! measures, adapted/predictable process tables, random times and
//! conditional expectation.
//!
//! A filtration is one partition of the atom set per grid time, each
//! refining the previous one. "Predictable at `t_k`" means measurable with
//! respect to the partition at `t_{k-1}`; at `t_0` it means deterministic.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Partition of `{0, .., n-1}` in canonical form: cells are numbered in
/// order of their smallest atom, so structural equality is partition
/// equality.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    cell_of: Vec<usize>,
    cells: Vec<Vec<usize>>,
}

impl Partition {
    /// Groups atoms with equal keys.
    pub fn from_keys<K: Ord + Clone>(keys: &[K]) -> Self {
        let mut ids: BTreeMap<K, usize> = BTreeMap::new();
        let mut raw = Vec::with_capacity(keys.len());
        for key in keys {
            let next = ids.len();
            raw.push(*ids.entry(key.clone()).or_insert(next));
        }
        Self::canonical(&raw)
    }

    /// Builds a partition from explicit cells; every atom must appear in
    /// exactly one cell.
    pub fn from_cells(n_atoms: usize, cells: &[Vec<usize>]) -> Result<Self> {
        let mut raw = vec![usize::MAX; n_atoms];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Structural(format!("cell {c} is empty")));
            }
            for &a in cell {
                if a >= n_atoms {
                    return Err(Error::Structural(format!("atom index {a} out of range")));
                }
                if raw[a] != usize::MAX {
                    return Err(Error::Structural(format!(
                        "atom {a} appears in cells {} and {c}",
                        raw[a]
                    )));
                }
                raw[a] = c;
            }
        }
        if let Some(a) = raw.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Structural(format!("atom {a} belongs to no cell")));
        }
        Ok(Self::canonical(&raw))
    }

    fn canonical(raw: &[usize]) -> Self {
        let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
        let mut cell_of = Vec::with_capacity(raw.len());
        let mut cells: Vec<Vec<usize>> = Vec::new();
        for (atom, r) in raw.iter().enumerate() {
            let id = *relabel.entry(*r).or_insert_with(|| {
                cells.push(Vec::new());
                cells.len() - 1
            });
            cells[id].push(atom);
            cell_of.push(id);
        }
        Partition { cell_of, cells }
    }

    pub fn trivial(n_atoms: usize) -> Self {
        Self::canonical(&vec![0; n_atoms])
    }

    pub fn discrete(n_atoms: usize) -> Self {
        Self::canonical(&(0..n_atoms).collect::<Vec<_>>())
    }

    pub fn n_atoms(&self) -> usize {
        self.cell_of.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &[usize] {
        &self.cells[id]
    }

    pub fn cell_of(&self, atom: usize) -> usize {
        self.cell_of[atom]
    }

    /// Every cell of `self` lies inside one cell of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.cells.iter().all(|cell| {
            let c = coarser.cell_of[cell[0]];
            cell.iter().all(|&a| coarser.cell_of[a] == c)
        })
    }

    /// Common refinement (cell-wise intersection).
    pub fn meet(&self, other: &Partition) -> Partition {
        let keys: Vec<(usize, usize)> = (0..self.n_atoms())
            .map(|a| (self.cell_of[a], other.cell_of[a]))
            .collect();
        Self::from_keys(&keys)
    }

    /// Values constant on every cell (within tolerance).
    pub fn measurable<S: Scalar>(&self, values: &[S]) -> bool {
        self.cells.iter().all(|cell| {
            let first = &values[cell[0]];
            cell.iter().all(|&a| values[a].approx_eq(first))
        })
    }
}

/// One partition per grid time, each refining its predecessor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Filtration {
    partitions: Vec<Partition>,
}

impl Filtration {
    pub fn new(partitions: Vec<Partition>) -> Result<Self> {
        let Some(first) = partitions.first() else {
            return Err(Error::Structural("filtration needs at least one partition".into()));
        };
        let n = first.n_atoms();
        for (k, p) in partitions.iter().enumerate() {
            if p.n_atoms() != n {
                return Err(Error::Structural(format!(
                    "partition at t_{k} covers {} atoms, expected {n}",
                    p.n_atoms()
                )));
            }
            if k > 0 && !p.refines(&partitions[k - 1]) {
                return Err(Error::Structural(format!(
                    "partition at t_{k} does not refine the partition at t_{}",
                    k - 1
                )));
            }
        }
        Ok(Filtration { partitions })
    }

    pub fn trivial(n_atoms: usize, n_times: usize) -> Self {
        Filtration {
            partitions: vec![Partition::trivial(n_atoms); n_times],
        }
    }

    pub fn at(&self, k: usize) -> &Partition {
        &self.partitions[k]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn n_times(&self) -> usize {
        self.partitions.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.partitions[0].n_atoms()
    }

    pub fn terminal(&self) -> &Partition {
        self.partitions.last().expect("non-empty")
    }

    pub fn starts_trivial(&self) -> bool {
        self.partitions[0].n_cells() == 1
    }

    /// Partition with respect to which values at `t_k` must be measurable
    /// to count as predictable.
    pub fn predictable_partition(&self, k: usize) -> Partition {
        if k == 0 {
            Partition::trivial(self.n_atoms())
        } else {
            self.partitions[k - 1].clone()
        }
    }

    /// `F ∨ H`: the common refinement at each time.
    pub fn join(&self, other: &Filtration) -> Result<Filtration> {
        if self.n_times() != other.n_times() || self.n_atoms() != other.n_atoms() {
            return Err(Error::Structural(format!(
                "cannot join filtrations on grids of {} and {} times",
                self.n_times(),
                other.n_times()
            )));
        }
        Filtration::new(
            self.partitions
                .iter()
                .zip(&other.partitions)
                .map(|(a, b)| a.meet(b))
                .collect(),
        )
    }

    /// Natural filtration of the occurrence process `1_{time <= t}`: at
    /// `t_k` it separates `{time = t_j}` for `j <= k` and `{time > t_k}`.
    pub fn natural_of_occurrence(time: &RandomTime, n_times: usize) -> Filtration {
        let partitions = (0..n_times)
            .map(|k| {
                let keys: Vec<Option<usize>> = time
                    .values()
                    .iter()
                    .map(|v| v.filter(|&j| j <= k))
                    .collect();
                Partition::from_keys(&keys)
            })
            .collect();
        Filtration { partitions }
    }

    /// Positive-measure nodes `(k-1, cell)` and their positive-measure
    /// children at `t_k`, ordered by time then cell id.
    pub fn nodes<S: Scalar>(&self, measure: &MeasureVector<S>) -> Vec<Node> {
        let mut out = Vec::new();
        for k in 1..self.n_times() {
            let parent = &self.partitions[k - 1];
            let child = &self.partitions[k];
            for (cell_id, cell) in parent.cells().iter().enumerate() {
                if !measure.mass_of(cell).is_mass() {
                    continue;
                }
                let mut children: Vec<usize> = Vec::new();
                for &a in cell {
                    let c = child.cell_of(a);
                    if !children.contains(&c) && measure.mass_of(child.cell(c)).is_mass() {
                        children.push(c);
                    }
                }
                children.sort_unstable();
                out.push(Node {
                    time: k - 1,
                    cell: cell_id,
                    children,
                });
            }
        }
        out
    }
}

/// A cell of the partition at `time` together with its positive-measure
/// children in the partition at `time + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub time: usize,
    pub cell: usize,
    pub children: Vec<usize>,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t_{}, cell {})", self.time, self.cell)
    }
}

/// Atoms, time grid and named filtrations.
#[derive(Clone, Debug, Serialize)]
pub struct FiniteFilteredSpace {
    atoms: Vec<String>,
    grid: Vec<f64>,
    filtrations: BTreeMap<String, Filtration>,
}

impl FiniteFilteredSpace {
    pub fn new(atoms: Vec<String>, grid: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Structural("space needs at least one atom".into()));
        }
        if grid.is_empty() {
            return Err(Error::Structural("grid is empty".into()));
        }
        if grid[0] != 0.0 {
            return Err(Error::Structural("grid must start at 0".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Structural("grid must be strictly increasing".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &atoms {
            if !seen.insert(a) {
                return Err(Error::Structural(format!("duplicate atom id {a:?}")));
            }
        }
        Ok(FiniteFilteredSpace {
            atoms,
            grid,
            filtrations: BTreeMap::new(),
        })
    }

    /// Integer grid `0, 1, .., horizon`.
    pub fn with_unit_grid(atoms: Vec<String>, horizon: usize) -> Result<Self> {
        Self::new(atoms, (0..=horizon).map(|t| t as f64).collect())
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    pub fn atom_index(&self, id: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a == id)
    }

    pub fn grid_index(&self, t: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - t).abs() <= 1e-9)
    }

    pub fn insert_filtration(&mut self, label: &str, filtration: Filtration) -> Result<()> {
        if filtration.n_atoms() != self.n_atoms() || filtration.n_times() != self.n_times() {
            return Err(Error::Structural(format!(
                "filtration {label:?} has shape {}x{}, space is {}x{}",
                filtration.n_times(),
                filtration.n_atoms(),
                self.n_times(),
                self.n_atoms()
            )));
        }
        self.filtrations.insert(label.to_string(), filtration);
        Ok(())
    }

    pub fn filtration(&self, label: &str) -> Result<&Filtration> {
        self.filtrations
            .get(label)
            .ok_or_else(|| Error::Structural(format!("unknown filtration {label:?}")))
    }

    pub fn filtration_labels(&self) -> impl Iterator<Item = &str> {
        self.filtrations.keys().map(String::as_str)
    }

    /// Registers `F ∨ H` under `joined` and returns it.
    pub fn join_filtrations(&mut self, f: &str, h: &str, joined: &str) -> Result<&Filtration> {
        let g = self.filtration(f)?.join(self.filtration(h)?)?;
        self.filtrations.insert(joined.to_string(), g);
        self.filtration(joined)
    }

    /// Registers the natural filtration of `1_{time <= .}` under `label`.
    pub fn natural_filtration_of_occurrence(
        &mut self,
        time: &RandomTime,
        label: &str,
    ) -> Result<&Filtration> {
        if time.values().len() != self.n_atoms() {
            return Err(Error::Structural("random time does not cover all atoms".into()));
        }
        let f = Filtration::natural_of_occurrence(time, self.n_times());
        self.filtrations.insert(label.to_string(), f);
        self.filtration(label)
    }
}

/// A probability weight per atom.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct MeasureVector<S> {
    #[serde(serialize_with = "serialize_scalars")]
    weights: Vec<S>,
}

pub(crate) fn serialize_scalars<S: Scalar, Ser: serde::Serializer>(
    values: &[S],
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(values.len()))?;
    for v in values {
        seq.serialize_element(&v.to_f64_lossy())?;
    }
    seq.end()
}

impl<S: Scalar> MeasureVector<S> {
    /// Nonnegative weights summing to one (exactly, or within 1e-12).
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Structural("measure has no atoms".into()));
        }
        if let Some(a) = weights.iter().position(|w| w.is_negative() && !w.negligible()) {
            return Err(Error::Structural(format!("negative weight on atom {a}")));
        }
        let total = S::sum_of(&weights);
        if !total.approx_eq(&S::one()) {
            return Err(Error::Structural(format!("weights sum to {total}, not 1")));
        }
        Ok(MeasureVector { weights })
    }

    /// Normalises nonnegative masses.
    pub fn normalized(masses: Vec<S>) -> Result<Self> {
        let total = S::sum_of(&masses);
        if !total.is_mass() {
            return Err(Error::Structural("cannot normalise a zero measure".into()));
        }
        Self::new(masses.into_iter().map(|m| m / total.clone()).collect())
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weight(&self, atom: usize) -> &S {
        &self.weights[atom]
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn mass_of(&self, atoms: &[usize]) -> S {
        atoms
            .iter()
            .fold(S::zero(), |acc, &a| acc + self.weights[a].clone())
    }

    pub fn is_null(&self, atom: usize) -> bool {
        !self.weights[atom].is_mass()
    }

    /// Atoms of positive measure.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&a| !self.is_null(a)).collect()
    }

    /// Same null sets.
    pub fn equivalent(&self, other: &MeasureVector<S>) -> bool {
        self.weights.len() == other.weights.len()
            && (0..self.weights.len()).all(|a| self.is_null(a) == other.is_null(a))
    }

    pub fn expectation(&self, rv: &[S]) -> S {
        crate::linalg::dot(&self.weights, rv)
    }

    pub fn approx_eq(&self, other: &MeasureVector<S>) -> bool {
        self.weights
            .iter()
            .zip(&other.weights)
            .all(|(a, b)| a.approx_eq(b))
    }

    pub fn to_f64(&self) -> MeasureVector<f64> {
        MeasureVector {
            weights: self.weights.iter().map(Scalar::to_f64_lossy).collect(),
        }
    }
}

/// Declared measurability of a [`ProcessTable`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ProcessKind {
    Raw,
    Adapted(String),
    Predictable(String),
}

/// A real value per (grid time, atom); stored time-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Scalar"))]
pub struct ProcessTable<S> {
    #[serde(serialize_with = "serialize_table")]
    values: Vec<Vec<S>>,
    kind: ProcessKind,
}

fn serialize_table<S: Scalar, Ser: serde::Serializer>(
    values: &[Vec<S>],
    ser: Ser,
) -> std::result::Result<Ser::Ok, Ser::Error> {
    let rows: Vec<Vec<f64>> = values
        .iter()
        .map(|r| r.iter().map(Scalar::to_f64_lossy).collect())
        .collect();
    serde::Serialize::serialize(&rows, ser)
}

impl<S: Scalar> ProcessTable<S> {
    pub fn new(values: Vec<Vec<S>>, kind: ProcessKind) -> Result<Self> {
        let n = values.first().map_or(0, Vec::len);
        if values.is_empty() || n == 0 || values.iter().any(|r| r.len() != n) {
            return Err(Error::Structural("process table must be a non-empty rectangle".into()));
        }
        Ok(ProcessTable { values, kind })
    }

    pub fn raw(values: Vec<Vec<S>>) -> Self {
        Self::new(values, ProcessKind::Raw).expect("rectangular table")
    }

    pub fn zeros(n_times: usize, n_atoms: usize) -> Self {
        Self::raw(vec![vec![S::zero(); n_atoms]; n_times])
    }

    /// Same path on every atom.
    pub fn deterministic(path: &[S], n_atoms: usize) -> Self {
        Self::raw(path.iter().map(|v| vec![v.clone(); n_atoms]).collect())
    }

    /// `X_t = value` for `t >= t_k`, built from a terminal random variable
    /// revealed at once.
    pub fn from_fn(n_times: usize, n_atoms: usize, f: impl Fn(usize, usize) -> S) -> Self {
        Self::raw(
            (0..n_times)
                .map(|k| (0..n_atoms).map(|a| f(k, a)).collect())
                .collect(),
        )
    }

    pub fn with_kind(mut self, kind: ProcessKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn kind(&self) -> &ProcessKind {
        &self.kind
    }

    pub fn n_times(&self) -> usize {
        self.values.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.values
    }

    pub fn at(&self, k: usize) -> &[S] {
        &self.values[k]
    }

    pub fn value(&self, k: usize, atom: usize) -> &S {
        &self.values[k][atom]
    }

    pub fn terminal(&self) -> &[S] {
        self.values.last().expect("non-empty")
    }

    /// `X_{t_k} - X_{t_{k-1}}` per atom, `k >= 1`.
    pub fn increment(&self, k: usize) -> Vec<S> {
        self.values[k]
            .iter()
            .zip(&self.values[k - 1])
            .map(|(a, b)| a.clone() - b.clone())
            .collect()
    }

    /// `X - X_0`.
    pub fn started_at_zero(&self) -> Self {
        let x0 = self.values[0].clone();
        Self::raw(
            self.values
                .iter()
                .map(|row| row.iter().zip(&x0).map(|(a, b)| a.clone() - b.clone()).collect())
                .collect(),
        )
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(&S, &S) -> S) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self::raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(x, y)).collect())
                .collect(),
        ))
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a.clone() + b.clone())
    }

    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a.clone() - b.clone())
    }

    pub fn scaled(&self, c: &S) -> Self {
        Self::raw(
            self.values
                .iter()
                .map(|r| r.iter().map(|x| x.clone() * c.clone()).collect())
                .collect(),
        )
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n_times() != other.n_times() || self.n_atoms() != other.n_atoms() {
            return Err(Error::Structural(format!(
                "process shapes differ: {}x{} vs {}x{}",
                self.n_times(),
                self.n_atoms(),
                other.n_times(),
                other.n_atoms()
            )));
        }
        Ok(())
    }

    /// Constant on the cells of the partition at the same time.
    pub fn is_adapted(&self, filtration: &Filtration) -> bool {
        self.shape_matches(filtration)
            && (0..self.n_times()).all(|k| filtration.at(k).measurable(&self.values[k]))
    }

    /// Constant on the cells of the partition at the previous time;
    /// deterministic at `t_0`.
    pub fn is_predictable(&self, filtration: &Filtration) -> bool {
        self.shape_matches(filtration)
            && (0..self.n_times())
                .all(|k| filtration.predictable_partition(k).measurable(&self.values[k]))
    }

    /// Checks the declared kind against `filtration`.
    pub fn check_kind(&self, filtration: &Filtration) -> bool {
        match self.kind {
            ProcessKind::Raw => true,
            ProcessKind::Adapted(_) => self.is_adapted(filtration),
            ProcessKind::Predictable(_) => self.is_predictable(filtration),
        }
    }

    fn shape_matches(&self, filtration: &Filtration) -> bool {
        self.n_times() == filtration.n_times() && self.n_atoms() == filtration.n_atoms()
    }

    /// Identical on every positive-measure atom.
    pub fn approx_eq_as(&self, other: &Self, measure: &MeasureVector<S>) -> bool {
        self.n_times() == other.n_times()
            && (0..self.n_times()).all(|k| {
                measure
                    .support()
                    .into_iter()
                    .all(|a| self.values[k][a].approx_eq(&other.values[k][a]))
            })
    }

    /// Zero on every positive-measure atom at every time.
    pub fn vanishes_as(&self, measure: &MeasureVector<S>) -> bool {
        let support = measure.support();
        self.values
            .iter()
            .all(|row| support.iter().all(|&a| row[a].negligible()))
    }

    pub fn to_f64(&self) -> ProcessTable<f64> {
        ProcessTable {
            values: self
                .values
                .iter()
                .map(|r| r.iter().map(Scalar::to_f64_lossy).collect())
                .collect(),
            kind: self.kind.clone(),
        }
    }
}

/// Value of a random time per atom: a grid index, or `None` for +∞
/// ("after T").
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RandomTime {
    values: Vec<Option<usize>>,
}

impl RandomTime {
    pub fn new(values: Vec<Option<usize>>) -> Self {
        RandomTime { values }
    }

    pub fn values(&self) -> &[Option<usize>] {
        &self.values
    }

    pub fn at(&self, atom: usize) -> Option<usize> {
        self.values[atom]
    }

    /// Constant time `k` on every atom.
    pub fn constant(k: usize, n_atoms: usize) -> Self {
        RandomTime {
            values: vec![Some(k); n_atoms],
        }
    }

    pub fn never(n_atoms: usize) -> Self {
        RandomTime {
            values: vec![None; n_atoms],
        }
    }

    /// `{time <= t_k}` is a union of cells at every `t_k`.
    pub fn is_stopping_time(&self, filtration: &Filtration) -> bool {
        (0..filtration.n_times()).all(|k| {
            let occurred: Vec<u8> = self
                .values
                .iter()
                .map(|v| u8::from(v.is_some_and(|j| j <= k)))
                .collect();
            filtration.at(k).cells().iter().all(|cell| {
                cell.iter().all(|&a| occurred[a] == occurred[cell[0]])
            })
        })
    }

    pub fn validate_stopping_time(&self, filtration: &Filtration, name: &str) -> Result<()> {
        if self.values.len() != filtration.n_atoms() {
            return Err(Error::Structural(format!(
                "random time {name:?} does not cover every atom"
            )));
        }
        if self.values.iter().flatten().any(|&k| k >= filtration.n_times()) {
            return Err(Error::Structural(format!(
                "random time {name:?} takes a value outside the grid"
            )));
        }
        if !self.is_stopping_time(filtration) {
            return Err(Error::Contract(format!(
                "{name:?} is not a stopping time: a level set splits a partition cell"
            )));
        }
        Ok(())
    }

    /// The occurrence process `1_{time <= t_k}`.
    pub fn occurrence<S: Scalar>(&self, n_times: usize) -> ProcessTable<S> {
        ProcessTable::from_fn(n_times, self.values.len(), |k, a| {
            if self.values[a].is_some_and(|j| j <= k) {
                S::one()
            } else {
                S::zero()
            }
        })
    }

    /// Partition by value (the sigma-field generated by the time).
    pub fn level_partition(&self) -> Partition {
        Partition::from_keys(&self.values)
    }
}

/// Measure-weighted cell averages; fails on a zero-measure cell.
pub fn cond_exp<S: Scalar>(
    rv: &[S],
    partition: &Partition,
    measure: &MeasureVector<S>,
) -> Result<Vec<S>> {
    cond_exp_at(rv, partition, measure, 0)
}

/// As [`cond_exp`], reporting `time` in the degenerate-cell error.
pub fn cond_exp_at<S: Scalar>(
    rv: &[S],
    partition: &Partition,
    measure: &MeasureVector<S>,
    time: usize,
) -> Result<Vec<S>> {
    check_len(rv, partition, measure)?;
    let mut out = vec![S::zero(); rv.len()];
    for (id, cell) in partition.cells().iter().enumerate() {
        let mass = measure.mass_of(cell);
        if !mass.is_mass() {
            return Err(Error::DegenerateCell {
                time,
                cell: id,
                atoms: cell.clone(),
            });
        }
        let avg = cell_average(rv, cell, measure, &mass);
        for &a in cell {
            out[a] = avg.clone();
        }
    }
    Ok(out)
}

/// Conditional expectation up to null sets: zero-measure cells get 0.
pub fn cond_exp_as<S: Scalar>(
    rv: &[S],
    partition: &Partition,
    measure: &MeasureVector<S>,
) -> Vec<S> {
    let mut out = vec![S::zero(); rv.len()];
    for cell in partition.cells() {
        let mass = measure.mass_of(cell);
        if !mass.is_mass() {
            continue;
        }
        let avg = cell_average(rv, cell, measure, &mass);
        for &a in cell {
            out[a] = avg.clone();
        }
    }
    out
}

fn cell_average<S: Scalar>(rv: &[S], cell: &[usize], measure: &MeasureVector<S>, mass: &S) -> S {
    let total = cell.iter().fold(S::zero(), |acc, &a| {
        acc + measure.weight(a).clone() * rv[a].clone()
    });
    total / mass.clone()
}

fn check_len<S: Scalar>(rv: &[S], partition: &Partition, measure: &MeasureVector<S>) -> Result<()> {
    if rv.len() != partition.n_atoms() || measure.n_atoms() != partition.n_atoms() {
        return Err(Error::Structural(format!(
            "random variable over {} atoms, partition over {}, measure over {}",
            rv.len(),
            partition.n_atoms(),
            measure.n_atoms()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    /// Atoms (η, τ) = (1,1), (1,2), (2,1), (2,2).
    fn m2() -> (RandomTime, RandomTime, MeasureVector<Rational>) {
        let eta = RandomTime::new(vec![Some(1), Some(1), Some(2), Some(2)]);
        let tau = RandomTime::new(vec![Some(1), Some(2), Some(1), Some(2)]);
        let p = MeasureVector::new(vec![ratio(1, 10), ratio(2, 10), ratio(3, 10), ratio(4, 10)])
            .unwrap();
        (eta, tau, p)
    }

    #[test]
    fn constant_rv_is_fixed_by_cond_exp() {
        let (_, _, p) = m2();
        let c = vec![ratio(7, 3); 4];
        let part = Partition::from_keys(&[0, 0, 1, 1]);
        assert_eq!(cond_exp(&c, &part, &p).unwrap(), c);
    }

    #[test]
    fn m2_conditional_probabilities_of_tau() {
        let (eta, tau, p) = m2();
        let rv: Vec<Rational> = tau.occurrence::<Rational>(3).at(1).to_vec();
        let trivial = Partition::trivial(4);
        assert_eq!(cond_exp(&rv, &trivial, &p).unwrap(), vec![ratio(2, 5); 4]);
        let by_eta = Filtration::natural_of_occurrence(&eta, 3);
        let out = cond_exp(&rv, by_eta.at(1), &p).unwrap();
        assert_eq!(out, vec![ratio(1, 3), ratio(1, 3), ratio(3, 7), ratio(3, 7)]);
    }

    #[test]
    fn degenerate_cell_is_named() {
        let p = MeasureVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let part = Partition::from_keys(&[0, 1, 1]);
        match cond_exp(&[1.0, 2.0, 3.0], &part, &p) {
            Err(Error::DegenerateCell { cell, atoms, .. }) => {
                assert_eq!(cell, 1);
                assert_eq!(atoms, vec![1, 2]);
            }
            other => panic!("expected degenerate cell, got {other:?}"),
        }
    }

    #[test]
    fn join_examples() {
        let (eta, tau, _) = m2();
        let f = Filtration::natural_of_occurrence(&eta, 3);
        let h = Filtration::natural_of_occurrence(&tau, 3);
        let g = f.join(&h).unwrap();
        assert_eq!(g.at(1).n_cells(), 4);
        assert_eq!(f.join(&f).unwrap(), f);
        let trivial = Filtration::trivial(4, 3);
        assert_eq!(trivial.join(&h).unwrap(), h);
        for k in 0..3 {
            assert!(g.at(k).refines(f.at(k)) && g.at(k).refines(h.at(k)));
        }
    }

    #[test]
    fn mismatched_grids_do_not_join() {
        let a = Filtration::trivial(4, 3);
        let b = Filtration::trivial(4, 2);
        assert!(matches!(a.join(&b), Err(Error::Structural(_))));
    }

    #[test]
    fn natural_filtration_examples() {
        let (_, tau, _) = m2();
        let h = Filtration::natural_of_occurrence(&tau, 3);
        assert_eq!(h.at(0).n_cells(), 1);
        assert_eq!(h.at(1).cells(), &[vec![0, 2], vec![1, 3]]);
        assert_eq!(h.at(2).cells(), &[vec![0, 2], vec![1, 3]]);
        let det = Filtration::natural_of_occurrence(&RandomTime::constant(1, 4), 3);
        assert!(det.partitions().iter().all(|p| p.n_cells() == 1));
        let never = Filtration::natural_of_occurrence(&RandomTime::never(4), 3);
        assert!(never.partitions().iter().all(|p| p.n_cells() == 1));
    }

    #[test]
    fn stopping_time_validation_rejects_split_cells() {
        let (eta, tau, _) = m2();
        let f = Filtration::natural_of_occurrence(&eta, 3);
        assert!(eta.is_stopping_time(&f));
        assert!(!tau.is_stopping_time(&f));
        assert!(matches!(
            tau.validate_stopping_time(&f, "tau"),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_refining_partitions_are_rejected() {
        let fine = Partition::discrete(2);
        let coarse = Partition::trivial(2);
        assert!(Filtration::new(vec![fine, coarse]).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(MeasureVector::new(vec![0.5, 0.49]).is_err());
        assert!(MeasureVector::new(vec![1.2, -0.2]).is_err());
        let p = MeasureVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        let q = MeasureVector::new(vec![0.9, 0.1, 0.0]).unwrap();
        let r = MeasureVector::new(vec![0.9, 0.0, 0.1]).unwrap();
        assert!(p.equivalent(&q));
        assert!(!p.equivalent(&r));
    }

    #[test]
    fn predictability_convention() {
        let (eta, _, _) = m2();
        let f = Filtration::natural_of_occurrence(&eta, 3);
        let occ = eta.occurrence::<Rational>(3);
        assert!(occ.is_adapted(&f));
        assert!(!occ.is_predictable(&f));
        let constant = ProcessTable::deterministic(&[ratio(0, 1), ratio(1, 1), ratio(2, 1)], 4);
        assert!(constant.is_predictable(&f));
    }
}
