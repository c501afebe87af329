//! JSON model documents.
//!
//! ```json
//! {
//!   "atoms": ["a", "b", "c", "d"],
//!   "grid": [0, 1, 2],
//!   "measures": { "P": { "a": 0.1, "b": "1/5", "c": 0.3, "d": 0.4 } },
//!   "filtrations": { "F": [[["a", "b", "c", "d"]], [["a", "b"], ["c", "d"]], [["a", "b"], ["c", "d"]]] },
//!   "random_times": { "eta": { "a": 1, "b": 1, "c": 2, "d": 2 }, "tau": { "a": 1, "b": 2, "c": 1, "d": null } },
//!   "joint": { "eta": "eta", "tau": "tau", "F": "F" }
//! }
//! ```
//!
//! Weights are numbers or `"p/q"` strings; atoms missing from a measure
//! carry zero weight. Times are grid values; `null` or `"inf"` means the
//! time never occurs. Every partition array lists the cells at one grid
//! time. `joint` is optional; without `F` the natural filtration of `eta`
//! is used.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::enlargement::JointModel;
use crate::error::{Error, Result};
use crate::finite_space::{FiniteFilteredSpace, Filtration, MeasureVector, Partition, RandomTime};
use crate::scalar::Scalar;

/// A validated model document.
#[derive(Clone, Debug)]
pub struct ModelFile<S> {
    pub space: FiniteFilteredSpace,
    pub measures: BTreeMap<String, MeasureVector<S>>,
    pub random_times: BTreeMap<String, RandomTime>,
    pub joint: Option<JointSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub eta: String,
    pub tau: String,
    pub f: Option<String>,
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::at(path, "expected an object"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::at(path, "expected an array"))
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::at(format!("{path}.{key}"), "missing field"))
}

fn relabel(e: Error, path: &str) -> Error {
    match e {
        Error::Validation { .. } => e,
        other => Error::at(path, other.to_string()),
    }
}

impl<S: Scalar> ModelFile<S> {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::at("$", format!("not JSON: {e}")))?;
        Self::from_value(&doc)
    }

    pub fn from_value(doc: &Value) -> Result<Self> {
        let root = object(doc, "$")?;
        let known = ["atoms", "grid", "measures", "filtrations", "random_times", "joint", "schema", "name"];
        if let Some(k) = root.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::at(format!("$.{k}"), "unknown field"));
        }

        let atoms: Vec<String> = array(field(root, "atoms", "$")?, "$.atoms")?
            .iter()
            .enumerate()
            .map(|(i, a)| {
                a.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::at(format!("$.atoms[{i}]"), "atom ids are strings"))
            })
            .collect::<Result<_>>()?;
        let grid: Vec<f64> = array(field(root, "grid", "$")?, "$.grid")?
            .iter()
            .enumerate()
            .map(|(i, t)| t.as_f64().ok_or_else(|| Error::at(format!("$.grid[{i}]"), "expected a number")))
            .collect::<Result<_>>()?;
        let mut space = FiniteFilteredSpace::new(atoms, grid).map_err(|e| relabel(e, "$"))?;
        let atom = |id: &Value, path: &str, space: &FiniteFilteredSpace| -> Result<usize> {
            let id = id.as_str().ok_or_else(|| Error::at(path, "atom ids are strings"))?;
            space
                .atom_index(id)
                .ok_or_else(|| Error::at(path, format!("unknown atom {id:?}")))
        };

        let mut measures = BTreeMap::new();
        for (name, m) in object(field(root, "measures", "$")?, "$.measures")? {
            let path = format!("$.measures.{name}");
            let mut weights = vec![S::zero(); space.n_atoms()];
            for (id, w) in object(m, &path)? {
                let wp = format!("{path}.{id}");
                let a = atom(&Value::String(id.clone()), &wp, &space)?;
                let value = match w {
                    Value::Number(n) => S::from_decimal_f64(n.as_f64().unwrap_or(f64::NAN)),
                    Value::String(s) => S::parse_literal(s),
                    _ => None,
                }
                .ok_or_else(|| Error::at(&wp, "weight must be a number or a \"p/q\" string"))?;
                if value.is_negative() {
                    return Err(Error::at(&wp, "negative weight"));
                }
                weights[a] = value;
            }
            let measure = MeasureVector::new(weights).map_err(|e| relabel(e, &path))?;
            measures.insert(name.clone(), measure);
        }
        if measures.is_empty() {
            return Err(Error::at("$.measures", "at least one measure is required"));
        }

        for (name, f) in object(field(root, "filtrations", "$")?, "$.filtrations")? {
            let path = format!("$.filtrations.{name}");
            let parts = array(f, &path)?;
            if parts.len() != space.n_times() {
                return Err(Error::at(
                    &path,
                    format!("{} partitions for {} grid times", parts.len(), space.n_times()),
                ));
            }
            let mut partitions = Vec::with_capacity(parts.len());
            for (k, part) in parts.iter().enumerate() {
                let pp = format!("{path}[{k}]");
                let mut cells = Vec::new();
                for (c, cell) in array(part, &pp)?.iter().enumerate() {
                    let cp = format!("{pp}[{c}]");
                    let ids = array(cell, &cp)?;
                    let members = ids
                        .iter()
                        .enumerate()
                        .map(|(j, id)| atom(id, &format!("{cp}[{j}]"), &space))
                        .collect::<Result<Vec<_>>>()?;
                    cells.push(members);
                }
                let partition = Partition::from_cells(space.n_atoms(), &cells).map_err(|e| relabel(e, &pp))?;
                if let Some(prev) = partitions.last() {
                    if !partition.refines(prev) {
                        return Err(Error::at(&pp, format!("partition at t_{k} does not refine t_{}", k - 1)));
                    }
                }
                partitions.push(partition);
            }
            let filtration = Filtration::new(partitions).map_err(|e| relabel(e, &path))?;
            space.insert_filtration(name, filtration).map_err(|e| relabel(e, &path))?;
        }

        let mut random_times = BTreeMap::new();
        if let Some(rt) = root.get("random_times") {
            for (name, table) in object(rt, "$.random_times")? {
                let path = format!("$.random_times.{name}");
                let entries = object(table, &path)?;
                let mut values = vec![None; space.n_atoms()];
                let mut seen = vec![false; space.n_atoms()];
                for (id, t) in entries {
                    let tp = format!("{path}.{id}");
                    let a = atom(&Value::String(id.clone()), &tp, &space)?;
                    seen[a] = true;
                    values[a] = match t {
                        Value::Null => None,
                        Value::String(s) if s == "inf" => None,
                        Value::Number(n) => {
                            let x = n.as_f64().unwrap_or(f64::NAN);
                            Some(space.grid_index(x).ok_or_else(|| Error::at(&tp, format!("time {x} is not on the grid")))?)
                        }
                        _ => return Err(Error::at(&tp, "time must be a grid value, null or \"inf\"")),
                    };
                }
                if let Some(a) = seen.iter().position(|s| !s) {
                    return Err(Error::at(&path, format!("no time for atom {:?}", space.atoms()[a])));
                }
                random_times.insert(name.clone(), RandomTime::new(values));
            }
        }

        let joint = match root.get("joint") {
            None | Some(Value::Null) => None,
            Some(j) => {
                let obj = object(j, "$.joint")?;
                let name = |key: &str| -> Result<String> {
                    let v = field(obj, key, "$.joint")?;
                    let s = v.as_str().ok_or_else(|| Error::at(format!("$.joint.{key}"), "expected a name"))?;
                    if !random_times.contains_key(s) {
                        return Err(Error::at(format!("$.joint.{key}"), format!("unknown random time {s:?}")));
                    }
                    Ok(s.to_string())
                };
                let spec = JointSpec {
                    eta: name("eta")?,
                    tau: name("tau")?,
                    f: match obj.get("F") {
                        None | Some(Value::Null) => None,
                        Some(v) => {
                            let s = v.as_str().ok_or_else(|| Error::at("$.joint.F", "expected a name"))?;
                            space.filtration(s).map_err(|e| relabel(e, "$.joint.F"))?;
                            Some(s.to_string())
                        }
                    },
                };
                if let Some(f) = &spec.f {
                    random_times[&spec.eta]
                        .validate_stopping_time(space.filtration(f)?, &spec.eta)
                        .map_err(|e| relabel(e, "$.joint.eta"))?;
                }
                Some(spec)
            }
        };

        let file = ModelFile {
            space,
            measures,
            random_times,
            joint,
        };
        if file.joint.is_some() {
            for name in file.measures.keys() {
                file.joint_model(name)?;
            }
        }
        Ok(file)
    }

    pub fn measure(&self, name: &str) -> Result<&MeasureVector<S>> {
        self.measures
            .get(name)
            .ok_or_else(|| Error::at(format!("$.measures.{name}"), "no such measure"))
    }

    /// The enlargement model under measure `name`.
    pub fn joint_model(&self, name: &str) -> Result<JointModel<S>> {
        let spec = self
            .joint
            .as_ref()
            .ok_or_else(|| Error::at("$.joint", "model declares no joint section"))?;
        let eta = self.random_times[&spec.eta].clone();
        let tau = self.random_times[&spec.tau].clone();
        let f = match &spec.f {
            Some(f) => self.space.filtration(f)?.clone(),
            None => Filtration::natural_of_occurrence(&eta, self.space.n_times()),
        };
        let bare = FiniteFilteredSpace::new(self.space.atoms().to_vec(), self.space.grid().to_vec())?;
        JointModel::new(bare, f, eta, tau, self.measure(name)?.clone()).map_err(|e| relabel(e, "$.joint"))
    }
}
