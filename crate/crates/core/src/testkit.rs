//! Random finite models for property checks.
//!
//! Joint laws of `(η, τ)` on a unit grid whose support is a rectangle
//! `S_η × S_τ` with non-product weights, so that a decoupling measure
//! exists while `P` itself usually is not one.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::enlargement::JointModel;
use crate::finite_space::{MeasureVector, RandomTime};
use crate::scalar::{ratio, Rational};

/// How the supports of `η` and `τ` are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportShape {
    /// Independent random subsets of `{1..T} ∪ {∞}`.
    Free,
    /// No finite time shared between the two supports.
    Disjoint,
    /// One of the two times is deterministic.
    Degenerate,
}

fn subset(rng: &mut impl Rng, pool: &[Option<usize>]) -> Vec<Option<usize>> {
    loop {
        let s: Vec<Option<usize>> = pool.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

fn times(horizon: usize, never: bool) -> Vec<Option<usize>> {
    let mut v: Vec<Option<usize>> = (1..=horizon).map(Some).collect();
    if never {
        v.push(None);
    }
    v
}

fn positive_weights(rng: &mut impl Rng, n: usize) -> Vec<Rational> {
    let raw: Vec<i64> = (0..n).map(|_| rng.random_range(1..=9)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|w| ratio(w, total)).collect()
}

/// One rectangle-support model with `shape`.
pub fn joint_model_with(rng: &mut impl Rng, shape: SupportShape) -> JointModel<Rational> {
    let horizon = rng.random_range(2..=4);
    let (se, st) = match shape {
        SupportShape::Free => {
            let se = subset(rng, &times(horizon, true));
            let st = subset(rng, &times(horizon, true));
            (se, st)
        }
        SupportShape::Disjoint => {
            let mut finite: Vec<usize> = (1..=horizon).collect();
            finite.shuffle(rng);
            let cut = rng.random_range(1..finite.len());
            let mut se: Vec<Option<usize>> = finite[..cut].iter().copied().map(Some).collect();
            let mut st: Vec<Option<usize>> = finite[cut..].iter().copied().map(Some).collect();
            if rng.random_bool(0.5) {
                se.push(None);
            }
            if rng.random_bool(0.5) {
                st.push(None);
            }
            (se, st)
        }
        SupportShape::Degenerate => {
            let fixed = vec![Some(rng.random_range(1..=horizon))];
            let other = subset(rng, &times(horizon, true));
            if rng.random_bool(0.5) {
                (fixed, other)
            } else {
                (other, fixed)
            }
        }
    };
    let pairs: Vec<(Option<usize>, Option<usize>)> =
        se.iter().flat_map(|&e| st.iter().map(move |&t| (e, t))).collect();
    let weights = positive_weights(rng, pairs.len());
    let grid = (0..=horizon).map(|t| t as f64).collect();
    JointModel::from_occurrences(
        grid,
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
        weights,
    )
    .expect("fuzzed model is well formed")
}

/// `n` models cycling through the support shapes, reproducible from `seed`.
pub fn joint_corpus(seed: u64, n: usize) -> Vec<JointModel<Rational>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [SupportShape::Free, SupportShape::Free, SupportShape::Disjoint, SupportShape::Degenerate];
    (0..n).map(|i| joint_model_with(&mut rng, shapes[i % shapes.len()])).collect()
}

/// A model whose support misses one cell of the rectangle, so no
/// decoupling measure exists. Needs both times to take two values.
pub fn non_rectangular_model(rng: &mut impl Rng) -> JointModel<Rational> {
    let horizon = rng.random_range(2..=4);
    let pool = times(horizon, true);
    let pick2 = |rng: &mut ChaCha8Rng| {
        let mut v = pool.clone();
        v.shuffle(rng);
        v.truncate(2);
        v
    };
    let mut inner = ChaCha8Rng::seed_from_u64(rng.random());
    let se = pick2(&mut inner);
    let st = pick2(&mut inner);
    let pairs: Vec<(Option<usize>, Option<usize>)> = se
        .iter()
        .flat_map(|&e| st.iter().map(move |&t| (e, t)))
        .skip(1)
        .collect();
    let weights = positive_weights(rng, pairs.len());
    JointModel::from_occurrences(
        (0..=horizon).map(|t| t as f64).collect(),
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
        weights,
    )
    .expect("fuzzed model is well formed")
}

/// An atomic law for a single random time: one atom per support value.
/// Returns the time, its law and the number of grid points.
pub fn atomic_time_law(rng: &mut impl Rng) -> (RandomTime, MeasureVector<Rational>, usize) {
    let horizon = rng.random_range(1..=6);
    let support = subset(rng, &times(horizon, true));
    let weights = positive_weights(rng, support.len());
    (
        RandomTime::new(support),
        MeasureVector::new(weights).expect("normalised"),
        horizon + 1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enlargement::decoupling_exists;

    #[test]
    fn corpus_is_reproducible_and_decouplable() {
        let a = joint_corpus(7, 12);
        let b = joint_corpus(7, 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.p(), y.p());
            assert!(decoupling_exists(x).q.is_some());
        }
    }

    #[test]
    fn holes_break_decoupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert!(decoupling_exists(&non_rectangular_model(&mut rng)).q.is_none());
        }
    }
}
