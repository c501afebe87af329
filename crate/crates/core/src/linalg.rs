//! Small dense linear algebra over [`Scalar`]: rank, reduced row echelon
//! form, minimum-norm solves and weighted Gram-Schmidt.
//!
//! Matrices are row-major `Vec<Vec<S>>`. Everything here is sized by the
//! branching factor of a single tree node, so no attempt is made at
//! blocking or pivot-growth control beyond partial pivoting.

use crate::scalar::Scalar;

/// Reduced row echelon form. Returns the reduced matrix and pivot columns.
pub fn rref<S: Scalar>(matrix: &[Vec<S>]) -> (Vec<Vec<S>>, Vec<usize>) {
    let mut m: Vec<Vec<S>> = matrix.to_vec();
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        // Largest magnitude pivot; in exact mode any nonzero entry would do.
        let best = (r..rows)
            .filter(|&i| !m[i][c].negligible())
            .max_by(|&a, &b| {
                m[a][c]
                    .abs()
                    .partial_cmp(&m[b][c].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        let Some(p) = best else {
            for row in m.iter_mut().skip(r) {
                row[c] = S::zero();
            }
            continue;
        };
        m.swap(r, p);
        let pivot = m[r][c].clone();
        for x in m[r].iter_mut() {
            *x = x.clone() / pivot.clone();
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let factor = m[i][c].clone();
                for j in 0..cols {
                    let delta = factor.clone() * m[r][j].clone();
                    m[i][j] = m[i][j].clone() - delta;
                }
                m[i][c] = S::zero();
            }
        }
        pivots.push(c);
        r += 1;
    }
    (m, pivots)
}

pub fn rank<S: Scalar>(matrix: &[Vec<S>]) -> usize {
    rref(matrix).1.len()
}

/// Transpose of a rectangular matrix.
pub fn transpose<S: Scalar>(matrix: &[Vec<S>]) -> Vec<Vec<S>> {
    let cols = matrix.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| matrix.iter().map(|row| row[j].clone()).collect())
        .collect()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

/// `sum_i w_i a_i b_i`.
pub fn weighted_dot<S: Scalar>(w: &[S], a: &[S], b: &[S]) -> S {
    w.iter()
        .zip(a.iter().zip(b))
        .fold(S::zero(), |acc, (w, (x, y))| {
            acc + w.clone() * x.clone() * y.clone()
        })
}

/// Basis of the null space of `matrix` (as column vectors).
pub fn null_space<S: Scalar>(matrix: &[Vec<S>]) -> Vec<Vec<S>> {
    let cols = matrix.first().map_or(0, Vec::len);
    let (r, pivots) = rref(matrix);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![S::zero(); cols];
            v[f] = S::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -r[row][f].clone();
            }
            v
        })
        .collect()
}

/// Orthogonalises `vectors` under the inner product `<a,b> = sum w a b`,
/// dropping vectors that become negligible. Orthogonal, not orthonormal:
/// no square roots, so the routine stays exact over rationals.
pub fn gram_schmidt<S: Scalar>(weights: &[S], vectors: &[Vec<S>]) -> Vec<Vec<S>> {
    let mut basis: Vec<Vec<S>> = Vec::new();
    for v in vectors {
        let mut u = v.clone();
        for b in &basis {
            let coeff = weighted_dot(weights, &u, b) / weighted_dot(weights, b, b);
            for (x, y) in u.iter_mut().zip(b) {
                *x = x.clone() - coeff.clone() * y.clone();
            }
        }
        if !weighted_dot(weights, &u, &u).negligible() {
            basis.push(u);
        }
    }
    basis
}

/// Minimum Euclidean-norm solution of the consistent system `a x = b`.
///
/// Returns `None` when the system is inconsistent.
pub fn solve_min_norm<S: Scalar>(a: &[Vec<S>], b: &[S]) -> Option<Vec<S>> {
    let cols = a.first().map_or(0, Vec::len);
    let augmented: Vec<Vec<S>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let (r, pivots) = rref(&augmented);
    if pivots.contains(&cols) {
        return None;
    }
    let mut x = vec![S::zero(); cols];
    for (row, &pc) in pivots.iter().enumerate() {
        x[pc] = r[row][cols].clone();
    }
    // Remove the null-space component of the particular solution.
    let unit = vec![S::one(); cols];
    let null = gram_schmidt(&unit, &null_space(a));
    for n in &null {
        let coeff = dot(&x, n) / dot(n, n);
        for (xi, ni) in x.iter_mut().zip(n) {
            *xi = xi.clone() - coeff.clone() * ni.clone();
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Rational};

    fn q(rows: &[&[i64]]) -> Vec<Vec<Rational>> {
        rows.iter()
            .map(|r| r.iter().map(|&x| ratio(x, 1)).collect())
            .collect()
    }

    #[test]
    fn rank_of_dependent_rows() {
        assert_eq!(rank(&q(&[&[1, 2, 3], &[2, 4, 6], &[0, 1, 1]])), 2);
        assert_eq!(rank(&q(&[&[0, 0], &[0, 0]])), 0);
        let empty: Vec<Vec<Rational>> = Vec::new();
        assert_eq!(rank(&empty), 0);
    }

    #[test]
    fn min_norm_solution_is_orthogonal_to_null_space() {
        // x + y = 2 has minimum-norm solution (1, 1).
        let a = q(&[&[1, 1]]);
        let x = solve_min_norm(&a, &[ratio(2, 1)]).unwrap();
        assert_eq!(x, vec![ratio(1, 1), ratio(1, 1)]);
        let inconsistent = q(&[&[1, 1], &[1, 1]]);
        assert!(solve_min_norm(&inconsistent, &[ratio(1, 1), ratio(2, 1)]).is_none());
    }

    #[test]
    fn weighted_gram_schmidt_is_orthogonal() {
        let w = vec![ratio(1, 10), ratio(2, 10), ratio(7, 10)];
        let vs = q(&[&[1, 0, 0], &[0, 1, 0], &[1, 1, 0]]);
        let b = gram_schmidt(&w, &vs);
        assert_eq!(b.len(), 2);
        assert_eq!(weighted_dot(&w, &b[0], &b[1]), ratio(0, 1));
    }

    #[test]
    fn null_space_vectors_are_annihilated() {
        let a = q(&[&[1, 2, 3], &[0, 1, 1]]);
        for n in null_space(&a) {
            for row in &a {
                assert_eq!(dot(row, &n), ratio(0, 1));
            }
        }
    }
}
