//! Minimal dense linear solve for the static master-equation null space.
//! The systems here are tiny (window size, typically 9-25 states), so a
//! hand-rolled LU with partial pivoting beats pulling in a matrix crate.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("linear system is singular or ill-conditioned (pivot ratio estimate {condition_estimate:.3e})")]
pub struct SingularSystem {
    /// Rough conditioning indicator: |max pivot| / |min pivot|.
    pub condition_estimate: f64,
}

/// Solve `a x = b` in place by LU with partial pivoting. `a` is row-major
/// `n x n` and is destroyed; `b` is overwritten with the solution.
pub fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), SingularSystem> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);

    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;

    for col in 0..n {
        // Partial pivot.
        let mut pivot_row = col;
        let mut pivot_val = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val == 0.0 || !pivot_val.is_finite() {
            return Err(SingularSystem {
                condition_estimate: f64::INFINITY,
            });
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        max_pivot = max_pivot.max(pivot_val);
        min_pivot = min_pivot.min(pivot_val);

        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor != 0.0 {
                a[row * n + col] = 0.0;
                for k in col + 1..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }

    // Back substitution.
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }

    if b.iter().any(|v| !v.is_finite()) {
        return Err(SingularSystem {
            condition_estimate: max_pivot / min_pivot,
        });
    }
    Ok(())
}
