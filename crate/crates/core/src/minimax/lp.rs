//! Dense tableau simplex for `max 1ᵀy  s.t.  Ay ≤ 1, y ≥ 0` with `A > 0`.

const PIVOT_EPS: f64 = 1e-12;

pub(crate) struct LpSolution {
    pub y: Vec<f64>,
    /// Dual multipliers of the `m` constraints.
    pub duals: Vec<f64>,
}

/// `a` is row-major `m × n`. Bland's rule keeps the iteration finite.
pub(crate) fn solve_packing(a: &[Vec<f64>], n: usize) -> LpSolution {
    let m = a.len();
    let w = n + m + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for (i, row) in a.iter().enumerate() {
        t[i * w..i * w + n].copy_from_slice(row);
        t[i * w + n + i] = 1.0;
        t[i * w + w - 1] = 1.0;
    }
    for j in 0..n {
        t[m * w + j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    while let Some(enter) = (0..n + m).find(|&j| t[m * w + j] < -PIVOT_EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = t[i * w + enter];
            if coef > PIVOT_EPS {
                let ratio = t[i * w + w - 1] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_EPS
                            || (ratio <= lr + PIVOT_EPS && basis[i] < basis[li])
                        {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        // Bounded: every column has a positive entry.
        let (r, _) = leave.expect("packing LP is bounded");
        let p = t[r * w + enter];
        for v in &mut t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = t[r * w..(r + 1) * w].to_vec();
        for i in 0..=m {
            if i == r {
                continue;
            }
            let f = t[i * w + enter];
            if f != 0.0 {
                for (v, pr) in t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        basis[r] = enter;
    }
    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i * w + w - 1].max(0.0);
        }
    }
    let duals = (0..m).map(|i| t[m * w + n + i].max(0.0)).collect();
    LpSolution { y, duals }
}
