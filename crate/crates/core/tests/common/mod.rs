//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num::{BigRational, One, Signed, Zero};
use rand::Rng;
use treelucid_core::instance::Hypothesis;
use treelucid_core::{Bits, Distribution, Instance};

/// Point masks (bit `x` = label at point `x`) of every syntactic tree of depth
/// `≤ d`, with repetition.
pub fn syntactic_behaviors(hyps: &[u32], n: usize, d: usize) -> Vec<u32> {
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut level = vec![0, full];
    for _ in 0..d {
        let mut next = vec![0, full];
        for &h in hyps {
            for &l in &level {
                for &r in &level {
                    next.push(((h & l) | (!h & r)) & full);
                }
            }
        }
        level = next;
    }
    level
}

pub fn masks(inst: &Instance) -> (Vec<u32>, u32) {
    let to_mask = |b: &Bits| b.iter_ones().fold(0u32, |m, x| m | (1 << x));
    let hyps = inst.hypotheses().iter().map(|h| to_mask(&h.bits)).collect();
    (hyps, to_mask(inst.concept()))
}

fn mask_loss(b: u32, c: u32, w: &[f64]) -> f64 {
    let diff = b ^ c;
    (0..w.len())
        .filter(|&x| diff >> x & 1 == 1)
        .map(|x| w[x])
        .sum()
}

/// Smallest `k ≤ d_max` with a depth-`≤k` tree of loss `≤ eps`, by brute force.
pub fn naive_min_depth(inst: &Instance, eps: f64, d_max: usize) -> Option<usize> {
    let (hyps, c) = masks(inst);
    let w = inst.dist().weights();
    let tol = inst.dist().tolerance();
    (0..=d_max).find(|&k| {
        syntactic_behaviors(&hyps, inst.n_points(), k)
            .iter()
            .any(|&b| mask_loss(b, c, w) <= eps + tol)
    })
}

pub fn naive_best_loss(inst: &Instance, d: usize) -> f64 {
    let (hyps, c) = masks(inst);
    let w = inst.dist().weights();
    syntactic_behaviors(&hyps, inst.n_points(), d)
        .iter()
        .map(|&b| mask_loss(b, c, w))
        .fold(f64::INFINITY, f64::min)
}

/// Random instance on `n` points. Dyadic weights are 16 unit masses dropped
/// on random points; otherwise masses are random integers in `0..7`.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, n_hyps: usize, dyadic: bool) -> Instance {
    let mut masses = vec![0.0; n];
    if dyadic {
        for _ in 0..16 {
            masses[rng.gen_range(0..n)] += 1.0;
        }
    } else {
        for m in masses.iter_mut() {
            *m = rng.gen_range(0..7) as f64;
        }
        if masses.iter().all(|&m| m == 0.0) {
            masses[0] = 1.0;
        }
    }
    let hyps = (0..n_hyps)
        .map(|j| Hypothesis {
            name: format!("r{j}"),
            bits: Bits::from_bools((0..n).map(|_| rng.gen_bool(0.5))),
        })
        .collect();
    let concept = Bits::from_bools((0..n).map(|_| rng.gen_bool(0.5)));
    Instance::new(concept, hyps, Distribution::from_masses(masses).unwrap()).unwrap()
}

pub struct ExactGame {
    pub value: BigRational,
    /// Rows and columns left after dominance reduction.
    pub reduced: (usize, usize),
}

/// Exact value of `min_q max_x Σ_j q_j A[x][j]` with `A = mistakes` (one
/// vector of rows per column), in rational arithmetic. The primal and dual
/// optima are checked against each other before returning.
pub fn exact_game_value(columns: &[Vec<bool>]) -> ExactGame {
    let mut cols: Vec<Vec<bool>> = Vec::new();
    for c in columns {
        if !cols.contains(c) {
            cols.push(c.clone());
        }
    }
    // a column that is wrong wherever another is wrong never helps
    let dominated =
        |a: &Vec<bool>, b: &Vec<bool>| a != b && b.iter().zip(a).all(|(&bx, &ax)| !bx || ax);
    let cols: Vec<Vec<bool>> = cols
        .iter()
        .filter(|a| !cols.iter().any(|b| dominated(a, b)))
        .cloned()
        .collect();
    let n_rows = cols.first().map_or(0, Vec::len);
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for x in 0..n_rows {
        let r: Vec<bool> = cols.iter().map(|c| c[x]).collect();
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    let row_dominated =
        |a: &Vec<bool>, b: &Vec<bool>| a != b && a.iter().zip(b).all(|(&ax, &bx)| !ax || bx);
    let rows: Vec<Vec<bool>> = rows
        .iter()
        .filter(|a| !rows.iter().any(|b| row_dominated(a, b)))
        .cloned()
        .collect();
    let (m, n) = (rows.len(), cols.len());
    let one = BigRational::one();
    let b: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|&v| if v { &one + &one } else { one.clone() })
                .collect()
        })
        .collect();
    let (y, duals) = rational_packing(&b, n);
    let ysum: BigRational = y.iter().cloned().sum();
    let dsum: BigRational = duals.iter().cloned().sum();
    assert_eq!(ysum, dsum, "primal and dual objectives differ");
    let q: Vec<BigRational> = y.iter().map(|v| v / &ysum).collect();
    let p: Vec<BigRational> = duals.iter().map(|v| v / &dsum).collect();
    let payoff = |i: usize, j: usize| {
        if rows[i][j] {
            one.clone()
        } else {
            BigRational::zero()
        }
    };
    let upper = (0..m)
        .map(|i| (0..n).map(|j| payoff(i, j) * &q[j]).sum::<BigRational>())
        .max()
        .unwrap();
    let lower = (0..n)
        .map(|j| (0..m).map(|i| payoff(i, j) * &p[i]).sum::<BigRational>())
        .min()
        .unwrap();
    assert_eq!(upper, lower, "strategies do not certify each other");
    let value = &one / &ysum - &one;
    assert_eq!(value, upper);
    ExactGame {
        value,
        reduced: (m, n),
    }
}

/// `max 1ᵀy s.t. By ≤ 1, y ≥ 0` for `B > 0`, by the tableau method with
/// Bland's rule. Returns the primal optimum and the constraint duals.
fn rational_packing(b: &[Vec<BigRational>], n: usize) -> (Vec<BigRational>, Vec<BigRational>) {
    let m = b.len();
    let w = n + m + 1;
    let zero = BigRational::zero();
    let mut t = vec![vec![zero.clone(); w]; m + 1];
    for i in 0..m {
        for j in 0..n {
            t[i][j] = b[i][j].clone();
        }
        t[i][n + i] = BigRational::one();
        t[i][w - 1] = BigRational::one();
    }
    for v in t[m].iter_mut().take(n) {
        *v = -BigRational::one();
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    while let Some(e) = (0..n + m).find(|&j| t[m][j].is_negative()) {
        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..m {
            if t[i][e].is_positive() {
                let ratio = &t[i][w - 1] / &t[i][e];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("bounded");
        let p = t[r][e].clone();
        for v in t[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && !row[e].is_zero() {
                let f = row[e].clone();
                for (v, pv) in row.iter_mut().zip(&pivot) {
                    *v = &*v - &f * pv;
                }
            }
        }
        basis[r] = e;
    }
    let mut y = vec![zero; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            y[bv] = t[i][w - 1].clone();
        }
    }
    let duals = (0..m).map(|i| t[m][n + i].clone()).collect();
    (y, duals)
}

/// Mistake columns of every distinct depth-`≤d` behavior, by brute force.
pub fn naive_game_columns(inst: &Instance, d: usize) -> Vec<Vec<bool>> {
    let (hyps, c) = masks(inst);
    let n = inst.n_points();
    let mut seen = std::collections::HashSet::new();
    syntactic_behaviors(&hyps, n, d)
        .into_iter()
        .filter(|b| seen.insert(*b))
        .map(|b| (0..n).map(|x| (b ^ c) >> x & 1 == 1).collect())
        .collect()
}

pub fn to_f64(r: &BigRational) -> f64 {
    num::ToPrimitive::to_f64(r).unwrap()
}
