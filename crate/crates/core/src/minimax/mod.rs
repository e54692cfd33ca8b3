//! The depth-limited approximation game and its compression into one tree.
//!
//! Rows are the cells `(atom, label)` of the domain, columns are the
//! behaviors of depth-≤d trees and the payoff is the mistake indicator. The
//! adversary's weights are warmed up with multiplicative weights against
//! exact best responses; the restricted game is then solved exactly and
//! extended with best responses until the duality gap closes.

mod lp;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::instance::{Distribution, Instance};
use crate::oracle::{Frontier, DEFAULT_BEHAVIOR_CAP};
use crate::tree::{stack_majority, DecisionTree, DEFAULT_STACK_CAP};

#[derive(Clone, Debug)]
pub struct GameConfig {
    pub tol: f64,
    pub behavior_cap: usize,
    pub mw_rounds: usize,
    pub max_iters: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            tol: 1e-9,
            behavior_cap: DEFAULT_BEHAVIOR_CAP,
            mw_rounds: 200,
            max_iters: 10_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SupportEntry {
    #[serde(serialize_with = "ser_bits")]
    pub behavior: Bits,
    #[serde(skip)]
    pub witness: DecisionTree,
    pub weight: f64,
}

fn ser_bits<S: serde::Serializer>(b: &Bits, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(b.to_u8())
}

#[derive(Clone, Debug, Serialize)]
pub struct GameSolution {
    pub depth: usize,
    /// The tree player's guarantee: largest expected mistake over points of the mixed strategy.
    pub value: f64,
    /// Best-response value against `point_strategy`.
    pub lower: f64,
    pub duality_gap: f64,
    pub converged: bool,
    #[serde(skip)]
    pub point_strategy: Distribution,
    pub tree_strategy: Vec<SupportEntry>,
    pub n_behaviors: usize,
    pub iterations: usize,
}

/// All behaviors of depth-≤d trees over the domain, each with a witness tree.
pub fn enumerate_behaviors(inst: &Instance, d: usize) -> Result<Vec<(Bits, DecisionTree)>> {
    let f = Frontier::build(inst, d, DEFAULT_BEHAVIOR_CAP)?;
    Ok((0..f.len())
        .map(|i| (f.point_behavior(i), f.witness(i)))
        .collect())
}

struct Game {
    /// Points of each cell.
    cells: Vec<Vec<usize>>,
    /// `mistakes[j]` over cells.
    mistakes: Vec<Bits>,
}

impl Game {
    fn new(inst: &Instance, f: &Frontier) -> Self {
        let table = f.table();
        let c = inst.concept();
        let mut cells: Vec<Vec<usize>> = Vec::new();
        let mut cell_atom = Vec::new();
        let mut cell_label = Vec::new();
        for pts in table.atoms() {
            for label in [false, true] {
                let members: Vec<usize> =
                    pts.iter().copied().filter(|&x| c.get(x) == label).collect();
                if !members.is_empty() {
                    cell_atom.push(table.atom_of(members[0]));
                    cell_label.push(label);
                    cells.push(members);
                }
            }
        }
        let mistakes = (0..f.len())
            .map(|j| {
                let b = f.atom_behavior(j);
                Bits::from_bools((0..cells.len()).map(|i| b.get(cell_atom[i]) != cell_label[i]))
            })
            .collect();
        Game { cells, mistakes }
    }

    fn payoff(&self, j: usize, p: &[f64]) -> f64 {
        self.mistakes[j].weighted(p)
    }

    fn best_response(&self, p: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.mistakes.len() {
            let v = self.payoff(j, p);
            if v < best.1 {
                best = (j, v);
            }
        }
        best
    }
}

/// Solves the depth-`d` game to duality gap `tol`.
pub fn game_value(inst: &Instance, d: usize, tol: f64) -> Result<GameSolution> {
    game_value_with(
        inst,
        d,
        &GameConfig {
            tol,
            ..GameConfig::default()
        },
    )
}

pub fn game_value_with(inst: &Instance, d: usize, cfg: &GameConfig) -> Result<GameSolution> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Invalid(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    let f = Frontier::build(inst, d, cfg.behavior_cap)?;
    let g = Game::new(inst, &f);
    let m = g.cells.len();

    // multiplicative-weights warm start
    let mut support: Vec<usize> = Vec::new();
    let mut in_support = vec![false; g.mistakes.len()];
    let rounds = cfg.mw_rounds.max(1);
    let eta = (8.0 * (m.max(2) as f64).ln() / rounds as f64).sqrt();
    let mut p = vec![1.0 / m as f64; m];
    for _ in 0..rounds {
        let (j, _) = g.best_response(&p);
        if !in_support[j] {
            in_support[j] = true;
            support.push(j);
        }
        for (i, pi) in p.iter_mut().enumerate() {
            if g.mistakes[j].get(i) {
                *pi *= eta.exp();
            }
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
    }

    let mut iterations = 0;
    let mut lower = f64::NEG_INFINITY;
    let mut best_p = p.clone();
    let (q, upper, converged) = loop {
        iterations += 1;
        let a: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                support
                    .iter()
                    .map(|&j| if g.mistakes[j].get(i) { 2.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        let sol = lp::solve_packing(&a, support.len());
        let ysum: f64 = sol.y.iter().sum();
        let q: Vec<f64> = sol.y.iter().map(|y| y / ysum).collect();
        let dsum: f64 = sol.duals.iter().sum();
        let pr: Vec<f64> = sol.duals.iter().map(|x| x / dsum).collect();
        let upper = (0..m)
            .map(|i| {
                support
                    .iter()
                    .zip(&q)
                    .filter(|(&j, _)| g.mistakes[j].get(i))
                    .fold(0.0, |acc, (_, w)| acc + w)
            })
            .fold(0.0, f64::max);
        let (j, v) = g.best_response(&pr);
        if v > lower {
            lower = v;
            best_p = pr;
        }
        if upper - lower <= cfg.tol {
            break (q, upper, true);
        }
        if in_support[j] || iterations >= cfg.max_iters {
            break (q, upper, false);
        }
        in_support[j] = true;
        support.push(j);
    };

    let mut weights = vec![0.0; inst.n_points()];
    for (i, pts) in g.cells.iter().enumerate() {
        for &x in pts {
            weights[x] = best_p[i] / pts.len() as f64;
        }
    }
    let point_strategy = Distribution::from_masses(weights)?;
    let mut tree_strategy: Vec<SupportEntry> = support
        .iter()
        .zip(&q)
        .filter(|(_, w)| **w > 0.0)
        .map(|(&j, &w)| SupportEntry {
            behavior: f.point_behavior(j),
            witness: f.witness(j),
            weight: w,
        })
        .collect();
    let total: f64 = tree_strategy.iter().map(|e| e.weight).sum();
    tree_strategy.iter_mut().for_each(|e| e.weight /= total);
    Ok(GameSolution {
        depth: d,
        value: upper,
        lower,
        duality_gap: (upper - lower).max(0.0),
        converged,
        point_strategy,
        tree_strategy,
        n_behaviors: f.len(),
        iterations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Derandomization {
    /// Indices into the solution's tree strategy, with repetition.
    pub multiset: Vec<usize>,
    /// `min_x (1/2 − fraction of R wrong at x)`.
    pub margin: f64,
}

/// Per-point mistake counts of the multiset given by `counts`.
fn margin_of(mist: &[Bits], counts: &[usize], n: usize) -> f64 {
    let size: usize = counts.iter().sum();
    if size == 0 {
        return f64::NEG_INFINITY;
    }
    let mut wrong = vec![0usize; n];
    for (m, &k) in mist.iter().zip(counts) {
        if k > 0 {
            for x in m.iter_ones() {
                wrong[x] += k;
            }
        }
    }
    let worst = wrong.into_iter().max().unwrap_or(0);
    0.5 - worst as f64 / size as f64
}

fn expand(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(j, &k)| std::iter::repeat_n(j, k))
        .collect()
}

/// Largest-remainder rounding of `w · s`.
fn round_counts(w: &[f64], s: usize) -> Vec<usize> {
    let raw: Vec<f64> = w.iter().map(|x| x * s as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let mut left = s.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .total_cmp(&(raw[a] - raw[a].floor()))
            .then(a.cmp(&b))
    });
    for &j in order.iter().cycle().take(w.len() * 2) {
        if left == 0 {
            break;
        }
        counts[j] += 1;
        left -= 1;
    }
    counts
}

/// Largest multiset size tried, so the stacked tree stays under the node cap.
pub fn max_multiset_size(d: usize) -> usize {
    let depth_cap = (DEFAULT_STACK_CAP.ilog2() as usize).saturating_sub(1);
    (depth_cap / d.max(1)).max(1)
}

pub fn derandomize(inst: &Instance, sol: &GameSolution, gamma: f64) -> Result<Derandomization> {
    derandomize_with(inst, sol, gamma, 0, max_multiset_size(sol.depth))
}

/// Finds the smallest multiset `R` found by rounding, a greedy sequence and
/// seeded samples from the tree strategy, for sizes `1..=max_size`, whose
/// wrong fraction at every point is at most `1/2 − γ/2`.
pub fn derandomize_with(
    inst: &Instance,
    sol: &GameSolution,
    gamma: f64,
    seed: u64,
    max_size: usize,
) -> Result<Derandomization> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Invalid(format!(
            "gamma must lie in (0, 1/2), got {gamma}"
        )));
    }
    if sol.value > 0.5 - gamma + 1e-9 {
        return Err(Error::Precondition(format!(
            "game value {} exceeds 1/2 − γ = {}",
            sol.value,
            0.5 - gamma
        )));
    }
    let n = inst.n_points();
    let mist: Vec<Bits> = sol
        .tree_strategy
        .iter()
        .map(|e| e.behavior.xor(inst.concept()))
        .collect();
    let w: Vec<f64> = sol.tree_strategy.iter().map(|e| e.weight).collect();
    let need = gamma / 2.0 - 1e-12;
    let k = w.len();
    let sampler =
        WeightedIndex::new(&w).map_err(|e| Error::Invalid(format!("tree strategy: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut greedy = vec![0usize; k];
    let mut wrong = vec![0usize; n];
    for s in 1..=max_size {
        let rounded = round_counts(&w, s);
        let m = margin_of(&mist, &rounded, n);
        if m >= need {
            return Ok(Derandomization {
                multiset: expand(&rounded),
                margin: m,
            });
        }

        // greedy: add the tree that keeps the worst point least wrong
        let mut pick = (usize::MAX, usize::MAX, 0usize);
        for (j, mj) in mist.iter().enumerate() {
            let worst = (0..n)
                .map(|x| wrong[x] + mj.get(x) as usize)
                .max()
                .unwrap_or(0);
            let total: usize = mj.count_ones();
            if (worst, total) < (pick.0, pick.1) {
                pick = (worst, total, j);
            }
        }
        greedy[pick.2] += 1;
        for x in mist[pick.2].iter_ones() {
            wrong[x] += 1;
        }
        let m = margin_of(&mist, &greedy, n);
        if m >= need {
            return Ok(Derandomization {
                multiset: expand(&greedy),
                margin: m,
            });
        }

        for _ in 0..8 {
            let mut counts = vec![0usize; k];
            for _ in 0..s {
                counts[sampler.sample(&mut rng)] += 1;
            }
            let m = margin_of(&mist, &counts, n);
            if m >= need {
                return Ok(Derandomization {
                    multiset: expand(&counts),
                    margin: m,
                });
            }
        }
    }
    Err(Error::DerandomizeFailed { max_size })
}

#[derive(Clone, Debug)]
pub struct Compressed {
    pub tree: DecisionTree,
    /// Padded witness trees of the multiset, in stacking order.
    pub members: Vec<DecisionTree>,
    pub solution: GameSolution,
    pub derandomization: Derandomization,
}

/// Majority of a derandomized multiset of depth-`d` witnesses as one tree of
/// depth `|R| · d`, exact on every point.
pub fn compress(inst: &Instance, d: usize, gamma: f64, tol: f64) -> Result<Compressed> {
    compress_with(inst, d, gamma, tol, 0)
}

/// [`compress`] with the derandomization sampler seeded by `seed`.
pub fn compress_with(
    inst: &Instance,
    d: usize,
    gamma: f64,
    tol: f64,
    seed: u64,
) -> Result<Compressed> {
    let sol = game_value(inst, d, tol)?;
    if sol.value > 0.5 - gamma + tol {
        return Err(Error::Precondition(format!(
            "depth-{d} game value {} exceeds 1/2 − γ = {}",
            sol.value,
            0.5 - gamma
        )));
    }
    let der = derandomize_with(inst, &sol, gamma, seed, max_multiset_size(d))?;
    let members: Vec<DecisionTree> = der
        .multiset
        .iter()
        .map(|&j| {
            let mut t = sol.tree_strategy[j].witness.clone();
            if !inst.hypotheses().is_empty() {
                t.pad_to_depth(d, 0);
            }
            t
        })
        .collect();
    let tree = stack_majority(&members, DEFAULT_STACK_CAP)?;
    Ok(Compressed {
        tree,
        members,
        solution: sol,
        derandomization: der,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub max_value: f64,
    pub worst_member: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest depth whose game value is `≤ 1/2 − γ` on every member.
    pub depth: Option<usize>,
}

pub fn weak_interpretability_sweep(
    family: &[Instance],
    gamma: f64,
    d_max: usize,
) -> Result<SweepReport> {
    sweep_with(family, gamma, d_max, &GameConfig::default())
}

pub fn sweep_with(
    family: &[Instance],
    gamma: f64,
    d_max: usize,
    cfg: &GameConfig,
) -> Result<SweepReport> {
    if family.is_empty() {
        return Err(Error::Invalid("family is empty".into()));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Invalid(format!(
            "gamma must lie in (0, 1/2), got {gamma}"
        )));
    }
    let mut rows = Vec::new();
    for d in 0..=d_max {
        let values = family
            .par_iter()
            .map(|inst| game_value_with(inst, d, cfg).map(|s| s.value))
            .collect::<Result<Vec<f64>>>()?;
        let (worst_member, max_value) =
            values
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |a, (i, v)| if v > a.1 { (i, v) } else { a },
                );
        rows.push(SweepRow {
            d,
            max_value,
            worst_member,
        });
        if max_value <= 0.5 - gamma + cfg.tol {
            return Ok(SweepReport {
                rows,
                depth: Some(d),
            });
        }
    }
    Ok(SweepReport { rows, depth: None })
}
