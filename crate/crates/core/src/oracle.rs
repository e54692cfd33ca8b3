//! Exact minimal-depth search and behavior enumeration.
//!
//! Two engines work over the atom partition of an instance. [`SplitSearch`]
//! memoizes the optimal loss of every (region, depth) pair reached by splits
//! and is used for minimal depths. [`Frontier`] enumerates every behavior of
//! depth-≤d trees level by level and backs the Rashomon set and the game.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::instance::{AtomTable, Distribution, Instance};
use crate::tree::DecisionTree;

/// Default cap on memo entries for [`SplitSearch`].
pub const DEFAULT_SEARCH_BUDGET: usize = 1 << 22;
/// Default cap on behaviors held by a [`Frontier`].
pub const DEFAULT_BEHAVIOR_CAP: usize = 1 << 21;

#[derive(Clone, Debug, PartialEq)]
pub enum MinDepth {
    Exact {
        depth: usize,
        loss: f64,
        witness: DecisionTree,
    },
    /// No tree of depth `≤ d_max` reaches `ε`. `structural` is set when no
    /// tree of any depth does, because `ε` is below the atom floor.
    AboveCap {
        d_max: usize,
        best_loss: f64,
        structural: bool,
    },
}

impl MinDepth {
    pub fn depth(&self) -> Option<usize> {
        match self {
            MinDepth::Exact { depth, .. } => Some(*depth),
            MinDepth::AboveCap { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Choice {
    Leaf(bool),
    Split(usize),
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    cost: f64,
    choice: Choice,
}

/// Optimal depth-limited trees over atom regions for one distribution.
pub struct SplitSearch {
    table: AtomTable,
    pos: Vec<f64>,
    neg: Vec<f64>,
    floor: Vec<f64>,
    root: Bits,
    memo: HashMap<Bits, Vec<Option<Entry>>>,
    entries: usize,
    budget: usize,
}

impl SplitSearch {
    pub fn new(inst: &Instance, dist: &Distribution, budget: usize) -> Result<Self> {
        if dist.len() != inst.n_points() {
            return Err(Error::Invalid(
                "distribution width does not match domain".into(),
            ));
        }
        Ok(Self::with_table(
            AtomTable::new(inst),
            inst.concept(),
            dist,
            budget,
        ))
    }

    pub fn with_table(
        table: AtomTable,
        concept: &Bits,
        dist: &Distribution,
        budget: usize,
    ) -> Self {
        let (pos, neg) = table.class_masses(concept, dist);
        let floor = pos.iter().zip(&neg).map(|(p, n)| p.min(*n)).collect();
        let root = Bits::from_bools(pos.iter().zip(&neg).map(|(p, n)| p + n > 0.0));
        SplitSearch {
            table,
            pos,
            neg,
            floor,
            root,
            memo: HashMap::new(),
            entries: 0,
            budget,
        }
    }

    pub fn table(&self) -> &AtomTable {
        &self.table
    }

    /// Loss of the best tree of any depth: every atom labeled by its majority.
    pub fn floor(&self) -> f64 {
        self.root.weighted(&self.floor)
    }

    /// Minimal loss over trees of depth `≤ k`.
    pub fn best_loss(&mut self, k: usize) -> Result<f64> {
        let root = self.root.clone();
        Ok(self.solve(&root, k)?.cost)
    }

    /// An optimal tree of depth `≤ k` and its loss.
    pub fn best_tree(&mut self, k: usize) -> Result<(DecisionTree, f64)> {
        let root = self.root.clone();
        let cost = self.solve(&root, k)?.cost;
        Ok((self.rebuild(&root, k)?, cost))
    }

    fn leaf(&self, region: &Bits) -> Entry {
        let p = region.weighted(&self.pos);
        let n = region.weighted(&self.neg);
        if n < p {
            Entry {
                cost: n,
                choice: Choice::Leaf(true),
            }
        } else {
            Entry {
                cost: p,
                choice: Choice::Leaf(false),
            }
        }
    }

    fn solve(&mut self, region: &Bits, k: usize) -> Result<Entry> {
        let leaf = self.leaf(region);
        if k == 0 || leaf.cost == 0.0 {
            return Ok(leaf);
        }
        let floor = region.weighted(&self.floor);
        if leaf.cost <= floor {
            return Ok(leaf);
        }
        if let Some(Some(e)) = self.memo.get(region).and_then(|v| v.get(k)) {
            return Ok(*e);
        }
        let mut best = leaf;
        let mut seen: HashSet<Bits> = HashSet::new();
        for h in 0..self.table.hyps().len() {
            let left = region.and(&self.table.hyps()[h]);
            if left.none() || left == *region {
                continue;
            }
            let right = region.and_not(&self.table.hyps()[h]);
            let key = if left < right {
                left.clone()
            } else {
                right.clone()
            };
            if !seen.insert(key) {
                continue;
            }
            let cl = self.solve(&left, k - 1)?.cost;
            if cl >= best.cost {
                continue;
            }
            let cr = self.solve(&right, k - 1)?.cost;
            if cl + cr < best.cost {
                best = Entry {
                    cost: cl + cr,
                    choice: Choice::Split(h),
                };
                if best.cost <= floor {
                    break;
                }
            }
        }
        self.entries += 1;
        if self.entries > self.budget {
            return Err(Error::Budget {
                what: "split search",
                limit: self.budget,
                reached: self.entries,
            });
        }
        let slot = self.memo.entry(region.clone()).or_default();
        if slot.len() <= k {
            slot.resize(k + 1, None);
        }
        slot[k] = Some(best);
        Ok(best)
    }

    fn rebuild(&mut self, region: &Bits, k: usize) -> Result<DecisionTree> {
        match self.solve(region, k)?.choice {
            Choice::Leaf(label) => Ok(DecisionTree::leaf(label)),
            Choice::Split(h) => {
                let hb = self.table.hyps()[h].clone();
                let l = self.rebuild(&region.and(&hb), k - 1)?;
                let r = self.rebuild(&region.and_not(&hb), k - 1)?;
                Ok(DecisionTree::split(h, l, r))
            }
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) {
        return Err(Error::Invalid(format!("epsilon must be ≥ 0, got {eps}")));
    }
    Ok(())
}

/// `Depth(c, H, ε | P)` up to `d_max`.
pub fn min_depth(inst: &Instance, dist: &Distribution, eps: f64, d_max: usize) -> Result<MinDepth> {
    check_eps(eps)?;
    let mut search = SplitSearch::new(inst, dist, DEFAULT_SEARCH_BUDGET)?;
    min_depth_from(&mut search, eps, dist.tolerance(), 0, d_max)
}

fn min_depth_from(
    search: &mut SplitSearch,
    eps: f64,
    tol: f64,
    start: usize,
    d_max: usize,
) -> Result<MinDepth> {
    let floor = search.floor();
    let mut best = f64::INFINITY;
    for k in start..=d_max {
        let cost = search.best_loss(k)?;
        best = best.min(cost);
        if cost <= eps + tol {
            let (witness, loss) = search.best_tree(k)?;
            return Ok(MinDepth::Exact {
                depth: k,
                loss,
                witness,
            });
        }
        if cost <= floor {
            // Deeper trees cannot beat the atom floor.
            break;
        }
    }
    Ok(MinDepth::AboveCap {
        d_max,
        best_loss: best,
        structural: floor > eps + tol,
    })
}

#[derive(Clone, Debug)]
pub struct DepthProfile {
    pub d_max: usize,
    pub entries: Vec<(f64, MinDepth)>,
}

/// [`min_depth`] for each `ε` in descending order, sharing one search.
pub fn depth_profile(
    inst: &Instance,
    dist: &Distribution,
    epsilons: &[f64],
    d_max: usize,
) -> Result<DepthProfile> {
    if epsilons.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Precondition(
            "epsilons must be sorted in descending order".into(),
        ));
    }
    for &e in epsilons {
        check_eps(e)?;
    }
    let mut search = SplitSearch::new(inst, dist, DEFAULT_SEARCH_BUDGET)?;
    let tol = dist.tolerance();
    let mut start = 0;
    let mut entries = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        let r = min_depth_from(&mut search, e, tol, start, d_max)?;
        if let MinDepth::Exact { depth, .. } = r {
            start = depth;
        }
        entries.push((e, r));
    }
    Ok(DepthProfile { d_max, entries })
}

#[derive(Clone, Copy, Debug)]
enum Origin {
    Const(bool),
    Split { h: usize, left: usize, right: usize },
}

/// Every behavior of depth-≤d trees, as atom-level bit vectors, built by the
/// recursion `F₀ = {∅, X}`, `F_k = {(h ∩ f₁) ∪ (h̄ ∩ f₂)}`.
pub struct Frontier {
    table: AtomTable,
    behaviors: Vec<Bits>,
    origin: Vec<Origin>,
    /// `level_end[k]` behaviors have depth `≤ k`.
    level_end: Vec<usize>,
    index: HashMap<Bits, usize>,
    fixpoint: bool,
}

impl Frontier {
    pub fn build(inst: &Instance, d: usize, cap: usize) -> Result<Self> {
        Self::build_on(AtomTable::new(inst), d, cap)
    }

    pub fn build_on(table: AtomTable, d: usize, cap: usize) -> Result<Self> {
        let w = table.n_atoms();
        let mut f = Frontier {
            table,
            behaviors: Vec::new(),
            origin: Vec::new(),
            level_end: Vec::new(),
            index: HashMap::new(),
            fixpoint: false,
        };
        f.push(Bits::zeros(w), Origin::Const(false), cap)?;
        f.push(Bits::ones(w), Origin::Const(true), cap)?;
        f.level_end.push(f.behaviors.len());
        for _ in 1..=d {
            if !f.grow(cap)? {
                f.fixpoint = true;
                break;
            }
        }
        Ok(f)
    }

    fn push(&mut self, b: Bits, o: Origin, cap: usize) -> Result<bool> {
        if self.index.contains_key(&b) {
            return Ok(false);
        }
        if self.behaviors.len() >= cap {
            return Err(Error::Budget {
                what: "behavior frontier",
                limit: cap,
                reached: self.behaviors.len(),
            });
        }
        self.index.insert(b.clone(), self.behaviors.len());
        self.behaviors.push(b);
        self.origin.push(o);
        Ok(true)
    }

    /// Adds one level; false when nothing new appeared.
    fn grow(&mut self, cap: usize) -> Result<bool> {
        let prev = self.behaviors.len();
        for h in 0..self.table.hyps().len() {
            let hb = self.table.hyps()[h].clone();
            let mut inside: Vec<(Bits, usize)> = Vec::new();
            let mut outside: Vec<(Bits, usize)> = Vec::new();
            let mut seen_in = HashSet::new();
            let mut seen_out = HashSet::new();
            for i in 0..prev {
                let a = self.behaviors[i].and(&hb);
                if seen_in.insert(a.clone()) {
                    inside.push((a, i));
                }
                let b = self.behaviors[i].and_not(&hb);
                if seen_out.insert(b.clone()) {
                    outside.push((b, i));
                }
            }
            for (a, ia) in &inside {
                for (b, ib) in &outside {
                    let g = a.or(b);
                    self.push(
                        g,
                        Origin::Split {
                            h,
                            left: *ia,
                            right: *ib,
                        },
                        cap,
                    )?;
                }
            }
        }
        self.level_end.push(self.behaviors.len());
        Ok(self.behaviors.len() > prev)
    }

    pub fn table(&self) -> &AtomTable {
        &self.table
    }

    /// Number of levels built beyond depth 0.
    pub fn depth_built(&self) -> usize {
        self.level_end.len() - 1
    }

    /// True when the last level added nothing, so deeper trees add no behaviors.
    pub fn at_fixpoint(&self) -> bool {
        self.fixpoint
    }

    pub fn len(&self) -> usize {
        self.behaviors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.behaviors.is_empty()
    }

    /// Count of behaviors of depth `≤ k`.
    pub fn count_up_to(&self, k: usize) -> usize {
        self.level_end[k.min(self.level_end.len() - 1)]
    }

    pub fn atom_behavior(&self, i: usize) -> &Bits {
        &self.behaviors[i]
    }

    pub fn point_behavior(&self, i: usize) -> Bits {
        self.table.lift(&self.behaviors[i])
    }

    /// Depth at which behavior `i` first appeared.
    pub fn depth_of(&self, i: usize) -> usize {
        self.level_end
            .iter()
            .position(|&e| i < e)
            .expect("index in range")
    }

    pub fn witness(&self, i: usize) -> DecisionTree {
        match self.origin[i] {
            Origin::Const(b) => DecisionTree::leaf(b),
            Origin::Split { h, left, right } => {
                DecisionTree::split(h, self.witness(left), self.witness(right))
            }
        }
    }

    /// Loss of behavior `i` given per-atom class masses.
    pub fn loss(&self, i: usize, pos: &[f64], neg: &[f64]) -> f64 {
        let b = &self.behaviors[i];
        b.weighted(neg) + b.not().weighted(pos)
    }
}

/// [`min_depth`] through the behavior frontier; the witness is the
/// lexicographically smallest qualifying behavior.
pub fn min_depth_by_behaviors(
    inst: &Instance,
    dist: &Distribution,
    eps: f64,
    d_max: usize,
    cap: usize,
) -> Result<MinDepth> {
    check_eps(eps)?;
    let f = Frontier::build(inst, d_max, cap)?;
    let (pos, neg) = f.table().class_masses(inst.concept(), dist);
    let tol = dist.tolerance();
    let floor = pos
        .iter()
        .zip(&neg)
        .fold(0.0, |acc, (p, n)| acc + p.min(*n));
    let losses: Vec<f64> = (0..f.len()).map(|i| f.loss(i, &pos, &neg)).collect();
    let mut best = f64::INFINITY;
    let mut lo = 0;
    for k in 0..=d_max {
        let hi = f.count_up_to(k);
        for &l in &losses[lo..hi] {
            best = best.min(l);
        }
        let hit = (lo..hi)
            .filter(|&i| losses[i] <= eps + tol)
            .min_by(|&a, &b| f.atom_behavior(a).cmp(f.atom_behavior(b)));
        if let Some(i) = hit {
            return Ok(MinDepth::Exact {
                depth: k,
                loss: losses[i],
                witness: f.witness(i),
            });
        }
        lo = hi;
    }
    Ok(MinDepth::AboveCap {
        d_max,
        best_loss: best,
        structural: floor > eps + tol,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RashomonEntry {
    #[serde(serialize_with = "ser_bits")]
    pub behavior: Bits,
    pub loss: f64,
    pub depth: usize,
    #[serde(serialize_with = "ser_tree")]
    pub witness: DecisionTree,
}

fn ser_bits<S: serde::Serializer>(b: &Bits, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(b.to_u8())
}

fn ser_tree<S: serde::Serializer>(t: &DecisionTree, s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: serde_json::Value = serde_json::from_str(&t.to_json()).expect("tree JSON");
    v.serialize(s)
}

/// The ε-Rashomon set at depth `≤ d`, sorted by loss then behavior.
pub fn rashomon(
    inst: &Instance,
    dist: &Distribution,
    eps: f64,
    d: usize,
) -> Result<Vec<RashomonEntry>> {
    check_eps(eps)?;
    let f = Frontier::build(inst, d, DEFAULT_BEHAVIOR_CAP)?;
    let (pos, neg) = f.table().class_masses(inst.concept(), dist);
    let tol = dist.tolerance();
    let mut out: Vec<RashomonEntry> = (0..f.len())
        .filter_map(|i| {
            let l = f.loss(i, &pos, &neg);
            (l <= eps + tol).then(|| RashomonEntry {
                behavior: f.point_behavior(i),
                loss: l,
                depth: f.depth_of(i),
                witness: f.witness(i),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        a.loss
            .total_cmp(&b.loss)
            .then_with(|| a.behavior.cmp(&b.behavior))
    });
    Ok(out)
}
