//! Graded complexity measures on the algebra generated by `H`.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::instance::{AtomTable, Distribution, Instance};
use crate::tree::{DecisionTree, Node};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AlgebraExpr {
    Hyp(usize),
    Empty,
    Full,
    Union(Box<AlgebraExpr>, Box<AlgebraExpr>),
    Inter(Box<AlgebraExpr>, Box<AlgebraExpr>),
    Complement(Box<AlgebraExpr>),
}

use AlgebraExpr as E;

impl AlgebraExpr {
    pub fn union(a: AlgebraExpr, b: AlgebraExpr) -> Self {
        E::Union(Box::new(a), Box::new(b))
    }

    pub fn inter(a: AlgebraExpr, b: AlgebraExpr) -> Self {
        E::Inter(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: AlgebraExpr) -> Self {
        E::Complement(Box::new(a))
    }

    /// Node count of the expression tree.
    pub fn size(&self) -> usize {
        match self {
            E::Hyp(_) | E::Empty | E::Full => 1,
            E::Union(a, b) | E::Inter(a, b) => 1 + a.size() + b.size(),
            E::Complement(a) => 1 + a.size(),
        }
    }

    /// The set denoted over a hypothesis table of the given width.
    pub fn eval_on(&self, hyps: &[Bits], width: usize) -> Result<Bits> {
        Ok(match self {
            E::Hyp(i) => hyps
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Structural(format!("dangling hypothesis reference {i}")))?,
            E::Empty => Bits::zeros(width),
            E::Full => Bits::ones(width),
            E::Union(a, b) => a.eval_on(hyps, width)?.or(&b.eval_on(hyps, width)?),
            E::Inter(a, b) => a.eval_on(hyps, width)?.and(&b.eval_on(hyps, width)?),
            E::Complement(a) => a.eval_on(hyps, width)?.not(),
        })
    }

    pub fn eval(&self, inst: &Instance) -> Result<Bits> {
        let hyps: Vec<Bits> = inst.hypotheses().iter().map(|h| h.bits.clone()).collect();
        self.eval_on(&hyps, inst.n_points())
    }

    pub fn to_value(&self) -> Value {
        match self {
            E::Hyp(i) => json!(["h", i]),
            E::Empty => json!("empty"),
            E::Full => json!("full"),
            E::Union(a, b) => json!(["union", a.to_value(), b.to_value()]),
            E::Inter(a, b) => json!(["inter", a.to_value(), b.to_value()]),
            E::Complement(a) => json!(["not", a.to_value()]),
        }
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let bad = || Error::Structural(format!("malformed expression {v}"));
        match v {
            Value::String(s) if s == "empty" => Ok(E::Empty),
            Value::String(s) if s == "full" => Ok(E::Full),
            Value::Array(items) => {
                let op = items.first().and_then(Value::as_str).ok_or_else(bad)?;
                match (op, items.len()) {
                    ("h", 2) => {
                        let i = items[1].as_u64().ok_or_else(bad)?;
                        Ok(E::Hyp(i as usize))
                    }
                    ("union", 3) => Ok(E::union(
                        Self::from_value(&items[1])?,
                        Self::from_value(&items[2])?,
                    )),
                    ("inter", 3) => Ok(E::inter(
                        Self::from_value(&items[1])?,
                        Self::from_value(&items[2])?,
                    )),
                    ("not", 2) => Ok(E::not(Self::from_value(&items[1])?)),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(&serde_json::from_str::<Value>(text)?)
    }
}

pub fn eval_expr(expr: &AlgebraExpr, point: usize, inst: &Instance) -> Result<bool> {
    if point >= inst.n_points() {
        return Err(Error::Structural(format!("point {point} out of range")));
    }
    Ok(match expr {
        E::Hyp(i) => inst.hypothesis(*i)?.bits.get(point),
        E::Empty => false,
        E::Full => true,
        E::Union(a, b) => eval_expr(a, point, inst)? | eval_expr(b, point, inst)?,
        E::Inter(a, b) => eval_expr(a, point, inst)? & eval_expr(b, point, inst)?,
        E::Complement(a) => !eval_expr(a, point, inst)?,
    })
}

/// `A_v = (h_v ∩ A_left) ∪ (h̄_v ∩ A_right)`, leaves becoming `X` or `∅`. Not simplified.
pub fn tree_to_algebra(tree: &DecisionTree) -> AlgebraExpr {
    fn go(nodes: &[Node], i: usize) -> AlgebraExpr {
        match nodes[i] {
            Node::Leaf { label: true } => E::Full,
            Node::Leaf { label: false } => E::Empty,
            Node::Internal { h, left, right } => E::union(
                E::inter(E::Hyp(h), go(nodes, left)),
                E::inter(E::not(E::Hyp(h)), go(nodes, right)),
            ),
        }
    }
    go(tree.nodes(), tree.root())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Combine {
    Sum,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub combine: Combine,
    pub inc: u64,
}

impl Rule {
    fn apply(self, a: u64, b: u64) -> u64 {
        self.inc
            + match self.combine {
                Combine::Sum => a + b,
                Combine::Max => a.max(b),
            }
    }
}

/// A complexity assigned structurally by a rule table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GradedMeasure {
    pub name: String,
    pub hyp_value: u64,
    pub constant_value: u64,
    pub union: Rule,
    pub inter: Rule,
    pub complement_inc: u64,
    /// Declares `Γ(f₁ ∪ f₂) ≤ 1 + max(Γ(f₁), Γ(f₂))`.
    pub strengthened_union: bool,
}

impl GradedMeasure {
    /// One per connective plus the children.
    pub fn connective_count() -> Self {
        GradedMeasure {
            name: "connective".into(),
            hyp_value: 0,
            constant_value: 0,
            union: Rule {
                combine: Combine::Sum,
                inc: 1,
            },
            inter: Rule {
                combine: Combine::Sum,
                inc: 1,
            },
            complement_inc: 1,
            strengthened_union: false,
        }
    }

    /// Nesting depth of connectives.
    pub fn max_depth_style() -> Self {
        GradedMeasure {
            name: "maxdepth".into(),
            hyp_value: 0,
            constant_value: 0,
            union: Rule {
                combine: Combine::Max,
                inc: 1,
            },
            inter: Rule {
                combine: Combine::Max,
                inc: 1,
            },
            complement_inc: 1,
            strengthened_union: true,
        }
    }

    /// `Γ ≡ 0`.
    pub fn zero() -> Self {
        GradedMeasure {
            name: "zero".into(),
            hyp_value: 0,
            constant_value: 0,
            union: Rule {
                combine: Combine::Max,
                inc: 0,
            },
            inter: Rule {
                combine: Combine::Max,
                inc: 0,
            },
            complement_inc: 0,
            strengthened_union: true,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "connective" => Ok(Self::connective_count()),
            "maxdepth" => Ok(Self::max_depth_style()),
            "zero" => Ok(Self::zero()),
            other => Err(Error::Invalid(format!(
                "unknown measure {other:?} (expected connective, maxdepth or zero)"
            ))),
        }
    }
}

pub fn gamma_of(expr: &AlgebraExpr, m: &GradedMeasure) -> u64 {
    match expr {
        E::Hyp(_) => m.hyp_value,
        E::Empty | E::Full => m.constant_value,
        E::Union(a, b) => m.union.apply(gamma_of(a, m), gamma_of(b, m)),
        E::Inter(a, b) => m.inter.apply(gamma_of(a, m), gamma_of(b, m)),
        E::Complement(a) => m.complement_inc + gamma_of(a, m),
    }
}

/// Random expression of nesting depth `≤ depth` over `n_hyps` hypotheses.
pub fn random_expr<R: Rng + ?Sized>(rng: &mut R, n_hyps: usize, depth: usize) -> AlgebraExpr {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..10) {
            0 => E::Empty,
            1 => E::Full,
            _ if n_hyps == 0 => E::Full,
            _ => E::Hyp(rng.gen_range(0..n_hyps)),
        };
    }
    match rng.gen_range(0..3) {
        0 => E::union(
            random_expr(rng, n_hyps, depth - 1),
            random_expr(rng, n_hyps, depth - 1),
        ),
        1 => E::inter(
            random_expr(rng, n_hyps, depth - 1),
            random_expr(rng, n_hyps, depth - 1),
        ),
        _ => E::not(random_expr(rng, n_hyps, depth - 1)),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomViolation {
    pub axiom: &'static str,
    #[serde(serialize_with = "ser_expr")]
    pub left: AlgebraExpr,
    #[serde(serialize_with = "ser_opt_expr")]
    pub right: Option<AlgebraExpr>,
    pub lhs: u64,
    pub bound: u64,
}

fn ser_expr<S: serde::Serializer>(e: &AlgebraExpr, s: S) -> std::result::Result<S::Ok, S::Error> {
    e.to_value().serialize(s)
}

fn ser_opt_expr<S: serde::Serializer>(
    e: &Option<AlgebraExpr>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    e.as_ref().map(AlgebraExpr::to_value).serialize(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_pair(m: &GradedMeasure, a: &AlgebraExpr, b: &AlgebraExpr) -> Vec<AxiomViolation> {
    let ga = gamma_of(a, m);
    let gb = gamma_of(b, m);
    let mut out = Vec::new();
    let mut check = |axiom, lhs: u64, bound: u64, right: Option<&AlgebraExpr>| {
        if lhs > bound {
            out.push(AxiomViolation {
                axiom,
                left: a.clone(),
                right: right.cloned(),
                lhs,
                bound,
            });
        }
    };
    let gu = gamma_of(&E::union(a.clone(), b.clone()), m);
    check("union", gu, 1 + ga + gb, Some(b));
    check(
        "intersection",
        gamma_of(&E::inter(a.clone(), b.clone()), m),
        1 + ga + gb,
        Some(b),
    );
    check("complement", gamma_of(&E::not(a.clone()), m), 1 + ga, None);
    if m.strengthened_union {
        check("strengthened union", gu, 1 + ga.max(gb), Some(b));
    }
    out
}

/// Checks the measure axioms on `samples` random expression pairs, plus
/// `Γ(h) = 0` for every hypothesis.
pub fn check_axioms(m: &GradedMeasure, n_hyps: usize, samples: usize, seed: u64) -> AxiomReport {
    let mut violations: Vec<AxiomViolation> = (0..n_hyps)
        .filter(|&i| gamma_of(&E::Hyp(i), m) != 0)
        .map(|i| AxiomViolation {
            axiom: "hypothesis",
            left: E::Hyp(i),
            right: None,
            lhs: gamma_of(&E::Hyp(i), m),
            bound: 0,
        })
        .collect();
    let sampled: Vec<Vec<AxiomViolation>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add(i as u64)
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let a = random_expr(&mut rng, n_hyps, 4);
            let b = random_expr(&mut rng, n_hyps, 4);
            check_pair(m, &a, &b)
        })
        .collect();
    violations.extend(sampled.into_iter().flatten());
    AxiomReport {
        samples,
        violations,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MinGamma {
    Exact {
        gamma: u64,
        loss: f64,
        expr: AlgebraExpr,
    },
    /// `saturated` means every union of atoms was reached, so no budget helps.
    AboveBudget {
        budget: u64,
        best_loss: f64,
        saturated: bool,
    },
}

impl MinGamma {
    pub fn gamma(&self) -> Option<u64> {
        match self {
            MinGamma::Exact { gamma, .. } => Some(*gamma),
            MinGamma::AboveBudget { .. } => None,
        }
    }
}

/// Largest number of distinct sets held by [`min_gamma`].
pub const MIN_GAMMA_CAP: usize = 1 << 20;

#[derive(Clone)]
enum Made {
    Base(AlgebraExpr),
    Union(usize, usize),
    Inter(usize, usize),
    Not(usize),
}

struct Levels {
    sets: Vec<Bits>,
    made: Vec<Made>,
    index: HashMap<Bits, usize>,
    by_level: Vec<Vec<usize>>,
}

impl Levels {
    fn add(&mut self, b: Bits, how: Made, level: usize) -> Result<()> {
        if self.index.contains_key(&b) {
            return Ok(());
        }
        if self.sets.len() >= MIN_GAMMA_CAP {
            return Err(Error::Budget {
                what: "min_gamma sets",
                limit: MIN_GAMMA_CAP,
                reached: self.sets.len(),
            });
        }
        self.index.insert(b.clone(), self.sets.len());
        self.sets.push(b);
        self.made.push(how);
        while self.by_level.len() <= level {
            self.by_level.push(Vec::new());
        }
        self.by_level[level].push(self.sets.len() - 1);
        Ok(())
    }

    fn expr(&self, i: usize) -> AlgebraExpr {
        match &self.made[i] {
            Made::Base(e) => e.clone(),
            Made::Union(a, b) => E::union(self.expr(*a), self.expr(*b)),
            Made::Inter(a, b) => E::inter(self.expr(*a), self.expr(*b)),
            Made::Not(a) => E::not(self.expr(*a)),
        }
    }

    fn level(&self, g: usize) -> &[usize] {
        self.by_level.get(g).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `Γ(c, H, ε | P)`: the least measure value of an expression with loss `≤ ε`,
/// searched level by level up to `budget` with sets deduplicated.
pub fn min_gamma(
    inst: &Instance,
    dist: &Distribution,
    eps: f64,
    m: &GradedMeasure,
    budget: u64,
) -> Result<MinGamma> {
    if dist.len() != inst.n_points() {
        return Err(Error::Invalid(
            "distribution width does not match domain".into(),
        ));
    }
    let table = AtomTable::new(inst);
    let w = table.n_atoms();
    let (pos, neg) = table.class_masses(inst.concept(), dist);
    let tol = dist.tolerance();
    let full_count = if w < 63 { Some(1usize << w) } else { None };
    let loss = |b: &Bits| b.weighted(&neg) + b.not().weighted(&pos);
    let mut lv = Levels {
        sets: Vec::new(),
        made: Vec::new(),
        index: HashMap::new(),
        by_level: Vec::new(),
    };
    let mut base: Vec<(u64, Bits, AlgebraExpr)> = vec![
        (m.constant_value, Bits::zeros(w), E::Empty),
        (m.constant_value, Bits::ones(w), E::Full),
    ];
    for (i, h) in table.hyps().iter().enumerate() {
        base.push((m.hyp_value, h.clone(), E::Hyp(i)));
    }
    let mut best = f64::INFINITY;
    for g in 0..=budget {
        let gl = g as usize;
        for (v, b, e) in &base {
            if *v == g {
                lv.add(b.clone(), Made::Base(e.clone()), gl)?;
            }
        }
        loop {
            let before = lv.sets.len();
            for a in 0..=gl {
                for b in a..=gl {
                    let ua = m.union.apply(a as u64, b as u64) == g;
                    let ia = m.inter.apply(a as u64, b as u64) == g;
                    if !ua && !ia {
                        continue;
                    }
                    let la: Vec<usize> = lv.level(a).to_vec();
                    let lb: Vec<usize> = lv.level(b).to_vec();
                    for &x in &la {
                        for &y in &lb {
                            if ua {
                                let s = lv.sets[x].or(&lv.sets[y]);
                                lv.add(s, Made::Union(x, y), gl)?;
                            }
                            if ia {
                                let s = lv.sets[x].and(&lv.sets[y]);
                                lv.add(s, Made::Inter(x, y), gl)?;
                            }
                        }
                    }
                }
                if a as u64 + m.complement_inc == g {
                    for x in lv.level(a).to_vec() {
                        let s = lv.sets[x].not();
                        lv.add(s, Made::Not(x), gl)?;
                    }
                }
            }
            if lv.sets.len() == before {
                break;
            }
        }
        let hit = lv
            .level(gl)
            .iter()
            .map(|&i| (i, loss(&lv.sets[i])))
            .inspect(|&(_, l)| best = best.min(l))
            .filter(|&(_, l)| l <= eps + tol)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((i, l)) = hit {
            return Ok(MinGamma::Exact {
                gamma: g,
                loss: l,
                expr: lv.expr(i),
            });
        }
        if Some(lv.sets.len()) == full_count {
            return Ok(MinGamma::AboveBudget {
                budget,
                best_loss: best,
                saturated: true,
            });
        }
    }
    Ok(MinGamma::AboveBudget {
        budget,
        best_loss: best,
        saturated: false,
    })
}
