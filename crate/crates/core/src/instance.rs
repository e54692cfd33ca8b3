//! Finite weighted domains: points `0..n`, a distribution over them, a target
//! concept and a hypothesis class, every hypothesis materialized as its extension.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::tree::DecisionTree;

/// Tolerance on normalization and loss comparisons for non-dyadic weights.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Largest dyadic exponent for which sums stay exact in `f64` arithmetic.
const DYADIC_EXP: i32 = 52;

/// Splits `w ∈ [0, 1]` into `(m, k)` with `w = m / 2^k`, `m` odd or zero.
pub fn dyadic_parts(w: f64) -> Option<(u64, u32)> {
    if !(0.0..=1.0).contains(&w) {
        return None;
    }
    let scaled = w * 2f64.powi(DYADIC_EXP);
    if scaled.fract() != 0.0 {
        return None;
    }
    let mut m = scaled as u64;
    let mut k = DYADIC_EXP as u32;
    if m == 0 {
        return Some((0, 0));
    }
    while m.is_multiple_of(2) && k > 0 {
        m /= 2;
        k -= 1;
    }
    Some((m, k))
}

/// Parses `"a/2^k"` (or a plain decimal) into a weight.
pub fn parse_weight(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: u64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad weight numerator in {s:?}")))?;
        let exp = den
            .trim()
            .strip_prefix("2^")
            .and_then(|e| e.parse::<u32>().ok())
            .ok_or_else(|| Error::Invalid(format!("weight denominator must be 2^k in {s:?}")))?;
        if exp > DYADIC_EXP as u32 {
            return Err(Error::Invalid(format!(
                "weight exponent too large in {s:?}"
            )));
        }
        Ok(num as f64 / 2f64.powi(exp as i32))
    } else {
        s.parse()
            .map_err(|_| Error::Invalid(format!("bad weight {s:?}")))
    }
}

/// A probability distribution over point indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates nonnegativity and normalization. Dyadic weights must sum to
    /// exactly 1; others within [`WEIGHT_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Invalid("distribution over an empty domain".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Invalid(format!(
                "weight {w} is not a nonnegative number"
            )));
        }
        let d = Distribution { weights };
        let sum: f64 = d.weights.iter().sum();
        let ok = if d.is_dyadic() {
            sum == 1.0
        } else {
            (sum - 1.0).abs() <= WEIGHT_TOL
        };
        if !ok {
            return Err(Error::Invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(d)
    }

    /// Normalizes nonnegative masses.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyCondition);
        }
        if masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(Error::Invalid("negative or non-finite mass".into()));
        }
        Ok(Distribution {
            weights: masses.into_iter().map(|m| m / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn mass(&self, set: &Bits) -> f64 {
        set.weighted(&self.weights)
    }

    pub fn support(&self) -> Bits {
        Bits::from_bools(self.weights.iter().map(|w| *w > 0.0))
    }

    /// Every weight is `m / 2^k` with `k ≤ 52`, so mass sums are exact.
    pub fn is_dyadic(&self) -> bool {
        self.weights.iter().all(|w| dyadic_parts(*w).is_some())
    }

    /// Slack for `loss ≤ ε` tests: zero when exact, [`WEIGHT_TOL`] otherwise.
    pub fn tolerance(&self) -> f64 {
        if self.is_dyadic() {
            0.0
        } else {
            WEIGHT_TOL
        }
    }

    /// Renormalized restriction to `subset`.
    pub fn conditional(&self, subset: &Bits) -> Result<Distribution> {
        self.check_width(subset)?;
        let m = self.mass(subset);
        if !(m > 0.0) {
            return Err(Error::EmptyCondition);
        }
        let weights = (0..self.len())
            .map(|i| {
                if subset.get(i) {
                    self.weights[i] / m
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Distribution { weights })
    }

    /// Rescales each concept class to mass 1/2.
    pub fn balanced(&self, concept: &Bits) -> Result<Distribution> {
        self.check_width(concept)?;
        let pos = self.mass(concept);
        let neg = self.mass(&concept.not());
        if !(pos > 0.0) {
            return Err(Error::BalanceUndefined { missing_class: 1 });
        }
        if !(neg > 0.0) {
            return Err(Error::BalanceUndefined { missing_class: 0 });
        }
        let weights = (0..self.len())
            .map(|i| {
                let w = self.weights[i];
                if concept.get(i) {
                    w / (2.0 * pos)
                } else {
                    w / (2.0 * neg)
                }
            })
            .collect();
        Ok(Distribution { weights })
    }

    fn check_width(&self, b: &Bits) -> Result<()> {
        if b.len() != self.len() {
            return Err(Error::Invalid(format!(
                "vector has length {} but the domain has {} points",
                b.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub name: String,
    pub bits: Bits,
}

/// `(X, P, c, H)` on a finite domain.
#[derive(Clone, Debug)]
pub struct Instance {
    concept: Bits,
    hypotheses: Vec<Hypothesis>,
    dist: Distribution,
    coords: Option<Vec<[f64; 2]>>,
}

impl Instance {
    /// Builds an instance, dropping hypotheses whose extension repeats an earlier one.
    pub fn new(concept: Bits, hypotheses: Vec<Hypothesis>, dist: Distribution) -> Result<Self> {
        let n = concept.len();
        if n == 0 {
            return Err(Error::Invalid("empty domain".into()));
        }
        if dist.len() != n {
            return Err(Error::Invalid(format!(
                "distribution has {} weights for {n} points",
                dist.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        let mut kept = Vec::with_capacity(hypotheses.len());
        for h in hypotheses {
            if h.bits.len() != n {
                return Err(Error::Invalid(format!(
                    "hypothesis {:?} has length {}, expected {n}",
                    h.name,
                    h.bits.len()
                )));
            }
            if seen.insert(h.bits.clone()) {
                kept.push(h);
            }
        }
        Ok(Instance {
            concept,
            hypotheses: kept,
            dist,
            coords: None,
        })
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.n_points() {
            return Err(Error::Invalid(
                "coordinate count does not match domain".into(),
            ));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    /// Same `(X, c, H)` under a different distribution.
    pub fn with_distribution(&self, dist: Distribution) -> Result<Self> {
        if dist.len() != self.n_points() {
            return Err(Error::Invalid(
                "distribution width does not match domain".into(),
            ));
        }
        let mut i = self.clone();
        i.dist = dist;
        Ok(i)
    }

    pub fn n_points(&self) -> usize {
        self.concept.len()
    }

    pub fn concept(&self) -> &Bits {
        &self.concept
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn hypothesis(&self, i: usize) -> Result<&Hypothesis> {
        self.hypotheses.get(i).ok_or_else(|| {
            Error::Structural(format!(
                "hypothesis index {i} out of range (class has {})",
                self.hypotheses.len()
            ))
        })
    }

    pub fn dist(&self) -> &Distribution {
        &self.dist
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// Index of a hypothesis with the same extension as the concept, if any.
    pub fn concept_in_class(&self) -> Option<usize> {
        self.hypotheses.iter().position(|h| h.bits == self.concept)
    }

    pub fn balanced(&self, dist: &Distribution) -> Result<Distribution> {
        dist.balanced(&self.concept)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: InstanceFile = serde_json::from_str(text)?;
        f.into_instance()
    }

    pub fn to_json(&self) -> String {
        let f = InstanceFile::from_instance(self);
        serde_json::to_string_pretty(&f).expect("instance serializes")
    }
}

/// `P(T △ c)`.
pub fn loss(tree: &DecisionTree, inst: &Instance, dist: &Distribution) -> Result<f64> {
    if dist.len() != inst.n_points() {
        return Err(Error::Invalid(
            "distribution width does not match domain".into(),
        ));
    }
    let b = tree.behavior(inst)?;
    Ok(dist.mass(&b.xor(inst.concept())))
}

pub fn balanced(dist: &Distribution, inst: &Instance) -> Result<Distribution> {
    inst.balanced(dist)
}

pub fn conditional(dist: &Distribution, subset: &Bits) -> Result<Distribution> {
    dist.conditional(subset)
}

/// Classes of points that no hypothesis separates, ordered by smallest member.
pub fn atoms(inst: &Instance) -> Vec<Vec<usize>> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let hs = inst.hypotheses();
    for x in 0..inst.n_points() {
        let mut sig = vec![0u64; hs.len().div_ceil(64)];
        for (j, h) in hs.iter().enumerate() {
            if h.bits.get(x) {
                sig[j / 64] |= 1 << (j % 64);
            }
        }
        match index.get(&sig) {
            Some(&a) => out[a].push(x),
            None => {
                index.insert(sig, out.len());
                out.push(vec![x]);
            }
        }
    }
    out
}

/// The concept is constant on every atom, i.e. it lies in the algebra generated by H.
pub fn in_algebra(inst: &Instance) -> bool {
    atoms(inst).iter().all(|a| {
        let first = inst.concept().get(a[0]);
        a.iter().all(|&x| inst.concept().get(x) == first)
    })
}

/// The atom partition with hypotheses re-expressed over atoms.
#[derive(Clone, Debug)]
pub struct AtomTable {
    atoms: Vec<Vec<usize>>,
    point_atom: Vec<usize>,
    hyps: Vec<Bits>,
}

impl AtomTable {
    pub fn new(inst: &Instance) -> Self {
        let atoms = atoms(inst);
        let mut point_atom = vec![0; inst.n_points()];
        for (a, pts) in atoms.iter().enumerate() {
            for &x in pts {
                point_atom[x] = a;
            }
        }
        let hyps = inst
            .hypotheses()
            .iter()
            .map(|h| Bits::from_bools(atoms.iter().map(|pts| h.bits.get(pts[0]))))
            .collect();
        AtomTable {
            atoms,
            point_atom,
            hyps,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Vec<usize>] {
        &self.atoms
    }

    pub fn atom_of(&self, point: usize) -> usize {
        self.point_atom[point]
    }

    /// Extensions of the hypotheses over atoms, same indexing as the instance.
    pub fn hyps(&self) -> &[Bits] {
        &self.hyps
    }

    /// Per-atom masses of the positive and negative class.
    pub fn class_masses(&self, concept: &Bits, dist: &Distribution) -> (Vec<f64>, Vec<f64>) {
        let mut pos = vec![0.0; self.n_atoms()];
        let mut neg = vec![0.0; self.n_atoms()];
        for (a, pts) in self.atoms.iter().enumerate() {
            for &x in pts {
                if concept.get(x) {
                    pos[a] += dist.weight(x);
                } else {
                    neg[a] += dist.weight(x);
                }
            }
        }
        (pos, neg)
    }

    /// Expands an atom-level labeling to points.
    pub fn lift(&self, atom_bits: &Bits) -> Bits {
        Bits::from_bools(self.point_atom.iter().map(|&a| atom_bits.get(a)))
    }

    /// Atoms fully contained in `points`. Exact when `points` is a union of atoms.
    pub fn project(&self, points: &Bits) -> Bits {
        Bits::from_bools(
            self.atoms
                .iter()
                .map(|pts| pts.iter().all(|&x| points.get(x))),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcDim {
    Exact(usize),
    AtLeast(usize),
}

/// VC dimension of `(X, H)` by exhaustive shattering search, stopping at `cap`.
pub fn vc_dimension(inst: &Instance, cap: usize) -> VcDim {
    // Two points of one atom are never shattered together, so atoms suffice.
    let table = AtomTable::new(inst);
    let hyps = table.hyps();
    if cap == 0 || hyps.is_empty() {
        return if cap == 0 && !hyps.is_empty() {
            VcDim::AtLeast(0)
        } else {
            VcDim::Exact(0)
        };
    }
    let n = table.n_atoms();
    let mut best = 0;
    let mut stack: Vec<usize> = Vec::new();
    fn shattered(hyps: &[Bits], set: &[usize]) -> bool {
        let k = set.len();
        if hyps.len() < (1usize << k) {
            return false;
        }
        let mut seen = vec![false; 1 << k];
        let mut count = 0;
        for h in hyps {
            let mut p = 0usize;
            for (i, &a) in set.iter().enumerate() {
                if h.get(a) {
                    p |= 1 << i;
                }
            }
            if !seen[p] {
                seen[p] = true;
                count += 1;
                if count == seen.len() {
                    return true;
                }
            }
        }
        false
    }
    fn extend(
        hyps: &[Bits],
        n: usize,
        cap: usize,
        start: usize,
        stack: &mut Vec<usize>,
        best: &mut usize,
    ) -> bool {
        for a in start..n {
            stack.push(a);
            if shattered(hyps, stack) {
                *best = (*best).max(stack.len());
                if *best >= cap {
                    stack.pop();
                    return true;
                }
                if extend(hyps, n, cap, a + 1, stack, best) {
                    stack.pop();
                    return true;
                }
            }
            stack.pop();
        }
        false
    }
    if extend(hyps, n, cap, 0, &mut stack, &mut best) {
        VcDim::AtLeast(cap)
    } else {
        VcDim::Exact(best)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightRepr {
    Num(f64),
    Text(String),
}

#[derive(Serialize, Deserialize)]
struct HypFile {
    name: String,
    bits: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n: usize,
    weights: Vec<WeightRepr>,
    concept: Vec<u8>,
    hypotheses: Vec<HypFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<[f64; 2]>>,
}

fn bits_from_u8(v: &[u8], n: usize, what: &str) -> Result<Bits> {
    if v.len() != n {
        return Err(Error::Invalid(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    if let Some(b) = v.iter().find(|b| **b > 1) {
        return Err(Error::Invalid(format!(
            "{what} contains {b}; only 0/1 allowed"
        )));
    }
    Ok(Bits::from_bools(v.iter().map(|b| *b == 1)))
}

impl InstanceFile {
    fn into_instance(self) -> Result<Instance> {
        let n = self.n;
        if self.weights.len() != n {
            return Err(Error::Invalid(format!(
                "{} weights for n = {n}",
                self.weights.len()
            )));
        }
        let weights = self
            .weights
            .iter()
            .map(|w| match w {
                WeightRepr::Num(x) => Ok(*x),
                WeightRepr::Text(s) => parse_weight(s),
            })
            .collect::<Result<Vec<_>>>()?;
        let concept = bits_from_u8(&self.concept, n, "concept")?;
        let hyps = self
            .hypotheses
            .into_iter()
            .map(|h| {
                let bits = bits_from_u8(&h.bits, n, &format!("hypothesis {:?}", h.name))?;
                Ok(Hypothesis { name: h.name, bits })
            })
            .collect::<Result<Vec<_>>>()?;
        let inst = Instance::new(concept, hyps, Distribution::new(weights)?)?;
        match self.coords {
            Some(c) => inst.with_coords(c),
            None => Ok(inst),
        }
    }

    fn from_instance(inst: &Instance) -> Self {
        let dyadic = inst.dist().is_dyadic();
        let weights = inst
            .dist()
            .weights()
            .iter()
            .map(|&w| match dyadic_parts(w) {
                Some((m, k)) if dyadic => WeightRepr::Text(format!("{m}/2^{k}")),
                _ => WeightRepr::Num(w),
            })
            .collect();
        InstanceFile {
            n: inst.n_points(),
            weights,
            concept: inst.concept().to_u8(),
            hypotheses: inst
                .hypotheses()
                .iter()
                .map(|h| HypFile {
                    name: h.name.clone(),
                    bits: h.bits.to_u8(),
                })
                .collect(),
            coords: inst.coords.clone(),
        }
    }
}
