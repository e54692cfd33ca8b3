//! Builders for the named instances and the trichotomy evidence classifier.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::instance::{in_algebra, AtomTable, Distribution, Hypothesis, Instance};
use crate::minimax;
use crate::oracle::{self, MinDepth};
use crate::tree::DecisionTree;

/// `X = {a, b}`, `H = {X}`, `c = {a}`, uniform.
pub fn two_point() -> Instance {
    Instance::new(
        Bits::from_indices(2, [0]),
        vec![Hypothesis {
            name: "X".into(),
            bits: Bits::ones(2),
        }],
        Distribution::uniform(2),
    )
    .expect("two-point instance is valid")
}

/// Points `0..=n`, `c = {1..n}`, `H = {{i}}`, `P(0) = 1/2`, `P(i) = 1/(2n)`.
pub fn pn_family(n: usize) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Invalid("pn_family needs n ≥ 1".into()));
    }
    let hyps = singleton_hyps(n + 1);
    let mut w = vec![1.0 / (2.0 * n as f64); n + 1];
    w[0] = 0.5;
    Instance::new(concept_positive(n + 1), hyps, Distribution::new(w)?)
}

/// The distribution `P_m` of [`pn_family`] on a domain of `len ≥ m + 1` points.
pub fn pn_distribution(m: usize, len: usize) -> Result<Distribution> {
    if m == 0 || len < m + 1 {
        return Err(Error::Invalid(format!(
            "P_{m} needs at least {} points",
            m + 1
        )));
    }
    let mut w = vec![0.0; len];
    w[0] = 0.5;
    for x in w.iter_mut().take(m + 1).skip(1) {
        *x = 1.0 / (2.0 * m as f64);
    }
    Distribution::new(w)
}

fn singleton_hyps(len: usize) -> Vec<Hypothesis> {
    (1..len)
        .map(|i| Hypothesis {
            name: format!("{{{i}}}"),
            bits: Bits::from_indices(len, [i]),
        })
        .collect()
}

fn concept_positive(len: usize) -> Bits {
    Bits::from_indices(len, 1..len)
}

/// `c = {0}`, `H = {{1..m} : 1 ≤ m ≤ N}`, `P(0) = 1/2`, `P(x) = 2^{-(x+1)}`
/// for `1 ≤ x ≤ N`; the remaining `2^{-(N+1)}` sits on a tail point `N + 1`
/// labeled 0.
pub fn geometric_series(n: usize) -> Result<Instance> {
    if n == 0 || n > 50 {
        return Err(Error::Invalid(format!(
            "geometric_series needs 1 ≤ N ≤ 50, got {n}"
        )));
    }
    let len = n + 2;
    let mut w: Vec<f64> = (0..len).map(|x| 0.5f64.powi(x as i32 + 1)).collect();
    w[0] = 0.5;
    w[n + 1] = 0.5f64.powi(n as i32 + 1);
    let hyps = (1..=n)
        .map(|m| Hypothesis {
            name: format!("{{1..{m}}}"),
            bits: Bits::from_indices(len, 1..=m),
        })
        .collect();
    Instance::new(Bits::from_indices(len, [0]), hyps, Distribution::new(w)?)
}

/// Thresholds `{x ≥ t}` on `0..n`, concept `{x ≥ ⌈n/2⌉}` (a member of `H`).
pub fn halfline(n: usize) -> Result<Instance> {
    if n < 2 {
        return Err(Error::Invalid("halfline needs n ≥ 2".into()));
    }
    let hyps = (1..n)
        .map(|t| Hypothesis {
            name: format!("x>={t}"),
            bits: Bits::from_indices(n, t..n),
        })
        .collect();
    Instance::new(
        Bits::from_indices(n, n.div_ceil(2)..n),
        hyps,
        Distribution::uniform(n),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Rate {
    /// `r(ε) = ⌈log₂(1/ε)⌉`
    CeilLog2,
    Constant(usize),
}

impl Rate {
    pub fn depth(self, eps: f64) -> usize {
        match self {
            Rate::Constant(d) => d,
            Rate::CeilLog2 => {
                let mut k = 0;
                while 0.5f64.powi(k as i32) > eps {
                    k += 1;
                }
                k
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureTerm {
    pub n: usize,
    pub epsilon: f64,
    pub rate_depth: usize,
    /// Size `m` of the component `P_m`.
    pub size: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug)]
pub struct AdversarialMixture {
    pub instance: Instance,
    pub terms: Vec<MixtureTerm>,
}

impl AdversarialMixture {
    pub fn component(&self, term: usize) -> Result<Distribution> {
        pn_distribution(self.terms[term].size, self.instance.n_points())
    }
}

/// `P* ∝ Σ_{n ≤ terms} 2^{-n} P_{m_n}` over the singleton-chain domain, where
/// `ε_n = 2^{-n}(1/2 − γ)`, `d_n = r(ε_n)` and `m_n = ⌈(d_n + 1)/(2γ)⌉`, so
/// that `P_{m_n}` needs depth above `d_n` to reach loss `1/2 − γ`.
pub fn adversarial_mixture(rate: Rate, gamma: f64, terms: usize) -> Result<AdversarialMixture> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Invalid(format!(
            "gamma must lie in (0, 1/2), got {gamma}"
        )));
    }
    if terms == 0 || terms > 20 {
        return Err(Error::Invalid(
            "adversarial_mixture needs 1..=20 terms".into(),
        ));
    }
    let mut out = Vec::with_capacity(terms);
    for n in 1..=terms {
        let eps = 0.5f64.powi(n as i32) * (0.5 - gamma);
        let d = rate.depth(eps);
        let size = (((d + 1) as f64) / (2.0 * gamma) - 1e-9).ceil().max(1.0) as usize;
        out.push(MixtureTerm {
            n,
            epsilon: eps,
            rate_depth: d,
            size,
            coefficient: 0.5f64.powi(n as i32),
        });
    }
    let len = out.iter().map(|t| t.size).max().unwrap_or(1) + 1;
    let mut masses = vec![0.0; len];
    for t in &out {
        let p = pn_distribution(t.size, len)?;
        for (m, w) in masses.iter_mut().zip(p.weights()) {
            *m += t.coefficient * w;
        }
    }
    let dist = Distribution::from_masses(masses)?;
    let instance = Instance::new(concept_positive(len), singleton_hyps(len), dist)?;
    Ok(AdversarialMixture {
        instance,
        terms: out,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DiskClass {
    /// Halfplanes `±y ≤ t` only.
    AxisOnly,
    /// Halfplanes `⟨u_θ, x⟩ ≤ t` for `θ = jπ/k`, `0 ≤ j < 2k`.
    AllAngles(usize),
    /// As `AllAngles(k)`, with points at distance in `(1, 1 + μ]` removed.
    Margin { mu: f64, k: usize },
}

/// Half-width of the square grid window.
pub const DISK_EXTENT: f64 = 4.0 / 3.0;

/// Unit disk on a `resolution × resolution` grid of cell centers over
/// `[−4/3, 4/3]²`, uniform over the retained cells. `shell = Some(α)` keeps
/// only cells with `1 − α ≤ ‖x‖ ≤ 1 + α`. Offsets run over grid-line values.
pub fn disk_grid(resolution: usize, class: DiskClass, shell: Option<f64>) -> Result<Instance> {
    if resolution == 0 || !resolution.is_multiple_of(8) || resolution > 512 {
        return Err(Error::Invalid(format!(
            "resolution must be a positive multiple of 8 up to 512, got {resolution}"
        )));
    }
    let dirs = match class {
        DiskClass::AxisOnly => vec![
            ("y".to_string(), [0.0, 1.0]),
            ("-y".to_string(), [0.0, -1.0]),
        ],
        DiskClass::AllAngles(k) | DiskClass::Margin { k, .. } => {
            if k == 0 {
                return Err(Error::Invalid("angle count k must be ≥ 1".into()));
            }
            (0..2 * k).map(|j| angle_dir(j, k)).collect()
        }
    };
    if let DiskClass::Margin { mu, .. } = class {
        if !(mu > 0.0 && mu < DISK_EXTENT - 1.0) {
            return Err(Error::Invalid(format!(
                "margin μ must lie in (0, 1/3), got {mu}"
            )));
        }
    }
    if let Some(a) = shell {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Invalid(format!(
                "shell width must lie in (0, 1), got {a}"
            )));
        }
    }
    let w = 2.0 * DISK_EXTENT / resolution as f64;
    let mut coords = Vec::new();
    for j in 0..resolution {
        for i in 0..resolution {
            let p = [
                -DISK_EXTENT + (i as f64 + 0.5) * w,
                -DISK_EXTENT + (j as f64 + 0.5) * w,
            ];
            let r = p[0].hypot(p[1]);
            if let DiskClass::Margin { mu, .. } = class {
                if r > 1.0 && r <= 1.0 + mu {
                    continue;
                }
            }
            if let Some(a) = shell {
                if r < 1.0 - a || r > 1.0 + a {
                    continue;
                }
            }
            coords.push(p);
        }
    }
    if coords.is_empty() {
        return Err(Error::Invalid("no grid cells retained".into()));
    }
    let n = coords.len();
    let concept = Bits::from_bools(coords.iter().map(|p| p[0].hypot(p[1]) <= 1.0));
    let mut hyps = Vec::new();
    for (name, u) in &dirs {
        for t in 0..=resolution {
            let off = -DISK_EXTENT + t as f64 * w;
            hyps.push(Hypothesis {
                name: format!("<{name},x> <= {off:.4}"),
                bits: halfplane(&coords, *u, off),
            });
        }
    }
    Instance::new(concept, hyps, Distribution::uniform(n))?.with_coords(coords)
}

fn angle_dir(j: usize, k: usize) -> (String, [f64; 2]) {
    let theta = j as f64 * PI / k as f64;
    (format!("u({j}pi/{k})"), [theta.cos(), theta.sin()])
}

fn halfplane(coords: &[[f64; 2]], u: [f64; 2], t: f64) -> Bits {
    Bits::from_bools(coords.iter().map(|p| u[0] * p[0] + u[1] * p[1] <= t))
}

/// Path tree intersecting the halfplanes `⟨u, x⟩ ≤ 1` of a regular polygon
/// with `sides` facets circumscribing the unit circle. Needs a disk instance
/// whose class contains those directions.
pub fn polygon_tree(inst: &Instance, sides: usize) -> Result<DecisionTree> {
    let coords = inst
        .coords()
        .ok_or_else(|| Error::Invalid("instance has no coordinates".into()))?;
    if sides < 3 {
        return Err(Error::Invalid("a polygon needs at least 3 sides".into()));
    }
    let mut tree = DecisionTree::leaf(true);
    for j in (0..sides).rev() {
        let theta = 2.0 * PI * j as f64 / sides as f64;
        let bits = halfplane(coords, [theta.cos(), theta.sin()], 1.0);
        let h = inst
            .hypotheses()
            .iter()
            .position(|h| h.bits == bits)
            .ok_or_else(|| Error::Invalid(format!("facet direction {j} of {sides} not in H")))?;
        tree = DecisionTree::split(h, tree, DecisionTree::leaf(false));
    }
    Ok(tree)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Recipe {
    TwoPoint,
    PnFamily,
    GeometricSeries,
    Halfline,
}

impl Recipe {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "two-point" | "two_point" => Ok(Recipe::TwoPoint),
            "pn-family" | "pn_family" => Ok(Recipe::PnFamily),
            "geometric-series" | "geometric_series" => Ok(Recipe::GeometricSeries),
            "halfline" => Ok(Recipe::Halfline),
            other => Err(Error::Invalid(format!("unknown family {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Recipe::TwoPoint => "two_point",
            Recipe::PnFamily => "pn_family",
            Recipe::GeometricSeries => "geometric_series",
            Recipe::Halfline => "halfline",
        }
    }

    pub fn build(self, param: usize) -> Result<Instance> {
        match self {
            Recipe::TwoPoint => Ok(two_point()),
            Recipe::PnFamily => pn_family(param),
            Recipe::GeometricSeries => geometric_series(param),
            Recipe::Halfline => halfline(param),
        }
    }
}

/// A finite slice of an instance family sharing one hypothesis convention.
#[derive(Clone, Debug)]
pub struct FamilyDescriptor {
    pub name: String,
    pub recipe: Recipe,
    pub params: Vec<usize>,
}

impl FamilyDescriptor {
    pub fn new(recipe: Recipe, params: impl IntoIterator<Item = usize>) -> Self {
        let params: Vec<usize> = params.into_iter().collect();
        let name = recipe.name().to_string();
        FamilyDescriptor {
            name,
            recipe,
            params,
        }
    }

    pub fn members(&self) -> Result<Vec<(String, Instance)>> {
        self.params
            .iter()
            .map(|&p| Ok((format!("{}({p})", self.name), self.recipe.build(p)?)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Verdict {
    /// Some member's concept is not a union of atoms.
    Case1Evidence {
        member: String,
    },
    /// Every member is approximable but no depth up to the cap makes the game value small uniformly.
    Case2Evidence,
    /// Depth `d` wins the game with margin `γ` on every member.
    Case3Evidence {
        d: usize,
    },
    Inconclusive {
        reason: String,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberRow {
    pub name: String,
    pub n_points: usize,
    pub in_algebra: bool,
    /// Minimal depth for loss `1/2 − γ` under the member's own distribution.
    pub own_depth: Option<usize>,
    /// Smallest `d ≤ d_max` with game value `≤ 1/2 − γ`.
    pub game_depth: Option<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub members: Vec<MemberRow>,
    /// `(d, max over the family of the game value)`.
    pub table: Vec<(usize, f64)>,
}

/// Finite evidence for which of the three cases a family falls into.
pub fn trichotomy_classify(
    members: &[(String, Instance)],
    gamma: f64,
    d_max: usize,
    budget: usize,
) -> Result<Classification> {
    if members.is_empty() {
        return Err(Error::Invalid("family is empty".into()));
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Invalid(format!(
            "gamma must lie in (0, 1/2), got {gamma}"
        )));
    }
    let target = 0.5 - gamma;
    let rows: Vec<Result<MemberRow>> = members
        .par_iter()
        .map(|(name, inst)| {
            let alg = in_algebra(inst);
            let cap = AtomTable::new(inst).n_atoms().max(d_max);
            let own = match oracle::min_depth(inst, inst.dist(), target, cap)? {
                MinDepth::Exact { depth, .. } => Some(depth),
                MinDepth::AboveCap { .. } => None,
            };
            let mut values = Vec::new();
            let mut game_depth = None;
            if alg {
                let cfg = minimax::GameConfig {
                    behavior_cap: budget,
                    ..minimax::GameConfig::default()
                };
                for d in 0..=d_max {
                    let v = minimax::game_value_with(inst, d, &cfg)?.value;
                    values.push(v);
                    if v <= target + cfg.tol && game_depth.is_none() {
                        game_depth = Some(d);
                    }
                }
            }
            Ok(MemberRow {
                name: name.clone(),
                n_points: inst.n_points(),
                in_algebra: alg,
                own_depth: own,
                game_depth,
                values,
            })
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        match r {
            Ok(row) => out.push(row),
            Err(e) if e.is_budget() => {
                return Ok(Classification {
                    verdict: Verdict::Inconclusive {
                        reason: e.to_string(),
                    },
                    members: out,
                    table: Vec::new(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(m) = out.iter().find(|m| !m.in_algebra) {
        let member = m.name.clone();
        return Ok(Classification {
            verdict: Verdict::Case1Evidence { member },
            members: out,
            table: Vec::new(),
        });
    }
    let table: Vec<(usize, f64)> = (0..=d_max)
        .map(|d| {
            let v = out
                .iter()
                .map(|m| m.values[d])
                .fold(f64::NEG_INFINITY, f64::max);
            (d, v)
        })
        .collect();
    let tol = minimax::GameConfig::default().tol;
    let verdict = match table.iter().find(|(_, v)| *v <= target + tol) {
        Some(&(d, _)) => Verdict::Case3Evidence { d },
        None => Verdict::Case2Evidence,
    };
    Ok(Classification {
        verdict,
        members: out,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{atoms, loss};

    #[test]
    fn two_point_shape() {
        let tp = two_point();
        assert_eq!(tp.n_points(), 2);
        assert_eq!(tp.hypotheses().len(), 1);
        assert_eq!(tp.hypotheses()[0].bits, Bits::ones(2));
    }

    #[test]
    fn geometric_series_six_weights() {
        let g = geometric_series(6).unwrap();
        let expect = [
            0.5,
            0.25,
            0.125,
            1.0 / 16.0,
            1.0 / 32.0,
            1.0 / 64.0,
            1.0 / 128.0,
            1.0 / 128.0,
        ];
        assert_eq!(g.dist().weights(), &expect);
        assert!(g.dist().is_dyadic());
        assert!(!g.concept().get(7));
    }

    #[test]
    fn mixture_components_match_brief() {
        let m = adversarial_mixture(Rate::CeilLog2, 0.25, 3).unwrap();
        let d: Vec<_> = m.terms.iter().map(|t| t.rate_depth).collect();
        let s: Vec<_> = m.terms.iter().map(|t| t.size).collect();
        assert_eq!(d, vec![3, 4, 5]);
        assert_eq!(s, vec![8, 10, 12]);
        assert_eq!(m.instance.n_points(), 13);
        assert!((m.instance.dist().weight(0) - 0.5).abs() < 1e-15);
        let w = m.component(0).unwrap();
        assert_eq!(w.weight(8), 1.0 / 16.0);
        assert_eq!(w.weight(9), 0.0);
    }

    #[test]
    fn rate_ceil_log2() {
        assert_eq!(Rate::CeilLog2.depth(0.125), 3);
        assert_eq!(Rate::CeilLog2.depth(0.1), 4);
        assert_eq!(Rate::CeilLog2.depth(1.0), 0);
    }

    #[test]
    fn disk_grid_margin_octagon_is_exact() {
        let inst = disk_grid(32, DiskClass::Margin { mu: 0.1, k: 8 }, None).unwrap();
        let t = polygon_tree(&inst, 8).unwrap();
        assert_eq!(t.depth(), 8);
        assert_eq!(loss(&t, &inst, inst.dist()).unwrap(), 0.0);
    }

    #[test]
    fn disk_grid_axis_only_has_row_atoms() {
        let inst = disk_grid(16, DiskClass::AxisOnly, None).unwrap();
        assert_eq!(atoms(&inst).len(), 16);
        assert!(disk_grid(12, DiskClass::AxisOnly, None).is_err());
    }

    #[test]
    fn halfline_concept_in_class() {
        let h = halfline(6).unwrap();
        assert!(h.concept_in_class().is_some());
    }

    #[test]
    fn classify_two_point_is_case_one() {
        let fam = vec![("two".to_string(), two_point())];
        let c = trichotomy_classify(&fam, 0.25, 2, 1 << 16).unwrap();
        assert!(matches!(c.verdict, Verdict::Case1Evidence { .. }));
    }

    #[test]
    fn classify_concept_in_class_is_case_three() {
        let fam = vec![("half".to_string(), halfline(5).unwrap())];
        let c = trichotomy_classify(&fam, 0.25, 2, 1 << 16).unwrap();
        assert_eq!(c.verdict, Verdict::Case3Evidence { d: 1 });
    }

    #[test]
    fn classify_pn_range_is_case_two() {
        let fam = FamilyDescriptor::new(Recipe::PnFamily, 2..=8)
            .members()
            .unwrap();
        let c = trichotomy_classify(&fam, 0.25, 3, 1 << 16).unwrap();
        assert_eq!(c.verdict, Verdict::Case2Evidence);
        for (row, n) in c.members.iter().zip(2usize..) {
            assert_eq!(row.own_depth, Some(n.div_ceil(2)), "{}", row.name);
        }
    }
}
