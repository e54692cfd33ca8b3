//! Level-by-level boosting of depth-≤d weak trees (TopDownLBL).
//!
//! Each phase replaces every impure leaf of positive mass by the weak tree
//! learned on the balanced conditional distribution at that leaf, then
//! relabels all leaves by conditional majority. With advantage `γ` at every
//! leaf the surrogate `H = Σ_z √(P(z, c=1) P(z, c=0))` shrinks by `1 − 2γ²`
//! per phase.

use std::fmt::Write;

use serde::Serialize;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::instance::{loss, AtomTable, Distribution, Instance, WEIGHT_TOL};
use crate::oracle::{SplitSearch, DEFAULT_SEARCH_BUDGET};
use crate::tree::DecisionTree;

/// Per-phase decay slack for non-dyadic distributions.
pub const DECAY_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WeakMode {
    ExactSearch,
    GreedyStump,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoostConfig {
    pub gamma: f64,
    pub weak_depth: usize,
    pub epsilon: f64,
    pub max_phases: usize,
    pub weak_mode: WeakMode,
}

impl BoostConfig {
    /// Defaults `max_phases` to the certified phase count.
    pub fn new(gamma: f64, weak_depth: usize, epsilon: f64) -> Result<Self> {
        let cfg = BoostConfig {
            gamma,
            weak_depth,
            epsilon,
            max_phases: 0,
            weak_mode: WeakMode::ExactSearch,
        };
        cfg.validate()?;
        Ok(BoostConfig {
            max_phases: required_phases(gamma, epsilon).max(1),
            ..cfg
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(Error::Invalid(format!(
                "gamma must lie in (0, 1/2), got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) && self.epsilon != 0.0 {
            return Err(Error::Invalid(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.weak_depth == 0 {
            return Err(Error::Invalid("weak depth must be ≥ 1".into()));
        }
        if self.weak_mode == WeakMode::GreedyStump && self.weak_depth != 1 {
            return Err(Error::Invalid(
                "greedy stump mode requires weak depth 1".into(),
            ));
        }
        Ok(())
    }
}

/// `⌈ln(1/(2ε)) / (2γ²)⌉`, the phase count after which a certified run has
/// surrogate `≤ ε`. Zero when `ε ≥ 1/2`.
pub fn required_phases(gamma: f64, eps: f64) -> usize {
    if eps >= 0.5 {
        return 0;
    }
    let x = (1.0 / (2.0 * eps)).ln() / (2.0 * gamma * gamma);
    let r = x.round();
    // Snap values that are integers up to rounding noise.
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakResult {
    #[serde(skip)]
    pub tree: DecisionTree,
    pub error: f64,
}

/// Best depth-≤d tree for a balanced leaf distribution, with its error.
pub fn weak_learn(
    inst: &Instance,
    leaf_dist: &Distribution,
    d: usize,
    mode: WeakMode,
) -> Result<WeakResult> {
    let table = AtomTable::new(inst);
    weak_learn_on(&table, inst, leaf_dist, d, mode)
}

fn weak_learn_on(
    table: &AtomTable,
    inst: &Instance,
    leaf_dist: &Distribution,
    d: usize,
    mode: WeakMode,
) -> Result<WeakResult> {
    let c = inst.concept();
    let pos = leaf_dist.mass(c);
    let neg = leaf_dist.mass(&c.not());
    if !(pos > 0.0) {
        return Err(Error::BalanceUndefined { missing_class: 1 });
    }
    if !(neg > 0.0) {
        return Err(Error::BalanceUndefined { missing_class: 0 });
    }
    if (pos - 0.5).abs() > 1e-9 || (neg - 0.5).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "weak learner needs a balanced distribution, got class masses {pos} / {neg}"
        )));
    }
    match mode {
        WeakMode::ExactSearch => {
            let mut s = SplitSearch::with_table(table.clone(), c, leaf_dist, DEFAULT_SEARCH_BUDGET);
            let (tree, error) = s.best_tree(d)?;
            Ok(WeakResult { tree, error })
        }
        WeakMode::GreedyStump => {
            let not_c = c.not();
            let mut best = WeakResult {
                tree: DecisionTree::leaf(false),
                error: pos,
            };
            for (h, hyp) in inst.hypotheses().iter().enumerate() {
                let inside = &hyp.bits;
                let outside = inside.not();
                // errors with the inside labeled 1 / outside labeled 0, and flipped
                let e10 = leaf_dist.mass(&inside.and(&not_c)) + leaf_dist.mass(&outside.and(c));
                let e01 = 1.0 - e10;
                for (e, l, r) in [(e10, true, false), (e01, false, true)] {
                    if e < best.error {
                        best = WeakResult {
                            tree: DecisionTree::stump(h, l, r),
                            error: e,
                        };
                    }
                }
            }
            Ok(best)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdvantageShortfall {
    /// Position of the leaf among the tree's leaves, left to right.
    pub leaf: usize,
    pub achieved: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    /// Smallest `1/2 − error` over the leaves split in this phase.
    pub min_leaf_advantage: Option<f64>,
    pub advantages: Vec<f64>,
    pub shortfalls: Vec<AdvantageShortfall>,
    /// `H_{i+1} ≤ (1 − 2γ²) H_i`.
    pub certified: bool,
    pub advantage_certified: bool,
    pub depth: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Converged,
    MaxPhases,
    /// No leaf could be split further.
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoostTrace {
    pub gamma: f64,
    /// Initial surrogate `H₀` of the majority leaf.
    pub initial_surrogate: f64,
    pub phases: Vec<PhaseRecord>,
    #[serde(skip)]
    pub tree: DecisionTree,
    pub final_loss: f64,
    pub final_surrogate: f64,
    pub stop: StopReason,
    /// Weights are dyadic; certificates are checked without slack.
    pub exact: bool,
}

impl BoostTrace {
    /// `H₀, H₁, …`
    pub fn surrogates(&self) -> Vec<f64> {
        std::iter::once(self.initial_surrogate)
            .chain(self.phases.iter().map(|p| p.surrogate_after))
            .collect()
    }

    pub fn all_certified(&self) -> bool {
        self.phases
            .iter()
            .all(|p| p.certified && p.advantage_certified)
    }

    /// Columns: phase, surrogate, min_leaf_advantage, certified. Row 0 is `H₀`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,surrogate,min_leaf_advantage,certified\n");
        writeln!(s, "0,{},,", self.initial_surrogate).unwrap();
        for p in &self.phases {
            let adv = p
                .min_leaf_advantage
                .map(|a| a.to_string())
                .unwrap_or_default();
            writeln!(
                s,
                "{},{},{},{}",
                p.phase, p.surrogate_after, adv, p.certified
            )
            .unwrap();
        }
        s
    }
}

fn decay_slack(exact: bool) -> f64 {
    if exact {
        0.0
    } else {
        DECAY_SLACK
    }
}

fn majority_relabel(tree: &mut DecisionTree, inst: &Instance, dist: &Distribution) -> Result<()> {
    let c = inst.concept();
    for (leaf, region) in tree.leaf_regions(inst)? {
        let pos = dist.mass(&region.and(c));
        let neg = dist.mass(&region.and_not(c));
        tree.set_label(leaf, pos > neg)?;
    }
    Ok(())
}

/// Runs TopDownLBL from the majority leaf.
pub fn topdown_lbl(inst: &Instance, dist: &Distribution, cfg: &BoostConfig) -> Result<BoostTrace> {
    cfg.validate()?;
    if dist.len() != inst.n_points() {
        return Err(Error::Invalid(
            "distribution width does not match domain".into(),
        ));
    }
    let table = AtomTable::new(inst);
    let exact = dist.is_dyadic();
    let slack = decay_slack(exact);
    let factor = 1.0 - 2.0 * cfg.gamma * cfg.gamma;
    let c = inst.concept();
    let mut tree = DecisionTree::leaf(false);
    majority_relabel(&mut tree, inst, dist)?;
    let h0 = tree.surrogate(inst, dist)?;
    let mut h = h0;
    let mut phases = Vec::new();
    let stop;
    loop {
        if h <= cfg.epsilon {
            stop = StopReason::Converged;
            break;
        }
        if phases.len() >= cfg.max_phases {
            stop = StopReason::MaxPhases;
            break;
        }
        let mut advantages = Vec::new();
        let mut shortfalls = Vec::new();
        let mut grafts: Vec<(usize, DecisionTree)> = Vec::new();
        for (pos_in_order, (leaf, region)) in tree.leaf_regions(inst)?.into_iter().enumerate() {
            let p = dist.mass(&region.and(c));
            let n = dist.mass(&region.and_not(c));
            if p == 0.0 || n == 0.0 {
                // pure or zero-mass: frozen
                continue;
            }
            let cond = dist.conditional(&region)?;
            let bal = cond.balanced(c)?;
            let weak = weak_learn_on(&table, inst, &bal, cfg.weak_depth, cfg.weak_mode)?;
            let adv = 0.5 - weak.error;
            advantages.push(adv);
            if weak.error > 0.5 - cfg.gamma + WEIGHT_TOL {
                shortfalls.push(AdvantageShortfall {
                    leaf: pos_in_order,
                    achieved: weak.error,
                });
            }
            if !weak.tree.is_leaf() {
                grafts.push((leaf, weak.tree));
            }
        }
        let stalled = grafts.is_empty();
        for (leaf, sub) in &grafts {
            tree.graft(*leaf, sub)?;
        }
        majority_relabel(&mut tree, inst, dist)?;
        let after = tree.surrogate(inst, dist)?;
        let min_adv = advantages.iter().copied().reduce(f64::min);
        phases.push(PhaseRecord {
            phase: phases.len() + 1,
            surrogate_before: h,
            surrogate_after: after,
            min_leaf_advantage: min_adv,
            advantages,
            advantage_certified: shortfalls.is_empty(),
            shortfalls,
            certified: after <= factor * h + slack,
            depth: tree.depth(),
            loss: loss(&tree, inst, dist)?,
        });
        log::debug!("phase {}: surrogate {h} -> {after}", phases.len());
        h = after;
        if stalled {
            stop = StopReason::Stalled;
            break;
        }
    }
    let final_loss = loss(&tree, inst, dist)?;
    Ok(BoostTrace {
        gamma: cfg.gamma,
        initial_surrogate: h0,
        phases,
        tree,
        final_loss,
        final_surrogate: h,
        stop,
        exact,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertReport {
    pub phase_ok: Vec<bool>,
    pub first_violation: Option<usize>,
    /// `½ e^{−2mγ²}` for the `m` phases run.
    pub global_bound: f64,
    pub global_ok: bool,
}

impl CertReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none() && self.global_ok
    }
}

/// Checks `H_{i+1} ≤ (1 − 2γ²) H_i` phase by phase and `H_m ≤ ½ e^{−2mγ²}`.
pub fn certify(trace: &BoostTrace, cfg: &BoostConfig) -> CertReport {
    let slack = decay_slack(trace.exact);
    let factor = 1.0 - 2.0 * cfg.gamma * cfg.gamma;
    let phase_ok: Vec<bool> = trace
        .phases
        .iter()
        .map(|p| p.surrogate_after <= factor * p.surrogate_before + slack)
        .collect();
    let first_violation = phase_ok
        .iter()
        .position(|ok| !ok)
        .map(|i| trace.phases[i].phase);
    let m = trace.phases.len() as f64;
    let global_bound = 0.5 * (-2.0 * m * cfg.gamma * cfg.gamma).exp();
    let global_ok =
        trace.final_surrogate <= global_bound + slack && trace.final_loss <= global_bound + slack;
    CertReport {
        phase_ok,
        first_violation,
        global_bound,
        global_ok,
    }
}

/// The leaf regions of `tree` whose conditional is impure; exposed for probes.
pub fn impure_leaves(
    tree: &DecisionTree,
    inst: &Instance,
    dist: &Distribution,
) -> Result<Vec<Bits>> {
    let c = inst.concept();
    Ok(tree
        .leaf_regions(inst)?
        .into_iter()
        .filter(|(_, r)| dist.mass(&r.and(c)) > 0.0 && dist.mass(&r.and_not(c)) > 0.0)
        .map(|(_, r)| r)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos;
    use crate::instance::Hypothesis;

    fn xor4() -> Instance {
        let a = Bits::from_indices(4, [1, 3]);
        let b = Bits::from_indices(4, [2, 3]);
        let c = a.xor(&b);
        Instance::new(
            c,
            vec![
                Hypothesis {
                    name: "a".into(),
                    bits: a,
                },
                Hypothesis {
                    name: "b".into(),
                    bits: b,
                },
            ],
            Distribution::uniform(4),
        )
        .unwrap()
    }

    #[test]
    fn phase_counts() {
        assert_eq!(required_phases(0.25, 0.05), 19);
        assert_eq!(required_phases(0.125, 0.01), 126);
        assert_eq!(required_phases(0.25, 0.5), 0);
    }

    #[test]
    fn weak_learn_examples() {
        let h = demos::halfline(6).unwrap();
        let bal = h.balanced(h.dist()).unwrap();
        let w = weak_learn(&h, &bal, 1, WeakMode::ExactSearch).unwrap();
        assert_eq!(w.error, 0.0);
        assert_eq!(w.tree.depth(), 1);

        let x = xor4();
        for mode in [WeakMode::ExactSearch, WeakMode::GreedyStump] {
            assert_eq!(weak_learn(&x, x.dist(), 1, mode).unwrap().error, 0.5);
        }

        let pn = demos::pn_family(4).unwrap();
        let bal = pn.balanced(pn.dist()).unwrap();
        for mode in [WeakMode::ExactSearch, WeakMode::GreedyStump] {
            assert_eq!(weak_learn(&pn, &bal, 1, mode).unwrap().error, 0.375);
        }
        for i in 0..4 {
            let t = DecisionTree::stump(i, true, false);
            assert_eq!(loss(&t, &pn, &bal).unwrap(), 0.375);
        }
    }

    #[test]
    fn weak_learn_rejects_unbalanced() {
        let pn = demos::pn_family(4).unwrap();
        assert!(matches!(
            weak_learn(&pn, &Distribution::uniform(5), 1, WeakMode::GreedyStump),
            Err(Error::Precondition(_))
        ));
        let pure = pn.dist().conditional(&Bits::from_indices(5, [1])).unwrap();
        assert!(matches!(
            weak_learn(&pn, &pure, 1, WeakMode::GreedyStump),
            Err(Error::BalanceUndefined { missing_class: 0 })
        ));
    }

    #[test]
    fn concept_in_class_one_phase() {
        let h = demos::halfline(7).unwrap();
        let cfg = BoostConfig::new(0.25, 1, 0.05).unwrap();
        let t = topdown_lbl(&h, h.dist(), &cfg).unwrap();
        assert_eq!(t.phases.len(), 1);
        assert_eq!(t.tree.depth(), 1);
        assert_eq!(t.final_loss, 0.0);
        assert!(certify(&t, &cfg).passed());
    }

    #[test]
    fn pn_family_six_certified_phases_decay() {
        let pn = demos::pn_family(6).unwrap();
        let gamma = 1.0 / 12.0;
        let cfg = BoostConfig {
            max_phases: 10,
            ..BoostConfig::new(gamma, 1, 0.01).unwrap()
        };
        let t = topdown_lbl(&pn, pn.dist(), &cfg).unwrap();
        let f = 1.0 - 2.0 * gamma * gamma;
        for p in &t.phases {
            if p.advantage_certified {
                assert!(p.surrogate_after <= f * p.surrogate_before + DECAY_SLACK);
                assert!(p.certified);
            }
            assert!(p.surrogate_after <= p.surrogate_before + 1e-15);
        }
        assert!(t.final_loss <= t.final_surrogate + 1e-12);
    }

    #[test]
    fn certify_flags_stalled_trace() {
        let cfg = BoostConfig::new(0.1, 1, 0.05).unwrap();
        let trace = BoostTrace {
            gamma: 0.1,
            initial_surrogate: 0.5,
            phases: vec![PhaseRecord {
                phase: 1,
                surrogate_before: 0.5,
                surrogate_after: 0.5,
                min_leaf_advantage: Some(0.1),
                advantages: vec![0.1],
                shortfalls: vec![],
                certified: false,
                advantage_certified: true,
                depth: 1,
                loss: 0.5,
            }],
            tree: DecisionTree::leaf(false),
            final_loss: 0.5,
            final_surrogate: 0.5,
            stop: StopReason::MaxPhases,
            exact: true,
        };
        let r = certify(&trace, &cfg);
        assert_eq!(r.first_violation, Some(1));
        assert!(!r.passed());
    }

    #[test]
    fn xor_stalls_with_shortfall() {
        let x = xor4();
        let cfg = BoostConfig::new(0.1, 1, 0.01).unwrap();
        let t = topdown_lbl(&x, x.dist(), &cfg).unwrap();
        assert_eq!(t.stop, StopReason::Stalled);
        assert_eq!(t.phases.len(), 1);
        assert_eq!(
            t.phases[0].shortfalls,
            vec![AdvantageShortfall {
                leaf: 0,
                achieved: 0.5
            }]
        );
        assert!(!t.phases[0].certified);

        // depth 2 resolves the parity in one phase
        let cfg = BoostConfig::new(0.1, 2, 0.01).unwrap();
        let t = topdown_lbl(&x, x.dist(), &cfg).unwrap();
        assert_eq!(t.final_loss, 0.0);
        assert_eq!(t.phases.len(), 1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let pn = demos::pn_family(4).unwrap();
        let cfg = BoostConfig::new(0.1, 1, 0.01).unwrap();
        let t = topdown_lbl(&pn, pn.dist(), &cfg).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("phase,surrogate,min_leaf_advantage,certified\n0,0.5,,\n"));
        assert_eq!(csv.lines().count(), t.phases.len() + 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn surrogate_never_increases(
                n in 3usize..10,
                seed in proptest::collection::vec(any::<u16>(), 40),
            ) {
                let c = Bits::from_bools((0..n).map(|i| seed[i] % 2 == 0));
                let hyps: Vec<_> = (0..4)
                    .map(|j| Hypothesis {
                        name: format!("h{j}"),
                        bits: Bits::from_bools((0..n).map(|i| (seed[10 + j * 7 + i % 7] >> (i % 16)) & 1 == 1)),
                    })
                    .collect();
                let w: Vec<f64> = (0..n).map(|i| 1.0 + (seed[i + 30 - n.min(30)] % 5) as f64).collect();
                let dist = Distribution::from_masses(w).unwrap();
                let inst = Instance::new(c, hyps, dist.clone()).unwrap();
                let cfg = BoostConfig { max_phases: 6, ..BoostConfig::new(0.05, 1, 0.001).unwrap() };
                let t = topdown_lbl(&inst, &dist, &cfg).unwrap();
                for p in &t.phases {
                    prop_assert!(p.surrogate_after <= p.surrogate_before + 1e-12);
                }
                prop_assert!(t.final_loss <= t.final_surrogate + 1e-12);
                prop_assert!(t.tree.depth() <= t.phases.len() * cfg.weak_depth);
            }
        }
    }
}
