#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treelucid_core::boosting::{
    certify, required_phases, topdown_lbl, BoostConfig, StopReason, WeakMode,
};
use treelucid_core::demos::{self, DiskClass, Rate};
use treelucid_core::gcm::{self, AlgebraExpr, GradedMeasure, MinGamma};
use treelucid_core::instance::{loss, Hypothesis};
use treelucid_core::minimax::{compress, game_value};
use treelucid_core::oracle::{
    min_depth, min_depth_by_behaviors, rashomon, SplitSearch, DEFAULT_BEHAVIOR_CAP,
};
use treelucid_core::tree::{random_tree, stack_majority, DEFAULT_STACK_CAP};
use treelucid_core::{Bits, DecisionTree, Distribution, Instance};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn with_singletons(inst: &Instance) -> Instance {
    let n = inst.n_points();
    let mut hyps = inst.hypotheses().to_vec();
    hyps.extend((0..n).map(|x| Hypothesis {
        name: format!("{{{x}}}"),
        bits: Bits::from_indices(n, [x]),
    }));
    Instance::new(inst.concept().clone(), hyps, inst.dist().clone()).unwrap()
}

/// Hypotheses that agree with the concept except on a few points.
fn noisy_copies<R: Rng>(rng: &mut R, n: usize, k: usize, flip: f64) -> Instance {
    let concept = Bits::from_bools((0..n).map(|_| rng.gen_bool(0.5)));
    let hyps = (0..k)
        .map(|j| Hypothesis {
            name: format!("n{j}"),
            bits: Bits::from_bools((0..n).map(|x| concept.get(x) ^ rng.gen_bool(flip))),
        })
        .collect();
    let mut masses = vec![0.0; n];
    for _ in 0..32 {
        masses[rng.gen_range(0..n)] += 1.0;
    }
    Instance::new(concept, hyps, Distribution::from_masses(masses).unwrap()).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut runs, mut dyadic_runs, mut phases_total) = (0, 0, 0);
    let mut tried = 0;
    while runs < 60 {
        tried += 1;
        ensure!(
            tried <= 5000,
            "only {runs} certified instances in {tried} draws"
        );
        let n = rng.gen_range(6..=16);
        let k = rng.gen_range(1..=5);
        let dyadic = tried % 2 == 0;
        let inst = with_singletons(&common::random_instance(&mut rng, n, k, dyadic));
        let d = if tried % 3 == 0 { 2 } else { 1 };
        let probe = BoostConfig {
            gamma: 1e-6,
            weak_depth: d,
            epsilon: 0.0,
            max_phases: 40,
            weak_mode: WeakMode::ExactSearch,
        };
        let t = topdown_lbl(&inst, inst.dist(), &probe).map_err(|e| e.to_string())?;
        if t.stop != StopReason::Converged || t.phases.is_empty() {
            continue;
        }
        let gamma = t
            .phases
            .iter()
            .filter_map(|p| p.min_leaf_advantage)
            .fold(0.49f64, f64::min);
        if gamma <= 1e-6 {
            continue;
        }
        let cfg = BoostConfig { gamma, ..probe };
        let t = topdown_lbl(&inst, inst.dist(), &cfg).map_err(|e| e.to_string())?;
        ensure!(
            t.phases.iter().all(|p| p.advantage_certified),
            "draw {tried}: advantage not certified on rerun"
        );
        let report = certify(&t, &cfg);
        ensure!(
            report.passed(),
            "draw {tried} (dyadic {dyadic}): violation at phase {:?}, global ok {}",
            report.first_violation,
            report.global_ok
        );
        for p in &t.phases {
            let bound = 0.5 * (-2.0 * p.phase as f64 * gamma * gamma).exp();
            let slack = if t.exact { 0.0 } else { 1e-9 };
            ensure!(
                p.loss <= bound + slack,
                "draw {tried}: loss {} above {bound} after phase {}",
                p.loss,
                p.phase
            );
        }
        runs += 1;
        dyadic_runs += t.exact as usize;
        phases_total += t.phases.len();
    }
    Ok(format!(
        "{runs} certified runs ({dyadic_runs} dyadic), {phases_total} phases, {tried} draws"
    ))
}

fn certified_runs(gamma: f64, eps: f64, limit: usize, seed: u64) -> Outcome {
    let m = required_phases(gamma, eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut found, mut multi, mut max_phases) = (0, 0, 0);
    for draw in 0..4000 {
        if found >= 30 {
            break;
        }
        let n = rng.gen_range(8..=24);
        let (k, flip) = (rng.gen_range(2..=8), rng.gen_range(0.05..0.3));
        let inst = noisy_copies(&mut rng, n, k, flip);
        let cfg = BoostConfig::new(gamma, 1, eps).map_err(|e| e.to_string())?;
        ensure!(
            cfg.max_phases == m,
            "config phase budget {} differs from {m}",
            cfg.max_phases
        );
        let t = topdown_lbl(&inst, inst.dist(), &cfg).map_err(|e| e.to_string())?;
        if t.phases.is_empty() || !t.phases.iter().all(|p| p.advantage_certified) {
            continue;
        }
        ensure!(
            t.stop == StopReason::Converged && t.phases.len() <= limit,
            "draw {draw}: certified run stopped {:?} after {} phases",
            t.stop,
            t.phases.len()
        );
        ensure!(
            t.tree.depth() <= limit,
            "draw {draw}: depth {} above {limit}",
            t.tree.depth()
        );
        ensure!(
            t.final_loss <= eps,
            "draw {draw}: final loss {}",
            t.final_loss
        );
        found += 1;
        multi += (t.phases.len() > 1) as usize;
        max_phases = max_phases.max(t.phases.len());
    }
    ensure!(found > 0, "no certified run found");
    Ok(format!(
        "{found} runs ({multi} multi-phase, max {max_phases} phases)"
    ))
}

fn criterion_2() -> Outcome {
    let a = required_phases(0.25, 0.05);
    let b = required_phases(0.125, 0.01);
    ensure!(
        a == 19 && a == (8.0 * 10f64.ln()).ceil() as usize,
        "γ=1/4, ε=0.05 gives {a} phases"
    );
    ensure!(
        b == 126 && b == (32.0 * 50f64.ln()).ceil() as usize,
        "γ=1/8, ε=0.01 gives {b} phases"
    );
    let r1 = certified_runs(0.25, 0.05, 19, 202)?;
    let r2 = certified_runs(0.125, 0.01, 126, 203)?;
    Ok(format!("m = 19 / 126; γ=1/4: {r1}; γ=1/8: {r2}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut games, mut compressed, mut worst) = (0, 0, 0.0f64);
    let start = Instant::now();
    for i in 0..400 {
        let n = rng.gen_range(2..=12);
        let k = rng.gen_range(1..=6);
        let d = i % 3;
        let inst = common::random_instance(&mut rng, n, k, i % 2 == 0);
        let exact = common::exact_game_value(&common::naive_game_columns(&inst, d));
        let v = common::to_f64(&exact.value);
        let sol = game_value(&inst, d, 1e-9).map_err(|e| e.to_string())?;
        let err = (sol.value - v).abs().max((sol.lower - v).abs());
        worst = worst.max(err);
        ensure!(
            err <= 1e-6,
            "instance {i} (n={n}, |H|={k}, d={d}): solver {} vs exact {v}",
            sol.value
        );
        games += 1;
        let mut gammas = vec![0.125, 0.25];
        gammas.push(if v > 0.0 { 0.5 - v } else { 0.49 });
        for gamma in gammas {
            if v > 0.5 - gamma + 1e-12 || !(gamma > 0.0 && gamma < 0.5) {
                continue;
            }
            let c = compress(&inst, d, gamma, 1e-9)
                .map_err(|e| format!("instance {i}, γ={gamma}: {e}"))?;
            let b = c.tree.behavior(&inst).map_err(|e| e.to_string())?;
            ensure!(
                b == *inst.concept(),
                "instance {i}, γ={gamma}: compressed tree errs"
            );
            ensure!(
                c.tree.depth() == c.members.len() * d,
                "instance {i}: depth {} ≠ {}·{d}",
                c.tree.depth(),
                c.members.len()
            );
            compressed += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "{games} games (max error {worst:.1e}), {compressed} compressions, {secs:.1}s"
    ))
}

fn criterion_4() -> Outcome {
    let tp = demos::two_point();
    let mut s = SplitSearch::new(&tp, tp.dist(), 1 << 22).map_err(|e| e.to_string())?;
    for k in 0..=4 {
        let l = s.best_loss(k).map_err(|e| e.to_string())?;
        ensure!(l == 0.5, "two_point depth {k}: min loss {l}");
    }
    let mut notes = Vec::new();
    let mut literal_ok = true;
    for n in [4usize, 6, 8] {
        let g = demos::geometric_series(n).map_err(|e| e.to_string())?;
        for j in 2..=n {
            let eps = 0.5f64.powi(j as i32);
            let r = min_depth(&g, g.dist(), eps, 3).map_err(|e| e.to_string())?;
            ensure!(
                r.depth() == Some(1),
                "N={n}, ε=2^-{j}: depth {:?}",
                r.depth()
            );
            let m = (1.0 / eps).log2().ceil() as usize;
            let h = g
                .hypotheses()
                .iter()
                .position(|h| h.name == format!("{{1..{m}}}"))
                .ok_or_else(|| format!("no hypothesis {{1..{m}}}"))?;
            let witness = DecisionTree::stump(h, false, true);
            let l = loss(&witness, &g, g.dist()).map_err(|e| e.to_string())?;
            ensure!(l <= eps, "N={n}: witness {{1..{m}}} has loss {l} > {eps}");
        }
        let target = 0.5f64.powi(n as i32);
        let uniform = rashomon(&g, g.dist(), target, 3).map_err(|e| e.to_string())?;
        let floor = SplitSearch::new(&g, g.dist(), 1 << 22)
            .and_then(|mut s| s.best_loss(3))
            .map_err(|e| e.to_string())?;
        if !uniform.is_empty() {
            literal_ok = false;
            notes.push(format!(
                "N={n}: {} depth-≤3 behaviors reach loss ≤ 2^-{n} (best {floor} = 2^-{}; none reach 0)",
                uniform.len(),
                n + 1
            ));
        }
        ensure!(floor > 0.0, "N={n}: a depth-3 tree is exact");
    }
    for n in [2usize, 4, 6, 8] {
        let pn = demos::pn_family(n).map_err(|e| e.to_string())?;
        let r = min_depth(&pn, pn.dist(), 0.25, 8).map_err(|e| e.to_string())?;
        ensure!(
            r.depth() == Some(n.div_ceil(2)),
            "pn_family({n}): depth {:?}",
            r.depth()
        );
    }
    ensure!(
        literal_ok,
        "uniform-ε clause does not hold: {}",
        notes.join("; ")
    );
    Ok("two_point 1/2 at depth ≤ 4; geometric depth 1 with witnesses; pn ⌈n/2⌉".into())
}

fn criterion_5() -> Outcome {
    let mix = demos::adversarial_mixture(Rate::CeilLog2, 0.25, 3).map_err(|e| e.to_string())?;
    let inst = &mix.instance;
    let mut rows = Vec::new();
    for (i, t) in mix.terms.iter().enumerate() {
        ensure!(
            t.rate_depth == [3, 4, 5][i],
            "term {} has r(ε) = {}",
            t.n,
            t.rate_depth
        );
        let r = min_depth(inst, inst.dist(), t.epsilon, 6).map_err(|e| e.to_string())?;
        let depth = r.depth();
        ensure!(
            depth.is_none_or(|k| k > t.rate_depth),
            "n={}: depth {depth:?} ≤ {}",
            t.n,
            t.rate_depth
        );
        let comp = mix.component(i).map_err(|e| e.to_string())?;
        let inner = min_depth(inst, &comp, 0.25, 6).map_err(|e| e.to_string())?;
        ensure!(
            inner.depth().is_none_or(|k| k > t.rate_depth),
            "n={}: component depth {:?} ≤ {}",
            t.n,
            inner.depth(),
            t.rate_depth
        );
        rows.push(format!(
            "n={} r={} depth {}",
            t.n,
            t.rate_depth,
            depth.map_or(">6".to_string(), |k| k.to_string())
        ));
    }
    Ok(rows.join(", "))
}

fn majority(trees: &[DecisionTree], inst: &Instance, x: usize) -> bool {
    let ones = trees
        .iter()
        .filter(|t| t.evaluate(x, inst).unwrap())
        .count();
    2 * ones > trees.len()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for i in 0..1000 {
        let n = rng.gen_range(1..=16);
        let k = rng.gen_range(1..=5);
        let inst = common::random_instance(&mut rng, n, k, true);
        let size = [1, 3, 5][rng.gen_range(0..3)];
        let trees: Vec<DecisionTree> = (0..size)
            .map(|_| random_tree(&mut rng, inst.hypotheses().len(), 2))
            .collect();
        let s = stack_majority(&trees, DEFAULT_STACK_CAP).map_err(|e| e.to_string())?;
        for x in 0..n {
            ensure!(
                s.evaluate(x, &inst).unwrap() == majority(&trees, &inst, x),
                "multiset {i}: point {x} disagrees"
            );
        }
        let sum: usize = trees.iter().map(DecisionTree::depth).sum();
        ensure!(
            s.depth() == sum,
            "multiset {i}: depth {} ≠ {sum}",
            s.depth()
        );
    }
    Ok("1000 multisets".into())
}

/// Checks the connective-count node recursion on every internal node of a
/// converted tree, returning the root value.
fn check_recursion(e: &AlgebraExpr, m: &GradedMeasure) -> std::result::Result<u64, String> {
    use AlgebraExpr as E;
    match e {
        E::Full | E::Empty => Ok(gcm::gamma_of(e, m)),
        E::Union(a, b) => match (a.as_ref(), b.as_ref()) {
            (E::Inter(h, u), E::Inter(nh, w)) if matches!(nh.as_ref(), E::Complement(h2) if h2 == h) =>
            {
                let gu = check_recursion(u, m)?;
                let gw = check_recursion(w, m)?;
                let g = gcm::gamma_of(e, m);
                let bound = 4 + 2 * gcm::gamma_of(h, m) + gu + gw;
                if g > bound {
                    return Err(format!("Γ = {g} above {bound}"));
                }
                Ok(g)
            }
            _ => Err("unexpected node shape".into()),
        },
        _ => Err("unexpected expression shape".into()),
    }
}

fn criterion_7() -> Outcome {
    let measures = [
        GradedMeasure::connective_count(),
        GradedMeasure::max_depth_style(),
        GradedMeasure::zero(),
    ];
    for m in &measures {
        let r = gcm::check_axioms(m, 5, 1000, 707);
        ensure!(r.passed(), "{}: {} violations", m.name, r.violations.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(708);
    let cc = GradedMeasure::connective_count();
    for i in 0..1000 {
        let n = rng.gen_range(1..=12);
        let k = rng.gen_range(1..=5);
        let inst = common::random_instance(&mut rng, n, k, true);
        let t = random_tree(&mut rng, inst.hypotheses().len(), 4);
        let e = gcm::tree_to_algebra(&t);
        for x in 0..n {
            ensure!(
                gcm::eval_expr(&e, x, &inst).unwrap() == t.evaluate(x, &inst).unwrap(),
                "tree {i}: point {x} disagrees"
            );
        }
        check_recursion(&e, &cc).map_err(|m| format!("tree {i}: {m}"))?;
    }
    let tp = demos::two_point();
    for eps in [0.0, 0.25, 0.49] {
        let r = gcm::min_gamma(&tp, tp.dist(), eps, &cc, 20).map_err(|e| e.to_string())?;
        ensure!(
            matches!(r, MinGamma::AboveBudget { .. }),
            "two_point ε={eps}: {r:?}"
        );
    }
    Ok("axioms on 1000 pairs × 3 measures; 1000 trees; two_point above budget 20".into())
}

fn criterion_8() -> Outcome {
    let ax = demos::disk_grid(64, DiskClass::AxisOnly, Some(0.25)).map_err(|e| e.to_string())?;
    let best = SplitSearch::new(&ax, ax.dist(), 1 << 22)
        .and_then(|mut s| s.best_loss(4))
        .map_err(|e| e.to_string())?;
    ensure!(best > 0.2, "axis-only shell loss at depth 4 is {best}");
    let mg = demos::disk_grid(64, DiskClass::Margin { mu: 0.1, k: 8 }, None)
        .map_err(|e| e.to_string())?;
    let oct = demos::polygon_tree(&mg, 8).map_err(|e| e.to_string())?;
    let ol = loss(&oct, &mg, mg.dist()).map_err(|e| e.to_string())?;
    ensure!(
        oct.depth() == 8 && ol == 0.0,
        "octagon depth {} loss {ol}",
        oct.depth()
    );
    let cfg = BoostConfig {
        max_phases: 8,
        ..BoostConfig::new(0.05, 1, 0.0).map_err(|e| e.to_string())?
    };
    let t = topdown_lbl(&mg, mg.dist(), &cfg).map_err(|e| e.to_string())?;
    ensure!(
        t.final_loss == 0.0 && t.tree.depth() <= 8,
        "boosting reached loss {} at depth {}",
        t.final_loss,
        t.tree.depth()
    );
    Ok(format!(
        "axis-only depth-4 loss {best:.4}; octagon exact; boosting depth {} in {} phases",
        t.tree.depth(),
        t.phases.len()
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut checks = 0;
    for i in 0..300 {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(0..=3);
        let inst = common::random_instance(&mut rng, n, k, true);
        let best: Vec<f64> = (0..=3).map(|d| common::naive_best_loss(&inst, d)).collect();
        for j in 0..=8 {
            let eps = j as f64 / 16.0;
            let naive = best.iter().position(|&l| l <= eps);
            let dp = min_depth(&inst, inst.dist(), eps, 3)
                .map_err(|e| e.to_string())?
                .depth();
            let fr = min_depth_by_behaviors(&inst, inst.dist(), eps, 3, DEFAULT_BEHAVIOR_CAP)
                .map_err(|e| e.to_string())?
                .depth();
            ensure!(
                dp == naive && fr == naive,
                "instance {i}, ε={eps}: split search {dp:?}, behaviors {fr:?}, naive {naive:?}"
            );
            ensure!(
                common::naive_min_depth(&inst, eps, 3) == naive,
                "instance {i}: naive engines disagree"
            );
            checks += 1;
        }
    }
    Ok(format!("{checks} (instance, ε) pairs"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("boosting decay certificate", criterion_1),
        ("depth-bound arithmetic", criterion_2),
        ("minimax and compress", criterion_3),
        ("canonical numbers", criterion_4),
        ("adversarial mixture lower bound", criterion_5),
        ("stacking equivalence", criterion_6),
        ("graded complexity measures", criterion_7),
        ("geometry demos", criterion_8),
        ("oracle self-consistency", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
