use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use treelucid_core::boosting::{certify, topdown_lbl, BoostConfig, WeakMode};
use treelucid_core::demos::{self, DiskClass, FamilyDescriptor, Rate, Recipe};
use treelucid_core::gcm::{self, GradedMeasure, MinGamma};
use treelucid_core::minimax::{self, GameConfig};
use treelucid_core::oracle::{self, MinDepth};
use treelucid_core::{DecisionTree, Error, Instance};

#[derive(Parser)]
#[command(
    name = "treelucid",
    version,
    about = "Shallow decision-tree approximation of binary concepts"
)]
struct Cli {
    /// Worker threads for runs over independent family members (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a demo instance and print it as JSON.
    Demo(DemoArgs),
    /// Run top-down boosting and print the resulting tree.
    Boost(BoostArgs),
    /// Solve the depth-d game and compress its majority vote into one tree.
    Compress(CompressArgs),
    /// Minimal depth for loss ε, with a witness tree.
    Oracle(OracleArgs),
    /// Minimal depth for each of several ε values.
    Profile(ProfileArgs),
    /// Graded complexity: minimal Γ, tree conversion, or axiom checks.
    Gcm(GcmArgs),
    /// Finite evidence for the three-case classification of a family.
    Classify(FamilyArgs),
    /// Game values by depth until the whole family is weakly approximable.
    Sweep(FamilyArgs),
    /// Render a tree over an instance in Graphviz DOT.
    ExportDot(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DemoName {
    TwoPoint,
    PnFamily,
    GeometricSeries,
    Halfline,
    AdversarialMixture,
    DiskGrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiskKind {
    AxisOnly,
    AllAngles,
    Margin,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(value_enum)]
    name: DemoName,
    /// Size parameter (n for pn-family and halfline, N for geometric-series, terms for the mixture).
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    /// Constant depth rate for the mixture instead of ⌈log₂(1/ε)⌉.
    #[arg(long)]
    rate: Option<usize>,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long, value_enum, default_value = "all-angles")]
    class: DiskKind,
    /// Angles are multiples of π/k.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Keep only cells within this distance of the unit circle.
    #[arg(long)]
    shell: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeakKind {
    Exact,
    Greedy,
}

#[derive(Args)]
struct BoostArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    weak_depth: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Defaults to the certified phase count for γ and ε.
    #[arg(long)]
    max_phases: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    weak: WeakKind,
    /// Also write the per-phase trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also write the full run report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    weak_depth: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Split,
    Behaviors,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 4)]
    dmax: usize,
    #[arg(long, value_enum, default_value = "split")]
    engine: Engine,
    /// Behavior cap for the behaviors engine and the Rashomon listing.
    #[arg(long, default_value_t = oracle::DEFAULT_BEHAVIOR_CAP)]
    budget: usize,
    /// List every behavior of depth ≤ dmax with loss ≤ ε instead.
    #[arg(long)]
    rashomon: bool,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    dmax: usize,
}

#[derive(Args)]
struct GcmArgs {
    #[arg(long, required_unless_present = "check_axioms")]
    instance: Option<PathBuf>,
    #[arg(long, default_value = "connective")]
    measure: String,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 20)]
    budget: u64,
    /// Convert this tree to an algebra expression and report its Γ.
    #[arg(long, conflicts_with = "check_axioms")]
    tree: Option<PathBuf>,
    #[arg(long)]
    check_axioms: bool,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    hyps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FamilyArgs {
    /// two-point, pn-family, geometric-series or halfline.
    #[arg(long)]
    family: String,
    /// Inclusive `a..b` or a comma list.
    #[arg(long, default_value = "2..8")]
    range: String,
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    dmax: usize,
    #[arg(long, default_value_t = oracle::DEFAULT_BEHAVIOR_CAP)]
    budget: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    tree: PathBuf,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Instance, Error> {
    Instance::from_json(&read(path)?)
}

fn load_tree(path: &Path, inst: &Instance) -> Result<DecisionTree, Error> {
    let t = DecisionTree::from_json(&read(path)?)?;
    t.check(inst)?;
    Ok(t)
}

fn tree_value(t: &DecisionTree) -> Value {
    serde_json::from_str(&t.to_json()).expect("tree JSON is valid")
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON value serializes")
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn unsupported(f: Format, cmd: &str) -> Error {
    let name = match f {
        Format::Json => "json",
        Format::Csv => "csv",
        Format::Dot => "dot",
    };
    Error::Invalid(format!("{cmd} does not support --format {name}"))
}

fn tree_output(t: &DecisionTree, inst: &Instance, f: Format, cmd: &str) -> Result<String, Error> {
    match f {
        Format::Json => Ok(t.to_json()),
        Format::Dot => t.to_dot(inst),
        Format::Csv => Err(unsupported(f, cmd)),
    }
}

fn parse_range(s: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::Invalid(format!("range {s:?} is not `a..b` or a comma list"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn family(args: &FamilyArgs) -> Result<Vec<(String, Instance)>, Error> {
    FamilyDescriptor::new(Recipe::parse(&args.family)?, parse_range(&args.range)?).members()
}

fn min_depth_value(r: &MinDepth) -> Value {
    match r {
        MinDepth::Exact {
            depth,
            loss,
            witness,
        } => json!({
            "result": "Exact",
            "depth": depth,
            "loss": loss,
            "witness": tree_value(witness),
        }),
        MinDepth::AboveCap {
            d_max,
            best_loss,
            structural,
        } => json!({
            "result": "AboveCap",
            "d_max": d_max,
            "best_loss": best_loss,
            "structural": structural,
        }),
    }
}

fn demo(a: &DemoArgs) -> Result<String, Error> {
    let inst = match a.name {
        DemoName::TwoPoint => demos::two_point(),
        DemoName::PnFamily => demos::pn_family(a.n)?,
        DemoName::GeometricSeries => demos::geometric_series(a.n)?,
        DemoName::Halfline => demos::halfline(a.n)?,
        DemoName::AdversarialMixture => {
            let rate = a.rate.map_or(Rate::CeilLog2, Rate::Constant);
            demos::adversarial_mixture(rate, a.gamma, a.n)?.instance
        }
        DemoName::DiskGrid => {
            let class = match a.class {
                DiskKind::AxisOnly => DiskClass::AxisOnly,
                DiskKind::AllAngles => DiskClass::AllAngles(a.k),
                DiskKind::Margin => DiskClass::Margin { mu: a.mu, k: a.k },
            };
            demos::disk_grid(a.resolution, class, a.shell)?
        }
    };
    Ok(inst.to_json())
}

fn boost(a: &BoostArgs, f: Format) -> Result<String, Error> {
    let inst = load_instance(&a.instance)?;
    let mut cfg = BoostConfig::new(a.gamma, a.weak_depth, a.epsilon)?;
    if let Some(m) = a.max_phases {
        cfg.max_phases = m;
    }
    cfg.weak_mode = match a.weak {
        WeakKind::Exact => WeakMode::ExactSearch,
        WeakKind::Greedy => WeakMode::GreedyStump,
    };
    cfg.validate()?;
    let trace = topdown_lbl(&inst, inst.dist(), &cfg)?;
    let cert = certify(&trace, &cfg);
    log::info!(
        "{} phases, depth {}, loss {}, stop {:?}, certified {}",
        trace.phases.len(),
        trace.tree.depth(),
        trace.final_loss,
        trace.stop,
        cert.passed()
    );
    if let Some(p) = &a.trace {
        write_file(p, &trace.to_csv())?;
    }
    if let Some(p) = &a.report {
        let mut v = serde_json::to_value(&trace)?;
        v["tree"] = tree_value(&trace.tree);
        v["certificate"] = serde_json::to_value(&cert)?;
        v["config"] = serde_json::to_value(&cfg)?;
        write_file(p, &pretty(&v))?;
    }
    match f {
        Format::Csv => Ok(trace.to_csv()),
        _ => tree_output(&trace.tree, &inst, f, "boost"),
    }
}

fn compress(a: &CompressArgs, f: Format) -> Result<String, Error> {
    let inst = load_instance(&a.instance)?;
    let c = minimax::compress_with(&inst, a.weak_depth, a.gamma, a.tol, a.seed)?;
    log::info!(
        "game value {}, multiset size {}, depth {}",
        c.solution.value,
        c.members.len(),
        c.tree.depth()
    );
    if let Some(p) = &a.report {
        let v = json!({
            "solution": serde_json::to_value(&c.solution)?,
            "derandomization": serde_json::to_value(&c.derandomization)?,
            "members": c.members.iter().map(tree_value).collect::<Vec<_>>(),
            "depth": c.tree.depth(),
        });
        write_file(p, &pretty(&v))?;
    }
    tree_output(&c.tree, &inst, f, "compress")
}

fn run_oracle(a: &OracleArgs, f: Format) -> Result<String, Error> {
    let inst = load_instance(&a.instance)?;
    if a.rashomon {
        let entries = oracle::rashomon(&inst, inst.dist(), a.epsilon, a.dmax)?;
        return match f {
            Format::Json => Ok(pretty(&serde_json::to_value(&entries)?)),
            Format::Csv => {
                let mut s = String::from("behavior,loss,depth\n");
                for e in &entries {
                    let bits: String = e
                        .behavior
                        .to_u8()
                        .iter()
                        .map(|b| char::from(b'0' + b))
                        .collect();
                    s.push_str(&format!("{bits},{},{}\n", e.loss, e.depth));
                }
                Ok(s)
            }
            Format::Dot => Err(unsupported(f, "oracle --rashomon")),
        };
    }
    let r = match a.engine {
        Engine::Split => oracle::min_depth(&inst, inst.dist(), a.epsilon, a.dmax)?,
        Engine::Behaviors => {
            oracle::min_depth_by_behaviors(&inst, inst.dist(), a.epsilon, a.dmax, a.budget)?
        }
    };
    match (f, &r) {
        (Format::Json, _) => Ok(pretty(&min_depth_value(&r))),
        (Format::Dot, MinDepth::Exact { witness, .. }) => witness.to_dot(&inst),
        (Format::Dot, MinDepth::AboveCap { .. }) => {
            Err(Error::Invalid("no witness tree to render".into()))
        }
        (Format::Csv, _) => Ok(format!(
            "epsilon,depth\n{},{}\n",
            a.epsilon,
            r.depth().map_or(format!(">{}", a.dmax), |d| d.to_string())
        )),
    }
}

fn profile(a: &ProfileArgs, f: Format) -> Result<String, Error> {
    let inst = load_instance(&a.instance)?;
    let mut sorted = a.epsilons.clone();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let p = oracle::depth_profile(&inst, inst.dist(), &sorted, a.dmax)?;
    let lookup = |e: f64| &p.entries.iter().find(|(x, _)| *x == e).expect("profiled").1;
    match f {
        Format::Csv => {
            let mut s = String::from("epsilon,depth\n");
            for &e in &a.epsilons {
                let d = lookup(e)
                    .depth()
                    .map_or(format!(">{}", a.dmax), |d| d.to_string());
                s.push_str(&format!("{e},{d}\n"));
            }
            Ok(s)
        }
        Format::Json => {
            let rows: Vec<Value> = a
                .epsilons
                .iter()
                .map(|&e| {
                    let mut v = min_depth_value(lookup(e));
                    v["epsilon"] = json!(e);
                    v
                })
                .collect();
            Ok(pretty(&json!({ "d_max": a.dmax, "entries": rows })))
        }
        Format::Dot => Err(unsupported(f, "profile")),
    }
}

fn run_gcm(a: &GcmArgs) -> Result<String, Error> {
    let m = GradedMeasure::parse(&a.measure)?;
    if a.check_axioms {
        let r = gcm::check_axioms(&m, a.hyps, a.samples, a.seed);
        let mut v = serde_json::to_value(&r)?;
        v["measure"] = serde_json::to_value(&m)?;
        v["passed"] = json!(r.passed());
        return Ok(pretty(&v));
    }
    let inst = load_instance(a.instance.as_deref().expect("required by clap"))?;
    if let Some(tp) = &a.tree {
        let t = load_tree(tp, &inst)?;
        let e = gcm::tree_to_algebra(&t);
        return Ok(pretty(&json!({
            "expr": e.to_value(),
            "gamma": gcm::gamma_of(&e, &m),
            "measure": m.name,
            "depth": t.depth(),
            "internal_nodes": t.n_internal(),
        })));
    }
    let v = match gcm::min_gamma(&inst, inst.dist(), a.epsilon, &m, a.budget)? {
        MinGamma::Exact { gamma, loss, expr } => json!({
            "result": "Exact",
            "gamma": gamma,
            "loss": loss,
            "expr": expr.to_value(),
        }),
        MinGamma::AboveBudget {
            budget,
            best_loss,
            saturated,
        } => json!({
            "result": "AboveBudget",
            "budget": budget,
            "best_loss": best_loss,
            "saturated": saturated,
        }),
    };
    Ok(pretty(&v))
}

fn classify(a: &FamilyArgs) -> Result<String, Error> {
    let members = family(a)?;
    let c = demos::trichotomy_classify(&members, a.gamma, a.dmax, a.budget)?;
    Ok(pretty(&serde_json::to_value(&c)?))
}

fn sweep(a: &FamilyArgs, f: Format) -> Result<String, Error> {
    let members = family(a)?;
    let insts: Vec<Instance> = members.iter().map(|(_, i)| i.clone()).collect();
    let cfg = GameConfig {
        tol: a.tol,
        behavior_cap: a.budget,
        ..GameConfig::default()
    };
    let r = minimax::sweep_with(&insts, a.gamma, a.dmax, &cfg)?;
    match f {
        Format::Csv => {
            let mut s = String::from("d,max_value,worst_member\n");
            for row in &r.rows {
                s.push_str(&format!(
                    "{},{},{}\n",
                    row.d, row.max_value, members[row.worst_member].0
                ));
            }
            Ok(s)
        }
        Format::Json => Ok(pretty(&serde_json::to_value(&r)?)),
        Format::Dot => Err(unsupported(f, "sweep")),
    }
}

fn export_dot(a: &ExportArgs) -> Result<String, Error> {
    let inst = load_instance(&a.instance)?;
    load_tree(&a.tree, &inst)?.to_dot(&inst)
}

fn run(cli: &Cli) -> Result<String, Error> {
    let fmt = |default: Format| cli.format.unwrap_or(default);
    let json_only = |cmd: &str| match cli.format {
        None | Some(Format::Json) => Ok(()),
        Some(f) => Err(unsupported(f, cmd)),
    };
    match &cli.cmd {
        Cmd::Demo(a) => json_only("demo").and_then(|_| demo(a)),
        Cmd::Boost(a) => boost(a, fmt(Format::Json)),
        Cmd::Compress(a) => compress(a, fmt(Format::Json)),
        Cmd::Oracle(a) => run_oracle(a, fmt(Format::Json)),
        Cmd::Profile(a) => profile(a, fmt(Format::Csv)),
        Cmd::Gcm(a) => json_only("gcm").and_then(|_| run_gcm(a)),
        Cmd::Classify(a) => json_only("classify").and_then(|_| classify(a)),
        Cmd::Sweep(a) => sweep(a, fmt(Format::Csv)),
        Cmd::ExportDot(a) => match cli.format {
            None | Some(Format::Dot) => export_dot(a),
            Some(f) => Err(unsupported(f, "export-dot")),
        },
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget { .. } | Error::DerandomizeFailed { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TREELUCID_LOG", "warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            eprintln!("error: cannot start {} worker threads: {e}", cli.jobs);
            return ExitCode::from(2);
        }
    }
    let result = run(&cli).and_then(|mut text| {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &cli.out {
            Some(p) => write_file(p, &text),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                stdout.flush()?;
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
