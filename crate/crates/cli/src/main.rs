//! `obmdp`: command-line front end.
//!
//! Exit codes: 0 when the checked property holds (or the command succeeded),
//! 1 when it does not, 2 on any error.

use std::collections::BTreeMap;
use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use obmdp::dsl::{parse_obmdp, serialize_snf};
use obmdp::graph::DependencyGraph;
use obmdp::instances::{self, RandomParams, SatMode};
use obmdp::multi::{reach_sets, zero_sets, Mode, ReachRow, ReachSets, ZeroSets};
use obmdp::normalize::to_snf;
use obmdp::prob::parse_ratio;
use obmdp::queries::{evaluate_query, GeneralizedQuery, Verdict};
use obmdp::simulate::{simulate, Budget, SimOptions, Simulator};
use obmdp::single::{positive_reach_set, sub_one_reach_set};
use obmdp::strategy::{compile, StrategySpec};
use obmdp::synth::{almost_sure_witness, limit_sure_witness, positive_witness};
use obmdp::{ExactSnf, NodeSet, NtId, Origin, Subset, TargetSet};

#[derive(Parser)]
#[command(name = "obmdp", version, about = "Qualitative multi-target reachability for ordered branching MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model.
    Parse(ParseArgs),
    /// Convert a model to simple normal form.
    Normalize(NormalizeArgs),
    /// Print the dependency graph, its SCCs or its MECs.
    Graph(GraphArgs),
    /// Single-target sets.
    Single(SingleArgs),
    /// Multi-target zero, limit-sure or almost-sure sets.
    Check(CheckArgs),
    /// Evaluate a boolean combination of qualitative objectives.
    Query(QueryArgs),
    /// Sample plays under a strategy.
    Simulate(SimulateArgs),
    /// Emit built-in, reduced or random models.
    Gen(GenArgs),
}

#[derive(Args)]
struct Common {
    /// Model file in the DSL.
    file: PathBuf,
    /// Print a JSON document instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct NormalizeArgs {
    #[command(flatten)]
    common: Common,
    /// Write the normal form here and the origin map next to it.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    common: Common,
    /// Maximal end-components inside this comma-separated set ("all" for every vertex).
    #[arg(long)]
    mec: Option<String>,
    /// Strongly connected components inside this set ("all" for every vertex).
    #[arg(long)]
    scc: Option<String>,
    /// Graphviz output.
    #[arg(long)]
    dot: bool,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    target: String,
    #[arg(long, group = "kind")]
    positive: bool,
    #[arg(long = "sub-one", group = "kind")]
    sub_one: bool,
    #[arg(long = "almost-sure", group = "kind")]
    almost_sure: bool,
    #[arg(long)]
    start: Option<String>,
    /// Write a witness strategy (JSON).
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated target non-terminals.
    #[arg(long)]
    targets: String,
    #[arg(long, group = "kind")]
    zero: bool,
    #[arg(long = "limit-sure", group = "kind")]
    limit_sure: bool,
    #[arg(long = "almost-sure", group = "kind")]
    almost_sure: bool,
    #[arg(long)]
    start: Option<String>,
    /// Report every subset of the targets.
    #[arg(long = "all-subsets")]
    all_subsets: bool,
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Error budget of a limit-sure witness, as p/q.
    #[arg(long)]
    epsilon: Option<String>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    start: String,
    /// Query expression, e.g. 'R(R1) < 1 & R(R2) < 1'.
    #[arg(long)]
    expr: String,
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Strategy document (JSON).
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long)]
    start: String,
    #[arg(long)]
    targets: String,
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(long = "max-gens", default_value_t = 200)]
    max_gens: u64,
    #[arg(long = "max-nodes", default_value_t = 1_000_000)]
    max_nodes: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Also print the full tree of this sample.
    #[arg(long)]
    trace: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    what: GenWhat,
}

#[derive(Subcommand)]
enum GenWhat {
    Example1,
    Example2,
    Example3,
    /// The 3-SAT reduction of a DIMACS formula.
    Sat3 {
        #[arg(long)]
        cnf: PathBuf,
        /// Replace the controlled variable choices by fair coins.
        #[arg(long)]
        probabilistic: bool,
    },
    /// A random model in simple normal form.
    Random {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        nonterminals: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long = "max-actions", default_value_t = 3)]
        max_actions: usize,
    },
}

const DEFAULT_SEED: u64 = 20240601;

struct Output {
    json: bool,
    color: bool,
}

impl Output {
    fn verdict(&self, holds: bool, text: &str) -> String {
        if !self.color {
            return text.to_string();
        }
        let code = if holds { "32" } else { "31" };
        format!("\x1b[{code}m{text}\x1b[0m")
    }
}

fn color_enabled() -> bool {
    match std::env::var("OBMDP_COLOR").as_deref() {
        Ok("1") | Ok("always") | Ok("true") => true,
        Ok("auto") => std::io::stdout().is_terminal(),
        _ => false,
    }
}

struct Loaded {
    snf: ExactSnf,
    hash: String,
}

fn load(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).context("model file is not UTF-8")?;
    let m = parse_obmdp(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(Loaded { snf: to_snf(&m), hash: format!("sha256:{}", hex::encode(Sha256::digest(&bytes))) })
}

fn envelope(command: &str, hash: &str, result: Value, provenance: Value) -> String {
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "input_hash": hash,
        "command": command,
        "result": result,
        "provenance": provenance,
    });
    serde_json::to_string_pretty(&doc).expect("json values serialize")
}

fn names(list: &str) -> Vec<&str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn resolve_targets(m: &ExactSnf, list: &str) -> Result<TargetSet> {
    let ns = names(list);
    if ns.is_empty() {
        bail!("no targets given");
    }
    for n in &ns {
        m.project_start(n)?;
    }
    Ok(m.targets(&ns)?)
}

fn set_text(items: &[String]) -> String {
    format!("{{{}}}", items.join(", "))
}

fn subset_names(m: &ExactSnf, k: &TargetSet, s: Subset) -> Vec<String> {
    k.select(s).into_iter().map(|q| m.name(q).to_string()).collect()
}

fn write_witness(path: &Path, spec: &StrategySpec) -> Result<()> {
    fs::write(path, spec.to_json() + "\n").with_context(|| format!("writing {}", path.display()))
}

fn exit(holds: bool) -> ExitCode {
    if holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    // Exit quietly when the reader of a pipe goes away.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let color = color_enabled();
    match cli.command {
        Command::Parse(a) => cmd_parse(a, color),
        Command::Normalize(a) => cmd_normalize(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Single(a) => cmd_single(a, color),
        Command::Check(a) => cmd_check(a, color),
        Command::Query(a) => cmd_query(a, color),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

fn cmd_parse(a: ParseArgs, _color: bool) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let m = &l.snf;
    let declared: Vec<NtId> = m.ids().filter(|u| !m.is_auxiliary(*u)).collect();
    if a.common.json {
        let rows: Vec<Value> =
            declared.iter().map(|&u| json!({ "name": m.name(u), "controlled": !m.actions(u).is_empty() })).collect();
        let result = json!({ "nonterminals": rows, "snf_size": m.len() });
        println!("{}", envelope("parse", &l.hash, result, Value::Null));
    } else {
        println!("{} non-terminals, {} in normal form", declared.len(), m.len());
        for u in declared {
            let kind = if m.actions(u).is_empty() { "probabilistic" } else { "controlled" };
            println!("  {} {kind}", m.name(u));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn origin_map(m: &ExactSnf) -> Value {
    let map: BTreeMap<String, Value> = m
        .ids()
        .map(|u| {
            let v = match m.origin(u) {
                Origin::Declared(s) => json!({ "declared": m.source_names()[s.index()] }),
                Origin::Auxiliary(s) => json!({ "auxiliary": m.source_names()[s.index()] }),
            };
            (m.name(u).to_string(), v)
        })
        .collect();
    json!(map)
}

fn cmd_normalize(a: NormalizeArgs) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let text = serialize_snf(&l.snf);
    let origins = origin_map(&l.snf);
    match &a.out {
        Some(out) => {
            fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
            let mut side = out.clone().into_os_string();
            side.push(".origin.json");
            fs::write(&side, serde_json::to_string_pretty(&origins)? + "\n")
                .with_context(|| format!("writing {}", Path::new(&side).display()))?;
            if a.common.json {
                let result = json!({ "snf": out, "origin_map": side.to_string_lossy() });
                println!("{}", envelope("normalize", &l.hash, result, Value::Null));
            }
        }
        None if a.common.json => {
            let result = json!({ "snf": text, "origin_map": origins });
            println!("{}", envelope("normalize", &l.hash, result, Value::Null));
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn node_set(m: &ExactSnf, list: &str) -> Result<NodeSet> {
    if list.trim() == "all" {
        return Ok(NodeSet::full(m.len()));
    }
    let ids = names(list).into_iter().map(|n| m.require(n)).collect::<Result<Vec<_>, _>>()?;
    Ok(NodeSet::from_ids(m.len(), ids))
}

fn cmd_graph(a: GraphArgs) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let m = &l.snf;
    let g = DependencyGraph::new(m);
    let label = |c: &[NtId]| c.iter().map(|u| m.name(*u).to_string()).collect::<Vec<_>>();
    let mut result = serde_json::Map::new();
    if let Some(set) = &a.scc {
        let d = g.sccs(&node_set(m, set)?);
        let comps: Vec<Vec<String>> = d.components.iter().map(|c| label(c)).collect();
        if !a.common.json {
            for c in &comps {
                println!("scc {}", set_text(c));
            }
        }
        result.insert("sccs".into(), json!(comps));
    }
    if let Some(set) = &a.mec {
        let d = g.mecs(&node_set(m, set)?);
        let comps: Vec<Vec<String>> = d.components.iter().map(|c| label(c)).collect();
        if !a.common.json {
            for c in &comps {
                println!("mec {}", set_text(c));
            }
        }
        result.insert("mecs".into(), json!(comps));
    }
    if a.scc.is_none() && a.mec.is_none() {
        let edges: Vec<(String, String)> =
            g.edges().into_iter().map(|(u, v)| (m.name(u).to_string(), m.name(v).to_string())).collect();
        if a.dot {
            print!("{}", g.to_dot(m.names()));
        } else if !a.common.json {
            for (u, v) in &edges {
                println!("{u} -> {v}");
            }
        }
        result.insert("edges".into(), json!(edges));
    }
    if a.common.json {
        println!("{}", envelope("graph", &l.hash, Value::Object(result), Value::Null));
    }
    Ok(ExitCode::SUCCESS)
}

fn det_map(m: &ExactSnf, choice: &[Option<usize>]) -> BTreeMap<String, String> {
    m.ids().filter_map(|u| choice[u.index()].map(|a| (m.name(u).to_string(), m.actions(u)[a].0.clone()))).collect()
}

fn cmd_single(a: SingleArgs, color: bool) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let m = &l.snf;
    let out = Output { json: a.common.json, color };
    let q = m.project_start(&a.target)?;
    let start = a.start.as_deref().map(|s| m.project_start(s)).transpose()?;
    let (kind, set, witness) = if a.positive {
        let p = positive_reach_set(m, q);
        ("positive", p.set.clone(), Some(StrategySpec::deterministic(det_map(m, &p.choice))))
    } else if a.sub_one {
        let w = sub_one_reach_set(m, q);
        ("sub-one", w.set.clone(), Some(StrategySpec::deterministic(det_map(m, &w.choice))))
    } else if a.almost_sure {
        let k = TargetSet::new(vec![q])?;
        let r = reach_sets(m, &k, Mode::AlmostSure);
        let set = r.winning(k.full()).clone();
        let w = match start {
            Some(s) if set.contains(s) => Some(almost_sure_witness(m, &r, k.full(), s)?.spec),
            _ => None,
        };
        ("almost-sure", set, w)
    } else {
        bail!("choose one of --positive, --sub-one, --almost-sure");
    };
    let members = m.project(&set);
    let holds = start.is_none_or(|s| set.contains(s));
    if let Some(path) = &a.witness {
        match (&witness, start) {
            (Some(w), s) if s.is_none_or(|s| set.contains(s)) => write_witness(path, w)?,
            (None, None) => bail!("an almost-sure witness needs --start"),
            _ => bail!("no witness: the start is not a member"),
        }
    }
    if out.json {
        let result = json!({
            "kind": kind,
            "target": a.target,
            "set": members,
            "start": a.start,
            "holds": start.map(|_| holds),
        });
        println!("{}", envelope("single", &l.hash, result, Value::Null));
    } else {
        println!("{kind}({}) = {}", a.target, set_text(&members));
        if let Some(s) = &a.start {
            println!("start {s}: {}", out.verdict(holds, if holds { "member" } else { "not a member" }));
        }
    }
    Ok(exit(holds))
}

fn zero_provenance(m: &ExactSnf, z: &ZeroSets, s: Subset) -> Value {
    let row = z.row(s);
    let map: BTreeMap<String, &str> = row
        .order
        .iter()
        .filter(|u| !m.is_auxiliary(**u))
        .filter_map(|u| row.reasons[u.index()].map(|r| (m.name(*u).to_string(), r.step())))
        .collect();
    json!({ "nonzero": map })
}

fn reach_provenance(m: &ExactSnf, row: &ReachRow) -> Value {
    let pick = |reasons: Vec<Option<&'static str>>| -> BTreeMap<String, &'static str> {
        m.ids()
            .filter(|u| !m.is_auxiliary(*u))
            .filter_map(|u| reasons[u.index()].map(|r| (m.name(u).to_string(), r)))
            .collect()
    };
    json!({
        "D": pick(row.d_reasons.iter().map(|r| r.map(|x| x.step())).collect()),
        "S": pick(row.s_reasons.iter().map(|r| r.map(|x| x.step())).collect()),
        "F": pick(row.f_reasons.iter().map(|r| r.map(|x| x.step())).collect()),
        "components": row.components.iter().map(|c| json!({
            "nodes": c.nodes.iter().map(|u| m.name(*u)).collect::<Vec<_>>(),
            "hit": c.hit.members().collect::<Vec<_>>(),
            "accepted": c.accepted,
        })).collect::<Vec<_>>(),
    })
}

#[derive(Serialize)]
struct SubsetReport {
    targets: Vec<String>,
    set: Vec<String>,
}

fn cmd_check(a: CheckArgs, color: bool) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let m = &l.snf;
    let out = Output { json: a.common.json, color };
    let k = resolve_targets(m, &a.targets)?;
    let start = a.start.as_deref().map(|s| m.project_start(s)).transpose()?;
    let full = k.full();
    let subsets: Vec<Subset> =
        if a.all_subsets { full.subsets().filter(|s| !s.is_empty()).collect() } else { vec![full] };
    let epsilon = a
        .epsilon
        .as_deref()
        .map(|e| parse_ratio(e).ok_or_else(|| anyhow!("epsilon `{e}` is not a ratio p/q")))
        .transpose()?;
    enum Sets {
        Zero(ZeroSets),
        Reach(ReachSets),
    }
    let (kind, sets) = if a.zero {
        ("zero", Sets::Zero(zero_sets(m, &k)))
    } else if a.limit_sure {
        ("limit-sure", Sets::Reach(reach_sets(m, &k, Mode::LimitSure)))
    } else if a.almost_sure {
        ("almost-sure", Sets::Reach(reach_sets(m, &k, Mode::AlmostSure)))
    } else {
        bail!("choose one of --zero, --limit-sure, --almost-sure");
    };
    let set_of = |s: Subset| -> NodeSet {
        match &sets {
            Sets::Zero(z) => z.zero(s),
            Sets::Reach(r) => r.winning(s).clone(),
        }
    };
    let reports: Vec<SubsetReport> =
        subsets.iter().map(|&s| SubsetReport { targets: subset_names(m, &k, s), set: m.project(&set_of(s)) }).collect();
    let holds = start.is_none_or(|u| set_of(full).contains(u));
    if let Some(path) = &a.witness {
        let u = start.ok_or_else(|| anyhow!("a witness needs --start"))?;
        let spec = match &sets {
            Sets::Zero(z) => {
                if holds {
                    bail!("no witness: every strategy has probability 0");
                }
                positive_witness(m, z, full, u)?.spec
            }
            Sets::Reach(r) if r.mode == Mode::AlmostSure => almost_sure_witness(m, r, full, u)?.spec,
            Sets::Reach(r) => {
                let eps = epsilon.clone().ok_or_else(|| anyhow!("a limit-sure witness needs --epsilon"))?;
                let w = limit_sure_witness(m, r, full, u, &eps)?;
                if !out.json {
                    println!("witness thresholds: {:?}", w.thresholds);
                }
                w.spec
            }
        };
        write_witness(path, &spec)?;
    }
    let label = if kind == "zero" { "Z" } else { "F" };
    if out.json {
        let provenance = match &sets {
            Sets::Zero(z) => json!(subsets.iter().map(|s| zero_provenance(m, z, *s)).collect::<Vec<_>>()),
            Sets::Reach(r) => json!(subsets.iter().map(|s| reach_provenance(m, r.row(*s))).collect::<Vec<_>>()),
        };
        let result = json!({
            "kind": kind,
            "targets": subset_names(m, &k, full),
            "rows": reports,
            "start": a.start,
            "holds": start.map(|_| holds),
        });
        println!("{}", envelope("check", &l.hash, result, provenance));
    } else {
        println!("{kind} sets");
        for r in &reports {
            println!("{label}{} = {}", set_text(&r.targets), set_text(&r.set));
        }
        if let Some(s) = &a.start {
            println!("start {s}: {}", out.verdict(holds, if holds { "holds" } else { "does not hold" }));
        }
    }
    Ok(exit(holds))
}

fn cmd_query(a: QueryArgs, color: bool) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let m = &l.snf;
    let out = Output { json: a.common.json, color };
    let q = GeneralizedQuery::parse(&a.start, &a.expr)?;
    let ans = evaluate_query(m, &q)?;
    let verdict = match ans.verdict {
        Verdict::True => "true",
        Verdict::False => "false",
        Verdict::Unsupported => "unsupported",
    };
    if let Some(path) = &a.witness {
        match &ans.witness {
            Some(w) => write_witness(path, w)?,
            None => bail!("no witness available for this answer"),
        }
    }
    if out.json {
        let result = json!({
            "start": a.start,
            "query": a.expr,
            "rewritten": ans.rewritten.formula.to_string(),
            "verdict": ans.verdict,
            "fragment": ans.fragment,
            "members": ans.members,
            "bound": ans.bound.map(|b| b.to_string()),
        });
        println!("{}", envelope("query", &l.hash, result, Value::Null));
    } else {
        println!("query: {}", ans.rewritten.formula);
        if let Some(f) = ans.fragment {
            println!("fragment: {}", serde_json::to_value(f)?.as_str().unwrap_or_default());
            println!("members: {}", set_text(&ans.members));
        }
        println!("start {}: {}", a.start, out.verdict(ans.verdict == Verdict::True, verdict));
    }
    Ok(exit(ans.verdict == Verdict::True))
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode> {
    let l = load(&a.common.file)?;
    let m = &l.snf;
    let text = fs::read_to_string(&a.strategy).with_context(|| format!("reading {}", a.strategy.display()))?;
    let spec = StrategySpec::from_json(&text)?;
    let strategy = compile(m, &spec)?;
    let start = m.project_start(&a.start)?;
    let k = resolve_targets(m, &a.targets)?;
    let budget = Budget::new(a.max_gens, a.max_nodes);
    let sim = Simulator::new(m, &k);
    let estimate = match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .context("building the thread pool")?
            .install(|| sim.estimate(start, &strategy, a.samples, budget, a.seed))?,
        None => sim.estimate(start, &strategy, a.samples, budget, a.seed)?,
    };
    let trace =
        a.trace.map(|i| simulate(m, start, &strategy, &k, SimOptions::recording(budget), a.seed, i)).transpose()?;
    if a.common.json {
        let result = json!({ "seed": a.seed, "estimate": estimate, "trace": trace });
        let provenance = json!({ "strategy": spec, "max_gens": a.max_gens, "max_nodes": a.max_nodes });
        println!("{}", envelope("simulate", &l.hash, result, provenance));
    } else {
        println!("seed: {}", a.seed);
        println!("samples: {}", estimate.samples);
        println!("hits: {}", estimate.hits);
        println!("truncated: {}", estimate.truncated);
        println!("p_hat: {:.6} (stderr {:.6})", estimate.p_hat, estimate.stderr);
        if let Some(t) = trace {
            println!("{}", serde_json::to_string_pretty(&t)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode> {
    let text = match a.what {
        GenWhat::Example1 => instances::EXAMPLE1.to_string(),
        GenWhat::Example2 => instances::EXAMPLE2.to_string(),
        GenWhat::Example3 => instances::EXAMPLE3.to_string(),
        GenWhat::Sat3 { cnf, probabilistic } => {
            let src = fs::read_to_string(&cnf).with_context(|| format!("reading {}", cnf.display()))?;
            let f = instances::parse_dimacs(&src)?;
            let mode = if probabilistic { SatMode::Probabilistic } else { SatMode::Controlled };
            instances::from_3sat(&f, mode)?;
            instances::sat3_text(&f, mode)
        }
        GenWhat::Random { seed, nonterminals, density, max_actions } => {
            if nonterminals == 0 || !(0.0..=1.0).contains(&density) || max_actions == 0 {
                bail!("need at least one non-terminal and action, and a density in [0, 1]");
            }
            let params = RandomParams { nonterminals, density, max_actions, ..RandomParams::default() };
            serialize_snf(&instances::random_snf(&params, seed))
        }
    };
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
