//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obmdp::instances::{self, random_cnf, random_snf, RandomParams, SatMode};
use obmdp::multi::{almost_sure_sets, audit_reach, audit_zero, limit_sure_sets, single_target, zero_sets, Mode};
use obmdp::prob::parse_ratio;
use obmdp::queries::{
    evaluate_query, nonreach_queries, nonreach_witness, Cmp, Fragment, GeneralizedQuery, Rel, Verdict,
};
use obmdp::simulate::{estimate_joint_reach, simulate, Budget, SimOptions, Simulator};
use obmdp::single::positive_reach_set;
use obmdp::strategy::{compile, Controller};
use obmdp::synth::{almost_sure_witness, limit_sure_witness};
use obmdp::{ExactSnf, NodeSet, NtId, TargetSet};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_targets(m: &ExactSnf, k: usize, rng: &mut ChaCha8Rng) -> TargetSet {
    let mut ids: Vec<NtId> = m.ids().collect();
    ids.shuffle(rng);
    ids.truncate(k);
    TargetSet::new(ids).expect("distinct targets")
}

fn random_model(seed: u64, max_n: usize) -> ExactSnf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xACCE);
    let params = RandomParams {
        nonterminals: rng.gen_range(3..=max_n),
        density: [0.2, 0.5, 0.8][rng.gen_range(0..3)],
        ..RandomParams::default()
    };
    random_snf(&params, seed)
}

fn c1_separation() -> Outcome {
    let t = Instant::now();
    let m = instances::example1();
    let k = m.targets(&["R1", "R2"]).map_err(|e| e.to_string())?;
    let start = m.id("M").unwrap();
    let as_ = almost_sure_sets(&m, &k).winning(k.full()).contains(start);
    let ls = limit_sure_sets(&m, &k).winning(k.full()).contains(start);
    let took = t.elapsed();
    ensure(!as_ && ls && took < Duration::from_secs(1), || format!("AS={as_} LS={ls} in {took:?}"))?;
    Ok(format!("AS false, LS true at M in {took:?}"))
}

fn c2_zero_sets() -> Outcome {
    let m = instances::example1();
    let k = m.targets(&["R1", "R2"]).map_err(|e| e.to_string())?;
    let z = zero_sets(&m, &k).zero(k.full());
    let oracle = enumerated_zero(&prefix_masks(&m, &k, Some(12)), 0b11);
    let names = m.project(&z);
    ensure(names == ["A", "R1", "R2"] && z == oracle, || {
        format!("Z = {names:?}, enumeration = {:?}", m.project(&oracle))
    })?;
    Ok("Z{R1,R2} = {A, R1, R2}, matches depth-12 enumeration".into())
}

fn c3_three_sat() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..200u64 {
        let vars = rng.gen_range(3..=8);
        let clauses = rng.gen_range(3..=12);
        let mut cnf = random_cnf(vars, clauses, 1000 + i);
        if i % 4 == 0 {
            // Every sign pattern over three variables: unsatisfiable.
            let mut picked: Vec<i32> = (1..=vars as i32).collect();
            picked.shuffle(&mut rng);
            let extra = cnf.clauses.len().saturating_sub(8).min(4);
            cnf.clauses.truncate(extra);
            for signs in 0..8 {
                cnf.clauses.push((0..3).map(|j| if signs >> j & 1 == 1 { picked[j] } else { -picked[j] }).collect());
            }
            cnf.clauses.shuffle(&mut rng);
        }
        let is_sat = satisfiable(&cnf);
        if is_sat {
            sat += 1;
        } else {
            unsat += 1;
        }
        for mode in [SatMode::Controlled, SatMode::Probabilistic] {
            let inst = instances::from_3sat(&cnf, mode).map_err(|e| e.to_string())?;
            let m = &inst.model;
            let names: Vec<&str> = inst.targets.iter().map(String::as_str).collect();
            let k = m.targets(&names).map_err(|e| e.to_string())?;
            let c1 = m.id(&inst.start).unwrap();
            let as_ = almost_sure_sets(m, &k);
            let ls = limit_sure_sets(m, &k);
            let in_as = as_.winning(k.full()).contains(c1);
            let in_ls = ls.winning(k.full()).contains(c1);
            let in_z = !as_.zero.nonzero(k.full()).contains(c1);
            // With fair coins only a valid formula is produced surely.
            let expect = match mode {
                SatMode::Controlled => is_sat,
                SatMode::Probabilistic => valid(&cnf),
            };
            ensure(in_as == expect && in_ls == expect && in_z == !is_sat, || {
                format!("formula {i} {mode:?}: sat={is_sat} AS={in_as} LS={in_ls} Z={in_z}")
            })?;
        }
    }
    Ok(format!("200 formulas ({sat} sat, {unsat} unsat), both modes, in {:?}", t.elapsed()))
}

fn c4_containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = 0;
    for seed in 0..300u64 {
        let m = random_model(4000 + seed, 12);
        let k = random_targets(&m, rng.gen_range(1..=4.min(m.len())), &mut rng);
        let z = zero_sets(&m, &k);
        let as_ = almost_sure_sets(&m, &k);
        let ls = limit_sure_sets(&m, &k);
        let mut problems = audit_zero(&m, &z);
        problems.extend(audit_reach(&m, &as_));
        problems.extend(audit_reach(&m, &ls));
        ensure(problems.is_empty(), || format!("instance {seed}: audit {problems:?}"))?;
        let masks = prefix_masks(&m, &k, None);
        for s in k.full().subsets().filter(|s| !s.is_empty()) {
            rows += 1;
            let zs = z.zero(s);
            ensure(zs == enumerated_zero(&masks, s.index() as u32), || {
                format!("instance {seed}: Z{s:?} != enumeration")
            })?;
            let fa = as_.winning(s);
            let fl = ls.winning(s);
            ensure(fa.is_subset(fl) && fl.is_disjoint(&zs), || format!("instance {seed}: chain fails at {s:?}"))?;
            for i in s.members() {
                let smaller = s.without(i);
                if smaller.is_empty() {
                    continue;
                }
                ensure(
                    z.zero(smaller).is_subset(&zs)
                        && fl.is_subset(ls.winning(smaller))
                        && fa.is_subset(as_.winning(smaller)),
                    || format!("instance {seed}: monotonicity fails between {smaller:?} and {s:?}"),
                )?;
            }
        }
    }
    Ok(format!("300 instances, {rows} subset rows"))
}

fn c5_single_target() -> Outcome {
    let t = Instant::now();
    let (mut members, mut refuted, mut worst) = (0, 0, 1.0f64);
    for seed in 0..300u64 {
        let m = random_model(5000 + seed, 12);
        let free = compile(&m, &uniform(&m)).map_err(|e| e.to_string())?;
        let fixed = compile(&m, &random_static(&m, seed)).map_err(|e| e.to_string())?;
        for q in m.ids() {
            let ls = single_target(&m, q, Mode::LimitSure);
            let as_ = single_target(&m, q, Mode::AlmostSure);
            ensure(ls.f == as_.f, || format!("instance {seed} target {}: LS != AS", m.name(q)))?;
            let k = TargetSet::new(vec![q]).unwrap();
            let reach = almost_sure_sets(&m, &k);
            ensure(reach.winning(k.full()) == &as_.f, || format!("instance {seed}: singleton row differs"))?;
            let sim = Simulator::new(&m, &k);
            for u in as_.f.iter().filter(|u| *u != q) {
                let w = almost_sure_witness(&m, &reach, k.full(), u).map_err(|e| e.to_string())?;
                let c = compile(&m, &w.spec).map_err(|e| e.to_string())?;
                let e = sim.estimate(u, &c, 10_000, Budget::new(200, 200_000), seed).map_err(|e| e.to_string())?;
                members += 1;
                worst = worst.min(e.p_hat);
                ensure(e.p_hat + 3.0 * e.stderr >= 0.99, || {
                    format!("instance {seed} target {} start {}: p_hat {}", m.name(q), m.name(u), e.p_hat)
                })?;
            }
            let positive = positive_reach_set(&m, q).set;
            for u in m.ids().filter(|u| !positive.contains(*u)) {
                for c in [&free, &fixed] {
                    let e = sim.estimate(u, c, 50, Budget::new(50, 20_000), seed).map_err(|e| e.to_string())?;
                    ensure(e.hits == 0, || format!("instance {seed}: {} reached from {}", m.name(q), m.name(u)))?;
                }
                refuted += 1;
            }
        }
    }
    Ok(format!(
        "LS = AS everywhere; {members} witnessed members (worst p_hat {worst:.4}); {refuted} non-members never hit; {:?}",
        t.elapsed()
    ))
}

fn c6_limit_sure_witness() -> Outcome {
    let m = instances::example1();
    let k = m.targets(&["R1", "R2"]).map_err(|e| e.to_string())?;
    let start = m.id("M").unwrap();
    let ls = limit_sure_sets(&m, &k);
    let mut parts = Vec::new();
    for e in ["1/2", "1/10", "1/100"] {
        let eps = parse_ratio(e).unwrap();
        let w = limit_sure_witness(&m, &ls, k.full(), start, &eps).map_err(|e| e.to_string())?;
        let c = compile(&m, &w.spec).map_err(|e| e.to_string())?;
        let est = estimate_joint_reach(&m, start, &c, &k, 20_000, Budget::new(400, 1_000_000), 6)
            .map_err(|e| e.to_string())?;
        let need = 1.0 - eps_f64(e) - 3.0 * est.stderr;
        ensure(est.p_hat >= need, || format!("eps {e}: p_hat {} < {need}", est.p_hat))?;
        parts.push(format!("eps {e}: d={:?} p_hat {:.4}", w.thresholds, est.p_hat));
    }
    Ok(parts.join("; "))
}

fn eps_f64(e: &str) -> f64 {
    let (a, b) = e.split_once('/').unwrap();
    a.parse::<f64>().unwrap() / b.parse::<f64>().unwrap()
}

fn c7_almost_sure_witness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut found, mut worst) = (0, 1.0f64);
    for seed in 0..100_000u64 {
        if found == 20 {
            break;
        }
        let m = random_model(7000 + seed, 12);
        let kk = 2 + found % 2;
        if m.len() <= kk {
            continue;
        }
        let k = random_targets(&m, kk, &mut rng);
        let reach = almost_sure_sets(&m, &k);
        let Some(u) = reach.winning(k.full()).iter().find(|u| k.position(*u).is_none()) else { continue };
        found += 1;
        let w = almost_sure_witness(&m, &reach, k.full(), u).map_err(|e| e.to_string())?;
        let c = compile(&m, &w.spec).map_err(|e| e.to_string())?;
        let est = estimate_joint_reach(&m, u, &c, &k, 20_000, Budget::new(300, 1_000_000), seed)
            .map_err(|e| e.to_string())?;
        worst = worst.min(est.p_hat);
        ensure(est.p_hat >= 0.99, || format!("instance {seed}: p_hat {} ({} truncated)", est.p_hat, est.truncated))?;
    }
    ensure(found == 20, || format!("only {found} instances with a non-target member"))?;
    Ok(format!("20 instances, worst p_hat {worst:.4}"))
}

fn c8_boolean_combinations() -> Outcome {
    let ask = |m: &ExactSnf, expr: &str| {
        let q = GeneralizedQuery::parse("M", expr).expect("query parses");
        evaluate_query(m, &q).expect("query evaluates")
    };
    let conj = "R(R1) < 1 & R(R2) < 1";
    let e2 = instances::example2();
    let inter = ask(&e2, "P[R(R1) & R(R2)] < 1");
    let conj2 = ask(&e2, conj);
    ensure(inter.verdict == Verdict::True && inter.fragment == Some(Fragment::InterLt1), || {
        format!("Example 2 inter {:?}", inter.verdict)
    })?;
    ensure(conj2.verdict == Verdict::False, || format!("Example 2 conj {:?}", conj2.verdict))?;

    let e3 = instances::example3();
    let ans = ask(&e3, conj);
    ensure(ans.verdict == Verdict::True, || format!("Example 3 conj {:?}", ans.verdict))?;
    let spec = ans.witness.ok_or("no witness")?;
    ensure(spec.controllers.iter().any(|c| matches!(c, Controller::Mixture { .. })), || {
        "witness is not randomized".into()
    })?;
    let start = e3.id("M").unwrap();
    let c = compile(&e3, &spec).map_err(|e| e.to_string())?;
    let mut probs = Vec::new();
    for q in ["R1", "R2"] {
        let k = e3.targets(&[q]).unwrap();
        let est =
            estimate_joint_reach(&e3, start, &c, &k, 4000, Budget::new(50, 10_000), 8).map_err(|e| e.to_string())?;
        ensure(est.p_hat < 0.9, || format!("Example 3 witness reaches {q} with p_hat {}", est.p_hat))?;
        probs.push(est.p_hat);
    }
    let (r1, r2) = (e3.id("R1").unwrap(), e3.id("R2").unwrap());
    let choices = static_choices(&e3);
    for choice in &choices {
        let r = restrict(&e3, choice);
        let avoid_both = [r1, r2].iter().all(|&q| obmdp::single::sub_one_reach_set(&r, q).set.contains(start));
        ensure(!avoid_both, || format!("deterministic choice {choice:?} keeps both below one"))?;
        let spec = obmdp::strategy::StrategySpec::deterministic(
            e3.ids()
                .filter_map(|u| choice[u.index()].map(|a| (e3.name(u).to_string(), e3.actions(u)[a].0.clone())))
                .collect(),
        );
        let c = compile(&e3, &spec).map_err(|e| e.to_string())?;
        let sure = ["R1", "R2"].iter().any(|q| {
            let k = e3.targets(&[q]).unwrap();
            let est = estimate_joint_reach(&e3, start, &c, &k, 500, Budget::new(50, 10_000), 9).unwrap();
            est.hits == est.samples
        });
        ensure(sure, || format!("deterministic choice {choice:?} misses both targets in simulation"))?;
    }
    Ok(format!(
        "Example 2 inter true / conj false; Example 3 conj true (mixture p_hat {:.3}, {:.3}), {} deterministic static strategies all fail",
        probs[0],
        probs[1],
        choices.len()
    ))
}

/// Sure avoidance as a safety game, computed here from scratch.
fn sure_avoid(m: &ExactSnf, k: &NodeSet) -> NodeSet {
    let mut w = k.complement();
    loop {
        let keep: Vec<NtId> = w
            .iter()
            .filter(|&u| match m.form(u) {
                obmdp::SnfForm::Linear(rules) => rules.iter().all(|(t, _)| t.is_none_or(|t| w.contains(t))),
                obmdp::SnfForm::Branching(l, r) => w.contains(*l) && w.contains(*r),
                obmdp::SnfForm::Controlled(acts) => acts.iter().any(|(_, t)| w.contains(*t)),
            })
            .collect();
        if keep.len() == w.len() {
            return w;
        }
        w = NodeSet::from_ids(m.len(), keep);
    }
}

/// Positive chance of avoiding `k`: a finite escape into sure avoidance.
fn positive_avoid(m: &ExactSnf, k: &NodeSet) -> NodeSet {
    let mut w = sure_avoid(m, k);
    loop {
        let add: Vec<NtId> = m
            .ids()
            .filter(|&u| !w.contains(u) && !k.contains(u))
            .filter(|&u| match m.form(u) {
                obmdp::SnfForm::Linear(rules) => rules.iter().any(|(t, _)| t.is_none_or(|t| w.contains(t))),
                obmdp::SnfForm::Branching(l, r) => w.contains(*l) && w.contains(*r),
                obmdp::SnfForm::Controlled(acts) => acts.iter().any(|(_, t)| w.contains(*t)),
            })
            .collect();
        if add.is_empty() {
            return w;
        }
        for u in add {
            w.insert(u);
        }
    }
}

fn c9_union_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let all =
        [Cmp::EQ0, Cmp::EQ1, Cmp::LT1, Cmp::GT0, Cmp { rel: Rel::Lt, one: false }, Cmp { rel: Rel::Gt, one: true }];
    let (mut exact, mut one_sided) = (0, 0);
    for seed in 0..100u64 {
        let m = random_model(9000 + seed, 10);
        let kk = rng.gen_range(1..=3.min(m.len() - 1).max(1));
        let k = random_targets(&m, kk, &mut rng);
        let ks = NodeSet::from_ids(m.len(), k.ids().iter().copied());
        let mut reach_any = NodeSet::empty(m.len());
        for &q in k.ids() {
            reach_any.union_with(&graph_reaches(&m, q));
        }
        for cmp in all {
            let nr = nonreach_queries(&m, k.ids(), cmp).map_err(|e| e.to_string())?;
            let fail = |what: &str| format!("instance {seed} NR{cmp}: {what}");
            match (cmp.rel, cmp.one) {
                (Rel::Eq, true) => ensure(nr.set == sure_avoid(&m, &ks), || fail("differs from sure avoidance"))?,
                (Rel::Gt, false) => ensure(nr.set == positive_avoid(&m, &ks), || fail("differs from escape fixpoint"))?,
                (Rel::Lt, true) => ensure(nr.set == reach_any, || fail("differs from graph reachability"))?,
                (Rel::Eq, false) => {
                    ensure(nr.set.is_subset(&reach_any), || fail("member cannot reach a target"))?;
                    for &q in k.ids() {
                        let as_q = single_target(&m, q, Mode::AlmostSure).f;
                        ensure(as_q.is_subset(&nr.set), || fail("misses an almost-sure start"))?;
                    }
                    for u in nr.set.iter() {
                        let w = nonreach_witness(&m, k.ids(), cmp, u)
                            .map_err(|e| e.to_string())?
                            .ok_or_else(|| fail("no witness"))?;
                        let c = compile(&m, &w).map_err(|e| e.to_string())?;
                        let misses = (0..300)
                            .filter(|&i| {
                                let p = simulate(&m, u, &c, &k, SimOptions::new(Budget::new(200, 100_000)), seed, i)
                                    .unwrap();
                                p.reached.is_empty()
                            })
                            .count();
                        ensure(misses <= 3, || fail(&format!("witness misses every target in {misses}/300 plays")))?;
                    }
                    one_sided += 1;
                    continue;
                }
                _ => ensure(nr.set.is_empty(), || fail("unsatisfiable comparison has members"))?,
            }
            exact += 1;
        }
    }
    Ok(format!("100 instances: {exact} exact comparisons, {one_sided} one-sided"))
}

fn c10_scaling() -> Outcome {
    let m = random_snf(&RandomParams { nonterminals: 40, ..RandomParams::default() }, 10);
    let mut points = Vec::new();
    for k in 2..=8usize {
        let ids: Vec<NtId> = (0..k).map(|i| NtId::new(i * 5)).collect();
        let targets = TargetSet::new(ids).unwrap();
        let mut best = f64::INFINITY;
        let started = Instant::now();
        let mut reps = 0;
        while reps < 3 || started.elapsed() < Duration::from_millis(200) {
            let t = Instant::now();
            std::hint::black_box(almost_sure_sets(&m, &targets));
            best = best.min(t.elapsed().as_secs_f64());
            reps += 1;
        }
        points.push((k as f64, best));
    }
    // Least squares on log t = a + b k.
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), (k, t)| (x + k, y + t.ln()));
    let (mx, my) = (sx / n, sy / n);
    let sxy: f64 = points.iter().map(|(k, t)| (k - mx) * (t.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|(k, _)| (k - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let growth = b.exp();
    let spread = points.iter().map(|(k, t)| (t.ln() - (a + b * k)).abs()).fold(0.0, f64::max).exp();
    let ratios: Vec<String> = points.iter().map(|(k, t)| format!("{:.1e}", t / 4f64.powf(*k))).collect();
    ensure(growth <= 4.0 && spread <= 4.0, || format!("growth per target {growth:.2}, spread {spread:.2}"))?;
    Ok(format!(
        "growth per target {growth:.2} (bound 4), max deviation from fit x{spread:.2}; t/4^k = [{}]",
        ratios.join(", ")
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Example-1 separation", c1_separation),
        ("Example-1 zero sets", c2_zero_sets),
        ("3-SAT oracle equivalence", c3_three_sat),
        ("containment and monotonicity", c4_containment),
        ("single-target coincidence", c5_single_target),
        ("limit-sure witness quality", c6_limit_sure_witness),
        ("almost-sure witness quality", c7_almost_sure_witness),
        ("boolean combinations", c8_boolean_combinations),
        ("union-reduction consistency", c9_union_reduction),
        ("scaling in k", c10_scaling),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
