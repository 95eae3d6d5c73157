//! Sampling behaviour and end-to-end witness checks.

mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obmdp::instances::{self, from_3sat, random_cnf, random_general, SatMode};
use obmdp::multi::almost_sure_sets;
use obmdp::normalize::to_snf;
use obmdp::queries::conj_lt1;
use obmdp::simulate::{estimate_general, estimate_joint_reach, Budget, Estimate};
use obmdp::strategy::{compile, StrategySpec};
use obmdp::synth::almost_sure_witness;
use obmdp::TargetSet;

use common::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn estimates_do_not_depend_on_the_thread_count() {
    let m = instances::example1();
    let k = m.targets(&["R1", "R2"]).unwrap();
    let strategy = compile(&m, &uniform(&m)).unwrap();
    let start = m.id("M").unwrap();
    let run = || estimate_joint_reach(&m, start, &strategy, &k, 3000, Budget::new(50, 10_000), 7).unwrap();
    assert_eq!(in_pool(1, run), in_pool(3, run));
}

#[test]
fn normalized_and_general_models_sample_alike() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let g = random_general(5, seed);
        let s = to_snf(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = g.ids().nth(rng.gen_range(0..g.len())).unwrap();
        let mut general: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        let mut det = BTreeMap::new();
        for u in g.ids() {
            if let obmdp::model::Definition::Controlled(acts) = g.definition(u) {
                let a = acts[rng.gen_range(0..acts.len())].name.clone();
                general.insert(g.name(u).to_string(), vec![(a.clone(), 1.0)]);
                det.insert(g.name(u).to_string(), a);
            }
        }
        let start = g.ids().next().unwrap();
        let budget = Budget::new(200, 20_000);
        let a = estimate_general(&g, start, &general, &[target], 2000, budget, seed).unwrap();
        let k = TargetSet::new(vec![s.id(g.name(target)).unwrap()]).unwrap();
        let c = compile(&s, &StrategySpec::deterministic(det)).unwrap();
        let b =
            estimate_joint_reach(&s, s.project_start(g.name(start)).unwrap(), &c, &k, 2000, budget, seed ^ 1).unwrap();
        if a.truncated + b.truncated > 20 {
            continue;
        }
        checked += 1;
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt().max(1e-3);
        assert!(
            (a.p_hat - b.p_hat).abs() <= 4.0 * se,
            "seed {seed}: general {:.4} vs normalized {:.4}",
            a.p_hat,
            b.p_hat
        );
    }
    assert!(checked >= 20, "only {checked} models without truncation");
}

#[test]
fn satisfiable_formulas_yield_working_witnesses() {
    let mut seen = 0;
    for seed in 0..30u64 {
        let cnf = random_cnf(3 + (seed % 8) as usize, 3 + (seed % 5) as usize, seed);
        if !satisfiable(&cnf) {
            continue;
        }
        let inst = from_3sat(&cnf, SatMode::Controlled).unwrap();
        let m = &inst.model;
        let names: Vec<&str> = inst.targets.iter().map(String::as_str).collect();
        let k = m.targets(&names).unwrap();
        let r = almost_sure_sets(m, &k);
        let start = m.id(&inst.start).unwrap();
        let w = almost_sure_witness(m, &r, k.full(), start).expect("satisfiable formulas are winning");
        let c = compile(m, &w.spec).unwrap();
        let e = estimate_joint_reach(m, start, &c, &k, 500, Budget::new(100, 100_000), seed).unwrap();
        assert_eq!(e.hits, e.samples, "seed {seed}: {e:?}");
        seen += 1;
    }
    assert!(seen >= 10);
}

#[test]
fn mixture_witness_keeps_each_target_below_one() {
    let m = instances::example1();
    let start = m.id("M").unwrap();
    let ids = [m.id("R1").unwrap(), m.id("R2").unwrap()];
    let f = conj_lt1(&m, &ids);
    assert!(f.set.contains(start));
    let c = compile(&m, f.witness.as_ref().unwrap()).unwrap();
    for q in ids {
        let k = TargetSet::new(vec![q]).unwrap();
        let e: Estimate = estimate_joint_reach(&m, start, &c, &k, 4000, Budget::new(200, 50_000), 11).unwrap();
        assert!(e.p_hat < 0.6 && e.p_hat > 0.4, "{}: {e:?}", m.name(q));
    }
}
