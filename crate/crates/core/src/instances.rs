//! Model builders: the worked examples, the reduction from 3-SAT, and random
//! instances.

use std::fmt::Write as _;

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{parse_obmdp, parse_snf};
use crate::error::Error;
use crate::model::{ActionDef, Branch, Definition, NtId, Obmdp, Origin, SnfForm, SnfObmdp};
use crate::normalize::to_snf;
use crate::prob::Probability;
use crate::Rational;

pub const EXAMPLE1: &str = "\
nonterminal M controlled {
  a -> M A;
  b -> R2;
}
nonterminal A probabilistic {
  1/2 -> R1;
  1/2 -> ;
}
nonterminal R1 probabilistic {
  1 ->;
}
nonterminal R2 probabilistic {
  1 ->;
}
";

pub const EXAMPLE2: &str = "\
nonterminal M controlled {
  a -> T;
  b -> Tp;
}
nonterminal T probabilistic {
  1 -> L R1;
}
nonterminal Tp probabilistic {
  1 -> R1 R2;
}
nonterminal L probabilistic {
  1/2 -> ;
  1/2 -> R2;
}
nonterminal R1 probabilistic {
  1 ->;
}
nonterminal R2 probabilistic {
  1 ->;
}
";

pub const EXAMPLE3: &str = "\
nonterminal M controlled {
  a -> T;
  b -> Tp;
}
nonterminal T probabilistic {
  1 -> L R1;
}
nonterminal Tp probabilistic {
  1 -> L R2;
}
nonterminal L probabilistic {
  1/2 -> R1;
  1/2 -> R2;
}
nonterminal R1 probabilistic {
  1 ->;
}
nonterminal R2 probabilistic {
  1 ->;
}
";

/// Limit-sure but not almost-sure for `{R1, R2}` from `M`.
pub fn example1() -> SnfObmdp<Rational> {
    to_snf(&parse_obmdp(EXAMPLE1).expect("built-in example"))
}

/// Positive chance of missing one of `R1`, `R2` but not both.
pub fn example2() -> SnfObmdp<Rational> {
    parse_snf(EXAMPLE2).expect("built-in example")
}

/// Needs a randomized strategy to keep both reach probabilities below one.
pub fn example3() -> SnfObmdp<Rational> {
    parse_snf(EXAMPLE3).expect("built-in example")
}

/// A CNF formula; literals are non-zero integers as in DIMACS.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cnf {
    pub num_vars: usize,
    pub clauses: Vec<Vec<i32>>,
}

impl Cnf {
    fn clause_true(clause: &[i32], assignment: u64) -> bool {
        clause.iter().any(|&lit| {
            let v = (lit.unsigned_abs() - 1) as u64;
            (assignment >> v & 1 == 1) == (lit > 0)
        })
    }

    /// Number of satisfying assignments, by enumeration.
    pub fn count_models(&self) -> u64 {
        assert!(self.num_vars <= 30, "enumeration limited to 30 variables");
        (0..1u64 << self.num_vars).filter(|&a| self.clauses.iter().all(|c| Self::clause_true(c, a))).count() as u64
    }
}

/// Reads a DIMACS CNF file.
pub fn parse_dimacs(text: &str) -> Result<Cnf, Error> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(Error::Dimacs { line: ln + 1, message: "expected `p cnf <vars> <clauses>`".into() });
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Dimacs { line: ln + 1, message: format!("bad number `{s}`") })
            };
            header = Some((parse(parts[2])?, parse(parts[3])?));
            continue;
        }
        let Some((nv, _)) = header else {
            return Err(Error::Dimacs { line: ln + 1, message: "clause before the header".into() });
        };
        for tok in line.split_whitespace() {
            let lit: i32 =
                tok.parse().map_err(|_| Error::Dimacs { line: ln + 1, message: format!("bad literal `{tok}`") })?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else {
                if lit.unsigned_abs() as usize > nv {
                    return Err(Error::Dimacs { line: ln + 1, message: format!("variable {lit} out of range") });
                }
                current.push(lit);
            }
        }
    }
    let Some((num_vars, nc)) = header else {
        return Err(Error::Dimacs { line: 0, message: "missing header".into() });
    };
    if !current.is_empty() {
        clauses.push(current);
    }
    if clauses.len() != nc {
        return Err(Error::Dimacs {
            line: 0,
            message: format!("header announces {nc} clauses, found {}", clauses.len()),
        });
    }
    Ok(Cnf { num_vars, clauses })
}

/// Whether the variable choices are made by the controller or by fair coins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SatMode {
    Controlled,
    Probabilistic,
}

/// The reduction output: model, clause targets, and start symbol.
#[derive(Clone, Debug)]
pub struct SatInstance {
    pub model: SnfObmdp<Rational>,
    pub targets: Vec<String>,
    pub start: String,
}

fn clause_lists(cnf: &Cnf, var: usize) -> (Vec<String>, Vec<String>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (q, clause) in cnf.clauses.iter().enumerate() {
        let v = var as i32;
        if clause.contains(&v) {
            pos.push(format!("R{}", q + 1));
        }
        if clause.contains(&-v) {
            neg.push(format!("R{}", q + 1));
        }
    }
    (pos, neg)
}

fn write_rule(out: &mut String, name: &str, rhs: &[&str]) {
    let _ = writeln!(
        out,
        "nonterminal {name} probabilistic {{\n  1 ->{};\n}}",
        rhs.iter().map(|s| format!(" {s}")).collect::<String>()
    );
}

/// A nested pair chain spelling out `list` (length at least two), named `name`.
fn write_chain(out: &mut String, name: &str, list: &[String], depth: usize, base: &str) {
    if list.len() == 2 {
        write_rule(out, name, &[&list[0], &list[1]]);
    } else {
        let inner = format!("{base}_{}", depth + 1);
        write_rule(out, name, &[&inner, &list[0]]);
        write_chain(out, &inner, &list[1..], depth + 1, base);
    }
}

fn write_literal(out: &mut String, head: &str, clauses: &[String], next: Option<&str>) {
    match (clauses.len(), next) {
        (0, None) => write_rule(out, head, &[]),
        (0, Some(c)) => write_rule(out, head, &[c]),
        (1, None) => write_rule(out, head, &[&clauses[0]]),
        (1, Some(c)) => write_rule(out, head, &[&clauses[0], c]),
        (_, Some(c)) => {
            let inner = format!("{head}_1");
            write_rule(out, head, &[&inner, c]);
            write_chain(out, &inner, clauses, 1, head);
        }
        (_, None) => write_chain(out, head, clauses, 0, head),
    }
}

/// Text of the reduction from a CNF formula, already in SNF.
pub fn sat3_text(cnf: &Cnf, mode: SatMode) -> String {
    let mut out = String::new();
    let n = cnf.num_vars;
    for r in 1..=n {
        let (ta, tb) = (format!("T{r}a"), format!("T{r}b"));
        match mode {
            SatMode::Controlled => {
                let _ = writeln!(out, "nonterminal C{r} controlled {{\n  a -> {ta};\n  b -> {tb};\n}}");
            }
            SatMode::Probabilistic => {
                let _ = writeln!(out, "nonterminal C{r} probabilistic {{\n  1/2 -> {ta};\n  1/2 -> {tb};\n}}");
            }
        }
        let next = (r < n).then(|| format!("C{}", r + 1));
        let (pos, neg) = clause_lists(cnf, r);
        write_literal(&mut out, &ta, &pos, next.as_deref());
        write_literal(&mut out, &tb, &neg, next.as_deref());
    }
    for q in 1..=cnf.clauses.len() {
        write_rule(&mut out, &format!("R{q}"), &[]);
    }
    out
}

/// The reduction from CNF satisfiability.
///
/// From `C1`, all clause targets can be produced almost surely (equivalently
/// limit surely) iff the formula is satisfiable, and with probability zero
/// otherwise. With fair coins the reach probability is the fraction of
/// satisfying assignments.
pub fn from_3sat(cnf: &Cnf, mode: SatMode) -> Result<SatInstance, Error> {
    if cnf.num_vars == 0 {
        return Err(Error::Structure("formula has no variables".into()));
    }
    let model = parse_snf(&sat3_text(cnf, mode))?;
    Ok(SatInstance { model, targets: (1..=cnf.clauses.len()).map(|q| format!("R{q}")).collect(), start: "C1".into() })
}

/// The same reduction in general form, one long rule per literal, normalized.
pub fn from_3sat_general(cnf: &Cnf, mode: SatMode) -> Result<SatInstance, Error> {
    let mut out = String::new();
    let n = cnf.num_vars;
    for r in 1..=n {
        let rhs_for = |lit: i32| {
            let mut rhs: Vec<String> = cnf
                .clauses
                .iter()
                .enumerate()
                .flat_map(|(q, c)| c.iter().filter(move |&&l| l == lit).map(move |_| format!("R{}", q + 1)))
                .collect();
            if r < n {
                rhs.push(format!("C{}", r + 1));
            }
            rhs.join(" ")
        };
        let (pa, nb) = (rhs_for(r as i32), rhs_for(-(r as i32)));
        let head = match mode {
            SatMode::Controlled => "controlled",
            SatMode::Probabilistic => "probabilistic",
        };
        let _ = write!(out, "nonterminal C{r} {head} {{ ");
        match mode {
            SatMode::Controlled => {
                let _ = writeln!(out, "a -> {pa}; b -> {nb}; }}");
            }
            SatMode::Probabilistic => {
                let _ = writeln!(out, "1/2 -> T{r}a; 1/2 -> T{r}b; }}");
                let _ = writeln!(out, "nonterminal T{r}a probabilistic {{ 1 -> {pa}; }}");
                let _ = writeln!(out, "nonterminal T{r}b probabilistic {{ 1 -> {nb}; }}");
            }
        }
    }
    for q in 1..=cnf.clauses.len() {
        let _ = writeln!(out, "nonterminal R{q} probabilistic {{ 1 -> ; }}");
    }
    let model = to_snf(&parse_obmdp::<Rational>(&out)?);
    Ok(SatInstance { model, targets: (1..=cnf.clauses.len()).map(|q| format!("R{q}")).collect(), start: "C1".into() })
}

/// A random CNF formula with clauses of up to three distinct variables.
pub fn random_cnf(num_vars: usize, num_clauses: usize, seed: u64) -> Cnf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<i32> = (1..=num_vars as i32).collect();
    let clauses = (0..num_clauses)
        .map(|_| {
            let width = 3.min(num_vars);
            vars.choose_multiple(&mut rng, width).map(|&v| if rng.gen_bool(0.5) { v } else { -v }).collect()
        })
        .collect();
    Cnf { num_vars, clauses }
}

/// Shape parameters for random SNF models.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomParams {
    pub nonterminals: usize,
    /// Relative weights of linear, branching and controlled forms.
    pub form_weights: [u32; 3],
    /// Chance of each additional successor; at zero, linear forms have one
    /// rule and branching forms repeat their child.
    pub density: f64,
    pub max_actions: usize,
    pub max_successors: usize,
    /// Chance that a linear rule goes to the empty string.
    pub empty_chance: f64,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            nonterminals: 8,
            form_weights: [3, 2, 2],
            density: 0.5,
            max_actions: 3,
            max_successors: 3,
            empty_chance: 0.25,
        }
    }
}

fn random_weights(rng: &mut ChaCha8Rng, count: usize) -> Vec<Rational> {
    let w: Vec<u32> = (0..count).map(|_| rng.gen_range(1..=3)).collect();
    let total: u32 = w.iter().sum();
    w.into_iter().map(|x| Rational::new(BigInt::from(x), BigInt::from(total))).collect()
}

/// A random SNF model named `N0, N1, ...`.
pub fn random_snf(params: &RandomParams, seed: u64) -> SnfObmdp<Rational> {
    let n = params.nonterminals.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let total: u32 = params.form_weights.iter().sum::<u32>().max(1);
    let mut forms = Vec::with_capacity(n);
    for _ in 0..n {
        if n == 1 {
            forms.push(SnfForm::Linear(vec![(None, Rational::from_integer(1.into()))]));
            break;
        }
        let pick = rng.gen_range(0..total);
        let kind = if pick < params.form_weights[0] {
            0
        } else if pick < params.form_weights[0] + params.form_weights[1] {
            1
        } else {
            2
        };
        let pick_node = |rng: &mut ChaCha8Rng| NtId::new(rng.gen_range(0..n));
        let form = match kind {
            0 => {
                let mut targets: Vec<Option<NtId>> = Vec::new();
                let want = 1 + (1..params.max_successors.max(1)).filter(|_| rng.gen_bool(params.density)).count();
                for _ in 0..want * 3 {
                    if targets.len() >= want {
                        break;
                    }
                    let t = if rng.gen_bool(params.empty_chance) { None } else { Some(pick_node(&mut rng)) };
                    if !targets.contains(&t) {
                        targets.push(t);
                    }
                }
                let w = random_weights(&mut rng, targets.len());
                SnfForm::Linear(targets.into_iter().zip(w).collect())
            }
            1 => {
                let l = pick_node(&mut rng);
                let r = if params.density > 0.0 { pick_node(&mut rng) } else { l };
                SnfForm::Branching(l, r)
            }
            _ => {
                let want = rng.gen_range(1..=params.max_actions.max(1));
                let mut targets: Vec<NtId> = (0..n).map(NtId::new).collect();
                targets.shuffle(&mut rng);
                targets.truncate(want);
                SnfForm::Controlled(targets.into_iter().enumerate().map(|(i, t)| (format!("a{i}"), t)).collect())
            }
        };
        forms.push(form);
    }
    SnfObmdp::new(names.clone(), forms, (0..n).map(|i| Origin::Declared(NtId::new(i))).collect(), names)
        .expect("random models are valid")
}

/// A random general-form model whose rules may repeat symbols and be long.
pub fn random_general(nonterminals: usize, seed: u64) -> Obmdp<Rational> {
    let n = nonterminals.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..n).map(|i| format!("G{i}")).collect();
    let block = |rng: &mut ChaCha8Rng| -> Vec<Branch<Rational>> {
        let count = rng.gen_range(1..=3);
        let probs = random_weights(rng, count);
        probs
            .into_iter()
            .map(|prob| {
                let len = rng.gen_range(0..=4);
                Branch { prob, rhs: (0..len).map(|_| NtId::new(rng.gen_range(0..n))).collect() }
            })
            .collect()
    };
    let defs = (0..n)
        .map(|_| {
            if rng.gen_bool(0.4) {
                let acts = rng.gen_range(1..=3);
                Definition::Controlled(
                    (0..acts).map(|a| ActionDef { name: format!("a{a}"), branches: block(&mut rng) }).collect(),
                )
            } else {
                Definition::Probabilistic(block(&mut rng))
            }
        })
        .collect();
    Obmdp::new(names, defs).expect("random general models are valid")
}

/// Converts the probabilities of a model to `f64`.
pub fn to_float<P: Probability>(m: &SnfObmdp<P>) -> SnfObmdp<f64> {
    m.map_prob(|p| p.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::serialize_snf;
    use crate::model::FormKind;

    #[test]
    fn examples_have_the_declared_symbols() {
        assert_eq!(example1().source_names(), ["M", "A", "R1", "R2"]);
        assert_eq!(example2().len(), 6);
        assert_eq!(example3().kind(example3().id("L").unwrap()), FormKind::Linear);
    }

    fn figure_formula() -> Cnf {
        Cnf { num_vars: 3, clauses: vec![vec![1, -2, 3], vec![-1, 2, -3], vec![-1, 2, 3], vec![-1, -2, -3]] }
    }

    #[test]
    fn reduction_matches_the_worked_figure() {
        let inst = from_3sat(&figure_formula(), SatMode::Controlled).unwrap();
        let got = serialize_snf(&inst.model);
        let expected = "\
nonterminal C1 controlled {
  a -> T1a;
  b -> T1b;
}
nonterminal T1a probabilistic {
  1 -> R1 C2;
}
nonterminal T1b probabilistic {
  1 -> T1b_1 C2;
}
nonterminal T1b_1 probabilistic {
  1 -> T1b_2 R2;
}
nonterminal T1b_2 probabilistic {
  1 -> R3 R4;
}
nonterminal C2 controlled {
  a -> T2a;
  b -> T2b;
}
nonterminal T2a probabilistic {
  1 -> T2a_1 C3;
}
nonterminal T2a_1 probabilistic {
  1 -> R2 R3;
}
nonterminal T2b probabilistic {
  1 -> T2b_1 C3;
}
nonterminal T2b_1 probabilistic {
  1 -> R1 R4;
}
nonterminal C3 controlled {
  a -> T3a;
  b -> T3b;
}
nonterminal T3a probabilistic {
  1 -> R1 R3;
}
nonterminal T3b probabilistic {
  1 -> R2 R4;
}
nonterminal R1 probabilistic {
  1 ->;
}
nonterminal R2 probabilistic {
  1 ->;
}
nonterminal R3 probabilistic {
  1 ->;
}
nonterminal R4 probabilistic {
  1 ->;
}
";
        assert_eq!(got, expected);
        assert_eq!(inst.targets, ["R1", "R2", "R3", "R4"]);
    }

    #[test]
    fn unused_variable_and_absent_literal() {
        let cnf = Cnf { num_vars: 2, clauses: vec![vec![1]] };
        let inst = from_3sat(&cnf, SatMode::Controlled).unwrap();
        let m = &inst.model;
        assert_eq!(
            m.form(m.id("T1b").unwrap()),
            &SnfForm::Linear(vec![(m.id("C2"), Rational::from_integer(1.into()))])
        );
        assert_eq!(m.form(m.id("T2a").unwrap()), &SnfForm::Linear(vec![(None, Rational::from_integer(1.into()))]));
    }

    #[test]
    fn dimacs_round() {
        let cnf = parse_dimacs("c demo\np cnf 3 2\n1 -2 0\n2 3\n0\n").unwrap();
        assert_eq!(cnf.clauses, vec![vec![1, -2], vec![2, 3]]);
        assert_eq!(cnf.count_models(), 4);
        assert!(parse_dimacs("1 2 0").is_err());
        assert!(parse_dimacs("p cnf 1 1\n2 0\n").is_err());
    }

    #[test]
    fn random_models_are_deterministic() {
        let p = RandomParams::default();
        assert_eq!(random_snf(&p, 7), random_snf(&p, 7));
        let one = random_snf(&RandomParams { nonterminals: 1, ..p.clone() }, 3);
        assert!(one.has_empty_rule(NtId::new(0)));
        let flat = random_snf(&RandomParams { density: 0.0, ..p }, 11);
        for u in flat.ids() {
            match flat.form(u) {
                SnfForm::Branching(l, r) => assert_eq!(l, r),
                SnfForm::Linear(rules) => assert_eq!(rules.len(), 1),
                _ => {}
            }
        }
        assert_eq!(random_cnf(4, 5, 1), random_cnf(4, 5, 1));
    }
}
