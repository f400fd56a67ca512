//! Translation of linear pseudo-Boolean constraints to CNF.
//!
//! Every constraint is normalized to positive-coefficient `>=` form over
//! CNF literals (negative coefficients flip the literal, `<=` negates the
//! constraint, `=` splits in two), saturated and divided by the gcd.
//! Cardinality cores go through a sequential counter when small and a
//! totalizer above [`SEQ_LIMIT`] inputs; weighted cores go through a
//! generalized totalizer. Counters are built with both implication
//! directions and an output literal per attainable sum, so one counter can
//! serve several constraints: a cache keyed by the weighted literal set
//! (and its elementwise complement) shares them, which in particular
//! merges the two halves of a linearized reification.
//!
//! PB variable `VarId(k)` is CNF variable `k + 1`; auxiliary counter
//! variables are allocated past the PB block.

use crate::encode::{LinTerm, PbConstraint, PbFormula, Rel};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};

/// Cardinality cores up to this arity use the sequential counter.
const SEQ_LIMIT: usize = 16;

/// Coefficient magnitude limit for the translation.
const COEFF_LIMIT: i64 = 1 << 40;

/// Receives the clauses of a translation.
pub trait CnfSink {
    fn new_aux(&mut self) -> i32;
    fn clause(&mut self, lits: &[i32]);
}

/// Plain clause collection, for DIMACS export and tests.
#[derive(Debug, Clone)]
pub struct Cnf {
    pub n_vars: usize,
    pub clauses: Vec<Vec<i32>>,
}

impl Cnf {
    pub fn new(n_vars: usize) -> Cnf {
        Cnf {
            n_vars,
            clauses: Vec::new(),
        }
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.n_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                out.push_str(&l.to_string());
                out.push(' ');
            }
            out.push_str("0\n");
        }
        out
    }
}

impl CnfSink for Cnf {
    fn new_aux(&mut self) -> i32 {
        self.n_vars += 1;
        self.n_vars as i32
    }

    fn clause(&mut self, lits: &[i32]) {
        self.clauses.push(lits.to_vec());
    }
}

impl CnfSink for super::sat::SatSolver {
    fn new_aux(&mut self) -> i32 {
        self.new_var()
    }

    fn clause(&mut self, lits: &[i32]) {
        self.add_clause(lits);
    }
}

/// Output literal of a counter query.
enum GeLit {
    Always,
    Never,
    Lit(i32),
}

/// A built counter: output literal per attainable positive sum value,
/// with full biconditional semantics.
struct Counter {
    outputs: BTreeMap<i64, i32>,
    total: i64,
}

impl Counter {
    /// Literal equivalent to `sum >= x`.
    fn ge(&self, x: i64) -> GeLit {
        if x <= 0 {
            return GeLit::Always;
        }
        match self.outputs.range(x..).next() {
            Some((_, &lit)) => GeLit::Lit(lit),
            None => GeLit::Never,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct TranslationStats {
    pub counters_built: usize,
    pub cache_hits: usize,
    pub clauses: usize,
}

/// One translation session over a formula's constraints.
pub struct Translator {
    cache: HashMap<Vec<(i32, i64)>, Counter>,
    pub stats: TranslationStats,
}

impl Default for Translator {
    fn default() -> Self {
        Self::new()
    }
}

impl Translator {
    pub fn new() -> Translator {
        Translator {
            cache: HashMap::new(),
            stats: TranslationStats::default(),
        }
    }

    /// Translate every hard constraint of a linearized formula.
    pub fn translate(&mut self, f: &PbFormula, sink: &mut impl CnfSink) -> Result<()> {
        if !f.reified.is_empty() {
            return Err(Error::ReifiedNotLinearized);
        }
        for c in &f.hard {
            self.constraint(c, sink)?;
        }
        Ok(())
    }

    pub fn constraint(&mut self, c: &PbConstraint, sink: &mut impl CnfSink) -> Result<()> {
        match c.rel {
            Rel::Ge => self.ge(&c.terms, c.bound, 1, sink),
            Rel::Le => self.ge(&c.terms, -c.bound, -1, sink),
            Rel::Eq => {
                self.ge(&c.terms, c.bound, 1, sink)?;
                self.ge(&c.terms, -c.bound, -1, sink)
            }
        }
    }

    /// Emit `sign * sum(terms) >= k` (sign -1 encodes a `<=` as `>=`).
    fn ge(&mut self, terms: &[LinTerm], mut k: i64, sign: i64, sink: &mut impl CnfSink) -> Result<()> {
        // Normalize to positive weights over CNF literals.
        let mut items: Vec<(i32, i64)> = Vec::with_capacity(terms.len());
        for t in terms {
            let c = sign * t.coeff;
            if c.abs() > COEFF_LIMIT {
                return Err(Error::CoefficientOverflow(c));
            }
            let base = t.lit.var.0 as i32 + 1;
            let lit = if t.lit.negated { -base } else { base };
            if c >= 0 {
                items.push((lit, c));
            } else {
                items.push((-lit, -c));
                k += -c;
            }
        }
        let total: i64 = items.iter().map(|&(_, w)| w).sum();
        if k <= 0 {
            return Ok(());
        }
        if total < k {
            self.emit(sink, &[]);
            return Ok(());
        }
        // Saturate and divide by the gcd.
        for item in items.iter_mut() {
            item.1 = item.1.min(k);
        }
        let g = items.iter().fold(0i64, |acc, &(_, w)| gcd(acc, w));
        let g = g.max(1);
        for item in items.iter_mut() {
            item.1 /= g;
        }
        k = k.div_euclid(g) + if k.rem_euclid(g) > 0 { 1 } else { 0 };
        // Weight-k literals satisfy the constraint on their own.
        let or_lits: Vec<i32> = items.iter().filter(|&&(_, w)| w == k).map(|&(l, _)| l).collect();
        let core: Vec<(i32, i64)> = items.into_iter().filter(|&(_, w)| w < k).collect();
        let core_total: i64 = core.iter().map(|&(_, w)| w).sum();
        if core.is_empty() || core_total < k {
            // Only the saturated literals can reach the bound.
            self.emit(sink, &or_lits);
            return Ok(());
        }
        if k == 1 {
            let mut clause = or_lits;
            clause.extend(core.iter().map(|&(l, _)| l));
            self.emit(sink, &clause);
            return Ok(());
        }
        if or_lits.is_empty() && core_total == k {
            for &(l, _) in &core {
                self.emit(sink, &[l]);
            }
            return Ok(());
        }
        let counter = self.counter_for(&core, sink);
        match counter.ge(k) {
            GeLit::Always => Ok(()),
            GeLit::Never => {
                self.emit(sink, &or_lits);
                Ok(())
            }
            GeLit::Lit(o) => {
                let mut clause = or_lits;
                clause.push(o);
                self.emit(sink, &clause);
                Ok(())
            }
        }
    }

    fn emit(&mut self, sink: &mut impl CnfSink, lits: &[i32]) {
        self.stats.clauses += 1;
        sink.clause(lits);
    }

    /// Fetch or build the counter for a weighted literal set, looking up
    /// the elementwise complement as well.
    fn counter_for(&mut self, core: &[(i32, i64)], sink: &mut impl CnfSink) -> Counter {
        let mut key: Vec<(i32, i64)> = core.to_vec();
        key.sort_unstable();
        if let Some(c) = self.cache.get(&key) {
            self.stats.cache_hits += 1;
            return Counter {
                outputs: c.outputs.clone(),
                total: c.total,
            };
        }
        let mut comp_key: Vec<(i32, i64)> = core.iter().map(|&(l, w)| (-l, w)).collect();
        comp_key.sort_unstable();
        if let Some(c) = self.cache.get(&comp_key) {
            self.stats.cache_hits += 1;
            let mirrored = mirror_counter(c);
            self.cache.insert(key, clone_counter(&mirrored));
            return mirrored;
        }
        if core.len() == 1 {
            // A lone literal is its own counter; no auxiliaries needed.
            return Counter {
                outputs: BTreeMap::from([(core[0].1, core[0].0)]),
                total: core[0].1,
            };
        }
        let unit_weights = core.iter().all(|&(_, w)| w == 1);
        let built = if unit_weights && core.len() <= SEQ_LIMIT {
            self.sequential_counter(core, sink)
        } else {
            let leaves: Vec<Counter> = core
                .iter()
                .map(|&(l, w)| Counter {
                    outputs: BTreeMap::from([(w, l)]),
                    total: w,
                })
                .collect();
            self.totalizer_tree(leaves, sink)
        };
        self.stats.counters_built += 1;
        self.cache.insert(key, clone_counter(&built));
        built
    }

    /// Sequential counter with both implication directions; outputs count
    /// how many of the literals hold.
    fn sequential_counter(&mut self, core: &[(i32, i64)], sink: &mut impl CnfSink) -> Counter {
        let lits: Vec<i32> = core.iter().map(|&(l, _)| l).collect();
        let n = lits.len();
        // s[i][j]: at least j+1 of the first i+1 literals hold.
        let mut prev: Vec<i32> = Vec::new();
        for (i, &li) in lits.iter().enumerate() {
            let width = i + 1;
            let cur: Vec<i32> = (0..width).map(|_| sink.new_aux()).collect();
            for (j, &s) in cur.iter().enumerate() {
                // s <-> prev[j] | (prev[j-1] & li), with boundary rows.
                let carry_from = if j == 0 {
                    None // prev[-1] is true: s <- li directly
                } else {
                    prev.get(j - 1).copied()
                };
                let hold = prev.get(j).copied();
                // Upward clauses.
                if let Some(h) = hold {
                    self.emit(sink, &[-h, s]);
                }
                match carry_from {
                    None if j == 0 => self.emit(sink, &[-li, s]),
                    Some(c) => self.emit(sink, &[-c, -li, s]),
                    None => {}
                }
                // Downward clauses: s -> hold | (carry & li).
                match (hold, carry_from, j) {
                    (Some(h), None, 0) => {
                        self.emit(sink, &[-s, h, li]);
                    }
                    (Some(h), Some(c), _) => {
                        self.emit(sink, &[-s, h, c]);
                        self.emit(sink, &[-s, h, li]);
                    }
                    (None, None, 0) => {
                        // First row: s <-> li.
                        self.emit(sink, &[-s, li]);
                    }
                    (None, Some(c), _) => {
                        self.emit(sink, &[-s, c]);
                        self.emit(sink, &[-s, li]);
                    }
                    (Some(_), None, _) => unreachable!(),
                    (None, None, _) => unreachable!(),
                }
            }
            prev = cur;
        }
        let outputs: BTreeMap<i64, i32> = prev
            .iter()
            .enumerate()
            .map(|(j, &s)| ((j + 1) as i64, s))
            .collect();
        debug_assert_eq!(outputs.len(), n);
        Counter {
            outputs,
            total: n as i64,
        }
    }

    /// Balanced merge of leaf counters into a generalized totalizer.
    fn totalizer_tree(&mut self, mut nodes: Vec<Counter>, sink: &mut impl CnfSink) -> Counter {
        debug_assert!(!nodes.is_empty());
        while nodes.len() > 1 {
            let mut next = Vec::with_capacity(nodes.len().div_ceil(2));
            let mut iter = nodes.into_iter();
            while let Some(a) = iter.next() {
                match iter.next() {
                    Some(b) => next.push(self.merge(a, b, sink)),
                    None => next.push(a),
                }
            }
            nodes = next;
        }
        nodes.pop().unwrap()
    }

    fn merge(&mut self, a: Counter, b: Counter, sink: &mut impl CnfSink) -> Counter {
        let avals: Vec<i64> = a.outputs.keys().copied().collect();
        let bvals: Vec<i64> = b.outputs.keys().copied().collect();
        let mut values: Vec<i64> = Vec::new();
        for &av in std::iter::once(&0).chain(avals.iter()) {
            for &bv in std::iter::once(&0).chain(bvals.iter()) {
                let v = av + bv;
                if v > 0 {
                    values.push(v);
                }
            }
        }
        values.sort_unstable();
        values.dedup();
        let outputs: BTreeMap<i64, i32> =
            values.iter().map(|&v| (v, sink.new_aux())).collect();
        // Ordering: a larger sum implies every smaller threshold.
        let ordered: Vec<i32> = outputs.values().copied().collect();
        for w in ordered.windows(2) {
            self.emit(sink, &[-w[1], w[0]]);
        }
        let a_lit = |v: i64| if v == 0 { None } else { Some(a.outputs[&v]) };
        let b_lit = |v: i64| if v == 0 { None } else { Some(b.outputs[&v]) };
        let next_val = |vals: &[i64], v: i64| vals.iter().copied().find(|&x| x > v);
        for &av in std::iter::once(&0).chain(avals.iter()) {
            for &bv in std::iter::once(&0).chain(bvals.iter()) {
                // Lower bound: A >= av and B >= bv force O >= av + bv.
                if av + bv > 0 {
                    let mut cl = Vec::with_capacity(3);
                    if let Some(l) = a_lit(av) {
                        cl.push(-l);
                    }
                    if let Some(l) = b_lit(bv) {
                        cl.push(-l);
                    }
                    cl.push(outputs[&(av + bv)]);
                    self.emit(sink, &cl);
                }
                // Upper bound: A <= av and B <= bv force O <= av + bv.
                let na = next_val(&avals, av);
                let nb = next_val(&bvals, bv);
                if let Some(&nv) = outputs.keys().find(|&&x| x > av + bv) {
                    debug_assert!(na.is_some() || nb.is_some());
                    let mut cl = Vec::with_capacity(3);
                    if let Some(v) = na {
                        cl.push(a.outputs[&v]);
                    }
                    if let Some(v) = nb {
                        cl.push(b.outputs[&v]);
                    }
                    cl.push(-outputs[&nv]);
                    self.emit(sink, &cl);
                }
            }
        }
        Counter {
            outputs,
            total: a.total + b.total,
        }
    }
}

fn clone_counter(c: &Counter) -> Counter {
    Counter {
        outputs: c.outputs.clone(),
        total: c.total,
    }
}

/// Counter over the complemented literal set. With sum' = total - sum,
/// `sum' >= total - a` is `sum <= a`, i.e. the negation of the output for
/// the smallest attainable value above `a`. The all-true sum equals the
/// total, so that output always exists.
fn mirror_counter(c: &Counter) -> Counter {
    let mut outputs = BTreeMap::new();
    for a in std::iter::once(0).chain(c.outputs.keys().copied()) {
        if a >= c.total {
            continue;
        }
        let (_, &above) = c
            .outputs
            .range(a + 1..)
            .next()
            .expect("total is always attainable");
        outputs.insert(c.total - a, -above);
    }
    Counter {
        outputs,
        total: c.total,
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Translate a linearized formula into a standalone CNF document.
pub fn pb_to_cnf(f: &PbFormula) -> Result<Cnf> {
    let mut cnf = Cnf::new(f.num_vars());
    let mut tr = Translator::new();
    tr.translate(f, &mut cnf)?;
    Ok(cnf)
}
