//! Compilation of the image-generation problem into one pseudo-Boolean
//! formula.
//!
//! Variables: `c[i,j,r]` assigns cell (i,j) to grain r (r = w+1 is the
//! void), `I[i,j]` is the pixel value seen by the network, and `x[l,n]` is
//! the 0/1 image of neuron n's +-1 activation in block l. Constraint
//! groups, in the order an instance is assembled:
//!
//! - each cell carries exactly one region;
//! - no two distinct grains touch side-on;
//! - every region only grows from its DAG parents, rooted at its seed;
//! - a grain occupying ring `v` must fully own ring `v - s`;
//! - the border is void;
//! - pixels equal the union of grain memberships;
//! - every network neuron becomes a reified integer threshold over the
//!   previous layer, with the +-1 to 0/1 substitution folded into the
//!   coefficients, and the network output becomes a linear expression;
//! - the output is boxed into the requested interval.
//!
//! Reified constraints are turned into plain linear pairs by
//! [`linearize_reified`] with tight activity bounds, so any PB or ILP
//! backend can consume the result.

use crate::bnn::{IntBnnModel, IntNeuron};
use crate::error::{Error, Result};
use crate::geometry::{build_dag, build_rings, sample_seeds, DagGraph, DagMode, RingSet};
use crate::grid::Cell;
use rand::Rng;
use std::collections::HashMap;

/// Index of a declared variable within a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

/// Structured variable identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarName {
    /// Cell (i, j) belongs to region r (1..=w grains, w+1 void).
    CellRegion { i: u16, j: u16, r: u16 },
    /// Pixel value of cell (i, j).
    Pixel { i: u16, j: u16 },
    /// 0/1 image of the +-1 activation of neuron `n` in block `layer`.
    Act { layer: u16, neuron: u16 },
    /// Free variable for tests and ad-hoc formulas.
    Aux(u32),
}

impl std::fmt::Display for VarName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarName::CellRegion { i, j, r } => write!(f, "c[{i},{j},{r}]"),
            VarName::Pixel { i, j } => write!(f, "I[{i},{j}]"),
            VarName::Act { layer, neuron } => write!(f, "x[{layer},{neuron}]"),
            VarName::Aux(k) => write!(f, "aux[{k}]"),
        }
    }
}

/// A possibly negated variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lit {
    pub var: VarId,
    pub negated: bool,
}

impl Lit {
    pub fn pos(var: VarId) -> Lit {
        Lit {
            var,
            negated: false,
        }
    }

    pub fn neg(var: VarId) -> Lit {
        Lit { var, negated: true }
    }

    pub fn flipped(self) -> Lit {
        Lit {
            var: self.var,
            negated: !self.negated,
        }
    }
}

/// One weighted literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinTerm {
    pub coeff: i64,
    pub lit: Lit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Ge,
    Le,
    Eq,
}

/// Linear pseudo-Boolean constraint: `sum(terms) rel bound`.
///
/// Invariants: coefficients nonzero, no variable repeated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PbConstraint {
    pub terms: Vec<LinTerm>,
    pub rel: Rel,
    pub bound: i64,
}

impl PbConstraint {
    pub fn new(terms: Vec<LinTerm>, rel: Rel, bound: i64) -> PbConstraint {
        debug_assert!(terms.iter().all(|t| t.coeff != 0));
        debug_assert!({
            let mut vars: Vec<VarId> = terms.iter().map(|t| t.lit.var).collect();
            vars.sort();
            vars.windows(2).all(|w| w[0] != w[1])
        });
        PbConstraint { terms, rel, bound }
    }

    /// Plain clause: at least one of the literals holds.
    pub fn clause(lits: Vec<Lit>) -> PbConstraint {
        PbConstraint::new(
            lits.into_iter()
                .map(|lit| LinTerm { coeff: 1, lit })
                .collect(),
            Rel::Ge,
            1,
        )
    }

    pub fn unit(lit: Lit) -> PbConstraint {
        PbConstraint::clause(vec![lit])
    }

    pub fn eval(&self, asg: &Assignment) -> bool {
        let s = eval_terms(&self.terms, asg);
        match self.rel {
            Rel::Ge => s >= self.bound,
            Rel::Le => s <= self.bound,
            Rel::Eq => s == self.bound,
        }
    }
}

/// Reified linear constraint: `lit <-> (sum(terms) >= bound)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReifiedConstraint {
    pub lit: Lit,
    pub terms: Vec<LinTerm>,
    pub bound: i64,
}

impl ReifiedConstraint {
    pub fn holds(&self, asg: &Assignment) -> bool {
        asg.lit_value(self.lit) == (eval_terms(&self.terms, asg) >= self.bound)
    }
}

/// Linear expression whose value under a model is the network output.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutputExpr {
    pub terms: Vec<LinTerm>,
    pub constant: i64,
}

impl OutputExpr {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Which border rows/columns are forced void.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// All four sides (the default).
    AllSides,
    /// Bottom row and right column only; kept for comparison runs.
    TwoSided,
}

/// Instance metadata carried alongside the constraints.
#[derive(Debug, Clone)]
pub struct FormulaMeta {
    pub t: usize,
    pub w: usize,
    pub slack: Option<u32>,
    pub seeds: Vec<Cell>,
    pub dag_mode: Option<DagMode>,
    pub interval: Option<(i64, i64)>,
}

/// A pseudo-Boolean formula over named variables.
#[derive(Debug, Clone)]
pub struct PbFormula {
    names: Vec<VarName>,
    index: HashMap<VarName, VarId>,
    pub hard: Vec<PbConstraint>,
    pub reified: Vec<ReifiedConstraint>,
    pub output: OutputExpr,
    pub meta: FormulaMeta,
}

impl PbFormula {
    /// Fresh formula over a `t`x`t` grid with `w` grains. Cell variables
    /// (for w >= 1) and pixel variables are declared up front in a fixed
    /// order; activation variables arrive with the network encoding.
    pub fn new(t: usize, w: usize) -> PbFormula {
        let mut f = PbFormula {
            names: Vec::new(),
            index: HashMap::new(),
            hard: Vec::new(),
            reified: Vec::new(),
            output: OutputExpr::default(),
            meta: FormulaMeta {
                t,
                w,
                slack: None,
                seeds: Vec::new(),
                dag_mode: None,
                interval: None,
            },
        };
        if w >= 1 {
            for i in 1..=t {
                for j in 1..=t {
                    for r in 1..=w + 1 {
                        f.intern(VarName::CellRegion {
                            i: i as u16,
                            j: j as u16,
                            r: r as u16,
                        });
                    }
                }
            }
        }
        for i in 1..=t {
            for j in 1..=t {
                f.intern(VarName::Pixel {
                    i: i as u16,
                    j: j as u16,
                });
            }
        }
        f
    }

    pub fn intern(&mut self, name: VarName) -> VarId {
        if let Some(&id) = self.index.get(&name) {
            return id;
        }
        let id = VarId(self.names.len() as u32);
        self.names.push(name);
        self.index.insert(name, id);
        id
    }

    pub fn lookup(&self, name: VarName) -> Option<VarId> {
        self.index.get(&name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: VarId) -> VarName {
        self.names[v.0 as usize]
    }

    pub fn cell_var(&self, c: Cell, r: usize) -> Option<VarId> {
        self.lookup(VarName::CellRegion {
            i: c.i as u16,
            j: c.j as u16,
            r: r as u16,
        })
    }

    pub fn pixel_var(&self, c: Cell) -> Option<VarId> {
        self.lookup(VarName::Pixel {
            i: c.i as u16,
            j: c.j as u16,
        })
    }

    pub fn act_var(&self, layer: usize, neuron: usize) -> Option<VarId> {
        self.lookup(VarName::Act {
            layer: layer as u16,
            neuron: neuron as u16,
        })
    }

    pub fn add_hard(&mut self, c: PbConstraint) {
        self.hard.push(c);
    }

    /// Pin a pixel variable; used to evaluate the network part of the
    /// formula on a concrete image.
    pub fn fix_pixel(&mut self, c: Cell, value: u8) {
        let v = self.pixel_var(c).expect("pixel variable not declared");
        let lit = if value == 1 { Lit::pos(v) } else { Lit::neg(v) };
        self.add_hard(PbConstraint::unit(lit));
    }

    /// Network output under a total assignment, when a network is encoded.
    pub fn output_value(&self, asg: &Assignment) -> Option<i64> {
        if self.output.is_empty() {
            return None;
        }
        Some(eval_terms(&self.output.terms, asg) + self.output.constant)
    }

    /// Replace every reified constraint by its two-sided linear bounding,
    /// leaving a formula of plain constraints with the same model set.
    pub fn linearized(&self) -> PbFormula {
        let mut out = self.clone();
        let reified = std::mem::take(&mut out.reified);
        for rc in &reified {
            for c in linearize_reified(rc) {
                out.hard.push(c);
            }
        }
        out
    }

    /// Check a total assignment against every hard constraint and every
    /// reified biconditional.
    pub fn check(&self, asg: &Assignment) -> std::result::Result<(), String> {
        if asg.len() < self.num_vars() {
            return Err(format!(
                "assignment covers {} of {} variables",
                asg.len(),
                self.num_vars()
            ));
        }
        for (k, c) in self.hard.iter().enumerate() {
            if !c.eval(asg) {
                return Err(format!("hard constraint {k} violated: {}", self.render(c)));
            }
        }
        for (k, rc) in self.reified.iter().enumerate() {
            if !rc.holds(asg) {
                return Err(format!("reified constraint {k} violated"));
            }
        }
        Ok(())
    }

    fn render(&self, c: &PbConstraint) -> String {
        let mut s = String::new();
        for t in &c.terms {
            let name = self.name(t.lit.var);
            let neg = if t.lit.negated { "~" } else { "" };
            s.push_str(&format!("{:+}*{}{} ", t.coeff, neg, name));
        }
        s.push_str(match c.rel {
            Rel::Ge => ">= ",
            Rel::Le => "<= ",
            Rel::Eq => "= ",
        });
        s.push_str(&c.bound.to_string());
        s
    }
}

/// Total truth assignment indexed by [`VarId`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Assignment {
        Assignment { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: VarId) -> bool {
        self.values[v.0 as usize]
    }

    pub fn lit_value(&self, l: Lit) -> bool {
        self.get(l.var) != l.negated
    }
}

fn eval_terms(terms: &[LinTerm], asg: &Assignment) -> i64 {
    terms
        .iter()
        .map(|t| if asg.lit_value(t.lit) { t.coeff } else { 0 })
        .sum()
}

/// Every cell carries exactly one region. Returns constraints added.
pub fn encode_cells(f: &mut PbFormula) -> usize {
    let (t, w) = (f.meta.t, f.meta.w);
    let mut added = 0;
    for i in 1..=t {
        for j in 1..=t {
            let terms: Vec<LinTerm> = (1..=w + 1)
                .map(|r| LinTerm {
                    coeff: 1,
                    lit: Lit::pos(f.cell_var(Cell::new(i, j), r).unwrap()),
                })
                .collect();
            f.add_hard(PbConstraint::new(terms, Rel::Eq, 1));
            added += 1;
        }
    }
    added
}

/// Two cells of distinct grains never share a side.
pub fn encode_no_overlap(f: &mut PbFormula) -> usize {
    let (t, w) = (f.meta.t, f.meta.w);
    let mut added = 0;
    for i in 1..=t {
        for j in 1..=t {
            let c = Cell::new(i, j);
            for n in crate::grid::neighbor_cells(c, t) {
                // Each unordered cell pair once, every ordered grain pair.
                if n < c {
                    continue;
                }
                for r in 1..=w {
                    for rp in 1..=w {
                        if r == rp {
                            continue;
                        }
                        let a = f.cell_var(c, r).unwrap();
                        let b = f.cell_var(n, rp).unwrap();
                        f.add_hard(PbConstraint::clause(vec![Lit::neg(a), Lit::neg(b)]));
                        added += 1;
                    }
                }
            }
        }
    }
    added
}

/// Region membership propagates only from DAG parents; each region
/// contains its root. Expects one DAG per grain followed by the void DAG.
pub fn encode_connectivity(f: &mut PbFormula, dags: &[DagGraph]) -> Result<usize> {
    let (t, w) = (f.meta.t, f.meta.w);
    if dags.len() != w + 1 {
        return Err(Error::DimensionMismatch {
            expected: w + 1,
            got: dags.len(),
        });
    }
    let mut added = 0;
    for (k, dag) in dags.iter().enumerate() {
        let r = k + 1;
        let root = f.cell_var(dag.root(), r).unwrap();
        f.add_hard(PbConstraint::unit(Lit::pos(root)));
        added += 1;
        for idx in 0..t * t {
            let c = Cell::from_index(idx, t);
            if c == dag.root() {
                continue;
            }
            let mut lits = vec![Lit::neg(f.cell_var(c, r).unwrap())];
            for &p in dag.parents(c) {
                lits.push(Lit::pos(f.cell_var(p, r).unwrap()));
            }
            f.add_hard(PbConstraint::clause(lits));
            added += 1;
        }
    }
    Ok(added)
}

/// A grain occupying ring `v` must fully own ring `v - slack`.
pub fn encode_compactness(f: &mut PbFormula, rings: &[RingSet], slack: u32) -> Result<usize> {
    let w = f.meta.w;
    if rings.len() != w {
        return Err(Error::DimensionMismatch {
            expected: w,
            got: rings.len(),
        });
    }
    if slack < 1 {
        return Err(Error::OutOfRange {
            what: "compactness slack",
            value: slack as f64,
        });
    }
    let s = slack as usize;
    let mut added = 0;
    for (k, rs) in rings.iter().enumerate() {
        let r = k + 1;
        for v in (s + 1)..=rs.ring_count() {
            for &outer in rs.ring(v) {
                let a = f.cell_var(outer, r).unwrap();
                for &inner in rs.ring(v - s) {
                    let b = f.cell_var(inner, r).unwrap();
                    f.add_hard(PbConstraint::clause(vec![Lit::neg(a), Lit::pos(b)]));
                    added += 1;
                }
            }
        }
    }
    f.meta.slack = Some(slack);
    Ok(added)
}

/// Border cells are void.
pub fn encode_boundary(f: &mut PbFormula, mode: BoundaryMode) -> usize {
    let (t, w) = (f.meta.t, f.meta.w);
    let mut added = 0;
    for i in 1..=t {
        for j in 1..=t {
            let on = match mode {
                BoundaryMode::AllSides => i == 1 || i == t || j == 1 || j == t,
                BoundaryMode::TwoSided => i == t || j == t,
            };
            if on {
                let v = f.cell_var(Cell::new(i, j), w + 1).unwrap();
                f.add_hard(PbConstraint::unit(Lit::pos(v)));
                added += 1;
            }
        }
    }
    added
}

/// Pixels equal the union of grain memberships: `I[i,j] = sum_r c[i,j,r]`.
pub fn encode_pixel_link(f: &mut PbFormula) -> usize {
    let (t, w) = (f.meta.t, f.meta.w);
    let mut added = 0;
    for i in 1..=t {
        for j in 1..=t {
            let c = Cell::new(i, j);
            let mut terms = vec![LinTerm {
                coeff: 1,
                lit: Lit::pos(f.pixel_var(c).unwrap()),
            }];
            for r in 1..=w {
                terms.push(LinTerm {
                    coeff: -1,
                    lit: Lit::pos(f.cell_var(c, r).unwrap()),
                });
            }
            f.add_hard(PbConstraint::new(terms, Rel::Eq, 0));
            added += 1;
        }
    }
    added
}

/// Encode the network: one reified threshold per neuron over the previous
/// layer's 0/1 variables, and the output as a linear expression.
///
/// The +-1 activation x relates to its 0/1 variable v by x = 2v - 1, so a
/// row `a` with integer bound C over +-1 inputs becomes
/// `sum 2*a_i*v_i >= C + sum a_i`.
pub fn encode_bnn(f: &mut PbFormula, m: &IntBnnModel) -> Result<()> {
    let t = f.meta.t;
    if m.t() != t {
        return Err(Error::DimensionMismatch {
            expected: t * t,
            got: m.t() * m.t(),
        });
    }
    // Previous-layer 0/1 variables, starting at the pixels.
    let mut prev: Vec<VarId> = (1..=t)
        .flat_map(|i| (1..=t).map(move |j| Cell::new(i, j)))
        .map(|c| f.pixel_var(c).unwrap())
        .collect();
    for (bi, block) in m.blocks.iter().enumerate() {
        let layer = bi + 1;
        let mut next = Vec::with_capacity(block.len());
        for (ni, neuron) in block.iter().enumerate() {
            let act = f.intern(VarName::Act {
                layer: layer as u16,
                neuron: ni as u16,
            });
            match neuron {
                IntNeuron::Constant { value } => {
                    let lit = if *value > 0 {
                        Lit::pos(act)
                    } else {
                        Lit::neg(act)
                    };
                    f.add_hard(PbConstraint::unit(lit));
                }
                IntNeuron::Threshold { weights, bound, .. } => {
                    if weights.len() != prev.len() {
                        return Err(Error::DimensionMismatch {
                            expected: prev.len(),
                            got: weights.len(),
                        });
                    }
                    let terms: Vec<LinTerm> = weights
                        .iter()
                        .zip(prev.iter())
                        .map(|(&a, &v)| LinTerm {
                            coeff: 2 * a as i64,
                            lit: Lit::pos(v),
                        })
                        .collect();
                    let shift: i64 = weights.iter().map(|&a| a as i64).sum();
                    f.reified.push(ReifiedConstraint {
                        lit: Lit::pos(act),
                        terms,
                        bound: *bound + shift,
                    });
                }
            }
            next.push(act);
        }
        prev = next;
    }
    if m.out_weights.len() != prev.len() {
        return Err(Error::DimensionMismatch {
            expected: prev.len(),
            got: m.out_weights.len(),
        });
    }
    let wsum: i64 = m.out_weights.iter().map(|&w| w as i64).sum();
    f.output = OutputExpr {
        terms: m
            .out_weights
            .iter()
            .zip(prev.iter())
            .map(|(&w, &v)| LinTerm {
                coeff: 2 * w as i64,
                lit: Lit::pos(v),
            })
            .collect(),
        constant: m.out_bias - wsum,
    };
    Ok(())
}

/// Box the network output into `[lo, hi]` (closed, integer).
pub fn encode_process(f: &mut PbFormula, lo: i64, hi: i64) -> Result<usize> {
    if lo > hi {
        return Err(Error::EmptyInterval { lo, hi });
    }
    if f.output.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let c = f.output.constant;
    f.add_hard(PbConstraint::new(f.output.terms.clone(), Rel::Ge, lo - c));
    f.add_hard(PbConstraint::new(f.output.terms.clone(), Rel::Le, hi - c));
    f.meta.interval = Some((lo, hi));
    Ok(2)
}

/// Two-sided linear bounding of `r <-> (S >= k)` with tight activity
/// bounds: `S + (k - L)(1 - r) >= k` and `S - (U - k + 1) r <= k - 1`,
/// where L and U are the least and greatest values S can take. Degenerate
/// inner constraints collapse to a unit clause on `r`.
pub fn linearize_reified(rc: &ReifiedConstraint) -> Vec<PbConstraint> {
    let lo: i64 = rc.terms.iter().map(|t| t.coeff.min(0)).sum();
    let hi: i64 = rc.terms.iter().map(|t| t.coeff.max(0)).sum();
    let k = rc.bound;
    if k <= lo {
        return vec![PbConstraint::unit(rc.lit)];
    }
    if k > hi {
        return vec![PbConstraint::unit(rc.lit.flipped())];
    }
    let mut c1 = rc.terms.clone();
    c1.push(LinTerm {
        coeff: k - lo,
        lit: rc.lit.flipped(),
    });
    let mut c2 = rc.terms.clone();
    c2.push(LinTerm {
        coeff: -(hi - k + 1),
        lit: rc.lit,
    });
    vec![
        PbConstraint::new(c1, Rel::Ge, k),
        PbConstraint::new(c2, Rel::Le, k - 1),
    ]
}

/// Everything randomly drawn for one generation instance.
#[derive(Debug, Clone)]
pub struct InstancePlan {
    pub t: usize,
    pub w: usize,
    pub seeds: Vec<Cell>,
    pub void_seed: Cell,
    pub slack: u32,
    pub dags: Vec<DagGraph>,
    pub rings: Vec<RingSet>,
    pub interval: (i64, i64),
    pub boundary: BoundaryMode,
    pub dag_mode: DagMode,
}

impl InstancePlan {
    /// Draw seeds, DAGs, rings and slack for a new instance.
    pub fn sample<R: Rng>(
        t: usize,
        w: usize,
        interval: (i64, i64),
        slack_range: std::ops::RangeInclusive<u32>,
        dag_mode: DagMode,
        rng: &mut R,
    ) -> Result<InstancePlan> {
        let plan = sample_seeds(t, w, slack_range, rng)?;
        let mut dags = Vec::with_capacity(w + 1);
        let mut rings = Vec::with_capacity(w);
        for &seed in &plan.seeds {
            dags.push(build_dag(t, seed, dag_mode, rng)?);
            rings.push(build_rings(t, seed)?);
        }
        dags.push(build_dag(t, plan.void_seed, dag_mode, rng)?);
        Ok(InstancePlan {
            t,
            w,
            seeds: plan.seeds,
            void_seed: plan.void_seed,
            slack: plan.slack,
            dags,
            rings,
            interval,
            boundary: BoundaryMode::AllSides,
            dag_mode,
        })
    }
}

/// Assemble the full formula for one instance.
pub fn encode_instance(model: &IntBnnModel, plan: &InstancePlan) -> Result<PbFormula> {
    if model.t() != plan.t {
        return Err(Error::DimensionMismatch {
            expected: plan.t * plan.t,
            got: model.t() * model.t(),
        });
    }
    let mut f = PbFormula::new(plan.t, plan.w);
    f.meta.seeds = plan.seeds.clone();
    f.meta.dag_mode = Some(plan.dag_mode);
    encode_cells(&mut f);
    encode_no_overlap(&mut f);
    encode_connectivity(&mut f, &plan.dags)?;
    encode_compactness(&mut f, &plan.rings, plan.slack)?;
    encode_boundary(&mut f, plan.boundary);
    encode_pixel_link(&mut f);
    encode_bnn(&mut f, model)?;
    encode_process(&mut f, plan.interval.0, plan.interval.1)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{neighbor_cells, Image};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerate all assignments over the formula's variables (small n).
    fn assignments(n: usize) -> impl Iterator<Item = Assignment> {
        assert!(n <= 20);
        (0u32..1 << n).map(move |bits| Assignment::new((0..n).map(|k| bits >> k & 1 == 1).collect()))
    }

    #[test]
    fn cells_counts_and_var_counts() {
        let mut f = PbFormula::new(4, 2);
        let added = encode_cells(&mut f);
        assert_eq!(added, 16);
        assert_eq!(f.num_vars(), 48 + 16); // cell vars + pixel vars
        let mut f3 = PbFormula::new(3, 1);
        assert_eq!(encode_cells(&mut f3), 9);
        assert_eq!(f3.num_vars(), 18 + 9);
    }

    #[test]
    fn cells_models_pick_one_region_each() {
        // 2x2 grid, w = 2: enumerate all 2^12 cell assignments.
        let t = 2;
        let w = 2;
        let mut f = PbFormula::new(t, w);
        encode_cells(&mut f);
        let n_cells = t * t * (w + 1);
        let mut models = 0u32;
        for bits in 0u32..1 << n_cells {
            let mut vals: Vec<bool> = (0..n_cells).map(|k| bits >> k & 1 == 1).collect();
            vals.extend(std::iter::repeat(false).take(t * t)); // pixels
            let asg = Assignment::new(vals);
            if f.hard.iter().all(|c| c.eval(&asg)) {
                models += 1;
                for i in 1..=t {
                    for j in 1..=t {
                        let count = (1..=w + 1)
                            .filter(|&r| asg.get(f.cell_var(Cell::new(i, j), r).unwrap()))
                            .count();
                        assert_eq!(count, 1);
                    }
                }
            }
        }
        assert_eq!(models, 3u32.pow(4));
    }

    #[test]
    fn no_overlap_examples_and_counts() {
        let mut f = PbFormula::new(3, 2);
        let added = encode_no_overlap(&mut f);
        // 2t(t-1) unordered adjacent pairs, w(w-1) ordered grain pairs.
        assert_eq!(added, 2 * 3 * 2 * 2);
        // The clause (~c[2,2,1] | ~c[2,3,2]) must be present.
        let a = f.cell_var(Cell::new(2, 2), 1).unwrap();
        let b = f.cell_var(Cell::new(2, 3), 2).unwrap();
        let present = f.hard.iter().any(|c| {
            c.terms.len() == 2
                && c.terms.iter().any(|t| t.lit == Lit::neg(a))
                && c.terms.iter().any(|t| t.lit == Lit::neg(b))
        });
        assert!(present);

        let mut f1 = PbFormula::new(3, 1);
        assert_eq!(encode_no_overlap(&mut f1), 0);
    }

    #[test]
    fn no_overlap_brute_force_against_adjacency_scan() {
        let t = 2;
        let w = 2;
        let mut f = PbFormula::new(t, w);
        encode_cells(&mut f);
        encode_no_overlap(&mut f);
        let mut n_models = 0;
        for choice in 0..(w as u32 + 1).pow(4) {
            let mut c = choice;
            let mut region = [0usize; 4];
            for slot in region.iter_mut() {
                *slot = (c % (w as u32 + 1)) as usize + 1;
                c /= w as u32 + 1;
            }
            let mut vals = vec![false; f.num_vars()];
            for (idx, &r) in region.iter().enumerate() {
                let cell = Cell::from_index(idx, t);
                vals[f.cell_var(cell, r).unwrap().0 as usize] = true;
            }
            let asg = Assignment::new(vals);
            let sat = f.hard.iter().all(|cst| cst.eval(&asg));
            let mut ok = true;
            for idx in 0..4 {
                let cell = Cell::from_index(idx, t);
                for n in neighbor_cells(cell, t) {
                    let (a, b) = (region[idx], region[n.index(t)]);
                    if a <= w && b <= w && a != b {
                        ok = false;
                    }
                }
            }
            assert_eq!(sat, ok, "choice {region:?}");
            if sat {
                n_models += 1;
            }
        }
        assert!(n_models > 0);
    }

    #[test]
    fn connectivity_emits_parent_clauses() {
        let t = 4;
        let mut f = PbFormula::new(t, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dag = build_dag(t, Cell::new(3, 3), DagMode::Manhattan, &mut rng).unwrap();
        let void_dag = build_dag(t, Cell::new(1, 1), DagMode::Manhattan, &mut rng).unwrap();
        let added = encode_connectivity(&mut f, &[dag, void_dag]).unwrap();
        assert_eq!(added, 2 * t * t);
        let root = f.cell_var(Cell::new(3, 3), 1).unwrap();
        assert!(f
            .hard
            .iter()
            .any(|c| *c == PbConstraint::unit(Lit::pos(root))));
        // Parent clause for (2,2): ~c | c_parent1 | c_parent2.
        let c22 = f.cell_var(Cell::new(2, 2), 1).unwrap();
        let p1 = f.cell_var(Cell::new(2, 3), 1).unwrap();
        let p2 = f.cell_var(Cell::new(3, 2), 1).unwrap();
        let found = f.hard.iter().any(|c| {
            c.rel == Rel::Ge
                && c.bound == 1
                && c.terms.len() == 3
                && c.terms.iter().any(|t| t.lit == Lit::neg(c22))
                && c.terms.iter().any(|t| t.lit == Lit::pos(p1))
                && c.terms.iter().any(|t| t.lit == Lit::pos(p2))
        });
        assert!(found);
    }

    /// Fix an image on a w = 1 geometric formula (regions are then fully
    /// determined) and report whether all hard constraints hold.
    fn geometry_accepts(f: &PbFormula, img: &Image) -> bool {
        let t = f.meta.t;
        let mut vals = vec![false; f.num_vars()];
        for idx in 0..t * t {
            let c = Cell::from_index(idx, t);
            let grain = img.is_grain(c);
            vals[f.cell_var(c, 1).unwrap().0 as usize] = grain;
            vals[f.cell_var(c, 2).unwrap().0 as usize] = !grain;
            vals[f.pixel_var(c).unwrap().0 as usize] = grain;
        }
        let asg = Assignment::new(vals);
        f.hard.iter().all(|c| c.eval(&asg))
    }

    #[test]
    fn connectivity_models_are_connected() {
        // 4x4, one grain seeded at (2,2); enumerate all interior images.
        let t = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = PbFormula::new(t, 1);
        encode_cells(&mut f);
        let dag = build_dag(t, Cell::new(2, 2), DagMode::Manhattan, &mut rng).unwrap();
        let void_dag = build_dag(t, Cell::new(1, 1), DagMode::Manhattan, &mut rng).unwrap();
        encode_connectivity(&mut f, &[dag, void_dag]).unwrap();
        encode_boundary(&mut f, BoundaryMode::AllSides);
        encode_pixel_link(&mut f);
        let interior = [
            Cell::new(2, 2),
            Cell::new(2, 3),
            Cell::new(3, 2),
            Cell::new(3, 3),
        ];
        let mut n_models = 0;
        for bits in 0u32..16 {
            let mut img = Image::new_void(t);
            for (k, &c) in interior.iter().enumerate() {
                if bits >> k & 1 == 1 {
                    img.set(c, 1);
                }
            }
            if geometry_accepts(&f, &img) {
                n_models += 1;
                let report = crate::grid::validate_geometry(&img, 1, None, None);
                assert_eq!(report.grain_count, 1);
                assert!(report.voids_connected);
                assert!(report.boundary_ok);
                assert!(img.is_grain(Cell::new(2, 2)), "seed must be in the grain");
            }
        }
        // Of the 8 seed-containing interior images, the diagonal pair
        // {(2,2),(3,3)} fails grain connectivity, and {(2,2),(2,3),(3,2)}
        // blocks both DAG parents of the void cell (3,3): DAG-restricted
        // connectivity accepts a subset of the 4-connected shapes.
        assert_eq!(n_models, 6);
    }

    #[test]
    fn compactness_models_fill_inner_rings() {
        // 5x5, one grain at the center, slack 1: enumerate interior images.
        let t = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let center = Cell::new(3, 3);
        let mut f = PbFormula::new(t, 1);
        encode_cells(&mut f);
        let dag = build_dag(t, center, DagMode::Manhattan, &mut rng).unwrap();
        let void_dag = build_dag(t, Cell::new(1, 1), DagMode::Manhattan, &mut rng).unwrap();
        encode_connectivity(&mut f, &[dag, void_dag]).unwrap();
        let rings = build_rings(t, center).unwrap();
        encode_compactness(&mut f, &[rings.clone()], 1).unwrap();
        encode_boundary(&mut f, BoundaryMode::AllSides);
        encode_pixel_link(&mut f);
        let interior: Vec<Cell> = (2..=4)
            .flat_map(|i| (2..=4).map(move |j| Cell::new(i, j)))
            .collect();
        let mut n_models = 0;
        for bits in 0u32..512 {
            let mut img = Image::new_void(t);
            for (k, &c) in interior.iter().enumerate() {
                if bits >> k & 1 == 1 {
                    img.set(c, 1);
                }
            }
            if geometry_accepts(&f, &img) {
                n_models += 1;
                for v in 2..=rings.ring_count() {
                    let outer_occupied = rings.ring(v).iter().any(|&c| img.is_grain(c));
                    if outer_occupied {
                        assert!(rings.ring(v - 1).iter().all(|&c| img.is_grain(c)));
                    }
                }
            }
        }
        assert!(n_models >= 2, "expected compact models, got {n_models}");
    }

    #[test]
    fn boundary_counts() {
        let mut f = PbFormula::new(4, 1);
        assert_eq!(encode_boundary(&mut f, BoundaryMode::AllSides), 12);
        let mut f = PbFormula::new(3, 1);
        assert_eq!(encode_boundary(&mut f, BoundaryMode::AllSides), 8);
        let mut f = PbFormula::new(4, 1);
        assert_eq!(encode_boundary(&mut f, BoundaryMode::TwoSided), 7);
    }

    #[test]
    fn pixel_link_equality_matches_implication_form() {
        // 2x2, w = 1: compare model sets of the equality encoding and the
        // two-implication encoding over all 2^12 assignments.
        let t = 2;
        let mut f_eq = PbFormula::new(t, 1);
        encode_cells(&mut f_eq);
        encode_pixel_link(&mut f_eq);
        let mut f_imp = PbFormula::new(t, 1);
        encode_cells(&mut f_imp);
        for idx in 0..t * t {
            let c = Cell::from_index(idx, t);
            let grain = f_imp.cell_var(c, 1).unwrap();
            let void = f_imp.cell_var(c, 2).unwrap();
            let pix = f_imp.pixel_var(c).unwrap();
            // c_grain -> I ; c_void -> ~I
            f_imp.add_hard(PbConstraint::clause(vec![Lit::neg(grain), Lit::pos(pix)]));
            f_imp.add_hard(PbConstraint::clause(vec![Lit::neg(void), Lit::neg(pix)]));
        }
        assert_eq!(f_eq.num_vars(), f_imp.num_vars());
        for asg in assignments(f_eq.num_vars()) {
            let m_eq = f_eq.hard.iter().all(|c| c.eval(&asg));
            let m_imp = f_imp.hard.iter().all(|c| c.eval(&asg));
            assert_eq!(m_eq, m_imp);
        }
    }

    #[test]
    fn bnn_encoding_substitution_arithmetic() {
        let m = IntBnnModel {
            t: 2,
            blocks: vec![vec![IntNeuron::Threshold {
                weights: vec![1, -1, 1, 1],
                bound: 0,
                polarity: 1,
            }]],
            out_weights: vec![1],
            out_bias: 0,
        };
        let mut f = PbFormula::new(2, 0);
        encode_bnn(&mut f, &m).unwrap();
        assert_eq!(f.reified.len(), 1);
        let rc = &f.reified[0];
        assert_eq!(rc.terms[0].coeff, 2);
        assert_eq!(rc.terms[1].coeff, -2);
        // bound = C + sum(a) = 0 + 2.
        assert_eq!(rc.bound, 2);
        // Output: 2*w*y + (B - sum w) = 2y - 1.
        assert_eq!(f.output.terms[0].coeff, 2);
        assert_eq!(f.output.constant, -1);
    }

    #[test]
    fn bnn_constant_neuron_fixed_literal() {
        let m = IntBnnModel {
            t: 2,
            blocks: vec![vec![
                IntNeuron::Constant { value: 1 },
                IntNeuron::Constant { value: -1 },
            ]],
            out_weights: vec![1, 1],
            out_bias: 0,
        };
        let mut f = PbFormula::new(2, 0);
        encode_bnn(&mut f, &m).unwrap();
        let a0 = f.act_var(1, 0).unwrap();
        let a1 = f.act_var(1, 1).unwrap();
        assert!(f.hard.contains(&PbConstraint::unit(Lit::pos(a0))));
        assert!(f.hard.contains(&PbConstraint::unit(Lit::neg(a1))));
    }

    #[test]
    fn bnn_formula_value_equals_forward_with_pixels_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let t = 2;
            let m = IntBnnModel::random(t, 2, 3, &mut rng);
            let mut f = PbFormula::new(t, 0);
            encode_bnn(&mut f, &m).unwrap();
            let pixels: Vec<u8> = (0..t * t).map(|_| rng.gen_range(0..=1)).collect();
            let img = Image::from_pixels(t, pixels).unwrap();
            // Evaluate the reified chain directly: activations follow from
            // pixels layer by layer.
            let mut vals = vec![false; f.num_vars()];
            for c in img.cells() {
                vals[f.pixel_var(c).unwrap().0 as usize] = img.is_grain(c);
            }
            for cst in &f.hard {
                if cst.terms.len() == 1 && cst.rel == Rel::Ge && cst.bound == 1 {
                    let lit = cst.terms[0].lit;
                    vals[lit.var.0 as usize] = !lit.negated;
                }
            }
            for rc in &f.reified {
                let s: i64 = rc
                    .terms
                    .iter()
                    .map(|t| {
                        if vals[t.lit.var.0 as usize] != t.lit.negated {
                            t.coeff
                        } else {
                            0
                        }
                    })
                    .sum();
                vals[rc.lit.var.0 as usize] = s >= rc.bound;
            }
            let asg = Assignment::new(vals);
            f.check(&asg).unwrap();
            assert_eq!(f.output_value(&asg).unwrap(), m.forward(&img).unwrap());
        }
    }

    #[test]
    fn process_interval_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = IntBnnModel::random(2, 1, 3, &mut rng);
        let mut f = PbFormula::new(2, 0);
        encode_bnn(&mut f, &m).unwrap();
        let before = f.hard.len();
        assert_eq!(encode_process(&mut f, 40, 49).unwrap(), 2);
        assert_eq!(f.hard.len(), before + 2);
        assert_eq!(f.meta.interval, Some((40, 49)));
        assert!(encode_process(&mut f, 50, 40).is_err());
        assert!(encode_process(&mut f, 1, 1).is_ok());
    }

    #[test]
    fn linearize_instantiation_examples() {
        // r <-> (x1 + x2 >= 2) with L = 0, U = 2.
        let mut f = PbFormula::new(1, 0);
        let x1 = f.intern(VarName::Aux(1));
        let x2 = f.intern(VarName::Aux(2));
        let r = f.intern(VarName::Aux(0));
        let rc = ReifiedConstraint {
            lit: Lit::pos(r),
            terms: vec![
                LinTerm {
                    coeff: 1,
                    lit: Lit::pos(x1),
                },
                LinTerm {
                    coeff: 1,
                    lit: Lit::pos(x2),
                },
            ],
            bound: 2,
        };
        let out = linearize_reified(&rc);
        assert_eq!(out.len(), 2);
        // x1 + x2 + 2(1-r) >= 2.
        assert_eq!(out[0].rel, Rel::Ge);
        assert_eq!(out[0].bound, 2);
        assert_eq!(out[0].terms[2].coeff, 2);
        assert_eq!(out[0].terms[2].lit, Lit::neg(r));
        // x1 + x2 - r <= 1.
        assert_eq!(out[1].rel, Rel::Le);
        assert_eq!(out[1].bound, 1);
        assert_eq!(out[1].terms[2].coeff, -1);
        assert_eq!(out[1].terms[2].lit, Lit::pos(r));
    }

    #[test]
    fn linearize_exhaustive_biconditional_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let n: usize = rng.gen_range(1..=3);
            let mut f = PbFormula::new(1, 0);
            let r = f.intern(VarName::Aux(100));
            let vars: Vec<VarId> = (0..n).map(|k| f.intern(VarName::Aux(k as u32))).collect();
            let terms: Vec<LinTerm> = vars
                .iter()
                .map(|&v| LinTerm {
                    coeff: loop {
                        let c = rng.gen_range(-3i64..=3);
                        if c != 0 {
                            break c;
                        }
                    },
                    lit: if rng.gen_bool(0.5) {
                        Lit::pos(v)
                    } else {
                        Lit::neg(v)
                    },
                })
                .collect();
            let bound = rng.gen_range(-5i64..=5);
            let rc = ReifiedConstraint {
                lit: Lit::pos(r),
                terms,
                bound,
            };
            let linear = linearize_reified(&rc);
            for asg in assignments(f.num_vars()) {
                let bicond = rc.holds(&asg);
                let pair = linear.iter().all(|c| c.eval(&asg));
                assert_eq!(bicond, pair, "rc={rc:?} asg={asg:?}");
            }
        }
    }

    #[test]
    fn linearize_negative_coefficient_case() {
        // r <-> (-x1 >= 0): r = 1 forces x1 = 0.
        let mut f = PbFormula::new(1, 0);
        let x1 = f.intern(VarName::Aux(1));
        let r = f.intern(VarName::Aux(0));
        let rc = ReifiedConstraint {
            lit: Lit::pos(r),
            terms: vec![LinTerm {
                coeff: -1,
                lit: Lit::pos(x1),
            }],
            bound: 0,
        };
        let linear = linearize_reified(&rc);
        for asg in assignments(f.num_vars()) {
            if linear.iter().all(|c| c.eval(&asg)) && asg.get(r) {
                assert!(!asg.get(x1));
            }
        }
    }

    #[test]
    fn instance_assembly_and_size_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 8;
        let w = 2;
        let m = IntBnnModel::random(t, 1, 4, &mut rng);
        let plan =
            InstancePlan::sample(t, w, (0, 20), 1..=2, DagMode::Manhattan, &mut rng).unwrap();
        let f = encode_instance(&m, &plan).unwrap();
        // Declared variables: cells + pixels + activations.
        assert_eq!(f.num_vars(), t * t * (w + 1) + t * t + 4);
        // Reified constraints: one per non-constant neuron.
        let n_const = m.blocks[0]
            .iter()
            .filter(|n| matches!(n, IntNeuron::Constant { .. }))
            .count();
        assert_eq!(f.reified.len(), 4 - n_const);
        assert_eq!(f.meta.interval, Some((0, 20)));
        // Linearization leaves no reified constraints behind.
        let lin = f.linearized();
        assert!(lin.reified.is_empty());
        assert!(lin.hard.len() >= f.hard.len() + f.reified.len());
    }
}
