//! Embedded CDCL SAT solver.
//!
//! Conflict-driven clause learning with two-watched-literal propagation,
//! first-UIP learning, activity-driven branching, phase saving, Luby
//! restarts and activity-based learnt-clause reduction. The seed controls
//! initial polarities and branching tie-breaks, which is how answer
//! diversity is injected; everything else is deterministic.
//!
//! The solver is one-shot per query but clauses may be added between
//! `solve` calls (used for model enumeration via blocking clauses).

use std::time::Instant;

/// Internal literal: variable index shifted left, low bit = negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct L(u32);

impl L {
    fn new(var: u32, neg: bool) -> L {
        L(var << 1 | neg as u32)
    }

    fn from_dimacs(l: i32) -> L {
        debug_assert!(l != 0);
        L::new(l.unsigned_abs() - 1, l < 0)
    }

    fn var(self) -> u32 {
        self.0 >> 1
    }

    fn neg(self) -> bool {
        self.0 & 1 == 1
    }

    fn flip(self) -> L {
        L(self.0 ^ 1)
    }

    fn code(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum V {
    Undef,
    True,
    False,
}

impl V {
    fn from_bool(b: bool) -> V {
        if b {
            V::True
        } else {
            V::False
        }
    }

    fn flip(self) -> V {
        match self {
            V::Undef => V::Undef,
            V::True => V::False,
            V::False => V::True,
        }
    }
}

const CREF_NONE: u32 = u32::MAX;
const FLAG_LEARNT: u32 = 1;
const FLAG_RELOCATED: u32 = 2;

/// Clause storage: `[flags|len<<2, activity_bits, lits...]` per clause.
struct Arena {
    data: Vec<u32>,
    wasted: usize,
}

impl Arena {
    fn new() -> Arena {
        Arena {
            data: Vec::new(),
            wasted: 0,
        }
    }

    fn alloc(&mut self, lits: &[L], learnt: bool) -> u32 {
        let cr = self.data.len() as u32;
        let flags = (lits.len() as u32) << 2 | if learnt { FLAG_LEARNT } else { 0 };
        self.data.push(flags);
        self.data.push(0f32.to_bits());
        self.data.extend(lits.iter().map(|l| l.0));
        cr
    }

    fn len(&self, cr: u32) -> usize {
        (self.data[cr as usize] >> 2) as usize
    }

    fn is_learnt(&self, cr: u32) -> bool {
        self.data[cr as usize] & FLAG_LEARNT != 0
    }

    fn lit(&self, cr: u32, k: usize) -> L {
        L(self.data[cr as usize + 2 + k])
    }

    fn set_lit(&mut self, cr: u32, k: usize, l: L) {
        self.data[cr as usize + 2 + k] = l.0;
    }

    fn activity(&self, cr: u32) -> f32 {
        f32::from_bits(self.data[cr as usize + 1])
    }

    fn set_activity(&mut self, cr: u32, a: f32) {
        self.data[cr as usize + 1] = a.to_bits();
    }

    fn free(&mut self, cr: u32) {
        self.wasted += self.len(cr) + 2;
    }

    /// Copy a clause into `to`, leaving a forward pointer behind.
    fn relocate(&mut self, cr: u32, to: &mut Arena) -> u32 {
        if self.data[cr as usize] & FLAG_RELOCATED != 0 {
            return self.data[cr as usize + 1];
        }
        let len = self.len(cr);
        let lits: Vec<L> = (0..len).map(|k| self.lit(cr, k)).collect();
        let learnt = self.is_learnt(cr);
        let act = self.activity(cr);
        let new_cr = to.alloc(&lits, learnt);
        to.set_activity(new_cr, act);
        self.data[cr as usize] = FLAG_RELOCATED;
        self.data[cr as usize + 1] = new_cr;
        new_cr
    }
}

#[derive(Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: L,
}

/// Max-heap over variable activities.
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<i32>,
}

impl VarHeap {
    fn new() -> VarHeap {
        VarHeap {
            heap: Vec::new(),
            pos: Vec::new(),
        }
    }

    fn grow(&mut self, n: usize) {
        self.pos.resize(n, -1);
    }

    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize] >= 0
    }

    fn insert(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v as usize] = self.heap.len() as i32;
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn bump(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            self.sift_up(self.pos[v as usize] as usize, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = -1;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = 0;
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn sift_up(&mut self, mut k: usize, act: &[f64]) {
        let v = self.heap[k];
        while k > 0 {
            let parent = (k - 1) / 2;
            let pv = self.heap[parent];
            if act[v as usize] <= act[pv as usize] {
                break;
            }
            self.heap[k] = pv;
            self.pos[pv as usize] = k as i32;
            k = parent;
        }
        self.heap[k] = v;
        self.pos[v as usize] = k as i32;
    }

    fn sift_down(&mut self, mut k: usize, act: &[f64]) {
        let v = self.heap[k];
        loop {
            let l = 2 * k + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let child = if r < self.heap.len()
                && act[self.heap[r] as usize] > act[self.heap[l] as usize]
            {
                r
            } else {
                l
            };
            let cv = self.heap[child];
            if act[cv as usize] <= act[v as usize] {
                break;
            }
            self.heap[k] = cv;
            self.pos[cv as usize] = k as i32;
            k = child;
        }
        self.heap[k] = v;
        self.pos[v as usize] = k as i32;
    }
}

/// Resource limits for one `solve` call.
#[derive(Debug, Clone, Default)]
pub struct Budget {
    pub deadline: Option<Instant>,
    pub max_conflicts: Option<u64>,
}

impl Budget {
    pub fn none() -> Budget {
        Budget::default()
    }

    pub fn with_timeout(timeout: std::time::Duration) -> Budget {
        Budget {
            deadline: Some(Instant::now() + timeout),
            max_conflicts: None,
        }
    }

    pub fn with_conflicts(max: u64) -> Budget {
        Budget {
            deadline: None,
            max_conflicts: Some(max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    /// Budget exhausted before an answer.
    Unknown,
}

#[derive(Debug, Default, Clone)]
pub struct SolverStats {
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
}

pub struct SatSolver {
    arena: Arena,
    orig: Vec<u32>,
    learnts: Vec<u32>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<V>,
    phase: Vec<bool>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<L>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f32,
    heap: VarHeap,
    seen: Vec<bool>,
    ok: bool,
    model: Vec<bool>,
    rng: u64,
    reduce_count: u64,
    pub stats: SolverStats,
}

impl SatSolver {
    pub fn new(seed: u64) -> SatSolver {
        SatSolver {
            arena: Arena::new(),
            orig: Vec::new(),
            learnts: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            phase: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            cla_inc: 1.0,
            heap: VarHeap::new(),
            seen: Vec::new(),
            ok: true,
            model: Vec::new(),
            rng: seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1),
            reduce_count: 0,
            stats: SolverStats::default(),
        }
    }

    fn next_rand(&mut self) -> u64 {
        // splitmix64
        self.rng = self.rng.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.rng;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn num_vars(&self) -> usize {
        self.assigns.len()
    }

    /// Declare variables up to `n` (1-based DIMACS indexing outside).
    pub fn ensure_vars(&mut self, n: usize) {
        while self.assigns.len() < n {
            let v = self.assigns.len() as u32;
            self.assigns.push(V::Undef);
            let r = self.next_rand();
            self.phase.push(r & 1 == 1);
            self.level.push(0);
            self.reason.push(CREF_NONE);
            // Tiny jitter makes the branching order seed-dependent.
            self.activity
                .push((r >> 1) as f64 / u64::MAX as f64 * 1e-6);
            self.watches.push(Vec::new());
            self.watches.push(Vec::new());
            self.seen.push(false);
            self.heap.grow(self.assigns.len());
            self.heap.insert(v, &self.activity);
        }
    }

    pub fn new_var(&mut self) -> i32 {
        self.ensure_vars(self.num_vars() + 1);
        self.num_vars() as i32
    }

    fn value(&self, l: L) -> V {
        let v = self.assigns[l.var() as usize];
        if l.neg() {
            v.flip()
        } else {
            v
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Add a clause in DIMACS convention. Returns false if the solver is
    /// already in an unsatisfiable root state.
    pub fn add_clause(&mut self, lits: &[i32]) -> bool {
        self.backtrack_to(0);
        if !self.ok {
            return false;
        }
        let mut ls: Vec<L> = lits.iter().map(|&l| L::from_dimacs(l)).collect();
        for l in &ls {
            assert!((l.var() as usize) < self.num_vars(), "undeclared variable");
        }
        ls.sort_by_key(|l| l.0);
        ls.dedup();
        // Tautology or satisfied at root: drop. False-at-root lits: remove.
        let mut out: Vec<L> = Vec::with_capacity(ls.len());
        for (k, &l) in ls.iter().enumerate() {
            if k + 1 < ls.len() && ls[k + 1] == l.flip() {
                return true;
            }
            if k > 0 && ls[k - 1] == l.flip() {
                return true;
            }
            match self.value(l) {
                V::True => return true,
                V::False => {}
                V::Undef => out.push(l),
            }
        }
        match out.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.unchecked_enqueue(out[0], CREF_NONE);
                if self.propagate().is_some() {
                    self.ok = false;
                    false
                } else {
                    true
                }
            }
            _ => {
                let cr = self.arena.alloc(&out, false);
                self.orig.push(cr);
                self.attach(cr);
                true
            }
        }
    }

    fn attach(&mut self, cr: u32) {
        let l0 = self.arena.lit(cr, 0);
        let l1 = self.arena.lit(cr, 1);
        self.watches[l0.flip().code()].push(Watcher {
            cref: cr,
            blocker: l1,
        });
        self.watches[l1.flip().code()].push(Watcher {
            cref: cr,
            blocker: l0,
        });
    }

    fn detach(&mut self, cr: u32) {
        let l0 = self.arena.lit(cr, 0);
        let l1 = self.arena.lit(cr, 1);
        self.watches[l0.flip().code()].retain(|w| w.cref != cr);
        self.watches[l1.flip().code()].retain(|w| w.cref != cr);
    }

    fn unchecked_enqueue(&mut self, l: L, from: u32) {
        debug_assert_eq!(self.value(l), V::Undef);
        self.assigns[l.var() as usize] = V::from_bool(!l.neg());
        self.level[l.var() as usize] = self.decision_level();
        self.reason[l.var() as usize] = from;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        let mut conflict = None;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let mut i = 0;
            let mut j = 0;
            'clauses: while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == V::True {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cr = w.cref;
                // Put the false literal at slot 1.
                if self.arena.lit(cr, 0) == p.flip() {
                    let l1 = self.arena.lit(cr, 1);
                    self.arena.set_lit(cr, 0, l1);
                    self.arena.set_lit(cr, 1, p.flip());
                }
                debug_assert_eq!(self.arena.lit(cr, 1), p.flip());
                let first = self.arena.lit(cr, 0);
                if first != w.blocker && self.value(first) == V::True {
                    ws[j] = Watcher {
                        cref: cr,
                        blocker: first,
                    };
                    j += 1;
                    continue;
                }
                let len = self.arena.len(cr);
                for k in 2..len {
                    let lk = self.arena.lit(cr, k);
                    if self.value(lk) != V::False {
                        self.arena.set_lit(cr, 1, lk);
                        self.arena.set_lit(cr, k, p.flip());
                        self.watches[lk.flip().code()].push(Watcher {
                            cref: cr,
                            blocker: first,
                        });
                        continue 'clauses;
                    }
                }
                // Unit or conflicting.
                ws[j] = Watcher {
                    cref: cr,
                    blocker: first,
                };
                j += 1;
                if self.value(first) == V::False {
                    conflict = Some(cr);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.unchecked_enqueue(first, cr);
                }
            }
            ws.truncate(j);
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                break;
            }
        }
        conflict
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<L>, u32) {
        let mut learnt: Vec<L> = vec![L(0)];
        let mut counter = 0u32;
        let mut p: Option<L> = None;
        let mut index = self.trail.len();
        loop {
            if self.arena.is_learnt(confl) {
                self.bump_clause(confl);
            }
            let len = self.arena.len(confl);
            let start = if p.is_some() { 1 } else { 0 };
            for k in start..len {
                let q = self.arena.lit(confl, k);
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(q.var());
                    if self.level[v] >= self.decision_level() {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            // Walk back to the next marked trail literal.
            loop {
                index -= 1;
                if self.seen[self.trail[index].var() as usize] {
                    break;
                }
            }
            let pl = self.trail[index];
            self.seen[pl.var() as usize] = false;
            counter -= 1;
            if counter == 0 {
                learnt[0] = pl.flip();
                break;
            }
            confl = self.reason[pl.var() as usize];
            debug_assert_ne!(confl, CREF_NONE);
            p = Some(pl);
        }
        // Backtrack to the second-highest decision level in the clause.
        let mut btl = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var() as usize] > self.level[learnt[max_i].var() as usize]
                {
                    max_i = k;
                }
            }
            learnt.swap(1, max_i);
            btl = self.level[learnt[1].var() as usize];
        }
        for l in &learnt {
            self.seen[l.var() as usize] = false;
        }
        (learnt, btl)
    }

    fn bump_var(&mut self, v: u32) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bump(v, &self.activity);
    }

    fn bump_clause(&mut self, cr: u32) {
        let a = self.arena.activity(cr) + self.cla_inc;
        self.arena.set_activity(cr, a);
        if a > 1e20 {
            for &lcr in &self.learnts {
                let old = self.arena.activity(lcr);
                self.arena.set_activity(lcr, old * 1e-20);
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn backtrack_to(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let bound = self.trail_lim[lvl as usize];
        for k in (bound..self.trail.len()).rev() {
            let l = self.trail[k];
            let v = l.var() as usize;
            self.phase[v] = !l.neg();
            self.assigns[v] = V::Undef;
            self.reason[v] = CREF_NONE;
            self.heap.insert(l.var(), &self.activity);
        }
        self.trail.truncate(bound);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = self.trail.len();
    }

    fn decide(&mut self) -> bool {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == V::Undef {
                self.stats.decisions += 1;
                self.trail_lim.push(self.trail.len());
                let l = L::new(v, !self.phase[v as usize]);
                self.unchecked_enqueue(l, CREF_NONE);
                return true;
            }
        }
        false
    }

    fn locked(&self, cr: u32) -> bool {
        let l0 = self.arena.lit(cr, 0);
        self.value(l0) == V::True && self.reason[l0.var() as usize] == cr
    }

    fn reduce_db(&mut self) {
        self.reduce_count += 1;
        let mut sorted: Vec<u32> = self.learnts.clone();
        sorted.sort_by(|&a, &b| {
            self.arena
                .activity(a)
                .partial_cmp(&self.arena.activity(b))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut removed = std::collections::HashSet::new();
        for &cr in sorted.iter().take(sorted.len() / 2) {
            if !self.locked(cr) && self.arena.len(cr) > 2 {
                self.detach(cr);
                self.arena.free(cr);
                removed.insert(cr);
            }
        }
        self.learnts.retain(|cr| !removed.contains(cr));
        if self.arena.wasted * 3 > self.arena.data.len() {
            self.collect_garbage();
        }
    }

    fn collect_garbage(&mut self) {
        let mut to = Arena::new();
        to.data.reserve(self.arena.data.len() - self.arena.wasted);
        for cr in self.orig.iter_mut() {
            *cr = self.arena.relocate(*cr, &mut to);
        }
        for cr in self.learnts.iter_mut() {
            *cr = self.arena.relocate(*cr, &mut to);
        }
        for ws in self.watches.iter_mut() {
            for w in ws.iter_mut() {
                w.cref = self.arena.relocate(w.cref, &mut to);
            }
        }
        for l in &self.trail {
            let r = &mut self.reason[l.var() as usize];
            if *r != CREF_NONE {
                *r = self.arena.relocate(*r, &mut to);
            }
        }
        self.arena = to;
    }

    fn luby(x: u64) -> u64 {
        // Luby restart sequence.
        let mut size = 1u64;
        let mut seq = 0u64;
        while size < x + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        let mut x = x;
        while size - 1 != x {
            size = (size - 1) / 2;
            seq -= 1;
            x %= size;
        }
        1u64 << seq
    }

    /// Run the search under a budget.
    pub fn solve(&mut self, budget: &Budget) -> SatResult {
        self.backtrack_to(0);
        if !self.ok {
            return SatResult::Unsat;
        }
        if self.propagate().is_some() {
            self.ok = false;
            return SatResult::Unsat;
        }
        let start_conflicts = self.stats.conflicts;
        let mut restart_round = 0u64;
        let mut budget_tick = 0u32;
        loop {
            let conflict_cap = 100 * Self::luby(restart_round);
            let mut conflicts_here = 0u64;
            loop {
                if let Some(confl) = self.propagate() {
                    self.stats.conflicts += 1;
                    conflicts_here += 1;
                    if self.decision_level() == 0 {
                        self.ok = false;
                        return SatResult::Unsat;
                    }
                    let (learnt, btl) = self.analyze(confl);
                    self.backtrack_to(btl);
                    if learnt.len() == 1 {
                        self.unchecked_enqueue(learnt[0], CREF_NONE);
                    } else {
                        let cr = self.arena.alloc(&learnt, true);
                        self.learnts.push(cr);
                        self.attach(cr);
                        self.bump_clause(cr);
                        self.unchecked_enqueue(learnt[0], cr);
                    }
                    self.var_inc /= 0.95;
                    self.cla_inc /= 0.999;
                } else {
                    budget_tick += 1;
                    if budget_tick & 0x3ff == 0 && self.out_of_budget(budget, start_conflicts) {
                        return SatResult::Unknown;
                    }
                    if conflicts_here >= conflict_cap {
                        self.stats.restarts += 1;
                        self.backtrack_to(0);
                        break;
                    }
                    if self.learnts.len() > 4000 + 1000 * self.reduce_count as usize {
                        self.reduce_db();
                    }
                    if !self.decide() {
                        self.model = self
                            .assigns
                            .iter()
                            .map(|&v| v == V::True)
                            .collect();
                        self.backtrack_to(0);
                        return SatResult::Sat;
                    }
                }
            }
            restart_round += 1;
            if self.out_of_budget(budget, start_conflicts) {
                return SatResult::Unknown;
            }
        }
    }

    fn out_of_budget(&self, budget: &Budget, start_conflicts: u64) -> bool {
        if let Some(max) = budget.max_conflicts {
            if self.stats.conflicts - start_conflicts >= max {
                return true;
            }
        }
        if let Some(deadline) = budget.deadline {
            if Instant::now() >= deadline {
                return true;
            }
        }
        false
    }

    /// Suggest an initial polarity for a variable. Phase saving overrides
    /// the hint as soon as the variable gets assigned during search.
    pub fn hint_phase(&mut self, var: i32, value: bool) {
        self.phase[(var - 1) as usize] = value;
    }

    /// Raise a variable's starting branching priority.
    pub fn boost_activity(&mut self, var: i32, amount: f64) {
        let v = (var - 1) as usize;
        self.activity[v] += amount;
        self.heap.bump(var as u32 - 1, &self.activity);
    }

    /// Model value of a 1-based DIMACS variable after a Sat answer.
    pub fn model_value(&self, var: i32) -> bool {
        self.model[(var - 1) as usize]
    }

    pub fn model(&self) -> &[bool] {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solver_with(n: usize, clauses: &[&[i32]]) -> SatSolver {
        let mut s = SatSolver::new(1);
        s.ensure_vars(n);
        for c in clauses {
            s.add_clause(c);
        }
        s
    }

    #[test]
    fn trivial_sat_and_unsat() {
        let mut s = solver_with(1, &[&[1]]);
        assert_eq!(s.solve(&Budget::none()), SatResult::Sat);
        assert!(s.model_value(1));

        let mut s = solver_with(1, &[&[1], &[-1]]);
        assert_eq!(s.solve(&Budget::none()), SatResult::Unsat);

        let mut s = solver_with(2, &[&[1, 2], &[-1, 2], &[1, -2], &[-1, -2]]);
        assert_eq!(s.solve(&Budget::none()), SatResult::Unsat);
    }

    #[test]
    fn empty_clause_is_unsat() {
        let mut s = SatSolver::new(0);
        s.ensure_vars(1);
        assert!(!s.add_clause(&[]));
        assert_eq!(s.solve(&Budget::none()), SatResult::Unsat);
    }

    #[test]
    fn pigeonhole_is_unsat() {
        // 5 pigeons, 4 holes.
        let (p, h) = (5, 4);
        let var = |pig: usize, hole: usize| (pig * h + hole + 1) as i32;
        let mut s = SatSolver::new(7);
        s.ensure_vars(p * h);
        for pig in 0..p {
            let c: Vec<i32> = (0..h).map(|hole| var(pig, hole)).collect();
            s.add_clause(&c);
        }
        for hole in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[-var(a, hole), -var(b, hole)]);
                }
            }
        }
        assert_eq!(s.solve(&Budget::none()), SatResult::Unsat);
    }

    #[test]
    fn conflict_budget_reports_unknown() {
        // A hard instance with a 0-conflict budget cannot be answered
        // unless it solves by pure propagation.
        let (p, h) = (7, 6);
        let var = |pig: usize, hole: usize| (pig * h + hole + 1) as i32;
        let mut s = SatSolver::new(7);
        s.ensure_vars(p * h);
        for pig in 0..p {
            let c: Vec<i32> = (0..h).map(|hole| var(pig, hole)).collect();
            s.add_clause(&c);
        }
        for hole in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    s.add_clause(&[-var(a, hole), -var(b, hole)]);
                }
            }
        }
        assert_eq!(s.solve(&Budget::with_conflicts(1)), SatResult::Unknown);
    }

    fn brute_force(n: usize, clauses: &[Vec<i32>]) -> bool {
        'outer: for bits in 0u32..1 << n {
            for c in clauses {
                let sat = c.iter().any(|&l| {
                    let v = l.unsigned_abs() as usize - 1;
                    (bits >> v & 1 == 1) == (l > 0)
                });
                if !sat {
                    continue 'outer;
                }
            }
            return true;
        }
        false
    }

    #[test]
    fn fuzz_against_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for round in 0..400 {
            let n = rng.gen_range(3..=10);
            let m = rng.gen_range(2..=(n * 5));
            let clauses: Vec<Vec<i32>> = (0..m)
                .map(|_| {
                    let len = rng.gen_range(1..=3);
                    (0..len)
                        .map(|_| {
                            let v = rng.gen_range(1..=n as i32);
                            if rng.gen_bool(0.5) {
                                v
                            } else {
                                -v
                            }
                        })
                        .collect()
                })
                .collect();
            let want = brute_force(n, &clauses);
            let mut s = SatSolver::new(round);
            s.ensure_vars(n);
            let mut root_conflict = false;
            for c in &clauses {
                if !s.add_clause(c) {
                    root_conflict = true;
                }
            }
            let got = s.solve(&Budget::none());
            if root_conflict {
                assert_eq!(got, SatResult::Unsat);
            }
            match got {
                SatResult::Sat => {
                    assert!(want, "solver said sat on unsat instance (round {round})");
                    for c in &clauses {
                        let ok = c.iter().any(|&l| {
                            let val = s.model_value(l.abs());
                            (l > 0) == val
                        });
                        assert!(ok, "model violates clause (round {round})");
                    }
                }
                SatResult::Unsat => {
                    assert!(!want, "solver said unsat on sat instance (round {round})")
                }
                SatResult::Unknown => panic!("unbudgeted solve returned unknown"),
            }
        }
    }

    #[test]
    fn incremental_blocking_clauses_enumerate_models() {
        // x1 xor x2: exactly two models.
        let mut s = solver_with(2, &[&[1, 2], &[-1, -2]]);
        let mut seen = Vec::new();
        loop {
            match s.solve(&Budget::none()) {
                SatResult::Sat => {
                    let m = (s.model_value(1), s.model_value(2));
                    seen.push(m);
                    let block: Vec<i32> = [(1, m.0), (2, m.1)]
                        .iter()
                        .map(|&(v, val)| if val { -v } else { v })
                        .collect();
                    s.add_clause(&block);
                }
                SatResult::Unsat => break,
                SatResult::Unknown => panic!(),
            }
        }
        seen.sort();
        assert_eq!(seen, vec![(false, true), (true, false)]);
    }

    #[test]
    fn seeds_change_models() {
        // Loose instance: many models; different seeds should find at
        // least two distinct ones across 8 tries.
        let clauses: Vec<Vec<i32>> = vec![vec![1, 2, 3, 4, 5, 6]];
        let mut models = std::collections::HashSet::new();
        for seed in 0..8 {
            let mut s = SatSolver::new(seed);
            s.ensure_vars(6);
            for c in &clauses {
                s.add_clause(c);
            }
            assert_eq!(s.solve(&Budget::none()), SatResult::Sat);
            models.insert(s.model().to_vec());
        }
        assert!(models.len() >= 2, "got {} distinct models", models.len());
    }

    #[test]
    fn deterministic_given_seed() {
        let clauses: Vec<Vec<i32>> = vec![
            vec![1, 2, 3],
            vec![-1, 4],
            vec![-2, 5],
            vec![-3, -4, -5],
            vec![2, -5, 6],
        ];
        let run = |seed| {
            let mut s = SatSolver::new(seed);
            s.ensure_vars(6);
            for c in &clauses {
                s.add_clause(c);
            }
            assert_eq!(s.solve(&Budget::none()), SatResult::Sat);
            s.model().to_vec()
        };
        assert_eq!(run(5), run(5));
    }
}
