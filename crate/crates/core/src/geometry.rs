//! Randomized geometric scaffolding: per-grain connectivity DAGs,
//! concentric compactness rings and seed placement.
//!
//! The connectivity encoding needs, for every region, an acyclic parent
//! structure rooted at a seed cell; membership then only propagates from
//! parents, which keeps regions connected without path constraints. The
//! compactness encoding needs discrete "circles" around each grain center.

use crate::error::{Error, Result};
use crate::grid::{neighbor_cells, Cell};
use rand::Rng;

/// How to layer the grid when building a connectivity DAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DagMode {
    /// Layer = Manhattan distance to the root. Deterministic.
    Manhattan,
    /// Random growth layering; admits shapes the Manhattan DAG rules out.
    Randomized,
}

/// Acyclic parent structure covering the grid, rooted at a seed cell.
///
/// Invariants: the root has no parents, every other cell has at least one,
/// every parent is a side-neighbour, and following parents from any cell
/// reaches the root in at most `2t` steps.
#[derive(Debug, Clone)]
pub struct DagGraph {
    t: usize,
    root: Cell,
    parents: Vec<Vec<Cell>>,
}

impl DagGraph {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn root(&self) -> Cell {
        self.root
    }

    pub fn parents(&self, c: Cell) -> &[Cell] {
        &self.parents[c.index(self.t)]
    }
}

/// Build a connectivity DAG over the `t`x`t` grid rooted at `root`.
pub fn build_dag<R: Rng>(t: usize, root: Cell, mode: DagMode, rng: &mut R) -> Result<DagGraph> {
    if !root.in_grid(t) {
        return Err(Error::InvalidCell { cell: root, t });
    }
    let layers = match mode {
        DagMode::Manhattan => (0..t * t)
            .map(|idx| Cell::from_index(idx, t).dist1(root))
            .collect::<Vec<_>>(),
        DagMode::Randomized => randomized_layers(t, root, rng)?,
    };
    let mut parents = vec![Vec::new(); t * t];
    for idx in 0..t * t {
        let c = Cell::from_index(idx, t);
        if c == root {
            continue;
        }
        let lc = layers[idx];
        parents[idx] = neighbor_cells(c, t)
            .filter(|n| layers[n.index(t)] + 1 == lc)
            .collect();
        debug_assert!(!parents[idx].is_empty());
    }
    Ok(DagGraph { t, root, parents })
}

/// Random growth layering. Cells are attached one at a time to a random
/// already-layered neighbour, one layer deeper. A layer cap of `2(t-1)`
/// keeps parent chains short; if growth corners itself under the cap the
/// attempt is retried with fresh randomness.
fn randomized_layers<R: Rng>(t: usize, root: Cell, rng: &mut R) -> Result<Vec<usize>> {
    let cap = 2 * (t - 1);
    let attempts = 100;
    for _ in 0..attempts {
        let mut layer = vec![usize::MAX; t * t];
        layer[root.index(t)] = 0;
        // Frontier of unlayered cells adjacent to at least one layered cell.
        let mut frontier: Vec<Cell> = neighbor_cells(root, t).collect();
        let mut in_frontier = vec![false; t * t];
        for c in &frontier {
            in_frontier[c.index(t)] = true;
        }
        let mut assigned = 1;
        let mut stuck = false;
        while assigned < t * t {
            // Pick a frontier cell that still has a usable neighbour.
            let mut pick = None;
            let mut tries = 0;
            while tries < frontier.len().max(1) * 4 {
                let k = rng.gen_range(0..frontier.len());
                let c = frontier[k];
                let options: Vec<usize> = neighbor_cells(c, t)
                    .map(|n| layer[n.index(t)])
                    .filter(|&l| l != usize::MAX && l + 1 <= cap)
                    .collect();
                if !options.is_empty() {
                    let l = options[rng.gen_range(0..options.len())];
                    pick = Some((k, c, l + 1));
                    break;
                }
                tries += 1;
            }
            let Some((k, c, lc)) = pick else {
                stuck = true;
                break;
            };
            frontier.swap_remove(k);
            layer[c.index(t)] = lc;
            assigned += 1;
            for n in neighbor_cells(c, t) {
                let nidx = n.index(t);
                if layer[nidx] == usize::MAX && !in_frontier[nidx] {
                    in_frontier[nidx] = true;
                    frontier.push(n);
                }
            }
        }
        if !stuck {
            return Ok(layer);
        }
    }
    Err(Error::DagConstruction { t, attempts })
}

/// Concentric discrete circles around a grain center. Ring `v` holds the
/// cells whose Euclidean distance to the center rounds to `v`; rings
/// partition the grid minus the center.
#[derive(Debug, Clone)]
pub struct RingSet {
    center: Cell,
    rings: Vec<Vec<Cell>>,
}

impl RingSet {
    pub fn center(&self) -> Cell {
        self.center
    }

    /// Number of rings (the largest ring index present).
    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    /// Cells of ring `v` (1-based).
    pub fn ring(&self, v: usize) -> &[Cell] {
        &self.rings[v - 1]
    }

    /// Ring index of a cell, or None for the center.
    pub fn ring_of(&self, c: Cell) -> Option<usize> {
        let v = c.dist_euclid(self.center).round() as usize;
        if v == 0 {
            None
        } else {
            Some(v)
        }
    }
}

/// Build the ring set for `center` on a `t`x`t` grid.
pub fn build_rings(t: usize, center: Cell) -> Result<RingSet> {
    if !center.in_grid(t) {
        return Err(Error::InvalidCell { cell: center, t });
    }
    let mut rings: Vec<Vec<Cell>> = Vec::new();
    for idx in 0..t * t {
        let c = Cell::from_index(idx, t);
        if c == center {
            continue;
        }
        let v = c.dist_euclid(center).round() as usize;
        debug_assert!(v >= 1);
        if rings.len() < v {
            rings.resize(v, Vec::new());
        }
        rings[v - 1].push(c);
    }
    Ok(RingSet { center, rings })
}

/// Randomly placed grain seeds plus the void seed and the compactness slack.
///
/// Seeds keep Chebyshev distance >= 3 from each other so that two distinct
/// grains can never be forced side-adjacent, and stay at least two cells
/// off the border, which the boundary constraint forces void.
#[derive(Debug, Clone)]
pub struct SeedPlan {
    pub seeds: Vec<Cell>,
    pub void_seed: Cell,
    pub slack: u32,
}

/// Sample a seed plan for `w` grains on a `t`x`t` grid.
pub fn sample_seeds<R: Rng>(
    t: usize,
    w: usize,
    slack_range: std::ops::RangeInclusive<u32>,
    rng: &mut R,
) -> Result<SeedPlan> {
    if t < 6 {
        return Err(Error::GridTooSmall(t, 6));
    }
    if w < 1 {
        return Err(Error::SeedPlacement { t, w });
    }
    // Interior band at distance >= 2 from the border.
    let lo = 3;
    let hi = t - 2;
    let band = hi - lo + 1;
    // Pigeonhole bound for Chebyshev separation 3.
    let max_seeds = band.div_ceil(3).pow(2);
    if w > max_seeds {
        return Err(Error::SeedPlacement { t, w });
    }
    let attempts = 1000;
    for _ in 0..attempts {
        let mut seeds: Vec<Cell> = Vec::with_capacity(w);
        let mut tries = 0;
        while seeds.len() < w && tries < 200 {
            let c = Cell::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
            if seeds.iter().all(|&s| s.dist_cheb(c) >= 3) {
                seeds.push(c);
            }
            tries += 1;
        }
        if seeds.len() == w {
            let slack = rng.gen_range(slack_range.clone());
            return Ok(SeedPlan {
                seeds,
                void_seed: Cell::new(1, 1),
                slack,
            });
        }
    }
    Err(Error::SeedPlacement { t, w })
}
