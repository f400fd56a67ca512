//! Shared test oracles, independent of the library's solver internals.

use porogen::grid::{Cell, Image};

/// Dense direct solve of the void-phase diffusion system: brute-force
/// assembly over the inlet-reachable void pixels and Gaussian elimination
/// with partial pivoting. Only `Image` accessors are used, so this stays
/// an independent check on the library's iterative path.
pub fn dense_dispersion(img: &Image) -> f64 {
    let t = img.t();
    // Reachable void pixels from the inlet column, by a fresh BFS.
    let mut visited = vec![false; t * t];
    let mut order: Vec<Cell> = Vec::new();
    let mut queue: std::collections::VecDeque<Cell> = (1..=t)
        .map(|i| Cell::new(i, 1))
        .filter(|&c| !img.is_grain(c))
        .collect();
    for &c in &queue {
        visited[c.index(t)] = true;
    }
    while let Some(c) = queue.pop_front() {
        order.push(c);
        let neigh = [
            (c.i.wrapping_sub(1), c.j),
            (c.i + 1, c.j),
            (c.i, c.j.wrapping_sub(1)),
            (c.i, c.j + 1),
        ];
        for (i, j) in neigh {
            if i >= 1 && i <= t && j >= 1 && j <= t {
                let n = Cell::new(i, j);
                if !img.is_grain(n) && !visited[n.index(t)] {
                    visited[n.index(t)] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    let n = order.len();
    if n == 0 {
        return 0.0;
    }
    let mut index = vec![usize::MAX; t * t];
    for (k, c) in order.iter().enumerate() {
        index[c.index(t)] = k;
    }
    // Assemble A u = b densely.
    let mut a = vec![vec![0.0f64; n]; n];
    let mut b = vec![0.0f64; n];
    for (k, &c) in order.iter().enumerate() {
        let mut degree = 0.0;
        if c.j == 1 {
            degree += 1.0;
            b[k] += 1.0;
        }
        if c.j == t {
            degree += 1.0;
        }
        let neigh = [
            (c.i.wrapping_sub(1), c.j),
            (c.i + 1, c.j),
            (c.i, c.j.wrapping_sub(1)),
            (c.i, c.j + 1),
        ];
        for (i, j) in neigh {
            if i >= 1 && i <= t && j >= 1 && j <= t {
                let q = index[Cell::new(i, j).index(t)];
                if q != usize::MAX {
                    degree += 1.0;
                    a[k][q] -= 1.0;
                }
            }
        }
        a[k][k] += degree;
    }
    let u = gaussian_solve(&mut a, &mut b);
    let flux: f64 = order
        .iter()
        .enumerate()
        .filter(|(_, c)| c.j == 1)
        .map(|(k, _)| 1.0 - u[k])
        .sum();
    let empty = t as f64 / (t as f64 + 1.0);
    flux / empty
}

fn gaussian_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "singular dense system");
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

/// Random interior-pixel image for property tests.
pub fn random_image(t: usize, density: f64, rng: &mut impl rand::Rng) -> Image {
    let mut img = Image::new_void(t);
    for i in 2..t {
        for j in 2..t {
            if rng.gen_bool(density) {
                img.set(Cell::new(i, j), porogen::grid::GRAIN);
            }
        }
    }
    img
}
