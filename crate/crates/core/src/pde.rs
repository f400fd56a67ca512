//! Ground-truth dispersion of a porous image along the x axis.
//!
//! The void phase of the image is treated as a unit-conductance resistor
//! network: side-adjacent void pixels are connected, grain faces and the
//! top/bottom boundary are no-flux, and a unit potential drop is applied
//! across x through virtual inlet (u = 1, left of column 1) and outlet
//! (u = 0, right of column t) rails attached to the void pixels of those
//! columns. The net inlet flux, normalized by the flux of the all-void
//! image of the same size, is the dispersion coefficient in [0, 1].

use crate::error::{Error, Result};
use crate::grid::{neighbor_cells, Cell, Image};

/// Default relative residual bound for the iterative solve.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Outcome of a dispersion solve.
#[derive(Debug, Clone, Copy)]
pub struct DispersionResult {
    /// Effective dispersion along x, in [0, 1]; 1 for the empty medium.
    pub d_real: f64,
    /// `round(100 * d_real)`, ties half-up, clamped to [0, 100].
    pub d_int: u8,
    /// Conjugate-gradient iterations spent.
    pub solver_iters: usize,
    /// Final relative residual.
    pub residual: f64,
}

/// Quantize a dispersion coefficient in [0, 1] to an integer label in
/// [0, 100], rounding ties half-up.
pub fn quantize(d_real: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&d_real) {
        return Err(Error::OutOfRange {
            what: "dispersion coefficient",
            value: d_real,
        });
    }
    Ok(((100.0 * d_real + 0.5).floor() as i64).clamp(0, 100) as u8)
}

/// Compute the dispersion coefficient of `img` along x.
///
/// A void phase with no left-right connected path yields `d_real = 0`
/// without error. Non-convergence of the iterative solve within the
/// iteration cap is an error.
pub fn dispersion_x(img: &Image, tol: f64) -> Result<DispersionResult> {
    if tol <= 0.0 {
        return Err(Error::OutOfRange {
            what: "solver tolerance",
            value: tol,
        });
    }
    let t = img.t();
    let system = VoidSystem::build(img);
    let zero = |iters| {
        Ok(DispersionResult {
            d_real: 0.0,
            d_int: 0,
            solver_iters: iters,
            residual: 0.0,
        })
    };
    let Some(system) = system else {
        return zero(0);
    };
    if !system.percolates {
        return zero(0);
    }

    let n = system.index.len();
    let mut b = vec![0.0; n];
    for &k in &system.inlet {
        b[k] = 1.0;
    }
    let cap = 50 * t * t;
    let (u, iters, residual) = conjugate_gradient(&system, &b, tol, cap)?;

    let flux: f64 = system.inlet.iter().map(|&k| 1.0 - u[k]).sum();
    let empty_flux = t as f64 / (t as f64 + 1.0);
    // Exact value lies in [0, 1]; clip solver noise at the edges.
    let d_real = (flux / empty_flux).clamp(0.0, 1.0);
    Ok(DispersionResult {
        d_real,
        d_int: quantize(d_real)?,
        solver_iters: iters,
        residual,
    })
}

/// Sparse symmetric system over the void pixels reachable from the inlet.
pub(crate) struct VoidSystem {
    /// Unknown index per reachable void pixel.
    pub index: Vec<usize>,
    /// Adjacent unknown pairs (i < j), one entry per conducting edge.
    pub edges: Vec<(usize, usize)>,
    /// Diagonal: conducting degree including virtual rails.
    pub diag: Vec<f64>,
    /// Unknowns attached to the inlet rail.
    pub inlet: Vec<usize>,
    /// True when some reachable void pixel touches the outlet rail.
    pub percolates: bool,
}

impl VoidSystem {
    /// Returns None when column 1 holds no void pixel.
    pub(crate) fn build(img: &Image) -> Option<VoidSystem> {
        let t = img.t();
        let mut order: Vec<Cell> = Vec::new();
        let mut visited = vec![false; t * t];
        // Flood from the inlet-attached void pixels of column 1.
        let mut stack: Vec<Cell> = (1..=t)
            .map(|i| Cell::new(i, 1))
            .filter(|&c| !img.is_grain(c))
            .collect();
        if stack.is_empty() {
            return None;
        }
        for &c in &stack {
            visited[c.index(t)] = true;
        }
        while let Some(c) = stack.pop() {
            order.push(c);
            for nb in neighbor_cells(c, t) {
                if !img.is_grain(nb) && !visited[nb.index(t)] {
                    visited[nb.index(t)] = true;
                    stack.push(nb);
                }
            }
        }
        let n = order.len();
        let mut index = vec![usize::MAX; t * t];
        for (k, c) in order.iter().enumerate() {
            index[c.index(t)] = k;
        }
        let mut edges = Vec::new();
        let mut diag = vec![0.0; n];
        let mut inlet = Vec::new();
        let mut percolates = false;
        for (k, &c) in order.iter().enumerate() {
            if c.j == 1 {
                diag[k] += 1.0;
                inlet.push(k);
            }
            if c.j == t {
                diag[k] += 1.0;
                percolates = true;
            }
            for nb in neighbor_cells(c, t) {
                let nk = index[nb.index(t)];
                if nk != usize::MAX {
                    diag[k] += 1.0;
                    if nk > k {
                        edges.push((k, nk));
                    }
                }
            }
        }
        Some(VoidSystem {
            index,
            edges,
            diag,
            inlet,
            percolates,
        })
    }

    pub(crate) fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (o, (&d, &xi)) in out.iter_mut().zip(self.diag.iter().zip(x.iter())) {
            *o = d * xi;
        }
        for &(a, b) in &self.edges {
            out[a] -= x[b];
            out[b] -= x[a];
        }
    }
}

fn conjugate_gradient(
    sys: &VoidSystem,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let norm_b = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for iter in 0..max_iter {
        if rr.sqrt() <= tol * norm_b {
            return Ok((x, iter, rr.sqrt() / norm_b));
        }
        sys.matvec(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    let residual = rr.sqrt() / norm_b;
    if residual <= tol {
        Ok((x, max_iter, residual))
    } else {
        Err(Error::PdeNoConvergence {
            iters: max_iter,
            residual,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GRAIN;

    #[test]
    fn empty_medium_is_unity() {
        for t in [2, 5, 8] {
            let r = dispersion_x(&Image::new_void(t), DEFAULT_TOL).unwrap();
            assert!((r.d_real - 1.0).abs() < 1e-9, "t={t}: {}", r.d_real);
            assert_eq!(r.d_int, 100);
        }
    }

    #[test]
    fn full_wall_blocks_flow() {
        let mut img = Image::new_void(8);
        for i in 1..=8 {
            img.set(Cell::new(i, 4), GRAIN);
        }
        let r = dispersion_x(&img, DEFAULT_TOL).unwrap();
        assert_eq!(r.d_real, 0.0);
        assert_eq!(r.d_int, 0);
    }

    #[test]
    fn all_grain_has_no_inlet() {
        let img = Image::from_pixels(3, vec![GRAIN; 9]).unwrap();
        let r = dispersion_x(&img, DEFAULT_TOL).unwrap();
        assert_eq!(r.d_real, 0.0);
    }

    #[test]
    fn obstacle_reduces_dispersion() {
        let mut img = Image::new_void(8);
        for i in 3..=6 {
            for j in 3..=6 {
                img.set(Cell::new(i, j), GRAIN);
            }
        }
        let r = dispersion_x(&img, DEFAULT_TOL).unwrap();
        assert!(r.d_real > 0.0 && r.d_real < 1.0, "{}", r.d_real);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(1.0).unwrap(), 100);
        assert_eq!(quantize(0.4).unwrap(), 40);
        assert_eq!(quantize(0.455).unwrap(), 46);
        assert_eq!(quantize(0.0).unwrap(), 0);
        assert!(quantize(1.5).is_err());
        assert!(quantize(-0.1).is_err());
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(dispersion_x(&Image::new_void(4), 0.0).is_err());
        assert!(dispersion_x(&Image::new_void(4), -1.0).is_err());
    }
}
