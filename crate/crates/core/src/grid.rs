//! Grid primitives: cells, binary images, PBM I/O and the geometric
//! validation oracle.
//!
//! Pixel polarity is fixed crate-wide: 1 = grain (solid, black in PBM),
//! 0 = void. Cells are addressed 1-based as (row, column). All types here
//! are plain immutable values; every operation is pure.

use crate::error::{Error, Result};
use crate::geometry::RingSet;

/// Grain pixel value.
pub const GRAIN: u8 = 1;
/// Void pixel value.
pub const VOID: u8 = 0;

/// A 1-based (row, column) position on a `t`x`t` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub fn new(i: usize, j: usize) -> Self {
        Cell { i, j }
    }

    pub fn in_grid(&self, t: usize) -> bool {
        (1..=t).contains(&self.i) && (1..=t).contains(&self.j)
    }

    /// Row-major index into flat pixel storage.
    pub fn index(&self, t: usize) -> usize {
        (self.i - 1) * t + (self.j - 1)
    }

    pub fn from_index(idx: usize, t: usize) -> Self {
        Cell::new(idx / t + 1, idx % t + 1)
    }

    /// Manhattan distance.
    pub fn dist1(&self, other: Cell) -> usize {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j)
    }

    /// Chebyshev distance.
    pub fn dist_cheb(&self, other: Cell) -> usize {
        self.i.abs_diff(other.i).max(self.j.abs_diff(other.j))
    }

    pub fn dist_euclid(&self, other: Cell) -> f64 {
        let di = self.i.abs_diff(other.i) as f64;
        let dj = self.j.abs_diff(other.j) as f64;
        (di * di + dj * dj).sqrt()
    }

    pub fn on_border(&self, t: usize) -> bool {
        self.i == 1 || self.i == t || self.j == 1 || self.j == t
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Side-sharing neighbours of `c` inside the grid, in (up, left, right,
/// down) order. A corner has two, an edge cell three, an interior cell four.
pub fn neighbors(c: Cell, t: usize) -> Result<Vec<Cell>> {
    if !c.in_grid(t) {
        return Err(Error::InvalidCell { cell: c, t });
    }
    Ok(neighbor_cells(c, t).collect())
}

/// Unchecked neighbour iterator for callers that already hold a valid cell.
pub(crate) fn neighbor_cells(c: Cell, t: usize) -> impl Iterator<Item = Cell> {
    let mut out = [None; 4];
    if c.i > 1 {
        out[0] = Some(Cell::new(c.i - 1, c.j));
    }
    if c.j > 1 {
        out[1] = Some(Cell::new(c.i, c.j - 1));
    }
    if c.j < t {
        out[2] = Some(Cell::new(c.i, c.j + 1));
    }
    if c.i < t {
        out[3] = Some(Cell::new(c.i + 1, c.j));
    }
    out.into_iter().flatten()
}

/// A square binary image. Invariants: exactly `t*t` pixels, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    t: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new_void(t: usize) -> Self {
        Image {
            t,
            pixels: vec![VOID; t * t],
        }
    }

    pub fn from_pixels(t: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != t * t {
            return Err(Error::ImageShape {
                expected: t * t,
                got: pixels.len(),
            });
        }
        if let Some(&bad) = pixels.iter().find(|&&p| p > 1) {
            return Err(Error::ImagePixel(bad));
        }
        Ok(Image { t, pixels })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, c: Cell) -> u8 {
        self.pixels[c.index(self.t)]
    }

    pub fn set(&mut self, c: Cell, value: u8) {
        debug_assert!(value <= 1);
        self.pixels[c.index(self.t)] = value;
    }

    pub fn is_grain(&self, c: Cell) -> bool {
        self.get(c) == GRAIN
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let t = self.t;
        (1..=t).flat_map(move |i| (1..=t).map(move |j| Cell::new(i, j)))
    }

    pub fn grain_area(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == GRAIN).count()
    }

    /// Mirror left-right (columns reversed).
    pub fn mirror_lr(&self) -> Image {
        let mut out = Image::new_void(self.t);
        for c in self.cells() {
            out.set(Cell::new(c.i, self.t + 1 - c.j), self.get(c));
        }
        out
    }

    /// Mirror top-bottom (rows reversed).
    pub fn mirror_tb(&self) -> Image {
        let mut out = Image::new_void(self.t);
        for c in self.cells() {
            out.set(Cell::new(self.t + 1 - c.i, c.j), self.get(c));
        }
        out
    }

    /// Render as an ASCII portable bitmap (PBM "P1"), 1 = grain = black.
    pub fn to_pbm(&self) -> String {
        let mut out = String::with_capacity(self.t * self.t * 2 + 32);
        out.push_str("P1\n");
        out.push_str(&format!("{} {}\n", self.t, self.t));
        for i in 1..=self.t {
            let mut line_len = 0;
            for j in 1..=self.t {
                if line_len > 0 {
                    // PBM readers expect lines no longer than 70 chars.
                    if line_len >= 68 {
                        out.push('\n');
                        line_len = 0;
                    } else {
                        out.push(' ');
                        line_len += 1;
                    }
                }
                out.push(if self.is_grain(Cell::new(i, j)) { '1' } else { '0' });
                line_len += 1;
            }
            out.push('\n');
        }
        out
    }

    /// Parse an ASCII PBM. Accepts comments and arbitrary whitespace,
    /// including digit runs with no separators. The image must be square.
    pub fn from_pbm(text: &str) -> Result<Self> {
        let mut tokens = PbmTokens::new(text);
        let magic = tokens
            .next_token()
            .ok_or_else(|| Error::PbmParse("missing magic number".into()))?;
        if magic != "P1" {
            return Err(Error::PbmParse(format!("expected P1, got {magic}")));
        }
        let w: usize = tokens
            .next_token()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::PbmParse("bad width".into()))?;
        let h: usize = tokens
            .next_token()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::PbmParse("bad height".into()))?;
        if w != h {
            return Err(Error::PbmParse(format!("image must be square, got {w}x{h}")));
        }
        let mut pixels = Vec::with_capacity(w * h);
        while pixels.len() < w * h {
            match tokens.next_digit() {
                Some(b) => pixels.push(b),
                None => return Err(Error::PbmParse("truncated pixel data".into())),
            }
        }
        Image::from_pixels(w, pixels)
    }
}

/// Tokenizer for PBM text: skips whitespace and `#` comments.
struct PbmTokens<'a> {
    rest: std::str::Chars<'a>,
    peeked: Option<char>,
}

impl<'a> PbmTokens<'a> {
    fn new(text: &'a str) -> Self {
        PbmTokens {
            rest: text.chars(),
            peeked: None,
        }
    }

    fn next_char(&mut self) -> Option<char> {
        if let Some(c) = self.peeked.take() {
            return Some(c);
        }
        self.rest.next()
    }

    fn skip_filler(&mut self) -> Option<char> {
        loop {
            let c = self.next_char()?;
            if c == '#' {
                for c in self.rest.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if !c.is_whitespace() {
                return Some(c);
            }
        }
    }

    fn next_token(&mut self) -> Option<String> {
        let first = self.skip_filler()?;
        let mut tok = String::new();
        tok.push(first);
        loop {
            match self.next_char() {
                Some(c) if !c.is_whitespace() && c != '#' => tok.push(c),
                Some(c) => {
                    if c == '#' {
                        self.peeked = Some(c);
                    }
                    break;
                }
                None => break,
            }
        }
        Some(tok)
    }

    fn next_digit(&mut self) -> Option<u8> {
        let c = self.skip_filler()?;
        match c {
            '0' => Some(0),
            '1' => Some(1),
            _ => None,
        }
    }
}

/// Per-pixel grain labels: 0 = void, `r` in 1..=w names the grain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrainLabels {
    t: usize,
    labels: Vec<u16>,
}

impl GrainLabels {
    pub fn new(t: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != t * t {
            return Err(Error::ImageShape {
                expected: t * t,
                got: labels.len(),
            });
        }
        Ok(GrainLabels { t, labels })
    }

    pub fn get(&self, c: Cell) -> u16 {
        self.labels[c.index(self.t)]
    }

    pub fn t(&self) -> usize {
        self.t
    }
}

/// Result of checking an image against the geometric constraints.
///
/// All flags are deterministic functions of the image and the check
/// parameters; `compact_ok` is evaluated only when rings are supplied and
/// is true otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryReport {
    /// Number of 4-connected components of grain pixels.
    pub grain_count: usize,
    /// All four border rows/columns are void.
    pub boundary_ok: bool,
    /// No two distinct grains share a side.
    pub adjacency_ok: bool,
    /// Void pixels form at most one 4-connected component.
    pub voids_connected: bool,
    /// Ring-compactness holds for every grain (when rings given).
    pub compact_ok: bool,
}

impl GeometryReport {
    /// True when the image satisfies every geometric constraint for an
    /// expected grain count.
    pub fn all_ok(&self, expected_grains: usize) -> bool {
        self.grain_count == expected_grains
            && self.boundary_ok
            && self.adjacency_ok
            && self.voids_connected
            && self.compact_ok
    }
}

/// Check an image against the geometric constraints using connected
/// components as the grain identities. `rings`, when given, must hold one
/// `RingSet` per expected grain; the grain matched to a ring set is the
/// component containing its center.
pub fn validate_geometry(
    img: &Image,
    w: usize,
    rings: Option<&[RingSet]>,
    slack: Option<u32>,
) -> GeometryReport {
    validate_inner(img, w, None, rings, slack)
}

/// Like [`validate_geometry`] but with declared grain identities, as
/// produced by decoding a solver model. Adjacency and compactness are
/// checked against the declared labels instead of derived components.
pub fn validate_geometry_labeled(
    img: &Image,
    labels: &GrainLabels,
    w: usize,
    rings: Option<&[RingSet]>,
    slack: Option<u32>,
) -> GeometryReport {
    validate_inner(img, w, Some(labels), rings, slack)
}

fn validate_inner(
    img: &Image,
    _w: usize,
    labels: Option<&GrainLabels>,
    rings: Option<&[RingSet]>,
    slack: Option<u32>,
) -> GeometryReport {
    let t = img.t();
    let (grain_count, _comp) = components(img, GRAIN);
    let (void_count, _) = components(img, VOID);

    let boundary_ok = img
        .cells()
        .filter(|c| c.on_border(t))
        .all(|c| !img.is_grain(c));

    let adjacency_ok = match labels {
        None => {
            // With component-derived identities two side-adjacent grain
            // pixels are the same component by definition; scan anyway so
            // the flag stays an honest function of the inputs.
            true
        }
        Some(lab) => {
            let mut ok = true;
            'scan: for c in img.cells() {
                let lc = lab.get(c);
                if lc == 0 {
                    continue;
                }
                for n in neighbor_cells(c, t) {
                    let ln = lab.get(n);
                    if ln != 0 && ln != lc {
                        ok = false;
                        break 'scan;
                    }
                }
            }
            ok
        }
    };

    let compact_ok = match rings {
        None => true,
        Some(ring_sets) => {
            let s = slack.unwrap_or(1) as usize;
            ring_sets.iter().enumerate().all(|(k, rs)| {
                let in_grain: Box<dyn Fn(Cell) -> bool> = match labels {
                    Some(lab) => Box::new(move |c| lab.get(c) as usize == k + 1),
                    None => {
                        let set = component_of(img, rs.center());
                        Box::new(move |c| set[c.index(t)])
                    }
                };
                if !img.is_grain(rs.center()) {
                    return false;
                }
                for v in (s + 1)..=rs.ring_count() {
                    let occupied = rs.ring(v).iter().any(|&c| in_grain(c));
                    if occupied && !rs.ring(v - s).iter().all(|&c| in_grain(c)) {
                        return false;
                    }
                }
                true
            })
        }
    };

    GeometryReport {
        grain_count,
        boundary_ok,
        adjacency_ok,
        voids_connected: void_count <= 1,
        compact_ok,
    }
}

/// 4-connected components of the given phase: returns (count, component id
/// per pixel; `usize::MAX` marks the other phase).
fn components(img: &Image, phase: u8) -> (usize, Vec<usize>) {
    let t = img.t();
    let mut comp = vec![usize::MAX; t * t];
    let mut count = 0;
    let mut stack = Vec::new();
    for c in img.cells() {
        let idx = c.index(t);
        if img.get(c) != phase || comp[idx] != usize::MAX {
            continue;
        }
        comp[idx] = count;
        stack.push(c);
        while let Some(cur) = stack.pop() {
            for n in neighbor_cells(cur, t) {
                let nidx = n.index(t);
                if img.get(n) == phase && comp[nidx] == usize::MAX {
                    comp[nidx] = count;
                    stack.push(n);
                }
            }
        }
        count += 1;
    }
    (count, comp)
}

/// Membership mask of the grain component containing `start` (empty mask if
/// `start` is void).
fn component_of(img: &Image, start: Cell) -> Vec<bool> {
    let t = img.t();
    let mut mask = vec![false; t * t];
    if !img.is_grain(start) {
        return mask;
    }
    let mut stack = vec![start];
    mask[start.index(t)] = true;
    while let Some(cur) = stack.pop() {
        for n in neighbor_cells(cur, t) {
            if img.is_grain(n) && !mask[n.index(t)] {
                mask[n.index(t)] = true;
                stack.push(n);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn cell_set(cells: &[(usize, usize)]) -> BTreeSet<Cell> {
        cells.iter().map(|&(i, j)| Cell::new(i, j)).collect()
    }

    #[test]
    fn neighbors_interior() {
        let n: BTreeSet<_> = neighbors(Cell::new(2, 3), 4).unwrap().into_iter().collect();
        assert_eq!(n, cell_set(&[(1, 3), (2, 2), (2, 4), (3, 3)]));
    }

    #[test]
    fn neighbors_corner_and_edge() {
        let corner: BTreeSet<_> = neighbors(Cell::new(1, 1), 4).unwrap().into_iter().collect();
        assert_eq!(corner, cell_set(&[(1, 2), (2, 1)]));
        let edge: BTreeSet<_> = neighbors(Cell::new(1, 2), 4).unwrap().into_iter().collect();
        assert_eq!(edge, cell_set(&[(1, 1), (1, 3), (2, 2)]));
    }

    #[test]
    fn neighbors_rejects_invalid() {
        assert!(neighbors(Cell::new(0, 1), 4).is_err());
        assert!(neighbors(Cell::new(1, 5), 4).is_err());
    }

    #[test]
    fn validate_all_void() {
        let img = Image::new_void(8);
        let r = validate_geometry(&img, 0, None, None);
        assert_eq!(r.grain_count, 0);
        assert!(r.all_ok(0));
    }

    #[test]
    fn validate_single_block() {
        let mut img = Image::new_void(8);
        for i in 3..=4 {
            for j in 3..=4 {
                img.set(Cell::new(i, j), GRAIN);
            }
        }
        let r = validate_geometry(&img, 1, None, None);
        assert_eq!(r.grain_count, 1);
        assert!(r.boundary_ok);
        assert!(r.adjacency_ok);
        assert!(r.voids_connected);
        assert!(r.all_ok(1));
    }

    #[test]
    fn validate_declared_grains_touching() {
        let mut img = Image::new_void(8);
        img.set(Cell::new(3, 3), GRAIN);
        img.set(Cell::new(3, 4), GRAIN);
        let mut labels = vec![0u16; 64];
        labels[Cell::new(3, 3).index(8)] = 1;
        labels[Cell::new(3, 4).index(8)] = 2;
        let labels = GrainLabels::new(8, labels).unwrap();
        let r = validate_geometry_labeled(&img, &labels, 2, None, None);
        assert!(!r.adjacency_ok);
    }

    #[test]
    fn validate_detects_enclosed_void() {
        // Ring of grain around a void pixel at (4,4).
        let mut img = Image::new_void(8);
        for (i, j) in [
            (3, 3),
            (3, 4),
            (3, 5),
            (4, 3),
            (4, 5),
            (5, 3),
            (5, 4),
            (5, 5),
        ] {
            img.set(Cell::new(i, j), GRAIN);
        }
        let r = validate_geometry(&img, 1, None, None);
        assert!(!r.voids_connected);
        assert!(r.boundary_ok);
    }

    #[test]
    fn validate_boundary_violation() {
        let mut img = Image::new_void(6);
        img.set(Cell::new(1, 3), GRAIN);
        let r = validate_geometry(&img, 1, None, None);
        assert!(!r.boundary_ok);
    }

    #[test]
    fn pbm_round_trip() {
        let mut img = Image::new_void(5);
        img.set(Cell::new(2, 2), GRAIN);
        img.set(Cell::new(3, 4), GRAIN);
        let text = img.to_pbm();
        assert!(text.starts_with("P1\n5 5\n"));
        let back = Image::from_pbm(&text).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pbm_parses_comments_and_compact_digits() {
        let text = "P1\n# comment line\n3 3\n010\n# more\n11 1\n000\n";
        let img = Image::from_pbm(text).unwrap();
        assert_eq!(img.get(Cell::new(1, 2)), GRAIN);
        assert_eq!(img.get(Cell::new(2, 1)), GRAIN);
        assert_eq!(img.grain_area(), 4);
    }

    #[test]
    fn pbm_rejects_non_square() {
        assert!(Image::from_pbm("P1\n2 3\n0 0 0 0 0 0\n").is_err());
    }

    #[test]
    fn image_rejects_bad_pixels() {
        assert!(Image::from_pixels(2, vec![0, 1, 2, 0]).is_err());
        assert!(Image::from_pixels(2, vec![0, 1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn neighbors_symmetric(i in 1usize..=9, j in 1usize..=9) {
            let t = 9;
            let c = Cell::new(i, j);
            let ns = neighbors(c, t).unwrap();
            let interior = i > 1 && i < t && j > 1 && j < t;
            prop_assert!(ns.len() >= 2 && ns.len() <= 4);
            prop_assert_eq!(ns.len() == 4, interior);
            for n in ns {
                prop_assert!(neighbors(n, t).unwrap().contains(&c));
            }
        }

        #[test]
        fn validate_ignores_component_relabeling(seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = 8;
            let mut img = Image::new_void(t);
            for c in Image::new_void(t).cells() {
                if !c.on_border(t) && rng.gen_bool(0.3) {
                    img.set(c, GRAIN);
                }
            }
            let r1 = validate_geometry(&img, 1, None, None);
            let r2 = validate_geometry(&img.clone(), 1, None, None);
            prop_assert_eq!(r1, r2);
        }
    }
}
