//! Procedural generation of geometrically valid random images and their
//! PDE labels.
//!
//! Images are grown, not solved for: seeds are placed like a generation
//! instance, then each grain fills its distance rings outward with a
//! randomized partial outer ring, skipping cells that would touch another
//! grain or the border. Growth is orders of magnitude faster than the
//! constraint pipeline and independent of the encoder it helps validate.
//! Labels come from the diffusion oracle; samples under the label floor
//! are discarded and regenerated, and generation fails loudly if the
//! rejection rate passes one half.

use crate::bnn::LabeledSample;
use crate::error::{Error, Result};
use crate::geometry::sample_seeds;
use crate::grid::{neighbor_cells, Cell, Image, GRAIN};
use crate::pde;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Smallest label kept in a dataset.
pub const LABEL_FLOOR: u8 = 40;

/// One generated sample plus the per-sample seed that reproduces it.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub sample: LabeledSample,
    pub seed: u64,
}

/// Manifest record, one JSON line per sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub t: usize,
    pub w: usize,
    pub d: u8,
    pub seed: u64,
}

/// Sidecar written next to each image file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub t: usize,
    pub w: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_pred: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_true: Option<u8>,
}

/// Grow one random image with `w` grains. The result passes
/// [`crate::grid::validate_geometry`] for grain count `w`.
pub fn gen_random_image<R: Rng>(t: usize, w: usize, rng: &mut R) -> Result<Image> {
    if w == 0 {
        return Ok(Image::new_void(t));
    }
    let attempts = 200;
    for _ in 0..attempts {
        if let Some(img) = try_grow(t, w, rng)? {
            let report = crate::grid::validate_geometry(&img, w, None, None);
            if report.all_ok(w) {
                return Ok(img);
            }
        }
    }
    Err(Error::RetriesExhausted {
        what: "random image growth",
        attempts,
    })
}

fn try_grow<R: Rng>(t: usize, w: usize, rng: &mut R) -> Result<Option<Image>> {
    let plan = sample_seeds(t, w, 1..=1, rng)?;
    let mut owner = vec![0u16; t * t]; // 0 = void, else grain index
    let max_radius = (t / 4).clamp(1, 5);
    for (k, &seed) in plan.seeds.iter().enumerate() {
        let grain = k as u16 + 1;
        let radius = rng.gen_range(1..=max_radius);
        owner[seed.index(t)] = grain;
        let rings = crate::geometry::build_rings(t, seed)?;
        for v in 1..=radius.min(rings.ring_count()) {
            let fill_all = v < radius;
            for &c in rings.ring(v) {
                if !fill_all && !rng.gen_bool(0.5) {
                    continue;
                }
                if c.on_border(t) || owner[c.index(t)] != 0 {
                    continue;
                }
                // Never touch a different grain side-on.
                let clash = neighbor_cells(c, t).any(|n| {
                    let o = owner[n.index(t)];
                    o != 0 && o != grain
                });
                if !clash {
                    owner[c.index(t)] = grain;
                }
            }
        }
    }
    let mut img = Image::new_void(t);
    for idx in 0..t * t {
        if owner[idx] != 0 {
            img.set(Cell::from_index(idx, t), GRAIN);
        }
    }
    Ok(Some(img))
}

/// Per-sample stream: independent of how many samples precede it.
fn sample_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut z = base_seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Build `n` labeled samples. Deterministic in `base_seed` regardless of
/// how rejected draws interleave.
pub fn build_dataset(n: usize, t: usize, w: usize, base_seed: u64) -> Result<Vec<GeneratedSample>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::with_capacity(n);
    let mut below_floor = 0usize;
    let mut raw = 0usize;
    let mut index = 0u64;
    while out.len() < n {
        let seed = index;
        let mut rng = sample_rng(base_seed, index);
        index += 1;
        let img = gen_random_image(t, w, &mut rng)?;
        let label = pde::dispersion_x(&img, pde::DEFAULT_TOL)?.d_int;
        raw += 1;
        if label < LABEL_FLOOR {
            below_floor += 1;
            if raw >= 100 && below_floor * 2 > raw {
                return Err(Error::SkewedLabels {
                    below: below_floor,
                    total: raw,
                });
            }
            continue;
        }
        out.push(GeneratedSample {
            sample: LabeledSample { image: img, label },
            seed,
        });
    }
    Ok(out)
}

/// Write samples as PBM + sidecar pairs plus a JSON-lines manifest;
/// returns the manifest path.
pub fn write_samples(dir: &Path, t: usize, w: usize, samples: &[GeneratedSample]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (k, gs) in samples.iter().enumerate() {
        let name = format!("sample_{k:05}.pbm");
        std::fs::write(dir.join(&name), gs.sample.image.to_pbm())?;
        let sidecar = Sidecar {
            t,
            w,
            seed: gs.seed,
            d_pred: None,
            d_true: Some(gs.sample.label),
        };
        std::fs::write(
            dir.join(format!("{name}.json")),
            serde_json::to_string(&sidecar)?,
        )?;
        let entry = ManifestEntry {
            path: name,
            t,
            w,
            d: gs.sample.label,
            seed: gs.seed,
        };
        manifest.push_str(&serde_json::to_string(&entry)?);
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, manifest)?;
    Ok(path)
}

/// Load a dataset back from its manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<LabeledSample>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line)?;
        let img = Image::from_pbm(&std::fs::read_to_string(dir.join(&entry.path))?)?;
        out.push(LabeledSample {
            image: img,
            label: entry.d,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}
