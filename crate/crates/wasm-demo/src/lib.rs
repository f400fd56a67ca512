//! Browser playground: generate constrained porous-medium images, edit
//! them pixel by pixel, and verify dispersion with the real diffusion
//! solve — all in wasm.
//!
//! Every entry point returns a JSON string so the page needs no generated
//! bindings beyond the functions themselves. The trained surrogate is
//! compiled into the binary. Generation runs the embedded backend under a
//! conflict budget (wall clocks are unavailable in plain wasm).

use porogen::bnn::IntBnnModel;
use porogen::dataset;
use porogen::encode::{encode_instance, InstancePlan};
use porogen::geometry::DagMode;
use porogen::grid::{validate_geometry, Image};
use porogen::pde;
use porogen::solve::{self, SolveStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::OnceLock;
use wasm_bindgen::prelude::*;

static MODEL_TEXT: &str = include_str!("../model/demo-model.bnn");

fn model() -> &'static IntBnnModel {
    static MODEL: OnceLock<IntBnnModel> = OnceLock::new();
    MODEL.get_or_init(|| IntBnnModel::from_text(MODEL_TEXT).expect("bundled model parses"))
}

#[derive(Serialize)]
struct GenerateReply {
    status: &'static str,
    t: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pixels: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_pred: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct VerifyReply {
    d_real: f64,
    d_int: u8,
    grain_count: usize,
    boundary_ok: bool,
    voids_connected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_model: Option<i64>,
}

/// Side length of the bundled model's images.
#[wasm_bindgen]
pub fn image_size() -> usize {
    model().t()
}

/// Generate an image with `grains` grains whose predicted dispersion lies
/// in `[lo, hi]`. `max_conflicts` bounds the search effort.
#[wasm_bindgen]
pub fn generate(grains: usize, lo: i64, hi: i64, seed: u64, max_conflicts: u64) -> String {
    let m = model();
    let reply = generate_inner(m, grains, lo, hi, seed, max_conflicts);
    serde_json::to_string(&reply).unwrap()
}

fn generate_inner(
    m: &IntBnnModel,
    grains: usize,
    lo: i64,
    hi: i64,
    seed: u64,
    max_conflicts: u64,
) -> GenerateReply {
    let fail = |msg: String| GenerateReply {
        status: "error",
        t: m.t(),
        pixels: None,
        d_pred: None,
        error: Some(msg),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = match InstancePlan::sample(m.t(), grains, (lo, hi), 1..=3, DagMode::Manhattan, &mut rng)
    {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let f = match encode_instance(m, &plan) {
        Ok(f) => f,
        Err(e) => return fail(e.to_string()),
    };
    let outcome = match solve::solve_conflict_budget(&f, seed, max_conflicts) {
        Ok(o) => o,
        Err(e) => return fail(e.to_string()),
    };
    match outcome.status {
        SolveStatus::Sat => {
            let asg = outcome.assignment.expect("sat carries assignment");
            match solve::decode_image(&f, &asg) {
                Ok((img, _)) => GenerateReply {
                    status: "sat",
                    t: m.t(),
                    pixels: Some(img.pixels().to_vec()),
                    d_pred: f.output_value(&asg),
                    error: None,
                },
                Err(e) => fail(e.to_string()),
            }
        }
        SolveStatus::Unsat => GenerateReply {
            status: "unsat",
            t: m.t(),
            pixels: None,
            d_pred: None,
            error: None,
        },
        SolveStatus::Timeout => GenerateReply {
            status: "budget-exhausted",
            t: m.t(),
            pixels: None,
            d_pred: None,
            error: None,
        },
    }
}

/// Run the diffusion oracle (and the bundled surrogate) on an arbitrary
/// image given as a flat 0/1 pixel array.
#[wasm_bindgen]
pub fn verify(t: usize, pixels: &[u8]) -> String {
    let reply = verify_inner(t, pixels);
    match reply {
        Ok(r) => serde_json::to_string(&r).unwrap(),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn verify_inner(t: usize, pixels: &[u8]) -> Result<VerifyReply, String> {
    let img = Image::from_pixels(t, pixels.to_vec()).map_err(|e| e.to_string())?;
    let result = pde::dispersion_x(&img, pde::DEFAULT_TOL).map_err(|e| e.to_string())?;
    let report = validate_geometry(&img, 0, None, None);
    let d_model = if t == model().t() {
        model().forward(&img).ok()
    } else {
        None
    };
    Ok(VerifyReply {
        d_real: result.d_real,
        d_int: result.d_int,
        grain_count: report.grain_count,
        boundary_ok: report.boundary_ok,
        voids_connected: report.voids_connected,
        d_model,
    })
}

/// Grow a random geometry-valid image (the dataset sampler), labeled by
/// the diffusion oracle.
#[wasm_bindgen]
pub fn random_image(grains: usize, seed: u64) -> String {
    let t = model().t();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dataset::gen_random_image(t, grains, &mut rng) {
        Ok(img) => {
            let d = pde::dispersion_x(&img, pde::DEFAULT_TOL)
                .map(|r| r.d_int)
                .unwrap_or(0);
            serde_json::json!({
                "t": t,
                "pixels": img.pixels().to_vec(),
                "d_true": d,
            })
            .to_string()
        }
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_model_parses_and_reports_size() {
        assert_eq!(image_size(), 16);
    }

    #[test]
    fn generate_round_trip() {
        let reply = generate(2, 60, 69, 5, 3_000_000);
        let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
        assert_eq!(v["status"], "sat", "{reply}");
        let pixels: Vec<u8> = v["pixels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap() as u8)
            .collect();
        assert_eq!(pixels.len(), 256);
        let d_pred = v["d_pred"].as_i64().unwrap();
        assert!((60..=69).contains(&d_pred));
        // Verify the generated pixels through the oracle entry point.
        let check: serde_json::Value = serde_json::from_str(&verify(16, &pixels)).unwrap();
        assert_eq!(check["grain_count"], 2);
        assert_eq!(check["boundary_ok"], true);
        assert!(check["d_int"].as_u64().unwrap() <= 100);
    }

    #[test]
    fn random_image_is_labeled() {
        let v: serde_json::Value = serde_json::from_str(&random_image(3, 9)).unwrap();
        assert_eq!(v["pixels"].as_array().unwrap().len(), 256);
        assert!(v["d_true"].as_u64().unwrap() <= 100);
    }

    #[test]
    fn verify_rejects_bad_shapes() {
        let v: serde_json::Value = serde_json::from_str(&verify(4, &[0, 1])).unwrap();
        assert!(v["error"].is_string());
    }
}
