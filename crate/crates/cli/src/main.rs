//! Command-line pipeline: dataset generation, surrogate training,
//! constrained image generation and PDE verification.
//!
//! Exit codes: 0 ok, 2 usage error, 3 no instance satisfiable,
//! 4 every instance timed out, 5 internal verifier failure.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use porogen::bnn::{self, BnnConfig, IntBnnModel};
use porogen::dataset::{self, Sidecar};
use porogen::encode::{encode_instance, InstancePlan, PbFormula};
use porogen::geometry::DagMode;
use porogen::grid::{validate_geometry_labeled, Image};
use porogen::pde;
use porogen::solve::{self, Backend, SolveStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(name = "porogen", version, about = "Constrained porous-medium image generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset of random images.
    Dataset {
        #[arg(long)]
        count: usize,
        /// Image side length.
        #[arg(long)]
        size: usize,
        #[arg(long)]
        grains: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the binarized surrogate on a dataset directory.
    Train {
        /// Dataset directory (or manifest path).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 120)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Report a model's mean absolute error on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Generate constrained images by encoding and solving.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grains: usize,
        /// Dispersion interval lower bound (inclusive).
        #[arg(long)]
        lo: i64,
        /// Dispersion interval upper bound (inclusive).
        #[arg(long)]
        hi: i64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-instance timeout in seconds.
        #[arg(long, default_value_t = 600)]
        timeout: u64,
        /// `embedded`, or `external` (command from POROGEN_PB_SOLVER).
        #[arg(long, default_value = "embedded")]
        backend: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the diffusion oracle on an image file.
    Verify {
        #[arg(long)]
        image: PathBuf,
    },
    /// Export one instance as an OPB file without solving.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        grains: usize,
        #[arg(long)]
        lo: i64,
        #[arg(long)]
        hi: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        opb_out: PathBuf,
    },
}

#[derive(Serialize)]
struct InstanceLog<'a> {
    instance: usize,
    interval: [i64; 2],
    status: &'a str,
    wall_ms: u128,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_pred: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Serialize)]
struct Tally {
    interval: [i64; 2],
    sat: usize,
    unsat: usize,
    timeout: usize,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            1
        }
    };
    std::process::exit(code);
}

fn load_model(path: &Path) -> anyhow::Result<IntBnnModel> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model {}", path.display()))?;
    Ok(IntBnnModel::from_text(&text)?)
}

fn load_dataset(path: &Path) -> anyhow::Result<Vec<bnn::LabeledSample>> {
    let manifest = if path.is_dir() {
        path.join("manifest.jsonl")
    } else {
        path.to_path_buf()
    };
    Ok(dataset::read_manifest(&manifest)?)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Dataset {
            count,
            size,
            grains,
            seed,
            out,
        } => {
            let samples = dataset::build_dataset(count, size, grains, seed)?;
            let manifest = dataset::write_samples(&out, size, grains, &samples)?;
            let mut hist = std::collections::BTreeMap::new();
            for s in &samples {
                *hist.entry((s.sample.label / 10) * 10).or_insert(0usize) += 1;
            }
            println!(
                "{}",
                serde_json::json!({
                    "samples": samples.len(),
                    "manifest": manifest.display().to_string(),
                    "label_decades": hist,
                })
            );
            Ok(0)
        }
        Command::Train {
            dataset: ds,
            blocks,
            width,
            epochs,
            lr,
            seed,
            out_model,
        } => {
            let data = load_dataset(&ds)?;
            let cfg = BnnConfig {
                blocks,
                width,
                epochs,
                learning_rate: lr,
                batch_size: 32,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = bnn::train_logged(&data, &cfg, &mut rng, |epoch, mae| {
                if epoch % 10 == 0 || epoch + 1 == epochs {
                    eprintln!("{}", serde_json::json!({ "epoch": epoch, "train_mae": mae }));
                }
            })?;
            let folded = bnn::fold_thresholds(&model)?;
            std::fs::write(&out_model, folded.to_text())?;
            let mae = bnn::eval_mae(&folded, &data)?;
            println!(
                "{}",
                serde_json::json!({
                    "model": out_model.display().to_string(),
                    "train_mae": mae,
                })
            );
            Ok(0)
        }
        Command::Eval { model, dataset: ds } => {
            let m = load_model(&model)?;
            let data = load_dataset(&ds)?;
            let mae = bnn::eval_mae(&m, &data)?;
            println!(
                "{}",
                serde_json::json!({ "samples": data.len(), "mae": mae })
            );
            Ok(0)
        }
        Command::Generate {
            model,
            grains,
            lo,
            hi,
            count,
            seed,
            timeout,
            backend,
            out,
        } => {
            let backend = match parse_backend(&backend) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
                    return Ok(2);
                }
            };
            let m = load_model(&model)?;
            std::fs::create_dir_all(&out)?;
            let mut tally = Tally {
                interval: [lo, hi],
                sat: 0,
                unsat: 0,
                timeout: 0,
            };
            let mut verifier_failure = false;
            for k in 0..count {
                let inst_seed = seed.wrapping_add(k as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(inst_seed);
                let plan = InstancePlan::sample(
                    m.t(),
                    grains,
                    (lo, hi),
                    1..=3,
                    DagMode::Manhattan,
                    &mut rng,
                )?;
                let f = encode_instance(&m, &plan)?;
                let outcome =
                    match solve::solve(&f, inst_seed, Duration::from_secs(timeout), &backend) {
                        Ok(o) => o,
                        Err(porogen::Error::VerifierRejected(msg)) => {
                            eprintln!("{}", serde_json::json!({ "error": msg }));
                            verifier_failure = true;
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };
                let (status, d_pred, path) = match outcome.status {
                    SolveStatus::Sat => {
                        tally.sat += 1;
                        let asg = outcome.assignment.as_ref().expect("sat has assignment");
                        let (img, labels) = solve::decode_image(&f, asg)?;
                        let report = validate_geometry_labeled(
                            &img,
                            &labels,
                            grains,
                            Some(&plan.rings),
                            Some(plan.slack),
                        );
                        if !report.all_ok(grains) {
                            eprintln!(
                                "{}",
                                serde_json::json!({ "error": format!("geometry check failed: {report:?}") })
                            );
                            verifier_failure = true;
                            continue;
                        }
                        let d_pred = f.output_value(asg).expect("instance has output");
                        let name = format!("gen_{lo}_{hi}_{k:04}.pbm");
                        std::fs::write(out.join(&name), img.to_pbm())?;
                        let sidecar = Sidecar {
                            t: m.t(),
                            w: grains,
                            seed: inst_seed,
                            d_pred: Some(d_pred),
                            d_true: None,
                        };
                        std::fs::write(
                            out.join(format!("{name}.json")),
                            serde_json::to_string(&sidecar)?,
                        )?;
                        ("sat", Some(d_pred), Some(name))
                    }
                    SolveStatus::Unsat => {
                        tally.unsat += 1;
                        ("unsat", None, None)
                    }
                    SolveStatus::Timeout => {
                        tally.timeout += 1;
                        ("timeout", None, None)
                    }
                };
                println!(
                    "{}",
                    serde_json::to_string(&InstanceLog {
                        instance: k,
                        interval: [lo, hi],
                        status,
                        wall_ms: outcome.wall.as_millis(),
                        seed: inst_seed,
                        d_pred,
                        path,
                    })?
                );
            }
            println!("{}", serde_json::json!({ "tally": tally }));
            if verifier_failure {
                return Ok(5);
            }
            if tally.sat == 0 {
                return Ok(if tally.timeout > 0 { 4 } else { 3 });
            }
            Ok(0)
        }
        Command::Verify { image } => {
            let img = Image::from_pbm(&std::fs::read_to_string(&image)?)?;
            let result = pde::dispersion_x(&img, pde::DEFAULT_TOL)?;
            let sidecar_path = PathBuf::from(format!("{}.json", image.display()));
            let mut line = serde_json::json!({
                "d_real": result.d_real,
                "d_int": result.d_int,
                "solver_iters": result.solver_iters,
            });
            if let Ok(text) = std::fs::read_to_string(&sidecar_path) {
                if let Ok(sidecar) = serde_json::from_str::<Sidecar>(&text) {
                    if let Some(d_pred) = sidecar.d_pred {
                        line["d_pred"] = d_pred.into();
                        line["abs_error"] = (d_pred - result.d_int as i64).abs().into();
                    }
                }
            }
            println!("{line}");
            Ok(0)
        }
        Command::Encode {
            model,
            grains,
            lo,
            hi,
            seed,
            opb_out,
        } => {
            let m = load_model(&model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan =
                InstancePlan::sample(m.t(), grains, (lo, hi), 1..=3, DagMode::Manhattan, &mut rng)?;
            let f: PbFormula = encode_instance(&m, &plan)?;
            let doc = solve::to_opb(&f);
            std::fs::write(&opb_out, &doc.text)?;
            let map_path = PathBuf::from(format!("{}.vars.json", opb_out.display()));
            std::fs::write(&map_path, serde_json::to_string(&doc.var_names)?)?;
            println!(
                "{}",
                serde_json::json!({
                    "opb": opb_out.display().to_string(),
                    "vars": doc.var_names.len(),
                    "map": map_path.display().to_string(),
                })
            );
            Ok(0)
        }
    }
}

fn parse_backend(name: &str) -> anyhow::Result<Backend> {
    match name {
        "embedded" => Ok(Backend::Embedded),
        "external" => match Backend::external_from_env() {
            Some(b) => Ok(b),
            None => bail!(
                "backend 'external' needs the {} environment variable",
                solve::SOLVER_ENV
            ),
        },
        other => bail!("unknown backend '{other}' (use 'embedded' or 'external')"),
    }
}
