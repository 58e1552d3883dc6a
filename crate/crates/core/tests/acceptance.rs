//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 4`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{gradient_errors, random_batch, random_dims, random_instance};
use hs_mimo::cli::{run_validation, ValidationOptions, EXPECTATION_TOLERANCE, IDENTITY_TOLERANCE};
use hs_mimo::detectors::{
    brute_force_ml_detect, hs_detect, ml_objective, ths_detect, ths_step, Detector, DetectorSpec, HsParams,
    ThsParams, TpgParams,
};
use hs_mimo::evaluation::{estimate_ber, run_diagnostics, BerPoint, EvalOptions};
use hs_mimo::rng::RngStream;
use hs_mimo::system_model::{
    realify_channel, sample_channel, sample_signal, transmit, ComplexChannel, NoiseModel, SystemDims,
};
use hs_mimo::unfolding_trainer::{
    finite_difference_gradient, incremental_train, SnrSchedule, TrainableFamily, TrainingConfig, Unfoldable,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, budget_secs: u64) -> bool {
    elapsed <= Duration::from_secs(budget_secs)
}

// Gaussian identity on the a × x grid: residual < 1e-8, under 10 s.
fn hs_identity() -> Outcome {
    let start = Instant::now();
    let mut opts = ValidationOptions::new(1);
    opts.instances = 0;
    let out = run_validation(opts).unwrap();
    let elapsed = start.elapsed();
    let worst = out.max_identity_residual();
    Outcome::new(
        out.passed() && out.identity.len() == 15 && worst < IDENTITY_TOLERANCE && within(elapsed, 10),
        format!("max residual {worst:.2e} over {} points (tol 1e-8)", out.identity.len()),
    )
}

// Enumerated Boltzmann mean equals tanh(βHᵀv): 100 instances, N = 12,
// β ∈ [0.1, 5], max diff < 1e-10, under 1 min.
fn expectation_factorization() -> Outcome {
    let start = Instant::now();
    let out = run_validation(ValidationOptions::new(2)).unwrap();
    let elapsed = start.elapsed();
    let worst = out.max_expectation_diff();
    let betas_ok = out.expectation.iter().all(|r| (0.1..=5.0).contains(&r.beta));
    Outcome::new(
        out.passed()
            && out.expectation.len() == 100
            && out.real_n == 12
            && betas_ok
            && worst < EXPECTATION_TOLERANCE
            && within(elapsed, 60),
        format!("max |diff| {worst:.2e} over {} instances, N = {} (tol 1e-10)", out.expectation.len(), out.real_n),
    )
}

// Reverse-mode gradients vs central differences: 50 instances, N ≤ 16,
// T ≤ 5; relative error < 1e-4, tiny components absolute < 1e-8,
// ∂loss/∂ζ₀ exactly zero, under 1 min.
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let root = RngStream::new(3, 0);
    let (mut worst_rel, mut worst_tiny, mut zeta0_zero) = (0.0f64, 0.0f64, true);
    for i in 0..50 {
        let mut rng = root.substream(1, i).rng();
        let dims = random_dims(&mut rng, 8, 8);
        let depth = rng.gen_range(1..=5);
        let params = ThsParams::new(
            (0..depth).map(|_| rng.gen_range(0.3..2.0)).collect(),
            (0..depth).map(|_| rng.gen_range(0.01..0.2)).collect(),
            (0..depth).map(|_| rng.gen_range(0.8..1.2)).collect(),
        )
        .unwrap();
        let batch = random_batch(dims, rng.gen_range(1..=4), rng.gen_range(0.0..20.0), root.substream(2, i));
        let (_, grad) = params.loss_and_gradient(&batch, depth).unwrap();
        let numeric = finite_difference_gradient(&params.to_flat(), 1e-6, |flat| {
            params.with_flat(flat).unwrap().loss(&batch, depth).unwrap()
        });
        let (_, rel) = gradient_errors(&grad, &numeric);
        worst_rel = worst_rel.max(rel);
        for (g, n) in grad.iter().zip(&numeric) {
            if n.abs() < 1e-12 {
                worst_tiny = worst_tiny.max((g - n).abs());
            }
        }
        zeta0_zero &= grad[2 * depth] == 0.0;
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst_rel < 1e-4 && worst_tiny < 1e-8 && zeta0_zero && within(elapsed, 60),
        format!(
            "max relative error {worst_rel:.2e} (tol 1e-4), max abs error on tiny components {worst_tiny:.1e}, \
             dloss/dzeta0 exactly zero: {zeta0_zero}"
        ),
    )
}

// HS equals THS with constant β, η and ζ = 1 + η/λ: 100 instances,
// agreement < 1e-12, under 10 s.
fn hs_ths_mapping() -> Outcome {
    let start = Instant::now();
    let root = RngStream::new(4, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let mut rng = root.substream(1, i).rng();
        let dims = random_dims(&mut rng, 16, 16);
        let (h, y) = random_instance(dims, root.substream(2, i));
        let hs = HsParams::new(
            rng.gen_range(1..=30),
            rng.gen_range(0.001..0.3),
            rng.gen_range(0.5..5.0),
            rng.gen_range(0.2..3.0),
        )
        .unwrap();
        let zeta = 1.0 + hs.eta / hs.lambda;
        let ths = ThsParams::constant(hs.depth, hs.beta, hs.eta, zeta).unwrap();
        let a = hs_detect(&h, &y, &hs, false).unwrap();
        let b = ths_detect(&h, &y, &ths, false).unwrap();
        worst = worst.max((a.soft - b.soft).amax());
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst < 1e-12 && within(elapsed, 10),
        format!("max |HS − THS| {worst:.1e} over 100 instances (tol 1e-12)"),
    )
}

// With y = Hs and ζ = 1 a layer leaves u bit-for-bit unchanged (1000 cases).
// Small-integer channels and dyadic s make Hs exact in floating point.
fn zero_residual_invariance() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (any::<u64>(), 1usize..=4, 1usize..=4, -1.0f64..1.0, 0.01f64..10.0);
    let result = runner.run(&strategy, |(seed, n, m, eta, beta)| {
        let mut rng = RngStream::new(seed, 5).rng();
        let entries = DMatrix::from_fn(m, n, |_, _| {
            Complex64::new(rng.gen_range(-4..=4) as f64, rng.gen_range(-4..=4) as f64)
        });
        let h = realify_channel(&ComplexChannel { entries });
        let levels = [-1.0, -0.5, 0.5, 1.0];
        let s = DVector::from_fn(2 * n, |_, _| levels[rng.gen_range(0..4)]);
        let u = DVector::from_fn(2 * n, |_, _| rng.gen_range(-50.0..50.0));
        let y = h.matrix() * &s;
        let (next, _) = ths_step(&u, &s, &h, &y, beta, eta, 1.0).unwrap();
        prop_assert_eq!(next, u);
        Ok(())
    });
    match result {
        Ok(()) => Outcome::new(true, "1000 cases, u unchanged exactly"),
        Err(e) => Outcome::new(false, format!("counterexample: {e}")),
    }
}

fn trained(dims: SystemDims, family: TrainableFamily, schedule: SnrSchedule, seed: u64) -> DetectorSpec {
    let mut cfg = TrainingConfig::new(dims, schedule, seed);
    cfg.family = family;
    incremental_train(&cfg).unwrap().detector.to_spec()
}

// Small system: the ML oracle is never beaten on noiseless instances, and
// trained THS reproduces the ML decision on ≥ 95 % of instances at 30 dB.
fn oracle_optimality() -> Outcome {
    let dims = SystemDims::new(3, 3).unwrap();
    let ths = trained(dims, TrainableFamily::Ths, SnrSchedule::Fixed(30.0), 6);
    let others: Vec<DetectorSpec> = vec![
        ths.clone(),
        DetectorSpec::Hs {
            params: HsParams::reference(30),
        },
        DetectorSpec::ScalableTpg {
            params: TpgParams::scalable(vec![0.05; 30], vec![1.0; 30]).unwrap(),
        },
        DetectorSpec::Mmse,
    ];
    let root = RngStream::new(6, 0);
    let mut violations = 0;
    for i in 0..1000 {
        let mut rng = root.substream(1, i).rng();
        let h = realify_channel(&sample_channel(dims, &mut rng));
        let sample = transmit(&h, sample_signal(dims, &mut rng), NoiseModel::noiseless(), &mut rng).unwrap();
        let ml = brute_force_ml_detect(&h, &sample.y).unwrap();
        let best = ml_objective(&h, &sample.y, &ml.hard);
        for d in &others {
            let out = d.detect(&h, &sample.y, &NoiseModel::noiseless(), false).unwrap();
            if best > ml_objective(&h, &sample.y, &out.hard) {
                violations += 1;
            }
        }
    }
    let noise = NoiseModel::from_snr(30.0, dims.n());
    let mut agree = 0;
    for i in 0..1000 {
        let mut rng = root.substream(2, i).rng();
        let h = realify_channel(&sample_channel(dims, &mut rng));
        let sample = transmit(&h, sample_signal(dims, &mut rng), noise, &mut rng).unwrap();
        let ml = brute_force_ml_detect(&h, &sample.y).unwrap();
        let out = ths.detect(&h, &sample.y, &noise, false).unwrap();
        agree += usize::from(out.hard == ml.hard);
    }
    let rate = agree as f64 / 1000.0;
    Outcome::new(
        violations == 0 && rate >= 0.95,
        format!("ML beaten {violations} times in 4000 comparisons; THS = ML on {:.1}% at 30 dB (need ≥ 95%)", 100.0 * rate),
    )
}

const DESK_SNR: f64 = 20.0;

struct DeskModels {
    ths: DetectorSpec,
    tpg: DetectorSpec,
    train_time: Duration,
}

fn desk_dims() -> SystemDims {
    SystemDims::new(50, 32).unwrap()
}

fn train_pair(schedule: SnrSchedule) -> DeskModels {
    let start = Instant::now();
    let ths = trained(desk_dims(), TrainableFamily::Ths, schedule, 7);
    let tpg = trained(desk_dims(), TrainableFamily::ScalableTpg, schedule, 7);
    DeskModels {
        ths,
        tpg,
        train_time: start.elapsed(),
    }
}

/// THS and scalable TPG trained identically on (50, 32) at 20 dB with the
/// reduced desk protocol; shared by the BER criteria.
fn desk_models() -> &'static DeskModels {
    static MODELS: OnceLock<DeskModels> = OnceLock::new();
    MODELS.get_or_init(|| train_pair(SnrSchedule::Fixed(DESK_SNR)))
}

fn paired_ber(detectors: &[&DetectorSpec], snr_db: f64, vectors: usize, seed: u64) -> Vec<BerPoint> {
    let stream = RngStream::new(seed, 0);
    detectors
        .iter()
        .map(|d| estimate_ber(*d, desk_dims(), snr_db, EvalOptions::new(vectors), stream).unwrap())
        .collect()
}

// (50, 32), T = 30, reduced training, 20 dB, ≥ 2e5 paired bits:
// THS < HS, THS < scalable TPG, THS ≤ 1.1e-2, within 2 h.
fn desk_ordering() -> Outcome {
    let start = Instant::now();
    let models = desk_models();
    let hs = DetectorSpec::Hs {
        params: HsParams::reference(30),
    };
    let points = paired_ber(&[&models.ths, &hs, &models.tpg], DESK_SNR, 20_000, 8);
    let (ths, hs, tpg) = (points[0].ber, points[1].ber, points[2].ber);
    let bits = points[0].bits_tested;
    let elapsed = start.elapsed();
    Outcome::new(
        bits >= 200_000 && ths < hs && ths < tpg && ths <= 1.1e-2 && within(elapsed, 7200),
        format!(
            "BER at 20 dB over {bits} paired bits: THS {ths:.2e}, HS {hs:.2e}, scalable TPG {tpg:.2e} \
             (published 2.7e-3 / 1.1e-2 / 1.8e-2; THS cap 1.1e-2); training took {:.0?}",
            models.train_time
        ),
    )
}

// MMSE is worse than trained THS across 16–20 dB on (50, 32).
fn mmse_ordering() -> Outcome {
    let models = desk_models();
    let mut pass = true;
    let mut parts = Vec::new();
    for snr in [16.0, 18.0, 20.0] {
        let points = paired_ber(&[&DetectorSpec::Mmse, &models.ths], snr, 5_000, 9);
        pass &= points[0].ber > points[1].ber;
        parts.push(format!("{snr} dB MMSE {:.2e} vs THS {:.2e}", points[0].ber, points[1].ber));
    }
    Outcome::new(pass, parts.join(", "))
}

// Noiseless (50, 32), 1e4 signals, detectors trained on the noiseless
// system: THS G(30) < 0.2 G(1), scalable TPG G(30) ≥ 0.5 G(1), THS flip
// ratio falls from t = 1 to t = 30; diagnostics under 10 min.
fn diagnostics() -> Outcome {
    let models = train_pair(SnrSchedule::Noiseless);
    let start = Instant::now();
    let stream = RngStream::new(10, 0);
    let ths = run_diagnostics(&models.ths, desk_dims(), 10_000, true, None, stream).unwrap();
    let tpg = run_diagnostics(&models.tpg, desk_dims(), 10_000, true, None, stream).unwrap();
    let elapsed = start.elapsed();
    let (g1, g30) = (ths.mean_gradient_amplitude[0], ths.mean_gradient_amplitude[29]);
    let (t1, t30) = (tpg.mean_gradient_amplitude[0], tpg.mean_gradient_amplitude[29]);
    let (f1, f30) = (ths.mean_bit_flip_ratio[0], ths.mean_bit_flip_ratio[29]);
    Outcome::new(
        g30 < 0.2 * g1 && t30 >= 0.5 * t1 && f30 < f1 && within(elapsed, 600),
        format!(
            "THS G {g1:.3e} -> {g30:.3e} (ratio {:.3}, need < 0.2); TPG G {t1:.3e} -> {t30:.3e} \
             (ratio {:.3}, need ≥ 0.5); THS flips {f1:.3e} -> {f30:.3e}; diagnostics {elapsed:.1?}, \
             training {:.0?}",
            g30 / g1,
            t30 / t1,
            models.train_time
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

// Rerunning every command with the same config and seed reproduces every
// output file byte for byte.
fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "seed": 17,
        "dims": { "n": 4, "m": 3 },
        "train": { "snr_schedule": { "uniform": { "min_db": 5.0, "max_db": 15.0 } }, "T": 4,
                   "batches_per_generation": 10, "batch_size": 16 },
        "eval": { "snr_db": [5.0, 10.0], "num_vectors": 300, "vectors_per_channel": 3,
                  "detectors": [{ "kind": "ths", "params_file": "ths_params.json" },
                                { "kind": "hs", "T": 10 }, { "kind": "mmse" }] },
        "diagnose": { "ensemble_size": 100, "detectors": [{ "kind": "ths", "params_file": "ths_params.json" }] }
    });
    let path = dir.path().join("run.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let bin = env!("CARGO_BIN_EXE_hs-mimo");
    let mut runs = Vec::new();
    let mut validate_out = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{k}"));
        for cmd in ["train", "eval", "diagnose"] {
            let status = Command::new(bin)
                .args([cmd, "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
                .args(["--threads", threads])
                .output()
                .unwrap()
                .status;
            assert!(status.success(), "{cmd} failed");
        }
        runs.push(snapshot(&out_dir));
        validate_out.push(Command::new(bin).arg("validate").output().unwrap().stdout);
    }
    let files = runs[0].len();
    let same = runs[0] == runs[1] && validate_out[0] == validate_out[1];
    Outcome::new(
        same && files == 6,
        format!("{files} output files per run, byte-identical across reruns (1 vs 2 threads): {same}"),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "Gaussian identity", hs_identity),
        (2, "expectation factorization", expectation_factorization),
        (3, "gradient correctness", gradient_correctness),
        (4, "HS/THS mapping", hs_ths_mapping),
        (5, "zero-residual invariance", zero_residual_invariance),
        (6, "oracle optimality", oracle_optimality),
        (7, "desk-scale BER ordering", desk_ordering),
        (8, "MMSE ordering", mmse_ordering),
        (9, "convergence diagnostics", diagnostics),
        (10, "reproducibility", reproducibility),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!outcome.pass);
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1?}]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
