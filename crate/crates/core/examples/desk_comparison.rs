//! Desk-scale (n, m) = (50, 32) comparison at one SNR: trains THS and
//! scalable TPG, then evaluates them next to HS and MMSE on paired draws.
//!
//! cargo run --release --example desk_comparison -- [snr_db] [batches] [batch_size] [vectors]

use std::time::Instant;

use hs_mimo::detectors::{DetectorSpec, HsParams};
use hs_mimo::evaluation::{estimate_ber, EvalOptions};
use hs_mimo::rng::RngStream;
use hs_mimo::system_model::SystemDims;
use hs_mimo::unfolding_trainer::{incremental_train_with, SnrSchedule, TrainableFamily, TrainingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let snr = args.first().copied().unwrap_or(20.0);
    let batches = args.get(1).copied().unwrap_or(200.0) as usize;
    let batch_size = args.get(2).copied().unwrap_or(200.0) as usize;
    let vectors = args.get(3).copied().unwrap_or(5000.0) as usize;

    let dims = SystemDims::new(50, 32)?;
    let mut detectors = vec![
        DetectorSpec::Hs { params: HsParams::reference(30) },
        DetectorSpec::Mmse,
    ];
    for family in [TrainableFamily::Ths, TrainableFamily::ScalableTpg] {
        let mut cfg = TrainingConfig::new(dims, SnrSchedule::Fixed(snr), 1);
        cfg.family = family;
        cfg.batches_per_generation = batches;
        cfg.batch_size = batch_size;
        let start = Instant::now();
        let out = incremental_train_with(&cfg, |g, loss| {
            if g % 5 == 0 {
                eprintln!("  {family:?} generation {g}: loss {loss:.5}");
            }
        })?;
        eprintln!("{family:?} trained in {:.1?}", start.elapsed());
        let spec = out.detector.to_spec();
        println!("{}", serde_json::to_string(&spec)?);
        detectors.push(spec);
    }
    let stream = RngStream::new(99, 0);
    for det in &detectors {
        let start = Instant::now();
        let p = estimate_ber(det, dims, snr, EvalOptions::new(vectors), stream)?;
        println!(
            "{:>13} BER {:.3e} ± {:.1e} ({} errors, {:.1?})",
            det.kind(),
            p.ber,
            p.ci_half_width,
            p.bit_errors,
            start.elapsed()
        );
    }
    Ok(())
}
