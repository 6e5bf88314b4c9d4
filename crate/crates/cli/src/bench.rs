//! `bench`: median wall times for the transforms, the spin convolution, and
//! one full layer across bandwidths, with the fitted scaling exponent of the
//! forward transform.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use spinsphere::error::Error;
use spinsphere::harmonics::DeltaTable;
use spinsphere::layers::{
    conv_layer_forward, BatchNormState, FilterParams, ForwardContext, LayerSpec,
};
use spinsphere::spectral::{spin_conv, FeatureMap};
use spinsphere::testing;
use spinsphere::transform::TransformPlan;
use spinsphere::Result;

#[derive(Args)]
pub struct BenchArgs {
    /// Bandwidths to measure (powers of two in [8, 128]).
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    bandwidth: Vec<usize>,

    /// Repetitions per measurement (median reported).
    #[arg(long, default_value_t = 5)]
    reps: usize,

    /// Seed for the benchmark inputs.
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Channels per field.
    #[arg(long, default_value_t = 4)]
    channels: usize,

    /// Write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchRow {
    bandwidth: usize,
    forward_ms: f64,
    forward_spread_ms: (f64, f64),
    inverse_ms: f64,
    conv_ms: f64,
    layer_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    forward_sequential_ms: Option<f64>,
}

#[derive(Serialize)]
struct BenchReport {
    seed: u64,
    reps: usize,
    channels: usize,
    parallel: bool,
    rows: Vec<BenchRow>,
    forward_ratios: Vec<f64>,
    forward_exponent: f64,
}

/// Median of `reps` measurements; each measurement loops the closure enough
/// times to take at least ~5 ms, for stable numbers on fast cases.
fn time_median_ms(reps: usize, mut f: impl FnMut()) -> (f64, f64, f64) {
    let start = Instant::now();
    f();
    let once = start.elapsed().as_secs_f64();
    let inner = ((5e-3 / once.max(1e-9)).ceil() as usize).clamp(1, 10_000);
    let mut samples: Vec<f64> = (0..reps.max(3))
        .map(|_| {
            let start = Instant::now();
            for _ in 0..inner {
                f();
            }
            start.elapsed().as_secs_f64() / inner as f64 * 1e3
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    (
        samples[samples.len() / 2],
        samples[0],
        samples[samples.len() - 1],
    )
}

pub fn run(args: BenchArgs) -> Result<i32> {
    if args.reps < 3 {
        return Err(Error::InvalidConfig("bench needs at least 3 repetitions".into()));
    }
    for &b in &args.bandwidth {
        if !(8..=128).contains(&b) || !b.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "bench bandwidths must be powers of two in [8, 128], got {b}"
            )));
        }
    }
    println!("seed: {}", args.seed);
    let mut rng = testing::seeded_rng(args.seed);
    let mut rows = Vec::new();

    for &b in &args.bandwidth {
        let table = Arc::new(DeltaTable::new(b - 1));
        let plan = TransformPlan::new(b, &[0, 1], table.clone())?;
        let coeffs = testing::random_coeffs(&mut rng, 1, b, args.channels);
        let field = plan.inverse(&coeffs)?;

        let (forward_ms, lo, hi) = time_median_ms(args.reps, || {
            let _ = plan.forward(&field).unwrap();
        });
        let (inverse_ms, _, _) = time_median_ms(args.reps, || {
            let _ = plan.inverse(&coeffs).unwrap();
        });

        let forward_sequential_ms = if spinsphere::par::parallel_available() {
            let seq_plan = TransformPlan::new(b, &[0, 1], table.clone())?.with_parallel(false);
            let (t, _, _) = time_median_ms(args.reps, || {
                let _ = seq_plan.forward(&field).unwrap();
            });
            Some(t)
        } else {
            None
        };

        // spin convolution, spins {0,1}, 8 -> 8 channels
        let feat = FeatureMap::from_spectral(vec![
            testing::random_coeffs(&mut rng, 0, b, 8),
            testing::random_coeffs(&mut rng, 1, b, 8),
        ])?;
        let filter = FilterParams::random(&mut rng, &[0, 1], &[0, 1], 8, 8, b, 4).expand()?;
        let (conv_ms, _, _) = time_median_ms(args.reps, || {
            let _ = spin_conv(&feat, &filter).unwrap();
        });

        // one full layer at this bandwidth
        let ctx = ForwardContext::new(table.clone());
        let spec = LayerSpec {
            in_channels: args.channels,
            out_channels: args.channels,
            in_spins: vec![0, 1],
            out_spins: vec![0, 1],
            n_anchor: 4,
            bandwidth: b,
            pool_after: false,
            upsample_before: false,
            take_real_s0: true,
        };
        let params = FilterParams::random(
            &mut rng,
            &[0, 1],
            &[0, 1],
            args.channels,
            args.channels,
            b,
            4,
        );
        let mut bn = vec![
            BatchNormState::identity(args.channels),
            BatchNormState::identity(args.channels),
        ];
        let spatial = FeatureMap::from_spatial(vec![
            plan.inverse(&testing::random_coeffs(&mut rng, 0, b, args.channels))?,
            plan.inverse(&testing::random_coeffs(&mut rng, 1, b, args.channels))?,
        ])?;
        let (layer_ms, _, _) = time_median_ms(args.reps, || {
            let _ = conv_layer_forward(&spatial, &params, &mut bn, &spec, &ctx).unwrap();
        });

        rows.push(BenchRow {
            bandwidth: b,
            forward_ms,
            forward_spread_ms: (lo, hi),
            inverse_ms,
            conv_ms,
            layer_ms,
            forward_sequential_ms,
        });
    }

    let forward_ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| w[1].forward_ms / w[0].forward_ms)
        .collect();
    // least-squares slope of ln(t) against ln(B)
    let n = rows.len() as f64;
    let forward_exponent = if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| (r.bandwidth as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.forward_ms.ln()).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        cov / var
    } else {
        f64::NAN
    };

    println!(
        "{:>5}  {:>12}  {:>12}  {:>12}  {:>12}  {:>14}",
        "B", "forward", "inverse", "spin_conv", "layer", "forward (seq)"
    );
    for r in &rows {
        println!(
            "{:>5}  {:>9.3} ms  {:>9.3} ms  {:>9.3} ms  {:>9.3} ms  {}",
            r.bandwidth,
            r.forward_ms,
            r.inverse_ms,
            r.conv_ms,
            r.layer_ms,
            r.forward_sequential_ms
                .map(|t| format!("{t:>9.3} ms"))
                .unwrap_or_else(|| "-".to_string()),
        );
    }
    for (w, ratio) in rows.windows(2).zip(&forward_ratios) {
        println!(
            "forward time ratio B={} / B={}: {:.2}",
            w[1].bandwidth, w[0].bandwidth, ratio
        );
    }
    println!("fitted forward scaling exponent: {forward_exponent:.2}");

    let report = BenchReport {
        seed: args.seed,
        reps: args.reps,
        channels: args.channels,
        parallel: spinsphere::par::parallel_available(),
        rows,
        forward_ratios,
        forward_exponent,
    };
    if let Some(path) = &args.output {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        println!("report written to {}", path.display());
    }
    Ok(0)
}
