//! `infer`: forward a dataset sample through the classifier or U-Net,
//! reporting logits or writing the predicted field, plus the azimuthal
//! shift-equivariance gap for the sample and its shifted copy.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::Serialize;
use spinsphere::blob::save_field_bundle;
use spinsphere::data::{load_sample, DatasetManifest};
use spinsphere::error::Error;
use spinsphere::harmonics::DeltaTable;
use spinsphere::layers::{weights, Classifier, ForwardContext, Precision, UNet};
use spinsphere::spectral::FeatureMap;
use spinsphere::testing;
use spinsphere::transform::SpinField;
use spinsphere::Result;

#[derive(Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args)]
pub struct InferArgs {
    /// Dataset directory (from gen-data).
    #[arg(long)]
    input: PathBuf,

    /// Split and sample index to run.
    #[arg(long, default_value = "test")]
    split: String,

    #[arg(long, default_value_t = 0)]
    index: usize,

    /// Weight container directory; omitted means random weights from --seed.
    #[arg(long)]
    weights: Option<PathBuf>,

    /// Save random weights (when --weights is not given) to this directory.
    #[arg(long)]
    save_weights: Option<PathBuf>,

    #[arg(long, default_value_t = 7)]
    seed: u64,

    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    precision: PrecisionArg,

    /// Output: JSON report path for classification, prediction bundle
    /// directory for dense tasks.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassifyReport {
    task: String,
    split: String,
    index: usize,
    label: Option<u8>,
    logits: Vec<f64>,
    predicted: usize,
    shift_invariance_gap: f64,
}

fn shift_field(field: &SpinField, steps: usize) -> SpinField {
    let grid = field.grid();
    let np = grid.n_phi();
    let mut out = field.clone();
    for ch in 0..field.channels() {
        for j in 0..grid.n_theta() {
            for k in 0..np {
                out.samples_mut()[[ch, j, k]] = field.samples()[[ch, j, (k + steps) % np]];
            }
        }
    }
    out
}

pub fn run(args: InferArgs) -> Result<i32> {
    println!("seed: {}", args.seed);
    let manifest = DatasetManifest::load(&args.input)?;
    let (input_field, _target, label) = load_sample(&args.input, &manifest, &args.split, args.index)?;
    let input = FeatureMap::from_spatial(vec![input_field.clone()])?;

    let table = Arc::new(DeltaTable::new(manifest.bandwidth.max(32) - 1));
    let precision = match args.precision {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    };
    let ctx = ForwardContext::new(table).with_precision(precision);

    // input shifted by the total pooling granularity; the networks must
    // commute with this shift
    let shift_steps = 8;
    let shifted = FeatureMap::from_spatial(vec![shift_field(&input_field, shift_steps)])?;

    if manifest.task.is_classification() {
        let mut net = match &args.weights {
            Some(dir) => weights::load_classifier(dir)?,
            None => {
                let mut rng = testing::seeded_rng(args.seed);
                let mut net = Classifier::new(&[manifest.input_spin], &mut rng)?;
                net.quantize_f32();
                if let Some(dir) = &args.save_weights {
                    weights::save_classifier(dir, &net)?;
                }
                net
            }
        };
        if net.input_spins != vec![manifest.input_spin] {
            return Err(Error::SpinMismatch {
                spin: manifest.input_spin,
                available: net.input_spins.clone(),
            });
        }
        let logits = net.forward(&input, &ctx)?;
        let logits_shifted = net.forward(&shifted, &ctx)?;
        let scale = logits.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        let gap = logits
            .iter()
            .zip(&logits_shifted)
            .map(|(a, b)| (a - b).abs() / scale)
            .fold(0.0, f64::max);
        let predicted = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let report = ClassifyReport {
            task: manifest.task.name().to_string(),
            split: args.split.clone(),
            index: args.index,
            label,
            logits: logits.clone(),
            predicted,
            shift_invariance_gap: gap,
        };
        println!("logits: {logits:?}");
        println!("predicted class: {predicted} (label: {label:?})");
        println!("azimuthal shift invariance gap: {gap:.3e}");
        if let Some(path) = &args.output {
            std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            println!("report written to {}", path.display());
        }
        Ok(0)
    } else {
        let mut net = match &args.weights {
            Some(dir) => weights::load_unet(dir)?,
            None => {
                let mut rng = testing::seeded_rng(args.seed);
                let out_spin = manifest.task.target_spin().expect("dense task");
                let mut net = UNet::new(
                    &[manifest.input_spin],
                    &[out_spin],
                    manifest.task.target_channels(),
                    &mut rng,
                )?;
                net.quantize_f32();
                if let Some(dir) = &args.save_weights {
                    weights::save_unet(dir, &net)?;
                }
                net
            }
        };
        let prediction = net.forward(&input, &ctx)?;
        let shifted_prediction = net.forward(&shifted, &ctx)?;
        // compare net(shift(x)) against shift(net(x))
        let mut gap: f64 = 0.0;
        let mut scale: f64 = 1e-300;
        for &s in &prediction.spins() {
            let a = shifted_prediction.spatial_part(s).unwrap();
            let e = shift_field(prediction.spatial_part(s).unwrap(), shift_steps);
            for (x, y) in a.samples().iter().zip(e.samples().iter()) {
                gap = gap.max((x - y).norm());
                scale = scale.max(y.norm());
            }
        }
        println!(
            "prediction: spins {:?}, {} channels, {}x{} grid",
            prediction.spins(),
            prediction.channels(),
            2 * prediction.bandwidth(),
            2 * prediction.bandwidth()
        );
        println!("azimuthal shift equivariance gap: {:.3e}", gap / scale);
        if let Some(dir) = &args.output {
            let fields: Vec<SpinField> = prediction.spatial_parts()?.to_vec();
            save_field_bundle(dir, &fields)?;
            println!("prediction bundle written to {}", dir.display());
        }
        Ok(0)
    }
}
