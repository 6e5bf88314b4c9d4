//! `transform`: forward or inverse spin-weighted spherical harmonic
//! transform of a field/coefficient bundle, per spin.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use spinsphere::blob::{
    load_coeff_bundle, load_field_bundle, save_coeff_bundle, save_field_bundle,
};
use spinsphere::harmonics::DeltaTable;
use spinsphere::transform::TransformPlan;
use spinsphere::Result;

#[derive(Clone, Copy, ValueEnum)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Args)]
pub struct TransformArgs {
    /// Input bundle directory (field bundle for forward, coefficient bundle
    /// for inverse).
    #[arg(long)]
    input: PathBuf,

    /// Output bundle directory.
    #[arg(long)]
    output: PathBuf,

    #[arg(long, value_enum)]
    direction: Direction,
}

pub fn run(args: TransformArgs) -> Result<i32> {
    match args.direction {
        Direction::Forward => {
            let (manifest, fields) = load_field_bundle(&args.input)?;
            let table = Arc::new(DeltaTable::new(manifest.bandwidth - 1));
            let plan = TransformPlan::new(manifest.bandwidth, &manifest.spins, table)?;
            let coeffs: Result<Vec<_>> = fields.iter().map(|f| plan.forward(f)).collect();
            let mut coeffs = coeffs?;
            for c in coeffs.iter_mut() {
                c.quantize_f32();
            }
            save_coeff_bundle(&args.output, &coeffs)?;
            println!(
                "analyzed {} spins at bandwidth {} -> {}",
                manifest.spins.len(),
                manifest.bandwidth,
                args.output.display()
            );
        }
        Direction::Inverse => {
            let (manifest, coeffs) = load_coeff_bundle(&args.input)?;
            let table = Arc::new(DeltaTable::new(manifest.bandwidth - 1));
            let plan = TransformPlan::new(manifest.bandwidth, &manifest.spins, table)?;
            let fields: Result<Vec<_>> = coeffs.iter().map(|c| plan.inverse(c)).collect();
            let mut fields = fields?;
            for f in fields.iter_mut() {
                f.quantize_f32();
            }
            save_field_bundle(&args.output, &fields)?;
            println!(
                "synthesized {} spins at bandwidth {} -> {}",
                manifest.spins.len(),
                manifest.bandwidth,
                args.output.display()
            );
        }
    }
    Ok(0)
}
