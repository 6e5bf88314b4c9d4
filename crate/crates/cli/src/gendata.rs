//! `gen-data`: build a spherical vector-field MNIST dataset from the
//! standard IDX files.

use std::path::{Path, PathBuf};

use clap::Args;
use spinsphere::data::{
    dataset_generate, mnist_load, GenerateConfig, RotationMode, Task,
};
use spinsphere::error::Error;
use spinsphere::Result;

#[derive(Args)]
pub struct GenDataArgs {
    /// Dataset variant: classify-scalar, classify-vector, img2vec-easy,
    /// img2vec-hard, vec2img-easy, vec2img-hard.
    #[arg(long)]
    task: String,

    /// Rotation mode: "NR", "R", or a "train/test" pair like "NR/R".
    #[arg(long, default_value = "NR/NR")]
    mode: String,

    /// Directory with the MNIST IDX files (train-images-idx3-ubyte,
    /// train-labels-idx1-ubyte, t10k-images-idx3-ubyte,
    /// t10k-labels-idx1-ubyte; .gz accepted).
    #[arg(long)]
    input: PathBuf,

    /// Output dataset directory.
    #[arg(long)]
    output: PathBuf,

    #[arg(long, default_value_t = 32)]
    bandwidth: usize,

    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Cap the per-split sample count (desk-scale runs).
    #[arg(long)]
    limit: Option<usize>,
}

fn find_idx(dir: &Path, base: &str) -> Result<PathBuf> {
    for candidate in [base.to_string(), format!("{base}.gz")] {
        let path = dir.join(&candidate);
        if path.exists() {
            return Ok(path);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} (or .gz) not found in {}", base, dir.display()),
    )))
}

fn parse_modes(s: &str) -> Result<(RotationMode, RotationMode)> {
    match s.split_once('/') {
        Some((train, test)) => Ok((RotationMode::parse(train)?, RotationMode::parse(test)?)),
        None => {
            let mode = RotationMode::parse(s)?;
            Ok((mode, mode))
        }
    }
}

pub fn run(args: GenDataArgs) -> Result<i32> {
    println!("seed: {}", args.seed);
    let task = Task::parse(&args.task)?;
    let (train_mode, test_mode) = parse_modes(&args.mode)?;

    let source_train = mnist_load(
        &find_idx(&args.input, "train-images-idx3-ubyte")?,
        &find_idx(&args.input, "train-labels-idx1-ubyte")?,
    )?;
    let source_test = mnist_load(
        &find_idx(&args.input, "t10k-images-idx3-ubyte")?,
        &find_idx(&args.input, "t10k-labels-idx1-ubyte")?,
    )?;
    println!(
        "loaded {} train / {} test source images",
        source_train.len(),
        source_test.len()
    );

    let config = GenerateConfig {
        task,
        train_mode,
        test_mode,
        bandwidth: args.bandwidth,
        seed: args.seed,
        limit: args.limit,
    };
    let manifest = dataset_generate(
        &config,
        &source_train,
        &source_test,
        &args.output,
        spinsphere::par::parallel_available(),
    )?;
    println!(
        "wrote {} ({} train / {} test samples) to {}",
        manifest.task.name(),
        manifest.train_count,
        manifest.test_count,
        args.output.display()
    );
    Ok(0)
}
