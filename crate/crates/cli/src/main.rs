//! Command-line interface: dataset generation, invariant verification,
//! benchmarking, transform application, and forward-pass demos.
//!
//! Exit codes: 0 success, 1 check/inference failure, 2 usage error,
//! 3 I/O or file-format error.

mod bench;
mod checkcmd;
mod gendata;
mod infer;
mod transformcmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "spinsphere",
    about = "Spin-weighted spherical harmonic transforms, equivariant \
             spherical networks, and the spherical vector-field MNIST \
             dataset generator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant verification suites and write a JSON report.
    Check(checkcmd::CheckArgs),
    /// Time the transforms and layers across bandwidths.
    Bench(bench::BenchArgs),
    /// Generate a spherical vector-field MNIST dataset.
    GenData(gendata::GenDataArgs),
    /// Apply the forward or inverse transform to a field/coefficient bundle.
    Transform(transformcmd::TransformArgs),
    /// Run a network forward pass on a dataset sample.
    Infer(infer::InferArgs),
}

fn exit_code_for(err: &spinsphere::Error) -> i32 {
    use spinsphere::Error::*;
    match err {
        Io(_) | Json(_) | Truncated(_) | BadMagic { .. } | Manifest(_) => 3,
        InvalidConfig(_) => 2,
        _ => 1,
    }
}

fn main() {
    if let Ok(threads) = std::env::var("SPINSPHERE_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                spinsphere::par::configure_threads(n);
            }
            _ => {
                eprintln!("warning: ignoring invalid SPINSPHERE_THREADS='{threads}'");
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(args) => checkcmd::run(args),
        Command::Bench(args) => bench::run(args),
        Command::GenData(args) => gendata::run(args),
        Command::Transform(args) => transformcmd::run(args),
        Command::Infer(args) => infer::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
