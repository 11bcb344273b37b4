use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use est_core::evalsuite::Probe;
use est_core::sphere::GridKind;

#[derive(Debug, Parser)]
#[command(name = "est", version, about = "Verification campaigns for spherical-attention equivariant networks")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit the canonical JSON report (default).
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// Emit the flattened CSV projection.
    #[arg(long, global = true)]
    pub csv: bool,
    /// JSON file merged under the explicit flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker thread cap; all available cores when absent.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Grid family.
    #[arg(long = "grid", value_parser = parse_kind)]
    pub kind: Option<GridKind>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Apply repulsion optimisation to a Fibonacci grid.
    #[arg(long)]
    pub optimize: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a sampling grid and write it with its conjugate weights.
    Sample {
        #[command(flatten)]
        grid: GridArgs,
        /// Harmonic degree of the stored weights.
        #[arg(long)]
        degree: Option<usize>,
        /// Random rotations used for the closure statistic.
        #[arg(long)]
        rotations: Option<usize>,
    },
    /// Round-trip error of the spherical Fourier transform.
    FtCheck {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Rotation error of untrained networks, per depth.
    Audit {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Rotations per sample.
        #[arg(long)]
        rotations: Option<usize>,
        /// Steerable experts per layer.
        #[arg(long)]
        steerable: Option<usize>,
        /// Spherical experts per layer.
        #[arg(long)]
        spherical: Option<usize>,
        /// Keep the k best experts of each family instead of dense routing.
        #[arg(long)]
        top_k: Option<usize>,
        /// Directory of .xyz files used instead of synthetic clouds.
        #[arg(long)]
        xyz: Option<PathBuf>,
    },
    /// Two-class n-fold symmetry benchmark.
    Rotsym {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, value_parser = parse_probe)]
        probe: Option<Probe>,
        /// Number of training seeds.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
    },
    /// Spatial product of two signals against the weighted coupling product.
    Prop2 {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Autodiff against central differences for every parameterised block.
    Gradcheck {
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
        /// Entries differenced per parameter tensor.
        #[arg(long)]
        entries: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample { .. } => "sample",
            Command::FtCheck { .. } => "ft-check",
            Command::Audit { .. } => "audit",
            Command::Rotsym { .. } => "rotsym",
            Command::Prop2 { .. } => "prop2",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

fn parse_kind(s: &str) -> Result<GridKind, String> {
    s.parse().map_err(|e: est_core::EstError| e.to_string())
}

fn parse_probe(s: &str) -> Result<Probe, String> {
    s.parse().map_err(|e: est_core::EstError| e.to_string())
}
