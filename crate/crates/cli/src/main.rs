use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;

#[derive(Parser)]
#[command(name = "splatpg", version, about = "Gaussian-splat optimization with score distillation and policy-gradient rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, clap::Args)]
struct Viewport {
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// World units per pixel.
    #[arg(long, default_value_t = 1.0 / 32.0)]
    scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Train a scene from a JSON config.
    Optimize {
        config: PathBuf,
        /// Output directory for the manifest, metrics, snapshots and final scene.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Render one view of a scene to PPM (RGB) plus PGM (alpha).
    Render {
        scene: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        azimuth: f64,
        #[arg(long, allow_hyphen_values = true)]
        elevation: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        viewport: Viewport,
    },
    /// Mean aesthetic proxy and compression reward over evenly spaced views.
    Eval {
        scene: PathBuf,
        #[arg(long, default_value_t = splatpg::trainer::EVAL_VIEWS)]
        views: usize,
        #[command(flatten)]
        viewport: Viewport,
    },
    /// Finite-difference checks of the renderer, reward and critic derivatives.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        cases: usize,
        /// Test hook: perturb every analytic gradient before comparison.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize { config, out } => commands::optimize(&config, &out),
        Command::Render {
            scene,
            azimuth,
            elevation,
            out,
            viewport,
        } => commands::render(&scene, azimuth, elevation, &out, viewport.into()),
        Command::Eval { scene, views, viewport } => commands::eval(&scene, views, viewport.into()),
        Command::GradCheck {
            seed,
            size,
            cases,
            corrupt,
        } => commands::grad_check(seed, size, cases, corrupt),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

impl From<Viewport> for commands::Viewport {
    fn from(v: Viewport) -> Self {
        commands::Viewport {
            width: v.width,
            height: v.height,
            scale: v.scale,
        }
    }
}
