use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use splatpg::gradcheck::{run_all, GradCheckOptions};
use splatpg::renderer::io::{read_scene, write_image};
use splatpg::renderer::{self, Camera};
use splatpg::trainer::{evaluate_views, run, TrainConfig};

use crate::manifest::RunManifest;

#[derive(Clone, Copy, Debug)]
pub struct Viewport {
    pub width: usize,
    pub height: usize,
    pub scale: f64,
}

pub fn optimize(config_path: &Path, out_dir: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(config_path).with_context(|| format!("reading config {}", config_path.display()))?;
    let config = TrainConfig::from_json(&text).with_context(|| format!("parsing config {}", config_path.display()))?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let manifest = RunManifest::new(&config, out_dir).write(out_dir)?;
    let artifacts = run(&config, out_dir)?;
    println!("manifest {}", manifest.display());
    println!("metrics {}", artifacts.metrics.display());
    println!("scene {}", artifacts.scene.display());
    println!("snapshots {}", artifacts.snapshots.len());
    Ok(ExitCode::SUCCESS)
}

pub fn render(scene_path: &Path, azimuth: f64, elevation: f64, out: &Path, viewport: Viewport) -> Result<ExitCode> {
    let scene = read_scene(scene_path)?;
    let camera = Camera::new(azimuth, elevation, viewport.width, viewport.height, viewport.scale);
    let image = renderer::render(&scene, &camera)?;
    write_image(out, &image)?;
    println!("wrote {} and {}", out.display(), out.with_extension("pgm").display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(scene_path: &Path, views: usize, viewport: Viewport) -> Result<ExitCode> {
    let scene = read_scene(scene_path)?;
    let r = evaluate_views(&scene, viewport.width, viewport.height, viewport.scale, views)?;
    println!("views {} azimuth_step {:.17} elevation 0", r.views, r.azimuth_step);
    println!("mean_aes_proxy {:.17}", r.mean_aes_proxy);
    println!("mean_compression_reward {:.17}", r.mean_compression_reward);
    Ok(ExitCode::SUCCESS)
}

pub fn grad_check(seed: u64, size: usize, cases: usize, corrupt: bool) -> Result<ExitCode> {
    anyhow::ensure!(size > 0, "size must be positive");
    let opts = GradCheckOptions {
        seed,
        size,
        renderer_cases: cases,
        corrupt,
    };
    let reports = run_all(&opts)?;
    let mut ok = true;
    for r in &reports {
        println!("{r}");
        ok &= r.passed();
    }
    println!("{}", if ok { "all suites passed" } else { "gradient check FAILED" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
