//! The optimization loop: camera and timestep sampling, SDS + pathwise reward +
//! policy-gradient terms, Adam updates, term scheduling and metrics.

mod config;
mod eval;
mod optim;

pub use config::{CameraConfig, InitConfig, OptimizerConfig, PgSection, ScheduleConfig, SdsSection, TrainConfig};
pub use eval::{evaluate_views, EvalReport, EVAL_VIEWS};
pub use optim::{adam_scalar, OptimState};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use crate::buffer::Buffer;
use crate::critic::{Context, NoiseSchedule};
use crate::error::{Error, Result};
use crate::policygrad::{pg_image, update_baseline, Baseline};
use crate::renderer::io::{write_ppm, write_scene};
use crate::renderer::{render, render_vjp, Camera, Gaussian3D, Image, ImageCotangent, SceneGradient, SplatScene};
use crate::rewards::{aes_proxy, compression_reward};
use crate::rng::{normal_vec, standard_normal, substream, Term};
use crate::sds::sds_param_grad_for_image;

pub const METRICS_HEADER: &str =
    "iter,term_sds_norm,term_guidance_norm,term_pg_norm,reward_raw,baseline,aes_proxy,compression_reward,ms_sds,ms_pg,ms_total";

pub const SCENE_FILE: &str = "scene_final.json";

/// Per-iteration record; one metrics CSV row.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub iter: usize,
    pub sds_norm: f64,
    pub guidance_norm: f64,
    pub pg_norm: f64,
    /// Policy-gradient reward before baseline subtraction (0 when disabled).
    pub reward_raw: f64,
    pub baseline: f64,
    /// Rewards of the image rendered this iteration, before the update.
    pub aes_proxy: f64,
    pub compression_reward: f64,
    pub ms_sds: f64,
    pub ms_pg: f64,
    pub ms_total: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.sds_norm,
            self.guidance_norm,
            self.pg_norm,
            self.reward_raw,
            self.baseline,
            self.aes_proxy,
            self.compression_reward,
            self.ms_sds,
            self.ms_pg,
            self.ms_total
        )
    }
}

/// Random initial scene drawn from the `Init` substream of `config.seed`.
pub fn init_scene(config: &TrainConfig) -> SplatScene {
    let mut rng = substream(config.seed, 0, Term::Init);
    let init = &config.init;
    let gaussians = (0..init.n_gaussians)
        .map(|_| {
            let position = std::array::from_fn(|_| init.position_std * standard_normal(&mut rng));
            let rotation = loop {
                let q: Vec<f64> = normal_vec(&mut rng, 4);
                let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
                }
            };
            let color = std::array::from_fn(|_| rng.random::<f64>());
            Gaussian3D {
                position,
                log_scale: [init.log_scale; 3],
                rotation,
                color,
                opacity_logit: init.opacity_logit,
            }
        })
        .collect();
    SplatScene::new(gaussians, config.background)
}

/// Azimuth then elevation, each uniform on its configured range.
pub fn sample_camera<R: Rng + ?Sized>(rng: &mut R, config: &TrainConfig) -> Camera {
    let c = &config.camera;
    let mut uniform = |lo: f64, hi: f64| if lo < hi { rng.random_range(lo..hi) } else { lo };
    let azimuth = uniform(c.azimuth_min, c.azimuth_max);
    let elevation = uniform(c.elevation_min, c.elevation_max);
    Camera::new(azimuth, elevation, c.width, c.height, c.scale)
}

/// Everything a run needs besides the evolving state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub schedule: NoiseSchedule,
    pub context: Context,
}

/// Term gradients of one iteration, before they are summed.
#[derive(Clone, Debug)]
pub struct TermGradients {
    pub sds: Option<SceneGradient>,
    pub guidance: Option<SceneGradient>,
    pub pg: Option<SceneGradient>,
    pub reward_raw: f64,
    pub ms_sds: f64,
    pub ms_pg: f64,
}

impl TermGradients {
    pub fn total(&self, n: usize) -> SceneGradient {
        let mut total = SceneGradient::zeros(n);
        for g in [&self.sds, &self.guidance, &self.pg].into_iter().flatten() {
            total.add_assign(g);
        }
        total
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn vjp_checked(scene: &SplatScene, camera: &Camera, cot: Buffer, term: &'static str, iter: usize) -> Result<SceneGradient> {
    if !cot.is_finite() {
        return Err(Error::NonFiniteGradient { term, iter });
    }
    let g = render_vjp(scene, camera, &ImageCotangent::rgb(cot))?;
    check_finite(&g, term, iter)?;
    Ok(g)
}

fn check_finite(g: &SceneGradient, term: &'static str, iter: usize) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient { term, iter })
    }
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let schedule = config.noise_schedule()?;
        let context = config.context()?;
        Ok(Trainer {
            config,
            schedule,
            context,
        })
    }

    pub fn camera_for(&self, iter: usize) -> Camera {
        sample_camera(&mut substream(self.config.seed, iter as u64, Term::Camera), &self.config)
    }

    /// Computes each enabled term for `iter` from its own substream. Each term
    /// is a descent-convention gradient.
    pub fn term_gradients(&self, scene: &SplatScene, baseline: &Baseline, iter: usize, camera: &Camera, image: &Image) -> Result<TermGradients> {
        let cfg = &self.config;
        let seed = cfg.seed;
        let mut out = TermGradients {
            sds: None,
            guidance: None,
            pg: None,
            reward_raw: 0.0,
            ms_sds: 0.0,
            ms_pg: 0.0,
        };

        if cfg.sds.active(iter) {
            let start = Instant::now();
            let mut rng = substream(seed, iter as u64, Term::Sds);
            let sds_cfg = cfg.sds.config();
            let t = sds_cfg.sample_t(&mut rng, self.schedule.steps());
            let eps = Buffer::from_vec(
                image.width,
                image.height,
                3,
                normal_vec(&mut rng, image.rgb.len()),
            )?;
            let g = sds_param_grad_for_image(scene, camera, image, &self.context, t, &eps, &self.schedule, &sds_cfg)?;
            check_finite(&g, "sds", iter)?;
            out.sds = Some(g);
            out.ms_sds = millis(start);
        }

        if !cfg.guidance.is_empty() {
            // loss = -sum_j lambda_j * reward_j(image)
            let mut cot = Buffer::zeros_like(&image.rgb);
            for spec in &cfg.guidance {
                let grad = spec.name.gradient(&image.rgb).expect("guidance rewards are differentiable");
                for (c, g) in cot.data.iter_mut().zip(&grad.data) {
                    *c -= spec.weight * g;
                }
            }
            out.guidance = Some(vjp_checked(scene, camera, cot, "guidance", iter)?);
        }

        if cfg.pg.enabled {
            let start = Instant::now();
            let mut rng = substream(seed, iter as u64, Term::PolicyGradient);
            let pg_cfg = cfg.pg.config(self.schedule.steps());
            let rollout = pg_image(&image.rgb, &self.context, &cfg.pg.reward, &self.schedule, &pg_cfg, baseline, &mut rng)?;
            let mut cot = rollout.image_grad;
            cot.scale(pg_cfg.pg_weight);
            out.pg = Some(vjp_checked(scene, camera, cot, "pg", iter)?);
            out.reward_raw = rollout.raw_reward;
            out.ms_pg = millis(start);
        }
        Ok(out)
    }

    /// One iteration: render at a sampled camera, sum the terms, update.
    pub fn step(&self, scene: &mut SplatScene, optim: &mut OptimState, baseline: &mut Baseline, iter: usize) -> Result<StepMetrics> {
        let start = Instant::now();
        let camera = self.camera_for(iter);
        let image = render(scene, &camera)?;
        let terms = self.term_gradients(scene, baseline, iter, &camera, &image)?;
        let total = terms.total(scene.len());
        optim.apply(scene, &total, &self.config.optimizer);
        if self.config.pg.enabled {
            *baseline = update_baseline(*baseline, terms.reward_raw, &self.config.pg.config(self.schedule.steps()));
        }
        let norm = |g: &Option<SceneGradient>| g.as_ref().map_or(0.0, SceneGradient::norm);
        let mut metrics = StepMetrics {
            iter,
            sds_norm: norm(&terms.sds),
            guidance_norm: norm(&terms.guidance),
            pg_norm: norm(&terms.pg),
            reward_raw: terms.reward_raw,
            baseline: baseline.value,
            aes_proxy: aes_proxy(&image.rgb),
            compression_reward: compression_reward(&image.rgb),
            ..StepMetrics::default()
        };
        if self.config.record_timing {
            metrics.ms_sds = terms.ms_sds;
            metrics.ms_pg = terms.ms_pg;
            metrics.ms_total = millis(start);
        }
        Ok(metrics)
    }

    /// Runs all iterations from the initial scene, calling `observe` after
    /// each update.
    pub fn train(&self, mut observe: impl FnMut(&SplatScene, &StepMetrics) -> Result<()>) -> Result<TrainOutcome> {
        let mut scene = init_scene(&self.config);
        let initial_scene = scene.clone();
        let mut optim = OptimState::new(scene.len());
        let mut baseline = Baseline::default();
        let mut metrics = Vec::with_capacity(self.config.iterations);
        for iter in 0..self.config.iterations {
            let m = self.step(&mut scene, &mut optim, &mut baseline, iter)?;
            observe(&scene, &m)?;
            metrics.push(m);
        }
        Ok(TrainOutcome {
            initial_scene,
            scene,
            metrics,
        })
    }

    /// Mean squared error between the canonical view and the context target.
    pub fn canonical_mse(&self, scene: &SplatScene) -> Result<f64> {
        let image = render(scene, &self.config.canonical_camera())?;
        let diff: f64 = image
            .rgb
            .data
            .iter()
            .zip(&self.context.target.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(diff / image.rgb.len() as f64)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub initial_scene: SplatScene,
    pub scene: SplatScene,
    pub metrics: Vec<StepMetrics>,
}

pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        writeln!(out, "{}", m.csv_row()).expect("write to string");
    }
    out
}

/// Paths produced by [`run`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub scene: PathBuf,
    pub metrics: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

/// Snapshot path for the state after `completed` iterations.
pub fn snapshot_path(out_dir: &Path, completed: usize) -> PathBuf {
    out_dir.join(format!("snap_{completed:06}.ppm"))
}

/// Trains and writes the final scene, metrics CSV and snapshots into `out_dir`.
pub fn run(config: &TrainConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let trainer = Trainer::new(config.clone())?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let canonical = config.canonical_camera();
    let mut snapshots = Vec::new();
    let outcome = trainer.train(|scene, m| {
        let completed = m.iter + 1;
        if config.snapshot_every > 0 && completed % config.snapshot_every == 0 {
            let path = snapshot_path(out_dir, completed);
            write_ppm(&path, &render(scene, &canonical)?.rgb)?;
            snapshots.push(path);
        }
        Ok(())
    })?;
    let scene_path = out_dir.join(SCENE_FILE);
    write_scene(&scene_path, &outcome.scene)?;
    let metrics_path = out_dir.join(&config.metrics_file);
    fs::write(&metrics_path, metrics_csv(&outcome.metrics)).map_err(|e| Error::io(&metrics_path, e))?;
    Ok(RunArtifacts {
        scene: scene_path,
        metrics: metrics_path,
        snapshots,
    })
}

#[cfg(test)]
mod tests;
