//! Central finite-difference checks for the renderer, reward and critic
//! derivatives, grouped by parameter kind.

use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;

use crate::buffer::Buffer;
use crate::critic::{ddpm_step, logprob_grad_wrt_zt, predict_eps, transition_log_prob, Context, MixtureComponent, NoiseSchedule};
use crate::error::Result;
use crate::renderer::{
    cull_margin, project, render, render_vjp, Camera, Gaussian3D, ImageCotangent, ParamGroup, SplatScene, PARAMS_PER_GAUSSIAN,
};
use crate::rewards::{aes_proxy, aes_proxy_grad, brightness, brightness_grad};
use crate::rng::{normal_vec, seeded, substream, Term};

pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-8;

/// Relative error with the denominator floored at `ABS_TOL / REL_TOL`, so a
/// value `<= REL_TOL` means "within REL_TOL relative or ABS_TOL absolute".
pub fn rel_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(ABS_TOL / REL_TOL)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupStat {
    pub name: String,
    pub checked: usize,
    pub worst: f64,
}

impl GroupStat {
    pub fn new(name: impl Into<String>) -> Self {
        GroupStat {
            name: name.into(),
            checked: 0,
            worst: 0.0,
        }
    }

    pub fn record(&mut self, analytic: f64, fd: f64) {
        self.checked += 1;
        let e = rel_error(analytic, fd);
        if e > self.worst || e.is_nan() {
            self.worst = e;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub cases: usize,
    pub groups: Vec<GroupStat>,
}

impl SuiteReport {
    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.worst).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.worst <= REL_TOL)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {} ({} cases)", self.suite, self.cases)?;
        for g in &self.groups {
            writeln!(f, "  {:<24} worst {:.3e}  checked {}", g.name, g.worst, g.checked)?;
        }
        write!(
            f,
            "  max {:.3e} -> {}",
            self.worst(),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub seed: u64,
    /// Image side length in pixels.
    pub size: usize,
    pub renderer_cases: usize,
    /// Scales every analytic gradient by `1 + 1e-2` (negative control).
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            seed: 0,
            size: 16,
            renderer_cases: 5,
            corrupt: false,
        }
    }
}

fn tamper(v: f64, corrupt: bool) -> f64 {
    if corrupt {
        v * (1.0 + 1e-2) + 1e-6
    } else {
        v
    }
}

fn random_buffer(rng: &mut impl Rng, w: usize, h: usize, c: usize, lo: f64, hi: f64) -> Buffer {
    Buffer {
        width: w,
        height: h,
        channels: c,
        data: (0..w * h * c).map(|_| rng.random_range(lo..hi)).collect(),
    }
}

/// Random scene of `n` Gaussians within about 0.35 world units of the origin,
/// with colors, background and opacities kept away from their clamps.
pub fn random_scene(rng: &mut impl Rng, n: usize) -> SplatScene {
    let gaussians = (0..n)
        .map(|_| Gaussian3D {
            position: std::array::from_fn(|_| rng.random_range(-0.35..0.35)),
            log_scale: std::array::from_fn(|_| rng.random_range(-3.0..-2.0)),
            rotation: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            color: std::array::from_fn(|_| rng.random_range(0.05..0.95)),
            opacity_logit: rng.random_range(-2.5..2.5),
        })
        .collect();
    SplatScene::new(gaussians, std::array::from_fn(|_| rng.random_range(0.1..0.9)))
}

/// Camera on a random orbit point framing `[-1, 1]^2` world units.
pub fn random_camera(rng: &mut impl Rng, size: usize) -> Camera {
    Camera::new(
        rng.random_range(0.0..TAU),
        rng.random_range(-0.5..0.5),
        size,
        size,
        2.0 / size as f64,
    )
}

/// Whether finite differences of step `h` are valid for this view: no
/// pixel center within `margin` of a cull boundary and no pair of depths
/// within `margin` of swapping order.
pub fn smooth_case(scene: &SplatScene, camera: &Camera, margin: f64) -> Result<bool> {
    let splats = project(scene, camera)?;
    if cull_margin(&splats, camera) < margin {
        return Ok(false);
    }
    let mut depths: Vec<f64> = splats.iter().map(|s| s.depth).collect();
    depths.sort_by(f64::total_cmp);
    Ok(depths.windows(2).all(|w| w[1] - w[0] > margin))
}

fn render_dot(scene: &SplatScene, camera: &Camera, cot: &ImageCotangent, reference: &crate::renderer::Image) -> Result<f64> {
    // pixelwise difference to a common reference keeps cancellation exact
    // where the perturbation has no effect
    let img = render(scene, camera)?;
    let mut acc = 0.0;
    for ((c, a), b) in cot.rgb.data.iter().zip(&img.rgb.data).zip(&reference.rgb.data) {
        acc += c * (a - b);
    }
    if let Some(alpha) = &cot.alpha {
        for ((c, a), b) in alpha.data.iter().zip(&img.alpha.data).zip(&reference.alpha.data) {
            acc += c * (a - b);
        }
    }
    Ok(acc)
}

/// Checks `render_vjp` against central differences for every parameter of one
/// case, recording into `groups` (five parameter groups, then background).
pub fn check_renderer_case(
    scene: &SplatScene,
    camera: &Camera,
    cot: &ImageCotangent,
    h: f64,
    corrupt: bool,
    groups: &mut [GroupStat],
) -> Result<()> {
    let grad = render_vjp(scene, camera, cot)?;
    let reference = render(scene, camera)?;
    for gi in 0..scene.len() {
        let analytic = grad.gaussians[gi].to_params();
        for k in 0..PARAMS_PER_GAUSSIAN {
            let shifted = |d: f64| {
                let mut s = scene.clone();
                let mut p = s.gaussians[gi].to_params();
                p[k] += d;
                s.gaussians[gi] = Gaussian3D::from_params(&p);
                s
            };
            let fd = (render_dot(&shifted(h), camera, cot, &reference)? - render_dot(&shifted(-h), camera, cot, &reference)?)
                / (2.0 * h);
            let group = ParamGroup::ALL.iter().position(|&g| g == ParamGroup::of_param(k)).expect("known group");
            groups[group].record(tamper(analytic[k], corrupt), fd);
        }
    }
    for c in 0..3 {
        let shifted = |d: f64| {
            let mut s = scene.clone();
            s.background[c] += d;
            s
        };
        let fd = (render_dot(&shifted(h), camera, cot, &reference)? - render_dot(&shifted(-h), camera, cot, &reference)?)
            / (2.0 * h);
        groups[ParamGroup::ALL.len()].record(tamper(grad.background[c], corrupt), fd);
    }
    Ok(())
}

pub fn renderer_groups() -> Vec<GroupStat> {
    ParamGroup::ALL
        .iter()
        .map(|g| GroupStat::new(g.name()))
        .chain(std::iter::once(GroupStat::new("background")))
        .collect()
}

/// `cases` random scenes of 1 to 10 Gaussians with random RGB and alpha
/// cotangents. Cases too close to a discontinuity are redrawn.
pub fn renderer_suite(opts: &GradCheckOptions) -> Result<SuiteReport> {
    let mut rng = substream(opts.seed, 0, Term::Init);
    let mut groups = renderer_groups();
    let mut done = 0;
    while done < opts.renderer_cases {
        let n = rng.random_range(1..=10);
        let scene = random_scene(&mut rng, n);
        let camera = random_camera(&mut rng, opts.size);
        let cot = ImageCotangent {
            rgb: random_buffer(&mut rng, opts.size, opts.size, 3, -1.0, 1.0),
            alpha: Some(random_buffer(&mut rng, opts.size, opts.size, 1, -1.0, 1.0)),
        };
        if !smooth_case(&scene, &camera, 1e-3)? {
            continue;
        }
        check_renderer_case(&scene, &camera, &cot, 1e-5, opts.corrupt, &mut groups)?;
        done += 1;
    }
    Ok(SuiteReport {
        suite: "renderer",
        cases: done,
        groups,
    })
}

/// Aesthetic proxy and brightness gradients on random images.
pub fn rewards_suite(opts: &GradCheckOptions) -> Result<SuiteReport> {
    let mut rng = substream(opts.seed, 1, Term::Init);
    let image = random_buffer(&mut rng, opts.size, opts.size, 3, 0.05, 0.95);
    let h = 1e-6;
    let mut groups = Vec::new();
    type Pair = (fn(&Buffer) -> f64, fn(&Buffer) -> Buffer);
    let rewards: [(&str, Pair); 2] = [("aes_proxy", (aes_proxy, aes_proxy_grad)), ("brightness", (brightness, brightness_grad))];
    for (name, (f, grad)) in rewards {
        let analytic = grad(&image);
        let mut stat = GroupStat::new(name);
        for i in 0..image.len() {
            let mut p = image.clone();
            p.data[i] += h;
            let mut m = image.clone();
            m.data[i] -= h;
            stat.record(tamper(analytic.data[i], opts.corrupt), (f(&p) - f(&m)) / (2.0 * h));
        }
        groups.push(stat);
    }
    Ok(SuiteReport {
        suite: "rewards",
        cases: 1,
        groups,
    })
}

fn step_mean(z: &Buffer, t: usize, context: &Context, schedule: &NoiseSchedule) -> Result<Buffer> {
    let eps = predict_eps(z, t, context, schedule)?.eps;
    let coef = schedule.beta[t] / (1.0 - schedule.alpha_bar[t]).sqrt();
    let k = 1.0 / schedule.alpha[t].sqrt();
    Ok(Buffer {
        data: z.data.iter().zip(&eps.data).map(|(zv, e)| k * (zv - coef * e)).collect(),
        ..*z
    })
}

/// Critic derivatives: the noise-prediction VJP and the step log-density
/// gradient, for a single-target and a two-component context.
pub fn critic_suite(opts: &GradCheckOptions) -> Result<SuiteReport> {
    let mut rng = substream(opts.seed, 2, Term::Init);
    let schedule = NoiseSchedule::default();
    let s = opts.size;
    let single = Context::single("single", random_buffer(&mut rng, s, s, 3, 0.0, 1.0), 0.1)?;
    let mixture = Context::mixture(
        "mixture",
        vec![
            MixtureComponent {
                weight: 0.4,
                target: random_buffer(&mut rng, s, s, 3, 0.0, 1.0),
            },
            MixtureComponent {
                weight: 0.6,
                target: random_buffer(&mut rng, s, s, 3, 0.0, 1.0),
            },
        ],
        0.1,
    )?;
    let h = 1e-6;
    let mut groups = Vec::new();
    for ctx in [&single, &mixture] {
        let t = rng.random_range(1..schedule.steps());
        let x0 = random_buffer(&mut rng, s, s, 3, 0.0, 1.0);
        let noise = Buffer::from_vec(s, s, 3, normal_vec(&mut rng, 3 * s * s))?;
        let z = crate::critic::add_noise(&x0, t, &noise, &schedule)?;

        let u = random_buffer(&mut rng, s, s, 3, -1.0, 1.0);
        let vjp = predict_eps(&z, t, ctx, &schedule)?.jacobian.vjp(&u);
        let mut stat = GroupStat::new(format!("eps_vjp/{}", ctx.id));
        for i in 0..z.len() {
            let shifted = |d: f64| -> Result<f64> {
                let mut zz = z.clone();
                zz.data[i] += d;
                Ok(u.dot(&predict_eps(&zz, t, ctx, &schedule)?.eps))
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            stat.record(tamper(vjp.data[i], opts.corrupt), fd);
        }
        groups.push(stat);

        let step = ddpm_step(&z, t, ctx, &schedule, &mut seeded(opts.seed))?;
        let analytic = logprob_grad_wrt_zt(&step, t, ctx, &schedule)?;
        let mut stat = GroupStat::new(format!("logprob_grad/{}", ctx.id));
        for i in 0..z.len() {
            let shifted = |d: f64| -> Result<f64> {
                let mut zz = z.clone();
                zz.data[i] += d;
                Ok(transition_log_prob(&step.z_prev, &step_mean(&zz, t, ctx, &schedule)?, step.variance))
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            stat.record(tamper(analytic.data[i], opts.corrupt), fd);
        }
        groups.push(stat);
    }
    Ok(SuiteReport {
        suite: "critic",
        cases: 2,
        groups,
    })
}

pub fn run_all(opts: &GradCheckOptions) -> Result<Vec<SuiteReport>> {
    Ok(vec![renderer_suite(opts)?, rewards_suite(opts)?, critic_suite(opts)?])
}
