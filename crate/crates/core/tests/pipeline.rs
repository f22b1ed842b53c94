use rand::Rng;
use splatpg::critic::{Context, NoiseSchedule};
use splatpg::gradcheck::{check_renderer_case, random_camera, random_scene, renderer_groups, smooth_case, REL_TOL};
use splatpg::renderer::{render, Image, ImageCotangent};
use splatpg::rng::{normal_vec, seeded};
use splatpg::sds::{sds_param_grad, sds_pixel_grad, SdsConfig};
use splatpg::trainer::{TrainConfig, Trainer};
use splatpg::Buffer;

#[test]
fn sds_scene_gradient_matches_surrogate_finite_differences() {
    let schedule = NoiseSchedule::default();
    let cfg = SdsConfig::default();
    let mut rng = seeded(8);
    let mut checked = 0;
    while checked < 4 {
        let scene = random_scene(&mut rng, 6);
        let camera = random_camera(&mut rng, 24);
        if !smooth_case(&scene, &camera, 1e-3).unwrap() {
            continue;
        }
        let ctx = Context::named("disc", 24, 24, 0.05).unwrap();
        let t = rng.random_range(1..49);
        let eps = Buffer::from_vec(24, 24, 3, normal_vec(&mut rng, 24 * 24 * 3)).unwrap();
        let image = render(&scene, &camera).unwrap();
        // surrogate <stopgrad(residual), render(theta)>: its gradient is the
        // VJP of the frozen residual
        let residual = sds_pixel_grad(&image, &ctx, t, &eps, &schedule, &cfg).unwrap();
        let mut groups = renderer_groups();
        check_renderer_case(&scene, &camera, &residual, 1e-5, false, &mut groups).unwrap();
        for g in &groups {
            assert!(g.worst <= REL_TOL, "{}: {}", g.name, g.worst);
        }
        let direct = sds_param_grad(&scene, &camera, &ctx, t, &eps, &schedule, &cfg).unwrap();
        let via_vjp = splatpg::renderer::render_vjp(&scene, &camera, &residual).unwrap();
        assert_eq!(direct, via_vjp);
        checked += 1;
    }
}

#[test]
fn sds_expectation_points_toward_target() {
    let schedule = NoiseSchedule::default();
    let cfg = SdsConfig::default();
    let ctx = Context::named("checker", 8, 8, 0.0).unwrap();
    let mut rng = seeded(12);
    let rgb = Buffer::from_vec(8, 8, 3, (0..192).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let image = Image {
        width: 8,
        height: 8,
        rgb: rgb.clone(),
        alpha: Buffer::filled(8, 8, 1, 1.0),
    };
    let mut mean = Buffer::zeros(8, 8, 3);
    let draws = 10_000;
    for _ in 0..draws {
        let t = cfg.sample_t(&mut rng, schedule.steps());
        let eps = Buffer::from_vec(8, 8, 3, normal_vec(&mut rng, 192)).unwrap();
        let ImageCotangent { rgb: g, .. } = sds_pixel_grad(&image, &ctx, t, &eps, &schedule, &cfg).unwrap();
        mean.add_assign(&g);
    }
    mean.scale(1.0 / draws as f64);
    let mut diff = rgb.clone();
    diff.add_assign(&ctx.target.map(|v| -v));
    let cos = mean.dot(&diff) / (mean.norm() * diff.norm());
    assert!(cos > 0.0, "cos {cos}");
}

#[test]
fn pg_only_compression_run_improves_its_reward() {
    let mut c = TrainConfig::default();
    c.sds.enabled = false;
    c.pg.enabled = true;
    let out = Trainer::new(c).unwrap().train(|_, _| Ok(())).unwrap();
    let mean = |m: &[splatpg::trainer::StepMetrics]| m.iter().map(|s| s.compression_reward).sum::<f64>() / m.len() as f64;
    let n = out.metrics.len();
    let (first, last) = (mean(&out.metrics[..100]), mean(&out.metrics[n - 100..]));
    assert!(last > first, "first {first} last {last}");
}
