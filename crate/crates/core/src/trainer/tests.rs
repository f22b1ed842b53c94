use super::*;
use crate::rewards::{RewardKind, RewardSpec};

fn small(iterations: usize) -> TrainConfig {
    let mut c = TrainConfig {
        iterations,
        ..TrainConfig::default()
    };
    c.camera.width = 16;
    c.camera.height = 16;
    c.camera.scale = 1.0 / 8.0;
    c.init.n_gaussians = 8;
    c
}

#[test]
fn degenerate_camera_ranges() {
    let mut c = small(1);
    c.camera.azimuth_min = 1.25;
    c.camera.azimuth_max = 1.25;
    c.camera.elevation_min = -0.5;
    c.camera.elevation_max = -0.5;
    let cam = sample_camera(&mut substream(3, 0, Term::Camera), &c);
    assert_eq!(cam, Camera::new(1.25, -0.5, 16, 16, 1.0 / 8.0));
}

#[test]
fn camera_sequence_is_seeded() {
    let t1 = Trainer::new(small(1)).unwrap();
    let t2 = Trainer::new(small(1)).unwrap();
    for i in 0..20 {
        assert_eq!(t1.camera_for(i), t2.camera_for(i));
    }
    assert_ne!(t1.camera_for(0), t1.camera_for(1));
}

#[test]
fn azimuth_mean_is_pi() {
    let c = TrainConfig::default();
    let mut rng = substream(11, 0, Term::Camera);
    let n = 10_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let cam = sample_camera(&mut rng, &c);
        assert!((0.0..std::f64::consts::TAU).contains(&cam.azimuth));
        assert!(cam.elevation.abs() <= std::f64::consts::FRAC_PI_6);
        sum += cam.azimuth;
    }
    let se = std::f64::consts::TAU / 12f64.sqrt() / (n as f64).sqrt();
    assert!((sum / n as f64 - std::f64::consts::PI).abs() < 3.0 * se);
}

#[test]
fn scalar_adam_matches_reference() {
    // reference values from an independent float64 script
    let expected = [-0.09999999900000002, -0.19999999799999935, -0.29999999699999935];
    let (mut theta, mut m, mut v) = (0.0, 0.0, 0.0);
    for (s, want) in expected.iter().enumerate() {
        theta = adam_scalar(theta, 1.0, &mut m, &mut v, s as u64 + 1, 0.1, 0.9, 0.999, 1e-8);
        assert!((theta - want).abs() < 1e-15, "step {}: {theta}", s + 1);
    }
    assert!((expected[0] - -0.1 / (1.0 + 1e-8)).abs() < 1e-15);
}

#[test]
fn zero_weight_guidance_leaves_scene_unchanged() {
    let mut c = small(3);
    c.sds.enabled = false;
    c.guidance = vec![RewardSpec::new(RewardKind::AesProxy, 0.0)];
    let trainer = Trainer::new(c).unwrap();
    let mut scene = init_scene(&trainer.config);
    let before = scene.clone();
    let mut optim = OptimState::new(scene.len());
    let mut baseline = Baseline::default();
    for iter in 0..3 {
        trainer.step(&mut scene, &mut optim, &mut baseline, iter).unwrap();
    }
    assert_eq!(scene, before);
    assert_eq!(optim.step, 3);
    assert!(optim.m.iter().chain(&optim.v).all(|r| r.iter().all(|&x| x == 0.0)));
}

#[test]
fn init_scene_shape() {
    let c = small(0);
    let s = init_scene(&c);
    assert_eq!(s.len(), 8);
    assert_eq!(s, init_scene(&c));
    for g in &s.gaussians {
        let n: f64 = g.rotation.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(g.color.iter().all(|c| (0.0..1.0).contains(c)));
        assert_eq!(g.opacity_logit, -2.0);
        assert_eq!(g.log_scale, [0.05f64.ln(); 3]);
    }
}

#[test]
fn terms_are_additive() {
    let mut both = small(1);
    both.guidance = vec![RewardSpec::new(RewardKind::AesProxy, 10.0)];
    both.pg.enabled = true;
    let mut sds_only = both.clone();
    sds_only.guidance.clear();
    sds_only.pg.enabled = false;
    let mut guidance_only = both.clone();
    guidance_only.sds.enabled = false;
    guidance_only.pg.enabled = false;
    let mut pg_only = both.clone();
    pg_only.sds.enabled = false;
    pg_only.guidance.clear();

    let scene = init_scene(&both);
    let baseline = Baseline::default();
    let iter = 5;
    let terms = |c: &TrainConfig| {
        let t = Trainer::new(c.clone()).unwrap();
        let cam = t.camera_for(iter);
        let image = render(&scene, &cam).unwrap();
        t.term_gradients(&scene, &baseline, iter, &cam, &image).unwrap()
    };
    let all = terms(&both);
    let mut sum = terms(&sds_only).total(scene.len());
    sum.add_assign(&terms(&guidance_only).total(scene.len()));
    sum.add_assign(&terms(&pg_only).total(scene.len()));
    assert_eq!(all.total(scene.len()), sum);
}

#[test]
fn sds_norm_is_zero_after_stop() {
    let mut c = small(6);
    c.sds.stop_after = Some(3);
    c.guidance = vec![RewardSpec::new(RewardKind::AesProxy, 1.0)];
    let out = Trainer::new(c).unwrap().train(|_, _| Ok(())).unwrap();
    for m in &out.metrics {
        if m.iter >= 3 {
            assert_eq!(m.sds_norm, 0.0);
        } else {
            assert!(m.sds_norm > 0.0);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let mut c = small(5);
    c.pg.enabled = true;
    let a = Trainer::new(c.clone()).unwrap().train(|_, _| Ok(())).unwrap();
    let b = Trainer::new(c).unwrap().train(|_, _| Ok(())).unwrap();
    assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
    assert_eq!(a.scene, b.scene);
    assert!(a.metrics.iter().all(|m| m.ms_total == 0.0));
}

#[test]
fn baseline_tracks_pg_reward() {
    let mut c = small(3);
    c.sds.enabled = false;
    c.pg.enabled = true;
    let out = Trainer::new(c).unwrap().train(|_, _| Ok(())).unwrap();
    assert_eq!(out.metrics[0].baseline, out.metrics[0].reward_raw);
    assert!(out.metrics.iter().all(|m| m.reward_raw < 0.0));
}

#[test]
fn non_finite_gradient_names_term() {
    let mut c = small(1);
    c.sds.enabled = false;
    c.guidance = vec![RewardSpec::new(RewardKind::AesProxy, 1.0)];
    let mut trainer = Trainer::new(c).unwrap();
    trainer.config.guidance[0].weight = f64::INFINITY;
    let err = trainer.train(|_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient { term: "guidance", iter: 0 }), "{err}");
}

#[test]
fn zero_iterations_writes_initial_scene() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(0);
    let art = run(&c, dir.path()).unwrap();
    let scene = crate::renderer::io::read_scene(&art.scene).unwrap();
    assert_eq!(scene, init_scene(&c));
    assert_eq!(fs::read_to_string(&art.metrics).unwrap(), format!("{METRICS_HEADER}\n"));
    assert!(art.snapshots.is_empty());
}

#[test]
fn snapshots_are_named_by_completed_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(4);
    c.snapshot_every = 2;
    let art = run(&c, dir.path()).unwrap();
    let names: Vec<String> = art.snapshots.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["snap_000002.ppm", "snap_000004.ppm"]);
    assert!(art.snapshots.iter().all(|p| p.exists()));
    let csv = fs::read_to_string(&art.metrics).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().next().unwrap(), METRICS_HEADER);
}

#[test]
fn config_round_trip_and_strictness() {
    let mut c = small(10);
    c.guidance = vec![RewardSpec::new(RewardKind::AesProxy, 10.0)];
    c.sds.stop_after = Some(4);
    let text = c.to_json();
    assert_eq!(TrainConfig::from_json(&text).unwrap(), c);
    assert_eq!(TrainConfig::from_json("{}").unwrap(), TrainConfig::default());

    let err = TrainConfig::from_json("{\n  \"iterations\": 3,\n  \"itrations\": 4\n}").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("itrations") && msg.contains("line 3"), "{msg}");
    let nested = TrainConfig::from_json(r#"{"sds": {"enable": true}}"#).unwrap_err();
    assert!(nested.to_string().contains("enable"));
}

#[test]
fn config_validation() {
    let bad = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = small(10);
        f(&mut c);
        c.validate().is_err()
    };
    assert!(bad(&|c| c.sds.enabled = false));
    assert!(bad(&|c| c.sds.stop_after = Some(11)));
    assert!(bad(&|c| c.context = "moon".into()));
    assert!(bad(&|c| c.guidance = vec![RewardSpec::new(RewardKind::Compression, 1.0)]));
    assert!(bad(&|c| c.optimizer.beta1 = 1.0));
    assert!(bad(&|c| c.camera.elevation_max = 2.0));
    assert!(bad(&|c| c.camera.width = 0));
    assert!(bad(&|c| c.pg.t_start = Some(50)));
    assert!(bad(&|c| c.background = [1.5, 0.0, 0.0]));
    assert!(!bad(&|_| ()));
}

#[test]
fn eval_reports_view_spacing() {
    let scene = SplatScene::new(Vec::new(), [0.5; 3]);
    let r = evaluate_views(&scene, 8, 8, 0.25, EVAL_VIEWS).unwrap();
    assert_eq!(r.views, 20);
    assert!((r.azimuth_step - std::f64::consts::TAU / 20.0).abs() < 1e-15);
    assert_eq!(r.mean_aes_proxy, 0.0);
    assert!(r.mean_compression_reward < 0.0);
}
