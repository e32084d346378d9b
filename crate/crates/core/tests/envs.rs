use pixelpolicy::envs::{
    random_policy_baseline, EnvConfig, EnvState, Scene, TrayObject, BASELINE_EPISODES, BASELINE_SEED, CAR_COLOR,
    GRASP_RANDOM_BASELINE, GRIPPER_COLOR, GROUND_COLOR, RACER_RANDOM_BASELINE,
};
use pixelpolicy::image::{Image, Rgb};
use pixelpolicy::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raw_color(c: Rgb) -> Vec<u8> {
    Image::filled(1, 1, c).raw().to_vec()
}

fn centroid_of(img: &Image, color: Rgb) -> (f64, f64, usize) {
    let want = raw_color(color);
    let (mut r, mut c, mut n) = (0.0, 0.0, 0);
    for row in 0..img.height() {
        for col in 0..img.width() {
            if img.pixel_raw(row, col) == want.as_slice() {
                r += row as f64;
                c += col as f64;
                n += 1;
            }
        }
    }
    (r / n as f64, c / n as f64, n)
}

#[test]
fn observation_shapes_match_env_contracts() {
    let (_, g) = EnvConfig::grasp().reset(0);
    let (_, r) = EnvConfig::racer().reset(0);
    assert_eq!(g.shape(), [48, 48, 3]);
    assert_eq!(r.shape(), [40, 40, 3]);
    assert_eq!(EnvConfig::grasp().action_dim, 3);
    assert_eq!(EnvConfig::racer().action_dim, 2);
    assert_eq!(EnvConfig::grasp().max_steps, 20);
    assert_eq!(EnvConfig::racer().max_steps, 100);
    EnvConfig::grasp().validate().unwrap();
    EnvConfig::racer().validate().unwrap();
}

#[test]
fn reset_is_pixel_deterministic() {
    for cfg in [EnvConfig::grasp(), EnvConfig::racer()] {
        for seed in 0..20 {
            let (a, oa) = cfg.reset(seed);
            let (b, ob) = cfg.reset(seed);
            assert_eq!(oa, ob);
            assert_eq!(a.scene, b.scene);
        }
    }
}

#[test]
fn trajectories_are_reproducible() {
    for cfg in [EnvConfig::grasp(), EnvConfig::racer()] {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let (mut s, o) = cfg.reset(3);
            let mut frames = vec![o];
            while !s.done {
                let a: Vec<f64> = (0..cfg.action_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                frames.push(cfg.step(&mut s, &a).unwrap().obs);
            }
            frames
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn grasp_object_counts_are_uniform() {
    let cfg = EnvConfig::grasp();
    let mut counts = [0usize; 5];
    for seed in 0..1000 {
        let (s, _) = cfg.reset(seed);
        let Scene::Grasp { objects, .. } = &s.scene else {
            panic!()
        };
        assert!((1..=5).contains(&objects.len()));
        for (i, a) in objects.iter().enumerate() {
            assert!(a.distance_to([0.0, 0.0]) >= cfg.start_clearance);
            for b in &objects[i + 1..] {
                let sep_x = (a.center[0] - b.center[0]).abs() >= a.half[0] + b.half[0];
                let sep_y = (a.center[1] - b.center[1]).abs() >= a.half[1] + b.half[1];
                assert!(sep_x || sep_y, "objects overlap");
            }
        }
        counts[objects.len() - 1] += 1;
    }
    // Each bucket within 5 percentage points of 20%.
    for c in counts {
        assert!((c as f64 / 1000.0 - 0.2).abs() <= 0.05, "{counts:?}");
    }
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - 200.0).powi(2) / 200.0).sum();
    // 99.9% quantile of chi-square with 4 dof.
    assert!(chi2 < 18.47, "chi2 {chi2}");
}

#[test]
fn grasp_success_by_construction() {
    let cfg = EnvConfig::grasp();
    let (mut s, _) = cfg.reset(1);
    let obj = TrayObject {
        center: [0.5, 0.5],
        half: [0.15, 0.15],
        color: [0.9, 0.2, 0.2],
    };
    s.scene = Scene::Grasp {
        gripper: [0.5, 0.5],
        objects: vec![obj],
    };
    let r = cfg.step(&mut s, &[0.0, 0.0, 1.0]).unwrap();
    assert_eq!(r.reward, 1.0);
    assert!(r.done && r.info.success);
    assert!(matches!(cfg.step(&mut s, &[0.0, 0.0, 0.0]), Err(Error::Usage(_))));
}

#[test]
fn grasp_open_gripper_or_miss_pays_nothing() {
    let cfg = EnvConfig::grasp();
    let (mut s, _) = cfg.reset(1);
    let obj = TrayObject {
        center: [0.5, 0.5],
        half: [0.15, 0.15],
        color: [0.9, 0.2, 0.2],
    };
    s.scene = Scene::Grasp {
        gripper: [0.5, 0.5],
        objects: vec![obj],
    };
    let r = cfg.step(&mut s, &[0.0, 0.0, 0.4]).unwrap();
    assert_eq!(r.reward, 0.0);
    assert!(!r.done);
    s.scene = Scene::Grasp {
        gripper: [-0.5, -0.5],
        objects: vec![],
    };
    assert_eq!(cfg.step(&mut s, &[0.0, 0.0, 1.0]).unwrap().reward, 0.0);
}

#[test]
fn action_is_clipped() {
    let cfg = EnvConfig::grasp();
    let (mut a, _) = cfg.reset(4);
    let mut b = a.clone();
    let ra = cfg.step(&mut a, &[7.0, -3.0, 0.0]).unwrap();
    let rb = cfg.step(&mut b, &[1.0, -1.0, 0.0]).unwrap();
    assert_eq!(ra.obs, rb.obs);
    assert_eq!(a.scene, b.scene);
    assert!(matches!(cfg.step(&mut a, &[0.0]), Err(Error::Shape(_))));
}

#[test]
fn racer_null_action_keeps_pose() {
    let cfg = EnvConfig::racer();
    let (mut s, o) = cfg.reset(5);
    let before = s.scene.clone();
    let r = cfg.step(&mut s, &[0.0, 0.0]).unwrap();
    assert_eq!(r.reward, 0.0);
    assert_eq!(s.scene, before);
    assert_eq!(r.obs, o);
}

#[test]
fn racer_straight_drive_reward_closed_form() {
    let cfg = EnvConfig::racer();
    let (mut s, _) = cfg.reset(0);
    s.scene = Scene::Racer {
        car: [-0.6, 0.2],
        heading: 0.0,
        target: [0.7, 0.2],
    };
    let expected = cfg.dt * cfg.velocity_scale / cfg.step_scale;
    let r = cfg.step(&mut s, &[1.0, 0.0]).unwrap();
    assert!(expected > 0.0);
    assert!((r.reward - expected).abs() < 1e-12, "{} vs {expected}", r.reward);
    // Diagonal heading: same gain when aimed at the target.
    s.scene = Scene::Racer {
        car: [0.0, 0.0],
        heading: std::f64::consts::FRAC_PI_4,
        target: [0.6, 0.6],
    };
    s.done = false;
    let r = cfg.step(&mut s, &[1.0, 0.0]).unwrap();
    assert!((r.reward - expected).abs() < 1e-12);
}

#[test]
fn racer_arrival_pays_bonus_and_ends() {
    let cfg = EnvConfig::racer();
    let (mut s, _) = cfg.reset(0);
    s.scene = Scene::Racer {
        car: [0.0, 0.0],
        heading: 0.0,
        target: [0.15, 0.0],
    };
    let r = cfg.step(&mut s, &[1.0, 0.0]).unwrap();
    assert!(r.done && r.info.success);
    assert!((r.reward - (1.0 + cfg.success_bonus)).abs() < 1e-12);
}

#[test]
fn racer_targets_are_far_enough() {
    let cfg = EnvConfig::racer();
    for seed in 0..500 {
        let (s, _) = cfg.reset(seed);
        let Scene::Racer { car, heading, target } = s.scene else {
            panic!()
        };
        assert_eq!((car, heading), ([0.0, 0.0], 0.0));
        assert!(target[0].hypot(target[1]) >= 0.3 * 2.0 * cfg.arena_half_extent);
        assert!(target[0].abs() <= 1.0 && target[1].abs() <= 1.0);
    }
}

#[test]
fn racer_reward_telescopes() {
    let cfg = EnvConfig::racer();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..30 {
        let (mut s, _) = cfg.reset(seed);
        let Scene::Racer { car, target, .. } = s.scene else {
            panic!()
        };
        let d0 = (car[0] - target[0]).hypot(car[1] - target[1]);
        let mut total = 0.0;
        let mut last = None;
        while !s.done {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let r = cfg.step(&mut s, &a).unwrap();
            total += r.reward;
            last = Some(r.info);
        }
        let info = last.unwrap();
        let bonus = if info.success { cfg.success_bonus } else { 0.0 };
        let expected = (d0 - info.distance) / cfg.step_scale + bonus;
        assert!((total - expected).abs() < 1e-10, "{total} vs {expected}");
    }
}

#[test]
fn episode_length_is_bounded() {
    for cfg in [EnvConfig::grasp(), EnvConfig::racer()] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..40 {
            let (mut s, _) = cfg.reset(seed);
            let mut n = 0;
            while !s.done {
                let a: Vec<f64> = (0..cfg.action_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = cfg.step(&mut s, &a).unwrap();
                n += 1;
                assert!(r.obs.values().all(|v| (0.0..=1.0).contains(&v)));
            }
            assert!(n <= cfg.max_steps);
            assert!(s.step <= cfg.max_steps);
        }
    }
}

#[test]
fn render_empty_is_uniform() {
    for cfg in [EnvConfig::grasp(), EnvConfig::racer()] {
        let img = cfg.render_empty();
        let first = img.pixel_raw(0, 0).to_vec();
        for row in 0..img.height() {
            for col in 0..img.width() {
                assert_eq!(img.pixel_raw(row, col), first.as_slice());
            }
        }
    }
}

#[test]
fn car_blob_shifts_proportionally() {
    let cfg = EnvConfig::racer();
    let px_per_unit = cfg.obs_shape[1] as f64 / (2.0 * cfg.arena_half_extent);
    let state = |x: f64| EnvState {
        scene: Scene::Racer {
            car: [x, -0.3],
            heading: -std::f64::consts::FRAC_PI_2,
            target: [0.0, 0.8],
        },
        ..cfg.reset(0).0
    };
    for (x0, dx) in [(-0.6, 1.0), (-0.55, 1.0), (-0.4, 0.5)] {
        let (r0, c0, n0) = centroid_of(&cfg.render(&state(x0)), CAR_COLOR);
        let (r1, c1, n1) = centroid_of(&cfg.render(&state(x0 + dx)), CAR_COLOR);
        assert!(n0 > 0 && n1 > 0);
        assert!((c1 - c0 - dx * px_per_unit).abs() <= 1.0, "{c0} -> {c1}");
        assert!((r1 - r0).abs() <= 1.0);
    }
    let _ = GROUND_COLOR;
}

#[test]
fn gripper_is_drawn_over_objects() {
    let cfg = EnvConfig::grasp();
    let (mut s, _) = cfg.reset(0);
    let obj = TrayObject {
        center: [0.0, 0.0],
        half: [0.3, 0.3],
        color: [0.2, 0.75, 0.25],
    };
    s.scene = Scene::Grasp {
        gripper: [0.0, 0.0],
        objects: vec![obj],
    };
    let img = cfg.render(&s);
    let (r, c, n) = centroid_of(&img, GRIPPER_COLOR);
    assert!(n > 0);
    assert!((r - 23.5).abs() <= 1.0 && (c - 23.5).abs() <= 1.0);
    assert_eq!(img.pixel_raw(24, 24), raw_color(GRIPPER_COLOR).as_slice());
}

#[test]
fn state_round_trips_through_values() {
    for cfg in [EnvConfig::grasp(), EnvConfig::racer()] {
        let (mut s, _) = cfg.reset(17);
        cfg.step(&mut s, &vec![0.3; cfg.action_dim]).unwrap();
        let back = EnvState::from_values(&s.to_values()).unwrap();
        assert_eq!(back.scene, s.scene);
        assert_eq!((back.step, back.done), (s.step, s.done));
        assert_eq!(back.rng, s.rng);
    }
}

#[test]
fn grasp_baseline_in_reward_bounds() {
    let b = random_policy_baseline(&EnvConfig::grasp(), 200, 0).unwrap();
    assert!((0.0..=1.0).contains(&b.mean));
    assert!(random_policy_baseline(&EnvConfig::grasp(), 0, 0).is_err());
}

#[test]
fn racer_baseline_reproducible_and_frozen() {
    let cfg = EnvConfig::racer();
    let a = random_policy_baseline(&cfg, 200, 0).unwrap();
    let b = random_policy_baseline(&cfg, 200, 0).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    let frozen = random_policy_baseline(&cfg, BASELINE_EPISODES, BASELINE_SEED).unwrap();
    assert!((frozen.mean - RACER_RANDOM_BASELINE).abs() < 1e-9, "{frozen:?}");
    let grasp = random_policy_baseline(&EnvConfig::grasp(), BASELINE_EPISODES, BASELINE_SEED).unwrap();
    assert!((grasp.mean - GRASP_RANDOM_BASELINE).abs() < 1e-9, "{grasp:?}");
}
