//! Navigation task: drive a unicycle car to a target ball.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::raster::Viewport;
use super::{EnvConfig, Scene};
use crate::image::{Image, Rgb};

pub const GROUND_COLOR: Rgb = [0.20, 0.45, 0.20];
pub const TARGET_COLOR: Rgb = [0.95, 0.15, 0.15];
pub const CAR_COLOR: Rgb = [0.15, 0.30, 0.95];
pub const NOSE_COLOR: Rgb = [1.0, 0.90, 0.20];
pub(crate) const CAR_HALF: f64 = 0.07;
const NOSE_OFFSET: f64 = 0.10;
const NOSE_HALF: f64 = 0.04;

pub(crate) fn place(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> Scene {
    let e = cfg.arena_half_extent;
    let min_dist = cfg.target_min_fraction * 2.0 * e;
    let m = e - cfg.target_radius;
    let target = loop {
        let t = [rng.random_range(-m..=m), rng.random_range(-m..=m)];
        if t[0].hypot(t[1]) >= min_dist {
            break t;
        }
    };
    Scene::Racer {
        car: [0.0, 0.0],
        heading: 0.0,
        target,
    }
}

pub(crate) fn distance(car: [f64; 2], target: [f64; 2]) -> f64 {
    (car[0] - target[0]).hypot(car[1] - target[1])
}

/// Unicycle update; returns `(reward, success)`.
pub(crate) fn advance(
    cfg: &EnvConfig,
    car: &mut [f64; 2],
    heading: &mut f64,
    target: [f64; 2],
    action: &[f64],
) -> (f64, bool) {
    let e = cfg.arena_half_extent;
    let before = distance(*car, target);
    let v = action[0] * cfg.velocity_scale;
    let omega = action[1] * cfg.angular_scale;
    car[0] = (car[0] + v * heading.cos() * cfg.dt).clamp(-e, e);
    car[1] = (car[1] + v * heading.sin() * cfg.dt).clamp(-e, e);
    *heading += omega * cfg.dt;
    let after = distance(*car, target);
    let mut reward = (before - after) / cfg.step_scale;
    let success = after < cfg.target_radius;
    if success {
        reward += cfg.success_bonus;
    }
    (reward, success)
}

pub(crate) fn render(cfg: &EnvConfig, car: Option<([f64; 2], f64)>, target: Option<[f64; 2]>) -> Image {
    let [h, w, _] = cfg.obs_shape;
    let vp = Viewport {
        extent: cfg.arena_half_extent,
        height: h,
        width: w,
    };
    let mut img = Image::filled(h, w, GROUND_COLOR);
    if let Some(t) = target {
        vp.fill_disc(&mut img, t, cfg.target_radius, TARGET_COLOR);
    }
    if let Some((c, heading)) = car {
        vp.fill_rect(&mut img, c, [CAR_HALF, CAR_HALF], CAR_COLOR);
        let nose = [c[0] + NOSE_OFFSET * heading.cos(), c[1] + NOSE_OFFSET * heading.sin()];
        vp.fill_rect(&mut img, nose, [NOSE_HALF, NOSE_HALF], NOSE_COLOR);
    }
    img
}
