//! Tray-picking task: move the gripper over an object and close it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::raster::Viewport;
use super::{EnvConfig, Scene};
use crate::image::{Image, Rgb};

pub const TRAY_COLOR: Rgb = [0.35, 0.30, 0.25];
pub const GRIPPER_COLOR: Rgb = [1.0, 1.0, 1.0];
const OBJECT_PALETTE: [Rgb; 6] = [
    [0.90, 0.20, 0.20],
    [0.20, 0.75, 0.25],
    [0.25, 0.40, 0.95],
    [0.95, 0.80, 0.15],
    [0.70, 0.30, 0.85],
    [0.10, 0.80, 0.80],
];
const PLACEMENT_ATTEMPTS: usize = 10_000;
const OBJECT_GAP: f64 = 0.04;

/// Axis-aligned rectangular object lying in the tray.
#[derive(Debug, Clone, PartialEq)]
pub struct TrayObject {
    pub center: [f64; 2],
    pub half: [f64; 2],
    pub color: Rgb,
}

impl TrayObject {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).abs() <= self.half[0] && (p[1] - self.center[1]).abs() <= self.half[1]
    }

    fn overlaps(&self, other: &TrayObject, gap: f64) -> bool {
        (self.center[0] - other.center[0]).abs() < self.half[0] + other.half[0] + gap
            && (self.center[1] - other.center[1]).abs() < self.half[1] + other.half[1] + gap
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = ((p[0] - self.center[0]).abs() - self.half[0]).max(0.0);
        let dy = ((p[1] - self.center[1]).abs() - self.half[1]).max(0.0);
        dx.hypot(dy)
    }
}

pub(crate) fn place(cfg: &EnvConfig, rng: &mut ChaCha8Rng) -> Scene {
    let (lo, hi) = cfg.object_count_range;
    let count = rng.random_range(lo..=hi);
    let start = [0.0, 0.0];
    let mut objects: Vec<TrayObject> = Vec::with_capacity(count);
    let mut attempts = 0;
    while objects.len() < count && attempts < PLACEMENT_ATTEMPTS {
        attempts += 1;
        let half = [
            rng.random_range(cfg.object_half_size.0..=cfg.object_half_size.1),
            rng.random_range(cfg.object_half_size.0..=cfg.object_half_size.1),
        ];
        let e = cfg.arena_half_extent;
        let center = [
            rng.random_range(-e + half[0]..=e - half[0]),
            rng.random_range(-e + half[1]..=e - half[1]),
        ];
        let color = OBJECT_PALETTE[rng.random_range(0..OBJECT_PALETTE.len())];
        let obj = TrayObject { center, half, color };
        if obj.distance_to(start) < cfg.start_clearance {
            continue;
        }
        if objects.iter().any(|o| o.overlaps(&obj, OBJECT_GAP)) {
            continue;
        }
        objects.push(obj);
    }
    Scene::Grasp {
        gripper: start,
        objects,
    }
}

/// Returns `(reward, success)` after applying a clipped action.
pub(crate) fn advance(cfg: &EnvConfig, gripper: &mut [f64; 2], objects: &[TrayObject], action: &[f64]) -> (f64, bool) {
    let e = cfg.arena_half_extent;
    gripper[0] = (gripper[0] + action[0] * cfg.step_scale).clamp(-e, e);
    gripper[1] = (gripper[1] + action[1] * cfg.step_scale).clamp(-e, e);
    let closed = action[2] > 0.5;
    if closed && objects.iter().any(|o| o.contains(*gripper)) {
        (1.0, true)
    } else {
        (0.0, false)
    }
}

pub(crate) fn nearest_distance(gripper: [f64; 2], objects: &[TrayObject]) -> f64 {
    objects
        .iter()
        .map(|o| o.distance_to(gripper))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn render(cfg: &EnvConfig, gripper: Option<[f64; 2]>, objects: &[TrayObject]) -> Image {
    let [h, w, _] = cfg.obs_shape;
    let vp = Viewport {
        extent: cfg.arena_half_extent,
        height: h,
        width: w,
    };
    let mut img = Image::filled(h, w, TRAY_COLOR);
    for o in objects {
        vp.fill_rect(&mut img, o.center, o.half, o.color);
    }
    if let Some(g) = gripper {
        let r = cfg.gripper_radius;
        vp.fill_rect(&mut img, g, [r, r], GRIPPER_COLOR);
    }
    img
}
