//! Parametric gesture generator for dataset-free experiments.
//!
//! Every class moves a fixed 21-landmark hand template along one wrist
//! trajectory. Classes cycle through six trajectory families; within a family
//! they differ in orientation, size, frequency, winding direction and timing.
//! The active span of a class covers 36..=58 of the 72 frames; the rest is
//! empty. Individual samples vary the class shape slightly (timing, speed,
//! size, rotation, placement and hand scale) and add Gaussian coordinate
//! noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::gesture::{
    GestureDataset, GestureSequence, LandmarkFrame, COORDS, LANDMARKS, SEQ_LEN, SYNTHETIC_ORIGIN,
};
use crate::error::{Error, Result};
use crate::rng;

pub const TRAJECTORY_FAMILIES: [&str; 6] = ["line", "circle", "figure-eight", "zigzag", "spiral", "arc"];

/// Landmark offsets from the wrist for an open right hand, image coordinates
/// (y grows downwards).
const HAND: [[f64; 3]; LANDMARKS] = [
    [0.0, 0.0, 0.0],
    [-0.030, -0.020, -0.010],
    [-0.055, -0.045, -0.015],
    [-0.070, -0.070, -0.020],
    [-0.080, -0.090, -0.025],
    [-0.025, -0.090, -0.005],
    [-0.030, -0.125, -0.010],
    [-0.032, -0.150, -0.015],
    [-0.034, -0.170, -0.020],
    [0.000, -0.095, 0.000],
    [0.000, -0.135, -0.005],
    [0.000, -0.160, -0.010],
    [0.000, -0.180, -0.015],
    [0.022, -0.090, 0.000],
    [0.026, -0.125, -0.005],
    [0.028, -0.148, -0.010],
    [0.030, -0.165, -0.015],
    [0.042, -0.080, 0.000],
    [0.050, -0.105, -0.005],
    [0.054, -0.122, -0.010],
    [0.057, -0.137, -0.012],
];

const MIN_ACTIVE: usize = 36;
const MAX_ACTIVE: usize = 58;
const JITTER_FRAMES: i64 = 2;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone)]
struct ClassShape {
    label: String,
    family: usize,
    angle: f64,
    amplitude: f64,
    frequency: f64,
    winding: f64,
    center: [f64; 2],
    start: usize,
    active: usize,
}

impl ClassShape {
    fn draw(class: usize, seed: u64) -> Self {
        let family = class % TRAJECTORY_FAMILIES.len();
        let variant = class / TRAJECTORY_FAMILIES.len();
        let mut r = rng::stream(seed, &[class as u64, 0xC1A5]);
        let active = r.random_range(MIN_ACTIVE..=MAX_ACTIVE);
        ClassShape {
            label: format!("{}-{}", TRAJECTORY_FAMILIES[family], variant),
            family,
            angle: variant as f64 * GOLDEN_ANGLE + family as f64 * 0.7 + r.random_range(-0.1..0.1),
            amplitude: 0.18 + 0.04 * (variant % 3) as f64 + r.random_range(-0.01..0.01),
            frequency: 1.0 + (variant % 2) as f64,
            winding: if (variant / 2) % 2 == 0 { 1.0 } else { -1.0 },
            center: [
                0.5 + r.random_range(-0.04..0.04),
                0.55 + r.random_range(-0.04..0.04),
            ],
            start: r.random_range(0..=SEQ_LEN - active),
            active,
        }
    }

    /// A per-sample perturbation of the class shape.
    fn jitter<R: Rng + ?Sized>(&self, r: &mut R) -> (Self, f64) {
        let mut s = self.clone();
        let active = (self.active as i64 + r.random_range(-JITTER_FRAMES..=JITTER_FRAMES))
            .clamp(MIN_ACTIVE as i64, MAX_ACTIVE as i64) as usize;
        let start = (self.start as i64 + r.random_range(-JITTER_FRAMES..=JITTER_FRAMES))
            .clamp(0, (SEQ_LEN - active) as i64) as usize;
        s.active = active;
        s.start = start;
        s.amplitude *= 1.0 + r.random_range(-0.05..0.05);
        s.angle += r.random_range(-0.05..0.05);
        s.center[0] += r.random_range(-0.01..0.01);
        s.center[1] += r.random_range(-0.01..0.01);
        (s, 1.0 + r.random_range(-0.03..0.03))
    }

    /// Wrist position at normalized time `t ∈ [0, 1]`.
    fn wrist(&self, t: f64) -> [f64; 3] {
        let a = self.amplitude;
        let (f, w) = (self.frequency, self.winding);
        let (u, v) = match self.family {
            0 => (a * (t - 0.5), 0.0),
            1 => {
                let th = 2.0 * PI * f * t * w;
                (0.5 * a * th.cos(), 0.5 * a * th.sin())
            }
            2 => (0.5 * a * (2.0 * PI * t).sin(), 0.25 * a * (4.0 * PI * t).sin() * w),
            3 => {
                let phase = (2.0 * f * t).fract();
                let tri = 1.0 - 4.0 * (phase - 0.5).abs();
                (a * (t - 0.5), 0.25 * a * tri * w)
            }
            4 => {
                let r = 0.5 * a * (0.2 + 0.8 * t);
                let th = 2.0 * PI * f * t * w;
                (r * th.cos(), r * th.sin())
            }
            _ => {
                let th = PI * t * w;
                (0.5 * a * th.cos(), 0.5 * a * th.sin())
            }
        };
        let (s, c) = self.angle.sin_cos();
        let z = 0.03 * (PI * t).sin() * if self.family % 2 == 0 { 1.0 } else { -1.0 };
        [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v, z]
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    noise_sigma: f64,
    seed: u64,
    classes: Vec<ClassShape>,
}

impl SyntheticGenerator {
    pub fn new(n_classes: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("bad noise sigma {noise_sigma}")));
        }
        Ok(SyntheticGenerator {
            noise_sigma,
            seed,
            classes: (0..n_classes).map(|c| ClassShape::draw(c, seed)).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_label(&self, class: usize) -> &str {
        &self.classes[class].label
    }

    /// Sample `index` of class `class`; depends only on (seed, class, index).
    pub fn sample(&self, class: usize, index: usize) -> GestureSequence {
        let mut r = rng::stream(self.seed, &[class as u64, index as u64]);
        let (shape, hand_scale) = self.classes[class].jitter(&mut r);
        let noise = Normal::new(0.0, self.noise_sigma).expect("finite sigma");
        let mut frames = Vec::with_capacity(SEQ_LEN);
        for i in 0..SEQ_LEN {
            if i < shape.start || i >= shape.start + shape.active {
                frames.push(LandmarkFrame::invalid());
                continue;
            }
            let t = (i - shape.start) as f64 / (shape.active - 1) as f64;
            let w = shape.wrist(t);
            let mut coords = [0.0f32; COORDS];
            for (l, off) in HAND.iter().enumerate() {
                for k in 0..3 {
                    let mut v = w[k] + hand_scale * off[k];
                    if self.noise_sigma > 0.0 {
                        v += noise.sample(&mut r);
                    }
                    let v = if k < 2 { v.clamp(0.0, 1.0) } else { v.clamp(-1.0, 1.0) };
                    coords[l * 3 + k] = v as f32;
                }
            }
            frames.push(LandmarkFrame::detected(coords));
        }
        GestureSequence::new(
            frames,
            shape.label.clone(),
            (SYNTHETIC_ORIGIN.to_string(), shape.label),
            format!("syn{class:03}-{index:05}"),
        )
        .expect("generator emits valid sequences")
    }

    /// Samples `range` of every class listed, class-major.
    pub fn dataset(&self, classes: &[usize], samples: std::ops::Range<usize>) -> GestureDataset {
        let mut ds = GestureDataset::default();
        for &c in classes {
            for j in samples.clone() {
                ds.push(self.sample(c, j));
            }
        }
        ds
    }
}

pub fn gen_synthetic(
    n_classes: usize,
    samples_per_class: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<GestureDataset> {
    let g = SyntheticGenerator::new(n_classes, noise_sigma, seed)?;
    let all: Vec<usize> = (0..n_classes).collect();
    Ok(g.dataset(&all, 0..samples_per_class))
}
