//! Synthetic scenes with plane-boundary contamination.
//!
//! [`TwoPlaneScene`] draws ground-truth normals along a plane boundary: most
//! come from the dominant plane, some from its neighbour, all with symmetric
//! AngMF jitter. [`make_frame`] paints planar regions into a grid and builds
//! a [`SyntheticFrame`] with jittered ground truth, boundary contamination
//! and per-pixel features for the refinement trainer.
//!
//! # Feature recipe (version 1)
//!
//! Each pixel gets [`FEATURE_DIM`] = 9 values:
//!
//! | index | content |
//! |-------|---------|
//! | 0..3  | coarse prediction: clean plane normals box-blurred over a 5×5 window, plus Gaussian noise (σ = `prediction_noise`) and renormalized |
//! | 3..6  | plane hint: the pixel's clean plane normal minus the coarse prediction, plus Gaussian noise (σ = `hint_noise`) |
//! | 6     | boundary proximity `1 − min(d, 6)/6`, `d` the Chebyshev distance to the nearest pixel of another plane |
//! | 7..9  | standard Gaussian noise |
//!
//! The coarse prediction is exact in plane interiors and blends neighbouring
//! planes near boundaries, where the network has to lean on the noisier hint.

use serde::{Deserialize, Serialize};

use crate::distributions::AngMFParams;
use crate::error::{Error, Result};
use crate::mapio::NormalMap;
use crate::rng::RngState;
use crate::sampling::sample_angmf;
use crate::sphere::{normalize, UnitVector3, Vec3};

pub const FEATURE_DIM: usize = 9;
/// Pixels within this Chebyshev distance of another plane are boundary
/// pixels.
pub const BOUNDARY_RADIUS: usize = 2;
const PROXIMITY_RANGE: usize = 6;
const BLUR_RADIUS: usize = 2;

/// Boundary ground truth as a two-plane mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPlaneScene {
    normal_a: UnitVector3,
    normal_b: UnitVector3,
    contamination: f64,
    jitter_kappa: f64,
}

impl TwoPlaneScene {
    /// `contamination ∈ [0, 0.5)`; `jitter_kappa > 0`, where `f64::INFINITY`
    /// disables jitter.
    pub fn new(
        normal_a: UnitVector3,
        normal_b: UnitVector3,
        contamination: f64,
        jitter_kappa: f64,
    ) -> Result<Self> {
        if !(0.0..0.5).contains(&contamination) {
            return Err(Error::domain("contamination", contamination, "[0, 0.5)"));
        }
        if !(jitter_kappa > 0.0) {
            return Err(Error::domain("jitter_kappa", jitter_kappa, "(0, ∞]"));
        }
        Ok(TwoPlaneScene {
            normal_a,
            normal_b,
            contamination,
            jitter_kappa,
        })
    }

    pub fn normal_a(&self) -> UnitVector3 {
        self.normal_a
    }

    pub fn normal_b(&self) -> UnitVector3 {
        self.normal_b
    }

    pub fn contamination(&self) -> f64 {
        self.contamination
    }

    pub fn jitter_kappa(&self) -> f64 {
        self.jitter_kappa
    }
}

fn jitter(n: UnitVector3, kappa: f64, rng: &mut RngState) -> UnitVector3 {
    if kappa.is_infinite() {
        return n;
    }
    let p = AngMFParams::new(n, kappa).expect("jitter κ validated");
    sample_angmf(&p, rng, 1)[0]
}

/// Draws one boundary normal: plane B with probability `contamination`,
/// otherwise plane A, then jittered.
fn boundary_sample(scene: &TwoPlaneScene, rng: &mut RngState) -> UnitVector3 {
    let n = if rng.next_f64() < scene.contamination {
        scene.normal_b
    } else {
        scene.normal_a
    };
    jitter(n, scene.jitter_kappa, rng)
}

/// Draws `count` ground-truth normals from the boundary mixture.
pub fn sample_boundary_pixels(
    scene: &TwoPlaneScene,
    rng: &mut RngState,
    count: usize,
) -> Vec<UnitVector3> {
    (0..count).map(|_| boundary_sample(scene, rng)).collect()
}

/// An axis-aligned rectangle `[x0, x1) × [y0, y1)` of one plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneRegion {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub normal: UnitVector3,
}

/// Planar regions painted in order; later regions overwrite earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub width: usize,
    pub height: usize,
    pub regions: Vec<PlaneRegion>,
}

impl FrameLayout {
    /// One plane over the whole grid.
    pub fn single(width: usize, height: usize, normal: UnitVector3) -> Self {
        Self::vertical_strips(width, height, &[normal])
    }

    /// Equal-width vertical strips, left to right.
    pub fn vertical_strips(width: usize, height: usize, normals: &[UnitVector3]) -> Self {
        let k = normals.len().max(1);
        let regions = normals
            .iter()
            .enumerate()
            .map(|(i, &normal)| PlaneRegion {
                x0: i * width / k,
                x1: (i + 1) * width / k,
                y0: 0,
                y1: height,
                normal,
            })
            .collect();
        FrameLayout {
            width,
            height,
            regions,
        }
    }

    /// A background plane with `planes − 1` random rectangles on top. Normals
    /// are drawn within 60° of +z, each rectangle spans at least 8 pixels.
    pub fn random(width: usize, height: usize, planes: usize, rng: &mut RngState) -> Self {
        let mut regions = vec![PlaneRegion {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
            normal: camera_facing(rng),
        }];
        let span = |rng: &mut RngState, len: usize| {
            let min = 8.min(len);
            let size = min + rng.below((len - min + 1) as u64) as usize;
            let start = rng.below((len - size + 1) as u64) as usize;
            (start, start + size)
        };
        for _ in 1..planes {
            let (x0, x1) = span(rng, width);
            let (y0, y1) = span(rng, height);
            regions.push(PlaneRegion {
                x0,
                y0,
                x1,
                y1,
                normal: camera_facing(rng),
            });
        }
        FrameLayout {
            width,
            height,
            regions,
        }
    }

    /// Plane index per pixel, row-major.
    fn paint(&self) -> Result<Vec<usize>> {
        let mut plane = vec![usize::MAX; self.width * self.height];
        for (r, reg) in self.regions.iter().enumerate() {
            if reg.x1 > self.width || reg.y1 > self.height || reg.x0 > reg.x1 || reg.y0 > reg.y1 {
                return Err(Error::Shape(format!(
                    "region {r} [{}, {}) x [{}, {}) lies outside the {}x{} grid",
                    reg.x0, reg.x1, reg.y0, reg.y1, self.width, self.height
                )));
            }
            for y in reg.y0..reg.y1 {
                plane[y * self.width + reg.x0..y * self.width + reg.x1].fill(r);
            }
        }
        if let Some(i) = plane.iter().position(|&p| p == usize::MAX) {
            return Err(Error::Shape(format!(
                "layout leaves pixel ({}, {}) uncovered",
                i % self.width,
                i / self.width
            )));
        }
        Ok(plane)
    }
}

fn camera_facing(rng: &mut RngState) -> UnitVector3 {
    // uniform on the spherical cap of half-angle 60° around +z
    let t = 1.0 - 0.5 * rng.next_f64();
    let phi = 2.0 * std::f64::consts::PI * rng.next_f64();
    let s = (1.0 - t * t).sqrt();
    normalize(Vec3::new(s * phi.cos(), s * phi.sin(), t)).expect("unit")
}

/// Noise settings for [`make_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// AngMF jitter of the ground truth; `f64::INFINITY` for none.
    pub jitter_kappa: f64,
    /// Probability that a boundary pixel takes the neighbouring plane.
    pub contamination: f64,
    pub prediction_noise: f64,
    pub hint_noise: f64,
}

impl NoiseConfig {
    /// Clean ground truth and noiseless features.
    pub const NONE: NoiseConfig = NoiseConfig {
        jitter_kappa: f64::INFINITY,
        contamination: 0.0,
        prediction_noise: 0.0,
        hint_noise: 0.0,
    };

    /// Checks every field against its domain.
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_kappa > 0.0) {
            return Err(Error::domain("jitter_kappa", self.jitter_kappa, "(0, ∞]"));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(Error::domain(
                "contamination",
                self.contamination,
                "[0, 0.5)",
            ));
        }
        for (what, v) in [
            ("prediction_noise", self.prediction_noise),
            ("hint_noise", self.hint_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v, "[0, ∞)"));
            }
        }
        Ok(())
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            jitter_kappa: 400.0,
            contamination: 0.2,
            prediction_noise: 0.03,
            hint_noise: 0.05,
        }
    }
}

/// A synthetic training or evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub width: usize,
    pub height: usize,
    pub gt: NormalMap,
    /// Row-major, [`FEATURE_DIM`] values per pixel.
    pub features: Vec<f64>,
    pub boundary_mask: Vec<bool>,
}

impl SyntheticFrame {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM]
    }

    /// The coarse-prediction channels as directions.
    pub fn coarse_prediction(&self) -> Vec<UnitVector3> {
        (0..self.len())
            .map(|i| {
                let f = self.feature(i);
                normalize(Vec3::new(f[0], f[1], f[2])).expect("coarse channels are unit")
            })
            .collect()
    }
}

/// Nearest pixel of another plane within `range` (Chebyshev), scanning rings
/// outward and each ring in row-major order.
fn nearest_other(
    plane: &[usize],
    w: usize,
    h: usize,
    i: usize,
    range: usize,
) -> Option<(usize, usize)> {
    let (x, y) = ((i % w) as isize, (i / w) as isize);
    for d in 1..=range as isize {
        for yy in (y - d).max(0)..=(y + d).min(h as isize - 1) {
            for xx in (x - d).max(0)..=(x + d).min(w as isize - 1) {
                if (yy - y).abs() != d && (xx - x).abs() != d {
                    continue;
                }
                let j = yy as usize * w + xx as usize;
                if plane[j] != plane[i] {
                    return Some((d as usize, j));
                }
            }
        }
    }
    None
}

/// Builds a frame from a layout. All randomness comes from `rng`, consumed
/// in pixel order.
pub fn make_frame(
    layout: &FrameLayout,
    noise: &NoiseConfig,
    rng: &mut RngState,
) -> Result<SyntheticFrame> {
    let (w, h) = (layout.width, layout.height);
    if w == 0 || h == 0 {
        return Err(Error::Shape("frame must have at least one pixel".into()));
    }
    noise.validate()?;
    let plane = layout.paint()?;
    let clean: Vec<UnitVector3> = plane.iter().map(|&p| layout.regions[p].normal).collect();

    let mut gt = NormalMap::new(w, h);
    let mut boundary_mask = vec![false; w * h];
    let mut features = Vec::with_capacity(w * h * FEATURE_DIM);
    for i in 0..w * h {
        let near = nearest_other(&plane, w, h, i, PROXIMITY_RANGE);
        let n = match near {
            Some((d, j)) if d <= BOUNDARY_RADIUS => {
                boundary_mask[i] = true;
                let scene = TwoPlaneScene::new(
                    clean[i],
                    clean[j],
                    noise.contamination,
                    noise.jitter_kappa,
                )?;
                boundary_sample(&scene, rng)
            }
            _ => jitter(clean[i], noise.jitter_kappa, rng),
        };
        gt.set(i, Some(n));

        let (x, y) = (i % w, i / w);
        let mut blur = Vec3::ZERO;
        for yy in y.saturating_sub(BLUR_RADIUS)..=(y + BLUR_RADIUS).min(h - 1) {
            for xx in x.saturating_sub(BLUR_RADIUS)..=(x + BLUR_RADIUS).min(w - 1) {
                blur += clean[yy * w + xx].as_vec();
            }
        }
        let noisy = blur * (1.0 / blur.norm())
            + Vec3::new(
                rng.next_gaussian(),
                rng.next_gaussian(),
                rng.next_gaussian(),
            ) * noise.prediction_noise;
        let coarse = normalize(noisy).unwrap_or(clean[i]);
        let hint = clean[i].as_vec() - coarse.as_vec()
            + Vec3::new(
                rng.next_gaussian(),
                rng.next_gaussian(),
                rng.next_gaussian(),
            ) * noise.hint_noise;
        let d = near.map_or(PROXIMITY_RANGE, |(d, _)| d);
        features.extend_from_slice(&coarse.to_array());
        features.extend_from_slice(&hint.to_array());
        features.push(1.0 - d as f64 / PROXIMITY_RANGE as f64);
        features.push(rng.next_gaussian());
        features.push(rng.next_gaussian());
    }
    Ok(SyntheticFrame {
        width: w,
        height: h,
        gt,
        features,
        boundary_mask,
    })
}
