//! Pixel-wise refinement MLP trained with the AngMF NLL.
//!
//! The network maps a per-pixel feature vector through three ReLU hidden
//! layers to four raw outputs. The first three are normalized into μ, the
//! fourth goes through [`modified_elu`] to give κ > 0. Backpropagation is
//! written out by hand: the loss gradient comes from
//! [`angmf_nll_grad`], passes the normalization Jacobian `(I − μμᵀ)/‖v‖`
//! and the ELU derivative, then the dense layers.
//!
//! [`train`] runs plain mini-batch gradient descent. Each epoch, every frame
//! is predicted in full, its uncertainty map `E[α](κ)` drives
//! [`select_pixels`], and the loss is taken over the selected pixels only.
//!
//! This is a single-resolution stand-in for a coarse-to-fine refinement
//! network: the previous-stage prediction enters through the frame features
//! instead of an upsampled decoder output.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{angmf_nll, angmf_nll_grad, expected_angular_error, AngMFParams};
use crate::error::{Error, Result};
use crate::mapio::CsvWriter;
use crate::metrics::{summarize, MetricsReport};
use crate::pixel_select::{select_pixels, SelectionConfig};
use crate::rng::RngState;
use crate::sphere::{angle_between, UnitVector3, Vec3};
use crate::synth::{SyntheticFrame, FEATURE_DIM};

pub const DEFAULT_HIDDEN: usize = 128;
pub const HIDDEN_LAYERS: usize = 3;
/// Raw μ channels shorter than this cannot be normalized.
pub const NORM_FLOOR: f64 = 1e-12;
const MAGIC: &[u8; 5] = b"RMLP1";
/// Pixels per partial gradient in the fixed-order reduction.
const GRAD_CHUNK: usize = 32;

/// `ELU(x) + 1`: `x + 1` for `x ≥ 0`, `eˣ` below.
pub fn modified_elu(x: f64) -> f64 {
    if x >= 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

fn modified_elu_prime(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Dense ReLU network `input → hidden ×3 → 4`.
///
/// All weights and biases live in one flat vector, layer by layer, each
/// layer as a row-major `outputs × inputs` weight block followed by its
/// biases. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineMLP {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Trace {
    /// `activations[0]` is the input; `activations[l]` the ReLU output of
    /// layer `l` for hidden layers, and the raw head output for the last.
    activations: Vec<Vec<f64>>,
}

impl RefineMLP {
    /// Seeded uniform init in `±1/√fan_in`.
    pub fn new(input: usize, hidden: usize, rng: &mut RngState) -> Self {
        let mut mlp = Self::zeros(input, hidden);
        for l in 0..mlp.layer_count() {
            let bound = 1.0 / (mlp.dims[l] as f64).sqrt();
            let range = mlp.layer_range(l);
            for p in &mut mlp.params[range] {
                *p = bound * (2.0 * rng.next_f64() - 1.0);
            }
        }
        mlp
    }

    /// All weights and biases zero.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let mut dims = vec![input];
        dims.extend([hidden; HIDDEN_LAYERS]);
        dims.push(4);
        Self::with_dims(dims)
    }

    fn with_dims(dims: Vec<usize>) -> Self {
        let n = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        RefineMLP {
            dims,
            params: vec![0.0; n],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    /// Flat parameter vector (see the type docs for the layout).
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, l: usize) -> usize {
        self.dims[..=l].windows(2).map(|d| d[0] * d[1] + d[1]).sum()
    }

    fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.layer_offset(l);
        start..start + self.dims[l] * self.dims[l + 1] + self.dims[l + 1]
    }

    /// Weight from unit `i` of layer `l`'s input to its output unit `o`.
    pub fn weight(&self, l: usize, o: usize, i: usize) -> f64 {
        self.params[self.layer_offset(l) + o * self.dims[l] + i]
    }

    pub fn set_weight(&mut self, l: usize, o: usize, i: usize, value: f64) {
        let k = self.layer_offset(l) + o * self.dims[l] + i;
        self.params[k] = value;
    }

    pub fn bias(&self, l: usize, o: usize) -> f64 {
        self.params[self.layer_offset(l) + self.dims[l] * self.dims[l + 1] + o]
    }

    pub fn set_bias(&mut self, l: usize, o: usize, value: f64) {
        let k = self.layer_offset(l) + self.dims[l] * self.dims[l + 1] + o;
        self.params[k] = value;
    }

    fn check_input(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature has {} values, network expects {}",
                feature.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn run(&self, feature: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(feature.to_vec());
        let mut off = 0;
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &activations[l];
            let last = l + 1 == self.layer_count();
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let s = b[o] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
                    if last {
                        s
                    } else {
                        s.max(0.0)
                    }
                })
                .collect();
            activations.push(z);
        }
        Trace { activations }
    }

    /// The four raw head outputs.
    pub fn forward_raw(&self, feature: &[f64]) -> Result<[f64; 4]> {
        self.check_input(feature)?;
        let t = self.run(feature);
        let r = t.activations.last().expect("output layer");
        Ok([r[0], r[1], r[2], r[3]])
    }

    /// Predicted `(μ, κ)` for one pixel.
    pub fn forward(&self, feature: &[f64]) -> Result<AngMFParams> {
        heads(self.forward_raw(feature)?).map(|(p, _)| p)
    }

    /// Adds `∂ angmf_nll / ∂ params` for one pixel to `grad` and returns the
    /// NLL.
    pub fn backward_into(
        &self,
        feature: &[f64],
        n_gt: UnitVector3,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_input(feature)?;
        if grad.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, network has {}",
                grad.len(),
                self.params.len()
            )));
        }
        let trace = self.run(feature);
        let raw = trace.activations.last().expect("output layer");
        let (p, norm) = heads([raw[0], raw[1], raw[2], raw[3]])?;
        let g = angmf_nll_grad(&p, n_gt);
        let mu = p.mu().as_vec();
        // (I − μμᵀ) d_mu / ‖v‖
        let d_v = (g.d_mu - mu * mu.dot(g.d_mu)) * (1.0 / norm);
        let mut delta = vec![d_v.x, d_v.y, d_v.z, g.d_kappa * modified_elu_prime(raw[3])];

        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            let a = &trace.activations[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (gw, x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(a) {
                    *gw += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * w;
                }
            }
            // ReLU′: the stored activation is positive exactly where z > 0
            for (p, a) in prev.iter_mut().zip(a) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(angmf_nll(&p, n_gt))
    }

    /// Gradient of the NLL of one pixel with respect to every parameter.
    pub fn backward(&self, feature: &[f64], n_gt: UnitVector3) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(feature, n_gt, &mut grad)?;
        Ok(grad)
    }

    /// Mean NLL and mean gradient over `pixels`.
    ///
    /// `features` is row-major with [`Self::input_dim`] values per pixel.
    pub fn loss_gradient(
        &self,
        features: &[f64],
        gts: &[UnitVector3],
        pixels: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        let d = self.input_dim();
        if features.len() != gts.len() * d {
            return Err(Error::Shape(format!(
                "{} feature values for {} pixels of dimension {d}",
                features.len(),
                gts.len()
            )));
        }
        if let Some(&bad) = pixels.iter().find(|&&i| i >= gts.len()) {
            return Err(Error::Shape(format!(
                "pixel {bad} outside a {}-pixel frame",
                gts.len()
            )));
        }
        let batch: Vec<(&[f64], UnitVector3)> = pixels
            .iter()
            .map(|&i| (&features[i * d..(i + 1) * d], gts[i]))
            .collect();
        self.batch_gradient(&batch)
    }

    /// Mean NLL and mean gradient over `(feature, ground truth)` pairs.
    ///
    /// The batch is split into fixed chunks whose partial gradients are
    /// summed in order, so the result is independent of the thread count.
    pub fn batch_gradient(&self, batch: &[(&[f64], UnitVector3)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let partials: Vec<(f64, Vec<f64>)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for (x, n) in chunk {
                    loss += self.backward_into(x, *n, &mut grad)?;
                }
                Ok((loss, grad))
            })
            .collect::<Result<_>>()?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (l, g) in partials {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }

    /// Predicts every pixel of a frame.
    pub fn predict(&self, frame: &SyntheticFrame) -> Result<Vec<AngMFParams>> {
        (0..frame.len())
            .into_par_iter()
            .map(|i| self.forward(frame.feature(i)))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * (self.dims.len() + self.params.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layer_count() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &p in &self.params {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        out
    }

    /// Inverse of [`Self::encode`]. Weights come back at f32 precision.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format(0, "missing RMLP1 magic"));
        }
        let read_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| Error::format(at as u64, "truncated header"))
        };
        let layers = read_u32(5)? as usize;
        if layers == 0 || layers > 64 {
            return Err(Error::format(
                5,
                format!("implausible layer count {layers}"),
            ));
        }
        let mut dims = Vec::with_capacity(layers + 1);
        for k in 0..=layers {
            let d = read_u32(9 + 4 * k)? as usize;
            if d == 0 {
                return Err(Error::format((9 + 4 * k) as u64, "zero layer width"));
            }
            dims.push(d);
        }
        if dims[layers] != 4 {
            return Err(Error::format(
                (9 + 4 * layers) as u64,
                format!("output width {} is not 4", dims[layers]),
            ));
        }
        let mut mlp = Self::with_dims(dims);
        let start = 9 + 4 * (layers + 1);
        let expected = start + 4 * mlp.params.len();
        if bytes.len() != expected {
            return Err(Error::format(
                bytes.len().min(expected) as u64,
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        for (k, p) in mlp.params.iter_mut().enumerate() {
            let at = start + 4 * k;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::format(at as u64, "non-finite weight"));
            }
            *p = v as f64;
        }
        Ok(mlp)
    }
}

/// Splits raw outputs into AngMF parameters; also returns `‖v‖`.
fn heads(raw: [f64; 4]) -> Result<(AngMFParams, f64)> {
    let v = Vec3::new(raw[0], raw[1], raw[2]);
    let norm = v.norm();
    if !(norm >= NORM_FLOOR) || !norm.is_finite() {
        return Err(Error::Normalization { norm });
    }
    let mu = UnitVector3::from_unit_unchecked(v * (1.0 / norm));
    let kappa = modified_elu(raw[3]);
    Ok((AngMFParams::new(mu, kappa)?, norm))
}

pub fn write_weights(path: impl AsRef<Path>, mlp: &RefineMLP) -> Result<()> {
    std::fs::write(path, mlp.encode())?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<RefineMLP> {
    RefineMLP::decode(&std::fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub selection: SelectionConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-2,
            hidden: DEFAULT_HIDDEN,
            selection: SelectionConfig::default(),
            seed: 0,
        }
    }
}

/// Metrics over all pixels of all frames after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub metrics: MetricsReport,
    pub nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub mlp: RefineMLP,
    pub history: Vec<EpochStats>,
}

/// Angular errors (degrees), uncertainties `E[α]` (degrees) and mean NLL of
/// a network on a frame.
pub struct FrameEvaluation {
    pub errors_deg: Vec<f64>,
    pub uncertainty_deg: Vec<f64>,
    pub nll: f64,
}

pub fn evaluate_frame(mlp: &RefineMLP, frame: &SyntheticFrame) -> Result<FrameEvaluation> {
    let params = mlp.predict(frame)?;
    let mut errors_deg = Vec::with_capacity(params.len());
    let mut uncertainty_deg = Vec::with_capacity(params.len());
    let mut nll = 0.0;
    for (i, p) in params.iter().enumerate() {
        let gt = frame
            .gt
            .get(i)
            .ok_or_else(|| Error::Shape("frame ground truth has holes".into()))?;
        errors_deg.push(angle_between(p.mu(), gt).degrees());
        uncertainty_deg.push(expected_angular_error(p.kappa())?.degrees());
        nll += angmf_nll(p, gt);
    }
    Ok(FrameEvaluation {
        errors_deg,
        uncertainty_deg,
        nll: nll / params.len().max(1) as f64,
    })
}

fn evaluate(mlp: &RefineMLP, frames: &[SyntheticFrame], epoch: usize) -> Result<EpochStats> {
    let mut errors = Vec::new();
    let mut nll = 0.0;
    let mut count = 0;
    for f in frames {
        let e = evaluate_frame(mlp, f)?;
        nll += e.nll * f.len() as f64;
        count += f.len();
        errors.extend(e.errors_deg);
    }
    Ok(EpochStats {
        epoch,
        metrics: summarize(&errors)?,
        nll: nll / count as f64,
    })
}

/// Trains a fresh network on the frames.
pub fn train(frames: &[SyntheticFrame], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if frames.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::domain(
            "learning_rate",
            cfg.learning_rate,
            "finite, ≥ 0, with batch_size > 0",
        ));
    }
    let mut mlp = RefineMLP::new(
        FEATURE_DIM,
        cfg.hidden,
        &mut RngState::for_stream(cfg.seed, 0),
    );
    let mut rng = RngState::for_stream(cfg.seed, 1);
    let gts: Vec<Vec<UnitVector3>> = frames
        .iter()
        .map(|f| {
            f.gt.directions()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Shape("frame ground truth has holes".into()))
        })
        .collect::<Result<_>>()?;

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        // selections use the network as it stands at the start of the epoch
        let mut pool: Vec<(usize, usize)> = Vec::new();
        for (k, frame) in frames.iter().enumerate() {
            let uncertainty: Vec<f64> = mlp
                .predict(frame)?
                .iter()
                .map(|p| expected_angular_error(p.kappa()).map(|a| a.radians()))
                .collect::<Result<_>>()?;
            let valid = vec![true; frame.len()];
            let selection = select_pixels(&uncertainty, &valid, &cfg.selection, &mut rng)?;
            pool.extend(selection.iter().map(|i| (k, i)));
        }
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.below(i as u64 + 1) as usize);
        }
        for chunk in pool.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], UnitVector3)> = chunk
                .iter()
                .map(|&(k, i)| (frames[k].feature(i), gts[k][i]))
                .collect();
            let (loss, grad) = mlp.batch_gradient(&batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("batch NLL is {loss}"),
                });
            }
            for (p, g) in mlp.params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
        let stats = evaluate(&mlp, frames, epoch)?;
        if !stats.nll.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("evaluation NLL is {}", stats.nll),
            });
        }
        history.push(stats);
    }
    Ok(TrainOutcome { mlp, history })
}

/// Training curve as CSV `epoch,mean_deg,median_deg,rmse_deg,nll`.
pub fn write_history_csv<W: Write>(out: W, history: &[EpochStats]) -> Result<W> {
    let mut w = CsvWriter::new(out, &["epoch", "mean_deg", "median_deg", "rmse_deg", "nll"])?;
    for s in history {
        w.row(&[
            s.epoch.to_string(),
            s.metrics.mean.to_string(),
            s.metrics.median.to_string(),
            s.metrics.rmse.to_string(),
            s.nll.to_string(),
        ])?;
    }
    w.finish()
}
