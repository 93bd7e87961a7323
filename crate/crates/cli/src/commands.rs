use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use angmf::distributions::{expected_angular_error, AngMFParams, VonMFParams};
use angmf::estimators::{fit_angmf_mle, mean_direction, spherical_median};
use angmf::mapio::{
    parse_vectors_csv, read_kappa_map, read_normal_map, write_kappa_map, write_normal_map,
    write_vectors_csv, CsvWriter, KappaMap, NormalMap,
};
use angmf::metrics::{
    angular_errors, ausc, ause, oracle_curve, sparsification, spearman, summarize, ErrorSample,
    Metric, MetricsReport,
};
use angmf::pixel_select::{select_pixels, SelectionConfig};
use angmf::refine::{
    evaluate_frame, read_weights, train, write_history_csv, write_weights, RefineMLP, TrainConfig,
};
use angmf::rng::RngState;
use angmf::sampling::{sample_angmf, sample_vonmf};
use angmf::sphere::{angle_between, normalize, tangent_basis};
use angmf::synth::{
    make_frame, sample_boundary_pixels, FrameLayout, NoiseConfig, SyntheticFrame, TwoPlaneScene,
};
use angmf::{UnitVector3, Vec3};
use serde::Serialize;

use crate::failure::Failure;
use crate::{Command, Dist, Estimator, FrameArgs};

type Outcome = Result<(), Failure>;

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Eval { pred, gt, out_json } => eval(&pred, &gt, out_json.as_deref()),
        Command::Sparsify {
            pred,
            gt,
            kappa,
            metric,
            out_csv,
            out_json,
        } => sparsify(
            &pred,
            &gt,
            &kappa,
            &metric,
            out_csv.as_deref(),
            out_json.as_deref(),
        ),
        Command::Sample {
            mu,
            kappa,
            n,
            seed,
            dist,
            out_csv,
        } => sample(mu, kappa, n, seed, dist, out_csv.as_deref()),
        Command::Fit {
            samples_csv,
            estimator,
            tol,
            out_json,
        } => fit(&samples_csv, estimator, tol, out_json.as_deref()),
        Command::ExpectedError { kappa } => expected_error(&kappa),
        Command::SelectPixels {
            kappa_map,
            rs,
            beta,
            seed,
            out_csv,
        } => select(&kappa_map, rs, beta, seed, out_csv.as_deref()),
        Command::SimulateBoundary {
            normal_a,
            separation_deg,
            contamination,
            jitter_kappa,
            samples,
            trials,
            seed,
            out_json,
        } => simulate_boundary(
            normal_a,
            separation_deg,
            contamination,
            jitter_kappa,
            samples,
            trials,
            seed,
            out_json.as_deref(),
        ),
        Command::RefineDemo {
            frames,
            count,
            holdout,
            epochs,
            batch_size,
            lr,
            hidden,
            rs,
            beta,
            seed,
            out_weights,
            out_csv,
            out_json,
        } => {
            let cfg = TrainConfig {
                epochs,
                batch_size,
                learning_rate: lr,
                hidden,
                selection: SelectionConfig::new(rs, beta)?,
                seed,
            };
            let outputs = DemoOutputs {
                weights: out_weights,
                history: out_csv,
                summary: out_json,
            };
            refine_demo(&frames, count, holdout, &cfg, &outputs)
        }
        Command::SynthFrame {
            frames,
            seed,
            out_gt,
            out_pred,
            weights,
            out_kappa,
        } => synth_frame(&frames, seed, &out_gt, &out_pred, weights.zip(out_kappa)),
    }
}

/// Prefixes a library error with the offending path.
fn at(path: &Path) -> impl Fn(angmf::Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| at(p)(e.into()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json(path: Option<&Path>, value: &impl Serialize) -> Outcome {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn unit(v: Vec3, what: &str) -> Result<UnitVector3, Failure> {
    normalize(v).map_err(|_| Failure::usage(format!("{what} must be a nonzero finite vector")))
}

fn check_same_shape(a: (usize, usize), b: (usize, usize), what: &str) -> Outcome {
    if a != b {
        return Err(Failure::usage(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

fn read_pair(pred: &Path, gt: &Path) -> Result<(NormalMap, NormalMap), Failure> {
    let p = read_normal_map(pred).map_err(at(pred))?;
    let g = read_normal_map(gt).map_err(at(gt))?;
    check_same_shape(
        (p.width(), p.height()),
        (g.width(), g.height()),
        "map size mismatch",
    )?;
    Ok((p, g))
}

fn eval(pred: &Path, gt: &Path, out: Option<&Path>) -> Outcome {
    let (p, g) = read_pair(pred, gt)?;
    let errors: Vec<f64> = angular_errors(&p, &g)?.into_iter().flatten().collect();
    let report: MetricsReport = summarize(&errors)?;
    emit_json(
        out,
        &EvalJson {
            pixels: errors.len(),
            report,
        },
    )
}

#[derive(Serialize)]
struct EvalJson {
    pixels: usize,
    #[serde(flatten)]
    report: MetricsReport,
}

#[derive(Serialize)]
struct SparsifyJson {
    metric: String,
    pixels: usize,
    ausc: f64,
    ausc_oracle: f64,
    ause: f64,
}

fn sparsify(
    pred: &Path,
    gt: &Path,
    kappa: &Path,
    metric: &str,
    out_csv: Option<&Path>,
    out_json: Option<&Path>,
) -> Outcome {
    let metric: Metric = metric
        .parse()
        .map_err(|e: angmf::Error| Failure::usage(e.to_string()))?;
    let (p, g) = read_pair(pred, gt)?;
    let k = read_kappa_map(kappa).map_err(at(kappa))?;
    check_same_shape(
        (p.width(), p.height()),
        (k.width(), k.height()),
        "kappa map size mismatch",
    )?;
    let errors = angular_errors(&p, &g)?;
    let mut samples = Vec::new();
    for (i, e) in errors.iter().enumerate() {
        if let (Some(e), Some(kappa)) = (e, k.get(i)) {
            let u = expected_angular_error(kappa)?.radians();
            samples.push(ErrorSample::new(*e, u)?);
        }
    }
    let est = sparsification(&samples, metric)?;
    let ora = oracle_curve(&samples, metric)?;

    let mut csv = CsvWriter::new(sink(out_csv)?, &["x_percent", "estimated", "oracle"])?;
    for ((x, e), (_, o)) in est.points().zip(ora.points()) {
        csv.row(&[x as f64, e, o])?;
    }
    csv.finish()?.flush()?;

    let summary = SparsifyJson {
        metric: metric.name(),
        pixels: samples.len(),
        ausc: ausc(&est),
        ausc_oracle: ausc(&ora),
        ause: ause(&est, &ora)?,
    };
    match (out_json, out_csv) {
        (Some(path), _) => emit_json(Some(path), &summary),
        // stdout already carries the CSV
        (None, None) => Ok(()),
        (None, Some(_)) => emit_json(None, &summary),
    }
}

fn sample(mu: Vec3, kappa: f64, n: usize, seed: u64, dist: Dist, out: Option<&Path>) -> Outcome {
    let mu = unit(mu, "--mu")?;
    let mut rng = RngState::new(seed);
    let samples = match dist {
        Dist::Angmf => sample_angmf(&AngMFParams::new(mu, kappa)?, &mut rng, n),
        Dist::Vonmf => sample_vonmf(&VonMFParams::new(mu, kappa)?, &mut rng, n),
    };
    write_vectors_csv(sink(out)?, &samples)?.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitJson {
    estimator: &'static str,
    samples: usize,
    direction: UnitVector3,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient_norm: Option<f64>,
    iterations: usize,
    converged: bool,
}

fn fit(path: &Path, estimator: Estimator, tol: f64, out: Option<&Path>) -> Outcome {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Failure::usage(format!("--tol must be positive, got {tol}")));
    }
    let text = fs::read_to_string(path).map_err(|e| at(path)(e.into()))?;
    let samples = parse_vectors_csv(&text).map_err(at(path))?;
    if samples.len() < 2 {
        return Err(Failure::usage(format!(
            "{}: need at least 2 samples, found {}",
            path.display(),
            samples.len()
        )));
    }
    let json = match estimator {
        Estimator::Mean => FitJson {
            estimator: "mean",
            samples: samples.len(),
            direction: mean_direction(&samples)?,
            kappa: None,
            objective: None,
            gradient_norm: None,
            iterations: 0,
            converged: true,
        },
        Estimator::Median => {
            let r = spherical_median(&samples, tol)?;
            FitJson {
                estimator: "median",
                samples: samples.len(),
                direction: r.direction,
                kappa: None,
                objective: Some(r.cost),
                gradient_norm: Some(r.gradient_norm),
                iterations: r.iterations,
                converged: r.converged,
            }
        }
        Estimator::Mle => {
            let r = fit_angmf_mle(&samples, tol)?;
            FitJson {
                estimator: "mle",
                samples: samples.len(),
                direction: r.params.mu(),
                kappa: Some(r.params.kappa()),
                objective: Some(r.final_nll),
                gradient_norm: None,
                iterations: r.iterations,
                converged: r.converged,
            }
        }
    };
    emit_json(out, &json)?;
    if !json.converged {
        return Err(Failure::numerical(format!(
            "{} estimator did not converge in {} iterations",
            json.estimator, json.iterations
        )));
    }
    Ok(())
}

fn expected_error(kappas: &[f64]) -> Outcome {
    let mut csv = CsvWriter::new(io::stdout().lock(), &["kappa", "expected_error_deg"])?;
    for &k in kappas {
        csv.row(&[k, expected_angular_error(k)?.degrees()])?;
    }
    csv.finish()?.flush()?;
    Ok(())
}

fn select(path: &Path, rs: f64, beta: f64, seed: u64, out: Option<&Path>) -> Outcome {
    let cfg = SelectionConfig::new(rs, beta)?;
    let map = read_kappa_map(path).map_err(at(path))?;
    let mut uncertainty = vec![0.0; map.len()];
    let mut valid = vec![false; map.len()];
    for i in 0..map.len() {
        if let Some(k) = map.get(i) {
            uncertainty[i] = expected_angular_error(k)?.radians();
            valid[i] = true;
        }
    }
    let sel = select_pixels(&uncertainty, &valid, &cfg, &mut RngState::new(seed))?;
    let mut csv = CsvWriter::new(sink(out)?, &["pixel", "kind"])?;
    for &i in &sel.importance {
        csv.row(&[i.to_string(), "importance".into()])?;
    }
    for &i in &sel.coverage {
        csv.row(&[i.to_string(), "coverage".into()])?;
    }
    csv.finish()?.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundaryJson {
    trials: u64,
    samples_per_trial: usize,
    separation_deg: f64,
    contamination: f64,
    jitter_kappa: Option<f64>,
    median_wins: u64,
    mean_error_deg: f64,
    median_error_deg: f64,
    median_not_converged: u64,
}

#[allow(clippy::too_many_arguments)]
fn simulate_boundary(
    normal_a: Vec3,
    separation_deg: f64,
    contamination: f64,
    jitter_kappa: f64,
    samples: usize,
    trials: u64,
    seed: u64,
    out: Option<&Path>,
) -> Outcome {
    let a = unit(normal_a, "--normal-a")?;
    if !(0.0..=180.0).contains(&separation_deg) {
        return Err(Failure::usage(format!(
            "--separation-deg must lie in [0, 180], got {separation_deg}"
        )));
    }
    if samples == 0 || trials == 0 {
        return Err(Failure::usage("--samples and --trials must be positive"));
    }
    let b = a.rotate_about(tangent_basis(a).e1, separation_deg.to_radians());
    let scene = TwoPlaneScene::new(a, b, contamination, jitter_kappa)?;
    let (mut wins, mut stalled) = (0, 0);
    let (mut mean_err, mut median_err) = (0.0, 0.0);
    for t in 0..trials {
        let pixels = sample_boundary_pixels(&scene, &mut RngState::for_stream(seed, t), samples);
        let m = mean_direction(&pixels)?;
        let md = spherical_median(&pixels, angmf::estimators::DEFAULT_TOL)?;
        let (em, emd) = (
            angle_between(m, a).degrees(),
            angle_between(md.direction, a).degrees(),
        );
        wins += u64::from(emd < em);
        stalled += u64::from(!md.converged);
        mean_err += em;
        median_err += emd;
    }
    emit_json(
        out,
        &BoundaryJson {
            trials,
            samples_per_trial: samples,
            separation_deg,
            contamination,
            jitter_kappa: jitter_kappa.is_finite().then_some(jitter_kappa),
            median_wins: wins,
            mean_error_deg: mean_err / trials as f64,
            median_error_deg: median_err / trials as f64,
            median_not_converged: stalled,
        },
    )
}

impl FrameArgs {
    fn noise(&self) -> Result<NoiseConfig, Failure> {
        let noise = NoiseConfig {
            jitter_kappa: self.jitter_kappa,
            contamination: self.contamination,
            prediction_noise: self.prediction_noise,
            hint_noise: self.hint_noise,
        };
        noise.validate()?;
        Ok(noise)
    }

    fn check(&self) -> Outcome {
        if self.width == 0 || self.height == 0 || self.planes == 0 {
            return Err(Failure::usage(
                "--width, --height and --planes must be positive",
            ));
        }
        Ok(())
    }

    /// Frame `k` of the stream for `seed`: the layout draws from stream
    /// `2k` and the pixels from stream `2k + 1`.
    fn frame(&self, noise: &NoiseConfig, seed: u64, k: u64) -> Result<SyntheticFrame, Failure> {
        let layout = FrameLayout::random(
            self.width,
            self.height,
            self.planes,
            &mut RngState::for_stream(seed, 2 * k),
        );
        Ok(make_frame(
            &layout,
            noise,
            &mut RngState::for_stream(seed, 2 * k + 1),
        )?)
    }
}

struct DemoOutputs {
    weights: Option<PathBuf>,
    history: Option<PathBuf>,
    summary: Option<PathBuf>,
}

#[derive(Serialize)]
struct HoldoutJson {
    frames: usize,
    #[serde(flatten)]
    report: MetricsReport,
    boundary_mean_deg: Option<f64>,
    uncertainty_error_spearman: Option<f64>,
}

#[derive(Serialize)]
struct DemoJson {
    config: TrainConfig,
    frames: usize,
    final_epoch: Option<angmf::refine::EpochStats>,
    holdout: Option<HoldoutJson>,
}

fn refine_demo(
    args: &FrameArgs,
    count: usize,
    holdout: usize,
    cfg: &TrainConfig,
    out: &DemoOutputs,
) -> Outcome {
    args.check()?;
    let noise = args.noise()?;
    if count == 0 || cfg.epochs == 0 || cfg.hidden == 0 || cfg.batch_size == 0 {
        return Err(Failure::usage(
            "--count, --epochs, --hidden and --batch-size must be positive",
        ));
    }
    let frames = (0..count as u64)
        .map(|k| args.frame(&noise, cfg.seed, k))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = train(&frames, cfg)?;

    let held = (0..holdout as u64)
        .map(|k| args.frame(&noise, cfg.seed, count as u64 + k))
        .collect::<Result<Vec<_>, _>>()?;
    let holdout_json = if held.is_empty() {
        None
    } else {
        let (mut errors, mut unc, mut boundary) = (Vec::new(), Vec::new(), Vec::new());
        for f in &held {
            let e = evaluate_frame(&outcome.mlp, f)?;
            boundary.extend(
                e.errors_deg
                    .iter()
                    .zip(&f.boundary_mask)
                    .filter(|(_, &b)| b)
                    .map(|(e, _)| *e),
            );
            errors.extend(e.errors_deg);
            unc.extend(e.uncertainty_deg);
        }
        Some(HoldoutJson {
            frames: held.len(),
            report: summarize(&errors)?,
            boundary_mean_deg: (!boundary.is_empty())
                .then(|| boundary.iter().sum::<f64>() / boundary.len() as f64),
            uncertainty_error_spearman: spearman(&unc, &errors).ok(),
        })
    };

    if let Some(p) = &out.weights {
        write_weights(p, &outcome.mlp).map_err(at(p))?;
    }
    if let Some(p) = &out.history {
        write_history_csv(sink(Some(p))?, &outcome.history)?.flush()?;
    }
    emit_json(
        out.summary.as_deref(),
        &DemoJson {
            config: *cfg,
            frames: frames.len(),
            final_epoch: outcome.history.last().copied(),
            holdout: holdout_json,
        },
    )
}

fn synth_frame(
    args: &FrameArgs,
    seed: u64,
    out_gt: &Path,
    out_pred: &Path,
    refine: Option<(PathBuf, PathBuf)>,
) -> Outcome {
    args.check()?;
    let frame = args.frame(&args.noise()?, seed, 0)?;
    write_normal_map(out_gt, &frame.gt).map_err(at(out_gt))?;
    let (w, h) = (frame.width, frame.height);
    match refine {
        None => {
            let coarse: Vec<_> = frame.coarse_prediction().into_iter().map(Some).collect();
            let pred = NormalMap::from_directions(w, h, &coarse)?;
            write_normal_map(out_pred, &pred).map_err(at(out_pred))?;
        }
        Some((weights, out_kappa)) => {
            let mlp: RefineMLP = read_weights(&weights).map_err(at(&weights))?;
            let params = mlp.predict(&frame)?;
            let mus: Vec<_> = params.iter().map(|p| Some(p.mu())).collect();
            let kappas: Vec<_> = params.iter().map(|p| Some(p.kappa())).collect();
            write_normal_map(out_pred, &NormalMap::from_directions(w, h, &mus)?)
                .map_err(at(out_pred))?;
            write_kappa_map(&out_kappa, &KappaMap::from_values(w, h, &kappas)?)
                .map_err(at(&out_kappa))?;
        }
    }
    Ok(())
}
