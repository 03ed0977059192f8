//! Recovery metrics, the noise-robustness sweep and parameter-space retrieval.
//!
//! 3D errors are measured in the canonical object frame: the shape composed from the
//! predicted structural weights is compared with the ground-truth skeleton, both
//! divided by the ground-truth diagonal length.

use std::io::Write;

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::camera::{project_skeleton, rotation_from_angles, Keypoints2D, ParamVector};
use crate::error::{Error, Result};
use crate::fit::{fit_from_heatmaps, FitConfig};
use crate::net::{Interpreter, Refiner};
use crate::rng::{stream_rng, sub_seed, STREAM_EVAL};
use crate::skeleton::{compose_skeleton, diagonal_length, BaseShapeSet, Shape3D};
use crate::synth::{corrupt_in_place, HeatmapStack, SynthSample};

/// Default AE saturation bound.
pub const AE_BOUND: f64 = 5.0;

/// PCP counts a keypoint when it lies within this many annotation standard deviations.
pub const PCP_FACTOR: f64 = 1.5;

/// Default noise levels for [`noise_sweep`].
pub const DEFAULT_NOISE_LEVELS: [f64; 6] = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4];

fn check_same_n(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// Normalized root-mean-square keypoint distance.
pub fn rmse_3d(y_hat: &Shape3D, y_true: &Shape3D) -> Result<f64> {
    check_same_n("keypoints", y_true.num_keypoints(), y_hat.num_keypoints())?;
    let diag = diagonal_length(y_true)?;
    if diag <= 0.0 {
        return Err(Error::DegenerateInput("ground-truth shape has zero diagonal".into()));
    }
    let n = y_true.num_keypoints() as f64;
    let sq = (&y_hat.coords - &y_true.coords).norm_squared() / (diag * diag);
    Ok((sq / n).sqrt())
}

/// Wrapped azimuth difference in degrees, in `[0, 180]`.
pub fn azimuth_error(s_hat: &ParamVector, s_true: &ParamVector) -> f64 {
    angle_difference_deg(s_hat.azimuth, s_true.azimuth)
}

/// `min(|Δ|, 360 − |Δ|)` for two angles given in radians.
pub fn angle_difference_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).to_degrees().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Fraction of samples with error under each threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
    pub average_recall: f64,
}

pub fn recall_curve(errors: &[f64], thresholds: &[f64]) -> Result<RecallCurve> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("errors"));
    }
    if thresholds.is_empty() {
        return Err(Error::EmptyInput("thresholds"));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("thresholds must be strictly ascending".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let recall: Vec<f64> = thresholds
        .iter()
        .map(|t| sorted.partition_point(|e| e <= t) as f64 / n)
        .collect();
    let average_recall = recall.iter().sum::<f64>() / recall.len() as f64;
    Ok(RecallCurve { thresholds: thresholds.to_vec(), recall, average_recall })
}

/// 3D RMSE thresholds 0.01, 0.02, …, 0.30.
pub fn default_rmse_thresholds() -> Vec<f64> {
    (1..=30).map(|i| i as f64 / 100.0).collect()
}

/// Azimuth thresholds 5°, 10°, …, 180°.
pub fn default_azimuth_thresholds() -> Vec<f64> {
    (1..=36).map(|i| 5.0 * i as f64).collect()
}

fn distances(pred: &Keypoints2D, gt: &Keypoints2D) -> Result<Vec<(usize, f64)>> {
    check_same_n("keypoints", gt.len(), pred.len())?;
    Ok((0..gt.len())
        .filter(|&i| gt.visible[i])
        .map(|i| (i, (pred.coords.column(i) - gt.coords.column(i)).norm()))
        .collect())
}

fn visible_or_err(d: &[(usize, f64)]) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyInput("visible ground-truth keypoints"));
    }
    Ok(d.len() as f64)
}

/// Fraction of visible ground-truth keypoints with `distance / normalizer ≤ t`.
pub fn pck(pred: &Keypoints2D, gt: &Keypoints2D, normalizer: f64, t: f64) -> Result<f64> {
    if !(normalizer > 0.0) {
        return Err(Error::InvalidConfig(format!("PCK normalizer must be > 0, got {normalizer}")));
    }
    let d = distances(pred, gt)?;
    let n = visible_or_err(&d)?;
    Ok(d.iter().filter(|(_, dist)| dist / normalizer <= t).count() as f64 / n)
}

/// Percentage of visible keypoints within `1.5·stds[k]` of the ground truth.
pub fn pcp(pred: &Keypoints2D, gt: &Keypoints2D, stds: &[f64]) -> Result<f64> {
    check_same_n("annotation stds", gt.len(), stds.len())?;
    if let Some(s) = stds.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidConfig(format!("annotation std must be > 0, got {s}")));
    }
    let d = distances(pred, gt)?;
    let n = visible_or_err(&d)?;
    let hits = d.iter().filter(|(i, dist)| *dist <= PCP_FACTOR * stds[*i]).count();
    Ok(100.0 * hits as f64 / n)
}

/// Mean keypoint distance with each term capped at `bound`.
pub fn average_error(pred: &Keypoints2D, gt: &Keypoints2D, bound: f64) -> Result<f64> {
    let d = distances(pred, gt)?;
    let n = visible_or_err(&d)?;
    Ok(d.iter().map(|(_, dist)| dist.min(bound)).sum::<f64>() / n)
}

/// Mean Euclidean distance between the projection of `s` and `gt`; infinite when the
/// projection hits a depth singularity.
pub fn reprojection_error(s: &ParamVector, gt: &Keypoints2D, bases: &BaseShapeSet) -> Result<f64> {
    let pred = match project_skeleton(s, bases) {
        Ok(x) => x,
        Err(Error::DepthSingularity { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    let d = distances(&pred, gt)?;
    let n = visible_or_err(&d)?;
    Ok(d.iter().map(|(_, dist)| dist).sum::<f64>() / n)
}

/// Which recovery method produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Fit,
    Net,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fit => "fit",
            Method::Net => "net",
        }
    }
}

/// Errors of one recovered parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleErrors {
    pub rmse_3d: f64,
    pub azimuth_deg: f64,
    pub reproj_2d: f64,
}

/// Scores `s_hat` against a sample's perturbed skeleton, azimuth and clean 2D keypoints.
pub fn score(s_hat: &ParamVector, sample: &SynthSample, bases: &BaseShapeSet) -> Result<SampleErrors> {
    let (alpha, _) = s_hat.decode()?;
    let y_hat = compose_skeleton(&alpha, bases)?;
    Ok(SampleErrors {
        rmse_3d: rmse_3d(&y_hat, &sample.y_true)?,
        azimuth_deg: azimuth_error(s_hat, &sample.s_true),
        reproj_2d: reprojection_error(s_hat, &sample.x_true, bases)?,
    })
}

/// Per-sample errors and recall curves of one method on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub noise: f64,
    pub errors: Vec<SampleErrors>,
    pub rmse_curve: RecallCurve,
    pub azimuth_curve: RecallCurve,
    /// JSON echo of whatever configuration produced the report.
    pub config: String,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n.max(1) as f64
}

impl EvalReport {
    pub fn from_errors(method: Method, noise: f64, errors: Vec<SampleErrors>, config: String) -> Result<Self> {
        let rmse: Vec<f64> = errors.iter().map(|e| e.rmse_3d).collect();
        let az: Vec<f64> = errors.iter().map(|e| e.azimuth_deg).collect();
        Ok(Self {
            method,
            noise,
            rmse_curve: recall_curve(&rmse, &default_rmse_thresholds())?,
            azimuth_curve: recall_curve(&az, &default_azimuth_thresholds())?,
            errors,
            config,
        })
    }

    pub fn mean_rmse_3d(&self) -> f64 {
        mean(self.errors.iter().map(|e| e.rmse_3d))
    }

    pub fn mean_azimuth_deg(&self) -> f64 {
        mean(self.errors.iter().map(|e| e.azimuth_deg))
    }

    pub fn mean_reproj_2d(&self) -> f64 {
        mean(self.errors.iter().map(|e| e.reproj_2d))
    }

    /// Fraction of samples whose 3D RMSE is at most `t`.
    pub fn recall_at(&self, t: f64) -> f64 {
        let hits = self.errors.iter().filter(|e| e.rmse_3d <= t).count();
        hits as f64 / self.errors.len().max(1) as f64
    }

    /// One row per sample: `index,method,noise,rmse_3d,azimuth_deg,reproj_2d`.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "index,method,noise,rmse_3d,azimuth_deg,reproj_2d")?;
        }
        for (i, e) in self.errors.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{:.9},{:.9},{:.9}",
                self.method.name(),
                self.noise,
                e.rmse_3d,
                e.azimuth_deg,
                e.reproj_2d
            )?;
        }
        Ok(())
    }
}

/// Writes `x,<name>...` rows for curves sharing one threshold grid.
pub fn write_curves_csv<W: Write>(w: &mut W, x_label: &str, curves: &[(&str, &RecallCurve)]) -> Result<()> {
    let Some((_, first)) = curves.first() else {
        return Err(Error::EmptyInput("curves"));
    };
    if curves.iter().any(|(_, c)| c.thresholds != first.thresholds) {
        return Err(Error::InvalidConfig("curves use different threshold grids".into()));
    }
    write!(w, "{x_label}")?;
    for (name, _) in curves {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (j, t) in first.thresholds.iter().enumerate() {
        write!(w, "{t}")?;
        for (_, c) in curves {
            write!(w, ",{:.9}", c.recall[j])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Test-time corruption of sample `index` at level `p`. Both methods see the same
/// corrupted stack.
pub fn corrupt_for_eval(h: &HeatmapStack, p: f64, seed: u64, index: usize) -> HeatmapStack {
    let mut out = h.clone();
    if p > 0.0 {
        let mut rng = stream_rng(sub_seed(seed, STREAM_EVAL, p.to_bits()), STREAM_EVAL, index as u64);
        corrupt_in_place(&mut out.data, p, &mut rng);
    }
    out
}

/// A recovery method ready to run on heatmaps.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Fit(&'a FitConfig),
    Net(&'a Interpreter),
}

impl Predictor<'_> {
    pub fn method(&self) -> Method {
        match self {
            Predictor::Fit(_) => Method::Fit,
            Predictor::Net(_) => Method::Net,
        }
    }

    pub fn predict(&self, h: &HeatmapStack, bases: &BaseShapeSet) -> Result<ParamVector> {
        match self {
            Predictor::Fit(cfg) => Ok(fit_from_heatmaps(h, bases, cfg)?.s_hat),
            Predictor::Net(model) => model.predict(h),
        }
    }
}

/// Runs one method over `samples` with heatmaps corrupted at level `p` and optionally
/// cleaned by `refiner` first. Samples run in parallel; results keep input order.
pub fn evaluate(
    samples: &[SynthSample],
    bases: &BaseShapeSet,
    predictor: Predictor<'_>,
    refiner: Option<&Refiner>,
    p: f64,
    seed: u64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("test samples"));
    }
    let errors = samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let mut h = corrupt_for_eval(&sample.heatmaps, p, seed, i);
            if let Some(r) = refiner {
                h = r.refine(&h)?;
            }
            let s_hat = predictor.predict(&h, bases)?;
            score(&s_hat, sample, bases)
        })
        .collect::<Result<Vec<_>>>()?;
    let config = format!(
        "{{\"method\":\"{}\",\"noise\":{p},\"seed\":{seed},\"refined\":{}}}",
        predictor.method().name(),
        refiner.is_some()
    );
    EvalReport::from_errors(predictor.method(), p, errors, config)
}

/// One row of the noise-robustness table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub noise: f64,
    pub method: Method,
    pub mean_rmse_3d: f64,
    pub mean_azimuth_deg: f64,
    pub mean_reproj_2d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSweep {
    /// `levels.len() × 2` rows, fit before net within each level.
    pub rows: Vec<SweepRow>,
    /// Places where a method's mean 3D RMSE dropped as noise increased.
    pub violations: Vec<String>,
}

impl NoiseSweep {
    pub fn row(&self, noise: f64, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.noise == noise && r.method == method)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "noise,method,mean_rmse_3d,mean_azimuth_deg,mean_reproj_2d")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.9},{:.9},{:.9}",
                r.noise,
                r.method.name(),
                r.mean_rmse_3d,
                r.mean_azimuth_deg,
                r.mean_reproj_2d
            )?;
        }
        Ok(())
    }

    /// `noise,fit,net` mean 3D RMSE per level, in the plot input format.
    pub fn write_plot_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "noise,fit,net")?;
        let mut levels: Vec<f64> = self.rows.iter().map(|r| r.noise).collect();
        levels.dedup();
        for p in levels {
            let get = |m| self.row(p, m).map_or(f64::NAN, |r| r.mean_rmse_3d);
            writeln!(w, "{p},{:.9},{:.9}", get(Method::Fit), get(Method::Net))?;
        }
        Ok(())
    }
}

/// Corrupts the test set at each level and scores both methods on it.
pub fn noise_sweep(
    test: &[SynthSample],
    bases: &BaseShapeSet,
    fit_cfg: &FitConfig,
    model: &Interpreter,
    levels: &[f64],
    seed: u64,
) -> Result<NoiseSweep> {
    if levels.is_empty() {
        return Err(Error::EmptyInput("noise levels"));
    }
    if let Some(p) = levels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidConfig(format!("noise level {p} outside [0, 1]")));
    }
    let mut rows = Vec::with_capacity(2 * levels.len());
    for &p in levels {
        for predictor in [Predictor::Fit(fit_cfg), Predictor::Net(model)] {
            let report = evaluate(test, bases, predictor, None, p, seed)?;
            log::info!(
                "noise {p}: {} mean 3D RMSE {:.4}",
                predictor.method().name(),
                report.mean_rmse_3d()
            );
            rows.push(SweepRow {
                noise: p,
                method: predictor.method(),
                mean_rmse_3d: report.mean_rmse_3d(),
                mean_azimuth_deg: report.mean_azimuth_deg(),
                mean_reproj_2d: report.mean_reproj_2d(),
            });
        }
    }
    let mut violations = Vec::new();
    for method in [Method::Fit, Method::Net] {
        let series: Vec<&SweepRow> = rows.iter().filter(|r| r.method == method).collect();
        for w in series.windows(2) {
            if w[1].noise > w[0].noise && w[1].mean_rmse_3d < w[0].mean_rmse_3d {
                violations.push(format!(
                    "{}: mean 3D RMSE drops from {:.4} at p = {} to {:.4} at p = {}",
                    method.name(),
                    w[0].mean_rmse_3d,
                    w[0].noise,
                    w[1].mean_rmse_3d,
                    w[1].noise
                ));
            }
        }
    }
    Ok(NoiseSweep { rows, violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    /// Euclidean distance between free structural weights.
    Structure,
    /// Geodesic angle between rotation matrices.
    Viewpoint,
}

/// Angle of the relative rotation `R_aᵀ R_b`, in radians.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    // ‖R_a − R_b‖_F = 2√2·sin(θ/2); exact zero for identical matrices
    let chord = (a - b).norm() / (2.0 * std::f64::consts::SQRT_2);
    2.0 * chord.min(1.0).asin()
}

pub fn retrieval_distance(query: &ParamVector, item: &ParamVector, mode: RetrievalMode) -> Result<f64> {
    match mode {
        RetrievalMode::Structure => {
            check_same_n("structural weights", query.alpha_free.len(), item.alpha_free.len())?;
            Ok(query
                .alpha_free
                .iter()
                .zip(&item.alpha_free)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt())
        }
        RetrievalMode::Viewpoint => {
            let ra = rotation_from_angles(query.azimuth, query.elevation, query.tilt);
            let rb = rotation_from_angles(item.azimuth, item.elevation, item.tilt);
            Ok(geodesic_angle(&ra, &rb))
        }
    }
}

/// The `k` nearest corpus entries as `(index, distance)`, ascending; ties keep corpus order.
pub fn retrieve(
    query: &ParamVector,
    corpus: &[ParamVector],
    mode: RetrievalMode,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("retrieval corpus"));
    }
    let mut ranked = corpus
        .iter()
        .enumerate()
        .map(|(i, item)| Ok((i, retrieval_distance(query, item, mode)?)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    ranked.truncate(k);
    Ok(ranked)
}
