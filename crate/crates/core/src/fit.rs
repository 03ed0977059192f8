//! Optimization baseline: recover a [`ParamVector`] from 2D keypoints by minimizing
//! reprojection error.
//!
//! Two stages. A parallel-projection initializer alternates closed-form least squares
//! on the structural weights and translation with damped Gauss-Newton steps on the
//! rotation, from a fan of starting azimuths, and also returns the best depth-mirrored
//! alternative. Each candidate is then refined under full perspective (including
//! `inv_f`) with Levenberg-Marquardt over several jittered restarts.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{
    angles_from_rotation, project_skeleton, projection_with_jacobian, rotation_from_angles,
    Keypoints2D, ParamVector,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_FIT};
use crate::skeleton::BaseShapeSet;
use crate::synth::{argmax_keypoints, HeatmapStack};

/// Step rule used by the refinement stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Descent {
    #[default]
    LevenbergMarquardt,
    /// Plain gradient descent with an adaptive step, kept for ablations.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
    /// Stop when the cost gradient's ∞-norm drops below this.
    pub grad_tol: f64,
    pub descent: Descent,
    /// When false, `inv_f` stays at its initial value.
    pub optimize_inv_f: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 500,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            rel_tol: 1e-10,
            grad_tol: 1e-9,
            descent: Descent::LevenbergMarquardt,
            optimize_inv_f: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig("restarts and max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub s_hat: ParamVector,
    /// Mean squared reprojection residual over visible keypoints.
    pub final_cost: f64,
    pub converged: bool,
    pub restarts_used: usize,
    /// Final cost of every restart trajectory, in restart order.
    pub restart_costs: Vec<f64>,
    /// Iterations taken by the winning trajectory.
    pub iterations: usize,
    /// Cost after each accepted step of the winning trajectory (starting cost first).
    pub cost_trace: Vec<f64>,
}

/// Mean over visible keypoints of the squared distance between the projection of
/// `s` and `x_obs`. A depth singularity yields `+∞`.
pub fn reprojection_cost(s: &ParamVector, x_obs: &Keypoints2D, bases: &BaseShapeSet) -> Result<f64> {
    check_observation(x_obs, bases)?;
    match project_skeleton(s, bases) {
        Ok(x) => Ok(mean_sq(&x, x_obs)),
        Err(Error::DepthSingularity { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn mean_sq(x: &Keypoints2D, x_obs: &Keypoints2D) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..x_obs.len() {
        if x_obs.visible[i] {
            sum += (x.coords.column(i) - x_obs.coords.column(i)).norm_squared();
            n += 1;
        }
    }
    sum / n.max(1) as f64
}

fn check_observation(x_obs: &Keypoints2D, bases: &BaseShapeSet) -> Result<()> {
    if x_obs.len() != bases.num_keypoints() {
        return Err(Error::DimensionMismatch {
            what: "observed keypoints",
            expected: bases.num_keypoints(),
            got: x_obs.len(),
        });
    }
    for i in 0..x_obs.len() {
        if x_obs.visible[i] && x_obs.coords.column(i).iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!("visible keypoint {i} is not finite")));
        }
    }
    Ok(())
}

/// Least-squares problem over a subset of the flattened parameters.
struct Problem<'a> {
    bases: &'a BaseShapeSet,
    x_obs: &'a Keypoints2D,
    free: Vec<usize>,
    visible_rows: Vec<usize>,
    num_visible: f64,
}

impl<'a> Problem<'a> {
    fn new(bases: &'a BaseShapeSet, x_obs: &'a Keypoints2D, free: Vec<usize>) -> Self {
        let visible_rows: Vec<usize> = (0..x_obs.len())
            .filter(|&i| x_obs.visible[i])
            .flat_map(|i| [2 * i, 2 * i + 1])
            .collect();
        let num_visible = (visible_rows.len() / 2).max(1) as f64;
        Self {
            bases,
            x_obs,
            free,
            visible_rows,
            num_visible,
        }
    }

    fn cost(&self, s: &ParamVector) -> f64 {
        match project_skeleton(s, self.bases) {
            Ok(x) => mean_sq(&x, self.x_obs),
            Err(_) => f64::INFINITY,
        }
    }

    /// Residuals (visible rows) and the Jacobian restricted to free columns.
    fn linearize(&self, s: &ParamVector) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (x, jac) = projection_with_jacobian(s, self.bases).ok()?;
        let m = self.visible_rows.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, self.free.len());
        for (row, &src) in self.visible_rows.iter().enumerate() {
            r[row] = x.coords[src] - self.x_obs.coords[src];
            for (col, &c) in self.free.iter().enumerate() {
                j[(row, col)] = jac[(src, c)];
            }
        }
        Some((r, j))
    }

    fn step(&self, s: &ParamVector, delta: &DVector<f64>) -> ParamVector {
        let mut v = s.to_vec();
        for (d, &c) in delta.iter().zip(&self.free) {
            v[c] += d;
        }
        let last = v.len() - 1;
        v[last] = v[last].max(0.0);
        ParamVector::from_slice(&v, self.bases.num_bases()).expect("layout preserved")
    }
}

struct Trajectory {
    s: ParamVector,
    cost: f64,
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
}

fn minimize(problem: &Problem, init: &ParamVector, cfg: &FitConfig) -> Trajectory {
    let mut s = init.clone();
    let mut cost = problem.cost(&s);
    let mut trace = vec![cost];
    if !cost.is_finite() || problem.free.is_empty() {
        return Trajectory { s, cost, converged: false, iterations: 0, trace };
    }
    let mut lambda = cfg.lambda_init;
    let mut gd_step = 1e-2;
    let mut converged = false;
    let mut iterations = 0;
    let mut lin = problem.linearize(&s);
    while iterations < cfg.max_iters {
        let Some((r, j)) = lin.as_ref() else { break };
        let g = j.tr_mul(r);
        let grad_inf = g.amax() * 2.0 / problem.num_visible;
        if grad_inf < cfg.grad_tol || cost == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let delta = match cfg.descent {
            Descent::LevenbergMarquardt => {
                let mut a = j.tr_mul(j);
                let floor = 1e-12 * a.diagonal().max().max(1e-12);
                for d in 0..a.nrows() {
                    a[(d, d)] += lambda * (a[(d, d)] + floor);
                }
                match a.cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => {
                        lambda *= cfg.lambda_up;
                        continue;
                    }
                }
            }
            Descent::GradientDescent => -&g * (gd_step * 2.0 / problem.num_visible),
        };
        let candidate = problem.step(&s, &delta);
        let new_cost = problem.cost(&candidate);
        if new_cost < cost {
            let rel = (cost - new_cost) / cost;
            s = candidate;
            cost = new_cost;
            trace.push(cost);
            lambda = (lambda * cfg.lambda_down).max(1e-15);
            gd_step *= 1.5;
            lin = problem.linearize(&s);
            if rel < cfg.rel_tol {
                converged = true;
                break;
            }
        } else {
            lambda *= cfg.lambda_up;
            gd_step *= 0.5;
            if lambda > 1e14 || gd_step < 1e-14 {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }
    Trajectory { s, cost, converged, iterations, trace }
}

fn free_indices(num_bases: usize, optimize_inv_f: bool, optimize_tz: bool) -> Vec<usize> {
    let k = num_bases - 1;
    let mut free: Vec<usize> = (0..k + 5).collect();
    if optimize_tz {
        free.push(k + 5);
    }
    if optimize_inv_f {
        free.push(k + 6);
    }
    free
}

/// Closed-form least squares for `(alpha_free, t_x, t_y)` under parallel projection
/// with the rotation of `s` held fixed.
fn solve_structure_parallel(s: &mut ParamVector, x_obs: &Keypoints2D, bases: &BaseShapeSet) {
    let k = bases.num_bases() - 1;
    let r = rotation_from_angles(s.azimuth, s.elevation, s.tilt);
    let r2 = r.fixed_rows::<2>(0);
    let rows: Vec<usize> = (0..x_obs.len()).filter(|&i| x_obs.visible[i]).collect();
    let mut a = DMatrix::zeros(2 * rows.len(), k + 2);
    let mut b = DVector::zeros(2 * rows.len());
    for (n, &i) in rows.iter().enumerate() {
        let mean = r2 * bases.bases()[0].column(i);
        for c in 0..2 {
            b[2 * n + c] = x_obs.coords[(c, i)] - mean[c];
            a[(2 * n + c, k + c)] = 1.0;
        }
        for kk in 0..k {
            let d = r2 * bases.bases()[kk + 1].column(i);
            a[(2 * n, kk)] = d[0];
            a[(2 * n + 1, kk)] = d[1];
        }
    }
    if let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) {
        if sol.iter().all(|v| v.is_finite()) {
            s.alpha_free.copy_from_slice(&sol.as_slice()[..k]);
            s.t[0] = sol[k];
            s.t[1] = sol[k + 1];
        }
    }
}

fn parallel_fit_from(
    start: ParamVector,
    x_obs: &Keypoints2D,
    bases: &BaseShapeSet,
    cfg: &FitConfig,
) -> (ParamVector, f64) {
    let k = bases.num_bases() - 1;
    let pose_only = Problem::new(bases, x_obs, (k..k + 5).collect());
    let joint = Problem::new(bases, x_obs, free_indices(bases.num_bases(), false, false));
    let short = FitConfig { max_iters: 5, ..cfg.clone() };
    let mut s = start;
    for _ in 0..8 {
        solve_structure_parallel(&mut s, x_obs, bases);
        s = minimize(&pose_only, &s, &short).s;
    }
    let t = minimize(&joint, &s, cfg);
    (t.s, t.cost)
}

fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Best parallel-projection solution and its best depth-mirrored alternative.
///
/// The mirrored candidate reflects the camera-frame depth axis (`R → D·R·M`, where
/// `D` flips camera z and `M` is one of the three object-frame axis mirrors) and
/// re-fits; for shapes closed under the chosen mirror both candidates reproduce the
/// observation equally well.
pub fn fit_parallel_candidates(
    x_obs: &Keypoints2D,
    bases: &BaseShapeSet,
    cfg: &FitConfig,
) -> Result<[ParamVector; 2]> {
    check_observation(x_obs, bases)?;
    let visible = x_obs.num_visible();
    if visible < 4 {
        return Err(Error::DegenerateInput(format!(
            "parallel initialization needs at least 4 visible keypoints, got {visible}"
        )));
    }
    let k = bases.num_bases();
    let mut best: Option<(ParamVector, f64)> = None;
    for a in 0..8 {
        let mut start = ParamVector::identity(k);
        start.azimuth = FRAC_PI_4 * a as f64 + PI / 8.0;
        start.elevation = 0.3;
        let (s, cost) = parallel_fit_from(start, x_obs, bases, cfg);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((s, cost));
        }
    }
    let (primary, _) = best.expect("eight starts");
    let r = rotation_from_angles(primary.azimuth, primary.elevation, primary.tilt);
    let flip_depth = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, -1.0));
    let mut mirrored: Option<(ParamVector, f64)> = None;
    for axis in 0..3 {
        let mut m = nalgebra::Vector3::repeat(1.0);
        m[axis] = -1.0;
        let rf = flip_depth * r * Matrix3::from_diagonal(&m);
        let (az, el, tilt) = angles_from_rotation(&rf);
        let mut start = primary.clone();
        start.azimuth = az;
        start.elevation = el;
        start.tilt = tilt;
        let (s, cost) = parallel_fit_from(start, x_obs, bases, cfg);
        let rs = rotation_from_angles(s.azimuth, s.elevation, s.tilt);
        // a mirror fit that slid back onto the primary is no alternative
        let distinct = geodesic_angle(&rs, &r) > 1e-3;
        if distinct && mirrored.as_ref().is_none_or(|(_, c)| cost < *c) {
            mirrored = Some((s, cost));
        }
    }
    let mirrored = mirrored.map(|(s, _)| s).unwrap_or_else(|| primary.clone());
    Ok([primary, mirrored])
}

/// Parallel-projection (`inv_f = 0`) initial guess.
pub fn fit_parallel_init(x_obs: &Keypoints2D, bases: &BaseShapeSet) -> Result<ParamVector> {
    let [primary, _] = fit_parallel_candidates(x_obs, bases, &FitConfig::default())?;
    Ok(primary)
}

fn jitter<R: Rng>(s: &ParamVector, rng: &mut R) -> ParamVector {
    let n = |sd: f64| Normal::new(0.0, sd).expect("positive std");
    let mut out = s.clone();
    for a in out.alpha_free.iter_mut() {
        *a += n(0.3).sample(rng);
    }
    out.azimuth += n(0.4).sample(rng);
    out.elevation += n(0.2).sample(rng);
    out.tilt += n(0.1).sample(rng);
    for t in out.t.iter_mut() {
        *t += n(0.05).sample(rng);
    }
    out.inv_f = rng.random_range(0.0..0.8);
    out
}

/// Perspective refinement from `init` plus `cfg.restarts - 1` jittered copies;
/// returns the lowest-cost trajectory (ties go to the lowest restart index).
pub fn fit_perspective(
    x_obs: &Keypoints2D,
    bases: &BaseShapeSet,
    init: &ParamVector,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    check_observation(x_obs, bases)?;
    init.decode()?;
    if init.alpha_free.len() + 1 != bases.num_bases() {
        return Err(Error::DimensionMismatch {
            what: "initial parameter vector",
            expected: ParamVector::dim_for(bases.num_bases()),
            got: init.dim(),
        });
    }
    let free = free_indices(bases.num_bases(), cfg.optimize_inv_f, true);
    let problem = Problem::new(bases, x_obs, free);
    let mut restart_costs = Vec::with_capacity(cfg.restarts);
    let mut best: Option<Trajectory> = None;
    for r in 0..cfg.restarts {
        let start = if r == 0 {
            init.clone()
        } else {
            let mut rng = stream_rng(cfg.seed, STREAM_FIT, r as u64);
            let mut j = jitter(init, &mut rng);
            if !cfg.optimize_inv_f {
                j.inv_f = init.inv_f;
            }
            j
        };
        let t = minimize(&problem, &start, cfg);
        restart_costs.push(t.cost);
        if best.as_ref().is_none_or(|b| t.cost < b.cost) {
            best = Some(t);
        }
    }
    let best = best.expect("at least one restart");
    Ok(FitResult {
        s_hat: best.s,
        final_cost: best.cost,
        converged: best.converged,
        restarts_used: cfg.restarts,
        restart_costs,
        iterations: best.iterations,
        cost_trace: best.trace,
    })
}

/// Parallel candidates followed by perspective refinement of each; keeps the best.
pub fn fit_keypoints(x_obs: &Keypoints2D, bases: &BaseShapeSet, cfg: &FitConfig) -> Result<FitResult> {
    let candidates = fit_parallel_candidates(x_obs, bases, cfg)?;
    let mut best: Option<FitResult> = None;
    let mut costs = Vec::new();
    for c in &candidates {
        let r = fit_perspective(x_obs, bases, c, cfg)?;
        costs.extend_from_slice(&r.restart_costs);
        if best.as_ref().is_none_or(|b| r.final_cost < b.final_cost) {
            best = Some(r);
        }
    }
    let mut best = best.expect("two candidates");
    best.restarts_used = costs.len();
    best.restart_costs = costs;
    Ok(best)
}

/// Argmax decoding followed by [`fit_keypoints`].
pub fn fit_from_heatmaps(h: &HeatmapStack, bases: &BaseShapeSet, cfg: &FitConfig) -> Result<FitResult> {
    if h.channels != bases.num_keypoints() {
        return Err(Error::DimensionMismatch {
            what: "heatmap channels",
            expected: bases.num_keypoints(),
            got: h.channels,
        });
    }
    fit_keypoints(&argmax_keypoints(h), bases, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::project_shape;
    use crate::skeleton::{compose_skeleton, SkeletonSpec, StructuralParams};
    use crate::synth::{sample_params, SamplerConfig};
    use nalgebra::{Matrix2xX, Matrix3xX};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chair() -> BaseShapeSet {
        BaseShapeSet::bundled("chair").unwrap()
    }

    #[test]
    fn exact_observation_has_zero_cost() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_params(&SamplerConfig::default(), &bases, &mut rng).unwrap();
        let x = project_skeleton(&s, &bases).unwrap();
        assert_eq!(reprojection_cost(&s, &x, &bases).unwrap(), 0.0);
    }

    #[test]
    fn depth_singularity_costs_infinity() {
        let bases = chair();
        let x = project_skeleton(&ParamVector::identity(4), &bases).unwrap();
        let mut s = ParamVector::identity(4);
        s.inv_f = 50.0;
        assert_eq!(reprojection_cost(&s, &x, &bases).unwrap(), f64::INFINITY);
    }

    #[test]
    fn cost_ignores_invisible_keypoints() {
        let bases = chair();
        let s = ParamVector::identity(4);
        let mut x = project_skeleton(&s, &bases).unwrap();
        x.coords[(0, 3)] = f64::NAN;
        x.visible[3] = false;
        assert_eq!(reprojection_cost(&s, &x, &bases).unwrap(), 0.0);
    }

    #[test]
    fn translation_only_fit_recovers_shift() {
        let bases = chair();
        let s = ParamVector::identity(4);
        let mut x = project_skeleton(&s, &bases).unwrap();
        for mut c in x.coords.column_iter_mut() {
            c[0] += 0.07;
            c[1] -= 0.03;
        }
        let k = 3;
        let problem = Problem::new(&bases, &x, vec![k + 3, k + 4]);
        let t = minimize(&problem, &s, &FitConfig::default());
        assert!(t.cost < 1e-20);
        assert!((t.s.t[0] - 0.07).abs() < 1e-9 && (t.s.t[1] + 0.03).abs() < 1e-9);
    }

    #[test]
    fn cost_is_invariant_to_consistent_keypoint_permutation() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_params(&SamplerConfig::default(), &bases, &mut rng).unwrap();
        let mut x = project_skeleton(&s, &bases).unwrap();
        x.coords[(0, 2)] += 0.05;
        let perm = [3, 1, 4, 0, 9, 7, 2, 8, 6, 5];
        let names = perm.iter().map(|&i| bases.spec.keypoint_names[i].clone()).collect();
        let inv: Vec<usize> = (0..10).map(|i| perm.iter().position(|&p| p == i).unwrap()).collect();
        let edges = bases.spec.edges.iter().map(|&(a, b)| (inv[a], inv[b])).collect();
        let spec = SkeletonSpec::new("chair", names, edges).unwrap();
        let permuted_bases: Vec<Matrix3xX<f64>> = bases
            .bases()
            .iter()
            .map(|b| Matrix3xX::from_columns(&perm.iter().map(|&i| b.column(i)).collect::<Vec<_>>()))
            .collect();
        let pb = BaseShapeSet::new(spec, permuted_bases).unwrap();
        let px = Keypoints2D::new(Matrix2xX::from_columns(
            &perm.iter().map(|&i| x.coords.column(i)).collect::<Vec<_>>(),
        ));
        let a = reprojection_cost(&s, &x, &bases).unwrap();
        let b = reprojection_cost(&s, &px, &pb).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn parallel_init_recovers_clean_parallel_instances() {
        let bases = chair();
        let cfg = SamplerConfig { inv_f: crate::synth::Range::point(0.0), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut good = 0;
        for _ in 0..20 {
            let s = sample_params(&cfg, &bases, &mut rng).unwrap();
            let x = project_skeleton(&s, &bases).unwrap();
            let init = fit_parallel_init(&x, &bases).unwrap();
            assert_eq!(init.inv_f, 0.0);
            if reprojection_cost(&init, &x, &bases).unwrap() < 1e-8 {
                good += 1;
            }
        }
        assert!(good >= 19, "{good}/20 clean parallel fits");
    }

    #[test]
    fn mean_shape_at_identity_pose_gives_zero_deformation() {
        let bases = chair();
        let x = project_skeleton(&ParamVector::identity(4), &bases).unwrap();
        let init = fit_parallel_init(&x, &bases).unwrap();
        assert!(reprojection_cost(&init, &x, &bases).unwrap() < 1e-12);
        for a in &init.alpha_free {
            assert!(a.abs() < 1e-4, "{:?}", init.alpha_free);
        }
    }

    #[test]
    fn planar_shape_mirror_candidates_tie() {
        // flat object: depth reflection is an exact ambiguity of parallel projection
        let names = (0..5).map(|i| format!("k{i}")).collect();
        let spec = SkeletonSpec::new("plate", names, vec![(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let flat = Matrix3xX::from_column_slice(&[
            -0.3, -0.2, 0.0, 0.3, -0.25, 0.0, 0.35, 0.3, 0.0, -0.2, 0.3, 0.0, 0.05, 0.0, 0.0,
        ]);
        let bases = BaseShapeSet::new(spec, vec![flat]).unwrap();
        let mut s = ParamVector::identity(1);
        s.azimuth = 0.5;
        s.elevation = 0.4;
        s.tilt = 0.1;
        let x = project_skeleton(&s, &bases).unwrap();
        let [a, b] = fit_parallel_candidates(&x, &bases, &FitConfig::default()).unwrap();
        let ca = reprojection_cost(&a, &x, &bases).unwrap();
        let cb = reprojection_cost(&b, &x, &bases).unwrap();
        assert!(ca < 1e-12 && cb < 1e-12, "{ca} {cb}");
        let ra = rotation_from_angles(a.azimuth, a.elevation, a.tilt);
        let rb = rotation_from_angles(b.azimuth, b.elevation, b.tilt);
        assert!(geodesic_angle(&ra, &rb) > 0.1);
    }

    #[test]
    fn too_few_visible_keypoints_is_degenerate() {
        let bases = chair();
        let mut x = project_skeleton(&ParamVector::identity(4), &bases).unwrap();
        for v in x.visible.iter_mut().skip(3) {
            *v = false;
        }
        assert!(matches!(
            fit_parallel_init(&x, &bases),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn ground_truth_init_converges_immediately() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let s = sample_params(&SamplerConfig::default(), &bases, &mut rng).unwrap();
            let x = project_skeleton(&s, &bases).unwrap();
            let r = fit_perspective(&x, &bases, &s, &FitConfig::default()).unwrap();
            assert!(r.converged);
            assert!(r.final_cost < 1e-12);
            assert!(r.iterations <= 5);
        }
    }

    #[test]
    fn accepted_steps_never_increase_cost_and_best_restart_wins() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for descent in [Descent::LevenbergMarquardt, Descent::GradientDescent] {
            let cfg = FitConfig { descent, max_iters: 200, ..Default::default() };
            let s = sample_params(&SamplerConfig::default(), &bases, &mut rng).unwrap();
            let mut x = project_skeleton(&s, &bases).unwrap();
            x.coords[(1, 4)] += 0.04;
            let init = ParamVector::identity(4);
            let r = fit_perspective(&x, &bases, &init, &cfg).unwrap();
            assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0]));
            let min = r.restart_costs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(r.final_cost, min);
            assert_eq!(r.restart_costs.len(), 8);
            assert!(r.final_cost <= reprojection_cost(&init, &x, &bases).unwrap());
            assert!(r.s_hat.inv_f >= 0.0);
        }
    }

    #[test]
    fn frozen_inv_f_matches_parallel_init() {
        let bases = chair();
        let cfg = SamplerConfig { inv_f: crate::synth::Range::point(0.0), ..Default::default() };
        let fit_cfg = FitConfig { optimize_inv_f: false, restarts: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let s = sample_params(&cfg, &bases, &mut rng).unwrap();
            let x = project_skeleton(&s, &bases).unwrap();
            let init = fit_parallel_init(&x, &bases).unwrap();
            let c0 = reprojection_cost(&init, &x, &bases).unwrap();
            let r = fit_perspective(&x, &bases, &init, &fit_cfg).unwrap();
            assert_eq!(r.s_hat.inv_f, 0.0);
            assert!((r.final_cost - c0).abs() < 1e-8);
        }
    }

    #[test]
    fn perspective_round_trip_recovers_structure() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut good = 0;
        for _ in 0..20 {
            let mut s = sample_params(&SamplerConfig::default(), &bases, &mut rng).unwrap();
            s.inv_f = 0.5;
            let Ok(x) = project_skeleton(&s, &bases) else { continue };
            let r = fit_keypoints(&x, &bases, &FitConfig::default()).unwrap();
            let y_hat = compose_skeleton(&StructuralParams::from_free(&r.s_hat.alpha_free), &bases).unwrap();
            let y = compose_skeleton(&StructuralParams::from_free(&s.alpha_free), &bases).unwrap();
            let rmse = ((y_hat.coords - y.coords).norm_squared() / 10.0).sqrt();
            if rmse < 1e-3 {
                good += 1;
            }
        }
        assert!(good >= 19, "{good}/20");
    }

    #[test]
    fn all_zero_heatmaps_do_not_crash() {
        let bases = chair();
        let h = HeatmapStack::zeros(crate::synth::HeatmapGrid::default(), 10);
        let r = fit_from_heatmaps(&h, &bases, &FitConfig { restarts: 2, ..Default::default() }).unwrap();
        assert!(r.final_cost.is_finite());
        let cam = r.s_hat.camera().unwrap();
        let y = compose_skeleton(&StructuralParams::from_free(&r.s_hat.alpha_free), &bases).unwrap();
        assert!(project_shape(&y, &cam).is_ok());
    }
}
