//! Camera model and the projection layer.
//!
//! A camera-frame point `p = R·y + T` projects to `p_xy / (f⁻¹·p_z + 1)`. With
//! `f⁻¹ = 0` this is parallel projection; positive `f⁻¹` adds perspective
//! foreshortening with the camera centre on the optical axis at distance `f`.
//!
//! `R = R_z(tilt) · R_x(elevation) · R_y(azimuth)`: azimuth spins the object about
//! its vertical axis, elevation tips it towards the viewer, tilt rolls the image.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, Matrix2xX, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::skeleton::{compose_skeleton, BaseShapeSet, Shape3D, StructuralParams};

/// Points whose projective denominator falls to this value or below are rejected.
pub const EPS_DEPTH: f64 = 1e-6;

/// Number of non-structural entries in a [`ParamVector`].
pub const CAMERA_DIMS: usize = 7;

/// Decoded camera: Euler angles, translation and inverse focal length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    azimuth: f64,
    pub elevation: f64,
    pub tilt: f64,
    pub t: Vector3<f64>,
    inv_f: f64,
}

impl CameraParams {
    pub fn new(azimuth: f64, elevation: f64, tilt: f64, t: Vector3<f64>, inv_f: f64) -> Result<Self> {
        if !(azimuth.is_finite() && elevation.is_finite() && tilt.is_finite()) {
            return Err(Error::InvalidConfig("camera angles must be finite".into()));
        }
        if !(inv_f >= 0.0 && inv_f.is_finite()) || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "camera needs finite t and inv_f >= 0 (inv_f = {inv_f})"
            )));
        }
        Ok(Self {
            azimuth: wrap_angle(azimuth),
            elevation,
            tilt,
            t,
            inv_f,
        })
    }

    /// Azimuth in `[0, 2π)`.
    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn inv_f(&self) -> f64 {
        self.inv_f
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// The flattened parameter vector `S`.
///
/// Layout (a stable contract shared with weights and dataset files):
/// `alpha_free[0..K-1], azimuth, elevation, tilt, t_x, t_y, t_z, inv_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub alpha_free: Vec<f64>,
    pub azimuth: f64,
    pub elevation: f64,
    pub tilt: f64,
    pub t: [f64; 3],
    pub inv_f: f64,
}

impl ParamVector {
    /// Mean shape seen head-on by a parallel camera.
    pub fn identity(num_bases: usize) -> Self {
        Self {
            alpha_free: vec![0.0; num_bases.saturating_sub(1)],
            azimuth: 0.0,
            elevation: 0.0,
            tilt: 0.0,
            t: [0.0; 3],
            inv_f: 0.0,
        }
    }

    /// `|S| = (K - 1) + 7`.
    pub fn dim_for(num_bases: usize) -> usize {
        num_bases - 1 + CAMERA_DIMS
    }

    pub fn dim(&self) -> usize {
        self.alpha_free.len() + CAMERA_DIMS
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.alpha_free.clone();
        v.extend_from_slice(&[
            self.azimuth,
            self.elevation,
            self.tilt,
            self.t[0],
            self.t[1],
            self.t[2],
            self.inv_f,
        ]);
        v
    }

    pub fn from_slice(values: &[f64], num_bases: usize) -> Result<Self> {
        let dim = Self::dim_for(num_bases);
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: dim,
                got: values.len(),
            });
        }
        let k = num_bases - 1;
        let c = &values[k..];
        Ok(Self {
            alpha_free: values[..k].to_vec(),
            azimuth: c[0],
            elevation: c[1],
            tilt: c[2],
            t: [c[3], c[4], c[5]],
            inv_f: c[6],
        })
    }

    /// Splits into structural and camera parameters. `inv_f` is clamped at 0 and
    /// the azimuth wrapped into `[0, 2π)`.
    pub fn decode(&self) -> Result<(StructuralParams, CameraParams)> {
        if self.alpha_free.iter().any(|a| !a.is_finite()) || self.inv_f.is_nan() {
            return Err(Error::InvalidConfig("non-finite parameter vector".into()));
        }
        let cam = CameraParams::new(
            self.azimuth,
            self.elevation,
            self.tilt,
            Vector3::from(self.t),
            self.inv_f.max(0.0),
        )?;
        Ok((StructuralParams::from_free(&self.alpha_free), cam))
    }

    pub fn camera(&self) -> Result<CameraParams> {
        Ok(self.decode()?.1)
    }

    /// Human-readable layout string, e.g. `alpha_free[3],azimuth,...,inv_f`.
    pub fn layout_string(num_bases: usize) -> String {
        format!(
            "alpha_free[{}],azimuth,elevation,tilt,t_x,t_y,t_z,inv_f",
            num_bases - 1
        )
    }

    /// Component names in layout order.
    pub fn component_names(num_bases: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..num_bases).map(|k| format!("alpha_{k}")).collect();
        names.extend(
            ["azimuth", "elevation", "tilt", "t_x", "t_y", "t_z", "inv_f"]
                .iter()
                .map(|s| s.to_string()),
        );
        names
    }
}

/// 2D keypoints in normalized image units with per-keypoint visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints2D {
    pub coords: Matrix2xX<f64>,
    pub visible: Vec<bool>,
}

impl Keypoints2D {
    /// All keypoints visible.
    pub fn new(coords: Matrix2xX<f64>) -> Self {
        let visible = vec![true; coords.ncols()];
        Self { coords, visible }
    }

    pub fn with_visibility(coords: Matrix2xX<f64>, visible: Vec<bool>) -> Result<Self> {
        if visible.len() != coords.ncols() {
            return Err(Error::DimensionMismatch {
                what: "visibility flags",
                expected: coords.ncols(),
                got: visible.len(),
            });
        }
        for (i, v) in visible.iter().enumerate() {
            if *v && coords.column(i).iter().any(|c| !c.is_finite()) {
                return Err(Error::DegenerateInput(format!("visible keypoint {i} is not finite")));
            }
        }
        Ok(Self { coords, visible })
    }

    pub fn len(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.ncols() == 0
    }

    pub fn num_visible(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// `R_z(tilt) · R_x(elevation) · R_y(azimuth)`.
pub fn rotation_from_angles(azimuth: f64, elevation: f64, tilt: f64) -> Matrix3<f64> {
    rot_z(tilt) * rot_x(elevation) * rot_y(azimuth)
}

pub fn rotation_matrix(cam: &CameraParams) -> Matrix3<f64> {
    rotation_from_angles(cam.azimuth, cam.elevation, cam.tilt)
}

/// Partial derivatives of the rotation with respect to (azimuth, elevation, tilt).
pub fn rotation_derivatives(azimuth: f64, elevation: f64, tilt: f64) -> [Matrix3<f64>; 3] {
    let (rz, rx, ry) = (rot_z(tilt), rot_x(elevation), rot_y(azimuth));
    [
        rz * rx * d_rot_y(azimuth),
        rz * d_rot_x(elevation) * ry,
        d_rot_z(tilt) * rx * ry,
    ]
}

/// Recovers (azimuth, elevation, tilt) from a rotation matrix. Azimuth is wrapped
/// into `[0, 2π)`, elevation lies in `[-π/2, π/2]`.
pub fn angles_from_rotation(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let elevation = r[(2, 1)].clamp(-1.0, 1.0).asin();
    let azimuth = (-r[(2, 0)]).atan2(r[(2, 2)]);
    let tilt = (-r[(0, 1)]).atan2(r[(1, 1)]);
    (wrap_angle(azimuth), elevation, tilt)
}

/// Projects a camera-frame point `p = R·y + T`.
pub fn project_point(p: &Vector3<f64>, cam: &CameraParams) -> Result<Vector2<f64>> {
    project_camera_point(p, cam.inv_f, 0)
}

fn project_camera_point(p: &Vector3<f64>, inv_f: f64, keypoint: usize) -> Result<Vector2<f64>> {
    let denominator = inv_f * p.z + 1.0;
    if denominator <= EPS_DEPTH || !denominator.is_finite() {
        return Err(Error::DepthSingularity {
            keypoint,
            denominator,
        });
    }
    Ok(Vector2::new(p.x / denominator, p.y / denominator))
}

/// Projects an object-frame shape through `cam`. All keypoints are marked visible.
pub fn project_shape(shape: &Shape3D, cam: &CameraParams) -> Result<Keypoints2D> {
    let r = rotation_matrix(cam);
    let n = shape.num_keypoints();
    let mut coords = Matrix2xX::zeros(n);
    for (i, y) in shape.coords.column_iter().enumerate() {
        let p = r * y + cam.t;
        coords.set_column(i, &project_camera_point(&p, cam.inv_f, i)?);
    }
    Ok(Keypoints2D::new(coords))
}

/// The projection layer: `X = P(R·Σ α_k B_k + T)`.
pub fn project_skeleton(s: &ParamVector, bases: &BaseShapeSet) -> Result<Keypoints2D> {
    let (alpha, cam) = s.decode()?;
    let y = compose_skeleton(&alpha, bases)?;
    project_shape(&y, &cam)
}

/// Analytic Jacobian of the flattened projection `(x_0, y_0, x_1, y_1, …)` with
/// respect to every entry of the flattened [`ParamVector`]; shape `2N × |S|`.
pub fn projection_jacobian(s: &ParamVector, bases: &BaseShapeSet) -> Result<DMatrix<f64>> {
    Ok(projection_with_jacobian(s, bases)?.1)
}

/// Projection and its Jacobian in one pass.
pub fn projection_with_jacobian(
    s: &ParamVector,
    bases: &BaseShapeSet,
) -> Result<(Keypoints2D, DMatrix<f64>)> {
    let (alpha, cam) = s.decode()?;
    let k_free = bases.num_bases() - 1;
    if s.alpha_free.len() != k_free {
        return Err(Error::DimensionMismatch {
            what: "parameter vector structural weights",
            expected: k_free,
            got: s.alpha_free.len(),
        });
    }
    let y = compose_skeleton(&alpha, bases)?;
    let n = y.num_keypoints();
    let r = rotation_matrix(&cam);
    let dr = rotation_derivatives(s.azimuth, s.elevation, s.tilt);
    let inv_f = cam.inv_f;
    let dim = s.dim();
    let mut coords = Matrix2xX::zeros(n);
    let mut jac = DMatrix::zeros(2 * n, dim);

    for i in 0..n {
        let yi = y.coords.column(i).into_owned();
        let p = r * yi + cam.t;
        let proj = project_camera_point(&p, inv_f, i)?;
        coords.set_column(i, &proj);
        let d = inv_f * p.z + 1.0;
        // d(x, y)/dp as a 2×3 block
        let dxdp = nalgebra::Matrix2x3::new(
            1.0 / d,
            0.0,
            -p.x * inv_f / (d * d),
            0.0,
            1.0 / d,
            -p.y * inv_f / (d * d),
        );
        let (rx, ry) = (2 * i, 2 * i + 1);
        for k in 0..k_free {
            let dp = r * bases.bases()[k + 1].column(i);
            let g = dxdp * dp;
            jac[(rx, k)] = g[0];
            jac[(ry, k)] = g[1];
        }
        for (a, dra) in dr.iter().enumerate() {
            let g = dxdp * (dra * yi);
            jac[(rx, k_free + a)] = g[0];
            jac[(ry, k_free + a)] = g[1];
        }
        for a in 0..3 {
            jac[(rx, k_free + 3 + a)] = dxdp[(0, a)];
            jac[(ry, k_free + 3 + a)] = dxdp[(1, a)];
        }
        jac[(rx, k_free + 6)] = -p.x * p.z / (d * d);
        jac[(ry, k_free + 6)] = -p.y * p.z / (d * d);
    }
    Ok((Keypoints2D::new(coords), jac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chair() -> BaseShapeSet {
        BaseShapeSet::bundled("chair").unwrap()
    }

    fn cam(az: f64, el: f64, tilt: f64, t: [f64; 3], inv_f: f64) -> CameraParams {
        CameraParams::new(az, el, tilt, Vector3::from(t), inv_f).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng, k: usize) -> ParamVector {
        ParamVector {
            alpha_free: (0..k - 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
            azimuth: rng.random_range(0.0..TAU),
            elevation: rng.random_range(-0.5..1.0),
            tilt: rng.random_range(-0.3..0.3),
            t: [
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            ],
            inv_f: rng.random_range(0.0..0.8),
        }
    }

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(rotation_from_angles(0.0, 0.0, 0.0), Matrix3::identity());
    }

    #[test]
    fn half_turn_azimuth_flips_depth_axis() {
        let r = rotation_matrix(&cam(std::f64::consts::PI, 0.0, 0.0, [0.0; 3], 0.0));
        let z = r * Vector3::new(0.0, 0.0, 1.0);
        assert!((z - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn rotations_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = rotation_from_angles(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn angles_round_trip_through_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let (a, e, t) = (
                rng.random_range(0.0..TAU),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            );
            let r = rotation_from_angles(a, e, t);
            let (a2, e2, t2) = angles_from_rotation(&r);
            assert!((rotation_from_angles(a2, e2, t2) - r).abs().max() < 1e-12);
            assert!((e - e2).abs() < 1e-9);
        }
    }

    #[test]
    fn azimuth_is_wrapped() {
        let c = cam(-0.5, 0.0, 0.0, [0.0; 3], 0.0);
        assert!((c.azimuth() - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(cam(TAU, 0.0, 0.0, [0.0; 3], 0.0).azimuth(), 0.0);
        assert_eq!(wrap_angle(-1e-18), 0.0);
        assert!(CameraParams::new(0.0, 0.0, 0.0, Vector3::zeros(), -0.1).is_err());
    }

    #[test]
    fn project_point_examples() {
        let on_axis = project_point(&Vector3::new(0.0, 0.0, 3.0), &cam(0.0, 0.0, 0.0, [0.0; 3], 0.3));
        assert_eq!(on_axis.unwrap(), Vector2::new(0.0, 0.0));
        let parallel = project_point(&Vector3::new(1.0, 2.0, 7.0), &cam(0.0, 0.0, 0.0, [0.0; 3], 0.0));
        assert_eq!(parallel.unwrap(), Vector2::new(1.0, 2.0));
        // 1 / (1·1 + 1)
        let persp = project_point(&Vector3::new(1.0, 1.0, 1.0), &cam(0.0, 0.0, 0.0, [0.0; 3], 1.0));
        assert_eq!(persp.unwrap(), Vector2::new(0.5, 0.5));
    }

    #[test]
    fn points_behind_camera_are_rejected() {
        let c = cam(0.0, 0.0, 0.0, [0.0; 3], 1.0);
        let err = project_point(&Vector3::new(0.0, 0.0, -1.0), &c).unwrap_err();
        assert!(matches!(err, Error::DepthSingularity { .. }));
        // just inside the guard band
        assert!(project_point(&Vector3::new(0.0, 0.0, -1.0 + 0.5e-6), &c).is_err());
        assert!(project_point(&Vector3::new(0.0, 0.0, -1.0 + 2e-6), &c).is_ok());
    }

    #[test]
    fn depth_singularity_names_the_keypoint() {
        let bases = chair();
        let mut s = ParamVector::identity(4);
        s.inv_f = 10.0;
        // deepest-negative keypoint falls behind the camera
        let err = project_skeleton(&s, &bases).unwrap_err();
        let y = bases.mean_shape();
        let expected = (0..10).find(|&i| 10.0 * y.coords[(2, i)] + 1.0 <= EPS_DEPTH).unwrap();
        match err {
            Error::DepthSingularity { keypoint, .. } => assert_eq!(keypoint, expected),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parallel_projection_of_mean_shape_is_its_first_two_rows() {
        let bases = chair();
        let x = project_skeleton(&ParamVector::identity(4), &bases).unwrap();
        assert_eq!(x.coords, bases.bases()[0].rows(0, 2).into_owned());
        assert!(x.visible.iter().all(|v| *v));
    }

    #[test]
    fn parallel_projection_is_affine_in_translation() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut s = random_params(&mut rng, 4);
            s.inv_f = 0.0;
            let x0 = project_skeleton(&s, &bases).unwrap();
            let delta = rng.random_range(-1.0..1.0);
            s.t[0] += delta;
            let x1 = project_skeleton(&s, &bases).unwrap();
            for i in 0..10 {
                assert!((x1.coords[(0, i)] - x0.coords[(0, i)] - delta).abs() < 1e-14);
                assert_eq!(x1.coords[(1, i)], x0.coords[(1, i)]);
            }
        }
    }

    #[test]
    fn near_parallel_camera_is_continuous() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let mut s = random_params(&mut rng, 4);
            s.t[2] = rng.random_range(-9.0..9.0);
            s.inv_f = 0.0;
            let x0 = project_skeleton(&s, &bases).unwrap();
            s.inv_f = 1e-6;
            let x1 = project_skeleton(&s, &bases).unwrap();
            assert!((x0.coords - x1.coords).abs().max() < 1e-4);
        }
    }

    #[test]
    fn parallel_jacobian_ignores_depth() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut s = random_params(&mut rng, 4);
        s.inv_f = 0.0;
        let j = projection_jacobian(&s, &bases).unwrap();
        let tz = 3 + 5;
        assert!(j.column(tz).iter().all(|v| *v == 0.0));
    }

    fn central_difference(s: &ParamVector, bases: &BaseShapeSet, h: f64) -> DMatrix<f64> {
        let base = s.to_vec();
        let k = bases.num_bases();
        let n = bases.num_keypoints();
        let mut jac = DMatrix::zeros(2 * n, base.len());
        for c in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[c] += h;
            minus[c] -= h;
            let xp = project_skeleton(&ParamVector::from_slice(&plus, k).unwrap(), bases).unwrap();
            let xm = project_skeleton(&ParamVector::from_slice(&minus, k).unwrap(), bases).unwrap();
            for r in 0..2 * n {
                jac[(r, c)] = (xp.coords[r] - xm.coords[r]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for bases in [chair(), BaseShapeSet::bundled("car").unwrap()] {
            for _ in 0..50 {
                let mut s = random_params(&mut rng, bases.num_bases());
                // keep inv_f away from the clamp so the difference stencil stays smooth
                s.inv_f = rng.random_range(0.01..0.8);
                let analytic = projection_jacobian(&s, &bases).unwrap();
                let numeric = central_difference(&s, &bases, 1e-5);
                for (a, n) in analytic.iter().zip(numeric.iter()) {
                    assert!((a - n).abs() / a.abs().max(1.0) < 1e-5, "{a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn rotating_bases_and_counter_rotating_camera_leaves_projection_unchanged() {
        let bases = chair();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let s = random_params(&mut rng, 4);
            let r0 = rotation_from_angles(
                rng.random_range(0.0..TAU),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
            );
            let rotated: Vec<_> = bases.bases().iter().map(|b| r0 * b).collect();
            let rotated = BaseShapeSet::new(bases.spec.clone(), rotated).unwrap();
            let r = rotation_matrix(&s.camera().unwrap());
            let (a, e, t) = angles_from_rotation(&(r * r0.transpose()));
            let mut s2 = s.clone();
            s2.azimuth = a;
            s2.elevation = e;
            s2.tilt = t;
            let x1 = project_skeleton(&s, &bases).unwrap();
            let x2 = project_skeleton(&s2, &rotated).unwrap();
            assert!((x1.coords - x2.coords).abs().max() < 1e-9);
        }
    }

    #[test]
    fn param_vector_round_trips_through_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let s = random_params(&mut rng, 4);
        let again = ParamVector::from_slice(&s.to_vec(), 4).unwrap();
        assert_eq!(again, s);
        assert_eq!(s.dim(), ParamVector::dim_for(4));
        assert!(ParamVector::from_slice(&[0.0; 5], 4).is_err());
        let mut neg = s.clone();
        neg.inv_f = -0.2;
        assert_eq!(neg.decode().unwrap().1.inv_f(), 0.0);
    }
}
