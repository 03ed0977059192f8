//! Parametric 3D wireframe skeletons and their recovery from 2D keypoint heatmaps.
//!
//! An object instance is a weighted sum of category base shapes, viewed through a
//! camera with rotation, translation and inverse focal length. The crate provides
//!
//! - [`skeleton`]: category topology, base shapes and shape composition,
//! - [`camera`]: the differentiable projection layer and its analytic Jacobian,
//! - [`synth`]: seeded synthetic corpora (sampled parameters, heatmaps, noise),
//! - [`fit`]: reprojection-error minimisation (parallel init + perspective refinement),
//! - [`net`]: a from-scratch dense network stack (interpreter, heatmap refiner, training),
//! - [`eval`]: recovery metrics, noise sweeps and retrieval,
//! - [`dataset`] / [`wireframe`]: binary corpus files and OBJ export.

pub mod camera;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fit;
pub mod net;
pub mod rng;
pub mod skeleton;
pub mod synth;
pub mod wireframe;

pub use camera::{
    project_point, project_shape, project_skeleton, projection_jacobian, rotation_matrix,
    CameraParams, Keypoints2D, ParamVector, EPS_DEPTH,
};
pub use error::{Error, Result};
pub use skeleton::{
    compose_skeleton, diagonal_length, load_base_shapes, BaseShapeSet, Shape3D, SkeletonSpec,
    StructuralParams,
};
pub use synth::{HeatmapGrid, HeatmapStack, SamplerConfig, SynthSample};
