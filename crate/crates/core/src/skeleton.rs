//! Category skeletons and base-shape composition.
//!
//! A skeleton is a fixed set of named keypoints plus edges between them. A category
//! carries `K` base shapes (3×N each); the first is the mean shape and the rest are
//! deformation modes. An instance is `Y = Σ_k α_k B_k` with `α_0 = 1`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Once;

use nalgebra::Matrix3xX;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Keypoint names and edge connectivity of a category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub category: String,
    pub keypoint_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl SkeletonSpec {
    /// Validates and normalizes a skeleton. Edges are stored with `i < j`.
    pub fn new(
        category: impl Into<String>,
        keypoint_names: Vec<String>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = keypoint_names.len();
        if n < 4 {
            return Err(invalid("keypoints", format!("need at least 4 keypoints, got {n}")));
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for (e, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(invalid(
                    &format!("edges[{e}]"),
                    format!("index out of range for {n} keypoints"),
                ));
            }
            if a == b {
                return Err(invalid(&format!("edges[{e}]"), "self loop".into()));
            }
            let edge = (a.min(b), a.max(b));
            if !seen.insert(edge) {
                return Err(invalid(&format!("edges[{e}]"), "duplicate edge".into()));
            }
            normalized.push(edge);
        }
        let spec = Self {
            category: category.into(),
            keypoint_names,
            edges: normalized,
        };
        if !spec.is_connected() {
            return Err(invalid("edges", "edge graph is not connected".into()));
        }
        Ok(spec)
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoint_names.len()
    }

    fn is_connected(&self) -> bool {
        let n = self.num_keypoints();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut visited = vec![false; n];
        let mut stack = vec![0];
        visited[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    stack.push(w);
                }
            }
        }
        visited.into_iter().all(|v| v)
    }

    /// SHA-256 over the category name, keypoint names and edge list.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.category.as_bytes());
        h.update([0u8]);
        for name in &self.keypoint_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for &(a, b) in &self.edges {
            h.update((a as u64).to_le_bytes());
            h.update((b as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}

/// The `K` base shapes of a category. `bases[0]` is the mean shape.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseShapeSet {
    pub spec: SkeletonSpec,
    bases: Vec<Matrix3xX<f64>>,
}

impl BaseShapeSet {
    pub fn new(spec: SkeletonSpec, bases: Vec<Matrix3xX<f64>>) -> Result<Self> {
        if bases.is_empty() {
            return Err(invalid("bases", "at least one base shape (the mean) is required".into()));
        }
        let n = spec.num_keypoints();
        for (k, b) in bases.iter().enumerate() {
            if b.ncols() != n {
                return Err(Error::InvalidModel {
                    path: format!("bases[{k}]"),
                    reason: format!("dimension mismatch: expected 3x{n}, got 3x{}", b.ncols()),
                });
            }
            if let Some(i) = b.iter().position(|v| !v.is_finite()) {
                return Err(invalid(
                    &format!("bases[{k}][{}][{}]", i / 3, i % 3),
                    "non-finite coordinate".into(),
                ));
            }
        }
        let mean = Shape3D { coords: bases[0].clone() };
        if diagonal_length(&mean)? <= 0.0 {
            return Err(invalid("bases[0]", "mean shape has zero diagonal length".into()));
        }
        Ok(Self { spec, bases })
    }

    /// One of the shipped category models (`"chair"` or `"car"`).
    pub fn bundled(category: &str) -> Result<Self> {
        let text = match category {
            "chair" => include_str!("../models/chair.json"),
            "car" => include_str!("../models/car.json"),
            other => {
                return Err(Error::InvalidConfig(format!("no bundled model named `{other}`")))
            }
        };
        Self::from_json_str(text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_base_shapes()
    }

    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    pub fn num_keypoints(&self) -> usize {
        self.spec.num_keypoints()
    }

    pub fn bases(&self) -> &[Matrix3xX<f64>] {
        &self.bases
    }

    pub fn mean_shape(&self) -> Shape3D {
        Shape3D { coords: self.bases[0].clone() }
    }

    /// Serializes back to the JSON model format.
    pub fn to_json_string(&self) -> Result<String> {
        let file = ModelFile {
            category: self.spec.category.clone(),
            keypoints: self.spec.keypoint_names.clone(),
            edges: self.spec.edges.iter().map(|&(a, b)| [a, b]).collect(),
            bases: self
                .bases
                .iter()
                .map(|b| b.column_iter().map(|c| [c[0], c[1], c[2]]).collect())
                .collect(),
            unknown: BTreeMap::new(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

/// Structural weights `α`, one per base shape, with `α_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    alpha: Vec<f64>,
}

impl StructuralParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        match alpha.first() {
            Some(&a) if a == 1.0 => Ok(Self { alpha }),
            Some(&a) => Err(Error::InvalidConfig(format!("alpha[0] must be 1, got {a}"))),
            None => Err(Error::EmptyInput("structural weights")),
        }
    }

    /// Builds `(1, free...)` from the free deformation weights.
    pub fn from_free(free: &[f64]) -> Self {
        let mut alpha = Vec::with_capacity(free.len() + 1);
        alpha.push(1.0);
        alpha.extend_from_slice(free);
        Self { alpha }
    }

    /// Mean-shape weights `(1, 0, …, 0)` for `k` bases.
    pub fn mean(k: usize) -> Self {
        let mut alpha = vec![0.0; k.max(1)];
        alpha[0] = 1.0;
        Self { alpha }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn free(&self) -> &[f64] {
        &self.alpha[1..]
    }
}

/// 3D keypoint coordinates, one column per keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape3D {
    pub coords: Matrix3xX<f64>,
}

impl Shape3D {
    pub fn new(coords: Matrix3xX<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite shape coordinate".into()));
        }
        Ok(Self { coords })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        Self::new(Matrix3xX::from_column_slice(&flat))
    }

    pub fn num_keypoints(&self) -> usize {
        self.coords.ncols()
    }
}

/// `Y = Σ_k α_k B_k`.
pub fn compose_skeleton(alpha: &StructuralParams, bases: &BaseShapeSet) -> Result<Shape3D> {
    let k = bases.num_bases();
    if alpha.alpha.len() != k {
        return Err(Error::DimensionMismatch {
            what: "structural weights",
            expected: k,
            got: alpha.alpha.len(),
        });
    }
    let mut coords = &bases.bases[0] * alpha.alpha[0];
    for (a, b) in alpha.alpha.iter().zip(&bases.bases).skip(1) {
        coords += b * *a;
    }
    Ok(Shape3D { coords })
}

/// Largest pairwise keypoint distance.
pub fn diagonal_length(shape: &Shape3D) -> Result<f64> {
    let n = shape.num_keypoints();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "diagonal length needs at least 2 keypoints, got {n}"
        )));
    }
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let d = (shape.coords.column(i) - shape.coords.column(j)).norm();
            best = best.max(d);
        }
    }
    Ok(best)
}

/// Reads and validates a JSON skeleton model file.
pub fn load_base_shapes(path: impl AsRef<Path>) -> Result<BaseShapeSet> {
    let text = std::fs::read_to_string(path)?;
    BaseShapeSet::from_json_str(&text)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    category: String,
    keypoints: Vec<String>,
    edges: Vec<[usize; 2]>,
    bases: Vec<Vec<[f64; 3]>>,
    #[serde(flatten, skip_serializing)]
    unknown: BTreeMap<String, serde_json::Value>,
}

static UNKNOWN_FIELD_WARNING: Once = Once::new();

impl ModelFile {
    fn into_base_shapes(self) -> Result<BaseShapeSet> {
        if !self.unknown.is_empty() {
            let names: Vec<&str> = self.unknown.keys().map(String::as_str).collect();
            UNKNOWN_FIELD_WARNING.call_once(|| {
                log::warn!("ignoring unknown model file fields: {}", names.join(", "));
            });
        }
        let spec = SkeletonSpec::new(
            self.category,
            self.keypoints,
            self.edges.into_iter().map(|[a, b]| (a, b)).collect(),
        )?;
        let bases = self
            .bases
            .iter()
            .map(|points| {
                let flat: Vec<f64> = points.iter().flatten().copied().collect();
                Matrix3xX::from_column_slice(&flat)
            })
            .collect();
        BaseShapeSet::new(spec, bases)
    }
}

fn invalid(path: &str, reason: String) -> Error {
    Error::InvalidModel {
        path: path.to_string(),
        reason,
    }
}
