//! Weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! "3DINNW01"                       8 bytes
//! layer count                      u32
//! per layer:
//!   out, in                        2 × u32
//!   activation                     u8 (0 = ReLU, 1 = linear)
//!   weights                        out·in × f64, row-major
//!   bias                           out × f64
//! normalizer dim D                 u32 (0 when absent)
//! mean, std                        2·D × f64
//! output layout                    u32 length + UTF-8
//! skeleton spec hash               32 bytes (SHA-256)
//! ```

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::dense::{Activation, DenseNet, Layer};
use super::normalizer::Normalizer;
use super::train::{Interpreter, Refiner};
use crate::camera::ParamVector;
use crate::dataset::{read_f64s, read_u32, write_atomic};
use crate::error::{Error, Result};
use crate::skeleton::BaseShapeSet;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"3DINNW01";

/// Layout string stored for refiner weights.
pub const REFINER_LAYOUT: &str = "heatmaps";

/// A serialized network plus what is needed to interpret its output.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub net: DenseNet,
    pub normalizer: Option<Normalizer>,
    pub layout: String,
    pub spec_hash: [u8; 32],
}

impl WeightsFile {
    pub fn from_interpreter(model: &Interpreter, bases: &BaseShapeSet) -> Self {
        Self {
            net: model.net.clone(),
            normalizer: Some(model.normalizer.clone()),
            layout: ParamVector::layout_string(model.num_bases),
            spec_hash: bases.spec.hash(),
        }
    }

    pub fn from_refiner(model: &Refiner, bases: &BaseShapeSet) -> Self {
        Self {
            net: model.net.clone(),
            normalizer: None,
            layout: REFINER_LAYOUT.to_string(),
            spec_hash: bases.spec.hash(),
        }
    }

    fn check_model(&self, bases: &BaseShapeSet) -> Result<()> {
        if self.spec_hash != bases.spec.hash() {
            return Err(Error::SpecMismatch(format!(
                "weights were trained for a different skeleton than `{}`",
                bases.spec.category
            )));
        }
        Ok(())
    }

    pub fn into_interpreter(self, bases: &BaseShapeSet) -> Result<Interpreter> {
        self.check_model(bases)?;
        let k = bases.num_bases();
        let expected = ParamVector::layout_string(k);
        if self.layout != expected {
            return Err(Error::SpecMismatch(format!(
                "weights output layout `{}` does not match `{expected}`",
                self.layout
            )));
        }
        let normalizer = self
            .normalizer
            .ok_or_else(|| Error::Format("interpreter weights carry no normalizer".into()))?;
        let dim = ParamVector::dim_for(k);
        if self.net.output_dim() != dim || normalizer.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "interpreter output",
                expected: dim,
                got: self.net.output_dim(),
            });
        }
        Ok(Interpreter { net: self.net, normalizer, num_bases: k })
    }

    pub fn into_refiner(self, bases: &BaseShapeSet) -> Result<Refiner> {
        self.check_model(bases)?;
        if self.layout != REFINER_LAYOUT {
            return Err(Error::SpecMismatch(format!(
                "expected refiner weights, found layout `{}`",
                self.layout
            )));
        }
        if self.net.input_dim() != self.net.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "refiner output",
                expected: self.net.input_dim(),
                got: self.net.output_dim(),
            });
        }
        Ok(Refiner { net: self.net })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        let layers = self.net.layers();
        w.write_all(&(layers.len() as u32).to_le_bytes())?;
        for l in layers {
            w.write_all(&(l.weights.nrows() as u32).to_le_bytes())?;
            w.write_all(&(l.weights.ncols() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    w.write_all(&l.weights[(r, c)].to_le_bytes())?;
                }
            }
            for v in l.bias.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        match &self.normalizer {
            Some(n) => {
                w.write_all(&(n.dim() as u32).to_le_bytes())?;
                for v in n.mean.iter().chain(&n.std) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            None => w.write_all(&0u32.to_le_bytes())?,
        }
        w.write_all(&(self.layout.len() as u32).to_le_bytes())?;
        w.write_all(self.layout.as_bytes())?;
        w.write_all(&self.spec_hash)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format("not a weights file (bad magic)".into()));
        }
        let count = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let out = read_u32(r)? as usize;
            let inp = read_u32(r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let activation = Activation::from_code(code[0])?;
            let mut buf = vec![0f64; out * inp];
            read_f64s(r, &mut buf)?;
            let weights = DMatrix::from_row_slice(out, inp, &buf);
            let mut bias = vec![0f64; out];
            read_f64s(r, &mut bias)?;
            layers.push(Layer { weights, bias: DVector::from_vec(bias), activation });
        }
        let net = DenseNet::new(layers)?;
        let dim = read_u32(r)? as usize;
        let normalizer = if dim == 0 {
            None
        } else {
            let mut mean = vec![0f64; dim];
            let mut std = vec![0f64; dim];
            read_f64s(r, &mut mean)?;
            read_f64s(r, &mut std)?;
            Some(Normalizer { mean, std })
        };
        let len = read_u32(r)? as usize;
        let mut layout = vec![0u8; len];
        r.read_exact(&mut layout)?;
        let layout = String::from_utf8(layout)
            .map_err(|_| Error::Format("weights layout is not UTF-8".into()))?;
        let mut spec_hash = [0u8; 32];
        r.read_exact(&mut spec_hash)?;
        Ok(Self { net, normalizer, layout, spec_hash })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| self.write_to(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}
