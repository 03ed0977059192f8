//! Binary corpus files.
//!
//! Little-endian layout:
//!
//! ```text
//! "3DINNDS1"                       8 bytes
//! skeleton spec hash               32 bytes (SHA-256)
//! config echo                      u32 length + UTF-8 JSON of SamplerConfig
//! N, K, H, W                       4 × u32
//! count                            u64
//! per sample:
//!   s_true                         |S| × f64
//!   y_true                         3N × f64 (column-major, keypoint by keypoint)
//!   x_true                         2N × f64
//!   heatmaps                       N·H·W × f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix2xX, Matrix3xX};

use crate::camera::{Keypoints2D, ParamVector};
use crate::error::{Error, Result};
use crate::skeleton::{BaseShapeSet, Shape3D};
use crate::synth::{HeatmapStack, SamplerConfig, SynthSample};

pub const DATASET_MAGIC: &[u8; 8] = b"3DINNDS1";

/// A corpus together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec_hash: [u8; 32],
    pub config: SamplerConfig,
    pub num_keypoints: usize,
    pub num_bases: usize,
    pub samples: Vec<SynthSample>,
}

impl Dataset {
    pub fn new(bases: &BaseShapeSet, config: SamplerConfig, samples: Vec<SynthSample>) -> Self {
        Self {
            spec_hash: bases.spec.hash(),
            config,
            num_keypoints: bases.num_keypoints(),
            num_bases: bases.num_bases(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fails unless the dataset was generated for `bases`' skeleton.
    pub fn check_model(&self, bases: &BaseShapeSet) -> Result<()> {
        if self.spec_hash != bases.spec.hash() {
            return Err(Error::SpecMismatch(format!(
                "dataset was generated for a different skeleton than `{}`",
                bases.spec.category
            )));
        }
        if self.num_bases != bases.num_bases() {
            return Err(Error::SpecMismatch(format!(
                "dataset has {} base shapes, model has {}",
                self.num_bases,
                bases.num_bases()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&self.spec_hash)?;
        let cfg = serde_json::to_vec(&self.config)?;
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(&cfg)?;
        let grid = self.config.grid;
        for v in [self.num_keypoints, self.num_bases, grid.height, grid.width] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            for v in s.s_true.to_vec() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in s.y_true.coords.iter().chain(s.x_true.coords.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in &s.heatmaps.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let mut spec_hash = [0u8; 32];
        r.read_exact(&mut spec_hash)?;
        let cfg_len = read_u32(r)? as usize;
        let mut cfg = vec![0u8; cfg_len];
        r.read_exact(&mut cfg)?;
        let config: SamplerConfig = serde_json::from_slice(&cfg)?;
        let n = read_u32(r)? as usize;
        let k = read_u32(r)? as usize;
        let h = read_u32(r)? as usize;
        let w = read_u32(r)? as usize;
        if k == 0 || n == 0 || h != config.grid.height || w != config.grid.width {
            return Err(Error::Format("inconsistent dataset dimensions".into()));
        }
        let count = read_u64(r)? as usize;
        let dim = ParamVector::dim_for(k);
        let cells = n * h * w;
        let mut samples = Vec::with_capacity(count);
        let mut f64_buf = vec![0f64; dim.max(3 * n)];
        let mut raw = vec![0u8; cells * 4];
        for _ in 0..count {
            read_f64s(r, &mut f64_buf[..dim])?;
            let s_true = ParamVector::from_slice(&f64_buf[..dim], k)?;
            read_f64s(r, &mut f64_buf[..3 * n])?;
            let y_true = Shape3D {
                coords: Matrix3xX::from_column_slice(&f64_buf[..3 * n]),
            };
            read_f64s(r, &mut f64_buf[..2 * n])?;
            let x_true = Keypoints2D::new(Matrix2xX::from_column_slice(&f64_buf[..2 * n]));
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            samples.push(SynthSample {
                heatmaps: HeatmapStack::from_data(config.grid, n, data)?,
                s_true,
                y_true,
                x_true,
            });
        }
        Ok(Self {
            spec_hash,
            config,
            num_keypoints: n,
            num_bases: k,
            samples,
        })
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| self.write_to(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

/// Runs `body` against a buffered temp file next to `path`, then renames it over `path`.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut b = [0u8; 8];
    for v in out.iter_mut() {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(())
}
