//! Binary container for channel sample sets.
//!
//! Layout: magic `DMCE0001`, little-endian u32 fields
//! `{n_rx, n_tx, n_samples, dtype}` with dtype 0 = float32, then
//! `n_samples` contiguous real vectors of length `2 * n_rx * n_tx` each
//! (angular domain), float32 little-endian. The encoding is bit-exact
//! across platforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::channel::{generate_channel, sample_rng, ClusterModel, SystemConfig};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"DMCE0001";

/// A set of angular-domain channel vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_rx: u32,
    pub n_tx: u32,
    /// `n_samples x (2 n_rx n_tx)`, float32 to match the on-disk format.
    pub samples: Array2<f32>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_rx as usize * self.n_tx as usize
    }

    /// Row `i` as an f64 vector for the estimation pipeline.
    pub fn sample_f64(&self, i: usize) -> Array1<f64> {
        self.samples.row(i).mapv(|x| x as f64)
    }

    /// Generates `n_samples` clustered channels with per-sample RNG streams
    /// derived from `(cfg.seed, stream_offset + index)`, so sample sets with
    /// disjoint offset ranges are statistically independent and each set is
    /// reproducible in isolation.
    pub fn generate(
        cfg: &SystemConfig,
        cluster: &ClusterModel,
        n_samples: usize,
        stream_offset: u64,
    ) -> Self {
        let dim = cfg.dim_channel();
        let mut samples = Array2::<f32>::zeros((n_samples, dim));
        for i in 0..n_samples {
            let mut rng = sample_rng(cfg.seed, stream_offset + i as u64);
            let sample = generate_channel(cfg, cluster, &mut rng);
            for (dst, src) in samples.row_mut(i).iter_mut().zip(sample.real_vec.iter()) {
                *dst = *src as f32;
            }
        }
        Self {
            n_rx: cfg.n_rx as u32,
            n_tx: cfg.n_tx as u32,
            samples,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(DATASET_MAGIC).map_err(io_err)?;
        for field in [self.n_rx, self.n_tx, self.n_samples() as u32, 0u32] {
            w.write_all(&field.to_le_bytes()).map_err(io_err)?;
        }
        for x in self.samples.iter() {
            w.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io_err = |e| Error::io(path, e);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format(format!(
                "{}: bad magic {:?}",
                path.display(),
                magic
            )));
        }
        let mut u32_buf = [0u8; 4];
        let mut fields = [0u32; 4];
        for field in fields.iter_mut() {
            r.read_exact(&mut u32_buf).map_err(io_err)?;
            *field = u32::from_le_bytes(u32_buf);
        }
        let [n_rx, n_tx, n_samples, dtype] = fields;
        if dtype != 0 {
            return Err(Error::Format(format!(
                "{}: unsupported dtype {dtype}",
                path.display()
            )));
        }
        let dim = 2 * n_rx as usize * n_tx as usize;
        let mut payload = vec![0f32; n_samples as usize * dim];
        let mut f32_buf = [0u8; 4];
        for x in payload.iter_mut() {
            r.read_exact(&mut f32_buf).map_err(io_err)?;
            *x = f32::from_le_bytes(f32_buf);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(io_err)? != 0 {
            return Err(Error::Format(format!(
                "{}: trailing bytes after {} samples",
                path.display(),
                n_samples
            )));
        }
        let samples = Array2::from_shape_vec((n_samples as usize, dim), payload)
            .expect("payload length checked above");
        Ok(Self {
            n_rx,
            n_tx,
            samples,
        })
    }
}
