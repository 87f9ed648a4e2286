//! Model checkpoint container.
//!
//! Layout: magic `DMCKPT01`, role tag byte, little-endian u32 header
//! `{s_init, s_max, ramp_len, ramp..., n_rx, n_tx, t_max}`, a u64 parameter
//! count, then the parameters as little-endian float32 in the canonical
//! flat order documented on [`DenoiserNetwork::params_flat`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array1;

use super::net::{DenoiserNetwork, NetworkArch, Real};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DMCKPT01";

/// Which training stage produced the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointRole {
    /// Plain DM denoising network.
    Dm = 0,
    /// Stage-1 MMSE denoiser trained with the SURE loss.
    SureDenoiser = 1,
    /// Stage-2 DM trained on SURE-denoised samples.
    SureDm = 2,
}

impl CheckpointRole {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Dm),
            1 => Some(Self::SureDenoiser),
            2 => Some(Self::SureDm),
            _ => None,
        }
    }
}

pub fn save_checkpoint<F: Real>(
    net: &DenoiserNetwork<F>,
    role: CheckpointRole,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&[role as u8]).map_err(io_err)?;
    let arch = &net.arch;
    let mut header: Vec<u32> = vec![arch.s_init as u32, arch.s_max as u32, arch.ramp.len() as u32];
    header.extend(arch.ramp.iter().map(|&c| c as u32));
    header.extend([arch.n_rx as u32, arch.n_tx as u32, arch.t_max as u32]);
    for field in header {
        w.write_all(&field.to_le_bytes()).map_err(io_err)?;
    }
    let params = net.params_flat();
    w.write_all(&(params.len() as u64).to_le_bytes()).map_err(io_err)?;
    for p in params.iter() {
        w.write_all(&(p.as_f64() as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(DenoiserNetwork<f32>, CheckpointRole)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad checkpoint magic {:?}",
            path.display(),
            magic
        )));
    }
    let mut role_byte = [0u8; 1];
    r.read_exact(&mut role_byte).map_err(io_err)?;
    let role = CheckpointRole::from_byte(role_byte[0]).ok_or_else(|| {
        Error::Format(format!("{}: unknown role {}", path.display(), role_byte[0]))
    })?;

    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let s_init = read_u32(&mut r)? as usize;
    let s_max = read_u32(&mut r)? as usize;
    let ramp_len = read_u32(&mut r)? as usize;
    if ramp_len != 6 {
        return Err(Error::Format(format!(
            "{}: unsupported ramp length {ramp_len}",
            path.display()
        )));
    }
    let mut ramp = Vec::with_capacity(ramp_len);
    for _ in 0..ramp_len {
        ramp.push(read_u32(&mut r)? as usize);
    }
    let n_rx = read_u32(&mut r)? as usize;
    let n_tx = read_u32(&mut r)? as usize;
    let t_max = read_u32(&mut r)? as usize;
    let arch = NetworkArch {
        s_init,
        s_max,
        ramp,
        n_rx,
        n_tx,
        t_max,
    };

    let mut u64_buf = [0u8; 8];
    r.read_exact(&mut u64_buf).map_err(io_err)?;
    let n_params = u64::from_le_bytes(u64_buf) as usize;
    if n_params != arch.param_count() {
        return Err(Error::Format(format!(
            "{}: parameter count {n_params} does not match architecture ({})",
            path.display(),
            arch.param_count()
        )));
    }
    let mut flat = Array1::<f32>::zeros(n_params);
    let mut f32_buf = [0u8; 4];
    for p in flat.iter_mut() {
        r.read_exact(&mut f32_buf).map_err(io_err)?;
        *p = f32::from_le_bytes(f32_buf);
    }

    // shape the network, then overwrite every parameter from the file
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand_chacha::rand_core::SeedableRng;
    let mut net = DenoiserNetwork::<f32>::init(arch, &mut rng);
    net.set_params_flat(&flat);
    Ok((net, role))
}
