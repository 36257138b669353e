//! Parameter checkpoints: a versioned header, a shape manifest, then the
//! flat f64 payload (little-endian). Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use autodiff::Tensor;

use crate::error::{Error, Result};
use crate::model::ModelParams;

const MAGIC: &[u8; 8] = b"MODEMCK1";
const VERSION: u32 = 1;

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let entries: Vec<(String, Tensor)> = {
        let mut v = Vec::new();
        params.for_each(&mut |n, t| v.push((n.to_string(), t.clone())));
        v
    };
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, t) in &entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
        w.write_all(&(t.shape().len() as u8).to_le_bytes()).map_err(io_err)?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
    }
    for (_, t) in &entries {
        for v in t.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Load a checkpoint into a parameter set of the expected architecture.
/// Any name or shape disagreement is an error naming the tensor.
pub fn load_params(template: &ModelParams, path: &Path) -> Result<ModelParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b).map_err(io_err)?;
    let version = u32::from_le_bytes(u32b);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", version)));
    }
    r.read_exact(&mut u32b).map_err(io_err)?;
    let count = u32::from_le_bytes(u32b) as usize;

    let mut manifest: Vec<(String, Vec<usize>)> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u16b = [0u8; 2];
        r.read_exact(&mut u16b).map_err(io_err)?;
        let name_len = u16::from_le_bytes(u16b) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("manifest name is not utf-8".into()))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank).map_err(io_err)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            r.read_exact(&mut u32b).map_err(io_err)?;
            shape.push(u32::from_le_bytes(u32b) as usize);
        }
        manifest.push((name, shape));
    }

    let expected: Vec<(String, Vec<usize>)> = {
        let mut v = Vec::new();
        template.for_each(&mut |n, t| v.push((n.to_string(), t.shape().to_vec())));
        v
    };
    if manifest.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "manifest has {} tensors, architecture has {}",
            manifest.len(),
            expected.len()
        )));
    }
    for ((mn, ms), (en, es)) in manifest.iter().zip(&expected) {
        if mn != en {
            return Err(Error::Checkpoint(format!("tensor '{}', expected '{}'", mn, en)));
        }
        if ms != es {
            return Err(Error::CheckpointShape {
                name: mn.clone(),
                expected: es.clone(),
                found: ms.clone(),
            });
        }
    }

    let mut out = template.clone();
    let mut f64b = [0u8; 8];
    let mut failed = None;
    out.for_each_mut(&mut |name, t| {
        if failed.is_some() {
            return;
        }
        let mut data = vec![0.0; t.len()];
        for v in &mut data {
            if let Err(e) = r.read_exact(&mut f64b) {
                failed = Some(Error::Checkpoint(format!("truncated payload at '{}': {}", name, e)));
                return;
            }
            *v = f64::from_le_bytes(f64b);
        }
        *t = Tensor::new(t.shape().to_vec(), data);
    });
    if let Some(e) = failed {
        return Err(e);
    }
    Ok(out)
}
