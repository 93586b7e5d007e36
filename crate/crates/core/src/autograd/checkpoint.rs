//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MUSE" | u16 version | u64 step | u32 config_len | config utf-8 |
//! u32 param_count | records...
//! record: u32 name_len | name utf-8 | u8 dtype | u8 rank | u32 dims[rank] | raw LE data
//! ```
//!
//! Records are written in sorted name order, so save -> load -> save is
//! byte-identical.

use std::io::{Read, Write};

use crate::autograd::tensor::{Dtype, Real, Tensor};
use crate::autograd::optim::ParameterSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MUSE";
const VERSION: u16 = 1;

pub struct Checkpoint<T> {
    pub config_text: String,
    pub step: u64,
    pub params: ParameterSet<T>,
}

pub fn save<T: Real, W: Write>(w: &mut W, ckpt: &Checkpoint<T>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ckpt.step.to_le_bytes())?;
    let cfg = ckpt.config_text.as_bytes();
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(cfg)?;
    w.write_all(&(ckpt.params.len() as u32).to_le_bytes())?;
    for (name, tensor) in ckpt.params.iter() {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&[T::DTYPE.code()])?;
        w.write_all(&[tensor.rank() as u8])?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        match T::DTYPE {
            Dtype::F32 => {
                for &x in tensor.data() {
                    w.write_all(&(x.to_f64() as f32).to_le_bytes())?;
                }
            }
            Dtype::F64 => {
                for &x in tensor.data() {
                    w.write_all(&x.to_f64().to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn load<T: Real, R: Read>(r: &mut R) -> Result<Checkpoint<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a checkpoint file (bad magic)"));
    }
    let version = read_u16(r)?;
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let step = read_u64(r)?;
    let cfg_len = read_u32(r)? as usize;
    let mut cfg = vec![0u8; cfg_len];
    r.read_exact(&mut cfg)?;
    let config_text =
        String::from_utf8(cfg).map_err(|_| Error::invalid("checkpoint config is not utf-8"))?;
    let count = read_u32(r)? as usize;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name =
            String::from_utf8(name).map_err(|_| Error::invalid("parameter name is not utf-8"))?;
        let mut tag = [0u8; 2];
        r.read_exact(&mut tag)?;
        let dtype = Dtype::from_code(tag[0])?;
        if dtype != T::DTYPE {
            return Err(Error::invalid(format!(
                "checkpoint stores dtype {:?} but loader expects {:?}",
                dtype,
                T::DTYPE
            )));
        }
        let rank = tag[1] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        match dtype {
            Dtype::F32 => {
                let mut buf = [0u8; 4];
                for _ in 0..len {
                    r.read_exact(&mut buf)?;
                    data.push(T::from_f64(f32::from_le_bytes(buf) as f64));
                }
            }
            Dtype::F64 => {
                let mut buf = [0u8; 8];
                for _ in 0..len {
                    r.read_exact(&mut buf)?;
                    data.push(T::from_f64(f64::from_le_bytes(buf)));
                }
            }
        }
        params.insert(&name, Tensor::from_vec(&shape, data)?)?;
    }
    Ok(Checkpoint {
        config_text,
        step,
        params,
    })
}

pub fn save_to_path<T: Real>(path: &std::path::Path, ckpt: &Checkpoint<T>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save(&mut file, ckpt)?;
    Ok(())
}

pub fn load_from_path<T: Real>(path: &std::path::Path) -> Result<Checkpoint<T>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    load(&mut file)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
