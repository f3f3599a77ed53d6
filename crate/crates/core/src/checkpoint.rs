//! Binary checkpoints.
//!
//! Layout (little-endian): magic `DASO`, format version `u32`, then `N`, `M`,
//! `d` and the hidden-layer count followed by each hidden width (all `u32`),
//! then every parameter group in [`Group::ALL`] order as row-major `f32`,
//! then the optimizer accumulators in the same order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::OptimState;
use crate::params::{Group, ModelParams, Shape};

pub const MAGIC: [u8; 4] = *b"DASO";
pub const VERSION: u32 = 1;

/// Bytes before the first parameter value.
pub fn header_len(shape: &Shape) -> usize {
    4 + 4 + 4 * 4 + 4 * shape.hidden.len()
}

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W) -> Self {
        Writer { inner }
    }

    pub fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }

    pub fn u32(&mut self, v: usize) -> std::io::Result<()> {
        let v = u32::try_from(v).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "size exceeds u32")
        })?;
        self.inner.write_all(&v.to_le_bytes())
    }

    pub fn f32s(&mut self, values: &[f64]) -> std::io::Result<()> {
        for &v in values {
            self.inner.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub(crate) struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R) -> Self {
        Reader { inner }
    }

    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!("while reading {what}")),
            _ => Error::Truncated(format!("{what}: {e}")),
        })
    }

    pub fn magic(&mut self) -> Result<[u8; 4]> {
        let mut m = [0u8; 4];
        self.exact(&mut m, "magic")?;
        Ok(m)
    }

    pub fn u32(&mut self, what: &str) -> Result<usize> {
        let mut b = [0u8; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b) as usize)
    }

    pub fn f32s_into(&mut self, out: &mut [f64], what: &str) -> Result<()> {
        let mut b = [0u8; 4];
        for v in out {
            self.exact(&mut b, what)?;
            *v = f32::from_le_bytes(b) as f64;
        }
        Ok(())
    }

    /// Fails unless the stream is exhausted.
    pub fn end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Dimension("trailing bytes after checkpoint data".to_owned())),
            Err(e) => Err(Error::Truncated(e.to_string())),
        }
    }
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, state: &OptimState, out: W) -> std::io::Result<W> {
    let shape = params.shape();
    let mut w = Writer::new(out);
    w.bytes(&MAGIC)?;
    w.bytes(&VERSION.to_le_bytes())?;
    w.u32(shape.num_users)?;
    w.u32(shape.num_items)?;
    w.u32(shape.dim)?;
    w.u32(shape.hidden.len())?;
    for &h in &shape.hidden {
        w.u32(h)?;
    }
    for g in Group::ALL {
        w.f32s(params.group(g))?;
    }
    for g in Group::ALL {
        w.f32s(state.group(g))?;
    }
    w.finish()
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<(ModelParams, OptimState)> {
    let mut r = Reader::new(input);
    let magic = r.magic()?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let num_users = r.u32("user count")?;
    let num_items = r.u32("item count")?;
    let dim = r.u32("dimension")?;
    let layers = r.u32("hidden layer count")?;
    if layers > 1024 {
        return Err(Error::Dimension(format!("{layers} hidden layers")));
    }
    let hidden = (0..layers)
        .map(|_| r.u32("hidden width"))
        .collect::<Result<Vec<_>>>()?;
    let shape = Shape {
        num_users,
        num_items,
        dim,
        hidden,
    };
    let mut params = ModelParams::zeros(&shape)?;
    for g in Group::ALL {
        r.f32s_into(params.group_mut(g), g.name())?;
    }
    let mut state = OptimState::new(&params);
    for g in Group::ALL {
        r.f32s_into(state.group_mut(g), g.name())?;
    }
    r.end()?;
    Ok((params, state))
}

pub fn save_checkpoint(params: &ModelParams, state: &OptimState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, state, BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, OptimState)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
