//! Versioned binary checkpoints: magic bytes, format version, a JSON
//! configuration block, then every parameter block as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::LocalizerConfig;
use super::model::LocalizerModel;
use super::params::block_specs;
use crate::error::{Error, Result};
use crate::types::ForegroundClasses;

const MAGIC: &[u8; 8] = b"ITALCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: LocalizerConfig,
    input_dim: usize,
    classes: ForegroundClasses,
}

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

pub fn write_checkpoint(model: &LocalizerModel, mut w: impl Write) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        input_dim: model.input_dim,
        classes: model.classes,
    })?;
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    put_u32(&mut w, header.len()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    put_u32(&mut w, model.params.blocks.len()).map_err(io)?;
    for block in &model.params.blocks {
        put_u32(&mut w, block.data.len()).map_err(io)?;
        let bytes: Vec<u8> = block
            .data
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        w.write_all(&bytes).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_checkpoint(model: &LocalizerModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

struct Cursor<R> {
    inner: R,
    source: String,
    offset: usize,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|e| {
            Error::format("checkpoint", format!("{} byte {}", self.source, self.offset), e.to_string())
        })?;
        self.offset += n;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::format("checkpoint", format!("{} byte {}", self.source, self.offset), message)
    }
}

pub fn read_checkpoint(reader: impl Read, source: &str) -> Result<LocalizerModel> {
    let mut c = Cursor {
        inner: reader,
        source: source.to_string(),
        offset: 0,
    };
    if c.bytes(MAGIC.len())? != MAGIC {
        return Err(c.fail("not a localizer checkpoint"));
    }
    let version = c.u32()?;
    if version != VERSION as usize {
        return Err(c.fail(format!("unsupported version {version}")));
    }
    let len = c.u32()?;
    let header: Header = serde_json::from_slice(&c.bytes(len)?).map_err(|e| c.fail(e.to_string()))?;
    let mut model = LocalizerModel::new(header.config, header.input_dim, header.classes)?;
    let specs = block_specs(
        model.input_dim,
        model.config.hidden_dim,
        model.config.head_layers,
        model.classes.len(),
    );
    if c.u32()? != specs.len() {
        return Err(c.fail("parameter block count does not match the configuration"));
    }
    for block in &mut model.params.blocks {
        let n = c.u32()?;
        if n != block.data.len() {
            return Err(c.fail(format!("block {} holds {n} values, expected {}", block.name, block.data.len())));
        }
        let raw = c.bytes(4 * n)?;
        for (dst, b) in block.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    if !model.params.all_finite() {
        return Err(c.fail("non-finite parameter values"));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<LocalizerModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_f32_exact() {
        let model = LocalizerModel::new(LocalizerConfig::default(), 6, ForegroundClasses::new(4, Some(0))).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_checkpoint(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.config, model.config);
        for (a, b) in back.params.blocks.iter().zip(&model.params.blocks) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        // Re-saving an f32-rounded model is byte-identical.
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"NOTACKPTxxxxxxxx"[..], "mem").is_err());
        let model = LocalizerModel::new(LocalizerConfig::default(), 2, ForegroundClasses::new(2, None)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(buf.as_slice(), "mem"), Err(Error::Format { .. })));
    }
}
