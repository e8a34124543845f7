//! Embedding file: 8-byte magic `STDGIEMB`, `u32` version, `u32` rank (3),
//! three `u64` dims (`T`, `N`, `K`), then `T·N·K` little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use stdgi_core::{EmbeddingSeries, Error, Result};

pub const MAGIC: &[u8; 8] = b"STDGIEMB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 4 + 3 * 8;

pub fn write_embeddings(path: &Path, emb: &EmbeddingSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&3u32.to_le_bytes()).map_err(io)?;
    for d in [emb.steps(), emb.nodes(), emb.dim()] {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
    }
    for v in emb.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `(T, N, K)` from the header alone.
pub fn read_dims(path: &Path) -> Result<(usize, usize, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_header(&mut BufReader::new(file), path)
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<(usize, usize, usize)> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if &head[..8] != MAGIC {
        return Err(Error::Validation(format!("{} is not an embedding file", path.display())));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let rank = u32::from_le_bytes(head[12..16].try_into().unwrap());
    if version != VERSION || rank != 3 {
        return Err(Error::Validation(format!(
            "{}: unsupported version {version} / rank {rank}",
            path.display()
        )));
    }
    let dim = |i: usize| u64::from_le_bytes(head[16 + 8 * i..24 + 8 * i].try_into().unwrap()) as usize;
    Ok((dim(0), dim(1), dim(2)))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let (t, n, k) = read_header(&mut r, path)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != t * n * k * 8 {
        return Err(Error::Validation(format!(
            "{}: payload holds {} bytes, header promises {}",
            path.display(),
            bytes.len(),
            t * n * k * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSeries::new(t, n, k, values)
}
