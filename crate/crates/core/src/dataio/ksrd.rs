//! KSRD: a minimal record-based binary format for the artifact's arrays.
//!
//! One record is: magic "KSRD" (4 bytes), u32 version, u32 dtype code,
//! u32 ndims, u64 dims[ndims], then the little-endian payload. Dtype codes:
//! 1 = complex128 stored as (re, im) f64 pairs, 2 = f64, 3 = u8, 4 = u64.
//! Compound objects (masks, splits, checkpoints) are a fixed sequence of
//! records in one file. Everything round-trips bit-exactly.

use crate::error::{ReconError, Result};
use crate::grid::ComplexGrid;
use crate::network::{NetConfig, NetworkParams};
use crate::sampling::{BoolGrid, SamplingMask, SplitScheme, SplitSpec};
use num_complex::Complex64;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"KSRD";
pub const VERSION: u32 = 1;

pub const DTYPE_COMPLEX128: u32 = 1;
pub const DTYPE_F64: u32 = 2;
pub const DTYPE_U8: u32 = 3;
pub const DTYPE_U64: u32 = 4;

/// Byte-offset-tracking reader over a fully loaded blob.
pub struct KsrdReader {
    buf: Vec<u8>,
    pos: usize,
}

impl KsrdReader {
    pub fn new(buf: Vec<u8>) -> Self {
        KsrdReader { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(ReconError::Format {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}: expected {n} bytes, {available} available"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn read_u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn read_f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.read_u64(what)?))
    }

    /// Read one record header, checking magic, version and dtype.
    pub fn read_header(&mut self, expect_dtype: u32) -> Result<Vec<u64>> {
        let start = self.pos as u64;
        let magic = self.take(4, "magic")?;
        if magic != MAGIC {
            return Err(ReconError::Format {
                offset: start,
                msg: format!("bad magic {magic:?}, expected \"KSRD\""),
            });
        }
        let version = self.read_u32("version")?;
        if version != VERSION {
            return Err(ReconError::Format {
                offset: start + 4,
                msg: format!("unsupported version {version}, expected {VERSION}"),
            });
        }
        let dtype = self.read_u32("dtype")?;
        if dtype != expect_dtype {
            return Err(ReconError::Format {
                offset: start + 8,
                msg: format!("dtype {dtype}, expected {expect_dtype}"),
            });
        }
        let ndims = self.read_u32("ndims")? as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(self.read_u64("dims")?);
        }
        Ok(dims)
    }

    pub fn read_complex_payload(&mut self, count: usize) -> Result<Vec<Complex64>> {
        let bytes = self.take(count * 16, "complex payload")?;
        Ok(bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect())
    }

    pub fn read_f64_payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8, "f64 payload")?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn read_u8_payload(&mut self, count: usize) -> Result<Vec<u8>> {
        Ok(self.take(count, "u8 payload")?.to_vec())
    }

    pub fn read_u64_payload(&mut self, count: usize) -> Result<Vec<u64>> {
        let bytes = self.take(count * 8, "u64 payload")?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn expect_end(&self) -> Result<()> {
        if !self.at_end() {
            return Err(ReconError::Format {
                offset: self.pos as u64,
                msg: format!("{} trailing bytes after final record", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn write_header(out: &mut Vec<u8>, dtype: u32, dims: &[u64]) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
}

fn expect_dims(dims: &[u64], n: usize, offset: u64) -> Result<()> {
    if dims.len() != n {
        return Err(ReconError::Format {
            offset,
            msg: format!("{} dims, expected {n}", dims.len()),
        });
    }
    let total: u64 = dims.iter().product();
    if total == 0 || total > (1 << 32) {
        return Err(ReconError::Format {
            offset,
            msg: format!("implausible dims {dims:?}"),
        });
    }
    Ok(())
}

/// Anything serializable as a KSRD record sequence.
pub trait KsrdObject: Sized {
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(r: &mut KsrdReader) -> Result<Self>;

    /// Leading dims of the first record, for manifest validation.
    fn header_dims(&self) -> Vec<u64>;
}

impl KsrdObject for ComplexGrid {
    fn encode(&self, out: &mut Vec<u8>) {
        write_header(out, DTYPE_COMPLEX128, &[self.rows() as u64, self.cols() as u64]);
        for v in self.data() {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }

    fn decode(r: &mut KsrdReader) -> Result<Self> {
        let off = r.offset();
        let dims = r.read_header(DTYPE_COMPLEX128)?;
        expect_dims(&dims, 2, off)?;
        let (rows, cols) = (dims[0] as usize, dims[1] as usize);
        let data = r.read_complex_payload(rows * cols)?;
        ComplexGrid::new(rows, cols, data)
    }

    fn header_dims(&self) -> Vec<u64> {
        vec![self.rows() as u64, self.cols() as u64]
    }
}

/// Per-coil grid stacks (k-space or sensitivity maps) as one 3-D record.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack(pub Vec<ComplexGrid>);

impl KsrdObject for GridStack {
    fn encode(&self, out: &mut Vec<u8>) {
        let ncoils = self.0.len() as u64;
        let (rows, cols) = self.0[0].shape();
        write_header(out, DTYPE_COMPLEX128, &[ncoils, rows as u64, cols as u64]);
        for grid in &self.0 {
            for v in grid.data() {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }

    fn decode(r: &mut KsrdReader) -> Result<Self> {
        let off = r.offset();
        let dims = r.read_header(DTYPE_COMPLEX128)?;
        expect_dims(&dims, 3, off)?;
        let (ncoils, rows, cols) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
        let mut grids = Vec::with_capacity(ncoils);
        for _ in 0..ncoils {
            let data = r.read_complex_payload(rows * cols)?;
            grids.push(ComplexGrid::new(rows, cols, data)?);
        }
        Ok(GridStack(grids))
    }

    fn header_dims(&self) -> Vec<u64> {
        let (rows, cols) = self.0[0].shape();
        vec![self.0.len() as u64, rows as u64, cols as u64]
    }
}

fn encode_bool_grid(grid: &BoolGrid, out: &mut Vec<u8>) {
    write_header(out, DTYPE_U8, &[grid.rows() as u64, grid.cols() as u64]);
    out.extend(grid.data().iter().map(|&b| b as u8));
}

fn decode_bool_grid(r: &mut KsrdReader) -> Result<BoolGrid> {
    let off = r.offset();
    let dims = r.read_header(DTYPE_U8)?;
    expect_dims(&dims, 2, off)?;
    let (rows, cols) = (dims[0] as usize, dims[1] as usize);
    let payload_off = r.offset();
    let bytes = r.read_u8_payload(rows * cols)?;
    let data = bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(ReconError::Format {
                offset: payload_off,
                msg: format!("boolean byte {other}, expected 0 or 1"),
            }),
        })
        .collect::<Result<Vec<bool>>>()?;
    BoolGrid::new(rows, cols, data)
}

impl KsrdObject for SamplingMask {
    fn encode(&self, out: &mut Vec<u8>) {
        encode_bool_grid(&self.picked, out);
        let (has_acs, lo, hi) = match self.acs_cols {
            Some((lo, hi)) => (1u64, lo as u64, hi as u64),
            None => (0, 0, 0),
        };
        write_header(out, DTYPE_U64, &[4]);
        for v in [self.accel as u64, has_acs, lo, hi] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn decode(r: &mut KsrdReader) -> Result<Self> {
        let picked = decode_bool_grid(r)?;
        let off = r.offset();
        let dims = r.read_header(DTYPE_U64)?;
        expect_dims(&dims, 1, off)?;
        let meta = r.read_u64_payload(dims[0] as usize)?;
        if meta.len() != 4 {
            return Err(ReconError::Format {
                offset: off,
                msg: format!("mask metadata has {} entries, expected 4", meta.len()),
            });
        }
        let acs_cols = if meta[1] != 0 {
            Some((meta[2] as usize, meta[3] as usize))
        } else {
            None
        };
        Ok(SamplingMask {
            picked,
            acs_cols,
            accel: meta[0] as usize,
        })
    }

    fn header_dims(&self) -> Vec<u64> {
        vec![self.picked.rows() as u64, self.picked.cols() as u64]
    }
}

impl KsrdObject for SplitSpec {
    fn encode(&self, out: &mut Vec<u8>) {
        encode_bool_grid(&self.dc_set, out);
        encode_bool_grid(&self.loss_set, out);
        write_header(out, DTYPE_F64, &[1]);
        out.extend_from_slice(&self.rho.to_le_bytes());
        let scheme = match self.scheme {
            SplitScheme::UniformRandom => 0u64,
            SplitScheme::GaussianDensity => 1,
        };
        write_header(out, DTYPE_U64, &[2]);
        out.extend_from_slice(&scheme.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
    }

    fn decode(r: &mut KsrdReader) -> Result<Self> {
        let dc_set = decode_bool_grid(r)?;
        let loss_set = decode_bool_grid(r)?;
        let off = r.offset();
        let dims = r.read_header(DTYPE_F64)?;
        expect_dims(&dims, 1, off)?;
        let rho = r.read_f64("rho")?;
        let off = r.offset();
        let dims = r.read_header(DTYPE_U64)?;
        expect_dims(&dims, 1, off)?;
        let meta = r.read_u64_payload(dims[0] as usize)?;
        if meta.len() != 2 {
            return Err(ReconError::Format {
                offset: off,
                msg: format!("split metadata has {} entries, expected 2", meta.len()),
            });
        }
        let scheme = match meta[0] {
            0 => SplitScheme::UniformRandom,
            1 => SplitScheme::GaussianDensity,
            other => {
                return Err(ReconError::Format {
                    offset: off,
                    msg: format!("unknown split scheme code {other}"),
                })
            }
        };
        Ok(SplitSpec {
            dc_set,
            loss_set,
            rho,
            scheme,
            seed: meta[1],
        })
    }

    fn header_dims(&self) -> Vec<u64> {
        vec![self.dc_set.rows() as u64, self.dc_set.cols() as u64]
    }
}

/// Trained network weights together with the unrolling configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCheckpoint {
    pub cfg: NetConfig,
    pub params: NetworkParams,
}

impl KsrdObject for NetworkCheckpoint {
    fn encode(&self, out: &mut Vec<u8>) {
        write_header(out, DTYPE_U64, &[5]);
        for v in [
            self.cfg.unrolls as u64,
            self.cfg.cg_iters as u64,
            self.cfg.channels as u64,
            self.cfg.res_blocks as u64,
            self.cfg.kernel as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        write_header(out, DTYPE_F64, &[1]);
        out.extend_from_slice(&self.cfg.scale.to_le_bytes());
        write_header(out, DTYPE_F64, &[self.params.len() as u64]);
        for v in self.params.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn decode(r: &mut KsrdReader) -> Result<Self> {
        let off = r.offset();
        let dims = r.read_header(DTYPE_U64)?;
        expect_dims(&dims, 1, off)?;
        let meta = r.read_u64_payload(dims[0] as usize)?;
        if meta.len() != 5 {
            return Err(ReconError::Format {
                offset: off,
                msg: format!("checkpoint metadata has {} entries, expected 5", meta.len()),
            });
        }
        let off = r.offset();
        let dims = r.read_header(DTYPE_F64)?;
        expect_dims(&dims, 1, off)?;
        let scale = r.read_f64("scale")?;
        let cfg = NetConfig {
            unrolls: meta[0] as usize,
            cg_iters: meta[1] as usize,
            channels: meta[2] as usize,
            res_blocks: meta[3] as usize,
            kernel: meta[4] as usize,
            scale,
        };
        let off = r.offset();
        let dims = r.read_header(DTYPE_F64)?;
        expect_dims(&dims, 1, off)?;
        let data = r.read_f64_payload(dims[0] as usize)?;
        let params =
            NetworkParams::from_parts(cfg.kernel, cfg.channels, cfg.res_blocks, cfg.scale, data)?;
        Ok(NetworkCheckpoint { cfg, params })
    }

    fn header_dims(&self) -> Vec<u64> {
        vec![5]
    }
}

/// Serialize an object to a file; byte layout is stable across runs.
pub fn write_blob<T: KsrdObject>(path: &Path, object: &T) -> Result<()> {
    let mut out = Vec::new();
    object.encode(&mut out);
    std::fs::write(path, out)?;
    Ok(())
}

/// Read an object back; fails with a byte offset on malformed input.
pub fn read_blob<T: KsrdObject>(path: &Path) -> Result<T> {
    let buf = std::fs::read(path)?;
    let mut r = KsrdReader::new(buf);
    let obj = T::decode(&mut r)?;
    r.expect_end()?;
    Ok(obj)
}

/// First-record dims of a blob on disk, without decoding the payload.
pub fn peek_dims(path: &Path) -> Result<Vec<u64>> {
    let buf = std::fs::read(path)?;
    let mut r = KsrdReader::new(buf);
    let start = r.offset();
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(ReconError::Format {
            offset: start,
            msg: "bad magic".into(),
        });
    }
    let _version = r.read_u32("version")?;
    let _dtype = r.read_u32("dtype")?;
    let ndims = r.read_u32("ndims")? as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(r.read_u64("dims")?);
    }
    Ok(dims)
}
