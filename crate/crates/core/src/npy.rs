//! Minimal NPY v1.0 reader/writer for little-endian `f4`/`f8` C-order arrays.
//!
//! Headers are written the way numpy writes them (dict literal padded with
//! spaces, newline terminated, preamble + header a multiple of 64 bytes), so
//! files round-trip through `numpy.load` / `numpy.save` unchanged.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub dtype: Dtype,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl Header {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dict(&self) -> String {
        let shape = match self.shape.as_slice() {
            [n] => format!("({n},)"),
            dims => format!("({})", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
        };
        let fortran = if self.fortran_order { "True" } else { "False" };
        format!("{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}", self.dtype.descr(), fortran, shape)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut dict = self.dict();
        // magic(6) + version(2) + header_len(2)
        let preamble = MAGIC.len() + 4;
        let total = (preamble + dict.len() + 1).div_ceil(ALIGN) * ALIGN;
        let pad = total - preamble - dict.len() - 1;
        dict.extend(std::iter::repeat_n(' ', pad));
        dict.push('\n');
        w.write_all(&MAGIC)?;
        w.write_all(&[1, 0])?;
        w.write_all(&(dict.len() as u16).to_le_bytes())?;
        w.write_all(dict.as_bytes())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Header> {
        let bad = |m: &str| Error::MalformedHeader(m.to_string());
        let mut pre = [0u8; 10];
        r.read_exact(&mut pre).map_err(|_| bad("file shorter than NPY preamble"))?;
        if pre[..6] != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        if pre[6..8] != [1, 0] {
            return Err(Error::MalformedHeader(format!("unsupported NPY version {}.{}", pre[6], pre[7])));
        }
        let hlen = u16::from_le_bytes([pre[8], pre[9]]) as usize;
        let mut raw = vec![0u8; hlen];
        r.read_exact(&mut raw).map_err(|_| bad("truncated header"))?;
        let text = std::str::from_utf8(&raw).map_err(|_| bad("header is not ASCII"))?;
        parse_dict(text)
    }
}

fn parse_dict(text: &str) -> Result<Header> {
    let bad = |m: String| Error::MalformedHeader(m);
    let body = text.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| bad(format!("header is not a dict literal: {body:?}")))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| bad(format!("bad key near {rest:?}")))?;
        let after =
            after.trim_start().strip_prefix(':').ok_or_else(|| bad(format!("missing ':' after {key}")))?.trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = take_quoted(after).ok_or_else(|| bad("bad descr".into()))?;
                descr = Some(match v {
                    "<f4" => Dtype::F4,
                    "<f8" => Dtype::F8,
                    other => return Err(bad(format!("unsupported descr {other:?}"))),
                });
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else {
                    return Err(bad("bad fortran_order".into()));
                }
            }
            "shape" => {
                let inner = after.strip_prefix('(').ok_or_else(|| bad("bad shape".into()))?;
                let close = inner.find(')').ok_or_else(|| bad("unterminated shape".into()))?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>().map_err(|_| bad(format!("bad dimension {s:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            other => return Err(bad(format!("unexpected key {other:?}"))),
        };
        rest = after.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }

    Ok(Header {
        dtype: descr.ok_or_else(|| bad("missing descr".into()))?,
        fortran_order: fortran.ok_or_else(|| bad("missing fortran_order".into()))?,
        shape: shape.ok_or_else(|| bad("missing shape".into()))?,
    })
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let q = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(q)?;
    Some((&inner[..end], &inner[end + 1..]))
}

fn read_payload<R: Read>(r: &mut R, header: &Header) -> Result<Vec<u8>> {
    if header.fortran_order {
        return Err(Error::MalformedHeader("fortran_order arrays are not supported".into()));
    }
    let want = header.len() * header.dtype.size();
    let mut buf = Vec::with_capacity(want);
    r.read_to_end(&mut buf).map_err(|e| Error::MalformedHeader(format!("payload read failed: {e}")))?;
    if buf.len() != want {
        return Err(Error::ShapeMismatch(format!(
            "header shape {:?} needs {want} payload bytes, file has {}",
            header.shape,
            buf.len()
        )));
    }
    Ok(buf)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Reads an `<f4` array. Other dtypes are rejected.
pub fn read_f32(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let mut r = open(path)?;
    let header = Header::read(&mut r)?;
    if header.dtype != Dtype::F4 {
        return Err(Error::MalformedHeader(format!("expected descr '<f4', found '{}'", header.dtype.descr())));
    }
    let buf = read_payload(&mut r, &header)?;
    let data = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header.shape, data))
}

/// Reads an `<f8` or `<f4` array, widening to `f64`.
pub fn read_f64(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = open(path)?;
    let header = Header::read(&mut r)?;
    let buf = read_payload(&mut r, &header)?;
    let data = match header.dtype {
        Dtype::F8 => buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect(),
        Dtype::F4 => {
            buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64).collect()
        }
    };
    Ok((header.shape, data))
}

fn write_with<F>(path: &Path, header: &Header, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    header.write(&mut w).and_then(|_| body(&mut w)).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_f32(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    check_len(shape, data.len())?;
    let header = Header { dtype: Dtype::F4, fortran_order: false, shape: shape.to_vec() };
    write_with(path, &header, |w| data.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())))
}

pub fn write_f64(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    check_len(shape, data.len())?;
    let header = Header { dtype: Dtype::F8, fortran_order: false, shape: shape.to_vec() };
    write_with(path, &header, |w| data.iter().try_for_each(|v| w.write_all(&v.to_le_bytes())))
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let want: usize = shape.iter().product();
    if want != len {
        return Err(Error::ShapeMismatch(format!("shape {shape:?} does not hold {len} values")));
    }
    Ok(())
}
