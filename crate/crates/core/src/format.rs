//! Token file codecs.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "SAT1" | N: u32 | C: u32 | reserved: u32 = 0 | N*C f64, row-major
//! ```
//!
//! The CSV alternative has a header `token_id,c0,...,c{C-1}` and one row per
//! token. Values are written in shortest round-trip decimal form.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::TokenMatrix;

pub const MAGIC: &[u8; 4] = b"SAT1";
const HEADER_LEN: usize = 16;

pub fn encode_binary(m: &TokenMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<TokenMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (n, c, reserved) = (word(4), word(8), word(12));
    if reserved != 0 {
        return Err(Error::Malformed(format!("reserved header field is {reserved}, expected 0")));
    }
    let expected = HEADER_LEN + n * c * 8;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::Malformed(format!("{} trailing bytes after payload", bytes.len() - expected)));
    }
    let data = bytes[HEADER_LEN..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    TokenMatrix::new(n, c, data)
}

pub fn write_csv<W: Write>(m: &TokenMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["token_id".to_string()];
    header.extend((0..m.cols()).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<TokenMatrix> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.get(0) != Some("token_id") || header.len() < 2 {
        return Err(Error::Malformed("CSV header must be token_id,c0,...".into()));
    }
    let c = header.len() - 1;
    let mut data = Vec::new();
    let mut n = 0usize;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let id: usize =
            rec[0].trim().parse().map_err(|_| Error::Malformed(format!("row {line}: bad token_id `{}`", &rec[0])))?;
        if id != line {
            return Err(Error::Malformed(format!("row {line}: token_id {id} out of order")));
        }
        for field in rec.iter().skip(1) {
            let v: f64 =
                field.trim().parse().map_err(|_| Error::Malformed(format!("row {line}: bad value `{field}`")))?;
            data.push(v);
        }
        n += 1;
    }
    TokenMatrix::new(n, c, data)
}

/// Loads a token file, picking the codec from the extension (`.csv` or binary).
pub fn load_tokens(path: &Path) -> Result<TokenMatrix> {
    if is_csv(path) {
        read_csv(fs::File::open(path)?)
    } else {
        decode_binary(&fs::read(path)?)
    }
}

pub fn save_tokens(path: &Path, m: &TokenMatrix) -> Result<()> {
    if is_csv(path) {
        write_csv(m, fs::File::create(path)?)
    } else {
        fs::write(path, encode_binary(m))?;
        Ok(())
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
