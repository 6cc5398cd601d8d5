//! Text and binary embedding formats.
//!
//! Text: one `word v1 ... vd` line per entry, optionally preceded by a
//! `count dim` header. Binary: the magic `XLNEREMB`, `dim` as u32, `count` as
//! u64, then per entry a u32 byte length, the UTF-8 word and `dim` f64
//! values, all little-endian. In both formats an entry named `<UNK>` also
//! becomes the unknown-word vector.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EmbeddingTable;
use crate::{Error, Result};

pub const UNK_WORD: &str = "<UNK>";
const MAGIC: &[u8; 8] = b"XLNEREMB";

pub fn load_embeddings<R: BufRead>(
    reader: R,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    let mut declared_count = None;
    let mut dim = expected_dim;
    let mut duplicates = 0usize;
    let mut buf = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if table.is_none() && declared_count.is_none() && fields.len() == 2 {
            if let (Ok(count), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                if let Some(e) = expected_dim {
                    if e != d {
                        return Err(Error::DimensionMismatch {
                            expected: e,
                            found: d,
                        });
                    }
                }
                declared_count = Some(count);
                dim = Some(d);
                continue;
            }
        }
        let row_dim = fields.len() - 1;
        let d = *dim.get_or_insert(row_dim);
        if row_dim != d {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {d} values, found {row_dim}"),
            });
        }
        buf.clear();
        for v in &fields[1..] {
            let x: f64 = v.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: `{v}`"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "non-finite value".into(),
                });
            }
            buf.push(x);
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(d));
        if !t.insert(fields[0], &buf) {
            duplicates += 1;
            log::warn!("line {line_no}: duplicate word `{}` ignored", fields[0]);
        }
    }

    let mut table = table.unwrap_or_else(|| EmbeddingTable::new(dim.unwrap_or(0)));
    if let Some(count) = declared_count {
        if count != table.len() + duplicates {
            log::warn!(
                "header declares {count} entries, file has {}",
                table.len() + duplicates
            );
        }
    }
    if let Some(unk) = table.get(UNK_WORD).map(<[f64]>::to_vec) {
        table.set_unk(&unk);
    }
    Ok(table)
}

pub fn read_embeddings(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 8];
    let is_binary = reader
        .fill_buf()
        .map(|b| b.starts_with(MAGIC))
        .unwrap_or(false);
    if is_binary {
        reader.read_exact(&mut magic)?;
        let table = read_binary_body(&mut reader)?;
        if let Some(e) = expected_dim {
            if e != table.dim() {
                return Err(Error::DimensionMismatch {
                    expected: e,
                    found: table.dim(),
                });
            }
        }
        return Ok(table);
    }
    load_embeddings(reader, expected_dim)
}

/// Text format with a `count dim` header; values use the shortest decimal
/// form that reads back to the same f64.
pub fn save_embeddings<W: Write>(table: &EmbeddingTable, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{} {}", table.len(), table.dim())?;
    for (i, word) in table.words().enumerate() {
        w.write_all(word.as_bytes())?;
        for x in table.vector(i) {
            write!(w, " {x}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(table: &EmbeddingTable, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&(table.dim() as u32).to_le_bytes())?;
    w.write_all(&(table.len() as u64).to_le_bytes())?;
    for (i, word) in table.words().enumerate() {
        w.write_all(&(word.len() as u32).to_le_bytes())?;
        w.write_all(word.as_bytes())?;
        for x in table.vector(i) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<EmbeddingTable> {
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an embedding cache (bad magic)".into()));
    }
    read_binary_body(&mut reader)
}

fn read_binary_body<R: Read>(r: &mut R) -> Result<EmbeddingTable> {
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u32b)?;
    let dim = u32::from_le_bytes(u32b) as usize;
    r.read_exact(&mut u64b)?;
    let count = u64::from_le_bytes(u64b);
    let mut table = EmbeddingTable::new(dim);
    let mut vec = vec![0.0; dim];
    for _ in 0..count {
        r.read_exact(&mut u32b)?;
        let mut word = vec![0u8; u32::from_le_bytes(u32b) as usize];
        r.read_exact(&mut word)?;
        let word = String::from_utf8(word)
            .map_err(|_| Error::Format("embedding word is not UTF-8".into()))?;
        for x in vec.iter_mut() {
            r.read_exact(&mut u64b)?;
            *x = f64::from_le_bytes(u64b);
        }
        if !table.insert(word.clone(), &vec) {
            log::warn!("duplicate word `{word}` in embedding cache ignored");
        }
    }
    if let Some(unk) = table.get(UNK_WORD).map(<[f64]>::to_vec) {
        table.set_unk(&unk);
    }
    Ok(table)
}
