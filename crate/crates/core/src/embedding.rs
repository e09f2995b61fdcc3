//! Embedding vectors and the id-keyed store, with the binary `SEMB` and TSV
//! file formats.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "SEMB" | u32 version=1 | u32 dim | u32 count |
//!     count × ( u16 id_len | id bytes (UTF-8) | dim × f32 )
//! ```
//!
//! Vectors are held as `f64` in memory and written as `f32`, so a binary
//! round trip is bit-exact for any store whose values are representable in
//! `f32` (everything read from a `SEMB` file is).

use std::fs;
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::Path;

use indexmap::map::Entry;
use indexmap::IndexMap;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SEMB";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DIM: usize = 192;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// A named embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n.is_nan() || n < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch {
            expected,
            found,
            id: None,
        });
    }
    Ok(())
}

/// Embeddings keyed by id, all of one dimension. Iteration follows insertion
/// order so that written files are reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: IndexMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ConfigInvalid("dim"));
        }
        Ok(Self {
            dim,
            entries: IndexMap::new(),
        })
    }

    /// Builds a store from `(id, vector)` pairs, inferring the dimension from
    /// the first entry.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut iter = entries.into_iter().peekable();
        let dim = match iter.peek() {
            Some((_, v)) => v.len(),
            None => return Err(Error::ConfigInvalid("dim")),
        };
        let mut store = Self::new(dim)?;
        for (id, v) in iter {
            store.insert(id, v)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: vector.len(),
                id: Some(id),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::DomainError(format!("non-finite component in '{id}'")));
        }
        match self.entries.entry(id) {
            Entry::Occupied(e) => Err(Error::DuplicateId(e.key().clone())),
            Entry::Vacant(e) => {
                e.insert(vector);
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn embedding(&self, id: &str) -> Option<Embedding> {
        self.get(id).map(|v| Embedding::new(id, v.to_vec()))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (id, v) in &self.entries {
            let bytes = id.as_bytes();
            let len = u16::try_from(bytes.len()).map_err(|_| Error::BadId)?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(bytes)?;
            for x in v {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)? as usize;
        let mut store = Self::new(dim)?;
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len)?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut id)?;
            let id = String::from_utf8(id).map_err(|_| Error::BadId)?;
            read_exact(&mut r, &mut buf)?;
            let v = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            store.insert(id, v)?;
        }
        Ok(store)
    }

    /// Writes `<id>\t<v1>\t...` lines preceded by a `#dim=<n>` header.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "#dim={}", self.dim)?;
        for (id, v) in &self.entries {
            write!(w, "{id}")?;
            for x in v {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut declared: Option<usize> = None;
        let mut store: Option<Self> = None;
        for (idx, line) in r.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#dim=") {
                let d = rest.trim().parse::<usize>().map_err(|_| Error::BadValue {
                    line: line_no,
                    msg: format!("bad dim header '{rest}'"),
                })?;
                declared = Some(d);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default();
            if id.is_empty() {
                return Err(Error::MalformedLine(line_no));
            }
            let v = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::BadValue {
                        line: line_no,
                        msg: format!("bad number '{f}'"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let s = match store.as_mut() {
                Some(s) => s,
                None => store.insert(Self::new(declared.unwrap_or(v.len()))?),
            };
            s.insert(id, v)?;
        }
        match store {
            Some(s) => Ok(s),
            None => Self::new(declared.unwrap_or(DEFAULT_DIM)),
        }
    }

    /// Reads either format, sniffing the `SEMB` magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
        let res = if bytes.starts_with(MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::read_tsv(bytes.as_slice())
        };
        res.map_err(|e| e.in_file(path))
    }

    /// Writes TSV when the extension is `.tsv` or `.txt`, binary otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        let w = BufWriter::new(file);
        let tsv = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("tsv") | Some("txt")
        );
        if tsv {
            self.write_tsv(w)
        } else {
            self.write_binary(w)
        }
        .map_err(|e| e.in_file(path))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::TruncatedRecord,
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_pythagorean() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn binary_round_trip_small() {
        let store = EmbeddingStore::from_entries([("a", vec![1.0, 2.0])]).unwrap();
        let mut buf = Vec::new();
        store.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SEMB");
        assert_eq!(EmbeddingStore::read_binary(buf.as_slice()).unwrap(), store);
    }

    #[test]
    fn dim_mismatch_and_duplicates() {
        let err = EmbeddingStore::from_entries([("a", vec![1.0, 2.0]), ("b", vec![1.0, 2.0, 3.0])])
            .unwrap_err();
        assert!(matches!(err, Error::DimMismatch { expected: 2, found: 3, .. }));
        let err =
            EmbeddingStore::from_entries([("a", vec![1.0]), ("a", vec![2.0])]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "a"));

        let tsv = "a\t1\t2\nb\t1\t2\t3\n";
        assert!(matches!(
            EmbeddingStore::read_tsv(tsv.as_bytes()),
            Err(Error::DimMismatch { .. })
        ));
        let tsv = "#dim=3\na\t1\t2\n";
        assert!(matches!(
            EmbeddingStore::read_tsv(tsv.as_bytes()),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn binary_errors() {
        assert!(matches!(
            EmbeddingStore::read_binary(&b"SEMX\x01\0\0\0"[..]),
            Err(Error::BadMagic)
        ));
        let store = EmbeddingStore::from_entries([("a", vec![1.0, 2.0])]).unwrap();
        let mut buf = Vec::new();
        store.write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(
            EmbeddingStore::read_binary(buf.as_slice()),
            Err(Error::TruncatedRecord)
        ));
        // duplicate ids inside a binary file
        let mut buf = Vec::new();
        buf.extend_from_slice(b"SEMB");
        for x in [1u32, 1, 2] {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for _ in 0..2 {
            buf.extend_from_slice(&1u16.to_le_bytes());
            buf.push(b'a');
            buf.extend_from_slice(&1.0f32.to_le_bytes());
        }
        assert!(matches!(
            EmbeddingStore::read_binary(buf.as_slice()),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn tsv_parses_header_and_blank_lines() {
        let s = EmbeddingStore::read_tsv("#dim=2\n\nx\t0.5\t-1.25\n".as_bytes()).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.get("x").unwrap(), &[0.5, -1.25]);
    }

    fn arb_store() -> impl Strategy<Value = EmbeddingStore> {
        (1usize..8).prop_flat_map(|dim| {
            proptest::collection::btree_map(
                "[a-z0-9_]{1,12}",
                proptest::collection::vec(-1e6f32..1e6f32, dim),
                1..20,
            )
            .prop_map(|m| {
                EmbeddingStore::from_entries(
                    m.into_iter()
                        .map(|(k, v)| (k, v.into_iter().map(f64::from).collect())),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn binary_write_read_is_identity(store in arb_store()) {
            let mut buf = Vec::new();
            store.write_binary(&mut buf).unwrap();
            let back = EmbeddingStore::read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(back, store);
        }

        #[test]
        fn tsv_write_read_within_tolerance(store in arb_store()) {
            let mut buf = Vec::new();
            store.write_tsv(&mut buf).unwrap();
            let back = EmbeddingStore::read_tsv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.dim(), store.dim());
            for ((ia, va), (ib, vb)) in store.iter().zip(back.iter()) {
                prop_assert_eq!(ia, ib);
                for (x, y) in va.iter().zip(vb) {
                    prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
                }
            }
        }

        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(-100.0f64..100.0, 1..10)) {
            prop_assume!(norm(&v) > 1e-6);
            let a = l2_normalize(&v).unwrap();
            prop_assert!((norm(&a) - 1.0).abs() < 1e-12);
            let b = l2_normalize(&a).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
