//! The `BRTH` model container: a flat binary file of named n-dimensional
//! 64-bit float records, used to persist every trained artifact (UBMs,
//! total-variability models, classifier weights, feature sets).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    4 bytes  "BRTH"
//! version  u32      currently 1
//! count    u32      number of records
//! record:  name_len u32, name (UTF-8), dtype u8 (0 = f64),
//!          rank u8, dims (rank x u64), values (prod(dims) x f64)
//! ```
//!
//! Record names must be unique; unknown dtypes and payload size mismatches
//! are rejected on read.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BRTH";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

/// One named record: dimensions plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u64>,
    pub values: Vec<f64>,
}

/// An ordered collection of records with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelContainer {
    records: Vec<Record>,
}

impl ModelContainer {
    pub fn new() -> Self {
        ModelContainer::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.name.as_str())
    }

    /// Add a record, rejecting duplicate names and size mismatches.
    pub fn insert(&mut self, name: &str, dims: &[u64], values: Vec<f64>) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::Container(format!("duplicate record name {name:?}")));
        }
        let expected: u64 = dims.iter().product();
        if expected != values.len() as u64 {
            return Err(Error::Container(format!(
                "record {name:?}: dims {dims:?} declare {expected} values, got {}",
                values.len()
            )));
        }
        self.records.push(Record {
            name: name.to_string(),
            dims: dims.to_vec(),
            values,
        });
        Ok(())
    }

    pub fn insert_scalar(&mut self, name: &str, value: f64) -> Result<()> {
        self.insert(name, &[], vec![value])
    }

    pub fn insert_vector(&mut self, name: &str, values: &[f64]) -> Result<()> {
        self.insert(name, &[values.len() as u64], values.to_vec())
    }

    pub fn insert_matrix(&mut self, name: &str, m: &Array2<f64>) -> Result<()> {
        let (r, c) = m.dim();
        self.insert(name, &[r as u64, c as u64], m.iter().cloned().collect())
    }

    pub fn insert_array3(&mut self, name: &str, m: &Array3<f64>) -> Result<()> {
        let (a, b, c) = m.dim();
        self.insert(
            name,
            &[a as u64, b as u64, c as u64],
            m.iter().cloned().collect(),
        )
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    fn require(&self, name: &str) -> Result<&Record> {
        self.get(name)
            .ok_or_else(|| Error::Container(format!("record {name:?} not found")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let r = self.require(name)?;
        if r.values.len() != 1 {
            return Err(Error::Container(format!("record {name:?} is not a scalar")));
        }
        Ok(r.values[0])
    }

    pub fn vector(&self, name: &str) -> Result<Array1<f64>> {
        let r = self.require(name)?;
        if r.dims.len() != 1 {
            return Err(Error::Container(format!(
                "record {name:?} has rank {}, expected 1",
                r.dims.len()
            )));
        }
        Ok(Array1::from_vec(r.values.clone()))
    }

    pub fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        let r = self.require(name)?;
        if r.dims.len() != 2 {
            return Err(Error::Container(format!(
                "record {name:?} has rank {}, expected 2",
                r.dims.len()
            )));
        }
        Array2::from_shape_vec((r.dims[0] as usize, r.dims[1] as usize), r.values.clone())
            .map_err(|e| Error::Container(format!("record {name:?}: {e}")))
    }

    pub fn array3(&self, name: &str) -> Result<Array3<f64>> {
        let r = self.require(name)?;
        if r.dims.len() != 3 {
            return Err(Error::Container(format!(
                "record {name:?} has rank {}, expected 3",
                r.dims.len()
            )));
        }
        Array3::from_shape_vec(
            (
                r.dims[0] as usize,
                r.dims[1] as usize,
                r.dims[2] as usize,
            ),
            r.values.clone(),
        )
        .map_err(|e| Error::Container(format!("record {name:?}: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
        w.write_u32::<LittleEndian>(self.records.len() as u32)
            .map_err(io)?;
        for rec in &self.records {
            w.write_u32::<LittleEndian>(rec.name.len() as u32)
                .map_err(io)?;
            w.write_all(rec.name.as_bytes()).map_err(io)?;
            w.write_u8(DTYPE_F64).map_err(io)?;
            w.write_u8(rec.dims.len() as u8).map_err(io)?;
            for &d in &rec.dims {
                w.write_u64::<LittleEndian>(d).map_err(io)?;
            }
            for &v in &rec.values {
                w.write_f64::<LittleEndian>(v).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Container(format!(
                "{}: bad magic {magic:?}, not a BRTH container",
                path.display()
            )));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(Error::Container(format!(
                "{}: unsupported container version {version}",
                path.display()
            )));
        }
        let count = r.read_u32::<LittleEndian>().map_err(io)?;
        let mut container = ModelContainer::new();
        let mut seen = BTreeSet::new();
        for _ in 0..count {
            let name_len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes).map_err(io)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Container(format!("invalid record name: {e}")))?;
            if !seen.insert(name.clone()) {
                return Err(Error::Container(format!("duplicate record name {name:?}")));
            }
            let dtype = r.read_u8().map_err(io)?;
            if dtype != DTYPE_F64 {
                return Err(Error::Container(format!(
                    "record {name:?}: unknown dtype code {dtype}"
                )));
            }
            let rank = r.read_u8().map_err(io)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.read_u64::<LittleEndian>().map_err(io)?);
            }
            let n: u64 = dims.iter().product();
            let mut values = Vec::with_capacity(n as usize);
            for _ in 0..n {
                values.push(r.read_f64::<LittleEndian>().map_err(|e| {
                    Error::Container(format!(
                        "record {name:?}: payload shorter than declared size ({e})"
                    ))
                })?);
            }
            container.records.push(Record { name, dims, values });
        }
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => Ok(container),
            Ok(_) => Err(Error::Container(format!(
                "{}: trailing bytes after final record",
                path.display()
            ))),
            Err(e) => Err(io(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_preserves_all_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.brth");

        let mut c = ModelContainer::new();
        c.insert_scalar("rank", 40.0).unwrap();
        c.insert_vector("weights", &[0.25, 0.75]).unwrap();
        c.insert_matrix("means", &array![[1.0, 2.0], [3.0, -4.5]])
            .unwrap();
        c.insert("empty", &[0], vec![]).unwrap();
        c.save(&path).unwrap();

        let back = ModelContainer::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.scalar("rank").unwrap(), 40.0);
        assert_eq!(back.matrix("means").unwrap()[[1, 1]], -4.5);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut c = ModelContainer::new();
        c.insert_scalar("x", 1.0).unwrap();
        assert!(c.insert_scalar("x", 2.0).is_err());
    }

    #[test]
    fn size_mismatch_rejected_on_insert() {
        let mut c = ModelContainer::new();
        assert!(c.insert("bad", &[3], vec![1.0]).is_err());
    }

    #[test]
    fn unknown_dtype_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.brth");
        let mut c = ModelContainer::new();
        c.insert_scalar("x", 1.0).unwrap();
        c.save(&path).unwrap();

        // Corrupt the dtype byte of the single record: it sits right after
        // magic(4) + version(4) + count(4) + name_len(4) + name(1).
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[17] = 9;
        std::fs::write(&path, bytes).unwrap();

        let err = ModelContainer::load(&path).unwrap_err();
        assert!(err.to_string().contains("unknown dtype"));
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.brth");
        let mut c = ModelContainer::new();
        c.insert_vector("v", &[1.0, 2.0, 3.0]).unwrap();
        c.save(&path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(ModelContainer::load(&path).is_err());
    }

    #[test]
    fn missing_file_is_distinct_error() {
        let err = ModelContainer::load(Path::new("/no/such.brth")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
