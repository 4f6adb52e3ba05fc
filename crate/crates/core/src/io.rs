//! CBME binary interchange format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  0x43 0x42 0x4D 0x45 ("CBME")
//! version u32      1
//! dim     u32      channel count c
//! role    u8       0 = base, 1 = novel
//! classes u32      class count
//! per class:
//!   class_id u32
//!   count    u32   vector count n_i
//!   payload  n_i * c binary32 values, row-major (vector by vector)
//! ```
//!
//! An optional sidecar `<file>.labels.json` maps class ids to text labels.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::embedding::{ClassGroup, EmbeddingDataset, EmbeddingVector, Role};
use crate::error::{CbmError, Result};

pub const CBME_MAGIC: [u8; 4] = [0x43, 0x42, 0x4D, 0x45];
pub const CBME_VERSION: u32 = 1;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".labels.json");
    PathBuf::from(os)
}

/// Write a dataset in CBME format, plus a labels sidecar when any class is
/// labeled. Vector values are narrowed to binary32.
pub fn save_dataset(dataset: &EmbeddingDataset, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&CBME_MAGIC)?;
    w.write_all(&CBME_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.dim() as u32).to_le_bytes())?;
    w.write_all(&[dataset.role().as_u8()])?;
    w.write_all(&(dataset.n_classes() as u32).to_le_bytes())?;
    for class in dataset.classes() {
        w.write_all(&class.class_id.to_le_bytes())?;
        w.write_all(&(class.vectors.len() as u32).to_le_bytes())?;
        for vector in &class.vectors {
            for &value in vector.values() {
                w.write_all(&(value as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;

    let labels: BTreeMap<u32, &str> = dataset
        .classes()
        .iter()
        .filter_map(|c| c.label.as_deref().map(|l| (c.class_id, l)))
        .collect();
    if !labels.is_empty() {
        let sidecar = File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(BufWriter::new(sidecar), &labels)
            .map_err(|e| CbmError::Io(std::io::Error::other(e)))?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            CbmError::TruncatedFile
        } else {
            CbmError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Read a CBME file back into a dataset, widening values to `f64` and
/// attaching labels from the sidecar when present.
pub fn load_dataset(path: &Path) -> Result<EmbeddingDataset> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if magic != CBME_MAGIC {
        return Err(CbmError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CBME_VERSION {
        return Err(CbmError::UnsupportedVersion(version));
    }
    let dim = read_u32(&mut r)? as usize;
    if dim == 0 {
        return Err(CbmError::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    let mut role_byte = [0u8; 1];
    read_exact(&mut r, &mut role_byte)?;
    let role = Role::from_u8(role_byte[0]).ok_or(CbmError::BadMagic)?;
    let n_classes = read_u32(&mut r)? as usize;

    let labels: BTreeMap<u32, String> = {
        let sidecar = sidecar_path(path);
        if sidecar.exists() {
            let file = File::open(sidecar)?;
            serde_json::from_reader(BufReader::new(file))
                .map_err(|e| CbmError::Io(std::io::Error::other(e)))?
        } else {
            BTreeMap::new()
        }
    };

    let mut classes = Vec::with_capacity(n_classes);
    let mut payload = Vec::new();
    for _ in 0..n_classes {
        let class_id = read_u32(&mut r)?;
        let count = read_u32(&mut r)? as usize;
        if count == 0 {
            return Err(CbmError::EmptyClass(class_id));
        }
        payload.resize(count * dim * 4, 0u8);
        read_exact(&mut r, &mut payload)?;
        let mut vectors = Vec::with_capacity(count);
        for chunk in payload.chunks_exact(dim * 4) {
            let values: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            vectors.push(EmbeddingVector::new(values)?);
        }
        classes.push(ClassGroup::new(
            class_id,
            labels.get(&class_id).cloned(),
            vectors,
        ));
    }
    EmbeddingDataset::new(dim, role, classes)
}
