//! Named-section binary container.
//!
//! Index files and kernel weight files share this layout. Everything is
//! little-endian:
//!
//! ```text
//! magic      8 bytes  "HIRESSEC"
//! version    u32      (currently 1)
//! n_sections u32
//! per section:
//!   name_len u32, name bytes (UTF-8)
//!   dtype    u8       (0 = f32, 1 = u32, 2 = u64, 3 = raw bytes)
//!   ndim     u32, dims ndim x u64
//!   offset   u64      (absolute file offset of the payload)
//!   byte_len u64
//! payload blobs (in section-table order, contiguous)
//! checksum   u64      FNV-1a over every preceding byte
//! ```
//!
//! Readers verify magic, version, section-table consistency, and the trailing
//! checksum before returning any data.

use crate::error::{DataError, Error, Result};
use crate::hash::Fnv1a64;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const SECTION_MAGIC: &[u8; 8] = b"HIRESSEC";
pub const SECTION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    U32 = 1,
    U64 = 2,
    Bytes = 3,
}

impl DType {
    fn from_u8(v: u8) -> Option<DType> {
        match v {
            0 => Some(DType::F32),
            1 => Some(DType::U32),
            2 => Some(DType::U64),
            3 => Some(DType::Bytes),
            _ => None,
        }
    }

    fn elem_size(&self) -> usize {
        match self {
            DType::F32 | DType::U32 => 4,
            DType::U64 => 8,
            DType::Bytes => 1,
        }
    }
}

/// One named payload.
#[derive(Debug, Clone)]
pub struct Section {
    pub dtype: DType,
    pub dims: Vec<u64>,
    pub payload: Vec<u8>,
}

impl Section {
    pub fn f32(dims: Vec<u64>, values: &[f32]) -> Self {
        let mut payload = Vec::with_capacity(values.len() * 4);
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            dtype: DType::F32,
            dims,
            payload,
        }
    }

    pub fn u32(dims: Vec<u64>, values: &[u32]) -> Self {
        let mut payload = Vec::with_capacity(values.len() * 4);
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            dtype: DType::U32,
            dims,
            payload,
        }
    }

    pub fn u64(dims: Vec<u64>, values: &[u64]) -> Self {
        let mut payload = Vec::with_capacity(values.len() * 8);
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            dtype: DType::U64,
            dims,
            payload,
        }
    }

    pub fn bytes(payload: Vec<u8>) -> Self {
        let dims = vec![payload.len() as u64];
        Self {
            dtype: DType::Bytes,
            dims,
            payload,
        }
    }

    pub fn as_f32(&self) -> Result<Vec<f32>> {
        self.expect_dtype(DType::F32)?;
        Ok(self
            .payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn as_u32(&self) -> Result<Vec<u32>> {
        self.expect_dtype(DType::U32)?;
        Ok(self
            .payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn as_u64(&self) -> Result<Vec<u64>> {
        self.expect_dtype(DType::U64)?;
        Ok(self
            .payload
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_dtype(&self, want: DType) -> Result<()> {
        if self.dtype != want {
            return Err(Error::dimension(format!(
                "section holds {:?}, asked for {:?}",
                self.dtype, want
            )));
        }
        Ok(())
    }

    fn elem_count(&self) -> u64 {
        self.dims.iter().product()
    }
}

/// A container in memory: ordered map from section name to payload.
#[derive(Debug, Clone, Default)]
pub struct SectionFile {
    sections: BTreeMap<String, Section>,
}

impl SectionFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, section: Section) {
        self.sections.insert(name.into(), section);
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn require(&self, name: &str, path: &str) -> Result<&Section> {
        self.sections.get(name).ok_or_else(|| {
            DataError::Malformed {
                path: path.to_string(),
                line: 0,
                message: format!("missing section {name:?}"),
            }
            .into()
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(|s| s.as_str())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        // Assemble the header first so payload offsets are known.
        let mut header = Vec::new();
        header.extend_from_slice(SECTION_MAGIC);
        header.extend_from_slice(&SECTION_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());

        let mut table_len = 0usize;
        for (name, section) in &self.sections {
            table_len += 4 + name.len() + 1 + 4 + 8 * section.dims.len() + 8 + 8;
        }
        let mut offset = (header.len() + table_len) as u64;
        for (name, section) in &self.sections {
            header.extend_from_slice(&(name.len() as u32).to_le_bytes());
            header.extend_from_slice(name.as_bytes());
            header.push(section.dtype as u8);
            header.extend_from_slice(&(section.dims.len() as u32).to_le_bytes());
            for d in &section.dims {
                header.extend_from_slice(&d.to_le_bytes());
            }
            header.extend_from_slice(&offset.to_le_bytes());
            header.extend_from_slice(&(section.payload.len() as u64).to_le_bytes());
            offset += section.payload.len() as u64;
        }

        let mut checksum = Fnv1a64::new();
        checksum.update(&header);
        w.write_all(&header)?;
        for section in self.sections.values() {
            checksum.update(&section.payload);
            w.write_all(&section.payload)?;
        }
        w.write_all(&checksum.finish().to_le_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_to(&mut file)
    }

    pub fn read_from(mut r: impl Read, path: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let malformed = |message: String| -> Error {
            DataError::Malformed {
                path: path.to_string(),
                line: 0,
                message,
            }
            .into()
        };

        if bytes.len() < 8 + 4 + 4 + 8 {
            return Err(malformed("file too short".into()));
        }
        if &bytes[..8] != SECTION_MAGIC {
            return Err(DataError::BadMagic {
                path: path.to_string(),
                expected: String::from_utf8_lossy(SECTION_MAGIC).into_owned(),
            }
            .into());
        }

        // Trailing checksum covers everything before it.
        let body = &bytes[..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        let mut hasher = Fnv1a64::new();
        hasher.update(body);
        if hasher.finish() != stored {
            return Err(DataError::ChecksumMismatch {
                path: path.to_string(),
            }
            .into());
        }

        let mut pos = 8usize;
        let read_u32 = |pos: &mut usize| -> Result<u32> {
            if *pos + 4 > body.len() {
                return Err(malformed("truncated header".into()));
            }
            let v = u32::from_le_bytes(body[*pos..*pos + 4].try_into().unwrap());
            *pos += 4;
            Ok(v)
        };
        let read_u64 = |pos: &mut usize| -> Result<u64> {
            if *pos + 8 > body.len() {
                return Err(malformed("truncated header".into()));
            }
            let v = u64::from_le_bytes(body[*pos..*pos + 8].try_into().unwrap());
            *pos += 8;
            Ok(v)
        };

        let version = read_u32(&mut pos)?;
        if version != SECTION_VERSION {
            return Err(DataError::BadVersion {
                path: path.to_string(),
                found: version,
                supported: SECTION_VERSION,
            }
            .into());
        }
        let n_sections = read_u32(&mut pos)? as usize;

        let mut sections = BTreeMap::new();
        for _ in 0..n_sections {
            let name_len = read_u32(&mut pos)? as usize;
            if pos + name_len > body.len() {
                return Err(malformed("truncated section name".into()));
            }
            let name = std::str::from_utf8(&body[pos..pos + name_len])
                .map_err(|_| malformed("section name is not UTF-8".into()))?
                .to_string();
            pos += name_len;

            if pos >= body.len() {
                return Err(malformed("truncated section table".into()));
            }
            let dtype = DType::from_u8(body[pos])
                .ok_or_else(|| malformed(format!("unknown dtype {}", body[pos])))?;
            pos += 1;

            let ndim = read_u32(&mut pos)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u64(&mut pos)?);
            }
            let offset = read_u64(&mut pos)? as usize;
            let byte_len = read_u64(&mut pos)? as usize;

            if offset + byte_len > body.len() {
                return Err(malformed(format!(
                    "section {name:?} payload runs past end of file"
                )));
            }
            let section = Section {
                dtype,
                dims,
                payload: body[offset..offset + byte_len].to_vec(),
            };
            let expected = section.elem_count() * section.dtype.elem_size() as u64;
            if expected != byte_len as u64 {
                return Err(malformed(format!(
                    "section {name:?} declares {expected} bytes of elements but holds {byte_len}"
                )));
            }
            sections.insert(name, section);
        }

        Ok(Self { sections })
    }
}
