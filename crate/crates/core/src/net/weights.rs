//! Portable weight container.
//!
//! ```text
//! OGSW 1\n
//! arch <sha256 of the section names and shapes, hex>\n
//! sections <n>\n
//! <name> <d0>x<d1>x... <byte offset> <byte length> <sha256 of payload, hex>\n   (n lines)
//! end\n
//! <payload: concatenated little-endian f32 arrays>
//! ```
//!
//! Sections are listed in lexicographic name order and their payloads are
//! laid out in the same order, so offsets are cumulative from the first byte
//! after `end\n`.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &str = "OGSW 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightContainer {
    sections: BTreeMap<String, Tensor>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn payload_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Hash identifying an architecture by its section names and shapes.
pub fn architecture_hash<'a>(sections: impl IntoIterator<Item = (&'a str, &'a [usize])>) -> String {
    let mut sorted: Vec<(&str, &[usize])> = sections.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut h = Sha256::new();
    for (name, shape) in sorted {
        h.update(name.as_bytes());
        h.update(b":");
        h.update(shape_string(shape).as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

fn shape_string(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

impl WeightContainer {
    pub fn new() -> Self {
        WeightContainer::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "section {name}: shape/data mismatch"
        );
        self.sections.insert(name.to_string(), Tensor { shape, data });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::invalid(format!("weight section {name:?} is missing")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    /// SHA-256 of a section's little-endian payload, hex encoded.
    pub fn section_hash(&self, name: &str) -> Result<String> {
        let t = self.get(name)?;
        Ok(hex(&Sha256::digest(payload_bytes(&t.data))))
    }

    pub fn arch_hash(&self) -> String {
        architecture_hash(self.sections.iter().map(|(n, t)| (n.as_str(), t.shape.as_slice())))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("{MAGIC}\narch {}\nsections {}\n", self.arch_hash(), self.sections.len());
        let mut payload = Vec::new();
        for (name, t) in &self.sections {
            let bytes = payload_bytes(&t.data);
            header.push_str(&format!(
                "{name} {} {} {} {}\n",
                shape_string(&t.shape),
                payload.len(),
                bytes.len(),
                hex(&Sha256::digest(&bytes))
            ));
            payload.extend_from_slice(&bytes);
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let Some(nl) = bytes[pos..].iter().position(|b| *b == b'\n') else {
                return Err(perr(lines.len() + 1, "unterminated manifest".into()));
            };
            let line = std::str::from_utf8(&bytes[pos..pos + nl])
                .map_err(|_| perr(lines.len() + 1, "manifest is not UTF-8".into()))?
                .to_string();
            pos += nl + 1;
            let done = line == "end";
            lines.push(line);
            if done {
                break;
            }
        }
        let payload = &bytes[pos..];
        if lines.first().map(String::as_str) != Some(MAGIC) {
            return Err(perr(1, format!("expected {MAGIC:?} header")));
        }
        let arch = lines
            .get(1)
            .and_then(|l| l.strip_prefix("arch "))
            .ok_or_else(|| perr(2, "expected 'arch <hash>'".into()))?
            .to_string();
        let count: usize = lines
            .get(2)
            .and_then(|l| l.strip_prefix("sections "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(3, "expected 'sections <n>'".into()))?;
        if lines.len() != count + 4 {
            return Err(perr(lines.len(), format!("expected {count} section lines")));
        }
        let mut sections = BTreeMap::new();
        for (i, line) in lines[3..3 + count].iter().enumerate() {
            let lineno = i + 4;
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 5 {
                return Err(perr(
                    lineno,
                    "expected '<name> <shape> <offset> <length> <hash>'".into(),
                ));
            }
            let shape: Vec<usize> = if fields[1].is_empty() {
                Vec::new()
            } else {
                fields[1]
                    .split('x')
                    .map(|d| d.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| perr(lineno, format!("bad shape {:?}", fields[1])))?
            };
            let offset: usize = fields[2].parse().map_err(|_| perr(lineno, "bad offset".into()))?;
            let length: usize = fields[3].parse().map_err(|_| perr(lineno, "bad length".into()))?;
            if length != shape.iter().product::<usize>() * 4 {
                return Err(perr(lineno, "length does not match shape".into()));
            }
            let end = offset
                .checked_add(length)
                .filter(|e| *e <= payload.len())
                .ok_or_else(|| perr(lineno, "section extends past end of file".into()))?;
            let bytes = &payload[offset..end];
            if hex(&Sha256::digest(bytes)) != fields[4] {
                return Err(perr(lineno, format!("payload hash mismatch for section {}", fields[0])));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            sections.insert(fields[0].to_string(), Tensor { shape, data });
        }
        let container = WeightContainer { sections };
        if container.arch_hash() != arch {
            return Err(perr(2, "architecture hash does not match the listed sections".into()));
        }
        Ok(container)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        WeightContainer::from_bytes(&bytes, path)
    }
}
