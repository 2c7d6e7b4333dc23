//! Dataset container and gt export.
//!
//! Dataset layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "XVDS"
//! version  u32      1
//! count    u64      number of studies
//! study*   study_id u64, width u32, height u32,
//!          view* (cc then mlo): pixels f64 * width * height (row-major),
//!                               n_boxes u32, box* (x1 y1 x2 y2 f64, faint u8)
//!          n_pairs u32, pair* (cc_index u32, mlo_index u32)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StudyPair, SyntheticImage, View, ViewData};
use crate::autograd::checkpoint::Reader;
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, write_atomic_str};
use crate::geometry::BBox;

pub const DATASET_MAGIC: &[u8; 4] = b"XVDS";
pub const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(studies: &[StudyPair]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(studies.len() as u64).to_le_bytes());
    for s in studies {
        out.extend_from_slice(&s.study_id.to_le_bytes());
        out.extend_from_slice(&(s.cc.image.width as u32).to_le_bytes());
        out.extend_from_slice(&(s.cc.image.height as u32).to_le_bytes());
        for v in [&s.cc, &s.mlo] {
            for p in &v.image.pixels {
                out.extend_from_slice(&p.to_le_bytes());
            }
            out.extend_from_slice(&(v.boxes.len() as u32).to_le_bytes());
            for (b, &f) in v.boxes.iter().zip(&v.faint) {
                for c in b.as_array() {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                out.push(f as u8);
            }
        }
        out.extend_from_slice(&(s.correspondence.len() as u32).to_le_bytes());
        for &(c, m) in &s.correspondence {
            out.extend_from_slice(&(c as u32).to_le_bytes());
            out.extend_from_slice(&(m as u32).to_le_bytes());
        }
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<StudyPair>> {
    let mut r = Reader::new(bytes, "dataset");
    r.expect_magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::parse("dataset", format!("unsupported version {version}")));
    }
    let count = r.u64()?;
    let mut studies = Vec::new();
    for _ in 0..count {
        let study_id = r.u64()?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let read_view = |r: &mut Reader| -> Result<ViewData> {
            let pixels = r.f64s(width * height)?;
            let n = r.u32()? as usize;
            let mut boxes = Vec::with_capacity(n.min(1024));
            let mut faint = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let c = r.f64s(4)?;
                let b = BBox::new(c[0], c[1], c[2], c[3]);
                b.validate()?;
                boxes.push(b);
                faint.push(match r.u8()? {
                    0 => false,
                    1 => true,
                    x => return Err(Error::parse("dataset", format!("bad faint flag {x}"))),
                });
            }
            Ok(ViewData {
                image: SyntheticImage {
                    width,
                    height,
                    pixels,
                },
                boxes,
                faint,
            })
        };
        let cc = read_view(&mut r)?;
        let mlo = read_view(&mut r)?;
        let n_pairs = r.u32()? as usize;
        let mut correspondence = Vec::with_capacity(n_pairs.min(1024));
        for _ in 0..n_pairs {
            let c = r.u32()? as usize;
            let m = r.u32()? as usize;
            if c >= cc.boxes.len() || m >= mlo.boxes.len() {
                return Err(Error::parse("dataset", format!("pair ({c}, {m}) out of range")));
            }
            correspondence.push((c, m));
        }
        studies.push(StudyPair {
            study_id,
            cc,
            mlo,
            correspondence,
        });
    }
    r.finish()?;
    Ok(studies)
}

pub fn write_dataset(studies: &[StudyPair], path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(studies))
}

pub fn read_dataset(path: &Path) -> Result<Vec<StudyPair>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// One line of the gt export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub study_id: u64,
    pub view: View,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Index into the study's correspondence list; `None` after masking.
    pub correspondence_id: Option<usize>,
}

pub fn gt_records(studies: &[StudyPair]) -> Vec<GtRecord> {
    let mut out = Vec::new();
    for s in studies {
        for view in View::BOTH {
            for (i, b) in s.view(view).boxes.iter().enumerate() {
                let correspondence_id = s.correspondence.iter().position(|&(c, m)| match view {
                    View::Cc => c == i,
                    View::Mlo => m == i,
                });
                out.push(GtRecord {
                    study_id: s.study_id,
                    view,
                    x1: b.x1,
                    y1: b.y1,
                    x2: b.x2,
                    y2: b.y2,
                    correspondence_id,
                });
            }
        }
    }
    out
}

pub fn write_gt_jsonl(studies: &[StudyPair], path: &Path) -> Result<()> {
    let mut text = String::new();
    for rec in gt_records(studies) {
        text.push_str(&serde_json::to_string(&rec).expect("gt record serializes"));
        text.push('\n');
    }
    write_atomic_str(path, &text)
}
