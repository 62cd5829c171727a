//! Annotation records and their line-delimited JSON encoding.
//!
//! Every line is one object with a `version` and a `kind`:
//!
//! ```text
//! {"version":1,"kind":"photo","photo_id":"p1","width":640,"height":480,"cluster":"c3"}
//! {"version":1,"kind":"click","photo_id":"p1","category":"wood","x":120.5,"y":88.0}
//! {"version":1,"kind":"segment","photo_id":"p1","category":"polished_stone","vertices":[[10,10],[90,12],[50,70]]}
//! {"version":1,"kind":"patch","photo_id":"p1","center_x":0.19,"center_y":0.18,"scale":0.233,"category":"wood","source":"click","split":"train"}
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::category::Category;
use crate::error::{Error, Result};
use crate::image::PatchGeometry;

pub const ANNOTATION_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoInfo {
    pub photo_id: String,
    pub width: usize,
    pub height: usize,
    /// Near-duplicate cluster; photos without one form their own cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
}

impl PhotoInfo {
    pub fn cluster_id(&self) -> &str {
        self.cluster.as_deref().unwrap_or(&self.photo_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickLabel {
    pub photo_id: String,
    pub category: Category,
    pub x: f64,
    pub y: f64,
}

impl ClickLabel {
    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        (0.0..width as f64).contains(&self.x) && (0.0..height as f64).contains(&self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPolygon {
    pub photo_id: String,
    pub category: Category,
    pub vertices: Vec<[f64; 2]>,
}

impl SegmentPolygon {
    /// At least three vertices, non-zero area, no two non-adjacent edges
    /// touching.
    pub fn validate(&self) -> Result<()> {
        let v = &self.vertices;
        if v.len() < 3 {
            return Err(Error::invalid(format!("polygon has {} vertices", v.len())));
        }
        if v.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite polygon vertex"));
        }
        if self.area() <= 0.0 {
            return Err(Error::invalid("polygon has zero area"));
        }
        let n = v.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_touch(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                    return Err(Error::invalid(format!("polygon edges {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        twice.abs() / 2.0
    }

    /// Even-odd rule.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0] {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    pub fn bounding_box(&self) -> [f64; 4] {
        let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in &self.vertices {
            bb[0] = bb[0].min(p[0]);
            bb[1] = bb[1].min(p[1]);
            bb[2] = bb[2].max(p[0]);
            bb[3] = bb[3].max(p[1]);
        }
        bb
    }

    pub fn in_bounds(&self, width: usize, height: usize) -> bool {
        self.vertices
            .iter()
            .all(|p| (0.0..=width as f64).contains(&p[0]) && (0.0..=height as f64).contains(&p[1]))
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_touch(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSource {
    Segment,
    Click,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validate,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validate, Split::Test];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub photo_id: String,
    #[serde(flatten)]
    pub geometry: PatchGeometry,
    pub category: Category,
    pub source: PatchSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Photo(PhotoInfo),
    Click(ClickLabel),
    Segment(SegmentPolygon),
    Patch(PatchRecord),
}

#[derive(Serialize, Deserialize)]
struct Line {
    version: u32,
    #[serde(flatten)]
    record: Record,
}

/// Parses every record, checking version and per-record invariants. Errors
/// carry the 1-based line number.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let schema = |msg: String| Error::Schema { line: i + 1, msg };
        let parsed: Line = serde_json::from_str(trimmed).map_err(|e| schema(e.to_string()))?;
        if parsed.version != ANNOTATION_VERSION {
            return Err(schema(format!(
                "unsupported version {} (expected {ANNOTATION_VERSION})",
                parsed.version
            )));
        }
        match &parsed.record {
            Record::Photo(p) if p.width == 0 || p.height == 0 => {
                return Err(schema(format!("photo {} has zero size", p.photo_id)))
            }
            Record::Click(c) if !(c.x.is_finite() && c.y.is_finite()) => {
                return Err(schema("non-finite click coordinates".into()))
            }
            Record::Segment(s) => s.validate().map_err(|e| schema(e.to_string()))?,
            Record::Patch(p) => p.geometry.validate().map_err(|e| schema(e.to_string()))?,
            _ => {}
        }
        out.push(parsed.record);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut writer: W, records: &[Record]) -> Result<()> {
    for record in records {
        let line = Line {
            version: ANNOTATION_VERSION,
            record: record.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Photos, clicks and segments of one corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub photos: BTreeMap<String, PhotoInfo>,
    pub clicks: Vec<ClickLabel>,
    pub segments: Vec<SegmentPolygon>,
}

impl Annotations {
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let mut a = Annotations::default();
        for r in records {
            match r {
                Record::Photo(p) => {
                    if let Some(prev) = a.photos.insert(p.photo_id.clone(), p) {
                        return Err(Error::invalid(format!("photo {} listed twice", prev.photo_id)));
                    }
                }
                Record::Click(c) => a.clicks.push(c),
                Record::Segment(s) => a.segments.push(s),
                Record::Patch(_) => return Err(Error::invalid("patch record in an annotation file")),
            }
        }
        Ok(a)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        Self::from_records(read_records(reader)?)
    }

    pub fn to_records(&self) -> Vec<Record> {
        let photos = self.photos.values().cloned().map(Record::Photo);
        let segments = self.segments.iter().cloned().map(Record::Segment);
        let clicks = self.clicks.iter().cloned().map(Record::Click);
        photos.chain(segments).chain(clicks).collect()
    }

    pub fn image_dims(&self) -> BTreeMap<String, (usize, usize)> {
        self.photos
            .iter()
            .map(|(id, p)| (id.clone(), (p.width, p.height)))
            .collect()
    }

    pub fn clusters(&self) -> BTreeMap<String, String> {
        self.photos
            .iter()
            .map(|(id, p)| (id.clone(), p.cluster_id().to_string()))
            .collect()
    }
}

pub fn read_patches<R: BufRead>(reader: R) -> Result<Vec<PatchRecord>> {
    read_records(reader)?
        .into_iter()
        .map(|r| match r {
            Record::Patch(p) => Ok(p),
            other => Err(Error::invalid(format!("expected patch records, found {other:?}"))),
        })
        .collect()
}

pub fn write_patches<W: Write>(writer: W, patches: &[PatchRecord]) -> Result<()> {
    let records: Vec<Record> = patches.iter().cloned().map(Record::Patch).collect();
    write_records(writer, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> SegmentPolygon {
        SegmentPolygon {
            photo_id: "p".into(),
            category: Category::Wood,
            vertices: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
        }
    }

    #[test]
    fn polygon_geometry() {
        let sq = square();
        sq.validate().unwrap();
        assert_eq!(sq.area(), 100.0);
        assert!(sq.contains(5.0, 5.0));
        assert!(!sq.contains(11.0, 5.0));
        assert!(!sq.contains(5.0, -0.1));

        let bowtie = SegmentPolygon {
            vertices: vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]],
            ..sq.clone()
        };
        assert!(bowtie.validate().is_err());
        let line = SegmentPolygon {
            vertices: vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]],
            ..sq.clone()
        };
        assert!(line.validate().is_err());
        let two = SegmentPolygon {
            vertices: vec![[0.0, 0.0], [1.0, 1.0]],
            ..sq
        };
        assert!(two.validate().is_err());
    }

    #[test]
    fn concave_polygon_contains() {
        // an L shape
        let l = SegmentPolygon {
            photo_id: "p".into(),
            category: Category::Tile,
            vertices: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [1.0, 1.0], [1.0, 4.0], [0.0, 4.0]],
        };
        l.validate().unwrap();
        assert!(l.contains(0.5, 3.0));
        assert!(l.contains(3.0, 0.5));
        assert!(!l.contains(3.0, 3.0));
        assert_eq!(l.area(), 7.0);
    }

    #[test]
    fn jsonl_round_trip() {
        let text = r#"
# corpus
{"version":1,"kind":"photo","photo_id":"a","width":64,"height":48,"cluster":"c1"}
{"version":1,"kind":"photo","photo_id":"b","width":32,"height":32}
{"version":1,"kind":"click","photo_id":"a","category":"sky","x":3.5,"y":4}
{"version":1,"kind":"segment","photo_id":"b","category":"polished_stone","vertices":[[1,1],[20,1],[10,20]]}
"#;
        let a = Annotations::read(text.as_bytes()).unwrap();
        assert_eq!(a.photos.len(), 2);
        assert_eq!(a.clusters()["b"], "b");
        assert_eq!(a.clicks[0].category, Category::Sky);
        assert_eq!(a.segments[0].category, Category::PolishedStone);

        let mut buf = Vec::new();
        write_records(&mut buf, &a.to_records()).unwrap();
        assert_eq!(Annotations::read(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn schema_errors_name_the_line() {
        let bad_version = "{\"version\":1,\"kind\":\"photo\",\"photo_id\":\"a\",\"width\":1,\"height\":1}\n{\"version\":2,\"kind\":\"photo\",\"photo_id\":\"b\",\"width\":1,\"height\":1}";
        match read_records(bad_version.as_bytes()) {
            Err(Error::Schema { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("version"));
            }
            other => panic!("{other:?}"),
        }
        let bad_cat = "\n{\"version\":1,\"kind\":\"click\",\"photo_id\":\"a\",\"category\":\"granite\",\"x\":1,\"y\":1}";
        assert!(matches!(read_records(bad_cat.as_bytes()), Err(Error::Schema { line: 2, .. })));
        let bowtie = "{\"version\":1,\"kind\":\"segment\",\"photo_id\":\"a\",\"category\":\"wood\",\"vertices\":[[0,0],[10,10],[10,0],[0,10]]}";
        assert!(matches!(read_records(bowtie.as_bytes()), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn patch_records_round_trip() {
        let p = PatchRecord {
            photo_id: "a".into(),
            geometry: PatchGeometry::new(0.25, 0.5, 0.233).unwrap(),
            category: Category::Hair,
            source: PatchSource::Click,
            split: Some(Split::Validate),
        };
        let mut buf = Vec::new();
        write_patches(&mut buf, std::slice::from_ref(&p)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains("\"kind\":\"patch\"") && line.contains("\"center_x\":0.25"), "{line}");
        assert_eq!(read_patches(buf.as_slice()).unwrap(), vec![p]);
    }
}
