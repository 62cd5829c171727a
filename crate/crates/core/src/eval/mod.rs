//! Accuracy accounting for clicks and segments, ensembling, and CRF
//! parameter search.

mod grid;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, ClickLabel, SegmentPolygon, NUM_CATEGORIES};
use crate::densecrf::PROB_FLOOR;
use crate::error::{Error, Result};
use crate::labelmap::LabelMap;
use crate::probmap::ProbabilityMap;

pub use grid::{grid_search_crf, CrfGrid, GridCandidate, GridSearchResult, Objective, ValidationBundle, ValidationPhoto};

pub const REPORT_VERSION: u32 = 1;

/// Square matrix of (possibly fractional) counts; rows are true labels,
/// columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        ConfusionMatrix {
            size,
            counts: vec![0.0; size * size],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut m = ConfusionMatrix::new(size);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(Error::invalid("confusion matrix must be square"));
            }
            for (p, &v) in row.iter().enumerate() {
                m.add(t, p, v)?;
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, truth: usize, predicted: usize) -> f64 {
        self.counts[truth * self.size + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize, weight: f64) -> Result<()> {
        if truth >= self.size || predicted >= self.size {
            return Err(Error::invalid(format!(
                "label pair ({truth}, {predicted}) outside a {0}x{0} confusion matrix",
                self.size
            )));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("confusion weight {weight} must be >= 0")));
        }
        self.counts[truth * self.size + predicted] += weight;
        Ok(())
    }

    pub fn row_sum(&self, truth: usize) -> f64 {
        self.counts[truth * self.size..(truth + 1) * self.size].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    /// Diagonal over row sum for every row with examples.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        (0..self.size)
            .map(|c| {
                let n = self.row_sum(c);
                (n > 0.0).then(|| self.get(c, c) / n)
            })
            .collect()
    }

    /// One header row of predicted names, then one row per true label.
    pub fn to_csv(&self, names: &[String]) -> String {
        let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("truth\\predicted");
        for p in 0..self.size {
            out.push(',');
            out.push_str(&name(p));
        }
        out.push('\n');
        for t in 0..self.size {
            out.push_str(&name(t));
            for p in 0..self.size {
                write!(out, ",{}", self.get(t, p)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Mean class accuracy over rows with examples, and trace over total.
pub fn summarize(confusion: &ConfusionMatrix) -> Result<(f64, f64)> {
    let total = confusion.total();
    if total <= 0.0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let accs: Vec<f64> = confusion.per_class().into_iter().flatten().collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Ok((mean, confusion.trace() / total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub mean_class_accuracy: f64,
    pub total_accuracy: f64,
    /// `None` for categories without examples.
    pub per_category: Vec<Option<f64>>,
    /// Annotations that contributed.
    pub evaluated: usize,
    /// Annotations skipped as empty after rasterization.
    pub skipped: usize,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix, evaluated: usize, skipped: usize) -> Result<Self> {
        let (mean_class_accuracy, total_accuracy) = summarize(&confusion)?;
        Ok(EvalReport {
            version: REPORT_VERSION,
            mean_class_accuracy,
            total_accuracy,
            per_category: confusion.per_class(),
            evaluated,
            skipped,
            confusion,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn confusion_csv(&self) -> String {
        self.confusion.to_csv(&Category::names())
    }
}

fn label_map_for<'a>(maps: &'a BTreeMap<String, LabelMap>, photo: &str) -> Result<&'a LabelMap> {
    maps.get(photo)
        .ok_or_else(|| Error::invalid(format!("no label map for photo {photo}")))
}

/// Every click adds one count at (its category, the label under it).
pub fn eval_clicks(labelmaps: &BTreeMap<String, LabelMap>, clicks: &[ClickLabel]) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(NUM_CATEGORIES);
    for click in clicks {
        let map = label_map_for(labelmaps, &click.photo_id)?;
        if !click.in_bounds(map.width(), map.height()) {
            return Err(Error::invalid(format!(
                "click ({}, {}) outside the {}x{} label map of {}",
                click.x,
                click.y,
                map.width(),
                map.height(),
                click.photo_id
            )));
        }
        let predicted = map.get(click.x as usize, click.y as usize);
        cm.add(click.category.id(), predicted as usize, 1.0)?;
    }
    EvalReport::from_confusion(cm, clicks.len(), 0)
}

/// Pixels whose centers fall inside the polygon (even-odd rule).
pub fn rasterize(polygon: &SegmentPolygon, width: usize, height: usize) -> Vec<(usize, usize)> {
    let [x0, y0, x1, y1] = polygon.bounding_box();
    let clampi = |v: f64, n: usize| (v.max(0.0) as usize).min(n);
    let (xa, xb) = (clampi(x0.floor(), width), clampi(x1.ceil(), width));
    let (ya, yb) = (clampi(y0.floor(), height), clampi(y1.ceil(), height));
    let mut out = Vec::new();
    for y in ya..yb {
        for x in xa..xb {
            if polygon.contains(x as f64 + 0.5, y as f64 + 0.5) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Each segment adds one unit spread over the labels predicted inside it,
/// so a category's accuracy is the mean per-segment pixel accuracy.
pub fn eval_segments(labelmaps: &BTreeMap<String, LabelMap>, segments: &[SegmentPolygon]) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(NUM_CATEGORIES);
    let (mut evaluated, mut skipped) = (0, 0);
    for seg in segments {
        let map = label_map_for(labelmaps, &seg.photo_id)?;
        let pixels = rasterize(seg, map.width(), map.height());
        if pixels.is_empty() {
            skipped += 1;
            continue;
        }
        let mut hist = [0usize; 256];
        for &(x, y) in &pixels {
            hist[map.get(x, y) as usize] += 1;
        }
        let n = pixels.len() as f64;
        for (label, &count) in hist.iter().enumerate().filter(|(_, c)| **c > 0) {
            cm.add(seg.category.id(), label, count as f64 / n)?;
        }
        evaluated += 1;
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} segments covering no pixel centers");
    }
    EvalReport::from_confusion(cm, evaluated, skipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Arithmetic,
    Geometric,
}

/// Per-cell arithmetic mean, or geometric mean with probabilities floored
/// at 1e-12, renormalized.
pub fn ensemble_combine(maps: &[ProbabilityMap], mode: EnsembleMode) -> Result<ProbabilityMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("nothing to combine"))?;
    if let Some(i) = maps.iter().position(|m| !m.same_grid(first)) {
        return Err(Error::invalid(format!("map {i} does not share the first map's grid")));
    }
    let n = maps.len() as f64;
    let mut out = first.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        *v = match mode {
            EnsembleMode::Arithmetic => maps.iter().map(|m| m.values()[i] as f64).sum::<f64>() / n,
            EnsembleMode::Geometric => {
                (maps.iter().map(|m| (m.values()[i] as f64).max(PROB_FLOOR).ln()).sum::<f64>() / n).exp()
            }
        } as f32;
    }
    out.renormalize();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_two_by_two() {
        let cm = ConfusionMatrix::from_rows(&[vec![8.0, 2.0], vec![5.0, 5.0]]).unwrap();
        let (mca, total) = summarize(&cm).unwrap();
        assert!((mca - 0.65).abs() < 1e-12);
        assert!((total - 0.65).abs() < 1e-12);
        assert!(summarize(&ConfusionMatrix::new(3)).is_err());
        let id = ConfusionMatrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 9.0]]).unwrap();
        assert_eq!(summarize(&id).unwrap(), (1.0, 1.0));
    }

    fn one_map(labels: Vec<u8>, w: usize, h: usize) -> BTreeMap<String, LabelMap> {
        BTreeMap::from([("p".to_string(), LabelMap::new(w, h, labels).unwrap())])
    }

    #[test]
    fn click_accounting() {
        let maps = one_map(vec![0, 0, 1, 1], 2, 2);
        let click = |cat: Category, x: f64, y: f64| ClickLabel {
            photo_id: "p".into(),
            category: cat,
            x,
            y,
        };
        // brick always right, carpet always wrong, in unequal numbers
        let clicks = vec![
            click(Category::Brick, 0.5, 0.2),
            click(Category::Brick, 1.9, 0.9),
            click(Category::Brick, 0.0, 0.0),
            click(Category::Carpet, 0.5, 0.5),
        ];
        let r = eval_clicks(&maps, &clicks).unwrap();
        assert_eq!(r.mean_class_accuracy, 0.5);
        assert_eq!(r.total_accuracy, 0.75);
        assert_eq!(r.per_category[2], None);

        let missing = ClickLabel {
            photo_id: "q".into(),
            ..clicks[0].clone()
        };
        let err = eval_clicks(&maps, &[missing]).unwrap_err();
        assert!(err.to_string().contains("photo q"));
        assert!(eval_clicks(&maps, &[click(Category::Brick, 2.0, 0.0)]).is_err());
    }

    #[test]
    fn segment_fractions() {
        // left half label 0, right half label 1
        let maps = one_map((0..16).map(|i| if i % 4 < 2 { 0 } else { 1 }).collect(), 4, 4);
        let seg = |cat: Category, v: Vec<[f64; 2]>| SegmentPolygon {
            photo_id: "p".into(),
            category: cat,
            vertices: v,
        };
        let full = seg(Category::Brick, vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]);
        let left = seg(Category::Brick, vec![[0.0, 0.0], [2.0, 0.0], [2.0, 4.0], [0.0, 4.0]]);
        let sliver = seg(Category::Brick, vec![[0.0, 0.0], [0.4, 0.0], [0.0, 0.4]]);
        let r = eval_segments(&maps, &[full.clone()]).unwrap();
        assert_eq!(r.per_category[0], Some(0.5));
        let r = eval_segments(&maps, &[left, full, sliver]).unwrap();
        assert_eq!(r.per_category[0], Some(0.75));
        assert_eq!((r.evaluated, r.skipped), (2, 1));
        assert_eq!(r.confusion.row_sum(0), 2.0);
    }

    #[test]
    fn ensemble_cases() {
        let mk = |v: Vec<f32>| ProbabilityMap::pixel_grid(1, 1, 2, v).unwrap();
        let a = ensemble_combine(&[mk(vec![0.2, 0.8]), mk(vec![0.6, 0.4])], EnsembleMode::Arithmetic).unwrap();
        assert!((a.values()[0] - 0.4).abs() < 1e-6 && (a.values()[1] - 0.6).abs() < 1e-6);
        let g = ensemble_combine(&[mk(vec![0.9, 0.1]), mk(vec![0.1, 0.9])], EnsembleMode::Geometric).unwrap();
        assert!((g.values()[0] - 0.5).abs() < 1e-6);
        let bad = ProbabilityMap::pixel_grid(1, 1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        assert!(ensemble_combine(&[mk(vec![0.5, 0.5]), bad], EnsembleMode::Geometric).is_err());
        assert!(ensemble_combine(&[], EnsembleMode::Arithmetic).is_err());
    }

    #[test]
    fn csv_layout() {
        let cm = ConfusionMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.5]]).unwrap();
        let csv = cm.to_csv(&["a".into(), "b".into()]);
        assert_eq!(csv, "truth\\predicted,a,b\na,1,2\nb,0,0.5\n");
    }
}
