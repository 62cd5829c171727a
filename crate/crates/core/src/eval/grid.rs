use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eval_clicks, eval_segments, EvalReport};
use crate::dataset::{ClickLabel, SegmentPolygon};
use crate::densecrf::{crf_segment, CrfParams, FilterBackend, UnaryPotentials};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labelmap::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SegmentClassAcc,
    ClickClassAcc,
}

/// Cartesian grid of CRF parameters, enumerated with `theta_p` outermost
/// and `w_p` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfGrid {
    pub theta_p: Vec<f64>,
    pub theta_l: Vec<f64>,
    pub theta_ab: Vec<f64>,
    pub w_p: Vec<f64>,
    pub iterations: usize,
}

impl Default for CrfGrid {
    fn default() -> Self {
        CrfGrid {
            theta_p: vec![0.05, 0.1, 0.2],
            theta_l: vec![5.0, 10.0, 20.0],
            theta_ab: vec![3.0, 5.0, 10.0],
            w_p: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            iterations: CrfParams::default().iterations,
        }
    }
}

impl CrfGrid {
    pub fn candidates(&self) -> Vec<CrfParams> {
        let mut out = Vec::new();
        for &theta_p in &self.theta_p {
            for &theta_l in &self.theta_l {
                for &theta_ab in &self.theta_ab {
                    for &w_p in &self.w_p {
                        out.push(CrfParams {
                            theta_p,
                            theta_l,
                            theta_ab,
                            w_p,
                            iterations: self.iterations,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One validation photo: its L*a*b* image and precomputed unaries.
#[derive(Debug, Clone)]
pub struct ValidationPhoto {
    pub photo_id: String,
    pub lab: Image,
    pub unary: UnaryPotentials,
}

/// Photos plus the annotations used to score them, in photo pixels.
#[derive(Debug, Clone, Default)]
pub struct ValidationBundle {
    pub photos: Vec<ValidationPhoto>,
    pub segments: Vec<SegmentPolygon>,
    pub clicks: Vec<ClickLabel>,
}

impl ValidationBundle {
    pub fn segment_all(&self, params: &CrfParams, backend: FilterBackend) -> Result<BTreeMap<String, LabelMap>> {
        self.photos
            .iter()
            .map(|p| {
                let (_, labels) = crf_segment(&p.lab, &p.unary, params, backend)?;
                Ok((p.photo_id.clone(), labels))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub params: CrfParams,
    pub segment_class_acc: Option<f64>,
    pub click_class_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub objective: Objective,
    pub best: CrfParams,
    pub report: EvalReport,
    pub candidates: Vec<GridCandidate>,
}

/// Runs the CRF with every candidate on every photo and keeps the one
/// with the highest objective; ties go to the earliest candidate.
pub fn grid_search_crf(
    bundle: &ValidationBundle,
    candidates: &[CrfParams],
    objective: Objective,
    backend: FilterBackend,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    if bundle.photos.is_empty() {
        return Err(Error::invalid("no validation photos"));
    }
    let has_objective = match objective {
        Objective::SegmentClassAcc => !bundle.segments.is_empty(),
        Objective::ClickClassAcc => !bundle.clicks.is_empty(),
    };
    if !has_objective {
        return Err(Error::invalid(format!("no annotations for objective {objective:?}")));
    }
    for p in candidates {
        p.validate()?;
    }

    let scored = candidates
        .par_iter()
        .map(|params| {
            let maps = bundle.segment_all(params, backend)?;
            let seg = if bundle.segments.is_empty() {
                None
            } else {
                Some(eval_segments(&maps, &bundle.segments)?)
            };
            let click = if bundle.clicks.is_empty() {
                None
            } else {
                Some(eval_clicks(&maps, &bundle.clicks)?)
            };
            Ok((seg, click))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(usize, f64)> = None;
    let mut table = Vec::with_capacity(candidates.len());
    for (i, (seg, click)) in scored.iter().enumerate() {
        let seg_acc = seg.as_ref().map(|r| r.mean_class_accuracy);
        let click_acc = click.as_ref().map(|r| r.mean_class_accuracy);
        let score = match objective {
            Objective::SegmentClassAcc => seg_acc,
            Objective::ClickClassAcc => click_acc,
        }
        .expect("objective annotations present");
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
        table.push(GridCandidate {
            params: candidates[i],
            segment_class_acc: seg_acc,
            click_class_acc: click_acc,
        });
    }
    let (idx, _) = best.expect("grid is non-empty");
    let (seg, click) = scored.into_iter().nth(idx).expect("index in range");
    let report = match objective {
        Objective::SegmentClassAcc => seg,
        Objective::ClickClassAcc => click,
    }
    .expect("objective annotations present");
    Ok(GridSearchResult {
        objective,
        best: candidates[idx],
        report,
        candidates: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Category;
    use crate::image::ColorSpace;

    #[test]
    fn default_grid_order() {
        let c = CrfGrid::default().candidates();
        assert_eq!(c.len(), 135);
        assert_eq!((c[0].theta_p, c[0].w_p), (0.05, 0.0));
        assert_eq!(c[1].w_p, 1.0);
        assert_eq!(c[134].theta_p, 0.2);
    }

    /// 5×5 flat image whose unary prefers label 0 everywhere except one
    /// weakly mislabeled pixel; smoothing repairs it.
    fn noisy_bundle() -> ValidationBundle {
        let (w, h, l) = (5, 5, 2);
        let lab = Image::filled(w, h, ColorSpace::LabF32, &[50.0, 0.0, 0.0]).unwrap();
        let mut u = Vec::new();
        for i in 0..w * h {
            u.extend(if i == 12 { [0.6, 0.5] } else { [0.1, 2.0] });
        }
        ValidationBundle {
            photos: vec![ValidationPhoto {
                photo_id: "p".into(),
                lab,
                unary: UnaryPotentials::new(w, h, l, u).unwrap(),
            }],
            segments: vec![SegmentPolygon {
                photo_id: "p".into(),
                category: Category::Brick,
                vertices: vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0], [0.0, 5.0]],
            }],
            clicks: vec![ClickLabel {
                photo_id: "p".into(),
                category: Category::Brick,
                x: 2.5,
                y: 2.5,
            }],
        }
    }

    #[test]
    fn smoothing_candidate_wins() {
        let bundle = noisy_bundle();
        let base = CrfParams {
            w_p: 0.0,
            theta_p: 0.5,
            ..Default::default()
        };
        let smooth = CrfParams { w_p: 1.0, ..base };
        let r = grid_search_crf(&bundle, &[base, smooth], Objective::SegmentClassAcc, FilterBackend::Exact).unwrap();
        assert_eq!(r.best, smooth);
        assert_eq!(r.report.mean_class_accuracy, 1.0);
        assert!((r.candidates[0].segment_class_acc.unwrap() - 24.0 / 25.0).abs() < 1e-12);
        assert_eq!(r.candidates[0].click_class_acc, Some(0.0));

        let c = grid_search_crf(&bundle, &[smooth, base], Objective::ClickClassAcc, FilterBackend::Exact).unwrap();
        assert_eq!(c.best, smooth);
    }

    #[test]
    fn ties_and_errors() {
        let bundle = noisy_bundle();
        let a = CrfParams { w_p: 1.0, theta_p: 0.5, ..Default::default() };
        let b = CrfParams { w_p: 2.0, ..a };
        let r = grid_search_crf(&bundle, &[a, b], Objective::SegmentClassAcc, FilterBackend::Exact).unwrap();
        assert_eq!(r.best, a);
        assert!(grid_search_crf(&bundle, &[], Objective::SegmentClassAcc, FilterBackend::Exact).is_err());
        let no_clicks = ValidationBundle { clicks: vec![], ..bundle };
        assert!(grid_search_crf(&no_clicks, &[a], Objective::ClickClassAcc, FilterBackend::Exact).is_err());
    }
}
