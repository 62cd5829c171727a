//! Poisson-disk subsampling of segments and patch generation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::annotations::{ClickLabel, PatchRecord, PatchSource, SegmentPolygon};
use crate::error::{Error, Result};
use crate::image::PatchGeometry;

/// Minimum patch-center separation as a fraction of the smaller image side.
pub const MIN_SEPARATION: f64 = 0.091;
pub const DEFAULT_PATCH_SCALE: f64 = 0.233;
/// Failed candidates tolerated around each active point.
pub const REJECTION_BUDGET: usize = 30;
const SEED_DARTS: usize = 1000;

/// Bridson-style dart throwing inside `polygon`: every returned center lies
/// inside it and every pair is at least `r_fraction · min(W, H)` apart.
/// Degenerate polygons give no centers.
pub fn poisson_disk_sample(
    polygon: &SegmentPolygon,
    image_dims: (usize, usize),
    r_fraction: f64,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if !(r_fraction > 0.0 && r_fraction.is_finite()) {
        return Err(Error::invalid(format!("separation fraction {r_fraction} must be positive")));
    }
    if polygon.validate().is_err() {
        return Ok(Vec::new());
    }
    let r = r_fraction * image_dims.0.min(image_dims.1) as f64;
    if r <= 0.0 {
        return Err(Error::invalid("zero-sized image"));
    }
    let [x0, y0, x1, y1] = polygon.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let first = (0..SEED_DARTS)
        .map(|_| [rng.random_range(x0..=x1), rng.random_range(y0..=y1)])
        .find(|p| polygon.contains(p[0], p[1]))
        .or_else(|| {
            // very thin polygons: fall back to triangle-fan centroids
            let v = &polygon.vertices;
            (1..v.len() - 1)
                .map(|i| {
                    [
                        (v[0][0] + v[i][0] + v[i + 1][0]) / 3.0,
                        (v[0][1] + v[i][1] + v[i + 1][1]) / 3.0,
                    ]
                })
                .find(|p| polygon.contains(p[0], p[1]))
        });
    let Some(first) = first else {
        return Ok(Vec::new());
    };

    let cell = r / std::f64::consts::SQRT_2;
    let gw = ((x1 - x0) / cell).floor() as usize + 1;
    let gh = ((y1 - y0) / cell).floor() as usize + 1;
    let mut grid = vec![u32::MAX; gw * gh];
    let cell_of = |p: [f64; 2]| {
        let cx = (((p[0] - x0) / cell) as usize).min(gw - 1);
        let cy = (((p[1] - y0) / cell) as usize).min(gh - 1);
        (cx, cy)
    };

    let mut points = vec![first];
    let (cx, cy) = cell_of(first);
    grid[cy * gw + cx] = 0;
    let mut active = vec![0usize];
    let r2 = r * r;

    while !active.is_empty() {
        let slot = rng.random_range(0..active.len());
        let base = points[active[slot]];
        let mut placed = false;
        for _ in 0..REJECTION_BUDGET {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = r * (1.0 + rng.random::<f64>());
            let p = [base[0] + dist * angle.cos(), base[1] + dist * angle.sin()];
            if p[0] < x0 || p[0] > x1 || p[1] < y0 || p[1] > y1 || !polygon.contains(p[0], p[1]) {
                continue;
            }
            let (cx, cy) = cell_of(p);
            let near = (cy.saturating_sub(2)..(cy + 3).min(gh)).any(|yy| {
                (cx.saturating_sub(2)..(cx + 3).min(gw)).any(|xx| {
                    let q = grid[yy * gw + xx];
                    q != u32::MAX && {
                        let q = points[q as usize];
                        (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) < r2
                    }
                })
            });
            if near {
                continue;
            }
            grid[cy * gw + cx] = points.len() as u32;
            active.push(points.len());
            points.push(p);
            placed = true;
            break;
        }
        if !placed {
            active.swap_remove(slot);
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchOptions {
    pub patch_scale: f64,
    pub min_separation: f64,
}

impl Default for PatchOptions {
    fn default() -> Self {
        PatchOptions {
            patch_scale: DEFAULT_PATCH_SCALE,
            min_separation: MIN_SEPARATION,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchGeneration {
    pub patches: Vec<PatchRecord>,
    /// Annotations dropped for unknown photos, out-of-bounds coordinates or
    /// invalid polygons.
    pub skipped: usize,
}

fn segment_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 of (seed, index)
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Patch records for every segment (Poisson-disk centers) followed by
/// every click (one patch each), in input order.
pub fn generate_patches(
    segments: &[SegmentPolygon],
    clicks: &[ClickLabel],
    image_dims: &BTreeMap<String, (usize, usize)>,
    options: PatchOptions,
    seed: u64,
) -> Result<PatchGeneration> {
    PatchGeometry::new(0.5, 0.5, options.patch_scale)?;
    let mut out = PatchGeneration::default();
    let record = |photo: &str, dims: (usize, usize), p: [f64; 2], category, source| {
        let geometry = PatchGeometry {
            center_x: (p[0] / dims.0 as f64).clamp(0.0, 1.0),
            center_y: (p[1] / dims.1 as f64).clamp(0.0, 1.0),
            scale: options.patch_scale,
        };
        PatchRecord {
            photo_id: photo.to_string(),
            geometry,
            category,
            source,
            split: None,
        }
    };

    for (i, seg) in segments.iter().enumerate() {
        let Some(&dims) = image_dims.get(&seg.photo_id) else {
            out.skipped += 1;
            continue;
        };
        if !seg.in_bounds(dims.0, dims.1) || seg.validate().is_err() {
            out.skipped += 1;
            continue;
        }
        let centers = poisson_disk_sample(seg, dims, options.min_separation, segment_seed(seed, i))?;
        out.patches.extend(
            centers
                .into_iter()
                .map(|p| record(&seg.photo_id, dims, p, seg.category, PatchSource::Segment)),
        );
    }
    for click in clicks {
        match image_dims.get(&click.photo_id) {
            Some(&dims) if click.in_bounds(dims.0, dims.1) => out.patches.push(record(
                &click.photo_id,
                dims,
                [click.x, click.y],
                click.category,
                PatchSource::Click,
            )),
            _ => out.skipped += 1,
        }
    }
    if out.skipped > 0 {
        log::warn!("skipped {} annotations outside their photos", out.skipped);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Category;

    fn poly(vertices: Vec<[f64; 2]>) -> SegmentPolygon {
        SegmentPolygon {
            photo_id: "p".into(),
            category: Category::Brick,
            vertices,
        }
    }

    fn min_pair_distance(pts: &[[f64; 2]]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min(((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt());
            }
        }
        best
    }

    #[test]
    fn separation_follows_smaller_side() {
        let sq = poly(vec![[0.0, 0.0], [1000.0, 0.0], [1000.0, 800.0], [0.0, 800.0]]);
        let pts = poisson_disk_sample(&sq, (1000, 800), MIN_SEPARATION, 3).unwrap();
        assert!(min_pair_distance(&pts) >= 72.8);
        assert!(pts.len() > 50, "only {} centers", pts.len());
        assert!(pts.iter().all(|p| sq.contains(p[0], p[1])));
    }

    #[test]
    fn tiny_polygon_gives_one_center() {
        let tri = poly(vec![[10.0, 10.0], [15.0, 10.0], [12.0, 14.0]]);
        let pts = poisson_disk_sample(&tri, (640, 480), MIN_SEPARATION, 0).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(tri.contains(pts[0][0], pts[0][1]));
    }

    #[test]
    fn degenerate_polygon_is_empty() {
        let line = poly(vec![[0.0, 0.0], [5.0, 5.0], [10.0, 10.0]]);
        assert!(poisson_disk_sample(&line, (100, 100), 0.1, 0).unwrap().is_empty());
        assert!(poisson_disk_sample(&line, (100, 100), 0.0, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let sq = poly(vec![[0.0, 0.0], [300.0, 0.0], [300.0, 200.0], [0.0, 200.0]]);
        let a = poisson_disk_sample(&sq, (300, 200), 0.05, 11).unwrap();
        let b = poisson_disk_sample(&sq, (300, 200), 0.05, 11).unwrap();
        let c = poisson_disk_sample(&sq, (300, 200), 0.05, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn clicks_and_segments_become_patches() {
        let dims = BTreeMap::from([("p".to_string(), (200, 100))]);
        let click = ClickLabel {
            photo_id: "p".into(),
            category: Category::Sky,
            x: 50.0,
            y: 25.0,
        };
        let out = generate_patches(&[], std::slice::from_ref(&click), &dims, PatchOptions::default(), 0).unwrap();
        assert_eq!(out.patches.len(), 1);
        let g = out.patches[0].geometry;
        assert_eq!((g.center_x, g.center_y, g.scale), (0.25, 0.25, 0.233));
        assert_eq!(out.patches[0].source, PatchSource::Click);

        let none = generate_patches(&[], &[], &dims, PatchOptions::default(), 0).unwrap();
        assert!(none.patches.is_empty() && none.skipped == 0);

        let outside = ClickLabel { x: 200.0, ..click.clone() };
        let orphan = ClickLabel {
            photo_id: "q".into(),
            ..click
        };
        let seg = poly(vec![[0.0, 0.0], [300.0, 0.0], [0.0, 50.0]]);
        let out = generate_patches(&[seg], &[outside, orphan], &dims, PatchOptions::default(), 0).unwrap();
        assert!(out.patches.is_empty());
        assert_eq!(out.skipped, 3);

        let seg = poly(vec![[0.0, 0.0], [200.0, 0.0], [200.0, 100.0], [0.0, 100.0]]);
        let out = generate_patches(&[seg], &[], &dims, PatchOptions::default(), 5).unwrap();
        assert!(out.patches.len() > 10);
        assert!(out.patches.iter().all(|p| p.category == Category::Brick && p.source == PatchSource::Segment));
    }
}
