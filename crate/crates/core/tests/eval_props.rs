use std::collections::BTreeMap;

use mincseg::dataset::{Category, ClickLabel, SegmentPolygon, NUM_CATEGORIES};
use mincseg::eval::*;
use mincseg::labelmap::LabelMap;
use mincseg::probmap::ProbabilityMap;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_maps(rng: &mut ChaCha8Rng, photos: usize) -> BTreeMap<String, LabelMap> {
    (0..photos)
        .map(|i| {
            let (w, h) = (rng.random_range(5..40), rng.random_range(5..40));
            let labels = (0..w * h).map(|_| rng.random_range(0..6u8)).collect();
            (format!("p{i}"), LabelMap::new(w, h, labels).unwrap())
        })
        .collect()
}

#[test]
fn click_report_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let maps = random_maps(&mut rng, 4);
    let clicks: Vec<ClickLabel> = (0..100)
        .map(|_| {
            let id = format!("p{}", rng.random_range(0..4));
            let m = &maps[&id];
            ClickLabel {
                photo_id: id.clone(),
                category: Category::ALL[rng.random_range(0..6)],
                x: rng.random_range(0.0..m.width() as f64),
                y: rng.random_range(0.0..m.height() as f64),
            }
        })
        .collect();
    let report = eval_clicks(&maps, &clicks).unwrap();

    let mut hits = [0usize; NUM_CATEGORIES];
    let mut seen = [0usize; NUM_CATEGORIES];
    for c in &clicks {
        let m = &maps[&c.photo_id];
        let label = m.labels()[c.y.floor() as usize * m.width() + c.x.floor() as usize];
        seen[c.category.id()] += 1;
        hits[c.category.id()] += (label as usize == c.category.id()) as usize;
    }
    let per: Vec<f64> = (0..NUM_CATEGORIES)
        .filter(|&k| seen[k] > 0)
        .map(|k| hits[k] as f64 / seen[k] as f64)
        .collect();
    let mca = per.iter().sum::<f64>() / per.len() as f64;
    let total = hits.iter().sum::<usize>() as f64 / 100.0;
    assert!((report.mean_class_accuracy - mca).abs() < 1e-12);
    assert!((report.total_accuracy - total).abs() < 1e-12);
}

#[test]
fn segment_report_matches_pixel_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let maps = random_maps(&mut rng, 3);
    let mut segments = Vec::new();
    for _ in 0..30 {
        let id = format!("p{}", rng.random_range(0..3));
        let m = &maps[&id];
        let (w, h) = (m.width() as f64, m.height() as f64);
        let x0 = rng.random_range(0.0..w * 0.6);
        let y0 = rng.random_range(0.0..h * 0.6);
        let x1 = rng.random_range(x0 + 1.0..=w);
        let y1 = rng.random_range(y0 + 1.0..=h);
        let xm = rng.random_range(x0..x1);
        segments.push(SegmentPolygon {
            photo_id: id,
            category: Category::ALL[rng.random_range(0..6)],
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [xm, (y0 + y1) / 2.0], [x0, y1]],
        });
    }
    let report = eval_segments(&maps, &segments).unwrap();

    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); NUM_CATEGORIES];
    for s in &segments {
        let m = &maps[&s.photo_id];
        let (mut inside, mut right) = (0usize, 0usize);
        for y in 0..m.height() {
            for x in 0..m.width() {
                if s.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    inside += 1;
                    right += (m.get(x, y) as usize == s.category.id()) as usize;
                }
            }
        }
        if inside > 0 {
            acc[s.category.id()].push(right as f64 / inside as f64);
        }
    }
    for k in 0..NUM_CATEGORIES {
        match report.per_category[k] {
            Some(v) => {
                let mean = acc[k].iter().sum::<f64>() / acc[k].len() as f64;
                assert!((v - mean).abs() < 1e-12, "category {k}: {v} vs {mean}");
            }
            None => assert!(acc[k].is_empty()),
        }
    }
}

proptest! {
    #[test]
    fn total_accuracy_is_row_weighted_mean(rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 4)) {
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        prop_assume!(cm.total() > 0.0);
        let (_, total) = summarize(&cm).unwrap();
        let weighted: f64 = cm
            .per_class()
            .iter()
            .enumerate()
            .filter_map(|(k, a)| a.map(|a| a * cm.row_sum(k)))
            .sum::<f64>()
            / cm.total();
        prop_assert!((total - weighted).abs() < 1e-12);
    }

    #[test]
    fn ensembles_are_normalized_and_order_free(
        seed in any::<u64>(),
        n in 1usize..5,
        labels in 2usize..6,
        geometric in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.random_range(1..6), rng.random_range(1..6));
        let maps: Vec<ProbabilityMap> = (0..n)
            .map(|_| {
                let mut m = ProbabilityMap::pixel_grid(
                    w, h, labels,
                    (0..w * h * labels).map(|_| rng.random_range(0.0f32..1.0)).collect(),
                ).unwrap();
                m.renormalize();
                m
            })
            .collect();
        let mode = if geometric { EnsembleMode::Geometric } else { EnsembleMode::Arithmetic };
        let out = ensemble_combine(&maps, mode).unwrap();
        out.check_normalized().unwrap();
        let mut rev = maps.clone();
        rev.reverse();
        let back = ensemble_combine(&rev, mode).unwrap();
        for (a, b) in out.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
