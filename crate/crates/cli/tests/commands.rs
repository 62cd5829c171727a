use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mincseg::dataset::{read_patches, Category};
use mincseg::densecrf::unary_from_probmap;
use mincseg::image::{read_image, write_png, ColorSpace, Image};
use mincseg::labelmap::LabelMap;
use mincseg::probmap::ProbabilityMap;
use mincseg_cli::legend::swatch_color;
use mincseg_cli::palette::palette;
use serde_json::Value;

fn mincseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mincseg"))
        .args(args)
        .env_remove("MINCSEG_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mincseg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn two_tone(w: usize, h: usize) -> Image {
    let data = (0..w * h)
        .flat_map(|i| if i % w < w / 2 { [200.0, 40.0, 30.0] } else { [30.0, 60.0, 210.0] })
        .collect();
    Image::new(w, h, 3, ColorSpace::SrgbU8, data).unwrap()
}

/// Toy network plus a segmentation of `img` at a small fusion size.
fn segment(dir: &Path, img: &Image, extra: &[&str]) -> PathBuf {
    let net = dir.join("net");
    if !net.join("net.json").exists() {
        ok(&["toy-net", "--out-dir", p(&net)]);
    }
    let image = dir.join("scene.png");
    write_png(&image, img).unwrap();
    let out = dir.join("out");
    let (spec, weights) = (net.join("net.json"), net.join("weights.bin"));
    let mut args = vec![
        "segment",
        "--image",
        p(&image),
        "--net",
        p(&spec),
        "--weights",
        p(&weights),
        "--fusion-dim",
        "40",
        "--out-dir",
        p(&out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn legend_lists_every_category() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("legend.png");
    ok(&["legend", "--out", p(&path)]);
    let img = read_image(&path).unwrap();
    let colors = palette();
    assert_eq!(colors.len(), 23);
    for (row, color) in colors.iter().enumerate() {
        assert_eq!(swatch_color(&img, row), *color, "row {row}");
    }
    assert_eq!(swatch_color(&img, Category::Other.id()), [128, 128, 128]);
}

#[test]
fn segment_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = segment(dir.path(), &two_tone(60, 45), &[]);
    let index = LabelMap::read_png(&out.join("index.png")).unwrap();
    assert_eq!((index.width(), index.height()), (53, 40));
    let rendered = read_image(&out.join("labels.png")).unwrap();
    assert_eq!(rendered, index.render(&palette()).unwrap());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["output_size"], serde_json::json!([53, 40]));
    assert_eq!(manifest["labels"].as_array().unwrap().len(), 23);
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(out.join("index.json")).unwrap()).unwrap();
    assert_eq!(sidecar["labels"][Category::PolishedStone.id()], "polished stone");
}

#[test]
fn constant_image_gets_one_label() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::filled(50, 40, ColorSpace::SrgbU8, &[120.0, 90.0, 60.0]).unwrap();
    let out = segment(dir.path(), &img, &[]);
    let index = LabelMap::read_png(&out.join("index.png")).unwrap();
    assert_eq!(index.connected_components(), 1);
}

#[test]
fn zero_pairwise_weight_is_unary_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let out = segment(dir.path(), &two_tone(64, 48), &["--wp", "0"]);
    let index = LabelMap::read_png(&out.join("index.png")).unwrap();
    let pmap = ProbabilityMap::read_binary(BufReader::new(File::open(out.join("probabilities.pmap")).unwrap())).unwrap();
    let unary = unary_from_probmap(&pmap, index.width(), index.height()).unwrap();
    assert_eq!(unary.argmin_labels().unwrap(), index);
}

#[test]
fn extract_patches_from_clicks() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(
        &ann,
        r#"{"version":1,"kind":"photo","photo_id":"p1","width":400,"height":300,"cluster":"c1"}
{"version":1,"kind":"click","photo_id":"p1","category":"wood","x":200,"y":150}
{"version":1,"kind":"click","photo_id":"p1","category":"sky","x":100.5,"y":80}
{"version":1,"kind":"click","photo_id":"p1","category":"water","x":300,"y":220}
"#,
    )
    .unwrap();
    let out = dir.path().join("patches.jsonl");
    let summary: Value = serde_json::from_str(ok(&["extract-patches", "--annotations", p(&ann), "--out", p(&out)]).trim()).unwrap();
    assert_eq!(summary["patches"], 3);
    let patches = read_patches(BufReader::new(File::open(&out).unwrap())).unwrap();
    assert_eq!(patches.len(), 3);
    assert!(patches.iter().all(|r| r.split == patches[0].split && r.split.is_some()));
}

const ANNOTATIONS: &str = r#"{"version":1,"kind":"photo","photo_id":"p1","width":40,"height":30}
{"version":1,"kind":"segment","photo_id":"p1","category":"wood","vertices":[[1,1],[19,1],[19,29],[1,29]]}
{"version":1,"kind":"segment","photo_id":"p1","category":"sky","vertices":[[21,1],[39,1],[39,29],[21,29]]}
{"version":1,"kind":"click","photo_id":"p1","category":"wood","x":5,"y":5}
{"version":1,"kind":"click","photo_id":"p1","category":"sky","x":30,"y":20}
"#;

#[test]
fn perfect_predictions_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(&ann, ANNOTATIONS).unwrap();
    let preds = dir.path().join("preds");
    std::fs::create_dir_all(&preds).unwrap();
    let (wood, sky) = (Category::Wood.id() as u8, Category::Sky.id() as u8);
    let labels = (0..40 * 30).map(|i| if i % 40 < 20 { wood } else { sky }).collect();
    LabelMap::new(40, 30, labels).unwrap().write_png(&preds.join("p1.png")).unwrap();
    let out = dir.path().join("eval");
    ok(&["evaluate", "--annotations", p(&ann), "--predictions", p(&preds), "--out-dir", p(&out)]);
    for stem in ["segments", "clicks"] {
        let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("{stem}.json"))).unwrap()).unwrap();
        assert_eq!(report["mean_class_accuracy"], 1.0, "{stem}");
        assert_eq!(report["total_accuracy"], 1.0, "{stem}");
    }
}

#[test]
fn single_candidate_grid_returns_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = segment(dir.path(), &two_tone(40, 30), &[]);
    let images = dir.path().join("images");
    let pmaps = dir.path().join("pmaps");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&pmaps).unwrap();
    std::fs::copy(dir.path().join("scene.png"), images.join("p1.png")).unwrap();
    std::fs::copy(out.join("probabilities.pmap"), pmaps.join("p1.pmap")).unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(&ann, ANNOTATIONS).unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"theta_p":[0.2],"theta_l":[20],"theta_ab":[3],"w_p":[4],"iterations":5}"#).unwrap();
    let gs = dir.path().join("gs");
    ok(&[
        "grid-search",
        "--annotations",
        p(&ann),
        "--images",
        p(&images),
        "--pmaps",
        p(&pmaps),
        "--grid",
        p(&grid),
        "--fusion-dim",
        "30",
        "--out-dir",
        p(&gs),
    ]);
    let best: Value = serde_json::from_str(&std::fs::read_to_string(gs.join("best_params.json")).unwrap()).unwrap();
    assert_eq!(best["theta_p"], 0.2);
    assert_eq!(best["theta_l"], 20.0);
    assert_eq!(best["theta_ab"], 3.0);
    assert_eq!(best["w_p"], 4.0);
    assert_eq!(best["iterations"], 5);
    assert!(gs.join("report_confusion.csv").is_file());
}

#[test]
fn schema_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("bad.jsonl");
    std::fs::write(
        &ann,
        "{\"version\":1,\"kind\":\"photo\",\"photo_id\":\"p1\",\"width\":40,\"height\":30}\n\
         {\"version\":1,\"kind\":\"click\",\"photo_id\":\"p1\",\"category\":\"granite\",\"x\":1,\"y\":1}\n",
    )
    .unwrap();
    let out = mincseg(&["select-eval", "--annotations", p(&ann), "--k", "1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn select_eval_prints_ids() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(&ann, ANNOTATIONS).unwrap();
    assert_eq!(ok(&["select-eval", "--annotations", p(&ann), "--k", "1"]), "p1\n");
    assert!(!mincseg(&["select-eval", "--annotations", p(&ann), "--k", "2"]).status.success());
}
