use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use mincseg::convnet::{convolutionalize, LayerSpec, NetworkMode, NetworkSpec, WeightStore, RANDOM_SIGMA};
use mincseg::dataset::{
    annotation_counts, assign_splits, cluster_segment_counts, generate_patches, label_patches, select_eval_photos,
    write_patches, Annotations, Category, PatchOptions, SplitOptions, NUM_CATEGORIES,
};
use mincseg::densecrf::{crf_segment, unary_from_probmap, CrfParams, FilterBackend};
use mincseg::eval::{eval_clicks, eval_segments, grid_search_crf, CrfGrid, ValidationBundle, ValidationPhoto};
use mincseg::image::{extract_patch, read_image, resize_bilinear, rgb_to_lab, write_png, Image, PATCH_PIXELS};
use mincseg::labelmap::{write_sidecar, LabelMap};
use mincseg::multiscale::{predict_multiscale, ScalePlan};
use mincseg::probmap::ProbabilityMap;
use serde::Serialize;

use crate::args::*;
use crate::legend::render_legend;
use crate::palette::palette;

pub const MANIFEST_VERSION: u32 = 1;

/// Output file names written by `segment`.
pub mod outputs {
    pub const LABELS: &str = "labels.png";
    pub const INDEX: &str = "index.png";
    pub const SIDECAR: &str = "index.json";
    pub const PROBABILITIES: &str = "probabilities.pmap";
    pub const MANIFEST: &str = "manifest.json";
    pub const TIMINGS: &str = "timings.json";
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        ensure!(jobs > 0, "--jobs must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let ctx = RunContext {
        seed: cli.seed,
        data_dir: cli.data_dir,
    };
    match cli.command {
        Command::Segment(a) => segment(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::GridSearch(a) => grid_search(&ctx, a),
        Command::ExtractPatches(a) => extract_patches(&ctx, a),
        Command::SelectEval(a) => select_eval(&ctx, a),
        Command::Legend(a) => {
            write_png(&a.out, &render_legend(&palette())).with_context(|| format!("writing {}", a.out.display()))
        }
        Command::ToyNet(a) => toy_net(&ctx, a),
    }
}

struct RunContext {
    seed: u64,
    data_dir: Option<PathBuf>,
}

impl RunContext {
    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(root) if path.is_relative() && !path.exists() => root.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn annotations(&self, path: &Path) -> Result<Annotations> {
        let path = self.resolve(path);
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        Annotations::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Loads a network and converts it for dense prediction. Returns the
/// network's patch side too.
pub fn load_network(net_path: &Path, weights_path: &Path) -> Result<(NetworkSpec, WeightStore, usize)> {
    let text = fs::read_to_string(net_path).with_context(|| format!("reading {}", net_path.display()))?;
    let net = NetworkSpec::from_json(&text).with_context(|| format!("parsing {}", net_path.display()))?;
    let file = File::open(weights_path).with_context(|| format!("opening {}", weights_path.display()))?;
    let weights = WeightStore::read_binary(BufReader::new(file))
        .with_context(|| format!("reading {}", weights_path.display()))?;
    weights.check(&net)?;
    let patch = net.input_size;
    let (net, weights) = match net.mode {
        NetworkMode::Patch => convolutionalize(&net, &weights)?,
        NetworkMode::Sliding => (net, weights),
    };
    Ok((net, weights, patch))
}

fn label_names(labels: usize) -> Vec<String> {
    if labels == NUM_CATEGORIES {
        Category::names()
    } else {
        (0..labels).map(|i| format!("label {i}")).collect()
    }
}

struct Predictor {
    net: NetworkSpec,
    weights: WeightStore,
    plan: ScalePlan,
    half_stride: bool,
}

impl Predictor {
    fn new(ctx: &RunContext, args: &NetArgs) -> Result<Self> {
        let (Some(net), Some(weights)) = (&args.net, &args.weights) else {
            bail!("--net and --weights are required");
        };
        let (net, weights, patch) = load_network(&ctx.resolve(net), &ctx.resolve(weights))?;
        let plan = ScalePlan::for_patch(args.scale, patch)?
            .with_count(args.scales)?
            .with_fusion_dim(args.fusion_dim)?;
        Ok(Predictor {
            net,
            weights,
            plan,
            half_stride: args.half_stride,
        })
    }

    fn predict(&self, image: &Image) -> Result<ProbabilityMap> {
        Ok(predict_multiscale(&self.net, &self.weights, image, &self.plan, self.half_stride)?)
    }
}

/// CRF inputs at the fusion resolution.
fn crf_inputs(
    image: &Image,
    fused: &ProbabilityMap,
    fusion_dim: usize,
) -> Result<(Image, mincseg::densecrf::UnaryPotentials)> {
    let (fw, fh) = mincseg::image::scaled_dims(image.width(), image.height(), fusion_dim);
    let lab = rgb_to_lab(&resize_bilinear(image, fw, fh)?)?;
    let unary = unary_from_probmap(fused, fw, fh)?;
    Ok((lab, unary))
}

#[derive(Serialize)]
struct SegmentManifest<'a> {
    version: u32,
    command: &'static str,
    seed: u64,
    inputs: BTreeMap<&'static str, String>,
    image_size: [usize; 2],
    network: NetworkSummary,
    plan: &'a ScalePlan,
    half_stride: bool,
    output_size: [usize; 2],
    crf: CrfParams,
    backend: FilterBackend,
    labels: Vec<String>,
    label_pixels: Vec<usize>,
    outputs: Vec<&'static str>,
}

#[derive(Serialize)]
struct NetworkSummary {
    input_size: usize,
    num_labels: usize,
    receptive_field: usize,
    total_stride: usize,
}

fn segment(ctx: &RunContext, a: SegmentArgs) -> Result<()> {
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let params = a.crf.params();
    params.validate()?;
    let image_path = ctx.resolve(&a.image);
    let image = read_image(&image_path).with_context(|| format!("reading {}", image_path.display()))?;
    let predictor = Predictor::new(ctx, &a.net)?;
    timings.insert("load_seconds", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let fused = predictor.predict(&image)?;
    timings.insert("predict_seconds", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (lab, unary) = crf_inputs(&image, &fused, a.net.fusion_dim)?;
    let backend: FilterBackend = a.crf.backend.into();
    let (_, labels) = crf_segment(&lab, &unary, &params, backend)?;
    timings.insert("crf_seconds", t.elapsed().as_secs_f64());

    let t = Instant::now();
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let out = |name: &str| a.out_dir.join(name);
    let names = label_names(predictor.net.num_labels);
    write_png(&out(outputs::LABELS), &labels.render(&palette())?)?;
    labels.write_png(&out(outputs::INDEX))?;
    write_sidecar(&out(outputs::SIDECAR), &names)?;
    {
        let mut w = BufWriter::new(File::create(out(outputs::PROBABILITIES))?);
        fused.write_binary(&mut w)?;
        w.flush()?;
    }

    // read back what was written
    ensure!(LabelMap::read_png(&out(outputs::INDEX))? == labels, "index map did not round-trip");
    let reread = ProbabilityMap::read_binary(BufReader::new(File::open(out(outputs::PROBABILITIES))?))?;
    ensure!(reread == fused, "probability map did not round-trip");

    let mut label_pixels = vec![0usize; names.len()];
    for &l in labels.labels() {
        label_pixels[l as usize] += 1;
    }
    let geom = predictor.net.geometry()?;
    let manifest = SegmentManifest {
        version: MANIFEST_VERSION,
        command: "segment",
        seed: ctx.seed,
        inputs: BTreeMap::from([
            ("image", a.image.display().to_string()),
            ("net", a.net.net.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("weights", a.net.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        ]),
        image_size: [image.width(), image.height()],
        network: NetworkSummary {
            input_size: predictor.net.input_size,
            num_labels: predictor.net.num_labels,
            receptive_field: geom.receptive_field,
            total_stride: geom.total_stride,
        },
        plan: &predictor.plan,
        half_stride: predictor.half_stride,
        output_size: [labels.width(), labels.height()],
        crf: params,
        backend,
        labels: names,
        label_pixels,
        outputs: vec![
            outputs::LABELS,
            outputs::INDEX,
            outputs::SIDECAR,
            outputs::PROBABILITIES,
            outputs::MANIFEST,
        ],
    };
    write_json(&out(outputs::MANIFEST), &manifest)?;
    timings.insert("write_seconds", t.elapsed().as_secs_f64());
    write_json(&out(outputs::TIMINGS), &timings)?;
    println!(
        "segmented {} into {}x{} labels -> {}",
        a.image.display(),
        labels.width(),
        labels.height(),
        a.out_dir.display()
    );
    Ok(())
}

fn find_first(dir: &Path, candidates: &[String]) -> Option<PathBuf> {
    candidates.iter().map(|c| dir.join(c)).find(|p| p.is_file())
}

fn load_label_maps(annotations: &Annotations, dir: &Path) -> Result<BTreeMap<String, LabelMap>> {
    let mut ids: Vec<&String> = annotations.photos.keys().collect();
    ids.extend(annotations.segments.iter().map(|s| &s.photo_id));
    ids.extend(annotations.clicks.iter().map(|c| &c.photo_id));
    ids.sort();
    ids.dedup();
    let mut maps = BTreeMap::new();
    for id in ids {
        let Some(path) = find_first(dir, &[format!("{id}.png"), format!("{id}/{}", outputs::INDEX)]) else {
            continue;
        };
        let mut map = LabelMap::read_png(&path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(p) = annotations.photos.get(id) {
            if (map.width(), map.height()) != (p.width, p.height) {
                map = map.resize_nearest(p.width, p.height)?;
            }
        }
        maps.insert(id.clone(), map);
    }
    Ok(maps)
}

fn write_report(dir: &Path, stem: &str, report: &mincseg::eval::EvalReport) -> Result<()> {
    fs::write(dir.join(format!("{stem}.json")), report.to_json()?)?;
    fs::write(dir.join(format!("{stem}_confusion.csv")), report.confusion_csv())?;
    println!(
        "{stem}: mean class accuracy {:.4}, total accuracy {:.4} over {} annotations",
        report.mean_class_accuracy, report.total_accuracy, report.evaluated
    );
    Ok(())
}

fn evaluate(ctx: &RunContext, a: EvaluateArgs) -> Result<()> {
    let annotations = ctx.annotations(&a.annotations)?;
    let maps = load_label_maps(&annotations, &ctx.resolve(&a.predictions))?;
    fs::create_dir_all(&a.out_dir)?;
    ensure!(
        !annotations.segments.is_empty() || !annotations.clicks.is_empty(),
        "no clicks or segments to evaluate"
    );
    if !annotations.segments.is_empty() {
        write_report(&a.out_dir, "segments", &eval_segments(&maps, &annotations.segments)?)?;
    }
    if !annotations.clicks.is_empty() {
        write_report(&a.out_dir, "clicks", &eval_clicks(&maps, &annotations.clicks)?)?;
    }
    Ok(())
}

fn load_photo(dir: &Path, id: &str) -> Result<Image> {
    let path = find_first(dir, &[format!("{id}.png"), format!("{id}.ppm")])
        .with_context(|| format!("no image for photo {id} in {}", dir.display()))?;
    Ok(read_image(&path).with_context(|| format!("reading {}", path.display()))?)
}

fn grid_search(ctx: &RunContext, a: GridSearchArgs) -> Result<()> {
    let annotations = ctx.annotations(&a.annotations)?;
    ensure!(!annotations.photos.is_empty(), "annotation file lists no photos");
    let images = ctx.resolve(&a.images);
    let predictor = match &a.pmaps {
        Some(_) => None,
        None => Some(Predictor::new(ctx, &a.net)?),
    };
    let mut bundle = ValidationBundle::default();
    let mut scale = BTreeMap::new();
    for (id, info) in &annotations.photos {
        let image = load_photo(&images, id)?;
        ensure!(
            (image.width(), image.height()) == (info.width, info.height),
            "photo {id} is {}x{}, annotations say {}x{}",
            image.width(),
            image.height(),
            info.width,
            info.height
        );
        let fused = match (&a.pmaps, &predictor) {
            (Some(dir), _) => {
                let dir = ctx.resolve(dir);
                let path = find_first(&dir, &[format!("{id}.pmap"), format!("{id}/{}", outputs::PROBABILITIES)])
                    .with_context(|| format!("no probability map for photo {id}"))?;
                ProbabilityMap::read_binary(BufReader::new(File::open(&path)?))
                    .with_context(|| format!("reading {}", path.display()))?
            }
            (None, Some(p)) => p.predict(&image)?,
            (None, None) => unreachable!("predictor exists without pmaps"),
        };
        let (lab, unary) = crf_inputs(&image, &fused, a.net.fusion_dim)?;
        scale.insert(
            id.clone(),
            (lab.width() as f64 / info.width as f64, lab.height() as f64 / info.height as f64),
        );
        bundle.photos.push(ValidationPhoto {
            photo_id: id.clone(),
            lab,
            unary,
        });
    }
    // annotations move to the CRF grid
    for s in &annotations.segments {
        if let Some(&(sx, sy)) = scale.get(&s.photo_id) {
            let mut s = s.clone();
            s.vertices.iter_mut().for_each(|v| *v = [v[0] * sx, v[1] * sy]);
            bundle.segments.push(s);
        }
    }
    for c in &annotations.clicks {
        if let Some(&(sx, sy)) = scale.get(&c.photo_id) {
            let mut c = c.clone();
            (c.x, c.y) = (c.x * sx, c.y * sy);
            bundle.clicks.push(c);
        }
    }

    let grid = match &a.grid {
        Some(path) => {
            let text = fs::read_to_string(ctx.resolve(path))?;
            serde_json::from_str::<CrfGrid>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => CrfGrid {
            iterations: a.iters,
            ..CrfGrid::default()
        },
    };
    let candidates = grid.candidates();
    let result = grid_search_crf(&bundle, &candidates, a.objective.into(), a.backend.into())?;
    fs::create_dir_all(&a.out_dir)?;
    write_json(&a.out_dir.join("best_params.json"), &result.best)?;
    write_json(&a.out_dir.join("grid.json"), &result.candidates)?;
    write_report(&a.out_dir, "report", &result.report)?;
    println!(
        "best of {}: theta_p {} theta_l {} theta_ab {} w_p {}",
        candidates.len(),
        result.best.theta_p,
        result.best.theta_l,
        result.best.theta_ab,
        result.best.w_p
    );
    Ok(())
}

#[derive(Serialize)]
struct ExtractSummary {
    patches: usize,
    skipped: usize,
    clusters: usize,
    split_patches: BTreeMap<String, usize>,
    flagged_categories: Vec<Category>,
}

fn extract_patches(ctx: &RunContext, a: ExtractArgs) -> Result<()> {
    let annotations = ctx.annotations(&a.annotations)?;
    let options = PatchOptions {
        patch_scale: a.scale,
        min_separation: a.min_separation,
    };
    let mut gen = generate_patches(
        &annotations.segments,
        &annotations.clicks,
        &annotations.image_dims(),
        options,
        ctx.seed,
    )?;
    let split_opts = SplitOptions {
        ratios: [a.ratios[0], a.ratios[1], a.ratios[2]],
        min_test_segments: a.min_test,
    };
    let assignment = assign_splits(&cluster_segment_counts(&annotations), split_opts, ctx.seed)?;
    label_patches(&mut gen.patches, &annotations.clusters(), &assignment)?;

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    write_patches(&mut w, &gen.patches)?;
    w.flush()?;

    if let (Some(images), Some(patch_dir)) = (&a.images, &a.patch_dir) {
        let images = ctx.resolve(images);
        fs::create_dir_all(patch_dir)?;
        let mut cache: Option<(String, Image)> = None;
        for (i, p) in gen.patches.iter().enumerate() {
            if cache.as_ref().is_none_or(|(id, _)| *id != p.photo_id) {
                cache = Some((p.photo_id.clone(), load_photo(&images, &p.photo_id)?));
            }
            let (_, img) = cache.as_ref().expect("just loaded");
            let crop = extract_patch(img, &p.geometry, PATCH_PIXELS)?;
            write_png(&patch_dir.join(format!("{i:06}_{}.png", p.photo_id)), &crop)?;
        }
    }

    let mut split_patches = BTreeMap::new();
    for p in &gen.patches {
        let key = serde_json::to_value(p.split)?.as_str().unwrap_or("none").to_string();
        *split_patches.entry(key).or_insert(0) += 1;
    }
    let summary = ExtractSummary {
        patches: gen.patches.len(),
        skipped: gen.skipped,
        clusters: assignment.clusters.len(),
        split_patches,
        flagged_categories: assignment.flagged,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn select_eval(ctx: &RunContext, a: SelectArgs) -> Result<()> {
    let annotations = ctx.annotations(&a.annotations)?;
    for id in select_eval_photos(&annotation_counts(&annotations), a.k)? {
        println!("{id}");
    }
    Ok(())
}

/// Small patch network used by `toy-net`: stride 8, 32-pixel patches.
pub fn toy_network(labels: usize) -> Result<NetworkSpec> {
    Ok(NetworkSpec::new(
        NetworkMode::Patch,
        32,
        3,
        labels,
        vec![
            LayerSpec::conv(16, 5, 2, 0),
            LayerSpec::relu(),
            LayerSpec::max_pool(2, 2),
            LayerSpec::conv(32, 3, 2, 0),
            LayerSpec::relu(),
            LayerSpec::fully_connected(labels),
            LayerSpec::softmax(),
        ],
    )?)
}

fn toy_net(ctx: &RunContext, a: ToyNetArgs) -> Result<()> {
    let net = toy_network(a.labels)?;
    let weights = WeightStore::random(&net, ctx.seed, RANDOM_SIGMA)?;
    fs::create_dir_all(&a.out_dir)?;
    fs::write(a.out_dir.join("net.json"), net.to_json())?;
    let mut w = BufWriter::new(File::create(a.out_dir.join("weights.bin"))?);
    weights.write_binary(&mut w)?;
    w.flush()?;
    println!("wrote {} parameters to {}", weights.param_count(), a.out_dir.display());
    Ok(())
}
