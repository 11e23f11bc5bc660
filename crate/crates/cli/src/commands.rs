use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use figsep::detector::{self, DetectorConfig, TrainSample};
use figsep::evaluation::{
    dataset_metrics, export_pr_curve, ApMethod, EvalConfig, EvalReport, FigureEval, ScoredBox,
};
use figsep::io::{self, FigureRecord, LabeledBox, RunManifest, Split};
use figsep::synthesis::{self, AssetBounds, SynthesisConfig, SynthesisMode};
use figsep::{BBox64, OverlapDenominator};

use crate::{AnchorsArgs, Denominator, DetectArgs, EvalArgs, Mode, RenderArgs, SynthArgs, TrainArgs};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `<path><suffix>` without touching the extension.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `report.json` -> `report.union.json`.
fn with_infix(path: &Path, infix: &str) -> PathBuf {
    match (path.file_stem(), path.extension()) {
        (Some(stem), Some(ext)) => path.with_file_name(format!(
            "{}.{infix}.{}",
            stem.to_string_lossy(),
            ext.to_string_lossy()
        )),
        _ => with_suffix(path, &format!(".{infix}")),
    }
}

fn image_root(corpus: &Path, images: Option<&PathBuf>) -> PathBuf {
    match images {
        Some(p) => p.clone(),
        None => corpus.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

fn load_checked_corpus(corpus: &Path, images: Option<&PathBuf>, split: Split) -> Result<(Vec<FigureRecord>, PathBuf)> {
    let root = image_root(corpus, images);
    let loaded = io::load_corpus(corpus, &root, split)
        .with_context(|| format!("loading corpus {}", corpus.display()))?;
    if loaded.skipped > 0 {
        log::warn!("{} record(s) with invalid boxes skipped", loaded.skipped);
    }
    Ok((loaded.records, root))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut config: SynthesisConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthesisConfig::default(),
    };
    config.mode = match args.mode {
        Mode::Grid => SynthesisMode::Grid,
        Mode::Random => SynthesisMode::RandomPaste,
    };
    config.seed = args.seed;
    if let Some(side) = args.long_side {
        config.canvas_long_side_px = side;
    }
    if let Some(p) = args.transpose_prob {
        config.transpose_prob = p;
    }
    config.validate()?;
    if args.pool_size == 0 {
        bail!("--pool-size must be positive");
    }
    let start = Instant::now();
    let pool = synthesis::procedural_pool(args.seed, args.pool_size, AssetBounds::default());
    let mut records = Vec::with_capacity(args.count as usize);
    let mut times = Vec::with_capacity(args.count as usize);
    for index in 0..args.count {
        let t = Instant::now();
        let fig = synthesis::synthesize_figure(&config, &pool, index)?;
        let rel = format!("images/{index:06}.png");
        io::save_png(&fig.raster, &args.out.join(&rel))?;
        records.push(FigureRecord {
            image_path: rel,
            width_px: fig.raster.width(),
            height_px: fig.raster.height(),
            boxes: fig.boxes.into_iter().map(LabeledBox::from).collect(),
            split: Split::Train,
        });
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let ann = args.out.join("annotations.jsonl");
    io::save_corpus(&records, &ann)?;
    let mut manifest = RunManifest::new("synth", Some(args.seed), serde_json::to_value(&config)?);
    manifest.corpus_digest = io::corpus_digest(&records, Some(&args.out))?;
    manifest.set_timing(&times);
    manifest.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    manifest.save(&args.out.join("manifest.json"))?;
    let boxes: usize = records.iter().map(|r| r.boxes.len()).sum();
    log::info!("wrote {} figures ({boxes} subfigures) to {}", records.len(), args.out.display());
    Ok(())
}

pub fn anchors(args: AnchorsArgs) -> Result<()> {
    let loaded = io::load_annotations(&args.corpus.corpus, Split::Train)?;
    let boxes: Vec<BBox64> = loaded.records.iter().flat_map(|r| r.bboxes()).collect();
    let anchors = detector::estimate_anchors(&boxes, args.k, args.seed)?;
    let text = serde_json::to_string(&anchors)?;
    match &args.out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    log::info!("{} anchors from {} boxes", anchors.len(), boxes.len());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let start = Instant::now();
    let mut config: DetectorConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => DetectorConfig::default(),
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let (records, root) = load_checked_corpus(&args.corpus.corpus, args.corpus.images.as_ref(), Split::Train)?;
    if config.anchors.is_empty() {
        let boxes: Vec<BBox64> = records.iter().flat_map(|r| r.bboxes()).collect();
        config.anchors = detector::estimate_anchors(&boxes, config.num_anchors, config.seed)?;
        log::info!("estimated anchors {:?}", config.anchors);
    }
    let mut dataset = Vec::with_capacity(records.len());
    for r in &records {
        dataset.push(TrainSample {
            image: io::load_rgb(&io::resolve_image(&root, &r.image_path))?,
            boxes: r.bboxes(),
        });
    }
    log::info!(
        "training on {} figures for {} epochs",
        dataset.len(),
        config.epochs
    );
    let outcome = detector::train::<f32>(&dataset, &config)?;
    detector::save_model(&outcome.model, &args.out)?;

    let csv_path = args.loss_csv.unwrap_or_else(|| with_suffix(&args.out, ".loss.csv"));
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "epoch,batch,loss,lr,resolution")?;
    for e in &outcome.history {
        writeln!(csv, "{},{},{},{},{}", e.epoch, e.batch, e.loss, e.lr, e.resolution)?;
    }
    csv.flush()?;

    let losses = outcome.epoch_mean_losses();
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        log::info!("epoch loss {first:.4} -> {last:.4}");
    }
    let mut manifest = RunManifest::new("train", Some(config.seed), serde_json::to_value(&config)?);
    manifest.corpus_digest = io::corpus_digest(&records, Some(&root))?;
    manifest.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    manifest.save(&with_suffix(&args.out, ".manifest.json"))?;
    Ok(())
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .map(|e| matches!(e.to_ascii_lowercase().to_str(), Some("png" | "jpg" | "jpeg")))
        .unwrap_or(false)
}

/// `(key, path)` pairs; directories expand to their images in name order.
fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|p| p.is_file() && is_image(p));
            files.sort();
            out.extend(files.into_iter().map(|p| (p.to_string_lossy().into_owned(), p)));
        } else if input.is_file() {
            out.push((input.to_string_lossy().into_owned(), input.clone()));
        } else {
            bail!("no such image or directory: {}", input.display());
        }
    }
    Ok(out)
}

pub fn detect(args: DetectArgs) -> Result<()> {
    let start = Instant::now();
    let mut model = detector::load_model::<f32>(&args.weights)
        .with_context(|| format!("loading weights {}", args.weights.display()))?;
    let cfg = model.config().clone();
    model.set_thresholds(
        args.conf_threshold.unwrap_or(cfg.conf_threshold),
        args.nms_threshold.unwrap_or(cfg.nms_iou_threshold),
    );
    let (inputs, digest_records) = match &args.corpus {
        Some(corpus) => {
            let (records, root) = load_checked_corpus(corpus, args.images.as_ref(), Split::Test)?;
            let inputs = records
                .iter()
                .map(|r| (r.image_path.clone(), io::resolve_image(&root, &r.image_path)))
                .collect();
            (inputs, Some((records, root)))
        }
        None => (collect_inputs(&args.inputs)?, None),
    };
    let mut records = Vec::with_capacity(inputs.len());
    let mut times = Vec::with_capacity(inputs.len());
    for (key, path) in &inputs {
        let img = io::load_rgb(path)?;
        let (dets, ms) = detector::detect(&model, &img)?;
        times.push(ms);
        records.push(FigureRecord {
            image_path: key.clone(),
            width_px: img.width(),
            height_px: img.height(),
            boxes: dets
                .iter()
                .filter_map(|d| {
                    d.bbox.cast::<f64>().map(|bbox| LabeledBox {
                        bbox,
                        confidence: Some(d.confidence as f64),
                    })
                })
                .collect(),
            split: Split::Test,
        });
    }
    io::save_corpus(&records, &args.out)?;
    let mut manifest = RunManifest::new("detect", Some(cfg.seed), serde_json::to_value(model.config())?);
    manifest.corpus_digest = match &digest_records {
        Some((recs, root)) => io::corpus_digest(recs, Some(root))?,
        None => io::corpus_digest(&records, None)?,
    };
    manifest.set_timing(&times);
    manifest.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    manifest.save(&with_suffix(&args.out, ".manifest.json"))?;
    eprintln!(
        "mean {:.2} ms/figure over {} figures",
        manifest.mean_ms_per_figure, manifest.figures_timed
    );
    Ok(())
}

fn evaluate(dets: &[FigureRecord], gts: &[FigureRecord], config: &EvalConfig) -> Result<EvalReport> {
    let mut by_key: HashMap<&str, &FigureRecord> = HashMap::new();
    for d in dets {
        if by_key.insert(&d.image_path, d).is_some() {
            bail!("duplicate detections for {}", d.image_path);
        }
    }
    let mut figures = Vec::with_capacity(gts.len());
    for g in gts {
        let detections = by_key
            .remove(g.image_path.as_str())
            .map(|d| {
                d.boxes
                    .iter()
                    .map(|b| ScoredBox {
                        bbox: b.bbox,
                        confidence: b.confidence.unwrap_or(1.0),
                    })
                    .collect()
            })
            .unwrap_or_default();
        figures.push(FigureEval {
            detections,
            ground_truth: g.bboxes(),
        });
    }
    if !by_key.is_empty() {
        log::warn!("{} detection record(s) without ground truth ignored", by_key.len());
    }
    Ok(dataset_metrics(&figures, config)?)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let dets = io::load_annotations(&args.detections, Split::Test)
        .with_context(|| format!("loading {}", args.detections.display()))?;
    let gts = io::load_annotations(&args.ground_truth, Split::Test)
        .with_context(|| format!("loading {}", args.ground_truth.display()))?;
    for (name, skipped) in [("detection", dets.skipped), ("ground-truth", gts.skipped)] {
        if skipped > 0 {
            log::warn!("{skipped} invalid {name} record(s) skipped");
        }
    }
    let base = EvalConfig {
        overlap_threshold: args.overlap_threshold,
        ap_method: if args.uninterpolated {
            ApMethod::Uninterpolated
        } else {
            ApMethod::AllPointInterpolated
        },
        ..EvalConfig::default()
    };
    let mut runs = Vec::new();
    if args.overlap_denominator != Denominator::Union {
        runs.push(("gt_area", OverlapDenominator::GtArea));
    }
    if args.overlap_denominator != Denominator::GtArea {
        runs.push(("union", OverlapDenominator::Union));
    }
    let both = runs.len() == 2;
    let mut stdout_reports = serde_json::Map::new();
    for (name, denominator) in runs {
        let config = EvalConfig {
            overlap_denominator: denominator,
            ..base
        };
        let report = evaluate(&dets.records, &gts.records, &config)?;
        log::info!(
            "{name}: accuracy {:.4} precision {:.4} recall {:.4} AP {:.4}",
            report.dataset_accuracy,
            report.precision,
            report.recall,
            report.average_precision
        );
        let secondary = both && denominator == OverlapDenominator::Union;
        let place = |p: &PathBuf| if secondary { with_infix(p, "union") } else { p.clone() };
        if let Some(p) = &args.pr_csv {
            export_pr_curve(&report, &place(p))?;
        }
        match &args.out {
            Some(p) => std::fs::write(place(p), report.to_json() + "\n")?,
            None => {
                stdout_reports.insert(name.into(), serde_json::to_value(report.summary())?);
            }
        }
    }
    if args.out.is_none() {
        let value = if both {
            serde_json::Value::Object(stdout_reports)
        } else {
            stdout_reports.into_iter().next().map(|(_, v)| v).unwrap_or_default()
        };
        println!("{}", serde_json::to_string_pretty(&value)?);
    }
    Ok(())
}

/// Record for `key`, or failing that the single record with the same file name.
fn find_record<'a>(records: &'a [FigureRecord], key: &str) -> Option<&'a FigureRecord> {
    if let Some(r) = records.iter().find(|r| r.image_path == key) {
        return Some(r);
    }
    let name = Path::new(key).file_name()?;
    let mut hits = records
        .iter()
        .filter(|r| Path::new(&r.image_path).file_name() == Some(name));
    match (hits.next(), hits.next()) {
        (Some(r), None) => Some(r),
        _ => None,
    }
}

pub fn render(args: RenderArgs) -> Result<()> {
    let img = io::load_rgb(&args.image)?;
    let key = args
        .key
        .clone()
        .unwrap_or_else(|| args.image.to_string_lossy().into_owned());
    let lookup = |file: &Option<PathBuf>| -> Result<Vec<LabeledBox>> {
        let Some(file) = file else {
            return Ok(Vec::new());
        };
        let loaded = io::load_annotations(file, Split::Test)?;
        match find_record(&loaded.records, &key) {
            Some(r) => Ok(r.boxes.clone()),
            None => bail!("no record for {key} in {}", file.display()),
        }
    };
    let dets = lookup(&args.detections)?;
    let gts: Vec<BBox64> = lookup(&args.ground_truth)?.iter().map(|b| b.bbox).collect();
    io::save_overlay(&img, &dets, &gts, &args.out)?;
    log::info!("{} detections, {} ground truth -> {}", dets.len(), gts.len(), args.out.display());
    Ok(())
}
