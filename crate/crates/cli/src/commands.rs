use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use brainsem::bitstream::{inspect, pack};
use brainsem::codec::{ArchScale, LayerCodec, LayerId, Reconstruction, Thumbnail};
use brainsem::data_io::{
    load_dataset, load_thumbnails, save_dataset, save_thumbnails, split_dataset, synthesize_dataset,
    synthesize_targets, BrainSignal, DatasetManifest, Split, SplitRatios, SyntheticSpec,
};
use brainsem::link::{simulate_batch, ChannelModel, DeliveryReport};
use brainsem::metrics::{
    caption_scores, evaluate_labels, fuse_prompt, load_caption_pairs, rate_accuracy_sweep, ssim, MetricReport,
    PromptSource, RatePoint,
};
use brainsem::pipeline::CodecStack;
use brainsem::retrieval::EmbeddingDatabase;
use brainsem::trainer::{train_layer, Checkpoint, Targets, TrainConfig, TrainingData};
use brainsem::{Error, Exec, Result};

use crate::{
    ArchChoice, CheckpointArgs, ClassifyArgs, Command, DecodeArgs, EncodeArgs, EvaluateArgs, InspectArgs, SimulateArgs,
    SplitArgs, SweepArgs, SynthArgs, TrainArgs,
};

const EXEC: Exec = Exec::Parallel;

pub(crate) fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Classify(a) => classify(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Inspect(a) => inspect_cmd(a),
    }
}

fn usage(message: impl Into<String>) -> Error {
    Error::Config(message.into())
}

fn layer(n: u8) -> LayerId {
    LayerId::from_number(n).expect("clap restricts layers to 1..=3")
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse().map_err(|e: brainsem::data_io::DataError| usage(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn load_codec(path: &Path, expected: LayerId) -> Result<LayerCodec> {
    let codec = Checkpoint::load(path)?.codec;
    if codec.layer() != expected {
        return Err(usage(format!(
            "{} holds a layer {} codec, expected layer {expected}",
            path.display(),
            codec.layer()
        )));
    }
    Ok(codec)
}

/// Loads the checkpoints for layers `1..=max_layer`.
fn load_stack(args: &CheckpointArgs, max_layer: LayerId) -> Result<CodecStack> {
    let need = |path: &Option<PathBuf>, flag: &str, l: LayerId| -> Result<LayerCodec> {
        let p = path.as_ref().ok_or_else(|| usage(format!("layer {} needs --{flag}", max_layer.number())))?;
        load_codec(p, l)
    };
    let mut stack = CodecStack::new(need(&args.ocl_checkpoint, "ocl-checkpoint", LayerId::Label)?)?;
    if max_layer >= LayerId::Caption {
        stack = stack.with_caption(need(&args.icl_checkpoint, "icl-checkpoint", LayerId::Caption)?)?;
    }
    if max_layer >= LayerId::Thumbnail {
        stack = stack.with_thumbnail(need(&args.scl_checkpoint, "scl-checkpoint", LayerId::Thumbnail)?)?;
    }
    Ok(stack)
}

/// Highest layer whose checkpoint (and all below it) was given.
fn available_layers(args: &CheckpointArgs) -> LayerId {
    match (&args.icl_checkpoint, &args.scl_checkpoint) {
        (Some(_), Some(_)) => LayerId::Thumbnail,
        (Some(_), None) => LayerId::Caption,
        _ => LayerId::Label,
    }
}

fn container_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "eidc"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: a.classes,
        records_per_class: a.per_class,
        channels: a.channels,
        samples: a.samples,
        sample_rate_hz: a.sample_rate_hz,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let (signals, manifest) = synthesize_dataset(&spec)?;
    let manifest_path = a.manifest.unwrap_or_else(|| a.out.with_extension("json"));
    save_dataset(&a.out, &manifest_path, &signals, &manifest)?;
    if a.label_db.is_some() || a.caption_db.is_some() || a.thumbnails.is_some() {
        let targets = synthesize_targets(&signals, &manifest, a.label_dim, a.caption_dim, a.seed)?;
        if let Some(p) = &a.label_db {
            targets.labels.save(p)?;
        }
        if let Some(p) = &a.caption_db {
            targets.captions.save(p)?;
        }
        if let Some(p) = &a.thumbnails {
            save_thumbnails(p, &targets.thumbnails)?;
        }
    }
    println!("records={} manifest={}", signals.len(), manifest_path.display());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let (signals, mut manifest) = load_dataset(&a.data.dataset, &a.data.manifest)?;
    let ratios = SplitRatios { train: a.train, val: a.val, test: a.test };
    ratios.validate().map_err(|e| usage(e.to_string()))?;
    let classes: Vec<u32> = signals.iter().map(|s| s.class_id).collect();
    manifest.split = split_dataset(&classes, ratios, a.seed)?;
    manifest.save(a.out.as_deref().unwrap_or(&a.data.manifest))?;
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("{}={}", format!("{s:?}").to_lowercase(), manifest.indices(s).len());
    }
    Ok(())
}

fn base_config(
    layer: LayerId,
    config: Option<&Path>,
    arch: Option<ArchChoice>,
    signals: &[BrainSignal],
) -> Result<TrainConfig> {
    let mut cfg = match config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::new(layer),
    };
    if cfg.layer != layer {
        return Err(usage(format!("config is for layer {}, not {layer}", cfg.layer)));
    }
    let first = signals.first().ok_or_else(|| usage("dataset is empty"))?;
    match arch.or(config.is_none().then_some(ArchChoice::Compact)) {
        Some(ArchChoice::Compact) => cfg.arch = ArchScale::compact(first.channels(), first.samples()),
        Some(ArchChoice::Paper) => cfg.arch = ArchScale::paper(),
        None => {}
    }
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let target_layer = layer(a.layer);
    if target_layer == LayerId::Caption && a.ocl_checkpoint.is_none() {
        return Err(usage("layer 2 needs --ocl-checkpoint"));
    }
    let (signals, manifest) = load_dataset(&a.data.dataset, &a.data.manifest)?;
    let mut cfg = base_config(target_layer, a.config.as_deref(), a.arch, &signals)?;
    cfg.seed = a.seed;
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }

    let label_db;
    let caption_db;
    let thumbs;
    let targets = match target_layer {
        LayerId::Label => {
            label_db =
                EmbeddingDatabase::load(a.label_db.as_deref().ok_or_else(|| usage("layer 1 needs --label-db"))?)?;
            Targets::Labels(&label_db)
        }
        LayerId::Caption => {
            caption_db =
                EmbeddingDatabase::load(a.caption_db.as_deref().ok_or_else(|| usage("layer 2 needs --caption-db"))?)?;
            Targets::Captions(&caption_db)
        }
        LayerId::Thumbnail => {
            thumbs = load_thumbnails(a.thumbnails.as_deref().ok_or_else(|| usage("layer 3 needs --thumbnails"))?)?;
            Targets::Thumbnails(&thumbs)
        }
    };
    let condition = match &a.ocl_checkpoint {
        Some(p) if target_layer == LayerId::Caption => Some(load_codec(p, LayerId::Label)?),
        _ => None,
    };
    let data = TrainingData::from_manifest(&signals, &manifest);
    let outcome = train_layer(&cfg, &data, &targets, condition.as_ref(), EXEC)?;
    let log: String = outcome.history.iter().map(|l| format!("{l}\n")).collect();
    if let Some(p) = &a.log {
        fs::write(p, &log)?;
    }
    print!("{log}");
    outcome.checkpoint.save(&a.out)?;
    println!(
        "selected_epoch={} config_hash={} checkpoint={}",
        outcome.checkpoint.meta.epoch,
        outcome.checkpoint.meta.config_hash,
        a.out.display()
    );
    Ok(())
}

fn selected(manifest: &DatasetManifest, n: usize, split: Option<&str>) -> Result<Vec<usize>> {
    match split {
        Some(s) => Ok(manifest.indices(parse_split(s)?)),
        None => Ok((0..n).collect()),
    }
}

fn encode(a: EncodeArgs) -> Result<()> {
    let max_layer = layer(a.layer);
    if a.checkpoints.ocl_checkpoint.is_none() {
        return Err(usage("encoding needs --ocl-checkpoint for layer 1"));
    }
    let stack = load_stack(&a.checkpoints, max_layer)?;
    let (signals, manifest) = load_dataset(&a.data.dataset, &a.data.manifest)?;
    let indices = selected(&manifest, signals.len(), a.split.as_deref())?;
    fs::create_dir_all(&a.out)?;
    let streams = EXEC.try_map(&indices, |_, &i| stack.encode(&signals[i], max_layer, !a.no_crc))?;
    let mut total_bytes = 0;
    for (&i, bytes) in indices.iter().zip(&streams) {
        fs::write(a.out.join(format!("{i:06}.eidc")), bytes)?;
        total_bytes += bytes.len();
    }
    println!("records={} layers={} bytes={total_bytes}", streams.len(), max_layer.number());
    Ok(())
}

#[derive(Serialize)]
struct CaptionOutput {
    nearest_record: u32,
    text: String,
    score: f64,
    prompt: String,
    prompt_source: PromptSource,
}

#[derive(Serialize)]
struct DecodedRecord {
    file: String,
    subject_id: u8,
    layers: Vec<u8>,
    payload_bits: BTreeMap<LayerId, u64>,
    class_id: u32,
    label: String,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    caption: Option<CaptionOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thumbnail_index: Option<usize>,
}

fn decode(a: DecodeArgs) -> Result<()> {
    let max_layer = layer(a.max_layer);
    let files = container_files(&a.input)?;
    let streams = files
        .iter()
        .map(|f| Ok(brainsem::bitstream::slice(&fs::read(f)?, max_layer.number())?))
        .collect::<Result<Vec<_>>>()?;
    let deepest = streams.iter().map(|s| inspect(s).map(|i| i.layers.len())).try_fold(1, |m, n| n.map(|n| m.max(n)))?;
    let stack = load_stack(&a.checkpoints, layer(deepest as u8))?;
    let label_db = EmbeddingDatabase::load(&a.label_db)?;
    let caption_db = a.caption_db.as_deref().map(EmbeddingDatabase::load).transpose()?;

    let decoded = EXEC.try_map(&streams, |_, s| stack.decode(s))?;
    let mut thumbnails: Vec<Thumbnail> = Vec::new();
    let mut records = Vec::with_capacity(decoded.len());
    for (file, d) in files.iter().zip(decoded) {
        let pred = label_db.classify(&d.label.values, 1)?;
        let label = label_db.get(pred.class_id).map(|e| e.text.clone()).unwrap_or_default();
        let caption = match (&d.caption, &caption_db) {
            (Some(feature), Some(db)) => {
                let nearest = db.classify(&feature.values, 1)?;
                let text = db.get(nearest.class_id).map(|e| e.text.clone()).unwrap_or_default();
                let (prompt, source) = match fuse_prompt(&label, &text) {
                    Ok((p, s)) => (p.to_owned(), s),
                    Err(_) => (String::new(), PromptSource::Label),
                };
                Some(CaptionOutput {
                    nearest_record: nearest.class_id,
                    text,
                    score: nearest.score,
                    prompt,
                    prompt_source: source,
                })
            }
            _ => None,
        };
        let thumbnail_index = d.thumbnail.map(|t| {
            thumbnails.push(t);
            thumbnails.len() - 1
        });
        records.push(DecodedRecord {
            file: file_name(file),
            subject_id: d.subject_id,
            layers: d.payload_bits.keys().map(|l| l.number()).collect(),
            payload_bits: d.payload_bits,
            class_id: pred.class_id,
            label,
            score: pred.score,
            caption,
            thumbnail_index,
        });
    }
    if let Some(p) = &a.thumb_out {
        save_thumbnails(p, &thumbnails)?;
    }
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&records)?)
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let (signals, manifest) = load_dataset(&a.data.dataset, &a.data.manifest)?;
    let codec = load_codec(&a.ocl_checkpoint, LayerId::Label)?;
    let db = EmbeddingDatabase::load(&a.label_db)?;
    let indices = manifest.indices(parse_split(&a.split)?);
    let eval = evaluate_labels(&codec, &db, &signals, &indices, EXEC)?;
    for (k, &i) in eval.indices.iter().enumerate() {
        let class = eval.predictions[k];
        let text = db.get(class).map_or("", |e| e.text.as_str());
        println!("record={i} predicted={class} truth={} label={text:?}", eval.truths[k]);
    }
    println!("top1={:.6} bps={:.6}", eval.accuracy()?, eval.bps());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (signals, manifest) = load_dataset(&a.data.dataset, &a.data.manifest)?;
    let max_layer = available_layers(&a.checkpoints);
    let stack = load_stack(&a.checkpoints, max_layer)?;
    let db = EmbeddingDatabase::load(&a.label_db)?;
    let indices = manifest.indices(parse_split(&a.split)?);
    let mut report: MetricReport = evaluate_labels(stack.label(), &db, &signals, &indices, EXEC)?.report()?;

    let samples: u64 = indices.iter().map(|&i| (signals[i].channels() * signals[i].samples()) as u64).sum();
    let payloads = EXEC.try_map(&indices, |_, &i| stack.compress(&signals[i], max_layer))?;
    for l in LayerId::ALL.into_iter().take(max_layer.number() as usize) {
        let bits: u64 = payloads.iter().map(|p| 8 * p[&l].len() as u64).sum();
        report.bps.insert(l, bits as f64 / samples as f64);
    }
    let container_bits = payloads.iter().zip(&indices).try_fold(0u64, |acc, (p, &i)| -> Result<u64> {
        let subject = u8::try_from(signals[i].subject_id).unwrap_or(0);
        Ok(acc + 8 * pack(p, subject, true)?.len() as u64)
    })?;
    report.total_bps = Some(container_bits as f64 / samples as f64);

    if let Some(path) = &a.thumbnails {
        let targets = load_thumbnails(path)?;
        let codec = stack.codec(LayerId::Thumbnail).map_err(|_| usage("--thumbnails needs --scl-checkpoint"))?;
        let scores = EXEC.try_map(&indices, |k, &i| -> Result<f64> {
            let target = targets.get(i).ok_or_else(|| Error::Invalid(format!("no thumbnail for record {i}")))?;
            match codec.decompress(&payloads[k][&LayerId::Thumbnail], None)? {
                Reconstruction::Thumbnail(t) => Ok(ssim(&t, target)),
                Reconstruction::Feature(_) => unreachable!("thumbnail codec decodes images"),
            }
        })?;
        report.mean_ssim = Some(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    if let Some(path) = &a.captions {
        report.captions = Some(caption_scores(&load_caption_pairs(path)?)?);
    }
    emit(a.out.as_deref(), &report.to_json())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (signals, manifest) = load_dataset(&a.data.dataset, &a.data.manifest)?;
    let db = EmbeddingDatabase::load(&a.label_db)?;
    let mut cfg = base_config(LayerId::Label, a.config.as_deref(), a.arch, &signals)?;
    cfg.seed = a.seed;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    let indices = manifest.indices(parse_split(&a.split)?);
    let data = TrainingData::from_manifest(&signals, &manifest);
    let points: Vec<RatePoint> = rate_accuracy_sweep(&a.lambdas, |lambda| {
        let mut c = cfg.clone();
        c.lambda = lambda;
        let outcome = train_layer(&c, &data, &Targets::Labels(&db), None, EXEC)?;
        let eval = evaluate_labels(&outcome.checkpoint.codec, &db, &signals, &indices, EXEC)?;
        log::info!("lambda={lambda} bps={} top1={}", eval.bps(), eval.accuracy()?);
        Ok(RatePoint { lambda, bps: eval.bps(), accuracy: eval.accuracy()? })
    })?;
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&points)?)
}

#[derive(Serialize)]
struct SignalDelivery {
    file: String,
    #[serde(flatten)]
    report: Option<DeliveryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct LinkReport {
    channel: ChannelModel,
    delivered: usize,
    failed: usize,
    signals: Vec<SignalDelivery>,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let channel = match (&a.channel, a.budget_bits) {
        (_, Some(bits)) => ChannelModel::new(bits)?,
        (Some(p), None) => {
            let c: ChannelModel = serde_json::from_str(&fs::read_to_string(p)?)?;
            ChannelModel::new(c.budget_bits_per_signal)?
        }
        (None, None) => return Err(usage("simulate needs --budget-bits or --channel")),
    };
    let files = container_files(&a.input)?;
    let streams = files.iter().map(fs::read).collect::<std::io::Result<Vec<_>>>()?;
    let results = simulate_batch(&streams, &channel, EXEC);
    if let Some(dir) = &a.delivered {
        fs::create_dir_all(dir)?;
    }
    let mut signals = Vec::with_capacity(results.len());
    for (file, result) in files.iter().zip(results) {
        match result {
            Ok((bytes, report)) => {
                if let Some(dir) = &a.delivered {
                    fs::write(dir.join(file_name(file)), bytes)?;
                }
                signals.push(SignalDelivery { file: file_name(file), report: Some(report), error: None });
            }
            Err(brainsem::link::LinkError::Container(e)) => return Err(e.into()),
            Err(e) => signals.push(SignalDelivery { file: file_name(file), report: None, error: Some(e.to_string()) }),
        }
    }
    let failed = signals.iter().filter(|s| s.error.is_some()).count();
    let report = LinkReport { channel, delivered: signals.len() - failed, failed, signals };
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

fn inspect_cmd(a: InspectArgs) -> Result<()> {
    let bytes = fs::read(&a.input)?;
    let info = inspect(&bytes)?;
    let mut lines = vec![
        "magic=EIDC".to_owned(),
        format!("version={}", bytes[4]),
        format!("subject_id={}", info.subject_id),
        format!("crc={}", info.crc),
        format!("layers={}", info.layers.iter().map(|(l, _)| l.number().to_string()).collect::<Vec<_>>().join(",")),
    ];
    lines.extend(info.layers.iter().map(|(l, n)| format!("layer{}_bytes={n}", l.number())));
    lines.push(format!("total_bytes={}", info.total_bytes));
    println!("{}", lines.join("\n"));
    Ok(())
}
