//! Subcommand bodies. Each returns the list of failed `--check` assertions
//! (empty when checking is off or everything held).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::archive::{self, ArchiveReader, ArchiveWriter, RecordingInfo};
use crate::config::RunConfig;
use crate::Rejected;
use rdsense_core::dataio::{load_clips, make_split, save_clips, Split, SplitProtocol};
use rdsense_core::learn::{
    evaluate, load_checkpoint, nearest_centroid, save_checkpoint, train as fit, EpochLog, EvalReport,
    Metrics, Sample,
};
use rdsense_core::rdpipe::{
    process_recording, velocity_spectrogram, ClipMeta, Heatmap, ProcessedRecording, Spectrogram,
    SpectrogramMode, FRAME_SIDE,
};
use rdsense_core::sim::scenario::Scenario;
use rdsense_core::sync::synchronize;
use rdsense_core::{ChannelMatrix, RDClip, RadioConfig};

pub const ARCHIVE_FILE: &str = "channels.rdca";
pub const STORE_FILE: &str = "clips.rdcs";
pub const CHECKPOINT_FILE: &str = "model.rdck";

fn required<'a>(slot: &'a Option<PathBuf>, what: &str, flag: &str) -> Result<&'a Path> {
    match slot {
        Some(p) => Ok(p),
        None => Err(Rejected(anyhow::anyhow!(
            "no {what} given (use {flag} or the config's inputs block)"
        ))
        .into()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Recordings are synthesized or processed this many at a time, which
/// bounds memory while keeping every worker busy.
fn chunk_len() -> usize {
    2 * rayon::current_num_threads()
}

/// File-name-safe form of a recording name.
fn stem(name: &str, index: usize) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        format!("rec{index}")
    } else {
        s
    }
}

fn mode_tag(mode: &SpectrogramMode) -> String {
    match mode {
        SpectrogramMode::RangeFiltered { threshold } => format!("range_filtered_{threshold}m"),
        SpectrogramMode::AllSubcarriers => "all_subcarriers".into(),
    }
}

pub fn load_scenario(cfg: &RunConfig) -> Result<Scenario> {
    let path = required(&cfg.inputs.scenario, "scenario", "--scenario")?;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    let mut scenario = Scenario::from_json(&text)
        .map_err(|e| Rejected(anyhow::Error::new(e).context(format!("scenario {}", path.display()))))?;
    if let Some(radio) = cfg.radio {
        scenario.radio = radio;
    }
    if let (Some(seed), Some(ds)) = (cfg.rng_seed, scenario.dataset.as_mut()) {
        ds.seed = seed;
    }
    Ok(scenario)
}

pub fn simulate(cfg: &RunConfig, out: &Path, check: bool) -> Result<Vec<String>> {
    let scenario = load_scenario(cfg)?;
    write_json(&out.join("scenario.json"), &scenario)?;
    let recordings = scenario.all_recordings();
    let path = out.join(ARCHIVE_FILE);
    let mut writer = ArchiveWriter::create(&path, &scenario.radio, recordings.len())?;
    for chunk in recordings.chunks(chunk_len()) {
        let synthesized = chunk
            .par_iter()
            .map(|r| r.synthesize(&scenario.radio, &scenario.kinematics, &scenario.mover))
            .collect::<rdsense_core::Result<Vec<_>>>()?;
        for s in &synthesized {
            writer.push(s)?;
        }
    }
    let index = writer.finish()?;
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    for a in index.recordings.iter().flat_map(|r| &r.annotations) {
        *labels.entry(a.label.name()).or_default() += 1;
    }
    println!(
        "simulate: {} recordings, {} annotated gestures {:?} -> {}",
        index.recordings.len(),
        labels.values().sum::<usize>(),
        labels,
        path.display()
    );
    if !check {
        return Ok(Vec::new());
    }

    // The archive must read back to the f32-rounded synthesis, recording by
    // recording, with identical ground truth.
    let mut problems = Vec::new();
    if recordings.is_empty() {
        if let Err(e) = archive::read_all(&path) {
            problems.push(format!("empty archive does not read back: {e:#}"));
        }
        return Ok(problems);
    }
    let mut reader = ArchiveReader::open(&path)?;
    for (i, r) in recordings.iter().enumerate() {
        let Some((info, m)) = reader.next_matrix()? else {
            problems.push(format!("archive ends after {i} recordings"));
            break;
        };
        let fresh = r.synthesize(&scenario.radio, &scenario.kinematics, &scenario.mover)?;
        if m != archive::quantized(&fresh.matrix) {
            problems.push(format!("recording {i} ({}) does not reproduce", info.name));
        }
        if info.annotations != fresh.annotations || info.tracks != fresh.tracks {
            problems.push(format!("recording {i} ({}) ground truth differs", info.name));
        }
    }
    Ok(problems)
}

struct Processed {
    info: RecordingInfo,
    result: ProcessedRecording,
    spectrograms: Vec<Spectrogram>,
}

fn process(
    info: RecordingInfo,
    m: &ChannelMatrix,
    radio: &RadioConfig,
    cfg: &RunConfig,
) -> Result<Processed> {
    let meta = ClipMeta {
        user: info.user,
        location: info.location.clone(),
        source: info.name.clone(),
        start_frame: 0,
    };
    let result = process_recording(m, radio, &cfg.pipeline, &info.annotations, &meta)
        .with_context(|| format!("processing recording {:?}", info.name))?;
    let spectrograms = cfg
        .spectrogram
        .iter()
        .map(|&mode| velocity_spectrogram(&result.synchronized, radio, &cfg.pipeline.grid, mode))
        .collect::<rdsense_core::Result<Vec<_>>>()
        .with_context(|| format!("spectrogram of recording {:?}", info.name))?;
    Ok(Processed {
        info,
        result,
        spectrograms,
    })
}

#[derive(Serialize)]
struct RecordingSummary {
    name: String,
    user: u32,
    location: String,
    rd_frames: usize,
    clips: usize,
    labeled_clips: usize,
    delay_samples: Option<f64>,
    spectrograms: Vec<String>,
}

/// Writes every spectrogram of a recording on one shared dB scale so the
/// modes compare directly.
fn save_spectrograms(
    dir: &Path,
    name: &str,
    modes: &[SpectrogramMode],
    specs: &[Spectrogram],
) -> Result<Vec<String>> {
    let maps: Vec<Heatmap> = specs.iter().map(Spectrogram::heatmap).collect();
    let lo = maps.iter().map(|h| h.range().0).fold(f64::INFINITY, f64::min);
    let hi = maps.iter().map(|h| h.range().1).fold(f64::NEG_INFINITY, f64::max);
    let mut stems = Vec::new();
    for (mode, map) in modes.iter().zip(&maps) {
        let s = format!("spectrogram_{name}_{}", mode_tag(mode));
        map.save(dir, &s, "dB", Some((lo, hi)))?;
        stems.push(s);
    }
    Ok(stems)
}

pub fn pipeline(cfg: &RunConfig, out: &Path, check: bool) -> Result<Vec<String>> {
    let path = required(&cfg.inputs.archive, "channel archive", "--archive")?;
    let mut reader = ArchiveReader::open(path)?;
    if reader.len() == 0 {
        archive::read_all(path)?;
    }
    let radio = reader.index.radio;
    let mut clips: Vec<RDClip> = Vec::new();
    let mut summary = Vec::with_capacity(reader.len());
    let mut done = 0;
    while done < reader.len() {
        let mut batch = Vec::new();
        while batch.len() < chunk_len() {
            match reader.next_matrix()? {
                Some(x) => batch.push(x),
                None => break,
            }
        }
        let processed = batch
            .into_par_iter()
            .map(|(info, m)| process(info, &m, &radio, cfg))
            .collect::<Result<Vec<_>>>()?;
        for p in processed {
            let name = stem(&p.info.name, done);
            let spectrograms = save_spectrograms(out, &name, &cfg.spectrogram, &p.spectrograms)?;
            summary.push(RecordingSummary {
                name: p.info.name.clone(),
                user: p.info.user,
                location: p.info.location.clone(),
                rd_frames: p.result.maps.len(),
                clips: p.result.clips.len(),
                labeled_clips: p.result.clips.iter().filter(|c| c.label.is_some()).count(),
                delay_samples: p.result.delay.map(|d| d.effective),
                spectrograms,
            });
            clips.extend(p.result.clips);
            done += 1;
        }
    }
    let store = out.join(STORE_FILE);
    save_clips(&clips, &store)?;
    write_json(&out.join("pipeline.json"), &summary)?;
    println!(
        "pipeline: {} recordings -> {} clips ({} labeled) in {}",
        summary.len(),
        clips.len(),
        clips.iter().filter(|c| c.label.is_some()).count(),
        store.display()
    );
    if !check {
        return Ok(Vec::new());
    }

    let mut problems = Vec::new();
    let side = FRAME_SIDE * FRAME_SIDE;
    for (i, c) in clips.iter().enumerate() {
        if c.num_frames() != cfg.pipeline.clip_frames || c.frames.len() != cfg.pipeline.clip_frames * side {
            problems.push(format!("clip {i} has shape {} values", c.frames.len()));
        }
        if let Some(v) = c.frames.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            problems.push(format!("clip {i} holds {v} outside [0, 1]"));
        }
    }
    match load_clips(&store) {
        Ok(back) if back == clips => {}
        Ok(_) => problems.push("clip store does not read back identically".into()),
        Err(e) => problems.push(format!("clip store does not load: {e}")),
    }
    Ok(problems)
}

/// Samples of the labeled clips at `idx`.
fn samples<'a>(clips: &'a [RDClip], idx: &[usize]) -> Vec<Sample<'a>> {
    idx.iter()
        .filter_map(|&i| {
            clips[i].label.map(|g| Sample {
                x: &clips[i].frames,
                y: g.index(),
            })
        })
        .collect()
}

fn load_store(cfg: &RunConfig) -> Result<Vec<RDClip>> {
    let path = required(&cfg.inputs.store, "clip store", "--store")?;
    load_clips(path).with_context(|| format!("loading clip store {}", path.display()))
}

/// Table-style summary: one row per model, then per-gesture scores.
pub fn table(reports: &[&EvalReport]) -> String {
    let mut s = String::new();
    s.push_str("| Model | Accuracy (%) | Macro-F1 (%) | Params | GFLOPs | Test clips |\n");
    s.push_str("|---|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2} | {} | {:.4} | {} |",
            r.model,
            r.accuracy,
            r.macro_f1,
            r.params,
            r.gflops,
            r.total()
        );
    }
    for r in reports {
        let _ = writeln!(s, "\n{} per gesture:\n", r.model);
        s.push_str("| Gesture | Support | Accuracy (%) | Precision (%) | Recall (%) | F1 (%) |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for c in &r.per_class {
            let _ = writeln!(
                s,
                "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} |",
                c.name, c.support, c.accuracy, c.precision, c.recall, c.f1
            );
        }
    }
    s
}

/// Split-protocol and metric assertions shared by `train` and `eval`.
fn check_split_and_report(clips: &[RDClip], split: &Split, report: &EvalReport) -> Vec<String> {
    let mut problems = Vec::new();
    let users = |idx: &[usize]| idx.iter().map(|&i| clips[i].meta.user).collect::<Vec<_>>();
    let locations = |idx: &[usize]| {
        idx.iter()
            .map(|&i| clips[i].meta.location.clone())
            .collect::<Vec<_>>()
    };
    let pool: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
    match &split.spec.protocol {
        SplitProtocol::InDomain => {}
        SplitProtocol::LeaveOneUserOut { user } => {
            if users(&split.test).iter().any(|u| u != user) {
                problems.push(format!("test set holds users other than {user}"));
            }
            if users(&pool).contains(user) {
                problems.push(format!("user {user} leaks into train/val"));
            }
        }
        SplitProtocol::CrossLocation {
            train_locations,
            test_location,
        } => {
            if locations(&split.test).iter().any(|l| l != test_location) {
                problems.push(format!("test set holds locations other than {test_location}"));
            }
            if locations(&pool).iter().any(|l| !train_locations.contains(l)) {
                problems.push("train/val holds locations outside the training set".into());
            }
        }
    }
    let mut all: Vec<usize> = pool.iter().chain(&split.test).copied().collect();
    let n = all.len();
    all.sort_unstable();
    all.dedup();
    if all.len() != n {
        problems.push("split parts overlap".into());
    }
    let m = Metrics::from_confusion(report.confusion.clone());
    if m.accuracy != report.accuracy || m.macro_f1 != report.macro_f1 || m.per_class != report.per_class {
        problems.push("reported metrics do not match their confusion matrix".into());
    }
    let labeled = split.test.iter().filter(|&&i| clips[i].label.is_some()).count() as u64;
    if report.total() != labeled {
        problems.push(format!(
            "confusion counts {} clips, test set has {labeled}",
            report.total()
        ));
    }
    problems
}

pub fn train(cfg: &RunConfig, out: &Path, check: bool) -> Result<Vec<String>> {
    let clips = load_store(cfg)?;
    let split = make_split(&clips, &cfg.split)?;
    let (tr, va, te) = (
        samples(&clips, &split.train),
        samples(&clips, &split.val),
        samples(&clips, &split.test),
    );
    log::info!("split: {} train, {} val, {} test", tr.len(), va.len(), te.len());
    let outcome = fit(&tr, &va, &te, &cfg.model, &cfg.train)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.model, &ckpt)?;
    write_json(&out.join("split.json"), &split)?;
    write_json(&out.join("report.json"), &outcome.report)?;
    write_json(&out.join("runs.json"), &outcome.runs)?;
    EpochLog::write_csv(
        &outcome.report.loss_curve,
        std::io::BufWriter::new(std::fs::File::create(out.join("loss_curve.csv"))?),
    )?;
    let mut reports = vec![&outcome.report];
    let baseline = if cfg.baseline {
        let b = nearest_centroid(&tr, &te, cfg.model.num_classes, FRAME_SIDE * FRAME_SIDE)?;
        write_json(&out.join("baseline.json"), &b)?;
        Some(b)
    } else {
        None
    };
    reports.extend(baseline.as_ref());
    std::fs::write(out.join("table.md"), table(&reports))?;
    println!(
        "train: run {} of {} selected; test accuracy {:.2}%, macro-F1 {:.2}% on {} clips",
        outcome.selected,
        outcome.runs.len(),
        outcome.report.accuracy,
        outcome.report.macro_f1,
        te.len()
    );
    if !check {
        return Ok(Vec::new());
    }

    let mut problems = check_split_and_report(&clips, &split, &outcome.report);
    let reloaded = load_checkpoint(&ckpt)?;
    if reloaded.params() != outcome.model.params() {
        problems.push("checkpoint does not reload bit-exactly".into());
    }
    let again = evaluate(&reloaded, &te)?;
    if again.confusion != outcome.report.confusion {
        problems.push("reloaded checkpoint scores differently".into());
    }
    Ok(problems)
}

pub fn eval(cfg: &RunConfig, out: &Path, check: bool) -> Result<Vec<String>> {
    let clips = load_store(cfg)?;
    let split: Split = match &cfg.inputs.split {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading split {}", p.display()))?;
            let s: Split = serde_json::from_str(&text)
                .map_err(|e| Rejected(anyhow::Error::new(e).context(format!("split {}", p.display()))))?;
            if let Some(&i) = s
                .train
                .iter()
                .chain(&s.val)
                .chain(&s.test)
                .find(|&&i| i >= clips.len())
            {
                bail!("split refers to clip {i} but the store holds {}", clips.len());
            }
            s
        }
        None => make_split(&clips, &cfg.split)?,
    };
    let ckpt = required(&cfg.inputs.checkpoint, "checkpoint", "--checkpoint")?;
    let model = load_checkpoint(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let te = samples(&clips, &split.test);
    ensure!(!te.is_empty(), "the split's test set holds no labeled clips");
    let report = evaluate(&model, &te)?;
    write_json(&out.join("split.json"), &split)?;
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(out.join("table.md"), table(&[&report]))?;
    println!(
        "eval: test accuracy {:.2}%, macro-F1 {:.2}% on {} clips",
        report.accuracy,
        report.macro_f1,
        te.len()
    );
    Ok(if check {
        check_split_and_report(&clips, &split, &report)
    } else {
        Vec::new()
    })
}

/// The requested recording of an archive, by name or else the first.
fn find_recording(path: &Path, name: Option<&str>) -> Result<(RadioConfig, RecordingInfo, ChannelMatrix)> {
    let mut reader = ArchiveReader::open(path)?;
    let radio = reader.index.radio;
    while let Some((info, m)) = reader.next_matrix()? {
        if name.is_none_or(|n| n == info.name) {
            return Ok((radio, info, m));
        }
    }
    match name {
        Some(n) => bail!("archive {} has no recording named {n:?}", path.display()),
        None => bail!("archive {} is empty", path.display()),
    }
}

pub fn export_figure(cfg: &RunConfig, out: &Path, check: bool) -> Result<Vec<String>> {
    let f = &cfg.figure;
    let grid = &cfg.pipeline.grid;
    let (map, stem_name, units) = match f.kind.as_str() {
        "rd" => {
            let path = required(&cfg.inputs.archive, "channel archive", "--archive")?;
            let (radio, info, m) = find_recording(path, f.recording.as_deref())?;
            let p = process_recording(&m, &radio, &cfg.pipeline, &info.annotations, &ClipMeta::default())?;
            let Some(rd) = p.maps.get(f.index) else {
                bail!(
                    "recording {:?} has {} CPIs; --index {} is out of range",
                    info.name,
                    p.maps.len(),
                    f.index
                );
            };
            (
                rd.heatmap(grid),
                format!("rd_{}_cpi{}", stem(&info.name, 0), f.index),
                "dB above noise floor",
            )
        }
        "spectrogram" => {
            let path = required(&cfg.inputs.archive, "channel archive", "--archive")?;
            let (radio, info, m) = find_recording(path, f.recording.as_deref())?;
            let mode = f
                .mode
                .unwrap_or(SpectrogramMode::RangeFiltered { threshold: 1.0 });
            let sync = synchronize(&m, &cfg.pipeline.sync)?;
            let s = velocity_spectrogram(&sync.matrix, &radio, grid, mode)?;
            (
                s.heatmap(),
                format!("spectrogram_{}_{}", stem(&info.name, 0), mode_tag(&mode)),
                "dB",
            )
        }
        "clip" => {
            let clips = load_store(cfg)?;
            let Some(c) = clips.get(f.clip) else {
                bail!(
                    "store holds {} clips; --clip {} is out of range",
                    clips.len(),
                    f.clip
                );
            };
            if f.index >= c.num_frames() {
                bail!(
                    "clip has {} frames; --index {} is out of range",
                    c.num_frames(),
                    f.index
                );
            }
            let axis = |lo: f64, hi: f64| -> Vec<f64> {
                (0..FRAME_SIDE)
                    .map(|i| lo + (hi - lo) * i as f64 / (FRAME_SIDE - 1) as f64)
                    .collect()
            };
            let (r, v) = (grid.ranges(), grid.velocities());
            let map = Heatmap {
                row_label: "range_m".into(),
                col_label: "velocity_mps".into(),
                row_axis: axis(r[0], r[r.len() - 1]),
                col_axis: axis(v[0], v[v.len() - 1]),
                values: c.frame(f.index).iter().map(|&x| f64::from(x)).collect(),
            };
            (map, format!("clip{}_frame{}", f.clip, f.index), "normalized SNR")
        }
        other => {
            return Err(Rejected(anyhow::anyhow!(
                "unknown figure kind {other:?}; use rd, spectrogram or clip"
            ))
            .into())
        }
    };
    let span = if f.kind == "clip" { Some((0.0, 1.0)) } else { None };
    let files = map.save(out, &stem_name, units, span)?;
    for p in &files {
        println!("export-figure: {}", p.display());
    }
    if !check {
        return Ok(Vec::new());
    }
    let mut problems = Vec::new();
    if map.values.len() != map.rows() * map.cols() || map.values.iter().any(|v| !v.is_finite()) {
        problems.push("figure values are not a finite full grid".into());
    }
    let csv = std::fs::read_to_string(&files[0])?;
    if csv.lines().count() != map.rows() + 1 {
        problems.push("figure CSV row count differs from the grid".into());
    }
    Ok(problems)
}
