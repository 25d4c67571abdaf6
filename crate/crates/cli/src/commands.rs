use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use facevq_core::domain::{
    read_rating_log, validate_manifest, write_rating_log, FrameFeatures, MosTable, RatingEvent,
    SessionKind, ValidatedManifest, VideoRecord,
};
use facevq_core::features::{list_frame_files, video_features_from_dir, VideoFeatureRecord};
use facevq_core::harness::{
    evaluate_with_groups, fit_baseline, group_analysis, histograms_csv, predict_baseline,
    read_predictions_csv, report_csv, simulate_study, split_dataset, write_latent_csv, GroupKey,
    HistogramSpec, SimulationParams, SplitName, SplitSpec,
};
use facevq_core::{run_pipeline, ScoringConfig};
use facevq_service::store::StoreOptions;
use facevq_service::{Store, SystemClock};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::{
    AnalyzeArgs, BaselineArgs, EvaluateArgs, FeaturesArgs, IngestArgs, ScoreArgs, ServeArgs,
    SimulateArgs,
};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_manifest(path: &Path) -> Result<ValidatedManifest> {
    let records: Vec<VideoRecord> = read_json(path)?;
    let manifest = validate_manifest(&records).map_err(|violations| {
        let parts: Vec<String> = violations
            .iter()
            .map(|v| format!("{}: {}", v.video_id, v.message))
            .collect();
        anyhow::anyhow!("invalid manifest {}: {}", path.display(), parts.join("; "))
    })?;
    for w in &manifest.warnings {
        tracing::warn!(video = %w.video_id, "{}", w.message);
    }
    Ok(manifest)
}

fn load_ratings(path: &Path) -> Result<Vec<RatingEvent>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_rating_log(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn load_mos(path: &Path) -> Result<MosTable> {
    read_json(path)
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let mut summary = json!({
        "n_videos": manifest.len(),
        "warnings": manifest.warnings.iter().map(|w| format!("{}: {}", w.video_id, w.message)).collect::<Vec<_>>(),
    });
    if let Some(path) = &args.ratings {
        let events = load_ratings(path)?;
        let mut formal = BTreeSet::new();
        let mut subjects = BTreeSet::new();
        for e in &events {
            if !manifest.contains(&e.video_id) {
                bail!("rating references unknown video {}", e.video_id);
            }
            subjects.insert(e.subject_id.as_str());
            if e.session_kind == SessionKind::Formal
                && !formal.insert((e.subject_id.as_str(), e.video_id.as_str()))
            {
                bail!(
                    "duplicate formal rating by {} for {}",
                    e.subject_id,
                    e.video_id
                );
            }
        }
        summary["n_ratings"] = json!(events.len());
        summary["n_formal"] = json!(formal.len());
        summary["n_subjects"] = json!(subjects.len());
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn score(args: ScoreArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let events = load_ratings(&args.ratings)?;
    let cfg: ScoringConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ScoringConfig::default(),
    };
    cfg.validate().context("invalid scoring config")?;
    let study = run_pipeline(&events, &manifest, &cfg)?;
    let dir = out_dir(&args.out_dir)?;
    write_json(&dir.join("mos_table.json"), &study.mos_table)?;
    write_json(
        &dir.join("outliers.json"),
        &json!({
            "outlier_fraction": study.outlier_fraction,
            "cells": study.outlier_cells(),
            "subjects": study.subject_outliers,
        }),
    )?;
    write_json(
        &dir.join("rejected_subjects.json"),
        &study.rejected_subjects,
    )?;
    write_json(&dir.join("pipeline_report.json"), &study.report(&cfg))?;
    tracing::info!(
        videos = study.mos_table.len(),
        rejected = study.rejected_subjects.len(),
        outlier_fraction = study.outlier_fraction,
        "scored"
    );
    Ok(())
}

/// One directory of frames is one video; otherwise each subdirectory is.
fn video_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            subdirs.push(path);
        }
    }
    if !list_frame_files(root)?.is_empty() || subdirs.is_empty() {
        let id = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into());
        return Ok(vec![(id, root.to_path_buf())]);
    }
    subdirs.sort();
    Ok(subdirs
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p))
        .collect())
}

pub fn features(args: FeaturesArgs) -> Result<()> {
    let dir = out_dir(&args.out_dir)?;
    let mut all = Vec::new();
    for (id, frames) in video_dirs(&args.frames_dir)? {
        let record = video_features_from_dir(&id, &frames, args.stride, args.pixel_scale)
            .with_context(|| format!("video {id}"))?;
        let vdir = dir.join(&id);
        fs::create_dir_all(&vdir)?;
        write_json(&vdir.join("features.json"), &record)?;
        all.push(record);
    }
    write_json(&dir.join("features.json"), &all)?;
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mos = load_mos(&args.mos)?;
    let manifest = load_manifest(&args.manifest)?;
    let keys = GroupKey::parse_list(&args.group_by)?;
    let spec = HistogramSpec {
        width: args.bin_width,
        ..HistogramSpec::default()
    };
    let analysis = group_analysis(&mos, &manifest, &keys, &spec);
    let dir = out_dir(&args.out_dir)?;
    fs::write(dir.join("histograms.csv"), histograms_csv(&analysis)?)?;
    write_json(&dir.join("summary.json"), &analysis)?;
    Ok(())
}

fn split_ids(ids: Vec<String>, split: &str, seed: u64) -> Result<Vec<String>> {
    let name: SplitName = split.parse()?;
    let spec = SplitSpec {
        seed,
        ..SplitSpec::default()
    };
    Ok(split_dataset(&ids, &spec)?.get(name))
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let name = args.name.clone().unwrap_or_else(|| {
        args.predictions
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "predictions".into())
    });
    let file = File::open(&args.predictions)
        .with_context(|| format!("opening {}", args.predictions.display()))?;
    let predictions = read_predictions_csv(BufReader::new(file), &name)?;
    let mos = load_mos(&args.mos)?;
    let manifest = args.manifest.as_deref().map(load_manifest).transpose()?;
    if let Some(m) = &manifest {
        predictions.check_against(m)?;
    }
    let keys = if args.groups.trim().is_empty() {
        Vec::new()
    } else {
        GroupKey::parse_list(&args.groups)?
    };
    if !keys.is_empty() && manifest.is_none() {
        bail!("--groups requires --manifest");
    }
    let ids: Vec<String> = mos.entries().iter().map(|e| e.video_id.clone()).collect();
    let subset = split_ids(ids, &args.split.split, args.split.split_seed)?;
    let report = evaluate_with_groups(
        &predictions,
        &mos,
        Some(&subset),
        manifest.as_ref(),
        &keys,
        &args.dataset_id,
    )?;
    let dir = out_dir(&args.out_dir)?;
    write_json(&dir.join("report.json"), &report)?;
    fs::write(dir.join("report.csv"), report_csv(&report)?)?;
    println!("{}", serde_json::to_string(&report.overall)?);
    Ok(())
}

pub fn baseline(args: BaselineArgs) -> Result<()> {
    let records: Vec<VideoFeatureRecord> = read_json(&args.features)?;
    let features: BTreeMap<String, FrameFeatures> = records
        .iter()
        .map(|r| (r.video_id.clone(), r.features()))
        .collect();
    let mos = load_mos(&args.mos)?;
    let ids: Vec<String> = mos.entries().iter().map(|e| e.video_id.clone()).collect();
    let train = split_ids(ids, "train", args.split_seed)?;
    let model = fit_baseline(&features, &mos, Some(&train))?;
    let predictions = predict_baseline(&model, &features, None, "linear_baseline")?;
    let mut w = csv::Writer::from_path(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    w.write_record(["video_id", "score"])?;
    for (id, score) in &predictions.scores {
        w.write_record([id.as_str(), &score.to_string()])?;
    }
    w.flush()?;
    if let Some(p) = &args.model_out {
        write_json(p, &model)?;
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let params: SimulationParams = match &args.params {
        Some(p) => read_json(p)?,
        None => SimulationParams::default(),
    };
    let study = simulate_study(&params)?;
    let mut out = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    write_rating_log(&mut out, &study.events)?;
    out.flush()?;
    write_latent_csv(File::create(&args.truth)?, &study)?;
    if let Some(p) = &args.manifest_out {
        write_json(p, &study.manifest)?;
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    fs::create_dir_all(&args.data_dir)
        .with_context(|| format!("creating data dir {}", args.data_dir.display()))?;
    let store = Store::open(
        &args.data_dir,
        Arc::new(SystemClock),
        StoreOptions {
            fsync: !args.no_fsync,
            ..StoreOptions::default()
        },
    )?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        facevq_service::serve(listener, Arc::new(store), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
