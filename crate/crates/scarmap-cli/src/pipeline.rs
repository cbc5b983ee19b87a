//! Subcommand implementations: each stage reads the previous stage's
//! artifacts from the work directory and writes its own.
//!
//! Layout under the work directory:
//! ```text
//! raw/                  tiles + records.csv (ingested or synthesized)
//! dataset/<variant>/    cropped tiles + manifest.csv
//! prep/<variant>/       train/val/test tensor archives + norm.txt
//! models/<variant>/     model.smun + config.json + curves.csv
//! hpo/<variant>/        results.csv
//! reports/<variant>/    tables and plots
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use scarmap::dataset::{
    filter_distant_components, make_crop, read_manifest, stratified_split, write_manifest,
    DatasetManifest, ManifestRow, Split, Variant, DEFAULT_STRATA,
};
use scarmap::hpo::{default_grid, read_grid, run_grid, write_results_csv};
use scarmap::preprocess::{
    augment, concat_channels, fit_band_limits, fit_norm_stats, impute_outliers, knn_fill,
    read_archive, standardize, write_archive, write_norm_stats, zero_pad, TensorSample,
    NUM_CHANNELS,
};
use scarmap::raster::{
    read_records_csv, read_tile, write_records_csv, write_tile, BandTile, FireRecord,
    IngestProfile, ScarLabel, BAND_NBR, NUM_BANDS,
};
use scarmap::synth::{generate, inject_defects, DefectRates, SynthSpec};
use scarmap::train::{
    area_dc_analysis, band_dc_analysis, evaluate, read_curves_csv, train, write_area_analysis_csv,
    write_band_analysis_csv, write_curves_csv, write_report_csv, write_report_json, MetricsReport,
    TrainConfig,
};
use scarmap::unet::{UNet, UNetConfig};
use scarmap::{Error, Result};

use crate::config::FileConfig;
use crate::plot::{self, Series, BLUE, GREEN, ORANGE};

/// Artifact locations under one work directory.
pub struct Paths {
    pub work: PathBuf,
}

impl Paths {
    pub fn dataset(&self, v: Variant) -> PathBuf {
        self.work.join("dataset").join(v.name())
    }
    pub fn manifest(&self, v: Variant) -> PathBuf {
        self.dataset(v).join("manifest.csv")
    }
    pub fn prep(&self, v: Variant) -> PathBuf {
        self.work.join("prep").join(v.name())
    }
    pub fn archive(&self, v: Variant, split: Split) -> PathBuf {
        self.prep(v).join(format!("{}.smts", split.name()))
    }
    pub fn models(&self, v: Variant) -> PathBuf {
        self.work.join("models").join(v.name())
    }
    pub fn reports(&self, v: Variant) -> PathBuf {
        self.work.join("reports").join(v.name())
    }
    pub fn hpo(&self, v: Variant) -> PathBuf {
        self.work.join("hpo").join(v.name())
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub tiles: usize,
    pub size: usize,
    pub burned_fraction: f64,
    pub severity: f64,
    pub noise: f64,
    pub defect_rate: f64,
    pub seed: u64,
}

/// Generates a synthetic corpus in the raw-ingest layout.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        tile_count: args.tiles,
        height: args.size,
        width: args.size,
        burned_fraction: args.burned_fraction,
        severity: args.severity,
        noise_level: args.noise,
        seed: args.seed,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec)?;
    let mut tiles: Vec<BandTile> = corpus.iter().map(|t| t.tile.clone()).collect();
    let mut defect_count = 0;
    if args.defect_rate > 0.0 {
        let (damaged, defects) =
            inject_defects(&tiles, &DefectRates::uniform(args.defect_rate), args.seed ^ 0xd3f3c7)?;
        tiles = damaged;
        defect_count = defects.len();
    }
    std::fs::create_dir_all(&args.out)?;
    for (tile, item) in tiles.iter().zip(&corpus) {
        write_tile(&args.out, tile, &item.label)?;
    }
    let records: Vec<FireRecord> = corpus.iter().map(|t| t.record.clone()).collect();
    write_records_csv(args.out.join("records.csv"), &records)?;
    let mean_frac: f64 = records
        .iter()
        .map(|r| r.burned_pixel_count as f64 / (args.size * args.size) as f64)
        .sum::<f64>()
        / records.len() as f64;
    println!(
        "synth: {} tiles of {}x{} at {:.1}% burned (target {:.1}%), {} defects -> {}",
        records.len(),
        args.size,
        args.size,
        100.0 * mean_frac,
        100.0 * args.burned_fraction,
        defect_count,
        args.out.display()
    );
    Ok(())
}

/// Crops, filters and splits the raw corpus into a variant dataset.
pub fn cmd_build_dataset(paths: &Paths, raw: &Path, variant: Variant, seed: u64) -> Result<()> {
    let records_path = raw.join("records.csv");
    if !records_path.exists() {
        return Err(Error::MissingArtifact(records_path.display().to_string()));
    }
    let records = read_records_csv(&records_path)?;
    let (assignments, _) = stratified_split(&records, seed, DEFAULT_STRATA);
    let by_id: BTreeMap<&str, &FireRecord> =
        records.iter().map(|r| (r.record_id.as_str(), r)).collect();

    let out_dir = paths.dataset(variant);
    std::fs::create_dir_all(&out_dir)?;
    let profile = IngestProfile::default();
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    let mut components_removed = 0usize;
    let mut empty_after_filter = Vec::new();
    for a in &assignments {
        let record = by_id[a.record_id.as_str()];
        let (tile, label) = read_tile(raw, &record.record_id, &profile)?;
        let crop = match make_crop(record, variant, (tile.height(), tile.width())) {
            Ok(c) => c,
            Err(Error::Oversize(msg)) => {
                rejected.push(msg);
                continue;
            }
            Err(e) => return Err(e),
        };
        let tile = tile.crop(&crop.crop_rect)?;
        let label = label.crop(&crop.crop_rect)?;
        let outcome = filter_distant_components(&label, tile.pixel_size_m);
        components_removed += outcome.removed;
        if outcome.empty_warning || outcome.label.burned_pixel_count() == 0 {
            empty_after_filter.push(record.record_id.clone());
        }
        let burned = outcome.label.burned_pixel_count();
        write_tile(&out_dir, &tile, &outcome.label)?;
        rows.push(ManifestRow {
            record_id: record.record_id.clone(),
            region: record.region,
            variant,
            split: a.split,
            stratum: a.stratum,
            burned_pixel_count: burned,
            burned_fraction: burned as f64 / crop.crop_rect.area() as f64,
            crop: crop.crop_rect,
            pad: crop.pad_needed,
        });
    }
    let manifest = DatasetManifest { rows };
    write_manifest(paths.manifest(variant), &manifest)?;
    for split in Split::ALL {
        let n = manifest.rows_for(split).count();
        println!("build-dataset[{}]: {} {} records", variant.name(), n, split.name());
    }
    println!(
        "build-dataset[{}]: mean burned fraction {:.3}, {} distant components removed, {} oversize rejections, {} empty-after-filter",
        variant.name(),
        manifest.mean_burned_fraction(),
        components_removed,
        rejected.len(),
        empty_after_filter.len()
    );
    for msg in &rejected {
        println!("  rejected: {msg}");
    }
    Ok(())
}

fn load_split_tiles(
    paths: &Paths,
    variant: Variant,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<(ManifestRow, BandTile, ScarLabel)>> {
    let dir = paths.dataset(variant);
    let profile = IngestProfile::default();
    manifest
        .rows_for(split)
        .map(|row| {
            let (tile, label) = read_tile(&dir, &row.record_id, &profile)?;
            Ok((row.clone(), tile, label))
        })
        .collect()
}

/// Cleans, standardizes, pads and augments the dataset into tensor archives.
pub fn cmd_preprocess(paths: &Paths, variant: Variant, config: &FileConfig, seed: u64) -> Result<()> {
    let manifest = read_manifest(paths.manifest(variant))?;
    let prep_dir = paths.prep(variant);
    std::fs::create_dir_all(&prep_dir)?;

    // Outlier fences and normalization statistics come from the training
    // split only.
    let train_tiles = load_split_tiles(paths, variant, &manifest, Split::Train)?;
    let limits = fit_band_limits(train_tiles.iter().map(|(_, t, _)| t));

    let clean = |tile: &BandTile| -> Result<ndarray::Array3<f64>> {
        let (tile, _) = impute_outliers(tile, &limits);
        let (tile, _) = knn_fill(&tile, config.knn_k, &limits);
        Ok(concat_channels(&tile))
    };

    let train_clean: Vec<ndarray::Array3<f64>> = train_tiles
        .iter()
        .map(|(_, t, _)| clean(t))
        .collect::<Result<_>>()?;
    let stats = fit_norm_stats(train_clean.iter());
    write_norm_stats(prep_dir.join("norm.txt"), &stats)?;

    let finish = |channels: &ndarray::Array3<f64>,
                  label: &ScarLabel|
     -> Result<(ndarray::Array3<f64>, ndarray::Array2<u8>)> {
        let z = standardize(channels, &stats);
        match variant {
            Variant::As => zero_pad(&z, &label.mask),
            Variant::F128 => Ok((z, label.mask.clone())),
        }
    };

    let mut counts = Vec::new();
    for split in Split::ALL {
        let items = if split == Split::Train {
            train_tiles
                .iter()
                .zip(&train_clean)
                .map(|((row, _, label), chans)| (row.clone(), chans.clone(), label.clone()))
                .collect::<Vec<_>>()
        } else {
            load_split_tiles(paths, variant, &manifest, split)?
                .into_iter()
                .map(|(row, tile, label)| Ok((row.clone(), clean(&tile)?, label)))
                .collect::<Result<Vec<_>>>()?
        };
        let mut samples = Vec::new();
        for (row, channels, label) in items {
            let (channels, mask) = finish(&channels, &label)?;
            let sample = TensorSample {
                channels,
                label: mask,
                record_id: row.record_id.clone(),
                augmentation_tag: "orig".into(),
            };
            if split == Split::Train && config.train.augmentation_factor > 1 {
                samples.extend(augment(
                    &sample,
                    config.train.augmentation_factor,
                    seed ^ fnv1a(&row.record_id),
                )?);
            } else {
                samples.push(sample);
            }
        }
        write_archive(paths.archive(variant, split), &samples)?;
        counts.push((split, samples.len()));
    }
    let summary: Vec<String> = counts
        .iter()
        .map(|(s, n)| format!("{} {}", n, s.name()))
        .collect();
    println!(
        "preprocess[{}]: {} samples (augmentation factor {})",
        variant.name(),
        summary.join(", "),
        config.train.augmentation_factor
    );
    if !stats.degenerate.is_empty() {
        println!(
            "preprocess[{}]: warning: {} constant channels standardized to zero",
            variant.name(),
            stats.degenerate.len()
        );
    }
    Ok(())
}

/// Trains on the prepared archives and saves the best checkpoint.
pub fn cmd_train(paths: &Paths, variant: Variant, config: &TrainConfig) -> Result<()> {
    let train_set = read_archive(paths.archive(variant, Split::Train))?;
    let val_set = read_archive(paths.archive(variant, Split::Val))?;
    let outcome = train(config, &train_set, &val_set)?;
    let model_dir = paths.models(variant);
    std::fs::create_dir_all(&model_dir)?;
    outcome.model.save(model_dir.join("model.smun"))?;
    write_curves_csv(model_dir.join("curves.csv"), &outcome.history)?;
    std::fs::write(
        model_dir.join("config.json"),
        serde_json::to_string_pretty(config)
            .map_err(|e| Error::Contract(format!("config serialization: {e}")))?,
    )?;
    let best = &outcome.history[outcome.best_epoch - 1];
    println!(
        "train[{}]: best epoch {} of {}, train loss {:.4}, val loss {:.4}, val DC {}",
        variant.name(),
        outcome.best_epoch,
        config.epochs,
        best.train_loss,
        best.val_loss,
        best.val_dice.map_or_else(|| "undefined".into(), |d| format!("{d:.4}")),
    );
    Ok(())
}

fn load_model(paths: &Paths, variant: Variant) -> Result<(UNet, TrainConfig)> {
    let model_dir = paths.models(variant);
    let config_path = model_dir.join("config.json");
    if !config_path.exists() {
        return Err(Error::MissingArtifact(config_path.display().to_string()));
    }
    let config: TrainConfig = serde_json::from_str(&std::fs::read_to_string(&config_path)?)
        .map_err(|e| Error::format(config_path.display().to_string(), e.to_string()))?;
    let net = UNet::load(
        model_dir.join("model.smun"),
        UNetConfig::new(NUM_CHANNELS, config.initial_filters),
    )?;
    Ok((net, config))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

/// Evaluates the saved checkpoint on the test archive.
pub fn cmd_evaluate(paths: &Paths, variant: Variant) -> Result<()> {
    let (net, _) = load_model(paths, variant)?;
    let test_set = read_archive(paths.archive(variant, Split::Test))?;
    let report = evaluate(&net, &test_set)?;
    let report_dir = paths.reports(variant);
    std::fs::create_dir_all(&report_dir)?;
    write_report_csv(report_dir.join("report.csv"), &report)?;
    write_report_json(report_dir.join("report.json"), &report)?;
    println!(
        "evaluate[{}]: {} tiles, macro DC {} / micro DC {}, OE {}, CE {} (of-detected {})",
        variant.name(),
        report.tiles.len(),
        fmt_opt(report.macro_dice),
        fmt_opt(report.micro_dice),
        fmt_opt(report.macro_omission),
        fmt_opt(report.macro_commission),
        fmt_opt(
            report
                .tiles
                .iter()
                .filter_map(|t| t.commission_of_detected)
                .fold(None, |acc: Option<(f64, usize)>, v| Some(match acc {
                    Some((s, n)) => (s + v, n + 1),
                    None => (v, 1),
                }))
                .map(|(s, n)| s / n as f64)
        ),
    );
    if !report.commission_over_one.is_empty() {
        println!(
            "evaluate[{}]: commission > 1 on: {}",
            variant.name(),
            report.commission_over_one.join(", ")
        );
    }
    Ok(())
}

/// Writes the band/area diagnostic tables and the run plots.
pub fn cmd_report(paths: &Paths, variant: Variant) -> Result<()> {
    let report_dir = paths.reports(variant);
    let report_path = report_dir.join("report.json");
    if !report_path.exists() {
        return Err(Error::MissingArtifact(report_path.display().to_string()));
    }
    let report: MetricsReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)
        .map_err(|e| Error::format(report_path.display().to_string(), e.to_string()))?;
    let curves = read_curves_csv(paths.models(variant).join("curves.csv"))?;

    // Band analysis joins unstandardized crop imagery with per-tile Dice.
    let manifest = read_manifest(paths.manifest(variant))?;
    let test_tiles = load_split_tiles(paths, variant, &manifest, Split::Test)?;
    let dice_by_id: BTreeMap<&str, Option<f64>> = report
        .tiles
        .iter()
        .map(|t| (t.record_id.as_str(), t.dice))
        .collect();
    let tiles: Vec<BandTile> = test_tiles.iter().map(|(_, t, _)| t.clone()).collect();
    let labels: Vec<ScarLabel> = test_tiles.iter().map(|(_, _, l)| l.clone()).collect();
    let dice: Vec<Option<f64>> = test_tiles
        .iter()
        .map(|(row, _, _)| dice_by_id.get(row.record_id.as_str()).copied().flatten())
        .collect();
    let band = band_dc_analysis(&tiles, &labels, &dice)?;
    let area = area_dc_analysis(&report);
    write_band_analysis_csv(report_dir.join("band_dc.csv"), &band)?;
    write_area_analysis_csv(report_dir.join("area_dc.csv"), &area)?;

    // Loss curves: train (blue) and validation (orange).
    let train_pts: Vec<(f64, f64)> = curves.iter().map(|r| (r.epoch as f64, r.train_loss)).collect();
    let val_pts: Vec<(f64, f64)> = curves.iter().map(|r| (r.epoch as f64, r.val_loss)).collect();
    plot::render(
        report_dir.join("loss_curves.png"),
        &[
            Series { points: &train_pts, color: BLUE, line: true },
            Series { points: &val_pts, color: ORANGE, line: true },
        ],
    )?;
    let dice_pts: Vec<(f64, f64)> = curves
        .iter()
        .filter_map(|r| r.val_dice.map(|d| (r.epoch as f64, d)))
        .collect();
    plot::render(
        report_dir.join("val_dice.png"),
        &[Series { points: &dice_pts, color: GREEN, line: true }],
    )?;
    let area_pts: Vec<(f64, f64)> = area
        .rows
        .iter()
        .filter_map(|r| r.dice.map(|d| (r.burned_fraction, d)))
        .collect();
    plot::render(
        report_dir.join("area_dc.png"),
        &[Series { points: &area_pts, color: BLUE, line: false }],
    )?;
    // Band scatter: post-fire NBR mean over burned pixels vs Dice.
    let band_pts: Vec<(f64, f64)> = band
        .rows
        .iter()
        .filter_map(|r| r.dice.map(|d| (r.post_means[BAND_NBR], d)))
        .collect();
    plot::render(
        report_dir.join("band_dc.png"),
        &[Series { points: &band_pts, color: ORANGE, line: false }],
    )?;
    println!(
        "report[{}]: {} band rows ({} excluded), area correlation {:.3}{} -> {}",
        variant.name(),
        band.rows.len(),
        band.excluded,
        area.burned_fraction_dice_correlation,
        if area.correlation_defined { "" } else { " (undefined)" },
        report_dir.display()
    );
    // Quartile contrast per band, pre then post.
    for (p, name) in ["pre", "post"].iter().enumerate() {
        let deltas: Vec<String> = (0..NUM_BANDS)
            .map(|b| format!("{:+.3}", band.quartile_delta[p][b]))
            .collect();
        println!("  {name} high-low DC quartile deltas: {}", deltas.join(" "));
    }
    Ok(())
}

/// Runs a hyperparameter grid on the prepared train/val archives.
pub fn cmd_hpo(paths: &Paths, variant: Variant, grid_path: Option<&Path>, seed: u64) -> Result<()> {
    let grid = match grid_path {
        Some(p) => read_grid(p)?,
        None => default_grid(),
    };
    let train_set = read_archive(paths.archive(variant, Split::Train))?;
    let val_set = read_archive(paths.archive(variant, Split::Val))?;
    let outcome = run_grid(&grid, seed, &train_set, &val_set)?;
    let hpo_dir = paths.hpo(variant);
    std::fs::create_dir_all(&hpo_dir)?;
    write_results_csv(hpo_dir.join("results.csv"), &outcome)?;
    println!("hpo[{}]: {} rows", variant.name(), outcome.results.len());
    for (rank, &i) in outcome.ranking.iter().enumerate() {
        let r = &outcome.results[i];
        println!(
            "  {}. {} (lr={} batch={} filters={}): {}{}",
            rank + 1,
            r.name,
            r.learning_rate,
            r.batch_size,
            r.initial_filters,
            r.val_dice.map_or_else(|| "failed".into(), |d| format!("val DC {d:.4}")),
            r.error.as_ref().map_or(String::new(), |e| format!(" [{e}]")),
        );
    }
    Ok(())
}
