//! Acceptance gate: one test per release criterion, each printing a
//! PASS line (visible with `--nocapture`) once its checks hold.

use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scarmap::dataset::{
    filter_distant_components, label_components, make_crop, stratified_split, PadSpec, Split,
    Variant, DEFAULT_STRATA, DISTANCE_THRESHOLD_M, TILE_SIZE,
};
use scarmap::hpo::{default_grid, run_grid, HpoGrid, HpoRow};
use scarmap::metrics::{bce_grad, bce_loss, Confusion};
use scarmap::preprocess::{
    concat_channels, fit_band_limits, fit_norm_stats, impute_outliers, knn_fill, standardize,
    zero_pad, BandLimits, TensorSample, NUM_CHANNELS,
};
use scarmap::raster::{
    compute_nbr, compute_ndvi, compute_rdnbr, BandTile, FireRecord, NbrScale, Phase, PixelRect,
    Region, ScarLabel, NUM_BANDS, NUM_RAW_BANDS,
};
use scarmap::synth::{generate, inject_defects, DefectKind, DefectRates, SynthSpec};
use scarmap::train::{argmin_val_loss, evaluate, train, TrainConfig};
use scarmap::unet::{UNet, UNetConfig};

fn pass(name: &str) {
    println!("[ACCEPTANCE] {name}: PASS");
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> Array2<u8> {
    Array2::from_shape_fn((h, w), |_| u8::from(rng.gen_bool(p)))
}

#[test]
fn metric_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..10_000 {
        let pred = random_mask(&mut rng, 16, 16, 0.5);
        let truth = random_mask(&mut rng, 16, 16, 0.5);
        let conf = Confusion::from_masks(&pred, &truth).unwrap();

        // Pixel-loop oracle, metrics recomputed from first principles.
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for r in 0..16 {
            for c in 0..16 {
                match (pred[[r, c]], truth[[r, c]]) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 1) => fn_ += 1,
                    _ => tn += 1,
                }
            }
        }
        assert_eq!((conf.tp, conf.fp, conf.fn_, conf.tn), (tp, fp, fn_, tn));
        let dice = (2 * tp + fp + fn_ > 0)
            .then(|| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
        let omission = (tp + fn_ > 0).then(|| fn_ as f64 / (tp + fn_) as f64);
        let commission = (tp + fn_ > 0).then(|| fp as f64 / (tp + fn_) as f64);
        assert_eq!(conf.dice(), dice);
        assert_eq!(conf.omission(), omission);
        assert_eq!(conf.commission(), commission);
    }
    assert!(start.elapsed().as_secs() < 30, "metric oracle too slow");
    pass("metric oracle equivalence (10k pairs)");
}

#[test]
fn index_formula_spot_checks() {
    let one = |v: f64| Array2::from_elem((1, 1), v);
    let ndvi = compute_ndvi(&one(0.6), &one(0.2)).unwrap();
    assert!((ndvi[[0, 0]] - 0.5).abs() < 1e-9);
    let nbr = compute_nbr(&one(0.45), &one(0.15)).unwrap();
    assert!((nbr[[0, 0]] - 0.5).abs() < 1e-9);
    let nbr_neg = compute_nbr(&one(0.1), &one(0.3)).unwrap();
    assert!((nbr_neg[[0, 0]] + 0.5).abs() < 1e-9);

    let scale = NbrScale::Thousandths;
    let r1 = compute_rdnbr(&one(1000.0), &one(0.0), scale).unwrap();
    assert!((r1[[0, 0]] - 1000.0).abs() < 1e-9);
    let r2 = compute_rdnbr(&one(250.0), &one(-250.0), scale).unwrap();
    assert!((r2[[0, 0]] - 1000.0).abs() < 1e-9);

    // Identical pre/post NBR gives exactly zero, including at pre = 0.
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..1000 {
        let x = one(rng.gen_range(-1000.0..1000.0));
        let r = compute_rdnbr(&x, &x, scale).unwrap();
        assert_eq!(r[[0, 0]], 0.0);
    }
    pass("index formula spot checks");
}

fn record(id: &str, bbox: PixelRect) -> FireRecord {
    FireRecord {
        record_id: id.to_string(),
        region: Region::Synthetic,
        fire_date: "2017-01-15".to_string(),
        centroid: (0.0, 0.0),
        scar_bbox: bbox,
        burned_pixel_count: bbox.area(),
    }
}

#[test]
fn crop_and_pad_geometry() {
    // 40x60 content pads to (44, 44, 34, 34) and lands on rows 44..=83,
    // cols 34..=93 of the 128x128 canvas.
    let rec = record("geom", PixelRect::new(10, 10, 40, 60));
    let crop = make_crop(&rec, Variant::As, (200, 200)).unwrap();
    assert_eq!(
        crop.pad_needed,
        PadSpec { top: 44, bottom: 44, left: 34, right: 34 }
    );
    let channels = Array3::from_elem((NUM_CHANNELS, 40, 60), 1.0);
    let label = Array2::from_elem((40, 60), 1u8);
    let (padded, padded_label) = zero_pad(&channels, &label).unwrap();
    assert_eq!(padded.dim(), (NUM_CHANNELS, TILE_SIZE, TILE_SIZE));
    for ((_, r, c), &v) in padded.indexed_iter() {
        let inside = (44..84).contains(&r) && (34..94).contains(&c);
        assert_eq!(v != 0.0, inside, "padded value misplaced at ({r},{c})");
    }
    assert_eq!(
        padded_label.iter().map(|&v| v as usize).sum::<usize>(),
        40 * 60
    );

    // The fixed 128x128 window always contains the bounding-box crop.
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for i in 0..1000 {
        let h = rng.gen_range(1..128);
        let w = rng.gen_range(1..128);
        let row0 = rng.gen_range(0..=400 - h);
        let col0 = rng.gen_range(0..=400 - w);
        let rec = record(&format!("r{i}"), PixelRect::new(row0, col0, h, w));
        let as_crop = make_crop(&rec, Variant::As, (400, 400)).unwrap();
        let f128_crop = make_crop(&rec, Variant::F128, (400, 400)).unwrap();
        assert_eq!(f128_crop.crop_rect.height, TILE_SIZE);
        assert_eq!(f128_crop.crop_rect.width, TILE_SIZE);
        assert!(
            f128_crop.crop_rect.contains(&as_crop.crop_rect),
            "window {:?} must contain bbox {:?}",
            f128_crop.crop_rect,
            as_crop.crop_rect
        );
    }
    pass("crop and pad geometry");
}

/// Independent flood-fill labeling used only as an oracle.
fn oracle_components(mask: &Array2<u8>) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = mask.dim();
    let mut seen = Array2::<bool>::from_elem((h, w), false);
    let mut comps = Vec::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if mask[[r0, c0]] != 1 || seen[[r0, c0]] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(r0, c0)];
            seen[[r0, c0]] = true;
            while let Some((r, c)) = stack.pop() {
                comp.push((r, c));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if mask[[nr, nc]] == 1 && !seen[[nr, nc]] {
                            seen[[nr, nc]] = true;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

#[test]
fn distant_component_filter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (h, w) = (64usize, 64usize);
    let pixel_size = 30.0;
    for _ in 0..200 {
        // A handful of random discs; overlaps merging is fine.
        let mut mask = Array2::<u8>::zeros((h, w));
        for _ in 0..rng.gen_range(2..=6) {
            let cr = rng.gen_range(0..h) as i64;
            let cc = rng.gen_range(0..w) as i64;
            let rad = rng.gen_range(1..=4i64);
            for r in (cr - rad).max(0)..=(cr + rad).min(h as i64 - 1) {
                for c in (cc - rad).max(0)..=(cc + rad).min(w as i64 - 1) {
                    if (r - cr).pow(2) + (c - cc).pow(2) <= rad * rad {
                        mask[[r as usize, c as usize]] = 1;
                    }
                }
            }
        }
        let label = ScarLabel::new(mask.clone()).unwrap();
        let filtered = filter_distant_components(&label, pixel_size);

        // Oracle: full pairwise pixel distances, no early exits.
        let comps = oracle_components(&mask);
        let center = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let center_d2 = |comp: &[(usize, usize)]| {
            comp.iter()
                .map(|&(r, c)| {
                    (r as f64 - center.0).powi(2) + (c as f64 - center.1).powi(2)
                })
                .fold(f64::INFINITY, f64::min)
        };
        let central = (0..comps.len())
            .min_by(|&a, &b| {
                center_d2(&comps[a])
                    .partial_cmp(&center_d2(&comps[b]))
                    .unwrap()
                    .then(comps[b].len().cmp(&comps[a].len()))
                    .then(a.cmp(&b))
            })
            .unwrap();
        let limit2 = (DISTANCE_THRESHOLD_M / pixel_size).powi(2);
        let mut expected = mask.clone();
        for (i, comp) in comps.iter().enumerate() {
            if i == central {
                continue;
            }
            let mut best = f64::INFINITY;
            for &(r1, c1) in comp {
                for &(r2, c2) in &comps[central] {
                    let d2 = (r1 as f64 - r2 as f64).powi(2) + (c1 as f64 - c2 as f64).powi(2);
                    best = best.min(d2);
                }
            }
            if best > limit2 {
                for &(r, c) in comp {
                    expected[[r, c]] = 0;
                }
            }
        }
        assert_eq!(filtered.label.mask, expected);
        // Sanity: both agree on the component count too.
        let (_, n_after) = label_components(&filtered.label.mask);
        assert_eq!(n_after, oracle_components(&filtered.label.mask).len());
    }
    pass("distant-component filter matches pairwise oracle (200 masks)");
}

/// Physically valid ranges: reflectances in [0, 1], indices in [-1, 1].
fn physical_limits(means: &BandLimits) -> BandLimits {
    let mut limits = means.clone();
    for p in 0..2 {
        for b in 0..NUM_BANDS {
            if b < NUM_RAW_BANDS {
                limits.lower[p][b] = 0.0;
                limits.upper[p][b] = 1.0;
            } else {
                limits.lower[p][b] = -1.0;
                limits.upper[p][b] = 1.0;
            }
        }
    }
    limits
}

#[test]
fn preprocessing_repairs_defects_and_standardizes() {
    let spec = SynthSpec {
        tile_count: 8,
        height: 64,
        width: 64,
        burned_fraction: 0.25,
        seed: 105,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let clean: Vec<BandTile> = corpus.iter().map(|t| t.tile.clone()).collect();
    let (damaged, defects) =
        inject_defects(&clean, &DefectRates::uniform(0.01), 106).unwrap();
    assert!(!defects.is_empty());

    let limits = physical_limits(&fit_band_limits(damaged.iter()));
    let mut repaired = Vec::new();
    for tile in &damaged {
        let (tile, _) = impute_outliers(tile, &limits);
        let (tile, _) = knn_fill(&tile, 8, &limits);
        repaired.push(tile);
    }

    for (tile, original) in repaired.iter().zip(&clean) {
        for phase in Phase::ALL {
            let bands = tile.bands(phase);
            let (_, h, w) = bands.dim();
            for r in 0..h {
                for c in 0..w {
                    let mut zero_pixel = true;
                    for b in 0..NUM_BANDS {
                        let v = bands[[b, r, c]];
                        assert!(v.is_finite(), "NaN left at {phase:?} b{b} ({r},{c})");
                        assert!(
                            v >= limits.lower[phase.index()][b]
                                && v <= limits.upper[phase.index()][b],
                            "out-of-range value {v} left at {phase:?} b{b} ({r},{c})"
                        );
                        if b < NUM_RAW_BANDS && v != 0.0 {
                            zero_pixel = false;
                        }
                    }
                    assert!(!zero_pixel, "zeroed pixel left at {phase:?} ({r},{c})");
                    // Pixels without an injected defect are bit-unchanged;
                    // index bands share the pixel's fate via recomputation.
                    let dirty = defects.iter().any(|d| {
                        d.record_id == tile.record_id
                            && d.phase == phase
                            && d.row == r
                            && d.col == c
                    });
                    if !dirty {
                        for b in 0..NUM_BANDS {
                            assert_eq!(
                                bands[[b, r, c]].to_bits(),
                                original.bands(phase)[[b, r, c]].to_bits(),
                                "clean pixel altered at {phase:?} b{b} ({r},{c})"
                            );
                        }
                    }
                }
            }
        }
    }
    // Every injected defect kind showed up.
    for kind in [DefectKind::OutOfRange, DefectKind::Invalid, DefectKind::ZeroPixel] {
        assert!(defects.iter().any(|d| d.kind == kind));
    }

    // Standardized training channels: per-channel mean 0 and std 1.
    let channels: Vec<Array3<f64>> = repaired.iter().map(concat_channels).collect();
    let stats = fit_norm_stats(channels.iter());
    assert!(stats.degenerate.is_empty());
    let standardized: Vec<Array3<f64>> =
        channels.iter().map(|c| standardize(c, &stats)).collect();
    for ch in 0..NUM_CHANNELS {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for z in &standardized {
            for r in 0..64 {
                for c in 0..64 {
                    let v = z[[ch, r, c]];
                    sum += v;
                    sum_sq += v * v;
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
        assert!((std - 1.0).abs() < 1e-6, "channel {ch} std {std}");
    }
    pass("preprocessing repairs 1% defects and standardizes the training split");
}

#[test]
fn architecture_width_shape_and_gradient() {
    let start = Instant::now();
    for f in [8usize, 32, 128, 160] {
        let widths = UNetConfig::new(NUM_CHANNELS, f).widths();
        assert_eq!(widths[3], 8 * f, "deepest width for f={f}");
    }

    let net8 = UNet::new(UNetConfig::new(NUM_CHANNELS, 8), 107);
    let x = Array3::from_elem((NUM_CHANNELS, 128, 128), 0.1);
    assert_eq!(net8.forward(&x).unwrap().dim(), (1, 128, 128));

    // BCE gradient vs central finite differences on an f=4 model.
    let mut net = UNet::new(UNetConfig::new(NUM_CHANNELS, 4), 108);
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let x = Array3::from_shape_fn((NUM_CHANNELS, 16, 16), |_| rng.gen_range(-1.0..1.0));
    let label = random_mask(&mut rng, 16, 16, 0.4);

    let cache = net.forward_cached(&x).unwrap();
    let grads = net.backward(&cache, &bce_grad(&cache.probs, &label).unwrap());

    let n_layers = net.layers().count();
    let h = 1e-5;
    for layer in 0..n_layers {
        let n_weights = grads.0[layer].weight.len();
        for probe in [0, n_weights / 2, n_weights - 1] {
            let analytic = grads.0[layer].weight.iter().nth(probe).copied().unwrap();
            let mut eval_at = |delta: f64| -> f64 {
                *net.convs_mut()[layer].weight.iter_mut().nth(probe).unwrap() += delta;
                let loss = bce_loss(&net.forward(&x).unwrap(), &label).unwrap();
                *net.convs_mut()[layer].weight.iter_mut().nth(probe).unwrap() -= delta;
                loss
            };
            let fd = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            let denom = fd.abs().max(analytic.abs());
            assert!(
                (fd - analytic).abs() <= 1e-3 * denom + 1e-9,
                "layer {layer} weight {probe}: fd {fd} vs analytic {analytic}"
            );
        }
        let analytic = grads.0[layer].bias[0];
        let mut eval_at = |delta: f64| -> f64 {
            net.convs_mut()[layer].bias[0] += delta;
            let loss = bce_loss(&net.forward(&x).unwrap(), &label).unwrap();
            net.convs_mut()[layer].bias[0] -= delta;
            loss
        };
        let fd = (eval_at(h) - eval_at(-h)) / (2.0 * h);
        let denom = fd.abs().max(analytic.abs());
        assert!(
            (fd - analytic).abs() <= 1e-3 * denom + 1e-9,
            "layer {layer} bias: fd {fd} vs analytic {analytic}"
        );
    }
    assert!(start.elapsed().as_secs() < 120, "architecture checks too slow");
    pass("architecture widths, forward shape and gradient check");
}

/// Generates a synthetic corpus, splits it, crops per variant, standardizes
/// on the training split, trains f=8 for 10 epochs and returns the held-out
/// micro Dice.
fn synthetic_run(burned_fraction: f64, variant: Variant, seed: u64) -> f64 {
    let spec = SynthSpec {
        tile_count: 120,
        height: 128,
        width: 128,
        burned_fraction,
        seed,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let records: Vec<FireRecord> = corpus.iter().map(|t| t.record.clone()).collect();
    let (assignments, _) = stratified_split(&records, seed, DEFAULT_STRATA);

    let mut raw: Vec<(Split, String, Array3<f64>, Array2<u8>)> = Vec::new();
    for a in &assignments {
        let item = corpus
            .iter()
            .find(|t| t.record.record_id == a.record_id)
            .unwrap();
        let crop = make_crop(&item.record, variant, (128, 128)).unwrap();
        let tile = item.tile.crop(&crop.crop_rect).unwrap();
        let label = item.label.crop(&crop.crop_rect).unwrap();
        raw.push((a.split, a.record_id.clone(), concat_channels(&tile), label.mask));
    }
    let stats = fit_norm_stats(
        raw.iter()
            .filter(|(s, ..)| *s == Split::Train)
            .map(|(_, _, c, _)| c),
    );

    let mut sets: [Vec<TensorSample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (split, id, channels, mask) in &raw {
        let z = standardize(channels, &stats);
        let (channels, label) = match variant {
            Variant::As => zero_pad(&z, mask).unwrap(),
            Variant::F128 => (z, mask.clone()),
        };
        let idx = Split::ALL.iter().position(|s| s == split).unwrap();
        sets[idx].push(TensorSample {
            channels,
            label,
            record_id: id.clone(),
            augmentation_tag: "orig".to_string(),
        });
    }

    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        epochs: 10,
        initial_filters: 8,
        augmentation_factor: 1,
        seed,
    };
    let outcome = train(&config, &sets[0], &sets[1]).unwrap();
    let report = evaluate(&outcome.model, &sets[2]).unwrap();
    report.micro_dice.expect("held-out split has burned pixels")
}

#[test]
fn end_to_end_synthetic_training() {
    let start = Instant::now();
    let balanced = synthetic_run(0.33, Variant::As, 110);
    assert!(
        start.elapsed().as_secs() < 1200,
        "balanced run exceeded 20 minutes"
    );
    assert!(balanced >= 0.80, "balanced test Dice {balanced} below 0.80");

    let imbalanced = synthetic_run(0.034, Variant::F128, 110);
    assert!(
        imbalanced <= balanced + 0.02,
        "imbalanced Dice {imbalanced} should not beat balanced {balanced} by more than 0.02"
    );
    pass(&format!(
        "end-to-end synthetic training (balanced DC {balanced:.3}, imbalanced DC {imbalanced:.3})"
    ));
}

#[test]
fn stratified_split_proportions() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut records = Vec::new();
        for (ri, region) in [Region::Valparaiso, Region::Biobio].into_iter().enumerate() {
            let n = rng.gen_range(40..=80);
            for i in 0..n {
                let mut rec = record(
                    &format!("r{ri}_{i}"),
                    PixelRect::new(0, 0, rng.gen_range(5..100), rng.gen_range(5..100)),
                );
                rec.region = region;
                rec.burned_pixel_count = rng.gen_range(10..5000);
                records.push(rec);
            }
        }
        let (assignments, _) = stratified_split(&records, seed, DEFAULT_STRATA);
        assert_eq!(assignments.len(), records.len());

        let mut counts: std::collections::BTreeMap<(Region, usize), [usize; 3]> =
            std::collections::BTreeMap::new();
        for a in &assignments {
            let entry = counts.entry((a.region, a.stratum)).or_default();
            let idx = Split::ALL.iter().position(|s| *s == a.split).unwrap();
            entry[idx] += 1;
        }
        for ((region, stratum), by_split) in counts {
            let n = by_split.iter().sum::<usize>() as f64;
            for (idx, frac) in [0.7, 0.2, 0.1].into_iter().enumerate() {
                let dev = (by_split[idx] as f64 - frac * n).abs();
                assert!(
                    dev <= 1.0,
                    "seed {seed} {region:?} stratum {stratum}: split {idx} off by {dev:.2}"
                );
            }
        }
    }
    pass("stratified split proportions within one record per stratum (100 seeds)");
}

fn desk_sample(rng: &mut ChaCha8Rng, id: usize) -> TensorSample {
    let label = random_mask(rng, 16, 16, 0.4);
    let mut channels = Array3::from_shape_fn((NUM_CHANNELS, 16, 16), |_| {
        rng.gen_range(-0.1..0.1)
    });
    for r in 0..16 {
        for c in 0..16 {
            channels[[0, r, c]] += if label[[r, c]] == 1 { 2.0 } else { -2.0 };
        }
    }
    TensorSample {
        channels,
        label,
        record_id: format!("desk_{id}"),
        augmentation_tag: "orig".to_string(),
    }
}

#[test]
fn hpo_grid_shape_and_determinism() {
    let grid = default_grid();
    grid.validate().unwrap();
    assert_eq!(grid.rows().len(), 7);

    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let train_set: Vec<TensorSample> = (0..6).map(|i| desk_sample(&mut rng, i)).collect();
    let val_set: Vec<TensorSample> = (6..9).map(|i| desk_sample(&mut rng, i)).collect();

    let base = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 3,
        epochs: 2,
        initial_filters: 2,
        augmentation_factor: 1,
        seed: 0,
    };
    let desk = HpoGrid {
        baseline: HpoRow { name: "base".to_string(), config: base },
        variations: vec![HpoRow {
            name: "wide".to_string(),
            config: TrainConfig { initial_filters: 4, ..base },
        }],
    };
    let first = run_grid(&desk, 5, &train_set, &val_set).unwrap();
    let second = run_grid(&desk, 5, &train_set, &val_set).unwrap();
    assert_eq!(first.results.len(), 2);
    assert_eq!(first.ranking, second.ranking);
    for (a, b) in first.results.iter().zip(&second.results) {
        assert_eq!(a.val_dice.map(f64::to_bits), b.val_dice.map(f64::to_bits));
        assert_eq!(a.best_epoch, b.best_epoch);
    }
    assert!(first.results.iter().all(|r| r.error.is_none()));
    pass("HPO grid shape and desk-scale determinism");
}

#[test]
fn best_epoch_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    for _ in 0..50 {
        let len = rng.gen_range(1..=40);
        let losses: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..2.0)).collect();
        let best = argmin_val_loss(&losses).unwrap();
        let mut oracle = 0;
        for (i, &v) in losses.iter().enumerate() {
            if v < losses[oracle] {
                oracle = i;
            }
        }
        assert_eq!(best, oracle);
    }
    assert_eq!(argmin_val_loss(&[] as &[f64]), None);
    pass("best-epoch selection equals val-loss argmin (50 curves)");
}
