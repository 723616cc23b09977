//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Oracles live in the `oracle` module below and are written independently
//! of the library code paths they check.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use modmix::coco::{CocoCategory, CocoDetRecord, CocoDocument};
use modmix::dataset::{
    self, AugmentationPolicy, BuildConfig, CategorySet, CppmPlan, FrameAnnotation, LabeledBox,
    ModalityPlan,
};
use modmix::dhs;
use modmix::eval::{self, EvalOptions, COCO_THRESHOLDS};
use modmix::geometry::{box_iou, BoundingBox, OrganizedPointCloud, RgbImage};
use modmix::mixing::{self, Label, Neighborhood};

fn random_cloud(rng: &mut ChaCha8Rng, max_dim: usize, missing_p: f64) -> OrganizedPointCloud {
    let w = rng.gen_range(1..=max_dim);
    let h = rng.gen_range(1..=max_dim);
    let points = (0..w * h)
        .map(|_| {
            if rng.gen::<f64>() < missing_p {
                None
            } else {
                Some([
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                ])
            }
        })
        .collect();
    OrganizedPointCloud::new(w, h, points).unwrap()
}

#[test]
fn c1_dhs_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD45);
    let mut high_missing = 0usize;
    for i in 0..1000 {
        // sweep the missing rate so a good share of clouds lose >= 30%
        let missing_p = f64::from(i % 8) / 10.0;
        let cloud = random_cloud(&mut rng, 16, missing_p);
        let present = cloud.present_count();
        if !cloud.points().is_empty() && present * 10 <= cloud.points().len() * 7 {
            high_missing += 1;
        }
        let got = dhs::encode_dhs(&cloud);
        let want = oracle::encode_dhs(&cloud);
        assert_eq!(got.valid, want.valid, "validity mismatch, cloud {i}");
        for px in 0..got.valid.len() {
            assert!(
                (got.d[px] - want.d[px]).abs() <= 1e-9
                    && (got.h[px] - want.h[px]).abs() <= 1e-9
                    && (got.s[px] - want.s[px]).abs() <= 1e-9,
                "cloud {i}, pixel {px}: ({}, {}, {}) vs ({}, {}, {})",
                got.d[px],
                got.h[px],
                got.s[px],
                want.d[px],
                want.h[px],
                want.s[px],
            );
        }
    }
    assert!(high_missing >= 300, "only {high_missing} clouds had >=30% missing");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS c1 dhs-oracle-equivalence (1000 clouds, {elapsed:?})");
}

#[test]
fn c2_signed_angle_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A);
    for case in 0..10_000 {
        let pts: Vec<[f64; 3]> = (0..3)
            .map(|_| {
                [
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                ]
            })
            .collect();
        let cloud =
            OrganizedPointCloud::new(3, 1, pts.iter().map(|p| Some(*p)).collect()).unwrap();
        let channel = dhs::signed_angle_channel(&cloud);
        let want = oracle::signed_angle(pts[0], pts[1], pts[2]);
        match want {
            None => assert!(!channel.valid[1], "case {case}"),
            Some(expected) => {
                assert!(channel.valid[1], "case {case}");
                assert!(
                    (channel.values[1] - expected).abs() <= 1e-6,
                    "case {case}: {} vs {expected}",
                    channel.values[1]
                );
            }
        }
    }

    // exactly perpendicular difference vectors built from integer coordinates
    let mut zeros = 0;
    for case in 0..1000 {
        let a = f64::from(rng.gen_range(-4i32..=4));
        let b = f64::from(rng.gen_range(-4i32..=4));
        let c = f64::from(rng.gen_range(-4i32..=4));
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let p0 = [0.0, 0.0, 0.0];
        let p1 = [a, b, c];
        // d1 = (b, -a, 0) is orthogonal to d0 = (a, b, c) exactly
        let p2 = [a + b, b - a, c];
        let cloud = OrganizedPointCloud::new(3, 1, vec![Some(p0), Some(p1), Some(p2)]).unwrap();
        let channel = dhs::signed_angle_channel(&cloud);
        assert!(channel.valid[1], "case {case}");
        assert_eq!(channel.values[1], 0.0, "case {case}: perpendicular must be exactly zero");
        zeros += 1;
    }
    assert!(zeros > 800);
    println!("PASS c2 signed-angle-correctness (10000 triples + {zeros} perpendicular cases)");
}

#[test]
fn c3_cppm_exactness() {
    for h in 1..=64usize {
        for w in 1..=64usize {
            for patch in [1usize, 2, 3, 15] {
                let mask = mixing::cppm_mask(w, h, patch, Label::A);
                let mut a_count = 0usize;
                for r in 0..h {
                    for c in 0..w {
                        let expected = if ((r / patch) + (c / patch)) % 2 == 0 {
                            Label::A
                        } else {
                            Label::B
                        };
                        assert_eq!(mask.label(r, c), expected, "{w}x{h} patch {patch} at ({r},{c})");
                        if expected == Label::A {
                            a_count += 1;
                        }
                    }
                }
                if patch == 1 && w % 2 == 0 && h % 2 == 0 {
                    assert_eq!(a_count * 2, w * h, "{w}x{h}: patch-1 A-fraction must be 1/2");
                }
            }
        }
    }
    // the two reference layouts: 30x30 with 15px patches is a 2x2 patch
    // grid; 1px patches give the finest checkerboard
    let coarse = mixing::cppm_mask(30, 30, 15, Label::A);
    assert_eq!(mixing::mask_stats(&coarse).region_count, 4);
    let fine = mixing::cppm_mask(30, 30, 1, Label::A);
    assert_eq!(mixing::mask_stats(&fine).region_count, 900);
    println!("PASS c3 cppm-exactness (all dims <= 64, patches 1/2/3/15)");
}

#[test]
fn c4_sffm_statistics() {
    let started = Instant::now();

    let mut a_sum = 0.0;
    for seed in 0..10_000u64 {
        a_sum += mixing::sffm_mask(32, 32, 0.5, 0.5, Neighborhood::Four, seed).a_fraction();
    }
    let mean_a = a_sum / 10_000.0;
    assert!(
        (0.45..=0.55).contains(&mean_a),
        "mean A-fraction {mean_a} outside [0.45, 0.55]"
    );

    for seed in 0..10_000u64 {
        let mask = mixing::sffm_mask(32, 32, 1.0, 1.0, Neighborhood::Four, seed);
        let first = mask.cells()[0];
        assert!(
            mask.cells().iter().all(|l| *l == first),
            "seed {seed}: p=1 mask not constant"
        );
    }

    let mean_regions = |p: f64| {
        (0..1000u64)
            .map(|seed| {
                mixing::mask_stats(&mixing::sffm_mask(32, 32, p, p, Neighborhood::Four, seed))
                    .region_count as f64
            })
            .sum::<f64>()
            / 1000.0
    };
    let coarse = mean_regions(0.5);
    let fine = mean_regions(0.1);
    assert!(
        fine > coarse,
        "mean region count must grow as p drops: p=0.1 -> {fine}, p=0.5 -> {coarse}"
    );

    for seed in (0..10_000u64).step_by(37) {
        let a = mixing::sffm_mask(32, 32, 0.5, 0.5, Neighborhood::Four, seed);
        let b = mixing::sffm_mask(32, 32, 0.5, 0.5, Neighborhood::Four, seed);
        assert_eq!(a, b, "seed {seed}: repeated generation differs");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS c4 sffm-statistics (mean A {mean_a:.4}, regions {fine:.1} > {coarse:.1}, {elapsed:?})"
    );
}

#[test]
fn c5_mixing_purity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x515);
    for case in 0..1000 {
        let w = rng.gen_range(1..=16u32);
        let h = rng.gen_range(1..=16u32);
        let img_a = RgbImage::from_fn(w, h, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let img_b = RgbImage::from_fn(w, h, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let mask = if case % 2 == 0 {
            mixing::sffm_mask(
                w as usize,
                h as usize,
                rng.gen_range(0.1..=0.9),
                rng.gen_range(0.1..=0.9),
                Neighborhood::Four,
                rng.gen(),
            )
        } else {
            mixing::cppm_mask(w as usize, h as usize, rng.gen_range(1..=4), Label::A)
        };
        let out = mixing::apply_mask(&img_a, &img_b, &mask).unwrap();
        for r in 0..h {
            for c in 0..w {
                let got = out.get_pixel(c, r);
                let a = img_a.get_pixel(c, r);
                let b = img_b.get_pixel(c, r);
                assert!(got == a || got == b, "case {case}: blended pixel at ({c},{r})");
                let want = match mask.label(r as usize, c as usize) {
                    Label::A => a,
                    Label::B => b,
                };
                assert_eq!(got, want, "case {case}: wrong source at ({c},{r})");
            }
        }
    }
    println!("PASS c5 mixing-purity (1000 image pairs)");
}

#[test]
fn c6_ap_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA9);
    let categories: Vec<CocoCategory> = (1..=3)
        .map(|id| CocoCategory {
            id,
            name: format!("cat{id}"),
        })
        .collect();
    let subgroups = vec![
        eval::all_categories_subgroup(&categories),
        CategorySet::new("pair", vec!["cat1".into(), "cat2".into()]).unwrap(),
    ];
    let mut thresholds: Vec<f64> = vec![0.5, 0.75];
    thresholds.extend(COCO_THRESHOLDS);

    // direct check of the AP routine on synthetic label sequences
    for _ in 0..500 {
        let n = rng.gen_range(0..=8);
        let gt_count = rng.gen_range(0..=6);
        let mut labels: Vec<(f64, bool)> = (0..n)
            .map(|i| (1.0 - i as f64 * 0.05, rng.gen_bool(0.5)))
            .collect();
        let tp_count = labels.iter().filter(|(_, tp)| *tp).count();
        if tp_count > gt_count {
            for l in labels.iter_mut() {
                l.1 = false;
            }
        }
        let got = eval::average_precision(&labels, gt_count);
        let want = oracle::average_precision(&labels, gt_count);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => assert!((g - w).abs() <= 1e-9, "{g} vs {w}"),
            other => panic!("presence mismatch: {other:?}"),
        }
    }

    for scene in 0..500 {
        let (dets, gts) = oracle::random_scene(&mut rng);
        let report = eval::evaluate(
            &dets,
            &gts,
            &categories,
            &subgroups,
            &thresholds,
            &EvalOptions::default(),
        )
        .unwrap();
        for (sg_index, sg) in subgroups.iter().enumerate() {
            for (ti, &thr) in thresholds.iter().enumerate() {
                let want = oracle::subgroup_mean_ap(&dets, &gts, &categories, sg, thr);
                let got = report.subgroups[sg_index].map_per_threshold[ti];
                match (got, want) {
                    (None, None) => {}
                    (Some(g), Some(w)) => assert!(
                        (g - w).abs() <= 1e-9,
                        "scene {scene}, subgroup {}, thr {thr}: {g} vs {w}",
                        sg.name
                    ),
                    other => panic!(
                        "scene {scene}, subgroup {}, thr {thr}: presence mismatch {other:?}",
                        sg.name
                    ),
                }
            }
        }
        // per-category equivalence
        for cat in &report.categories {
            for (ti, &thr) in thresholds.iter().enumerate() {
                let want = oracle::category_ap(&dets, &gts, cat.id, thr);
                match (cat.ap[ti], want) {
                    (None, None) => {}
                    (Some(g), Some(w)) => {
                        assert!((g - w).abs() <= 1e-9, "cat {}, thr {thr}: {g} vs {w}", cat.id)
                    }
                    other => panic!("cat {}, thr {thr}: presence mismatch {other:?}", cat.id),
                }
            }
        }
    }

    // perfect detections give exactly 1.0
    for _ in 0..50 {
        let (_, gts) = oracle::random_scene(&mut rng);
        if gts.is_empty() {
            continue;
        }
        let mut pool: Vec<f64> = (1..=99).map(|i| f64::from(i) / 100.0).collect();
        pool.shuffle(&mut rng);
        let dets: Vec<eval::Detection> = gts
            .iter()
            .zip(&pool)
            .map(|(g, score)| eval::Detection {
                image_id: g.image_id,
                category_id: g.category_id,
                bbox: g.bbox,
                score: *score,
            })
            .collect();
        let report = eval::evaluate(
            &dets,
            &gts,
            &categories,
            &subgroups,
            &thresholds,
            &EvalOptions::default(),
        )
        .unwrap();
        for value in report.subgroups[0].map_per_threshold.iter().flatten() {
            assert_eq!(*value, 1.0, "perfect detections must give exactly 1.0");
        }
    }
    println!("PASS c6 ap-oracle-equivalence (500 scenes, {} thresholds)", thresholds.len());
}

#[test]
fn c7_dataset_build_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB111D);

    let category_set = CategorySet::sunrgbd16();
    let mut manifest = String::new();
    for i in 0..20 {
        let (w, h) = (24u32, 18u32);
        let rgb = RgbImage::from_fn(w, h, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let rgb_path = src.join(format!("f{i}.png"));
        rgb.save(&rgb_path).unwrap();

        let cloud = random_cloud_with_dims(&mut rng, w as usize, h as usize);
        let cloud_path = src.join(format!("f{i}.opc"));
        cloud.to_opc1_file(&cloud_path).unwrap();

        let ann: Vec<FrameAnnotation> = (0..rng.gen_range(1..4))
            .map(|_| FrameAnnotation {
                category: category_set.categories[rng.gen_range(0..16)].clone(),
                bbox: [
                    rng.gen_range(0.0..12.0),
                    rng.gen_range(0.0..9.0),
                    rng.gen_range(2.0..10.0),
                    rng.gen_range(2.0..8.0),
                ],
            })
            .collect();
        let ann_path = src.join(format!("f{i}.json"));
        std::fs::write(&ann_path, serde_json::to_vec(&ann).unwrap()).unwrap();

        manifest.push_str(&format!("f{i}\tf{i}.png\tf{i}.opc\tf{i}.json\n"));
    }
    let manifest_path = src.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest).unwrap();
    let frames = dataset::read_manifest(&manifest_path).unwrap();
    assert_eq!(frames.len(), 20);

    let cfg = BuildConfig {
        plan: ModalityPlan {
            rgb: true,
            dhs: true,
            cppm: Some(CppmPlan { patch_size: 1 }),
            sffm: None,
        },
        policy: AugmentationPolicy::default(),
        categories: category_set,
    };
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    let summary1 = dataset::build_dataset(&frames, &cfg, &out1).unwrap();
    let summary2 = dataset::build_dataset(&frames, &cfg, &out2).unwrap();
    assert!(summary1.failures.is_empty());
    assert_eq!(summary1.images_written, 60, "3 modalities x 20 frames");
    assert_eq!(summary2.images_written, 60);

    let tree1 = snapshot_tree(&out1);
    let tree2 = snapshot_tree(&out2);
    assert_eq!(tree1.len(), tree2.len());
    for ((name1, bytes1), (name2, bytes2)) in tree1.iter().zip(&tree2) {
        assert_eq!(name1, name2);
        assert_eq!(bytes1, bytes2, "{name1} differs between identical builds");
    }

    let doc = CocoDocument::from_file(&out1.join("annotations.json")).unwrap();
    doc.check_integrity().unwrap();
    assert_eq!(doc.images.len(), 60);

    // serialize -> parse -> evaluate must equal evaluating the parsed doc
    let dets: Vec<CocoDetRecord> = doc
        .annotations
        .iter()
        .enumerate()
        .map(|(i, ann)| CocoDetRecord {
            image_id: ann.image_id,
            category_id: ann.category_id,
            bbox: [
                ann.bbox[0] + f64::from(i as u32 % 3) * 0.4,
                ann.bbox[1],
                ann.bbox[2],
                ann.bbox[3],
            ],
            score: f64::from((i as u32 * 37 + 11) % 100) / 100.0,
        })
        .collect();
    let subgroups = vec![CategorySet::sunrgbd10(), CategorySet::sunrgbd16()];
    let opts = EvalOptions::default();
    let report1 = eval::evaluate_coco(&doc, &dets, &subgroups, &COCO_THRESHOLDS, &opts).unwrap();

    let reserialized = dir.path().join("roundtrip.json");
    doc.to_file(&reserialized).unwrap();
    let doc2 = CocoDocument::from_file(&reserialized).unwrap();
    let report2 = eval::evaluate_coco(&doc2, &dets, &subgroups, &COCO_THRESHOLDS, &opts).unwrap();
    assert_eq!(report1, report2, "round-tripped document must evaluate identically");

    println!("PASS c7 dataset-build-reproducibility (60 images, byte-identical trees)");
}

#[test]
fn c8_augmentation_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF11);
    for case in 0..1000 {
        let w = rng.gen_range(4..48u32);
        let h = rng.gen_range(4..48u32);
        let img = RgbImage::from_fn(w, h, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let boxes: Vec<LabeledBox> = (0..rng.gen_range(1..6))
            .map(|_| {
                let bw = rng.gen_range(1.0..f64::from(w));
                let bh = rng.gen_range(1.0..f64::from(h));
                LabeledBox {
                    category_id: rng.gen_range(1..5),
                    bbox: BoundingBox::new(
                        rng.gen_range(0.0..f64::from(w) - bw),
                        rng.gen_range(0.0..f64::from(h) - bh),
                        bw,
                        bh,
                    )
                    .unwrap(),
                }
            })
            .collect();
        let (img1, boxes1) = dataset::horizontal_flip(&img, &boxes);
        let (img2, boxes2) = dataset::horizontal_flip(&img1, &boxes1);
        assert_eq!(img, img2, "case {case}: image flip not an involution");
        for (a, b) in boxes.iter().zip(&boxes2) {
            assert_eq!(a.category_id, b.category_id);
            // x goes through w - x - bw twice; allow one rounding step
            assert!(
                (a.bbox.x - b.bbox.x).abs() <= 1e-9,
                "case {case}: box flip not an involution: {} vs {}",
                a.bbox.x,
                b.bbox.x
            );
            assert_eq!(a.bbox.y, b.bbox.y);
            assert_eq!(a.bbox.w, b.bbox.w);
            assert_eq!(a.bbox.h, b.bbox.h);
        }

        // resize, then compare every pairwise IoU
        let (_, scaled, scale) = dataset::resize_keep_ratio(
            &img,
            &boxes,
            rng.gen_range(16..320),
            rng.gen_range(16..240),
        );
        assert!(scale > 0.0);
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let before = box_iou(&boxes[i].bbox, &boxes[j].bbox);
                let after = box_iou(&scaled[i].bbox, &scaled[j].bbox);
                assert!(
                    (before - after).abs() <= 1e-9,
                    "case {case}: IoU drifted {before} -> {after}"
                );
            }
        }
    }
    println!("PASS c8 augmentation-contracts (1000 cases)");
}

fn random_cloud_with_dims(rng: &mut ChaCha8Rng, w: usize, h: usize) -> OrganizedPointCloud {
    let points = (0..w * h)
        .map(|_| {
            if rng.gen::<f64>() < 0.15 {
                None
            } else {
                Some([
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(0.5..6.0),
                    rng.gen_range(-1.0..3.0),
                ])
            }
        })
        .collect();
    OrganizedPointCloud::new(w, h, points).unwrap()
}

/// Sorted (relative name, bytes) listing of every file under a directory.
fn snapshot_tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &std::path::Path, root: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

mod oracle {
    use super::*;

    pub struct OracleImage {
        pub d: Vec<f64>,
        pub h: Vec<f64>,
        pub s: Vec<f64>,
        pub valid: Vec<bool>,
    }

    /// Brute-force DHS encoder: per-pixel recomputation with NaN as the
    /// "missing" marker, two scans for the min-max bounds.
    pub fn encode_dhs(cloud: &OrganizedPointCloud) -> OracleImage {
        let (w, h) = (cloud.width(), cloud.height());
        let n = w * h;
        let mut depth_raw = vec![f64::NAN; n];
        let mut height_raw = vec![f64::NAN; n];
        let mut angle_raw = vec![f64::NAN; n];

        for r in 0..h {
            for c in 0..w {
                if let Some(p) = cloud.point(r, c) {
                    depth_raw[r * w + c] = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    height_raw[r * w + c] = p[2];
                }
            }
        }
        for r in 0..h {
            for c in 0..w {
                if c == 0 || c + 1 >= w {
                    continue;
                }
                let (pm, p0, pp) = match (cloud.point(r, c - 1), cloud.point(r, c), cloud.point(r, c + 1)) {
                    (Some(a), Some(b), Some(g)) => (a, b, g),
                    _ => continue,
                };
                match signed_angle(pm, p0, pp) {
                    Some(v) => angle_raw[r * w + c] = v,
                    None => continue,
                }
            }
        }

        let bounds = |vals: &[f64]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in vals {
                if !v.is_nan() {
                    if *v < lo {
                        lo = *v;
                    }
                    if *v > hi {
                        hi = *v;
                    }
                }
            }
            (lo, hi)
        };
        let (d_lo, d_hi) = bounds(&depth_raw);
        let (h_lo, h_hi) = bounds(&height_raw);

        let min_max = |v: f64, lo: f64, hi: f64| {
            if v.is_nan() {
                return f64::NAN;
            }
            if hi == lo {
                0.5
            } else {
                (v - lo) / (hi - lo)
            }
        };

        let mut out = OracleImage {
            d: vec![0.0; n],
            h: vec![0.0; n],
            s: vec![0.0; n],
            valid: vec![false; n],
        };
        for i in 0..n {
            let dv = min_max(depth_raw[i], d_lo, d_hi);
            let hv = min_max(height_raw[i], h_lo, h_hi);
            let sv = if angle_raw[i].is_nan() {
                f64::NAN
            } else {
                ((angle_raw[i] - -180.0) / 360.0).clamp(0.0, 1.0)
            };
            if !dv.is_nan() && !hv.is_nan() && !sv.is_nan() {
                out.d[i] = dv;
                out.h[i] = hv;
                out.s[i] = sv;
                out.valid[i] = true;
            }
        }
        out
    }

    /// Direct trigonometric signed angle for one point triple.
    pub fn signed_angle(prev: [f64; 3], cur: [f64; 3], next: [f64; 3]) -> Option<f64> {
        let d1 = [next[0] - cur[0], next[1] - cur[1], next[2] - cur[2]];
        let d0 = [cur[0] - prev[0], cur[1] - prev[1], cur[2] - prev[2]];
        let n1 = (d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]).sqrt();
        let n0 = (d0[0] * d0[0] + d0[1] * d0[1] + d0[2] * d0[2]).sqrt();
        if n1 == 0.0 || n0 == 0.0 {
            return None;
        }
        let angle = (d1[2] / n1).clamp(-1.0, 1.0).acos() * 180.0 / std::f64::consts::PI;
        let orientation = d1[0] * d0[0] + d1[1] * d0[1] + d1[2] * d0[2];
        Some(if orientation > 0.0 {
            angle
        } else if orientation < 0.0 {
            -angle
        } else {
            0.0
        })
    }

    /// PR-enumeration AP: for each of the 101 recall points scan the whole
    /// curve for the best precision at recall >= r.
    pub fn average_precision(labels: &[(f64, bool)], gt_count: usize) -> Option<f64> {
        if gt_count == 0 {
            return if labels.is_empty() { None } else { Some(0.0) };
        }
        let mut curve = Vec::new(); // (recall, precision) per prefix
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (_, is_tp) in labels {
            if *is_tp {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            curve.push((tp / gt_count as f64, tp / (tp + fp)));
        }
        let mut total = 0.0;
        for r in 0..=100 {
            let r_val = f64::from(r) / 100.0;
            let mut best = 0.0f64;
            for (recall, precision) in &curve {
                if *recall >= r_val && *precision > best {
                    best = *precision;
                }
            }
            total += best;
        }
        Some(total / 101.0)
    }

    fn naive_match(
        dets: &[(usize, &eval::Detection)],
        gts: &[&eval::GroundTruthBox],
        thr: f64,
    ) -> Vec<(usize, bool)> {
        // sort copies by the documented total order
        let mut sorted: Vec<(usize, &eval::Detection)> = dets.to_vec();
        sorted.sort_by(|(_, a), (_, b)| {
            b.score
                .total_cmp(&a.score)
                .then(a.image_id.cmp(&b.image_id))
                .then(a.category_id.cmp(&b.category_id))
                .then(a.bbox.x.total_cmp(&b.bbox.x))
                .then(a.bbox.y.total_cmp(&b.bbox.y))
                .then(a.bbox.w.total_cmp(&b.bbox.w))
                .then(a.bbox.h.total_cmp(&b.bbox.h))
        });
        let mut used = vec![false; gts.len()];
        let mut out = Vec::new();
        for (orig, det) in sorted {
            let mut best_iou = -1.0;
            let mut best_gt = None;
            for (gi, gt) in gts.iter().enumerate() {
                if used[gi] {
                    continue;
                }
                let iou = box_iou(&det.bbox, &gt.bbox);
                if iou > best_iou {
                    best_iou = iou;
                    best_gt = Some(gi);
                }
            }
            if let Some(gi) = best_gt {
                if best_iou >= thr {
                    used[gi] = true;
                    out.push((orig, true));
                    continue;
                }
            }
            out.push((orig, false));
        }
        out
    }

    /// Per-category AP via naive matching and PR enumeration.
    pub fn category_ap(
        dets: &[eval::Detection],
        gts: &[eval::GroundTruthBox],
        category_id: u32,
        thr: f64,
    ) -> Option<f64> {
        let cat_dets: Vec<(usize, &eval::Detection)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.category_id == category_id)
            .collect();
        let cat_gts: Vec<&eval::GroundTruthBox> =
            gts.iter().filter(|g| g.category_id == category_id).collect();

        let mut images: Vec<u64> = cat_dets
            .iter()
            .map(|(_, d)| d.image_id)
            .chain(cat_gts.iter().map(|g| g.image_id))
            .collect();
        images.sort_unstable();
        images.dedup();

        let mut labeled: Vec<(&eval::Detection, bool)> = Vec::new();
        for image in images {
            let image_dets: Vec<(usize, &eval::Detection)> = cat_dets
                .iter()
                .filter(|(_, d)| d.image_id == image)
                .copied()
                .collect();
            let image_gts: Vec<&eval::GroundTruthBox> = cat_gts
                .iter()
                .filter(|g| g.image_id == image)
                .copied()
                .collect();
            for (orig, tp) in naive_match(&image_dets, &image_gts, thr) {
                labeled.push((&dets[orig], tp));
            }
        }
        labeled.sort_by(|(a, _), (b, _)| {
            b.score
                .total_cmp(&a.score)
                .then(a.image_id.cmp(&b.image_id))
                .then(a.category_id.cmp(&b.category_id))
                .then(a.bbox.x.total_cmp(&b.bbox.x))
                .then(a.bbox.y.total_cmp(&b.bbox.y))
                .then(a.bbox.w.total_cmp(&b.bbox.w))
                .then(a.bbox.h.total_cmp(&b.bbox.h))
        });
        let labels: Vec<(f64, bool)> = labeled.iter().map(|(d, tp)| (d.score, *tp)).collect();
        average_precision(&labels, cat_gts.len())
    }

    /// Mean AP over subgroup categories with at least one ground truth.
    pub fn subgroup_mean_ap(
        dets: &[eval::Detection],
        gts: &[eval::GroundTruthBox],
        categories: &[CocoCategory],
        subgroup: &CategorySet,
        thr: f64,
    ) -> Option<f64> {
        let mut values = Vec::new();
        for name in &subgroup.categories {
            let Some(cat) = categories.iter().find(|c| &c.name == name) else {
                continue;
            };
            let gt_count = gts.iter().filter(|g| g.category_id == cat.id).count();
            if gt_count == 0 {
                continue;
            }
            values.push(category_ap(dets, gts, cat.id, thr).unwrap_or(0.0));
        }
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// Scene with <= 5 detections, <= 5 ground truths, <= 3 categories and
    /// all-distinct scores.
    pub fn random_scene(
        rng: &mut ChaCha8Rng,
    ) -> (Vec<eval::Detection>, Vec<eval::GroundTruthBox>) {
        let n_gts = rng.gen_range(0..=5);
        let n_dets = rng.gen_range(0..=5);
        let mut gts = Vec::new();
        for _ in 0..n_gts {
            gts.push(eval::GroundTruthBox {
                image_id: rng.gen_range(0..2),
                category_id: rng.gen_range(1..=3),
                bbox: BoundingBox::new(
                    rng.gen_range(0.0..40.0),
                    rng.gen_range(0.0..40.0),
                    rng.gen_range(2.0..15.0),
                    rng.gen_range(2.0..15.0),
                )
                .unwrap(),
            });
        }
        let mut scores: Vec<f64> = (1..=99).map(|i| f64::from(i) / 100.0).collect();
        scores.shuffle(rng);
        let mut dets = Vec::new();
        for score in scores.iter().take(n_dets) {
            let bbox = if !gts.is_empty() && rng.gen_bool(0.7) {
                // jitter an existing ground truth for a varied IoU spectrum
                let gt = &gts[rng.gen_range(0..gts.len())];
                BoundingBox::new(
                    gt.bbox.x + rng.gen_range(-4.0..4.0),
                    gt.bbox.y + rng.gen_range(-4.0..4.0),
                    (gt.bbox.w + rng.gen_range(-2.0..2.0)).max(1.0),
                    (gt.bbox.h + rng.gen_range(-2.0..2.0)).max(1.0),
                )
                .unwrap()
            } else {
                BoundingBox::new(
                    rng.gen_range(0.0..40.0),
                    rng.gen_range(0.0..40.0),
                    rng.gen_range(2.0..15.0),
                    rng.gen_range(2.0..15.0),
                )
                .unwrap()
            };
            dets.push(eval::Detection {
                image_id: rng.gen_range(0..2),
                category_id: rng.gen_range(1..=3),
                bbox,
                score: *score,
            });
        }
        (dets, gts)
    }
}
