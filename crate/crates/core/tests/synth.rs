mod common;

use std::fs;
use std::path::Path;

use common::*;
use owan::rng::rng_from_seed;
use owan::synth::scene::{procedural_scene, write_scenes};
use owan::synth::*;
use proptest::prelude::*;

fn random_image(seed: u64, w: usize, h: usize) -> Image {
    let mut r = rng(seed);
    Image::new(w, h, 3, random_vec(&mut r, w * h * 3, 0.0, 1.0)).unwrap()
}

fn max_abs(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn psnr(a: &Image, b: &Image) -> f64 {
    let mse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    10.0 * (1.0 / mse).log10()
}

#[test]
fn gaussian_kernel_contracts() {
    assert_eq!(gaussian_kernel(0.0).unwrap().data(), &[1.0]);
    assert!(gaussian_kernel(-0.1).is_err());
    for sigma in [0.3, 0.5, 1.0, 1.7, 2.5, 5.0] {
        let k = gaussian_kernel(sigma).unwrap();
        assert_eq!(k.size(), 2 * (3.0 * sigma as f64).ceil() as usize + 1);
        assert!((k.sum() - 1.0).abs() < 1e-12);
        let n = k.size();
        for y in 0..n {
            for x in 0..n {
                // 90° rotation maps (x, y) to (n−1−y, x).
                assert!((k.at(x, y) - k.at(n - 1 - y, x)).abs() < 1e-15);
            }
        }
    }
    let k = gaussian_kernel(1.0).unwrap();
    let mut z = 0.0;
    for dy in -3i32..=3 {
        for dx in -3i32..=3 {
            z += (-((dx * dx + dy * dy) as f64) / 2.0).exp();
        }
    }
    assert!((k.at(3, 3) - 1.0 / z).abs() < 1e-15);
}

#[test]
fn gaussian_blur_contracts() {
    let img = random_image(1, 20, 17);
    assert_eq!(apply_gaussian_blur(&img, 0.0).unwrap(), img);
    let flat = Image::filled(23, 19, 3, 0.37);
    assert!(max_abs(&apply_gaussian_blur(&flat, 2.3).unwrap(), &flat) < 1e-12);
    let k = gaussian_kernel(2.0).unwrap();
    let want = reflect_conv_oracle(img.data(), 20, 17, 3, k.data(), k.size());
    assert!(max_rel_err(apply_gaussian_blur(&img, 2.0).unwrap().data(), &want) <= 1e-6);
}

#[test]
fn gaussian_noise_contracts() {
    let img = random_image(2, 16, 16);
    assert_eq!(apply_gaussian_noise(&img, 0.0, &mut rng_from_seed(1)).unwrap(), img);
    let a = apply_gaussian_noise(&img, 15.0, &mut rng_from_seed(4)).unwrap();
    let b = apply_gaussian_noise(&img, 15.0, &mut rng_from_seed(4)).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));

    let flat = Image::filled(1000, 1000, 1, 0.5);
    let noisy = apply_gaussian_noise(&flat, 25.0, &mut rng_from_seed(5)).unwrap();
    let d: Vec<f64> = noisy.data().iter().map(|v| v - 0.5).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    assert!((std / (25.0 / 255.0) - 1.0).abs() < 0.03, "std {std}");
}

#[test]
fn quant_table_contracts() {
    let (l, c) = jpeg_quant_tables(50).unwrap();
    assert_eq!(l, BASE_LUMA);
    assert_eq!(c, BASE_CHROMA);
    let (l, c) = jpeg_quant_tables(100).unwrap();
    assert!(l.iter().chain(&c).all(|&v| v == 1));
    let (l10, c10) = jpeg_quant_tables(10).unwrap();
    let (l90, c90) = jpeg_quant_tables(90).unwrap();
    assert!(l10.iter().zip(&l90).all(|(a, b)| a >= b));
    assert!(c10.iter().zip(&c90).all(|(a, b)| a >= b));
    // Hand-evaluated: q=10 ⇒ scale 500, base 16 ⇒ (8000+50)/100 = 80.
    assert_eq!(l10[0], 80);
    // q=1 ⇒ scale 5000, saturates at 255.
    assert_eq!(jpeg_quant_tables(1).unwrap().0[0], 255);
    assert!(jpeg_quant_tables(0).is_err());
    assert!(jpeg_quant_tables(101).is_err());
}

#[test]
fn dct_orthonormal_round_trip() {
    let mut r = rng(6);
    for _ in 0..20 {
        let v = random_vec(&mut r, 64, -128.0, 127.0);
        let block: [f64; 64] = v.clone().try_into().unwrap();
        let coefs = block_dct(&block);
        let back = block_idct(&coefs);
        assert!(back.iter().zip(&block).all(|(a, b)| (a - b).abs() < 1e-6));
        // Direct DCT-II formula.
        let a = |u: usize| if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for u in 0..8 {
            for w in 0..8 {
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * (((2 * y + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos()
                            * (((2 * x + 1) * w) as f64 * std::f64::consts::PI / 16.0).cos();
                    }
                }
                assert!((coefs[u * 8 + w] - a(u) * a(w) * s).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn jpeg_constant_and_quality_100() {
    let flat = Image::filled(19, 13, 3, 0.6);
    let out = apply_jpeg(&flat, 50).unwrap();
    let first = out.data()[..3].to_vec();
    for px in out.data().chunks(3) {
        for c in 0..3 {
            assert!((px[c] - first[c]).abs() < 1e-9);
        }
    }
    // DC rounding: ≤ q/16 levels per YCbCr plane, amplified ≤ 1.772 by the
    // colour transform.
    assert!(max_abs(&out, &flat) * 255.0 <= 16.0 / 16.0 + 1.772 * 17.0 / 16.0);

    let mut worst: f64 = 0.0;
    let mut worst_luma: f64 = 0.0;
    let luma = |i: &Image| Image::from_fn(i.width(), i.height(), 1, |x, y, _| {
        0.299 * i.get(x, y, 0) + 0.587 * i.get(x, y, 1) + 0.114 * i.get(x, y, 2)
    });
    for s in 0..10 {
        let img = procedural_scene(48, 48, s).quantize8();
        let out = apply_jpeg(&img, 100).unwrap();
        worst = worst.max(max_abs(&out, &img));
        worst_luma = worst_luma.max(max_abs(&luma(&out), &luma(&img)));
        assert!(psnr(&img, &out) > 50.0);
    }
    assert!(worst * 255.0 < 3.0, "max {worst}");
    assert!(worst_luma * 255.0 < 2.0, "luma max {worst_luma}");

    let gray = Image::filled(8, 8, 1, 0.25);
    assert!(max_abs(&apply_jpeg(&gray, 100).unwrap(), &gray) * 255.0 < 0.5);
}

#[test]
fn trajectory_contracts() {
    for (seed, len) in [(1u64, 10.0), (2, 37.5), (3, 80.0)] {
        let params = TrajectoryParams::with_len(len);
        let pts = generate_trajectory(&params, &mut rng_from_seed(seed)).unwrap();
        assert_eq!(pts.len(), 2000);
        assert!((arc_length(&pts) - len).abs() < 1e-6);
        assert_eq!(pts, generate_trajectory(&params, &mut rng_from_seed(seed)).unwrap());
    }
    let straight = TrajectoryParams {
        max_len: 1.0,
        gaussian_jitter_std: 0.0,
        impulse_probability: 0.0,
        ..TrajectoryParams::default()
    };
    let pts = generate_trajectory(&straight, &mut rng_from_seed(9)).unwrap();
    assert!((arc_length(&pts) - 1.0).abs() < 1e-9);
    let psf = trajectory_to_kernel(&pts, 3).unwrap();
    assert_eq!(psf.size(), 3);
    // A unit-length segment stays inside the 3×3 footprint with the centre
    // pixel carrying the most mass.
    let centre = psf.at(1, 1);
    assert!(psf.data().iter().all(|&v| v <= centre));
    assert!(centre > 0.25);
    assert!(generate_trajectory(&TrajectoryParams { inertia: 1.0, ..straight }, &mut rng_from_seed(1)).is_err());
}

#[test]
fn psf_contracts() {
    let one = trajectory_to_kernel(&[[3.2, -1.0]], 5).unwrap();
    let mut want = vec![0.0; 25];
    want[12] = 1.0;
    assert_eq!(one.data(), &want[..]);
    assert!(trajectory_to_kernel(&[], 5).is_err());

    let seg: Vec<[f64; 2]> = (0..9).map(|x| [x as f64, 0.0]).collect();
    let k = trajectory_to_kernel(&seg, 9).unwrap();
    assert_eq!(k.size(), 9);
    for y in 0..9 {
        for x in 0..9 {
            let want = if y == 4 { 1.0 / 9.0 } else { 0.0 };
            assert!((k.at(x, y) - want).abs() < 1e-15);
        }
    }
    // Half-pixel samples split their mass between the two neighbours:
    // interior pixels collect 1 + ½ + ½, the end pixels 1 + ½.
    let seg: Vec<[f64; 2]> = (0..17).map(|i| [i as f64 / 2.0, 0.0]).collect();
    let k = trajectory_to_kernel(&seg, 1).unwrap();
    assert_eq!(k.size(), 9);
    for x in 0..9 {
        let want = if x == 0 || x == 8 { 1.5 / 17.0 } else { 2.0 / 17.0 };
        assert!((k.at(x, 4) - want).abs() < 1e-15);
    }
    // Growth to fit long paths.
    let long: Vec<[f64; 2]> = (0..30).map(|i| [0.0, i as f64]).collect();
    assert_eq!(trajectory_to_kernel(&long, 5).unwrap().size(), 31);
}

#[test]
fn motion_blur_contracts() {
    let img = random_image(7, 21, 18);
    let mut onehot = vec![0.0; 9];
    onehot[4] = 1.0;
    let k = Kernel::new(3, onehot).unwrap();
    assert_eq!(apply_motion_blur(&img, &k).unwrap(), img);
    let pts = generate_trajectory(&TrajectoryParams::with_len(12.0), &mut rng_from_seed(8)).unwrap();
    let psf = trajectory_to_kernel(&pts, 1).unwrap();
    let flat = Image::filled(21, 18, 3, 0.81);
    assert!(max_abs(&apply_motion_blur(&flat, &psf).unwrap(), &flat) < 1e-12);
    let want = reflect_conv_oracle(img.data(), 21, 18, 3, psf.data(), psf.size());
    assert!(max_rel_err(apply_motion_blur(&img, &psf).unwrap().data(), &want) <= 1e-6);
    assert!(apply_motion_blur(&img, &Kernel::new(1, vec![0.5]).unwrap()).is_err());
}

#[test]
fn div2k_protocol_ranges() {
    for seed in 0..200 {
        let p = sample_div2k_pipeline(Severity::Moderate, seed).unwrap();
        let (b, n, q) = (p.blur_sigma().unwrap(), p.noise_sigma().unwrap(), p.jpeg_quality().unwrap());
        assert!((5.0 / 3.0..10.0 / 3.0).contains(&b));
        assert!((50.0 / 3.0..100.0 / 3.0).contains(&n));
        assert!(q > 40 && q <= 70);
        let kinds: Vec<&str> = p.stages.iter().map(|s| s.kind.label()).collect();
        assert_eq!(kinds, ["blur", "noise", "jpeg"]);
    }
    for (sev, blur, noise, q) in [
        (Severity::Mild, (0.0, 5.0 / 3.0), (0.0, 50.0 / 3.0), (71, 100)),
        (Severity::Severe, (10.0 / 3.0, 5.0), (100.0 / 3.0, 50.0), (10, 40)),
    ] {
        for seed in 0..100 {
            let p = sample_div2k_pipeline(sev, seed).unwrap();
            assert!((blur.0..blur.1).contains(&p.blur_sigma().unwrap()));
            assert!((noise.0..noise.1).contains(&p.noise_sigma().unwrap()));
            assert!((q.0..=q.1).contains(&p.jpeg_quality().unwrap()));
        }
    }
    assert!(sample_div2k_pipeline(Severity::Unclassed, 0).is_err());
    let img = procedural_scene(32, 32, 1);
    let a = synth_div2k_style(&img, Severity::Severe, &mut rng_from_seed(3)).unwrap();
    let b = synth_div2k_style(&img, Severity::Severe, &mut rng_from_seed(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn div2k_severity_orders_psnr() {
    let mut means = Vec::new();
    for sev in Severity::CLASSES {
        let mut acc = 0.0;
        for s in 0..100u64 {
            let img = procedural_scene(48, 48, 500 + s).quantize8();
            let p = sample_div2k_pipeline(sev, s).unwrap();
            let d = p.apply(&img).unwrap();
            let v = psnr(&img, &d);
            assert!(v.is_finite());
            acc += v;
        }
        means.push(acc / 100.0);
    }
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");

    for s in 0..10u64 {
        let img = procedural_scene(63, 63, 900 + s).quantize8();
        let p = PipelineSpec::from_parts(s, Severity::Mild, Some(0.0), None, Some(0.0), Some(100), false);
        assert!(psnr(&img, &p.apply(&img).unwrap()) > 35.0);
    }
}

#[test]
fn mixed_protocol_contracts() {
    let img = procedural_scene(40, 40, 2);
    let mut subsets = std::collections::BTreeSet::new();
    for seed in 0..300 {
        let p = sample_mixed_pipeline(&MixedRanges::default(), seed);
        assert!(!p.stages.is_empty());
        let kinds: Vec<&str> = p.stages.iter().map(|s| s.kind.label()).collect();
        let order = ["motion", "noise", "jpeg"];
        let pos: Vec<usize> = kinds.iter().map(|k| order.iter().position(|o| o == k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        subsets.insert(kinds.join("+"));
        if let Some(n) = p.noise_sigma() {
            assert!((10.0..30.0).contains(&n));
        }
        if let Some(q) = p.jpeg_quality() {
            assert!((15..=35).contains(&q));
        }
        if let Some(l) = p.motion_len() {
            assert!((10.0..80.0).contains(&l));
        }
    }
    assert_eq!(subsets.len(), 7);

    for seed in 0..100 {
        let p = sample_mixed_pipeline(&MixedRanges::novel_train(), seed);
        p.noise_sigma().map(|n| assert!((0.0..=20.0).contains(&n)));
        p.jpeg_quality().map(|q| assert!((60..=100).contains(&q)));
        p.motion_len().map(|l| assert!((10.0..=40.0).contains(&l)));
        let p = sample_mixed_pipeline(&MixedRanges::novel_test(), seed);
        p.noise_sigma().map(|n| assert!((20.0..=40.0).contains(&n)));
        p.jpeg_quality().map(|q| assert!((15..=60).contains(&q)));
        p.motion_len().map(|l| assert!((40.0..=80.0).contains(&l)));
    }

    for seed in 0..20u64 {
        let (d, _) = synth_mixed(&img, &MixedRanges::default(), &mut rng_from_seed(seed)).unwrap();
        assert_ne!(d, img);
        let again = synth_mixed(&img, &MixedRanges::default(), &mut rng_from_seed(seed)).unwrap().0;
        assert_eq!(d, again);
    }
}

#[test]
fn crop_contracts() {
    let img = random_image(9, 30, 20);
    let whole = crop_patches(&img, 20, 3, &mut rng_from_seed(1)).unwrap();
    assert!(whole.iter().all(|c| c.y == 0 && c.x <= 10));
    let full = Image::filled(16, 16, 3, 0.1);
    let only = crop_patches(&full, 16, 2, &mut rng_from_seed(1)).unwrap();
    assert!(only.iter().all(|c| (c.x, c.y) == (0, 0) && c.image == full));
    let many = crop_patches(&img, 7, 50, &mut rng_from_seed(2)).unwrap();
    for c in &many {
        assert!(c.x + 7 <= 30 && c.y + 7 <= 20);
        assert_eq!(c.image, img.crop(c.x, c.y, 7, 7).unwrap());
    }
    assert_eq!(many, crop_patches(&img, 7, 50, &mut rng_from_seed(2)).unwrap());
    assert!(crop_patches(&img, 21, 1, &mut rng_from_seed(1)).is_err());
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn dataset_build_is_reproducible_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    write_scenes(&src, 2, 50, 40, 11).unwrap();
    fs::write(src.join("broken.png"), b"not a png").unwrap();
    let opts = DatasetOptions {
        protocol: Protocol::Div2k(None),
        patch_size: 24,
        count: 4,
        master_seed: 99,
    };
    let m = build_dataset(&src, &tmp.path().join("a"), &opts).unwrap();
    assert_eq!(m.rows.len(), 8);
    assert!(m.rows.iter().all(|r| r.blur_sigma.is_some() && r.severity != Severity::Unclassed));
    build_dataset(&src, &tmp.path().join("b"), &opts).unwrap();
    assert_eq!(dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("b")));

    let read = read_manifest(&tmp.path().join("a/manifest.csv")).unwrap();
    assert_eq!(read, m);
    for row in &read.rows {
        let (clean, distorted) = replay_sample(row, &src).unwrap();
        let on_disk = Image::load(&tmp.path().join(format!("a/distorted/{}.png", row.sample_id))).unwrap();
        assert_eq!(distorted.quantize8(), on_disk);
        let clean_disk = Image::load(&tmp.path().join(format!("a/clean/{}.png", row.sample_id))).unwrap();
        assert_eq!(clean.quantize8(), clean_disk);
        assert!(distorted.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    let mixed = DatasetOptions {
        protocol: Protocol::from_name("novel-test", None).unwrap(),
        ..opts
    };
    let m = build_dataset(&src, &tmp.path().join("c"), &mixed).unwrap();
    assert!(m.rows.iter().all(|r| r.protocol == "novel-test" && r.blur_sigma.is_none()));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(build_dataset(&empty, &tmp.path().join("d"), &opts).is_err());
}

#[test]
fn external_pairs_are_cropped_together() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("rain");
    write_scenes(&src.join("clean"), 2, 40, 40, 3).unwrap();
    fs::create_dir_all(src.join("distorted")).unwrap();
    for i in 0..2 {
        let name = format!("scene_{i:03}.png");
        let clean = Image::load(&src.join("clean").join(&name)).unwrap();
        let d = apply_gaussian_blur(&clean, 1.5).unwrap();
        d.save_png(&src.join("distorted").join(&name)).unwrap();
    }
    let opts = DatasetOptions {
        protocol: Protocol::Div2k(None),
        patch_size: 16,
        count: 3,
        master_seed: 1,
    };
    let m = build_dataset(&src, &tmp.path().join("out"), &opts).unwrap();
    assert_eq!(m.rows.len(), 6);
    for row in &m.rows {
        assert!(row.external && row.severity == Severity::Unclassed && row.protocol == "external");
        let (_, dist) = replay_sample(row, &src).unwrap();
        let on_disk = Image::load(&tmp.path().join(format!("out/distorted/{}.png", row.sample_id))).unwrap();
        assert_eq!(dist, on_disk);
    }
}

#[test]
fn png_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let img = procedural_scene(13, 9, 4).quantize8();
    let p = tmp.path().join("x.png");
    img.save_png(&p).unwrap();
    assert_eq!(Image::load(&p).unwrap(), img);
    let planar = img.to_planar();
    assert_eq!(Image::from_planar(13, 9, 3, &planar).unwrap(), img);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distortions_stay_in_unit_range(seed in any::<u64>(), severity in 0usize..3) {
        let img = procedural_scene(24, 24, seed);
        let p = sample_div2k_pipeline(Severity::CLASSES[severity], seed).unwrap();
        let d = p.apply(&img).unwrap();
        prop_assert!(d.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let m = sample_mixed_pipeline(&MixedRanges::default(), seed);
        let d = m.apply(&img).unwrap();
        prop_assert!(d.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn psf_normalised(seed in any::<u64>(), len in 1.0f64..80.0) {
        let pts = generate_trajectory(&TrajectoryParams::with_len(len), &mut rng_from_seed(seed)).unwrap();
        let k = trajectory_to_kernel(&pts, 1).unwrap();
        prop_assert!((k.sum() - 1.0).abs() < 1e-9);
        prop_assert!(k.data().iter().all(|&v| v >= 0.0));
    }
}
