mod common;

use common::*;
use owan::model::{names, AttentionMode, ModelError, OpDescriptor, Owan, OwanConfig};
use owan::tensor::{gradcheck, GradcheckOptions, Tape, Tensor};

fn tiny(mode: AttentionMode) -> OwanConfig {
    OwanConfig {
        layers: 4,
        group_size: 4,
        channels: 4,
        attention_hidden: 4,
        res_blocks: 1,
        attention_mode: mode,
        ..OwanConfig::default()
    }
}

fn image(seed: u64, n: usize, h: usize, w: usize) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::new(&[n, 3, h, w], random_vec(&mut r, n * 3 * h * w, 0.0, 1.0)).unwrap()
}

fn zero_param(net: &mut Owan<f64>, name: &str) {
    net.params.get_mut(name).unwrap().data_mut().fill(0.0);
}

#[test]
fn default_network_layout() {
    let net = Owan::<f32>::build(&OwanConfig::default(), 7).unwrap();
    assert_eq!(net.config.layers, 40);
    assert_eq!(net.config.groups(), 10);
    assert_eq!(net.config.num_ops(), 8);
    assert!(net.params.contains(&names::attn(39, "w2")));
    assert!(!net.params.contains(&names::attn(40, "w1")));
    assert!(!net.params.contains(names::FIXED_LOGITS));
}

#[test]
fn build_is_deterministic() {
    let a = Owan::<f32>::build(&OwanConfig::default(), 7).unwrap();
    let b = Owan::<f32>::build(&OwanConfig::default(), 7).unwrap();
    let c = Owan::<f32>::build(&OwanConfig::default(), 8).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
    assert_eq!(a.count_params(), b.count_params());
}

#[test]
fn attention_head_size() {
    let cfg = OwanConfig { layers: 4, ..OwanConfig::default() };
    let net = Owan::<f32>::build(&cfg, 1).unwrap();
    for l in 0..4 {
        let w1 = net.params.get(&names::attn(l, "w1")).unwrap();
        let w2 = net.params.get(&names::attn(l, "w2")).unwrap();
        assert_eq!(w1.shape(), &[32, 16]);
        assert_eq!(w2.shape(), &[8, 32]);
        assert_eq!(w1.numel() + w2.numel(), 768);
    }
}

#[test]
fn indivisible_layer_count_rejected() {
    let cfg = OwanConfig { layers: 6, ..OwanConfig::default() };
    assert!(matches!(Owan::<f32>::build(&cfg, 1), Err(ModelError::Config(_))));
}

#[test]
fn parameter_count_closed_form() {
    let cfg = OwanConfig { layers: 0, ..OwanConfig::default() };
    let (c, cin, k) = (16, 3, 4);
    let want = (c * cin * 9 + c) + k * 2 * (c * c * 9 + c) + (cin * c * 9 + cin);
    assert_eq!(Owan::<f32>::build(&cfg, 0).unwrap().count_params(), want);

    // One layer group of the default operation set, counted by hand.
    let cfg = OwanConfig { layers: 4, ..OwanConfig::default() };
    let dw: usize = [1usize, 3, 5, 7, 3, 5, 7].iter().map(|&f| if f == 1 { 0 } else { c * f * f }).sum();
    let per_layer = dw + 7 * (c * c + c) + (c * c * 8 + c) + (32 * c + 8 * 32);
    assert_eq!(Owan::<f32>::build(&cfg, 0).unwrap().count_params(), want + 4 * per_layer);

    let small = Owan::<f32>::build(&OwanConfig::default(), 0).unwrap().count_params();
    let wide = OwanConfig { channels: 32, ..OwanConfig::default() };
    assert!(Owan::<f32>::build(&wide, 0).unwrap().count_params() > small);
}

#[test]
fn feature_extract_contracts() {
    let cfg = OwanConfig { res_blocks: 1, ..tiny(AttentionMode::None) };
    let mut net = Owan::<f64>::build(&cfg, 3).unwrap();
    let mut tape = Tape::new();
    let zero = tape.constant(&[1, 3, 8, 8], vec![0.0; 192]).unwrap();
    let x0 = net.feature_extract(&mut tape, zero, false).unwrap();
    assert!(tape.value(x0).iter().all(|&v| v == 0.0));

    // Zeroed second conv turns the residual block into the identity, so the
    // result is relu(stem(x)).
    zero_param(&mut net, &names::res(0, 2, "weight"));
    let img = image(4, 2, 9, 7);
    let mut tape = Tape::new();
    let x = tape.constant(img.shape(), img.data().to_vec()).unwrap();
    let x0 = net.feature_extract(&mut tape, x, false).unwrap();
    assert_eq!(tape.shape(x0), &[2, 4, 9, 7]);
    let stem = net.params.get(names::STEM_WEIGHT).unwrap();
    let want: Vec<f64> = conv2d_oracle(img.data(), 2, 3, 9, 7, stem.data(), 4, 3, &[0.0; 4], 1)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    assert!(scaled_err(tape.value(x0), &want) < 1e-9);

    let bad = tape.constant(&[1, 1, 8, 8], vec![0.0; 64]).unwrap();
    assert!(matches!(net.feature_extract(&mut tape, bad, false), Err(ModelError::Shape(_))));
}

#[test]
fn default_feature_shape() {
    let net = Owan::<f32>::build(&OwanConfig { layers: 0, ..OwanConfig::default() }, 2).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(&[2, 3, 10, 12], vec![0.5f32; 720]).unwrap();
    let x0 = net.feature_extract(&mut tape, x, false).unwrap();
    assert_eq!(tape.shape(x0), &[2, 16, 10, 12]);
}

#[test]
fn group_attention_contracts() {
    let cfg = OwanConfig { layers: 8, ..OwanConfig::default() };
    let mut net = Owan::<f64>::build(&cfg, 5).unwrap();
    zero_param(&mut net, &names::attn(2, "w2"));
    let mut r = rng(6);
    let mut tape = Tape::new();
    let x = tape.constant(&[3, 16, 5, 5], random_vec(&mut r, 1200, -1.0, 1.0)).unwrap();
    let w = net.compute_group_attention(&mut tape, x, 0, false).unwrap();
    assert_eq!(w.len(), 4);
    for (j, v) in w.iter().enumerate() {
        let v = v.unwrap();
        assert_eq!(tape.shape(v), &[3, 8]);
        for row in tape.value(v).chunks(8) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if j == 2 {
                assert!(row.iter().all(|&p| (p - 0.125).abs() < 1e-15));
            }
        }
    }
    assert!(matches!(
        net.compute_group_attention(&mut tape, x, 2, false),
        Err(ModelError::GroupIndex { group: 2, groups: 2 })
    ));
}

#[test]
fn group_attention_depends_only_on_group_head() {
    let cfg = OwanConfig { layers: 8, channels: 8, attention_hidden: 8, res_blocks: 1, ..OwanConfig::default() };
    let net = Owan::<f64>::build(&cfg, 9).unwrap();
    let img = image(10, 2, 9, 9);
    let run = |net: &Owan<f64>| {
        let mut tape = Tape::new();
        let x = tape.constant(img.shape(), img.data().to_vec()).unwrap();
        let pass = net.network_forward(&mut tape, x, false).unwrap();
        pass.attention
            .iter()
            .map(|w| tape.value(w.unwrap()).to_vec())
            .collect::<Vec<_>>()
    };
    let base = run(&net);
    // Perturb the layers inside the first group: intermediates after its head
    // change, but none of the group's weight vectors may.
    let mut perturbed = Owan { config: net.config.clone(), params: net.params.clone() };
    for l in 0..3 {
        for v in perturbed.params.get_mut(&names::merge(l, "weight")).unwrap().data_mut() {
            *v *= 1.5;
        }
    }
    let after = run(&perturbed);
    for l in 0..4 {
        assert_eq!(base[l], after[l], "layer {l}");
    }
    assert!((4..8).any(|l| base[l] != after[l]));
}

#[test]
fn op_layer_contracts() {
    let cfg = OwanConfig { layers: 4, ..OwanConfig::default() };
    let mut net = Owan::<f64>::build(&cfg, 11).unwrap();
    let mut r = rng(12);
    let xs = random_vec(&mut r, 16 * 7 * 8, -1.0, 1.0);

    // Branches against compositions of the brute-force oracles.
    let mut tape = Tape::new();
    let x = tape.constant(&[1, 16, 7, 8], xs.clone()).unwrap();
    let outs = net.op_layer_forward(&mut tape, 1, x, false).unwrap();
    assert_eq!(outs.len(), 8);
    for (o, op) in net.config.ops.iter().enumerate() {
        let want = if op.has_params() {
            let h = if op.has_depthwise() {
                let dw = net.params.get(&names::op(1, o, "depthwise")).unwrap();
                depthwise_oracle(&xs, 1, 16, 7, 8, dw.data(), op.filter_size, op.dilation)
            } else {
                xs.clone()
            };
            let pw = net.params.get(&names::op(1, o, "pointwise")).unwrap();
            let b = net.params.get(&names::op(1, o, "bias")).unwrap();
            conv2d_oracle(&h, 1, 16, 7, 8, pw.data(), 16, 1, b.data(), 1)
                .into_iter()
                .map(|v| v.max(0.0))
                .collect()
        } else {
            avg_pool_oracle(&xs, 16, 7, 8, 3)
        };
        assert!(scaled_err(tape.value(outs[o]), &want) < 1e-9, "op {op}");
    }

    // Zero weights: conv branches vanish, pooling is untouched.
    for o in 0..7 {
        zero_param(&mut net, &names::op(1, o, "pointwise"));
    }
    let c = tape.constant(&[1, 16, 7, 8], vec![0.3; 16 * 56]).unwrap();
    let outs = net.op_layer_forward(&mut tape, 1, c, false).unwrap();
    for &h in &outs[..7] {
        assert!(tape.value(h).iter().all(|&v| v == 0.0));
    }
    assert!(tape.value(outs[7]).iter().all(|&v| (v - 0.3).abs() < 1e-15));
}

#[test]
fn owal_contracts() {
    let cfg = OwanConfig { layers: 4, ..OwanConfig::default() };
    let mut net = Owan::<f64>::build(&cfg, 13).unwrap();
    let mut r = rng(14);
    let mut tape = Tape::new();
    let x = tape.constant(&[2, 16, 6, 6], random_vec(&mut r, 2 * 16 * 36, -1.0, 1.0)).unwrap();

    let mut onehot = vec![0.0; 16];
    onehot[3] = 1.0;
    onehot[8 + 3] = 1.0;
    let w = tape.constant(&[2, 8], onehot).unwrap();
    let out = net.owal_forward(&mut tape, 0, Some(w), x, false).unwrap();
    assert_eq!(tape.shape(out.concat), &[2, 128, 6, 6]);
    assert_eq!(tape.shape(out.output), &[2, 16, 6, 6]);
    for (i, &v) in tape.value(out.concat).iter().enumerate() {
        let block = (i / 36) % 128 / 16;
        if block != 3 {
            assert_eq!(v, 0.0);
        }
    }

    zero_param(&mut net, &names::merge(0, "weight"));
    let out = net.owal_forward(&mut tape, 0, Some(w), x, false).unwrap();
    assert_eq!(tape.value(out.output), tape.value(x));
}

#[test]
fn zero_merge_stack_is_identity() {
    let mut net = Owan::<f32>::build(&OwanConfig::default(), 15).unwrap();
    for l in 0..40 {
        net.params.get_mut(&names::merge(l, "weight")).unwrap().data_mut().fill(0.0);
    }
    let img = image(16, 1, 12, 12).cast::<f32>();
    let mut tape = Tape::new();
    let x = tape.constant(img.shape(), img.data().to_vec()).unwrap();
    let pass = net.network_forward(&mut tape, x, false).unwrap();
    assert_eq!(tape.value(*pass.layers.last().unwrap()), tape.value(pass.x0));
}

#[test]
fn default_forward_shape_and_records() {
    let net = Owan::<f32>::build(&OwanConfig::default(), 17).unwrap();
    let img = image(18, 1, 63, 63).cast::<f32>();
    let (out, records) = net.restore(&img, &["a".to_string()]).unwrap();
    assert_eq!(out.shape(), &[1, 3, 63, 63]);
    assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(records.len(), 320);
    for chunk in records.chunks(8) {
        let s: f64 = chunk.iter().map(|r| r.weight).sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(chunk.iter().all(|r| (0.0..=1.0).contains(&r.weight)));
    }
    assert_eq!((records[0].layer, records[0].op), (1, 1));
    assert_eq!((records[319].layer, records[319].op), (40, 8));
}

#[test]
fn desk_scale_attention_strictly_positive() {
    let cfg = OwanConfig { layers: 8, ..OwanConfig::default() };
    let net = Owan::<f32>::build(&cfg, 25).unwrap();
    let img = image(26, 4, 16, 16).cast::<f32>();
    let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
    let recs = net.restore(&img, &ids).unwrap().1;
    assert_eq!(recs.len(), 4 * 8 * 8);
    for chunk in recs.chunks(8) {
        let s: f64 = chunk.iter().map(|r| r.weight).sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(chunk.iter().all(|r| r.weight > 0.0 && r.weight < 1.0));
    }
}

#[test]
fn record_layout_per_mode() {
    let img = image(19, 2, 8, 8);
    let ids = vec!["p".to_string(), "q".to_string()];
    let none = Owan::<f64>::build(&tiny(AttentionMode::None), 1).unwrap();
    assert!(none.restore(&img, &ids).unwrap().1.is_empty());
    let fixed = Owan::<f64>::build(&tiny(AttentionMode::Fixed), 1).unwrap();
    let recs = fixed.restore(&img, &ids).unwrap().1;
    assert_eq!(recs.len(), 2 * 4 * 8);
    assert!(recs.iter().all(|r| (r.weight - 0.125).abs() < 1e-15));
    assert_eq!(recs[32].sample_id, "q");
}

#[test]
fn fixed_zero_logits_match_none_with_scaled_merge() {
    let cfg_none = OwanConfig { layers: 8, ..tiny(AttentionMode::None) };
    let cfg_fixed = OwanConfig { attention_mode: AttentionMode::Fixed, ..cfg_none.clone() };
    let none = Owan::<f64>::build(&cfg_none, 21).unwrap();
    let mut fixed = Owan::<f64>::build(&cfg_fixed, 21).unwrap();
    for (name, t) in none.params.iter() {
        assert_eq!(fixed.params.get(name).unwrap(), t, "{name}");
    }
    for l in 0..8 {
        for v in fixed.params.get_mut(&names::merge(l, "weight")).unwrap().data_mut() {
            *v *= 8.0;
        }
    }
    let img = image(22, 2, 9, 9);
    let a = none.restore(&img, &[]).unwrap().0;
    let b = fixed.restore(&img, &[]).unwrap().0;
    assert!(scaled_err(a.data(), b.data()) < 1e-12);
}

#[test]
fn learned_and_none_share_weights() {
    let learned = Owan::<f64>::build(&tiny(AttentionMode::Learned), 3).unwrap();
    let none = Owan::<f64>::build(&tiny(AttentionMode::None), 3).unwrap();
    let mut shared = 0;
    for (name, t) in none.params.iter() {
        assert_eq!(learned.params.get(name).unwrap(), t);
        shared += t.numel();
    }
    assert_eq!(learned.count_params() - shared, 4 * (4 * 4 + 8 * 4));
}

#[test]
fn forward_is_deterministic_and_shape_preserving() {
    let net = Owan::<f32>::build(&OwanConfig { layers: 4, ..OwanConfig::default() }, 23).unwrap();
    for (h, w) in [(7, 7), (8, 13), (15, 9)] {
        let img = image(24, 1, h, w).cast::<f32>();
        let a = net.restore(&img, &["x".into()]).unwrap();
        let b = net.restore(&img, &["x".into()]).unwrap();
        assert_eq!(a.0.shape(), &[1, 3, h, w]);
        assert_eq!(a, b);
    }
}

#[test]
fn ops_parse_round_trip() {
    let cfg = OwanConfig::default();
    assert_eq!(OwanConfig::parse_ops(&cfg.ops_string()).unwrap(), cfg.ops);
    assert_eq!(cfg.ops, OpDescriptor::default_set());
}

fn network_gradcheck(mode: AttentionMode, res_blocks: usize) -> owan::tensor::GradcheckReport {
    let cfg = OwanConfig { res_blocks, ..tiny(mode) };
    let net = Owan::<f64>::build(&cfg, 31).unwrap();
    let img = image(32, 1, 8, 8);
    // Offsetting the target from the initial prediction keeps every L1
    // residual on one side of its kink without inflating the loss (and the
    // finite-difference roundoff with it).
    let mut tape = Tape::new();
    let x = tape.constant(&[1, 3, 8, 8], img.data().to_vec()).unwrap();
    let pred = net.network_forward(&mut tape, x, false).unwrap().output;
    let target: Vec<f64> = tape.value(pred).iter().map(|v| v + 0.25).collect();
    gradcheck(
        &net.params,
        |tape, store| {
            let probe = Owan { config: cfg.clone(), params: store.clone() };
            let x = tape.constant(&[1, 3, 8, 8], img.data().to_vec())?;
            let y = tape.constant(&[1, 3, 8, 8], target.clone())?;
            let pass = probe
                .network_forward(tape, x, true)
                .map_err(|e| match e {
                    ModelError::Tensor(t) => t,
                    other => panic!("{other}"),
                })?;
            tape.l1_loss(pass.output, y)
        },
        GradcheckOptions::default(),
    )
}

#[test]
fn tiny_network_gradcheck_learned() {
    let rep = network_gradcheck(AttentionMode::Learned, 4);
    assert!(rep.passed, "{rep:?}");
    assert!(rep.skipped_kinks * 50 < rep.checked, "{} skipped of {}", rep.skipped_kinks, rep.checked);
}

#[test]
fn tiny_network_gradcheck_fixed() {
    let rep = network_gradcheck(AttentionMode::Fixed, 1);
    assert!(rep.passed, "{rep:?}");
    assert!(rep.per_param.iter().any(|(n, _)| n == names::FIXED_LOGITS));
}
