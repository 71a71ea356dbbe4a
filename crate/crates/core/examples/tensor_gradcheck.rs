//! Builds a small program on the autodiff tape (separable convolution,
//! pooling, channel attention, L1 loss) and checks every gradient against
//! central finite differences.
//!
//! cargo run --release --example tensor_gradcheck

use owan::tensor::{gradcheck, GradcheckOptions, ParamStore, Tape, Tensor};
use rand::Rng;

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn main() -> anyhow::Result<()> {
    let mut rng = owan::rng::rng_from_seed(7);
    let mut store = ParamStore::new();
    store.insert("x", random(&mut rng, &[2, 3, 6, 6]))?;
    store.insert("depthwise", random(&mut rng, &[3, 3, 3]))?;
    store.insert("pointwise", random(&mut rng, &[4, 3, 1, 1]))?;
    store.insert("bias", random(&mut rng, &[4]))?;
    store.insert("w1", random(&mut rng, &[5, 4]))?;
    store.insert("w2", random(&mut rng, &[2, 5]))?;
    store.insert("target", random(&mut rng, &[2, 4, 6, 6]))?;

    let report = gradcheck(
        &store,
        |t, s| {
            let x = t.param(s, "x")?;
            let dw = t.param(s, "depthwise")?;
            let h = t.depthwise_conv2d(x, dw, 2)?;
            let (pw, b) = (t.param(s, "pointwise")?, t.param(s, "bias")?);
            let h = t.conv2d(h, pw, Some(b), 1)?;
            let h = t.relu(h);
            let pooled = t.avg_pool_same(h, 3)?;

            // Per-sample softmax weight on the pooled branch.
            let z = t.global_channel_mean(pooled)?;
            let (w1, w2) = (t.param(s, "w1")?, t.param(s, "w2")?);
            let a = t.dense_nobias(w1, z)?;
            let a = t.relu(a);
            let a = t.dense_nobias(w2, a)?;
            let a = t.softmax(a);
            let weight = t.select_column(a, 0)?;
            let scaled = t.scale_channels(pooled, weight)?;
            let out = t.add(scaled, h)?;

            let target = t.param(s, "target")?;
            t.l1_loss(out, target)
        },
        GradcheckOptions::default(),
    );

    for (name, err) in &report.per_param {
        println!("{name:>10}  max rel error {err:.2e}");
    }
    println!(
        "checked {} coordinates, skipped {} at kinks, worst {:.2e}: {}",
        report.checked,
        report.skipped_kinks,
        report.max_rel_error,
        if report.passed { "PASS" } else { "FAIL" }
    );

    // The same tape also runs forward-only in single precision.
    let mut tape = Tape::<f32>::new();
    let x = tape.leaf(&store.get("x").unwrap().cast::<f32>());
    let y = tape.avg_pool_same(x, 3)?;
    println!("f32 pooled mean: {:.4}", tape.value(y).iter().sum::<f32>() / tape.value(y).len() as f32);
    anyhow::ensure!(report.passed, "gradient check failed");
    Ok(())
}
