//! Runs one forward pass of a small network and prints, for every layer,
//! the attention weight each operation received. Also shows that zeroing the
//! merge convolutions turns the attention stack into the identity.
//!
//! cargo run --release --example operation_layer

use owan::model::{names, AttentionMode, Owan, OwanConfig};
use owan::synth::scene;
use owan::tensor::{Tape, Tensor};

fn main() -> anyhow::Result<()> {
    let config = OwanConfig {
        layers: 8,
        group_size: 4,
        channels: 16,
        attention_mode: AttentionMode::Learned,
        ..OwanConfig::default()
    };
    let model = Owan::<f32>::build(&config, 1)?;
    println!(
        "{} layers in {} groups, {} operations per layer, {} parameters",
        config.layers,
        config.groups(),
        config.num_ops(),
        model.count_params()
    );

    let img = scene::procedural_scene(48, 48, 3);
    let input = Tensor::new(&[1, 3, 48, 48], img.to_planar().iter().map(|&v| v as f32).collect())?;
    let (_, records) = model.restore(&input, &["scene".into()])?;

    print!("layer");
    for op in &config.ops {
        print!("{:>8}", op.to_string());
    }
    println!();
    for row in records.chunks(config.num_ops()) {
        print!("{:>5}", row[0].layer);
        for r in row {
            print!("{:>8.4}", r.weight);
        }
        println!();
    }

    let mut identity = model.clone();
    for l in 0..config.layers {
        identity.params.get_mut(&names::merge(l, "weight")).unwrap().data_mut().fill(0.0);
    }
    let mut tape = Tape::new();
    let x = tape.leaf(&input);
    let pass = identity.network_forward(&mut tape, x, false)?;
    let deviation = tape
        .value(*pass.layers.last().unwrap())
        .iter()
        .zip(tape.value(pass.x0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("zero merge weights: max |x_L - x_0| = {deviation}");
    Ok(())
}
