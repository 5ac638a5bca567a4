//! Trains a small network on a generated corpus and compares it against
//! the classical expanders on held-out images.
//!
//! cargo run --release --example train_desk_scale -- [epochs] [lr] [out_dir]

use std::time::Instant;

use bitexpand::data::{synthetic, AugmentConfig, Dataset, MemorySource};
use bitexpand::metrics::evaluate;
use bitexpand::model::BitNetConfig;
use bitexpand::train::{TrainConfig, Trainer};
use bitexpand::{Expander, Method};

fn main() -> bitexpand::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().map_or(84, |a| a.parse().expect("epochs"));
    let lr: f64 = args.get(1).map_or(1e-3, |a| a.parse().expect("lr"));
    let out_dir = args
        .get(2)
        .cloned()
        .unwrap_or_else(|| "target/desk_scale".into());

    let mut corpus = synthetic::corpus(64, 128, 128, 16, 10_000);
    let held_out = MemorySource::new(corpus.split_off(48));
    let train = MemorySource::new(corpus);

    let config = TrainConfig {
        model: BitNetConfig::with_widths(vec![8, 16]),
        augment: AugmentConfig {
            bit_depth_range: (4, 4),
            patch_size: 64,
            ..Default::default()
        },
        target_bits: 8,
        epochs,
        lr,
        ..Default::default()
    };
    let dataset = Dataset::new(Box::new(train), config.augment.clone(), config.target_bits)?;
    let mut trainer = Trainer::new(config, dataset)?;
    let start = Instant::now();
    let records = trainer.fit(&out_dir)?;
    println!(
        "{} steps in {:.1} s",
        records.len(),
        start.elapsed().as_secs_f64()
    );

    let model = trainer.into_model();
    for expander in [
        Expander::classical(Method::Zp)?,
        Expander::classical(Method::Mig)?,
        Expander::classical(Method::Br)?,
        Expander::network(Method::BitNet, model)?,
    ] {
        let report = evaluate(&expander, &held_out, 4, 8)?;
        println!("{}", report.summary());
    }
    Ok(())
}
