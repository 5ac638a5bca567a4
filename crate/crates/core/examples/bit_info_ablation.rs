//! Trains the small network twice on sources of mixed bit depth, with and
//! without the bit-depth input channel, and compares held-out PSNR per
//! image and source depth.
//!
//! cargo run --release --example bit_info_ablation -- [epochs] [lr]

use bitexpand::data::{synthetic, AugmentConfig, Dataset, MemorySource};
use bitexpand::image::ImageBuffer;
use bitexpand::metrics::evaluate;
use bitexpand::model::{BitNetConfig, BitNetModel};
use bitexpand::train::{TrainConfig, Trainer};
use bitexpand::{Expander, Method};

const DEPTHS: std::ops::RangeInclusive<u8> = 3..=6;

fn train(
    images: Vec<(String, ImageBuffer)>,
    epochs: usize,
    lr: f64,
    use_bit_info: bool,
) -> bitexpand::Result<BitNetModel> {
    let config = TrainConfig {
        model: BitNetConfig {
            use_bit_info,
            ..BitNetConfig::with_widths(vec![8, 16])
        },
        augment: AugmentConfig {
            bit_depth_range: (*DEPTHS.start(), *DEPTHS.end()),
            patch_size: 64,
            ..Default::default()
        },
        target_bits: 8,
        epochs,
        lr,
        ..Default::default()
    };
    let ds = Dataset::new(
        Box::new(MemorySource::new(images)),
        config.augment.clone(),
        8,
    )?;
    let dir = std::env::temp_dir().join(format!("bit_info_ablation_{use_bit_info}"));
    let mut trainer = Trainer::new(config, ds)?;
    trainer.fit(&dir)?;
    Ok(trainer.into_model())
}

fn main() -> bitexpand::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().map_or(42, |a| a.parse().expect("epochs"));
    let lr: f64 = args.get(1).map_or(1e-3, |a| a.parse().expect("lr"));

    let mut corpus = synthetic::corpus(64, 128, 128, 16, 10_000);
    let held_out = MemorySource::new(corpus.split_off(48));

    let mut scores = Vec::new();
    for use_bit_info in [true, false] {
        let model = train(corpus.clone(), epochs, lr, use_bit_info)?;
        let expander = Expander::network(Method::BitNet, model)?;
        let mut rows = Vec::new();
        for q in DEPTHS {
            let report = evaluate(&expander, &held_out, q, 8)?;
            println!(
                "bit info {use_bit_info:5}  q={q}  {}",
                report.summary().lines().next().unwrap_or("")
            );
            rows.extend(report.rows.iter().map(|r| r.psnr));
        }
        scores.push(rows);
    }
    let diffs: Vec<f64> = scores[1]
        .iter()
        .zip(&scores[0])
        .map(|(off, on)| off - on)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    println!(
        "without minus with: mean {mean:+.3} dB, standard error {:.3} dB over {} pairs",
        sd / n.sqrt(),
        diffs.len()
    );
    Ok(())
}
