//! Quantizes a 16-bit image, writes it as PNG, and builds the augmented
//! training pairs a dataset would yield for it.
//!
//! cargo run --example quantize_and_pairs -- [out_dir]

use bitexpand::data::{make_pair, quantize, synthetic, AugmentConfig, Dataset, MemorySource};
use bitexpand::image::ImageBuffer;
use bitexpand::rng::Rng;

fn main() -> bitexpand::Result<()> {
    let out_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/quantize_and_pairs".into());
    std::fs::create_dir_all(&out_dir).map_err(|e| bitexpand::Error::io(&out_dir, e))?;

    let hbd = synthetic::smooth_texture_image(128, 96, 16, &mut Rng::new(1));
    hbd.write_png(format!("{out_dir}/original16.png"))?;
    for q in [3, 4, 6] {
        let lbd = quantize(&hbd, q)?;
        let path = format!("{out_dir}/q{q}.png");
        lbd.write_png(&path)?;
        let back = ImageBuffer::read_png(&path)?;
        let levels = back.pixels().iter().copied().max().unwrap_or(0) + 1;
        println!(
            "q={q}: {path}, values in [0, {}], {} container",
            levels - 1,
            back.bit_depth()
        );
    }

    let pair = make_pair(&hbd, 4, 8)?;
    println!(
        "pair: input {} (bit channel {:.4}), target {}",
        pair.input.shape(),
        pair.input.at(0, 3, 0, 0),
        pair.target.shape()
    );

    let augment = AugmentConfig {
        patch_size: 32,
        ..Default::default()
    };
    let mut ds = Dataset::new(
        Box::new(MemorySource::new(vec![("synthetic".into(), hbd)])),
        augment,
        8,
    )?;
    for epoch in 1..=3 {
        for p in ds.epoch() {
            println!("epoch {epoch}: q={} input {}", p.q, p.input.shape());
        }
    }
    Ok(())
}
