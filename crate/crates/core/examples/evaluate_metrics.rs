//! Writes a small PNG corpus and evaluates the classical expanders on it,
//! printing each report as CSV and as a summary.
//!
//! cargo run --example evaluate_metrics -- [corpus_dir]

use bitexpand::data::synthetic;
use bitexpand::image::ImageBuffer;
use bitexpand::metrics::{evaluate_dir, psnr, ssim};
use bitexpand::{Expander, Method};

fn main() -> bitexpand::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/evaluate_metrics".into());
    std::fs::create_dir_all(&dir).map_err(|e| bitexpand::Error::io(&dir, e))?;
    for (name, img) in synthetic::corpus(6, 64, 64, 16, 10_000) {
        img.write_png(format!("{dir}/{name}"))?;
    }

    for method in [Method::Zp, Method::Mig, Method::Br] {
        let report = evaluate_dir(&Expander::classical(method)?, &dir, 4, 16)?;
        print!("{}", report.to_csv());
        println!("{}\n", report.summary());
    }

    let a = ImageBuffer::from_fn(16, 16, 1, 8, |x, y, _| (x * 16 + y) as u16)?;
    let inverted = a.map_values(8, |v| 255 - v)?;
    println!("identical: PSNR {}, SSIM {}", psnr(&a, &a)?, ssim(&a, &a)?);
    println!(
        "inverted:  PSNR {:.2}, SSIM {:.4}",
        psnr(&a, &inverted)?,
        ssim(&a, &inverted)?
    );
    Ok(())
}
