//! Expands every 4-bit value to 8 bits with zero padding, ideal gain and
//! bit replication, then scores the three on a smooth synthetic image.

use bitexpand::classical::{bit_replicate_value, mig_value, zero_pad_value, BitDepthSpec};
use bitexpand::data::{quantize, synthetic};
use bitexpand::metrics::{psnr, ssim};
use bitexpand::rng::Rng;
use bitexpand::{Expander, Method};

fn main() -> bitexpand::Result<()> {
    let spec = BitDepthSpec::new(4, 8)?;
    println!("value   zp  mig   br");
    for v in 0..16u16 {
        println!(
            "{v:5} {:4} {:4} {:4}",
            zero_pad_value(v, spec),
            mig_value(v, spec),
            bit_replicate_value(v, spec)
        );
    }

    let hbd = synthetic::smooth_texture_image(96, 64, 8, &mut Rng::new(3));
    let lbd = quantize(&hbd, 4)?;
    println!();
    for method in [Method::Zp, Method::Mig, Method::Br] {
        let out = Expander::classical(method)?.expand(&lbd, spec)?;
        println!(
            "{method:>4}: PSNR {:.2} dB, SSIM {:.4}",
            psnr(&hbd, &out)?,
            ssim(&hbd, &out)?
        );
    }
    Ok(())
}
