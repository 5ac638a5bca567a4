//! The channel-wise variant: one single-channel network applied to R, G and
//! B in turn, so it also accepts grayscale input.

use bitexpand::classical::BitDepthSpec;
use bitexpand::data::{network_input, quantize, synthetic};
use bitexpand::image::ImageBuffer;
use bitexpand::model::{BitNetConfig, BitNetModel, Variant};
use bitexpand::rng::Rng;
use bitexpand::{Expander, Method};

fn main() -> bitexpand::Result<()> {
    let config = BitNetConfig {
        variant: Variant::Chan,
        ..BitNetConfig::with_widths(vec![8, 16])
    };
    let model = BitNetModel::build(config, 10_000)?;
    println!(
        "input channels {}, {} parameters",
        model.config().in_channels(),
        model.num_params()
    );

    let spec = BitDepthSpec::new(4, 8)?;
    let rgb = quantize(
        &synthetic::smooth_texture_image(64, 48, 8, &mut Rng::new(4)),
        4,
    )?;
    let x = network_input(&rgb, spec)?;
    println!(
        "rgb input {} -> {}",
        x.shape(),
        model.forward_image(&x)?.shape()
    );
    let batched = model.chan_batch(&x)?;
    println!("rebatched for the network: {}", batched.shape());

    let gray = ImageBuffer::from_fn(40, 30, 1, 4, |x, _, _| (x * 15 / 39) as u16)?;
    let out = Expander::network(Method::BitNetChan, model)?.expand(&gray, spec)?;
    println!(
        "grayscale {}x{} -> {} channel(s)",
        out.width(),
        out.height(),
        out.channels()
    );
    Ok(())
}
