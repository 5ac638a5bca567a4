//! Builds the default network, lists its layers, and expands an image whose
//! sides are not multiples of the encoder stride.

use bitexpand::classical::BitDepthSpec;
use bitexpand::data::{quantize, synthetic};
use bitexpand::model::{BitNetConfig, BitNetModel};
use bitexpand::rng::Rng;
use bitexpand::{Expander, Method};

fn main() -> bitexpand::Result<()> {
    let model = BitNetModel::build(BitNetConfig::default(), 10_000)?;
    for layer in model.layers() {
        let p = &layer.params;
        println!(
            "{:<18} {:?} weight {} stride {} dilation {}",
            layer.name,
            layer.kind,
            p.weight.shape(),
            p.stride,
            p.dilation
        );
    }
    println!("{} parameters", model.num_params());

    let hbd = synthetic::smooth_texture_image(100, 75, 8, &mut Rng::new(2));
    let lbd = quantize(&hbd, 4)?;
    let out = Expander::network(Method::BitNet, model)?.expand(&lbd, BitDepthSpec::new(4, 8)?)?;
    println!(
        "expanded {}x{} 4-bit to {}x{} {}-bit",
        lbd.width(),
        lbd.height(),
        out.width(),
        out.height(),
        out.bit_depth()
    );
    Ok(())
}
