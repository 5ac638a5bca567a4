//! Shows how disconnecting multi-scale taps, smallest scale first, changes
//! the output of one network, and that disconnecting all of them matches a
//! network built without the fusion stage.

use bitexpand::data::{make_pair, synthetic};
use bitexpand::model::{BitNetConfig, BitNetModel};
use bitexpand::rng::Rng;

fn main() -> bitexpand::Result<()> {
    let mut rng = Rng::new(8);
    let config = BitNetConfig::with_widths(vec![8, 16, 16]);
    let stages = config.num_stages;
    let mut model = BitNetModel::build(config.clone(), 8)?;
    for p in model.params_mut() {
        p.iter_mut()
            .for_each(|v| *v += rng.uniform(-0.05, 0.05) as f32);
    }
    let pair = make_pair(&synthetic::smooth_texture_image(32, 32, 16, &mut rng), 4, 8)?;

    let full = model.forward(&pair.input)?;
    for k in 0..=stages {
        model.set_msfi_disconnect(k)?;
        let y = model.forward(&pair.input)?;
        println!(
            "{k} tap(s) disconnected: max change {:.3e}",
            y.max_abs_diff(&full)
        );
    }

    let mut bare = BitNetModel::build(
        BitNetConfig {
            use_msfi: false,
            ..config
        },
        8,
    )?;
    for layer in bare.layers_mut() {
        if let Some(src) = model.layer(&layer.name) {
            layer.params = src.params.clone();
        }
    }
    let same = bare.forward(&pair.input)? == model.forward(&pair.input)?;
    println!(
        "all taps off equals no fusion stage: {same} ({} vs {} parameters)",
        model.num_params(),
        bare.num_params()
    );
    Ok(())
}
