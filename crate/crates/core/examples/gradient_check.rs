//! Compares the analytic gradient of the l1 training loss with central
//! differences for a few parameters of a small network.

use bitexpand::data::{make_pair, synthetic};
use bitexpand::model::{BitNetConfig, BitNetModel};
use bitexpand::ops::l1_loss;
use bitexpand::rng::Rng;
use bitexpand::train::loss_and_grads;

const STEP: f32 = 1e-2;

fn main() -> bitexpand::Result<()> {
    let mut rng = Rng::new(5);
    let mut model = BitNetModel::build(BitNetConfig::with_widths(vec![4, 8]), 5)?;
    for p in model.params_mut() {
        p.iter_mut()
            .for_each(|v| *v += rng.uniform(-0.1, 0.1) as f32);
    }
    let hbd = synthetic::smooth_texture_image(16, 16, 16, &mut rng);
    let pair = make_pair(&hbd, 3, 8)?;
    let (loss, grads) = loss_and_grads(&model, &pair)?;
    println!("loss {loss:.6}");

    let analytic: Vec<Vec<f32>> = grads.slices().iter().map(|g| g.to_vec()).collect();
    let loss_at = |m: &BitNetModel| -> bitexpand::Result<f64> {
        Ok(l1_loss(&m.forward(&pair.input)?, &pair.target)?.0)
    };
    let names: Vec<String> = model
        .layers()
        .iter()
        .flat_map(|l| [format!("{}.weight", l.name), format!("{}.bias", l.name)])
        .collect();
    for t in (0..analytic.len()).step_by(5) {
        let i = rng.below(analytic[t].len() as u64) as usize;
        let mut probe = model.clone();
        probe.params_mut()[t][i] += STEP;
        let up = loss_at(&probe)?;
        probe.params_mut()[t][i] -= 2.0 * STEP;
        let down = loss_at(&probe)?;
        let numeric = (up - down) / (2.0 * STEP as f64);
        println!(
            "{:<22}[{i:4}] analytic {:+.6e} numeric {numeric:+.6e}",
            names[t], analytic[t][i]
        );
    }
    Ok(())
}
