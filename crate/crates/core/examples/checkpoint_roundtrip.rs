//! Saves a model, reloads it, confirms the forward pass is bit-identical,
//! and shows the diagnostic for a corrupted file.
//!
//! cargo run --example checkpoint_roundtrip -- [dir]

use bitexpand::data::{make_pair, synthetic};
use bitexpand::model::{load_checkpoint, save_checkpoint, BitNetConfig, BitNetModel};
use bitexpand::rng::Rng;

fn main() -> bitexpand::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/checkpoint_roundtrip".into());
    std::fs::create_dir_all(&dir).map_err(|e| bitexpand::Error::io(&dir, e))?;
    let path = format!("{dir}/model.ckpt");

    let model = BitNetModel::build(BitNetConfig::with_widths(vec![8, 16]), 10_000)?;
    save_checkpoint(&model, &path)?;
    let bytes = std::fs::read(&path).map_err(|e| bitexpand::Error::io(&path, e))?;
    let header_end = bytes.windows(2).position(|w| w == b"\n\n").unwrap_or(0);
    println!(
        "{}",
        String::from_utf8_lossy(&bytes[..header_end])
            .lines()
            .take(12)
            .collect::<Vec<_>>()
            .join("\n")
    );

    let pair = make_pair(
        &synthetic::smooth_texture_image(32, 32, 16, &mut Rng::new(6)),
        4,
        8,
    )?;
    let loaded = load_checkpoint(&path)?;
    let same = model.forward(&pair.input)? == loaded.forward(&pair.input)?;
    println!(
        "\n{} bytes, reloaded forward identical: {same}",
        bytes.len()
    );

    let mut corrupt = bytes.clone();
    *corrupt.last_mut().unwrap() ^= 0x40;
    let bad = format!("{dir}/corrupt.ckpt");
    std::fs::write(&bad, corrupt).map_err(|e| bitexpand::Error::io(&bad, e))?;
    match load_checkpoint(&bad) {
        Ok(_) => println!("corrupt file was accepted"),
        Err(e) => println!("corrupt file rejected: {e}"),
    }
    Ok(())
}
