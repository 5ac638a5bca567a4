//! Times the expansion of random images of several sizes with an untrained
//! default network and reports throughput.
//!
//! cargo run --release --example bench_forward -- [threads] [side ...]

use bitexpand::classical::BitDepthSpec;
use bitexpand::cli::{bench_images, bench_table};
use bitexpand::image::ImageBuffer;
use bitexpand::model::{BitNetConfig, BitNetModel};
use bitexpand::rng::Rng;
use bitexpand::{Expander, Method};

fn main() -> bitexpand::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let threads: usize = args.first().map_or(1, |a| a.parse().expect("threads"));
    let sides: Vec<usize> = if args.len() > 1 {
        args[1..].iter().map(|a| a.parse().expect("side")).collect()
    } else {
        vec![256, 512, 1024]
    };

    let mut rng = Rng::new(7);
    let images: Vec<(String, ImageBuffer)> = sides
        .iter()
        .map(|&s| {
            let img = ImageBuffer::from_fn(s, s, 3, 4, |_, _, _| rng.below(16) as u16).unwrap();
            (format!("{s}x{s}"), img)
        })
        .collect();
    let model = BitNetModel::build(BitNetConfig::default(), 10_000)?;
    let expander = Expander::network(Method::BitNet, model)?;
    let spec = BitDepthSpec::new(4, 8)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let rows = pool.install(|| bench_images(&expander, &images, spec, 3))?;
    print!("{}", bench_table(&rows));
    Ok(())
}
