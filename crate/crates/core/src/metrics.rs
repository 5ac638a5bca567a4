//! PSNR, SSIM and corpus-level evaluation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::classical::BitDepthSpec;
use crate::data::{quantize, to_target_depth, DirSource, ImageSource};
use crate::error::{Error, Result};
use crate::expander::Expander;
use crate::image::ImageBuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_layout(b) || a.bit_depth() != b.bit_depth() {
        return Err(Error::Argument(format!(
            "images differ: {}x{}x{} at {} bits vs {}x{}x{} at {} bits",
            a.width(),
            a.height(),
            a.channels(),
            a.bit_depth(),
            b.width(),
            b.height(),
            b.channels(),
            b.bit_depth()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB with peak `2^b - 1`; `+inf` when the
/// images are identical.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_pair(a, b)?;
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.pixels().len() as f64;
    let peak = a.max_value() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Valid-region separable filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..][..w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| taps[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> f64 {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(a, h, w, &taps);
    let mu_b = filter_valid(b, h, w, &taps);
    let aa = filter_valid(&prod(a, a), h, w, &taps);
    let bb = filter_valid(&prod(b, b), h, w, &taps);
    let ab = filter_valid(&prod(a, b), h, w, &taps);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM over every fully covered 11x11 Gaussian window (sigma 1.5),
/// computed per channel with dynamic range `2^b - 1` and averaged.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_pair(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::Argument(format!(
            "{}x{} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            a.width(),
            a.height()
        )));
    }
    let peak = a.max_value() as f64;
    let sum: f64 = (0..a.channels())
        .map(|c| {
            ssim_plane(
                &a.channel_plane(c),
                &b.channel_plane(c),
                a.height(),
                a.width(),
                peak,
            )
        })
        .sum();
    Ok(sum / a.channels() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Wall-clock seconds spent in the expander.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub rows: Vec<ImageScore>,
    /// `(name, message)` for images that could not be scored.
    pub failures: Vec<(String, String)>,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sum::<f64>() / n as f64
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

impl MetricReport {
    pub fn mean_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.ssim))
    }

    pub fn mean_seconds(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.seconds))
    }

    /// `name,psnr,ssim,seconds` rows, a `mean` row last.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,psnr,ssim,seconds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6}",
                r.name,
                fmt_db(r.psnr),
                r.ssim,
                r.seconds
            );
        }
        let _ = writeln!(
            s,
            "mean,{},{:.6},{:.6}",
            fmt_db(self.mean_psnr()),
            self.mean_ssim(),
            self.mean_seconds()
        );
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} images, PSNR {} dB, SSIM {:.4}, {:.4} s/image",
            self.method,
            self.rows.len(),
            fmt_db(self.mean_psnr()),
            self.mean_ssim(),
            self.mean_seconds()
        );
        if !self.failures.is_empty() {
            let _ = write!(s, ", {} failed", self.failures.len());
            for (name, msg) in &self.failures {
                let _ = write!(s, "\n  {name}: {msg}");
            }
        }
        s
    }
}

/// Scores one ground-truth image: truncate to `target` bits, quantize to
/// `q`, expand and compare. Only the expansion is timed.
pub fn score_image(
    expander: &Expander,
    name: &str,
    hbd: &ImageBuffer,
    spec: BitDepthSpec,
) -> Result<ImageScore> {
    let truth = to_target_depth(hbd, spec.target)?;
    let lbd = quantize(&truth, spec.q)?;
    let start = Instant::now();
    let out = expander.expand(&lbd, spec)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(ImageScore {
        name: name.to_string(),
        psnr: psnr(&out, &truth)?,
        ssim: ssim(&out, &truth)?,
        seconds,
    })
}

/// Scores every image of `source` in order. Per-image failures are logged
/// and collected; aggregates cover successes only.
pub fn evaluate(
    expander: &Expander,
    source: &dyn ImageSource,
    q: u8,
    target: u8,
) -> Result<MetricReport> {
    let spec = BitDepthSpec::new(q, target)?;
    let mut report = MetricReport {
        method: expander.name(),
        ..Default::default()
    };
    for i in 0..source.len() {
        let name = source.name(i);
        match source
            .load(i)
            .and_then(|img| score_image(expander, &name, &img, spec))
        {
            Ok(row) => report.rows.push(row),
            Err(e) => {
                log::warn!("{name}: {e}");
                report.failures.push((name, e.to_string()));
            }
        }
    }
    Ok(report)
}

/// [`evaluate`] over every PNG in a directory, sorted by file name.
pub fn evaluate_dir(
    expander: &Expander,
    dir: impl AsRef<Path>,
    q: u8,
    target: u8,
) -> Result<MetricReport> {
    evaluate(expander, &DirSource::open(dir)?, q, target)
}
