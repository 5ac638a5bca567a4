use std::ops::Range;
use std::path::{Path, PathBuf};

use super::{augment, make_pair, AugmentConfig, SamplePair};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::{Rng, RngState};

/// Stream id separating augmentation draws from model initialization.
const DATA_STREAM: u64 = 1;

/// Indexed collection of high-bit-depth images.
pub trait ImageSource: Send + Sync {
    fn len(&self) -> usize;
    fn name(&self, index: usize) -> String;
    fn load(&self, index: usize) -> Result<ImageBuffer>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fraction of a filename-sorted listing assigned to training; the rest is
/// held out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
    All,
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Config(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        Ok(SplitSpec { train_fraction })
    }

    pub fn range(&self, len: usize, which: Split) -> Range<usize> {
        let cut = ((len as f64 * self.train_fraction).round() as usize).min(len);
        match which {
            Split::Train => 0..cut,
            Split::Eval => cut..len,
            Split::All => 0..len,
        }
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
        }
    }
}

/// PNG files of a directory, sorted by file name.
#[derive(Clone, Debug)]
pub struct DirSource {
    files: Vec<PathBuf>,
}

impl DirSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_png = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if is_png && path.is_file() {
                files.push(path);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        if files.is_empty() {
            return Err(Error::Argument(format!(
                "no PNG files in {}",
                dir.display()
            )));
        }
        Ok(DirSource { files })
    }

    pub fn split(self, spec: SplitSpec, which: Split) -> Result<Self> {
        let r = spec.range(self.files.len(), which);
        let files = self.files[r].to_vec();
        if files.is_empty() {
            return Err(Error::Argument(format!("{which:?} split is empty")));
        }
        Ok(DirSource { files })
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.files
    }
}

impl ImageSource for DirSource {
    fn len(&self) -> usize {
        self.files.len()
    }

    fn name(&self, index: usize) -> String {
        self.files[index]
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    fn load(&self, index: usize) -> Result<ImageBuffer> {
        ImageBuffer::read_png(&self.files[index])
    }
}

/// Images held in memory, e.g. a generated corpus.
#[derive(Clone, Debug, Default)]
pub struct MemorySource {
    images: Vec<(String, ImageBuffer)>,
}

impl MemorySource {
    pub fn new(images: Vec<(String, ImageBuffer)>) -> Self {
        MemorySource { images }
    }

    pub fn images(&self) -> &[(String, ImageBuffer)] {
        &self.images
    }
}

impl ImageSource for MemorySource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn name(&self, index: usize) -> String {
        self.images[index].0.clone()
    }

    fn load(&self, index: usize) -> Result<ImageBuffer> {
        Ok(self.images[index].1.clone())
    }
}

/// Seeded, epoch-shuffled stream of augmented training pairs.
pub struct Dataset {
    source: Box<dyn ImageSource>,
    augment: AugmentConfig,
    target_bits: u8,
    rng: Rng,
    warnings: usize,
}

impl Dataset {
    pub fn new(
        source: Box<dyn ImageSource>,
        augment: AugmentConfig,
        target_bits: u8,
    ) -> Result<Self> {
        augment.validate()?;
        if source.is_empty() {
            return Err(Error::Argument("empty image source".into()));
        }
        if augment.bit_depth_range.1 >= target_bits {
            return Err(Error::Config(format!(
                "source depth up to {} is not below target depth {target_bits}",
                augment.bit_depth_range.1
            )));
        }
        let rng = Rng::stream(augment.seed, DATA_STREAM);
        Ok(Dataset {
            source,
            augment,
            target_bits,
            rng,
            warnings: 0,
        })
    }

    /// Training stream over one split of a PNG directory.
    pub fn from_dir(
        dir: impl AsRef<Path>,
        split: SplitSpec,
        which: Split,
        augment: AugmentConfig,
        target_bits: u8,
    ) -> Result<Self> {
        let source = DirSource::open(dir)?.split(split, which)?;
        Dataset::new(Box::new(source), augment, target_bits)
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Files skipped so far because they failed to load or pair.
    pub fn warnings(&self) -> usize {
        self.warnings
    }

    pub fn rng_state(&self) -> RngState {
        self.rng.state()
    }

    pub fn restore_rng(&mut self, state: &RngState) {
        self.rng = Rng::from_state(state);
    }

    /// Shuffles the source order and returns an iterator over one pass.
    pub fn epoch(&mut self) -> Epoch<'_> {
        let mut order: Vec<usize> = (0..self.source.len()).collect();
        self.rng.shuffle(&mut order);
        Epoch {
            ds: self,
            order,
            pos: 0,
        }
    }
}

pub struct Epoch<'a> {
    ds: &'a mut Dataset,
    order: Vec<usize>,
    pos: usize,
}

impl Iterator for Epoch<'_> {
    type Item = SamplePair;

    fn next(&mut self) -> Option<SamplePair> {
        while self.pos < self.order.len() {
            let idx = self.order[self.pos];
            self.pos += 1;
            let ds = &mut *self.ds;
            let result = ds.source.load(idx).and_then(|img| {
                let aug = augment(&img, &ds.augment, &mut ds.rng)?;
                make_pair(&aug.image, aug.q, ds.target_bits)
            });
            match result {
                Ok(pair) => return Some(pair),
                Err(e) => {
                    ds.warnings += 1;
                    log::warn!("skipping {}: {e}", ds.source.name(idx));
                }
            }
        }
        None
    }
}
