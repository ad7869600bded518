//! Synthetic fine-grained corpus with planted discriminative patches.
//!
//! Every image shares the same global structure (two bright vertical bands
//! over textured noise, drawn from a class-independent distribution); the
//! class is determined *only* by a small patch pattern at a random location.
//! Masking the patch therefore removes the class signal entirely, which is
//! what makes the corpus a controlled testbed for selection and attribution.

mod augment;
mod curate;
mod generate;
mod manifest;
mod pgm;

pub use augment::{augment, AugmentParams};
pub use curate::{downsample_class, SplitPlan};
pub use generate::{generate, generate_original, mask_patch, patch_side};
pub use manifest::{load_split, read_corpus_spec, read_manifest, ManifestRow};
pub use pgm::{read_pgm, write_pgm};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SPLITS: [&str; 4] = ["train", "val", "test1", "test2"];

/// Square 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub size: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(size: usize) -> Self {
        GrayImage {
            size,
            pixels: vec![0; size * size],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.size + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.size + x] = v;
    }

    pub fn median(&self) -> u8 {
        let mut sorted = self.pixels.clone();
        sorted.sort_unstable();
        sorted[sorted.len() / 2]
    }

    /// Pixels mapped to [-1, 1] as a `[1,S,S]` tensor.
    pub fn to_tensor(&self) -> crate::numerics::Tensor {
        crate::numerics::Tensor::from_vec(
            &[1, self.size, self.size],
            self.pixels
                .iter()
                .map(|&p| p as f32 / 127.5 - 1.0)
                .collect(),
        )
        .expect("sized construction")
    }
}

/// Axis-aligned patch rectangle, fully inside the image for originals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PatchRect {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64
            && y >= self.y as f64
            && x < (self.x + self.w) as f64
            && y < (self.y + self.h) as f64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    /// Grown by `px` on every side, clipped to the image.
    pub fn dilate(&self, px: usize, image_size: usize) -> PatchRect {
        let x = self.x.saturating_sub(px);
        let y = self.y.saturating_sub(px);
        let x2 = (self.x + self.w + px).min(image_size);
        let y2 = (self.y + self.h + px).min(image_size);
        PatchRect {
            x,
            y,
            w: x2 - x,
            h: y2 - y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Augmented,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Original => write!(f, "original"),
            Provenance::Augmented => write!(f, "augmented"),
        }
    }
}

/// One corpus member.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub id: String,
    pub image: GrayImage,
    pub label: usize,
    pub patch: PatchRect,
    pub provenance: Provenance,
    /// Pool id of the original this sample derives from (its own pool id
    /// for originals).
    pub source_id: String,
    pub augment: Option<AugmentParams>,
}

/// Everything that determines the corpus; (spec, seed) fixes every byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub classes: Vec<String>,
    pub image_size: usize,
    pub train_per_class: usize,
    pub test1_per_class: usize,
    /// Small, original-only, deliberately uneven counts per class.
    pub test2_per_class: Vec<usize>,
    pub val_fraction: f64,
    /// Size of the per-class source pool that all splits draw from.
    pub originals_per_class: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: default_classes(),
            image_size: 64,
            train_per_class: 500,
            test1_per_class: 120,
            test2_per_class: vec![6, 9, 5, 8],
            val_fraction: 0.2,
            originals_per_class: 64,
            seed: 7,
        }
    }
}

/// Class names in painter order: thin dark line, bright blob, dense
/// speckle, soft gradient.
pub fn default_classes() -> Vec<String> {
    ["crack", "blob", "speckle", "smudge"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl DatasetSpec {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() != 4 {
            return Err(Error::Config(format!(
                "classes: expected 4 names, got {}",
                self.classes.len()
            )));
        }
        if self.classes.iter().any(|c| c.is_empty()) {
            return Err(Error::Config("classes: empty class name".into()));
        }
        if self.image_size < 32 {
            return Err(Error::Config(format!(
                "image_size: {} too small (need >= 32)",
                self.image_size
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction: {} outside (0, 1)",
                self.val_fraction
            )));
        }
        if self.test2_per_class.len() != self.classes.len() {
            return Err(Error::Config(format!(
                "test2_per_class: {} counts for {} classes",
                self.test2_per_class.len(),
                self.classes.len()
            )));
        }
        if self.test2_per_class.iter().any(|&c| c == 0) {
            return Err(Error::Config("test2_per_class: zero count".into()));
        }
        if self.test2_per_class.iter().any(|&c| c > self.test1_per_class) {
            return Err(Error::Config(
                "test2_per_class: exceeds test1_per_class".into(),
            ));
        }
        if self.train_per_class == 0 || self.test1_per_class == 0 {
            return Err(Error::Config("train_per_class/test1_per_class: zero".into()));
        }
        Ok(())
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("class: unknown name {name}")))
    }
}
