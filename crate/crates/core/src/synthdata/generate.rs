//! Image synthesis and corpus generation.

use super::curate::SplitPlan;
use super::manifest::{write_manifest, ManifestRow};
use super::{augment, AugmentParams, DatasetSpec, GrayImage, LabeledSample, PatchRect, Provenance};
use crate::error::{Error, Result};
use crate::rng::derive_rng_indexed;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::Path;

/// Patch side length: 12 px at the default 64 px image, scaled
/// proportionally, never above 20% of the side so the 4% area bound holds.
pub fn patch_side(image_size: usize) -> usize {
    ((image_size * 12) / 64).max(6).min(image_size / 5)
}

/// Shared global structure: a medium-gray field with two bright vertical
/// bands plus coarse and fine noise. Class-independent by construction.
fn generate_background(size: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let s = size as f64;
    let mut field = vec![90.0f64; size * size];

    // Two soft-edged vertical bands with jittered centers and widths.
    for base_center in [0.34, 0.66] {
        let center = (base_center + rng.random_range(-0.04..0.04)) * s;
        let half_width = rng.random_range(0.055..0.075) * s;
        let gain = rng.random_range(48.0..62.0);
        for x in 0..size {
            let d = ((x as f64 - center) / half_width).abs();
            if d < 1.5 {
                let profile = 0.5 + 0.5 * (std::f64::consts::PI * (d / 1.5)).cos();
                for y in 0..size {
                    field[y * size + x] += gain * profile;
                }
            }
        }
    }

    // Coarse value noise: random grid, bilinearly upsampled.
    let grid_step = (size / 8).max(2);
    let grid_n = size / grid_step + 2;
    let grid: Vec<f64> = (0..grid_n * grid_n)
        .map(|_| rng.random_range(-14.0..14.0))
        .collect();
    for y in 0..size {
        let gy = y as f64 / grid_step as f64;
        let y0 = gy.floor() as usize;
        let fy = gy - y0 as f64;
        for x in 0..size {
            let gx = x as f64 / grid_step as f64;
            let x0 = gx.floor() as usize;
            let fx = gx - x0 as f64;
            let v = grid[y0 * grid_n + x0] * (1.0 - fx) * (1.0 - fy)
                + grid[y0 * grid_n + x0 + 1] * fx * (1.0 - fy)
                + grid[(y0 + 1) * grid_n + x0] * (1.0 - fx) * fy
                + grid[(y0 + 1) * grid_n + x0 + 1] * fx * fy;
            field[y * size + x] += v;
        }
    }

    // Fine grain.
    for v in field.iter_mut() {
        *v += rng.random_range(-7.0..7.0);
    }

    GrayImage {
        size,
        pixels: field
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect(),
    }
}

fn add_clamped(image: &mut GrayImage, x: usize, y: usize, delta: f64) {
    let v = image.get(x, y) as f64 + delta;
    image.set(x, y, v.round().clamp(0.0, 255.0) as u8);
}

/// Paints the class pattern inside the rectangle. Painter order matches
/// the default class names: crack, blob, speckle, smudge.
fn paint_patch(image: &mut GrayImage, rect: &PatchRect, class: usize, rng: &mut ChaCha8Rng) {
    let (cx, cy) = rect.center();
    match class {
        // Thin dark jagged line through the patch.
        0 => {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (sin, cos) = theta.sin_cos();
            let half = rect.w.min(rect.h) as f64 / 2.0;
            let mut t = -half;
            while t <= half {
                let jitter = rng.random_range(-0.7..0.7);
                let px = cx + t * cos - jitter * sin;
                let py = cy + t * sin + jitter * cos;
                for dy in 0..2usize {
                    for dx in 0..2usize {
                        let xi = (px as isize) + dx as isize;
                        let yi = (py as isize) + dy as isize;
                        if xi >= 0 && yi >= 0 && rect.contains(xi as f64, yi as f64) {
                            add_clamped(image, xi as usize, yi as usize, -75.0);
                        }
                    }
                }
                t += 0.5;
            }
        }
        // Bright round blob with gaussian falloff.
        1 => {
            let bx = cx + rng.random_range(-1.0..1.0);
            let by = cy + rng.random_range(-1.0..1.0);
            let sigma = rect.w.min(rect.h) as f64 / 4.0;
            for y in rect.y..rect.y + rect.h {
                for x in rect.x..rect.x + rect.w {
                    let r2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    let delta = 85.0 * (-r2 / (2.0 * sigma * sigma)).exp();
                    add_clamped(image, x, y, delta);
                }
            }
        }
        // Dense bright/dark speckle dots.
        2 => {
            let dots = (rect.area() / 5).max(8);
            for _ in 0..dots {
                let x = rng.random_range(rect.x..rect.x + rect.w);
                let y = rng.random_range(rect.y..rect.y + rect.h);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                add_clamped(image, x, y, sign * 75.0);
            }
        }
        // Soft linear gradient across the patch.
        3 => {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (sin, cos) = theta.sin_cos();
            let half = rect.w.max(rect.h) as f64 / 2.0;
            for y in rect.y..rect.y + rect.h {
                for x in rect.x..rect.x + rect.w {
                    let proj = ((x as f64 - cx) * cos + (y as f64 - cy) * sin) / half;
                    add_clamped(image, x, y, 45.0 * proj.clamp(-1.0, 1.0));
                }
            }
        }
        other => panic!("no painter for class {other}"),
    }
}

/// One original sample. The background stream and the patch stream derive
/// from (seed, class, index) so the corpus is reproducible byte for byte.
pub fn generate_original(image_size: usize, class: usize, seed: u64, index: u64) -> LabeledSample {
    let mut bg_rng = derive_rng_indexed(seed, "background", index * 16 + class as u64);
    let mut image = generate_background(image_size, &mut bg_rng);

    let side = patch_side(image_size);
    let margin = 2;
    let mut patch_rng = derive_rng_indexed(seed, &format!("patch/{class}"), index);
    let x = patch_rng.random_range(margin..image_size - side - margin);
    let y = patch_rng.random_range(margin..image_size - side - margin);
    let rect = PatchRect { x, y, w: side, h: side };
    paint_patch(&mut image, &rect, class, &mut patch_rng);

    let id = format!("orig_c{class}_{index:04}");
    LabeledSample {
        id: id.clone(),
        image,
        label: class,
        patch: rect,
        provenance: Provenance::Original,
        source_id: id,
        augment: None,
    }
}

/// Replaces the patch region with the median of a one-pixel ring around
/// it, removing the class cue without leaving an intensity edge.
pub fn mask_patch(sample: &LabeledSample) -> GrayImage {
    let mut out = sample.image.clone();
    let rect = &sample.patch;
    let ring = rect.dilate(1, out.size);
    let mut border: Vec<u8> = Vec::new();
    for y in ring.y..ring.y + ring.h {
        for x in ring.x..ring.x + ring.w {
            if !rect.contains(x as f64, y as f64) {
                border.push(out.get(x, y));
            }
        }
    }
    let fill = if border.is_empty() {
        out.median()
    } else {
        border.sort_unstable();
        border[border.len() / 2]
    };
    for y in rect.y..rect.y + rect.h.min(out.size - rect.y) {
        for x in rect.x..rect.x + rect.w.min(out.size - rect.x) {
            out.set(x, y, fill);
        }
    }
    out
}

/// Generates the corpus on disk: per-split per-class PGM files plus
/// `manifest.tsv` and a `spec.toml` snapshot.
pub fn generate(spec: &DatasetSpec, out_dir: &Path) -> Result<SplitPlan> {
    spec.validate()?;
    let plan = SplitPlan::allocate(spec)?;

    // Source pools, generated once per class.
    let pools: Vec<Vec<LabeledSample>> = (0..spec.num_classes())
        .map(|class| {
            (0..spec.originals_per_class)
                .map(|i| generate_original(spec.image_size, class, spec.seed, i as u64))
                .collect()
        })
        .collect();

    let mut rows: Vec<(ManifestRow, GrayImage)> = Vec::new();
    for (class, class_name) in spec.classes.iter().enumerate() {
        for split in super::SPLITS {
            let alloc = plan.class_split(class, split);
            let sources: Vec<&LabeledSample> =
                alloc.source_range.clone().map(|i| &pools[class][i]).collect();
            let target = alloc.count;
            if sources.is_empty() && target > 0 {
                return Err(Error::Config(format!(
                    "originals_per_class: no sources left for {split}/{class_name}"
                )));
            }
            for member in 0..target {
                let id = format!("{split}_{class_name}_{member:05}");
                let sample = if member < sources.len() {
                    let src = sources[member];
                    LabeledSample {
                        id: id.clone(),
                        ..src.clone()
                    }
                } else {
                    let src = sources[member % sources.len()];
                    let mut rng = derive_rng_indexed(
                        spec.seed,
                        &format!("aug/{split}/{class_name}"),
                        member as u64,
                    );
                    let params = AugmentParams::sample(&mut rng);
                    augment(src, &params, id.clone())?
                };
                rows.push((
                    ManifestRow {
                        sample_id: id,
                        split: split.to_string(),
                        class: class_name.clone(),
                        patch: sample.patch,
                        provenance: sample.provenance,
                        source_id: sample.source_id.clone(),
                        augment: sample.augment,
                    },
                    sample.image,
                ));
            }
        }
    }

    // Write images under <split>/<class>/<id>.pgm.
    for (row, image) in &rows {
        let dir = out_dir.join(&row.split).join(&row.class);
        fs::create_dir_all(&dir)?;
        super::write_pgm(&dir.join(format!("{}.pgm", row.sample_id)), image)?;
    }

    write_manifest(
        &out_dir.join("manifest.tsv"),
        rows.iter().map(|(row, _)| row),
    )?;
    let spec_text = toml::to_string(spec)
        .map_err(|e| Error::Format(format!("spec.toml: serialize failed: {e}")))?;
    fs::write(out_dir.join("spec.toml"), spec_text)?;
    Ok(plan)
}
