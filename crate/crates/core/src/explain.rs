//! Gradient-weighted class activation maps and their localization scoring.
//!
//! The heatmap comes from the deepest backbone block by default: channel
//! weights are the spatial mean of d(score)/d(activation), the weighted
//! activation sum is clamped at zero, min-max normalized (an all-zero map
//! stays all-zero), and bilinearly upsampled to image resolution.

use crate::backbone::NUM_BLOCKS;
use crate::error::{Error, Result};
use crate::model::FgvrModel;
use crate::numerics::Tensor;
use crate::synthdata::{GrayImage, PatchRect};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct HeatMap {
    /// Row-major `size x size` values in [0, 1].
    pub values: Vec<f32>,
    pub size: usize,
    pub target_class: usize,
    /// 1-based backbone block the map was taken from.
    pub source_layer: usize,
}

/// Grad-CAM on the last backbone block.
pub fn grad_cam(model: &FgvrModel, image: &Tensor, target_class: usize) -> Result<HeatMap> {
    grad_cam_at(model, image, target_class, NUM_BLOCKS)
}

/// Grad-CAM on a chosen backbone block (1-based).
pub fn grad_cam_at(
    model: &FgvrModel,
    image: &Tensor,
    target_class: usize,
    layer: usize,
) -> Result<HeatMap> {
    let classes = model.config().num_classes;
    if target_class >= classes {
        return Err(Error::Contract(format!(
            "grad_cam: class {target_class} out of range for {classes}"
        )));
    }
    if layer == 0 || layer > NUM_BLOCKS {
        return Err(Error::Contract(format!(
            "grad_cam: layer {layer} out of range (1..={NUM_BLOCKS})"
        )));
    }
    let out = model.forward(image)?;
    let score = out.logits.select_element(target_class)?;
    score.backward()?;

    let fmap = &out.feature_maps[layer - 1];
    let shape = fmap.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let cam = cam_from_activations(&fmap.to_vec(), &fmap.grad_or_zeros(), c, h, w);

    // Weight gradients accumulated during the attribution pass are not a
    // training signal; drop them.
    model.zero_grads();

    let size = model.config().backbone.input_size;
    let values = upsample_bilinear(&cam, h, w, size);
    Ok(HeatMap {
        values,
        size,
        target_class,
        source_layer: layer,
    })
}

/// Core attribution arithmetic: spatial-mean channel weights, weighted sum,
/// relu, min-max normalization.
pub fn cam_from_activations(acts: &[f32], grads: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let hw = h * w;
    let mut cam = vec![0.0f32; hw];
    for ch in 0..c {
        let plane = &acts[ch * hw..(ch + 1) * hw];
        let gplane = &grads[ch * hw..(ch + 1) * hw];
        let weight: f32 = gplane.iter().sum::<f32>() / hw as f32;
        for (o, &a) in cam.iter_mut().zip(plane) {
            *o += weight * a;
        }
    }
    for v in cam.iter_mut() {
        *v = v.max(0.0);
    }
    min_max_normalize(&mut cam);
    cam
}

/// Scales to [0, 1]; a constant map (max == min) collapses to all-zero.
pub fn min_max_normalize(values: &mut [f32]) {
    let max = values.iter().fold(f32::NEG_INFINITY, |a, &v| a.max(v));
    let min = values.iter().fold(f32::INFINITY, |a, &v| a.min(v));
    if max > min {
        let inv = 1.0 / (max - min);
        for v in values.iter_mut() {
            *v = (*v - min) * inv;
        }
    } else {
        for v in values.iter_mut() {
            *v = 0.0;
        }
    }
}

pub fn upsample_bilinear(values: &[f32], h: usize, w: usize, out_size: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; out_size * out_size];
    let sy = h as f32 / out_size as f32;
    let sx = w as f32 / out_size as f32;
    for oy in 0..out_size {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f32;
        for ox in 0..out_size {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f32;
            out[oy * out_size + ox] = values[y0 * w + x0] * (1.0 - wx) * (1.0 - wy)
                + values[y0 * w + x1] * wx * (1.0 - wy)
                + values[y1 * w + x0] * (1.0 - wx) * wy
                + values[y1 * w + x1] * wx * wy;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationScore {
    /// Centroid of the top-decile heat lies inside the patch dilated by
    /// 2 px. False for an all-zero map.
    pub hit: bool,
    /// Fraction of total heat inside the (undilated) patch.
    pub mass_in_patch: f64,
}

/// Scores how well the heatmap localizes the ground-truth patch.
pub fn localization_score(hm: &HeatMap, patch: &PatchRect) -> LocalizationScore {
    let total: f64 = hm.values.iter().map(|&v| v as f64).sum();
    if total <= 0.0 {
        return LocalizationScore {
            hit: false,
            mass_in_patch: 0.0,
        };
    }

    let mut inside = 0.0f64;
    for y in patch.y..(patch.y + patch.h).min(hm.size) {
        for x in patch.x..(patch.x + patch.w).min(hm.size) {
            inside += hm.values[y * hm.size + x] as f64;
        }
    }

    // Top decile by pixel count: the 10% hottest pixels, value-weighted.
    let n = hm.values.len();
    let keep = n.div_ceil(10);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| hm.values[b].total_cmp(&hm.values[a]).then_with(|| a.cmp(&b)));
    let (mut cx, mut cy, mut mass) = (0.0f64, 0.0f64, 0.0f64);
    for &i in order.iter().take(keep) {
        let v = hm.values[i] as f64;
        cx += v * (i % hm.size) as f64;
        cy += v * (i / hm.size) as f64;
        mass += v;
    }
    let hit = if mass > 0.0 {
        let dilated = patch.dilate(2, hm.size);
        dilated.contains(cx / mass, cy / mass)
    } else {
        false
    };

    LocalizationScore {
        hit,
        mass_in_patch: inside / total,
    }
}

/// Fixed colormap from cold to hot: black-blue through red to yellow-white.
pub fn heat_color(t: f32) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let ramp = |lo: f32, hi: f32| ((t - lo) / (hi - lo)).clamp(0.0, 1.0);
    let r = (ramp(0.0, 0.5) * 255.0).round() as u8;
    let g = (ramp(0.35, 0.85) * 255.0).round() as u8;
    let b = ((0.35 - 0.7 * (t - 0.15).abs()).clamp(0.0, 0.35) / 0.35 * 160.0).round() as u8;
    (r, g, b)
}

/// Renders the heat over the grayscale image. Per-pixel alpha is
/// 0.4 * heat, so zero heat leaves the pixel untouched and full heat blends
/// 40% of the colormap's top color.
pub fn overlay(image: &GrayImage, hm: &HeatMap) -> Result<Vec<u8>> {
    if image.size != hm.size {
        return Err(Error::dim(
            "overlay",
            &[image.size, image.size],
            &[hm.size, hm.size],
        ));
    }
    let mut rgb = Vec::with_capacity(image.size * image.size * 3);
    for (i, &gray) in image.pixels.iter().enumerate() {
        let t = hm.values[i];
        let (r, g, b) = heat_color(t);
        let alpha = 0.4 * t;
        let blend = |c: u8| -> u8 {
            ((1.0 - alpha) * gray as f32 + alpha * c as f32)
                .round()
                .clamp(0.0, 255.0) as u8
        };
        rgb.push(blend(r));
        rgb.push(blend(g));
        rgb.push(blend(b));
    }
    Ok(rgb)
}

/// Binary PPM (P6) writer for overlay rasters.
pub fn write_ppm(path: &Path, size: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != size * size * 3 {
        return Err(Error::Contract(format!(
            "write_ppm: expected {} bytes, got {}",
            size * size * 3,
            rgb.len()
        )));
    }
    let mut buf = Vec::with_capacity(rgb.len() + 32);
    write!(buf, "P6\n{size} {size}\n255\n")?;
    buf.extend_from_slice(rgb);
    std::fs::write(path, buf)?;
    Ok(())
}
