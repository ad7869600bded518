//! Geometric and photometric augmentation: rotation, width/height shift,
//! zoom, horizontal flip, brightness. One combined inverse-mapped bilinear
//! resample; out-of-frame pixels fill with the image median.

use super::{GrayImage, LabeledSample, PatchRect, Provenance};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MAX_ROTATION_DEG: f32 = 15.0;
pub const MAX_SHIFT_FRAC: f32 = 0.10;
pub const ZOOM_RANGE: (f32, f32) = (0.9, 1.1);
pub const BRIGHTNESS_RANGE: (f32, f32) = (0.8, 1.2);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f32,
    pub shift_frac_x: f32,
    pub shift_frac_y: f32,
    pub zoom: f32,
    pub hflip: bool,
    pub brightness: f32,
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            rotation_deg: 0.0,
            shift_frac_x: 0.0,
            shift_frac_y: 0.0,
            zoom: 1.0,
            hflip: false,
            brightness: 1.0,
        }
    }

    /// Draws parameters uniformly from the declared ranges.
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        AugmentParams {
            rotation_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
            shift_frac_x: rng.random_range(-MAX_SHIFT_FRAC..=MAX_SHIFT_FRAC),
            shift_frac_y: rng.random_range(-MAX_SHIFT_FRAC..=MAX_SHIFT_FRAC),
            zoom: rng.random_range(ZOOM_RANGE.0..=ZOOM_RANGE.1),
            hflip: rng.random_bool(0.5),
            brightness: rng.random_range(BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rotation_deg.abs() <= MAX_ROTATION_DEG
            && self.shift_frac_x.abs() <= MAX_SHIFT_FRAC
            && self.shift_frac_y.abs() <= MAX_SHIFT_FRAC
            && (ZOOM_RANGE.0..=ZOOM_RANGE.1).contains(&self.zoom)
            && (BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1).contains(&self.brightness);
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "augment: parameters outside declared ranges: {self:?}"
            )))
        }
    }
}

/// Forward map of a source point under flip + rotation/zoom about the
/// center + shift.
fn forward_point(p: (f64, f64), params: &AugmentParams, size: usize) -> (f64, f64) {
    let s = size as f64;
    let c = (s - 1.0) / 2.0;
    let (mut x, y) = p;
    if params.hflip {
        x = s - 1.0 - x;
    }
    let theta = (params.rotation_deg as f64).to_radians();
    let (sin, cos) = theta.sin_cos();
    let z = params.zoom as f64;
    let (dx, dy) = (x - c, y - c);
    (
        c + z * (cos * dx - sin * dy) + params.shift_frac_x as f64 * s,
        c + z * (sin * dx + cos * dy) + params.shift_frac_y as f64 * s,
    )
}

/// Inverse of [`forward_point`], output pixel to source location.
fn inverse_point(p: (f64, f64), params: &AugmentParams, size: usize) -> (f64, f64) {
    let s = size as f64;
    let c = (s - 1.0) / 2.0;
    let theta = (params.rotation_deg as f64).to_radians();
    let (sin, cos) = theta.sin_cos();
    let z = params.zoom as f64;
    let (dx, dy) = (
        p.0 - c - params.shift_frac_x as f64 * s,
        p.1 - c - params.shift_frac_y as f64 * s,
    );
    let mut x = c + (cos * dx + sin * dy) / z;
    let y = c + (-sin * dx + cos * dy) / z;
    if params.hflip {
        x = s - 1.0 - x;
    }
    (x, y)
}

fn bilinear(image: &GrayImage, x: f64, y: f64, fill: f64) -> f64 {
    let s = image.size as isize;
    let x0 = x.floor() as isize;
    let y0 = y.floor() as isize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |xi: isize, yi: isize| -> f64 {
        if xi < 0 || yi < 0 || xi >= s || yi >= s {
            fill
        } else {
            image.pixels[yi as usize * image.size + xi as usize] as f64
        }
    };
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x0 + 1, y0) * fx * (1.0 - fy)
        + at(x0, y0 + 1) * (1.0 - fx) * fy
        + at(x0 + 1, y0 + 1) * fx * fy
}

/// Transforms the patch rectangle with the image: forward-map the corners,
/// take the bounding box, clip to the frame.
fn transform_rect(rect: &PatchRect, params: &AugmentParams, size: usize) -> PatchRect {
    let corners = [
        (rect.x as f64, rect.y as f64),
        ((rect.x + rect.w) as f64 - 1.0, rect.y as f64),
        (rect.x as f64, (rect.y + rect.h) as f64 - 1.0),
        ((rect.x + rect.w) as f64 - 1.0, (rect.y + rect.h) as f64 - 1.0),
    ];
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for corner in corners {
        let (x, y) = forward_point(corner, params, size);
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let lim = (size - 1) as f64;
    let x0 = min_x.round().clamp(0.0, lim) as usize;
    let y0 = min_y.round().clamp(0.0, lim) as usize;
    let x1 = max_x.round().clamp(0.0, lim) as usize;
    let y1 = max_y.round().clamp(0.0, lim) as usize;
    PatchRect {
        x: x0,
        y: y0,
        w: (x1 - x0 + 1).max(1),
        h: (y1 - y0 + 1).max(1),
    }
}

/// Applies the augmentation; the returned sample carries the transformed
/// patch rectangle and `provenance = augmented`.
pub fn augment(sample: &LabeledSample, params: &AugmentParams, new_id: String) -> Result<LabeledSample> {
    params.validate()?;
    let size = sample.image.size;
    let fill = sample.image.median() as f64;
    let mut out = GrayImage::new(size);
    for y in 0..size {
        for x in 0..size {
            let src = inverse_point((x as f64, y as f64), params, size);
            let v = bilinear(&sample.image, src.0, src.1, fill);
            let lit = v * params.brightness as f64;
            out.set(x, y, lit.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(LabeledSample {
        id: new_id,
        image: out,
        label: sample.label,
        patch: transform_rect(&sample.patch, params, size),
        provenance: Provenance::Augmented,
        source_id: sample.source_id.clone(),
        augment: Some(*params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    fn sample_image(seed: u64) -> LabeledSample {
        let image = super::super::generate_original(64, 2, seed, 3).image;
        LabeledSample {
            id: "t".into(),
            image,
            label: 2,
            patch: PatchRect { x: 20, y: 30, w: 12, h: 12 },
            provenance: Provenance::Original,
            source_id: "t".into(),
            augment: None,
        }
    }

    #[test]
    fn identity_params_reproduce_the_image_exactly() {
        let s = sample_image(1);
        let out = augment(&s, &AugmentParams::identity(), "a".into()).unwrap();
        assert_eq!(out.image, s.image);
        assert_eq!(out.patch, s.patch);
        assert_eq!(out.provenance, Provenance::Augmented);
    }

    #[test]
    fn hflip_is_an_involution() {
        let s = sample_image(2);
        let flip = AugmentParams {
            hflip: true,
            ..AugmentParams::identity()
        };
        let once = augment(&s, &flip, "f1".into()).unwrap();
        assert_ne!(once.image, s.image);
        let twice = augment(&once, &flip, "f2".into()).unwrap();
        assert_eq!(twice.image, s.image);
        assert_eq!(twice.patch, s.patch);
    }

    #[test]
    fn rotation_roundtrip_is_close() {
        let s = sample_image(3);
        let rot = |deg: f32| AugmentParams {
            rotation_deg: deg,
            ..AugmentParams::identity()
        };
        let there = augment(&s, &rot(10.0), "r1".into()).unwrap();
        let back = augment(&there, &rot(-10.0), "r2".into()).unwrap();
        let diff: f64 = s
            .image
            .pixels
            .iter()
            .zip(&back.image.pixels)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / s.image.pixels.len() as f64;
        assert!(diff < 8.0, "mean abs diff {diff}");
    }

    #[test]
    fn out_of_range_params_are_rejected() {
        let s = sample_image(4);
        let bad = AugmentParams {
            rotation_deg: 40.0,
            ..AugmentParams::identity()
        };
        assert!(augment(&s, &bad, "b".into()).is_err());
    }

    #[test]
    fn patch_centroid_stays_inside_the_image() {
        let s = sample_image(5);
        let mut rng = derive_rng(99, "aug-prop");
        for _ in 0..200 {
            let params = AugmentParams::sample(&mut rng);
            let out = augment(&s, &params, "p".into()).unwrap();
            let (cx, cy) = out.patch.center();
            assert!(cx >= 0.0 && cx < 64.0 && cy >= 0.0 && cy < 64.0, "{params:?}");
        }
    }

    #[test]
    fn sampled_params_respect_declared_ranges() {
        let mut rng = derive_rng(123, "aug-ranges");
        for _ in 0..500 {
            AugmentParams::sample(&mut rng).validate().unwrap();
        }
    }
}
