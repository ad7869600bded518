//! Tab-separated corpus manifest: one row per image with patch rectangle,
//! provenance, source pool id, and the augmentation parameters that
//! produced it.

use super::{AugmentParams, DatasetSpec, GrayImage, LabeledSample, PatchRect, Provenance};
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

pub const MANIFEST_HEADER: &str = "sample_id\tsplit\tclass\tpatch_x\tpatch_y\tpatch_w\tpatch_h\tprovenance\tsource_id\trotation_deg\tshift_x\tshift_y\tzoom\thflip\tbrightness";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub split: String,
    pub class: String,
    pub patch: PatchRect,
    pub provenance: Provenance,
    pub source_id: String,
    pub augment: Option<AugmentParams>,
}

impl ManifestRow {
    fn to_line(&self) -> String {
        let a = self.augment.unwrap_or_else(AugmentParams::identity);
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.4}",
            self.sample_id,
            self.split,
            self.class,
            self.patch.x,
            self.patch.y,
            self.patch.w,
            self.patch.h,
            self.provenance,
            self.source_id,
            a.rotation_deg,
            a.shift_frac_x,
            a.shift_frac_y,
            a.zoom,
            u8::from(a.hflip),
            a.brightness,
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 15 {
            return Err(Error::Format(format!(
                "manifest: expected 15 fields, got {} in {line:?}",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| Error::Format(format!("manifest: field {i}: {:?}", fields[i])))
        };
        let real = |i: usize| -> Result<f32> {
            fields[i]
                .parse()
                .map_err(|_| Error::Format(format!("manifest: field {i}: {:?}", fields[i])))
        };
        let provenance = match fields[7] {
            "original" => Provenance::Original,
            "augmented" => Provenance::Augmented,
            other => {
                return Err(Error::Format(format!("manifest: provenance: {other:?}")))
            }
        };
        let augment = match provenance {
            Provenance::Original => None,
            Provenance::Augmented => Some(AugmentParams {
                rotation_deg: real(9)?,
                shift_frac_x: real(10)?,
                shift_frac_y: real(11)?,
                zoom: real(12)?,
                hflip: fields[13] == "1",
                brightness: real(14)?,
            }),
        };
        Ok(ManifestRow {
            sample_id: fields[0].to_string(),
            split: fields[1].to_string(),
            class: fields[2].to_string(),
            patch: PatchRect {
                x: num(3)?,
                y: num(4)?,
                w: num(5)?,
                h: num(6)?,
            },
            provenance,
            source_id: fields[8].to_string(),
            augment,
        })
    }
}

pub fn write_manifest<'a>(
    path: &Path,
    rows: impl Iterator<Item = &'a ManifestRow>,
) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_line());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == MANIFEST_HEADER => {}
        _ => return Err(Error::Format("manifest: bad or missing header".into())),
    }
    lines.map(ManifestRow::parse).collect()
}

/// Loads every member of `split` with its image, labels resolved through
/// the corpus spec snapshot.
pub fn load_split(corpus_dir: &Path, split: &str) -> Result<Vec<LabeledSample>> {
    let spec = read_corpus_spec(corpus_dir)?;
    let rows = read_manifest(&corpus_dir.join("manifest.tsv"))?;
    let mut out = Vec::new();
    for row in rows.into_iter().filter(|r| r.split == split) {
        let label = spec.class_index(&row.class)?;
        let path = corpus_dir
            .join(&row.split)
            .join(&row.class)
            .join(format!("{}.pgm", row.sample_id));
        let image: GrayImage = super::read_pgm(&path)?;
        if image.size != spec.image_size {
            return Err(Error::Format(format!(
                "image_size: {} is {}, corpus spec says {}",
                row.sample_id, image.size, spec.image_size
            )));
        }
        out.push(LabeledSample {
            id: row.sample_id,
            image,
            label,
            patch: row.patch,
            provenance: row.provenance,
            source_id: row.source_id,
            augment: row.augment,
        });
    }
    Ok(out)
}

pub fn read_corpus_spec(corpus_dir: &Path) -> Result<DatasetSpec> {
    let text = fs::read_to_string(corpus_dir.join("spec.toml"))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("spec.toml: {e}")))
}
