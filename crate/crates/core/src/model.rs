//! The assembled recognition pipeline: backbone, per-block selector heads,
//! and the fusion/prediction stack, with one auxiliary classification loss
//! per block on top of the final loss.

use crate::backbone::{Backbone, BackboneConfig, NUM_BLOCKS};
use crate::combiner::{Combiner, FpnConfig};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::numerics::{argmax, Tensor};
use crate::selector::{select_block, select_block_frozen, ClassScoreMap, SelectionResult, SelectionSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub num_classes: usize,
    pub schedule: SelectionSchedule,
    pub fpn: FpnConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneConfig::default(),
            num_classes: 4,
            schedule: SelectionSchedule::default(),
            fpn: FpnConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes: need at least 2, got {}",
                self.num_classes
            )));
        }
        let extents: [usize; NUM_BLOCKS] =
            std::array::from_fn(|b| self.backbone.block_extent(b));
        self.schedule.validate(&extents)?;
        if self.fpn.proj_width == 0 {
            return Err(Error::Config("fpn_size: must be positive".into()));
        }
        Ok(())
    }

    pub fn block_channels(&self) -> [usize; NUM_BLOCKS] {
        std::array::from_fn(|b| self.backbone.block_channels(b))
    }
}

/// Everything one forward pass produces, with the graph handles needed for
/// losses and attribution retained.
pub struct ForwardOutput {
    /// Final logits `[1, C']`.
    pub logits: Tensor,
    /// Spatially averaged per-block head logits, `[1, C']` each.
    pub aux_logits: Vec<Tensor>,
    /// Backbone maps, kept so interior gradients can be read back.
    pub feature_maps: Vec<Tensor>,
    pub selections: Vec<SelectionResult>,
    pub score_maps: Vec<ClassScoreMap>,
}

pub struct FgvrModel {
    pub backbone: Backbone,
    pub heads: Vec<Linear>,
    pub combiner: Combiner,
    cfg: ModelConfig,
}

impl FgvrModel {
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let backbone = Backbone::init(cfg.backbone.clone(), seed)?;
        let heads = (0..NUM_BLOCKS)
            .map(|b| {
                Linear::init(
                    &format!("selector.block{}", b + 1),
                    cfg.backbone.block_channels(b),
                    cfg.num_classes,
                    seed,
                )
            })
            .collect();
        let combiner = Combiner::init(&cfg.block_channels(), cfg.fpn, cfg.num_classes, seed);
        Ok(FgvrModel {
            backbone,
            heads,
            combiner,
            cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn forward(&self, image: &Tensor) -> Result<ForwardOutput> {
        let maps = self.backbone.forward(image)?.maps;
        let mut selections = Vec::with_capacity(NUM_BLOCKS);
        let mut score_maps = Vec::with_capacity(NUM_BLOCKS);
        let mut points = Vec::with_capacity(NUM_BLOCKS);
        for (b, fmap) in maps.iter().enumerate() {
            let k = self.cfg.schedule.per_block[b];
            let (sel, scores) = select_block(fmap, &self.heads[b], k)?;
            points.push(sel.points.clone());
            selections.push(sel);
            score_maps.push(scores);
        }
        let logits = self.combiner.forward(&points)?;
        let aux_logits = score_maps
            .iter()
            .map(|s| s.rows.row_mean())
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardOutput {
            logits,
            aux_logits,
            feature_maps: maps,
            selections,
            score_maps,
        })
    }

    /// Forward pass with externally fixed per-block selections. Used where
    /// the piecewise-constant ranking must not move, e.g. finite-difference
    /// checks.
    pub fn forward_frozen(&self, image: &Tensor, chosen: &[Vec<usize>]) -> Result<ForwardOutput> {
        if chosen.len() != NUM_BLOCKS {
            return Err(Error::Contract(format!(
                "forward_frozen: expected {} selections, got {}",
                NUM_BLOCKS,
                chosen.len()
            )));
        }
        let maps = self.backbone.forward(image)?.maps;
        let mut score_maps = Vec::with_capacity(NUM_BLOCKS);
        let mut points = Vec::with_capacity(NUM_BLOCKS);
        let mut selections = Vec::with_capacity(NUM_BLOCKS);
        for (b, fmap) in maps.iter().enumerate() {
            let (pts, scores) = select_block_frozen(fmap, &self.heads[b], &chosen[b])?;
            selections.push(SelectionResult {
                sorted_indices: Vec::new(),
                chosen: chosen[b].clone(),
                confidences: Vec::new(),
                points: pts.clone(),
            });
            points.push(pts);
            score_maps.push(scores);
        }
        let logits = self.combiner.forward(&points)?;
        let aux_logits = score_maps
            .iter()
            .map(|s| s.rows.row_mean())
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardOutput {
            logits,
            aux_logits,
            feature_maps: maps,
            selections,
            score_maps,
        })
    }

    /// Total training loss over a batch: final cross-entropy plus the four
    /// per-block auxiliary cross-entropies, all weighted 1. Returns the
    /// loss and the stacked final logits `[B, C']`.
    pub fn batch_loss(&self, images: &[Tensor], labels: &[usize]) -> Result<(Tensor, Tensor)> {
        let outputs = images
            .iter()
            .map(|img| self.forward(img))
            .collect::<Result<Vec<_>>>()?;
        self.assemble_loss(&outputs, labels)
    }

    /// As [`FgvrModel::batch_loss`] but with per-image frozen selections.
    pub fn batch_loss_frozen(
        &self,
        images: &[Tensor],
        labels: &[usize],
        selections: &[Vec<Vec<usize>>],
    ) -> Result<(Tensor, Tensor)> {
        let outputs = images
            .iter()
            .zip(selections)
            .map(|(img, sel)| self.forward_frozen(img, sel))
            .collect::<Result<Vec<_>>>()?;
        self.assemble_loss(&outputs, labels)
    }

    fn assemble_loss(&self, outputs: &[ForwardOutput], labels: &[usize]) -> Result<(Tensor, Tensor)> {
        let final_rows: Vec<&Tensor> = outputs.iter().map(|o| &o.logits).collect();
        let final_logits = Tensor::concat_rows(&final_rows)?;
        let mut total = Tensor::cross_entropy(&final_logits, labels)?;
        for b in 0..NUM_BLOCKS {
            let aux_rows: Vec<&Tensor> = outputs.iter().map(|o| &o.aux_logits[b]).collect();
            let aux = Tensor::concat_rows(&aux_rows)?;
            total = total.add(&Tensor::cross_entropy(&aux, labels)?)?;
        }
        Ok((total, final_logits))
    }

    /// Predicted class and softmax confidence vector for one image.
    pub fn predict(&self, image: &Tensor) -> Result<(usize, Vec<f32>)> {
        let out = self.forward(image)?;
        let probs = out.logits.detach().softmax()?.to_vec();
        Ok((argmax(&probs), probs))
    }

    /// Named parameters in a stable order.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.backbone.params();
        for head in &self.heads {
            out.extend(head.params());
        }
        out.extend(self.combiner.params());
        out
    }

    pub fn zero_grads(&self) {
        for (_, p) in self.params() {
            p.zero_grad();
        }
    }
}
