//! Run configuration: one TOML file drives corpus generation, training,
//! and evaluation. CLI flags and the `FGWK_SEED` environment variable can
//! override the seed; every artifact embeds the resolved snapshot.

use crate::backbone::BackboneConfig;
use crate::combiner::FpnConfig;
use crate::ensemble::VariantId;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::optim::{LionState, SgdState};
use crate::selector::SelectionSchedule;
use crate::synthdata::DatasetSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const SEED_ENV_VAR: &str = "FGWK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub backbone: BackboneSection,
    pub selector: SelectorSection,
    pub combiner: CombinerSection,
    pub optimizer: OptimizerSection,
    /// Per-variant hyperparameter overrides, keyed base|lion|lionfpn.
    pub variants: BTreeMap<String, VariantOverride>,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            dataset: DatasetSpec::default(),
            backbone: BackboneSection::default(),
            selector: SelectorSection::default(),
            combiner: CombinerSection::default(),
            optimizer: OptimizerSection::default(),
            variants: BTreeMap::new(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    pub in_channels: usize,
    pub base_channels: usize,
}

impl Default for BackboneSection {
    fn default() -> Self {
        BackboneSection {
            in_channels: 1,
            base_channels: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorSection {
    /// Points kept per block, largest map first.
    pub selections: Vec<usize>,
}

impl Default for SelectorSection {
    fn default() -> Self {
        SelectorSection {
            selections: crate::selector::DESK_SCHEDULE.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinerSection {
    /// Projection width; accepts desk widths directly or the full-scale
    /// keys 1536/1024, which map to 96/64.
    pub fpn_size: usize,
    /// Width the lionfpn variant uses instead.
    pub fpn_size_variant: usize,
}

impl Default for CombinerSection {
    fn default() -> Self {
        CombinerSection {
            fpn_size: crate::combiner::DESK_PROJ_WIDTH,
            fpn_size_variant: crate::combiner::DESK_PROJ_WIDTH_VARIANT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    /// "sgd" or "lion"; training variants force their own kind.
    pub kind: String,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub weight_decay: f32,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            kind: "sgd".into(),
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantOverride {
    pub optimizer: Option<String>,
    pub lr: Option<f32>,
    pub beta1: Option<f32>,
    pub beta2: Option<f32>,
    pub weight_decay: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    /// Desk default 30; the full-scale regimen uses 100.
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            batch_size: 16,
            epochs: 30,
        }
    }
}

/// Optimizer choice after variant resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedOptimizer {
    Sgd(SgdState),
    Lion(LionState),
}

/// Everything a training run needs for one variant.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub variant: VariantId,
    pub model: ModelConfig,
    pub optimizer: ResolvedOptimizer,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        cfg.dataset.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: serialize: {e}")))
    }

    /// Applies seed precedence: CLI flag, then `FGWK_SEED`, then the file.
    pub fn override_seed(&mut self, cli: Option<u64>) -> Result<()> {
        let from_env = match std::env::var(SEED_ENV_VAR) {
            Ok(text) => Some(text.parse::<u64>().map_err(|_| {
                Error::Config(format!("{SEED_ENV_VAR}: not a valid seed: {text:?}"))
            })?),
            Err(_) => None,
        };
        if let Some(seed) = cli.or(from_env) {
            self.seed = seed;
            self.dataset.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.dataset.image_size % 16 != 0 {
            return Err(Error::Config(format!(
                "dataset.image_size: {} not divisible by 16",
                self.dataset.image_size
            )));
        }
        if self.selector.selections.len() != crate::backbone::NUM_BLOCKS {
            return Err(Error::Config(format!(
                "selector.selections: expected {} entries, got {}",
                crate::backbone::NUM_BLOCKS,
                self.selector.selections.len()
            )));
        }
        parse_kind(&self.optimizer.kind)?;
        if self.train.batch_size == 0 {
            return Err(Error::Config("train.batch_size: must be positive".into()));
        }
        for (name, over) in &self.variants {
            let variant = VariantId::parse(name)
                .map_err(|_| Error::Config(format!("variants: unknown variant {name:?}")))?;
            if let Some(kind) = &over.optimizer {
                let kind = parse_kind(kind)?;
                let forced = forced_kind(variant);
                if kind != forced {
                    return Err(Error::Config(format!(
                        "variants.{name}.optimizer: variant requires {forced:?}"
                    )));
                }
            }
        }
        // Full model-side checks (schedule vs extents and so on).
        self.resolve(VariantId::Base)?.model.validate()?;
        self.resolve(VariantId::LionFpn)?.model.validate()?;
        Ok(())
    }

    fn backbone_config(&self) -> BackboneConfig {
        BackboneConfig {
            in_channels: self.backbone.in_channels,
            base_channels: self.backbone.base_channels,
            input_size: self.dataset.image_size,
        }
    }

    /// Applies the variant rules: base is SGD with the default projection
    /// width, lion swaps the optimizer, lionfpn also swaps the width.
    pub fn resolve(&self, variant: VariantId) -> Result<ResolvedRun> {
        let fpn_key = match variant {
            VariantId::Base | VariantId::Lion => self.combiner.fpn_size,
            VariantId::LionFpn => self.combiner.fpn_size_variant,
        };
        let schedule: [usize; 4] = self
            .selector
            .selections
            .clone()
            .try_into()
            .map_err(|_| Error::Config("selector.selections: expected 4 entries".into()))?;
        let model = ModelConfig {
            backbone: self.backbone_config(),
            num_classes: self.dataset.num_classes(),
            schedule: SelectionSchedule {
                per_block: schedule,
            },
            fpn: FpnConfig::from_key(fpn_key)?,
        };

        let over = self.variants.get(variant.label());
        let pick = |field: fn(&VariantOverride) -> Option<f32>, base: f32| -> f32 {
            over.and_then(field).unwrap_or(base)
        };
        let lr = pick(|o| o.lr, self.optimizer.lr);
        let optimizer = match forced_kind(variant) {
            OptimizerKind::Sgd => ResolvedOptimizer::Sgd(SgdState { lr, momentum: None }),
            OptimizerKind::Lion => {
                let state = LionState {
                    lr,
                    beta1: pick(|o| o.beta1, self.optimizer.beta1),
                    beta2: pick(|o| o.beta2, self.optimizer.beta2),
                    weight_decay: pick(|o| o.weight_decay, self.optimizer.weight_decay),
                };
                state.validate()?;
                ResolvedOptimizer::Lion(state)
            }
        };
        Ok(ResolvedRun {
            variant,
            model,
            optimizer,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OptimizerKind {
    Sgd,
    Lion,
}

fn parse_kind(text: &str) -> Result<OptimizerKind> {
    match text {
        "sgd" => Ok(OptimizerKind::Sgd),
        "lion" => Ok(OptimizerKind::Lion),
        other => Err(Error::Config(format!(
            "optimizer.kind: expected sgd|lion, got {other:?}"
        ))),
    }
}

fn forced_kind(variant: VariantId) -> OptimizerKind {
    match variant {
        VariantId::Base => OptimizerKind::Sgd,
        VariantId::Lion | VariantId::LionFpn => OptimizerKind::Lion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_roundtrips_and_validates() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn variant_rules_force_optimizer_and_width() {
        let mut cfg = RunConfig::default();
        cfg.variants.insert(
            "lion".into(),
            VariantOverride {
                lr: Some(0.002),
                ..Default::default()
            },
        );

        let base = cfg.resolve(VariantId::Base).unwrap();
        assert!(matches!(base.optimizer, ResolvedOptimizer::Sgd(_)));
        assert_eq!(base.model.fpn.proj_width, 96);

        let lion = cfg.resolve(VariantId::Lion).unwrap();
        match &lion.optimizer {
            ResolvedOptimizer::Lion(s) => assert_eq!(s.lr, 0.002),
            other => panic!("expected lion, got {other:?}"),
        }
        assert_eq!(lion.model.fpn.proj_width, 96);

        let fpn = cfg.resolve(VariantId::LionFpn).unwrap();
        assert_eq!(fpn.model.fpn.proj_width, 64);
    }

    #[test]
    fn full_scale_fpn_keys_map_to_desk_widths() {
        let mut cfg = RunConfig::default();
        cfg.combiner.fpn_size = 1536;
        cfg.combiner.fpn_size_variant = 1024;
        assert_eq!(cfg.resolve(VariantId::Base).unwrap().model.fpn.proj_width, 96);
        assert_eq!(
            cfg.resolve(VariantId::LionFpn).unwrap().model.fpn.proj_width,
            64
        );
    }

    #[test]
    fn contradictory_variant_optimizer_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.variants.insert(
            "base".into(),
            VariantOverride {
                optimizer: Some("lion".into()),
                ..Default::default()
            },
        );
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("variants.base.optimizer"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "seed = 3\n[dataset]\nimage_sise = 64\n";
        assert!(RunConfig::from_str(text).is_err());
    }

    #[test]
    fn missing_class_error_names_classes() {
        let text = "seed = 3\n[dataset]\nclasses = [\"a\", \"b\"]\n";
        let cfg = RunConfig::from_str(text).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("classes"), "{msg}");
    }

    #[test]
    fn seed_override_precedence() {
        let mut cfg = RunConfig::from_str("seed = 3").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dataset.seed, 3);
        cfg.override_seed(Some(11)).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.dataset.seed, 11);
    }
}
