//! Three-member majority voting.
//!
//! Hard label voting first: any class with two or more votes wins. A
//! three-way split falls back to the argmax of the summed softmax
//! confidence vectors, remaining ties resolve to the lowest class index.

use crate::error::{Error, Result};
use crate::evalkit::{per_class_metrics, ConfusionMatrix, MetricsReport};
use crate::model::FgvrModel;
use crate::numerics::{argmax, Tensor};
use crate::synthdata::LabeledSample;

pub const MEMBERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantId {
    Base,
    Lion,
    LionFpn,
}

impl VariantId {
    pub const ALL: [VariantId; MEMBERS] = [VariantId::Base, VariantId::Lion, VariantId::LionFpn];

    pub fn label(&self) -> &'static str {
        match self {
            VariantId::Base => "base",
            VariantId::Lion => "lion",
            VariantId::LionFpn => "lionfpn",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "base" => Ok(VariantId::Base),
            "lion" => Ok(VariantId::Lion),
            "lionfpn" => Ok(VariantId::LionFpn),
            other => Err(Error::Config(format!(
                "variant: expected base|lion|lionfpn, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for VariantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of one vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteRecord {
    /// Per-member predicted class, in member order.
    pub member_classes: [usize; MEMBERS],
    /// Per-member softmax confidence vectors.
    pub member_confidences: Vec<Vec<f32>>,
    pub final_class: usize,
    /// True when no class had two votes and confidences decided.
    pub tie_broken: bool,
}

/// Majority vote over exactly three (class, confidence vector) pairs.
pub fn vote(predictions: &[(usize, Vec<f32>)]) -> Result<VoteRecord> {
    if predictions.len() != MEMBERS {
        return Err(Error::Contract(format!(
            "vote: expected {} voters, got {}",
            MEMBERS,
            predictions.len()
        )));
    }
    let width = predictions[0].1.len();
    for (class, conf) in predictions {
        if conf.len() != width {
            return Err(Error::Contract(format!(
                "vote: confidence widths differ ({} vs {width})",
                conf.len()
            )));
        }
        if *class >= width {
            return Err(Error::index("vote", *class, width));
        }
    }

    let classes = [predictions[0].0, predictions[1].0, predictions[2].0];
    let mut majority = None;
    for &candidate in &classes {
        if classes.iter().filter(|&&c| c == candidate).count() >= 2 {
            majority = Some(candidate);
            break;
        }
    }
    let (final_class, tie_broken) = match majority {
        Some(c) => (c, false),
        None => {
            let mut summed = vec![0.0f32; width];
            for (_, conf) in predictions {
                for (s, &c) in summed.iter_mut().zip(conf) {
                    *s += c;
                }
            }
            (argmax(&summed), true)
        }
    };

    Ok(VoteRecord {
        member_classes: classes,
        member_confidences: predictions.iter().map(|(_, c)| c.clone()).collect(),
        final_class,
        tie_broken,
    })
}

/// One evaluated sample of an ensemble run.
#[derive(Debug, Clone)]
pub struct SampleVote {
    pub sample_id: String,
    pub true_label: usize,
    pub record: VoteRecord,
}

pub struct EnsembleEvaluation {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub votes: Vec<SampleVote>,
}

/// Checks that the three members agree on class count and input size.
pub fn check_members_compatible(models: &[FgvrModel]) -> Result<()> {
    if models.len() != MEMBERS {
        return Err(Error::Contract(format!(
            "ensemble: expected {} members, got {}",
            MEMBERS,
            models.len()
        )));
    }
    let first = models[0].config();
    for m in &models[1..] {
        let cfg = m.config();
        if cfg.num_classes != first.num_classes {
            return Err(Error::Format(format!(
                "num_classes: members disagree ({} vs {})",
                first.num_classes, cfg.num_classes
            )));
        }
        if cfg.backbone.input_size != first.backbone.input_size {
            return Err(Error::Format(format!(
                "input_size: members disagree ({} vs {})",
                first.backbone.input_size, cfg.backbone.input_size
            )));
        }
    }
    Ok(())
}

/// Runs the three members over the dataset and votes per sample.
pub fn ensemble_eval(models: &[FgvrModel], samples: &[LabeledSample]) -> Result<EnsembleEvaluation> {
    check_members_compatible(models)?;
    let classes = models[0].config().num_classes;
    let mut confusion = ConfusionMatrix::new(classes);
    let mut votes = Vec::with_capacity(samples.len());
    for sample in samples {
        let image: Tensor = sample.image.to_tensor();
        let predictions = models
            .iter()
            .map(|m| m.predict(&image))
            .collect::<Result<Vec<_>>>()?;
        let record = vote(&predictions)?;
        confusion.accumulate(sample.label, record.final_class)?;
        votes.push(SampleVote {
            sample_id: sample.id.clone(),
            true_label: sample.label,
            record,
        });
    }
    Ok(EnsembleEvaluation {
        report: per_class_metrics(&confusion)?,
        confusion,
        votes,
    })
}

pub const VOTE_CSV_HEADER: &str =
    "sample_id,pred_base,pred_lion,pred_lionfpn,final,tie_broken,true_label";

pub fn vote_csv_row(v: &SampleVote) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        v.sample_id,
        v.record.member_classes[0],
        v.record.member_classes[1],
        v.record.member_classes[2],
        v.record.final_class,
        v.record.tie_broken,
        v.true_label,
    )
}
