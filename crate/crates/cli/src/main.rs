//! fgwk: corpus generation, training, evaluation, ensemble voting, and
//! heatmap export for the fine-grained recognition pipeline.

use clap::{Parser, Subcommand};
use fgwk::checkpoint::load_checkpoint;
use fgwk::config::RunConfig;
use fgwk::ensemble::{ensemble_eval, vote_csv_row, VariantId, VOTE_CSV_HEADER};
use fgwk::error::{Error, Result};
use fgwk::evalkit::{format_report, per_class_metrics, report_csv_rows, REPORT_CSV_HEADER};
use fgwk::explain::{grad_cam, localization_score, overlay, write_ppm};
use fgwk::model::FgvrModel;
use fgwk::rng::fnv1a64;
use fgwk::synthdata::{generate, load_split, read_corpus_spec};
use fgwk::train::{
    corpus_matches_config, evaluate_predictions, prepare, train_variant, PreparedSample,
};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "fgwk", version, about = "Fine-grained recognition with weakly-supervised top-k selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus described by the config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Corpus output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed (FGWK_SEED also works; this flag wins).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one variant and write its checkpoint and training log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// base | lion | lionfpn
        #[arg(long)]
        variant: String,
        /// Corpus directory from `generate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one split and write the metrics report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test1")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate three checkpoints with majority voting.
    EnsembleEval {
        /// Exactly three checkpoints: base, lion, lionfpn.
        #[arg(long, num_args = 3)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test1")]
        split: String,
        /// Per-sample vote records CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-class metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Export Grad-CAM overlays and localization scores.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test2")]
        split: String,
        /// Cap on the number of samples (default: whole split).
        #[arg(long)]
        limit: Option<usize>,
        /// Output directory for overlays and localization.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn provenance_line(seed: u64, config_text: &str, label: &str) -> String {
    format!(
        "# seed={seed} config_fnv1a={:016x} source={label}",
        fnv1a64(config_text.as_bytes())
    )
}

fn load_model(path: &Path) -> Result<(FgvrModel, RunConfig, String, String)> {
    let ckpt = load_checkpoint(path)?;
    let model = ckpt.build_model()?;
    let config = ckpt.run_config()?;
    Ok((model, config, ckpt.meta.variant.clone(), ckpt.config_text))
}

fn load_prepared(data: &Path, split: &str, config: &RunConfig) -> Result<Vec<PreparedSample>> {
    corpus_matches_config(&read_corpus_spec(data)?, config)?;
    let samples = load_split(data, split)?;
    if samples.is_empty() {
        return Err(Error::Config(format!("split {split:?}: no samples")));
    }
    Ok(prepare(&samples))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg = RunConfig::from_path(&config)?;
            cfg.override_seed(seed)?;
            cfg.validate()?;
            let plan = generate(&cfg.dataset, &out)?;
            println!(
                "corpus written to {} (train {}, val {}, test1 {}, test2 {})",
                out.display(),
                plan.split_total("train"),
                plan.split_total("val"),
                plan.split_total("test1"),
                plan.split_total("test2"),
            );
        }

        Command::Train {
            config,
            variant,
            data,
            out,
            seed,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            cfg.override_seed(seed)?;
            let variant = VariantId::parse(&variant)?;
            let outcome = train_variant(&cfg, variant, &data, &out)?;
            println!(
                "{variant}: best val accuracy {:.2}% at epoch {} -> {}",
                outcome.best_val_accuracy * 100.0,
                outcome.best_epoch,
                outcome.checkpoint_path.display(),
            );
        }

        Command::Eval {
            model,
            data,
            split,
            out,
        } => {
            let (model, config, variant, config_text) = load_model(&model)?;
            let samples = load_prepared(&data, &split, &config)?;
            let (cm, _) = evaluate_predictions(&model, &samples)?;
            let report = per_class_metrics(&cm)?;

            let mut file = std::fs::File::create(&out)?;
            writeln!(file, "{}", provenance_line(config.seed, &config_text, &variant))?;
            writeln!(file, "{REPORT_CSV_HEADER}")?;
            for row in report_csv_rows(&variant, &config.dataset.classes, &report) {
                writeln!(file, "{row}")?;
            }
            print!("{}", format_report(&variant, &config.dataset.classes, &report));
            println!("report written to {}", out.display());
        }

        Command::EnsembleEval {
            models,
            data,
            split,
            out,
            metrics,
        } => {
            if models.len() != 3 {
                return Err(Error::Contract(format!(
                    "ensemble-eval: expected 3 checkpoints, got {}",
                    models.len()
                )));
            }
            let mut loaded = Vec::new();
            for path in &models {
                loaded.push(load_model(path)?);
            }
            let config = loaded[0].1.clone();
            let config_text = loaded[0].3.clone();
            corpus_matches_config(&read_corpus_spec(&data)?, &config)?;
            let samples = load_split(&data, &split)?;
            if samples.is_empty() {
                return Err(Error::Config(format!("split {split:?}: no samples")));
            }
            let members: Vec<FgvrModel> = loaded.into_iter().map(|(m, _, _, _)| m).collect();
            let evaluation = ensemble_eval(&members, &samples)?;

            let mut file = std::fs::File::create(&out)?;
            writeln!(file, "{}", provenance_line(config.seed, &config_text, "ensemble"))?;
            writeln!(file, "{VOTE_CSV_HEADER}")?;
            for v in &evaluation.votes {
                writeln!(file, "{}", vote_csv_row(v))?;
            }

            if let Some(metrics_path) = metrics {
                let mut mfile = std::fs::File::create(&metrics_path)?;
                writeln!(mfile, "{}", provenance_line(config.seed, &config_text, "ensemble"))?;
                writeln!(mfile, "{REPORT_CSV_HEADER}")?;
                for row in report_csv_rows("ensemble", &config.dataset.classes, &evaluation.report) {
                    writeln!(mfile, "{row}")?;
                }
            }
            print!(
                "{}",
                format_report("ensemble", &config.dataset.classes, &evaluation.report)
            );
            println!("votes written to {}", out.display());
        }

        Command::Explain {
            model,
            data,
            split,
            limit,
            out,
        } => {
            let (model, config, variant, config_text) = load_model(&model)?;
            corpus_matches_config(&read_corpus_spec(&data)?, &config)?;
            let samples = load_split(&data, &split)?;
            let take = limit.unwrap_or(samples.len()).min(samples.len());
            if take == 0 {
                return Err(Error::Config(format!("split {split:?}: no samples")));
            }
            std::fs::create_dir_all(&out)?;

            let mut csv = std::fs::File::create(out.join("localization.csv"))?;
            writeln!(csv, "{}", provenance_line(config.seed, &config_text, &variant))?;
            writeln!(csv, "sample_id,true_label,predicted,hit,mass_in_patch")?;

            let mut correct = 0usize;
            let mut hits_on_correct = 0usize;
            for sample in &samples[..take] {
                let image = sample.image.to_tensor();
                let (pred, _) = model.predict(&image)?;
                let hm = grad_cam(&model, &image, pred)?;
                let score = localization_score(&hm, &sample.patch);
                let rgb = overlay(&sample.image, &hm)?;
                write_ppm(&out.join(format!("{}.ppm", sample.id)), hm.size, &rgb)?;
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    sample.id, sample.label, pred, score.hit, score.mass_in_patch
                )?;
                if pred == sample.label {
                    correct += 1;
                    if score.hit {
                        hits_on_correct += 1;
                    }
                }
            }
            println!(
                "{take} heatmaps written to {}; localization hits on correct predictions: {}/{}",
                out.display(),
                hits_on_correct,
                correct,
            );
        }
    }
    Ok(())
}
