use std::path::Path;

use anyhow::Context;
use capsule_re::checkpoint::Checkpoint;
use capsule_re::data::{embedding_dim, load_corpus, load_kg_embeddings, Corpus, CorpusConfig, RelationIndex, WordEmbeddings};
use capsule_re::evaluation::{curve_csv, evaluate, experiment_sweep, sweep_markdown, Metrics, SweepRow};
use capsule_re::io::write_atomic;
use capsule_re::prediction::{predict_bag, DecodeMode};
use capsule_re::synth::{self, SynthFiles, SynthSpec};
use capsule_re::training::{EpochStats, Trainer};
use capsule_re::{build_model, TrainConfig};

use crate::{CliError, PredictArgs, RunConfig, SynthArgs};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn corpus_config(cfg: &TrainConfig) -> CorpusConfig {
    CorpusConfig { max_len: cfg.max_len, slots: cfg.entity_slots }
}

fn json_line<T: serde::Serialize>(out: &mut Vec<u8>, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).context("serializing output")?;
    out.push(b'\n');
    Ok(())
}

/// Trains for `epochs` epochs, rewriting the checkpoint and the JSON-lines
/// epoch log after each one.
pub fn train(run: &RunConfig) -> Result<Vec<EpochStats>, CliError> {
    create_dir(&run.output_dir)?;
    let resolved = serde_json::to_vec_pretty(run).context("serializing run config")?;
    write_atomic(&run.output_dir.join("run_config.json"), &resolved)?;

    let words = WordEmbeddings::load(&run.word_embeddings, run.train.word_dim)?;
    let relations = RelationIndex::load(&run.relations)?;
    let corpus = load_corpus(&run.corpus, &corpus_config(&run.train), &relations, &words.vocab)?;
    log::info!("{} bags, {} relations, vocabulary {}", corpus.bags.len(), relations.len(), words.vocab.len());

    let vocab = words.vocab.clone();
    let mut trainer = Trainer::new(build_model(&run.train, relations.len(), words.table)?);
    let ckpt_path = run.checkpoint_path();
    let log_path = run.output_dir.join("train_log.jsonl");
    let mut log = Vec::new();
    let mut history = Vec::new();
    for _ in 0..run.train.epochs {
        let stats = trainer.train_epoch(&corpus.bags)?;
        log::info!("epoch {} mean loss {:.6}", stats.epoch, stats.mean_loss);
        json_line(&mut log, &stats)?;
        write_atomic(&log_path, &log)?;
        Checkpoint::from_trainer(&trainer, &vocab, &relations).save(&ckpt_path)?;
        history.push(stats);
    }
    if run.train.epochs == 0 {
        write_atomic(&log_path, &log)?;
        Checkpoint::from_trainer(&trainer, &vocab, &relations).save(&ckpt_path)?;
    }
    Ok(history)
}

fn load_with(ckpt: &Checkpoint, corpus: &Path) -> Result<Corpus, CliError> {
    Ok(load_corpus(corpus, &corpus_config(&ckpt.config), &ckpt.relations, &ckpt.vocab)?)
}

pub fn eval(checkpoint: &Path, corpus: &Path, out: &Path) -> Result<Metrics, CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let corpus = load_with(&ckpt, corpus)?;
    let ev = evaluate(&ckpt.model(), &corpus.bags)?;
    create_dir(out)?;
    write_atomic(&out.join("pr_curve.csv"), curve_csv(&ev.curve).as_bytes())?;
    let metrics = serde_json::to_vec_pretty(&ev.metrics).context("serializing metrics")?;
    write_atomic(&out.join("metrics.json"), &metrics)?;
    log::info!("AUC {:.4} over {} decisions", ev.metrics.auc, ev.decisions.len());
    Ok(ev.metrics)
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(CliError::Usage(format!("--threshold: {} is outside (0, 1)", args.threshold)));
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let corpus = load_with(&ckpt, &args.corpus)?;
    let kg = match (args.multi, &args.entity_embeddings, &args.relation_embeddings) {
        (true, Some(ents), Some(rels)) => {
            let dim = embedding_dim(rels)?;
            Some(load_kg_embeddings(ents, rels, dim, &ckpt.relations)?)
        }
        (true, _, _) => {
            return Err(CliError::Usage("--multi needs --entity-embeddings and --relation-embeddings".into()));
        }
        _ => None,
    };
    let mode = match &kg {
        Some(kg) => DecodeMode::Multi { threshold: args.threshold, kg, direction: args.direction.into() },
        None => DecodeMode::Single,
    };
    let model = ckpt.model();
    let mut out = Vec::new();
    for bag in &corpus.bags {
        json_line(&mut out, &predict_bag(&model, bag, &ckpt.relations, mode)?)?;
    }
    write_atomic(&args.out, &out)?;
    Ok(())
}

/// Hyperparameters that let the synthetic corpus be fitted in a few minutes on one core.
pub fn synthetic_train_config(spec: &SynthSpec) -> TrainConfig {
    TrainConfig {
        batch_size: 10,
        lstm_hidden: 32,
        max_len: spec.sentence_len + 4,
        word_dim: spec.word_dim,
        entity_slots: 2 * spec.pairs_per_sentence,
        capsule_dim: 4,
        capsule_channels: 4,
        epochs: 200,
        ..TrainConfig::default()
    }
}

/// Writes the synthetic files plus a `run.json` that trains on them.
pub fn synth(args: &SynthArgs) -> Result<SynthFiles, CliError> {
    let spec = SynthSpec {
        relations: args.relations,
        vocab_size: args.vocab_size,
        bags: args.bags,
        pairs_per_sentence: args.pairs,
        sentences_per_bag: args.sentences_per_bag,
        sentence_len: args.sentence_len.unwrap_or(12 * args.pairs),
        unsupported_rate: args.unsupported_rate,
        word_dim: args.word_dim,
        kg_dim: args.kg_dim,
        transe_noise: args.noise,
        seed: args.seed,
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let data = synth::generate(&spec)?;
    let files = synth::write(&data, &args.out)?;
    let name = |p: &Path| p.file_name().map(Into::into).unwrap_or_default();
    let run = RunConfig {
        train: synthetic_train_config(&spec),
        corpus: name(&files.corpus),
        eval_corpus: None,
        word_embeddings: name(&files.words),
        relations: name(&files.relations),
        output_dir: "run".into(),
        checkpoint: None,
    };
    let text = serde_json::to_vec_pretty(&run).context("serializing run config")?;
    write_atomic(&args.out.join("run.json"), &text)?;
    log::info!("wrote {} sentences to {}", data.records.len(), args.out.display());
    Ok(files)
}

/// Grid in `dims`-major order, then writes `sweep.md` and `sweep.json` to `out`.
pub fn sweep(run: &RunConfig, iters: &[usize], dims: &[usize], out: &Path) -> Result<Vec<SweepRow>, CliError> {
    let words = WordEmbeddings::load(&run.word_embeddings, run.train.word_dim)?;
    let relations = RelationIndex::load(&run.relations)?;
    let cc = corpus_config(&run.train);
    let train = load_corpus(&run.corpus, &cc, &relations, &words.vocab)?;
    let held_out = match &run.eval_corpus {
        Some(p) => load_corpus(p, &cc, &relations, &words.vocab)?,
        None => train.clone(),
    };
    let grid: Vec<TrainConfig> = dims
        .iter()
        .flat_map(|&d| iters.iter().map(move |&r| (d, r)))
        .map(|(d, r)| TrainConfig { capsule_dim: d, routing_iters: r, ..run.train.clone() })
        .collect();
    let rows = experiment_sweep(&grid, &words.table, relations.len(), &train.bags, &held_out.bags);
    create_dir(out)?;
    write_atomic(&out.join("sweep.md"), sweep_markdown(&rows).as_bytes())?;
    let json = serde_json::to_vec_pretty(&rows).context("serializing sweep rows")?;
    write_atomic(&out.join("sweep.json"), &json)?;
    Ok(rows)
}
