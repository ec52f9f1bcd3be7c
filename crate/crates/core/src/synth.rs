//! Separable synthetic corpora for desk-scale checks.
//!
//! Each non-NA bag plants a relation-specific trigger word next to its
//! entity pair; NA bags carry filler only. Entity and relation vectors obey
//! `emb(e2) = emb(e1) + emb(r) + noise`, so nearest-difference assignment
//! recovers the planted pair when the noise is zero.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    read_corpus, write_embedding_file, write_records, Corpus, CorpusConfig, EmbeddingTable, EntityMention, Record, RelationIndex,
    WordEmbeddings, NA_RELATION,
};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng::Rng64;

const TRIGGERS_PER_RELATION: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Relation count including NA.
    pub relations: usize,
    /// Filler words, excluding triggers.
    pub vocab_size: usize,
    /// Total bags, assigned round-robin over relations (or relation pairs).
    pub bags: usize,
    pub pairs_per_sentence: usize,
    pub sentences_per_bag: usize,
    pub sentence_len: usize,
    /// Chance that a sentence after a bag's first one lacks its trigger.
    pub unsupported_rate: f64,
    pub word_dim: usize,
    pub kg_dim: usize,
    pub transe_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            relations: 4,
            vocab_size: 40,
            bags: 50,
            pairs_per_sentence: 1,
            sentences_per_bag: 1,
            sentence_len: 12,
            unsupported_rate: 0.0,
            word_dim: 50,
            kg_dim: 16,
            transe_noise: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        if self.relations < 2 {
            return bad("relations", "need NA plus at least one relation");
        }
        if !(1..=2).contains(&self.pairs_per_sentence) {
            return bad("pairs_per_sentence", "must be 1 or 2");
        }
        if self.pairs_per_sentence == 2 && self.relations < 3 {
            return bad("relations", "two pairs per sentence need at least two non-NA relations");
        }
        if self.vocab_size == 0 || self.sentences_per_bag == 0 || self.word_dim == 0 || self.kg_dim == 0 {
            return bad("vocab_size/sentences_per_bag/word_dim/kg_dim", "must be positive");
        }
        if self.sentence_len < 4 * self.pairs_per_sentence {
            return bad("sentence_len", "too short to hold the planted entities and triggers");
        }
        if !(0.0..=1.0).contains(&self.unsupported_rate) {
            return bad("unsupported_rate", "must lie in [0, 1]");
        }
        if !(self.transe_noise >= 0.0 && self.transe_noise.is_finite()) {
            return bad("transe_noise", "must be a finite non-negative number");
        }
        Ok(())
    }
}

/// Vectors are `(token, values)` rows in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub relations: Vec<String>,
    pub records: Vec<Record>,
    pub words: Vec<(String, Vec<f64>)>,
    pub entities: Vec<(String, Vec<f64>)>,
    pub relation_vectors: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub relations: PathBuf,
    pub words: PathBuf,
    pub entities: PathBuf,
    pub relation_vectors: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            corpus: dir.join("corpus.jsonl"),
            relations: dir.join("relations.txt"),
            words: dir.join("words.vec"),
            entities: dir.join("entities.vec"),
            relation_vectors: dir.join("relations.vec"),
        }
    }
}

pub fn relation_names(count: usize) -> Vec<String> {
    std::iter::once(NA_RELATION.to_string()).chain((1..count).map(|k| format!("rel{k}"))).collect()
}

fn trigger(rel: usize, j: usize) -> String {
    format!("trig{rel}_{j}")
}

fn gaussian(rng: &mut Rng64, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.normal() * scale).collect()
}

/// Relation labels of each bag, in bag order.
fn bag_relations(spec: &SynthSpec) -> Vec<Vec<usize>> {
    if spec.pairs_per_sentence == 1 {
        return (0..spec.bags).map(|b| vec![b % spec.relations]).collect();
    }
    let combos: Vec<Vec<usize>> =
        (1..spec.relations).flat_map(|a| (1..spec.relations).filter(move |&b| b != a).map(move |b| vec![a, b])).collect();
    (0..spec.bags).map(|b| combos[b % combos.len()].clone()).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = Rng64::new(spec.seed);
    let relations = relation_names(spec.relations);

    let mut words: Vec<(String, Vec<f64>)> = Vec::new();
    let word_scale = 1.0 / (spec.word_dim as f64).sqrt();
    for i in 0..spec.vocab_size {
        words.push((format!("w{i}"), gaussian(&mut rng, spec.word_dim, word_scale)));
    }
    for rel in 1..spec.relations {
        for j in 0..TRIGGERS_PER_RELATION {
            words.push((trigger(rel, j), gaussian(&mut rng, spec.word_dim, word_scale)));
        }
    }
    let kg_scale = 1.0 / (spec.kg_dim as f64).sqrt();
    let relation_vectors: Vec<(String, Vec<f64>)> =
        relations.iter().map(|name| (name.clone(), gaussian(&mut rng, spec.kg_dim, kg_scale))).collect();

    let mut entities = Vec::new();
    let mut records = Vec::new();
    for (b, rels) in bag_relations(spec).into_iter().enumerate() {
        let mut pairs = Vec::new();
        for (p, &rel) in rels.iter().enumerate() {
            let head = format!("m.e{b}_{}", 2 * p);
            let tail = format!("m.e{b}_{}", 2 * p + 1);
            let h = gaussian(&mut rng, spec.kg_dim, 1.0);
            let t: Vec<f64> = h.iter().zip(&relation_vectors[rel].1).map(|(x, r)| x + r + spec.transe_noise * rng.normal()).collect();
            entities.push((head.clone(), h));
            entities.push((tail.clone(), t));
            pairs.push([head, tail]);
        }
        for s in 0..spec.sentences_per_bag {
            let supported = s == 0 || !rng.bernoulli(spec.unsupported_rate);
            records.push(sentence(spec, &mut rng, &pairs, &rels, supported));
        }
    }
    Ok(SynthData { relations, records, words, entities, relation_vectors })
}

/// One sentence; pair `p` lives in the `p`-th equal segment as
/// `head [trigger] tail` with filler around it.
fn sentence(spec: &SynthSpec, rng: &mut Rng64, pairs: &[[String; 2]], rels: &[usize], supported: bool) -> Record {
    let n = spec.sentence_len;
    let mut tokens: Vec<String> = (0..n).map(|_| format!("w{}", rng.below(spec.vocab_size))).collect();
    let mut entities = Vec::new();
    let segment = n / pairs.len();
    for (p, (pair, &rel)) in pairs.iter().zip(rels).enumerate() {
        // head, trigger, tail fit in a window of 3 or 4 tokens.
        let width = 3 + rng.below(2).min(segment - 3);
        let start = p * segment + rng.below(segment - width + 1);
        let (head_at, tail_at) = (start, start + width - 1);
        tokens[head_at] = pair[0].clone();
        tokens[tail_at] = pair[1].clone();
        if supported && rel != 0 {
            tokens[start + 1] = trigger(rel, rng.below(TRIGGERS_PER_RELATION));
        }
        entities.push(EntityMention { id: pair[0].clone(), span: [head_at, head_at + 1] });
        entities.push(EntityMention { id: pair[1].clone(), span: [tail_at, tail_at + 1] });
    }
    Record {
        tokens,
        entities,
        pairs: pairs.to_vec(),
        relations: rels.iter().map(|&r| if r == 0 { NA_RELATION.to_string() } else { format!("rel{r}") }).collect(),
    }
}

impl SynthData {
    /// Parses the generated records as if they had been read from disk.
    pub fn load(&self, config: &CorpusConfig) -> Result<(Corpus, WordEmbeddings, RelationIndex)> {
        let word =
            WordEmbeddings::from_table(EmbeddingTable::from_rows(self.words.first().map_or(0, |(_, v)| v.len()), self.words.clone()));
        let relations = RelationIndex::new(self.relations.clone());
        let mut buf = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        let corpus = read_corpus(&buf[..], Path::new("<synth>"), config, &relations, &word.vocab)?;
        Ok((corpus, word, relations))
    }
}

/// Writes the corpus, the relation list (one name per line, in id order)
/// and the three vector files into `dir`.
pub fn write(data: &SynthData, dir: &Path) -> Result<SynthFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles::in_dir(dir);
    write_records(&files.corpus, &data.records)?;
    let mut names = data.relations.join("\n");
    names.push('\n');
    write_atomic(&files.relations, names.as_bytes())?;
    write_embedding_file(&files.words, &data.words)?;
    write_embedding_file(&files.entities, &data.entities)?;
    write_embedding_file(&files.relation_vectors, &data.relation_vectors)?;
    Ok(files)
}
