//! JSON-lines corpus records grouped into bags by entity tuple.
//!
//! One line per sentence:
//!
//! ```json
//! {"tokens": ["Seoul", "is", "the", "capital", "of", "South", "Korea"],
//!  "entities": [{"id": "m.seoul", "span": [0, 1]}, {"id": "m.korea", "span": [5, 7]}],
//!  "pairs": [["m.korea", "m.seoul"]],
//!  "relations": ["/location/country/capital"]}
//! ```
//!
//! `relations` is aligned with `pairs`. Sentences with the same `pairs` list
//! form one bag whose label set is the union of their relations.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::embeddings::Vocab;
use crate::data::position::position_bucket;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const NA_RELATION: &str = "NA";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub id: String,
    /// Half-open token range `[start, end)`.
    pub span: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub tokens: Vec<String>,
    pub entities: Vec<EntityMention>,
    pub pairs: Vec<[String; 2]>,
    pub relations: Vec<String>,
}

pub type PairKey = (String, String);

/// Relation names in label order; id 0 is NA.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct RelationIndex {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for RelationIndex {
    fn from(names: Vec<String>) -> Self {
        Self::new(names)
    }
}

impl From<RelationIndex> for Vec<String> {
    fn from(r: RelationIndex) -> Self {
        r.names
    }
}

impl RelationIndex {
    pub fn new(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        RelationIndex { names, index }
    }

    /// One relation name per line; blank lines are ignored and NA must come first.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let names: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        if names.first().map(String::as_str) != Some(NA_RELATION) {
            return Err(Error::Config(format!("{}: the first relation must be {NA_RELATION}", path.display())));
        }
        let index = Self::new(names);
        if index.index.len() != index.names.len() {
            return Err(Error::Config(format!("{}: duplicate relation names", path.display())));
        }
        Ok(index)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownRelation { name: name.to_string(), known: self.names.join(", ") })
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Loader settings: maximum sentence length `L` and entity slots `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusConfig {
    pub max_len: usize,
    pub slots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceInstance {
    pub words: Vec<String>,
    pub token_ids: Vec<usize>,
    pub entities: Vec<EntityMention>,
    pub pair_keys: Vec<PairKey>,
    /// Relations of this record, aligned with `pair_keys`.
    pub relations: Vec<usize>,
    /// Bag label set mirrored onto the sentence.
    pub labels: Vec<usize>,
    /// One row per token, one bucket per entity slot.
    pub position_ids: Vec<Vec<usize>>,
}

impl SentenceInstance {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub key: Vec<PairKey>,
    pub instances: Vec<SentenceInstance>,
    pub labels: BTreeSet<usize>,
}

impl Bag {
    pub fn key_string(&self) -> String {
        self.key.iter().map(|(a, b)| format!("({a},{b})")).collect::<Vec<_>>().join(";")
    }

    /// Binary label vector of length `num_relations`.
    pub fn label_vector(&self, num_relations: usize) -> Vec<f64> {
        (0..num_relations).map(|k| if self.labels.contains(&k) { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub bags: Vec<Bag>,
    /// Sentences dropped for exceeding `max_len`.
    pub excluded: usize,
}

/// Entity anchor (first span token) for each of the `slots` position columns.
///
/// Pairs fill slots in order, two per pair; an entity already placed by an
/// earlier pair leaves its slot empty, as do unused trailing slots.
pub fn slot_anchors(record: &Record, slots: usize) -> std::result::Result<Vec<Option<usize>>, String> {
    let mut placed: Vec<&str> = Vec::new();
    let mut anchors = Vec::with_capacity(slots);
    for pair in &record.pairs {
        for id in pair {
            let mention = record
                .entities
                .iter()
                .find(|e| &e.id == id)
                .ok_or_else(|| format!("pair entity `{id}` is not among the record's entities"))?;
            if placed.contains(&id.as_str()) {
                anchors.push(None);
            } else {
                placed.push(id);
                anchors.push(Some(mention.span[0]));
            }
        }
    }
    if anchors.len() > slots {
        return Err(format!("{} pairs need {} entity slots but M = {slots}", record.pairs.len(), anchors.len()));
    }
    anchors.resize(slots, None);
    Ok(anchors)
}

fn validate(record: &Record) -> std::result::Result<(), String> {
    if record.tokens.is_empty() {
        return Err("empty token list".into());
    }
    if record.pairs.is_empty() || record.pairs.len() > 2 {
        return Err(format!("expected 1 or 2 pairs, found {}", record.pairs.len()));
    }
    if record.relations.len() != record.pairs.len() {
        return Err(format!("{} relations for {} pairs; relations must align with pairs", record.relations.len(), record.pairs.len()));
    }
    for e in &record.entities {
        let [start, end] = e.span;
        if start >= end || end > record.tokens.len() {
            return Err(format!("entity `{}` span [{start}, {end}) invalid for {} tokens", e.id, record.tokens.len()));
        }
    }
    Ok(())
}

fn build_instance(
    record: Record,
    config: &CorpusConfig,
    relations: &RelationIndex,
    vocab: &Vocab,
    malformed: impl Fn(String) -> Error,
) -> Result<SentenceInstance> {
    validate(&record).map_err(&malformed)?;
    let anchors = slot_anchors(&record, config.slots).map_err(&malformed)?;
    let rel_ids = record.relations.iter().map(|r| relations.id(r)).collect::<Result<Vec<_>>>()?;
    let position_ids = (0..record.tokens.len()).map(|t| anchors.iter().map(|&a| position_bucket(t, a, config.max_len)).collect()).collect();
    Ok(SentenceInstance {
        token_ids: record.tokens.iter().map(|w| vocab.id(w)).collect(),
        words: record.tokens,
        entities: record.entities,
        pair_keys: record.pairs.into_iter().map(|[a, b]| (a, b)).collect(),
        relations: rel_ids,
        labels: Vec::new(),
        position_ids,
    })
}

/// Reads a JSON-lines corpus and groups sentences into bags in order of first appearance.
pub fn read_corpus(reader: impl BufRead, source: &Path, config: &CorpusConfig, relations: &RelationIndex, vocab: &Vocab) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut by_key: HashMap<Vec<PairKey>, usize> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: source.into(), line: lineno, message };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if record.tokens.len() > config.max_len {
            corpus.excluded += 1;
            continue;
        }
        let instance = build_instance(record, config, relations, vocab, parse_err)?;
        let key = instance.pair_keys.clone();
        let idx = *by_key.entry(key.clone()).or_insert_with(|| {
            corpus.bags.push(Bag { key, instances: Vec::new(), labels: BTreeSet::new() });
            corpus.bags.len() - 1
        });
        let bag = &mut corpus.bags[idx];
        bag.labels.extend(instance.relations.iter().copied());
        bag.instances.push(instance);
    }
    for bag in &mut corpus.bags {
        let labels: Vec<usize> = bag.labels.iter().copied().collect();
        for inst in &mut bag.instances {
            inst.labels = labels.clone();
        }
    }
    if corpus.excluded > 0 {
        log::warn!("{}: excluded {} sentence(s) longer than {} tokens", source.display(), corpus.excluded, config.max_len);
    }
    Ok(corpus)
}

pub fn load_corpus(path: &Path, config: &CorpusConfig, relations: &RelationIndex, vocab: &Vocab) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path, config, relations, vocab)
}

pub fn to_records(bags: &[Bag], relations: &RelationIndex) -> Vec<Record> {
    bags.iter()
        .flat_map(|bag| bag.instances.iter())
        .map(|inst| Record {
            tokens: inst.words.clone(),
            entities: inst.entities.clone(),
            pairs: inst.pair_keys.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
            relations: inst.relations.iter().map(|&r| relations.name(r).to_string()).collect(),
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use proptest::prelude::*;

    use super::*;
    use crate::data::position::missing_bucket;

    #[test]
    fn relation_file_needs_na_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rel.txt");
        std::fs::write(&path, "NA\nborn_in\n\n").unwrap();
        assert_eq!(RelationIndex::load(&path).unwrap().names(), ["NA", "born_in"]);
        std::fs::write(&path, "born_in\nNA\n").unwrap();
        assert!(RelationIndex::load(&path).unwrap_err().to_string().contains("first relation"));
        std::fs::write(&path, "NA\nx\nx\n").unwrap();
        assert!(RelationIndex::load(&path).unwrap_err().to_string().contains("duplicate"));
    }

    fn relations() -> RelationIndex {
        RelationIndex::new(vec!["NA".into(), "capital".into(), "contains".into()])
    }

    fn vocab() -> Vocab {
        Vocab::from(vec!["a".to_string(), "b".to_string()])
    }

    fn line(tokens: usize, pairs: &[(&str, &str)], rels: &[&str]) -> String {
        let mut ents: Vec<serde_json::Value> = Vec::new();
        let mut ids: Vec<&str> = Vec::new();
        for (a, b) in pairs {
            for id in [a, b] {
                if !ids.contains(id) {
                    let start = ids.len();
                    ents.push(serde_json::json!({"id": id, "span": [start, start + 1]}));
                    ids.push(id);
                }
            }
        }
        serde_json::json!({
            "tokens": (0..tokens).map(|i| if i % 2 == 0 { "a" } else { "zz" }).collect::<Vec<_>>(),
            "entities": ents,
            "pairs": pairs.iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
            "relations": rels,
        })
        .to_string()
    }

    fn read(text: &str, max_len: usize, slots: usize) -> Result<Corpus> {
        read_corpus(Cursor::new(text), Path::new("mem"), &CorpusConfig { max_len, slots }, &relations(), &vocab())
    }

    #[test]
    fn shared_key_forms_one_bag() {
        let text = format!("{}\n{}\n", line(5, &[("x", "y")], &["capital"]), line(4, &[("x", "y")], &["NA"]));
        let c = read(&text, 120, 2).unwrap();
        assert_eq!(c.bags.len(), 1);
        assert_eq!(c.bags[0].instances.len(), 2);
        assert_eq!(c.bags[0].labels, BTreeSet::from([0, 1]));
        assert!(c.bags[0].instances.iter().all(|i| i.labels == vec![0, 1]));
    }

    #[test]
    fn over_length_sentence_is_excluded() {
        let text = format!("{}\n{}\n", line(121, &[("x", "y")], &["capital"]), line(120, &[("x", "z")], &["NA"]));
        let c = read(&text, 120, 2).unwrap();
        assert_eq!(c.excluded, 1);
        assert_eq!(c.bags.len(), 1);
    }

    #[test]
    fn empty_input_gives_no_bags() {
        let c = read("", 120, 2).unwrap();
        assert!(c.bags.is_empty());
        assert_eq!(c.excluded, 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\nnot json\n", line(3, &[("x", "y")], &["NA"]));
        let err = read(&text, 120, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_relation_lists_known() {
        let err = read(&line(3, &[("x", "y")], &["married_to"]), 120, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("married_to") && msg.contains("NA, capital, contains"), "{msg}");
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let c = read(&line(3, &[("x", "y")], &["NA"]), 120, 2).unwrap();
        assert_eq!(c.bags[0].instances[0].token_ids, vec![0, 2, 0]);
    }

    #[test]
    fn single_pair_with_four_slots_marks_last_two_missing() {
        let c = read(&line(6, &[("x", "y")], &["capital"]), 10, 4).unwrap();
        let inst = &c.bags[0].instances[0];
        for row in &inst.position_ids {
            assert_eq!(row.len(), 4);
            assert_eq!(row[2], missing_bucket(10));
            assert_eq!(row[3], missing_bucket(10));
            assert_ne!(row[0], missing_bucket(10));
        }
        // x anchored at token 0, y at token 1.
        assert_eq!(inst.position_ids[0][..2], [10, 9]);
    }

    #[test]
    fn two_slots_populate_both_columns() {
        let c = read(&line(6, &[("x", "y")], &["capital"]), 10, 2).unwrap();
        for row in &c.bags[0].instances[0].position_ids {
            assert!(row.iter().all(|&b| b != missing_bucket(10)));
        }
    }

    #[test]
    fn shared_entity_leaves_duplicate_slot_missing() {
        let c = read(&line(6, &[("x", "y"), ("y", "z")], &["capital", "contains"]), 10, 4).unwrap();
        let row = &c.bags[0].instances[0].position_ids[0];
        assert_eq!(row[2], missing_bucket(10));
        assert_eq!(row[3], 10 - 2);
        assert_eq!(c.bags[0].key.len(), 2);
    }

    #[test]
    fn two_pairs_do_not_fit_two_slots() {
        assert!(read(&line(6, &[("x", "y"), ("z", "w")], &["capital", "NA"]), 10, 2).is_err());
    }

    fn arb_line() -> impl Strategy<Value = String> {
        (1usize..12, 0usize..3, 0usize..3, any::<bool>()).prop_map(|(n, k, r, two)| {
            let names = ["NA", "capital", "contains"];
            let ids = ["p", "q", "s"];
            let n = n.max(4);
            if two {
                line(n, &[(ids[k], "t"), ("u", "v")], &[names[r], names[(r + 1) % 3]])
            } else {
                line(n, &[(ids[k], "t")], &[names[r]])
            }
        })
    }

    proptest! {
        #[test]
        fn write_then_reload_is_identity(lines in proptest::collection::vec(arb_line(), 0..12)) {
            let text = lines.join("\n");
            let first = read(&text, 10, 4).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.jsonl");
            write_records(&path, &to_records(&first.bags, &relations())).unwrap();
            let cfg = CorpusConfig { max_len: 10, slots: 4 };
            let second = load_corpus(&path, &cfg, &relations(), &vocab()).unwrap();
            prop_assert_eq!(&first.bags, &second.bags);
            for bag in &second.bags {
                let union: BTreeSet<usize> = bag.instances.iter().flat_map(|i| i.relations.iter().copied()).collect();
                prop_assert_eq!(&union, &bag.labels);
                prop_assert!(bag.instances.iter().all(|i| i.pair_keys == bag.key));
            }
        }
    }
}
