//! Pretrained word, entity and relation vectors in whitespace-separated text.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::corpus::RelationIndex;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

/// Word list with a trailing UNK id (`len()`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Id of `word`, or the UNK id for unknown words.
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(self.unk())
    }

    pub fn unk(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Known words, not counting UNK.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Named rows of a text embedding file.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Tensor,
}

impl EmbeddingTable {
    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Self {
        let mut names = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut data: Vec<Vec<f64>> = Vec::new();
        for (name, v) in rows {
            assert_eq!(v.len(), dim, "row `{name}` has {} values, expected {dim}", v.len());
            match index.get(&name) {
                Some(&i) => data[i] = v,
                None => {
                    index.insert(name.clone(), names.len());
                    names.push(name);
                    data.push(v);
                }
            }
        }
        let matrix = Tensor::from_vec(&[names.len(), dim], data.concat());
        EmbeddingTable { names, index, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| self.matrix.row(i))
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }
}

/// Vector width of an embedding file, read from its first non-blank line.
pub fn embedding_dim(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields = line.split_whitespace().count();
        if fields > 0 {
            return match fields - 1 {
                0 => Err(Error::Parse { path: path.into(), line: lineno + 1, message: "token without values".into() }),
                dim => Ok(dim),
            };
        }
    }
    Err(Error::Parse { path: path.into(), line: 0, message: "no vectors".into() })
}

/// Parses `token v1 ... vd` lines, checking every row has `dim` values.
/// Blank lines are skipped; a repeated token keeps its last row.
pub fn read_embedding_file(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields.map(|f| f.parse::<f64>()).collect::<Result<Vec<f64>, _>>().map_err(|e| Error::Parse {
            path: path.into(),
            line: lineno,
            message: format!("bad float: {e}"),
        })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                message: format!("expected {dim} values for `{token}`, found {}", values.len()),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse { path: path.into(), line: lineno, message: format!("non-finite value {v}") });
        }
        if let Some(prev) = seen.insert(token.to_string(), lineno) {
            log::warn!("{}:{lineno}: duplicate token `{token}` (first at line {prev}); keeping the later row", path.display());
        }
        rows.push((token.to_string(), values));
    }
    Ok(EmbeddingTable::from_rows(dim, rows))
}

/// Writes `token v1 ... vd` lines in row order; values use shortest
/// round-trip formatting so reloading is exact.
pub fn write_embedding_file(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (token, values) in rows {
        out.push_str(token);
        for v in values {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Word vectors plus an UNK row equal to the mean of the loaded rows.
#[derive(Clone, Debug, PartialEq)]
pub struct WordEmbeddings {
    pub vocab: Vocab,
    /// `(vocab.len() + 1) x d_w`; the last row is UNK.
    pub table: Tensor,
}

impl WordEmbeddings {
    pub fn from_table(table: EmbeddingTable) -> Self {
        let dim = table.dim();
        let n = table.len();
        let mut data = table.matrix.data().to_vec();
        let mut unk = vec![0.0; dim];
        for row in table.matrix.data().chunks(dim.max(1)) {
            for (u, x) in unk.iter_mut().zip(row) {
                *u += x;
            }
        }
        if n > 0 {
            unk.iter_mut().for_each(|u| *u /= n as f64);
        }
        data.extend(unk);
        WordEmbeddings { vocab: Vocab::from(table.names), table: Tensor::from_vec(&[n + 1, dim], data) }
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        Ok(Self::from_table(read_embedding_file(path, dim)?))
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }
}

/// Entity and relation vectors in a shared space, used for pair assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct KgEmbeddings {
    pub entity: EmbeddingTable,
    /// `E x k`, row `i` is relation id `i`.
    pub relation: Tensor,
}

impl KgEmbeddings {
    pub fn entity(&self, id: &str) -> Option<&[f64]> {
        self.entity.get(id)
    }

    pub fn relation(&self, id: usize) -> &[f64] {
        self.relation.row(id)
    }

    pub fn dim(&self) -> usize {
        self.relation.shape()[1]
    }
}

/// Everything the pipeline reads from pretrained vector files.
#[derive(Clone, Debug)]
pub struct EmbeddingStore {
    pub word: WordEmbeddings,
    pub kg: KgEmbeddings,
}

/// Loads entity and relation tables; relation rows are reordered to the label index.
pub fn load_kg_embeddings(entity_path: &Path, relation_path: &Path, dim: usize, relations: &RelationIndex) -> Result<KgEmbeddings> {
    let entity = read_embedding_file(entity_path, dim)?;
    let rel_table = read_embedding_file(relation_path, dim)?;
    if rel_table.len() != relations.len() {
        return Err(Error::Config(format!(
            "{} has {} relation rows, expected {} ({})",
            relation_path.display(),
            rel_table.len(),
            relations.len(),
            relations.names().join(", ")
        )));
    }
    let mut data = Vec::with_capacity(relations.len() * dim);
    for name in relations.names() {
        let row =
            rel_table.get(name).ok_or_else(|| Error::Config(format!("{} has no row for relation `{name}`", relation_path.display())))?;
        data.extend_from_slice(row);
    }
    Ok(KgEmbeddings { entity, relation: Tensor::from_vec(&[relations.len(), dim], data) })
}

pub fn load_embeddings(
    word_path: &Path,
    entity_path: &Path,
    relation_path: &Path,
    word_dim: usize,
    kg_dim: usize,
    relations: &RelationIndex,
) -> Result<EmbeddingStore> {
    let word = WordEmbeddings::load(word_path, word_dim)?;
    let kg = load_kg_embeddings(entity_path, relation_path, kg_dim, relations)?;
    Ok(EmbeddingStore { word, kg })
}
