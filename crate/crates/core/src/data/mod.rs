//! Corpus, embedding and batching input.

pub mod batch;
pub mod corpus;
pub mod embeddings;
pub mod position;

pub use batch::batch_iter;
pub use corpus::{
    load_corpus, read_corpus, to_records, write_records, Bag, Corpus, CorpusConfig, EntityMention, PairKey, Record, RelationIndex,
    SentenceInstance, NA_RELATION,
};
pub use embeddings::{
    embedding_dim, load_embeddings, load_kg_embeddings, read_embedding_file, write_embedding_file, EmbeddingStore, EmbeddingTable,
    KgEmbeddings, Vocab, WordEmbeddings,
};
pub use position::{bucket_count, missing_bucket, position_bucket};
