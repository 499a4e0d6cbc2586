//! File formats, ingestion and dataset construction.

mod pairs;
mod pemb;
mod table;

pub use pairs::{load_pairs, pairs_from_scores, read_pairs, save_pairs, score_bands, split, write_pairs, PairRecord};
pub use pemb::{decode_matrix, encode_matrix, load_embeddings, save_embeddings, HEADER_LEN, MAGIC, VERSION};
pub use table::{EmbeddingTable, IndexedPair, PreferenceDataset, RowMeta};
