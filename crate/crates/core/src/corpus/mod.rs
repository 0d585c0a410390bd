//! Binary corpus container: sharded records, a JSON manifest, generation
//! from a TOML configuration, validation, statistics and CSV export.

pub mod config;
pub mod export;
pub mod generate;
pub mod record;
pub mod shard;
pub mod stats;

pub use config::{CascadeConfig, ChemCorpusConfig, CorpusConfig, EcoConfig};
pub use export::export_csv;
pub use generate::{generate_corpus, GenerateOptions};
pub use record::{Array, CorpusRecord, DType, Domain};
pub use shard::{config_digest, write_corpus, CorpusManifest, CorpusReader, CorpusWriter, ShardReader};
pub use stats::{corpus_stats, validate_corpus, CorpusStats, ValidationReport};
