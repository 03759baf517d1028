//! Knowledge-graph construction and analysis for social-media corpora.
pub mod analysis;
pub mod builder;
pub mod embedding;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod scalar;
pub mod sentiment;
pub mod timeseries;
pub mod topics;
pub mod wordvec;

pub use scalar::Scalar;

// f64 instantiations of the scalar-generic types
pub type TransD64 = embedding::TransD<f64>;
pub type EmbeddingParams64 = embedding::EmbeddingParams<f64>;
pub type NmfModel64 = topics::NmfModel<f64>;
pub type TfidfMatrix64 = topics::TfidfMatrix<f64>;
pub type DenseMatrix64 = topics::DenseMatrix<f64>;
pub type Lexicon64 = sentiment::Lexicon<f64>;
pub type WordVectors64 = wordvec::WordVectors<f64>;
pub type DailySeries64 = timeseries::DailySeries<f64>;
pub type PredictedLink64 = analysis::PredictedLink<f64>;
