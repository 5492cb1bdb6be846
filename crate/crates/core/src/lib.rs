//! Classical machine-generated text detection.
//!
//! The crate covers the non-neural half of a detection system:
//!
//! * [`corpus`]: JSONL documents, text cleaning, word tokenization and
//!   paragraph segmentation.
//! * [`features`]: TF-IDF, document-level PPMI and ingested encoder embeddings.
//! * [`regress`]: least squares, ElasticNet by coordinate descent and a small
//!   softmax classifier.
//! * [`ensemble`]: accuracy-weighted voting and inverse-MAE weighted averaging.
//! * [`boundary`]: the human/machine boundary pipeline (regress, snap to a
//!   paragraph start, clip, ensemble).
//! * [`eval`]: accuracy, MAE, confusion matrices and run reports.
//!
//! Transformer discriminators are not trained here. Their outputs enter
//! through the embedding (`{"id","vector"}`) and probability
//! (`{"id","probs"}`) interchange files.

pub mod boundary;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
mod linalg;
pub mod regress;
pub mod synthetic;

pub use error::{Error, Result};
