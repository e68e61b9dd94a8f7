//! Dynamic decoding for dialogue generation.
//!
//! A regression head on top of a small language model predicts how wide the
//! decoding space of a context is (its *diversity score*). The score is mapped
//! to a sampling temperature which then drives temperature, top-k, top-p or
//! locally typical sampling, either once per response or once per step.
//!
//! Module map:
//!
//! * [`prob`], [`rng`], [`vocab`]: distributions, softmax, seeded sampling, tokens
//! * [`truncation`]: top-k / top-p / typical filtering
//! * [`mapping`]: score to temperature maps and their mean calibration
//! * [`tinylm`]: the windowed MLP language model, NLL and dynamic-temperature NLL
//! * [`head`]: the diversity-score regression head and its training
//! * [`diversity`]: automatic score labeling and threshold filtering
//! * [`decode`]: fixed, sentence-level and token-level dynamic decoding
//! * [`metrics`]: BLEU, ROUGE, F1, Distinct-n, Ent-n, self-similarity
//! * [`checkpoint`]: the binary model checkpoint format

pub mod checkpoint;
pub mod corpus;
pub mod decode;
pub mod diversity;
pub mod error;
pub mod head;
pub mod mapping;
pub mod metrics;
pub mod prob;
pub mod rng;
pub mod tinylm;
pub mod truncation;
pub mod vocab;

pub use error::{DdsError, Result};
