// SPDX-License-Identifier: Apache-2.0

//! Trainable models over gate-level circuits: a message-passing encoder,
//! a connector plus toy decoder for graph-conditioned text generation, and a
//! gate-function classifier whose predictions annotate netlist text.

pub mod embed;
pub mod encoder;
pub mod error;
pub mod params;
pub mod pred;
pub mod tape;

pub use encoder::{encode, EmbeddingSet, EncoderConfig, EncoderParams, FeatureConfig};
pub use error::{ModelError, Result};
pub use params::{param_hash, Adam, Parameters};
