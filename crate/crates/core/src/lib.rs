//! Comparative product recommendation by walking a multi-modal embedding
//! space along an attribute direction.
//!
//! A catalog of unit image vectors is indexed for exact cosine search. A
//! direction is estimated from two prompt-retrieved product sets, and a
//! traversal repeatedly nudges a position along it while pulling toward the
//! local product manifold, recommending the nearest unseen products at each
//! step. The `eval` module measures how well a traversal orders products by
//! attribute intensity.

pub mod catalog;
pub mod config;
pub mod direction;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod index;
pub mod service;
pub mod synth;
pub mod traversal;
pub mod vector;

pub use catalog::{
    load_catalog, load_prompt_bank, save_catalog, Catalog, ProductRecord, PromptBank,
};
pub use direction::{build_direction, invert_direction, DirectionVector, SnrOptions};
pub use error::{Error, Result};
pub use index::{KnnIndex, Neighbor};
pub use synth::{generate_synthetic, SyntheticCatalog, SyntheticSpec};
pub use traversal::{advance, step, traverse, StopReason, TraversalConfig, TraversalPath};
pub use vector::EmbeddingVector;
