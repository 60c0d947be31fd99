//! Lead-sheet co-creation engine.
//!
//! * [`leadsheet`]: functional-harmony lead sheets, the text document format,
//!   and realization into timed notes with a click track.
//! * [`anticipate`]: events/controls partitioning, anticipatory interleaving,
//!   the token vocabulary and fine-tuning dataset construction.
//! * [`model`]: the autoregressive sequence model interface, a tiny
//!   decoder-only transformer, an n-gram reference model, sampling and
//!   checkpoints.
//! * [`engine`]: span-constrained generation for the four capabilities and
//!   acceptance of suggestions back into a sheet.
//! * [`corpus`]: procedural lead-sheet corpus.

pub mod anticipate;
pub mod corpus;
pub mod engine;
pub mod leadsheet;
pub mod model;
