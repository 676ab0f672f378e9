//! Seed-point video annotation.
//!
//! A captured session (ordered RGB frames plus a seed point) is turned into
//! one binary mask per frame: a promptable segmenter proposes three masks for
//! the seed, the best-rated one initializes a single-object tracker, and the
//! tracker propagates it through every later frame. Corrective seeds can be
//! added on any frame afterwards. The [`eval`] module scores runs against
//! reference raters.

pub mod error;
pub mod eval;
pub mod mask;
pub mod pipeline;
pub mod render;
pub mod segment;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use mask::Mask;
pub use pipeline::{label_session, reseed, run_report, LabelRun, LabelRunConfig, RunReport};
pub use segment::{BackendRegistry, BackendSpec, Backends};
pub use store::{AnnotationSet, SeedOrigin, SeedPrompt, Session, SessionStore};
