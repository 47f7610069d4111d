//! Device-independent randomness toolkit for bipartite Bell scenarios.
//!
//! The crate covers the full analysis pipeline:
//!
//! - [`scenario`]: behaviors `P(ab|xy)`, validity checks, local vertices;
//! - [`facets`]: facet Bell inequalities for `[2,2]` and `[3,2]` via
//!   relabeling orbits of the canonical CHSH and I3322 forms;
//! - [`lp`]: the separating linear program (optimal Bell inequality for a
//!   behavior) and the no-signaling maximizer (PR box) of a facet;
//! - [`sdp`] / [`npa`]: moment-matrix relaxations at levels 1 and 2, the
//!   guessing-probability bound, and quantum-set membership tests;
//! - [`sampler`]: weighted vertex sampling of near-boundary nonlocal
//!   behaviors and reproducible labeled dataset generation;
//! - [`nn`]: dense feed-forward surrogate models trained with Adam;
//! - [`bench`] / [`pipeline`]: runtime comparisons and the end-to-end run.

pub mod bench;
pub mod facets;
pub mod lp;
pub mod nn;
pub mod npa;
pub mod pipeline;
pub mod sampler;
pub mod scenario;
pub mod sdp;

pub use scenario::{Behavior, DeterministicVertex, Scenario};
