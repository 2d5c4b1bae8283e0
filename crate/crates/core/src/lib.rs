//! Structural fault diagnosability of multi-mode equation systems.
//!
//! Conditions over mode variables are decision diagrams ([`boolfn`]). A model
//! written in the equation language ([`model`]) is flattened into a
//! mode-labeled bipartite graph, decomposed for all modes at once ([`mmdm`])
//! and turned into a diagnosability matrix ([`diagnosability`]). The
//! [`oracle`] module recomputes the same matrix mode by mode with the
//! single-mode decomposition of [`dmcore`].

pub mod boolfn;
pub mod model;
pub mod dmcore;
pub mod mmdm;
pub mod diagnosability;
pub mod battery;
pub mod oracle;
pub mod bench;
