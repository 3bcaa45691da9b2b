//! Random binary phylogenetic trees under the YHK and PDA growth models, the
//! generalized Polya urns that track their edge types, exact limit laws, and
//! Monte-Carlo checks of those laws.

pub mod error;
pub mod exact;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod newick;
pub mod rng;
pub mod spectral;
pub mod tree;
pub mod urn;
pub mod verify;

pub use error::{Error, Result};
pub use harness::{run_campaign, CampaignConfig, CampaignResult, Statistic};
pub use models::{generate, GrowthTrace, Model, ProcessKind, TrackedTree};
pub use spectral::{builtin_spectral, LimitLaw, SpectralData};
pub use tree::{EdgeKind, EdgeRef, EdgeTypeVector, Node, NodeId, PhyloTree, RootKind, Taxon};
pub use urn::{AssumptionReport, ReplacementMatrix, UrnState};
pub use verify::{run_suite, Scale, Suite, VerifyReport};
