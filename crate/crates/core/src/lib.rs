//! Diversified re-ranking engine.
//!
//! Selects an ordered top-K list from a scored candidate set by greedily
//! maximizing `Σ g(u,i|S) + α·log det(D_S)`, where `g` is a context-aware
//! accuracy score and `D` a user-conditioned composite similarity kernel.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`data`] | records, candidate sets, config, line-delimited JSON IO |
//! | [`autodiff`] | dense tensors with a reverse-mode tape |
//! | [`graph`] | user–item bipartite graph, modularity, Louvain |
//! | [`interest`] | interest points, multi-head attention, macro/micro interests |
//! | [`cae`] | excitation-gated context-aware scorer and its training loop |
//! | [`kernel`] | elementary and composite diversity kernels |
//! | [`selection`] | greedy DPP with incremental Cholesky, MMR, exhaustive oracle |
//! | [`metrics`] | nDCG, MAP, AUC, logloss, ILAD |

pub mod autodiff;
pub mod cae;
pub mod data;
mod error;
pub mod graph;
pub mod interest;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod selection;

pub use error::{Error, Result};

pub use cae::{CaeParams, CaeScorer, ContextState};
pub use data::{BehaviorEvent, CandidateSet, EmbeddingTable, ExperimentConfig, ItemRecord, RerankResult, StepRecord};
pub use graph::{BipartiteGraph, ClusterAssignment};
pub use interest::{AttentionParams, InterestPoint, InterestProfile, MieParams};
pub use kernel::{KernelHyperparams, KernelMatrix};
pub use selection::{bs_dpp_select, FixedScores, Scorer, SelectionConfig};
