//! Privacy-aware splitting of gridded image patches, label perturbation,
//! privacy risk scoring and hybrid-cloud scheduling.

pub mod error;
pub mod grid;
pub mod hybridcloud;
pub mod labelcrypt;
pub mod par;
pub mod planner;
pub mod privrisk;
pub mod seed;
pub mod splitting;

pub use error::{Error, Result};
pub use grid::{build_graph, generate_grid, AdjacencyGraph, Mask, PatchRecord, PatchSet};
pub use hybridcloud::{Assignment, InstanceSpec, Provider, TimeTable, Workload};
pub use planner::{plan, CandidateSolution, ParetoSet, PlanConfig, PlanResult};
pub use splitting::{split, Family, Partition, SplitStrategy, StrategyKind};
