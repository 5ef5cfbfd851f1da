//! Approximate furthest neighbor search that stays correct under adaptively
//! chosen queries.
//!
//! The crate provides
//!
//! * [`base`]: a random-projection index answering from `8N + 1` candidate
//!   pairs drawn out of `N` sorted projection lists,
//! * [`robust`]: `k` independent base indexes with `m` of them sampled afresh
//!   per query, followed by a distance-oracle pass over the candidates,
//! * [`adversary`]: the classical oblivious baseline, a white-box query
//!   construction that defeats it, and an adaptive game loop,
//! * [`verify`]: executable checks of the analysis devices (grid coverings,
//!   goodness transfer, concentration over `k` matrices).
//!
//! [`persist`] reads and writes the `AFNI` index file.
//!
//! Ground truth is always the exact scan in [`dataset::exact_furthest`].

pub mod adversary;
pub mod base;
pub mod dataset;
pub mod error;
pub mod oracle;
pub mod params;
pub mod persist;
pub mod rng;
pub mod robust;
pub mod vector;
pub mod verify;

pub use adversary::{
    adaptive_loop, build_attack_dataset, build_oblivious, craft_attack_query, query_oblivious, verify_attack,
    AdversaryTranscript, AttackInstance, ObliviousIndex, Strategy, XMode,
};
pub use base::{build_base, is_good, query_base, BaseIndex, GoodnessReport, ProjectionList, ProjectionMatrix};
pub use dataset::{compute_stats, exact_furthest, Dataset, DatasetStats};
pub use error::{AfnError, Result};
pub use oracle::{exact_oracle, DistanceOracle, ExactOracle, NoisyOracle};
pub use params::{derive_params, solve_t, ParamOverrides, Params};
pub use persist::{load_index, read_index, save_index, write_index};
pub use rng::{gaussian_vector, RngStream};
pub use robust::{build_robust, query, trivial_check, QueryAnswer, RobustIndex};
pub use vector::Point;
pub use verify::{goodness_transfer_check, grid_cardinality_bound, grid_snap, k_half_concentration};
