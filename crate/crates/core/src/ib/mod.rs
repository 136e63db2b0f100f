//! Information Bottleneck quantities for naming systems.

mod efficiency;
pub(crate) mod frontier;
mod gnid;
pub(crate) mod info;
mod system;

pub use efficiency::{
    epsilon_for_point, inefficiency_epsilon, inefficiency_epsilon_with, EfficiencyFit,
    EpsilonMethod,
};
pub use frontier::{
    default_beta_schedule, geometric_schedule, offset_geometric_schedule, ib_frontier, FrontierConfig, FrontierPoint, IBCurve,
};
pub use gnid::{gnid, min_gnid_to_set, mode_map, Band, ModeMap};
pub use info::{
    accuracy, complexity, ib_point, meaning_information, mutual_information, word_meaning_joint,
    IBPoint,
};
pub use system::NamingSystem;
