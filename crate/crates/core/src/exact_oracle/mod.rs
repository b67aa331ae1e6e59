//! Exact small-horizon analysis by exhaustive enumeration of trajectories.
//!
//! Everything here is computed from the dense joint table of a scheme over
//! times `0..=n`; nothing is sampled.

mod excess;
mod info;
mod markov;
mod rdf0;
mod table;

pub(crate) use excess::exceeds;
pub use excess::{distortion_distribution, excess_distortion_exact, expected_distortion, min_excess_distortion};
pub use info::{
    check_dpi, directed_information, directed_information_between, directed_information_kl, DpiReport, InfoReport,
    DPI_SLACK,
};
pub use markov::{check_markov_chains, MarkovReport, NEGLIGIBLE_MASS};
pub use rdf0::{brute_force_rdf_n0, brute_force_rdf_n0_with_grid, DEFAULT_GRID};
pub use table::{enumerate_joint, EnumerationOptions, JointTable, Var, DEFAULT_BUDGET};
