//! Swarm-level STL planning toolkit.
//!
//! Pipeline: load a [`scenario::Scenario`], parse and lift its formula
//! ([`stl`]), alternate a waypoint/timestamp MILP ([`encode`], [`milp`]) with
//! an ellipsoid cone stage ([`ellipsoid`]) until the feasibility margin is
//! nonnegative ([`planner`]), then simulate every agent under the shared
//! collective control and re-verify the specification on the sampled trace
//! with independent monitors ([`sim`], [`monitor`]).

pub mod encode;
pub mod ellipsoid;
pub mod expr;
pub mod geometry;
pub mod lp;
pub mod milp;
pub mod monitor;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod stl;
