//! Simulation of opinion and network coevolution under the Friedkin-Johnsen
//! model, where edges are removed by confirmation bias and added by
//! friend-of-friend recommendation.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: simple undirected graphs, two-hop sets, 2-core and component
//!   preprocessing, Laplacian quadratic forms.
//! * [`synthesis`]: seeded ER / BA / SBM generators and innate opinions.
//! * [`equilibrium`]: the expressed-opinion solve and polarization,
//!   disagreement and PD metrics, plus a dense oracle.
//! * [`theory`]: closed-form PD changes for single-edge updates and swaps,
//!   and a certification suite for them.
//! * [`dynamics`]: one timestep of edge removal and addition.
//! * [`experiment`]: multi-trial runs, aggregation, snapshots, bound audit.
//! * [`io`]: edge-list ingestion, config files, CSV/JSON outputs.
//! * [`presets`]: built-in experiment configurations.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod presets;
pub mod rng;
pub mod synthesis;
pub mod theory;

pub use error::{Error, Result};
pub use graph::{Edge, Graph};
