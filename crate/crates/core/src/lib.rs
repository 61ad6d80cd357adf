//! Distributed finite-horizon linear-quadratic synchronization of networked
//! LTI agents, solved by ADMM over an undirected communication graph.
//!
//! Each iteration alternates a Z-step (a consensus-coupled quadratic in the
//! agents' synchronization states, solved by a neighbor-only gradient flow or
//! directly), a per-agent U-step (an LQ tracking problem solved by a backward
//! Riccati-type recursion) and a dual update.

pub mod admm;
pub mod cli;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod scenario;
pub mod ustep;
pub mod zstep;

pub use error::{Error, Result};
