//! Station-based car sharing simulation and vehicle-to-grid scheduling.

pub mod agentsim;
pub mod corpus;
pub mod error;
pub mod eventsim;
pub mod metrics;
pub mod modechoice;
pub mod network;
pub mod population;
pub mod rng;
pub mod scenario;
pub mod v2g;

pub use error::{Error, Result};
