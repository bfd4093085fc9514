//! Desk-scale scientific-metadata kernel: an adaptive type/object/process
//! catalog with full lineage, a small catalog query language, hash-sealed
//! metadata publishing between sites, and a distributed processing queue.

pub mod canon;
pub mod catalog;
pub mod error;
pub mod federation;
pub mod lineage;
pub mod model;
pub mod query;
pub mod scheduler;
pub mod store;
pub mod view;

pub use error::{Error, Result};
