//! Persistence, report readers, the case-study driver and the HTTP service
//! around [`agilev_core`].

pub mod bundle;
pub mod canonical;
pub mod chain;
pub mod clock;
pub mod data;
pub mod error;
pub mod fixture;
pub mod ingest;
pub mod service;
pub mod store;

pub use error::{Result, StoreError};
pub use store::{content_digest, validate_store, Store, Violation};
