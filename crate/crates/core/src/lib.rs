pub mod coupling;
pub mod domain;
pub mod error;
pub mod fv;
pub mod oracle;
pub mod potential;
pub mod sde;
pub mod stats;

pub use domain::{DomainKind, DomainSpec};
pub use error::{Error, Result};
