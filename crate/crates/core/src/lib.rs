pub mod ckks;
pub mod error;
pub mod inference;
pub mod memsim;
pub mod packing;
pub mod protocol;
pub mod par;
pub mod rns;

pub use error::{Error, Result};
