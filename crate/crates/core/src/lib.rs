pub mod algebra;
pub mod certificate;
pub mod corpus;
pub mod criterion;
pub mod derivations;
pub mod document;
pub mod error;
pub mod kempf_ness;
pub mod linalg;
pub mod pipeline;
pub mod ricci;
pub mod simplex;
pub mod stability;
pub mod tolerances;

pub use error::{Error, Result};
