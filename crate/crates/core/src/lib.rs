pub mod ao;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod peft;
pub mod seed;
pub mod tape;
pub mod trainer;

pub use error::{AoftError, Result};
