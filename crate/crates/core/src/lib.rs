pub mod chaos;
pub mod classic;
pub mod cli;
pub mod config;
pub mod error;
pub mod gred;
pub mod special;
pub mod stability;
pub mod sweep;

pub use error::{Error, Result};
