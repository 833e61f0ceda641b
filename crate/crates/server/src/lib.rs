pub mod api;
pub mod cli;
pub use teastore_core::live;
