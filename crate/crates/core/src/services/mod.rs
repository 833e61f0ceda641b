//! Behavioral kernels of the individual services.

pub mod auth;
pub mod breaker;
pub mod data;
pub mod image;
pub mod lfu;
pub mod persistence;
pub mod readthrough;
pub mod webui;
