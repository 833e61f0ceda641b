//! Deterministic, fault-injectable model of an adaptable microservice store.

pub mod adaptation;
pub mod live;
pub mod recommender;
pub mod scenarios;
pub mod services;
pub mod simnet;
pub mod variability;
pub mod world;
