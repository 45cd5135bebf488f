pub mod bench;
pub mod classifier;
pub mod error;
pub mod index;
pub mod matrix;
pub mod query;
pub mod seed;
pub mod service;
pub mod store;
pub mod subset;
pub mod synth;
