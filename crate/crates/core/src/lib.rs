pub mod cim;
pub mod cliquetree;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod fixtures;
pub mod indexer;
pub mod io;
pub mod kl;
pub mod linalg;
pub mod marginalize;
pub mod markov;
pub mod model;
pub mod sampling;
