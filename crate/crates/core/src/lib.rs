pub mod cli;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod kspace;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod spectrum;
pub mod wannier;
