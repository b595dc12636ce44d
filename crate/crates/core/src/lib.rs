pub mod cipher;
pub mod dataset;
pub mod image;
pub mod nn;
pub mod seed;
pub mod net;
pub mod eval;
pub mod keysearch;
pub mod cli;
