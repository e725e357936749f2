pub mod bilinear;
pub mod chem;
pub mod dataset;
pub mod eval;
pub mod fingerprint;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
