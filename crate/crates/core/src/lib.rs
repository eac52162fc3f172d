pub mod dyson;
pub mod esd;
pub mod eta;
pub mod experiments;
pub mod linalg;
pub mod sampler;
pub mod serde_complex;
