pub mod driver;
pub mod dwr;
pub mod error;
pub mod fem;
pub mod field;
pub mod loss;
pub mod network;
pub mod optim;
pub mod rng;
pub mod sampling;
