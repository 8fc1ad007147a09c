pub mod compounding;
pub mod consistency;
pub mod error;
pub mod estimator;
pub mod frame;
pub mod geometry;
pub mod imu;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod parallel;
pub mod scan;
pub mod simulator;
pub mod stats;
pub mod study;

pub use error::{Error, Result};
