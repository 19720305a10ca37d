//! Multivariate time-series anomaly detection by prospective multi-graph
//! forecasting.
//!
//! Each stride-1 window of an `N`-channel series is encoded into `k` dynamic
//! graphs, regularized toward a learned static graph by a contrastive
//! cohesion loss, and used to forecast the window's last `p` ticks. Forecast
//! errors, normalized per channel by median and IQR and maximized over
//! channels, give the anomaly score.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod kv;
pub mod lab;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod params;
pub mod scoring;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use params::ParamStore;
