//! Local metric learning with ball-shaped regions.
//!
//! Distances are measured piecewise: inside each learned ball region a
//! dedicated Mahalanobis metric applies, and a background metric covers
//! the rest of the space. The length of the segment between two points
//! is split across regions by exact segment/ball intersection geometry,
//! which keeps the distance symmetric and cheap to evaluate. A K-min
//! nearest-neighbor rule classifies with the learned distance, and a
//! hinge-loss gradient-descent trainer fits metrics, region centers and
//! radii jointly.
//!
//! The crate ships a CLI (`regionlearn`) with `train`, `eval`, `bench`,
//! `gradcheck` and `geom` subcommands; see the README for usage.

pub mod classifier;
pub mod cli;
pub mod dataio;
pub mod distance;
pub mod geometry;
pub mod kmeans;
pub mod metrics;
pub mod trainer;

pub use classifier::LabeledDataset;
pub use distance::{ModelParams, Region};
pub use geometry::{Ball, IntersectionResult, Segment};
pub use metrics::MetricMatrix;
pub use trainer::{TrainConfig, TrainReport};
