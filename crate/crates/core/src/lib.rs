//! Entropy rates of two-dimensional cellular automata.

pub mod engine;
pub mod estimators;
pub mod geometry;
pub mod gf;
pub mod lab;
pub mod permutativity;
pub mod rules;
pub mod scalar;

pub type EntropyCurve64 = estimators::EntropyCurve<f64>;
pub type EntropyCurve32 = estimators::EntropyCurve<f32>;
pub type RateEstimate64 = estimators::RateEstimate<f64>;
pub type RateEstimate32 = estimators::RateEstimate<f32>;
pub type PartitionSlope64 = estimators::PartitionSlope<f64>;
pub type PartitionSlope32 = estimators::PartitionSlope<f32>;
