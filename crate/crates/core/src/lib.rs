//! Online fleet control for autonomous mobility-on-demand.

pub mod cli;
pub mod config;
pub mod demand;
pub mod error;
pub mod features;
pub mod graph;
pub mod grid;
pub mod io;
pub mod kdspp;
pub mod learning;
pub mod model;
pub mod policy;
pub mod scalar;
pub mod sim;
pub mod synth;
pub mod testkit;
pub mod travel;

pub type Graph = graph::DispatchGraph<f64>;
pub type Solution = kdspp::PathSolution<f64>;
pub type Weights = features::ModelWeights<f64>;
