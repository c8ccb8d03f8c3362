//! Wind-turbine performance analysis: power-curve modelling, operating-region
//! fault labelling, Gaussian-kernel support vector regression and five small
//! from-scratch neural fault classifiers, wired into a reproducible
//! config-driven pipeline.

pub mod artifact;
pub mod config;
pub mod dataio;
pub mod exec;
pub mod neuralnet;
pub mod pipeline;
pub mod powercurve;
pub mod report;
pub mod svr;
