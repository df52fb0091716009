pub mod cv;
pub mod dataset;
pub mod ensemble;
pub mod forest;
pub mod formation;
pub mod grouping;
pub mod metrics;
pub mod seed;
