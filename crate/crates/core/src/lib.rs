pub mod alignment;
pub mod classify;
pub mod config;
pub mod contrastive;
pub mod correspondence;
pub mod geometry;
pub mod ingest;
pub mod pose_graph;
pub mod rng;
pub mod spatial;
pub mod splits;
pub mod synth;
