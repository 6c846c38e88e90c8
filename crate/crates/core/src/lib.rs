//! Scene-graph driven instruction data generation.

pub mod actions;
pub mod assessor;
pub mod balancer;
pub mod cli;
pub mod config;
pub mod emitter;
pub mod lexicon;
pub mod llm;
pub mod mock;
pub mod ocot;
pub mod pipeline;
pub mod prompt;
pub mod qa_match;
pub mod question;
pub mod refiner;
pub mod rng;
pub mod sampler;
pub mod scene_graph;
pub mod synthetic;
