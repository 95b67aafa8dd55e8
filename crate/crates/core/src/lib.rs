//! Robot swarm simulation with two ways of putting a language model in the
//! loop: synthesizing validated state-machine controllers, and giving every
//! robot its own chat conversation that reasons over sensor data and talks
//! to its neighbors.

pub mod direct;
pub mod dsl;
pub mod llm;
pub mod operator;
pub mod par;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod synthesis;
