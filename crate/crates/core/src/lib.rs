//! Persona-conditioned LLM simulation of epidemic prevention behaviour.
//!
//! Residents described by survey demographics are prompted, in the first
//! person, to estimate how likely they are to carry out each of eleven
//! prevention behaviours under a given epidemic condition (static module), or
//! to update their risk perception across a change of conditions before doing
//! so (dynamic module). Simulated distributions are compared with observed
//! survey distributions using two-sample KS tests.

pub mod backend;
pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod prompt;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod synth;
