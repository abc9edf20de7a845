//! Discrete-event simulation of a quantum cloud data center, exposed as a
//! task-placement learning environment.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod cloud;
pub mod engine;
pub mod env;
pub mod serve;
pub mod sim;
pub mod workload;
