//! Model-less inference: a self-describing model container, a kernel library,
//! a reference interpreter, a code generator that turns a model into a
//! standalone Rust program, a verification harness and a model-file sniffer.

pub mod codegen;
pub mod fixtures;
pub mod graph;
pub mod harness;
pub mod interpreter;
pub mod kernels;
pub mod sniffer;
