//! Quantized dataflow compiler and bit-exact emulator.

pub mod few_shot;
pub mod fixed;
pub mod cli;
pub mod cost;
pub mod data_io;
pub mod exec;
pub mod graph;
pub mod reference;
pub mod transforms;
