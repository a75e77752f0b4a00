pub mod classify;
pub mod graph;
pub mod pops;
pub mod schedule;
