pub mod analysis;
pub mod benchkit;
pub mod callgraph;
pub mod cir;
pub mod detectors;
pub mod ifds;
pub mod report;
pub mod scheduler;
