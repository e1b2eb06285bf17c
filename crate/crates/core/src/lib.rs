pub mod fsutil;
pub mod graph;
pub mod linkpred;
pub mod select;
pub mod stream;
pub mod synth;
pub mod tensor;
