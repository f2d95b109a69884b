pub mod ablate;
pub mod eval;
pub mod probe;
pub mod train;
