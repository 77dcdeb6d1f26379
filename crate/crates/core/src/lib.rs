pub mod evaluation;
pub mod evolution;
pub mod heuristics;
pub mod llm;
pub mod pool;
pub mod problems;
pub mod selection;
