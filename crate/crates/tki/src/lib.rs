pub mod bloch;
pub mod eqforms;
pub mod invariants;
pub mod linalg;
pub mod models;
