pub mod construction;
pub mod corpus;
pub mod eval;
pub mod instances;
pub mod pipeline;
pub mod scorer;
pub mod standoff;
