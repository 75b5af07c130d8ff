pub mod chart;
pub mod corpus;
pub mod dynamics;
pub mod expr;
pub mod haantjes;
pub mod matrix;
pub mod poisson;
pub mod report;
pub mod stackel;
pub mod suite;
