//! Fixtures and independent oracles used by the test suites.

pub mod fixture;
pub mod gen;
pub mod oracle;
pub mod replay;

/// Golden files frozen for format tests.
pub mod data {
    pub const SCHEMA_GOLDEN: &str = include_str!("../data/schema_golden.sql");
    pub const DEFENSIBILITY_CHAIN: &str = include_str!("../data/defensibility_chain.txt");
}
