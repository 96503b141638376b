pub mod dataset;
pub mod filter;
pub mod fixture;
pub mod focus;
pub mod index;
pub mod ingest;
pub mod query;
pub mod report;
pub mod stats;
pub mod store;
