//! Turn HTML API documentation pages into OpenAPI 3.0 documents.

pub mod builder;
pub mod enrich;
pub mod evaluate;
pub mod extractor;
pub mod gateway;
pub mod ingest;
pub mod pipeline;
pub mod scope;
pub mod validate;
