//! Parsing, filtering and merging of generated enrichment data.

mod filter;
mod merge;
mod response;
mod tsv;

use thiserror::Error;

pub use filter::{filter_schema, filter_table, name_in_scope, FilterAudit};
pub use merge::merge;
pub use response::{parse_response_schema, strip_code_fences, ResponseEnrichmentSchema};
pub use tsv::{map_header, parse_bool, parse_request_tsv, Column, EnrichmentTable, ParameterRow};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnrichError {
    #[error("malformed TSV: {0}")]
    MalformedTsv(String),
    #[error("malformed response schema: {0}")]
    MalformedSchema(String),
}
