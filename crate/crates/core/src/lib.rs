//! Extraction of user actions from desktop screen recordings with
//! vision-language models, and scoring of extracted sequences against
//! annotated ground truth.

pub mod action;
pub mod config;
pub mod eval;
pub mod extract;
pub mod gateway;
pub mod ingest;
pub mod localizer;
pub mod par;
pub mod pipeline;
pub mod prompts;
pub mod report;
