pub mod config;
pub mod matrix_json;
pub mod report;
pub mod run;
