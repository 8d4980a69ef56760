use thiserror::Error;

use crate::gpmodel::GpParams;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("covariance is not positive definite after jitter (smallest eigenvalue {smallest_eigenvalue:e})")]
    Degenerate { smallest_eigenvalue: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("optimizer failed to converge: {message} (best log-likelihood {best_loglik})")]
    NonConvergence {
        message: String,
        best_loglik: f64,
        best: Option<GpParams>,
    },

    #[error("series did not converge after {terms} terms (partial sum {partial})")]
    SeriesNonConvergence { terms: usize, partial: f64 },

    #[error("no feasible sample size up to {cap} subjects")]
    SampleSizeCap { cap: usize },

    #[error("{}", format_parse_errors(.0))]
    Parse(Vec<ParseIssue>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One problem found while reading a delimited file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

fn format_parse_errors(issues: &[ParseIssue]) -> String {
    let mut out = format!("{} parse error(s):", issues.len());
    for issue in issues {
        out.push_str(&format!("\n  line {}: {}", issue.line, issue.message));
    }
    out
}

pub type Result<T> = std::result::Result<T, Error>;
