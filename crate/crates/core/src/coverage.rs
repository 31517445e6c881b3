//! Optional coverage feedback from the target: a monotone counter read from
//! a URL or a file after each exchange.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::CoverageUnavailable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageSource {
    Url(Url),
    File(PathBuf),
}

/// Reads the current counter from the source. The body must be a
/// non-negative decimal integer, optionally surrounded by whitespace.
pub fn read_sample(source: &CoverageSource) -> Result<u64, CoverageUnavailable> {
    let text = match source {
        CoverageSource::File(p) => std::fs::read_to_string(p)
            .map_err(|e| CoverageUnavailable(format!("{}: {e}", p.display())))?,
        CoverageSource::Url(u) => {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(2))
                .build()
                .map_err(|e| CoverageUnavailable(e.to_string()))?;
            let resp = client
                .get(u.clone())
                .send()
                .map_err(|e| CoverageUnavailable(format!("{u}: {e}")))?;
            if !resp.status().is_success() {
                return Err(CoverageUnavailable(format!("{u}: status {}", resp.status())));
            }
            resp.text().map_err(|e| CoverageUnavailable(e.to_string()))?
        }
    };
    text.trim()
        .parse::<u64>()
        .map_err(|_| CoverageUnavailable(format!("not a counter: {:?}", text.trim())))
}

/// Turns successive samples into non-negative deltas. A failed poll disables
/// the hook; a sample below the previous one is dropped.
#[derive(Debug)]
pub struct CoverageHook {
    source: CoverageSource,
    last: Option<u64>,
    enabled: bool,
}

impl CoverageHook {
    pub fn new(source: CoverageSource) -> Self {
        CoverageHook {
            source,
            last: None,
            enabled: true,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Takes the baseline sample.
    pub fn prime(&mut self) -> Option<String> {
        self.poll().1
    }

    /// Polls and returns `(delta, warning)`.
    pub fn poll(&mut self) -> (u64, Option<String>) {
        if !self.enabled {
            return (0, None);
        }
        match read_sample(&self.source) {
            Err(e) => {
                self.enabled = false;
                (0, Some(format!("{e}; coverage feedback disabled")))
            }
            Ok(sample) => self.accept(sample),
        }
    }

    fn accept(&mut self, sample: u64) -> (u64, Option<String>) {
        match self.last {
            None => {
                self.last = Some(sample);
                (0, None)
            }
            Some(prev) if sample < prev => (
                0,
                Some(format!("coverage sample {sample} below previous {prev}; ignored")),
            ),
            Some(prev) => {
                self.last = Some(sample);
                (sample - prev, None)
            }
        }
    }
}
