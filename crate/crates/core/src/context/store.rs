use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::summarizer::{ContextSummary, Summarizer, SummaryBackend};
use crate::data::CgmWindow;
use crate::error::{CoreError, Result};
use cgmrag_numerics::checkpoint::{sha256_hex, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSummary {
    pub window_ref: String,
    pub window_hash: String,
    pub text_hash: String,
    pub backend: SummaryBackend,
    pub sentence_count: usize,
    pub text: String,
}

/// One summary per window, addressed by window content hash.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryStore {
    pub summaries: Vec<StoredSummary>,
    #[serde(skip)]
    by_hash: HashMap<String, usize>,
}

impl SummaryStore {
    pub fn from_summaries(windows: &[CgmWindow], summaries: Vec<ContextSummary>) -> Self {
        let summaries = windows
            .iter()
            .zip(summaries)
            .map(|(w, s)| StoredSummary {
                window_ref: s.window_ref,
                window_hash: w.content_hash(),
                text_hash: sha256_hex(s.text.as_bytes()),
                backend: s.backend,
                sentence_count: s.sentence_count,
                text: s.text,
            })
            .collect();
        let mut store = Self {
            summaries,
            by_hash: HashMap::new(),
        };
        store.reindex();
        store
    }

    fn reindex(&mut self) {
        self.by_hash = self
            .summaries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.window_hash.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }

    pub fn get(&self, window: &CgmWindow) -> Result<&StoredSummary> {
        self.by_hash
            .get(&window.content_hash())
            .map(|&i| &self.summaries[i])
            .ok_or_else(|| CoreError::MissingSummary(window.window_ref()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        let mut store: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for s in &store.summaries {
            if sha256_hex(s.text.as_bytes()) != s.text_hash {
                return Err(CoreError::HashMismatch {
                    artifact: format!("summary {}", s.window_ref),
                    expected: s.text_hash.clone(),
                    found: sha256_hex(s.text.as_bytes()),
                });
            }
        }
        store.reindex();
        Ok(store)
    }
}

/// Summaries for every window in order, at most `parallelism` at a time.
pub fn summarize_windows(summarizer: &dyn Summarizer, windows: &[CgmWindow], parallelism: usize) -> Result<Vec<ContextSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| CoreError::Config(e.to_string()))?;
    pool.install(|| {
        windows
            .par_iter()
            .map(|w| summarizer.summarize(&w.window_ref(), &w.features, &w.x))
            .collect()
    })
}
