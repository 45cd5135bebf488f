use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::Fingerprint;

use super::{ModelKind, SearchRequest};

pub const SESSION_VERSION: u32 = 1;

fn current_version() -> u32 {
    SESSION_VERSION
}

/// A saved query: the request fields plus the store it was labeled against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySession {
    #[serde(default = "current_version")]
    pub version: u32,
    #[serde(default)]
    pub dataset_fingerprint: Option<String>,
    pub positives: Vec<u64>,
    #[serde(default)]
    pub negatives: Vec<u64>,
    #[serde(alias = "model")]
    pub model_kind: ModelKind,
    #[serde(default)]
    pub n_random_negatives: u32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportedSession {
    pub session: QuerySession,
    pub warnings: Vec<String>,
}

impl QuerySession {
    pub fn from_request(request: &SearchRequest, fingerprint: Option<Fingerprint>) -> Self {
        QuerySession {
            version: SESSION_VERSION,
            dataset_fingerprint: fingerprint.map(|f| f.to_string()),
            positives: request.positives.clone(),
            negatives: request.negatives.clone(),
            model_kind: request.model_kind,
            n_random_negatives: request.n_random_negatives,
            seed: request.seed,
        }
    }

    pub fn to_request(&self) -> SearchRequest {
        SearchRequest {
            positives: self.positives.clone(),
            negatives: self.negatives.clone(),
            model_kind: self.model_kind,
            n_random_negatives: self.n_random_negatives,
            seed: self.seed,
        }
    }

    /// Parses a session document without checking it against a store.
    pub fn from_document(document: &str) -> Result<Self> {
        let session: QuerySession =
            serde_json::from_str(document).map_err(|e| Error::Format(format!("session document: {e}")))?;
        if session.version != SESSION_VERSION {
            return Err(Error::Format(format!("unsupported session version {}", session.version)));
        }
        Ok(session)
    }

    /// Checks ids against a store; returns warnings about the fingerprint.
    pub fn check(&self, n_rows: u64, fingerprint: Fingerprint) -> Result<Vec<String>> {
        let mut seen = HashSet::with_capacity(self.positives.len() + self.negatives.len());
        for &id in self.positives.iter().chain(&self.negatives) {
            if id >= n_rows {
                return Err(Error::Format(format!("session id {id} is outside the dataset (n_rows = {n_rows})")));
            }
            if !seen.insert(id) {
                return Err(Error::Format(format!("session labels id {id} more than once")));
            }
        }
        let mut warnings = Vec::new();
        match &self.dataset_fingerprint {
            None => warnings.push("session has no dataset_fingerprint".to_string()),
            Some(fp) if fp.parse::<Fingerprint>().ok() != Some(fingerprint) => warnings.push(format!(
                "session was labeled against dataset {fp}, current dataset is {fingerprint}"
            )),
            Some(_) => {}
        }
        Ok(warnings)
    }
}

pub fn export_session(session: &QuerySession) -> String {
    serde_json::to_string_pretty(session).expect("session documents always serialize")
}

/// Parses and checks a session document against the current store.
pub fn import_session(document: &str, n_rows: u64, fingerprint: Fingerprint) -> Result<ImportedSession> {
    let session = QuerySession::from_document(document)?;
    let warnings = session.check(n_rows, fingerprint)?;
    Ok(ImportedSession { session, warnings })
}
