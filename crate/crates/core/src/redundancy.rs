//! Novelty gate: cosine retrieval over archived concept embeddings plus a
//! judge verdict on the nearest neighbours.

use std::time::Duration;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::envelopes::JudgeVerdict;
use crate::agents::transport::{map_ureq, TransportError};
use crate::agents::AgentError;
use crate::ids::NodeId;
use crate::rng::derived_rng;

pub const DEFAULT_DIM: usize = 256;
pub const MOCK_DUPLICATE_COSINE: f64 = 0.95;
pub const EMBED_URL_VAR: &str = "DISCOVERY_EMBED_URL";
pub const EMBED_KEY_VAR: &str = "DISCOVERY_EMBED_KEY";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RedundancyError {
    #[error("embedding unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("novelty filtering unavailable: {0}")]
    FilteringUnavailable(String),
    #[error("embedding has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RedundancyError>;
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, RedundancyError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(RedundancyError::EmbeddingUnavailable("zero or non-finite vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Seeded hash-feature projection. Features are whole lines (case and
/// punctuation folded), so a concept summary embeds as the normalized sum of
/// its title, description and core-idea directions. Word-level features made
/// every long lineage look alike: two summaries sharing most of their
/// vocabulary but differing in one core idea crossed the duplicate threshold.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }
}

impl Embedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RedundancyError> {
        let mut acc = vec![0.0; self.dim];
        let mut any = false;
        for line in text.lines() {
            let feature = line
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join(" ")
                .to_lowercase();
            if feature.is_empty() {
                continue;
            }
            any = true;
            let mut rng = derived_rng(self.seed, &["embed", &feature]);
            for slot in acc.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *slot += g;
            }
        }
        if !any {
            return Err(RedundancyError::EmbeddingUnavailable("empty concept text".into()));
        }
        normalize(acc)
    }
}

/// OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    base_url: String,
    api_key: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            dim,
            agent: ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into(),
        }
    }

    pub fn from_env(model: impl Into<String>, dim: usize, timeout: Duration) -> Result<Self, RedundancyError> {
        let url = std::env::var(EMBED_URL_VAR)
            .map_err(|_| RedundancyError::EmbeddingUnavailable(format!("{EMBED_URL_VAR} not set")))?;
        let key = std::env::var(EMBED_KEY_VAR).unwrap_or_default();
        Ok(Self::new(url, key, model, dim, timeout))
    }

    fn request(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        let mut response = self
            .agent
            .post(format!("{}/embeddings", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(json!({"model": self.model, "input": text, "dimensions": self.dim}))
            .map_err(map_ureq)?;
        let value: Value = response.body_mut().read_json().map_err(map_ureq)?;
        value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|xs| xs.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| TransportError::Protocol("missing data[0].embedding".into()))
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RedundancyError> {
        if text.trim().is_empty() {
            return Err(RedundancyError::EmbeddingUnavailable("empty concept text".into()));
        }
        let v = self.request(text).map_err(|e| RedundancyError::EmbeddingUnavailable(e.to_string()))?;
        if v.len() != self.dim {
            return Err(RedundancyError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        normalize(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    pub node_id: NodeId,
    pub summary_text: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub node_id: NodeId,
    pub summary_text: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptIndex {
    pub dim: usize,
    pub entries: Vec<ConceptEntry>,
}

impl Default for ConceptIndex {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ConceptIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.iter().any(|e| e.node_id == node)
    }

    pub fn insert(&mut self, node_id: NodeId, summary_text: &str, embedding: Vec<f64>) -> Result<(), RedundancyError> {
        if embedding.len() != self.dim {
            return Err(RedundancyError::DimensionMismatch {
                expected: self.dim,
                got: embedding.len(),
            });
        }
        self.entries.push(ConceptEntry {
            node_id,
            summary_text: summary_text.to_string(),
            embedding: normalize(embedding)?,
        });
        Ok(())
    }

    /// Exhaustive scan; similarity descending, ties toward the smaller node id.
    pub fn top_k(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut scored: Vec<Neighbor> = self
            .entries
            .iter()
            .map(|e| Neighbor {
                node_id: e.node_id,
                summary_text: e.summary_text.clone(),
                similarity: cosine(query, &e.embedding),
            })
            .collect();
        scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.node_id.cmp(&b.node_id)));
        scored.truncate(k);
        scored
    }
}

/// Stand-in for the judge in offline runs: duplicate iff the closest
/// neighbour reaches `threshold` cosine similarity.
pub fn mock_judge(neighbors: &[Neighbor], threshold: f64) -> JudgeVerdict {
    match neighbors.first() {
        Some(top) if top.similarity >= threshold => JudgeVerdict {
            novel: false,
            reasoning: format!("cosine {:.4} with {} reaches {threshold}", top.similarity, top.node_id),
            most_similar_to: Some(top.node_id),
            shared_principles: top.summary_text.clone(),
            new_contribution: "none".into(),
        },
        Some(top) => JudgeVerdict {
            novel: true,
            reasoning: format!("closest concept {} at cosine {:.4}", top.node_id, top.similarity),
            most_similar_to: Some(top.node_id),
            shared_principles: String::new(),
            new_contribution: String::new(),
        },
        None => JudgeVerdict::novel("archive is empty"),
    }
}

/// Retrieves the `k` nearest archived concepts and asks `judge` for a
/// verdict. An empty index is novel without consulting the judge.
pub fn check_novelty(
    index: &ConceptIndex,
    summary: &str,
    embedding: &[f64],
    k: usize,
    judge: impl FnOnce(&str, &[Neighbor]) -> Result<JudgeVerdict, AgentError>,
) -> Result<(JudgeVerdict, Vec<Neighbor>), RedundancyError> {
    assert!(k >= 1, "k must be at least 1");
    if index.is_empty() {
        return Ok((JudgeVerdict::novel("archive is empty"), Vec::new()));
    }
    let neighbors = index.top_k(embedding, k);
    let mut verdict = judge(summary, &neighbors).map_err(|e| RedundancyError::FilteringUnavailable(e.to_string()))?;
    if !verdict.novel && !verdict.most_similar_to.is_some_and(|id| index.contains(id)) {
        // a duplicate must point into the archive; fall back to the nearest entry
        verdict.most_similar_to = neighbors.first().map(|n| n.node_id);
    }
    Ok((verdict, neighbors))
}
