//! Stage 2: the role database, vector store, and social-profile generation.
//!
//! Offline, [`build_role_database`] turns a social corpus into one
//! [`RoleRecord`] per person plus a [`VectorStore`] of fact embeddings.
//! Online, [`identify_roles`] matches live context frames against the store
//! (injectively, so two tracks never share a role), [`adapt_profile`] bumps
//! the salience of facts echoed by live speech, and [`generate_profile`]
//! ranks facts actionable-first with a 30-day half-life decay.
//!
//! Retrieval is an exact scan: at desk scale exactness is free and makes
//! tie order testable against an independent oracle.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64_str;
use crate::model::{
    l2_norm, DocKind, EmbeddingEntry, EnvironmentSummary, Fact, RankedFact, RoleRecord,
    SocialContextFrame, SocialCorpusDoc, SocialProfile, Speaker, UNIT_NORM_TOLERANCE,
};
use crate::text::{normalize_whitespace, token_jaccard};

/// Default embedding dimension: small enough for desk-scale brute force,
/// large enough to keep token hash collisions rare.
pub const DEFAULT_DIMENSION: usize = 256;

/// Default cosine threshold for role identification under the mock
/// embedder, whose token-overlap cosines run small.
pub const DEFAULT_ROLE_MATCH_THRESHOLD: f64 = 0.35;

/// Salience added per retrieval hit during dynamic adaptation.
pub const SALIENCE_BUMP: f64 = 0.1;

/// Half-life of the fact-recency decay, in days.
pub const DECAY_HALF_LIFE_DAYS: f64 = 30.0;

/// Errors from vector-store and profile operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RagError {
    #[error("vector has dimension {got}, store expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector norm {norm} is not unit within 1e-6")]
    NotUnitNorm { norm: f64 },
    #[error("k must be ≥ 1")]
    InvalidK,
    #[error("threshold τ must lie in (0, 1]")]
    InvalidThreshold,
    #[error("role '{role_id}' does not resolve against the store")]
    UnknownRole { role_id: String },
}

/// Errors raised while building the role database from a corpus.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate docId '{doc_id}'")]
    DuplicateDocId { doc_id: String },
    #[error("doc '{doc_id}' has no personRef")]
    MissingPersonRef { doc_id: String },
    #[error("duplicate roleId '{role_id}' (personRefs collide after trimming)")]
    DuplicateRoleId { role_id: String },
    #[error("doc '{doc_id}': trait line '{line}' is not key=value")]
    MalformedTraitLine { doc_id: String, line: String },
    #[error("doc '{doc_id}': trait key '{key}' is not in the declared vocabulary")]
    UnknownTraitKey { doc_id: String, key: String },
    #[error("doc '{doc_id}': fact doc is missing a category")]
    MissingCategory { doc_id: String },
    #[error("doc '{doc_id}': fact text is empty")]
    EmptyFactText { doc_id: String },
    #[error(transparent)]
    Store(#[from] RagError),
}

// ---------------------------------------------------------------------------
// Embedder
// ---------------------------------------------------------------------------

/// Deterministic text-to-unit-vector encoder.
pub trait Embedder {
    fn dimension(&self) -> usize;
    /// Must be deterministic and return a unit-norm vector of `dimension()`.
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Token-hash bag-of-words embedder: each token adds 1 to the bucket
/// `fnv1a64(token) mod D`; the result is L2-normalized. Empty text maps to
/// the first basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEmbedder {
    pub dimension: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder { dimension: DEFAULT_DIMENSION }
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut vector = alloc::vec![0.0; self.dimension];
        let tokens = crate::text::normalize_tokens(text);
        if tokens.is_empty() {
            vector[0] = 1.0;
            return vector;
        }
        for token in &tokens {
            let index = (fnv1a64_str(token) % self.dimension as u64) as usize;
            vector[index] += 1.0;
        }
        let norm = l2_norm(&vector);
        for value in &mut vector {
            *value /= norm;
        }
        vector
    }
}

// ---------------------------------------------------------------------------
// Vector store
// ---------------------------------------------------------------------------

/// Append-only store of unit-norm embeddings with strictly increasing ids.
///
/// Readers may share a snapshot freely; inserts require exclusive access.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VectorStore {
    pub dimension: usize,
    pub entries: Vec<EmbeddingEntry>,
}

impl VectorStore {
    pub fn new(dimension: usize) -> VectorStore {
        VectorStore { dimension, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append an entry, assigning the next id (previous max + 1, or 0 for an
    /// empty store). The entry's own `entry_id` is overwritten.
    pub fn insert(&mut self, mut entry: EmbeddingEntry) -> Result<u64, RagError> {
        self.check_vector(&entry.vector)?;
        let next_id = self.entries.last().map(|e| e.entry_id + 1).unwrap_or(0);
        entry.entry_id = next_id;
        self.entries.push(entry);
        Ok(next_id)
    }

    /// Exact top-k scan: cosine descending, ties by smaller entryId.
    pub fn query_top_k(
        &self,
        query: &[f64],
        k: usize,
    ) -> Result<Vec<(EmbeddingEntry, f64)>, RagError> {
        if k == 0 {
            return Err(RagError::InvalidK);
        }
        self.check_vector(query)?;
        let mut scored: Vec<(EmbeddingEntry, f64)> = self
            .entries
            .iter()
            .map(|entry| (entry.clone(), dot(&entry.vector, query)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1).then_with(|| a.0.entry_id.cmp(&b.0.entry_id))
        });
        scored.truncate(k);
        Ok(scored)
    }

    fn check_vector(&self, vector: &[f64]) -> Result<(), RagError> {
        if vector.len() != self.dimension {
            return Err(RagError::DimensionMismatch { expected: self.dimension, got: vector.len() });
        }
        let norm = l2_norm(vector);
        if !(norm.is_finite() && (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
            return Err(RagError::NotUnitNorm { norm });
        }
        Ok(())
    }
}

/// Dot product; on unit vectors this is the cosine similarity.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Role database construction
// ---------------------------------------------------------------------------

/// Options for corpus ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleDbOptions {
    /// Closed set of accepted trait keys.
    pub trait_vocabulary: BTreeSet<String>,
    /// Facts with token Jaccard at or above this against an earlier fact of
    /// the same role are dropped as redundant.
    pub dedupe_jaccard: f64,
    /// Salience assigned to newly ingested facts.
    pub default_salience: f64,
}

impl Default for RoleDbOptions {
    fn default() -> Self {
        RoleDbOptions {
            trait_vocabulary: builtin_trait_vocabulary(),
            dedupe_jaccard: 0.9,
            default_salience: 0.5,
        }
    }
}

/// Default closed trait vocabulary.
pub fn builtin_trait_vocabulary() -> BTreeSet<String> {
    ["profession", "ageBand", "residence", "education", "hometown", "employer"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Build one role per personRef plus the embedding store.
///
/// Trait docs contribute key=value lines; fact docs (including image and
/// video captions) become facts, near-duplicates dropped by token Jaccard,
/// and every kept fact embedded and inserted under the owning role.
/// Iteration order is first appearance, so rebuilding the same corpus yields
/// identical records and entry ids.
pub fn build_role_database(
    corpus: &[SocialCorpusDoc],
    embedder: &dyn Embedder,
    options: &RoleDbOptions,
) -> Result<(Vec<RoleRecord>, VectorStore), CorpusError> {
    let mut seen_docs = BTreeSet::new();
    for doc in corpus {
        if !seen_docs.insert(doc.doc_id.as_str()) {
            return Err(CorpusError::DuplicateDocId { doc_id: doc.doc_id.clone() });
        }
        if doc.person_ref.trim().is_empty() {
            return Err(CorpusError::MissingPersonRef { doc_id: doc.doc_id.clone() });
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<&SocialCorpusDoc>> = BTreeMap::new();
    // Distinct personRef spellings must not collapse onto one roleId.
    let mut spellings: BTreeMap<String, String> = BTreeMap::new();
    for doc in corpus {
        let role_id = doc.person_ref.trim().to_owned();
        match spellings.get(&role_id) {
            None => {
                spellings.insert(role_id.clone(), doc.person_ref.clone());
                order.push(role_id.clone());
            }
            Some(first) if *first != doc.person_ref => {
                return Err(CorpusError::DuplicateRoleId { role_id });
            }
            Some(_) => {}
        }
        grouped.entry(role_id).or_default().push(doc);
    }

    let mut roles = Vec::new();
    let mut store = VectorStore::new(embedder.dimension());
    for role_id in order {
        let docs = &grouped[&role_id];
        let mut traits = BTreeMap::new();
        let mut facts: Vec<Fact> = Vec::new();
        let mut embedding_ids = Vec::new();

        for doc in docs {
            match doc.kind {
                DocKind::Trait => {
                    for line in doc.content.lines() {
                        let line = line.trim();
                        if line.is_empty() {
                            continue;
                        }
                        let Some((key, value)) = line.split_once('=') else {
                            return Err(CorpusError::MalformedTraitLine {
                                doc_id: doc.doc_id.clone(),
                                line: line.to_string(),
                            });
                        };
                        let key = key.trim().to_string();
                        if !options.trait_vocabulary.contains(&key) {
                            return Err(CorpusError::UnknownTraitKey {
                                doc_id: doc.doc_id.clone(),
                                key,
                            });
                        }
                        traits.insert(key, value.trim().to_string());
                    }
                }
                DocKind::Fact => {
                    let text = normalize_whitespace(&doc.content);
                    if text.is_empty() {
                        return Err(CorpusError::EmptyFactText { doc_id: doc.doc_id.clone() });
                    }
                    let Some(category) = doc.category else {
                        return Err(CorpusError::MissingCategory { doc_id: doc.doc_id.clone() });
                    };
                    let redundant =
                        facts.iter().any(|kept| token_jaccard(&kept.text, &text) >= options.dedupe_jaccard);
                    if redundant {
                        continue;
                    }
                    let fact = Fact {
                        category,
                        text,
                        salience: options.default_salience,
                        source_modality: doc.modality,
                        observed_at_ms: doc.timestamp,
                    };
                    let entry_id = store.insert(EmbeddingEntry {
                        entry_id: 0,
                        vector: embedder.embed(&fact.text),
                        role_id: role_id.clone(),
                        source_ref: doc.doc_id.clone(),
                        modality: doc.modality,
                    })?;
                    embedding_ids.push(entry_id);
                    facts.push(fact);
                }
            }
        }

        roles.push(RoleRecord {
            role_id: role_id.clone(),
            pseudonym: role_id,
            traits,
            facts,
            embedding_ids,
        });
    }
    Ok((roles, store))
}

// ---------------------------------------------------------------------------
// Role identification
// ---------------------------------------------------------------------------

/// A track's resolved role, or none when every candidate fell below τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleAssignment {
    pub role_id: Option<String>,
    pub similarity: f64,
}

/// Query text for a track: its dominant expression, then speech attributed
/// to conversation partners, then the environment labels.
fn track_query_text(frame: &SocialContextFrame, track: &crate::model::FaceTrack) -> String {
    let mut parts: Vec<String> = Vec::new();
    parts.push(track.dominant_expression.clone());
    for segment in &frame.transcript {
        if segment.speaker == Speaker::Other {
            parts.push(segment.text.clone());
        }
    }
    for (label, count) in &frame.environment.object_labels {
        for _ in 0..*count {
            parts.push(label.clone());
        }
    }
    parts.join(" ")
}

/// Match each face track to at most one role with cosine ≥ τ.
///
/// Assignment is injective: when two tracks select the same role, the
/// higher-similarity track keeps it and the other falls back to its next
/// candidate at or above τ, or none.
pub fn identify_roles(
    store: &VectorStore,
    roles: &[RoleRecord],
    frame: &SocialContextFrame,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<BTreeMap<String, RoleAssignment>, RagError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RagError::InvalidThreshold);
    }

    // Per-track candidate roles: best cosine per role, ordered by the scan.
    let mut candidates: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for track in &frame.face_tracks {
        let query = embedder.embed(&track_query_text(frame, track));
        let k = roles.len().max(1);
        let ranked =
            if store.is_empty() { Vec::new() } else { store.query_top_k(&query, k)? };
        let mut per_role: Vec<(String, f64)> = Vec::new();
        for (entry, cosine) in ranked {
            if !per_role.iter().any(|(role_id, _)| *role_id == entry.role_id) {
                per_role.push((entry.role_id, cosine));
            }
        }
        candidates.insert(track.track_id.clone(), per_role);
    }

    // Strongest track claims first; later tracks skip taken roles.
    let mut track_order: Vec<(&String, f64)> = candidates
        .iter()
        .map(|(track_id, list)| (track_id, list.first().map(|(_, c)| *c).unwrap_or(f64::NEG_INFINITY)))
        .collect();
    track_order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut assignments = BTreeMap::new();
    for (track_id, _) in track_order {
        let list = &candidates[track_id];
        let chosen = list
            .iter()
            .find(|(role_id, cosine)| *cosine >= threshold && !taken.contains(role_id));
        let assignment = match chosen {
            Some((role_id, cosine)) => {
                taken.insert(role_id.clone());
                RoleAssignment { role_id: Some(role_id.clone()), similarity: *cosine }
            }
            None => RoleAssignment {
                role_id: None,
                similarity: list.first().map(|(_, c)| *c).unwrap_or(0.0),
            },
        };
        assignments.insert(track_id.clone(), assignment);
    }
    Ok(assignments)
}

// ---------------------------------------------------------------------------
// Profile generation and adaptation
// ---------------------------------------------------------------------------

/// Actionable-first category weights.
pub fn category_weight(category: crate::model::FactCategory) -> f64 {
    use crate::model::FactCategory::*;
    match category {
        Interest => 1.0,
        Vulnerability => 1.0,
        Event => 0.8,
        Relational => 0.5,
        Demographic => 0.2,
    }
}

/// rankScore = categoryWeight × salience × 2^(−ageDays/30).
///
/// Future-dated facts clamp to age zero rather than inflating.
pub fn rank_score(fact: &Fact, now_ms: i64) -> f64 {
    let age_ms = (now_ms - fact.observed_at_ms).max(0) as f64;
    let age_days = age_ms / 86_400_000.0;
    category_weight(fact.category) * fact.salience * libm::exp2(-age_days / DECAY_HALF_LIFE_DAYS)
}

fn rank_facts(facts: Vec<Fact>, now_ms: i64) -> Vec<RankedFact> {
    let mut ranked: Vec<RankedFact> = facts
        .into_iter()
        .map(|fact| {
            let score = rank_score(&fact, now_ms);
            RankedFact { fact, rank_score: score }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.rank_score.total_cmp(&a.rank_score).then_with(|| a.fact.text.cmp(&b.fact.text))
    });
    ranked
}

/// Rank a role's facts into a [`SocialProfile`] for the given environment.
pub fn generate_profile(
    role: &RoleRecord,
    environment: &EnvironmentSummary,
    now_ms: i64,
) -> SocialProfile {
    SocialProfile {
        role_id: role.role_id.clone(),
        core_identity: role.traits.clone(),
        ranked_facts: rank_facts(role.facts.clone(), now_ms),
        environment_context: environment.clone(),
        last_updated_ms: now_ms,
    }
}

/// Fold a live frame into a profile: each transcript segment retrieves its
/// top-3 same-role facts, whose salience rises by 0.1 (capped at 1), then
/// facts are re-ranked and the environment context replaced.
pub fn adapt_profile(
    profile: &SocialProfile,
    frame: &SocialContextFrame,
    store: &VectorStore,
    embedder: &dyn Embedder,
    now_ms: i64,
) -> Result<SocialProfile, RagError> {
    let role_entries: Vec<&EmbeddingEntry> =
        store.entries.iter().filter(|e| e.role_id == profile.role_id).collect();
    if role_entries.is_empty() && !profile.ranked_facts.is_empty() {
        return Err(RagError::UnknownRole { role_id: profile.role_id.clone() });
    }

    let mut facts: Vec<Fact> = profile.ranked_facts.iter().map(|r| r.fact.clone()).collect();
    // Entries map back to profile facts through the deterministic embedder:
    // within a role, deduped facts have distinct token sets, hence distinct
    // vectors in practice.
    let fact_vectors: Vec<Vec<f64>> = facts.iter().map(|f| embedder.embed(&f.text)).collect();

    for segment in &frame.transcript {
        let query = embedder.embed(&segment.text);
        let mut scored: Vec<(&EmbeddingEntry, f64)> =
            role_entries.iter().map(|e| (*e, dot(&e.vector, &query))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.entry_id.cmp(&b.0.entry_id)));
        for (entry, _) in scored.into_iter().take(3) {
            if let Some(index) = fact_vectors.iter().position(|v| v[..] == entry.vector[..]) {
                facts[index].salience = (facts[index].salience + SALIENCE_BUMP).min(1.0);
            }
        }
    }

    Ok(SocialProfile {
        role_id: profile.role_id.clone(),
        core_identity: profile.core_identity.clone(),
        ranked_facts: rank_facts(facts, now_ms),
        environment_context: frame.environment.clone(),
        last_updated_ms: now_ms,
    })
}
