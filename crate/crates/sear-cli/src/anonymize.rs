//! Deterministic keyed pseudonymization.
//!
//! Identity fields become `P-` plus the first 8 hex characters of a keyed
//! SHA-256 over the whitespace-normalized name, so the same key always maps
//! the same name to the same pseudonym, different keys diverge, and re-runs
//! of a study snapshot stay joinable. Known names are also scrubbed from
//! free text, longest match first, and identity-bearing payload keys on the
//! denylist are dropped rather than transformed. Values already in
//! pseudonym form pass through unchanged, which makes the whole operation
//! idempotent. The mapping digest authenticates the name→pseudonym map for
//! audit without storing a name table.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use sear_core::model::{PayloadValue, QuestionnaireResponse, ResponseValue, SocialCorpusDoc};
use sear_core::text::normalize_whitespace;

use crate::dataset::LoadedSession;

/// Errors from anonymization.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnonymizeError {
    #[error("anonymization key must be non-empty")]
    EmptyKey,
}

/// name → pseudonym map produced by one run (already-pseudonymized inputs
/// are not mapped).
pub type NameMap = BTreeMap<String, String>;

fn keyed_hash(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((key.len() as u64).to_le_bytes());
    hasher.update(key);
    hasher.update(data);
    hasher.finalize().into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// True for strings already in the `P-xxxxxxxx` pseudonym form.
pub fn is_pseudonym(value: &str) -> bool {
    let Some(rest) = value.strip_prefix("P-") else { return false };
    rest.len() == 8 && rest.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}

/// Deterministic pseudonym for a name under a key.
pub fn pseudonym_for(key: &[u8], name: &str) -> String {
    let digest = keyed_hash(key, normalize_whitespace(name).as_bytes());
    format!("P-{}", &hex(&digest)[..8])
}

/// Keyed digest over the sorted pseudonym map.
pub fn mapping_digest(key: &[u8], map: &NameMap) -> String {
    let mut joined = String::new();
    for (name, pseudonym) in map {
        joined.push_str(name);
        joined.push_str("=>");
        joined.push_str(pseudonym);
        joined.push(';');
    }
    hex(&keyed_hash(key, joined.as_bytes()))
}

fn map_identity(key: &[u8], value: &str, map: &mut NameMap) -> String {
    if is_pseudonym(value) {
        return value.to_string();
    }
    let pseudonym = pseudonym_for(key, value);
    map.insert(value.to_string(), pseudonym.clone());
    pseudonym
}

/// Replace every occurrence of each known name inside free text, longest
/// name first so overlapping names cannot shadow each other.
fn scrub_text(text: &str, map: &NameMap) -> String {
    let mut names: Vec<(&String, &String)> = map.iter().collect();
    names.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(b.0)));
    let mut out = text.to_string();
    for (name, pseudonym) in names {
        out = out.replace(name.as_str(), pseudonym);
    }
    out
}

/// Pseudonymize a session: participants, then free text and payloads, with
/// denylisted payload keys dropped.
pub fn anonymize_session(
    session: &LoadedSession,
    key: &[u8],
    payload_denylist: &[String],
) -> Result<(LoadedSession, NameMap, String), AnonymizeError> {
    if key.is_empty() {
        return Err(AnonymizeError::EmptyKey);
    }
    let mut map = NameMap::new();
    let mut out = session.clone();
    out.header.participants =
        session.header.participants.iter().map(|p| map_identity(key, p, &mut map)).collect();

    for event in &mut out.events {
        event.payload.retain(|k, _| !payload_denylist.contains(k));
        for value in event.payload.values_mut() {
            if let PayloadValue::Text(text) = value {
                *text = scrub_text(text, &map);
            }
        }
    }
    for token in &mut out.tokens {
        token.text = scrub_text(&token.text, &map);
    }
    let digest = mapping_digest(key, &map);
    Ok((out, map, digest))
}

/// Pseudonymize a corpus: personRefs become pseudonyms and known names are
/// scrubbed from document content.
pub fn anonymize_corpus(
    corpus: &[SocialCorpusDoc],
    key: &[u8],
) -> Result<(Vec<SocialCorpusDoc>, NameMap, String), AnonymizeError> {
    if key.is_empty() {
        return Err(AnonymizeError::EmptyKey);
    }
    let mut map = NameMap::new();
    let mut out: Vec<SocialCorpusDoc> = corpus.to_vec();
    for doc in &mut out {
        doc.person_ref = map_identity(key, &doc.person_ref, &mut map);
    }
    for doc in &mut out {
        doc.content = scrub_text(&doc.content, &map);
    }
    let digest = mapping_digest(key, &map);
    Ok((out, map, digest))
}

/// Pseudonymize questionnaire responses.
pub fn anonymize_responses(
    responses: &[QuestionnaireResponse],
    key: &[u8],
) -> Result<(Vec<QuestionnaireResponse>, NameMap, String), AnonymizeError> {
    if key.is_empty() {
        return Err(AnonymizeError::EmptyKey);
    }
    let mut map = NameMap::new();
    let mut out: Vec<QuestionnaireResponse> = responses.to_vec();
    for response in &mut out {
        response.participant_pseudonym =
            map_identity(key, &response.participant_pseudonym, &mut map);
    }
    for response in &mut out {
        if let ResponseValue::Text(text) = &mut response.value {
            *text = scrub_text(text, &map);
        }
    }
    let digest = mapping_digest(key, &map);
    Ok((out, map, digest))
}
