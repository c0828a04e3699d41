//! Shared domain types and their validation.
//!
//! Every type serializes as a single JSON object with lowerCamelCase field
//! names; that encoding is the canonical on-disk and on-wire form. All types
//! are immutable values and safe to share across threads.
//!
//! [`validate`] never fails abnormally: it returns a report listing each
//! violated invariant with a path into the offending value.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A single violated invariant, with a path into the value that broke it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Outcome of validating a domain value. Empty means every invariant holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }
}

/// Report-based invariant checking. Total: no value causes a panic.
pub trait Validate {
    fn check(&self, path: &str, report: &mut ValidationReport);

    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.check("", &mut report);
        report
    }
}

fn join(path: &str, field: &str) -> String {
    if path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

fn check_unit_interval(value: f64, path: String, report: &mut ValidationReport) {
    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
        report.push(path, format!("value {value} must lie in [0,1]"));
    }
}

// ---------------------------------------------------------------------------
// Cue events
// ---------------------------------------------------------------------------

/// Source modality of a cue event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CueModality {
    Visual,
    Audio,
    Environment,
}

/// A scalar or string feature value inside a cue payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PayloadValue {
    Number(f64),
    Text(String),
}

/// A timestamped, per-track multimodal annotation ingested in place of raw
/// sensor streams (expression scores, object labels, ambient metadata).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CueEvent {
    pub timestamp_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<String>,
    pub modality: CueModality,
    pub payload: BTreeMap<String, PayloadValue>,
}

impl Validate for CueEvent {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if self.timestamp_ms < 0 {
            report.push(join(path, "timestampMs"), "timestampMs ≥ 0");
        }
        match self.modality {
            CueModality::Visual if self.track_id.is_none() => {
                report.push(join(path, "trackId"), "Visual cues must carry a trackId");
            }
            CueModality::Environment if self.track_id.is_some() => {
                report.push(join(path, "trackId"), "Environment cues must not carry a trackId");
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Social context frames
// ---------------------------------------------------------------------------

/// Which side of the conversation a transcript segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    Primary,
    Other,
}

/// A contiguous attributed span of transcribed speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Segment {
    pub speaker: Speaker,
    pub text: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

/// One observed face track within a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FaceTrack {
    pub track_id: String,
    pub expression_scores: BTreeMap<String, f64>,
    pub dominant_expression: String,
}

/// Indoor/outdoor verdict for a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    Indoor,
    Outdoor,
    Unknown,
}

/// Environment block: detected object labels (as a multiset) plus setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnvironmentSummary {
    pub object_labels: BTreeMap<String, u32>,
    pub setting: Setting,
}

impl Default for EnvironmentSummary {
    fn default() -> Self {
        EnvironmentSummary { object_labels: BTreeMap::new(), setting: Setting::Unknown }
    }
}

/// Per-track emotion estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmotionEstimate {
    pub label: String,
    pub confidence: f64,
}

/// Windowed fusion of face, speech, and environment cues — the structured
/// social context handed from stage 1 to stage 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SocialContextFrame {
    pub window_start_ms: i64,
    pub window_end_ms: i64,
    pub face_tracks: Vec<FaceTrack>,
    pub transcript: Vec<Segment>,
    pub environment: EnvironmentSummary,
    pub emotion: BTreeMap<String, EmotionEstimate>,
}

impl Validate for SocialContextFrame {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if self.window_start_ms >= self.window_end_ms {
            report.push(join(path, "windowStartMs"), "windowStartMs < windowEndMs");
        }
        for (i, segment) in self.transcript.iter().enumerate() {
            if segment.start_ms < self.window_start_ms || segment.end_ms > self.window_end_ms {
                report.push(
                    join(path, &format!("transcript[{i}]")),
                    "segment must lie within the window",
                );
            }
        }
        for (track_id, emotion) in &self.emotion {
            check_unit_interval(
                emotion.confidence,
                join(path, &format!("emotion[{track_id}].confidence")),
                report,
            );
        }
        for (i, track) in self.face_tracks.iter().enumerate() {
            for (key, score) in &track.expression_scores {
                check_unit_interval(
                    *score,
                    join(path, &format!("faceTracks[{i}].expressionScores[{key}]")),
                    report,
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Roles, facts, embeddings, profiles
// ---------------------------------------------------------------------------

/// What kind of insight a fact carries. Actionable categories (interests,
/// vulnerabilities) outrank fragmented demographics when profiles are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactCategory {
    Demographic,
    Relational,
    Interest,
    Event,
    Vulnerability,
}

impl FactCategory {
    pub fn parse(name: &str) -> Option<FactCategory> {
        match name.to_lowercase().as_str() {
            "demographic" => Some(FactCategory::Demographic),
            "relational" => Some(FactCategory::Relational),
            "interest" => Some(FactCategory::Interest),
            "event" => Some(FactCategory::Event),
            "vulnerability" => Some(FactCategory::Vulnerability),
            _ => None,
        }
    }
}

/// Modality of the document a fact or embedding was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceModality {
    Text,
    ImageCaption,
    VideoCaption,
}

/// One piece of knowledge about a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fact {
    pub category: FactCategory,
    pub text: String,
    pub salience: f64,
    pub source_modality: SourceModality,
    pub observed_at_ms: i64,
}

impl Validate for Fact {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if crate::text::normalize_whitespace(&self.text).is_empty() {
            report.push(join(path, "text"), "text non-empty after whitespace normalization");
        }
        check_unit_interval(self.salience, join(path, "salience"), report);
    }
}

/// Per-person structured identity: traits, facts, and embedding references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoleRecord {
    pub role_id: String,
    pub pseudonym: String,
    pub traits: BTreeMap<String, String>,
    pub facts: Vec<Fact>,
    pub embedding_ids: Vec<u64>,
}

impl Validate for RoleRecord {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if self.role_id.is_empty() {
            report.push(join(path, "roleId"), "roleId must be non-empty");
        }
        for (i, fact) in self.facts.iter().enumerate() {
            fact.check(&join(path, &format!("facts[{i}]")), report);
        }
    }
}

impl RoleRecord {
    /// Trait keys must come from the declared vocabulary; unknown keys are
    /// validation errors, not silent passthrough.
    pub fn check_trait_vocabulary(
        &self,
        vocabulary: &alloc::collections::BTreeSet<String>,
        report: &mut ValidationReport,
    ) {
        for key in self.traits.keys() {
            if !vocabulary.contains(key) {
                report.push(
                    format!("traits.{key}"),
                    format!("trait key '{key}' is not in the declared vocabulary"),
                );
            }
        }
    }
}

/// Norm slack tolerated on stored vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A unit-norm vector stored in the vector database, owned by a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmbeddingEntry {
    pub entry_id: u64,
    pub vector: Vec<f64>,
    pub role_id: String,
    pub source_ref: String,
    pub modality: SourceModality,
}

/// L2 norm of a vector.
pub fn l2_norm(vector: &[f64]) -> f64 {
    libm::sqrt(vector.iter().map(|v| v * v).sum())
}

impl EmbeddingEntry {
    pub fn is_unit_norm(&self) -> bool {
        let norm = l2_norm(&self.vector);
        norm.is_finite() && (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }
}

impl Validate for EmbeddingEntry {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if !self.is_unit_norm() {
            report.push(join(path, "vector"), "|‖vector‖₂ − 1| ≤ 1e-6");
        }
        if !self.vector.iter().all(|v| v.is_finite()) {
            report.push(join(path, "vector"), "vector components must be finite");
        }
    }
}

/// A fact with its computed rank score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankedFact {
    pub fact: Fact,
    pub rank_score: f64,
}

/// The ranked, actionable-first view of a role handed to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SocialProfile {
    pub role_id: String,
    pub core_identity: BTreeMap<String, String>,
    pub ranked_facts: Vec<RankedFact>,
    pub environment_context: EnvironmentSummary,
    pub last_updated_ms: i64,
}

impl Validate for SocialProfile {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        for pair in self.ranked_facts.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let ordered = a.rank_score > b.rank_score
                || (a.rank_score == b.rank_score && a.fact.text <= b.fact.text);
            if !ordered {
                report.push(
                    join(path, "rankedFacts"),
                    "rankedFacts sorted by rankScore non-increasing, ties by text",
                );
                break;
            }
        }
        for (i, ranked) in self.ranked_facts.iter().enumerate() {
            ranked.fact.check(&join(path, &format!("rankedFacts[{i}].fact")), report);
        }
    }
}

// ---------------------------------------------------------------------------
// Strategy templates
// ---------------------------------------------------------------------------

/// How a template requirement is evaluated against a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredicateKind {
    /// Argument "key=value": the profile trait `key` equals `value`.
    TraitEquals,
    /// Argument names a [`FactCategory`]; satisfied when any fact has it.
    HasFactCategory,
    /// Argument is a keyword phrase matched on token boundaries in fact text.
    FactKeyword,
}

/// One weighted requirement of a strategy template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Predicate {
    pub kind: PredicateKind,
    pub argument: String,
    pub weight: f64,
}

/// One phase of a strategy: objective, prompt skeleton, and loop controls.
///
/// The skeleton may contain `{FACT_i}`, `{HISTORY}`, and `{STAGE_OBJECTIVE}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageSpec {
    pub name: String,
    pub objective: String,
    pub prompt_skeleton: String,
    pub success_cues: Vec<String>,
    pub max_retries: u32,
}

/// A predefined multi-stage SE strategy with weighted applicability
/// requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyTemplate {
    pub template_id: String,
    pub priority: i32,
    pub requirements: Vec<Predicate>,
    pub stages: Vec<StageSpec>,
}

impl Validate for StrategyTemplate {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if self.stages.is_empty() {
            report.push(join(path, "stages"), "at least one stage");
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for stage in &self.stages {
            if !seen.insert(stage.name.clone()) {
                report.push(join(path, "stages"), format!("duplicate stage name '{}'", stage.name));
            }
        }
        for (i, predicate) in self.requirements.iter().enumerate() {
            if !(predicate.weight > 0.0) {
                report.push(join(path, &format!("requirements[{i}].weight")), "all weights > 0");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Conversations
// ---------------------------------------------------------------------------

/// Who produced an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Author {
    Agent,
    Target,
}

/// One turn of the transcript, labeled with the stage active when produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Utterance {
    pub author: Author,
    pub text: String,
    pub stage_name: String,
    pub turn_index: u64,
}

/// Terminal state of a conversation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConversationOutcome {
    Completed,
    AbortedByTarget,
    Exhausted,
}

/// The evolving transcript of the reasoning-interaction cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConversationState {
    pub history: Vec<Utterance>,
    pub current_stage_index: usize,
    pub topic_weights: BTreeMap<String, f64>,
    pub outcome: ConversationOutcome,
}

impl Validate for ConversationState {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        let mut last_index: Option<u64> = None;
        for (i, utterance) in self.history.iter().enumerate() {
            if let Some(prev) = last_index {
                if utterance.turn_index <= prev {
                    report.push(
                        join(path, &format!("history[{i}].turnIndex")),
                        "turnIndex strictly increasing",
                    );
                }
            }
            last_index = Some(utterance.turn_index);
            let expected =
                if i % 2 == 0 { Author::Agent } else { Author::Target };
            if utterance.author != expected {
                report.push(
                    join(path, &format!("history[{i}].author")),
                    "authors strictly alternate Agent, Target, Agent, ...",
                );
            }
        }
        for (topic, weight) in &self.topic_weights {
            if !(weight.is_finite() && *weight >= 0.0) {
                report.push(join(path, &format!("topicWeights[{topic}]")), "weight ≥ 0");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Questionnaire responses
// ---------------------------------------------------------------------------

/// Questionnaire section a response belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurveySection {
    BaselineComparison,
    SubjectiveExperience,
    SEEffectiveness,
    OpenText,
}

/// Answer payload: a Likert integer, a yes/no, or free text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseValue {
    Likert(i64),
    YesNo(bool),
    Text(String),
}

/// One survey answer from one (pseudonymized) participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionnaireResponse {
    pub participant_pseudonym: String,
    pub section: SurveySection,
    pub question_id: String,
    pub value: ResponseValue,
}

impl Validate for QuestionnaireResponse {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if let ResponseValue::Likert(v) = self.value {
            if !(1..=5).contains(&v) {
                report.push(join(path, "value"), "Likert values ∈ {1,2,3,4,5}");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Social corpus documents
// ---------------------------------------------------------------------------

/// Whether a corpus document declares identity traits or a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Trait,
    Fact,
}

/// One pre-collected social document about a person: a microblog post, a
/// profile snippet, or a caption standing in for image/video content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SocialCorpusDoc {
    pub doc_id: String,
    pub person_ref: String,
    pub kind: DocKind,
    pub modality: SourceModality,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<FactCategory>,
    pub timestamp: i64,
    pub source: String,
}

impl Validate for SocialCorpusDoc {
    fn check(&self, path: &str, report: &mut ValidationReport) {
        if self.doc_id.is_empty() {
            report.push(join(path, "docId"), "docId must be non-empty");
        }
        if self.person_ref.trim().is_empty() {
            report.push(join(path, "personRef"), "personRef must be non-empty");
        }
    }
}
