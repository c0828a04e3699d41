//! Command implementations behind the CLI verbs.
//!
//! Every command is deterministic given its inputs and config: scripted
//! backends, temperature 0, and timestamps taken from the data rather than
//! the wall clock, so repeated invocations produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sear_core::agent::{
    check_se_strategies, default_three_stage_template, run_conversation, StageAttempt,
    StrategyScore,
};
use sear_core::backends::{
    DialogueBackend, InteractionError, Persona, PersonaTarget, ScriptedBackend, TargetInterface,
};
use sear_core::model::{
    ConversationOutcome, EmbeddingEntry, EnvironmentSummary, FaceTrack, RoleRecord,
    SocialContextFrame, SocialProfile, StrategyTemplate, Utterance, Validate,
};
use sear_core::rag::{
    build_role_database, generate_profile, identify_roles, Embedder, MockEmbedder, VectorStore,
};
use sear_core::survey::{build_report, QuestionnaireSchema};

use crate::anonymize::{anonymize_corpus, anonymize_responses, anonymize_session};
use crate::config::AppConfig;
use crate::dataset::{
    load_corpus, load_session, write_ndjson, write_session, DatasetError, LineError,
};
use crate::http::HttpChatBackend;
use crate::serve::{run_serve, ServeContext};
use crate::survey_io::{export_summary, load_responses, load_schema, SummaryFormat};
use crate::CliError;

// ---------------------------------------------------------------------------
// Shared loading helpers
// ---------------------------------------------------------------------------

impl From<DatasetError> for CliError {
    fn from(error: DatasetError) -> CliError {
        CliError::input(error.to_string())
    }
}

/// Read roles.json + embeddings.ndjson back into memory, checking entry
/// order, dimension, and norms.
pub fn load_roles_dir(dir: &Path) -> Result<(Vec<RoleRecord>, VectorStore), CliError> {
    let roles_path = dir.join("roles.json");
    let text = std::fs::read_to_string(&roles_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", roles_path.display())))?;
    let roles: Vec<RoleRecord> = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("invalid {}: {e}", roles_path.display())))?;

    let embeddings_path = dir.join("embeddings.ndjson");
    let text = std::fs::read_to_string(&embeddings_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", embeddings_path.display())))?;
    let mut entries: Vec<EmbeddingEntry> = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: EmbeddingEntry = serde_json::from_str(line).map_err(|e| {
            CliError::input(format!("{} line {}: {e}", embeddings_path.display(), index + 1))
        })?;
        let report = entry.validate();
        if !report.is_valid() {
            return Err(CliError::input(format!(
                "{} line {}: {}",
                embeddings_path.display(),
                index + 1,
                report.violations[0].message
            )));
        }
        if let Some(previous) = entries.last() {
            if entry.entry_id <= previous.entry_id {
                return Err(CliError::input(format!(
                    "{} line {}: entryId {} is not strictly increasing",
                    embeddings_path.display(),
                    index + 1,
                    entry.entry_id
                )));
            }
            if entry.vector.len() != previous.vector.len() {
                return Err(CliError::input(format!(
                    "{} line {}: inconsistent vector dimension",
                    embeddings_path.display(),
                    index + 1
                )));
            }
        }
        entries.push(entry);
    }
    let dimension = entries.first().map(|e| e.vector.len()).unwrap_or(0);
    Ok((roles, VectorStore { dimension, entries }))
}

fn load_templates(path: Option<&Path>) -> Result<Vec<StrategyTemplate>, CliError> {
    let Some(path) = path else {
        return Ok(vec![default_three_stage_template()]);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let templates: Vec<StrategyTemplate> = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("invalid {}: {e}", path.display())))?;
    if templates.is_empty() {
        return Err(CliError::input(format!("{} contains no templates", path.display())));
    }
    for template in &templates {
        let report = template.validate();
        if !report.is_valid() {
            return Err(CliError::input(format!(
                "template '{}': {}",
                template.template_id, report.violations[0].message
            )));
        }
    }
    Ok(templates)
}

fn load_personas(path: &Path) -> Result<Vec<Persona>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let personas: Vec<Persona> = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("invalid {}: {e}", path.display())))?;
    for persona in &personas {
        if persona.default_reply.is_empty() {
            return Err(CliError::input(format!(
                "persona '{}' has an empty defaultReply",
                persona.persona_id
            )));
        }
    }
    Ok(personas)
}

fn make_backend(
    kind: BackendKind,
    config: &AppConfig,
) -> Result<Box<dyn DialogueBackend>, CliError> {
    match kind {
        BackendKind::Scripted => Ok(Box::new(ScriptedBackend::new())),
        BackendKind::Http => {
            let http = config.http.clone().ok_or_else(|| {
                CliError::input("backend 'http' requires an `http` block in the config".to_string())
            })?;
            Ok(Box::new(HttpChatBackend::new(http).map_err(|e| CliError::runtime(e.to_string()))?))
        }
    }
}

// ---------------------------------------------------------------------------
// build-roles
// ---------------------------------------------------------------------------

/// Build roles.json + embeddings.ndjson from a corpus; returns the summary
/// line to print.
pub fn cmd_build_roles(
    corpus_path: &Path,
    out_dir: &Path,
    config: &AppConfig,
) -> Result<String, CliError> {
    let corpus = load_corpus(corpus_path)?;
    let embedder = MockEmbedder { dimension: config.dimension };
    let (roles, store) = build_role_database(&corpus, &embedder, &config.role_db_options())
        .map_err(|e| CliError::input(e.to_string()))?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut roles_json = serde_json::to_string_pretty(&roles).expect("roles serialize");
    roles_json.push('\n');
    std::fs::write(out_dir.join("roles.json"), roles_json)
        .map_err(|e| CliError::runtime(format!("cannot write roles.json: {e}")))?;
    write_ndjson(&out_dir.join("embeddings.ndjson"), &store.entries)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let facts: usize = roles.iter().map(|r| r.facts.len()).sum();
    Ok(format!("roles={} facts={} embeddings={}", roles.len(), facts, store.len()))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Which text-generation backend a command uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Scripted,
    Http,
}

/// Who answers the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Persona,
    Repl,
}

/// The three experimental arms: unassisted conversation, pipeline without
/// the agent (profile only), and the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Bare,
    NoAgent,
    Full,
}

impl Arm {
    fn name(self) -> &'static str {
        match self {
            Arm::Bare => "bare",
            Arm::NoAgent => "no-agent",
            Arm::Full => "full",
        }
    }
}

/// Inputs of one simulation run.
pub struct SimulateArgs {
    pub roles_dir: PathBuf,
    pub templates_path: Option<PathBuf>,
    pub persona_path: Option<PathBuf>,
    pub persona_id: Option<String>,
    pub backend: BackendKind,
    pub target: TargetKind,
    pub arm: Arm,
    pub declared_role: Option<String>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Metrics JSON written next to the transcript.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationMetrics {
    pub arm: String,
    pub seed: u64,
    pub role_id: String,
    pub role_selection: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<StrategyScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageAttempt>,
    pub utterance_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ConversationOutcome>,
}

/// A minimal observation frame used when no role is declared: one neutral
/// track, nothing else.
fn synthetic_opening_frame() -> SocialContextFrame {
    SocialContextFrame {
        window_start_ms: 0,
        window_end_ms: 1000,
        face_tracks: vec![FaceTrack {
            track_id: "track-0".to_string(),
            expression_scores: BTreeMap::new(),
            dominant_expression: "neutral".to_string(),
        }],
        transcript: vec![],
        environment: EnvironmentSummary::default(),
        emotion: BTreeMap::new(),
    }
}

/// Interactive target over arbitrary streams; EOF closes the channel.
pub struct ReplTarget<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> ReplTarget<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        ReplTarget { reader, writer }
    }
}

impl<R: BufRead, W: Write> TargetInterface for ReplTarget<R, W> {
    fn respond(&mut self, utterance: &str) -> Result<String, InteractionError> {
        writeln!(self.writer, "Agent: {utterance}")
            .and_then(|()| write!(self.writer, "You: "))
            .and_then(|()| self.writer.flush())
            .map_err(|e| InteractionError::Other(e.to_string()))?;
        let mut line = String::new();
        let read = self
            .reader
            .read_line(&mut line)
            .map_err(|e| InteractionError::Other(e.to_string()))?;
        if read == 0 {
            return Err(InteractionError::ChannelClosed);
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

fn empty_profile() -> SocialProfile {
    SocialProfile {
        role_id: "unassisted".to_string(),
        core_identity: BTreeMap::new(),
        ranked_facts: vec![],
        environment_context: EnvironmentSummary::default(),
        last_updated_ms: 0,
    }
}

/// Run one simulation; writes transcript.ndjson, metrics.json, and (when a
/// profile exists) profile.json under the output directory.
pub fn cmd_simulate(args: &SimulateArgs, config: &AppConfig) -> Result<String, CliError> {
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", args.out_dir.display())))?;

    let (profile, role_id, role_selection) = if args.arm == Arm::Bare {
        (empty_profile(), "unassisted".to_string(), "none".to_string())
    } else {
        let (roles, store) = load_roles_dir(&args.roles_dir)?;
        if roles.is_empty() {
            return Err(CliError::input("role database is empty".to_string()));
        }
        let embedder = MockEmbedder { dimension: store.dimension.max(1) };
        let (role, selection) = match &args.declared_role {
            Some(declared) => {
                let role = roles.iter().find(|r| r.role_id == *declared).ok_or_else(|| {
                    CliError::input(format!("role '{declared}' is not in the database"))
                })?;
                (role.clone(), "declared".to_string())
            }
            None => {
                let frame = synthetic_opening_frame();
                let assignments =
                    identify_roles(&store, &roles, &frame, &embedder, config.role_match_threshold)
                        .map_err(|e| CliError::runtime(e.to_string()))?;
                let identified = assignments
                    .values()
                    .filter_map(|a| a.role_id.clone())
                    .next()
                    .and_then(|id| roles.iter().find(|r| r.role_id == id));
                match identified {
                    Some(role) => (role.clone(), "identified".to_string()),
                    None => (roles[0].clone(), "fallback".to_string()),
                }
            }
        };
        // Recency is measured from the newest fact, keeping runs
        // reproducible regardless of wall clock.
        let now_ms = role.facts.iter().map(|f| f.observed_at_ms).max().unwrap_or(0);
        let profile = generate_profile(&role, &EnvironmentSummary::default(), now_ms);
        (profile, role.role_id.clone(), selection)
    };

    let mut profile_json = serde_json::to_string_pretty(&profile).expect("profile serializes");
    profile_json.push('\n');
    std::fs::write(args.out_dir.join("profile.json"), profile_json)
        .map_err(|e| CliError::runtime(format!("cannot write profile.json: {e}")))?;

    let mut metrics = SimulationMetrics {
        arm: args.arm.name().to_string(),
        seed: args.seed,
        role_id,
        role_selection,
        selected_template: None,
        confidence: None,
        scores: vec![],
        stages: vec![],
        utterance_count: 0,
        outcome: None,
    };

    if args.arm == Arm::NoAgent {
        write_metrics_and_transcript(&args.out_dir, &metrics, &[])?;
        return Ok(format!("arm=no-agent role={} profile written", metrics.role_id));
    }

    let templates = load_templates(args.templates_path.as_deref())?;
    let (selected, scores) = check_se_strategies(&templates, &profile)
        .map_err(|e| CliError::input(e.to_string()))?;
    metrics.selected_template = Some(selected.template_id.clone());
    metrics.confidence = scores
        .iter()
        .find(|s| s.template_id == selected.template_id)
        .map(|s| s.confidence);
    metrics.scores = scores;

    let backend = make_backend(args.backend, config)?;
    let mut target: Box<dyn TargetInterface> = match args.target {
        TargetKind::Persona => {
            let path = args
                .persona_path
                .as_deref()
                .ok_or_else(|| CliError::input("--persona is required for a persona target".to_string()))?;
            let personas = load_personas(path)?;
            let persona = match &args.persona_id {
                Some(id) => personas
                    .into_iter()
                    .find(|p| p.persona_id == *id)
                    .ok_or_else(|| CliError::input(format!("persona '{id}' not found")))?,
                None => personas
                    .into_iter()
                    .next()
                    .ok_or_else(|| CliError::input("personas file is empty".to_string()))?,
            };
            Box::new(PersonaTarget::new(persona))
        }
        TargetKind::Repl => {
            Box::new(ReplTarget::new(std::io::BufReader::new(std::io::stdin()), std::io::stdout()))
        }
    };

    let run = run_conversation(
        &selected,
        &profile,
        target.as_mut(),
        backend.as_ref(),
        &config.loop_policy(),
        &config.receptiveness_lexicon,
        &config.agent_config(),
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;

    metrics.stages = run.attempts.clone();
    metrics.utterance_count = run.state.history.len();
    metrics.outcome = Some(run.state.outcome);
    write_metrics_and_transcript(&args.out_dir, &metrics, &run.state.history)?;

    if let Some(error) = run.error {
        return Err(CliError::runtime(format!("conversation exhausted: {error}")));
    }
    Ok(format!(
        "arm={} template={} utterances={} outcome={:?}",
        metrics.arm,
        metrics.selected_template.as_deref().unwrap_or("-"),
        metrics.utterance_count,
        run.state.outcome
    ))
}

fn write_metrics_and_transcript(
    out_dir: &Path,
    metrics: &SimulationMetrics,
    history: &[Utterance],
) -> Result<(), CliError> {
    write_ndjson(&out_dir.join("transcript.ndjson"), history)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let mut metrics_json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    metrics_json.push('\n');
    std::fs::write(out_dir.join("metrics.json"), metrics_json)
        .map_err(|e| CliError::runtime(format!("cannot write metrics.json: {e}")))
}

// ---------------------------------------------------------------------------
// analyze-survey
// ---------------------------------------------------------------------------

/// Aggregate a responses file and export the summary; returns the headline
/// lines to print.
pub fn cmd_analyze_survey(
    responses_path: &Path,
    schema_path: Option<&Path>,
    out_path: &Path,
    format: SummaryFormat,
) -> Result<String, CliError> {
    let schema = match schema_path {
        Some(path) => load_schema(path)?,
        None => QuestionnaireSchema::default(),
    };
    let loaded = load_responses(responses_path, &schema)?;

    let total = loaded.records.len() + loaded.rejects.len();
    if total > 0 && loaded.rejects.len() * 2 > total {
        eprintln!(
            "warning: {} of {} records rejected",
            loaded.rejects.len(),
            total
        );
    }
    for reject in &loaded.rejects {
        eprintln!("reject line {}: {}", reject.line, reject.reason);
    }

    let report = if loaded.records.is_empty() {
        eprintln!("warning: no valid responses; writing an empty summary");
        sear_core::survey::AggregateReport { questions: vec![], trust_shift: None }
    } else {
        build_report(&loaded.records, &schema)
    };
    export_summary(&report, out_path, format).map_err(|e| CliError::runtime(e.to_string()))?;

    let mut headline = Vec::new();
    for stats in &report.questions {
        let (Some(mean), Some(top_two)) = (&stats.mean, &stats.top_two_fraction) else { continue };
        headline.push(format!(
            "{}: mean={} topTwo={}%",
            stats.question_id,
            mean.display_2dp(),
            top_two.display_percent()
        ));
    }
    if let Some(shift) = &report.trust_shift {
        if let Some(fraction) = &shift.fraction_at_least4_after {
            headline.push(format!("trustAfter(>=4)={}%", fraction.display_percent()));
        }
    }
    headline.push(format!("summary written to {}", out_path.display()));
    Ok(headline.join("\n"))
}

// ---------------------------------------------------------------------------
// anonymize
// ---------------------------------------------------------------------------

/// Dataset kinds the anonymize verb accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Session,
    Corpus,
    Responses,
}

/// Pseudonymize a dataset file; returns the mapping digest line.
pub fn cmd_anonymize(
    input: &Path,
    output: &Path,
    kind: DatasetKind,
    key_env: &str,
    config: &AppConfig,
) -> Result<String, CliError> {
    let key = std::env::var(key_env)
        .map_err(|_| CliError::input(format!("environment variable '{key_env}' is not set")))?;
    let key = key.as_bytes();

    let digest = match kind {
        DatasetKind::Session => {
            let session = load_session(input)?;
            if !session.line_errors.is_empty() {
                return Err(DatasetError::Lines(session.line_errors.clone()).into());
            }
            let (anonymized, _, digest) =
                anonymize_session(&session, key, &config.payload_denylist)
                    .map_err(|e| CliError::input(e.to_string()))?;
            write_session(output, &anonymized).map_err(|e| CliError::runtime(e.to_string()))?;
            digest
        }
        DatasetKind::Corpus => {
            let corpus = load_corpus(input)?;
            let (anonymized, _, digest) =
                anonymize_corpus(&corpus, key).map_err(|e| CliError::input(e.to_string()))?;
            write_ndjson(output, &anonymized).map_err(|e| CliError::runtime(e.to_string()))?;
            digest
        }
        DatasetKind::Responses => {
            // Load without schema validation: anonymization must not depend
            // on the questionnaire layout.
            let text = std::fs::read_to_string(input)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", input.display())))?;
            let mut records = Vec::new();
            let mut errors: Vec<LineError> = Vec::new();
            for (index, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<sear_core::model::QuestionnaireResponse>(line) {
                    Ok(record) => records.push(record),
                    Err(e) => errors.push(LineError { line: index + 1, message: e.to_string() }),
                }
            }
            if !errors.is_empty() {
                return Err(DatasetError::Lines(errors).into());
            }
            let (anonymized, _, digest) =
                anonymize_responses(&records, key).map_err(|e| CliError::input(e.to_string()))?;
            write_ndjson(output, &anonymized).map_err(|e| CliError::runtime(e.to_string()))?;
            digest
        }
    };
    Ok(format!("mappingDigest={digest}"))
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

/// Serve the pipeline over stdin/stdout.
pub fn cmd_serve(
    roles_dir: &Path,
    templates_path: Option<&Path>,
    backend_kind: BackendKind,
    transcript_path: Option<PathBuf>,
    config: &AppConfig,
) -> Result<(), CliError> {
    let (roles, store) = load_roles_dir(roles_dir)?;
    let templates = load_templates(templates_path)?;
    let backend = make_backend(backend_kind, config)?;
    let embedder = MockEmbedder { dimension: store.dimension.max(1) };
    let context = ServeContext {
        roles,
        store,
        templates,
        embedder: &embedder,
        backend: backend.as_ref(),
        threshold: config.role_match_threshold,
        policy: config.loop_policy(),
        lexicon: config.receptiveness_lexicon.clone(),
        agent_config: config.agent_config(),
        transcript_path,
    };
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    run_serve(stdin.lock(), stdout.lock(), &context)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repl_target_reads_lines_and_reports_eof() {
        let input = b"sounds good\n".to_vec();
        let mut output = Vec::new();
        let mut target = ReplTarget::new(std::io::Cursor::new(input), &mut output);
        assert_eq!(target.respond("hello").unwrap(), "sounds good");
        assert!(matches!(target.respond("again"), Err(InteractionError::ChannelClosed)));
        let printed = String::from_utf8(output).unwrap();
        assert!(printed.contains("Agent: hello"));
        assert!(printed.contains("You: "));
    }
}
