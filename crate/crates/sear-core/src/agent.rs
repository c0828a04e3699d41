//! Stage 3: strategy selection and the staged reasoning-interaction cycle.
//!
//! [`check_se_strategies`] scores every template against the profile and
//! picks the winner. [`ConversationEngine`] then walks the template's stages:
//! generate an utterance, capture the target's reply, append both to history,
//! and adapt — receptive replies boost topic weights that promote matching
//! facts in later prompts, resistant replies spend the stage's retry budget,
//! and abort tokens end the conversation on the spot. Stages never regress.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, DialogueBackend, InteractionError, TargetInterface};
use crate::model::{
    Author, ConversationOutcome, ConversationState, FactCategory, Predicate, PredicateKind,
    SocialProfile, StageSpec, StrategyTemplate, Utterance,
};
use crate::text::{contains_phrase, count_phrase, normalize_tokens};

/// Placeholder filled in for empty history or missing facts.
pub const EMPTY_MARKER: &str = "<none>";

/// Errors from stage-3 operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("template list is empty")]
    NoTemplates,
    #[error("template has no stages")]
    NoStages,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
}

// ---------------------------------------------------------------------------
// Strategy selection
// ---------------------------------------------------------------------------

/// One predicate evaluated against a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PredicateCheck {
    pub predicate: Predicate,
    pub satisfied: bool,
}

/// Confidence score of one template against a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyScore {
    pub template_id: String,
    pub confidence: f64,
    pub per_predicate: Vec<PredicateCheck>,
}

fn predicate_satisfied(predicate: &Predicate, profile: &SocialProfile) -> bool {
    match predicate.kind {
        PredicateKind::TraitEquals => {
            let Some((key, value)) = predicate.argument.split_once('=') else { return false };
            profile.core_identity.get(key.trim()).map(String::as_str) == Some(value.trim())
        }
        PredicateKind::HasFactCategory => {
            let Some(category) = FactCategory::parse(predicate.argument.trim()) else {
                return false;
            };
            profile.ranked_facts.iter().any(|r| r.fact.category == category)
        }
        PredicateKind::FactKeyword => profile
            .ranked_facts
            .iter()
            .any(|r| contains_phrase(&r.fact.text, &predicate.argument)),
    }
}

/// Score every template and select the best.
///
/// Confidence is normalized weighted predicate satisfaction, Σ(wᵢ·satᵢ)/Σwᵢ,
/// zero for empty requirements. Ties go to higher priority, then to the
/// lexicographically smaller templateId.
pub fn check_se_strategies(
    templates: &[StrategyTemplate],
    profile: &SocialProfile,
) -> Result<(StrategyTemplate, Vec<StrategyScore>), AgentError> {
    if templates.is_empty() {
        return Err(AgentError::NoTemplates);
    }

    let scores: Vec<StrategyScore> = templates
        .iter()
        .map(|template| {
            let per_predicate: Vec<PredicateCheck> = template
                .requirements
                .iter()
                .map(|predicate| PredicateCheck {
                    predicate: predicate.clone(),
                    satisfied: predicate_satisfied(predicate, profile),
                })
                .collect();
            let total_weight: f64 = template.requirements.iter().map(|p| p.weight).sum();
            let confidence = if total_weight > 0.0 {
                per_predicate
                    .iter()
                    .filter(|c| c.satisfied)
                    .map(|c| c.predicate.weight)
                    .sum::<f64>()
                    / total_weight
            } else {
                0.0
            };
            StrategyScore { template_id: template.template_id.clone(), confidence, per_predicate }
        })
        .collect();

    let mut best = 0usize;
    for i in 1..templates.len() {
        let (cur, inc) = (&scores[best], &scores[i]);
        let better = inc.confidence > cur.confidence
            || (inc.confidence == cur.confidence
                && (templates[i].priority > templates[best].priority
                    || (templates[i].priority == templates[best].priority
                        && inc.template_id < cur.template_id)));
        if better {
            best = i;
        }
    }
    Ok((templates[best].clone(), scores))
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

/// Loop knobs shared by the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentConfig {
    /// How many trailing utterances {HISTORY} includes.
    pub history_window: usize,
    /// max_tokens on generated chat requests.
    pub max_tokens: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { history_window: 6, max_tokens: 256 }
    }
}

/// Retry and abort policy for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries_override: Option<u32>,
    pub abort_tokens: Vec<String>,
}

impl Default for LoopPolicy {
    fn default() -> Self {
        LoopPolicy {
            max_retries_override: None,
            abort_tokens: alloc::vec!["leave me alone".to_string(), "stop".to_string()],
        }
    }
}

/// Word lists for receptiveness scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReceptivenessLexicon {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for ReceptivenessLexicon {
    fn default() -> Self {
        let positive = ["love", "great", "yes", "sure", "awesome", "definitely", "happy", "fun",
            "cool", "nice"];
        let negative = ["no", "stop", "busy", "never", "boring", "annoying", "whatever"];
        ReceptivenessLexicon {
            positive: positive.iter().map(|s| s.to_string()).collect(),
            negative: negative.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Three-way verdict on a target reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Receptiveness {
    Receptive,
    Neutral,
    Resistant,
}

/// Lexicon scoring: +1 per positive token, −1 per negative token; any stage
/// success cue forces Receptive.
pub fn classify_receptiveness(
    response: &str,
    success_cues: &[String],
    lexicon: &ReceptivenessLexicon,
) -> Receptiveness {
    if success_cues.iter().any(|cue| contains_phrase(response, cue)) {
        return Receptiveness::Receptive;
    }
    let positive: i64 = lexicon.positive.iter().map(|w| count_phrase(response, w) as i64).sum();
    let negative: i64 = lexicon.negative.iter().map(|w| count_phrase(response, w) as i64).sum();
    match (positive - negative).cmp(&0) {
        core::cmp::Ordering::Greater => Receptiveness::Receptive,
        core::cmp::Ordering::Less => Receptiveness::Resistant,
        core::cmp::Ordering::Equal => Receptiveness::Neutral,
    }
}

/// Facts reordered for prompt filling: topic-boosted facts first (boost is
/// the summed weight of topic tokens appearing in the fact), original rank
/// breaking ties.
fn promote_facts<'p>(
    profile: &'p SocialProfile,
    topic_weights: &BTreeMap<String, f64>,
) -> Vec<&'p str> {
    let mut scored: Vec<(f64, usize, &str)> = profile
        .ranked_facts
        .iter()
        .enumerate()
        .map(|(index, ranked)| {
            let tokens: alloc::collections::BTreeSet<String> =
                normalize_tokens(&ranked.fact.text).into_iter().collect();
            let boost: f64 =
                tokens.iter().filter_map(|t| topic_weights.get(t)).sum();
            (boost, index, ranked.fact.text.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, _, text)| text).collect()
}

/// Fill a stage's prompt skeleton: `{FACT_i}` from the promoted fact order,
/// `{HISTORY}` from the trailing window, `{STAGE_OBJECTIVE}` verbatim.
pub fn build_stage_prompt(
    history: &[Utterance],
    topic_weights: &BTreeMap<String, f64>,
    profile: &SocialProfile,
    stage: &StageSpec,
    history_window: usize,
) -> String {
    let facts = promote_facts(profile, topic_weights);
    let mut prompt = stage.prompt_skeleton.clone();

    // Replace {FACT_i} for every i that actually appears in the skeleton.
    let mut i = 0usize;
    loop {
        let placeholder = alloc::format!("{{FACT_{i}}}");
        let seen = prompt.contains(&placeholder);
        if seen {
            let value = facts.get(i).copied().unwrap_or(EMPTY_MARKER);
            prompt = prompt.replace(&placeholder, value);
        }
        i += 1;
        // Indices are small and contiguous in practice; stop at the first
        // gap past a reasonable bound.
        if !seen && i > facts.len() + 8 {
            break;
        }
    }

    let tail = history.iter().rev().take(history_window).collect::<Vec<_>>();
    let history_text = if tail.is_empty() {
        EMPTY_MARKER.to_string()
    } else {
        tail.into_iter()
            .rev()
            .map(|u| {
                let who = match u.author {
                    Author::Agent => "Agent",
                    Author::Target => "Target",
                };
                alloc::format!("{who}: {}", u.text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    prompt = prompt.replace("{HISTORY}", &history_text);
    prompt.replace("{STAGE_OBJECTIVE}", &stage.objective)
}

/// Generate the stage's agent utterance through the backend.
pub fn gen_conv(
    state: &ConversationState,
    profile: &SocialProfile,
    stage: &StageSpec,
    backend: &dyn DialogueBackend,
    config: &AgentConfig,
) -> Result<String, AgentError> {
    let prompt = build_stage_prompt(
        &state.history,
        &state.topic_weights,
        profile,
        stage,
        config.history_window,
    );
    Ok(backend.complete(&crate::backends::ChatRequest::user(prompt, config.max_tokens))?)
}

/// Deliver one utterance to the target and capture the reply.
pub fn se_interact(
    utterance: &str,
    target: &mut dyn TargetInterface,
) -> Result<String, AgentError> {
    Ok(target.respond(utterance)?)
}

// ---------------------------------------------------------------------------
// The reasoning-interaction cycle
// ---------------------------------------------------------------------------

/// Record of one generate/interact attempt, kept for metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageAttempt {
    pub stage_name: String,
    pub prompt: String,
    pub agent_text: String,
    pub target_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receptiveness: Option<Receptiveness>,
    pub aborted: bool,
}

/// Incremental driver of the cycle, usable both for batch simulation and
/// for the serve loop where target replies arrive over the wire.
///
/// The cycle is strictly sequential turn-taking. History always holds
/// complete agent/target pairs: an utterance whose reply never arrives is
/// not appended.
pub struct ConversationEngine {
    template: StrategyTemplate,
    profile: SocialProfile,
    policy: LoopPolicy,
    lexicon: ReceptivenessLexicon,
    config: AgentConfig,
    history: Vec<Utterance>,
    topic_weights: BTreeMap<String, f64>,
    stage_index: usize,
    attempts_in_stage: u32,
    pending: Option<String>,
    last_prompt: Option<String>,
    finished: Option<ConversationOutcome>,
    attempts_log: Vec<StageAttempt>,
}

impl ConversationEngine {
    pub fn new(
        template: StrategyTemplate,
        profile: SocialProfile,
        policy: LoopPolicy,
        lexicon: ReceptivenessLexicon,
        config: AgentConfig,
    ) -> Result<ConversationEngine, AgentError> {
        if template.stages.is_empty() {
            return Err(AgentError::NoStages);
        }
        Ok(ConversationEngine {
            template,
            profile,
            policy,
            lexicon,
            config,
            history: Vec::new(),
            topic_weights: BTreeMap::new(),
            stage_index: 0,
            attempts_in_stage: 0,
            pending: None,
            last_prompt: None,
            finished: None,
            attempts_log: Vec::new(),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    pub fn current_stage(&self) -> Option<&StageSpec> {
        self.template.stages.get(self.stage_index)
    }

    /// Utterances recorded so far; the pending utterance will take this
    /// index once its reply arrives.
    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn attempts_log(&self) -> &[StageAttempt] {
        &self.attempts_log
    }

    /// Replace the profile mid-conversation (dynamic adaptation feeds
    /// updated profiles in while serving).
    pub fn update_profile(&mut self, profile: SocialProfile) {
        self.profile = profile;
    }

    /// Generate the first agent utterance.
    pub fn start(&mut self, backend: &dyn DialogueBackend) -> Result<String, AgentError> {
        self.generate_pending(backend)
    }

    /// Record the target's reply to the pending utterance and produce the
    /// next one, or `None` when the conversation ended.
    pub fn feed(
        &mut self,
        reply: &str,
        backend: &dyn DialogueBackend,
    ) -> Result<Option<String>, AgentError> {
        let Some(agent_text) = self.pending.take() else {
            return Ok(None);
        };
        let stage = self.template.stages[self.stage_index].clone();
        self.push_utterance(Author::Agent, &agent_text, &stage.name);
        self.push_utterance(Author::Target, reply, &stage.name);

        let aborted = self.policy.abort_tokens.iter().any(|t| contains_phrase(reply, t));
        let receptiveness = if aborted {
            None
        } else {
            Some(classify_receptiveness(reply, &stage.success_cues, &self.lexicon))
        };
        self.attempts_log.push(StageAttempt {
            stage_name: stage.name.clone(),
            prompt: self.last_prompt.take().unwrap_or_default(),
            agent_text: agent_text.clone(),
            target_text: reply.to_string(),
            receptiveness,
            aborted,
        });

        if aborted {
            self.finished = Some(ConversationOutcome::AbortedByTarget);
            return Ok(None);
        }

        match receptiveness.expect("set unless aborted") {
            Receptiveness::Receptive => {
                self.boost_topics(reply);
                self.advance_stage();
            }
            Receptiveness::Neutral => self.advance_stage(),
            Receptiveness::Resistant => {
                let budget =
                    self.policy.max_retries_override.unwrap_or(stage.max_retries);
                if self.attempts_in_stage < budget {
                    self.attempts_in_stage += 1;
                } else {
                    self.advance_stage();
                }
            }
        }

        if self.finished.is_some() {
            return Ok(None);
        }
        self.generate_pending(backend).map(Some)
    }

    /// Final state; an unfinished conversation ends Exhausted.
    pub fn into_state(self) -> ConversationState {
        ConversationState {
            history: self.history,
            current_stage_index: self.stage_index,
            topic_weights: self.topic_weights,
            outcome: self.finished.unwrap_or(ConversationOutcome::Exhausted),
        }
    }

    fn generate_pending(&mut self, backend: &dyn DialogueBackend) -> Result<String, AgentError> {
        let stage = &self.template.stages[self.stage_index];
        let prompt = build_stage_prompt(
            &self.history,
            &self.topic_weights,
            &self.profile,
            stage,
            self.config.history_window,
        );
        let utterance = backend
            .complete(&crate::backends::ChatRequest::user(prompt.clone(), self.config.max_tokens))?;
        self.last_prompt = Some(prompt);
        self.pending = Some(utterance.clone());
        Ok(utterance)
    }

    fn push_utterance(&mut self, author: Author, text: &str, stage_name: &str) {
        let turn_index = self.history.len() as u64;
        self.history.push(Utterance {
            author,
            text: text.to_string(),
            stage_name: stage_name.to_string(),
            turn_index,
        });
    }

    fn advance_stage(&mut self) {
        self.stage_index += 1;
        self.attempts_in_stage = 0;
        if self.stage_index >= self.template.stages.len() {
            self.finished = Some(ConversationOutcome::Completed);
        }
    }

    fn boost_topics(&mut self, reply: &str) {
        let reply_tokens: alloc::collections::BTreeSet<String> =
            normalize_tokens(reply).into_iter().collect();
        let mut fact_tokens: alloc::collections::BTreeSet<String> =
            alloc::collections::BTreeSet::new();
        for ranked in &self.profile.ranked_facts {
            fact_tokens.extend(normalize_tokens(&ranked.fact.text));
        }
        for token in reply_tokens.intersection(&fact_tokens) {
            *self.topic_weights.entry(token.clone()).or_insert(0.0) += 1.0;
        }
    }
}

/// Result of a full conversation run: the final state plus the error that
/// exhausted it, if any.
#[derive(Debug)]
pub struct ConversationRun {
    pub state: ConversationState,
    pub attempts: Vec<StageAttempt>,
    pub error: Option<AgentError>,
}

/// Drive the full cycle against a target. Backend or interaction failures
/// end the run with outcome Exhausted and the partial history preserved.
pub fn run_conversation(
    template: &StrategyTemplate,
    profile: &SocialProfile,
    target: &mut dyn TargetInterface,
    backend: &dyn DialogueBackend,
    policy: &LoopPolicy,
    lexicon: &ReceptivenessLexicon,
    config: &AgentConfig,
) -> Result<ConversationRun, AgentError> {
    let mut engine = ConversationEngine::new(
        template.clone(),
        profile.clone(),
        policy.clone(),
        lexicon.clone(),
        config.clone(),
    )?;

    let mut next = match engine.start(backend) {
        Ok(u) => u,
        Err(error) => {
            let attempts = engine.attempts_log().to_vec();
            return Ok(ConversationRun { state: engine.into_state(), attempts, error: Some(error) });
        }
    };
    loop {
        let reply = match target.respond(&next) {
            Ok(r) => r,
            Err(e) => {
                let attempts = engine.attempts_log().to_vec();
                return Ok(ConversationRun {
                    state: engine.into_state(),
                    attempts,
                    error: Some(e.into()),
                });
            }
        };
        match engine.feed(&reply, backend) {
            Ok(Some(u)) => next = u,
            Ok(None) => break,
            Err(error) => {
                let attempts = engine.attempts_log().to_vec();
                return Ok(ConversationRun {
                    state: engine.into_state(),
                    attempts,
                    error: Some(error),
                });
            }
        }
    }
    let attempts = engine.attempts_log().to_vec();
    Ok(ConversationRun { state: engine.into_state(), attempts, error: None })
}

/// The built-in three-stage strategy: opening icebreaker, interest-led
/// engagement, empathetic trust-building.
pub fn default_three_stage_template() -> StrategyTemplate {
    StrategyTemplate {
        template_id: "default-three-stage".to_string(),
        priority: 0,
        requirements: alloc::vec![Predicate {
            kind: PredicateKind::HasFactCategory,
            argument: "Interest".to_string(),
            weight: 1.0,
        }],
        stages: alloc::vec![
            StageSpec {
                name: "Opening".to_string(),
                objective: "Open with a context-aware icebreaker that references something observable."
                    .to_string(),
                prompt_skeleton: "You are chatting in person. Conversation so far:\n{HISTORY}\nObjective: {STAGE_OBJECTIVE}\nMost relevant detail about them: {FACT_0}.\nSay one short, natural opening line.".to_string(),
                success_cues: alloc::vec!["hi".to_string(), "hello".to_string(), "hey".to_string()],
                max_retries: 0,
            },
            StageSpec {
                name: "Engage".to_string(),
                objective: "Expand the conversation into their interests.".to_string(),
                prompt_skeleton: "Conversation so far:\n{HISTORY}\nObjective: {STAGE_OBJECTIVE}\nAsk one engaging question about {FACT_0}.".to_string(),
                success_cues: alloc::vec!["love".to_string(), "play".to_string()],
                max_retries: 1,
            },
            StageSpec {
                name: "Win-Trust".to_string(),
                objective: "Build rapport with an empathetic response and a future-oriented invitation."
                    .to_string(),
                prompt_skeleton: "Conversation so far:\n{HISTORY}\nObjective: {STAGE_OBJECTIVE}\nMention a shared experience connected to {FACT_0} or {FACT_1} and suggest meeting again.".to_string(),
                success_cues: alloc::vec!["sometime".to_string(), "sounds good".to_string()],
                max_retries: 1,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{Persona, PersonaRule, PersonaTarget, ReceptivenessBias, ScriptedBackend};
    use crate::model::{EnvironmentSummary, Fact, RankedFact, SourceModality};
    use alloc::vec;

    fn fact(category: FactCategory, text: &str) -> RankedFact {
        RankedFact {
            fact: Fact {
                category,
                text: text.to_string(),
                salience: 0.5,
                source_modality: SourceModality::Text,
                observed_at_ms: 0,
            },
            rank_score: 0.5,
        }
    }

    fn profile_with_facts(facts: Vec<RankedFact>) -> SocialProfile {
        SocialProfile {
            role_id: "jonny".into(),
            core_identity: BTreeMap::from([("profession".to_string(), "designer".to_string())]),
            ranked_facts: facts,
            environment_context: EnvironmentSummary::default(),
            last_updated_ms: 0,
        }
    }

    fn template(id: &str, priority: i32, requirements: Vec<Predicate>) -> StrategyTemplate {
        StrategyTemplate {
            template_id: id.to_string(),
            priority,
            requirements,
            stages: vec![StageSpec {
                name: "Opening".into(),
                objective: "open".into(),
                prompt_skeleton: "{STAGE_OBJECTIVE}".into(),
                success_cues: vec![],
                max_retries: 0,
            }],
        }
    }

    #[test]
    fn confidence_hand_fixture() {
        let profile = profile_with_facts(vec![fact(FactCategory::Interest, "loves video games")]);
        let t = template(
            "t0",
            0,
            vec![
                Predicate {
                    kind: PredicateKind::FactKeyword,
                    argument: "video games".into(),
                    weight: 2.0,
                },
                Predicate {
                    kind: PredicateKind::TraitEquals,
                    argument: "profession=engineer".into(),
                    weight: 1.0,
                },
            ],
        );
        let (_, scores) = check_se_strategies(&[t], &profile).unwrap();
        assert!((scores[0].confidence - 2.0 / 3.0).abs() <= 1e-9);
        assert_eq!(scores[0].per_predicate[0].satisfied, true);
        assert_eq!(scores[0].per_predicate[1].satisfied, false);
    }

    #[test]
    fn empty_requirements_score_zero() {
        let profile = profile_with_facts(vec![]);
        let (_, scores) = check_se_strategies(&[template("t0", 0, vec![])], &profile).unwrap();
        assert_eq!(scores[0].confidence, 0.0);
    }

    #[test]
    fn ties_break_by_priority_then_id() {
        let profile = profile_with_facts(vec![]);
        let low = template("a-low", 1, vec![]);
        let high = template("z-high", 2, vec![]);
        let (selected, _) = check_se_strategies(&[low.clone(), high.clone()], &profile).unwrap();
        assert_eq!(selected.template_id, "z-high");

        let tie_a = template("alpha", 1, vec![]);
        let tie_b = template("beta", 1, vec![]);
        let (selected, _) = check_se_strategies(&[tie_b, tie_a], &profile).unwrap();
        assert_eq!(selected.template_id, "alpha");
    }

    #[test]
    fn empty_template_list_is_an_error() {
        let profile = profile_with_facts(vec![]);
        assert!(matches!(check_se_strategies(&[], &profile), Err(AgentError::NoTemplates)));
    }

    #[test]
    fn prompt_fills_placeholders() {
        let profile = profile_with_facts(vec![fact(FactCategory::Interest, "video games")]);
        let stage = StageSpec {
            name: "Engage".into(),
            objective: "expand".into(),
            prompt_skeleton: "Ask about {FACT_0} ({STAGE_OBJECTIVE})\n{HISTORY}".into(),
            success_cues: vec![],
            max_retries: 0,
        };
        let prompt = build_stage_prompt(&[], &BTreeMap::new(), &profile, &stage, 6);
        assert!(prompt.contains("Ask about video games"));
        assert!(prompt.contains("(expand)"));
        assert!(prompt.contains(EMPTY_MARKER)); // empty history

        let backend = ScriptedBackend::new();
        let state = ConversationState {
            history: vec![],
            current_stage_index: 0,
            topic_weights: BTreeMap::new(),
            outcome: ConversationOutcome::Completed,
        };
        let reply =
            gen_conv(&state, &profile, &stage, &backend, &AgentConfig::default()).unwrap();
        assert!(reply.starts_with("ACK:Ask about video games"));
    }

    #[test]
    fn missing_fact_placeholder_uses_empty_marker() {
        let profile = profile_with_facts(vec![]);
        let stage = StageSpec {
            name: "Engage".into(),
            objective: "o".into(),
            prompt_skeleton: "{FACT_0}|{FACT_3}".into(),
            success_cues: vec![],
            max_retries: 0,
        };
        let prompt = build_stage_prompt(&[], &BTreeMap::new(), &profile, &stage, 6);
        assert_eq!(prompt, "<none>|<none>");
    }

    #[test]
    fn topic_weights_promote_facts() {
        let profile = profile_with_facts(vec![
            fact(FactCategory::Interest, "enjoys hiking trails"),
            fact(FactCategory::Interest, "plays gaming tournaments"),
            fact(FactCategory::Interest, "collects vinyl records"),
        ]);
        let stage = StageSpec {
            name: "Engage".into(),
            objective: "o".into(),
            prompt_skeleton: "{FACT_0}".into(),
            success_cues: vec![],
            max_retries: 0,
        };
        let no_boost = build_stage_prompt(&[], &BTreeMap::new(), &profile, &stage, 6);
        assert_eq!(no_boost, "enjoys hiking trails");

        let weights = BTreeMap::from([("gaming".to_string(), 1.0)]);
        let boosted = build_stage_prompt(&[], &weights, &profile, &stage, 6);
        assert_eq!(boosted, "plays gaming tournaments");
    }

    #[test]
    fn history_window_keeps_last_six() {
        let profile = profile_with_facts(vec![]);
        let stage = StageSpec {
            name: "s".into(),
            objective: "o".into(),
            prompt_skeleton: "{HISTORY}".into(),
            success_cues: vec![],
            max_retries: 0,
        };
        let history: Vec<Utterance> = (0..8)
            .map(|i| Utterance {
                author: if i % 2 == 0 { Author::Agent } else { Author::Target },
                text: alloc::format!("turn {i}"),
                stage_name: "s".into(),
                turn_index: i,
            })
            .collect();
        let prompt = build_stage_prompt(&history, &BTreeMap::new(), &profile, &stage, 6);
        assert!(!prompt.contains("turn 0"));
        assert!(!prompt.contains("turn 1"));
        assert!(prompt.contains("Agent: turn 2"));
        assert!(prompt.contains("Target: turn 7"));
    }

    #[test]
    fn receptiveness_examples() {
        let lexicon = ReceptivenessLexicon::default();
        assert_eq!(classify_receptiveness("I love that!", &[], &lexicon), Receptiveness::Receptive);
        assert_eq!(classify_receptiveness("No, I'm busy.", &[], &lexicon), Receptiveness::Resistant);
        assert_eq!(classify_receptiveness("Okay.", &[], &lexicon), Receptiveness::Neutral);
        // Success cue forces Receptive even with no lexicon hits.
        let cues = vec!["wukong".to_string()];
        assert_eq!(
            classify_receptiveness("Black Myth Wukong, okay.", &cues, &lexicon),
            Receptiveness::Receptive
        );
    }

    fn neutral_persona() -> Persona {
        Persona {
            persona_id: "neutral".into(),
            rules: vec![],
            default_reply: "Okay.".into(),
            receptiveness_bias: ReceptivenessBias::Neutral,
            termination_triggers: vec![],
        }
    }

    fn run_fixture(
        template: &StrategyTemplate,
        persona: Persona,
    ) -> ConversationRun {
        let profile = profile_with_facts(vec![fact(FactCategory::Interest, "video games")]);
        let mut target = PersonaTarget::new(persona);
        run_conversation(
            template,
            &profile,
            &mut target,
            &ScriptedBackend::new(),
            &LoopPolicy::default(),
            &ReceptivenessLexicon::default(),
            &AgentConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn three_stage_neutral_run_has_six_utterances() {
        let mut template = default_three_stage_template();
        for stage in &mut template.stages {
            stage.max_retries = 0;
        }
        let run = run_fixture(&template, neutral_persona());
        assert!(run.error.is_none());
        assert_eq!(run.state.outcome, ConversationOutcome::Completed);
        assert_eq!(run.state.history.len(), 6);
        for (i, utterance) in run.state.history.iter().enumerate() {
            let expected = if i % 2 == 0 { Author::Agent } else { Author::Target };
            assert_eq!(utterance.author, expected);
            assert_eq!(utterance.turn_index, i as u64);
        }
        let stages: Vec<&str> =
            run.state.history.iter().map(|u| u.stage_name.as_str()).collect();
        assert_eq!(stages, ["Opening", "Opening", "Engage", "Engage", "Win-Trust", "Win-Trust"]);
        assert!(crate::model::Validate::validate(&run.state).is_valid());
    }

    #[test]
    fn abort_token_stops_within_the_stage() {
        let template = default_three_stage_template();
        let mut persona = neutral_persona();
        persona.rules.push(PersonaRule {
            trigger_keywords: vec!["opening".into(), "natural".into(), "ack".into()],
            reply_template: "stop".into(),
        });
        let run = run_fixture(&template, persona);
        assert_eq!(run.state.outcome, ConversationOutcome::AbortedByTarget);
        assert_eq!(run.state.history.len(), 2);
        assert_eq!(run.state.history[1].text, "stop");
    }

    #[test]
    fn resistant_stage_two_with_one_retry_gives_eight_utterances() {
        let mut template = default_three_stage_template();
        for stage in &mut template.stages {
            stage.max_retries = if stage.name == "Engage" { 1 } else { 0 };
            stage.success_cues.clear();
        }
        // Persona: resistant whenever the agent's line mentions the Engage
        // stage question, neutral otherwise.
        let persona = Persona {
            persona_id: "grump".into(),
            rules: vec![PersonaRule {
                trigger_keywords: vec!["engaging question".into()],
                reply_template: "Not really, I'm busy.".into(),
            }],
            default_reply: "Okay.".into(),
            receptiveness_bias: ReceptivenessBias::Neutral,
            termination_triggers: vec![],
        };
        // Scripted backend echoes the prompt head; the Engage prompt begins
        // with "Conversation so far", so script distinct stage markers.
        let backend = ScriptedBackend::new();
        let profile = profile_with_facts(vec![fact(FactCategory::Interest, "video games")]);
        let mut engine = ConversationEngine::new(
            template.clone(),
            profile.clone(),
            LoopPolicy::default(),
            ReceptivenessLexicon::default(),
            AgentConfig::default(),
        )
        .unwrap();
        // Drive manually with stage-aware replies: the persona above keys on
        // prompt text, but the scripted backend's ACK echo is uniform, so we
        // reply by stage instead.
        let mut utterance = engine.start(&backend).unwrap();
        let mut replies = Vec::new();
        loop {
            let stage = engine.current_stage().unwrap().name.clone();
            let reply = if stage == "Engage" { "Not really, I'm busy." } else { "Okay." };
            replies.push(reply);
            utterance = match engine.feed(reply, &backend).unwrap() {
                Some(u) => u,
                None => break,
            };
        }
        let _ = utterance;
        let state = engine.into_state();
        assert_eq!(state.outcome, ConversationOutcome::Completed);
        assert_eq!(state.history.len(), 8, "replies were {replies:?}");
        let engage_turns =
            state.history.iter().filter(|u| u.stage_name == "Engage").count();
        assert_eq!(engage_turns, 4);
    }

    #[test]
    fn receptive_reply_boosts_topic_weights() {
        let mut template = default_three_stage_template();
        template.stages.truncate(1);
        template.stages[0].success_cues.clear();
        let persona = Persona {
            persona_id: "fan".into(),
            rules: vec![],
            default_reply: "yes I love video games".into(),
            receptiveness_bias: ReceptivenessBias::Neutral,
            termination_triggers: vec![],
        };
        let run = run_fixture(&template, persona);
        assert_eq!(run.state.outcome, ConversationOutcome::Completed);
        assert_eq!(run.state.topic_weights.get("video"), Some(&1.0));
        assert_eq!(run.state.topic_weights.get("games"), Some(&1.0));
        // "yes"/"love" are not profile-fact tokens, so they get no weight.
        assert_eq!(run.state.topic_weights.get("love"), None);
    }

    struct FailingBackend;
    impl DialogueBackend for FailingBackend {
        fn complete(&self, _request: &ChatRequest) -> Result<String, BackendError> {
            Err(BackendError::Unavailable("down".into()))
        }
    }
    use crate::backends::ChatRequest;

    #[test]
    fn backend_failure_exhausts_with_partial_history() {
        let template = default_three_stage_template();
        let profile = profile_with_facts(vec![]);
        let mut target = PersonaTarget::new(neutral_persona());
        let run = run_conversation(
            &template,
            &profile,
            &mut target,
            &FailingBackend,
            &LoopPolicy::default(),
            &ReceptivenessLexicon::default(),
            &AgentConfig::default(),
        )
        .unwrap();
        assert_eq!(run.state.outcome, ConversationOutcome::Exhausted);
        assert!(run.state.history.is_empty());
        assert!(run.error.is_some());
    }

    #[test]
    fn determinism_across_runs() {
        let template = default_three_stage_template();
        let a = run_fixture(&template, neutral_persona());
        let b = run_fixture(&template, neutral_persona());
        assert_eq!(
            serde_json::to_string(&a.state).unwrap(),
            serde_json::to_string(&b.state).unwrap()
        );
    }

    #[test]
    fn weight_scaling_leaves_confidence_unchanged() {
        let profile = profile_with_facts(vec![fact(FactCategory::Interest, "loves video games")]);
        let base = template(
            "t",
            0,
            vec![
                Predicate { kind: PredicateKind::FactKeyword, argument: "video".into(), weight: 2.0 },
                Predicate {
                    kind: PredicateKind::TraitEquals,
                    argument: "profession=engineer".into(),
                    weight: 1.0,
                },
            ],
        );
        let mut scaled = base.clone();
        for p in &mut scaled.requirements {
            p.weight *= 7.5;
        }
        let (_, s1) = check_se_strategies(&[base], &profile).unwrap();
        let (_, s2) = check_se_strategies(&[scaled], &profile).unwrap();
        assert!((s1[0].confidence - s2[0].confidence).abs() <= 1e-12);
    }
}
