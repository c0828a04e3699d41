//! Pluggable text-generation backends and simulated target personas.
//!
//! The scripted backend and persona responder are pure functions: identical
//! inputs give identical outputs, which is what makes whole conversation
//! runs bit-deterministic. The wire-compatible HTTP backend lives in the
//! companion crate and implements the same [`DialogueBackend`] trait.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::fnv1a64_str;
use crate::model::Utterance;
use crate::text::contains_phrase;

/// Message role on the chat-completions wire contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

/// One chat turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatTurn {
    pub role: ChatRole,
    pub content: String,
}

/// A completion request. Temperature defaults to zero: determinism is worth
/// more than fluency in an acceptance-tested artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatRequest {
    pub turns: Vec<ChatTurn>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Single-user-turn request at temperature 0.
    pub fn user(content: impl Into<String>, max_tokens: u32) -> ChatRequest {
        ChatRequest {
            turns: alloc::vec![ChatTurn { role: ChatRole::User, content: content.into() }],
            temperature: 0.0,
            max_tokens,
        }
    }

    pub fn last_user_content(&self) -> &str {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == ChatRole::User)
            .map(|t| t.content.as_str())
            .unwrap_or("")
    }
}

/// Failures a backend can surface.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("request rejected with status {status}: {message}")]
    Request { status: u16, message: String },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("generation failed: {0}")]
    Generation(String),
}

/// A text-generation backend. Implementations must be safe for concurrent
/// use; one conversation calls it strictly sequentially.
pub trait DialogueBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Deterministic test double: replies come from a prompt-hash script, with
/// an "ACK:"-prefixed echo of the prompt head as fallback.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedBackend {
    pub script: alloc::collections::BTreeMap<u64, String>,
}

impl ScriptedBackend {
    pub fn new() -> ScriptedBackend {
        ScriptedBackend::default()
    }

    /// Script an exact reply for a prompt.
    pub fn with_entry(mut self, prompt: &str, reply: &str) -> ScriptedBackend {
        self.script.insert(fnv1a64_str(prompt), reply.to_string());
        self
    }
}

impl DialogueBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let prompt = request.last_user_content();
        if let Some(reply) = self.script.get(&fnv1a64_str(prompt)) {
            return Ok(reply.clone());
        }
        let head: String = prompt.chars().take(40).collect();
        Ok(alloc::format!("ACK:{head}"))
    }
}

// ---------------------------------------------------------------------------
// Personas
// ---------------------------------------------------------------------------

/// Disposition flavoring a persona's fallback replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceptivenessBias {
    Friendly,
    Neutral,
    Hostile,
}

/// One trigger→reply rule. Rules are ordered and first-match wins; order is
/// part of the persona's identity and is preserved by serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PersonaRule {
    pub trigger_keywords: Vec<String>,
    pub reply_template: String,
}

/// A scripted conversation target standing in for a live participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Persona {
    pub persona_id: String,
    pub rules: Vec<PersonaRule>,
    pub default_reply: String,
    pub receptiveness_bias: ReceptivenessBias,
    pub termination_triggers: Vec<String>,
}

/// The reply a persona emits when a termination trigger fires.
pub const ABORT_PHRASE: &str = "stop";

/// Produce the persona's reply to one utterance.
///
/// Termination triggers dominate; otherwise the first rule whose any
/// trigger keyword appears (case-insensitive, token boundary) fires, and
/// `{UTTERANCE}` in its template expands to the incoming utterance. With no
/// match the default reply gets a bias-dependent prefix.
pub fn persona_respond(
    persona: &Persona,
    utterance: &str,
    _conversation_so_far: &[Utterance],
) -> String {
    if persona.termination_triggers.iter().any(|t| contains_phrase(utterance, t)) {
        return ABORT_PHRASE.to_string();
    }
    for rule in &persona.rules {
        if rule.trigger_keywords.iter().any(|k| contains_phrase(utterance, k)) {
            return rule.reply_template.replace("{UTTERANCE}", utterance);
        }
    }
    match persona.receptiveness_bias {
        ReceptivenessBias::Friendly => alloc::format!("Sure — {}", persona.default_reply),
        ReceptivenessBias::Hostile => alloc::format!("Hmm. {}", persona.default_reply),
        ReceptivenessBias::Neutral => persona.default_reply.clone(),
    }
}

/// Errors delivering an utterance to a target.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InteractionError {
    #[error("target channel closed")]
    ChannelClosed,
    #[error("interaction failed: {0}")]
    Other(String),
}

/// The conversation partner: a simulated persona or an interactive channel.
pub trait TargetInterface {
    fn respond(&mut self, utterance: &str) -> Result<String, InteractionError>;
}

/// [`TargetInterface`] over a persona, recording the exchange so far.
#[derive(Debug, Clone)]
pub struct PersonaTarget {
    pub persona: Persona,
    conversation: Vec<Utterance>,
}

impl PersonaTarget {
    pub fn new(persona: Persona) -> PersonaTarget {
        PersonaTarget { persona, conversation: Vec::new() }
    }
}

impl TargetInterface for PersonaTarget {
    fn respond(&mut self, utterance: &str) -> Result<String, InteractionError> {
        let reply = persona_respond(&self.persona, utterance, &self.conversation);
        self.conversation.push(Utterance {
            author: crate::model::Author::Agent,
            text: utterance.to_string(),
            stage_name: String::new(),
            turn_index: self.conversation.len() as u64,
        });
        self.conversation.push(Utterance {
            author: crate::model::Author::Target,
            text: reply.clone(),
            stage_name: String::new(),
            turn_index: self.conversation.len() as u64,
        });
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn scripted_lookup_and_fallback() {
        let backend = ScriptedBackend::new().with_entry("Ask about video games", "On it.");
        let hit = ChatRequest::user("Ask about video games", 64);
        assert_eq!(backend.complete(&hit).unwrap(), "On it.");

        let miss = ChatRequest::user("A very long unscripted prompt that keeps going on", 64);
        assert_eq!(
            backend.complete(&miss).unwrap(),
            "ACK:A very long unscripted prompt that keeps"
        );

        assert_eq!(backend.complete(&miss).unwrap(), backend.complete(&miss).unwrap());
    }

    fn persona() -> Persona {
        Persona {
            persona_id: "jonny".into(),
            rules: vec![PersonaRule {
                trigger_keywords: vec!["video games".into()],
                reply_template: "I love Black Myth Wukong!".into(),
            }],
            default_reply: "not much to say".into(),
            receptiveness_bias: ReceptivenessBias::Neutral,
            termination_triggers: vec!["your bank account".into()],
        }
    }

    #[test]
    fn rule_match_fires_exact_reply() {
        let reply = persona_respond(&persona(), "Do you play video games?", &[]);
        assert_eq!(reply, "I love Black Myth Wukong!");
    }

    #[test]
    fn fallback_applies_bias_prefix() {
        let mut p = persona();
        p.receptiveness_bias = ReceptivenessBias::Friendly;
        assert_eq!(persona_respond(&p, "Nice weather.", &[]), "Sure — not much to say");

        p.receptiveness_bias = ReceptivenessBias::Hostile;
        assert_eq!(persona_respond(&p, "Nice weather.", &[]), "Hmm. not much to say");

        p.receptiveness_bias = ReceptivenessBias::Neutral;
        assert_eq!(persona_respond(&p, "Nice weather.", &[]), "not much to say");
    }

    #[test]
    fn termination_trigger_dominates() {
        let reply = persona_respond(&persona(), "Tell me your bank account and video games", &[]);
        assert_eq!(reply, ABORT_PHRASE);
    }

    #[test]
    fn first_matching_rule_wins() {
        let mut p = persona();
        p.rules.push(PersonaRule {
            trigger_keywords: vec!["games".into()],
            reply_template: "second rule".into(),
        });
        assert_eq!(persona_respond(&p, "games and video games", &[]), "I love Black Myth Wukong!");
        // Reorder: now the broader rule shadows the specific one.
        p.rules.reverse();
        assert_eq!(persona_respond(&p, "games and video games", &[]), "second rule");
    }

    #[test]
    fn utterance_placeholder_expands() {
        let mut p = persona();
        p.rules[0].reply_template = "You said: {UTTERANCE}".into();
        assert_eq!(
            persona_respond(&p, "video games?", &[]),
            "You said: video games?"
        );
    }

    #[test]
    fn persona_round_trips_with_rule_order() {
        let mut p = persona();
        p.rules.push(PersonaRule {
            trigger_keywords: vec!["b".into()],
            reply_template: "second".into(),
        });
        let json = serde_json::to_string(&p).unwrap();
        let back: Persona = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.rules[0].reply_template, "I love Black Myth Wukong!");
    }
}
