//! Declarative configuration.
//!
//! One JSON file holds every knob: embedder dimension, role-match threshold,
//! speaker calibration, lexicons, vocabularies, and the optional remote chat
//! endpoint. Every field has a default, so a sparse file overrides only the
//! keys it names, and command-line flags override the file one-for-one.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sear_core::agent::{AgentConfig, LoopPolicy, ReceptivenessLexicon};
use sear_core::context::{ContextConfig, EmotionTable, EnvironmentVocabulary, SpeakerCalibration};
use sear_core::rag::{builtin_trait_vocabulary, RoleDbOptions, DEFAULT_DIMENSION, DEFAULT_ROLE_MATCH_THRESHOLD};

use crate::CliError;

/// Remote chat-completions endpoint settings. The credential is a named
/// environment variable, never a value stored in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key_ref: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: "http://127.0.0.1:8080/v1".to_string(),
            api_key_ref: None,
            model: "gemma-3-12b".to_string(),
            timeout_ms: 10_000,
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

/// The whole application configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AppConfig {
    pub dimension: usize,
    pub role_match_threshold: f64,
    pub speaker_calibration: SpeakerCalibration,
    pub environment_vocabulary: EnvironmentVocabulary,
    pub emotion_table: EmotionTable,
    pub receptiveness_lexicon: ReceptivenessLexicon,
    pub abort_tokens: Vec<String>,
    pub trait_vocabulary: BTreeSet<String>,
    /// Identity-bearing cue payload keys dropped during anonymization.
    pub payload_denylist: Vec<String>,
    pub dedupe_jaccard: f64,
    pub default_salience: f64,
    pub history_window: usize,
    pub max_tokens: u32,
    pub http: Option<HttpBackendConfig>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            dimension: DEFAULT_DIMENSION,
            role_match_threshold: DEFAULT_ROLE_MATCH_THRESHOLD,
            speaker_calibration: SpeakerCalibration::default(),
            environment_vocabulary: EnvironmentVocabulary::builtin(),
            emotion_table: EmotionTable::builtin(),
            receptiveness_lexicon: ReceptivenessLexicon::default(),
            abort_tokens: LoopPolicy::default().abort_tokens,
            trait_vocabulary: builtin_trait_vocabulary(),
            payload_denylist: vec!["face.imageRef".to_string(), "voice.sampleRef".to_string()],
            dedupe_jaccard: 0.9,
            default_salience: 0.5,
            history_window: 6,
            max_tokens: 256,
            http: None,
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<AppConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }

    pub fn role_db_options(&self) -> RoleDbOptions {
        RoleDbOptions {
            trait_vocabulary: self.trait_vocabulary.clone(),
            dedupe_jaccard: self.dedupe_jaccard,
            default_salience: self.default_salience,
        }
    }

    pub fn context_config(&self) -> ContextConfig {
        ContextConfig {
            calibration: self.speaker_calibration,
            environment_vocabulary: self.environment_vocabulary.clone(),
            emotion_table: self.emotion_table.clone(),
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig { history_window: self.history_window, max_tokens: self.max_tokens }
    }

    pub fn loop_policy(&self) -> LoopPolicy {
        LoopPolicy { max_retries_override: None, abort_tokens: self.abort_tokens.clone() }
    }
}
