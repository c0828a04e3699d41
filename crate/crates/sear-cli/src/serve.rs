//! Long-running pipeline process over the v1 wire protocol.
//!
//! Reads wire messages line by line, answers each context frame with a
//! profile update, and, once a conversation is started, treats the frame's
//! partner speech as the target's reply and emits the next agent utterance.
//! Protocol errors are answered with an error message and processing
//! continues; end-of-stream flushes the transcript and exits cleanly.
//! Handling is strict request-response: the turn-taking protocol forbids
//! pipelining within a conversation.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use sear_core::agent::{check_se_strategies, AgentConfig, ConversationEngine, LoopPolicy, ReceptivenessLexicon};
use sear_core::backends::DialogueBackend;
use sear_core::model::{RoleRecord, SocialContextFrame, SocialProfile, Speaker, StrategyTemplate};
use sear_core::rag::{adapt_profile, generate_profile, identify_roles, Embedder, VectorStore};

use crate::wire::{wire_decode, wire_encode, ControlMessage, WireMessage};
use crate::CliError;

/// Everything the serve loop needs.
pub struct ServeContext<'a> {
    pub roles: Vec<RoleRecord>,
    pub store: VectorStore,
    pub templates: Vec<StrategyTemplate>,
    pub embedder: &'a dyn Embedder,
    pub backend: &'a dyn DialogueBackend,
    pub threshold: f64,
    pub policy: LoopPolicy,
    pub lexicon: ReceptivenessLexicon,
    pub agent_config: AgentConfig,
    /// Transcript NDJSON destination, flushed at end of stream.
    pub transcript_path: Option<PathBuf>,
}

struct ServeState {
    profiles: std::collections::BTreeMap<String, SocialProfile>,
    current_role: Option<String>,
    engine: Option<ConversationEngine>,
    transcript: Vec<sear_core::model::Utterance>,
}

/// Drive the serve loop over arbitrary reader/writer pairs (stdin/stdout in
/// production, buffers in tests).
pub fn run_serve(
    reader: impl BufRead,
    mut writer: impl Write,
    context: &ServeContext<'_>,
) -> Result<(), CliError> {
    let mut state = ServeState {
        profiles: std::collections::BTreeMap::new(),
        current_role: None,
        engine: None,
        transcript: Vec::new(),
    };

    let mut emit = |writer: &mut dyn Write, message: &WireMessage| -> Result<(), CliError> {
        writeln!(writer, "{}", wire_encode(message))
            .map_err(|e| CliError::runtime(format!("cannot write wire message: {e}")))
    };

    for line in reader.lines() {
        let line = line.map_err(|e| CliError::runtime(format!("cannot read wire input: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let message = match wire_decode(&line) {
            Ok(message) => message,
            Err(e) => {
                emit(
                    &mut writer,
                    &WireMessage::Control(ControlMessage::with_detail("error", e.to_string())),
                )?;
                continue;
            }
        };
        match message {
            WireMessage::ContextFrame(frame) => {
                handle_frame(&mut state, context, &frame, &mut writer, &mut emit)?;
            }
            WireMessage::Control(control) => match control.kind.as_str() {
                "startConversation" => {
                    start_conversation(&mut state, context, &mut writer, &mut emit)?;
                }
                "endConversation" => {
                    finish_conversation(&mut state, &mut writer, &mut emit)?;
                }
                other => {
                    emit(
                        &mut writer,
                        &WireMessage::Control(ControlMessage::with_detail(
                            "error",
                            format!("unsupported control kind '{other}'"),
                        )),
                    )?;
                }
            },
            // Server-to-client types arriving inbound are protocol misuse.
            WireMessage::ProfileUpdate(_) | WireMessage::TranscriptExport(_) => {
                emit(
                    &mut writer,
                    &WireMessage::Control(ControlMessage::with_detail(
                        "error",
                        "message type is not valid client-to-server",
                    )),
                )?;
            }
        }
    }

    // End of stream: flush any active conversation and the transcript file.
    if state.engine.is_some() {
        finish_conversation(&mut state, &mut writer, &mut emit)?;
    }
    if let Some(path) = &context.transcript_path {
        crate::dataset::write_ndjson(path, &state.transcript)
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    Ok(())
}

fn handle_frame(
    state: &mut ServeState,
    context: &ServeContext<'_>,
    frame: &SocialContextFrame,
    writer: &mut impl Write,
    emit: &mut impl FnMut(&mut dyn Write, &WireMessage) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let now_ms = frame.window_end_ms;
    let assignments =
        identify_roles(&context.store, &context.roles, frame, context.embedder, context.threshold)
            .map_err(|e| CliError::runtime(e.to_string()))?;

    // The best-matching track's role becomes the current subject.
    let best = assignments
        .values()
        .filter_map(|a| a.role_id.as_ref().map(|r| (r.clone(), a.similarity)))
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));

    let Some((role_id, _)) = best else {
        emit(
            writer,
            &WireMessage::Control(ControlMessage::with_detail(
                "error",
                "no role identified for frame",
            )),
        )?;
        return Ok(());
    };

    let profile = match state.profiles.get(&role_id) {
        Some(existing) => adapt_profile(existing, frame, &context.store, context.embedder, now_ms)
            .map_err(|e| CliError::runtime(e.to_string()))?,
        None => {
            let role = context
                .roles
                .iter()
                .find(|r| r.role_id == role_id)
                .expect("assignment references a known role");
            generate_profile(role, &frame.environment, now_ms)
        }
    };
    state.profiles.insert(role_id.clone(), profile.clone());
    state.current_role = Some(role_id);
    emit(writer, &WireMessage::ProfileUpdate(profile.clone()))?;

    // An active conversation consumes the partner's speech as the reply.
    if let Some(engine) = &mut state.engine {
        engine.update_profile(profile);
        let reply: Vec<&str> = frame
            .transcript
            .iter()
            .filter(|s| s.speaker == Speaker::Other)
            .map(|s| s.text.as_str())
            .collect();
        if reply.is_empty() {
            return Ok(());
        }
        let reply = reply.join(" ");
        match engine.feed(&reply, context.backend) {
            Ok(Some(utterance)) => {
                let turn = engine_last_agent_turn(engine, &utterance);
                emit(writer, &WireMessage::TranscriptExport(turn))?;
            }
            Ok(None) => finish_conversation(state, writer, emit)?,
            Err(e) => {
                emit(
                    writer,
                    &WireMessage::Control(ControlMessage::with_detail("error", e.to_string())),
                )?;
                finish_conversation(state, writer, emit)?;
            }
        }
    }
    Ok(())
}

fn engine_last_agent_turn(
    engine: &ConversationEngine,
    utterance: &str,
) -> sear_core::model::Utterance {
    sear_core::model::Utterance {
        author: sear_core::model::Author::Agent,
        text: utterance.to_string(),
        stage_name: engine.current_stage().map(|s| s.name.clone()).unwrap_or_default(),
        turn_index: engine.history_len() as u64,
    }
}

fn start_conversation(
    state: &mut ServeState,
    context: &ServeContext<'_>,
    writer: &mut impl Write,
    emit: &mut impl FnMut(&mut dyn Write, &WireMessage) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if state.engine.is_some() {
        emit(
            writer,
            &WireMessage::Control(ControlMessage::with_detail(
                "error",
                "a conversation is already active",
            )),
        )?;
        return Ok(());
    }
    let Some(role_id) = &state.current_role else {
        emit(
            writer,
            &WireMessage::Control(ControlMessage::with_detail(
                "error",
                "no profile yet; send a context_frame first",
            )),
        )?;
        return Ok(());
    };
    let profile = state.profiles[role_id].clone();
    let (template, _) = check_se_strategies(&context.templates, &profile)
        .map_err(|e| CliError::input(e.to_string()))?;
    let mut engine = ConversationEngine::new(
        template,
        profile,
        context.policy.clone(),
        context.lexicon.clone(),
        context.agent_config.clone(),
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    match engine.start(context.backend) {
        Ok(utterance) => {
            let turn = engine_last_agent_turn(&engine, &utterance);
            state.engine = Some(engine);
            emit(writer, &WireMessage::TranscriptExport(turn))?;
        }
        Err(e) => {
            emit(writer, &WireMessage::Control(ControlMessage::with_detail("error", e.to_string())))?;
        }
    }
    Ok(())
}

fn finish_conversation(
    state: &mut ServeState,
    writer: &mut impl Write,
    emit: &mut impl FnMut(&mut dyn Write, &WireMessage) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let Some(engine) = state.engine.take() else {
        emit(
            writer,
            &WireMessage::Control(ControlMessage::with_detail("error", "no active conversation")),
        )?;
        return Ok(());
    };
    let conversation = engine.into_state();
    state.transcript.extend(conversation.history.iter().cloned());
    emit(
        writer,
        &WireMessage::Control(ControlMessage::with_detail(
            "conversationEnded",
            format!("{:?}", conversation.outcome),
        )),
    )?;
    Ok(())
}
