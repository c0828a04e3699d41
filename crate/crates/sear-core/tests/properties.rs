//! Property suites for the pipeline invariants: spectral sanity, retrieval
//! oracle equivalence, injective role assignment, profile ordering, loop
//! transcript shape, and exact survey arithmetic.

use std::collections::BTreeMap;

use proptest::prelude::*;

use sear_core::agent::{
    check_se_strategies, run_conversation, AgentConfig, LoopPolicy, ReceptivenessLexicon,
};
use sear_core::backends::{InteractionError, ScriptedBackend, TargetInterface};
use sear_core::context::{attribute_speaker, compute_band_energy, AudioFrame, SpeakerCalibration};
use sear_core::model::{
    Author, ConversationOutcome, CueEvent, CueModality, EmbeddingEntry, EnvironmentSummary, Fact,
    FactCategory, FaceTrack, PayloadValue, Predicate, PredicateKind, RoleRecord,
    SocialContextFrame, SocialProfile, SourceModality, StrategyTemplate, Validate,
};
use sear_core::rag::{
    build_role_database, generate_profile, identify_roles, rank_score, Embedder, MockEmbedder,
    RoleDbOptions, VectorStore,
};
use sear_core::survey::{
    aggregate_likert, bottom_three_fraction, top_two_fraction, Fraction, QuestionnaireSchema,
};

// ---------------------------------------------------------------------------
// Band energy
// ---------------------------------------------------------------------------

fn arbitrary_frame() -> impl Strategy<Value = AudioFrame> {
    proptest::collection::vec(-1.0f64..=1.0, 64)
        .prop_map(|samples| AudioFrame::new(samples, 16_000, 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_sanity(frame in arbitrary_frame(), low in 0.0f64..3000.0, width in 1.0f64..4000.0) {
        let high = (low + width).min(8000.0);
        let energy = compute_band_energy(&frame, low, high).unwrap();
        prop_assert!(energy.band_energy <= energy.total_energy + 1e-9);
        prop_assert!((0.0..=1.0).contains(&energy.band_fraction));
    }

    #[test]
    fn amplitude_invariance(frame in arbitrary_frame(), scale in 0.05f64..1.0) {
        let cal = SpeakerCalibration::default();
        let baseline = compute_band_energy(&frame, 0.0, 1000.0).unwrap();
        prop_assume!(baseline.total_energy > 1e-3);

        let scaled_samples: Vec<f64> = frame.samples.iter().map(|s| s * scale).collect();
        let scaled = AudioFrame::new(scaled_samples, frame.sample_rate_hz, frame.start_ms);
        let scaled_energy = compute_band_energy(&scaled, 0.0, 1000.0).unwrap();
        prop_assume!(scaled_energy.total_energy >= cal.silence_floor);

        prop_assert!((scaled_energy.band_fraction - baseline.band_fraction).abs() < 1e-9);
        prop_assert_eq!(
            attribute_speaker(&frame, &cal).unwrap(),
            attribute_speaker(&scaled, &cal).unwrap()
        );
    }

    #[test]
    fn widening_band_is_monotone(frame in arbitrary_frame(), low in 0.0f64..2000.0, width in 10.0f64..2000.0, grow in 1.0f64..1000.0) {
        let high = (low + width).min(8000.0);
        let wider_low = (low - grow).max(0.0);
        let wider_high = (high + grow).min(8000.0);
        let narrow = compute_band_energy(&frame, low, high).unwrap();
        let wide = compute_band_energy(&frame, wider_low, wider_high).unwrap();
        prop_assert!(wide.band_energy + 1e-12 >= narrow.band_energy);
    }
}

// ---------------------------------------------------------------------------
// Retrieval oracle equivalence
// ---------------------------------------------------------------------------

fn unit_vector(dimension: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..=1.0, dimension).prop_filter_map("nonzero", |v| {
        let norm = sear_core::model::l2_norm(&v);
        if norm < 1e-3 {
            return None;
        }
        Some(v.into_iter().map(|x| x / norm).collect())
    })
}

/// Independent scan: repeatedly extract the best remaining entry instead of
/// sorting, with the same stated tie rule (cosine desc, entryId asc).
fn oracle_top_k(store: &VectorStore, query: &[f64], k: usize) -> Vec<(u64, f64)> {
    let mut remaining: Vec<(u64, f64)> = store
        .entries
        .iter()
        .map(|e| {
            let mut cosine = 0.0;
            for (a, b) in e.vector.iter().zip(query) {
                cosine += a * b;
            }
            (e.entry_id, cosine)
        })
        .collect();
    let mut out = Vec::new();
    while out.len() < k && !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (id_b, cos_b) = remaining[best];
            let (id_i, cos_i) = remaining[i];
            if cos_i > cos_b || (cos_i == cos_b && id_i < id_b) {
                best = i;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn query_matches_oracle(
        vectors in proptest::collection::vec(unit_vector(8), 1..40),
        query in unit_vector(8),
        k in 1usize..12,
    ) {
        let mut store = VectorStore::new(8);
        for vector in vectors {
            store
                .insert(EmbeddingEntry {
                    entry_id: 0,
                    vector,
                    role_id: "r".into(),
                    source_ref: "d".into(),
                    modality: SourceModality::Text,
                })
                .unwrap();
        }
        let got = store.query_top_k(&query, k).unwrap();
        let expected = oracle_top_k(&store, &query, k);
        prop_assert_eq!(got.len(), expected.len());
        for ((entry, cosine), (id, oracle_cosine)) in got.iter().zip(&expected) {
            prop_assert_eq!(entry.entry_id, *id);
            prop_assert_eq!(*cosine, *oracle_cosine);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(cosine));
        }
    }

    #[test]
    fn stored_vector_returns_itself_first(vectors in proptest::collection::vec(unit_vector(8), 1..20), pick in 0usize..20) {
        let mut store = VectorStore::new(8);
        for vector in &vectors {
            store
                .insert(EmbeddingEntry {
                    entry_id: 0,
                    vector: vector.clone(),
                    role_id: "r".into(),
                    source_ref: "d".into(),
                    modality: SourceModality::Text,
                })
                .unwrap();
        }
        let index = pick % vectors.len();
        let top = store.query_top_k(&vectors[index], 1).unwrap();
        prop_assert!((top[0].1 - 1.0).abs() <= 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Injective role identification
// ---------------------------------------------------------------------------

fn word_pool() -> &'static [&'static str] {
    &[
        "games", "video", "hiking", "jazz", "tax", "law", "coffee", "tennis", "novels", "cycling",
        "chess", "photography", "cooking", "travel", "gardening", "film",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn role_assignment_is_injective(
        role_words in proptest::collection::vec(proptest::sample::subsequence(word_pool().to_vec(), 1..4), 1..6),
        track_words in proptest::collection::vec(proptest::sample::subsequence(word_pool().to_vec(), 1..4), 1..5),
        threshold in 0.05f64..0.9,
    ) {
        let embedder = MockEmbedder { dimension: 64 };
        let mut store = VectorStore::new(64);
        let mut roles = Vec::new();
        for (i, words) in role_words.iter().enumerate() {
            let role_id = format!("role-{i}");
            let text = words.join(" ");
            store
                .insert(EmbeddingEntry {
                    entry_id: 0,
                    vector: embedder.embed(&text),
                    role_id: role_id.clone(),
                    source_ref: format!("d{i}"),
                    modality: SourceModality::Text,
                })
                .unwrap();
            roles.push(RoleRecord {
                role_id: role_id.clone(),
                pseudonym: role_id,
                traits: BTreeMap::new(),
                facts: vec![],
                embedding_ids: vec![],
            });
        }
        let frame = SocialContextFrame {
            window_start_ms: 0,
            window_end_ms: 1000,
            face_tracks: track_words
                .iter()
                .enumerate()
                .map(|(i, words)| FaceTrack {
                    track_id: format!("t{i}"),
                    expression_scores: BTreeMap::new(),
                    dominant_expression: words.join(" "),
                })
                .collect(),
            transcript: vec![],
            environment: EnvironmentSummary::default(),
            emotion: BTreeMap::new(),
        };

        let assignments = identify_roles(&store, &roles, &frame, &embedder, threshold).unwrap();
        let mut taken = std::collections::BTreeSet::new();
        for assignment in assignments.values() {
            if let Some(role_id) = &assignment.role_id {
                prop_assert!(taken.insert(role_id.clone()), "role {} assigned twice", role_id);
                prop_assert!(assignment.similarity >= threshold);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Profile ranking
// ---------------------------------------------------------------------------

fn fact(category: FactCategory, text: String, salience: f64, observed_at_ms: i64) -> Fact {
    Fact { category, text, salience, source_modality: SourceModality::Text, observed_at_ms }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn actionable_outranks_demographic_at_equal_salience_and_age(
        salience in 0.05f64..1.0,
        age_days in 0i64..400,
        actionable_count in 1usize..5,
        demographic_count in 1usize..5,
    ) {
        let now = 500 * 86_400_000i64;
        let observed = now - age_days * 86_400_000;
        let mut facts = Vec::new();
        for i in 0..actionable_count {
            let category = if i % 2 == 0 { FactCategory::Interest } else { FactCategory::Vulnerability };
            facts.push(fact(category, format!("actionable {i}"), salience, observed));
        }
        for i in 0..demographic_count {
            facts.push(fact(FactCategory::Demographic, format!("demographic {i}"), salience, observed));
        }
        let role = RoleRecord {
            role_id: "p".into(),
            pseudonym: "p".into(),
            traits: BTreeMap::new(),
            facts,
            embedding_ids: vec![],
        };
        let profile = generate_profile(&role, &EnvironmentSummary::default(), now);
        prop_assert!(profile.validate().is_valid());
        let categories: Vec<FactCategory> =
            profile.ranked_facts.iter().map(|r| r.fact.category).collect();
        let first_demographic =
            categories.iter().position(|c| *c == FactCategory::Demographic).unwrap();
        for (i, category) in categories.iter().enumerate() {
            if matches!(category, FactCategory::Interest | FactCategory::Vulnerability) {
                prop_assert!(i < first_demographic);
            }
        }
    }

    #[test]
    fn decay_halves_every_thirty_days(age_days in 0i64..300, salience in 0.05f64..1.0) {
        let now = 400 * 86_400_000i64;
        let newer = fact(FactCategory::Interest, "a".into(), salience, now - age_days * 86_400_000);
        let older = fact(
            FactCategory::Interest,
            "a".into(),
            salience,
            now - (age_days + 30) * 86_400_000,
        );
        let ratio = rank_score(&newer, now) / rank_score(&older, now);
        prop_assert!((ratio - 2.0).abs() <= 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Strategy confidence monotonicity
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Adding a satisfied predicate to a template never drops it below an
    /// unchanged rival it already beat (rival confidence < 1).
    #[test]
    fn satisfied_predicate_never_lowers_ranking(
        own_weights in proptest::collection::vec((0.1f64..5.0, proptest::bool::ANY), 0..4),
        rival_weights in proptest::collection::vec((0.1f64..5.0, proptest::bool::ANY), 1..4),
        extra_weight in 0.1f64..5.0,
    ) {
        prop_assume!(rival_weights.iter().any(|(_, sat)| !sat));
        let profile = SocialProfile {
            role_id: "p".into(),
            core_identity: BTreeMap::from([("profession".to_string(), "engineer".to_string())]),
            ranked_facts: vec![],
            environment_context: EnvironmentSummary::default(),
            last_updated_ms: 0,
        };
        // TraitEquals predicates whose satisfaction we control directly.
        let make = |pairs: &[(f64, bool)]| -> Vec<Predicate> {
            pairs
                .iter()
                .map(|(weight, satisfied)| Predicate {
                    kind: PredicateKind::TraitEquals,
                    argument: if *satisfied {
                        "profession=engineer".to_string()
                    } else {
                        "profession=barista".to_string()
                    },
                    weight: *weight,
                })
                .collect()
        };
        let stage = sear_core::model::StageSpec {
            name: "s".into(),
            objective: "o".into(),
            prompt_skeleton: "x".into(),
            success_cues: vec![],
            max_retries: 0,
        };
        let own = StrategyTemplate {
            template_id: "a-own".into(),
            priority: 1,
            requirements: make(&own_weights),
            stages: vec![stage.clone()],
        };
        let rival = StrategyTemplate {
            template_id: "b-rival".into(),
            priority: 0,
            requirements: make(&rival_weights),
            stages: vec![stage],
        };
        let (selected_before, _) =
            check_se_strategies(&[own.clone(), rival.clone()], &profile).unwrap();
        prop_assume!(selected_before.template_id == "a-own");

        let mut boosted = own;
        boosted.requirements.push(Predicate {
            kind: PredicateKind::TraitEquals,
            argument: "profession=engineer".to_string(),
            weight: extra_weight,
        });
        let (selected_after, _) = check_se_strategies(&[boosted, rival], &profile).unwrap();
        prop_assert_eq!(selected_after.template_id, "a-own");
    }
}

// ---------------------------------------------------------------------------
// Conversation loop shape
// ---------------------------------------------------------------------------

struct QueueTarget {
    replies: Vec<String>,
    next: usize,
}

impl TargetInterface for QueueTarget {
    fn respond(&mut self, _utterance: &str) -> Result<String, InteractionError> {
        let reply = self.replies.get(self.next).cloned().unwrap_or_else(|| "Okay.".to_string());
        self.next += 1;
        Ok(reply)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn transcript_shape_invariants(
        reply_kinds in proptest::collection::vec(0u8..4, 0..12),
        retries in 0u32..3,
    ) {
        let replies: Vec<String> = reply_kinds
            .iter()
            .map(|kind| match kind {
                0 => "Okay.".to_string(),
                1 => "I love that, great!".to_string(),
                2 => "No, never, busy.".to_string(),
                _ => "Please stop.".to_string(),
            })
            .collect();
        let mut template = sear_core::agent::default_three_stage_template();
        for stage in &mut template.stages {
            stage.max_retries = retries;
            stage.success_cues.clear();
        }
        let profile = SocialProfile {
            role_id: "p".into(),
            core_identity: BTreeMap::new(),
            ranked_facts: vec![sear_core::model::RankedFact {
                fact: fact(FactCategory::Interest, "video games".into(), 0.5, 0),
                rank_score: 0.5,
            }],
            environment_context: EnvironmentSummary::default(),
            last_updated_ms: 0,
        };
        let mut target = QueueTarget { replies: replies.clone(), next: 0 };
        let run = run_conversation(
            &template,
            &profile,
            &mut target,
            &ScriptedBackend::new(),
            &LoopPolicy::default(),
            &ReceptivenessLexicon::default(),
            &AgentConfig::default(),
        )
        .unwrap();

        let state = &run.state;
        prop_assert!(state.validate().is_valid());
        prop_assert_eq!(state.history.len() % 2, 0);
        let agent_turns = state.history.iter().filter(|u| u.author == Author::Agent).count();
        prop_assert_eq!(state.history.len(), 2 * agent_turns);
        for utterance in &state.history {
            prop_assert!(!utterance.stage_name.is_empty());
        }
        prop_assert!(state.current_stage_index <= template.stages.len());

        // An abort reply terminates the conversation at that exact pair.
        let abort_position = state
            .history
            .iter()
            .position(|u| u.author == Author::Target && u.text.to_lowercase().contains("stop"));
        if let Some(position) = abort_position {
            prop_assert_eq!(state.outcome, ConversationOutcome::AbortedByTarget);
            prop_assert_eq!(position, state.history.len() - 1);
        } else {
            prop_assert_eq!(state.outcome, ConversationOutcome::Completed);
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization round trips
// ---------------------------------------------------------------------------

fn arbitrary_cue() -> impl Strategy<Value = CueEvent> {
    (
        0i64..10_000,
        proptest::option::of("[a-z]{1,8}"),
        proptest::collection::btree_map(
            "[a-z.]{1,12}",
            prop_oneof![
                (-100.0f64..100.0).prop_map(PayloadValue::Number),
                "[ -~]{0,20}".prop_map(PayloadValue::Text),
            ],
            0..4,
        ),
    )
        .prop_map(|(timestamp_ms, track, payload)| {
            let modality = if track.is_some() { CueModality::Visual } else { CueModality::Audio };
            CueEvent { timestamp_ms, track_id: track, modality, payload }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cue_event_round_trips(event in arbitrary_cue()) {
        let json = serde_json::to_string(&event).unwrap();
        let back: CueEvent = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, event);
    }
}

// ---------------------------------------------------------------------------
// Survey arithmetic
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn top_two_and_bottom_three_sum_to_one(values in proptest::collection::vec(1i64..=5, 1..80)) {
        let schema = QuestionnaireSchema::default();
        let records: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, v)| sear_core::model::QuestionnaireResponse {
                participant_pseudonym: format!("P-{i:04}"),
                section: sear_core::model::SurveySection::SEEffectiveness,
                question_id: "se.sms".to_string(),
                value: sear_core::model::ResponseValue::Likert(*v),
            })
            .collect();
        let top = top_two_fraction(&records, "se.sms", &schema).unwrap().unwrap();
        let bottom = bottom_three_fraction(&records, "se.sms", &schema).unwrap().unwrap();
        prop_assert!(top.plus(&bottom).equals(&Fraction::new(1, 1)));
    }

    #[test]
    fn means_are_bounded_and_monotone_in_fives(values in proptest::collection::vec(1i64..=5, 1..60)) {
        let schema = QuestionnaireSchema::default();
        let make = |vals: &[i64]| -> Vec<sear_core::model::QuestionnaireResponse> {
            vals.iter()
                .enumerate()
                .map(|(i, v)| sear_core::model::QuestionnaireResponse {
                    participant_pseudonym: format!("P-{i:04}"),
                    section: sear_core::model::SurveySection::SEEffectiveness,
                    question_id: "se.sms".to_string(),
                    value: sear_core::model::ResponseValue::Likert(*v),
                })
                .collect()
        };
        let (_, mean) = aggregate_likert(&make(&values), "se.sms", &schema).unwrap();
        let mean = mean.unwrap();
        prop_assert!((1.0..=5.0).contains(&mean.value()));

        let mut extended = values.clone();
        extended.push(5);
        let (_, bigger) = aggregate_likert(&make(&extended), "se.sms", &schema).unwrap();
        prop_assert!(bigger.unwrap().value() + 1e-12 >= mean.value());
    }
}

// ---------------------------------------------------------------------------
// Role database determinism
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rebuild_yields_identical_database(
        people in proptest::collection::vec(("[a-z]{2,6}", proptest::collection::vec(proptest::sample::subsequence(word_pool().to_vec(), 1..5), 1..4)), 1..4),
    ) {
        let mut corpus = Vec::new();
        let mut doc_id = 0usize;
        for (person, fact_words) in &people {
            for words in fact_words {
                corpus.push(sear_core::model::SocialCorpusDoc {
                    doc_id: format!("d{doc_id}"),
                    person_ref: person.clone(),
                    kind: sear_core::model::DocKind::Fact,
                    modality: SourceModality::Text,
                    content: words.join(" "),
                    category: Some(FactCategory::Interest),
                    timestamp: doc_id as i64,
                    source: "microblog".into(),
                });
                doc_id += 1;
            }
        }
        let embedder = MockEmbedder { dimension: 32 };
        let options = RoleDbOptions::default();
        let first = build_role_database(&corpus, &embedder, &options).unwrap();
        let second = build_role_database(&corpus, &embedder, &options).unwrap();
        prop_assert_eq!(&first, &second);
        // Entry ids strictly increase in insertion order.
        for pair in first.1.entries.windows(2) {
            prop_assert!(pair[0].entry_id < pair[1].entry_id);
        }
    }
}
