//! Questionnaire schema and aggregate statistics.
//!
//! All fractions and means are exact rationals; display rounding is half-up
//! (two decimals for means, one decimal for percentages, matching the style
//! of the published aggregates). Aggregation is pure and permutation-
//! invariant over record order; missing answers are excluded per question
//! and reported, never imputed.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{QuestionnaireResponse, ResponseValue, SurveySection};

/// Errors from aggregation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurveyError {
    #[error("question '{question_id}' is not in the schema")]
    UnknownQuestion { question_id: String },
    #[error("question '{question_id}' is not a Likert5 question")]
    NotLikert { question_id: String },
    #[error("schema is missing trust questions '{before}' / '{after}'")]
    MissingTrustQuestions { before: String, after: String },
}

// ---------------------------------------------------------------------------
// Exact fractions
// ---------------------------------------------------------------------------

/// An exact non-negative rational, kept unreduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Fraction {
        debug_assert!(den > 0);
        Fraction { num, den }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn plus(&self, other: &Fraction) -> Fraction {
        Fraction::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    pub fn equals(&self, other: &Fraction) -> bool {
        u128::from(self.num) * u128::from(other.den) == u128::from(other.num) * u128::from(self.den)
    }

    /// Percent with one decimal, rounded half-up: 56/60 → "93.3".
    pub fn display_percent(&self) -> String {
        let per_mille = (u128::from(self.num) * 2000 + u128::from(self.den)) / (2 * u128::from(self.den));
        format!("{}.{}", per_mille / 10, per_mille % 10)
    }

    /// Value with two decimals, rounded half-up: 270/60 → "4.50".
    pub fn display_2dp(&self) -> String {
        let cents = (u128::from(self.num) * 200 + u128::from(self.den)) / (2 * u128::from(self.den));
        format!("{}.{:02}", cents / 100, cents % 100)
    }
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// Answer kind a question accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionKind {
    Likert5,
    YesNo,
    Text,
}

/// One declared question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SurveyQuestion {
    pub question_id: String,
    pub kind: QuestionKind,
    pub prompt: String,
}

/// One declared section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaSection {
    pub section: SurveySection,
    pub questions: Vec<SurveyQuestion>,
}

fn default_trust_before() -> String {
    "se.trust_before".to_string()
}

fn default_trust_after() -> String {
    "se.trust_after".to_string()
}

/// The questionnaire layout. The built-in default covers the four sections
/// of the study survey; a schema file may override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionnaireSchema {
    pub sections: Vec<SchemaSection>,
    #[serde(default = "default_trust_before")]
    pub trust_before_id: String,
    #[serde(default = "default_trust_after")]
    pub trust_after_id: String,
}

impl QuestionnaireSchema {
    pub fn find(&self, question_id: &str) -> Option<(SurveySection, &SurveyQuestion)> {
        for section in &self.sections {
            for question in &section.questions {
                if question.question_id == question_id {
                    return Some((section.section, question));
                }
            }
        }
        None
    }

    pub fn question_ids(&self) -> Vec<&str> {
        self.sections
            .iter()
            .flat_map(|s| s.questions.iter().map(|q| q.question_id.as_str()))
            .collect()
    }
}

impl Default for QuestionnaireSchema {
    fn default() -> Self {
        fn likert(id: &str, prompt: &str) -> SurveyQuestion {
            SurveyQuestion {
                question_id: id.to_string(),
                kind: QuestionKind::Likert5,
                prompt: prompt.to_string(),
            }
        }
        let baseline = SchemaSection {
            section: SurveySection::BaselineComparison,
            questions: alloc::vec![
                likert("baseline.bare", "How is your experience with bare conversation?"),
                likert(
                    "baseline.ar_llm",
                    "How is your experience with AR + Multimodal LLM conversation?"
                ),
                likert("baseline.sear", "How is your experience with SEAR?"),
            ],
        };
        let subjective = SchemaSection {
            section: SurveySection::SubjectiveExperience,
            questions: alloc::vec![
                likert(
                    "subjective.relevance",
                    "How well does the conversation match your social information?"
                ),
                likert(
                    "subjective.appropriateness",
                    "How proper are the questions in the conversation?"
                ),
                likert("subjective.naturalness", "How natural is the opening part?"),
                likert("subjective.pacing", "How does the pace of the conversation feel?"),
                likert(
                    "subjective.sincerity",
                    "How sincere do you feel about the person's interest in the conversation?"
                ),
                likert(
                    "subjective.emotional_progression",
                    "How did your feeling change as the conversation proceed?"
                ),
                likert("subjective.ar_comfort", "With AR, do you feel more relaxed?"),
                likert(
                    "subjective.bare_willingness",
                    "Without AR, will you take-up this conversation?"
                ),
                likert(
                    "subjective.future_intent",
                    "Will you have conversation with this person in the future?"
                ),
                likert(
                    "subjective.depth",
                    "Do you think SEAR have added depth to the conversation?"
                ),
                likert("subjective.acceptance", "Will you interact with SEAR in the future?"),
            ],
        };
        let effectiveness = SchemaSection {
            section: SurveySection::SEEffectiveness,
            questions: alloc::vec![
                likert(
                    "se.photo_link",
                    "Will you click and open shared photo links from the person?"
                ),
                likert(
                    "se.social_app",
                    "Will you add the person as friend on your social mobile apps (such as wechat)?"
                ),
                likert("se.sms", "Will you click and open SMS from the person?"),
                likert("se.phone_call", "Will you pick up phone call from the person?"),
                likert(
                    "se.trust_before",
                    "How much do you trust the person before you have the conversation?"
                ),
                // The survey prints the same wording for both trust
                // questions; the id carries the before/after distinction.
                likert(
                    "se.trust_after",
                    "How much do you trust the person before you have the conversation?"
                ),
            ],
        };
        let open = SchemaSection {
            section: SurveySection::OpenText,
            questions: alloc::vec![SurveyQuestion {
                question_id: "open.feedback".to_string(),
                kind: QuestionKind::Text,
                prompt: "Share any thoughts about the interaction experience.".to_string(),
            }],
        };
        QuestionnaireSchema {
            sections: alloc::vec![baseline, subjective, effectiveness, open],
            trust_before_id: default_trust_before(),
            trust_after_id: default_trust_after(),
        }
    }
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Statistics for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionStats {
    pub question_id: String,
    pub kind: QuestionKind,
    pub respondents: u64,
    /// Likert: keys "1".."5"; YesNo: keys "yes"/"no"; Text: empty.
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_two_fraction: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yes_fraction: Option<Fraction>,
}

/// Before/after trust distributions over respondents who answered both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustShift {
    pub before_dist: BTreeMap<String, u64>,
    pub after_dist: BTreeMap<String, u64>,
    pub fraction_at_least4_after: Option<Fraction>,
    pub excluded_respondents: u64,
}

/// The full aggregate report, mirrored by the JSON export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateReport {
    pub questions: Vec<QuestionStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trust_shift: Option<TrustShift>,
}

fn empty_likert_counts() -> BTreeMap<String, u64> {
    (1..=5).map(|v| (v.to_string(), 0)).collect()
}

fn likert_answers<'r>(
    records: &'r [QuestionnaireResponse],
    question_id: &str,
) -> impl Iterator<Item = i64> + 'r {
    let question_id = question_id.to_string();
    records.iter().filter_map(move |r| match (&r.question_id, &r.value) {
        (id, ResponseValue::Likert(v)) if *id == question_id && (1..=5).contains(v) => Some(*v),
        _ => None,
    })
}

/// Exact Likert counts and mean. Zero respondents yield an undefined mean.
pub fn aggregate_likert(
    records: &[QuestionnaireResponse],
    question_id: &str,
    schema: &QuestionnaireSchema,
) -> Result<(BTreeMap<String, u64>, Option<Fraction>), SurveyError> {
    require_likert(schema, question_id)?;
    let mut counts = empty_likert_counts();
    let mut total = 0u64;
    let mut weighted = 0u64;
    for value in likert_answers(records, question_id) {
        *counts.get_mut(&value.to_string()).expect("1..=5") += 1;
        total += 1;
        weighted += value as u64;
    }
    let mean = if total == 0 { None } else { Some(Fraction::new(weighted, total)) };
    Ok((counts, mean))
}

/// (n₅ + n₄) / n, the top-two-box fraction. `None` with zero respondents.
pub fn top_two_fraction(
    records: &[QuestionnaireResponse],
    question_id: &str,
    schema: &QuestionnaireSchema,
) -> Result<Option<Fraction>, SurveyError> {
    require_likert(schema, question_id)?;
    let mut total = 0u64;
    let mut top_two = 0u64;
    for value in likert_answers(records, question_id) {
        total += 1;
        if value >= 4 {
            top_two += 1;
        }
    }
    Ok(if total == 0 { None } else { Some(Fraction::new(top_two, total)) })
}

/// Complement of the top-two-box fraction.
pub fn bottom_three_fraction(
    records: &[QuestionnaireResponse],
    question_id: &str,
    schema: &QuestionnaireSchema,
) -> Result<Option<Fraction>, SurveyError> {
    require_likert(schema, question_id)?;
    let mut total = 0u64;
    let mut bottom = 0u64;
    for value in likert_answers(records, question_id) {
        total += 1;
        if value < 4 {
            bottom += 1;
        }
    }
    Ok(if total == 0 { None } else { Some(Fraction::new(bottom, total)) })
}

fn require_likert(schema: &QuestionnaireSchema, question_id: &str) -> Result<(), SurveyError> {
    match schema.find(question_id) {
        None => Err(SurveyError::UnknownQuestion { question_id: question_id.to_string() }),
        Some((_, q)) if q.kind != QuestionKind::Likert5 => {
            Err(SurveyError::NotLikert { question_id: question_id.to_string() })
        }
        Some(_) => Ok(()),
    }
}

/// Trust-before vs trust-after distributions. Respondents missing either
/// answer are excluded and counted; the last answer per respondent wins.
pub fn trust_shift(
    records: &[QuestionnaireResponse],
    schema: &QuestionnaireSchema,
) -> Result<TrustShift, SurveyError> {
    let before_id = &schema.trust_before_id;
    let after_id = &schema.trust_after_id;
    if schema.find(before_id).is_none() || schema.find(after_id).is_none() {
        return Err(SurveyError::MissingTrustQuestions {
            before: before_id.clone(),
            after: after_id.clone(),
        });
    }

    let mut per_participant: BTreeMap<&str, (Option<i64>, Option<i64>)> = BTreeMap::new();
    for record in records {
        let ResponseValue::Likert(value) = record.value else { continue };
        if !(1..=5).contains(&value) {
            continue;
        }
        let slot = per_participant.entry(record.participant_pseudonym.as_str()).or_default();
        if record.question_id == *before_id {
            slot.0 = Some(value);
        } else if record.question_id == *after_id {
            slot.1 = Some(value);
        }
    }

    let mut before_dist = empty_likert_counts();
    let mut after_dist = empty_likert_counts();
    let mut included = 0u64;
    let mut excluded = 0u64;
    let mut at_least4_after = 0u64;
    for (_, (before, after)) in per_participant {
        match (before, after) {
            (Some(b), Some(a)) => {
                *before_dist.get_mut(&b.to_string()).expect("1..=5") += 1;
                *after_dist.get_mut(&a.to_string()).expect("1..=5") += 1;
                included += 1;
                if a >= 4 {
                    at_least4_after += 1;
                }
            }
            (None, None) => {}
            _ => excluded += 1,
        }
    }

    Ok(TrustShift {
        before_dist,
        after_dist,
        fraction_at_least4_after: if included == 0 {
            None
        } else {
            Some(Fraction::new(at_least4_after, included))
        },
        excluded_respondents: excluded,
    })
}

/// Aggregate every schema question, plus the trust shift when the schema
/// declares both trust questions.
pub fn build_report(
    records: &[QuestionnaireResponse],
    schema: &QuestionnaireSchema,
) -> AggregateReport {
    let mut questions = Vec::new();
    for section in &schema.sections {
        for question in &section.questions {
            let qid = &question.question_id;
            let stats = match question.kind {
                QuestionKind::Likert5 => {
                    let (counts, mean) =
                        aggregate_likert(records, qid, schema).expect("schema question");
                    let respondents = counts.values().sum();
                    let top_two =
                        top_two_fraction(records, qid, schema).expect("schema question");
                    QuestionStats {
                        question_id: qid.clone(),
                        kind: question.kind,
                        respondents,
                        counts,
                        mean,
                        top_two_fraction: top_two,
                        yes_fraction: None,
                    }
                }
                QuestionKind::YesNo => {
                    let mut counts =
                        BTreeMap::from([("no".to_string(), 0u64), ("yes".to_string(), 0u64)]);
                    for record in records.iter().filter(|r| r.question_id == *qid) {
                        if let ResponseValue::YesNo(answer) = record.value {
                            let key = if answer { "yes" } else { "no" };
                            *counts.get_mut(key).expect("fixed keys") += 1;
                        }
                    }
                    let respondents: u64 = counts.values().sum();
                    let yes_fraction = if respondents == 0 {
                        None
                    } else {
                        Some(Fraction::new(counts["yes"], respondents))
                    };
                    QuestionStats {
                        question_id: qid.clone(),
                        kind: question.kind,
                        respondents,
                        counts,
                        mean: None,
                        top_two_fraction: None,
                        yes_fraction,
                    }
                }
                QuestionKind::Text => {
                    let respondents = records
                        .iter()
                        .filter(|r| {
                            r.question_id == *qid && matches!(r.value, ResponseValue::Text(_))
                        })
                        .count() as u64;
                    QuestionStats {
                        question_id: qid.clone(),
                        kind: question.kind,
                        respondents,
                        counts: BTreeMap::new(),
                        mean: None,
                        top_two_fraction: None,
                        yes_fraction: None,
                    }
                }
            };
            questions.push(stats);
        }
    }

    let trust_shift = trust_shift(records, schema).ok();
    AggregateReport { questions, trust_shift }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Render the report as CSV, one row per (questionId, statistic). Output is
/// byte-deterministic for a given report.
pub fn render_csv(report: &AggregateReport) -> String {
    let mut out = String::from("questionId,statistic,value\n");
    let mut row = |question: &str, statistic: &str, value: &str| {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(question),
            csv_field(statistic),
            csv_field(value)
        ));
    };
    for stats in &report.questions {
        for (key, count) in &stats.counts {
            row(&stats.question_id, &format!("count_{key}"), &count.to_string());
        }
        row(&stats.question_id, "respondents", &stats.respondents.to_string());
        if let Some(mean) = &stats.mean {
            row(&stats.question_id, "mean", &mean.display_2dp());
        }
        if let Some(fraction) = &stats.top_two_fraction {
            row(&stats.question_id, "topTwoPercent", &fraction.display_percent());
        }
        if let Some(fraction) = &stats.yes_fraction {
            row(&stats.question_id, "yesPercent", &fraction.display_percent());
        }
    }
    if let Some(shift) = &report.trust_shift {
        for (key, count) in &shift.before_dist {
            row("trustShift", &format!("before_{key}"), &count.to_string());
        }
        for (key, count) in &shift.after_dist {
            row("trustShift", &format!("after_{key}"), &count.to_string());
        }
        if let Some(fraction) = &shift.fraction_at_least4_after {
            row("trustShift", "atLeast4AfterPercent", &fraction.display_percent());
        }
        row("trustShift", "excludedRespondents", &shift.excluded_respondents.to_string());
    }
    out
}

/// Render the report as pretty JSON mirroring [`AggregateReport`].
pub fn render_json(report: &AggregateReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn likert(participant: &str, question_id: &str, value: i64) -> QuestionnaireResponse {
        QuestionnaireResponse {
            participant_pseudonym: participant.to_string(),
            section: SurveySection::SEEffectiveness,
            question_id: question_id.to_string(),
            value: ResponseValue::Likert(value),
        }
    }

    /// `spec` lists (value, how many participants give it), spread over
    /// sequential pseudonyms starting at `offset`.
    fn batch(question_id: &str, spec: &[(i64, u64)], offset: usize) -> Vec<QuestionnaireResponse> {
        let mut out = Vec::new();
        let mut participant = offset;
        for (value, count) in spec {
            for _ in 0..*count {
                out.push(likert(&format!("P-{participant:04}"), question_id, *value));
                participant += 1;
            }
        }
        out
    }

    #[test]
    fn mean_hand_fixture() {
        let schema = QuestionnaireSchema::default();
        let records = batch("se.photo_link", &[(5, 36), (4, 18), (3, 6)], 0);
        let (counts, mean) = aggregate_likert(&records, "se.photo_link", &schema).unwrap();
        assert_eq!(counts["5"], 36);
        assert_eq!(counts["4"], 18);
        assert_eq!(counts["3"], 6);
        let mean = mean.unwrap();
        assert!(mean.equals(&Fraction::new(270, 60)));
        assert_eq!(mean.display_2dp(), "4.50");
    }

    #[test]
    fn constant_and_single_record_means() {
        let schema = QuestionnaireSchema::default();
        let all_fives = batch("se.sms", &[(5, 60)], 0);
        let (_, mean) = aggregate_likert(&all_fives, "se.sms", &schema).unwrap();
        assert_eq!(mean.unwrap().display_2dp(), "5.00");

        let single = batch("se.sms", &[(3, 1)], 0);
        let (counts, mean) = aggregate_likert(&single, "se.sms", &schema).unwrap();
        assert_eq!(counts["3"], 1);
        assert_eq!(mean.unwrap().display_2dp(), "3.00");
    }

    #[test]
    fn zero_respondents_mean_is_undefined() {
        let schema = QuestionnaireSchema::default();
        let (_, mean) = aggregate_likert(&[], "se.sms", &schema).unwrap();
        assert!(mean.is_none());
        assert!(top_two_fraction(&[], "se.sms", &schema).unwrap().is_none());
    }

    #[test]
    fn published_top_two_fractions() {
        let schema = QuestionnaireSchema::default();

        let photo = batch("se.photo_link", &[(5, 24), (4, 32), (3, 2), (2, 2)], 0);
        let fraction = top_two_fraction(&photo, "se.photo_link", &schema).unwrap().unwrap();
        assert!(fraction.equals(&Fraction::new(56, 60)));
        assert_eq!(fraction.display_percent(), "93.3");

        let sms = batch("se.sms", &[(5, 27), (4, 28), (3, 5)], 0);
        let fraction = top_two_fraction(&sms, "se.sms", &schema).unwrap().unwrap();
        assert!(fraction.equals(&Fraction::new(55, 60)));
        assert_eq!(fraction.display_percent(), "91.7");

        let none = batch("se.phone_call", &[(3, 10), (2, 5)], 0);
        let fraction = top_two_fraction(&none, "se.phone_call", &schema).unwrap().unwrap();
        assert_eq!(fraction.display_percent(), "0.0");
    }

    #[test]
    fn top_two_plus_bottom_three_is_exactly_one() {
        let schema = QuestionnaireSchema::default();
        let records = batch("se.sms", &[(5, 7), (4, 11), (3, 13), (1, 2)], 0);
        let top = top_two_fraction(&records, "se.sms", &schema).unwrap().unwrap();
        let bottom = bottom_three_fraction(&records, "se.sms", &schema).unwrap().unwrap();
        assert!(top.plus(&bottom).equals(&Fraction::new(1, 1)));
    }

    fn trust_records(after_spec: &[(i64, u64)], before_spec: &[(i64, u64)]) -> Vec<QuestionnaireResponse> {
        let mut records = batch("se.trust_after", after_spec, 0);
        records.extend(batch("se.trust_before", before_spec, 0));
        records
    }

    #[test]
    fn trust_shift_published_fixture() {
        let schema = QuestionnaireSchema::default();
        // After: 25 fives, 21 fours, 14 lower. Before: 16 fives, rest lower.
        let records = trust_records(
            &[(5, 25), (4, 21), (3, 8), (2, 6)],
            &[(5, 16), (4, 12), (3, 11), (2, 12), (1, 9)],
        );
        let shift = trust_shift(&records, &schema).unwrap();
        assert_eq!(shift.excluded_respondents, 0);
        let fraction = shift.fraction_at_least4_after.unwrap();
        assert!(fraction.equals(&Fraction::new(46, 60)));
        assert_eq!(fraction.display_percent(), "76.7");
        assert_eq!(shift.before_dist["5"], 16);
        assert!(Fraction::new(shift.before_dist["5"], 60).display_percent() == "26.7");
    }

    #[test]
    fn trust_shift_identity_and_exclusions() {
        let schema = QuestionnaireSchema::default();
        let mut records = trust_records(&[(4, 10), (2, 5)], &[(4, 10), (2, 5)]);
        let shift = trust_shift(&records, &schema).unwrap();
        assert_eq!(shift.before_dist, shift.after_dist);

        // One participant answers only trust_before: excluded and counted.
        records.push(likert("P-9999", "se.trust_before", 5));
        let shift = trust_shift(&records, &schema).unwrap();
        assert_eq!(shift.excluded_respondents, 1);
        assert_eq!(shift.before_dist.values().sum::<u64>(), 15);
    }

    #[test]
    fn report_counts_are_permutation_invariant() {
        let schema = QuestionnaireSchema::default();
        let mut records = batch("se.photo_link", &[(5, 3), (4, 2), (1, 1)], 0);
        let forward = build_report(&records, &schema);
        records.reverse();
        let backward = build_report(&records, &schema);
        assert_eq!(forward, backward);
    }

    #[test]
    fn csv_rendering_is_deterministic_and_quoted() {
        let schema = QuestionnaireSchema::default();
        let records = batch("se.photo_link", &[(5, 2)], 0);
        let report = build_report(&records, &schema);
        assert_eq!(render_csv(&report), render_csv(&report));
        assert!(render_csv(&report).starts_with("questionId,statistic,value\n"));
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn json_round_trip_preserves_report() {
        let schema = QuestionnaireSchema::default();
        let records = batch("se.photo_link", &[(5, 24), (4, 32), (3, 4)], 0);
        let report = build_report(&records, &schema);
        let json = render_json(&report);
        let back: AggregateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(render_csv(&back), render_csv(&report));
    }

    #[test]
    fn non_likert_question_is_rejected() {
        let schema = QuestionnaireSchema::default();
        assert!(matches!(
            aggregate_likert(&[], "open.feedback", &schema),
            Err(SurveyError::NotLikert { .. })
        ));
        assert!(matches!(
            aggregate_likert(&[], "nope", &schema),
            Err(SurveyError::UnknownQuestion { .. })
        ));
    }

    #[test]
    fn default_schema_ids_are_unique() {
        let schema = QuestionnaireSchema::default();
        let ids = schema.question_ids();
        let set: alloc::collections::BTreeSet<&str> = ids.iter().copied().collect();
        assert_eq!(ids.len(), set.len());
        assert_eq!(ids.len(), 3 + 11 + 6 + 1);
        assert!(schema.find("se.trust_before").is_some());
        assert!(schema.find("se.trust_after").is_some());
    }
}
