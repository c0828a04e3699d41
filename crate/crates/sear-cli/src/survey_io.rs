//! Questionnaire file IO: validated NDJSON loading and summary export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sear_core::model::{QuestionnaireResponse, ResponseValue, Validate};
use sear_core::survey::{render_csv, render_json, AggregateReport, QuestionKind, QuestionnaireSchema};

use crate::dataset::DatasetError;

/// One rejected response with its line number and reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RejectedResponse {
    pub line: usize,
    pub reason: String,
}

/// Valid records plus the rejects report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedResponses {
    pub records: Vec<QuestionnaireResponse>,
    pub rejects: Vec<RejectedResponse>,
}

/// Load responses.ndjson against a schema. Unknown question ids,
/// out-of-range Likert values, and answers of the wrong kind land in the
/// rejects report; valid records are still returned.
pub fn load_responses(
    path: &Path,
    schema: &QuestionnaireSchema,
) -> Result<LoadedResponses, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let mut out = LoadedResponses::default();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionnaireResponse = match serde_json::from_str(line) {
            Ok(record) => record,
            Err(e) => {
                out.rejects.push(RejectedResponse { line: line_no, reason: e.to_string() });
                continue;
            }
        };
        if let Some(reason) = reject_reason(&record, schema) {
            out.rejects.push(RejectedResponse { line: line_no, reason });
            continue;
        }
        out.records.push(record);
    }
    Ok(out)
}

fn reject_reason(record: &QuestionnaireResponse, schema: &QuestionnaireSchema) -> Option<String> {
    let Some((section, question)) = schema.find(&record.question_id) else {
        return Some(format!("unknown questionId '{}'", record.question_id));
    };
    if record.section != section {
        return Some(format!(
            "questionId '{}' belongs to section {:?}, record says {:?}",
            record.question_id, section, record.section
        ));
    }
    let report = record.validate();
    if let Some(violation) = report.violations.first() {
        return Some(violation.message.clone());
    }
    let kind_matches = matches!(
        (question.kind, &record.value),
        (QuestionKind::Likert5, ResponseValue::Likert(_))
            | (QuestionKind::YesNo, ResponseValue::YesNo(_))
            | (QuestionKind::Text, ResponseValue::Text(_))
    );
    if !kind_matches {
        return Some(format!(
            "question '{}' expects a {:?} answer",
            record.question_id, question.kind
        ));
    }
    None
}

/// Load a questionnaire schema override file.
pub fn load_schema(path: &Path) -> Result<QuestionnaireSchema, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Header(format!("schema: {e}")))
}

/// Export format for summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryFormat {
    Json,
    Csv,
}

/// Write the report in the requested format. Repeated exports of the same
/// report are byte-identical.
pub fn export_summary(
    report: &AggregateReport,
    path: &Path,
    format: SummaryFormat,
) -> Result<(), DatasetError> {
    let rendered = match format {
        SummaryFormat::Json => render_json(report),
        SummaryFormat::Csv => render_csv(report),
    };
    std::fs::write(path, rendered)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sear_core::survey::build_report;

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.ndjson");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn empty_file_loads_empty() {
        let (_dir, path) = write_lines(&[]);
        let loaded = load_responses(&path, &QuestionnaireSchema::default()).unwrap();
        assert!(loaded.records.is_empty());
        assert!(loaded.rejects.is_empty());
    }

    #[test]
    fn out_of_range_likert_is_rejected_with_reason() {
        let (_dir, path) = write_lines(&[
            r#"{"participantPseudonym":"P-0001","section":"SEEffectiveness","questionId":"se.sms","value":6}"#,
            r#"{"participantPseudonym":"P-0001","section":"SEEffectiveness","questionId":"se.sms","value":4}"#,
        ]);
        let loaded = load_responses(&path, &QuestionnaireSchema::default()).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.rejects.len(), 1);
        assert_eq!(loaded.rejects[0].line, 1);
        assert!(loaded.rejects[0].reason.contains("Likert"));
    }

    #[test]
    fn unknown_question_and_kind_mismatch_are_rejected() {
        let (_dir, path) = write_lines(&[
            r#"{"participantPseudonym":"P-0001","section":"SEEffectiveness","questionId":"se.nope","value":4}"#,
            r#"{"participantPseudonym":"P-0001","section":"OpenText","questionId":"open.feedback","value":4}"#,
            r#"{"participantPseudonym":"P-0001","section":"BaselineComparison","questionId":"se.sms","value":4}"#,
        ]);
        let loaded = load_responses(&path, &QuestionnaireSchema::default()).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.rejects.len(), 3);
        assert!(loaded.rejects[0].reason.contains("unknown questionId"));
        assert!(loaded.rejects[1].reason.contains("expects a Text"));
        assert!(loaded.rejects[2].reason.contains("belongs to section"));
    }

    #[test]
    fn sixty_valid_records_load_cleanly() {
        let lines: Vec<String> = (0..60)
            .map(|i| {
                format!(
                    r#"{{"participantPseudonym":"P-{i:04}","section":"SEEffectiveness","questionId":"se.sms","value":5}}"#
                )
            })
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let (_dir, path) = write_lines(&refs);
        let loaded = load_responses(&path, &QuestionnaireSchema::default()).unwrap();
        assert_eq!(loaded.records.len(), 60);
        assert!(loaded.rejects.is_empty());
    }

    #[test]
    fn exports_are_byte_identical_and_cross_format_consistent() {
        let schema = QuestionnaireSchema::default();
        let records: Vec<QuestionnaireResponse> = (0..10)
            .map(|i| QuestionnaireResponse {
                participant_pseudonym: format!("P-{i:04}"),
                section: sear_core::model::SurveySection::SEEffectiveness,
                question_id: "se.photo_link".to_string(),
                value: ResponseValue::Likert(if i < 6 { 5 } else { 3 }),
            })
            .collect();
        let report = build_report(&records, &schema);

        let dir = tempfile::tempdir().unwrap();
        let json_a = dir.path().join("a.json");
        let json_b = dir.path().join("b.json");
        export_summary(&report, &json_a, SummaryFormat::Json).unwrap();
        export_summary(&report, &json_b, SummaryFormat::Json).unwrap();
        assert_eq!(std::fs::read(&json_a).unwrap(), std::fs::read(&json_b).unwrap());

        // json → load → csv equals direct csv.
        let direct_csv = dir.path().join("direct.csv");
        export_summary(&report, &direct_csv, SummaryFormat::Csv).unwrap();
        let reloaded: AggregateReport =
            serde_json::from_str(&std::fs::read_to_string(&json_a).unwrap()).unwrap();
        let via_json = dir.path().join("via.csv");
        export_summary(&reloaded, &via_json, SummaryFormat::Csv).unwrap();
        assert_eq!(std::fs::read(&direct_csv).unwrap(), std::fs::read(&via_json).unwrap());

        // Empty report exports a header-only CSV.
        let empty = build_report(&[], &QuestionnaireSchema { sections: vec![], ..schema });
        let empty_csv = dir.path().join("empty.csv");
        export_summary(&empty, &empty_csv, SummaryFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&empty_csv).unwrap(), "questionId,statistic,value\n");
    }
}
