//! Word recognition rate and the normalized total edit distance measure.
//!
//! Each word's Levenshtein distance is divided by the length of its ground
//! truth, and the per-word values are summed over the dataset.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recognize::{ExitStatus, OcrResult};
use crate::store::DatasetManifest;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("ground truth for `{0}` is empty after normalization")]
    EmptyTruth(String),

    #[error("more than one result for `{0}`")]
    DuplicateResult(String),

    #[error("result for `{0}` does not match any manifest entry")]
    UnknownResult(String),

    #[error("dataset has no images")]
    EmptyDataset,

    #[error("nothing to render")]
    NoReports,
}

pub type EvalResult<T> = Result<T, EvalError>;

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// How truth and hypothesis are normalized before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchRule {
    pub case_insensitive: bool,
}

impl MatchRule {
    pub const CASE_SENSITIVE: MatchRule = MatchRule { case_insensitive: false };
    pub const CASE_INSENSITIVE: MatchRule = MatchRule { case_insensitive: true };

    /// Trim, collapse whitespace runs to one space, optionally lowercase.
    pub fn normalize(&self, s: &str) -> String {
        let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
        if self.case_insensitive {
            collapsed.to_lowercase()
        } else {
            collapsed
        }
    }

    pub fn matches(&self, truth: &str, hyp: &str) -> bool {
        self.normalize(truth) == self.normalize(hyp)
    }

    pub fn normalized_distance(&self, truth: &str, hyp: &str) -> Option<f64> {
        let t = self.normalize(truth);
        let n = t.chars().count();
        if n == 0 {
            return None;
        }
        Some(edit_distance(&t, &self.normalize(hyp)) as f64 / n as f64)
    }
}

/// Distance normalized by the ground-truth length, under the default rule.
pub fn normalized_distance(truth: &str, hyp: &str) -> EvalResult<f64> {
    MatchRule::CASE_SENSITIVE
        .normalized_distance(truth, hyp)
        .ok_or_else(|| EvalError::EmptyTruth(truth.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordOutcome {
    pub image_id: String,
    pub truth: String,
    pub hypothesis: String,
    pub correct: bool,
    pub norm_edit_distance: f64,
    pub exit_status: ExitStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    /// Label for the Algorithm column of rendered tables.
    pub algorithm: String,
    pub n_images: usize,
    pub word_recognition_rate: f64,
    pub total_edit_distance: f64,
    pub rows: Vec<WordOutcome>,
}

impl EvalReport {
    /// Build a report from rows, computing both aggregate metrics.
    pub fn from_rows(dataset_name: &str, algorithm: &str, rows: Vec<WordOutcome>) -> EvalResult<Self> {
        if rows.is_empty() {
            return Err(EvalError::EmptyDataset);
        }
        let correct = rows.iter().filter(|r| r.correct).count();
        let total: f64 = rows.iter().map(|r| r.norm_edit_distance).sum();
        Ok(Self {
            dataset_name: dataset_name.to_string(),
            algorithm: algorithm.to_string(),
            n_images: rows.len(),
            word_recognition_rate: 100.0 * correct as f64 / rows.len() as f64,
            total_edit_distance: total,
            rows,
        })
    }

    pub fn correct_count(&self) -> usize {
        self.rows.iter().filter(|r| r.correct).count()
    }
}

/// Score OCR results against a manifest. Images without a result, and
/// results that did not finish with `Ok`, count as empty hypotheses.
pub fn score_dataset(
    manifest: &DatasetManifest,
    results: &[OcrResult],
    rule: MatchRule,
    algorithm: &str,
) -> EvalResult<EvalReport> {
    if manifest.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let known: HashSet<&str> = manifest.entries.iter().map(|e| e.image_id.as_str()).collect();
    let mut by_id: HashMap<&str, &OcrResult> = HashMap::new();
    for r in results {
        if !known.contains(r.image_id.as_str()) {
            return Err(EvalError::UnknownResult(r.image_id.clone()));
        }
        if by_id.insert(&r.image_id, r).is_some() {
            return Err(EvalError::DuplicateResult(r.image_id.clone()));
        }
    }
    let mut rows = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let (hypothesis, exit_status) = match by_id.get(entry.image_id.as_str()) {
            Some(r) if r.exit_status == ExitStatus::Ok => (r.text.clone(), ExitStatus::Ok),
            Some(r) => (String::new(), r.exit_status),
            None => (String::new(), ExitStatus::EngineError),
        };
        let norm_edit_distance = rule
            .normalized_distance(&entry.ground_truth, &hypothesis)
            .ok_or_else(|| EvalError::EmptyTruth(entry.image_id.clone()))?;
        rows.push(WordOutcome {
            image_id: entry.image_id.clone(),
            truth: entry.ground_truth.clone(),
            correct: rule.matches(&entry.ground_truth, &hypothesis),
            hypothesis,
            norm_edit_distance,
            exit_status,
        });
    }
    EvalReport::from_rows(&manifest.name, algorithm, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

pub const REPORT_CSV_HEADER: [&str; 4] = ["dataset", "n", "wrr", "total_edit_distance"];
pub const ROWS_CSV_HEADER: [&str; 5] = ["image_id", "truth", "hypothesis", "correct", "norm_edit_distance"];

/// Text: an aligned Algorithm / Edit distance measure / Word recognition
/// rate table with one decimal. CSV: the dataset summary at full precision.
pub fn render_table(reports: &[EvalReport], format: TableFormat) -> EvalResult<String> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    Ok(match format {
        TableFormat::Text => render_text(reports),
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_CSV_HEADER).expect("in-memory csv");
            for r in reports {
                w.write_record([
                    r.dataset_name.clone(),
                    r.n_images.to_string(),
                    r.word_recognition_rate.to_string(),
                    r.total_edit_distance.to_string(),
                ])
                .expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
        }
    })
}

fn render_text(reports: &[EvalReport]) -> String {
    let header = ["Algorithm", "Edit distance measure", "Word recognition rate"];
    let body: Vec<[String; 3]> = reports
        .iter()
        .map(|r| {
            [
                r.algorithm.clone(),
                format!("{:.1}", r.total_edit_distance),
                format!("{:.1}", r.word_recognition_rate),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 3]| {
        format!(
            "{:<w0$} | {:>w1$} | {:>w2$}\n",
            cells[0],
            cells[1],
            cells[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        )
    };
    let mut out = line(header);
    out.push_str(&format!(
        "{}-+-{}-+-{}\n",
        "-".repeat(widths[0]),
        "-".repeat(widths[1]),
        "-".repeat(widths[2])
    ));
    for row in &body {
        out.push_str(&line([&row[0], &row[1], &row[2]]));
    }
    out
}

/// Per-image outcomes as CSV.
pub fn render_rows_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROWS_CSV_HEADER).expect("in-memory csv");
    for r in &report.rows {
        w.write_record([
            r.image_id.clone(),
            r.truth.clone(),
            r.hypothesis.clone(),
            r.correct.to_string(),
            r.norm_edit_distance.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::parse_manifest;
    use proptest::prelude::*;
    use std::path::Path;

    /// Memoized recursion over suffixes, independent of the row DP.
    fn oracle(a: &[char], b: &[char]) -> usize {
        fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
            if i == a.len() {
                return b.len() - j;
            }
            if j == b.len() {
                return a.len() - i;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let v = if a[i] == b[j] {
                go(a, b, i + 1, j + 1, memo)
            } else {
                1 + go(a, b, i + 1, j, memo)
                    .min(go(a, b, i, j + 1, memo))
                    .min(go(a, b, i + 1, j + 1, memo))
            };
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut HashMap::new())
    }

    fn ok(id: &str, text: &str) -> OcrResult {
        OcrResult {
            image_id: id.into(),
            text: text.into(),
            engine_tag: "mock".into(),
            exit_status: ExitStatus::Ok,
            detail: None,
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance("ROAD", "ROAD"), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("café", "cafe"), 1);
        assert_eq!(normalized_distance("abc", "abd").unwrap(), 1.0 / 3.0);
        assert_eq!(normalized_distance("WORD", "WORD").unwrap(), 0.0);
        assert_eq!(normalized_distance("ab", "").unwrap(), 1.0);
        assert_eq!(normalized_distance("  ", "x"), Err(EvalError::EmptyTruth("  ".into())));
    }

    #[test]
    fn match_rule_whitespace_and_case() {
        let cs = MatchRule::CASE_SENSITIVE;
        assert!(cs.matches("  No \t Parking ", "No Parking"));
        assert!(!cs.matches("Bank", "bank"));
        assert!(MatchRule::CASE_INSENSITIVE.matches("Bank", "BANK"));
        assert_eq!(MatchRule::CASE_INSENSITIVE.normalized_distance("Bank", "bank"), Some(0.0));
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(a in "[abc\u{e9}]{0,12}", b in "[abc\u{e9}]{0,12}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            prop_assert_eq!(edit_distance(&a, &b), oracle(&ac, &bc));
        }

        #[test]
        fn metric_properties(a in "[ab]{0,8}", b in "[ab]{0,8}", c in "[ab]{0,8}") {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
            prop_assert!(ab <= a.chars().count().max(b.chars().count()));
        }

        #[test]
        fn correct_implies_zero_distance(t in "[aA ]{1,6}x", h in "[aA ]{0,6}x?", ci in any::<bool>()) {
            let rule = MatchRule { case_insensitive: ci };
            let d = rule.normalized_distance(&t, &h).unwrap();
            prop_assert_eq!(rule.matches(&t, &h), d == 0.0);
        }
    }

    fn manifest(rows: &[(&str, &str)]) -> DatasetManifest {
        let text: String = rows.iter().map(|(id, t)| format!("{id}\t{id}.png\t{t}\n")).collect();
        parse_manifest(&text, "fixture", Path::new(".")).unwrap()
    }

    #[test]
    fn all_correct() {
        let m = manifest(&[("a", "ONE"), ("b", "TWO"), ("c", "THREE"), ("d", "FOUR")]);
        let res: Vec<_> = m.entries.iter().map(|e| ok(&e.image_id, &e.ground_truth)).collect();
        let r = score_dataset(&m, &res, MatchRule::default(), "x").unwrap();
        assert_eq!((r.word_recognition_rate, r.total_edit_distance), (100.0, 0.0));
    }

    #[test]
    fn one_match_one_empty() {
        let m = manifest(&[("a", "ONE"), ("b", "TWO")]);
        let r = score_dataset(&m, &[ok("a", "ONE")], MatchRule::default(), "x").unwrap();
        assert_eq!((r.word_recognition_rate, r.total_edit_distance), (50.0, 1.0));
        assert_eq!(r.rows[1].hypothesis, "");
    }

    #[test]
    fn errored_result_scores_as_empty() {
        let m = manifest(&[("a", "ONE")]);
        let mut bad = ok("a", "ONE");
        bad.exit_status = ExitStatus::Timeout;
        let r = score_dataset(&m, &[bad], MatchRule::default(), "x").unwrap();
        assert_eq!(r.total_edit_distance, 1.0);
        assert_eq!(r.rows[0].exit_status, ExitStatus::Timeout);
    }

    #[test]
    fn duplicate_and_unknown_rejected() {
        let m = manifest(&[("a", "ONE")]);
        assert_eq!(
            score_dataset(&m, &[ok("a", "x"), ok("a", "y")], MatchRule::default(), "x"),
            Err(EvalError::DuplicateResult("a".into()))
        );
        assert_eq!(
            score_dataset(&m, &[ok("z", "x")], MatchRule::default(), "x"),
            Err(EvalError::UnknownResult("z".into()))
        );
        assert_eq!(
            score_dataset(&manifest(&[]), &[], MatchRule::default(), "x"),
            Err(EvalError::EmptyDataset)
        );
    }

    #[test]
    fn rows_in_manifest_order_regardless_of_result_order() {
        let m = manifest(&[("a", "AB"), ("b", "CD"), ("c", "EF")]);
        let res = [ok("c", "EF"), ok("a", "A"), ok("b", "XD")];
        let r = score_dataset(&m, &res, MatchRule::default(), "x").unwrap();
        let ids: Vec<&str> = r.rows.iter().map(|r| r.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(r.total_edit_distance, 1.0);
    }

    #[test]
    fn partition_additivity_and_permutation_invariance() {
        let m = manifest(&[("a", "ABCD"), ("b", "XY"), ("c", "Q"), ("d", "LONG WORD")]);
        let res = [ok("a", "ABXD"), ok("b", "XY"), ok("c", ""), ok("d", "LONG W0RD")];
        let all = score_dataset(&m, &res, MatchRule::default(), "x").unwrap();
        let left = EvalReport::from_rows("l", "x", all.rows[..2].to_vec()).unwrap();
        let right = EvalReport::from_rows("r", "x", all.rows[2..].to_vec()).unwrap();
        assert_eq!(all.total_edit_distance, left.total_edit_distance + right.total_edit_distance);
        let mut rev = all.rows.clone();
        rev.reverse();
        let permuted = EvalReport::from_rows("p", "x", rev).unwrap();
        assert_eq!(permuted.word_recognition_rate, all.word_recognition_rate);
    }

    #[test]
    fn text_table_one_decimal() {
        let m = manifest(&[("a", "ABC"), ("b", "B"), ("c", "C")]);
        let r = score_dataset(&m, &[ok("a", "ABD"), ok("b", "B")], MatchRule::default(), "Human segmentation").unwrap();
        let text = render_table(&[r], TableFormat::Text).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Algorithm"));
        assert!(lines[0].contains("Edit distance measure"));
        assert!(lines[2].starts_with("Human segmentation"));
        assert!(lines[2].contains(" 1.3 "), "{}", lines[2]);
        assert!(lines[2].ends_with(" 33.3"), "{}", lines[2]);
        assert_eq!(render_table(&[], TableFormat::Text), Err(EvalError::NoReports));
    }

    #[test]
    fn csv_round_trip() {
        let m = manifest(&[("a", "ABC"), ("b", "a, \"quoted\""), ("c", "C")]);
        let r = score_dataset(&m, &[ok("a", "ABD"), ok("b", "a, \"quoted\"")], MatchRule::default(), "x").unwrap();
        let text = render_table(std::slice::from_ref(&r), TableFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rd.headers().unwrap(), &csv::StringRecord::from(REPORT_CSV_HEADER.to_vec()));
        let rec = rd.records().next().unwrap().unwrap();
        assert_eq!(&rec[0], "fixture");
        assert_eq!(rec[1].parse::<usize>().unwrap(), r.n_images);
        assert_eq!(rec[2].parse::<f64>().unwrap(), r.word_recognition_rate);
        assert_eq!(rec[3].parse::<f64>().unwrap(), r.total_edit_distance);

        let rows = render_rows_csv(&r);
        let mut rd = csv::Reader::from_reader(rows.as_bytes());
        let back: Vec<csv::StringRecord> = rd.records().map(|x| x.unwrap()).collect();
        assert_eq!(back.len(), 3);
        assert_eq!(&back[1][1], "a, \"quoted\"");
        assert_eq!(back[0][4].parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
