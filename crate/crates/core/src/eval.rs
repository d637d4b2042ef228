//! Semantic comparison of predicted and ground-truth action sequences.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ActionError, GroundTruthCase, Prediction};
use crate::gateway::{EmbedBackend, EmbedError, EmbeddingVector};
use crate::par::{self, Exec};

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const ORACLE_MAX_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("embedding failed: {0}")]
    EmbeddingFailure(#[from] EmbedError),
    #[error("matrix {rows}x{cols} exceeds the oracle limit of {ORACLE_MAX_DIM}")]
    SizeLimit { rows: usize, cols: usize },
    #[error("no cases to aggregate")]
    EmptyDataset,
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Dense 0/1 matrix, rows are predictions and columns ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> BinaryMatrix {
        BinaryMatrix {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> BinaryMatrix {
        let mut m = BinaryMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[u8]]) -> BinaryMatrix {
        let cols = rows.first().map_or(0, |r| r.len());
        BinaryMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j] != 0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.cols + j] = v;
    }

    pub fn hadamard(&self, other: &BinaryMatrix) -> BinaryMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        BinaryMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }
}

impl fmt::Display for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: String = (0..self.cols).map(|j| if self.get(i, j) { '1' } else { '0' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityMatrices {
    pub s_o: BinaryMatrix,
    pub s_d: BinaryMatrix,
    pub s_c: BinaryMatrix,
    pub s: BinaryMatrix,
}

fn check_threshold(threshold: f64) -> Result<(), EvalError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold(threshold))
    }
}

/// Embeds each distinct string once.
fn embed_all<'a>(
    texts: impl Iterator<Item = &'a str>,
    embedder: &dyn EmbedBackend,
) -> Result<HashMap<&'a str, EmbeddingVector>, EvalError> {
    let mut out = HashMap::new();
    for t in texts {
        if !out.contains_key(t) {
            out.insert(t, embedder.embed(t)?);
        }
    }
    Ok(out)
}

fn text_matrix(
    pred: &[&str],
    gt: &[&str],
    vectors: &HashMap<&str, EmbeddingVector>,
    threshold: f64,
) -> BinaryMatrix {
    BinaryMatrix::from_fn(pred.len(), gt.len(), |i, j| {
        pred[i] == gt[j] || vectors[pred[i]].cosine(&vectors[gt[j]]) as f64 >= threshold
    })
}

/// `s_o` by exact operation match, `s_d` and `s_c` by embedding cosine at or
/// above `threshold` (identical strings always match), `s` their product.
pub fn similarity_matrices(
    pred: &[Action],
    gt: &[Action],
    threshold: f64,
    embedder: &dyn EmbedBackend,
) -> Result<SimilarityMatrices, EvalError> {
    check_threshold(threshold)?;
    let pd: Vec<&str> = pred.iter().map(|a| a.detail.as_str()).collect();
    let gd: Vec<&str> = gt.iter().map(|a| a.detail.as_str()).collect();
    let pc: Vec<&str> = pred.iter().map(|a| a.context.as_str()).collect();
    let gc: Vec<&str> = gt.iter().map(|a| a.context.as_str()).collect();
    let vectors = embed_all(pd.iter().chain(&gd).chain(&pc).chain(&gc).copied(), embedder)?;
    let s_o = BinaryMatrix::from_fn(pred.len(), gt.len(), |i, j| pred[i].operation == gt[j].operation);
    let s_d = text_matrix(&pd, &gd, &vectors, threshold);
    let s_c = text_matrix(&pc, &gc, &vectors, threshold);
    let s = s_o.hadamard(&s_d).hadamard(&s_c);
    Ok(SimilarityMatrices { s_o, s_d, s_c, s })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// (prediction index, ground-truth index)
    pub matched_pairs: Vec<(usize, usize)>,
    pub m: usize,
    pub matched_flags: Vec<bool>,
}

/// Ground-truth actions in order each take the first still-unmatched
/// prediction they are similar to.
pub fn greedy_match(s: &BinaryMatrix) -> MatchResult {
    let mut matched_flags = vec![false; s.rows()];
    let mut matched_pairs = Vec::new();
    for j in 0..s.cols() {
        for i in 0..s.rows() {
            if s.get(i, j) && !matched_flags[i] {
                matched_flags[i] = true;
                matched_pairs.push((i, j));
                break;
            }
        }
    }
    MatchResult {
        m: matched_pairs.len(),
        matched_pairs,
        matched_flags,
    }
}

/// Maximum bipartite matching size by exhaustive search over column
/// assignments, memoized on the set of used rows.
pub fn brute_force_match_oracle(s: &BinaryMatrix) -> Result<usize, EvalError> {
    if s.rows() > ORACLE_MAX_DIM || s.cols() > ORACLE_MAX_DIM {
        return Err(EvalError::SizeLimit {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    fn best(s: &BinaryMatrix, j: usize, used: u16, memo: &mut HashMap<(usize, u16), usize>) -> usize {
        if j == s.cols() {
            return 0;
        }
        if let Some(&v) = memo.get(&(j, used)) {
            return v;
        }
        let mut v = best(s, j + 1, used, memo);
        for i in 0..s.rows() {
            if s.get(i, j) && used & (1 << i) == 0 {
                v = v.max(1 + best(s, j + 1, used | (1 << i), memo));
            }
        }
        memo.insert((j, used), v);
        v
    }
    Ok(best(s, 0, 0, &mut HashMap::new()))
}

/// `(P, R) = (m / p_len, m / g_len)`. An empty side scores 1 on the ratio it
/// cannot be blamed for: both empty is (1, 1), empty prediction is (1, 0),
/// empty ground truth is (0, 1).
pub fn compute_metrics(m: usize, p_len: usize, g_len: usize) -> (f64, f64) {
    debug_assert!(m <= p_len.min(g_len));
    match (p_len, g_len) {
        (0, 0) => (1.0, 1.0),
        (0, _) => (1.0, 0.0),
        (_, 0) => (0.0, 1.0),
        _ => (m as f64 / p_len as f64, m as f64 / g_len as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    All,
    Operation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub m: usize,
    pub precision: f64,
    pub recall: f64,
}

pub fn evaluate_mode(sims: &SimilarityMatrices, mode: Mode) -> ModeMetrics {
    let s = match mode {
        Mode::All => &sims.s,
        Mode::Operation => &sims.s_o,
    };
    let m = greedy_match(s).m;
    let (precision, recall) = compute_metrics(m, s.rows(), s.cols());
    ModeMetrics { m, precision, recall }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub video_id: String,
    pub domain: String,
    pub p_len: usize,
    pub g_len: usize,
    pub m_all: usize,
    pub m_op: usize,
    pub p_all: f64,
    pub r_all: f64,
    pub p_op: f64,
    pub r_op: f64,
    /// No prediction existed; scored as an empty sequence.
    pub missing_prediction: bool,
}

pub fn evaluate_case(
    video_id: &str,
    domain: &str,
    pred: &[Action],
    gt: &[Action],
    threshold: f64,
    embedder: &dyn EmbedBackend,
) -> Result<CaseMetrics, EvalError> {
    let sims = similarity_matrices(pred, gt, threshold, embedder)?;
    let all = evaluate_mode(&sims, Mode::All);
    let op = evaluate_mode(&sims, Mode::Operation);
    Ok(CaseMetrics {
        video_id: video_id.into(),
        domain: domain.into(),
        p_len: pred.len(),
        g_len: gt.len(),
        m_all: all.m,
        m_op: op.m,
        p_all: all.precision,
        r_all: all.recall,
        p_op: op.precision,
        r_op: op.recall,
        missing_prediction: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub p_all: f64,
    pub r_all: f64,
    pub p_op: f64,
    pub r_op: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub videos: usize,
    /// Unweighted mean over videos.
    pub macro_avg: MetricSet,
    /// Ratios of summed match counts and lengths.
    pub micro: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub embedder: String,
    pub overall: Aggregate,
    pub per_domain: BTreeMap<String, Aggregate>,
    pub per_video: Vec<CaseMetrics>,
    pub missing_predictions: Vec<String>,
    pub unmatched_predictions: Vec<String>,
}

fn aggregate(cases: &[&CaseMetrics]) -> Aggregate {
    let n = cases.len() as f64;
    let mean = |f: fn(&CaseMetrics) -> f64| cases.iter().map(|c| f(c)).sum::<f64>() / n;
    let sum = |f: fn(&CaseMetrics) -> usize| cases.iter().map(|c| f(c)).sum::<usize>();
    let (p_len, g_len) = (sum(|c| c.p_len), sum(|c| c.g_len));
    let (p_all, r_all) = compute_metrics(sum(|c| c.m_all), p_len, g_len);
    let (p_op, r_op) = compute_metrics(sum(|c| c.m_op), p_len, g_len);
    Aggregate {
        videos: cases.len(),
        macro_avg: MetricSet {
            p_all: mean(|c| c.p_all),
            r_all: mean(|c| c.r_all),
            p_op: mean(|c| c.p_op),
            r_op: mean(|c| c.r_op),
        },
        micro: MetricSet { p_all, r_all, p_op, r_op },
    }
}

pub fn aggregate_dataset(
    per_video: Vec<CaseMetrics>,
    threshold: f64,
    embedder: &str,
) -> Result<MetricsReport, EvalError> {
    if per_video.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let all: Vec<&CaseMetrics> = per_video.iter().collect();
    let mut domains: BTreeMap<String, Vec<&CaseMetrics>> = BTreeMap::new();
    for c in &per_video {
        domains.entry(c.domain.clone()).or_default().push(c);
    }
    let per_domain = domains.into_iter().map(|(d, cs)| (d, aggregate(&cs))).collect();
    let missing_predictions = per_video
        .iter()
        .filter(|c| c.missing_prediction)
        .map(|c| c.video_id.clone())
        .collect();
    Ok(MetricsReport {
        threshold,
        embedder: embedder.into(),
        overall: aggregate(&all),
        per_domain,
        missing_predictions,
        unmatched_predictions: Vec::new(),
        per_video,
    })
}

/// Scores every ground-truth case. A case without a prediction is scored
/// as an empty prediction and listed in `missing_predictions`.
pub fn evaluate_corpus(
    predictions: &BTreeMap<String, Prediction>,
    ground_truth: &BTreeMap<String, GroundTruthCase>,
    threshold: f64,
    embedder: &dyn EmbedBackend,
    exec: Exec,
) -> Result<MetricsReport, EvalError> {
    check_threshold(threshold)?;
    let cases: Vec<&GroundTruthCase> = ground_truth.values().collect();
    let per_video = par::map(exec, &cases, |gt| {
        let pred = predictions.get(&gt.video_id);
        let actions = pred.map(|p| p.actions.as_slice()).unwrap_or(&[]);
        let mut c = evaluate_case(&gt.video_id, &gt.domain, actions, &gt.actions.actions, threshold, embedder)?;
        c.missing_prediction = pred.is_none();
        Ok(c)
    })
    .into_iter()
    .collect::<Result<Vec<_>, EvalError>>()?;
    let mut report = aggregate_dataset(per_video, threshold, embedder.name())?;
    report.unmatched_predictions = predictions
        .keys()
        .filter(|k| !ground_truth.contains_key(*k))
        .cloned()
        .collect();
    Ok(report)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{}: {message}", path.display())]
    Read { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Schema { path: PathBuf, source: ActionError },
    #[error("duplicate prediction for video `{0}`")]
    Duplicate(String),
}

/// Reads one prediction file, or every `*.json` prediction in a directory
/// (run reports, `*.report.json`, are skipped).
pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, Prediction>, LoadError> {
    let read_err = |p: &Path, e: std::io::Error| LoadError::Read {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| read_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                p.is_file() && name.ends_with(".json") && !name.ends_with(".report.json")
            })
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = BTreeMap::new();
    for f in files {
        let bytes = std::fs::read(&f).map_err(|e| read_err(&f, e))?;
        let pred = Prediction::from_json(&bytes).map_err(|source| LoadError::Schema { path: f.clone(), source })?;
        if out.contains_key(&pred.video_id) {
            return Err(LoadError::Duplicate(pred.video_id));
        }
        out.insert(pred.video_id.clone(), pred);
    }
    Ok(out)
}

/// Fixed-width table of the four headline metrics per domain and overall.
pub fn format_table(report: &MetricsReport) -> String {
    let mut out = format!(
        "{:<24} {:>6} {:>17} {:>20} {:>11} {:>14}\n",
        "Domain", "Videos", "Recall(Operation)", "Precision(Operation)", "Recall(All)", "Precision(All)"
    );
    let row = |name: &str, a: &Aggregate| {
        let m = &a.macro_avg;
        format!(
            "{:<24} {:>6} {:>17.3} {:>20.3} {:>11.3} {:>14.3}\n",
            name, a.videos, m.r_op, m.p_op, m.r_all, m.p_all
        )
    };
    for (d, a) in &report.per_domain {
        out.push_str(&row(d, a));
    }
    out.push_str(&row("overall (macro)", &report.overall));
    let mi = &report.overall.micro;
    out.push_str(&format!(
        "{:<24} {:>6} {:>17.3} {:>20.3} {:>11.3} {:>14.3}\n",
        "overall (micro)", report.overall.videos, mi.r_op, mi.p_op, mi.r_all, mi.p_all
    ));
    out
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::action::OperationType;
    use crate::gateway::StubEmbedder;

    fn a(op: OperationType, d: &str, c: &str) -> Action {
        Action::new(op, d, c)
    }

    #[test]
    fn identical_single_action() {
        let x = [a(OperationType::Click, "OK button", "App")];
        let s = similarity_matrices(&x, &x, 0.7, &StubEmbedder).unwrap();
        assert_eq!(s.s, BinaryMatrix::from_rows(&[&[1]]));
    }

    #[test]
    fn operation_mismatch_dominates() {
        let p = [a(OperationType::Click, "OK button", "App")];
        let g = [a(OperationType::Drag, "OK button", "App")];
        let s = similarity_matrices(&p, &g, 0.7, &StubEmbedder).unwrap();
        assert!(s.s_d.get(0, 0) && s.s_c.get(0, 0));
        assert!(!s.s.get(0, 0));
    }

    #[test]
    fn disjoint_detail_tokens_do_not_match() {
        let p = [a(OperationType::Click, "alpha", "App")];
        let g = [a(OperationType::Click, "beta", "App")];
        let s = similarity_matrices(&p, &g, 0.7, &StubEmbedder).unwrap();
        assert!(!s.s_d.get(0, 0));
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = [a(OperationType::Click, "save b", "x")];
        let g = [a(OperationType::Click, "save c", "x")];
        let cos = StubEmbedder.embed("save b").unwrap().cosine(&StubEmbedder.embed("save c").unwrap()) as f64;
        assert!(cos > 0.4 && cos < 0.6);
        assert!(similarity_matrices(&p, &g, cos, &StubEmbedder).unwrap().s_d.get(0, 0));
        assert!(!similarity_matrices(&p, &g, cos + 1e-6, &StubEmbedder).unwrap().s_d.get(0, 0));
        assert!(similarity_matrices(&p, &g, 0.0, &StubEmbedder).is_err());
    }

    #[test]
    fn greedy_examples() {
        let id3 = BinaryMatrix::from_fn(3, 3, |i, j| i == j);
        assert_eq!(greedy_match(&id3).m, 3);
        assert_eq!(greedy_match(&BinaryMatrix::zeros(3, 3)).m, 0);
        // g1 ~ {p1, p2}, g2 ~ {p1}
        let s = BinaryMatrix::from_rows(&[&[1, 1], &[1, 0]]);
        let r = greedy_match(&s);
        assert_eq!(r.matched_pairs, vec![(0, 0)]);
        assert_eq!(r.m, 1);
        assert_eq!(brute_force_match_oracle(&s).unwrap(), 2);
        assert_eq!(brute_force_match_oracle(&id3).unwrap(), 3);
        assert_eq!(brute_force_match_oracle(&BinaryMatrix::from_fn(2, 3, |_, _| true)).unwrap(), 2);
        assert!(matches!(
            brute_force_match_oracle(&BinaryMatrix::zeros(13, 2)),
            Err(EvalError::SizeLimit { .. })
        ));
    }

    #[test]
    fn greedy_is_not_monotone_in_similarity() {
        // A stricter threshold keeps only p1-g2 and p2-g1: greedy finds both.
        let strict = BinaryMatrix::from_rows(&[&[0, 1], &[1, 0]]);
        // A looser one also admits p1-g1, and greedy then strands g2.
        let loose = BinaryMatrix::from_rows(&[&[1, 1], &[1, 0]]);
        assert_eq!(greedy_match(&strict).m, 2);
        assert_eq!(greedy_match(&loose).m, 1);
        assert_eq!(brute_force_match_oracle(&strict).unwrap(), 2);
        assert_eq!(brute_force_match_oracle(&loose).unwrap(), 2);
    }

    #[test]
    fn metric_conventions() {
        assert_eq!(compute_metrics(1, 2, 2), (0.5, 0.5));
        assert_eq!(compute_metrics(3, 4, 5), (0.75, 0.6));
        assert_eq!(compute_metrics(0, 0, 0), (1.0, 1.0));
        assert_eq!(compute_metrics(0, 0, 2), (1.0, 0.0));
        assert_eq!(compute_metrics(0, 3, 0), (0.0, 1.0));
    }

    #[test]
    fn case_examples() {
        let gt = [
            a(OperationType::Click, "Start button", "Taskbar of Windows"),
            a(OperationType::Type, "search box", "Start menu"),
        ];
        let same = evaluate_case("v", "d", &gt, &gt, 0.7, &StubEmbedder).unwrap();
        assert_eq!((same.p_all, same.r_all, same.p_op, same.r_op), (1.0, 1.0, 1.0, 1.0));

        let other = [
            a(OperationType::Click, "alpha", "gamma"),
            a(OperationType::Type, "beta", "delta"),
        ];
        let c = evaluate_case("v", "d", &other, &gt, 0.7, &StubEmbedder).unwrap();
        assert_eq!((c.p_op, c.r_op, c.p_all, c.r_all), (1.0, 1.0, 0.0, 0.0));

        let empty = evaluate_case("v", "d", &[], &gt, 0.7, &StubEmbedder).unwrap();
        assert_eq!((empty.p_all, empty.r_all), (1.0, 0.0));
    }

    fn case(id: &str, domain: &str, p_all: f64) -> CaseMetrics {
        CaseMetrics {
            video_id: id.into(),
            domain: domain.into(),
            p_len: 1,
            g_len: 1,
            m_all: p_all as usize,
            m_op: 1,
            p_all,
            r_all: p_all,
            p_op: 1.0,
            r_op: 1.0,
            missing_prediction: false,
        }
    }

    #[test]
    fn aggregation() {
        let r = aggregate_dataset(vec![case("a", "click", 1.0), case("b", "select", 0.0)], 0.7, "stub").unwrap();
        assert_relative_eq!(r.overall.macro_avg.p_all, 0.5);
        assert_relative_eq!(r.overall.micro.p_all, 0.5);
        assert_eq!(r.per_domain.len(), 2);
        let single = aggregate_dataset(vec![case("a", "click", 1.0)], 0.7, "stub").unwrap();
        assert_eq!(single.overall.macro_avg.p_all, 1.0);
        assert_eq!(aggregate_dataset(vec![], 0.7, "stub"), Err(EvalError::EmptyDataset));
        assert!(format_table(&r).contains("Recall(Operation)"));
    }

    fn matrix() -> impl Strategy<Value = BinaryMatrix> {
        (0usize..7, 0usize..7).prop_flat_map(|(r, c)| {
            proptest::collection::vec(any::<bool>(), r * c).prop_map(move |bits| BinaryMatrix {
                rows: r,
                cols: c,
                data: bits,
            })
        })
    }

    proptest! {
        #[test]
        fn greedy_is_a_valid_matching_bounded_by_oracle(s in matrix()) {
            let r = greedy_match(&s);
            let mut rows = std::collections::HashSet::new();
            let mut cols = std::collections::HashSet::new();
            for &(i, j) in &r.matched_pairs {
                prop_assert!(s.get(i, j));
                prop_assert!(rows.insert(i) && cols.insert(j));
            }
            prop_assert!(r.m <= s.rows().min(s.cols()));
            prop_assert!(r.m <= brute_force_match_oracle(&s).unwrap());
        }

        #[test]
        fn greedy_ignores_appended_zero_lines(s in matrix(), extra_r in 0usize..3, extra_c in 0usize..3) {
            let padded = BinaryMatrix::from_fn(s.rows() + extra_r, s.cols() + extra_c, |i, j| {
                i < s.rows() && j < s.cols() && s.get(i, j)
            });
            prop_assert_eq!(greedy_match(&s).matched_pairs, greedy_match(&padded).matched_pairs);
        }

        #[test]
        fn metrics_stay_in_unit_interval(p in 0usize..20, g in 0usize..20, seed in 0usize..1000) {
            let m = if p.min(g) == 0 { 0 } else { seed % (p.min(g) + 1) };
            let (pr, rc) = compute_metrics(m, p, g);
            prop_assert!((0.0..=1.0).contains(&pr) && (0.0..=1.0).contains(&rc));
        }

        #[test]
        fn raising_threshold_never_adds_similarity(
            words in proptest::collection::vec("[a-e]{1,2}( [a-e]{1,2}){0,3}", 2..6),
            t1 in 0.05f64..1.0, t2 in 0.05f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let acts: Vec<Action> = words.iter().map(|w| a(OperationType::Click, w, w)).collect();
            let (p, g) = acts.split_at(acts.len() / 2);
            let s_lo = similarity_matrices(p, g, lo, &StubEmbedder).unwrap();
            let s_hi = similarity_matrices(p, g, hi, &StubEmbedder).unwrap();
            for i in 0..p.len() {
                for j in 0..g.len() {
                    prop_assert!(!s_hi.s_d.get(i, j) || s_lo.s_d.get(i, j));
                }
            }
            prop_assert!(brute_force_match_oracle(&s_hi.s).unwrap() <= brute_force_match_oracle(&s_lo.s).unwrap());
        }
    }
}
