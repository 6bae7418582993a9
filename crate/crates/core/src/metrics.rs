//! Evaluation measures: NDCG@10, accuracy, macro-F1, mIoU, and the TSV
//! qrels/run file formats they consume.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Graded relevance judgments: query id -> (doc id -> relevance >= 0).
#[derive(Debug, Clone, Default)]
pub struct QrelSet {
    qrels: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, query: &str, doc: &str, relevance: u32) {
        self.qrels
            .entry(query.to_string())
            .or_default()
            .insert(doc.to_string(), relevance);
    }

    pub fn queries(&self) -> impl Iterator<Item = (&String, &BTreeMap<String, u32>)> {
        self.qrels.iter()
    }

    pub fn get(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.qrels.get(query)
    }

    pub fn len(&self) -> usize {
        self.qrels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qrels.is_empty()
    }

    /// Parse `query_id \t doc_id \t relevance` lines.
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut set = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!(
                    "{}:{}: expected 3 tab-separated fields, got {}",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            let rel: u32 = fields[2].trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: relevance {:?} is not a non-negative integer",
                    path.display(),
                    lineno + 1,
                    fields[2]
                ))
            })?;
            set.add(fields[0], fields[1], rel);
        }
        Ok(set)
    }
}

/// A ranked run: query id -> docs in rank order.
#[derive(Debug, Clone, Default)]
pub struct RunFile {
    runs: BTreeMap<String, Vec<(u32, String, f64)>>,
}

impl RunFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, query: &str, rank: u32, doc: &str, score: f64) {
        self.runs
            .entry(query.to_string())
            .or_default()
            .push((rank, doc.to_string(), score));
    }

    /// Docs for one query sorted by rank, duplicates dropped (first kept).
    pub fn ranked_docs(&self, query: &str) -> Vec<String> {
        let mut entries = match self.runs.get(query) {
            Some(e) => e.clone(),
            None => return Vec::new(),
        };
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut seen = std::collections::HashSet::new();
        entries
            .into_iter()
            .filter(|(_, doc, _)| seen.insert(doc.clone()))
            .map(|(_, doc, _)| doc)
            .collect()
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.runs.keys()
    }

    /// Parse `query_id \t rank \t doc_id \t score` lines.
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut run = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "{}:{}: expected 4 tab-separated fields, got {}",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            let rank: u32 = fields[1].trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: rank {:?} is not an integer",
                    path.display(),
                    lineno + 1,
                    fields[1]
                ))
            })?;
            let score: f64 = fields[3].trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: score {:?} is not a number",
                    path.display(),
                    lineno + 1,
                    fields[3]
                ))
            })?;
            run.add(fields[0], rank, fields[2], score);
        }
        Ok(run)
    }
}

/// NDCG@10 with graded gains `(2^rel - 1) / log2(i+1)`.
///
/// Returns `None` when the ideal DCG is zero (no positively relevant doc
/// exists for the query), so callers can exclude the query from averages.
pub fn ndcg_at_10(ranked: &[String], rels: &BTreeMap<String, u32>) -> Option<f64> {
    const K: usize = 10;
    let gain = |rel: u32| -> f64 { (2f64.powi(rel as i32)) - 1.0 };
    let discount = |i: usize| -> f64 { ((i + 2) as f64).log2() };
    let dcg: f64 = ranked
        .iter()
        .take(K)
        .enumerate()
        .map(|(i, doc)| gain(rels.get(doc).copied().unwrap_or(0)) / discount(i))
        .sum();
    let mut ideal: Vec<u32> = rels.values().copied().filter(|&r| r > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(K)
        .enumerate()
        .map(|(i, &rel)| gain(rel) / discount(i))
        .sum();
    if idcg == 0.0 {
        None
    } else {
        Some(dcg / idcg)
    }
}

/// NDCG over a whole run: per-query scores plus the mean over scored
/// queries and the count of skipped (zero-IDCG or judgment-less) queries.
#[derive(Debug, Clone)]
pub struct NdcgReport {
    pub per_query: Vec<(String, Option<f64>)>,
    pub mean: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

pub fn evaluate_ndcg(qrels: &QrelSet, run: &RunFile) -> NdcgReport {
    let mut per_query = Vec::new();
    let mut sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for (query, rels) in qrels.queries() {
        let ranked = run.ranked_docs(query);
        match ndcg_at_10(&ranked, rels) {
            Some(v) => {
                sum += v;
                evaluated += 1;
                per_query.push((query.clone(), Some(v)));
            }
            None => {
                skipped += 1;
                per_query.push((query.clone(), None));
            }
        }
    }
    NdcgReport {
        per_query,
        mean: if evaluated > 0 { sum / evaluated as f64 } else { 0.0 },
        evaluated,
        skipped,
    }
}

/// One-vs-rest precision/recall/F1 for a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// True when the class had zero true and zero predicted instances;
    /// its F1 contributes 0 to the macro average.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    /// Micro accuracy: fraction of correct predictions.
    pub accuracy: f64,
    /// Unweighted mean of per-class F1.
    pub macro_f1: f64,
    /// Unweighted mean of per-class recall (mean per-class accuracy).
    pub macro_recall: f64,
    pub per_class: Vec<ClassScore>,
}

/// Accuracy, per-class one-vs-rest F1, and their macro averages.
/// Labels are class indices in `0..n_classes`.
pub fn classification_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ClassificationReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} outside 0..{n_classes}"
        )));
    }
    let n = y_true.len();
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    let mut per_class = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = y_true
            .iter()
            .zip(y_pred)
            .filter(|&(&t, &p)| t == c && p == c)
            .count() as f64;
        let fp = y_true
            .iter()
            .zip(y_pred)
            .filter(|&(&t, &p)| t != c && p == c)
            .count() as f64;
        let fn_ = y_true
            .iter()
            .zip(y_pred)
            .filter(|&(&t, &p)| t == c && p != c)
            .count() as f64;
        let support = y_true.iter().filter(|&&t| t == c).count();
        let degenerate = tp + fp == 0.0 && tp + fn_ == 0.0;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScore {
            precision,
            recall,
            f1,
            support,
            degenerate,
        });
    }
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / n_classes as f64;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / n_classes as f64;
    Ok(ClassificationReport {
        accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
        macro_f1,
        macro_recall,
        per_class,
    })
}

/// 2-D integer class grid for segmentation scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl LabelMask {
    pub fn new(rows: usize, cols: usize, data: Vec<u32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "mask of {}x{} needs {} cells, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn transposed(&self) -> Self {
        let mut data = vec![0u32; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Mean IoU over classes present in either mask; classes absent from both
/// are skipped rather than scored as 0/0.
pub fn miou(pred: &LabelMask, truth: &LabelMask, n_classes: usize) -> Result<f64> {
    if pred.rows != truth.rows || pred.cols != truth.cols {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.rows, pred.cols, truth.rows, truth.cols
        )));
    }
    if let Some(&bad) = pred.data.iter().chain(&truth.data).find(|&&c| c as usize >= n_classes) {
        return Err(Error::InvalidParameter(format!(
            "class {bad} outside 0..{n_classes}"
        )));
    }
    let mut intersection = vec![0usize; n_classes];
    let mut union = vec![0usize; n_classes];
    for (&p, &t) in pred.data.iter().zip(&truth.data) {
        if p == t {
            intersection[p as usize] += 1;
            union[p as usize] += 1;
        } else {
            union[p as usize] += 1;
            union[t as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..n_classes {
        if union[c] == 0 {
            continue;
        }
        sum += intersection[c] as f64 / union[c] as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::DegenerateInput("both masks are empty".into()));
    }
    Ok(sum / counted as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rels(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, r)| (d.to_string(), *r)).collect()
    }

    fn ids(docs: &[&str]) -> Vec<String> {
        docs.iter().map(|d| d.to_string()).collect()
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let r = rels(&[("a", 3), ("b", 2), ("c", 1)]);
        let v = ndcg_at_10(&ids(&["a", "b", "c"]), &r).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_misses_scores_zero() {
        let r = rels(&[("z", 1)]);
        let v = ndcg_at_10(&ids(&["a", "b", "c"]), &r).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn single_relevant_ranked_second() {
        // DCG = 1/log2(3), IDCG = 1.
        let r = rels(&[("hit", 1)]);
        let v = ndcg_at_10(&ids(&["miss", "hit"]), &r).unwrap();
        assert!((v - 0.63093).abs() < 1e-5, "ndcg {v}");
    }

    #[test]
    fn no_positive_relevance_is_skipped() {
        let r = rels(&[("a", 0)]);
        assert!(ndcg_at_10(&ids(&["a"]), &r).is_none());
    }

    #[test]
    fn order_beyond_rank_10_ignored() {
        let r = rels(&[("a", 2), ("b", 1)]);
        let mut docs: Vec<String> = ids(&["a", "b"]);
        docs.extend((0..20).map(|i| format!("pad{i}")));
        let base = ndcg_at_10(&docs, &r).unwrap();
        let mut shuffled = docs.clone();
        shuffled[12..].reverse();
        assert_eq!(base, ndcg_at_10(&shuffled, &r).unwrap());
    }

    #[test]
    fn matches_exhaustive_permutation_oracle() {
        // On <= 6 docs, the best NDCG over all orderings must be 1 and every
        // permutation must score <= 1 with the maximum attained by the
        // relevance-sorted order.
        let r = rels(&[("a", 3), ("b", 1), ("c", 0), ("d", 2), ("e", 1)]);
        let docs = ["a", "b", "c", "d", "e"];
        let mut best = 0.0f64;
        let mut perm = ids(&docs);
        // Heap's algorithm, iterative.
        let n = perm.len();
        let mut c = vec![0usize; n];
        let mut eval = |p: &[String]| ndcg_at_10(p, &r).unwrap();
        best = best.max(eval(&perm));
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.max(eval(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        assert!((best - 1.0).abs() < 1e-12, "best over permutations {best}");
        let sorted = ids(&["a", "d", "b", "e", "c"]);
        assert!((eval(&sorted) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_exact_match() {
        let y = vec![0, 1, 2, 1];
        let rep = classification_metrics(&y, &y, 3).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.macro_f1, 1.0);
    }

    #[test]
    fn confusion_matrix_arithmetic() {
        // Binary: TP=2 FP=1 FN=1 TN=6 for class 1.
        let y_true = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let y_pred = vec![1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let rep = classification_metrics(&y_true, &y_pred, 2).unwrap();
        let c1 = &rep.per_class[1];
        assert!((c1.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((c1.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((c1.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn collapsed_predictions_on_balanced_set() {
        let y_true = vec![0, 0, 1, 1];
        let y_pred = vec![0, 0, 0, 0];
        let rep = classification_metrics(&y_true, &y_pred, 2).unwrap();
        assert_eq!(rep.accuracy, 0.5);
    }

    #[test]
    fn degenerate_class_flagged() {
        let y_true = vec![0, 0];
        let y_pred = vec![0, 0];
        let rep = classification_metrics(&y_true, &y_pred, 2).unwrap();
        assert!(rep.per_class[1].degenerate);
        assert_eq!(rep.per_class[1].f1, 0.0);
    }

    #[test]
    fn macro_f1_invariant_under_relabeling() {
        let y_true = vec![0, 0, 1, 2, 2, 1, 0];
        let y_pred = vec![0, 1, 1, 2, 0, 1, 0];
        let rep = classification_metrics(&y_true, &y_pred, 3).unwrap();
        // permutation 0->2, 1->0, 2->1
        let map = [2usize, 0, 1];
        let yt: Vec<usize> = y_true.iter().map(|&c| map[c]).collect();
        let yp: Vec<usize> = y_pred.iter().map(|&c| map[c]).collect();
        let rep2 = classification_metrics(&yt, &yp, 3).unwrap();
        assert!((rep.macro_f1 - rep2.macro_f1).abs() < 1e-12);
        assert!((rep.accuracy - rep2.accuracy).abs() < 1e-12);
    }

    #[test]
    fn miou_identical_masks() {
        let m = LabelMask::new(2, 2, vec![0, 1, 1, 2]).unwrap();
        assert!((miou(&m, &m, 3).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn miou_disjoint_equal_areas() {
        let pred = LabelMask::new(1, 4, vec![1, 1, 0, 0]).unwrap();
        let truth = LabelMask::new(1, 4, vec![0, 0, 1, 1]).unwrap();
        // Class 1: intersection 0. Class 0: intersection 0. mIoU = 0.
        assert_eq!(miou(&pred, &truth, 2).unwrap(), 0.0);
    }

    #[test]
    fn miou_half_coverage() {
        // pred covers half of truth's class-1 region, no false positives
        let pred = LabelMask::new(1, 4, vec![1, 0, 0, 0]).unwrap();
        let truth = LabelMask::new(1, 4, vec![1, 1, 0, 0]).unwrap();
        // class 1: 1/2; class 0: 2/3. skip rule not triggered.
        let v = miou(&pred, &truth, 2).unwrap();
        assert!((v - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn miou_absent_class_skipped() {
        let pred = LabelMask::new(1, 2, vec![0, 0]).unwrap();
        let truth = LabelMask::new(1, 2, vec![0, 0]).unwrap();
        // class 1 and 2 absent from both: skipped, mIoU = IoU(class 0) = 1.
        assert_eq!(miou(&pred, &truth, 3).unwrap(), 1.0);
    }

    #[test]
    fn miou_transposition_invariant() {
        let pred = LabelMask::new(2, 3, vec![0, 1, 1, 2, 0, 1]).unwrap();
        let truth = LabelMask::new(2, 3, vec![0, 1, 2, 2, 0, 0]).unwrap();
        let a = miou(&pred, &truth, 3).unwrap();
        let b = miou(&pred.transposed(), &truth.transposed(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn miou_shape_mismatch() {
        let a = LabelMask::new(1, 2, vec![0, 0]).unwrap();
        let b = LabelMask::new(2, 1, vec![0, 0]).unwrap();
        assert!(miou(&a, &b, 1).is_err());
    }
}
