//! Exact nearest-neighbor vector store and multi-sample retrieval.
//!
//! Stores are immutable after build and searched with a full scan; queries
//! are pure reads and run in parallel across documents. Tie-breaks are by
//! ascending doc id everywhere, so results are reproducible.

use crate::distance::{distance, l2_normalize, Metric};
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::parallel::map_indexed;

/// Immutable indexed collection of document embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    embeddings: EmbeddingMatrix,
    metric: Metric,
    normalized: bool,
    ids: Vec<String>,
}

/// How a multi-sample result is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// Per-document score = min over samples of distance; lower is better.
    MinDistance,
    /// Samples vote for their k nearest docs; more votes is better.
    Vote,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-distance" => Ok(AggregationMode::MinDistance),
            "vote" => Ok(AggregationMode::Vote),
            other => Err(Error::InvalidParameter(format!(
                "unknown aggregation mode {other:?} (expected min-distance or vote)"
            ))),
        }
    }
}

/// Ranked `(doc id, score)` list. For distance scoring lower is better;
/// for vote scoring higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub entries: Vec<(String, f64)>,
    /// True when scores are vote counts rather than distances.
    pub votes: bool,
}

pub fn build_store(x: &EmbeddingMatrix, metric: Metric) -> Result<VectorStore> {
    if x.rows() == 0 {
        return Err(Error::DegenerateInput("cannot build an empty store".into()));
    }
    let ids: Vec<String> = (0..x.rows()).map(|i| x.id(i)).collect();
    let embeddings = match metric {
        Metric::Cosine => {
            let mut data = Vec::with_capacity(x.rows() * x.cols());
            for (i, row) in x.iter_rows().enumerate() {
                let normed = l2_normalize(row).map_err(|_| {
                    Error::DegenerateInput(format!(
                        "row {i} is the zero vector; cosine store needs nonzero rows"
                    ))
                })?;
                data.extend(normed);
            }
            let mut m = EmbeddingMatrix::new(x.rows(), x.cols(), data)?;
            if let Some(explicit) = x.explicit_ids() {
                m.set_ids(explicit.to_vec())?;
            }
            m
        }
        Metric::Euclidean => x.clone(),
    };
    Ok(VectorStore {
        embeddings,
        metric,
        normalized: metric == Metric::Cosine,
        ids,
    })
}

impl VectorStore {
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn doc_id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query has dimension {}, store has {}",
                q.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn distances(&self, q: &[f32]) -> Result<Vec<f64>> {
        self.check_query(q)?;
        if self.metric == Metric::Cosine && crate::distance::norm_f64(q) == 0.0 {
            return Err(Error::DegenerateInput(
                "cosine query is the zero vector".into(),
            ));
        }
        let rows = self.len();
        let out = map_indexed(rows, |i| {
            distance(q, self.embeddings.row(i), self.metric).expect("validated dims")
        });
        Ok(out)
    }

    /// Exact k nearest documents; ties broken by ascending doc id. Asking
    /// for more neighbors than documents truncates rather than failing.
    pub fn knn(&self, q: &[f32], k: usize) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let dists = self.distances(q)?;
        Ok(self.select_top_k(&dists, k))
    }

    // Bounded selection with a max-heap of size k; the brute-force oracle
    // in the tests sorts the whole list instead.
    fn select_top_k_indices(&self, dists: &[f64], k: usize) -> Vec<(usize, f64)> {
        use std::cmp::Ordering;
        use std::collections::BinaryHeap;

        struct Entry<'a>(f64, &'a str, usize);
        impl PartialEq for Entry<'_> {
            fn eq(&self, other: &Self) -> bool {
                self.0 == other.0 && self.1 == other.1
            }
        }
        impl Eq for Entry<'_> {}
        impl PartialOrd for Entry<'_> {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry<'_> {
            fn cmp(&self, other: &Self) -> Ordering {
                self.0
                    .partial_cmp(&other.0)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| self.1.cmp(other.1))
            }
        }

        let mut heap: BinaryHeap<Entry> = BinaryHeap::with_capacity(k + 1);
        for (i, &d) in dists.iter().enumerate() {
            heap.push(Entry(d, &self.ids[i], i));
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut picked: Vec<Entry> = heap.into_vec();
        picked.sort_by(|a, b| a.cmp(b));
        picked.into_iter().map(|Entry(d, _, i)| (i, d)).collect()
    }

    fn select_top_k(&self, dists: &[f64], k: usize) -> RetrievalResult {
        RetrievalResult {
            entries: self
                .select_top_k_indices(dists, k)
                .into_iter()
                .map(|(i, d)| (self.ids[i].clone(), d))
                .collect(),
            votes: false,
        }
    }

    /// Indices and distances of the k nearest documents.
    pub fn knn_indices(&self, q: &[f32], k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let dists = self.distances(q)?;
        Ok(self.select_top_k_indices(&dists, k))
    }

    /// Fuse N sample embeddings into one ranked list.
    pub fn multi_sample_retrieve(
        &self,
        samples: &EmbeddingMatrix,
        k: usize,
        mode: AggregationMode,
    ) -> Result<RetrievalResult> {
        if samples.rows() == 0 {
            return Err(Error::DegenerateInput("no samples to retrieve with".into()));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        match mode {
            AggregationMode::MinDistance => {
                let mut min_dist = vec![f64::INFINITY; self.len()];
                for s in samples.iter_rows() {
                    let d = self.distances(s)?;
                    for (m, v) in min_dist.iter_mut().zip(d) {
                        if v < *m {
                            *m = v;
                        }
                    }
                }
                Ok(self.select_top_k(&min_dist, k))
            }
            AggregationMode::Vote => {
                let mut votes = vec![0usize; self.len()];
                let mut min_dist = vec![f64::INFINITY; self.len()];
                for s in samples.iter_rows() {
                    let d = self.distances(s)?;
                    for (idx, dist) in self.select_top_k_indices(&d, k) {
                        votes[idx] += 1;
                        if dist < min_dist[idx] {
                            min_dist[idx] = dist;
                        }
                    }
                }
                let mut order: Vec<usize> = (0..self.len()).filter(|&i| votes[i] > 0).collect();
                order.sort_by(|&a, &b| {
                    votes[b]
                        .cmp(&votes[a])
                        .then_with(|| min_dist[a].partial_cmp(&min_dist[b]).unwrap())
                        .then_with(|| self.ids[a].cmp(&self.ids[b]))
                });
                Ok(RetrievalResult {
                    entries: order
                        .into_iter()
                        .take(k)
                        .map(|i| (self.ids[i].clone(), votes[i] as f64))
                        .collect(),
                    votes: true,
                })
            }
        }
    }
}

/// Multi-label assignment from samples against a store of one embedding
/// per class label.
#[derive(Debug, Clone)]
pub struct MultilabelAssignment {
    /// Labels whose frequency reached the threshold, in store order.
    pub labels: Vec<String>,
    /// (label, frequency) for every class; frequencies sum to 1.
    pub distribution: Vec<(String, f64)>,
}

/// For each sample find its single nearest class embedding, turn the
/// nearest-class counts into a frequency distribution, and assign every
/// label whose frequency is at least `threshold`.
pub fn multilabel_assign(
    class_store: &VectorStore,
    samples: &EmbeddingMatrix,
    threshold: f64,
) -> Result<MultilabelAssignment> {
    if samples.rows() == 0 {
        return Err(Error::DegenerateInput("no samples to assign from".into()));
    }
    let n = samples.rows() as f64;
    let mut counts = vec![0usize; class_store.len()];
    for s in samples.iter_rows() {
        let top = class_store.knn_indices(s, 1)?;
        counts[top[0].0] += 1;
    }
    let distribution: Vec<(String, f64)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (class_store.doc_id(i).to_string(), c as f64 / n))
        .collect();
    let labels = distribution
        .iter()
        .filter(|(_, f)| *f >= threshold)
        .map(|(l, _)| l.clone())
        .collect();
    Ok(MultilabelAssignment {
        labels,
        distribution,
    })
}
