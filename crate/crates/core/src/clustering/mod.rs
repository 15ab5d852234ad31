//! Document clustering for the characterizer.
//!
//! Retrieved texts are embedded, partitioned by a [`Clusterer`] (seeded
//! spherical k-means by default), labelled with their most cluster-specific
//! terms and summarized by the members nearest each cluster mean.

mod embed;
mod kmeans;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use embed::{EmbedError, Embedder, EmbeddingVector, HashEmbedder, HttpEmbedder};
pub use kmeans::SphericalKMeans;

use crate::retriever::tokenize;

/// Partitions vectors into groups of input positions.
pub trait Clusterer: Send + Sync {
    /// Every input position appears in exactly one returned group. Groups
    /// are non-empty; there are at most `max_clusters` of them.
    fn partition(&self, vectors: &[EmbeddingVector], max_clusters: usize, seed: u64) -> Vec<Vec<usize>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub label: String,
    /// Sorted ascending.
    pub member_doc_ids: Vec<String>,
    pub centroid_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Largest first; equal sizes ordered by smallest member id.
    pub clusters: Vec<Cluster>,
}

impl ClusterResult {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Number of clusters requested for `count` inputs: `min(m, ceil(sqrt(count/2)), count)`.
pub fn cluster_count(count: usize, max_clusters: usize) -> usize {
    let heuristic = (count as f64 / 2.0).sqrt().ceil() as usize;
    max_clusters.min(heuristic).min(count)
}

fn canonical_order(doc_ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..doc_ids.len()).collect();
    order.sort_by(|&a, &b| doc_ids[a].cmp(&doc_ids[b]));
    order
}

fn sorted_clusters(mut groups: Vec<Vec<String>>) -> Vec<Vec<String>> {
    for g in groups.iter_mut() {
        g.sort();
    }
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    groups
}

/// Partition with the given clusterer after a canonical sort by doc id, so
/// the result does not depend on input order. Labels and centroids are left
/// empty; see [`cluster_documents`] for the full pipeline.
pub fn cluster_with(
    clusterer: &dyn Clusterer,
    vectors: &[EmbeddingVector],
    doc_ids: &[String],
    max_clusters: usize,
    seed: u64,
) -> ClusterResult {
    assert_eq!(vectors.len(), doc_ids.len(), "one vector per document");
    if vectors.is_empty() {
        return ClusterResult::default();
    }
    let order = canonical_order(doc_ids);
    let sorted_vectors: Vec<EmbeddingVector> = order.iter().map(|&i| vectors[i].clone()).collect();
    let groups = clusterer.partition(&sorted_vectors, max_clusters.max(1), seed);
    let groups = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| g.into_iter().map(|p| doc_ids[order[p]].clone()).collect())
        .collect();
    ClusterResult {
        clusters: sorted_clusters(groups)
            .into_iter()
            .map(|member_doc_ids| Cluster {
                label: String::new(),
                member_doc_ids,
                centroid_doc_ids: Vec::new(),
            })
            .collect(),
    }
}

/// Seeded spherical k-means with the default settings.
pub fn cluster(vectors: &[EmbeddingVector], doc_ids: &[String], max_clusters: usize, seed: u64) -> ClusterResult {
    cluster_with(&SphericalKMeans::default(), vectors, doc_ids, max_clusters, seed)
}

/// The `min(n, size)` members nearest the normalized member mean by cosine,
/// nearest first, ties broken by doc id.
pub fn centroid_documents(member_ids: &[String], member_vectors: &[EmbeddingVector], n: usize) -> Vec<String> {
    if member_ids.is_empty() {
        return Vec::new();
    }
    let dim = member_vectors[0].dim();
    let mut sum = vec![0f64; dim];
    for v in member_vectors {
        for (s, x) in sum.iter_mut().zip(v.values()) {
            *s += f64::from(*x);
        }
    }
    let mean = EmbeddingVector::normalized(sum.into_iter().map(|x| x as f32).collect());
    let mut ranked: Vec<(f64, &String)> = member_ids
        .iter()
        .zip(member_vectors)
        .map(|(id, v)| (mean.cosine(v), id))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().take(n).map(|(_, id)| id.clone()).collect()
}

/// Top three terms by in-cluster count over whole-input count, joined by `_`.
/// Ties prefer the higher in-cluster count, then alphabetical order.
pub fn name_cluster<S: AsRef<str>>(member_texts: &[S], all_texts: &[S]) -> String {
    let count = |texts: &[S]| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for tok in tokenize(t.as_ref()) {
                *m.entry(tok).or_default() += 1;
            }
        }
        m
    };
    let inside = count(member_texts);
    let overall = count(all_texts);
    let mut scored: Vec<(f64, usize, &String)> = inside
        .iter()
        .map(|(term, &c)| {
            let total = overall.get(term).copied().unwrap_or(c).max(c);
            (c as f64 / total as f64, c, term)
        })
        .collect();
    if scored.is_empty() {
        return "unlabeled".to_owned();
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| b.1.cmp(&a.1))
            .then_with(|| a.2.cmp(b.2))
    });
    scored
        .into_iter()
        .take(3)
        .map(|(_, _, t)| t.as_str())
        .collect::<Vec<_>>()
        .join("_")
}

/// Embed, cluster, label and pick up to `n` centroid documents per cluster.
/// Only the `max_clusters` largest clusters are returned.
pub fn cluster_documents(
    docs: &[(String, String)],
    embedder: &dyn Embedder,
    clusterer: &dyn Clusterer,
    max_clusters: usize,
    n: usize,
    seed: u64,
) -> Result<ClusterResult, EmbedError> {
    if docs.is_empty() {
        return Ok(ClusterResult::default());
    }
    let texts: Vec<String> = docs.iter().map(|(_, t)| t.clone()).collect();
    let ids: Vec<String> = docs.iter().map(|(id, _)| id.clone()).collect();
    let vectors = embedder.embed(&texts)?;
    let by_id: BTreeMap<&str, (usize, &EmbeddingVector)> = ids
        .iter()
        .zip(&vectors)
        .enumerate()
        .map(|(i, (id, v))| (id.as_str(), (i, v)))
        .collect();

    let mut result = cluster_with(clusterer, &vectors, &ids, max_clusters, seed);
    result.clusters.truncate(max_clusters);
    for c in result.clusters.iter_mut() {
        let member_vectors: Vec<EmbeddingVector> =
            c.member_doc_ids.iter().map(|id| by_id[id.as_str()].1.clone()).collect();
        c.centroid_doc_ids = centroid_documents(&c.member_doc_ids, &member_vectors, n);
        let member_texts: Vec<&str> = c
            .member_doc_ids
            .iter()
            .map(|id| texts[by_id[id.as_str()].0].as_str())
            .collect();
        let all: Vec<&str> = texts.iter().map(String::as_str).collect();
        c.label = name_cluster(&member_texts, &all);
    }
    Ok(result)
}
