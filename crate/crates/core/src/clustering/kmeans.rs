use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cluster_count, Clusterer, EmbeddingVector};

/// Spherical k-means: cosine assignment, unit-normalized mean centroids,
/// k-means++ seeding on cosine distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalKMeans {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SphericalKMeans {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

fn nearest(centroids: &[EmbeddingVector], v: &EmbeddingVector) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let sim = c.cosine(v);
        if sim > best_sim {
            best = i;
            best_sim = sim;
        }
    }
    best
}

fn seed_centroids(vectors: &[EmbeddingVector], k: usize, rng: &mut ChaCha8Rng) -> Vec<EmbeddingVector> {
    let mut centroids = vec![vectors[rng.gen_range(0..vectors.len())].clone()];
    while centroids.len() < k {
        let dist2: Vec<f64> = vectors
            .iter()
            .map(|v| {
                let d = centroids
                    .iter()
                    .map(|c| (1.0 - c.cosine(v)).max(0.0))
                    .fold(f64::INFINITY, f64::min);
                d * d
            })
            .collect();
        let total: f64 = dist2.iter().sum();
        if total <= 1e-12 {
            // every point coincides with a centroid already
            break;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = dist2.len() - 1;
        for (i, d) in dist2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centroids.push(vectors[pick].clone());
    }
    centroids
}

impl Clusterer for SphericalKMeans {
    fn partition(&self, vectors: &[EmbeddingVector], max_clusters: usize, seed: u64) -> Vec<Vec<usize>> {
        if vectors.is_empty() {
            return Vec::new();
        }
        let k = cluster_count(vectors.len(), max_clusters).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = seed_centroids(vectors, k, &mut rng);
        let dim = vectors[0].dim();
        let mut assignment: Vec<usize> = vectors.iter().map(|v| nearest(&centroids, v)).collect();

        for _ in 0..self.max_iterations {
            let mut sums = vec![vec![0f64; dim]; centroids.len()];
            let mut counts = vec![0usize; centroids.len()];
            for (v, &a) in vectors.iter().zip(&assignment) {
                counts[a] += 1;
                for (s, x) in sums[a].iter_mut().zip(v.values()) {
                    *s += f64::from(*x);
                }
            }
            let mut movement = 0f64;
            for (i, sum) in sums.into_iter().enumerate() {
                if counts[i] == 0 {
                    continue;
                }
                let updated = EmbeddingVector::normalized(sum.into_iter().map(|x| x as f32).collect());
                let shift: f64 = updated
                    .values()
                    .iter()
                    .zip(centroids[i].values())
                    .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                movement = movement.max(shift);
                centroids[i] = updated;
            }
            let next: Vec<usize> = vectors.iter().map(|v| nearest(&centroids, v)).collect();
            let stable = next == assignment;
            assignment = next;
            if stable || movement < self.tolerance {
                break;
            }
        }

        let mut groups = vec![Vec::new(); centroids.len()];
        for (i, a) in assignment.into_iter().enumerate() {
            groups[a].push(i);
        }
        groups.retain(|g| !g.is_empty());
        groups
    }
}
