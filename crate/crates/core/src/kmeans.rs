//! Lloyd's k-means with k-means++ seeding over dense `f64` vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub clusters: usize,
    pub max_iterations: usize,
    /// Stop when inertia improves by less than this fraction.
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(clusters: usize, seed: u64) -> Self {
        KMeansParams {
            clusters,
            max_iterations: 100,
            tolerance: 1e-4,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub initial_centroids: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Index of the closest centroid; lower index wins ties.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (i, d) = nearest(p, centroids);
            inertia += d;
            i
        })
        .collect();
    (labels, inertia)
}

/// Means of the assigned points. An empty cluster takes over the point
/// farthest from its own centroid, which is then reassigned to it.
fn update(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    for c in 0..k {
        if counts[c] == 0 {
            let far = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| {
                    squared_distance(&points[a], &centroids[labels[a]])
                        .total_cmp(&squared_distance(&points[b], &centroids[labels[b]]))
                        .then(b.cmp(&a))
                });
            if let Some(i) = far {
                let old = labels[i];
                counts[old] -= 1;
                sums[old].iter_mut().zip(&points[i]).for_each(|(s, v)| *s -= v);
                labels[i] = c;
                counts[c] = 1;
                sums[c] = points[i].clone();
            }
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
}

pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansResult> {
    let k = params.clusters;
    if k == 0 {
        return Err(Error::invalid("cluster count must be >= 1"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("points must be finite and share one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let initial = kmeans_pp(points, k, &mut rng);
    let mut centroids = initial.clone();
    let (mut labels, mut inertia) = assign(points, &centroids);
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        update(points, &mut labels, &mut centroids);
        let (next, next_inertia) = assign(points, &centroids);
        let stable = next == labels;
        let small_gain = inertia - next_inertia <= params.tolerance * inertia.max(f64::MIN_POSITIVE);
        labels = next;
        inertia = next_inertia;
        if stable {
            break;
        }
        if small_gain {
            update(points, &mut labels, &mut centroids);
            inertia = points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| squared_distance(p, &centroids[l]))
                .sum();
            break;
        }
    }
    Ok(KMeansResult {
        initial_centroids: initial,
        centroids,
        assignments: labels,
        inertia,
        iterations,
    })
}
