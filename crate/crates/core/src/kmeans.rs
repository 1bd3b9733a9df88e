//! Seeded K-means on planar points.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Point = (f64, f64);

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<Point>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Index of the closest centroid, lowest index on ties.
pub fn nearest(p: Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    for (i, &c) in centroids.iter().enumerate().skip(1) {
        if dist2(p, c) < dist2(p, centroids[best]) {
            best = i;
        }
    }
    best
}

fn plus_plus(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut x = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if x < w {
                    idx = i;
                    break;
                }
                x -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, c));
        }
    }
    centroids
}

/// K-means with k-means++ seeding. Fewer points than `k` gives one
/// singleton cluster per point. Clusters that empty out are moved onto the
/// point farthest from its nearest centroid; when every point sits on a
/// centroid they stay empty.
pub fn kmeans(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Clustering {
    assert!(k >= 1, "k must be positive");
    if points.len() <= k {
        return Clustering {
            centroids: points.to_vec(),
            labels: (0..points.len()).collect(),
            iterations: 0,
        };
    }
    let mut centroids = plus_plus(points, k, rng);
    let mut labels: Vec<usize> = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        for (l, &p) in labels.iter_mut().zip(points) {
            let n = nearest(p, &centroids);
            changed |= *l != n;
            *l = n;
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&l, &p) in labels.iter().zip(points) {
            sums[l].0 += p.0;
            sums[l].1 += p.1;
            sums[l].2 += 1;
        }
        for c in 0..k {
            let (sx, sy, n) = sums[c];
            if n > 0 {
                centroids[c] = (sx / n as f64, sy / n as f64);
                continue;
            }
            let mut far = 0;
            let mut far_d = -1.0;
            for (i, &p) in points.iter().enumerate() {
                let d = dist2(p, centroids[labels[i]]);
                if d > far_d {
                    far = i;
                    far_d = d;
                }
            }
            if far_d > 0.0 {
                centroids[c] = points[far];
                labels[far] = c;
            }
        }
    }
    Clustering {
        centroids,
        labels,
        iterations,
    }
}
