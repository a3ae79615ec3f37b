//! Three-cluster Lloyd iteration directly on RGB values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{luma, BinaryMask, WordImage};

pub const CLUSTERS: usize = 3;
pub const MAX_ITERATIONS: usize = 100;

/// Cluster subsets behind the six cluster candidates, in bank order.
pub const CLUSTER_SUBSETS: [&[u8]; 6] = [&[1], &[2], &[3], &[1, 2], &[1, 3], &[2, 3]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iterations: usize,
    /// Amplitude of uniform noise added to the initial centroids. Zero means
    /// no randomness, in which case the seed is unused.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iterations: MAX_ITERATIONS,
            jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub width: usize,
    pub height: usize,
    pub centroids: [[f64; 3]; CLUSTERS],
    /// Per-pixel cluster label in 1..=3.
    pub labels: Vec<u8>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    /// Set when the image has fewer than three distinct colours.
    pub degenerate: bool,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> [usize; CLUSTERS] {
        let mut sizes = [0; CLUSTERS];
        for &l in &self.labels {
            sizes[(l - 1) as usize] += 1;
        }
        sizes
    }

    /// Labels of clusters with no pixels.
    pub fn empty_clusters(&self) -> Vec<u8> {
        self.cluster_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(i, _)| i as u8 + 1)
            .collect()
    }
}

fn to_point(p: [u8; 3]) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

pub fn squared_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Index of the nearest centroid, lowest index on ties.
pub fn nearest(p: [f64; 3], centroids: &[[f64; 3]; CLUSTERS]) -> usize {
    let mut best = 0;
    let mut best_d = squared_distance(p, centroids[0]);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(p, *c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn distinct_colors(img: &WordImage, limit: usize) -> Vec<[u8; 3]> {
    let mut seen: Vec<[u8; 3]> = Vec::with_capacity(limit);
    for &p in img.pixels() {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() == limit {
                break;
            }
        }
    }
    seen
}

/// Pixels of minimum, median and maximum intensity, ties broken by scan order.
///
/// If two of those share a colour while the image has at least three
/// distinct colours, the duplicate is replaced by the colour farthest from
/// the centroids already chosen so every cluster starts non-empty.
fn initial_centroids(img: &WordImage) -> [[f64; 3]; CLUSTERS] {
    let px = img.pixels();
    let mut order: Vec<usize> = (0..px.len()).collect();
    order.sort_by(|&a, &b| luma(px[a]).total_cmp(&luma(px[b])).then(a.cmp(&b)));
    let picks = [order[0], order[(order.len() - 1) / 2], order[order.len() - 1]];
    let mut chosen: Vec<[u8; 3]> = Vec::with_capacity(CLUSTERS);
    let has_three = distinct_colors(img, CLUSTERS).len() == CLUSTERS;
    for &i in &picks {
        let c = px[i];
        if !chosen.contains(&c) || !has_three {
            chosen.push(c);
            continue;
        }
        let mut best: Option<([u8; 3], f64)> = None;
        for &p in px {
            if chosen.contains(&p) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&q| squared_distance(to_point(p), to_point(q)))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((p, d));
            }
        }
        chosen.push(best.map(|(p, _)| p).unwrap_or(c));
    }
    [to_point(chosen[0]), to_point(chosen[1]), to_point(chosen[2])]
}

fn assign(points: &[[f64; 3]], centroids: &[[f64; 3]; CLUSTERS], labels: &mut [u8]) -> f64 {
    let mut inertia = 0.0;
    for (p, label) in points.iter().zip(labels.iter_mut()) {
        let k = nearest(*p, centroids);
        *label = k as u8 + 1;
        inertia += squared_distance(*p, centroids[k]);
    }
    inertia
}

/// Mean of each cluster; empty clusters keep their previous centroid.
fn update(points: &[[f64; 3]], labels: &[u8], centroids: &mut [[f64; 3]; CLUSTERS]) {
    let mut sums = [[0.0; 3]; CLUSTERS];
    let mut counts = [0usize; CLUSTERS];
    for (p, &l) in points.iter().zip(labels) {
        let k = (l - 1) as usize;
        counts[k] += 1;
        for c in 0..3 {
            sums[k][c] += p[c];
        }
    }
    for k in 0..CLUSTERS {
        if counts[k] > 0 {
            for c in 0..3 {
                centroids[k][c] = sums[k][c] / counts[k] as f64;
            }
        }
    }
}

pub fn fit_three_clusters(img: &WordImage, seed: u64) -> ClusterModel {
    fit_three_clusters_with(
        img,
        &KMeansOptions {
            seed,
            ..KMeansOptions::default()
        },
    )
}

/// Lloyd's algorithm: assign, stop if the assignment did not change,
/// otherwise move centroids to cluster means. Labels always refer to the
/// returned centroids.
pub fn fit_three_clusters_with(img: &WordImage, opts: &KMeansOptions) -> ClusterModel {
    let points: Vec<[f64; 3]> = img.pixels().iter().map(|&p| to_point(p)).collect();
    let mut centroids = initial_centroids(img);
    if opts.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for c in centroids.iter_mut().flatten() {
            *c += rng.random_range(-opts.jitter..=opts.jitter);
        }
    }

    let mut labels = vec![0u8; points.len()];
    let mut previous: Option<Vec<u8>> = None;
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let inertia = assign(&points, &centroids, &mut labels);
        history.push(inertia);
        iterations += 1;
        let stable = previous.as_deref() == Some(labels.as_slice());
        if stable || iterations >= opts.max_iterations.max(1) {
            break;
        }
        update(&points, &labels, &mut centroids);
        previous = Some(labels.clone());
    }

    ClusterModel {
        width: img.width(),
        height: img.height(),
        centroids,
        inertia: *history.last().expect("at least one assignment"),
        inertia_history: history,
        labels,
        iterations,
        degenerate: distinct_colors(img, CLUSTERS).len() < CLUSTERS,
    }
}

/// Six masks in the order {1},{2},{3},{1,2},{1,3},{2,3}.
pub fn cluster_masks(model: &ClusterModel) -> [BinaryMask; 6] {
    CLUSTER_SUBSETS.map(|subset| {
        BinaryMask::new(
            model.width,
            model.height,
            model.labels.iter().map(|l| subset.contains(l)).collect(),
        )
        .expect("model dimensions are valid")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn image(w: usize, h: usize, px: Vec<[u8; 3]>) -> WordImage {
        WordImage::new("k", w, h, px).unwrap()
    }

    fn model_with_labels(labels: Vec<u8>) -> ClusterModel {
        ClusterModel {
            width: labels.len(),
            height: 1,
            centroids: [[0.0; 3]; 3],
            labels,
            inertia: 0.0,
            inertia_history: vec![0.0],
            iterations: 1,
            degenerate: false,
        }
    }

    #[test]
    fn three_colors_recovered_exactly() {
        let a = [200, 10, 10];
        let b = [10, 200, 10];
        let c = [10, 10, 200];
        let im = image(3, 2, vec![a, b, c, c, a, a]);
        let m = fit_three_clusters(&im, 0);
        assert!(!m.degenerate);
        assert_eq!(m.inertia, 0.0);
        let mut cents: Vec<[f64; 3]> = m.centroids.to_vec();
        cents.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut want = vec![to_point(a), to_point(b), to_point(c)];
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(cents, want);
    }

    #[test]
    fn equal_luma_colors_still_recovered() {
        // Two colours with identical luma and one darker: min/median/max
        // intensity picks could land on the same colour.
        let a = [0, 0, 0];
        let p = [0, 105, 249];
        let q = [21, 138, 24];
        assert_eq!(luma(p), luma(q));
        // median and max both land on q
        let im = image(5, 1, vec![a, p, q, p, q]);
        let m = fit_three_clusters(&im, 0);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn uniform_image_is_degenerate() {
        let im = WordImage::filled("u", 4, 4, [9, 9, 9]).unwrap();
        let m = fit_three_clusters(&im, 0);
        assert!(m.degenerate);
        assert_eq!(m.empty_clusters(), vec![2, 3]);
        assert!(m.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn random_image_nearest_centroid_and_monotone_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let px: Vec<[u8; 3]> = (0..16).map(|_| rng.random()).collect();
            let im = image(4, 4, px.clone());
            let m = fit_three_clusters(&im, 42);
            for (p, &l) in px.iter().zip(&m.labels) {
                let p = to_point(*p);
                let own = squared_distance(p, m.centroids[(l - 1) as usize]);
                for (k, c) in m.centroids.iter().enumerate() {
                    let d = squared_distance(p, *c);
                    assert!(own < d || (own == d && (l as usize - 1) <= k));
                }
            }
            for w in m.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            let direct: f64 = px
                .iter()
                .zip(&m.labels)
                .map(|(p, &l)| squared_distance(to_point(*p), m.centroids[(l - 1) as usize]))
                .sum();
            assert!((direct - m.inertia).abs() <= 1e-9 * direct.max(1.0));
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let px: Vec<[u8; 3]> = (0..30).map(|_| rng.random()).collect();
        let im = image(6, 5, px);
        let opts = KMeansOptions {
            jitter: 5.0,
            seed: 3,
            ..KMeansOptions::default()
        };
        assert_eq!(fit_three_clusters_with(&im, &opts), fit_three_clusters_with(&im, &opts));
    }

    #[test]
    fn masks_for_single_cluster() {
        let masks = cluster_masks(&model_with_labels(vec![1, 1, 1, 1]));
        let fg: Vec<usize> = masks.iter().map(|m| m.count_foreground()).collect();
        assert_eq!(fg, vec![4, 0, 0, 4, 4, 0]);
    }

    #[test]
    fn masks_enumerate_subsets() {
        let masks = cluster_masks(&model_with_labels(vec![1, 2, 3]));
        let bits: Vec<Vec<bool>> = masks.iter().map(|m| m.bits().to_vec()).collect();
        let t = true;
        let f = false;
        assert_eq!(
            bits,
            vec![
                vec![t, f, f],
                vec![f, t, f],
                vec![f, f, t],
                vec![t, t, f],
                vec![t, f, t],
                vec![f, t, t],
            ]
        );
    }

    #[test]
    fn masks_match_membership_and_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels: Vec<u8> = (0..50).map(|_| rng.random_range(1..=3)).collect();
        let masks = cluster_masks(&model_with_labels(labels.clone()));
        for (mask, subset) in masks.iter().zip(CLUSTER_SUBSETS) {
            for (i, l) in labels.iter().enumerate() {
                assert_eq!(mask.bits()[i], subset.contains(l));
            }
        }
        for i in 0..labels.len() {
            let hits = (0..3).filter(|&k| masks[k].bits()[i]).count();
            assert_eq!(hits, 1);
        }
    }
}
