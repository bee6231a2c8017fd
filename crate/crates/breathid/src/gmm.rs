//! Diagonal-covariance Gaussian mixtures: EM-trained universal background
//! models, MAP mean adaptation and supervector assembly.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fraction of the global per-dimension variance used as the variance floor
/// in every M-step.
pub const VARIANCE_FLOOR_FRACTION: f64 = 1e-3;

/// A Gaussian mixture with diagonal covariances.
///
/// `weights` sum to one; `means` and `variances` are `C x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGmm {
    pub weights: Vec<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
}

impl DiagonalGmm {
    pub fn n_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Log density of `x` under component `c`.
    fn component_log_density(&self, c: usize, x: ArrayView1<f64>) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.dim() {
            let var = self.variances[[c, d]];
            let diff = x[d] - self.means[[c, d]];
            acc += (2.0 * std::f64::consts::PI * var).ln() + diff * diff / var;
        }
        -0.5 * acc
    }

    /// Per-frame log likelihood `log sum_c w_c N(x; mu_c, var_c)`.
    pub fn log_likelihood(&self, x: ArrayView1<f64>) -> f64 {
        let joint: Vec<f64> = (0..self.n_components())
            .map(|c| self.weights[c].ln() + self.component_log_density(c, x))
            .collect();
        log_sum_exp(&joint)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Posterior component probabilities of one frame, computed in log space
/// with max subtraction. Uniform rescaling of the weights cancels.
pub fn responsibilities(gmm: &DiagonalGmm, x: ArrayView1<f64>) -> Vec<f64> {
    let joint: Vec<f64> = (0..gmm.n_components())
        .map(|c| gmm.weights[c].ln() + gmm.component_log_density(c, x))
        .collect();
    let lse = log_sum_exp(&joint);
    joint.iter().map(|j| (j - lse).exp()).collect()
}

/// Per-dimension biased variance over all frames.
fn global_variance(frames: &Array2<f64>) -> Array1<f64> {
    let n = frames.nrows() as f64;
    let mean = frames.mean_axis(Axis(0)).expect("non-empty frames");
    let mut var = Array1::zeros(frames.ncols());
    for row in frames.rows() {
        for (d, &x) in row.iter().enumerate() {
            let diff = x - mean[d];
            var[d] += diff * diff;
        }
    }
    var / n
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a fixed number of Lloyd iterations.
fn kmeans_init(
    frames: &Array2<f64>,
    n_components: usize,
    lloyd_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let n = frames.nrows();
    let mut centers = Array2::zeros((n_components, frames.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&frames.row(first));

    let mut dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(frames.row(i), centers.row(0)))
        .collect();
    for c in 1..n_components {
        let total: f64 = dist2.iter().sum();
        let choice = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut picked = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if target < d {
                    picked = i;
                    break;
                }
                target -= d;
            }
            picked
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&frames.row(choice));
        for i in 0..n {
            dist2[i] = dist2[i].min(squared_distance(frames.row(i), centers.row(c)));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..lloyd_iters {
        for i in 0..n {
            assignment[i] = (0..n_components)
                .min_by(|&a, &b| {
                    squared_distance(frames.row(i), centers.row(a))
                        .total_cmp(&squared_distance(frames.row(i), centers.row(b)))
                })
                .unwrap();
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; n_components];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &frames.row(i);
        }
        for c in 0..n_components {
            if counts[c] > 0 {
                let mut row = centers.row_mut(c);
                row.assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
    }
    centers
}

/// Train a diagonal GMM by EM after k-means++ initialization.
///
/// Returns the model and the total log likelihood recorded at each E-step;
/// the sequence is non-decreasing up to the variance floor. Components that
/// collect no responsibility are re-seeded at the frame the current model
/// likes least.
pub fn em_train_gmm(
    frames: &Array2<f64>,
    n_components: usize,
    n_iters: usize,
    seed: u64,
) -> Result<(DiagonalGmm, Vec<f64>)> {
    let n = frames.nrows();
    let dim = frames.ncols();
    if n_components == 0 || n_iters == 0 {
        return Err(Error::InvalidParameter(
            "need at least one component and one iteration".into(),
        ));
    }
    if n < n_components {
        return Err(Error::InvalidParameter(format!(
            "{n} frames cannot support {n_components} mixture components"
        )));
    }

    let global_var = global_variance(frames);
    let floor = &global_var * VARIANCE_FLOOR_FRACTION;
    let floor = floor.mapv(|v| v.max(f64::MIN_POSITIVE));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans_init(frames, n_components, 10, &mut rng);
    let variances = Array2::from_shape_fn((n_components, dim), |(_, d)| {
        global_var[d].max(floor[d])
    });
    let mut gmm = DiagonalGmm {
        weights: vec![1.0 / n_components as f64; n_components],
        means,
        variances,
    };

    let mut log_likelihoods = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        // E-step.
        let mut total_ll = 0.0;
        let mut worst = (f64::INFINITY, 0usize);
        let mut counts = vec![0.0; n_components];
        let mut sums = Array2::<f64>::zeros((n_components, dim));
        let mut sq_sums = Array2::<f64>::zeros((n_components, dim));
        for i in 0..n {
            let x = frames.row(i);
            let gamma = responsibilities(&gmm, x);
            let ll = gmm.log_likelihood(x);
            total_ll += ll;
            if ll < worst.0 {
                worst = (ll, i);
            }
            for c in 0..n_components {
                let g = gamma[c];
                counts[c] += g;
                for d in 0..dim {
                    sums[[c, d]] += g * x[d];
                    sq_sums[[c, d]] += g * x[d] * x[d];
                }
            }
        }
        log_likelihoods.push(total_ll);

        // M-step with variance floor; empty components restart at the
        // lowest-likelihood frame.
        for c in 0..n_components {
            if counts[c] < 1e-8 {
                gmm.means.row_mut(c).assign(&frames.row(worst.1));
                for d in 0..dim {
                    gmm.variances[[c, d]] = global_var[d].max(floor[d]);
                }
                gmm.weights[c] = 1.0 / n as f64;
                continue;
            }
            for d in 0..dim {
                let mean = sums[[c, d]] / counts[c];
                let var = sq_sums[[c, d]] / counts[c] - mean * mean;
                gmm.means[[c, d]] = mean;
                gmm.variances[[c, d]] = var.max(floor[d]);
            }
            gmm.weights[c] = counts[c] / n as f64;
        }
        let weight_sum: f64 = gmm.weights.iter().sum();
        for w in &mut gmm.weights {
            *w /= weight_sum;
        }
    }
    Ok((gmm, log_likelihoods))
}

/// A stacked vector of adapted component means, component-major:
/// component 0's dimensions first, then component 1, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    pub values: Vec<f64>,
}

impl Supervector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// MAP-adapt the UBM means toward `frames` and stack them.
///
/// With soft counts `n_c` and posterior means `E_c`, each adapted mean is
/// `alpha_c E_c + (1 - alpha_c) mu_c` where `alpha_c = n_c / (n_c + relevance)`.
/// Weights and variances stay untouched.
pub fn map_adapt(ubm: &DiagonalGmm, frames: &Array2<f64>, relevance: f64) -> Result<Supervector> {
    if frames.nrows() == 0 {
        return Err(Error::InvalidParameter("empty frame set".into()));
    }
    if frames.ncols() != ubm.dim() {
        return Err(Error::DimensionMismatch {
            context: "map_adapt".into(),
            expected: format!("{}-dimensional frames", ubm.dim()),
            got: format!("{}-dimensional frames", frames.ncols()),
        });
    }
    if relevance < 0.0 {
        return Err(Error::InvalidParameter("relevance must be >= 0".into()));
    }
    let c_mix = ubm.n_components();
    let dim = ubm.dim();
    let mut counts = vec![0.0; c_mix];
    let mut sums = Array2::<f64>::zeros((c_mix, dim));
    for i in 0..frames.nrows() {
        let x = frames.row(i);
        let gamma = responsibilities(ubm, x);
        for c in 0..c_mix {
            counts[c] += gamma[c];
            for d in 0..dim {
                sums[[c, d]] += gamma[c] * x[d];
            }
        }
    }
    let mut values = Vec::with_capacity(c_mix * dim);
    for c in 0..c_mix {
        let alpha = if counts[c] > 0.0 {
            counts[c] / (counts[c] + relevance)
        } else {
            0.0
        };
        for d in 0..dim {
            let posterior_mean = if counts[c] > 0.0 {
                sums[[c, d]] / counts[c]
            } else {
                ubm.means[[c, d]]
            };
            values.push(alpha * posterior_mean + (1.0 - alpha) * ubm.means[[c, d]]);
        }
    }
    Ok(Supervector { values })
}
