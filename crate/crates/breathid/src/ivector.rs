//! Total-variability factor analysis over GMM supervector space:
//! Baum-Welch statistics, EM training of the loading matrix, i-vector
//! extraction, length normalization and LDA.
//!
//! The model treats each utterance's supervector as `m + T w` with a
//! standard-normal prior on `w`. With zeroth-order stats `N_c` and centered
//! first-order stats `f`, the posterior over `w` is Gaussian with precision
//! `L = I + T' Sigma^-1 N T` and mean `L^-1 T' Sigma^-1 f`; that posterior
//! mean is the i-vector.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gmm::{responsibilities, DiagonalGmm};

/// Per-utterance sufficient statistics against a UBM: soft counts and
/// responsibility-weighted sums centered on the UBM means.
#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchStats {
    /// `N_c = sum_t gamma_c(x_t)`, length `C`.
    pub zeroth: Vec<f64>,
    /// `F_c = sum_t gamma_c(x_t) (x_t - mu_c)`, shape `C x D`.
    pub first_centered: Array2<f64>,
}

/// Accumulate Baum-Welch statistics for one utterance.
pub fn collect_stats(ubm: &DiagonalGmm, frames: &Array2<f64>) -> Result<BaumWelchStats> {
    if frames.nrows() == 0 {
        return Err(Error::InvalidParameter("empty frame set".into()));
    }
    if frames.ncols() != ubm.dim() {
        return Err(Error::DimensionMismatch {
            context: "collect_stats".into(),
            expected: format!("{} dims", ubm.dim()),
            got: format!("{} dims", frames.ncols()),
        });
    }
    let c_mix = ubm.n_components();
    let dim = ubm.dim();
    let mut zeroth = vec![0.0; c_mix];
    let mut first = Array2::zeros((c_mix, dim));
    for i in 0..frames.nrows() {
        let x = frames.row(i);
        let gamma = responsibilities(ubm, x);
        for c in 0..c_mix {
            zeroth[c] += gamma[c];
            for d in 0..dim {
                first[[c, d]] += gamma[c] * (x[d] - ubm.means[[c, d]]);
            }
        }
    }
    Ok(BaumWelchStats {
        zeroth,
        first_centered: first,
    })
}

/// The trained factor-analysis model: global mean, loading matrix and the
/// UBM variances it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalVariabilityModel {
    /// Stacked UBM means, length `C * D`.
    pub mean: Vec<f64>,
    /// Loading matrix, shape `(C * D) x R`.
    pub loading: Array2<f64>,
    /// UBM variances, shape `C x D`.
    pub variances: Array2<f64>,
}

impl TotalVariabilityModel {
    pub fn rank(&self) -> usize {
        self.loading.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.variances.nrows()
    }

    pub fn dim(&self) -> usize {
        self.variances.ncols()
    }
}

/// The latent coordinate of an utterance in total-variability space.
#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    pub values: Vec<f64>,
}

fn check_stats_shape(model: &TotalVariabilityModel, stats: &BaumWelchStats) -> Result<()> {
    if stats.zeroth.len() != model.n_components() || stats.first_centered.dim() != (model.n_components(), model.dim()) {
        return Err(Error::DimensionMismatch {
            context: "i-vector extraction".into(),
            expected: format!("{} x {} stats", model.n_components(), model.dim()),
            got: format!(
                "{} x {} stats",
                stats.zeroth.len(),
                stats.first_centered.ncols()
            ),
        });
    }
    Ok(())
}

/// Per-component `T_c' Sigma_c^-1 T_c` blocks; the posterior precision of an
/// utterance is `I + sum_c N_c G_c`.
fn gram_blocks(model: &TotalVariabilityModel) -> Vec<DMatrix<f64>> {
    let rank = model.rank();
    let dim = model.dim();
    (0..model.n_components())
        .map(|c| {
            let mut g = DMatrix::zeros(rank, rank);
            for d in 0..dim {
                let row = c * dim + d;
                let inv_var = 1.0 / model.variances[[c, d]];
                for a in 0..rank {
                    let ta = model.loading[[row, a]] * inv_var;
                    for b in a..rank {
                        g[(a, b)] += ta * model.loading[[row, b]];
                    }
                }
            }
            for a in 0..rank {
                for b in 0..a {
                    g[(a, b)] = g[(b, a)];
                }
            }
            g
        })
        .collect()
}

fn precision_and_information(
    model: &TotalVariabilityModel,
    stats: &BaumWelchStats,
    grams: &[DMatrix<f64>],
) -> (DMatrix<f64>, DVector<f64>) {
    let rank = model.rank();
    let dim = model.dim();
    let mut precision = DMatrix::identity(rank, rank);
    let mut information = DVector::zeros(rank);
    for c in 0..model.n_components() {
        let n_c = stats.zeroth[c];
        if n_c != 0.0 {
            precision += &grams[c] * n_c;
        }
        for d in 0..dim {
            let row = c * dim + d;
            let weighted = stats.first_centered[[c, d]] / model.variances[[c, d]];
            if weighted != 0.0 {
                for a in 0..rank {
                    information[a] += model.loading[[row, a]] * weighted;
                }
            }
        }
    }
    (precision, information)
}

/// Posterior precision `L = I + T' Sigma^-1 N T` of one utterance.
/// Symmetric positive definite for every valid input.
pub fn posterior_precision(
    model: &TotalVariabilityModel,
    stats: &BaumWelchStats,
) -> Result<Array2<f64>> {
    check_stats_shape(model, stats)?;
    let grams = gram_blocks(model);
    let (precision, _) = precision_and_information(model, stats, &grams);
    Ok(Array2::from_shape_fn((model.rank(), model.rank()), |(i, j)| {
        precision[(i, j)]
    }))
}

/// Posterior-mean i-vector `w = L^-1 T' Sigma^-1 f`.
pub fn extract_ivector(
    stats: &BaumWelchStats,
    model: &TotalVariabilityModel,
) -> Result<IVector> {
    check_stats_shape(model, stats)?;
    let grams = gram_blocks(model);
    let (precision, information) = precision_and_information(model, stats, &grams);
    let chol = Cholesky::new(precision)
        .ok_or_else(|| Error::Other("posterior precision not positive definite".into()))?;
    let w = chol.solve(&information);
    Ok(IVector {
        values: w.iter().cloned().collect(),
    })
}

/// Marginal objective the EM iterations maximize, summed over utterances:
/// `1/2 (b' L^-1 b - log det L)` per utterance, dropping terms that do not
/// depend on the loading matrix.
pub fn tv_objective(stats: &[BaumWelchStats], model: &TotalVariabilityModel) -> Result<f64> {
    let grams = gram_blocks(model);
    let mut total = 0.0;
    for s in stats {
        check_stats_shape(model, s)?;
        let (precision, information) = precision_and_information(model, s, &grams);
        let chol = Cholesky::new(precision)
            .ok_or_else(|| Error::Other("posterior precision not positive definite".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let solved = chol.solve(&information);
        total += 0.5 * (information.dot(&solved) - log_det);
    }
    Ok(total)
}

/// EM-train the loading matrix from per-utterance statistics.
///
/// The global mean is fixed to the stacked UBM means and the loading matrix
/// starts as seeded Gaussian noise (std 0.01). Each iteration records the
/// marginal objective under the loading matrix it starts from; the sequence
/// is non-decreasing. A singular M-step system falls back to a small ridge.
pub fn train_total_variability(
    stats: &[BaumWelchStats],
    ubm: &DiagonalGmm,
    rank: usize,
    n_iters: usize,
    seed: u64,
) -> Result<(TotalVariabilityModel, Vec<f64>)> {
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    if stats.len() < rank {
        return Err(Error::InvalidParameter(format!(
            "{} utterances cannot estimate a rank-{rank} loading matrix",
            stats.len()
        )));
    }
    let c_mix = ubm.n_components();
    let dim = ubm.dim();
    let supervector_len = c_mix * dim;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let loading = Array2::from_shape_fn((supervector_len, rank), |_| normal.sample(&mut rng));
    let mut model = TotalVariabilityModel {
        mean: ubm.means.iter().cloned().collect(),
        loading,
        variances: ubm.variances.clone(),
    };

    let mut objectives = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let grams = gram_blocks(&model);

        // E-step: posterior moments per utterance, accumulated straight into
        // the per-component M-step systems.
        let mut objective = 0.0;
        let mut a_acc: Vec<DMatrix<f64>> = (0..c_mix).map(|_| DMatrix::zeros(rank, rank)).collect();
        let mut b_acc: Vec<DMatrix<f64>> = (0..c_mix).map(|_| DMatrix::zeros(dim, rank)).collect();
        for s in stats {
            check_stats_shape(&model, s)?;
            let (precision, information) = precision_and_information(&model, s, &grams);
            let chol = Cholesky::new(precision)
                .ok_or_else(|| Error::Other("posterior precision not positive definite".into()))?;
            let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            let mean = chol.solve(&information);
            objective += 0.5 * (information.dot(&mean) - log_det);
            let second_moment = chol.inverse() + &mean * mean.transpose();
            for c in 0..c_mix {
                if s.zeroth[c] != 0.0 {
                    a_acc[c] += &second_moment * s.zeroth[c];
                }
                for d in 0..dim {
                    let f = s.first_centered[[c, d]];
                    if f != 0.0 {
                        for r in 0..rank {
                            b_acc[c][(d, r)] += f * mean[r];
                        }
                    }
                }
            }
        }
        objectives.push(objective);

        // M-step: per component, T_c = B_c A_c^-1.
        for c in 0..c_mix {
            let solved = solve_mstep(&a_acc[c], &b_acc[c])?;
            for d in 0..dim {
                for r in 0..rank {
                    model.loading[[c * dim + d, r]] = solved[(d, r)];
                }
            }
        }
    }
    Ok((model, objectives))
}

/// Solve `X A = B` for X (i.e. `X = B A^-1`), adding a ridge when A is
/// singular.
fn solve_mstep(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // A is symmetric PSD; X A = B  <=>  A X' = B'.
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(chol.solve(&b.transpose()).transpose());
    }
    let ridged = a + DMatrix::identity(a.nrows(), a.ncols()) * 1e-8;
    Cholesky::new(ridged)
        .map(|chol| chol.solve(&b.transpose()).transpose())
        .ok_or_else(|| Error::Other("M-step system singular even with ridge".into()))
}

/// Center a set of i-vectors and scale each to unit length.
///
/// With `mean: None` the mean is fitted from the set (training); pass the
/// stored training mean for held-out data. A vector that lands on zero
/// after centering is reported by index.
pub fn center_length_normalize(
    vectors: &[IVector],
    mean: Option<&[f64]>,
) -> Result<(Vec<IVector>, Vec<f64>)> {
    if vectors.is_empty() {
        return Err(Error::InvalidParameter("empty i-vector set".into()));
    }
    let dim = vectors[0].values.len();
    let mean: Vec<f64> = match mean {
        Some(m) => {
            if m.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "center_length_normalize".into(),
                    expected: format!("mean of length {dim}"),
                    got: format!("mean of length {}", m.len()),
                });
            }
            m.to_vec()
        }
        None => {
            let mut m = vec![0.0; dim];
            for v in vectors {
                for (acc, x) in m.iter_mut().zip(&v.values) {
                    *acc += x;
                }
            }
            m.iter_mut().for_each(|x| *x /= vectors.len() as f64);
            m
        }
    };
    let mut out = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        let centered: Vec<f64> = v.values.iter().zip(&mean).map(|(x, m)| x - m).collect();
        let norm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::Other(format!(
                "i-vector {i} is zero after centering; cannot length-normalize"
            )));
        }
        out.push(IVector {
            values: centered.iter().map(|x| x / norm).collect(),
        });
    }
    Ok((out, mean))
}

/// A fitted LDA projection: basis columns are generalized eigenvectors of
/// the between/within scatter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaProjection {
    /// Shape `R x R'`.
    pub basis: Array2<f64>,
    /// Mean of the training vectors; subtracted before projecting.
    pub global_mean: Vec<f64>,
    /// Projected per-class means, shape `C x R'`.
    pub class_means: Option<Array2<f64>>,
}

impl LdaProjection {
    pub fn output_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Project one vector: `basis' (v - global_mean)`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let r_out = self.basis.ncols();
        let mut out = vec![0.0; r_out];
        for (i, (x, m)) in v.iter().zip(&self.global_mean).enumerate() {
            let centered = x - m;
            if centered != 0.0 {
                for (j, o) in out.iter_mut().enumerate() {
                    *o += self.basis[[i, j]] * centered;
                }
            }
        }
        out
    }
}

/// Fit LDA on labeled vectors (rows of `data`), keeping `out_dim`
/// directions. `out_dim` may not exceed `n_classes - 1`.
///
/// The generalized problem `(S_w + lambda I)^-1 S_b` is solved through a
/// Cholesky change of basis so only a symmetric eigendecomposition is
/// needed; `lambda = 1e-6 trace(S_w) / R` guards near-singular within-class
/// scatter.
pub fn lda_fit(data: &Array2<f64>, labels: &[usize], out_dim: usize) -> Result<LdaProjection> {
    let n = data.nrows();
    let dim = data.ncols();
    if n == 0 || labels.len() != n {
        return Err(Error::InvalidParameter(
            "need one label per data row".into(),
        ));
    }
    let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut class_counts = vec![0usize; n_classes];
    for &l in labels {
        class_counts[l] += 1;
    }
    if class_counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidParameter(
            "class labels must be contiguous 0..n_classes".into(),
        ));
    }
    if n_classes < 2 {
        return Err(Error::InvalidParameter("LDA needs at least 2 classes".into()));
    }
    if out_dim == 0 || out_dim > n_classes - 1 {
        return Err(Error::InvalidParameter(format!(
            "LDA output dimension {out_dim} must lie in 1..={}",
            n_classes - 1
        )));
    }

    let global_mean = data.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let mut class_means = Array2::<f64>::zeros((n_classes, dim));
    for (i, &l) in labels.iter().enumerate() {
        let mut row = class_means.row_mut(l);
        row += &data.row(i);
    }
    for (c, &count) in class_counts.iter().enumerate() {
        let mut row = class_means.row_mut(c);
        row /= count as f64;
    }

    let mut s_w = DMatrix::<f64>::zeros(dim, dim);
    for (i, &l) in labels.iter().enumerate() {
        let diff: Vec<f64> = (0..dim).map(|d| data[[i, d]] - class_means[[l, d]]).collect();
        for a in 0..dim {
            for b in 0..dim {
                s_w[(a, b)] += diff[a] * diff[b];
            }
        }
    }
    let mut s_b = DMatrix::<f64>::zeros(dim, dim);
    for c in 0..n_classes {
        let diff: Vec<f64> = (0..dim).map(|d| class_means[[c, d]] - global_mean[d]).collect();
        for a in 0..dim {
            for b in 0..dim {
                s_b[(a, b)] += class_counts[c] as f64 * diff[a] * diff[b];
            }
        }
    }

    let lambda = 1e-6 * s_w.trace() / dim as f64;
    for d in 0..dim {
        s_w[(d, d)] += lambda.max(1e-12);
    }

    let chol = Cholesky::new(s_w)
        .ok_or_else(|| Error::Other("within-class scatter not positive definite".into()))?;
    let l = chol.l();
    // M = L^-1 S_b L^-T is symmetric with the same eigenvalues as the
    // generalized pair; its eigenvectors map back through L^-T.
    let x = l
        .clone()
        .solve_lower_triangular(&s_b)
        .ok_or_else(|| Error::Other("triangular solve failed".into()))?;
    let m = l
        .clone()
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Other("triangular solve failed".into()))?
        .transpose();
    let m = (&m + m.transpose()) * 0.5;

    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = Array2::zeros((dim, out_dim));
    for (j, &idx) in order.iter().take(out_dim).enumerate() {
        let u = eig.eigenvectors.column(idx).clone_owned();
        let v = l
            .transpose()
            .solve_upper_triangular(&u)
            .ok_or_else(|| Error::Other("triangular solve failed".into()))?;
        for i in 0..dim {
            basis[[i, j]] = v[i];
        }
    }

    let mut projection = LdaProjection {
        basis,
        global_mean: global_mean.to_vec(),
        class_means: None,
    };
    let mut projected_means = Array2::zeros((n_classes, out_dim));
    for c in 0..n_classes {
        let p = projection.project(class_means.row(c).as_slice().unwrap());
        for (j, v) in p.iter().enumerate() {
            projected_means[[c, j]] = *v;
        }
    }
    projection.class_means = Some(projected_means);
    Ok(projection)
}
