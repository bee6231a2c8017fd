//! Elastic deformation of spectrogram matrices: smooth random displacement
//! fields resampled with bilinear interpolation. Used to augment training
//! data against within-speaker pitch variation.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::cqt::Spectrogram;

/// Gaussian-smooth a field with a normalized kernel of std `sigma`,
/// truncated at `4 * sigma`, separably along both axes. Near borders the
/// kernel is renormalized over the taps that fall inside the matrix, so the
/// smoothed field never exceeds the input field's range.
fn gaussian_smooth(field: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();

    let (rows, cols) = field.dim();
    let mut pass1 = Array2::zeros((rows, cols));
    for i in 0..rows as isize {
        for j in 0..cols {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let src = i + t as isize - radius;
                if src >= 0 && src < rows as isize {
                    acc += w * field[[src as usize, j]];
                    mass += w;
                }
            }
            pass1[[i as usize, j]] = acc / mass;
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols as isize {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let src = j + t as isize - radius;
                if src >= 0 && src < cols as isize {
                    acc += w * pass1[[i, src as usize]];
                    mass += w;
                }
            }
            out[[i, j as usize]] = acc / mass;
        }
    }
    out
}

/// Warp a matrix with seeded elastic displacement fields.
///
/// Two per-cell uniform `[-1, 1]` fields (row displacements first, then
/// column displacements) are Gaussian-smoothed with std `sigma`, scaled by
/// `alpha`, and used to resample the matrix bilinearly with clamped
/// borders. Output shape equals input shape; the result is deterministic in
/// `seed`.
pub fn elastic_warp(x: &Array2<f64>, sigma: f64, alpha: f64, seed: u64) -> Array2<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    assert!(alpha >= 0.0, "alpha must be non-negative");
    if alpha == 0.0 {
        return x.clone();
    }
    let (rows, cols) = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_field = |rng: &mut ChaCha8Rng| {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..=1.0))
    };
    let d_row = gaussian_smooth(&sample_field(&mut rng), sigma) * alpha;
    let d_col = gaussian_smooth(&sample_field(&mut rng), sigma) * alpha;

    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let src_i = (i as f64 + d_row[[i, j]]).clamp(0.0, (rows - 1) as f64);
        let src_j = (j as f64 + d_col[[i, j]]).clamp(0.0, (cols - 1) as f64);
        let i0 = src_i.floor() as usize;
        let j0 = src_j.floor() as usize;
        let i1 = (i0 + 1).min(rows - 1);
        let j1 = (j0 + 1).min(cols - 1);
        let fi = src_i - i0 as f64;
        let fj = src_j - j0 as f64;
        (1.0 - fi) * (1.0 - fj) * x[[i0, j0]]
            + (1.0 - fi) * fj * x[[i0, j1]]
            + fi * (1.0 - fj) * x[[i1, j0]]
            + fi * fj * x[[i1, j1]]
    })
}

/// [`elastic_warp`] applied to a spectrogram, keeping its axis metadata.
pub fn elastic_transform(spec: &Spectrogram, sigma: f64, alpha: f64, seed: u64) -> Spectrogram {
    Spectrogram {
        values: elastic_warp(&spec.values, sigma, alpha, seed),
        freq_axis: spec.freq_axis.clone(),
        frame_hop: spec.frame_hop,
        config: spec.config.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_is_identity() {
        let x = Array2::from_shape_fn((20, 15), |(i, j)| (i * 31 + j * 7) as f64);
        assert_eq!(elastic_warp(&x, 2.0, 0.0, 5), x);
    }

    #[test]
    fn deterministic_in_seed() {
        let x = Array2::from_shape_fn((30, 25), |(i, j)| ((i + 2 * j) % 13) as f64);
        let a = elastic_warp(&x, 2.0, 15.0, 42);
        let b = elastic_warp(&x, 2.0, 15.0, 42);
        assert_eq!(a, b);
        let c = elastic_warp(&x, 2.0, 15.0, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn delta_peak_moves_at_most_alpha_plus_one_cells() {
        let alpha = 15.0;
        let mut x = Array2::zeros((64, 64));
        x[[32, 32]] = 1.0;
        let warped = elastic_warp(&x, 2.0, alpha, 7);
        let bound = alpha.ceil() as isize + 1;
        for ((i, j), &v) in warped.indexed_iter() {
            if v.abs() > 1e-12 {
                assert!(
                    (i as isize - 32).abs() <= bound && (j as isize - 32).abs() <= bound,
                    "mass at ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn output_stays_within_input_bounds() {
        let x = Array2::from_shape_fn((40, 40), |(i, j)| ((i * j) % 17) as f64 - 5.0);
        let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        for seed in 0..5 {
            let warped = elastic_warp(&x, 2.0, 15.0, seed);
            for &v in warped.iter() {
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
