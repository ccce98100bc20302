//! Separable 3D neighborhood filters with edge replication.
//!
//! Shared by feature extraction and the phantom generator. All filters are
//! deterministic with a fixed summation order.

/// Applies a 1D kernel along one axis; out-of-range taps replicate the edge.
fn convolve_axis(data: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = kernel.len() / 2;
    let mut out = vec![0.0; data.len()];
    let [nx, ny, nz] = dims;
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let n_axis = dims[axis] as isize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let pos = [x as isize, y as isize, z as isize];
                let mut acc = 0.0;
                for (k, &w) in kernel.iter().enumerate() {
                    let mut p = pos;
                    p[axis] = (p[axis] + k as isize - radius as isize).clamp(0, n_axis - 1);
                    acc += w * data[idx(p[0] as usize, p[1] as usize, p[2] as usize)];
                }
                out[idx(x, y, z)] = acc;
            }
        }
    }
    out
}

fn separable(data: &[f64], dims: [usize; 3], kernel: &[f64]) -> Vec<f64> {
    let mut cur = convolve_axis(data, dims, 0, kernel);
    cur = convolve_axis(&cur, dims, 1, kernel);
    convolve_axis(&cur, dims, 2, kernel)
}

/// Mean over the `(2r+1)^3` cube centered at each voxel.
pub fn box_mean(data: &[f64], dims: [usize; 3], radius: usize) -> Vec<f64> {
    let len = 2 * radius + 1;
    let kernel = vec![1.0 / len as f64; len];
    separable(data, dims, &kernel)
}

/// Population variance over the `(2r+1)^3` cube, clamped at zero.
pub fn box_variance(data: &[f64], dims: [usize; 3], radius: usize) -> Vec<f64> {
    let mean = box_mean(data, dims, radius);
    let squares: Vec<f64> = data.iter().map(|v| v * v).collect();
    let mean_sq = box_mean(&squares, dims, radius);
    mean.iter()
        .zip(&mean_sq)
        .map(|(m, q)| (q - m * m).max(0.0))
        .collect()
}

/// Normalized Gaussian kernel truncated at 3 sigma (voxel units).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "gaussian sigma must be positive");
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * (d / sigma).powi(2)).exp()
        })
        .collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}

/// Gaussian smoothing with sigma in voxel units.
pub fn gaussian_smooth(data: &[f64], dims: [usize; 3], sigma: f64) -> Vec<f64> {
    separable(data, dims, &gaussian_kernel(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force cube mean with clamped indices; the independent oracle
    /// for the separable implementation.
    fn box_mean_brute(data: &[f64], dims: [usize; 3], radius: isize) -> Vec<f64> {
        let [nx, ny, nz] = dims;
        let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
        let mut out = vec![0.0; data.len()];
        for z in 0..nz as isize {
            for y in 0..ny as isize {
                for x in 0..nx as isize {
                    let mut acc = 0.0;
                    let mut count = 0.0;
                    for dz in -radius..=radius {
                        for dy in -radius..=radius {
                            for dx in -radius..=radius {
                                let cx = (x + dx).clamp(0, nx as isize - 1) as usize;
                                let cy = (y + dy).clamp(0, ny as isize - 1) as usize;
                                let cz = (z + dz).clamp(0, nz as isize - 1) as usize;
                                acc += data[idx(cx, cy, cz)];
                                count += 1.0;
                            }
                        }
                    }
                    out[idx(x as usize, y as usize, z as usize)] = acc / count;
                }
            }
        }
        out
    }

    #[test]
    fn separable_box_matches_brute_force() {
        let dims = [5, 5, 5];
        let data: Vec<f64> = (0..125).map(|i| ((i * 37 + 11) % 17) as f64 / 16.0).collect();
        for radius in [1usize, 2] {
            let fast = box_mean(&data, dims, radius);
            let brute = box_mean_brute(&data, dims, radius as isize);
            for (a, b) in fast.iter().zip(&brute) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn spike_spreads_to_one_twenty_seventh() {
        let dims = [5, 5, 5];
        let mut data = vec![0.0; 125];
        data[2 + 5 * (2 + 5 * 2)] = 1.0;
        let smoothed = box_mean(&data, dims, 1);
        assert!((smoothed[1 + 5 * (2 + 5 * 2)] - 1.0 / 27.0).abs() < 1e-12);
        assert!((smoothed[2 + 5 * (2 + 5 * 2)] - 1.0 / 27.0).abs() < 1e-12);
        assert_eq!(smoothed[0], 0.0);
    }

    #[test]
    fn constant_volume_is_invariant() {
        let dims = [4, 3, 2];
        let data = vec![0.7; 24];
        for out in [
            box_mean(&data, dims, 2),
            gaussian_smooth(&data, dims, 1.5),
        ] {
            for v in out {
                assert!((v - 0.7).abs() < 1e-12);
            }
        }
        for v in box_variance(&data, dims, 2) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_kernel_normalized_and_symmetric() {
        for sigma in [1.0, 2.0] {
            let k = gaussian_kernel(sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..k.len() / 2 {
                assert!((k[i] - k[k.len() - 1 - i]).abs() < 1e-15);
            }
        }
    }
}
