//! Product-trapezoidal machinery for Volterra convolutions on uniform grids:
//! the running convolution used by the spectral simulator and the forward /
//! inverse maps between the physical and auxiliary controls.

use crate::error::Result;
use crate::grid::TimeGrid;
use crate::medium::MemoryKernel;

/// Running convolution `out[m]` = integral over (0, t_m) of a(tau) b(t_m - tau)
/// by the trapezoid rule on the shared grid; `out[0] = 0`.
pub fn convolve_trapezoid(a: &[f64], b: &[f64], dt: f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut out = vec![0.0; n];
    for m in 1..n {
        let mut sum = 0.5 * (a[0] * b[m] + a[m] * b[0]);
        for j in 1..m {
            sum += a[j] * b[m - j];
        }
        out[m] = sum * dt;
    }
    out
}

/// Forward control map g(t) = f(t) + integral_0^t N(t - tau) f(tau) d tau.
pub fn apply_memory_map(f: &[f64], kernel: &MemoryKernel, grid: &TimeGrid) -> Result<Vec<f64>> {
    assert_eq!(f.len(), grid.len());
    if kernel.is_zero() {
        return Ok(f.to_vec());
    }
    let n_samples = kernel.samples_on(grid)?;
    let conv = convolve_trapezoid(f, &n_samples, grid.dt());
    Ok(f.iter().zip(conv.iter()).map(|(fi, ci)| fi + ci).collect())
}

/// Inverse of [`apply_memory_map`]: solves the second-kind Volterra equation
/// f(t) + integral_0^t N(t - tau) f(tau) d tau = g(t) by marching with the
/// same product-trapezoid weights, so the two maps are mutually inverse on
/// the grid to rounding accuracy.
pub fn invert_memory_map(g: &[f64], kernel: &MemoryKernel, grid: &TimeGrid) -> Result<Vec<f64>> {
    assert_eq!(g.len(), grid.len());
    if kernel.is_zero() {
        return Ok(g.to_vec());
    }
    let n_samples = kernel.samples_on(grid)?;
    let dt = grid.dt();
    let n0 = n_samples[0];
    let mut f = vec![0.0; g.len()];
    f[0] = g[0];
    let diag = 1.0 + 0.5 * dt * n0;
    for m in 1..g.len() {
        let mut hist = 0.5 * f[0] * n_samples[m];
        for j in 1..m {
            hist += f[j] * n_samples[m - j];
        }
        f[m] = (g[m] - dt * hist) / diag;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> TimeGrid {
        TimeGrid::new(2.0, 1e-3).unwrap()
    }

    #[test]
    fn zero_kernel_is_identity() {
        let grid = grid();
        let f: Vec<f64> = grid.times().map(|t| (3.0 * t).sin()).collect();
        let g = apply_memory_map(&f, &MemoryKernel::Zero, &grid).unwrap();
        assert_eq!(f, g);
        assert_eq!(
            invert_memory_map(&g, &MemoryKernel::Zero, &grid).unwrap(),
            f
        );
    }

    #[test]
    fn constant_kernel_closed_form() {
        // N = c, f = 1  =>  g(t) = 1 + c t
        let grid = grid();
        let kernel = MemoryKernel::Polynomial { coeffs: vec![0.7] };
        let g: Vec<f64> = grid.times().map(|t| 1.0 + 0.7 * t).collect();
        let f = invert_memory_map(&g, &kernel, &grid).unwrap();
        for v in &f {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn forward_then_invert_round_trip() {
        let grid = grid();
        let kernel = MemoryKernel::Exponential { a: 0.4, eta: 1.0 };
        let f: Vec<f64> = grid.times().map(|t| (3.0 * t).sin()).collect();
        let g = apply_memory_map(&f, &kernel, &grid).unwrap();
        let back = invert_memory_map(&g, &kernel, &grid).unwrap();
        let err = f
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-8, "round-trip error {err:.3e}");
    }

    #[test]
    fn round_trip_all_kernel_variants() {
        let grid = TimeGrid::new(2.0, 2e-3).unwrap();
        let sampled = {
            let gpts: Vec<f64> = (0..=400).map(|i| i as f64 * 5e-3).collect();
            let vals: Vec<f64> = gpts.iter().map(|t| 0.3 * (-0.5 * t).exp()).collect();
            MemoryKernel::Sampled(crate::medium::SampledKernel::new(gpts, vals).unwrap())
        };
        for kernel in [
            MemoryKernel::Exponential { a: 0.4, eta: 1.0 },
            MemoryKernel::Polynomial {
                coeffs: vec![0.2, -0.1, 0.03],
            },
            sampled,
        ] {
            let f: Vec<f64> = grid.times().map(|t| (2.0 * t).cos() + 0.5 * t).collect();
            let g = apply_memory_map(&f, &kernel, &grid).unwrap();
            let back = invert_memory_map(&g, &kernel, &grid).unwrap();
            let err = f
                .iter()
                .zip(back.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let dt = grid.dt();
            assert!(
                err <= 10.0 * dt * dt,
                "round-trip error {err:.3e} for {kernel:?}"
            );
        }
    }
}
