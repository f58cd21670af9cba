//! Numerical basis and observability diagnostics: conditioning of the
//! quasi-exponential Gram at/below/above the critical horizon, closeness tail
//! sums, and observability-constant estimation for the dual system.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quad::simpson_weights;
use crate::quasi_exp::QuasiExpFamily;
use crate::simulator::{h_minus1_norm_sq, simulate_dual};
use crate::sturm_liouville::EigenSystem;

/// Spectrum of the Hermitian Gram G_jk = int f_j conj(f_k) of the normalized
/// family {e_n^+-} on (0, T).
#[derive(Clone, Debug)]
pub struct GramSpectrum {
    pub horizon: f64,
    pub n_modes: usize,
    /// Descending; these are the singular values of the PSD Gram.
    pub singular_values: Vec<f64>,
    pub condition: f64,
    pub smallest: f64,
}

/// Quadrature weights for the diagnostics: composite Simpson when the sample
/// count allows it (odd), trapezoid otherwise. Simpson keeps the boundary
/// error at O(dt^4), low enough not to floor the deficiency trends below the
/// critical horizon.
fn quad_weights(len: usize, dt: f64) -> Vec<f64> {
    if len >= 3 && len % 2 == 1 {
        simpson_weights(len, dt)
    } else {
        let mut w = vec![dt; len];
        w[0] = 0.5 * dt;
        w[len - 1] = 0.5 * dt;
        w
    }
}

/// Full spectrum of the normalized-family Gram via Hermitian eigendecomposition.
pub fn gram_spectrum(families: &[QuasiExpFamily]) -> GramSpectrum {
    assert!(!families.is_empty());
    let grid = families[0].grid;
    let len = grid.len();
    let w = quad_weights(len, grid.dt());

    let mut rows: Vec<&[Complex64]> = Vec::with_capacity(2 * families.len());
    for fam in families {
        assert!(fam.grid.same_as(&grid), "families must share a grid");
        rows.push(&fam.e_plus);
        rows.push(&fam.e_minus);
    }
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| {
            let sq: f64 = (0..len).map(|j| w[j] * r[j].norm_sqr()).sum();
            sq.sqrt()
        })
        .collect();

    let dim = rows.len();
    let mut gram = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..len {
                acc += rows[i][k] * rows[j][k].conj() * w[k];
            }
            let v = acc / (norms[i] * norms[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
    }

    let mut eigs: Vec<f64> = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&x| x.max(0.0))
        .collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let largest = eigs[0];
    let smallest = eigs[dim - 1];
    GramSpectrum {
        horizon: grid.t_end(),
        n_modes: families.len(),
        condition: largest / smallest.max(1e-300),
        smallest,
        singular_values: eigs,
    }
}

/// Partial sums of the closeness tail with a convergence flag.
#[derive(Clone, Debug)]
pub struct TailSummary {
    pub partial_sums: Vec<f64>,
    /// Last increment relative to the running sum.
    pub last_increment_ratio: f64,
    /// True when the final increment is below 1e-3 of the running sum.
    pub converged: bool,
}

pub fn closeness_tail(report: &crate::quasi_exp::ClosenessReport) -> TailSummary {
    let sums = report.partial_sums.clone();
    let n = sums.len();
    let last_increment = if n >= 2 {
        sums[n - 1] - sums[n - 2]
    } else {
        sums.first().copied().unwrap_or(0.0)
    };
    let total = sums.last().copied().unwrap_or(0.0);
    let ratio = if total > 0.0 {
        last_increment / total
    } else {
        0.0
    };
    TailSummary {
        partial_sums: sums,
        last_increment_ratio: ratio,
        converged: ratio < 1e-3,
    }
}

/// Observability ratios r = ||v(0,.)||^2 / (||v0||^2 + ||v1||^2_{dual}) for
/// seeded random unit-norm dual data, together with the exact extremal
/// Rayleigh ratios of the boundary-trace quadratic form (the quantities the
/// observability estimates actually bound).
#[derive(Clone, Debug)]
pub struct ObservabilityReport {
    pub horizon: f64,
    pub n_modes: usize,
    pub seed: u64,
    /// Per-sample ratios of the random draws.
    pub ratios: Vec<f64>,
    /// Exact extremal ratios over all data in the truncated space.
    pub rayleigh_min: f64,
    pub rayleigh_max: f64,
    /// min/max over the random draws and the extremal directions together.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Run the scan: `n_samples` independent standard-normal coefficient draws
/// (normalized in the mixed norm), plus the exact extremal directions from
/// the generalized eigenproblem of the trace form against the data norm.
pub fn observability_scan(
    eig: &EigenSystem,
    families: &[QuasiExpFamily],
    n_samples: usize,
    seed: u64,
) -> Result<ObservabilityReport> {
    let m = eig.n_modes();
    assert_eq!(families.len(), m);
    let grid = families[0].grid;
    let len = grid.len();
    let w = quad_weights(len, grid.dt());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 {
        // Box-Muller on open-interval uniforms
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };

    let mut ratios = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut v0: Vec<f64> = (0..m).map(|_| normal()).collect();
        let mut v1: Vec<f64> = (0..m).map(|_| normal()).collect();
        let denom = v0.iter().map(|x| x * x).sum::<f64>() + h_minus1_norm_sq(eig, &v1);
        let scale = denom.sqrt();
        if scale > 0.0 {
            for x in v0.iter_mut() {
                *x /= scale;
            }
            for x in v1.iter_mut() {
                *x /= scale;
            }
        }
        let dual = simulate_dual(eig, families, &v0, &v1)?;
        let energy: f64 = (0..len).map(|j| w[j] * dual.trace[j] * dual.trace[j]).sum();
        let denom = dual.norm_v0_sq + dual.norm_v1_dual_sq;
        if denom <= 0.0 {
            return Err(Error::NonFinite(
                "observability sample normalization".into(),
            ));
        }
        ratios.push(energy / denom);
    }

    // boundary-trace rows per data coordinate: v0_n -> phi_n(0) c_n,
    // v1_n -> phi_n(0) s_n/omega_n
    let dim = 2 * m;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for (fam, &phi0) in families.iter().zip(&eig.phi0s) {
        rows.push(fam.c_re().iter().map(|x| phi0 * x).collect());
    }
    for (fam, &phi0) in families.iter().zip(&eig.phi0s) {
        rows.push(fam.s_over_omega_re().iter().map(|x| phi0 * x).collect());
    }
    // scale away the data norm: v1 coordinates carry weight 1/(1 + |lambda|)
    let scales: Vec<f64> = (0..m)
        .map(|_| 1.0)
        .chain(eig.lambdas.iter().map(|l| (1.0 + l.abs()).sqrt()))
        .collect();
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let mut acc = 0.0;
            for k in 0..len {
                acc += w[k] * rows[i][k] * rows[j][k];
            }
            let v = acc * scales[i] * scales[j];
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    let eigs = q.symmetric_eigen().eigenvalues;
    let rayleigh_min = eigs.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let rayleigh_max = eigs.iter().copied().fold(0.0f64, f64::max);

    let mut min_ratio = rayleigh_min;
    let mut max_ratio = rayleigh_max;
    for &r in &ratios {
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
    }

    Ok(ObservabilityReport {
        horizon: grid.t_end(),
        n_modes: m,
        seed,
        ratios,
        rayleigh_min,
        rayleigh_max,
        min_ratio,
        max_ratio,
    })
}
