//! Spectral simulation of the controlled string and of the dual (observed)
//! system, with terminal-state verification.
//!
//! Modal coefficients come from Duhamel convolutions against the
//! quasi-exponential families: a_n(t) = kappa_n (g * s_n/omega_n)(t),
//! a_n'(t) = kappa_n (g * c_n)(t), with g the memory-mapped control.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::medium::MemoryKernel;
use crate::quad::simpson;
use crate::quasi_exp::QuasiExpFamily;
use crate::sturm_liouville::EigenSystem;
use crate::volterra;

/// Modal trajectory of the controlled system.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// `a[n][j]` = a_n(t_j).
    pub a: Vec<Vec<f64>>,
    /// `adot[n][j]` = a_n'(t_j).
    pub adot: Vec<Vec<f64>>,
}

/// State at one time: modal coefficients plus the norm surrogates
/// sum n^2 |a_n|^2 (position, equivalence-class quantity) and
/// sum |a_n'|^2 (velocity, an exact identity).
#[derive(Clone, Debug)]
pub struct StateSnapshot {
    pub t: f64,
    pub a: Vec<f64>,
    pub adot: Vec<f64>,
    pub y_norm_h1_sq: f64,
    pub ydot_norm_h_sq: f64,
}

impl Trajectory {
    pub fn n_modes(&self) -> usize {
        self.a.len()
    }

    pub fn snapshot(&self, j: usize) -> StateSnapshot {
        let a: Vec<f64> = self.a.iter().map(|row| row[j]).collect();
        let adot: Vec<f64> = self.adot.iter().map(|row| row[j]).collect();
        let y_norm_h1_sq = a
            .iter()
            .enumerate()
            .map(|(n, v)| ((n + 1) * (n + 1)) as f64 * v * v)
            .sum();
        let ydot_norm_h_sq = adot.iter().map(|v| v * v).sum();
        StateSnapshot {
            t: self.grid.time(j),
            a,
            adot,
            y_norm_h1_sq,
            ydot_norm_h_sq,
        }
    }

    /// Terminal coefficients (a_n(T), a_n'(T)).
    pub fn terminal(&self) -> (Vec<f64>, Vec<f64>) {
        let j = self.grid.len() - 1;
        (
            self.a.iter().map(|r| r[j]).collect(),
            self.adot.iter().map(|r| r[j]).collect(),
        )
    }
}

/// Simulate the zero-initial-data system driven by the boundary control `f`
/// sampled on the family grid (grids must match exactly; no resampling).
pub fn simulate_forward(
    eig: &EigenSystem,
    families: &[QuasiExpFamily],
    kernel: &MemoryKernel,
    f: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory> {
    if f.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "control has {} samples, the grid {}",
            f.len(),
            grid.len()
        )));
    }
    for fam in families {
        if !fam.grid.same_as(grid) {
            return Err(Error::GridMismatch(
                "families were computed on a different grid than the control".into(),
            ));
        }
    }
    assert_eq!(families.len(), eig.n_modes());

    let g = volterra::apply_memory_map(f, kernel, grid)?;
    let dt = grid.dt();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = families
        .par_iter()
        .enumerate()
        .map(|(n, fam)| {
            let kappa = eig.kappas[n];
            let sigma = fam.s_over_omega_re();
            let c = fam.c_re();
            let mut a = volterra::convolve_trapezoid(&g, &sigma, dt);
            let mut adot = volterra::convolve_trapezoid(&g, &c, dt);
            for v in a.iter_mut() {
                *v *= kappa;
            }
            for v in adot.iter_mut() {
                *v *= kappa;
            }
            (a, adot)
        })
        .collect();

    let mut a = Vec::with_capacity(rows.len());
    let mut adot = Vec::with_capacity(rows.len());
    for (ar, dr) in rows {
        a.push(ar);
        adot.push(dr);
    }
    Ok(Trajectory {
        grid: *grid,
        a,
        adot,
    })
}

/// Relative terminal errors in the weighted norms; absolute errors reported
/// when the corresponding target part is zero.
#[derive(Clone, Debug)]
pub struct TerminalReport {
    pub e0: f64,
    pub e1: f64,
    pub e0_is_absolute: bool,
    pub e1_is_absolute: bool,
}

/// Compare a trajectory's terminal state against target coefficients:
/// e0 = ||n (a_n(T) - v0_n)||_2 / ||n v0_n||_2 and e1 the unweighted analogue
/// for the velocities.
pub fn verify_terminal(traj: &Trajectory, target: &crate::moment::TargetState) -> TerminalReport {
    let (a_t, adot_t) = traj.terminal();
    assert_eq!(a_t.len(), target.v0.len());
    let mut num0 = 0.0;
    let mut den0 = 0.0;
    let mut num1 = 0.0;
    let mut den1 = 0.0;
    for n in 0..a_t.len() {
        let wn = ((n + 1) * (n + 1)) as f64;
        num0 += wn * (a_t[n] - target.v0[n]).powi(2);
        den0 += wn * target.v0[n].powi(2);
        num1 += (adot_t[n] - target.v1[n]).powi(2);
        den1 += target.v1[n].powi(2);
    }
    // a weighted target norm below 1e-10 is numerically zero; relative errors
    // against it would compare roundoff with roundoff
    let e0_is_absolute = den0 <= 1e-20;
    let e1_is_absolute = den1 <= 1e-20;
    TerminalReport {
        e0: if e0_is_absolute {
            num0.sqrt()
        } else {
            (num0 / den0).sqrt()
        },
        e1: if e1_is_absolute {
            num1.sqrt()
        } else {
            (num1 / den1).sqrt()
        },
        e0_is_absolute,
        e1_is_absolute,
    }
}

/// Boundary trace of the dual system with initial data (v0, v1), plus the
/// data norms used by observability ratios.
#[derive(Clone, Debug)]
pub struct DualTrace {
    pub grid: TimeGrid,
    /// v(0, t) on the grid.
    pub trace: Vec<f64>,
    pub norm_v0_sq: f64,
    pub norm_v1_dual_sq: f64,
}

impl DualTrace {
    /// Trace energy ||v(0,.)||^2 over the horizon (composite Simpson).
    pub fn trace_energy(&self) -> f64 {
        let sq: Vec<f64> = self.trace.iter().map(|x| x * x).collect();
        simpson(&sq, self.grid.dt())
    }
}

/// Spectral surrogate of the dual-space norm: sum |v1_n|^2 / (1 + |lambda_n|).
/// Single definition point; the diagnostics module reuses it.
pub fn h_minus1_norm_sq(eig: &EigenSystem, v1: &[f64]) -> f64 {
    v1.iter()
        .zip(eig.lambdas.iter())
        .map(|(v, l)| v * v / (1.0 + l.abs()))
        .sum()
}

/// Simulate the dual (observed) system: modal coefficients
/// b_n(t) = v0_n c_n(t) + v1_n (s_n/omega_n)(t), boundary trace
/// v(0, t) = sum b_n(t) phi_n(0). The zero mode rides on the limit pair {1, t}.
pub fn simulate_dual(
    eig: &EigenSystem,
    families: &[QuasiExpFamily],
    v0: &[f64],
    v1: &[f64],
) -> Result<DualTrace> {
    let m = eig.n_modes();
    assert_eq!(families.len(), m);
    if v0.len() != m || v1.len() != m {
        return Err(Error::GridMismatch(format!(
            "dual data needs {m} coefficients, got {} / {}",
            v0.len(),
            v1.len()
        )));
    }
    let grid = families[0].grid;
    let len = grid.len();
    let mut trace = vec![0.0; len];
    for n in 0..m {
        let phi0 = eig.phi0s[n];
        let c = families[n].c_re();
        let sigma = families[n].s_over_omega_re();
        for j in 0..len {
            trace[j] += phi0 * (v0[n] * c[j] + v1[n] * sigma[j]);
        }
    }
    let norm_v0_sq = v0.iter().map(|x| x * x).sum();
    let norm_v1_dual_sq = h_minus1_norm_sq(eig, v1);
    Ok(DualTrace {
        grid,
        trace,
        norm_v0_sq,
        norm_v1_dual_sq,
    })
}
