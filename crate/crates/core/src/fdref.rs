//! Slow finite-difference reference eigensolver used to cross-check the
//! shooting solver. Lumped-mass P1 discretization on a uniform grid, Sturm
//! sequence bisection for the lowest eigenvalues, optional Richardson
//! extrapolation of the O(h^2) discretization error. Shares nothing with the
//! shooting path beyond coefficient evaluation.

use crate::medium::StringMedium;

struct Tridiag {
    diag: Vec<f64>,
    off: Vec<f64>,
}

/// Symmetrized lumped-mass discretization of
/// -(alpha u')' - beta u = lambda rho u, u'(0) = u(l) = 0.
fn assemble(medium: &StringMedium, cells: usize) -> Tridiag {
    let l = medium.length;
    let h = l / cells as f64;
    let n = cells; // unknowns at nodes 0..cells-1 (Dirichlet drops the last)
    let mut stiff_diag = vec![0.0; n];
    let mut stiff_off = vec![0.0; n - 1];
    let mut mass = vec![0.0; n];

    let alpha_mid: Vec<f64> = (0..cells)
        .map(|i| medium.alpha.eval((i as f64 + 0.5) * h))
        .collect();
    for i in 0..n {
        let x = i as f64 * h;
        let left = if i == 0 { 0.0 } else { alpha_mid[i - 1] };
        stiff_diag[i] = (left + alpha_mid[i]) / h;
        let lump = if i == 0 { 0.5 * h } else { h };
        stiff_diag[i] -= medium.beta.eval(x) * lump;
        mass[i] = medium.rho.eval(x) * lump;
        if i + 1 < n {
            stiff_off[i] = -alpha_mid[i] / h;
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| stiff_diag[i] / mass[i]).collect();
    let off: Vec<f64> = (0..n - 1)
        .map(|i| stiff_off[i] / (mass[i] * mass[i + 1]).sqrt())
        .collect();
    Tridiag { diag, off }
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(t: &Tridiag, x: f64) -> usize {
    let mut count = 0;
    let mut q = t.diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..t.diag.len() {
        let e2 = t.off[i - 1] * t.off[i - 1];
        let denom = if q.abs() < 1e-300 {
            1e-300_f64.copysign(q + 1e-300)
        } else {
            q
        };
        q = t.diag[i] - x - e2 / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn kth_eigenvalue(t: &Tridiag, k: usize) -> f64 {
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let n = t.diag.len();
    for i in 0..n {
        let r = (if i > 0 { t.off[i - 1].abs() } else { 0.0 })
            + (if i + 1 < n { t.off[i].abs() } else { 0.0 });
        lo = lo.min(t.diag[i] - r);
        hi = hi.max(t.diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(t, mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Lowest `n_modes` eigenvalues on a grid with `cells` cells.
pub fn fd_eigenvalues(medium: &StringMedium, n_modes: usize, cells: usize) -> Vec<f64> {
    let t = assemble(medium, cells);
    (0..n_modes).map(|k| kth_eigenvalue(&t, k)).collect()
}

/// Richardson-extrapolated eigenvalues from grids with `cells` and `2*cells`
/// cells; the O(h^2) error term cancels.
pub fn fd_eigenvalues_richardson(medium: &StringMedium, n_modes: usize, cells: usize) -> Vec<f64> {
    let coarse = fd_eigenvalues(medium, n_modes, cells);
    let fine = fd_eigenvalues(medium, n_modes, 2 * cells);
    coarse
        .iter()
        .zip(fine.iter())
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

/// Boundary trace |phi(0)| of mode `k` (0-based), normalized to unit
/// rho-weighted L2 norm, via inverse iteration at the converged eigenvalue.
pub fn fd_trace(medium: &StringMedium, k: usize, cells: usize) -> f64 {
    let t = assemble(medium, cells);
    let lam = kth_eigenvalue(&t, k);
    let n = t.diag.len();
    let h = medium.length / cells as f64;

    // inverse iteration on (B - lam I) with a small shift regularization
    let shift = lam + 1e-10 * (1.0 + lam.abs());
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
    for _ in 0..6 {
        v = solve_shifted(&t, shift, &v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    // undo the symmetrizing scaling: phi_i = v_i / sqrt(mass_i)
    let mass0 = medium.rho.eval(0.0) * 0.5 * h;
    let phi0 = v[0] / mass0.sqrt();
    // v is unit in the mass metric already (sum rho phi^2 lump = sum v^2 = 1)
    phi0.abs()
}

fn solve_shifted(t: &Tridiag, shift: f64, rhs: &[f64]) -> Vec<f64> {
    // Thomas algorithm on (B - shift I)
    let n = t.diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut b0 = t.diag[0] - shift;
    if b0.abs() < 1e-300 {
        b0 = 1e-300;
    }
    c[0] = if n > 1 { t.off[0] / b0 } else { 0.0 };
    d[0] = rhs[0] / b0;
    for i in 1..n {
        let mut m = t.diag[i] - shift - t.off[i - 1] * c[i - 1];
        if m.abs() < 1e-300 {
            m = 1e-300;
        }
        if i + 1 < n {
            c[i] = t.off[i] / m;
        }
        d[i] = (rhs[i] - t.off[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
