//! Eigenvalue problem (alpha u')' + beta u + lambda rho u = 0 with
//! u'(0) = u(l) = 0, solved by shooting.
//!
//! Integration runs from x = 0 with u(0) = 1, u'(0) = 0; the characteristic
//! function is the (normalized) terminal value u(l; lambda). Brackets come
//! from the asymptotic guesses lambda_n ~ (pi (n - 1/2) / L)^2 and are
//! certified by Sturm oscillation counts before root refinement, so no root
//! is ever skipped or doubled. Normalization and Rayleigh integrals ride
//! along as extra quadrature states of the same adaptive integrator.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::medium::StringMedium;

/// Eigenvalues with |lambda| at or below this are treated as lambda = 0 and
/// flagged so downstream modules use the limit family {1, t}.
pub const LAMBDA_ZERO_TOL: f64 = 1e-12;

/// First `n_modes` eigenpairs of the string, plus boundary traces and the
/// optical length. Eigenfunctions are sampled on a shared uniform grid and
/// normalized to unit rho-weighted L2 norm with phi_n(0) > 0.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub lambdas: Vec<f64>,
    /// omega_n = sqrt(lambda_n); purely imaginary (positive imaginary part)
    /// when lambda_n < 0.
    pub omegas: Vec<Complex64>,
    pub phi0s: Vec<f64>,
    /// kappa_n = -alpha(0) * phi_n(0).
    pub kappas: Vec<f64>,
    /// `phi[n][j] = phi_n(x_grid[j])`.
    pub phi: Vec<Vec<f64>>,
    pub x_grid: Vec<f64>,
    pub rho_on_grid: Vec<f64>,
    /// Rayleigh quotient of each mode, integral(alpha phi'^2 - beta phi^2).
    pub rayleigh: Vec<f64>,
    pub optical_length: f64,
    pub t0: f64,
}

impl EigenSystem {
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn omega_is_zero(&self, n: usize) -> bool {
        self.lambdas[n].abs() <= LAMBDA_ZERO_TOL
    }

    /// |omega_n|, replaced by 1 for the zero mode; scaling used by the
    /// real-valued moment rows.
    pub fn omega_hat(&self, n: usize) -> f64 {
        if self.omega_is_zero(n) {
            1.0
        } else {
            self.omegas[n].norm()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EigOptions {
    /// Relative tolerance of the shooting integrator.
    pub rtol: f64,
    /// Spatial sample density, points per shortest mode wavelength.
    pub points_per_wavelength: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        // 343 points/wavelength keeps composite-Simpson products of the two
        // highest modes at the 1e-8 level
        EigOptions {
            rtol: 1e-12,
            points_per_wavelength: 343.0,
        }
    }
}

struct Context<'a> {
    medium: &'a StringMedium,
    rho_hi: f64,
    alpha_lo: f64,
    beta_hi_abs: f64,
}

impl<'a> Context<'a> {
    fn new(medium: &'a StringMedium) -> Self {
        let (_, rho_hi) = medium.rho.sampled_range();
        let (alpha_lo, _) = medium.alpha.sampled_range();
        let (beta_lo, beta_hi) = medium.beta.sampled_range();
        Context {
            medium,
            rho_hi,
            alpha_lo,
            beta_hi_abs: beta_lo.abs().max(beta_hi.abs()),
        }
    }

    /// Step cap guaranteeing at most one zero of u per accepted step.
    fn max_step(&self, lambda: f64) -> f64 {
        let k_sq = (lambda.max(0.0) * self.rho_hi + self.beta_hi_abs) / self.alpha_lo;
        let h_osc = if k_sq > 0.0 {
            0.45 * std::f64::consts::PI / k_sq.sqrt()
        } else {
            f64::INFINITY
        };
        h_osc.min(self.medium.length / 16.0)
    }
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

type State = [f64; 4]; // u, w = alpha u', q = int rho u^2, r = int (w^2/alpha - beta u^2)

fn rhs(medium: &StringMedium, lambda: f64, x: f64, y: &State) -> State {
    let rho = medium.rho.eval(x);
    let alpha = medium.alpha.eval(x);
    let beta = medium.beta.eval(x);
    let (u, w) = (y[0], y[1]);
    [
        w / alpha,
        -(beta + lambda * rho) * u,
        rho * u * u,
        w * w / alpha - beta * u * u,
    ]
}

struct ShootOutcome {
    u_end: f64,
    max_abs_u: f64,
    zeros: usize,
    q_end: f64,
    r_end: f64,
    samples: Vec<f64>,
}

/// Integrate the shooting system across [0, l], optionally recording u at
/// the given stop points (which must start at 0 and end at l).
fn shoot(ctx: &Context, lambda: f64, rtol: f64, stops: Option<&[f64]>) -> ShootOutcome {
    let l = ctx.medium.length;
    let atol = rtol * 1e-2;
    let h_cap = ctx.max_step(lambda);

    let mut y: State = [1.0, 0.0, 0.0, 0.0];
    let mut x = 0.0;
    let mut h = h_cap.min(l / 64.0);
    let mut zeros = 0usize;
    let mut max_abs_u: f64 = 1.0;
    let mut samples = Vec::new();
    let mut stop_iter = stops.map(|s| s.iter().copied().peekable());
    if let Some(it) = stop_iter.as_mut() {
        debug_assert_eq!(it.peek(), Some(&0.0));
        it.next();
        samples.push(y[0]);
    }

    let mut k: [State; 7] = [[0.0; 4]; 7];
    k[0] = rhs(ctx.medium, lambda, x, &y);

    while x < l {
        let next_stop = stop_iter
            .as_mut()
            .and_then(|it| it.peek().copied())
            .unwrap_or(l)
            .min(l);
        let mut h_try = h.min(h_cap).min(next_stop - x).max(1e-14 * l);

        // attempt steps until one is accepted
        let (y_new, err_norm, h_used) = loop {
            for s in 1..7 {
                let mut ys: State = y;
                for (j, yj) in ys.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (i, ki) in k.iter().enumerate().take(s) {
                        acc += A[s - 1][i] * ki[j];
                    }
                    *yj += h_try * acc;
                }
                let xs = x + h_try * C_NODES[s];
                k[s] = rhs(ctx.medium, lambda, xs, &ys);
            }
            let mut y5: State = y;
            let mut y4: State = y;
            for j in 0..4 {
                let mut a5 = 0.0;
                let mut a4 = 0.0;
                for i in 0..7 {
                    a5 += B5[i] * k[i][j];
                    a4 += B4[i] * k[i][j];
                }
                y5[j] += h_try * a5;
                y4[j] += h_try * a4;
            }
            let mut err_sq = 0.0;
            for j in 0..4 {
                let sc = atol + rtol * y[j].abs().max(y5[j].abs()).max(1.0);
                let e = (y5[j] - y4[j]) / sc;
                err_sq += e * e;
            }
            let err_norm = (err_sq / 4.0).sqrt();
            if err_norm <= 1.0 || h_try <= 1e-13 * l {
                break (y5, err_norm, h_try);
            }
            h_try *= (0.9 * err_norm.powf(-0.2)).clamp(0.2, 0.9);
        };

        if y_new[0].signum() != y[0].signum() && y[0] != 0.0 && y_new[0] != 0.0 {
            zeros += 1;
        }
        x += h_used;
        y = y_new;
        max_abs_u = max_abs_u.max(y[0].abs());
        // first stage of the next step
        k[0] = rhs(ctx.medium, lambda, x, &y);

        if let Some(it) = stop_iter.as_mut() {
            if let Some(&s) = it.peek() {
                if (x - s).abs() <= 1e-12 * l.max(1.0) {
                    samples.push(y[0]);
                    it.next();
                }
            }
        }

        let grow = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h_used * grow).min(h_cap);
    }

    ShootOutcome {
        u_end: y[0],
        max_abs_u,
        zeros,
        q_end: y[2],
        r_end: y[3],
        samples,
    }
}

const C_NODES: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

fn characteristic(ctx: &Context, lambda: f64, rtol: f64) -> (f64, usize) {
    let out = shoot(ctx, lambda, rtol, None);
    (out.u_end / out.max_abs_u, out.zeros)
}

/// Number of eigenvalues strictly below `lambda` (Sturm oscillation count).
fn count_below(ctx: &Context, lambda: f64) -> usize {
    let (_, zeros) = characteristic(ctx, lambda, 1e-8);
    zeros
}

/// Bracket the n-th eigenvalue (1-based) so the count jumps n-1 -> n across it.
fn bracket_mode(ctx: &Context, n: usize, guess: f64, spacing: f64) -> Result<(f64, f64)> {
    let mut lo = guess - 0.5 * spacing;
    let mut hi = guess + 0.5 * spacing;
    let mut step = spacing;
    for _ in 0..60 {
        if count_below(ctx, lo) < n {
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    if count_below(ctx, lo) > n - 1 {
        return Err(Error::Bracketing(format!("no lower bracket for mode {n}")));
    }
    step = spacing;
    for _ in 0..60 {
        if count_below(ctx, hi) >= n {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    if count_below(ctx, hi) < n {
        return Err(Error::Bracketing(format!("no upper bracket for mode {n}")));
    }
    // narrow until the bracket isolates exactly one sign change
    for _ in 0..80 {
        let clo = count_below(ctx, lo);
        let chi = count_below(ctx, hi);
        if clo == n - 1 && chi == n {
            return Ok((lo, hi));
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            return Err(Error::Bracketing(format!(
                "bracket for mode {n} collapsed with counts {clo}..{chi}"
            )));
        }
        if count_below(ctx, mid) < n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Bracketing(format!(
        "bracket search for mode {n} did not converge"
    )))
}

/// Safeguarded secant/bisection refinement of a bracketed root of F.
fn refine_root(
    ctx: &Context,
    rtol: f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
) -> Result<f64> {
    const FTOL: f64 = 1e-12;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracketing(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..120 {
        // secant proposal, safeguarded into the central 90% of the bracket
        let mut x = b - fb * (b - a) / (fb - fa);
        let lo = a + 0.05 * (b - a);
        let hi = b - 0.05 * (b - a);
        if !(x > lo && x < hi) {
            x = 0.5 * (a + b);
        }
        let (fx, _) = characteristic(ctx, x, rtol);
        if fx == 0.0 || fx.abs() <= FTOL {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// Solve for the first `n_modes` eigenpairs with default options.
pub fn solve_eigensystem(medium: &StringMedium, n_modes: usize) -> Result<EigenSystem> {
    solve_eigensystem_with(medium, n_modes, &EigOptions::default())
}

pub fn solve_eigensystem_with(
    medium: &StringMedium,
    n_modes: usize,
    opts: &EigOptions,
) -> Result<EigenSystem> {
    medium.validate()?;
    if n_modes < 1 {
        return Err(Error::validation("n_modes", "must be at least 1"));
    }
    let optical_length = crate::medium::optical_length(medium)?;
    let ctx = Context::new(medium);
    let base = std::f64::consts::PI / optical_length;
    let guess = |n: usize| (base * (n as f64 - 0.5)).powi(2);

    let lambdas: Vec<f64> = (1..=n_modes)
        .into_par_iter()
        .map(|n| {
            let g = guess(n);
            let spacing = if n == 1 {
                guess(2) - guess(1)
            } else {
                g - guess(n - 1)
            };
            let (lo, hi) = bracket_mode(&ctx, n, g, spacing)?;
            let (flo, _) = characteristic(&ctx, lo, opts.rtol);
            let (fhi, _) = characteristic(&ctx, hi, opts.rtol);
            refine_root(&ctx, opts.rtol, lo, hi, flo, fhi)
        })
        .collect::<Result<Vec<_>>>()?;

    for w in lambdas.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::EigenvalueOrdering(format!(
                "non-monotone eigenvalues {} then {}",
                w[0], w[1]
            )));
        }
    }

    // shared uniform sampling grid, sized from the top mode
    let lambda_max = lambdas[n_modes - 1].max(1.0);
    let k_hi = ((lambda_max * ctx.rho_hi + ctx.beta_hi_abs) / ctx.alpha_lo).sqrt();
    let per_wavelength = opts.points_per_wavelength.max(40.0);
    let mut intervals = ((medium.length * k_hi * per_wavelength / (2.0 * std::f64::consts::PI))
        .ceil() as usize)
        .max(2000);
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let x_grid: Vec<f64> = (0..=intervals)
        .map(|j| medium.length * j as f64 / intervals as f64)
        .collect();
    let rho_on_grid: Vec<f64> = x_grid.iter().map(|&x| medium.rho.eval(x)).collect();

    let modes: Vec<(Vec<f64>, f64, f64)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let out = shoot(&ctx, lambda, opts.rtol, Some(&x_grid));
            debug_assert_eq!(out.samples.len(), x_grid.len());
            let norm = out.q_end.sqrt();
            let phi: Vec<f64> = out.samples.iter().map(|u| u / norm).collect();
            (phi, 1.0 / norm, out.r_end / out.q_end)
        })
        .collect();

    let alpha0 = medium.alpha.eval(0.0);
    let mut phi = Vec::with_capacity(n_modes);
    let mut phi0s = Vec::with_capacity(n_modes);
    let mut kappas = Vec::with_capacity(n_modes);
    let mut rayleigh = Vec::with_capacity(n_modes);
    for (p, p0, r) in modes {
        phi.push(p);
        phi0s.push(p0);
        kappas.push(-alpha0 * p0);
        rayleigh.push(r);
    }

    let omegas: Vec<Complex64> = lambdas
        .iter()
        .map(|&l| {
            if l.abs() <= LAMBDA_ZERO_TOL {
                Complex64::new(0.0, 0.0)
            } else if l >= 0.0 {
                Complex64::new(l.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, (-l).sqrt())
            }
        })
        .collect();

    Ok(EigenSystem {
        lambdas,
        omegas,
        phi0s,
        kappas,
        phi,
        x_grid,
        rho_on_grid,
        rayleigh,
        optical_length,
        t0: 2.0 * optical_length,
    })
}

/// Deviations |omega_n - pi (n - 1/2) / L| from the asymptotic frequencies.
pub fn asymptotic_gap(eig: &EigenSystem) -> Vec<f64> {
    let base = std::f64::consts::PI / eig.optical_length;
    eig.omegas
        .iter()
        .enumerate()
        .map(|(i, om)| (om - Complex64::new(base * (i as f64 + 0.5), 0.0)).norm())
        .collect()
}

/// (min, max) of |phi_n(0)| over the computed modes.
pub fn trace_estimate(eig: &EigenSystem) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &p in &eig.phi0s {
        lo = lo.min(p.abs());
        hi = hi.max(p.abs());
    }
    if lo <= 1e-10 {
        return Err(Error::DegenerateTrace(format!(
            "min |phi_n(0)| = {lo:.3e}; boundary traces must stay bounded away from zero"
        )));
    }
    Ok((lo, hi))
}
