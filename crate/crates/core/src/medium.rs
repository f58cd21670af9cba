//! Material data of the string: piecewise-polynomial coefficients, the memory
//! kernel, run configuration, and the optical length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Piecewise cubic polynomial on a breakpoint mesh spanning `[0, l]`.
///
/// Segment `i` evaluates `c0 + c1*u + c2*u^2 + c3*u^3` with `u = x - mesh[i]`.
/// Values must be continuous across breakpoints (1e-12 absolute); a jump in
/// the first derivative above 1e-6 is legal but logged, since downstream
/// spectral asymptotics assume smooth coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientFunction {
    mesh: Vec<f64>,
    segments: Vec<[f64; 4]>,
}

impl CoefficientFunction {
    pub fn new(mesh: Vec<f64>, segments: Vec<[f64; 4]>) -> Result<Self> {
        let f = CoefficientFunction { mesh, segments };
        f.validate("coefficient")?;
        Ok(f)
    }

    pub fn constant(value: f64, length: f64) -> Self {
        CoefficientFunction {
            mesh: vec![0.0, length],
            segments: vec![[value, 0.0, 0.0, 0.0]],
        }
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn segments(&self) -> &[[f64; 4]] {
        &self.segments
    }

    pub(crate) fn validate(&self, field: &str) -> Result<()> {
        if self.mesh.len() < 2 {
            return Err(Error::validation(
                format!("{field}.mesh"),
                "needs at least two breakpoints",
            ));
        }
        if self.segments.len() != self.mesh.len() - 1 {
            return Err(Error::validation(
                format!("{field}.segments"),
                format!(
                    "expected {} segments for {} breakpoints, got {}",
                    self.mesh.len() - 1,
                    self.mesh.len(),
                    self.segments.len()
                ),
            ));
        }
        if self.mesh[0].abs() > 1e-12 {
            return Err(Error::validation(
                format!("{field}.mesh"),
                format!("must start at 0, got {}", self.mesh[0]),
            ));
        }
        for w in self.mesh.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::validation(
                    format!("{field}.mesh"),
                    format!(
                        "breakpoints must be strictly increasing, got {} then {}",
                        w[0], w[1]
                    ),
                ));
            }
        }
        for (i, w) in self
            .mesh
            .windows(2)
            .enumerate()
            .take(self.segments.len() - 1)
        {
            let h = w[1] - w[0];
            let left = poly_eval(&self.segments[i], h);
            let right = self.segments[i + 1][0];
            if (left - right).abs() > 1e-12 {
                return Err(Error::validation(
                    format!("{field}.segments"),
                    format!(
                        "value jump {:.3e} at breakpoint x = {}",
                        (left - right).abs(),
                        w[1]
                    ),
                ));
            }
            let dleft = poly_deriv(&self.segments[i], h);
            let dright = self.segments[i + 1][1];
            if (dleft - dright).abs() > 1e-6 {
                log::warn!(
                    "{field}: first-derivative jump {:.3e} at x = {}; spectral asymptotics assume smooth coefficients",
                    (dleft - dright).abs(),
                    w[1]
                );
            }
        }
        Ok(())
    }

    fn segment_index(&self, x: f64) -> usize {
        match self.mesh.binary_search_by(|m| m.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.segments.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.segments.len() - 1),
        }
    }

    /// Value at `x` (clamped to the mesh span).
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment_index(x);
        poly_eval(&self.segments[i], x - self.mesh[i])
    }

    /// First derivative at `x`.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let i = self.segment_index(x);
        poly_deriv(&self.segments[i], x - self.mesh[i])
    }

    pub fn domain_end(&self) -> f64 {
        *self.mesh.last().unwrap()
    }

    /// Extrema bracket obtained by dense sampling (129 points per segment).
    pub fn sampled_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, w) in self.mesh.windows(2).enumerate() {
            for k in 0..=128 {
                let x = w[0] + (w[1] - w[0]) * k as f64 / 128.0;
                let v = poly_eval(&self.segments[i], x - self.mesh[i]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

fn poly_eval(c: &[f64; 4], u: f64) -> f64 {
    ((c[3] * u + c[2]) * u + c[1]) * u + c[0]
}

fn poly_deriv(c: &[f64; 4], u: f64) -> f64 {
    (3.0 * c[3] * u + 2.0 * c[2]) * u + c[1]
}

/// Density, elastic modulus and potential of the string on `[0, length]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StringMedium {
    pub length: f64,
    pub rho: CoefficientFunction,
    pub alpha: CoefficientFunction,
    pub beta: CoefficientFunction,
}

impl StringMedium {
    pub fn new(
        length: f64,
        rho: CoefficientFunction,
        alpha: CoefficientFunction,
        beta: CoefficientFunction,
    ) -> Result<Self> {
        let m = StringMedium {
            length,
            rho,
            alpha,
            beta,
        };
        m.validate()?;
        Ok(m)
    }

    /// Uniform medium (rho = alpha = 1, beta = 0) of unit length.
    pub fn uniform_unit() -> Self {
        StringMedium {
            length: 1.0,
            rho: CoefficientFunction::constant(1.0, 1.0),
            alpha: CoefficientFunction::constant(1.0, 1.0),
            beta: CoefficientFunction::constant(0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::validation(
                "medium.length",
                format!("must be positive, got {}", self.length),
            ));
        }
        for (name, f) in [
            ("medium.rho", &self.rho),
            ("medium.alpha", &self.alpha),
            ("medium.beta", &self.beta),
        ] {
            f.validate(name)?;
            if (f.domain_end() - self.length).abs() > 1e-12 * self.length.max(1.0) {
                return Err(Error::validation(
                    format!("{name}.mesh"),
                    format!(
                        "must end at the string length {}, got {}",
                        self.length,
                        f.domain_end()
                    ),
                ));
            }
        }
        for (name, f) in [("medium.rho", &self.rho), ("medium.alpha", &self.alpha)] {
            let (lo, _) = f.sampled_range();
            if lo <= 0.0 {
                return Err(Error::validation(
                    name,
                    format!("must be strictly positive, sampled minimum {lo}"),
                ));
            }
        }
        Ok(())
    }
}

/// Optical length L = integral of sqrt(rho/alpha) over the string: the travel
/// time of waves along it. The critical control horizon is `2 * L`.
pub fn optical_length(medium: &StringMedium) -> Result<f64> {
    let mut breaks: Vec<f64> = medium
        .rho
        .mesh()
        .iter()
        .chain(medium.alpha.mesh().iter())
        .copied()
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += quad::adaptive(
            |x| {
                let r = medium.rho.eval(x);
                let a = medium.alpha.eval(x);
                if r <= 0.0 {
                    return Err(Error::CoefficientPositivity {
                        name: "rho",
                        x,
                        value: r,
                    });
                }
                if a <= 0.0 {
                    return Err(Error::CoefficientPositivity {
                        name: "alpha",
                        x,
                        value: a,
                    });
                }
                Ok((r / a).sqrt())
            },
            w[0],
            w[1],
            1e-11,
        )?;
    }
    Ok(total)
}

/// Memory kernel N(t); `eval` returns `(N(t), N'(t))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MemoryKernel {
    Zero,
    Exponential { a: f64, eta: f64 },
    Polynomial { coeffs: Vec<f64> },
    Sampled(SampledKernel),
}

impl MemoryKernel {
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        match self {
            MemoryKernel::Zero => Ok((0.0, 0.0)),
            MemoryKernel::Exponential { a, eta } => {
                let e = (-eta * t).exp();
                Ok((a * e, -a * eta * e))
            }
            MemoryKernel::Polynomial { coeffs } => {
                let mut v = 0.0;
                let mut d = 0.0;
                for &c in coeffs.iter().rev() {
                    d = d * t + v;
                    v = v * t + c;
                }
                Ok((v, d))
            }
            MemoryKernel::Sampled(s) => s.eval(t),
        }
    }

    /// N(0).
    pub fn n0(&self) -> f64 {
        match self {
            MemoryKernel::Zero => 0.0,
            MemoryKernel::Exponential { a, .. } => *a,
            MemoryKernel::Polynomial { coeffs } => coeffs.first().copied().unwrap_or(0.0),
            MemoryKernel::Sampled(s) => s.values[0],
        }
    }

    /// nu = N(0) / 2, the growth rate appearing in the reference exponents.
    pub fn nu(&self) -> f64 {
        0.5 * self.n0()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MemoryKernel::Zero)
    }

    /// Kernel values on a uniform grid (bulk evaluation for convolutions).
    pub fn samples_on(&self, grid: &crate::grid::TimeGrid) -> Result<Vec<f64>> {
        grid.times().map(|t| Ok(self.eval(t)?.0)).collect()
    }

    pub(crate) fn validate(&self, horizon: f64) -> Result<()> {
        match self {
            MemoryKernel::Sampled(s) => {
                s.validate()?;
                if s.grid[s.grid.len() - 1] < horizon - 1e-12 {
                    return Err(Error::validation(
                        "kernel.grid",
                        format!(
                            "must cover [0, {horizon}], ends at {}",
                            s.grid[s.grid.len() - 1]
                        ),
                    ));
                }
                Ok(())
            }
            MemoryKernel::Exponential { eta, .. } if !eta.is_finite() => {
                Err(Error::validation("kernel.eta", "must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// Tabulated kernel with a natural cubic spline through the samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampledKernelRaw", into = "SampledKernelRaw")]
pub struct SampledKernel {
    grid: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SampledKernelRaw {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<SampledKernelRaw> for SampledKernel {
    type Error = Error;
    fn try_from(raw: SampledKernelRaw) -> Result<Self> {
        SampledKernel::new(raw.grid, raw.values)
    }
}

impl From<SampledKernel> for SampledKernelRaw {
    fn from(k: SampledKernel) -> Self {
        SampledKernelRaw {
            grid: k.grid,
            values: k.values,
        }
    }
}

impl SampledKernel {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mut k = SampledKernel {
            grid,
            values,
            second: Vec::new(),
        };
        k.validate()?;
        k.second = natural_spline_second_derivatives(&k.grid, &k.values);
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if self.grid.len() < 3 || self.grid.len() != self.values.len() {
            return Err(Error::validation(
                "kernel.grid",
                format!(
                    "need >= 3 matching samples, got {} / {}",
                    self.grid.len(),
                    self.values.len()
                ),
            ));
        }
        if self.grid[0].abs() > 1e-12 {
            return Err(Error::validation(
                "kernel.grid",
                format!("must start at 0, got {}", self.grid[0]),
            ));
        }
        for w in self.grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::validation(
                    "kernel.grid",
                    "must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let n = self.grid.len();
        if t < self.grid[0] - 1e-12 || t > self.grid[n - 1] + 1e-12 {
            return Err(Error::Domain(format!(
                "kernel sampled on [{}, {}], asked at t = {t}",
                self.grid[0],
                self.grid[n - 1]
            )));
        }
        let i = match self.grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.grid[i + 1] - self.grid[i];
        let a = (self.grid[i + 1] - t) / h;
        let b = (t - self.grid[i]) / h;
        let (ya, yb) = (self.values[i], self.values[i + 1]);
        let (ma, mb) = (self.second[i], self.second[i + 1]);
        let v = a * ya + b * yb + ((a * a * a - a) * ma + (b * b * b - b) * mb) * h * h / 6.0;
        let d = (yb - ya) / h + ((3.0 * b * b - 1.0) * mb - (3.0 * a * a - 1.0) * ma) * h / 6.0;
        Ok((v, d))
    }
}

fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut u = vec![0.0; n];
    for i in 1..n - 1 {
        let sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
        let p = sig * m[i - 1] + 2.0;
        m[i] = (sig - 1.0) / p;
        let slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        u[i] = (6.0 * slope / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
    }
    m[n - 1] = 0.0;
    for i in (1..n - 1).rev() {
        m[i] = m[i] * m[i + 1] + u[i];
    }
    m[0] = 0.0;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quadratic_density_medium() -> StringMedium {
        // rho(x) = (1+x)^2 expanded around each breakpoint
        let rho = CoefficientFunction::new(
            vec![0.0, 0.5, 1.0],
            vec![[1.0, 2.0, 1.0, 0.0], [2.25, 3.0, 1.0, 0.0]],
        )
        .unwrap();
        StringMedium::new(
            1.0,
            rho,
            CoefficientFunction::constant(1.0, 1.0),
            CoefficientFunction::constant(0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn optical_length_uniform() {
        let l = optical_length(&StringMedium::uniform_unit()).unwrap();
        assert_relative_eq!(l, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn optical_length_scaled_density() {
        let m = StringMedium::new(
            1.0,
            CoefficientFunction::constant(4.0, 1.0),
            CoefficientFunction::constant(1.0, 1.0),
            CoefficientFunction::constant(0.0, 1.0),
        )
        .unwrap();
        assert_relative_eq!(optical_length(&m).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn optical_length_quadratic_density() {
        assert_relative_eq!(
            optical_length(&quadratic_density_medium()).unwrap(),
            1.5,
            epsilon = 1e-10
        );
    }

    #[test]
    fn optical_length_scaling_monotonicity() {
        // replacing rho by 4*rho doubles L
        let m = quadratic_density_medium();
        let scaled_rho = CoefficientFunction::new(
            vec![0.0, 0.5, 1.0],
            vec![[4.0, 8.0, 4.0, 0.0], [9.0, 12.0, 4.0, 0.0]],
        )
        .unwrap();
        let scaled = StringMedium::new(1.0, scaled_rho, m.alpha.clone(), m.beta.clone()).unwrap();
        assert_relative_eq!(
            optical_length(&scaled).unwrap(),
            2.0 * optical_length(&m).unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn positivity_failure_is_reported() {
        let rho = CoefficientFunction::new(vec![0.0, 1.0], vec![[1.0, -2.0, 0.0, 0.0]]).unwrap();
        let m = StringMedium {
            length: 1.0,
            rho,
            alpha: CoefficientFunction::constant(1.0, 1.0),
            beta: CoefficientFunction::constant(0.0, 1.0),
        };
        assert!(m.validate().is_err());
        match optical_length(&m) {
            Err(Error::CoefficientPositivity { name, .. }) => assert_eq!(name, "rho"),
            other => panic!("expected positivity error, got {other:?}"),
        }
    }

    #[test]
    fn kernel_closed_forms() {
        let z = MemoryKernel::Zero;
        assert_eq!(z.eval(0.7).unwrap(), (0.0, 0.0));
        let e = MemoryKernel::Exponential { a: 0.4, eta: 1.0 };
        let (n, np) = e.eval(0.0).unwrap();
        assert_relative_eq!(n, 0.4, epsilon = 1e-15);
        assert_relative_eq!(np, -0.4, epsilon = 1e-15);
        assert_relative_eq!(e.nu(), 0.2, epsilon = 1e-15);
        let p = MemoryKernel::Polynomial {
            coeffs: vec![1.0, -2.0, 3.0],
        };
        let (v, d) = p.eval(2.0).unwrap();
        assert_relative_eq!(v, 1.0 - 4.0 + 12.0, epsilon = 1e-14);
        assert_relative_eq!(d, -2.0 + 12.0, epsilon = 1e-14);
    }

    #[test]
    fn sampled_kernel_tracks_exponential() {
        let n = 2001;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 * 1e-3).collect();
        let values: Vec<f64> = grid.iter().map(|t| 0.4 * (-t).exp()).collect();
        let k = MemoryKernel::Sampled(SampledKernel::new(grid, values).unwrap());
        let (v, d) = k.eval(0.5).unwrap();
        assert_relative_eq!(v, 0.4 * (-0.5f64).exp(), epsilon = 1e-8);
        assert_relative_eq!(d, -0.4 * (-0.5f64).exp(), epsilon = 1e-6);
        assert!(k.eval(2.5).is_err());
    }

    #[test]
    fn kernel_derivative_consistency_under_h_halving() {
        // central finite difference of N matches N' with O(h^2) error decay
        let sampled = {
            let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 5e-3).collect();
            let values: Vec<f64> = grid.iter().map(|t| 0.3 * (1.2 * t).cos()).collect();
            MemoryKernel::Sampled(SampledKernel::new(grid, values).unwrap())
        };
        let kernels = [
            MemoryKernel::Exponential { a: 0.4, eta: 1.0 },
            MemoryKernel::Polynomial {
                coeffs: vec![0.3, -0.1, 0.05, 0.01],
            },
            sampled,
        ];
        for kernel in kernels {
            let t = 0.8;
            let mut errs = Vec::new();
            for k in 0..2 {
                let h = 1e-3 / 2f64.powi(k);
                let slope =
                    (kernel.eval(t + h).unwrap().0 - kernel.eval(t - h).unwrap().0) / (2.0 * h);
                errs.push((slope - kernel.eval(t).unwrap().1).abs());
            }
            let ratio = errs[0] / errs[1].max(1e-300);
            assert!((3.0..5.0).contains(&ratio), "FD error ratio {ratio} not ~4");
        }
    }
}
