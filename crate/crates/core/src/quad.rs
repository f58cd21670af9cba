//! Quadrature helpers: adaptive Gauss–Kronrod for smooth integrands and
//! composite rules for sampled data.

use crate::error::Result;

/// Positive Kronrod-15 abscissae (the Gauss-7 nodes are every other entry,
/// starting at index 1).
const K15_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_93,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in K15_NODES.iter().zip(K15_WEIGHTS.iter()).enumerate() {
        // the central node is counted once in both rules
        let pair = if x == 0.0 {
            f(mid)?
        } else {
            f(mid - half * x)? + f(mid + half * x)?
        };
        kronrod += wk * pair;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * pair;
        }
    }
    let k = kronrod * half;
    let g = gauss * half;
    Ok((k, (k - g).abs()))
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to the requested
/// relative tolerance (with a small absolute floor for integrals near zero).
pub fn adaptive<F>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let (whole, err) = gk15(&mut f, a, b)?;
    let mut total = 0.0;
    // (a, b, estimate, error), processed depth-first
    let mut stack = vec![(a, b, whole, err, 0u32)];
    let scale = whole.abs().max(1e-300);
    while let Some((a, b, est, err, depth)) = stack.pop() {
        if err <= rel_tol * scale.max(est.abs()) || depth >= 52 {
            total += est;
            continue;
        }
        let mid = 0.5 * (a + b);
        let (le, lerr) = gk15(&mut f, a, mid)?;
        let (re, rerr) = gk15(&mut f, mid, b)?;
        stack.push((a, mid, le, lerr, depth + 1));
        stack.push((mid, b, re, rerr, depth + 1));
    }
    Ok(total)
}

/// Trapezoid rule on uniformly sampled values.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.5 * (values[0] + values[n - 1]);
    for &v in &values[1..n - 1] {
        sum += v;
    }
    sum * dt
}

/// Composite Simpson rule; requires an odd number of samples.
pub fn simpson(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    assert!(
        n >= 3 && n % 2 == 1,
        "simpson needs an odd sample count, got {n}"
    );
    let mut sum = values[0] + values[n - 1];
    for (i, &v) in values.iter().enumerate().take(n - 1).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * dt / 3.0
}

/// Simpson weights for an odd-length uniform grid, for weighted dot products.
pub fn simpson_weights(n: usize, dt: f64) -> Vec<f64> {
    assert!(
        n >= 3 && n % 2 == 1,
        "simpson needs an odd sample count, got {n}"
    );
    let mut w = vec![0.0; n];
    w[0] = dt / 3.0;
    w[n - 1] = dt / 3.0;
    for (i, wi) in w.iter_mut().enumerate().take(n - 1).skip(1) {
        *wi = if i % 2 == 1 {
            4.0 * dt / 3.0
        } else {
            2.0 * dt / 3.0
        };
    }
    w
}
