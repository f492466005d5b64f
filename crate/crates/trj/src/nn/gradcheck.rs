//! Central finite differences for validating recorded adjoints. Test
//! support, but exported so integration suites can drive it too.

use ndarray::Array2;

/// Central-difference gradient of a scalar function of one tensor.
pub fn numeric_grad<F: FnMut(&Array2<f64>) -> f64>(x0: &Array2<f64>, mut f: F) -> Array2<f64> {
    let mut grad = Array2::zeros(x0.dim());
    let mut x = x0.clone();
    for idx in 0..x0.len() {
        let (r, c) = (idx / x0.ncols(), idx % x0.ncols());
        let h = 1e-5 * (1.0 + x0[(r, c)].abs());
        x[(r, c)] = x0[(r, c)] + h;
        let fp = f(&x);
        x[(r, c)] = x0[(r, c)] - h;
        let fm = f(&x);
        x[(r, c)] = x0[(r, c)];
        grad[(r, c)] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Like [`numeric_grad`] but only over a subset of entries, for large
/// parameter tensors; untouched entries are returned as zero and should be
/// skipped by the caller.
pub fn numeric_grad_sampled<F: FnMut(&Array2<f64>) -> f64>(
    x0: &Array2<f64>,
    entries: &[(usize, usize)],
    mut f: F,
) -> Vec<f64> {
    let mut x = x0.clone();
    entries
        .iter()
        .map(|&(r, c)| {
            let h = 1e-5 * (1.0 + x0[(r, c)].abs());
            x[(r, c)] = x0[(r, c)] + h;
            let fp = f(&x);
            x[(r, c)] = x0[(r, c)] - h;
            let fm = f(&x);
            x[(r, c)] = x0[(r, c)];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Elementwise relative error, with a unit floor so near-zero entries are
/// compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

pub fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| rel_err(x, y))
        .fold(0.0, f64::max)
}
