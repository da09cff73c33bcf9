//! Lawson–Hanson non-negative least squares and least-distance programming.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn solve_subset(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> Result<DVector<f64>> {
    let sub = a.select_columns(cols);
    sub.svd(true, true)
        .solve(b, 1e-13)
        .map_err(|e| Error::Numeric(e.to_string()))
}

/// `argmin ‖A·x − b‖` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::Shape(format!("nnls: A is {m}×{n} but b has {}", b.len())));
    }
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 10.0 * f64::EPSILON * a.abs().column_sum().max() * m.max(n) as f64;
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let w = a.tr_mul(&(b - a * &x));
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { return Ok(x) };
        if w[j] <= tol {
            return Ok(x);
        }
        passive[j] = true;
        loop {
            let cols: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let zp = solve_subset(a, b, &cols)?;
            let mut z = DVector::zeros(n);
            for (k, &c) in cols.iter().enumerate() {
                z[c] = zp[k];
            }
            if cols.iter().all(|&c| z[c] > tol) {
                x = z;
                break;
            }
            let alpha = cols
                .iter()
                .filter(|&&c| z[c] <= tol)
                .map(|&c| x[c] / (x[c] - z[c]))
                .fold(f64::INFINITY, f64::min);
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            x += (z - &x) * alpha;
            for &c in &cols {
                if x[c] <= tol {
                    x[c] = 0.0;
                    passive[c] = false;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    Err(Error::Numeric("nnls did not converge".into()))
}

/// Least-distance programming: `argmin ‖x‖` subject to `G·x ≥ h`.
pub fn ldp(g: &DMatrix<f64>, h: &DVector<f64>) -> Result<DVector<f64>> {
    let (mc, n) = g.shape();
    if h.len() != mc {
        return Err(Error::Shape("ldp: constraint count mismatch".into()));
    }
    // The minimiser scales linearly with h.
    let scale = h.amax();
    if scale == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let mut e = DMatrix::zeros(n + 1, mc);
    e.view_mut((0, 0), (n, mc)).copy_from(&g.transpose());
    e.row_mut(n).copy_from(&(h / scale).transpose());
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let u = nnls(&e, &f)?;
    let r = &e * u - f;
    if r.norm() <= 1e-12 || r[n].abs() <= 1e-14 {
        return Err(Error::Infeasible("constraints admit no solution".into()));
    }
    Ok(DVector::from_fn(n, |j, _| -r[j] / r[n] * scale))
}
