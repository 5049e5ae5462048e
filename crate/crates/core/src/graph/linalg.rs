//! Least squares on a handful of regressors via Cholesky.

/// Residuals of `y` regressed on `xs` with an intercept.
///
/// Works on centered columns, solving `(X'X + ridge I) b = X'y`. Returns `None`
/// when the Gram matrix is numerically singular and `ridge` is zero.
pub(crate) fn residuals(y: &[f64], xs: &[&[f64]], ridge: f64) -> Option<Vec<f64>> {
    let n = y.len();
    let center = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter().map(|a| a - m).collect::<Vec<f64>>()
    };
    let yc = center(y);
    if xs.is_empty() {
        return Some(yc);
    }
    let cols: Vec<Vec<f64>> = xs.iter().map(|x| center(x)).collect();
    let k = cols.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();

    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let g = dot(&cols[i], &cols[j]);
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
        gram[i * k + i] += ridge;
    }
    let rhs: Vec<f64> = cols.iter().map(|c| dot(c, &yc)).collect();
    let beta = cholesky_solve(&mut gram, k, rhs)?;

    let mut r = yc;
    for (c, b) in cols.iter().zip(&beta) {
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri -= b * ci;
        }
    }
    Some(r)
}

/// Solves `A x = b` for symmetric positive definite `A` (overwritten).
/// Pivots below `1e-12` of the largest diagonal count as singular.
fn cholesky_solve(a: &mut [f64], k: usize, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let s = b[i] - (0..i).map(|p| a[i * k + p] * b[p]).sum::<f64>();
        b[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let s = b[i] - (i + 1..k).map(|p| a[p * k + i] * b[p]).sum::<f64>();
        b[i] = s / a[i * k + i];
    }
    Some(b)
}
