use statrs::function::erf::erfc;

use super::linalg::residuals;
use super::{n_rows, Skeleton};
use crate::error::{Error, Result};

/// Fisher-z test of zero partial correlation between columns `i` and `j`
/// given `cond`. Returns `(z statistic, two-sided p-value)`.
///
/// The partial correlation is the correlation of the least-squares residuals of
/// `i` and `j` on `cond`; `z = atanh(r) * sqrt(n - |cond| - 3)`.
pub fn fisher_z_partial_corr(data: &[Vec<f64>], i: usize, j: usize, cond: &[usize]) -> Result<(f64, f64)> {
    let n = n_rows(data)?;
    if let Some(&bad) = [i, j].iter().chain(cond).find(|&&v| v >= data.len()) {
        return Err(Error::MissingColumn(bad));
    }
    if cond.contains(&i) || cond.contains(&j) {
        return Err(Error::config("conditioning set must exclude the tested pair"));
    }
    if n <= cond.len() + 3 {
        return Err(Error::config(format!("{n} rows are too few for a conditioning set of {}", cond.len())));
    }
    let xs: Vec<&[f64]> = cond.iter().map(|&c| data[c].as_slice()).collect();
    let degenerate = || Error::DegenerateConditioning { i, j };
    let ri = residuals(&data[i], &xs, 0.0).ok_or_else(degenerate)?;
    let rj = residuals(&data[j], &xs, 0.0).ok_or_else(degenerate)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let denom = (dot(&ri, &ri) * dot(&rj, &rj)).sqrt();
    if !(denom > 0.0) {
        return Err(degenerate());
    }
    let r = (dot(&ri, &rj) / denom).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let z = r.atanh() * ((n - cond.len() - 3) as f64).sqrt();
    Ok((z, erfc(z.abs() / std::f64::consts::SQRT_2)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcResult {
    pub skeleton: Skeleton,
    /// Tests skipped because the conditioning set was degenerate; the edge stays.
    pub warnings: Vec<String>,
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (p, &first) in items.iter().enumerate() {
        for mut rest in subsets(&items[p + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// PC-stable skeleton search.
///
/// Starting from the complete graph, level `l` tests every remaining edge
/// `i -- j` against conditioning sets of size `l` drawn from the adjacencies of
/// `i` (and of `j`) as they stood at the start of the level, and removes the
/// edge once some test fails to reject at `alpha`. Freezing adjacencies per
/// level makes the result independent of variable order.
pub fn pc_stable_skeleton(data: &[Vec<f64>], alpha: f64) -> Result<PcResult> {
    if data.len() < 2 {
        return Err(Error::config("skeleton search needs at least two variables"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    let n = n_rows(data)?;
    let v = data.len();
    let mut skel = Skeleton::complete(v);
    let mut warnings = Vec::new();

    for level in 0.. {
        let frozen: Vec<Vec<usize>> = (0..v).map(|i| skel.neighbors(i)).collect();
        let edges: Vec<(usize, usize)> = skel.edges().collect();
        let mut any_testable = false;
        for (i, j) in edges {
            'sides: for (a, b) in [(i, j), (j, i)] {
                let pool: Vec<usize> = frozen[a].iter().copied().filter(|&c| c != b).collect();
                if pool.len() < level || n <= level + 3 {
                    continue;
                }
                any_testable = true;
                for cond in subsets(&pool, level) {
                    match fisher_z_partial_corr(data, i, j, &cond) {
                        Ok((_, p)) if p > alpha => {
                            skel.remove(i, j);
                            break 'sides;
                        }
                        Ok(_) => {}
                        Err(Error::DegenerateConditioning { .. }) => {
                            let msg = format!("degenerate conditioning for {i} -- {j} given {cond:?}; edge kept");
                            log::warn!("{msg}");
                            warnings.push(msg);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        if !any_testable {
            break;
        }
    }
    Ok(PcResult { skeleton: skel, warnings })
}
