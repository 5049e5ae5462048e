use super::linalg::residuals;
use super::{n_rows, Dag};
use crate::error::{Error, Result};

/// Ridge added to the centered Gram matrix of every regression, so exact
/// collinearity and perfect fits still give a finite code length.
pub const RIDGE: f64 = 1e-8;

/// Data term of one node: `(n / 2) ln(RSS / n)` for the least-squares fit of
/// column `j` on `parents` with an intercept.
pub fn node_mdl(data: &[Vec<f64>], j: usize, parents: &[usize]) -> Result<f64> {
    let n = n_rows(data)?;
    if let Some(&bad) = parents.iter().chain([&j]).find(|&&v| v >= data.len()) {
        return Err(Error::MissingColumn(bad));
    }
    let xs: Vec<&[f64]> = parents.iter().map(|&p| data[p].as_slice()).collect();
    let r = residuals(&data[j], &xs, RIDGE).ok_or(Error::DegenerateConditioning { i: j, j })?;
    let rss = r.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    Ok(n as f64 / 2.0 * (rss / n as f64).ln())
}

/// Linear-Gaussian description length of `data` under `dag`; lower is better.
///
/// Sum of the node data terms plus `(k + |E|) ln(n) / 2`, where `k` counts the
/// regression coefficients: one intercept per node and one weight per edge.
pub fn mdl_score(dag: &Dag, data: &[Vec<f64>]) -> Result<f64> {
    if data.len() < dag.n_nodes() {
        return Err(Error::MissingColumn(data.len()));
    }
    let n = n_rows(data)?;
    let mut total = 0.0;
    for j in 0..dag.n_nodes() {
        total += node_mdl(data, j, &dag.parents(j))?;
    }
    let params = dag.n_nodes() + dag.n_edges();
    Ok(total + (params + dag.n_edges()) as f64 * (n as f64).ln() / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_closed_form() {
        let x = vec![1.0, -1.0, 2.0, 0.0];
        // Population variance 1.25, n = 4.
        let got = mdl_score(&Dag::empty(1), &[x]).unwrap();
        let want = 2.0 * 1.25f64.ln() + 4.0f64.ln() / 2.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn copy_parent_stays_finite() {
        let x: Vec<f64> = (0..30).map(|k| (k as f64 * 1.3).sin()).collect();
        let data = vec![x.clone(), x];
        let s = mdl_score(&Dag::from_edges(2, &[(0, 1)]).unwrap(), &data).unwrap();
        assert!(s.is_finite());
        assert!(s < mdl_score(&Dag::empty(2), &data).unwrap());
    }

    #[test]
    fn missing_column() {
        assert!(mdl_score(&Dag::empty(3), &[vec![1.0, 2.0]]).is_err());
    }
}
