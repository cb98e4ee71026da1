//! Parameter grids: the residual table and batch evaluation, data-parallel
//! under the `parallel` feature.

use serde::Serialize;

use crate::error::Result;
use crate::eval::{Evaluator, MethodChoice};
use crate::exact::{recursion_residual, EvalResult, Params};
use crate::saddle::saddle_z0;

pub const RESIDUAL_GRID_SMALL_N: u64 = 1000;
pub const RESIDUAL_GRID_SMALL_M: [u64; 6] = [150, 300, 450, 600, 750, 900];
pub const RESIDUAL_GRID_SMALL_RHO: [f64; 4] = [0.70, 0.80, 0.90, 1.00];
pub const RESIDUAL_GRID_LARGE_N: u64 = 100_000;
pub const RESIDUAL_GRID_LARGE_M: [u64; 6] = [15_000, 30_000, 45_000, 60_000, 75_000, 90_000];
pub const RESIDUAL_GRID_LARGE_RHO: [f64; 4] = [0.97, 0.98, 0.99, 1.00];

/// Maps `f` over `cells`, in parallel when the feature is on. Output order follows input order.
pub fn map_cells<T, R, F>(cells: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cells.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_cells_sequential(cells, f)
    }
}

pub fn map_cells_sequential<T, R, F>(cells: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    cells.iter().map(f).collect()
}

/// One cell of the recursion-residual table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualCell {
    pub n: u64,
    pub m: u64,
    pub rho: f64,
    /// Saddle point of S'(n, m), i.e. of the shifted pair (n - 1, m - 1).
    pub z0: f64,
    pub theta: f64,
    pub s_nm: f64,
    pub s_nm1: f64,
    pub s_n1m: f64,
    pub residual: f64,
}

/// Residual of the three-term recursion with all three values from `method`, at theta = rho z0.
pub fn residual_cell(n: u64, m: u64, rho: f64, method: MethodChoice, terms: usize) -> Result<ResidualCell> {
    let z0 = saddle_z0(n - 1, m - 1)?;
    let theta = rho * z0;
    let at = |nn: u64, mm: u64| -> Result<f64> {
        Ok(Evaluator::new(nn, mm, method, terms)?.evaluate(theta)?.s_prime)
    };
    let s_nm = at(n, m)?;
    let s_nm1 = at(n, m - 1)?;
    let s_n1m = at(n + 1, m)?;
    let residual = recursion_residual(n, m, theta, s_nm, s_nm1, s_n1m)?;
    Ok(ResidualCell { n, m, rho, z0, theta, s_nm, s_nm1, s_n1m, residual })
}

/// The rho x m residual table for one n, row-major in `rhos`.
pub fn verify_grid(n: u64, ms: &[u64], rhos: &[f64], method: MethodChoice, terms: usize) -> Result<Vec<ResidualCell>> {
    let cells: Vec<(f64, u64)> = rhos.iter().flat_map(|&r| ms.iter().map(move |&m| (r, m))).collect();
    map_cells(&cells, |&(rho, m)| residual_cell(n, m, rho, method, terms))
        .into_iter()
        .collect()
}

/// Evaluates many points; results keep the input order.
pub fn evaluate_points(points: &[Params], method: MethodChoice, terms: usize) -> Vec<Result<EvalResult>> {
    map_cells(points, |p| Evaluator::new(p.n, p.m, method, terms)?.evaluate(p.theta))
}

pub fn evaluate_points_sequential(points: &[Params], method: MethodChoice, terms: usize) -> Vec<Result<EvalResult>> {
    map_cells_sequential(points, |p| Evaluator::new(p.n, p.m, method, terms)?.evaluate(p.theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let pts: Vec<Params> = (2..40).map(|m| Params::new(60, m, 0.7 * m as f64).unwrap()).collect();
        let a = evaluate_points(&pts, MethodChoice::Auto, 4);
        let b = evaluate_points_sequential(&pts, MethodChoice::Auto, 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
        }
    }

    #[test]
    fn residual_table_small_block() {
        let cells = verify_grid(RESIDUAL_GRID_SMALL_N, &RESIDUAL_GRID_SMALL_M, &RESIDUAL_GRID_SMALL_RHO, MethodChoice::Asymptotic, 4).unwrap();
        assert_eq!(cells.len(), 24);
        for c in &cells {
            assert!(c.residual.abs() <= 1e-10, "{c:?}");
        }
    }

    #[test]
    fn exact_values_satisfy_the_recursion() {
        let c = residual_cell(50, 25, 10.0 / saddle_z0(49, 24).unwrap(), MethodChoice::Recurrence, 4).unwrap();
        assert!(c.residual.abs() <= 1e-13, "{c:?}");
    }
}
