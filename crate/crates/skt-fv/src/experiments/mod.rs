//! The three built-in studies: grid convergence orders, the localization
//! limit toward the local model, and Turing pattern formation in 1D/2D
//! prey-predator systems.

pub mod convergence;
pub mod localization;
pub mod turing;

pub use convergence::{
    run_convergence, ConvergenceKernel, ConvergenceResult, ConvergenceRow, ConvergenceStudy,
    ErrorAggregation, InitialDataChoice,
};
pub use localization::{run_localization, LocalizationResult, LocalizationRow, LocalizationStudy};
pub use turing::{
    run_turing_1d, run_turing_2d, Turing1DCase, Turing1DStudy, Turing2DCase, Turing2DStudy,
    TuringOutcome,
};

/// Least-squares slope of `log(y)` against `log(x)`; the experimental order
/// of convergence when `x` is a mesh or kernel width and `y` an error.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "order fit needs at least two points");
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_errors_fit_order_two() {
        // errors quartering while dx halves
        let dx = [0.1, 0.05, 0.025];
        let err = [1e-2, 2.5e-3, 6.25e-4];
        let order = fit_log_slope(&dx, &err);
        assert!((order - 2.0).abs() < 1e-12, "{order}");
    }
}
