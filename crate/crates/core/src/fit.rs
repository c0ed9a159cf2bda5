//! Scalar least-squares fit of an effective field strength.

use crate::constants::GAUSS;
use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub fitted: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Set when the minimum sits on the lower bracket edge.
    pub boundary: bool,
    /// Bracket `(lo, hi)` after each iteration, starting with the input.
    pub trace: Vec<(f64, f64)>,
}

impl FitReport {
    /// `key = value` text report.
    pub fn to_text(&self) -> String {
        format!(
            "fitted_B_T = {:.6e}\nfitted_gauss = {:.6}\nresidual = {:.6e}\niterations = {}\nboundary = {}\n",
            self.fitted,
            self.fitted / GAUSS,
            self.residual, self.iterations, self.boundary
        )
    }
}

/// Iterations golden-section search needs to shrink `width` below `tol`.
pub fn golden_iterations(width: f64, tol: f64) -> usize {
    ((width / tol).ln() / (1.0 / INV_PHI).ln()).ceil().max(0.0) as usize
}

/// Finds `B` in `bracket` minimizing `Σ_t (model(B)_t - observed_t)²`.
///
/// `model` returns the predicted efficiencies at the observed times, in
/// order. A minimum on the lower edge is accepted and flagged; one on the
/// upper edge means the bracket is too small and is an error.
pub fn fit_field_strength<M>(
    observed: &[(f64, f64)],
    mut model: M,
    bracket: (f64, f64),
    tol: f64,
) -> Result<FitReport>
where
    M: FnMut(f64) -> Result<Vec<f64>>,
{
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!("invalid bracket [{lo:e}, {hi:e}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if observed.len() < 5 {
        return Err(Error::invalid(format!(
            "need at least 5 observations, got {}",
            observed.len()
        )));
    }
    let mut objective = |b: f64| -> Result<f64> {
        let pred = model(b)?;
        if pred.len() != observed.len() {
            return Err(Error::invalid("model returned the wrong number of points"));
        }
        let r: f64 = pred.iter().zip(observed).map(|(p, o)| (p - o.1).powi(2)).sum();
        if !r.is_finite() {
            return Err(Error::invalid(format!("non-finite objective at B = {b:e}")));
        }
        Ok(r)
    };

    let (mut a, mut b) = (lo, hi);
    let mut trace = vec![(a, b)];
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    let mut iterations = 0;
    while b - a >= tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2)?;
        }
        iterations += 1;
        trace.push((a, b));
    }
    let fitted = 0.5 * (a + b);
    let residual = objective(fitted)?;
    if hi - fitted <= tol {
        let f_lo = objective(lo)?;
        let f_hi = objective(hi)?;
        return Err(Error::BracketFailure(format!(
            "minimum at the upper edge: objective {f_lo:.4e} at {lo:.4e} T, {f_hi:.4e} at {hi:.4e} T"
        )));
    }
    Ok(FitReport {
        fitted,
        residual,
        iterations,
        boundary: fitted - lo <= tol,
        trace,
    })
}
