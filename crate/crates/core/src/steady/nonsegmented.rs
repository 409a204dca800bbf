use super::{check_tol, SolveMethod, SolverError, SteadySolution};
use crate::models::{MarketModel, ModelError, NonSegmentedParams, StateDistribution};

/// Steady-state balance of the `(h,n)` equation after substituting the
/// owner identities `mu(li,o) = gamma_di m_i / (lambda_i x + gamma_i)`:
///
/// `F(x) = sum_i gamma_i gamma_di m_i / (lambda_i x + gamma_i)
///         - sum_i gamma_di m_i + gamma_u (1 - sum_i m_i) - gamma x`
///
/// `F` is positive at 0, negative at `1 - sum m`, and strictly decreasing in
/// between, so its root is the steady `mu(h,n)`.
pub fn high_nonowner_balance(x: f64, p: &NonSegmentedParams) -> f64 {
    let mut owners = 0.0;
    let mut outflow = 0.0;
    for i in 0..p.k() {
        let gi = p.gamma_i(i);
        owners += gi * p.gamma_di[i] * p.m[i] / (p.lambda[i] * x + gi);
        outflow += p.gamma_di[i] * p.m[i];
    }
    owners - outflow + p.gamma_u * (1.0 - p.total_mass()) - p.gamma() * x
}

fn balance_slope(x: f64, p: &NonSegmentedParams) -> f64 {
    let mut slope = -p.gamma();
    for i in 0..p.k() {
        let gi = p.gamma_i(i);
        let denom = p.lambda[i] * x + gi;
        slope -= gi * p.gamma_di[i] * p.m[i] * p.lambda[i] / (denom * denom);
    }
    slope
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScalarMethod {
    #[default]
    Bisection,
    /// Newton steps, replaced by bisection whenever they leave the bracket.
    SafeguardedNewton,
}

/// Rebuilds the full state from `mu(h,n)`.
fn reconstruct(x: f64, p: &NonSegmentedParams) -> Vec<f64> {
    let mut mu = vec![0.0; p.dim()];
    mu[NonSegmentedParams::H_N] = x;
    mu[NonSegmentedParams::L_N] = 1.0 - x - p.total_mass();
    for i in 0..p.k() {
        let lo = p.gamma_di[i] * p.m[i] / (p.lambda[i] * x + p.gamma_i(i));
        mu[NonSegmentedParams::l_o(i)] = lo;
        mu[NonSegmentedParams::h_o(i)] = p.m[i] - lo;
    }
    mu
}

pub fn solve_nonsegmented(p: &NonSegmentedParams, tol: f64) -> Result<SteadySolution, SolverError> {
    solve_nonsegmented_with(p, tol, ScalarMethod::Bisection)
}

/// Root of [`high_nonowner_balance`] on `[0, 1 - sum m]`, narrowed until the
/// bracket is at most `tol` wide and the full drift at the reconstructed
/// state is at most `tol`.
///
/// Zero meeting rates are accepted (the balance becomes affine); every
/// `gamma_i` and `gamma` must be positive.
pub fn solve_nonsegmented_with(
    p: &NonSegmentedParams,
    tol: f64,
    method: ScalarMethod,
) -> Result<SteadySolution, SolverError> {
    p.check_structure()?;
    check_tol(tol)?;
    for i in 0..p.k() {
        if p.gamma_i(i) <= 0.0 {
            return Err(ModelError::NonPositiveRate {
                name: format!("gamma_{}", i + 1),
                value: p.gamma_i(i),
            }
            .into());
        }
    }
    if p.gamma() <= 0.0 {
        return Err(ModelError::NonPositiveRate {
            name: "gamma".into(),
            value: p.gamma(),
        }
        .into());
    }

    let (mut lo, mut hi) = (0.0, 1.0 - p.total_mass());
    let resolution = f64::EPSILON * hi;
    if tol < resolution {
        return Err(SolverError::ToleranceUnreachable { tol, resolution });
    }
    let residual = |x: f64| p.residual_inf_norm(&reconstruct(x, p));

    let mut x = 0.5 * (lo + hi);
    if high_nonowner_balance(lo, p) <= 0.0 {
        // gamma_u = 0 puts the root on the boundary
        x = lo;
    } else {
        let newton = method == ScalarMethod::SafeguardedNewton;
        loop {
            let mut candidate = 0.5 * (lo + hi);
            if newton {
                let next = x - high_nonowner_balance(x, p) / balance_slope(x, p);
                if next > lo && next < hi {
                    candidate = next;
                }
            }
            if candidate <= lo || candidate >= hi {
                break;
            }
            let moved = (candidate - x).abs();
            x = candidate;
            let fx = high_nonowner_balance(x, p);
            if fx > 0.0 {
                lo = x;
            } else if fx < 0.0 {
                hi = x;
            } else {
                break;
            }
            let narrow = hi - lo <= tol || (newton && moved <= 0.25 * tol);
            if narrow && residual(x) <= tol {
                break;
            }
        }
    }

    let mu = reconstruct(x, p);
    let residual_inf_norm = p.residual_inf_norm(&mu);
    if residual_inf_norm > tol {
        return Err(SolverError::ToleranceUnreachable {
            tol,
            resolution: residual_inf_norm,
        });
    }
    Ok(SteadySolution {
        state: StateDistribution::for_model(p, mu)?,
        residual_inf_norm,
        method: SolveMethod::ScalarRoot,
        certified_box_volume: None,
    })
}
