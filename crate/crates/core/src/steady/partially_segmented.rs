use nalgebra::{DMatrix, DVector};

use super::{check_tol, SolveMethod, SolverError, SteadySolution};
use crate::miranda::{self, RefineOptions, SearchBox};
use crate::models::{MarketModel, ModelError, PartiallySegmentedParams, StateDistribution};

/// Coefficients of `f_i(x) = x_i + coupling * sum_{j != i} x_j
///                          - owners / (lambda_i x_i + gamma_i) + offset`.
#[derive(Debug, Clone, Copy)]
struct Row {
    coupling: f64,
    owners: f64,
    offset: f64,
    lambda: f64,
    gamma: f64,
}

fn rows(p: &PartiallySegmentedParams) -> Vec<Row> {
    let free = 1.0 - p.total_mass();
    (0..p.k())
        .map(|i| {
            let gt = p.gamma_tilde_i(i);
            let coupling = p.gamma_tilde_ui[i] / gt;
            Row {
                coupling,
                owners: p.gamma_i(i) * p.gamma_di[i] * p.m[i] / gt,
                offset: p.gamma_di[i] * p.m[i] / gt - coupling * free,
                lambda: p.lambda[i],
                gamma: p.gamma_i(i),
            }
        })
        .collect()
}

fn eval_rows(rows: &[Row], x: &[f64], out: &mut [f64]) {
    let total: f64 = x.iter().sum();
    for (i, r) in rows.iter().enumerate() {
        out[i] =
            x[i] + r.coupling * (total - x[i]) - r.owners / (r.lambda * x[i] + r.gamma) + r.offset;
    }
}

/// The map whose zero is the vector of steady `mu(hi,n)`:
///
/// `f_i(x) = x_i + (gt_ui/gt_i) sum_{j != i} x_j
///           - gamma_i gamma_di m_i / (gt_i (lambda_i x_i + gamma_i))
///           + (gamma_di/gt_i) m_i - (gt_ui/gt_i)(1 - sum m)`
///
/// where `gt` abbreviates the non-owner rates `gamma_tilde`. On the face
/// `x_i = 0` with `x` in the feasible simplex, `f_i <= 0`.
pub fn fixed_point_map(p: &PartiallySegmentedParams, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.k()];
    eval_rows(&rows(p), x, &mut out);
    out
}

/// `gt_i * f_i` equals minus the `(hi,n)` drift once owners sit at their
/// balance, so this is the drift scale of the map residual.
fn scaled_residual(p: &PartiallySegmentedParams, f: &[f64]) -> f64 {
    f.iter()
        .enumerate()
        .map(|(i, v)| (p.gamma_tilde_i(i) * v).abs())
        .fold(0.0, f64::max)
}

/// Solves `f_i = 0` for `x_i` with the other coordinates frozen. `f_i` is
/// strictly increasing in `x_i` on `x_i > -gamma/lambda`, so the root is the
/// larger root of `lambda x^2 + (gamma + lambda r) x + gamma r - owners`.
fn solve_coordinate(r: &Row, rest: f64) -> f64 {
    let shift = r.coupling * rest + r.offset;
    if r.lambda == 0.0 {
        return r.owners / r.gamma - shift;
    }
    let b = r.gamma + r.lambda * shift;
    let c = r.gamma * shift - r.owners;
    let disc = (b * b - 4.0 * r.lambda * c).max(0.0);
    if b >= 0.0 {
        -2.0 * c / (b + disc.sqrt())
    } else {
        (-b + disc.sqrt()) / (2.0 * r.lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussSeidelOptions {
    pub damping: f64,
    pub max_sweeps: usize,
    /// Sweeps with relative change below `1e-15` and residual above tol
    /// before declaring a stall.
    pub stall_sweeps: usize,
}

impl Default for GaussSeidelOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_sweeps: 200_000,
            stall_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussSeidelOutcome {
    pub x: Vec<f64>,
    pub sweeps: usize,
    /// Drift-scaled residual `max_i gt_i |f_i(x)|`.
    pub residual: f64,
    pub converged: bool,
    pub stalled: bool,
}

/// Damped Gauss–Seidel on the coordinate-wise exact updates of
/// [`fixed_point_map`], stopping when the drift-scaled residual is at most
/// `tol`.
pub fn gauss_seidel(
    p: &PartiallySegmentedParams,
    start: &[f64],
    tol: f64,
    opts: &GaussSeidelOptions,
) -> GaussSeidelOutcome {
    let rows = rows(p);
    let k = rows.len();
    let mut x = start.to_vec();
    let mut f = vec![0.0; k];
    let mut quiet = 0;
    let mut sweeps = 0;
    loop {
        eval_rows(&rows, &x, &mut f);
        let residual = scaled_residual(p, &f);
        if residual <= tol {
            return GaussSeidelOutcome {
                x,
                sweeps,
                residual,
                converged: true,
                stalled: false,
            };
        }
        if sweeps >= opts.max_sweeps || quiet >= opts.stall_sweeps {
            return GaussSeidelOutcome {
                x,
                sweeps,
                residual,
                converged: false,
                stalled: quiet >= opts.stall_sweeps,
            };
        }
        let mut total: f64 = x.iter().sum();
        let mut change: f64 = 0.0;
        for (i, r) in rows.iter().enumerate() {
            let target = solve_coordinate(r, total - x[i]);
            let next = x[i] + opts.damping * (target - x[i]);
            change = change.max((next - x[i]).abs() / x[i].abs().max(f64::MIN_POSITIVE));
            total += next - x[i];
            x[i] = next;
        }
        quiet = if change < 1e-15 { quiet + 1 } else { 0 };
        sweeps += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartialMethod {
    /// Gauss–Seidel, falling back to box subdivision when it stalls.
    #[default]
    Auto,
    FixedPoint,
    PoincareMiranda,
}

pub fn solve_partially_segmented(
    p: &PartiallySegmentedParams,
    tol: f64,
) -> Result<SteadySolution, SolverError> {
    solve_partially_segmented_with(p, tol, PartialMethod::Auto)
}

fn back_substitute(p: &PartiallySegmentedParams, x: &[f64]) -> Vec<f64> {
    let k = p.k();
    let mut mu = vec![0.0; p.dim()];
    mu[..k].copy_from_slice(x);
    mu[p.l_n()] = 1.0 - p.total_mass() - x.iter().sum::<f64>();
    for i in 0..k {
        let lo = p.gamma_di[i] * p.m[i] / (p.lambda[i] * x[i] + p.gamma_i(i));
        mu[p.l_o(i)] = lo;
        mu[p.h_o(i)] = p.m[i] - lo;
    }
    mu
}

/// Newton polish of a subdivision result; returns `None` if it diverges.
fn newton_polish(p: &PartiallySegmentedParams, start: &[f64], tol: f64) -> Option<Vec<f64>> {
    let rows = rows(p);
    let f = |x: &[f64], out: &mut [f64]| eval_rows(&rows, x, out);
    let mut x = start.to_vec();
    let mut out = vec![0.0; x.len()];
    for _ in 0..50 {
        f(&x, &mut out);
        if scaled_residual(p, &out) <= tol {
            return Some(x);
        }
        let jac: DMatrix<f64> = miranda::jacobian(&f, &x, 1e-7);
        let step = jac.lu().solve(&DVector::from_column_slice(&out))?;
        for (xi, s) in x.iter_mut().zip(step.iter()) {
            *xi -= s;
        }
    }
    None
}

/// Steady state of the partially segmented market. The `K` unknowns
/// `mu(hi,n)` are found first; owners and `mu(l,n)` follow by
/// back-substitution, and the full drift is re-checked.
pub fn solve_partially_segmented_with(
    p: &PartiallySegmentedParams,
    tol: f64,
    method: PartialMethod,
) -> Result<SteadySolution, SolverError> {
    p.check_structure()?;
    check_tol(tol)?;
    for i in 0..p.k() {
        for (name, v) in [("gamma", p.gamma_i(i)), ("gamma_tilde", p.gamma_tilde_i(i))] {
            if v <= 0.0 {
                return Err(ModelError::NonPositiveRate {
                    name: format!("{name}_{}", i + 1),
                    value: v,
                }
                .into());
            }
        }
    }
    let k = p.k();
    // Stop the inner iteration a little below tol so the re-checked drift,
    // which adds rounding from back-substitution, still meets it.
    let inner_tol = 0.5 * tol;

    let mut found = None;
    if method != PartialMethod::PoincareMiranda {
        let start = vec![0.5 * (1.0 - p.total_mass()) / k as f64; k];
        let gs = gauss_seidel(p, &start, inner_tol, &GaussSeidelOptions::default());
        if gs.converged {
            found = Some((gs.x, SolveMethod::FixedPoint, None));
        } else if method == PartialMethod::FixedPoint {
            return Err(SolverError::NoConvergence(format!(
                "Gauss-Seidel stopped after {} sweeps at residual {:e}",
                gs.sweeps, gs.residual
            )));
        }
    }
    if found.is_none() {
        let rows = rows(p);
        let f = |x: &[f64], out: &mut [f64]| eval_rows(&rows, x, out);
        let eps = 1e-4f64.powi(k as i32);
        let unit = SearchBox::unit(k);
        let opts = RefineOptions::new(eps);
        let outcome = if miranda::check_faces(f, &unit, opts.grid_points_per_axis).certified {
            miranda::refine(f, &unit, &opts)?
        } else {
            // For K >= 3 the coupling term can flip face signs away from the
            // feasible simplex; the map premultiplied by its inverse Jacobian
            // at the cube centre has the same zeros and near-identity faces.
            let inverse = miranda::jacobian(&f, &unit.centroid(), 1e-7)
                .try_inverse()
                .ok_or_else(|| SolverError::NoConvergence("singular Jacobian".into()))?;
            let g = |x: &[f64], out: &mut [f64]| {
                let mut raw = vec![0.0; k];
                f(x, &mut raw);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..k).map(|j| inverse[(i, j)] * raw[j]).sum();
                }
            };
            miranda::refine(g, &unit, &opts)?
        };
        let centroid = outcome.final_box.centroid();
        let x = newton_polish(p, &centroid, inner_tol).ok_or_else(|| {
            SolverError::NoConvergence("Newton polish of the subdivision box diverged".into())
        })?;
        found = Some((
            x,
            SolveMethod::PoincareMiranda,
            Some(outcome.final_box.volume()),
        ));
    }
    let (x, method, certified_box_volume) = found.expect("one branch produced a point");
    let mu = back_substitute(p, &x);
    let residual_inf_norm = p.residual_inf_norm(&mu);
    if residual_inf_norm > tol {
        return Err(SolverError::NoConvergence(format!(
            "drift {residual_inf_norm:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(SteadySolution {
        state: StateDistribution::for_model(p, mu)?,
        residual_inf_norm,
        method,
        certified_box_volume,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NonSegmentedParams;
    use crate::steady::solve_nonsegmented;

    #[test]
    fn lower_face_value() {
        let p = PartiallySegmentedParams {
            lambda: vec![1.0, 3.0, 0.5],
            gamma_ui: vec![1.0, 2.0, 0.3],
            gamma_di: vec![0.5, 1.0, 2.0],
            gamma_tilde_ui: vec![0.7, 0.2, 1.1],
            gamma_tilde_di: vec![1.5, 0.4, 0.9],
            m: vec![0.1, 0.2, 0.15],
        };
        let x = [0.0, 0.3, 0.2];
        let f = fixed_point_map(&p, &x);
        let expected = -(0.7 / 2.2) * (1.0 - 0.45 - 0.5);
        assert!((f[0] - expected).abs() < 1e-15);
        assert!(f[0] <= 0.0);
        let x = [1.0, 0.3, 0.2];
        let f = fixed_point_map(&p, &x);
        assert!(f[0] >= 0.0);
    }

    #[test]
    fn one_asset_agrees_with_scalar_root() {
        let ns = NonSegmentedParams::uniform(1, 1.0, 1.0, 0.2);
        let ps = PartiallySegmentedParams::from_nonsegmented(&ns);
        let a = solve_nonsegmented(&ns, 1e-12).unwrap();
        for method in [PartialMethod::FixedPoint, PartialMethod::PoincareMiranda] {
            let b = solve_partially_segmented_with(&ps, 1e-12, method).unwrap();
            assert!(
                (a.state.values[0] - b.state.values[0]).abs() < 1e-10,
                "{method:?}"
            );
            assert!((b.state.values[0] - 0.383897).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_assets_share_the_buyer_mass() {
        let p = PartiallySegmentedParams::uniform(2, 1.0, 1.0, 0.1);
        let sol = solve_partially_segmented(&p, 1e-12).unwrap();
        let mu = &sol.state.values;
        assert!((mu[0] - mu[1]).abs() < 1e-12);
        assert!(sol.residual_inf_norm <= 1e-12);
        assert_eq!(sol.method, SolveMethod::FixedPoint);
    }

    #[test]
    fn subdivision_path_certifies_a_box() {
        let p = PartiallySegmentedParams::uniform(3, 2.0, 0.7, 0.1);
        let a = solve_partially_segmented_with(&p, 1e-11, PartialMethod::FixedPoint).unwrap();
        let b = solve_partially_segmented_with(&p, 1e-11, PartialMethod::PoincareMiranda).unwrap();
        assert!(b.certified_box_volume.unwrap() <= 1e-12);
        for (u, v) in a.state.values.iter().zip(&b.state.values) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn coordinate_update_zeroes_its_row() {
        let p = PartiallySegmentedParams::uniform(2, 1.5, 0.8, 0.2);
        let rows = rows(&p);
        let xi = solve_coordinate(&rows[0], 0.25);
        let f = fixed_point_map(&p, &[xi, 0.25]);
        assert!(f[0].abs() < 1e-14);
    }
}
