use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_tol, SolveMethod, SolverError, SteadySolution};
use crate::miranda::{self, RefineOptions, SearchBox};
use crate::models::{HeterogeneousParams, MarketModel, StateDistribution};

/// A steady state whose gross transition flux is below this is frozen:
/// nobody switches type and nobody trades. Roots are polished to machine
/// precision first; near a degenerate root the location error grows like
/// the square root of the residual, so the threshold actually applied is
/// the larger of this and `10 sqrt(residual)`.
pub const FROZEN_FLUX: f64 = 1e-9;

/// The six steady-state equations after substituting `y v = a x w`, with the
/// two constraint rows appended:
///
/// ```text
/// (xv + xw + x c0 - u d0,
///  xv - yw - y c1 + v d1,
///  xw + yw - z c2 + w d2,
///  yv - a xw,
///  x + y + z + u + v + w - 1,
///  y + v + 2(z + w) - s)
/// ```
///
/// Quadratic terms carry the meeting rate `lambda`; with `lambda = 1` this
/// is exactly the system above.
pub fn reduced_residual_heterogeneous(p: &HeterogeneousParams, point: &[f64; 6]) -> [f64; 6] {
    let [x, y, z, u, v, w] = *point;
    let lam = p.lambda;
    let [c0, c1, c2] = p.c;
    let [d0, d1, d2] = p.d;
    [
        lam * (x * v + x * w) + x * c0 - u * d0,
        lam * (x * v - y * w) - y * c1 + v * d1,
        lam * (x * w + y * w) - z * c2 + w * d2,
        lam * (y * v - p.a * x * w),
        x + y + z + u + v + w - 1.0,
        y + v + 2.0 * (z + w) - p.s,
    ]
}

/// Residual on the free unknowns `(x, y, v, w)` with `u` and `z` eliminated
/// through the constraints. Component `i` is paired with unknown `i` for the
/// face checks: `x` with the `(h,0)` balance, `y` with `yv - a xw`, `v` with
/// the `(l,1)` balance and `w` with the `(l,2)` balance.
fn reduced_free(p: &HeterogeneousParams, q: &[f64], out: &mut [f64]) {
    let r = reduced_residual_heterogeneous(p, &p.complete_state(q[0], q[1], q[2], q[3]));
    out[0] = r[0];
    out[1] = r[3];
    out[2] = r[1];
    out[3] = r[2];
}

fn free_of(state: &[f64; 6]) -> [f64; 4] {
    [state[0], state[1], state[4], state[5]]
}

/// Worst-case margin of one inequality over a box; `holds` iff `margin >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionMargin {
    pub holds: bool,
    pub margin: f64,
}

/// The four sufficient inequalities, each evaluated in the worst case over
/// a box of `(x, y, z, u, v, w)`:
///
/// 1. `v + w + c0 - u d0 >= 0`
/// 2. `v - a x w >= 0`
/// 3. `x - y w - y c1 + d1 <= 0`
/// 4. `x + y - z c2 + d2 <= 0`
///
/// Every expression is affine in each variable separately, so the extremes
/// over a box sit at its corners and corner enumeration is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionPReport {
    pub holds: bool,
    pub conditions: [ConditionMargin; 4],
}

pub fn check_condition_p(p: &HeterogeneousParams, bx: &SearchBox) -> ConditionPReport {
    assert_eq!(
        bx.dim(),
        6,
        "condition (P) is stated over (x, y, z, u, v, w)"
    );
    let [c0, c1, c2] = p.c;
    let [d0, d1, d2] = p.d;
    let mut margins = [f64::INFINITY; 4];
    for mask in 0..64usize {
        let corner: Vec<f64> = (0..6)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    bx.upper()[i]
                } else {
                    bx.lower()[i]
                }
            })
            .collect();
        let (x, y, z, u, v, w) = (
            corner[0], corner[1], corner[2], corner[3], corner[4], corner[5],
        );
        let values = [
            v + w + c0 - u * d0,
            v - x * w * p.a,
            -(x - y * w - y * c1 + d1),
            -(x + y - z * c2 + d2),
        ];
        for (m, v) in margins.iter_mut().zip(values) {
            *m = m.min(v);
        }
    }
    let conditions = margins.map(|margin| ConditionMargin {
        holds: margin >= 0.0,
        margin,
    });
    ConditionPReport {
        holds: conditions.iter().all(|c| c.holds),
        conditions,
    }
}

/// Candidate `x` for the counterexample family: the root
/// `(-s + sqrt(s^2 - 2s + 3)) / 2` of `4X^2 + 4sX + 2s - 3`, or `None` when it
/// is negative or `s` lies outside `[0, 2]`.
pub fn counterexample_root(s: f64) -> Option<f64> {
    if !(0.0..=2.0).contains(&s) {
        return None;
    }
    let x = 0.5 * (-s + (s * s - 2.0 * s + 3.0).sqrt());
    (x >= 0.0).then_some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExistenceVerdict {
    /// Positive root: an interior trading steady state.
    Exists,
    /// Root exactly zero.
    Boundary,
    Absent,
}

impl ExistenceVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ExistenceVerdict::Exists => "yes",
            ExistenceVerdict::Boundary => "boundary",
            ExistenceVerdict::Absent => "no",
        }
    }
}

pub fn counterexample_verdict(s: f64) -> ExistenceVerdict {
    match counterexample_root(s) {
        Some(x) if x > 0.0 => ExistenceVerdict::Exists,
        Some(_) => ExistenceVerdict::Boundary,
        None => ExistenceVerdict::Absent,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousOptions {
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub grid_points_per_axis: usize,
    /// Volume at which unit-box subdivision hands over to Newton polishing.
    pub eps_volume: f64,
}

impl HeterogeneousOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            restarts: 32,
            seed: 0x5EED_0C7C,
            grid_points_per_axis: miranda::DEFAULT_GRID,
            eps_volume: 1e-16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousSolution {
    pub solution: SteadySolution,
    /// Further trading steady states found by other restarts.
    pub alternatives: Vec<[f64; 6]>,
    /// Frozen steady states found along the way.
    pub frozen_states: Vec<[f64; 6]>,
}

/// No trading steady state was located. Unless `conclusive` is set this is
/// "no zero found", not a proof of non-existence.
#[derive(Debug, Clone, PartialEq)]
pub struct NoSteadyStateReport {
    pub restarts: usize,
    pub converged_restarts: usize,
    pub unit_box_certified: bool,
    /// Smallest reduced residual reached by any restart.
    pub best_residual: f64,
    pub frozen_states: Vec<[f64; 6]>,
    /// Set for the counterexample family when its closed-form root is
    /// negative.
    pub conclusive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeterogeneousOutcome {
    Steady(HeterogeneousSolution),
    NoSteadyState(NoSteadyStateReport),
}

impl HeterogeneousOutcome {
    pub fn steady(&self) -> Option<&HeterogeneousSolution> {
        match self {
            HeterogeneousOutcome::Steady(s) => Some(s),
            HeterogeneousOutcome::NoSteadyState(_) => None,
        }
    }

    pub fn frozen_states(&self) -> &[[f64; 6]] {
        match self {
            HeterogeneousOutcome::Steady(s) => &s.frozen_states,
            HeterogeneousOutcome::NoSteadyState(r) => &r.frozen_states,
        }
    }
}

/// Damped Newton on [`reduced_free`] with backtracking on the residual norm.
/// Returns the final point and whether it reached `tol`, plus its residual.
fn newton(p: &HeterogeneousParams, start: [f64; 4], tol: f64) -> ([f64; 4], bool, f64) {
    let f = |q: &[f64], out: &mut [f64]| reduced_free(p, q, out);
    let norm2 = |q: &[f64]| {
        let mut g = [0.0; 4];
        f(q, &mut g);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let mut q = start;
    let mut g = [0.0; 4];
    for _ in 0..100 {
        f(&q, &mut g);
        let res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res <= tol {
            return (q, true, res);
        }
        let jac = miranda::jacobian(&f, &q, 1e-7);
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&g)) else {
            return (q, false, res);
        };
        let current = norm2(&q);
        let mut t = 1.0;
        loop {
            let trial: [f64; 4] = std::array::from_fn(|i| q[i] - t * step[i]);
            if norm2(&trial) < (1.0 - 1e-4 * t) * current {
                q = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return (q, false, res);
            }
        }
    }
    f(&q, &mut g);
    let res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (q, res <= tol, res)
}

/// Random feasible distributions with supply exactly `s`: a flat Dirichlet
/// draw mixed with an all-0-tick or all-2-tick population as needed.
fn restart_points(p: &HeterogeneousParams, count: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut mu: [f64; 6] = std::array::from_fn(|_| -(1.0 - rng.gen::<f64>()).ln());
            let total: f64 = mu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= total);
            let supply = mu[1] + mu[4] + 2.0 * (mu[2] + mu[5]);
            let r: f64 = rng.gen();
            let (extreme, t) = if supply < p.s {
                (
                    [0.0, 0.0, r, 0.0, 0.0, 1.0 - r],
                    (p.s - supply) / (2.0 - supply),
                )
            } else {
                ([r, 0.0, 0.0, 1.0 - r, 0.0, 0.0], (supply - p.s) / supply)
            };
            let mixed: [f64; 6] = std::array::from_fn(|i| (1.0 - t) * mu[i] + t * extreme[i]);
            free_of(&mixed)
        })
        .collect()
}

fn feasible(state: &[f64; 6]) -> bool {
    state.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v))
}

fn same_point(a: &[f64; 6], b: &[f64; 6]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-7)
}

fn is_counterexample_family(p: &HeterogeneousParams) -> bool {
    let q = HeterogeneousParams::counterexample(p.s);
    p.a == q.a && p.b == q.b && p.c == q.c && p.d == q.d
}

pub fn solve_heterogeneous(
    p: &HeterogeneousParams,
    tol: f64,
) -> Result<HeterogeneousOutcome, SolverError> {
    solve_heterogeneous_with(p, &HeterogeneousOptions::new(tol))
}

/// Searches for a trading steady state of the heterogeneous market.
///
/// The unit box in `(x, y, v, w)` is face-checked first and, when it
/// certifies, refined by subdivision and polished by Newton. Otherwise
/// damped Newton runs from `opts.restarts` seeded feasible starts. Roots are
/// kept when all six components lie in `[0, 1]`; those whose gross flux is
/// below [`FROZEN_FLUX`] are frozen configurations and are reported
/// separately. Among trading roots the most interior one (largest smallest
/// component) is returned.
pub fn solve_heterogeneous_with(
    p: &HeterogeneousParams,
    opts: &HeterogeneousOptions,
) -> Result<HeterogeneousOutcome, SolverError> {
    p.validate()?;
    check_tol(opts.tol)?;
    let newton_tol = 0.1 * opts.tol;
    let f = |q: &[f64], out: &mut [f64]| reduced_free(p, q, out);

    let mut trading: Vec<([f64; 6], SolveMethod, Option<f64>)> = Vec::new();
    let mut frozen: Vec<[f64; 6]> = Vec::new();
    let mut best_residual = f64::INFINITY;
    let mut converged_restarts = 0;

    let mut record =
        |q: [f64; 4],
         method: SolveMethod,
         volume: Option<f64>,
         trading: &mut Vec<([f64; 6], SolveMethod, Option<f64>)>| {
            let (q, _, polished) = newton(p, q, 0.0);
            let state = p.complete_state(q[0], q[1], q[2], q[3]);
            if !feasible(&state) || p.residual_inf_norm(&state) > opts.tol {
                return;
            }
            let frozen_below = FROZEN_FLUX.max(10.0 * polished.sqrt());
            if p.kernel_at(&state).gross_flux(&state) <= frozen_below {
                if !frozen.iter().any(|s| same_point(s, &state)) {
                    frozen.push(state);
                }
            } else if !trading.iter().any(|(s, _, _)| same_point(s, &state)) {
                trading.push((state, method, volume));
            }
        };

    let unit = SearchBox::unit(4);
    let unit_box_certified = miranda::check_faces(f, &unit, opts.grid_points_per_axis).certified;
    if unit_box_certified {
        let mut ro = RefineOptions::new(opts.eps_volume);
        ro.grid_points_per_axis = opts.grid_points_per_axis;
        let outcome = miranda::refine(f, &unit, &ro)?;
        let c = outcome.final_box.centroid();
        let (q, ok, res) = newton(p, [c[0], c[1], c[2], c[3]], newton_tol);
        best_residual = best_residual.min(res);
        if ok {
            converged_restarts += 1;
            record(
                q,
                SolveMethod::PoincareMiranda,
                Some(outcome.final_box.volume()),
                &mut trading,
            );
        }
    }
    if trading.is_empty() {
        for start in restart_points(p, opts.restarts, opts.seed) {
            let (q, ok, res) = newton(p, start, newton_tol);
            best_residual = best_residual.min(res);
            if ok {
                converged_restarts += 1;
                record(q, SolveMethod::MultistartNewton, None, &mut trading);
            }
        }
    }

    if trading.is_empty() {
        return Ok(HeterogeneousOutcome::NoSteadyState(NoSteadyStateReport {
            restarts: opts.restarts,
            converged_restarts,
            unit_box_certified,
            best_residual,
            frozen_states: frozen,
            conclusive: is_counterexample_family(p) && counterexample_root(p.s).is_none(),
        }));
    }

    let min_component = |s: &[f64; 6]| s.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = (0..trading.len())
        .max_by(|&i, &j| min_component(&trading[i].0).total_cmp(&min_component(&trading[j].0)))
        .expect("non-empty");
    let (state, method, mut volume) = trading.swap_remove(best);
    if volume.is_none() {
        volume = certify_locally(p, &state, opts.grid_points_per_axis);
    }
    let residual_inf_norm = p.residual_inf_norm(&state);
    Ok(HeterogeneousOutcome::Steady(HeterogeneousSolution {
        solution: SteadySolution {
            state: StateDistribution::for_model(p, state.to_vec())?,
            residual_inf_norm,
            method,
            certified_box_volume: volume,
        },
        alternatives: trading.into_iter().map(|(s, _, _)| s).collect(),
        frozen_states: frozen,
    }))
}

/// Face check on a small cube around a Newton root, using the map
/// premultiplied by its inverse Jacobian there (same zero set, near-identity
/// face signs). Returns the cube's volume when it certifies.
fn certify_locally(p: &HeterogeneousParams, state: &[f64; 6], grid: usize) -> Option<f64> {
    let f = |q: &[f64], out: &mut [f64]| reduced_free(p, q, out);
    let center = free_of(state);
    let inverse = miranda::jacobian(&f, &center, 1e-7).try_inverse()?;
    let g = |q: &[f64], out: &mut [f64]| {
        let mut raw = [0.0; 4];
        f(q, &mut raw);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| inverse[(i, j)] * raw[j]).sum();
        }
    };
    let bx = SearchBox::around(&center, 1e-6).ok()?;
    miranda::check_faces(g, &bx, grid)
        .certified
        .then(|| bx.volume())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(s: f64) -> [f64; 6] {
        let x = counterexample_root(s).unwrap();
        let v = (1.0 - 2.0 * x) / (2.0 + 4.0 * x);
        let uz = 2.0 * x * v;
        [x, x, uz, uz, v, v]
    }

    #[test]
    fn closed_form_zeroes_the_reduced_system() {
        let p = HeterogeneousParams::counterexample(1.0);
        let r = reduced_residual_heterogeneous(&p, &closed_form(1.0));
        assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
        let st = closed_form(1.0);
        assert!((st[0] - 0.207107).abs() < 1e-6);
        assert!((st[2] - 0.085786).abs() < 1e-6);
    }

    #[test]
    fn constraint_rows_vanish_on_feasible_points() {
        let p = HeterogeneousParams::counterexample(0.8);
        let st = p.complete_state(0.1, 0.2, 0.1, 0.15);
        let r = reduced_residual_heterogeneous(&p, &st);
        assert!(r[4].abs() < 1e-15 && r[5].abs() < 1e-15);
        let mut q = p.clone();
        q.d = [1.0, 0.0, 0.0];
        let r = reduced_residual_heterogeneous(&q, &[0.0; 6]);
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn counterexample_roots() {
        assert!((counterexample_root(1.0).unwrap() - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(counterexample_root(1.5), Some(0.0));
        assert_eq!(counterexample_root(1.75), None);
        // 4X^2 + 7X + 0.5 has its larger root near -0.0746
        let r = (-7.0 + (49.0f64 - 8.0).sqrt()) / 8.0;
        assert!((r + 0.0746).abs() < 1e-4);
        assert_eq!(counterexample_verdict(0.5), ExistenceVerdict::Exists);
        assert_eq!(counterexample_verdict(1.5), ExistenceVerdict::Boundary);
        assert_eq!(counterexample_verdict(1.75), ExistenceVerdict::Absent);
    }

    #[test]
    fn condition_p_corner_cases() {
        let unit = SearchBox::unit(6);
        let mut p = HeterogeneousParams::counterexample(1.0);
        p.c[0] = 2.0;
        let r = check_condition_p(&p, &unit);
        assert!(r.conditions[0].holds);
        assert_eq!(r.conditions[0].margin, 1.0);

        let mut p = HeterogeneousParams::counterexample(1.0);
        p.a = 0.0;
        p.b = 1.0;
        assert!(check_condition_p(&p, &unit).conditions[1].holds);

        let p = HeterogeneousParams::counterexample(1.0);
        let r = check_condition_p(&p, &unit);
        assert_eq!(r.conditions[0].margin, -1.0);
        assert!(!r.holds);
    }

    #[test]
    fn counterexample_at_unit_supply() {
        let p = HeterogeneousParams::counterexample(1.0);
        let out = solve_heterogeneous(&p, 1e-12).unwrap();
        let sol = out.steady().expect("trading steady state");
        let expected = closed_form(1.0);
        for (a, b) in sol.solution.state.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sol.solution.residual_inf_norm <= 1e-12);
    }

    #[test]
    fn counterexample_without_trading_state() {
        for s in [1.6, 1.75, 1.9] {
            let p = HeterogeneousParams::counterexample(s);
            match solve_heterogeneous(&p, 1e-10).unwrap() {
                HeterogeneousOutcome::NoSteadyState(r) => {
                    assert!(r.conclusive);
                    // all-low-type holders of 1 and 2 ticks never move
                    for f in &r.frozen_states {
                        assert!(f[0].abs() < 1e-8 && f[1].abs() < 1e-8);
                    }
                }
                other => panic!("s = {s}: {other:?}"),
            }
        }
    }

    #[test]
    fn frozen_family_is_stationary() {
        for s in [1.0, 1.5, 1.75, 2.0] {
            let p = HeterogeneousParams::counterexample(s);
            let st = [0.0, 0.0, 0.0, 0.0, 2.0 - s, s - 1.0];
            assert_eq!(p.residual_inf_norm(&st), 0.0);
            assert_eq!(p.kernel_at(&st).gross_flux(&st), 0.0);
        }
    }

    #[test]
    fn restarts_are_feasible() {
        for s in [0.0, 0.3, 1.0, 1.9, 2.0] {
            let p = HeterogeneousParams::counterexample(s);
            for q in restart_points(&p, 16, 3) {
                let st = p.complete_state(q[0], q[1], q[2], q[3]);
                assert!(st.iter().all(|v| *v >= -1e-12), "{st:?}");
                assert!(p.constraint_drift(&st) < 1e-12);
            }
        }
    }
}
