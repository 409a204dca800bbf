//! Zero localisation on axis-aligned boxes.
//!
//! A continuous map `f: box -> R^n` has a zero in the box when, for every
//! coordinate `i`, `f_i` keeps one sign on the face `x_i = lower_i` and the
//! opposite sign on `x_i = upper_i`. Faces are checked by sampling on a
//! uniform grid, so a certificate is a strong heuristic rather than a proof.
//! Each coordinate may use either orientation (`<= 0` below and `>= 0`
//! above, or the reverse).
//!
//! [`refine`] repeatedly halves every side of the active box through its
//! centroid and keeps the child that certifies, which zooms in on the zero
//! at a rate of `2^-n` in volume per step.

use std::cell::RefCell;

use nalgebra::DMatrix;

/// Slack on face signs, absorbing rounding at faces that pass through a zero.
pub const SIGN_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MirandaError {
    #[error("box bounds are invalid: {0}")]
    InvalidBox(String),
    #[error("face conditions do not hold on the initial box")]
    NotCertified(FaceCertificate),
    #[error("no sub-box certifies at step {step}")]
    LostTrack { step: usize },
    #[error("eps = {0} must lie in (0, 1)")]
    EpsOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, MirandaError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(MirandaError::InvalidBox(format!(
                "{} lower bounds, {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(MirandaError::InvalidBox(format!("side {i}: [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        }
    }

    /// Cube of half-width `radius` around `center`.
    pub fn around(center: &[f64], radius: f64) -> Result<Self, MirandaError> {
        Self::new(
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, u))| *l <= *p && *p <= *u)
    }

    /// The `2^n` children cut by the hyperplanes through the centroid. Child
    /// `j` takes the upper half of coordinate `i` when bit `i` of `j` is set.
    pub fn subdivide(&self) -> Vec<SearchBox> {
        let n = self.dim();
        let mid = self.centroid();
        (0..1usize << n)
            .map(|mask| {
                let mut lower = self.lower.clone();
                let mut upper = self.upper.clone();
                for i in 0..n {
                    if mask >> i & 1 == 1 {
                        lower[i] = mid[i];
                    } else {
                        upper[i] = mid[i];
                    }
                }
                SearchBox { lower, upper }
            })
            .collect()
    }

    /// Calls `visit` on each grid point of the face `x_i = lower_i` (or
    /// `upper_i`). Stops early when `visit` returns `false`.
    fn visit_face(
        &self,
        i: usize,
        upper_face: bool,
        grid: usize,
        mut visit: impl FnMut(&[f64]) -> bool,
    ) {
        let n = self.dim();
        let mut point = self.lower.clone();
        point[i] = if upper_face {
            self.upper[i]
        } else {
            self.lower[i]
        };
        let free: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut counter = vec![0usize; free.len()];
        let denom = (grid - 1) as f64;
        loop {
            for (slot, &j) in free.iter().enumerate() {
                point[j] = if counter[slot] + 1 == grid {
                    self.upper[j]
                } else {
                    self.lower[j] + self.width(j) * counter[slot] as f64 / denom
                };
            }
            if !visit(&point) {
                return;
            }
            // odometer increment
            let mut slot = 0;
            loop {
                if slot == free.len() {
                    return;
                }
                counter[slot] += 1;
                if counter[slot] < grid {
                    break;
                }
                counter[slot] = 0;
                slot += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `f_i <= 0` on the lower face and `>= 0` on the upper face.
    Standard,
    /// `f_i >= 0` on the lower face and `<= 0` on the upper face.
    Flipped,
}

/// Observed range of one component on its two faces.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateVerdict {
    pub lower_min: f64,
    pub lower_max: f64,
    pub upper_min: f64,
    pub upper_max: f64,
    pub orientation: Option<Orientation>,
}

/// Sampled Poincaré–Miranda face check. `certified` means every coordinate
/// found a consistent orientation at the sampled points; it is not an
/// exhaustive verification.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCertificate {
    pub coordinates: Vec<CoordinateVerdict>,
    pub grid_points_per_axis: usize,
    pub certified: bool,
}

fn orientation_of(
    lower_min: f64,
    lower_max: f64,
    upper_min: f64,
    upper_max: f64,
) -> Option<Orientation> {
    if lower_max <= SIGN_TOLERANCE && upper_min >= -SIGN_TOLERANCE {
        Some(Orientation::Standard)
    } else if lower_min >= -SIGN_TOLERANCE && upper_max <= SIGN_TOLERANCE {
        Some(Orientation::Flipped)
    } else {
        None
    }
}

/// Samples every face of `bx` on a grid of `grid_points_per_axis` points per
/// free axis (at least 2) and records the sign pattern of the paired
/// component.
pub fn check_faces<F>(f: F, bx: &SearchBox, grid_points_per_axis: usize) -> FaceCertificate
where
    F: Fn(&[f64], &mut [f64]),
{
    let grid = grid_points_per_axis.max(2);
    let n = bx.dim();
    let mut out = vec![0.0; n];
    let coordinates: Vec<CoordinateVerdict> = (0..n)
        .map(|i| {
            let mut range = |upper_face: bool| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                bx.visit_face(i, upper_face, grid, |p| {
                    f(p, &mut out);
                    if out[i].is_nan() {
                        // undefined value: no orientation can hold
                        lo = f64::NEG_INFINITY;
                        hi = f64::INFINITY;
                    } else {
                        lo = lo.min(out[i]);
                        hi = hi.max(out[i]);
                    }
                    true
                });
                (lo, hi)
            };
            let (lower_min, lower_max) = range(false);
            let (upper_min, upper_max) = range(true);
            CoordinateVerdict {
                lower_min,
                lower_max,
                upper_min,
                upper_max,
                orientation: orientation_of(lower_min, lower_max, upper_min, upper_max),
            }
        })
        .collect();
    let certified = coordinates.iter().all(|c| c.orientation.is_some());
    FaceCertificate {
        coordinates,
        grid_points_per_axis: grid,
        certified,
    }
}

/// Early-exit variant of [`check_faces`] returning only the verdict.
fn certifies<F>(f: &F, bx: &SearchBox, grid: usize, out: &mut [f64]) -> bool
where
    F: Fn(&[f64], &mut [f64]) + ?Sized,
{
    (0..bx.dim()).all(|i| {
        // (standard still possible, flipped still possible)
        let mut state = (true, true);
        for upper_face in [false, true] {
            bx.visit_face(i, upper_face, grid, |p| {
                f(p, out);
                let v = out[i];
                let (nonpos, nonneg) = (v <= SIGN_TOLERANCE, v >= -SIGN_TOLERANCE);
                if upper_face {
                    state.0 &= nonneg;
                    state.1 &= nonpos;
                } else {
                    state.0 &= nonpos;
                    state.1 &= nonneg;
                }
                state.0 || state.1
            });
            if !(state.0 || state.1) {
                return false;
            }
        }
        true
    })
}

/// Number of halving steps after which a unit box in `n` dimensions has
/// volume at most `eps`: `ceil(ln eps / (n ln 0.5))`.
pub fn iterations_needed(eps: f64, n: usize) -> Result<usize, MirandaError> {
    if !(eps > 0.0 && eps < 1.0) || n == 0 {
        return Err(MirandaError::EpsOutOfRange(eps));
    }
    let estimate = (eps.ln() / (n as f64 * 0.5f64.ln())).ceil().max(1.0) as usize;
    // The quotient is exact only up to rounding; settle on the smallest k
    // with 2^(-k n) <= eps using exact powers of two.
    let fits = |k: usize| 0.5f64.powi((k * n) as i32) <= eps;
    let mut k = estimate;
    while k > 1 && fits(k - 1) {
        k -= 1;
    }
    while !fits(k) {
        k += 1;
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    /// Stop once the active box volume is at most this.
    pub eps_volume: f64,
    pub grid_points_per_axis: usize,
    /// Also try the map premultiplied by the inverse finite-difference
    /// Jacobian at the parent centroid. The zero set is unchanged, and near
    /// a simple zero the preconditioned map is close to `x - zero`, whose
    /// faces certify reliably.
    pub precondition: bool,
    /// When no child certifies, continue with the child of smallest
    /// centroid residual instead of failing.
    pub residual_fallback: bool,
}

impl RefineOptions {
    pub fn new(eps_volume: f64) -> Self {
        Self {
            eps_volume,
            grid_points_per_axis: DEFAULT_GRID,
            precondition: true,
            residual_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// Exactly one child certified.
    Certified,
    /// Several children certified; the one with smallest centroid residual
    /// was kept.
    Ambiguous,
    /// No child certified; kept by residual alone.
    Uncertified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub final_box: SearchBox,
    pub steps: Vec<StepStatus>,
}

impl RefineOutcome {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Every step kept a child whose faces certified.
    pub fn fully_certified(&self) -> bool {
        self.steps.iter().all(|s| *s != StepStatus::Uncertified)
    }
}

fn residual_at<F: Fn(&[f64], &mut [f64])>(f: &F, p: &[f64], out: &mut [f64]) -> f64 {
    f(p, out);
    out.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Central-difference Jacobian of `f` at `p`.
pub fn jacobian<F: Fn(&[f64], &mut [f64])>(f: &F, p: &[f64], h: f64) -> DMatrix<f64> {
    let n = p.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut x = p.to_vec();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for j in 0..n {
        x[j] = p[j] + h;
        f(&x, &mut plus);
        x[j] = p[j] - h;
        f(&x, &mut minus);
        x[j] = p[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Refines `box0` by centroid subdivision until its volume is at most
/// `opts.eps_volume`. The initial box must certify with the raw map.
pub fn refine<F>(
    f: F,
    box0: &SearchBox,
    opts: &RefineOptions,
) -> Result<RefineOutcome, MirandaError>
where
    F: Fn(&[f64], &mut [f64]),
{
    let grid = opts.grid_points_per_axis.max(2);
    let initial = check_faces(&f, box0, grid);
    if !initial.certified {
        return Err(MirandaError::NotCertified(initial));
    }
    let n = box0.dim();
    let mut out = vec![0.0; n];
    let mut active = box0.clone();
    let mut steps = Vec::new();
    while active.volume() > opts.eps_volume {
        let preconditioner = if opts.precondition {
            let centroid = active.centroid();
            let h = 1e-7
                * (0..n)
                    .map(|i| active.width(i))
                    .fold(1.0, f64::min)
                    .max(1e-9);
            jacobian(&f, &centroid, h).try_inverse()
        } else {
            None
        };
        let children = active.subdivide();
        let scratch = RefCell::new(vec![0.0; n]);
        let preconditioned = |x: &[f64], o: &mut [f64]| {
            let p = preconditioner.as_ref().expect("preconditioner present");
            let mut raw = scratch.borrow_mut();
            f(x, &mut raw);
            for (i, oi) in o.iter_mut().enumerate() {
                *oi = (0..n).map(|j| p[(i, j)] * raw[j]).sum();
            }
        };
        let certified: Vec<bool> = children
            .iter()
            .map(|child| {
                certifies(&f, child, grid, &mut out)
                    || (preconditioner.is_some()
                        && certifies(&preconditioned, child, grid, &mut out))
            })
            .collect();
        let residuals: Vec<f64> = children
            .iter()
            .map(|c| residual_at(&f, &c.centroid(), &mut out))
            .collect();
        let count = certified.iter().filter(|&&c| c).count();
        let pick = |admissible: &dyn Fn(usize) -> bool| {
            (0..children.len())
                .filter(|&j| admissible(j))
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if residuals[b] <= residuals[j] => Some(b),
                    _ => Some(j),
                })
        };
        let (choice, status) = match count {
            1 => (pick(&|j| certified[j]), StepStatus::Certified),
            0 if opts.residual_fallback => (pick(&|_| true), StepStatus::Uncertified),
            0 => {
                return Err(MirandaError::LostTrack {
                    step: steps.len() + 1,
                })
            }
            _ => (pick(&|j| certified[j]), StepStatus::Ambiguous),
        };
        active = children[choice.expect("at least one child")].clone();
        steps.push(status);
    }
    Ok(RefineOutcome {
        final_box: active,
        steps,
    })
}
