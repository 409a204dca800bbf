use serde::{Deserialize, Serialize};

use super::{
    require_non_negative, require_positive, LinearConstraint, MarketModel, ModelClass, ModelError,
    TransitionKernel,
};

const SPLIT_TOLERANCE: f64 = 1e-12;

/// Investors hold portfolios worth 0, 1 or 2 ticks and trade partial
/// positions pairwise.
///
/// `c[i]` is the `(h,i) -> (l,i)` rate and `d[i]` the `(l,i) -> (h,i)` rate.
/// Configuration files spell these out as `c0 .. c2` and `d0 .. d2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawHeterogeneous", into = "RawHeterogeneous")]
pub struct HeterogeneousParams {
    pub lambda: f64,
    /// Probability that an `(h,0)`/`(l,2)` meeting moves one tick.
    pub a: f64,
    /// Probability that an `(h,0)`/`(l,2)` meeting moves both ticks.
    pub b: f64,
    pub c: [f64; 3],
    pub d: [f64; 3],
    /// Total supply in ticks per investor.
    pub s: f64,
}

#[derive(Serialize, Deserialize)]
struct RawHeterogeneous {
    #[serde(default = "one")]
    lambda: f64,
    a: f64,
    b: f64,
    c0: f64,
    c1: f64,
    c2: f64,
    d0: f64,
    d1: f64,
    d2: f64,
    s: f64,
}

fn one() -> f64 {
    1.0
}

impl From<RawHeterogeneous> for HeterogeneousParams {
    fn from(r: RawHeterogeneous) -> Self {
        Self {
            lambda: r.lambda,
            a: r.a,
            b: r.b,
            c: [r.c0, r.c1, r.c2],
            d: [r.d0, r.d1, r.d2],
            s: r.s,
        }
    }
}

impl From<HeterogeneousParams> for RawHeterogeneous {
    fn from(p: HeterogeneousParams) -> Self {
        Self {
            lambda: p.lambda,
            a: p.a,
            b: p.b,
            c0: p.c[0],
            c1: p.c[1],
            c2: p.c[2],
            d0: p.d[0],
            d1: p.d[1],
            d2: p.d[2],
            s: p.s,
        }
    }
}

pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;
pub const U: usize = 3;
pub const V: usize = 4;
pub const W: usize = 5;

impl HeterogeneousParams {
    /// The non-existence family: `c0 = 0, d0 = 1, a = 1, c1 = d1 = 0, b = 0,
    /// c2 = 1, d2 = 0`.
    pub fn counterexample(s: f64) -> Self {
        Self {
            lambda: 1.0,
            a: 1.0,
            b: 0.0,
            c: [0.0, 0.0, 1.0],
            d: [1.0, 0.0, 0.0],
            s,
        }
    }

    pub fn check_structure(&self) -> Result<(), ModelError> {
        require_non_negative("lambda", self.lambda)?;
        for i in 0..3 {
            require_non_negative(&format!("c{i}"), self.c[i])?;
            require_non_negative(&format!("d{i}"), self.d[i])?;
        }
        if !(self.a >= 0.0 && self.b >= 0.0 && (self.a + self.b - 1.0).abs() <= SPLIT_TOLERANCE) {
            return Err(ModelError::SplitNotUnit {
                a: self.a,
                b: self.b,
            });
        }
        if !(0.0..=2.0).contains(&self.s) {
            return Err(ModelError::SupplyOutOfRange(self.s));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.check_structure()?;
        require_positive("lambda", self.lambda)?;
        if self.c.iter().chain(&self.d).all(|&r| r == 0.0) {
            return Err(ModelError::DegenerateSwitching);
        }
        Ok(())
    }

    /// Solves the two linear constraints for `u` and `z`, returning the full
    /// state `(x, y, z, u, v, w)`.
    pub fn complete_state(&self, x: f64, y: f64, v: f64, w: f64) -> [f64; 6] {
        let z = 0.5 * (self.s - y - v) - w;
        let u = 1.0 - x - y - z - v - w;
        [x, y, z, u, v, w]
    }
}

impl MarketModel for HeterogeneousParams {
    fn class(&self) -> ModelClass {
        ModelClass::Heterogeneous
    }

    fn dim(&self) -> usize {
        6
    }

    fn state_labels(&self) -> Vec<String> {
        ["x", "y", "z", "u", "v", "w"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn rhs_into(&self, mu: &[f64], out: &mut [f64]) {
        let (x, y, z, u, v, w) = (mu[X], mu[Y], mu[Z], mu[U], mu[V], mu[W]);
        let lam = self.lambda;
        let (a, b) = (self.a, self.b);
        let [c0, c1, c2] = self.c;
        let [d0, d1, d2] = self.d;
        // pair flows
        let xv = lam * x * v;
        let xw = lam * x * w;
        let yv = lam * y * v;
        let yw = lam * y * w;
        out[X] = -xv - xw - c0 * x + d0 * u;
        out[Y] = xv + a * xw - yv - yw - c1 * y + d1 * v;
        out[Z] = b * xw + yv + yw - c2 * z + d2 * w;
        out[U] = xv + b * xw + yv + c0 * x - d0 * u;
        out[V] = a * xw - xv + yw - yv + c1 * y - d1 * v;
        out[W] = -xw - yw + c2 * z - d2 * w;
    }

    fn linear_constraints(&self) -> Vec<LinearConstraint> {
        vec![
            LinearConstraint {
                name: "total".into(),
                coeffs: vec![1.0; 6],
                target: 1.0,
            },
            LinearConstraint {
                name: "supply".into(),
                coeffs: vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0],
                target: self.s,
            },
        ]
    }

    fn kernel_at(&self, mu: &[f64]) -> TransitionKernel {
        let lam = self.lambda;
        let mut k = TransitionKernel::new(6);
        k.push(X, Y, lam * (mu[V] + self.a * mu[W]));
        k.push(X, Z, lam * self.b * mu[W]);
        k.push(Y, Z, lam * (mu[V] + mu[W]));
        k.push(V, U, lam * (mu[X] + mu[Y]));
        k.push(W, V, lam * (mu[Y] + self.a * mu[X]));
        k.push(W, U, lam * self.b * mu[X]);
        for (i, (h, l)) in [(X, U), (Y, V), (Z, W)].into_iter().enumerate() {
            k.push(h, l, self.c[i]);
            k.push(l, h, self.d[i]);
        }
        k
    }
}
