use serde::{Deserialize, Serialize};

use super::{
    check_masses, require_len, require_non_negative, require_positive, LinearConstraint,
    MarketModel, ModelClass, ModelError, NonSegmentedParams, TransitionKernel,
};

/// Each high-type non-owner targets one specific asset and trades only in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartiallySegmentedParams {
    pub lambda: Vec<f64>,
    /// Owner `l -> h` rate per asset.
    pub gamma_ui: Vec<f64>,
    /// Owner `h -> l` rate per asset.
    pub gamma_di: Vec<f64>,
    /// Non-owner `(l,n) -> (hi,n)` rate per asset.
    pub gamma_tilde_ui: Vec<f64>,
    /// Non-owner `(hi,n) -> (l,n)` rate per asset.
    pub gamma_tilde_di: Vec<f64>,
    pub m: Vec<f64>,
}

impl PartiallySegmentedParams {
    pub fn uniform(k: usize, lambda: f64, gamma: f64, m: f64) -> Self {
        Self {
            lambda: vec![lambda; k],
            gamma_ui: vec![gamma; k],
            gamma_di: vec![gamma; k],
            gamma_tilde_ui: vec![gamma; k],
            gamma_tilde_di: vec![gamma; k],
            m: vec![m; k],
        }
    }

    /// The one-asset identification: `gamma_tilde_u1 = gamma_u` and
    /// `gamma_tilde_d1 = gamma_d`. Only meaningful for `K = 1`.
    pub fn from_nonsegmented(p: &NonSegmentedParams) -> Self {
        Self {
            lambda: p.lambda.clone(),
            gamma_ui: p.gamma_ui.clone(),
            gamma_di: p.gamma_di.clone(),
            gamma_tilde_ui: vec![p.gamma_u; p.k()],
            gamma_tilde_di: vec![p.gamma_d; p.k()],
            m: p.m.clone(),
        }
    }

    pub fn k(&self) -> usize {
        self.m.len()
    }

    pub fn gamma_i(&self, i: usize) -> f64 {
        self.gamma_ui[i] + self.gamma_di[i]
    }

    pub fn gamma_tilde_i(&self, i: usize) -> f64 {
        self.gamma_tilde_ui[i] + self.gamma_tilde_di[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.m.iter().sum()
    }

    pub fn check_structure(&self) -> Result<(), ModelError> {
        let k = self.k();
        if k == 0 {
            return Err(ModelError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        for v in [
            &self.lambda,
            &self.gamma_ui,
            &self.gamma_di,
            &self.gamma_tilde_ui,
            &self.gamma_tilde_di,
        ] {
            require_len(k, v.len())?;
        }
        for i in 0..k {
            let n = i + 1;
            require_non_negative(&format!("lambda_{n}"), self.lambda[i])?;
            require_non_negative(&format!("gamma_u{n}"), self.gamma_ui[i])?;
            require_non_negative(&format!("gamma_d{n}"), self.gamma_di[i])?;
            require_non_negative(&format!("gamma_tilde_u{n}"), self.gamma_tilde_ui[i])?;
            require_non_negative(&format!("gamma_tilde_d{n}"), self.gamma_tilde_di[i])?;
        }
        check_masses(&self.m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.check_structure()?;
        for i in 0..self.k() {
            let n = i + 1;
            require_positive(&format!("lambda_{n}"), self.lambda[i])?;
            require_positive(&format!("gamma_u{n}"), self.gamma_ui[i])?;
            require_positive(&format!("gamma_d{n}"), self.gamma_di[i])?;
            require_positive(&format!("gamma_tilde_u{n}"), self.gamma_tilde_ui[i])?;
            require_positive(&format!("gamma_tilde_d{n}"), self.gamma_tilde_di[i])?;
        }
        Ok(())
    }

    pub fn h_n(i: usize) -> usize {
        i
    }

    pub fn l_n(&self) -> usize {
        self.k()
    }

    pub fn h_o(&self, i: usize) -> usize {
        self.k() + 1 + 2 * i
    }

    pub fn l_o(&self, i: usize) -> usize {
        self.k() + 2 + 2 * i
    }
}

impl MarketModel for PartiallySegmentedParams {
    fn class(&self) -> ModelClass {
        ModelClass::PartiallySegmented
    }

    fn dim(&self) -> usize {
        3 * self.k() + 1
    }

    fn state_labels(&self) -> Vec<String> {
        let k = self.k();
        let mut labels: Vec<String> = (1..=k).map(|i| format!("mu_h{i}_n")).collect();
        labels.push("mu_l_n".into());
        for i in 1..=k {
            labels.push(format!("mu_h{i}_o"));
            labels.push(format!("mu_l{i}_o"));
        }
        labels
    }

    fn rhs_into(&self, mu: &[f64], out: &mut [f64]) {
        let ln_idx = self.l_n();
        let ln = mu[ln_idx];
        let mut ln_dot = 0.0;
        for i in 0..self.k() {
            let (hn, ho, lo) = (mu[Self::h_n(i)], mu[self.h_o(i)], mu[self.l_o(i)]);
            let trade = hn * (self.lambda[i] * lo);
            out[Self::h_n(i)] = -trade + self.gamma_tilde_ui[i] * ln - self.gamma_tilde_di[i] * hn;
            ln_dot += trade - self.gamma_tilde_ui[i] * ln + self.gamma_tilde_di[i] * hn;
            out[self.h_o(i)] = trade + self.gamma_ui[i] * lo - self.gamma_di[i] * ho;
            out[self.l_o(i)] = -trade - self.gamma_ui[i] * lo + self.gamma_di[i] * ho;
        }
        out[ln_idx] = ln_dot;
    }

    fn linear_constraints(&self) -> Vec<LinearConstraint> {
        let dim = self.dim();
        let mut rows = vec![LinearConstraint {
            name: "total".into(),
            coeffs: vec![1.0; dim],
            target: 1.0,
        }];
        for i in 0..self.k() {
            let mut coeffs = vec![0.0; dim];
            coeffs[self.h_o(i)] = 1.0;
            coeffs[self.l_o(i)] = 1.0;
            rows.push(LinearConstraint {
                name: format!("owners_{}", i + 1),
                coeffs,
                target: self.m[i],
            });
        }
        rows
    }

    fn kernel_at(&self, mu: &[f64]) -> TransitionKernel {
        let mut kernel = TransitionKernel::new(self.dim());
        let ln = self.l_n();
        for i in 0..self.k() {
            let (hn, ho, lo) = (Self::h_n(i), self.h_o(i), self.l_o(i));
            kernel.push(hn, ho, self.lambda[i] * mu[lo]);
            kernel.push(lo, ln, self.lambda[i] * mu[hn]);
            kernel.push(lo, ho, self.gamma_ui[i]);
            kernel.push(ho, lo, self.gamma_di[i]);
            kernel.push(ln, hn, self.gamma_tilde_ui[i]);
            kernel.push(hn, ln, self.gamma_tilde_di[i]);
        }
        kernel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_asset_matches_nonsegmented_exactly() {
        let ns = NonSegmentedParams {
            lambda: vec![1.7],
            gamma_u: 0.3,
            gamma_d: 2.1,
            gamma_ui: vec![0.9],
            gamma_di: vec![1.3],
            m: vec![0.35],
        };
        let ps = PartiallySegmentedParams::from_nonsegmented(&ns);
        let mu = [0.21, 0.44, 0.2, 0.15];
        let mut a = [0.0; 4];
        let mut b = [0.0; 4];
        ns.rhs_into(&mu, &mut a);
        ps.rhs_into(&mu, &mut b);
        assert_eq!(a, b);
        assert_eq!(ns.state_labels(), {
            let mut l = ps.state_labels();
            l[0] = "mu_h_n".into();
            l
        });
    }

    #[test]
    fn detailed_balance_without_meetings() {
        let p = PartiallySegmentedParams {
            lambda: vec![0.0, 0.0],
            gamma_ui: vec![0.5, 2.0],
            gamma_di: vec![1.5, 1.0],
            gamma_tilde_ui: vec![0.4, 0.8],
            gamma_tilde_di: vec![1.2, 0.6],
            m: vec![0.2, 0.3],
        };
        // owners: l_i = gamma_di m_i / gamma_i; non-owners: h_i = r_i l_n with
        // r_i = gamma_tilde_ui / gamma_tilde_di and l_n (1 + sum r) = 1 - sum m.
        let r: Vec<f64> = (0..2)
            .map(|i| p.gamma_tilde_ui[i] / p.gamma_tilde_di[i])
            .collect();
        let ln = 0.5 / (1.0 + r[0] + r[1]);
        let mut mu = vec![r[0] * ln, r[1] * ln, ln];
        for i in 0..2 {
            let lo = p.gamma_di[i] * p.m[i] / p.gamma_i(i);
            mu.push(p.m[i] - lo);
            mu.push(lo);
        }
        let mut d = vec![0.0; p.dim()];
        p.rhs_into(&mu, &mut d);
        assert!(d.iter().all(|x| x.abs() < 1e-15), "{d:?}");
    }
}
