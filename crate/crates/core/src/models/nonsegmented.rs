use serde::{Deserialize, Serialize};

use super::{
    check_masses, require_len, require_non_negative, require_positive, LinearConstraint,
    MarketModel, ModelClass, ModelError, TransitionKernel,
};

/// Buyers do not target a specific asset: any high-type non-owner may buy
/// any asset a low-type owner offers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonSegmentedParams {
    /// Meeting rate per asset.
    pub lambda: Vec<f64>,
    /// Non-owner `l -> h` rate.
    pub gamma_u: f64,
    /// Non-owner `h -> l` rate.
    pub gamma_d: f64,
    /// Owner `l -> h` rate per asset.
    pub gamma_ui: Vec<f64>,
    /// Owner `h -> l` rate per asset.
    pub gamma_di: Vec<f64>,
    /// Fraction of the population holding each asset.
    pub m: Vec<f64>,
}

impl NonSegmentedParams {
    /// Same rates for every asset.
    pub fn uniform(k: usize, lambda: f64, gamma: f64, m: f64) -> Self {
        Self {
            lambda: vec![lambda; k],
            gamma_u: gamma,
            gamma_d: gamma,
            gamma_ui: vec![gamma; k],
            gamma_di: vec![gamma; k],
            m: vec![m; k],
        }
    }

    pub fn k(&self) -> usize {
        self.m.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_u + self.gamma_d
    }

    pub fn gamma_i(&self, i: usize) -> f64 {
        self.gamma_ui[i] + self.gamma_di[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.m.iter().sum()
    }

    /// Dimensions, finiteness, non-negative rates and the mass budget.
    pub fn check_structure(&self) -> Result<(), ModelError> {
        let k = self.k();
        if k == 0 {
            return Err(ModelError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        require_len(k, self.lambda.len())?;
        require_len(k, self.gamma_ui.len())?;
        require_len(k, self.gamma_di.len())?;
        require_non_negative("gamma_u", self.gamma_u)?;
        require_non_negative("gamma_d", self.gamma_d)?;
        for i in 0..k {
            require_non_negative(&format!("lambda_{}", i + 1), self.lambda[i])?;
            require_non_negative(&format!("gamma_u{}", i + 1), self.gamma_ui[i])?;
            require_non_negative(&format!("gamma_d{}", i + 1), self.gamma_di[i])?;
        }
        check_masses(&self.m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.check_structure()?;
        require_positive("gamma_u", self.gamma_u)?;
        require_positive("gamma_d", self.gamma_d)?;
        for i in 0..self.k() {
            require_positive(&format!("lambda_{}", i + 1), self.lambda[i])?;
            require_positive(&format!("gamma_u{}", i + 1), self.gamma_ui[i])?;
            require_positive(&format!("gamma_d{}", i + 1), self.gamma_di[i])?;
        }
        Ok(())
    }

    pub const H_N: usize = 0;
    pub const L_N: usize = 1;

    pub fn h_o(i: usize) -> usize {
        2 + 2 * i
    }

    pub fn l_o(i: usize) -> usize {
        3 + 2 * i
    }
}

impl MarketModel for NonSegmentedParams {
    fn class(&self) -> ModelClass {
        ModelClass::NonSegmented
    }

    fn dim(&self) -> usize {
        2 * self.k() + 2
    }

    fn state_labels(&self) -> Vec<String> {
        let mut labels = vec!["mu_h_n".to_string(), "mu_l_n".to_string()];
        for i in 1..=self.k() {
            labels.push(format!("mu_h{i}_o"));
            labels.push(format!("mu_l{i}_o"));
        }
        labels
    }

    fn rhs_into(&self, mu: &[f64], out: &mut [f64]) {
        let hn = mu[Self::H_N];
        let ln = mu[Self::L_N];
        let mut trades = 0.0;
        for i in 0..self.k() {
            let (ho, lo) = (mu[Self::h_o(i)], mu[Self::l_o(i)]);
            let trade = hn * (self.lambda[i] * lo);
            trades += trade;
            out[Self::h_o(i)] = trade + self.gamma_ui[i] * lo - self.gamma_di[i] * ho;
            out[Self::l_o(i)] = -trade - self.gamma_ui[i] * lo + self.gamma_di[i] * ho;
        }
        out[Self::H_N] = -trades + self.gamma_u * ln - self.gamma_d * hn;
        out[Self::L_N] = trades - self.gamma_u * ln + self.gamma_d * hn;
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
            coeffs[Self::h_o(i)] = 1.0;
            coeffs[Self::l_o(i)] = 1.0;
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
        kernel.push(Self::L_N, Self::H_N, self.gamma_u);
        kernel.push(Self::H_N, Self::L_N, self.gamma_d);
        for i in 0..self.k() {
            let (ho, lo) = (Self::h_o(i), Self::l_o(i));
            kernel.push(Self::H_N, ho, self.lambda[i] * mu[lo]);
            kernel.push(lo, Self::L_N, self.lambda[i] * mu[Self::H_N]);
            kernel.push(lo, ho, self.gamma_ui[i]);
            kernel.push(ho, lo, self.gamma_di[i]);
        }
        kernel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::StateDistribution;

    fn benchmark() -> NonSegmentedParams {
        NonSegmentedParams::uniform(1, 1.0, 1.0, 0.2)
    }

    #[test]
    fn validation_examples() {
        assert!(benchmark().validate().is_ok());
        let mut p = NonSegmentedParams::uniform(2, 1.0, 1.0, 0.0);
        p.m = vec![0.6, 0.5];
        assert!(matches!(p.validate(), Err(ModelError::MassOverflow(_))));
        let mut p = benchmark();
        p.gamma_d = 0.0;
        assert!(matches!(
            p.validate(),
            Err(ModelError::NonPositiveRate { .. })
        ));
        assert!(p.check_structure().is_ok());
        p.lambda = vec![1.0, 2.0];
        assert!(matches!(
            p.check_structure(),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hand_evaluated_drift() {
        let mu = StateDistribution::new(ModelClass::NonSegmented, vec![0.4, 0.4, 0.1, 0.1]);
        let mut p = benchmark();
        p.lambda = vec![0.0];
        let d = p.rhs(&mu).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-15), "{d:?}");

        let d = benchmark().rhs(&mu).unwrap();
        assert!((d[0] + 0.04).abs() < 1e-15);
        assert!((d[3] + 0.04).abs() < 1e-15);
        assert!(d.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let mu = StateDistribution::new(ModelClass::NonSegmented, vec![0.5, 0.5]);
        assert!(matches!(
            benchmark().rhs(&mu),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_table() {
        let p = benchmark();
        let mu = [0.4, 0.4, 0.2, 0.0];
        let k = p.kernel_at(&mu);
        assert_eq!(k.rate(1, 0), p.gamma_u);
        assert_eq!(k.rate(0, 2), 0.0);
        assert_eq!(k.rate(3, 1), 0.4);
    }
}
