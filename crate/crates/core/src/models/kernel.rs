/// One non-zero entry of a transition kernel: an investor in state `from`
/// jumps to `to` at `rate` per unit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Per-investor transition intensities evaluated at a fixed population
/// distribution. Pairs absent from `entries` have rate zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    pub dim: usize,
    pub entries: Vec<Transition>,
}

impl TransitionKernel {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, from: usize, to: usize, rate: f64) {
        self.entries.push(Transition { from, to, rate });
    }

    /// Summed rate from `from` to `to`.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.entries
            .iter()
            .filter(|t| t.from == from && t.to == to)
            .map(|t| t.rate)
            .sum()
    }

    /// Mean-field drift: the mass flowing along each entry is
    /// `mu[from] * rate`.
    pub fn drift(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in &self.entries {
            let flow = mu[t.from] * t.rate;
            out[t.from] -= flow;
            out[t.to] += flow;
        }
        out
    }

    /// Total mass moving per unit time, counting every entry separately.
    /// Zero exactly when nothing in the population can change.
    pub fn gross_flux(&self, mu: &[f64]) -> f64 {
        self.entries.iter().map(|t| mu[t.from] * t.rate).sum()
    }
}
