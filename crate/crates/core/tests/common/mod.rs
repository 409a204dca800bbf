//! Random parameter draws and feasible states shared by the integration
//! tests. Rates lie in `[0.1, 10]` and total asset mass in `[0.05, 0.9]`.
#![allow(dead_code)]

use otc_core::{HeterogeneousParams, NonSegmentedParams, PartiallySegmentedParams};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rate(rng: &mut impl Rng) -> f64 {
    rng.gen_range(0.1..=10.0)
}

fn rates(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k).map(|_| rate(rng)).collect()
}

/// Positive weights summing to `total`.
pub fn split(rng: &mut impl Rng, k: usize, total: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = w.iter().sum();
    w.iter().map(|x| total * x / sum).collect()
}

pub fn masses(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let total = rng.gen_range(0.05..=0.9);
    split(rng, k, total)
}

pub fn nonsegmented(rng: &mut impl Rng, k: usize) -> NonSegmentedParams {
    NonSegmentedParams {
        lambda: rates(rng, k),
        gamma_u: rate(rng),
        gamma_d: rate(rng),
        gamma_ui: rates(rng, k),
        gamma_di: rates(rng, k),
        m: masses(rng, k),
    }
}

pub fn partially_segmented(rng: &mut impl Rng, k: usize) -> PartiallySegmentedParams {
    PartiallySegmentedParams {
        lambda: rates(rng, k),
        gamma_ui: rates(rng, k),
        gamma_di: rates(rng, k),
        gamma_tilde_ui: rates(rng, k),
        gamma_tilde_di: rates(rng, k),
        m: masses(rng, k),
    }
}

pub fn heterogeneous(rng: &mut impl Rng) -> HeterogeneousParams {
    let a = rng.gen_range(0.0..=1.0);
    HeterogeneousParams {
        lambda: rate(rng),
        a,
        b: 1.0 - a,
        c: [rate(rng), rate(rng), rate(rng)],
        d: [rate(rng), rate(rng), rate(rng)],
        s: rng.gen_range(0.05..=1.95),
    }
}

/// Interior point of the non-segmented state space: owners of asset `i`
/// split `m_i`, non-owners split the rest.
pub fn nonsegmented_state(rng: &mut impl Rng, p: &NonSegmentedParams) -> Vec<f64> {
    let free = split(rng, 2, 1.0 - p.total_mass());
    let mut mu = free;
    for &m in &p.m {
        mu.extend(split(rng, 2, m));
    }
    mu
}

pub fn partially_segmented_state(rng: &mut impl Rng, p: &PartiallySegmentedParams) -> Vec<f64> {
    let k = p.k();
    let mut mu = split(rng, k + 1, 1.0 - p.total_mass());
    for &m in &p.m {
        mu.extend(split(rng, 2, m));
    }
    mu
}

/// `(x, y, z, u, v, w)` with holdings `y + v + 2 (z + w) = s`.
pub fn heterogeneous_state(rng: &mut impl Rng, p: &HeterogeneousParams) -> Vec<f64> {
    let s = p.s;
    let q1 = rng.gen_range(0.0..=1.0) * s.min(2.0 - s);
    let q2 = 0.5 * (s - q1);
    let q0 = 1.0 - q1 - q2;
    let mut mu = [0.0; 6];
    for (k, q) in [q0, q1, q2].into_iter().enumerate() {
        let high = rng.gen_range(0.0..=1.0);
        mu[k] = high * q;
        mu[k + 3] = q - mu[k];
    }
    mu.to_vec()
}
