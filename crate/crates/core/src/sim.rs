//! Finite-population jump process behind the mean-field equations.
//!
//! Each investor switches type autonomously at the tabulated per-investor
//! rates, and every unordered pair of compatible investors meets at rate
//! `lambda / N`. Events are drawn with the direct method: an exponential
//! clock on the aggregate rate, then a categorical choice of reaction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::models::{
    HeterogeneousParams, MarketModel, ModelClass, ModelError, ModelParams, NonSegmentedParams,
    PartiallySegmentedParams, StateDistribution,
};
use crate::ode::{self, OdeError, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("infeasible initial population: {0}")]
    InfeasibleInitial(String),
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One kind of event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reaction {
    /// A single investor moves `from -> to` at `rate`.
    Switch { from: usize, to: usize, rate: f64 },
    /// An investor in `first` meets one in `second`; each such pair fires at
    /// `rate / N` and the two move to `first_to` and `second_to`.
    Trade {
        first: usize,
        second: usize,
        first_to: usize,
        second_to: usize,
        rate: f64,
    },
}

impl Reaction {
    fn propensity(&self, counts: &[usize], n: f64) -> f64 {
        match *self {
            Reaction::Switch { from, rate, .. } => rate * counts[from] as f64,
            Reaction::Trade {
                first,
                second,
                rate,
                ..
            } => rate * counts[first] as f64 * counts[second] as f64 / n,
        }
    }

    /// Contribution of this reaction to the mean-field drift at `mu`.
    pub fn add_drift(&self, mu: &[f64], out: &mut [f64]) {
        match *self {
            Reaction::Switch { from, to, rate } => {
                let flow = rate * mu[from];
                out[from] -= flow;
                out[to] += flow;
            }
            Reaction::Trade {
                first,
                second,
                first_to,
                second_to,
                rate,
            } => {
                let flow = rate * mu[first] * mu[second];
                out[first] -= flow;
                out[second] -= flow;
                out[first_to] += flow;
                out[second_to] += flow;
            }
        }
    }
}

fn switch_pair(list: &mut Vec<Reaction>, high: usize, low: usize, down: f64, up: f64) {
    list.push(Reaction::Switch {
        from: high,
        to: low,
        rate: down,
    });
    list.push(Reaction::Switch {
        from: low,
        to: high,
        rate: up,
    });
}

/// The reaction list of a model; zero-rate reactions are dropped.
pub fn reactions(params: &ModelParams) -> Vec<Reaction> {
    let mut list = Vec::new();
    match params {
        ModelParams::NonSegmented(p) => {
            let (hn, ln) = (NonSegmentedParams::H_N, NonSegmentedParams::L_N);
            switch_pair(&mut list, hn, ln, p.gamma_d, p.gamma_u);
            for i in 0..p.k() {
                let (ho, lo) = (NonSegmentedParams::h_o(i), NonSegmentedParams::l_o(i));
                switch_pair(&mut list, ho, lo, p.gamma_di[i], p.gamma_ui[i]);
                list.push(Reaction::Trade {
                    first: hn,
                    second: lo,
                    first_to: ho,
                    second_to: ln,
                    rate: p.lambda[i],
                });
            }
        }
        ModelParams::PartiallySegmented(p) => {
            let ln = p.l_n();
            for i in 0..p.k() {
                let (hn, ho, lo) = (PartiallySegmentedParams::h_n(i), p.h_o(i), p.l_o(i));
                switch_pair(&mut list, hn, ln, p.gamma_tilde_di[i], p.gamma_tilde_ui[i]);
                switch_pair(&mut list, ho, lo, p.gamma_di[i], p.gamma_ui[i]);
                list.push(Reaction::Trade {
                    first: hn,
                    second: lo,
                    first_to: ho,
                    second_to: ln,
                    rate: p.lambda[i],
                });
            }
        }
        ModelParams::Heterogeneous(p) => {
            use crate::models::heterogeneous::{U, V, W, X, Y, Z};
            for (i, (h, l)) in [(X, U), (Y, V), (Z, W)].into_iter().enumerate() {
                switch_pair(&mut list, h, l, p.c[i], p.d[i]);
            }
            let lam = p.lambda;
            let trades = [
                (X, V, Y, U, lam),
                (X, W, Y, V, lam * p.a),
                (X, W, Z, U, lam * p.b),
                (Y, V, Z, U, lam),
                (Y, W, Z, V, lam),
            ];
            for (first, second, first_to, second_to, rate) in trades {
                list.push(Reaction::Trade {
                    first,
                    second,
                    first_to,
                    second_to,
                    rate,
                });
            }
        }
    }
    list.retain(|r| match r {
        Reaction::Switch { rate, .. } | Reaction::Trade { rate, .. } => *rate > 0.0,
    });
    list
}

/// Investors and their states, with per-state member lists so a uniformly
/// random member of any state can be drawn in constant time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    class: ModelClass,
    states: Vec<usize>,
    counts: Vec<usize>,
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
}

impl Population {
    /// Builds a population from one state index per investor.
    pub fn from_states(
        class: ModelClass,
        dim: usize,
        states: Vec<usize>,
    ) -> Result<Self, SimError> {
        let mut members = vec![Vec::new(); dim];
        let mut slot = Vec::with_capacity(states.len());
        for (id, &s) in states.iter().enumerate() {
            let list = members.get_mut(s).ok_or_else(|| {
                SimError::InfeasibleInitial(format!("investor {id} has state {s} outside 0..{dim}"))
            })?;
            slot.push(list.len());
            list.push(id);
        }
        let counts = members.iter().map(Vec::len).collect();
        Ok(Self {
            class,
            states,
            counts,
            members,
            slot,
        })
    }

    /// Investors are numbered in state order.
    pub fn from_counts(class: ModelClass, counts: &[usize]) -> Self {
        let states = counts
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(s, c))
            .collect();
        Self::from_states(class, counts.len(), states).expect("states drawn from 0..dim")
    }

    /// Rounds `n * mu` to integer counts: largest remainder over the
    /// conserved groups (non-owners and each asset's owners, or each holding
    /// size), then within each group. For the heterogeneous market the group
    /// sizes are then repaired so total holdings equal `round(n s)`.
    pub fn from_distribution(
        params: &ModelParams,
        mu: &StateDistribution,
        n: usize,
    ) -> Result<Self, SimError> {
        if n < 2 {
            return Err(SimError::InfeasibleInitial(format!(
                "population size {n}; pair meetings need at least 2 investors"
            )));
        }
        params
            .check_state(mu)
            .map_err(|e| SimError::InfeasibleInitial(e.to_string()))?;
        let groups = conserved_groups(params);
        let masses: Vec<f64> = groups
            .iter()
            .map(|g| g.iter().map(|&s| mu.values[s]).sum())
            .collect();
        let mut sizes = largest_remainder(n, &masses);
        if let ModelParams::Heterogeneous(p) = params {
            repair_supply(&mut sizes, (n as f64 * p.s).round() as usize);
        }
        let mut counts = vec![0; params.dim()];
        let owners_from = match params {
            ModelParams::Heterogeneous(_) => groups.len(),
            _ => 1,
        };
        for (g, ((group, &size), &mass)) in groups.iter().zip(&sizes).zip(&masses).enumerate() {
            if g >= owners_from && mass > 0.0 && size == 0 {
                return Err(SimError::InfeasibleInitial(format!(
                    "owner group of mass {mass} rounds to no investors at N = {n}"
                )));
            }
            let weights: Vec<f64> = group.iter().map(|&s| mu.values[s]).collect();
            for (&s, c) in group.iter().zip(largest_remainder(size, &weights)) {
                counts[s] = c;
            }
        }
        Ok(Self::from_counts(params.class(), &counts))
    }

    pub fn class(&self) -> ModelClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Total ticks held, for heterogeneous populations.
    pub fn holdings(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .map(|(s, c)| c * (s % 3))
            .sum()
    }

    fn random_member<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        let list = &self.members[state];
        list[rng.gen_range(0..list.len())]
    }

    fn relocate(&mut self, id: usize, to: usize) {
        let from = self.states[id];
        let pos = self.slot[id];
        self.members[from].swap_remove(pos);
        if let Some(&moved) = self.members[from].get(pos) {
            self.slot[moved] = pos;
        }
        self.slot[id] = self.members[to].len();
        self.members[to].push(id);
        self.counts[from] -= 1;
        self.counts[to] += 1;
        self.states[id] = to;
    }
}

fn conserved_groups(params: &ModelParams) -> Vec<Vec<usize>> {
    match params {
        ModelParams::NonSegmented(p) => std::iter::once(vec![0, 1])
            .chain((0..p.k()).map(|i| vec![NonSegmentedParams::h_o(i), NonSegmentedParams::l_o(i)]))
            .collect(),
        ModelParams::PartiallySegmented(p) => {
            let mut non_owners: Vec<usize> =
                (0..p.k()).map(PartiallySegmentedParams::h_n).collect();
            non_owners.push(p.l_n());
            std::iter::once(non_owners)
                .chain((0..p.k()).map(|i| vec![p.h_o(i), p.l_o(i)]))
                .collect()
        }
        ModelParams::Heterogeneous(_) => vec![vec![0, 3], vec![1, 4], vec![2, 5]],
    }
}

/// Integer apportionment of `total` proportional to `weights`; leftover
/// units go to the largest fractional parts, lower index first on ties.
/// All-zero weights are treated as equal.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (quotas[i] - quotas[i].floor(), quotas[j] - quotas[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Moves investors between the 0-, 1- and 2-tick groups until total
/// holdings equal `target`.
fn repair_supply(sizes: &mut [usize], target: usize) {
    let supply = |s: &[usize]| s[1] + 2 * s[2];
    while supply(sizes) < target {
        if sizes[0] > 0 {
            sizes[0] -= 1;
            sizes[1] += 1;
        } else {
            sizes[1] -= 1;
            sizes[2] += 1;
        }
    }
    while supply(sizes) > target {
        if sizes[2] > 0 {
            sizes[2] -= 1;
            sizes[1] += 1;
        } else {
            sizes[1] -= 1;
            sizes[0] += 1;
        }
    }
}

/// `counts / N`.
pub fn empirical_distribution(pop: &Population) -> StateDistribution {
    let n = pop.len() as f64;
    StateDistribution::new(
        pop.class,
        pop.counts.iter().map(|&c| c as f64 / n).collect(),
    )
}

/// An event-by-event simulator. Deterministic given its seed.
#[derive(Debug, Clone)]
pub struct Simulator {
    reactions: Vec<Reaction>,
    population: Population,
    rng: ChaCha8Rng,
    time: f64,
    events: u64,
    pending: Option<f64>,
    propensities: Vec<f64>,
}

impl Simulator {
    pub fn new(params: &ModelParams, initial: Population, seed: u64) -> Result<Self, SimError> {
        params.check_structure()?;
        if initial.len() < 2 {
            return Err(SimError::InfeasibleInitial(format!(
                "population size {}; pair meetings need at least 2 investors",
                initial.len()
            )));
        }
        if initial.class != params.class() || initial.counts.len() != params.dim() {
            return Err(SimError::InfeasibleInitial(format!(
                "population of class {} with {} states does not fit a {} model with {} states",
                initial.class,
                initial.counts.len(),
                params.class(),
                params.dim()
            )));
        }
        let reactions = reactions(params);
        Ok(Self {
            propensities: vec![0.0; reactions.len()],
            reactions,
            population: initial,
            rng: ChaCha8Rng::seed_from_u64(seed),
            time: 0.0,
            events: 0,
            pending: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    fn total_rate(&mut self) -> f64 {
        let n = self.population.len() as f64;
        let counts = &self.population.counts;
        for (p, r) in self.propensities.iter_mut().zip(&self.reactions) {
            *p = r.propensity(counts, n);
        }
        self.propensities.iter().sum()
    }

    /// Fires the next event if it happens no later than `horizon`. Returns
    /// the index of the reaction fired.
    fn step_until(&mut self, horizon: f64) -> Option<usize> {
        let total = self.total_rate();
        let next = match self.pending {
            Some(t) => t,
            None if total > 0.0 => {
                let u: f64 = self.rng.gen();
                let t = self.time - (1.0 - u).ln() / total;
                self.pending = Some(t);
                t
            }
            None => return None,
        };
        if next > horizon {
            return None;
        }
        let mut target = self.rng.gen::<f64>() * total;
        let mut chosen = self.propensities.len() - 1;
        for (i, &p) in self.propensities.iter().enumerate() {
            if target < p {
                chosen = i;
                break;
            }
            target -= p;
        }
        while self.propensities[chosen] == 0.0 {
            chosen -= 1;
        }
        self.apply(chosen);
        self.time = next;
        self.pending = None;
        self.events += 1;
        Some(chosen)
    }

    fn apply(&mut self, index: usize) {
        match self.reactions[index] {
            Reaction::Switch { from, to, .. } => {
                let id = self.population.random_member(from, &mut self.rng);
                self.population.relocate(id, to);
            }
            Reaction::Trade {
                first,
                second,
                first_to,
                second_to,
                ..
            } => {
                let a = self.population.random_member(first, &mut self.rng);
                let b = self.population.random_member(second, &mut self.rng);
                self.population.relocate(a, first_to);
                self.population.relocate(b, second_to);
            }
        }
    }

    /// Fires the next event and returns its time and reaction index, or
    /// `None` when every rate is zero.
    pub fn next_event(&mut self) -> Option<(f64, usize)> {
        self.step_until(f64::INFINITY).map(|i| (self.time, i))
    }

    /// Fires every event up to and including time `t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.step_until(t).is_some() {}
        self.time = self.time.max(t);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub sample_times: Vec<f64>,
    pub empirical: Vec<StateDistribution>,
    pub counts: Vec<Vec<usize>>,
    pub event_count: u64,
    pub seed: u64,
}

/// Runs one replication from `initial`, sampling at
/// [`ode::sample_grid`]`(t_end, sample_every)`.
pub fn simulate(
    params: &ModelParams,
    initial: Population,
    t_end: f64,
    sample_every: f64,
    seed: u64,
) -> Result<SimulationResult, SimError> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(SimError::InvalidHorizon(format!("t_end = {t_end}")));
    }
    if !(sample_every.is_finite() && sample_every > 0.0) {
        return Err(SimError::InvalidHorizon(format!(
            "sample_every = {sample_every}"
        )));
    }
    let mut sim = Simulator::new(params, initial, seed)?;
    let sample_times = ode::sample_grid(t_end, sample_every);
    let mut empirical = Vec::with_capacity(sample_times.len());
    let mut counts = Vec::with_capacity(sample_times.len());
    for &t in &sample_times {
        sim.advance_to(t);
        empirical.push(empirical_distribution(&sim.population));
        counts.push(sim.population.counts.clone());
    }
    Ok(SimulationResult {
        sample_times,
        empirical,
        counts,
        event_count: sim.events,
        seed,
    })
}

/// Independent replications, one per seed, run in parallel.
pub fn simulate_many(
    params: &ModelParams,
    initial: &Population,
    t_end: f64,
    sample_every: f64,
    seeds: &[u64],
) -> Result<Vec<SimulationResult>, SimError> {
    seeds
        .par_iter()
        .map(|&seed| simulate(params, initial.clone(), t_end, sample_every, seed))
        .collect()
}

/// The mean-field trajectory matching a simulation: same grid, started from
/// the first empirical snapshot, with asset masses or supply read off that
/// snapshot.
pub fn meanfield_reference(
    params: &ModelParams,
    sim: &SimulationResult,
    step: f64,
) -> Result<Trajectory, OdeError> {
    let start = &sim.empirical[0];
    let model = params.recalibrated_to(&start.values);
    let t_end = *sim.sample_times.last().expect("grid starts at 0");
    let every = sim.sample_times.get(1).copied().unwrap_or(t_end.max(1.0));
    ode::integrate(&model, start, t_end, step, every)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanfieldComparison {
    /// Largest componentwise deviation over all sampled times.
    pub sup_distance: f64,
    /// Largest componentwise deviation at each sampled time.
    pub per_time: Vec<f64>,
    pub worst_time: f64,
    pub worst_component: usize,
}

pub fn compare_to_meanfield(
    sim: &SimulationResult,
    ode: &Trajectory,
) -> Result<MeanfieldComparison, SimError> {
    if sim.sample_times.len() != ode.times.len() {
        return Err(SimError::GridMismatch(format!(
            "{} simulation samples against {} trajectory samples",
            sim.sample_times.len(),
            ode.times.len()
        )));
    }
    let mut per_time = Vec::with_capacity(ode.times.len());
    let (mut sup_distance, mut worst_time, mut worst_component) = (0.0, 0.0, 0);
    for (k, (&ts, &to)) in sim.sample_times.iter().zip(&ode.times).enumerate() {
        if (ts - to).abs() > 1e-9 * ts.abs().max(1.0) {
            return Err(SimError::GridMismatch(format!(
                "sample {k} at t = {ts} against t = {to}"
            )));
        }
        let (a, b) = (&sim.empirical[k], &ode.states[k]);
        if a.class != b.class || a.len() != b.len() {
            return Err(SimError::GridMismatch(format!(
                "sample {k}: {} state of length {} against {} state of length {}",
                a.class,
                a.len(),
                b.class,
                b.len()
            )));
        }
        let mut here = 0.0;
        for (c, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            let d = (x - y).abs();
            if d > here {
                here = d;
            }
            if d > sup_distance {
                sup_distance = d;
                worst_time = ts;
                worst_component = c;
            }
        }
        per_time.push(here);
    }
    Ok(MeanfieldComparison {
        sup_distance,
        per_time,
        worst_time,
        worst_component,
    })
}

/// Convenience: heterogeneous populations are most naturally given by the
/// six counts directly.
pub fn heterogeneous_population(
    p: &HeterogeneousParams,
    counts: [usize; 6],
) -> Result<Population, SimError> {
    let pop = Population::from_counts(ModelClass::Heterogeneous, &counts);
    let target = (pop.len() as f64 * p.s).round() as usize;
    if pop.holdings() != target {
        return Err(SimError::InfeasibleInitial(format!(
            "holdings {} differ from round(N s) = {target}",
            pop.holdings()
        )));
    }
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark() -> ModelParams {
        ModelParams::NonSegmented(NonSegmentedParams::uniform(1, 1.0, 1.0, 0.2))
    }

    #[test]
    fn reaction_drift_matches_rhs() {
        let models = [
            benchmark(),
            ModelParams::PartiallySegmented(PartiallySegmentedParams::uniform(2, 1.3, 0.7, 0.15)),
            ModelParams::Heterogeneous(HeterogeneousParams {
                lambda: 1.4,
                a: 0.3,
                b: 0.7,
                c: [0.5, 0.2, 1.0],
                d: [0.9, 0.4, 0.3],
                s: 1.0,
            }),
        ];
        for m in models {
            let dim = m.dim();
            let mu: Vec<f64> = (0..dim)
                .map(|i| (i + 1) as f64 / (dim * (dim + 1) / 2) as f64)
                .collect();
            let mut drift = vec![0.0; dim];
            for r in reactions(&m) {
                r.add_drift(&mu, &mut drift);
            }
            let mut rhs = vec![0.0; dim];
            m.rhs_into(&mu, &mut rhs);
            for (a, b) in drift.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-14, "{}: {drift:?} vs {rhs:?}", m.class());
            }
        }
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(10, &[0.25, 0.25, 0.5]), vec![3, 2, 5]);
        assert_eq!(largest_remainder(3, &[0.0, 0.0]), vec![2, 1]);
        assert_eq!(largest_remainder(7, &[1.0, 2.0, 4.0]), vec![1, 2, 4]);
    }

    #[test]
    fn empirical_ratios() {
        let pop = Population::from_counts(ModelClass::NonSegmented, &[2, 2, 0, 0]);
        assert_eq!(
            empirical_distribution(&pop).values,
            vec![0.5, 0.5, 0.0, 0.0]
        );
    }

    #[test]
    fn relocation_keeps_indices_consistent() {
        let mut pop = Population::from_counts(ModelClass::NonSegmented, &[3, 1, 2, 0]);
        pop.relocate(1, 3);
        pop.relocate(0, 1);
        pop.relocate(5, 0);
        assert_eq!(pop.counts(), &[2, 2, 1, 1]);
        for (s, list) in pop.members.iter().enumerate() {
            for (k, &id) in list.iter().enumerate() {
                assert_eq!(pop.states[id], s);
                assert_eq!(pop.slot[id], k);
            }
        }
    }

    #[test]
    fn rounding_respects_owner_masses() {
        let p = benchmark();
        let mu = StateDistribution::new(ModelClass::NonSegmented, vec![0.4, 0.4, 0.1, 0.1]);
        let pop = Population::from_distribution(&p, &mu, 1001).unwrap();
        assert_eq!(pop.len(), 1001);
        assert_eq!(pop.counts()[2] + pop.counts()[3], 200);
        assert!(matches!(
            Population::from_distribution(&p, &mu, 1),
            Err(SimError::InfeasibleInitial(_))
        ));
    }

    #[test]
    fn heterogeneous_rounding_hits_supply() {
        let p = HeterogeneousParams::counterexample(1.3);
        let mu = p.complete_state(0.2, 0.1, 0.15, 0.2);
        let params = ModelParams::Heterogeneous(p.clone());
        for n in [7, 100, 999] {
            let pop = Population::from_distribution(
                &params,
                &StateDistribution::new(ModelClass::Heterogeneous, mu.to_vec()),
                n,
            )
            .unwrap();
            assert_eq!(pop.holdings(), (n as f64 * 1.3).round() as usize);
        }
    }

    #[test]
    fn frozen_owners_stay_high() {
        let mut p = NonSegmentedParams::uniform(1, 1.0, 1.0, 0.2);
        p.gamma_di = vec![0.0];
        let params = ModelParams::NonSegmented(p);
        let pop = Population::from_counts(ModelClass::NonSegmented, &[40, 40, 20, 0]);
        let res = simulate(&params, pop, 20.0, 1.0, 3).unwrap();
        assert!(res.event_count > 0);
        for c in &res.counts {
            assert_eq!(c[2], 20);
            assert_eq!(c[3], 0);
        }
    }

    #[test]
    fn two_investor_trade() {
        let mut p = NonSegmentedParams::uniform(1, 1.0, 1e-9, 0.5);
        p.gamma_u = 1e-9;
        let params = ModelParams::NonSegmented(p);
        let mut trades = 0;
        for seed in 0..200 {
            let pop = Population::from_counts(ModelClass::NonSegmented, &[1, 0, 0, 1]);
            let mut sim = Simulator::new(&params, pop, seed).unwrap();
            let (_, r) = sim.next_event().unwrap();
            if matches!(sim.reactions()[r], Reaction::Trade { .. }) {
                trades += 1;
                assert_eq!(sim.population().counts(), &[0, 1, 1, 0]);
            }
        }
        assert_eq!(trades, 200);
    }

    #[test]
    fn grid_mismatch() {
        let pop = Population::from_counts(ModelClass::NonSegmented, &[5, 5, 0, 0]);
        let res = simulate(&benchmark(), pop, 1.0, 0.5, 0).unwrap();
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: res.empirical[..2].to_vec(),
        };
        assert!(matches!(
            compare_to_meanfield(&res, &traj),
            Err(SimError::GridMismatch(_))
        ));
        let same = Trajectory {
            times: res.sample_times.clone(),
            states: res.empirical.clone(),
        };
        assert_eq!(compare_to_meanfield(&res, &same).unwrap().sup_distance, 0.0);
    }

    #[test]
    fn frozen_dynamics_track_the_ode() {
        let mut p = NonSegmentedParams::uniform(1, 0.0, 0.0, 0.2);
        p.gamma_u = 0.0;
        let params = ModelParams::NonSegmented(p);
        let pop = Population::from_counts(ModelClass::NonSegmented, &[40, 40, 10, 10]);
        let res = simulate(&params, pop, 5.0, 1.0, 9).unwrap();
        assert_eq!(res.event_count, 0);
        let ode = meanfield_reference(&params, &res, 1e-2).unwrap();
        assert_eq!(compare_to_meanfield(&res, &ode).unwrap().sup_distance, 0.0);
    }
}
