mod common;

use otc_core::io::{Report, RunConfig, Table};
use otc_core::sim::{self, Population, Simulator};
use otc_core::steady::{
    fixed_point_map, high_nonowner_balance, solve_nonsegmented, solve_partially_segmented,
};
use otc_core::{
    integrate, MarketModel, ModelClass, ModelParams, NonSegmentedParams, PartiallySegmentedParams,
    StateDistribution,
};
use proptest::prelude::*;

/// A random model of any class together with an interior state.
fn model_and_state(seed: u64, k: usize, class: u8) -> (ModelParams, Vec<f64>) {
    let mut rng = common::rng(seed);
    match class % 3 {
        0 => {
            let p = common::nonsegmented(&mut rng, k);
            let mu = common::nonsegmented_state(&mut rng, &p);
            (ModelParams::NonSegmented(p), mu)
        }
        1 => {
            let p = common::partially_segmented(&mut rng, k);
            let mu = common::partially_segmented_state(&mut rng, &p);
            (ModelParams::PartiallySegmented(p), mu)
        }
        _ => {
            let p = common::heterogeneous(&mut rng);
            let mu = common::heterogeneous_state(&mut rng, &p);
            (ModelParams::Heterogeneous(p), mu)
        }
    }
}

fn drift(model: &ModelParams, mu: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.dim()];
    model.rhs_into(mu, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn drift_preserves_every_linear_constraint(seed: u64, k in 1usize..=5, class: u8) {
        let (model, mu) = model_and_state(seed, k, class);
        model.check_state(&StateDistribution::new(model.class(), mu.clone())).unwrap();
        let d = drift(&model, &mu);
        let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for c in model.linear_constraints() {
            let rate: f64 = c.coeffs.iter().zip(&d).map(|(a, b)| a * b).sum();
            prop_assert!(rate.abs() <= 1e-14 * scale * 10.0, "{}: {rate:e}", c.name);
        }
    }

    #[test]
    fn kernel_reproduces_the_drift(seed: u64, k in 1usize..=5, class: u8) {
        let (model, mu) = model_and_state(seed, k, class);
        let d = drift(&model, &mu);
        let from_kernel = model.kernel_at(&mu).drift(&mu);
        for (a, b) in d.iter().zip(&from_kernel) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn reaction_list_reproduces_the_drift(seed: u64, k in 1usize..=5, class: u8) {
        let (model, mu) = model_and_state(seed, k, class);
        let mut out = vec![0.0; model.dim()];
        for r in sim::reactions(&model) {
            r.add_drift(&mu, &mut out);
        }
        for (a, b) in drift(&model, &mu).iter().zip(&out) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_asset_partial_segmentation_is_the_nonsegmented_market(seed: u64) {
        let mut rng = common::rng(seed);
        let p = common::nonsegmented(&mut rng, 1);
        let q = PartiallySegmentedParams::from_nonsegmented(&p);
        let mu = common::nonsegmented_state(&mut rng, &p);
        let a = drift(&ModelParams::NonSegmented(p.clone()), &mu);
        let b = drift(&ModelParams::PartiallySegmented(q.clone()), &mu);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
        let sa = solve_nonsegmented(&p, 1e-12).unwrap();
        let sb = solve_partially_segmented(&q, 1e-12).unwrap();
        for (x, y) in sa.state.values.iter().zip(&sb.state.values) {
            prop_assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn balance_function_brackets_and_decreases(seed: u64, k in 1usize..=5) {
        let p = common::nonsegmented(&mut common::rng(seed), k);
        let top = 1.0 - p.total_mass();
        prop_assert!(high_nonowner_balance(0.0, &p) > 0.0);
        prop_assert!(high_nonowner_balance(top, &p) < 0.0);
        let values: Vec<f64> = (0..=50).map(|j| high_nonowner_balance(top * j as f64 / 50.0, &p)).collect();
        prop_assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn fixed_point_map_is_nonpositive_on_feasible_lower_faces(seed: u64, k in 1usize..=5) {
        let mut rng = common::rng(seed);
        let p = common::partially_segmented(&mut rng, k);
        let free = 1.0 - p.total_mass();
        for i in 0..k {
            let mut x = common::split(&mut rng, k, free * 0.999);
            x[i] = 0.0;
            prop_assert!(fixed_point_map(&p, &x)[i] <= 1e-12);
        }
    }

    #[test]
    fn steady_states_are_feasible_zeros(seed: u64, k in 1usize..=5, partial: bool) {
        let mut rng = common::rng(seed);
        let (model, sol) = if partial {
            let p = common::partially_segmented(&mut rng, k);
            let sol = solve_partially_segmented(&p, 1e-10).unwrap();
            (ModelParams::PartiallySegmented(p), sol)
        } else {
            let p = common::nonsegmented(&mut rng, k);
            let sol = solve_nonsegmented(&p, 1e-10).unwrap();
            (ModelParams::NonSegmented(p), sol)
        };
        model.check_state(&sol.state).unwrap();
        prop_assert!(sol.residual_inf_norm <= 1e-10);
        prop_assert!(model.residual_inf_norm(&sol.state.values) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integration_keeps_constraints(seed: u64, k in 1usize..=3, class: u8) {
        let (model, mu) = model_and_state(seed, k, class);
        let s0 = StateDistribution::new(model.class(), mu);
        let traj = integrate(&model, &s0, 10.0, 1e-3, 1.0).unwrap();
        for s in &traj.states {
            prop_assert!(model.constraint_drift(&s.values) <= 1e-9);
        }
    }

    /// Halving the step cuts the error by at least 8, i.e. the integrator is
    /// at least third order; fourth order gives 16.
    #[test]
    fn rk4_converges_at_fourth_order(lambda in 0.2f64..3.0, gamma in 0.2f64..3.0, m in 0.05f64..0.25) {
        let p = NonSegmentedParams::uniform(2, lambda, gamma, m);
        let s0 = StateDistribution::for_model(&p, vec![0.6 - 2.0 * m, 0.4, m, 0.0, 0.0, m]).unwrap();
        let end = |h: f64| integrate(&p, &s0, 2.0, h, 2.0).unwrap().last().unwrap().values.clone();
        let exact = end(1e-3);
        let err = |h: f64| {
            end(h).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(0.1), err(0.05));
        prop_assert!(coarse > 1e-12);
        prop_assert!(coarse / fine >= 8.0, "{coarse:e} / {fine:e}");
    }

    #[test]
    fn simulation_is_seeded_and_conserves_counts(seed: u64, k in 1usize..=3, class: u8, n in 20usize..300) {
        let (model, mu) = model_and_state(seed, k, class);
        let s0 = StateDistribution::new(model.class(), mu);
        let pop = Population::from_distribution(&model, &s0, n);
        // small asset masses can round to an empty owner group
        prop_assume!(pop.is_ok());
        let pop = pop.unwrap();
        let a = sim::simulate(&model, pop.clone(), 3.0, 0.5, seed).unwrap();
        let b = sim::simulate(&model, pop.clone(), 3.0, 0.5, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let start = &a.counts[0];
        for counts in &a.counts {
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            for c in model.linear_constraints() {
                // Exact integer conservation: scale the constraint by N.
                let v: f64 = c.coeffs.iter().zip(counts).map(|(w, &x)| w * x as f64).sum();
                let v0: f64 = c.coeffs.iter().zip(start).map(|(w, &x)| w * x as f64).sum();
                prop_assert_eq!(v, v0, "{}", &c.name);
            }
        }
    }

    #[test]
    fn config_round_trips_through_toml(seed: u64, k in 1usize..=4, class: u8) {
        let (params, mu) = model_and_state(seed, k, class);
        let cfg = RunConfig {
            params,
            initial: Some(otc_core::io::config::InitialConfig { values: mu }),
            integrate: None,
            steady: Some(Default::default()),
            simulate: None,
            miranda: Some(Default::default()),
            verify: Some(Default::default()),
            output: None,
        };
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn tables_round_trip_bit_for_bit(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 3), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let t = Table { header: vec!["a".into(), "b".into(), "c".into()], rows };
        let path = dir.path().join("t.csv");
        t.write(&path).unwrap();
        let back = Table::read(&path).unwrap();
        prop_assert_eq!(back.rows.len(), t.rows.len());
        for (r, s) in back.rows.iter().zip(&t.rows) {
            for (x, y) in r.iter().zip(s) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let mut rep = Report::default();
        for (j, r) in t.rows.iter().enumerate() {
            rep.push_number(format!("r{j}"), r[0]);
        }
        let path = dir.path().join("r.csv");
        rep.write(&path).unwrap();
        prop_assert_eq!(Report::read(&path).unwrap(), rep);
    }
}

/// Two investors, one `(h,n)` and one `(l,1,o)`, with only trading switched
/// on: the first event is the trade, after an exponential wait of mean
/// `N / lambda = 2 / lambda`.
#[test]
fn two_investor_trade_waiting_time() {
    let lambda = 1.5;
    let mut p = NonSegmentedParams::uniform(1, lambda, 0.0, 0.5);
    p.gamma_u = 0.0;
    p.gamma_d = 0.0;
    let model = ModelParams::NonSegmented(p);
    let pop = Population::from_counts(ModelClass::NonSegmented, &[1, 0, 0, 1]);
    let reps = 10_000;
    let waits: Vec<f64> = (0..reps)
        .map(|seed| {
            let mut s = Simulator::new(&model, pop.clone(), seed).unwrap();
            let (t, _) = s.next_event().unwrap();
            assert_eq!(s.population().counts(), &[0, 1, 1, 0]);
            assert!(s.next_event().is_none());
            t
        })
        .collect();
    let mean = waits.iter().sum::<f64>() / reps as f64;
    let expected = 2.0 / lambda;
    // exponential: standard deviation equals the mean
    let se = expected / (reps as f64).sqrt();
    assert!(
        (mean - expected).abs() <= 3.0 * se,
        "{mean} vs {expected} +- {se}"
    );
}
