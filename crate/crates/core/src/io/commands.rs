//! The four workflows behind the command-line tool. Each takes a parsed
//! [`RunConfig`], writes its files under the configured prefix, and returns
//! the paths plus a key/value summary.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConfigError, RunConfig, SteadyConfig, VerifyConfig};
use super::table::{format_number, write_records, Report, Table, TableError};
use crate::miranda::{self, SearchBox};
use crate::models::{
    inf_norm, HeterogeneousParams, MarketModel, ModelError, ModelParams, NonSegmentedParams,
    PartiallySegmentedParams, StateDistribution,
};
use crate::ode::{self, OdeError, Trajectory};
use crate::sim::{self, Population, SimError};
use crate::steady::{
    self, check_condition_p, counterexample_root, counterexample_verdict, ExistenceVerdict,
    GaussSeidelOptions, HeterogeneousOptions, HeterogeneousOutcome, SolverError, SteadySolution,
};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid parameters: {0}")]
    Validation(#[from] ModelError),
    #[error("config has no [{0}] block")]
    MissingBlock(&'static str),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl CommandError {
    /// 2 for configuration and validation problems, 1 for failures while
    /// running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_)
            | CommandError::Validation(_)
            | CommandError::MissingBlock(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: Report,
    /// Names of failed checks (verify only).
    pub failures: Vec<String>,
}

fn output_path(cfg: &RunConfig, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}_{suffix}.csv", cfg.prefix()))
}

fn state_table(labels: Vec<String>, times: &[f64], states: &[StateDistribution]) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend(labels);
    let rows = times
        .iter()
        .zip(states)
        .map(|(&t, s)| std::iter::once(t).chain(s.values.iter().copied()).collect())
        .collect();
    Table { header, rows }
}

fn push_state(report: &mut Report, labels: &[String], values: &[f64]) {
    for (l, v) in labels.iter().zip(values) {
        report.push_number(l.as_str(), *v);
    }
}

pub fn run_integrate(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    cfg.params.validate()?;
    let block = cfg
        .integrate
        .as_ref()
        .ok_or(CommandError::MissingBlock("integrate"))?;
    let traj = ode::integrate(
        &cfg.params,
        &cfg.initial_state(),
        block.t_end,
        block.step,
        block.sample_every,
    )?;
    let labels = cfg.params.state_labels();
    let path = output_path(cfg, "trajectory");
    state_table(labels.clone(), &traj.times, &traj.states).write(&path)?;

    let mut summary = Report::default();
    summary.push("model", cfg.params.class());
    summary.push("samples", traj.len());
    summary.push_number("t_end", block.t_end);
    if let Some(last) = traj.last() {
        push_state(&mut summary, &labels, &last.values);
    }
    Ok(CommandOutput {
        files: vec![path],
        summary,
        failures: Vec::new(),
    })
}

fn heterogeneous_options(cfg: &RunConfig, steady: &SteadyConfig) -> HeterogeneousOptions {
    let mut opts = HeterogeneousOptions::new(steady.tol);
    opts.restarts = steady.restarts;
    opts.seed = steady.seed;
    if let Some(m) = &cfg.miranda {
        opts.eps_volume = m.eps;
        opts.grid_points_per_axis = m.grid;
    }
    opts
}

fn push_solution(report: &mut Report, labels: &[String], sol: &SteadySolution) {
    report.push("no_steady_state", false);
    report.push("method", sol.method.as_str());
    report.push_number("residual_inf_norm", sol.residual_inf_norm);
    match sol.certified_box_volume {
        Some(v) => report.push_number("certified_box_volume", v),
        None => report.push("certified_box_volume", ""),
    }
    push_state(report, labels, &sol.state.values);
}

fn push_frozen(report: &mut Report, labels: &[String], frozen: &[[f64; 6]]) {
    report.push("frozen_states", frozen.len());
    for (k, state) in frozen.iter().enumerate() {
        for (l, v) in labels.iter().zip(state) {
            report.push_number(format!("frozen_{}_{l}", k + 1), *v);
        }
    }
}

pub fn run_steady(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    cfg.params.validate()?;
    let block = cfg.steady.clone().unwrap_or_default();
    let labels = cfg.params.state_labels();
    let mut report = Report::default();
    report.push("model", cfg.params.class());
    match &cfg.params {
        ModelParams::NonSegmented(p) => push_solution(
            &mut report,
            &labels,
            &steady::solve_nonsegmented(p, block.tol)?,
        ),
        ModelParams::PartiallySegmented(p) => push_solution(
            &mut report,
            &labels,
            &steady::solve_partially_segmented(p, block.tol)?,
        ),
        ModelParams::Heterogeneous(p) => {
            match steady::solve_heterogeneous_with(p, &heterogeneous_options(cfg, &block))? {
                HeterogeneousOutcome::Steady(sol) => {
                    push_solution(&mut report, &labels, &sol.solution);
                    report.push("other_trading_states", sol.alternatives.len());
                    push_frozen(&mut report, &labels, &sol.frozen_states);
                }
                HeterogeneousOutcome::NoSteadyState(r) => {
                    report.push("no_steady_state", true);
                    report.push("conclusive", r.conclusive);
                    report.push("restarts", r.restarts);
                    report.push("converged_restarts", r.converged_restarts);
                    report.push("unit_box_certified", r.unit_box_certified);
                    report.push_number("best_residual", r.best_residual);
                    push_frozen(&mut report, &labels, &r.frozen_states);
                }
            }
            let cp = check_condition_p(p, &SearchBox::unit(6));
            report.push("condition_p_holds", cp.holds);
            for (i, c) in cp.conditions.iter().enumerate() {
                report.push_number(format!("condition_p_margin_{}", i + 1), c.margin);
            }
        }
    }
    let path = output_path(cfg, "steady");
    report.write(&path)?;
    Ok(CommandOutput {
        files: vec![path],
        summary: report,
        failures: Vec::new(),
    })
}

pub fn run_simulate(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    cfg.params.validate()?;
    let block = cfg
        .simulate
        .as_ref()
        .ok_or(CommandError::MissingBlock("simulate"))?;
    let pop = Population::from_distribution(&cfg.params, &cfg.initial_state(), block.n)?;
    let result = sim::simulate(
        &cfg.params,
        pop,
        block.t_end,
        block.sample_every,
        block.seed,
    )?;
    let labels = cfg.params.state_labels();

    let series = output_path(cfg, "simulate");
    state_table(labels.clone(), &result.sample_times, &result.empirical).write(&series)?;
    let mut files = vec![series];

    let mut summary = Report::default();
    summary.push("model", cfg.params.class());
    summary.push("n", block.n);
    summary.push("seed", block.seed);
    summary.push("event_count", result.event_count);
    summary.push_number("t_end", block.t_end);
    if let Some(last) = result.empirical.last() {
        push_state(&mut summary, &labels, &last.values);
    }
    if block.compare {
        let reference = sim::meanfield_reference(&cfg.params, &result, block.ode_step)?;
        let cmp = sim::compare_to_meanfield(&result, &reference)?;
        summary.push_number("sup_distance", cmp.sup_distance);
        summary.push_number("worst_time", cmp.worst_time);
        summary.push("worst_component", &labels[cmp.worst_component]);
        let rows: Vec<Vec<f64>> = result
            .sample_times
            .iter()
            .zip(&cmp.per_time)
            .map(|(&t, &d)| vec![t, d])
            .collect();
        let path = output_path(cfg, "meanfield");
        Table {
            header: vec!["t".into(), "distance".into()],
            rows,
        }
        .write(&path)?;
        files.push(path);
    }
    let path = output_path(cfg, "simulate_summary");
    summary.write(&path)?;
    files.push(path);
    Ok(CommandOutput {
        files,
        summary,
        failures: Vec::new(),
    })
}

/// One line of the verification summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, detail: impl ToString) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            limit: f64::NAN,
            detail: detail.to_string(),
        }
    }

    fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            limit: 1.0,
            detail: detail.into(),
        }
    }
}

/// Kernel-weighted flows against the right-hand side.
fn kernel_gap(model: &ModelParams, states: &[&[f64]]) -> f64 {
    let mut gap: f64 = 0.0;
    for mu in states {
        let drift = model.kernel_at(mu).drift(mu);
        let mut rhs = vec![0.0; model.dim()];
        model.rhs_into(mu, &mut rhs);
        for (a, b) in drift.iter().zip(&rhs) {
            gap = gap.max((a - b).abs());
        }
    }
    gap
}

fn conservation_drift(traj: &Trajectory, model: &ModelParams) -> f64 {
    traj.states
        .iter()
        .map(|s| model.constraint_drift(&s.values))
        .fold(0.0, f64::max)
}

fn solve_any(cfg: &RunConfig, tol: f64) -> Result<Option<SteadySolution>, SolverError> {
    let steady = SteadyConfig {
        tol,
        ..cfg.steady.clone().unwrap_or_default()
    };
    Ok(match &cfg.params {
        ModelParams::NonSegmented(p) => Some(steady::solve_nonsegmented(p, tol)?),
        ModelParams::PartiallySegmented(p) => Some(steady::solve_partially_segmented(p, tol)?),
        ModelParams::Heterogeneous(p) => {
            steady::solve_heterogeneous_with(p, &heterogeneous_options(cfg, &steady))?
                .steady()
                .map(|s| s.solution.clone())
        }
    })
}

fn bracket_check(p: &NonSegmentedParams) -> Check {
    let hi = 1.0 - p.total_mass();
    let f0 = steady::high_nonowner_balance(0.0, p);
    let f1 = steady::high_nonowner_balance(hi, p);
    let samples: Vec<f64> = (0..20)
        .map(|j| steady::high_nonowner_balance(hi * j as f64 / 19.0, p))
        .collect();
    let decreasing = samples.windows(2).all(|w| w[1] < w[0]);
    Check::flag(
        "balance_bracket",
        f0 > 0.0 && f1 < 0.0 && decreasing,
        format!(
            "F(0)={}, F(1-sum m)={}, decreasing={decreasing}",
            format_number(f0),
            format_number(f1)
        ),
    )
}

fn existence_certificate(p: &PartiallySegmentedParams, grid: usize) -> Check {
    let k = p.k();
    let f = |x: &[f64], out: &mut [f64]| out.copy_from_slice(&steady::fixed_point_map(p, x));
    let unit = SearchBox::unit(k);
    if miranda::check_faces(f, &unit, grid).certified {
        return Check::flag(
            "existence_certificate",
            true,
            "face signs hold on the unit cube",
        );
    }
    let Some(inverse) = miranda::jacobian(&f, &unit.centroid(), 1e-7).try_inverse() else {
        return Check::failed(
            "existence_certificate",
            "singular Jacobian at the cube centre",
        );
    };
    let g = |x: &[f64], out: &mut [f64]| {
        let raw = steady::fixed_point_map(p, x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..k).map(|j| inverse[(i, j)] * raw[j]).sum();
        }
    };
    let ok = miranda::check_faces(g, &unit, grid).certified;
    Check::flag(
        "existence_certificate",
        ok,
        "raw face signs fail off the feasible simplex; preconditioned map checked",
    )
}

fn uniqueness_check(p: &PartiallySegmentedParams, tol: f64, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free = 1.0 - p.total_mass();
    let opts = GaussSeidelOptions::default();
    let mut zeros: Vec<Vec<f64>> = Vec::new();
    for _ in 0..8 {
        let start: Vec<f64> = (0..p.k()).map(|_| rng.gen::<f64>() * free).collect();
        let gs = steady::gauss_seidel(p, &start, 0.1 * tol, &opts);
        if !gs.converged {
            return Check::failed("gauss_seidel_uniqueness", "a restart did not converge");
        }
        zeros.push(gs.x);
    }
    let spread = zeros
        .iter()
        .flat_map(|z| z.iter().zip(&zeros[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Check::at_most("gauss_seidel_uniqueness", spread, 1e-8, "8 random starts")
}

/// The closed-form state of the non-existence family, when its root is
/// non-negative and the implied `v` is too.
fn closed_form_state(s: f64) -> Option<[f64; 6]> {
    let x = counterexample_root(s)?;
    let v = (1.0 - 2.0 * x) / (2.0 + 4.0 * x);
    (v >= 0.0).then_some([x, x, 2.0 * x * v, 2.0 * x * v, v, v])
}

/// Sweeps the non-existence family: the closed-form verdict at each supply,
/// and whether the solver agrees (finds the closed-form state, trading or
/// frozen, exactly when the root is non-negative).
fn sweep_check(sweep: &[f64], tol: f64) -> (Check, Vec<(f64, ExistenceVerdict)>) {
    let mut verdicts = Vec::new();
    let mut disagreements = Vec::new();
    for &s in sweep {
        let verdict = counterexample_verdict(s);
        verdicts.push((s, verdict));
        let outcome =
            match steady::solve_heterogeneous(&HeterogeneousParams::counterexample(s), tol) {
                Ok(o) => o,
                Err(e) => {
                    disagreements.push(format!("s={s}: {e}"));
                    continue;
                }
            };
        let mut found: Vec<[f64; 6]> = outcome.frozen_states().to_vec();
        if let Some(sol) = outcome.steady() {
            let mut state = [0.0; 6];
            state.copy_from_slice(&sol.solution.state.values);
            found.push(state);
            found.extend(sol.alternatives.iter().copied());
        }
        let near = |a: &[f64; 6], b: &[f64; 6]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-6);
        match (verdict, closed_form_state(s)) {
            (ExistenceVerdict::Absent, _) => {
                if let Some(sol) = outcome.steady() {
                    disagreements.push(format!(
                        "s={s}: no root, yet solver found x={}",
                        sol.solution.state.values[0]
                    ));
                }
            }
            (_, Some(cf)) if found.iter().any(|f| near(f, &cf)) => {}
            (_, Some(_)) => disagreements.push(format!("s={s}: closed-form state not recovered")),
            (_, None) => {}
        }
    }
    let detail = if disagreements.is_empty() {
        verdicts
            .iter()
            .map(|(s, v)| format!("{s}:{}", v.as_str()))
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        disagreements.join("; ")
    };
    (
        Check::flag("counterexample_sweep", disagreements.is_empty(), detail),
        verdicts,
    )
}

fn lln_check(cfg: &RunConfig, v: &VerifyConfig) -> Result<Check, CommandError> {
    let pop = Population::from_distribution(&cfg.params, &cfg.initial_state(), v.lln_n)?;
    let seeds: Vec<u64> = (1..=v.lln_seeds as u64).collect();
    let runs = sim::simulate_many(&cfg.params, &pop, v.lln_t_end, 1.0, &seeds)?;
    let reference = sim::meanfield_reference(&cfg.params, &runs[0], 1e-2)?;
    let mut within = 0;
    for run in &runs {
        if sim::compare_to_meanfield(run, &reference)?.sup_distance <= 0.06 {
            within += 1;
        }
    }
    let fraction = within as f64 / runs.len() as f64;
    Ok(Check {
        name: "lln_sup_distance".into(),
        passed: fraction >= 0.9,
        value: fraction,
        limit: 0.9,
        detail: format!(
            "fraction of {} seeds with sup-distance <= 0.06 at N = {}",
            runs.len(),
            v.lln_n
        ),
    })
}

/// Cross-method checks at the configured scale. Failed checks are listed in
/// [`CommandOutput::failures`]; the summary file is written either way.
pub fn run_verify(cfg: &RunConfig) -> Result<CommandOutput, CommandError> {
    cfg.params.validate()?;
    let v = cfg.verify.clone().unwrap_or_default();
    let grid = cfg
        .miranda
        .as_ref()
        .map_or(miranda::DEFAULT_GRID, |m| m.grid);
    let model = &cfg.params;
    let initial = cfg.initial_state();
    let mut checks = Vec::new();
    let mut summary = Report::default();
    summary.push("model", model.class());
    summary.push_number("tol", v.tol);

    let solution = match solve_any(cfg, v.tol) {
        Ok(sol) => {
            match &sol {
                Some(s) => checks.push(Check::at_most(
                    "steady_residual",
                    s.residual_inf_norm,
                    v.tol,
                    s.method.as_str(),
                )),
                None => summary.push("no_steady_state", true),
            }
            sol
        }
        Err(e) => {
            checks.push(Check::failed("steady_solve", e));
            None
        }
    };

    let mut probe: Vec<&[f64]> = vec![&initial.values];
    if let Some(s) = &solution {
        probe.push(&s.state.values);
    }
    checks.push(Check::at_most(
        "kernel_consistency",
        kernel_gap(model, &probe),
        1e-12,
        "kernel drift against rhs",
    ));

    match ode::integrate(model, &initial, 100.0, 1e-3, 1.0) {
        Ok(traj) => checks.push(Check::at_most(
            "conservation",
            conservation_drift(&traj, model),
            1e-9,
            "constraint drift over t in [0, 100]",
        )),
        Err(e) => checks.push(Check::failed("conservation", e)),
    }

    match model {
        ModelParams::NonSegmented(p) => checks.push(bracket_check(p)),
        ModelParams::PartiallySegmented(p) => {
            checks.push(existence_certificate(p, grid));
            checks.push(uniqueness_check(
                p,
                v.tol,
                cfg.steady.as_ref().map_or(1, |s| s.seed),
            ));
        }
        ModelParams::Heterogeneous(_) => {
            let (check, verdicts) = sweep_check(&v.sweep, v.tol);
            for (s, verdict) in verdicts {
                summary.push(format!("sweep_{s}"), verdict.as_str());
            }
            checks.push(check);
        }
    }

    if let (Some(sol), false) = (&solution, matches!(model, ModelParams::Heterogeneous(_))) {
        match ode::relax_to_steady(
            model,
            &initial,
            v.tol,
            ode::DEFAULT_T_MAX,
            ode::DEFAULT_STEP,
        ) {
            Ok(r) if r.converged => {
                let gap: Vec<f64> = r
                    .final_state
                    .values
                    .iter()
                    .zip(&sol.state.values)
                    .map(|(a, b)| a - b)
                    .collect();
                checks.push(Check::at_most(
                    "solver_vs_ode",
                    inf_norm(&gap),
                    1e-6,
                    "relaxation end point",
                ));
            }
            Ok(r) => checks.push(Check::failed(
                "solver_vs_ode",
                format!(
                    "relaxation stopped at residual {}",
                    format_number(r.residual_inf_norm)
                ),
            )),
            Err(e) => checks.push(Check::failed("solver_vs_ode", e)),
        }
    }

    if v.lln {
        checks.push(lln_check(cfg, &v)?);
    }

    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                if c.passed { "pass" } else { "fail" }.to_string(),
                format_number(c.value),
                format_number(c.limit),
                c.detail.clone(),
            ]
        })
        .collect();
    let path = output_path(cfg, "verify");
    write_records(
        &path,
        &["check", "status", "value", "limit", "detail"],
        &rows,
    )?;

    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    for c in &checks {
        summary.push(
            format!("check_{}", c.name),
            if c.passed { "pass" } else { "fail" },
        );
    }
    Ok(CommandOutput {
        files: vec![path],
        summary,
        failures,
    })
}
