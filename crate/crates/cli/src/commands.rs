use crate::config::{CompositeConfig, Config, ConfigError, OscillatorConfig, Problem};
use crate::output::{matrix, num, upper_names, upper_values, Artifacts, Summary, Table};
use qho_core::autonomous::{homotopy_solve, slope_defect, weak_coupling_direction, HomotopyOptions, StopReason};
use qho_core::backaction::deviation_bounds;
use qho_core::composite::{
    admissibility, assemble, gramian_set, jacobi_residual, lie_ale_residuals, lie_p_resolvent, lie_q_resolvent,
    positivity_criterion, PlantObserverSystem,
};
use qho_core::matlib::{camax, inner, ComplexMatrix, RealMatrix};
use qho_core::qho::{
    build_model, convergence_margin, discounted_moments_ale, discounted_moments_spectral,
    incommensurability_diagnostic, infinite_horizon_moments, spectral_decompose, InitialMoments,
};
use qho_core::synthesis::{cost, stationarity_from};
use std::fmt;

const BOUND_SLACK: f64 = 1e-8;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(String),
    Violation(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Violation(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Violation(m) => write!(f, "violation: {m}"),
        }
    }
}

impl From<qho_core::Error> for Failure {
    fn from(e: qho_core::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl TauGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let h = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + h * i as f64).collect()
    }
}

impl fmt::Display for TauGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", num(self.start), num(self.end), self.count)
    }
}

impl std::str::FromStr for TauGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected a:b:n, got \"{s}\""));
        };
        let start: f64 = a.parse().map_err(|_| format!("bad start \"{a}\""))?;
        let end: f64 = b.parse().map_err(|_| format!("bad end \"{b}\""))?;
        let count: usize = n.parse().map_err(|_| format!("bad count \"{n}\""))?;
        if !(start > 0.0 && end >= start && end.is_finite()) {
            return Err(format!("need 0 < a <= b, got {a}:{b}"));
        }
        if count == 0 {
            return Err("count must be at least 1".into());
        }
        Ok(TauGrid { start, end, count })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub tau_grid: TauGrid,
    pub mu_max: f64,
    pub steps: usize,
}

fn composite(cfg: &Config, command: &str) -> Result<CompositeConfig, Failure> {
    match &cfg.problem {
        Problem::Composite(c) => Ok(c.clone()),
        Problem::Oscillator(_) => Err(Failure::Config(ConfigError {
            path: cfg.path.clone(),
            line: None,
            message: format!("{command} needs [observer], [weights] and [horizon] sections"),
        })),
    }
}

fn homotopy_options(opts: &Options) -> HomotopyOptions {
    HomotopyOptions {
        mu_max: opts.mu_max,
        steps: opts.steps,
        ..Default::default()
    }
}

pub fn moments(cfg: &Config, opts: &Options, out: &Artifacts) -> Result<(), Failure> {
    let OscillatorConfig { theta, energy, sigma, .. } = cfg.oscillator();
    let model = build_model(&theta, &energy)?;
    let init = InitialMoments::new(&sigma, &theta)?;
    let spec = spectral_decompose(&model).ok();
    let n = theta.nrows();

    let mut table = Table::new(std::iter::once("tau".to_string()).chain(upper_names("p", n)));
    let row = |tag: String, m: &RealMatrix| std::iter::once(tag).chain(upper_values(m)).collect::<Vec<_>>();
    table.push(row("0".into(), &sigma));
    for tau in opts.tau_grid.points() {
        let p = match &spec {
            Some(s) => discounted_moments_spectral(s, &init, tau)?,
            None => discounted_moments_ale(&model, &init, tau)?,
        };
        table.push(row(num(tau), &p.p_real));
    }
    let mut summary = Summary::default();
    summary.set("kind", "oscillator");
    summary.set("n", n.to_string());
    summary.set("tau_grid", opts.tau_grid.to_string());
    match &spec {
        Some(s) => {
            let inf = infinite_horizon_moments(s, &init)?;
            table.push(row("inf".into(), &inf.p_real));
            let freqs: Vec<String> = s.positive_frequencies().iter().map(|w| num(*w)).collect();
            summary.set("route", "spectral");
            summary.set("frequencies", freqs.join(", "));
            let tau_star = match convergence_margin(s) {
                // no nonzero frequency gaps: every horizon converges
                Err(qho_core::Error::AllFrequenciesZero) => f64::INFINITY,
                r => r?,
            };
            summary.set("tau_star", num(tau_star));
            match incommensurability_diagnostic(s.positive_frequencies(), 20) {
                Ok(inc) => summary.set("incommensurable", inc.incommensurable.to_string()),
                Err(e) => summary.set("incommensurable", format!("unavailable: {e}")),
            }
            summary.set("e_inf", matrix(&inf.p_real));
        }
        None => {
            summary.set("route", "ale");
            summary.set("e_inf", "unavailable (no oscillatory spectral decomposition)");
        }
    }
    summary.set("rows", table.len().to_string());
    out.write_table("moments.csv", &table)?;
    out.write_summary(&summary)?;
    Ok(())
}

pub fn backaction(cfg: &Config, opts: &Options, out: &Artifacts) -> Result<(), Failure> {
    let c = composite(cfg, "backaction")?;
    let mut points: Vec<(f64, PlantObserverSystem)> = Vec::new();
    let mut summary = Summary::default();
    let axis = match &c.autonomous {
        Some(prob) => {
            let trace = homotopy_solve(prob, &homotopy_options(opts))?;
            for (mu, l) in trace.mu_grid.iter().zip(&trace.l_path) {
                // λ is irrelevant at L = 0
                let weight = if *mu > 0.0 { *mu } else { 1.0 };
                points.push((*mu, prob.to_system(l.clone(), weight)));
            }
            summary.set("sweep", "optimal coupling path");
            summary.set("stop", format!("{:?}", trace.stop));
            "mu"
        }
        None => {
            for k in 0..=opts.steps {
                let s = k as f64 / opts.steps as f64;
                points.push((s, c.system.with_coupling(&c.system.coupling * s)));
            }
            summary.set("sweep", "coupling scale");
            "scale"
        }
    };
    let mut table = Table::new([
        axis,
        "eps",
        "applicable",
        "bound_p11",
        "observed_p11",
        "bound_full",
        "observed_full",
        "kappa",
        "gamma1",
        "gamma2",
        "lmi_lower_slack",
        "lmi_upper_slack",
    ]);
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let (mut applicable, mut violations) = (0, 0);
    for (x, sys) in &points {
        let rep = deviation_bounds(sys)?;
        applicable += rep.bound_p11.is_some() as usize;
        violations += rep.violated(BOUND_SLACK) as usize;
        table.push(vec![
            num(*x),
            num(rep.eps),
            (rep.bound_p11.is_some() as u8).to_string(),
            opt(rep.bound_p11),
            num(rep.observed_p11_dev),
            opt(rep.bound_full),
            num(rep.observed_full_dev),
            num(rep.kappa),
            num(rep.gamma1),
            num(rep.gamma2),
            num(rep.lmi.lower_slack),
            opt(rep.lmi.upper_slack),
        ]);
    }
    summary.set("points", points.len().to_string());
    summary.set("applicable_points", applicable.to_string());
    summary.set("violations", violations.to_string());
    out.write_table("backaction.csv", &table)?;
    out.write_summary(&summary)?;
    if violations > 0 {
        return Err(Failure::Violation(format!("{violations} grid points exceed their bounds")));
    }
    Ok(())
}

pub fn synthesize(cfg: &Config, opts: &Options, out: &Artifacts) -> Result<(), Failure> {
    let c = composite(cfg, "synthesize")?;
    let prob = c.autonomous.ok_or_else(|| {
        Failure::Config(ConfigError {
            path: cfg.path.clone(),
            line: None,
            message: "synthesize needs equal CCRs, M = \"mirror\", S0 and a symmetric L".into(),
        })
    })?;
    let n = prob.n();
    let trace = homotopy_solve(&prob, &homotopy_options(opts))?;
    let mut header = vec!["mu".to_string()];
    header.extend(upper_names("l", n));
    header.extend(["error_ms", "penalty_term", "total", "residual", "admissible"].map(String::from));
    let mut table = Table::new(header);
    for i in 0..trace.len() {
        let mut row = vec![num(trace.mu_grid[i])];
        row.extend(upper_values(&trace.l_path[i]));
        row.extend([
            num(trace.error_path[i]),
            num(trace.penalty_path[i]),
            num(trace.cost_path[i]),
            num(trace.residual_path[i]),
            (trace.admissibility_path[i] as u8).to_string(),
        ]);
        table.push(row);
    }
    let mut summary = Summary::default();
    summary.set("mu_max", num(opts.mu_max));
    summary.set("steps", opts.steps.to_string());
    summary.set("points", trace.len().to_string());
    summary.set("stop", format!("{:?}", trace.stop));
    summary.set("error_ms_start", num(trace.error_path[0]));
    summary.set("error_ms_end", num(*trace.error_path.last().expect("trace starts at mu = 0")));
    summary.set("l_end", matrix(trace.l_path.last().expect("trace starts at mu = 0")));
    summary.set("l_prime", matrix(&weak_coupling_direction(&prob)?));
    match slope_defect(&prob) {
        Ok(s) => {
            summary.set("slope_defect_raw", num(s.raw_defect));
            summary.set("slope_defect_fitted", num(s.fitted_defect));
        }
        Err(e) => summary.set("slope_defect", format!("unavailable: {e}")),
    }
    out.write_table("synthesis.csv", &table)?;
    out.write_summary(&summary)?;
    match trace.stop {
        StopReason::Completed => Ok(()),
        StopReason::Stalled(mu) => Err(Failure::Numerical(format!("continuation stalled at mu = {}", num(mu)))),
        StopReason::AdmissibilityLost(mu) => {
            Err(Failure::Numerical(format!("admissibility lost at mu = {}", num(mu))))
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Info,
}

struct Checks {
    table: Table,
    failed: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks {
            table: Table::new(["check", "value", "tolerance", "status"]),
            failed: Vec::new(),
        }
    }

    fn limit(&mut self, name: &str, value: f64, tol: f64) {
        let status = if value <= tol { Status::Pass } else { Status::Fail };
        self.row(name, value, Some(tol), status);
    }

    fn info(&mut self, name: &str, value: f64) {
        self.row(name, value, None, Status::Info);
    }

    fn row(&mut self, name: &str, value: f64, tol: Option<f64>, status: Status) {
        if status == Status::Fail {
            self.failed.push(name.to_string());
        }
        let label = match status {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
        };
        self.table
            .push(vec![name.to_string(), num(value), tol.map(num).unwrap_or_default(), label.to_string()]);
    }
}

fn oscillator_checks(osc: &OscillatorConfig, checks: &mut Checks) -> Result<(), Failure> {
    let model = build_model(&osc.theta, &osc.energy)?;
    let init = InitialMoments::new(&osc.sigma, &osc.theta)?;
    let th = &osc.theta;
    let tau = osc.tau.unwrap_or(1.0);
    checks.limit("ccr_antisymmetry", (th + th.transpose()).amax(), 0.0);
    let a = model.dynamics();
    checks.limit("pr_condition", (a * th + th * a.transpose()).amax(), 1e-12 * (1.0 + a.amax()));
    let u = a.exp();
    checks.limit("symplectic_flow", (&u * th * u.transpose() - th).amax(), 1e-9 * (1.0 + th.amax()));
    let ale = discounted_moments_ale(&model, &init, tau)?;
    checks.limit("ccr_preservation", (ale.full.map(|z| z.im) - th).amax(), 1e-9);
    if let Ok(spec) = spectral_decompose(&model) {
        let n = th.nrows();
        let sum = spec.c.iter().fold(ComplexMatrix::zeros(n, n), |acc, c| acc + c);
        checks.limit("resolution_of_identity", camax(&(sum - ComplexMatrix::identity(n, n))), 1e-10);
        let s = discounted_moments_spectral(&spec, &init, tau)?;
        let rel = (&s.p_real - &ale.p_real).norm() / ale.p_real.norm();
        checks.limit("route_equivalence", rel, 1e-8);
    }
    Ok(())
}

fn composite_checks(c: &CompositeConfig, checks: &mut Checks) -> Result<(), Failure> {
    let sys = &c.system;
    let d = assemble(sys)?;
    let adm = admissibility(sys, &d)?;
    checks.limit("admissibility_margin", -adm.margin, 0.0);
    checks.info("energy_min_eigenvalue", positivity_criterion(sys).min_eigenvalue);
    let th = sys.theta();
    checks.limit(
        "composite_pr_condition",
        (&d.a_full * &th + &th * d.a_full.transpose()).amax(),
        1e-12 * (1.0 + d.a_full.amax()),
    );
    let g = gramian_set(sys, &d)?;
    for (name, x) in [("hamiltonian_p", &g.lie_p), ("hamiltonian_q", &g.lie_q), ("hamiltonian_d", &g.lie_d)] {
        checks.limit(name, (x * &th + &th * x.transpose()).amax(), 1e-9 * (1.0 + x.amax()));
    }
    let cst = cost(sys)?;
    let dual = (cst.total - cst.dual).abs() / cst.total.abs().max(f64::MIN_POSITIVE);
    checks.limit("cost_duality", if cst.total == 0.0 { cst.dual.abs() } else { dual }, 1e-9);
    let (rp, rq) = lie_ale_residuals(sys, &d, &g)?;
    checks.limit("lie_ale_p", rp, 1e-8 * (1.0 + g.lie_p.norm()));
    checks.limit("lie_ale_q", rq, 1e-8 * (1.0 + g.lie_q.norm()));
    let rel = |a: &RealMatrix, b: &RealMatrix| (a - b).norm() / (1.0 + b.norm());
    checks.limit("resolvent_p", rel(&lie_p_resolvent(sys, &d)?, &g.lie_p), 1e-8);
    checks.limit("resolvent_q", rel(&lie_q_resolvent(sys, &d)?, &g.lie_q), 1e-8);
    let jac = jacobi_residual(sys, &d, &g)?;
    checks.limit("jacobi", jac.norm(), 1e-8 * (1.0 + g.lie_d.norm() * d.a_full.norm()));
    checks.info("cost_total", cst.total);
    checks.info("cost_error_ms", cst.error_ms);
    checks.info("cost_penalty", cst.penalty);
    checks.info("duality_primal_dual", inner(&d.ctc(), &g.p_gram) - cst.dual);
    let st = stationarity_from(sys, &g)?;
    checks.info("stationarity_l", st.res_l);
    checks.info("stationarity_m", st.res_m);
    checks.info("stationarity_lie_l", st.res_lie_l);
    checks.info("stationarity_lie_m", st.res_lie_m);
    Ok(())
}

pub fn check(cfg: &Config, out: &Artifacts) -> Result<(), Failure> {
    let mut checks = Checks::new();
    oscillator_checks(&cfg.oscillator(), &mut checks)?;
    let mut summary = Summary::default();
    let kind = match &cfg.problem {
        Problem::Oscillator(_) => "oscillator",
        Problem::Composite(c) => {
            summary.set("mu", num(c.mu));
            composite_checks(c, &mut checks)?;
            if c.autonomous.is_some() {
                "autonomous"
            } else {
                "composite"
            }
        }
    };
    summary.set("kind", kind);
    summary.set("checks", checks.table.len().to_string());
    summary.set("failed", checks.failed.len().to_string());
    if !checks.failed.is_empty() {
        summary.set("failed_checks", checks.failed.join(", "));
    }
    out.write_table("check.csv", &checks.table)?;
    out.write_summary(&summary)?;
    if checks.failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("failed checks: {}", checks.failed.join(", "))))
    }
}
