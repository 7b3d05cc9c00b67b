//! Grid sweeps: one adversary session per (cell, method).

use std::time::{Duration, Instant};

use anyhow::{anyhow, bail};
use lowbound_core::adversary::{replay_check_on, run_session, AdversaryConfig, HardInstance};
use lowbound_core::kernel::SmoothingKernel;
use lowbound_core::methods::{estimate_optimum, Method, MethodTrace};
use lowbound_core::oracle::{empirical_holder_ratio, FirstOrderOracle};
use lowbound_core::reductions::{
    lower_bound_small_p, random_section, replay_check_lifted, run_lifted_session, LiftedInstance,
};
use lowbound_core::space::{Ball, NormSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Cell, ExperimentConfig, MethodName};

/// Knobs shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub tol: Option<f64>,
    pub polish_iterations: usize,
    pub probes: usize,
    pub membership_pairs: usize,
}

impl RunOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            seed: cfg.seed,
            tol: cfg.tol,
            polish_iterations: cfg.polish_iterations,
            probes: cfg.probes,
            membership_pairs: cfg.membership_pairs,
        }
    }

    /// Tolerance used for the headline comparison.
    pub fn slack_tol(&self) -> f64 {
        self.tol.unwrap_or(1e-10)
    }
}

/// One report row. Numeric fields are empty on failed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub p: f64,
    pub kappa: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub method: String,
    pub status: String,
    pub achieved_gap: Option<f64>,
    pub certified_gap_lower: Option<f64>,
    pub certified_gap_upper: Option<f64>,
    pub theoretical_lower_bound: Option<f64>,
    pub reference_bound: Option<f64>,
    pub cg_upper_reference: Option<f64>,
    pub m_phi: Option<f64>,
    pub replay: Option<bool>,
    pub holder_ratio: Option<f64>,
    pub distortion: Option<f64>,
    pub effective_radius: Option<f64>,
}

impl Row {
    pub fn empty(cell: &Cell, method: MethodName, status: String) -> Self {
        Self {
            p: cell.p,
            kappa: cell.kappa,
            n: cell.n,
            horizon: cell.horizon,
            lipschitz: cell.lipschitz,
            radius: cell.radius,
            method: method.as_str().into(),
            status,
            achieved_gap: None,
            certified_gap_lower: None,
            certified_gap_upper: None,
            theoretical_lower_bound: None,
            reference_bound: None,
            cg_upper_reference: None,
            m_phi: None,
            replay: None,
            holder_ratio: None,
            distortion: None,
            effective_radius: None,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell {
            n: self.n,
            horizon: self.horizon,
            p: self.p,
            kappa: self.kappa,
            lipschitz: self.lipschitz,
            radius: self.radius,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// `certified_gap_lower >= theoretical_lower_bound - 10 tol`; `None` on
    /// failed rows.
    pub fn meets_bound(&self, tol: f64) -> Option<bool> {
        Some(self.certified_gap_lower? >= self.theoretical_lower_bound? - 10.0 * tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub p: f64,
    pub kappa: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub method: String,
    pub wall_time_s: f64,
}

/// Rows sorted by cell key then method, with wall times kept apart so the
/// rows themselves are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
    pub timings: Vec<Timing>,
}

/// `2^kappa L D^kappa / (kappa (T + 1)^{kappa - 1})` with `D = 2R`; the
/// best-iterate guarantee of conditional gradient with steps `2 / (k + 2)`.
pub fn cg_upper_reference(cell: &Cell) -> f64 {
    let d = 2.0 * cell.radius;
    2f64.powf(cell.kappa) * cell.lipschitz * d.powf(cell.kappa)
        / (cell.kappa * (cell.horizon as f64 + 1.0).powf(cell.kappa - 1.0))
}

/// Deterministic per-cell seed.
pub fn cell_seed(seed: u64, cell: &Cell) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [cell.n as u64, cell.horizon as u64, cell.p.to_bits(), cell.kappa.to_bits()] {
        h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    }
    h
}

fn is_projectable(p: f64) -> bool {
    p == 2.0 || p.is_infinite()
}

/// Adversary configuration of a direct (`p >= 2`) cell.
pub fn adversary_config(cell: &Cell, tol: Option<f64>) -> anyhow::Result<AdversaryConfig<f64>> {
    let space = NormSpec::new(cell.p, cell.n)?;
    let cfg = AdversaryConfig::new(
        space,
        cell.horizon,
        cell.kappa,
        cell.lipschitz,
        SmoothingKernel::new(space)?,
        cell.radius,
    )?;
    Ok(match tol {
        Some(t) => cfg.with_tol(t)?,
        None => cfg,
    })
}

/// Core method and the feasible set it runs over. Projected methods on an
/// `lp` ball without a projection use the inscribed Euclidean ball.
pub fn method_setup(name: MethodName, cfg: &AdversaryConfig<f64>) -> anyhow::Result<(Method<f64>, Ball<f64>)> {
    let r = cfg.radius();
    let ball = match name {
        MethodName::Cg => cfg.ball()?,
        _ if is_projectable(cfg.space().p()) => cfg.ball()?,
        _ => Ball::new(NormSpec::new(2.0, cfg.space().n())?, r)?,
    };
    let method = match name {
        MethodName::Cg => Method::ConditionalGradient,
        MethodName::Accelerated => Method::Accelerated { lipschitz: cfg.smooth_lipschitz() / (r * r) },
        MethodName::Subgradient => Method::ProjectedSubgradient,
    };
    Ok((method, ball))
}

/// `(upper, lower)` estimate of the optimum over `ball`.
fn optimum_bracket<O: FirstOrderOracle<f64>>(
    mut make_oracle: impl FnMut() -> O,
    ball: &Ball<f64>,
    iterations: usize,
    lipschitz: f64,
) -> anyhow::Result<(f64, f64)> {
    let mut est = estimate_optimum(&mut make_oracle(), ball, iterations, None)?;
    if is_projectable(ball.space().p()) {
        let acc = estimate_optimum(&mut make_oracle(), ball, iterations, Some(lipschitz))?;
        est.upper = est.upper.min(acc.upper);
        est.lower = est.lower.max(acc.lower);
    }
    Ok((est.upper, est.lower))
}

/// Result of a direct session, kept for persistence.
pub struct DirectOutcome {
    pub instance: HardInstance<f64>,
    pub trace: MethodTrace<f64>,
    pub method: Method<f64>,
    pub ball: Ball<f64>,
}

pub fn run_direct(cell: &Cell, name: MethodName, tol: Option<f64>) -> anyhow::Result<DirectOutcome> {
    let cfg = adversary_config(cell, tol)?;
    let (method, ball) = method_setup(name, &cfg)?;
    let (instance, trace) = run_session(cfg, &method, &ball)?;
    Ok(DirectOutcome { instance, trace, method, ball })
}

/// Result of a lifted (`p < 2`) session.
pub struct LiftedOutcome {
    pub instance: LiftedInstance<f64>,
    pub trace: MethodTrace<f64>,
}

pub fn run_lifted(cell: &Cell, name: MethodName, opts: &RunOptions) -> anyhow::Result<LiftedOutcome> {
    if name != MethodName::Cg {
        bail!("unsupported: only cg runs on p < 2 balls (no projection available)");
    }
    if cell.radius != 1.0 {
        bail!("unsupported: p < 2 cells use the unit ball, got R = {}", cell.radius);
    }
    let lift = random_section(cell.n, cell.horizon, cell.p, cell_seed(opts.seed, cell), opts.probes)?;
    let (instance, trace) = run_lifted_session(lift, cell.kappa, cell.lipschitz, &Method::ConditionalGradient)?;
    Ok(LiftedOutcome { instance, trace })
}

fn fill_direct(row: &mut Row, cell: &Cell, name: MethodName, opts: &RunOptions) -> anyhow::Result<()> {
    let out = run_direct(cell, name, opts.tol)?;
    let hi = &out.instance;
    let cfg = *hi.config();
    let x_t = &out.trace.final_point;
    let f_t = hi.eval(x_t)?.value;
    let f_star = hi.eval(hi.certificate())?.value;
    let lip = cfg.smooth_lipschitz() / (cfg.radius() * cfg.radius());
    let (upper, lower) = optimum_bracket(|| hi.oracle(), &cfg.ball()?, opts.polish_iterations, lip)?;
    row.certified_gap_lower = Some(f_t - f_star);
    row.achieved_gap = Some(f_t - upper.min(f_star));
    row.certified_gap_upper = Some(f_t - lower);
    row.theoretical_lower_bound = Some(hi.bound());
    row.reference_bound = Some(hi.bound());
    row.cg_upper_reference = Some(cg_upper_reference(cell));
    row.m_phi = Some(cfg.kernel().m_phi());
    row.replay = Some(replay_check_on(hi, &out.method, &out.ball));
    if opts.membership_pairs > 0 {
        let r = cfg.radius();
        row.holder_ratio = Some(empirical_holder_ratio(
            &mut hi.oracle(),
            cfg.space().p(),
            cfg.kappa(),
            2.0 * r,
            cfg.chi() * r,
            opts.membership_pairs,
            cell_seed(opts.seed, cell) ^ 1,
        )?);
    }
    Ok(())
}

fn fill_lifted(row: &mut Row, cell: &Cell, name: MethodName, opts: &RunOptions) -> anyhow::Result<()> {
    let out = run_lifted(cell, name, opts)?;
    let inst = &out.instance;
    let x_t = &out.trace.final_point;
    let f_t = inst.eval(x_t)?.value;
    let f_star = inst.eval(inst.certificate())?.value;
    let base = inst.base().config();
    let ball = inst.ball()?;
    let (upper, lower) = optimum_bracket(|| inst.oracle(), &ball, opts.polish_iterations, f64::NAN)?;
    row.certified_gap_lower = Some(f_t - f_star);
    row.achieved_gap = Some(f_t - upper.min(f_star));
    row.certified_gap_upper = Some(f_t - lower);
    row.theoretical_lower_bound = Some(inst.bound());
    row.reference_bound = Some(lower_bound_small_p(cell.n, cell.horizon, cell.p, cell.kappa, cell.lipschitz)?);
    row.cg_upper_reference = Some(cg_upper_reference(cell));
    row.m_phi = Some(base.kernel().m_phi());
    row.replay = Some(replay_check_lifted(inst, &Method::ConditionalGradient));
    row.distortion = Some(inst.lift().distortion_ratio());
    row.effective_radius = Some(inst.effective_radius());
    if opts.membership_pairs > 0 {
        row.holder_ratio = Some(empirical_holder_ratio(
            &mut inst.oracle(),
            cell.p,
            cell.kappa,
            2.0,
            base.chi() * base.radius(),
            opts.membership_pairs,
            cell_seed(opts.seed, cell) ^ 1,
        )?);
    }
    Ok(())
}

/// Runs one (cell, method) pair; failures become an error row.
pub fn run_cell(cell: &Cell, name: MethodName, opts: &RunOptions) -> (Row, Duration) {
    let start = Instant::now();
    let mut row = Row::empty(cell, name, "ok".into());
    let result = cell.validate().and_then(|_| {
        if cell.p >= 2.0 {
            fill_direct(&mut row, cell, name, opts)
        } else {
            fill_lifted(&mut row, cell, name, opts)
        }
    });
    if let Err(e) = result {
        row = Row::empty(cell, name, format!("error: {}", flatten(&e)));
    }
    (row, start.elapsed())
}

fn flatten(e: &anyhow::Error) -> String {
    e.chain().map(|c| c.to_string()).collect::<Vec<_>>().join(": ").replace(['\n', '\r'], " ")
}

/// Runs every (cell, method) pair of the grid in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    cfg.validate()?;
    let opts = RunOptions::from_config(cfg);
    let methods = cfg.methods_sorted();
    let jobs: Vec<(Cell, MethodName)> =
        cfg.cells().into_iter().flat_map(|c| methods.iter().map(move |&m| (c, m))).collect();
    let mut results: Vec<(Row, Duration)> = jobs.par_iter().map(|(c, m)| run_cell(c, *m, &opts)).collect();
    results.sort_by(|a, b| {
        a.0.cell().key_cmp(&b.0.cell()).then_with(|| method_rank(&a.0.method).cmp(&method_rank(&b.0.method)))
    });
    let timings = results
        .iter()
        .map(|(r, d)| Timing {
            p: r.p,
            kappa: r.kappa,
            n: r.n,
            horizon: r.horizon,
            lipschitz: r.lipschitz,
            radius: r.radius,
            method: r.method.clone(),
            wall_time_s: d.as_secs_f64(),
        })
        .collect();
    Ok(Report { rows: results.into_iter().map(|(r, _)| r).collect(), timings })
}

fn method_rank(s: &str) -> Option<MethodName> {
    MethodName::parse(s)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> anyhow::Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(anyhow!("need at least two paired points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        bail!("log-log slope needs positive data");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        bail!("x values are all equal");
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(p: f64, n: usize, t: usize) -> Cell {
        Cell { n, horizon: t, p, kappa: 2.0, lipschitz: 1.0, radius: 1.0 }
    }

    fn opts() -> RunOptions {
        RunOptions { seed: 1, tol: None, polish_iterations: 50, probes: 200, membership_pairs: 0 }
    }

    #[test]
    fn direct_cell_produces_consistent_row() {
        let (row, _) = run_cell(&cell(f64::INFINITY, 16, 4), MethodName::Cg, &opts());
        assert!(row.is_ok(), "{}", row.status);
        assert_eq!(row.replay, Some(true));
        assert_eq!(row.meets_bound(1e-10), Some(true));
        let (lo, ach, up) =
            (row.certified_gap_lower.unwrap(), row.achieved_gap.unwrap(), row.certified_gap_upper.unwrap());
        assert!(lo <= ach + 1e-15 && ach <= up + 1e-15);
        assert!(ach <= row.cg_upper_reference.unwrap());
    }

    #[test]
    fn unsupported_method_on_small_p_is_an_error_row() {
        let (row, _) = run_cell(&cell(1.0, 100, 5), MethodName::Subgradient, &opts());
        assert!(row.status.starts_with("error: unsupported"), "{}", row.status);
        assert!(row.certified_gap_lower.is_none());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cell_seed_depends_on_cell() {
        assert_ne!(cell_seed(0, &cell(1.0, 100, 5)), cell_seed(0, &cell(1.0, 100, 4)));
        assert_eq!(cell_seed(7, &cell(1.0, 100, 5)), cell_seed(7, &cell(1.0, 100, 5)));
    }
}
