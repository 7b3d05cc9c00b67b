//! Invariant suite for saved instances.

use std::fmt;

use lowbound_core::methods::same_points;
use lowbound_core::oracle::empirical_holder_ratio;

use crate::instance_file::{InstanceKind, SavedInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub pairs: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { pairs: 1000, seed: 0, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub replay: bool,
    pub locality_agree: usize,
    pub locality_total: usize,
    pub holder_ratio: f64,
    pub holder_limit: f64,
    pub certified_gap: f64,
    pub bound: f64,
    pub tol: f64,
}

impl CheckReport {
    pub fn membership_ok(&self) -> bool {
        self.holder_ratio <= self.holder_limit
    }

    pub fn locality_ok(&self) -> bool {
        self.locality_agree == self.locality_total
    }

    pub fn bound_ok(&self) -> bool {
        self.certified_gap >= self.bound - 10.0 * self.tol
    }

    pub fn passed(&self) -> bool {
        self.replay && self.membership_ok() && self.locality_ok() && self.bound_ok()
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} membership: holder ratio {:e} (limit {:e})",
            verdict(self.membership_ok()),
            self.holder_ratio,
            self.holder_limit
        )?;
        writeln!(
            f,
            "{} locality: {}/{} prefixes agree",
            verdict(self.locality_ok()),
            self.locality_agree,
            self.locality_total
        )?;
        writeln!(f, "{} replay", verdict(self.replay))?;
        write!(
            f,
            "{} bound: certified gap {:e} vs lower bound {:e}",
            verdict(self.bound_ok()),
            self.certified_gap,
            self.bound
        )
    }
}

/// Reruns the recorded method on the static instance, then checks membership,
/// locality, replay and the certified gap of the method's output.
pub fn check_instance(inst: &SavedInstance, opts: &CheckOptions) -> anyhow::Result<CheckReport> {
    let method = inst.core_method();
    let ball = inst.ball()?;
    let base = inst.base();
    let cfg = base.config();
    let locality = base.locality_reports(opts.tol)?;
    let locality_agree = locality.iter().filter(|r| r.agree()).count();
    let (trace, certified_gap, holder_ratio) = match &inst.kind {
        InstanceKind::Direct(hi) => {
            let trace = method.run(&mut hi.oracle(), &ball, cfg.horizon())?;
            let gap = hi.certified_gap(&trace.final_point)?;
            let r = cfg.radius();
            let ratio = empirical_holder_ratio(
                &mut hi.oracle(),
                cfg.space().p(),
                cfg.kappa(),
                2.0 * r,
                cfg.chi() * r,
                opts.pairs,
                opts.seed,
            )?;
            (trace, gap, ratio)
        }
        InstanceKind::Lifted(li) => {
            let trace = method.run(&mut li.oracle(), &ball, cfg.horizon())?;
            let gap = li.certified_gap(&trace.final_point)?;
            let ratio = empirical_holder_ratio(
                &mut li.oracle(),
                li.lift().p(),
                cfg.kappa(),
                2.0,
                cfg.chi() * cfg.radius(),
                opts.pairs,
                opts.seed,
            )?;
            (trace, gap, ratio)
        }
    };
    let bound = match &inst.kind {
        InstanceKind::Direct(hi) => hi.bound(),
        InstanceKind::Lifted(li) => li.bound(),
    };
    Ok(CheckReport {
        replay: same_points(&trace.queries, inst.queries()),
        locality_agree,
        locality_total: locality.len(),
        holder_ratio,
        holder_limit: cfg.lipschitz() * (1.0 + 1e-6),
        certified_gap,
        bound,
        tol: opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::build_instance;
    use crate::config::{Cell, MethodName};
    use crate::experiment::RunOptions;

    fn opts() -> RunOptions {
        RunOptions { seed: 0, tol: None, polish_iterations: 10, probes: 100, membership_pairs: 0 }
    }

    #[test]
    fn fresh_instance_passes() {
        let cell = Cell { n: 12, horizon: 5, p: 2.0, kappa: 1.5, lipschitz: 2.0, radius: 1.0 };
        let inst = build_instance(&cell, MethodName::Subgradient, &opts()).unwrap();
        let report = check_instance(&inst, &CheckOptions { pairs: 200, ..Default::default() }).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.to_string().lines().all(|l| l.starts_with("PASS")));
    }

    #[test]
    fn wrong_method_fails_replay() {
        let cell = Cell { n: 8, horizon: 4, p: f64::INFINITY, kappa: 2.0, lipschitz: 1.0, radius: 1.0 };
        let mut inst = build_instance(&cell, MethodName::Cg, &opts()).unwrap();
        inst.method = MethodName::Subgradient;
        let report = check_instance(&inst, &CheckOptions { pairs: 10, ..Default::default() }).unwrap();
        assert!(!report.replay);
        assert!(!report.passed());
    }
}
