//! Versioned text format for hard instances.
//!
//! Every float is written as an exact hexadecimal literal and the file ends
//! with a sha256 checksum of everything before the checksum line. Loading
//! rebuilds the instance from its parameters and recorded queries, then
//! requires the derived quantities, term list, `sigma`, `xi`, certificate and
//! bound to match the stored values bit for bit.
//!
//! ```text
//! lowbound-instance 1
//! kind direct
//! p 0x1p+1
//! n 16
//! T 4
//! ...
//! checksum sha256 9f2c...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use lowbound_core::adversary::{AdversaryConfig, AdversaryState, HardInstance};
use lowbound_core::kernel::{KernelVariant, SmoothingKernel};
use lowbound_core::methods::Method;
use lowbound_core::reductions::{LiftMap, LiftedInstance};
use lowbound_core::smoothing::Coefficients;
use lowbound_core::space::{Ball, NormSpec};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::MethodName;
use crate::hexfloat;

pub const MAGIC: &str = "lowbound-instance";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported instance file version {found} (expected {VERSION})")]
    Version { found: String },
    #[error("malformed instance file at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("checksum mismatch: file says {stored}, content hashes to {computed}")]
    Checksum { stored: String, computed: String },
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] lowbound_core::Error),
}

/// A finished instance together with the method that produced it.
#[derive(Debug, Clone)]
pub struct SavedInstance {
    pub method: MethodName,
    /// Step constant of the accelerated method.
    pub method_lipschitz: Option<f64>,
    /// Feasible set the method ran over.
    pub ball_p: f64,
    pub ball_radius: f64,
    pub kind: InstanceKind,
}

#[derive(Debug, Clone)]
pub enum InstanceKind {
    Direct(HardInstance<f64>),
    Lifted(LiftedInstance<f64>),
}

impl SavedInstance {
    pub fn base(&self) -> &HardInstance<f64> {
        match &self.kind {
            InstanceKind::Direct(hi) => hi,
            InstanceKind::Lifted(li) => li.base(),
        }
    }

    pub fn lift(&self) -> Option<&LiftMap<f64>> {
        match &self.kind {
            InstanceKind::Direct(_) => None,
            InstanceKind::Lifted(li) => Some(li.lift()),
        }
    }

    /// Queries in the space the method ran in.
    pub fn queries(&self) -> &[Vec<f64>] {
        match &self.kind {
            InstanceKind::Direct(hi) => hi.trace().queries(),
            InstanceKind::Lifted(li) => li.queries(),
        }
    }

    pub fn core_method(&self) -> Method<f64> {
        match self.method {
            MethodName::Cg => Method::ConditionalGradient,
            MethodName::Accelerated => Method::Accelerated { lipschitz: self.method_lipschitz.unwrap_or(f64::NAN) },
            MethodName::Subgradient => Method::ProjectedSubgradient,
        }
    }

    pub fn ball(&self) -> Result<Ball<f64>, InstanceError> {
        let n = self.lift().map_or(self.base().config().space().n(), |l| l.n());
        Ok(Ball::new(NormSpec::new(self.ball_p, n)?, self.ball_radius)?)
    }
}

/// Lowercase hex sha256 of `text`.
pub fn checksum(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn hx(x: f64) -> String {
    hexfloat::format(x)
}

fn hx_list(xs: &[f64]) -> String {
    xs.iter().map(|&v| hx(v)).collect::<Vec<_>>().join(" ")
}

/// Renders `inst` in the instance format, checksum line included.
pub fn to_text(inst: &SavedInstance) -> String {
    let hi = inst.base();
    let cfg = hi.config();
    let mut s = String::new();
    let mut line = |l: String| {
        s.push_str(&l);
        s.push('\n');
    };
    line(format!("{MAGIC} {VERSION}"));
    line(format!("kind {}", if inst.lift().is_some() { "lifted" } else { "direct" }));
    line(format!("p {}", hx(cfg.space().p())));
    line(format!("n {}", cfg.space().n()));
    line(format!("T {}", cfg.horizon()));
    line(format!("kappa {}", hx(cfg.kappa())));
    line(format!("L {}", hx(cfg.lipschitz())));
    line(format!("R {}", hx(cfg.radius())));
    let k = cfg.kernel();
    line(match k.variant() {
        KernelVariant::PNorm { r, theta } => format!("kernel pnorm {} {} {}", hx(r), hx(theta), hx(k.m_phi())),
        KernelVariant::Euclidean => format!("kernel euclidean {}", hx(k.m_phi())),
    });
    line(format!("Delta {}", hx(cfg.big_delta())));
    line(format!("delta {}", hx(cfg.delta())));
    line(format!("chi {}", hx(cfg.chi())));
    line(format!("beta {}", hx(cfg.beta())));
    line(format!("tol {}", cfg.tol().map_or("default".into(), hx)));
    line(match (inst.method, inst.method_lipschitz) {
        (MethodName::Accelerated, Some(l)) => format!("method accelerated {}", hx(l)),
        (m, _) => format!("method {}", m.as_str()),
    });
    line(format!("ball {} {}", hx(inst.ball_p), hx(inst.ball_radius)));
    let terms = hi.unit_instance().g().terms();
    line(format!("terms {}", terms.len()));
    for t in terms {
        match &t.coefficients {
            Coefficients::Sparse(e) if e.len() == 1 => line(format!("term {} {} {}", e[0].0, hx(e[0].1), hx(t.offset))),
            other => {
                let dense = match other {
                    Coefficients::Dense(w) => w.clone(),
                    Coefficients::Sparse(_) => t.to_dense(cfg.space().n()),
                };
                line(format!("term dense {} {}", hx(t.offset), hx_list(&dense)))
            }
        }
    }
    line(format!("sigma {}", hi.trace().sigma().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")));
    line(format!("xi {}", hx_list(hi.trace().xi())));
    line(format!("certificate {}", hx_list(hi.certificate())));
    line(format!("bound {}", hx(hi.bound())));
    if let Some(lm) = inst.lift() {
        let (inner, outer) = lm.distortion();
        line(format!(
            "lift {} {} {} {} {} {} {} {}",
            lm.n(),
            lm.horizon(),
            hx(lm.p()),
            lm.seed(),
            hx(lm.scale()),
            hx(inner),
            hx(outer),
            hx(lm.sign_outer())
        ));
        for i in 0..lm.horizon() {
            line(format!("row {}", hx_list(lm.row(i))));
        }
    }
    let queries = inst.queries();
    line(format!("queries {}", queries.len()));
    for q in queries {
        line(format!("query {}", hx_list(q)));
    }
    let sum = checksum(&s);
    s.push_str(&format!("checksum sha256 {sum}\n"));
    s
}

pub fn serialize_instance(inst: &SavedInstance, path: &Path) -> Result<(), InstanceError> {
    std::fs::write(path, to_text(inst))?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<SavedInstance, InstanceError> {
    from_text(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn malformed(&self, msg: impl Into<String>) -> InstanceError {
        InstanceError::Malformed { line: self.pos, msg: msg.into() }
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>, InstanceError> {
        let Some(line) = self.lines.get(self.pos).copied() else {
            return Err(InstanceError::Malformed {
                line: self.pos + 1,
                msg: format!("missing `{key}` (truncated file)"),
            });
        };
        self.pos += 1;
        let mut parts = line.split_ascii_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(self.malformed(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn one(&mut self, key: &str) -> Result<&'a str, InstanceError> {
        let v = self.field(key)?;
        match v.as_slice() {
            [x] => Ok(x),
            _ => Err(self.malformed(format!("`{key}` takes one value"))),
        }
    }

    fn float(&self, s: &str) -> Result<f64, InstanceError> {
        hexfloat::parse(s).map_err(|e| self.malformed(e.to_string()))
    }

    fn floats(&self, v: &[&str]) -> Result<Vec<f64>, InstanceError> {
        v.iter().map(|s| self.float(s)).collect()
    }

    fn int<T: std::str::FromStr>(&self, s: &str) -> Result<T, InstanceError> {
        s.parse().map_err(|_| self.malformed(format!("bad integer `{s}`")))
    }

    fn f(&mut self, key: &str) -> Result<f64, InstanceError> {
        let v = self.one(key)?;
        self.float(v)
    }

    fn u(&mut self, key: &str) -> Result<usize, InstanceError> {
        let v = self.one(key)?;
        self.int(v)
    }
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

fn same_vec(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(&x, &y)| same_bits(x, y))
}

fn invalid(msg: impl Into<String>) -> InstanceError {
    InstanceError::Validation(msg.into())
}

pub fn from_text(text: &str) -> Result<SavedInstance, InstanceError> {
    let Some(cut) = text.rfind("checksum sha256 ") else {
        return Err(InstanceError::Malformed {
            line: text.lines().count(),
            msg: "missing checksum line (truncated file)".into(),
        });
    };
    let (body, tail) = text.split_at(cut);
    if cut > 0 && !body.ends_with('\n') {
        return Err(InstanceError::Malformed {
            line: body.lines().count(),
            msg: "checksum is not on its own line".into(),
        });
    }
    let stored = tail.trim_end_matches('\n').trim_start_matches("checksum sha256 ").to_string();
    let computed = checksum(body);
    if stored != computed {
        return Err(InstanceError::Checksum { stored, computed });
    }

    let mut ls = Lines { lines: body.lines().collect(), pos: 0 };
    let head = ls.field(MAGIC)?;
    if head != [VERSION.to_string().as_str()] {
        return Err(InstanceError::Version { found: head.join(" ") });
    }
    let kind = ls.one("kind")?;
    let lifted = match kind {
        "direct" => false,
        "lifted" => true,
        other => return Err(ls.malformed(format!("unknown kind `{other}`"))),
    };
    let p = ls.f("p")?;
    let n = ls.u("n")?;
    let horizon = ls.u("T")?;
    let kappa = ls.f("kappa")?;
    let lipschitz = ls.f("L")?;
    let radius = ls.f("R")?;
    if horizon > n {
        return Err(invalid(format!("T = {horizon} exceeds n = {n}")));
    }
    let space = NormSpec::new(p, n)?;
    let kparts = ls.field("kernel")?;
    let kernel = match kparts.as_slice() {
        ["pnorm", r, theta, m] => {
            let k = SmoothingKernel::with_params(space, ls.float(r)?, ls.float(theta)?)?;
            (k, ls.float(m)?)
        }
        ["euclidean", m] => (SmoothingKernel::new(space)?, ls.float(m)?),
        _ => return Err(ls.malformed("bad kernel line")),
    };
    if !same_bits(kernel.0.m_phi(), kernel.1) {
        return Err(invalid("stored m_phi does not match the kernel parameters"));
    }
    let kernel = kernel.0;
    let stored_derived = [ls.f("Delta")?, ls.f("delta")?, ls.f("chi")?, ls.f("beta")?];
    let tol = match ls.one("tol")? {
        "default" => None,
        v => Some(ls.float(v)?),
    };
    let mut cfg = AdversaryConfig::new(space, horizon, kappa, lipschitz, kernel, radius)?;
    if let Some(t) = tol {
        cfg = cfg.with_tol(t)?;
    }
    let derived = [cfg.big_delta(), cfg.delta(), cfg.chi(), cfg.beta()];
    if !same_vec(&derived, &stored_derived) {
        return Err(invalid("stored Delta/delta/chi/beta differ from the recomputed values"));
    }

    let mparts = ls.field("method")?;
    let (method, method_lipschitz) = match mparts.as_slice() {
        ["accelerated", l] => (MethodName::Accelerated, Some(ls.float(l)?)),
        [m] => (MethodName::parse(m).ok_or_else(|| ls.malformed(format!("unknown method `{m}`")))?, None),
        _ => return Err(ls.malformed("bad method line")),
    };
    let bparts = ls.field("ball")?;
    let (ball_p, ball_radius) = match bparts.as_slice() {
        [bp, br] => (ls.float(bp)?, ls.float(br)?),
        _ => return Err(ls.malformed("bad ball line")),
    };

    let term_count = ls.u("terms")?;
    let mut stored_terms = Vec::with_capacity(term_count);
    for _ in 0..term_count {
        let t = ls.field("term")?;
        let parsed = match t.as_slice() {
            ["dense", offset, rest @ ..] => (ls.float(offset)?, ls.floats(rest)?),
            [coord, coef, offset] => {
                let c: usize = ls.int(coord)?;
                if c >= n {
                    return Err(invalid(format!("term coordinate {c} out of range")));
                }
                let mut w = vec![0.0; n];
                w[c] = ls.float(coef)?;
                (ls.float(offset)?, w)
            }
            _ => return Err(ls.malformed("bad term line")),
        };
        stored_terms.push(parsed);
    }
    let sigma: Vec<usize> = ls.field("sigma")?.iter().map(|v| ls.int(v)).collect::<Result<_, _>>()?;
    let xi_parts = ls.field("xi")?;
    let xi = ls.floats(&xi_parts)?;
    let cert_parts = ls.field("certificate")?;
    let certificate = ls.floats(&cert_parts)?;
    let bound = ls.f("bound")?;

    let lift = if lifted {
        let parts = ls.field("lift")?;
        let [ln, lt, lp, seed, scale, inner, outer, sign_outer] = parts.as_slice() else {
            return Err(ls.malformed("bad lift line"));
        };
        let (ln, lt): (usize, usize) = (ls.int(ln)?, ls.int(lt)?);
        let (lp, seed) = (ls.float(lp)?, ls.int::<u64>(seed)?);
        let (scale, inner, outer, sign_outer) =
            (ls.float(scale)?, ls.float(inner)?, ls.float(outer)?, ls.float(sign_outer)?);
        if lt != horizon {
            return Err(invalid("lift horizon differs from T"));
        }
        let mut g = Vec::with_capacity(ln * lt);
        for _ in 0..lt {
            let row = ls.field("row")?;
            if row.len() != ln {
                return Err(ls.malformed(format!("lift row has {} entries, expected {ln}", row.len())));
            }
            g.extend(ls.floats(&row)?);
        }
        let lm = LiftMap::from_parts(lp, ln, lt, g, scale, (inner, outer), sign_outer, seed)?;
        if lm.base_dim() != n || !space.is_inf() || !same_bits(lm.effective_radius(), radius) {
            return Err(invalid("lift map does not match the base instance"));
        }
        Some(lm)
    } else {
        None
    };

    let query_count = ls.u("queries")?;
    if query_count != horizon {
        return Err(invalid(format!("{query_count} queries recorded, expected T = {horizon}")));
    }
    let ambient = lift.as_ref().map_or(n, |l| l.n());
    let mut queries = Vec::with_capacity(query_count);
    for _ in 0..query_count {
        let parts = ls.field("query")?;
        let q = ls.floats(&parts)?;
        if q.len() != ambient {
            return Err(ls.malformed(format!("query has {} entries, expected {ambient}", q.len())));
        }
        queries.push(q);
    }
    if ls.pos != ls.lines.len() {
        return Err(ls.malformed("unexpected trailing content"));
    }

    let base_queries: Vec<Vec<f64>> = match &lift {
        Some(lm) => queries.iter().map(|q| lm.apply(q)).collect::<Result<_, _>>()?,
        None => queries.clone(),
    };
    let state = AdversaryState::from_queries(cfg, &base_queries)?;
    if state.sigma() != sigma.as_slice() || !same_vec(state.xi(), &xi) {
        return Err(invalid("sigma/xi do not follow from the recorded queries"));
    }
    let hi = state.finalize()?;
    let rebuilt = hi.unit_instance().g().terms();
    if rebuilt.len() != stored_terms.len()
        || rebuilt
            .iter()
            .zip(&stored_terms)
            .any(|(t, (off, w))| !same_bits(t.offset, *off) || !same_vec(&t.to_dense(n), w))
    {
        return Err(invalid("stored terms differ from the rebuilt instance"));
    }
    if !same_vec(hi.certificate(), &certificate) || !same_bits(hi.bound(), bound) {
        return Err(invalid("stored certificate or bound differ from the rebuilt instance"));
    }
    let kind = match lift {
        Some(lm) => InstanceKind::Lifted(LiftedInstance::new(hi, lm, queries)?),
        None => InstanceKind::Direct(hi),
    };
    Ok(SavedInstance { method, method_lipschitz, ball_p, ball_radius, kind })
}
