//! Hypothesis checks and boundedness-ratio experiments for the Hardy-type
//! operators between Herz and Morrey-Herz spaces, plus executable checks of
//! the auxiliary lemmas on exponents and central oscillation.
//!
//! An experiment applies an operator to a seeded random family of radial
//! functions and records `‖Tf‖_target / ‖f‖_source`. The supremum of those
//! ratios is an empirical lower estimate of the operator norm; nothing here
//! proves a bound.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{
    ball_indicator_norm, cmo_norm, herz_norm, morrey_herz_norm, CmoOptions, HerzParams, MorreyHerzParams,
    NormResult,
};
use crate::operators::OperatorSpec;
use crate::padic::PadicContext;
use crate::radial::{
    check_regularity, ExponentFunction, ExponentJson, ExponentSummary, PowerTail, RadialFunctionJson,
    RadialStepFunction, RegularityMode,
};

pub const CSV_HEADER: [&str; 5] = ["sample_id", "N", "source_norm", "target_norm", "ratio"];
/// Half-width of the default commutator symbol `b_j = j`.
pub const DEFAULT_SYMBOL_HALF_WIDTH: i32 = 3;
const REGULARITY_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    T31,
    T32,
    T41,
    T42,
    C31,
    C32,
    C41,
    C42,
}

impl Theorem {
    pub const ALL: [Theorem; 8] =
        [Theorem::T31, Theorem::T32, Theorem::T41, Theorem::T42, Theorem::C31, Theorem::C32, Theorem::C41, Theorem::C42];

    pub fn is_commutator(self) -> bool {
        matches!(self, Theorem::T32 | Theorem::T42 | Theorem::C32 | Theorem::C42)
    }

    pub fn is_morrey(self) -> bool {
        matches!(self, Theorem::T41 | Theorem::T42 | Theorem::C41 | Theorem::C42)
    }

    pub fn is_corollary(self) -> bool {
        matches!(self, Theorem::C31 | Theorem::C32 | Theorem::C41 | Theorem::C42)
    }

    /// Corollaries whose target space carries the conjugate exponent `u'`.
    pub fn targets_conjugate(self) -> bool {
        matches!(self, Theorem::C32 | Theorem::C42)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown theorem `{s}` (expected one of T31..T42, C31..C42)")))
    }
}

/// Direction in which the source and target spaces are assigned.
///
/// `Standard` maps the space with exponent `u` and index `m1` into the one
/// with the shifted exponent `v` (or `u`, `u'` for the corollaries) and
/// index `m2`. `AsStated` uses the opposite assignment: source exponent `v`
/// with index `m2`, target `u` with index `m1`. For `α > 0` the latter is not
/// bounded on this function class (ratios grow like `p^{2αk}` under
/// dilation), which is why it is not the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Standard,
    AsStated,
}

/// Random family: for each `N` in `supports`, `samples` functions with
/// support in `[-N, N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default = "default_supports")]
    pub supports: Vec<i32>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_supports() -> Vec<i32> {
    vec![5, 10, 20]
}

fn default_samples() -> usize {
    200
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec { supports: default_supports(), samples: default_samples(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TheoremConfigJson", into = "TheoremConfigJson")]
pub struct TheoremConfig {
    pub theorem: Theorem,
    pub ctx: PadicContext,
    pub u: ExponentFunction,
    pub alpha: f64,
    pub beta: f64,
    pub m1: f64,
    pub m2: f64,
    pub lambda: f64,
    /// Base of the Morrey-Herz discount; `None` means `p`.
    pub mh_base: Option<f64>,
    pub symbol: Option<RadialStepFunction>,
    /// Use the adjoint operator instead of `H_α`.
    pub adjoint: bool,
    pub orientation: Orientation,
    pub family: FamilySpec,
}

/// On-disk form of a [`TheoremConfig`]; `u` and `symbol` inherit `ctx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremConfigJson {
    pub theorem: Theorem,
    pub ctx: PadicContext,
    pub u: ExponentJson,
    #[serde(default, with = "crate::real")]
    pub alpha: f64,
    #[serde(default, with = "crate::real")]
    pub beta: f64,
    #[serde(with = "crate::real")]
    pub m1: f64,
    #[serde(with = "crate::real")]
    pub m2: f64,
    #[serde(default, with = "crate::real")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::real::option")]
    pub mh_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<RadialFunctionJson>,
    #[serde(default)]
    pub adjoint: bool,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default)]
    pub family: FamilySpec,
}

impl TryFrom<TheoremConfigJson> for TheoremConfig {
    type Error = Error;
    fn try_from(raw: TheoremConfigJson) -> Result<Self> {
        let ctx = raw.ctx;
        let u = raw.u.into_exponent(Some(ctx))?;
        ctx.check_same(u.ctx())?;
        let symbol = raw.symbol.map(|s| s.into_function(Some(ctx))).transpose()?;
        if let Some(b) = &symbol {
            ctx.check_same(b.ctx())?;
        }
        Ok(TheoremConfig {
            theorem: raw.theorem,
            ctx,
            u,
            alpha: raw.alpha,
            beta: raw.beta,
            m1: raw.m1,
            m2: raw.m2,
            lambda: raw.lambda,
            mh_base: raw.mh_base,
            symbol,
            adjoint: raw.adjoint,
            orientation: raw.orientation,
            family: raw.family,
        })
    }
}

impl From<TheoremConfig> for TheoremConfigJson {
    fn from(tc: TheoremConfig) -> Self {
        let strip = |mut u: ExponentJson| {
            u.ctx = None;
            u
        };
        TheoremConfigJson {
            theorem: tc.theorem,
            ctx: tc.ctx,
            u: strip(tc.u.into()),
            alpha: tc.alpha,
            beta: tc.beta,
            m1: tc.m1,
            m2: tc.m2,
            lambda: tc.lambda,
            mh_base: tc.mh_base,
            symbol: tc.symbol.map(|b| {
                let mut j = RadialFunctionJson::from(b);
                j.ctx = None;
                j
            }),
            adjoint: tc.adjoint,
            orientation: tc.orientation,
            family: tc.family,
        }
    }
}

impl TheoremConfig {
    /// A config with `m1 = m2 = 1`, `λ = 0`, no symbol and the default family.
    pub fn new(theorem: Theorem, u: ExponentFunction, alpha: f64, beta: f64) -> Self {
        TheoremConfig {
            theorem,
            ctx: *u.ctx(),
            u,
            alpha,
            beta,
            m1: 1.0,
            m2: 1.0,
            lambda: 0.0,
            mh_base: None,
            symbol: None,
            adjoint: false,
            orientation: Orientation::Standard,
            family: FamilySpec::default(),
        }
    }

    /// The symbol in use: the configured one, or the valuation profile.
    pub fn effective_symbol(&self) -> Result<RadialStepFunction> {
        match &self.symbol {
            Some(b) => Ok(b.clone()),
            None => valuation_profile(self.ctx, DEFAULT_SYMBOL_HALF_WIDTH),
        }
    }
}

/// `b_j = j` on `[-w, w]`, frozen to `∓w` outside.
pub fn valuation_profile(ctx: PadicContext, w: i32) -> Result<RadialStepFunction> {
    RadialStepFunction::new(
        ctx,
        -w,
        (-w..=w).map(f64::from).collect(),
        PowerTail::constant(-f64::from(w)),
        PowerTail::constant(f64::from(w)),
    )
}

/// One failed hypothesis: `lhs relation rhs` should have held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub name: String,
    #[serde(with = "crate::real")]
    pub lhs: f64,
    pub relation: String,
    #[serde(with = "crate::real")]
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub theorem: Theorem,
    pub ok: bool,
    pub u: ExponentSummary,
    /// Shifted exponent `v`, when it exists.
    pub v: Option<ExponentSummary>,
    pub u_conj_minus: Option<f64>,
    pub v_conj_plus: Option<f64>,
    pub v_conj_minus: Option<f64>,
    /// Upper bound on `α` (`min(n/u_+, n/v'_+)`).
    pub alpha_bound: Option<f64>,
    /// Open interval of admissible `β`.
    pub beta_range: Option<(f64, f64)>,
    /// Central oscillation norms of the symbol, as `(exponent, value)`.
    pub symbol_cmo: Vec<(String, f64)>,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn lt(&mut self, name: &str, lhs: f64, rhs: f64) {
        if !(lhs < rhs) {
            self.push(name, lhs, "<", rhs);
        }
    }

    fn le(&mut self, name: &str, lhs: f64, rhs: f64) {
        if !(lhs <= rhs) {
            self.push(name, lhs, "<=", rhs);
        }
    }

    fn eq(&mut self, name: &str, lhs: f64, rhs: f64) {
        if lhs != rhs {
            self.push(name, lhs, "==", rhs);
        }
    }

    fn push(&mut self, name: &str, lhs: f64, relation: &str, rhs: f64) {
        self.violations.push(Violation { name: name.into(), lhs, relation: relation.into(), rhs });
    }
}

/// Evaluates every hypothesis of `tc.theorem`; violations are returned as
/// data with both sides of the failed inequality.
pub fn validate_hypotheses(tc: &TheoremConfig) -> HypothesisReport {
    let n = tc.ctx.nf();
    let t = tc.theorem;
    let mut c = Checker { violations: Vec::new() };
    let mut notes = Vec::new();
    let u_sum = tc.u.summary();

    c.lt("0 < m1", 0.0, tc.m1);
    c.le("m1 <= m2", tc.m1, tc.m2);
    c.lt("m2 < inf", tc.m2, f64::INFINITY);
    c.lt("1 < u_-", 1.0, u_sum.u_minus);
    if t.is_morrey() {
        c.le("0 <= lambda", 0.0, tc.lambda);
    }
    if let Some(base) = tc.mh_base {
        c.lt("1 < mh_base", 1.0, base);
    }

    let u_conj = tc.u.conjugate().ok();
    let u_conj_minus = u_conj.as_ref().map(|w| w.u_minus());
    let v = if t.is_corollary() {
        c.eq("alpha == 0", tc.alpha, 0.0);
        None
    } else {
        c.lt("0 < alpha", 0.0, tc.alpha);
        c.lt("alpha < n/u_+", tc.alpha, n / u_sum.u_plus);
        tc.u.sobolev_shift(tc.alpha).ok()
    };
    let v_conj = v.as_ref().and_then(|v| v.conjugate().ok());
    let v_conj_plus = v_conj.as_ref().map(|w| w.u_plus());
    let v_conj_minus = v_conj.as_ref().map(|w| w.u_minus());
    let mut alpha_bound = None;
    if !t.is_corollary() {
        match v_conj_plus {
            Some(vcp) => {
                c.lt("alpha < n/v'_+", tc.alpha, n / vcp);
                alpha_bound = Some((n / u_sum.u_plus).min(n / vcp));
            }
            None => notes.push("the shifted exponent v is undefined or has v_- = 1".into()),
        }
    }

    let lam = tc.lambda;
    let beta_range = match (t, u_conj_minus) {
        (_, None) => None,
        (Theorem::T31 | Theorem::T32, Some(ucm)) => v.as_ref().map(|v| (-n / v.u_plus(), n / ucm)),
        (Theorem::T41 | Theorem::T42, Some(ucm)) => v.as_ref().map(|v| (lam - n / v.u_minus(), n / ucm + lam)),
        (Theorem::C31 | Theorem::C32 | Theorem::C41, Some(ucm)) => Some((-n / u_sum.u_plus, n / ucm)),
        (Theorem::C42, Some(ucm)) => Some((lam - n / u_sum.u_minus, n / ucm + lam)),
    };
    match beta_range {
        Some((lo, hi)) => {
            c.lt("beta lower bound", lo, tc.beta);
            c.lt("beta upper bound", tc.beta, hi);
        }
        None => notes.push("β range undefined because a derived exponent is".into()),
    }

    let mut symbol_cmo = Vec::new();
    if t.is_commutator() {
        match tc.effective_symbol() {
            Ok(b) => {
                let second = if t.is_corollary() { Some(("u", tc.u.clone())) } else { v.clone().map(|v| ("v", v)) };
                let exps = [u_conj.clone().map(|w| ("u'", w)), second];
                for (name, e) in exps.into_iter().flatten() {
                    match cmo_norm(&b, &e, CmoOptions::default()) {
                        Ok(r) => {
                            c.lt(&format!("||b||_CMO^{name} < inf"), r.value, f64::INFINITY);
                            symbol_cmo.push((name.to_string(), r.value));
                        }
                        Err(e) => notes.push(format!("central oscillation of the symbol in {name}: {e}")),
                    }
                }
                if tc.symbol.is_none() {
                    notes.push(format!("symbol defaults to b_j = j on [-{w}, {w}]", w = DEFAULT_SYMBOL_HALF_WIDTH));
                }
            }
            Err(e) => notes.push(format!("symbol: {e}")),
        }
        if t == Theorem::T32 {
            if let Some(v) = &v {
                for mode in [RegularityMode::W0, RegularityMode::WInfinity] {
                    let r = check_regularity(v, mode, REGULARITY_BUDGET);
                    c.lt(&format!("v regularity {mode:?} constant < inf"), r.constant, f64::INFINITY);
                }
            }
        }
    }
    if t.targets_conjugate() {
        notes.push("target space carries the conjugate exponent u'".into());
    }
    if tc.orientation == Orientation::AsStated && tc.alpha > 0.0 {
        notes.push("as-stated orientation: source v/m2, target u/m1".into());
    }

    HypothesisReport {
        theorem: t,
        ok: c.violations.is_empty(),
        u: u_sum,
        v: v.as_ref().map(|v| v.summary()),
        u_conj_minus,
        v_conj_plus,
        v_conj_minus,
        alpha_bound,
        beta_range,
        symbol_cmo,
        violations: c.violations,
        notes,
    }
}

/// Which norm a space uses.
#[derive(Debug, Clone)]
struct Space {
    exponent: ExponentFunction,
    index: f64,
}

/// A prepared experiment: operator plus source and target spaces.
#[derive(Debug, Clone)]
pub struct Experiment {
    tc: TheoremConfig,
    op: OperatorSpec,
    source: Space,
    target: Space,
}

/// Norms of one sample and their quotient (`None` when the source norm is
/// zero or infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    #[serde(with = "crate::real")]
    pub source_norm: f64,
    #[serde(with = "crate::real")]
    pub target_norm: f64,
    #[serde(with = "crate::real::option")]
    pub ratio: Option<f64>,
}

impl Experiment {
    /// Validates the hypotheses and prepares the spaces.
    pub fn new(tc: &TheoremConfig) -> Result<Self> {
        let report = validate_hypotheses(tc);
        if !report.ok {
            let list: Vec<String> =
                report.violations.iter().map(|v| format!("{}: {} {} {}", v.name, v.lhs, v.relation, v.rhs)).collect();
            return Err(Error::Hypothesis(list.join("; ")));
        }
        Self::unchecked(tc)
    }

    /// Prepares the spaces without checking hypotheses (used by probes that
    /// deliberately leave the admissible range).
    pub fn unchecked(tc: &TheoremConfig) -> Result<Self> {
        let t = tc.theorem;
        let shifted = if t.is_corollary() {
            if t.targets_conjugate() {
                tc.u.conjugate()?
            } else {
                tc.u.clone()
            }
        } else {
            tc.u.sobolev_shift(tc.alpha)?
        };
        let (source, target) = match tc.orientation {
            Orientation::Standard => {
                (Space { exponent: tc.u.clone(), index: tc.m1 }, Space { exponent: shifted, index: tc.m2 })
            }
            Orientation::AsStated => {
                let src = if t.is_corollary() { tc.u.clone() } else { shifted };
                let tgt = if t.targets_conjugate() { tc.u.conjugate()? } else { tc.u.clone() };
                (Space { exponent: src, index: tc.m2 }, Space { exponent: tgt, index: tc.m1 })
            }
        };
        let op = if t.is_commutator() {
            OperatorSpec::commutator(tc.alpha, tc.effective_symbol()?, tc.adjoint)
        } else if tc.adjoint {
            OperatorSpec::hardy_adjoint(tc.alpha)
        } else {
            OperatorSpec::hardy(tc.alpha)
        };
        Ok(Experiment { tc: tc.clone(), op, source, target })
    }

    pub fn operator(&self) -> &OperatorSpec {
        &self.op
    }

    fn space_norm(&self, f: &RadialStepFunction, space: &Space) -> Result<NormResult> {
        let tc = &self.tc;
        if tc.theorem.is_morrey() {
            let mut mhp = MorreyHerzParams::new(tc.beta, space.index, tc.lambda)?;
            if let Some(b) = tc.mh_base {
                mhp = mhp.with_base(b)?;
            }
            morrey_herz_norm(f, &space.exponent, &mhp)
        } else {
            herz_norm(f, &space.exponent, &HerzParams::new(tc.beta, space.index)?)
        }
    }

    pub fn source_norm(&self, f: &RadialStepFunction) -> Result<f64> {
        Ok(self.space_norm(f, &self.source)?.value)
    }

    pub fn target_norm(&self, g: &RadialStepFunction) -> Result<f64> {
        Ok(self.space_norm(g, &self.target)?.value)
    }

    pub fn ratio(&self, f: &RadialStepFunction) -> Result<RatioSample> {
        let source_norm = self.source_norm(f)?;
        let image = self.op.apply(f)?;
        let target_norm = self.target_norm(&image)?;
        let ratio = (source_norm > 0.0 && source_norm.is_finite()).then(|| target_norm / source_norm);
        Ok(RatioSample { source_norm, target_norm, ratio })
    }
}

/// `‖T f‖_target / ‖f‖_source` for the theorem selected by `tc`.
pub fn boundedness_ratio(tc: &TheoremConfig, f: &RadialStepFunction) -> Result<RatioSample> {
    Experiment::new(tc)?.ratio(f)
}

/// Draws one member of the random family: a support of `K` distinct shells
/// (`K` uniform in `1..=2N+1`) in `[-N, N]`, coefficients log-uniform in
/// `[p^-3, p^3]` with random signs.
pub fn random_family_member(ctx: PadicContext, n: i32, rng: &mut impl Rng) -> Result<RadialStepFunction> {
    let width = (2 * n + 1) as usize;
    let k = rng.gen_range(1..=width);
    let shells = rand::seq::index::sample(rng, width, k);
    let mut coeffs = vec![0.0; width];
    let ln_p = ctx.pf().ln();
    for i in shells.iter() {
        let mag = (rng.gen_range(-3.0..=3.0) * ln_p).exp();
        coeffs[i] = if rng.gen_bool(0.5) { mag } else { -mag };
    }
    RadialStepFunction::finitely_supported(ctx, -n, coeffs)
}

fn family_rng(seed: u64, n: i32, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u32 as u64) << 32) | sample as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub sample_id: usize,
    #[serde(rename = "N")]
    pub n: i32,
    #[serde(flatten)]
    pub sample: RatioSample,
}

/// Running supremum for one support size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupEntry {
    #[serde(rename = "N")]
    pub n: i32,
    pub samples: usize,
    pub skipped: usize,
    /// Largest ratio seen for this `N` (absent when no ratio was defined).
    #[serde(with = "crate::real::option")]
    pub empirical_sup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub config: TheoremConfig,
    pub hypotheses: HypothesisReport,
    pub rows: Vec<RatioRow>,
    pub sup_by_n: Vec<SupEntry>,
    /// Largest ratio over all rows.
    #[serde(with = "crate::real::option")]
    pub empirical_sup: Option<f64>,
    pub sup_undefined: bool,
}

/// Runs the configured family through the experiment. Samples are evaluated
/// in parallel and merged in sample order.
pub fn sweep(tc: &TheoremConfig) -> Result<RatioReport> {
    let exp = Experiment::new(tc)?;
    let fam = &tc.family;
    let jobs: Vec<(usize, i32, usize)> = fam
        .supports
        .iter()
        .flat_map(|&n| (0..fam.samples).map(move |s| (n, s)))
        .enumerate()
        .map(|(id, (n, s))| (id, n, s))
        .collect();
    for &n in &fam.supports {
        if n < 0 || n >= tc.ctx.shell_limit() {
            return Err(Error::Invalid(format!("support half-width {n} outside [0, {})", tc.ctx.shell_limit())));
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(id, n, s)| {
            let f = random_family_member(tc.ctx, n, &mut family_rng(fam.seed, n, s))?;
            Ok(RatioRow { sample_id: id, n, sample: exp.ratio(&f)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_by_n: Vec<SupEntry> = fam
        .supports
        .iter()
        .map(|&n| {
            let of_n: Vec<&RatioRow> = rows.iter().filter(|r| r.n == n).collect();
            let ratios: Vec<f64> = of_n.iter().filter_map(|r| r.sample.ratio).collect();
            SupEntry {
                n,
                samples: of_n.len(),
                skipped: of_n.len() - ratios.len(),
                empirical_sup: ratios.iter().copied().reduce(f64::max),
            }
        })
        .collect();
    let empirical_sup = rows.iter().filter_map(|r| r.sample.ratio).reduce(f64::max);
    Ok(RatioReport {
        config: tc.clone(),
        hypotheses: validate_hypotheses(tc),
        rows,
        sup_by_n,
        empirical_sup,
        sup_undefined: empirical_sup.is_none(),
    })
}

fn csv_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

/// Writes the rows with header `sample_id,N,source_norm,target_norm,ratio`;
/// undefined ratios are written as `skip`.
pub fn write_csv<W: Write>(report: &RatioReport, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Invalid(format!("CSV output: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in &report.rows {
        w.write_record([
            r.sample_id.to_string(),
            r.n.to_string(),
            csv_real(r.sample.source_norm),
            csv_real(r.sample.target_norm),
            r.sample.ratio.map_or_else(|| "skip".to_string(), csv_real),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("CSV output: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub k: i32,
    #[serde(flatten)]
    pub sample: RatioSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    #[serde(with = "crate::real")]
    pub beta: f64,
    pub rows: Vec<ProbeRow>,
    pub strictly_increasing: bool,
}

/// Ratios on single shells `f_k = χ_{S_k}` with `β = n/u'_- + 0.5`, just
/// outside the admissible range.
pub fn sharpness_probe(tc: &TheoremConfig, shells: impl IntoIterator<Item = i32>) -> Result<ProbeReport> {
    let beta = tc.ctx.nf() / tc.u.conjugate()?.u_minus() + 0.5;
    let probe = TheoremConfig { beta, ..tc.clone() };
    let exp = Experiment::unchecked(&probe)?;
    let rows = shells
        .into_iter()
        .map(|k| {
            let f = RadialStepFunction::shell_indicator(tc.ctx, k)?;
            Ok(ProbeRow { k, sample: exp.ratio(&f)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.sample.ratio.unwrap_or(f64::NAN)).collect();
    let strictly_increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    Ok(ProbeReport { beta, rows, strictly_increasing })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma {
    L1,
    L3,
    L5,
}

impl std::str::FromStr for Lemma {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Lemma::L1),
            "L3" => Ok(Lemma::L3),
            "L5" => Ok(Lemma::L5),
            _ => Err(Error::Invalid(format!("unknown lemma `{s}` (expected L1, L3 or L5)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaFailure {
    pub trial: usize,
    #[serde(with = "crate::real")]
    pub lhs: f64,
    #[serde(with = "crate::real")]
    pub rhs: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: Lemma,
    pub trials: usize,
    pub passed: usize,
    pub failures: Vec<LemmaFailure>,
    /// Largest `lhs / rhs` seen (for L5 the largest relative change).
    #[serde(with = "crate::real")]
    pub worst_ratio: f64,
}

impl LemmaReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn random_context(rng: &mut impl Rng) -> PadicContext {
    let p = [2, 3, 5, 7][rng.gen_range(0..4)];
    PadicContext::new(p, rng.gen_range(1..=2)).expect("small primes")
}

/// A random exponent with window inside `[-4, 4]` and values in `[1.2, 4]`.
pub fn random_exponent(ctx: PadicContext, rng: &mut impl Rng) -> ExponentFunction {
    let lo = rng.gen_range(-4..=2);
    let len = rng.gen_range(1..=(5 - lo) as usize);
    let mut draw = || rng.gen_range(1.2..4.0);
    let values: Vec<f64> = (0..len).map(|_| draw()).collect();
    let (inner, inf) = (draw(), draw());
    ExponentFunction::new(ctx, lo, values, inner, inf).expect("values in range")
}

/// Runs `trials` random instances of the chosen lemma.
pub fn check_lemmas(which: Lemma, trials: usize, seed: u64) -> Result<LemmaReport> {
    if trials == 0 {
        return Err(Error::Invalid("at least one trial is needed".into()));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            match which {
                Lemma::L1 => lemma_l1(&mut rng),
                Lemma::L3 => lemma_l3(&mut rng),
                Lemma::L5 => lemma_l5(&mut rng),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (trial, (lhs, rhs, detail)) in outcomes.into_iter().enumerate() {
        let r = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        worst = worst.max(r);
        if lhs > rhs {
            failures.push(LemmaFailure { trial, lhs, rhs, detail });
        }
    }
    Ok(LemmaReport { lemma: which, trials, passed: trials - failures.len(), failures, worst_ratio: worst })
}

/// Lipschitz exponents lie in `W0`: the scanned `W0` constant is at most
/// `L · max_{γ<0} |γ| p^γ`, the bound implied by oscillation `≤ L p^γ` on
/// balls of radius `p^γ`.
fn lemma_l1(rng: &mut ChaCha8Rng) -> Result<(f64, f64, String)> {
    let ctx = random_context(rng);
    let u = random_exponent(ctx, rng);
    let lip = check_regularity(&u, RegularityMode::Lipschitz, REGULARITY_BUDGET);
    let w0 = check_regularity(&u, RegularityMode::W0, REGULARITY_BUDGET);
    let peak = (1..=200).map(|g| g as f64 * ctx.pow(-(g as f64))).fold(0.0, f64::max);
    let bound = lip.constant * peak * (1.0 + 1e-12);
    Ok((w0.constant, bound, format!("p={} n={} u={:?} L={} W0 witness {:?}", ctx.p(), ctx.n(), u, lip.constant, w0.witness)))
}

/// `|g(x) - g_{B_m}| ≤ |g(x) - g_{B_l}| + p^n |l - m| ‖g‖_CMO` with a
/// constant exponent.
fn lemma_l3(rng: &mut ChaCha8Rng) -> Result<(f64, f64, String)> {
    let ctx = random_context(rng);
    let u = ExponentFunction::constant(ctx, rng.gen_range(1.2..4.0))?;
    let w = rng.gen_range(1..=5);
    let coeffs: Vec<f64> = (0..(2 * w + 1)).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let g = RadialStepFunction::new(
        ctx,
        -w,
        coeffs.clone(),
        PowerTail::constant(coeffs[0]),
        PowerTail::constant(coeffs[coeffs.len() - 1]),
    )?;
    let (l, m) = (rng.gen_range(-8i64..=8), rng.gen_range(-8i64..=8));
    let x = rng.gen_range(-8i64..=8);
    let cmo = cmo_norm(&g, &u, CmoOptions::default())?.value;
    let gx = g.evaluate(x);
    let lhs = (gx - g.ball_mean(m)?).abs();
    let rhs = (gx - g.ball_mean(l)?).abs() + ctx.pow(ctx.nf()) * (l - m).abs() as f64 * cmo;
    Ok((lhs, rhs * (1.0 + 1e-12) + 1e-14, format!("p={} n={} l={l} m={m} x-shell={x} cmo={cmo} g={coeffs:?}", ctx.p(), ctx.n())))
}

/// `sup_{k, x ∈ B_k} ‖χ_{B_k}‖ / p^{kn/u(x,k)}` over `k ∈ [-r, r]`.
pub fn lemma_l5_sup(u: &ExponentFunction, r: i32) -> Result<f64> {
    let ctx = *u.ctx();
    let mut best: f64 = 0.0;
    for k in -r..=r {
        let norm = ball_indicator_norm(u, k, 1e-12)?;
        // x ranges over B_k; its exponent only matters through its shell
        for s in (u.lo() as i64 - 1).min(k as i64)..=k as i64 {
            let e = u.exponent_at(Some(s), k as i64);
            best = best.max(norm / ctx.pow(k as f64 * ctx.nf() / e));
        }
    }
    Ok(best)
}

/// The ball-norm supremum over `[-12, 12]` and `[-16, 16]`: returns the
/// relative change and the 1% threshold.
fn lemma_l5(rng: &mut ChaCha8Rng) -> Result<(f64, f64, String)> {
    let ctx = random_context(rng);
    let u = random_exponent(ctx, rng);
    let narrow = lemma_l5_sup(&u, 12)?;
    let wide = lemma_l5_sup(&u, 16)?;
    let change = (wide - narrow).abs() / narrow;
    Ok((change, 0.01, format!("p={} n={} u={:?} sup12={narrow} sup16={wide}", ctx.p(), ctx.n(), u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx(p: u32, n: u32) -> PadicContext {
        PadicContext::new(p, n).unwrap()
    }

    fn t31(alpha: f64, beta: f64) -> TheoremConfig {
        TheoremConfig::new(Theorem::T31, ExponentFunction::constant(ctx(2, 1), 2.0).unwrap(), alpha, beta)
    }

    #[test]
    fn validate_examples() {
        let r = validate_hypotheses(&t31(0.25, 0.0));
        assert!(r.ok, "{:?}", r.violations);
        let v = r.v.unwrap();
        assert_relative_eq!(v.u_plus, 4.0, epsilon = 1e-12);
        assert_relative_eq!(r.v_conj_plus.unwrap(), 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.alpha_bound.unwrap(), 0.5, epsilon = 1e-12);
        let (lo, hi) = r.beta_range.unwrap();
        assert_relative_eq!(lo, -0.25, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.5, epsilon = 1e-12);

        let r = validate_hypotheses(&t31(0.6, 0.0));
        assert!(!r.ok);
        let viol = r.violations.iter().find(|v| v.name == "alpha < n/u_+").unwrap();
        assert_eq!(viol.lhs, 0.6);
        assert_relative_eq!(viol.rhs, 0.5);
    }

    #[test]
    fn morrey_range_reduces_at_lambda_zero() {
        let tc = TheoremConfig { theorem: Theorem::T41, ..t31(0.25, 0.0) };
        assert_eq!(validate_hypotheses(&tc).beta_range, validate_hypotheses(&t31(0.25, 0.0)).beta_range);
    }

    #[test]
    fn m1_above_m2_is_a_violation() {
        let tc = TheoremConfig { m1: 2.0, m2: 1.0, ..t31(0.25, 0.0) };
        let r = validate_hypotheses(&tc);
        assert!(r.violations.iter().any(|v| v.name == "m1 <= m2"));
        assert!(matches!(Experiment::new(&tc), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn ratio_examples() {
        let tc = t31(0.25, 0.0);
        let f = RadialStepFunction::shell_indicator(tc.ctx, 0).unwrap();
        let a = boundedness_ratio(&tc, &f).unwrap();
        let b = boundedness_ratio(&tc, &f).unwrap();
        assert!(a.ratio.unwrap() > 0.0 && a.ratio.unwrap().is_finite());
        assert_eq!(a, b);
        let scaled = boundedness_ratio(&tc, &f.scale(3.7)).unwrap();
        assert_relative_eq!(scaled.ratio.unwrap(), a.ratio.unwrap(), max_relative = 1e-9);
        let zero = boundedness_ratio(&tc, &RadialStepFunction::zero(tc.ctx)).unwrap();
        assert_eq!(zero.ratio, None);
    }

    #[test]
    fn commutator_with_constant_symbol_has_zero_ratio() {
        let mut tc = t31(0.25, 0.0);
        tc.theorem = Theorem::T32;
        tc.symbol = Some(RadialStepFunction::constant(tc.ctx, 2.0));
        let f = RadialStepFunction::finitely_supported(tc.ctx, -1, vec![1.0, -2.0, 0.5]).unwrap();
        let r = boundedness_ratio(&tc, &f).unwrap();
        assert!(r.ratio.unwrap() < 1e-12);
    }

    #[test]
    fn empty_family() {
        let mut tc = t31(0.25, 0.0);
        tc.family.samples = 0;
        let r = sweep(&tc).unwrap();
        assert!(r.rows.is_empty() && r.sup_undefined && r.empirical_sup.is_none());
    }

    #[test]
    fn sweep_is_reproducible() {
        let mut tc = t31(0.25, 0.1);
        tc.family = FamilySpec { supports: vec![3, 6], samples: 20, seed: 9 };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_csv(&sweep(&tc).unwrap(), &mut a).unwrap();
        write_csv(&sweep(&tc).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("sample_id,N,source_norm,target_norm,ratio\n"));
        assert_eq!(text.lines().count(), 41);
    }

    #[test]
    fn morrey_at_lambda_zero_matches_herz_sweep() {
        let mut tc = t31(0.25, 0.1);
        tc.family = FamilySpec { supports: vec![4], samples: 30, seed: 1 };
        let herz = sweep(&tc).unwrap();
        let morrey = sweep(&TheoremConfig { theorem: Theorem::T41, ..tc }).unwrap();
        for (a, b) in herz.rows.iter().zip(&morrey.rows) {
            assert_eq!(a.sample.ratio, b.sample.ratio);
        }
    }

    #[test]
    fn config_json_round_trip() {
        let mut tc = t31(0.25, 0.1);
        tc.theorem = Theorem::T42;
        tc.lambda = 0.1;
        tc.symbol = Some(valuation_profile(tc.ctx, 2).unwrap());
        let text = serde_json::to_string(&tc).unwrap();
        let back: TheoremConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tc);
        let minimal = r#"{"theorem":"C31","ctx":{"p":3,"n":1},
            "u":{"window":[0,0],"values":[2],"u_inner":2,"u_infinity":2},"m1":1,"m2":2}"#;
        let tc: TheoremConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(tc.family, FamilySpec::default());
        assert_eq!(tc.orientation, Orientation::Standard);
    }

    #[test]
    fn lemma_l3_example() {
        let c = ctx(2, 1);
        let g = RadialStepFunction::ball_indicator(c, 0).unwrap();
        let u = ExponentFunction::constant(c, 2.0).unwrap();
        let cmo = cmo_norm(&g, &u, CmoOptions::default()).unwrap().value;
        let gx = g.evaluate(0);
        let lhs = (gx - g.ball_mean(2).unwrap()).abs();
        let rhs = (gx - g.ball_mean(0).unwrap()).abs() + 2.0 * 2.0 * cmo;
        assert_relative_eq!(lhs, 0.75);
        assert_relative_eq!(rhs, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn lemma_l5_constant_exponent_is_one() {
        let u = ExponentFunction::constant(ctx(3, 2), 2.5).unwrap();
        assert_relative_eq!(lemma_l5_sup(&u, 12).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lemma_checks_pass() {
        for lemma in [Lemma::L1, Lemma::L3, Lemma::L5] {
            let r = check_lemmas(lemma, 40, 3).unwrap();
            assert!(r.ok(), "{lemma:?}: {:?}", r.failures.first());
        }
    }
}
