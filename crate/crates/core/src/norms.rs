//! Modular, Luxemburg, Herz, Morrey-Herz and central mean-oscillation norms
//! for radial step functions and radial exponents.
//!
//! Every norm is a sum over shells. On the union of the function and
//! exponent windows the terms are computed one by one; outside it both the
//! function and the exponent follow their tails, so the terms form a
//! geometric sequence in the shell index and are summed in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::PadicContext;
use crate::radial::{ExponentFunction, RadialStepFunction};

pub const DEFAULT_REL_TOL: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_STEPS: usize = 2100;
/// Relative slack accepted when certifying a supremum.
const SUP_CERTIFY_TOL: f64 = 1e-10;
/// Upper bound on the shells examined past the window by a supremum scan.
const MAX_SUP_SCAN: i64 = 1_000_000;

/// Outcome of a norm computation. A divergent series is reported with
/// `convergent == false` and an infinite value rather than an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    #[serde(with = "crate::real")]
    pub value: f64,
    pub convergent: bool,
    /// Bound on what the computation could have missed: the bisection
    /// half-width for Luxemburg norms, the uncertified excess of the
    /// remaining candidates for supremum scans, zero for closed sums.
    #[serde(with = "crate::real")]
    pub tail_remainder_bound: f64,
    pub work_window: (i32, i32),
}

impl NormResult {
    fn exact(value: f64, work_window: (i32, i32)) -> Self {
        if value.is_finite() {
            NormResult { value, convergent: true, tail_remainder_bound: 0.0, work_window }
        } else {
            Self::divergent(work_window)
        }
    }

    fn divergent(work_window: (i32, i32)) -> Self {
        NormResult { value: f64::INFINITY, convergent: false, tail_remainder_bound: 0.0, work_window }
    }
}

/// Herz parameters `β` and `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HerzParams {
    pub beta: f64,
    pub m: f64,
}

impl HerzParams {
    pub fn new(beta: f64, m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) || !beta.is_finite() {
            return Err(Error::Invalid(format!("Herz parameters need finite β and m > 0 (β={beta}, m={m})")));
        }
        Ok(Self { beta, m })
    }
}

/// Morrey-Herz parameters. `prefactor_base` is the base `b` of the discount
/// `b^{-k_0 λ}`; `None` means `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorreyHerzParams {
    pub beta: f64,
    pub m: f64,
    pub lambda: f64,
    #[serde(default)]
    pub prefactor_base: Option<f64>,
}

impl MorreyHerzParams {
    pub fn new(beta: f64, m: f64, lambda: f64) -> Result<Self> {
        HerzParams::new(beta, m)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Invalid(format!("λ = {lambda} must be finite and nonnegative")));
        }
        Ok(Self { beta, m, lambda, prefactor_base: None })
    }

    pub fn with_base(mut self, base: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) {
            return Err(Error::Invalid(format!("prefactor base {base} must exceed 1")));
        }
        self.prefactor_base = Some(base);
        Ok(self)
    }

    pub fn herz(&self) -> HerzParams {
        HerzParams { beta: self.beta, m: self.m }
    }

    fn base(&self, ctx: &PadicContext) -> f64 {
        self.prefactor_base.unwrap_or(ctx.pf())
    }
}

/// Options for [`cmo_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmoOptions {
    /// Use `‖b - b_{B_γ}‖` over all of `Q_p^n` instead of restricting the
    /// oscillation to `B_γ`.
    pub literal: bool,
    pub rel_tol: f64,
}

impl Default for CmoOptions {
    fn default() -> Self {
        CmoOptions { literal: false, rel_tol: DEFAULT_REL_TOL }
    }
}

/// Terms `coeff · p^{k·rate}` of a series on one side of the window.
#[derive(Debug, Clone, Copy)]
struct GeoTail {
    coeff: f64,
    rate: f64,
}

impl GeoTail {
    const ZERO: GeoTail = GeoTail { coeff: 0.0, rate: 0.0 };

    fn term(&self, ctx: &PadicContext, k: i64) -> f64 {
        if self.coeff == 0.0 {
            0.0
        } else {
            self.coeff * ctx.pow(k as f64 * self.rate)
        }
    }
}

/// Nonnegative shell terms: explicit on `[lo, lo + len)`, geometric outside.
#[derive(Debug, Clone)]
struct ShellSeries {
    ctx: PadicContext,
    lo: i64,
    terms: Vec<f64>,
    inner: GeoTail,
    outer: GeoTail,
}

impl ShellSeries {
    fn hi(&self) -> i64 {
        self.lo + self.terms.len() as i64 - 1
    }

    /// `Σ_{k < lo}`; infinite when the terms do not decay towards the origin.
    fn inner_sum(&self) -> f64 {
        let t = self.inner;
        if t.coeff == 0.0 {
            0.0
        } else if t.rate <= 0.0 {
            f64::INFINITY
        } else {
            t.term(&self.ctx, self.lo - 1) / (1.0 - self.ctx.pow(-t.rate))
        }
    }

    /// `Σ_{k > hi}`.
    fn outer_sum(&self) -> f64 {
        let t = self.outer;
        if t.coeff == 0.0 {
            0.0
        } else if t.rate >= 0.0 {
            f64::INFINITY
        } else {
            t.term(&self.ctx, self.hi() + 1) / (1.0 - self.ctx.pow(t.rate))
        }
    }

    fn total(&self) -> f64 {
        self.inner_sum() + self.terms.iter().sum::<f64>() + self.outer_sum()
    }
}

fn work_window(f: &RadialStepFunction, u: &ExponentFunction) -> (i32, i32) {
    (f.lo().min(u.lo()), f.hi().max(u.hi()))
}

/// `p^{(lnc + k·rate·ln p)}` style exponentials, guarding `ln 0`.
fn exp_or_zero(ln: f64) -> f64 {
    if ln == f64::NEG_INFINITY {
        0.0
    } else {
        ln.exp()
    }
}

/// The modular `℘(f/λ) = Σ_k |f_k/λ|^{u_k} |S_k|`, prepared for repeated
/// evaluation at different `λ`.
struct ModularPlan {
    ctx: PadicContext,
    lo: i64,
    // (ln|f_k|, u_k, ln|S_k|)
    shells: Vec<(f64, f64, f64)>,
    // (ln|A|, u, rate of the term sequence)
    inner: Option<(f64, f64, f64)>,
    outer: Option<(f64, f64, f64)>,
    window: (i32, i32),
}

impl ModularPlan {
    fn new(f: &RadialStepFunction, u: &ExponentFunction) -> Result<Self> {
        f.ctx().check_same(u.ctx())?;
        let ctx = *f.ctx();
        let window = work_window(f, u);
        let (lo, hi) = (window.0 as i64, window.1 as i64);
        let shells = (lo..=hi)
            .map(|k| (f.evaluate(k).abs().ln(), u.at_shell(k), ctx.sphere_measure_f64(k).ln()))
            .collect();
        let n = ctx.nf();
        let tail = |t: crate::radial::PowerTail, exp: f64| {
            (!t.is_zero()).then(|| (t.amplitude.abs().ln(), exp, t.rate * exp + n))
        };
        Ok(Self {
            ctx,
            lo,
            shells,
            inner: tail(f.inner_tail(), u.u_inner()),
            outer: tail(f.outer_tail(), u.u_infinity()),
            window,
        })
    }

    fn is_zero(&self) -> bool {
        self.inner.is_none() && self.outer.is_none() && self.shells.iter().all(|s| s.0 == f64::NEG_INFINITY)
    }

    fn divergent(&self) -> bool {
        self.inner.map_or(false, |t| t.2 <= 0.0) || self.outer.map_or(false, |t| t.2 >= 0.0)
    }

    fn series(&self, lambda: f64) -> ShellSeries {
        let ln_l = lambda.ln();
        let ln_frac = self.ctx.sphere_fraction().ln();
        let tail = |t: Option<(f64, f64, f64)>| match t {
            None => GeoTail::ZERO,
            Some((ln_a, u, rate)) => GeoTail { coeff: exp_or_zero(u * (ln_a - ln_l) + ln_frac), rate },
        };
        ShellSeries {
            ctx: self.ctx,
            lo: self.lo,
            terms: self.shells.iter().map(|&(ln_f, u, ln_m)| exp_or_zero(u * (ln_f - ln_l) + ln_m)).collect(),
            inner: tail(self.inner),
            outer: tail(self.outer),
        }
    }

    fn eval(&self, lambda: f64) -> f64 {
        if self.divergent() {
            return f64::INFINITY;
        }
        self.series(lambda).total()
    }
}

/// `℘_{u(·)}(f) = ∫ |f(x)|^{u(x)} dx`.
pub fn modular(f: &RadialStepFunction, u: &ExponentFunction) -> Result<NormResult> {
    let plan = ModularPlan::new(f, u)?;
    Ok(NormResult::exact(plan.eval(1.0), plan.window))
}

/// Luxemburg norm `inf{λ > 0 : ℘(f/λ) ≤ 1}` by bracketing from `λ = 1` and
/// bisecting the decreasing map `λ ↦ ℘(f/λ)` to relative width `rel_tol`.
pub fn luxemburg_norm(f: &RadialStepFunction, u: &ExponentFunction, rel_tol: f64) -> Result<NormResult> {
    if !(rel_tol > 1e-14 && rel_tol < 1e-3) {
        return Err(Error::Invalid(format!("rel_tol = {rel_tol} outside (1e-14, 1e-3)")));
    }
    let plan = ModularPlan::new(f, u)?;
    if plan.is_zero() {
        return Ok(NormResult::exact(0.0, plan.window));
    }
    if plan.divergent() {
        return Ok(NormResult::divergent(plan.window));
    }
    let rho = |l: f64| plan.eval(l);
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut steps = 0;
    if rho(1.0) > 1.0 {
        while rho(hi) > 1.0 {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
                return Ok(NormResult::divergent(plan.window));
            }
        }
    } else {
        while rho(lo) <= 1.0 {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || lo == 0.0 {
                return Ok(NormResult::exact(0.0, plan.window));
            }
        }
    }
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NormResult {
        value: 0.5 * (lo + hi),
        convergent: true,
        tail_remainder_bound: 0.5 * (hi - lo),
        work_window: plan.window,
    })
}

/// `‖χ_{B_γ}‖_{L^{u(·)}}`: `p^{nγ/u}` when `u` is constant on `B_γ`,
/// otherwise by bisection.
pub fn ball_indicator_norm(u: &ExponentFunction, gamma: i32, rel_tol: f64) -> Result<f64> {
    let ctx = *u.ctx();
    let below_window = gamma < u.lo();
    let flat = below_window || (u.lo()..=gamma).all(|k| u.at_shell(k as i64) == u.u_inner());
    if flat {
        return Ok(ctx.pow(ctx.nf() * gamma as f64 / u.u_inner()));
    }
    let chi = RadialStepFunction::ball_indicator(ctx, gamma)?;
    Ok(luxemburg_norm(&chi, u, rel_tol)?.value)
}

/// Terms `‖p^{ℓβ} f χ_ℓ‖^m = (p^{ℓβ} |f_ℓ| |S_ℓ|^{1/u_ℓ})^m`.
fn herz_series(f: &RadialStepFunction, u: &ExponentFunction, hp: &HerzParams) -> Result<(ShellSeries, (i32, i32))> {
    f.ctx().check_same(u.ctx())?;
    let ctx = *f.ctx();
    let window = work_window(f, u);
    let (lo, hi) = (window.0 as i64, window.1 as i64);
    let ln_p = ctx.pf().ln();
    let ln_frac = ctx.sphere_fraction().ln();
    let n = ctx.nf();
    let m = hp.m;
    let terms = (lo..=hi)
        .map(|k| {
            let ln_mu = ctx.sphere_measure_f64(k).ln();
            exp_or_zero(m * (k as f64 * hp.beta * ln_p + f.evaluate(k).abs().ln() + ln_mu / u.at_shell(k)))
        })
        .collect();
    let tail = |t: crate::radial::PowerTail, exp: f64| {
        if t.is_zero() {
            GeoTail::ZERO
        } else {
            GeoTail {
                coeff: exp_or_zero(m * (t.amplitude.abs().ln() + ln_frac / exp)),
                rate: m * (hp.beta + t.rate + n / exp),
            }
        }
    };
    let series = ShellSeries {
        ctx,
        lo,
        terms,
        inner: tail(f.inner_tail(), u.u_inner()),
        outer: tail(f.outer_tail(), u.u_infinity()),
    };
    Ok((series, window))
}

/// Herz norm `(Σ_ℓ ‖p^{ℓβ} f χ_ℓ‖^m_{L^{u(·)}})^{1/m}`.
pub fn herz_norm(f: &RadialStepFunction, u: &ExponentFunction, hp: &HerzParams) -> Result<NormResult> {
    let (series, window) = herz_series(f, u, hp)?;
    Ok(NormResult::exact(series.total().powf(1.0 / hp.m), window))
}

/// Morrey-Herz norm `sup_{k_0} b^{-k_0 λ} (Σ_{ℓ ≤ k_0} ‖p^{ℓβ} f χ_ℓ‖^m)^{1/m}`.
///
/// Candidates below the window form an exact exponential in `k_0`, so their
/// supremum is either the one adjacent to the window or infinite. Above the
/// window the scan continues until a closed-form bound on every remaining
/// candidate drops below the best value found.
pub fn morrey_herz_norm(f: &RadialStepFunction, u: &ExponentFunction, mhp: &MorreyHerzParams) -> Result<NormResult> {
    if mhp.lambda == 0.0 {
        return herz_norm(f, u, &mhp.herz());
    }
    let (series, window) = herz_series(f, u, &mhp.herz())?;
    let ctx = series.ctx;
    let m = mhp.m;
    let ln_p = ctx.pf().ln();
    let ln_b = mhp.base(&ctx).ln();
    let lambda = mhp.lambda;
    let discount = |k0: i64| (-(k0 as f64) * lambda * ln_b).exp();
    let candidate = |k0: i64, partial: f64| discount(k0) * partial.powf(1.0 / m);

    // Below the window: P(k0) = c p^{k0 r}/(1 - p^{-r}) and the candidate is
    // proportional to exp(k0 (r ln p / m - λ ln b)).
    let mut partial = series.inner_sum();
    if !partial.is_finite() {
        return Ok(NormResult::divergent(window));
    }
    if series.inner.coeff != 0.0 && series.inner.rate * ln_p / m - lambda * ln_b < 0.0 {
        return Ok(NormResult::divergent(window));
    }
    let mut best = candidate(series.lo - 1, partial);
    for (i, t) in series.terms.iter().enumerate() {
        partial += t;
        best = best.max(candidate(series.lo + i as i64, partial));
    }

    let tail = series.outer;
    if tail.coeff == 0.0 {
        // candidates only shrink past the window
        return Ok(NormResult { value: best, convergent: true, tail_remainder_bound: 0.0, work_window: window });
    }
    let growth = tail.rate * ln_p / m - lambda * ln_b;
    if tail.rate >= 0.0 && growth > 0.0 {
        return Ok(NormResult::divergent(window));
    }
    let total = if tail.rate < 0.0 { partial + series.outer_sum() } else { f64::INFINITY };
    // q < 1 bounds the ratio of consecutive outer terms after discounting
    let q = (tail.rate * ln_p - lambda * m * ln_b).exp();
    let bound_after = |k: i64, partial_k: f64| -> f64 {
        if tail.rate < 0.0 {
            discount(k + 1) * total.powf(1.0 / m)
        } else if q < 1.0 {
            // P(k0) ≤ P(k) + c (k0 - k) p^{k0 r}
            let j_star = (1.0 / -q.ln()).max(1.0);
            let jq = [j_star.floor().max(1.0), j_star.ceil()]
                .iter()
                .map(|&j| j * q.powf(j))
                .fold(0.0, f64::max);
            let pow_m = discount(k + 1).powf(m) * partial_k + tail.coeff * q.powf(k as f64) * jq;
            pow_m.powf(1.0 / m)
        } else {
            f64::INFINITY
        }
    };
    let mut k = series.hi();
    let mut remainder = bound_after(k, partial);
    while remainder > best * (1.0 + SUP_CERTIFY_TOL) {
        if k - series.hi() >= MAX_SUP_SCAN {
            break;
        }
        k += 1;
        partial += tail.term(&ctx, k);
        best = best.max(candidate(k, partial));
        remainder = bound_after(k, partial);
    }
    Ok(NormResult {
        value: best,
        convergent: true,
        tail_remainder_bound: (remainder - best).max(0.0),
        work_window: window,
    })
}

/// Central mean oscillation norm
/// `sup_γ ‖(b - b_{B_γ}) χ_{B_γ}‖_{L^{u(·)}} / ‖χ_{B_γ}‖_{L^{u(·)}}`
/// (or the unrestricted numerator when `opts.literal`).
///
/// `b` must have a constant (or zero) inner tail; the certified bound past
/// the window also needs a constant outer tail.
pub fn cmo_norm(b: &RadialStepFunction, u: &ExponentFunction, opts: CmoOptions) -> Result<NormResult> {
    b.ctx().check_same(u.ctx())?;
    let ctx = *b.ctx();
    if !b.inner_integrable() {
        return Err(Error::Domain("symbol is not locally integrable".into()));
    }
    if b.inner_tail().rate != 0.0 {
        return Err(Error::Domain(format!(
            "central oscillation needs a constant inner tail, got rate {}",
            b.inner_tail().rate
        )));
    }
    let window = work_window(b, u);
    let limit = ctx.shell_limit();
    let outer_constant = b.outer_tail().rate == 0.0;

    let ratio = |gamma: i32| -> Result<f64> {
        let mean = b.ball_mean(gamma as i64)?;
        let numerator = if opts.literal {
            if !outer_constant {
                return Err(Error::Domain("unrestricted oscillation needs a constant outer tail".into()));
            }
            let g = b.sub(&RadialStepFunction::constant(ctx, mean))?;
            luxemburg_norm(&g, u, opts.rel_tol)?.value
        } else {
            let chi = RadialStepFunction::ball_indicator(ctx, gamma)?;
            let g = b.restrict_to_ball(gamma)?.sub(&chi.scale(mean))?;
            luxemburg_norm(&g, u, opts.rel_tol)?.value
        };
        Ok(numerator / ball_indicator_norm(u, gamma, opts.rel_tol)?)
    };

    // Below the symbol's window b is constant on B_γ and the ratio vanishes.
    let mut best = 0.0f64;
    let start = if opts.literal { window.0 - 1 } else { b.lo() };
    for gamma in start..=window.1 {
        let r = ratio(gamma)?;
        if !r.is_finite() {
            return Ok(NormResult::divergent(window));
        }
        best = best.max(r);
    }

    if opts.literal {
        let r = ratio((window.1 + 1).min(limit))?;
        if !r.is_finite() {
            return Ok(NormResult::divergent(window));
        }
        best = best.max(r);
        let certain = b.sub(&RadialStepFunction::constant(ctx, b.evaluate(0)))?.is_zero();
        let bound = if certain { 0.0 } else { f64::INFINITY };
        return Ok(NormResult { value: best, convergent: true, tail_remainder_bound: bound, work_window: window });
    }

    // Past the window: ratio(γ) ≤ N0/‖χ_{B_γ}‖ + |D| p^{-nγ} with
    // N0 = ‖(b - A)χ_{B_W}‖, D = ∫_{B_W}(b - A), A the outer constant.
    let top = window.1;
    let (n0, d) = if outer_constant {
        let a = b.outer_tail().amplitude;
        let shifted = b.restrict_to_ball(top)?.sub(&RadialStepFunction::ball_indicator(ctx, top)?.scale(a))?;
        (luxemburg_norm(&shifted, u, opts.rel_tol)?.value, shifted.integral()?)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let bound_from = |gamma: i32| -> Result<f64> {
        Ok(n0 / ball_indicator_norm(u, gamma, opts.rel_tol)? + d.abs() * ctx.pow(-ctx.nf() * gamma as f64))
    };
    let mut gamma = top;
    let mut remainder = if gamma < limit { bound_from(gamma + 1)? } else { f64::INFINITY };
    while remainder > best * (1.0 + SUP_CERTIFY_TOL) && gamma < limit {
        gamma += 1;
        let r = ratio(gamma)?;
        if !r.is_finite() {
            return Ok(NormResult::divergent(window));
        }
        best = best.max(r);
        remainder = if gamma < limit { bound_from(gamma + 1)? } else { f64::INFINITY };
    }
    Ok(NormResult {
        value: best,
        convergent: true,
        tail_remainder_bound: (remainder - best).max(0.0),
        work_window: window,
    })
}
