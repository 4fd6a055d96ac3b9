//! Radial step functions with power-law tails, and radial variable exponents.
//!
//! A [`RadialStepFunction`] takes one value per shell `S_k`. On a finite
//! window `[lo, hi]` the values are stored explicitly; below and above it
//! they follow single power laws `A·p^{k e}`. This class is closed under the
//! Hardy operators of [`crate::operators`] and every integral over it
//! reduces to a finite sum plus two geometric series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::PadicContext;

/// Largest number of explicit outer shells summed term by term before the
/// closed geometric form is used.
const DIRECT_SUM_LIMIT: i64 = 4096;

const RATE_TOL: f64 = 1e-12;

/// The power law `amplitude · p^{k·rate}` on the shells of one tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTail {
    #[serde(rename = "A", with = "crate::real")]
    pub amplitude: f64,
    #[serde(rename = "e", with = "crate::real")]
    pub rate: f64,
}

impl PowerTail {
    pub const ZERO: PowerTail = PowerTail { amplitude: 0.0, rate: 0.0 };

    pub fn new(amplitude: f64, rate: f64) -> Self {
        PowerTail { amplitude, rate }.normalized()
    }

    pub fn constant(c: f64) -> Self {
        Self::new(c, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Zero tails carry rate 0 so that equality is structural.
    fn normalized(self) -> Self {
        if self.amplitude == 0.0 {
            Self::ZERO
        } else {
            self
        }
    }

    pub fn value_at(&self, ctx: &PadicContext, k: i64) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.amplitude * ctx.pow(k as f64 * self.rate)
        }
    }

    fn add(self, other: PowerTail, side: &'static str) -> Result<PowerTail> {
        if self.is_zero() {
            return Ok(other);
        }
        if other.is_zero() {
            return Ok(self);
        }
        if (self.rate - other.rate).abs() > RATE_TOL {
            return Err(Error::IncompatibleTails { side, left: self.rate, right: other.rate });
        }
        Ok(PowerTail::new(self.amplitude + other.amplitude, self.rate))
    }

    fn mul(self, other: PowerTail) -> PowerTail {
        PowerTail::new(self.amplitude * other.amplitude, self.rate + other.rate)
    }
}

/// Shellwise arithmetic accepted by [`RadialStepFunction::combine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CombineOp {
    Add,
    Multiply,
    Scale(f64),
}

/// A radial function, constant on every shell, with power-law tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RadialFunctionJson", into = "RadialFunctionJson")]
pub struct RadialStepFunction {
    ctx: PadicContext,
    lo: i32,
    coeffs: Vec<f64>,
    inner: PowerTail,
    outer: PowerTail,
    value_at_zero: Option<f64>,
}

/// On-disk form of a [`RadialStepFunction`]. `ctx` may be omitted and
/// supplied by the caller through [`RadialFunctionJson::into_function`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialFunctionJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctx: Option<PadicContext>,
    pub window: [i32; 2],
    #[serde(with = "crate::real::vec")]
    pub coeffs: Vec<f64>,
    #[serde(default = "zero_tail")]
    pub inner_tail: PowerTail,
    #[serde(default = "zero_tail")]
    pub outer_tail: PowerTail,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::real::option")]
    pub value_at_zero: Option<f64>,
}

fn zero_tail() -> PowerTail {
    PowerTail::ZERO
}

impl RadialFunctionJson {
    pub fn into_function(self, fallback: Option<PadicContext>) -> Result<RadialStepFunction> {
        let ctx = self
            .ctx
            .or(fallback)
            .ok_or_else(|| Error::Invalid("function has no `ctx` and none was supplied".into()))?;
        let [lo, hi] = self.window;
        if hi < lo || (hi - lo + 1) as usize != self.coeffs.len() {
            return Err(Error::Invalid(format!(
                "window [{lo}, {hi}] does not match {} coefficients",
                self.coeffs.len()
            )));
        }
        let mut f = RadialStepFunction::new(ctx, lo, self.coeffs, self.inner_tail, self.outer_tail)?;
        if let Some(v) = self.value_at_zero {
            f = f.with_value_at_zero(v);
        }
        Ok(f)
    }
}

impl TryFrom<RadialFunctionJson> for RadialStepFunction {
    type Error = Error;
    fn try_from(raw: RadialFunctionJson) -> Result<Self> {
        raw.into_function(None)
    }
}

impl From<RadialStepFunction> for RadialFunctionJson {
    fn from(f: RadialStepFunction) -> Self {
        RadialFunctionJson {
            ctx: Some(f.ctx),
            window: [f.lo(), f.hi()],
            coeffs: f.coeffs,
            inner_tail: f.inner,
            outer_tail: f.outer,
            value_at_zero: f.value_at_zero,
        }
    }
}

fn check_window(ctx: &PadicContext, lo: i64, hi: i64) -> Result<()> {
    ctx.check_shell(lo)?;
    ctx.check_shell(hi)?;
    Ok(())
}

fn check_finite(what: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} must be finite, got {x}")))
    }
}

impl RadialStepFunction {
    pub fn new(
        ctx: PadicContext,
        lo: i32,
        coeffs: Vec<f64>,
        inner: PowerTail,
        outer: PowerTail,
    ) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Invalid("a radial function needs at least one window shell".into()));
        }
        check_window(&ctx, lo as i64, lo as i64 + coeffs.len() as i64 - 1)?;
        for &c in &coeffs {
            check_finite("coefficient", c)?;
        }
        for t in [inner, outer] {
            check_finite("tail amplitude", t.amplitude)?;
            check_finite("tail rate", t.rate)?;
        }
        Ok(Self { ctx, lo, coeffs, inner: inner.normalized(), outer: outer.normalized(), value_at_zero: None })
    }

    /// Coefficients on `[lo, lo + len)`, zero elsewhere.
    pub fn finitely_supported(ctx: PadicContext, lo: i32, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(ctx, lo, coeffs, PowerTail::ZERO, PowerTail::ZERO)
    }

    pub fn zero(ctx: PadicContext) -> Self {
        Self::finitely_supported(ctx, 0, vec![0.0]).expect("shell 0 is always in range")
    }

    pub fn constant(ctx: PadicContext, c: f64) -> Self {
        Self::new(ctx, 0, vec![c], PowerTail::constant(c), PowerTail::constant(c)).expect("shell 0 is in range")
    }

    /// `χ_{S_k}`.
    pub fn shell_indicator(ctx: PadicContext, k: i32) -> Result<Self> {
        Self::finitely_supported(ctx, k, vec![1.0])
    }

    /// `χ_{B_γ}`.
    pub fn ball_indicator(ctx: PadicContext, gamma: i32) -> Result<Self> {
        Self::new(ctx, gamma, vec![1.0], PowerTail::constant(1.0), PowerTail::ZERO)
    }

    pub fn with_value_at_zero(mut self, v: f64) -> Self {
        self.value_at_zero = Some(v);
        self
    }

    pub fn ctx(&self) -> &PadicContext {
        &self.ctx
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.coeffs.len() as i32 - 1
    }

    pub fn window(&self) -> (i32, i32) {
        (self.lo(), self.hi())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn inner_tail(&self) -> PowerTail {
        self.inner
    }

    pub fn outer_tail(&self) -> PowerTail {
        self.outer
    }

    /// Value on the shell `S_k`.
    pub fn evaluate(&self, k: i64) -> f64 {
        if k < self.lo as i64 {
            self.inner.value_at(&self.ctx, k)
        } else if k > self.hi() as i64 {
            self.outer.value_at(&self.ctx, k)
        } else {
            self.coeffs[(k - self.lo as i64) as usize]
        }
    }

    /// Value at the origin: the explicit override, else the inner-tail limit
    /// when that tail is constant, else zero.
    pub fn value_at_zero(&self) -> f64 {
        match self.value_at_zero {
            Some(v) => v,
            None if self.inner.rate == 0.0 => self.inner.amplitude,
            None => 0.0,
        }
    }

    /// Value at a point given by its shell (`None` is the origin).
    pub fn evaluate_at(&self, shell: Option<i64>) -> f64 {
        match shell {
            Some(k) => self.evaluate(k),
            None => self.value_at_zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.inner.is_zero() && self.outer.is_zero() && self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// The same function stored on the window `[lo, hi]` (which must contain
    /// the current one).
    pub fn widened(&self, lo: i32, hi: i32) -> Result<Self> {
        let lo = lo.min(self.lo());
        let hi = hi.max(self.hi());
        check_window(&self.ctx, lo as i64, hi as i64)?;
        let coeffs = (lo..=hi).map(|k| self.evaluate(k as i64)).collect();
        Ok(Self { coeffs, lo, ..self.clone() })
    }

    fn zip_with(&self, g: &Self, inner: PowerTail, outer: PowerTail, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ctx.check_same(&g.ctx)?;
        let lo = self.lo().min(g.lo());
        let hi = self.hi().max(g.hi());
        let coeffs = (lo..=hi).map(|k| op(self.evaluate(k as i64), g.evaluate(k as i64))).collect();
        let value_at_zero = match (self.value_at_zero, g.value_at_zero) {
            (None, None) => None,
            _ => Some(op(self.value_at_zero(), g.value_at_zero())),
        };
        let mut out = Self::new(self.ctx, lo, coeffs, inner, outer)?;
        out.value_at_zero = value_at_zero;
        Ok(out)
    }

    /// Shellwise `f ∘ g` on the union window, with tails combined exactly.
    pub fn combine(&self, g: &Self, op: CombineOp) -> Result<Self> {
        match op {
            CombineOp::Add => {
                let inner = self.inner.add(g.inner, "inner")?;
                let outer = self.outer.add(g.outer, "outer")?;
                self.zip_with(g, inner, outer, |a, b| a + b)
            }
            CombineOp::Multiply => {
                self.zip_with(g, self.inner.mul(g.inner), self.outer.mul(g.outer), |a, b| a * b)
            }
            CombineOp::Scale(c) => Ok(self.scale(c)),
        }
    }

    pub fn add(&self, g: &Self) -> Result<Self> {
        self.combine(g, CombineOp::Add)
    }

    pub fn sub(&self, g: &Self) -> Result<Self> {
        self.add(&g.scale(-1.0))
    }

    pub fn mul(&self, g: &Self) -> Result<Self> {
        self.combine(g, CombineOp::Multiply)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            ctx: self.ctx,
            lo: self.lo,
            coeffs: self.coeffs.iter().map(|&x| c * x).collect(),
            inner: PowerTail::new(c * self.inner.amplitude, self.inner.rate),
            outer: PowerTail::new(c * self.outer.amplitude, self.outer.rate),
            value_at_zero: self.value_at_zero.map(|v| c * v),
        }
    }

    pub fn abs(&self) -> Self {
        self.pow_abs(1.0)
    }

    /// `|f|^s` for `s > 0`.
    pub fn pow_abs(&self, s: f64) -> Self {
        let tail = |t: PowerTail| PowerTail::new(t.amplitude.abs().powf(s), t.rate * s);
        Self {
            ctx: self.ctx,
            lo: self.lo,
            coeffs: self.coeffs.iter().map(|x| x.abs().powf(s)).collect(),
            inner: tail(self.inner),
            outer: tail(self.outer),
            value_at_zero: self.value_at_zero.map(|v| v.abs().powf(s)),
        }
    }

    /// `f·χ_{B_γ}`.
    pub fn restrict_to_ball(&self, gamma: i32) -> Result<Self> {
        self.mul(&Self::ball_indicator(self.ctx, gamma)?)
    }

    /// Whether `∫_{B_0} |f|` is finite, i.e. the inner tail is zero or has
    /// rate above `-n`.
    pub fn inner_integrable(&self) -> bool {
        self.inner.is_zero() || self.inner.rate > -self.ctx.nf()
    }

    fn inner_integral_through(&self, top: i64) -> Result<f64> {
        if self.inner.is_zero() {
            return Ok(0.0);
        }
        if !self.inner_integrable() {
            return Err(Error::Domain(format!(
                "inner tail rate {} is not integrable (needs > -{})",
                self.inner.rate, self.ctx.n()
            )));
        }
        let r = self.inner.rate + self.ctx.nf();
        Ok(self.inner.amplitude * self.ctx.sphere_fraction() * self.ctx.pow(top as f64 * r)
            / (1.0 - self.ctx.pow(-r)))
    }

    fn outer_partial(&self, from: i64, to: i64) -> f64 {
        if self.outer.is_zero() || to < from {
            return 0.0;
        }
        let r = self.outer.rate + self.ctx.nf();
        let c = self.outer.amplitude * self.ctx.sphere_fraction();
        if to - from < DIRECT_SUM_LIMIT {
            (from..=to).map(|j| self.ctx.pow(j as f64 * r)).sum::<f64>() * c
        } else if r == 0.0 {
            c * (to - from + 1) as f64
        } else {
            c * (self.ctx.pow((to + 1) as f64 * r) - self.ctx.pow(from as f64 * r)) / (self.ctx.pow(r) - 1.0)
        }
    }

    /// `∫_{B_γ} f = Σ_{j ≤ γ} f_j |S_j|`.
    pub fn ball_integral(&self, gamma: i64) -> Result<f64> {
        let (lo, hi) = (self.lo as i64, self.hi() as i64);
        let inner = self.inner_integral_through(gamma.min(lo - 1))?;
        let window: f64 = (lo..=hi.min(gamma))
            .map(|k| self.coeffs[(k - lo) as usize] * self.ctx.sphere_measure_f64(k))
            .sum();
        Ok(inner + window + self.outer_partial(hi + 1, gamma))
    }

    /// Mean value over `B_γ`.
    pub fn ball_mean(&self, gamma: i64) -> Result<f64> {
        Ok(self.ball_integral(gamma)? / self.ctx.ball_measure_f64(gamma))
    }

    /// `∫_{Q_p^n} f`, summing both tails analytically.
    pub fn integral(&self) -> Result<f64> {
        let hi = self.hi() as i64;
        let through_window = self.ball_integral(hi)?;
        if self.outer.is_zero() {
            return Ok(through_window);
        }
        let r = self.outer.rate + self.ctx.nf();
        if r >= 0.0 {
            return Err(Error::Domain(format!(
                "outer tail rate {} is not integrable (needs < -{})",
                self.outer.rate,
                self.ctx.n()
            )));
        }
        let c = self.outer.amplitude * self.ctx.sphere_fraction();
        Ok(through_window + c * self.ctx.pow((hi + 1) as f64 * r) / (1.0 - self.ctx.pow(r)))
    }
}

/// A radial variable exponent: explicit values on a window, `u_inner` on
/// every shell below it (and at the origin), `u_infinity` above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExponentJson", into = "ExponentJson")]
pub struct ExponentFunction {
    ctx: PadicContext,
    lo: i32,
    values: Vec<f64>,
    inner: f64,
    infinity: f64,
}

/// On-disk form of an [`ExponentFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctx: Option<PadicContext>,
    pub window: [i32; 2],
    #[serde(with = "crate::real::vec")]
    pub values: Vec<f64>,
    #[serde(with = "crate::real")]
    pub u_inner: f64,
    #[serde(with = "crate::real")]
    pub u_infinity: f64,
}

impl ExponentJson {
    pub fn into_exponent(self, fallback: Option<PadicContext>) -> Result<ExponentFunction> {
        let ctx = self
            .ctx
            .or(fallback)
            .ok_or_else(|| Error::Invalid("exponent has no `ctx` and none was supplied".into()))?;
        let [lo, hi] = self.window;
        if hi < lo || (hi - lo + 1) as usize != self.values.len() {
            return Err(Error::Invalid(format!(
                "window [{lo}, {hi}] does not match {} values",
                self.values.len()
            )));
        }
        ExponentFunction::new(ctx, lo, self.values, self.u_inner, self.u_infinity)
    }
}

impl TryFrom<ExponentJson> for ExponentFunction {
    type Error = Error;
    fn try_from(raw: ExponentJson) -> Result<Self> {
        raw.into_exponent(None)
    }
}

impl From<ExponentFunction> for ExponentJson {
    fn from(u: ExponentFunction) -> Self {
        ExponentJson {
            ctx: Some(u.ctx),
            window: [u.lo(), u.hi()],
            values: u.values,
            u_inner: u.inner,
            u_infinity: u.infinity,
        }
    }
}

/// `u_-`, `u_+` and `u(∞)` of an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSummary {
    pub u_minus: f64,
    pub u_plus: f64,
    pub u_infinity: f64,
    pub admissible_for_conjugation: bool,
}

impl ExponentFunction {
    /// Values must be finite and at least 1.
    pub fn new(ctx: PadicContext, lo: i32, values: Vec<f64>, inner: f64, infinity: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("an exponent needs at least one window shell".into()));
        }
        check_window(&ctx, lo as i64, lo as i64 + values.len() as i64 - 1)?;
        for (i, &u) in values.iter().chain([inner, infinity].iter()).enumerate() {
            if !u.is_finite() || u < 1.0 {
                return Err(Error::Invalid(format!("exponent piece #{i} = {u} is not in [1, ∞)")));
            }
        }
        Ok(Self { ctx, lo, values, inner, infinity })
    }

    pub fn constant(ctx: PadicContext, u: f64) -> Result<Self> {
        Self::new(ctx, 0, vec![u], u, u)
    }

    pub fn ctx(&self) -> &PadicContext {
        &self.ctx
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.values.len() as i32 - 1
    }

    pub fn window(&self) -> (i32, i32) {
        (self.lo(), self.hi())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn u_inner(&self) -> f64 {
        self.inner
    }

    pub fn u_infinity(&self) -> f64 {
        self.infinity
    }

    pub fn at_shell(&self, k: i64) -> f64 {
        if k < self.lo as i64 {
            self.inner
        } else if k > self.hi() as i64 {
            self.infinity
        } else {
            self.values[(k - self.lo as i64) as usize]
        }
    }

    /// Value at a point given by its shell; the origin takes `u_inner`.
    pub fn at(&self, shell: Option<i64>) -> f64 {
        shell.map_or(self.inner, |k| self.at_shell(k))
    }

    fn pieces(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().chain([self.inner, self.infinity])
    }

    pub fn u_minus(&self) -> f64 {
        self.pieces().fold(f64::INFINITY, f64::min)
    }

    pub fn u_plus(&self) -> f64 {
        self.pieces().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.u_minus() == self.u_plus()
    }

    pub fn summary(&self) -> ExponentSummary {
        let u_minus = self.u_minus();
        ExponentSummary {
            u_minus,
            u_plus: self.u_plus(),
            u_infinity: self.infinity,
            admissible_for_conjugation: u_minus > 1.0,
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.ctx, self.lo, self.values.iter().map(|&u| f(u)).collect(), f(self.inner), f(self.infinity))
    }

    /// Pointwise conjugate `u' = u/(u-1)`.
    pub fn conjugate(&self) -> Result<Self> {
        if self.u_minus() <= 1.0 {
            return Err(Error::Domain("conjugate exponent is unbounded where u = 1".into()));
        }
        self.map(|u| u / (u - 1.0))
    }

    /// `u/s`, used by the power rule for Luxemburg norms.
    pub fn divided_by(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Invalid(format!("divisor {s} must be positive")));
        }
        self.map(|u| u / s)
    }

    /// The Sobolev exponent `v` with `1/v = 1/u - α/n`, shell by shell.
    pub fn sobolev_shift(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::Hypothesis(format!("α = {alpha} must be nonnegative")));
        }
        let n = self.ctx.nf();
        let shift = |u: f64, place: String| -> Result<f64> {
            let inv = 1.0 / u - alpha / n;
            if inv <= 0.0 {
                Err(Error::Hypothesis(format!(
                    "α = {alpha} ≥ n/u = {} on {place}; the shifted exponent is not finite",
                    n / u
                )))
            } else {
                Ok(1.0 / inv)
            }
        };
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &u)| shift(u, format!("shell {}", self.lo + i as i32)))
            .collect::<Result<Vec<_>>>()?;
        let inner = shift(self.inner, "the inner region".into())?;
        let infinity = shift(self.infinity, "the outer region".into())?;
        Self::new(self.ctx, self.lo, values, inner, infinity)
    }

    /// `u(x, k)`: `u(x)` for `k < 0`, `u(∞)` for `k ≥ 0`.
    pub fn exponent_at(&self, x_shell: Option<i64>, k: i64) -> f64 {
        if k < 0 {
            self.at(x_shell)
        } else {
            self.infinity
        }
    }
}

/// Which regularity condition [`check_regularity`] probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegularityMode {
    /// `γ(u^-(B_γ(x)) - u^+(B_γ(x))) ≤ C`.
    W0,
    /// `|u(x) - u(y)| log_p(p + min(|x|_p, |y|_p)) ≤ C`.
    WInfinity,
    /// `|u(x) - u(y)| ≤ L |x - y|_p`.
    Lipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Satisfied,
    Violated,
}

/// The extremal pair found by a regularity scan. For `W0` the pair is
/// `(x-shell, γ)`; otherwise it is the two shells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub first: i64,
    pub second: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub mode: RegularityMode,
    pub verdict: Verdict,
    /// Best constant found (`C` or `L`); never negative.
    pub constant: f64,
    pub witness: Option<Witness>,
    /// True when the scan covered every distinct configuration of the
    /// window-plus-tails structure within the budget.
    pub exhaustive: bool,
    pub evaluated: usize,
}

/// [`check_regularity_against`] without a target bound: the verdict is
/// always `Satisfied` with the best constant over the representable structure.
pub fn check_regularity(u: &ExponentFunction, mode: RegularityMode, witness_budget: usize) -> RegularityReport {
    check_regularity_against(u, mode, witness_budget, None)
}

/// Bounded search for the extremal constant of `mode`.
///
/// The exponent is constant below and above its window, so the shells
/// `lo-1 ..= hi+1` represent every distinct configuration: for each mode the
/// extremum over a tail region is attained at the tail shell adjacent to the
/// window. When `bound` is given, any configuration exceeding it makes the
/// verdict `Violated` and is returned as the witness.
pub fn check_regularity_against(
    u: &ExponentFunction,
    mode: RegularityMode,
    witness_budget: usize,
    bound: Option<f64>,
) -> RegularityReport {
    let ctx = *u.ctx();
    let shells: Vec<i64> = ((u.lo() as i64 - 1)..=(u.hi() as i64 + 1)).collect();
    let mut best: Option<Witness> = None;
    let mut evaluated = 0usize;
    let mut exhaustive = true;
    let ln_p = ctx.pf().ln();

    let mut consider = |first: i64, second: i64, value: f64, evaluated: &mut usize| -> bool {
        if *evaluated >= witness_budget.max(1) {
            return false;
        }
        *evaluated += 1;
        if best.map_or(true, |b| value > b.value) {
            best = Some(Witness { first, second, value });
        }
        true
    };

    'scan: for (i, &a) in shells.iter().enumerate() {
        match mode {
            RegularityMode::W0 => {
                // Balls with γ below the shell of x sit inside a sphere, where u
                // is constant; otherwise B_γ(x) = B_γ(0).
                let below = shells.iter().filter(|&&s| s <= a).map(|&s| u.at_shell(s));
                let (lo_v, hi_v) = below.fold((f64::INFINITY, f64::NEG_INFINITY), |(m, x), v| (m.min(v), x.max(v)));
                if !consider(a, a, a as f64 * (lo_v - hi_v), &mut evaluated) {
                    exhaustive = false;
                    break 'scan;
                }
            }
            RegularityMode::WInfinity | RegularityMode::Lipschitz => {
                for &b in &shells[i + 1..] {
                    let diff = (u.at_shell(a) - u.at_shell(b)).abs();
                    let value = if mode == RegularityMode::WInfinity {
                        let m = a.min(b) as f64;
                        diff * (ctx.pf() + ctx.pow(m)).ln() / ln_p
                    } else {
                        diff / ctx.pow(a.max(b) as f64)
                    };
                    if !consider(a, b, value, &mut evaluated) {
                        exhaustive = false;
                        break 'scan;
                    }
                }
            }
        }
    }

    let constant = best.map_or(0.0, |w| w.value.max(0.0));
    let verdict = match bound {
        Some(c) if constant > c => Verdict::Violated,
        _ => Verdict::Satisfied,
    };
    RegularityReport { mode, verdict, constant, witness: best, exhaustive, evaluated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx(p: u32, n: u32) -> PadicContext {
        PadicContext::new(p, n).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let c = ctx(2, 1);
        let ball = RadialStepFunction::ball_indicator(c, 0).unwrap();
        assert_eq!(ball.evaluate(-3), 1.0);
        assert_eq!(ball.evaluate(1), 0.0);
        assert_eq!(ball.value_at_zero(), 1.0);
        let f = RadialStepFunction::new(c, 0, vec![1.0], PowerTail::ZERO, PowerTail::new(1.0, -1.0)).unwrap();
        assert_eq!(f.evaluate(4), 2f64.powi(-4));
    }

    #[test]
    fn combine_examples() {
        let c = ctx(2, 1);
        let s0 = RadialStepFunction::shell_indicator(c, 0).unwrap();
        let s1 = RadialStepFunction::shell_indicator(c, 1).unwrap();
        let sum = s0.combine(&s1, CombineOp::Add).unwrap();
        assert_eq!(sum.window(), (0, 1));
        assert_eq!(sum.coeffs(), &[1.0, 1.0]);
        assert!(sum.inner_tail().is_zero() && sum.outer_tail().is_zero());

        let b0 = RadialStepFunction::ball_indicator(c, 0).unwrap();
        let scaled = b0.combine(&b0, CombineOp::Scale(-2.0)).unwrap();
        assert_eq!(scaled.coeffs(), &[-2.0]);
        assert_eq!(scaled.inner_tail().amplitude, -2.0);

        assert!(b0.mul(&s1).unwrap().is_zero());
    }

    #[test]
    fn incompatible_tails_are_reported() {
        let c = ctx(2, 1);
        let f = RadialStepFunction::new(c, 0, vec![1.0], PowerTail::ZERO, PowerTail::new(1.0, -1.0)).unwrap();
        let g = RadialStepFunction::new(c, 0, vec![1.0], PowerTail::ZERO, PowerTail::new(1.0, -2.0)).unwrap();
        match f.add(&g) {
            Err(Error::IncompatibleTails { side: "outer", .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ball_mean_examples() {
        let c = ctx(2, 1);
        let b0 = RadialStepFunction::ball_indicator(c, 0).unwrap();
        assert_relative_eq!(b0.ball_mean(2).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(b0.ball_mean(0).unwrap(), 1.0, epsilon = 1e-15);
        let s1 = RadialStepFunction::shell_indicator(c, 1).unwrap();
        // |S_1| / |B_1|
        assert_relative_eq!(s1.ball_mean(1).unwrap(), 0.5, epsilon = 1e-15);
        let one = RadialStepFunction::constant(c, 1.0);
        for g in -20..20 {
            assert_relative_eq!(one.ball_mean(g).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_integrable_inner_tail_is_a_domain_error() {
        let c = ctx(2, 1);
        let f = RadialStepFunction::new(c, 0, vec![1.0], PowerTail::new(1.0, -1.5), PowerTail::ZERO).unwrap();
        assert!(matches!(f.ball_mean(0), Err(Error::Domain(_))));
    }

    #[test]
    fn integral_sums_both_tails() {
        let c = ctx(3, 1);
        // |x|^{-1/2} near the origin, |x|^{-3} far out: brute-force partial sums
        let f = RadialStepFunction::new(c, -1, vec![2.0, 1.0, 0.5], PowerTail::new(1.0, -0.5), PowerTail::new(4.0, -3.0))
            .unwrap();
        let brute: f64 = (-400..=400).map(|k| f.evaluate(k) * c.sphere_measure_f64(k)).sum();
        assert_relative_eq!(f.integral().unwrap(), brute, max_relative = 1e-12);
    }

    #[test]
    fn conjugate_examples() {
        let c = ctx(2, 1);
        let u = ExponentFunction::constant(c, 4.0 / 3.0).unwrap().conjugate().unwrap();
        assert_relative_eq!(u.u_plus(), 4.0, epsilon = 1e-12);
        let u = ExponentFunction::constant(c, 2.0).unwrap().conjugate().unwrap();
        assert_eq!(u.u_plus(), 2.0);
        let u = ExponentFunction::new(c, -1, vec![1.5; 3], 1.5, 3.0).unwrap().conjugate().unwrap();
        assert_eq!(u.values(), &[3.0; 3]);
        assert_eq!(u.u_infinity(), 1.5);
        assert!(ExponentFunction::constant(c, 1.0).unwrap().conjugate().is_err());
    }

    #[test]
    fn sobolev_shift_examples() {
        let v = ExponentFunction::constant(ctx(2, 2), 2.0).unwrap().sobolev_shift(0.5).unwrap();
        assert_relative_eq!(v.u_plus(), 4.0, epsilon = 1e-12);
        let u = ExponentFunction::new(ctx(2, 1), 0, vec![1.5], 1.5, 3.0).unwrap();
        let v = u.sobolev_shift(0.25).unwrap();
        // independent evaluation of 1/(1/u - α/n)
        assert_relative_eq!(v.values()[0], 1.0 / (1.0 / 1.5 - 0.25), epsilon = 1e-12);
        assert_relative_eq!(v.values()[0], 2.4, epsilon = 1e-12);
        assert_relative_eq!(v.u_infinity(), 12.0, epsilon = 1e-12);
        let err = ExponentFunction::constant(ctx(2, 1), 2.0).unwrap().sobolev_shift(0.5);
        assert!(matches!(err, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn exponent_at_examples() {
        let u = ExponentFunction::new(ctx(2, 1), -2, vec![1.5; 5], 1.5, 3.0).unwrap();
        assert_eq!(u.exponent_at(Some(0), -1), 1.5);
        for x in [-10, 0, 7] {
            assert_eq!(u.exponent_at(Some(x), 0), 3.0);
        }
        let c = ExponentFunction::constant(ctx(2, 1), 2.0).unwrap();
        for (x, k) in [(-4, -3), (0, 0), (9, 5)] {
            assert_eq!(c.exponent_at(Some(x), k), 2.0);
        }
    }

    #[test]
    fn constant_exponent_is_regular_with_zero_constant() {
        let u = ExponentFunction::constant(ctx(3, 1), 2.5).unwrap();
        for mode in [RegularityMode::W0, RegularityMode::WInfinity, RegularityMode::Lipschitz] {
            let r = check_regularity(&u, mode, 1000);
            assert_eq!(r.verdict, Verdict::Satisfied);
            assert_eq!(r.constant, 0.0);
            assert!(r.exhaustive);
        }
    }

    #[test]
    fn alternating_exponent_breaks_any_winfty_bound() {
        // 1.5/2.5 alternating on [0, J]; the log weight grows with J
        let c = ctx(2, 1);
        let bound = 5.0;
        let mut constants = Vec::new();
        let mut violated = None;
        for j in [2, 4, 8, 16, 32] {
            let values = (0..=j).map(|k| if k % 2 == 0 { 1.5 } else { 2.5 }).collect();
            let u = ExponentFunction::new(c, 0, values, 1.5, if j % 2 == 0 { 2.5 } else { 1.5 }).unwrap();
            let r = check_regularity_against(&u, RegularityMode::WInfinity, 100_000, Some(bound));
            constants.push(r.constant);
            if r.verdict == Verdict::Violated && violated.is_none() {
                violated = r.witness;
            }
        }
        assert!(constants.windows(2).all(|w| w[1] > w[0]), "{constants:?}");
        let w = violated.expect("some window must exceed the bound");
        assert!(w.value > bound);
        assert_ne!(w.first, w.second);
    }

    #[test]
    fn single_jump_lipschitz_constant() {
        // 1.5 below shell 0, 2.0 from shell 0 on: jump 0.5 across |x - y| = 1
        let u = ExponentFunction::new(ctx(2, 1), 0, vec![2.0], 1.5, 2.0).unwrap();
        let r = check_regularity(&u, RegularityMode::Lipschitz, 1000);
        assert_relative_eq!(r.constant, 0.5, epsilon = 1e-15);
        let w = r.witness.unwrap();
        assert_eq!(w.first.max(w.second), 0);
    }

    #[test]
    fn budget_truncates_scan() {
        let u = ExponentFunction::new(ctx(2, 1), -5, vec![1.5, 2.0, 2.5, 3.0, 2.0, 1.7], 2.0, 2.2).unwrap();
        let r = check_regularity(&u, RegularityMode::WInfinity, 3);
        assert!(!r.exhaustive);
        assert_eq!(r.evaluated, 3);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let c = ctx(5, 2);
        let f = RadialStepFunction::new(c, -2, vec![0.1, -1.0 / 3.0, 7e-300], PowerTail::new(0.3, 0.7), PowerTail::new(-2.5, -3.1))
            .unwrap()
            .with_value_at_zero(0.25);
        let s = serde_json::to_string(&f).unwrap();
        let back: RadialStepFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let raw = r#"{"window":[0,1],"coeffs":["0.5", 2],"inner_tail":{"A":"1","e":0},"outer_tail":{"A":0,"e":0}}"#;
        let parsed: RadialFunctionJson = serde_json::from_str(raw).unwrap();
        let g = parsed.into_function(Some(c)).unwrap();
        assert_eq!(g.coeffs(), &[0.5, 2.0]);
        let u = ExponentFunction::new(c, 1, vec![1.25, 2.0 / 3.0 + 1.0], 1.1, 3.3).unwrap();
        let back: ExponentFunction = serde_json::from_str(&serde_json::to_string(&u).unwrap()).unwrap();
        assert_eq!(back, u);
    }
}
