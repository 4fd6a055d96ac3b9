//! Fractional Hardy operator, its adjoint, commutators and the centered
//! Hardy-Littlewood maximal operator on radial step functions.
//!
//! Each operator is first written as an exact evaluator `k ↦ (Tf)(k)`. The
//! output function stores that evaluator on the input window widened by one
//! shell per side, and its tails are fitted as single power laws whose rate
//! is taken from a short list of candidates and verified on further shells.
//! An output that does not follow one power law is reported as
//! [`Error::Unrepresentable`] rather than approximated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::PadicContext;
use crate::radial::{PowerTail, RadialStepFunction};

/// Shells checked beyond the fitted boundary shell.
const TAIL_CHECKS: i64 = 4;
/// Extra shells the fitter may move outwards before giving up.
const TAIL_WIDEN_CAP: i64 = 16;
const TAIL_REL_TOL: f64 = 1e-11;
const MAX_SUP_SCAN: i64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Hardy,
    HardyAdjoint,
    Commutator,
    CommutatorAdjoint,
    Maximal,
}

impl OperatorKind {
    pub fn is_commutator(self) -> bool {
        matches!(self, OperatorKind::Commutator | OperatorKind::CommutatorAdjoint)
    }

    pub fn is_adjoint(self) -> bool {
        matches!(self, OperatorKind::HardyAdjoint | OperatorKind::CommutatorAdjoint)
    }
}

/// Which operator to apply, with its order `α` and symbol `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    #[serde(default, with = "crate::real")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<RadialStepFunction>,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, alpha: f64, symbol: Option<RadialStepFunction>) -> Result<Self> {
        let spec = OperatorSpec { kind, alpha, symbol };
        spec.validate()?;
        Ok(spec)
    }

    pub fn hardy(alpha: f64) -> Self {
        OperatorSpec { kind: OperatorKind::Hardy, alpha, symbol: None }
    }

    pub fn hardy_adjoint(alpha: f64) -> Self {
        OperatorSpec { kind: OperatorKind::HardyAdjoint, alpha, symbol: None }
    }

    pub fn commutator(alpha: f64, symbol: RadialStepFunction, adjoint: bool) -> Self {
        let kind = if adjoint { OperatorKind::CommutatorAdjoint } else { OperatorKind::Commutator };
        OperatorSpec { kind, alpha, symbol: Some(symbol) }
    }

    pub fn maximal() -> Self {
        OperatorSpec { kind: OperatorKind::Maximal, alpha: 0.0, symbol: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_commutator() != self.symbol.is_some() {
            return Err(Error::Invalid(format!(
                "a symbol is required for commutators and only for them (kind {:?})",
                self.kind
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("α = {} must be finite and nonnegative", self.alpha)));
        }
        Ok(())
    }

    pub fn apply(&self, f: &RadialStepFunction) -> Result<RadialStepFunction> {
        self.validate()?;
        match self.kind {
            OperatorKind::Hardy => hardy(f, self.alpha),
            OperatorKind::HardyAdjoint => hardy_adjoint(f, self.alpha),
            OperatorKind::Commutator | OperatorKind::CommutatorAdjoint => {
                let b = self.symbol.as_ref().expect("validated");
                commutator(f, b, self.alpha, self.kind.is_adjoint())
            }
            OperatorKind::Maximal => maximal(f),
        }
    }
}

fn check_alpha(ctx: &PadicContext, alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha < ctx.nf()) {
        return Err(Error::Invalid(format!("α = {alpha} must lie in [0, {})", ctx.n())));
    }
    Ok(())
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TAIL_REL_TOL * a.abs().max(b.abs())
}

/// Fits one side of the output: the first shell `k` (moving outwards from
/// `start`) from which `value` agrees with `A p^{k r}` for some candidate `r`
/// on `TAIL_CHECKS` further shells.
fn fit_tail(
    ctx: &PadicContext,
    value: &impl Fn(i64) -> Result<f64>,
    start: i64,
    outward: i64,
    rates: &[f64],
    side: &'static str,
) -> Result<(i64, PowerTail)> {
    for shift in 0..=TAIL_WIDEN_CAP {
        let b = start + outward * shift;
        let vb = value(b)?;
        let further: Vec<(i64, f64)> =
            (1..=TAIL_CHECKS).map(|j| b + outward * j).map(|k| value(k).map(|v| (k, v))).collect::<Result<_>>()?;
        if vb == 0.0 {
            if further.iter().all(|&(_, v)| v == 0.0) {
                return Ok((b, PowerTail::ZERO));
            }
            continue;
        }
        for &r in rates {
            let a = vb / ctx.pow(b as f64 * r);
            if a.is_finite() && further.iter().all(|&(k, v)| close(v, a * ctx.pow(k as f64 * r))) {
                return Ok((b, PowerTail::new(a, r)));
            }
        }
    }
    Err(Error::Unrepresentable {
        side,
        detail: format!("no single power law with rate in {rates:?} matches the output near shell {start}"),
    })
}

/// Builds the output of a shellwise evaluator on `f`'s window widened by one
/// shell on each side, with fitted tails.
fn assemble(
    f: &RadialStepFunction,
    value: impl Fn(i64) -> Result<f64>,
    inner_rates: &[f64],
    outer_rates: &[f64],
) -> Result<RadialStepFunction> {
    let ctx = *f.ctx();
    let limit = ctx.shell_limit() as i64;
    let lo = (f.lo() as i64 - 1).max(-limit);
    let hi = (f.hi() as i64 + 1).min(limit);
    let (lo, inner) = fit_tail(&ctx, &value, lo, -1, inner_rates, "inner")?;
    let (hi, outer) = fit_tail(&ctx, &value, hi, 1, outer_rates, "outer")?;
    ctx.check_shell(lo)?;
    ctx.check_shell(hi)?;
    let coeffs = (lo..=hi).map(&value).collect::<Result<Vec<_>>>()?;
    RadialStepFunction::new(ctx, lo as i32, coeffs, inner, outer)
}

/// `H_α f(x) = |x|^{α-n} ∫_{B(0,|x|)} f`, i.e. `p^{k(α-n)} ∫_{B_k} f` on `S_k`.
pub fn hardy(f: &RadialStepFunction, alpha: f64) -> Result<RadialStepFunction> {
    let ctx = *f.ctx();
    check_alpha(&ctx, alpha)?;
    if !f.inner_integrable() {
        return Err(Error::Domain(format!("inner tail rate {} is not integrable", f.inner_tail().rate)));
    }
    let n = ctx.nf();
    let value = |k: i64| Ok(ctx.pow(k as f64 * (alpha - n)) * f.ball_integral(k)?);
    let inner = [alpha + f.inner_tail().rate];
    let outer = [alpha - n, alpha + f.outer_tail().rate];
    assemble(f, value, &inner, &outer)
}

/// `H*_α f(x) = ∫_{|t| > |x|} f(t) |t|^{α-n} dt`, i.e.
/// `(1 - p^{-n}) Σ_{j>k} f_j p^{jα}` on `S_k`.
pub fn hardy_adjoint(f: &RadialStepFunction, alpha: f64) -> Result<RadialStepFunction> {
    let ctx = *f.ctx();
    check_alpha(&ctx, alpha)?;
    let frac = ctx.sphere_fraction();
    let (lo, hi) = (f.lo() as i64, f.hi() as i64);
    let outer = f.outer_tail();
    let outer_rate = outer.rate + alpha;
    if !outer.is_zero() && outer_rate >= 0.0 {
        return Err(Error::Domain(format!(
            "Σ f_j p^(jα) diverges: outer tail rate {} + α = {outer_rate} is not negative",
            outer.rate
        )));
    }
    let inner = f.inner_tail();
    let inner_rate = inner.rate + alpha;
    // Σ_{j=from}^{to} q^j with q = p^rate
    let geometric = |amp: f64, rate: f64, from: i64, to: i64| -> f64 {
        if amp == 0.0 || to < from {
            0.0
        } else if rate == 0.0 {
            amp * (to - from + 1) as f64
        } else {
            amp * (ctx.pow((to + 1) as f64 * rate) - ctx.pow(from as f64 * rate)) / (ctx.pow(rate) - 1.0)
        }
    };
    let outer_from = |from: i64| -> f64 {
        if outer.is_zero() {
            0.0
        } else {
            outer.amplitude * ctx.pow(from as f64 * outer_rate) / (1.0 - ctx.pow(outer_rate))
        }
    };
    let value = |k: i64| -> Result<f64> {
        let window: f64 = (lo.max(k + 1)..=hi).map(|j| f.evaluate(j) * ctx.pow(j as f64 * alpha)).sum();
        let below = geometric(inner.amplitude, inner_rate, k + 1, lo - 1);
        Ok(frac * (below + window + outer_from(hi.max(k) + 1)))
    };
    assemble(f, value, &[0.0, inner_rate], &[outer_rate])
}

/// `b·T f - T(b f)` for `T = H_α` or its adjoint, built with the shellwise
/// arithmetic of [`RadialStepFunction::combine`].
pub fn commutator(f: &RadialStepFunction, b: &RadialStepFunction, alpha: f64, adjoint: bool) -> Result<RadialStepFunction> {
    let op = |g: &RadialStepFunction| if adjoint { hardy_adjoint(g, alpha) } else { hardy(g, alpha) };
    b.mul(&op(f)?)?.sub(&op(&b.mul(f)?)?)
}

/// Centered maximal function `Mf(x) = sup_γ |B_γ(x)|^{-1} ∫_{B_γ(x)} |f|`.
///
/// For `x ∈ S_k` a ball `B_γ(x)` with `γ < k` lies inside `S_k`, where `|f|`
/// is constant, and for `γ ≥ k` it equals `B_γ(0)`. Hence
/// `Mf = max(|f_k|, sup_{γ ≥ k} mean_{B_γ}|f|)`.
pub fn maximal(f: &RadialStepFunction) -> Result<RadialStepFunction> {
    let ctx = *f.ctx();
    let g = f.abs();
    if !g.inner_integrable() {
        return Err(Error::Domain(format!("inner tail rate {} is not integrable", f.inner_tail().rate)));
    }
    let outer = g.outer_tail();
    if !outer.is_zero() && outer.rate > 0.0 {
        return Err(Error::Domain(format!("ball means of |f| grow without bound (outer rate {})", outer.rate)));
    }
    let hi = g.hi() as i64;
    let sup_mean_from = |k: i64| -> Result<f64> {
        let mut best = 0.0f64;
        let mut gamma = k;
        loop {
            best = best.max(g.ball_mean(gamma)?);
            if gamma >= hi {
                // every later mean is a convex combination of this one and
                // values |f_j| ≤ |A| p^{(γ+1) e} for j > γ
                if outer.is_zero() {
                    return Ok(best);
                }
                if outer.rate == 0.0 {
                    // the means converge to |A|
                    return Ok(best.max(outer.amplitude));
                }
                if outer.value_at(&ctx, gamma + 1) <= best || gamma - hi > MAX_SUP_SCAN {
                    return Ok(best);
                }
            }
            gamma += 1;
        }
    };
    let value = |k: i64| Ok(g.evaluate(k).max(sup_mean_from(k)?));
    let e_in = g.inner_tail().rate;
    let e_out = outer.rate;
    assemble(f, value, &[e_in, 0.0], &[-ctx.nf(), e_out, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(p: u32, n: u32) -> PadicContext {
        PadicContext::new(p, n).unwrap()
    }

    fn random_finite(c: PadicContext, rng: &mut ChaCha8Rng) -> RadialStepFunction {
        let lo = rng.gen_range(-6..=3);
        let len = rng.gen_range(1..=6);
        let coeffs = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        RadialStepFunction::finitely_supported(c, lo, coeffs).unwrap()
    }

    /// Direct shell sums, independent of the tail machinery.
    fn hardy_by_sum(f: &RadialStepFunction, alpha: f64, k: i64) -> f64 {
        let c = f.ctx();
        let sum: f64 = (f.lo() as i64..=k).map(|j| f.evaluate(j) * c.sphere_measure_f64(j)).sum();
        c.pow(k as f64 * (alpha - c.nf())) * sum
    }

    fn adjoint_by_sum(f: &RadialStepFunction, alpha: f64, k: i64) -> f64 {
        let c = f.ctx();
        let sum: f64 = ((k + 1)..=f.hi() as i64).map(|j| f.evaluate(j) * c.pow(j as f64 * alpha)).sum();
        c.sphere_fraction() * sum
    }

    #[test]
    fn hardy_examples() {
        let c = ctx(2, 1);
        let chi = RadialStepFunction::ball_indicator(c, 0).unwrap();
        let h = hardy(&chi, 0.0).unwrap();
        for k in -10..=0 {
            assert_relative_eq!(h.evaluate(k), 1.0, epsilon = 1e-14);
        }
        for k in 1..=10 {
            assert_relative_eq!(h.evaluate(k), 2f64.powi(-(k as i32)), epsilon = 1e-14);
        }
        assert_relative_eq!(hardy(&chi, 0.5).unwrap().evaluate(2), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn hardy_ball_indicator_closed_form() {
        for p in [2, 3, 5] {
            let c = ctx(p, 1);
            for gamma in -3..=3 {
                for alpha in [0.0, 0.3] {
                    let h = hardy(&RadialStepFunction::ball_indicator(c, gamma).unwrap(), alpha).unwrap();
                    for k in -40i64..=40 {
                        let expected = if k <= gamma as i64 {
                            c.pow(k as f64 * alpha)
                        } else {
                            c.pow(k as f64 * (alpha - 1.0) + gamma as f64)
                        };
                        assert_relative_eq!(h.evaluate(k), expected, max_relative = 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn adjoint_examples() {
        let c = ctx(2, 1);
        let s1 = RadialStepFunction::shell_indicator(c, 1).unwrap();
        let h = hardy_adjoint(&s1, 0.0).unwrap();
        for k in -10..=0 {
            assert_relative_eq!(h.evaluate(k), 0.5, epsilon = 1e-15);
        }
        for k in 1..=10 {
            assert_eq!(h.evaluate(k), 0.0);
        }
        let c2 = ctx(2, 2);
        let s1 = RadialStepFunction::shell_indicator(c2, 1).unwrap();
        assert_relative_eq!(hardy_adjoint(&s1, 1.0).unwrap().evaluate(-3), 1.5, epsilon = 1e-14);
        assert!(hardy_adjoint(&RadialStepFunction::shell_indicator(c, 1).unwrap(), 1.0).is_err());
        assert!(hardy_adjoint(&RadialStepFunction::zero(c), 0.2).unwrap().is_zero());
    }

    #[test]
    fn adjoint_rejects_divergent_outer_tail() {
        let c = ctx(3, 1);
        let f = RadialStepFunction::new(c, 0, vec![1.0], PowerTail::ZERO, PowerTail::new(1.0, -0.5)).unwrap();
        assert!(hardy_adjoint(&f, 0.3).is_ok());
        assert!(matches!(hardy_adjoint(&f, 0.6), Err(Error::Domain(_))));
    }

    #[test]
    fn closed_class_matches_shell_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..200 {
            let c = ctx([2, 3, 5][i % 3], 1 + (i % 2) as u32);
            let f = random_finite(c, &mut rng);
            let alpha = rng.gen_range(0.0..c.nf() * 0.9);
            let h = hardy(&f, alpha).unwrap();
            let a = hardy_adjoint(&f, alpha).unwrap();
            for k in -40i64..=40 {
                let hs = hardy_by_sum(&f, alpha, k);
                assert!((h.evaluate(k) - hs).abs() <= 1e-10 * hs.abs().max(1e-300), "hardy k={k}");
                let asum = adjoint_by_sum(&f, alpha, k);
                assert!((a.evaluate(k) - asum).abs() <= 1e-10 * asum.abs().max(1e-300) + 1e-14, "adjoint k={k}");
            }
        }
    }

    #[test]
    fn hardy_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = ctx(3, 1);
        for _ in 0..200 {
            let (f, g) = (random_finite(c, &mut rng), random_finite(c, &mut rng));
            let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let alpha = rng.gen_range(0.0..0.9);
            let lhs = hardy(&f.scale(a).add(&g.scale(b)).unwrap(), alpha).unwrap();
            let rhs = hardy(&f, alpha).unwrap().scale(a).add(&hardy(&g, alpha).unwrap().scale(b)).unwrap();
            for k in -30..=30 {
                assert!((lhs.evaluate(k) - rhs.evaluate(k)).abs() <= 1e-10 * (1.0 + rhs.evaluate(k).abs()));
            }
        }
    }

    #[test]
    fn commutator_examples() {
        let c = ctx(2, 1);
        let f = RadialStepFunction::ball_indicator(c, 0).unwrap();
        let b = RadialStepFunction::constant(c, 2.5);
        let z = commutator(&f, &b, 0.3, false).unwrap();
        for k in -30..=30 {
            assert!(z.evaluate(k).abs() < 1e-12);
        }
        let b = RadialStepFunction::ball_indicator(c, 0).unwrap();
        let z = commutator(&f, &b, 0.0, false).unwrap();
        for k in -10..=0 {
            assert!(z.evaluate(k).abs() < 1e-14);
        }
        for k in 1..=10 {
            assert_relative_eq!(z.evaluate(k), -(2f64.powi(-(k as i32))), epsilon = 1e-14);
        }
    }

    #[test]
    fn maximal_examples() {
        let c = ctx(2, 1);
        let chi = RadialStepFunction::ball_indicator(c, 0).unwrap();
        let m = maximal(&chi).unwrap();
        let h = hardy(&chi, 0.0).unwrap();
        for k in -20..=20 {
            assert_relative_eq!(m.evaluate(k), h.evaluate(k), epsilon = 1e-14);
        }
        let m = maximal(&RadialStepFunction::constant(c, -3.0)).unwrap();
        for k in -20..=20 {
            assert_relative_eq!(m.evaluate(k), 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn maximal_dominates_and_is_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..500 {
            let c = ctx([2, 3, 7][i % 3], 1);
            let f = random_finite(c, &mut rng);
            let m = maximal(&f).unwrap();
            for k in -30..=30 {
                assert!(m.evaluate(k) + 1e-14 >= f.evaluate(k).abs());
            }
        }
    }

    #[test]
    fn maximal_with_constant_outer_tail() {
        let c = ctx(2, 1);
        let f = RadialStepFunction::new(c, 0, vec![0.1], PowerTail::ZERO, PowerTail::constant(4.0)).unwrap();
        let m = maximal(&f).unwrap();
        for k in -5i64..=20 {
            let mut best = f.evaluate(k).abs();
            for gamma in k..400 {
                best = best.max(f.abs().ball_mean(gamma).unwrap());
            }
            assert_relative_eq!(m.evaluate(k), best, max_relative = 1e-12);
        }
    }

    #[test]
    fn maximal_of_decaying_tail_leaves_the_class() {
        // ball means mix p^{-nγ} with p^{γe}: two power laws above the window
        let c = ctx(2, 1);
        let f = RadialStepFunction::new(c, 0, vec![0.1], PowerTail::ZERO, PowerTail::new(4.0, -0.5)).unwrap();
        assert!(matches!(maximal(&f), Err(Error::Unrepresentable { side: "outer", .. })));
    }

    #[test]
    fn positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = ctx(5, 1);
        for _ in 0..100 {
            let f = random_finite(c, &mut rng).abs();
            let alpha = rng.gen_range(0.0..0.9);
            for op in [hardy(&f, alpha).unwrap(), hardy_adjoint(&f, alpha).unwrap(), maximal(&f).unwrap()] {
                for k in -30..=30 {
                    assert!(op.evaluate(k) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        let c = ctx(2, 1);
        assert!(OperatorSpec::new(OperatorKind::Commutator, 0.2, None).is_err());
        assert!(OperatorSpec::new(OperatorKind::Hardy, 0.2, Some(RadialStepFunction::zero(c))).is_err());
        assert!(OperatorSpec::hardy(1.0).apply(&RadialStepFunction::zero(c)).is_err());
        let json = r#"{"kind":"hardy_adjoint","alpha":0.25}"#;
        let spec: OperatorSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec, OperatorSpec::hardy_adjoint(0.25));
    }
}
