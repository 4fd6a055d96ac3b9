#![allow(dead_code)]

use rand::Rng;
use ultraherz::harness::random_exponent;
use ultraherz::padic::PadicContext;
use ultraherz::radial::{ExponentFunction, PowerTail, RadialStepFunction};

pub fn random_ctx(rng: &mut impl Rng) -> PadicContext {
    let p = [2, 3, 5, 7][rng.gen_range(0..4)];
    PadicContext::new(p, rng.gen_range(1..=2)).unwrap()
}

/// Random window coefficients with mixed signs and magnitudes in `[0.05, 20]`.
pub fn random_coeffs(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                let mag = (rng.gen_range(-3.0f64..3.0)).exp();
                if rng.gen_bool(0.5) { mag } else { -mag }
            }
        })
        .collect()
}

/// A random function whose modular against `u` is finite: tails decay fast
/// enough at both ends for the exponents `u` takes there.
pub fn random_function(u: &ExponentFunction, rng: &mut impl Rng) -> RadialStepFunction {
    let ctx = *u.ctx();
    let n = ctx.nf();
    let lo = rng.gen_range(-6..=2);
    let len = rng.gen_range(1..=8);
    let coeffs = random_coeffs(rng, len);
    let inner = if rng.gen_bool(0.5) {
        PowerTail::ZERO
    } else {
        // Σ_k |A|^u p^{k(eu + n)} over k → -∞ needs e > -n/u
        let e = rng.gen_range(-n / u.u_inner() + 0.1..1.0);
        PowerTail::new(rng.gen_range(-2.0..2.0), e)
    };
    let outer = if rng.gen_bool(0.5) {
        PowerTail::ZERO
    } else {
        let e = rng.gen_range(-3.0..-n / u.u_infinity() - 0.1);
        PowerTail::new(rng.gen_range(-2.0..2.0), e)
    };
    RadialStepFunction::new(ctx, lo, coeffs, inner, outer).unwrap()
}

/// A random (context, exponent, function) triple.
pub fn random_pair(rng: &mut impl Rng) -> (ExponentFunction, RadialStepFunction) {
    let u = random_exponent(random_ctx(rng), rng);
    let f = random_function(&u, rng);
    (u, f)
}

/// Finitely supported, window inside `[-half, half]`.
pub fn random_compact(ctx: PadicContext, half: i32, rng: &mut impl Rng) -> RadialStepFunction {
    let lo = rng.gen_range(-half..=half);
    let len = rng.gen_range(1..=(half - lo + 1) as usize);
    RadialStepFunction::finitely_supported(ctx, lo, random_coeffs(rng, len)).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
