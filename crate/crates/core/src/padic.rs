//! Valuations, norms, Haar measures and Haar sampling on `Q_p^n`.
//!
//! Throughout the crate the absolute value is the standard one,
//! `|p^γ s/t|_p = p^{-γ}`, so that the strong triangle inequality holds and
//! the unit ball `B_0 = Z_p^n` has Haar measure one. A point `x` lies on the
//! shell (sphere) `S_k` when `|x|_p = p^k`; with this convention the shell
//! index of a coordinate is the negated valuation.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest |shell index| accepted where exact measures are requested.
pub const DEFAULT_SHELL_LIMIT: i32 = 64;

/// Digits drawn after the leading digit when sampling, unless overridden.
pub const DEFAULT_RESOLUTION: usize = 24;

/// Leading zero digits after which a sampled coordinate is declared zero.
/// The probability of reaching it is `p^{-512}`.
const ZERO_DIGIT_CAP: usize = 512;

pub fn is_prime(p: u32) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= p as u64 {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// The prime `p` and dimension `n` fixing `Q_p^n` and its Haar measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawContext", into = "RawContext")]
pub struct PadicContext {
    p: u32,
    n: u32,
    shell_limit: i32,
}

#[derive(Serialize, Deserialize)]
struct RawContext {
    p: u32,
    n: u32,
}

impl TryFrom<RawContext> for PadicContext {
    type Error = Error;
    fn try_from(raw: RawContext) -> Result<Self> {
        PadicContext::new(raw.p, raw.n)
    }
}

impl From<PadicContext> for RawContext {
    fn from(ctx: PadicContext) -> Self {
        RawContext { p: ctx.p, n: ctx.n }
    }
}

impl PadicContext {
    pub fn new(p: u32, n: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self { p, n, shell_limit: DEFAULT_SHELL_LIMIT })
    }

    /// Replaces the shell window `[-limit, limit]` enforced at the API boundary.
    pub fn with_shell_limit(mut self, limit: i32) -> Self {
        self.shell_limit = limit.max(1);
        self
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn shell_limit(&self) -> i32 {
        self.shell_limit
    }

    pub fn pf(&self) -> f64 {
        self.p as f64
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `p^x` in double precision.
    pub fn pow(&self, x: f64) -> f64 {
        if x.fract() == 0.0 && x.abs() < i32::MAX as f64 {
            self.pf().powi(x as i32)
        } else {
            self.pf().powf(x)
        }
    }

    /// `1 - p^{-n}`, the Haar measure of the unit sphere `S_0`.
    pub fn sphere_fraction(&self) -> f64 {
        1.0 - self.pf().powi(-(self.n as i32))
    }

    pub fn check_shell(&self, index: i64) -> Result<i32> {
        if index.abs() > self.shell_limit as i64 {
            return Err(Error::ShellOutOfRange { index, limit: self.shell_limit });
        }
        Ok(index as i32)
    }

    pub fn check_same(&self, other: &PadicContext) -> Result<()> {
        if self.p != other.p || self.n != other.n {
            return Err(Error::ContextMismatch { p1: self.p, n1: self.n, p2: other.p, n2: other.n });
        }
        Ok(())
    }

    fn p_power(&self, e: i64) -> BigRational {
        let base = BigInt::from(self.p);
        let mag = num_traits::pow(base, e.unsigned_abs() as usize);
        if e >= 0 {
            BigRational::from_integer(mag)
        } else {
            BigRational::new(BigInt::one(), mag)
        }
    }

    /// Exact `|B_γ| = p^{nγ}`.
    pub fn ball_measure(&self, gamma: i64) -> Result<BigRational> {
        let g = self.check_shell(gamma)?;
        Ok(self.p_power(self.n as i64 * g as i64))
    }

    /// Exact `|S_γ| = p^{nγ}(1 - p^{-n})`.
    pub fn sphere_measure(&self, gamma: i64) -> Result<BigRational> {
        let g = self.check_shell(gamma)? as i64;
        let n = self.n as i64;
        Ok(self.p_power(n * g) - self.p_power(n * (g - 1)))
    }

    /// `p^{nγ}` in floating point, without the window check.
    pub fn ball_measure_f64(&self, gamma: i64) -> f64 {
        self.pow((self.n as i64 * gamma) as f64)
    }

    /// `p^{nγ}(1 - p^{-n})` in floating point, without the window check.
    pub fn sphere_measure_f64(&self, gamma: i64) -> f64 {
        self.ball_measure_f64(gamma) * self.sphere_fraction()
    }
}

/// A p-adic valuation; `Infinite` is the valuation of zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => f.write_str("+inf"),
        }
    }
}

fn strip_prime(mut x: i128, p: i128) -> (i64, i128) {
    let mut count = 0;
    while x % p == 0 {
        x /= p;
        count += 1;
    }
    (count, x)
}

/// Valuation `γ` of `numerator/denominator = p^γ s/t` with `p ∤ s`, `p ∤ t`.
pub fn padic_valuation(numerator: i64, denominator: i64, ctx: &PadicContext) -> Result<Valuation> {
    if denominator == 0 {
        return Err(Error::ZeroDenominator);
    }
    if numerator == 0 {
        return Ok(Valuation::Infinite);
    }
    let p = ctx.p as i128;
    let (a, _) = strip_prime(numerator as i128, p);
    let (b, _) = strip_prime(denominator as i128, p);
    Ok(Valuation::Finite(a - b))
}

/// `|numerator/denominator|_p` as an exact rational.
pub fn rational_norm(numerator: i64, denominator: i64, ctx: &PadicContext) -> Result<BigRational> {
    Ok(match padic_valuation(numerator, denominator, ctx)? {
        Valuation::Infinite => BigRational::zero(),
        Valuation::Finite(v) => ctx.p_power(-v),
    })
}

/// One coordinate `p^γ (d_0 + d_1 p + d_2 p^2 + ...)` truncated after its
/// stored digits; `valuation == None` encodes zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coordinate {
    pub valuation: Option<i64>,
    pub digits: Vec<u8>,
}

impl Coordinate {
    pub fn zero() -> Self {
        Self { valuation: None, digits: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.valuation.is_none()
    }

    /// Shell index `-γ`, or `None` for zero.
    pub fn shell(&self) -> Option<i64> {
        self.valuation.map(|v| -v)
    }

    /// Digits of the rational `num/den` to `digits` places (Hensel expansion).
    pub fn from_rational(num: i64, den: i64, digits: usize, ctx: &PadicContext) -> Result<Self> {
        let gamma = match padic_valuation(num, den, ctx)? {
            Valuation::Infinite => return Ok(Self::zero()),
            Valuation::Finite(g) => g,
        };
        let p = ctx.p as i128;
        let (_, mut s) = strip_prime(num as i128, p);
        let (_, mut t) = strip_prime(den as i128, p);
        if t < 0 {
            s = -s;
            t = -t;
        }
        let t_inv = mod_inverse(t.rem_euclid(p), p);
        let mut out = Vec::with_capacity(digits);
        for _ in 0..digits {
            let d = (s.rem_euclid(p) * t_inv).rem_euclid(p);
            out.push(d as u8);
            s = (s - d * t) / p;
        }
        Ok(Self { valuation: Some(gamma), digits: out })
    }

    /// Truncated sum. The result is exact modulo `p^m` where `m` is the
    /// smaller absolute precision of the two operands; a sum that vanishes to
    /// that precision is reported as zero.
    pub fn add(&self, other: &Coordinate, p: u32) -> Coordinate {
        let (Some(v1), Some(v2)) = (self.valuation, other.valuation) else {
            return if self.is_zero() { other.clone() } else { self.clone() };
        };
        let base = v1.min(v2);
        let prec = (v1 + self.digits.len() as i64).min(v2 + other.digits.len() as i64);
        let len = (prec - base).max(0) as usize;
        let mut acc = vec![0u32; len];
        for (v, digits) in [(v1, &self.digits), (v2, &other.digits)] {
            for (i, d) in digits.iter().enumerate() {
                let pos = (v - base) as usize + i;
                if pos < len {
                    acc[pos] += *d as u32;
                }
            }
        }
        let mut carry = 0u32;
        for slot in acc.iter_mut() {
            let s = *slot + carry;
            *slot = s % p;
            carry = s / p;
        }
        match acc.iter().position(|&d| d != 0) {
            None => Coordinate::zero(),
            Some(first) => Coordinate {
                valuation: Some(base + first as i64),
                digits: acc[first..].iter().map(|&d| d as u8).collect(),
            },
        }
    }
}

fn mod_inverse(a: i128, p: i128) -> i128 {
    // p is prime, so a^{p-2} is the inverse.
    let mut result = 1i128;
    let mut base = a.rem_euclid(p);
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % p;
        }
        base = base * base % p;
        e >>= 1;
    }
    result
}

/// A point of `Q_p^n` given by truncated digit expansions of its coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PadicPoint {
    ctx: PadicContext,
    coords: Vec<Coordinate>,
}

impl PadicPoint {
    pub fn new(ctx: PadicContext, coords: Vec<Coordinate>) -> Result<Self> {
        if coords.len() != ctx.n as usize {
            return Err(Error::Invalid(format!(
                "point has {} coordinates, context dimension is {}",
                coords.len(),
                ctx.n
            )));
        }
        for c in &coords {
            if c.valuation.is_some() && c.digits.first().copied().unwrap_or(0) == 0 {
                return Err(Error::Invalid("leading digit of a nonzero coordinate is zero".into()));
            }
            if c.digits.iter().any(|&d| d as u32 >= ctx.p) {
                return Err(Error::Invalid(format!("digit out of range for p = {}", ctx.p)));
            }
        }
        Ok(Self { ctx, coords })
    }

    /// Builds a point from rational coordinates, each expanded to `digits` places.
    pub fn from_rationals(ctx: PadicContext, coords: &[(i64, i64)], digits: usize) -> Result<Self> {
        let coords = coords
            .iter()
            .map(|&(a, b)| Coordinate::from_rational(a, b, digits, &ctx))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ctx, coords)
    }

    pub fn context(&self) -> &PadicContext {
        &self.ctx
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Coordinate::is_zero)
    }

    /// Shell index `k` with `|x|_p = p^k`; `None` for the origin.
    pub fn shell(&self) -> Option<i64> {
        self.coords.iter().filter_map(Coordinate::shell).max()
    }

    /// `|x|_p = max_i p^{-γ_i}` as an exact rational (zero for the origin).
    pub fn vector_norm(&self) -> BigRational {
        match self.shell() {
            None => BigRational::zero(),
            Some(k) => self.ctx.p_power(k),
        }
    }

    pub fn norm_f64(&self) -> f64 {
        match self.shell() {
            None => 0.0,
            Some(k) => self.ctx.pow(k as f64),
        }
    }

    /// Coordinatewise truncated sum.
    pub fn add(&self, other: &PadicPoint) -> Result<PadicPoint> {
        self.ctx.check_same(&other.ctx)?;
        let coords = self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.add(b, self.ctx.p))
            .collect();
        Ok(PadicPoint { ctx: self.ctx, coords })
    }

    /// Multiplies every coordinate by `p^a`.
    pub fn scale_by_prime_power(&self, a: i64) -> PadicPoint {
        let coords = self
            .coords
            .iter()
            .map(|c| Coordinate { valuation: c.valuation.map(|v| v + a), digits: c.digits.clone() })
            .collect();
        PadicPoint { ctx: self.ctx, coords }
    }
}

/// A ball `B_γ(0)` or sphere `S_γ(0)` to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Ball(i64),
    Sphere(i64),
}

impl Region {
    pub fn measure_f64(&self, ctx: &PadicContext) -> f64 {
        match *self {
            Region::Ball(g) => ctx.ball_measure_f64(g),
            Region::Sphere(g) => ctx.sphere_measure_f64(g),
        }
    }
}

fn sample_coordinate<R: Rng + ?Sized>(
    gamma: i64,
    resolution: usize,
    ctx: &PadicContext,
    rng: &mut R,
) -> Coordinate {
    let p = ctx.p;
    let mut zeros = 0usize;
    let lead = loop {
        let d = rng.gen_range(0..p);
        if d != 0 {
            break d;
        }
        zeros += 1;
        if zeros >= ZERO_DIGIT_CAP {
            return Coordinate::zero();
        }
    };
    let mut digits = Vec::with_capacity(resolution + 1);
    digits.push(lead as u8);
    digits.extend((0..resolution).map(|_| rng.gen_range(0..p) as u8));
    Coordinate { valuation: Some(-gamma + zeros as i64), digits }
}

/// Draws a point from normalized Haar measure on `region`, keeping the
/// leading digit plus `resolution` further digits of each coordinate.
///
/// Each coordinate of `B_γ` is `p^{-γ}·z` with `z` Haar-uniform on `Z_p`, so
/// its digits are i.i.d. uniform; spheres are sampled by rejection from the
/// ball (acceptance probability `1 - p^{-n} ≥ 1/2`).
pub fn sample_uniform<R: Rng + ?Sized>(
    region: Region,
    resolution: usize,
    ctx: &PadicContext,
    rng: &mut R,
) -> PadicPoint {
    let gamma = match region {
        Region::Ball(g) | Region::Sphere(g) => g,
    };
    loop {
        let coords: Vec<Coordinate> =
            (0..ctx.n).map(|_| sample_coordinate(gamma, resolution, ctx, rng)).collect();
        let point = PadicPoint { ctx: *ctx, coords };
        match region {
            Region::Ball(_) => return point,
            Region::Sphere(g) if point.shell() == Some(g) => return point,
            Region::Sphere(_) => continue,
        }
    }
}

/// [`sample_uniform`] with a fresh generator seeded from `seed`.
pub fn sample_uniform_seeded(region: Region, resolution: usize, seed: u64, ctx: &PadicContext) -> PadicPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_uniform(region, resolution, ctx, &mut rng)
}

/// Compares two norms given as shells (`None` is the origin).
pub fn cmp_shells(a: Option<i64>, b: Option<i64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.cmp(&y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u32, n: u32) -> PadicContext {
        PadicContext::new(p, n).unwrap()
    }

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn context_rejects_composites_and_zero_dimension() {
        assert_eq!(PadicContext::new(4, 1), Err(Error::NotPrime(4)));
        assert_eq!(PadicContext::new(1, 1), Err(Error::NotPrime(1)));
        assert_eq!(PadicContext::new(5, 0), Err(Error::ZeroDimension));
        assert!(PadicContext::new(7, 3).is_ok());
    }

    #[test]
    fn context_json_shape() {
        let c = ctx(3, 2);
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"p":3,"n":2}"#);
        let back: PadicContext = serde_json::from_str(r#"{"p":3,"n":2}"#).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<PadicContext>(r#"{"p":6,"n":2}"#).is_err());
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(padic_valuation(24, 1, &ctx(2, 1)).unwrap(), Valuation::Finite(3));
        assert_eq!(padic_valuation(5, 6, &ctx(3, 1)).unwrap(), Valuation::Finite(-1));
        assert_eq!(padic_valuation(0, 1, &ctx(7, 1)).unwrap(), Valuation::Infinite);
        assert_eq!(rational_norm(0, 1, &ctx(7, 1)).unwrap(), BigRational::zero());
        assert_eq!(padic_valuation(1, 0, &ctx(2, 1)), Err(Error::ZeroDenominator));
        assert_eq!(rational_norm(24, 1, &ctx(2, 1)).unwrap(), q(1, 8));
    }

    #[test]
    fn vector_norm_examples() {
        let x = PadicPoint::from_rationals(ctx(5, 2), &[(25, 1), (1, 5)], 8).unwrap();
        assert_eq!(x.vector_norm(), q(5, 1));
        let y = PadicPoint::from_rationals(ctx(3, 2), &[(3, 1), (9, 1)], 8).unwrap();
        assert_eq!(y.vector_norm(), q(1, 3));
        let z = PadicPoint::from_rationals(ctx(3, 2), &[(0, 1), (0, 1)], 8).unwrap();
        assert_eq!(z.vector_norm(), BigRational::zero());
    }

    #[test]
    fn hensel_digits_reconstruct() {
        // -1 = (p-1)(1 + p + p^2 + ...)
        let c = Coordinate::from_rational(-1, 1, 5, &ctx(5, 1)).unwrap();
        assert_eq!(c.digits, vec![4; 5]);
        // 1/3 in Z_2 is 1 + 2 + 2^3 + 2^5 + ... : ...0101011
        let c = Coordinate::from_rational(1, 3, 6, &ctx(2, 1)).unwrap();
        assert_eq!(c.digits, vec![1, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn measures_examples() {
        assert_eq!(ctx(3, 2).ball_measure(1).unwrap(), q(9, 1));
        assert_eq!(ctx(2, 1).sphere_measure(0).unwrap(), q(1, 2));
        assert!(matches!(ctx(2, 1).ball_measure(65), Err(Error::ShellOutOfRange { .. })));
        assert!(ctx(2, 1).with_shell_limit(100).ball_measure(65).is_ok());
    }

    #[test]
    fn ball_is_disjoint_union_of_spheres() {
        for &(p, n) in &[(2, 1), (3, 2), (5, 3)] {
            let c = ctx(p, n);
            let mut acc = BigRational::zero();
            // everything below -64 sums to |B_{-65}| = p^{-65n}, added exactly
            acc += c.p_power(-65 * n as i64);
            for g in -64..=30 {
                acc += c.sphere_measure(g).unwrap();
                if g >= -30 {
                    assert_eq!(acc, c.ball_measure(g).unwrap());
                }
            }
        }
    }

    #[test]
    fn coordinate_addition_carries() {
        let c = ctx(2, 1);
        let one = Coordinate::from_rational(1, 1, 8, &c).unwrap();
        let two = one.add(&one, 2);
        assert_eq!(two.valuation, Some(1));
        let minus_one = Coordinate::from_rational(-1, 1, 8, &c).unwrap();
        assert!(one.add(&minus_one, 2).is_zero());
    }

    #[test]
    fn sampling_is_reproducible_and_supported() {
        let c = ctx(2, 1);
        let a = sample_uniform_seeded(Region::Ball(0), 24, 7, &c);
        let b = sample_uniform_seeded(Region::Ball(0), 24, 7, &c);
        assert_eq!(a, b);
        assert_eq!(a.coordinates()[0].digits.len(), 25);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = sample_uniform(Region::Ball(0), 24, &c, &mut rng);
            assert!(x.shell().map_or(true, |k| k <= 0));
        }
        for _ in 0..1000 {
            let x = sample_uniform(Region::Sphere(-3), 4, &ctx(3, 2), &mut rng);
            assert_eq!(x.shell(), Some(-3));
        }
    }

    #[test]
    fn unit_sphere_fraction_matches_measure_ratio() {
        let c = ctx(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| sample_uniform(Region::Ball(0), 24, &c, &mut rng).shell() == Some(0))
            .count() as f64;
        let expected = 0.5;
        let sigma = (expected * (1.0 - expected) / draws as f64).sqrt();
        assert!((hits / draws as f64 - expected).abs() <= 3.0 * sigma);
    }

    #[test]
    fn leading_digits_are_uniform() {
        // chi-square over {1, ..., p-1}; 99% critical values for 4 and 6 dof
        for &(p, crit) in &[(5u32, 13.277), (7u32, 16.812)] {
            let c = ctx(p, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(p as u64);
            let draws = 60_000;
            let mut counts = vec![0f64; p as usize];
            for _ in 0..draws {
                let x = sample_uniform(Region::Ball(0), 2, &c, &mut rng);
                counts[x.coordinates()[0].digits[0] as usize] += 1.0;
            }
            let expect = draws as f64 / (p - 1) as f64;
            let chi2: f64 = counts[1..].iter().map(|o| (o - expect).powi(2) / expect).sum();
            assert!(chi2 < crit, "p={p}: chi2={chi2}");
        }
    }
}
