//! Monte-Carlo oracle: integrals, operator values and Luxemburg norms
//! estimated from Haar-uniform samples of `Q_p^n`.
//!
//! The oracle only ever looks at a function through
//! [`RadialStepFunction::evaluate_at`] on sampled points. Samples are
//! stratified into bands of consecutive shells plus one stratum for the small
//! ball left below the truncation window. Half of the budget is split evenly
//! across strata and half in proportion to measure: a purely proportional split
//! would starve the small bands near the origin just like unstratified sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{OperatorKind, OperatorSpec};
use crate::padic::{sample_uniform, PadicContext, PadicPoint, Region, DEFAULT_RESOLUTION};
use crate::radial::{ExponentFunction, RadialStepFunction};

const MIN_PER_STRATUM: usize = 16;
const PROBE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub samples: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Shells `[-N, N]` treated explicitly; everything beyond `N` is dropped.
    pub truncation: i32,
    pub seed: u64,
    #[serde(default = "default_band")]
    pub band_width: usize,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_band() -> usize {
    3
}

impl OracleConfig {
    pub fn new(samples: usize, truncation: i32, seed: u64) -> Result<Self> {
        let cfg = OracleConfig { samples, resolution: DEFAULT_RESOLUTION, truncation, seed, band_width: 3 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1000 {
            return Err(Error::Invalid(format!("at least 1000 samples are needed, got {}", self.samples)));
        }
        if self.truncation < 0 {
            return Err(Error::Invalid(format!("truncation window N = {} must be nonnegative", self.truncation)));
        }
        if self.band_width == 0 {
            return Err(Error::Invalid("band width must be positive".into()));
        }
        Ok(())
    }

    fn covers(&self, f: &RadialStepFunction) -> Result<()> {
        let n = self.truncation;
        if f.lo() < -n || f.hi() > n {
            return Err(Error::Invalid(format!(
                "truncation window [-{n}, {n}] does not contain the function window [{}, {}]",
                f.lo(),
                f.hi()
            )));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "crate::real")]
    pub estimate: f64,
    #[serde(with = "crate::real")]
    pub sigma: f64,
    pub samples: usize,
}

impl Estimate {
    fn merge(self, other: Estimate) -> Estimate {
        Estimate {
            estimate: self.estimate + other.estimate,
            sigma: self.sigma.hypot(other.sigma),
            samples: self.samples + other.samples,
        }
    }

    const ZERO: Estimate = Estimate { estimate: 0.0, sigma: 0.0, samples: 0 };
}

/// Shells `lo..=hi` (or the whole ball `B_hi` when `lo` is `None`).
#[derive(Debug, Clone, Copy)]
struct Stratum {
    lo: Option<i64>,
    hi: i64,
}

impl Stratum {
    fn measure(&self, ctx: &PadicContext) -> f64 {
        let below = self.lo.map_or(0.0, |lo| ctx.ball_measure_f64(lo - 1));
        ctx.ball_measure_f64(self.hi) - below
    }

    fn draw(&self, cfg: &OracleConfig, ctx: &PadicContext, rng: &mut ChaCha8Rng) -> PadicPoint {
        loop {
            let x = sample_uniform(Region::Ball(self.hi), cfg.resolution, ctx, rng);
            match (self.lo, x.shell()) {
                (None, _) => return x,
                (Some(lo), Some(s)) if s >= lo => return x,
                _ => continue,
            }
        }
    }
}

/// Bands covering shells `from..=to`, plus `B_{from-1}` when `with_core`.
fn strata(from: i64, to: i64, width: usize, with_core: bool) -> Vec<Stratum> {
    let mut out = Vec::new();
    if with_core {
        out.push(Stratum { lo: None, hi: from - 1 });
    }
    let mut lo = from;
    while lo <= to {
        let hi = (lo + width as i64 - 1).min(to);
        out.push(Stratum { lo: Some(lo), hi });
        lo = hi + 1;
    }
    out
}

/// Each sample set: (stratum measure, drawn points).
struct SampleSet {
    strata: Vec<(f64, Vec<PadicPoint>)>,
}

impl SampleSet {
    fn draw(ctx: &PadicContext, strata: &[Stratum], cfg: &OracleConfig, stream_base: u64) -> Self {
        let measures: Vec<f64> = strata.iter().map(|s| s.measure(ctx)).collect();
        let total: f64 = measures.iter().sum();
        let sets = strata
            .par_iter()
            .zip(measures.par_iter())
            .enumerate()
            .map(|(i, (s, &mu))| {
                let half = cfg.samples as f64 / 2.0;
                let share = (half / strata.len() as f64 + half * mu / total).round() as usize;
                let count = share.max(MIN_PER_STRATUM);
                let mut rng = cfg.rng(stream_base + i as u64);
                (mu, (0..count).map(|_| s.draw(cfg, ctx, &mut rng)).collect())
            })
            .collect();
        SampleSet { strata: sets }
    }

    /// Stratified mean-times-measure estimate of `∫ g`.
    fn integrate(&self, g: impl Fn(&PadicPoint) -> f64 + Sync) -> Estimate {
        let parts: Vec<Estimate> = self
            .strata
            .par_iter()
            .map(|(mu, pts)| {
                let vals: Vec<f64> = pts.iter().map(&g).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Estimate { estimate: mu * mean, sigma: mu * (var / n).sqrt(), samples: vals.len() }
            })
            .collect();
        pairwise_sum(&parts)
    }
}

/// Fixed-shape pairwise reduction, independent of thread scheduling.
fn pairwise_sum(parts: &[Estimate]) -> Estimate {
    match parts.len() {
        0 => Estimate::ZERO,
        1 => parts[0],
        n => pairwise_sum(&parts[..n / 2]).merge(pairwise_sum(&parts[n / 2..])),
    }
}

fn ball_samples(ctx: &PadicContext, gamma: i64, cfg: &OracleConfig, stream_base: u64) -> SampleSet {
    let n = cfg.truncation as i64;
    let from = (-n).min(gamma);
    SampleSet::draw(ctx, &strata(from, gamma, cfg.band_width, true), cfg, stream_base)
}

/// `∫_{B_γ} f` from stratified Haar samples.
pub fn mc_integrate(f: &RadialStepFunction, gamma: i64, cfg: &OracleConfig) -> Result<Estimate> {
    cfg.validate()?;
    if gamma > cfg.truncation as i64 {
        return Err(Error::Invalid(format!("ball B_{gamma} lies outside the truncation window")));
    }
    let ctx = *f.ctx();
    let samples = ball_samples(&ctx, gamma, cfg, 0);
    Ok(samples.integrate(|x| f.evaluate_at(x.shell())))
}

/// Estimates `(T f)(x)` at a random point `x` of the probe shell by sampling
/// the defining integral of `T` directly.
pub fn mc_operator_probe(
    f: &RadialStepFunction,
    spec: &OperatorSpec,
    probe_shell: i64,
    cfg: &OracleConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    spec.validate()?;
    cfg.covers(f)?;
    let n_trunc = cfg.truncation as i64;
    if probe_shell.abs() > n_trunc {
        return Err(Error::Invalid(format!("probe shell {probe_shell} lies outside the truncation window")));
    }
    let ctx = *f.ctx();
    let x = sample_uniform(Region::Sphere(probe_shell), cfg.resolution, &ctx, &mut cfg.rng(PROBE_STREAM));
    let k = probe_shell;
    let alpha = spec.alpha;
    let n = ctx.nf();
    let b = spec.symbol.as_ref();
    let bx = b.map_or(0.0, |b| b.evaluate(k));
    // commutators: b(x)·T f(x) - T(b f)(x) = T[(b(x) - b(·)) f](x)
    let weight = |t: &PadicPoint| -> f64 {
        let ft = f.evaluate_at(t.shell());
        match b {
            Some(b) => (bx - b.evaluate_at(t.shell())) * ft,
            None => ft,
        }
    };
    match spec.kind {
        OperatorKind::Hardy | OperatorKind::Commutator => {
            let samples = ball_samples(&ctx, k, cfg, 0);
            let est = samples.integrate(weight);
            let scale = ctx.pow(k as f64 * (alpha - n));
            Ok(Estimate { estimate: scale * est.estimate, sigma: scale * est.sigma, ..est })
        }
        OperatorKind::HardyAdjoint | OperatorKind::CommutatorAdjoint => {
            if k >= n_trunc {
                return Ok(Estimate::ZERO);
            }
            let samples = SampleSet::draw(&ctx, &strata(k + 1, n_trunc, cfg.band_width, false), cfg, 0);
            Ok(samples.integrate(|t| {
                let s = t.shell().expect("strata exclude the origin");
                weight(t) * ctx.pow(s as f64 * (alpha - n))
            }))
        }
        OperatorKind::Maximal => {
            // centered balls B_γ(x) = x + B_γ(0), γ from inside the sphere of x
            // up to the truncation window
            let mut best = Estimate::ZERO;
            for (i, gamma) in ((k - 2).max(-n_trunc)..=n_trunc).enumerate() {
                let samples = ball_samples(&ctx, gamma, cfg, (i as u64 + 1) << 20);
                let est = samples.integrate(|y| {
                    let z = x.add(y).expect("same context");
                    f.evaluate_at(z.shell()).abs()
                });
                let mu = ctx.ball_measure_f64(gamma);
                let mean = Estimate { estimate: est.estimate / mu, sigma: est.sigma / mu, ..est };
                if mean.estimate > best.estimate {
                    best = mean;
                }
            }
            Ok(best)
        }
    }
}

/// Luxemburg norm with every modular value estimated from one common sample
/// of `B_N`; `σ` is propagated through the slope of the modular at the root.
pub fn mc_luxemburg(f: &RadialStepFunction, u: &ExponentFunction, cfg: &OracleConfig) -> Result<Estimate> {
    cfg.validate()?;
    cfg.covers(f)?;
    f.ctx().check_same(u.ctx())?;
    let ctx = *f.ctx();
    let samples = ball_samples(&ctx, cfg.truncation as i64, cfg, 0);
    let total: usize = samples.strata.iter().map(|s| s.1.len()).sum();
    let rho = |lambda: f64| samples.integrate(|x| (f.evaluate_at(x.shell()).abs() / lambda).powf(u.at(x.shell())));
    if rho(1.0).estimate == 0.0 && rho(1e-300).estimate == 0.0 {
        return Ok(Estimate { estimate: 0.0, sigma: 0.0, samples: total });
    }
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    while rho(hi).estimate > 1.0 {
        lo = hi;
        hi *= 2.0;
    }
    while rho(lo).estimate <= 1.0 {
        hi = lo;
        lo *= 0.5;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if rho(mid).estimate > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let at_root = rho(lambda);
    // dρ/dλ = -(1/λ) ∫ u |f/λ|^u
    let slope = samples
        .integrate(|x| {
            let s = x.shell();
            let e = u.at(s);
            e * (f.evaluate_at(s).abs() / lambda).powf(e)
        })
        .estimate
        / lambda;
    Ok(Estimate { estimate: lambda, sigma: at_root.sigma / slope, samples: total })
}
