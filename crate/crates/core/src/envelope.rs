//! Statistical sample-path envelopes, statistical service curves and the
//! sojourn bounds obtained by composing them.
//!
//! An arrival envelope with rate `rho_A` and error profile `eps_A` bounds
//! `max_nu { rho_A (n - nu) - A(nu, n) } > tau` by `eps_A(tau)`. A service
//! envelope bounds `D(n) > max_nu { A(nu) + rho_S (n - nu + 1) } + tau` by
//! `eps_S(tau)`. Together they give
//!
//! ```text
//! P[T(n) > tau_A + tau_S + rho_S] <= eps_A(tau_A) + eps_S(tau_S)    (rho_S <= rho_A)
//! ```
//!
//! For `k` parallel servers where a job leaves once `l` of its tasks are done,
//! independent servers with profile `p = eps_S(tau)` compose to the binomial
//! lower tail `sum_{j<l} C(k,j) (1-p)^j p^(k-j)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::models::{rho_arrival, rho_service, Direction, DistributionSpec, Law, Role};
use crate::numeric::{bisect_last_ok, grid_golden_min, invert_decreasing};

/// Number of stages `m` a sample-path profile sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

/// A non-increasing error profile `tau -> [0, 1]`.
#[derive(Clone)]
pub enum ErrorProfile {
    /// No randomness: the envelope holds surely.
    Zero,
    /// `prefactor * exp(-decay * tau)`.
    Exponential {
        prefactor: f64,
        decay: f64,
    },
    /// `factor * base(tau)`, e.g. a union bound over `factor` servers.
    Scaled {
        factor: f64,
        base: Box<ErrorProfile>,
    },
    /// Binomial lower tail for `l` of `k` independent servers with profile `base`.
    Binomial {
        k: u32,
        l: u32,
        base: Box<ErrorProfile>,
    },
    /// `sum_{j=1}^{m} stage(tau + delta j)`.
    SamplePath {
        stage: Box<ErrorProfile>,
        delta: f64,
        horizon: Horizon,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ErrorProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Exponential { prefactor, decay } => write!(f, "{prefactor}*exp(-{decay} tau)"),
            Self::Scaled { factor, base } => write!(f, "{factor}*({base:?})"),
            Self::Binomial { k, l, base } => write!(f, "Binomial(k={k}, l={l}, {base:?})"),
            Self::SamplePath { stage, delta, horizon } => {
                write!(f, "SamplePath({stage:?}, delta={delta}, {horizon:?})")
            }
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

const SERIES_REL_TOL: f64 = 1e-17;
const SERIES_MAX_TERMS: u64 = 10_000_000;

impl ErrorProfile {
    pub fn exponential(decay: f64) -> Self {
        Self::Exponential { prefactor: 1.0, decay }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled { factor, base: Box::new(self) }
    }

    /// `(prefactor, decay)` when the profile is a single exponential.
    pub fn as_exponential(&self) -> Option<(f64, f64)> {
        match self {
            Self::Exponential { prefactor, decay } => Some((*prefactor, *decay)),
            Self::Scaled { factor, base } => base.as_exponential().map(|(a, t)| (factor * a, t)),
            Self::SamplePath { stage, delta, horizon: Horizon::Infinite } => {
                stage.as_exponential().map(|(a, t)| (a / (t * delta), t))
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Scaled { base, .. } | Self::Binomial { base, .. } => base.is_zero(),
            Self::SamplePath { stage, .. } => stage.is_zero(),
            _ => false,
        }
    }

    /// Unclamped value; may exceed 1.
    pub fn eval_raw(&self, tau: f64) -> f64 {
        if let Some((a, t)) = self.as_exponential() {
            return a * (-t * tau).exp();
        }
        match self {
            Self::Zero => 0.0,
            Self::Exponential { .. } => unreachable!(),
            Self::Scaled { factor, base } => factor * base.eval_raw(tau),
            Self::Binomial { k, l, base } => binomial_lower_tail(*k, *l, base.eval(tau)),
            Self::SamplePath { stage, delta, horizon } => match horizon {
                Horizon::Finite(m) => (1..=*m).map(|j| stage.eval_raw(tau + delta * j as f64)).sum(),
                Horizon::Infinite => {
                    let mut sum = 0.0;
                    for j in 1..=SERIES_MAX_TERMS {
                        let term = stage.eval_raw(tau + delta * j as f64);
                        sum += term;
                        if term <= SERIES_REL_TOL * sum || term == 0.0 {
                            break;
                        }
                    }
                    sum
                }
            },
            Self::Custom(f) => f(tau),
        }
    }

    /// Profile value clamped to `[0, 1]`.
    pub fn eval(&self, tau: f64) -> f64 {
        self.eval_raw(tau).clamp(0.0, 1.0)
    }

    /// Smallest `tau >= 0` with `eval_raw(tau) <= eps`.
    pub fn inverse(&self, eps: f64) -> Option<f64> {
        if !(eps > 0.0) {
            return None;
        }
        if self.is_zero() {
            return Some(0.0);
        }
        if let Some((a, t)) = self.as_exponential() {
            return Some(((a / eps).ln() / t).max(0.0));
        }
        invert_decreasing(|x| self.eval_raw(x), eps, 0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub direction: Direction,
    /// `rho_A` or `rho_S`, in time per job.
    pub rate: f64,
    pub error_profile: ErrorProfile,
}

impl Envelope {
    pub fn new(direction: Direction, rate: f64, error_profile: ErrorProfile) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return domain(format!("envelope rate must be finite and non-negative, got {rate}"));
        }
        Ok(Self { direction, rate, error_profile })
    }
}

/// Envelope of an iid process at decay `theta`. Deterministic laws get the zero profile.
pub fn envelope_from_iid(dist: &DistributionSpec, theta: f64) -> Result<Envelope> {
    let (direction, rate) = match dist.role() {
        Role::InterArrival => (Direction::ArrivalLower, rho_arrival(dist, theta)?),
        Role::ServiceTime => (Direction::ServiceUpper, rho_service(dist, theta)?),
    };
    let profile = match dist.law() {
        Law::Deterministic { .. } => ErrorProfile::Zero,
        _ => ErrorProfile::exponential(theta),
    };
    Envelope::new(direction, rate, profile)
}

/// Service envelope `eps_S(tau) = exp(-kappa tau)` at rate `rho_S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRateServer {
    pub rate_inverse: f64,
    pub decay: f64,
}

impl LatencyRateServer {
    pub fn new(rate_inverse: f64, decay: f64) -> Result<Self> {
        if !(rate_inverse > 0.0 && rate_inverse.is_finite()) {
            return domain(format!("rho_S must be positive, got {rate_inverse}"));
        }
        if !(decay > 0.0) {
            return domain(format!("kappa must be positive, got {decay}"));
        }
        Ok(Self { rate_inverse, decay })
    }

    pub fn envelope(&self) -> Envelope {
        Envelope {
            direction: Direction::ServiceUpper,
            rate: self.rate_inverse,
            error_profile: ErrorProfile::exponential(self.decay),
        }
    }
}

/// An optimized split of a violation budget between two weighted profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitBound {
    pub tau_a: f64,
    pub tau_s: f64,
    pub eps_a: f64,
    pub eps_s: f64,
    /// `weight_a * tau_a + weight_s * tau_s`.
    pub cost: f64,
}

/// Minimizes `weight_a tau_a + weight_s tau_s` subject to
/// `eps_a(tau_a) + eps_s(tau_s) <= eps` by golden-section search over the
/// logit of the split fraction.
pub fn optimize_split(
    profile_a: &ErrorProfile,
    weight_a: f64,
    profile_s: &ErrorProfile,
    weight_s: f64,
    eps: f64,
) -> Result<SplitBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps must lie in (0, 1), got {eps}"));
    }
    let infeasible = || Error::Infeasible("error profile does not fall below the budget".into());
    let at = |eps_a: f64| -> Option<SplitBound> {
        let eps_s = eps - eps_a;
        let tau_a = profile_a.inverse(eps_a)?;
        let tau_s = profile_s.inverse(eps_s)?;
        Some(SplitBound { tau_a, tau_s, eps_a, eps_s, cost: weight_a * tau_a + weight_s * tau_s })
    };
    match (profile_a.is_zero(), profile_s.is_zero()) {
        (true, true) => return Ok(SplitBound { tau_a: 0.0, tau_s: 0.0, eps_a: 0.0, eps_s: 0.0, cost: 0.0 }),
        (true, false) => {
            let tau_s = profile_s.inverse(eps).ok_or_else(infeasible)?;
            return Ok(SplitBound { tau_a: 0.0, tau_s, eps_a: 0.0, eps_s: eps, cost: weight_s * tau_s });
        }
        (false, true) => {
            let tau_a = profile_a.inverse(eps).ok_or_else(infeasible)?;
            return Ok(SplitBound { tau_a, tau_s: 0.0, eps_a: eps, eps_s: 0.0, cost: weight_a * tau_a });
        }
        _ => {}
    }
    let frac = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (x, _) = grid_golden_min(|x| at(eps * frac(x)).map_or(f64::INFINITY, |s| s.cost), -40.0, 40.0, 81, false);
    at(eps * frac(x)).filter(|s| s.cost.is_finite()).ok_or_else(infeasible)
}

/// Sojourn time quantile `rho_S + tau_A + tau_S` with the split detail.
pub fn sojourn_split_envelopes(arr: &Envelope, srv: &Envelope, eps: f64) -> Result<SplitBound> {
    if arr.direction != Direction::ArrivalLower || srv.direction != Direction::ServiceUpper {
        return domain("expected an arrival and a service envelope");
    }
    if srv.rate > arr.rate * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "service rate parameter {} exceeds arrival rate parameter {}",
            srv.rate, arr.rate
        )));
    }
    let split = optimize_split(&arr.error_profile, 1.0, &srv.error_profile, 1.0, eps)?;
    Ok(SplitBound { cost: split.cost + srv.rate, ..split })
}

/// Sojourn time quantile from an arrival and a service envelope.
pub fn sojourn_bound_envelopes(arr: &Envelope, srv: &Envelope, eps: f64) -> Result<f64> {
    Ok(sojourn_split_envelopes(arr, srv, eps)?.cost)
}

/// `(k, l)` fork-join: a job departs once `l` of its `k` tasks are done.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KLConfig {
    pub k: u32,
    pub l: u32,
    pub independent: bool,
}

impl KLConfig {
    pub fn new(k: u32, l: u32, independent: bool) -> Result<Self> {
        if k == 0 || l == 0 || l > k {
            return domain(format!("need 1 <= l <= k, got k = {k}, l = {l}"));
        }
        Ok(Self { k, l, independent })
    }
}

fn binomial_lower_tail(k: u32, l: u32, p: f64) -> f64 {
    if l == 1 {
        return p.powi(k as i32);
    }
    if l == k {
        // 1 - (1-p)^k without cancellation
        return -((k as f64) * (-p).ln_1p()).exp_m1();
    }
    let q = 1.0 - p;
    let mut coeff = 1.0f64;
    let mut sum = 0.0;
    for j in 0..l {
        if j > 0 {
            coeff *= (k - j + 1) as f64 / j as f64;
        }
        sum += coeff * q.powi(j as i32) * p.powi((k - j) as i32);
    }
    sum
}

/// Probability that fewer than `l` of `k` independent Bernoulli(1-p) trials succeed.
pub fn kl_error_profile(cfg: KLConfig, p: f64) -> Result<f64> {
    KLConfig::new(cfg.k, cfg.l, cfg.independent)?;
    if !cfg.independent {
        return Err(Error::Independence(format!(
            "the binomial ({}, {}) profile needs independent servers; use the union bound k*p",
            cfg.k, cfg.l
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("p must lie in [0, 1], got {p}"));
    }
    Ok(binomial_lower_tail(cfg.k, cfg.l, p))
}

/// Stage profile for `k` parallel servers with per-server profile `srv_profile`.
pub fn forkjoin_stage_profile(k: u32, srv_profile: ErrorProfile, independent: bool, l: u32) -> Result<ErrorProfile> {
    KLConfig::new(k, l, independent)?;
    if k == 1 {
        return Ok(srv_profile);
    }
    if independent {
        return Ok(ErrorProfile::Binomial { k, l, base: Box::new(srv_profile) });
    }
    if l < k {
        return Err(Error::Independence(format!(
            "({k}, {l}) composition of dependent servers has no union-bound form"
        )));
    }
    Ok(srv_profile.scaled(k as f64))
}

/// Largest `theta` with `k * rho_A(-theta) >= min_rate`, i.e. the fastest
/// decaying arrival envelope (thinned by `k`) that still dominates `min_rate`.
pub fn arrival_theta_for_rate(dist: &DistributionSpec, k: u32, min_rate: f64) -> Result<f64> {
    let ok = |t: f64| rho_arrival(dist, t).is_ok_and(|r| k as f64 * r >= min_rate);
    let probe = 1e-9;
    if !ok(probe) {
        return Err(Error::Infeasible(format!(
            "arrival rate parameter {} cannot cover {min_rate}",
            k as f64 * dist.mean()
        )));
    }
    let mut hi = 1.0;
    while ok(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(hi);
        }
    }
    Ok(bisect_last_ok(ok, probe, hi))
}

/// Quantiles of the three two-server latency-rate strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRateStrategies {
    pub single: f64,
    pub thinned: f64,
    pub redundant_21: f64,
    /// Arrival decay used by the single and redundant strategies.
    pub theta_single: f64,
    /// Arrival decay used by the thinned strategy.
    pub theta_thinned: f64,
}

/// Single server, two servers fed round-robin with resequencing, and a
/// (2,1) fork-join with a redundant copy of every job.
pub fn latency_rate_strategies(lam: f64, server: LatencyRateServer, eps: f64) -> Result<LatencyRateStrategies> {
    let arrival = DistributionSpec::exponential(lam, Role::InterArrival)?;
    let rho_s = server.rate_inverse;
    let srv = server.envelope();

    let theta_single = arrival_theta_for_rate(&arrival, 1, rho_s)?;
    let arr = Envelope::new(
        Direction::ArrivalLower,
        rho_arrival(&arrival, theta_single)?,
        ErrorProfile::exponential(theta_single),
    )?;
    let single = sojourn_bound_envelopes(&arr, &srv, eps)?;

    let redundant_srv =
        Envelope { error_profile: forkjoin_stage_profile(2, srv.error_profile.clone(), true, 1)?, ..srv.clone() };
    let redundant_21 = sojourn_bound_envelopes(&arr, &redundant_srv, eps)?;

    let theta_thinned = arrival_theta_for_rate(&arrival, 2, rho_s)?;
    let split = optimize_split(
        &ErrorProfile::exponential(theta_thinned).scaled(2.0),
        1.0,
        &srv.error_profile.clone().scaled(2.0),
        1.0,
        eps,
    )?;
    let thinned = rho_s + split.cost;

    Ok(LatencyRateStrategies { single, thinned, redundant_21, theta_single, theta_thinned })
}

/// Envelope-route bound of a `(k, l)` fork-join with iid arrivals and `k`
/// iid servers, both envelopes taken at a common `theta`.
#[derive(Debug, Clone)]
pub struct KlBound {
    pub theta: f64,
    pub arrival: Envelope,
    pub service: Envelope,
    pub split: SplitBound,
}

impl KlBound {
    pub fn quantile(&self) -> f64 {
        self.split.cost
    }

    /// Tail bound at `tau`, the smallest budget whose quantile is at most `tau`.
    pub fn tail(&self, tau: f64) -> f64 {
        tail_from_quantile(|eps| sojourn_bound_envelopes(&self.arrival, &self.service, eps), tau)
    }
}

fn kl_envelopes(
    arrival: &DistributionSpec,
    service: &DistributionSpec,
    cfg: KLConfig,
    theta: f64,
) -> Result<(Envelope, Envelope)> {
    let arr = envelope_from_iid(arrival, theta)?;
    let mut srv = envelope_from_iid(service, theta)?;
    srv.error_profile = forkjoin_stage_profile(cfg.k, srv.error_profile, cfg.independent, cfg.l)?;
    Ok((arr, srv))
}

/// `(k, l)` fork-join quantile with `theta` optimized over the range where
/// `rho_S(theta) <= rho_A(-theta)`.
pub fn kl_sojourn(arrival: &DistributionSpec, service: &DistributionSpec, cfg: KLConfig, eps: f64) -> Result<KlBound> {
    if arrival.role() != Role::InterArrival || service.role() != Role::ServiceTime {
        return domain("expected an inter-arrival and a service law");
    }
    forkjoin_stage_profile(cfg.k, ErrorProfile::Zero, cfg.independent, cfg.l)?;
    let stable = |t: f64| match (rho_service(service, t), rho_arrival(arrival, t)) {
        (Ok(s), Ok(a)) => s <= a,
        _ => false,
    };
    let probe = 1e-9;
    if !stable(probe) {
        return Err(Error::Stability(format!(
            "mean service time {} exceeds mean inter-arrival time {}",
            service.mean(),
            arrival.mean()
        )));
    }
    let sup = bisect_last_ok(stable, probe, service.theta_max().min(1e4));
    let eval = |t: f64| {
        kl_envelopes(arrival, service, cfg, t)
            .and_then(|(a, s)| sojourn_bound_envelopes(&a, &s, eps))
            .unwrap_or(f64::INFINITY)
    };
    let (theta, q) = grid_golden_min(eval, sup * 1e-4, sup, 32, true);
    if !q.is_finite() {
        return Err(Error::Infeasible(format!("no finite (k, l) bound at eps = {eps}")));
    }
    let (arr, srv) = kl_envelopes(arrival, service, cfg, theta)?;
    let split = sojourn_split_envelopes(&arr, &srv, eps)?;
    Ok(KlBound { theta, arrival: arr, service: srv, split })
}

/// Inverts a quantile map `eps -> q(eps)`, non-increasing in `eps`, into the
/// tail bound `inf { eps : q(eps) <= tau }`, clamped to 1.
pub fn tail_from_quantile(mut q: impl FnMut(f64) -> Result<f64>, tau: f64) -> f64 {
    let mut fits = |log_eps: f64| q(log_eps.exp()).is_ok_and(|v| v <= tau);
    let (lo, hi) = (-700.0f64, (1.0f64 - 1e-12).ln());
    if !fits(hi) {
        return 1.0;
    }
    if fits(lo) {
        return lo.exp();
    }
    let (mut bad, mut good) = (lo, hi);
    for _ in 0..80 {
        let mid = 0.5 * (bad + good);
        if fits(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good.exp()
}
