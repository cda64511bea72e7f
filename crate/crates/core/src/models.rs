//! Parametric inter-arrival and service laws, their moment generating
//! functions, and the `(sigma, rho)` rate parameters derived from them.
//!
//! Every law here has a closed-form MGF, so all rate parameters are exact:
//!
//! * arrivals: `rho_A(-theta) = -(1/theta) ln E[exp(-theta A)]`
//! * service:  `rho_S(theta)  =  (1/theta) ln E[exp(theta S)]`
//!
//! The arrival parameter falls from the mean to the minimum inter-arrival time
//! as `theta` grows; the service parameter rises from the mean towards the
//! maximum service time.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::error::{domain, Error, Result};
use crate::numeric::log_sum_exp;

/// Evaluations closer than this to an MGF pole are rejected.
pub const POLE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    InterArrival,
    ServiceTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Gaussian { mean: f64, var: f64 },
    Erlang { shape: u32, rate: f64 },
}

/// A parametric inter-arrival or service-time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    law: Law,
    role: Role,
}

impl DistributionSpec {
    pub fn new(law: Law, role: Role) -> Result<Self> {
        match law {
            Law::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                domain(format!("exponential rate must be positive, got {rate}"))
            }
            Law::Deterministic { value } if !(value >= 0.0 && value.is_finite()) => {
                domain(format!("deterministic value must be non-negative, got {value}"))
            }
            Law::Gaussian { mean, var } if !(mean.is_finite() && var >= 0.0 && var.is_finite()) => {
                domain(format!("gaussian needs finite mean and non-negative variance, got ({mean}, {var})"))
            }
            Law::Erlang { shape, rate } if shape == 0 || !(rate > 0.0 && rate.is_finite()) => {
                domain(format!("erlang needs shape >= 1 and positive rate, got ({shape}, {rate})"))
            }
            _ => Ok(Self { law, role }),
        }
    }

    pub fn exponential(rate: f64, role: Role) -> Result<Self> {
        Self::new(Law::Exponential { rate }, role)
    }

    pub fn deterministic(value: f64, role: Role) -> Result<Self> {
        Self::new(Law::Deterministic { value }, role)
    }

    pub fn gaussian(mean: f64, var: f64, role: Role) -> Result<Self> {
        Self::new(Law::Gaussian { mean, var }, role)
    }

    pub fn erlang(shape: u32, rate: f64, role: Role) -> Result<Self> {
        Self::new(Law::Erlang { shape, rate }, role)
    }

    /// Parses a distribution literal such as `exp:mu=1` or `gauss:mean=1,var=0.25`.
    pub fn parse(literal: &str, role: Role) -> Result<Self> {
        let law: Law = literal.parse()?;
        Self::new(law, role)
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(self, role: Role) -> Self {
        Self { role, ..self }
    }

    pub fn mean(&self) -> f64 {
        match self.law {
            Law::Exponential { rate } => 1.0 / rate,
            Law::Deterministic { value } => value,
            Law::Gaussian { mean, .. } => mean,
            Law::Erlang { shape, rate } => shape as f64 / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.law {
            Law::Exponential { rate } => 1.0 / (rate * rate),
            Law::Deterministic { .. } => 0.0,
            Law::Gaussian { var, .. } => var,
            Law::Erlang { shape, rate } => shape as f64 / (rate * rate),
        }
    }

    /// Supremum of the MGF domain on the positive axis (inclusive), `+inf` when unbounded.
    pub fn theta_max(&self) -> f64 {
        match self.law {
            Law::Exponential { rate } | Law::Erlang { rate, .. } => rate - POLE_GUARD,
            Law::Deterministic { .. } | Law::Gaussian { .. } => f64::INFINITY,
        }
    }

    /// `ln E[exp(theta X)]` in closed form.
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        if theta.is_nan() {
            return domain("theta is NaN");
        }
        if theta > self.theta_max() {
            return domain(format!("theta = {theta} outside the MGF domain (theta <= {})", self.theta_max()));
        }
        Ok(match self.law {
            Law::Exponential { rate } => -(-theta / rate).ln_1p(),
            Law::Deterministic { value } => theta * value,
            Law::Gaussian { mean, var } => theta * mean + 0.5 * theta * theta * var,
            Law::Erlang { shape, rate } => -(shape as f64) * (-theta / rate).ln_1p(),
        })
    }

    /// Sampling in simulation truncates Gaussian draws at zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.law {
            Law::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Law::Deterministic { value } => value,
            Law::Gaussian { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                (mean + var.sqrt() * z).max(0.0)
            }
            Law::Erlang { shape, rate } => (0..shape)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    e / rate
                })
                .sum(),
        }
    }

    /// Quantile function, used for comonotone (common-uniform) task draws.
    /// Gaussian quantiles are truncated at zero like [`sample`](Self::sample).
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0 - f64::EPSILON);
        match self.law {
            Law::Exponential { rate } => -(-u).ln_1p() / rate,
            Law::Deterministic { value } => value,
            Law::Gaussian { mean, var } => {
                if var == 0.0 {
                    return mean.max(0.0);
                }
                let n = Normal::new(mean, var.sqrt()).expect("validated parameters");
                n.inverse_cdf(u.max(f64::MIN_POSITIVE)).max(0.0)
            }
            Law::Erlang { shape, rate } => {
                let g = Gamma::new(shape as f64, rate).expect("validated parameters");
                g.inverse_cdf(u)
            }
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.law)
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Law::Exponential { rate } => write!(f, "exp:rate={rate}"),
            Law::Deterministic { value } => write!(f, "det:d={value}"),
            Law::Gaussian { mean, var } => write!(f, "gauss:mean={mean},var={var}"),
            Law::Erlang { shape, rate } => write!(f, "erlang:k={shape},lambda={rate}"),
        }
    }
}

impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) =
            s.split_once(':').ok_or_else(|| Error::Parse(format!("expected `kind:key=value,...`, got `{s}`")))?;
        let mut kv = Vec::new();
        for item in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value in `{item}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("`{v}` is not a number in `{s}`")))?;
            kv.push((k.trim().to_ascii_lowercase(), v));
        }
        let get = |names: &[&str]| -> Result<f64> {
            kv.iter()
                .find(|(k, _)| names.contains(&k.as_str()))
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::Parse(format!("`{s}` is missing `{}`", names[0])))
        };
        let known: &[&str] = match kind.trim().to_ascii_lowercase().as_str() {
            "exp" => &["mu", "lambda", "rate"],
            "det" => &["d"],
            "gauss" => &["mean", "var"],
            "erlang" => &["k", "lambda", "rate"],
            other => return Err(Error::Parse(format!("unknown distribution kind `{other}`"))),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown key `{k}` in `{s}`")));
        }
        match kind.trim().to_ascii_lowercase().as_str() {
            "exp" => Ok(Law::Exponential { rate: get(&["mu", "lambda", "rate"])? }),
            "det" => Ok(Law::Deterministic { value: get(&["d"])? }),
            "gauss" => Ok(Law::Gaussian { mean: get(&["mean"])?, var: get(&["var"])? }),
            _ => {
                let k = get(&["k"])?;
                if k < 1.0 || k.fract() != 0.0 || k > u32::MAX as f64 {
                    return Err(Error::Parse(format!("erlang shape must be a positive integer, got {k}")));
                }
                Ok(Law::Erlang { shape: k as u32, rate: get(&["lambda", "rate"])? })
            }
        }
    }
}

/// `E[exp(theta X)]`.
pub fn mgf(dist: &DistributionSpec, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(1.0);
    }
    dist.log_mgf(theta).map(f64::exp)
}

fn require_positive_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        domain(format!("theta must be a positive finite number, got {theta}"))
    }
}

fn require_role(dist: &DistributionSpec, role: Role) -> Result<()> {
    if dist.role() == role {
        Ok(())
    } else {
        domain(format!("{dist} has role {:?}, expected {role:?}", dist.role()))
    }
}

/// Arrival rate parameter `rho_A(-theta)` of iid inter-arrival times.
pub fn rho_arrival(dist: &DistributionSpec, theta: f64) -> Result<f64> {
    require_positive_theta(theta)?;
    require_role(dist, Role::InterArrival)?;
    Ok(-dist.log_mgf(-theta)? / theta)
}

/// Service rate parameter `rho_S(theta)` of iid service times.
pub fn rho_service(dist: &DistributionSpec, theta: f64) -> Result<f64> {
    require_positive_theta(theta)?;
    require_role(dist, Role::ServiceTime)?;
    Ok(dist.log_mgf(theta)? / theta)
}

/// Law of `S / c`: the service time on a server with capacity `c`.
pub fn scale_capacity(dist: &DistributionSpec, c: f64) -> Result<DistributionSpec> {
    if !(c > 0.0 && c.is_finite()) {
        return domain(format!("capacity must be positive, got {c}"));
    }
    let law = match dist.law() {
        Law::Exponential { rate } => Law::Exponential { rate: rate * c },
        Law::Deterministic { value } => Law::Deterministic { value: value / c },
        Law::Gaussian { mean, var } => Law::Gaussian { mean: mean / c, var: var / (c * c) },
        Law::Erlang { shape, rate } => Law::Erlang { shape, rate: rate * c },
    };
    DistributionSpec::new(law, dist.role())
}

/// Arrival parameter of a Bernoulli(`p`) thinned stream: the thinned
/// inter-arrival time is a geometric number of original inter-arrivals.
pub fn thin_random(arrival: &DistributionSpec, p: f64, theta: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return domain(format!("thinning probability must lie in (0, 1], got {p}"));
    }
    if p == 1.0 {
        return rho_arrival(arrival, theta);
    }
    require_positive_theta(theta)?;
    require_role(arrival, Role::InterArrival)?;
    let log_m = arrival.log_mgf(-theta)?;
    // geometric MGF condition: M(-theta) < 1/(1-p)
    let q = (1.0 - p) * log_m.exp();
    if q >= 1.0 {
        return domain(format!(
            "geometric MGF diverges: M(-{theta}) = {} >= 1/(1-p) = {}",
            log_m.exp(),
            1.0 / (1.0 - p)
        ));
    }
    Ok(-(p.ln() + log_m - (-q).ln_1p()) / theta)
}

/// Arrival parameter of a round-robin thinned stream (every `k`-th job).
pub fn thin_deterministic(arrival: &DistributionSpec, k: u32, theta: f64) -> Result<f64> {
    if k == 0 {
        return domain("round-robin thinning needs k >= 1");
    }
    Ok(k as f64 * rho_arrival(arrival, theta)?)
}

/// Upper estimate `(1/theta) ln sum_i E[exp(theta S_i)]` of the rate
/// parameter of `max_i S_i`, the effective split-merge service time.
pub fn split_merge_rho(services: &[DistributionSpec], theta: f64) -> Result<f64> {
    require_positive_theta(theta)?;
    if services.is_empty() {
        return domain("split-merge needs at least one service law");
    }
    let logs = services
        .iter()
        .map(|s| {
            require_role(s, Role::ServiceTime)?;
            s.log_mgf(theta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&logs) / theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `E[exp(-theta A(m,n))] <= exp(-theta (rho (n-m) - sigma))`
    ArrivalLower,
    /// `E[exp(theta S(m,n))] <= exp(theta (rho (n-m+1) + sigma))`
    ServiceUpper,
}

pub type ThetaFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// A `(sigma(theta), rho(theta))` bounding pair over a theta domain `(0, theta_max]`.
#[derive(Clone)]
pub struct SigmaRho {
    direction: Direction,
    sigma: ThetaFn,
    rho: ThetaFn,
    theta_max: f64,
    label: String,
}

impl fmt::Debug for SigmaRho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigmaRho")
            .field("direction", &self.direction)
            .field("theta_max", &self.theta_max)
            .field("label", &self.label)
            .finish()
    }
}

impl SigmaRho {
    pub fn custom(
        direction: Direction,
        sigma: ThetaFn,
        rho: ThetaFn,
        theta_max: f64,
        label: impl Into<String>,
    ) -> Self {
        Self { direction, sigma, rho, theta_max, label: label.into() }
    }

    /// Minimal parameters of iid inter-arrival times (`sigma = 0`).
    pub fn iid_arrival(dist: DistributionSpec) -> Result<Self> {
        require_role(&dist, Role::InterArrival)?;
        Ok(Self::custom(
            Direction::ArrivalLower,
            Arc::new(|_| Ok(0.0)),
            Arc::new(move |t| rho_arrival(&dist, t)),
            f64::INFINITY,
            format!("iid arrivals {dist}"),
        ))
    }

    /// Minimal parameters of iid service times (`sigma = 0`).
    pub fn iid_service(dist: DistributionSpec) -> Result<Self> {
        require_role(&dist, Role::ServiceTime)?;
        Ok(Self::custom(
            Direction::ServiceUpper,
            Arc::new(|_| Ok(0.0)),
            Arc::new(move |t| rho_service(&dist, t)),
            dist.theta_max(),
            format!("iid service {dist}"),
        ))
    }

    pub fn random_thinned_arrival(dist: DistributionSpec, p: f64) -> Result<Self> {
        require_role(&dist, Role::InterArrival)?;
        if !(p > 0.0 && p <= 1.0) {
            return domain(format!("thinning probability must lie in (0, 1], got {p}"));
        }
        Ok(Self::custom(
            Direction::ArrivalLower,
            Arc::new(|_| Ok(0.0)),
            Arc::new(move |t| thin_random(&dist, p, t)),
            f64::INFINITY,
            format!("random thinning p={p} of {dist}"),
        ))
    }

    pub fn round_robin_arrival(dist: DistributionSpec, k: u32) -> Result<Self> {
        require_role(&dist, Role::InterArrival)?;
        if k == 0 {
            return domain("round-robin thinning needs k >= 1");
        }
        Ok(Self::custom(
            Direction::ArrivalLower,
            Arc::new(|_| Ok(0.0)),
            Arc::new(move |t| thin_deterministic(&dist, k, t)),
            f64::INFINITY,
            format!("round-robin thinning k={k} of {dist}"),
        ))
    }

    /// Service parameters of a split-merge system viewed as a single server.
    pub fn split_merge_service(services: Vec<DistributionSpec>) -> Result<Self> {
        if services.is_empty() {
            return domain("split-merge needs at least one service law");
        }
        for s in &services {
            require_role(s, Role::ServiceTime)?;
        }
        let theta_max = services.iter().map(|s| s.theta_max()).fold(f64::INFINITY, f64::min);
        let label = format!("split-merge over {} servers", services.len());
        Ok(Self::custom(
            Direction::ServiceUpper,
            Arc::new(|_| Ok(0.0)),
            Arc::new(move |t| split_merge_rho(&services, t)),
            theta_max,
            label,
        ))
    }

    /// Replaces the burst term, e.g. for non-renewal G|G|1 inputs.
    pub fn with_sigma(mut self, sigma: ThetaFn) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta > 0.0 && theta <= self.theta_max
    }

    fn check_domain(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            domain(format!("theta = {theta} outside (0, {}] for {}", self.theta_max, self.label))
        }
    }

    pub fn rho(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        (self.rho)(theta)
    }

    pub fn sigma(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        (self.sigma)(theta)
    }

    /// Checks the monotonicity of `rho` along an increasing theta grid:
    /// non-decreasing for service, non-increasing for arrivals.
    pub fn check_monotone(&self, grid: &[f64], tol: f64) -> Result<()> {
        let values = grid.iter().map(|&t| self.rho(t)).collect::<Result<Vec<_>>>()?;
        for (w, t) in values.windows(2).zip(grid.windows(2)) {
            let bad = match self.direction {
                Direction::ServiceUpper => w[1] < w[0] - tol,
                Direction::ArrivalLower => w[1] > w[0] + tol,
            };
            if bad {
                return domain(format!("rho of {} not monotone between theta {} and {}", self.label, t[0], t[1]));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn svc(law: Law) -> DistributionSpec {
        DistributionSpec::new(law, Role::ServiceTime).unwrap()
    }
    fn arr(law: Law) -> DistributionSpec {
        DistributionSpec::new(law, Role::InterArrival).unwrap()
    }

    #[test]
    fn mgf_examples() {
        let e1 = svc(Law::Exponential { rate: 1.0 });
        assert_eq!(mgf(&e1, 0.0).unwrap(), 1.0);
        assert!((mgf(&e1, 0.5).unwrap() - 2.0).abs() < 1e-15);
        let d = svc(Law::Deterministic { value: 2.0 });
        assert!((mgf(&d, 0.5).unwrap() - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn mgf_rejects_pole() {
        let e1 = svc(Law::Exponential { rate: 1.0 });
        assert!(matches!(mgf(&e1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(mgf(&e1, 1.0 - 1e-10), Err(Error::Domain(_))));
        assert!(mgf(&e1, 1.0 - 1e-8).is_ok());
    }

    #[test]
    fn rho_arrival_examples() {
        let e = arr(Law::Exponential { rate: 1.0 });
        assert!((rho_arrival(&e, 1e-8).unwrap() - 1.0).abs() < 1e-6);
        let e07 = arr(Law::Exponential { rate: 0.7 });
        let oracle = (1.0 / 0.3) * (10.0f64 / 7.0).ln();
        assert!((rho_arrival(&e07, 0.3).unwrap() - oracle).abs() < 1e-14);
        assert!((rho_arrival(&e07, 0.3).unwrap() - 1.188_916_479_795_774_6).abs() < 1e-12);
        let d = arr(Law::Deterministic { value: 1.25 });
        for t in [1e-3, 0.5, 7.0] {
            assert!((rho_arrival(&d, t).unwrap() - 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_service_examples() {
        let e = svc(Law::Exponential { rate: 1.0 });
        assert!((rho_service(&e, 0.5).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        let g = svc(Law::Gaussian { mean: 1.0, var: 0.25 });
        assert!((rho_service(&g, 0.8).unwrap() - 1.1).abs() < 1e-15);
        for s in [e, g, svc(Law::Erlang { shape: 3, rate: 2.0 })] {
            assert!((rho_service(&s, 1e-8).unwrap() - s.mean()).abs() < 1e-6);
        }
        assert!(matches!(rho_service(&e, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn role_is_enforced() {
        let e = svc(Law::Exponential { rate: 1.0 });
        assert!(rho_arrival(&e, 0.1).is_err());
        assert!(rho_service(&e.with_role(Role::InterArrival), 0.1).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DistributionSpec::exponential(0.0, Role::ServiceTime).is_err());
        assert!(DistributionSpec::deterministic(-1.0, Role::ServiceTime).is_err());
        assert!(DistributionSpec::gaussian(1.0, -0.1, Role::ServiceTime).is_err());
        assert!(DistributionSpec::erlang(0, 1.0, Role::ServiceTime).is_err());
    }

    #[test]
    fn scale_capacity_examples() {
        let e = scale_capacity(&svc(Law::Exponential { rate: 1.0 }), 2.0).unwrap();
        assert_eq!(e.law(), Law::Exponential { rate: 2.0 });
        let d = scale_capacity(&svc(Law::Deterministic { value: 3.0 }), 1.5).unwrap();
        assert_eq!(d.law(), Law::Deterministic { value: 2.0 });
        let g = scale_capacity(&svc(Law::Gaussian { mean: 1.0, var: 1.0 }), 2.0).unwrap();
        assert_eq!(g.law(), Law::Gaussian { mean: 0.5, var: 0.25 });
        assert!(scale_capacity(&g, 0.0).is_err());
    }

    #[test]
    fn thinning_examples() {
        let e4 = arr(Law::Exponential { rate: 4.0 });
        let oracle = -(1.0 / 0.2) * (0.8f64 / (0.8 + 0.2)).ln();
        assert!((thin_random(&e4, 0.2, 0.2).unwrap() - oracle).abs() < 1e-13);
        assert!((thin_random(&e4, 0.2, 0.2).unwrap() - 1.115_717_756_571_048_8).abs() < 1e-12);

        let det_oracle = -(5.0 / 0.2) * (4.0f64 / 4.2).ln();
        let v = thin_deterministic(&e4, 5, 0.2).unwrap();
        assert!((v - det_oracle).abs() < 1e-13);
        assert!((v - 1.219_754_104_235_8).abs() < 1e-12);

        let e1 = arr(Law::Exponential { rate: 1.0 });
        assert!(thin_random(&e1, 0.5, 0.3).unwrap() > rho_arrival(&e1, 0.3).unwrap());
        assert_eq!(thin_deterministic(&e1, 1, 0.3).unwrap(), rho_arrival(&e1, 0.3).unwrap());
        assert!(thin_random(&e1, 0.0, 0.3).is_err());
    }

    #[test]
    fn random_thinning_geometric_condition() {
        // Gaussian inter-arrivals can have M(-theta) > 1 for large theta
        let g = arr(Law::Gaussian { mean: 1.0, var: 1.0 });
        assert!(matches!(thin_random(&g, 0.5, 4.0), Err(Error::Domain(_))));
        assert!(thin_random(&g, 0.5, 0.5).is_ok());
    }

    #[test]
    fn split_merge_examples() {
        let e = svc(Law::Exponential { rate: 1.0 });
        assert!((split_merge_rho(&[e], 0.5).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((split_merge_rho(&[e, e], 0.5).unwrap() - 2.0 * 4f64.ln()).abs() < 1e-14);
        let one = split_merge_rho(&[e], 0.3).unwrap();
        for k in 2..6 {
            let v = split_merge_rho(&vec![e; k], 0.3).unwrap();
            assert!((v - one - (k as f64).ln() / 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = svc(Law::Deterministic { value: 1.25 });
        assert!((0..10).all(|_| d.sample(&mut rng) == 1.25));

        let erlang = svc(Law::Erlang { shape: 3, rate: 1.0 });
        let e1 = svc(Law::Exponential { rate: 1.0 });
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = a.clone();
        let x = erlang.sample(&mut a);
        let y: f64 = (0..3).map(|_| e1.sample(&mut b)).sum();
        assert_eq!(x, y);
    }

    #[test]
    fn exponential_sample_mean() {
        let e1 = svc(Law::Exponential { rate: 1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000_000;
        let mean = (0..n).map(|_| e1.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn gaussian_draws_truncated() {
        let g = svc(Law::Gaussian { mean: 0.0, var: 1.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..10_000).all(|_| g.sample(&mut rng) >= 0.0));
        assert_eq!(g.inverse_cdf(0.1), 0.0);
    }

    #[test]
    fn parse_literals() {
        let cases = [
            ("exp:mu=1", Law::Exponential { rate: 1.0 }),
            ("exp:lambda=0.7", Law::Exponential { rate: 0.7 }),
            ("det:d=1.25", Law::Deterministic { value: 1.25 }),
            ("gauss:mean=1,var=0.25", Law::Gaussian { mean: 1.0, var: 0.25 }),
            ("erlang:k=3,lambda=1", Law::Erlang { shape: 3, rate: 1.0 }),
        ];
        for (s, law) in cases {
            assert_eq!(s.parse::<Law>().unwrap(), law, "{s}");
        }
        for bad in ["exp", "exp:mu", "exp:mu=x", "foo:a=1", "erlang:k=2.5,lambda=1", "det:mu=1"] {
            assert!(matches!(bad.parse::<Law>(), Err(Error::Parse(_))), "{bad}");
        }
        assert!(DistributionSpec::parse("exp:mu=-1", Role::ServiceTime).is_err());
    }

    #[test]
    fn sigma_rho_domain_is_enforced() {
        let sr = SigmaRho::iid_service(svc(Law::Exponential { rate: 1.0 })).unwrap();
        assert!(sr.rho(0.5).is_ok());
        assert!(sr.rho(0.0).is_err());
        assert!(sr.rho(1.0).is_err());
        assert_eq!(sr.sigma(0.5).unwrap(), 0.0);
        let grid: Vec<f64> = (1..100).map(|i| i as f64 * 0.0099).collect();
        sr.check_monotone(&grid, 1e-12).unwrap();
        let a = SigmaRho::iid_arrival(arr(Law::Exponential { rate: 0.7 })).unwrap();
        a.check_monotone(&grid, 1e-12).unwrap();
        assert!(SigmaRho::iid_arrival(svc(Law::Exponential { rate: 1.0 })).is_err());
    }
}
