//! Waiting and sojourn time bounds for fork-join systems of parallel FIFO
//! servers, plus the capacity and rate allocations used for load balancing.
//!
//! For server `i` with free parameter `theta_i` the sojourn time bound is
//!
//! ```text
//! P[T(n) > tau] <= sum_i alpha_i * exp(theta_i rho_Si(theta_i)) * exp(-theta_i tau)
//! ```
//!
//! where `alpha_i = 1` for iid (GI|GI|1) inputs under `rho_Si <= rho_A`, and
//! `alpha_i = exp(theta (sigma_A + sigma_Si)) / (1 - exp(-theta (rho_A - rho_Si)))`
//! for general (G|G|1) inputs under the strict inequality. No independence
//! between the parallel servers is assumed.

use std::collections::BTreeSet;

use crate::error::{domain, Error, Result};
use crate::models::{Direction, DistributionSpec, Role, SigmaRho};
use crate::numeric::{bisect_last_ok, grid_golden_min, invert_decreasing};

/// Minimum gap `rho_A - rho_S` required on the G|G|1 branch, keeping clear of the alpha pole.
pub const GG1_MARGIN: f64 = 1e-9;
/// Relative slack on the GI|GI|1 condition `rho_S <= rho_A`, absorbing rounding at the boundary.
pub const GI_SLACK: f64 = 1e-12;
/// Largest theta considered when the stability condition never binds (e.g. deterministic laws).
pub const THETA_CAP: f64 = 1e4;

const THETA_PROBE: f64 = 1e-9;
const ADMISSIBLE_SCAN: usize = 256;

#[derive(Debug, Clone)]
pub struct ServerSpec {
    pub arrival: SigmaRho,
    pub service: SigmaRho,
    /// `true` selects the GI|GI|1 branch (`alpha = 1`), `false` the G|G|1 branch.
    pub iid: bool,
}

impl ServerSpec {
    pub fn new(arrival: SigmaRho, service: SigmaRho, iid: bool) -> Result<Self> {
        if arrival.direction() != Direction::ArrivalLower {
            return domain(format!("{} is not an arrival characterization", arrival.label()));
        }
        if service.direction() != Direction::ServiceUpper {
            return domain(format!("{} is not a service characterization", service.label()));
        }
        Ok(Self { arrival, service, iid })
    }

    /// Server fed by iid inter-arrival and iid service laws.
    pub fn from_laws(arrival: DistributionSpec, service: DistributionSpec, iid: bool) -> Result<Self> {
        Self::new(SigmaRho::iid_arrival(arrival)?, SigmaRho::iid_service(service)?, iid)
    }

    /// M|M|1 server with arrival rate `lambda` and service rate `mu`.
    pub fn mm1(lambda: f64, mu: f64) -> Result<Self> {
        Self::from_laws(
            DistributionSpec::exponential(lambda, Role::InterArrival)?,
            DistributionSpec::exponential(mu, Role::ServiceTime)?,
            true,
        )
    }

    pub fn with_iid(mut self, iid: bool) -> Self {
        self.iid = iid;
        self
    }

    pub fn theta_sup(&self) -> f64 {
        self.arrival.theta_max().min(self.service.theta_max())
    }

    /// `rho_A(-theta) - rho_S(theta)`.
    pub fn gap(&self, theta: f64) -> Result<f64> {
        Ok(self.arrival.rho(theta)? - self.service.rho(theta)?)
    }

    pub fn is_admissible(&self, theta: f64) -> bool {
        match (self.arrival.rho(theta), self.service.rho(theta)) {
            (Ok(ra), Ok(rs)) => {
                let gap = ra - rs;
                if self.iid {
                    gap >= -GI_SLACK * ra.abs().max(1.0)
                } else {
                    gap >= GG1_MARGIN
                }
            }
            _ => false,
        }
    }

    /// Prefactor `alpha(theta)`; 1 on the GI|GI|1 branch.
    pub fn alpha(&self, theta: f64) -> Result<f64> {
        self.check(theta)?;
        if self.iid {
            return Ok(1.0);
        }
        Ok(self.log_alpha_unchecked(theta)?.exp())
    }

    fn log_alpha_unchecked(&self, theta: f64) -> Result<f64> {
        if self.iid {
            return Ok(0.0);
        }
        let burst = self.arrival.sigma(theta)? + self.service.sigma(theta)?;
        let gap = self.gap(theta)?;
        Ok(theta * burst - (-(-theta * gap).exp()).ln_1p())
    }

    fn check(&self, theta: f64) -> Result<()> {
        if !(self.arrival.contains(theta) && self.service.contains(theta)) {
            return domain(format!(
                "theta = {theta} outside the domain (0, {}] of {} / {}",
                self.theta_sup(),
                self.arrival.label(),
                self.service.label()
            ));
        }
        // surface model-specific domain errors (e.g. geometric MGF condition)
        self.gap(theta)?;
        if !self.is_admissible(theta) {
            return Err(Error::Stability(format!(
                "theta = {theta} violates rho_S <= rho_A{} ({} vs {})",
                if self.iid { "" } else { " strictly" },
                self.service.label(),
                self.arrival.label()
            )));
        }
        Ok(())
    }

    /// Admissible interval `[theta_lo, theta_hi]`. It reaches down to zero for
    /// iid fork-join servers; split-merge service, whose `rho_S` grows like
    /// `ln k / theta` near zero, lifts `theta_lo`.
    pub fn admissible_range(&self) -> Result<(f64, f64)> {
        let sup = self.theta_sup();
        let top = if sup.is_finite() { sup } else { THETA_CAP };
        let probe = THETA_PROBE.min(0.5 * top);
        let ok = |t: f64| self.is_admissible(t);
        let grid: Vec<f64> =
            (0..=ADMISSIBLE_SCAN).map(|i| probe * (top / probe).powf(i as f64 / ADMISSIBLE_SCAN as f64)).collect();
        let (Some(first), Some(last)) = (grid.iter().position(|&t| ok(t)), grid.iter().rposition(|&t| ok(t))) else {
            return Err(Error::Stability(format!(
                "no admissible theta: {} cannot keep up with {}",
                self.service.label(),
                self.arrival.label()
            )));
        };
        let lo = if first == 0 { probe } else { bisect_last_ok(|t| !ok(t), grid[first - 1], grid[first]) };
        let hi = if last == ADMISSIBLE_SCAN { top } else { bisect_last_ok(ok, grid[last], grid[last + 1]) };
        Ok((lo, hi))
    }

    /// Largest admissible theta.
    pub fn max_admissible_theta(&self) -> Result<f64> {
        Ok(self.admissible_range()?.1)
    }
}

/// One exponential term `alpha * exp(-theta (tau - shift))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm {
    pub alpha: f64,
    pub theta: f64,
    pub shift: f64,
}

impl TailTerm {
    pub fn eval(&self, tau: f64) -> f64 {
        self.alpha * (-self.theta * (tau - self.shift)).exp()
    }
}

/// A finite sum of exponential tail terms bounding `P[X > tau]` for `tau >= valid_from`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailBound {
    pub terms: Vec<TailTerm>,
    pub valid_from: f64,
}

impl TailBound {
    /// Terms with identical decay and shift are merged by adding prefactors.
    pub fn new(terms: Vec<TailTerm>, valid_from: f64) -> Self {
        let mut merged: Vec<TailTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged
                .iter_mut()
                .find(|m| m.theta.to_bits() == t.theta.to_bits() && m.shift.to_bits() == t.shift.to_bits())
            {
                Some(m) => m.alpha += t.alpha,
                None => merged.push(t),
            }
        }
        Self { terms: merged, valid_from }
    }

    pub fn eval_raw(&self, tau: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(tau)).sum()
    }

    /// Bound on the probability, clamped to 1.
    pub fn eval(&self, tau: f64) -> f64 {
        self.eval_raw(tau).min(1.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|t| TailTerm { alpha: t.alpha * factor, ..*t }).collect(),
            valid_from: self.valid_from,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        domain(format!("eps must lie in (0, 1), got {eps}"))
    }
}

/// Smallest `tau` with `bound(tau) <= eps`.
pub fn quantile(bound: &TailBound, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    match bound.terms.as_slice() {
        [] => Ok(bound.valid_from),
        [t] => Ok((t.shift + (t.alpha / eps).ln() / t.theta).max(bound.valid_from)),
        terms => {
            let n = terms.len() as f64;
            let hi =
                terms.iter().map(|t| t.shift + (n * t.alpha / eps).ln() / t.theta).fold(bound.valid_from, f64::max);
            invert_decreasing(|x| bound.eval_raw(x), eps, bound.valid_from, hi)
                .ok_or_else(|| Error::Infeasible("tail bound does not fall below eps".into()))
        }
    }
}

fn build_terms(servers: &[ServerSpec], thetas: &[f64], with_service_shift: bool) -> Result<TailBound> {
    if servers.is_empty() {
        return domain("need at least one server");
    }
    if servers.len() != thetas.len() {
        return Err(Error::Shape(format!("{} servers but {} theta values", servers.len(), thetas.len())));
    }
    let terms = servers
        .iter()
        .zip(thetas)
        .map(|(s, &theta)| {
            let alpha = s.alpha(theta)?;
            let shift = if with_service_shift { s.service.rho(theta)? } else { 0.0 };
            Ok(TailTerm { alpha, theta, shift })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TailBound::new(terms, 0.0))
}

/// Sojourn time bound `sum_i alpha_i exp(theta_i rho_Si) exp(-theta_i tau)`.
pub fn sojourn_bound(servers: &[ServerSpec], thetas: &[f64]) -> Result<TailBound> {
    build_terms(servers, thetas, true)
}

/// Waiting time bound `sum_i alpha_i exp(-theta_i tau)`.
pub fn waiting_bound(servers: &[ServerSpec], thetas: &[f64]) -> Result<TailBound> {
    build_terms(servers, thetas, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Minimize the per-server sojourn tail term at `tau`.
    TailAt(f64),
    /// Minimize the per-server sojourn quantile at violation probability `eps`.
    QuantileAt(f64),
    /// Minimize the expected sojourn time bound of `servers` homogeneous servers.
    ExpectedSojourn { servers: u32 },
}

fn objective_value(server: &ServerSpec, objective: Objective, theta: f64) -> Result<f64> {
    let rho_s = server.service.rho(theta)?;
    let log_alpha = server.log_alpha_unchecked(theta)?;
    Ok(match objective {
        Objective::TailAt(tau) => log_alpha + theta * rho_s - theta * tau,
        Objective::QuantileAt(eps) => rho_s + (log_alpha - eps.ln()) / theta,
        Objective::ExpectedSojourn { servers } => rho_s + ((servers.max(1) as f64).ln() + log_alpha + 1.0) / theta,
    })
}

/// Free parameter minimizing the server's bound term for `objective`.
///
/// The admissible interval, cut at `theta* 1e-6` from below, is scanned on a
/// log-spaced grid and the best cell is refined by golden-section search.
pub fn optimize_theta(server: &ServerSpec, objective: Objective) -> Result<f64> {
    if let Objective::QuantileAt(eps) = objective {
        check_eps(eps)?;
    }
    let (lo, hi) = server.admissible_range()?;
    let lo = lo.max(hi * 1e-6);
    let (theta, value) = grid_golden_min(
        |t| {
            if server.is_admissible(t) {
                objective_value(server, objective, t).unwrap_or(f64::INFINITY)
            } else {
                f64::INFINITY
            }
        },
        lo,
        hi,
        64,
        true,
    );
    if !value.is_finite() {
        return Err(Error::Stability("objective is unbounded on the admissible interval".into()));
    }
    Ok(theta)
}

/// A sojourn bound together with the free parameters it was evaluated at.
#[derive(Debug, Clone)]
pub struct OptimizedBound {
    pub bound: TailBound,
    pub thetas: Vec<f64>,
    pub alphas: Vec<f64>,
}

/// Optimizes each server's theta independently, then assembles the sojourn bound.
///
/// For `QuantileAt(eps)` each server targets `eps / k`, the even split of the
/// union bound across `k` servers.
pub fn optimized_sojourn_bound(servers: &[ServerSpec], objective: Objective) -> Result<OptimizedBound> {
    let per_server = match objective {
        Objective::QuantileAt(eps) => Objective::QuantileAt(eps / servers.len().max(1) as f64),
        other => other,
    };
    let thetas = servers.iter().map(|s| optimize_theta(s, per_server)).collect::<Result<Vec<_>>>()?;
    let alphas = servers.iter().zip(&thetas).map(|(s, &t)| s.alpha(t)).collect::<Result<Vec<_>>>()?;
    Ok(OptimizedBound { bound: sojourn_bound(servers, &thetas)?, thetas, alphas })
}

/// Expected sojourn time bound `rho_S + (ln(k alpha) + 1) / theta` for `k`
/// homogeneous servers.
pub fn expected_sojourn(k: u32, rho_s: f64, theta: f64, alpha: f64) -> Result<f64> {
    if k == 0 {
        return domain("k must be at least 1");
    }
    if !(theta > 0.0) {
        return domain(format!("theta must be positive, got {theta}"));
    }
    let ka = k as f64 * alpha;
    if !(ka >= 1.0) {
        return domain(format!("k * alpha = {ka} < 1"));
    }
    Ok(rho_s + (ka.ln() + 1.0) / theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Equal mean utilization across servers.
    MeanBalanced,
    /// Equal tail decay (or equal rate parameter) across servers.
    TailBalanced,
}

/// Capacities `c_i` or arrival rates `lambda_i` assigned to parallel servers.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub values: Vec<f64>,
    pub strategy: Strategy,
    /// Servers left without load by tail-balanced water-filling.
    pub excluded: BTreeSet<usize>,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn require_positive_list(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return domain(format!("{what}: empty list"));
    }
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return domain(format!("{what}: values must be positive, got {x}"));
    }
    Ok(())
}

/// Capacity proportional to mean service requirement; equalizes utilization.
pub fn allocate_capacity_mean(service_means: &[f64], total_c: f64) -> Result<Allocation> {
    require_positive_list(service_means, "service means")?;
    if !(total_c > 0.0 && total_c.is_finite()) {
        return domain(format!("total capacity must be positive, got {total_c}"));
    }
    let sum: f64 = service_means.iter().sum();
    Ok(Allocation {
        values: service_means.iter().map(|m| total_c * m / sum).collect(),
        strategy: Strategy::MeanBalanced,
        excluded: BTreeSet::new(),
    })
}

/// Minimal capacities giving every Gaussian server the same rate parameter
/// `R = eta_A - (theta/2) var_A` at a common decay `theta`.
///
/// Per server, `x = 1/c` is the positive root of `(theta var/2) x^2 + eta x - R = 0`.
pub fn allocate_capacity_tail(services: &[(f64, f64)], arrival: (f64, f64), theta: f64) -> Result<Allocation> {
    if services.is_empty() {
        return domain("need at least one server");
    }
    if !(theta > 0.0) {
        return domain(format!("theta must be positive, got {theta}"));
    }
    let (eta_a, var_a) = arrival;
    let r = eta_a - 0.5 * theta * var_a;
    if !(r > 0.0) {
        return Err(Error::Infeasible(format!("arrival rate parameter {r} <= 0 at theta = {theta}")));
    }
    let values = services
        .iter()
        .map(|&(eta, var)| {
            if !(eta > 0.0) || var < 0.0 {
                return domain(format!("invalid gaussian service ({eta}, {var})"));
            }
            // stable form of (-eta + sqrt(eta^2 + 2 theta var R)) / (theta var)
            let x = 2.0 * r / (eta + (eta * eta + 2.0 * theta * var * r).sqrt());
            Ok(1.0 / x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Allocation { values, strategy: Strategy::TailBalanced, excluded: BTreeSet::new() })
}

fn check_split(mus: &[f64], lambda: f64) -> Result<f64> {
    require_positive_list(mus, "service rates")?;
    if !(lambda > 0.0) {
        return domain(format!("arrival rate must be positive, got {lambda}"));
    }
    let total: f64 = mus.iter().sum();
    if lambda >= total {
        return Err(Error::Infeasible(format!("arrival rate {lambda} >= total service rate {total}")));
    }
    Ok(total)
}

/// Thinning rates `lambda_i = lambda mu_i / sum mu` (equal utilization).
pub fn split_rates_mean(mus: &[f64], lambda: f64) -> Result<Allocation> {
    let total = check_split(mus, lambda)?;
    Ok(Allocation {
        values: mus.iter().map(|mu| lambda * mu / total).collect(),
        strategy: Strategy::MeanBalanced,
        excluded: BTreeSet::new(),
    })
}

/// Water-filling rates giving all loaded M|M|1 servers the same maximal
/// decay `mu_i - lambda_i`; servers that would get a negative rate are
/// excluded and the step repeats.
pub fn split_rates_tail(mus: &[f64], lambda: f64) -> Result<Allocation> {
    check_split(mus, lambda)?;
    let mut excluded = BTreeSet::new();
    loop {
        let active: Vec<usize> = (0..mus.len()).filter(|i| !excluded.contains(i)).collect();
        let slack = (active.iter().map(|&i| mus[i]).sum::<f64>() - lambda) / active.len() as f64;
        let negative: Vec<usize> = active.iter().copied().filter(|&i| mus[i] - slack < 0.0).collect();
        if negative.is_empty() {
            let values = (0..mus.len()).map(|i| if excluded.contains(&i) { 0.0 } else { mus[i] - slack }).collect();
            return Ok(Allocation { values, strategy: Strategy::TailBalanced, excluded });
        }
        excluded.extend(negative);
    }
}

/// Servers fed by random thinning of `arrival` according to `rates`, one per
/// loaded server; servers with zero rate carry no traffic and are skipped.
pub fn thinned_servers(
    arrival: DistributionSpec,
    services: &[DistributionSpec],
    rates: &Allocation,
) -> Result<Vec<ServerSpec>> {
    if services.len() != rates.values.len() {
        return Err(Error::Shape(format!("{} services but {} rates", services.len(), rates.values.len())));
    }
    let total = rates.total();
    services
        .iter()
        .zip(&rates.values)
        .filter(|(_, &r)| r > 0.0)
        .map(|(s, &r)| {
            ServerSpec::new(
                SigmaRho::random_thinned_arrival(arrival, (r / total).min(1.0))?,
                SigmaRho::iid_service(*s)?,
                true,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1(l: f64, m: f64) -> ServerSpec {
        ServerSpec::mm1(l, m).unwrap()
    }

    #[test]
    fn mm1_single_server_sojourn() {
        let b = sojourn_bound(&[mm1(0.7, 1.0)], &[0.3]).unwrap();
        let oracle = (1.0 / 0.7) * (-0.3f64 * 20.0).exp();
        assert!((b.eval(20.0) - oracle).abs() < 1e-15);
        assert!((b.eval(20.0) - 0.003_541_074_538_094_8).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_union_doubles() {
        let one = sojourn_bound(&[mm1(0.7, 1.0)], &[0.3]).unwrap();
        let two = sojourn_bound(&[mm1(0.7, 1.0), mm1(0.7, 1.0)], &[0.3, 0.3]).unwrap();
        for tau in [5.0, 12.5, 40.0] {
            assert!((two.eval_raw(tau) - 2.0 * one.eval_raw(tau)).abs() <= 1e-15 * two.eval_raw(tau));
        }
    }

    #[test]
    fn gg1_branch_dominates_gi() {
        let gi = sojourn_bound(&[mm1(0.7, 1.0)], &[0.15]).unwrap();
        let gg = sojourn_bound(&[mm1(0.7, 1.0).with_iid(false)], &[0.15]).unwrap();
        assert!(gg.terms[0].alpha > 1.0);
        for tau in [0.0, 3.0, 30.0, 90.0] {
            assert!(gg.eval_raw(tau) > gi.eval_raw(tau));
        }
    }

    #[test]
    fn waiting_examples() {
        let w = waiting_bound(&[mm1(0.7, 1.0)], &[0.3]).unwrap();
        assert_eq!(w.eval(0.0), 1.0);
        assert!((w.eval(7.0) - (-2.1f64).exp()).abs() < 1e-15);
        let s = sojourn_bound(&[mm1(0.7, 1.0)], &[0.3]).unwrap();
        for tau in [0.0, 1.0, 10.0] {
            assert!(w.eval_raw(tau) <= s.eval_raw(tau));
        }
        let three = vec![mm1(0.5, 1.0); 3];
        let w3 = waiting_bound(&three, &[0.5; 3]).unwrap();
        assert!((w3.eval(10.0) - 3.0 * (-5.0f64).exp()).abs() < 1e-15);
        assert!((w3.eval(10.0) - 0.020_213_840_997_256_4).abs() < 1e-12);
    }

    #[test]
    fn bound_errors() {
        assert!(matches!(sojourn_bound(&[mm1(0.7, 1.0)], &[0.31]), Err(Error::Stability(_))));
        assert!(matches!(sojourn_bound(&[mm1(0.7, 1.0)], &[1.2]), Err(Error::Domain(_))));
        assert!(matches!(sojourn_bound(&[mm1(0.7, 1.0)], &[0.1, 0.1]), Err(Error::Shape(_))));
        assert!(matches!(mm1(1.0, 0.9).max_admissible_theta(), Err(Error::Stability(_))));
        assert!(matches!(
            optimize_theta(&mm1(1.2, 1.0), Objective::ExpectedSojourn { servers: 1 }),
            Err(Error::Stability(_))
        ));
    }

    #[test]
    fn optimize_mm1_boundary() {
        let t = optimize_theta(&mm1(0.7, 1.0), Objective::TailAt(100.0)).unwrap();
        assert!((t - 0.3).abs() < 1e-6, "theta {t}");
    }

    #[test]
    fn optimize_dm1_root() {
        let s = ServerSpec::from_laws(
            DistributionSpec::deterministic(1.25, Role::InterArrival).unwrap(),
            DistributionSpec::exponential(1.0, Role::ServiceTime).unwrap(),
            true,
        )
        .unwrap();
        // oracle: bisection on (1/t) ln(1/(1-t)) = 1.25
        let (mut lo, mut hi) = (1e-6f64, 1.0 - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if -(1.0 - mid).ln() / mid <= 1.25 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let t = optimize_theta(&s, Objective::TailAt(100.0)).unwrap();
        assert!((t - lo).abs() < 1e-9, "theta {t} vs {lo}");
        assert!((t - 0.371_370_203_503_053).abs() < 1e-9);
    }

    #[test]
    fn optimize_gg1_is_interior() {
        let s = mm1(0.7, 1.0).with_iid(false);
        let sup = s.max_admissible_theta().unwrap();
        for obj in [Objective::TailAt(50.0), Objective::QuantileAt(1e-6), Objective::ExpectedSojourn { servers: 1 }] {
            let t = optimize_theta(&s, obj).unwrap();
            assert!(t > 0.0 && t < sup - 1e-6, "{obj:?}: {t} vs {sup}");
            assert!(s.is_admissible(t));
        }
    }

    #[test]
    fn quantile_examples() {
        let b = TailBound::new(vec![TailTerm { alpha: 1.0 / 0.7, theta: 0.3, shift: 0.0 }], 0.0);
        let q = quantile(&b, 1e-6).unwrap();
        assert!((q - ((1.0f64 / 0.7).ln() + 1e6f64.ln()) / 0.3).abs() < 1e-12);
        assert!((q - 47.240_618_339_676_69).abs() < 1e-9);
        let e5 = b.eval(5.0);
        assert!((quantile(&b, e5).unwrap() - 5.0).abs() < 1e-9);
        assert!(quantile(&b, 0.0).is_err());
        assert!(quantile(&b, 1.0).is_err());
    }

    #[test]
    fn heterogeneous_quantile_by_bisection() {
        let b = TailBound::new(
            vec![TailTerm { alpha: 2.0, theta: 0.3, shift: 1.0 }, TailTerm { alpha: 1.0, theta: 0.7, shift: 0.0 }],
            0.0,
        );
        let q = quantile(&b, 1e-4).unwrap();
        assert!((b.eval_raw(q) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn expected_sojourn_examples() {
        let rho = 2.0 * 2f64.ln();
        let e1 = expected_sojourn(1, rho, 0.5, 1.0).unwrap();
        let e4 = expected_sojourn(4, rho, 0.5, 1.0).unwrap();
        assert!((e1 - 3.386_294_361_119_891).abs() < 1e-12);
        assert!((e4 - 6.158_883_083_359_672).abs() < 1e-12);
        assert!((e4 - e1 - 4f64.ln() / 0.5).abs() < 1e-12);
        assert!(expected_sojourn(1, rho, 0.5, 0.5).is_err());
    }

    #[test]
    fn capacity_allocations() {
        let a = allocate_capacity_mean(&[1.0, 1.0], 2.0).unwrap();
        assert_eq!(a.values, vec![1.0, 1.0]);
        let b = allocate_capacity_mean(&[1.0, 2.0], 3.0).unwrap();
        assert!((b.values[0] - 1.0).abs() < 1e-15 && (b.values[1] - 2.0).abs() < 1e-15);
        assert!((b.total() - 3.0).abs() < 1e-9);
        assert!(allocate_capacity_mean(&[1.0, 0.0], 3.0).is_err());

        let t = allocate_capacity_tail(&[(1.0, 1.0)], (2.5, 1.0), 1.0).unwrap();
        assert!((1.0 / t.values[0] - (5f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((t.values[0] - 0.809_016_994_374_947_4).abs() < 1e-12);
        let lin = allocate_capacity_tail(&[(1.5, 0.0)], (2.0, 0.0), 0.7).unwrap();
        assert!((lin.values[0] - 1.5 / 2.0).abs() < 1e-15);
        let twin = allocate_capacity_tail(&[(1.0, 0.3), (1.0, 0.3)], (2.0, 0.2), 0.4).unwrap();
        assert_eq!(twin.values[0], twin.values[1]);
        assert!(matches!(allocate_capacity_tail(&[(1.0, 1.0)], (1.0, 4.0), 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rate_splits() {
        let a = split_rates_mean(&[1.0, 1.0], 0.8).unwrap();
        assert_eq!(a.values, vec![0.4, 0.4]);
        let b = split_rates_mean(&[1.0, 0.5], 0.6).unwrap();
        assert!((b.values[0] - 0.4).abs() < 1e-15 && (b.values[1] - 0.2).abs() < 1e-15);

        let c = split_rates_tail(&[1.0, 0.5], 0.8).unwrap();
        assert!((c.values[0] - 0.65).abs() < 1e-15 && (c.values[1] - 0.15).abs() < 1e-15);
        assert!(c.excluded.is_empty());
        let d = split_rates_tail(&[1.0, 0.2], 0.3).unwrap();
        assert!((d.values[0] - 0.3).abs() < 1e-15);
        assert_eq!(d.values[1], 0.0);
        assert_eq!(d.excluded.iter().copied().collect::<Vec<_>>(), vec![1]);

        let homo = [0.9, 0.9, 0.9];
        let m = split_rates_mean(&homo, 1.2).unwrap();
        let t = split_rates_tail(&homo, 1.2).unwrap();
        for (x, y) in m.values.iter().zip(&t.values) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(split_rates_mean(&[1.0], 1.0), Err(Error::Infeasible(_))));
        assert!(matches!(split_rates_tail(&[0.5, 0.4], 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn split_merge_admissible_interval_is_lifted_from_zero() {
        let arrival = SigmaRho::iid_arrival(DistributionSpec::exponential(0.1, Role::InterArrival).unwrap()).unwrap();
        let s = DistributionSpec::exponential(1.0, Role::ServiceTime).unwrap();
        let server = ServerSpec::new(arrival, SigmaRho::split_merge_service(vec![s, s]).unwrap(), true).unwrap();
        let (lo, hi) = server.admissible_range().unwrap();
        // 2 / (1 - theta) <= (0.1 + theta) / 0.1
        let root = 41f64.sqrt();
        assert!((lo - (9.0 - root) / 20.0).abs() < 1e-9, "{lo}");
        assert!((hi - (9.0 + root) / 20.0).abs() < 1e-9, "{hi}");
        let t = optimize_theta(&server, Objective::QuantileAt(1e-3)).unwrap();
        assert!(t >= lo && t <= hi);
    }
}
