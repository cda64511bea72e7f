//! End-to-end bounds for `h` homogeneous fork-join stages in tandem.
//!
//! Each stage satisfies a statistical service curve with profile `eps_stg`.
//! To chain stages the per-job guarantee is turned into a sample-path
//! guarantee by paying a slack `delta` per job,
//!
//! ```text
//! eps_stg^delta(tau) = sum_{j=1}^{m} eps_stg(tau + delta j)  <=  k exp(-theta tau) / (theta delta),
//! ```
//!
//! and with `delta = beta / h` the end-to-end sojourn time satisfies
//!
//! ```text
//! P[T > beta + tau_A + h (rho_S + tau_S + ln(h^2 k / (theta beta)) / theta)]
//!     <= exp(-theta_A tau_A) + exp(-theta tau_S),
//! ```
//!
//! provided `rho_S(theta) + beta <= rho_A(-theta_A)`. The bound grows as
//! `O(h ln(h k))`.

use crate::envelope::{arrival_theta_for_rate, envelope_from_iid, optimize_split, Envelope, ErrorProfile};
use crate::error::{domain, Error, Result};
use crate::models::{rho_service, Direction, DistributionSpec, Role};
use crate::numeric::{bisect_last_ok, grid_golden_min};

pub use crate::envelope::Horizon;

#[derive(Debug, Clone)]
pub struct StageSpec {
    pub k: u32,
    pub rho_s: f64,
    pub theta_s: f64,
    pub stage_profile: ErrorProfile,
}

impl StageSpec {
    pub fn new(k: u32, rho_s: f64, theta_s: f64, stage_profile: ErrorProfile) -> Result<Self> {
        if k == 0 {
            return domain("a stage needs at least one server");
        }
        if !(theta_s > 0.0) {
            return domain(format!("theta_S must be positive, got {theta_s}"));
        }
        if !rho_s.is_finite() {
            return domain(format!("rho_S must be finite, got {rho_s}"));
        }
        Ok(Self { k, rho_s, theta_s, stage_profile })
    }

    /// `k` iid servers combined by the union bound: `eps_stg = k exp(-theta tau)`.
    pub fn forkjoin_iid(service: &DistributionSpec, k: u32, theta_s: f64) -> Result<Self> {
        let rho_s = rho_service(service, theta_s)?;
        Self::new(k, rho_s, theta_s, ErrorProfile::exponential(theta_s).scaled(k as f64))
    }
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub h: u32,
    pub stage: StageSpec,
    pub arrival: Envelope,
    pub beta: f64,
}

impl NetworkSpec {
    pub fn new(h: u32, stage: StageSpec, arrival: Envelope, beta: f64) -> Result<Self> {
        if h == 0 {
            return domain("need at least one stage");
        }
        if !(beta > 0.0) {
            return domain(format!("beta must be positive, got {beta}"));
        }
        if arrival.direction != Direction::ArrivalLower {
            return domain("network arrivals need an arrival envelope");
        }
        if stage.rho_s + beta > arrival.rate * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "rho_S + beta = {} exceeds arrival rate parameter {}",
                stage.rho_s + beta,
                arrival.rate
            )));
        }
        Ok(Self { h, stage, arrival, beta })
    }

    /// Slack per job, `beta / h`.
    pub fn delta(&self) -> f64 {
        self.beta / self.h as f64
    }

    pub fn with_h(&self, h: u32) -> Result<Self> {
        Self::new(h, self.stage.clone(), self.arrival.clone(), self.beta)
    }
}

/// Sample-path error profile `sum_{j=1}^{m} eps_stg(tau + delta j)`; the
/// infinite horizon of an exponential stage profile uses the integral bound.
pub fn samplepath_profile(stage: &StageSpec, delta: f64, horizon: Horizon) -> Result<ErrorProfile> {
    if !(delta > 0.0) {
        return domain(format!("delta must be positive, got {delta}"));
    }
    Ok(ErrorProfile::SamplePath { stage: Box::new(stage.stage_profile.clone()), delta, horizon })
}

/// End-to-end quantile together with the parameters it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E2eBound {
    pub quantile: f64,
    pub beta: f64,
    pub theta_s: f64,
    pub theta_a: f64,
    pub tau_a: f64,
    pub tau_s: f64,
    pub eps_a: f64,
    pub eps_s: f64,
}

fn e2e_fixed(net: &NetworkSpec, eps: f64) -> Result<E2eBound> {
    let h = net.h as f64;
    let service = samplepath_profile(&net.stage, net.delta(), Horizon::Infinite)?.scaled(h);
    let split = optimize_split(&net.arrival.error_profile, 1.0, &service, h, eps)?;
    Ok(E2eBound {
        quantile: net.beta + h * net.stage.rho_s + split.cost,
        beta: net.beta,
        theta_s: net.stage.theta_s,
        theta_a: f64::NAN,
        tau_a: split.tau_a,
        tau_s: split.tau_s,
        eps_a: split.eps_a,
        eps_s: split.eps_s,
    })
}

/// End-to-end sojourn quantile for fixed `(beta, theta_S)` and arrival
/// envelope; only the error split is optimized.
pub fn e2e_sojourn_quantile(net: &NetworkSpec, eps: f64) -> Result<f64> {
    Ok(e2e_fixed(net, eps)?.quantile)
}

/// Like [`e2e_sojourn_quantile`] but reporting the split.
pub fn e2e_bound(net: &NetworkSpec, eps: f64) -> Result<E2eBound> {
    e2e_fixed(net, eps)
}

/// Tandem of `h` stages, each with `k` iid servers, fed by iid arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkModel {
    pub h: u32,
    pub k: u32,
    pub arrival: DistributionSpec,
    pub service: DistributionSpec,
}

impl NetworkModel {
    pub fn new(h: u32, k: u32, arrival: DistributionSpec, service: DistributionSpec) -> Result<Self> {
        if h == 0 || k == 0 {
            return domain(format!("need h, k >= 1, got h = {h}, k = {k}"));
        }
        if arrival.role() != Role::InterArrival || service.role() != Role::ServiceTime {
            return domain("expected an inter-arrival law and a service law");
        }
        Ok(Self { h, k, arrival, service })
    }

    /// Largest `theta_S` with `rho_S(theta_S)` below the mean inter-arrival time.
    fn theta_s_sup(&self) -> Result<f64> {
        let mean_a = self.arrival.mean();
        let ok = |t: f64| rho_service(&self.service, t).is_ok_and(|r| r < mean_a);
        let probe = 1e-9;
        if !ok(probe) {
            return Err(Error::Infeasible(format!(
                "mean service {} is not below mean inter-arrival time {mean_a}",
                self.service.mean()
            )));
        }
        let top = self.service.theta_max();
        if top.is_finite() {
            return Ok(if ok(top) { top } else { bisect_last_ok(ok, probe, top) });
        }
        let mut hi = 1.0;
        while ok(hi) {
            hi *= 2.0;
            if hi > 1e4 {
                return Ok(hi);
            }
        }
        Ok(bisect_last_ok(ok, probe, hi))
    }

    fn beta_sup(&self, theta_s: f64) -> Result<f64> {
        Ok(self.arrival.mean() - rho_service(&self.service, theta_s)?)
    }

    /// Network at parameters `(theta_S, beta)` with the fastest-decaying
    /// arrival envelope whose rate still covers `rho_S + beta`.
    pub fn network(&self, theta_s: f64, beta: f64) -> Result<(NetworkSpec, f64)> {
        let stage = StageSpec::forkjoin_iid(&self.service, self.k, theta_s)?;
        let theta_a = arrival_theta_for_rate(&self.arrival, 1, stage.rho_s + beta)?;
        let arrival = envelope_from_iid(&self.arrival, theta_a)?;
        Ok((NetworkSpec::new(self.h, stage, arrival, beta)?, theta_a))
    }

    pub fn bound_at(&self, theta_s: f64, beta: f64, eps: f64) -> Result<E2eBound> {
        let (net, theta_a) = self.network(theta_s, beta)?;
        Ok(E2eBound { theta_a, ..e2e_fixed(&net, eps)? })
    }

    /// Midpoint heuristic: `theta_S` halfway to its supremum, `beta` halfway to its.
    pub fn default_parameters(&self) -> Result<(f64, f64)> {
        let theta_s = 0.5 * self.theta_s_sup()?;
        Ok((theta_s, 0.5 * self.beta_sup(theta_s)?))
    }
}

/// Minimizes the end-to-end quantile over `theta_S` (outer) and `beta`
/// (inner) by nested grid-seeded golden-section searches; `theta_A` is tied
/// to the largest value admissible for `rho_S + beta`, and the error split is
/// optimized for every candidate.
pub fn optimize_e2e(model: &NetworkModel, eps: f64) -> Result<E2eBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps must lie in (0, 1), got {eps}"));
    }
    let theta_sup = model.theta_s_sup()?;
    let inner = |theta_s: f64| -> (f64, f64) {
        let Ok(beta_sup) = model.beta_sup(theta_s) else { return (f64::NAN, f64::INFINITY) };
        if !(beta_sup > 0.0) {
            return (f64::NAN, f64::INFINITY);
        }
        grid_golden_min(
            |beta| model.bound_at(theta_s, beta, eps).map_or(f64::INFINITY, |b| b.quantile),
            beta_sup * 1e-6,
            beta_sup * (1.0 - 1e-9),
            32,
            true,
        )
    };
    let (theta_s, best) = grid_golden_min(|t| inner(t).1, theta_sup * 1e-4, theta_sup * (1.0 - 1e-9), 32, true);
    if !best.is_finite() {
        return Err(Error::Infeasible("no admissible (beta, theta_A, theta_S)".into()));
    }
    let (beta, _) = inner(theta_s);
    model.bound_at(theta_s, beta, eps)
}

/// Quantiles over `h` at fixed parameters with the least-squares fit
/// `tau(h) = a * h ln(h^2 k) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCurve {
    pub rows: Vec<(u32, f64)>,
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

pub fn scaling_curve(template: &NetworkSpec, h_values: &[u32], eps: f64) -> Result<ScalingCurve> {
    if h_values.is_empty() {
        return domain("need at least one h value");
    }
    let rows = h_values
        .iter()
        .map(|&h| Ok((h, e2e_sojourn_quantile(&template.with_h(h)?, eps)?)))
        .collect::<Result<Vec<_>>>()?;
    let k = template.stage.k as f64;
    let xs: Vec<f64> = rows.iter().map(|&(h, _)| h as f64 * ((h as f64).powi(2) * k).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (a, b, r_squared) = linear_fit(&xs, &ys);
    Ok(ScalingCurve { rows, a, b, r_squared })
}

/// Ordinary least squares `y = a x + b` with the coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, if syy == 0.0 { 1.0 } else { 0.0 });
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    (a, b, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{quantile, sojourn_bound, ServerSpec};

    fn mm(lambda: f64, mu: f64) -> (DistributionSpec, DistributionSpec) {
        (
            DistributionSpec::exponential(lambda, Role::InterArrival).unwrap(),
            DistributionSpec::exponential(mu, Role::ServiceTime).unwrap(),
        )
    }

    fn exp_stage(k: u32, theta: f64) -> StageSpec {
        StageSpec::new(k, 1.0, theta, ErrorProfile::exponential(theta).scaled(k as f64)).unwrap()
    }

    #[test]
    fn samplepath_examples() {
        let s1 = exp_stage(1, 1.0);
        let p = samplepath_profile(&s1, 1.0, Horizon::Infinite).unwrap();
        assert!((p.eval_raw(0.0) - 1.0).abs() < 1e-15);

        let one = samplepath_profile(&s1, 0.3, Horizon::Finite(1)).unwrap();
        assert!((one.eval_raw(2.0) - s1.stage_profile.eval_raw(2.3)).abs() < 1e-15);

        let s2 = exp_stage(2, 0.5);
        let closed = samplepath_profile(&s2, 0.2, Horizon::Infinite).unwrap().eval_raw(10.0);
        assert!((closed - 2.0 * (-5.0f64).exp() / 0.1).abs() < 1e-15);
        assert!((closed - 0.134_758_939_981_709).abs() < 1e-12);
        let finite = samplepath_profile(&s2, 0.2, Horizon::Finite(200)).unwrap().eval_raw(10.0);
        let direct: f64 = (1..=200).map(|j| 2.0 * (-0.5 * (10.0 + 0.2 * j as f64)).exp()).sum();
        assert!((finite - direct).abs() < 1e-14);
        assert!(finite <= closed);

        assert!(samplepath_profile(&s2, 0.0, Horizon::Infinite).is_err());
    }

    #[test]
    fn closed_form_dominates_finite_sums() {
        let s = exp_stage(3, 0.7);
        for &tau in &[0.0, 1.0, 5.0] {
            for &delta in &[0.01, 0.1, 1.0] {
                let closed = samplepath_profile(&s, delta, Horizon::Infinite).unwrap().eval_raw(tau);
                for &m in &[1u64, 10, 1000] {
                    let f = samplepath_profile(&s, delta, Horizon::Finite(m)).unwrap().eval_raw(tau);
                    assert!(f <= closed, "tau {tau} delta {delta} m {m}");
                }
            }
        }
    }

    #[test]
    fn binomial_stage_series_converges() {
        let stage = StageSpec::new(
            3,
            1.0,
            0.5,
            crate::envelope::forkjoin_stage_profile(3, ErrorProfile::exponential(0.5), true, 2).unwrap(),
        )
        .unwrap();
        let inf = samplepath_profile(&stage, 0.5, Horizon::Infinite).unwrap().eval_raw(4.0);
        let fin = samplepath_profile(&stage, 0.5, Horizon::Finite(5000)).unwrap().eval_raw(4.0);
        assert!((inf - fin).abs() <= 1e-12 * inf);
    }

    #[test]
    fn fixed_parameter_formula() {
        let (a, s) = mm(0.7, 1.0);
        let model = NetworkModel::new(4, 2, a, s).unwrap();
        let b = model.bound_at(0.2, 0.1, 1e-3).unwrap();
        let h = 4.0;
        let t = 0.2;
        let rho_s = (1.0f64 / 0.8).ln() / t;
        // oracle: Lagrange optimum of tau_A + h tau_S for two exponentials
        let u = 1e-3 * t / (t + h * b.theta_a);
        let v = 1e-3 - u;
        let oracle =
            0.1 + (1.0 / u).ln() / b.theta_a + h * (rho_s + (1.0 / v).ln() / t + (h * h * 2.0 / (t * 0.1)).ln() / t);
        assert!((b.quantile - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", b.quantile);
        assert!((b.eps_a + b.eps_s - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn h1_exceeds_single_stage() {
        let (a, s) = mm(0.7, 1.0);
        let model = NetworkModel::new(1, 2, a, s).unwrap();
        let e2e = optimize_e2e(&model, 1e-6).unwrap();
        let servers = vec![ServerSpec::mm1(0.7, 1.0).unwrap(); 2];
        let single_stage = quantile(&sojourn_bound(&servers, &[0.3, 0.3]).unwrap(), 1e-6).unwrap();
        assert!(e2e.quantile > single_stage, "{} vs {single_stage}", e2e.quantile);
    }

    #[test]
    fn doubling_h_more_than_doubles_at_fixed_parameters() {
        let (a, s) = mm(0.7, 1.0);
        let q = |h| NetworkModel::new(h, 2, a, s).unwrap().bound_at(0.2, 0.1, 1e-3).unwrap().quantile;
        assert!(q(8) > 2.0 * q(4));
        assert!(q(16) > 2.0 * q(8));
    }

    #[test]
    fn optimized_quantiles_match_external_search() {
        // oracle: grid plus Nelder-Mead over (theta_S, beta) in scipy
        let (a, s) = mm(0.7, 1.0);
        for (h, oracle) in [(1, 73.891_968_859_673_4), (4, 215.469_822_640_023_75), (8, 397.899_717_519_096_67)] {
            let q = optimize_e2e(&NetworkModel::new(h, 2, a, s).unwrap(), 1e-3).unwrap().quantile;
            assert!(q.is_finite() && q > 0.0);
            assert!((q - oracle).abs() < 1e-6 * oracle, "h {h}: {q} vs {oracle}");
        }
    }

    #[test]
    fn doubling_k_costs_at_most_h_ln2_over_theta() {
        let (a, s) = mm(0.7, 1.0);
        for h in [1u32, 3, 6] {
            let m2 = NetworkModel::new(h, 2, a, s).unwrap();
            let m4 = NetworkModel::new(h, 4, a, s).unwrap();
            let q2 = m2.bound_at(0.15, 0.1, 1e-4).unwrap().quantile;
            let q4 = m4.bound_at(0.15, 0.1, 1e-4).unwrap().quantile;
            assert!(q4 >= q2);
            assert!(q4 - q2 <= h as f64 * 2f64.ln() / 0.15 + 1e-9);
        }
    }

    #[test]
    fn optimizer_beats_midpoint() {
        let (a, s) = mm(0.7, 1.0);
        for (h, k) in [(1, 1), (4, 2), (8, 4)] {
            let m = NetworkModel::new(h, k, a, s).unwrap();
            let (t, b) = m.default_parameters().unwrap();
            let mid = m.bound_at(t, b, 1e-3).unwrap().quantile;
            let opt = optimize_e2e(&m, 1e-3).unwrap().quantile;
            assert!(opt <= mid + 1e-9, "h {h} k {k}: {opt} vs {mid}");
        }
    }

    #[test]
    fn delta_is_beta_over_h() {
        let (a, s) = mm(0.7, 1.0);
        let (net, _) = NetworkModel::new(5, 2, a, s).unwrap().network(0.2, 0.15).unwrap();
        assert_eq!(net.delta(), 0.15 / 5.0);
    }

    #[test]
    fn instability_is_infeasible() {
        let (a, s) = mm(1.0, 0.9);
        assert!(matches!(optimize_e2e(&NetworkModel::new(2, 2, a, s).unwrap(), 1e-3), Err(Error::Infeasible(_))));
        let stage = exp_stage(2, 0.5);
        let arr = Envelope::new(Direction::ArrivalLower, 1.05, ErrorProfile::exponential(0.5)).unwrap();
        assert!(matches!(NetworkSpec::new(2, stage, arr, 0.1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn scaling_is_affine_in_h_ln_h2k() {
        let (a, s) = mm(0.7, 1.0);
        for k in [2, 4] {
            let (net, _) = NetworkModel::new(1, k, a, s).unwrap().network(0.15, 0.1).unwrap();
            let curve = scaling_curve(&net, &[1, 2, 4, 8, 16], 1e-3).unwrap();
            assert!(curve.r_squared > 0.99, "k {k}: {curve:?}");
            assert!(curve.rows.windows(2).all(|w| w[1].1 > w[0].1));
            assert_eq!(curve.rows[0].1, e2e_sojourn_quantile(&net, 1e-3).unwrap());
        }
    }

    #[test]
    fn linear_fit_exact_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
