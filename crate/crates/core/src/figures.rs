//! Data series behind the figure reproductions, as CSV tables.

use std::fmt::Write as _;

use crate::bounds::{
    expected_sojourn, optimize_theta, optimized_sojourn_bound, quantile, sojourn_bound, split_rates_mean,
    split_rates_tail, thinned_servers, Objective, ServerSpec,
};
use crate::envelope::{
    envelope_from_iid, forkjoin_stage_profile, latency_rate_strategies, sojourn_bound_envelopes, Envelope,
    LatencyRateServer,
};
use crate::error::{Error, Result};
use crate::models::{DistributionSpec, Role, SigmaRho};
use crate::numeric::bisect_last_ok;

/// A numeric table with `#`-prefixed metadata, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# forkbound {} {}", env!("CARGO_PKG_VERSION"), self.name);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// The figure families the toolkit reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl Figure {
    pub const ALL: [Figure; 6] = [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig6, Figure::Fig7];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::Parse(format!("unknown figure '{name}' (expected fig2..fig7)")))
    }

    /// Tables for this figure; Fig. 6 has two panels.
    pub fn tables(&self) -> Result<Vec<Table>> {
        Ok(match self {
            Figure::Fig2 => vec![fig2()?],
            Figure::Fig3 => vec![fig3()?],
            Figure::Fig4 => vec![fig4()?],
            Figure::Fig5 => vec![fig5()?],
            Figure::Fig6 => vec![fig6a()?, fig6b()?],
            Figure::Fig7 => vec![fig7()?],
        })
    }
}

fn exp_arrival(lambda: f64) -> Result<DistributionSpec> {
    DistributionSpec::exponential(lambda, Role::InterArrival)
}

fn exp_service(mu: f64) -> Result<DistributionSpec> {
    DistributionSpec::exponential(mu, Role::ServiceTime)
}

/// M|M|1 with mu = 1: exact sojourn tail against the GI|GI|1 bound at
/// `theta = mu - lambda` and the G|G|1 bound optimized per `tau`. Bound
/// columns are unclamped.
pub fn fig2() -> Result<Table> {
    let mut t = Table::new("fig2", &["lambda", "tau", "exact", "gi_bound", "gg1_bound", "gg1_theta"])
        .meta("model", "M|M|1, mu = 1")
        .meta("gi_theta", "mu - lambda");
    for lambda in [0.3, 0.7] {
        let gi = ServerSpec::mm1(lambda, 1.0)?;
        let gg = gi.clone().with_iid(false);
        let theta = 1.0 - lambda;
        let gi_bound = sojourn_bound(&[gi], &[theta])?;
        for i in 0..=100 {
            let tau = 0.5 * i as f64;
            let gg_theta = optimize_theta(&gg, Objective::TailAt(tau))?;
            let gg_bound = sojourn_bound(std::slice::from_ref(&gg), &[gg_theta])?;
            t.push(vec![lambda, tau, (-theta * tau).exp(), gi_bound.eval_raw(tau), gg_bound.eval_raw(tau), gg_theta]);
        }
    }
    Ok(t)
}

/// Fork-join of k M|M|1 servers, mu = 1, at the largest admissible theta:
/// expected sojourn bound and the 1e-6 quantile.
pub fn fig3() -> Result<Table> {
    let eps = 1e-6;
    let mut t = Table::new("fig3", &["lambda", "k", "theta", "expected_bound", "quantile_bound"])
        .meta("model", "fork-join, M|M|1 servers, mu = 1")
        .meta("eps", eps)
        .meta("theta", "largest admissible");
    for lambda in [0.3, 0.5, 0.7] {
        let server = ServerSpec::mm1(lambda, 1.0)?;
        let theta = server.max_admissible_theta()?;
        let rho_s = server.service.rho(theta)?;
        let alpha = server.alpha(theta)?;
        for k in 1..=100u32 {
            let servers = vec![server.clone(); k as usize];
            let q = quantile(&sojourn_bound(&servers, &vec![theta; k as usize])?, eps)?;
            t.push(vec![lambda, k as f64, theta, expected_sojourn(k, rho_s, theta, alpha)?, q]);
        }
    }
    Ok(t)
}

/// Bounds for k servers fed by thinning, with theta optimized per objective.
fn thinned_point(arrival: SigmaRho, k: u32, eps: f64) -> Result<(f64, f64, f64)> {
    let server = ServerSpec::new(arrival, SigmaRho::iid_service(exp_service(1.0)?)?, true)?;
    let servers = vec![server.clone(); k as usize];
    let q = optimized_sojourn_bound(&servers, Objective::QuantileAt(eps))?;
    let te = optimize_theta(&server, Objective::ExpectedSojourn { servers: k })?;
    let e = expected_sojourn(k, server.service.rho(te)?, te, server.alpha(te)?)?;
    Ok((q.thetas[0], e, quantile(&q.bound, eps)?))
}

/// Deterministic (round robin) against random thinning of Poisson(4)
/// arrivals over k M|M|1 servers with resequencing.
pub fn fig4() -> Result<Table> {
    let eps = 1e-3;
    let lambda = 4.0;
    let mut t = Table::new(
        "fig4",
        &["k", "det_theta", "det_expected", "det_quantile", "random_theta", "random_expected", "random_quantile"],
    )
    .meta("model", "thinning and resequencing, lambda = 4, mu = 1")
    .meta("eps", eps)
    .meta("theta", "optimized per objective; *_theta is the quantile optimum");
    let arrival = exp_arrival(lambda)?;
    for k in 5..=30u32 {
        let (dt, de, dq) = thinned_point(SigmaRho::round_robin_arrival(arrival, k)?, k, eps)?;
        let (rt, re, rq) = thinned_point(SigmaRho::random_thinned_arrival(arrival, 1.0 / k as f64)?, k, eps)?;
        t.push(vec![k as f64, dt, de, dq, rt, re, rq]);
    }
    Ok(t)
}

/// Quantile of a random-thinning split of Poisson(lambda) over M|M|1 servers.
pub fn split_quantile(lambda: f64, mus: &[f64], rates: &crate::bounds::Allocation, eps: f64) -> Result<f64> {
    let services = mus.iter().map(|&m| exp_service(m)).collect::<Result<Vec<_>>>()?;
    let servers = thinned_servers(exp_arrival(lambda)?, &services, rates)?;
    let b = optimized_sojourn_bound(&servers, Objective::QuantileAt(eps))?;
    quantile(&b.bound, eps)
}

/// Two servers, mu_1 = 1 and mu_2 in [0.5, 1]: only server one, rates
/// proportional to capacity, and rates equalizing the tail decay.
pub fn fig5() -> Result<Table> {
    let eps = 1e-6;
    let mut t = Table::new("fig5", &["lambda", "mu2", "single", "strategy1", "strategy2"])
        .meta("model", "random thinning over two M|M|1 servers, mu1 = 1")
        .meta("eps", eps)
        .meta("strategy1", "lambda_i proportional to mu_i")
        .meta("strategy2", "equal mu_i - lambda_i with exclusion");
    for lambda in [0.4, 0.8] {
        let single_server = ServerSpec::mm1(lambda, 1.0)?;
        let single = quantile(&optimized_sojourn_bound(&[single_server], Objective::QuantileAt(eps))?.bound, eps)?;
        for i in 0..=20 {
            let mu2 = (20 + i) as f64 / 40.0;
            let mus = [1.0, mu2];
            let s1 = split_quantile(lambda, &mus, &split_rates_mean(&mus, lambda)?, eps)?;
            let s2 = split_quantile(lambda, &mus, &split_rates_tail(&mus, lambda)?, eps)?;
            t.push(vec![lambda, mu2, single, s1, s2]);
        }
    }
    Ok(t)
}

/// Largest `theta` with `rho_S(theta) <= rho_A` for deterministic
/// inter-arrival time `rho_A` and Exp(mu) service.
pub fn dm1_theta(rho_a: f64, mu: f64) -> Result<f64> {
    let service = exp_service(mu)?;
    let ok = |t: f64| crate::models::rho_service(&service, t).is_ok_and(|r| r <= rho_a);
    if !ok(1e-9) {
        return Err(Error::Stability(format!("mean service {} exceeds {rho_a}", 1.0 / mu)));
    }
    Ok(bisect_last_ok(ok, 1e-9, service.theta_max()))
}

fn dm1_envelopes(k: u32, l: u32) -> Result<(Envelope, Envelope)> {
    let theta = dm1_theta(1.25, 1.0)?;
    let arr = envelope_from_iid(&DistributionSpec::deterministic(1.25, Role::InterArrival)?, theta)?;
    let mut srv = envelope_from_iid(&exp_service(1.0)?, theta)?;
    srv.error_profile = forkjoin_stage_profile(k, srv.error_profile, true, l)?;
    Ok((arr, srv))
}

/// Sojourn tail bound `eps_(k,l)(tau - rho_S)` of the D|M|1 (k, l) fork-join.
pub fn kl_sojourn_tail(k: u32, l: u32, tau: f64) -> Result<f64> {
    let (_, srv) = dm1_envelopes(k, l)?;
    Ok(if tau < srv.rate { 1.0 } else { srv.error_profile.eval(tau - srv.rate) })
}

/// Sojourn quantile of the D|M|1 (k, l) fork-join.
pub fn kl_sojourn_quantile(k: u32, l: u32, eps: f64) -> Result<f64> {
    let (arr, srv) = dm1_envelopes(k, l)?;
    sojourn_bound_envelopes(&arr, &srv, eps)
}

/// Tail bounds of (k, 10) fork-join, k in {10, 15}, D|M|1 with rho_A = 1.25.
pub fn fig6a() -> Result<Table> {
    let mut t = Table::new("fig6a", &["k", "l", "tau", "bound_p"])
        .meta("model", "(k,l) fork-join, deterministic arrivals rho_A = 1.25, mu = 1")
        .meta("theta_s", dm1_theta(1.25, 1.0)?);
    for k in [10u32, 15] {
        for i in 0..=120 {
            let tau = 0.5 * i as f64;
            t.push(vec![k as f64, 10.0, tau, kl_sojourn_tail(k, 10, tau)?]);
        }
    }
    Ok(t)
}

/// Quantiles against l for k = l (no redundancy) and k = l + 5.
pub fn fig6b() -> Result<Table> {
    let eps = 1e-6;
    let mut t = Table::new("fig6b", &["l", "k", "quantile"])
        .meta("model", "(k,l) fork-join, deterministic arrivals rho_A = 1.25, mu = 1")
        .meta("eps", eps);
    for l in 1..=20u32 {
        for k in [l, l + 5] {
            t.push(vec![l as f64, k as f64, kl_sojourn_quantile(k, l, eps)?]);
        }
    }
    Ok(t)
}

/// Two latency-rate servers against the tail decay kappa.
pub fn fig7() -> Result<Table> {
    let eps = 1e-6;
    let lambda = 0.7;
    let first = latency_rate_strategies(lambda, LatencyRateServer::new(1.0, 1.0)?, eps)?;
    let mut t = Table::new("fig7", &["kappa", "single", "thinned", "redundant_21"])
        .meta("model", "Poisson(0.7) arrivals, latency-rate servers rho_S = 1")
        .meta("eps", eps)
        .meta("theta_a_single", first.theta_single)
        .meta("theta_a_thinned", first.theta_thinned);
    for i in 0..=50 {
        let kappa = 10f64.powf(-2.0 + 0.1 * i as f64);
        let r = latency_rate_strategies(lambda, LatencyRateServer::new(1.0, kappa)?, eps)?;
        t.push(vec![kappa, r.single, r.thinned, r.redundant_21]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2_ratio_is_mu_over_lambda() {
        let t = fig2().unwrap();
        for r in &t.rows {
            assert!((r[3] / r[2] - 1.0 / r[0]).abs() < 1e-12);
            assert!(r[4] >= r[3]);
        }
    }

    #[test]
    fn fig3_ln_k_steps() {
        let t = fig3().unwrap();
        for w in t.rows.windows(2).filter(|w| w[0][0] == w[1][0]) {
            let (k0, k1, theta) = (w[0][1], w[1][1], w[0][2]);
            assert!(((w[1][4] - w[0][4]) - (k1 / k0).ln() / theta).abs() < 1e-9);
        }
    }

    #[test]
    fn fig4_det_dominates_random() {
        let t = fig4().unwrap();
        for r in &t.rows {
            assert!(r[3].is_finite() && r[6].is_finite());
            assert!(r[3] <= r[6] + 1e-9, "k = {}", r[0]);
            assert!(r[2] <= r[5] + 1e-9, "k = {}", r[0]);
        }
    }

    #[test]
    fn fig5_tail_split_wins() {
        let t = fig5().unwrap();
        for r in &t.rows {
            assert!(r[4] <= r[3] + 1e-9, "{r:?}");
        }
        let homogeneous: Vec<_> = t.rows.iter().filter(|r| r[1] == 1.0).collect();
        assert_eq!(homogeneous.len(), 2);
        for r in homogeneous {
            assert!((r[3] - r[4]).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn fig6b_redundancy_helps() {
        let t = fig6b().unwrap();
        for pair in t.rows.chunks(2) {
            assert!(pair[1][2] < pair[0][2]);
        }
    }

    #[test]
    fn csv_is_stable() {
        let a = fig7().unwrap().to_csv();
        let b = fig7().unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# forkbound "));
        assert!(a.lines().any(|l| l == "kappa,single,thinned,redundant_21"));
    }

    #[test]
    fn parse_names() {
        assert_eq!(Figure::parse("fig5").unwrap(), Figure::Fig5);
        assert!(matches!(Figure::parse("fig9"), Err(Error::Parse(_))));
    }
}
