//! Max-plus trajectory simulation.
//!
//! A lossless FIFO server with arrivals `A(n)` and service times `S(n)` has
//! departures `D(n) = max(A(n), D(n-1)) + S(n)`, which equals
//! `max_{nu <= n} { A(nu) + S(nu, n) }`. Every topology is built from this
//! recursion and a combining rule for the per-server departures.
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, purpose, stage,
//! server)`, so a server's draws do not depend on how many other servers
//! exist and runs are bit-reproducible.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::models::{rho_arrival, rho_service, DistributionSpec, Role};

const ARRIVALS: u64 = 1;
const SERVICE: u64 = 2;
const COPULA: u64 = 3;
const ROUTING: u64 = 4;
const REPLICATION: u64 = 5;

/// Independent reproducible stream for one `(purpose, stage, server)` triple.
pub fn stream(seed: u64, purpose: u64, stage: u64, server: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | ((stage & 0xFF_FFFF) << 32) | (server & 0xFFFF_FFFF));
    rng
}

/// How the `k` task service times of one job relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskDependence {
    #[default]
    Independent,
    /// One uniform per job drives every server's quantile function.
    CommonCopula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadMeta {
    pub arrival: Option<DistributionSpec>,
    pub services: Vec<DistributionSpec>,
    pub dependence: TaskDependence,
}

/// Arrival times `A(1..=n)` and per-server service times `S_i(1..=n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub arrivals: Vec<f64>,
    /// `services[i][n]`, one row per server.
    pub services: Vec<Vec<f64>>,
    pub seed: u64,
    pub metadata: WorkloadMeta,
}

fn check_arrivals(arrivals: &[f64]) -> Result<()> {
    if arrivals.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return domain("arrival times must be finite and non-negative");
    }
    if arrivals.windows(2).any(|w| w[1] < w[0]) {
        return domain("arrival times must be non-decreasing");
    }
    Ok(())
}

impl Workload {
    /// Workload from explicit sample paths.
    pub fn new(arrivals: Vec<f64>, services: Vec<Vec<f64>>) -> Result<Self> {
        check_arrivals(&arrivals)?;
        if services.is_empty() {
            return domain("need at least one server");
        }
        for row in &services {
            if row.len() != arrivals.len() {
                return Err(Error::Shape(format!("{} arrivals but {} service times", arrivals.len(), row.len())));
            }
            if row.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return domain("service times must be finite and non-negative");
            }
        }
        let metadata = WorkloadMeta { arrival: None, services: Vec::new(), dependence: TaskDependence::Independent };
        Ok(Self { arrivals, services, seed: 0, metadata })
    }

    /// Draws `n` jobs: iid inter-arrival times and one service row per entry of `services`.
    pub fn generate(
        arrival: &DistributionSpec,
        services: &[DistributionSpec],
        n: usize,
        seed: u64,
        dependence: TaskDependence,
    ) -> Result<Self> {
        if arrival.role() != Role::InterArrival {
            return domain("arrival law must have the inter-arrival role");
        }
        if services.is_empty() {
            return domain("need at least one server");
        }
        let arrivals = arrival_times(arrival, n, seed);
        let rows = service_rows(services, n, seed, dependence, 0)?;
        Ok(Self {
            arrivals,
            services: rows,
            seed,
            metadata: WorkloadMeta { arrival: Some(*arrival), services: services.to_vec(), dependence },
        })
    }

    pub fn n_jobs(&self) -> usize {
        self.arrivals.len()
    }

    pub fn k(&self) -> usize {
        self.services.len()
    }
}

fn arrival_times(arrival: &DistributionSpec, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, ARRIVALS, 0, 0);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += arrival.sample(&mut rng);
            t
        })
        .collect()
}

fn service_rows(
    services: &[DistributionSpec],
    n: usize,
    seed: u64,
    dependence: TaskDependence,
    stage: u64,
) -> Result<Vec<Vec<f64>>> {
    if let Some(s) = services.iter().find(|s| s.role() != Role::ServiceTime) {
        return domain(format!("{s} does not have the service role"));
    }
    Ok(match dependence {
        TaskDependence::Independent => services
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = stream(seed, SERVICE, stage, i as u64);
                (0..n).map(|_| s.sample(&mut rng)).collect()
            })
            .collect(),
        TaskDependence::CommonCopula => {
            let mut rng = stream(seed, COPULA, stage, 0);
            let us: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            services.iter().map(|s| us.iter().map(|&u| s.inverse_cdf(u)).collect()).collect()
        }
    })
}

/// FIFO departures `D(n) = max(A(n), D(n-1)) + S(n)` with `D(0) = 0`.
pub fn serve_fifo(arrivals: &[f64], services: &[f64]) -> Result<Vec<f64>> {
    if arrivals.len() != services.len() {
        return Err(Error::Shape(format!("{} arrivals but {} service times", arrivals.len(), services.len())));
    }
    let mut d = 0.0f64;
    Ok(arrivals
        .iter()
        .zip(services)
        .map(|(&a, &s)| {
            d = a.max(d) + s;
            d
        })
        .collect())
}

/// Brute-force `max_{nu <= n} { A(nu) + S(nu, n) }`, quadratic in `n`.
pub fn departures_by_max_formula(arrivals: &[f64], services: &[f64]) -> Result<Vec<f64>> {
    if arrivals.len() != services.len() {
        return Err(Error::Shape("length mismatch".into()));
    }
    Ok((0..arrivals.len())
        .map(|n| {
            (0..=n).map(|nu| arrivals[nu] + services[nu..=n].iter().sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// One point of an empirical tail with its 3-sigma binomial half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub tau: f64,
    pub fraction: f64,
    pub ci_halfwidth: f64,
}

/// Jobs discarded before tail estimation: `max(10^4, n/100)`, capped at `n/10`.
pub fn default_warmup(n: usize) -> usize {
    (n / 100).max(10_000).min(n / 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub sojourns: Vec<f64>,
    pub departures: Vec<f64>,
    pub warmup_discard: usize,
}

impl SimResult {
    pub fn new(sojourns: Vec<f64>, departures: Vec<f64>) -> Self {
        let warmup_discard = default_warmup(sojourns.len());
        Self { sojourns, departures, warmup_discard }
    }

    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup_discard = warmup.min(self.sojourns.len());
        self
    }

    /// Sojourn times after the warmup discard.
    pub fn steady(&self) -> &[f64] {
        &self.sojourns[self.warmup_discard.min(self.sojourns.len())..]
    }

    pub fn empirical_tail(&self, taus: &[f64]) -> Result<Vec<TailPoint>> {
        empirical_tail(self, taus)
    }

    /// Smallest sample value exceeded by at most a fraction `eps` of the samples.
    pub fn empirical_quantile(&self, eps: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&eps) {
            return domain(format!("eps must lie in [0, 1), got {eps}"));
        }
        let xs = self.steady();
        if xs.is_empty() {
            return Err(Error::Empty("no samples after warmup".into()));
        }
        let n = xs.len();
        let exceed = (eps * n as f64).floor() as usize;
        let idx = n - 1 - exceed.min(n - 1);
        let mut v = xs.to_vec();
        let (_, x, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
        Ok(*x)
    }

    /// Equal-width histogram of the steady-state sojourns: `(lower, upper, count)`.
    pub fn histogram(&self, bins: usize) -> Result<Vec<(f64, f64, usize)>> {
        let xs = self.steady();
        if xs.is_empty() {
            return Err(Error::Empty("no samples after warmup".into()));
        }
        let bins = bins.max(1);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &x in xs {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
            .collect())
    }
}

/// Fraction of steady-state jobs with `T(n) > tau` for each `tau`.
pub fn empirical_tail(result: &SimResult, taus: &[f64]) -> Result<Vec<TailPoint>> {
    let xs = result.steady();
    if xs.is_empty() {
        return Err(Error::Empty("no samples after warmup".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            let above = sorted.len() - sorted.partition_point(|&x| x <= tau);
            let p = above as f64 / n;
            TailPoint { tau, fraction: p, ci_halfwidth: 3.0 * (p * (1.0 - p) / n).sqrt() }
        })
        .collect())
}

fn per_server_departures(w: &Workload) -> Result<Vec<Vec<f64>>> {
    w.services.iter().map(|s| serve_fifo(&w.arrivals, s)).collect()
}

fn finish(arrivals: &[f64], departures: Vec<f64>) -> SimResult {
    let sojourns = departures.iter().zip(arrivals).map(|(d, a)| d - a).collect();
    SimResult::new(sojourns, departures)
}

/// Fork-join: a job leaves when its slowest task is done.
pub fn sim_forkjoin(w: &Workload) -> Result<SimResult> {
    let ds = per_server_departures(w)?;
    let joined = (0..w.n_jobs()).map(|n| ds.iter().map(|d| d[n]).fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(finish(&w.arrivals, joined))
}

/// Fork-join waiting time of the task that starts service last:
/// `max_i [D_i(n-1) - A(n)]^+`.
pub fn sim_forkjoin_waiting(w: &Workload) -> Result<SimResult> {
    let ds = per_server_departures(w)?;
    let waits: Vec<f64> = (0..w.n_jobs())
        .map(|n| ds.iter().map(|d| if n == 0 { 0.0 } else { (d[n - 1] - w.arrivals[n]).max(0.0) }).fold(0.0, f64::max))
        .collect();
    let starts = waits.iter().zip(&w.arrivals).map(|(x, a)| x + a).collect();
    Ok(SimResult::new(waits, starts))
}

/// Split-merge: all tasks of a job start together, so the system is one
/// FIFO server with service `max_i S_i(n)`.
pub fn sim_splitmerge(w: &Workload) -> Result<SimResult> {
    let service: Vec<f64> =
        (0..w.n_jobs()).map(|n| w.services.iter().map(|s| s[n]).fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(finish(&w.arrivals, serve_fifo(&w.arrivals, &service)?))
}

/// (k, l) fork-join: a job leaves once `l` of its `k` tasks are done; the
/// remaining tasks are still served.
pub fn sim_kl(w: &Workload, l: usize) -> Result<SimResult> {
    let k = w.k();
    if l == 0 || l > k {
        return domain(format!("need 1 <= l <= k = {k}, got l = {l}"));
    }
    let ds = per_server_departures(w)?;
    let mut buf = vec![0.0; k];
    let departures = (0..w.n_jobs())
        .map(|n| {
            for (b, d) in buf.iter_mut().zip(&ds) {
                *b = d[n];
            }
            *buf.select_nth_unstable_by(l - 1, f64::total_cmp).1
        })
        .collect();
    Ok(finish(&w.arrivals, departures))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThinningMode {
    RoundRobin,
    /// Job goes to server `i` with probability `p[i]`.
    Random(Vec<f64>),
}

/// Index in the original stream of the `m`-th job sent to server `i` under
/// round robin: `X_i(m) = k (m - 1) + i` (1-based).
pub fn round_robin_x(k: u64, i: u64, m: u64) -> u64 {
    k * (m - 1) + i
}

/// Number of the first `n` jobs sent to server `i` under round robin:
/// `Y_i(n) = ceil((n - i + 1) / k)` (1-based, 0 when `n < i`).
pub fn round_robin_y(k: u64, i: u64, n: u64) -> u64 {
    if n < i {
        0
    } else {
        (n - i + 1).div_ceil(k)
    }
}

/// Thinning with resequencing: every job goes whole to one server and
/// departures are released in arrival order, `D(n) = max_i D_i(Y_i(n))`.
pub fn sim_thinning(
    arrival: &DistributionSpec,
    services: &[DistributionSpec],
    mode: &ThinningMode,
    n: usize,
    seed: u64,
) -> Result<SimResult> {
    let k = services.len();
    if k == 0 {
        return domain("need at least one server");
    }
    let route: Vec<usize> = match mode {
        ThinningMode::RoundRobin => (0..n).map(|j| j % k).collect(),
        ThinningMode::Random(p) => {
            if p.len() != k {
                return Err(Error::Shape(format!("{} probabilities for {k} servers", p.len())));
            }
            if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return domain(format!("routing probabilities must be non-negative and sum to 1, got {p:?}"));
            }
            let dist = WeightedIndex::new(p).map_err(|e| Error::Domain(e.to_string()))?;
            let mut rng = stream(seed, ROUTING, 0, 0);
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    if arrival.role() != Role::InterArrival {
        return domain("arrival law must have the inter-arrival role");
    }
    let arrivals = arrival_times(arrival, n, seed);
    let mut per_arrivals = vec![Vec::new(); k];
    for (j, &i) in route.iter().enumerate() {
        per_arrivals[i].push(arrivals[j]);
    }
    let per_departures = per_arrivals
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if services[i].role() != Role::ServiceTime {
                return domain(format!("{} does not have the service role", services[i]));
            }
            let mut rng = stream(seed, SERVICE, 0, i as u64);
            let s: Vec<f64> = (0..a.len()).map(|_| services[i].sample(&mut rng)).collect();
            serve_fifo(a, &s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut next = vec![0usize; k];
    let mut d = 0.0f64;
    let departures = route
        .iter()
        .map(|&i| {
            d = d.max(per_departures[i][next[i]]);
            next[i] += 1;
            d
        })
        .collect();
    Ok(finish(&arrivals, departures))
}

/// `h` fork-join stages in tandem with `k` iid servers each; the departures
/// of stage `j` are the arrivals of stage `j + 1`.
pub fn sim_multistage(
    h: usize,
    k: usize,
    arrival: &DistributionSpec,
    service: &DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<SimResult> {
    if h == 0 || k == 0 {
        return domain(format!("need h, k >= 1, got h = {h}, k = {k}"));
    }
    let first = Workload::generate(arrival, &vec![*service; k], n, seed, TaskDependence::Independent)?;
    let origin = first.arrivals.clone();
    let mut current = sim_forkjoin(&first)?.departures;
    for stage in 1..h {
        let rows = service_rows(&vec![*service; k], n, seed, TaskDependence::Independent, stage as u64)?;
        let w = Workload { arrivals: current, services: rows, seed, metadata: first.metadata.clone() };
        current = sim_forkjoin(&w)?.departures;
    }
    Ok(finish(&origin, current))
}

/// Estimate of `E[U(m)]` across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingalePoint {
    pub m: usize,
    pub mean_u: f64,
    pub stderr: f64,
}

const REPLICATION_CHUNK: usize = 1024;

/// Estimates `E[U(m)]`, `U(m) = exp(theta (S(n-m+1, n) - A(n-m+1, n)))`, for
/// `m = 1..=n` over independent replications.
pub fn supermartingale_check(
    arrival: &DistributionSpec,
    service: &DistributionSpec,
    theta: f64,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<MartingalePoint>> {
    let ra = rho_arrival(arrival, theta)?;
    let rs = rho_service(service, theta)?;
    if rs > ra + 1e-12 * ra.abs().max(1.0) {
        return Err(Error::Stability(format!("rho_S({theta}) = {rs} exceeds rho_A(-{theta}) = {ra}")));
    }
    if n == 0 || replications < 2 {
        return domain("need n >= 1 and at least two replications");
    }
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..replications.div_ceil(REPLICATION_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; n];
            let mut sq = vec![0.0; n];
            let end = ((c + 1) * REPLICATION_CHUNK).min(replications);
            for r in c * REPLICATION_CHUNK..end {
                let mut rng = stream(seed, REPLICATION, 0, r as u64);
                let mut log_u = theta * service.sample(&mut rng);
                for m in 0..n {
                    if m > 0 {
                        log_u += theta * (service.sample(&mut rng) - arrival.sample(&mut rng));
                    }
                    let u = log_u.exp();
                    sum[m] += u;
                    sq[m] += u * u;
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for (s, q) in &chunks {
        for m in 0..n {
            sum[m] += s[m];
            sq[m] += q[m];
        }
    }
    let r = replications as f64;
    Ok((0..n)
        .map(|m| {
            let mean = sum[m] / r;
            let var = ((sq[m] - r * mean * mean) / (r - 1.0)).max(0.0);
            MartingalePoint { m: m + 1, mean_u: mean, stderr: (var / r).sqrt() }
        })
        .collect())
}

/// Empirical violations of an iid arrival envelope over independent sample
/// paths of `len` arrivals: the fraction of paths with
/// `max_{nu <= len} { rho_A(-theta) (len - nu) - A(nu, len) } > tau`.
pub fn arrival_envelope_violations(
    arrival: &DistributionSpec,
    theta: f64,
    paths: usize,
    len: usize,
    seed: u64,
    taus: &[f64],
) -> Result<Vec<TailPoint>> {
    if arrival.role() != Role::InterArrival {
        return domain("arrival law must have the inter-arrival role");
    }
    if paths == 0 || len == 0 {
        return domain("need at least one path of positive length");
    }
    let rho = rho_arrival(arrival, theta)?;
    let excess: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(seed, REPLICATION, 1, p as u64);
            (1..len).fold(0.0f64, |x, _| (x + rho - arrival.sample(&mut rng)).max(0.0))
        })
        .collect();
    SimResult::new(excess, Vec::new()).with_warmup(0).empirical_tail(taus)
}
