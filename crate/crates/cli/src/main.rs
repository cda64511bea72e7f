//! `forkbound`: delay bounds and simulations for fork-join, split-merge,
//! (k,l), thinning and multi-stage systems, written as CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use forkbound::bounds::{optimized_sojourn_bound, quantile, Objective, ServerSpec};
use forkbound::envelope::{kl_sojourn, tail_from_quantile, KLConfig};
use forkbound::figures::{Figure, Table};
use forkbound::multistage::{e2e_sojourn_quantile, optimize_e2e, NetworkModel};
use forkbound::sim::{
    sim_forkjoin, sim_kl, sim_multistage, sim_splitmerge, sim_thinning, SimResult, TaskDependence, ThinningMode,
    Workload,
};
use forkbound::validate::{run_validate, ValidateConfig};
use forkbound::{DistributionSpec, Error, Result, Role, SigmaRho};

#[derive(Parser, Debug)]
#[command(name = "forkbound", version, about = "Statistical delay bounds for fork-join systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic sojourn time bound: quantile and tail curve.
    Bound {
        topology: Topology,
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated sojourn tail next to the analytic bound.
    Simulate {
        topology: Topology,
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Data series behind a figure (fig2..fig7, or all).
    Figure {
        name: String,
        /// Directory receiving one CSV per table; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invariant checks and simulation cross-checks; exit 1 on any failure.
    Validate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        replications: Option<usize>,
        /// Multiplier on every analytic bound (below 1 injects a fault).
        #[arg(long, default_value_t = 1.0)]
        bound_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Topology {
    Forkjoin,
    Splitmerge,
    Kl,
    Thinning,
    Multistage,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Det,
    Random,
}

#[derive(Args, Debug)]
struct SystemArgs {
    /// Inter-arrival law, e.g. exp:lambda=0.7, det:d=1.25, erlang:k=6,lambda=4.
    #[arg(long)]
    arrival: Option<String>,
    /// Service law; repeat for heterogeneous servers.
    #[arg(long)]
    service: Vec<String>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    l: Option<u32>,
    #[arg(long, default_value_t = 1)]
    h: u32,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Mode::Det)]
    mode: Mode,
    /// Routing probabilities for random thinning.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    /// Tasks of a job share one uniform draw (comonotone service times).
    #[arg(long)]
    dependent: bool,
    /// Use the G|G|1 form of the bound instead of the iid form.
    #[arg(long)]
    gg1: bool,
}

struct System {
    arrival: DistributionSpec,
    services: Vec<DistributionSpec>,
    l: u32,
    h: u32,
    eps: f64,
    mode: Mode,
    p: Vec<f64>,
    dependent: bool,
    gg1: bool,
}

impl System {
    fn from_args(a: &SystemArgs) -> Result<Self> {
        let arrival = a.arrival.as_deref().ok_or_else(|| Error::Parse("--arrival is required".into()))?;
        let arrival = DistributionSpec::parse(arrival, Role::InterArrival)?;
        if a.service.is_empty() {
            return Err(Error::Parse("--service is required".into()));
        }
        let mut services =
            a.service.iter().map(|s| DistributionSpec::parse(s, Role::ServiceTime)).collect::<Result<Vec<_>>>()?;
        match (services.len(), a.k) {
            (1, Some(k)) if k >= 1 => services = vec![services[0]; k as usize],
            (_, Some(0)) => return Err(Error::Parse("--k must be at least 1".into())),
            (n, Some(k)) if n != k as usize => {
                return Err(Error::Parse(format!("{n} --service values given for --k {k}")));
            }
            _ => {}
        }
        let k = services.len() as u32;
        let p = if a.p.is_empty() { vec![1.0 / k as f64; k as usize] } else { a.p.clone() };
        Ok(Self {
            arrival,
            services,
            l: a.l.unwrap_or(k),
            h: a.h,
            eps: a.eps,
            mode: a.mode,
            p,
            dependent: a.dependent,
            gg1: a.gg1,
        })
    }

    fn k(&self) -> u32 {
        self.services.len() as u32
    }

    fn homogeneous_service(&self, what: &str) -> Result<DistributionSpec> {
        let s = self.services[0];
        if self.services.iter().any(|x| *x != s) {
            return Err(Error::Parse(format!("{what} needs identical servers")));
        }
        Ok(s)
    }

    fn dependence(&self) -> TaskDependence {
        if self.dependent {
            TaskDependence::CommonCopula
        } else {
            TaskDependence::Independent
        }
    }

    fn thinning_mode(&self) -> ThinningMode {
        match self.mode {
            Mode::Det => ThinningMode::RoundRobin,
            Mode::Random => ThinningMode::Random(self.p.clone()),
        }
    }
}

/// An analytic bound: quantile at the requested budget, tail curve and the
/// optimized internals for the CSV header.
struct Analytic {
    quantile: f64,
    meta: Vec<(String, String)>,
    tail: Box<dyn Fn(f64) -> f64>,
}

fn mgf_bound(servers: Vec<ServerSpec>, eps: f64, mut meta: Vec<(String, String)>) -> Result<Analytic> {
    let opt = optimized_sojourn_bound(&servers, Objective::QuantileAt(eps))?;
    let q = quantile(&opt.bound, eps)?;
    meta.push(("theta".into(), join(&opt.thetas)));
    meta.push(("alpha".into(), join(&opt.alphas)));
    let bound = opt.bound;
    Ok(Analytic { quantile: q, meta, tail: Box::new(move |t| bound.eval(t)) })
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn analytic(sys: &System, topology: Topology) -> Result<Analytic> {
    let iid = !sys.gg1;
    let form = ("form".to_string(), if iid { "GI|GI|1" } else { "G|G|1" }.to_string());
    match topology {
        Topology::Forkjoin => {
            let servers =
                sys.services.iter().map(|s| ServerSpec::from_laws(sys.arrival, *s, iid)).collect::<Result<Vec<_>>>()?;
            mgf_bound(servers, sys.eps, vec![form])
        }
        Topology::Splitmerge => {
            let service = SigmaRho::split_merge_service(sys.services.clone())?;
            let server = ServerSpec::new(SigmaRho::iid_arrival(sys.arrival)?, service, iid)?;
            mgf_bound(vec![server], sys.eps, vec![form])
        }
        Topology::Thinning => {
            let mut servers = Vec::new();
            match sys.mode {
                Mode::Det => {
                    let arrival = SigmaRho::round_robin_arrival(sys.arrival, sys.k())?;
                    for s in &sys.services {
                        servers.push(ServerSpec::new(arrival.clone(), SigmaRho::iid_service(*s)?, iid)?);
                    }
                }
                Mode::Random => {
                    if sys.p.len() != sys.services.len() {
                        return Err(Error::Parse(format!("{} --p values for {} servers", sys.p.len(), sys.k())));
                    }
                    for (s, &p) in sys.services.iter().zip(&sys.p).filter(|(_, &p)| p > 0.0) {
                        let arrival = SigmaRho::random_thinned_arrival(sys.arrival, p)?;
                        servers.push(ServerSpec::new(arrival, SigmaRho::iid_service(*s)?, iid)?);
                    }
                }
            }
            mgf_bound(servers, sys.eps, vec![form])
        }
        Topology::Kl => {
            let service = sys.homogeneous_service("kl")?;
            let b = kl_sojourn(&sys.arrival, &service, KLConfig::new(sys.k(), sys.l, !sys.dependent)?, sys.eps)?;
            let meta = vec![
                ("theta".to_string(), b.theta.to_string()),
                ("tau_a".to_string(), b.split.tau_a.to_string()),
                ("tau_s".to_string(), b.split.tau_s.to_string()),
                ("eps_a".to_string(), b.split.eps_a.to_string()),
                ("eps_s".to_string(), b.split.eps_s.to_string()),
            ];
            let q = b.quantile();
            Ok(Analytic { quantile: q, meta, tail: Box::new(move |t| b.tail(t)) })
        }
        Topology::Multistage => {
            let service = sys.homogeneous_service("multistage")?;
            let model = NetworkModel::new(sys.h, sys.k(), sys.arrival, service)?;
            let b = optimize_e2e(&model, sys.eps)?;
            let (net, _) = model.network(b.theta_s, b.beta)?;
            let meta = vec![
                ("theta_s".to_string(), b.theta_s.to_string()),
                ("theta_a".to_string(), b.theta_a.to_string()),
                ("beta".to_string(), b.beta.to_string()),
                ("tau_a".to_string(), b.tau_a.to_string()),
                ("tau_s".to_string(), b.tau_s.to_string()),
                ("eps_a".to_string(), b.eps_a.to_string()),
                ("eps_s".to_string(), b.eps_s.to_string()),
            ];
            Ok(Analytic {
                quantile: b.quantile,
                meta,
                tail: Box::new(move |t| tail_from_quantile(|e| e2e_sojourn_quantile(&net, e), t)),
            })
        }
    }
}

fn tau_grid(given: &[f64], q: f64) -> Vec<f64> {
    if !given.is_empty() {
        return given.to_vec();
    }
    let top = (1.5 * q).ceil().max(1.0);
    (0..=40).map(|i| top * i as f64 / 40.0).collect()
}

fn describe(table: Table, sys: &System, topology: Topology) -> Table {
    let services: Vec<String> = sys.services.iter().map(ToString::to_string).collect();
    let mut t = table
        .meta("topology", format!("{topology:?}").to_lowercase())
        .meta("arrival", sys.arrival)
        .meta("service", services.join(" "))
        .meta("k", sys.k());
    match topology {
        Topology::Kl => t = t.meta("l", sys.l),
        Topology::Multistage => t = t.meta("h", sys.h),
        Topology::Thinning => {
            t = t.meta("mode", format!("{:?}", sys.mode).to_lowercase());
            if sys.mode == Mode::Random {
                t = t.meta("p", join(&sys.p));
            }
        }
        _ => {}
    }
    if sys.dependent {
        t = t.meta("dependence", "common copula");
    }
    t.meta("eps", sys.eps)
}

fn run_bound(topology: Topology, system: &SystemArgs, tau: &[f64]) -> Result<String> {
    let sys = System::from_args(system)?;
    let a = analytic(&sys, topology)?;
    let mut t = describe(Table::new(&format!("bound {}", name(topology)), &["tau", "bound_p"]), &sys, topology);
    for (k, v) in &a.meta {
        t = t.meta(k, v);
    }
    t = t.meta("quantile", a.quantile);
    for x in tau_grid(tau, a.quantile) {
        t.push(vec![x, (a.tail)(x)]);
    }
    Ok(t.to_csv())
}

fn simulate(sys: &System, topology: Topology, n: usize, seed: u64) -> Result<SimResult> {
    let workload = || Workload::generate(&sys.arrival, &sys.services, n, seed, sys.dependence());
    match topology {
        Topology::Forkjoin => sim_forkjoin(&workload()?),
        Topology::Splitmerge => sim_splitmerge(&workload()?),
        Topology::Kl => sim_kl(&workload()?, sys.l as usize),
        Topology::Thinning => sim_thinning(&sys.arrival, &sys.services, &sys.thinning_mode(), n, seed),
        Topology::Multistage => {
            let service = sys.homogeneous_service("multistage")?;
            sim_multistage(sys.h as usize, sys.services.len(), &sys.arrival, &service, n, seed)
        }
    }
}

fn run_simulate(topology: Topology, system: &SystemArgs, n: usize, seed: u64, tau: &[f64]) -> Result<String> {
    let sys = System::from_args(system)?;
    let a = analytic(&sys, topology)?;
    let sim = simulate(&sys, topology, n, seed)?;
    let eps_emp = sys.eps.max(10.0 / sim.steady().len().max(1) as f64);
    let mut t = describe(
        Table::new(&format!("simulate {}", name(topology)), &["tau", "empirical_p", "ci_halfwidth", "bound_p"]),
        &sys,
        topology,
    )
    .meta("n", n)
    .meta("seed", seed)
    .meta("warmup_discard", sim.warmup_discard)
    .meta("bound_quantile", a.quantile)
    .meta("empirical_eps", eps_emp)
    .meta("empirical_quantile", sim.empirical_quantile(eps_emp)?);
    let taus = tau_grid(tau, a.quantile);
    for p in sim.empirical_tail(&taus)? {
        t.push(vec![p.tau, p.fraction, p.ci_halfwidth, (a.tail)(p.tau)]);
    }
    Ok(t.to_csv())
}

fn name(topology: Topology) -> String {
    format!("{topology:?}").to_lowercase()
}

fn run_figure(name: &str, out: Option<&Path>) -> Result<()> {
    let figures = if name == "all" { Figure::ALL.to_vec() } else { vec![Figure::parse(name)?] };
    let mut stdout = Vec::new();
    for f in figures {
        for table in f.tables()? {
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                    let path = dir.join(format!("{}.csv", table.name));
                    fs::write(&path, table.to_csv()).map_err(|e| io_error(&path, e))?;
                }
                None => stdout.push(table.to_csv()),
            }
        }
    }
    if !stdout.is_empty() {
        print!("{}", stdout.join("\n"));
    }
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Parse(format!("cannot write {}: {e}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stability(_) | Error::Infeasible(_) | Error::Independence(_) | Error::Empty(_) => 2,
        Error::Parse(_) | Error::Domain(_) | Error::Shape(_) => 3,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("FORKBOUND_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parse(format!("FORKBOUND_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Parse(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Bound { topology, system, tau, out } => emit(&run_bound(topology, &system, &tau)?, out.as_deref())?,
        Command::Simulate { topology, system, n, seed, tau, out } => {
            emit(&run_simulate(topology, &system, n, seed, &tau)?, out.as_deref())?
        }
        Command::Figure { name, out } => run_figure(&name, out.as_deref())?,
        Command::Validate { n, seed, replications, bound_scale, out } => {
            let defaults = ValidateConfig::default();
            let cfg = ValidateConfig {
                n_jobs: n.unwrap_or(defaults.n_jobs),
                seed,
                bound_scale,
                replications: replications.unwrap_or(defaults.replications),
            };
            let report = run_validate(&cfg)?;
            emit(&report.to_csv(), out.as_deref())?;
            if !report.all_passed() {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!("FAIL {}: {}", c.name, c.detail);
                }
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
