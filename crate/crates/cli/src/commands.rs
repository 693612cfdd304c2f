use std::collections::BTreeMap;

use clap::{Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use dyson_core::dixon_anderson::{
    da_cdf_k1, da_integrate, da_moment_mc, da_sample_rejection, DaSampler, OrderedVector, REJECTION_MAX_K,
};
use dyson_core::jack::{build_jack, jack_norm_product, JackBasis, JackParams};
use dyson_core::operators::{apply_a, apply_b1, apply_b2, DiffOp, GeneratorKind};
use dyson_core::partitions::Partition;
use dyson_core::rmt::{corner_check, Convention};
use dyson_core::sde::{
    default_pipeline_stats, mc_intertwining, mc_statistics, simulate, Process, SdeConfig, StatSet,
};
use dyson_core::semigroup::{
    kernel_factor, verify_generator_intertwining, verify_generator_intertwining_ou, verify_intertwining_exact,
    EXACT_TOL,
};
use dyson_core::stats::{ks_critical_1pct, ks_statistic, par_chunks, stream, tags};
use dyson_core::SymPoly;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{anchors, num, Check, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Dbm,
    Dou,
}

impl From<KindArg> for GeneratorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Dbm => GeneratorKind::Dbm,
            KindArg::Dou => GeneratorKind::Dou,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Dirichlet weights and secular-equation roots
    Roots,
    /// Rejection sampling (k ≤ 3)
    Rejection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Goe,
    AllUnit,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jack polynomials in the monomial basis
    #[command(subcommand)]
    Jack(JackCmd),
    /// Differential operators on symmetric polynomials
    #[command(subcommand)]
    Op(OpCmd),
    /// Intertwining checks
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Dixon-Anderson kernel
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Dyson Brownian motion / Ornstein-Uhlenbeck endpoints
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Random-matrix realization at beta = 1
    #[command(subcommand)]
    Rmt(RmtCmd),
}

#[derive(Debug, Subcommand)]
pub enum JackCmd {
    /// Monomial expansion of J_kappa (needs --theta|--beta, --k, --kappa)
    Build,
    /// Generalized binomial coefficients binom(kappa, rho)
    Binom,
}

#[derive(Debug, Subcommand)]
pub enum OpCmd {
    /// Apply an operator to --poly, or to J_kappa when --poly is absent
    Apply {
        /// b1, b2, b3, opjack, a, a_ou
        #[arg(long)]
        op: String,
        /// Terms "2,1:1.5;1:-2" (partition:coefficient)
        #[arg(long, allow_hyphen_values = true)]
        poly: Option<String>,
        /// Also expand the result in the Jack basis
        #[arg(long)]
        jack_basis: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum VerifyCmd {
    /// Exact semigroup intertwining on the Jack basis
    IntertwineExact {
        #[arg(long, value_enum, default_value = "dbm")]
        kind: KindArg,
    },
    /// Generator-level intertwining
    IntertwineGen {
        #[arg(long, value_enum, default_value = "dbm")]
        kind: KindArg,
    },
    /// Monte Carlo comparison of the two pipelines of the diagram
    IntertwineMc {
        #[arg(long, value_enum, default_value = "dbm")]
        process: KindArg,
    },
    /// Exact suite plus a Monte Carlo suite
    All {
        /// Reduced grid and path counts
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum KernelCmd {
    /// Draws from the kernel at --top (--paths draws)
    Sample {
        #[arg(long, value_enum, default_value = "roots")]
        method: Method,
    },
    /// Moment identity (and the k = 1 law) at --top
    Check,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCmd {
    /// Dyson Brownian motion from --x0
    Dbm,
    /// Dyson Ornstein-Uhlenbeck process from --x0
    Dou,
}

#[derive(Debug, Subcommand)]
pub enum RmtCmd {
    /// Corner pipeline vs DBM + kernel pipeline at beta = 1
    CornerCheck {
        #[arg(long, value_enum, default_value = "goe")]
        convention: ConventionArg,
    },
}

pub enum Output {
    Report(Report),
    Data { json: Value, table: Table },
}

pub fn run(cmd: &Command, cfg: &RunConfig) -> CliResult<Output> {
    match cmd {
        Command::Jack(JackCmd::Build) => jack_build(cfg),
        Command::Jack(JackCmd::Binom) => jack_binom(cfg),
        Command::Op(OpCmd::Apply { op, poly, jack_basis }) => op_apply(cfg, op, poly.as_deref(), *jack_basis),
        Command::Verify(VerifyCmd::IntertwineExact { kind }) => verify_exact(cfg, (*kind).into()).map(Output::Report),
        Command::Verify(VerifyCmd::IntertwineGen { kind }) => verify_gen(cfg, (*kind).into()).map(Output::Report),
        Command::Verify(VerifyCmd::IntertwineMc { process }) => verify_mc(cfg, (*process).into()).map(Output::Report),
        Command::Verify(VerifyCmd::All { quick }) => verify_all(cfg, *quick).map(Output::Report),
        Command::Kernel(KernelCmd::Sample { method }) => kernel_sample(cfg, *method),
        Command::Kernel(KernelCmd::Check) => kernel_check(cfg).map(Output::Report),
        Command::Simulate(SimulateCmd::Dbm) => simulate_cmd(cfg, Process::Dbm),
        Command::Simulate(SimulateCmd::Dou) => simulate_cmd(cfg, Process::Dou),
        Command::Rmt(RmtCmd::CornerCheck { convention }) => rmt_corner(cfg, *convention).map(Output::Report),
    }
}

/// `"m_(2,1)"`-style keys.
fn monomial_map(p: &SymPoly) -> Map<String, Value> {
    p.terms().iter().map(|(mu, c)| (format!("m_{mu}"), json!(c))).collect()
}

fn partition_map(m: &BTreeMap<Partition, f64>) -> Map<String, Value> {
    m.iter().map(|(mu, c)| (mu.to_string(), json!(c))).collect()
}

fn params(cfg: &RunConfig) -> CliResult<JackParams> {
    Ok(JackParams::new(cfg.theta()?, cfg.k()?)?)
}

fn jack_build(cfg: &RunConfig) -> CliResult<Output> {
    let j = build_jack(&params(cfg)?, &cfg.kappa()?)?;
    let mut table = Table::new(&["monomial", "coefficient"]);
    for (mu, c) in j.terms() {
        table.row(vec![mu.to_string(), num(*c)]);
    }
    Ok(Output::Data { json: Value::Object(monomial_map(&j)), table })
}

fn jack_binom(cfg: &RunConfig) -> CliResult<Output> {
    let kappa = cfg.kappa()?;
    let basis = JackBasis::new(params(cfg)?, &kappa)?;
    let binoms = basis.binomial_coefficients(&kappa)?;
    let mut table = Table::new(&["rho", "binom"]);
    for (rho, b) in &binoms {
        table.row(vec![rho.to_string(), num(*b)]);
    }
    Ok(Output::Data { json: Value::Object(partition_map(&binoms)), table })
}

fn parse_poly(k: usize, s: &str) -> CliResult<SymPoly> {
    let mut terms = Vec::new();
    for term in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let (mu, c) = term.split_once(':').ok_or_else(|| CliError::Usage(format!("--poly term '{term}' needs partition:coefficient")))?;
        let mu: Partition = mu.parse().map_err(|e| CliError::Usage(format!("--poly: {e}")))?;
        let c: f64 = c.trim().parse().map_err(|e| CliError::Usage(format!("--poly: {e}")))?;
        terms.push((mu, c));
    }
    Ok(SymPoly::from_terms(k, terms)?)
}

fn op_apply(cfg: &RunConfig, op: &str, poly: Option<&str>, jack_basis: bool) -> CliResult<Output> {
    let op: DiffOp = op.parse().map_err(|e| CliError::Usage(format!("--op: {e}")))?;
    let params = params(cfg)?;
    let input = match poly {
        Some(s) => parse_poly(params.k, s)?,
        None => build_jack(&params, &cfg.kappa()?)?,
    };
    let out = op.apply(&input, params.theta);
    let mut table = Table::new(&["basis", "partition", "coefficient"]);
    for (mu, c) in out.terms() {
        table.row(vec!["monomial".into(), mu.to_string(), num(*c)]);
    }
    let mut doc = Map::new();
    doc.insert("monomial".into(), Value::Object(monomial_map(&out)));
    if jack_basis {
        let degree = input.degree().unwrap_or(0).max(out.degree().unwrap_or(0));
        let basis = JackBasis::up_to_degree(params, degree)?;
        let coeffs = basis.to_jack_basis(&out)?;
        for (mu, c) in &coeffs {
            table.row(vec!["jack".into(), mu.to_string(), num(*c)]);
        }
        doc.insert("jack".into(), Value::Object(partition_map(&coeffs)));
    }
    Ok(Output::Data { json: Value::Object(doc), table })
}

fn kind_name(kind: GeneratorKind) -> &'static str {
    match kind {
        GeneratorKind::Dbm => "dbm",
        GeneratorKind::Dou => "dou",
    }
}

fn exact_check(theta: f64, k: usize, kappa: &Partition, t: f64, kind: GeneratorKind, tol: f64) -> CliResult<Check> {
    let r = verify_intertwining_exact(theta, k, kappa, t, kind)?;
    Ok(Check::scaled_error(
        format!("semigroup/{}/theta={theta}/k={k}/kappa={kappa}/t={t}", kind_name(kind)),
        anchors::SEMIGROUP,
        r.max_abs_error,
        r.scale,
        tol,
    ))
}

fn generator_check(theta: f64, k: usize, kappa: &Partition, kind: GeneratorKind, tol: f64) -> CliResult<Check> {
    let (r, anchor) = match kind {
        GeneratorKind::Dbm => (verify_generator_intertwining(theta, k, kappa)?, anchors::GENERATOR),
        GeneratorKind::Dou => (verify_generator_intertwining_ou(theta, k, kappa)?, anchors::GENERATOR_OU),
    };
    Ok(Check::scaled_error(
        format!("generator/{}/theta={theta}/k={k}/kappa={kappa}", kind_name(kind)),
        anchor,
        r.max_abs_error,
        r.scale,
        tol,
    ))
}

fn verify_exact(cfg: &RunConfig, kind: GeneratorKind) -> CliResult<Report> {
    let mut report = Report::new("verify intertwine-exact", cfg);
    let tol = cfg.tol.unwrap_or(EXACT_TOL);
    report.push(exact_check(cfg.theta()?, cfg.k()?, &cfg.kappa()?, cfg.t()?, kind, tol)?);
    Ok(report)
}

fn verify_gen(cfg: &RunConfig, kind: GeneratorKind) -> CliResult<Report> {
    let mut report = Report::new("verify intertwine-gen", cfg);
    let tol = cfg.tol.unwrap_or(EXACT_TOL);
    report.push(generator_check(cfg.theta()?, cfg.k()?, &cfg.kappa()?, kind, tol)?);
    Ok(report)
}

fn sde_config(cfg: &RunConfig, beta: f64, t: f64, default_paths: usize) -> CliResult<SdeConfig> {
    let mut c = SdeConfig::new(beta, t, cfg.seed()?);
    c.paths = cfg.paths.unwrap_or(default_paths);
    if let Some(dt) = cfg.dt {
        c.dt = dt;
    }
    c.workers = cfg.workers();
    c.scheme = cfg.scheme()?;
    c.validate()?;
    Ok(c)
}

fn pipeline_checks(report: &mut Report, process: Process, top: &OrderedVector, sde: &SdeConfig, z_tol: f64, stats: &[dyson_core::sde::Statistic]) -> CliResult<()> {
    let r = mc_intertwining(process, top, sde, stats, sde.t_final)?;
    for s in &r.stats {
        report.push(Check::two_sample(
            format!("pipelines/{}/beta={}/k={}/t={}/{}", kind_name(process), r.beta, r.k, r.t, s.name),
            anchors::MC_DIAGRAM,
            &s.lhs,
            &s.rhs,
            z_tol,
        ));
    }
    Ok(())
}

fn verify_mc(cfg: &RunConfig, process: Process) -> CliResult<Report> {
    let mut report = Report::new("verify intertwine-mc", cfg);
    let top = cfg.top()?;
    if let Some(k) = cfg.k {
        if k + 1 != top.dim() {
            return Err(CliError::Usage(format!("--k {k} needs {} points in --top, got {}", k + 1, top.dim())));
        }
    }
    let sde = sde_config(cfg, cfg.beta()?, cfg.t()?, 100_000)?;
    report.note("scheme", format!("{:?}", sde.scheme));
    pipeline_checks(&mut report, process, &top, &sde, cfg.z_tol(), &cfg.stats(default_pipeline_stats())?)?;
    Ok(report)
}

/// Fixed, irregularly spaced top levels used by the suites.
fn default_top(k: usize) -> OrderedVector {
    let pts = [-1.0, 0.2, 1.5, 2.4, 3.1];
    OrderedVector::new(pts[..=k].to_vec()).expect("increasing")
}

fn verify_all(cfg: &RunConfig, quick: bool) -> CliResult<Report> {
    let mut report = Report::new(if quick { "verify all --quick" } else { "verify all" }, cfg);
    let seed = cfg.seed()?;
    let thetas: Vec<f64> = match (cfg.theta, cfg.beta) {
        (None, None) if quick => vec![0.5, 1.0],
        (None, None) => vec![0.25, 0.5, 1.0, 2.0, 3.7],
        _ => vec![cfg.theta()?],
    };
    let max_k = cfg.k.unwrap_or(if quick { 2 } else { 3 });
    let kappas: Vec<Partition> = if quick {
        ["1", "2", "1,1", "2,1"].iter().map(|s| s.parse().unwrap()).collect()
    } else {
        ["1", "2", "1,1", "2,1", "2,2", "3,1"].iter().map(|s| s.parse().unwrap()).collect()
    };
    let times: &[f64] = if quick { &[1.0] } else { &[0.1, 1.0, 5.0] };
    let paths = cfg.paths.unwrap_or(if quick { 20_000 } else { 100_000 });
    let tol = cfg.tol.unwrap_or(EXACT_TOL);
    report.note("paths", paths);

    for &theta in &thetas {
        for k in 1..=max_k {
            let p = JackParams::new(theta, k)?;
            for kappa in kappas.iter().filter(|q| q.len() <= k) {
                for &t in times {
                    for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
                        report.push(exact_check(theta, k, kappa, t, kind, tol)?);
                    }
                }
                for kind in [GeneratorKind::Dbm, GeneratorKind::Dou] {
                    report.push(generator_check(theta, k, kappa, kind, tol)?);
                }
                let j = build_jack(&p, kappa)?;
                report.push(Check::relative(
                    format!("norm/theta={theta}/k={k}/kappa={kappa}"),
                    anchors::NORM,
                    j.eval_at_ones(),
                    jack_norm_product(&p, kappa),
                    tol,
                ));
                let comm = &(&apply_b1(&apply_b2(&j, theta)) - &apply_b2(&apply_b1(&j), theta)) - &apply_a(&j, theta);
                report.push(Check::scaled_error(
                    format!("commutator/theta={theta}/k={k}/kappa={kappa}"),
                    anchors::COMMUTATOR,
                    comm.max_abs_coeff(),
                    j.max_abs_coeff().max(1.0),
                    tol,
                ));
            }
        }
    }

    let z_tol = cfg.z_tol();
    for &theta in &thetas {
        for k in 1..=max_k {
            let top = default_top(k);
            for kappa in kappas.iter().filter(|q| q.len() <= k && q.weight() <= 2) {
                let hi = build_jack(&JackParams::new(theta, k + 1)?, kappa)?;
                let exact = kernel_factor(theta, k, kappa) * hi.eval(top.values())?;
                let est = da_moment_mc(&top, theta, kappa, paths, seed, cfg.workers())?;
                report.push(Check::z(format!("kernel/theta={theta}/k={k}/kappa={kappa}"), anchors::KERNEL_MOMENT, &est, exact, z_tol));
            }
            let mut sde = sde_config(cfg, 2.0 * theta, 0.5, paths)?;
            sde.dt = cfg.dt.unwrap_or(1e-3 * sde.t_final);
            pipeline_checks(&mut report, Process::Dbm, &top, &sde, z_tol, &default_pipeline_stats())?;
        }
    }
    Ok(report)
}

fn kernel_sample(cfg: &RunConfig, method: Method) -> CliResult<Output> {
    let theta = cfg.theta()?;
    let top = cfg.top()?;
    let n = cfg.paths.unwrap_or(10);
    let seed = cfg.seed()?;
    if method == Method::Rejection && top.dim() - 1 > REJECTION_MAX_K {
        return Err(CliError::Usage(format!("rejection sampling supports k ≤ {REJECTION_MAX_K}")));
    }
    let sampler = DaSampler::new(theta)?;
    let chunks = par_chunks(n, cfg.workers(), seed, tags::DA_SAMPLE, |len, rng| {
        (0..len)
            .map(|_| match method {
                Method::Roots => sampler.sample(&top, rng),
                Method::Rejection => da_sample_rejection(&top, theta, rng),
            })
            .collect::<Result<Vec<_>, _>>()
    });
    let k = top.dim() - 1;
    let header: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    let mut table = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for chunk in chunks {
        for x in chunk? {
            table.row(x.values().iter().map(|v| num(*v)).collect());
            rows.push(json!(x.values()));
        }
    }
    Ok(Output::Data { json: Value::Array(rows), table })
}

fn kernel_check(cfg: &RunConfig) -> CliResult<Report> {
    let mut report = Report::new("kernel check", cfg);
    let theta = cfg.theta()?;
    let top = cfg.top()?;
    top.require_strict()?;
    let k = top.dim() - 1;
    let seed = cfg.seed()?;
    let n = cfg.paths.unwrap_or(100_000);
    let kappas: Vec<Partition> = match &cfg.kappa {
        Some(_) => vec![cfg.kappa()?],
        None => vec!["1".parse().unwrap(), "2".parse().unwrap()],
    };
    for kappa in &kappas {
        let hi = build_jack(&JackParams::new(theta, k + 1)?, kappa)?;
        let exact = kernel_factor(theta, k, kappa) * hi.eval(top.values())?;
        if k <= 2 {
            let lo = build_jack(&JackParams::new(theta, k)?, kappa)?.compile();
            let quad = da_integrate(&top, theta, |x| lo.eval(x), 1e-10)?;
            report.push(Check::relative(format!("kernel/quadrature/kappa={kappa}"), anchors::KERNEL_MOMENT, quad, exact, cfg.tol.unwrap_or(1e-6)));
        }
        let est = da_moment_mc(&top, theta, kappa, n, seed, cfg.workers())?;
        report.push(Check::z(format!("kernel/mc/kappa={kappa}"), anchors::KERNEL_MOMENT, &est, exact, cfg.z_tol()));
    }
    if k == 1 {
        let (a, b) = (top.values()[0], top.values()[1]);
        let sampler = DaSampler::new(theta)?;
        let mut rng = stream(seed, tags::DA_SAMPLE, 0);
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            xs.push(sampler.sample(&top, &mut rng)?.values()[0]);
        }
        let d = ks_statistic(&mut xs, |x| da_cdf_k1(a, b, theta, x));
        report.push(Check::at_most("kernel/ks", anchors::KERNEL_LAW, d, ks_critical_1pct(n)));
    }
    Ok(report)
}

fn simulate_cmd(cfg: &RunConfig, process: Process) -> CliResult<Output> {
    let x0 = cfg.x0()?;
    let sde = sde_config(cfg, cfg.beta()?, cfg.t()?, 1000)?;
    if cfg.stats.is_some() {
        let set = StatSet::new(&cfg.stats(Vec::new())?, sde.theta(), x0.dim())?;
        let est = mc_statistics(process, &x0, &sde, &set)?;
        let mut table = Table::new(&["statistic", "mean", "std_error", "n"]);
        let mut doc = Map::new();
        for (name, e) in set.names().into_iter().zip(&est) {
            table.row(vec![name.clone(), num(e.mean), num(e.std_error), e.n.to_string()]);
            doc.insert(name, json!(e));
        }
        return Ok(Output::Data { json: Value::Object(doc), table });
    }
    let chunks = par_chunks(sde.paths, sde.workers, sde.seed, tags::SDE, |len, rng| {
        (0..len).map(|_| simulate(process, &x0, &sde, rng)).collect::<Result<Vec<_>, _>>()
    });
    let header: Vec<String> = (1..=x0.dim()).map(|i| format!("x{i}")).collect();
    let mut table = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for chunk in chunks {
        for y in chunk? {
            table.row(y.values().iter().map(|v| num(*v)).collect());
            rows.push(json!(y.values()));
        }
    }
    Ok(Output::Data { json: Value::Array(rows), table })
}

fn rmt_corner(cfg: &RunConfig, convention: ConventionArg) -> CliResult<Report> {
    let mut report = Report::new("rmt corner-check", cfg);
    if cfg.theta.is_some() || cfg.beta.is_some() {
        if (cfg.beta()? - 1.0).abs() > 0.0 {
            return Err(CliError::Usage("the real symmetric matrix model is beta = 1".into()));
        }
    }
    let top = cfg.top()?;
    let k = top.dim() - 1;
    if let Some(kk) = cfg.k {
        if kk != k {
            return Err(CliError::Usage(format!("--k {kk} needs {} points in --top, got {}", kk + 1, top.dim())));
        }
    }
    let convention = match convention {
        ConventionArg::Goe => Convention::Goe,
        ConventionArg::AllUnit => Convention::AllUnit,
    };
    let t = cfg.t()?;
    let sde = sde_config(cfg, 1.0, t, 50_000)?;
    let r = corner_check(&top, t, convention, &sde, &cfg.stats(default_pipeline_stats())?)?;
    report.note("convention", serde_json::to_value(convention)?);
    for s in &r.stats {
        report.push(Check::two_sample(format!("corners/k={k}/t={t}/{}", s.name), anchors::CORNERS, &s.lhs, &s.rhs, cfg.z_tol()));
    }
    report.push(Check::at_most(format!("corners/k={k}/interlacing_violations"), anchors::INTERLACING, r.interlacing_violations as f64, 0.0));
    Ok(report)
}
