//! `crown`: certified robustness radii and output bounds for feed-forward
//! networks stored in the `crown-net-v1` format.

mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use crown_core::{
    crown_quad_bounds, load_points, output_bounds, select_target, BallSpec, Certifier, CrownError, LabeledPoint,
    Method, Network, Norm, PgdConfig, SearchConfig, TargetMode,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use report::{
    BoundsRecord, ImprovementRecord, NetworkInfo, PointRecord, Report, SearchInfo, Summary, TargetRecord, ToolInfo,
    REPORT_FORMAT,
};

const EXIT_FLAGS: u8 = 1;
const EXIT_FILE: u8 = 2;
const EXIT_METHOD: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "crown", version, about = "Certified lower bounds on adversarial distortion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certified radius per point and target.
    Certify(CertifyArgs),
    /// Output bounds over a fixed-radius ball around every point.
    Bounds(BoundsArgs),
    /// Certified radii of several methods side by side.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Network weight file (crown-net-v1).
    #[arg(long)]
    network: PathBuf,
    /// Points file.
    #[arg(long)]
    inputs: PathBuf,
    /// Perturbation norm: 1, 2 or inf.
    #[arg(long, default_value = "inf")]
    norm: Norm,
    /// Report destination.
    #[arg(long)]
    output: PathBuf,
    /// Worker threads for point-level parallelism.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// runner-up, random, least, all, or a class index.
    #[arg(long, default_value = "runner-up")]
    target: TargetArg,
    /// Relative bracket width at which the radius search stops.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// First radius probed by the search.
    #[arg(long, default_value_t = 0.05)]
    eps_init: f64,
    /// Seed for random target selection; point i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value = "crown-general")]
    method: Method,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
    /// Ball radius.
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value = "crown-general")]
    method: Method,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', default_value = "fastlin,crown-ada")]
    methods: Vec<Method>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetArg {
    Mode(TargetKind),
    All,
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TargetKind {
    RunnerUp,
    Random,
    Least,
}

impl std::str::FromStr for TargetArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "runner-up" => Ok(TargetArg::Mode(TargetKind::RunnerUp)),
            "random" => Ok(TargetArg::Mode(TargetKind::Random)),
            "least" => Ok(TargetArg::Mode(TargetKind::Least)),
            "all" => Ok(TargetArg::All),
            other => other
                .parse()
                .map(TargetArg::Class)
                .map_err(|_| format!("expected runner-up, random, least, all or a class index, got `{other}`")),
        }
    }
}

impl std::fmt::Display for TargetArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetArg::Mode(TargetKind::RunnerUp) => f.write_str("runner-up"),
            TargetArg::Mode(TargetKind::Random) => f.write_str("random"),
            TargetArg::Mode(TargetKind::Least) => f.write_str("least"),
            TargetArg::All => f.write_str("all"),
            TargetArg::Class(c) => write!(f, "{c}"),
        }
    }
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn flags(message: impl Into<String>) -> Self {
        Failure { code: EXIT_FLAGS, message: message.into() }
    }

    fn file(path: &Path, err: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_FILE, message: format!("{}: {err}", path.display()) }
    }
}

impl From<CrownError> for Failure {
    fn from(err: CrownError) -> Self {
        let code = match err {
            CrownError::MethodActivation { .. } | CrownError::Unsupported(_) => EXIT_METHOD,
            CrownError::InvalidArgument(_) => EXIT_FLAGS,
            CrownError::Io { .. } | CrownError::Parse(_) | CrownError::Shape(_) | CrownError::Value(_)
            | CrownError::UnknownActivation(_) | CrownError::Dimension { .. } => EXIT_FILE,
            CrownError::NonMonotone(_) => EXIT_RUNTIME,
        };
        Failure { code, message: err.to_string() }
    }
}

struct Inputs {
    net: Network<f64>,
    info: NetworkInfo,
    points: Vec<LabeledPoint<f64>>,
}

fn load_inputs(common: &Common) -> Result<Inputs, Failure> {
    if common.jobs == 0 {
        return Err(Failure::flags("--jobs must be at least 1"));
    }
    let bytes = fs::read(&common.network).map_err(|e| Failure::file(&common.network, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Failure::file(&common.network, e))?;
    let net = Network::from_json(&text).map_err(|e| Failure::file(&common.network, e))?;
    let points: Vec<LabeledPoint<f64>> = load_points(&common.inputs).map_err(|e| Failure::file(&common.inputs, e))?;
    for p in &points {
        if p.x.len() != net.input_dim() {
            return Err(Failure::file(
                &common.inputs,
                format!("point `{}` has {} coordinates, network expects {}", p.id, p.x.len(), net.input_dim()),
            ));
        }
    }
    let info = NetworkInfo {
        path: common.network.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        activation: net.activation().name().to_string(),
        widths: net.widths(),
    };
    Ok(Inputs { net, info, points })
}

fn check_methods(net: &Network<f64>, norm: Norm, methods: &[Method]) -> Result<(), Failure> {
    for &m in methods {
        m.check(net.activation())?;
        if m == Method::CrownQuad {
            if net.depth() < 2 {
                return Err(Failure { code: EXIT_METHOD, message: "crown-quad needs a hidden layer".into() });
            }
            if net.depth() == 2 && norm == Norm::L1 {
                return Err(Failure {
                    code: EXIT_METHOD,
                    message: "crown-quad on a two-layer network does not support --norm 1".into(),
                });
            }
        }
    }
    Ok(())
}

fn search_config(args: &SearchArgs) -> Result<SearchConfig<f64>, Failure> {
    let cfg = SearchConfig { eps_init: args.eps_init, rel_tol: args.tol, ..SearchConfig::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure { code: EXIT_RUNTIME, message: e.to_string() })
}

/// Targets to certify for a point predicted as `c`.
fn targets_for(net: &Network<f64>, x: &[f64], c: usize, arg: TargetArg, seed: u64) -> Result<Vec<usize>, Failure> {
    let n = net.output_dim();
    Ok(match arg {
        TargetArg::All => (0..n).filter(|&t| t != c).collect(),
        TargetArg::Class(t) if t >= n => return Err(Failure::flags(format!("target {t} out of range (0..{n})"))),
        TargetArg::Class(t) if t == c => Vec::new(),
        TargetArg::Class(t) => vec![t],
        TargetArg::Mode(kind) => {
            let mode = match kind {
                TargetKind::RunnerUp => TargetMode::RunnerUp,
                TargetKind::Least => TargetMode::Least,
                TargetKind::Random => TargetMode::Random(seed),
            };
            vec![select_target(net, x, mode)?]
        }
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn certify_points(
    inputs: &Inputs,
    norm: Norm,
    methods: &[Method],
    search: &SearchArgs,
    jobs: usize,
) -> Result<Vec<PointRecord>, Failure> {
    let cfg = search_config(search)?;
    if let TargetArg::Class(t) = search.target {
        if t >= inputs.net.output_dim() {
            return Err(Failure::flags(format!("target {t} out of range (0..{})", inputs.net.output_dim())));
        }
    }
    let net = &inputs.net;
    let run = |(i, p): (usize, &LabeledPoint<f64>)| -> Result<PointRecord, Failure> {
        let start = Instant::now();
        let predicted = net.predict(&p.x)?;
        let skipped = p.label.is_some_and(|l| l != predicted);
        let mut record = PointRecord {
            id: p.id.clone(),
            label: p.label,
            predicted,
            skipped,
            targets: Vec::new(),
            bounds: Vec::new(),
            improvements: Vec::new(),
            time_ms: 0.0,
        };
        if !skipped {
            let targets = targets_for(net, &p.x, predicted, search.target, search.seed.wrapping_add(i as u64))?;
            for &t in &targets {
                for &m in methods {
                    let r = Certifier::new(m).with_search(cfg).radius_targeted(net, &p.x, predicted, t, norm)?;
                    record.targets.push(TargetRecord {
                        target: t,
                        method: m.name().into(),
                        norm: norm.label().into(),
                        radius: r.radius,
                        iterations: r.iterations,
                        capped: r.capped,
                        time_ms: r.elapsed.as_secs_f64() * 1e3,
                    });
                }
            }
        }
        record.time_ms = elapsed_ms(start);
        Ok(record)
    };
    thread_pool(jobs)?.install(|| inputs.points.par_iter().enumerate().map(run).collect())
}

/// Smallest radius over targets for `method`; `None` when nothing was certified.
fn point_radius(record: &PointRecord, method: &str) -> Option<f64> {
    if record.skipped {
        return Some(0.0);
    }
    record
        .targets
        .iter()
        .filter(|t| t.method == method)
        .map(|t| t.radius)
        .reduce(f64::min)
}

fn summarize(records: &[PointRecord], methods: &[Method]) -> Summary {
    let mut summary = Summary {
        points: records.len(),
        skipped: records.iter().filter(|r| r.skipped).count(),
        ..Summary::default()
    };
    for m in methods {
        let radii: Vec<f64> = records.iter().filter(|r| !r.skipped).filter_map(|r| point_radius(r, m.name())).collect();
        let times: Vec<f64> = records
            .iter()
            .flat_map(|r| r.targets.iter())
            .filter(|t| t.method == m.name())
            .map(|t| t.time_ms)
            .collect();
        if !radii.is_empty() {
            summary.mean_radius.insert(m.name().into(), radii.iter().sum::<f64>() / radii.len() as f64);
        }
        if !times.is_empty() {
            summary.mean_time_ms.insert(m.name().into(), times.iter().sum::<f64>() / times.len() as f64);
        }
    }
    if let Some(&base) = summary.mean_radius.get(Method::FastLin.name()) {
        if base > 0.0 && methods.len() > 1 {
            for (name, &r) in &summary.mean_radius {
                if name != Method::FastLin.name() {
                    summary.improvement_vs_fastlin.insert(name.clone(), (r - base) / base);
                }
            }
        }
    }
    summary
}

fn add_improvements(records: &mut [PointRecord], methods: &[Method]) {
    if methods.len() < 2 || !methods.contains(&Method::FastLin) {
        return;
    }
    for record in records {
        let mut per_target: BTreeMap<usize, f64> = BTreeMap::new();
        for t in record.targets.iter().filter(|t| t.method == Method::FastLin.name()) {
            per_target.insert(t.target, t.radius);
        }
        record.improvements = record
            .targets
            .iter()
            .filter(|t| t.method != Method::FastLin.name())
            .map(|t| {
                let base = per_target[&t.target];
                ImprovementRecord {
                    target: t.target,
                    method: t.method.clone(),
                    improvement: (base > 0.0).then(|| (t.radius - base) / base),
                }
            })
            .collect();
    }
}

fn new_report(command: &str, info: NetworkInfo, norm: Norm, methods: &[Method]) -> Report {
    Report {
        format: REPORT_FORMAT.into(),
        tool: ToolInfo { name: "crown".into(), version: env!("CARGO_PKG_VERSION").into() },
        command: command.into(),
        network: info,
        norm: norm.label().into(),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        eps: None,
        search: None,
        records: Vec::new(),
        summary: Summary::default(),
    }
}

fn search_info(args: &SearchArgs) -> SearchInfo {
    SearchInfo { target: args.target.to_string(), rel_tol: args.tol, eps_init: args.eps_init, seed: args.seed }
}

/// Writes `report` next to its destination and renames it into place.
fn write_report(path: &Path, report: &Report) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::file(path, e))?;
    let text = serde_json::to_string_pretty(report).map_err(|e| Failure::file(path, e))?;
    tmp.write_all(text.as_bytes()).map_err(|e| Failure::file(path, e))?;
    tmp.write_all(b"\n").map_err(|e| Failure::file(path, e))?;
    tmp.persist(path).map_err(|e| Failure::file(path, e.error))?;
    Ok(())
}

fn print_summary(report: &Report) {
    println!(
        "{} points ({} skipped), norm {}, network {}",
        report.summary.points, report.summary.skipped, report.norm, report.network.path
    );
    if report.summary.mean_radius.is_empty() {
        return;
    }
    println!("{:<16}{:>16}{:>16}{:>14}", "method", "mean radius", "mean time ms", "vs fastlin");
    for (name, r) in &report.summary.mean_radius {
        let t = report.summary.mean_time_ms.get(name).copied().unwrap_or(0.0);
        let imp = report
            .summary
            .improvement_vs_fastlin
            .get(name)
            .map(|v| format!("{:+.1}%", 100.0 * v))
            .unwrap_or_default();
        println!("{name:<16}{r:>16.6e}{t:>16.2}{imp:>14}");
    }
}

fn cmd_certify(args: CertifyArgs) -> Result<Report, Failure> {
    let inputs = load_inputs(&args.common)?;
    let methods = [args.method];
    check_methods(&inputs.net, args.common.norm, &methods)?;
    let records = certify_points(&inputs, args.common.norm, &methods, &args.search, args.common.jobs)?;
    let mut report = new_report("certify", inputs.info, args.common.norm, &methods);
    report.search = Some(search_info(&args.search));
    report.summary = summarize(&records, &methods);
    report.records = records;
    Ok(report)
}

fn cmd_compare(args: CompareArgs) -> Result<Report, Failure> {
    let inputs = load_inputs(&args.common)?;
    let mut methods = Vec::new();
    for m in args.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(Failure::flags("--methods is empty"));
    }
    check_methods(&inputs.net, args.common.norm, &methods)?;
    let mut records = certify_points(&inputs, args.common.norm, &methods, &args.search, args.common.jobs)?;
    add_improvements(&mut records, &methods);
    let mut report = new_report("compare", inputs.info, args.common.norm, &methods);
    report.search = Some(search_info(&args.search));
    report.summary = summarize(&records, &methods);
    report.records = records;
    Ok(report)
}

fn cmd_bounds(args: BoundsArgs) -> Result<Report, Failure> {
    if !(args.eps >= 0.0 && args.eps.is_finite()) {
        return Err(Failure::flags("--eps must be a finite non-negative number"));
    }
    let inputs = load_inputs(&args.common)?;
    let norm = args.common.norm;
    check_methods(&inputs.net, norm, &[args.method])?;
    let net = &inputs.net;
    let run = |p: &LabeledPoint<f64>| -> Result<PointRecord, Failure> {
        let start = Instant::now();
        let ball = BallSpec::new(&p.x, args.eps, norm)?;
        let (lower, upper) = match args.method {
            Method::CrownQuad => crown_quad_bounds(net, &ball, &PgdConfig::default())?,
            m => output_bounds(net, &ball, m.relu_strategy())?,
        };
        let predicted = net.predict(&p.x)?;
        Ok(PointRecord {
            id: p.id.clone(),
            label: p.label,
            predicted,
            skipped: false,
            targets: Vec::new(),
            bounds: vec![BoundsRecord {
                method: args.method.name().into(),
                norm: norm.label().into(),
                eps: args.eps,
                lower: lower.to_vec(),
                upper: upper.to_vec(),
            }],
            improvements: Vec::new(),
            time_ms: elapsed_ms(start),
        })
    };
    let records: Vec<PointRecord> =
        thread_pool(args.common.jobs)?.install(|| inputs.points.par_iter().map(run).collect::<Result<_, _>>())?;
    let mut report = new_report("bounds", inputs.info, norm, &[args.method]);
    report.eps = Some(args.eps);
    report.summary = Summary {
        points: records.len(),
        mean_time_ms: BTreeMap::from([(
            args.method.name().to_string(),
            records.iter().map(|r| r.time_ms).sum::<f64>() / records.len().max(1) as f64,
        )]),
        ..Summary::default()
    };
    report.records = records;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_FLAGS } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let (output, result) = match cli.command {
        Command::Certify(a) => (a.common.output.clone(), cmd_certify(a)),
        Command::Bounds(a) => (a.common.output.clone(), cmd_bounds(a)),
        Command::Compare(a) => (a.common.output.clone(), cmd_compare(a)),
    };
    let outcome = result.and_then(|report| {
        write_report(&output, &report)?;
        print_summary(&report);
        Ok(())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
