use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use cox_intensity::experiment::{run_mc, simulate_replication, stream_seed, McSummary, ReplicationDetail, ScenarioConfig};
use cox_intensity::gof::{default_family, ContrastProblem, FamilyKind, NelderMeadOptions, ParametricFamily};
use cox_intensity::gof::{PolynomialFamily, PolynomialSpec};
use cox_intensity::io as csvio;
use cox_intensity::kernels::{asymptotic_weight, moment_matrix, test_constant, Kernel, LagRange};
use cox_intensity::localpoly::{default_grid, BandwidthGrid, GridStyle};
use cox_intensity::simulate::{detect_jumps, simulate_spot, simulate_temperature, DetectorOptions};
use cox_intensity::{Estimator, EstimatorConfig, Interval, SampledPath};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::{DetectArgs, EstimateArgs, EstimationArgs, InfoArgs, McArgs, SimulateArgs, TestArgs};

/// Optional JSON defaults for the estimation flags.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimationFile {
    interval: Option<Interval>,
    degree: Option<usize>,
    alpha: Option<f64>,
    n: Option<u64>,
    grid: Option<String>,
    hmin_count: Option<f64>,
    kernel: Option<String>,
    grid_size: Option<usize>,
    time_unit: Option<f64>,
    clip_floor: Option<f64>,
    min_nu: Option<f64>,
    horizon: Option<f64>,
}

/// Everything needed to run the estimator on user data.
struct Prepared {
    estimator: Estimator,
    grid: BandwidthGrid,
    time_unit: f64,
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(p)?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_interval(s: &str) -> Result<Interval, CliError> {
    let bad = || CliError::Usage(format!("interval must be 'lo:hi', got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok(Interval::new(lo, hi)?)
}

/// Reads a path. Without an explicit horizon a uniform path holds its last
/// sample for one more step, matching how paths are written.
fn read_path(p: &Path, horizon: Option<f64>) -> Result<SampledPath, CliError> {
    let path = csvio::read_path_file(p, horizon)?;
    match (horizon, path.uniform_step()) {
        (None, Some(step)) => Ok(SampledPath::new(
            path.times().to_vec(),
            path.values().to_vec(),
            path.horizon() + step,
        )?),
        _ => Ok(path),
    }
}

fn prepare(a: &EstimationArgs) -> Result<Prepared, CliError> {
    let file: EstimationFile = match &a.config {
        Some(p) => read_json(p)?,
        None => EstimationFile::default(),
    };
    let interval = match &a.interval {
        Some(s) => parse_interval(s)?,
        None => file.interval.ok_or_else(|| CliError::Usage("--interval is required".into()))?,
    };
    let degree = a.degree.or(file.degree).unwrap_or(1);
    let mut cfg = EstimatorConfig::new(interval, degree)
        .with_n(a.n.or(file.n).unwrap_or(1))
        .with_alpha(a.alpha.or(file.alpha).unwrap_or(1.0));
    if let Some(size) = a.grid_size.or(file.grid_size) {
        cfg = cfg.with_grid_size(size);
    }
    if let Some(k) = a.kernel.as_deref().or(file.kernel.as_deref()) {
        cfg.kernel = Kernel::by_name(k)?;
    }
    cfg.clip_floor = a.clip_floor.or(file.clip_floor);
    cfg.min_nu = a.min_nu.or(file.min_nu).unwrap_or(0.0);
    cfg.validate()?;

    let raw_path = read_path(&a.path, a.horizon.or(file.horizon))?;
    let raw_events = csvio::read_events_file(&a.events, raw_path.horizon())?;
    let time_unit = a.time_unit.or(file.time_unit).unwrap_or(raw_path.horizon());
    if !(time_unit > 0.0 && time_unit.is_finite()) {
        return Err(CliError::Usage("time unit must be positive".into()));
    }
    let path = raw_path.rescale_time(time_unit)?;
    let events = raw_events.rescale_time(time_unit);
    let estimator = Estimator::new(&path, &events, &cfg)?;

    let style: GridStyle = a.grid.as_deref().or(file.grid.as_deref()).unwrap_or("arithmetic:0.1").parse()?;
    let count = match a.hmin_count.or(file.hmin_count) {
        Some(c) => c,
        None if estimator.events_in_interval() > 0 => estimator.events_in_interval() as f64,
        None => {
            warn!("no events inside the interval; the bandwidth floor uses n instead");
            cfg.n as f64
        }
    };
    let grid = default_grid(&cfg, count, style)?;
    info!(
        "{} events in [{}, {}], {} candidate bandwidths from {:.4} to {:.4}",
        estimator.events_in_interval(),
        interval.lo,
        interval.hi,
        grid.len(),
        grid.h_min(),
        grid.h_max()
    );
    Ok(Prepared { estimator, grid, time_unit })
}

fn create(p: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(p)?))
}

#[derive(Serialize)]
struct EstimateSummary {
    interval: Interval,
    degree: usize,
    n: u64,
    alpha: f64,
    time_unit: f64,
    events_in_interval: usize,
    h_hat: f64,
    h_min: f64,
    h_max: f64,
    candidates: usize,
    achieved_nu: f64,
    masked_fraction: f64,
}

pub fn estimate(a: EstimateArgs) -> Result<ExitCode, CliError> {
    let p = prepare(&a.common)?;
    let sel = p.estimator.select_bandwidth(&p.grid)?;
    fs::create_dir_all(&a.out)?;
    csvio::write_curve(create(&a.out.join("curve.csv"))?, &sel.curve)?;
    csvio::write_selection(create(&a.out.join("selection.csv"))?, &sel.candidates)?;
    let cfg = p.estimator.config();
    let summary = EstimateSummary {
        interval: cfg.interval,
        degree: cfg.degree,
        n: cfg.n,
        alpha: cfg.alpha,
        time_unit: p.time_unit,
        events_in_interval: p.estimator.events_in_interval(),
        h_hat: sel.h_hat,
        h_min: p.grid.h_min(),
        h_max: p.grid.h_max(),
        candidates: p.grid.len(),
        achieved_nu: sel.achieved_nu,
        masked_fraction: 1.0 - sel.curve.defined_fraction(),
    };
    let mut w = create(&a.out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    println!("h_hat = {}", sel.h_hat);
    Ok(ExitCode::SUCCESS)
}

pub fn test(a: TestArgs) -> Result<ExitCode, CliError> {
    if !(a.gamma > 0.0 && a.gamma <= 1.0) {
        return Err(CliError::Usage("--gamma must lie in (0, 1]".into()));
    }
    let lags: LagRange = a.lags.parse()?;
    let p = prepare(&a.common)?;
    let h = match a.h.as_str() {
        "from-estimate" => p.estimator.select_bandwidth(&p.grid)?.h_hat,
        v => v.parse::<f64>().ok().filter(|h| *h > 0.0 && h.is_finite()).ok_or_else(|| {
            CliError::Usage(format!("--h must be 'from-estimate' or a positive number, got '{v}'"))
        })?,
    };
    let problem = ContrastProblem::new(&p.estimator, h)?;
    let cfg = p.estimator.config();
    let family: Box<dyn ParametricFamily> = match a.family.as_str() {
        "plugin" => {
            let spec_path =
                a.plugin.as_deref().ok_or_else(|| CliError::Usage("--family plugin needs --plugin".into()))?;
            let spec: PolynomialSpec = read_json(spec_path)?;
            Box::new(PolynomialFamily::new(spec)?)
        }
        other => default_family(other.parse::<FamilyKind>()?, &problem, cfg)?,
    };
    let a_of_k = test_constant(&cfg.kernel, cfg.degree, lags)?.a_of_k;
    let report = problem.test(family.as_ref(), a.gamma, a_of_k, &NelderMeadOptions::default())?;
    let json = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(p) => fs::write(p, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(if report.reject { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

pub fn simulate(a: SimulateArgs) -> Result<ExitCode, CliError> {
    let mut scenario: ScenarioConfig = read_json(&a.config)?;
    if let Some(s) = a.seed {
        scenario.run.seed = s;
    }
    scenario.validate()?;
    let seed = scenario.run.seed;
    let run = scenario.run;
    let unit = scenario.time_unit();
    // Same streams as a Monte-Carlo replication, reported in hours.
    let hours = simulate_temperature(&scenario.temperature, run.t_hours, run.step, stream_seed(seed, 0))?;
    let (_, scaled_events) = simulate_replication(&scenario, seed)?;
    let events = scaled_events.rescale_time(1.0 / unit);
    fs::create_dir_all(&a.out)?;
    csvio::write_path(create(&a.out.join("path.csv"))?, &hours)?;
    csvio::write_events(create(&a.out.join("events.csv"))?, &events)?;
    if let Some(spike) = &scenario.spike {
        let prices = simulate_spot(spike, &events, run.t_hours, run.step, stream_seed(seed, 2))?;
        csvio::write_path(create(&a.out.join("prices.csv"))?, &prices)?;
    }
    println!("{} events over {} hours", events.len(), run.t_hours);
    Ok(ExitCode::SUCCESS)
}

pub fn detect(a: DetectArgs) -> Result<ExitCode, CliError> {
    let prices = read_path(&a.prices, None)?;
    let opts = DetectorOptions {
        mpv_order: a.order,
        threshold_mult: a.mult,
        exponent: a.exponent,
        segment_hours: a.segment_hours,
        suppress_reversals: a.suppress_reversals,
    };
    let det = detect_jumps(&prices, &opts)?;
    info!("sigma per segment: {:?}", det.sigma_hat);
    match &a.out {
        Some(p) => csvio::write_events(create(p)?, &det.events)?,
        None => csvio::write_events(io::stdout().lock(), &det.events)?,
    }
    eprintln!("{} jumps detected", det.events.len());
    Ok(ExitCode::SUCCESS)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(p: &Path, summaries: &[McSummary]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(p)?);
    w.write_record([
        "interval",
        "e_hat",
        "e_oracle",
        "pct_converged",
        "pct_exponential",
        "pct_constant",
        "a0_lo",
        "a0_hi",
        "a1_lo",
        "a1_hi",
    ])?;
    for s in summaries {
        let ci = |k: usize, hi: bool| fmt_opt(s.theta_hat_ci.get(k).copied().flatten().map(|c| if hi { c.1 } else { c.0 }));
        w.write_record([
            format!("{}:{}", s.interval.lo, s.interval.hi),
            fmt_opt(Some(s.e_hat)),
            fmt_opt(Some(s.e_oracle)),
            s.pct_converged.to_string(),
            fmt_opt(s.pct_not_rejected.get("exponential").copied()),
            fmt_opt(s.pct_not_rejected.get("constant").copied()),
            ci(0, false),
            ci(0, true),
            ci(1, false),
            ci(1, true),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_details(p: &Path, details: &[Vec<ReplicationDetail>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(p)?);
    w.write_record([
        "replication",
        "seed",
        "interval",
        "events_in_interval",
        "achieved_nu",
        "converged",
        "h_hat",
        "error",
        "exponential_p",
        "constant_p",
        "failure",
    ])?;
    for d in details.iter().flatten() {
        let p_of = |kind: FamilyKind| fmt_opt(d.tests.iter().find(|t| t.family == kind).map(|t| t.p_value));
        w.write_record([
            d.replication.to_string(),
            d.seed.to_string(),
            format!("{}:{}", d.interval.lo, d.interval.hi),
            d.events_in_interval.to_string(),
            d.achieved_nu.to_string(),
            d.converged.to_string(),
            fmt_opt(Some(d.h_hat)),
            fmt_opt(Some(d.error)),
            p_of(FamilyKind::Exponential),
            p_of(FamilyKind::Constant),
            d.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn mc(a: McArgs) -> Result<ExitCode, CliError> {
    let mut scenario: ScenarioConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(r) = a.reps {
        scenario.run.replications = r;
    }
    if let Some(s) = a.seed {
        scenario.run.seed = s;
    }
    if scenario.run.replications == 0 {
        return Err(CliError::Usage("at least one replication is required".into()));
    }
    scenario.validate()?;
    let (summaries, details) = run_mc(&scenario)?;
    write_table(&a.out, &summaries)?;
    if let Some(p) = &a.details {
        write_details(p, &details)?;
    }
    for s in &summaries {
        println!(
            "[{}, {}]  e_hat {:.4}  e_oracle {:.4}  converged {:.0}%",
            s.interval.lo, s.interval.hi, s.e_hat, s.e_oracle, s.pct_converged
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct KernelInfo {
    kernel: String,
    degree: usize,
    support_radius: f64,
    integral: f64,
    norm_l1: f64,
    norm_l2_sq: f64,
    norm_inf: f64,
    minorant_delta: f64,
    minorant_kmin: f64,
    moment_matrix: Vec<Vec<f64>>,
    weight_coefficients: Vec<f64>,
    lags: LagRange,
    inner_constant: f64,
    a_of_k: f64,
}

pub fn info(a: InfoArgs) -> Result<ExitCode, CliError> {
    let k = Kernel::by_name(&a.kernel)?;
    let lags: LagRange = a.lags.parse()?;
    let tc = test_constant(&k, a.degree, lags)?;
    let report = KernelInfo {
        kernel: k.name().to_string(),
        degree: a.degree,
        support_radius: k.support_radius(),
        integral: k.integral(),
        norm_l1: k.norm_l1(),
        norm_l2_sq: k.norm_l2_sq(),
        norm_inf: k.norm_inf(),
        minorant_delta: k.minorant_delta(),
        minorant_kmin: k.minorant_kmin(),
        moment_matrix: moment_matrix(&k, a.degree)?.rows(),
        weight_coefficients: asymptotic_weight(&k, a.degree)?.coefficients().to_vec(),
        lags,
        inner_constant: tc.inner,
        a_of_k: tc.a_of_k,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(ExitCode::SUCCESS);
    }
    println!("kernel          {}", report.kernel);
    println!("support         [-{r}, {r}]", r = report.support_radius);
    println!("integral        {}", report.integral);
    println!("||K||_1         {}", report.norm_l1);
    println!("||K||_2^2       {}", report.norm_l2_sq);
    println!("||K||_inf       {}", report.norm_inf);
    println!("minorant        K >= {} on [-{}, {}]", report.minorant_kmin, report.minorant_delta, report.minorant_delta);
    println!("moment matrix (degree {}):", a.degree);
    for row in &report.moment_matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:12.8}")).collect();
        println!("  {}", cells.join(" "));
    }
    println!("weight w(u)     coefficients {:?}", report.weight_coefficients);
    if a.degree == 0 {
        println!("                (degree 0: w is identically 1)");
    }
    println!("inner constant  {}", report.inner_constant);
    println!("A(K)            {}", report.a_of_k);
    Ok(ExitCode::SUCCESS)
}
