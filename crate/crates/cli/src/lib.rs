//! Subcommand implementations behind the `floodsense` binary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Cursor, Write};
use std::path::{Path, PathBuf};

use floodsense_core::aggregation::{aggregate_region, to_csv, to_json};
use floodsense_core::ledger::WindowKey;
use floodsense_core::sim::{
    run_scenario, sweep, sweep_csv, table1_csv, table1_experiment, table1_scenario, ScenarioFile,
    SimError, SweepGrid,
};
use floodsense_core::store::{read_log, replay, Event, StoreError};
use floodsense_core::trust::{
    consolidate, run_detection, AssessmentRecord, DetectionConfig, DetectionWindow,
};
use floodsense_core::{validate_report, PeriodConfig, QuestionnaireSchema, RegionGrid, Report};
use floodsense_service::{AppState, ServiceConfig, StartupError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Environment(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Environment(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Environment(format!("cannot write {}: {e}", path.display())))
}

fn store_error(path: &Path, e: StoreError) -> CliError {
    match e {
        StoreError::StorageFailure(io) if io.kind() == io::ErrorKind::NotFound => {
            CliError::Usage(format!("{} does not exist", path.display()))
        }
        StoreError::StorageFailure(io) => {
            CliError::Environment(format!("cannot read {}: {io}", path.display()))
        }
        StoreError::ContextMismatch => CliError::Usage(format!(
            "{} was written with a different schema, grid or period length",
            path.display()
        )),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

// serve

pub fn serve(config: &Path) -> Result<(), CliError> {
    let cfg = ServiceConfig::load(Some(config)).map_err(|e| CliError::Usage(e.to_string()))?;
    let _ = tracing_subscriber::fmt().with_writer(io::stderr).try_init();
    let state = AppState::open(&cfg, floodsense_service::system_clock()).map_err(|e| match e {
        StartupError::Schema(e) => CliError::Usage(format!("schema: {e}")),
        StartupError::Store(e) => store_error(&cfg.log_path, e),
    })?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Environment(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.addr)
            .await
            .map_err(|e| CliError::Environment(format!("cannot bind {}: {e}", cfg.addr)))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Environment(e.to_string()))?;
        println!("listening on http://{addr}");
        io::stdout().flush().ok();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        floodsense_service::serve(listener, state, shutdown)
            .await
            .map_err(|e| CliError::Environment(e.to_string()))
    })
}

// simulate

pub enum ScenarioSource<'a> {
    File(&'a Path),
    Table1 { cohort_size: u32 },
}

/// Runs a scenario and writes `users.csv` and `summary.json` into `out`;
/// the table1 preset also writes `table1.csv`.
pub fn simulate(source: ScenarioSource, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let sim_err = |e: SimError| match e {
        SimError::Io(..) | SimError::InvalidScenario(_) => CliError::Usage(e.to_string()),
    };
    let (cfg, table1) = match source {
        ScenarioSource::File(path) => {
            let file = ScenarioFile::load(path).map_err(sim_err)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut cfg = file.resolve(base).map_err(sim_err)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            (cfg, None)
        }
        ScenarioSource::Table1 { cohort_size } => {
            if cohort_size == 0 {
                return Err(CliError::Usage("cohort size must be at least 1".into()));
            }
            let seed = seed.unwrap_or(0);
            let rows = table1_experiment(cohort_size, seed).map_err(sim_err)?;
            (table1_scenario(cohort_size, seed), Some(table1_csv(&rows)))
        }
    };
    let result = run_scenario(&cfg).map_err(sim_err)?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Environment(format!("cannot create {}: {e}", out.display())))?;
    write_file(&out.join("users.csv"), &result.users_csv())?;
    write_file(&out.join("summary.json"), &result.summary_json())?;
    if let Some(table) = table1 {
        write_file(&out.join("table1.csv"), &table)?;
    }
    Ok(())
}

pub fn run_sweep(grid: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(grid)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", grid.display())))?;
    let grid: SweepGrid =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("sweep grid: {e}")))?;
    let rows = sweep(&grid).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(out, &sweep_csv(&rows))
}

// detect

pub struct DetectOptions {
    pub input: PathBuf,
    pub schema: Option<PathBuf>,
    pub grid: Option<RegionGrid>,
    pub period_seconds: i64,
    pub epoch_origin: i64,
    pub iterative: bool,
    pub out: PathBuf,
}

/// Evaluates windows in (period, region) order. Users flagged in one window
/// are left out of every later one, as the service does.
pub fn detect_windows(
    windows: BTreeMap<(u64, usize), Vec<Report>>,
    schema: &QuestionnaireSchema,
    detection: &DetectionConfig,
) -> Result<Vec<DetectionWindow>, CliError> {
    let mut blacklisted: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    for ((period, region), reports) in windows {
        let mut by_user: BTreeMap<&str, Vec<&Report>> = BTreeMap::new();
        for r in &reports {
            if !blacklisted.contains(&r.user_id) {
                by_user.entry(r.user_id.as_str()).or_default().push(r);
            }
        }
        if by_user.is_empty() {
            continue;
        }
        let rows = by_user
            .into_values()
            .map(|rs| consolidate(rs, schema))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(e.to_string()))?;
        let window = DetectionWindow::new(region, period, rows)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let window = run_detection(window, detection);
        blacklisted.extend(window.malicious_users().map(str::to_owned));
        out.push(window);
    }
    Ok(out)
}

type Windows = BTreeMap<(u64, usize), Vec<Report>>;

fn windows_from_log(text: &str) -> Result<(QuestionnaireSchema, Windows), CliError> {
    let replayed = replay(Cursor::new(text.as_bytes()))
        .map_err(|e| CliError::Data(format!("event log: {e}")))?;
    let mut windows = Windows::new();
    for r in replayed.records {
        if let Event::ReportSubmitted(s) = r.event {
            windows
                .entry((s.period, s.region))
                .or_default()
                .push(s.report);
        }
    }
    Ok((replayed.header.context.schema, windows))
}

fn windows_from_reports(
    text: &str,
    opts: &DetectOptions,
) -> Result<(QuestionnaireSchema, Windows), CliError> {
    let schema = match &opts.schema {
        Some(p) => {
            QuestionnaireSchema::load(p).map_err(|e| CliError::Usage(format!("schema: {e}")))?
        }
        None => QuestionnaireSchema::default_flood(),
    };
    let period = PeriodConfig::new(opts.period_seconds, opts.epoch_origin)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut windows = Windows::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let grid = opts
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Usage("--grid is required for report files".into()))?;
        let data_err = |msg: String| CliError::Data(format!("line {line_no}: {msg}"));
        let report: Report = serde_json::from_str(line).map_err(|e| data_err(e.to_string()))?;
        let report = validate_report(report, &schema)
            .map_err(|v| data_err(format!("invalid report: {v:?}")))?
            .into_inner();
        if !seen.insert(report.report_id.clone()) {
            return Err(data_err(format!("duplicate report {}", report.report_id)));
        }
        let region = grid
            .region_of(report.latitude, report.longitude)
            .map_err(|e| data_err(e.to_string()))?;
        let p = period
            .period_of(report.timestamp)
            .map_err(|e| data_err(e.to_string()))?;
        windows.entry((p, region)).or_default().push(report);
    }
    Ok((schema, windows))
}

/// Batch detection over an event log (recorded placements are kept) or a
/// file of report lines. Writes one assessment record per line.
pub fn detect(opts: &DetectOptions) -> Result<Vec<AssessmentRecord>, CliError> {
    let text = fs::read_to_string(&opts.input).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => {
            CliError::Usage(format!("{} does not exist", opts.input.display()))
        }
        _ => CliError::Environment(format!("cannot read {}: {e}", opts.input.display())),
    })?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let is_log = first
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("format_version").is_some());
    let (schema, windows) = if is_log {
        windows_from_log(&text)?
    } else {
        windows_from_reports(&text, opts)?
    };
    let detection = DetectionConfig {
        iterative_detection: opts.iterative,
    };
    let records: Vec<AssessmentRecord> = detect_windows(windows, &schema, &detection)?
        .iter()
        .flat_map(DetectionWindow::records)
        .collect();
    let mut body = String::new();
    for r in &records {
        body.push_str(&serde_json::to_string(r).expect("record serialises"));
        body.push('\n');
    }
    write_file(&opts.out, &body)?;
    Ok(records)
}

// report

/// Exports the aggregate of one region. The output format follows the
/// extension of `out`: `.csv` for CSV, anything else JSON.
pub fn report(
    log: &Path,
    region: usize,
    from: Option<u64>,
    to: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let replayed = read_log(log).map_err(|e| store_error(log, e))?;
    let ledger = &replayed.ledger;
    if !ledger.context().grid.contains_region(region) {
        return Err(CliError::Usage(format!(
            "region {region} is outside the grid ({} regions)",
            ledger.context().grid.region_count()
        )));
    }
    let last = ledger
        .report_windows()
        .map(|k: WindowKey| k.period)
        .max()
        .unwrap_or(0);
    let (from, to) = (from.unwrap_or(0), to.unwrap_or(last));
    if from > to {
        return Err(CliError::Usage(format!("--from {from} is after --to {to}")));
    }
    let agg =
        aggregate_region(ledger, region, from, to).map_err(|e| CliError::Usage(e.to_string()))?;
    let csv = out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    write_file(out, &if csv { to_csv(&agg) } else { to_json(&agg) })
}
