//! Cross-run comparison tables, radar profiles and the report bundle.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::auv::{auv_trapezoid, bootstrap_ci, build_success_curve, per_trajectory_auv, BootstrapConfig, SuccessCurve};
use crate::error::{Result, TideError};
use crate::loops::loop_ratio;
use crate::memory::{memory_index, recall_lag, Alignment, PairedRuns};
use crate::model::{MemoryMode, RunLog, StateIdentityConfig, LOG_SCHEMA_VERSION};

pub use render::{render_curve, CurveFormat};

/// Percent with one decimal, rounding half to even: `0.53125 -> "53.1"`.
pub fn format_percent(x: f64) -> String {
    let tenths = (x * 1000.0).round_ties_even();
    if tenths == 0.0 {
        return "0.0".to_string();
    }
    let sign = if tenths < 0.0 { "-" } else { "" };
    let abs = tenths.abs() as u64;
    format!("{sign}{}.{}", abs / 10, abs % 10)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComparisonOptions {
    /// Horizon for every run; when unset each environment uses its runs' shared header value.
    pub t_max: Option<usize>,
    pub state_identity: StateIdentityConfig,
    pub alignment: Alignment,
    pub bootstrap: Option<BootstrapConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowMetrics {
    pub sr: f64,
    pub auv: f64,
    pub lr: Option<f64>,
    pub mi: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub recall_lag_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model_name: String,
    pub environment_name: String,
    pub memory_mode: MemoryMode,
    pub run_id: String,
    pub t_max: usize,
    pub metrics: RowMetrics,
    /// Metric name -> run ids it was computed from.
    pub provenance: BTreeMap<String, Vec<String>>,
    pub curve: SuccessCurve,
}

impl ComparisonRow {
    /// Curve label: the model name, tagged with the memory mode unless it is `full`.
    pub fn label(&self) -> String {
        match self.memory_mode {
            MemoryMode::Full => self.model_name.clone(),
            mode => format!("{} [{mode}]", self.model_name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

impl ComparisonTable {
    pub fn environments(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.environment_name.as_str()).collect()
    }
}

fn environment_horizons(runs: &[RunLog], options: &ComparisonOptions) -> Result<BTreeMap<String, usize>> {
    let mut horizons: BTreeMap<String, usize> = BTreeMap::new();
    for run in runs {
        let t_max = options.t_max.unwrap_or(run.metadata.t_max);
        let env = &run.metadata.environment_name;
        match horizons.get(env) {
            Some(&expected) if expected != t_max => {
                return Err(TideError::MismatchedHorizons { expected, found: t_max }.in_run(&run.metadata.run_id));
            }
            _ => {
                horizons.insert(env.clone(), t_max);
            }
        }
    }
    Ok(horizons)
}

fn absent_on<T>(result: Result<T>, absent: impl Fn(&TideError) -> bool) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) if absent(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

fn row_for(run: &RunLog, t_max: usize, options: &ComparisonOptions) -> Result<ComparisonRow> {
    let id = &run.metadata.run_id;
    let curve = build_success_curve(run, t_max)?;
    let auv = auv_trapezoid(&curve);
    let lr = absent_on(loop_ratio(run, &options.state_identity), |e| {
        matches!(e, TideError::NoActions)
    })?
    .map(|r| r.loop_ratio);
    let recall_lag_mean = absent_on(recall_lag(run, false), |e| {
        matches!(e, TideError::MissingAnnotation { .. })
    })?
    .and_then(|d| d[0].mean);
    let ci = match &options.bootstrap {
        Some(cfg) => {
            let scores = per_trajectory_auv(run, t_max)?;
            let (lo, hi) = bootstrap_ci(&scores, cfg.confidence, cfg.resamples, cfg.seed)?;
            Some((lo.min(auv), hi.max(auv)))
        }
        None => None,
    };
    let mut provenance = BTreeMap::new();
    for metric in ["sr", "auv"] {
        provenance.insert(metric.to_string(), vec![id.clone()]);
    }
    if lr.is_some() {
        provenance.insert("lr".into(), vec![id.clone()]);
    }
    if ci.is_some() {
        provenance.insert("ci".into(), vec![id.clone()]);
    }
    if recall_lag_mean.is_some() {
        provenance.insert("recall_lag_mean".into(), vec![id.clone()]);
    }
    Ok(ComparisonRow {
        model_name: run.metadata.model_name.clone(),
        environment_name: run.metadata.environment_name.clone(),
        memory_mode: run.metadata.memory_mode,
        run_id: id.clone(),
        t_max,
        metrics: RowMetrics {
            sr: curve.final_rate(),
            auv,
            lr,
            mi: None,
            ci,
            recall_lag_mean,
        },
        provenance,
        curve,
    })
}

/// One row per run, with MI filled in wherever a memory-enabled run has a
/// `none`-memory sibling for the same model and environment. Rows are
/// ordered by model, environment, then memory mode.
pub fn build_comparison(runs: &[RunLog], options: &ComparisonOptions) -> Result<ComparisonTable> {
    let mut seen = BTreeSet::new();
    for run in runs {
        let m = &run.metadata;
        if !seen.insert((&m.model_name, &m.environment_name, m.memory_mode)) {
            return Err(TideError::DuplicateRun {
                model: m.model_name.clone(),
                environment: m.environment_name.clone(),
                memory_mode: m.memory_mode.to_string(),
            });
        }
    }
    let horizons = environment_horizons(runs, options)?;

    let mut rows = runs
        .par_iter()
        .map(|run| {
            let t_max = horizons[&run.metadata.environment_name];
            row_for(run, t_max, options).map_err(|e| e.in_run(&run.metadata.run_id))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    for (row, run) in rows.iter_mut().zip(runs) {
        if run.metadata.memory_mode == MemoryMode::None {
            continue;
        }
        let sibling = runs.iter().find(|r| {
            r.metadata.memory_mode == MemoryMode::None
                && r.metadata.model_name == run.metadata.model_name
                && r.metadata.environment_name == run.metadata.environment_name
        });
        let Some(without) = sibling else { continue };
        let pair = PairedRuns {
            with_memory: run,
            without_memory: without,
            alignment: options.alignment,
        };
        let result = memory_index(&pair, row.t_max).map_err(|e| e.in_run(&run.metadata.run_id))?;
        for (run_id, task) in &result.excluded {
            warnings.push(format!(
                "mi {}: task {task} of run {run_id} excluded by alignment",
                row.run_id
            ));
        }
        row.metrics.mi = Some(result.mi);
        row.provenance.insert(
            "mi".into(),
            vec![run.metadata.run_id.clone(), without.metadata.run_id.clone()],
        );
    }

    rows.sort_by(|a, b| {
        (&a.model_name, &a.environment_name, a.memory_mode).cmp(&(&b.model_name, &b.environment_name, b.memory_mode))
    });
    Ok(ComparisonTable { rows, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarProfile {
    pub model_name: String,
    pub environment_name: String,
    pub run_id: String,
    pub auv_norm: Option<f64>,
    pub inv_lr_norm: Option<f64>,
    pub mi_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarOutput {
    pub floor: f64,
    pub cap: f64,
    pub profiles: Vec<RadarProfile>,
    pub warnings: Vec<String>,
}

impl RadarOutput {
    pub const DEFAULT_FLOOR: f64 = 0.05;
    pub const DEFAULT_CAP: f64 = 0.95;

    pub fn for_environment<'a>(&'a self, env: &'a str) -> impl Iterator<Item = &'a RadarProfile> + 'a {
        self.profiles.iter().filter(move |p| p.environment_name == env)
    }
}

/// Min-max scales one axis across models, then maps `[0, 1]` onto
/// `[floor, cap]`. A constant axis maps to the midpoint. Absent values stay absent.
pub fn normalize_axis(values: &[Option<f64>], floor: f64, cap: f64) -> Vec<Option<f64>> {
    let present = values.iter().flatten();
    let min = present.clone().copied().fold(f64::INFINITY, f64::min);
    let max = present.copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                if max > min {
                    let unit = (x - min) / (max - min);
                    floor * (1.0 - unit) + cap * unit
                } else {
                    (floor + cap) / 2.0
                }
            })
        })
        .collect()
}

fn mode_preference(mode: MemoryMode) -> u8 {
    match mode {
        MemoryMode::Full => 0,
        MemoryMode::Windowed(_) => 1,
        MemoryMode::None => 2,
    }
}

/// Per-environment radar profiles over AUV, `1 - LR` and MI.
///
/// Each model contributes one row per environment, preferring its `full`
/// memory run, then windowed, then `none`.
pub fn radar_normalize(table: &ComparisonTable, floor: f64, cap: f64) -> Result<RadarOutput> {
    if !(floor.is_finite() && cap.is_finite() && floor < cap) {
        return Err(TideError::InvalidArgument(format!(
            "radar floor must be below cap, got floor {floor} cap {cap}"
        )));
    }
    let mut chosen: BTreeMap<(&str, &str), &ComparisonRow> = BTreeMap::new();
    for row in &table.rows {
        let key = (row.environment_name.as_str(), row.model_name.as_str());
        match chosen.get(&key) {
            Some(prev) if mode_preference(prev.memory_mode) <= mode_preference(row.memory_mode) => {}
            _ => {
                chosen.insert(key, row);
            }
        }
    }

    let mut profiles = Vec::new();
    let mut warnings = Vec::new();
    for env in table.environments() {
        let rows: Vec<&ComparisonRow> = chosen.iter().filter(|((e, _), _)| *e == env).map(|(_, r)| *r).collect();
        if rows.len() < 2 {
            warnings.push(format!("radar {env}: single model, profile centered"));
        }
        let auv = normalize_axis(
            &rows.iter().map(|r| Some(r.metrics.auv)).collect::<Vec<_>>(),
            floor,
            cap,
        );
        let inv_lr = normalize_axis(
            &rows.iter().map(|r| r.metrics.lr.map(|lr| 1.0 - lr)).collect::<Vec<_>>(),
            floor,
            cap,
        );
        let mi = normalize_axis(&rows.iter().map(|r| r.metrics.mi).collect::<Vec<_>>(), floor, cap);
        for (i, row) in rows.iter().enumerate() {
            profiles.push(RadarProfile {
                model_name: row.model_name.clone(),
                environment_name: row.environment_name.clone(),
                run_id: row.run_id.clone(),
                auv_norm: auv[i],
                inv_lr_norm: inv_lr[i],
                mi_norm: mi[i],
            });
        }
    }
    Ok(RadarOutput {
        floor,
        cap,
        profiles,
        warnings,
    })
}

fn file_stem(env: &str) -> String {
    let stem: String = env
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() || stem.starts_with('.') {
        format!("env_{stem}")
    } else {
        stem
    }
}

fn csv_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn comparison_csv(table: &ComparisonTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "environment",
        "memory_mode",
        "run_id",
        "t_max",
        "sr",
        "auv",
        "lr",
        "mi",
        "ci_low",
        "ci_high",
        "recall_lag_mean",
    ])
    .map_err(csv_err)?;
    for row in &table.rows {
        let m = &row.metrics;
        w.write_record([
            row.model_name.clone(),
            row.environment_name.clone(),
            row.memory_mode.to_string(),
            row.run_id.clone(),
            row.t_max.to_string(),
            m.sr.to_string(),
            m.auv.to_string(),
            csv_cell(m.lr),
            csv_cell(m.mi),
            csv_cell(m.ci.map(|c| c.0)),
            csv_cell(m.ci.map(|c| c.1)),
            csv_cell(m.recall_lag_mean),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| TideError::Io(e.into_error()))
}

pub(crate) fn csv_err(e: csv::Error) -> TideError {
    TideError::Io(std::io::Error::other(e))
}

#[derive(Serialize)]
struct ReportJson<'a, C: Serialize> {
    schema: &'static str,
    config: &'a C,
    comparison: &'a ComparisonTable,
    radar: &'a RadarOutput,
}

/// Writes `report.json`, `comparison.csv`, `curves/<env>.{csv,svg}` and
/// `radar/<env>.json` under `out_dir`. Returns the written paths in order.
pub fn write_report_bundle<C: Serialize>(
    out_dir: &Path,
    table: &ComparisonTable,
    radar: &RadarOutput,
    config: &C,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir.join("curves"))?;
    fs::create_dir_all(out_dir.join("radar"))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: Vec<u8>| -> Result<()> {
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };

    let mut report = serde_json::to_vec_pretty(&ReportJson {
        schema: LOG_SCHEMA_VERSION,
        config,
        comparison: table,
        radar,
    })?;
    report.push(b'\n');
    put(out_dir.join("report.json"), report)?;
    put(out_dir.join("comparison.csv"), comparison_csv(table)?)?;

    for env in table.environments() {
        let curves: Vec<(String, SuccessCurve)> = table
            .rows
            .iter()
            .filter(|r| r.environment_name == env)
            .map(|r| (r.label(), r.curve.clone()))
            .collect();
        let stem = file_stem(env);
        put(
            out_dir.join("curves").join(format!("{stem}.csv")),
            render_curve(&curves, CurveFormat::Csv)?,
        )?;
        put(
            out_dir.join("curves").join(format!("{stem}.svg")),
            render_curve(&curves, CurveFormat::Svg)?,
        )?;

        let profiles: Vec<&RadarProfile> = radar.for_environment(env).collect();
        let mut json = serde_json::to_vec_pretty(&serde_json::json!({
            "environment": env,
            "floor": radar.floor,
            "cap": radar.cap,
            "profiles": profiles,
        }))?;
        json.push(b'\n');
        put(out_dir.join("radar").join(format!("{stem}.json")), json)?;
    }
    Ok(written)
}
