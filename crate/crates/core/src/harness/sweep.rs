use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::{load_metrics, run_training, MetricsRecord, METRICS_FILE};
use crate::error::{Error, Result};

/// Swept dimension of an experiment grid.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    BombFreq(Vec<f64>),
    StopProb(Vec<f64>),
    /// `(episodic_memory, dual_alpha)` pairs.
    Ablation(Vec<(bool, bool)>),
}

impl SweepAxis {
    pub fn bomb_freqs() -> Self {
        SweepAxis::BombFreq(vec![0.25, 0.5, 0.75])
    }

    pub fn stop_probs() -> Self {
        SweepAxis::StopProb(vec![0.9, 0.7])
    }

    /// Full SAC-I, episodic memory only, dual temperature only, vanilla.
    pub fn ablation_grid() -> Self {
        SweepAxis::Ablation(vec![(true, true), (true, false), (false, true), (false, false)])
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bomb_freq" => Ok(Self::bomb_freqs()),
            "stop_prob" => Ok(Self::stop_probs()),
            "ablation" => Ok(Self::ablation_grid()),
            other => Err(Error::Usage(format!("unknown sweep axis {other:?}"))),
        }
    }

    fn coords(&self) -> Vec<Vec<(String, String)>> {
        match self {
            SweepAxis::BombFreq(v) => v.iter().map(|f| vec![("bomb_freq".into(), f.to_string())]).collect(),
            SweepAxis::StopProb(v) => v.iter().map(|p| vec![("stop_prob".into(), p.to_string())]).collect(),
            SweepAxis::Ablation(v) => v
                .iter()
                .map(|(e, d)| {
                    vec![
                        ("episodic_memory".into(), e.to_string()),
                        ("dual_alpha".into(), d.to_string()),
                    ]
                })
                .collect(),
        }
    }
}

/// Grid coordinates of one run: axis values plus the seed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub coords: Vec<(String, String)>,
    pub seed: u64,
}

impl CellId {
    /// Label of the axis point without the seed, e.g. `bomb_freq=0.25`.
    pub fn point(&self) -> String {
        self.coords.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
    }

    pub fn file_name(&self) -> String {
        format!("{self}.csv")
    }

    /// Inverse of [`CellId::file_name`] (and of `Display`).
    pub fn parse(name: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("not a sweep cell name: {name:?}"));
        let stem = name.strip_suffix(".csv").unwrap_or(name);
        let (point, seed) = stem.rsplit_once("__seed=").ok_or_else(bad)?;
        let coords = point
            .split(',')
            .map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(bad))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            coords,
            seed: seed.parse().map_err(|_| bad())?,
        })
    }

    fn apply(&self, template: &TrainConfig) -> Result<TrainConfig> {
        let mut c = template.clone();
        c.run.seed = self.seed;
        let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Usage(format!("{v:?}: {e}")));
        let flag = |v: &str| v.parse::<bool>().map_err(|e| Error::Usage(format!("{v:?}: {e}")));
        for (k, v) in &self.coords {
            match k.as_str() {
                "bomb_freq" => c.env.bomb_freq = num(v)?,
                "stop_prob" => c.env.stop_prob = num(v)?,
                "episodic_memory" => c.saci.episodic_memory = flag(v)?,
                "dual_alpha" => c.saci.dual_alpha = flag(v)?,
                other => return Err(Error::Usage(format!("unknown sweep coordinate {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__seed={}", self.point(), self.seed)
    }
}

pub fn sweep_cells(axis: &SweepAxis, seeds: &[u64]) -> Vec<CellId> {
    axis.coords()
        .into_iter()
        .flat_map(|coords| {
            seeds.iter().map(move |&seed| CellId {
                coords: coords.clone(),
                seed,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: CellId,
    pub records: Vec<MetricsRecord>,
}

impl CellResult {
    pub fn final_avg100(&self) -> Option<f64> {
        self.records.last().map(|r| r.avg100)
    }
}

/// Final-avg100 statistics of one axis point across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: String,
    pub runs: usize,
    pub mean_final_avg100: f64,
    pub std_final_avg100: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub summary: Vec<PointSummary>,
}

impl SweepResult {
    pub fn point(&self, label: &str) -> Option<&PointSummary> {
        self.summary.iter().find(|s| s.point == label)
    }
}

/// Runs every (axis point, seed) cell of `template` on `workers` threads.
/// With `out_dir`, each cell writes `<cell>/metrics.csv` (and its
/// checkpoint), then `<cell>.csv`, `summary.csv` and `curve_<point>.csv`
/// are written at the top level.
pub fn sweep(
    template: &TrainConfig,
    axis: &SweepAxis,
    seeds: &[u64],
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::Usage("a sweep needs at least one seed".into()));
    }
    let cells = sweep_cells(axis, seeds);
    let configs = cells.iter().map(|c| c.apply(template)).collect::<Result<Vec<_>>>()?;
    let results: Vec<Mutex<Option<Result<Vec<MetricsRecord>>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let dir = out_dir.map(|d| d.join(cells[i].to_string()));
                let r = run_training(&configs[i], dir.as_deref()).map(|o| o.records);
                *results[i].lock().expect("cell slot") = Some(r);
            });
        }
    });
    let mut out = Vec::with_capacity(cells.len());
    for (cell, slot) in cells.into_iter().zip(results) {
        let records = slot.into_inner().expect("cell slot").expect("every cell ran")?;
        out.push(CellResult { cell, records });
    }

    let mut summary = Vec::new();
    for coords in axis.coords() {
        let runs: Vec<&CellResult> = out.iter().filter(|c| c.cell.coords == coords).collect();
        let finals: Vec<f64> = runs.iter().filter_map(|c| c.final_avg100()).collect();
        let (mean, std) = mean_std(&finals);
        summary.push(PointSummary {
            point: runs[0].cell.point(),
            runs: runs.len(),
            mean_final_avg100: mean,
            std_final_avg100: std,
        });
    }
    let result = SweepResult { cells: out, summary };
    if let Some(d) = out_dir {
        write_sweep(d, &result)?;
    }
    Ok(result)
}

fn write_sweep(dir: &Path, result: &SweepResult) -> Result<()> {
    for c in &result.cells {
        fs::copy(
            dir.join(c.cell.to_string()).join(METRICS_FILE),
            dir.join(c.cell.file_name()),
        )?;
    }
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    for s in &result.summary {
        w.serialize(s).map_err(csv_err)?;
    }
    w.flush()?;
    for s in &result.summary {
        let series: Vec<Vec<(f64, f64)>> = result
            .cells
            .iter()
            .filter(|c| c.cell.point() == s.point)
            .map(|c| curve(&c.records))
            .collect();
        let rows = export_plot_data(&series, 1)?;
        write_plot_csv(fs::File::create(dir.join(format!("curve_{}.csv", s.point)))?, &rows)?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Reads back the cells of a finished sweep directory.
pub fn load_sweep_cells(dir: &Path) -> Result<Vec<CellResult>> {
    let mut cells = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if path.is_file() && name.contains("__seed=") {
            cells.push(CellResult {
                cell: CellId::parse(name)?,
                records: load_metrics(&path)?,
            });
        }
    }
    cells.sort_by(|a, b| a.cell.cmp(&b.cell));
    Ok(cells)
}

/// `(step, avg100)` points of a metrics stream.
pub fn curve(records: &[MetricsRecord]) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.step as f64, r.avg100)).collect()
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub step: f64,
    pub mean: f64,
    pub std: f64,
}

/// Trailing moving average over `window` points (1 leaves values unchanged).
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let tail = &values[(i + 1).saturating_sub(w)..=i];
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect()
}

/// Linear interpolation of `(x, y)` knots sorted by `x`; knots are returned exactly.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let i = points.partition_point(|p| p.0 < x);
    if i < points.len() && points[i].0 == x {
        return points[i].1;
    }
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[i - 1].1;
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Mean and std band of several `(step, value)` series after smoothing.
/// Series on different step grids are resampled onto the coarsest one (the
/// one with the fewest points), clipped to the range all series cover.
pub fn export_plot_data(series: &[Vec<(f64, f64)>], window: usize) -> Result<Vec<PlotRow>> {
    if series.is_empty() || series.iter().any(|s| s.is_empty()) {
        return Err(Error::Usage("plot export needs at least one non-empty metrics series".into()));
    }
    let smoothed: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            let ys: Vec<f64> = s.iter().map(|p| p.1).collect();
            s.iter().map(|p| p.0).zip(smooth(&ys, window)).collect()
        })
        .collect();
    let lo = smoothed.iter().map(|s| s[0].0).fold(f64::NEG_INFINITY, f64::max);
    let hi = smoothed.iter().map(|s| s[s.len() - 1].0).fold(f64::INFINITY, f64::min);
    let coarse = smoothed.iter().min_by_key(|s| s.len()).expect("non-empty");
    let grid: Vec<f64> = coarse.iter().map(|p| p.0).filter(|&x| x >= lo && x <= hi).collect();
    Ok(grid
        .into_iter()
        .map(|x| {
            let vals: Vec<f64> = smoothed.iter().map(|s| interpolate(s, x)).collect();
            let (mean, std) = mean_std(&vals);
            PlotRow { step: x, mean, std }
        })
        .collect())
}

/// [`export_plot_data`] over metrics files.
pub fn export_plot_files(paths: &[PathBuf], window: usize) -> Result<Vec<PlotRow>> {
    let series = paths
        .iter()
        .map(|p| load_metrics(p).map(|r| curve(&r)))
        .collect::<Result<Vec<_>>>()?;
    export_plot_data(&series, window)
}

pub fn write_plot_csv<W: Write>(out: W, rows: &[PlotRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
