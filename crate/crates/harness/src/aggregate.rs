//! Learning-curve aggregation across runs.
//!
//! Percentiles use linear interpolation between order statistics at rank
//! `p/100 · (n - 1)`, the same rule as numpy's default.

use std::path::{Path, PathBuf};

use robust_reward::learners::RewardMode;

use crate::error::{io_err, HarnessError, Result};
use crate::records::{self, fmt_f64, RunFile};
use crate::svg;

pub const AGGREGATE_COLUMNS: [&str; 6] =
    ["step", "runs", "mean", "p_low", "p_high", "success_rate"];
pub const SUMMARY_COLUMNS: [&str; 9] = [
    "mode",
    "runs",
    "failed",
    "success_rate",
    "last30_mean",
    "last30_p_low",
    "last30_p_high",
    "q_error_mean",
    "singular_freezes",
];
/// Episodes averaged for the final score.
pub const FINAL_WINDOW: usize = 30;

/// `p` in `[0, 100]`; `sorted` ascending and non-empty.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub runs: usize,
    pub mean: f64,
    pub p_low: f64,
    pub p_high: f64,
    pub success_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub mode: String,
    pub points: Vec<CurvePoint>,
    /// Runs had different evaluation steps and were resampled.
    pub resampled: bool,
}

/// Mean and percentile band of episodic return at each evaluation step.
///
/// When runs disagree on their evaluation steps, every run is resampled
/// onto the grid of the run with the fewest points (cut at the earliest
/// final step), holding the last value at or before each grid step.
pub fn aggregate_runs(mode: &str, runs: &[RunFile], low: f64, high: f64) -> Result<AggregateCurve> {
    if runs.is_empty() {
        return Err(HarnessError::EmptyInput(PathBuf::from(mode)));
    }
    let steps = |r: &RunFile| r.records.iter().map(|x| x.step).collect::<Vec<_>>();
    let first = steps(&runs[0]);
    let aligned = runs.iter().all(|r| steps(r) == first);
    let grid = if aligned {
        first
    } else {
        log::warn!(
            "{mode}: runs have misaligned evaluation steps; resampling to the coarsest common grid"
        );
        let end = runs
            .iter()
            .filter_map(|r| r.records.last().map(|x| x.step))
            .min()
            .unwrap_or(0);
        let coarsest = runs
            .iter()
            .min_by_key(|r| r.records.len())
            .expect("non-empty");
        steps(coarsest).into_iter().filter(|&s| s <= end).collect()
    };
    let mut points = Vec::with_capacity(grid.len());
    for &g in &grid {
        let mut values = Vec::with_capacity(runs.len());
        let mut successes = Vec::new();
        for r in runs {
            let held = r.records.iter().take_while(|x| x.step <= g).last();
            if let Some(rec) = held {
                values.push(rec.ret);
                if let Some(s) = rec.success {
                    successes.push(s);
                }
            }
        }
        if values.is_empty() {
            continue;
        }
        let m = mean(&values);
        values.sort_by(f64::total_cmp);
        points.push(CurvePoint {
            step: g,
            runs: values.len(),
            mean: m,
            p_low: percentile(&values, low),
            p_high: percentile(&values, high),
            success_rate: (!successes.is_empty())
                .then(|| successes.iter().filter(|&&s| s).count() as f64 / successes.len() as f64),
        });
    }
    Ok(AggregateCurve {
        mode: mode.to_string(),
        points,
        resampled: !aligned,
    })
}

pub fn encode_curve(curve: &AggregateCurve, config_hash: &str, low: f64, high: f64) -> Vec<u8> {
    let mut head = String::new();
    for (k, v) in [
        ("schema_version", records::RUN_SCHEMA_VERSION.to_string()),
        ("config_hash", config_hash.to_string()),
        ("mode", curve.mode.clone()),
        ("percentile_low", fmt_f64(low)),
        ("percentile_high", fmt_f64(high)),
        ("resampled", curve.resampled.to_string()),
    ] {
        head.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(head.into_bytes());
    w.write_record(AGGREGATE_COLUMNS).expect("in-memory write");
    for p in &curve.points {
        w.write_record([
            p.step.to_string(),
            p.runs.to_string(),
            fmt_f64(p.mean),
            fmt_f64(p.p_low),
            fmt_f64(p.p_high),
            p.success_rate.map(fmt_f64).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: String,
    pub runs: usize,
    pub failed: usize,
    /// Share of runs whose final greedy policy was optimal.
    pub success_rate: Option<f64>,
    pub last30_mean: Option<f64>,
    pub last30_p_low: Option<f64>,
    pub last30_p_high: Option<f64>,
    pub q_error_mean: Option<f64>,
    pub singular_freezes: u64,
}

pub fn summarize(mode: &str, runs: &[RunFile], failed: usize, low: f64, high: f64) -> ModeSummary {
    let flags: Vec<bool> = runs.iter().filter_map(|r| r.meta.final_success).collect();
    let mut finals: Vec<f64> = runs.iter().filter_map(|r| r.meta.last30_mean).collect();
    let q_errors: Vec<f64> = runs.iter().filter_map(|r| r.meta.q_error).collect();
    let last30_mean = (!finals.is_empty()).then(|| mean(&finals));
    finals.sort_by(f64::total_cmp);
    ModeSummary {
        mode: mode.to_string(),
        runs: runs.len(),
        failed,
        success_rate: (!flags.is_empty())
            .then(|| flags.iter().filter(|&&s| s).count() as f64 / flags.len() as f64),
        last30_mean,
        last30_p_low: (!finals.is_empty()).then(|| percentile(&finals, low)),
        last30_p_high: (!finals.is_empty()).then(|| percentile(&finals, high)),
        q_error_mean: (!q_errors.is_empty()).then(|| mean(&q_errors)),
        singular_freezes: runs.iter().map(|r| r.meta.singular_freezes).sum(),
    }
}

pub fn encode_summary(rows: &[ModeSummary], config_hash: &str) -> Vec<u8> {
    let head = format!(
        "# schema_version={}\n# config_hash={config_hash}\n",
        records::RUN_SCHEMA_VERSION
    );
    let mut w = csv::Writer::from_writer(head.into_bytes());
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    let o = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.mode.clone(),
            r.runs.to_string(),
            r.failed.to_string(),
            o(r.success_rate),
            o(r.last30_mean),
            o(r.last30_p_low),
            o(r.last30_p_high),
            o(r.q_error_mean),
            r.singular_freezes.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Debug, Clone)]
pub struct DirAggregate {
    pub curves: Vec<AggregateCurve>,
    pub summaries: Vec<ModeSummary>,
    pub config_hash: String,
}

/// Order modes by their canonical position, unknown names last.
fn mode_rank(name: &str) -> (usize, String) {
    let pos = RewardMode::ALL
        .iter()
        .position(|m| m.name() == name)
        .unwrap_or(usize::MAX);
    (pos, name.to_string())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

/// Reads `dir/runs/<mode>/run_*.csv` (and `*.failed` markers), then writes
/// `aggregate_<mode>.csv`, `summary.csv` and `curves.svg` into `dir`.
pub fn aggregate_dir(dir: &Path, low: f64, high: f64, title: &str) -> Result<DirAggregate> {
    let runs_dir = dir.join("runs");
    if !runs_dir.is_dir() {
        return Err(HarnessError::EmptyInput(runs_dir));
    }
    let mut modes: Vec<String> = sorted_entries(&runs_dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    modes.sort_by_key(|m| mode_rank(m));

    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    let mut hashes = Vec::new();
    for mode in &modes {
        let mut runs = Vec::new();
        let mut failed = 0;
        for path in sorted_entries(&runs_dir.join(mode))? {
            match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => runs.push(records::read(&path)?),
                Some("failed") => failed += 1,
                _ => {}
            }
        }
        for r in &runs {
            if !hashes.contains(&r.meta.config_hash) {
                hashes.push(r.meta.config_hash.clone());
            }
        }
        summaries.push(summarize(mode, &runs, failed, low, high));
        if !runs.is_empty() {
            curves.push(aggregate_runs(mode, &runs, low, high)?);
        }
    }
    if curves.is_empty() && summaries.iter().all(|s| s.failed == 0) {
        return Err(HarnessError::EmptyInput(runs_dir));
    }
    let config_hash = match hashes.len() {
        0 => String::new(),
        1 => hashes.pop().expect("one hash"),
        _ => {
            log::warn!("run files carry {} different config hashes", hashes.len());
            "mixed".to_string()
        }
    };
    for c in &curves {
        let path = dir.join(format!("aggregate_{}.csv", c.mode));
        std::fs::write(&path, encode_curve(c, &config_hash, low, high)).map_err(io_err(&path))?;
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, encode_summary(&summaries, &config_hash)).map_err(io_err(&path))?;
    let path = dir.join("curves.svg");
    std::fs::write(&path, svg::render(&curves, title)).map_err(io_err(&path))?;
    Ok(DirAggregate {
        curves,
        summaries,
        config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::RunMeta;
    use robust_reward::learners::RunRecord;

    fn run(values: &[(u64, f64)]) -> RunFile {
        RunFile {
            meta: RunMeta {
                config_hash: "h".into(),
                mode: "noisy".into(),
                run_id: 0,
                seed: 0,
                noise: String::new(),
                episodes: 0,
                last30_mean: Some(values.last().map(|v| v.1).unwrap_or(0.0)),
                final_success: Some(true),
                q_error: None,
                singular_freezes: 0,
            },
            records: values
                .iter()
                .map(|&(step, ret)| RunRecord {
                    step,
                    episode: 0,
                    ret,
                    est_err_max: None,
                    est_e_plus: None,
                    est_e_minus: None,
                    success: None,
                })
                .collect(),
        }
    }

    #[test]
    fn percentile_rule() {
        let xs = [0.0, 1.0, 2.0];
        assert!((percentile(&xs, 10.0) - 0.2).abs() < 1e-12);
        assert!((percentile(&xs, 90.0) - 1.8).abs() < 1e-12);
        assert_eq!(percentile(&xs, 50.0), 1.0);
        assert_eq!(percentile(&[5.0], 90.0), 5.0);
    }

    #[test]
    fn single_run_collapses_band() {
        let c = aggregate_runs("m", &[run(&[(1, 0.5), (2, 0.7)])], 10.0, 90.0).unwrap();
        for p in &c.points {
            assert_eq!((p.p_low, p.p_high), (p.mean, p.mean));
        }
    }

    #[test]
    fn three_constant_curves() {
        let runs: Vec<_> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&v| run(&[(10, v), (20, v)]))
            .collect();
        let c = aggregate_runs("m", &runs, 10.0, 90.0).unwrap();
        for p in &c.points {
            assert_eq!(p.mean, 1.0);
            assert!((p.p_low - 0.2).abs() < 1e-12 && (p.p_high - 1.8).abs() < 1e-12);
        }
        assert!(!c.resampled);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            aggregate_runs("m", &[], 10.0, 90.0),
            Err(HarnessError::EmptyInput(_))
        ));
    }

    #[test]
    fn misaligned_runs_resample_to_coarsest_grid() {
        let a = run(&[(5, 1.0), (10, 2.0), (15, 3.0), (20, 4.0)]);
        let b = run(&[(10, 10.0), (20, 20.0), (30, 30.0)]);
        let c = aggregate_runs("m", &[a, b], 0.0, 100.0).unwrap();
        assert!(c.resampled);
        let steps: Vec<u64> = c.points.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![10, 20]);
        assert_eq!(c.points[0].mean, 6.0);
        assert_eq!(c.points[1].mean, 12.0);
    }

    #[test]
    fn summary_counts() {
        let runs = vec![run(&[(1, 1.0)]), run(&[(1, 3.0)])];
        let s = summarize("noisy", &runs, 1, 10.0, 90.0);
        assert_eq!((s.runs, s.failed), (2, 1));
        assert_eq!(s.success_rate, Some(1.0));
        assert_eq!(s.last30_mean, Some(2.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn band_is_ordered_and_inside_sample_range(
                curves in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..12),
                low in 0.0f64..50.0,
                high in 50.0f64..100.0,
            ) {
                let runs: Vec<RunFile> = curves
                    .iter()
                    .map(|vals| run(&vals.iter().enumerate().map(|(i, &v)| ((i as u64 + 1) * 10, v)).collect::<Vec<_>>()))
                    .collect();
                let c = aggregate_runs("m", &runs, low, high).unwrap();
                prop_assert_eq!(c.points.len(), 4);
                for (k, p) in c.points.iter().enumerate() {
                    let col: Vec<f64> = curves.iter().map(|v| v[k]).collect();
                    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(lo <= p.p_low && p.p_low <= p.p_high && p.p_high <= hi);
                    prop_assert!(lo - 1e-12 <= p.mean && p.mean <= hi + 1e-12);
                    prop_assert_eq!(p.runs, curves.len());
                }
            }

            #[test]
            fn percentile_is_monotone_in_p(mut xs in prop::collection::vec(-5.0f64..5.0, 1..30), a in 0.0f64..100.0, b in 0.0f64..100.0) {
                xs.sort_by(f64::total_cmp);
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(percentile(&xs, a) <= percentile(&xs, b) + 1e-12);
                prop_assert_eq!(percentile(&xs, 0.0), xs[0]);
                prop_assert_eq!(percentile(&xs, 100.0), xs[xs.len() - 1]);
            }
        }
    }
}
