//! Per-run CSV files.
//!
//! Each file starts with `# key=value` metadata lines (schema version,
//! config hash, mode, seed, the noise matrices and end-of-run figures),
//! followed by a header row and one row per evaluation point:
//!
//! `run_id,seed,step,episode,return,est_err_max,est_e_plus,est_e_minus,success`
//!
//! Empty cells mean "not applicable" (no estimate, or no oracle).

use std::path::Path;

use robust_reward::learners::RunRecord;

use crate::error::{io_err, HarnessError, Result};

pub const RUN_SCHEMA_VERSION: u32 = 1;
pub const RUN_COLUMNS: [&str; 9] = [
    "run_id",
    "seed",
    "step",
    "episode",
    "return",
    "est_err_max",
    "est_e_plus",
    "est_e_minus",
    "success",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub config_hash: String,
    pub mode: String,
    pub run_id: usize,
    pub seed: u64,
    /// Noise matrices, one per schedule segment.
    pub noise: String,
    pub episodes: u64,
    /// Mean true return over the last 30 completed episodes.
    pub last30_mean: Option<f64>,
    pub final_success: Option<bool>,
    pub q_error: Option<f64>,
    pub singular_freezes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub meta: RunMeta,
    pub records: Vec<RunRecord>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn encode(file: &RunFile) -> Vec<u8> {
    let m = &file.meta;
    let mut out = String::new();
    for (k, v) in [
        ("schema_version", RUN_SCHEMA_VERSION.to_string()),
        ("config_hash", m.config_hash.clone()),
        ("mode", m.mode.clone()),
        ("run_id", m.run_id.to_string()),
        ("seed", m.seed.to_string()),
        ("noise", m.noise.clone()),
        ("episodes", m.episodes.to_string()),
        ("last30_mean", opt(m.last30_mean.map(fmt_f64))),
        ("final_success", opt(m.final_success)),
        ("q_error", opt(m.q_error.map(fmt_f64))),
        ("singular_freezes", m.singular_freezes.to_string()),
    ] {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(out.into_bytes());
    w.write_record(RUN_COLUMNS).expect("in-memory write");
    for r in &file.records {
        w.write_record([
            m.run_id.to_string(),
            m.seed.to_string(),
            r.step.to_string(),
            r.episode.to_string(),
            fmt_f64(r.ret),
            opt(r.est_err_max.map(fmt_f64)),
            opt(r.est_e_plus.map(fmt_f64)),
            opt(r.est_e_minus.map(fmt_f64)),
            opt(r.success),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn read(path: &Path) -> Result<RunFile> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes, path)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<RunFile> {
    let bad = |message: String| HarnessError::Format {
        path: path.to_path_buf(),
        message,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| bad(e.to_string()))?;
    let mut meta = std::collections::BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            meta.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| bad(format!("missing metadata {k}")))
    };
    let version: u32 = get("schema_version")?
        .parse()
        .map_err(|_| bad("bad schema_version".into()))?;
    if version != RUN_SCHEMA_VERSION {
        return Err(bad(format!("unsupported schema_version {version}")));
    }
    let num = |k: &str| -> Result<Option<f64>> {
        let v = get(k)?;
        if v.is_empty() {
            return Ok(None);
        }
        v.parse().map(Some).map_err(|_| bad(format!("bad {k}")))
    };
    let meta = RunMeta {
        config_hash: get("config_hash")?,
        mode: get("mode")?,
        run_id: get("run_id")?
            .parse()
            .map_err(|_| bad("bad run_id".into()))?,
        seed: get("seed")?.parse().map_err(|_| bad("bad seed".into()))?,
        noise: get("noise")?,
        episodes: get("episodes")?
            .parse()
            .map_err(|_| bad("bad episodes".into()))?,
        last30_mean: num("last30_mean")?,
        final_success: match get("final_success")?.as_str() {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("bad final_success".into()))?),
        },
        q_error: num("q_error")?,
        singular_freezes: get("singular_freezes")?
            .parse()
            .map_err(|_| bad("bad singular_freezes".into()))?,
    };

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().ne(RUN_COLUMNS) {
        return Err(bad(format!(
            "unexpected columns {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let cell = |j: usize| row.get(j).unwrap_or("");
        let parse_f = |j: usize| -> Result<Option<f64>> {
            match cell(j) {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(format!("row {i}: bad {}", RUN_COLUMNS[j]))),
            }
        };
        let step: u64 = cell(2)
            .parse()
            .map_err(|_| bad(format!("row {i}: bad step")))?;
        if records.last().is_some_and(|r: &RunRecord| r.step >= step) {
            return Err(bad(format!("row {i}: steps must increase")));
        }
        records.push(RunRecord {
            step,
            episode: cell(3)
                .parse()
                .map_err(|_| bad(format!("row {i}: bad episode")))?,
            ret: parse_f(4)?.ok_or_else(|| bad(format!("row {i}: missing return")))?,
            est_err_max: parse_f(5)?,
            est_e_plus: parse_f(6)?,
            est_e_minus: parse_f(7)?,
            success: match cell(8) {
                "" => None,
                s => Some(
                    s.parse()
                        .map_err(|_| bad(format!("row {i}: bad success")))?,
                ),
            },
        });
    }
    Ok(RunFile { meta, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunFile {
        RunFile {
            meta: RunMeta {
                config_hash: "abc".into(),
                mode: "noisy".into(),
                run_id: 3,
                seed: 42,
                noise: "[[0.7,0.3],[0.3,0.7]]".into(),
                episodes: 10,
                last30_mean: Some(0.25),
                final_success: Some(true),
                q_error: None,
                singular_freezes: 0,
            },
            records: vec![
                RunRecord {
                    step: 500,
                    episode: 2,
                    ret: 1.0,
                    est_err_max: None,
                    est_e_plus: None,
                    est_e_minus: None,
                    success: Some(false),
                },
                RunRecord {
                    step: 1000,
                    episode: 5,
                    ret: 0.1,
                    est_err_max: Some(0.01),
                    est_e_plus: Some(0.3),
                    est_e_minus: Some(1e-7),
                    success: None,
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let bytes = encode(&f);
        assert_eq!(decode(&bytes, Path::new("x")).unwrap(), f);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains(
            "\nrun_id,seed,step,episode,return,est_err_max,est_e_plus,est_e_minus,success\n"
        ));
        assert!(text.contains("\n3,42,500,2,1,,,,false\n"));
    }

    #[test]
    fn rejects_non_increasing_steps() {
        let mut f = sample();
        f.records[1].step = 500;
        assert!(decode(&encode(&f), Path::new("x")).is_err());
    }
}
