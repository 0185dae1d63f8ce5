use std::path::Path;

use rr_lab::aggregate::aggregate_dir;
use rr_lab::records::{self, RunFile};
use rr_lab::sweep::run_sweep;
use rr_lab::{HarnessError, SweepConfig};

fn config(body: &str) -> SweepConfig {
    SweepConfig::parse(&format!("schema_version = 1\n{body}"), Path::new(".")).unwrap()
}

fn chain(omega: f64, modes: &str, seeds: usize) -> SweepConfig {
    config(&format!(
        "name = \"t\"\nmaster_seed = 5\nseeds = {seeds}\nmodes = {modes}\n\
         [environment]\nkind = \"chain\"\n[noise]\nkind = \"symmetric\"\nomega = {omega}\n\
         [learner]\nmax_steps = 3000\neval_interval = 500\n"
    ))
}

fn read_run(dir: &Path, mode: &str, i: usize) -> RunFile {
    records::read(&dir.join("runs").join(mode).join(format!("run_{i:04}.csv"))).unwrap()
}

#[test]
fn noiseless_true_and_noisy_curves_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_sweep(&chain(0.0, "[\"true\", \"noisy\"]", 1), tmp.path(), 1).unwrap();
    let curves = &report.aggregate.curves;
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0].points, curves[1].points);
    assert_eq!(
        read_run(tmp.path(), "true", 0).records,
        read_run(tmp.path(), "noisy", 0).records
    );
}

#[test]
fn sweep_writes_runs_aggregates_summary_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = chain(
        0.3,
        "[\"noisy\", \"surrogate-known\", \"surrogate-estimated\"]",
        3,
    );
    let report = run_sweep(&cfg, tmp.path(), 2).unwrap();
    assert_eq!(report.failed, 0);
    for mode in ["noisy", "surrogate-known", "surrogate-estimated"] {
        for i in 0..3 {
            let run = read_run(tmp.path(), mode, i);
            assert_eq!(run.meta.config_hash, cfg.hash());
            assert_eq!(run.records.last().unwrap().step, 3000);
        }
        let agg =
            std::fs::read_to_string(tmp.path().join(format!("aggregate_{mode}.csv"))).unwrap();
        assert!(agg.contains(&format!("# config_hash={}\n", cfg.hash())));
        assert!(agg.contains("\nstep,runs,mean,p_low,p_high,success_rate\n"));
    }
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 4);
    let svg = std::fs::read_to_string(tmp.path().join("curves.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    let rows = &report.aggregate.summaries;
    assert!(rows.iter().all(|r| r.success_rate.is_some() && r.runs == 3));
}

#[test]
fn reaggregation_reproduces_sweep_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = chain(0.2, "[\"noisy\", \"surrogate-known\"]", 2);
    run_sweep(&cfg, tmp.path(), 1).unwrap();
    let before = std::fs::read(tmp.path().join("aggregate_noisy.csv")).unwrap();
    let summary = std::fs::read(tmp.path().join("summary.csv")).unwrap();
    aggregate_dir(tmp.path(), 10.0, 90.0, "t").unwrap();
    assert_eq!(
        std::fs::read(tmp.path().join("aggregate_noisy.csv")).unwrap(),
        before
    );
    assert_eq!(
        std::fs::read(tmp.path().join("summary.csv")).unwrap(),
        summary
    );
}

#[test]
fn failed_runs_are_recorded_and_the_sweep_continues() {
    // ω = 0.5 makes the binary channel singular, so only surrogate-known fails.
    let tmp = tempfile::tempdir().unwrap();
    let report = run_sweep(
        &chain(0.5, "[\"noisy\", \"surrogate-known\"]", 2),
        tmp.path(),
        1,
    )
    .unwrap();
    assert_eq!(report.failed, 2);
    let msg =
        std::fs::read_to_string(tmp.path().join("runs/surrogate-known/run_0000.failed")).unwrap();
    assert!(msg.contains("singular"), "{msg}");
    let rows = &report.aggregate.summaries;
    assert_eq!(
        (rows[0].mode.as_str(), rows[0].runs, rows[0].failed),
        ("noisy", 2, 0)
    );
    assert_eq!(
        (rows[1].mode.as_str(), rows[1].runs, rows[1].failed),
        ("surrogate-known", 0, 2)
    );
}

#[test]
fn misaligned_run_files_are_resampled() {
    let tmp = tempfile::tempdir().unwrap();
    run_sweep(&chain(0.1, "[\"noisy\"]", 2), tmp.path(), 1).unwrap();
    let path = tmp.path().join("runs/noisy/run_0001.csv");
    let mut run = records::read(&path).unwrap();
    run.records.retain(|r| r.step % 1000 == 0);
    std::fs::write(&path, records::encode(&run)).unwrap();
    let agg = aggregate_dir(tmp.path(), 10.0, 90.0, "t").unwrap();
    let curve = &agg.curves[0];
    assert!(curve.resampled);
    assert_eq!(
        curve.points.iter().map(|p| p.step).collect::<Vec<_>>(),
        vec![1000, 2000, 3000]
    );
}

#[test]
fn empty_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        aggregate_dir(tmp.path(), 10.0, 90.0, "t"),
        Err(HarnessError::EmptyInput(_))
    ));
    std::fs::create_dir_all(tmp.path().join("runs/noisy")).unwrap();
    assert!(matches!(
        aggregate_dir(tmp.path(), 10.0, 90.0, "t"),
        Err(HarnessError::EmptyInput(_))
    ));
}

#[test]
fn phased_sweep_records_one_point_per_phase() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        "seeds = 2\nmodes = [\"noisy\", \"surrogate-known\"]\n[environment]\nkind = \"chain\"\n\
         [noise]\nkind = \"symmetric\"\nomega = 0.2\n\
         [learner]\nalgorithm = \"phased-q\"\nphases = 40\nsamples_per_phase = 50\n",
    );
    run_sweep(&cfg, tmp.path(), 1).unwrap();
    let run = read_run(tmp.path(), "surrogate-known", 0);
    assert_eq!(run.records.len(), 40);
    // Five non-terminal states, two actions.
    assert_eq!(run.records[0].step, 50 * 10);
    assert!(run.meta.q_error.is_some() && run.meta.final_success.is_some());
}

#[test]
fn file_environment_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("two.toml"),
        "gamma = 0.8\ntransition = [[[0.7, 0.3], [0.2, 0.8]], [[0.6, 0.4], [0.1, 0.9]]]\n\
         reward = [[[0.0, 1.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]]\n",
    )
    .unwrap();
    let text = "schema_version = 1\nseeds = 1\nmodes = [\"surrogate-known\"]\n\
                [environment]\nkind = \"file\"\npath = \"two.toml\"\nhorizon = 20\n\
                [noise]\nkind = \"symmetric\"\nomega = 0.2\n[learner]\nmax_steps = 2000\n";
    let cfg = SweepConfig::parse(text, tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let report = run_sweep(&cfg, &out, 1).unwrap();
    assert_eq!(report.failed, 0);
    assert_eq!(read_run(&out, "surrogate-known", 0).records.len(), 4);
}

#[test]
fn config_errors_name_the_offending_key() {
    let bad = |body: &str| {
        SweepConfig::parse(
            &format!("schema_version = 1\nseeds = 1\n{body}"),
            Path::new("."),
        )
        .unwrap_err()
    };
    let e = bad("[environment]\nkind = \"chain\"\n[learner]\nmax_steps = \"x\"\n");
    assert_eq!(e.path, "learner.max_steps");
    let e = bad("[environment]\nkind = \"moon\"\n");
    assert_eq!(e.path, "environment.kind");
    let e = bad("modes = [\"loud\"]\n[environment]\nkind = \"chain\"\n");
    assert_eq!(e.path, "modes[0]");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut sweeps = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        if text.contains("schema_version") {
            SweepConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            sweeps += 1;
        } else {
            rr_lab::mdp_file::load(&path).unwrap();
        }
    }
    assert!(sweeps >= 5);
}
