use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use radarnet::ela::{FeatureSource, FeatureTable, FEATURE_COUNT};
use radarnet::manifest::{InstanceSource, Manifest, ManifestEntry};
use radarnet::runlog;
use radarnet::terrain::TerrainClass;
use radarnet::Instance;
use radarnet_cli::pipeline;

fn synthetic_manifest(dir: &Path, n: usize) -> PathBuf {
    let m = Manifest {
        instances: (0..n)
            .map(|i| ManifestEntry {
                name: format!("s{i}"),
                source: InstanceSource::Synthetic {
                    seed: i as u64,
                    class: TerrainClass::ALL[i % 3],
                },
                tau: None,
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, m.to_json()).unwrap();
    path
}

fn instances(dir: &Path, n: usize) -> Vec<Instance> {
    let path = synthetic_manifest(dir, n);
    pipeline::load_instances(&path, &Default::default()).unwrap()
}

fn snapshot(root: &Path) -> BTreeSet<(PathBuf, Vec<u8>)> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out
}

#[test]
fn mini_plan_yields_one_valid_log_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instances(tmp.path(), 2);
    let algos = pipeline::parse_algorithms("RandomSearch,CMA_00000000000").unwrap();
    let logs = tmp.path().join("logs");
    let s = pipeline::run_grid(&inst, &algos, &[0, 1, 2], 40, &logs, 2).unwrap();
    assert_eq!(s.executed, 12);
    let runs = pipeline::read_logs(&logs).unwrap();
    assert_eq!(runs.len(), 12);
    for r in &runs {
        r.validate().unwrap();
        assert_eq!(r.header.budget, 40);
        assert_eq!(r.points[0].evaluation, 1);
    }
}

#[test]
fn rerun_regenerates_only_missing_or_broken_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instances(tmp.path(), 2);
    let algos = pipeline::parse_algorithms("SobolSearch,DE").unwrap();
    let full = tmp.path().join("full");
    pipeline::run_grid(&inst, &algos, &[0, 1, 2], 30, &full, 1).unwrap();
    let reference = snapshot(&full);

    let resumed = tmp.path().join("resumed");
    pipeline::run_grid(&inst, &algos, &[0, 1, 2], 30, &resumed, 1).unwrap();
    fs::remove_file(runlog::run_path(&resumed, "s0", "DE", 1)).unwrap();
    let broken = runlog::run_path(&resumed, "s1", "SobolSearch", 2);
    fs::write(
        &broken,
        "# algo=SobolSearch instance=s1 seed=2 budget=30 dim=15\n1 5\n2 9\n",
    )
    .unwrap();
    let stale = runlog::run_path(&resumed, "s1", "DE", 0);
    let mut interrupted = stale.clone().into_os_string();
    interrupted.push(".tmp");
    fs::write(
        &stale,
        "# algo=DE instance=s1 seed=0 budget=30 dim=15\n1 7\n",
    )
    .unwrap();
    fs::rename(&stale, &interrupted).unwrap();

    let s = pipeline::run_grid(&inst, &algos, &[0, 1, 2], 30, &resumed, 1).unwrap();
    assert_eq!((s.executed, s.skipped, s.quarantined), (3, 9, 2));
    let side: Vec<_> = snapshot(&resumed)
        .into_iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e != "dat"))
        .map(|(p, _)| p)
        .collect();
    assert_eq!(side.len(), 2, "{side:?}");
    assert!(side.iter().all(|p| p.extension().unwrap() == "partial"));
    let finished: BTreeSet<_> = snapshot(&resumed)
        .into_iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e == "dat"))
        .collect();
    assert_eq!(finished, reference);
}

#[test]
fn census_command_writes_loadable_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let m = pipeline::gen_instances(tmp.path(), 5, 2).unwrap();
    assert_eq!(m.instances.len(), 18);
    let inst =
        pipeline::load_instances(&tmp.path().join("manifest.json"), &Default::default()).unwrap();
    assert_eq!(inst.len(), 18);
    let again = tempfile::tempdir().unwrap();
    pipeline::gen_instances(again.path(), 5, 2).unwrap();
    assert_eq!(
        fs::read(tmp.path().join("grids/tile01-4.asc")).unwrap(),
        fs::read(again.path().join("grids/tile01-4.asc")).unwrap()
    );
}

#[test]
fn end_to_end_mini_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instances(tmp.path(), 6);
    let algos = pipeline::parse_algorithms("RandomSearch,SobolSearch,CMA_00000000000").unwrap();
    let logs = tmp.path().join("logs");
    pipeline::run_grid(&inst, &algos, &[0, 1, 2], 25, &logs, 1).unwrap();

    let dem = pipeline::feature_table(&inst, FeatureSource::Dem, 1).unwrap();
    let dem_again = pipeline::feature_table(&inst, FeatureSource::Dem, 1).unwrap();
    assert_eq!(dem.to_csv(), dem_again.to_csv());
    let radar = pipeline::feature_table(&inst[..2], FeatureSource::Radar, 1).unwrap();
    assert!(radar
        .rows
        .iter()
        .all(|(_, _, f)| f.0.len() == FEATURE_COUNT));
    assert_eq!(FeatureTable::parse(&dem.to_csv()).unwrap(), dem);

    let fixed = pipeline::fixed_budget_table(&logs, 25).unwrap();
    let table = pipeline::performance_table(&fixed).unwrap();
    let features = vec![(
        FeatureSource::Dem,
        pipeline::features_by_instance(&dem, FeatureSource::Dem),
    )];
    let report = pipeline::select_report(&table, &features, 5, 3).unwrap();
    let names: BTreeSet<&str> = report.rows.iter().map(|r| r.comparator.as_str()).collect();
    assert_eq!(
        names,
        BTreeSet::from(["VBS", "SBS", "CMA_00000000000", "S_dem"])
    );
    for r in report.rows_for("VBS") {
        assert_eq!(r.summary.median, 0.0);
    }
    for (s, r) in report.rows_for("SBS").enumerate() {
        let (train, test) = radarnet::selector::split(table.instances(), 0.8, 3 + s as u64);
        let sbs = table.sbs(&train).unwrap();
        assert_eq!(report.sbs[s], sbs);
        assert!(r.summary.per_instance.iter().all(|(_, a, _)| *a == sbs));
        assert_eq!(r.summary.per_instance.len(), test.len());
    }
    for r in report.rows_for("S_dem") {
        assert!(r.summary.median >= 0.0);
    }
    assert!(report.summary_csv().lines().count() > 1);
}

#[test]
fn missing_logs_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instances(tmp.path(), 2);
    let logs = tmp.path().join("logs");
    let algos = pipeline::parse_algorithms("RandomSearch,PSO").unwrap();
    pipeline::run_grid(&inst, &algos, &[0], 10, &logs, 1).unwrap();
    fs::remove_dir_all(logs.join("s1").join("PSO")).unwrap();
    let fixed = pipeline::fixed_budget_table(&logs, 10).unwrap();
    let err = pipeline::performance_table(&fixed).unwrap_err().to_string();
    assert!(err.contains("s1/PSO"), "{err}");
    assert!(pipeline::fixed_budget_table(&logs, 11).is_err());
}

#[test]
fn ks_report_covers_all_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instances(tmp.path(), 1);
    let logs = tmp.path().join("logs");
    let algos = pipeline::parse_algorithms("all").unwrap();
    pipeline::run_grid(&inst, &algos, &[0, 1], 5, &logs, 1).unwrap();
    let fixed = pipeline::fixed_budget_table(&logs, 5).unwrap();
    let rows = pipeline::ks_report(&fixed, 0.01);
    assert_eq!(rows.len(), 78);
    assert!(rows.iter().all(|r| r.algorithm_a != r.algorithm_b));
    assert_eq!(pipeline::ks_csv(&rows).lines().count(), 79);
}

#[test]
fn identical_logs_are_never_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instances(tmp.path(), 1);
    let logs = tmp.path().join("logs");
    let algos = pipeline::parse_algorithms("RandomSearch").unwrap();
    pipeline::run_grid(&inst, &algos, &[0, 1, 2, 3, 4], 20, &logs, 1).unwrap();
    let src = logs.join("s0").join("RandomSearch");
    let dst = logs.join("s0").join("PSO");
    fs::create_dir_all(&dst).unwrap();
    for e in fs::read_dir(&src).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p)
            .unwrap()
            .replace("algo=RandomSearch", "algo=PSO");
        fs::write(dst.join(p.file_name().unwrap()), text).unwrap();
    }
    let fixed = pipeline::fixed_budget_table(&logs, 20).unwrap();
    let rows = pipeline::ks_report(&fixed, 0.01);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].outcome.statistic, 0.0);
    assert!(!rows[0].outcome.reject);
}
