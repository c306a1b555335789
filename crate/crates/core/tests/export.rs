use crossover_core::sim::{cohort, preset, run, Trace, DEFAULT_REMNANT_POWER};
use crossover_core::stats::{report, RunSet, Series, StatsReport};
use crossover_core::table::Table;

fn short_scenario() -> crossover_core::sim::Scenario {
    let mut cfg = preset("first-order-sudden").unwrap();
    cfg.duration = 4.0;
    cfg.injection_time = 2.0;
    cfg.build().unwrap()
}

#[test]
fn trace_csv_round_trip_is_exact() {
    let tr = run(&short_scenario()).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let back = Trace::from_table(&Table::read_csv(buf.as_slice()).unwrap()).unwrap();
    assert_eq!(back.t, tr.t);
    assert_eq!(back.y_p, tr.y_p);
    assert_eq!(back.x_hp, tr.x_hp);
    assert_eq!(back.lambda1, tr.lambda1);
    assert_eq!(back.kr, tr.kr);
}

#[test]
fn trace_jsonl_has_one_object_per_row() {
    let tr = run(&short_scenario()).unwrap();
    let mut buf = Vec::new();
    tr.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), tr.len());
    let last: serde_json::Value = serde_json::from_str(lines[lines.len() - 1]).unwrap();
    assert_eq!(last["t"].as_f64().unwrap(), tr.t[tr.len() - 1]);
    assert_eq!(last["y_p"].as_f64().unwrap(), tr.y_p[tr.len() - 1]);
}

#[test]
fn saved_traces_ingest_into_a_run_set() {
    let scn = short_scenario();
    let dir = tempfile::tempdir().unwrap();
    let model = run(&scn).unwrap();
    let runs = cohort(&scn, 3, 5, DEFAULT_REMNANT_POWER).unwrap();
    let model_path = dir.path().join("model.csv");
    model.to_table().save(&model_path).unwrap();
    let mut paths = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let p = dir.path().join(format!("run{i}.csv"));
        r.to_table().save(&p).unwrap();
        paths.push(p);
    }
    let from_files = RunSet::load(&model_path, &paths).unwrap();
    let in_memory = RunSet::from_traces(&model, &runs).unwrap();
    assert_eq!(from_files, in_memory);
    let rep = report(&from_files, 0.05, 0.05).unwrap();
    let json = serde_json::to_string(&rep).unwrap();
    let back: StatsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn minimal_recorded_file_ingests() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.csv");
    std::fs::write(&path, "# recorded\nt,r,error,input,u_p,y_p,clamped\n0,0,0,0,0,0.5,0\n0.01,0,0,0,0,0.6,1\n").unwrap();
    let s = Series::load(&path).unwrap();
    assert_eq!(s.y, vec![0.5, 0.6]);
}
