use std::fs;

use coevo_core::dynamics::RemovalBudget;
use coevo_core::experiment::{run_experiment, run_trial, GraphSource};
use coevo_core::io::{self, load_config, write_outputs, Manifest};
use coevo_core::rng::{stream_rng, streams};
use coevo_core::synthesis::gen_ba;

#[test]
fn file_source_with_preprocessing_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream_rng(17, streams::GRAPH);
    let g = gen_ba(300, 2, &mut rng).unwrap();
    io::write_edge_list(&g, dir.path().join("ba.txt")).unwrap();
    // Pendant path hanging off node 0; preprocessing must strip it.
    let mut text = fs::read_to_string(dir.path().join("ba.txt")).unwrap();
    text.push_str("0 1000\n1000 1001\n");
    fs::write(dir.path().join("ba.txt"), text).unwrap();

    let (raw, d) = io::ingest(dir.path().join("ba.txt"), true).unwrap();
    assert_eq!(d.raw_nodes, 302);
    assert!(raw.node_count() <= 300 && raw.min_degree() >= 2);

    fs::create_dir(dir.path().join("cfg")).unwrap();
    fs::write(
        dir.path().join("cfg/run.toml"),
        "trials = 2\niterations = 12\npreprocess = true\nsnapshot_times = [0, 12]\n\
         [graph]\nmodel = \"file\"\npath = \"../ba.txt\"\n[dynamics]\nremoval_schedule = [5, 10, 20]\n",
    )
    .unwrap();
    let plan = load_config(dir.path().join("cfg/run.toml")).unwrap();
    assert!(matches!(&plan.base.graph, GraphSource::File { path } if path.exists()));
    assert_eq!(
        plan.base.dynamics.removal_budget,
        RemovalBudget::Schedule(vec![5, 10, 20])
    );

    let res = run_experiment(&plan.base, Some(2)).unwrap();
    for t in &res.trials {
        assert_eq!(t.node_count, raw.node_count());
        assert_eq!(t.records.len(), 13);
        let k: Vec<_> = t.records[1..]
            .iter()
            .map(|r| r.attempted_removals)
            .collect();
        assert_eq!(&k[..3], &[5, 10, 20]);
        assert!(k[3..].iter().all(|&x| x == 20));
        for r in &t.records {
            assert!(r.successful_removals <= r.attempted_removals);
        }
        for snap in &t.snapshots {
            assert_eq!(snap.mass(), t.node_count);
        }
    }
    assert_eq!(res.audit.violations(), 0);

    let out = dir.path().join("out");
    let manifest = write_outputs(&res, &out).unwrap();
    assert_eq!(Manifest::read(&out).unwrap(), manifest);
    assert!(manifest.paths().contains(&"snapshot_t12_trial1.csv"));
    for entry in &manifest.files {
        assert_eq!(
            fs::metadata(out.join(&entry.path)).unwrap().len(),
            entry.bytes
        );
    }

    // The resolved config copy reloads to the same experiment.
    let copy = load_config(out.join("config.toml")).unwrap();
    assert_eq!(
        run_trial(&copy.base, 1).unwrap().records,
        res.trials[1].records
    );
}

#[test]
fn trials_differ_but_repeat_exactly() {
    let text = "trials = 3\niterations = 20\n[graph]\nmodel = \"er\"\nn = 200\ndegree = 10\n";
    let plan = io::parse_config(text, std::path::Path::new("t.toml")).unwrap();
    let a = run_experiment(&plan.base, Some(1)).unwrap();
    let b = run_experiment(&plan.base, Some(3)).unwrap();
    assert_eq!(a.series, b.series);
    let finals: Vec<f64> = a
        .trials
        .iter()
        .map(|t| t.records[20].metrics.polarization_raw)
        .collect();
    assert!(finals[0] != finals[1] && finals[1] != finals[2]);
    assert_eq!(a.trials[2].seed, 2);
}
