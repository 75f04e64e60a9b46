use ccabeam::channel::{outage_probability, sum_se};
use ccabeam::sim::*;

fn small() -> SimConfig {
    let mut c = SimConfig::default();
    c.frames = 1;
    c.t = 10;
    c.powers = vec![0.02, 0.1];
    c
}

#[test]
fn csv_output_is_byte_identical_across_reruns() {
    let mut c = small();
    c.runs = 2;
    c.injected_error = 0.01;
    let schemes = [Scheme::CcaPredict, Scheme::TeAware, Scheme::Upa];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        emit_outputs(&run_batch(&c, &schemes).unwrap(), &c, d.path()).unwrap();
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "timing.csv")
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 3 + 3);
    for n in names {
        let a = std::fs::read(dirs[0].path().join(&n)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&n)).unwrap();
        assert_eq!(a, b, "{n:?}");
    }
}

#[test]
fn hovering_formation_repeats_metrics() {
    let mut c = small();
    c.mobility.v_xy_max = 0.0;
    c.mobility.v_z_min = 0.0;
    c.mobility.v_z_max = 0.0;
    for scheme in [Scheme::CcaGenie, Scheme::CcaPredict] {
        c.scheme = scheme;
        let recs = run_scenario(&c).unwrap();
        let first: Vec<_> = recs.iter().filter(|r| r.slot == recs[0].slot).collect();
        for r in &recs {
            let f = first.iter().find(|f| f.power == r.power).unwrap();
            assert_eq!(r.layers, f.layers);
            assert!((r.sum_se - f.sum_se).abs() < 1e-9 * f.sum_se.max(1.0), "{scheme} slot {}", r.slot);
        }
    }
}

#[test]
fn records_are_consistent() {
    let mut c = small();
    c.interference = true;
    let out = run_batch(&c, &[Scheme::CcaPredict, Scheme::FixedPartition]).unwrap();
    for o in &out {
        assert_eq!(o.records.len(), (c.t + 1) * c.powers.len());
        for r in &o.records {
            assert!((r.sum_se - sum_se(&r.sinr)).abs() < 1e-12);
            for (s, i) in r.snr.iter().zip(&r.sinr) {
                assert!(i <= s);
            }
            let m = r.snr.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(r.min_snr, m);
            assert_eq!(r.t_msi > 0.0, r.exchange);
        }
    }
    for row in summarize_se(&out) {
        let v: Vec<f64> = out
            .iter()
            .filter(|o| o.scheme == row.scheme)
            .flat_map(|o| o.records.iter().filter(|r| r.power == row.power).map(|r| r.sum_se))
            .collect();
        assert_eq!(row.records, v.len());
        assert!((row.mean_sum_se - v.iter().sum::<f64>() / v.len() as f64).abs() < 1e-12);
    }
    let rows = summarize_outage(&out, &c.thresholds_db);
    for w in rows.windows(2) {
        if w[0].scheme == w[1].scheme && w[0].power == w[1].power {
            assert!(w[0].threshold_db < w[1].threshold_db);
            assert!(w[0].outage <= w[1].outage);
        }
    }
    let snrs: Vec<f64> = out[0].records.iter().filter(|r| r.power == 0.1).map(|r| r.min_snr).collect();
    let row = rows.iter().find(|r| r.scheme == out[0].scheme && r.power == 0.1 && r.threshold_db == 0.0).unwrap();
    assert_eq!(row.outage, outage_probability(&snrs, 1.0));
}

#[test]
fn exchange_slots_use_true_angles() {
    let c = small();
    let world = World::build(&c, 3, true, true).unwrap();
    let arrays = Arrays::new(&c).unwrap();
    let a = evaluate(&c, &arrays, &world, Scheme::CcaPredict).unwrap();
    let b = evaluate(&c, &arrays, &world, Scheme::CcaGenie).unwrap();
    for (x, y) in a.records.iter().zip(&b.records).filter(|(x, _)| x.exchange) {
        assert_eq!(x.snr, y.snr);
    }
    assert!(world.slots[0].links.iter().all(|l| l.estimate.unwrap().aoa.azimuth_range.0 == l.truth.aoa.azimuth));
}

#[test]
fn bounds_required_for_te_aware() {
    let c = small();
    let world = World::build(&c, 1, true, false).unwrap();
    let arrays = Arrays::new(&c).unwrap();
    assert!(evaluate(&c, &arrays, &world, Scheme::TeAware).is_err());
}

#[test]
fn manifest_lists_files_and_config() {
    let c = small();
    let d = tempfile::tempdir().unwrap();
    let files = emit_outputs(&run_batch(&c, &[Scheme::Upa]).unwrap(), &c, d.path()).unwrap();
    let m: toml::Table = std::fs::read_to_string(d.path().join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(m["run"]["files"].as_array().unwrap().len(), files.len() - 1);
    let back: SimConfig = m["config"].clone().try_into().unwrap();
    assert_eq!(back, c);
    let header = std::fs::read_to_string(d.path().join("run_upa_1.csv")).unwrap();
    assert!(header.starts_with("seed,slot,exchange,power,sum_se,min_snr,snr_1,sinr_1,layer_1,res_az_1,res_el_1,snr_2"));
}
