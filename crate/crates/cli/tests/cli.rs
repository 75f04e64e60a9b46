use std::process::Command;

fn ccabeam(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ccabeam")).args(args).env("RUST_BACKTRACE", "0").output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let o = ccabeam(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn run_writes_tables_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "frames = 1\nt = 5\npowers = [0.05]\n[mobility]\nsigma_r2 = 0.06\n").unwrap();
    let a = d.path().join("a");
    let files = ["run_cca-predict_7.csv", "run_upa_8.csv", "summary_se.csv", "summary_outage.csv", "manifest.toml"];
    let mut first = Vec::new();
    for pass in 0..2 {
        let s = stdout(&["run", "-c", cfg.to_str().unwrap(), "--runs", "2", "--seed", "7", "--scheme", "cca-predict", "--scheme", "upa", "--out", a.to_str().unwrap()]);
        assert!(s.contains("cca-predict") && s.contains("upa"));
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(a.join(f)).unwrap()).collect();
        if pass == 0 {
            first = bytes;
        } else {
            assert!(first == bytes, "outputs differ between runs");
        }
    }
    let manifest = std::fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("sigma_r2 = 0.06"));
    assert_eq!(std::fs::read_to_string(a.join("run_upa_7.csv")).unwrap().lines().count(), 1 + 6);
}

#[test]
fn sweep_creates_one_directory_per_value() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("sw");
    stdout(&["sweep", "--param", "injected_error", "--values", "0,0.05", "--set", "frames=1", "--set", "t=3", "--out", out.to_str().unwrap()]);
    for v in ["injected_error=0", "injected_error=0.05"] {
        assert!(out.join(v).join("summary_se.csv").exists(), "{v}");
    }
}

#[test]
fn codebook_commands() {
    let s = stdout(&["codebook", "inspect", "--side", "tx"]);
    assert!(s.contains("N_act,max = 21"));
    assert!(s.lines().any(|l| l.trim_start().starts_with("16x21")));
    let d = tempfile::tempdir().unwrap();
    let json = d.path().join("cb.json");
    stdout(&["codebook", "export", "--side", "tx", "--layer", "16x21", "--out", json.to_str().unwrap()]);
    let v = ccabeam::codebook::CodebookExport::read_json(&json).unwrap();
    assert_eq!(v.layers.len(), 1);
    assert_eq!((v.layers[0].m_s, v.layers[0].n_s), (16, 21));
    let csv = d.path().join("p.csv");
    stdout(&["codebook", "pattern", "--side", "tx", "--layer", "16x21", "--step", "10", "--out", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("codeword,azimuth_deg,gain_db\n"));
    assert!(text.lines().skip(1).any(|l| l.ends_with(",0")));
}

#[test]
fn latency_and_config() {
    let s = stdout(&["latency"]);
    assert!(s.contains("t_msi    2.400000 ms"), "{s}");
    let c = stdout(&["config", "--set", "k=3"]);
    let parsed = ccabeam::sim::SimConfig::from_toml_str(&c).unwrap();
    assert_eq!(parsed.k, 3);
}

#[test]
fn bad_input_is_reported() {
    for args in [&["run", "--scheme", "nope"][..], &["config", "--set", "no_such_key=1"], &["config", "--set", "k=9"]] {
        let o = ccabeam(args);
        assert!(!o.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("Error:"));
    }
}
