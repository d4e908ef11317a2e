use std::path::Path;
use std::process::Command;

fn minedid(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_minedid")).args(args).output().expect("spawn minedid")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_then_run_all_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let sim = minedid(&[
        "simulate", "-o", &s(&input), "--n-treated", "5", "--n-control", "8",
        "--births-per-cell", "40", "--model", "dose", "--effect", "10", "--seed", "3",
    ]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    assert!(input.join("generator_spec.toml").exists());

    let mut runs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("out{k}"));
        let r = minedid(&["run-all", "-i", &s(&input), "-o", &s(&out), "--theta-grid", "5,10"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        runs.push((r.stdout, files(&out)));
    }
    assert_eq!(runs[0].0, runs[1].0);
    assert_eq!(runs[0].1, runs[1].1);
    let names: Vec<_> = runs[0].1.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"MANIFEST"));
    assert!(names.contains(&"theta_grid.csv"));
}

#[test]
fn missing_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let r = minedid(&["cohort", "-o", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));

    let nowhere = tmp.path().join("nowhere");
    let r = minedid(&["run-all", "-i", nowhere.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("stage load failed"));
}

#[test]
fn print_config_emits_defaults() {
    let r = minedid(&["print-config"]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("theta_grid"));
}
