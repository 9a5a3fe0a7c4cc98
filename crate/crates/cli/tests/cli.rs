use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn oesem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oesem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn example(name: &str) -> String {
    examples().join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn sem_swap() {
    let o = oesem(&["sem", &example("swap.oe")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "x' = y & y' = x");
}

#[test]
fn hanoi_tenth_move() {
    let o = oesem(&["hanoi", "--disks", "4", "--move", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "B -> A");
    let all = oesem(&["hanoi", "--disks", "4", "--all"]);
    let seq = oesem(&["hanoi", "--disks", "4"]);
    assert_eq!(stdout(&all), stdout(&seq));
    assert_eq!(stdout(&seq).lines().count(), 15);
    assert_eq!(oesem(&["hanoi", "--disks", "4", "--move", "16"]).status.code(), Some(2));
}

#[test]
fn run_swap() {
    let o = oesem(&["run", &example("swap.oe"), "--state", "x=2,y=1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "x=1, y=2");
}

#[test]
fn diagnostics_exit_one() {
    let o = oesem(&["sem", &example("wrong_address.oe")]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("a' = 10 - psi & d' = psi"), "{out}");
    assert!(out.contains("UninitializedRead") && out.contains("WrongAddress"), "{out}");
}

#[test]
fn errors_exit_two() {
    let dir = std::env::temp_dir().join(format!("oesem-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.oe");
    std::fs::write(&bad, "var x: int; x!(1), x!(2)").unwrap();
    let o = oesem(&["sem", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let j = oesem(&["sem", bad.to_str().unwrap(), "--format", "json"]);
    assert_eq!(j.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&j.stderr).unwrap();
    assert_eq!(err["command"], "sem");
    assert!(err["error"].as_str().unwrap().contains("more than once"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn every_example_completes() {
    let mut files: Vec<PathBuf> = std::fs::read_dir(examples())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "oe"))
        .collect();
    files.sort();
    assert!(files.len() >= 10);
    for f in files {
        for cmd in ["sem", "check"] {
            let o = oesem(&[cmd, f.to_str().unwrap(), "--samples", "30"]);
            let code = o.status.code();
            assert!(
                matches!(code, Some(0 | 1)),
                "{cmd} {} exited {code:?}: {}",
                f.display(),
                String::from_utf8_lossy(&o.stderr)
            );
        }
    }
}

#[test]
fn json_output_is_deterministic() {
    let args = ["check", &example("sign.oe"), "--format", "json", "--seed", "9", "--samples", "40"];
    let a = oesem(&args);
    let b = oesem(&args);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["command"], "check");
    assert_eq!(v["result"]["report"]["mismatches"].as_array().unwrap().len(), 0);
    for key in ["input", "diagnostics", "trace"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn sem_json_and_trace() {
    let o = oesem(&["sem", &example("swap.oe"), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let b = &v["result"]["branches"][0];
    assert_eq!(b["finalEqs"]["x"], "y");
    assert_eq!(b["finalEqs"]["y"], "x");
    assert_eq!(v["trace"].as_array().unwrap().len(), 2);
    let t = oesem(&["sem", &example("swap.oe"), "--trace"]);
    assert!(stdout(&t).contains("[relay]"));
}

#[test]
fn invariant_flags() {
    let o = oesem(&[
        "sem",
        &example("max_of_array.oe"),
        "--invariant",
        "m' = max(A[0..i'-1]) && 1 <= i' && i' <= N",
        "--termination",
        "i' = N",
        "--fixed",
        "N=6",
    ]);
    let out = stdout(&o);
    assert!(out.contains("m' = max(A[0..N - 1])") && out.contains("i' = N"), "{out}");
}

#[test]
fn fuzz_finds_nothing() {
    let o = oesem(&["fuzz", "--programs", "40", "--depth", "2", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("mismatches: 0"));
}

#[test]
fn fmt_round_trips() {
    let o = oesem(&["fmt", &example("max_of_array.oe")]);
    assert_eq!(o.status.code(), Some(0));
    let printed = stdout(&o);
    let original = std::fs::read_to_string(examples().join("max_of_array.oe")).unwrap();
    assert_eq!(oesem::syntax::parse(&printed).unwrap(), oesem::syntax::parse(&original).unwrap());
}

#[test]
fn registry_beside_input() {
    let o = oesem(&["run", &example("factorial.oe")]);
    assert_eq!(stdout(&o).trim(), "f=720, n=6");
    let o = oesem(&["run", &example("sort_then_max.oe"), "--state", "A=[4,9,1,7,3]"]);
    assert_eq!(stdout(&o).trim(), "A=[1,3,4,7,9], N=5, m=9");
}
