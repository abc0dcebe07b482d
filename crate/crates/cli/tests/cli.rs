use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Run {
    code: i32,
    stderr: String,
    out: PathBuf,
}

fn heisenkern(dir: &Path, command: &str, config: &str, threads: Option<usize>) -> Run {
    let cfg = dir.join(format!("{command}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{command}-{}", threads.unwrap_or(0)));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heisenkern"));
    cmd.arg(command).arg("--config").arg(&cfg).arg("--out").arg(&out);
    if let Some(t) = threads {
        cmd.env("HEISENKERN_THREADS", t.to_string());
    }
    let Output { status, stderr, .. } = cmd.output().unwrap();
    Run { code: status.code().unwrap(), stderr: String::from_utf8_lossy(&stderr).into_owned(), out }
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn kernel_identity_point() {
    let dir = tempfile::tempdir().unwrap();
    let r = heisenkern(dir.path(), "kernel", "alphas = [1.0]\nt = 1.0\ng = [0.0, 0.0, 0.0]\n", None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let k = json(r.out.join("kernel.json"));
    let check = &k["points"][0]["check"];
    assert_eq!(check["rhs"], 0.125);
    assert!(check["residual"].as_f64().unwrap() <= 1e-8);
    let m = json(r.out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["failed"], false);
    assert_eq!(m["outputs"][0], "kernel.json");
}

#[test]
fn kernel_profile_writes_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let r = heisenkern(dir.path(), "kernel", "alphas = [1.0]\nt = 1.0\nprofile = \"z\"\npoints = 21\n", None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(r.out.join("profile_z_t1.csv")).unwrap();
    assert!(csv.starts_with("coord,density\n-2,"));
    assert_eq!(csv.lines().count(), 22);
    let dat = std::fs::read_to_string(r.out.join("profile_z_t1.dat")).unwrap();
    assert!(dat.contains("# closed form"));
    assert!(std::fs::read_to_string(r.out.join("profile_z_t1.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn failed_check_exits_2_with_marker() {
    let dir = tempfile::tempdir().unwrap();
    let r = heisenkern(dir.path(), "kernel", "alphas = [1.0]\nt = 1.0\ng = [0.0, 0.0, 0.0]\nexpect = 0.2\n", None);
    assert_eq!(r.code, 2);
    let m = json(r.out.join("manifest.json"));
    assert_eq!(m["status"], "check_failed");
    assert_eq!(m["failed"], true);
}

#[test]
fn config_errors_exit_1_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let r = heisenkern(dir.path(), "kernel", "alphas = [1.0]\nt = -1.0\ng = [0.0, 0.0, 0.0]\n", None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("t: must be positive"), "{}", r.stderr);

    let r = heisenkern(dir.path(), "kernel", "alphas = [1.0]\nt = 1.0\ncolour = 1\n", None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("colour") && r.stderr.contains("line 3"), "{}", r.stderr);

    let r = heisenkern(dir.path(), "sample", "alphas = [1.0]\nt = 1.0\nsamples = 10\nsteps = 10\n", None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("seed"), "{}", r.stderr);

    let r = heisenkern(dir.path(), "kernel", "command = \"sample\"\nalphas = [1.0]\nt = 1.0\n", None);
    assert_eq!(r.code, 1);

    let r = heisenkern(dir.path(), "plot", "artifact = \"missing.csv\"\n", None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("artifact"), "{}", r.stderr);
}

#[test]
fn usage_errors_exit_1() {
    let s = Command::new(env!("CARGO_BIN_EXE_heisenkern")).arg("frobnicate").output().unwrap();
    assert_eq!(s.status.code(), Some(1));
}

#[test]
fn sample_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "alphas = [1.0]\nt = 1.0\nsamples = 4000\nsteps = 200\nseed = 7\n";
    let a = heisenkern(dir.path(), "sample", cfg, Some(1));
    let b = heisenkern(dir.path(), "sample", cfg, Some(3));
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(b.code, 0, "{}", b.stderr);
    for f in ["samples.csv", "moments.json", "ks.json"] {
        assert_eq!(std::fs::read(a.out.join(f)).unwrap(), std::fs::read(b.out.join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.out.join("samples.csv")).unwrap();
    assert!(csv.starts_with("x1,y1,z\n"));
    let moments = json(a.out.join("moments.json"));
    assert_eq!((moments["N"].as_u64(), moments["m"].as_u64(), moments["seed"].as_u64()), (Some(4000), Some(200), Some(7)));
}

#[test]
fn lsi_scan_default_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "contexts = [[1.0], [1.0, 2.0], [1.0, 2.0, 3.0]]\nt = [0.5, 1.0]\nsamples = 20000\nsteps = 20\nseed = 11\n";
    let r = heisenkern(dir.path(), "lsi-scan", cfg, None);
    let summary = json(r.out.join("lsi_summary.json"));
    // exp_x1:2 is heavy-tailed at this N, so only consistency is asserted.
    let pass = summary["pass"].as_bool().unwrap();
    assert_eq!(r.code, if pass { 0 } else { 2 }, "{}", r.stderr);
    assert_eq!(json(r.out.join("manifest.json"))["failed"], !pass);
    let csv = std::fs::read_to_string(r.out.join("lsi_scan.csv")).unwrap();
    assert!(csv.starts_with("n,alphas,t,field,entropy,entropy_se,energy,energy_se,ratio,ratio_se\n"));
    assert!(csv.contains("\n2,1;2,0.5,exp_x1:1,"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 7);
    assert!(r.out.join("lsi_scan.svg").exists());
    assert_eq!(summary["sups"].as_array().unwrap().len(), 6);
}

#[test]
fn lsi_scan_assertions_hold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "contexts = [[1.0], [1.0, 2.0], [0.5, 0.25, 0.125]]\nt = [0.5, 1.0, 2.0]\n\
               fields = [\"coord:x1\", \"exp_x1:0.5\", \"exp_x1:1\"]\nsamples = 20000\nsteps = 20\nseed = 11\n";
    let r = heisenkern(dir.path(), "lsi-scan", cfg, None);
    let summary = json(r.out.join("lsi_summary.json"));
    assert_eq!(r.code, 0, "{}\n{summary:#}", r.stderr);
}

#[test]
fn tensor_check_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "factors = [1.0, 3.0]\nf = \"linear_z:0.05\"\nh = \"exp_x1:1\"\nt = 1.0\nsamples = 20000\nsteps = 50\nseed = 3\n";
    let r = heisenkern(dir.path(), "tensor-check", cfg, None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let t = json(r.out.join("tensor.json"));
    assert_eq!(t["report"]["entropy"]["pass"], true);
}

#[test]
fn distance_vertical_target() {
    let dir = tempfile::tempdir().unwrap();
    let r = heisenkern(dir.path(), "distance", "alphas = [1.0]\ng = [0.0, 0.0, 1.0]\nsegments = 64\nlambdas = [2.0]\n", None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let d = json(r.out.join("distance.json"));
    let exact = (4.0 * std::f64::consts::PI).sqrt();
    assert!((d["d_hat"].as_f64().unwrap() / exact - 1.0).abs() < 0.01, "{d}");
    assert_eq!(d["K"], 64);
    let path = std::fs::read_to_string(r.out.join("path.csv")).unwrap();
    assert!(path.starts_with("k,x1,y1,a\n"));
    assert_eq!(json(r.out.join("homogeneity.json"))["pass"], true);
}

#[test]
fn cascade_and_replot() {
    let dir = tempfile::tempdir().unwrap();
    let r = heisenkern(dir.path(), "cascade", "n_max = 8\nt = 1.0\nsamples = 500\nsteps = 50\nseed = 5\n", None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(r.out.join("cascade.csv")).unwrap();
    assert!(csv.starts_with("n,gap,gap_se,tail_hs\n"));
    let artifact = r.out.join("cascade.csv");
    let p = heisenkern(dir.path(), "plot", &format!("artifact = {:?}\n", artifact.to_str().unwrap()), None);
    assert_eq!(p.code, 0, "{}", p.stderr);
    assert_eq!(std::fs::read(p.out.join("cascade.svg")).unwrap(), std::fs::read(r.out.join("cascade.svg")).unwrap());
}

#[test]
fn pushforward_with_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "map = \"f\"\nalphas = [3.0]\ncontrol_alpha = 2.0\nt = 1.0\nsamples = 20000\nsteps = 50\nseed = 9\n";
    let r = heisenkern(dir.path(), "pushforward", cfg, None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let p = json(r.out.join("pushforward.json"));
    assert_eq!(p["control_separated"], true);
    let cfg = "map = \"pi_omega\"\nalphas = [2.0, 5.0]\nt = 1.0\nsamples = 20000\nsteps = 50\nseed = 9\n";
    let r = heisenkern(dir.path(), "pushforward", cfg, None);
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn normalize_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("form.csv"), "0,0,2,0\n0,0,0,1\n-2,0,0,0\n0,-1,0,0\n").unwrap();
    let r = heisenkern(dir.path(), "normalize", "matrix = \"form.csv\"\n", None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let nf = json(r.out.join("normal_form.json"));
    assert_eq!(nf["alphas"][0].as_f64().unwrap().round(), 1.0);
    assert_eq!(nf["alphas"][1].as_f64().unwrap().round(), 2.0);
    // The same file drives a kernel context.
    let k = heisenkern(dir.path(), "kernel", "matrix = \"form.csv\"\nt = 1.0\ng = [0.0, 0.0, 0.0, 0.0, 0.0]\n", None);
    assert_eq!(k.code, 0, "{}", k.stderr);
}
