use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rankpen::rng::{normal_matrix, substream};
use rankpen::simulation::smse_estimation;
use rankpen::Matrix;

fn rankpen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankpen"))
        .args(args)
        .current_dir(dir)
        .env_remove("RANKPEN_THREADS")
        .output()
        .expect("run rankpen")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_csv(path: &Path, m: &Matrix) {
    let text: String = m
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(path, text).unwrap();
}

fn read_csv(path: &Path) -> Matrix {
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    Matrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn toml_table(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

fn singular_values(m: &Matrix) -> Vec<f64> {
    rankpen::linalg::singular_values(m).unwrap().iter().copied().collect()
}

/// `Y = X C` with `C` of rank `r`, plus `noise` times Gaussian error.
fn regression(dir: &Path, n: usize, p: usize, q: usize, r: usize, noise: f64, seed: u64) -> Matrix {
    let mut rng = substream(seed, 0);
    let x = normal_matrix(n, p, &mut rng);
    let c = normal_matrix(p, r, &mut rng) * normal_matrix(r, q, &mut rng);
    let y = &x * &c + normal_matrix(n, q, &mut rng) * noise;
    write_csv(&dir.join("x.csv"), &x);
    write_csv(&dir.join("y.csv"), &y);
    c
}

#[test]
fn ssvt_of_identity() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("i.csv"), "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    let out = rankpen(tmp.path(), &["approx", "--input", "i.csv", "--method", "ssvt", "--lambda", "0.5", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = read_csv(&tmp.path().join("o/approx.csv"));
    assert_eq!(m, Matrix::identity(3, 3) * 0.5);
    let side = toml_table(&tmp.path().join("o/approx.toml"));
    assert_eq!(side["rank"].as_integer(), Some(3));
    let manifest = toml_table(&tmp.path().join("o/manifest.toml"));
    assert_eq!(manifest["command"].as_str(), Some("approx"));
    assert_eq!(manifest["config"]["lambda"].as_float(), Some(0.5));
}

#[test]
fn asvt_with_explicit_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut rng = substream(4, 0);
    let (q1, _) = normal_matrix(3, 2, &mut rng).qr().unpack();
    let (q2, _) = normal_matrix(2, 2, &mut rng).qr().unpack();
    let y = &q1 * Matrix::from_diagonal(&rankpen::Vector::from_vec(vec![4.0, 2.0])) * q2.transpose();
    write_csv(&dir.join("y.csv"), &y);
    fs::write(dir.join("w.csv"), "0.5\n1\n").unwrap();
    let out = rankpen(dir, &["approx", "--input", "y.csv", "--method", "asvt", "--lambda", "1", "--weights", "w.csv", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let d = singular_values(&read_csv(&dir.join("o/approx.csv")));
    assert!((d[0] - 3.5).abs() < 1e-12 && (d[1] - 1.0).abs() < 1e-12, "{d:?}");
    let side = toml_table(&dir.join("o/approx.toml"));
    let g: Vec<f64> = side["thresholded_singular_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_float().unwrap())
        .collect();
    assert!((g[0] - 3.5).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
}

#[test]
fn approx_output_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let y = normal_matrix(6, 4, &mut substream(5, 0)) * 1e3;
    write_csv(&dir.join("y.csv"), &y);
    let out = rankpen(dir, &["approx", "--input", "y.csv", "--method", "hsvt", "--lambda", "0", "--out", "o"]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(dir.join("o/approx.csv")).unwrap();
    let back = read_csv(&dir.join("o/approx.csv"));
    write_csv(&dir.join("again.csv"), &back);
    assert_eq!(fs::read_to_string(dir.join("again.csv")).unwrap(), text);
    assert!((&back - &y).norm() <= 1e-12 * y.norm());
}

#[test]
fn approx_error_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.csv"), "1,2\n3,oops\n").unwrap();
    let out = rankpen(dir, &["approx", "--input", "bad.csv", "--method", "hsvt", "--lambda", "1", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.csv:2:2"), "{}", stderr(&out));

    fs::write(dir.join("y.csv"), "4,0\n0,2\n").unwrap();
    fs::write(dir.join("w.csv"), "1,0.5\n").unwrap();
    let out = rankpen(dir, &["approx", "--input", "y.csv", "--method", "asvt", "--lambda", "1", "--weights", "w.csv", "--out", "o"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let out = rankpen(dir, &["approx", "--input", "y.csv", "--method", "asvt", "--lambda", "1", "--out", "o"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn noiseless_ann_cv_recovers_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let c = regression(dir, 60, 10, 8, 3, 0.0, 11);
    let out = rankpen(
        dir,
        &["fit", "--y", "y.csv", "--x", "x.csv", "--method", "ann", "--cv-folds", "10", "--lambda-min-ratio", "1e-12", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit = toml_table(&dir.join("o/fit.toml"));
    assert_eq!(fit["estimated_rank"].as_integer(), Some(3));
    assert_eq!(fit["tuned"].as_bool(), Some(true));
    let c_hat = read_csv(&dir.join("o/coefficients.csv"));
    let smse = smse_estimation(&c, &c_hat).unwrap();
    assert!(smse < 1e-6, "smse {smse}");
    let cv = toml_table(&dir.join("o/cv.toml"));
    assert_eq!(cv["fold_count"].as_integer(), Some(10));
}

#[test]
fn roann_without_ridge_is_ann() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    regression(dir, 30, 6, 5, 2, 0.5, 12);
    let common = ["fit", "--y", "y.csv", "--x", "x.csv", "--lambda", "3.5", "--gamma", "1.5"];
    let mut ann = common.to_vec();
    ann.extend(["--method", "ann", "--out", "ann"]);
    let mut roann = common.to_vec();
    roann.extend(["--method", "roann", "--lambda2", "0", "--out", "roann"]);
    assert_eq!(code(&rankpen(dir, &ann)), 0);
    assert_eq!(code(&rankpen(dir, &roann)), 0);
    assert_eq!(
        fs::read(dir.join("ann/coefficients.csv")).unwrap(),
        fs::read(dir.join("roann/coefficients.csv")).unwrap()
    );
    assert!(!dir.join("ann/cv.toml").exists());
}

#[test]
fn rsc_at_zero_is_ols() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    regression(dir, 25, 5, 4, 2, 1.0, 13);
    let out = rankpen(dir, &["fit", "--y", "y.csv", "--x", "x.csv", "--method", "rsc", "--lambda", "0", "--out", "rsc"]);
    assert_eq!(code(&out), 0);
    let out = rankpen(dir, &["fit", "--y", "y.csv", "--x", "x.csv", "--method", "ols", "--out", "ols"]);
    assert_eq!(code(&out), 0);
    let a = read_csv(&dir.join("rsc/coefficients.csv"));
    let b = read_csv(&dir.join("ols/coefficients.csv"));
    assert!((&a - &b).norm() <= 1e-12 * b.norm());
}

#[test]
fn fit_error_codes_and_nonconvergence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    regression(dir, 20, 4, 3, 1, 1.0, 14);
    write_csv(&dir.join("short.csv"), &normal_matrix(19, 4, &mut substream(1, 1)));
    let out = rankpen(dir, &["fit", "--y", "y.csv", "--x", "short.csv", "--method", "rsc", "--lambda", "1", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("rows"), "{}", stderr(&out));

    let out = rankpen(
        dir,
        &["fit", "--y", "y.csv", "--x", "x.csv", "--method", "nnp", "--lambda", "0.5", "--nnp-max-iter", "1", "--out", "nnp"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit = toml_table(&dir.join("nnp/fit.toml"));
    assert_eq!(fit["converged"].as_bool(), Some(false));
    assert_eq!(fit["iterations"].as_integer(), Some(1));

    let out = rankpen(dir, &["fit", "--y", "y.csv", "--x", "x.csv", "--method", "ann", "--lambda=-1", "--out", "o"]);
    assert_eq!(code(&out), 3);
    let out = rankpen(dir, &["fit", "--y", "y.csv", "--method", "ols", "--out", "o"]);
    assert_eq!(code(&out), 3);
    let out = rankpen(dir, &["--threads", "0", "fit", "--y", "y.csv", "--x", "x.csv", "--method", "ols", "--out", "o"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn rerun_refuses_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    regression(dir, 20, 4, 3, 1, 1.0, 15);
    let out = rankpen(dir, &["fit", "--y", "y.csv", "--x", "x.csv", "--method", "rsc", "--out", "a"]);
    assert_eq!(code(&out), 0);
    let out = rankpen(dir, &["rerun", "--manifest", "a/manifest.toml", "--out", "b"]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(dir.join("a/cv.toml")).unwrap(), fs::read(dir.join("b/cv.toml")).unwrap());
    assert_eq!(fs::read(dir.join("a/manifest.toml")).unwrap(), fs::read(dir.join("b/manifest.toml")).unwrap());
    fs::write(dir.join("y.csv"), "0\n").unwrap();
    let out = rankpen(dir, &["rerun", "--manifest", "a/manifest.toml", "--out", "c"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("changed"));
}

fn rows(path: &Path) -> Vec<toml::Table> {
    let t = toml_table(path);
    t["groups"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|g| g["rows"].as_array().unwrap().iter().map(|r| r.as_table().unwrap().clone()))
        .collect()
}

#[test]
fn simulate_near_noiseless() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = rankpen(
        dir,
        &[
            "simulate", "--model", "1", "--rho", "0.1", "--b", "0.3", "--reps", "1", "--sigma", "1e-8",
            "--methods", "ann2,rsc,rorr,roann2", "--lambda-min-ratio", "1e-12", "--out", "o",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for row in rows(&dir.join("o/results.toml")) {
        let est = row["est_smse_mean"].as_float().unwrap();
        let pred = row["pred_smse_mean"].as_float().unwrap();
        assert!(est < 1e-6 && pred < 1e-6, "{row:?}");
        assert_eq!(row["mean_rank"].as_float(), Some(10.0));
    }
    assert!(fs::read_to_string(dir.join("o/results.txt")).unwrap().contains("ann2"));
}

#[test]
fn simulate_is_reproducible_and_grouped() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let args = |out: &'static str| {
        vec![
            "simulate", "--model", "2", "--rho", "0.1,0.5", "--b", "0.2", "--reps", "4", "--seed", "9",
            "--tuning", "cv", "--cv-folds", "4", "--out", out,
        ]
    };
    assert_eq!(code(&rankpen(dir, &args("a"))), 0);
    assert_eq!(code(&rankpen(dir, &args("b"))), 0);
    for f in ["results.toml", "results.txt", "manifest.toml"] {
        assert_eq!(fs::read(dir.join("a").join(f)).unwrap(), fs::read(dir.join("b").join(f)).unwrap(), "{f}");
    }
    let t = toml_table(&dir.join("a/results.toml"));
    let groups = t["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[1]["rho"].as_float(), Some(0.5));
    assert_eq!(groups[0]["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_table_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = rankpen(
        dir,
        &[
            "simulate", "--model", "1", "--n", "100", "--p", "25", "--q", "25", "--rstar", "10", "--rho", "0.1", "--b", "0.3",
            "--reps", "100", "--methods", "ann2,rsc", "--tuning", "oracle", "--out", "o",
        ],
    );
    assert_eq!(code(&out), 0);
    let r = rows(&dir.join("o/results.toml"));
    let (ann, rsc) = (&r[0], &r[1]);
    assert!((ann["mean_rank"].as_float().unwrap() - 10.18).abs() <= 0.5);
    assert!((ann["pct_exact_rank"].as_float().unwrap() - 82.8).abs() <= 10.0);
    assert!((rsc["mean_rank"].as_float().unwrap() - 10.0).abs() <= 0.1);
    assert!(rsc["pct_exact_rank"].as_float().unwrap() >= 95.0);
}

#[test]
fn simulate_rejects_invalid_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = rankpen(dir, &["simulate", "--model", "2", "--rho", "0.5", "--b", "0.2", "--rstar", "20", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("r_star"), "{}", stderr(&out));
    let out = rankpen(dir, &["simulate", "--model", "1", "--rho", "1.0", "--b", "0.2", "--out", "o"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("rho"));
    let out = rankpen(dir, &["simulate", "--model", "1", "--rho", "0.5", "--b", "0.2", "--methods", "lasso", "--out", "o"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn check_convexity_records_counterexample() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = rankpen(dir, &["check", "--suite", "convexity", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let t = toml_table(&dir.join("o/report.toml"));
    let check = t["checks"].as_array().unwrap()[0].as_table().unwrap();
    assert_eq!(check["verdict"].as_str(), Some("PASS"));
    let details = check["details"].as_table().unwrap();
    assert_eq!(details["example_f_mid"].as_float(), Some(4.5));
    assert_eq!(details["example_f_c1"].as_float(), Some(4.0));
    assert!(details["max_excess_error"].as_float().unwrap() <= 1e-9);
}

#[test]
fn check_noise_spectrum_without_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = rankpen(dir, &["check", "--suite", "noise-spectrum", "--sigma", "0", "--out", "o"]);
    assert_eq!(code(&out), 0);
    let t = toml_table(&dir.join("o/report.toml"));
    assert_eq!(t["passed"].as_integer(), Some(1));
    assert_eq!(t["checks"].as_array().unwrap()[0]["empirical"].as_float(), Some(0.0));
}

#[test]
fn check_rejects_bad_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rankpen(tmp.path(), &["check", "--suite", "rank-consistency", "--delta", "2", "--out", "o"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("delta"));
}
