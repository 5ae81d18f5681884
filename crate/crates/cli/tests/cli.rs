use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use moire_core::geometry::hopping_shells;
use moire_core::taylor::{continuum_bloch_matrix, derive_continuum_model, read_continuum_model};
use moire_core::{Basis, ExpansionOrders, LayerGeometry, MoireGeometry, Valley};
use tempfile::TempDir;

const BASE: &str = "[geometry]\ntheta_deg = 1.1\n[model]\nsource = \"simplified\"\n";
const T: f64 = 2.7;

fn moire(args: &[&str], config: &str) -> (TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_moire"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (dir, output)
}

fn out_file(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join("out").join(name)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "status {:?}, stderr: {}", o.status, String::from_utf8_lossy(&o.stderr));
}

fn moire_geometry() -> MoireGeometry {
    MoireGeometry::new(&LayerGeometry::new(2.46, 1.1f64.to_radians()).unwrap()).unwrap()
}

#[test]
fn bands_csv_has_monotone_s_and_basis_width() {
    let cfg = format!("{BASE}[run]\nlambda = 2.5\n[path]\nsamples_per_segment = 4\n");
    let (dir, o) = moire(&["bands"], &cfg);
    assert_ok(&o);
    let (header, rows) = read_csv(&out_file(&dir, "bands_exact_K.csv"));
    let m = moire_geometry();
    let dim = Basis::build(&m, 2.5 * m.shortest_length(), Valley::K).unwrap().dimension();
    assert_eq!(header.len(), 3 + dim);
    assert_eq!(rows.len(), 3 * 4 + 1);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    assert!(rows.iter().all(|r| r.len() == 3 + dim && r[3..].windows(2).all(|e| e[0] <= e[1])));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_file(&dir, "manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "bands");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["run"]["lambda"], 2.5);
    assert_eq!(manifest["outputs"][0], "bands_exact_K.csv");
}

#[test]
fn expanded_and_continuum_bands_agree() {
    let cfg = format!(
        "{BASE}[run]\nfamilies = [\"expanded(1,0,1)\", \"continuum(1,0,1)\"]\nlambda = 3.0\n[path]\nsamples_per_segment = 3\n"
    );
    let (dir, o) = moire(&["bands"], &cfg);
    assert_ok(&o);
    let (_, a) = read_csv(&out_file(&dir, "bands_expanded-1-0-1_K.csv"));
    let (_, b) = read_csv(&out_file(&dir, "bands_continuum-1-0-1_K.csv"));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra[3..].iter().zip(&rb[3..]) {
            assert!((x - y).abs() <= 1e-9 * T, "{x} vs {y}");
        }
    }
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let cfg = format!("{BASE}[run]\nlambda = 2.0\nvalleys = [\"K\", \"Kp\"]\n[path]\nsamples_per_segment = 3\n");
    let (d1, o1) = moire(&["bands", "--threads", "1"], &cfg);
    let (d2, o2) = moire(&["bands", "--threads", "2"], &cfg);
    assert_ok(&o1);
    assert_ok(&o2);
    for name in ["bands_exact_K.csv", "bands_exact_Kp.csv"] {
        let a = std::fs::read(out_file(&d1, name)).unwrap();
        let b = std::fs::read(out_file(&d2, name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn render_writes_svg() {
    let cfg = format!("{BASE}[run]\nlambda = 2.0\n[path]\nsamples_per_segment = 2\n");
    let (dir, o) = moire(&["bands", "--render"], &cfg);
    assert_ok(&o);
    let svg = std::fs::read_to_string(out_file(&dir, "bands_exact_K.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("<polyline"));
}

#[test]
fn config_errors_exit_2_without_outputs() {
    let cases = [
        format!("{BASE}[run]\nvalleys = [\"Q\"]\n"),
        format!("{BASE}[run]\nfamilies = [\"bm\"]\n"),
        "[model]\nsource = \"simplified\"\n".to_string(),
        format!("{BASE}[run]\nlambda = \"big\"\n"),
    ];
    for cfg in cases {
        let (dir, o) = moire(&["bands"], &cfg);
        assert_eq!(o.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.path().join("out").exists());
    }
    let (_, o) = moire(&["bands", "--threads", "0"], BASE);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_cap_exits_3_without_outputs() {
    let (dir, o) = moire(&["bands"], &format!("{BASE}[run]\nlambda = 60.0\n"));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn dos_integral_matches_total_weight() {
    let cfg = format!(
        "{BASE}[run]\nlambda = 1.5\n[dos]\ne_min = -9.5\ne_max = 9.5\npoints = 3801\nepsilon = 0.02\nn = 4\n"
    );
    let (dir, o) = moire(&["dos"], &cfg);
    assert_ok(&o);
    let (header, rows) = read_csv(&out_file(&dir, "dos_exact.csv"));
    assert_eq!(header, ["E", "D"]);
    let integral: f64 = rows.windows(2).map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1])).sum();

    let m = moire_geometry();
    let dim = Basis::build(&m, 1.5 * m.shortest_length(), Valley::K).unwrap().dimension();
    let a = 2.46f64;
    let layer_bz = 8.0 * std::f64::consts::PI.powi(2) / (3f64.sqrt() * a * a);
    let expected = 0.5 / (2.0 * layer_bz) * m.cell_area() * dim as f64;
    assert!((integral / expected - 1.0).abs() < 0.01, "{integral} vs {expected}");
}

#[test]
fn dos_valley_sum_and_smearing() {
    let dos = |valleys: &str, eps: f64| {
        let cfg = format!(
            "{BASE}[run]\nlambda = 2.0\nvalleys = {valleys}\n[dos]\ne_min = -0.1\ne_max = 0.1\npoints = 201\nepsilon = {eps}\nn = 4\n"
        );
        let (dir, o) = moire(&["dos"], &cfg);
        assert_ok(&o);
        read_csv(&out_file(&dir, "dos_exact.csv")).1.into_iter().map(|r| r[1]).collect::<Vec<f64>>()
    };
    let both = dos("[\"K\", \"Kp\"]", 0.004);
    let k = dos("[\"K\"]", 0.004);
    let kp = dos("[\"Kp\"]", 0.004);
    let peak = both.iter().cloned().fold(0.0, f64::max);
    for ((c, a), b) in both.iter().zip(&k).zip(&kp) {
        // CSV values carry 12 significant digits.
        assert!((a + b - c).abs() <= 1e-11 * peak);
    }
    let sharp = dos("[\"K\"]", 0.002);
    assert!(sharp.iter().cloned().fold(0.0, f64::max) >= k.iter().cloned().fold(0.0, f64::max));
}

#[test]
fn converge_tau_sweep_decreases_with_one_row_per_value() {
    let cfg = format!(
        "{BASE}[run]\nlambda = 2.5\n[path]\nsamples_per_segment = 2\n[converge]\naxes = [\"tau\", \"m\"]\nrange = [1, 2, 3, 4]\ntau0 = 2\n"
    );
    let (dir, o) = moire(&["converge"], &cfg);
    assert_ok(&o);
    let (header, tau) = read_csv_param(&out_file(&dir, "converge_tau.csv"));
    assert_eq!(header, ["param", "value", "error"]);
    assert_eq!(tau.len(), 4);
    assert!(tau.windows(2).all(|w| w[1].1 < w[0].1), "{tau:?}");
    let (_, m) = read_csv_param(&out_file(&dir, "converge_m.csv"));
    assert_eq!(m.len(), 4);

    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_file(&dir, "converge_tau.json")).unwrap()).unwrap();
    assert_eq!(side["axis"], "tau");
    assert_eq!(side["units"], "relative");
    assert!(side["log_linear_fit"]["slope"].as_f64().unwrap() < 0.0);
}

fn read_csv_param(path: &Path) -> (Vec<String>, Vec<(f64, f64)>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    (header, rows)
}

#[test]
fn derive_bm_header_and_round_trip() {
    let (dir, o) = moire(&["derive"], BASE);
    assert_ok(&o);
    let path = out_file(&dir, "continuum_1-0-1_K.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    let header = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap_or_else(|| panic!("no {key}"))
            .parse()
            .unwrap()
    };
    assert!((header("v") / (3f64.sqrt() / 2.0 * 2.46 * T) - 1.0).abs() < 1e-15);
    assert!((header("phi") / (2.0 * std::f64::consts::PI / 3.0) - 1.0).abs() < 1e-15);

    let loaded = read_continuum_model(&path).unwrap();
    let model = moire_core::model::simplified_model(&Default::default()).unwrap();
    let fresh = derive_continuum_model(&model, Valley::K, ExpansionOrders::bm()).unwrap();
    let m = moire_geometry();
    let basis = Basis::build(&m, 2.0 * m.shortest_length(), Valley::K).unwrap();
    let q = m.k_m(Valley::K) + moire_core::Vec2::new(1e-3, 2e-3);
    assert_eq!(
        continuum_bloch_matrix(&loaded, &basis, &q).unwrap().matrix,
        continuum_bloch_matrix(&fresh, &basis, &q).unwrap().matrix
    );
}

#[test]
fn derive_writes_one_block_per_interlayer_shell_member() {
    let (dir, o) = moire(&["derive"], &format!("{BASE}[derive]\norders = [2, 1, 6]\n"));
    assert_ok(&o);
    let text = std::fs::read_to_string(out_file(&dir, "continuum_2-1-6_K.txt")).unwrap();
    let blocks = text.lines().filter(|l| l.starts_with("[interlayer.")).count();
    let geom = LayerGeometry::new(2.46, 1.1f64.to_radians()).unwrap();
    assert_eq!(blocks, hopping_shells(&geom, Valley::K, 6).unwrap().members.len());
}

#[test]
fn wannier_file_model_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model = moire_core::model::simplified_model(&Default::default()).unwrap();
    moire_core::model::save_model(&model, &dir.path().join("tb.txt")).unwrap();
    let cfg = "[geometry]\ntheta_deg = 1.1\n[model]\nsource = \"wannier\"\nfile = \"tb.txt\"\n[run]\nlambda = 2.0\n[path]\nsamples_per_segment = 2\n";
    std::fs::write(dir.path().join("run.toml"), cfg).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_moire"))
        .args(["bands", "--config"])
        .arg(dir.path().join("run.toml"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_ok(&o);
    assert!(dir.path().join("out/bands_exact_K.csv").exists());
}
