use std::path::Path;

use layerrd_cli::run;
use serde_json::Value;

fn layerrd(args: &[&str]) -> i32 {
    run(std::iter::once("layerrd").chain(args.iter().copied()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const IDENTITY: &str = r#"{
  "source": [0.5, 0.3, 0.2],
  "g1": [0, 1, 2],
  "g2": [0, 1, 2],
  "h2": [0, 1, 2],
  "task_distortion": [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
}"#;

#[test]
fn verify_identity_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = dir.path().join("identity.json");
    std::fs::write(&pipeline, IDENTITY).unwrap();
    let out = dir.path().join("out");
    let code = layerrd(&[
        "verify",
        "thm1",
        "--pipeline",
        pipeline.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("thm1_report.json"));
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["max_violation"].as_f64().unwrap(), 0.0);
    assert_eq!(report["d_grid"].as_array().unwrap().len(), 20);
    assert_eq!(report["manifest"], "verify.manifest.json");
    let manifest = read_json(&out.join("verify.manifest.json"));
    assert_eq!(manifest["command"], "verify");
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|o| o == "thm1_report.json"));
}

#[test]
fn verify_thm2_writes_achievability() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        layerrd(&["gen", "--seed", "3", "--sizes", "4,4,3,2", "--out-dir", out]),
        0
    );
    let pipeline = dir.path().join("pipeline.json");
    let code = layerrd(&[
        "verify",
        "thm2",
        "--pipeline",
        pipeline.to_str().unwrap(),
        "--grid",
        "8",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        read_json(&dir.path().join("thm2_report.json"))["verdict"],
        "pass"
    );
    assert_eq!(
        read_json(&dir.path().join("thm2_achievability.json"))["holds"],
        true
    );
}

#[test]
fn gen_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = layerrd(&[
        "gen",
        "--seed",
        "7",
        "--sizes",
        "6,6,5,3",
        "--distortion",
        "random-nonnegative",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    let path = dir.path().join("pipeline.json");
    let first = std::fs::read(&path).unwrap();
    let loaded = layerrd::load_pipeline(&path).unwrap();
    let expected = layerrd::random_pipeline(
        7,
        layerrd::PipelineSizes::new(6, 6, 5, 3),
        layerrd::DistortionKind::RandomNonnegative,
    )
    .unwrap();
    assert_eq!(loaded.to_spec(), expected.to_spec());
    layerrd::save_pipeline(&loaded, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn solve_writes_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = dir.path().join("identity.json");
    std::fs::write(&pipeline, IDENTITY).unwrap();
    let out = dir.path().to_str().unwrap();
    for var in ["x", "y1", "y2", "cross"] {
        assert_eq!(
            layerrd(&[
                "solve",
                var,
                "--pipeline",
                pipeline.to_str().unwrap(),
                "--out-dir",
                out
            ]),
            0,
            "{var}"
        );
        let text = std::fs::read_to_string(dir.path().join(format!("rd_{var}.csv"))).unwrap();
        assert!(text.starts_with("distortion,rate_bits,beta\n"));
        let curve =
            layerrd::io::load_rd_curve(&dir.path().join(format!("rd_{var}.csv")), var).unwrap();
        assert!(curve.len() > 2);
    }
}

fn write_curve(path: &Path, scale: f64) {
    let mut text = String::from("rate_bpp,quality\n");
    for (r, q) in [(0.1, 30.0), (0.2, 32.5), (0.4, 34.8), (0.8, 36.9)] {
        text.push_str(&format!("{},{}\n", r * scale, q));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn bd_rate_of_doubled_curve() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("ref.csv"), dir.path().join("test.csv"));
    write_curve(&a, 1.0);
    write_curve(&b, 2.0);
    let out = dir.path().to_str().unwrap();
    let code = layerrd(&[
        "bd",
        "rate",
        "--ref",
        a.to_str().unwrap(),
        "--test",
        b.to_str().unwrap(),
        "--metric",
        "psnr_db",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    let result = read_json(&dir.path().join("bd_rate.json"));
    assert!(
        (result["bd_rate_percent"].as_f64().unwrap() - 100.0).abs() < 1e-9,
        "{result}"
    );

    let code = layerrd(&[
        "bd",
        "quality",
        "--ref",
        a.to_str().unwrap(),
        "--test",
        a.to_str().unwrap(),
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    let result = read_json(&dir.path().join("bd_quality.json"));
    assert!(
        result["bd_quality"].as_f64().unwrap().abs() < 1e-12,
        "{result}"
    );
}

#[test]
fn select_picks_lowest_cost() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("points.csv");
    std::fs::write(
        &points,
        "rate,d_enh,d_base,label\n1.0,0.5,0.2,a\n2.0,0.1,0.1,b\n0.5,0.9,0.9,c\n",
    )
    .unwrap();
    let out = dir.path().to_str().unwrap();
    let code = layerrd(&[
        "select",
        "--points",
        points.to_str().unwrap(),
        "--lambda",
        "10",
        "--w",
        "1",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    let sel = read_json(&dir.path().join("selection.json"));
    // a: 1 + 10*0.7 = 8, b: 2 + 10*0.2 = 4, c: 0.5 + 18 = 18.5
    assert_eq!(sel["index"], 1, "{sel}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(layerrd(&["verify"]), 2);
    assert_eq!(layerrd(&["frobnicate"]), 2);
    assert_eq!(layerrd(&["--help"]), 0);

    let missing = dir.path().join("missing.json");
    assert_eq!(
        layerrd(&[
            "verify",
            "thm1",
            "--pipeline",
            missing.to_str().unwrap(),
            "--out-dir",
            out
        ]),
        2
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, IDENTITY.replace("0.2]", "0.1]")).unwrap();
    assert_eq!(
        layerrd(&[
            "verify",
            "thm1",
            "--pipeline",
            bad.to_str().unwrap(),
            "--out-dir",
            out
        ]),
        2
    );
    let err = layerrd::load_pipeline(&bad).unwrap_err().to_string();
    assert!(err.contains("source normalization"), "{err}");

    let good = dir.path().join("identity.json");
    std::fs::write(&good, IDENTITY).unwrap();
    assert_eq!(
        layerrd(&[
            "verify",
            "thm1",
            "--pipeline",
            good.to_str().unwrap(),
            "--tol",
            "-1",
            "--out-dir",
            out
        ]),
        2
    );

    // Rounding leaves a violation of a few ulps, so a zero tolerance fails.
    assert_eq!(layerrd(&["gen", "--seed", "0", "--out-dir", out]), 0);
    let generated = dir.path().join("pipeline.json");
    let code = layerrd(&[
        "verify",
        "thm1",
        "--pipeline",
        generated.to_str().unwrap(),
        "--tol",
        "0",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 1);
    let report = read_json(&dir.path().join("thm1_report.json"));
    assert_eq!(report["verdict"], "fail");
    assert!(report["max_violation"].as_f64().unwrap() < 1e-12);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let pipeline = dir.path().join("identity.json");
    std::fs::write(&pipeline, IDENTITY).unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"grid": 5, "solver": {"beta_count": 16}}"#).unwrap();
    let code = layerrd(&[
        "verify",
        "thm1",
        "--pipeline",
        pipeline.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "7",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        read_json(&dir.path().join("thm1_report.json"))["d_grid"]
            .as_array()
            .unwrap()
            .len(),
        7
    );
    assert_eq!(
        read_json(&dir.path().join("verify.manifest.json"))["config"]["beta_count"],
        16
    );

    std::fs::write(&cfg, r#"{"gird": 5}"#).unwrap();
    let code = layerrd(&[
        "verify",
        "thm1",
        "--pipeline",
        pipeline.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 2);
}

#[test]
fn sweep_default_size_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = layerrd(&[
        "sweep",
        "thm1",
        "--seeds",
        "200",
        "--sizes",
        "6,6,5,3",
        "--grid",
        "20",
        "--tol",
        "1e-4",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",pass")));
    assert_eq!(
        std::fs::read_dir(dir.path().join("cases")).unwrap().count(),
        200
    );
}
