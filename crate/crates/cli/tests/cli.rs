use std::path::Path;
use std::process::{Command, Output};

fn nanobeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanobeam"))
        .args(args)
        .env_remove("NANOBEAM_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(o)).unwrap()
}

#[test]
fn help_lists_every_subcommand_and_flag() {
    let o = nanobeam(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for sub in ["bands", "mirror", "simulate", "transmit", "fit", "invert", "sweep", "compare", "neff", "modevolume"] {
        assert!(text.contains(sub), "missing {sub}");
    }
    for flag in ["--config", "--workers", "--out", "--format", "NANOBEAM_WORKERS"] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let o = nanobeam(&["sweep", "--help"]);
    assert!(stdout(&o).contains("--preset") && stdout(&o).contains("--checkpoint"));
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(nanobeam(&["neff"]).status.code(), Some(0));
    // Invalid geometry and unknown names are configuration errors.
    assert_eq!(nanobeam(&["mirror", "--a", "205", "--r", "300", "--w", "461"]).status.code(), Some(2));
    assert_eq!(nanobeam(&["simulate", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(nanobeam(&["sweep", "--preset", "desk-compare"]).status.code(), Some(2));
    assert_eq!(nanobeam(&["--bogus-flag", "neff"]).status.code(), Some(2));
    assert_eq!(nanobeam(&["fit", "--input", "/nonexistent/spectrum.csv"]).status.code(), Some(4));

    // A flat spectrum has no peak to fit: numeric failure.
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    let rows: String = (0..40).map(|i| format!("{},1\n", 600 + i)).collect();
    std::fs::write(&flat, rows).unwrap();
    assert_eq!(nanobeam(&["fit", "--input", flat.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("project.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\nlambda_target = 640.0\n[stack]\nn_core = 2.0\nn_substrate = 1.45\nn_cladding = 1.0\nthickness = 200.0\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let file = json(&nanobeam(&["--config", c, "mirror", "--a", "205", "--r", "60", "--w", "461"]));
    assert_eq!(file["record"]["lambda_target"], 640.0);
    let flag = json(&nanobeam(&["--config", c, "--lambda-target", "637", "mirror", "--a", "205", "--r", "60", "--w", "461"]));
    assert_eq!(flag["record"]["lambda_target"], 637.0);
    // Without --config the shipped presets apply.
    let default = json(&nanobeam(&["neff"]));
    assert_eq!(default["record"]["wavelength"], 637.0);

    std::fs::write(&cfg, "schema_version = 1\nlambda_target = 640.0\nbogus = 1\n").unwrap();
    let o = nanobeam(&["--config", c, "neff"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn outputs_are_deterministic_and_carry_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name);
    let run = |p: &Path| {
        let o = nanobeam(&["bands", "--preset", "nominal-air-mode", "--n-k", "5", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(p).unwrap()
    };
    let a = run(&out("a.csv"));
    let b = run(&out("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# nanobeam "));
    assert!(text.lines().nth(1).unwrap().starts_with("# input_hash = "));
    assert!(text.contains("k_pi_over_a,band_1"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 6);
}

#[test]
fn fit_recovers_a_lorentzian_with_reference_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spectrum.csv");
    let (x0, q) = (637.0_f64, 400.0_f64);
    let g = x0 / q;
    let mut text = String::from("wavelength_nm,device,reference\n");
    for i in 0..200 {
        let x = 630.0 + 0.07 * i as f64;
        let l = 0.8 / (1.0 + (2.0 * (x - x0) / g).powi(2)) + 0.01;
        text.push_str(&format!("{x},{},{}\n", 0.5 * l, 0.5));
    }
    std::fs::write(&path, text).unwrap();
    let v = json(&nanobeam(&["fit", "--input", path.to_str().unwrap()]));
    let r = &v["record"];
    assert!((r["wavelength"].as_f64().unwrap() - x0).abs() < 1e-6);
    assert!((r["q"].as_f64().unwrap() / q - 1.0).abs() < 1e-6);
}

#[test]
fn simulate_then_invert() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.csv");
    let t = traces.to_str().unwrap();
    let coarse = ["--resolution", "10", "--steps", "2000"];
    let mut args = coarse.to_vec();
    args.extend(["simulate", "--preset", "reference-cavity", "--out", t]);
    let o = nanobeam(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&traces).unwrap();
    for key in ["# dx = ", "# dt = ", "# steps = ", "# geometry_hash = "] {
        assert!(text.contains(key), "missing {key}");
    }
    let v = json(&nanobeam(&["invert", "--input", t, "--band", "600:700"]));
    let modes = v["record"].as_array().unwrap();
    assert!(!modes.is_empty());
    assert!(modes.iter().all(|m| m["q"].as_f64().unwrap() > 0.0));
}
