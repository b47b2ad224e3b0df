//! End-to-end exercises of the `specring` binary: each subcommand on a
//! small synthetic dataset, plus the exit-code contract.

use std::path::Path;
use std::process::Command;

fn specring() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specring"))
}

fn run_ok(cmd: &mut Command) -> String {
    let output = cmd.output().expect("spawn specring");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn simulate_small(dir: &Path, extra: &[&str]) {
    let mut cmd = specring();
    cmd.args([
        "simulate",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "11",
        "--detectors",
        "32",
        "--angles",
        "24",
        "--angle-increment",
        "7.5",
        "--grid",
        "32",
        "--channels",
        "3",
        "--flats",
        "4",
    ]);
    cmd.args(extra);
    run_ok(&mut cmd);
}

#[test]
fn full_command_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(
        &data,
        &["--gain-fraction", "0.1", "--gain-amplitude", "0.05"],
    );
    for name in [
        "counts.json",
        "counts.raw",
        "flats.json",
        "flats.raw",
        "geometry.json",
    ] {
        assert!(data.join(name).exists(), "missing {name}");
    }
    assert!(data.join("truth").join("true_flat.json").exists());
    assert!(data.join("truth").join("phantom.raw").exists());

    // flat estimates, conventional and low-rank
    let conv = tmp.path().join("flat_conv");
    run_ok(specring().args([
        "flat-estimate",
        "--flats",
        data.join("flats").to_str().unwrap(),
        "--out",
        conv.to_str().unwrap(),
        "--flat",
        "conv",
    ]));
    let lr = tmp.path().join("flat_lr");
    run_ok(specring().args([
        "flat-estimate",
        "--flats",
        data.join("flats").to_str().unwrap(),
        "--out",
        lr.to_str().unwrap(),
        "--flat",
        "lr",
        "--rank",
        "1",
    ]));
    assert!(conv.with_extension("raw").exists());
    assert!(lr.with_extension("raw").exists());

    // counts -> attenuation
    let atten = tmp.path().join("atten");
    run_ok(specring().args([
        "correct",
        "--counts",
        data.join("counts").to_str().unwrap(),
        "--flat",
        lr.to_str().unwrap(),
        "--out",
        atten.to_str().unwrap(),
    ]));

    // destripe the attenuation sinogram
    let destriped = tmp.path().join("destriped");
    run_ok(specring().args([
        "destripe",
        "--sino",
        atten.to_str().unwrap(),
        "--out",
        destriped.to_str().unwrap(),
        "--ring-filter",
        "sortsmooth",
        "--ss-window",
        "11",
    ]));
    assert!(destriped.with_extension("raw").exists());

    // single-variant reconstruction with a matrix cache
    let recon = tmp.path().join("recon");
    let cache = tmp.path().join("sysmat");
    run_ok(specring().args([
        "reconstruct",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        recon.to_str().unwrap(),
        "--method",
        "fbp",
        "--filter",
        "hann",
        "--flat",
        "lr",
        "--matrix-cache",
        cache.to_str().unwrap(),
    ]));
    assert!(recon.with_extension("raw").exists());
    assert!(recon.with_extension("ch0.pgm").exists());
    assert!(cache.with_extension("values.raw").exists());

    // reconstruct again from the cache (exercises the load path)
    let recon2 = tmp.path().join("recon2");
    run_ok(specring().args([
        "reconstruct",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        recon2.to_str().unwrap(),
        "--method",
        "fbp",
        "--flat",
        "lr",
        "--matrix-cache",
        cache.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(recon.with_extension("raw")).unwrap(),
        std::fs::read(recon2.with_extension("raw")).unwrap(),
        "cached-matrix reconstruction should be bit-identical"
    );

    // metrics against a reference volume
    let csv = tmp.path().join("metrics.csv");
    run_ok(specring().args([
        "evaluate",
        "--volume",
        recon.to_str().unwrap(),
        "--reference",
        recon.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--roi-signal",
        "4,4,6,6",
        "--roi-background",
        "20,20,6,6",
    ]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("channel_index,label,method,flat_mode,cnr,rd,ring_energy"));
    assert_eq!(text.lines().count(), 1 + 3, "one row per channel");

    // singular-value profile
    let profile = tmp.path().join("sv.csv");
    run_ok(specring().args([
        "svd-profile",
        "--flats",
        data.join("flats").to_str().unwrap(),
        "--out",
        profile.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&profile).unwrap();
    assert_eq!(text.lines().count(), 1 + 3, "min(r*s, m) singular values");
}

#[test]
fn pipeline_grid_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("config.json");
    // start from the built-in default and shrink it
    let default_json = run_ok(specring().arg("default-config"));
    let mut config: serde_json::Value = serde_json::from_str(&default_json).unwrap();
    config["source"]["sim"] = serde_json::json!({
        "detectors": 32,
        "angles": 24,
        "angle_start": 0.0,
        "angle_increment": 7.5,
        "grid_side": 32,
        "channels": 2,
        "num_flats": 4,
        "gain": {"fraction": 0.1, "amplitude": 0.05, "consistent": false},
        "poisson_scale": 400.0,
        "noise_disabled": false
    });
    config["tv"]["max_iter"] = serde_json::json!(40);
    config["roi_signal"] = serde_json::json!({"row0": 12, "col0": 22, "height": 6, "width": 6});
    config["roi_background"] = serde_json::json!({"row0": 13, "col0": 13, "height": 6, "width": 6});
    std::fs::write(&config_path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();

    let out = tmp.path().join("run");
    let stdout = run_ok(
        specring()
            .args([
                "pipeline",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .env("SPECRING_THREADS", "1"),
    );
    assert!(stdout.contains("8 variants"));

    for label in [
        "fbp", "wf-fbp", "nlm-fbp", "lr-fbp", "tv", "wf-tv", "nlm-tv", "lr-tv",
    ] {
        assert!(
            out.join(format!("recon_{label}.raw")).exists(),
            "missing reconstruction for {label}"
        );
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    // 8 pipelines x 2 channels + header
    assert_eq!(metrics.lines().count(), 1 + 16);
    assert!(out.join("singular_values.csv").exists());
    assert!(out.join("run_manifest.json").exists());
    let quicklooks = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "pgm")
        })
        .count();
    assert_eq!(
        quicklooks,
        8 * 3,
        "three RD-selected quick-looks per variant"
    );

    // re-run from the manifest into a second directory
    let out2 = tmp.path().join("run2");
    run_ok(specring().args([
        "pipeline",
        "--from-manifest",
        out.join("run_manifest.json").to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(out.join("recon_fbp.raw")).unwrap(),
        std::fs::read(out2.join("recon_fbp.raw")).unwrap()
    );
}

#[test]
fn validation_errors_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("bad.json");
    let default_json = run_ok(specring().arg("default-config"));
    let mut config: serde_json::Value = serde_json::from_str(&default_json).unwrap();
    config["tv"]["lambda"] = serde_json::json!(-0.5);
    std::fs::write(&config_path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();

    let output = specring()
        .args([
            "pipeline",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "validation failures exit 1");
    assert!(
        String::from_utf8_lossy(&output.stderr).contains("lambda"),
        "stderr should name the rejected field"
    );
    // nothing was written before validation
    assert!(!tmp.path().join("out").join("metrics.csv").exists());
}

#[test]
fn runtime_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let output = specring()
        .args([
            "svd-profile",
            "--flats",
            tmp.path().join("nothing").to_str().unwrap(),
            "--out",
            tmp.path().join("sv.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "missing inputs exit 2");
}

#[test]
fn simulate_noiseless_counts_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, &["--no-noise"]);
    // noiseless counts corrected by the true flat give finite attenuation
    let atten = tmp.path().join("atten");
    run_ok(specring().args([
        "correct",
        "--counts",
        data.join("counts").to_str().unwrap(),
        "--flat",
        data.join("truth").join("true_flat").to_str().unwrap(),
        "--out",
        atten.to_str().unwrap(),
    ]));
    assert!(atten.with_extension("raw").exists());
}
