use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use purcellkit::coupling::{total_efficiency, CoupledSystem, Directions};
use purcellkit::numeric::grid;
use purcellkit::spectra::spectral_purcell_profile;
use purcellkit::{Preset, ResonatorSpec};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_purcellkit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn report(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const DEVICE: &str = r#"
[emitter]
preset = "hbn_rt"

[coupling]
collection_directions = "one"
"#;

fn paper_device() -> CoupledSystem {
    let emitter = Preset::HbnRt.spec();
    let resonator = ResonatorSpec {
        center_wavelength: 610.0,
        group_index_times_length: 193_830.0,
        q_intrinsic: 3560.0,
        q_coupling: 9700.0,
        q_scatter: Some(3605.0),
        mode_volume: 30.0,
        cavity_index: 1.95,
        reference_resonance: 610.0,
    };
    let mut sys = CoupledSystem::new(resonator, emitter).unwrap();
    sys.collection_directions = Directions::One;
    sys
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn design_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", DEVICE);
    let out = run(
        dir.path(),
        &["design", "--config", "run.toml", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(dir.path().join("o/design.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "design");
    let expected = total_efficiency(&paper_device()).unwrap();
    let got = |k: &str| r["breakdown"][k].as_f64().unwrap();
    assert!(rel(got("eta_total"), expected.eta_total) < 1e-12);
    assert!(rel(got("beta"), expected.beta) < 1e-12);
    assert!(
        rel(
            r["loaded_q"].as_f64().unwrap(),
            1.0 / (1.0 / 3560.0 + 1.0 / 9700.0 + 1.0 / 3605.0)
        ) < 1e-12
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("rad/ns"));
}

#[test]
fn design_paper_device_at_reduced_overlap() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "run.toml",
        &format!("{DEVICE}overlap_factor = 0.44\n"),
    );
    let out = run(dir.path(), &["design", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(dir.path().join("design.json"));
    let mut sys = paper_device();
    sys.overlap_factor = 0.44;
    let expected = total_efficiency(&sys).unwrap();
    assert!(
        rel(
            r["breakdown"]["eta_total"].as_f64().unwrap(),
            expected.eta_total
        ) < 1e-12
    );
    assert_eq!(r["breakdown"]["regime"], "bad_emitter");
}

#[test]
fn calibrate_constant_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spectrum = |level: f64| {
        let mut s = String::from("wavelength_nm,intensity\n");
        for x in grid(600.0, 620.0, 201, false) {
            s.push_str(&format!("{x},{level}\n"));
        }
        s
    };
    write(d, "top.csv", &spectrum(1.0));
    write(d, "side.csv", &spectrum(0.86));
    write(
        d,
        "run.toml",
        "[paths]\neta_out = 1.0\n[calibrate]\ntop = \"top.csv\"\nside = \"side.csv\"\n",
    );
    let before = [
        fs::read(d.join("top.csv")).unwrap(),
        fs::read(d.join("side.csv")).unwrap(),
    ];
    let out = run(d, &["calibrate", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(d.join("calibrate.json"));
    let beta = r["result"]["beta_s_peak"]["value"].as_f64().unwrap();
    assert!((beta - 0.86 / 1.86).abs() < 1e-12, "{beta}");
    assert!((beta - 0.4624).abs() < 5e-5);
    let after = [
        fs::read(d.join("top.csv")).unwrap(),
        fs::read(d.join("side.csv")).unwrap(),
    ];
    assert_eq!(before, after);
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "run.json",
        r#"{"emitter": {"preset": "hbn_rt"}, "coupling": {"collection_directions": "one"}}"#,
    );
    let out = run(dir.path(), &["design", "--config", "run.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("design.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "empty.toml", "");
    write(d, "run.yaml", DEVICE);
    write(
        d,
        "unknown.toml",
        "[emitter]\npreset = \"hbn_rt\"\ncolour = \"red\"\n",
    );
    write(d, "top_unknown.json", r#"{"emiter": {"preset": "hbn_rt"}}"#);
    write(d, "partial.toml", "[emitter]\nzpl_wavelength = 610.0\n");
    write(
        d,
        "bad_qe.toml",
        "[emitter]\npreset = \"hbn_rt\"\nquantum_efficiency = 1.5\n",
    );
    write(
        d,
        "conflict.toml",
        "[emitter]\npreset = \"hbn_rt\"\n[resonator]\nq_loaded = 1000.0\nq_coupling = 5000.0\n",
    );
    for (cfg, needle) in [
        ("empty.toml", "emitter"),
        ("run.yaml", "extension"),
        ("unknown.toml", "colour"),
        ("top_unknown.json", "emiter"),
        ("partial.toml", "zpl_fwhm"),
        ("bad_qe.toml", "quantum"),
        ("conflict.toml", "q_loaded"),
        ("missing.toml", "cannot read"),
    ] {
        let out = run(d, &["design", "--config", cfg]);
        assert_eq!(code(&out), 2, "{cfg}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "{cfg}: {}", stderr(&out));
    }
}

#[test]
fn calibrate_rejects_disjoint_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spectrum = |lo: f64, hi: f64| {
        let mut s = String::from("wavelength_nm,intensity\n");
        for x in grid(lo, hi, 50, false) {
            s.push_str(&format!("{x},1\n"));
        }
        s
    };
    write(
        d,
        "run.toml",
        "[calibrate]\ntop = \"top.csv\"\nside = \"side.csv\"\n",
    );
    write(d, "top.csv", &spectrum(600.0, 610.0));
    write(d, "side.csv", &spectrum(612.0, 620.0));
    let out = run(d, &["calibrate", "--config", "run.toml"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("overlap"), "{}", stderr(&out));

    // Partly overlapping ranges are resampled onto the common span.
    write(d, "side.csv", &spectrum(605.0, 620.0));
    let out = run(d, &["calibrate", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    write(d, "side.csv", "lambda,counts\n600,1\n");
    let out = run(d, &["calibrate", "--config", "run.toml"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("side.csv"), "{}", stderr(&out));
}

/// Device plus synthesize and calibrate sections; `extra` goes into
/// `[synthesize]`.
fn synth_config(extra: &str) -> String {
    format!(
        "{DEVICE}\n[synthesize]\nwindow = [596.0, 624.0]\npoints = 1401\n{extra}\n\
         [calibrate]\ntop = \"o/free_space.csv\"\nside = \"o/waveguide.csv\"\n"
    )
}

#[test]
fn synthesize_then_calibrate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for peak in [0.5, 3.0, 12.0] {
        write(
            d,
            "run.toml",
            &synth_config(&format!("peak_purcell = {peak}")),
        );
        let out = run(d, &["synthesize", "--config", "run.toml", "--out", "o"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let out = run(d, &["calibrate", "--config", "run.toml", "--out", "o"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let r = report(d.join("o/calibrate.json"));
        let got = r["result"]["f_s_peak"]["value"].as_f64().unwrap();

        // Reference: dense maximum of the forward-model profile near the line.
        let sys = paper_device();
        let mut wl = vec![596.0];
        wl.extend(grid(609.0, 611.0, 4001, false));
        wl.push(624.0);
        let prof = spectral_purcell_profile(&sys, peak, &wl).unwrap();
        let expected = prof[1..prof.len() - 1].iter().copied().fold(0.0, f64::max);
        assert!(
            rel(got, expected) < 0.02,
            "peak {peak}: got {got}, expected {expected}"
        );
        assert!(d.join("o/spectral_purcell.csv").exists());
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = synth_config("exposure = 200.0")
        + "[misalignment]\nposition_error = 40.0\nangle_error = 5.0\nsamples = 20000\n";
    write(d, "run.toml", &cfg);
    let files = [
        "free_space.csv",
        "waveguide.csv",
        "synthesize.json",
        "design.json",
    ];
    let outputs: Vec<Vec<Vec<u8>>> = [("a", "5"), ("b", "5"), ("c", "6")]
        .iter()
        .map(|(o, seed)| {
            for cmd in ["synthesize", "design"] {
                let out = run(
                    d,
                    &[cmd, "--config", "run.toml", "--out", o, "--seed", seed],
                );
                assert_eq!(code(&out), 0, "{}", stderr(&out));
            }
            files
                .iter()
                .map(|f| fs::read(d.join(o).join(f)).unwrap())
                .collect()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0][0], outputs[2][0]);
    assert_ne!(outputs[0][3], outputs[2][3]);
    let r = report(d.join("a/design.json"));
    assert_eq!(r["seed"], 5);
}

#[test]
fn sweep_writes_grid_and_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "run.toml",
        r#"
[sweep]
presets = ["hbn_rt", "wse2"]
axes = [
  { name = "q_loaded", min = 200.0, max = 1700.0, points = 7, spacing = "log" },
  { name = "overlap", min = 0.25, max = 1.0, points = 4 },
]
"#,
    );
    let out = run(
        d,
        &["sweep", "--config", "run.toml", "--out", "o", "--plot"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(d.join("o/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 7 * 4);
    let r = report(d.join("o/sweep.json"));
    assert_eq!(r["command"], "sweep");
    let argmax = r["argmax"].as_array().unwrap();
    assert_eq!(argmax.len(), 2);
    for a in argmax {
        // Efficiency grows with overlap, so the best point sits at overlap 1.
        assert_eq!(a["coords"][1].as_f64().unwrap(), 1.0);
    }
    assert!(d.join("o/sweep_hbn_rt.svg").exists());
    assert!(d.join("o/sweep_wse2.svg").exists());
}

#[test]
fn single_point_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "run.toml",
        &format!(
            "{DEVICE}[sweep]\naxes = [{{ name = \"overlap\", min = 0.5, max = 0.5, points = 1 }}]\n"
        ),
    );
    let out = run(d, &["sweep", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(d.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
}

#[test]
fn fits_each_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let mut comb = String::from("wavelength_nm,intensity\n");
    for x in grid(605.0, 615.0, 2001, false) {
        let dips: f64 = [606.2, 608.1, 610.0, 611.9, 613.8]
            .iter()
            .map(|c| 0.6 * 0.04 / ((x - c) * (x - c) + 0.04))
            .sum();
        comb.push_str(&format!("{x},{}\n", 1.0 - dips));
    }
    write(d, "comb.csv", &comb);
    let mut g2 = String::from("# bin_width_ns: 0.2\ndelay_ns,coincidences\n");
    for i in -100..=100 {
        let t = f64::from(i) * 0.2;
        g2.push_str(&format!(
            "{t},{}\n",
            400.0 * (1.0 - 0.9 * (-t.abs() / 1.5).exp())
        ));
    }
    write(d, "g2.csv", &g2);
    let mut thick = String::from("thickness_nm,q_loaded\n");
    for t in [0.0f64, 5.0, 10.0, 20.0, 30.0, 40.0] {
        let q = 1.0 / (1.0 / 3560.0 + 1.0 / 9700.0 + 1e-6 * t * t);
        thick.push_str(&format!("{t},{q}\n"));
    }
    write(d, "thick.csv", &thick);

    let cases = [
        ("comb", "comb.csv", "", "fsr", 1.9),
        ("g2", "g2.csv", "", "g2_zero", 0.1),
        (
            "thickness",
            "thick.csv",
            "q_intrinsic = 3560.0\nq_coupling = 9700.0\n",
            "exponent",
            2.0,
        ),
    ];
    for (kind, data, extra, param, expected) in cases {
        write(
            d,
            "fit.toml",
            &format!("[fit]\nkind = \"{kind}\"\ndata = \"{data}\"\n{extra}"),
        );
        let out = run(d, &["fit", "--config", "fit.toml", "--out", kind, "--plot"]);
        assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
        let r = report(d.join(kind).join("fit.json"));
        assert_eq!(r["kind"], kind);
        assert_eq!(r["fit"]["converged"], true);
        let value = r["fit"]["params"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["name"] == param)
            .unwrap()["value"]
            .as_f64()
            .unwrap();
        assert!(rel(value, expected) < 1e-6, "{kind}: {param} = {value}");
        assert!(d.join(kind).join("fit.svg").exists());
    }

    write(
        d,
        "fit.toml",
        "[fit]\nkind = \"thickness\"\ndata = \"thick.csv\"\n",
    );
    assert_eq!(code(&run(d, &["fit", "--config", "fit.toml"])), 2);
}

#[test]
fn fit_reports_non_convergence_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // A flat trace leaves the antibunching time unidentified.
    let mut g2 = String::from("delay_ns,coincidences\n");
    for i in -50..=50 {
        g2.push_str(&format!(
            "{},{}\n",
            f64::from(i) * 0.2,
            100.0 + f64::from(i % 3)
        ));
    }
    write(d, "g2.csv", &g2);
    write(d, "fit.toml", "[fit]\nkind = \"g2\"\ndata = \"g2.csv\"\n");
    let out = run(d, &["fit", "--config", "fit.toml"]);
    let c = code(&out);
    assert!(c == 0 || c == 3, "{}", stderr(&out));
    let r = report(d.join("fit.json"));
    assert_eq!(r["fit"]["converged"].as_bool().unwrap(), c == 0);
}

#[test]
fn verify_default_grid_within_two_percent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "run.toml", "");
    let out = run(d, &["verify", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(d.join("verify.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["grid"].as_array().unwrap().len(), 27);
    assert!(r["max_relative_error"].as_f64().unwrap() < 0.02);
    assert!(r["max_budget_error"].as_f64().unwrap() < 1e-6);
    assert!(r["max_dt_halving_delta"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["within_tolerance"], true);
    assert!(String::from_utf8_lossy(&out.stdout).contains("dt-halving"));
}

#[test]
fn verify_warns_in_strong_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "run.toml",
        "[verify]\nkappa = 1.0\npurcell = [100.0]\ndephasing_ratio = [0.0]\nquantum_efficiency = [1.0]\ndt_halving = false\n",
    );
    let out = run(d, &["verify", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("strong coupling"), "{}", stderr(&out));
    let r = report(d.join("verify.json"));
    assert!(r["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .any(|w| w.as_str().unwrap().contains("out of regime")));
}

#[test]
fn verify_checks_configured_system() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "run.toml",
        &format!("{DEVICE}[verify]\npurcell = [1.0]\ndephasing_ratio = [0.0]\nquantum_efficiency = [1.0]\nsystem = true\ndt_halving = false\n"),
    );
    let out = run(d, &["verify", "--config", "run.toml", "--plot"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(d.join("verify.json"));
    let s = &r["system"];
    assert_eq!(s["strong_coupling"], false);
    assert!(s["relative_error"].as_f64().unwrap() < 0.02, "{s}");
    assert!(r["max_dt_halving_delta"].is_null());
    assert!(d.join("verify_time_series.csv").exists());
    assert!(d.join("verify.svg").exists());

    write(d, "bad.toml", "[verify]\nquantum_efficiency = [0.0]\n");
    assert_eq!(code(&run(d, &["verify", "--config", "bad.toml"])), 2);
}

#[test]
fn sample_configs_run() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for entry in fs::read_dir(&configs).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, d.join(p.file_name().unwrap())).unwrap();
    }
    for (cmd, cfg) in [
        ("design", "device.toml"),
        ("synthesize", "device.toml"),
        ("calibrate", "device.toml"),
        ("sweep", "loaded_q_sweep.toml"),
    ] {
        let out = run(d, &[cmd, "--config", cfg, "--out", "out", "--plot"]);
        assert_eq!(code(&out), 0, "{cmd} {cfg}: {}", stderr(&out));
    }
    let out = run(d, &["sweep", "--config", "intrinsic_q_sweep.toml", "--out", "iq"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = report(d.join("iq/sweep.json"));
    assert_eq!(r["optimize_over"], "q_coupling");
    let r = report(d.join("out/sweep.json"));
    let peak = r["argmax"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["emitter"] == "hbn_cryo")
        .unwrap()["eta_max"]
        .as_f64()
        .unwrap();
    // Same model value the acceptance suite reports for this curve.
    assert!((peak - 0.9865).abs() < 5e-4, "{peak}");
}
