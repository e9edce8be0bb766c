use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use occsim_core::codec::bytes_to_bits;
use occsim_core::{decode_frame, FrameLayout, RenderedImage};
use tempfile::TempDir;

fn occsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = occsim(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn decoded_bits(path: &Path) -> Vec<bool> {
    let img = RenderedImage::read_pgm(path).unwrap();
    decode_frame(&img, &FrameLayout::default(), None)
        .unwrap()
        .bits
}

#[test]
fn encode_places_ascii_bits_msb_first() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["encode", "--text", "A", "-o", "a.pgm"]);
    let bits = decoded_bits(&tmp.path().join("a.pgm"));
    assert_eq!(bits[..8], bytes_to_bits(b"A")[..]);
    assert!(bits[8..].iter().all(|&b| !b));
    assert!(tmp.path().join("a.pgm.manifest").exists());
}

#[test]
fn empty_text_gives_blank_data_region() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["encode", "--text", "", "-o", "e.pgm"]);
    assert!(decoded_bits(&tmp.path().join("e.pgm")).iter().all(|&b| !b));
}

#[test]
fn oversized_text_names_capacity_and_frames() {
    let tmp = TempDir::new().unwrap();
    let out = occsim(
        tmp.path(),
        &["encode", "--text", &"x".repeat(23), "-o", "f.pgm"],
    );
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("182-bit"), "{msg}");
    assert!(msg.contains("2 frames"), "{msg}");
    assert!(!tmp.path().join("f.pgm").exists());
}

#[test]
fn message_survives_transmit_and_decode() {
    let tmp = TempDir::new().unwrap();
    // cut to one frame's 22 whole characters
    let message = &"optical communications research group"[..22];
    ok(
        tmp.path(),
        &["encode", "--text", message, "-o", "frame.pgm"],
    );
    ok(tmp.path(), &["transmit", "frame.pgm", "-o", "cap.pgm"]);
    let report = ok(
        tmp.path(),
        &["decode", "cap.pgm", "--reference-text", message],
    );
    assert!(report.contains(&format!("text: {message}\n")), "{report}");
    assert!(report.contains("success_rate: 1\n"), "{report}");
}

#[test]
fn noisy_decode_reports_success_fraction() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["encode", "--bits", &"10".repeat(91), "-o", "frame.pgm"],
    );
    ok(
        tmp.path(),
        &[
            "transmit",
            "frame.pgm",
            "--set",
            "distance_m=0.45",
            "--set",
            "noise_sigma=0.3",
            "--seed",
            "4",
            "-o",
            "cap.pgm",
        ],
    );
    let report = ok(
        tmp.path(),
        &[
            "decode",
            "cap.pgm",
            "--reference-bits",
            &"10".repeat(91),
            "-o",
            "report.txt",
        ],
    );
    let rate: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("success_rate: "))
        .expect("success line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(
        fs::read_to_string(tmp.path().join("report.txt")).unwrap(),
        report
    );
}

#[test]
fn distant_link_breaks_with_own_exit_code() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["encode", "--text", "hi", "-o", "frame.pgm"]);
    let out = occsim(
        tmp.path(),
        &[
            "transmit",
            "frame.pgm",
            "--set",
            "distance_m=10",
            "-o",
            "cap.pgm",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("link broken"));
    assert!(!tmp.path().join("cap.pgm").exists());
}

#[test]
fn blank_image_has_no_frame() {
    let tmp = TempDir::new().unwrap();
    RenderedImage::filled(64, 48, 1.0)
        .write_pgm(tmp.path().join("blank.pgm"))
        .unwrap();
    let out = occsim(tmp.path(), &["decode", "blank.pgm"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("no frame found"));
}

#[test]
fn incomplete_config_names_missing_key() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["encode", "--text", "hi", "-o", "frame.pgm"]);
    let defaults = ok(tmp.path(), &["defaults"]);
    let partial: String = defaults
        .lines()
        .filter(|l| !l.starts_with("sensor_rows"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(tmp.path().join("scene.cfg"), partial).unwrap();
    let out = occsim(
        tmp.path(),
        &[
            "transmit",
            "frame.pgm",
            "--config",
            "scene.cfg",
            "-o",
            "cap.pgm",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sensor_rows"), "{}", stderr(&out));

    fs::write(tmp.path().join("full.cfg"), &defaults).unwrap();
    ok(
        tmp.path(),
        &[
            "transmit",
            "frame.pgm",
            "--config",
            "full.cfg",
            "-o",
            "cap.pgm",
        ],
    );
    let out = occsim(
        tmp.path(),
        &[
            "transmit",
            "frame.pgm",
            "--set",
            "distanse_m=1",
            "-o",
            "cap.pgm",
        ],
    );
    assert!(stderr(&out).contains("distanse_m"));
}

#[test]
fn default_sweep_has_ten_rows_and_artifacts_in_order() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["sweep", "--set", "trials_per_distance=2", "-o", "sweep.csv"],
    );
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[0].starts_with("0.1,"));
    assert!(rows[9].starts_with("0.55,"));
    let manifest = fs::read_to_string(tmp.path().join("sweep.csv.manifest")).unwrap();
    assert!(
        manifest.contains("outputs = sweep.csv,sweep.svg\n"),
        "{manifest}"
    );
    assert!(manifest.contains("command = sweep\n"));
    assert!(fs::read_to_string(tmp.path().join("sweep.svg"))
        .unwrap()
        .contains("<polyline"));
}

#[test]
fn seed_flag_controls_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let args = |seed: &'static str, out: &'static str| {
        vec![
            "sweep",
            "--set",
            "trials_per_distance=3",
            "--set",
            "distances_m=0.4,0.5",
            "--set",
            "noise_sigma=0.2",
            "--seed",
            seed,
            "-o",
            out,
        ]
    };
    ok(tmp.path(), &args("9", "a/s.csv"));
    ok(tmp.path(), &args("9", "b/s.csv"));
    ok(tmp.path(), &args("10", "c/s.csv"));
    let read = |p: &str| fs::read(tmp.path().join(p)).unwrap();
    assert_eq!(read("a/s.csv"), read("b/s.csv"));
    assert_eq!(read("a/s.csv.manifest"), read("b/s.csv.manifest"));
    assert_ne!(read("a/s.csv"), read("c/s.csv"));
    let manifest = String::from_utf8(read("a/s.csv.manifest")).unwrap();
    assert!(manifest.contains("config.master_seed = 9\n"));
    assert!(manifest.contains("config.seed = 9\n"));
}

fn assert_replay_identical(tmp: &Path, manifest: &str, files: &[&str]) {
    ok(tmp, &["replay", manifest, "--out-dir", "replayed"]);
    for f in files {
        let name = Path::new(f).file_name().unwrap();
        assert_eq!(
            fs::read(tmp.join(f)).unwrap(),
            fs::read(tmp.join("replayed").join(name)).unwrap(),
            "{f} differs after replay"
        );
    }
}

#[test]
fn manifests_replay_byte_identically() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    ok(p, &["encode", "--text", "replay me", "-o", "frame.pgm"]);
    ok(
        p,
        &[
            "transmit",
            "frame.pgm",
            "--set",
            "noise_sigma=0.1",
            "--seed",
            "3",
            "-o",
            "t/cap.pgm",
        ],
    );
    assert_replay_identical(
        p,
        "t/cap.pgm.manifest",
        &["t/cap.pgm", "t/cap.pgm.manifest"],
    );

    ok(
        p,
        &[
            "sweep",
            "--set",
            "trials_per_distance=2",
            "--set",
            "noise_sigma=0.2",
            "-o",
            "s/sweep.csv",
        ],
    );
    assert_replay_identical(
        p,
        "s/sweep.csv.manifest",
        &["s/sweep.csv", "s/sweep.svg", "s/sweep.csv.manifest"],
    );

    ok(p, &["scan", "--angles", "37", "-o", "scan/p.csv"]);
    assert_replay_identical(
        p,
        "scan/p.csv.manifest",
        &["scan/p.csv", "scan/p.svg", "scan/p.csv.manifest"],
    );
}

#[test]
fn fit_recovers_lambertian_order_one() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("angle_deg,power\n");
    for a in (0..=180).step_by(2) {
        let p = ((a as f64 - 90.0).to_radians().cos()).max(0.0);
        csv.push_str(&format!("{a},{p}\n"));
    }
    fs::write(tmp.path().join("cos.csv"), csv).unwrap();
    let out = ok(tmp.path(), &["fit", "cos.csv", "-o", "fit.csv"]);
    assert!(out.contains("m_hat=1.000"), "{out}");
    let fitted = fs::read_to_string(tmp.path().join("fit.csv")).unwrap();
    assert!(fitted.starts_with("angle_deg,normalized_power,fitted_power\n"));
}

fn scan_powers(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("angle"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn portrait_and_landscape_scans_are_symmetric() {
    let tmp = TempDir::new().unwrap();
    for o in ["portrait", "landscape"] {
        let out = format!("{o}.csv");
        ok(
            tmp.path(),
            &["scan", "--orientation", o, "--angles", "91", "-o", &out],
        );
        let p = scan_powers(&tmp.path().join(&out));
        assert_eq!(p.len(), 91);
        for i in 0..p.len() {
            let (a, b) = (p[i], p[p.len() - 1 - i]);
            assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(b.abs()),
                "{o} {i}: {a} vs {b}"
            );
        }
        let peak = p.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(p[45], peak);
    }
}

#[test]
fn ingest_reports_bad_row_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("bad.csv"),
        "distance_m,success_rate\n0.2,abc\n",
    )
    .unwrap();
    let out = occsim(tmp.path(), &["ingest", "bad.csv", "-o", "out.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    fs::write(tmp.path().join("unknown.csv"), "a,b\n1,2\n").unwrap();
    let out = occsim(tmp.path(), &["ingest", "unknown.csv", "-o", "out.csv"]);
    assert!(stderr(&out).contains("schema"), "{}", stderr(&out));

    fs::write(
        tmp.path().join("good.csv"),
        "distance_m,success_rate\n0.2,1\n0.4,0.98\n",
    )
    .unwrap();
    ok(tmp.path(), &["ingest", "good.csv", "-o", "m/out.csv"]);
    let csv = fs::read_to_string(tmp.path().join("m/out.csv")).unwrap();
    assert_eq!(
        csv,
        "distance_m,mean_success,std_success,trials,link_broken\n0.2,1,0,1,0\n0.4,0.98,0,1,0\n"
    );
}

#[test]
fn calibrate_writes_sweep_with_calibrated_noise() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "calibrate",
            "--set",
            "trials_per_distance=20",
            "--set",
            "distances_m=0.3,0.4,0.5",
            "-o",
            "cal.csv",
        ],
    );
    assert!(out.starts_with("sigma = "), "{out}");
    let csv = fs::read_to_string(tmp.path().join("cal.csv")).unwrap();
    let at_40: f64 = csv
        .lines()
        .find(|l| l.starts_with("0.4,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((at_40 - 0.98).abs() <= 0.01, "{csv}");

    let out = occsim(tmp.path(), &["calibrate", "--target", "1.0", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
}
