//! End-to-end tests of the `thzcube` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::write_file;

const SMALL_PHANTOM: &str = "nx = 20\nny = 20\nnb = 64\nsurface_peak_index = 10\n\
                             buried_depth_delay = 22\nlayer_thickness_delay = 12\npeak_width = 3\n";

const SMALL_SETTINGS: [&str; 10] = [
    "--block-nx", "4", "--block-ny", "4", "--dict-k", "48", "--train-iters", "3", "--seed", "11",
];

fn thzcube(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thzcube"));
    cmd.arg("--quiet").args(args);
    for (flag, path) in paths {
        cmd.arg(flag).arg(path);
    }
    cmd.output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

/// `extra` (starting with the subcommand) followed by `settings`.
fn with(settings: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    extra.iter().chain(settings).copied().collect()
}

struct Fixture {
    dir: tempfile::TempDir,
    clean: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_file(dir.path(), "phantom.txt", SMALL_PHANTOM);
    let clean = dir.path().join("clean.thzc");
    ok(thzcube(&["phantom"], &[("--spec", &spec), ("--out", &clean)]));
    Fixture { dir, clean }
}

#[test]
fn stages_compose_to_the_one_shot_pipeline() {
    let f = fixture();
    let d = f.dir.path();
    let run = d.join("run");
    let args = with(&SMALL_SETTINGS, &["pipeline", "--keep-intermediates", "--rate", "0.2"]);
    ok(thzcube(&args, &[("--input", &f.clean), ("--out-dir", &run)]));

    let (y, mask, filled, dict, recon) = (
        d.join("y.thzc"),
        d.join("mask.thzm"),
        d.join("filled.thzc"),
        d.join("dict.thzd"),
        d.join("recon.thzc"),
    );
    let rate = with(&SMALL_SETTINGS, &["--rate", "0.2"]);
    ok(thzcube(
        &[&["subsample"], &rate[..]].concat(),
        &[("--input", &f.clean), ("--out", &y), ("--mask-out", &mask)],
    ));
    ok(thzcube(&[&["interp"], &rate[..]].concat(), &[("--input", &y), ("--mask", &mask), ("--out", &filled)]));
    ok(thzcube(&[&["train"], &rate[..]].concat(), &[("--input", &filled), ("--out", &dict)]));
    ok(thzcube(
        &[&["reconstruct"], &rate[..]].concat(),
        &[("--input", &filled), ("--dict", &dict), ("--out", &recon)],
    ));

    assert!(same_bytes(&y, &run.join("incomplete.thzc")));
    assert!(same_bytes(&mask, &run.join("mask.thzm")));
    assert!(same_bytes(&filled, &run.join("interpolated.thzc")));
    assert!(same_bytes(&dict, &run.join("dictionary.thzd")));
    assert!(same_bytes(&recon, &run.join("reconstructed.thzc")));
    assert!(same_bytes(&f.clean, &run.join("clean.thzc")));

    // Kept intermediates feed the single-stage commands.
    let again = d.join("again.thzc");
    ok(thzcube(
        &[&["reconstruct"], &rate[..]].concat(),
        &[
            ("--input", &run.join("interpolated.thzc")),
            ("--dict", &run.join("dictionary.thzd")),
            ("--out", &again),
        ],
    ));
    assert!(same_bytes(&again, &recon));

    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "method,rate,input_snr_db,output_snr_db,wall_seconds");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("wavelet,0.2,17") && lines[2].starts_with("interp,") && lines[3].starts_with("proposed,"));
    assert!(lines.iter().skip(1).all(|l| l.ends_with(',')), "wall times are blank without --timing");
}

#[test]
fn metrics_command_scores_the_comparators() {
    let f = fixture();
    let d = f.dir.path();
    let run = d.join("run");
    let args = with(&SMALL_SETTINGS, &["pipeline", "--keep-intermediates", "--rate", "0.3"]);
    let pipeline_csv = ok(thzcube(&args, &[("--input", &f.clean), ("--out-dir", &run)]));
    let table = ok(thzcube(
        &["metrics", "--rate", "0.3"],
        &[
            ("--reference", &f.clean),
            ("--interpolated", &run.join("interpolated.thzc")),
            ("--proposed", &run.join("reconstructed.thzc")),
        ],
    ));
    assert_eq!(table, pipeline_csv);
}

#[test]
fn full_rate_without_noise_is_the_identity_for_interpolation() {
    let f = fixture();
    let run = f.dir.path().join("run");
    let args = with(&SMALL_SETTINGS, &["pipeline", "--rate", "1.0", "--input-snr", "inf"]);
    let csv = ok(thzcube(&args, &[("--input", &f.clean), ("--out-dir", &run)]));
    let interp = csv.lines().find(|l| l.starts_with("interp,")).unwrap();
    assert_eq!(interp, "interp,1,inf,inf,");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let f = fixture();
    let d = f.dir.path();
    let cfg = write_file(d, "run.cfg", "# test settings\nrate = 0.5\ninput-snr = 25\n");
    let (y, mask) = (d.join("y.thzc"), d.join("mask.thzm"));
    ok(thzcube(
        &["subsample", "--rate", "0.25"],
        &[("--config", &cfg), ("--input", &f.clean), ("--out", &y), ("--mask-out", &mask)],
    ));
    let m = thzcube::datacube::read_mask(&mask).unwrap();
    assert!((m.rate() - 0.25).abs() < 0.01);
}

#[test]
fn exit_codes() {
    let f = fixture();
    let d = f.dir.path();
    let out = d.join("out.thzc");
    let mask = d.join("mask.thzm");

    let bad_rate = thzcube(&["subsample", "--rate", "0"], &[("--input", &f.clean), ("--out", &out), ("--mask-out", &mask)]);
    assert_eq!(code(&bad_rate), 2);
    assert!(String::from_utf8_lossy(&bad_rate.stderr).contains("rate"));

    let cfg = write_file(d, "bad.cfg", "no_such_key = 1\n");
    let unknown = thzcube(&["subsample"], &[("--config", &cfg), ("--input", &f.clean), ("--out", &out), ("--mask-out", &mask)]);
    assert_eq!(code(&unknown), 2);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("no_such_key"));

    let missing = d.join("missing.thzc");
    let io = thzcube(&["wavelet"], &[("--input", &missing), ("--out", &out)]);
    assert_eq!(code(&io), 3);
    assert!(String::from_utf8_lossy(&io.stderr).contains("missing.thzc"));

    let garbage = write_file(d, "garbage.thzc", "not a cube");
    assert_eq!(code(&thzcube(&["wavelet"], &[("--input", &garbage), ("--out", &out)])), 3);

    // lambda = 0 with strides that skip voxels leaves a zero denominator.
    let args = with(
        &SMALL_SETTINGS,
        &["pipeline", "--lambda", "0", "--stride-x", "5", "--rate", "0.5"],
    );
    let numerical = thzcube(&args, &[("--input", &f.clean), ("--out-dir", &d.join("run"))]);
    assert_eq!(code(&numerical), 4, "{}", String::from_utf8_lossy(&numerical.stderr));
}

#[test]
fn analysis_and_export_commands() {
    let f = fixture();
    let d = f.dir.path();
    let csv = d.join("structure.csv");
    let summary = ok(thzcube(
        &["structure", "--depth-scale", "0.0032", "--no-refine"],
        &[("--input", &f.clean), ("--csv", &csv)],
    ));
    assert!(summary.contains("0.0704"), "{summary}");
    assert!(summary.contains("0.0384"), "{summary}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 20 * 20 + 1);

    let map_csv = d.join("map.csv");
    let pgm = d.join("map.pgm");
    let text = ok(thzcube(
        &["ccm", "--ref-pixel", "10,10"],
        &[("--input", &f.clean), ("--compare", &f.clean), ("--csv", &map_csv), ("--pgm", &pgm)],
    ));
    assert!(text.contains("mean |ccm difference|: 0.000000"), "{text}");
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5"));

    let frame = d.join("frame.pgm");
    ok(thzcube(&["export", "--frame", "10"], &[("--input", &f.clean), ("--pgm", &frame)]));
    assert!(std::fs::read(&frame).unwrap().starts_with(b"P5"));
    assert_eq!(code(&thzcube(&["export", "--frame", "10"], &[("--input", &f.clean)])), 2);
}
