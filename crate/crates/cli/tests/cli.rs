use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpm_core::io::{parse_csv_report, read_depth, read_dpm, write_depth, write_dpm, Table};
use dpm_core::losses::{baseline_losses, combined_loss};
use dpm_core::{encode, BinPartition, DepthMap, Dpm, LossConfig, SsimParams};
use ndarray::{arr2, Array2, Array3};

fn dpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpm"))
        .args(args)
        .env("DPM_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dpm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = dpm(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ramp(h: usize, w: usize, lo: f64, hi: f64) -> DepthMap {
    DepthMap::dense(Array2::from_shape_fn((h, w), |(r, _)| lo + (hi - lo) * r as f64 / (h - 1) as f64)).unwrap()
}

fn write_text(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn encode_png_produces_a_valid_dpm() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("ramp.png");
    write_depth(&ramp(12, 10, 5.0, 75.0), &png).unwrap();
    let out = dir.path().join("ramp.dpm");
    let stdout = ok(&["encode", "--depth", s(&png), "--out", s(&out)]);
    assert!(stdout.contains("pixels 120 valid 120 clamped 0"), "{stdout}");
    let d = read_dpm(&out).unwrap();
    assert_eq!((d.height(), d.width(), d.bins()), (12, 10, 257));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.png");
    let (c, err) = code(&["encode", "--depth", s(&missing), "--out", s(&dir.path().join("x.dpm"))]);
    assert_eq!(c, 2);
    assert!(err.contains("nowhere.png"), "{err}");
}

#[test]
fn normalization_mode_changes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let pfm = dir.path().join("r.pfm");
    write_depth(&ramp(6, 6, 10.0, 60.0), &pfm).unwrap();
    let renorm = write_text(dir.path(), "renorm.cfg", "norm_mode = Renormalize\n");
    let (a, b) = (dir.path().join("a.dpm"), dir.path().join("b.dpm"));
    ok(&["encode", "--depth", s(&pfm), "--out", s(&a)]);
    ok(&["encode", "--depth", s(&pfm), "--out", s(&b), "--config", s(&renorm)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn decode_round_trips_an_interior_ramp() {
    let dir = tempfile::tempdir().unwrap();
    let pfm = dir.path().join("r.pfm");
    let input = ramp(9, 7, 6.0, 74.0);
    write_depth(&input, &pfm).unwrap();
    let cfg = write_text(dir.path(), "c.cfg", "norm_mode = Renormalize\n");
    let (d, back) = (dir.path().join("r.dpm"), dir.path().join("back.pfm"));
    ok(&["encode", "--depth", s(&pfm), "--out", s(&d), "--config", s(&cfg)]);
    ok(&["decode", "--dpm", s(&d), "--out", s(&back)]);
    let out = read_depth(&back).unwrap();
    let half_width = 80.0 / 257.0 / 2.0;
    for (a, b) in input.values().iter().zip(out.values()) {
        assert!((a - b).abs() <= half_width, "{a} vs {b}");
    }
}

#[test]
fn one_hot_decodes_to_centers_and_png_warns() {
    let dir = tempfile::tempdir().unwrap();
    let p = BinPartition::uniform(8, 0.0, 80.0).unwrap();
    let probs = Array3::from_shape_fn((2, 4, 8), |(r, c, b)| if b == r * 4 + c { 1.0 } else { 0.0 });
    let path = dir.path().join("h.dpm");
    write_dpm(&Dpm::new(probs, p.clone()).unwrap(), &path).unwrap();
    let pfm = dir.path().join("h.pfm");
    ok(&["decode", "--dpm", s(&path), "--out", s(&pfm)]);
    let out = read_depth(&pfm).unwrap();
    for r in 0..2 {
        for c in 0..4 {
            assert_eq!(out.get(r, c), p.centers()[r * 4 + c]);
        }
    }
    let png = dir.path().join("h.png");
    let o = dpm(&["decode", "--dpm", s(&path), "--out", s(&png)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("quantized"));
}

#[test]
fn malformed_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_text(dir.path(), "bad.dpm", "JUNKJUNKJUNKJUNKJUNKJUNKJUNK");
    assert_eq!(code(&["decode", "--dpm", s(&bad), "--out", s(&dir.path().join("x.pfm"))]).0, 3);
    let cfg = write_text(dir.path(), "g.cfg", "gamma = 2\n");
    let pfm = dir.path().join("r.pfm");
    write_depth(&ramp(4, 4, 5.0, 10.0), &pfm).unwrap();
    let (c, err) = code(&["encode", "--depth", s(&pfm), "--out", s(&dir.path().join("x.dpm")), "--config", s(&cfg)]);
    assert_eq!(c, 3);
    assert!(err.contains("gamma"));
}

#[test]
fn identical_maps_have_zero_losses() {
    let dir = tempfile::tempdir().unwrap();
    let pfm = dir.path().join("t.pfm");
    write_depth(&ramp(130, 16, 5.0, 70.0), &pfm).unwrap();
    let out = ok(&["loss", "--student-depth", s(&pfm), "--teacher-depth", s(&pfm)]);
    let t = parse_csv_report(&out).unwrap();
    assert!(t.meta.contains(&("alpha".into(), "0.1".into())));
    assert!(t.meta.contains(&("beta".into(), "10".into())));
    assert!(t.meta.contains(&("crop_top_rows".into(), "110".into())));
    for col in ["l_dpm", "l_depth", "total", "ssim", "mse", "si", "ssim_si", "ssim_mse"] {
        assert!(t.column(col).unwrap()[0].abs() < 1e-12, "{col}");
    }
    assert_eq!(t.column("pixel_count").unwrap()[0], 20.0 * 16.0);
}

#[test]
fn two_by_two_loss_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let student = DepthMap::dense(arr2(&[[10.0, 12.0], [30.0, 31.0]])).unwrap();
    let teacher = DepthMap::dense(arr2(&[[11.0, 12.5], [29.0, 33.0]])).unwrap();
    let (sp, tp) = (dir.path().join("s.pfm"), dir.path().join("t.pfm"));
    write_depth(&student, &sp).unwrap();
    write_depth(&teacher, &tp).unwrap();
    let cfg = write_text(dir.path(), "c.cfg", "crop_top_rows = 0\nssim.window = 3\nssim.window_sigma = 0.8\n");
    let report = parse_csv_report(&ok(&[
        "loss", "--student-depth", s(&sp), "--teacher-depth", s(&tp), "--config", s(&cfg),
    ]))
    .unwrap();

    let lc = LossConfig {
        ssim: SsimParams::with_window(3, 0.8, 80.0),
        ..LossConfig::default()
    };
    let p = BinPartition::uniform(257, 0.0, 80.0).unwrap();
    let mask = Array2::from_elem((2, 2), true);
    let want = combined_loss(&encode(&student, &p, &lc).unwrap(), &encode(&teacher, &p, &lc).unwrap(), &student, &teacher, &mask, &lc).unwrap();
    let base = baseline_losses(&student, &teacher, &mask, &lc.ssim).unwrap();
    let expect = Table::from_loss(&want, &base);
    assert_eq!(report.columns, expect.columns);
    for (a, b) in report.rows[0].iter().zip(&expect.rows[0]) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn eval_fixture_and_empty_region() {
    let dir = tempfile::tempdir().unwrap();
    let (pp, rp) = (dir.path().join("p.pfm"), dir.path().join("r.pfm"));
    write_depth(&DepthMap::dense(arr2(&[[10.0, 20.0]])).unwrap(), &pp).unwrap();
    write_depth(&DepthMap::dense(arr2(&[[8.0, 21.0]])).unwrap(), &rp).unwrap();
    let csv = dir.path().join("m.csv");
    let t = parse_csv_report(&ok(&["eval", "--pred", s(&pp), "--ref", s(&rp), "--out", s(&csv)])).unwrap();
    assert!((t.column("abs_rel").unwrap()[0] - 0.148_809_5).abs() < 1e-6);
    assert!((t.column("rmse").unwrap()[0] - 1.581_138_8).abs() < 1e-6);
    assert_eq!(t.column("delta1").unwrap()[0], 0.5);
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), ok(&["eval", "--pred", s(&pp), "--ref", s(&rp)]));

    let same = parse_csv_report(&ok(&["eval", "--pred", s(&rp), "--ref", s(&rp)])).unwrap();
    assert_eq!(same.column("abs_rel").unwrap()[0], 0.0);
    assert_eq!(same.column("delta3").unwrap()[0], 1.0);

    assert_eq!(code(&["eval", "--pred", s(&pp), "--ref", s(&rp), "--min-depth", "50", "--max-depth", "60"]).0, 4);
}

#[test]
fn distill_zero_steps_is_uniform_and_history_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let student = dir.path().join("s.pfm");
    ok(&["distill", "--scene", "ramp", "--size", "16x16", "--steps", "0", "--student-out", s(&student)]);
    assert!(read_depth(&student).unwrap().values().iter().all(|&d| (d - 40.0).abs() < 1e-9));

    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for h in [&a, &b] {
        ok(&["distill", "--scene", "steps", "--size", "20x18", "--steps", "30", "--seed", "4", "--history", s(h)]);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let t = parse_csv_report(&text).unwrap();
    assert_eq!(t.columns, ["step", "lr", "l_dpm", "l_depth", "total", "absrel"]);
    assert_eq!(t.column("step").unwrap(), [0.0, 30.0]);
}

#[test]
fn sweep_singleton_matches_distill_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.csv");
    let common = ["--scene", "disk", "--size", "16x16", "--steps", "15"];
    let mut args = vec!["distill"];
    args.extend(common);
    args.extend(["--history", s(&hist)]);
    ok(&args);
    let last = parse_csv_report(&std::fs::read_to_string(&hist).unwrap()).unwrap();

    let mut args = vec!["sweep", "--axis", "alpha", "--values", "0.1"];
    args.extend(common);
    let table = parse_csv_report(&ok(&args)).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.column("total").unwrap()[0], *last.column("total").unwrap().last().unwrap());
    assert_eq!(table.column("absrel").unwrap()[0], *last.column("absrel").unwrap().last().unwrap());

    let mut args = vec!["sweep", "--axis", "sigma", "--values", "0.5,0.5"];
    args.extend(common);
    assert_ne!(code(&args).0, 0);
}

#[test]
fn alpha_grid_is_accepted_verbatim() {
    let out = ok(&[
        "sweep", "--axis", "alpha", "--values", "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5", "--size", "16x16",
        "--steps", "2",
    ]);
    assert_eq!(parse_csv_report(&out).unwrap().rows.len(), 10);
}

#[test]
fn renormalize_mode_is_accepted_by_distill() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_text(dir.path(), "c.cfg", "norm_mode = Renormalize\nsteps = 3\n");
    let out = ok(&["distill", "--size", "16x16", "--config", s(&cfg)]);
    assert!(parse_csv_report(&out).unwrap().meta.contains(&("steps".into(), "3".into())));
}
