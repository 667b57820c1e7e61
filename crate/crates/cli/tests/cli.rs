use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn deskcsi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deskcsi")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), "duration 4\nkeystroke 1.0\nmouse 2.5 travel=0.03 duration=0.3\n").unwrap();
    for out in ["a", "b"] {
        let o = deskcsi(dir.path(), &["--seed", "11", "--out", out, "simulate", "--script", "s.txt"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["trace.csv", "trace.ann"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let o = deskcsi(dir.path(), &["--seed", "12", "--out", "c", "simulate", "--script", "s.txt"]);
    assert!(o.status.success());
    assert_ne!(fs::read(dir.path().join("a/trace.csv")).unwrap(), fs::read(dir.path().join("c/trace.csv")).unwrap());
}

#[test]
fn malformed_script_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), "duration 4\nkeystroke 1.0\nmouse 2.0 travel=0.03\n").unwrap();
    let o = deskcsi(dir.path(), &["simulate", "--script", "s.txt"]);
    assert_eq!(o.status.code(), Some(4));
    let msg = stderr(&o);
    assert!(msg.contains("s.txt:3") && msg.contains("duration"), "{msg}");
}

#[test]
fn seventeen_keystroke_burst_segments_into_seventeen() {
    let dir = tempfile::tempdir().unwrap();
    let o = deskcsi(dir.path(), &["simulate", "--burst", "17", "--gap", "0.6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = deskcsi(dir.path(), &["segment", "out/trace.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("out/segments.csv")).unwrap();
    assert_eq!(rows.lines().filter(|l| !l.starts_with('#')).count(), 17);
    assert!(dir.path().join("out/score.json").exists());
}

#[test]
fn config_errors_exit_with_input_class() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[filter]\ncutof_hz = 5.0\n").unwrap();
    let o = deskcsi(dir.path(), &["--config", "c.toml", "sweep-plate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cutof_hz"), "{}", stderr(&o));
}

#[test]
fn usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(deskcsi(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(deskcsi(dir.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(deskcsi(dir.path(), &["plotdata", "heatmap"]).status.code(), Some(2));
    assert_eq!(deskcsi(dir.path(), &["segment", "missing.csv"]).status.code(), Some(6));
}

#[test]
fn plot_tables_have_documented_headers() {
    let dir = tempfile::tempdir().unwrap();
    assert!(deskcsi(dir.path(), &["simulate", "--burst", "2"]).status.success());
    assert!(deskcsi(dir.path(), &["segment", "out/trace.csv"]).status.success());
    assert!(deskcsi(dir.path(), &["plotdata", "segmentation", "out/segmentation.json"]).status.success());
    assert!(deskcsi(dir.path(), &["plotdata", "filter"]).status.success());
    assert!(deskcsi(dir.path(), &["plotdata", "subcarriers", "out/trace.csv"]).status.success());
    for (file, header) in [
        ("nor.csv", "# t,nor1,nor2"),
        ("boundaries.csv", "# start_idx,end_idx,start_t,end_t,truncated"),
        ("filter_response.csv", "# f_hz,analog,digital"),
        ("subcarrier_variance.csv", "# subcarrier,variance"),
    ] {
        let text = fs::read_to_string(dir.path().join("out").join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
    }
}

#[test]
fn behavior_training_from_sequence_files() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = dir.path().join("seqs");
    fs::create_dir(&seqs).unwrap();
    fs::write(seqs.join("working1.txt"), "typing\ntyping\ntyping\nmouse\ntyping\ntyping\n").unwrap();
    fs::write(seqs.join("gaming1.txt"), "mouse\ntyping\nmouse\ntyping\nmouse\nmouse\n").unwrap();
    fs::write(seqs.join("surfing1.txt"), "mouse\nmouse\nmouse\ntyping\nmouse\nmouse\n").unwrap();
    let o = deskcsi(dir.path(), &["--config", "/dev/null", "train-behavior", "--sequences", "seqs"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = deskcsi(dir.path(), &["evaluate", "out/behavior_models.json", "--sequences", "seqs"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("surfing") && table.contains("AVG"), "{table}");

    fs::write(seqs.join("napping.txt"), "mouse\n").unwrap();
    let o = deskcsi(dir.path(), &["evaluate", "out/behavior_models.json", "--sequences", "seqs"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
