use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilesync-sim")).args(args).output().unwrap()
}

fn sim_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilesync-sim")).args(args).env("TILESYNC_SIM_THREADS", threads).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value<'a>(block: &'a str, key: &str) -> &'a str {
    block
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("missing {key} in\n{block}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mlp_1024_in_both_modes() {
    let o = sim(&["run", "--preset", "mlp:1024", "--mode", "both"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 2);
    assert_eq!(value(blocks[0], "mode"), "stream");
    assert_eq!(value(blocks[0], "waves_ceil"), "5");
    assert_eq!(value(blocks[1], "mode"), "fine");
    assert_eq!(value(blocks[1], "waves_frac"), "3.60");
}

#[test]
fn fig2_rowsync_takes_three_waves() {
    let o = sim(&["run", "--preset", "fig2", "--mode", "fine", "--policy", "rowsync"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(value(&text, "waves_ceil"), "3");
    assert_eq!(value(&text, "wave_generations"), "3");
    assert_eq!(value(&text, "deadlock"), "false");
}

#[test]
fn expected_deadlock_exits_zero() {
    let args = ["run", "--preset", "fig2", "--mode", "fine", "--no-wait-kernel", "--adversarial-order"];
    let o = sim(&[&args[..], &["--expect-deadlock"]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "deadlock"), "true");
    assert_eq!(sim(&args).status.code(), Some(2));
    let safe = sim(&["run", "--preset", "fig2", "--mode", "fine", "--adversarial-order", "--expect-deadlock"]);
    assert_eq!(safe.status.code(), Some(3));
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(sim(&["run", "--preset", "mlp:999"]).status.code(), Some(1));
    assert_eq!(sim(&["run", "--preset", "attn:toy", "--policy", "tile"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "schema_version = 1\npreset = \"fig2\"\nbogus = 1\n").unwrap();
    let o = sim(&["run", "--config", path_str(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let missing = dir.path().join("no/such/dir/out.csv");
    assert_eq!(sim(&["run", "--preset", "fig2", "--csv", path_str(&missing)]).status.code(), Some(1));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        format!(
            "schema_version = 1\npreset = \"mlp:512\"\nmodes = [\"stream\", \"fine\"]\ncsv = {:?}\n",
            path_str(&csv)
        ),
    )
    .unwrap();
    let o = sim(&["run", "--config", path_str(&cfg), "--mode", "fine"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mlp:512,fine,row,combined,,,,,2.40,3,80.00,"), "{}", lines[3]);
}

#[test]
fn traces_round_trip_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = sim(&["run", "--preset", "attn:toy", "--mode", "both", "--trace", path_str(&trace)]);
    assert_eq!(o.status.code(), Some(0));
    for mode in ["stream", "fine"] {
        let p = dir.path().join(format!("t.{mode}.jsonl"));
        let v = sim(&["validate", path_str(&p)]);
        assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
        assert_eq!(value(&stdout(&v), "violations"), "0");
    }
}

#[test]
fn validate_flags_missing_posts_and_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let o = sim(&["run", "--preset", "fig2", "--mode", "fine", "--policy", "tile", "--trace", path_str(&trace)]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut dropped = false;
    let tampered: String = text
        .lines()
        .filter(|l| {
            if !dropped && l.contains("\"kind\":\"post\"") {
                dropped = true;
                return false;
            }
            true
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, tampered).unwrap();
    let v = sim(&["validate", path_str(&bad)]);
    assert_eq!(v.status.code(), Some(4));
    assert_ne!(value(&stdout(&v), "violations"), "0");

    std::fs::write(&bad, "not json\n").unwrap();
    assert_eq!(sim(&["validate", path_str(&bad)]).status.code(), Some(1));
}

#[test]
fn compare_suites() {
    let o = sim(&["compare", "--suite", "table5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 7);
    let stream: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().nth(4).unwrap()).collect();
    assert_eq!(stream, ["2", "2", "3", "4", "5", "8"]);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t7.csv");
    let o = sim(&["compare", "--suite", "table7", "--csv", path_str(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 10);
    assert!(rows.lines().any(|l| l.starts_with("conv128:32,row,392x1x1->392x1x1,2.45+2.45,6,4.90,5,")));

    let o = sim(&["compare", "--preset", "fig2"]);
    assert!(stdout(&o).contains("4/3 (1.33)"));
}

#[test]
fn sweep_policies_over_mlp_presets() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = sim(&["sweep", "--suite", "table5", "--policies", "tile,row", "--csv", path_str(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with(
        "preset,mode,policy,stage,grid_x,grid_y,grid_z,occupancy,waves_frac,waves_ceil,utilization_pct,\
         makespan,total_wait,deadlock,"
    ));
}

/// Makespans of a sweep with `--reorder off,on`, paired per scenario.
fn reorder_pairs(args: &[&str]) -> Vec<(u64, u64)> {
    let o = sim(&[&["sweep", "--reorder", "off,on"][..], args].concat());
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (makespan, reorder) = (col("makespan"), col("reorder_loads"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    rows.chunks(2)
        .map(|pair| {
            assert_eq!((&pair[0][reorder], &pair[1][reorder]), ("false", "true"));
            (pair[0][makespan].parse().unwrap(), pair[1][makespan].parse().unwrap())
        })
        .collect()
}

#[test]
fn sweep_reorder_never_slows_down() {
    let random = reorder_pairs(&["--suite", "random", "--count", "200", "--seed", "9"]);
    assert_eq!(random.len(), 200);
    assert!(random.iter().all(|(off, on)| on <= off));
    let conv = reorder_pairs(&["--presets", "conv128:1,attn:toy"]);
    assert!(conv.iter().all(|(off, on)| on <= off));
    assert!(conv[0].1 < conv[0].0, "{conv:?}");
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let args = ["sweep", "--suite", "random", "--count", "60", "--seed", "3", "--modes", "stream,fine"];
    let one = sim_env(&args, "1");
    let four = sim_env(&args, "4");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, sim(&args).stdout);
    assert_eq!(sim_env(&args, "zero").status.code(), Some(1));
}

#[test]
fn empty_sweep_axis_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("none.csv");
    let o = sim(&["sweep", "--suite", "table5", "--policies", "", "--csv", path_str(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!csv.exists());
    let o = sim(&["sweep", "--presets", "fig2", "--policies", "strided", "--csv", path_str(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!csv.exists());
}

#[test]
fn random_preset_is_seeded() {
    let a = sim(&["run", "--preset", "random", "--seed", "11", "--mode", "fine"]);
    let b = sim(&["run", "--preset", "random", "--seed", "11", "--mode", "fine"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(value(&stdout(&a), "preset"), "random-11");
}

#[test]
fn list_presets_names_defaults_first() {
    let text = stdout(&sim(&["list-presets"]));
    assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["mlp:1024", "row,tile"]));
    assert!(text.lines().any(|l| l.starts_with("attn:toy")));
}
