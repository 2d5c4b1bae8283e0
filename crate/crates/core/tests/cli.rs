//! End-to-end runs of the command-line tool and byte-level golden output.

use std::process::{Command, Output};

use mmdiag::battery::{battery_model, generate_battery, submodule_model};
use mmdiag::diagnosability::{analyze, DiagnosabilityMatrix, MacroTable, Renderer};
use mmdiag::model::{flatten, parser::parse, Approach};

fn mmdiag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmdiag")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn submodule_table_matches_golden_file() {
    let golden = include_str!("golden/table2.txt");
    let fm = submodule_model(Approach::Signal).unwrap();
    let mut mgr = fm.new_manager();
    let (m, _) = analyze(&mut mgr, &fm, 1).unwrap();
    let order = ["f_cell", "f_v_cell", "f_i_cell"].map(String::from);
    let m = m.reordered(&order).unwrap();
    let r = Renderer::new(&mut mgr, &MacroTable::battery()).unwrap();
    assert_eq!(r.table(&mut mgr, &m), golden);

    let out = mmdiag(&["diagnose", "--submodule", "--fault-order", "f_cell,f_v_cell,f_i_cell"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), golden);
}

#[test]
fn pack_table_matches_golden_file() {
    let out = mmdiag(&["diagnose", "--n", "2"]);
    assert_eq!(stdout(&out), include_str!("golden/table3_n2.txt"));
}

#[test]
fn diagnose_is_deterministic() {
    for format in ["table", "json", "csv"] {
        for approach in ["signal", "boolean"] {
            let args = ["diagnose", "--n", "2", "--approach", approach, "--format", format, "--jobs", "2"];
            let a = mmdiag(&args);
            let b = mmdiag(&args);
            assert_eq!(a.status.code(), Some(0));
            assert_eq!(a.stdout, b.stdout, "{format} {approach}");
        }
    }
}

#[test]
fn json_output_round_trips() {
    let fm = battery_model(2, Approach::Boolean).unwrap();
    let mut mgr = fm.new_manager();
    let (m, _) = analyze(&mut mgr, &fm, 1).unwrap();
    let text = serde_json::to_string(&m.to_json(&mgr)).unwrap();

    let mut fresh = fm.new_manager();
    let back = DiagnosabilityMatrix::from_json(&mut fresh, &serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.faults, m.faults);
    assert_eq!(serde_json::to_string(&back.to_json(&fresh)).unwrap(), text);

    let out = mmdiag(&["diagnose", "--n", "1", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rendered"]["c[1].f_cell"]["c[1].f_v_cell"], "¬bypass_1");
    assert_eq!(doc["approach"], "signal");
}

#[test]
fn generated_models_parse_with_expected_sizes() {
    let out = mmdiag(&["generate", "--n", "3", "--approach", "boolean"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text, generate_battery(3, Approach::Boolean));
    let fm = flatten(&parse(&text).unwrap(), &Default::default()).unwrap();
    assert_eq!(fm.boolean_variable_count(), 17);
    assert_eq!(fm.faults.len(), 11);
}

#[test]
fn empty_pack_has_only_the_voltage_sensor_detectable() {
    let out = mmdiag(&["diagnose", "--n", "0", "--format", "csv"]);
    let text = stdout(&out);
    assert!(text.contains("\"f_v_pack\",\"NF\",\"𝐓\""), "{text}");
    assert!(text.contains("\"f_i_pack\",\"NF\",\"𝐅\""), "{text}");
}

#[test]
fn verify_reports_zero_mismatches() {
    let out = mmdiag(&["verify", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "0 mismatches\n");
    let out = mmdiag(&["verify", "--seed", "11"]);
    assert_eq!(stdout(&out), "0 mismatches\n");
}

#[test]
fn verify_respects_the_mode_cap() {
    let out = mmdiag(&["verify", "--n", "3", "--mode-cap", "4"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_prints_csv() {
    let out = mmdiag(&["bench", "--n", "1,2"]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,approach,wall_seconds,bool_var_count,class_count,bdd_node_peak");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,signal,"));
    assert!(lines[4].starts_with("2,boolean,"));
}

#[test]
fn exit_codes() {
    assert_eq!(mmdiag(&["diagnose", "--frobnicate"]).status.code(), Some(3));
    assert_eq!(mmdiag(&["bench", "--n", "4..2"]).status.code(), Some(3));
    assert_eq!(mmdiag(&["diagnose", "--submodule", "--fault-order", "f_x"]).status.code(), Some(3));
    assert_eq!(mmdiag(&["diagnose", "/no/such/model.mel"]).status.code(), Some(1));

    let dir = std::env::temp_dir().join(format!("mmdiag-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let model = dir.join("pack.mel");
    std::fs::write(&model, generate_battery(1, Approach::Signal)).unwrap();
    let path = model.to_str().unwrap();
    assert_eq!(mmdiag(&["diagnose", path]).status.code(), Some(0));
    assert_eq!(mmdiag(&["diagnose", path, "--approach", "boolean"]).status.code(), Some(3));

    let broken = dir.join("broken.mel");
    std::fs::write(&broken, "x : real;\ne1 : x = ;\n").unwrap();
    let out = mmdiag(&["diagnose", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.mel"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sidecar_and_macro_files() {
    let dir = std::env::temp_dir().join(format!("mmdiag-sidecar-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let model = dir.join("pack.mel");
    // parameter left for the sidecar to supply
    let text = generate_battery(1, Approach::Signal).replace("parameter N = 1;", "");
    std::fs::write(&model, text).unwrap();
    let cfg = dir.join("pack.toml");
    std::fs::write(&cfg, "n = 2\n").unwrap();
    let macros = dir.join("names.toml");
    std::fs::write(&macros, "[macros]\n\"idle_{k}\" = \"!c[{k}].forward & !c[{k}].backward\"\n").unwrap();

    let out = mmdiag(&["diagnose", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = mmdiag(&[
        "diagnose",
        model.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--macros",
        macros.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("c[2].f_cell"));
    assert!(text.contains("idle_2") || text.contains("bypass_2"), "{text}");
    std::fs::remove_dir_all(&dir).unwrap();
}
