use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use voxedit_core::flowsim::{flowedit_run, FlowEditConfig, FlowState};
use voxedit_core::metrics::region_consistency;
use voxedit_core::regionmerge::{apply_flip, slat_merge, voxel_merge, Connectivity, SelectionPolicy};
use voxedit_core::voxgrid::nvx::{encode, read_nvx, write_nvx, NvxPayload};
use voxedit_core::voxgrid::{SparseStructure, StructuredLatent, VoxelCoord};
use voxedit_core::AnalyticOracle64;

fn voxedit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxedit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SUBCOMMANDS: &[&[&str]] = &[
    &[],
    &["voxelize"],
    &["surface"],
    &["diff"],
    &["components"],
    &["merge"],
    &["slat-merge"],
    &["flowedit"],
    &["sample"],
    &["chamfer"],
    &["consistency"],
    &["pipeline"],
    &["pipeline", "run"],
    &["pipeline", "verify"],
    &["inspect"],
];

fn golden_path(cmd: &[&str]) -> PathBuf {
    let name = if cmd.is_empty() { "voxedit".to_string() } else { cmd.join("_") };
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"))
}

/// Set `VOXEDIT_BLESS=1` to rewrite the golden files after an intended change.
#[test]
fn help_matches_golden_files() {
    let bless = std::env::var_os("VOXEDIT_BLESS").is_some();
    let tmp = tempfile::tempdir().unwrap();
    for cmd in SUBCOMMANDS {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = voxedit(&args, tmp.path());
        assert!(out.status.success(), "{args:?}");
        let text = stdout(&out);
        let path = golden_path(cmd);
        if bless {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(text, expected, "help for {cmd:?} drifted from {}", path.display());
    }
}

#[test]
fn help_documents_every_flag() {
    let merge = std::fs::read_to_string(golden_path(&["merge"])).unwrap();
    for flag in ["--src", "--tgt", "--tau", "--top-k", "--connectivity", "--out", "--mask-out"] {
        assert!(merge.contains(flag), "{flag}");
    }
    let flow = std::fs::read_to_string(golden_path(&["flowedit"])).unwrap();
    for flag in [
        "--steps", "--n-max", "--n-min", "--n-avg", "--cfg-src", "--cfg-tgt", "--lambda", "--seed", "--oracle",
        "--src-anchor", "--tgt-anchor", "--x0", "--config", "--transcript",
    ] {
        assert!(flow.contains(flag), "{flag}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(voxedit(&["frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(voxedit(&["merge", "--src", "a", "--tgt", "b", "--nope"], tmp.path()).status.code(), Some(2));
    assert_eq!(
        voxedit(&["merge", "--src", "a", "--tgt", "b", "--tau", "3", "--top-k", "1"], tmp.path()).status.code(),
        Some(2)
    );
    assert_eq!(voxedit(&["components", "--src", "a", "--tgt", "b", "--connectivity", "8"], tmp.path()).status.code(), Some(2));

    let missing = voxedit(&["inspect", "missing.nvx"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("missing.nvx"));
    assert!(stdout(&missing).is_empty());

    std::fs::write(tmp.path().join("junk.nvx"), b"not nvx").unwrap();
    let junk = voxedit(&["inspect", "junk.nvx"], tmp.path());
    assert_eq!(junk.status.code(), Some(1));
    assert!(stderr(&junk).contains("junk.nvx"));
}

#[test]
fn flowedit_example_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "flowedit", "--steps", "25", "--n-max", "15", "--n-avg", "5", "--oracle", "delta", "--src-anchor", "0",
        "--tgt-anchor", "1", "--x0", "0",
    ];
    let out = voxedit(&args, tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let cli_value = json["output"][0].as_f64().unwrap();
    assert!((cli_value - 1.0).abs() < 1e-6);

    let oracle = AnalyticOracle64::delta([("source", vec![0.0]), ("target", vec![1.0])]).unwrap();
    let config = FlowEditConfig::<f64>::default();
    let lib = flowedit_run(&FlowState::new(vec![0.0]).unwrap(), "source", "target", &oracle, &config).unwrap();
    assert_eq!(cli_value.to_bits(), lib.output.values()[0].to_bits());

    // Negative, multi-dimensional inputs and a transcript file.
    let out = voxedit(
        &[
            "flowedit", "--src-anchor", "-1,2", "--tgt-anchor", "3,-4", "--x0", "-0.5,0.5", "--seed", "9",
            "--transcript", "t.json",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let oracle = AnalyticOracle64::delta([("source", vec![-1.0, 2.0]), ("target", vec![3.0, -4.0])]).unwrap();
    let config = FlowEditConfig::<f64> { rng_seed: 9, ..Default::default() };
    let lib = flowedit_run(&FlowState::new(vec![-0.5, 0.5]).unwrap(), "source", "target", &oracle, &config).unwrap();
    let cli: Vec<f64> = serde_json::from_value(json["output"].clone()).unwrap();
    assert_eq!(cli, lib.output.values());
    let transcript = std::fs::read_to_string(tmp.path().join("t.json")).unwrap();
    assert_eq!(transcript, serde_json::to_string(&lib.transcript).unwrap());
}

fn structure(coords: &[[u16; 3]], r: u16) -> SparseStructure {
    SparseStructure::new(coords.iter().map(|&c| VoxelCoord::from(c)), r).unwrap()
}

fn block(lo: [u16; 3], hi: [u16; 3]) -> Vec<[u16; 3]> {
    let mut out = Vec::new();
    for x in lo[0]..hi[0] {
        for y in lo[1]..hi[1] {
            for z in lo[2]..hi[2] {
                out.push([x, y, z]);
            }
        }
    }
    out
}

#[test]
fn merge_and_slat_merge_match_library_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut src_coords = block([2, 2, 2], [10, 10, 10]);
    src_coords.push([15, 15, 15]);
    let mut tgt_coords = block([2, 2, 2], [10, 10, 10]);
    tgt_coords.extend(block([10, 2, 2], [13, 6, 6]));
    tgt_coords.push([0, 15, 0]);
    let src = structure(&src_coords, 16);
    let tgt = structure(&tgt_coords, 16);
    write_nvx(dir.join("src.nvx"), &src.clone().into()).unwrap();
    write_nvx(dir.join("tgt.nvx"), &tgt.clone().into()).unwrap();

    let out = voxedit(
        &["merge", "--src", "src.nvx", "--tgt", "tgt.nvx", "--tau", "10", "--out", "m.nvx", "--mask-out", "mask.json"],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let (merged, mask) = voxel_merge(&src, &tgt, Connectivity::TwentySix, SelectionPolicy::Threshold(10)).unwrap();
    assert_eq!(std::fs::read(dir.join("m.nvx")).unwrap(), encode(&merged.clone().into()));
    assert_eq!(
        std::fs::read_to_string(dir.join("mask.json")).unwrap(),
        serde_json::to_string(&mask.report()).unwrap()
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["selected_sizes"], serde_json::json!([48]));

    let out = voxedit(&["consistency", "--src", "src.nvx", "--tgt", "tgt.nvx", "--merged", "m.nvx", "--mask", "mask.json"], dir);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = region_consistency(&src, &tgt, &merged, &mask).unwrap();
    assert_eq!(stdout(&out).trim_end(), serde_json::to_string(&report).unwrap());

    let latent = |s: &SparseStructure, base: f32| {
        let entries = s.iter().map(|c| (c, vec![base + c.x as f32, c.y as f32 * 0.5, -(c.z as f32)]));
        StructuredLatent::new(entries, 3, 16).unwrap()
    };
    let z_src = latent(&src, 0.25);
    let z_tgt = latent(&tgt, 100.0);
    write_nvx(dir.join("zs.nvx"), &z_src.clone().into()).unwrap();
    write_nvx(dir.join("zt.nvx"), &z_tgt.clone().into()).unwrap();
    let out = voxedit(&["slat-merge", "--src", "zs.nvx", "--tgt", "zt.nvx", "--mask", "mask.json", "--out", "zm.nvx"], dir);
    assert!(out.status.success(), "{}", stderr(&out));
    let expected = slat_merge(&z_src, &z_tgt, &mask, &apply_flip(&src, &mask).unwrap()).unwrap();
    assert_eq!(std::fs::read(dir.join("zm.nvx")).unwrap(), encode(&expected.into()));

    let out = voxedit(&["slat-merge", "--src", "zs.nvx", "--tgt", "zt.nvx", "--mask-all", "--out", "za.nvx"], dir);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(read_nvx(dir.join("za.nvx")).unwrap(), NvxPayload::Latent(z_tgt));

    let out = voxedit(&["inspect", "m.nvx"], dir);
    let header: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(header["header"]["count"], merged.voxel_sum());
}

#[test]
fn voxelize_surface_and_chamfer_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cube = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
                f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\nf 4 8 7\nf 4 7 3\nf 1 5 8\nf 1 8 4\nf 2 3 7\nf 2 7 6\n";
    std::fs::write(dir.join("cube.obj"), cube).unwrap();
    let out = voxedit(&["voxelize", "--input", "cube.obj", "--resolution", "8", "--out", "c.nvx"], dir);
    assert!(out.status.success(), "{}", stderr(&out));
    let shell = read_nvx(dir.join("c.nvx")).unwrap().structure();
    assert_eq!(shell.voxel_sum(), 8 * 8 * 8 - 6 * 6 * 6);

    let out = voxedit(&["surface", "--input", "c.nvx", "--out", "s.obj"], dir);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = voxedit(&["voxelize", "--input", "s.obj", "--resolution", "8", "--bounds", "0,0,0,8,8,8", "--out", "c2.nvx"], dir);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = voxedit(&["chamfer", "--a", "c.nvx", "--b", "c.nvx"], dir);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["chamfer"], 0.0);
}

#[test]
fn pipeline_run_is_reproducible_and_verifies() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["pipeline", "run", "--manifest", "data/m.jsonl", "--seed", "5", "--count", "4", "--max-attempts", "2", "--filter", "reject-first"];
    for dir in [&a, &b] {
        let out = voxedit(&args, dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
        let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(summary["ok"], 4);
        assert_eq!(summary["attempts"], 8);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("data/m.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));

    let out = voxedit(&["pipeline", "verify", "--manifest", "data/m.jsonl"], a.path());
    assert!(out.status.success(), "{}", stderr(&out));

    // Tampering with an artifact is caught.
    let victim = a.path().join("data/artifacts/sample-00000/merged_structure.nvx");
    write_nvx(&victim, &structure(&[[0, 0, 0]], 32).into()).unwrap();
    let out = voxedit(&["pipeline", "verify", "--manifest", "data/m.jsonl"], a.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sample-00000"));

    let out = voxedit(&["pipeline", "run", "--manifest", "m.jsonl", "--max-attempts", "0"], a.path());
    assert_eq!(out.status.code(), Some(1));
}
