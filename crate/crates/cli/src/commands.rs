use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use voxedit_core::flowsim::{
    euler_sample, euler_sample_from_noise, flowedit_run, FlowEditConfig, FlowState, StepPhase,
};
use voxedit_core::metrics::{chamfer, region_consistency, voxel_centers};
use voxedit_core::pipeline::{
    load_manifest, mock_inputs, run_pipeline, verify_record, AcceptAll, AlwaysReject, BackendSuite,
    PipelineConfig, RecordStatus, RejectFirst,
};
use voxedit_core::regionmerge::{
    apply_flip, diff_xor, label_components, slat_merge, slat_merge_all_target, voxel_merge, Connectivity,
    FlipMask, MaskReport, SelectionPolicy,
};
use voxedit_core::voxgrid::nvx::{read_header, read_nvx, write_nvx, NvxPayload};
use voxedit_core::voxgrid::{
    extract_surface_mesh, parse_obj, voxelize_mesh, voxelize_mesh_auto, SparseStructure, StructuredLatent,
};
use voxedit_core::{Aabb64, AnalyticOracle64, TriMesh64};

use crate::{
    ChamferArgs, Command, ComponentsArgs, ConnectivityArg, ConsistencyArgs, DiffArgs, FilterArg, FlowEditArgs,
    InspectArgs, MergeArgs, OracleArg, PipelineCommand, PipelineRunArgs, PipelineVerifyArgs, PolicyArgs,
    SampleArgs, SlatMergeArgs, SurfaceArgs, VoxelizeArgs,
};

type CmdResult = Result<String, String>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Voxelize(a) => voxelize(a),
        Command::Surface(a) => surface(a),
        Command::Diff(a) => diff(a),
        Command::Components(a) => components(a),
        Command::Merge(a) => merge(a),
        Command::SlatMerge(a) => slat(a),
        Command::Flowedit(a) => flowedit(a),
        Command::Sample(a) => sample(a),
        Command::Chamfer(a) => chamfer_cmd(a),
        Command::Consistency(a) => consistency(a),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline_run(a),
        Command::Pipeline(PipelineCommand::Verify(a)) => pipeline_verify(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn to_json(value: &impl Serialize) -> CmdResult {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn at(path: &Path) -> impl Fn(String) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn read_text(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| at(path)(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| at(path)(e.to_string()))
}

fn read_payload(path: &Path) -> Result<NvxPayload, String> {
    // Io errors already carry the path.
    read_nvx(path).map_err(|e| match e {
        voxedit_core::voxgrid::nvx::NvxError::Io { .. } => e.to_string(),
        other => at(path)(other.to_string()),
    })
}

fn read_structure(path: &Path) -> Result<SparseStructure, String> {
    Ok(read_payload(path)?.structure())
}

fn read_latent(path: &Path) -> Result<StructuredLatent, String> {
    match read_payload(path)? {
        NvxPayload::Latent(z) => Ok(z),
        NvxPayload::Occupancy(_) => Err(at(path)("expected a latent NVX file, found occupancy".into())),
    }
}

fn write_payload(path: &Path, payload: NvxPayload) -> Result<(), String> {
    write_nvx(path, &payload).map_err(|e| at(path)(e.to_string()))
}

fn read_mask(path: &Path) -> Result<FlipMask, String> {
    let report: MaskReport = serde_json::from_str(&read_text(path)?).map_err(|e| at(path)(e.to_string()))?;
    FlipMask::from_report(&report).map_err(|e| at(path)(e.to_string()))
}

fn connectivity(c: ConnectivityArg) -> Connectivity {
    match c {
        ConnectivityArg::Six => Connectivity::Six,
        ConnectivityArg::Eighteen => Connectivity::Eighteen,
        ConnectivityArg::TwentySix => Connectivity::TwentySix,
    }
}

fn policy(p: &PolicyArgs) -> SelectionPolicy {
    match (p.tau, p.top_k) {
        (_, Some(k)) => SelectionPolicy::TopK(k),
        (Some(t), None) => SelectionPolicy::Threshold(t),
        (None, None) => SelectionPolicy::default(),
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn voxelize(a: VoxelizeArgs) -> CmdResult {
    let mesh: TriMesh64 = parse_obj(&read_text(&a.input)?).map_err(|e| at(&a.input)(e.to_string()))?;
    let structure = match &a.bounds {
        Some(b) => voxelize_mesh(&mesh, a.resolution, &Aabb64::new([b[0], b[1], b[2]], [b[3], b[4], b[5]])),
        None => voxelize_mesh_auto(&mesh, a.resolution),
    }
    .map_err(|e| e.to_string())?;
    let voxel_sum = structure.voxel_sum();
    write_payload(&a.out, structure.into())?;
    to_json(&json!({
        "resolution": a.resolution,
        "triangles": mesh.triangles().len(),
        "voxel_sum": voxel_sum,
        "out": a.out.display().to_string(),
    }))
}

fn surface(a: SurfaceArgs) -> CmdResult {
    let s = read_structure(&a.input)?;
    let mesh: TriMesh64 = extract_surface_mesh(&s);
    write_text(&a.out, &mesh.to_obj())?;
    to_json(&json!({
        "voxel_sum": s.voxel_sum(),
        "vertices": mesh.vertices().len(),
        "triangles": mesh.triangles().len(),
        "out": a.out.display().to_string(),
    }))
}

fn diff(a: DiffArgs) -> CmdResult {
    let d = diff_xor(&read_structure(&a.src)?, &read_structure(&a.tgt)?).map_err(|e| e.to_string())?;
    let size = d.len();
    let resolution = d.resolution();
    if let Some(out) = &a.out {
        write_payload(out, d.as_structure().clone().into())?;
    }
    to_json(&json!({ "resolution": resolution, "diff_size": size, "out": path_str(&a.out) }))
}

fn components(a: ComponentsArgs) -> CmdResult {
    let d = diff_xor(&read_structure(&a.src)?, &read_structure(&a.tgt)?).map_err(|e| e.to_string())?;
    let set = label_components(&d, connectivity(a.connectivity));
    let min_coords: Vec<[u16; 3]> = set.components().iter().map(|c| c.min_coord().to_array()).collect();
    to_json(&json!({
        "resolution": set.resolution(),
        "connectivity": set.connectivity(),
        "diff_size": d.len(),
        "count": set.len(),
        "sizes": set.sizes(),
        "min_coords": min_coords,
    }))
}

fn merge(a: MergeArgs) -> CmdResult {
    let src = read_structure(&a.src)?;
    let tgt = read_structure(&a.tgt)?;
    let (merged, mask) =
        voxel_merge(&src, &tgt, connectivity(a.connectivity), policy(&a.policy)).map_err(|e| e.to_string())?;
    let report = mask.report();
    let summary = json!({
        "resolution": report.resolution,
        "connectivity": report.connectivity,
        "policy": report.policy,
        "diff_size": report.diff_size,
        "mask_size": report.mask_size,
        "component_sizes": report.component_sizes,
        "selected_sizes": report.selected_sizes,
        "voxel_sum_src": src.voxel_sum(),
        "voxel_sum_tgt": tgt.voxel_sum(),
        "voxel_sum_merged": merged.voxel_sum(),
        "out": path_str(&a.out),
        "mask_out": path_str(&a.mask_out),
    });
    if let Some(out) = &a.out {
        write_payload(out, merged.into())?;
    }
    if let Some(mask_out) = &a.mask_out {
        write_text(mask_out, &to_json(&report)?)?;
    }
    to_json(&summary)
}

fn slat(a: SlatMergeArgs) -> CmdResult {
    let src = read_latent(&a.src)?;
    let tgt = read_latent(&a.tgt)?;
    let merged_given = a.merged.as_deref().map(read_structure).transpose()?;
    let (out, mask_size) = if a.mask_all {
        let merged = merged_given.unwrap_or_else(|| tgt.structure());
        (slat_merge_all_target(&tgt, &merged).map_err(|e| e.to_string())?, None)
    } else {
        let mask_path = a.mask.as_deref().expect("clap requires --mask without --mask-all");
        let mask = read_mask(mask_path)?;
        let merged = match merged_given {
            Some(m) => m,
            None => apply_flip(&src.structure(), &mask).map_err(|e| e.to_string())?,
        };
        (slat_merge(&src, &tgt, &mask, &merged).map_err(|e| e.to_string())?, Some(mask.len()))
    };
    let summary = json!({
        "resolution": out.resolution(),
        "channels": out.channels(),
        "voxel_sum": out.len(),
        "mask_size": mask_size,
        "mask_all": a.mask_all,
        "out": a.out.display().to_string(),
    });
    write_payload(&a.out, out.into())?;
    to_json(&summary)
}

fn build_oracle(kind: OracleArg, pairs: Vec<(&str, Vec<f64>)>, variance: f64) -> Result<AnalyticOracle64, String> {
    match kind {
        OracleArg::Delta => AnalyticOracle64::delta(pairs),
        OracleArg::Gaussian => {
            AnalyticOracle64::affine_gaussian(pairs.into_iter().map(|(n, m)| (n, m, variance)))
        }
    }
    .map_err(|e| e.to_string())
}

fn flow_config(a: &FlowEditArgs) -> Result<FlowEditConfig<f64>, String> {
    let mut c: FlowEditConfig<f64> = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| at(p)(e.to_string()))?,
        None => FlowEditConfig::default(),
    };
    c.steps = a.steps.unwrap_or(c.steps);
    c.n_max = a.n_max.unwrap_or(c.n_max);
    c.n_min = a.n_min.unwrap_or(c.n_min);
    c.n_avg = a.n_avg.unwrap_or(c.n_avg);
    c.cfg_source_scale = a.cfg_src.unwrap_or(c.cfg_source_scale);
    c.cfg_target_scale = a.cfg_tgt.unwrap_or(c.cfg_target_scale);
    c.lambda_src = a.lambda.unwrap_or(c.lambda_src);
    c.rng_seed = a.seed.unwrap_or(c.rng_seed);
    Ok(c)
}

#[derive(Serialize)]
struct FlowEditReport {
    output: Vec<f64>,
    displacement: Vec<f64>,
    config: FlowEditConfig<f64>,
    edit_steps: usize,
    sample_steps: usize,
    transcript: Option<String>,
}

fn flowedit(a: FlowEditArgs) -> CmdResult {
    let config = flow_config(&a)?;
    let oracle = build_oracle(
        a.oracle,
        vec![("source", a.src_anchor.clone()), ("target", a.tgt_anchor.clone())],
        a.variance,
    )?;
    let x0 = FlowState::new(a.x0.clone()).map_err(|e| e.to_string())?;
    let run = flowedit_run(&x0, "source", "target", &oracle, &config).map_err(|e| e.to_string())?;
    if let Some(path) = &a.transcript {
        write_text(path, &to_json(&run.transcript)?)?;
    }
    let edit_steps = run.transcript.iter().filter(|r| r.phase == StepPhase::Edit).count();
    let output = run.output.into_values();
    to_json(&FlowEditReport {
        displacement: output.iter().zip(&a.x0).map(|(o, x)| o - x).collect(),
        output,
        edit_steps,
        sample_steps: run.transcript.len() - edit_steps,
        config,
        transcript: path_str(&a.transcript),
    })
}

fn sample(a: SampleArgs) -> CmdResult {
    let oracle = build_oracle(a.oracle, vec![("target", a.anchor.clone())], a.variance)?;
    let config = FlowEditConfig { steps: a.steps, cfg_target_scale: a.cfg, rng_seed: a.seed, ..Default::default() };
    let mut outputs = Vec::new();
    match &a.start {
        Some(start) => {
            let start = FlowState::new(start.clone()).map_err(|e| e.to_string())?;
            let run = euler_sample(&oracle, "target", &config, &start).map_err(|e| e.to_string())?;
            outputs.push(run.output.into_values());
        }
        None => {
            for draw in 0..a.count {
                let run = euler_sample_from_noise(&oracle, "target", &config, draw).map_err(|e| e.to_string())?;
                outputs.push(run.output.into_values());
            }
        }
    }
    to_json(&json!({ "steps": a.steps, "seed": a.seed, "outputs": outputs }))
}

fn point_set(path: &Path) -> Result<Vec<[f64; 3]>, String> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
        let mesh: TriMesh64 = parse_obj(&read_text(path)?).map_err(|e| at(path)(e.to_string()))?;
        Ok(mesh.vertices().to_vec())
    } else {
        Ok(voxel_centers(&read_structure(path)?))
    }
}

fn chamfer_cmd(a: ChamferArgs) -> CmdResult {
    let pa = point_set(&a.a)?;
    let pb = point_set(&a.b)?;
    let cd = chamfer(&pa, &pb).map_err(|e| e.to_string())?;
    to_json(&json!({ "chamfer": cd, "points_a": pa.len(), "points_b": pb.len() }))
}

fn consistency(a: ConsistencyArgs) -> CmdResult {
    let report = region_consistency(
        &read_structure(&a.src)?,
        &read_structure(&a.tgt)?,
        &read_structure(&a.merged)?,
        &read_mask(&a.mask)?,
    )
    .map_err(|e| e.to_string())?;
    to_json(&report)
}

fn pipeline_run(a: PipelineRunArgs) -> CmdResult {
    let suite = match a.filter {
        FilterArg::AcceptAll => BackendSuite::mock(AcceptAll),
        FilterArg::RejectFirst => BackendSuite::mock(RejectFirst),
        FilterArg::AlwaysReject => BackendSuite::mock(AlwaysReject),
    };
    let config = PipelineConfig {
        connectivity: connectivity(a.connectivity),
        policy: policy(&a.policy),
        max_attempts: a.max_attempts,
        workers: a.workers,
    };
    let summary = run_pipeline(&mock_inputs(a.count, a.seed), &suite, &config, &a.manifest)
        .map_err(|e| e.to_string())?;
    to_json(&summary)
}

fn pipeline_verify(a: PipelineVerifyArgs) -> CmdResult {
    let loaded = load_manifest(&a.manifest).map_err(|e| e.to_string())?;
    let root = a.manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut verified = 0usize;
    let mut failures = Vec::new();
    for r in loaded.records.iter().filter(|r| r.status == RecordStatus::Ok) {
        match verify_record(root, r) {
            Ok(_) => verified += 1,
            Err(e) => failures.push(json!({ "id": r.id, "error": e.to_string() })),
        }
    }
    let report = json!({
        "records": loaded.records.len(),
        "verified": verified,
        "failures": failures,
        "malformed": loaded.malformed,
    });
    if failures.is_empty() && loaded.malformed.is_empty() {
        to_json(&report)
    } else {
        Err(format!("{}: verification failed: {}", a.manifest.display(), report))
    }
}

fn inspect(a: InspectArgs) -> CmdResult {
    let header = read_header(&a.path).map_err(|e| match e {
        voxedit_core::voxgrid::nvx::NvxError::Io { .. } => e.to_string(),
        other => at(&a.path)(other.to_string()),
    })?;
    to_json(&json!({ "path": a.path.display().to_string(), "header": header }))
}
