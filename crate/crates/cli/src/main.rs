//! `nmext`: extract labeled non-manifold meshes from unsigned distance fields.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nmext_core::fields::make_fixture;
use nmext_core::io;
use nmext_core::metrics::{area_weighted_sample, chamfer_l2, topology_report};
use nmext_core::pipeline::{gen_fixture, run_pipeline, FailureKind, PipelineConfig, Source};
use nmext_core::refine::RefineConfig;
use nmext_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "nmext", version, about)]
struct Cli {
    /// Cap on worker threads for every stage.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a labeled mesh (.obj or .ply).
    Extract(ExtractArgs),
    /// Compare a mesh against a reference mesh or fixture.
    Eval(EvalArgs),
    /// Write a fixture's sampled distance grid as UDFG.
    GenFixture(GenArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// `fixture:NAME`, a .udfg grid, or a .xyz/.xyzn/.ply point cloud.
    #[arg(long)]
    input: String,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dump_labels: Option<PathBuf>,
    #[arg(long)]
    dump_signfield: Option<PathBuf>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long, default_value_t = 0.05)]
    r1: f64,
    #[arg(long, default_value_t = 0.01)]
    r2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.005)]
    downsample_voxel: f64,
    #[arg(long, default_value_t = 1000.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 200)]
    refine_iters: usize,
    #[arg(long, default_value_t = 5e-4)]
    refine_step: f64,
    /// Write a JSON run summary (partitions, topology, flags, timings).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Reference mesh file or `fixture:NAME`.
    #[arg(long = "ref")]
    reference: String,
    #[arg(long)]
    report: PathBuf,
    /// Append a CSV row (mesh, reference, chamfer, counts) to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    name: String,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn config(msg: impl ToString) -> Self {
        Self {
            code: FailureKind::Config.exit_code() as u8,
            msg: msg.to_string(),
        }
    }

    fn from_core(e: Error) -> Self {
        let kind = match e {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::UnknownFixture(_) => FailureKind::Config,
            Error::EmptyInput(_) => FailureKind::Empty,
            _ => FailureKind::Stage,
        };
        Self {
            code: kind.exit_code() as u8,
            msg: e.to_string(),
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::from_core(Error::Io(e.into())))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::from_core(e.into()))
}

fn save_mesh(path: &Path, mesh: &nmext_core::extraction::LabeledMesh) -> nmext_core::Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => io::save_ply(path, mesh),
        _ => io::save_obj(path, mesh),
    }
}

fn extract(a: ExtractArgs) -> Result<(), Failure> {
    let cfg = PipelineConfig {
        resolution: a.resolution,
        r1: a.r1,
        r2: a.r2,
        seed: a.seed,
        sample_count: a.samples,
        downsample_voxel: a.downsample_voxel,
        run_refine: !a.no_refine,
        refine: RefineConfig {
            lambda1: a.lambda1,
            iterations: a.refine_iters,
            step: a.refine_step,
            ..RefineConfig::default()
        },
        ..PipelineConfig::default()
    };
    cfg.validate().map_err(Failure::config)?;
    let source = Source::parse(&a.input).map_err(Failure::from_core)?;
    let out = run_pipeline(source, &cfg).map_err(|e| Failure {
        code: e.exit_code() as u8,
        msg: e.to_string(),
    })?;
    save_mesh(&a.output, &out.mesh).map_err(Failure::from_core)?;
    if let Some(p) = &a.dump_labels {
        io::save_lblf(p, &out.label_field).map_err(Failure::from_core)?;
    }
    if let Some(p) = &a.dump_signfield {
        io::save_sgnf(p, &out.sign_field).map_err(Failure::from_core)?;
    }
    for f in &out.flags {
        eprintln!("warning: {f}");
    }
    eprintln!(
        "{} partitions, {} faces, {} non-manifold edges, {} boundary edges, {:.1}s",
        out.labeling.final_partitions,
        out.topology.faces,
        out.topology.nonmanifold_edges,
        out.topology.boundary_edges,
        out.total_time().as_secs_f64()
    );
    if let Some(p) = &a.summary {
        let timings: serde_json::Map<String, serde_json::Value> = out
            .timings
            .iter()
            .map(|(s, d)| (s.to_string(), json!(d.as_secs_f64() * 1e3)))
            .collect();
        let summary = json!({
            "partitions": out.labeling.final_partitions,
            "labeling": out.labeling,
            "topology": out.topology,
            "flags": out.flags,
            "refine": out.refine.as_ref().map(|r| json!({
                "loss_first": r.loss_history.first(),
                "loss_last": r.loss_history.last(),
                "mean_udf_before": r.mean_udf_before,
                "mean_udf_after": r.mean_udf_after,
                "rejected_steps": r.rejected_steps,
            })),
            "timings_ms": timings,
        });
        write_json(p, &summary)?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let mesh = io::load_mesh(&a.mesh).map_err(Failure::from_core)?;
    let ours = area_weighted_sample(&mesh, a.samples, a.seed).map_err(Failure::from_core)?;
    let theirs = match a.reference.strip_prefix("fixture:") {
        Some(name) => make_fixture(name, None)
            .and_then(|f| f.sample_surface(a.samples, a.seed.wrapping_add(1)))
            .map_err(Failure::from_core)?,
        None => io::load_mesh(&a.reference)
            .and_then(|m| area_weighted_sample(&m, a.samples, a.seed.wrapping_add(1)))
            .map_err(Failure::from_core)?,
    };
    let chamfer = chamfer_l2(&ours, &theirs).map_err(Failure::from_core)?;
    let topo = topology_report(&mesh);
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    write_json(
        &a.report,
        &json!({ "chamfer": chamfer, "topology_report": topo, "runtime_ms": runtime_ms }),
    )?;
    if let Some(p) = &a.csv {
        use std::io::Write;
        let fresh = !p.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(p)
            .map_err(|e| Failure::from_core(e.into()))?;
        let mut row = String::new();
        if fresh {
            row.push_str("mesh,reference,chamfer,faces,boundary_edges,nonmanifold_edges,components,euler,labels,runtime_ms\n");
        }
        row.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.1}\n",
            a.mesh.display(),
            a.reference,
            chamfer,
            topo.faces,
            topo.boundary_edges,
            topo.nonmanifold_edges,
            topo.components,
            topo.euler_characteristic,
            topo.label_count,
            runtime_ms
        ));
        f.write_all(row.as_bytes()).map_err(|e| Failure::from_core(e.into()))?;
    }
    println!("chamfer {chamfer:.6}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Eval(a) => eval(a),
        Command::GenFixture(a) => gen_fixture(&a.name, a.resolution, &a.out).map_err(Failure::from_core),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
