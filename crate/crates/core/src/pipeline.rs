//! End-to-end orchestration: distance field, point cloud, sign field, labels,
//! multi-label marching cubes, trimming, refinement and metrics.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extraction::{multi_label_mc, trim_outside, LabeledMesh};
use crate::fields::{make_fixture, sample_grid, GridSpec, PointSetField, ScalarField};
use crate::geom::Aabb;
use crate::io::{self, PointData};
use crate::labeling::{label_partitions, LabelField, LabelingParams, LabelingReport};
use crate::metrics::{topology_report, TopologyReport};
use crate::refine::{refine, RefineConfig};
use crate::sampling::{estimate_normals, project_to_minimum, sample_level_band, voxel_downsample, OrientedPointCloud};
use crate::signfield::{envelope_mask, local_two_signed_field, SignField, DEFAULT_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub resolution: usize,
    pub bbox: Aabb,
    pub r1: f64,
    pub r2: f64,
    pub sample_count: usize,
    pub downsample_voxel: f64,
    pub erosion_iters: usize,
    pub merge_ratio: f64,
    pub refine: RefineConfig,
    pub seed: u64,
    pub projection_steps: usize,
    pub normal_k: usize,
    pub max_sweeps: usize,
    /// Neighborhood radius of the side field; `None` derives it from r1 and
    /// the downsample voxel, see [`PipelineConfig::sign_radius`].
    pub sign_radius: Option<f64>,
    pub eps: f64,
    pub run_refine: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolution: 256,
            bbox: Aabb::cube(0.6),
            r1: 0.05,
            r2: 0.01,
            sample_count: 1_000_000,
            downsample_voxel: 0.005,
            erosion_iters: 2,
            merge_ratio: 3.0,
            refine: RefineConfig::default(),
            seed: 0,
            projection_steps: 10,
            normal_k: 30,
            max_sweeps: 10,
            sign_radius: None,
            eps: DEFAULT_EPS,
            run_refine: true,
        }
    }
}

impl PipelineConfig {
    /// Defaults at a smaller working resolution.
    pub fn at_resolution(resolution: usize) -> Self {
        Self {
            resolution,
            ..Self::default()
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::with_bbox(self.resolution, self.bbox)
    }

    /// Side-field neighborhood radius. Unless set explicitly this is
    /// `max(3 * downsample_voxel, r1 + downsample_voxel)`: the ball must reach
    /// the surface from every voxel of the r1 envelope, otherwise the envelope
    /// rim has no sign and erosion eats whole partitions.
    pub fn sign_radius(&self) -> f64 {
        self.sign_radius
            .unwrap_or((3.0 * self.downsample_voxel).max(self.r1 + self.downsample_voxel))
    }

    pub fn labeling_params(&self) -> LabelingParams {
        LabelingParams {
            erosion_iters: self.erosion_iters,
            merge_ratio: self.merge_ratio,
            max_sweeps: self.max_sweeps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.resolution < 2 {
            return bad(format!("resolution must be at least 2, got {}", self.resolution));
        }
        self.grid_spec()?;
        if !(self.r2 > 0.0 && self.r2 < self.r1 && self.r1.is_finite()) {
            return bad(format!("need 0 < r2 < r1, got r1 = {}, r2 = {}", self.r1, self.r2));
        }
        if self.sample_count == 0 {
            return bad("sample count must be positive".into());
        }
        if !(self.downsample_voxel > 0.0 && self.downsample_voxel.is_finite()) {
            return bad(format!("downsample voxel must be positive, got {}", self.downsample_voxel));
        }
        if !(self.merge_ratio > 0.0) {
            return bad(format!("merge ratio must be positive, got {}", self.merge_ratio));
        }
        if self.normal_k < 3 {
            return bad(format!("normal neighborhood needs at least 3 points, got {}", self.normal_k));
        }
        if let Some(r) = self.sign_radius {
            if !(r > 0.0) {
                return bad(format!("sign radius must be positive, got {r}"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        self.refine.validate()
    }
}

/// Where the distance field comes from.
#[derive(Debug)]
pub enum Source {
    Field(ScalarField),
    /// A point cloud; its distance field is the nearest-point distance. Normals
    /// are estimated when the file carries none.
    Cloud(PointData),
}

impl Source {
    /// `fixture:NAME`, a `.udfg` grid, or a `.xyz`/`.xyzn`/`.ply` cloud.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("fixture:") {
            return Ok(Source::Field(make_fixture(name, None)?.into()));
        }
        let path = Path::new(spec);
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "udfg" => Ok(Source::Field(io::load_udfg(path)?.into())),
            "xyz" | "xyzn" | "ply" => Ok(Source::Cloud(io::load_points(path)?)),
            _ => Err(Error::InvalidConfig(format!("cannot tell the input kind of `{spec}`"))),
        }
    }

    pub fn fixture(name: &str) -> Result<Self> {
        Ok(Source::Field(make_fixture(name, None)?.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Fields,
    Sampling,
    SignField,
    Labeling,
    Extraction,
    Trim,
    Refine,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Fields => "fields",
            Stage::Sampling => "sampling",
            Stage::SignField => "signfield",
            Stage::Labeling => "labeling",
            Stage::Extraction => "extraction",
            Stage::Trim => "trim",
            Stage::Refine => "refine",
            Stage::Metrics => "metrics",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Config,
    Stage,
    /// Nothing left to mesh, e.g. erosion removed every region.
    Empty,
}

impl FailureKind {
    /// Process exit code for this failure.
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Stage => 3,
            FailureKind::Empty => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    #[source]
    pub source: Error,
    /// Partition count, when labeling finished before the failure.
    pub partitions: Option<usize>,
}

impl PipelineError {
    fn new(stage: Stage, source: Error) -> Self {
        let kind = match &source {
            Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::UnknownFixture(_) => FailureKind::Config,
            _ => FailureKind::Stage,
        };
        Self {
            stage,
            kind,
            source,
            partitions: None,
        }
    }

    fn empty(stage: Stage, what: &'static str) -> Self {
        Self {
            stage,
            kind: FailureKind::Empty,
            source: Error::EmptyInput(what),
            partitions: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

/// Conditions worth surfacing that do not stop the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "flag")]
pub enum Flag {
    /// Partitions whose every voxel was eroded; their facets cannot come back.
    PartitionLostToErosion { count: usize },
    /// Voxels in the r1 envelope with no cloud point in reach.
    EmptyNeighborhoods { count: usize },
    /// Free voxels with no path to any seed; left as background.
    UnreachableVoxels { count: usize },
    /// Refinement iterations whose step was rejected after all halvings.
    RefineStepsRejected { count: usize },
    /// Vertex updates skipped because the distance gradient was not finite.
    FrozenVertices { count: usize },
    /// Downsample voxel is finer than the grid voxel.
    DownsampleBelowVoxel { downsample: f64, voxel: f64 },
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::PartitionLostToErosion { count } => write!(f, "partition lost to erosion ({count})"),
            Flag::EmptyNeighborhoods { count } => write!(f, "{count} envelope voxels without nearby points"),
            Flag::UnreachableVoxels { count } => write!(f, "{count} voxels unreachable from any seed"),
            Flag::RefineStepsRejected { count } => write!(f, "{count} refinement steps rejected"),
            Flag::FrozenVertices { count } => write!(f, "{count} vertex updates frozen on non-finite gradients"),
            Flag::DownsampleBelowVoxel { downsample, voxel } => {
                write!(f, "downsample voxel {downsample} is below the grid voxel {voxel}")
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineSummary {
    pub loss_history: Vec<f64>,
    pub mean_udf_before: f64,
    pub mean_udf_after: f64,
    pub rejected_steps: usize,
    pub final_step: f64,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub mesh: LabeledMesh,
    pub topology: TopologyReport,
    pub timings: Vec<(Stage, Duration)>,
    pub flags: Vec<Flag>,
    pub cloud_size: usize,
    pub labeling: LabelingReport,
    /// Mesh straight out of marching cubes, before trimming.
    pub raw_faces: usize,
    pub trimmed_faces: usize,
    pub refine: Option<RefineSummary>,
    pub sign_field: SignField,
    pub label_field: LabelField,
}

impl PipelineOutput {
    pub fn has_flag(&self, pred: impl Fn(&Flag) -> bool) -> bool {
        self.flags.iter().any(pred)
    }

    pub fn total_time(&self) -> Duration {
        self.timings.iter().map(|(_, d)| *d).sum()
    }
}

fn mean_udf(mesh: &LabeledMesh, field: &ScalarField) -> f64 {
    if mesh.vertices.is_empty() {
        return 0.0;
    }
    mesh.vertices.par_iter().map(|p| field.eval(p)).sum::<f64>() / mesh.vertices.len() as f64
}

struct Timer {
    timings: Vec<(Stage, Duration)>,
    start: Instant,
}

impl Timer {
    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.timings.push((stage, now - self.start));
        self.start = now;
    }
}

/// Oriented cloud and the distance field the later stages query.
fn prepare(source: Source, cfg: &PipelineConfig, spec: &GridSpec) -> std::result::Result<(ScalarField, OrientedPointCloud), PipelineError> {
    let st = |e| PipelineError::new(Stage::Sampling, e);
    match source {
        Source::Field(field) => {
            let band = sample_level_band(&field, cfg.r1, cfg.sample_count, cfg.seed).map_err(st)?;
            let h = 0.5 * spec.voxel_size();
            let projected: Vec<_> = band
                .par_iter()
                .map(|p| project_to_minimum(&field, p, cfg.projection_steps, h).point)
                .collect();
            let down = voxel_downsample(&projected, cfg.downsample_voxel).map_err(st)?;
            let cloud = estimate_normals(&down, cfg.normal_k).map_err(st)?;
            Ok((field, cloud))
        }
        Source::Cloud(data) => {
            if data.points.is_empty() {
                return Err(PipelineError::empty(Stage::Fields, "point cloud"));
            }
            let field = ScalarField::PointSet(
                PointSetField::new(data.points.clone(), cfg.bbox).map_err(|e| PipelineError::new(Stage::Fields, e))?,
            );
            let cloud = match data.oriented() {
                Some(c) => c.map_err(st)?,
                None => {
                    let down = voxel_downsample(&data.points, cfg.downsample_voxel).map_err(st)?;
                    estimate_normals(&down, cfg.normal_k).map_err(st)?
                }
            };
            Ok((field, cloud))
        }
    }
}

/// Run every stage in order. Deterministic for a given source and config.
pub fn run_pipeline(source: Source, cfg: &PipelineConfig) -> std::result::Result<PipelineOutput, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
    let spec = cfg.grid_spec().map_err(|e| PipelineError::new(Stage::Config, e))?;
    let mut timer = Timer {
        timings: Vec::new(),
        start: Instant::now(),
    };
    let mut flags = Vec::new();
    if cfg.downsample_voxel < spec.voxel_size() {
        flags.push(Flag::DownsampleBelowVoxel {
            downsample: cfg.downsample_voxel,
            voxel: spec.voxel_size(),
        });
    }

    let (field, cloud) = prepare(source, cfg, &spec)?;
    timer.lap(Stage::Sampling);

    let sf = (|| {
        let omega1 = envelope_mask(&field, &spec, cfg.r1)?;
        let omega2 = envelope_mask(&field, &spec, cfg.r2)?;
        local_two_signed_field(&cloud, &spec, &omega1, cfg.sign_radius(), cfg.eps)?.with_omega2(omega2)
    })()
    .map_err(|e| PipelineError::new(Stage::SignField, e))?;
    if sf.omega1_count() == 0 {
        return Err(PipelineError::empty(Stage::SignField, "r1 envelope"));
    }
    if sf.empty_count() > 0 {
        flags.push(Flag::EmptyNeighborhoods { count: sf.empty_count() });
    }
    timer.lap(Stage::SignField);

    let (lf, labeling) = match label_partitions(&sf, &cfg.labeling_params()) {
        Ok(r) => r,
        Err(Error::Degenerate(_)) => return Err(PipelineError::empty(Stage::Labeling, "no region survived erosion")),
        Err(e) => return Err(PipelineError::new(Stage::Labeling, e)),
    };
    if labeling.lost_partitions > 0 {
        flags.push(Flag::PartitionLostToErosion {
            count: labeling.lost_partitions,
        });
    }
    if labeling.unreachable_free_voxels > 0 {
        flags.push(Flag::UnreachableVoxels {
            count: labeling.unreachable_free_voxels,
        });
    }
    timer.lap(Stage::Labeling);

    let raw = multi_label_mc(&lf, &sf).map_err(|e| PipelineError::new(Stage::Extraction, e))?;
    if raw.is_empty() {
        return Err(PipelineError {
            partitions: Some(labeling.final_partitions),
            ..PipelineError::empty(Stage::Extraction, "fewer than two partitions")
        });
    }
    timer.lap(Stage::Extraction);

    let trimmed = trim_outside(&raw, &field, cfg.r2);
    if trimmed.mesh.is_empty() {
        return Err(PipelineError {
            partitions: Some(labeling.final_partitions),
            ..PipelineError::empty(Stage::Trim, "every face lies outside r2")
        });
    }
    let trimmed_faces = trimmed.mesh.face_count();
    timer.lap(Stage::Trim);

    let (mesh, refine_summary) = if cfg.run_refine {
        let before = mean_udf(&trimmed.mesh, &field);
        let out = refine(&trimmed.mesh, &field, &cfg.refine, spec.voxel_size())
            .map_err(|e| PipelineError::new(Stage::Refine, e))?;
        if out.rejected_steps > 0 {
            flags.push(Flag::RefineStepsRejected {
                count: out.rejected_steps,
            });
        }
        if out.frozen_vertex_steps > 0 {
            flags.push(Flag::FrozenVertices {
                count: out.frozen_vertex_steps,
            });
        }
        let summary = RefineSummary {
            mean_udf_before: before,
            mean_udf_after: mean_udf(&out.mesh, &field),
            loss_history: out.loss_history,
            rejected_steps: out.rejected_steps,
            final_step: out.final_step,
        };
        (out.mesh, Some(summary))
    } else {
        (trimmed.mesh, None)
    };
    timer.lap(Stage::Refine);

    let topology = topology_report(&mesh);
    timer.lap(Stage::Metrics);
    for f in &flags {
        log::warn!("{f}");
    }

    Ok(PipelineOutput {
        mesh,
        topology,
        timings: timer.timings,
        flags,
        cloud_size: cloud.len(),
        labeling,
        raw_faces: raw.face_count(),
        trimmed_faces,
        refine: refine_summary,
        sign_field: sf,
        label_field: lf,
    })
}

/// Sample the named fixture on a cubic grid over the default box and write it
/// as UDFG.
pub fn gen_fixture(name: &str, resolution: usize, out: impl AsRef<Path>) -> Result<()> {
    let field = ScalarField::from(make_fixture(name, None)?);
    let grid = sample_grid(&field, &GridSpec::cubic(resolution)?)?;
    io::save_udfg(out, &grid)
}
