//! Experiments and run orchestration: the monopole accuracy test, FFAT
//! maps, scene files and on-disk outputs.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::cqm::{CqmConfig, CqmTransform, PairWeights};
use crate::error::{Error, Result};
use crate::farfield::{cfl_timestep, slice, write_pgm, write_slice_csv, Absorber};
use crate::hybrid::{write_listener_csv, write_listener_wav, HybridConfig, SolverState};
use crate::lattice::{GridSpec, Vec3};
use crate::mesh::{remesh_to_grid, BoundaryElement, TriangleMesh};
use crate::oracle::{point_weights_all, MarchMode, RecordedRun, TdbemOracle};
use crate::sources::{load_modal_neumann, MonopoleSource, NeumannSource};

/// Error energy floor: identical signals report this many dB.
pub const SNR_CAP_DB: f64 = 300.0;

/// `10 log10(sum truth^2 / sum (pred - truth)^2)`, capped at
/// [`SNR_CAP_DB`].
pub fn snr(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let signal: f64 = truth.iter().map(|t| t * t).sum();
    if signal == 0.0 {
        return Err(Error::ZeroReference);
    }
    let noise: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SNR_CAP_DB))
}

/// Points on the six faces of the mesh bounding box scaled by `factor`
/// about its centre, `res x res` nodes per face in the order
/// `-x, +x, -y, +y, -z, +z`. Edge and corner nodes appear on every face
/// that contains them. With `domain` given, every point must admit
/// interior trilinear interpolation.
pub fn sample_bbox(lo: Vec3, hi: Vec3, factor: f64, res: usize, domain: Option<&GridSpec>) -> Result<Vec<Vec3>> {
    if !(factor > 1.0) {
        return Err(Error::Config(format!("bounding box factor must exceed 1, got {factor}")));
    }
    if res == 0 {
        return Err(Error::Config("face resolution must be positive".into()));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo) * factor;
    let node = |i: usize| if res == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (res - 1) as f64 };
    let mut out = Vec::with_capacity(6 * res * res);
    for axis in 0..3 {
        let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
        let (a1, a2) = (a1.min(a2), a1.max(a2));
        for side in [-1.0, 1.0] {
            for i in 0..res {
                for j in 0..res {
                    let mut p = mid;
                    p[axis] += side * half[axis];
                    p[a1] += node(i) * half[a1];
                    p[a2] += node(j) * half[a2];
                    out.push(p);
                }
            }
        }
    }
    if let Some(spec) = domain {
        for p in &out {
            spec.trilinear(p).map_err(|_| {
                Error::Config(format!(
                    "bounding box scaled by {factor} reaches the absorbing layer at {:?}",
                    [p.x, p.y, p.z]
                ))
            })?;
        }
    }
    Ok(out)
}

/// Solver used for an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Hybrid,
    /// Dense reference marching.
    Oracle,
}

/// Steps for a drive of frequency `f`: `max(10 L, 20 periods)`, and the
/// length of the final three-period window.
pub fn steady_state_steps(tau: f64, history: usize, frequency: f64) -> (usize, usize) {
    let period = 1.0 / (frequency * tau);
    let total = (10 * history).max((20.0 * period).ceil() as usize);
    let window = (3.0 * period).ceil() as usize;
    (total, window.min(total))
}

/// Running min/max per point over the measurement window.
#[derive(Clone, Debug)]
struct Extremes {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Extremes {
    fn new(n: usize) -> Self {
        Extremes {
            lo: vec![f64::INFINITY; n],
            hi: vec![f64::NEG_INFINITY; n],
        }
    }

    fn push(&mut self, values: &[f64]) {
        for ((lo, hi), v) in self.lo.iter_mut().zip(self.hi.iter_mut()).zip(values) {
            *lo = lo.min(*v);
            *hi = hi.max(*v);
        }
    }

    fn half_peak_to_peak(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    fn peak_abs(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l.abs().max(h.abs())).collect()
    }
}

/// Run a scene to its end and return per-point window extremes of the
/// pressure at `points`.
fn window_extremes(
    elements: &[BoundaryElement],
    spec: &GridSpec,
    config: &HybridConfig,
    source: &dyn NeumannSource,
    points: &[Vec3],
    total: usize,
    window: usize,
    backend: Backend,
) -> Result<Extremes> {
    let mut ext = Extremes::new(points.len());
    match backend {
        Backend::Hybrid => {
            let mut state = SolverState::new(elements.to_vec(), spec.clone(), config.clone())?;
            let probes = state.build_probes(points)?;
            info!(
                "hybrid run: {} elements, {} cell pairs, {} steps",
                elements.len(),
                state.num_cell_pairs(),
                total
            );
            for n in 0..total {
                state.step(source)?;
                if n + window >= total {
                    ext.push(&state.evaluate_probes(&probes));
                }
            }
        }
        Backend::Oracle => {
            let tau = config.tau.unwrap_or_else(|| cfl_timestep(spec.h, config.c));
            let transform = CqmTransform::new(CqmConfig::new(tau, config.history, config.c)?)?;
            let mut oracle = TdbemOracle::new(elements.to_vec(), transform, MarchMode::Dense)?;
            let mut run = RecordedRun::new(elements.len());
            let mut g = vec![0.0; elements.len()];
            for n in 0..total {
                source.neumann(elements, n as f64 * tau, &mut g);
                let phi = oracle.step_with(&g)?;
                run.push(g.clone(), phi);
            }
            info!("oracle run: {} elements, {} steps, {} points", elements.len(), total, points.len());
            for (k, x) in points.iter().enumerate() {
                let w: Vec<PairWeights> = point_weights_all(&oracle.transform, x, elements)?;
                for n in total - window..total {
                    let p = run.pressure_at(&w, n);
                    ext.lo[k] = ext.lo[k].min(p);
                    ext.hi[k] = ext.hi[k].max(p);
                }
            }
        }
    }
    Ok(ext)
}

/// Parameters of the monopole accuracy experiment.
#[derive(Clone, Debug)]
pub struct MonopoleTest {
    pub mesh: TriangleMesh,
    pub resolution: usize,
    pub frequency: f64,
    pub factors: Vec<f64>,
    pub domain_size: f64,
    /// Largest mesh extent as a fraction of the domain.
    pub fit_fraction: f64,
    /// Nodes per face edge; the grid resolution when `None`.
    pub face_resolution: Option<usize>,
    pub backend: Backend,
    pub solver: HybridConfig,
}

impl MonopoleTest {
    pub fn new(mesh: TriangleMesh, resolution: usize, frequency: f64) -> Self {
        MonopoleTest {
            mesh,
            resolution,
            frequency,
            factors: vec![2.4, 3.0, 3.6, 4.2],
            domain_size: 0.7,
            fit_fraction: 1.0 / 6.0,
            face_resolution: None,
            backend: Backend::Hybrid,
            solver: HybridConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorResult {
    pub factor: f64,
    pub snr_db: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonopoleReport {
    pub resolution: usize,
    pub frequency: f64,
    pub elements: usize,
    pub steps: usize,
    pub window: usize,
    pub tau: f64,
    pub per_factor: Vec<FactorResult>,
    pub aggregate_snr_db: f64,
    pub wall_time_s: f64,
}

impl MonopoleReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "resolution={}", self.resolution);
        let _ = writeln!(s, "frequency_hz={}", self.frequency);
        let _ = writeln!(s, "elements={}", self.elements);
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "window={}", self.window);
        let _ = writeln!(s, "tau_s={:e}", self.tau);
        for f in &self.per_factor {
            let _ = writeln!(s, "snr_db[{}]={:.3}", f.factor, f.snr_db);
        }
        let _ = writeln!(s, "aggregate_snr_db={:.3}", self.aggregate_snr_db);
        let _ = writeln!(s, "wall_time_s={:.3}", self.wall_time_s);
        s
    }
}

/// Mesh fitted into the centre of a cubic domain and refined below the
/// cell size.
pub fn prepare_mesh(mesh: &TriangleMesh, spec: &GridSpec, extent: f64) -> Result<TriangleMesh> {
    let fitted = mesh.fitted(spec.domain_center(), extent);
    Ok(remesh_to_grid(&fitted, spec.h)?.mesh)
}

/// Drive a closed mesh with a monopole at its bounding-box centre, run to
/// steady state and compare the amplitude on scaled bounding boxes with
/// `1 / (4 pi r)`.
pub fn monopole_test(test: &MonopoleTest) -> Result<MonopoleReport> {
    let start = Instant::now();
    if test.resolution < 16 {
        return Err(Error::Config(format!("resolution must be at least 16, got {}", test.resolution)));
    }
    let spec = GridSpec::cube(Vec3::zeros(), test.domain_size, test.resolution)?;
    let mesh = prepare_mesh(&test.mesh, &spec, test.fit_fraction * test.domain_size)?;
    let elements = mesh.boundary_elements();
    let (lo, hi) = mesh.bbox();
    let centre = 0.5 * (lo + hi);
    let c = test.solver.c;
    let tau = test.solver.tau.unwrap_or_else(|| cfl_timestep(spec.h, c));
    let source = MonopoleSource::new(centre, test.frequency, c)?.with_grid_step(spec.h);
    let face_res = test.face_resolution.unwrap_or(test.resolution);
    let mut points = Vec::new();
    let mut ranges = Vec::new();
    for &factor in &test.factors {
        let p = sample_bbox(lo, hi, factor, face_res, Some(&spec))?;
        ranges.push((factor, points.len(), points.len() + p.len()));
        points.extend(p);
    }
    let (total, window) = steady_state_steps(tau, test.solver.history, test.frequency);
    let ext = window_extremes(&elements, &spec, &test.solver, &source, &points, total, window, test.backend)?;
    let amp = ext.half_peak_to_peak();
    let truth: Vec<f64> = points.iter().map(|x| source.amplitude_at(x)).collect();
    let per_factor = ranges
        .iter()
        .map(|&(factor, a, b)| {
            Ok(FactorResult {
                factor,
                snr_db: snr(&amp[a..b], &truth[a..b])?,
                points: b - a,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonopoleReport {
        resolution: test.resolution,
        frequency: test.frequency,
        elements: elements.len(),
        steps: total,
        window,
        tau,
        per_factor,
        aggregate_snr_db: snr(&amp, &truth)?,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Surface geometry of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSource {
    /// Wavefront OBJ file, relative paths resolved against the scene file.
    Obj(PathBuf),
    Icosphere { subdivisions: usize },
    Cuboid { half: [f64; 3] },
}

impl MeshSource {
    pub fn load(&self, base: &Path) -> Result<TriangleMesh> {
        match self {
            MeshSource::Obj(p) => TriangleMesh::load_obj(base.join(p)),
            MeshSource::Icosphere { subdivisions } => Ok(TriangleMesh::icosphere(Vec3::zeros(), 1.0, *subdivisions)),
            MeshSource::Cuboid { half } => Ok(TriangleMesh::cuboid(Vec3::zeros(), Vec3::from(*half))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Monopole at the mesh bounding-box centre unless `center` is given.
    Monopole {
        frequency: f64,
        #[serde(default)]
        center: Option<[f64; 3]>,
    },
    /// Modal data file (`element, mode, re, im, frequency` rows) against
    /// the unrefined mesh.
    Modal { file: PathBuf, mode: usize },
}

/// Constant-velocity translation of the whole mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub velocity: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOutput {
    /// 0, 1, 2 or "x", "y", "z".
    pub axis: String,
    pub index: usize,
    /// Write a slice every this many steps.
    pub every: usize,
}

/// Scene description read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub mesh: MeshSource,
    /// Largest mesh extent as a fraction of the domain size.
    #[serde(default = "default_fit")]
    pub fit_fraction: f64,
    /// Offset of the mesh centre from the domain centre, m.
    #[serde(default)]
    pub mesh_offset: [f64; 3],
    pub domain_size: f64,
    pub resolution: usize,
    #[serde(default = "default_c")]
    pub sound_speed: f64,
    pub source: SourceSpec,
    #[serde(default)]
    pub listeners: Vec<[f64; 3]>,
    /// Run length, s; the steady-state rule when absent.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub r1: Option<usize>,
    #[serde(default)]
    pub r2: Option<usize>,
    #[serde(default)]
    pub history: Option<usize>,
    #[serde(default)]
    pub dirichlet_sweeps: Option<usize>,
    #[serde(default)]
    pub absorber: Option<Absorber>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub motion: Option<Motion>,
    #[serde(default)]
    pub slices: Option<SliceOutput>,
    /// Bounding-box factor and face resolution of FFAT maps.
    #[serde(default = "default_ffat_factor")]
    pub ffat_factor: f64,
    #[serde(default)]
    pub ffat_resolution: Option<usize>,
}

fn default_fit() -> f64 {
    1.0 / 6.0
}

fn default_c() -> f64 {
    crate::SOUND_SPEED
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_ffat_factor() -> f64 {
    2.4
}

pub fn parse_axis(axis: &str) -> Result<usize> {
    match axis {
        "0" | "x" | "X" => Ok(0),
        "1" | "y" | "Y" => Ok(1),
        "2" | "z" | "Z" => Ok(2),
        other => Err(Error::Config(format!("unknown axis {other:?}"))),
    }
}

/// A scene resolved into solver inputs.
pub struct PreparedScene {
    pub config: SceneConfig,
    pub base: PathBuf,
    pub spec: GridSpec,
    pub original: TriangleMesh,
    pub mesh: TriangleMesh,
    pub parent: Vec<usize>,
    pub solver: HybridConfig,
}

impl SceneConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<SceneConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(Error::Config(format!("resolution must be at least 16, got {}", self.resolution)));
        }
        if !(self.domain_size > 0.0) {
            return Err(Error::Config("domain size must be positive".into()));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction < 1.0) {
            return Err(Error::Config(format!("fit fraction must lie in (0, 1), got {}", self.fit_fraction)));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> HybridConfig {
        let d = HybridConfig::default();
        HybridConfig {
            r1: self.r1.unwrap_or(d.r1),
            r2: self.r2.unwrap_or(d.r2),
            history: self.history.unwrap_or(d.history),
            c: self.sound_speed,
            tau: None,
            dirichlet_sweeps: self.dirichlet_sweeps.unwrap_or(d.dirichlet_sweeps),
            absorber: self.absorber.unwrap_or(d.absorber),
        }
    }

    /// Load and fit the mesh and build the grid. `base` resolves relative
    /// paths.
    pub fn prepare(&self, base: &Path) -> Result<PreparedScene> {
        self.validate()?;
        let spec = GridSpec::cube(Vec3::zeros(), self.domain_size, self.resolution)?;
        let original = self
            .mesh
            .load(base)?
            .fitted(Vec3::from(self.mesh_offset), self.fit_fraction * self.domain_size);
        let remeshed = remesh_to_grid(&original, spec.h)?;
        Ok(PreparedScene {
            config: self.clone(),
            base: base.to_path_buf(),
            spec,
            original,
            mesh: remeshed.mesh.clone(),
            parent: remeshed.parent,
            solver: self.solver_config(),
        })
    }
}

/// Owned Neumann source of a prepared scene.
pub enum SceneSource {
    Monopole(MonopoleSource),
    Modal(crate::sources::ModalNeumannData, usize),
}

impl PreparedScene {
    pub fn tau(&self) -> f64 {
        cfl_timestep(self.spec.h, self.solver.c)
    }

    pub fn source(&self, mode_override: Option<usize>) -> Result<SceneSource> {
        match &self.config.source {
            SourceSpec::Monopole { frequency, center } => {
                let (lo, hi) = self.mesh.bbox();
                let c = center.map(Vec3::from).unwrap_or(0.5 * (lo + hi));
                Ok(SceneSource::Monopole(
                    MonopoleSource::new(c, *frequency, self.solver.c)?.with_grid_step(self.spec.h),
                ))
            }
            SourceSpec::Modal { file, mode } => {
                let data = load_modal_neumann(self.base.join(file), self.original.triangles.len())?;
                let refined = crate::sources::ModalNeumannData {
                    amplitudes: data.amplitudes.iter().map(|a| self.parent.iter().map(|&p| a[p]).collect()).collect(),
                    frequencies: data.frequencies.clone(),
                    num_elements: self.parent.len(),
                };
                let mode = mode_override.unwrap_or(*mode);
                refined.mode(mode)?;
                Ok(SceneSource::Modal(refined, mode))
            }
        }
    }

    /// Number of steps: the configured duration or the steady-state rule.
    pub fn steps(&self, frequency: f64) -> (usize, usize) {
        let (total, window) = steady_state_steps(self.tau(), self.solver.history, frequency);
        match self.config.duration {
            Some(d) => {
                let total = (d / self.tau()).ceil() as usize;
                (total, window.min(total))
            }
            None => (total, window),
        }
    }
}

impl SceneSource {
    pub fn as_source(&self) -> Result<Box<dyn NeumannSource + '_>> {
        Ok(match self {
            SceneSource::Monopole(m) => Box::new(m.clone()),
            SceneSource::Modal(d, mode) => Box::new(d.mode(*mode)?),
        })
    }

    pub fn frequency(&self) -> f64 {
        match self {
            SceneSource::Monopole(m) => m.frequency,
            SceneSource::Modal(d, mode) => d.frequencies[*mode],
        }
    }
}

/// Amplitude maps on the six faces of a scaled bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct FfatMap {
    /// Faces `-x, +x, -y, +y, -z, +z`, each `resolution^2` values row-major.
    pub faces: [Vec<f64>; 6],
    pub resolution: usize,
    pub frequency: f64,
}

pub const FACE_NAMES: [&str; 6] = ["-x", "+x", "-y", "+y", "-z", "+z"];

impl FfatMap {
    pub fn max(&self) -> f64 {
        self.faces.iter().flatten().fold(0.0f64, |m, v| m.max(*v))
    }

    /// Six PGM images plus `face, i, j, amplitude` CSV.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let pmax = self.max();
        for (k, face) in self.faces.iter().enumerate() {
            let name = format!("{stem}_{}.pgm", ["mx", "px", "my", "py", "mz", "pz"][k]);
            write_pgm(dir.join(name), self.resolution, self.resolution, face, pmax)?;
        }
        let path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["face", "i", "j", "amplitude"])?;
        for (k, face) in self.faces.iter().enumerate() {
            for (idx, v) in face.iter().enumerate() {
                w.write_record([
                    FACE_NAMES[k].to_string(),
                    (idx / self.resolution).to_string(),
                    (idx % self.resolution).to_string(),
                    format!("{v:e}"),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

/// FFAT map of one vibration mode: peak `|p|` over the final three periods
/// at every face node.
pub fn ffat_map(scene: &PreparedScene, mode: usize, backend: Backend) -> Result<FfatMap> {
    let source = scene.source(Some(mode))?;
    let frequency = source.frequency();
    if !(frequency > 0.0) {
        return Err(Error::Config(format!("mode {mode} has no positive frequency")));
    }
    let res = scene.config.ffat_resolution.unwrap_or(scene.config.resolution);
    let (lo, hi) = scene.mesh.bbox();
    let points = sample_bbox(lo, hi, scene.config.ffat_factor, res, Some(&scene.spec))?;
    let (total, window) = scene.steps(frequency);
    let drive = source.as_source()?;
    let elements = scene.mesh.boundary_elements();
    let ext = window_extremes(&elements, &scene.spec, &scene.solver, drive.as_ref(), &points, total, window, backend)?;
    let peak = ext.peak_abs();
    let per = res * res;
    Ok(FfatMap {
        faces: std::array::from_fn(|k| peak[k * per..(k + 1) * per].to_vec()),
        resolution: res,
        frequency,
    })
}

/// Execute a scene: listener CSV and WAV, optional slices, and a
/// `manifest.txt` of `key=value` lines. Returns the manifest path.
pub fn run(scene: &PreparedScene, out: &Path, backend: Backend) -> Result<PathBuf> {
    let start = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let source = scene.source(None)?;
    let drive = source.as_source()?;
    let (total, _) = scene.steps(source.frequency());
    let tau = scene.tau();
    let listeners: Vec<Vec3> = scene.config.listeners.iter().map(|p| Vec3::from(*p)).collect();
    let elements = scene.mesh.boundary_elements();
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(total); listeners.len()];
    let setup = start.elapsed().as_secs_f64();
    match backend {
        Backend::Hybrid => {
            let mut state = SolverState::new(elements, scene.spec.clone(), scene.solver.clone())?;
            for x in &listeners {
                state.add_listener(*x)?;
            }
            let velocity = scene.config.motion.as_ref().map(|m| Vec3::from(m.velocity));
            let slice_cfg = match &scene.config.slices {
                Some(s) => Some((parse_axis(&s.axis)?, s.index, s.every.max(1))),
                None => None,
            };
            for n in 0..total {
                if let Some(v) = velocity {
                    let offset = v * (n as f64 * tau);
                    state.set_vertices(scene.mesh.vertices.iter().map(|p| p + offset).collect());
                }
                state.step(drive.as_ref())?;
                if let Some((axis, index, every)) = slice_cfg {
                    if n % every == 0 {
                        let (rows, cols, values) = slice(&state.grid, axis, index)?;
                        write_pgm(out.join(format!("slice_{n:06}.pgm")), rows, cols, &values, 0.0)?;
                    }
                }
            }
            if let Some((axis, index, _)) = slice_cfg {
                write_slice_csv(out.join("slice_final.csv"), &state.grid, axis, index)?;
            }
            for (s, tap) in series.iter_mut().zip(&state.listeners) {
                *s = tap.samples.clone();
            }
        }
        Backend::Oracle => {
            if scene.config.motion.is_some() {
                return Err(Error::Config("the dense oracle runs static scenes only".into()));
            }
            let transform = CqmTransform::new(CqmConfig::new(tau, scene.solver.history, scene.solver.c)?)?;
            let weights: Vec<Vec<PairWeights>> = listeners
                .iter()
                .map(|x| point_weights_all(&transform, x, &elements))
                .collect::<Result<_>>()?;
            let mut oracle = TdbemOracle::new(elements, transform, MarchMode::Dense)?;
            for _ in 0..total {
                oracle.step(drive.as_ref())?;
                for (s, w) in series.iter_mut().zip(&weights) {
                    s.push(crate::oracle::evaluate_pressure(w, &oracle.history));
                }
            }
        }
    }
    let mut scales = Vec::new();
    for (k, s) in series.iter().enumerate() {
        write_listener_csv(out.join(format!("listener_{k}.csv")), s, tau)?;
        scales.push(write_listener_wav(out.join(format!("listener_{k}.wav")), s, tau)?);
    }
    let mut manifest = String::new();
    let _ = writeln!(manifest, "backend={backend:?}");
    let _ = writeln!(manifest, "config={}", serde_json::to_string(&scene.config)?);
    let _ = writeln!(manifest, "resolution={}", scene.spec.dims[0]);
    let _ = writeln!(manifest, "h_m={:e}", scene.spec.h);
    let _ = writeln!(manifest, "tau_s={tau:e}");
    let _ = writeln!(manifest, "sample_rate_hz={}", (1.0 / tau).round());
    let _ = writeln!(manifest, "steps={total}");
    let _ = writeln!(manifest, "elements={}", scene.mesh.triangles.len());
    let _ = writeln!(manifest, "r1={}", scene.solver.r1);
    let _ = writeln!(manifest, "r2={}", scene.solver.r2);
    let _ = writeln!(manifest, "history={}", scene.solver.history);
    let _ = writeln!(manifest, "dirichlet_sweeps={}", scene.solver.dirichlet_sweeps);
    let _ = writeln!(manifest, "absorber={:?}", scene.solver.absorber);
    let _ = writeln!(manifest, "listeners={}", listeners.len());
    for (k, s) in scales.iter().enumerate() {
        let _ = writeln!(manifest, "listener_{k}_full_scale_pa={s:e}");
    }
    let _ = writeln!(manifest, "setup_s={setup:.3}");
    let _ = writeln!(manifest, "wall_time_s={:.3}", start.elapsed().as_secs_f64());
    let path = out.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Analytic steady amplitude of a unit monopole at distance `r`.
pub fn monopole_amplitude(r: f64) -> f64 {
    1.0 / (4.0 * PI * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn snr_cases() {
        assert_eq!(snr(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), SNR_CAP_DB);
        assert_relative_eq!(snr(&[1.1, 0.0], &[1.0, 0.0]).unwrap(), 20.0, max_relative = 1e-12);
        assert!(matches!(snr(&[1.0], &[0.0]), Err(Error::ZeroReference)));
        assert!(snr(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn snr_is_scale_invariant() {
        let truth = [0.5, -1.25, 2.0, 0.75];
        let pred = [0.55, -1.0, 2.25, 0.5];
        let a = snr(&pred, &truth).unwrap();
        let k = 4.0;
        let b = snr(&pred.map(|p| p * k), &truth.map(|t| t * k)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bbox_sampling() {
        let lo = Vec3::new(-0.5, -0.5, -0.5);
        let hi = Vec3::new(0.5, 0.5, 0.5);
        let pts = sample_bbox(lo, hi, 2.4, 5, None).unwrap();
        assert_eq!(pts.len(), 6 * 25);
        let max = pts.iter().fold(0.0f64, |m, p| m.max(p.amax()));
        assert_relative_eq!(max, 1.2, max_relative = 1e-12);
        for p in &pts {
            assert!(p.amax() > 0.5);
            assert_relative_eq!(p.amax(), 1.2, max_relative = 1e-12);
        }
        assert!(sample_bbox(lo, hi, 1.0, 5, None).is_err());
        let spec = GridSpec::cube(Vec3::zeros(), 2.0, 16).unwrap();
        assert!(sample_bbox(lo, hi, 2.4, 5, Some(&spec)).is_err());
        assert!(sample_bbox(lo, hi, 1.5, 5, Some(&spec)).is_ok());
    }

    #[test]
    fn steady_state_rule() {
        let tau = 1e-4;
        let (total, window) = steady_state_steps(tau, 64, 1000.0);
        assert_eq!(total, 640);
        assert_eq!(window, 30);
        let (total, _) = steady_state_steps(tau, 4, 100.0);
        assert_eq!(total, 2000);
    }

    #[test]
    fn scene_json_round_trip() {
        let json = r#"{
            "mesh": {"icosphere": {"subdivisions": 1}},
            "domain_size": 0.7,
            "resolution": 16,
            "source": {"type": "monopole", "frequency": 1000.0},
            "listeners": [[0.2, 0.0, 0.0]]
        }"#;
        let cfg: SceneConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.sound_speed, 343.0);
        assert_relative_eq!(cfg.fit_fraction, 1.0 / 6.0);
        let hc = cfg.solver_config();
        assert_eq!((hc.r1, hc.r2, hc.history, hc.dirichlet_sweeps), (5, 4, 64, 2));
        assert_eq!(hc.absorber, Absorber::Higdon);
        let back: SceneConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let bad = SceneConfig { resolution: 8, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn axis_names() {
        assert_eq!(parse_axis("z").unwrap(), 2);
        assert_eq!(parse_axis("0").unwrap(), 0);
        assert!(parse_axis("w").is_err());
    }

    proptest::proptest! {
        #[test]
        fn snr_of_relative_error(truth in proptest::collection::vec(-5.0f64..5.0, 1..50), e in 1e-4f64..0.9, k in 0.1f64..10.0) {
            proptest::prop_assume!(truth.iter().any(|t| t.abs() > 1e-3));
            let pred: Vec<f64> = truth.iter().map(|t| t * (1.0 + e)).collect();
            let db = snr(&pred, &truth).unwrap();
            proptest::prop_assert!((db + 20.0 * e.log10()).abs() < 1e-9);
            let scaled_p: Vec<f64> = pred.iter().map(|p| p * k).collect();
            let scaled_t: Vec<f64> = truth.iter().map(|t| t * k).collect();
            proptest::prop_assert!((snr(&scaled_p, &scaled_t).unwrap() - db).abs() < 1e-9);
        }
    }
}
