use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use hybrid_rad::farfield::Absorber;
use hybrid_rad::harness::{self, Backend, MonopoleTest, SceneConfig};
use hybrid_rad::hybrid::SolverState;
use hybrid_rad::mesh::TriangleMesh;
use hybrid_rad::Vec3;

#[derive(Parser)]
#[command(name = "hybrid-rad", version, about = "Hybrid TDBEM/FDTD acoustic radiation solver")]
struct Cli {
    /// Use the dense TDBEM solver instead of the hybrid one.
    #[arg(long, global = true)]
    oracle: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scene and write listener series and a manifest.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monopole accuracy test on scaled bounding boxes.
    MonopoleTest {
        /// OBJ file, or `icosphere[:<subdivisions>]`.
        #[arg(long, default_value = "icosphere:2")]
        mesh: String,
        #[arg(long, default_value_t = 32)]
        resolution: usize,
        #[arg(long, default_value_t = 1000.0)]
        freq: f64,
        #[arg(long, value_delimiter = ',', default_value = "2.4,3.0,3.6,4.2")]
        factors: Vec<f64>,
        /// Nodes per face edge (defaults to the grid resolution).
        #[arg(long)]
        face_resolution: Option<usize>,
        /// Jacobi sweeps over the near-block coupling (0 = diagonal update).
        #[arg(long)]
        sweeps: Option<usize>,
        /// Cell near-field block width (odd).
        #[arg(long)]
        r1: Option<usize>,
        /// Element near-field block width.
        #[arg(long)]
        r2: Option<usize>,
        /// Absorbing boundary: `mur` or `higdon`.
        #[arg(long)]
        absorber: Option<String>,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// FFAT map of one vibration mode.
    Ffat {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        mode: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a scene and export one field slice of the final step.
    Slice {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "z")]
        axis: String,
        #[arg(long)]
        index: usize,
        /// Steps to run before exporting (defaults to the scene length).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_mesh(spec: &str) -> Result<TriangleMesh> {
    if let Some(rest) = spec.strip_prefix("icosphere") {
        let level = rest.trim_start_matches(':');
        let level = if level.is_empty() { 2 } else { level.parse().context("icosphere level")? };
        return Ok(TriangleMesh::icosphere(Vec3::zeros(), 1.0, level));
    }
    Ok(TriangleMesh::load_obj(spec)?)
}

fn parse_absorber(name: &str) -> Result<Absorber> {
    match name {
        "mur" => Ok(Absorber::Mur),
        "higdon" => Ok(Absorber::Higdon),
        other => anyhow::bail!("unknown absorber {other:?} (expected mur or higdon)"),
    }
}

fn scene_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn backend(oracle: bool) -> Backend {
    if oracle {
        Backend::Oracle
    } else {
        Backend::Hybrid
    }
}

fn execute(cli: Cli) -> Result<()> {
    let backend = backend(cli.oracle);
    match cli.command {
        Command::Run { scene, out } => {
            let cfg = SceneConfig::load(&scene).context("loading scene")?;
            let prepared = cfg.prepare(&scene_base(&scene)).context("preparing scene")?;
            let manifest = harness::run(&prepared, &out, backend).context("running scene")?;
            println!("wrote {}", manifest.display());
        }
        Command::MonopoleTest {
            mesh,
            resolution,
            freq,
            factors,
            face_resolution,
            sweeps,
            r1,
            r2,
            absorber,
            report,
        } => {
            let mut test = MonopoleTest::new(load_mesh(&mesh).context("loading mesh")?, resolution, freq);
            test.factors = factors;
            test.backend = backend;
            if let Some(s) = sweeps {
                test.solver.dirichlet_sweeps = s;
            }
            if let Some(r) = r1 {
                test.solver.r1 = r;
            }
            if let Some(r) = r2 {
                test.solver.r2 = r;
            }
            if let Some(a) = absorber {
                test.solver.absorber = parse_absorber(&a)?;
            }
            test.face_resolution = face_resolution.or(if cli.oracle { Some(resolution.min(8)) } else { None });
            let r = harness::monopole_test(&test).context("monopole test")?;
            let text = r.to_text();
            print!("{text}");
            if let Some(path) = report {
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Ffat { scene, mode, out } => {
            let cfg = SceneConfig::load(&scene).context("loading scene")?;
            let prepared = cfg.prepare(&scene_base(&scene)).context("preparing scene")?;
            let map = harness::ffat_map(&prepared, mode, backend).context("computing FFAT map")?;
            map.write(&out, &format!("ffat_mode{mode}")).context("writing FFAT map")?;
            println!("mode {mode} at {} Hz, max amplitude {:e} Pa", map.frequency, map.max());
        }
        Command::Slice {
            scene,
            axis,
            index,
            steps,
            out,
        } => {
            anyhow::ensure!(!cli.oracle, "slices need the far-field grid of the hybrid solver");
            let cfg = SceneConfig::load(&scene).context("loading scene")?;
            let prepared = cfg.prepare(&scene_base(&scene)).context("preparing scene")?;
            let axis = harness::parse_axis(&axis)?;
            let source = prepared.source(None)?;
            let drive = source.as_source()?;
            let steps = steps.unwrap_or_else(|| prepared.steps(source.frequency()).0);
            let mut state = SolverState::new(prepared.mesh.boundary_elements(), prepared.spec.clone(), prepared.solver.clone())?;
            for _ in 0..steps {
                state.step(drive.as_ref())?;
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let (rows, cols, values) = hybrid_rad::farfield::slice(&state.grid, axis, index)?;
            hybrid_rad::farfield::write_pgm(out.join("slice.pgm"), rows, cols, &values, 0.0)?;
            hybrid_rad::farfield::write_slice_csv(out.join("slice.csv"), &state.grid, axis, index)?;
            println!("wrote slice after {steps} steps to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
