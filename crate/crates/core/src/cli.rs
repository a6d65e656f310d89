//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{
    adaptive_grid_search, gradient_ascent, gradient_ascent_with, random_rotation, so3_distance, Aligner,
    EulerAngles, Schedule, SearchTrace,
};
use crate::ectp::{self, Transform};
use crate::error::{EctError, Result};
use crate::mesh::{load_off, octahedron_directions, Mesh};
use crate::metric::{
    discrete_distance, discrete_distance_unweighted, discrete_ect, discretization_sweep, distance_matrix_with,
    format_float, mantel_correlation, planar_distance_matrix, DistanceMatrix, PairOptions, Reduction,
    DEFAULT_SWEEP,
};
use crate::transform::planar::{build_planar_transform, planar_inner_product};
use crate::transform::{build_proto_transform_with, rotate_transform, BuildOptions, ProtoTransform};

#[derive(Debug, Parser)]
#[command(name = "exact-ect", version, about = "Exact Euler characteristic transforms of triangle meshes")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct RunConfig {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Reduce partial sums in a fixed order so outputs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

impl RunConfig {
    pub fn pair_options(&self) -> PairOptions {
        PairOptions {
            prefilter: true,
            reduction: if self.deterministic { Reduction::Ordered } else { Reduction::Unordered },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Grid,
    Gradient,
    #[value(name = "grid+gradient")]
    GridGradient,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a 3D mesh and write its transform.
    Transform {
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fuse equal-gain cells into larger convex cells.
        #[arg(long)]
        merge: bool,
        /// Use the coordinates as given; they must lie in the unit ball.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Write the transform of a planar mesh (z = 0) without rescaling.
    Transform2d {
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inner product of two planar transforms over heights [-R, R].
    Inner2d {
        a: PathBuf,
        /// Defaults to the first transform.
        b: Option<PathBuf>,
        #[arg(long)]
        radius: f64,
    },
    /// Pairwise exact distances between transform files or directories of them.
    Distmat {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Height range for planar transforms.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Sample the transform of a mesh on an octahedral direction grid.
    Discretize {
        mesh: PathBuf,
        /// Second mesh; prints the discrete distance between the two.
        other: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        heights: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        unweighted: bool,
    },
    /// Mantel correlation of exact against subsampled discrete distances.
    Sweep {
        #[arg(required = true)]
        meshes: Vec<PathBuf>,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        heights: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mantel correlation between two distance matrix files.
    Mantel { a: PathBuf, b: PathBuf },
    /// Apply a seeded random rotation (or given angles) to a transform.
    Rotate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `alpha,beta,gamma` in radians instead of a random rotation.
        #[arg(long, value_parser = parse_angles)]
        angles: Option<EulerAngles>,
    },
    /// Find the rotation of `y` best matching `x`.
    Align {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Grid)]
        method: Method,
        /// Grid refinement iterations.
        #[arg(long, default_value_t = 11)]
        iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Known rotation `alpha,beta,gamma`, for reporting the SO(3) distance.
        #[arg(long, value_parser = parse_angles)]
        truth: Option<EulerAngles>,
        /// Terms of `x` per stochastic gradient step.
        #[arg(long)]
        stochastic_batch: Option<usize>,
    },
}

fn parse_angles(s: &str) -> std::result::Result<EulerAngles, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("malformed angle `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [a, b, c] if parts.iter().all(|x| x.is_finite()) => Ok(EulerAngles::new(*a, *b, *c)),
        _ => Err("expected three finite angles `alpha,beta,gamma`".into()),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.config.jobs)
        .build()
        .map_err(|e| EctError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.config, &cli.command))
}

fn dispatch(cfg: &RunConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Transform { mesh, out, merge, no_normalize } => cmd_transform(mesh, out, *merge, !*no_normalize),
        Command::Transform2d { mesh, out } => cmd_transform2d(mesh, out),
        Command::Inner2d { a, b, radius } => cmd_inner2d(a, b.as_deref(), *radius),
        Command::Distmat { inputs, out, radius } => cmd_distmat(cfg, inputs, out, *radius),
        Command::Discretize { mesh, other, k, heights, out, unweighted } => {
            cmd_discretize(mesh, other.as_deref(), *k, *heights, out.as_deref(), *unweighted)
        }
        Command::Sweep { meshes, k, heights, out } => cmd_sweep(cfg, meshes, *k, *heights, out.as_deref()),
        Command::Mantel { a, b } => cmd_mantel(a, b),
        Command::Rotate { input, out, angles } => cmd_rotate(cfg, input, out, *angles),
        Command::Align { x, y, method, iters, out, truth, stochastic_batch } => {
            cmd_align(cfg, x, y, *method, *iters, out.as_deref(), *truth, *stochastic_batch)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_mesh_3d(path: &Path, normalize: bool) -> Result<Mesh> {
    let m = load_off(path)?;
    if normalize {
        m.normalize()
    } else {
        Ok(m)
    }
}

pub fn cmd_transform(mesh: &Path, out: &Path, merge: bool, normalize: bool) -> Result<()> {
    let m = load_mesh_3d(mesh, normalize)?;
    let t = build_proto_transform_with(&m, BuildOptions { merge })?.with_id(stem(mesh));
    ectp::save(out, &Transform::Spherical(t.clone()))?;
    println!("terms: {}", t.len());
    println!("chi: {}", m.euler_characteristic());
    Ok(())
}

fn planar_mesh(m: &Mesh) -> Result<Mesh> {
    if m.vertices().iter().any(|v| v.z != 0.0) {
        return Err(EctError::Argument("planar mesh needs z = 0 for every vertex".into()));
    }
    let points: Vec<[f64; 2]> = m.vertices().iter().map(|v| [v.x, v.y]).collect();
    Mesh::planar(&points, m.edges().to_vec(), m.triangles().to_vec())
}

pub fn cmd_transform2d(mesh: &Path, out: &Path) -> Result<()> {
    let m = planar_mesh(&load_off(mesh)?)?;
    let mut t = build_planar_transform(&m)?;
    t.id = stem(mesh);
    ectp::save(out, &Transform::Planar(t.clone()))?;
    println!("terms: {}", t.terms.len());
    println!("chi: {}", m.euler_characteristic());
    Ok(())
}

fn load_planar(path: &Path) -> Result<crate::transform::planar::PlanarTransform> {
    match ectp::load(path)? {
        Transform::Planar(t) => Ok(t),
        Transform::Spherical(_) => Err(EctError::Argument(format!("{} is not a planar transform", path.display()))),
    }
}

fn load_spherical(path: &Path) -> Result<ProtoTransform> {
    match ectp::load(path)? {
        Transform::Spherical(t) => Ok(t),
        Transform::Planar(_) => Err(EctError::Argument(format!("{} is not a 3D transform", path.display()))),
    }
}

pub fn cmd_inner2d(a: &Path, b: Option<&Path>, radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(EctError::Argument("radius must be positive".into()));
    }
    let ta = load_planar(a)?;
    let tb = match b {
        Some(b) => load_planar(b)?,
        None => ta.clone(),
    };
    println!("{}", format_float(planar_inner_product(&ta, &tb, radius)?));
    Ok(())
}

/// Files given directly, plus every `*.ectp` inside given directories, sorted.
fn expand_inputs(inputs: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| EctError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn cmd_distmat(cfg: &RunConfig, inputs: &[PathBuf], out: &Path, radius: Option<f64>) -> Result<()> {
    let files = expand_inputs(inputs, "ectp")?;
    if files.len() < 2 {
        return Err(EctError::Argument(format!("need at least two transforms, found {}", files.len())));
    }
    let loaded = files.iter().map(ectp::load).collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = loaded.iter().map(Transform::dimension).collect();
    if dims.iter().any(|d| *d != dims[0]) {
        return Err(EctError::Argument("transforms of mixed dimensions".into()));
    }
    let n = loaded.len();
    eprintln!("{} pairs", n * (n - 1) / 2);
    let d = if dims[0] == 3 {
        let ts: Vec<ProtoTransform> = loaded
            .into_iter()
            .map(|t| match t {
                Transform::Spherical(t) => t,
                Transform::Planar(_) => unreachable!("dimensions checked"),
            })
            .collect();
        distance_matrix_with(&ts, cfg.pair_options())?
    } else {
        let radius = radius.ok_or_else(|| EctError::Argument("planar transforms need --radius".into()))?;
        let ts: Vec<_> = loaded
            .into_iter()
            .map(|t| match t {
                Transform::Planar(t) => t,
                Transform::Spherical(_) => unreachable!("dimensions checked"),
            })
            .collect();
        planar_distance_matrix(&ts, radius)?
    };
    for i in 0..n {
        for j in (i + 1)..n {
            eprintln!("{} {}: {}", d.labels[i], d.labels[j], format_float(d.get(i, j)));
        }
    }
    d.write(out)
}

fn discrete_csv(d: &crate::metric::DiscreteEct) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    header.extend(d.heights.iter().map(|h| format_float(*h)));
    w.write_record(&header).map_err(|e| EctError::Internal(e.to_string()))?;
    for (v, row) in d.directions.iter().zip(&d.values) {
        let mut rec = vec![format_float(v.x), format_float(v.y), format_float(v.z)];
        rec.extend(row.iter().map(i64::to_string));
        w.write_record(&rec).map_err(|e| EctError::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EctError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EctError::Internal(e.to_string()))
}

pub fn cmd_discretize(
    mesh: &Path,
    other: Option<&Path>,
    k: usize,
    heights: usize,
    out: Option<&Path>,
    unweighted: bool,
) -> Result<()> {
    let dirs = octahedron_directions(k)?;
    let a = discrete_ect(&load_mesh_3d(mesh, true)?, &dirs, heights)?;
    println!("grid: {} directions x {} heights", a.directions.len(), a.heights.len());
    if let Some(out) = out {
        std::fs::write(out, discrete_csv(&a)?).map_err(|e| EctError::io(out, e))?;
    }
    if let Some(other) = other {
        let b = discrete_ect(&load_mesh_3d(other, true)?, &dirs, heights)?;
        let d = if unweighted { discrete_distance_unweighted(&a, &b)? } else { discrete_distance(&a, &b)? };
        println!("distance: {}", format_float(d));
    }
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, meshes: &[PathBuf], k: usize, heights: usize, out: Option<&Path>) -> Result<()> {
    let files = expand_inputs(meshes, "off")?;
    let ms = files.iter().map(|f| load_mesh_3d(f, true)).collect::<Result<Vec<_>>>()?;
    let ts = ms
        .iter()
        .zip(&files)
        .map(|(m, f)| Ok(build_proto_transform_with(m, BuildOptions::default())?.with_id(stem(f))))
        .collect::<Result<Vec<_>>>()?;
    let exact = distance_matrix_with(&ts, cfg.pair_options())?;
    let dirs = octahedron_directions(k)?;
    let full = ms.iter().map(|m| discrete_ect(m, &dirs, heights)).collect::<Result<Vec<_>>>()?;
    let rows = discretization_sweep(&exact, &full, &DEFAULT_SWEEP)?;
    let mut text = String::from("k,directions,heights,mantel\n");
    for r in &rows {
        println!("k={} {}x{}: {:.4}", r.level.k, r.n_directions, r.n_heights, r.mantel);
        text.push_str(&format!("{},{},{},{}\n", r.level.k, r.n_directions, r.n_heights, format_float(r.mantel)));
    }
    if let Some(out) = out {
        std::fs::write(out, text).map_err(|e| EctError::io(out, e))?;
    }
    Ok(())
}

pub fn cmd_mantel(a: &Path, b: &Path) -> Result<()> {
    let da = DistanceMatrix::read(a)?;
    let db = DistanceMatrix::read(b)?;
    if da.labels != db.labels {
        return Err(EctError::Argument("distance matrices have different labels".into()));
    }
    println!("{:.4}", mantel_correlation(&da, &db)?);
    Ok(())
}

fn print_angles(label: &str, e: EulerAngles) {
    println!("{label}: {} {} {}", format_float(e.alpha), format_float(e.beta), format_float(e.gamma));
}

pub fn cmd_rotate(cfg: &RunConfig, input: &Path, out: &Path, angles: Option<EulerAngles>) -> Result<()> {
    let t = load_spherical(input)?;
    let e = angles.unwrap_or_else(|| random_rotation(cfg.seed));
    let r = rotate_transform(&t, &e.matrix())?;
    ectp::save(out, &Transform::Spherical(r))?;
    print_angles("angles", e);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_align(
    cfg: &RunConfig,
    x: &Path,
    y: &Path,
    method: Method,
    iters: usize,
    out: Option<&Path>,
    truth: Option<EulerAngles>,
    stochastic_batch: Option<usize>,
) -> Result<()> {
    let tx = load_spherical(x)?;
    let ty = load_spherical(y)?;
    let aligner = Aligner::new(&tx, &ty)?.with_options(cfg.pair_options());
    let truth_m = truth.map(EulerAngles::matrix);
    let truth_ref = truth_m.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ascend = |start: EulerAngles, schedule: &Schedule| -> Result<(EulerAngles, SearchTrace)> {
        match stochastic_batch {
            None => Ok(gradient_ascent(&aligner, start, schedule, truth_ref)),
            Some(0) => Err(EctError::Argument("stochastic batch must be positive".into())),
            Some(b) => {
                let n = aligner.x_len();
                let b = b.min(n);
                gradient_ascent_with(start, schedule, truth_ref, |e| {
                    let batch = sample(&mut rng, n, b).into_vec();
                    let g = aligner.stochastic_gradient(e, &batch)?;
                    Ok((aligner.objective(e), g))
                })
            }
        }
    };
    let (best, trace) = match method {
        Method::Grid => adaptive_grid_search(&aligner, iters, truth_ref)?,
        Method::Gradient => ascend(EulerAngles::ZERO, &Schedule::default())?,
        Method::GridGradient => {
            let (g, mut trace) = adaptive_grid_search(&aligner, iters, truth_ref)?;
            let (best, more) = ascend(g, &Schedule::warm_start())?;
            let offset = trace.rows.len();
            trace.rows.extend(more.rows.into_iter().map(|mut r| {
                r.iteration += offset;
                r
            }));
            (best, trace)
        }
    };
    if trace.zero_gradient_at_start {
        eprintln!("warning: gradient vanishes at the starting point");
    }
    if let Some(out) = out {
        trace.write(out)?;
    }
    print_angles("angles", best);
    println!("objective: {}", format_float(aligner.objective(best)));
    if let Some(t) = truth_ref {
        println!("so3_distance: {}", format_float(so3_distance(&best.matrix(), t)));
    }
    Ok(())
}
