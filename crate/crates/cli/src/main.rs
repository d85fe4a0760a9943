use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gfdm::geometry::{
    analytic_laplacian, cloud_from_params, load_xyz, sample_manifold, sample_with_boundary, write_xyz, FieldSpec,
    ManifoldSpec, PointCloud,
};
use gfdm::gmls::{assemble_operator, basis_matrix, enumerate_multi_indices, ProjectionAt, RowWeights, StencilView};
use gfdm::harness::fit::{fit_slope, summarize, Metric};
use gfdm::harness::{read_csv, ExperimentConfig, RecordWriter, RunRecord};
use gfdm::pde::{detect_interior, solve_closed, solve_dirichlet, write_solution_csv};
use gfdm::sparse::CsrMatrix;
use gfdm::stabilizer::{stabilize_operator_with, FlaggedRows};
use gfdm::stencil::{build_knn, default_kp, frames_for, FrameSource, Frames};

#[derive(Parser)]
#[command(name = "gfdm", version, about = "Stabilized GFDM Laplace-Beltrami toolkit")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a point cloud on a built-in manifold.
    Sample(SampleArgs),
    /// Assemble the raw GMLS Laplacian.
    Assemble(AssembleArgs),
    /// Replace raw rows by LP-stabilized weights.
    Stabilize(StabilizeArgs),
    /// Solve a Poisson problem with a stored operator.
    Solve(SolveArgs),
    /// Run a convergence sweep from a config file.
    Sweep(SweepArgs),
    /// Summarize sweep records and fit log-log slopes.
    Report(ReportArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// ellipse, torus:<q>, or semitorus
    #[arg(long)]
    manifold: ManifoldSpec,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also place this many points on each boundary circle.
    #[arg(long)]
    boundary_per_side: Option<usize>,
    /// Ambient coordinates.
    #[arg(long)]
    out: PathBuf,
    /// Intrinsic coordinates, needed for analytic frames and exact solutions.
    #[arg(long)]
    params: Option<PathBuf>,
}

/// Point input shared by the operator stages.
#[derive(Args, Clone)]
struct PointsArgs {
    #[arg(long)]
    points: PathBuf,
    /// Intrinsic coordinates written by `sample --params`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Manifold the parameters belong to; required with `--params`.
    #[arg(long)]
    manifold: Option<ManifoldSpec>,
    /// Intrinsic dimension when no manifold is given.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FramesArg {
    Analytic,
    Estimated,
    EstimatedQuadratic,
    EstimatedCubic,
}

#[derive(Args, Clone)]
struct StencilArgs {
    #[arg(long, default_value_t = 21)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long, value_enum, default_value = "estimated")]
    frames: FramesArg,
    /// Tangent-estimation neighbors (default 2√N rounded to odd).
    #[arg(long)]
    k_p: Option<usize>,
    #[arg(long, default_value = "neighbor")]
    projection_at: ProjectionAt,
}

#[derive(Args)]
struct AssembleArgs {
    #[command(flatten)]
    pts: PointsArgs,
    #[command(flatten)]
    st: StencilArgs,
    /// Operator triplets `row,col,value`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilizeArgs {
    #[command(flatten)]
    pts: PointsArgs,
    #[command(flatten)]
    st: StencilArgs,
    /// Raw operator from `assemble`.
    #[arg(long)]
    operator: PathBuf,
    /// Pass flagged rows through as fallbacks instead of skipping them.
    #[arg(long, conflicts_with = "attempt_flagged")]
    force: bool,
    /// Also run the program on rows with w1 >= 0 (closed manifolds).
    #[arg(long)]
    attempt_flagged: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-row C report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Closed,
    Dirichlet,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    pts: PointsArgs,
    #[arg(long)]
    operator: PathBuf,
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Manufactured solution; defaults to the manifold's own.
    #[arg(long)]
    field: Option<FieldSpec>,
    /// Raw operator whose diagonal signs pick the Dirichlet rows (defaults to `--operator`).
    #[arg(long)]
    detector: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving records.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set 'n=[400,800]'`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// records.csv from `sweep`.
    records: PathBuf,
    /// Per-size summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.cmd {
        Cmd::Sample(a) => sample(a),
        Cmd::Assemble(a) => assemble(a),
        Cmd::Stabilize(a) => stabilize(a),
        Cmd::Solve(a) => solve(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn sample(a: SampleArgs) -> anyhow::Result<ExitCode> {
    let cloud = match a.boundary_per_side {
        Some(p) => sample_with_boundary(a.manifold, a.n, p, a.seed)?.0,
        None => sample_manifold(a.manifold, a.n, a.seed),
    };
    write_xyz(&a.out, &cloud)?;
    if let Some(p) = &a.params {
        let params = PointCloud {
            n: cloud.d,
            ambient: cloud.intrinsic.clone(),
            d: cloud.d,
            intrinsic: Vec::new(),
            spec: cloud.spec,
            seed: None,
        };
        write_xyz(p, &params)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_points(p: &PointsArgs) -> anyhow::Result<PointCloud> {
    match (&p.params, p.manifold) {
        (Some(path), Some(spec)) => {
            let d = spec.intrinsic_dim();
            let params = load_xyz(path, d).with_context(|| format!("reading {}", path.display()))?;
            if params.n != d {
                bail!("{} has {} columns, expected {d}", path.display(), params.n);
            }
            let cloud = cloud_from_params(spec, params.ambient)?;
            let given = load_xyz(&p.points, d)?;
            if given.len() != cloud.len() {
                bail!("points and params have different lengths");
            }
            Ok(PointCloud { ambient: given.ambient, n: given.n, ..cloud })
        }
        (Some(_), None) => bail!("--params needs --manifold"),
        (None, spec) => {
            let d = match (spec, p.dim) {
                (Some(s), _) => s.intrinsic_dim(),
                (None, Some(d)) => d,
                (None, None) => bail!("give --manifold or --dim"),
            };
            let mut cloud = load_xyz(&p.points, d)?;
            cloud.spec = spec;
            Ok(cloud)
        }
    }
}

struct Stencils {
    table: gfdm::NeighborTable,
    frames: Frames,
}

fn stencils(cloud: &PointCloud, st: &StencilArgs) -> anyhow::Result<Stencils> {
    let n = cloud.len();
    let k_p = st.k_p.unwrap_or_else(|| default_kp(n)).min(n);
    let frames_table = build_knn(cloud, st.k.max(k_p).min(n))?;
    let source = match st.frames {
        FramesArg::Analytic => FrameSource::Analytic,
        FramesArg::Estimated => FrameSource::Estimated,
        FramesArg::EstimatedQuadratic => FrameSource::EstimatedQuadratic,
        FramesArg::EstimatedCubic => FrameSource::EstimatedCubic,
    };
    let frames = frames_for(cloud, &frames_table, k_p, source)?;
    let table = frames_table.truncate(st.k)?;
    Ok(Stencils { table, frames })
}

fn assemble(a: AssembleArgs) -> anyhow::Result<ExitCode> {
    let cloud = load_points(&a.pts)?;
    let s = stencils(&cloud, &a.st)?;
    let basis = enumerate_multi_indices(a.st.degree, cloud.d)?;
    let asm = assemble_operator(&cloud, &s.table, &s.frames, &basis, a.st.projection_at)?;
    asm.operator.write_triplets(&a.out)?;
    let split = detect_interior(&asm.rows, &cloud)?;
    log::info!("{} rows, {} with w1 >= 0", cloud.len(), split.flagged.len());
    Ok(ExitCode::SUCCESS)
}

fn rows_of(op: &CsrMatrix) -> Vec<RowWeights> {
    (0..op.nrows)
        .map(|i| {
            let (c, v) = op.row(i);
            RowWeights::new(i, c.to_vec(), v.to_vec())
        })
        .collect()
}

fn stabilize(a: StabilizeArgs) -> anyhow::Result<ExitCode> {
    let cloud = load_points(&a.pts)?;
    let s = stencils(&cloud, &a.st)?;
    let raw = CsrMatrix::read_triplets(&a.operator)?;
    if raw.nrows != cloud.len() {
        bail!("operator has {} rows for {} points", raw.nrows, cloud.len());
    }
    let rows = rows_of(&raw);
    for r in &rows {
        if r.neighbors != s.table.row(r.base) {
            bail!("row {} does not match the K = {} neighbor table", r.base, a.st.k);
        }
    }
    let basis = enumerate_multi_indices(a.st.degree, cloud.d)?;
    let phi_of = |i: usize| basis_matrix(&StencilView::from_table(&cloud, &s.table, &s.frames, i), &basis);
    let policy = match (a.force, a.attempt_flagged) {
        (true, _) => FlaggedRows::PassThrough,
        (_, true) => FlaggedRows::Attempt,
        _ => FlaggedRows::Skip,
    };
    let (op, rep) = stabilize_operator_with(cloud.len(), &rows, phi_of, policy)?;
    op.write_triplets(&a.out)?;
    if let Some(p) = &a.report {
        rep.write_csv(p)?;
    }
    log::info!(
        "max C {:.3e}, {} rows with C > tol, {} fallbacks, {} skipped",
        rep.c_max(),
        rep.c_nonzero_rows(),
        rep.fallback_rows(),
        rep.skipped_rows()
    );
    Ok(ExitCode::SUCCESS)
}

fn solve(a: SolveArgs) -> anyhow::Result<ExitCode> {
    let cloud = load_points(&a.pts)?;
    let op = CsrMatrix::read_triplets(&a.operator)?;
    if op.nrows != cloud.len() || op.ncols != cloud.len() {
        bail!("operator is {}x{} for {} points", op.nrows, op.ncols, cloud.len());
    }
    let (spec, true) = (cloud.spec.context("solve needs --manifold and --params")?, cloud.has_intrinsic()) else {
        bail!("solve needs --params for the manufactured solution");
    };
    let field = a.field.unwrap_or(FieldSpec::default_for(spec));
    let mut u = Vec::with_capacity(cloud.len());
    let mut lap = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        u.push(field.value(spec, cloud.param(i))?);
        lap.push(analytic_laplacian(spec, field, cloud.param(i))?);
    }
    let sol = match a.problem {
        ProblemArg::Closed => {
            let f: Vec<f64> = u.iter().zip(&lap).map(|(u, l)| a.a * u - l).collect();
            solve_closed(&op, &vec![a.a; cloud.len()], &f)?
        }
        ProblemArg::Dirichlet => {
            let det = match &a.detector {
                Some(p) => CsrMatrix::read_triplets(p)?,
                None => op.clone(),
            };
            let split = detect_interior(&rows_of(&det), &cloud)?;
            log::info!("{} interior rows, {} flagged", split.interior.len(), split.flagged.len());
            solve_dirichlet(&op, &split.interior, &lap)?
        }
    };
    write_solution_csv(&a.out, &cloud, &sol.u, Some(&u))?;
    let ie = sol.u.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("IE {ie:.6e} residual {:.3e}", sol.residual);
    Ok(ExitCode::SUCCESS)
}

fn load_config(a: &SweepArgs) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
    for o in &a.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        let parsed: toml::Table = format!("v = {v}")
            .parse()
            .or_else(|_| format!("v = {:?}", v.trim()).parse())
            .with_context(|| format!("cannot parse value of `{k}`"))?;
        table.insert(k.trim().to_string(), parsed["v"].clone());
    }
    if let Some(s) = a.seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    Ok(ExperimentConfig::from_toml(&toml::to_string(&table)?)?)
}

fn sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(&a)?;
    let mut writer = match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(RecordWriter::create(&dir.join("records.csv"))?)
        }
        None => None,
    };
    let records = gfdm::harness::run_experiment_with(&cfg, |r| match writer.as_mut() {
        Some(w) => w.write(r),
        None => Ok(()),
    })?;
    if a.out.is_none() {
        let mut w = RecordWriter::new(std::io::stdout().lock())?;
        for r in &records {
            w.write(r)?;
        }
    }
    let failed: Vec<&RunRecord> = records.iter().filter(|r| !r.is_ok()).collect();
    if failed.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} of {} records failed:", failed.len(), records.len());
    for r in failed {
        eprintln!("  N={} trial={} degree={}: {}", r.n, r.trial, r.degree, r.status);
    }
    Ok(ExitCode::FAILURE)
}

type GroupKey = (String, usize, String);

fn report(a: ReportArgs) -> anyhow::Result<ExitCode> {
    let records = read_csv(&a.records)?;
    let mut groups: std::collections::BTreeMap<GroupKey, Vec<RunRecord>> = Default::default();
    for r in records {
        groups.entry((r.method.clone(), r.degree, r.variant.clone())).or_default().push(r);
    }
    let mut out = match &a.out {
        Some(p) => {
            let mut w = csv::Writer::from_path(p)?;
            w.write_record(["method", "degree", "variant", "metric", "n", "median", "mean", "std", "count"])?;
            Some(w)
        }
        None => None,
    };
    for ((method, degree, variant), recs) in &groups {
        println!("{method} l={degree} {variant}");
        for (name, metric) in [("fe", Metric::Fe), ("ie", Metric::Ie), ("inv_norm", Metric::InvNorm)] {
            let rows = summarize(recs, metric);
            if rows.is_empty() {
                continue;
            }
            let slope = match fit_slope(recs, metric) {
                Ok(f) => format!("{:.3} ({} sizes)", f.slope, f.used.len()),
                Err(e) => e.to_string(),
            };
            println!("  {name:<8} slope {slope}");
            for s in &rows {
                println!("    N={:<6} median {:.4e}  mean {:.4e}  std {:.2e}  n={}", s.n, s.median, s.mean, s.std, s.count);
                if let Some(w) = out.as_mut() {
                    w.write_record([
                        method.clone(),
                        degree.to_string(),
                        variant.clone(),
                        name.to_string(),
                        s.n.to_string(),
                        format!("{:.16e}", s.median),
                        format!("{:.16e}", s.mean),
                        format!("{:.16e}", s.std),
                        s.count.to_string(),
                    ])?;
                }
            }
        }
    }
    if let Some(mut w) = out {
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}
