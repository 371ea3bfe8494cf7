use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ergostein::bench::{
    self, export_trajectory, initial_particles, read_scenario, run_bench, BenchError, Profile, Scenario,
};
use ergostein::energy::{SceneObjective, Trajectory};
use ergostein::solvers::{solve, Method, SolveReport};
use ergostein::surface::Surface;

/// Ergodic surface-coverage trajectory optimization on SE(3).
#[derive(Parser, Debug)]
#[command(name = "ergostein", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Parameter profile applied before any --override.
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk, global = true)]
    profile: ProfileArg,
    /// Dotted-key assignment into the scenario, e.g. solver.step_size=0.05.
    /// Repeatable; applied in order after the profile.
    #[arg(short = 'O', long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for `plan`; for `bench`, restricts the run to this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Record zero wall time so that repeated runs give identical outputs.
    #[arg(long, global = true)]
    no_timing: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Spectral basis cache.
    #[arg(long, env = "ERGOSTEIN_CACHE_DIR", default_value = ".ergostein-cache", global = true)]
    cache_dir: PathBuf,
    /// Disable the basis cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// -v: per-run and per-iteration progress; -vv: debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one solver on one scenario and export the result.
    Plan {
        config: PathBuf,
        #[arg(long, short)]
        method: Method,
        /// Output directory (default: results/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured method and seed and write the comparison table.
    Bench {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Comma-separated method list replacing bench.methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, default_value = "results")]
        results: PathBuf,
        /// Output subdirectory (default: the scenario name).
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Export the coverage target before and after diffusion and the
    /// leading basis vectors.
    Spectral {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of basis vectors to export.
        #[arg(long, default_value_t = 10)]
        modes: usize,
    },
    /// Sample the signed distance field at the cloud and on a mid-height
    /// slice.
    Sdf {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Re-export the trajectory stored in a `plan` or `bench` JSON report.
    Export {
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        Failure::Config(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    std::fs::write(path, contents).map_err(io(path))
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if self.no_timing {
            o.push("solver.record_timing=false".into());
        }
        o
    }

    fn profile(&self) -> Profile {
        match self.profile {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }

    fn scenario(&self, path: &Path, extra: &[String]) -> Result<Scenario, Failure> {
        let mut o = self.overrides();
        o.extend_from_slice(extra);
        Ok(read_scenario(path, self.profile(), &o)?)
    }

    fn surface(&self, scenario: &Scenario) -> Result<Surface, Failure> {
        let cache = (!self.no_cache).then_some(self.cache_dir.as_path());
        Ok(scenario.build_surface(cache)?.0)
    }
}

fn default_out(scenario: &Scenario, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| Path::new("results").join(&scenario.name))
}

fn cmd_plan(c: &Common, config: &Path, method: Method, out: Option<PathBuf>) -> CmdResult {
    let scenario = c.scenario(config, &[])?;
    let surface = c.surface(&scenario)?;
    let out = default_out(&scenario, out);
    let seed = c.seed.unwrap_or(0);
    let stem = format!("{}_{}_{}", scenario.name, method.name(), seed);
    write(&out.join(format!("{stem}.toml")), &scenario.to_toml())?;
    let set = initial_particles(&scenario, &surface, seed).map_err(|e| Failure::Solver(e.to_string()))?;
    let objective = SceneObjective::new(&surface, scenario.weights);
    let report = solve(&objective, &set, &scenario.solver_config(method, seed)).map_err(|e| Failure::Solver(e.to_string()))?;
    write(&out.join(format!("{stem}.json")), &report.to_json())?;
    let traj = report.best_trajectory().map_err(|e| Failure::Solver(e.to_string()))?;
    export_trajectory(&traj, &surface, &out, &stem)?;
    let e = report.best_energy();
    println!(
        "{} {} seed {}: V = {:.4e} (V_s {:.3e}, V_a {:.3e}, V_f {:.3e}, V_e {:.3e}) after {} iterations, {:?}",
        scenario.name, method, seed, e.total, e.smooth, e.align, e.attach, e.ergodic, report.iterations, report.status
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_bench(
    c: &Common,
    configs: &[PathBuf],
    methods: Option<Vec<Method>>,
    results: &Path,
    run_id: Option<String>,
) -> CmdResult {
    let mut extra = Vec::new();
    if let Some(m) = methods {
        let names: Vec<String> = m.iter().map(|m| format!("\"{}\"", m.name())).collect();
        extra.push(format!("bench.methods=[{}]", names.join(", ")));
    }
    if let Some(s) = c.seed {
        extra.push(format!("bench.seeds=[{s}]"));
    }
    let mut runs = Vec::new();
    for path in configs {
        let scenario = c.scenario(path, &extra)?;
        let surface = c.surface(&scenario)?;
        log::info!(
            "{}: {} methods x {} seeds",
            scenario.name,
            scenario.bench.methods.len(),
            scenario.bench.seeds.len()
        );
        let run = run_bench(&scenario, &surface);
        runs.push((scenario, surface, run));
    }
    let run_id = run_id.unwrap_or_else(|| {
        runs.iter().map(|(s, _, _)| s.name.as_str()).collect::<Vec<_>>().join("+")
    });
    let dir = results.join(run_id);
    bench::write_outputs(&dir, &runs)?;
    let all: Vec<_> = runs.into_iter().map(|(_, _, r)| r).collect();
    print!("{}", bench::emit_table(&all).1);
    println!("wrote {}", dir.display());
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    csv::Writer::from_path(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Failure + '_ {
    move |e| Failure::Config(format!("{}: {e}", path.display()))
}

fn cmd_spectral(c: &Common, config: &Path, out: Option<PathBuf>, modes: usize) -> CmdResult {
    let scenario = c.scenario(config, &[])?;
    let surface = c.surface(&scenario)?;
    let out = default_out(&scenario, out);
    write(&out.join(format!("{}_spectral.toml", scenario.name)), &scenario.to_toml())?;
    let basis = surface.basis();
    let m = modes.min(basis.n_modes());
    let path = out.join(format!("{}_spectral.csv", scenario.name));
    let mut w = csv_writer(&path)?;
    let mut header: Vec<String> = ["node", "x", "y", "z", "phi_raw", "phi_diffused"].map(String::from).to_vec();
    header.extend((0..m).map(|k| format!("mode_{k}")));
    w.write_record(&header).map_err(csv_err(&path))?;
    for (n, p) in surface.cloud().points().iter().enumerate() {
        let mut rec = vec![n.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string()];
        rec.push(surface.cloud().roi()[n].to_string());
        rec.push(surface.target()[n].to_string());
        rec.extend((0..m).map(|k| basis.eigvecs[(n, k)].to_string()));
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io(&path))?;
    let path = out.join(format!("{}_eigvals.csv", scenario.name));
    let mut w = csv_writer(&path)?;
    w.write_record(["mode", "eigval", "weight"]).map_err(csv_err(&path))?;
    for k in 0..basis.n_modes() {
        w.write_record([k.to_string(), basis.eigvals[k].to_string(), basis.lambda_weights[k].to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io(&path))?;
    println!("wrote {} nodes x {m} modes to {}", surface.cloud().len(), out.display());
    Ok(())
}

fn cmd_sdf(c: &Common, config: &Path, out: Option<PathBuf>, resolution: usize) -> CmdResult {
    if resolution < 2 {
        return Err(Failure::Config("--resolution must be >= 2".into()));
    }
    let scenario = c.scenario(config, &[])?;
    let surface = c.surface(&scenario)?;
    let out = default_out(&scenario, out);
    let sdf = surface.sdf();
    let sample = |w: &mut csv::Writer<std::fs::File>, path: &Path, p: [f64; 3]| {
        let g = sdf.gradient(&p);
        let rec = [p[0], p[1], p[2], sdf.value(&p), g[0], g[1], g[2]].map(|v| v.to_string());
        w.write_record(&rec).map_err(csv_err(path))
    };
    let header = ["x", "y", "z", "value", "gx", "gy", "gz"];

    let path = out.join(format!("{}_sdf_nodes.csv", scenario.name));
    let mut w = csv_writer(&path)?;
    w.write_record(header).map_err(csv_err(&path))?;
    let mut worst: f64 = 0.0;
    for p in surface.cloud().points() {
        worst = worst.max(sdf.value(p).abs());
        sample(&mut w, &path, *p)?;
    }
    w.flush().map_err(io(&path))?;

    let pts = surface.cloud().points();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let pad = 0.1 * (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt();
    let z = 0.5 * (lo[2] + hi[2]);
    let path = out.join(format!("{}_sdf_slice.csv", scenario.name));
    let mut w = csv_writer(&path)?;
    w.write_record(header).map_err(csv_err(&path))?;
    let axis = |i: usize, k: usize| lo[i] - pad + (hi[i] - lo[i] + 2.0 * pad) * k as f64 / (resolution - 1) as f64;
    for a in 0..resolution {
        for b in 0..resolution {
            sample(&mut w, &path, [axis(0, a), axis(1, b), z])?;
        }
    }
    w.flush().map_err(io(&path))?;
    println!("max |sdf| over {} nodes: {worst:.3e}", pts.len());
    println!("wrote {}", out.display());
    Ok(())
}

/// Accepts a bare report (from `plan`) or a bench cell.
fn read_report(path: &Path) -> Result<SolveReport, Failure> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    if let Ok(r) = serde_json::from_str::<SolveReport>(&text) {
        return Ok(r);
    }
    let cell: bench::Cell =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: not a report: {e}", path.display())))?;
    match cell.outcome {
        bench::Outcome::Ok { report } => Ok(report),
        bench::Outcome::Failed { error } => Err(Failure::Solver(format!("{}: run failed: {error}", path.display()))),
    }
}

fn cmd_export(c: &Common, config: &Path, report: &Path, out: Option<PathBuf>) -> CmdResult {
    let scenario = c.scenario(config, &[])?;
    let surface = c.surface(&scenario)?;
    let rep = read_report(report)?;
    let traj = Trajectory::from_matrices(&rep.trajectory)
        .map_err(|e| Failure::Config(format!("{}: {e}", report.display())))?;
    let out = default_out(&scenario, out);
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "export".into());
    let (t, cl) = export_trajectory(&traj, &surface, &out, &stem)?;
    println!("wrote {} and {}", t.display(), cl.display());
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stdout)
        .format(|buf, record| writeln!(buf, "[{}] {}", record.level(), record.args()))
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.common.verbose);
    if let Some(n) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    let c = &cli.common;
    let result = match cli.command {
        Command::Plan { config, method, out } => cmd_plan(c, &config, method, out),
        Command::Bench {
            configs,
            methods,
            results,
            run_id,
        } => cmd_bench(c, &configs, methods, &results, run_id),
        Command::Spectral { config, out, modes } => cmd_spectral(c, &config, out, modes),
        Command::Sdf { config, out, resolution } => cmd_sdf(c, &config, out, resolution),
        Command::Export { config, report, out } => cmd_export(c, &config, &report, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failed: {m}");
            ExitCode::from(2)
        }
    }
}
