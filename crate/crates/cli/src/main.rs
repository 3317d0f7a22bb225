//! `closemic` command-line front end.
//!
//! Exit status: 0 success, 2 argument or configuration error, 3 I/O error,
//! 4 numerical or contract error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use closemic::campaign::{
    enumerate_conditions, export_grid, run_campaign, write_atomic, CampaignConfig, ExportFormat,
    GridRow, PreparedScene, RunOptions,
};
use closemic::metrics::db_sentinel;
use closemic::placement::{optimize_placement, SearchSpace};
use closemic::scene::{calibrated_capture, SourcePaths};
use closemic::wav::{read_wav, write_wav};
use closemic::{evaluate_pair, leq, Error, ErrorKind, Role, SceneFile, StftParams, Window};

#[derive(Parser)]
#[command(name = "closemic", version, about = "Close-miking SIR simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full recording campaign and export the SIR grid.
    Campaign(CampaignArgs),
    /// Compute the SIR of a (source-only, noise-only) WAV pair.
    Sir(SirArgs),
    /// Render the calibrated target-only and noise-only captures of a scene.
    Simulate(SimulateArgs),
    /// Search for the microphone distance and rotation with the best SIR.
    Optimize(OptimizeArgs),
}

#[derive(Args)]
struct StftArgs {
    /// STFT frame length [samples, power of two]
    #[arg(long, value_name = "SAMPLES")]
    frame: Option<usize>,
    /// STFT hop length [samples]
    #[arg(long, value_name = "SAMPLES")]
    hop: Option<usize>,
    /// STFT window (hann or rectangular)
    #[arg(long, value_name = "NAME")]
    window: Option<Window>,
}

impl StftArgs {
    /// Flags override `base` field by field.
    fn resolve(&self, base: StftParams) -> closemic::Result<StftParams> {
        StftParams::new(
            self.frame.unwrap_or(base.frame_length),
            self.hop.unwrap_or(base.hop_length),
            self.window.unwrap_or(base.window),
        )
    }
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign configuration file [JSON]; built-in defaults when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for grid.csv and grid.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Use the short signal duration from the config [s] instead of the full one
    #[arg(long)]
    fast: bool,
    /// Also write every source-only and noise-only capture to <out>/wav [16-bit PCM]
    #[arg(long)]
    dump_wav: bool,
}

#[derive(Args)]
struct SirArgs {
    /// Source-only recording [mono 16-bit PCM WAV]
    #[arg(long, value_name = "WAV")]
    source: PathBuf,
    /// Noise-only recording [mono 16-bit PCM WAV]
    #[arg(long, value_name = "WAV")]
    noise: PathBuf,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description [JSON]
    #[arg(long, value_name = "FILE")]
    scene: PathBuf,
    /// Output directory for target.wav, noise.wav and summary.json
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    stft: StftArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scene template [JSON]; the target is moved along its bearing
    #[arg(long, value_name = "FILE")]
    scene: PathBuf,
    /// Lower distance bound [m]
    #[arg(long, alias = "dist-min", value_name = "M")]
    dist_min_m: Option<f64>,
    /// Upper distance bound [m]
    #[arg(long, alias = "dist-max", value_name = "M")]
    dist_max_m: Option<f64>,
    /// Lower axis rotation bound [deg]
    #[arg(long, alias = "angle-min", value_name = "DEG")]
    angle_min_deg: Option<f64>,
    /// Upper axis rotation bound [deg]
    #[arg(long, alias = "angle-max", value_name = "DEG")]
    angle_max_deg: Option<f64>,
    /// Coarse grid as <distances>x<angles> [points]
    #[arg(long, value_name = "NxM", value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    /// Golden-section stopping bracket [m]
    #[arg(long, alias = "tol", value_name = "M")]
    tol_m: Option<f64>,
    #[command(flatten)]
    stft: StftArgs,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxM, got {s:?}"))?;
    let n = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let m = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((n, m))
}

fn create_dir(dir: &Path) -> closemic::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn campaign(args: &CampaignArgs) -> closemic::Result<()> {
    let config = match &args.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    config.validate()?;
    create_dir(&args.out)?;
    let dump_wav = if args.dump_wav {
        let dir = args.out.join("wav");
        create_dir(&dir)?;
        Some(dir)
    } else {
        None
    };
    let total = enumerate_conditions(&config).len();
    let done = AtomicUsize::new(0);
    let log = |row: &GridRow| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        let c = &row.condition;
        eprintln!(
            "[{k}/{total}] {} {}deg d={} m S={} dB N={} dB -> SIR {} dB",
            c.mic,
            c.angle_deg,
            c.distance_m,
            c.source_spl_db,
            c.noise_spl_db,
            db_sentinel::format(row.result.sir_db)
        );
    };
    let options = RunOptions {
        fast: args.fast,
        dump_wav,
    };
    let grid = run_campaign(&config, &options, &log)?;
    export_grid(&grid, ExportFormat::Csv, &args.out.join("grid.csv"))?;
    export_grid(&grid, ExportFormat::Json, &args.out.join("grid.json"))?;
    let summary = grid.summary();
    eprintln!(
        "wrote {} rows to {} ({} finite, {} infinite)",
        grid.rows.len(),
        args.out.display(),
        summary.finite,
        summary.infinite
    );
    Ok(())
}

fn sir(args: &SirArgs) -> closemic::Result<()> {
    let params = args.stft.resolve(StftParams::default())?;
    let source = read_wav(&args.source)?;
    let noise = read_wav(&args.noise)?;
    let result = evaluate_pair(&source, &noise, params)?;
    println!("{}", to_json(&result));
    Ok(())
}

fn load_scene(path: &Path) -> closemic::Result<closemic::SceneConfig> {
    let base_dir = path.parent().unwrap_or(Path::new("."));
    SceneFile::load(path)?.build(base_dir)
}

fn simulate(args: &SimulateArgs) -> closemic::Result<()> {
    let params = args.stft.resolve(StftParams::default())?;
    let scene = load_scene(&args.scene)?;
    let mut captures = Vec::new();
    for role in [Role::Target, Role::Noise] {
        let paths = SourcePaths::prepare(&scene, role)?;
        captures.push(calibrated_capture(&scene, role, &paths)?);
    }
    let (target, noise) = (&captures[0], &captures[1]);
    let result = evaluate_pair(&target.capture, &noise.capture, params)?;

    create_dir(&args.out)?;
    write_wav(&args.out.join("target.wav"), &target.capture)?;
    write_wav(&args.out.join("noise.wav"), &noise.capture)?;
    let summary = serde_json::json!({
        "sir": result,
        "target": {
            "gain": target.gain,
            "metered_leq_db": target.metered_leq_db,
            "captured_leq_db": db_sentinel::format(leq(&target.capture, scene.mapping)?),
            "distance_m": scene.distance_m(Role::Target),
            "incidence_deg": scene.incidence_deg(Role::Target),
        },
        "noise": {
            "gain": noise.gain,
            "metered_leq_db": noise.metered_leq_db,
            "captured_leq_db": db_sentinel::format(leq(&noise.capture, scene.mapping)?),
            "distance_m": scene.distance_m(Role::Noise),
            "incidence_deg": scene.incidence_deg(Role::Noise),
        },
    });
    let text = to_json(&summary);
    write_atomic(&args.out.join("summary.json"), text.as_bytes())?;
    println!("{text}");
    Ok(())
}

fn optimize(args: &OptimizeArgs) -> closemic::Result<()> {
    let params = args.stft.resolve(StftParams::default())?;
    let defaults = SearchSpace::default();
    let (n_distance, n_angle) = args.grid.unwrap_or((defaults.n_distance, defaults.n_angle));
    let space = SearchSpace {
        distance_bounds_m: [
            args.dist_min_m.unwrap_or(defaults.distance_bounds_m[0]),
            args.dist_max_m.unwrap_or(defaults.distance_bounds_m[1]),
        ],
        angle_bounds_deg: [
            args.angle_min_deg.unwrap_or(defaults.angle_bounds_deg[0]),
            args.angle_max_deg.unwrap_or(defaults.angle_bounds_deg[1]),
        ],
        n_distance,
        n_angle,
        refine_tolerance_m: args.tol_m.unwrap_or(defaults.refine_tolerance_m),
    };
    space.validate()?;
    let template = load_scene(&args.scene)?;
    // Fail on an unusable template before the search starts.
    PreparedScene::new(template.clone())?;
    let result = optimize_placement(&template, &space, params)?;
    println!("{}", to_json(&result));
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 2,
        ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Campaign(a) => campaign(a),
        Command::Sir(a) => sir(a),
        Command::Simulate(a) => simulate(a),
        Command::Optimize(a) => optimize(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
