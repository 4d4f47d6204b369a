use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use seaguard::guidance::PolicyKind;
use seaguard::perception::{
    fit_ellipse_mlr, fit_ellipse_stable, read_point_groups, write_fit_dump, write_points,
    EllipseParams, PointCluster, PointGroups,
};
use seaguard::rng::{stream_rng, Stream};
use seaguard::sim::{
    emit_plots, generate_random_scenario, load_scenario, run_batch, run_episode, BatchAggregate,
    Difficulty, EpisodeOptions, EpisodeSummary, ObstacleInfoMode,
};
use seaguard::{Error, Result};

/// Environment variable overriding the default output directory.
const OUT_DIR_ENV: &str = "SEAGUARD_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "seaguard-out";

#[derive(Parser)]
#[command(
    name = "seaguard",
    version,
    about = "Vessel tracking and safety filter simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace, summary and plot tables.
    Run(RunArgs),
    /// Run generated scenarios over a seed range and print the totals.
    Batch(BatchArgs),
    /// Fit ellipses to labelled point groups.
    FitDemo(FitArgs),
    /// Check a scenario file and print its canonical form.
    Validate { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    LosFollow,
    ConstantAhead,
    Random,
    Adversarial,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::LosFollow => PolicyKind::LosFollow,
            PolicyArg::ConstantAhead => PolicyKind::ConstantAhead,
            PolicyArg::Random => PolicyKind::Random,
            PolicyArg::Adversarial => PolicyKind::AdversarialTowardNearestObstacle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InfoModeArg {
    Tracked,
    GroundTruth,
    None,
}

impl From<InfoModeArg> for ObstacleInfoMode {
    fn from(m: InfoModeArg) -> Self {
        match m {
            InfoModeArg::Tracked => ObstacleInfoMode::Tracked,
            InfoModeArg::GroundTruth => ObstacleInfoMode::GroundTruth,
            InfoModeArg::None => ObstacleInfoMode::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Static,
    Crossing,
    HeadOn,
    Mixed,
}

impl From<DifficultyArg> for Difficulty {
    fn from(d: DifficultyArg) -> Self {
        match d {
            DifficultyArg::Static => Difficulty::Static,
            DifficultyArg::Crossing => Difficulty::Crossing,
            DifficultyArg::HeadOn => Difficulty::HeadOn,
            DifficultyArg::Mixed => Difficulty::Mixed,
        }
    }
}

#[derive(Args)]
struct EpisodeFlags {
    /// Enable the safety filter (default).
    #[arg(long, overrides_with = "no_psf")]
    psf: bool,
    /// Disable the safety filter.
    #[arg(long)]
    no_psf: bool,
    #[arg(long, value_enum, default_value = "los-follow")]
    policy: PolicyArg,
    /// Obstacle information given to the filter.
    #[arg(long, value_enum, default_value = "tracked")]
    info_mode: InfoModeArg,
}

impl EpisodeFlags {
    fn options(&self) -> EpisodeOptions {
        EpisodeOptions {
            policy: self.policy.into(),
            psf_enabled: !self.no_psf,
            info_mode: self.info_mode.into(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(conflicts_with = "random", required_unless_present = "random")]
    scenario: Option<PathBuf>,
    /// Generate a scenario from this seed instead of reading a file.
    #[arg(long)]
    random: Option<u64>,
    #[arg(long, value_enum, default_value = "mixed")]
    difficulty: DifficultyArg,
    #[command(flatten)]
    flags: EpisodeFlags,
    /// Output directory [default: $SEAGUARD_OUT_DIR or ./seaguard-out].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    /// Half-open seed range, e.g. 0..200.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Range<u64>,
    #[arg(long, value_enum, default_value = "mixed")]
    difficulty: DifficultyArg,
    #[command(flatten)]
    flags: EpisodeFlags,
    /// Also write per-episode and aggregate CSV tables here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Point file with `label,x,y` rows.
    #[arg(conflicts_with = "synthetic", required_unless_present = "synthetic")]
    points: Option<PathBuf>,
    /// Generate noisy full-ellipse and arc point groups from this seed.
    #[arg(long)]
    synthetic: Option<u64>,
    /// Noise standard deviation for synthetic points [m].
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Directory for the point and fit tables; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> std::result::Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    let a: u64 = a
        .trim()
        .parse()
        .map_err(|_| format!("invalid start '{a}'"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("invalid end '{b}'"))?;
    if b <= a {
        return Err("empty seed range".into());
    }
    Ok(a..b)
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serialisable")
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = match (&args.scenario, args.random) {
        (Some(path), _) => load_scenario(path)?,
        (None, Some(seed)) => generate_random_scenario(seed, args.difficulty.into()),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let (trace, summary) = run_episode(&scenario, &args.flags.options())?;
    let dir = out_dir(args.out);
    create_dir(&dir)?;
    write(&dir.join("scenario.toml"), scenario.to_toml_string())?;
    write(&dir.join("trace.jsonl"), trace.to_jsonl())?;
    write(&dir.join("summary.json"), to_json(&summary) + "\n")?;
    emit_plots(&trace, &dir)?;
    println!("{}", to_json(&summary));
    Ok(())
}

fn batch(args: BatchArgs) -> Result<()> {
    let rows = run_batch(args.seeds, args.difficulty.into(), &args.flags.options())?;
    let agg = BatchAggregate::from_summaries(&rows);
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        let mut table = format!("{}\n", EpisodeSummary::CSV_HEADER);
        for r in &rows {
            table.push_str(&r.csv_row());
            table.push('\n');
        }
        write(&dir.join("episodes.csv"), table)?;
        write(
            &dir.join("aggregate.csv"),
            format!("{}\n{}\n", BatchAggregate::CSV_HEADER, agg.csv_row()),
        )?;
    }
    println!("{}", BatchAggregate::CSV_HEADER);
    println!("{}", agg.csv_row());
    Ok(())
}

fn synthetic_groups(seed: u64, noise: f64) -> Result<PointGroups> {
    let mut rng = stream_rng(seed, Stream::Test);
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::Validation {
        field: "noise".into(),
        message: e.to_string(),
    })?;
    let center = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
    let major = rng.random_range(3.0..8.0);
    let minor = major * rng.random_range(0.4..0.9);
    let truth = EllipseParams::from_geometry(center, [major, minor], rng.random_range(-1.5..1.5))?;
    let mut sample = |from: f64, to: f64, count: usize| -> Vec<[f64; 2]> {
        (0..count)
            .map(|i| {
                let p = truth.point_at(from + (to - from) * i as f64 / count as f64);
                [
                    p[0] + normal.sample(&mut rng),
                    p[1] + normal.sample(&mut rng),
                ]
            })
            .collect()
    };
    let full = sample(0.0, std::f64::consts::TAU, 100);
    let arc = sample(0.0, std::f64::consts::FRAC_PI_2, 30);
    Ok(vec![("full".into(), full), ("arc".into(), arc)])
}

fn fit_demo(args: FitArgs) -> Result<()> {
    let groups = match (&args.points, args.synthetic) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            read_point_groups(&text, path)?
        }
        (None, Some(seed)) => synthetic_groups(seed, args.noise)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let mut rows = Vec::new();
    for (label, points) in &groups {
        let cluster = PointCluster::new(points.clone(), 0.0);
        rows.push((label.clone(), "stable", fit_ellipse_stable(&cluster)));
        rows.push((label.clone(), "mlr", fit_ellipse_mlr(&cluster)));
    }
    let dump = write_fit_dump(&rows);
    match args.out {
        Some(dir) => {
            create_dir(&dir)?;
            write(&dir.join("points.csv"), write_points(&groups))?;
            write(&dir.join("fits.csv"), dump)?;
        }
        None => print!("{dump}"),
    }
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let scenario = load_scenario(path)?;
    print!("{}", scenario.to_toml_string());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Batch(a) => batch(a),
        Command::FitDemo(a) => fit_demo(a),
        Command::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            let report =
                serde_json::json!({ "error": category.as_str(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
