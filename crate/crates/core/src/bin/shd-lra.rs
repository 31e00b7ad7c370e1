use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shd_lra::audio::{read_wav, write_wav};
use shd_lra::config::{load_toml, AnalysisConfig, SceneConfig, SweepConfig};
use shd_lra::experiments::report::write_report;
use shd_lra::experiments::{run_sweep, simulate_scene};
use shd_lra::mdp::MdpDictionary;
use shd_lra::pipeline::{write_block_csv, Localizer, Method};
use shd_lra::{ArrayGeometry, Error, Result};

/// SHD-LRA sound source localization for spherical microphone arrays.
#[derive(Parser, Debug)]
#[command(name = "shd-lra", version)]
struct Cli {
    /// Directory for default output files.
    #[arg(long, global = true, env = "SHDLRA_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a dictionary of modal directional patterns and save it.
    Dict(DictArgs),
    /// Render one scene to a multichannel WAV file with a truth sidecar CSV.
    Simulate(SimulateArgs),
    /// Estimate one DOA per block of a multichannel WAV file.
    Localize(LocalizeArgs),
    /// Run a T60 x SNR sweep and write trial, summary and chart files.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct DictArgs {
    #[arg(long, default_value_t = 3.0)]
    elev_step_deg: f64,
    #[arg(long, default_value_t = 2.0)]
    azim_step_deg: f64,
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// SH convention tag.
    #[arg(long, default_value = "complex-orthonormal-acn-nocs")]
    convention: String,
    /// Cache file (default: <out-dir>/dictionary.mdp).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scene TOML file; flags override its values.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    t60_s: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    theta_deg: Option<f64>,
    #[arg(long)]
    phi_deg: Option<f64>,
    #[arg(long)]
    distance_m: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
    /// `speech_noise` or a mono WAV file.
    #[arg(long)]
    signal: Option<String>,
    /// `builtin:rigid32` or a geometry TOML file.
    #[arg(long)]
    geometry: Option<String>,
    /// WAV file (default: <out-dir>/scene.wav).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    /// Multichannel WAV file, one channel per capsule.
    input: PathBuf,
    /// Analysis TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "builtin:rigid32")]
    geometry: String,
    /// Dictionary cache from `dict`; built from the grid flags when absent.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    elev_step_deg: Option<f64>,
    #[arg(long)]
    azim_step_deg: Option<f64>,
    #[arg(long)]
    block_s: Option<f64>,
    /// shd-lra or shd-music; repeat or separate by commas for several.
    #[arg(long = "method", value_delimiter = ',', default_value = "shd-lra")]
    methods: Vec<String>,
    /// CSV file (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep TOML file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Upper bound on parallel scene workers (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Random scenes per (T60, SNR) cell.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated T60 values in seconds.
    #[arg(long, value_delimiter = ',')]
    t60_s: Option<Vec<f64>>,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',')]
    snr_db: Option<Vec<f64>>,
    /// Comma-separated: shd-lra, shd-music.
    #[arg(long = "method", value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    duration_s: Option<f64>,
    /// Dictionary cache; built from the analysis grid when absent.
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("E_CONFIG: {line}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("{}: {}", class.tag(), e.to_string().replace('\n', " "));
            ExitCode::from(class.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Dict(a) => cmd_dict(&cli.out_dir, a),
        Command::Simulate(a) => cmd_simulate(&cli.out_dir, a),
        Command::Localize(a) => cmd_localize(a),
        Command::Sweep(a) => cmd_sweep(&cli.out_dir, a),
    }
}

fn convention(tag: &str) -> Result<shd_lra::Convention> {
    shd_lra::Convention::from_tag(tag).ok_or_else(|| Error::Config(format!("unknown SH convention {tag:?}")))
}

fn cmd_dict(out_dir: &Path, a: &DictArgs) -> Result<()> {
    let grid = shd_lra::GridSpec::new(a.elev_step_deg, a.azim_step_deg)?;
    let dict = MdpDictionary::build(grid, a.order, convention(&a.convention)?)?;
    let path = a.output.clone().unwrap_or_else(|| out_dir.join("dictionary.mdp"));
    ensure_parent(&path)?;
    dict.save(&path)?;
    println!("entries: {}", dict.len());
    println!("checksum: {}", dict.checksum());
    println!("written: {}", path.display());
    Ok(())
}

fn cmd_simulate(out_dir: &Path, a: &SimulateArgs) -> Result<()> {
    let mut cfg: SceneConfig = match &a.scene {
        Some(p) => load_toml(p)?,
        None => SceneConfig::default(),
    };
    if let Some(v) = a.t60_s {
        cfg.t60_s = v;
    }
    if a.snr_db.is_some() {
        cfg.snr_db = a.snr_db;
    }
    if a.theta_deg.is_some() {
        cfg.source_theta_deg = a.theta_deg;
    }
    if a.phi_deg.is_some() {
        cfg.source_phi_deg = a.phi_deg;
    }
    if let Some(v) = a.distance_m {
        cfg.source_distance_m = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.duration_s {
        cfg.duration_s = v;
    }
    if let Some(v) = &a.signal {
        cfg.signal = v.clone();
    }
    if let Some(v) = &a.geometry {
        cfg.geometry = v.clone();
    }
    let scene = simulate_scene(&cfg)?;
    let path = a.output.clone().unwrap_or_else(|| out_dir.join("scene.wav"));
    ensure_parent(&path)?;
    write_wav(&path, &scene.signal)?;
    let truth_path = path.with_extension("truth.csv");
    let mut w = csv::Writer::from_path(&truth_path)?;
    w.write_record(["theta_deg", "phi_deg", "t60_s", "snr_db", "seed", "sample_rate_hz", "samples"])?;
    w.write_record([
        format!("{:.6}", scene.truth.theta_deg()),
        format!("{:.6}", scene.truth.phi_deg()),
        cfg.t60_s.to_string(),
        cfg.snr_db.map(|s| s.to_string()).unwrap_or_default(),
        cfg.seed.to_string(),
        cfg.sample_rate_hz.to_string(),
        scene.signal.len().to_string(),
    ])?;
    w.flush()?;
    println!("written: {}", path.display());
    println!("truth: {}", truth_path.display());
    Ok(())
}

fn cmd_localize(a: &LocalizeArgs) -> Result<()> {
    let methods: Vec<Method> = a.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let mut cfg: AnalysisConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => AnalysisConfig::default(),
    };
    if let Some(v) = a.order {
        cfg.order = v;
    }
    if let Some(v) = a.elev_step_deg {
        cfg.elev_step_deg = v;
    }
    if let Some(v) = a.azim_step_deg {
        cfg.azim_step_deg = v;
    }
    if let Some(v) = a.block_s {
        cfg.block_s = v;
    }
    let settings = cfg.settings()?;
    let geometry = ArrayGeometry::resolve(&a.geometry)?;
    let dict = load_or_build_dictionary(a.dictionary.as_deref(), &cfg)?;
    let localizer = Localizer::new(geometry, dict, settings)?;
    let signal = read_wav(&a.input)?;
    let rows = localizer.localize_signal(&signal, &methods)?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{} is shorter than one analysis frame", a.input.display())));
    }
    match &a.output {
        Some(p) => {
            ensure_parent(p)?;
            write_block_csv(std::fs::File::create(p)?, &rows)
        }
        None => write_block_csv(std::io::stdout().lock(), &rows),
    }
}

fn cmd_sweep(out_dir: &Path, a: &SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => SweepConfig::default(),
    };
    if let Some(v) = a.runs {
        cfg.runs = v;
    }
    if let Some(v) = a.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = &a.t60_s {
        cfg.t60_s = v.clone();
    }
    if let Some(v) = &a.snr_db {
        cfg.snr_db = v.clone();
    }
    if let Some(v) = &a.methods {
        cfg.methods = v.clone();
    }
    if let Some(v) = a.duration_s {
        cfg.duration_s = v;
    }
    if a.jobs == Some(0) {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    cfg.validate()?;
    let dict = load_or_build_dictionary(a.dictionary.as_deref(), &cfg.analysis)?;
    let report = run_sweep(&cfg, dict, a.jobs)?;
    for f in &report.failures {
        eprintln!("warning: scene T60 = {} s, SNR = {} dB, run {} failed: {}", f.t60_s, f.snr_db, f.run, f.message);
    }
    for path in write_report(out_dir, &report)? {
        println!("written: {}", path.display());
    }
    if report.trials.is_empty() {
        return Err(Error::Numeric("every scene of the sweep failed".into()));
    }
    Ok(())
}

fn load_or_build_dictionary(path: Option<&Path>, cfg: &AnalysisConfig) -> Result<MdpDictionary> {
    match path {
        Some(p) => MdpDictionary::load(p, cfg.convention()?),
        None => MdpDictionary::build(cfg.grid()?, cfg.order, cfg.convention()?),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}
