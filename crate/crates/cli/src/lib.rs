//! Command-line front end for the link and system simulators.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use noma_otfs::channel::ChannelMatrix;
use noma_otfs::config::{LinkScenario, ScenarioConfig};
use noma_otfs::downlink::row_scalars_dl;
use noma_otfs::fec::Modulation;
use noma_otfs::grid::{ModulationMatrix, Waveform};
use noma_otfs::link::{db_to_linear, run_dl_link, run_ul_link, Direction, LinkOutcome};
use noma_otfs::power::{
    fpa, ftpa_avg_snr, ftpa_channel_norm, wsrm_avg_snr, wsrm_instantaneous, InstSinrScalars, Scheme, WsrmWeights,
};
use noma_otfs::report::{schema_line, write_file};
use noma_otfs::rng::rng_from;
use noma_otfs::system::{run_system_mc, summarize_groups, summary_table, write_system_outputs};
use noma_otfs::{Error, PowerSplit};

mod validate;

pub use validate::{validation_suite, Check};

#[derive(Parser, Debug)]
#[command(name = "noma-otfs", version, about = "Two-user NOMA over OTFS and OFDM: link and system simulators")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop-based sum spectral efficiency: mean, 5% outage, CDFs.
    SystemSe(SystemArgs),
    /// Coded BLER, throughput and goodput with codeword-level SIC.
    LinkBler(LinkArgs),
    /// Print the power split a scheme chooses.
    PowerAlloc(PowerArgs),
    /// Run the built-in invariant checks.
    Validate,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Average SNRs in dB, weakest user first.
    #[arg(long, num_args = 1.., value_name = "DB")]
    snr_db: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_direction)]
    direction: Option<Direction>,
}

#[derive(Args, Debug)]
struct SystemArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    drops: Option<usize>,
    /// Restrict to these waveforms.
    #[arg(long, value_parser = parse_waveform)]
    waveform: Vec<Waveform>,
    /// Restrict to these schemes.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Vec<Scheme>,
}

#[derive(Args, Debug)]
struct LinkArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, value_parser = parse_waveform)]
    waveform: Option<Waveform>,
    /// Constellations for user 1 and user 2 (`qpsk`, `qam16`, `qam64`).
    #[arg(long, num_args = 2, value_parser = parse_modulation)]
    modulations: Option<Vec<Modulation>>,
    /// Downlink power fractions.
    #[arg(long, num_args = 2)]
    power_split: Option<Vec<f64>>,
    /// Cancel the transmitted symbols instead of the decoded ones.
    #[arg(long)]
    genie: bool,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long, value_parser = parse_scheme)]
    scheme: Scheme,
    #[arg(long, num_args = 1.., value_name = "DB", default_values_t = vec![15.0, 25.0])]
    snr_db: Vec<f64>,
    /// Fractions for `fixed`.
    #[arg(long, num_args = 1..)]
    fractions: Option<Vec<f64>>,
    #[arg(long, num_args = 2, default_values_t = vec![0.6, 0.4])]
    weights: Vec<f64>,
    /// Seed of the channel draw used by channel-aware schemes.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_waveform(s: &str) -> Result<Waveform, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_modulation(s: &str) -> Result<Modulation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "downlink" | "dl" => Ok(Direction::Downlink),
        "uplink" | "ul" => Ok(Direction::Uplink),
        other => Err(format!("unknown direction `{other}`")),
    }
}

fn load(path: &Option<PathBuf>) -> noma_otfs::Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::from_file(p),
        None => Ok(ScenarioConfig::default()),
    }
}

/// Run the CLI on `argv` (program name first) and return the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let result = match cli.command {
        Command::SystemSe(a) => system_se(a),
        Command::LinkBler(a) => link_bler(a),
        Command::PowerAlloc(a) => power_alloc(a),
        Command::Validate => validate(),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Ordering(_) | Error::Parse(_) | Error::Validation(_) => 2,
                _ => 1,
            }
        }
    }
}

fn system_se(a: SystemArgs) -> noma_otfs::Result<String> {
    let scenario = load(&a.common.config)?;
    let mut cfg = scenario.system;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.drops {
        cfg.drops = d;
    }
    if let Some(d) = a.common.direction {
        cfg.direction = d;
    }
    if let Some(v) = a.common.snr_db {
        cfg.snrs = v.into_iter().map(db_to_linear).collect();
    }
    if !a.waveform.is_empty() {
        cfg.waveforms = a.waveform;
    }
    if !a.scheme.is_empty() {
        cfg.schemes = a.scheme;
    }
    let out = a.common.out.unwrap_or(scenario.output_dir);
    let samples = run_system_mc(&cfg)?;
    let written = write_system_outputs(&out, &samples)?;
    let mut text = summary_table(&summarize_groups(&samples)?);
    for p in written.iter().take(2) {
        let _ = writeln!(text, "wrote {}", p.display());
    }
    Ok(text)
}

fn link_bler(a: LinkArgs) -> noma_otfs::Result<String> {
    let scenario = load(&a.common.config)?;
    let mut links = scenario.links;
    if links.is_empty() {
        // One scenario assembled from the defaults and the flags.
        let base = ScenarioConfig::from_toml_str("[[link]]\nname = \"cli\"\n")?;
        let mut l = base.links.into_iter().next().ok_or_else(|| Error::Config("no link scenario".into()))?;
        l.config.grid = scenario.system.grid.clone();
        l.config.channel = scenario.system.channel.clone();
        links.push(l);
    }
    for LinkScenario { config, seed } in &mut links {
        if let Some(s) = a.common.seed {
            *seed = s;
        }
        if let Some(f) = a.frames {
            config.frames = f;
        }
        if let Some(w) = a.waveform {
            config.grid.waveform = w;
        }
        if let Some(d) = a.common.direction {
            config.direction = d;
        }
        if let Some(v) = &a.common.snr_db {
            let [g1, g2] = <[f64; 2]>::try_from(v.as_slice())
                .map_err(|_| Error::Config(format!("`--snr-db` needs two values, got {}", v.len())))?;
            config.snrs = [db_to_linear(g1), db_to_linear(g2)];
        }
        if let Some(p) = &a.power_split {
            config.fractions = [p[0], p[1]];
        }
        if let Some(m) = &a.modulations {
            config.modulations = [m[0], m[1]];
        }
        config.genie_sic |= a.genie;
    }
    let mut csv = schema_line("link-bler");
    csv.push_str(LinkOutcome::csv_header());
    csv.push('\n');
    let mut text = String::new();
    for LinkScenario { config, seed } in &links {
        let o = match config.direction {
            Direction::Downlink => run_dl_link(config, *seed)?,
            Direction::Uplink => run_ul_link(config, *seed)?,
        };
        csv.push_str(&o.csv_rows());
        let _ = writeln!(
            text,
            "{} ({}, {}): BLER {:.3e} / {:.3e}, throughput {:.3}, goodput {:.3} bps/Hz over {} frames",
            o.name,
            config.direction.as_str(),
            config.grid.waveform,
            o.users[0].bler,
            o.users[1].bler,
            o.throughput,
            o.goodput,
            o.frames
        );
    }
    let out = a.common.out.unwrap_or(scenario.output_dir);
    let path = out.join("link_bler.csv");
    write_file(&path, &csv)?;
    let _ = writeln!(text, "wrote {}", path.display());
    Ok(text)
}

fn power_alloc(a: PowerArgs) -> noma_otfs::Result<String> {
    let scenario = load(&a.config)?;
    let snrs: Vec<f64> = a.snr_db.iter().copied().map(db_to_linear).collect();
    let w = WsrmWeights::new(a.weights[0], a.weights[1])?;
    let grid = scenario.system.grid.clone();
    let channel = &scenario.system.channel;
    let draw = |u: u64| -> noma_otfs::Result<ChannelMatrix> {
        // Same draw as drop 0 of `system-se` under this seed.
        let p = channel.sample(&grid, &mut rng_from(a.seed, &[0, 2, u]));
        ChannelMatrix::from_paths(grid.size(), &p.paths)
    };
    let two = || -> noma_otfs::Result<(f64, f64)> {
        match snrs.as_slice() {
            [g1, g2] => Ok((*g1, *g2)),
            _ => Err(Error::Config(format!("`--snr-db`: `{}` needs two users", a.scheme))),
        }
    };
    let split: PowerSplit = match a.scheme {
        Scheme::Oma => return Ok("oma: orthogonal halves, each user at full power\n".into()),
        Scheme::Fixed => {
            let f = a.fractions.clone().unwrap_or_else(|| vec![0.7, 0.3]);
            fpa(&f, 1.0)?
        }
        Scheme::FtpaAvgSnr => ftpa_avg_snr(&snrs, 1.0)?,
        Scheme::FtpaChannelNorm => {
            let hs: Vec<ChannelMatrix> = (0..snrs.len() as u64).map(draw).collect::<noma_otfs::Result<_>>()?;
            ftpa_channel_norm(&hs.iter().collect::<Vec<_>>(), 1.0)?
        }
        Scheme::WsrmAvgSnr => {
            let (g1, g2) = two()?;
            wsrm_avg_snr(w, g1, g2, 1.0)?
        }
        Scheme::WsrmInst => {
            let (g1, g2) = two()?;
            let am = ModulationMatrix::new(grid.m(), grid.n(), Waveform::Otfs)?;
            let (h1, h2) = (draw(0)?, draw(1)?);
            let r1 = row_scalars_dl(&h1, &am, g1)?;
            let r2 = row_scalars_dl(&h2, &am, g2)?;
            wsrm_instantaneous(w, &InstSinrScalars::averaged(&r1, &r2, 1.0, 1.0 / g1, 1.0 / g2), 1.0)?
        }
    };
    let parts: Vec<String> = split.fractions.iter().map(|b| format!("{b:.6}")).collect();
    Ok(format!("{}: beta = ({})\n", a.scheme, parts.join(", ")))
}

fn validate() -> noma_otfs::Result<String> {
    let checks = validation_suite();
    let mut text = String::new();
    for c in &checks {
        let _ = writeln!(text, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        print!("{text}");
        return Err(Error::Validation(format!("{failed} of {} checks failed", checks.len())));
    }
    let _ = writeln!(text, "all {} checks passed", checks.len());
    Ok(text)
}
