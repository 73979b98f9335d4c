//! Command-line front end.
//!
//! Settings are resolved from, lowest to highest precedence: built-in
//! defaults, the `THREADS` environment variable, `--config FILE`,
//! `--set key=value`, and the per-key flags (`--plane-depth 30`).
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 input or format
//! error, 4 numeric failure that aborted the run.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use crate::error::Error;
use config::{flag_name, Layers, RunConfig, KEYS, THREADS_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// A failed stage, with the frame pair it was working on if any.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub pair: Option<u64>,
    pub error: Error,
}

impl Failure {
    pub fn new(stage: &'static str, error: Error) -> Self {
        Self {
            stage,
            pair: None,
            error,
        }
    }

    pub fn at_pair(mut self, pair: u64) -> Self {
        self.pair = Some(pair);
        self
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(&self.error)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed", self.stage)?;
        if let Some(p) = self.pair {
            write!(f, " at frame {p}")?;
        }
        write!(f, ": {}", self.error)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Scene(_) => EXIT_USAGE,
        Error::DegenerateGeometry { .. } | Error::NoAlignment { .. } => EXIT_NUMERIC,
        Error::FrameTooSmall { .. }
        | Error::DimensionMismatch { .. }
        | Error::NoValidPixels { .. }
        | Error::Format { .. }
        | Error::Malformed(_)
        | Error::ModeMismatch { .. }
        | Error::Io(_) => EXIT_INPUT,
    }
}

fn out_arg() -> Arg {
    Arg::new("out")
        .short('o')
        .long("out")
        .required(true)
        .value_parser(value_parser!(PathBuf))
}

fn input(name: &'static str) -> Arg {
    Arg::new(name).required(true).value_parser(value_parser!(PathBuf))
}

pub fn command() -> Command {
    let mut cmd = Command::new("loomflow")
        .about("Moving-object detection from the optical flow of a translating camera")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .value_parser(value_parser!(PathBuf))
                .help("key=value settings file"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .global(true)
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("set any key, including sprite.N.field"),
        );
    for (key, help) in KEYS {
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .global(true)
                .value_name("VALUE")
                .help(*help),
        );
    }
    cmd.subcommand(
        Command::new("sim")
            .about("Render a synthetic scene to a frame directory")
            .arg(out_arg())
            .arg(
                Arg::new("truth")
                    .long("truth")
                    .action(ArgAction::SetTrue)
                    .help("also write exact flow and moving-object masks to OUT/truth"),
            ),
    )
    .subcommand(
        Command::new("flow")
            .about("Dense flow between two PGM frames")
            .arg(input("frame1"))
            .arg(input("frame2"))
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("transform")
            .about("Looming ratio map of a .flo field")
            .arg(input("flow"))
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("foe")
            .about("Print `x0 y0 rms_residual condition` for a .flo field")
            .arg(input("flow")),
    )
    .subcommand(
        Command::new("detect")
            .about("Moving-object mask of a .flo field")
            .arg(input("flow"))
            .arg(out_arg())
            .arg(
                Arg::new("foe")
                    .long("foe")
                    .value_name("X0,Y0")
                    .help("use this FoE instead of estimating it"),
            ),
    )
    .subcommand(
        Command::new("viz")
            .about("Render a looming map as a PPM image")
            .arg(input("map"))
            .arg(out_arg()),
    )
    .subcommand(
        Command::new("sync")
            .about("Offset between an IMU CSV and .flo fields (files or a directory)")
            .arg(input("imu"))
            .arg(
                Arg::new("flows")
                    .required(true)
                    .num_args(1..)
                    .value_parser(value_parser!(PathBuf)),
            ),
    )
    .subcommand(
        Command::new("pipeline")
            .about("Flow, looming map, FoE and detection for every frame pair")
            .arg(input("frames_dir").value_name("FRAMES"))
            .arg(out_arg())
            .arg(
                Arg::new("bench")
                    .long("bench")
                    .action(ArgAction::SetTrue)
                    .help("report throughput (frames/s)"),
            ),
    )
}

/// Resolves settings; the returned layers tell which keys were set at all.
fn resolve(m: &ArgMatches) -> Result<(Layers, RunConfig), Error> {
    let mut layers = Layers::default();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if !v.trim().is_empty() {
            layers.set("threads", v.trim());
        }
    }
    if let Some(path) = m.get_one::<PathBuf>("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let entries = config::parse_config_text(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        for (k, v) in entries {
            layers.set(k, v);
        }
    }
    if let Some(sets) = m.get_many::<String>("set") {
        for s in sets {
            let (k, v) = config::parse_assignment(s)?;
            layers.set(k, v);
        }
    }
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            layers.set(*key, v.clone());
        }
    }
    let cfg = RunConfig::resolve(&layers)?;
    Ok((layers, cfg))
}

/// Parses `args` (including the program name) and resolves the settings
/// without running anything.
pub fn resolve_args<I, T>(args: I) -> Result<RunConfig, Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = command()
        .try_get_matches_from(args)
        .map_err(|e| Error::Config(e.to_string()))?;
    resolve(&m).map(|(_, cfg)| cfg)
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let (layers, cfg) = match resolve(&matches) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("loomflow: configuration failed: {e}");
            return EXIT_USAGE;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = crate::par::with_threads(cfg.threads, || commands::dispatch(name, sub, &layers, &cfg));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("loomflow: {f}");
            f.exit_code()
        }
    }
}
