use std::net::TcpStream;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::Parser;
use edgesplit_core::proto::{tcp_halves, SessionConfig, DEFAULT_PORT};
use edgesplit_core::simnode::{run_worker, FailPlan, WorkerConfig, WorkerExit};
use edgesplit_harness::WorkerSpec;

/// Simulated worker node: connects to a gateway, reports its profile and
/// serves work orders.
#[derive(Parser)]
#[command(name = "edgesplit-worker", version)]
struct Args {
    #[arg(long)]
    node_id: String,
    #[arg(long, default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
    gateway_addr: String,
    /// TOML file with the node's throughput per level and the model catalog.
    #[arg(long)]
    profile_file: PathBuf,
    /// Override the calibration seed from the profile file.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds per real second; 0 runs unpaced.
    #[arg(long, default_value_t = 0.0)]
    time_scale: f64,
    /// Fail part-way through a request, as `REQUEST:FRACTION`.
    #[arg(long, value_parser = parse_fail)]
    fail_at: Option<FailPlan>,
}

fn parse_fail(s: &str) -> Result<FailPlan, String> {
    let (r, f) = s.split_once(':').ok_or("expected REQUEST:FRACTION")?;
    let request_id = r.parse().map_err(|e| format!("request: {e}"))?;
    let fraction: f64 = f.parse().map_err(|e| format!("fraction: {e}"))?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(format!("fraction {fraction} outside (0, 1)"));
    }
    Ok(FailPlan { request_id, fraction })
}

fn connect(addr: &str) -> anyhow::Result<TcpStream> {
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                log::debug!("connect to {addr}: {e}; retrying");
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e).with_context(|| format!("connecting to {addr}")),
        }
    }
}

fn main_inner(args: Args) -> anyhow::Result<WorkerExit> {
    let text = std::fs::read_to_string(&args.profile_file)
        .with_context(|| format!("reading {}", args.profile_file.display()))?;
    let spec: WorkerSpec = toml::from_str(&text).context("parsing the profile file")?;
    let mut profile = spec.profile.clone();
    if profile.node_id.as_str() != args.node_id {
        bail!("profile is for `{}`, not `{}`", profile.node_id, args.node_id);
    }
    if let Some(seed) = args.seed {
        profile.rng_seed = seed;
    }
    profile.validate()?;
    let catalog = spec.catalog().map_err(anyhow::Error::msg)?;
    if catalog.len() != profile.perf_per_level.len() {
        bail!("catalog has {} levels, profile {}", catalog.len(), profile.perf_per_level.len());
    }
    let stream = connect(&args.gateway_addr)?;
    let (reader, writer) = tcp_halves(stream)?;
    let config = WorkerConfig {
        profile,
        catalog,
        time_scale: args.time_scale,
        fail: args.fail_at,
        session: SessionConfig::default(),
    };
    let (_control, control_rx) = crossbeam_channel::bounded(0);
    Ok(run_worker(config, reader, writer, control_rx)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let node = args.node_id.clone();
    match main_inner(args) {
        Ok(exit) => {
            log::info!("{node}: {exit:?}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{node}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
