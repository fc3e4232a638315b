use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use qkd_post::budget::{optimize_plan, KeyPool, Observed, PlanInput, ProtocolParams};
use qkd_post::gf2::{is_irreducible, lfsr_stream, order_of_x, toeplitz_multiply, BitString, LfsrSpec, ToeplitzSource, ToeplitzSpec};
use qkd_post::phase::tail_soundness_scan;
use qkd_post::session::{
    choose_p_x, detections_from_bytes, detections_to_bytes, run_session, simulate_quantum_exchange, ChannelModel, SessionConfig, Status, Tamper,
};

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_AUTH_FAIL: u8 = 3;
const EXIT_VERIFY_FAIL: u8 = 4;
const EXIT_POOL_EXHAUSTED: u8 = 5;
const EXIT_PROTOCOL_VIOLATION: u8 = 6;

#[derive(Parser)]
#[command(name = "qkdpp", version, about = "BB84 post-processing with finite-key accounting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize basis bias, deviations and key costs; print the plan as JSON.
    Plan {
        /// Protocol parameters (TOML).
        #[arg(long)]
        params: PathBuf,
        /// Post-correction statistics (TOML); plan for the expected count otherwise.
        #[arg(long)]
        observed: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the quantum exchange and write a detection file.
    Simulate {
        #[arg(long)]
        params: PathBuf,
        /// Channel model (TOML).
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full session and write report, transcript and keys.
    Run {
        /// Session configuration (TOML, parameters under `[params]`).
        #[arg(long)]
        config: PathBuf,
        /// Recorded detections; simulated from `--channel` otherwise.
        #[arg(long, conflicts_with = "channel")]
        detections: Option<PathBuf>,
        #[arg(long, required_unless_present = "detections")]
        channel: Option<PathBuf>,
        /// Pre-shared key pool file, loaded by both parties.
        #[arg(long)]
        pool: PathBuf,
        /// Separate pool file for Bob.
        #[arg(long)]
        bob_pool: Option<PathBuf>,
        /// JSON list of in-flight message changes.
        #[arg(long)]
        tamper: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check the tail bound and the Toeplitz/LFSR code against exact oracles.
    Oracle {
        /// Largest `n_s + n_t` in the tail scan.
        #[arg(long, default_value_t = 24)]
        max_positions: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write a random key pool file.
    Pool {
        #[arg(long)]
        bits: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_pool(path: &Path) -> Result<KeyPool> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    KeyPool::from_file_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(path) = out {
        write(path, text.as_bytes())?;
    }
    println!("{text}");
    Ok(())
}

fn status_code(status: Status) -> u8 {
    match status {
        Status::Success => 0,
        Status::Infeasible => EXIT_INFEASIBLE,
        Status::AuthFail => EXIT_AUTH_FAIL,
        Status::VerifyFailRetryExceeded => EXIT_VERIFY_FAIL,
        Status::PoolExhausted => EXIT_POOL_EXHAUSTED,
        Status::ProtocolViolation => EXIT_PROTOCOL_VIOLATION,
    }
}

fn plan(params: &Path, observed: Option<&Path>, out: Option<&Path>) -> Result<u8> {
    let params: ProtocolParams = read_toml(params)?;
    let input = match observed {
        Some(p) => PlanInput::Observed(read_toml::<Observed>(p)?),
        None => PlanInput::Expected { n: params.expected_detections() },
    };
    let result = optimize_plan(&params, &input)?;
    emit_json(&result, out)?;
    Ok(if result.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn simulate(params: &Path, channel: &Path, out: &Path) -> Result<u8> {
    let params: ProtocolParams = read_toml(params)?;
    let model: ChannelModel = read_toml(channel)?;
    let p_x = choose_p_x(&params)?;
    let detections = simulate_quantum_exchange(params.pulses, p_x, &model, &mut ChaCha8Rng::seed_from_u64(model.seed))?;
    write(out, &detections_to_bytes(params.pulses, &detections))?;
    emit_json(&serde_json::json!({ "pulses": params.pulses, "p_x": p_x, "detections": detections.len() }), None)?;
    Ok(0)
}

struct RunArgs<'a> {
    config: &'a Path,
    detections: Option<&'a Path>,
    channel: Option<&'a Path>,
    pool: &'a Path,
    bob_pool: Option<&'a Path>,
    tamper: Option<&'a Path>,
    out_dir: &'a Path,
}

fn run(args: RunArgs) -> Result<u8> {
    let mut config: SessionConfig = read_toml(args.config)?;
    let p_x = choose_p_x(&config.params)?;
    config.params.p_x = p_x;
    config.params.optimize_p_x = false;
    let detections = match (args.detections, args.channel) {
        (Some(path), _) => {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let (pulses, d) = detections_from_bytes(&bytes)?;
            if pulses != config.params.pulses {
                bail!("detection file covers {pulses} pulses, parameters say {}", config.params.pulses);
            }
            d
        }
        (None, Some(path)) => {
            let model: ChannelModel = read_toml(path)?;
            simulate_quantum_exchange(config.params.pulses, p_x, &model, &mut ChaCha8Rng::seed_from_u64(model.seed))?
        }
        (None, None) => bail!("need --detections or --channel"),
    };
    let alice_pool = read_pool(args.pool)?;
    let bob_pool = match args.bob_pool {
        Some(p) => read_pool(p)?,
        None => alice_pool.clone(),
    };
    let tampers: Vec<Tamper> = match args.tamper {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => Vec::new(),
    };

    let outcome = run_session(&config, &detections, alice_pool, bob_pool, &tampers)?;
    fs::create_dir_all(args.out_dir)?;
    write(&args.out_dir.join("transcript.qkdt"), &outcome.transcript.to_bytes())?;
    if let (Some(a), Some(b)) = (&outcome.alice_key, &outcome.bob_key) {
        write(&args.out_dir.join("alice_key.qkdp"), &KeyPool::to_file_bytes(a))?;
        write(&args.out_dir.join("bob_key.qkdp"), &KeyPool::to_file_bytes(b))?;
        // unused pool bits followed by the new key, ready for the next session
        let next = outcome.alice_pool.remaining().concat(a);
        write(&args.out_dir.join("next_pool.qkdp"), &KeyPool::to_file_bytes(&next))?;
    }
    emit_json(&outcome.report, Some(&args.out_dir.join("report.json")))?;
    Ok(status_code(outcome.status()))
}

#[derive(Serialize)]
struct ToeplitzCase {
    rows: usize,
    cols: usize,
    diagonal: String,
    input: String,
    output: String,
    matches_explicit: bool,
}

#[derive(Serialize)]
struct LfsrCase {
    degree: usize,
    poly_low: u128,
    period: u64,
    observed_period: u64,
}

fn explicit_product(spec: &ToeplitzSpec, v: &BitString) -> BitString {
    (0..spec.rows())
        .map(|i| (0..spec.cols()).fold(false, |acc, j| acc ^ (spec.diagonal().get(i + spec.cols() - 1 - j) & v.get(j))))
        .collect()
}

fn oracle(max_positions: u64, out_dir: &Path) -> Result<u8> {
    fs::create_dir_all(out_dir)?;
    let grid: Vec<u32> = (1..=99).collect();
    let cases = tail_soundness_scan(max_positions, &grid)?;
    let mut csv = csv::Writer::from_path(out_dir.join("tail_table.csv"))?;
    for c in &cases {
        csv.serialize(c)?;
    }
    csv.flush()?;
    let violations = cases.iter().filter(|c| c.violated()).count();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut toeplitz = Vec::new();
    for (rows, cols) in [(1, 1), (3, 4), (4, 3), (5, 5), (7, 16), (16, 16), (16, 9)] {
        let diagonal = BitString::random(rows + cols - 1, &mut rng);
        let input = BitString::random(cols, &mut rng);
        let spec = ToeplitzSpec::new(rows, cols, diagonal.clone(), ToeplitzSource::ExplicitRandom)?;
        let output = toeplitz_multiply(&spec, &input)?;
        toeplitz.push(ToeplitzCase {
            rows,
            cols,
            matches_explicit: output == explicit_product(&spec, &input),
            diagonal: diagonal.to_string(),
            input: input.to_string(),
            output: output.to_string(),
        });
    }

    let mut lfsr = Vec::new();
    for degree in 2..=8usize {
        for low in (1u128..1 << degree).step_by(2) {
            if !is_irreducible(low, degree) {
                continue;
            }
            let period = order_of_x(low, degree).context("irreducible polynomial without order")?;
            let spec = LfsrSpec::new(BitString::from_u128(1, degree), BitString::from_u128(low, degree))?;
            let stream = lfsr_stream(&spec, 2 * period as usize + degree)?;
            let observed_period = (1..=period).find(|&p| (0..period as usize + degree).all(|i| stream.get(i) == stream.get(i + p as usize))).unwrap_or(0);
            lfsr.push(LfsrCase {
                degree,
                poly_low: low,
                period,
                observed_period,
            });
        }
    }
    let summary = serde_json::json!({
        "tail_cases": cases.len(),
        "tail_violations": violations,
        "toeplitz_cases": toeplitz.len(),
        "toeplitz_mismatches": toeplitz.iter().filter(|c| !c.matches_explicit).count(),
        "lfsr_polynomials": lfsr.len(),
        "lfsr_period_mismatches": lfsr.iter().filter(|c| c.period != c.observed_period).count(),
    });
    write(&out_dir.join("toeplitz_table.json"), serde_json::to_string_pretty(&toeplitz)?.as_bytes())?;
    write(&out_dir.join("lfsr_table.json"), serde_json::to_string_pretty(&lfsr)?.as_bytes())?;
    emit_json(&summary, Some(&out_dir.join("oracle_summary.json")))?;
    let mismatches = summary["toeplitz_mismatches"].as_u64() != Some(0) || summary["lfsr_period_mismatches"].as_u64() != Some(0);
    Ok(if mismatches { EXIT_ERROR } else { 0 })
}

fn pool(bits: usize, seed: u64, out: &Path) -> Result<u8> {
    let pool = KeyPool::random(bits, &mut ChaCha8Rng::seed_from_u64(seed));
    write(out, &KeyPool::to_file_bytes(&pool.remaining()))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan { params, observed, out } => plan(params, observed.as_deref(), out.as_deref()),
        Command::Simulate { params, channel, out } => simulate(params, channel, out),
        Command::Run {
            config,
            detections,
            channel,
            pool,
            bob_pool,
            tamper,
            out_dir,
        } => run(RunArgs {
            config,
            detections: detections.as_deref(),
            channel: channel.as_deref(),
            pool,
            bob_pool: bob_pool.as_deref(),
            tamper: tamper.as_deref(),
            out_dir,
        }),
        Command::Oracle { max_positions, out_dir } => oracle(*max_positions, out_dir),
        Command::Pool { bits, seed, out } => pool(*bits, *seed, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
