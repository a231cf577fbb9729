//! Command-line interface for the BitLocker VMK attack toolkit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use bitcracker::core::bde::{
    self, FixtureProtectorSpec, FixtureSecret, FixtureSpec, ProtectionMethod, VmkProtector,
};
use bitcracker::core::ccm::VerifyMode;
use bitcracker::core::kdf::{self, RecoveryPasswordError, RECOVERY_GROUP_LIMIT};
use bitcracker::engine::{
    self, AttackConfig, CandidateSource, EngineError, Outcome, WTablePolicy,
};
use bitcracker::image::{self, ScanError};

/// Exit codes, also part of the scripting interface: 0 when the attack
/// found the secret (or the command simply succeeded), 1 when a
/// completed attack exhausted its candidates, 2 for usage errors, 3 for
/// unreadable or unparseable input, 4 for runtime failures, and 130
/// when an attack was interrupted.
const EXIT_FOUND: u8 = 0;
const EXIT_EXHAUSTED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_INTERRUPTED: u8 = 130;

#[derive(Parser)]
#[command(
    name = "bitcracker",
    version,
    about = "BitLocker VMK dictionary attack toolkit",
    propagate_version = true
)]
struct Cli {
    /// Print one JSON object on stdout instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a volume image for FVE metadata and print hash lines.
    Extract(ExtractArgs),
    /// Run a dictionary attack against a protector from a hash file.
    Attack(AttackArgs),
    /// Measure key-derivation throughput on this machine.
    Bench(BenchArgs),
    /// Write a synthetic volume image with a planted secret.
    GenFixture(GenFixtureArgs),
    /// Check a recovery password against the format rules.
    ValidateRecovery(ValidateRecoveryArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Volume image or full disk image to scan.
    #[arg(long)]
    image: PathBuf,
    /// Also write the hash lines to this file, one per line.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(
    clap::ArgGroup::new("source").required(true).args(["wordlist", "recovery_list"])
))]
struct AttackArgs {
    /// File of hash lines produced by `extract` or `gen-fixture`.
    #[arg(long)]
    hash: PathBuf,
    /// User-password candidates, one per line.
    #[arg(long)]
    wordlist: Option<PathBuf>,
    /// Recovery-password candidates, one per line.
    #[arg(long)]
    recovery_list: Option<PathBuf>,
    /// Candidate check: `fast` decrypts one block and inspects the
    /// header, `mac` additionally authenticates the whole message.
    #[arg(long, value_enum, default_value_t = ModeArg::Fast)]
    mode: ModeArg,
    /// Worker threads; defaults to $BITCRACKER_THREADS or the CPU count.
    #[arg(long)]
    threads: Option<usize>,
    /// Message-schedule strategy: `mem` precomputes a 256 MiB table,
    /// `fly` recomputes schedules per candidate.
    #[arg(long, value_enum, default_value_t = TableArg::Mem)]
    w_table: TableArg,
    /// Override the iteration count from the hash line.
    #[arg(long)]
    iterations: Option<u32>,
    /// Permit an iteration count other than the BitLocker standard
    /// 1048576. Without this flag such a count is refused.
    #[arg(long)]
    allow_nonstandard_iterations: bool,
    /// Seconds between progress lines on stderr; 0 disables them.
    #[arg(long, default_value_t = 5)]
    progress_interval: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Worker threads; defaults to $BITCRACKER_THREADS or the CPU count.
    #[arg(long)]
    threads: Option<usize>,
    /// Measurement window per thread.
    #[arg(long, default_value_t = 5)]
    seconds: u64,
    /// Iteration count to benchmark.
    #[arg(long, default_value_t = kdf::DEFAULT_ITERATIONS)]
    iterations: u32,
    /// Message-schedule strategy, as for `attack`.
    #[arg(long, value_enum, default_value_t = TableArg::Mem)]
    w_table: TableArg,
}

#[derive(Args)]
#[command(group(
    clap::ArgGroup::new("secret")
        .required(true)
        .args(["password", "recovery", "password_file", "recovery_file"])
))]
struct GenFixtureArgs {
    /// Plant this user password.
    #[arg(long)]
    password: Option<String>,
    /// Plant this recovery password.
    #[arg(long)]
    recovery: Option<String>,
    /// Plant the user password read from this file (first line).
    #[arg(long)]
    password_file: Option<PathBuf>,
    /// Plant the recovery password read from this file (first line).
    #[arg(long)]
    recovery_file: Option<PathBuf>,
    /// Where to write the image.
    #[arg(long)]
    out: PathBuf,
    /// Use this salt instead of deriving one from the seed (32 hex digits).
    #[arg(long)]
    salt_hex: Option<String>,
    /// Use this nonce instead of deriving one from the seed (24 hex digits).
    #[arg(long)]
    nonce_hex: Option<String>,
    /// Use this VMK plaintext instead of deriving one (88 hex digits).
    #[arg(long)]
    vmk_hex: Option<String>,
    /// Seed for the deterministic salt, nonce, and VMK generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration count baked into the hash line.
    #[arg(long, default_value_t = kdf::DEFAULT_ITERATIONS)]
    iterations: u32,
    /// Also plant a TPM protector entry that must be skipped.
    #[arg(long)]
    tpm_decoy: bool,
}

#[derive(Args)]
struct ValidateRecoveryArgs {
    /// Recovery password, eight dash-separated six-digit groups.
    recovery_password: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fast,
    Mac,
}

impl From<ModeArg> for VerifyMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Fast => VerifyMode::Fast,
            ModeArg::Mac => VerifyMode::FullMac,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Mem,
    Fly,
}

impl From<TableArg> for WTablePolicy {
    fn from(table: TableArg) -> Self {
        match table {
            TableArg::Mem => WTablePolicy::Precompute,
            TableArg::Fly => WTablePolicy::OnTheFly,
        }
    }
}

/// A failure that was mapped to an exit code and a message.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_sigint_handler() {
    unsafe {
        libc::signal(
            libc::SIGINT,
            on_sigint as extern "C" fn(libc::c_int) as usize as libc::sighandler_t,
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    let result = match cli.command {
        Command::Extract(args) => cmd_extract(args, json),
        Command::Attack(args) => cmd_attack(args, json),
        Command::Bench(args) => cmd_bench(args, json),
        Command::GenFixture(args) => cmd_gen_fixture(args, json),
        Command::ValidateRecovery(args) => cmd_validate_recovery(args, json),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            if json {
                println!("{}", json!({ "error": err.message }));
            }
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    let threads = match flag {
        Some(n) => n,
        None => match std::env::var("BITCRACKER_THREADS") {
            Ok(value) => value
                .parse::<usize>()
                .map_err(|_| CliError::usage("BITCRACKER_THREADS must be a positive integer"))?,
            Err(_) => engine::default_threads(),
        },
    };
    if threads == 0 {
        return Err(CliError::usage("thread count must be at least 1"));
    }
    Ok(threads)
}

fn cmd_extract(args: ExtractArgs, json: bool) -> Result<u8, CliError> {
    let scan = image::scan_volume_file(&args.image).map_err(|e| match e {
        ScanError::Io(err) => CliError::input(format!(
            "cannot read image {}: {err}",
            args.image.display()
        )),
        ScanError::Bde(err) => CliError::input(err.to_string()),
    })?;
    let lines = scan.hash_lines();
    if lines.is_empty() {
        return Err(CliError::input(
            "FVE metadata found, but no protector uses a user or recovery password",
        ));
    }
    if let Some(output) = &args.output {
        let mut text = lines.join("\n");
        text.push('\n');
        fs::write(output, text).map_err(|e| {
            CliError::runtime(format!("cannot write {}: {e}", output.display()))
        })?;
    }
    if json {
        let blocks: Vec<_> = scan
            .blocks
            .iter()
            .map(|b| {
                json!({
                    "offset": b.offset,
                    "version": b.block.version,
                    "protectors": b.extraction.protectors.iter()
                        .map(|p| p.method.to_string()).collect::<Vec<_>>(),
                    "skipped": b.extraction.skipped.iter()
                        .map(|s| json!({ "offset": s.offset, "type": s.name() }))
                        .collect::<Vec<_>>(),
                    "description": b.description,
                })
            })
            .collect();
        let failures: Vec<_> = scan
            .failures
            .iter()
            .map(|(offset, err)| json!({ "offset": offset, "error": err.to_string() }))
            .collect();
        println!(
            "{}",
            json!({
                "command": "extract",
                "image": args.image.display().to_string(),
                "file_len": scan.file_len,
                "blocks": blocks,
                "failures": failures,
                "hash_lines": lines,
            })
        );
    } else {
        println!(
            "{}: {} bytes, {} metadata block(s)",
            args.image.display(),
            scan.file_len,
            scan.blocks.len()
        );
        for block in &scan.blocks {
            let mut annotations = Vec::new();
            for p in &block.extraction.protectors {
                annotations.push(p.method.to_string());
            }
            for s in &block.extraction.skipped {
                annotations.push(format!("{} (skipped)", s.name()));
            }
            println!(
                "  block at {:#x}: version {}, protectors: {}",
                block.offset,
                block.block.version,
                annotations.join(", ")
            );
        }
        for (offset, err) in &scan.failures {
            println!("  block at {offset:#x}: unparseable: {err}");
        }
        if let Some(description) = scan.blocks.first().and_then(|b| b.description.as_deref()) {
            println!("  volume description: {description}");
        }
        for line in &lines {
            println!("{line}");
        }
        if let Some(output) = &args.output {
            println!("wrote {} hash line(s) to {}", lines.len(), output.display());
        }
    }
    Ok(EXIT_FOUND)
}

/// Picks the first hash line whose method matches the candidate source.
fn select_protector(
    hash_path: &Path,
    want: ProtectionMethod,
) -> Result<VmkProtector, CliError> {
    let text = fs::read_to_string(hash_path).map_err(|e| {
        CliError::input(format!("cannot read {}: {e}", hash_path.display()))
    })?;
    let mut first_error = None;
    let mut other_method = 0usize;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match bde::parse_hash_line(line) {
            Ok(protector) => {
                if protector.method == want {
                    return Ok(protector);
                }
                other_method += 1;
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if other_method > 0 {
        return Err(CliError::input(format!(
            "{} has no {want} hash line; {other_method} line(s) use the other method",
            hash_path.display()
        )));
    }
    match first_error {
        Some(e) => Err(CliError::input(format!(
            "{}: no usable hash line: {e}",
            hash_path.display()
        ))),
        None => Err(CliError::input(format!(
            "{} contains no hash lines",
            hash_path.display()
        ))),
    }
}

fn cmd_attack(args: AttackArgs, json: bool) -> Result<u8, CliError> {
    let (source, method) = match (&args.wordlist, &args.recovery_list) {
        (Some(path), None) => (
            CandidateSource::WordlistFile(path.clone()),
            ProtectionMethod::UserPassword,
        ),
        (None, Some(path)) => (
            CandidateSource::RecoveryListFile(path.clone()),
            ProtectionMethod::RecoveryPassword,
        ),
        _ => unreachable!("clap enforces exactly one source"),
    };
    let protector = select_protector(&args.hash, method)?;
    let iterations = args.iterations.unwrap_or(protector.iterations);
    if iterations != kdf::DEFAULT_ITERATIONS && !args.allow_nonstandard_iterations {
        return Err(CliError::usage(format!(
            "iteration count {iterations} differs from the BitLocker standard 1048576; \
             pass --allow-nonstandard-iterations to use it"
        )));
    }
    if iterations == 0 || iterations > kdf::DEFAULT_ITERATIONS {
        return Err(CliError::usage(format!(
            "iteration count {iterations} is outside 1..=1048576"
        )));
    }
    let cfg = AttackConfig {
        threads: resolve_threads(args.threads)?,
        mode: args.mode.into(),
        iterations,
        w_table_policy: args.w_table.into(),
        batch_size: 64,
    };

    install_sigint_handler();
    eprintln!(
        "attacking {} protector with {} thread(s), {} iterations",
        protector.method, cfg.threads, cfg.iterations
    );
    let handle = engine::start_attack(&protector, source, &cfg).map_err(map_engine_error)?;
    let tick = Duration::from_millis(100);
    let mut next_progress = args.progress_interval.max(1) as f64;
    let show_progress = args.progress_interval > 0;
    let result = engine::supervise(handle, tick, |snapshot| {
        if INTERRUPTED.load(Ordering::SeqCst) {
            eprintln!("interrupt received, stopping workers");
            return false;
        }
        if show_progress && snapshot.elapsed.as_secs_f64() >= next_progress {
            next_progress += args.progress_interval as f64;
            let eta = snapshot
                .eta
                .map(|d| format!(", eta {}s", d.as_secs()))
                .unwrap_or_default();
            eprintln!(
                "tested {} candidates in {}s ({:.2}/s{eta})",
                snapshot.tested,
                snapshot.elapsed.as_secs(),
                snapshot.rate
            );
        }
        true
    })
    .map_err(map_engine_error)?;

    let (outcome_name, candidate, vmk_plaintext) = match &result.outcome {
        Outcome::Found {
            candidate,
            vmk_plaintext,
        } => ("found", Some(candidate.clone()), Some(vmk_plaintext.clone())),
        Outcome::Exhausted => ("exhausted", None, None),
        Outcome::Cancelled => ("interrupted", None, None),
    };
    let vmk_key_hex = vmk_plaintext.as_ref().map(|p| to_hex(&p[12..]));
    if json {
        println!(
            "{}",
            json!({
                "command": "attack",
                "outcome": outcome_name,
                "candidate": candidate,
                "vmk_key_hex": vmk_key_hex,
                "vmk_plaintext_hex": vmk_plaintext.as_ref().map(|p| to_hex(p)),
                "tested": result.tested,
                "skipped_invalid": result.skipped_invalid,
                "elapsed_seconds": result.elapsed.as_secs_f64(),
                "candidates_per_second": result.throughput,
                "mode": match cfg.mode { VerifyMode::Fast => "fast", VerifyMode::FullMac => "mac" },
                "threads": cfg.threads,
                "iterations": cfg.iterations,
            })
        );
    } else {
        match (&candidate, &vmk_key_hex) {
            (Some(candidate), Some(key)) => {
                println!("found: {candidate}");
                println!("vmk key: {key}");
            }
            _ => println!("{outcome_name}: no candidate matched"),
        }
        println!(
            "tested {} candidate(s) in {:.1}s ({:.2}/s), skipped {} invalid",
            result.tested,
            result.elapsed.as_secs_f64(),
            result.throughput,
            result.skipped_invalid
        );
    }
    Ok(match result.outcome {
        Outcome::Found { .. } => EXIT_FOUND,
        Outcome::Exhausted => EXIT_EXHAUSTED,
        Outcome::Cancelled => EXIT_INTERRUPTED,
    })
}

fn map_engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::InvalidConfig { .. } => CliError::usage(e.to_string()),
        EngineError::SourceMismatch { .. } | EngineError::EmptySource => {
            CliError::input(e.to_string())
        }
        EngineError::Io { .. } => CliError::input(e.to_string()),
        EngineError::Kdf(_) | EngineError::WorkerPanic => CliError::runtime(e.to_string()),
    }
}

fn cmd_bench(args: BenchArgs, json: bool) -> Result<u8, CliError> {
    if args.iterations == 0 || args.iterations > kdf::DEFAULT_ITERATIONS {
        return Err(CliError::usage(format!(
            "iteration count {} is outside 1..=1048576",
            args.iterations
        )));
    }
    let cfg = AttackConfig {
        threads: resolve_threads(args.threads)?,
        mode: VerifyMode::Fast,
        iterations: args.iterations,
        w_table_policy: args.w_table.into(),
        batch_size: 64,
    };
    eprintln!(
        "benchmarking {} thread(s) for {}s at {} iterations",
        cfg.threads, args.seconds, cfg.iterations
    );
    let report = engine::benchmark(&cfg, Duration::from_secs(args.seconds))
        .map_err(map_engine_error)?;
    if json {
        println!(
            "{}",
            json!({
                "command": "bench",
                "threads": report.threads.len(),
                "iterations": report.iterations,
                "hashes_per_candidate": report.hashes_per_candidate,
                "candidates_per_second": report.total_rate,
                "hashes_per_second": report.hash_rate,
                "per_thread": report.threads.iter().map(|t| json!({
                    "candidates": t.candidates,
                    "elapsed_seconds": t.elapsed.as_secs_f64(),
                    "candidates_per_second": t.rate,
                })).collect::<Vec<_>>(),
            })
        );
    } else {
        println!("threads: {}", report.threads.len());
        println!("iterations per candidate: {}", report.iterations);
        println!("hashes per candidate: {}", report.hashes_per_candidate);
        for (i, t) in report.threads.iter().enumerate() {
            println!(
                "  thread {i}: {} candidates in {:.2}s ({:.2}/s)",
                t.candidates,
                t.elapsed.as_secs_f64(),
                t.rate
            );
        }
        println!("candidates/second: {:.2}", report.total_rate);
        println!("hashes/second: {:.0}", report.hash_rate);
    }
    Ok(EXIT_FOUND)
}

fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for byte in bytes {
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

fn from_hex(field: &str, text: &str, expected: usize) -> Result<Vec<u8>, CliError> {
    if text.len() != expected * 2 {
        return Err(CliError::usage(format!(
            "--{field} must be {} hex digits, got {}",
            expected * 2,
            text.len()
        )));
    }
    let mut out = Vec::with_capacity(expected);
    let bytes = text.as_bytes();
    for pair in bytes.chunks(2) {
        let hi = (pair[0] as char)
            .to_digit(16)
            .ok_or_else(|| CliError::usage(format!("--{field} contains non-hex characters")))?;
        let lo = (pair[1] as char)
            .to_digit(16)
            .ok_or_else(|| CliError::usage(format!("--{field} contains non-hex characters")))?;
        out.push((hi * 16 + lo) as u8);
    }
    Ok(out)
}

fn read_secret_file(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let line = text.lines().next().unwrap_or("");
    if line.is_empty() {
        return Err(CliError::input(format!(
            "{} has no secret on its first line",
            path.display()
        )));
    }
    Ok(line.to_owned())
}

fn cmd_gen_fixture(args: GenFixtureArgs, json: bool) -> Result<u8, CliError> {
    let secret_text;
    let is_recovery;
    match (
        &args.password,
        &args.recovery,
        &args.password_file,
        &args.recovery_file,
    ) {
        (Some(p), None, None, None) => {
            secret_text = p.clone();
            is_recovery = false;
        }
        (None, Some(r), None, None) => {
            secret_text = r.clone();
            is_recovery = true;
        }
        (None, None, Some(path), None) => {
            secret_text = read_secret_file(path)?;
            is_recovery = false;
        }
        (None, None, None, Some(path)) => {
            secret_text = read_secret_file(path)?;
            is_recovery = true;
        }
        _ => unreachable!("clap enforces exactly one secret"),
    }
    if is_recovery {
        kdf::validate_recovery_password(&secret_text)
            .map_err(|e| CliError::usage(format!("invalid recovery password: {e}")))?;
    } else if secret_text.is_empty() {
        return Err(CliError::usage("the planted password must not be empty"));
    }
    if args.iterations == 0 || args.iterations > kdf::DEFAULT_ITERATIONS {
        return Err(CliError::usage(format!(
            "iteration count {} is outside 1..=1048576",
            args.iterations
        )));
    }

    // Draws happen in a fixed order so one seed always produces one
    // image, whichever fields are overridden.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut salt = [0u8; 16];
    rng.fill(&mut salt);
    if let Some(text) = &args.salt_hex {
        salt.copy_from_slice(&from_hex("salt-hex", text, 16)?);
    }
    let mut nonce = [0u8; 12];
    rng.fill(&mut nonce);
    if let Some(text) = &args.nonce_hex {
        nonce.copy_from_slice(&from_hex("nonce-hex", text, 12)?);
    }
    let mut vmk_plaintext = [0u8; 44];
    vmk_plaintext[0] = 44;
    vmk_plaintext[4] = 1;
    vmk_plaintext[8] = 0x03;
    vmk_plaintext[9] = 0x20;
    rng.fill(&mut vmk_plaintext[12..]);
    if let Some(text) = &args.vmk_hex {
        vmk_plaintext.copy_from_slice(&from_hex("vmk-hex", text, 44)?);
    }

    let secret = if is_recovery {
        FixtureSecret::Recovery(&secret_text)
    } else {
        FixtureSecret::Password(&secret_text)
    };
    let mut protector_spec = FixtureProtectorSpec::new(secret, salt, nonce);
    protector_spec.iterations = args.iterations;
    let mut spec = FixtureSpec::new(vmk_plaintext, vec![protector_spec]);
    spec.tpm_decoy = args.tpm_decoy;
    spec.description = Some("synthetic test volume");
    let image_bytes = bde::build_fixture_image(&spec)
        .map_err(|e| CliError::usage(format!("cannot build fixture: {e}")))?;
    fs::write(&args.out, &image_bytes)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", args.out.display())))?;

    // Parsing the image back both validates it end to end and yields
    // the exact hash line `extract` would print.
    let block = bde::parse_fve_block(&image_bytes, bde::DEFAULT_BLOCK_OFFSETS[0])
        .map_err(|e| CliError::runtime(format!("generated image does not parse: {e}")))?;
    let extraction = bde::extract_vmk_protectors(&block)
        .map_err(|e| CliError::runtime(format!("generated image has no protector: {e}")))?;
    let mut protector = extraction.protectors[0].clone();
    protector.iterations = args.iterations;
    let hash_line = bde::serialize_hash_line(&protector);

    if json {
        println!(
            "{}",
            json!({
                "command": "gen-fixture",
                "out": args.out.display().to_string(),
                "image_len": image_bytes.len(),
                "method": protector.method.to_string(),
                "seed": args.seed,
                "iterations": args.iterations,
                "salt_hex": to_hex(&salt),
                "nonce_hex": to_hex(&nonce),
                "vmk_plaintext_hex": to_hex(&vmk_plaintext),
                "hash_line": hash_line,
            })
        );
    } else {
        println!(
            "wrote {} ({} bytes, {} protector)",
            args.out.display(),
            image_bytes.len(),
            protector.method
        );
        println!("hash line: {hash_line}");
        println!("planted vmk plaintext: {}", to_hex(&vmk_plaintext));
    }
    Ok(EXIT_FOUND)
}

fn group_verdict(group: &str) -> Result<u32, String> {
    if group.len() != 6 || !group.bytes().all(|b| b.is_ascii_digit()) {
        return Err("must be exactly six digits".to_owned());
    }
    let value: u32 = group.parse().expect("six digits fit in u32");
    if !value.is_multiple_of(11) {
        return Err(format!("{value} is not divisible by 11"));
    }
    if value >= RECOVERY_GROUP_LIMIT {
        return Err(format!("{value} is not below {RECOVERY_GROUP_LIMIT}"));
    }
    Ok(value)
}

fn cmd_validate_recovery(args: ValidateRecoveryArgs, json: bool) -> Result<u8, CliError> {
    let text = &args.recovery_password;
    let overall = kdf::validate_recovery_password(text);
    let groups: Vec<&str> = text.split('-').collect();
    let mut group_reports = Vec::new();
    for (i, group) in groups.iter().enumerate() {
        let verdict = group_verdict(group);
        group_reports.push((i + 1, group.to_string(), verdict));
    }

    if json {
        println!(
            "{}",
            json!({
                "command": "validate-recovery",
                "input": text,
                "valid": overall.is_ok(),
                "group_count": groups.len(),
                "error": overall.as_ref().err().map(|e| e.to_string()),
                "groups": group_reports.iter().map(|(index, text, verdict)| json!({
                    "index": index,
                    "group": text,
                    "ok": verdict.is_ok(),
                    "problem": verdict.as_ref().err(),
                })).collect::<Vec<_>>(),
            })
        );
    } else {
        if groups.len() != 8 {
            println!(
                "group count: found {} dash-separated group(s), need exactly 8",
                groups.len()
            );
        }
        for (index, group, verdict) in &group_reports {
            match verdict {
                Ok(value) => println!("group {index}: {group} ok (11 x {})", value / 11),
                Err(problem) => println!("group {index}: {group} invalid: {problem}"),
            }
        }
        match &overall {
            Ok(_) => println!("valid recovery password"),
            Err(e) => println!("invalid recovery password: {e}"),
        }
    }
    Ok(match overall {
        Ok(_) => EXIT_FOUND,
        Err(RecoveryPasswordError::GroupCount { .. })
        | Err(RecoveryPasswordError::BadDigits { .. })
        | Err(RecoveryPasswordError::TooLarge { .. })
        | Err(RecoveryPasswordError::NotDivisible { .. }) => EXIT_INPUT,
    })
}
