//! Multithreaded dictionary attack driver.
//!
//! The engine owns the full candidate pipeline: it normalizes candidates
//! from a wordlist or recovery-password list, fans batches out to worker
//! threads that run the key derivation, and checks every derived key
//! against one VMK protector. A dispatcher thread reads the source and
//! keeps a bounded channel of batches full; workers pull batches, derive
//! keys in lane-width chunks, and record the earliest matching candidate.
//!
//! The outcome is deterministic regardless of thread count: when a worker
//! finds a match, dispatch stops, but already-queued batches still drain,
//! and a later match at a smaller candidate index replaces the recorded
//! one. Every candidate before the reported match is therefore guaranteed
//! to have been tested and rejected. For the same reason a source that
//! fails mid-read after a match was recorded still reports the match: the
//! lost candidates all came after it.

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, TrySendError};
use std::sync::{mpsc, Arc, Barrier, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use bitcracker_core::aes::AesKey256;
use bitcracker_core::bde::{ProtectionMethod, VmkProtector};
use bitcracker_core::ccm::{self, VerifyMode};
use bitcracker_core::kdf::{self, KdfError, WScheduleTable};
use bitcracker_core::sha256::Sha256;

/// Whether workers read the per-iteration message schedules from a
/// precomputed table or expand them on the fly.
///
/// The table costs 256 MiB at the standard iteration count and is shared
/// read-only by all workers; on-the-fly expansion needs no memory but
/// redoes the schedule arithmetic for every candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WTablePolicy {
    Precompute,
    OnTheFly,
}

/// Attack tuning knobs. `Default` picks the standard iteration count,
/// the fast header check, a precomputed schedule table, and one worker
/// per available CPU.
#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub threads: usize,
    pub mode: VerifyMode,
    pub iterations: u32,
    pub w_table_policy: WTablePolicy,
    /// Candidates per dispatched batch. Larger batches amortize channel
    /// traffic; workers still poll for cancellation every few candidates.
    pub batch_size: usize,
}

/// One worker per CPU, capped so a misreported topology cannot fork
/// thousands of threads.
pub fn default_threads() -> usize {
    thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(256)
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            threads: default_threads(),
            mode: VerifyMode::Fast,
            iterations: kdf::DEFAULT_ITERATIONS,
            w_table_policy: WTablePolicy::Precompute,
            batch_size: 64,
        }
    }
}

/// Where candidates come from. File sources are streamed line by line;
/// in-memory sources are normalized up front, which also makes the total
/// candidate count (and thus an ETA) available to progress snapshots.
#[derive(Clone, Debug)]
pub enum CandidateSource {
    /// Text file of user-password candidates, one per line.
    WordlistFile(PathBuf),
    /// Text file of recovery-password candidates, one per line.
    RecoveryListFile(PathBuf),
    /// Candidate strings interpreted according to the protector method.
    InMemory(Vec<String>),
}

impl CandidateSource {
    fn matches(&self, method: ProtectionMethod) -> bool {
        match self {
            CandidateSource::WordlistFile(_) => method == ProtectionMethod::UserPassword,
            CandidateSource::RecoveryListFile(_) => method == ProtectionMethod::RecoveryPassword,
            CandidateSource::InMemory(_) => true,
        }
    }
}

#[derive(Debug)]
pub enum EngineError {
    InvalidConfig { reason: &'static str },
    /// The source kind does not match the protector method, e.g. a
    /// wordlist against a recovery-password protector.
    SourceMismatch { method: ProtectionMethod },
    /// The source yielded no usable candidate.
    EmptySource,
    /// Reading the source failed after `tested` candidates were checked.
    Io { error: io::Error, tested: u64 },
    Kdf(KdfError),
    WorkerPanic,
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::InvalidConfig { reason } => write!(f, "invalid attack config: {reason}"),
            EngineError::SourceMismatch { method } => {
                write!(f, "candidate source does not match a {method} protector")
            }
            EngineError::EmptySource => write!(f, "candidate source has no usable entries"),
            EngineError::Io { error, tested } => {
                write!(f, "candidate source read failed after {tested} candidates: {error}")
            }
            EngineError::Kdf(e) => write!(f, "key derivation setup failed: {e}"),
            EngineError::WorkerPanic => write!(f, "an attack thread panicked"),
        }
    }
}

impl std::error::Error for EngineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            EngineError::Io { error, .. } => Some(error),
            EngineError::Kdf(e) => Some(e),
            _ => None,
        }
    }
}

/// How an attack ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// `candidate` decrypted the VMK; `vmk_plaintext` is the full
    /// decrypted datum (header plus the 32-byte key).
    Found {
        candidate: String,
        vmk_plaintext: Vec<u8>,
    },
    /// Every candidate in the source was tested and rejected.
    Exhausted,
    /// The attack was cancelled before the source was exhausted.
    Cancelled,
}

#[derive(Clone, Debug)]
pub struct AttackResult {
    pub outcome: Outcome,
    /// Candidates actually run through the key derivation.
    pub tested: u64,
    /// Source lines dropped during normalization (empty, malformed
    /// UTF-8, or failing the recovery-password format rules).
    pub skipped_invalid: u64,
    pub elapsed: Duration,
    /// Average tested candidates per second over the whole run.
    pub throughput: f64,
}

/// Point-in-time view of a running attack.
#[derive(Clone, Debug)]
pub struct ProgressSnapshot {
    pub tested: u64,
    pub skipped_invalid: u64,
    pub elapsed: Duration,
    /// Candidates per second over roughly the last ten seconds.
    pub rate: f64,
    /// Remaining time estimate; only available once the total number of
    /// valid candidates is known (in-memory sources know it up front,
    /// file sources only at end of file).
    pub eta: Option<Duration>,
    pub finished: bool,
}

struct FoundRecord {
    index: u64,
    candidate: String,
    vmk_plaintext: Vec<u8>,
}

/// State shared between the dispatcher, the workers, and the handle.
struct Shared {
    tested: AtomicU64,
    skipped: AtomicU64,
    cancel: AtomicBool,
    stop_dispatch: AtomicBool,
    finished: AtomicBool,
    /// Smallest-index match so far. `stop_dispatch` is raised alongside
    /// the first entry; queued batches may still lower the index.
    found: Mutex<Option<FoundRecord>>,
    /// Total valid candidates, once known.
    total_valid: Mutex<Option<u64>>,
    /// (time, tested) samples for the sliding-window rate.
    samples: Mutex<VecDeque<(Instant, u64)>>,
    started: Instant,
}

impl Shared {
    fn new() -> Self {
        Shared {
            tested: AtomicU64::new(0),
            skipped: AtomicU64::new(0),
            cancel: AtomicBool::new(false),
            stop_dispatch: AtomicBool::new(false),
            finished: AtomicBool::new(false),
            found: Mutex::new(None),
            total_valid: Mutex::new(None),
            samples: Mutex::new(VecDeque::new()),
            started: Instant::now(),
        }
    }

    fn record_found(&self, index: u64, candidate: &str, vmk_plaintext: Vec<u8>) {
        let mut guard = self.found.lock().unwrap();
        let better = guard.as_ref().is_none_or(|prev| index < prev.index);
        if better {
            *guard = Some(FoundRecord {
                index,
                candidate: candidate.to_owned(),
                vmk_plaintext,
            });
        }
        self.stop_dispatch.store(true, Ordering::SeqCst);
    }

    fn found_index(&self) -> Option<u64> {
        self.found.lock().unwrap().as_ref().map(|r| r.index)
    }
}

/// A candidate that passed normalization, paired with its position in
/// the source and its first-stage hash.
struct Prepared {
    index: u64,
    text: String,
    initial: [u8; 32],
}

struct Batch {
    candidates: Vec<Prepared>,
}

/// Turns raw source lines into prepared candidates, counting the ones
/// that are dropped.
struct Normalizer {
    method: ProtectionMethod,
    next_index: u64,
    skipped: u64,
}

impl Normalizer {
    fn new(method: ProtectionMethod) -> Self {
        Normalizer {
            method,
            next_index: 0,
            skipped: 0,
        }
    }

    fn prepare_bytes(&mut self, mut raw: Vec<u8>) -> Option<Prepared> {
        if raw.last() == Some(&b'\r') {
            raw.pop();
        }
        match String::from_utf8(raw) {
            Ok(text) => self.prepare_text(text),
            Err(_) => {
                self.skipped += 1;
                None
            }
        }
    }

    fn prepare_text(&mut self, text: String) -> Option<Prepared> {
        let initial = match self.method {
            ProtectionMethod::UserPassword => kdf::password_to_initial_hash(&text).ok(),
            ProtectionMethod::RecoveryPassword => kdf::validate_recovery_password(&text)
                .ok()
                .map(|r| kdf::recovery_to_initial_hash(&r)),
        };
        match initial {
            Some(initial) => {
                let index = self.next_index;
                self.next_index += 1;
                Some(Prepared {
                    index,
                    text,
                    initial,
                })
            }
            None => {
                self.skipped += 1;
                None
            }
        }
    }
}

enum LineStream {
    File(io::Split<BufReader<File>>),
    Memory(std::vec::IntoIter<String>),
}

impl LineStream {
    fn next_prepared(&mut self, norm: &mut Normalizer) -> io::Result<Option<Prepared>> {
        loop {
            match self {
                LineStream::File(split) => match split.next() {
                    Some(Ok(raw)) => {
                        if let Some(prepared) = norm.prepare_bytes(raw) {
                            return Ok(Some(prepared));
                        }
                    }
                    Some(Err(e)) => return Err(e),
                    None => return Ok(None),
                },
                LineStream::Memory(iter) => match iter.next() {
                    Some(text) => {
                        if let Some(prepared) = norm.prepare_text(text) {
                            return Ok(Some(prepared));
                        }
                    }
                    None => return Ok(None),
                },
            }
        }
    }
}

fn open_source(source: CandidateSource) -> io::Result<LineStream> {
    match source {
        CandidateSource::WordlistFile(path) | CandidateSource::RecoveryListFile(path) => {
            let file = File::open(&path)?;
            Ok(LineStream::File(BufReader::new(file).split(b'\n')))
        }
        CandidateSource::InMemory(entries) => Ok(LineStream::Memory(entries.into_iter())),
    }
}

fn validate_config(cfg: &AttackConfig) -> Result<(), EngineError> {
    if cfg.threads == 0 {
        return Err(EngineError::InvalidConfig {
            reason: "thread count must be at least 1",
        });
    }
    if cfg.batch_size == 0 {
        return Err(EngineError::InvalidConfig {
            reason: "batch size must be at least 1",
        });
    }
    if cfg.iterations == 0 || cfg.iterations > kdf::DEFAULT_ITERATIONS {
        return Err(EngineError::InvalidConfig {
            reason: "iteration count must be between 1 and 1048576",
        });
    }
    Ok(())
}

/// Handle to an attack running on background threads.
///
/// Dropping the handle without calling [`AttackHandle::join`] detaches
/// the attack; it keeps running to completion.
pub struct AttackHandle {
    shared: Arc<Shared>,
    thread: Option<JoinHandle<Result<AttackResult, EngineError>>>,
}

impl AttackHandle {
    /// Asks every thread to stop at the next candidate boundary. The
    /// result then reports [`Outcome::Cancelled`] unless a match had
    /// already been recorded.
    pub fn cancel(&self) {
        self.shared.cancel.store(true, Ordering::SeqCst);
        self.shared.stop_dispatch.store(true, Ordering::SeqCst);
    }

    pub fn is_finished(&self) -> bool {
        self.shared.finished.load(Ordering::SeqCst)
    }

    /// Samples current counters and updates the sliding-window rate.
    pub fn progress(&self) -> ProgressSnapshot {
        let tested = self.shared.tested.load(Ordering::SeqCst);
        let now = Instant::now();
        let rate = {
            let mut samples = self.shared.samples.lock().unwrap();
            samples.push_back((now, tested));
            while let Some(&(t, _)) = samples.front() {
                if now.duration_since(t) > Duration::from_secs(10) && samples.len() > 2 {
                    samples.pop_front();
                } else {
                    break;
                }
            }
            let (first_t, first_n) = *samples.front().unwrap();
            let span = now.duration_since(first_t).as_secs_f64();
            if span > 0.0 && tested > first_n {
                (tested - first_n) as f64 / span
            } else {
                let elapsed = self.shared.started.elapsed().as_secs_f64();
                if elapsed > 0.0 {
                    tested as f64 / elapsed
                } else {
                    0.0
                }
            }
        };
        let total = *self.shared.total_valid.lock().unwrap();
        let eta = match total {
            Some(total) if rate > 0.0 && total > tested => {
                Some(Duration::from_secs_f64((total - tested) as f64 / rate))
            }
            _ => None,
        };
        ProgressSnapshot {
            tested,
            skipped_invalid: self.shared.skipped.load(Ordering::SeqCst),
            elapsed: self.shared.started.elapsed(),
            rate,
            eta,
            finished: self.is_finished(),
        }
    }

    /// Waits for the attack to finish and returns its result.
    pub fn join(mut self) -> Result<AttackResult, EngineError> {
        match self.thread.take() {
            Some(handle) => handle.join().map_err(|_| EngineError::WorkerPanic)?,
            None => Err(EngineError::WorkerPanic),
        }
    }
}

/// Starts an attack on background threads and returns a handle for
/// progress polling and cancellation.
///
/// The source file is opened before this returns, so a missing wordlist
/// fails fast. The schedule table, when requested, is built on the
/// dispatcher thread; the first progress snapshots arrive while it is
/// still being filled.
pub fn start_attack(
    protector: &VmkProtector,
    source: CandidateSource,
    cfg: &AttackConfig,
) -> Result<AttackHandle, EngineError> {
    validate_config(cfg)?;
    if !source.matches(protector.method) {
        return Err(EngineError::SourceMismatch {
            method: protector.method,
        });
    }
    let stream = open_source(source).map_err(|error| EngineError::Io { error, tested: 0 })?;
    let shared = Arc::new(Shared::new());
    let worker_shared = Arc::clone(&shared);
    let protector = protector.clone();
    let cfg = cfg.clone();
    let thread = thread::Builder::new()
        .name("attack-dispatch".into())
        .spawn(move || run_pipeline(worker_shared, protector, cfg, stream))
        .map_err(|error| EngineError::Io { error, tested: 0 })?;
    Ok(AttackHandle {
        shared,
        thread: Some(thread),
    })
}

/// Runs an attack to completion on the calling thread's watch.
pub fn run_attack(
    protector: &VmkProtector,
    source: CandidateSource,
    cfg: &AttackConfig,
) -> Result<AttackResult, EngineError> {
    start_attack(protector, source, cfg)?.join()
}

fn run_pipeline(
    shared: Arc<Shared>,
    protector: VmkProtector,
    cfg: AttackConfig,
    mut stream: LineStream,
) -> Result<AttackResult, EngineError> {
    let result = (|| {
        let table = match cfg.w_table_policy {
            WTablePolicy::Precompute => Some(
                WScheduleTable::for_iterations(&protector.salt, cfg.iterations)
                    .map_err(EngineError::Kdf)?,
            ),
            WTablePolicy::OnTheFly => None,
        };

        // In-memory sources are fully normalized here so the total is
        // known before the first derivation.
        let mut norm = Normalizer::new(protector.method);
        let mut pending = VecDeque::new();
        if let LineStream::Memory(_) = stream {
            while let Some(prepared) = stream
                .next_prepared(&mut norm)
                .expect("in-memory sources cannot fail")
            {
                pending.push_back(prepared);
            }
            shared.skipped.store(norm.skipped, Ordering::SeqCst);
            *shared.total_valid.lock().unwrap() = Some(pending.len() as u64);
        }

        let (tx, rx) = mpsc::sync_channel::<Batch>(cfg.threads * 2);
        let rx = Mutex::new(rx);
        let mut io_error = None;
        let mut dispatched_any = false;

        thread::scope(|scope| {
            for _ in 0..cfg.threads {
                scope.spawn(|| worker_loop(&shared, &protector, &cfg, table.as_ref(), &rx));
            }
            'dispatch: loop {
                if shared.stop_dispatch.load(Ordering::SeqCst) {
                    break;
                }
                let mut batch = Vec::with_capacity(cfg.batch_size);
                let mut end_of_source = false;
                while batch.len() < cfg.batch_size {
                    if let Some(prepared) = pending.pop_front() {
                        batch.push(prepared);
                        continue;
                    }
                    match stream.next_prepared(&mut norm) {
                        Ok(Some(prepared)) => batch.push(prepared),
                        Ok(None) => {
                            end_of_source = true;
                            break;
                        }
                        Err(error) => {
                            io_error = Some(error);
                            end_of_source = true;
                            break;
                        }
                    }
                }
                shared.skipped.store(norm.skipped, Ordering::SeqCst);
                // Cancelled workers stop draining the channel, so a
                // blocking send here could wait forever; poll instead.
                let mut unsent = (!batch.is_empty()).then_some(Batch { candidates: batch });
                while let Some(b) = unsent.take() {
                    if shared.cancel.load(Ordering::SeqCst) {
                        break 'dispatch;
                    }
                    match tx.try_send(b) {
                        Ok(()) => dispatched_any = true,
                        Err(TrySendError::Full(b)) => {
                            unsent = Some(b);
                            thread::sleep(Duration::from_millis(1));
                        }
                        Err(TrySendError::Disconnected(_)) => break 'dispatch,
                    }
                }
                if end_of_source {
                    if io_error.is_none() {
                        *shared.total_valid.lock().unwrap() = Some(norm.next_index);
                    }
                    break;
                }
            }
            drop(tx);
        });

        let tested = shared.tested.load(Ordering::SeqCst);
        let found = shared.found.lock().unwrap().take();
        if let Some(record) = found {
            return Ok(Outcome::Found {
                candidate: record.candidate,
                vmk_plaintext: record.vmk_plaintext,
            });
        }
        if let Some(error) = io_error {
            return Err(EngineError::Io { error, tested });
        }
        if shared.cancel.load(Ordering::SeqCst) {
            return Ok(Outcome::Cancelled);
        }
        if !dispatched_any {
            return Err(EngineError::EmptySource);
        }
        Ok(Outcome::Exhausted)
    })();

    shared.finished.store(true, Ordering::SeqCst);
    let elapsed = shared.started.elapsed();
    let tested = shared.tested.load(Ordering::SeqCst);
    result.map(|outcome| AttackResult {
        outcome,
        tested,
        skipped_invalid: shared.skipped.load(Ordering::SeqCst),
        elapsed,
        throughput: if elapsed.as_secs_f64() > 0.0 {
            tested as f64 / elapsed.as_secs_f64()
        } else {
            0.0
        },
    })
}

fn worker_loop(
    shared: &Shared,
    protector: &VmkProtector,
    cfg: &AttackConfig,
    table: Option<&WScheduleTable>,
    rx: &Mutex<Receiver<Batch>>,
) {
    loop {
        let batch = {
            let guard = rx.lock().unwrap();
            guard.recv()
        };
        let Ok(batch) = batch else {
            return;
        };
        // Chunks stay at lane width so a cancel request never waits on
        // more than one kernel call.
        for chunk in batch.candidates.chunks(kdf::LANES) {
            if shared.cancel.load(Ordering::SeqCst) {
                return;
            }
            if let Some(found) = shared.found_index() {
                if chunk[0].index > found {
                    continue;
                }
            }
            let initials: Vec<[u8; 32]> = chunk.iter().map(|p| p.initial).collect();
            let keys =
                kdf::derive_intermediate_keys(&initials, &protector.salt, cfg.iterations, table)
                    .expect("config and table were validated before dispatch");
            for (prepared, key) in chunk.iter().zip(&keys) {
                if ccm::verify_candidate(key, protector, cfg.mode) {
                    let aes = AesKey256::new(key);
                    let vmk_plaintext =
                        ccm::decrypt_vmk(&aes, &protector.nonce, &protector.encrypted_vmk)
                            .expect("payload length was accepted by verification");
                    shared.record_found(prepared.index, &prepared.text, vmk_plaintext);
                }
            }
            shared.tested.fetch_add(chunk.len() as u64, Ordering::SeqCst);
        }
    }
}

/// One worker's share of a throughput measurement.
#[derive(Clone, Debug)]
pub struct BenchThreadReport {
    pub candidates: u64,
    pub elapsed: Duration,
    pub rate: f64,
}

/// Result of [`benchmark`].
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub threads: Vec<BenchThreadReport>,
    /// Sum of per-thread candidate counts divided by the longest
    /// thread's elapsed time.
    pub total_rate: f64,
    pub iterations: u32,
    /// SHA-256 compressions per candidate at this iteration count: two
    /// per iteration plus the two that hash the candidate itself.
    pub hashes_per_candidate: u64,
    /// `total_rate` scaled to compressions per second.
    pub hash_rate: f64,
}

/// Measures derivation throughput with synthetic candidates against a
/// synthetic protector, using the same worker kernel as a real attack.
/// Workers warm up, start together, and stop at the first chunk
/// boundary past `duration` (clamped to at least one second).
pub fn benchmark(cfg: &AttackConfig, duration: Duration) -> Result<BenchReport, EngineError> {
    validate_config(cfg)?;
    let duration = duration.max(Duration::from_secs(1));
    let salt = [0x5a; 16];
    let nonce = [0xc3; 12];
    let mut vmk_plaintext = [0u8; 44];
    vmk_plaintext[0] = 44;
    vmk_plaintext[4] = 1;
    vmk_plaintext[8] = 0x03;
    vmk_plaintext[9] = 0x20;
    let aes = AesKey256::new(&[0x07; 32]);
    let (mac, encrypted_vmk) =
        ccm::encrypt_vmk_fixture(&aes, &nonce, &vmk_plaintext).expect("valid synthetic header");
    let protector = VmkProtector {
        method: ProtectionMethod::UserPassword,
        salt,
        nonce,
        mac,
        encrypted_vmk,
        iterations: cfg.iterations,
    };
    let table = match cfg.w_table_policy {
        WTablePolicy::Precompute => {
            Some(WScheduleTable::for_iterations(&salt, cfg.iterations).map_err(EngineError::Kdf)?)
        }
        WTablePolicy::OnTheFly => None,
    };

    let barrier = Barrier::new(cfg.threads);
    let reports = thread::scope(|scope| {
        let mut handles = Vec::with_capacity(cfg.threads);
        for thread_id in 0..cfg.threads {
            let barrier = &barrier;
            let protector = &protector;
            let table = table.as_ref();
            handles.push(scope.spawn(move || {
                let mut counter = 0u64;
                let chunk = |counter: &mut u64| {
                    let initials: Vec<[u8; 32]> = (0..kdf::LANES)
                        .map(|lane| {
                            *counter += 1;
                            synthetic_initial(thread_id as u64, *counter, lane as u64)
                        })
                        .collect();
                    let keys = kdf::derive_intermediate_keys(
                        &initials,
                        &protector.salt,
                        cfg.iterations,
                        table,
                    )
                    .expect("config was validated");
                    for key in &keys {
                        assert!(!ccm::verify_candidate(key, protector, cfg.mode));
                    }
                };
                chunk(&mut counter);
                counter = 0;
                barrier.wait();
                let start = Instant::now();
                let mut candidates = 0u64;
                while start.elapsed() < duration {
                    chunk(&mut counter);
                    candidates += kdf::LANES as u64;
                }
                let elapsed = start.elapsed();
                BenchThreadReport {
                    candidates,
                    elapsed,
                    rate: candidates as f64 / elapsed.as_secs_f64(),
                }
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark thread panicked"))
            .collect::<Vec<_>>()
    });

    let total_candidates: u64 = reports.iter().map(|r| r.candidates).sum();
    let longest = reports
        .iter()
        .map(|r| r.elapsed)
        .max()
        .unwrap_or(duration)
        .as_secs_f64();
    let total_rate = total_candidates as f64 / longest;
    let hashes_per_candidate = 2 * cfg.iterations as u64 + 2;
    Ok(BenchReport {
        threads: reports,
        total_rate,
        iterations: cfg.iterations,
        hashes_per_candidate,
        hash_rate: total_rate * hashes_per_candidate as f64,
    })
}

fn synthetic_initial(thread_id: u64, counter: u64, lane: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(&thread_id.to_le_bytes());
    hasher.update(&counter.to_le_bytes());
    hasher.update(&lane.to_le_bytes());
    hasher.finalize()
}

/// Waits for `handle` to finish while invoking `on_tick` roughly every
/// `interval`, then returns the result. `on_tick` returning `false`
/// cancels the attack.
pub fn supervise<F>(
    handle: AttackHandle,
    interval: Duration,
    mut on_tick: F,
) -> Result<AttackResult, EngineError>
where
    F: FnMut(&ProgressSnapshot) -> bool,
{
    let mut cancelled = false;
    loop {
        if handle.is_finished() {
            return handle.join();
        }
        thread::sleep(interval);
        let snapshot = handle.progress();
        if !on_tick(&snapshot) && !cancelled {
            handle.cancel();
            cancelled = true;
        }
    }
}
