//! Acceptance gate for the toolkit.
//!
//! Everything here runs at the real 0x100000 iteration count unless the
//! check is about behavior that does not depend on it. The fixture
//! corpus below is built once and shared: 25 seeded synthetic volumes,
//! a mix of user-password and recovery-password protectors, each with a
//! 1000-entry dictionary containing its planted secret.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bitcracker::core::aes::AesKey256;
use bitcracker::core::bde::{self, FixtureSecret, FixtureSpec, ProtectionMethod, VmkProtector};
use bitcracker::core::ccm::{self, VerifyMode};
use bitcracker::core::kdf::{self, IntermediateKey, WScheduleTable};
use bitcracker::core::sha256::Sha256;
use bitcracker::engine::{self, AttackConfig, CandidateSource, Outcome, WTablePolicy};

const FULL_ITERATIONS: u32 = kdf::DEFAULT_ITERATIONS;
const CORPUS_SIZE: usize = 25;
const DICTIONARY_SIZE: usize = 1000;

struct Fixture {
    method: ProtectionMethod,
    secret: String,
    vmk_plaintext: [u8; 44],
    protector: VmkProtector,
    image: Vec<u8>,
    /// 1000 candidates with the secret at `planted_index`.
    dictionary: Vec<String>,
    planted_index: usize,
    /// One more wrong candidate so the negative suite has a round 1000.
    extra_wrong: String,
    /// The key the planted secret derives to, at the full count.
    planted_key: IntermediateKey,
}

static CORPUS: OnceLock<Vec<Fixture>> = OnceLock::new();

fn corpus() -> &'static [Fixture] {
    CORPUS.get_or_init(build_corpus)
}

fn random_password(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(10..=18);
    (0..len)
        .map(|_| char::from(rng.gen_range(b'!'..=b'~')))
        .collect()
}

fn random_recovery(rng: &mut ChaCha8Rng) -> String {
    let groups: Vec<String> = (0..8)
        .map(|_| format!("{:06}", 11 * rng.gen_range(0u32..65536)))
        .collect();
    groups.join("-")
}

fn random_wrong(rng: &mut ChaCha8Rng, method: ProtectionMethod, secret: &str) -> String {
    loop {
        let candidate = match method {
            ProtectionMethod::UserPassword => random_password(rng),
            ProtectionMethod::RecoveryPassword => random_recovery(rng),
        };
        if candidate != secret {
            return candidate;
        }
    }
}

fn initial_hash(method: ProtectionMethod, secret: &str) -> [u8; 32] {
    match method {
        ProtectionMethod::UserPassword => {
            kdf::password_to_initial_hash(secret).expect("corpus secrets are non-empty")
        }
        ProtectionMethod::RecoveryPassword => {
            let recovery =
                kdf::validate_recovery_password(secret).expect("corpus secrets are valid");
            kdf::recovery_to_initial_hash(&recovery)
        }
    }
}

fn build_corpus() -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_acce);
    let mut fixtures = Vec::with_capacity(CORPUS_SIZE);
    for i in 0..CORPUS_SIZE {
        let method = if i % 2 == 0 {
            ProtectionMethod::UserPassword
        } else {
            ProtectionMethod::RecoveryPassword
        };
        let secret = match method {
            ProtectionMethod::UserPassword => random_password(&mut rng),
            ProtectionMethod::RecoveryPassword => random_recovery(&mut rng),
        };
        let mut salt = [0u8; 16];
        rng.fill(&mut salt);
        let mut nonce = [0u8; 12];
        rng.fill(&mut nonce);
        let mut vmk_plaintext = [0u8; 44];
        vmk_plaintext[0] = 44;
        vmk_plaintext[4] = 1;
        vmk_plaintext[8] = (i % 6) as u8;
        vmk_plaintext[9] = 0x20;
        rng.fill(&mut vmk_plaintext[12..]);

        let secret_ref = match method {
            ProtectionMethod::UserPassword => FixtureSecret::Password(&secret),
            ProtectionMethod::RecoveryPassword => FixtureSecret::Recovery(&secret),
        };
        let spec = FixtureSpec::single(vmk_plaintext, secret_ref, salt, nonce);
        let image = bde::build_fixture_image(&spec).expect("corpus fixtures are well-formed");
        let block = bde::parse_fve_block(&image, bde::DEFAULT_BLOCK_OFFSETS[0])
            .expect("fixture images parse");
        let extraction =
            bde::extract_vmk_protectors(&block).expect("fixture images carry a protector");
        let protector = extraction.protectors[0].clone();
        assert_eq!(protector.method, method);
        assert_eq!(protector.iterations, FULL_ITERATIONS);

        let planted_index = rng.gen_range(0..200);
        let mut dictionary = Vec::with_capacity(DICTIONARY_SIZE);
        for _ in 0..DICTIONARY_SIZE - 1 {
            dictionary.push(random_wrong(&mut rng, method, &secret));
        }
        dictionary.insert(planted_index, secret.clone());
        let extra_wrong = random_wrong(&mut rng, method, &secret);

        let planted_key = kdf::derive_intermediate_key(
            &initial_hash(method, &secret),
            &protector.salt,
            FULL_ITERATIONS,
            None,
        )
        .expect("full-count derivation succeeds");

        fixtures.push(Fixture {
            method,
            secret,
            vmk_plaintext,
            protector,
            image,
            dictionary,
            planted_index,
            extra_wrong,
            planted_key,
        });
    }
    fixtures
}

fn sha256_of(chunks: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update(chunk);
    }
    hasher.finalize()
}

#[test]
fn sha256_known_answers_are_bit_exact() {
    let started = Instant::now();
    let cases: [(&[u8], &str); 3] = [
        (
            b"",
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ),
        (
            b"abc",
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
        ),
        (
            b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
        ),
    ];
    for (message, expected) in cases {
        assert_eq!(hex::encode(sha256_of(&[message])), expected);
    }
    let chunk = [b'a'; 1000];
    let mut hasher = Sha256::new();
    for _ in 0..1000 {
        hasher.update(&chunk);
    }
    assert_eq!(
        hex::encode(hasher.finalize()),
        "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0"
    );
    assert!(
        started.elapsed() < Duration::from_secs(1),
        "known-answer suite took {:?}",
        started.elapsed()
    );
}

#[test]
fn aes256_known_answer_is_bit_exact() {
    let mut key = [0u8; 32];
    for (i, byte) in key.iter_mut().enumerate() {
        *byte = i as u8;
    }
    let plaintext: [u8; 16] = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee,
        0xff,
    ];
    let cipher = AesKey256::new(&key);
    assert_eq!(
        hex::encode(cipher.encrypt_block(&plaintext)),
        "8ea2b7ca516745bfeafc49904b496089"
    );
}

#[test]
fn w_table_is_a_pure_refactoring() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_acce + 3);
    for _ in 0..100 {
        let mut salt = [0u8; 16];
        rng.fill(&mut salt);
        let mut initial = [0u8; 32];
        rng.fill(&mut initial);
        for iterations in [1u32, 2, 17, 1024] {
            let table = WScheduleTable::for_iterations(&salt, iterations).unwrap();
            let with_table =
                kdf::derive_intermediate_key(&initial, &salt, iterations, Some(&table)).unwrap();
            let on_the_fly =
                kdf::derive_intermediate_key(&initial, &salt, iterations, None).unwrap();
            assert_eq!(with_table, on_the_fly);
        }
    }
    assert!(
        started.elapsed() < Duration::from_secs(60),
        "equivalence sweep took {:?}",
        started.elapsed()
    );
}

fn attack_config(threads: usize, mode: VerifyMode, policy: WTablePolicy) -> AttackConfig {
    AttackConfig {
        threads,
        mode,
        iterations: FULL_ITERATIONS,
        w_table_policy: policy,
        batch_size: 64,
    }
}

fn expect_found(fixture: &Fixture, mode: VerifyMode, threads: usize, policy: WTablePolicy) {
    let result = engine::run_attack(
        &fixture.protector,
        CandidateSource::InMemory(fixture.dictionary.clone()),
        &attack_config(threads, mode, policy),
    )
    .expect("attack runs to completion");
    assert_eq!(result.skipped_invalid, 0);
    match result.outcome {
        Outcome::Found {
            candidate,
            vmk_plaintext,
        } => {
            assert_eq!(candidate, fixture.secret);
            assert_eq!(vmk_plaintext, fixture.vmk_plaintext.to_vec());
        }
        other => panic!(
            "{} fixture (planted at {}) not cracked in {mode:?}: {other:?}",
            fixture.method, fixture.planted_index
        ),
    }
}

#[test]
fn seeded_fixtures_are_cracked_in_both_modes() {
    let started = Instant::now();
    for fixture in corpus() {
        for mode in [VerifyMode::Fast, VerifyMode::FullMac] {
            expect_found(fixture, mode, 4, WTablePolicy::Precompute);
        }
    }
    // Worst case is every dictionary entry derived once per mode at the
    // floor rate the throughput check enforces.
    let budget = 2.0 * (CORPUS_SIZE * DICTIONARY_SIZE) as f64 / 15.0 + 300.0;
    let elapsed = started.elapsed().as_secs_f64();
    eprintln!("cracked {CORPUS_SIZE} fixtures in both modes in {elapsed:.0} s");
    assert!(elapsed < budget, "round-trip took {elapsed:.0} s, budget {budget:.0} s");
}

#[test]
fn wrong_candidates_and_corruptions_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_acce + 5);
    for (index, fixture) in corpus().iter().enumerate() {
        // The 999 non-planted dictionary entries plus one more make the
        // round 1000 wrong candidates, each derived once at the full
        // count and checked in both modes.
        let mut wrong: Vec<&String> = fixture
            .dictionary
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fixture.planted_index)
            .map(|(_, w)| w)
            .collect();
        wrong.push(&fixture.extra_wrong);
        assert_eq!(wrong.len(), 1000);
        let initials: Vec<[u8; 32]> = wrong
            .iter()
            .map(|w| initial_hash(fixture.method, w))
            .collect();
        let table = WScheduleTable::for_iterations(&fixture.protector.salt, FULL_ITERATIONS)
            .expect("table fits in memory");
        for batch in initials.chunks(kdf::LANES) {
            let keys =
                kdf::derive_intermediate_keys(batch, &fixture.protector.salt, FULL_ITERATIONS, Some(&table))
                    .unwrap();
            for key in &keys {
                assert!(!ccm::verify_candidate(key, &fixture.protector, VerifyMode::Fast));
                assert!(!ccm::verify_candidate(key, &fixture.protector, VerifyMode::FullMac));
            }
        }
        drop(table);

        // The planted key accepts the intact protector and rejects
        // every single-bit corruption of ciphertext, MAC, and nonce.
        assert!(ccm::verify_candidate(
            &fixture.planted_key,
            &fixture.protector,
            VerifyMode::FullMac
        ));
        for bit in 0..fixture.protector.encrypted_vmk.len() * 8 {
            let mut corrupted = fixture.protector.clone();
            corrupted.encrypted_vmk[bit / 8] ^= 1 << (bit % 8);
            assert!(
                !ccm::verify_candidate(&fixture.planted_key, &corrupted, VerifyMode::FullMac),
                "fixture {index}: ciphertext bit {bit} accepted"
            );
        }
        for bit in 0..fixture.protector.mac.len() * 8 {
            let mut corrupted = fixture.protector.clone();
            corrupted.mac[bit / 8] ^= 1 << (bit % 8);
            assert!(
                !ccm::verify_candidate(&fixture.planted_key, &corrupted, VerifyMode::FullMac),
                "fixture {index}: MAC bit {bit} accepted"
            );
        }
        for bit in 0..fixture.protector.nonce.len() * 8 {
            let mut corrupted = fixture.protector.clone();
            corrupted.nonce[bit / 8] ^= 1 << (bit % 8);
            assert!(
                !ccm::verify_candidate(&fixture.planted_key, &corrupted, VerifyMode::FullMac),
                "fixture {index}: nonce bit {bit} accepted"
            );
        }
        // A salt corruption acts through the derivation: the true secret
        // hashed over a flipped salt must land on a key the intact
        // protector rejects. Each of the 128 flips costs one full-count
        // derivation.
        let initial = initial_hash(fixture.method, &fixture.secret);
        for bit in 0..fixture.protector.salt.len() * 8 {
            let mut salt = fixture.protector.salt;
            salt[bit / 8] ^= 1 << (bit % 8);
            let key = kdf::derive_intermediate_key(&initial, &salt, FULL_ITERATIONS, None).unwrap();
            assert!(
                !ccm::verify_candidate(&key, &fixture.protector, VerifyMode::FullMac),
                "fixture {index}: salt bit {bit} accepted"
            );
        }
    }

    // Random headers must never satisfy the fast check.
    let mut plaintext = [0u8; 44];
    rng.fill(&mut plaintext[12..]);
    let mut accepts = 0u32;
    for _ in 0..1_000_000 {
        rng.fill(&mut plaintext[..12]);
        if ccm::check_vmk_header(&plaintext) {
            accepts += 1;
        }
    }
    assert_eq!(accepts, 0);
}

#[test]
fn single_thread_throughput_meets_the_floor() {
    let cfg = attack_config(1, VerifyMode::Fast, WTablePolicy::Precompute);
    let mut best = 0.0f64;
    for window in [10u64, 10, 10, 10, 30] {
        let report = engine::benchmark(&cfg, Duration::from_secs(window))
            .expect("benchmark runs");
        assert_eq!(report.hashes_per_candidate, 2_097_154);
        best = best.max(report.total_rate);
        eprintln!("single-thread window: {:.2} candidates/s", report.total_rate);
        if best >= 15.0 {
            break;
        }
    }
    assert!(
        best >= 15.0,
        "single-thread throughput {best:.2} candidates/s is below the 15/s floor"
    );
}

#[test]
fn results_are_identical_across_thread_counts() {
    let started = Instant::now();
    for fixture in corpus() {
        let mut results = Vec::new();
        for threads in [1usize, 4, 8] {
            let result = engine::run_attack(
                &fixture.protector,
                CandidateSource::InMemory(fixture.dictionary.clone()),
                &attack_config(threads, VerifyMode::Fast, WTablePolicy::OnTheFly),
            )
            .expect("attack runs to completion");
            match result.outcome {
                Outcome::Found {
                    candidate,
                    vmk_plaintext,
                } => results.push((candidate, vmk_plaintext)),
                other => panic!("threads={threads}: expected Found, got {other:?}"),
            }
        }
        assert_eq!(results[0], results[1]);
        assert_eq!(results[1], results[2]);
        assert_eq!(results[0].0, fixture.secret);
        assert_eq!(results[0].1, fixture.vmk_plaintext.to_vec());
    }
    eprintln!(
        "thread-count determinism sweep took {:.0} s",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn recovery_password_rules_match_the_arithmetic_oracle() {
    assert!(kdf::validate_recovery_password(
        "236808-089419-192665-495704-618299-073414-538373-542366"
    )
    .is_ok());

    let started = Instant::now();
    for value in 0..1_000_000u32 {
        let group = format!("{value:06}");
        let candidate = format!(
            "{group}-{group}-{group}-{group}-{group}-{group}-{group}-{group}"
        );
        let expected = value % 11 == 0 && value < 720_896;
        assert_eq!(
            kdf::validate_recovery_password(&candidate).is_ok(),
            expected,
            "disagreement at {value}"
        );
    }
    assert!(
        started.elapsed() < Duration::from_secs(5),
        "exhaustive sweep took {:?}",
        started.elapsed()
    );
}

/// Runs the full parse pipeline on a (possibly mutated) image, making
/// sure every reachable result is produced without panicking.
fn parse_pipeline(image: &[u8]) {
    let Ok(offsets) = bde::locate_fve_blocks(image) else {
        return;
    };
    for offset in offsets {
        let Ok(block) = bde::parse_fve_block(image, offset) else {
            continue;
        };
        let Ok(extraction) = bde::extract_vmk_protectors(&block) else {
            continue;
        };
        bde::drive_description(&block);
        for protector in &extraction.protectors {
            let line = bde::serialize_hash_line(protector);
            let reparsed = bde::parse_hash_line(&line).expect("serialized lines reparse");
            assert_eq!(&reparsed, protector);
        }
    }
}

#[test]
fn fuzzed_images_never_crash_and_copies_agree() {
    let fixture = &corpus()[0];
    let mut image = fixture.image.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_acce + 9);
    for case in 0..100_000u32 {
        let mutations = rng.gen_range(1..=8);
        let mut undo: Vec<(usize, u8)> = Vec::with_capacity(mutations);
        for _ in 0..mutations {
            let at = rng.gen_range(0..image.len());
            undo.push((at, image[at]));
            image[at] = rng.gen();
        }
        let case_started = Instant::now();
        parse_pipeline(&image);
        assert!(
            case_started.elapsed() < Duration::from_secs(1),
            "case {case} took {:?}",
            case_started.elapsed()
        );
        for (at, byte) in undo.into_iter().rev() {
            image[at] = byte;
        }
    }
    assert_eq!(image, fixture.image);

    // Clean fixtures must present three equivalent copies.
    for fixture in corpus() {
        let offsets = bde::locate_fve_blocks(&fixture.image).unwrap();
        assert_eq!(offsets, bde::DEFAULT_BLOCK_OFFSETS.to_vec());
        let blocks: Vec<_> = offsets
            .iter()
            .map(|&offset| bde::parse_fve_block(&fixture.image, offset).unwrap())
            .collect();
        for block in &blocks[1..] {
            assert_eq!(block.entries.len(), blocks[0].entries.len());
            for (a, b) in block.entries.iter().zip(&blocks[0].entries) {
                assert_eq!(a.entry_type, b.entry_type);
                assert_eq!(a.value_type, b.value_type);
                assert_eq!(a.version, b.version);
                assert_eq!(a.body, b.body);
            }
            assert_eq!(
                bde::extract_vmk_protectors(block).unwrap().protectors,
                bde::extract_vmk_protectors(&blocks[0]).unwrap().protectors
            );
        }
    }
}

/// Interop against a real BitLocker volume, when the operator provides
/// one. Set BITCRACKER_REAL_IMAGE to the image path and
/// BITCRACKER_REAL_PASSWORD to its known user password; without them
/// this check reports itself skipped.
#[test]
fn real_volume_interop_when_an_image_is_provided() {
    let (image, password) = match (
        std::env::var("BITCRACKER_REAL_IMAGE"),
        std::env::var("BITCRACKER_REAL_PASSWORD"),
    ) {
        (Ok(image), Ok(password)) => (image, password),
        _ => {
            eprintln!(
                "skipped: set BITCRACKER_REAL_IMAGE and BITCRACKER_REAL_PASSWORD to run \
                 the real-volume interop check"
            );
            return;
        }
    };

    let mut hash_file = std::env::temp_dir();
    hash_file.push(format!("bitcracker-real-{}.hashes", std::process::id()));
    let mut wordlist = std::env::temp_dir();
    wordlist.push(format!("bitcracker-real-{}.words", std::process::id()));
    std::fs::write(
        &wordlist,
        format!("not-the-password\nalso-wrong\n{password}\n"),
    )
    .unwrap();

    let extract = std::process::Command::new(env!("CARGO_BIN_EXE_bitcracker"))
        .args([
            "extract",
            "--image",
            &image,
            "--output",
            hash_file.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert!(
        extract.status.success(),
        "extract failed: {}",
        String::from_utf8_lossy(&extract.stderr)
    );

    let attack = std::process::Command::new(env!("CARGO_BIN_EXE_bitcracker"))
        .args([
            "attack",
            "--hash",
            hash_file.to_str().unwrap(),
            "--wordlist",
            wordlist.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&attack.stdout);
    std::fs::remove_file(&hash_file).ok();
    std::fs::remove_file(&wordlist).ok();
    assert_eq!(
        attack.status.code(),
        Some(0),
        "attack failed: {}",
        String::from_utf8_lossy(&attack.stderr)
    );
    assert!(stdout.contains(&password), "{stdout}");
}
