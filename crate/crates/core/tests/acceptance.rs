//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! A few criteria cannot be met by a correct implementation; they are listed
//! in `KNOWN` with the reason, still reported as FAIL, and do not change the
//! exit status. Any other failure does.
//!
//! Set `MACANON_ACCEPT_FULL=1` to include the m = 100,000 simulation column.

use std::collections::HashSet;
use std::io::Cursor;
use std::process::ExitCode;
use std::time::Instant;

use macanon::analytics::{generate_table, TableKind};
use macanon::simulator::{generate_table3, published_median_pct, Table3Options};
use macanon::{
    anonymize, cli, collision_rate, format_mac, min_bits_for_rate, parse_mac, run_experiment,
    truncate_digest, AnonymizationPolicy, HashMode, KdfParams, MacAddress, Salt, TrialConfig,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const KNOWN: &[(u32, &str)] = &[
    (
        1,
        "the stated value 0.006023 for (100, 2^14) is 1.4e-6 from the exact rate 0.0060244, \
         outside its own 1e-6 tolerance",
    ),
    (
        5,
        "the published medians match duplicate counting over half as many buckets, not the \
         colliding-member count at the stated width (see diagnostic above)",
    ),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let cases = [
        (10_000u64, 20u32, 0.009491),
        (1_000, 17, 0.007593),
        (100, 14, 0.006023),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, bits, want) in cases {
        let got = collision_rate(m, 1 << bits).unwrap();
        let ok = (got - want).abs() <= 1e-6;
        pass &= ok;
        parts.push(format!(
            "({m}, 2^{bits}) = {got:.7} vs {want} {}",
            if ok { "ok" } else { "OUT" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_2() -> Outcome {
    let n = 1u64 << 24;
    // p = 1 - (1 - 1/n)^(m-1) crosses 0.01 near m - 1 = ln(0.99) / ln(1 - 1/n).
    let estimate = 1.0 + 0.99f64.ln() / (-1.0 / n as f64).ln_1p();
    let start = (estimate as u64).saturating_sub(1_000);
    assert!(collision_rate(start, n).unwrap() <= 0.01);
    let found = (start..)
        .find(|&m| collision_rate(m, n).unwrap() > 0.01)
        .unwrap();
    outcome(
        found == 168_618,
        format!("smallest m = {found} (estimate {estimate:.1})"),
    )
}

fn criterion_3() -> Outcome {
    let table = generate_table(TableKind::BirthdayBound);
    let cells: Vec<_> = table.cells().collect();
    let matched = cells.iter().filter(|c| c.matches_published()).count();
    outcome(
        matched == 20 && cells.len() == 20,
        format!("{matched}/{} cells match", cells.len()),
    )
}

fn criterion_4() -> Outcome {
    let table = generate_table(TableKind::CollisionRate);
    let cells: Vec<_> = table.cells().collect();
    let matched = cells.iter().filter(|c| c.matches_published()).count();
    let mut off: Vec<(u64, f64, u32)> = table
        .discrepancies()
        .iter()
        .map(|c| (c.m, c.p, c.bits))
        .collect();
    off.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expected = vec![(100, 0.05, 11), (100_000, 0.5, 18), (100_000, 0.75, 17)];
    let notes = table.to_text().matches("published grid shows").count();
    outcome(
        matched == 17 && off == expected && notes == 3,
        format!("{matched}/20 match; discrepancies {off:?}; {notes} notes"),
    )
}

fn tolerance_ok(bits: u32, m: u64, got_pct: f64, published: f64) -> bool {
    if bits == 13 && m == 100 {
        (0.0..=2.0).contains(&got_pct)
    } else if published < 15.0 {
        (got_pct - published).abs() <= 0.3
    } else {
        (got_pct - published).abs() <= 2.0
    }
}

fn criterion_5(full: bool) -> Outcome {
    let mut counts = vec![100, 1_000, 10_000];
    if full {
        counts.push(100_000);
    }
    let options = Table3Options {
        counts: counts.clone(),
        ..Table3Options::default()
    };
    let started = Instant::now();
    let table = generate_table3(&options).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let mut bad = Vec::new();
    let mut total = 0;
    for cell in &table.cells {
        let (bits, m) = (cell.config.digest_bits, cell.config.m);
        let published = published_median_pct(bits, m).unwrap();
        let got = cell.median_rate * 100.0;
        total += 1;
        if !tolerance_ok(bits, m, got, published) {
            bad.push(format!("(2^{bits}, {m}) {got:.1}% vs {published}%"));
        }
    }

    // Not part of the criterion: the same grid counted as duplicates over
    // one bit fewer.
    let shifted = generate_table3(&Table3Options {
        counts,
        bits: 12..=20,
        ..Table3Options::default()
    })
    .unwrap();
    let mut worst: f64 = 0.0;
    for cell in &shifted.cells {
        let published = published_median_pct(cell.config.digest_bits + 1, cell.config.m).unwrap();
        worst = worst.max((cell.duplicate_median_rate * 100.0 - published).abs());
    }
    println!(
        "    diagnostic: duplicate counting at (bits - 1) reproduces every cell within {worst:.2} pp"
    );

    outcome(
        bad.is_empty(),
        format!(
            "{}/{total} cells in tolerance ({elapsed:.1} s){}{}",
            total - bad.len(),
            if bad.is_empty() { "" } else { "; out: " },
            bad.join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, bits) in [(1_000u64, 17u32), (10_000, 20)] {
        let report = run_experiment(&TrialConfig::new(m, bits, 1_000, 6)).unwrap();
        let p = collision_rate(m, 1 << bits).unwrap();
        let se = report.mean_rate_std_error();
        let z = (report.mean_rate - p) / se;
        pass &= z.abs() <= 5.0;
        parts.push(format!(
            "(m={m}, b={bits}) mean {:.4}% vs {:.4}%, z = {z:+.2}",
            report.mean_rate * 100.0,
            p * 100.0
        ));
    }
    parts.push(format!("{:.1} s", started.elapsed().as_secs_f64()));
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let fast = run_experiment(&TrialConfig::new(1_000, 16, 100, 7)).unwrap();
    let mut config = TrialConfig::new(1_000, 16, 100, 7);
    config.hash_mode = HashMode::Kdf;
    config.kdf = KdfParams::with_cost(8 * 1024, 1);
    let started = Instant::now();
    let kdf = run_experiment(&config).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let se = (fast.mean_rate_std_error().powi(2) + kdf.mean_rate_std_error().powi(2)).sqrt();
    let diff = kdf.mean_rate - fast.mean_rate;
    println!(
        "    runtime: {elapsed:.0} s for 100 KDF rounds on {} thread(s) (target < 300 s)",
        rayon::current_num_threads()
    );
    outcome(
        diff.abs() <= 3.0 * se,
        format!(
            "kdf {:.4}% vs fast {:.4}%, difference {:.2} SE",
            kdf.mean_rate * 100.0,
            fast.mean_rate * 100.0,
            diff / se
        ),
    )
}

fn planner_minimality() -> bool {
    let mut ok = true;
    for m in [100u64, 1_000, 10_000] {
        for p in [0.01, 0.05, 0.5, 0.75] {
            let plan = min_bits_for_rate(m, p).unwrap();
            let first = (1..=64u32)
                .find(|&b| collision_rate(m, 1u64 << b.min(63)).unwrap() <= p)
                .unwrap();
            ok &= plan.bits == first;
        }
    }
    ok
}

fn rate_monotonicity() -> bool {
    let mut ok = true;
    for bits in 4..=40u32 {
        let n = 1u64 << bits;
        let mut prev = 0.0;
        for m in [1u64, 2, 3, 10, 100, 1_000, 10_000, 100_000, 1_000_000] {
            let r = collision_rate(m, n).unwrap();
            ok &= r >= prev && r <= 1.0;
            prev = r;
        }
        for m in [2u64, 50, 5_000] {
            ok &= collision_rate(m, n).unwrap() >= collision_rate(m, n * 2).unwrap();
        }
    }
    ok
}

fn mac_round_trip(rng: &mut ChaCha8Rng) -> bool {
    (0..100_000).all(|_| {
        let mac = MacAddress::new(rng.gen::<u64>() >> 16).unwrap();
        let text = format_mac(mac);
        parse_mac(&text).ok() == Some(mac)
            && parse_mac(&text.to_uppercase().replace(':', "-")).ok() == Some(mac)
    })
}

fn truncation(rng: &mut ChaCha8Rng) -> bool {
    (0..10_000).all(|_| {
        let mut digest = [0u8; 32];
        rng.fill_bytes(&mut digest);
        let bits = rng.gen_range(1..=64);
        let value = truncate_digest(&digest, bits).unwrap();
        let head = u64::from_be_bytes(digest[..8].try_into().unwrap());
        (bits == 64 || value < 1 << bits) && value == head >> (64 - bits)
    })
}

fn cheap_policy(rng: &mut ChaCha8Rng, bits: u32) -> AnonymizationPolicy {
    let mut secret = vec![0u8; 16];
    rng.fill_bytes(&mut secret);
    AnonymizationPolicy::new(KdfParams::minimal(), Salt::new(secret).unwrap(), bits, None).unwrap()
}

fn determinism(rng: &mut ChaCha8Rng) -> bool {
    let policy = cheap_policy(rng, 24);
    let macs_ok = (0..100).all(|_| {
        let mac = MacAddress::new(rng.gen::<u64>() >> 16).unwrap();
        anonymize(mac, &policy).unwrap() == anonymize(mac, &policy).unwrap()
    });
    let mut config = TrialConfig::new(2_000, 16, 50, 8);
    let runs: Vec<_> = [Some(1), Some(2), Some(4), None]
        .into_iter()
        .map(|w| {
            config.workers = w;
            run_experiment(&config).unwrap().per_round_colliding
        })
        .collect();
    macs_ok && runs.windows(2).all(|w| w[0] == w[1])
}

fn salt_sensitivity(rng: &mut ChaCha8Rng) -> bool {
    let bits = 8;
    let a = cheap_policy(rng, bits);
    let b = cheap_policy(rng, bits);
    let trials = 1_000;
    let equal = (0..trials)
        .filter(|_| {
            let mac = MacAddress::new(rng.gen::<u64>() >> 16).unwrap();
            anonymize(mac, &a).unwrap() == anonymize(mac, &b).unwrap()
        })
        .count();
    let p = 2f64.powi(-(bits as i32));
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (equal as f64 / trials as f64 - p).abs() <= 3.0 * se
}

fn chi_square(rng: &mut ChaCha8Rng) -> bool {
    let anonymizer = macanon::Anonymizer::new(cheap_policy(rng, 16)).unwrap();
    let samples = 20_000u64;
    let mut counts = vec![0u64; 1 << 16];
    for _ in 0..samples {
        let mac = MacAddress::new(rng.gen::<u64>() >> 16).unwrap();
        counts[anonymizer.anonymize(mac).unwrap().value() as usize] += 1;
    }
    let expected = samples as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    stat < critical
}

fn hygiene(rng: &mut ChaCha8Rng) -> bool {
    let macs: Vec<MacAddress> = (0..200)
        .map(|_| MacAddress::new(rng.gen::<u64>() >> 16).unwrap())
        .collect();
    let input: String = macs
        .iter()
        .map(|m| format!("{}\n", format_mac(*m)))
        .collect();
    let forbidden: HashSet<MacAddress> = macs.iter().copied().collect();
    [["--output-format", "jsonl"], ["--output-format", "csv"]]
        .iter()
        .all(|fmt| {
            let args = [
                "macanon",
                "anonymize",
                "--salt-hex",
                "000102030405060708090a0b0c0d0e0f",
                "--memory-cost",
                "64",
                "--time-cost",
                "1",
                "--bits",
                "48",
                fmt[0],
                fmt[1],
            ];
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = cli::run(args, &mut Cursor::new(input.as_bytes()), &mut out, &mut err);
            let all = String::from_utf8_lossy(&out).into_owned() + &String::from_utf8_lossy(&err);
            let bare_leak = macs.iter().any(|m| {
                all.contains(&format_mac(*m)) || all.contains(&format_mac(*m).replace(':', ""))
            });
            let parsed_leak = all
                .split(|c: char| c == ',' || c == '"' || c.is_whitespace())
                .filter_map(|t| parse_mac(t).ok())
                .any(|m| forbidden.contains(&m));
            code == cli::EXIT_OK && !bare_leak && !parsed_leak
        })
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let checks: Vec<(&str, bool)> = vec![
        ("planner minimality (brute force)", planner_minimality()),
        ("monotonicity of the collision rate", rate_monotonicity()),
        (
            "parse/format round trip, 10^5 addresses",
            mac_round_trip(&mut rng),
        ),
        (
            "truncation bound and MSB prefix, 10^4 digests",
            truncation(&mut rng),
        ),
        (
            "determinism of anonymize and seeded experiments",
            determinism(&mut rng),
        ),
        ("salt sensitivity", salt_sensitivity(&mut rng)),
        ("uniformity chi-square, 2^16 buckets", chi_square(&mut rng)),
        ("raw-address hygiene of CLI output", hygiene(&mut rng)),
    ];
    for (name, ok) in &checks {
        println!("    {} {name}", if *ok { "ok  " } else { "FAIL" });
    }
    let passed = checks.iter().filter(|c| c.1).count();
    outcome(
        passed == checks.len(),
        format!("{passed}/{} properties hold", checks.len()),
    )
}

type Check = Box<dyn Fn() -> Outcome>;

fn main() -> ExitCode {
    let full = std::env::var("MACANON_ACCEPT_FULL").is_ok_and(|v| v == "1");
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "collision-rate spot values", Box::new(criterion_1)),
        (2, "1% threshold at 2^24 buckets", Box::new(criterion_2)),
        (3, "birthday-bound table", Box::new(criterion_3)),
        (4, "collision-rate table", Box::new(criterion_4)),
        (
            5,
            "simulated median collision table",
            Box::new(move || criterion_5(full)),
        ),
        (
            6,
            "fast-mode mean agrees with formula",
            Box::new(criterion_6),
        ),
        (7, "KDF mode agrees with fast mode", Box::new(criterion_7)),
        (8, "property suite", Box::new(criterion_8)),
    ];

    let mut unexpected = 0;
    for (id, title, run) in criteria {
        let result = run();
        let known = KNOWN.iter().find(|k| k.0 == id).map(|k| k.1);
        let status = match (result.pass, known) {
            (true, _) => "PASS",
            (false, Some(_)) => "FAIL (known)",
            (false, None) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id} {status}: {title}: {}", result.detail);
        if let (false, Some(reason)) = (result.pass, known) {
            println!("    known: {reason}");
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
