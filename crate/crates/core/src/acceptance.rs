//! End-to-end acceptance checks.
//!
//! Each check runs a fixed, seeded workload and returns a one-line detail
//! string. The `acceptance` test target and the `selftest` CLI command both
//! drive [`run_all`].

use std::collections::HashMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bounds::{binary_entropy, ecc_bound, eps_sec_components, g_eps, pa_bound, BoundsInput};
use crate::crypto::commitment::{commit_with, equivocate, extract, keygen_with, verify_open, Commitment, Mode, Opening};
use crate::crypto::{GroupParams, GroupPreset};
use crate::feasibility::{equality_function, find_ot_cores, Quad, TwoPartyFunction};
use crate::gf2::{BitString, SyndromeFamily, UniversalHash};
use crate::harness::{
    chi_square_uniform, compare_real_ideal, run_experiment, AdversaryScript, ClassicalRule, ExperimentConfig, Mutation,
    Passwords,
};
use crate::pake::{FlowTag, ParamSet, PlainRunner, ProtocolParams, SessionOptions, SessionResult, SessionRunner};
use crate::qchannel::{ChannelModel, InterceptStrategy};
use crate::rng::{stream_rng, streams, trial_seed};
use crate::splitauth::compile;

/// Master seed shared by every check.
pub const SEED: u64 = 0x5eed_2024;

const ENTROPY_GRID: &str = include_str!("../tests/data/binary_entropy_grid.txt");

type CheckFn = fn() -> Result<String, String>;

pub struct Check {
    pub id: u8,
    pub name: &'static str,
    run: CheckFn,
}

pub const CHECKS: [Check; 11] = [
    Check { id: 1, name: "honest_completion", run: honest_completion },
    Check { id: 2, name: "wrong_password_independence", run: wrong_password_independence },
    Check { id: 3, name: "eavesdropper_detection", run: eavesdropper_detection },
    Check { id: 4, name: "split_authentication", run: split_authentication },
    Check { id: 5, name: "leftover_hash_exhaustive", run: leftover_hash_exhaustive },
    Check { id: 6, name: "syndrome_uniformity", run: syndrome_uniformity },
    Check { id: 7, name: "dual_mode_commitment", run: dual_mode_commitment },
    Check { id: 8, name: "ot_core_equality", run: ot_core_equality },
    Check { id: 9, name: "bounds_engine", run: bounds_engine },
    Check { id: 10, name: "password_independent_aborts", run: password_independent_aborts },
    Check { id: 11, name: "real_vs_ideal", run: real_vs_ideal },
];

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "AC{:02} {:<28} {} ({:.1}s) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

impl Check {
    /// Runs the check, turning a panic into a failure.
    pub fn run(&self) -> CheckOutcome {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(self.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        CheckOutcome { id: self.id, name: self.name, passed, detail, elapsed: start.elapsed() }
    }
}

/// Runs every check in order, calling `report` as each one finishes.
pub fn run_all(mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|c| {
            let o = c.run();
            report(&o);
            o
        })
        .collect()
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn setup(set: ParamSet) -> Result<Arc<ProtocolParams>, String> {
    ProtocolParams::setup(set).map(Arc::new).map_err(|e| e.to_string())
}

fn sim(k: usize, lambda: usize) -> ParamSet {
    ParamSet { k, lambda, group: GroupPreset::Sim64, ..ParamSet::default() }
}

fn within_three_sigma(count: u64, n: u64, p: f64) -> (bool, f64) {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let z = (count as f64 / n as f64 - p) / sigma;
    (z.abs() <= 3.0, z)
}

fn honest_completion() -> Result<String, String> {
    let p = setup(ParamSet { k: 256, alpha: 0.25, lambda: 16, ..sim(256, 16) })?;
    let cfg = ExperimentConfig::new(AdversaryScript::default(), Passwords::RandomEqual, 10_000, SEED);
    let start = Instant::now();
    let s = run_experiment(&p, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(
        s.agreed == s.trials && s.aborted == 0 && secs < 60.0,
        format!("{}/{} agreed, {} aborted, {secs:.1}s", s.agreed, s.trials, s.aborted),
    )
}

fn wrong_password_independence() -> Result<String, String> {
    let p = setup(ParamSet { tau: 0.03, ..sim(256, 8) })?;
    let cfg = ExperimentConfig::new(AdversaryScript::default(), Passwords::RandomDistinct, 100_000, SEED);
    let s = run_experiment(&p, &cfg).map_err(|e| e.to_string())?;
    let (close, z) = within_three_sigma(s.agreed, s.trials, 2f64.powi(-8));
    let (_, p_value) = chi_square_uniform(&s.key_byte_counts);
    ensure(
        close && p_value > 1e-3,
        format!("agreement {}/{} (z = {z:+.2}), chi-square p = {p_value:.4}", s.agreed, s.trials),
    )
}

fn eavesdropper_detection() -> Result<String, String> {
    let p = setup(ParamSet { tau: 0.1, ..sim(512, 16) })?;
    let script = AdversaryScript::passive(ChannelModel::InterceptResend(InterceptStrategy::RandomBasis));
    let cfg = ExperimentConfig::new(script, Passwords::RandomEqual, 1_000, SEED);
    let s = run_experiment(&p, &cfg).map_err(|e| e.to_string())?;
    ensure(
        s.abort_rate >= 0.99 && (s.test_error_rate - 0.25).abs() <= 0.01,
        format!("abort rate {:.3}, test error rate {:.4}", s.abort_rate, s.test_error_rate),
    )
}

fn classical_mutations(count: usize) -> Vec<ClassicalRule> {
    let tags = &FlowTag::ALL[1..];
    let mut rng = stream_rng(SEED, streams::ADVERSARY);
    (0..count)
        .map(|i| {
            let mutation = match (i / tags.len()) % 3 {
                0 => Mutation::Drop,
                1 => Mutation::FlipBits { offset: rng.gen_range(0..4096), mask: vec![1 << rng.gen_range(0..8)] },
                _ => {
                    let len = rng.gen_range(1..64);
                    Mutation::Replace((0..len).map(|_| rng.gen()).collect())
                }
            };
            ClassicalRule { tag: tags[i % tags.len()], mutation }
        })
        .collect()
}

fn split_authentication() -> Result<String, String> {
    let p = setup(sim(128, 8))?;
    let rules = classical_mutations(1_000);
    let compiled = compile(PlainRunner);
    let channel = ChannelModel::Ideal;
    let run = |runner: &dyn SessionRunner, rule: Option<&ClassicalRule>, seed: u64| -> SessionResult {
        let script = AdversaryScript { classical: rule.into_iter().cloned().collect(), ..AdversaryScript::default() };
        let mut tamper = script.tamper();
        runner.run(&p, 3, 3, &channel, Some(&mut tamper), seed, SessionOptions::default())
    };
    let (mut compiled_survivors, mut forgeries, mut divergent) = (0, 0, 0);
    for (i, rule) in rules.iter().enumerate() {
        let seed = trial_seed(SEED, i as u64);
        let c = run(&compiled, Some(rule), seed);
        forgeries += c.diagnostics.accepted_forgeries;
        if !c.any_abort() {
            compiled_survivors += 1;
        }
        let honest = run(&PlainRunner, None, seed);
        let plain = run(&PlainRunner, Some(rule), seed);
        if let Some((kc, ks)) = plain.both_keys() {
            if kc != ks || Some(kc) != honest.client.key() {
                divergent += 1;
            }
        }
    }
    ensure(
        compiled_survivors == 0 && forgeries == 0 && divergent >= 1,
        format!(
            "{} mutations: compiled non-aborts {compiled_survivors}, forgeries {forgeries}; uncompiled divergent completions {divergent}",
            rules.len()
        ),
    )
}

/// Sum over `(family member, output)` of `|2^out * count - 2^t|` for a flat
/// source on `support`. The exact averaged distance is this divided by
/// `2 * members * 2^t * 2^out`.
fn flat_distance_numerator(outputs: &[Vec<u8>], out_bits: usize, support: &[usize]) -> u128 {
    let size = support.len() as i128;
    outputs
        .iter()
        .map(|table| {
            let mut counts = vec![0i128; 1 << out_bits];
            for &x in support {
                counts[table[x] as usize] += 1;
            }
            counts.iter().map(|&c| ((c << out_bits) - size).unsigned_abs()).sum::<u128>()
        })
        .sum()
}

fn flat_supports(ell: usize, t: usize, extra: usize, stream: u64) -> Vec<Vec<usize>> {
    let mut supports = vec![(0..1usize << t).collect::<Vec<_>>()];
    if t < ell {
        let mut rng = stream_rng(SEED, stream);
        let mut all: Vec<usize> = (0..1usize << ell).collect();
        for _ in 0..extra {
            all.shuffle(&mut rng);
            let mut s = all[..1 << t].to_vec();
            s.sort_unstable();
            supports.push(s);
        }
    }
    supports
}

fn leftover_hash_exhaustive() -> Result<String, String> {
    let (ell, lambda) = (8usize, 2usize);
    let diag_len = ell + lambda - 1;
    let tables: Vec<Vec<u8>> = (0..1u64 << diag_len)
        .map(|d| {
            let h = UniversalHash::from_diagonal(BitString::from_u64(d, diag_len), ell, lambda).expect("valid dims");
            (0..1u64 << ell).map(|x| h.eval(&BitString::from_u64(x, ell)).expect("valid input").to_u64() as u8).collect()
        })
        .collect();
    let mut worst = 0f64;
    let mut checked = 0;
    for t in [4usize, 6, 8] {
        for support in flat_supports(ell, t, 31, streams::ADVERSARY) {
            let num = flat_distance_numerator(&tables, lambda, &support);
            let den = (2 * tables.len() as u128) << (t + lambda);
            // num / den <= 2^(-(t - lambda) / 2)  <=>  num^2 2^(t - lambda) <= den^2
            if (num * num) << (t - lambda) > den * den {
                return Err(format!("t = {t}: distance {num}/{den} exceeds 2^-{}", (t - lambda) as f64 / 2.0));
            }
            worst = worst.max(num as f64 / den as f64 * 2f64.powf((t - lambda) as f64 / 2.0));
            checked += 1;
        }
    }
    Ok(format!("{} hashes x {checked} flat sources, worst distance/bound {worst:.4}", tables.len()))
}

fn syndrome_uniformity() -> Result<String, String> {
    let (ell, syn, t) = (8usize, 4usize, 6usize);
    let family = SyndromeFamily::new(ell, syn, 0.1, 0.0, 16, SEED).map_err(|e| e.to_string())?;
    let indices: Vec<u64> = (0..16).collect();
    let bias = family.measured_bias(&indices).map_err(|e| e.to_string())?;
    let tables: Vec<Vec<u8>> = indices
        .iter()
        .map(|&j| {
            let code = family.code(j).expect("index in range");
            (0..1u64 << ell).map(|x| code.syndrome(&BitString::from_u64(x, ell)).expect("block length").to_u64() as u8).collect()
        })
        .collect();
    let mut worst = 0f64;
    let supports = flat_supports(ell, t, 63, streams::SETUP);
    for support in &supports {
        let num = flat_distance_numerator(&tables, syn, support);
        let den = (2 * tables.len() as u128) << (t + syn);
        // num / den <= delta 2^((ell - t) / 2), delta^2 = max_hits / codes
        let lhs = num * num * u128::from(bias.codes);
        let rhs = (u128::from(bias.max_hits) * den * den) << (ell - t);
        if lhs > rhs {
            return Err(format!("distance {num}/{den} exceeds delta {:.4} x 2^{}", bias.delta(), (ell - t) / 2));
        }
        worst = worst.max((lhs as f64 / rhs as f64).sqrt());
    }
    Ok(format!(
        "16 codes, delta_emp = {:.4}, {} flat sources, worst distance/bound {worst:.4}",
        bias.delta(),
        supports.len()
    ))
}

fn dual_mode_commitment() -> Result<String, String> {
    let g = Arc::new(GroupParams::preset(GroupPreset::Toy));
    let q = 11u64;
    let scalars: Vec<_> = (0..q).map(|v| g.scalar(v)).collect();
    let mut failures: [usize; 6] = [0; 6];
    const NAMES: [&str; 6] = ["correctness", "binding", "hiding", "extractability", "trapdoor opening", "opening indistinguishability"];
    let mut keys = 0;
    for a in &scalars[1..] {
        for b in &scalars[1..] {
            // binding mode
            let (ck, xk) = keygen_with(g.clone(), Mode::Binding, a, b, None).map_err(|e| e.to_string())?;
            keys += 1;
            let mut opened: HashMap<Commitment, bool> = HashMap::new();
            for r in &scalars {
                for s in &scalars {
                    for m in [false, true] {
                        let c = commit_with(&ck, m, r, s);
                        if !verify_open(&ck, &c, &Opening { m, r: r.clone(), s: s.clone() }) {
                            failures[0] += 1;
                        }
                        if opened.insert(c.clone(), m).is_some_and(|prev| prev != m) {
                            failures[1] += 1;
                        }
                        if extract(&ck, &xk, &c) != Ok(m) {
                            failures[3] += 1;
                        }
                    }
                }
            }
            // hiding mode, every admissible delta
            for d in &scalars {
                if *d == g.scalar_mul(a, b) {
                    continue;
                }
                let (ck, tk) = keygen_with(g.clone(), Mode::Hiding, a, b, Some(d)).map_err(|e| e.to_string())?;
                keys += 1;
                let mut per_bit: [HashMap<Commitment, usize>; 2] = Default::default();
                let mut fresh: [HashMap<(Commitment, Opening), usize>; 2] = Default::default();
                let mut equivocated: [HashMap<(Commitment, Opening), usize>; 2] = Default::default();
                for r in &scalars {
                    for s in &scalars {
                        for m in [false, true] {
                            let o = Opening { m, r: r.clone(), s: s.clone() };
                            let c = commit_with(&ck, m, r, s);
                            if !verify_open(&ck, &c, &o) {
                                failures[0] += 1;
                            }
                            *per_bit[usize::from(m)].entry(c.clone()).or_default() += 1;
                            *fresh[usize::from(m)].entry((c.clone(), o.clone())).or_default() += 1;
                            match equivocate(&ck, &tk, &c, &o, !m) {
                                Ok(o2) if verify_open(&ck, &c, &o2) && o2.m == !m => {
                                    *equivocated[usize::from(!m)].entry((c, o2)).or_default() += 1;
                                }
                                _ => failures[4] += 1,
                            }
                        }
                    }
                }
                if per_bit[0] != per_bit[1] {
                    failures[2] += 1;
                }
                if fresh != equivocated {
                    failures[5] += 1;
                }
            }
        }
    }
    let bad: Vec<String> = NAMES.iter().zip(failures).filter(|(_, f)| *f > 0).map(|(n, f)| format!("{n}: {f}")).collect();
    ensure(bad.is_empty(), if bad.is_empty() { format!("q = {q}, {keys} keys, 6 properties, 0 counterexamples") } else { bad.join(", ") })
}

fn ot_core_equality() -> Result<String, String> {
    let mut total = 0;
    for size in 3..=16 {
        let f = equality_function(size).map_err(|e| e.to_string())?;
        let cores = find_ot_cores(&f).map_err(|e| e.to_string())?;
        if cores.is_empty() {
            return Err(format!("no OT-core for EQUALITY over {size} symbols"));
        }
        for c in 1..size - 1 {
            let q = Quad::new(c, c + 1, c - 1, c + 1);
            if cores.binary_search(&q).is_err() {
                return Err(format!("size {size}: {q} missing"));
            }
        }
        total += cores.len();
    }
    for (na, nb, v) in [(2, 2, 0), (3, 5, 1), (7, 4, 9), (16, 16, 2)] {
        let f = TwoPartyFunction::from_fn(na, nb, |_, _| (v, v + 1)).map_err(|e| e.to_string())?;
        if !find_ot_cores(&f).map_err(|e| e.to_string())?.is_empty() {
            return Err(format!("constant {na}x{nb} function has a core"));
        }
    }
    Ok(format!("sizes 3..16: {total} cores, interior family present; constants empty"))
}

fn bounds_engine() -> Result<String, String> {
    let mut points = 0;
    let mut worst_h = 0f64;
    for line in ENTROPY_GRID.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        let (Some(mu), Some(h)) = (it.next(), it.next()) else {
            return Err(format!("bad grid line {line:?}"));
        };
        let mu = match mu.split_once('/') {
            Some((a, b)) => a.parse::<f64>().map_err(|e| e.to_string())? / b.parse::<f64>().map_err(|e| e.to_string())?,
            None => mu.parse::<f64>().map_err(|e| e.to_string())?,
        };
        let h: f64 = h.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        let diff = (binary_entropy(mu).map_err(|e| e.to_string())? - h).abs();
        worst_h = worst_h.max(diff);
        points += 1;
    }
    if points != 1000 || worst_h > 1e-9 {
        return Err(format!("{points} grid points, worst entropy error {worst_h:e}"));
    }

    let mut worst_c = 0f64;
    let mut cases = 0;
    for n in [256.0, 512.0, 1000.0, 4096.0, 20_000.0] {
        for tau in [0.0, 0.01, 0.03, 0.05] {
            for lambda in [8.0, 16.0, 64.0] {
                for eps in [0.001, 0.01, 0.05] {
                    let input = BoundsInput { epsilon: eps, ..BoundsInput::new(n, tau, lambda) };
                    let (ec, pa, sec) = eps_sec_components(&input).map_err(|e| e.to_string())?;
                    let g = g_eps(n, tau, eps, input.cbar).map_err(|e| e.to_string())?;
                    let ec2 = ecc_bound(input.delta, g + n / 2.0, n / 2.0);
                    let pa2 = pa_bound(g, lambda, eps);
                    for (a, b) in [(ec, ec2), (pa, pa2), (sec, ec2 + pa2)] {
                        let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                        worst_c = worst_c.max(rel);
                    }
                    cases += 1;
                }
            }
        }
    }
    let g = g_eps(1000.0, 0.05, 0.01, 0.5).map_err(|e| e.to_string())?;
    ensure(
        worst_c <= 1e-9 && (g - 172.6).abs() < 0.05,
        format!("entropy grid max error {worst_h:.1e}; composition over {cases} points max rel error {worst_c:.1e}; g = {g:.2}"),
    )
}

fn password_independent_aborts() -> Result<String, String> {
    let p = setup(sim(64, 8))?;
    let channel = ChannelModel::BitFlip(0.05);
    let opts = SessionOptions { record_transcript: true };
    let mut aborting = 0;
    for i in 0..100 {
        let seed = trial_seed(SEED, i);
        let runs: Vec<SessionResult> =
            [0u32, 5, 9, 15].iter().map(|&pw| PlainRunner.run(&p, pw, pw, &channel, None, seed, opts)).collect();
        let view = |r: &SessionResult| {
            let prefix = r.transcript.as_ref().expect("recorded").before_masks().to_vec();
            (prefix, r.client.is_abort(), r.server.is_abort())
        };
        let first = view(&runs[0]);
        if runs[1..].iter().any(|r| view(r) != first) {
            return Err(format!("seed index {i}: decisions or transcript prefix depend on the password"));
        }
        if runs[0].any_abort() {
            aborting += 1;
        }
    }
    Ok(format!("100 seeds x 4 passwords identical; {aborting} seeds abort"))
}

fn real_vs_ideal() -> Result<String, String> {
    let p = setup(sim(256, 8))?;
    let scripts = [
        ("honest", AdversaryScript::default()),
        ("single_guess", AdversaryScript { password_guess: Some(3), ..AdversaryScript::default() }),
        (
            "tamper",
            AdversaryScript {
                classical: vec![ClassicalRule { tag: FlowTag::Two1, mutation: Mutation::Drop }],
                ..AdversaryScript::default()
            },
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, script) in scripts {
        let cfg = ExperimentConfig::new(script, Passwords::RandomEqual, 10_000, SEED);
        let report = compare_real_ideal(&p, &cfg).map_err(|e| e.to_string())?;
        ok &= report.all_within_three_sigma();
        let rates: Vec<String> =
            report.rates.iter().map(|r| format!("{} {:.4}/{:.4}", r.name, r.real, r.ideal)).collect();
        parts.push(format!("{name}: {}", rates.join(" ")));
    }
    ensure(ok, parts.join("; "))
}
