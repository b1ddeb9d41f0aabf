//! Monte-Carlo experiments over seeded trials, in the real protocol and
//! against the ideal functionality.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::fpwke::{FpwkeQuery, FpwkeResponse, FpwkeState};
use super::script::AdversaryScript;
use super::HarnessError;
use crate::gf2::BitString;
use crate::pake::{Outcome, PlainRunner, ProtocolParams, Role, SessionOptions, SessionResult, SessionRunner, TestCheck};
use crate::qchannel::ChannelModel;
use crate::rng::{stream_rng, streams, trial_seed};
use crate::splitauth::{compile, PartyId};

pub const HISTOGRAM_BINS: usize = 20;

/// How each trial picks the two passwords.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passwords {
    Fixed { client: u32, server: u32 },
    /// One uniform password shared by both parties.
    RandomEqual,
    /// Two uniform passwords conditioned on being different.
    RandomDistinct,
}

impl Passwords {
    fn draw(self, dictionary: usize, rng: &mut impl Rng) -> (u32, u32) {
        let d = dictionary as u32;
        match self {
            Passwords::Fixed { client, server } => (client, server),
            Passwords::RandomEqual => {
                let pw = rng.gen_range(0..d);
                (pw, pw)
            }
            Passwords::RandomDistinct => {
                let a = rng.gen_range(0..d);
                let b = (a + rng.gen_range(1..d.max(2))) % d;
                (a, b)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub script: AdversaryScript,
    pub passwords: Passwords,
    pub trials: u64,
    pub seed: u64,
    /// Run under the split-authentication compiler.
    pub compiled: bool,
}

impl ExperimentConfig {
    pub fn new(script: AdversaryScript, passwords: Passwords, trials: u64, seed: u64) -> Self {
        Self { script, passwords, trials, seed, compiled: false }
    }

    pub fn validate(&self, params: &ProtocolParams) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if let Passwords::Fixed { client, server } = self.passwords {
            for pw in [client, server] {
                params.check_password(pw).map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        if self.passwords == Passwords::RandomDistinct && params.set.dictionary_size < 2 {
            return Err(HarnessError::Config("distinct passwords need a dictionary of at least 2".into()));
        }
        self.script.validate(params)
    }

    /// Hex digest of the parameters and the canonical JSON of this config.
    pub fn fingerprint(&self, params: &ProtocolParams) -> String {
        let mut h = Sha256::new();
        h.update(params.fingerprint().as_bytes());
        h.update(serde_json::to_vec(self).expect("config serializes"));
        crate::hexfmt::encode(&h.finalize()[..16])
    }
}

/// What one trial contributes to the statistics.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialRecord {
    /// Both honest parties output a key.
    pub completed: bool,
    pub aborted: bool,
    pub agreed: bool,
    /// Set when the adversary tried a password: whether its key matched.
    pub guess_success: Option<bool>,
    pub test: Option<TestCheck>,
    pub client_abort: Option<&'static str>,
    pub server_abort: Option<&'static str>,
    pub client_key: Option<BitString>,
    pub forgeries: usize,
    pub decode_failed: bool,
}

impl TrialRecord {
    /// One JSON object per trial, for line-delimited output.
    pub fn to_json(&self, index: u64) -> serde_json::Value {
        serde_json::json!({
            "trial": index,
            "completed": self.completed,
            "aborted": self.aborted,
            "agreed": self.agreed,
            "guess_success": self.guess_success,
            "client_abort": self.client_abort,
            "server_abort": self.server_abort,
            "test_matched": self.test.map(|t| t.matched),
            "test_errors": self.test.map(|t| t.errors),
            "client_key": self.client_key.as_ref().map(BitString::to_hex),
            "forgeries": self.forgeries,
            "decode_failed": self.decode_failed,
        })
    }
}

fn abort_kind(o: &Outcome) -> Option<&'static str> {
    match o {
        Outcome::Abort(r) => Some(r.kind()),
        _ => None,
    }
}

fn trial_passwords(params: &ProtocolParams, cfg: &ExperimentConfig, seed: u64) -> (u32, u32) {
    cfg.passwords.draw(params.set.dictionary_size, &mut stream_rng(seed, streams::ADVERSARY))
}

/// Runs trial `index` of an experiment in the real protocol.
///
/// With a password guess the adversary plays the client against the honest
/// server using the guess; the honest client is cut off and times out.
pub fn run_trial(params: &Arc<ProtocolParams>, cfg: &ExperimentConfig, index: u64, opts: SessionOptions) -> (TrialRecord, SessionResult) {
    let seed = trial_seed(cfg.seed, index);
    let (pw_c, pw_s) = trial_passwords(params, cfg, seed);
    let script = &cfg.script;
    let mut tamper = script.tamper();
    let tamper = (!script.classical.is_empty()).then_some(&mut tamper as &mut dyn crate::pake::WireTamper);
    let pw_client = script.password_guess.unwrap_or(pw_c);
    let result = if cfg.compiled {
        compile(PlainRunner).run(params, pw_client, pw_s, &script.quantum, tamper, seed, opts)
    } else {
        PlainRunner.run(params, pw_client, pw_s, &script.quantum, tamper, seed, opts)
    };

    let mut rec = TrialRecord {
        test: result.diagnostics.t1,
        forgeries: result.diagnostics.accepted_forgeries,
        decode_failed: result.diagnostics.decode_failed,
        ..TrialRecord::default()
    };
    if script.password_guess.is_some() {
        rec.guess_success = Some(result.keys_agree());
        rec.aborted = true;
        rec.client_abort = Some("timeout");
        rec.server_abort = abort_kind(&result.server);
    } else {
        rec.completed = result.both_keys().is_some();
        rec.aborted = !rec.completed;
        rec.agreed = result.keys_agree();
        rec.client_abort = abort_kind(&result.client);
        rec.server_abort = abort_kind(&result.server);
        rec.client_key = result.client.key().map(|k| k.0.clone());
    }
    (rec, result)
}

/// Runs trial `index` against the ideal functionality.
///
/// The simulated adversary picks its own key, tests its password guess on
/// the server's record if it has one, and stops both parties from receiving
/// a key whenever its script interferes with a classical flow. Channel noise
/// is invisible to the ideal world, so only scripts with a passive quantum
/// channel can be compared.
pub fn ideal_trial(params: &ProtocolParams, cfg: &ExperimentConfig, index: u64) -> TrialRecord {
    let seed = trial_seed(cfg.seed, index);
    let (pw_c, pw_s) = trial_passwords(params, cfg, seed);
    let (c, s) = (PartyId::from(Role::Client), PartyId::from(Role::Server));
    let mut rng = stream_rng(seed, streams::IDEAL);
    let adversary_key = BitString::random(&mut rng, params.set.lambda);
    let mut f = FpwkeState::new(params.set.lambda, rng);
    f.step(FpwkeQuery::NewSession { party: c, peer: s, pw: pw_c, role: Role::Client });
    f.step(FpwkeQuery::NewSession { party: s, peer: c, pw: pw_s, role: Role::Server });
    let new_key = |f: &mut FpwkeState, party| match f.step(FpwkeQuery::NewKey { party, sk: adversary_key.clone() }) {
        FpwkeResponse::KeyOutput { key, .. } => Some(key),
        _ => None,
    };

    let mut rec = TrialRecord::default();
    if let Some(guess) = cfg.script.password_guess {
        f.step(FpwkeQuery::TestPwd { party: s, guess });
        let server_key = new_key(&mut f, s);
        rec.guess_success = Some(server_key.as_ref() == Some(&adversary_key));
        rec.aborted = true;
        rec.client_abort = Some("timeout");
    } else if cfg.script.tampers() {
        // a password no party holds marks the server's record interrupted
        f.step(FpwkeQuery::TestPwd { party: s, guess: u32::MAX });
        rec.aborted = true;
        rec.client_abort = Some("timeout");
        rec.server_abort = Some("interrupted");
    } else {
        let kc = new_key(&mut f, c);
        let ks = new_key(&mut f, s);
        rec.completed = true;
        rec.agreed = kc.is_some() && kc == ks;
        rec.client_key = kc;
    }
    rec
}

/// Aggregate counts over a set of trials. Merging is associative and
/// commutative, so the result does not depend on scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub config_fingerprint: String,
    pub params_fingerprint: String,
    pub trials: u64,
    pub completed: u64,
    pub aborted: u64,
    pub agreed: u64,
    pub guess_attempts: u64,
    pub guess_successes: u64,
    pub completion_rate: f64,
    pub abort_rate: f64,
    pub agreement_rate: f64,
    pub guess_success_rate: f64,
    /// Counts keyed by `role:reason`.
    pub abort_reasons: BTreeMap<String, u64>,
    pub accepted_forgeries: u64,
    pub decode_failures: u64,
    /// Pooled error rate on the matched positions of the first test set.
    pub test_errors: u64,
    pub test_matched: u64,
    pub test_error_rate: f64,
    /// Per-trial test error rates in equal-width bins over [0, 1].
    pub error_rate_histogram: Vec<u64>,
    /// Frequencies of every whole byte of the client keys.
    pub key_byte_counts: Vec<u64>,
}

impl ExperimentStats {
    fn empty() -> Self {
        Self {
            config_fingerprint: String::new(),
            params_fingerprint: String::new(),
            trials: 0,
            completed: 0,
            aborted: 0,
            agreed: 0,
            guess_attempts: 0,
            guess_successes: 0,
            completion_rate: 0.0,
            abort_rate: 0.0,
            agreement_rate: 0.0,
            guess_success_rate: 0.0,
            abort_reasons: BTreeMap::new(),
            accepted_forgeries: 0,
            decode_failures: 0,
            test_errors: 0,
            test_matched: 0,
            test_error_rate: 0.0,
            error_rate_histogram: vec![0; HISTOGRAM_BINS],
            key_byte_counts: vec![0; 256],
        }
    }

    fn add(mut self, r: &TrialRecord) -> Self {
        self.trials += 1;
        self.completed += u64::from(r.completed);
        self.aborted += u64::from(r.aborted);
        self.agreed += u64::from(r.agreed);
        if let Some(ok) = r.guess_success {
            self.guess_attempts += 1;
            self.guess_successes += u64::from(ok);
        }
        for (role, kind) in [("client", r.client_abort), ("server", r.server_abort)] {
            if let Some(kind) = kind {
                *self.abort_reasons.entry(format!("{role}:{kind}")).or_insert(0) += 1;
            }
        }
        self.accepted_forgeries += r.forgeries as u64;
        self.decode_failures += u64::from(r.decode_failed);
        if let Some(t) = r.test {
            self.test_errors += t.errors as u64;
            self.test_matched += t.matched as u64;
            if let Some(bin) = (t.errors * HISTOGRAM_BINS).checked_div(t.matched) {
                self.error_rate_histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
            }
        }
        if let Some(key) = &r.client_key {
            for byte in 0..key.len() / 8 {
                let v = (0..8).fold(0usize, |acc, i| (acc << 1) | usize::from(key.get(8 * byte + i)));
                self.key_byte_counts[v] += 1;
            }
        }
        self
    }

    fn merge(mut self, o: Self) -> Self {
        self.trials += o.trials;
        self.completed += o.completed;
        self.aborted += o.aborted;
        self.agreed += o.agreed;
        self.guess_attempts += o.guess_attempts;
        self.guess_successes += o.guess_successes;
        for (k, v) in o.abort_reasons {
            *self.abort_reasons.entry(k).or_insert(0) += v;
        }
        self.accepted_forgeries += o.accepted_forgeries;
        self.decode_failures += o.decode_failures;
        self.test_errors += o.test_errors;
        self.test_matched += o.test_matched;
        for (a, b) in self.error_rate_histogram.iter_mut().zip(o.error_rate_histogram) {
            *a += b;
        }
        for (a, b) in self.key_byte_counts.iter_mut().zip(o.key_byte_counts) {
            *a += b;
        }
        self
    }

    fn finish(mut self, config_fingerprint: String, params_fingerprint: String) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.config_fingerprint = config_fingerprint;
        self.params_fingerprint = params_fingerprint;
        self.completion_rate = ratio(self.completed, self.trials);
        self.abort_rate = ratio(self.aborted, self.trials);
        self.agreement_rate = ratio(self.agreed, self.trials);
        self.guess_success_rate = ratio(self.guess_successes, self.guess_attempts);
        self.test_error_rate = ratio(self.test_errors, self.test_matched);
        self
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        records.into_iter().fold(Self::empty(), Self::add).finish(String::new(), String::new())
    }

    /// Pretty JSON with a trailing newline; equal inputs give equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialize");
        s.push('\n');
        s
    }
}

fn aggregate(trials: u64, f: impl Fn(u64) -> TrialRecord + Sync) -> ExperimentStats {
    (0..trials)
        .into_par_iter()
        .fold(ExperimentStats::empty, |acc, i| acc.add(&f(i)))
        .reduce(ExperimentStats::empty, ExperimentStats::merge)
}

/// Runs `cfg.trials` real sessions on the current rayon pool.
pub fn run_experiment(params: &Arc<ProtocolParams>, cfg: &ExperimentConfig) -> Result<ExperimentStats, HarnessError> {
    cfg.validate(params)?;
    let stats = aggregate(cfg.trials, |i| run_trial(params, cfg, i, SessionOptions::default()).0);
    Ok(stats.finish(cfg.fingerprint(params), params.fingerprint().to_string()))
}

/// Like [`run_experiment`], also returning every trial's record in index order.
pub fn run_experiment_records(
    params: &Arc<ProtocolParams>,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentStats, Vec<TrialRecord>), HarnessError> {
    cfg.validate(params)?;
    let records: Vec<TrialRecord> =
        (0..cfg.trials).into_par_iter().map(|i| run_trial(params, cfg, i, SessionOptions::default()).0).collect();
    let stats = records.iter().fold(ExperimentStats::empty(), ExperimentStats::add);
    Ok((stats.finish(cfg.fingerprint(params), params.fingerprint().to_string()), records))
}

/// The same experiment with every session replaced by the ideal functionality.
pub fn run_ideal_experiment(params: &ProtocolParams, cfg: &ExperimentConfig) -> Result<ExperimentStats, HarnessError> {
    cfg.validate(params)?;
    if !matches!(cfg.script.quantum, ChannelModel::Ideal | ChannelModel::BitFlip(_)) {
        return Err(HarnessError::Inexpressible(format!("{:?} has no counterpart in the ideal world", cfg.script.quantum)));
    }
    let stats = aggregate(cfg.trials, |i| ideal_trial(params, cfg, i));
    Ok(stats.finish(cfg.fingerprint(params), params.fingerprint().to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub name: String,
    pub real: f64,
    pub ideal: f64,
    /// Standard deviation of the difference.
    pub sigma: f64,
    pub within_three_sigma: bool,
}

impl RateComparison {
    fn new(name: &str, real: (u64, u64), ideal: (u64, u64)) -> Self {
        let rate = |(a, n): (u64, u64)| if n == 0 { 0.0 } else { a as f64 / n as f64 };
        let var = |p: f64, (_, n): (u64, u64)| if n == 0 { 0.0 } else { p * (1.0 - p) / n as f64 };
        let (r, i) = (rate(real), rate(ideal));
        let sigma = (var(r, real) + var(i, ideal)).sqrt();
        Self { name: name.into(), real: r, ideal: i, sigma, within_three_sigma: (r - i).abs() <= 3.0 * sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealIdealReport {
    pub trials: u64,
    pub rates: Vec<RateComparison>,
    pub real: ExperimentStats,
    pub ideal: ExperimentStats,
}

impl RealIdealReport {
    pub fn all_within_three_sigma(&self) -> bool {
        self.rates.iter().all(|r| r.within_three_sigma)
    }
}

/// Paired real and ideal runs over the same trial seeds, compared on abort,
/// agreement and guess-success rates.
pub fn compare_real_ideal(params: &Arc<ProtocolParams>, cfg: &ExperimentConfig) -> Result<RealIdealReport, HarnessError> {
    let ideal = run_ideal_experiment(params, cfg)?;
    let real = run_experiment(params, cfg)?;
    let rates = vec![
        RateComparison::new("abort", (real.aborted, real.trials), (ideal.aborted, ideal.trials)),
        RateComparison::new("agreement", (real.agreed, real.trials), (ideal.agreed, ideal.trials)),
        RateComparison::new(
            "guess_success",
            (real.guess_successes, real.guess_attempts),
            (ideal.guess_successes, ideal.guess_attempts),
        ),
    ];
    Ok(RealIdealReport { trials: cfg.trials, rates, real, ideal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::GroupPreset;
    use crate::harness::{ClassicalRule, Mutation};
    use crate::pake::{FlowTag, ParamSet};

    fn params() -> Arc<ProtocolParams> {
        params_k(64)
    }

    /// Wrong guesses only fail reliably once the password code's distance
    /// exceeds what the decoder can correct, which needs a few hundred qubits.
    fn params_k(k: usize) -> Arc<ProtocolParams> {
        let set = ParamSet { k, lambda: 8, group: GroupPreset::Sim64, ..ParamSet::default() };
        Arc::new(ProtocolParams::setup(set).unwrap())
    }

    fn sigma_ok(count: u64, n: u64, p: f64) -> bool {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        (count as f64 / n as f64 - p).abs() <= 3.0 * sigma
    }

    #[test]
    fn honest_experiment() {
        let p = params();
        let cfg = ExperimentConfig::new(AdversaryScript::default(), Passwords::RandomEqual, 200, 1);
        let s = run_experiment(&p, &cfg).unwrap();
        assert_eq!((s.trials, s.completed, s.agreed, s.aborted), (200, 200, 200, 0));
        assert_eq!(s.agreement_rate, 1.0);
        assert_eq!(s.completed + s.aborted, s.trials);
        assert_eq!(s.key_byte_counts.iter().sum::<u64>(), 200);
        assert_eq!(s.error_rate_histogram[0], 200);
    }

    #[test]
    fn records_match_aggregate_stats() {
        let p = params();
        let cfg = ExperimentConfig::new(AdversaryScript::passive(ChannelModel::BitFlip(0.05)), Passwords::RandomEqual, 40, 4);
        let (stats, records) = run_experiment_records(&p, &cfg).unwrap();
        assert_eq!(stats, run_experiment(&p, &cfg).unwrap());
        assert_eq!(records.len(), 40);
        assert_eq!(records[7], run_trial(&p, &cfg, 7, SessionOptions::default()).0);
        let line = records[0].to_json(0);
        assert_eq!(line["trial"], 0);
        assert_eq!(line["completed"], records[0].completed);
        assert_eq!(line["client_key"].is_string(), records[0].client_key.is_some());
    }

    #[test]
    fn stats_do_not_depend_on_thread_count() {
        let p = params();
        let cfg = ExperimentConfig::new(AdversaryScript::passive(ChannelModel::BitFlip(0.05)), Passwords::RandomEqual, 60, 9);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_experiment(&p, &cfg).unwrap().to_json())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(1));
        let other = ExperimentConfig { seed: 10, ..cfg.clone() };
        assert_ne!(run_experiment(&p, &other).unwrap().to_json(), one);
    }

    #[test]
    fn password_guess_succeeds_at_the_online_rate() {
        let p = params_k(256);
        let script = AdversaryScript { password_guess: Some(5), ..AdversaryScript::default() };
        let cfg = ExperimentConfig::new(script, Passwords::RandomEqual, 1600, 3);
        let s = run_experiment(&p, &cfg).unwrap();
        let rate = 1.0 / 16.0 + (15.0 / 16.0) / 256.0;
        assert!(sigma_ok(s.guess_successes, s.guess_attempts, rate), "{}", s.guess_success_rate);
        assert_eq!(s.aborted, s.trials);
    }

    #[test]
    fn real_and_ideal_rates_match() {
        let p = params_k(256);
        let tamper = AdversaryScript {
            classical: vec![ClassicalRule { tag: FlowTag::Two1, mutation: Mutation::FlipBits { offset: 40, mask: vec![1] } }],
            ..AdversaryScript::default()
        };
        let scripts = [
            AdversaryScript::default(),
            AdversaryScript { password_guess: Some(0), ..AdversaryScript::default() },
            tamper,
        ];
        for script in scripts {
            let cfg = ExperimentConfig { compiled: true, ..ExperimentConfig::new(script, Passwords::RandomEqual, 300, 5) };
            let report = compare_real_ideal(&p, &cfg).unwrap();
            assert!(report.all_within_three_sigma(), "{:#?}", report.rates);
        }
    }

    #[test]
    fn ideal_world_rejects_active_quantum_attacks() {
        let p = params();
        let script = AdversaryScript::passive(ChannelModel::InterceptResend(crate::qchannel::InterceptStrategy::RandomBasis));
        let cfg = ExperimentConfig::new(script, Passwords::RandomEqual, 10, 0);
        assert!(matches!(compare_real_ideal(&p, &cfg), Err(HarnessError::Inexpressible(_))));
    }

    #[test]
    fn config_checks() {
        let p = params();
        let cfg = ExperimentConfig::new(AdversaryScript::default(), Passwords::Fixed { client: 0, server: 16 }, 10, 0);
        assert!(run_experiment(&p, &cfg).is_err());
        let cfg = ExperimentConfig { trials: 0, ..ExperimentConfig::new(AdversaryScript::default(), Passwords::RandomEqual, 0, 0) };
        assert!(run_experiment(&p, &cfg).is_err());
        let zero = AdversaryScript {
            classical: vec![ClassicalRule { tag: FlowTag::Zero, mutation: Mutation::Drop }],
            ..AdversaryScript::default()
        };
        assert!(run_experiment(&p, &ExperimentConfig::new(zero, Passwords::RandomEqual, 1, 0)).is_err());
    }

    #[test]
    fn distinct_passwords_differ() {
        let mut rng = stream_rng(0, 0);
        for _ in 0..1000 {
            let (a, b) = Passwords::RandomDistinct.draw(16, &mut rng);
            assert!(a != b && a < 16 && b < 16);
        }
    }
}
