use std::fmt::Write as _;
use std::fs;
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use qpake::bounds::{plan_parameters, report, BoundsInput, BoundsReport};
use qpake::feasibility::{equality_function, find_ot_cores, TwoPartyFunction};
use qpake::harness::{run_experiment_records, run_trial, ExperimentStats};
use qpake::pake::SessionOptions;
use qpake::ProtocolParams;

use crate::config::Config;

pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Writes to stdout; a reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e).context("cannot write to stdout"),
        _ => Ok(()),
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        b = b.num_threads(j);
    }
    b.build().context("cannot start worker threads")
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::parse("")?);
    };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    Config::parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn summary(stats: &ExperimentStats) -> String {
    let mut s = String::new();
    let rows: [(&str, String); 9] = [
        ("trials", stats.trials.to_string()),
        ("completed", format!("{} ({:.4})", stats.completed, stats.completion_rate)),
        ("aborted", format!("{} ({:.4})", stats.aborted, stats.abort_rate)),
        ("agreed", format!("{} ({:.4})", stats.agreed, stats.agreement_rate)),
        ("guess successes", format!("{} / {} ({:.4})", stats.guess_successes, stats.guess_attempts, stats.guess_success_rate)),
        ("test error rate", format!("{:.4} ({} / {})", stats.test_error_rate, stats.test_errors, stats.test_matched)),
        ("decode failures", stats.decode_failures.to_string()),
        ("accepted forgeries", stats.accepted_forgeries.to_string()),
        ("config", stats.config_fingerprint.clone()),
    ];
    for (name, value) in rows {
        let _ = writeln!(s, "{name:<20} {value}");
    }
    for (reason, n) in &stats.abort_reasons {
        let _ = writeln!(s, "{:<20} {n}", format!("abort {reason}"));
    }
    s
}

pub fn run(args: RunArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.run.trials = trials;
    }
    if let Some(out) = args.out {
        config.run.out = Some(out);
    }
    config.validate("")?;
    let params = Arc::new(ProtocolParams::setup(config.protocol.clone()).context("parameter setup failed")?);
    let exp = config.experiment();
    let (stats, records) = pool(args.jobs)?.install(|| run_experiment_records(&params, &exp))?;

    let json = stats.to_json();
    let table = summary(&stats);
    emit(&json)?;
    eprint!("{table}");

    if let Some(dir) = &config.run.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let write = |name: &str, body: &str| {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
        };
        write("config.toml", &config.to_canonical())?;
        write("stats.json", &json)?;
        write("summary.txt", &table)?;
        let lines: String = records.iter().enumerate().map(|(i, r)| format!("{}\n", r.to_json(i as u64))).collect();
        write("trials.jsonl", &lines)?;
        let recorded = config.run.transcripts.min(config.run.trials);
        if recorded > 0 {
            let tdir = dir.join("transcripts");
            fs::create_dir_all(&tdir).with_context(|| format!("cannot create {}", tdir.display()))?;
            for i in 0..recorded {
                let (_, result) = run_trial(&params, &exp, i, SessionOptions { record_transcript: true });
                let t = result.transcript.expect("transcript recorded");
                let path = tdir.join(format!("trial-{i:06}.jsonl"));
                fs::write(&path, t.to_jsonl()).with_context(|| format!("cannot write {}", path.display()))?;
            }
        }
    }
    Ok(())
}

pub struct BoundsArgs {
    pub n: Option<f64>,
    pub tau: f64,
    pub lambda: f64,
    pub eps: f64,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub code_failure: f64,
    pub target: Option<f64>,
    pub dictionary: usize,
    pub json: bool,
}

fn bounds_table(r: &BoundsReport) -> String {
    let i = &r.input;
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} value", "quantity");
    let mut row = |name: &str, v: String| {
        let _ = writeln!(s, "{name:<24} {v}");
    };
    row("n", format!("{}", i.n));
    row("tau", format!("{}", i.tau));
    row("eps", format!("{}", i.epsilon));
    row("lambda", format!("{}", i.lambda));
    row("beta", format!("{}", i.beta));
    row("gamma", format!("{}", i.gamma));
    row("h(tau + eps)", format!("{:.6}", r.h_tau));
    row("g(eps)", format!("{:.4}", r.g_eps));
    for (name, b) in [("eps_cor", r.eps_cor), ("eps_ec", r.eps_ec), ("eps_pa", r.eps_pa), ("eps_sec", r.eps_sec), ("mu_corrupted", r.mu_corrupted)] {
        if b.raw == b.clamped {
            row(name, format!("{:.6e}", b.raw));
        } else {
            row(name, format!("{:.6e} (raw {:.6e})", b.clamped, b.raw));
        }
    }
    row("hmin_honest", format!("{:.4}", r.hmin_honest));
    row("hmin_corrupted_client", format!("{:.4}", r.hmin_corrupted_client));
    s
}

pub fn bounds(a: BoundsArgs) -> Result<()> {
    if let Some(target) = a.target {
        let plan = plan_parameters(target, a.lambda as usize, a.tau, a.dictionary)?;
        if a.json {
            let v = serde_json::json!({ "n": plan.n, "params": plan.params, "report": plan.report });
            emit(&format!("{}\n", serde_json::to_string_pretty(&v)?))?;
        } else {
            emit(&format!("smallest n with eps_sec <= {target:e}: {} (k = {})\n{}", plan.n, plan.params.k, bounds_table(&plan.report)))?;
        }
        return Ok(());
    }
    let n = a.n.context("--n is required without --target")?;
    let mut input = BoundsInput { epsilon: a.eps, ..BoundsInput::new(n, a.tau, a.lambda) };
    if let Some(beta) = a.beta {
        input.beta = beta;
        input.delta = (-beta * n / 4.0).exp2();
    }
    if let Some(gamma) = a.gamma {
        input.gamma = gamma;
    }
    let r = report(&input, a.code_failure)?;
    if a.json {
        emit(&format!("{}\n", serde_json::to_string_pretty(&r)?))
    } else {
        emit(&bounds_table(&r))
    }
}

pub fn otcore(file: Option<&Path>, equality: Option<usize>, json: bool) -> Result<()> {
    let f = match (file, equality) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read function table {}", path.display()))?;
            TwoPartyFunction::parse_table(&text).with_context(|| format!("invalid function table {}", path.display()))?
        }
        (None, Some(size)) => equality_function(size)?,
        _ => bail!("give either a table file or --equality"),
    };
    let cores = find_ot_cores(&f)?;
    let mut out = String::new();
    if !json {
        let _ = writeln!(out, "# {} OT-cores of a {}x{} function", cores.len(), f.gamma_a(), f.gamma_b());
    }
    for q in &cores {
        let line = if json { serde_json::to_string(q)? } else { q.to_string() };
        let _ = writeln!(out, "{line}");
    }
    emit(&out)
}

/// Runs the acceptance checks; `Ok(false)` when any of them fails.
pub fn selftest(only: &[String], jobs: Option<usize>) -> Result<bool> {
    let checks: Vec<_> = qpake::acceptance::CHECKS
        .iter()
        .filter(|c| only.is_empty() || only.iter().any(|o| *o == format!("AC{:02}", c.id) || o == c.name || *o == c.id.to_string()))
        .collect();
    if checks.is_empty() {
        bail!("no acceptance check matches {only:?}");
    }
    let pool = pool(jobs)?;
    let mut failed = 0;
    for c in &checks {
        let outcome = pool.install(|| c.run());
        emit(&format!("{outcome}\n"))?;
        failed += usize::from(!outcome.passed);
    }
    emit(&format!("selftest: {} passed, {failed} failed\n", checks.len() - failed))?;
    Ok(failed == 0)
}
