//! Experiment configuration files.
//!
//! A config is TOML with three optional sections:
//!
//! ```toml
//! [protocol]            # ParamSet fields
//! k = 256
//! group = "sim64"
//!
//! [adversary]           # AdversaryScript fields
//! quantum = { bit_flip = 0.05 }
//!
//! [[adversary.classical]]
//! tag = "two1"
//! mutation = "drop"
//!
//! [run]
//! trials = 1000
//! seed = 7
//! passwords = "random_equal"
//! ```
//!
//! Missing keys take their defaults; unknown keys are errors.

use std::fmt;
use std::path::PathBuf;

use qpake::harness::{AdversaryScript, ExperimentConfig, Passwords};
use qpake::pake::FlowTag;
use qpake::qchannel::ChannelModel;
use qpake::ParamSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub protocol: ParamSet,
    #[serde(default)]
    pub adversary: AdversaryScript,
    #[serde(default)]
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub trials: u64,
    pub seed: u64,
    pub passwords: Passwords,
    /// Wrap the classical flows in split authentication.
    pub compile: bool,
    /// Transcripts are written for this many leading trials.
    pub transcripts: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { trials: 1000, seed: 0, passwords: Passwords::RandomEqual, compile: false, transcripts: 0, out: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based lines of `[section]` and of `key = ...` inside it.
fn locate(text: &str, section: &str, key: &str) -> (Option<usize>, Option<usize>) {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[') {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                header.get_or_insert(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section && line.split('=').next().map(str::trim) == Some(key) {
            return (header, Some(i + 1));
        }
    }
    (header, None)
}

/// Line of `key` in `[section]`, falling back to the section header.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let (header, line) = locate(text, section, key);
    line.or(header)
}

/// The `[protocol]` keys a `ParamSet` validation message is about, most
/// specific first.
fn protocol_keys(message: &str) -> &'static [&'static str] {
    const KEYS: [(&str, &[&str]); 8] = [
        ("alpha * k", &["alpha", "k"]),
        ("alpha", &["alpha"]),
        ("n =", &["k", "alpha"]),
        ("tau", &["tau"]),
        ("gamma", &["gamma"]),
        ("beta", &["beta"]),
        ("lambda", &["lambda", "k"]),
        ("dictionary", &["dictionary_size"]),
    ];
    KEYS.iter().find(|(prefix, _)| message.starts_with(prefix)).map_or(&["k"], |(_, keys)| keys)
}

impl Config {
    /// Parses and validates a config file.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().trim().to_string(),
        })?;
        config.validate(text)?;
        Ok(config)
    }

    /// Checks every invariant the library constructors enforce, attributing
    /// failures to lines of `text` when possible.
    pub fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let at = |section: &str, key: &str, message: String| ConfigError { line: key_line(text, section, key), message };
        let p = &self.protocol;
        if let Err(e) = p.validate() {
            let msg = e.to_string();
            let keys = protocol_keys(msg.trim_start_matches("invalid parameters: "));
            let key = keys.iter().find(|k| locate(text, "protocol", k).1.is_some()).unwrap_or(&keys[0]);
            return Err(at("protocol", key, msg));
        }

        let a = &self.adversary;
        if let Err(e) = a.quantum.validate() {
            return Err(at("adversary", "quantum", e.to_string()));
        }
        if let ChannelModel::Scripted(name) = &a.quantum {
            return Err(at("adversary", "quantum", format!("scripted channel {name:?} needs a hook registry")));
        }
        if a.classical.iter().any(|r| r.tag == FlowTag::Zero) {
            return Err(at("adversary", "tag", "flow zero is quantum and cannot carry a byte mutation".into()));
        }
        let dictionary = p.dictionary_size as u64;
        if let Some(g) = a.password_guess {
            if u64::from(g) >= dictionary {
                return Err(at("adversary", "password_guess", format!("password guess {g} is outside the dictionary of {dictionary}")));
            }
        }

        let r = &self.run;
        if r.trials == 0 {
            return Err(at("run", "trials", "trials must be at least 1".into()));
        }
        match r.passwords {
            Passwords::Fixed { client, server } if u64::from(client.max(server)) >= dictionary => {
                Err(at("run", "passwords", format!("password {} is outside the dictionary of {dictionary}", client.max(server))))
            }
            Passwords::RandomDistinct if dictionary < 2 => {
                Err(at("run", "passwords", "distinct passwords need a dictionary of at least 2".into()))
            }
            _ => Ok(()),
        }
    }

    /// The canonical TOML form: every field explicit, in declaration order.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            script: self.adversary.clone(),
            passwords: self.run.passwords,
            trials: self.run.trials,
            seed: self.run.seed,
            compiled: self.run.compile,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qpake::crypto::GroupPreset;
    use qpake::harness::{ClassicalRule, Mutation};
    use qpake::qchannel::InterceptStrategy;

    #[test]
    fn minimal_file_takes_defaults() {
        for text in ["", "[protocol]\n", "# nothing here\n[run]\n"] {
            let c = Config::parse(text).unwrap();
            assert_eq!(c.protocol, ParamSet::default());
            assert_eq!(c.adversary, AdversaryScript::default());
            assert_eq!(c.run, RunSettings::default());
        }
        let c = Config::parse("[protocol]\nk = 128\ngroup = \"sim64\"\n").unwrap();
        assert_eq!(c.protocol, ParamSet { k: 128, group: GroupPreset::Sim64, ..ParamSet::default() });
    }

    #[test]
    fn full_file() {
        let text = r#"
[protocol]
k = 128
lambda = 8
group = "sim64"

[adversary]
quantum = { intercept_resend = "random_basis" }
password_guess = 2

[[adversary.classical]]
tag = "two1"
mutation = "drop"

[[adversary.classical]]
tag = "four"
mutation = { flip_bits = { offset = 3, mask = "0f" } }

[run]
trials = 50
seed = 9
passwords = { fixed = { client = 1, server = 2 } }
compile = true
"#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c.adversary.quantum, ChannelModel::InterceptResend(InterceptStrategy::RandomBasis));
        assert_eq!(c.adversary.password_guess, Some(2));
        assert_eq!(
            c.adversary.classical,
            vec![
                ClassicalRule { tag: FlowTag::Two1, mutation: Mutation::Drop },
                ClassicalRule { tag: FlowTag::Four, mutation: Mutation::FlipBits { offset: 3, mask: vec![0x0f] } },
            ]
        );
        assert_eq!(c.run.passwords, Passwords::Fixed { client: 1, server: 2 });
        let e = c.experiment();
        assert!(e.compiled);
        assert_eq!((e.trials, e.seed), (50, 9));
    }

    #[test]
    fn unknown_keys_and_type_errors_have_lines() {
        let e = Config::parse("[protocol]\nk = 64\nkappa = 3\n").unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");
        assert!(e.message.contains("kappa"), "{e}");

        let e = Config::parse("[run]\n\ntrials = \"many\"\n").unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");

        let e = Config::parse("[bogus]\nx = 1\n").unwrap_err();
        assert_eq!(e.line, Some(1), "{e}");
        assert!(e.to_string().starts_with("line 1: "));
    }

    #[test]
    fn invariant_violations_name_the_invariant() {
        let e = Config::parse("[protocol]\nk = 255\nalpha = 0.25\n").unwrap_err();
        assert!(e.message.contains("alpha * k"), "{e}");
        assert!(e.message.contains("integer"), "{e}");
        assert_eq!(e.line, Some(3));

        let e = Config::parse("[protocol]\ntau = 0.7\n").unwrap_err();
        assert!(e.message.contains("tau"), "{e}");
        assert_eq!(e.line, Some(2));

        let e = Config::parse("[adversary]\npassword_guess = 16\n").unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");

        let e = Config::parse("[adversary]\nquantum = { bit_flip = 1.5 }\n").unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");

        let e = Config::parse("[[adversary.classical]]\ntag = \"zero\"\nmutation = \"drop\"\n").unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");

        let e = Config::parse("[run]\ntrials = 0\n").unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");

        let e = Config::parse("[protocol]\ndictionary_size = 1\n[run]\npasswords = \"random_distinct\"\n").unwrap_err();
        assert_eq!(e.line, Some(4), "{e}");
    }

    #[test]
    fn canonical_form_round_trips() {
        let texts = [
            "",
            "[adversary]\nquantum = { bit_flip = 0.05 }\npassword_guess = 4\n",
            "[[adversary.classical]]\ntag = \"one2\"\nmutation = { replace = \"00ff\" }\n[run]\npasswords = { fixed = { client = 3, server = 3 } }\nout = \"results\"\n",
        ];
        for text in texts {
            let c = Config::parse(text).unwrap();
            let canonical = c.to_canonical();
            let back = Config::parse(&canonical).unwrap();
            assert_eq!(back, c, "{canonical}");
            assert_eq!(back.to_canonical(), canonical);
        }
    }

    #[test]
    fn golden_canonical_forms() {
        let cases = [
            (include_str!("../tests/data/minimal.toml"), include_str!("../tests/data/minimal.canonical.toml")),
            (include_str!("../tests/data/full.toml"), include_str!("../tests/data/full.canonical.toml")),
        ];
        for (input, golden) in cases {
            let c = Config::parse(input).unwrap();
            assert_eq!(c.to_canonical(), golden);
            assert_eq!(Config::parse(golden).unwrap(), c);
        }
    }

    #[test]
    fn key_lines() {
        let text = "[protocol]\nk = 1\n\n[adversary]\n[[adversary.classical]]\ntag = \"two1\"\n[run]\n";
        assert_eq!(key_line(text, "protocol", "k"), Some(2));
        assert_eq!(key_line(text, "protocol", "tau"), Some(1));
        assert_eq!(key_line(text, "adversary", "tag"), Some(6));
        assert_eq!(key_line(text, "run", "trials"), Some(7));
        assert_eq!(key_line("", "run", "trials"), None);
    }
}
