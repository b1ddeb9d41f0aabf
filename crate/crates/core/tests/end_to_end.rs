use std::sync::Arc;

use qpake::crypto::GroupPreset;
use qpake::harness::{run_experiment, AdversaryScript, ClassicalRule, ExperimentConfig, Mutation, Passwords};
use qpake::pake::FlowTag;
use qpake::qchannel::{ChannelModel, InterceptStrategy};
use qpake::{ParamSet, ProtocolParams};

fn params(k: usize) -> Arc<ProtocolParams> {
    let set = ParamSet { k, lambda: 8, group: GroupPreset::Sim64, ..ParamSet::default() };
    Arc::new(ProtocolParams::setup(set).unwrap())
}

#[test]
fn honest_runs_agree() {
    let p = params(128);
    let cfg = ExperimentConfig::new(AdversaryScript::default(), Passwords::RandomEqual, 40, 1);
    let s = run_experiment(&p, &cfg).unwrap();
    assert_eq!(s.completed, 40);
    assert_eq!(s.agreed, 40);
    assert_eq!(s.test_errors, 0);
}

#[test]
fn experiments_are_reproducible() {
    let p = params(64);
    let cfg = ExperimentConfig::new(AdversaryScript::passive(ChannelModel::BitFlip(0.04)), Passwords::RandomEqual, 30, 9);
    let a = run_experiment(&p, &cfg).unwrap();
    let b = run_experiment(&p, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let other = run_experiment(&p, &ExperimentConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.config_fingerprint, other.config_fingerprint);
}

#[test]
fn intercept_resend_is_caught() {
    let p = params(256);
    let script = AdversaryScript::passive(ChannelModel::InterceptResend(InterceptStrategy::RandomBasis));
    let s = run_experiment(&p, &ExperimentConfig::new(script, Passwords::RandomEqual, 30, 2)).unwrap();
    assert_eq!(s.aborted, 30);
}

#[test]
fn compiled_runs_reject_rewrites() {
    let p = params(64);
    for tag in [FlowTag::One1, FlowTag::Two2, FlowTag::Four] {
        let script = AdversaryScript {
            classical: vec![ClassicalRule { tag, mutation: Mutation::Drop }],
            ..AdversaryScript::default()
        };
        let cfg = ExperimentConfig { compiled: true, ..ExperimentConfig::new(script, Passwords::RandomEqual, 8, 3) };
        let s = run_experiment(&p, &cfg).unwrap();
        assert_eq!(s.completed, 0, "{tag:?}");
        assert_eq!(s.accepted_forgeries, 0);
    }
}
