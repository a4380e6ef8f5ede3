use qcoin::circuits::Design;
use qcoin::coins::CoinSpec;
use qcoin::config::ExperimentConfig;
use qcoin::consensus::{ConsensusMode, Thresholds};
use qcoin::harness::{self, fairness_test, trial_seed, Schedule};
use qcoin::protocol::{Engine, LiePolicy, Outcome, PlayerBehavior, Rules};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn liar(policy: LiePolicy) -> PlayerBehavior {
    PlayerBehavior::ClassicalLiar { policy }
}

#[test]
fn the_classical_lie_is_caught_by_confirmation() {
    let engine = Engine::new(
        Design::TwoParty,
        &CoinSpec::uniform(2).unwrap(),
        Rules::default(),
    )
    .unwrap();
    let behaviors = [PlayerBehavior::Honest, liar(LiePolicy::AlwaysHeads)];
    let (mut lies, mut disputed) = (0, 0);
    for seed in 0..2000 {
        let t = engine.run(&[0, 1], &behaviors, seed).unwrap();
        let lied = t.announcements[&1] != t.coin_results()[1].unwrap();
        if lied {
            lies += 1;
            if t.verdict == Outcome::Disputed {
                disputed += 1;
            }
        } else {
            assert_ne!(t.verdict, Outcome::Disputed);
        }
    }
    assert!(lies > 800);
    assert_eq!(lies, disputed);
}

#[test]
fn the_witness_overrules_a_lie() {
    for design in [Design::TwoPartyWitness, Design::CentralReview] {
        let engine = Engine::new(design, &CoinSpec::uniform(2).unwrap(), Rules::default()).unwrap();
        let behaviors = [liar(LiePolicy::Invert), PlayerBehavior::Honest];
        for seed in 0..200 {
            let t = engine.run(&[0, 1], &behaviors, seed).unwrap();
            let coins: Vec<u8> = t.coin_results().into_iter().map(Option::unwrap).collect();
            assert_eq!(t.decided.as_deref(), Some(coins.as_slice()));
        }
    }
}

#[test]
fn hybrid_decides_true_coins_despite_a_liar_in_both_modes() {
    for mode in [ConsensusMode::WitnessPrimary, ConsensusMode::P2PPrimary] {
        let rules = Rules {
            mode,
            ..Rules::default()
        };
        let engine = Engine::new(Design::Hybrid, &CoinSpec::uniform(3).unwrap(), rules).unwrap();
        let behaviors = [
            PlayerBehavior::Honest,
            liar(LiePolicy::Invert),
            PlayerBehavior::Honest,
        ];
        for seed in 0..200 {
            let t = engine.run(&[2, 1, 0], &behaviors, seed).unwrap();
            let coins: Vec<u8> = t.coin_results().into_iter().map(Option::unwrap).collect();
            assert_eq!(t.decided.as_deref(), Some(coins.as_slice()), "{mode}");
        }
    }
}

#[test]
fn ring_review_catches_a_liar_with_one_reviewer() {
    let engine = Engine::new(
        Design::RingReview,
        &CoinSpec::uniform(4).unwrap(),
        Rules::default(),
    )
    .unwrap();
    let mut behaviors = vec![PlayerBehavior::Honest; 4];
    behaviors[2] = liar(LiePolicy::Invert);
    for seed in 0..200 {
        let t = engine.run(&[0, 1, 2, 3], &behaviors, seed).unwrap();
        assert_eq!(t.verdict, Outcome::Rejected(vec![2]));
    }
}

#[test]
fn lower_threshold_lets_a_lone_liar_through_with_enough_support() {
    // With r = 0 every announcement is accepted, so the review cannot reject.
    let rules = Rules {
        thresholds: Thresholds::new(0.0, 1.0).unwrap(),
        ..Rules::default()
    };
    let engine = Engine::new(Design::PeerToPeer, &CoinSpec::uniform(3).unwrap(), rules).unwrap();
    let behaviors = [
        liar(LiePolicy::Invert),
        PlayerBehavior::Honest,
        PlayerBehavior::Honest,
    ];
    let t = engine.run(&[0, 1, 2], &behaviors, 1).unwrap();
    assert!(!matches!(t.verdict, Outcome::Rejected(_)));
}

#[test]
fn schedules_do_not_change_quantum_verdicts() {
    let coin = CoinSpec::uniform(3).unwrap();
    for design in [
        Design::CentralReview,
        Design::PeerToPeer,
        Design::RingReview,
        Design::Hybrid,
    ] {
        let engine = Engine::new(design, &coin, Rules::default()).unwrap();
        let reference = harness::honest_verdict_distribution(&engine, &[0, 1, 2]).unwrap();
        for delays in [[5, 0, 3], [1, 1, 0], [0, 2, 1]] {
            let order = Schedule::new(delays.to_vec()).order();
            let d = harness::honest_verdict_distribution(&engine, &order).unwrap();
            for (k, p) in &reference {
                assert!((p - d[k]).abs() < 1e-10, "{design} {delays:?} {k}");
            }
        }
    }
}

#[test]
fn honest_classical_players_split_wins() {
    let s =
        harness::run_classical_baseline(100_000, None, &Schedule::simultaneous(2), 77, 64).unwrap();
    let se = (0.25 / s.decided as f64).sqrt();
    assert!((s.win_rate(0) - 0.5).abs() < 4.0 * se);
    assert!((s.win_rate(1) - 0.5).abs() < 4.0 * se);
}

#[test]
fn fairness_test_is_calibrated() {
    let trials = 10_000u64;
    let passes = (0..100u64)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heads = (0..trials).filter(|_| rng.gen_bool(0.5)).count() as u64;
            fairness_test(heads, trials).unwrap().pass
        })
        .count();
    // Expect about 99 passes out of 100.
    assert!(passes >= 95, "{passes}");
}

#[test]
fn collusion_outcome_as_a_function_of_k_and_r() {
    let points =
        harness::collusion_sweep(4, &[1, 2, 3, 4], &[1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0], 60, 3)
            .unwrap();
    assert_eq!(points.len(), 16);
    for p in &points {
        let support = (p.colluders - 1) as f64 / 3.0;
        let accepted = support >= p.agreement_threshold - 1e-12;
        assert_eq!(
            p.liar_acceptance_rate,
            if accepted { 1.0 } else { 0.0 },
            "{p:?}"
        );
        if p.colluders < 4 {
            assert_eq!(p.honest_acceptance_rate, 1.0);
        }
    }
}

#[test]
fn batch_determinism_across_invocations() {
    let mut c = ExperimentConfig::new(Design::Hybrid, 3);
    c.trials = 300;
    c.seed = 42;
    c.delays = vec![2, 0, 1];
    let a = harness::run_batch(&c, true).unwrap();
    let b = harness::run_batch(&c, true).unwrap();
    assert_eq!(a.stats.to_csv(), b.stats.to_csv());
    let mut ja = Vec::new();
    let mut jb = Vec::new();
    harness::write_jsonl(&mut ja, &a.transcripts).unwrap();
    harness::write_jsonl(&mut jb, &b.transcripts).unwrap();
    assert_eq!(ja, jb);
    assert_eq!(a.transcripts[0].order, vec![1, 2, 0]);
    assert_eq!(a.transcripts[0].seed, trial_seed(42, 0, 0));
}
