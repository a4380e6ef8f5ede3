//! Experiment driver: the classical baseline, seeded batch runs, the
//! pre-game fairness check and collusion sweeps.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::circuits::Design;
use crate::coins::{CoinSpec, HEADS};
use crate::config::ExperimentConfig;
use crate::consensus::{ReviewReport, Thresholds};
use crate::error::{Error, Result};
use crate::protocol::{
    coin_distribution, Action, Actor, Engine, LiePolicy, Outcome, PlayerBehavior, Rules, Transcript,
};
use crate::qstate::Bit;

/// Significance level of [`fairness_test`].
pub const FAIRNESS_SIGNIFICANCE: f64 = 0.01;

/// Smallest sample [`fairness_test`] accepts.
pub const MIN_FAIRNESS_TRIALS: u64 = 1000;

/// Announcement delays in abstract ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub delays: Vec<u64>,
}

impl Schedule {
    pub fn new(delays: Vec<u64>) -> Self {
        Self { delays }
    }

    /// Everyone announces at tick 0, so players go in index order.
    pub fn simultaneous(num_players: usize) -> Self {
        Self::new(vec![0; num_players])
    }

    pub fn num_players(&self) -> usize {
        self.delays.len()
    }

    /// Players sorted by delay, ties broken by index.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.delays.len()).collect();
        order.sort_by_key(|&p| (self.delays[p], p));
        order
    }

    pub fn last(&self) -> Option<usize> {
        self.order().last().copied()
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one round of one trial, derived from the master seed.
pub fn trial_seed(master: u64, trial: u64, round: u32) -> u64 {
    mix64(mix64(mix64(master) ^ trial) ^ u64::from(round))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub trials: u64,
    pub decided: u64,
    pub undecided: u64,
    pub wins: Vec<u64>,
    pub cheater: Option<usize>,
}

impl BaselineStats {
    /// Fraction of decided games won by `player`.
    pub fn win_rate(&self, player: usize) -> f64 {
        if self.decided == 0 {
            return f64::NAN;
        }
        self.wins[player] as f64 / self.decided as f64
    }

    pub fn cheater_win_rate(&self) -> Option<f64> {
        self.cheater.map(|c| self.win_rate(c))
    }
}

/// Two-player classical game: each player flips their own coin and
/// announces it, in schedule order. A cheater always claims heads, which
/// wins every decided game once the opponent has already spoken.
pub fn run_classical_baseline(
    trials: u64,
    cheater: Option<usize>,
    schedule: &Schedule,
    seed: u64,
    replay_cap: u32,
) -> Result<BaselineStats> {
    if schedule.num_players() != 2 {
        return Err(Error::WrongArity {
            expected: 2,
            got: schedule.num_players(),
        });
    }
    if replay_cap < 1 {
        return Err(Error::Config("replay_cap must be at least 1".into()));
    }
    if let Some(c) = cheater {
        if c >= 2 {
            return Err(Error::PlayerOutOfRange {
                player: c,
                num_players: 2,
            });
        }
        if schedule.last() != Some(c) {
            return Err(Error::Schedule(format!(
                "cheater {c} must announce last (delays {:?})",
                schedule.delays
            )));
        }
    }
    let engine = Engine::new(Design::Classical, &CoinSpec::uniform(2)?, Rules::default())?;
    let order = schedule.order();
    let mut behaviors = vec![PlayerBehavior::Honest; 2];
    if let Some(c) = cheater {
        behaviors[c] = PlayerBehavior::ClassicalLiar {
            policy: LiePolicy::AlwaysHeads,
        };
    }
    let mut stats = BaselineStats {
        trials,
        decided: 0,
        undecided: 0,
        wins: vec![0; 2],
        cheater,
    };
    for trial in 0..trials {
        let mut winner = None;
        for round in 0..replay_cap {
            let t = engine.run(&order, &behaviors, trial_seed(seed, trial, round))?;
            if let Outcome::WinnerIs(p) = t.verdict {
                winner = Some(p);
                break;
            }
        }
        match winner {
            Some(p) => {
                stats.decided += 1;
                stats.wins[p] += 1;
            }
            None => stats.undecided += 1,
        }
    }
    Ok(stats)
}

/// Aggregate statistics of a batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub trials: u64,
    /// Rounds played, replays included.
    pub rounds: u64,
    /// Trials that ended with a winner.
    pub decided: u64,
    /// Trials still tied after the replay cap.
    pub undecided: u64,
    /// Heads count per player over first rounds.
    pub first_round_heads: Vec<u64>,
    /// First-round joint coin outcomes keyed by bitstring (player 0 first).
    pub joint_counts: BTreeMap<String, u64>,
    pub winners: Vec<u64>,
    /// Final verdict of each trial, by [`Outcome::label`].
    pub verdicts: BTreeMap<String, u64>,
    /// Confirmation or witness readings that differ from the true coin.
    pub confirmation_mismatches: u64,
    /// Confirmation readings that differ from the reviewed announcement.
    pub announcement_conflicts: u64,
    /// Rounds in which each player's announcement was accepted by peers.
    pub accepted: Vec<u64>,
    /// Rounds that carried a peer review.
    pub reviewed_rounds: u64,
}

impl BatchStats {
    fn empty(n: usize) -> Self {
        Self {
            first_round_heads: vec![0; n],
            winners: vec![0; n],
            accepted: vec![0; n],
            ..Self::default()
        }
    }

    pub fn heads_frequency(&self, player: usize) -> f64 {
        self.first_round_heads[player] as f64 / self.trials as f64
    }

    pub fn acceptance_rate(&self, player: usize) -> f64 {
        if self.reviewed_rounds == 0 {
            return f64::NAN;
        }
        self.accepted[player] as f64 / self.reviewed_rounds as f64
    }

    fn merge(&mut self, other: TrialStats) {
        self.trials += 1;
        self.rounds += other.rounds;
        for (p, &bit) in other.first_coins.iter().enumerate() {
            if bit == HEADS {
                self.first_round_heads[p] += 1;
            }
        }
        let key: String = other
            .first_coins
            .iter()
            .map(|b| char::from(b'0' + b))
            .collect();
        *self.joint_counts.entry(key).or_insert(0) += 1;
        match &other.verdict {
            Some(v) => {
                if let Outcome::WinnerIs(p) = v {
                    self.decided += 1;
                    self.winners[*p] += 1;
                }
                *self.verdicts.entry(v.label()).or_insert(0) += 1;
            }
            None => {
                self.undecided += 1;
                *self.verdicts.entry("undecided".into()).or_insert(0) += 1;
            }
        }
        self.confirmation_mismatches += other.mismatches;
        self.announcement_conflicts += other.conflicts;
        for (p, &a) in other.accepted.iter().enumerate() {
            self.accepted[p] += a;
        }
        self.reviewed_rounds += other.reviewed_rounds;
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("trials".into(), self.trials.to_string()),
            ("rounds".into(), self.rounds.to_string()),
            ("decided".into(), self.decided.to_string()),
            ("undecided".into(), self.undecided.to_string()),
            (
                "confirmation_mismatches".into(),
                self.confirmation_mismatches.to_string(),
            ),
            (
                "announcement_conflicts".into(),
                self.announcement_conflicts.to_string(),
            ),
            ("reviewed_rounds".into(), self.reviewed_rounds.to_string()),
        ];
        for p in 0..self.first_round_heads.len() {
            rows.push((
                format!("heads_frequency_{p}"),
                format!("{:?}", self.heads_frequency(p)),
            ));
        }
        for (p, w) in self.winners.iter().enumerate() {
            rows.push((format!("wins_{p}"), w.to_string()));
        }
        for (p, a) in self.accepted.iter().enumerate() {
            rows.push((format!("accepted_{p}"), a.to_string()));
        }
        for (k, v) in &self.joint_counts {
            rows.push((format!("joint_{k}"), v.to_string()));
        }
        for (k, v) in &self.verdicts {
            rows.push((format!("verdict_{k}"), v.to_string()));
        }
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
struct TrialStats {
    rounds: u64,
    first_coins: Vec<Bit>,
    verdict: Option<Outcome>,
    mismatches: u64,
    conflicts: u64,
    accepted: Vec<u64>,
    reviewed_rounds: u64,
    transcripts: Vec<Transcript>,
}

/// Counts readings that disagree with the true coin and with the reviewed
/// player's announcement.
pub fn reading_mismatches(t: &Transcript) -> (u64, u64) {
    let coins = t.coin_results();
    let mut mismatches = 0;
    let mut conflicts = 0;
    for e in &t.events {
        let reading = matches!(
            e.action,
            Action::EarlyConfirm | Action::Confirm | Action::WitnessRead
        );
        let (Some(subject), Some(bit)) = (e.subject, e.bit) else {
            continue;
        };
        if !reading {
            continue;
        }
        if coins[subject] != Some(bit) {
            mismatches += 1;
        }
        if matches!(e.actor, Actor::Player(_)) && t.announcements.get(&subject) != Some(&bit) {
            conflicts += 1;
        }
    }
    (mismatches, conflicts)
}

fn run_trial(
    engine: &Engine,
    order: &[usize],
    behaviors: &[PlayerBehavior],
    seed: u64,
    trial: u64,
    replay_cap: u32,
    keep: bool,
) -> Result<TrialStats> {
    let n = engine.layout().num_players;
    let mut stats = TrialStats {
        rounds: 0,
        first_coins: Vec::new(),
        verdict: None,
        mismatches: 0,
        conflicts: 0,
        accepted: vec![0; n],
        reviewed_rounds: 0,
        transcripts: Vec::new(),
    };
    for round in 0..replay_cap {
        let t = engine.run(order, behaviors, trial_seed(seed, trial, round))?;
        stats.rounds += 1;
        if round == 0 {
            stats.first_coins = t
                .coin_results()
                .into_iter()
                .map(|c| c.expect("flipped"))
                .collect();
        }
        let (m, c) = reading_mismatches(&t);
        stats.mismatches += m;
        stats.conflicts += c;
        if let Some(review) = &t.review {
            stats.reviewed_rounds += 1;
            for p in 0..n {
                if review.accept_result(p)? {
                    stats.accepted[p] += 1;
                }
            }
        }
        let done = t.verdict != Outcome::TieReplay;
        let verdict = t.verdict.clone();
        if keep {
            stats.transcripts.push(t);
        }
        if done {
            stats.verdict = Some(verdict);
            break;
        }
    }
    Ok(stats)
}

/// Result of [`run_batch`]; `transcripts` is filled only on request, in
/// trial then round order.
#[derive(Debug, Clone)]
pub struct BatchRun {
    pub stats: BatchStats,
    pub transcripts: Vec<Transcript>,
}

/// Runs `config.trials` independent games, each replayed on ties up to the
/// replay cap. The output depends only on the config.
pub fn run_batch(config: &ExperimentConfig, keep_transcripts: bool) -> Result<BatchRun> {
    config.validate()?;
    let coin = config.coin_spec()?;
    let engine = Engine::new(config.design, &coin, config.rules)?;
    let order = Schedule::new(config.delays()).order();
    let behaviors = config.behaviors();

    let work = || -> Result<Vec<TrialStats>> {
        (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                run_trial(
                    &engine,
                    &order,
                    &behaviors,
                    config.seed,
                    trial,
                    config.replay_cap,
                    keep_transcripts,
                )
            })
            .collect()
    };
    let per_trial = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let mut stats = BatchStats::empty(config.players);
    let mut transcripts = Vec::new();
    for mut t in per_trial {
        transcripts.append(&mut t.transcripts);
        stats.merge(t);
    }
    Ok(BatchRun { stats, transcripts })
}

/// Writes one JSON transcript per line.
pub fn write_jsonl<W: Write>(mut out: W, transcripts: &[Transcript]) -> std::io::Result<()> {
    for t in transcripts {
        writeln!(out, "{}", t.to_json())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessTest {
    pub statistic: f64,
    pub critical_value: f64,
    pub pass: bool,
}

/// Chi-square goodness of fit of `heads` out of `trials` against a fair
/// coin, at the 0.01 significance level.
pub fn fairness_test(heads: u64, trials: u64) -> Result<FairnessTest> {
    if trials < MIN_FAIRNESS_TRIALS {
        return Err(Error::InsufficientSample {
            required: MIN_FAIRNESS_TRIALS,
            got: trials,
        });
    }
    if heads > trials {
        return Err(Error::InvalidParameter(format!(
            "{heads} heads out of {trials} trials"
        )));
    }
    let expected = trials as f64 / 2.0;
    let tails = trials - heads;
    let statistic = [heads, tails]
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let critical_value = ChiSquared::new(1.0)
        .expect("one degree of freedom")
        .inverse_cdf(1.0 - FAIRNESS_SIGNIFICANCE);
    Ok(FairnessTest {
        statistic,
        critical_value,
        pass: statistic < critical_value,
    })
}

/// Exact first-round verdict distribution of an honest game played in
/// `order`, keyed by [`Outcome::label`]. Honest readings always match the
/// coins, so the verdict is the winner rule applied to the coin bits.
pub fn honest_verdict_distribution(
    engine: &Engine,
    order: &[usize],
) -> Result<BTreeMap<String, f64>> {
    let dist = coin_distribution(engine.prepared_state(), engine.layout(), order)?;
    let mut out = BTreeMap::new();
    for (bits, p) in dist {
        *out.entry(engine.rules().winner.decide(&bits).label())
            .or_insert(0.0) += p;
    }
    Ok(out)
}

/// Acceptance of colluding liars at one `(N, k, r)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollusionPoint {
    pub num_players: usize,
    pub colluders: usize,
    pub agreement_threshold: f64,
    pub trials: u64,
    pub liar_acceptance_rate: f64,
    pub honest_acceptance_rate: f64,
}

/// Peer-to-peer games where players `0..k` invert their announcements and
/// vouch for each other by misreporting their readings of fellow colluders.
/// Honest players report what they measured.
pub fn collusion_sweep(
    num_players: usize,
    colluders: &[usize],
    thresholds: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<CollusionPoint>> {
    let coin = CoinSpec::uniform(num_players)?;
    let engine = Engine::new(Design::PeerToPeer, &coin, Rules::default())?;
    let order: Vec<usize> = (0..num_players).collect();
    let honest = vec![PlayerBehavior::Honest; num_players];
    if let Some(&k) = colluders.iter().find(|&&k| k > num_players) {
        return Err(Error::InvalidParameter(format!(
            "{k} colluders among {num_players} players"
        )));
    }
    let runs: Vec<Transcript> = (0..trials)
        .into_par_iter()
        .map(|trial| engine.run(&order, &honest, trial_seed(seed, trial, 0)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &k in colluders {
        for &r in thresholds {
            let thresholds = Thresholds::new(r, 1.0 - r)?;
            let (mut liar_ok, mut honest_ok) = (0u64, 0u64);
            for t in &runs {
                let report = t.review.as_ref().expect("p2p has a review");
                let colluding = |p: usize| p < k;
                let claims: Vec<Bit> = (0..num_players)
                    .map(|p| report.self_results[p] ^ u8::from(colluding(p)))
                    .collect();
                let reviews: Vec<Vec<Option<Bit>>> = (0..num_players)
                    .map(|n| {
                        (0..num_players)
                            .map(|j| {
                                let b = report.reviews[n][j]?;
                                Some(if colluding(n) && colluding(j) {
                                    claims[n]
                                } else {
                                    b
                                })
                            })
                            .collect()
                    })
                    .collect();
                let forged = ReviewReport::new(claims, reviews, thresholds)?;
                for p in 0..num_players {
                    if forged.accept_result(p)? {
                        if colluding(p) {
                            liar_ok += 1;
                        } else {
                            honest_ok += 1;
                        }
                    }
                }
            }
            let rate = |ok: u64, players: usize| {
                if players == 0 {
                    f64::NAN
                } else {
                    ok as f64 / (players as u64 * trials) as f64
                }
            };
            out.push(CollusionPoint {
                num_players,
                colluders: k,
                agreement_threshold: r,
                trials,
                liar_acceptance_rate: rate(liar_ok, k),
                honest_acceptance_rate: rate(honest_ok, num_players - k),
            });
        }
    }
    Ok(out)
}
