//! The staged game engine.
//!
//! A game runs preparation, coin flipping, confirmation and decision for one
//! round and records everything in a [`Transcript`]. Replaying tied rounds is
//! left to the caller.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::{self, Circuit, Design, GameLayout};
use crate::coins::{CoinSpec, HEADS};
use crate::consensus::{hybrid_decide, ConsensusMode, ReviewReport, Thresholds};
use crate::error::{Error, Result};
use crate::qstate::{unitarity_deviation, Bit, Gate, Matrix2, StateVector, UNITARY_TOL};

/// Version of the transcript JSON layout.
pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiePolicy {
    AlwaysHeads,
    AlwaysTails,
    Invert,
}

impl LiePolicy {
    pub fn claim(&self, actual: Bit) -> Bit {
        match self {
            LiePolicy::AlwaysHeads => 0,
            LiePolicy::AlwaysTails => 1,
            LiePolicy::Invert => actual ^ 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlayerBehavior {
    Honest,
    /// Misreports their own coin; the quantum state is untouched.
    ClassicalLiar {
        policy: LiePolicy,
    },
    /// Reads their confirmation qubits before anyone flips.
    EarlyConfirmMeasurer,
    /// Applies `matrix` to one of their own confirmation qubits after the
    /// flips (`target` defaults to the first one).
    UnitaryManipulator {
        matrix: Matrix2,
        #[serde(default)]
        target: Option<usize>,
    },
}

/// How the decided bits of an N-player game pick a winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WinnerRule {
    /// The only player on heads wins; anything else is replayed.
    #[default]
    UniqueHeads,
    /// The single player outvoted by a strict majority wins; else replay.
    Majority,
    /// Player `(number of tails) mod N` wins; XOR of the bits when N = 2.
    XorParity,
}

impl FromStr for WinnerRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unique-heads" => Ok(Self::UniqueHeads),
            "majority" => Ok(Self::Majority),
            "xor-parity" => Ok(Self::XorParity),
            _ => Err(Error::Config(format!("unknown winner rule {s:?}"))),
        }
    }
}

impl fmt::Display for WinnerRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UniqueHeads => "unique-heads",
            Self::Majority => "majority",
            Self::XorParity => "xor-parity",
        })
    }
}

impl WinnerRule {
    pub fn decide(&self, bits: &[Bit]) -> Outcome {
        let n = bits.len();
        match self {
            WinnerRule::UniqueHeads if n == 2 => decide_two_party(bits[0], bits[1]),
            WinnerRule::UniqueHeads => {
                let mut heads = bits.iter().enumerate().filter(|(_, &b)| b == HEADS);
                match (heads.next(), heads.next()) {
                    (Some((p, _)), None) => Outcome::WinnerIs(p),
                    _ => Outcome::TieReplay,
                }
            }
            WinnerRule::Majority => {
                let tails = bits.iter().filter(|&&b| b == 1).count();
                let minority_bit = match (n - tails, tails) {
                    (1, t) if t >= 2 => 0,
                    (h, 1) if h >= 2 => 1,
                    _ => return Outcome::TieReplay,
                };
                let p = bits
                    .iter()
                    .position(|&b| b == minority_bit)
                    .expect("minority present");
                Outcome::WinnerIs(p)
            }
            WinnerRule::XorParity => {
                let tails = bits.iter().filter(|&&b| b == 1).count();
                Outcome::WinnerIs(tails % n)
            }
        }
    }
}

/// Two-player rule: the player on heads wins, equal results are replayed.
pub fn decide_two_party(a_result: Bit, b_result: Bit) -> Outcome {
    match (a_result, b_result) {
        (0, 1) => Outcome::WinnerIs(0),
        (1, 0) => Outcome::WinnerIs(1),
        _ => Outcome::TieReplay,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    WinnerIs(usize),
    TieReplay,
    Rejected(Vec<usize>),
    Disputed,
}

impl Outcome {
    /// Short label used in histograms.
    pub fn label(&self) -> String {
        match self {
            Outcome::WinnerIs(p) => format!("winner:{p}"),
            Outcome::TieReplay => "tie-replay".into(),
            Outcome::Rejected(_) => "rejected".into(),
            Outcome::Disputed => "disputed".into(),
        }
    }
}

/// Decision-stage configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rules {
    pub winner: WinnerRule,
    pub thresholds: Thresholds,
    pub mode: ConsensusMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actor {
    Player(usize),
    Witness,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Player(p) => write!(f, "player {p}"),
            Actor::Witness => f.write_str("witness"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    EarlyConfirm,
    Flip,
    Manipulate,
    WitnessRead,
    WitnessVerdict,
    Confirm,
    Announce,
    ReviewVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: u64,
    pub actor: Actor,
    pub action: Action,
    pub qubit: Option<usize>,
    pub bit: Option<Bit>,
    /// Player whose coin the event concerns.
    pub subject: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema_version: u32,
    pub design: Design,
    pub num_players: usize,
    pub seed: u64,
    pub order: Vec<usize>,
    pub behaviors: Vec<PlayerBehavior>,
    pub events: Vec<Event>,
    pub announcements: BTreeMap<usize, Bit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewReport>,
    /// Bits the verdict was computed from; absent when disputed or rejected.
    pub decided: Option<Vec<Bit>>,
    pub verdict: Outcome,
}

impl Transcript {
    /// Each player's measured coin.
    pub fn coin_results(&self) -> Vec<Option<Bit>> {
        let mut out = vec![None; self.num_players];
        for e in &self.events {
            if let (Action::Flip, Actor::Player(p)) = (e.action, e.actor) {
                out[p] = e.bit;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transcript serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// `(reviewed player, bit)` readings taken by `actor`, sorted by reviewed
/// player.
pub fn confirm_readings(transcript: &Transcript, actor: Actor) -> Result<Vec<(usize, Bit)>> {
    let wanted: &[Action] = match actor {
        Actor::Player(_) => &[Action::EarlyConfirm, Action::Confirm],
        Actor::Witness => &[Action::WitnessRead],
    };
    let mut out: Vec<(usize, Bit)> = transcript
        .events
        .iter()
        .filter(|e| e.actor == actor && wanted.contains(&e.action))
        .filter_map(|e| Some((e.subject?, e.bit?)))
        .collect();
    if out.is_empty() {
        return Err(Error::NotYetMeasured(actor.to_string()));
    }
    out.sort_unstable();
    Ok(out)
}

/// A game in progress: the live quantum state plus the event log so far.
#[derive(Debug, Clone)]
pub struct GameState {
    layout: GameLayout,
    state: StateVector,
    events: Vec<Event>,
    coins: Vec<Option<Bit>>,
    measured: BTreeMap<usize, Bit>,
}

impl GameState {
    pub fn new(layout: GameLayout, state: StateVector) -> Self {
        let n = layout.num_players;
        Self {
            layout,
            state,
            events: Vec::new(),
            coins: vec![None; n],
            measured: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn layout(&self) -> &GameLayout {
        &self.layout
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn coins(&self) -> &[Option<Bit>] {
        &self.coins
    }

    fn log(
        &mut self,
        actor: Actor,
        action: Action,
        qubit: Option<usize>,
        bit: Option<Bit>,
        subject: Option<usize>,
    ) -> u64 {
        let time = self.events.len() as u64;
        self.events.push(Event {
            time,
            actor,
            action,
            qubit,
            bit,
            subject,
        });
        time
    }

    fn check_player(&self, player: usize) -> Result<()> {
        if player >= self.layout.num_players {
            return Err(Error::PlayerOutOfRange {
                player,
                num_players: self.layout.num_players,
            });
        }
        Ok(())
    }

    fn measure<R: Rng + ?Sized>(&mut self, qubit: usize, rng: &mut R) -> Result<Bit> {
        if let Some(&bit) = self.measured.get(&qubit) {
            return Ok(bit);
        }
        let out = self.state.measure(qubit, rng)?;
        self.measured.insert(qubit, out.bit);
        Ok(out.bit)
    }

    /// Coin flipping: `player` measures their coin qubit.
    pub fn flip<R: Rng + ?Sized>(&mut self, player: usize, rng: &mut R) -> Result<Bit> {
        self.check_player(player)?;
        if let Some(bit) = self.coins[player] {
            return Ok(bit);
        }
        let q = self.layout.coin_qubits[player];
        let bit = self.measure(q, rng)?;
        self.coins[player] = Some(bit);
        self.log(
            Actor::Player(player),
            Action::Flip,
            Some(q),
            Some(bit),
            Some(player),
        );
        Ok(bit)
    }

    fn read_confirmations<R: Rng + ?Sized>(
        &mut self,
        player: usize,
        action: Action,
        rng: &mut R,
    ) -> Result<Vec<(usize, Bit)>> {
        self.check_player(player)?;
        let list = self.layout.confirmation_qubits[player].clone();
        let mut out = Vec::with_capacity(list.len());
        for (reviewed, q) in list {
            let fresh = !self.measured.contains_key(&q);
            let bit = self.measure(q, rng)?;
            if fresh {
                self.log(
                    Actor::Player(player),
                    action,
                    Some(q),
                    Some(bit),
                    Some(reviewed),
                );
            }
            out.push((reviewed, bit));
        }
        Ok(out)
    }

    /// Reads every confirmation qubit of `player` ahead of the coin flips.
    pub fn early_confirm<R: Rng + ?Sized>(
        &mut self,
        player: usize,
        rng: &mut R,
    ) -> Result<Vec<(usize, Bit)>> {
        self.read_confirmations(player, Action::EarlyConfirm, rng)
    }

    /// Confirmation stage for `player`. Qubits already read early keep their
    /// earlier value.
    pub fn confirm<R: Rng + ?Sized>(
        &mut self,
        player: usize,
        rng: &mut R,
    ) -> Result<Vec<(usize, Bit)>> {
        self.read_confirmations(player, Action::Confirm, rng)
    }

    /// Applies a local unitary to one of `player`'s confirmation qubits. Only
    /// allowed once every coin has been flipped.
    pub fn apply_manipulation(
        &mut self,
        player: usize,
        qubit: usize,
        unitary: Matrix2,
    ) -> Result<()> {
        self.check_player(player)?;
        let owned = self.layout.confirmation_qubits[player]
            .iter()
            .any(|&(_, q)| q == qubit);
        if !owned {
            return Err(Error::TargetNotOwned { player, qubit });
        }
        if self.coins.iter().any(Option::is_none) {
            return Err(Error::InvalidParameter(
                "manipulation is only allowed after every coin is flipped".into(),
            ));
        }
        self.state.apply(&Gate::unitary(qubit, unitary)?)?;
        self.log(
            Actor::Player(player),
            Action::Manipulate,
            Some(qubit),
            None,
            None,
        );
        Ok(())
    }

    /// The witness reads its copy of every coin.
    pub fn witness_read<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Bit>> {
        if self.layout.witness_qubits.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} has no witness",
                self.layout.design
            )));
        }
        let qubits = self.layout.witness_qubits.clone();
        let mut out = Vec::with_capacity(qubits.len());
        for (player, q) in qubits.into_iter().enumerate() {
            let fresh = !self.measured.contains_key(&q);
            let bit = self.measure(q, rng)?;
            if fresh {
                self.log(
                    Actor::Witness,
                    Action::WitnessRead,
                    Some(q),
                    Some(bit),
                    Some(player),
                );
            }
            out.push(bit);
        }
        Ok(out)
    }
}

/// Prepared game for one design and coin; cheap to run many times.
#[derive(Debug, Clone)]
pub struct Engine {
    circuit: Circuit,
    prepared: StateVector,
    rules: Rules,
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &p in order {
        if p >= n || seen[p] {
            return Err(Error::BadPermutation(order.to_vec()));
        }
        seen[p] = true;
    }
    if order.len() != n {
        return Err(Error::BadPermutation(order.to_vec()));
    }
    Ok(())
}

impl Engine {
    pub fn new(design: Design, coin: &CoinSpec, rules: Rules) -> Result<Self> {
        let circuit = circuits::build(design, coin.num_players())?;
        let prepared = circuit.prepare(coin)?;
        Ok(Self {
            circuit,
            prepared,
            rules,
        })
    }

    pub fn layout(&self) -> &GameLayout {
        &self.circuit.layout
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn prepared_state(&self) -> &StateVector {
        &self.prepared
    }

    /// Fresh game right after preparation.
    pub fn start(&self) -> GameState {
        GameState::new(self.circuit.layout.clone(), self.prepared.clone())
    }

    /// Plays one round. `order` is the order in which players act at every
    /// stage; the result depends only on the arguments and `seed`.
    pub fn run(
        &self,
        order: &[usize],
        behaviors: &[PlayerBehavior],
        seed: u64,
    ) -> Result<Transcript> {
        let layout = self.layout();
        let n = layout.num_players;
        check_order(order, n)?;
        if behaviors.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: behaviors.len(),
            });
        }
        for b in behaviors {
            if let PlayerBehavior::UnitaryManipulator { matrix, .. } = b {
                let deviation = unitarity_deviation(matrix);
                if deviation > UNITARY_TOL {
                    return Err(Error::NotUnitary { deviation });
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut game = self.start();

        for &p in order {
            if behaviors[p] == PlayerBehavior::EarlyConfirmMeasurer {
                game.early_confirm(p, &mut rng)?;
            }
        }
        for &p in order {
            game.flip(p, &mut rng)?;
        }
        for &p in order {
            if let PlayerBehavior::UnitaryManipulator { matrix, target } = &behaviors[p] {
                let qubit = match target {
                    Some(q) => *q,
                    None => match game.layout.confirmation_qubits[p].first() {
                        Some(&(_, q)) => q,
                        None => {
                            return Err(Error::TargetNotOwned {
                                player: p,
                                qubit: usize::MAX,
                            })
                        }
                    },
                };
                game.apply_manipulation(p, qubit, *matrix)?;
            }
        }

        let has_witness = !layout.witness_qubits.is_empty();
        let has_review = layout.confirmation_qubits.iter().any(|l| !l.is_empty());

        let mut witness_bits = None;
        let mut witness_time = None;
        if has_witness {
            witness_bits = Some(game.witness_read(&mut rng)?);
            witness_time = Some(game.log(Actor::Witness, Action::WitnessVerdict, None, None, None));
        }

        let mut readings = vec![Vec::new(); n];
        if has_review {
            for &p in order {
                readings[p] = game.confirm(p, &mut rng)?;
            }
        }

        let coins: Vec<Bit> = game.coins.iter().map(|c| c.expect("all flipped")).collect();
        let mut announcements = BTreeMap::new();
        for &p in order {
            let claim = match &behaviors[p] {
                PlayerBehavior::ClassicalLiar { policy } => policy.claim(coins[p]),
                _ => coins[p],
            };
            announcements.insert(p, claim);
            game.log(
                Actor::Player(p),
                Action::Announce,
                None,
                Some(claim),
                Some(p),
            );
        }
        let claims: Vec<Bit> = (0..n).map(|p| announcements[&p]).collect();

        let review = if has_review {
            let mut matrix = vec![vec![None; n]; n];
            for (reviewer, list) in readings.iter().enumerate() {
                for &(reviewed, bit) in list {
                    matrix[reviewed][reviewer] = Some(bit);
                }
            }
            Some(ReviewReport::new(
                claims.clone(),
                matrix,
                self.rules.thresholds,
            )?)
        } else {
            None
        };
        if has_review {
            let review_time = game.log(Actor::Witness, Action::ReviewVerdict, None, None, None);
            if let Some(w) = witness_time {
                if w > review_time {
                    return Err(Error::Invariant("witness verdict after peer review".into()));
                }
            }
        }

        let (decided, verdict) = self.decide(&claims, witness_bits.as_deref(), review.as_ref())?;
        Ok(Transcript {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            design: layout.design,
            num_players: n,
            seed,
            order: order.to_vec(),
            behaviors: behaviors.to_vec(),
            events: game.events,
            announcements,
            review,
            decided,
            verdict,
        })
    }

    fn decide(
        &self,
        claims: &[Bit],
        witness: Option<&[Bit]>,
        review: Option<&ReviewReport>,
    ) -> Result<(Option<Vec<Bit>>, Outcome)> {
        let rule = self.rules.winner;
        let settle = |bits: Vec<Bit>| {
            let verdict = rule.decide(&bits);
            Ok((Some(bits), verdict))
        };
        match self.layout().design {
            Design::Classical => settle(claims.to_vec()),
            Design::TwoParty => {
                let review = review.expect("two-party has confirmations");
                let conflict =
                    (0..claims.len()).any(|p| review.agreement_ratio(p).map_or(true, |r| r < 1.0));
                if conflict {
                    Ok((None, Outcome::Disputed))
                } else {
                    settle(claims.to_vec())
                }
            }
            Design::TwoPartyWitness | Design::CentralReview => {
                settle(witness.expect("witness design").to_vec())
            }
            Design::PeerToPeer | Design::RingReview => {
                let rejected = review.expect("review design").rejected()?;
                if rejected.is_empty() {
                    settle(claims.to_vec())
                } else {
                    Ok((None, Outcome::Rejected(rejected)))
                }
            }
            Design::Hybrid => {
                let review = review.expect("hybrid has confirmations");
                let witness = witness.expect("hybrid has a witness");
                let appeals: BTreeSet<usize> = match self.rules.mode {
                    ConsensusMode::WitnessPrimary => (0..claims.len())
                        .filter(|&p| claims[p] != witness[p])
                        .collect(),
                    ConsensusMode::P2PPrimary => review.rejected()?.into_iter().collect(),
                };
                let wbits: Vec<Option<Bit>> = witness.iter().map(|&b| Some(b)).collect();
                let decision = hybrid_decide(self.rules.mode, &wbits, review, &appeals)?;
                settle(decision.bits)
            }
        }
    }
}

/// Plays one round with default rules.
pub fn run_game(
    design: Design,
    coin: &CoinSpec,
    order: &[usize],
    behaviors: &[PlayerBehavior],
    seed: u64,
) -> Result<Transcript> {
    Engine::new(design, coin, Rules::default())?.run(order, behaviors, seed)
}

/// Exact state after the listed players observed the listed coin bits.
pub fn partial_flip_state(
    design: Design,
    coin: &CoinSpec,
    flipped: &[(usize, Bit)],
) -> Result<StateVector> {
    let circuit = circuits::build(design, coin.num_players())?;
    let mut state = circuit.prepare(coin)?;
    let mut seen = BTreeSet::new();
    for &(player, bit) in flipped {
        if player >= coin.num_players() {
            return Err(Error::PlayerOutOfRange {
                player,
                num_players: coin.num_players(),
            });
        }
        if !seen.insert(player) {
            return Err(Error::InvalidParameter(format!(
                "player {player} flipped twice"
            )));
        }
        state.project(circuit.layout.coin_qubits[player], bit)?;
    }
    Ok(state)
}

/// Exact distribution of the outcomes of measuring `qubits` in the given
/// order, by walking every branch with nonzero probability. Keys list bits in
/// the same order as `qubits`.
pub fn branch_distribution(
    state: &StateVector,
    qubits: &[usize],
) -> Result<BTreeMap<Vec<Bit>, f64>> {
    fn walk(
        state: &StateVector,
        qubits: &[usize],
        prefix: &mut Vec<Bit>,
        weight: f64,
        out: &mut BTreeMap<Vec<Bit>, f64>,
    ) -> Result<()> {
        let Some((&q, rest)) = qubits.split_first() else {
            *out.entry(prefix.clone()).or_insert(0.0) += weight;
            return Ok(());
        };
        for bit in 0..2 {
            let mut branch = state.clone();
            match branch.project(q, bit) {
                Ok(p) => {
                    prefix.push(bit);
                    walk(&branch, rest, prefix, weight * p, out)?;
                    prefix.pop();
                }
                Err(Error::ZeroProbabilityBranch { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(state, qubits, &mut Vec::new(), 1.0, &mut out)?;
    Ok(out)
}

/// Exact joint distribution of all coin bits (keyed in player order) when
/// players flip in `order`.
pub fn coin_distribution(
    state: &StateVector,
    layout: &GameLayout,
    order: &[usize],
) -> Result<BTreeMap<Vec<Bit>, f64>> {
    check_order(order, layout.num_players)?;
    let qubits: Vec<usize> = order.iter().map(|&p| layout.coin_qubits[p]).collect();
    let by_order = branch_distribution(state, &qubits)?;
    Ok(by_order
        .into_iter()
        .map(|(bits, p)| {
            let mut by_player = vec![0; bits.len()];
            for (k, &player) in order.iter().enumerate() {
                by_player[player] = bits[k];
            }
            (by_player, p)
        })
        .collect())
}
