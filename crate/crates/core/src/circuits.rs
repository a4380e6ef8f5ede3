//! Circuit builders for every game design, plus resource accounting.
//!
//! Each builder returns the uniform-coin preparation circuit together with a
//! [`GameLayout`] that names which qubit plays which role. Non-uniform coins
//! reuse the same circuit: [`Circuit::prepare`] writes the coin tensor onto the
//! coin qubits directly and skips the Hadamard layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coins::CoinSpec;
use crate::error::{Error, Result};
use crate::qstate::{Gate, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Two independent coins, no confirmation qubits.
    Classical,
    TwoParty,
    TwoPartyWitness,
    #[serde(rename = "central")]
    CentralReview,
    #[serde(rename = "p2p")]
    PeerToPeer,
    #[serde(rename = "ring")]
    RingReview,
    Hybrid,
}

impl Design {
    pub const ALL: [Design; 7] = [
        Design::Classical,
        Design::TwoParty,
        Design::TwoPartyWitness,
        Design::CentralReview,
        Design::PeerToPeer,
        Design::RingReview,
        Design::Hybrid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Design::Classical => "classical",
            Design::TwoParty => "two-party",
            Design::TwoPartyWitness => "two-party-witness",
            Design::CentralReview => "central",
            Design::PeerToPeer => "p2p",
            Design::RingReview => "ring",
            Design::Hybrid => "hybrid",
        }
    }

    /// Supported player counts.
    pub fn player_range(&self) -> (usize, usize) {
        match self {
            Design::Classical | Design::TwoParty | Design::TwoPartyWitness => (2, 2),
            Design::CentralReview | Design::RingReview => (2, 12),
            Design::PeerToPeer => (2, 5),
            Design::Hybrid => (2, 4),
        }
    }

    pub fn has_witness(&self) -> bool {
        matches!(
            self,
            Design::TwoPartyWitness | Design::CentralReview | Design::Hybrid
        )
    }

    /// Qubit count for `n` players.
    pub fn qubit_count(&self, n: usize) -> usize {
        match self {
            Design::Classical => n,
            Design::TwoParty | Design::CentralReview | Design::RingReview => 2 * n,
            Design::TwoPartyWitness => 3 * n,
            Design::PeerToPeer => n * n,
            Design::Hybrid => n * n + n,
        }
    }

    pub fn check_players(&self, n: usize) -> Result<()> {
        let (min, max) = self.player_range();
        if n < min || n > max {
            return Err(Error::PlayerCountOutOfRange {
                design: self.name(),
                min,
                max,
                got: n,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Design::ALL.iter().map(|d| d.name()).collect();
                Error::Config(format!("unknown design {s:?}, expected one of {names:?}"))
            })
    }
}

/// Which qubit plays which role in a game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLayout {
    pub design: Design,
    pub num_players: usize,
    pub num_qubits: usize,
    /// Coin qubit of each player.
    pub coin_qubits: Vec<usize>,
    /// Per player, `(reviewed player, qubit)` sorted by reviewed player.
    pub confirmation_qubits: Vec<Vec<(usize, usize)>>,
    /// Witness copy of each player's coin; empty when the design has no witness.
    pub witness_qubits: Vec<usize>,
}

impl GameLayout {
    /// Player owning `qubit` as a coin or confirmation qubit.
    pub fn owner_of(&self, qubit: usize) -> Option<usize> {
        if let Some(p) = self.coin_qubits.iter().position(|&q| q == qubit) {
            return Some(p);
        }
        self.confirmation_qubits
            .iter()
            .position(|list| list.iter().any(|&(_, q)| q == qubit))
    }

    /// Players that review `player`, with the qubit each one reads.
    pub fn reviewers_of(&self, player: usize) -> Vec<(usize, usize)> {
        self.confirmation_qubits
            .iter()
            .enumerate()
            .filter_map(|(reviewer, list)| {
                list.iter()
                    .find(|&&(reviewed, _)| reviewed == player)
                    .map(|&(_, q)| (reviewer, q))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let mut all: Vec<usize> = self.coin_qubits.clone();
        all.extend(self.confirmation_qubits.iter().flatten().map(|&(_, q)| q));
        all.extend(&self.witness_qubits);
        let len = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != len || all.last().is_some_and(|&q| q >= self.num_qubits) {
            return Err(Error::Invariant(format!(
                "layout qubits overlap or exceed register: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    pub layout: GameLayout,
}

impl Circuit {
    fn new(layout: GameLayout) -> Self {
        Self {
            num_qubits: layout.num_qubits,
            gates: Vec::new(),
            layout,
        }
    }

    fn push(&mut self, gate: Gate) {
        self.gates.push(gate);
    }

    /// Runs the gate list from `|0...0>`.
    pub fn simulate(&self) -> Result<StateVector> {
        let mut state = StateVector::zero(self.num_qubits)?;
        state.apply_all(&self.gates)?;
        Ok(state)
    }

    /// Prepares the game state for `coin`: the coin tensor is written onto the
    /// coin qubits and the remaining (non-Hadamard) gates copy it out.
    pub fn prepare(&self, coin: &CoinSpec) -> Result<StateVector> {
        if coin.num_players() != self.layout.num_players {
            return Err(Error::WrongArity {
                expected: self.layout.num_players,
                got: coin.num_players(),
            });
        }
        let mut state =
            StateVector::embed_register(self.num_qubits, &self.layout.coin_qubits, coin.coeffs())?;
        for gate in &self.gates {
            if let Gate::Hadamard(q) = gate {
                if self.layout.coin_qubits.contains(q) {
                    continue;
                }
            }
            state.apply(gate)?;
        }
        Ok(state)
    }

    /// One gate per line: `NAME target[,target]`.
    pub fn to_gate_list(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            let targets: Vec<String> = g.qubits().iter().map(|q| q.to_string()).collect();
            out.push_str(g.name());
            out.push(' ');
            out.push_str(&targets.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses the text produced by [`Circuit::to_gate_list`]. `U` lines carry no
/// matrix and are rejected.
pub fn parse_gate_list(text: &str) -> Result<Vec<Gate>> {
    let mut gates = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Config(format!("gate list line {}: {line:?}", lineno + 1));
        let (name, args) = line.split_once(' ').ok_or_else(bad)?;
        let qubits: Vec<usize> = args
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let gate = match (name, qubits.as_slice()) {
            ("H", [q]) => Gate::Hadamard(*q),
            ("X", [q]) => Gate::PauliX(*q),
            ("CNOT", [c, t]) => Gate::ControlledNot {
                control: *c,
                target: *t,
            },
            ("SWAP", [a, b]) => Gate::Swap(*a, *b),
            _ => return Err(bad()),
        };
        gates.push(gate);
    }
    Ok(gates)
}

/// Qubit count and ASAP depth: each gate lands one layer after the latest
/// gate already touching any of its qubits.
pub fn resource_report(circuit: &Circuit) -> (usize, usize) {
    let mut level = vec![0usize; circuit.num_qubits];
    let mut depth = 0;
    for gate in &circuit.gates {
        let qubits = gate.qubits();
        let layer = qubits.iter().map(|&q| level[q]).max().unwrap_or(0) + 1;
        for q in qubits {
            level[q] = layer;
        }
        depth = depth.max(layer);
    }
    (circuit.num_qubits, depth)
}

/// Builds the circuit for `design` with `n` players.
pub fn build(design: Design, n: usize) -> Result<Circuit> {
    design.check_players(n)?;
    Ok(match design {
        Design::Classical => build_classical_baseline(),
        Design::TwoParty => build_two_party(),
        Design::TwoPartyWitness => build_two_party_with_witness(),
        Design::CentralReview => build_central_review(n)?,
        Design::PeerToPeer => build_p2p(n)?,
        Design::RingReview => build_ring_review(n)?,
        Design::Hybrid => build_hybrid(n)?,
    })
}

/// Two independent Hadamard coins.
pub fn build_classical_baseline() -> Circuit {
    let layout = GameLayout {
        design: Design::Classical,
        num_players: 2,
        num_qubits: 2,
        coin_qubits: vec![0, 1],
        confirmation_qubits: vec![vec![], vec![]],
        witness_qubits: vec![],
    };
    let mut c = Circuit::new(layout);
    c.push(Gate::Hadamard(0));
    c.push(Gate::Hadamard(1));
    c
}

/// Qubits `[A-coin, A-confirm, B-coin, B-confirm]`: each coin is copied onto
/// its owner's ancilla and the ancillas are then exchanged.
pub fn build_two_party() -> Circuit {
    let layout = GameLayout {
        design: Design::TwoParty,
        num_players: 2,
        num_qubits: 4,
        coin_qubits: vec![0, 2],
        confirmation_qubits: vec![vec![(1, 1)], vec![(0, 3)]],
        witness_qubits: vec![],
    };
    let mut c = Circuit::new(layout);
    two_party_gates(&mut c);
    c
}

fn two_party_gates(c: &mut Circuit) {
    c.push(Gate::Hadamard(0));
    c.push(Gate::ControlledNot {
        control: 0,
        target: 1,
    });
    c.push(Gate::Hadamard(2));
    c.push(Gate::ControlledNot {
        control: 2,
        target: 3,
    });
    c.push(Gate::Swap(1, 3));
}

/// [`build_two_party`] plus witness qubits 4 and 5, copied from the coins
/// after the exchange.
pub fn build_two_party_with_witness() -> Circuit {
    let layout = GameLayout {
        design: Design::TwoPartyWitness,
        num_players: 2,
        num_qubits: 6,
        coin_qubits: vec![0, 2],
        confirmation_qubits: vec![vec![(1, 1)], vec![(0, 3)]],
        witness_qubits: vec![4, 5],
    };
    let mut c = Circuit::new(layout);
    two_party_gates(&mut c);
    c.push(Gate::ControlledNot {
        control: 0,
        target: 4,
    });
    c.push(Gate::ControlledNot {
        control: 2,
        target: 5,
    });
    c
}

/// Coins on qubits `0..n`, witness copies on `n..2n`. Depth 2.
pub fn build_central_review(n: usize) -> Result<Circuit> {
    Design::CentralReview.check_players(n)?;
    let layout = GameLayout {
        design: Design::CentralReview,
        num_players: n,
        num_qubits: 2 * n,
        coin_qubits: (0..n).collect(),
        confirmation_qubits: vec![vec![]; n],
        witness_qubits: (n..2 * n).collect(),
    };
    let mut c = Circuit::new(layout);
    for k in 0..n {
        c.push(Gate::Hadamard(k));
    }
    for k in 0..n {
        c.push(Gate::ControlledNot {
            control: k,
            target: n + k,
        });
    }
    Ok(c)
}

/// Coins on `0..n`, confirmations on `n..2n`; player `k`'s confirmation qubit
/// ends up holding the coin of player `k+1` (cyclically).
pub fn build_ring_review(n: usize) -> Result<Circuit> {
    Design::RingReview.check_players(n)?;
    let layout = GameLayout {
        design: Design::RingReview,
        num_players: n,
        num_qubits: 2 * n,
        coin_qubits: (0..n).collect(),
        confirmation_qubits: (0..n).map(|k| vec![((k + 1) % n, n + k)]).collect(),
        witness_qubits: vec![],
    };
    let mut c = Circuit::new(layout);
    for k in 0..n {
        c.push(Gate::Hadamard(k));
    }
    for k in 0..n {
        c.push(Gate::ControlledNot {
            control: k,
            target: n + k,
        });
    }
    let row: Vec<usize> = (n..2 * n).collect();
    push_rotation(&mut c, &row, 1);
    Ok(c)
}

/// Qubit holding slot `k` (1-based) of player `p` in the peer-to-peer layout;
/// slot 0 is the coin.
fn p2p_qubit(n: usize, player: usize, slot: usize) -> usize {
    player * n + slot
}

fn p2p_layout(design: Design, n: usize, num_qubits: usize) -> GameLayout {
    // Slot k of player p reviews player (p + k) mod n.
    let confirmation_qubits = (0..n)
        .map(|p| {
            let mut list: Vec<(usize, usize)> =
                (1..n).map(|k| ((p + k) % n, p2p_qubit(n, p, k))).collect();
            list.sort_unstable();
            list
        })
        .collect();
    GameLayout {
        design,
        num_players: n,
        num_qubits,
        coin_qubits: (0..n).map(|p| p2p_qubit(n, p, 0)).collect(),
        confirmation_qubits,
        witness_qubits: vec![],
    }
}

/// Rotates the contents of `row` so position `p` ends up holding what
/// position `p + shift` held. Each cycle of the rotation is a chain of swaps
/// sharing one qubit with the next, so a cycle of length L costs L-1 layers.
fn push_rotation(c: &mut Circuit, row: &[usize], shift: usize) {
    let n = row.len();
    let mut visited = vec![false; n];
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut p = (start + shift) % n;
        while p != start {
            visited[p] = true;
            cycle.push(p);
            p = (p + shift) % n;
        }
        for pair in cycle.windows(2) {
            c.push(Gate::Swap(row[pair[0]], row[pair[1]]));
        }
    }
}

fn push_p2p_fanout_swap(c: &mut Circuit, n: usize) {
    for p in 0..n {
        c.push(Gate::Hadamard(p2p_qubit(n, p, 0)));
    }
    // Every player copies their coin into their own ancillas, slot by slot.
    for k in 1..n {
        for p in 0..n {
            c.push(Gate::ControlledNot {
                control: p2p_qubit(n, p, 0),
                target: p2p_qubit(n, p, k),
            });
        }
    }
    // Slot row k is rotated by k, handing player p the coin of player p + k.
    for k in 1..n {
        let row: Vec<usize> = (0..n).map(|p| p2p_qubit(n, p, k)).collect();
        push_rotation(c, &row, k);
    }
}

/// Peer-to-peer review: player `p` owns qubits `p*n .. p*n + n`, the first
/// being the coin and the rest confirmation slots. Local fan-out followed by a
/// swap network; ASAP depth `2n - 1`.
pub fn build_p2p(n: usize) -> Result<Circuit> {
    Design::PeerToPeer.check_players(n)?;
    let mut c = Circuit::new(p2p_layout(Design::PeerToPeer, n, n * n));
    push_p2p_fanout_swap(&mut c, n);
    Ok(c)
}

/// Same layout and state as [`build_p2p`], built by CNOTs straight from each
/// coin into the reviewers' slots.
pub fn build_p2p_direct(n: usize) -> Result<Circuit> {
    Design::PeerToPeer.check_players(n)?;
    let layout = p2p_layout(Design::PeerToPeer, n, n * n);
    let mut c = Circuit::new(layout.clone());
    for p in 0..n {
        c.push(Gate::Hadamard(layout.coin_qubits[p]));
    }
    for (reviewer, list) in layout.confirmation_qubits.iter().enumerate() {
        debug_assert!(list.iter().all(|&(m, _)| m != reviewer));
        for &(reviewed, q) in list {
            c.push(Gate::ControlledNot {
                control: layout.coin_qubits[reviewed],
                target: q,
            });
        }
    }
    Ok(c)
}

/// Peer-to-peer registers on `0..n*n` plus a witness copy of the coins on
/// `n*n..n*n + n`.
pub fn build_hybrid(n: usize) -> Result<Circuit> {
    Design::Hybrid.check_players(n)?;
    let mut layout = p2p_layout(Design::Hybrid, n, n * n + n);
    layout.witness_qubits = (n * n..n * n + n).collect();
    let mut c = Circuit::new(layout);
    push_p2p_fanout_swap(&mut c, n);
    for p in 0..n {
        c.push(Gate::ControlledNot {
            control: p2p_qubit(n, p, 0),
            target: n * n + p,
        });
    }
    Ok(c)
}

/// Checks structural invariants of a freshly built circuit.
pub fn validate(circuit: &Circuit) -> Result<()> {
    circuit.layout.validate()?;
    if circuit.layout.num_qubits != circuit.num_qubits
        || circuit.num_qubits
            != circuit
                .layout
                .design
                .qubit_count(circuit.layout.num_players)
    {
        return Err(Error::Invariant("qubit count does not match design".into()));
    }
    for g in &circuit.gates {
        if g.qubits().iter().any(|&q| q >= circuit.num_qubits) {
            return Err(Error::QubitOutOfRange {
                qubit: *g.qubits().iter().max().unwrap(),
                num_qubits: circuit.num_qubits,
            });
        }
    }
    Ok(())
}
