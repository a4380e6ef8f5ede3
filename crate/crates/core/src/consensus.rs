//! Peer review aggregation and witness/peer arbitration.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::Bit;

/// Acceptance criteria fixed before a game starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// A result is accepted when its agreement ratio is at least this.
    pub agreement: f64,
    /// Recorded alongside `agreement`; carries no decision power.
    pub disagreement: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            agreement: 1.0,
            disagreement: 0.0,
        }
    }
}

impl Thresholds {
    pub fn new(agreement: f64, disagreement: f64) -> Result<Self> {
        for (name, v) in [("agreement", agreement), ("disagreement", disagreement)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} threshold {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            agreement,
            disagreement,
        })
    }
}

/// Every player's announced result and how the other players read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub num_players: usize,
    pub self_results: Vec<Bit>,
    /// `reviews[n][j]` is player `n`'s result as read by player `j`. The
    /// diagonal and any pair where `j` does not review `n` are `None`.
    pub reviews: Vec<Vec<Option<Bit>>>,
    pub thresholds: Thresholds,
}

impl ReviewReport {
    pub fn new(
        self_results: Vec<Bit>,
        reviews: Vec<Vec<Option<Bit>>>,
        thresholds: Thresholds,
    ) -> Result<Self> {
        let n = self_results.len();
        if reviews.len() != n || reviews.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: reviews.len(),
            });
        }
        if let Some(p) = (0..n).find(|&p| reviews[p][p].is_some()) {
            return Err(Error::InvalidParameter(format!(
                "player {p} cannot review themselves"
            )));
        }
        Ok(Self {
            num_players: n,
            self_results,
            reviews,
            thresholds,
        })
    }

    /// Complete peer-to-peer report from a full review matrix; the diagonal
    /// of `matrix` is ignored.
    pub fn from_matrix(
        self_results: Vec<Bit>,
        matrix: &[Vec<Bit>],
        thresholds: Thresholds,
    ) -> Result<Self> {
        let reviews = matrix
            .iter()
            .enumerate()
            .map(|(n, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &b)| (j != n).then_some(b))
                    .collect()
            })
            .collect();
        Self::new(self_results, reviews, thresholds)
    }

    fn counts(&self, n: usize) -> Result<(usize, usize)> {
        if n >= self.num_players {
            return Err(Error::PlayerOutOfRange {
                player: n,
                num_players: self.num_players,
            });
        }
        let mine = self.self_results[n];
        let (agree, total) = self.reviews[n]
            .iter()
            .flatten()
            .fold((0, 0), |(a, t), &b| (a + (b == mine) as usize, t + 1));
        if total == 0 {
            return Err(Error::IncompleteReport(n));
        }
        Ok((agree, total))
    }

    /// Fraction of player `n`'s reviewers whose reading matches `n`'s result.
    pub fn agreement_ratio(&self, n: usize) -> Result<f64> {
        let (agree, total) = self.counts(n)?;
        Ok(agree as f64 / total as f64)
    }

    /// Fraction of reviewers contradicting player `n`.
    pub fn disagreement_ratio(&self, n: usize) -> Result<f64> {
        let (agree, total) = self.counts(n)?;
        Ok((total - agree) as f64 / total as f64)
    }

    pub fn accept_result(&self, n: usize) -> Result<bool> {
        Ok(self.agreement_ratio(n)? >= self.thresholds.agreement)
    }

    /// Players whose result is rejected.
    pub fn rejected(&self) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for n in 0..self.num_players {
            if !self.accept_result(n)? {
                out.push(n);
            }
        }
        Ok(out)
    }

    /// The common reading of player `n` when all reviewers agree.
    pub fn unanimous_review(&self, n: usize) -> Option<Bit> {
        let mut readings = self.reviews.get(n)?.iter().flatten();
        let first = *readings.next()?;
        readings.all(|&b| b == first).then_some(first)
    }

    /// Player `n`'s result as settled by peers: the announcement if accepted,
    /// else the reviewers' unanimous reading, else nothing.
    pub fn peer_result(&self, n: usize) -> Option<Bit> {
        match self.accept_result(n) {
            Ok(true) => Some(self.self_results[n]),
            _ => self.unanimous_review(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusMode {
    /// Follow the witness; appeals may be upheld by a unanimous peer review.
    #[default]
    WitnessPrimary,
    /// Follow peer review; appeals are settled by the witness.
    #[serde(rename = "p2p-primary")]
    P2PPrimary,
}

impl FromStr for ConsensusMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "witness-primary" | "witness" => Ok(Self::WitnessPrimary),
            "p2p-primary" | "p2p" => Ok(Self::P2PPrimary),
            _ => Err(Error::Config(format!("unknown consensus mode {s:?}"))),
        }
    }
}

impl fmt::Display for ConsensusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::WitnessPrimary => "witness-primary",
            Self::P2PPrimary => "p2p-primary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Witness,
    PeerReview,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridDecision {
    pub bits: Vec<Bit>,
    pub provenance: Vec<Provenance>,
}

/// Combines witness readings and the peer review into one result per player.
///
/// `witness_bits[n]` is `None` when the witness has no reading for `n`.
/// Under [`ConsensusMode::WitnessPrimary`] an appealed player's result comes
/// from peer review only when the review is unanimous and contradicts the
/// witness. Under [`ConsensusMode::P2PPrimary`] an appealed player's result
/// comes from the witness.
pub fn hybrid_decide(
    mode: ConsensusMode,
    witness_bits: &[Option<Bit>],
    report: &ReviewReport,
    appeals: &BTreeSet<usize>,
) -> Result<HybridDecision> {
    let n = report.num_players;
    if witness_bits.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: witness_bits.len(),
        });
    }
    if let Some(&p) = appeals.iter().find(|&&p| p >= n) {
        return Err(Error::PlayerOutOfRange {
            player: p,
            num_players: n,
        });
    }
    let mut bits = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for p in 0..n {
        let witness = witness_bits[p];
        let appealed = appeals.contains(&p);
        let choice = match mode {
            ConsensusMode::WitnessPrimary => {
                let upheld = report
                    .unanimous_review(p)
                    .filter(|&u| appealed && Some(u) != witness);
                if let Some(u) = upheld {
                    Some((u, Provenance::PeerReview))
                } else if let Some(w) = witness {
                    Some((w, Provenance::Witness))
                } else if appealed {
                    None
                } else {
                    report.peer_result(p).map(|b| (b, Provenance::PeerReview))
                }
            }
            ConsensusMode::P2PPrimary => {
                if appealed {
                    witness.map(|w| (w, Provenance::Witness)).or_else(|| {
                        report
                            .unanimous_review(p)
                            .map(|u| (u, Provenance::PeerReview))
                    })
                } else {
                    report
                        .peer_result(p)
                        .map(|b| (b, Provenance::PeerReview))
                        .or_else(|| witness.map(|w| (w, Provenance::Witness)))
                }
            }
        };
        let (bit, source) = choice.ok_or(Error::Unresolved(p))?;
        bits.push(bit);
        provenance.push(source);
    }
    Ok(HybridDecision { bits, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(self_results: Vec<Bit>, matrix: &[Vec<Bit>], r: f64) -> ReviewReport {
        ReviewReport::from_matrix(self_results, matrix, Thresholds::new(r, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn four_player_ratios() {
        // Player 0 says heads; players 1, 2 agree and player 3 reads tails.
        let m = vec![
            vec![0, 0, 0, 1],
            vec![1, 1, 1, 1],
            vec![0, 0, 0, 0],
            vec![1, 1, 1, 1],
        ];
        let rep = report(vec![0, 1, 0, 1], &m, 0.5);
        assert_eq!(rep.agreement_ratio(0).unwrap(), 2.0 / 3.0);
        assert_eq!(rep.disagreement_ratio(0).unwrap(), 1.0 / 3.0);
        assert!(rep.accept_result(0).unwrap());
        assert_eq!(rep.agreement_ratio(1).unwrap(), 1.0);
        assert_eq!(rep.disagreement_ratio(1).unwrap(), 0.0);

        let strict = report(vec![0, 1, 0, 1], &m, 0.75);
        assert!(!strict.accept_result(0).unwrap());
        assert!(strict.accept_result(1).unwrap());
        assert_eq!(strict.rejected().unwrap(), vec![0]);
    }

    #[test]
    fn incomplete_report() {
        let rep = ReviewReport::new(
            vec![0, 1],
            vec![vec![None, None], vec![Some(1), None]],
            Thresholds::default(),
        )
        .unwrap();
        assert_eq!(rep.agreement_ratio(0), Err(Error::IncompleteReport(0)));
        assert_eq!(rep.agreement_ratio(1).unwrap(), 1.0);
    }

    #[test]
    fn self_review_is_rejected() {
        let err = ReviewReport::new(
            vec![0, 1],
            vec![vec![Some(0), None], vec![None, None]],
            Thresholds::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn ratios_are_exact_complements() {
        for total in 1..=30usize {
            for agree in 0..=total {
                let r = agree as f64 / total as f64;
                let big_r = (total - agree) as f64 / total as f64;
                assert_eq!(r + big_r, 1.0, "{agree}/{total}");
            }
        }
    }

    #[test]
    fn hybrid_agreement_case() {
        let m = vec![vec![0, 0, 0], vec![1, 1, 1], vec![1, 1, 1]];
        let rep = report(vec![0, 1, 1], &m, 1.0);
        let witness = [Some(0), Some(1), Some(1)];
        let none = BTreeSet::new();
        let a = hybrid_decide(ConsensusMode::WitnessPrimary, &witness, &rep, &none).unwrap();
        let b = hybrid_decide(ConsensusMode::P2PPrimary, &witness, &rep, &none).unwrap();
        assert_eq!(a.bits, b.bits);
        assert_eq!(a.bits, vec![0, 1, 1]);
        assert!(a.provenance.iter().all(|&p| p == Provenance::Witness));
        assert!(b.provenance.iter().all(|&p| p == Provenance::PeerReview));
    }

    #[test]
    fn witness_primary_without_appeals_is_verbatim() {
        let m = vec![vec![1, 1, 1], vec![0, 0, 0], vec![1, 1, 1]];
        let rep = report(vec![1, 0, 1], &m, 1.0);
        let witness = [Some(0), Some(1), Some(0)];
        let d = hybrid_decide(
            ConsensusMode::WitnessPrimary,
            &witness,
            &rep,
            &BTreeSet::new(),
        )
        .unwrap();
        assert_eq!(d.bits, vec![0, 1, 0]);
    }

    #[test]
    fn witness_primary_appeal_upheld_by_unanimous_review() {
        let m = vec![vec![1, 1, 1], vec![0, 0, 0], vec![1, 1, 1]];
        let rep = report(vec![1, 0, 1], &m, 1.0);
        let witness = [Some(0), Some(0), Some(1)];
        let d = hybrid_decide(
            ConsensusMode::WitnessPrimary,
            &witness,
            &rep,
            &BTreeSet::from([0]),
        )
        .unwrap();
        assert_eq!(d.bits, vec![1, 0, 1]);
        assert_eq!(d.provenance[0], Provenance::PeerReview);
    }

    #[test]
    fn p2p_primary_appeal_goes_to_witness() {
        // Player 2 announces 0; one reviewer reads 0, the other 1.
        let m = vec![vec![0, 0, 0], vec![1, 1, 1], vec![0, 1, 0]];
        let rep = report(vec![0, 1, 0], &m, 1.0);
        let witness = [Some(0), Some(1), Some(1)];
        let d = hybrid_decide(
            ConsensusMode::P2PPrimary,
            &witness,
            &rep,
            &BTreeSet::from([2]),
        )
        .unwrap();
        assert_eq!(d.bits, vec![0, 1, 1]);
        assert_eq!(d.provenance[2], Provenance::Witness);
    }

    #[test]
    fn unresolved_appeal() {
        let m = vec![vec![0, 0, 0], vec![1, 1, 1], vec![0, 1, 0]];
        let rep = report(vec![0, 1, 0], &m, 1.0);
        let witness = [Some(0), Some(1), None];
        for mode in [ConsensusMode::P2PPrimary, ConsensusMode::WitnessPrimary] {
            assert_eq!(
                hybrid_decide(mode, &witness, &rep, &BTreeSet::from([2])),
                Err(Error::Unresolved(2))
            );
        }
    }

    #[test]
    fn mode_names() {
        for m in [ConsensusMode::WitnessPrimary, ConsensusMode::P2PPrimary] {
            assert_eq!(m.to_string().parse::<ConsensusMode>().unwrap(), m);
        }
    }

    fn arb_report() -> impl Strategy<Value = ReviewReport> {
        (2usize..7).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(prop::collection::vec(0u8..2, n), n),
            )
                .prop_map(|(s, m)| ReviewReport::from_matrix(s, &m, Thresholds::default()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn ratios_complement(rep in arb_report()) {
            for n in 0..rep.num_players {
                let r = rep.agreement_ratio(n).unwrap();
                let big_r = rep.disagreement_ratio(n).unwrap();
                prop_assert_eq!(r + big_r, 1.0);
            }
        }

        #[test]
        fn acceptance_monotone_in_threshold(rep in arb_report(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for n in 0..rep.num_players {
                let mut strict = rep.clone();
                strict.thresholds.agreement = hi;
                let mut lax = rep.clone();
                lax.thresholds.agreement = lo;
                prop_assert!(!strict.accept_result(n).unwrap() || lax.accept_result(n).unwrap());
            }
        }
    }
}
