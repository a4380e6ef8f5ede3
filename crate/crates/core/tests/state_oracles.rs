//! Prepared states checked against closed forms written directly from each
//! design's register layout, without going through the gate lists.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qcoin::circuits::{self, Design};
use qcoin::coins::CoinSpec;
use qcoin::qstate::StateVector;

/// Value of player `p`'s bit in the N-bit coin index `b`.
fn bit(b: usize, p: usize, n: usize) -> usize {
    (b >> (n - 1 - p)) & 1
}

/// Builds `sum_b c_b |f(b)>` over a register of `num_qubits` qubits, where
/// `f` lists the coin player copied onto each qubit.
fn closed_form(coin: &CoinSpec, num_qubits: usize, source: impl Fn(usize) -> usize) -> StateVector {
    let n = coin.num_players();
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
    for b in 0..1usize << n {
        let index = (0..num_qubits).fold(0, |acc, q| (acc << 1) | bit(b, source(q), n));
        amps[index] += coin.coeffs()[b];
    }
    StateVector::from_amplitudes(amps, num_qubits).unwrap()
}

fn expected(design: Design, coin: &CoinSpec) -> StateVector {
    let n = coin.num_players();
    match design {
        Design::Classical => closed_form(coin, 2, |q| q),
        // A coin, A's copy of B, B coin, B's copy of A.
        Design::TwoParty => closed_form(coin, 4, |q| [0, 1, 1, 0][q]),
        Design::TwoPartyWitness => closed_form(coin, 6, |q| [0, 1, 1, 0, 0, 1][q]),
        Design::CentralReview => closed_form(coin, 2 * n, |q| q % n),
        // Player p's slot k holds the coin of player (p + k) mod N.
        Design::PeerToPeer => closed_form(coin, n * n, |q| (q / n + q % n) % n),
        // Coins, then confirmation k holding player k + 1.
        Design::RingReview => closed_form(coin, 2 * n, |q| if q < n { q } else { (q + 1) % n }),
        Design::Hybrid => closed_form(coin, n * n + n, |q| {
            if q < n * n {
                (q / n + q % n) % n
            } else {
                q - n * n
            }
        }),
    }
}

fn random_coin(n: usize, moduli: &[f64], phases: &[f64]) -> CoinSpec {
    let raw: Vec<Complex64> = (0..1usize << n)
        .map(|b| Complex64::from_polar(moduli[b], phases[b]))
        .collect();
    let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    CoinSpec::new(n, raw.into_iter().map(|c| c / norm).collect()).unwrap()
}

#[test]
fn uniform_coin_states_match_closed_forms() {
    for design in Design::ALL {
        let (lo, hi) = design.player_range();
        for n in lo..=hi.min(4) {
            let coin = CoinSpec::uniform(n).unwrap();
            let state = circuits::build(design, n).unwrap().simulate().unwrap();
            let d = state.max_distance(&expected(design, &coin));
            assert!(d < 1e-12, "{design} N={n}: {d:e}");
        }
    }
}

#[test]
fn classical_design_has_no_entanglement() {
    let state = circuits::build_classical_baseline().simulate().unwrap();
    for a in state.amplitudes() {
        assert!((a.re - 0.5).abs() < 1e-15 && a.im == 0.0);
    }
}

#[test]
fn hybrid_with_two_players_is_the_witnessed_two_party_game() {
    let hybrid = circuits::build_hybrid(2).unwrap().simulate().unwrap();
    let witnessed = circuits::build_two_party_with_witness().simulate().unwrap();
    assert!(hybrid.max_distance(&witnessed) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prepared_states_match_closed_forms(
        design_index in 0usize..7,
        n in 2usize..=4,
        moduli in prop::collection::vec(0.01f64..1.0, 16),
        phases in prop::collection::vec(0.0f64..2.0 * PI, 16),
    ) {
        let design = Design::ALL[design_index];
        let (lo, hi) = design.player_range();
        let n = n.clamp(lo, hi);
        let coin = random_coin(n, &moduli, &phases);
        let state = circuits::build(design, n).unwrap().prepare(&coin).unwrap();
        let d = state.max_distance(&expected(design, &coin));
        prop_assert!(d < 1e-12, "{} N={}: {:e}", design, n, d);
    }
}
