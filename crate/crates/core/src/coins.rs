//! Coin tensors.
//!
//! A coin for `N` players is the tensor of amplitudes `c[i_1 ... i_N]` with
//! `i_k = 0` for heads and `1` for tails. Tensors are stored flat, indexed by
//! the bit tuple read big-endian with player 0 as the most significant bit.

use std::collections::BTreeSet;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{Bit, MAX_QUBITS};

pub const HEADS: Bit = 0;
pub const TAILS: Bit = 1;

/// Tolerance used by the fairness predicates unless the caller picks one.
pub const DEFAULT_FAIRNESS_TOL: f64 = 1e-9;

/// Parameters of the general fair two-player coin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairCoinParams {
    /// Weight of the correlated outcomes, in `[0, 1]`.
    pub a: f64,
    /// Phases for (heads,heads), (heads,tails), (tails,heads), (tails,tails).
    pub phases: [f64; 4],
}

impl FairCoinParams {
    pub fn new(a: f64, phases: [f64; 4]) -> Self {
        Self { a, phases }
    }

    /// The classical coin: `a = 1/2`, no phases.
    pub fn classical() -> Self {
        Self::new(0.5, [0.0; 4])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinSpec {
    num_players: usize,
    coeffs: Vec<Complex64>,
}

impl CoinSpec {
    /// Builds a coin from a flat tensor. The squared norm must be within 1e-8
    /// of one; the stored tensor is rescaled to unit norm.
    pub fn new(num_players: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if !(2..=MAX_QUBITS).contains(&num_players) {
            return Err(Error::InvalidParameter(format!(
                "coin needs 2..={MAX_QUBITS} players, got {num_players}"
            )));
        }
        let expected = 1usize << num_players;
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        let norm_sqr: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > 1e-8 {
            return Err(Error::Normalization { norm_sqr });
        }
        let scale = 1.0 / norm_sqr.sqrt();
        Ok(Self {
            num_players,
            coeffs: coeffs.into_iter().map(|c| c * scale).collect(),
        })
    }

    /// Two-player coin from its 2x2 matrix `[[c_hh, c_ht], [c_th, c_tt]]`.
    pub fn from_matrix(m: [[Complex64; 2]; 2]) -> Result<Self> {
        Self::new(2, vec![m[0][0], m[0][1], m[1][0], m[1][1]])
    }

    /// Every entry equal to `2^(-N/2)`.
    pub fn uniform(num_players: usize) -> Result<Self> {
        if !(2..=MAX_QUBITS).contains(&num_players) {
            return Err(Error::InvalidParameter(format!(
                "coin needs 2..={MAX_QUBITS} players, got {num_players}"
            )));
        }
        let amp = (0.5f64).powf(num_players as f64 / 2.0);
        Self::new(
            num_players,
            vec![Complex64::new(amp, 0.0); 1usize << num_players],
        )
    }

    /// The general fair two-player coin
    /// `[[sqrt(a/2) e^{i t_hh}, sqrt((1-a)/2) e^{i t_ht}], [sqrt((1-a)/2) e^{i t_th}, sqrt(a/2) e^{i t_tt}]]`.
    pub fn fair(params: &FairCoinParams) -> Result<Self> {
        let a = params.a;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!("a = {a} outside [0, 1]")));
        }
        if params.phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        let diag = (a / 2.0).sqrt();
        let off = ((1.0 - a) / 2.0).sqrt();
        let [t_hh, t_ht, t_th, t_tt] = params.phases;
        Self::from_matrix([
            [
                Complex64::from_polar(diag, t_hh),
                Complex64::from_polar(off, t_ht),
            ],
            [
                Complex64::from_polar(off, t_th),
                Complex64::from_polar(diag, t_tt),
            ],
        ])
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Flat index of a bit tuple (player 0 most significant).
    pub fn index_of(&self, bits: &[Bit]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    /// Bit of `player` within flat index `index`.
    pub fn bit_at(&self, index: usize, player: usize) -> Bit {
        ((index >> (self.num_players - 1 - player)) & 1) as Bit
    }

    pub fn coefficient(&self, bits: &[Bit]) -> Complex64 {
        self.coeffs[self.index_of(bits)]
    }

    /// `|c|^2` for every flat index.
    pub fn joint_distribution(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Probability that `player` observes heads / tails.
    pub fn player_marginal(&self, player: usize) -> Result<(f64, f64)> {
        if player >= self.num_players {
            return Err(Error::PlayerOutOfRange {
                player,
                num_players: self.num_players,
            });
        }
        let mut heads = 0.0;
        let mut tails = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            if self.bit_at(k, player) == HEADS {
                heads += c.norm_sqr();
            } else {
                tails += c.norm_sqr();
            }
        }
        Ok((heads, tails))
    }

    fn require_two_players(&self) -> Result<()> {
        if self.num_players != 2 {
            return Err(Error::WrongArity {
                expected: 2,
                got: self.num_players,
            });
        }
        Ok(())
    }

    /// `| |c_ht| - |c_th| | <= tol`: both players see the same distribution.
    pub fn is_symmetric(&self, tol: f64) -> Result<bool> {
        self.require_two_players()?;
        Ok((self.coeffs[0b01].norm() - self.coeffs[0b10].norm()).abs() <= tol)
    }

    /// Symmetric and `| |c_hh| - |c_tt| | <= tol`: each player gets 1/2 heads.
    pub fn is_fair(&self, tol: f64) -> Result<bool> {
        Ok(self.is_symmetric(tol)?
            && (self.coeffs[0b00].norm() - self.coeffs[0b11].norm()).abs() <= tol)
    }

    /// N-player fairness: every player's marginal is within `tol` of (1/2, 1/2).
    pub fn is_fair_n(&self, tol: f64) -> bool {
        (0..self.num_players).all(|p| {
            let (h, t) = self.player_marginal(p).expect("player in range");
            (h - 0.5).abs() <= tol && (t - 0.5).abs() <= tol
        })
    }

    /// True when every entry equals `2^(-N/2)` within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let amp = (0.5f64).powf(self.num_players as f64 / 2.0);
        self.coeffs
            .iter()
            .all(|c| (c - Complex64::new(amp, 0.0)).norm() <= tol)
    }

    /// Builds a coin from `(bitstring, re, im)` triples; missing entries are 0.
    pub fn from_entries(entries: &[(String, f64, f64)]) -> Result<Self> {
        let Some((first, _, _)) = entries.first() else {
            return Err(Error::Config("coin has no entries".into()));
        };
        let num_players = first.len();
        if !(2..=MAX_QUBITS).contains(&num_players) {
            return Err(Error::Config(format!(
                "bitstring length {num_players} outside 2..={MAX_QUBITS}"
            )));
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 1 << num_players];
        let mut seen = BTreeSet::new();
        for (bits, re, im) in entries {
            if bits.len() != num_players || !bits.chars().all(|ch| ch == '0' || ch == '1') {
                return Err(Error::Config(format!(
                    "bad bitstring {bits:?}, expected {num_players} characters of 0/1"
                )));
            }
            if !seen.insert(bits.clone()) {
                return Err(Error::Config(format!("duplicate bitstring {bits:?}")));
            }
            let index = usize::from_str_radix(bits, 2).expect("validated bitstring");
            coeffs[index] = Complex64::new(*re, *im);
        }
        Self::new(num_players, coeffs)
    }

    /// Inverse of [`CoinSpec::from_entries`], skipping zero entries.
    pub fn to_entries(&self) -> Vec<(String, f64, f64)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(k, c)| {
                (
                    format!("{k:0width$b}", width = self.num_players),
                    c.re,
                    c.im,
                )
            })
            .collect()
    }

    /// Parses a coin file:
    ///
    /// ```toml
    /// entries = [["00", 0.5, 0.0], ["01", 0.5, 0.0], ["10", 0.5, 0.0], ["11", 0.5, 0.0]]
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct CoinFile {
            entries: Vec<(String, f64, f64)>,
        }
        let file: CoinFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_entries(&file.entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
