//! Dense statevector engine.
//!
//! Qubit 0 is the most significant bit of a basis-state index, so the
//! amplitude of `|q0 q1 ... q(n-1)>` lives at index `q0 q1 ... q(n-1)` read as
//! a big-endian binary number. Every module in the crate relies on this
//! ordering.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the dense engine will allocate (2^26 amplitudes, 1 GiB).
pub const MAX_QUBITS: usize = 26;

/// Branches whose probability falls below this are treated as impossible.
pub const ZERO_BRANCH_EPS: f64 = 1e-20;

/// Tolerance used when validating unitaries.
pub const UNITARY_TOL: f64 = 1e-10;

/// Measurement result: 0 is heads (spin up), 1 is tails (spin down).
pub type Bit = u8;

pub type Matrix2 = [[Complex64; 2]; 2];

pub fn identity2() -> Matrix2 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [[one, zero], [zero, one]]
}

pub fn pauli_x2() -> Matrix2 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [[zero, one], [one, zero]]
}

/// General single-qubit rotation `U3(theta, phi, lambda)`.
pub fn u3(theta: f64, phi: f64, lambda: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), -Complex64::from_polar(s, lambda)],
        [
            Complex64::from_polar(s, phi),
            Complex64::from_polar(c, phi + lambda),
        ],
    ]
}

/// Largest entry of `|U^dagger U - I|`.
pub fn unitarity_deviation(m: &Matrix2) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                acc += m[k][r].conj() * m[k][c];
            }
            let expected = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((acc - Complex64::new(expected, 0.0)).norm());
        }
    }
    worst
}

fn dagger(m: &Matrix2) -> Matrix2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Hadamard(usize),
    PauliX(usize),
    ControlledNot { control: usize, target: usize },
    Swap(usize, usize),
    Unitary { target: usize, matrix: Matrix2 },
}

impl Gate {
    /// Single-qubit unitary gate, rejecting non-unitary matrices.
    pub fn unitary(target: usize, matrix: Matrix2) -> Result<Self> {
        let deviation = unitarity_deviation(&matrix);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Gate::Unitary { target, matrix })
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Hadamard(q) | Gate::PauliX(q) | Gate::Unitary { target: q, .. } => vec![q],
            Gate::ControlledNot { control, target } => vec![control, target],
            Gate::Swap(a, b) => vec![a, b],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::Hadamard(_) => "H",
            Gate::PauliX(_) => "X",
            Gate::ControlledNot { .. } => "CNOT",
            Gate::Swap(..) => "SWAP",
            Gate::Unitary { .. } => "U",
        }
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Unitary { target, matrix } => Gate::Unitary {
                target,
                matrix: dagger(&matrix),
            },
            other => other,
        }
    }

    fn validate(&self, num_qubits: usize) -> Result<()> {
        let qubits = self.qubits();
        for &q in &qubits {
            if q >= num_qubits {
                return Err(Error::QubitOutOfRange {
                    qubit: q,
                    num_qubits,
                });
            }
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::DuplicateTargets(qubits));
        }
        if let Gate::Unitary { matrix, .. } = self {
            let deviation = unitarity_deviation(matrix);
            if deviation > UNITARY_TOL {
                return Err(Error::NotUnitary { deviation });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub qubit: usize,
    pub bit: Bit,
    /// Born probability of `bit` before the collapse.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

fn check_size(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(Error::SizeOutOfRange {
            num_qubits,
            max: MAX_QUBITS,
        });
    }
    Ok(())
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        check_size(num_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Loads amplitudes directly. The input must already be normalized to
    /// within 1e-8; the stored copy is rescaled to unit norm.
    pub fn from_amplitudes(coeffs: Vec<Complex64>, num_qubits: usize) -> Result<Self> {
        check_size(num_qubits)?;
        let expected = 1usize << num_qubits;
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        let mut state = Self {
            num_qubits,
            amplitudes: coeffs,
        };
        let norm_sqr = state.norm_sqr();
        if !norm_sqr.is_finite() || (norm_sqr - 1.0).abs() > 1e-8 {
            return Err(Error::Normalization { norm_sqr });
        }
        state.rescale(1.0 / norm_sqr.sqrt());
        Ok(state)
    }

    /// Writes `coeffs` onto the listed `register` qubits (first listed qubit is
    /// the most significant index bit of `coeffs`); every other qubit is |0>.
    pub fn embed_register(
        num_qubits: usize,
        register: &[usize],
        coeffs: &[Complex64],
    ) -> Result<Self> {
        let mut state = Self::zero(num_qubits)?;
        if coeffs.len() != 1 << register.len() {
            return Err(Error::DimensionMismatch {
                expected: 1 << register.len(),
                got: coeffs.len(),
            });
        }
        for (i, &q) in register.iter().enumerate() {
            state.check_qubit(q)?;
            if register[..i].contains(&q) {
                return Err(Error::DuplicateTargets(register.to_vec()));
            }
        }
        let norm_sqr: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > 1e-8 {
            return Err(Error::Normalization { norm_sqr });
        }
        let scale = 1.0 / norm_sqr.sqrt();
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        let r = register.len();
        for (k, &c) in coeffs.iter().enumerate() {
            let mut index = 0usize;
            for (pos, &q) in register.iter().enumerate() {
                if (k >> (r - 1 - pos)) & 1 == 1 {
                    index |= state.mask(q);
                }
            }
            state.amplitudes[index] = c * scale;
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Value of `qubit` in basis state `index`.
    pub fn bit_of(&self, index: usize, qubit: usize) -> Bit {
        ((index & self.mask(qubit)) != 0) as Bit
    }

    /// Basis index with the given qubit values set and all others 0.
    pub fn index_of(&self, bits: &[(usize, Bit)]) -> usize {
        bits.iter()
            .filter(|(_, b)| *b == 1)
            .fold(0, |acc, &(q, _)| acc | self.mask(q))
    }

    /// Nonzero `(index, probability)` pairs in index order.
    pub fn support(&self, eps: f64) -> Vec<(usize, f64)> {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.norm_sqr()))
            .filter(|&(_, p)| p > eps)
            .collect()
    }

    /// Maximum amplitude-wise distance to `other`.
    pub fn max_distance(&self, other: &StateVector) -> f64 {
        if self.num_qubits != other.num_qubits {
            return f64::INFINITY;
        }
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &StateVector, tol: f64) -> bool {
        self.max_distance(other) <= tol
    }

    /// Reorders qubits: qubit `q` of the result is qubit `perm[q]` of `self`.
    pub fn permute_qubits(&self, perm: &[usize]) -> Result<StateVector> {
        let n = self.num_qubits;
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; n];
        for &p in perm {
            self.check_qubit(p)?;
            if seen[p] {
                return Err(Error::DuplicateTargets(perm.to_vec()));
            }
            seen[p] = true;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for (old, &amp) in self.amplitudes.iter().enumerate() {
            let mut new = 0usize;
            for (q, &p) in perm.iter().enumerate() {
                if old & self.mask(p) != 0 {
                    new |= self.mask(q);
                }
            }
            out[new] = amp;
        }
        Ok(StateVector {
            num_qubits: n,
            amplitudes: out,
        })
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match *gate {
            Gate::Hadamard(q) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let h = Complex64::new(h, 0.0);
                self.apply_matrix(q, &[[h, h], [h, -h]]);
            }
            Gate::PauliX(q) => {
                let m = self.mask(q);
                for i in 0..self.amplitudes.len() {
                    if i & m == 0 {
                        self.amplitudes.swap(i, i | m);
                    }
                }
            }
            Gate::ControlledNot { control, target } => {
                let cm = self.mask(control);
                let tm = self.mask(target);
                for i in 0..self.amplitudes.len() {
                    if i & cm != 0 && i & tm == 0 {
                        self.amplitudes.swap(i, i | tm);
                    }
                }
            }
            Gate::Swap(a, b) => {
                let am = self.mask(a);
                let bm = self.mask(b);
                for i in 0..self.amplitudes.len() {
                    if i & am != 0 && i & bm == 0 {
                        self.amplitudes.swap(i, (i & !am) | bm);
                    }
                }
            }
            Gate::Unitary { target, matrix } => self.apply_matrix(target, &matrix),
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        for g in gates {
            self.apply(g)?;
        }
        Ok(())
    }

    /// Exact `(p0, p1)` for `qubit`, normalized so the pair sums to one.
    pub fn marginal(&self, qubit: usize) -> Result<(f64, f64)> {
        self.check_qubit(qubit)?;
        let (p0, p1) = self.raw_marginal(qubit);
        let total = p0 + p1;
        if total <= 0.0 {
            return Err(Error::Normalization { norm_sqr: total });
        }
        Ok((p0 / total, p1 / total))
    }

    /// Projects `qubit` onto `bit` and renormalizes. Returns the Born
    /// probability the branch had before projection.
    pub fn project(&mut self, qubit: usize, bit: Bit) -> Result<f64> {
        let (p0, p1) = self.marginal(qubit)?;
        let p = if bit == 0 { p0 } else { p1 };
        if p < ZERO_BRANCH_EPS {
            return Err(Error::ZeroProbabilityBranch { qubit, bit });
        }
        self.collapse(qubit, bit);
        Ok(p)
    }

    /// Born-rule measurement with collapse. Draws exactly one uniform sample
    /// from `rng` per call.
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        qubit: usize,
        rng: &mut R,
    ) -> Result<MeasurementOutcome> {
        let (p0, p1) = self.marginal(qubit)?;
        let u: f64 = rng.gen();
        let bit = if p1 < ZERO_BRANCH_EPS {
            0
        } else if p0 < ZERO_BRANCH_EPS {
            1
        } else if u < p0 {
            0
        } else {
            1
        };
        self.collapse(qubit, bit);
        Ok(MeasurementOutcome {
            qubit,
            bit,
            probability: if bit == 0 { p0 } else { p1 },
        })
    }

    fn collapse(&mut self, qubit: usize, bit: Bit) {
        let m = self.mask(qubit);
        let mut kept = 0.0;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if ((i & m != 0) as Bit) == bit {
                kept += a.norm_sqr();
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        self.rescale(1.0 / kept.sqrt());
    }

    fn raw_marginal(&self, qubit: usize) -> (f64, f64) {
        let m = self.mask(qubit);
        let mut p0 = 0.0;
        let mut p1 = 0.0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if i & m == 0 {
                p0 += a.norm_sqr();
            } else {
                p1 += a.norm_sqr();
            }
        }
        (p0, p1)
    }

    fn apply_matrix(&mut self, qubit: usize, u: &Matrix2) {
        let m = self.mask(qubit);
        let len = self.amplitudes.len();
        let mut base = 0;
        while base < len {
            for i0 in base..base + m {
                let i1 = i0 | m;
                let a = self.amplitudes[i0];
                let b = self.amplitudes[i1];
                self.amplitudes[i0] = u[0][0] * a + u[0][1] * b;
                self.amplitudes[i1] = u[1][0] * a + u[1][1] * b;
            }
            base += 2 * m;
        }
    }

    fn rescale(&mut self, factor: f64) {
        if factor != 1.0 {
            for a in &mut self.amplitudes {
                *a *= factor;
            }
        }
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn assert_amps(state: &StateVector, expected: &[f64]) {
        assert_eq!(state.amplitudes().len(), expected.len());
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert!((a - c(*e)).norm() < 1e-12, "{:?} vs {:?}", state, expected);
        }
    }

    #[test]
    fn zero_states() {
        assert_amps(&StateVector::zero(1).unwrap(), &[1.0, 0.0]);
        assert_amps(&StateVector::zero(2).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        let mut sixteen = vec![0.0; 16];
        sixteen[0] = 1.0;
        assert_amps(&StateVector::zero(4).unwrap(), &sixteen);
    }

    #[test]
    fn zero_state_size_bounds() {
        assert!(matches!(
            StateVector::zero(27),
            Err(Error::SizeOutOfRange { num_qubits: 27, .. })
        ));
        assert!(StateVector::zero(0).is_err());
    }

    #[test]
    fn amplitude_loading() {
        let s = StateVector::from_amplitudes(vec![c(0.5); 4], 2).unwrap();
        assert_amps(&s, &[0.5; 4]);
        let s = StateVector::from_amplitudes(vec![c(1.0), c(0.0)], 1).unwrap();
        assert_amps(&s, &[1.0, 0.0]);

        assert!(matches!(
            StateVector::from_amplitudes(vec![c(1.0), c(1.0)], 1),
            Err(Error::Normalization { .. })
        ));
        assert!(matches!(
            StateVector::from_amplitudes(vec![c(1.0)], 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn amplitude_loading_renormalizes() {
        let s = StateVector::from_amplitudes(vec![c(1.0 + 5e-9), c(0.0)], 1).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correlated_fair_marginals() {
        // Oracle: sum |amp|^2 over the other index by hand.
        let a: f64 = 0.3;
        let coeffs = [
            (a / 2.0).sqrt(),
            ((1.0 - a) / 2.0).sqrt(),
            ((1.0 - a) / 2.0).sqrt(),
            (a / 2.0).sqrt(),
        ];
        let s = StateVector::from_amplitudes(coeffs.iter().map(|&x| c(x)).collect(), 2).unwrap();
        let first = coeffs[0].powi(2) + coeffs[1].powi(2);
        let second = coeffs[0].powi(2) + coeffs[2].powi(2);
        assert!((first - 0.5).abs() < 1e-12 && (second - 0.5).abs() < 1e-12);
        for q in 0..2 {
            let (p0, p1) = s.marginal(q).unwrap();
            assert!((p0 - 0.5).abs() < 1e-12 && (p1 - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn hadamard_and_cnot() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply(&Gate::Hadamard(0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_amps(&s, &[h, h]);

        let mut s = StateVector::from_amplitudes(vec![c(h), c(0.0), c(h), c(0.0)], 2).unwrap();
        s.apply(&Gate::ControlledNot {
            control: 0,
            target: 1,
        })
        .unwrap();
        assert_amps(&s, &[h, 0.0, 0.0, h]);
    }

    #[test]
    fn swap_turns_copies_into_cross_copies() {
        // sum_ij 1/2 |i i>_A |j j>_B  --SWAP(1,3)-->  sum_ij 1/2 |i j>_A |j i>_B
        let mut coeffs = vec![c(0.0); 16];
        for i in 0..2usize {
            for j in 0..2usize {
                coeffs[(i << 3) | (i << 2) | (j << 1) | j] = c(0.5);
            }
        }
        let mut s = StateVector::from_amplitudes(coeffs, 4).unwrap();
        s.apply(&Gate::Swap(1, 3)).unwrap();
        let mut expected = vec![0.0; 16];
        for i in 0..2usize {
            for j in 0..2usize {
                expected[(i << 3) | (j << 2) | (j << 1) | i] = 0.5;
            }
        }
        assert_amps(&s, &expected);
    }

    #[test]
    fn gate_validation() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(
            s.apply(&Gate::Hadamard(2)),
            Err(Error::QubitOutOfRange { qubit: 2, .. })
        ));
        assert!(matches!(
            s.apply(&Gate::Swap(1, 1)),
            Err(Error::DuplicateTargets(_))
        ));
        let bad = [[c(1.0), c(1.0)], [c(0.0), c(1.0)]];
        assert!(matches!(
            Gate::unitary(0, bad),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn measuring_an_eigenstate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = StateVector::zero(1).unwrap();
        let before = s.clone();
        let out = s.measure(0, &mut rng).unwrap();
        assert_eq!(out.bit, 0);
        assert_eq!(out.probability, 1.0);
        assert_eq!(s, before);
    }

    #[test]
    fn marginals_of_simple_states() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![c(h), c(0.0), c(0.0), c(h)], 2).unwrap();
        let (p0, p1) = bell.marginal(0).unwrap();
        assert!((p0 - 0.5).abs() < 1e-12 && (p1 - 0.5).abs() < 1e-12);
        assert_eq!(
            StateVector::zero(1).unwrap().marginal(0).unwrap(),
            (1.0, 0.0)
        );
        assert!(bell.marginal(2).is_err());
    }

    #[test]
    fn projection_rejects_impossible_branch() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(
            s.project(0, 1),
            Err(Error::ZeroProbabilityBranch { qubit: 0, bit: 1 })
        ));
    }

    #[test]
    fn embedding_places_register_bits() {
        // register [2, 0] on 3 qubits: coefficient index k = (q2, q0)
        let coeffs = [c(0.0), c(1.0), c(0.0), c(0.0)];
        let s = StateVector::embed_register(3, &[2, 0], &coeffs).unwrap();
        // k = 1 means q2 = 0, q0 = 1 -> index 0b100
        assert_eq!(s.amplitude(0b100), c(1.0));
    }

    #[test]
    fn permutation_relabels_qubits() {
        let s = StateVector::embed_register(3, &[0], &[c(0.0), c(1.0)]).unwrap();
        let p = s.permute_qubits(&[1, 2, 0]).unwrap();
        // old qubit 0 becomes new qubit 2
        assert_eq!(p.amplitude(0b001), c(1.0));
    }

    #[test]
    fn born_rule_frequencies() {
        let amps = vec![c(0.6f64.sqrt()), c(0.0), c(0.0), c(0.4f64.sqrt())];
        let base = StateVector::from_amplitudes(amps, 2).unwrap();
        let (_, p1) = base.marginal(1).unwrap();
        let trials = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut ones = 0u64;
        for _ in 0..trials {
            let mut s = base.clone();
            ones += s.measure(1, &mut rng).unwrap().bit as u64;
        }
        let freq = ones as f64 / trials as f64;
        let se = (p1 * (1.0 - p1) / trials as f64).sqrt();
        assert!((freq - p1).abs() <= 4.0 * se, "freq {freq} vs {p1}");
    }

    fn arb_state(n: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n)
            .prop_filter("nonzero", |v| {
                v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3)
            })
            .prop_map(move |v| {
                let amps: Vec<Complex64> =
                    v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
                let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect(), n)
                    .unwrap()
            })
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(Gate::Hadamard),
            q.clone().prop_map(Gate::PauliX),
            (q.clone(), q.clone())
                .prop_filter("distinct", |(a, b)| a != b)
                .prop_map(|(control, target)| Gate::ControlledNot { control, target }),
            (q.clone(), q.clone())
                .prop_filter("distinct", |(a, b)| a != b)
                .prop_map(|(a, b)| Gate::Swap(a, b)),
            (q, 0.0f64..6.3, 0.0f64..6.3, 0.0f64..6.3).prop_map(|(t, a, b, g)| Gate::unitary(
                t,
                u3(a, b, g)
            )
            .unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn norm_is_preserved(
            state in arb_state(4),
            gates in prop::collection::vec(arb_gate(4), 0..12),
            measured in prop::collection::vec(0usize..4, 0..3),
            seed in any::<u64>(),
        ) {
            let mut s = state;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for g in &gates {
                s.apply(g).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            }
            for q in measured {
                s.measure(q, &mut rng).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn gate_then_inverse_is_identity(state in arb_state(3), gate in arb_gate(3)) {
            let mut s = state.clone();
            s.apply(&gate).unwrap();
            s.apply(&gate.inverse()).unwrap();
            prop_assert!(s.max_distance(&state) < 1e-10);
        }

        #[test]
        fn collapse_is_idempotent(state in arb_state(3), q in 0usize..3, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = state;
            let first = s.measure(q, &mut rng).unwrap();
            prop_assert!(first.probability > 0.0);
            let (p0, p1) = s.marginal(q).unwrap();
            prop_assert_eq!(if first.bit == 0 { p0 } else { p1 }, 1.0);
            let second = s.measure(q, &mut rng).unwrap();
            prop_assert_eq!(first.bit, second.bit);
        }

        #[test]
        fn marginals_sum_to_one(state in arb_state(3), q in 0usize..3) {
            let (p0, p1) = state.marginal(q).unwrap();
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-10);
        }
    }
}
