//! The two-query oracle gadget.
//!
//! `e^{-iH_O t}` is realized exactly from the bit-flip oracle
//! `U_O|k,a⟩ = |k, a ⊕ x_k⟩`: flip the ancilla with `U_O`, apply
//! `R(t) = [[cos t, i sin t], [i sin t, cos t]]` to the `b` register
//! controlled on the ancilla, and uncompute the ancilla with a second `U_O`.
//! Starting from `a = 0` the net map is
//! `|b,k,0⟩ ↦ cos(x_k t)|b,k,0⟩ + i sin(x_k t)|¬b,k,0⟩`.
//!
//! [`RegisterState`] is the literal circuit over `|b,k,a⟩`;
//! [`apply_oracle_exponential`] is the same map on the walk basis, where
//! `leaf(k) ↔ |0,k⟩` and `aux(k) ↔ |1,k⟩` and the ancilla is never
//! materialized.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NandError, Result};
use crate::graph::WalkSystem;
use crate::nand::NandInstance;
use crate::state::{SpectralCache, StateVec};

/// Tolerance for "ancilla is in |0⟩".
pub const ANCILLA_TOLERANCE: f64 = 1e-12;

/// Oracle calls per gadget invocation.
pub const QUERIES_PER_GADGET: u64 = 2;

/// Count of `U_O` invocations, with a per-phase breakdown.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    #[serde(rename = "queries_total")]
    total: u64,
    breakdown: BTreeMap<String, u64>,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn breakdown(&self) -> &BTreeMap<String, u64> {
        &self.breakdown
    }

    pub fn phase(&self, label: &str) -> u64 {
        self.breakdown.get(label).copied().unwrap_or(0)
    }

    /// Records `queries` oracle calls under `phase`.
    pub fn charge(&mut self, phase: &str, queries: u64) {
        self.total += queries;
        *self.breakdown.entry(phase.to_string()).or_insert(0) += queries;
    }
}

/// Phase label for bare `U_O` calls made outside a gadget.
pub const PHASE_BARE: &str = "bare";
/// Phase label for gadget invocations.
pub const PHASE_GADGET: &str = "gadget";

/// Amplitudes over `|b, k, a⟩`; index `(b << (n+1)) | (k << 1) | a`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegisterState {
    depth: u32,
    amps: Vec<Complex64>,
}

impl RegisterState {
    pub fn dim_for(depth: u32) -> usize {
        1 << (depth + 2)
    }

    pub fn index(depth: u32, b: bool, k: usize, a: bool) -> usize {
        ((b as usize) << (depth + 1)) | (k << 1) | a as usize
    }

    pub fn basis(depth: u32, b: bool, k: usize, a: bool) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); Self::dim_for(depth)];
        amps[Self::index(depth, b, k, a)] = Complex64::new(1.0, 0.0);
        Self { depth, amps }
    }

    pub fn from_amplitudes(depth: u32, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != Self::dim_for(depth) {
            return Err(NandError::DimensionMismatch {
                expected: Self::dim_for(depth),
                got: amps.len(),
            });
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > crate::state::NORM_TOLERANCE {
            return Err(NandError::NotNormalized { norm });
        }
        Ok(Self { depth, amps })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, b: bool, k: usize, a: bool) -> Complex64 {
        self.amps[Self::index(self.depth, b, k, a)]
    }

    /// Probability mass with the ancilla set.
    pub fn ancilla_mass(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & 1 == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    fn check_instance(&self, instance: &NandInstance) -> Result<()> {
        if instance.depth() != self.depth {
            return Err(NandError::DimensionMismatch {
                expected: Self::dim_for(instance.depth()),
                got: self.amps.len(),
            });
        }
        Ok(())
    }
}

/// The bit-flip oracle on the `(k, a)` registers. Costs one query.
pub fn apply_u_o(instance: &NandInstance, state: &RegisterState, ledger: &mut QueryLedger) -> Result<RegisterState> {
    let out = u_o(instance, state)?;
    ledger.charge(PHASE_BARE, 1);
    Ok(out)
}

fn u_o(instance: &NandInstance, state: &RegisterState) -> Result<RegisterState> {
    state.check_instance(instance)?;
    let mut amps = state.amps.clone();
    for (i, pair) in amps.chunks_exact_mut(2).enumerate() {
        let k = i & ((1 << state.depth) - 1);
        if instance.bit(k) {
            pair.swap(0, 1);
        }
    }
    Ok(RegisterState {
        depth: state.depth,
        amps,
    })
}

/// `R(t) = [[cos t, i sin t], [i sin t, cos t]]`.
pub fn rotation(t: f64) -> [[Complex64; 2]; 2] {
    let c = Complex64::new(t.cos(), 0.0);
    let s = Complex64::new(0.0, t.sin());
    [[c, s], [s, c]]
}

/// `R(t)` on the `b` register, controlled on `a = 1`. Query-free.
pub fn controlled_r(state: &RegisterState, t: f64) -> RegisterState {
    let r = rotation(t);
    let n = state.depth;
    let mut amps = state.amps.clone();
    for k in 0..(1usize << n) {
        let i0 = RegisterState::index(n, false, k, true);
        let i1 = RegisterState::index(n, true, k, true);
        let (x0, x1) = (state.amps[i0], state.amps[i1]);
        amps[i0] = r[0][0] * x0 + r[0][1] * x1;
        amps[i1] = r[1][0] * x0 + r[1][1] * x1;
    }
    RegisterState { depth: n, amps }
}

/// `U_O`, controlled-`R(t)`, `U_O`: exactly `e^{-iH_O t}` on `(b, k)` with
/// the ancilla returned to `|0⟩`. Costs two queries.
pub fn gadget_evolve(
    instance: &NandInstance,
    state: &RegisterState,
    t: f64,
    ledger: &mut QueryLedger,
) -> Result<RegisterState> {
    state.check_instance(instance)?;
    let mass = state.ancilla_mass();
    if mass > ANCILLA_TOLERANCE {
        return Err(NandError::AncillaNotClear { mass });
    }
    let flipped = u_o(instance, state)?;
    let rotated = controlled_r(&flipped, t);
    let out = u_o(instance, &rotated)?;
    ledger.charge(PHASE_GADGET, QUERIES_PER_GADGET);
    Ok(out)
}

/// `e^{-iH_O t}` on the walk basis: each occupied `(leaf, aux)` pair is
/// rotated by `R(t)`; everything else is untouched. Costs two queries
/// whatever the input, since the gadget probes the oracle regardless.
pub fn apply_oracle_exponential(
    system: &WalkSystem,
    state: &StateVec,
    t: f64,
    ledger: &mut QueryLedger,
    phase: &str,
) -> Result<StateVec> {
    system.check_dim(state.dim())?;
    let mut amps = state.amplitudes().to_vec();
    rotate_pairs(system, &mut amps, t);
    ledger.charge(phase, QUERIES_PER_GADGET);
    Ok(StateVec::from_unitary_output(amps, "apply_oracle_exponential"))
}

/// In-place pair rotation; the caller is responsible for charging.
pub(crate) fn rotate_pairs(system: &WalkSystem, amps: &mut [Complex64], t: f64) {
    let r = rotation(t);
    for p in system.h_o_pairs() {
        let (x0, x1) = (amps[p.leaf], amps[p.aux]);
        amps[p.leaf] = r[0][0] * x0 + r[0][1] * x1;
        amps[p.aux] = r[1][0] * x0 + r[1][1] * x1;
    }
}

/// Columns of the gadget unitary restricted to ancilla-zero inputs:
/// entry `[out][col]` with `col` ranging over `(b, k)` pairs in
/// `(b << n) | k` order and `out` over the full register basis.
pub fn gadget_block(instance: &NandInstance, t: f64, ledger: &mut QueryLedger) -> Result<Vec<Vec<Complex64>>> {
    let n = instance.depth();
    let half = 1usize << (n + 1);
    let mut columns = Vec::with_capacity(half);
    for col in 0..half {
        let b = col >> n == 1;
        let k = col & ((1 << n) - 1);
        let out = gadget_evolve(instance, &RegisterState::basis(n, b, k, false), t, ledger)?;
        columns.push(out.amps);
    }
    Ok(columns)
}

/// `H_O` on the `(b, k)` registers, index `(b << n) | k`.
pub fn register_oracle_hamiltonian(instance: &NandInstance) -> DMatrix<f64> {
    let n = instance.depth();
    let leaves = 1usize << n;
    let mut h = DMatrix::zeros(2 * leaves, 2 * leaves);
    for k in (0..leaves).filter(|&k| instance.bit(k)) {
        h[(k, leaves | k)] = -1.0;
        h[(leaves | k, k)] = -1.0;
    }
    h
}

#[derive(Clone, Debug, Serialize)]
pub struct GadgetReport {
    pub max_depth: u32,
    pub trials_per_depth: usize,
    /// Largest entry difference between the circuit block and `e^{-iH_O t}`.
    pub max_deviation: f64,
    pub max_ancilla_mass: f64,
    pub invocations: u64,
    pub queries: u64,
}

/// Compares the circuit against the spectral `e^{-iH_O t}` for random
/// inputs and times at every depth up to `max_depth`.
pub fn verify_gadget(max_depth: u32, trials: usize, seed: u64) -> Result<GadgetReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = QueryLedger::new();
    let mut report = GadgetReport {
        max_depth,
        trials_per_depth: trials,
        max_deviation: 0.0,
        max_ancilla_mass: 0.0,
        invocations: 0,
        queries: 0,
    };
    for depth in 0..=max_depth {
        let half = 1usize << (depth + 1);
        for _ in 0..trials {
            let instance = NandInstance::random(depth, &mut rng)?;
            let t = rng.gen_range(-2.0 * PI..2.0 * PI);
            let cache = SpectralCache::from_symmetric(register_oracle_hamiltonian(&instance), "register H_O")?;
            let phases = cache.phases(t);
            let columns = gadget_block(&instance, t, &mut ledger)?;
            report.invocations += half as u64;
            let mut scratch = vec![Complex64::new(0.0, 0.0); half];
            for (col, out) in columns.iter().enumerate() {
                let mut reference = vec![Complex64::new(0.0, 0.0); half];
                reference[col] = Complex64::new(1.0, 0.0);
                cache.apply_phases(&phases, &mut reference, &mut scratch);
                for (row, want) in reference.iter().enumerate() {
                    let b = row >> depth == 1;
                    let k = row & ((1 << depth) - 1);
                    let got = out[RegisterState::index(depth, b, k, false)];
                    report.max_deviation = report.max_deviation.max((got - want).norm());
                }
                let mass: f64 = out.iter().skip(1).step_by(2).map(|a| a.norm_sqr()).sum();
                report.max_ancilla_mass = report.max_ancilla_mass.max(mass);
            }
        }
    }
    report.queries = ledger.total();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Vertex;

    fn inst(depth: u32, bits: &str) -> NandInstance {
        NandInstance::from_bit_str(depth, bits).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn u_o_flips_only_marked_ancillas() {
        let x = inst(1, "01");
        let mut ledger = QueryLedger::new();
        let out = apply_u_o(&x, &RegisterState::basis(1, false, 1, false), &mut ledger).unwrap();
        assert_eq!(out, RegisterState::basis(1, false, 1, true));
        for b in [false, true] {
            for a in [false, true] {
                let s = RegisterState::basis(1, b, 0, a);
                assert_eq!(apply_u_o(&x, &s, &mut ledger).unwrap(), s);
            }
        }
        assert_eq!(ledger.total(), 5);
    }

    #[test]
    fn u_o_is_an_involution() {
        let x = inst(2, "1101");
        let amps: Vec<_> = (0..16).map(|i| c(i as f64, (i * i) as f64 * 0.1)).collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let s = RegisterState::from_amplitudes(2, amps.into_iter().map(|a| a / norm).collect()).unwrap();
        let mut ledger = QueryLedger::new();
        let once = apply_u_o(&x, &s, &mut ledger).unwrap();
        let twice = apply_u_o(&x, &once, &mut ledger).unwrap();
        assert_eq!(twice, s);
        assert_eq!(ledger.total(), 2);
    }

    #[test]
    fn controlled_r_cases() {
        let s = RegisterState::basis(1, false, 1, true);
        assert_eq!(controlled_r(&s, 0.0), s);
        let out = controlled_r(&s, std::f64::consts::FRAC_PI_2);
        assert!((out.amplitude(true, 1, true) - c(0.0, 1.0)).norm() < 1e-15);
        assert!(out.amplitude(false, 1, true).norm() < 1e-15);
        // a = 0 untouched
        let s0 = RegisterState::basis(1, true, 0, false);
        assert_eq!(controlled_r(&s0, 1.3), s0);
    }

    #[test]
    fn rotation_is_unitary() {
        for &t in &[0.0, 0.3, -2.1, 7.7, 1e3] {
            let r = rotation(t);
            for i in 0..2 {
                for j in 0..2 {
                    let dot: Complex64 = (0..2).map(|m| r[i][m] * r[j][m].conj()).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - c(want, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gadget_net_effect() {
        let x = inst(1, "10");
        let t = 0.7;
        let mut ledger = QueryLedger::new();
        let out = gadget_evolve(&x, &RegisterState::basis(1, false, 0, false), t, &mut ledger).unwrap();
        assert!((out.amplitude(false, 0, false) - c(t.cos(), 0.0)).norm() < 1e-15);
        assert!((out.amplitude(true, 0, false) - c(0.0, t.sin())).norm() < 1e-15);
        assert!(out.ancilla_mass() <= ANCILLA_TOLERANCE);
        let same = gadget_evolve(&x, &RegisterState::basis(1, true, 1, false), t, &mut ledger).unwrap();
        assert_eq!(same, RegisterState::basis(1, true, 1, false));
        assert_eq!(ledger.total(), 4);
        assert_eq!(ledger.phase(PHASE_GADGET), 4);
    }

    #[test]
    fn gadget_refuses_dirty_ancilla() {
        let x = inst(1, "10");
        let mut ledger = QueryLedger::new();
        let err = gadget_evolve(&x, &RegisterState::basis(1, false, 0, true), 0.1, &mut ledger);
        assert!(matches!(err, Err(NandError::AncillaNotClear { .. })));
        assert_eq!(ledger.total(), 0);
        assert!(gadget_evolve(&inst(2, "1111"), &RegisterState::basis(1, false, 0, false), 0.1, &mut ledger).is_err());
    }

    #[test]
    fn walk_exponential_charges_even_for_zero_input() {
        let x = inst(2, "0000");
        let s = WalkSystem::build(&x, 4, 2).unwrap();
        let psi = StateVec::basis(s.dim(), s.index(Vertex::Leaf(2)));
        let mut ledger = QueryLedger::new();
        let out = apply_oracle_exponential(&s, &psi, 1.234, &mut ledger, "probe").unwrap();
        assert_eq!(out, psi);
        assert_eq!(ledger.total(), 2);
        assert_eq!(ledger.phase("probe"), 2);
    }

    #[test]
    fn walk_exponential_composes_additively() {
        let x = inst(2, "1011");
        let s = WalkSystem::build(&x, 5, 3).unwrap();
        let psi = StateVec::normalized((0..s.dim()).map(|i| c(1.0 + i as f64, -(i as f64))).collect()).unwrap();
        let mut two_step = QueryLedger::new();
        let a = apply_oracle_exponential(&s, &psi, 0.4, &mut two_step, "x").unwrap();
        let a = apply_oracle_exponential(&s, &a, 1.1, &mut two_step, "x").unwrap();
        let mut one_step = QueryLedger::new();
        let b = apply_oracle_exponential(&s, &psi, 1.5, &mut one_step, "x").unwrap();
        assert!(a.distance(&b) < 1e-12);
        assert_eq!((two_step.total(), one_step.total()), (4, 2));
    }

    #[test]
    fn verification_report_is_exact() {
        let r = verify_gadget(2, 5, 9).unwrap();
        assert!(r.max_deviation <= 1e-12, "{r:?}");
        assert!(r.max_ancilla_mass <= 1e-24);
        assert_eq!(r.queries, 2 * r.invocations);
    }

    #[test]
    fn ledger_serializes_with_total_and_breakdown() {
        let mut l = QueryLedger::new();
        l.charge("evolution", 6);
        l.charge(PHASE_BARE, 1);
        assert_eq!(
            serde_json::to_string(&l).unwrap(),
            r#"{"queries_total":7,"breakdown":{"bare":1,"evolution":6}}"#
        );
    }
}
