//! Suzuki product formulas for the split `H = H_D + H_O`.
//!
//! `S_2(λ) = A(λ/2) B(λ) A(λ/2)` with `A = e^{-iH_D ·}` and
//! `B = e^{-iH_O ·}`, and for `k ≥ 2`
//! `S_{2k}(λ) = S_{2k-2}(p_k λ)² S_{2k-2}((1-4p_k) λ) S_{2k-2}(p_k λ)²`
//! with `p_k = 1/(4 - 4^{1/(2k-1)})`. A run is `r` segments of length
//! `λ = t/r`. Adjacent same-term factors are merged, including across
//! segment boundaries.
//!
//! For `k ≥ 2` the middle coefficient `1 - 4p_k` is negative; those
//! factors are simply exponentials with negated time.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NandError, Result};
use crate::gadget::{rotate_pairs, QueryLedger, QUERIES_PER_GADGET};
use crate::graph::{Term, WalkSystem};
use crate::nand::NandInstance;
use crate::state::{exact_evolve, SpectralCache, StateVec};

/// Largest supported order index (formula order 8).
pub const MAX_ORDER_INDEX: u32 = 4;

/// Default cap on planned segments.
pub const DEFAULT_SEGMENT_BUDGET: u64 = 1_000_000_000;

/// Ledger phase for oracle exponentials inside a formula run.
pub const PHASE_EVOLUTION: &str = "evolution";

/// One factor: which term, and its duration as a multiple of λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Factor {
    pub term: Term,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FormulaSchedule {
    order_index: u32,
    segment: Vec<Factor>,
    segments: u64,
    total_time: f64,
}

/// `p_k = 1/(4 - 4^{1/(2k-1)})`.
pub fn suzuki_coefficient(k: u32) -> f64 {
    1.0 / (4.0 - 4f64.powf(1.0 / (2.0 * k as f64 - 1.0)))
}

fn unmerged_segment(k: u32) -> Vec<Factor> {
    if k == 1 {
        return vec![
            Factor { term: Term::Driving, coefficient: 0.5 },
            Factor { term: Term::Oracle, coefficient: 1.0 },
            Factor { term: Term::Driving, coefficient: 0.5 },
        ];
    }
    let p = suzuki_coefficient(k);
    let inner = unmerged_segment(k - 1);
    [p, p, 1.0 - 4.0 * p, p, p]
        .iter()
        .flat_map(|&scale| {
            inner.iter().map(move |f| Factor {
                term: f.term,
                coefficient: f.coefficient * scale,
            })
        })
        .collect()
}

fn merge_adjacent(factors: Vec<Factor>) -> Vec<Factor> {
    let mut out: Vec<Factor> = Vec::with_capacity(factors.len());
    for f in factors {
        match out.last_mut() {
            Some(last) if last.term == f.term => last.coefficient += f.coefficient,
            _ => out.push(f),
        }
    }
    out
}

/// Builds the order-`2k` schedule for time `t` in `r` segments.
pub fn build_schedule(k: u32, t: f64, r: u64) -> Result<FormulaSchedule> {
    if k == 0 || k > MAX_ORDER_INDEX {
        return Err(NandError::InvalidArgument(format!(
            "order index must be in 1..={MAX_ORDER_INDEX}, got {k}"
        )));
    }
    if r == 0 {
        return Err(NandError::InvalidArgument("segment count must be positive".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(NandError::InvalidArgument(format!("evolution time must be finite and non-negative, got {t}")));
    }
    Ok(FormulaSchedule {
        order_index: k,
        segment: merge_adjacent(unmerged_segment(k)),
        segments: r,
        total_time: t,
    })
}

impl FormulaSchedule {
    pub fn order_index(&self) -> u32 {
        self.order_index
    }

    pub fn segments(&self) -> u64 {
        self.segments
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// Segment length `λ = t/r`.
    pub fn lambda(&self) -> f64 {
        self.total_time / self.segments as f64
    }

    /// Merged factors of a single segment, as multiples of λ.
    pub fn segment_factors(&self) -> &[Factor] {
        &self.segment
    }

    pub fn oracle_factors_per_segment(&self) -> usize {
        self.segment.iter().filter(|f| f.term == Term::Oracle).count()
    }

    /// Oracle calls a full run costs: two per B-factor.
    pub fn query_cost(&self) -> u64 {
        QUERIES_PER_GADGET * self.oracle_factors_per_segment() as u64 * self.segments
    }

    /// Every factor of the full run as `(term, duration)`, with the
    /// boundary factors of consecutive segments merged.
    pub fn factors(&self) -> impl Iterator<Item = (Term, f64)> + '_ {
        let lambda = self.lambda();
        let seg = &self.segment;
        let len = seg.len();
        let joins = len > 1 && seg[0].term == seg[len - 1].term;
        let r = self.segments;
        (0..r).flat_map(move |s| {
            (0..len).filter_map(move |i| {
                if joins && s > 0 && i == 0 {
                    return None;
                }
                let mut c = seg[i].coefficient;
                if joins && i == len - 1 && s + 1 < r {
                    c += seg[0].coefficient;
                }
                Some((seg[i].term, c * lambda))
            })
        })
    }
}

/// Empirical constants `c_k` of the error model
/// `err ≈ c_k · h·t · (hλ)^{2k}`, indexed by order index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterConstants {
    pub generated_by: String,
    pub safety_factor: f64,
    /// `constants[k - 1] = c_k`.
    pub constants: Vec<f64>,
}

const TROTTER_FIXTURE: &str = include_str!("../fixtures/trotter_constants.json");

impl TrotterConstants {
    /// The checked-in calibration.
    pub fn shipped() -> Self {
        serde_json::from_str(TROTTER_FIXTURE).expect("checked-in trotter fixture parses")
    }

    pub fn get(&self, k: u32) -> Result<f64> {
        self.constants
            .get(k.wrapping_sub(1) as usize)
            .copied()
            .ok_or_else(|| NandError::InvalidArgument(format!("no calibrated constant for order index {k}")))
    }
}

/// Unrounded segment estimate `(ht)^{1+1/2k} (c_k/ε)^{1/2k}`.
pub fn segment_estimate(k: u32, t: f64, h: f64, eps_sim: f64, constants: &TrotterConstants) -> Result<f64> {
    if !(t > 0.0) || !(h > 0.0) || !(eps_sim > 0.0 && eps_sim < 1.0) {
        return Err(NandError::InvalidArgument(format!(
            "planning needs t > 0, h > 0 and 0 < eps_sim < 1 (got t={t}, h={h}, eps_sim={eps_sim})"
        )));
    }
    let c = constants.get(k)?;
    let two_k = 2.0 * k as f64;
    Ok((h * t).powf(1.0 + 1.0 / two_k) * (c / eps_sim).powf(1.0 / two_k))
}

/// Segment count for target state error `eps_sim`.
pub fn plan_segments(
    k: u32,
    t: f64,
    h: f64,
    eps_sim: f64,
    constants: &TrotterConstants,
    budget: u64,
) -> Result<u64> {
    let estimate = segment_estimate(k, t, h, eps_sim, constants)?;
    let r = estimate.ceil().max(1.0);
    if r > budget as f64 {
        return Err(NandError::SegmentBudget {
            segments: r.min(u64::MAX as f64) as u64,
            budget,
        });
    }
    Ok(r as u64)
}

/// Executes schedules on one walk system. Holds the spectral cache of
/// `H_D` used for the A-factors.
pub struct FormulaEvolver<'a> {
    system: &'a WalkSystem,
    driving: SpectralCache,
}

impl<'a> FormulaEvolver<'a> {
    /// Refused above the dense cap: the A-factors need `H_D`'s spectrum.
    pub fn new(system: &'a WalkSystem) -> Result<Self> {
        let driving = SpectralCache::new(system, Term::Driving)?;
        Ok(Self { system, driving })
    }

    pub fn with_cache(system: &'a WalkSystem, driving: SpectralCache) -> Result<Self> {
        system.check_dim(driving.dim())?;
        Ok(Self { system, driving })
    }

    pub fn driving_cache(&self) -> &SpectralCache {
        &self.driving
    }

    /// Applies the factors left to right. B-factors go through the oracle
    /// gadget (two queries each); A-factors are query-free.
    pub fn evolve(&self, state: &StateVec, schedule: &FormulaSchedule, ledger: &mut QueryLedger) -> Result<StateVec> {
        self.system.check_dim(state.dim())?;
        let mut amps = state.amplitudes().to_vec();
        let mut scratch = vec![Complex64::new(0.0, 0.0); amps.len()];
        let mut phase_cache: HashMap<u64, Vec<Complex64>> = HashMap::new();
        let mut oracle_calls = 0u64;
        for (term, duration) in schedule.factors() {
            match term {
                Term::Driving if duration == 0.0 => {}
                Term::Driving => {
                    let phases = phase_cache
                        .entry(duration.to_bits())
                        .or_insert_with(|| self.driving.phases(duration));
                    self.driving.apply_phases(phases, &mut amps, &mut scratch);
                }
                Term::Oracle => {
                    rotate_pairs(self.system, &mut amps, duration);
                    oracle_calls += 1;
                }
                Term::Total => unreachable!("schedules only contain split terms"),
            }
        }
        ledger.charge(PHASE_EVOLUTION, QUERIES_PER_GADGET * oracle_calls);
        Ok(StateVec::from_unitary_output(amps, "evolve_with_formula"))
    }
}

/// One-shot convenience around [`FormulaEvolver`].
pub fn evolve_with_formula(
    system: &WalkSystem,
    state: &StateVec,
    schedule: &FormulaSchedule,
    ledger: &mut QueryLedger,
) -> Result<StateVec> {
    FormulaEvolver::new(system)?.evolve(state, schedule, ledger)
}

/// Formula-vs-exact comparison on one system; caches both spectra.
pub struct ErrorMeter<'a> {
    evolver: FormulaEvolver<'a>,
    total: SpectralCache,
}

impl<'a> ErrorMeter<'a> {
    pub fn new(system: &'a WalkSystem) -> Result<Self> {
        let evolver = FormulaEvolver::new(system)?;
        let total = SpectralCache::new(system, Term::Total)?;
        Ok(Self { evolver, total })
    }

    /// `‖formula(probe) − e^{-iHt} probe‖₂`.
    pub fn measure(&self, t: f64, k: u32, r: u64, probe: &StateVec) -> Result<f64> {
        let schedule = build_schedule(k, t, r)?;
        let mut scratch_ledger = QueryLedger::new();
        let approx = self.evolver.evolve(probe, &schedule, &mut scratch_ledger)?;
        let exact = exact_evolve(&self.total, probe, t)?;
        Ok(approx.distance(&exact))
    }
}

pub fn measure_error(system: &WalkSystem, t: f64, k: u32, r: u64, probe: &StateVec) -> Result<f64> {
    ErrorMeter::new(system)?.measure(t, k, r, probe)
}

/// Deterministic pseudo-random unit vector.
pub fn random_probe(dim: usize, seed: u64) -> StateVec {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..dim)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    StateVec::normalized(amps).expect("random probe is nonzero")
}

/// Round-off allowance per applied factor when fitting error constants.
pub const ROUND_OFF_PER_FACTOR: f64 = 1e-13;

/// Calibration systems: `(depth, runway length)`.
pub const CALIBRATION_SYSTEMS: [(u32, usize); 2] = [(2, 16), (3, 32)];

/// Fits `c_k` for `k = 1..=max_k` as `safety · max err / (h t (hλ)^{2k})`
/// over error ladders on the calibration systems.
///
/// Points with `λ > 2` (far outside the asymptotic regime) or error below the round-off
/// floor are skipped. Round-off accumulates with every factor applied, so
/// the floor is `ROUND_OFF_PER_FACTOR` times the factor count, and never
/// below `1e-11`.
pub fn calibrate_trotter_constants(max_k: u32, safety_factor: f64, seed: u64, h: f64) -> Result<TrotterConstants> {
    const TIMES: [f64; 2] = [1.0, 4.0];
    const LADDER: [u64; 7] = [2, 4, 8, 16, 32, 64, 128];
    const INSTANCES_PER_SYSTEM: u64 = 3;

    let mut worst = vec![0.0_f64; max_k as usize];
    for &(depth, runway) in CALIBRATION_SYSTEMS.iter() {
        for i in 0..INSTANCES_PER_SYSTEM {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((depth as u64) << 32) ^ i);
            let instance = NandInstance::random(depth, &mut rng)?;
            let system = WalkSystem::build(&instance, runway, runway / 2)?;
            let meter = ErrorMeter::new(&system)?;
            let probe = random_probe(system.dim(), seed.wrapping_add(i));
            for k in 1..=max_k {
                for &t in &TIMES {
                    for &r in &LADDER {
                        let lambda = t / r as f64;
                        if lambda > 2.0 {
                            continue;
                        }
                        let err = meter.measure(t, k, r, &probe)?;
                        let factors = build_schedule(k, t, r)?.factors().count() as f64;
                        if err < (ROUND_OFF_PER_FACTOR * factors).max(1e-11) {
                            continue;
                        }
                        let ratio = err / (h * t * (h * lambda).powi(2 * k as i32));
                        let slot = &mut worst[k as usize - 1];
                        *slot = slot.max(ratio);
                    }
                }
            }
        }
    }
    if let Some(k) = worst.iter().position(|&c| c == 0.0) {
        return Err(NandError::CalibrationFailed(format!(
            "no usable error points for order index {}",
            k + 1
        )));
    }
    Ok(TrotterConstants {
        generated_by: format!("nandwalk calibrate --trotter --max-order {max_k} --seed {seed}"),
        safety_factor,
        constants: worst.into_iter().map(|c| c * safety_factor).collect(),
    })
}
