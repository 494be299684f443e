//! End-to-end evaluation: packet in, product-formula evolution, read-out.
//!
//! Geometry for a tree with `N = 2^n` leaves, `s = √(N·max(1, ln N))`:
//! runway length `M = ⌈c_run·⌈s⌉⌉`, attach point `⌈M/2⌉`, evolution time
//! `t = c_t·s`, packet width `σ` from [`PacketWidth`], and the packet
//! centred `4σ + 1` sites left of the attach point. After evolving, the
//! mass right of the attach point is "transmitted", left of it
//! "reflected". Which of the two means `f = 1` is a calibrated polarity.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{NandError, Result};
use crate::formula::{build_schedule, plan_segments, FormulaEvolver, TrotterConstants, DEFAULT_SEGMENT_BUDGET};
use crate::gadget::QueryLedger;
use crate::graph::{Term, WalkSystem};
use crate::nand::{eval_exact, NandInstance};
use crate::state::{exact_evolve, prepare_wave_packet, region_probabilities, RegionProbabilities, SpectralCache, StateVec};

/// Norm bound `h = max(‖H_O‖, ‖H_D‖)` used for planning.
pub const NORM_BOUND: f64 = 3.0;

/// Smallest packet width.
pub const MIN_PACKET_WIDTH: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Transmission means the tree evaluates to 1.
    TransmittedIsOne,
    /// Reflection means the tree evaluates to 1.
    ReflectedIsOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketWidth {
    /// `σ = max(6, fraction·M)`.
    RunwayFraction(f64),
    /// Absolute width in sites.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub runway_const: f64,
    pub packet_width: PacketWidth,
    pub momentum: f64,
    pub order_index: u32,
    pub time_const: f64,
    pub eps_sim: f64,
    pub threshold: f64,
    pub polarity: Polarity,
}

#[derive(Deserialize)]
struct CalibrationFixture {
    config: RunConfig,
}

const WALK_FIXTURE: &str = include_str!("../fixtures/walk_calibration.json");

impl RunConfig {
    /// The checked-in calibration.
    pub fn calibrated() -> Self {
        let fixture: CalibrationFixture =
            serde_json::from_str(WALK_FIXTURE).expect("checked-in walk calibration parses");
        fixture.config
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.runway_const, self.time_const, self.eps_sim];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(NandError::InvalidArgument(
                "runway constant, time constant and eps_sim must be positive".into(),
            ));
        }
        if !(self.eps_sim < 1.0) {
            return Err(NandError::InvalidArgument("eps_sim must be below 1".into()));
        }
        if !(self.threshold > 0.5 && self.threshold < 1.0) {
            return Err(NandError::InvalidArgument(format!(
                "decision threshold must lie in (0.5, 1), got {}",
                self.threshold
            )));
        }
        match self.packet_width {
            PacketWidth::RunwayFraction(f) | PacketWidth::Fixed(f) if !(f > 0.0) => {
                return Err(NandError::InvalidArgument("packet width must be positive".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn geometry(&self, depth: u32) -> Result<Geometry> {
        self.validate()?;
        let (scale, runway_len, attach) = runway_layout(self.runway_const, depth);
        let sigma = match self.packet_width {
            PacketWidth::RunwayFraction(f) => MIN_PACKET_WIDTH.max(f * runway_len as f64),
            PacketWidth::Fixed(s) => s,
        };
        let center = attach as f64 - 1.0 - 4.0 * sigma;
        if center - 4.0 * sigma < 1.0 {
            return Err(NandError::InvalidArgument(format!(
                "runway of length {runway_len} cannot hold a packet of width {sigma:.2} left of the attach point"
            )));
        }
        Ok(Geometry {
            depth,
            scale,
            runway_len,
            attach,
            sigma,
            center,
            time: self.time_const * scale,
        })
    }
}

/// `(s, M, attach)` for a runway constant and depth.
pub fn runway_layout(runway_const: f64, depth: u32) -> (f64, usize, usize) {
    let n = (1u64 << depth) as f64;
    let scale = (n * n.ln().max(1.0)).sqrt();
    let runway_len = (runway_const * scale.ceil()).ceil() as usize;
    (scale, runway_len, runway_len.div_ceil(2))
}

/// Derived run geometry for one depth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Geometry {
    pub depth: u32,
    /// `√(N·max(1, ln N))`.
    pub scale: f64,
    pub runway_len: usize,
    pub attach: usize,
    pub sigma: f64,
    pub center: f64,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Zero,
    One,
    Inconclusive,
}

impl Decision {
    pub fn bit(self) -> Option<bool> {
        match self {
            Decision::Zero => Some(false),
            Decision::One => Some(true),
            Decision::Inconclusive => None,
        }
    }

    pub fn from_probabilities(p: &RegionProbabilities, threshold: f64, polarity: Polarity) -> Self {
        let transmitted = if p.transmitted >= threshold {
            Some(true)
        } else if p.reflected >= threshold {
            Some(false)
        } else {
            None
        };
        match (transmitted, polarity) {
            (None, _) => Decision::Inconclusive,
            (Some(tr), Polarity::TransmittedIsOne) => Self::from_bit(tr),
            (Some(tr), Polarity::ReflectedIsOne) => Self::from_bit(!tr),
        }
    }

    fn from_bit(b: bool) -> Self {
        if b {
            Decision::One
        } else {
            Decision::Zero
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Decision::Zero => s.serialize_u8(0),
            Decision::One => s.serialize_u8(1),
            Decision::Inconclusive => s.serialize_str("inconclusive"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub depth: u32,
    pub bits: String,
    pub decided_bit: Decision,
    pub transmitted_prob: f64,
    pub reflected_prob: f64,
    pub tree_region_prob: f64,
    #[serde(flatten)]
    pub queries: QueryLedger,
    pub segments: u64,
    pub time: f64,
    pub dim: usize,
    pub runway_len: usize,
    pub final_norm: f64,
    pub wall_time: f64,
    pub config: RunConfig,
}

impl RunResult {
    pub fn probabilities(&self) -> RegionProbabilities {
        RegionProbabilities {
            reflected: self.reflected_prob,
            transmitted: self.transmitted_prob,
            tree: self.tree_region_prob,
        }
    }
}

/// The discrete-query run: packet, product formula, read-out.
pub fn run_instance(instance: &NandInstance, config: &RunConfig) -> Result<RunResult> {
    run_instance_with_state(instance, config).map(|(result, _)| result)
}

/// [`run_instance`], also returning the final state.
pub fn run_instance_with_state(instance: &NandInstance, config: &RunConfig) -> Result<(RunResult, StateVec)> {
    let started = Instant::now();
    let geometry = config.geometry(instance.depth())?;
    let system = WalkSystem::build(instance, geometry.runway_len, geometry.attach)?;
    let evolver = FormulaEvolver::new(&system)?;
    let packet = prepare_wave_packet(&system, geometry.center, geometry.sigma, config.momentum)?;
    let segments = plan_segments(
        config.order_index,
        geometry.time,
        NORM_BOUND,
        config.eps_sim,
        &TrotterConstants::shipped(),
        DEFAULT_SEGMENT_BUDGET,
    )?;
    let schedule = build_schedule(config.order_index, geometry.time, segments)?;
    let mut ledger = QueryLedger::new();
    let out = evolver.evolve(&packet, &schedule, &mut ledger)?;
    let p = region_probabilities(&system, &out)?;
    let result = RunResult {
        depth: instance.depth(),
        bits: instance.bit_string(),
        decided_bit: Decision::from_probabilities(&p, config.threshold, config.polarity),
        transmitted_prob: p.transmitted,
        reflected_prob: p.reflected,
        tree_region_prob: p.tree,
        queries: ledger,
        segments,
        time: geometry.time,
        dim: system.dim(),
        runway_len: geometry.runway_len,
        final_norm: out.norm(),
        wall_time: started.elapsed().as_secs_f64(),
        config: config.clone(),
    };
    Ok((result, out))
}

/// Region probabilities after exact evolution, plus conservation checks.
#[derive(Clone, Debug, Serialize)]
pub struct ExactOutcome {
    pub probabilities: RegionProbabilities,
    pub energy_before: f64,
    pub energy_after: f64,
    pub final_norm: f64,
}

/// Same geometry as [`run_instance`] but with the dense reference
/// evolution. Query-free; used for calibration and cross-checks.
pub fn run_instance_exact(instance: &NandInstance, config: &RunConfig) -> Result<ExactOutcome> {
    let geometry = config.geometry(instance.depth())?;
    let system = WalkSystem::build(instance, geometry.runway_len, geometry.attach)?;
    let cache = SpectralCache::new(&system, Term::Total)?;
    exact_outcome(&system, &cache, &geometry, config.momentum)
}

fn exact_outcome(system: &WalkSystem, cache: &SpectralCache, geometry: &Geometry, momentum: f64) -> Result<ExactOutcome> {
    let packet = prepare_wave_packet(system, geometry.center, geometry.sigma, momentum)?;
    let out = exact_evolve(cache, &packet, geometry.time)?;
    Ok(ExactOutcome {
        probabilities: region_probabilities(system, &out)?,
        energy_before: packet.energy(system, Term::Total)?,
        energy_after: out.energy(system, Term::Total)?,
        final_norm: out.norm(),
    })
}

/// Grid searched by [`calibrate`]. Time constants are searched as ratios
/// to the runway constant, since the packet must clear the attach point
/// before it reaches the far end of the runway.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub runway_consts: Vec<f64>,
    pub width_fractions: Vec<f64>,
    pub time_ratios: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            runway_consts: vec![40.0, 60.0, 80.0],
            width_fractions: vec![1.0 / 24.0, 1.0 / 20.0, 1.0 / 18.0],
            time_ratios: vec![0.3, 0.35, 0.42, 0.5],
            thresholds: vec![0.55, 0.6, 0.65, 0.7, 0.75, 0.8],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationPlan {
    /// Depths ≤ 2 are enumerated exhaustively, deeper ones sampled.
    pub depths: Vec<u32>,
    pub trials_per_depth: usize,
    pub seed: u64,
    pub grid: CalibrationGrid,
    pub momentum: f64,
    pub order_index: u32,
    pub eps_sim: f64,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        Self {
            depths: vec![2, 3, 4],
            trials_per_depth: 24,
            seed: 2007,
            grid: CalibrationGrid::default(),
            momentum: -PI / 2.0,
            order_index: 2,
            eps_sim: 1e-2,
        }
    }
}

/// Accuracy floor on the exhaustive depth-2 set.
pub const CALIBRATION_ACCURACY_FLOOR: f64 = 0.9;

/// Smallest correct-side probability that counts as a robust margin.
pub const ROBUST_MARGIN: f64 = 0.7;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub generated_by: String,
    pub config: RunConfig,
    /// Accuracy per depth (exact evolution) for the chosen config.
    pub accuracy: BTreeMap<u32, f64>,
    pub overall_accuracy: f64,
    /// Smallest probability on the correct side over all instances.
    pub min_correct_prob: f64,
    /// True when every instance's dominant side matches the chosen polarity.
    pub polarity_consistent: bool,
    pub configs_evaluated: usize,
    pub instances: usize,
    pub plan: CalibrationPlan,
}

struct Candidate {
    config: RunConfig,
    accuracy: BTreeMap<u32, f64>,
    overall: f64,
    min_correct: f64,
    consistent: bool,
}

/// Calibration instances for `plan`: exhaustive at depth ≤ 2, sampled above.
pub fn calibration_instances(depths: &[u32], trials: usize, seed: u64) -> Result<Vec<NandInstance>> {
    let mut out = Vec::new();
    for &d in depths {
        if d <= 2 {
            out.extend(NandInstance::enumerate(d)?);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9e37_79b9));
            for _ in 0..trials {
                out.push(NandInstance::random(d, &mut rng)?);
            }
        }
    }
    Ok(out)
}

/// Grid search for a configuration that decides correctly.
///
/// Probabilities come from the exact reference evolution, so the search
/// is query-free; the product formula only perturbs them at the
/// `eps_sim` level. Candidates rank by overall accuracy, then by a robust
/// margin, then by shorter evolution time and runway.
pub fn calibrate(plan: &CalibrationPlan) -> Result<CalibrationReport> {
    let instances = calibration_instances(&plan.depths, plan.trials_per_depth, plan.seed)?;
    let truths: Vec<bool> = instances.iter().map(eval_exact).collect();
    let mut best: Option<Candidate> = None;
    let mut evaluated = 0;

    let widths = &plan.grid.width_fractions;
    let ratios = &plan.grid.time_ratios;
    for &runway_const in &plan.grid.runway_consts {
        let config_at = |wf: f64, ratio: f64| RunConfig {
            runway_const,
            packet_width: PacketWidth::RunwayFraction(wf),
            momentum: plan.momentum,
            order_index: plan.order_index,
            time_const: ratio * runway_const,
            eps_sim: plan.eps_sim,
            threshold: plan.grid.thresholds[0],
            polarity: Polarity::TransmittedIsOne,
        };
        // Per (width, ratio) slot: per-instance probabilities, or None when
        // the packet does not fit the runway at some depth.
        let mut table: Vec<Option<Vec<RegionProbabilities>>> = vec![Some(Vec::new()); widths.len() * ratios.len()];
        for instance in &instances {
            let (_, runway_len, attach) = runway_layout(runway_const, instance.depth());
            let system = WalkSystem::build(instance, runway_len, attach)?;
            let cache = SpectralCache::new(&system, Term::Total)?;
            for (wi, &wf) in widths.iter().enumerate() {
                for (ti, &ratio) in ratios.iter().enumerate() {
                    let slot = &mut table[wi * ratios.len() + ti];
                    let Some(probs) = slot.as_mut() else { continue };
                    match config_at(wf, ratio).geometry(instance.depth()) {
                        Ok(geometry) => {
                            probs.push(exact_outcome(&system, &cache, &geometry, plan.momentum)?.probabilities)
                        }
                        Err(_) => *slot = None,
                    }
                }
            }
        }

        for (wi, &wf) in widths.iter().enumerate() {
            for (ti, &ratio) in ratios.iter().enumerate() {
                let Some(probs) = &table[wi * ratios.len() + ti] else {
                    log::info!("calibrate: c_run={runway_const} width={wf:.4} does not fit the runway");
                    continue;
                };
                evaluated += 1;
                let candidate = score_candidate(plan, &instances, &truths, probs, config_at(wf, ratio));
                if best.as_ref().is_none_or(|b| better(&candidate, b)) {
                    best = Some(candidate);
                }
            }
        }
    }

    let best = best.ok_or_else(|| NandError::CalibrationFailed("empty calibration grid".into()))?;
    if let Some(&acc) = best.accuracy.get(&2) {
        if acc < CALIBRATION_ACCURACY_FLOOR {
            return Err(NandError::CalibrationFailed(format!(
                "best configuration reaches only {acc:.3} on exhaustive depth 2: {:?}",
                best.config
            )));
        }
    }
    Ok(CalibrationReport {
        generated_by: String::new(),
        config: best.config,
        accuracy: best.accuracy,
        overall_accuracy: best.overall,
        min_correct_prob: best.min_correct,
        polarity_consistent: best.consistent,
        configs_evaluated: evaluated,
        instances: instances.len(),
        plan: plan.clone(),
    })
}

fn score_candidate(
    plan: &CalibrationPlan,
    instances: &[NandInstance],
    truths: &[bool],
    probs: &[RegionProbabilities],
    mut config: RunConfig,
) -> Candidate {
    // Polarity: whichever mapping puts more mass on the correct side.
    let correct = |pol: Polarity| -> Vec<f64> {
        probs
            .iter()
            .zip(truths)
            .map(|(p, &f)| match (pol, f) {
                (Polarity::TransmittedIsOne, true) | (Polarity::ReflectedIsOne, false) => p.transmitted,
                _ => p.reflected,
            })
            .collect()
    };
    let forward = correct(Polarity::TransmittedIsOne);
    let backward = correct(Polarity::ReflectedIsOne);
    let (polarity, correct_probs) = if forward.iter().sum::<f64>() >= backward.iter().sum::<f64>() {
        (Polarity::TransmittedIsOne, forward)
    } else {
        (Polarity::ReflectedIsOne, backward)
    };
    let consistent = probs.iter().zip(truths).all(|(p, &f)| {
        let transmits = p.transmitted > p.reflected;
        transmits == (f == (polarity == Polarity::TransmittedIsOne))
    });
    let min_correct = correct_probs.iter().cloned().fold(f64::INFINITY, f64::min);

    let accuracy_at = |theta: f64| correct_probs.iter().filter(|&&p| p >= theta).count();
    let top = plan.grid.thresholds.iter().map(|&t| accuracy_at(t)).max().unwrap_or(0);
    let admissible: Vec<f64> = plan
        .grid
        .thresholds
        .iter()
        .cloned()
        .filter(|&t| accuracy_at(t) == top)
        .collect();
    let threshold = admissible
        .iter()
        .cloned()
        .filter(|&t| t <= min_correct - 0.05)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
        .unwrap_or_else(|| admissible.iter().cloned().fold(f64::INFINITY, f64::min));

    config.threshold = threshold;
    config.polarity = polarity;

    let mut accuracy = BTreeMap::new();
    for &d in &plan.depths {
        let idx: Vec<usize> = (0..instances.len()).filter(|&i| instances[i].depth() == d).collect();
        let hits = idx.iter().filter(|&&i| correct_probs[i] >= threshold).count();
        accuracy.insert(d, hits as f64 / idx.len().max(1) as f64);
    }
    Candidate {
        config,
        accuracy,
        overall: accuracy_at(threshold) as f64 / instances.len() as f64,
        min_correct,
        consistent,
    }
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    if a.overall != b.overall {
        return a.overall > b.overall;
    }
    let (ra, rb) = (a.min_correct >= ROBUST_MARGIN, b.min_correct >= ROBUST_MARGIN);
    if ra != rb {
        return ra;
    }
    if a.config.time_const != b.config.time_const {
        return a.config.time_const < b.config.time_const;
    }
    if a.config.runway_const != b.config.runway_const {
        return a.config.runway_const < b.config.runway_const;
    }
    a.min_correct > b.min_correct
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub depth: u32,
    pub leaves: u64,
    pub order_index: u32,
    pub time: f64,
    pub segments: u64,
    pub queries: u64,
    pub executed: bool,
    /// Whether the executed run decided correctly; `None` when skipped.
    pub correct: Option<bool>,
}

/// Query bill per `(depth, order)` from the planner alone, optionally
/// executing runs up to `execute_max_depth` on a seeded random instance.
pub fn sweep_scaling(
    depths: &[u32],
    config: &RunConfig,
    orders: &[u32],
    execute_max_depth: Option<u32>,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let constants = TrotterConstants::shipped();
    let mut rows = Vec::new();
    for &depth in depths {
        let leaves = 1u64 << depth;
        let n = leaves as f64;
        let time = config.time_const * (n * n.ln().max(1.0)).sqrt();
        for &k in orders {
            let segments = plan_segments(k, time, NORM_BOUND, config.eps_sim, &constants, DEFAULT_SEGMENT_BUDGET)?;
            let oracle_factors = build_schedule(k, time, 1)?.oracle_factors_per_segment() as u64;
            let mut row = SweepRow {
                depth,
                leaves,
                order_index: k,
                time,
                segments,
                queries: 2 * oracle_factors * segments,
                executed: false,
                correct: None,
            };
            if execute_max_depth.is_some_and(|cap| depth <= cap) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((depth as u64) << 8) ^ k as u64);
                let instance = NandInstance::random(depth, &mut rng)?;
                let cfg = RunConfig {
                    order_index: k,
                    ..config.clone()
                };
                match run_instance(&instance, &cfg) {
                    Ok(result) => {
                        debug_assert_eq!(result.queries.total(), row.queries);
                        row.executed = true;
                        row.correct = Some(result.decided_bit.bit() == Some(eval_exact(&instance)));
                    }
                    Err(e) if e.is_refusal() => log::info!("sweep: skipping execution at depth {depth}: {e}"),
                    Err(e) => return Err(e),
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}
