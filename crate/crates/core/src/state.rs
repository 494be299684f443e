//! State vectors, the dense spectral reference evolution, wave packets and
//! region read-out.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{NandError, Result};
use crate::graph::{dense_cap, Term, Vertex, WalkSystem};

/// Unit-norm tolerance for every public state operation.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Momentum of the default packet: group velocity +2 toward the tree and
/// energy `2 cos p = 0`.
pub const DEFAULT_MOMENTUM: f64 = -PI / 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVec {
    amps: Vec<Complex64>,
}

impl StateVec {
    /// Wraps amplitudes that are already normalized.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&amps);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(NandError::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(mut amps: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&amps);
        if norm == 0.0 || !norm.is_finite() {
            return Err(NandError::NotNormalized { norm });
        }
        for a in amps.iter_mut() {
            *a /= norm;
        }
        Ok(Self { amps })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amps)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVec) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &StateVec) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `⟨ψ|H|ψ⟩` for one of the walk operators.
    pub fn energy(&self, system: &WalkSystem, term: Term) -> Result<f64> {
        let h = system.apply(term, &self.amps)?;
        Ok(self.amps.iter().zip(&h).map(|(a, b)| (a.conj() * b).re).sum())
    }

    /// Wraps the result of a unitary step, renormalizing (and logging) only
    /// when the drift exceeds [`NORM_TOLERANCE`].
    pub(crate) fn from_unitary_output(mut amps: Vec<Complex64>, context: &str) -> Self {
        let norm = l2_norm(&amps);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            log::warn!("{context}: renormalizing state with norm drift {:e}", norm - 1.0);
            for a in amps.iter_mut() {
                *a /= norm;
            }
        }
        Self { amps }
    }

    /// JSON array of `[re, im]` pairs in flattening order.
    pub fn snapshot_json(&self) -> String {
        let pairs: Vec<[f64; 2]> = self.amps.iter().map(|a| [a.re, a.im]).collect();
        serde_json::to_string(&pairs).expect("snapshot serialization is infallible")
    }
}

fn l2_norm(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest accepted relative residual of a spectral decomposition.
pub const SPECTRAL_RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Eigendecomposition `H = V Λ Vᵀ` of a real-symmetric operator.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    source: String,
}

impl SpectralCache {
    /// Decomposes one of the walk operators; refused above the dense cap.
    pub fn new(system: &WalkSystem, term: Term) -> Result<Self> {
        let dense = system.dense(term)?;
        Self::from_symmetric(dense, format!("{term:?}"))
    }

    /// Decomposes `matrix` and spot-checks `‖(H − VΛVᵀ)x‖` on a fixed
    /// probe vector, refusing the result above [`SPECTRAL_RESIDUAL_TOLERANCE`].
    pub fn from_symmetric(matrix: DMatrix<f64>, source: impl Into<String>) -> Result<Self> {
        let probe = DVector::from_fn(matrix.nrows(), |i, _| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5);
        let hx = &matrix * &probe;
        let eig = SymmetricEigen::new(matrix);
        let cache = Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
            source: source.into(),
        };
        let coords = cache.vectors.tr_mul(&probe).component_mul(&cache.values);
        let residual = (&cache.vectors * coords - hx).norm() / probe.norm().max(f64::MIN_POSITIVE);
        if residual > SPECTRAL_RESIDUAL_TOLERANCE {
            return Err(NandError::InaccurateSpectrum {
                operator: cache.source,
                residual,
            });
        }
        Ok(cache)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Largest |eigenvalue|.
    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `V Λ Vᵀ`, for reconstruction checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }

    /// Phases `e^{-iλ_j t}`.
    pub fn phases(&self, t: f64) -> Vec<Complex64> {
        self.values
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * t))
            .collect()
    }

    /// `x ← V diag(phases) Vᵀ x` without allocating.
    pub(crate) fn apply_phases(&self, phases: &[Complex64], x: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim();
        let v = self.vectors.as_slice();
        // scratch = phases ⊙ Vᵀ x; columns of V are contiguous.
        for (j, s) in scratch.iter_mut().enumerate() {
            let col = &v[j * d..(j + 1) * d];
            let (mut re, mut im) = (0.0, 0.0);
            for (c, a) in col.iter().zip(x.iter()) {
                re += c * a.re;
                im += c * a.im;
            }
            *s = phases[j] * Complex64::new(re, im);
        }
        x.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for (j, s) in scratch.iter().enumerate() {
            let col = &v[j * d..(j + 1) * d];
            for (c, a) in col.iter().zip(x.iter_mut()) {
                a.re += c * s.re;
                a.im += c * s.im;
            }
        }
    }
}

/// Dense cap check for reference computations.
pub fn check_dense(dim: usize) -> Result<()> {
    let cap = dense_cap();
    if dim > cap {
        return Err(NandError::DenseCapExceeded { dim, cap });
    }
    Ok(())
}

/// `e^{-iHt}` applied through the spectral cache.
pub fn exact_evolve(cache: &SpectralCache, state: &StateVec, t: f64) -> Result<StateVec> {
    if cache.dim() != state.dim() {
        return Err(NandError::DimensionMismatch {
            expected: cache.dim(),
            got: state.dim(),
        });
    }
    check_dense(cache.dim())?;
    if t == 0.0 {
        return Ok(state.clone());
    }
    let mut amps = state.amps.clone();
    let mut scratch = vec![Complex64::new(0.0, 0.0); amps.len()];
    cache.apply_phases(&cache.phases(t), &mut amps, &mut scratch);
    Ok(StateVec::from_unitary_output(amps, "exact_evolve"))
}

/// Gaussian packet `∝ exp(-(j-c)²/4σ²) e^{ipj}` on runway positions
/// `c ± 4σ`, which must lie inside `[1, attach - 1]`.
pub fn prepare_wave_packet(system: &WalkSystem, center: f64, width: f64, momentum: f64) -> Result<StateVec> {
    if !(width > 0.0) || !center.is_finite() || !momentum.is_finite() {
        return Err(NandError::InvalidArgument(format!(
            "packet needs finite center/momentum and positive width (got c={center}, σ={width}, p={momentum})"
        )));
    }
    let lo = center - 4.0 * width;
    let hi = center + 4.0 * width;
    if lo < 1.0 || hi > (system.attach() as f64 - 1.0) {
        return Err(NandError::InvalidArgument(format!(
            "packet support [{lo:.2}, {hi:.2}] must lie within runway [1, {}] left of the attach point",
            system.attach() - 1
        )));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); system.dim()];
    let first = lo.ceil() as usize;
    let last = hi.floor() as usize;
    for j in first..=last {
        let x = j as f64 - center;
        let envelope = (-x * x / (4.0 * width * width)).exp();
        amps[system.index(Vertex::Runway(j))] = Complex64::from_polar(envelope, momentum * j as f64);
    }
    StateVec::normalized(amps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    /// Runway strictly before the attach point (reflected side).
    LeftOfAttach,
    /// Runway strictly after the attach point (transmitted side).
    RightOfAttach,
    /// The attach vertex, the tree and the aux vertices.
    Tree,
}

impl Region {
    pub fn of(system: &WalkSystem, index: usize) -> Region {
        match system.vertex(index) {
            Vertex::Runway(j) if j < system.attach() => Region::LeftOfAttach,
            Vertex::Runway(j) if j > system.attach() => Region::RightOfAttach,
            _ => Region::Tree,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionProbabilities {
    pub reflected: f64,
    pub transmitted: f64,
    pub tree: f64,
}

impl RegionProbabilities {
    pub fn total(&self) -> f64 {
        self.reflected + self.transmitted + self.tree
    }
}

pub fn region_probability(system: &WalkSystem, state: &StateVec, region: Region) -> Result<f64> {
    system.check_dim(state.dim())?;
    Ok(state
        .amps
        .iter()
        .enumerate()
        .filter(|(i, _)| Region::of(system, *i) == region)
        .map(|(_, a)| a.norm_sqr())
        .sum())
}

pub fn region_probabilities(system: &WalkSystem, state: &StateVec) -> Result<RegionProbabilities> {
    system.check_dim(state.dim())?;
    let mut p = RegionProbabilities {
        reflected: 0.0,
        transmitted: 0.0,
        tree: 0.0,
    };
    for (i, a) in state.amps.iter().enumerate() {
        let slot = match Region::of(system, i) {
            Region::LeftOfAttach => &mut p.reflected,
            Region::RightOfAttach => &mut p.transmitted,
            Region::Tree => &mut p.tree,
        };
        *slot += a.norm_sqr();
    }
    Ok(p)
}

/// Mean runway position `Σ j |ψ_j|²` over runway vertices, divided by the
/// runway mass.
pub fn runway_position(system: &WalkSystem, state: &StateVec) -> f64 {
    let (mut mass, mut moment) = (0.0, 0.0);
    for j in 1..=system.runway_len() {
        let p = state.amps[system.index(Vertex::Runway(j))].norm_sqr();
        mass += p;
        moment += p * j as f64;
    }
    moment / mass
}
