//! Array geometry, steering vectors, grid dictionaries and single-snapshot
//! synthesis for arrays split into mutually non-coherent sub-arrays.
//!
//! Element positions are stored in wavelengths, so the phase of element
//! `(x, y)` for a plane wave from `theta` (boresight = 0) is
//! `2π (x sinθ + y cosθ)`.

mod config;

pub use config::{GeometryConfig, NoiseConfig, PhasesConfig, ScenarioConfig, SourcesConfig};

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Gain pattern of a single element, evaluated at an angle in degrees.
#[derive(Clone, Default)]
pub enum ElementPattern {
    /// `g(θ) = 1`.
    #[default]
    Omnidirectional,
    /// `g(θ) = cos(θ)^p`.
    CosinePower(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ElementPattern {
    pub fn gain(&self, theta_deg: f64) -> f64 {
        match self {
            ElementPattern::Omnidirectional => 1.0,
            ElementPattern::CosinePower(p) => theta_deg.to_radians().cos().powf(*p),
            ElementPattern::Custom(f) => f(theta_deg),
        }
    }

    /// Structural equality; custom patterns match only if they share the closure.
    pub fn same_as(&self, other: &ElementPattern) -> bool {
        match (self, other) {
            (ElementPattern::Omnidirectional, ElementPattern::Omnidirectional) => true,
            (ElementPattern::CosinePower(a), ElementPattern::CosinePower(b)) => a == b,
            (ElementPattern::Custom(a), ElementPattern::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Debug for ElementPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementPattern::Omnidirectional => write!(f, "Omnidirectional"),
            ElementPattern::CosinePower(p) => write!(f, "CosinePower({p})"),
            ElementPattern::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Element positions (in wavelengths), element patterns and the partition of
/// the elements into contiguous coherent sub-arrays.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    positions: Vec<(f64, f64)>,
    patterns: Vec<ElementPattern>,
    partition: Vec<Range<usize>>,
}

impl ArrayGeometry {
    /// Builds a geometry from explicit positions, patterns and sub-array sizes.
    pub fn new(
        positions: Vec<(f64, f64)>,
        patterns: Vec<ElementPattern>,
        partition_sizes: &[usize],
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::config("elements", "array must contain at least one element"));
        }
        if patterns.len() != positions.len() {
            return Err(Error::config(
                "patterns",
                format!("{} patterns for {} elements", patterns.len(), positions.len()),
            ));
        }
        if positions.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::config("elements", "positions must be finite"));
        }
        let partition = partition_from_sizes(partition_sizes, positions.len())?;
        Ok(Self {
            positions,
            patterns,
            partition,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.positions.len()
    }

    pub fn num_subarrays(&self) -> usize {
        self.partition.len()
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn patterns(&self) -> &[ElementPattern] {
        &self.patterns
    }

    pub fn partition(&self) -> &[Range<usize>] {
        &self.partition
    }

    pub fn subarray_sizes(&self) -> Vec<usize> {
        self.partition.iter().map(|r| r.len()).collect()
    }

    /// Element index range of sub-array `ell`.
    pub fn subarray(&self, ell: usize) -> Result<Range<usize>> {
        self.partition
            .get(ell)
            .cloned()
            .ok_or(Error::SubarrayIndex {
                index: ell,
                count: self.partition.len(),
            })
    }

    /// Response of sub-array `ell` to a unit plane wave from `theta_deg`.
    pub fn steering_vector(&self, ell: usize, theta_deg: f64) -> Result<DVector<Complex64>> {
        let range = self.subarray(ell)?;
        check_angle(theta_deg, "theta")?;
        Ok(self.response(range, theta_deg))
    }

    /// Response of the whole array (all sub-arrays stacked in partition order).
    pub fn full_steering_vector(&self, theta_deg: f64) -> Result<DVector<Complex64>> {
        check_angle(theta_deg, "theta")?;
        Ok(self.response(0..self.num_elements(), theta_deg))
    }

    fn response(&self, range: Range<usize>, theta_deg: f64) -> DVector<Complex64> {
        let (sin, cos) = theta_deg.to_radians().sin_cos();
        DVector::from_iterator(
            range.len(),
            range.map(|i| {
                let (x, y) = self.positions[i];
                let phase = 2.0 * PI * (x * sin + y * cos);
                Complex64::from_polar(self.patterns[i].gain(theta_deg), phase)
            }),
        )
    }
}

fn partition_from_sizes(sizes: &[usize], total: usize) -> Result<Vec<Range<usize>>> {
    if sizes.is_empty() {
        return Err(Error::config("partition", "at least one sub-array is required"));
    }
    if sizes.contains(&0) {
        return Err(Error::config("partition", "sub-array sizes must be at least 1"));
    }
    let sum: usize = sizes.iter().sum();
    if sum != total {
        return Err(Error::config(
            "partition",
            format!("sub-array sizes sum to {sum} but the array has {total} elements"),
        ));
    }
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&m| {
            let r = start..start + m;
            start += m;
            r
        })
        .collect())
}

fn check_angle(theta_deg: f64, field: &str) -> Result<()> {
    if theta_deg.is_finite() && theta_deg > -90.0 && theta_deg < 90.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("angle {theta_deg} outside (-90, 90) degrees")))
    }
}

/// Uniform linear array along x, centred on the origin, omnidirectional elements.
pub fn make_ula(
    num_elements: usize,
    spacing_wavelengths: f64,
    partition_sizes: &[usize],
) -> Result<ArrayGeometry> {
    if !(spacing_wavelengths > 0.0 && spacing_wavelengths.is_finite()) {
        return Err(Error::config("spacing_wavelengths", "spacing must be positive"));
    }
    let centre = (num_elements as f64 - 1.0) / 2.0;
    let positions = (0..num_elements)
        .map(|i| ((i as f64 - centre) * spacing_wavelengths, 0.0))
        .collect();
    ArrayGeometry::new(
        positions,
        vec![ElementPattern::Omnidirectional; num_elements],
        partition_sizes,
    )
}

/// Angles `start, start + step, ..., stop` (inclusive when `stop` lands on the lattice).
pub fn uniform_grid(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg > 0.0) || !start_deg.is_finite() || !stop_deg.is_finite() {
        return Err(Error::config("grid", "step must be positive and bounds finite"));
    }
    if stop_deg < start_deg {
        return Err(Error::config("grid", "stop must not be below start"));
    }
    let count = ((stop_deg - start_deg) / step_deg + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start_deg + i as f64 * step_deg).collect())
}

/// Default dictionary grid: -60° to 60° in 0.5° steps (241 points).
pub fn default_grid() -> Vec<f64> {
    uniform_grid(-60.0, 60.0, 0.5).expect("static grid parameters are valid")
}

/// How the per-sub-array phase offsets are chosen when synthesizing data.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseMode {
    /// Independent draws, uniform over `[0, 2π)`.
    RandomUniform,
    /// Fixed offsets in radians, one per sub-array.
    Fixed(Vec<f64>),
}

/// Array, sources and noise level for synthetic experiments.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub source_doas: Vec<f64>,
    pub source_powers: Vec<f64>,
    /// Per-source SNR in dB relative to unit source power; `+inf` is noiseless.
    pub snr_db: f64,
    pub phase_mode: PhaseMode,
}

impl Scenario {
    /// Equal unit-power sources with random phases.
    pub fn new(geometry: ArrayGeometry, source_doas: Vec<f64>, snr_db: f64) -> Result<Self> {
        let q = source_doas.len();
        let s = Self {
            geometry,
            source_doas,
            source_powers: vec![1.0; q],
            snr_db,
            phase_mode: PhaseMode::RandomUniform,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_phase_mode(mut self, mode: PhaseMode) -> Result<Self> {
        self.phase_mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn num_sources(&self) -> usize {
        self.source_doas.len()
    }

    /// Per-element noise variance `σ² = 10^(-SNR/10)` (unit reference power).
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_doas.is_empty() {
            return Err(Error::config("sources.doas_deg", "at least one source is required"));
        }
        for &d in &self.source_doas {
            check_angle(d, "sources.doas_deg")?;
        }
        if self.source_powers.len() != self.source_doas.len() {
            return Err(Error::config(
                "sources.powers",
                format!(
                    "{} powers for {} sources",
                    self.source_powers.len(),
                    self.source_doas.len()
                ),
            ));
        }
        if self.source_powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::config("sources.powers", "powers must be positive and finite"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config("noise.snr_db", "SNR must be a number (use inf for noiseless)"));
        }
        if let PhaseMode::Fixed(phases) = &self.phase_mode {
            if phases.len() != self.geometry.num_subarrays() {
                return Err(Error::config(
                    "phases.values_rad",
                    format!(
                        "{} phases for {} sub-arrays",
                        phases.len(),
                        self.geometry.num_subarrays()
                    ),
                ));
            }
            if phases.iter().any(|p| !p.is_finite()) {
                return Err(Error::config("phases.values_rad", "phases must be finite"));
            }
        }
        Ok(())
    }
}

/// Values drawn for one synthetic snapshot, kept for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotTruth {
    pub amplitudes: Vec<Complex64>,
    pub phases: Vec<f64>,
    pub doas: Vec<f64>,
}

/// One simultaneous sample of every sub-array.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub observations: Vec<DVector<Complex64>>,
    pub truth: Option<SnapshotTruth>,
}

impl Snapshot {
    /// Wraps raw observations after checking them against the partition.
    pub fn from_observations(
        geometry: &ArrayGeometry,
        observations: Vec<DVector<Complex64>>,
    ) -> Result<Self> {
        let sizes = geometry.subarray_sizes();
        if observations.len() != sizes.len() {
            return Err(Error::Dimension(format!(
                "{} observation vectors for {} sub-arrays",
                observations.len(),
                sizes.len()
            )));
        }
        for (ell, (x, &m)) in observations.iter().zip(&sizes).enumerate() {
            if x.len() != m {
                return Err(Error::Dimension(format!(
                    "sub-array {ell}: observation length {} but {m} elements",
                    x.len()
                )));
            }
        }
        Ok(Self {
            observations,
            truth: None,
        })
    }

    pub fn num_subarrays(&self) -> usize {
        self.observations.len()
    }

    /// All observations concatenated in partition order.
    pub fn stacked(&self) -> DVector<Complex64> {
        let total = self.observations.iter().map(|x| x.len()).sum();
        DVector::from_iterator(total, self.observations.iter().flat_map(|x| x.iter().copied()))
    }

    /// Multiplies every observation by the same complex factor.
    pub fn scaled(&self, factor: Complex64) -> Snapshot {
        Snapshot {
            observations: self.observations.iter().map(|x| x * factor).collect(),
            truth: self.truth.clone(),
        }
    }
}

/// Steering vectors of every sub-array evaluated on a DOA grid.
#[derive(Debug, Clone)]
pub struct GridManifold {
    pub grid_degrees: Vec<f64>,
    pub per_subarray: Vec<DMatrix<Complex64>>,
    pub stacked: DMatrix<Complex64>,
}

impl GridManifold {
    pub fn grid_len(&self) -> usize {
        self.grid_degrees.len()
    }

    pub fn num_subarrays(&self) -> usize {
        self.per_subarray.len()
    }

    /// Index of the grid point closest to `theta_deg`.
    pub fn nearest_index(&self, theta_deg: f64) -> usize {
        self.grid_degrees
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - theta_deg).abs().total_cmp(&(b.1 - theta_deg).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Reorders the sub-array blocks; `order[k]` is the source block for block `k`.
    pub fn permuted(&self, order: &[usize]) -> GridManifold {
        let per_subarray: Vec<_> = order.iter().map(|&k| self.per_subarray[k].clone()).collect();
        GridManifold {
            grid_degrees: self.grid_degrees.clone(),
            stacked: stack_rows(&per_subarray),
            per_subarray,
        }
    }
}

/// Builds the per-sub-array dictionaries `A_ℓ` and their row-stack `A`.
pub fn build_grid_manifold(geometry: &ArrayGeometry, grid_degrees: &[f64]) -> Result<GridManifold> {
    if grid_degrees.is_empty() {
        return Err(Error::config("grid", "grid must contain at least one angle"));
    }
    for &g in grid_degrees {
        check_angle(g, "grid")?;
    }
    if grid_degrees.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("grid", "grid must be strictly increasing"));
    }
    let per_subarray: Vec<DMatrix<Complex64>> = geometry
        .partition()
        .iter()
        .map(|range| {
            let cols: Vec<_> = grid_degrees
                .iter()
                .map(|&theta| geometry.response(range.clone(), theta))
                .collect();
            DMatrix::from_columns(&cols)
        })
        .collect();
    Ok(GridManifold {
        grid_degrees: grid_degrees.to_vec(),
        stacked: stack_rows(&per_subarray),
        per_subarray,
    })
}

fn stack_rows(blocks: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.rows_mut(r0, b.nrows()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Circular complex Gaussian sample with `E|z|² = variance`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Noise-free coherent response `Ã_ℓ s̃` of each sub-array.
pub fn coherent_response(
    geometry: &ArrayGeometry,
    doas: &[f64],
    amplitudes: &[Complex64],
) -> Result<Vec<DVector<Complex64>>> {
    if doas.len() != amplitudes.len() {
        return Err(Error::Dimension(format!(
            "{} amplitudes for {} sources",
            amplitudes.len(),
            doas.len()
        )));
    }
    (0..geometry.num_subarrays())
        .map(|ell| {
            let m = geometry.partition()[ell].len();
            let mut x = DVector::zeros(m);
            for (&theta, &s) in doas.iter().zip(amplitudes) {
                x += geometry.steering_vector(ell, theta)? * s;
            }
            Ok(x)
        })
        .collect()
}

/// Assembles `x_ℓ = e^{-jφ_ℓ} Ã_ℓ s̃ + n_ℓ` from explicit components.
pub fn observe(
    geometry: &ArrayGeometry,
    doas: &[f64],
    amplitudes: &[Complex64],
    phases: &[f64],
    noise: &[DVector<Complex64>],
) -> Result<Snapshot> {
    let coherent = coherent_response(geometry, doas, amplitudes)?;
    if phases.len() != coherent.len() || noise.len() != coherent.len() {
        return Err(Error::Dimension(format!(
            "{} phases and {} noise blocks for {} sub-arrays",
            phases.len(),
            noise.len(),
            coherent.len()
        )));
    }
    let observations = coherent
        .into_iter()
        .zip(phases)
        .zip(noise)
        .map(|((c, &phi), n)| c * Complex64::from_polar(1.0, -phi) + n)
        .collect();
    let mut snap = Snapshot::from_observations(geometry, observations)?;
    snap.truth = Some(SnapshotTruth {
        amplitudes: amplitudes.to_vec(),
        phases: phases.to_vec(),
        doas: doas.to_vec(),
    });
    Ok(snap)
}

// Independent ChaCha streams so that each component can be redrawn alone.
const STREAM_AMPLITUDES: u64 = 1;
const STREAM_PHASES: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn component_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws source amplitudes `s̃_q ~ CN(0, p_q)`.
pub fn draw_amplitudes(scenario: &Scenario, seed: u64) -> Vec<Complex64> {
    let mut rng = component_rng(seed, STREAM_AMPLITUDES);
    scenario
        .source_powers
        .iter()
        .map(|&p| complex_gaussian(&mut rng, p))
        .collect()
}

/// Sub-array phase offsets according to the scenario's phase mode.
pub fn draw_phases(scenario: &Scenario, seed: u64) -> Vec<f64> {
    match &scenario.phase_mode {
        PhaseMode::Fixed(p) => p.clone(),
        PhaseMode::RandomUniform => {
            let mut rng = component_rng(seed, STREAM_PHASES);
            (0..scenario.geometry.num_subarrays())
                .map(|_| rng.random_range(0.0..2.0 * PI))
                .collect()
        }
    }
}

/// Per-element noise `n_ℓ ~ CN(0, σ² I)`.
pub fn draw_noise(scenario: &Scenario, seed: u64) -> Vec<DVector<Complex64>> {
    let variance = scenario.noise_variance();
    let mut rng = component_rng(seed, STREAM_NOISE);
    scenario
        .geometry
        .partition()
        .iter()
        .map(|r| {
            if variance == 0.0 {
                DVector::zeros(r.len())
            } else {
                DVector::from_iterator(r.len(), (0..r.len()).map(|_| complex_gaussian(&mut rng, variance)))
            }
        })
        .collect()
}

/// Synthesizes one snapshot; identical `(scenario, seed)` pairs give identical output.
pub fn generate_snapshot(scenario: &Scenario, seed: u64) -> Result<Snapshot> {
    scenario.validate()?;
    let amplitudes = draw_amplitudes(scenario, seed);
    let phases = draw_phases(scenario, seed);
    let noise = draw_noise(scenario, seed);
    observe(&scenario.geometry, &scenario.source_doas, &amplitudes, &phases, &noise)
}
