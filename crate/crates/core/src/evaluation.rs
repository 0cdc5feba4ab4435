//! Monte-Carlo evaluation of configured links: per-position rates, the
//! clamped and decomposed spatial secrecy estimators, power sweeps and
//! rate/gain maps over the placement areas.
//!
//! Every trial and every area draws from its own RNG substream, so results
//! do not depend on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    link_statistics, sample_bs_ris, sample_rician, BsRisMatrix, ChannelVector, PathlossModel,
    RicianModel, RngStream,
};
use crate::error::{Error, Result};
use crate::geometry::{PlanarArea, Position3D, UpaGeometry};
use crate::optimizer::{
    alternating_optimize, random_config, rx_only_optimize, AoConfig, AoTrace, PhaseProfile,
    Precoder, SystemMatrices,
};
use crate::spatial::{compute_correlation, CorrelationMatrix, QuadratureGrid};
use crate::{CMatrix, CVector};

// substream purposes
const TAG_BS_RIS: u64 = 1;
const TAG_RANDOM_CONFIG: u64 = 2;
const TAG_FADING: u64 = 3;
const TAG_SECRECY: u64 = 4;
const TAG_DECOMPOSED_RX: u64 = 5;
const TAG_DECOMPOSED_EVE: u64 = 6;

const AREA_RX: u64 = 0;
const AREA_EVE: u64 = 1;

/// Beamforming scheme under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Maximizes the area-averaged secrecy objective.
    Proposed,
    /// Maximizes the receiver's area-averaged rate only.
    RxOnly,
    /// Random precoder and phases.
    Random,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Proposed, SchemeKind::RxOnly, SchemeKind::Random];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Proposed => "proposed",
            SchemeKind::RxOnly => "rx_only",
            SchemeKind::Random => "random",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "proposed" => Ok(SchemeKind::Proposed),
            "rx_only" | "rxonly" => Ok(SchemeKind::RxOnly),
            "random" => Ok(SchemeKind::Random),
            other => Err(Error::config(
                "scheme",
                format!("unknown scheme `{other}` (expected proposed, rx_only or random)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_trials: usize,
    pub base_seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            base_seed: 0,
        }
    }
}

/// How the "maximum achievable rate" of an area is reduced over trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxRateReading {
    /// Per trial, the best cell; then averaged over trials.
    #[default]
    PerTrialMax,
    /// Per cell, the trial average; then the best cell.
    MaxOfTrialMean,
}

/// Physical deployment: node positions, arrays, areas and propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub p_bs: Position3D,
    pub p_ris: Position3D,
    pub bs_geom: UpaGeometry,
    pub ris_geom: UpaGeometry,
    pub rx_area: PlanarArea,
    pub eve_area: PlanarArea,
    /// RIS to RX/Eve links.
    pub link_pathloss: PathlossModel,
    pub link_rician: RicianModel,
    /// BS to RIS link.
    pub bs_ris_pathloss: PathlossModel,
    pub bs_ris_rician: RicianModel,
    /// σ² in Watts.
    pub noise_power: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.bs_geom.validate()?;
        self.ris_geom.validate()?;
        self.rx_area.validate()?;
        self.eve_area.validate()?;
        ensure_disjoint(&self.rx_area, &self.eve_area)?;
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Domain("noise power must be positive".into()));
        }
        if !(self.p_bs.is_finite() && self.p_ris.is_finite()) {
            return Err(Error::Domain("node positions must be finite".into()));
        }
        Ok(())
    }

    pub fn area(&self, which: u64) -> &PlanarArea {
        if which == AREA_RX {
            &self.rx_area
        } else {
            &self.eve_area
        }
    }

    /// `(J_RX, J_E)` integrated on `grid`.
    pub fn correlations(
        &self,
        grid: &QuadratureGrid,
    ) -> Result<(CorrelationMatrix, CorrelationMatrix)> {
        let j = |area: &PlanarArea| {
            compute_correlation(
                area,
                grid,
                &self.p_ris,
                &self.ris_geom,
                &self.link_pathloss,
                &self.link_rician,
            )
        };
        Ok((j(&self.rx_area)?, j(&self.eve_area)?))
    }

    pub fn draw_bs_ris(&self, rng: &mut RngStream) -> Result<BsRisMatrix> {
        sample_bs_ris(
            &self.bs_geom,
            &self.ris_geom,
            &self.p_bs,
            &self.p_ris,
            &self.bs_ris_pathloss,
            &self.bs_ris_rician,
            rng,
        )
    }

    /// BS-RIS realization used by trial `trial` of a run seeded with `seed`.
    pub fn trial_bs_ris(&self, seed: u64, trial: usize) -> Result<BsRisMatrix> {
        self.draw_bs_ris(&mut RngStream::substream(seed, &[TAG_BS_RIS, trial as u64]))
    }

    pub fn system(
        &self,
        h: BsRisMatrix,
        j_rx: CorrelationMatrix,
        j_e: CorrelationMatrix,
        transmit_power: f64,
    ) -> Result<SystemMatrices> {
        SystemMatrices::new(
            h,
            j_rx,
            j_e,
            self.noise_power,
            self.rx_area.measure(),
            self.eve_area.measure(),
            transmit_power,
        )
    }
}

pub fn ensure_disjoint(a: &PlanarArea, b: &PlanarArea) -> Result<()> {
    if a.overlaps(b) {
        return Err(Error::config("eve_area", "areas must be disjoint"));
    }
    Ok(())
}

/// `log2(1 + |f^H Φ H v|² / σ²)`.
pub fn link_rate(
    f: &ChannelVector,
    phi: &PhaseProfile,
    h_matrix: &BsRisMatrix,
    v: &Precoder,
    noise_power: f64,
) -> f64 {
    let w = reflected_beam(phi, h_matrix, v);
    gain_rate(f.0.dotc(&w), noise_power)
}

/// `Φ H v`, the field leaving the RIS.
pub fn reflected_beam(phi: &PhaseProfile, h_matrix: &BsRisMatrix, v: &Precoder) -> CVector {
    (&h_matrix.0 * &v.0).component_mul(&phi.0)
}

fn gain_rate(s: Complex64, noise_power: f64) -> f64 {
    (1.0 + s.norm_sqr() / noise_power).log2()
}

/// Mean and standard error of i.i.d. Monte-Carlo samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// Clamped estimator output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecyEstimate {
    pub clamped: McEstimate,
    /// Smallest unclamped `R_RX - R_E` seen; positive means the clamp never acted.
    pub min_raw_difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposedEstimate {
    pub rx: McEstimate,
    pub eve: McEstimate,
    pub difference: f64,
    pub std_error: f64,
}

fn stratified_rate_samples(
    scenario: &Scenario,
    area: &PlanarArea,
    w: &CVector,
    grid: &QuadratureGrid,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.cells());
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let p = area.sample_in_cell(ix, iy, grid.nx, grid.ny, rng);
            out.push(draw_rate_at(scenario, &p, w, rng)?);
        }
    }
    Ok(out)
}

fn draw_rate_at(scenario: &Scenario, p: &Position3D, w: &CVector, rng: &mut RngStream) -> Result<f64> {
    let stats = link_statistics(
        &scenario.p_ris,
        &scenario.ris_geom,
        p,
        &scenario.link_pathloss,
        &scenario.link_rician,
    )?;
    let f = sample_rician(&stats, rng);
    Ok(gain_rate(f.0.dotc(w), scenario.noise_power))
}

/// Monte-Carlo estimate of the clamped spatial secrecy metric for a fixed
/// configuration.
///
/// Each trial places one RX and one Eve sample in every cell of `grid`
/// (jittered inside the cell). RX cells are paired with a random
/// permutation of Eve cells, so each pair is uniform on `S_RX x S_E`.
pub fn spatial_secrecy_mc(
    scenario: &Scenario,
    h_matrix: &BsRisMatrix,
    v: &Precoder,
    phi: &PhaseProfile,
    mc: &MonteCarloConfig,
    grid: &QuadratureGrid,
) -> Result<SecrecyEstimate> {
    scenario.validate()?;
    let w = reflected_beam(phi, h_matrix, v);
    let per_trial: Vec<Vec<f64>> = (0..mc.n_trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut rng = RngStream::substream(mc.base_seed, &[TAG_SECRECY, t as u64]);
            let mut perm: Vec<usize> = (0..grid.cells()).collect();
            perm.shuffle(&mut rng);
            let mut diffs = Vec::with_capacity(grid.cells());
            for (c, &pc) in perm.iter().enumerate() {
                let p_rx = scenario.rx_area.sample_in_cell(c % grid.nx, c / grid.nx, grid.nx, grid.ny, &mut rng);
                let p_e = scenario.eve_area.sample_in_cell(pc % grid.nx, pc / grid.nx, grid.nx, grid.ny, &mut rng);
                let r_rx = draw_rate_at(scenario, &p_rx, &w, &mut rng)?;
                let r_e = draw_rate_at(scenario, &p_e, &w, &mut rng)?;
                diffs.push(r_rx - r_e);
            }
            Ok(diffs)
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = per_trial.into_iter().flatten().collect();
    let min_raw_difference = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let clamped: Vec<f64> = raw.iter().map(|d| d.max(0.0)).collect();
    Ok(SecrecyEstimate {
        clamped: McEstimate::from_samples(&clamped),
        min_raw_difference,
    })
}

/// Difference of the separately averaged RX and Eve rates (no clamp).
pub fn decomposed_secrecy(
    scenario: &Scenario,
    h_matrix: &BsRisMatrix,
    v: &Precoder,
    phi: &PhaseProfile,
    mc: &MonteCarloConfig,
    grid: &QuadratureGrid,
) -> Result<DecomposedEstimate> {
    scenario.validate()?;
    let w = reflected_beam(phi, h_matrix, v);
    let draw = |area: &PlanarArea, tag: u64| -> Result<McEstimate> {
        let per_trial: Vec<Vec<f64>> = (0..mc.n_trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = RngStream::substream(mc.base_seed, &[tag, t as u64]);
                stratified_rate_samples(scenario, area, &w, grid, &mut rng)
            })
            .collect::<Result<_>>()?;
        let xs: Vec<f64> = per_trial.into_iter().flatten().collect();
        Ok(McEstimate::from_samples(&xs))
    };
    let rx = draw(&scenario.rx_area, TAG_DECOMPOSED_RX)?;
    let eve = draw(&scenario.eve_area, TAG_DECOMPOSED_EVE)?;
    Ok(DecomposedEstimate {
        rx,
        eve,
        difference: rx.mean - eve.mean,
        std_error: rx.std_error.hypot(eve.std_error),
    })
}

/// Per-cell LOS mean and scattering level of the RIS-to-receiver link.
#[derive(Debug, Clone)]
pub struct LinkField {
    pub area: PlanarArea,
    pub grid: QuadratureGrid,
    /// Column `c` holds the channel mean at cell `c` (row-major, x fastest).
    means: CMatrix,
    sigmas: Vec<f64>,
}

impl LinkField {
    pub fn new(scenario: &Scenario, area: &PlanarArea, grid: &QuadratureGrid) -> Result<Self> {
        let l = scenario.ris_geom.len();
        let mut means = CMatrix::zeros(l, grid.cells());
        let mut sigmas = Vec::with_capacity(grid.cells());
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let p = area.cell_center(ix, iy, grid.nx, grid.ny);
                let stats = link_statistics(
                    &scenario.p_ris,
                    &scenario.ris_geom,
                    &p,
                    &scenario.link_pathloss,
                    &scenario.link_rician,
                )?;
                means.set_column(iy * grid.nx + ix, &stats.mean);
                sigmas.push(stats.covariance_scale.sqrt());
            }
        }
        Ok(Self {
            area: *area,
            grid: *grid,
            means,
            sigmas,
        })
    }

    /// Mean rate of each cell over `samples` fading draws.
    ///
    /// For `f = f̄ + σ n` with `n ~ CN(0, I)`, `f^H w = f̄^H w + σ ‖w‖ z` with
    /// scalar `z ~ CN(0, 1)`, so one scalar draw per sample reproduces the
    /// per-element vector draw exactly in distribution.
    pub fn mean_rates(
        &self,
        w: &CVector,
        noise_power: f64,
        samples: usize,
        rng: &mut RngStream,
    ) -> Vec<f64> {
        let los = self.means.ad_mul(w);
        let wn = w.norm();
        los.iter()
            .zip(&self.sigmas)
            .map(|(m, s)| {
                let total: f64 = (0..samples)
                    .map(|_| gain_rate(m + rng.complex_normal() * (s * wn), noise_power))
                    .sum();
                total / samples as f64
            })
            .collect()
    }
}

/// Inputs shared by the sweep and map experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSettings {
    /// Grid for the J-matrix integration.
    pub quadrature: QuadratureGrid,
    /// Cells at which rates are evaluated.
    pub eval_grid: QuadratureGrid,
    pub ao: AoConfig,
    /// Fading draws per cell and trial.
    pub fading_samples: usize,
    pub reading: MaxRateReading,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            quadrature: QuadratureGrid::default(),
            eval_grid: QuadratureGrid { nx: 48, ny: 30 },
            ao: AoConfig::default(),
            fading_samples: 1,
            reading: MaxRateReading::default(),
        }
    }
}

/// A configured link for one scheme and trial.
#[derive(Debug, Clone)]
pub struct Configured {
    pub precoder: Precoder,
    pub phases: PhaseProfile,
    pub trace: Option<AoTrace>,
}

/// Configuration chosen by `scheme` for trial `trial`.
pub fn configure(
    scheme: SchemeKind,
    sys: &SystemMatrices,
    ao: &AoConfig,
    seed: u64,
    trial: usize,
) -> Result<Configured> {
    Ok(match scheme {
        SchemeKind::Proposed => {
            let out = alternating_optimize(sys, ao)?;
            Configured {
                precoder: out.precoder,
                phases: out.phases,
                trace: Some(out.trace),
            }
        }
        SchemeKind::RxOnly => {
            let out = rx_only_optimize(sys, ao)?;
            Configured {
                precoder: out.precoder,
                phases: out.phases,
                trace: Some(out.trace),
            }
        }
        SchemeKind::Random => {
            let mut rng = RngStream::substream(seed, &[TAG_RANDOM_CONFIG, trial as u64]);
            let (precoder, phases) = random_config(sys, &mut rng);
            Configured {
                precoder,
                phases,
                trace: None,
            }
        }
    })
}

fn fading_stream(seed: u64, trial: usize, area: u64) -> RngStream {
    RngStream::substream(seed, &[TAG_FADING, trial as u64, area])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub power_dbm: f64,
    pub scheme: SchemeKind,
    pub rx_max_rate: f64,
    pub eve_max_rate: f64,
    /// Area-mean rates, averaged over trials.
    pub rx_mean_rate: f64,
    pub eve_mean_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweepResult {
    pub powers_dbm: Vec<f64>,
    pub schemes: Vec<SchemeKind>,
    /// Power-major, then scheme in the order of `schemes`.
    pub rows: Vec<SweepRow>,
    /// Outer AO iterations summed over all optimized runs.
    pub ao_iterations: usize,
    pub ao_runs: usize,
    pub ao_unconverged: usize,
}

impl PowerSweepResult {
    pub fn row(&self, power_dbm: f64, scheme: SchemeKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.power_dbm == power_dbm)
    }

    pub fn column(&self, scheme: SchemeKind) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.scheme == scheme).collect()
    }
}

struct TrialCells {
    rx: Vec<f64>,
    eve: Vec<f64>,
    iterations: usize,
    optimized: bool,
    converged: bool,
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Rates at every evaluation cell of both areas for each (power, scheme),
/// one entry per trial.
fn run_trials(
    scenario: &Scenario,
    schemes: &[SchemeKind],
    powers_w: &[f64],
    mc: &MonteCarloConfig,
    settings: &ExperimentSettings,
) -> Result<Vec<Vec<TrialCells>>> {
    scenario.validate()?;
    if mc.n_trials == 0 {
        return Err(Error::config("monte_carlo.n_trials", "must be at least 1"));
    }
    let (j_rx, j_e) = scenario.correlations(&settings.quadrature)?;
    let rx_field = LinkField::new(scenario, &scenario.rx_area, &settings.eval_grid)?;
    let eve_field = LinkField::new(scenario, &scenario.eve_area, &settings.eval_grid)?;
    let samples = settings.fading_samples.max(1);

    (0..mc.n_trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<TrialCells>> {
            let h = scenario.trial_bs_ris(mc.base_seed, t)?;
            let base = scenario.system(h, j_rx.clone(), j_e.clone(), powers_w[0])?;
            let mut out = Vec::with_capacity(powers_w.len() * schemes.len());
            for &p in powers_w {
                let sys = base.with_transmit_power(p);
                for &scheme in schemes {
                    let cfg = configure(scheme, &sys, &settings.ao, mc.base_seed, t)?;
                    let w = reflected_beam(&cfg.phases, &sys.h_matrix, &cfg.precoder);
                    let mut rx_rng = fading_stream(mc.base_seed, t, AREA_RX);
                    let mut eve_rng = fading_stream(mc.base_seed, t, AREA_EVE);
                    out.push(TrialCells {
                        rx: rx_field.mean_rates(&w, scenario.noise_power, samples, &mut rx_rng),
                        eve: eve_field.mean_rates(&w, scenario.noise_power, samples, &mut eve_rng),
                        iterations: cfg.trace.as_ref().map_or(0, |tr| tr.iterations_used),
                        optimized: cfg.trace.is_some(),
                        converged: cfg.trace.as_ref().is_none_or(|tr| tr.converged),
                    });
                }
            }
            Ok(out)
        })
        .collect()
}

/// Maximum achievable RX and Eve rates versus transmit power.
pub fn power_sweep(
    scenario: &Scenario,
    schemes: &[SchemeKind],
    powers_dbm: &[f64],
    mc: &MonteCarloConfig,
    settings: &ExperimentSettings,
) -> Result<PowerSweepResult> {
    if powers_dbm.is_empty() || schemes.is_empty() {
        return Err(Error::config("power_grid_dbm", "sweep needs at least one power and one scheme"));
    }
    let powers_w: Vec<f64> = powers_dbm.iter().map(|&p| crate::channel::dbm_to_watts(p)).collect();
    let trials = run_trials(scenario, schemes, &powers_w, mc, settings)?;
    let n = trials.len() as f64;

    let mut rows = Vec::new();
    let (mut ao_iterations, mut ao_runs, mut ao_unconverged) = (0, 0, 0);
    for trial in &trials {
        for cells in trial {
            if cells.optimized {
                ao_runs += 1;
                ao_iterations += cells.iterations;
                ao_unconverged += usize::from(!cells.converged);
            }
        }
    }
    for (pi, &power_dbm) in powers_dbm.iter().enumerate() {
        for (si, &scheme) in schemes.iter().enumerate() {
            let k = pi * schemes.len() + si;
            let reduce = |pick: fn(&TrialCells) -> &Vec<f64>| -> (f64, f64) {
                let mean_area = trials.iter().map(|t| mean_of(pick(&t[k]))).sum::<f64>() / n;
                let max = match settings.reading {
                    MaxRateReading::PerTrialMax => {
                        trials.iter().map(|t| max_of(pick(&t[k]))).sum::<f64>() / n
                    }
                    MaxRateReading::MaxOfTrialMean => {
                        let cells = pick(&trials[0][k]).len();
                        let per_cell: Vec<f64> = (0..cells)
                            .map(|c| trials.iter().map(|t| pick(&t[k])[c]).sum::<f64>() / n)
                            .collect();
                        max_of(&per_cell)
                    }
                };
                (max, mean_area)
            };
            let (rx_max_rate, rx_mean_rate) = reduce(|c| &c.rx);
            let (eve_max_rate, eve_mean_rate) = reduce(|c| &c.eve);
            rows.push(SweepRow {
                power_dbm,
                scheme,
                rx_max_rate,
                eve_max_rate,
                rx_mean_rate,
                eve_mean_rate,
            });
        }
    }
    Ok(PowerSweepResult {
        powers_dbm: powers_dbm.to_vec(),
        schemes: schemes.to_vec(),
        rows,
        ao_iterations,
        ao_runs,
        ao_unconverged,
    })
}

/// Trial-averaged rate at each cell of an area.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMapGrid {
    pub area: PlanarArea,
    pub nx: usize,
    pub ny: usize,
    /// Row-major with x fastest: `values[iy * nx + ix]`.
    pub values: Vec<f64>,
}

impl RateMapGrid {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn cell_center(&self, idx: usize) -> Position3D {
        self.area
            .cell_center(idx % self.nx, idx / self.nx, self.nx, self.ny)
    }

    pub fn mean(&self) -> f64 {
        mean_of(&self.values)
    }
}

/// Rate maps over both areas for several schemes sharing the same BS-RIS
/// draws and fading streams. Returns `(rx_map, eve_map)` per scheme.
pub fn rate_maps(
    scenario: &Scenario,
    schemes: &[SchemeKind],
    transmit_power_dbm: f64,
    mc: &MonteCarloConfig,
    settings: &ExperimentSettings,
) -> Result<Vec<(RateMapGrid, RateMapGrid)>> {
    let p = crate::channel::dbm_to_watts(transmit_power_dbm);
    let trials = run_trials(scenario, schemes, &[p], mc, settings)?;
    let n = trials.len() as f64;
    let grid = settings.eval_grid;
    let average = |k: usize, pick: fn(&TrialCells) -> &Vec<f64>| -> Vec<f64> {
        (0..grid.cells())
            .map(|c| trials.iter().map(|t| pick(&t[k])[c]).sum::<f64>() / n)
            .collect()
    };
    Ok((0..schemes.len())
        .map(|k| {
            (
                RateMapGrid {
                    area: scenario.rx_area,
                    nx: grid.nx,
                    ny: grid.ny,
                    values: average(k, |c| &c.rx),
                },
                RateMapGrid {
                    area: scenario.eve_area,
                    nx: grid.nx,
                    ny: grid.ny,
                    values: average(k, |c| &c.eve),
                },
            )
        })
        .collect())
}

/// Rate maps over the RX and Eve areas for one scheme.
pub fn rate_heatmap(
    scheme: SchemeKind,
    scenario: &Scenario,
    transmit_power_dbm: f64,
    mc: &MonteCarloConfig,
    cells: &QuadratureGrid,
    settings: &ExperimentSettings,
) -> Result<(RateMapGrid, RateMapGrid)> {
    let settings = ExperimentSettings {
        eval_grid: *cells,
        ..*settings
    };
    let mut maps = rate_maps(scenario, &[scheme], transmit_power_dbm, mc, &settings)?;
    Ok(maps.remove(0))
}

/// Per-cell percentage gain; cells with a zero baseline are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub area: PlanarArea,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl GainMap {
    fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.defined().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.defined().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        let (s, n) = self.defined().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        s / n as f64
    }

    pub fn cell_center(&self, idx: usize) -> Position3D {
        self.area
            .cell_center(idx % self.nx, idx / self.nx, self.nx, self.ny)
    }
}

pub fn gain_map(optimized: &RateMapGrid, baseline: &RateMapGrid) -> Result<GainMap> {
    if optimized.nx != baseline.nx
        || optimized.ny != baseline.ny
        || optimized.values.len() != baseline.values.len()
    {
        return Err(Error::Dimension(format!(
            "gain map needs aligned grids, got {}x{} and {}x{}",
            optimized.nx, optimized.ny, baseline.nx, baseline.ny
        )));
    }
    let values = optimized
        .values
        .iter()
        .zip(&baseline.values)
        .map(|(o, b)| {
            if *b == 0.0 {
                f64::NAN
            } else {
                100.0 * (o - b) / b
            }
        })
        .collect();
    Ok(GainMap {
        area: optimized.area,
        nx: optimized.nx,
        ny: optimized.ny,
        values,
    })
}

/// Format with 9 significant digits, `NaN` for undefined values.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn sweep_csv(result: &PowerSweepResult) -> String {
    let mut out = String::from("power_dbm,scheme,rx_max_rate,eve_max_rate\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_sig9(r.power_dbm),
            r.scheme,
            format_sig9(r.rx_max_rate),
            format_sig9(r.eve_max_rate)
        ));
    }
    out
}

pub fn rate_map_csv(map: &RateMapGrid) -> String {
    let mut out = String::from("x_m,y_m,rate_bpshz\n");
    for (i, v) in map.values.iter().enumerate() {
        let p = map.cell_center(i);
        out.push_str(&format!("{},{},{}\n", format_sig9(p.x), format_sig9(p.y), format_sig9(*v)));
    }
    out
}

pub fn gain_map_csv(map: &GainMap) -> String {
    let mut out = String::from("x_m,y_m,gain_percent\n");
    for (i, v) in map.values.iter().enumerate() {
        let p = map.cell_center(i);
        out.push_str(&format!("{},{},{}\n", format_sig9(p.x), format_sig9(p.y), format_sig9(*v)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(f64::NAN), "NaN");
        assert_eq!(format_sig9(1.5), "1.5");
        assert_eq!(format_sig9(35.0), "35");
        assert_eq!(format_sig9(-15.25), "-15.25");
        assert_eq!(format_sig9(2.0f64.sqrt()), "1.41421356");
        assert_eq!(format_sig9(123456789.0), "123456789");
        assert_eq!(format_sig9(1.0e-7), "1e-7");
        assert_eq!(format_sig9(3.16227766016e-14), "3.16227766e-14");
        assert_eq!(format_sig9(0.000123456789123), "0.000123456789");
    }

    #[test]
    fn scheme_names_parse() {
        for s in SchemeKind::ALL {
            assert_eq!(s.name().parse::<SchemeKind>().unwrap(), s);
        }
        assert_eq!("RX-Only".parse::<SchemeKind>().unwrap(), SchemeKind::RxOnly);
        assert!("best".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn estimate_of_constant_samples() {
        let e = McEstimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_error, 0.0);
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scenario(eve_x: f64) -> Scenario {
        Scenario {
            p_bs: Position3D::new(0.0, 0.0, 7.5),
            p_ris: Position3D::new(0.0, 50.0, 3.0),
            bs_geom: UpaGeometry::new(2, 2, 0.5).unwrap(),
            ris_geom: UpaGeometry::new(3, 4, 0.5).unwrap(),
            rx_area: PlanarArea::new(-10.0, 35.0, 8.0, 6.0, 1.5).unwrap(),
            eve_area: PlanarArea::new(eve_x, 35.0, 8.0, 6.0, 1.5).unwrap(),
            link_pathloss: PathlossModel::from_db(-30.0, 1.0, 2.2).unwrap(),
            link_rician: RicianModel::new(13.2).unwrap(),
            bs_ris_pathloss: PathlossModel::from_db(-30.0, 1.0, 2.2).unwrap(),
            bs_ris_rician: RicianModel::new(13.2).unwrap(),
            noise_power: crate::channel::dbm_to_watts(-105.0),
        }
    }

    fn quick_settings() -> ExperimentSettings {
        ExperimentSettings {
            quadrature: QuadratureGrid { nx: 16, ny: 12 },
            eval_grid: QuadratureGrid { nx: 6, ny: 4 },
            ..ExperimentSettings::default()
        }
    }

    fn unit(n: usize) -> CVector {
        CVector::from_element(n, c(1.0 / (n as f64).sqrt()))
    }

    #[test]
    fn scalar_link_rates() {
        let one = |x: f64| CMatrix::from_element(1, 1, c(x));
        let f = ChannelVector(CVector::from_element(1, c(1.0)));
        let v = Precoder(CVector::from_element(1, c(1.0)));
        let phi = PhaseProfile::ones(1);
        let r = link_rate(&f, &phi, &BsRisMatrix(one(1.0)), &v, 1.0);
        assert!((r - 1.0).abs() < 1e-15);
        let r = link_rate(&f, &phi, &BsRisMatrix(one(3.0)), &v, 1.0);
        assert!((r - 10f64.log2()).abs() < 1e-14);
        // the RIS phase rotates the beam without changing its power
        let phi = PhaseProfile::from_angles(&[1.3]);
        let r = link_rate(&f, &phi, &BsRisMatrix(one(3.0)), &v, 1.0);
        assert!((r - 10f64.log2()).abs() < 1e-14);
    }

    #[test]
    fn link_rate_grows_with_power() {
        let mut rng = RngStream::new(5);
        let h = BsRisMatrix(CMatrix::from_fn(6, 2, |_, _| rng.complex_normal()));
        let f = ChannelVector(rng.complex_normal_vector(6));
        let phi = PhaseProfile::random(6, &mut rng);
        let dir = rng.complex_normal_vector(2);
        let rates: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|p| link_rate(&f, &phi, &h, &Precoder::from_direction(dir.clone(), *p), 1.0))
            .collect();
        assert!(rates.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn clamp_floors_a_losing_receiver() {
        // Eve sits next to the RIS, the receiver far away
        let mut sc = scenario(0.0);
        sc.eve_area = PlanarArea::new(0.0, 46.0, 2.0, 2.0, 1.5).unwrap();
        sc.rx_area = PlanarArea::new(-150.0, 0.0, 4.0, 4.0, 1.5).unwrap();
        let h = sc.trial_bs_ris(0, 0).unwrap();
        let v = Precoder::from_direction(unit(4), 1.0);
        let phi = PhaseProfile::ones(12);
        let mc = MonteCarloConfig { n_trials: 4, base_seed: 1 };
        let grid = QuadratureGrid { nx: 5, ny: 5 };
        let est = spatial_secrecy_mc(&sc, &h, &v, &phi, &mc, &grid).unwrap();
        let dec = decomposed_secrecy(&sc, &h, &v, &phi, &mc, &grid).unwrap();
        assert!(dec.difference < 0.0);
        assert!(est.min_raw_difference < 0.0);
        assert!(est.clamped.mean >= 0.0);
        assert!(est.clamped.mean < 0.05 * dec.eve.mean);
        assert_eq!(est.clamped.samples, 100);
    }

    #[test]
    fn overwhelming_noise_gives_no_rate() {
        let mut sc = scenario(10.0);
        sc.noise_power = 1e6;
        let mc = MonteCarloConfig { n_trials: 2, base_seed: 0 };
        let res = power_sweep(&sc, &SchemeKind::ALL, &[40.0], &mc, &quick_settings()).unwrap();
        for r in &res.rows {
            assert!(r.rx_max_rate < 1e-6 && r.eve_max_rate < 1e-6);
        }
    }

    #[test]
    fn sweep_layout_and_determinism() {
        let sc = scenario(10.0);
        let mc = MonteCarloConfig { n_trials: 3, base_seed: 11 };
        let powers = [20.0, 30.0];
        let a = power_sweep(&sc, &SchemeKind::ALL, &powers, &mc, &quick_settings()).unwrap();
        let b = power_sweep(&sc, &SchemeKind::ALL, &powers, &mc, &quick_settings()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.rows[4].power_dbm, 30.0);
        assert_eq!(a.rows[4].scheme, SchemeKind::RxOnly);
        assert_eq!(a.ao_runs, 3 * 2 * 2);
        assert_eq!(sweep_csv(&a).lines().count(), 7);
        for s in SchemeKind::ALL {
            let col = a.column(s);
            assert!(col[1].rx_max_rate > col[0].rx_max_rate);
            assert!(col[0].rx_max_rate >= col[0].rx_mean_rate);
        }
    }

    #[test]
    fn max_readings_agree_for_one_trial() {
        let sc = scenario(10.0);
        let mc = MonteCarloConfig { n_trials: 1, base_seed: 2 };
        let a = power_sweep(&sc, &[SchemeKind::Random], &[30.0], &mc, &quick_settings()).unwrap();
        let settings = ExperimentSettings {
            reading: MaxRateReading::MaxOfTrialMean,
            ..quick_settings()
        };
        let b = power_sweep(&sc, &[SchemeKind::Random], &[30.0], &mc, &settings).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn distant_eavesdropper_leaves_receiver_design() {
        let sc = scenario(5000.0);
        let mc = MonteCarloConfig { n_trials: 2, base_seed: 3 };
        let res = power_sweep(
            &sc,
            &[SchemeKind::Proposed, SchemeKind::RxOnly],
            &[30.0],
            &mc,
            &quick_settings(),
        )
        .unwrap();
        let p = res.row(30.0, SchemeKind::Proposed).unwrap();
        let r = res.row(30.0, SchemeKind::RxOnly).unwrap();
        assert!((p.rx_mean_rate - r.rx_mean_rate).abs() < 1e-2 * r.rx_mean_rate);
    }

    #[test]
    fn scalar_fading_matches_vector_draws() {
        let sc = scenario(10.0);
        let mc = MonteCarloConfig { n_trials: 1, base_seed: 4 };
        let cells = QuadratureGrid { nx: 1, ny: 1 };
        let samples = 20_000;
        let settings = ExperimentSettings {
            fading_samples: samples,
            ..quick_settings()
        };
        let (rx_map, _) =
            rate_heatmap(SchemeKind::Random, &sc, 30.0, &mc, &cells, &settings).unwrap();

        // same configuration, full per-element draws at the cell center
        let (j_rx, j_e) = sc.correlations(&settings.quadrature).unwrap();
        let h = sc.trial_bs_ris(mc.base_seed, 0).unwrap();
        let sys = sc.system(h, j_rx, j_e, crate::channel::dbm_to_watts(30.0)).unwrap();
        let cfg = configure(SchemeKind::Random, &sys, &settings.ao, mc.base_seed, 0).unwrap();
        let w = reflected_beam(&cfg.phases, &sys.h_matrix, &cfg.precoder);
        let p = sc.rx_area.cell_center(0, 0, 1, 1);
        let stats = link_statistics(&sc.p_ris, &sc.ris_geom, &p, &sc.link_pathloss, &sc.link_rician)
            .unwrap();
        let mut rng = RngStream::new(99);
        let xs: Vec<f64> = (0..samples)
            .map(|_| gain_rate(sample_rician(&stats, &mut rng).0.dotc(&w), sc.noise_power))
            .collect();
        let oracle = McEstimate::from_samples(&xs);
        let se = oracle.std_error * 2f64.sqrt();
        assert!((rx_map.values[0] - oracle.mean).abs() < 4.0 * se, "{} vs {}", rx_map.values[0], oracle.mean);
    }

    #[test]
    fn heatmap_shares_sweep_draws() {
        let sc = scenario(10.0);
        let mc = MonteCarloConfig { n_trials: 2, base_seed: 8 };
        let settings = quick_settings();
        let maps = rate_maps(&sc, &[SchemeKind::RxOnly], 25.0, &mc, &settings).unwrap();
        let sweep = power_sweep(&sc, &[SchemeKind::RxOnly], &[25.0], &mc, &settings).unwrap();
        assert!((maps[0].0.mean() - sweep.rows[0].rx_mean_rate).abs() < 1e-12);
        assert!((maps[0].1.mean() - sweep.rows[0].eve_mean_rate).abs() < 1e-12);
        assert_eq!(rate_map_csv(&maps[0].0).lines().count(), 25);
    }

    fn map(values: Vec<f64>) -> RateMapGrid {
        RateMapGrid {
            area: PlanarArea::new(0.0, 0.0, 2.0, 2.0, 0.0).unwrap(),
            nx: 2,
            ny: 2,
            values,
        }
    }

    #[test]
    fn gain_map_percentages() {
        let base = map(vec![1.0, 2.0, 0.5, 0.0]);
        let same = gain_map(&base, &base).unwrap();
        assert_eq!(&same.values[..3], &[0.0; 3]);
        assert!(same.values[3].is_nan());

        let up = map(vec![1.26, 2.52, 0.63, 1.0]);
        let g = gain_map(&up, &base).unwrap();
        assert!(g.values[..3].iter().all(|v| (v - 26.0).abs() < 1e-9));
        assert!((g.mean() - 26.0).abs() < 1e-9);
        assert!((g.min() - 26.0).abs() < 1e-9 && (g.max() - 26.0).abs() < 1e-9);
        assert!(gain_map_csv(&g).ends_with("NaN\n"));

        let odd = RateMapGrid { nx: 4, ny: 1, ..base.clone() };
        assert!(matches!(gain_map(&odd, &base), Err(Error::Dimension(_))));
    }

    #[test]
    fn overlapping_areas_rejected() {
        let sc = scenario(-8.0);
        assert!(matches!(sc.validate(), Err(Error::Config { .. })));
        let mc = MonteCarloConfig::default();
        assert!(power_sweep(&sc, &SchemeKind::ALL, &[30.0], &mc, &quick_settings()).is_err());
    }
}
