//! Parallel one-dimensional parameter scans. Points are embarrassingly
//! parallel; results are assembled by plan index, so the output table does
//! not depend on worker count or completion order.

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lindblad::{
    integrate, recommended_step, steady_state_detect, DissipatorSet, IntegrationSpec,
};
use crate::meanfield::{active_sites, integrate_meanfield, MeanFieldState};
use crate::model::{
    driven_full, driven_local, initial_state, ChainConfig, ChainLayout, LocalDriveParams,
};

/// Steady-state detection over the sweep kernels: trailing window fraction
/// and relative tolerance.
pub const DETECT_WINDOW_FRACTION: f64 = 0.1;
pub const DETECT_TOL: f64 = 0.02;

/// Which single-point simulation a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Exact Lindblad run of the driven minimal chain (random-phase case).
    MinimalCase1,
    /// Exact Lindblad run on the phase-locked resonance.
    MinimalCase2,
    /// Exact Lindblad run of the locally driven two-spin model.
    LocalDrive,
    /// Mean-field kinetic run of an N-site array.
    MeanfieldArray,
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Experiment::MinimalCase1 => "minimal-case1",
            Experiment::MinimalCase2 => "minimal-case2",
            Experiment::LocalDrive => "localdrive",
            Experiment::MeanfieldArray => "meanfield-array",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal-case1" => Ok(Experiment::MinimalCase1),
            "minimal-case2" => Ok(Experiment::MinimalCase2),
            "localdrive" => Ok(Experiment::LocalDrive),
            "meanfield-array" => Ok(Experiment::MeanfieldArray),
            other => Err(Error::InvalidPlan(format!("unknown experiment '{other}'"))),
        }
    }
}

/// Which parameter the scan varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepTarget {
    /// Drive frequency Ω of one bond.
    BondBigOmega(usize),
    /// Drive amplitude J of one bond.
    BondAmp(usize),
    /// Local-drive frequency ν; the amplitude stays locked to
    /// ε₀ = (ν/2)·x₀ with x₀ the first J₀ zero.
    DriveNu,
}

impl std::fmt::Display for SweepTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepTarget::BondBigOmega(k) => write!(f, "bond{k}.big_omega"),
            SweepTarget::BondAmp(k) => write!(f, "bond{k}.j_amp"),
            SweepTarget::DriveNu => write!(f, "drive.nu"),
        }
    }
}

impl std::str::FromStr for SweepTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "drive.nu" {
            return Ok(SweepTarget::DriveNu);
        }
        if let Some(rest) = s.strip_prefix("bond") {
            if let Some((idx, field)) = rest.split_once('.') {
                let k: usize = idx
                    .parse()
                    .map_err(|_| Error::InvalidPlan(format!("bad bond index in '{s}'")))?;
                return match field {
                    "big_omega" => Ok(SweepTarget::BondBigOmega(k)),
                    "j_amp" => Ok(SweepTarget::BondAmp(k)),
                    other => {
                        Err(Error::InvalidPlan(format!("unknown bond field '{other}'")))
                    }
                };
            }
        }
        Err(Error::InvalidPlan(format!("unknown sweep target '{s}'")))
    }
}

/// A one-dimensional scan: the target parameter, its strictly monotone value
/// list, the experiment recipe, and the per-point integration spec (whose
/// `dt` acts as a cap; each point may shrink it to its own stability limit).
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub target: SweepTarget,
    pub values: Vec<f64>,
    pub experiment: Experiment,
    pub spec: IntegrationSpec,
    /// Local-drive parameters; required by [`Experiment::LocalDrive`].
    pub drive: Option<LocalDriveParams>,
    /// Coherent seed amplitude for mean-field points.
    pub seed_amp: f64,
}

impl SweepPlan {
    pub fn validate(&self, base: &ChainConfig) -> Result<()> {
        base.validate()?;
        if self.values.len() < 1 {
            return Err(Error::InvalidPlan("empty value list".into()));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidPlan("values must be strictly monotone".into()));
        }
        match self.target {
            SweepTarget::BondBigOmega(k) | SweepTarget::BondAmp(k) => {
                if k >= base.bonds.len() {
                    return Err(Error::InvalidPlan(format!(
                        "bond index {k} out of range ({} bonds)",
                        base.bonds.len()
                    )));
                }
            }
            SweepTarget::DriveNu => {
                if self.experiment != Experiment::LocalDrive {
                    return Err(Error::InvalidPlan(
                        "drive.nu sweeps require the localdrive experiment".into(),
                    ));
                }
            }
        }
        if self.experiment == Experiment::LocalDrive
            && self.drive.is_none()
            && self.target != SweepTarget::DriveNu
        {
            return Err(Error::InvalidPlan("localdrive sweeps need drive parameters".into()));
        }
        Ok(())
    }
}

/// One row of a sweep: the steady-state observables or the failure message.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub value: f64,
    pub outputs: BTreeMap<String, f64>,
    pub error: Option<String>,
}

/// Ordered table mapping swept values to steady-state observables; failed
/// points carry NaN columns and their error text.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub values: Vec<f64>,
    pub outputs: BTreeMap<String, Vec<f64>>,
    pub errors: Vec<Option<String>>,
}

impl SweepResult {
    fn assemble(points: Vec<PointOutcome>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for p in &points {
            for k in p.outputs.keys() {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        let mut outputs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for name in &names {
            outputs.insert(
                name.clone(),
                points
                    .iter()
                    .map(|p| p.outputs.get(name).copied().unwrap_or(f64::NAN))
                    .collect(),
            );
        }
        SweepResult {
            values: points.iter().map(|p| p.value).collect(),
            outputs,
            errors: points.into_iter().map(|p| p.error).collect(),
        }
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.outputs
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::KeyAbsent(name.to_string()))
    }
}

/// Run every point of the plan against the base configuration. Points run in
/// parallel; a point flagged as truncation-unsafe is retried once with its
/// Fock spaces enlarged by 20 levels before being marked failed.
pub fn run_sweep(plan: &SweepPlan, base_config: &ChainConfig) -> Result<SweepResult> {
    plan.validate(base_config)?;
    let points: Vec<PointOutcome> = plan
        .values
        .par_iter()
        .map(|&value| match run_point(plan, base_config, value) {
            Ok(outputs) => PointOutcome { value, outputs, error: None },
            Err(e) => PointOutcome {
                value,
                outputs: BTreeMap::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(SweepResult::assemble(points))
}

fn apply_target(
    plan: &SweepPlan,
    config: &mut ChainConfig,
    drive: &mut Option<LocalDriveParams>,
    value: f64,
) {
    match plan.target {
        SweepTarget::BondBigOmega(k) => config.bonds[k].big_omega = value,
        SweepTarget::BondAmp(k) => config.bonds[k].j_amp = value,
        SweepTarget::DriveNu => *drive = Some(LocalDriveParams::at_bessel_zero(value)),
    }
}

/// One independent simulation of the plan's experiment at `value`.
pub fn run_point(
    plan: &SweepPlan,
    base_config: &ChainConfig,
    value: f64,
) -> Result<BTreeMap<String, f64>> {
    let mut config = base_config.clone();
    let mut drive = plan.drive;
    apply_target(plan, &mut config, &mut drive, value);
    config.validate()?;

    match plan.experiment {
        Experiment::MeanfieldArray => meanfield_point(&config, &plan.spec, plan.seed_amp),
        _ => {
            match exact_point(plan.experiment, &config, drive.as_ref(), &plan.spec) {
                Ok((outputs, truncation_flagged)) if !truncation_flagged => Ok(outputs),
                flagged_or_err => {
                    if let Err(e) = &flagged_or_err {
                        log::warn!("sweep point {value}: {e}; retrying with n_max + 20");
                    } else {
                        log::warn!(
                            "sweep point {value} not truncation-safe; retrying with n_max + 20"
                        );
                    }
                    let mut enlarged = config.clone();
                    for s in &mut enlarged.sites {
                        if s.has_oscillator() {
                            s.n_max += 20;
                        }
                    }
                    let (outputs, flagged) =
                        exact_point(plan.experiment, &enlarged, drive.as_ref(), &plan.spec)?;
                    if flagged {
                        return Err(Error::InvalidPlan(format!(
                            "point {value} still truncation-unsafe at enlarged n_max"
                        )));
                    }
                    Ok(outputs)
                }
            }
        }
    }
}

fn exact_point(
    experiment: Experiment,
    config: &ChainConfig,
    drive: Option<&LocalDriveParams>,
    cap: &IntegrationSpec,
) -> Result<(BTreeMap<String, f64>, bool)> {
    let chain = ChainLayout::new(config)?;
    let h = match experiment {
        Experiment::LocalDrive => {
            let drive = drive.ok_or_else(|| {
                Error::InvalidPlan("localdrive experiment needs drive parameters".into())
            })?;
            driven_local(config, drive, &chain)?
        }
        _ => driven_full(config, &chain)?,
    };
    let dissipators = DissipatorSet::from_config(config, &chain)?;
    let spec = capped_spec(cap, recommended_step(&h, &dissipators));

    let osc_site = config
        .sites
        .iter()
        .position(|s| s.has_oscillator())
        .ok_or_else(|| Error::Topology("config has no oscillator".into()))?;
    let b = chain.b(osc_site)?;
    let n_op = b.dagger().dot(&b)?;
    let n2_op = b.dagger().dot(&b.dagger())?.dot(&b)?.dot(&b)?;
    let probes = vec![("n".to_string(), n_op), ("n2".to_string(), n2_op)];

    let rho0 = initial_state(config, &chain)?;
    let out = integrate(&rho0, &h, &dissipators, &spec, &probes)?;

    let window = DETECT_WINDOW_FRACTION * spec.t_end;
    let n_ss = steady_state_detect(&out.record, "n", window, DETECT_TOL)?;
    let n2_ss = steady_state_detect(&out.record, "n2", window, DETECT_TOL)?;
    let mut outputs = BTreeMap::new();
    outputs.insert("n_ss".to_string(), n_ss.value.re);
    outputs.insert(
        "g2_ss".to_string(),
        if n_ss.value.re > 1e-9 {
            n2_ss.value.re / (n_ss.value.re * n_ss.value.re)
        } else {
            f64::NAN
        },
    );
    outputs.insert("converged".to_string(), if n_ss.converged { 1.0 } else { 0.0 });
    Ok((outputs, out.record.truncation_flagged))
}

fn meanfield_point(
    config: &ChainConfig,
    cap: &IntegrationSpec,
    seed_amp: f64,
) -> Result<BTreeMap<String, f64>> {
    let spec = capped_spec(cap, crate::lindblad::step_ceiling(config.f_max()));
    let s0 = MeanFieldState::seeded(config, seed_amp)?;
    let out = integrate_meanfield(&s0, config, &spec, 0.0)?;
    let active = active_sites(config);
    let lead = active.first().copied().unwrap_or(0);
    let window = DETECT_WINDOW_FRACTION * spec.t_end;
    let n_ss = steady_state_detect(&out.record, &format!("n{}", lead + 1), window, DETECT_TOL)?;
    let g2_ss =
        steady_state_detect(&out.record, &format!("g2_{}", lead + 1), window, DETECT_TOL)?;
    let mut outputs = BTreeMap::new();
    outputs.insert("n_ss".to_string(), n_ss.value.re);
    outputs.insert("g2_ss".to_string(), g2_ss.value.re);
    outputs.insert("converged".to_string(), if n_ss.converged { 1.0 } else { 0.0 });
    if out.record.get("r_k").is_ok() {
        let r_k = steady_state_detect(&out.record, "r_k", window, 1.0)?;
        outputs.insert("r_k".to_string(), r_k.value.re);
    }
    Ok(outputs)
}

/// Per-point spec: same horizon and sampling period as the cap, with the
/// step shrunk to the point's own stability limit when needed.
fn capped_spec(cap: &IntegrationSpec, dt_limit: f64) -> IntegrationSpec {
    if cap.dt <= dt_limit {
        return *cap;
    }
    crate::lindblad::align_spec(cap, dt_limit)
}
