//! Experiment recipes: canned parameter sets and output contracts, one per
//! bundled figure-style study.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde_json::json;

use phonlase::hilbert::{partial_trace, DensityMatrix};
use phonlase::lindblad::{
    effective_generator, integrate, recommended_step, DissipatorSet, IntegrationSpec,
    TrajectoryRecord,
};
use phonlase::meanfield::{integrate_meanfield, MeanFieldState};
use phonlase::model::{
    driven_full, effective_hamiltonian_case1, effective_hamiltonian_case2, initial_state,
    ChainConfig, ChainLayout, LocalDriveParams, ResonanceCase,
};
use phonlase::observables::{
    g2_zero, minmax_normalize, power_spectrum, ring_symmetry_score, wigner, SpectrumWindow,
    WignerGridSpec, PHASE_FLOOR_FRACTION,
};
use phonlase::sweep::{run_sweep, Experiment, SweepPlan, SweepTarget};
use phonlase::{presets, Error as CoreError};

use crate::config::ConfigFile;
use crate::output::CsvTable;

/// The fixed recipe set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeName {
    Fig2Dynamics,
    Fig2OmegaScan,
    Fig2Threshold,
    Fig2Spectrum,
    Fig2Wigner,
    FigS1Phaselocked,
    Fig3Array,
    FigS2Array,
    FigS3Localdrive,
}

pub const ALL_RECIPES: [RecipeName; 9] = [
    RecipeName::Fig2Dynamics,
    RecipeName::Fig2OmegaScan,
    RecipeName::Fig2Threshold,
    RecipeName::Fig2Spectrum,
    RecipeName::Fig2Wigner,
    RecipeName::FigS1Phaselocked,
    RecipeName::Fig3Array,
    RecipeName::FigS2Array,
    RecipeName::FigS3Localdrive,
];

impl std::fmt::Display for RecipeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl RecipeName {
    pub fn name(&self) -> &'static str {
        match self {
            RecipeName::Fig2Dynamics => "fig2-dynamics",
            RecipeName::Fig2OmegaScan => "fig2-omega-scan",
            RecipeName::Fig2Threshold => "fig2-threshold",
            RecipeName::Fig2Spectrum => "fig2-spectrum",
            RecipeName::Fig2Wigner => "fig2-wigner",
            RecipeName::FigS1Phaselocked => "figS1-phaselocked",
            RecipeName::Fig3Array => "fig3-array",
            RecipeName::FigS2Array => "figS2-array",
            RecipeName::FigS3Localdrive => "figS3-localdrive",
        }
    }
}

impl FromStr for RecipeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ALL_RECIPES
            .iter()
            .find(|r| r.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = ALL_RECIPES.iter().map(|r| r.name()).collect();
                format!("unknown recipe '{s}'; available: {}", names.join(", "))
            })
    }
}

/// CLI failure with its exit code: 1 for validation problems, 2 for
/// numerical ones.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { message: msg.into(), exit_code: 1 }
    }

}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let exit_code = match e {
            CoreError::StepInstability { .. }
            | CoreError::UndefinedObservable(_)
            | CoreError::NotHermitian { .. }
            | CoreError::ZeroTrace => 2,
            _ => 1,
        };
        CliError { message: e.to_string(), exit_code }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { message: format!("io error: {e}"), exit_code: 2 }
    }
}

/// What a recipe produced, for the manifest.
pub struct RecipeReport {
    pub files: Vec<String>,
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub resolved_config: ChainConfig,
    pub resolved_spec: IntegrationSpec,
    pub drive: Option<LocalDriveParams>,
    pub truncation_flagged: bool,
}

/// Run a recipe with overrides from the config document, writing outputs
/// under `out_dir`.
pub fn run_recipe(
    name: RecipeName,
    file: &ConfigFile,
    out_dir: &Path,
) -> Result<RecipeReport, CliError> {
    match name {
        RecipeName::Fig2Dynamics => fig2_dynamics(file, out_dir),
        RecipeName::Fig2OmegaScan => fig2_omega_scan(file, out_dir),
        RecipeName::Fig2Threshold => fig2_threshold(file, out_dir),
        RecipeName::Fig2Spectrum => fig2_spectrum(file, out_dir),
        RecipeName::Fig2Wigner => fig2_wigner(file, out_dir),
        RecipeName::FigS1Phaselocked => figs1_phaselocked(file, out_dir),
        RecipeName::Fig3Array => fig3_array_recipe(file, out_dir),
        RecipeName::FigS2Array => figs2_array_recipe(file, out_dir),
        RecipeName::FigS3Localdrive => figs3_localdrive(file, out_dir),
    }
}

/// Resolve the chain: an explicit `[[sites]]` section replaces the preset.
fn resolve_chain(file: &ConfigFile, preset: ChainConfig) -> Result<ChainConfig, CliError> {
    if file.has_chain() {
        Ok(file.chain_config()?)
    } else {
        Ok(preset)
    }
}

fn real_series(record: &TrajectoryRecord, key: &str) -> Result<Vec<f64>, CliError> {
    Ok(record.get(key)?.iter().map(|z| z.re).collect())
}

fn g2_series(record: &TrajectoryRecord) -> Result<Vec<f64>, CliError> {
    let n = record.get("n")?;
    let n2 = record.get("n2")?;
    Ok(n
        .iter()
        .zip(n2)
        .map(|(n, n2)| if n.re > 1e-9 { n2.re / (n.re * n.re) } else { f64::NAN })
        .collect())
}

fn minimal_probes(
    config: &ChainConfig,
    chain: &ChainLayout,
) -> Result<Vec<(String, phonlase::Operator)>, CliError> {
    let osc_site = config
        .sites
        .iter()
        .position(|s| s.has_oscillator())
        .ok_or_else(|| CliError::validation("config has no oscillator"))?;
    let ops = phonlase::hilbert::spin_ops();
    let b = chain.b(osc_site)?;
    let bdag = b.dagger();
    let mut probes = vec![
        ("n".to_string(), bdag.dot(&b)?),
        ("n2".to_string(), bdag.dot(&bdag)?.dot(&b)?.dot(&b)?),
        ("b".to_string(), b),
    ];
    for j in 0..config.len() {
        probes.push((format!("sz{}", j + 1), chain.spin_op(j, &ops.sz)?));
    }
    Ok(probes)
}

/// Full-model time evolution of the minimal lasing chain:
/// columns `t, n1, g2_1, sz_1, sz_2`.
fn fig2_dynamics(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    let config = resolve_chain(file, presets::fig2_chain(40))?;
    let chain = ChainLayout::new(&config)?;
    let h = driven_full(&config, &chain)?;
    let diss = DissipatorSet::from_config(&config, &chain)?;
    let spec = file.resolve_spec(3000.0, recommended_step(&h, &diss), 400)?;
    let rho0 = initial_state(&config, &chain)?;
    let probes = minimal_probes(&config, &chain)?;
    let out = integrate(&rho0, &h, &diss, &spec, &probes)?;

    let mut table = CsvTable::new();
    table.push_column("t", out.record.times.clone());
    table.push_column("n1", real_series(&out.record, "n")?);
    table.push_column("g2_1", g2_series(&out.record)?);
    table.push_column("sz_1", real_series(&out.record, "sz1")?);
    table.push_column("sz_2", real_series(&out.record, "sz2")?);
    let path = out_dir.join("dynamics.csv");
    table.write(&path)?;

    let n_final = *real_series(&out.record, "n")?.last().unwrap_or(&f64::NAN);
    let mut metrics = serde_json::Map::new();
    metrics.insert("n_final".into(), json!(n_final));
    Ok(RecipeReport {
        files: vec!["dynamics.csv".into()],
        metrics,
        resolved_config: config,
        resolved_spec: spec,
        drive: None,
        truncation_flagged: out.record.truncation_flagged,
    })
}

fn write_sweep_csv(
    path: &Path,
    target: &SweepTarget,
    result: &phonlase::sweep::SweepResult,
    extra: &[(&str, Vec<f64>)],
) -> Result<(), CliError> {
    let mut table = CsvTable::new();
    table.push_column(&target.to_string(), result.values.clone());
    for (name, col) in &result.outputs {
        table.push_column(name, col.clone());
    }
    for (name, col) in extra {
        table.push_column(name, col.clone());
    }
    table.write(path)?;
    Ok(())
}

fn sweep_recipe(
    file: &ConfigFile,
    out_dir: &Path,
    preset: ChainConfig,
    experiment: Experiment,
    target: SweepTarget,
    default_values: &[f64],
    default_t_end: f64,
    drive: Option<LocalDriveParams>,
    normalize: bool,
) -> Result<RecipeReport, CliError> {
    let config = resolve_chain(file, preset)?;
    let chain = ChainLayout::new(&config)?;
    let dt_cap = match experiment {
        Experiment::MeanfieldArray => phonlase::lindblad::step_ceiling(config.f_max()),
        Experiment::LocalDrive => {
            let d = drive
                .ok_or_else(|| CliError::validation("localdrive recipe needs [drive]"))?;
            let h = phonlase::model::driven_local(&config, &d, &chain)?;
            let diss = DissipatorSet::from_config(&config, &chain)?;
            recommended_step(&h, &diss)
        }
        _ => {
            let h = driven_full(&config, &chain)?;
            let diss = DissipatorSet::from_config(&config, &chain)?;
            recommended_step(&h, &diss)
        }
    };
    let spec = file.resolve_spec(default_t_end, dt_cap, 200)?;
    let values = file
        .recipe
        .scan_values
        .clone()
        .unwrap_or_else(|| default_values.to_vec());
    let plan = SweepPlan {
        target,
        values,
        experiment,
        spec,
        drive,
        seed_amp: file.recipe.seed_amp.unwrap_or(0.1),
    };
    let result = run_sweep(&plan, &config)?;
    for (v, e) in result.values.iter().zip(&result.errors) {
        if let Some(e) = e {
            log::warn!("sweep point {v} failed: {e}");
        }
    }

    let mut extra = Vec::new();
    if normalize {
        let n_norm = minmax_normalize(result.column("n_ss")?)?;
        extra.push(("n_norm", n_norm));
    }
    let path = out_dir.join("scan.csv");
    write_sweep_csv(&path, &plan.target, &result, &extra)?;

    let mut metrics = serde_json::Map::new();
    let n_ss = result.column("n_ss")?;
    if let Some((idx, _)) = n_ss
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
    {
        metrics.insert("argmax_value".into(), json!(result.values[idx]));
        metrics.insert("n_ss_max".into(), json!(n_ss[idx]));
    }
    metrics.insert(
        "failed_points".into(),
        json!(result.errors.iter().flatten().count()),
    );
    Ok(RecipeReport {
        files: vec!["scan.csv".into()],
        metrics,
        resolved_config: config,
        resolved_spec: plan.spec,
        drive: plan.drive,
        truncation_flagged: false,
    })
}

/// Steady-state phonon number against the drive frequency Ω₁.
fn fig2_omega_scan(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    sweep_recipe(
        file,
        out_dir,
        presets::fig2_chain(40),
        Experiment::MinimalCase1,
        SweepTarget::BondBigOmega(0),
        &[7.0, 8.0, 8.5, 9.0, 9.5, 10.0, 11.0],
        3000.0,
        None,
        false,
    )
}

/// Min-max normalized steady-state phonon number against J₁.
fn fig2_threshold(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    sweep_recipe(
        file,
        out_dir,
        presets::fig2_chain(40),
        Experiment::MinimalCase1,
        SweepTarget::BondAmp(0),
        &[0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08],
        3000.0,
        None,
        true,
    )
}

/// Relax under the case's effective Hamiltonian to the steady state.
fn effective_steady_state(
    config: &ChainConfig,
    case: ResonanceCase,
    file: &ConfigFile,
    default_t_end: f64,
) -> Result<(DensityMatrix, TrajectoryRecord, IntegrationSpec), CliError> {
    let chain = ChainLayout::new(config)?;
    let h_eff = match case {
        ResonanceCase::CaseI => effective_hamiltonian_case1(config, &chain)?,
        ResonanceCase::CaseII => effective_hamiltonian_case2(config, &chain)?,
    };
    let diss = DissipatorSet::from_config(config, &chain)?;
    let generator = effective_generator(h_eff, &diss);
    let spec = file.resolve_spec(default_t_end, recommended_step(&generator, &diss), 200)?;
    let rho0 = initial_state(config, &chain)?;
    let probes = minimal_probes(config, &chain)?;
    let out = integrate(&rho0, &generator, &diss, &spec, &probes)?;
    Ok((out.final_state, out.record, spec))
}

/// Emission spectra below and above threshold from the effective-model
/// steady states; one `omega,S` grid file per drive amplitude.
fn fig2_spectrum(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    let base = resolve_chain(file, presets::fig2_chain(40))?;
    let j_values = file.recipe.j_values.clone().unwrap_or_else(|| vec![0.01, 0.08]);
    let window = SpectrumWindow {
        omega_span: file.recipe.spectrum_span.unwrap_or(60.0 * base.gamma_mech),
        n_omega: file.recipe.spectrum_points.unwrap_or(4097),
        tau_max: None,
    };

    let mut files = Vec::new();
    let mut summary_j = Vec::new();
    let mut summary_fwhm = Vec::new();
    let mut summary_c0 = Vec::new();
    let mut summary_parseval = Vec::new();
    let mut flagged = false;
    let mut last_spec = None;
    for &j_amp in &j_values {
        let mut config = base.clone();
        config.bonds[0].j_amp = j_amp;
        let (rho_ss, record, spec) =
            effective_steady_state(&config, ResonanceCase::CaseI, file, 6000.0)?;
        flagged |= record.truncation_flagged;
        last_spec = Some(spec);
        let spectrum = power_spectrum(&config, ResonanceCase::CaseI, &rho_ss, &window)?;
        let fname = format!("spectrum_J{}.csv", trim_value(j_amp));
        let mut table = CsvTable::new();
        table.push_column("omega", spectrum.omegas.clone());
        table.push_column("S", spectrum.s_values.clone());
        table.write(&out_dir.join(&fname))?;
        files.push(fname);
        summary_j.push(j_amp);
        summary_fwhm.push(spectrum.fwhm);
        summary_c0.push(spectrum.c0);
        summary_parseval.push(spectrum.parseval_integral);
    }
    let mut table = CsvTable::new();
    table.push_column("j_amp", summary_j.clone());
    table.push_column("fwhm", summary_fwhm.clone());
    table.push_column("c0", summary_c0.clone());
    table.push_column("parseval", summary_parseval.clone());
    table.write(&out_dir.join("summary.csv"))?;
    files.push("summary.csv".into());

    let mut metrics = serde_json::Map::new();
    if summary_fwhm.len() >= 2 {
        let narrowing = summary_fwhm[0] / summary_fwhm[summary_fwhm.len() - 1];
        metrics.insert("fwhm_narrowing_ratio".into(), json!(narrowing));
    }
    Ok(RecipeReport {
        files,
        metrics,
        resolved_config: base,
        resolved_spec: last_spec.expect("at least one spectrum run"),
        drive: None,
        truncation_flagged: flagged,
    })
}

fn trim_value(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

fn write_wigner_csv(
    path: &Path,
    grid: &phonlase::observables::WignerGrid,
) -> Result<(), CliError> {
    let mut xs = Vec::with_capacity(grid.n_points * grid.n_points);
    let mut ps = Vec::with_capacity(grid.n_points * grid.n_points);
    let mut ws = Vec::with_capacity(grid.n_points * grid.n_points);
    for ix in 0..grid.n_points {
        for ip in 0..grid.n_points {
            xs.push(grid.x_at(ix));
            ps.push(grid.p_at(ip));
            ws.push(grid.values[[ix, ip]]);
        }
    }
    let mut table = CsvTable::new();
    table.push_column("x", xs);
    table.push_column("p", ps);
    table.push_column("W", ws);
    table.write(path)?;
    Ok(())
}

/// Oscillator Wigner map of the random-phase steady state.
fn fig2_wigner(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    let config = resolve_chain(file, presets::fig2_chain(40))?;
    let (rho_ss, record, spec) =
        effective_steady_state(&config, ResonanceCase::CaseI, file, 6000.0)?;
    let chain = ChainLayout::new(&config)?;
    let osc_sub = chain
        .osc_subsystem(0)
        .ok_or_else(|| CliError::validation("site 1 has no oscillator"))?;
    let rho_osc = partial_trace(&rho_ss, &[osc_sub])?;
    let n_max = config.sites[0].n_max;
    let mut grid_spec = WignerGridSpec::default_for(n_max);
    if let Some(n) = file.recipe.wigner_points {
        grid_spec.n_points = n;
    }
    let grid = wigner(&rho_osc, &grid_spec)?;
    write_wigner_csv(&out_dir.join("wigner.csv"), &grid)?;

    let mut metrics = serde_json::Map::new();
    metrics.insert("ring_score".into(), json!(ring_symmetry_score(&grid).ok()));
    metrics.insert("g2_ss".into(), json!(g2_zero(&rho_osc).ok()));
    metrics.insert("mass".into(), json!(grid.mass()));
    Ok(RecipeReport {
        files: vec!["wigner.csv".into()],
        metrics,
        resolved_config: config,
        resolved_spec: spec,
        drive: None,
        truncation_flagged: record.truncation_flagged,
    })
}

/// Phase-locked minimal chain: dynamics plus the steady-state Wigner map.
fn figs1_phaselocked(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    let config = resolve_chain(file, presets::figs1_chain(40))?;
    let (rho_ss, record, spec) =
        effective_steady_state(&config, ResonanceCase::CaseII, file, 6000.0)?;

    let b_series = record.get("b")?;
    let mut table = CsvTable::new();
    table.push_column("t", record.times.clone());
    table.push_column("n1", real_series(&record, "n")?);
    table.push_column("g2_1", g2_series(&record)?);
    table.push_column("b1_re", b_series.iter().map(|z| z.re).collect());
    table.push_column("b1_im", b_series.iter().map(|z| z.im).collect());
    table.write(&out_dir.join("dynamics.csv"))?;

    let chain = ChainLayout::new(&config)?;
    let osc_sub = chain
        .osc_subsystem(0)
        .ok_or_else(|| CliError::validation("site 1 has no oscillator"))?;
    let rho_osc = partial_trace(&rho_ss, &[osc_sub])?;
    let mut grid_spec = WignerGridSpec::default_for(config.sites[0].n_max);
    if let Some(n) = file.recipe.wigner_points {
        grid_spec.n_points = n;
    }
    let grid = wigner(&rho_osc, &grid_spec)?;
    write_wigner_csv(&out_dir.join("wigner.csv"), &grid)?;

    let n_ss = real_series(&record, "n")?.last().copied().unwrap_or(f64::NAN);
    let b_ss = b_series.last().copied().unwrap_or(C64::new(0.0, 0.0));
    let mut metrics = serde_json::Map::new();
    metrics.insert("n_ss".into(), json!(n_ss));
    metrics.insert("b_abs_ss".into(), json!(b_ss.norm()));
    metrics.insert(
        "phase_lock_ratio".into(),
        json!(b_ss.norm() / n_ss.max(1e-12).sqrt()),
    );
    metrics.insert("ring_score".into(), json!(ring_symmetry_score(&grid).ok()));
    Ok(RecipeReport {
        files: vec!["dynamics.csv".into(), "wigner.csv".into()],
        metrics,
        resolved_config: config,
        resolved_spec: spec,
        drive: None,
        truncation_flagged: record.truncation_flagged,
    })
}

fn meanfield_recipe(
    file: &ConfigFile,
    out_dir: &Path,
    preset: ChainConfig,
    default_t_end: f64,
) -> Result<RecipeReport, CliError> {
    let config = resolve_chain(file, preset)?;
    let spec = file.resolve_spec(
        default_t_end,
        phonlase::lindblad::step_ceiling(config.f_max()),
        600,
    )?;
    let seed = file.recipe.seed_amp.unwrap_or(0.1);
    let s0 = MeanFieldState::seeded(&config, seed)?;
    let out = integrate_meanfield(&s0, &config, &spec, 0.0)?;

    let n_sites = config.len();
    let mut table = CsvTable::new();
    table.push_column("t", out.record.times.clone());
    for j in 1..=n_sites {
        table.push_column(&format!("n{j}"), real_series(&out.record, &format!("n{j}"))?);
    }
    for j in 1..=n_sites {
        table.push_column(
            &format!("g2_{j}"),
            real_series(&out.record, &format!("g2_{j}"))?,
        );
    }
    for j in 1..=n_sites {
        let b = out.record.get(&format!("b{j}"))?;
        let n = out.record.get(&format!("n{j}"))?;
        let phase: Vec<f64> = b
            .iter()
            .zip(n)
            .map(|(b, n)| {
                let floor = PHASE_FLOOR_FRACTION * (n.re + 1e-12).sqrt();
                if b.norm() >= floor {
                    b.arg()
                } else {
                    f64::NAN
                }
            })
            .collect();
        table.push_column(&format!("phase_{j}"), phase);
    }
    table.push_column("r_k", real_series(&out.record, "r_k")?);
    table.write(&out_dir.join("dynamics.csv"))?;

    // pairwise instantaneous phase differences of the active sites
    let mut pair_table = CsvTable::new();
    pair_table.push_column("t", out.record.times.clone());
    for ((j, k), series) in &out.sync.pair_diffs {
        pair_table.push_column(
            &format!("dphi_{}_{}", j + 1, k + 1),
            series.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        );
    }
    pair_table.write(&out_dir.join("pair_phases.csv"))?;

    let late_rk: Vec<f64> = out
        .sync
        .r_k
        .iter()
        .skip(out.sync.r_k.len() * 9 / 10)
        .filter_map(|r| *r)
        .collect();
    let rk_mean = late_rk.iter().sum::<f64>() / late_rk.len().max(1) as f64;
    let mut metrics = serde_json::Map::new();
    metrics.insert(
        "active_sites".into(),
        json!(out.active_sites.iter().map(|j| j + 1).collect::<Vec<_>>()),
    );
    metrics.insert("r_k_late_mean".into(), json!(rk_mean));
    Ok(RecipeReport {
        files: vec!["dynamics.csv".into(), "pair_phases.csv".into()],
        metrics,
        resolved_config: config,
        resolved_spec: spec,
        drive: None,
        truncation_flagged: false,
    })
}

/// Ten-site synchronization array (mean-field kinetic equations).
fn fig3_array_recipe(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    meanfield_recipe(file, out_dir, presets::fig3_array(), 15000.0)
}

/// On-demand array with oscillators on odd sites only.
fn figs2_array_recipe(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    meanfield_recipe(file, out_dir, presets::figs2_array(), 6000.0)
}

/// Steady-state response of the locally driven two-spin laser against the
/// drive frequency ν, with ε₀ = (ν/2)·x₀ locked to the first J₀ zero.
fn figs3_localdrive(file: &ConfigFile, out_dir: &Path) -> Result<RecipeReport, CliError> {
    let (preset, default_drive) = presets::figs3_localdrive(30);
    let drive = file.drive_params().unwrap_or(default_drive);
    sweep_recipe(
        file,
        out_dir,
        preset,
        Experiment::LocalDrive,
        SweepTarget::DriveNu,
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 14.0],
        2500.0,
        Some(drive),
        false,
    )
}

/// Plan document for the `sweep` subcommand.
#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub experiment: String,
    pub target: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub seed_amp: Option<f64>,
    pub config: ConfigFile,
    #[serde(default)]
    pub integration: crate::config::IntegrationSection,
    pub drive: Option<crate::config::DriveSection>,
}

pub fn run_plan_file(path: &Path, out_dir: &Path) -> Result<RecipeReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let plan_file: PlanFile =
        toml::from_str(&text).map_err(|e| CliError::validation(format!("plan parse error: {e}")))?;
    let config = plan_file.config.chain_config()?;
    let experiment: Experiment = plan_file
        .experiment
        .parse()
        .map_err(|e: CoreError| CliError::validation(e.to_string()))?;
    let target: SweepTarget = plan_file
        .target
        .parse()
        .map_err(|e: CoreError| CliError::validation(e.to_string()))?;
    let drive = plan_file
        .drive
        .as_ref()
        .map(|d| match d.eps0 {
            Some(eps0) => LocalDriveParams { eps0, nu: d.nu },
            None => LocalDriveParams::at_bessel_zero(d.nu),
        });

    let chain = ChainLayout::new(&config)?;
    let dt_cap = match experiment {
        Experiment::MeanfieldArray => phonlase::lindblad::step_ceiling(config.f_max()),
        Experiment::LocalDrive => {
            let d = drive
                .ok_or_else(|| CliError::validation("localdrive plans need [drive]"))?;
            let h = phonlase::model::driven_local(&config, &d, &chain)?;
            let diss = DissipatorSet::from_config(&config, &chain)?;
            recommended_step(&h, &diss)
        }
        _ => {
            let h = driven_full(&config, &chain)?;
            let diss = DissipatorSet::from_config(&config, &chain)?;
            recommended_step(&h, &diss)
        }
    };
    let mut shadow = plan_file.config.clone();
    shadow.integration = plan_file.integration.clone();
    let spec = shadow.resolve_spec(1000.0, dt_cap, 200)?;

    let plan = SweepPlan {
        target,
        values: plan_file.values.clone(),
        experiment,
        spec,
        drive,
        seed_amp: plan_file.seed_amp.unwrap_or(0.1),
    };
    let result = run_sweep(&plan, &config)?;
    write_sweep_csv(&out_dir.join("scan.csv"), &plan.target, &result, &[])?;

    let mut metrics = serde_json::Map::new();
    metrics.insert(
        "failed_points".into(),
        json!(result.errors.iter().flatten().count()),
    );
    Ok(RecipeReport {
        files: vec!["scan.csv".into()],
        metrics,
        resolved_config: config,
        resolved_spec: plan.spec,
        drive: plan.drive,
        truncation_flagged: false,
    })
}

/// Assemble the run manifest. The `wall_time_s` entry is informational and
/// the only non-reproducible field; every CSV is a pure function of the
/// resolved configuration.
pub fn manifest(
    recipe: &str,
    report: &RecipeReport,
    out_dir: &Path,
    wall_time_s: f64,
) -> serde_json::Value {
    let cfg = ConfigFile::from_chain(&report.resolved_config);
    json!({
        "software": {
            "name": "phonlase",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "recipe": recipe,
        "resolved_config": {
            "chain": serde_json::to_value(&cfg).expect("config serializes"),
            "integration": {
                "t_end": report.resolved_spec.t_end,
                "dt": report.resolved_spec.dt,
                "sample_every": report.resolved_spec.sample_every,
                "hermitize_every": report.resolved_spec.hermitize_every,
                "renormalize_trace": report.resolved_spec.renormalize_trace,
            },
            "drive": report.drive.map(|d| json!({"eps0": d.eps0, "nu": d.nu})),
        },
        "outputs": report.files,
        "metrics": report.metrics,
        "truncation_flagged": report.truncation_flagged,
        "wall_time_s": wall_time_s,
        "out_dir": out_dir.display().to_string(),
    })
}

pub fn default_out_dir(recipe: RecipeName) -> PathBuf {
    PathBuf::from("out").join(recipe.name())
}
