//! Chain parameters and every Hamiltonian of the simulated system: the full
//! time-dependent chain, the minimal two-spin model, the Case I/II effective
//! Hamiltonians, the locally driven two-spin model, and its Floquet effective
//! Hamiltonians.
//!
//! ħ = 1 and all frequencies/times are in units of the reference frequency ω̄.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, embed, spin_ops, thermal_state, DensityMatrix, Operator, SpaceLayout,
    Subsystem,
};

/// First zero of the zeroth-order Bessel function J₀.
pub const BESSEL_J0_FIRST_ZERO: f64 = 2.4048;

/// Resonance mismatches up to this size (units ω̄) are accepted silently;
/// larger ones warn but proceed — robustness to detuning is part of the
/// physics being simulated.
pub const RESONANCE_TOL: f64 = 1e-3;

/// Physical parameters of one chain site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteParams {
    /// Spin gap Δ.
    pub delta: f64,
    /// Oscillator frequency ω; 0 means no oscillator at this site.
    pub omega_m: f64,
    /// Spin-mechanical coupling λ.
    pub lambda: f64,
    /// Fock truncation for this site's oscillator (exact solver only).
    pub n_max: usize,
}

impl SiteParams {
    /// Spin-only site (no oscillator).
    pub fn bare_spin(delta: f64) -> Self {
        SiteParams { delta, omega_m: 0.0, lambda: 0.0, n_max: 0 }
    }

    pub fn with_oscillator(delta: f64, omega_m: f64, lambda: f64, n_max: usize) -> Self {
        SiteParams { delta, omega_m, lambda, n_max }
    }

    pub fn has_oscillator(&self) -> bool {
        self.omega_m > 0.0
    }
}

/// Drive parameters of one bond: `J cos(Ω t) σ_j^x σ_{j+1}^x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondParams {
    pub j_amp: f64,
    pub big_omega: f64,
}

/// Full parameter set of an N-site chain, dissipation included.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub sites: Vec<SiteParams>,
    pub bonds: Vec<BondParams>,
    /// Spin decay rate Γ.
    pub gamma_spin: f64,
    /// Mechanical damping rate γ.
    pub gamma_mech: f64,
    /// Spin reservoir occupation n̄ˢ.
    pub nbar_spin: f64,
    /// Mechanical reservoir occupation n̄ᵐ.
    pub nbar_mech: f64,
}

impl ChainConfig {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Check every structural invariant; warns (does not fail) when the
    /// weak-coupling assumption λ/ω < 0.2 of the effective models is violated.
    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::InvalidConfig("sites list is empty".into()));
        }
        if self.bonds.len() + 1 != self.sites.len() {
            return Err(Error::InvalidConfig(format!(
                "bonds length {} must be sites length {} minus one",
                self.bonds.len(),
                self.sites.len()
            )));
        }
        for (j, s) in self.sites.iter().enumerate() {
            if !s.delta.is_finite() || !s.omega_m.is_finite() || !s.lambda.is_finite() {
                return Err(Error::InvalidConfig(format!("site {j} has non-finite parameters")));
            }
            if s.lambda < 0.0 {
                return Err(Error::InvalidConfig(format!("site {j} has negative lambda")));
            }
            if s.lambda > 0.0 && !s.has_oscillator() {
                return Err(Error::InvalidConfig(format!(
                    "site {j} has lambda > 0 but no oscillator (omega_m = 0)"
                )));
            }
            if s.has_oscillator() {
                if s.delta >= s.omega_m {
                    return Err(Error::InvalidConfig(format!(
                        "site {j} violates delta < omega_m ({} >= {})",
                        s.delta, s.omega_m
                    )));
                }
                if s.n_max < 1 {
                    return Err(Error::InvalidConfig(format!(
                        "site {j} has an oscillator but n_max = {}",
                        s.n_max
                    )));
                }
                if s.lambda / s.omega_m >= 0.2 {
                    log::warn!(
                        "site {j}: lambda/omega_m = {:.3} >= 0.2; the effective \
                         Hamiltonians assume weak spin-mechanical coupling",
                        s.lambda / s.omega_m
                    );
                }
            }
        }
        for (j, b) in self.bonds.iter().enumerate() {
            if !b.j_amp.is_finite() || !b.big_omega.is_finite() {
                return Err(Error::InvalidConfig(format!("bond {j} has non-finite parameters")));
            }
        }
        for (name, v) in [
            ("gamma_spin", self.gamma_spin),
            ("gamma_mech", self.gamma_mech),
            ("nbar_spin", self.nbar_spin),
            ("nbar_mech", self.nbar_mech),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Largest frequency appearing in the time-dependent model; sets the
    /// integration step ceiling dt ≤ 2π/(50·f_max).
    pub fn f_max(&self) -> f64 {
        let mut f: f64 = 0.0;
        for s in &self.sites {
            f = f.max(s.delta.abs()).max(s.omega_m);
        }
        for b in &self.bonds {
            f = f.max(b.big_omega.abs());
        }
        f.max(self.gamma_spin).max(self.gamma_mech).max(1e-12)
    }
}

/// Amplitude and frequency of the local σᶻ drive of the two-spin model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDriveParams {
    pub eps0: f64,
    pub nu: f64,
}

impl LocalDriveParams {
    /// Drive locked to the first J₀ zero: ε₀ = (ν/2)·x₀.
    pub fn at_bessel_zero(nu: f64) -> Self {
        LocalDriveParams { eps0: 0.5 * nu * BESSEL_J0_FIRST_ZERO, nu }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite() && self.eps0.is_finite()) {
            return Err(Error::InvalidConfig("local drive requires nu > 0 and finite eps0".into()));
        }
        Ok(())
    }
}

/// Which blue-sideband resonance the effective model selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceCase {
    /// Random-phase (doughnut-shaped) lasing: Ω = Δ_j + Δ_{j+1} + ω.
    CaseI,
    /// Phase-locked lasing: Ω = Δ_j + Δ_{j+1}, ω = 2Ω.
    CaseII,
}

impl std::fmt::Display for ResonanceCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResonanceCase::CaseI => write!(f, "case1"),
            ResonanceCase::CaseII => write!(f, "case2"),
        }
    }
}

/// Resonance condition of one bond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceTarget {
    pub big_omega: f64,
    /// Case II additionally constrains the oscillator frequency.
    pub omega_m_required: Option<f64>,
}

/// Resonant drive frequency for bond `bond_index`.
///
/// Case I: Ω = Δ_j + Δ_{j+1} + ω_k, with k the coupled oscillator on the bond
/// (left site preferred when both are coupled); no constraint on ω itself.
/// Case II: Ω = Δ_j + Δ_{j+1} and ω = 2Ω.
pub fn resonance_frequency(
    case: ResonanceCase,
    bond_index: usize,
    config: &ChainConfig,
) -> Result<ResonanceTarget> {
    if bond_index >= config.bonds.len() {
        return Err(Error::IndexOutOfRange { index: bond_index, len: config.bonds.len() });
    }
    let delta_sum = config.sites[bond_index].delta + config.sites[bond_index + 1].delta;
    match case {
        ResonanceCase::CaseI => {
            let omega_k = bond_oscillators(config, bond_index)
                .first()
                .map(|&k| config.sites[k].omega_m)
                .unwrap_or(0.0);
            Ok(ResonanceTarget { big_omega: delta_sum + omega_k, omega_m_required: None })
        }
        ResonanceCase::CaseII => Ok(ResonanceTarget {
            big_omega: delta_sum,
            omega_m_required: Some(2.0 * delta_sum),
        }),
    }
}

/// Sites of bond `j` that carry a coupled oscillator (λ > 0), left first.
fn bond_oscillators(config: &ChainConfig, bond: usize) -> Vec<usize> {
    [bond, bond + 1]
        .into_iter()
        .filter(|&k| config.sites[k].has_oscillator() && config.sites[k].lambda > 0.0)
        .collect()
}

/// Subsystem bookkeeping for a chain: one spin per site, one oscillator per
/// site with ω > 0, interleaved in site order. Sites without an oscillator
/// occupy no Hilbert-space factor.
#[derive(Debug, Clone)]
pub struct ChainLayout {
    layout: Arc<SpaceLayout>,
    spin_sub: Vec<usize>,
    osc_sub: Vec<Option<usize>>,
}

impl ChainLayout {
    pub fn new(config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        let mut subs = Vec::new();
        let mut spin_sub = Vec::new();
        let mut osc_sub = Vec::new();
        for s in &config.sites {
            spin_sub.push(subs.len());
            subs.push(Subsystem::spin());
            if s.has_oscillator() {
                osc_sub.push(Some(subs.len()));
                subs.push(Subsystem::oscillator(s.n_max));
            } else {
                osc_sub.push(None);
            }
        }
        Ok(ChainLayout { layout: SpaceLayout::new(subs)?, spin_sub, osc_sub })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn n_sites(&self) -> usize {
        self.spin_sub.len()
    }

    pub fn spin_subsystem(&self, site: usize) -> usize {
        self.spin_sub[site]
    }

    pub fn osc_subsystem(&self, site: usize) -> Option<usize> {
        self.osc_sub[site]
    }

    /// Check that this layout was built for `config`.
    pub fn matches(&self, config: &ChainConfig) -> Result<()> {
        if config.sites.len() != self.n_sites() {
            return Err(Error::Topology(format!(
                "layout has {} sites, config has {}",
                self.n_sites(),
                config.sites.len()
            )));
        }
        for (j, s) in config.sites.iter().enumerate() {
            match (s.has_oscillator(), self.osc_sub[j]) {
                (true, Some(sub)) => {
                    let dim = self.layout.subsystems()[sub].dim;
                    if dim != s.n_max + 1 {
                        return Err(Error::Topology(format!(
                            "site {j}: layout oscillator dim {dim} vs n_max + 1 = {}",
                            s.n_max + 1
                        )));
                    }
                }
                (false, None) => {}
                _ => {
                    return Err(Error::Topology(format!(
                        "site {j}: oscillator presence differs between layout and config"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Embed a spin operator on `site`.
    pub fn spin_op(&self, site: usize, local: &Array2<C64>) -> Result<Operator> {
        embed(local, self.spin_sub[site], &self.layout)
    }

    /// Embed an oscillator operator on `site`; errors when the site has none.
    pub fn osc_op(&self, site: usize, local: &Array2<C64>) -> Result<Operator> {
        let sub = self.osc_sub[site].ok_or_else(|| {
            Error::Topology(format!("site {site} has no oscillator"))
        })?;
        embed(local, sub, &self.layout)
    }

    pub fn osc_n_max(&self, site: usize) -> Option<usize> {
        self.osc_sub[site].map(|sub| self.layout.subsystems()[sub].dim - 1)
    }

    /// Annihilation operator of the oscillator at `site`.
    pub fn b(&self, site: usize) -> Result<Operator> {
        let n_max = self.osc_n_max(site).ok_or_else(|| {
            Error::Topology(format!("site {site} has no oscillator"))
        })?;
        self.osc_op(site, &annihilation(n_max)?)
    }
}

/// A Hamiltonian of the form `H(t) = H₀ + Σ_d cos(Ω_d t)·X_d`.
#[derive(Debug, Clone)]
pub struct DrivenHamiltonian {
    static_part: Operator,
    drives: Vec<(f64, Operator)>,
    f_max: f64,
}

impl DrivenHamiltonian {
    pub fn new(static_part: Operator, drives: Vec<(f64, Operator)>, f_max: f64) -> Self {
        DrivenHamiltonian { static_part, drives, f_max }
    }

    pub fn time_independent(h: Operator, f_max: f64) -> Self {
        DrivenHamiltonian { static_part: h, drives: Vec::new(), f_max }
    }

    pub fn at(&self, t: f64) -> Operator {
        let mut h = self.static_part.clone();
        for (omega, x) in &self.drives {
            h.add_scaled(C64::new((omega * t).cos(), 0.0), x)
                .expect("drive terms share the static part's layout");
        }
        h
    }

    pub fn static_part(&self) -> &Operator {
        &self.static_part
    }

    pub fn drives(&self) -> &[(f64, Operator)] {
        &self.drives
    }

    /// Largest frequency in the model, for the integration-step ceiling.
    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        self.static_part.layout()
    }

    /// Gershgorin bound on the eigenvalue spread `E_max − E_min` of `H(t)`,
    /// maximized over the drive phases. The von Neumann part of the master
    /// equation has spectral radius equal to the spread, which on a truncated
    /// Fock ladder reaches ω·n_max — far beyond any single model frequency —
    /// and is what limits explicit step sizes.
    pub fn spectral_spread_bound(&self) -> f64 {
        let d = self.static_part.layout().total_dim();
        let h0 = self.static_part.matrix();
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for i in 0..d {
            let center = h0[[i, i]].re;
            let mut radius = 0.0;
            for j in 0..d {
                if i != j {
                    radius += h0[[i, j]].norm();
                }
            }
            // drive terms oscillate between ±X, so every entry goes into the radius
            for (_, x) in &self.drives {
                let m = x.matrix();
                for j in 0..d {
                    radius += m[[i, j]].norm();
                }
            }
            hi = hi.max(center + radius);
            lo = lo.min(center - radius);
        }
        (hi - lo).max(0.0)
    }
}

/// Structure of the full chain Hamiltonian:
/// `H(t) = Σ_j [Δ_j/2 σ_j^z + ω_j b_j†b_j − λ_j σ_j^z (b_j† + b_j)]
///        + Σ_j J_j cos(Ω_j t) σ_j^x σ_{j+1}^x`.
pub fn driven_full(config: &ChainConfig, chain: &ChainLayout) -> Result<DrivenHamiltonian> {
    chain.matches(config)?;
    let ops = spin_ops();
    let mut h0 = Operator::zeros(chain.layout().clone());
    for (j, s) in config.sites.iter().enumerate() {
        h0.add_scaled(C64::new(0.5 * s.delta, 0.0), &chain.spin_op(j, &ops.sz)?)?;
        if s.has_oscillator() {
            let b = chain.b(j)?;
            let bdag = b.dagger();
            h0.add_scaled(C64::new(s.omega_m, 0.0), &bdag.dot(&b)?)?;
            if s.lambda != 0.0 {
                let mut x = bdag;
                x.add_scaled(C64::new(1.0, 0.0), &b)?;
                let coupling = chain.spin_op(j, &ops.sz)?.dot(&x)?;
                h0.add_scaled(C64::new(-s.lambda, 0.0), &coupling)?;
            }
        }
    }
    let mut drives = Vec::new();
    for (j, bond) in config.bonds.iter().enumerate() {
        if bond.j_amp == 0.0 {
            continue;
        }
        let sxsx = chain.spin_op(j, &ops.sx)?.dot(&chain.spin_op(j + 1, &ops.sx)?)?;
        let mut x = sxsx;
        x.scale(C64::new(bond.j_amp, 0.0));
        drives.push((bond.big_omega, x));
    }
    Ok(DrivenHamiltonian::new(h0, drives, config.f_max()))
}

/// Full chain Hamiltonian evaluated at time `t`.
pub fn full_hamiltonian(config: &ChainConfig, t: f64, chain: &ChainLayout) -> Result<Operator> {
    Ok(driven_full(config, chain)?.at(t))
}

/// Check that a config is the minimal two-spin model: N = 2 with the
/// oscillator on site 1 only.
fn require_minimal_topology(config: &ChainConfig) -> Result<()> {
    if config.sites.len() != 2 {
        return Err(Error::Topology(format!(
            "minimal model needs exactly 2 sites, found {}",
            config.sites.len()
        )));
    }
    if !config.sites[0].has_oscillator() || config.sites[1].has_oscillator() {
        return Err(Error::Topology(
            "minimal model needs the oscillator on site 1 only".into(),
        ));
    }
    Ok(())
}

/// Minimal two-spin Hamiltonian, assembled directly:
/// `H = ω₁ b†b + J₁ cos(Ω₁ t) σ₁^x σ₂^x − λ₁ σ₁^z (b† + b) + Σ_j Δ_j/2 σ_j^z`.
pub fn minimal_hamiltonian(config: &ChainConfig, t: f64, chain: &ChainLayout) -> Result<Operator> {
    chain.matches(config)?;
    require_minimal_topology(config)?;
    let ops = spin_ops();
    let s1 = config.sites[0];
    let bond = config.bonds[0];

    let b = chain.b(0)?;
    let bdag = b.dagger();
    let mut h = bdag.dot(&b)?;
    h.scale(C64::new(s1.omega_m, 0.0));

    let sxsx = chain.spin_op(0, &ops.sx)?.dot(&chain.spin_op(1, &ops.sx)?)?;
    h.add_scaled(C64::new(bond.j_amp * (bond.big_omega * t).cos(), 0.0), &sxsx)?;

    let mut x = bdag;
    x.add_scaled(C64::new(1.0, 0.0), &b)?;
    h.add_scaled(C64::new(-s1.lambda, 0.0), &chain.spin_op(0, &ops.sz)?.dot(&x)?)?;

    for j in 0..2 {
        h.add_scaled(
            C64::new(0.5 * config.sites[j].delta, 0.0),
            &chain.spin_op(j, &ops.sz)?,
        )?;
    }
    Ok(h)
}

fn warn_on_resonance_mismatch(case: ResonanceCase, config: &ChainConfig) {
    for (j, bond) in config.bonds.iter().enumerate() {
        if bond.j_amp == 0.0 {
            continue;
        }
        let delta_sum = config.sites[j].delta + config.sites[j + 1].delta;
        for k in bond_oscillators(config, j) {
            let omega_k = config.sites[k].omega_m;
            let mismatch = match case {
                ResonanceCase::CaseI => (bond.big_omega - (delta_sum + omega_k)).abs(),
                ResonanceCase::CaseII => (bond.big_omega - delta_sum)
                    .abs()
                    .max((omega_k - 2.0 * bond.big_omega).abs()),
            };
            if mismatch > RESONANCE_TOL {
                log::warn!(
                    "bond {j} misses the {case} resonance by {mismatch:.3e} ω̄ \
                     (oscillator at site {k}); proceeding"
                );
            }
        }
    }
}

/// Case I (random-phase) effective Hamiltonian:
/// `H = i Σ_j Σ_{k=j}^{j+1} (J_j λ_k/ω_k) σ_j⁺ σ_{j+1}⁺ b_k† + h.c.`
/// Sites without oscillators contribute no term.
pub fn effective_hamiltonian_case1(
    config: &ChainConfig,
    chain: &ChainLayout,
) -> Result<Operator> {
    chain.matches(config)?;
    warn_on_resonance_mismatch(ResonanceCase::CaseI, config);
    let raising = sideband_raising_part(config, chain)?;
    let mut h = raising.clone();
    h.scale(C64::new(0.0, 1.0));
    let mut dag = raising.dagger();
    dag.scale(C64::new(0.0, -1.0));
    h.add_scaled(C64::new(1.0, 0.0), &dag)?;
    Ok(h)
}

/// Case II (phase-locked) effective Hamiltonian:
/// `H = Σ_j (J_j/2) σ_j⁺σ_{j+1}⁺ − i Σ_j Σ_{k=j}^{j+1} (J_j λ_k/ω_k) σ_j⁺σ_{j+1}⁺ b_k† + h.c.`
pub fn effective_hamiltonian_case2(
    config: &ChainConfig,
    chain: &ChainLayout,
) -> Result<Operator> {
    chain.matches(config)?;
    warn_on_resonance_mismatch(ResonanceCase::CaseII, config);
    let ops = spin_ops();
    let mut a = Operator::zeros(chain.layout().clone());
    for (j, bond) in config.bonds.iter().enumerate() {
        if bond.j_amp == 0.0 {
            continue;
        }
        let pair = chain.spin_op(j, &ops.sp)?.dot(&chain.spin_op(j + 1, &ops.sp)?)?;
        a.add_scaled(C64::new(0.5 * bond.j_amp, 0.0), &pair)?;
    }
    let raising = sideband_raising_part(config, chain)?;
    a.add_scaled(C64::new(0.0, -1.0), &raising)?;
    let dag = a.dagger();
    let mut h = a;
    h.add_scaled(C64::new(1.0, 0.0), &dag)?;
    Ok(h)
}

/// `Σ_j Σ_{k=j}^{j+1} (J_j λ_k/ω_k) σ_j⁺ σ_{j+1}⁺ b_k†` — the raising half of
/// the blue-sideband interaction shared by both cases.
fn sideband_raising_part(config: &ChainConfig, chain: &ChainLayout) -> Result<Operator> {
    let ops = spin_ops();
    let mut a = Operator::zeros(chain.layout().clone());
    for (j, bond) in config.bonds.iter().enumerate() {
        if bond.j_amp == 0.0 {
            continue;
        }
        let pair = chain.spin_op(j, &ops.sp)?.dot(&chain.spin_op(j + 1, &ops.sp)?)?;
        for k in bond_oscillators(config, j) {
            let coef = bond.j_amp * config.sites[k].lambda / config.sites[k].omega_m;
            let term = pair.dot(&chain.b(k)?.dagger())?;
            a.add_scaled(C64::new(coef, 0.0), &term)?;
        }
    }
    Ok(a)
}

/// Check that a config is the locally driven model: N = 2 with the oscillator
/// coupled to spin 2 (the SM couples λ₁ to σ₂ᶻ while the drive acts on σ₁ᶻ).
fn require_local_drive_topology(config: &ChainConfig) -> Result<()> {
    if config.sites.len() != 2 {
        return Err(Error::Topology(format!(
            "local-drive model needs exactly 2 sites, found {}",
            config.sites.len()
        )));
    }
    if config.sites[0].has_oscillator() || !config.sites[1].has_oscillator() {
        return Err(Error::Topology(
            "local-drive model needs the oscillator on site 2 only".into(),
        ));
    }
    Ok(())
}

/// Structure of the locally driven two-spin Hamiltonian:
/// `H_L(t) = Σ_j Δ_j/2 σ_j^z + ω₁ b†b − λ₁ σ₂^z (b† + b)
///          + ε₀ cos(ν t) σ₁^z + J₁ σ₁^x σ₂^x`.
/// The spin-spin coupling is constant here (no cos(Ωt) factor).
pub fn driven_local(
    config: &ChainConfig,
    drive: &LocalDriveParams,
    chain: &ChainLayout,
) -> Result<DrivenHamiltonian> {
    chain.matches(config)?;
    require_local_drive_topology(config)?;
    drive.validate()?;
    let ops = spin_ops();
    let osc = config.sites[1];

    let mut h0 = Operator::zeros(chain.layout().clone());
    for j in 0..2 {
        h0.add_scaled(
            C64::new(0.5 * config.sites[j].delta, 0.0),
            &chain.spin_op(j, &ops.sz)?,
        )?;
    }
    let b = chain.b(1)?;
    let bdag = b.dagger();
    h0.add_scaled(C64::new(osc.omega_m, 0.0), &bdag.dot(&b)?)?;
    let mut x = bdag;
    x.add_scaled(C64::new(1.0, 0.0), &b)?;
    h0.add_scaled(C64::new(-osc.lambda, 0.0), &chain.spin_op(1, &ops.sz)?.dot(&x)?)?;

    let sxsx = chain.spin_op(0, &ops.sx)?.dot(&chain.spin_op(1, &ops.sx)?)?;
    h0.add_scaled(C64::new(config.bonds[0].j_amp, 0.0), &sxsx)?;

    let mut drive_op = chain.spin_op(0, &ops.sz)?;
    drive_op.scale(C64::new(drive.eps0, 0.0));

    // ε₀ itself is a rotation rate for the driven spin's phase, so it joins
    // the step-ceiling frequencies.
    let f_max = config.f_max().max(drive.nu).max(drive.eps0.abs());
    Ok(DrivenHamiltonian::new(h0, vec![(drive.nu, drive_op)], f_max))
}

/// Locally driven Hamiltonian at time `t`.
pub fn local_drive_hamiltonian(
    config: &ChainConfig,
    drive: &LocalDriveParams,
    t: f64,
    chain: &ChainLayout,
) -> Result<Operator> {
    Ok(driven_local(config, drive, chain)?.at(t))
}

/// Floquet (period-averaged) effective Hamiltonian of the locally driven
/// model. The σᶻ drive renormalizes the spin-spin coupling by Bessel factors:
///
/// Case I  (`ω₁ = 8ω̄, ν = 12ω̄`): `2i (J₁λ₁/ω₁) J_β(2ε₀/ν) σ₁⁺σ₂⁺b† + h.c.`
/// Case II (`ω₁ = 8ω̄, ν = 2ω̄`):
///   `J₁ J_α(2ε₀/ν) σ₁⁺σ₂⁺ − 2i (J₁λ₁/ω₁) J_α(2ε₀/ν) σ₁⁺σ₂⁺b† + h.c.`
///
/// with β = −(ΔΣ + ω₁)/ν, α = −ΔΣ/ν, δ = −(ΔΣ − ω₁)/ν and ΔΣ = Δ₁ + Δ₂.
/// Indices required by the selected case must be integers.
///
/// `enforce_drive_ratio` pins `ε₀ = (ν/2)·x₀` with x₀ the first J₀ zero (the
/// condition that removes the static σ₁⁺σ₂⁻ exchange term).
pub fn floquet_effective(
    case: ResonanceCase,
    config: &ChainConfig,
    drive: &LocalDriveParams,
    chain: &ChainLayout,
    enforce_drive_ratio: bool,
) -> Result<Operator> {
    chain.matches(config)?;
    require_local_drive_topology(config)?;
    drive.validate()?;
    let d1 = config.sites[0].delta;
    let d2 = config.sites[1].delta;
    if (d1 - d2).abs() > 1e-9 {
        return Err(Error::Topology(format!(
            "Floquet effective model assumes identical spin gaps, got {d1} and {d2}"
        )));
    }
    let x = 2.0 * drive.eps0 / drive.nu;
    if enforce_drive_ratio && (x - BESSEL_J0_FIRST_ZERO).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "drive ratio 2ε₀/ν = {x:.6} is not the first J₀ zero {BESSEL_J0_FIRST_ZERO}"
        )));
    }
    let delta_sum = d1 + d2;
    let omega = config.sites[1].omega_m;
    let nu = drive.nu;

    let alpha = -delta_sum / nu;
    let beta = -(delta_sum + omega) / nu;
    let delta_idx = -(delta_sum - omega) / nu;

    let required: &[(&str, f64)] = match case {
        ResonanceCase::CaseI => &[("beta", beta)],
        ResonanceCase::CaseII => &[("alpha", alpha), ("delta", delta_idx)],
    };
    let mut failed = Vec::new();
    for (name, v) in required {
        if (v - v.round()).abs() > 1e-9 {
            failed.push(format!("{name} = {v:.6}"));
        }
    }
    if !failed.is_empty() {
        return Err(Error::NonIntegerBesselIndex(failed.join(", ")));
    }

    let ops = spin_ops();
    let pair = chain.spin_op(0, &ops.sp)?.dot(&chain.spin_op(1, &ops.sp)?)?;
    let sideband = pair.dot(&chain.b(1)?.dagger())?;
    let g = config.bonds[0].j_amp * config.sites[1].lambda / omega;

    let mut a = Operator::zeros(chain.layout().clone());
    match case {
        ResonanceCase::CaseI => {
            let coef = 2.0 * g * bessel_j(beta.round() as i32, x)?;
            a.add_scaled(C64::new(0.0, coef), &sideband)?;
        }
        ResonanceCase::CaseII => {
            let ja = bessel_j(alpha.round() as i32, x)?;
            a.add_scaled(C64::new(config.bonds[0].j_amp * ja, 0.0), &pair)?;
            a.add_scaled(C64::new(0.0, -2.0 * g * ja), &sideband)?;
        }
    }
    let dag = a.dagger();
    let mut h = a;
    h.add_scaled(C64::new(1.0, 0.0), &dag)?;
    Ok(h)
}

/// Bessel function of the first kind by its ascending power series, with
/// `J₋ₘ(x) = (−1)ᵐ Jₘ(x)`. Operating envelope: |order| ≤ 12, |x| ≤ 20.
pub fn bessel_j(order: i32, x: f64) -> Result<f64> {
    if order.abs() > 12 || x.abs() > 20.0 || !x.is_finite() {
        return Err(Error::BesselEnvelope { order, x });
    }
    let (m, sign_order) = if order < 0 {
        ((-order) as u32, if order % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (order as u32, 1.0)
    };
    // J_m(−x) = (−1)^m J_m(x)
    let (x, sign_x) = if x < 0.0 {
        (-x, if m % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (x, 1.0)
    };
    if x == 0.0 {
        return Ok(if m == 0 { sign_order * sign_x } else { 0.0 });
    }
    let half = 0.5 * x;
    // leading term (x/2)^m / m!
    let mut term = 1.0f64;
    for k in 1..=m {
        term *= half / k as f64;
    }
    let mut sum = term;
    let half_sq = half * half;
    for k in 1..200u32 {
        term *= -half_sq / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() < 1e-18 * (1.0 + sum.abs()) {
            break;
        }
    }
    Ok(sign_order * sign_x * sum)
}

/// Initial state `|↓⟩^⊗N ⊗ thermal(n̄ᵐ)` on the chain layout.
pub fn initial_state(config: &ChainConfig, chain: &ChainLayout) -> Result<DensityMatrix> {
    chain.matches(config)?;
    let mut locals: Vec<Array2<C64>> = Vec::new();
    for s in &config.sites {
        let mut down: Array2<C64> = Array2::zeros((2, 2));
        down[[1, 1]] = C64::new(1.0, 0.0);
        locals.push(down);
        if s.has_oscillator() {
            locals.push(thermal_state(config.nbar_mech, s.n_max));
        }
    }
    DensityMatrix::product(chain.layout().clone(), &locals)
}

/// Fig.-2-style minimal chain: two spins, one oscillator on site 1.
pub fn minimal_chain(
    delta: f64,
    omega_m: f64,
    lambda: f64,
    j_amp: f64,
    big_omega: f64,
    n_max: usize,
) -> ChainConfig {
    ChainConfig {
        sites: vec![
            SiteParams::with_oscillator(delta, omega_m, lambda, n_max),
            SiteParams::bare_spin(delta),
        ],
        bonds: vec![BondParams { j_amp, big_omega }],
        gamma_spin: 0.0,
        gamma_mech: 0.0,
        nbar_spin: 0.0,
        nbar_mech: 0.0,
    }
}
