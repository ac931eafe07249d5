//! Canned parameter sets for the bundled experiment recipes. Frequencies are
//! in units of ω̄ throughout.

use crate::model::{BondParams, ChainConfig, LocalDriveParams, SiteParams};

/// Minimal two-spin lasing chain (`fig2-*` recipes): Δ₁ = Δ₂ = 2, ω₁ = 5,
/// Ω₁ = 9 = Δ₁ + Δ₂ + ω₁, λ₁ = 0.4, J₁ = 0.08, Γ = 2·10⁻², γ = 8·10⁻⁴,
/// n̄ˢ = 0.01, n̄ᵐ = 0.1.
pub fn fig2_chain(n_max: usize) -> ChainConfig {
    ChainConfig {
        sites: vec![
            SiteParams::with_oscillator(2.0, 5.0, 0.4, n_max),
            SiteParams::bare_spin(2.0),
        ],
        bonds: vec![BondParams { j_amp: 0.08, big_omega: 9.0 }],
        gamma_spin: 2e-2,
        gamma_mech: 8e-4,
        nbar_spin: 0.01,
        nbar_mech: 0.1,
    }
}

/// Phase-locked minimal chain (`figS1-phaselocked`): Δ₁ = Δ₂ = 2, ω₁ = 8,
/// Ω₁ = 4 = Δ₁ + Δ₂ (with ω₁ = 2Ω₁), λ₁ = 0.4, J₁ = 0.1, Γ = 8·10⁻³,
/// γ = 10⁻³, n̄ˢ = 0.01, n̄ᵐ = 0.1.
pub fn figs1_chain(n_max: usize) -> ChainConfig {
    ChainConfig {
        sites: vec![
            SiteParams::with_oscillator(2.0, 8.0, 0.4, n_max),
            SiteParams::bare_spin(2.0),
        ],
        bonds: vec![BondParams { j_amp: 0.1, big_omega: 4.0 }],
        gamma_spin: 8e-3,
        gamma_mech: 1e-3,
        nbar_spin: 0.01,
        nbar_mech: 0.1,
    }
}

/// Ten-site synchronization array (`fig3-array`, mean-field): Δ_j = 2,
/// ω_j = {8.0, 8.0, 7.9995, 7.9994, 8.0, 7.9992, 8.0, 7.999, 7.9989, 7.9988},
/// λ_j = {0.4, 0, 0.42, 0.38, 0, 0.41, 0, 0.37, 0.43, 0}, J_j = 0.2,
/// Ω_j = 4, Γ = 8·10⁻², γ = 10⁻³, n̄ˢ = 0.01, n̄ᵐ = 0.1 (initial occupation).
///
/// Active (lasing) sites are those with λ_j > 0: j = 1, 3, 4, 6, 8, 9
/// (1-based). The oscillators are near (but intentionally off) the exact
/// ω = 2Ω resonance.
pub fn fig3_array() -> ChainConfig {
    let omega = [8.0, 8.0, 7.9995, 7.9994, 8.0, 7.9992, 8.0, 7.999, 7.9989, 7.9988];
    let lambda = [0.4, 0.0, 0.42, 0.38, 0.0, 0.41, 0.0, 0.37, 0.43, 0.0];
    let sites = omega
        .iter()
        .zip(lambda.iter())
        .map(|(&w, &l)| SiteParams::with_oscillator(2.0, w, l, 8))
        .collect();
    ChainConfig {
        sites,
        bonds: vec![BondParams { j_amp: 0.2, big_omega: 4.0 }; 9],
        gamma_spin: 8e-2,
        gamma_mech: 1e-3,
        nbar_spin: 0.01,
        nbar_mech: 0.1,
    }
}

/// On-demand array (`figS2-array`, mean-field): ten sites with oscillators on
/// odd sites only, each bond driven at its own Ω_j = 4 + ω_k for the
/// oscillator k it feeds: Δ_j = 2, ω = {5, 0, 7, 0, 9, 0, 12, 0, 16, 0},
/// λ = 0.4 on oscillator sites, J_j = 0.3, Γ = 8·10⁻², γ = 10⁻³.
pub fn figs2_array() -> ChainConfig {
    let omega = [5.0, 0.0, 7.0, 0.0, 9.0, 0.0, 12.0, 0.0, 16.0, 0.0];
    let sites = omega
        .iter()
        .map(|&w| {
            if w > 0.0 {
                SiteParams::with_oscillator(2.0, w, 0.4, 8)
            } else {
                SiteParams::bare_spin(2.0)
            }
        })
        .collect();
    let big_omega = [9.0, 11.0, 11.0, 13.0, 13.0, 16.0, 16.0, 20.0, 20.0];
    let bonds = big_omega
        .iter()
        .map(|&w| BondParams { j_amp: 0.3, big_omega: w })
        .collect();
    ChainConfig {
        sites,
        bonds,
        gamma_spin: 8e-2,
        gamma_mech: 1e-3,
        nbar_spin: 0.0,
        nbar_mech: 0.1,
    }
}

/// Locally driven two-spin phonon laser (`figS3-localdrive`): the drive acts
/// on spin 1 while the oscillator couples to spin 2. Δ₁ = Δ₂ = 2, ω₁ = 8,
/// λ₁ = 0.4, J₁ = 0.12 (constant coupling), ν = 2, ε₀ = (ν/2)·x₀,
/// Γ = 8·10⁻², γ = 10⁻³, n̄ˢ = 0.01, n̄ᵐ = 0.1.
pub fn figs3_localdrive(n_max: usize) -> (ChainConfig, LocalDriveParams) {
    let config = ChainConfig {
        sites: vec![
            SiteParams::bare_spin(2.0),
            SiteParams::with_oscillator(2.0, 8.0, 0.4, n_max),
        ],
        bonds: vec![BondParams { j_amp: 0.12, big_omega: 0.0 }],
        gamma_spin: 8e-2,
        gamma_mech: 1e-3,
        nbar_spin: 0.01,
        nbar_mech: 0.1,
    };
    (config, LocalDriveParams::at_bessel_zero(2.0))
}
