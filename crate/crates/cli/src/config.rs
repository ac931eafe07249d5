//! TOML configuration schema. Every frequency and rate is in units of ω̄.
//! Unknown keys are rejected; validation errors cite the violated invariant.

use phonlase::lindblad::IntegrationSpec;
use phonlase::model::{BondParams, ChainConfig, LocalDriveParams, SiteParams};
use phonlase::{Error as CoreError, Result as CoreResult};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SiteSection {
    pub delta: f64,
    #[serde(default)]
    pub omega_m: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub n_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BondSection {
    pub j_amp: f64,
    #[serde(default)]
    pub big_omega: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DissipationSection {
    #[serde(default)]
    pub gamma_spin: f64,
    #[serde(default)]
    pub gamma_mech: f64,
    #[serde(default)]
    pub nbar_spin: f64,
    #[serde(default)]
    pub nbar_mech: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub t_end: Option<f64>,
    /// Step size; when absent the solver picks the largest stable step below
    /// the oscillation-resolving ceiling.
    pub dt: Option<f64>,
    pub sample_every: Option<usize>,
    pub target_samples: Option<usize>,
    pub hermitize_every: Option<usize>,
    pub renormalize_trace: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    /// Drive amplitude ε₀; when absent it locks to (ν/2)·x₀ with x₀ the
    /// first zero of J₀.
    pub eps0: Option<f64>,
    pub nu: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RecipeSection {
    /// Coherent seed amplitude of mean-field runs.
    pub seed_amp: Option<f64>,
    /// Wigner grid points per axis.
    pub wigner_points: Option<usize>,
    /// Half-width of the spectrum frequency window (units ω̄).
    pub spectrum_span: Option<f64>,
    pub spectrum_points: Option<usize>,
    /// Drive amplitudes for the spectrum recipe.
    pub j_values: Option<Vec<f64>>,
    /// Override of the scan values for sweep-style recipes.
    pub scan_values: Option<Vec<f64>>,
}

/// The complete config document.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub sites: Vec<SiteSection>,
    #[serde(default)]
    pub bonds: Vec<BondSection>,
    pub dissipation: Option<DissipationSection>,
    #[serde(default)]
    pub integration: IntegrationSection,
    pub drive: Option<DriveSection>,
    #[serde(default)]
    pub recipe: RecipeSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Whether the document describes a chain of its own (otherwise the
    /// recipe's preset chain is used).
    pub fn has_chain(&self) -> bool {
        !self.sites.is_empty()
    }

    pub fn chain_config(&self) -> CoreResult<ChainConfig> {
        let sites = self
            .sites
            .iter()
            .map(|s| SiteParams {
                delta: s.delta,
                omega_m: s.omega_m,
                lambda: s.lambda,
                n_max: s.n_max,
            })
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| BondParams { j_amp: b.j_amp, big_omega: b.big_omega })
            .collect();
        let d = self.dissipation.clone().unwrap_or(DissipationSection {
            gamma_spin: 0.0,
            gamma_mech: 0.0,
            nbar_spin: 0.0,
            nbar_mech: 0.0,
        });
        let config = ChainConfig {
            sites,
            bonds,
            gamma_spin: d.gamma_spin,
            gamma_mech: d.gamma_mech,
            nbar_spin: d.nbar_spin,
            nbar_mech: d.nbar_mech,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn drive_params(&self) -> Option<LocalDriveParams> {
        self.drive.as_ref().map(|d| match d.eps0 {
            Some(eps0) => LocalDriveParams { eps0, nu: d.nu },
            None => LocalDriveParams::at_bessel_zero(d.nu),
        })
    }

    /// Mirror a resolved chain back into document form (for manifests).
    pub fn from_chain(config: &ChainConfig) -> Self {
        ConfigFile {
            sites: config
                .sites
                .iter()
                .map(|s| SiteSection {
                    delta: s.delta,
                    omega_m: s.omega_m,
                    lambda: s.lambda,
                    n_max: s.n_max,
                })
                .collect(),
            bonds: config
                .bonds
                .iter()
                .map(|b| BondSection { j_amp: b.j_amp, big_omega: b.big_omega })
                .collect(),
            dissipation: Some(DissipationSection {
                gamma_spin: config.gamma_spin,
                gamma_mech: config.gamma_mech,
                nbar_spin: config.nbar_spin,
                nbar_mech: config.nbar_mech,
            }),
            integration: IntegrationSection::default(),
            drive: None,
            recipe: RecipeSection::default(),
        }
    }

    /// Resolve the integration spec against recipe defaults and the model's
    /// recommended step.
    pub fn resolve_spec(
        &self,
        default_t_end: f64,
        recommended_dt: f64,
        default_samples: usize,
    ) -> CoreResult<IntegrationSpec> {
        let t_end = self.integration.t_end.unwrap_or(default_t_end);
        let dt = self.integration.dt.unwrap_or(recommended_dt);
        if !(dt > 0.0) {
            return Err(CoreError::InvalidSpec("dt must be positive".into()));
        }
        let n_steps = (t_end / dt).ceil().max(1.0) as usize;
        let sample_every = match (self.integration.sample_every, self.integration.target_samples)
        {
            (Some(se), _) => se,
            (None, Some(ts)) => (n_steps / ts.max(1)).max(1),
            (None, None) => (n_steps / default_samples.max(1)).max(1),
        };
        Ok(IntegrationSpec {
            t_end,
            dt,
            sample_every,
            hermitize_every: self.integration.hermitize_every.unwrap_or(100),
            renormalize_trace: self.integration.renormalize_trace.unwrap_or(true),
        })
    }
}
