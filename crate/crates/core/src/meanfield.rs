//! Closed self-consistent kinetic equations for N-site spin-mechanical
//! arrays: first moments of every site's spin and oscillator, the
//! second-order oscillator moments needed for g²(0), and the
//! nearest-neighbour spin pair correlators that stimulate lasing.
//!
//! The closure factorizes `⟨σ_j^z σ_{j±1}^±⟩ ≈ ⟨σ_j^z⟩⟨σ_{j±1}^±⟩` while
//! keeping `⟨σ_j^± σ_{j+1}^±⟩` dynamical, with open-chain boundaries
//! (J₀ = J_N ≡ 0). Dissipation enters at zero temperature: spins decay at Γ
//! toward |↓⟩ and oscillators damp at γ; the configured `nbar_mech` sets the
//! *initial* occupation only.
//!
//! Conjugate-partner variables (⟨σ⁻⟩, ⟨b†⟩, ⟨b†b†b⟩, ⟨b†²⟩, ⟨σ⁻σ⁺⟩, ⟨σ⁻σ⁻⟩)
//! are evolved independently through their own transcribed equations;
//! conjugacy of the pairs is asserted in tests, not enforced by construction.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lindblad::{IntegrationSpec, TrajectoryRecord, INSTABILITY_LIMIT};
use crate::model::ChainConfig;
use crate::observables::{kuramoto, SyncMetrics};

const I: C64 = C64::new(0.0, 1.0);

/// Per-site and per-bond expectation values of the kinetic equations.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub s_plus: Vec<C64>,
    pub s_minus: Vec<C64>,
    pub s_z: Vec<f64>,
    pub b: Vec<C64>,
    pub b_dag: Vec<C64>,
    /// ⟨b†b⟩
    pub n: Vec<f64>,
    /// ⟨b†b†bb⟩
    pub n2: Vec<f64>,
    /// ⟨b†bb⟩ and its conjugate partner ⟨b†b†b⟩
    pub bnb: Vec<C64>,
    pub bnb_conj: Vec<C64>,
    /// ⟨b²⟩ and its conjugate partner ⟨b†²⟩
    pub bsq: Vec<C64>,
    pub bsq_conj: Vec<C64>,
    /// bond correlators ⟨σ_j⁺σ_{j+1}⁺⟩, ⟨σ_j⁺σ_{j+1}⁻⟩, ⟨σ_j⁻σ_{j+1}⁺⟩, ⟨σ_j⁻σ_{j+1}⁻⟩
    pub pp: Vec<C64>,
    pub pm: Vec<C64>,
    pub mp: Vec<C64>,
    pub mm: Vec<C64>,
}

impl MeanFieldState {
    pub fn zeros(n_sites: usize) -> Self {
        let zc = vec![C64::new(0.0, 0.0); n_sites];
        let zr = vec![0.0; n_sites];
        let zb = vec![C64::new(0.0, 0.0); n_sites.saturating_sub(1)];
        MeanFieldState {
            s_plus: zc.clone(),
            s_minus: zc.clone(),
            s_z: zr.clone(),
            b: zc.clone(),
            b_dag: zc.clone(),
            n: zr.clone(),
            n2: zr,
            bnb: zc.clone(),
            bnb_conj: zc.clone(),
            bsq: zc.clone(),
            bsq_conj: zc,
            pp: zb.clone(),
            pm: zb.clone(),
            mp: zb.clone(),
            mm: zb,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.s_plus.len()
    }

    /// Initial state `|↓⟩^⊗N` with every oscillator in a displaced thermal
    /// state of total occupation `config.nbar_mech` and deterministic
    /// coherent seed `⟨b_j⟩ = seed_amp·e^{i 2π j / N}`.
    ///
    /// The seed's second moments follow the displaced-thermal closed forms
    /// with thermal part `n_t = n(0) − |α|²`:
    ///   ⟨b²⟩ = α², ⟨b†bb⟩ = α(|α|² + 2n_t),
    ///   ⟨b†b†bb⟩ = |α|⁴ + 4|α|²n_t + 2n_t².
    pub fn seeded(config: &ChainConfig, seed_amp: f64) -> Result<Self> {
        config.validate()?;
        let n_sites = config.len();
        let mut s = MeanFieldState::zeros(n_sites);
        let n0 = config.nbar_mech;
        if seed_amp * seed_amp > n0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "seed amplitude {seed_amp} exceeds the initial occupation {n0}"
            )));
        }
        for j in 0..n_sites {
            s.s_z[j] = -1.0;
            let alpha =
                C64::from_polar(seed_amp, 2.0 * std::f64::consts::PI * j as f64 / n_sites as f64);
            let a2 = alpha.norm_sqr();
            let n_t = (n0 - a2).max(0.0);
            s.b[j] = alpha;
            s.b_dag[j] = alpha.conj();
            s.n[j] = n0;
            s.bsq[j] = alpha * alpha;
            s.bsq_conj[j] = (alpha * alpha).conj();
            s.bnb[j] = alpha * (a2 + 2.0 * n_t);
            s.bnb_conj[j] = (alpha * (a2 + 2.0 * n_t)).conj();
            s.n2[j] = a2 * a2 + 4.0 * a2 * n_t + 2.0 * n_t * n_t;
        }
        Ok(s)
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        let add_c = |a: &mut Vec<C64>, b: &Vec<C64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        };
        let add_r = |a: &mut Vec<f64>, b: &Vec<f64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        };
        add_c(&mut self.s_plus, &other.s_plus);
        add_c(&mut self.s_minus, &other.s_minus);
        add_r(&mut self.s_z, &other.s_z);
        add_c(&mut self.b, &other.b);
        add_c(&mut self.b_dag, &other.b_dag);
        add_r(&mut self.n, &other.n);
        add_r(&mut self.n2, &other.n2);
        add_c(&mut self.bnb, &other.bnb);
        add_c(&mut self.bnb_conj, &other.bnb_conj);
        add_c(&mut self.bsq, &other.bsq);
        add_c(&mut self.bsq_conj, &other.bsq_conj);
        add_c(&mut self.pp, &other.pp);
        add_c(&mut self.pm, &other.pm);
        add_c(&mut self.mp, &other.mp);
        add_c(&mut self.mm, &other.mm);
    }

    pub fn max_abs(&self) -> f64 {
        let mc = |v: &Vec<C64>| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mr = |v: &Vec<f64>| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        [
            mc(&self.s_plus),
            mc(&self.s_minus),
            mr(&self.s_z),
            mc(&self.b),
            mc(&self.b_dag),
            mr(&self.n),
            mr(&self.n2),
            mc(&self.bnb),
            mc(&self.bnb_conj),
            mc(&self.bsq),
            mc(&self.bsq_conj),
            mc(&self.pp),
            mc(&self.pm),
            mc(&self.mp),
            mc(&self.mm),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Worst conjugate-pair defect: max over |s_minus − s_plus*|,
    /// |b_dag − b*|, |mm − pp*|, |mp − pm*| and the second-moment partners.
    pub fn conjugacy_defect(&self) -> f64 {
        let pair = |a: &Vec<C64>, b: &Vec<C64>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (*x - y.conj()).norm())
                .fold(0.0, f64::max)
        };
        [
            pair(&self.s_minus, &self.s_plus),
            pair(&self.b_dag, &self.b),
            pair(&self.bnb_conj, &self.bnb),
            pair(&self.bsq_conj, &self.bsq),
            pair(&self.mm, &self.pp),
            pair(&self.mp, &self.pm),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Time derivative of every moment at time `t`; the transcription of the
/// kinetic set, line by line, with the stated mean-field factorization of
/// the three-site products. `J_{j−1}` terms vanish at the left boundary and
/// `J_{j+1}` terms at the right (open chain).
pub fn derivatives(state: &MeanFieldState, t: f64, config: &ChainConfig) -> MeanFieldState {
    let n_sites = state.n_sites();
    debug_assert_eq!(n_sites, config.len());
    let gamma_s = config.gamma_spin;
    let gamma_m = config.gamma_mech;
    let mut d = MeanFieldState::zeros(n_sites);

    // J_k cos(Ω_k t) per bond, zero outside the chain
    let drive = |bond: isize| -> f64 {
        if bond < 0 || bond as usize >= config.bonds.len() {
            0.0
        } else {
            let b = &config.bonds[bond as usize];
            b.j_amp * (b.big_omega * t).cos()
        }
    };
    let sp = |j: isize| -> C64 {
        if j < 0 || j as usize >= n_sites {
            C64::new(0.0, 0.0)
        } else {
            state.s_plus[j as usize]
        }
    };
    let sm = |j: isize| -> C64 {
        if j < 0 || j as usize >= n_sites {
            C64::new(0.0, 0.0)
        } else {
            state.s_minus[j as usize]
        }
    };

    for j in 0..n_sites {
        let ji = j as isize;
        let lam = config.sites[j].lambda;
        let omega = config.sites[j].omega_m;
        let delta = config.sites[j].delta;
        let x_j = state.b_dag[j] + state.b[j]; // ⟨b†⟩ + ⟨b⟩
        let sz = C64::new(state.s_z[j], 0.0);

        // d⟨σ⁺⟩/dt = i{Δ − 2λ(⟨b†⟩+⟨b⟩) + iΓ/2}⟨σ⁺⟩
        //            − i⟨σᶻ⟩{J_{j−1}cos(⟨σ⁺⟩+⟨σ⁻⟩)_{j−1} + J_j cos(⟨σ⁺⟩+⟨σ⁻⟩)_{j+1}}
        let bracket = C64::new(delta, 0.0) - 2.0 * lam * x_j + I * (0.5 * gamma_s);
        d.s_plus[j] = I * bracket * state.s_plus[j]
            - I * sz
                * (drive(ji - 1) * (sp(ji - 1) + sm(ji - 1))
                    + drive(ji) * (sp(ji + 1) + sm(ji + 1)));

        // conjugate line
        let bracket_c = C64::new(delta, 0.0) - 2.0 * lam * (state.b[j] + state.b_dag[j])
            - I * (0.5 * gamma_s);
        d.s_minus[j] = -I * bracket_c * state.s_minus[j]
            + I * sz
                * (drive(ji - 1) * (sm(ji - 1) + sp(ji - 1))
                    + drive(ji) * (sm(ji + 1) + sp(ji + 1)));

        // d⟨σᶻ⟩/dt = 2iJ_{j−1}cos(pm + mm − pp − mp)_{j−1}
        //           + 2iJ_j cos(mp + mm − pp − pm)_j − Γ(⟨σᶻ⟩+1)
        let mut dz = C64::new(0.0, 0.0);
        if j >= 1 {
            let k = j - 1;
            dz += 2.0
                * I
                * drive(ji - 1)
                * (state.pm[k] + state.mm[k] - state.pp[k] - state.mp[k]);
        }
        if j + 1 < n_sites {
            let k = j;
            dz += 2.0
                * I
                * drive(ji)
                * (state.mp[k] + state.mm[k] - state.pp[k] - state.pm[k]);
        }
        d.s_z[j] = dz.re - gamma_s * (state.s_z[j] + 1.0);

        // oscillator moments
        d.b[j] = -(I * omega + 0.5 * gamma_m) * state.b[j] + I * lam * sz;
        d.b_dag[j] = (I * omega - 0.5 * gamma_m) * state.b_dag[j] - I * lam * sz;
        d.n[j] = (I * lam * sz * (state.b_dag[j] - state.b[j])).re - gamma_m * state.n[j];
        d.n2[j] = (-2.0 * I * lam * sz * (state.bnb[j] - state.bnb_conj[j])).re
            - 2.0 * gamma_m * state.n2[j];
        d.bnb[j] = -(I * omega + 1.5 * gamma_m) * state.bnb[j]
            - I * lam * sz * (state.bsq[j] - C64::new(2.0 * state.n[j], 0.0));
        d.bnb_conj[j] = (I * omega - 1.5 * gamma_m) * state.bnb_conj[j]
            + I * lam * sz * (state.bsq_conj[j] - C64::new(2.0 * state.n[j], 0.0));
        d.bsq[j] = -(2.0 * I * omega + gamma_m) * state.bsq[j] + 2.0 * I * lam * sz * state.b[j];
        d.bsq_conj[j] =
            (2.0 * I * omega - gamma_m) * state.bsq_conj[j] - 2.0 * I * lam * sz * state.b_dag[j];
    }

    // bond correlators; three-site products enter exactly as factorized
    for j in 0..n_sites.saturating_sub(1) {
        let ji = j as isize;
        let (lam_l, lam_r) = (config.sites[j].lambda, config.sites[j + 1].lambda);
        let x_l = state.b_dag[j] + state.b[j];
        let x_r = state.b_dag[j + 1] + state.b[j + 1];
        let delta_l = config.sites[j].delta;
        let sz_l = C64::new(state.s_z[j], 0.0);
        let sz_r = C64::new(state.s_z[j + 1], 0.0);
        let j_left = drive(ji - 1);
        let j_here = drive(ji);
        let j_right = drive(ji + 1);

        // d⟨σ_j⁺σ_{j+1}⁺⟩/dt
        let bracket = C64::new(2.0 * delta_l, 0.0) - 2.0 * lam_l * x_l - 2.0 * lam_r * x_r;
        d.pp[j] = I * bracket * state.pp[j]
            - I * j_left * sz_l * state.s_plus[j + 1] * (sp(ji - 1) + sm(ji - 1))
            - I * 0.5 * j_here * (sz_l + sz_r)
            - I * j_right * state.s_plus[j] * sz_r * (sp(ji + 2) + sm(ji + 2))
            - gamma_s * state.pp[j];

        // conjugate line
        let bracket_c = C64::new(2.0 * delta_l, 0.0)
            - 2.0 * lam_l * (state.b[j] + state.b_dag[j])
            - 2.0 * lam_r * (state.b[j + 1] + state.b_dag[j + 1]);
        d.mm[j] = -I * bracket_c * state.mm[j]
            + I * j_left * sz_l * state.s_minus[j + 1] * (sm(ji - 1) + sp(ji - 1))
            + I * 0.5 * j_here * (sz_l + sz_r)
            + I * j_right * state.s_minus[j] * sz_r * (sm(ji + 2) + sp(ji + 2))
            - gamma_s * state.mm[j];

        // d⟨σ_j⁻σ_{j+1}⁺⟩/dt
        let bracket_x = 2.0 * lam_l * x_l - 2.0 * lam_r * x_r;
        d.mp[j] = I * bracket_x * state.mp[j]
            + I * j_left * sz_l * state.s_plus[j + 1] * (sp(ji - 1) + sm(ji - 1))
            - I * 0.5 * j_here * (sz_r - sz_l)
            - I * j_right * state.s_minus[j] * sz_r * (sp(ji + 2) + sm(ji + 2))
            - gamma_s * state.mp[j];

        // conjugate line
        let bracket_xc = 2.0 * lam_l * (state.b[j] + state.b_dag[j])
            - 2.0 * lam_r * (state.b[j + 1] + state.b_dag[j + 1]);
        d.pm[j] = -I * bracket_xc * state.pm[j]
            - I * j_left * sz_l * state.s_minus[j + 1] * (sm(ji - 1) + sp(ji - 1))
            + I * 0.5 * j_here * (sz_r - sz_l)
            + I * j_right * state.s_plus[j] * sz_r * (sm(ji + 2) + sp(ji + 2))
            - gamma_s * state.pm[j];
    }
    d
}

/// Result of a mean-field run: the sampled record (per-site n, g², ⟨b⟩, σᶻ
/// and the Kuramoto order parameter), the synchronization metrics over the
/// active sites (λ > 0), and the final state.
#[derive(Debug, Clone)]
pub struct MeanFieldOutput {
    pub record: TrajectoryRecord,
    pub sync: SyncMetrics,
    pub final_state: MeanFieldState,
    pub active_sites: Vec<usize>,
}

/// Sites counted as active (lasing) for synchronization metrics: λ_j > 0.
pub fn active_sites(config: &ChainConfig) -> Vec<usize> {
    config
        .sites
        .iter()
        .enumerate()
        .filter(|(_, s)| s.lambda > 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// RK4 integration of the kinetic equations from `t_start`, sampling per-site
/// `n{j}`, `g2_{j}`, `b{j}`, `sz{j}` (1-based site labels) plus `r_k`
/// (NaN where undefined).
pub fn integrate_meanfield(
    initial: &MeanFieldState,
    config: &ChainConfig,
    spec: &IntegrationSpec,
    t_start: f64,
) -> Result<MeanFieldOutput> {
    config.validate()?;
    if initial.n_sites() != config.len() {
        return Err(Error::DimensionMismatch {
            expected: config.len(),
            found: initial.n_sites(),
        });
    }
    spec.validate(config.f_max())?;
    for w in config.sites.windows(2) {
        if (w[0].delta - w[1].delta).abs() > 1e-9 {
            log::warn!(
                "unequal spin gaps {} and {}: the pair-correlator bracket uses 2Δ_j as \
                 transcribed, which assumes equal gaps",
                w[0].delta,
                w[1].delta
            );
            break;
        }
    }

    let n_sites = config.len();
    let n_steps = spec.n_steps();
    let mut s = initial.clone();
    let mut record = TrajectoryRecord::default();
    let mut b_series: Vec<Vec<C64>> = vec![Vec::new(); n_sites];
    let mut n_series: Vec<Vec<f64>> = vec![Vec::new(); n_sites];

    let sample = |t: f64,
                  s: &MeanFieldState,
                  record: &mut TrajectoryRecord,
                  b_series: &mut Vec<Vec<C64>>,
                  n_series: &mut Vec<Vec<f64>>| {
        record.times.push(t);
        for j in 0..n_sites {
            let label = j + 1;
            let g2 = if s.n[j] > 1e-9 { s.n2[j] / (s.n[j] * s.n[j]) } else { f64::NAN };
            record.push(&format!("n{label}"), C64::new(s.n[j], 0.0));
            record.push(&format!("g2_{label}"), C64::new(g2, 0.0));
            record.push(&format!("b{label}"), s.b[j]);
            record.push(&format!("sz{label}"), C64::new(s.s_z[j], 0.0));
            b_series[j].push(s.b[j]);
            n_series[j].push(s.n[j]);
        }
    };
    sample(t_start, &s, &mut record, &mut b_series, &mut n_series);

    let dt = spec.dt;
    for step in 0..n_steps {
        let t = t_start + step as f64 * dt;
        // classic RK4
        let k1 = derivatives(&s, t, config);
        let mut s2 = s.clone();
        s2.axpy(0.5 * dt, &k1);
        let k2 = derivatives(&s2, t + 0.5 * dt, config);
        let mut s3 = s.clone();
        s3.axpy(0.5 * dt, &k2);
        let k3 = derivatives(&s3, t + 0.5 * dt, config);
        let mut s4 = s.clone();
        s4.axpy(dt, &k3);
        let k4 = derivatives(&s4, t + dt, config);
        s.axpy(dt / 6.0, &k1);
        s.axpy(dt / 3.0, &k2);
        s.axpy(dt / 3.0, &k3);
        s.axpy(dt / 6.0, &k4);

        let done = step + 1 == n_steps;
        if (step + 1) % spec.hermitize_every == 0 || done {
            let worst = s.max_abs();
            if !worst.is_finite() || worst > INSTABILITY_LIMIT {
                return Err(Error::StepInstability {
                    t: t + dt,
                    magnitude: worst,
                });
            }
            // n2 ≥ 0 is not guaranteed by the closure; report breaches past
            // the tolerated bound n2 ≥ −0.05·n²
            for j in 0..n_sites {
                if s.n2[j] < -0.05 * s.n[j] * s.n[j] {
                    log::warn!(
                        "closure violation at site {j}, t = {:.1}: n2 = {:.3e} < −0.05·n²",
                        t + dt,
                        s.n2[j]
                    );
                }
            }
        }
        if (step + 1) % spec.sample_every == 0 || done {
            sample(
                t_start + (step + 1) as f64 * dt,
                &s,
                &mut record,
                &mut b_series,
                &mut n_series,
            );
        }
    }

    let active = active_sites(config);
    let sync = if active.is_empty() {
        SyncMetrics { r_k: Vec::new(), phases: Vec::new(), pair_diffs: Vec::new() }
    } else {
        kuramoto(&b_series, &n_series, &active)?
    };
    let r_k_values: Vec<C64> = sync
        .r_k
        .iter()
        .map(|r| C64::new(r.unwrap_or(f64::NAN), 0.0))
        .collect();
    if !r_k_values.is_empty() {
        record.insert("r_k", r_k_values);
    }
    Ok(MeanFieldOutput { record, sync, final_state: s, active_sites: active })
}



/// Deviation of the mean-field phonon number from the exact solver on a
/// chain small enough for the Lindblad path, from matched initial states
/// (no coherent seed, so both start in `|↓⟩^⊗N ⊗ thermal`).
#[derive(Debug, Clone)]
pub struct CrossCheck {
    pub max_rel_dev_n: f64,
    pub record_exact: TrajectoryRecord,
    pub record_meanfield: TrajectoryRecord,
}

pub fn crosscheck_vs_exact(config: &ChainConfig, spec: &IntegrationSpec) -> Result<CrossCheck> {
    let chain = crate::model::ChainLayout::new(config)?;
    let osc_site = config
        .sites
        .iter()
        .position(|s| s.has_oscillator())
        .ok_or_else(|| Error::Topology("config has no oscillator".into()))?;

    let rho0 = crate::model::initial_state(config, &chain)?;
    let dissipators = crate::lindblad::DissipatorSet::from_config(config, &chain)?;
    let h = crate::model::driven_full(config, &chain)?;
    let b = chain.b(osc_site)?;
    let probes = vec![("n".to_string(), b.dagger().dot(&b)?)];
    let exact = crate::lindblad::integrate(&rho0, &h, &dissipators, spec, &probes)?;

    // zero-temperature mean-field equations: compare against the exact run
    // with the mechanical bath cooled as well, from the same thermal start
    let mf0 = MeanFieldState::seeded(config, 0.0)?;
    let mf_spec = crate::lindblad::align_spec(spec, spec.dt);
    let mf = integrate_meanfield(&mf0, config, &mf_spec, 0.0)?;

    let n_exact = exact.record.get("n")?;
    let key = format!("n{}", osc_site + 1);
    let n_mf = mf.record.get(&key)?;
    if n_exact.len() != n_mf.len() {
        return Err(Error::InvalidSpec(
            "exact and mean-field runs produced different sample counts".into(),
        ));
    }
    let mut max_rel_dev = 0.0f64;
    for (e, m) in n_exact.iter().zip(n_mf) {
        let dev = (e.re - m.re).abs() / e.re.max(0.1);
        max_rel_dev = max_rel_dev.max(dev);
    }
    Ok(CrossCheck {
        max_rel_dev_n: max_rel_dev,
        record_exact: exact.record,
        record_meanfield: mf.record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::step_ceiling;
    use crate::presets::{fig3_array, figs2_array};
    use approx::assert_abs_diff_eq;

    fn decoupled(n_sites: usize) -> ChainConfig {
        let mut c = fig3_array();
        c.sites.truncate(n_sites);
        c.bonds.truncate(n_sites - 1);
        for s in &mut c.sites {
            s.lambda = 0.0;
        }
        for b in &mut c.bonds {
            b.j_amp = 0.0;
        }
        c
    }

    fn spec_for(config: &ChainConfig, t_end: f64, samples: usize) -> IntegrationSpec {
        IntegrationSpec::at_ceiling(t_end, config.f_max(), samples)
    }

    #[test]
    fn free_damped_mode_derivative() {
        // all couplings zero, ⟨b⟩ = 1: d⟨b⟩/dt = −(iω + γ/2)
        let config = decoupled(3);
        let mut s = MeanFieldState::zeros(3);
        s.b[1] = C64::new(1.0, 0.0);
        let d = derivatives(&s, 0.37, &config);
        let omega = config.sites[1].omega_m;
        let expect = -(C64::new(0.0, omega) + C64::new(0.5 * config.gamma_mech, 0.0));
        assert!((d.b[1] - expect).norm() < 1e-15);
        // everything decoupled from b stays flat
        assert_eq!(d.pp.iter().map(|z| z.norm()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn pair_flip_source_from_the_spin_vacuum() {
        // ⟨σᶻ⟩ = −1 everywhere, all σ± and pair correlators zero, J ≠ 0:
        // only the pp/mm lines are sourced, via −iJ/2·cos·(−2) = +iJ·cos
        let mut config = fig3_array();
        for s in &mut config.sites {
            s.lambda = 0.0; // isolate the spin sector
        }
        let mut s = MeanFieldState::zeros(10);
        for j in 0..10 {
            s.s_z[j] = -1.0;
        }
        let t = 0.21;
        let d = derivatives(&s, t, &config);
        for j in 0..9 {
            let expect = config.bonds[j].j_amp * (config.bonds[j].big_omega * t).cos();
            assert!((d.pp[j] - I * expect).norm() < 1e-14);
            assert!((d.mm[j] + I * expect).norm() < 1e-14);
            assert!(d.pm[j].norm() < 1e-14);
            assert!(d.mp[j].norm() < 1e-14);
        }
        for j in 0..10 {
            assert!(d.s_plus[j].norm() < 1e-14);
            assert_abs_diff_eq!(d.s_z[j], 0.0, epsilon = 1e-14); // −Γ(−1+1)
        }
    }

    /// Conjugate the whole state: swap every variable with its partner.
    fn conj_swap(s: &MeanFieldState) -> MeanFieldState {
        let c = |v: &Vec<C64>| -> Vec<C64> { v.iter().map(|z| z.conj()).collect() };
        MeanFieldState {
            s_plus: c(&s.s_minus),
            s_minus: c(&s.s_plus),
            s_z: s.s_z.clone(),
            b: c(&s.b_dag),
            b_dag: c(&s.b),
            n: s.n.clone(),
            n2: s.n2.clone(),
            bnb: c(&s.bnb_conj),
            bnb_conj: c(&s.bnb),
            bsq: c(&s.bsq_conj),
            bsq_conj: c(&s.bsq),
            pp: c(&s.mm),
            pm: c(&s.mp),
            mp: c(&s.pm),
            mm: c(&s.pp),
        }
    }

    #[test]
    fn conjugate_lines_are_the_conjugated_primary_lines() {
        // Double-entry transcription check: d⟨O†⟩/dt must equal the complex
        // conjugate of the primary line evaluated on the partner-swapped
        // state. Random state, every site and bond.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let config = fig3_array();
        let n_sites = 10;
        let mut s = MeanFieldState::zeros(n_sites);
        fn rc(rng: &mut rand_chacha::ChaCha8Rng, amp: f64) -> C64 {
            C64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp))
        }
        for j in 0..n_sites {
            s.s_plus[j] = rc(&mut rng, 0.5);
            s.s_minus[j] = rc(&mut rng, 0.5);
            s.s_z[j] = rng.gen_range(-1.0..1.0);
            s.b[j] = rc(&mut rng, 2.0);
            s.b_dag[j] = rc(&mut rng, 2.0);
            s.n[j] = rng.gen_range(0.0..4.0);
            s.n2[j] = rng.gen_range(0.0..16.0);
            s.bnb[j] = rc(&mut rng, 4.0);
            s.bnb_conj[j] = rc(&mut rng, 4.0);
            s.bsq[j] = rc(&mut rng, 4.0);
            s.bsq_conj[j] = rc(&mut rng, 4.0);
        }
        for j in 0..n_sites - 1 {
            s.pp[j] = rc(&mut rng, 0.5);
            s.pm[j] = rc(&mut rng, 0.5);
            s.mp[j] = rc(&mut rng, 0.5);
            s.mm[j] = rc(&mut rng, 0.5);
        }
        let t = 1.77;
        let d = derivatives(&s, t, &config);
        let d_swapped = derivatives(&conj_swap(&s), t, &config);
        let expect = conj_swap(&d_swapped);
        // compare the full derivative structurally
        let dd = |a: &Vec<C64>, b: &Vec<C64>| {
            a.iter().zip(b).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max)
        };
        assert!(dd(&d.s_minus, &expect.s_minus) < 1e-13);
        assert!(dd(&d.b_dag, &expect.b_dag) < 1e-13);
        assert!(dd(&d.bnb_conj, &expect.bnb_conj) < 1e-13);
        assert!(dd(&d.bsq_conj, &expect.bsq_conj) < 1e-13);
        assert!(dd(&d.mm, &expect.mm) < 1e-13);
        assert!(dd(&d.pm, &expect.pm) < 1e-13);
        // and the primaries map back the same way
        assert!(dd(&d.s_plus, &expect.s_plus) < 1e-13);
        assert!(dd(&d.pp, &expect.pp) < 1e-13);
    }

    #[test]
    fn two_site_derivative_against_hand_substitution() {
        // N = 2 with a deliberately plain state: every line substituted by
        // hand into the kinetic set.
        let config = crate::presets::fig2_chain(8);
        let mut s = MeanFieldState::zeros(2);
        s.s_plus[0] = C64::new(0.2, 0.1);
        s.s_minus[0] = s.s_plus[0].conj();
        s.s_z[0] = -0.5;
        s.s_plus[1] = C64::new(-0.1, 0.3);
        s.s_minus[1] = s.s_plus[1].conj();
        s.s_z[1] = -0.8;
        s.b[0] = C64::new(0.4, -0.2);
        s.b_dag[0] = s.b[0].conj();
        s.n[0] = 0.3;
        s.pp[0] = C64::new(0.05, 0.02);
        s.mm[0] = s.pp[0].conj();
        s.pm[0] = C64::new(-0.03, 0.04);
        s.mp[0] = s.pm[0].conj();

        let t = 0.9;
        let d = derivatives(&s, t, &config);

        let (delta, lam, omega) = (2.0, 0.4, 5.0);
        let (gamma_s, gamma_m) = (config.gamma_spin, config.gamma_mech);
        let jcos = 0.08 * (9.0f64 * t).cos();
        let x0 = s.b_dag[0] + s.b[0];

        // site 0 σ⁺
        let expect_sp0 = I * (C64::new(delta, 0.0) - 2.0 * lam * x0 + I * 0.5 * gamma_s)
            * s.s_plus[0]
            - I * C64::new(s.s_z[0], 0.0) * jcos * (s.s_plus[1] + s.s_minus[1]);
        assert!((d.s_plus[0] - expect_sp0).norm() < 1e-14);

        // site 1 σ⁺ (no oscillator, left neighbour only)
        let expect_sp1 = I * (C64::new(delta, 0.0) + I * 0.5 * gamma_s) * s.s_plus[1]
            - I * C64::new(s.s_z[1], 0.0) * jcos * (s.s_plus[0] + s.s_minus[0]);
        assert!((d.s_plus[1] - expect_sp1).norm() < 1e-14);

        // σᶻ on site 0: bond-0 correlators with the (mp + mm − pp − pm) order
        let expect_sz0 = (2.0 * I * jcos * (s.mp[0] + s.mm[0] - s.pp[0] - s.pm[0])).re
            - gamma_s * (s.s_z[0] + 1.0);
        assert_abs_diff_eq!(d.s_z[0], expect_sz0, epsilon = 1e-14);
        // and site 1 uses the (pm + mm − pp − mp) order of its left bond
        let expect_sz1 = (2.0 * I * jcos * (s.pm[0] + s.mm[0] - s.pp[0] - s.mp[0])).re
            - gamma_s * (s.s_z[1] + 1.0);
        assert_abs_diff_eq!(d.s_z[1], expect_sz1, epsilon = 1e-14);

        // oscillator block on site 0
        let sz0 = C64::new(s.s_z[0], 0.0);
        let expect_b = -(I * omega + 0.5 * gamma_m) * s.b[0] + I * lam * sz0;
        assert!((d.b[0] - expect_b).norm() < 1e-14);
        let expect_n =
            (I * lam * sz0 * (s.b_dag[0] - s.b[0])).re - gamma_m * s.n[0];
        assert_abs_diff_eq!(d.n[0], expect_n, epsilon = 1e-14);
        let expect_bsq = -(2.0 * I * omega + gamma_m) * s.bsq[0] + 2.0 * I * lam * sz0 * s.b[0];
        assert!((d.bsq[0] - expect_bsq).norm() < 1e-14);

        // pair correlator pp: N = 2 has no outer neighbours, so only the
        // bracket and the J/2 source survive
        let expect_pp = I * (C64::new(2.0 * delta, 0.0) - 2.0 * lam * x0) * s.pp[0]
            - I * 0.5 * jcos * C64::new(s.s_z[0] + s.s_z[1], 0.0)
            - gamma_s * s.pp[0];
        assert!((d.pp[0] - expect_pp).norm() < 1e-14);
    }

    #[test]
    fn decoupled_array_relaxes_analytically() {
        let config = decoupled(4);
        let s0 = MeanFieldState::seeded(&config, 0.1).unwrap();
        let spec = spec_for(&config, 400.0, 40);
        let out = integrate_meanfield(&s0, &config, &spec, 0.0).unwrap();
        let gamma = config.gamma_mech;
        for j in 1..=4 {
            let series = out.record.get(&format!("n{j}")).unwrap();
            for (t, v) in out.record.times.iter().zip(series) {
                let expect = 0.1 * (-gamma * t).exp();
                assert!(
                    (v.re - expect).abs() < 1e-6,
                    "site {j}: n({t}) = {} vs {expect}",
                    v.re
                );
            }
        }
    }

    #[test]
    fn spins_decay_to_down_at_rate_gamma() {
        let mut config = decoupled(3);
        config.gamma_spin = 0.05;
        let mut s0 = MeanFieldState::seeded(&config, 0.0).unwrap();
        s0.s_z = vec![0.3, -0.2, 0.9];
        let spec = spec_for(&config, 100.0, 25);
        let out = integrate_meanfield(&s0, &config, &spec, 0.0).unwrap();
        for j in 0..3 {
            let series = out.record.get(&format!("sz{}", j + 1)).unwrap();
            for (t, v) in out.record.times.iter().zip(series) {
                let expect = -1.0 + (s0.s_z[j] + 1.0) * (-0.05 * t).exp();
                assert!((v.re - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn conjugate_pairs_stay_conjugate_along_a_driven_run() {
        let config = fig3_array();
        let s0 = MeanFieldState::seeded(&config, 0.1).unwrap();
        let mut spec = spec_for(&config, 300.0, 10);
        spec.hermitize_every = 1000;
        let mut s = s0;
        let dt = spec.dt;
        for step in 0..spec.n_steps() {
            let t = step as f64 * dt;
            let k1 = derivatives(&s, t, &config);
            let mut s2 = s.clone();
            s2.axpy(0.5 * dt, &k1);
            let k2 = derivatives(&s2, t + 0.5 * dt, &config);
            let mut s3 = s.clone();
            s3.axpy(0.5 * dt, &k2);
            let k3 = derivatives(&s3, t + 0.5 * dt, &config);
            let mut s4 = s.clone();
            s4.axpy(dt, &k3);
            let k4 = derivatives(&s4, t + dt, &config);
            s.axpy(dt / 6.0, &k1);
            s.axpy(dt / 3.0, &k2);
            s.axpy(dt / 3.0, &k3);
            s.axpy(dt / 6.0, &k4);
        }
        assert!(
            s.conjugacy_defect() < 1e-8,
            "conjugacy drifted to {}",
            s.conjugacy_defect()
        );
    }

    #[test]
    fn time_translation_consistency() {
        // Splitting a run at an arbitrary step boundary and resuming with the
        // correct absolute time reproduces the unsplit trajectory.
        let config = figs2_array();
        let s0 = MeanFieldState::seeded(&config, 0.1).unwrap();
        let dt = step_ceiling(config.f_max());
        let mk = |t_end: f64| IntegrationSpec {
            t_end,
            dt,
            sample_every: usize::MAX / 2,
            hermitize_every: 1000,
            renormalize_trace: false,
        };
        let full = integrate_meanfield(&s0, &config, &mk(160.0 * dt), 0.0).unwrap();
        let first = integrate_meanfield(&s0, &config, &mk(100.0 * dt), 0.0).unwrap();
        let second = integrate_meanfield(
            &first.final_state,
            &config,
            &mk(60.0 * dt),
            100.0 * dt,
        )
        .unwrap();
        let mut diff = second.final_state.clone();
        diff.axpy(-1.0, &full.final_state);
        assert!(diff.max_abs() < 1e-12, "split run deviates by {}", diff.max_abs());
    }

    #[test]
    fn crosscheck_matches_exact_solver_in_the_trivial_limit() {
        // λ = 0, J = 0: both solvers give pure decay of the phonon number
        let mut config = crate::presets::fig2_chain(16);
        config.sites[0].lambda = 0.0;
        config.bonds[0].j_amp = 0.0;
        config.nbar_mech = 0.1;
        config.nbar_spin = 0.0;
        // zero-temperature bath on the exact side to match the kinetic set
        let mut cold = config.clone();
        cold.nbar_mech = 0.1; // initial occupation for the mean-field seed
        let chain = crate::model::ChainLayout::new(&cold).unwrap();
        let h = crate::model::driven_full(&cold, &chain).unwrap();
        let diss = {
            let mut zero_t = cold.clone();
            zero_t.nbar_mech = 0.0;
            crate::lindblad::DissipatorSet::from_config(&zero_t, &chain).unwrap()
        };
        let rho0 = crate::model::initial_state(&cold, &chain).unwrap();
        let spec = IntegrationSpec::for_generator(200.0, &h, &diss, 25);
        let b = chain.b(0).unwrap();
        let probes = vec![("n".to_string(), b.dagger().dot(&b).unwrap())];
        let exact = crate::lindblad::integrate(&rho0, &h, &diss, &spec, &probes).unwrap();

        let mf0 = MeanFieldState::seeded(&cold, 0.0).unwrap();
        let mf_spec = crate::lindblad::align_spec(&spec, spec.dt);
        let mf = integrate_meanfield(&mf0, &cold, &mf_spec, 0.0).unwrap();
        let n_e = exact.record.get("n").unwrap();
        let n_m = mf.record.get("n1").unwrap();
        assert_eq!(n_e.len(), n_m.len());
        for (e, m) in n_e.iter().zip(n_m) {
            assert!(
                (e.re - m.re).abs() / e.re.max(0.1) < 1e-4,
                "exact {} vs mean-field {}",
                e.re,
                m.re
            );
        }
    }
}
