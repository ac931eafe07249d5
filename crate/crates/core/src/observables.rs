//! Diagnostics of the lasing transition: second-order coherence g²(0), Wigner
//! phase-space maps, the emission power spectrum via the quantum regression
//! theorem, threshold normalization, and Kuramoto synchronization metrics.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{truncation_report, DensityMatrix, SubsystemKind};
use crate::lindblad::{effective_generator, recommended_step, DissipatorSet, Propagator};
use crate::model::{
    effective_hamiltonian_case1, effective_hamiltonian_case2, ChainConfig, ChainLayout,
    ResonanceCase,
};

/// Phases are undefined when `|⟨b⟩| < PHASE_FLOOR_FRACTION·√(⟨b†b⟩ + ε)`;
/// the argument of a near-zero complex number is noise.
pub const PHASE_FLOOR_FRACTION: f64 = 0.05;

fn require_single_oscillator(rho: &DensityMatrix) -> Result<usize> {
    let subs = rho.layout().subsystems();
    if subs.len() == 1 && subs[0].kind == SubsystemKind::Oscillator {
        Ok(subs[0].dim - 1)
    } else {
        Err(Error::UndefinedObservable(
            "expected a single-oscillator reduced density matrix".into(),
        ))
    }
}

/// Equal-time second-order coherence `g²(0) = ⟨b†b†bb⟩ / ⟨b†b⟩²`; 2 for a
/// thermal state, 1 for a coherent state. Undefined on vacuum-dominated
/// states (⟨b†b⟩ ≤ 1e−9).
pub fn g2_zero(rho_osc: &DensityMatrix) -> Result<f64> {
    let n_max = require_single_oscillator(rho_osc)?;
    let m = rho_osc.matrix();
    let mut n_mean = 0.0;
    let mut pair = 0.0;
    for n in 0..=n_max {
        let p = m[[n, n]].re;
        n_mean += n as f64 * p;
        pair += (n * n.saturating_sub(1)) as f64 * p;
    }
    if n_mean <= 1e-9 {
        return Err(Error::UndefinedObservable(format!(
            "g2(0) undefined: ⟨b†b⟩ = {n_mean:.3e}"
        )));
    }
    Ok(pair / (n_mean * n_mean))
}

/// Rectangular phase-space grid of Wigner values.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_points: usize,
    /// `values[[ix, ip]] = W(x_ix, p_ip)`.
    pub values: Array2<f64>,
}

impl WignerGrid {
    pub fn x_at(&self, ix: usize) -> f64 {
        self.x_min + (self.x_max - self.x_min) * ix as f64 / (self.n_points - 1) as f64
    }

    pub fn p_at(&self, ip: usize) -> f64 {
        self.p_min + (self.p_max - self.p_min) * ip as f64 / (self.n_points - 1) as f64
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n_points - 1) as f64
    }

    /// Riemann mass Σ W·Δx·Δp; ≈ 1 for a truncation-safe state on a grid
    /// that contains the support.
    pub fn mass(&self) -> f64 {
        self.values.sum() * self.dx() * self.dp()
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn sample(&self, x: f64, p: f64) -> Option<f64> {
        let fx = (x - self.x_min) / self.dx();
        let fp = (p - self.p_min) / self.dp();
        if fx < 0.0 || fp < 0.0 {
            return None;
        }
        let (ix, ip) = (fx.floor() as usize, fp.floor() as usize);
        if ix + 1 >= self.n_points || ip + 1 >= self.n_points {
            return None;
        }
        let (tx, tp) = (fx - ix as f64, fp - ip as f64);
        let v00 = self.values[[ix, ip]];
        let v10 = self.values[[ix + 1, ip]];
        let v01 = self.values[[ix, ip + 1]];
        let v11 = self.values[[ix + 1, ip + 1]];
        Some(
            v00 * (1.0 - tx) * (1.0 - tp)
                + v10 * tx * (1.0 - tp)
                + v01 * (1.0 - tx) * tp
                + v11 * tx * tp,
        )
    }
}

/// Grid request for [`wigner`].
#[derive(Debug, Clone, Copy)]
pub struct WignerGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_points: usize,
}

impl WignerGridSpec {
    /// Square grid of 201² points spanning ±(√(2·n_max) + 3), which covers
    /// the truncated phase-space support.
    pub fn default_for(n_max: usize) -> Self {
        let half = (2.0 * n_max as f64).sqrt() + 3.0;
        WignerGridSpec {
            x_min: -half,
            x_max: half,
            p_min: -half,
            p_max: half,
            n_points: 201,
        }
    }
}

/// Wigner function `W(x, p) = (1/π)∫⟨x+y|ρ|x−y⟩e^{−2ipy}dy` (ħ = 1,
/// x̂ = (b+b†)/√2), evaluated through the closed-form kernel of each Fock
/// pair |m⟩⟨n|: a Gaussian times an associated Laguerre polynomial,
///
/// `K_{mn} = (1/π)(−1)ⁿ √(n!/m!) (√2(x−ip))^{m−n} e^{−x²−p²} L_n^{m−n}(2(x²+p²))`
///
/// for m ≥ n, with the m < n half supplied by Hermiticity. The vacuum gives
/// W(0,0) = 1/π and ∫W dx dp = 1.
pub fn wigner(rho_osc: &DensityMatrix, spec: &WignerGridSpec) -> Result<WignerGrid> {
    let n_max = require_single_oscillator(rho_osc)?;
    if !truncation_report(rho_osc).safe {
        log::warn!("wigner: state is not truncation-safe; the map may miss mass");
    }
    if spec.n_points < 2 {
        return Err(Error::InvalidSpec("wigner grid needs at least 2 points".into()));
    }
    let m = rho_osc.matrix();
    let np = spec.n_points;
    let xs: Vec<f64> = (0..np)
        .map(|i| spec.x_min + (spec.x_max - spec.x_min) * i as f64 / (np - 1) as f64)
        .collect();
    let ps: Vec<f64> = (0..np)
        .map(|i| spec.p_min + (spec.p_max - spec.p_min) * i as f64 / (np - 1) as f64)
        .collect();

    let mut values = Array2::zeros((np, np));
    values
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(ix, mut row)| {
            let x = xs[ix];
            for (ip, out) in row.iter_mut().enumerate() {
                *out = wigner_point(m, n_max, x, ps[ip]);
            }
        });

    let grid = WignerGrid {
        x_min: spec.x_min,
        x_max: spec.x_max,
        p_min: spec.p_min,
        p_max: spec.p_max,
        n_points: np,
        values,
    };
    let mass = grid.mass();
    if (mass - 1.0).abs() > 0.02 {
        log::warn!("wigner grid holds mass {mass:.4}; grid may be too small");
    }
    Ok(grid)
}

fn wigner_point(rho: &Array2<C64>, n_max: usize, x: f64, p: f64) -> f64 {
    let r2 = x * x + p * p;
    let u = 2.0 * r2;
    let gauss = (-r2).exp();
    let r = r2.sqrt();
    let theta = p.atan2(x);
    let dim = n_max + 1;
    let mut acc = 0.0f64;
    // k = m − n diagonal of the density matrix
    for k in 0..dim {
        // phase of (x − ip)^k
        let (sin_k, cos_k) = (-(k as f64) * theta).sin_cos();
        // A_{n,k} = (√2 r)^k √(n!/(n+k)!), built incrementally in n
        let mut a = 1.0f64;
        for j in 1..=k {
            a *= std::f64::consts::SQRT_2 * r / (j as f64).sqrt();
        }
        // Laguerre recurrence in n at fixed k:
        // (n+1) L_{n+1}^k = (2n+1+k−u) L_n^k − (n+k) L_{n−1}^k
        let mut l_prev = 0.0f64;
        let mut l = 1.0f64;
        let mut sign = 1.0f64; // (−1)^n
        for n in 0..dim - k {
            let m_idx = n + k;
            let term = sign * a * l;
            if k == 0 {
                acc += rho[[n, n]].re * term;
            } else {
                let z = rho[[m_idx, n]];
                // 2 Re(ρ_{mn} e^{−ikθ}) · magnitude
                acc += 2.0 * (z.re * cos_k - z.im * sin_k) * term;
            }
            let nf = n as f64 + 1.0;
            let next = (((2 * n + 1 + k) as f64 - u) * l - (n + k) as f64 * l_prev) / nf;
            l_prev = l;
            l = next;
            sign = -sign;
            a *= ((n + 1) as f64 / (n + 1 + k) as f64).sqrt();
        }
    }
    acc * gauss / std::f64::consts::PI
}

/// How ring-like a Wigner map is: `1 − (max−min)/(max+min)` of W sampled on
/// the circle through the radial-profile maximum. Near 1 for a phase-diffused
/// ring, near 0 for a displaced blob. Undefined when the radial maximum sits
/// at the origin (no ring) or the map is flat.
pub fn ring_symmetry_score(w: &WignerGrid) -> Result<f64> {
    let dx = w.dx();
    if (w.x_min + w.x_max).abs() > dx || (w.p_min + w.p_max).abs() > w.dp() {
        return Err(Error::InvalidSpec("ring score needs an origin-centered grid".into()));
    }
    let peak = w.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 1e-12) {
        return Err(Error::UndefinedObservable("flat Wigner map".into()));
    }
    let r_max = w.x_max.min(w.p_max);
    let dr = dx.min(w.dp());
    let n_r = (r_max / dr).floor() as usize;
    let n_theta = 256;
    let mut best_r = 0.0;
    let mut best_mean = f64::NEG_INFINITY;
    for k in 0..n_r {
        let r = k as f64 * dr;
        let mut mean = 0.0;
        let mut cnt = 0usize;
        for t in 0..n_theta {
            let th = 2.0 * std::f64::consts::PI * t as f64 / n_theta as f64;
            if let Some(v) = w.sample(r * th.cos(), r * th.sin()) {
                mean += v;
                cnt += 1;
            }
        }
        if cnt == n_theta {
            mean /= cnt as f64;
            if mean > best_mean {
                best_mean = mean;
                best_r = r;
            }
        }
    }
    if best_r < 2.0 * dr {
        return Err(Error::UndefinedObservable(
            "radial maximum at the origin; no ring".into(),
        ));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 0..n_theta {
        let th = 2.0 * std::f64::consts::PI * t as f64 / n_theta as f64;
        if let Some(v) = w.sample(best_r * th.cos(), best_r * th.sin()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi + lo <= 0.0 {
        return Err(Error::UndefinedObservable("ring circle has no positive mass".into()));
    }
    Ok(1.0 - (hi - lo) / (hi + lo))
}

/// Frequency window for [`power_spectrum`]. Frequencies are offsets from the
/// oscillator frequency (the regression runs in the rotating frame of the
/// effective Hamiltonian).
#[derive(Debug, Clone, Copy)]
pub struct SpectrumWindow {
    /// Half-width of the frequency band.
    pub omega_span: f64,
    pub n_omega: usize,
    /// Correlator horizon; default 50/γ.
    pub tau_max: Option<f64>,
}

impl SpectrumWindow {
    pub fn default_for(config: &ChainConfig) -> Self {
        SpectrumWindow {
            omega_span: 60.0 * config.gamma_mech.max(1e-6),
            n_omega: 4097,
            tau_max: None,
        }
    }
}

/// Emission spectrum and its linewidth.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Offsets from the oscillator frequency.
    pub omegas: Vec<f64>,
    /// `S(ω) = 2 Re ∫₀^∞ C(τ) e^{−iωτ} dτ`, clamped at 0 where truncation
    /// noise dips below zero.
    pub s_values: Vec<f64>,
    /// Full width at half maximum by linear interpolation at the peak.
    pub fwhm: f64,
    /// `C(0) = ⟨b†b⟩_ss`.
    pub c0: f64,
    /// `∫S(ω)dω/2π` over the window, before clamping; ≈ c0 when the window
    /// captures the spectral mass (Parseval).
    pub parseval_integral: f64,
}

/// Two-time correlator `C(τ) = ⟨b†(τ) b(0)⟩_ss` by the quantum regression
/// theorem: `X(τ) = e^{Lτ}[b ρ_ss]` is integrated under the time-independent
/// effective-Hamiltonian Liouvillian of the given case (RK4 on the operator,
/// never materializing the superoperator), and `C(τ) = Tr[b† X(τ)]`. The
/// evolution stops once `|C| < 1e−3·|C(0)|` or at `τ_max = 50/γ`.
///
/// If the correlator has not decayed by the horizon, the transform is
/// completed with the analytic tail of an exponential fitted to the last
/// quarter of the record; this removes truncation sidelobes that would
/// otherwise corrupt the linewidth and the Parseval mass.
pub fn power_spectrum(
    config: &ChainConfig,
    case: ResonanceCase,
    rho_ss: &DensityMatrix,
    window: &SpectrumWindow,
) -> Result<SpectrumResult> {
    let chain = ChainLayout::new(config)?;
    crate::hilbert::check_layouts(rho_ss.layout(), chain.layout())?;
    let osc_site = config
        .sites
        .iter()
        .position(|s| s.has_oscillator())
        .ok_or_else(|| Error::Topology("config has no oscillator".into()))?;
    let b = chain.b(osc_site)?;
    let b_dag = b.dagger();

    let dissipators = DissipatorSet::from_config(config, &chain)?;
    let h_eff = match case {
        ResonanceCase::CaseI => effective_hamiltonian_case1(config, &chain)?,
        ResonanceCase::CaseII => effective_hamiltonian_case2(config, &chain)?,
    };
    let generator = effective_generator(h_eff, &dissipators);
    let dt = recommended_step(&generator, &dissipators);
    let mut prop = Propagator::new(&generator, &dissipators)?;

    // X(0) = b ρ_ss
    let mut x: Array2<C64> = b.matrix().dot(rho_ss.matrix());
    let tau_max = window.tau_max.unwrap_or(50.0 / config.gamma_mech.max(1e-9));
    let n_steps = (tau_max / dt).ceil() as usize;

    let trace_bd = |x: &Array2<C64>| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for ((i, j), v) in b_dag.matrix().indexed_iter() {
            if v.norm_sqr() > 0.0 {
                acc += v * x[[j, i]];
            }
        }
        acc
    };

    let mut taus: Vec<f64> = Vec::with_capacity(n_steps + 1);
    let mut corr: Vec<C64> = Vec::with_capacity(n_steps + 1);
    taus.push(0.0);
    corr.push(trace_bd(&x));
    let c0 = corr[0];
    if c0.re <= 0.0 {
        return Err(Error::UndefinedObservable(format!(
            "spectrum undefined: C(0) = {:.3e}",
            c0.re
        )));
    }
    for step in 0..n_steps {
        prop.step(step as f64 * dt, dt, &mut x);
        let c = trace_bd(&x);
        taus.push((step + 1) as f64 * dt);
        corr.push(c);
        if c.norm() < 1e-3 * c0.norm() {
            break;
        }
    }

    // Optional analytic tail: C(τ > T) ≈ C(T) e^{(iΩ̃ − r)(τ − T)}.
    let tail = fit_exponential_tail(&taus, &corr);

    let span = window.omega_span;
    let n_omega = window.n_omega.max(3);
    let omegas: Vec<f64> = (0..n_omega)
        .map(|k| -span + 2.0 * span * k as f64 / (n_omega - 1) as f64)
        .collect();
    let t_last = *taus.last().expect("nonempty correlator");
    let c_last = *corr.last().expect("nonempty correlator");

    let raw: Vec<f64> = omegas
        .par_iter()
        .map(|&w| {
            // trapezoid ∫₀^T C(τ)e^{−iωτ}dτ with incremental phase rotation
            let rot_step = C64::from_polar(1.0, -w * dt);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = 0.5 * corr[0];
            for c in corr.iter().take(corr.len() - 1).skip(1) {
                phase *= rot_step;
                acc += c * phase;
            }
            phase *= rot_step;
            acc += 0.5 * c_last * phase;
            let mut integral = acc * dt;
            if let Some((rate, omega_tilde)) = tail {
                // ∫_T^∞ C(T) e^{(iΩ̃−r)(τ−T)} e^{−iωτ} dτ
                let denom = C64::new(rate, w - omega_tilde);
                integral += c_last * C64::from_polar(1.0, -w * t_last) / denom;
            }
            2.0 * integral.re
        })
        .collect();

    let d_omega = 2.0 * span / (n_omega - 1) as f64;
    let parseval_integral =
        raw.iter().sum::<f64>() * d_omega / (2.0 * std::f64::consts::PI);
    let s_values: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let fwhm = fwhm_by_interpolation(&omegas, &s_values)?;

    Ok(SpectrumResult { omegas, s_values, fwhm, c0: c0.re, parseval_integral })
}

/// Least-squares exponential fit over the last quarter of the correlator;
/// `None` when the record already decayed to the stop threshold or the fit
/// finds no decay.
fn fit_exponential_tail(taus: &[f64], corr: &[C64]) -> Option<(f64, f64)> {
    let n = corr.len();
    if n < 16 {
        return None;
    }
    let c0 = corr[0].norm();
    let c_last = corr[n - 1].norm();
    if c_last < 2e-3 * c0 {
        return None; // decayed; no tail needed
    }
    let start = 3 * n / 4;
    let seg_t = &taus[start..];
    let seg_c = &corr[start..];
    let mut sum_t = 0.0;
    let mut sum_l = 0.0;
    let mut sum_tt = 0.0;
    let mut sum_tl = 0.0;
    let mut sum_p = 0.0;
    let mut sum_tp = 0.0;
    let mut prev_arg = seg_c[0].arg();
    let mut unwrapped = prev_arg;
    let m = seg_t.len() as f64;
    for (t, c) in seg_t.iter().zip(seg_c) {
        if c.norm() < 1e-300 {
            return None;
        }
        let l = c.norm().ln();
        let arg = c.arg();
        let mut delta = arg - prev_arg;
        while delta > std::f64::consts::PI {
            delta -= 2.0 * std::f64::consts::PI;
        }
        while delta < -std::f64::consts::PI {
            delta += 2.0 * std::f64::consts::PI;
        }
        unwrapped += delta;
        prev_arg = arg;
        sum_t += t;
        sum_l += l;
        sum_tt += t * t;
        sum_tl += t * l;
        sum_p += unwrapped;
        sum_tp += t * unwrapped;
    }
    let denom = m * sum_tt - sum_t * sum_t;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope_l = (m * sum_tl - sum_t * sum_l) / denom;
    let slope_p = (m * sum_tp - sum_t * sum_p) / denom;
    let rate = -slope_l;
    if !(rate > 0.0 && rate.is_finite() && slope_p.is_finite()) {
        return None;
    }
    Some((rate, slope_p))
}

/// FWHM by linear interpolation between the half-maximum crossings nearest
/// the peak.
fn fwhm_by_interpolation(omegas: &[f64], s: &[f64]) -> Result<f64> {
    let (peak_idx, &peak) = s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite spectrum values"))
        .ok_or_else(|| Error::UndefinedObservable("empty spectrum".into()))?;
    if peak <= 0.0 {
        return Err(Error::UndefinedObservable("non-positive spectrum peak".into()));
    }
    let half = 0.5 * peak;
    let mut left = omegas[0];
    for i in (1..=peak_idx).rev() {
        if s[i - 1] <= half && s[i] >= half {
            let t = (half - s[i - 1]) / (s[i] - s[i - 1]).max(1e-300);
            left = omegas[i - 1] + t * (omegas[i] - omegas[i - 1]);
            break;
        }
    }
    let mut right = *omegas.last().expect("nonempty");
    for i in peak_idx..s.len() - 1 {
        if s[i] >= half && s[i + 1] <= half {
            let t = (s[i] - half) / (s[i] - s[i + 1]).max(1e-300);
            right = omegas[i] + t * (omegas[i + 1] - omegas[i]);
            break;
        }
    }
    Ok(right - left)
}

/// `(v − min)/(max − min)` per element; errors on fewer than two distinct
/// values.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::ConstantList);
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::ConstantList);
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Synchronization metrics of an oscillator array over time.
#[derive(Debug, Clone)]
pub struct SyncMetrics {
    /// Kuramoto order parameter per sampled time; `None` when every active
    /// phase is undefined there.
    pub r_k: Vec<Option<f64>>,
    /// Instantaneous phases `arg⟨b_j⟩` per active site (outer index follows
    /// `active`), `None` below the amplitude floor.
    pub phases: Vec<Vec<Option<f64>>>,
    /// Pairwise differences `ΔΦ_{j,k} = arg⟨b_j⟩ − arg⟨b_k⟩` wrapped to
    /// [0, 2π), for every pair of active sites with j < k.
    pub pair_diffs: Vec<((usize, usize), Vec<Option<f64>>)>,
}

/// Kuramoto order parameter `r_K(t) = |Σ_j e^{iφ_j(t)}| / M` over the active
/// (lasing) sites, with `φ_j = arg⟨b_j⟩` and phases discarded below the
/// amplitude floor. `b[j]` and `n[j]` are the per-site time series of `⟨b_j⟩`
/// and `⟨b_j†b_j⟩`.
pub fn kuramoto(b: &[Vec<C64>], n: &[Vec<f64>], active: &[usize]) -> Result<SyncMetrics> {
    if active.is_empty() {
        return Err(Error::InvalidSpec("active site set is empty".into()));
    }
    for &j in active {
        if j >= b.len() || j >= n.len() {
            return Err(Error::IndexOutOfRange { index: j, len: b.len() });
        }
    }
    let n_t = b[active[0]].len();
    for &j in active {
        if b[j].len() != n_t || n[j].len() != n_t {
            return Err(Error::InvalidSpec("per-site series lengths differ".into()));
        }
    }

    let mut phases: Vec<Vec<Option<f64>>> = Vec::with_capacity(active.len());
    for &j in active {
        let mut site = Vec::with_capacity(n_t);
        for t in 0..n_t {
            let amp = b[j][t].norm();
            let floor = PHASE_FLOOR_FRACTION * (n[j][t] + 1e-12).sqrt();
            site.push((amp >= floor).then(|| b[j][t].arg()));
        }
        phases.push(site);
    }

    let mut r_k = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let mut sum = C64::new(0.0, 0.0);
        let mut m = 0usize;
        for site in &phases {
            if let Some(phi) = site[t] {
                sum += C64::from_polar(1.0, phi);
                m += 1;
            }
        }
        r_k.push((m > 0).then(|| sum.norm() / m as f64));
    }

    let tau = 2.0 * std::f64::consts::PI;
    let mut pair_diffs = Vec::new();
    for a in 0..active.len() {
        for bi in (a + 1)..active.len() {
            let series: Vec<Option<f64>> = (0..n_t)
                .map(|t| match (phases[a][t], phases[bi][t]) {
                    (Some(pa), Some(pb)) => Some((pa - pb).rem_euclid(tau)),
                    _ => None,
                })
                .collect();
            pair_diffs.push(((active[a], active[bi]), series));
        }
    }
    Ok(SyncMetrics { r_k, phases, pair_diffs })
}
