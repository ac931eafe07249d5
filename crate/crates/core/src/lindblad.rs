//! Time-dependent Lindblad master equation:
//!
//! `dρ/dt = −i[H(t), ρ] + Σ_c rate_c (L ρ L† − ½{L†L, ρ})`
//!
//! integrated by fixed-step fourth-order Runge-Kutta. The right-hand side is
//! always evaluated in commutator form; the `dim² × dim²` superoperator is
//! never materialized. All jump operators here are embedded ladder operators
//! with at most one nonzero per row and column, which makes `LρL†` a gather
//! and `L†L` diagonal — both O(dim²) per channel.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hilbert::{
    check_layouts, spin_ops, truncation_report, DensityMatrix, Operator,
};
use crate::model::{ChainConfig, ChainLayout, DrivenHamiltonian};

/// Abort threshold: any |ρ| element beyond this means the step blew up.
pub const INSTABILITY_LIMIT: f64 = 1e6;

/// One dissipation channel.
#[derive(Debug, Clone)]
pub struct Channel {
    pub jump: Operator,
    pub rate: f64,
}

/// The thermal dissipator set of Eq.-of-motion form: per spin, σ⁻ at
/// Γ(1+n̄ˢ) and σ⁺ at Γn̄ˢ; per oscillator, b at γ(1+n̄ᵐ) and b† at γn̄ᵐ.
#[derive(Debug, Clone)]
pub struct DissipatorSet {
    channels: Vec<Channel>,
}

impl DissipatorSet {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        for (k, c) in channels.iter().enumerate() {
            if !(c.rate.is_finite() && c.rate >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "channel {k} has invalid rate {}",
                    c.rate
                )));
            }
            check_layouts(c.jump.layout(), channels[0].jump.layout())?;
        }
        Ok(DissipatorSet { channels })
    }

    pub fn from_config(config: &ChainConfig, chain: &ChainLayout) -> Result<Self> {
        chain.matches(config)?;
        let ops = spin_ops();
        let mut channels = Vec::new();
        for (j, s) in config.sites.iter().enumerate() {
            channels.push(Channel {
                jump: chain.spin_op(j, &ops.sm)?,
                rate: config.gamma_spin * (1.0 + config.nbar_spin),
            });
            channels.push(Channel {
                jump: chain.spin_op(j, &ops.sp)?,
                rate: config.gamma_spin * config.nbar_spin,
            });
            if s.has_oscillator() {
                let b = chain.b(j)?;
                channels.push(Channel {
                    jump: b.clone(),
                    rate: config.gamma_mech * (1.0 + config.nbar_mech),
                });
                channels.push(Channel {
                    jump: b.dagger(),
                    rate: config.gamma_mech * config.nbar_mech,
                });
            }
        }
        DissipatorSet::new(channels)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Largest per-channel decay rate `rate · max diag(L†L)`; bounds the
    /// dissipative eigenvalues for step-size accounting.
    pub fn max_decay_scale(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.channels {
            if c.rate == 0.0 {
                continue;
            }
            let l = c.jump.matrix();
            let d = l.nrows();
            for col in 0..d {
                let mut diag = 0.0;
                for row in 0..d {
                    diag += l[[row, col]].norm_sqr();
                }
                worst = worst.max(c.rate * diag);
            }
        }
        worst
    }
}

/// Fixed-step integration parameters. `dt` must respect the ceiling
/// `2π/(50·f_max)` of the generator it is used with.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationSpec {
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub hermitize_every: usize,
    pub renormalize_trace: bool,
}

impl IntegrationSpec {
    /// Step at the ceiling for the given largest model frequency, with a
    /// target number of recorded samples.
    pub fn at_ceiling(t_end: f64, f_max: f64, target_samples: usize) -> Self {
        Self::with_dt(t_end, step_ceiling(f_max), target_samples)
    }

    /// Largest safe step for this generator (ceiling and RK4 stability).
    pub fn for_generator(
        t_end: f64,
        h: &DrivenHamiltonian,
        dissipators: &DissipatorSet,
        target_samples: usize,
    ) -> Self {
        Self::with_dt(t_end, recommended_step(h, dissipators), target_samples)
    }

    fn with_dt(t_end: f64, dt: f64, target_samples: usize) -> Self {
        let n_steps = (t_end / dt).ceil().max(1.0) as usize;
        let sample_every = (n_steps / target_samples.max(1)).max(1);
        IntegrationSpec {
            t_end,
            dt,
            sample_every,
            hermitize_every: 100,
            renormalize_trace: true,
        }
    }

    pub fn validate(&self, f_max: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSpec(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidSpec(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.sample_every == 0 || self.hermitize_every == 0 {
            return Err(Error::InvalidSpec(
                "sample_every and hermitize_every must be nonzero".into(),
            ));
        }
        let ceiling = step_ceiling(f_max);
        if self.dt > ceiling * (1.0 + 1e-9) {
            return Err(Error::StepTooLarge { dt: self.dt, ceiling });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).ceil().max(1.0) as usize
    }
}

/// `dt` ceiling resolving the fastest oscillation: 2π/(50·f_max).
pub fn step_ceiling(f_max: f64) -> f64 {
    2.0 * std::f64::consts::PI / (50.0 * f_max.max(1e-12))
}

/// Explicit-RK4 stability margin on the imaginary axis (true boundary 2√2).
const RK4_STABILITY_MARGIN: f64 = 2.5;

/// Largest step that is both below the oscillation-resolving ceiling and
/// inside the RK4 stability region of the generator. The second limit is set
/// by the Hamiltonian's eigenvalue *spread* (ω·n_max on a Fock ladder) and by
/// the fastest dissipative rate, not by any single parameter frequency.
pub fn recommended_step(h: &DrivenHamiltonian, dissipators: &DissipatorSet) -> f64 {
    let ceiling = step_ceiling(h.f_max());
    let spread = h.spectral_spread_bound();
    let decay = dissipators.max_decay_scale();
    let stability = RK4_STABILITY_MARGIN / spread.max(2.0 * decay).max(1e-12);
    ceiling.min(stability)
}

/// Time series of named scalar observables sampled during integration.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    observables: BTreeMap<String, Vec<C64>>,
    /// Set when the final state failed the truncation-safety check.
    pub truncation_flagged: bool,
}

impl TrajectoryRecord {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.observables.keys().map(|s| s.as_str())
    }

    pub fn get(&self, key: &str) -> Result<&[C64]> {
        self.observables
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::KeyAbsent(key.to_string()))
    }

    pub fn insert(&mut self, key: &str, values: Vec<C64>) {
        self.observables.insert(key.to_string(), values);
    }

    /// Append one value to a series, creating it on first use.
    pub fn push(&mut self, key: &str, value: C64) {
        self.observables.entry(key.to_string()).or_default().push(value);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Result of one master-equation integration.
#[derive(Debug, Clone)]
pub struct IntegrationOutput {
    pub record: TrajectoryRecord,
    pub final_state: DensityMatrix,
}

// ---------------------------------------------------------------------------
// compiled machinery: split real/imaginary storage so the inner loops are
// plain fused multiply-add streams, and a fused per-row evaluation so every
// output row is written exactly once per right-hand-side call
// ---------------------------------------------------------------------------

/// Row-major complex matrix as two f64 planes.
#[derive(Debug, Clone)]
pub(crate) struct Planes {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Planes {
    fn zeros(n: usize) -> Self {
        Planes { re: vec![0.0; n], im: vec![0.0; n] }
    }

    fn from_matrix(m: &Array2<C64>) -> Self {
        let mut p = Planes::zeros(m.len());
        for (k, v) in m.iter().enumerate() {
            p.re[k] = v.re;
            p.im[k] = v.im;
        }
        p
    }

    fn to_matrix(&self, d: usize) -> Array2<C64> {
        Array2::from_shape_fn((d, d), |(i, j)| {
            C64::new(self.re[i * d + j], self.im[i * d + j])
        })
    }

}

/// `out += (ar + i·ai) · x` over matching slices.
#[inline]
fn caxpy(
    ar: f64,
    ai: f64,
    xre: &[f64],
    xim: &[f64],
    ore: &mut [f64],
    oim: &mut [f64],
) {
    if ai == 0.0 {
        for (((o_r, o_i), &x_r), &x_i) in
            ore.iter_mut().zip(oim.iter_mut()).zip(xre).zip(xim)
        {
            *o_r += ar * x_r;
            *o_i += ar * x_i;
        }
    } else if ar == 0.0 {
        for (((o_r, o_i), &x_r), &x_i) in
            ore.iter_mut().zip(oim.iter_mut()).zip(xre).zip(xim)
        {
            *o_r -= ai * x_i;
            *o_i += ai * x_r;
        }
    } else {
        for (((o_r, o_i), &x_r), &x_i) in
            ore.iter_mut().zip(oim.iter_mut()).zip(xre).zip(xim)
        {
            *o_r += ar * x_r - ai * x_i;
            *o_i += ar * x_i + ai * x_r;
        }
    }
}

/// Sparse matrix in coordinate form over split storage; probe evaluation and
/// the fallback path for operators without band structure.
#[derive(Debug, Clone)]
pub(crate) struct SparseOp {
    rows: Vec<u32>,
    cols: Vec<u32>,
    vre: Vec<f64>,
    vim: Vec<f64>,
    dim: usize,
}

impl SparseOp {
    pub(crate) fn from_dense(m: &Array2<C64>) -> Self {
        let dim = m.nrows();
        let mut s = SparseOp {
            rows: Vec::new(),
            cols: Vec::new(),
            vre: Vec::new(),
            vim: Vec::new(),
            dim,
        };
        for ((i, j), v) in m.indexed_iter() {
            if v.norm_sqr() > 0.0 {
                s.rows.push(i as u32);
                s.cols.push(j as u32);
                s.vre.push(v.re);
                s.vim.push(v.im);
            }
        }
        s
    }

    fn nnz(&self) -> usize {
        self.rows.len()
    }

    /// `out += α · S · x`, one row-axpy per nonzero.
    fn left_mul_into(&self, ar: f64, ai: f64, x: &Planes, out: &mut Planes) {
        let d = self.dim;
        for e in 0..self.rows.len() {
            let (i, k) = (self.rows[e] as usize, self.cols[e] as usize);
            let cr = ar * self.vre[e] - ai * self.vim[e];
            let ci = ar * self.vim[e] + ai * self.vre[e];
            caxpy(
                cr,
                ci,
                &x.re[k * d..k * d + d],
                &x.im[k * d..k * d + d],
                &mut out.re[i * d..i * d + d],
                &mut out.im[i * d..i * d + d],
            );
        }
    }

    /// `out += α · x · S` (strided column updates; cold path).
    fn right_mul_into(&self, ar: f64, ai: f64, x: &Planes, out: &mut Planes) {
        let d = self.dim;
        for e in 0..self.rows.len() {
            let (k, j) = (self.rows[e] as usize, self.cols[e] as usize);
            let cr = ar * self.vre[e] - ai * self.vim[e];
            let ci = ar * self.vim[e] + ai * self.vre[e];
            for i in 0..d {
                let xr = x.re[i * d + k];
                let xi = x.im[i * d + k];
                out.re[i * d + j] += cr * xr - ci * xi;
                out.im[i * d + j] += cr * xi + ci * xr;
            }
        }
    }

    /// `Tr(S · x)` = Σ S[i,j]·x[j,i].
    fn trace_with(&self, x: &Planes) -> C64 {
        let d = self.dim;
        let mut acc_r = 0.0;
        let mut acc_i = 0.0;
        for e in 0..self.rows.len() {
            let (i, j) = (self.rows[e] as usize, self.cols[e] as usize);
            let xr = x.re[j * d + i];
            let xi = x.im[j * d + i];
            acc_r += self.vre[e] * xr - self.vim[e] * xi;
            acc_i += self.vre[e] * xi + self.vim[e] * xr;
        }
        C64::new(acc_r, acc_i)
    }
}

/// One uniform-shift band of a Hamiltonian term: entries `M[i, i+shift] = w[i]`.
/// Products of embedded ladder operators (σ±, σz, b, b†) are single bands, so
/// every Hamiltonian built by the model layer is a short sum of bands.
#[derive(Debug, Clone)]
struct Band {
    shift: i64,
    wre: Vec<f64>,
    wim: Vec<f64>,
    w_is_real: bool,
    /// Index into the drive table; `None` means the static part.
    drive: Option<usize>,
}

/// Band decompositions with more than this many bands per term fall back to
/// the coordinate path (a dense random matrix would otherwise cost d per
/// entry).
const MAX_BANDS: usize = 32;

fn extract_bands(m: &Array2<C64>, drive: Option<usize>) -> Option<Vec<Band>> {
    let d = m.nrows();
    let mut by_shift: BTreeMap<i64, Band> = BTreeMap::new();
    for ((i, j), v) in m.indexed_iter() {
        if v.norm_sqr() == 0.0 {
            continue;
        }
        let s = j as i64 - i as i64;
        let band = by_shift.entry(s).or_insert_with(|| Band {
            shift: s,
            wre: vec![0.0; d],
            wim: vec![0.0; d],
            w_is_real: true,
            drive,
        });
        band.wre[i] = v.re;
        band.wim[i] = v.im;
        if v.im != 0.0 {
            band.w_is_real = false;
        }
        if by_shift.len() > MAX_BANDS {
            return None;
        }
    }
    Some(by_shift.into_values().collect())
}

/// A real-valued jump operator whose single nonzero per row sits at a fixed
/// column offset: `L[i, i + shift] = w[i]`. Every embedded ladder operator
/// has this form, which turns `L x L†` into contiguous weighted row updates:
/// `out[i, j] += rate · w[i] · w[j] · x[i+shift, j+shift]`.
#[derive(Debug, Clone)]
struct UniformShiftChannel {
    rate: f64,
    shift: i64,
    /// Dense weight vector, zero off the support.
    w: Vec<f64>,
}

#[derive(Debug, Clone)]
enum GeneralChannel {
    General {
        rate: f64,
        l: SparseOp,
        l_dag: SparseOp,
        ldl: SparseOp,
    },
}

enum CompiledChannel {
    Shift(UniformShiftChannel),
    Fallback(GeneralChannel),
}

fn compile_channel(c: &Channel) -> Option<CompiledChannel> {
    if c.rate == 0.0 {
        return None;
    }
    let m = c.jump.matrix();
    let sp = SparseOp::from_dense(m);
    let d = m.nrows();
    let mut row_count = vec![0u32; d];
    let mut col_count = vec![0u32; d];
    let mut all_real = true;
    let mut shift: Option<i64> = None;
    let mut uniform = true;
    for e in 0..sp.nnz() {
        row_count[sp.rows[e] as usize] += 1;
        col_count[sp.cols[e] as usize] += 1;
        if sp.vim[e] != 0.0 {
            all_real = false;
        }
        let s = sp.cols[e] as i64 - sp.rows[e] as i64;
        match shift {
            None => shift = Some(s),
            Some(s0) if s0 != s => uniform = false,
            _ => {}
        }
    }
    let simple = all_real
        && uniform
        && sp.nnz() > 0
        && row_count.iter().all(|&c| c <= 1)
        && col_count.iter().all(|&c| c <= 1);
    if simple {
        let mut w = vec![0.0f64; d];
        for e in 0..sp.nnz() {
            w[sp.rows[e] as usize] = sp.vre[e];
        }
        Some(CompiledChannel::Shift(UniformShiftChannel {
            rate: c.rate,
            shift: shift.unwrap_or(0),
            w,
        }))
    } else {
        let l_dag_m = m.t().mapv(|z| z.conj());
        let ldl_m = l_dag_m.dot(m);
        Some(CompiledChannel::Fallback(GeneralChannel::General {
            rate: c.rate,
            l: sp,
            l_dag: SparseOp::from_dense(&l_dag_m),
            ldl: SparseOp::from_dense(&ldl_m),
        }))
    }
}

/// Generator of the master equation compiled for repeated application. One
/// code path serves Hermitian density matrices and the non-Hermitian
/// operators of the quantum-regression evolution alike.
///
/// The right-hand side is evaluated row by row: every contribution to output
/// row `i` — the commutator bands from both sides, the combined shift-channel
/// anticommutator, and the channel gain terms — is accumulated in one pass,
/// so each output row is streamed through cache exactly once.
pub struct Propagator {
    dim: usize,
    /// Commutator bands (static part and drives).
    bands: Vec<Band>,
    /// Drive frequencies; band coefficients scale with cos(Ω_k t).
    drive_freqs: Vec<f64>,
    /// Fallback terms for non-banded Hamiltonians: (drive index, op).
    coo_terms: Vec<(Option<usize>, SparseOp)>,
    shift_channels: Vec<UniformShiftChannel>,
    general_channels: Vec<GeneralChannel>,
    /// Combined `Σ_shift rate · diag(L†L)` for the one-pass anticommutator
    /// `−½(D_i + D_j)·x_ij`.
    damp_diag: Vec<f64>,
    scratch: Vec<Planes>,
}

impl Propagator {
    pub fn new(h: &DrivenHamiltonian, dissipators: &DissipatorSet) -> Result<Self> {
        let dim = h.layout().total_dim();
        for c in dissipators.channels() {
            check_layouts(c.jump.layout(), h.layout())?;
        }
        let mut bands = Vec::new();
        let mut coo_terms = Vec::new();
        match extract_bands(h.static_part().matrix(), None) {
            Some(b) => bands.extend(b),
            None => coo_terms.push((None, SparseOp::from_dense(h.static_part().matrix()))),
        }
        let mut drive_freqs = Vec::new();
        for (k, (omega, x)) in h.drives().iter().enumerate() {
            drive_freqs.push(*omega);
            match extract_bands(x.matrix(), Some(k)) {
                Some(b) => bands.extend(b),
                None => coo_terms.push((Some(k), SparseOp::from_dense(x.matrix()))),
            }
        }

        let mut damp_diag = vec![0.0f64; dim];
        let mut shift_channels = Vec::new();
        let mut general_channels = Vec::new();
        for c in dissipators.channels() {
            match compile_channel(c) {
                Some(CompiledChannel::Shift(sc)) => {
                    for (i, &v) in sc.w.iter().enumerate() {
                        if v != 0.0 {
                            let col = (i as i64 + sc.shift) as usize;
                            damp_diag[col] += sc.rate * v * v;
                        }
                    }
                    shift_channels.push(sc);
                }
                Some(CompiledChannel::Fallback(g)) => general_channels.push(g),
                None => {}
            }
        }
        // acc + two stage buffers + one 16-row derivative block
        let block_rows = 16.min(dim);
        let mut scratch: Vec<Planes> =
            (0..3).map(|_| Planes::zeros(dim * dim)).collect();
        scratch.push(Planes::zeros(block_rows * dim));
        Ok(Propagator {
            dim,
            bands,
            drive_freqs,
            coo_terms,
            shift_channels,
            general_channels,
            damp_diag,
            scratch,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All contributions to output rows `[row0, row0 + out_re.len()/d)`.
    /// `scales[k]` is cos(Ω_k t); the commutator enters as
    /// `−i·scale·(Mx − xM)`. Terms are applied block-wise so the output rows
    /// stay cache-resident while each term streams through them once.
    fn rows_into(
        &self,
        row0: usize,
        out_re: &mut [f64],
        out_im: &mut [f64],
        x: &Planes,
        scales: &[f64],
    ) {
        let d = self.dim;
        let n_rows = out_re.len() / d;
        out_re.fill(0.0);
        out_im.fill(0.0);

        for band in &self.bands {
            let scale = band.drive.map_or(1.0, |k| scales[k]);
            if scale == 0.0 {
                continue;
            }
            let s = band.shift;
            // left: out_i += −i·scale·w[i]·x_{i+s}
            for r in 0..n_rows {
                let i = row0 + r;
                let k = i as i64 + s;
                if k < 0 || k as usize >= d || (band.wre[i] == 0.0 && band.wim[i] == 0.0) {
                    continue;
                }
                let k = k as usize;
                // −i·scale·(wre + i·wim) = scale·wim − i·scale·wre
                caxpy(
                    scale * band.wim[i],
                    -scale * band.wre[i],
                    &x.re[k * d..k * d + d],
                    &x.im[k * d..k * d + d],
                    &mut out_re[r * d..r * d + d],
                    &mut out_im[r * d..r * d + d],
                );
            }
            // right: out_i[j] += +i·scale·w[j−s]·x_i[j−s]
            let j_lo = s.max(0) as usize;
            let j_hi = ((d as i64).min(d as i64 + s)).max(0) as usize;
            if j_lo >= j_hi {
                continue;
            }
            let n = j_hi - j_lo;
            let src = (j_lo as i64 - s) as usize;
            let wre = &band.wre[src..src + n];
            let wim = &band.wim[src..src + n];
            for r in 0..n_rows {
                let i = row0 + r;
                let xr = &x.re[i * d + src..i * d + src + n];
                let xi = &x.im[i * d + src..i * d + src + n];
                let orw = &mut out_re[r * d + j_lo..r * d + j_hi];
                let oiw = &mut out_im[r * d + j_lo..r * d + j_hi];
                if band.w_is_real {
                    for ((o_r, o_i), ((&x_r, &x_i), &w)) in orw
                        .iter_mut()
                        .zip(oiw.iter_mut())
                        .zip(xr.iter().zip(xi).zip(wre))
                    {
                        let t = scale * w;
                        *o_r -= t * x_i;
                        *o_i += t * x_r;
                    }
                } else {
                    for ((o_r, o_i), ((&x_r, &x_i), (&w_r, &w_i))) in orw
                        .iter_mut()
                        .zip(oiw.iter_mut())
                        .zip(xr.iter().zip(xi).zip(wre.iter().zip(wim)))
                    {
                        // +i·scale·(w_r + i·w_i) = −scale·w_i + i·scale·w_r
                        let tr = -scale * w_i;
                        let ti = scale * w_r;
                        *o_r += tr * x_r - ti * x_i;
                        *o_i += tr * x_i + ti * x_r;
                    }
                }
            }
        }

        // −½(D_i + D_j)·x_ij
        for r in 0..n_rows {
            let i = row0 + r;
            let di = self.damp_diag[i];
            let xr = &x.re[i * d..i * d + d];
            let xi = &x.im[i * d..i * d + d];
            let or_ = &mut out_re[r * d..r * d + d];
            let oi_ = &mut out_im[r * d..r * d + d];
            for (((o_r, o_i), (&x_r, &x_i)), &dj) in or_
                .iter_mut()
                .zip(oi_.iter_mut())
                .zip(xr.iter().zip(xi))
                .zip(&self.damp_diag)
            {
                let w = 0.5 * (di + dj);
                *o_r -= w * x_r;
                *o_i -= w * x_i;
            }
        }

        // rate · L x L† with L[i, i+s] = w[i]:
        //   out[i, j] += rate·w[i]·w[j]·x[i+s, j+s]
        for sc in &self.shift_channels {
            let s = sc.shift;
            let j_lo = (-s).max(0) as usize;
            let j_hi = ((d as i64 - s).min(d as i64)).max(0) as usize;
            if j_lo >= j_hi {
                continue;
            }
            let n = j_hi - j_lo;
            let w = &sc.w[j_lo..j_hi];
            for r in 0..n_rows {
                let i = row0 + r;
                let coef = sc.rate * sc.w[i];
                if coef == 0.0 {
                    continue;
                }
                let ci = (i as i64 + s) as usize;
                let src_lo = ci * d + (j_lo as i64 + s) as usize;
                let xr = &x.re[src_lo..src_lo + n];
                let xi = &x.im[src_lo..src_lo + n];
                let orw = &mut out_re[r * d + j_lo..r * d + j_hi];
                let oiw = &mut out_im[r * d + j_lo..r * d + j_hi];
                for ((o_r, o_i), ((&x_r, &x_i), &wj)) in orw
                    .iter_mut()
                    .zip(oiw.iter_mut())
                    .zip(xr.iter().zip(xi).zip(w))
                {
                    let f = coef * wj;
                    *o_r += f * x_r;
                    *o_i += f * x_i;
                }
            }
        }
    }

    /// Write `dx/dt` at time `t` into `out`.
    fn rhs_into(&self, t: f64, x: &Planes, out: &mut Planes) {
        let scales: Vec<f64> =
            self.drive_freqs.iter().map(|omega| (omega * t).cos()).collect();
        let n = out.re.len();
        {
            let (ore, oim) = (&mut out.re[..n], &mut out.im[..n]);
            self.rows_into(0, ore, oim, x, &scales);
        }
        self.cold_terms_into(&scales, x, out);
    }

    /// Non-banded Hamiltonian terms and non-shift channels; empty for every
    /// generator built by the model layer.
    fn cold_terms_into(&self, scales: &[f64], x: &Planes, out: &mut Planes) {
        let d = self.dim;
        for (drive, op) in &self.coo_terms {
            let scale = drive.map_or(1.0, |k| scales[k]);
            if scale == 0.0 {
                continue;
            }
            op.left_mul_into(0.0, -scale, x, out);
            op.right_mul_into(0.0, scale, x, out);
        }
        for GeneralChannel::General { rate, l, l_dag, ldl } in &self.general_channels {
            let mut tmp = Planes::zeros(d * d);
            l.left_mul_into(1.0, 0.0, x, &mut tmp);
            l_dag.right_mul_into(*rate, 0.0, &tmp, out);
            ldl.left_mul_into(-0.5 * rate, 0.0, x, out);
            ldl.right_mul_into(-0.5 * rate, 0.0, x, out);
        }
    }

    fn has_cold_terms(&self) -> bool {
        !self.coo_terms.is_empty() || !self.general_channels.is_empty()
    }

    /// One RK4 stage in accumulator form, evaluated block by block so the
    /// stage derivative never leaves cache: per block of rows,
    /// `k = dx/dt(src)`, then `acc (+)= acc_w·k` and optionally
    /// `next = x + stage_w·k`.
    #[allow(clippy::too_many_arguments)]
    fn stage_pass(
        &self,
        t: f64,
        scales: &[f64],
        src: &Planes,
        x: &Planes,
        acc: &mut Planes,
        acc_w: f64,
        first: bool,
        mut next: Option<(&mut Planes, f64)>,
        k_re: &mut [f64],
        k_im: &mut [f64],
    ) {
        let _ = t;
        let d = self.dim;
        let rows_per = (k_re.len() / d).max(1);
        let mut row0 = 0;
        while row0 < d {
            let rows = rows_per.min(d - row0);
            let kr = &mut k_re[..rows * d];
            let ki = &mut k_im[..rows * d];
            self.rows_into(row0, kr, ki, src, scales);
            let lo = row0 * d;
            let hi = lo + rows * d;
            if first {
                for (((a, &xv), &kv), _) in acc.re[lo..hi]
                    .iter_mut()
                    .zip(&x.re[lo..hi])
                    .zip(kr.iter())
                    .zip(0..)
                {
                    *a = xv + acc_w * kv;
                }
                for (((a, &xv), &kv), _) in acc.im[lo..hi]
                    .iter_mut()
                    .zip(&x.im[lo..hi])
                    .zip(ki.iter())
                    .zip(0..)
                {
                    *a = xv + acc_w * kv;
                }
            } else {
                for (a, &kv) in acc.re[lo..hi].iter_mut().zip(kr.iter()) {
                    *a += acc_w * kv;
                }
                for (a, &kv) in acc.im[lo..hi].iter_mut().zip(ki.iter()) {
                    *a += acc_w * kv;
                }
            }
            if let Some((stage, w)) = next.as_mut() {
                let w = *w;
                for ((s, &xv), &kv) in
                    stage.re[lo..hi].iter_mut().zip(&x.re[lo..hi]).zip(kr.iter())
                {
                    *s = xv + w * kv;
                }
                for ((s, &xv), &kv) in
                    stage.im[lo..hi].iter_mut().zip(&x.im[lo..hi]).zip(ki.iter())
                {
                    *s = xv + w * kv;
                }
            }
            row0 += rows;
        }
    }

    fn drive_scales(&self, t: f64) -> Vec<f64> {
        self.drive_freqs.iter().map(|omega| (omega * t).cos()).collect()
    }

    /// Advance `x` by one RK4 step from time `t`.
    fn step_planes(&mut self, t: f64, dt: f64, x: &mut Planes) {
        if self.has_cold_terms() {
            // straightforward form for generators with non-banded terms
            self.step_planes_generic(t, dt, x);
            return;
        }
        let mut bufs = std::mem::take(&mut self.scratch);
        let (acc, rest) = bufs.split_at_mut(1);
        let (sa, rest) = rest.split_at_mut(1);
        let (sb, kblk) = rest.split_at_mut(1);
        let (acc, sa, sb) = (&mut acc[0], &mut sa[0], &mut sb[0]);
        let d = self.dim;
        let kb = &mut kblk[0];
        let rows_per = (kb.re.len() / d).max(1).min(d);
        let (kr, ki) = (&mut kb.re[..rows_per * d], &mut kb.im[..rows_per * d]);

        let half = 0.5 * dt;
        let sixth = dt / 6.0;
        let third = dt / 3.0;
        let s0 = self.drive_scales(t);
        let s1 = self.drive_scales(t + half);
        let s2 = self.drive_scales(t + dt);
        self.stage_pass(t, &s0, x, x, acc, sixth, true, Some((sa, half)), kr, ki);
        self.stage_pass(t, &s1, sa, x, acc, third, false, Some((sb, half)), kr, ki);
        self.stage_pass(t, &s1, sb, x, acc, third, false, Some((sa, dt)), kr, ki);
        self.stage_pass(t, &s2, sa, x, acc, sixth, false, None, kr, ki);
        std::mem::swap(&mut x.re, &mut acc.re);
        std::mem::swap(&mut x.im, &mut acc.im);
        // The far corners of ρ in the tensor basis decay to absurdly small
        // magnitudes and would otherwise drag the whole step into subnormal
        // arithmetic, which stalls the FPU by orders of magnitude.
        for v in x.re.iter_mut().chain(x.im.iter_mut()) {
            if v.abs() < 1e-200 {
                *v = 0.0;
            }
        }
        self.scratch = bufs;
    }

    fn step_planes_generic(&mut self, t: f64, dt: f64, x: &mut Planes) {
        let n = self.dim * self.dim;
        let mut k1 = Planes::zeros(n);
        let mut k2 = Planes::zeros(n);
        let mut k3 = Planes::zeros(n);
        let mut k4 = Planes::zeros(n);
        let mut stage = Planes::zeros(n);
        self.rhs_into(t, x, &mut k1);
        let half = 0.5 * dt;
        for k in 0..n {
            stage.re[k] = x.re[k] + half * k1.re[k];
            stage.im[k] = x.im[k] + half * k1.im[k];
        }
        self.rhs_into(t + half, &stage, &mut k2);
        for k in 0..n {
            stage.re[k] = x.re[k] + half * k2.re[k];
            stage.im[k] = x.im[k] + half * k2.im[k];
        }
        self.rhs_into(t + half, &stage, &mut k3);
        for k in 0..n {
            stage.re[k] = x.re[k] + dt * k3.re[k];
            stage.im[k] = x.im[k] + dt * k3.im[k];
        }
        self.rhs_into(t + dt, &stage, &mut k4);
        let w = dt / 6.0;
        for k in 0..n {
            x.re[k] += w * (k1.re[k] + 2.0 * (k2.re[k] + k3.re[k]) + k4.re[k]);
            x.im[k] += w * (k1.im[k] + 2.0 * (k2.im[k] + k3.im[k]) + k4.im[k]);
        }
        for v in x.re.iter_mut().chain(x.im.iter_mut()) {
            if v.abs() < 1e-200 {
                *v = 0.0;
            }
        }
    }

    /// Advance a dense complex matrix by one RK4 step (convenience wrapper;
    /// the plane conversion costs O(dim²) per call).
    pub fn step(&mut self, t: f64, dt: f64, x: &mut Array2<C64>) {
        let d = self.dim;
        let mut p = Planes::from_matrix(x);
        self.step_planes(t, dt, &mut p);
        *x = p.to_matrix(d);
    }
}

/// Master-equation right-hand side on dense operators; the contract form used
/// by tests and oracles. Accepts non-Hermitian `rho` (the quantum-regression
/// path evolves `b·ρ_ss`).
pub fn rhs(rho: &Operator, h: &Operator, dissipators: &DissipatorSet) -> Result<Operator> {
    check_layouts(rho.layout(), h.layout())?;
    let driven = DrivenHamiltonian::time_independent(h.clone(), 1.0);
    let prop = Propagator::new(&driven, dissipators)?;
    let d = prop.dim;
    let x = Planes::from_matrix(rho.matrix());
    let mut out = Planes::zeros(d * d);
    prop.rhs_into(0.0, &x, &mut out);
    Operator::new(rho.layout().clone(), out.to_matrix(d))
}

/// Integrate the master equation, sampling `Tr(P ρ)` for each named probe
/// every `sample_every` steps. The density matrix is re-Hermitized (and its
/// trace renormalized, when enabled) every `hermitize_every` steps.
pub fn integrate(
    rho0: &DensityMatrix,
    h: &DrivenHamiltonian,
    dissipators: &DissipatorSet,
    spec: &IntegrationSpec,
    probes: &[(String, Operator)],
) -> Result<IntegrationOutput> {
    check_layouts(rho0.layout(), h.layout())?;
    for (_, p) in probes {
        check_layouts(p.layout(), rho0.layout())?;
    }
    spec.validate(h.f_max())?;

    let mut prop = Propagator::new(h, dissipators)?;
    let d = prop.dim();
    let compiled_probes: Vec<(String, SparseOp)> = probes
        .iter()
        .map(|(name, p)| (name.clone(), SparseOp::from_dense(p.matrix())))
        .collect();

    let mut x = Planes::from_matrix(rho0.matrix());
    let n_steps = spec.n_steps();

    let mut record = TrajectoryRecord::default();
    for (name, _) in &compiled_probes {
        record.observables.insert(name.clone(), Vec::new());
    }
    let sample = |t: f64, x: &Planes, record: &mut TrajectoryRecord| {
        record.times.push(t);
        for (name, p) in &compiled_probes {
            let v = p.trace_with(x);
            record.observables.get_mut(name).expect("probe registered").push(v);
        }
    };
    sample(0.0, &x, &mut record);

    for step in 0..n_steps {
        let t = step as f64 * spec.dt;
        prop.step_planes(t, spec.dt, &mut x);
        let done = step + 1 == n_steps;

        if (step + 1) % spec.hermitize_every == 0 || done {
            hermitize(&mut x, d);
            if spec.renormalize_trace {
                let tr = trace_of(&x, d);
                if tr.norm() > 1e-300 {
                    let inv = 1.0 / tr.re;
                    for v in x.re.iter_mut().chain(x.im.iter_mut()) {
                        *v *= inv;
                    }
                }
            }
            let worst = x
                .re
                .iter()
                .chain(x.im.iter())
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            if !worst.is_finite() || worst > INSTABILITY_LIMIT {
                return Err(Error::StepInstability { t: t + spec.dt, magnitude: worst });
            }
        }
        if (step + 1) % spec.sample_every == 0 || done {
            sample((step + 1) as f64 * spec.dt, &x, &mut record);
        }
    }

    let final_state = DensityMatrix::new(rho0.layout().clone(), x.to_matrix(d))?;
    let report = truncation_report(&final_state);
    record.truncation_flagged = !report.safe;
    if record.truncation_flagged {
        log::warn!(
            "final state is not truncation-safe: top-level populations {:?}; \
             rerun with n_max + 20",
            report.top_level_population
        );
    }
    Ok(IntegrationOutput { record, final_state })
}

fn hermitize(x: &mut Planes, d: usize) {
    for i in 0..d {
        for j in (i + 1)..d {
            let ij = i * d + j;
            let ji = j * d + i;
            let avg_r = 0.5 * (x.re[ij] + x.re[ji]);
            let avg_i = 0.5 * (x.im[ij] - x.im[ji]);
            x.re[ij] = avg_r;
            x.im[ij] = avg_i;
            x.re[ji] = avg_r;
            x.im[ji] = -avg_i;
        }
        x.im[i * d + i] = 0.0;
    }
}

fn trace_of(x: &Planes, d: usize) -> C64 {
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..d {
        tr += C64::new(x.re[i * d + i], x.im[i * d + i]);
    }
    tr
}

/// Steady-state verdict over the trailing `window` of a recorded series:
/// converged when `max − min < tol·|mean|` there; `value` is the windowed mean.
#[derive(Debug, Clone, Copy)]
pub struct SteadyState {
    pub converged: bool,
    pub value: C64,
}

pub fn steady_state_detect(
    record: &TrajectoryRecord,
    key: &str,
    window: f64,
    tol: f64,
) -> Result<SteadyState> {
    let series = record.get(key)?;
    let times = &record.times;
    if times.is_empty() {
        return Err(Error::InvalidSpec("empty record".into()));
    }
    let t_end = *times.last().expect("nonempty");
    let span = t_end - times[0];
    if window >= span {
        return Err(Error::WindowTooLong { window, span });
    }
    let t_start = t_end - window;
    let mut mean = C64::new(0.0, 0.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut count = 0usize;
    for (t, v) in times.iter().zip(series.iter()) {
        if *t >= t_start {
            mean += v;
            lo = lo.min(v.re);
            hi = hi.max(v.re);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::WindowTooLong { window, span });
    }
    mean /= count as f64;
    let converged = (hi - lo) < tol * mean.norm();
    Ok(SteadyState { converged, value: mean })
}

/// Outcome of running the full and effective models side by side.
#[derive(Debug, Clone)]
pub struct FullVsEffective {
    /// `max_{t > t_end/2} |⟨n⟩_full − ⟨n⟩_eff| / max(⟨n⟩_full, 0.1)`.
    pub max_rel_dev: f64,
    pub record_full: TrajectoryRecord,
    pub record_eff: TrajectoryRecord,
    pub final_full: DensityMatrix,
    pub final_eff: DensityMatrix,
}

/// Integrate the time-dependent full model and the constant effective model
/// of the given resonance case from the same initial state, and compare the
/// phonon number of the first coupled oscillator on aligned sample times.
///
/// The effective run keeps the full run's sampling period but may take larger
/// steps, up to its own (much higher) ceiling.
pub fn compare_full_vs_effective(
    config: &ChainConfig,
    case: crate::model::ResonanceCase,
    spec: &IntegrationSpec,
) -> Result<FullVsEffective> {
    let chain = ChainLayout::new(config)?;
    let osc_site = config
        .sites
        .iter()
        .position(|s| s.has_oscillator())
        .ok_or_else(|| Error::Topology("config has no oscillator".into()))?;
    let b = chain.b(osc_site)?;
    let bdag = b.dagger();
    let probes = vec![
        ("n".to_string(), bdag.dot(&b)?),
        ("n2".to_string(), bdag.dot(&bdag)?.dot(&b)?.dot(&b)?),
        ("b".to_string(), b),
    ];

    let rho0 = crate::model::initial_state(config, &chain)?;
    let dissipators = DissipatorSet::from_config(config, &chain)?;

    let full_h = crate::model::driven_full(config, &chain)?;
    let out_full = integrate(&rho0, &full_h, &dissipators, spec, &probes)?;

    let h_eff = match case {
        crate::model::ResonanceCase::CaseI => {
            crate::model::effective_hamiltonian_case1(config, &chain)?
        }
        crate::model::ResonanceCase::CaseII => {
            crate::model::effective_hamiltonian_case2(config, &chain)?
        }
    };
    let eff_driven = effective_generator(h_eff, &dissipators);
    let eff_spec = align_spec(spec, recommended_step(&eff_driven, &dissipators));
    let out_eff = integrate(&rho0, &eff_driven, &dissipators, &eff_spec, &probes)?;

    let n_full = out_full.record.get("n")?;
    let n_eff = out_eff.record.get("n")?;
    let times = &out_full.record.times;
    if n_full.len() != n_eff.len() {
        return Err(Error::InvalidSpec(
            "full and effective runs produced different sample counts".into(),
        ));
    }
    let t_half = 0.5 * spec.t_end;
    let mut max_rel_dev = 0.0f64;
    for ((t, f), e) in times.iter().zip(n_full).zip(n_eff) {
        if *t <= t_half {
            continue;
        }
        let dev = (f.re - e.re).abs() / f.re.max(0.1);
        max_rel_dev = max_rel_dev.max(dev);
    }
    Ok(FullVsEffective {
        max_rel_dev,
        record_full: out_full.record,
        record_eff: out_eff.record,
        final_full: out_full.final_state,
        final_eff: out_eff.final_state,
    })
}

/// Wrap a time-independent effective Hamiltonian as a generator, with the
/// step ceiling set by its own spectral scales (row norm) and the decay rates
/// rather than the lab-frame frequencies.
pub fn effective_generator(h_eff: Operator, dissipators: &DissipatorSet) -> DrivenHamiltonian {
    let m = h_eff.matrix();
    let d = m.nrows();
    let mut row_norm = 0.0f64;
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += m[[i, j]].norm();
        }
        row_norm = row_norm.max(acc);
    }
    let f_max = row_norm.max(dissipators.max_decay_scale()).max(1e-6);
    DrivenHamiltonian::time_independent(h_eff, f_max)
}

/// Shrink the step so that an integer number of steps covers one sampling
/// period of `reference`; keeps both runs sampled at identical times.
pub fn align_spec(reference: &IntegrationSpec, dt_cap: f64) -> IntegrationSpec {
    let sample_period = reference.dt * reference.sample_every as f64;
    let k = (sample_period / dt_cap).ceil().max(1.0) as usize;
    IntegrationSpec {
        t_end: reference.t_end,
        dt: sample_period / k as f64,
        sample_every: k,
        hermitize_every: reference.hermitize_every,
        renormalize_trace: reference.renormalize_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilation, number_op, thermal_state, SpaceLayout, Subsystem};
    use crate::model::{initial_state, minimal_chain, ChainLayout, DrivenHamiltonian};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Textbook dense reference for the master-equation right-hand side.
    fn dense_rhs(
        h: &Array2<C64>,
        channels: &[(Array2<C64>, f64)],
        x: &Array2<C64>,
    ) -> Array2<C64> {
        let i = c(0.0, 1.0);
        let mut out = (h.dot(x) - x.dot(h)).mapv(|z| -i * z);
        for (l, rate) in channels {
            let l_dag = l.t().mapv(|z| z.conj());
            let ldl = l_dag.dot(l);
            let anti = (ldl.dot(x) + x.dot(&ldl)).mapv(|z| 0.5 * z);
            out = out + (l.dot(x).dot(&l_dag) - anti).mapv(|z| *rate * z);
        }
        out
    }

    fn single_osc(n_max: usize) -> std::sync::Arc<SpaceLayout> {
        SpaceLayout::new(vec![Subsystem::oscillator(n_max)]).unwrap()
    }

    #[test]
    fn rhs_single_decay_channel_drains_one_quantum() {
        let n_max = 5;
        let layout = single_osc(n_max);
        let b = Operator::new(layout.clone(), annihilation(n_max).unwrap()).unwrap();
        let gamma = 0.3;
        let d = DissipatorSet::new(vec![Channel { jump: b.clone(), rate: gamma }]).unwrap();
        let h = Operator::zeros(layout.clone());
        let rho = DensityMatrix::basis_state(layout.clone(), 1).unwrap();
        let rho_op = Operator::new(layout.clone(), rho.matrix().clone()).unwrap();
        let dr = rhs(&rho_op, &h, &d).unwrap();
        // d⟨n⟩/dt = Tr(n · dρ/dt) = −γ for ρ = |1⟩⟨1|
        let n_op = Operator::new(layout, number_op(n_max)).unwrap();
        let mut dn = c(0.0, 0.0);
        for ((i, j), v) in n_op.matrix().indexed_iter() {
            dn += v * dr.matrix()[[j, i]];
        }
        assert_abs_diff_eq!(dn.re, -gamma, epsilon = 1e-12);
    }

    #[test]
    fn rhs_pure_commutator_is_traceless_and_hermitian() {
        let config = crate::presets::fig2_chain(6);
        let chain = ChainLayout::new(&config).unwrap();
        let h = crate::model::full_hamiltonian(&config, 0.4, &chain).unwrap();
        let rho = initial_state(&config, &chain).unwrap();
        let rho_op = Operator::new(rho.layout().clone(), rho.matrix().clone()).unwrap();
        let empty = DissipatorSet::new(vec![]).unwrap();
        let dr = rhs(&rho_op, &h, &empty).unwrap();
        let tr: C64 = dr.matrix().diag().iter().sum();
        assert!(tr.norm() < 1e-12);
        assert!(dr.hermiticity_defect() < 1e-10);
    }

    #[test]
    fn rhs_matches_dense_reference_on_random_input() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let config = crate::presets::fig2_chain(3);
        let chain = ChainLayout::new(&config).unwrap();
        let layout = chain.layout().clone();
        let d = layout.total_dim();
        let h = crate::model::full_hamiltonian(&config, 1.1, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();

        // non-Hermitian input: the general path must agree with the textbook form
        let x: Array2<C64> = Array2::from_shape_fn((d, d), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let x_op = Operator::new(layout.clone(), x.clone()).unwrap();
        let fast = rhs(&x_op, &h, &diss).unwrap();
        let channels: Vec<(Array2<C64>, f64)> = diss
            .channels()
            .iter()
            .map(|ch| (ch.jump.matrix().clone(), ch.rate))
            .collect();
        let reference = dense_rhs(h.matrix(), &channels, &x);
        let defect = (fast.matrix() - &reference)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12, "sparse rhs deviates from dense reference by {defect}");
    }

    #[test]
    fn rhs_handles_general_non_shift_channels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let layout = single_osc(3);
        let d = layout.total_dim();
        let l: Array2<C64> = Array2::from_shape_fn((d, d), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let x: Array2<C64> = Array2::from_shape_fn((d, d), |_| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let h = Operator::zeros(layout.clone());
        let diss = DissipatorSet::new(vec![Channel {
            jump: Operator::new(layout.clone(), l.clone()).unwrap(),
            rate: 0.7,
        }])
        .unwrap();
        let x_op = Operator::new(layout, x.clone()).unwrap();
        let fast = rhs(&x_op, &h, &diss).unwrap();
        let reference = dense_rhs(
            &Array2::zeros((d, d)),
            &[(l, 0.7)],
            &x,
        );
        let defect = (fast.matrix() - &reference)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12);
    }

    #[test]
    fn rhs_is_linear() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let config = crate::presets::fig2_chain(2);
        let chain = ChainLayout::new(&config).unwrap();
        let layout = chain.layout().clone();
        let d = layout.total_dim();
        let h = crate::model::full_hamiltonian(&config, 0.0, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let mut rand_herm = || -> Array2<C64> {
            let g: Array2<C64> = Array2::from_shape_fn((d, d), |_| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            &g + &g.t().mapv(|z| z.conj())
        };
        let r1 = rand_herm();
        let r2 = rand_herm();
        let (alpha, beta) = (c(0.3, 0.0), c(-1.2, 0.0));
        let combo = r1.mapv(|z| alpha * z) + r2.mapv(|z| beta * z);
        let f = |m: Array2<C64>| {
            rhs(&Operator::new(layout.clone(), m).unwrap(), &h, &diss)
                .unwrap()
                .into_matrix()
        };
        let lhs = f(combo);
        let rhs_combo =
            f(r1).mapv(|z| alpha * z) + f(r2).mapv(|z| beta * z);
        let defect = (&lhs - &rhs_combo).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(defect < 1e-12);
    }

    #[test]
    fn thermal_pair_relaxes_to_analytic_exponential() {
        // channels (b, γ(1+n̄)), (b†, γn̄) drive ⟨n⟩(t) = n̄ + (⟨n⟩₀ − n̄)e^{−γt};
        // occupations kept small enough that the truncated ladder is exact to
        // well below the 1e−6 oracle tolerance
        let n_max = 20;
        let layout = single_osc(n_max);
        let gamma = 0.05;
        let n_bar = 0.25;
        let b = Operator::new(layout.clone(), annihilation(n_max).unwrap()).unwrap();
        let diss = DissipatorSet::new(vec![
            Channel { jump: b.clone(), rate: gamma * (1.0 + n_bar) },
            Channel { jump: b.dagger(), rate: gamma * n_bar },
        ])
        .unwrap();
        let n0 = 0.5;
        let rho0 =
            DensityMatrix::new(layout.clone(), thermal_state(n0, n_max)).unwrap();
        let h_op = Operator::new(layout.clone(), number_op(n_max)).unwrap();
        let h = DrivenHamiltonian::time_independent(h_op.clone(), 1.0);
        let spec = IntegrationSpec {
            t_end: 5.0 / gamma,
            dt: step_ceiling(1.0),
            sample_every: 40,
            hermitize_every: 100,
            renormalize_trace: true,
        };
        let probes = vec![("n".to_string(), h_op)];
        let out = integrate(&rho0, &h, &diss, &spec, &probes).unwrap();
        for (t, v) in out.record.times.iter().zip(out.record.get("n").unwrap()) {
            let analytic = n_bar + (n0 - n_bar) * (-gamma * t).exp();
            assert!(
                (v.re - analytic).abs() < 1e-6,
                "⟨n⟩({t}) = {} vs analytic {analytic}",
                v.re
            );
        }
    }

    #[test]
    fn stationary_thermal_state_stays_put() {
        // decoupled oscillator with bath occupation equal to its own state
        let mut config = minimal_chain(2.0, 5.0, 0.0, 0.0, 9.0, 12);
        config.gamma_mech = 1e-3;
        config.nbar_mech = 0.1;
        config.gamma_spin = 0.0;
        let chain = ChainLayout::new(&config).unwrap();
        let rho0 = initial_state(&config, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let spec = IntegrationSpec::at_ceiling(200.0, h.f_max(), 50);
        let b = chain.b(0).unwrap();
        let probes = vec![("n".to_string(), b.dagger().dot(&b).unwrap())];
        let out = integrate(&rho0, &h, &diss, &spec, &probes).unwrap();
        for v in out.record.get("n").unwrap() {
            assert!((v.re - 0.1).abs() < 1e-6);
        }
    }

    #[test]
    fn spin_relaxes_to_detailed_balance() {
        // steady ⟨σz⟩ = −1/(1 + 2n̄ˢ) from rate balance of the two channels
        let mut config = minimal_chain(2.0, 5.0, 0.0, 0.0, 9.0, 2);
        config.gamma_spin = 0.05;
        config.nbar_spin = 0.2;
        let chain = ChainLayout::new(&config).unwrap();
        // start from |↑↑⟩
        let layout = chain.layout().clone();
        let rho0 = DensityMatrix::basis_state(layout, 0).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let spec = IntegrationSpec::at_ceiling(20.0 / 0.05, h.f_max(), 100);
        let ops = spin_ops();
        let probes = vec![("sz1".to_string(), chain.spin_op(0, &ops.sz).unwrap())];
        let out = integrate(&rho0, &h, &diss, &spec, &probes).unwrap();
        let last = out.record.get("sz1").unwrap().last().unwrap();
        assert_abs_diff_eq!(last.re, -1.0 / (1.0 + 2.0 * 0.2), epsilon = 1e-4);
    }

    #[test]
    fn trace_is_conserved_without_renormalization() {
        let config = crate::presets::fig2_chain(8);
        let chain = ChainLayout::new(&config).unwrap();
        let rho0 = initial_state(&config, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let mut spec = IntegrationSpec::at_ceiling(40.0, h.f_max(), 20);
        spec.renormalize_trace = false;
        let layout = chain.layout().clone();
        let probes =
            vec![("one".to_string(), Operator::identity(layout))];
        let out = integrate(&rho0, &h, &diss, &spec, &probes).unwrap();
        for v in out.record.get("one").unwrap() {
            assert!((v.re - 1.0).abs() < 1e-6, "trace drifted to {}", v.re);
        }
        // Hermiticity drift stays tiny as well
        assert!(out.final_state.hermiticity_defect() < 1e-10);
    }

    #[test]
    fn positivity_spot_check_along_a_run() {
        let config = crate::presets::fig2_chain(8);
        let chain = ChainLayout::new(&config).unwrap();
        let rho0 = initial_state(&config, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let spec = IntegrationSpec::at_ceiling(10.0, h.f_max(), 5);
        let mut prop = Propagator::new(&h, &diss).unwrap();
        let mut x: Array2<C64> = rho0.matrix().clone();
        let n_steps = spec.n_steps();
        let checkpoints: Vec<usize> = (1..=5).map(|k| k * n_steps / 5).collect();
        for step in 0..n_steps {
            prop.step(step as f64 * spec.dt, spec.dt, &mut x);
            if checkpoints.contains(&(step + 1)) {
                let eig = crate::hilbert::hermitian_eigenvalues(&x);
                assert!(eig[0] > -1e-6, "negative eigenvalue {}", eig[0]);
            }
        }
    }

    #[test]
    fn step_halving_changes_final_occupation_by_less_than_half_percent() {
        // short above-threshold run; fourth-order contract
        let mut config = crate::presets::fig2_chain(12);
        config.nbar_mech = 0.1;
        let chain = ChainLayout::new(&config).unwrap();
        let rho0 = initial_state(&config, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let b = chain.b(0).unwrap();
        let probes = vec![("n".to_string(), b.dagger().dot(&b).unwrap())];
        let run = |dt: f64| -> f64 {
            let spec = IntegrationSpec {
                t_end: 150.0,
                dt,
                sample_every: usize::MAX / 2,
                hermitize_every: 100,
                renormalize_trace: true,
            };
            let out = integrate(&rho0, &h, &diss, &spec, &probes).unwrap();
            out.record.get("n").unwrap().last().unwrap().re
        };
        let dt = step_ceiling(h.f_max());
        let coarse = run(dt);
        let fine = run(dt / 2.0);
        assert!(
            (coarse - fine).abs() / fine.abs().max(1e-12) < 5e-3,
            "step halving moved final ⟨n⟩ from {coarse} to {fine}"
        );
    }

    #[test]
    fn integrate_rejects_oversized_steps() {
        let config = crate::presets::fig2_chain(4);
        let chain = ChainLayout::new(&config).unwrap();
        let rho0 = initial_state(&config, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let spec = IntegrationSpec {
            t_end: 10.0,
            dt: 10.0 * step_ceiling(h.f_max()),
            sample_every: 10,
            hermitize_every: 100,
            renormalize_trace: true,
        };
        assert!(matches!(
            integrate(&rho0, &h, &diss, &spec, &[]),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn fused_and_generic_steps_agree() {
        // A non-shift channel with negligible rate forces the generic RK4
        // path; its physical contribution is below 1e-290, so the two paths
        // must produce the same trajectory to roundoff.
        let config = crate::presets::fig2_chain(8);
        let chain = ChainLayout::new(&config).unwrap();
        let rho0 = initial_state(&config, &chain).unwrap();
        let h = crate::model::driven_full(&config, &chain).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        let mut channels = diss.channels().to_vec();
        let b = chain.b(0).unwrap();
        let mut x_op = b.dagger();
        x_op.add_scaled(C64::new(1.0, 0.0), &b).unwrap();
        channels.push(Channel { jump: x_op, rate: 1e-300 });
        let diss_forced = DissipatorSet::new(channels).unwrap();

        let spec = IntegrationSpec::for_generator(5.0, &h, &diss, 5);
        let fused = integrate(&rho0, &h, &diss, &spec, &[]).unwrap();
        let generic = integrate(&rho0, &h, &diss_forced, &spec, &[]).unwrap();
        let defect = (fused.final_state.matrix() - generic.final_state.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-12, "fused vs generic step defect {defect}");
    }

    #[test]
    fn dissipator_set_channel_count() {
        let config = crate::presets::fig2_chain(4);
        let chain = ChainLayout::new(&config).unwrap();
        let diss = DissipatorSet::from_config(&config, &chain).unwrap();
        // 2 spins, 1 oscillator → 2·2 + 2·1
        assert_eq!(diss.channels().len(), 6);
        assert!(diss.channels().iter().all(|ch| ch.rate >= 0.0));
    }

    #[test]
    fn steady_state_detection() {
        let mut record = TrajectoryRecord::default();
        record.times = (0..100).map(|i| i as f64).collect();
        record.insert("flat", vec![c(2.0, 0.0); 100]);
        record.insert(
            "ramp",
            (0..100).map(|i| c(i as f64, 0.0)).collect(),
        );
        let flat = steady_state_detect(&record, "flat", 20.0, 0.01).unwrap();
        assert!(flat.converged);
        assert_abs_diff_eq!(flat.value.re, 2.0, epsilon = 1e-12);
        let ramp = steady_state_detect(&record, "ramp", 20.0, 0.01).unwrap();
        assert!(!ramp.converged);
        assert!(steady_state_detect(&record, "absent", 20.0, 0.01).is_err());
        assert!(matches!(
            steady_state_detect(&record, "flat", 1e4, 0.01),
            Err(Error::WindowTooLong { .. })
        ));
    }
}
