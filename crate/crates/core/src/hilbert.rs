//! Composite Hilbert-space bookkeeping and dense operator algebra for chains
//! of two-level systems (spins) and truncated harmonic oscillators.
//!
//! Conventions fixed here and relied on everywhere else:
//! - subsystem ordering is declaration order; the basis index varies fastest
//!   for the *last* subsystem (row-major Kronecker ordering),
//! - spin basis is `{|↑⟩, |↓⟩}`, so `σz = diag(+1, −1)` and `σ⁺ = |↑⟩⟨↓|`,
//! - everything is dense `Complex64`; total dimensions stay ≤ ~200.

use ndarray::{linalg::kron, Array1, Array2};
use num_complex::Complex64 as C64;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Hermiticity tolerance for density matrices (max |ρ − ρ†| element).
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Trace tolerance for density matrices after normalization.
pub const TRACE_TOL: f64 = 1e-8;
/// A state is truncation-safe when the top two Fock levels of every
/// oscillator hold less than this combined population.
pub const TRUNCATION_BUDGET: f64 = 1e-4;

/// Kind of a local factor in the tensor product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsystemKind {
    Spin,
    Oscillator,
}

/// One factor of the composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subsystem {
    pub kind: SubsystemKind,
    pub dim: usize,
}

impl Subsystem {
    /// A two-level spin.
    pub fn spin() -> Self {
        Subsystem { kind: SubsystemKind::Spin, dim: 2 }
    }

    /// An oscillator truncated at Fock level `n_max` (dimension `n_max + 1`).
    pub fn oscillator(n_max: usize) -> Self {
        Subsystem { kind: SubsystemKind::Oscillator, dim: n_max + 1 }
    }
}

/// Ordered list of subsystems plus the derived strides for basis indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceLayout {
    subsystems: Vec<Subsystem>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl SpaceLayout {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Arc<Self>> {
        if subsystems.is_empty() {
            return Err(Error::EmptyLayout);
        }
        for (k, s) in subsystems.iter().enumerate() {
            match s.kind {
                SubsystemKind::Spin if s.dim != 2 => {
                    return Err(Error::BadSubsystemDim { index: k, dim: s.dim });
                }
                SubsystemKind::Oscillator if s.dim < 2 => {
                    return Err(Error::BadSubsystemDim { index: k, dim: s.dim });
                }
                _ => {}
            }
        }
        // Index varies fastest for the last subsystem.
        let n = subsystems.len();
        let mut strides = vec![1usize; n];
        for k in (0..n - 1).rev() {
            strides[k] = strides[k + 1] * subsystems[k + 1].dim;
        }
        let total_dim = strides[0] * subsystems[0].dim;
        Ok(Arc::new(SpaceLayout { subsystems, strides, total_dim }))
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Stride of subsystem `k` in the flattened basis index.
    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    /// Local basis index of subsystem `k` within flat basis index `i`.
    pub fn local_index(&self, i: usize, k: usize) -> usize {
        (i / self.strides[k]) % self.subsystems[k].dim
    }
}

/// Dense operator on a composite space.
#[derive(Debug, Clone)]
pub struct Operator {
    layout: Arc<SpaceLayout>,
    matrix: Array2<C64>,
}

impl Operator {
    pub fn new(layout: Arc<SpaceLayout>, matrix: Array2<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows(),
            });
        }
        Ok(Operator { layout, matrix })
    }

    pub fn zeros(layout: Arc<SpaceLayout>) -> Self {
        let d = layout.total_dim();
        Operator { layout, matrix: Array2::zeros((d, d)) }
    }

    pub fn identity(layout: Arc<SpaceLayout>) -> Self {
        let d = layout.total_dim();
        Operator { layout, matrix: Array2::eye(d) }
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<C64> {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    /// Hermitian conjugate.
    pub fn dagger(&self) -> Operator {
        Operator {
            layout: self.layout.clone(),
            matrix: self.matrix.t().mapv(|z| z.conj()),
        }
    }

    /// Matrix product `self · other`.
    pub fn dot(&self, other: &Operator) -> Result<Operator> {
        check_layouts(&self.layout, &other.layout)?;
        Ok(Operator {
            layout: self.layout.clone(),
            matrix: self.matrix.dot(&other.matrix),
        })
    }

    /// `self + scale · other`.
    pub fn add_scaled(&mut self, scale: C64, other: &Operator) -> Result<()> {
        check_layouts(&self.layout, &other.layout)?;
        self.matrix.zip_mut_with(&other.matrix, |a, &b| *a += scale * b);
        Ok(())
    }

    pub fn scale(&mut self, scale: C64) {
        self.matrix.mapv_inplace(|z| scale * z);
    }

    /// Max |element| of `A − A†`.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }
}

/// Density matrix on a composite space. Hermitian, unit-trace within
/// tolerance; positivity is spot-checked in tests, not enforced per step.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    layout: Arc<SpaceLayout>,
    matrix: Array2<C64>,
}

impl DensityMatrix {
    /// Validate Hermiticity, normalize the trace to one, and wrap.
    pub fn new(layout: Arc<SpaceLayout>, matrix: Array2<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows(),
            });
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITICITY_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let tr = trace(&matrix);
        if tr.norm() < 1e-14 {
            return Err(Error::ZeroTrace);
        }
        let matrix = matrix.mapv(|z| z / tr);
        let residual = (trace(&matrix) - C64::new(1.0, 0.0)).norm();
        debug_assert!(residual < TRACE_TOL);
        Ok(DensityMatrix { layout, matrix })
    }

    /// Skip validation; for internal use on matrices that are Hermitian and
    /// normalized by construction.
    pub(crate) fn from_parts_unchecked(
        layout: Arc<SpaceLayout>,
        matrix: Array2<C64>,
    ) -> Self {
        DensityMatrix { layout, matrix }
    }

    /// Product state `ρ₀ ⊗ ρ₁ ⊗ …` from one local density matrix per
    /// subsystem, in layout order.
    pub fn product(layout: Arc<SpaceLayout>, locals: &[Array2<C64>]) -> Result<Self> {
        if locals.len() != layout.subsystems().len() {
            return Err(Error::DimensionMismatch {
                expected: layout.subsystems().len(),
                found: locals.len(),
            });
        }
        for (k, (loc, sub)) in locals.iter().zip(layout.subsystems()).enumerate() {
            if loc.nrows() != sub.dim || loc.ncols() != sub.dim {
                return Err(Error::BadSubsystemDim { index: k, dim: loc.nrows() });
            }
        }
        let mut m = locals[0].clone();
        for loc in &locals[1..] {
            m = kron(&m, loc);
        }
        DensityMatrix::new(layout, m)
    }

    /// Projector onto a single basis state.
    pub fn basis_state(layout: Arc<SpaceLayout>, index: usize) -> Result<Self> {
        let d = layout.total_dim();
        if index >= d {
            return Err(Error::IndexOutOfRange { index, len: d });
        }
        let mut m: Array2<C64> = Array2::zeros((d, d));
        m[[index, index]] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { layout, matrix: m })
    }

    pub fn layout(&self) -> &Arc<SpaceLayout> {
        &self.layout
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<C64> {
        &mut self.matrix
    }

    pub fn trace(&self) -> C64 {
        trace(&self.matrix)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    /// Population of local level `level` of subsystem `k`.
    pub fn level_population(&self, k: usize, level: usize) -> f64 {
        let mut p = 0.0;
        for i in 0..self.layout.total_dim() {
            if self.layout.local_index(i, k) == level {
                p += self.matrix[[i, i]].re;
            }
        }
        p
    }
}

/// Population held by the top two Fock levels of each oscillator subsystem.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    /// `(subsystem index, combined top-two-level population)` per oscillator.
    pub top_level_population: Vec<(usize, f64)>,
    pub safe: bool,
}

/// Check whether every oscillator's top two Fock levels hold less than
/// [`TRUNCATION_BUDGET`] combined population.
pub fn truncation_report(rho: &DensityMatrix) -> TruncationReport {
    let mut report = TruncationReport { top_level_population: Vec::new(), safe: true };
    for (k, sub) in rho.layout().subsystems().iter().enumerate() {
        if sub.kind != SubsystemKind::Oscillator {
            continue;
        }
        let p = rho.level_population(k, sub.dim - 1) + rho.level_population(k, sub.dim - 2);
        if p >= TRUNCATION_BUDGET {
            report.safe = false;
        }
        report.top_level_population.push((k, p));
    }
    report
}

/// Standard 2×2 spin matrices with `σz|↑⟩ = +|↑⟩` and `σ⁺ = |↑⟩⟨↓|`.
#[derive(Debug, Clone)]
pub struct SpinOps {
    pub sx: Array2<C64>,
    pub sy: Array2<C64>,
    pub sz: Array2<C64>,
    pub sp: Array2<C64>,
    pub sm: Array2<C64>,
}

pub fn spin_ops() -> SpinOps {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    SpinOps {
        sx: ndarray::array![[z, one], [one, z]],
        sy: ndarray::array![[z, -i], [i, z]],
        sz: ndarray::array![[one, z], [z, -one]],
        sp: ndarray::array![[z, one], [z, z]],
        sm: ndarray::array![[z, z], [one, z]],
    }
}

/// Truncated annihilation operator: `⟨n−1|b|n⟩ = √n` on a space of dimension
/// `n_max + 1`.
pub fn annihilation(n_max: usize) -> Result<Array2<C64>> {
    if n_max < 1 {
        return Err(Error::BadFockTruncation { n_max });
    }
    let d = n_max + 1;
    let mut b: Array2<C64> = Array2::zeros((d, d));
    for n in 1..d {
        b[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(b)
}

/// Number operator `b†b` on a truncated Fock space.
pub fn number_op(n_max: usize) -> Array2<C64> {
    let d = n_max + 1;
    Array2::from_diag(&Array1::from_iter((0..d).map(|n| C64::new(n as f64, 0.0))))
}

/// Thermal state on the truncated Fock space: `p_n ∝ (n̄/(1+n̄))ⁿ`,
/// renormalized to unit trace.
pub fn thermal_state(n_bar: f64, n_max: usize) -> Array2<C64> {
    let d = n_max + 1;
    let mut p = vec![0.0f64; d];
    if n_bar <= 0.0 {
        p[0] = 1.0;
    } else {
        let r = n_bar / (1.0 + n_bar);
        let mut w = 1.0;
        for pn in p.iter_mut() {
            *pn = w;
            w *= r;
        }
        let norm: f64 = p.iter().sum();
        for pn in p.iter_mut() {
            *pn /= norm;
        }
    }
    Array2::from_diag(&Array1::from_iter(p.into_iter().map(|x| C64::new(x, 0.0))))
}

/// Embed a local operator on subsystem `site_index` into the full space:
/// `1 ⊗ … ⊗ op ⊗ … ⊗ 1` in layout order.
pub fn embed(
    local_op: &Array2<C64>,
    site_index: usize,
    layout: &Arc<SpaceLayout>,
) -> Result<Operator> {
    let subs = layout.subsystems();
    if site_index >= subs.len() {
        return Err(Error::IndexOutOfRange { index: site_index, len: subs.len() });
    }
    let d = subs[site_index].dim;
    if local_op.nrows() != d || local_op.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: local_op.nrows() });
    }
    let pre: usize = subs[..site_index].iter().map(|s| s.dim).product();
    let post: usize = subs[site_index + 1..].iter().map(|s| s.dim).product();
    let m = kron(&kron(&Array2::eye(pre), local_op), &Array2::eye(post));
    Operator::new(layout.clone(), m)
}

/// `Tr(op · ρ)`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    check_layouts(op.layout(), rho.layout())?;
    let a = op.matrix();
    let r = rho.matrix();
    let d = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += a[[i, j]] * r[[j, i]];
        }
    }
    Ok(acc)
}

/// Partial trace onto the subsystems listed in `keep` (original order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let layout = rho.layout();
    let n = layout.subsystems().len();
    if keep.is_empty() {
        return Err(Error::EmptyKeepSet);
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() {
        return Err(Error::DuplicateKeepIndex);
    }
    for &k in &keep_sorted {
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, len: n });
        }
    }
    let traced: Vec<usize> = (0..n).filter(|k| !keep_sorted.contains(k)).collect();

    let kept_subs: Vec<Subsystem> =
        keep_sorted.iter().map(|&k| layout.subsystems()[k]).collect();
    let new_layout = SpaceLayout::new(kept_subs)?;
    let dk = new_layout.total_dim();
    let dt: usize = traced.iter().map(|&k| layout.subsystems()[k].dim).product();

    // Flat index of the original space from (kept multi-index, traced multi-index).
    let compose = |ik: usize, it: usize| -> usize {
        let mut idx = 0;
        for (pos, &k) in keep_sorted.iter().enumerate() {
            idx += new_layout.local_index(ik, pos) * layout.stride(k);
        }
        let mut rem = it;
        for &k in traced.iter().rev() {
            let dim = layout.subsystems()[k].dim;
            idx += (rem % dim) * layout.stride(k);
            rem /= dim;
        }
        idx
    };

    let m = rho.matrix();
    let mut out: Array2<C64> = Array2::zeros((dk, dk));
    for ik in 0..dk {
        for jk in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for it in 0..dt {
                acc += m[[compose(ik, it), compose(jk, it)]];
            }
            out[[ik, jk]] = acc;
        }
    }
    Ok(DensityMatrix::from_parts_unchecked(new_layout, out))
}

pub(crate) fn check_layouts(a: &Arc<SpaceLayout>, b: &Arc<SpaceLayout>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::LayoutMismatch)
    }
}

pub(crate) fn trace(m: &Array2<C64>) -> C64 {
    m.diag().iter().sum()
}

pub(crate) fn hermiticity_defect(m: &Array2<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let defect = (m[[i, j]] - m[[j, i]].conj()).norm();
            if defect > worst {
                worst = defect;
            }
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations,
/// ascending. Used for spectra and positivity spot checks; dimensions here
/// never exceed a few hundred.
pub fn hermitian_eigenvalues(m: &Array2<C64>) -> Vec<f64> {
    let d = m.nrows();
    assert_eq!(d, m.ncols(), "hermitian_eigenvalues: matrix must be square");
    let mut a = m.clone();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off = off.max(a[[p, q]].norm());
            }
        }
        if off < 1e-13 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                let napq = apq.norm();
                if napq < 1e-300 {
                    continue;
                }
                // Unitary 2×2 rotation zeroing the (p,q) element.
                let phase = apq / napq;
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (aqq - app) / (2.0 * napq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns: col_p ← c·col_p − s·phase*·col_q ; col_q ← s·phase·col_p + c·col_q
                for i in 0..d {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * phase.conj() * aiq;
                    a[[i, q]] = s * phase * aip + c * aiq;
                }
                // Rows with the conjugate rotation.
                for j in 0..d {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = c * apj - s * phase * aqj;
                    a[[q, j]] = s * phase.conj() * apj + c * aqj;
                }
            }
        }
    }
    let mut eig: Vec<f64> = a.diag().iter().map(|z| z.re).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}
