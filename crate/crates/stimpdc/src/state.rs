//! Block-Fock representation of the two-mode multiphoton pair state and its
//! polarization-basis rotations.
//!
//! A pulse of the source emits a superposition over pair numbers `n`. The
//! `n`-pair component lives in the span of occupations
//! `|n-m_a>_{a_h} |m_a>_{a_v} |m_b>_{b_h} |n-m_b>_{b_v}`, so one complex
//! `(n+1) x (n+1)` matrix per `n` (row `m_a`, column `m_b`) holds the whole
//! state. Per-side photon number is conserved by every per-side polarization
//! rotation, which keeps the representation closed: a rotation acts on block
//! `n` through the symmetric-power matrix of a 2x2 unitary.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Hard upper limit on the number of pair blocks a state may carry.
pub const TRUNCATION_CAP: usize = 2000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Named polarization analysis bases: horizontal/vertical linear, +-45 degree
/// linear, and right/left circular. The first-listed outcome of each basis
/// (h, p, r) is the one mapped to +1 in spin-correlation language.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Hv,
    Pm,
    Rl,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Hv, Basis::Pm, Basis::Rl];

    /// Stable index used by visibility tables: hv = 0, pm = 1, rl = 2.
    pub fn index(self) -> usize {
        match self {
            Basis::Hv => 0,
            Basis::Pm => 1,
            Basis::Rl => 2,
        }
    }

    /// The rotation taking h/v mode amplitudes into this basis's outcome slots.
    pub fn rotation(self) -> PolarizationRotation {
        match self {
            Basis::Hv => PolarizationRotation::hv(),
            Basis::Pm => PolarizationRotation::pm(),
            Basis::Rl => PolarizationRotation::rl(),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::Hv => "hv",
            Basis::Pm => "pm",
            Basis::Rl => "rl",
        };
        f.write_str(s)
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hv" => Ok(Basis::Hv),
            "pm" => Ok(Basis::Pm),
            "rl" => Ok(Basis::Rl),
            other => Err(Error::Config(format!(
                "unknown basis '{other}' (expected hv, pm, or rl)"
            ))),
        }
    }
}

/// A 2x2 unitary transforming single-photon (h, v) amplitudes of one spatial
/// mode into the outcome amplitudes of an analysis basis.
///
/// Row 0 is the first-listed outcome of the basis. The named constructors fix
/// the phase conventions used throughout the crate:
/// `pm` has rows `(1, 1)/sqrt(2)` and `(1, -1)/sqrt(2)`;
/// `rl` has rows `(1, -i)/sqrt(2)` and `(1, +i)/sqrt(2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationRotation {
    matrix: Matrix2<Complex64>,
}

impl PolarizationRotation {
    /// Wraps an arbitrary matrix, verifying unitarity and |det| = 1 to 1e-12.
    pub fn new(matrix: Matrix2<Complex64>) -> Result<Self> {
        let gram = matrix.adjoint() * matrix;
        let dev = (gram - Matrix2::identity())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if dev > 1e-12 {
            return Err(Error::Config(format!(
                "polarization rotation is not unitary (deviation {dev:.3e})"
            )));
        }
        let det = matrix[(0, 0)] * matrix[(1, 1)] - matrix[(0, 1)] * matrix[(1, 0)];
        if (det.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "polarization rotation determinant has modulus {:.12}",
                det.norm()
            )));
        }
        Ok(Self { matrix })
    }

    /// Identity: analysis directly in the h/v basis.
    pub fn hv() -> Self {
        Self {
            matrix: Matrix2::identity(),
        }
    }

    /// +-45 degree linear basis.
    pub fn pm() -> Self {
        let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            matrix: Matrix2::new(r, r, r, -r),
        }
    }

    /// Right/left circular basis.
    pub fn rl() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex64::new(re * r, im * r);
        Self {
            matrix: Matrix2::new(c(1.0, 0.0), c(0.0, -1.0), c(1.0, 0.0), c(0.0, 1.0)),
        }
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.matrix
    }

    /// True when this rotation is the identity to machine-level tolerance.
    pub(crate) fn is_identity(&self) -> bool {
        (self.matrix - Matrix2::identity())
            .iter()
            .all(|c| c.norm() < 1e-15)
    }
}

/// Reverses both slot orders of a 2x2 matrix: `swap(u)[i][j] = u[1-i][1-j]`.
///
/// Side b blocks index the h-photon count (the slot order opposite to side a),
/// so the side-b representation matrix is the symmetric power of the swapped
/// unitary.
pub(crate) fn swap_slots(u: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    Matrix2::new(u[(1, 1)], u[(1, 0)], u[(0, 1)], u[(0, 0)])
}

/// Gain and pump-energy bookkeeping: the interaction parameter scales as the
/// square root of pulse energy, `tau = tau_max * sqrt(E / E_max)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InteractionParams {
    pub tau: f64,
    pub tau_max: f64,
    pub pulse_energy: f64,
    pub max_energy: f64,
}

impl InteractionParams {
    /// Builds the parameters from the pump mapping.
    pub fn from_pump(tau_max: f64, pulse_energy: f64, max_energy: f64) -> Result<Self> {
        if !(tau_max.is_finite() && tau_max >= 0.0)
            || !(pulse_energy.is_finite() && pulse_energy >= 0.0)
            || !(max_energy.is_finite() && max_energy > 0.0)
        {
            return Err(Error::Config(
                "pump mapping needs tau_max >= 0, pulse_energy >= 0, max_energy > 0".into(),
            ));
        }
        Ok(Self {
            tau: tau_at(tau_max, pulse_energy, max_energy),
            tau_max,
            pulse_energy,
            max_energy,
        })
    }
}

/// Interaction parameter at a given pump pulse energy.
pub fn tau_at(tau_max: f64, pulse_energy: f64, max_energy: f64) -> f64 {
    tau_max * (pulse_energy / max_energy).sqrt()
}

/// Mean number of photon pairs per pulse, `2 sinh^2(tau)`.
pub fn mean_pairs(tau: f64) -> f64 {
    2.0 * tau.sinh().powi(2)
}

/// Squared amplitude of the n-pair component: `(n+1) (1-x)^2 x^n`, `x = tanh^2(tau)`.
pub fn pair_number_weight(tau: f64, n: usize) -> f64 {
    let x = tau.tanh().powi(2);
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 + 1.0) * (1.0 - x).powi(2) * x.powi(n as i32)
}

/// Exact probability mass beyond block `n_max`:
/// `sum_{n > N} (n+1)(1-x)^2 x^n = x^{N+1} ((N+2) - (N+1) x)`.
pub fn tail_mass_beyond(tau: f64, n_max: usize) -> f64 {
    let x = tau.tanh().powi(2);
    if x == 0.0 {
        return 0.0;
    }
    let np1 = n_max as f64 + 1.0;
    x.powf(np1) * ((np1 + 1.0) - np1 * x)
}

/// Smallest truncation `N` whose analytic tail mass is at most `tail_tol`.
pub fn select_n_max(tau: f64, tail_tol: f64) -> Result<usize> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::Config(format!(
            "tail tolerance must lie in (0, 1), got {tail_tol}"
        )));
    }
    for n in 0..=TRUNCATION_CAP {
        if tail_mass_beyond(tau, n) <= tail_tol {
            return Ok(n);
        }
    }
    Err(Error::InfeasibleTruncation {
        tau,
        tail_tol,
        cap: TRUNCATION_CAP,
    })
}

/// Default truncation tolerance policy: 1e-9 up to tau = 1.5, 1e-6 beyond
/// (where the pair-number distribution is so wide that the stricter tolerance
/// buys nothing visible but costs hundreds of extra blocks).
pub fn default_tail_tol(tau: f64) -> f64 {
    if tau <= 1.5 {
        1e-9
    } else {
        1e-6
    }
}

/// One pair-number block of the state.
#[derive(Clone, Debug)]
pub enum Block {
    /// Amplitudes only on the occupation diagonal `m_a = m_b`, entry `m`
    /// holding `B_n[m][m]`. The freshly built source state has this form.
    Diagonal(Vec<Complex64>),
    /// Full amplitude matrix, row `m_a`, column `m_b`.
    Dense(DMatrix<Complex64>),
}

impl Block {
    /// Pair number of this block.
    pub fn n(&self) -> usize {
        match self {
            Block::Diagonal(d) => d.len() - 1,
            Block::Dense(m) => m.nrows() - 1,
        }
    }

    /// Amplitude of the occupation `(n-m_a, m_a, m_b, n-m_b)`.
    pub fn amp(&self, m_a: usize, m_b: usize) -> Complex64 {
        match self {
            Block::Diagonal(d) => {
                if m_a == m_b {
                    d[m_a]
                } else {
                    ZERO
                }
            }
            Block::Dense(m) => m[(m_a, m_b)],
        }
    }

    /// Squared Frobenius norm: the probability carried by this block.
    pub fn norm_sq(&self) -> f64 {
        match self {
            Block::Diagonal(d) => d.iter().map(|c| c.norm_sqr()).sum(),
            Block::Dense(m) => m.iter().map(|c| c.norm_sqr()).sum(),
        }
    }
}

/// Truncated pair state: one block per pair number `n` in `0..=n_max`, plus
/// the analytic bound on the probability mass dropped by the truncation.
#[derive(Clone, Debug)]
pub struct PairBlockState {
    blocks: Vec<Block>,
    tail_mass: f64,
}

impl PairBlockState {
    /// Assembles a state from blocks; block `k` must have pair number `k`.
    pub fn from_blocks(blocks: Vec<Block>, tail_mass: f64) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("a state needs at least the n = 0 block".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.n() != k {
                return Err(Error::Config(format!(
                    "block at position {k} has pair number {}",
                    b.n()
                )));
            }
        }
        Ok(Self { blocks, tail_mass })
    }

    pub fn n_max(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Total probability kept by the truncation; equals `1 - tail` for the
    /// freshly built state and is conserved by rotations.
    pub fn total_norm_sq(&self) -> f64 {
        self.blocks.iter().map(Block::norm_sq).sum()
    }

    /// Mean pair number of the kept blocks (normalized to the kept mass).
    pub fn mean_pairs_kept(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (n, b) in self.blocks.iter().enumerate() {
            let w = b.norm_sq();
            num += n as f64 * w;
            den += w;
        }
        num / den
    }

    /// Detects the source form: every block diagonal with alternating-sign
    /// entries of common magnitude, `B_n[m][m] = c_n (-1)^m`. Returns the
    /// per-block scale `c_n` when the state has exactly this structure.
    fn alternating_diagonal_scales(&self) -> Option<Vec<Complex64>> {
        let mut scales = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let d = match block {
                Block::Diagonal(d) => d,
                Block::Dense(_) => return None,
            };
            let c = d[0];
            let tol = 1e-14 * c.norm().max(1e-300);
            for (m, &dm) in d.iter().enumerate() {
                let expect = if m % 2 == 0 { c } else { -c };
                if (dm - expect).norm() > tol {
                    return None;
                }
            }
            scales.push(c);
        }
        Some(scales)
    }
}

/// Builds the truncated source state at gain `tau`.
///
/// Block `n` is diagonal with `B_n[m][m] = (-1)^m tanh^n(tau) / cosh^2(tau)`,
/// evaluated in log space so large `n` underflows gracefully to zero instead
/// of overflowing intermediate powers.
pub fn build_pdc_state(tau: f64, n_max: usize) -> PairBlockState {
    assert!(tau >= 0.0, "tau must be non-negative");
    // ln cosh(tau) and ln tanh(tau), stable for any tau >= 0
    let ln_cosh = tau + ((1.0 + (-2.0 * tau).exp()) / 2.0).ln();
    let ln_tanh = (1.0 - (-2.0 * tau).exp()).ln() - (1.0 + (-2.0 * tau).exp()).ln();
    let blocks = (0..=n_max)
        .map(|n| {
            let c = if n == 0 {
                (-2.0 * ln_cosh).exp()
            } else {
                (n as f64 * ln_tanh - 2.0 * ln_cosh).exp()
            };
            let d = (0..=n)
                .map(|m| {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    Complex64::new(sign * c, 0.0)
                })
                .collect();
            Block::Diagonal(d)
        })
        .collect();
    PairBlockState {
        blocks,
        tail_mass: tail_mass_beyond(tau, n_max),
    }
}

/// Incremental generator of the symmetric-power representation matrices
/// `D(0), D(1), D(2), ...` of a 2x2 matrix.
///
/// `D(n)` acts on the `n+1` occupation amplitudes of `n` photons in two
/// modes: column `m` holds the normalized monomial coefficients of
/// `(a0 + a1 z)^{n-m} (b0 + b1 z)^m`, with `(a0, a1)` and `(b0, b1)` the
/// columns of the input matrix and entry `(j, m)` carrying the factor
/// `sqrt(j!(n-j)!/((n-m)! m!))`.
///
/// Each step realizes `D(n+1) = V* (D(n) ⊗ U) V`, where `V` is the isometry
/// embedding `n+1` symmetric photons into (`n` symmetric photons) ⊗ (one
/// photon). For unitary input that map is a norm contraction, so rounding
/// errors from earlier steps pass through without amplification and the
/// whole sequence stays accurate to a small multiple of machine epsilon per
/// step. The cheaper two-term recurrence that peels one factor off the
/// column polynomial is exponentially unstable in contrast (error gain of
/// order `sqrt(binomial(n, m))`) and must not be reintroduced.
#[derive(Clone, Debug)]
pub struct SymPowerSeq {
    a0: Complex64,
    a1: Complex64,
    b0: Complex64,
    b1: Complex64,
    cur: DMatrix<Complex64>,
    sqrt: Vec<f64>,
}

impl SymPowerSeq {
    pub fn new(u: &Matrix2<Complex64>) -> Self {
        Self {
            a0: u[(0, 0)],
            a1: u[(1, 0)],
            b0: u[(0, 1)],
            b1: u[(1, 1)],
            cur: DMatrix::from_element(1, 1, ONE),
            sqrt: vec![0.0, 1.0],
        }
    }

    /// Photon number of the current matrix.
    pub fn n(&self) -> usize {
        self.cur.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.cur
    }

    /// Advances from `D(n)` to `D(n+1)`.
    pub fn advance(&mut self) {
        let n = self.n() + 1;
        while self.sqrt.len() <= n {
            self.sqrt.push((self.sqrt.len() as f64).sqrt());
        }
        let sq = &self.sqrt;
        let prev = &self.cur;
        let inv = 1.0 / n as f64;
        let mut next = DMatrix::from_element(n + 1, n + 1, ZERO);
        for m in 0..=n {
            for j in 0..=n {
                let mut v = ZERO;
                if j < n && m < n {
                    v += self.a0 * prev[(j, m)] * (sq[n - j] * sq[n - m]);
                }
                if j > 0 && m < n {
                    v += self.a1 * prev[(j - 1, m)] * (sq[j] * sq[n - m]);
                }
                if j < n && m > 0 {
                    v += self.b0 * prev[(j, m - 1)] * (sq[n - j] * sq[m]);
                }
                if j > 0 && m > 0 {
                    v += self.b1 * prev[(j - 1, m - 1)] * (sq[j] * sq[m]);
                }
                next[(j, m)] = v * inv;
            }
        }
        self.cur = next;
    }
}

/// Symmetric-power representation matrix `D(n)` of a 2x2 matrix.
pub fn sym_power(u: &Matrix2<Complex64>, n: usize) -> DMatrix<Complex64> {
    let mut seq = SymPowerSeq::new(u);
    for _ in 0..n {
        seq.advance();
    }
    seq.cur
}

/// Rotates the analysis bases of both sides: block `n` maps to
/// `D_a(n) * B_n * D_b(n)^T`, with `D_a` the symmetric power of `u_a` and
/// `D_b` the symmetric power of the slot-swapped `u_b` (side b indexes its
/// h-photon count from the opposite end).
///
/// The result stores dense blocks; for a state with many blocks this
/// materializes O(n_max^3) complex entries, so prefer the streaming
/// consumers in [`crate::detection`] when only click statistics are needed.
pub fn rotate(
    state: &PairBlockState,
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
) -> PairBlockState {
    let mut seq_a = SymPowerSeq::new(u_a.matrix());
    let mut seq_b = SymPowerSeq::new(&swap_slots(u_b.matrix()));
    let blocks = state
        .blocks
        .iter()
        .enumerate()
        .map(|(n, block)| {
            if n > 0 {
                seq_a.advance();
                seq_b.advance();
            }
            let d_a = seq_a.matrix();
            let d_b = seq_b.matrix();
            let dense = match block {
                Block::Diagonal(d) => {
                    let mut scaled = d_a.clone();
                    for (m, dm) in d.iter().enumerate() {
                        for j in 0..scaled.nrows() {
                            scaled[(j, m)] *= dm;
                        }
                    }
                    scaled * d_b.transpose()
                }
                Block::Dense(b) => d_a * b * d_b.transpose(),
            };
            Block::Dense(dense)
        })
        .collect();
    PairBlockState {
        blocks,
        tail_mass: state.tail_mass,
    }
}

/// Borrowed view of one (possibly implicitly scaled) block.
pub(crate) enum BlockView<'a> {
    Diagonal(&'a [Complex64]),
    Dense(&'a DMatrix<Complex64>),
}

/// Streams the blocks of the rotated state `(u_a, u_b) . state` one at a time
/// without materializing the whole rotated state.
///
/// The visitor receives `(n, scale, view)`, where the true block amplitudes
/// are `scale * view`. Identity rotations pass blocks through untouched; the
/// source state takes a fast path in which rotated block `n` is
/// `c_n * D(n)` of the single 2x2 transfer matrix `u_a * sz * swap(u_b)^T`
/// (the alternating diagonal is itself the symmetric power of sz, and
/// symmetric powers multiply homomorphically).
pub(crate) fn visit_rotated_blocks<F>(
    state: &PairBlockState,
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
    mut visit: F,
) where
    F: FnMut(usize, Complex64, BlockView<'_>),
{
    if u_a.is_identity() && u_b.is_identity() {
        for (n, block) in state.blocks.iter().enumerate() {
            match block {
                Block::Diagonal(d) => visit(n, ONE, BlockView::Diagonal(d)),
                Block::Dense(m) => visit(n, ONE, BlockView::Dense(m)),
            }
        }
        return;
    }
    if let Some(scales) = state.alternating_diagonal_scales() {
        let sz = Matrix2::new(ONE, ZERO, ZERO, -ONE);
        let transfer = u_a.matrix() * sz * swap_slots(u_b.matrix()).transpose();
        let mut seq = SymPowerSeq::new(&transfer);
        for (n, c) in scales.into_iter().enumerate() {
            if n > 0 {
                seq.advance();
            }
            visit(n, c, BlockView::Dense(seq.matrix()));
        }
        return;
    }
    let mut seq_a = SymPowerSeq::new(u_a.matrix());
    let mut seq_b = SymPowerSeq::new(&swap_slots(u_b.matrix()));
    for (n, block) in state.blocks.iter().enumerate() {
        if n > 0 {
            seq_a.advance();
            seq_b.advance();
        }
        let d_a = seq_a.matrix();
        let d_b = seq_b.matrix();
        let dense = match block {
            Block::Diagonal(d) => {
                let mut scaled = d_a.clone();
                for (m, dm) in d.iter().enumerate() {
                    for j in 0..scaled.nrows() {
                        scaled[(j, m)] *= dm;
                    }
                }
                scaled * d_b.transpose()
            }
            Block::Dense(b) => d_a * b * d_b.transpose(),
        };
        visit(n, ONE, BlockView::Dense(&dense));
    }
}
