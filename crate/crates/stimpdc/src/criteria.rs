//! Entanglement certification from coincidence-subspace statistics.
//!
//! Restricting to pulses with exactly one click per side turns the
//! multiphoton state into an effective two-qubit ensemble. This module
//! extracts two-photon visibilities from those statistics, reconstructs the
//! effective 4x4 density matrix from nine analysis-basis combinations, and
//! evaluates three entanglement tests on the same ingredients:
//!
//! - criterion 1, a quotient of coincidence products against squared
//!   visibility sums, certifies entanglement when it drops below one;
//! - criterion 2, the absolute sum of the three same-basis visibilities,
//!   certifies entanglement when it exceeds one (no product state of two
//!   qubits can exceed one, by the same uncertainty argument that bounds
//!   the total spin);
//! - the partial transpose of the reconstructed density matrix certifies
//!   entanglement through a negative eigenvalue.
//!
//! All three agree on where the entangled region ends for this source; that
//! consistency is checked in the test suite.

use nalgebra::{Matrix2, Matrix4, SMatrix};
use num_complex::Complex64;
use serde::Serialize;

use crate::detection::SubspaceProbs;
use crate::state::Basis;
use crate::{Error, Result};

/// Two-photon visibility of one analysis-basis combination: the contrast
/// between anticorrelated and correlated coincidences,
/// `(p_hv + p_vh - p_hh - p_vv)` over the normalized subspace outcomes.
///
/// The source anticorrelates polarizations in every basis, so a perfect
/// measurement on one pair gives visibility one in all three same-basis
/// combinations. Mixed-basis combinations of the unbiased basis set give
/// zero by symmetry.
pub fn visibility(probs: &SubspaceProbs) -> f64 {
    probs.p_hv + probs.p_vh - probs.p_hh - probs.p_vv
}

/// The same-basis visibility read as a spin correlation, `-<sigma sigma>`,
/// with the first-listed outcome of the basis counted as +1 on both sides.
///
/// Algebraically identical to [`visibility`]; the function exists to make
/// the operator meaning explicit and is restricted to matching bases, where
/// a spin-correlation reading is defined.
pub fn visibility_as_spin_correlation(probs: &SubspaceProbs) -> Result<f64> {
    if probs.basis_a != probs.basis_b {
        return Err(Error::MixedBases {
            a: probs.basis_a,
            b: probs.basis_b,
        });
    }
    let correlation = probs.p_hh + probs.p_vv - probs.p_hv - probs.p_vh;
    let v = -correlation;
    debug_assert!((v - visibility(probs)).abs() <= 1e-12);
    Ok(v)
}

/// Visibilities of all nine analysis-basis combinations, indexed by
/// [`Basis::index`] of each side.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VisibilitySet {
    v: [[f64; 3]; 3],
}

impl VisibilitySet {
    /// Wraps a table of visibilities, rejecting values outside [-1, 1]
    /// beyond rounding slack.
    pub fn new(v: [[f64; 3]; 3]) -> Result<Self> {
        for row in &v {
            for &value in row {
                if value.abs() > 1.0 + 1e-10 {
                    return Err(Error::NumericCheck(format!(
                        "visibility {value} lies outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(Self { v })
    }

    pub fn get(&self, basis_a: Basis, basis_b: Basis) -> f64 {
        self.v[basis_a.index()][basis_b.index()]
    }

    pub fn table(&self) -> &[[f64; 3]; 3] {
        &self.v
    }
}

/// Sum of the three same-basis spin correlations
/// `<sigma_x sigma_x> + <sigma_y sigma_y> + <sigma_z sigma_z>`, which is the
/// negated sum of the three same-basis visibilities.
///
/// Reaches -3 only for the two-qubit singlet; product states stay within
/// [-1, 1].
pub fn total_spin_correlation(vis: &VisibilitySet) -> f64 {
    -(vis.get(Basis::Pm, Basis::Pm) + vis.get(Basis::Rl, Basis::Rl) + vis.get(Basis::Hv, Basis::Hv))
}

/// Criterion 2: the absolute sum of the three same-basis visibilities.
/// Values above one certify entanglement of the subspace ensemble.
pub fn c2(vis: &VisibilitySet) -> f64 {
    (vis.get(Basis::Pm, Basis::Pm) + vis.get(Basis::Rl, Basis::Rl) + vis.get(Basis::Hv, Basis::Hv))
        .abs()
}

/// Criterion 1: `16 p_hh p_vv / ((V_pm,pm + V_rl,rl)^2 + (V_pm,rl - V_rl,pm)^2)`,
/// with `p_hh`, `p_vv` the normalized correlated outcomes of the hv/hv
/// combination. Values below one certify entanglement.
///
/// The numerator measures how rarely both sides agree in the hv basis; the
/// denominator is the coherence between the two anticorrelated amplitudes,
/// visible as visibility in the rotated bases.
pub fn c1(probs_hv: &SubspaceProbs, vis: &VisibilitySet) -> Result<f64> {
    if probs_hv.basis_a != Basis::Hv || probs_hv.basis_b != Basis::Hv {
        return Err(Error::Config(format!(
            "criterion 1 needs hv/hv subspace probabilities, got {}/{}",
            probs_hv.basis_a, probs_hv.basis_b
        )));
    }
    let sum = vis.get(Basis::Pm, Basis::Pm) + vis.get(Basis::Rl, Basis::Rl);
    let diff = vis.get(Basis::Pm, Basis::Rl) - vis.get(Basis::Rl, Basis::Pm);
    let denom = sum * sum + diff * diff;
    if denom == 0.0 {
        return Err(Error::DegenerateCriterion);
    }
    Ok(16.0 * probs_hv.p_hh * probs_hv.p_vv / denom)
}

/// Subspace probabilities of all nine analysis-basis combinations.
#[derive(Clone, Debug)]
pub struct BasisGrid {
    cells: Vec<SubspaceProbs>,
}

impl BasisGrid {
    /// Fills the grid by evaluating `f` on each basis combination in row
    /// order (a-side basis outermost).
    pub fn compute<F>(mut f: F) -> Result<Self>
    where
        F: FnMut(Basis, Basis) -> Result<SubspaceProbs>,
    {
        let mut cells = Vec::with_capacity(9);
        for a in Basis::ALL {
            for b in Basis::ALL {
                cells.push(f(a, b)?);
            }
        }
        Ok(Self { cells })
    }

    /// Assembles the grid from records in any order, keyed by their basis
    /// labels. Every combination must appear; later duplicates are ignored.
    pub fn from_probs(probs: &[SubspaceProbs]) -> Result<Self> {
        let mut cells = Vec::with_capacity(9);
        for a in Basis::ALL {
            for b in Basis::ALL {
                let cell = probs
                    .iter()
                    .find(|p| p.basis_a == a && p.basis_b == b)
                    .ok_or(Error::MissingBasisPair { a, b })?;
                cells.push(*cell);
            }
        }
        Ok(Self { cells })
    }

    pub fn get(&self, basis_a: Basis, basis_b: Basis) -> &SubspaceProbs {
        &self.cells[basis_a.index() * 3 + basis_b.index()]
    }

    /// Visibility of every combination.
    pub fn visibilities(&self) -> Result<VisibilitySet> {
        let mut v = [[0.0; 3]; 3];
        for a in Basis::ALL {
            for b in Basis::ALL {
                v[a.index()][b.index()] = visibility(self.get(a, b));
            }
        }
        VisibilitySet::new(v)
    }
}

/// Effective two-qubit density matrix on the coincidence subspace, ordered
/// {hh, hv, vh, vv} by the first-listed outcomes of the reconstruction bases.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: Matrix4<Complex64>,
}

impl DensityMatrix {
    /// Wraps a matrix after verifying hermiticity (1e-10) and unit trace (1e-8).
    pub fn new(rho: Matrix4<Complex64>) -> Result<Self> {
        let dm = Self { rho };
        let dev = dm.hermiticity_deviation();
        if dev > 1e-10 {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let trace = dm.trace();
        if (trace.re - 1.0).abs() > 1e-8 || trace.im.abs() > 1e-8 {
            return Err(Error::NumericCheck(format!(
                "density matrix trace is {trace} instead of 1"
            )));
        }
        Ok(dm)
    }

    /// Wraps a matrix without validation, for deliberately malformed inputs.
    pub fn from_matrix_unchecked(rho: Matrix4<Complex64>) -> Self {
        Self { rho }
    }

    /// The two-qubit singlet `(|hv> - |vh>)/sqrt(2)` as a density matrix.
    pub fn singlet() -> Self {
        let mut rho = Matrix4::zeros();
        let half = Complex64::new(0.5, 0.0);
        rho[(1, 1)] = half;
        rho[(2, 2)] = half;
        rho[(1, 2)] = -half;
        rho[(2, 1)] = -half;
        Self { rho }
    }

    /// The maximally mixed two-qubit state.
    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix4::identity() * Complex64::new(0.25, 0.0),
        }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.rho[(i, j)]
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// Largest entrywise deviation from the conjugate transpose.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                dev = dev.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Real parts as a nested array, row major.
    pub fn re_array(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.rho[(i, j)].re))
    }

    /// Imaginary parts as a nested array, row major.
    pub fn im_array(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.rho[(i, j)].im))
    }

    /// Largest absolute imaginary part of any entry.
    pub fn max_imag(&self) -> f64 {
        self.rho.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }
}

/// Density matrix reconstructed by linear inversion, with consistency
/// warnings gathered along the way.
#[derive(Clone, Debug)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub warnings: Vec<String>,
}

fn pauli(basis: Basis) -> Matrix2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match basis {
        // the hv basis measures sigma_z, the linear +-45 basis sigma_x, the
        // circular basis sigma_y
        Basis::Hv => Matrix2::new(one, zero, zero, -one),
        Basis::Pm => Matrix2::new(zero, one, one, zero),
        Basis::Rl => Matrix2::new(zero, -i, i, zero),
    }
}

/// Spin correlation of one grid cell: first-listed outcomes count +1.
fn pauli_correlation(probs: &SubspaceProbs) -> f64 {
    probs.p_hh + probs.p_vv - probs.p_hv - probs.p_vh
}

/// A-side marginal spin expectation of one grid cell.
fn marginal_a(probs: &SubspaceProbs) -> f64 {
    probs.p_hh + probs.p_hv - probs.p_vh - probs.p_vv
}

/// B-side marginal spin expectation of one grid cell.
fn marginal_b(probs: &SubspaceProbs) -> f64 {
    probs.p_hh + probs.p_vh - probs.p_hv - probs.p_vv
}

/// Reconstructs the effective two-qubit density matrix from the nine-basis
/// grid by linear inversion.
///
/// The nine correlations fix the sigma-sigma terms directly. Each single-side
/// spin expectation is measured three times (once per partner basis); the
/// three readings are averaged, and a warning is emitted when they spread by
/// more than 0.01, since on a genuine two-qubit ensemble they must agree.
/// A second warning fires when the raw subspace rates behind the cells
/// differ by more than 5%, which signals that the cells were not taken under
/// comparable conditions.
pub fn tomography(grid: &BasisGrid) -> Result<TomographyResult> {
    let mut warnings = Vec::new();

    let mut corr = [[0.0; 3]; 3];
    for a in Basis::ALL {
        for b in Basis::ALL {
            corr[a.index()][b.index()] = pauli_correlation(grid.get(a, b));
        }
    }

    let mut single_a = [0.0; 3];
    let mut single_b = [0.0; 3];
    for x in Basis::ALL {
        let readings_a: Vec<f64> = Basis::ALL
            .iter()
            .map(|&y| marginal_a(grid.get(x, y)))
            .collect();
        let readings_b: Vec<f64> = Basis::ALL
            .iter()
            .map(|&y| marginal_b(grid.get(y, x)))
            .collect();
        for (side, readings) in [("a", &readings_a), ("b", &readings_b)] {
            let max = readings.iter().cloned().fold(f64::MIN, f64::max);
            let min = readings.iter().cloned().fold(f64::MAX, f64::min);
            if max - min > 0.01 {
                warnings.push(format!(
                    "single-side expectation <sigma_{x}> on side {side} varies by {:.4} across partner bases",
                    max - min
                ));
            }
        }
        single_a[x.index()] = readings_a.iter().sum::<f64>() / 3.0;
        single_b[x.index()] = readings_b.iter().sum::<f64>() / 3.0;
    }

    let rates: Vec<f64> = Basis::ALL
        .iter()
        .flat_map(|&a| Basis::ALL.iter().map(move |&b| grid.get(a, b).p11))
        .collect();
    let max = rates.iter().cloned().fold(f64::MIN, f64::max);
    let min = rates.iter().cloned().fold(f64::MAX, f64::min);
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    if mean > 0.0 && (max - min) / mean > 0.05 {
        warnings.push(format!(
            "raw coincidence rates spread by {:.1}% across basis combinations",
            100.0 * (max - min) / mean
        ));
    }

    let id = Matrix2::identity();
    let quarter = Complex64::new(0.25, 0.0);
    let mut rho = id.kronecker(&id) * quarter;
    for x in Basis::ALL {
        let re = |v: f64| Complex64::new(v, 0.0);
        rho += pauli(x).kronecker(&id) * (quarter * re(single_a[x.index()]));
        rho += id.kronecker(&pauli(x)) * (quarter * re(single_b[x.index()]));
        for y in Basis::ALL {
            rho += pauli(x).kronecker(&pauli(y))
                * (quarter * re(corr[x.index()][y.index()]));
        }
    }

    Ok(TomographyResult {
        rho: DensityMatrix::new(rho)?,
        warnings,
    })
}

/// Eigenvalues of a Hermitian 4x4 complex matrix, ascending, via the real
/// symmetric embedding `[[Re, -Im], [Im, Re]]`, whose spectrum is the
/// complex spectrum doubled.
fn hermitian_eigenvalues(m: &Matrix4<Complex64>) -> [f64; 4] {
    let mut embed = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            embed[(i, j)] = m[(i, j)].re;
            embed[(i + 4, j + 4)] = m[(i, j)].re;
            embed[(i, j + 4)] = -m[(i, j)].im;
            embed[(i + 4, j)] = m[(i, j)].im;
        }
    }
    let mut eigs: Vec<f64> = nalgebra::SymmetricEigen::new(embed)
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    std::array::from_fn(|k| 0.5 * (eigs[2 * k] + eigs[2 * k + 1]))
}

/// Eigenvalues of the partial transpose over side b, ascending.
pub fn pt_spectrum(rho: &DensityMatrix) -> Result<[f64; 4]> {
    let dev = rho.hermiticity_deviation();
    if dev > 1e-8 {
        return Err(Error::NonHermitian { deviation: dev });
    }
    let m = rho.matrix();
    let mut pt = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    pt[(2 * i + l, 2 * k + j)] = m[(2 * i + j, 2 * k + l)];
                }
            }
        }
    }
    Ok(hermitian_eigenvalues(&pt))
}

/// Smallest eigenvalue of the partial transpose. Negative values certify
/// entanglement; separable states keep the whole spectrum non-negative.
pub fn partial_transpose_min_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    Ok(pt_spectrum(rho)?[0])
}

/// Everything the three entanglement tests produce for one configuration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CriteriaResult {
    pub c1: f64,
    pub c2: f64,
    pub min_pt_eigenvalue: f64,
    pub total_spin_correlation: f64,
    pub entangled_by_c1: bool,
    pub entangled_by_c2: bool,
    pub entangled_by_ppt: bool,
}

/// Tolerance below zero before a partial-transpose eigenvalue counts as
/// negative, absorbing reconstruction rounding at the separability boundary.
pub const PPT_TOLERANCE: f64 = 1e-10;

/// Runs both visibility criteria and the partial-transpose test on one
/// nine-basis grid.
pub fn evaluate_criteria(grid: &BasisGrid) -> Result<CriteriaResult> {
    let vis = grid.visibilities()?;
    let c1_value = c1(grid.get(Basis::Hv, Basis::Hv), &vis)?;
    let c2_value = c2(&vis);
    let tomo = tomography(grid)?;
    let min_pt = partial_transpose_min_eigenvalue(&tomo.rho)?;
    Ok(CriteriaResult {
        c1: c1_value,
        c2: c2_value,
        min_pt_eigenvalue: min_pt,
        total_spin_correlation: total_spin_correlation(&vis),
        entangled_by_c1: c1_value < 1.0,
        entangled_by_c2: c2_value > 1.0,
        entangled_by_ppt: min_pt < -PPT_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{subspace_probs_closed, Efficiencies};
    use approx::assert_relative_eq;

    fn closed_grid(tau: f64, eta: f64) -> BasisGrid {
        let etas = Efficiencies::uniform(eta).unwrap();
        BasisGrid::compute(|a, b| subspace_probs_closed(tau, &etas, a, b)).unwrap()
    }

    fn singlet_cell(basis: Basis) -> SubspaceProbs {
        SubspaceProbs::from_raw(basis, basis, [0.0, 0.5, 0.5, 0.0], 0.0).unwrap()
    }

    #[test]
    fn singlet_visibility_is_one_in_every_basis() {
        for basis in Basis::ALL {
            let cell = singlet_cell(basis);
            assert_relative_eq!(visibility(&cell), 1.0);
            assert_relative_eq!(visibility_as_spin_correlation(&cell).unwrap(), 1.0);
        }
    }

    #[test]
    fn spin_correlation_form_rejects_mixed_bases() {
        let cell = SubspaceProbs::from_raw(Basis::Hv, Basis::Pm, [0.25; 4], 0.0).unwrap();
        assert!(matches!(
            visibility_as_spin_correlation(&cell),
            Err(Error::MixedBases { .. })
        ));
    }

    #[test]
    fn spin_correlation_extremes() {
        // singlet: every same-basis correlation -1, total -3, c2 = 3
        let vis = VisibilitySet::new([[1.0; 3]; 3]).unwrap();
        assert_relative_eq!(total_spin_correlation(&vis), -3.0);
        assert_relative_eq!(c2(&vis), 3.0);

        // |hh>: correlated in hv, uncorrelated in the rotated bases
        let mut table = [[0.0; 3]; 3];
        table[Basis::Hv.index()][Basis::Hv.index()] = -1.0;
        let vis = VisibilitySet::new(table).unwrap();
        assert_relative_eq!(total_spin_correlation(&vis), 1.0);
        assert_relative_eq!(c2(&vis), 1.0);
    }

    #[test]
    fn visibility_set_rejects_out_of_range() {
        let mut table = [[0.0; 3]; 3];
        table[0][0] = 1.1;
        assert!(VisibilitySet::new(table).is_err());
    }

    #[test]
    fn c1_arithmetic_fixture() {
        let probs = SubspaceProbs::from_raw(Basis::Hv, Basis::Hv, [0.25; 4], 0.0).unwrap();
        let mut table = [[0.0; 3]; 3];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        table[Basis::Pm.index()][Basis::Pm.index()] = r;
        table[Basis::Rl.index()][Basis::Rl.index()] = r;
        table[Basis::Pm.index()][Basis::Rl.index()] = 0.3;
        table[Basis::Rl.index()][Basis::Pm.index()] = 0.3;
        let vis = VisibilitySet::new(table).unwrap();
        assert_relative_eq!(c1(&probs, &vis).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn c1_rejects_wrong_cell_and_degenerate_denominator() {
        let probs = SubspaceProbs::from_raw(Basis::Pm, Basis::Pm, [0.25; 4], 0.0).unwrap();
        let vis = VisibilitySet::new([[0.5; 3]; 3]).unwrap();
        assert!(c1(&probs, &vis).is_err());

        let probs = SubspaceProbs::from_raw(Basis::Hv, Basis::Hv, [0.25; 4], 0.0).unwrap();
        let vis = VisibilitySet::new([[0.0; 3]; 3]).unwrap();
        assert!(matches!(
            c1(&probs, &vis),
            Err(Error::DegenerateCriterion)
        ));
    }

    #[test]
    fn singlet_density_matrix_properties() {
        let rho = DensityMatrix::singlet();
        assert!(rho.hermiticity_deviation() < 1e-15);
        assert_relative_eq!(rho.trace().re, 1.0);
        assert_relative_eq!(
            partial_transpose_min_eigenvalue(&rho).unwrap(),
            -0.5,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            partial_transpose_min_eigenvalue(&DensityMatrix::maximally_mixed()).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn partial_transpose_rejects_non_hermitian_input() {
        let mut m = Matrix4::zeros();
        m[(0, 1)] = Complex64::new(0.3, 0.0);
        for i in 0..4 {
            m[(i, i)] = Complex64::new(0.25, 0.0);
        }
        let rho = DensityMatrix::from_matrix_unchecked(m);
        assert!(matches!(
            partial_transpose_min_eigenvalue(&rho),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn tomography_reproduces_frozen_pipeline_values() {
        let grid = closed_grid(1.85, 0.019);
        let tomo = tomography(&grid).unwrap();
        assert!(tomo.warnings.is_empty(), "warnings: {:?}", tomo.warnings);
        let rho = &tomo.rho;
        assert_relative_eq!(rho.entry(0, 0).re, 0.140353589515, epsilon = 1e-10);
        assert_relative_eq!(rho.entry(1, 2).re, -0.219292820970, epsilon = 1e-10);
        assert!(rho.max_imag() < 1e-12);
        assert_relative_eq!(
            partial_transpose_min_eigenvalue(rho).unwrap(),
            -0.078939231455,
            epsilon = 1e-9
        );
    }

    #[test]
    fn criteria_match_frozen_pipeline_values() {
        let cases = [
            // tau, c1, c2, min partial-transpose eigenvalue
            (1.3, 0.409664697554, 1.315731139511, -0.078932784878),
            (1.85, 0.396899856304, 1.327433762289, -0.081858440572),
            (2.3, 0.220378137261, 1.547277850536, -0.136819462634),
        ];
        for (tau, c1_expect, c2_expect, pt_expect) in cases {
            let grid = closed_grid(tau, 0.02);
            let result = evaluate_criteria(&grid).unwrap();
            assert_relative_eq!(result.c1, c1_expect, epsilon = 1e-9);
            assert_relative_eq!(result.c2, c2_expect, epsilon = 1e-9);
            assert_relative_eq!(result.min_pt_eigenvalue, pt_expect, epsilon = 1e-9);
            assert!(result.entangled_by_c1);
            assert!(result.entangled_by_c2);
            assert!(result.entangled_by_ppt);
            assert_relative_eq!(result.total_spin_correlation, -c2_expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn equal_efficiency_pipeline_satisfies_werner_identities() {
        // with equal arm efficiencies the reconstructed state is a Werner
        // state, tying every quantity to the single visibility V
        for tau in [0.3, 1.0, 1.7] {
            let grid = closed_grid(tau, 0.05);
            let v = visibility(grid.get(Basis::Hv, Basis::Hv));
            let result = evaluate_criteria(&grid).unwrap();
            assert_relative_eq!(
                result.c1,
                (1.0 - v).powi(2) / (4.0 * v * v),
                epsilon = 1e-10
            );
            assert_relative_eq!(result.c2, 3.0 * v, epsilon = 1e-10);
            assert_relative_eq!(
                result.min_pt_eigenvalue,
                (1.0 - 3.0 * v) / 4.0,
                epsilon = 1e-10
            );
            let tomo = tomography(&grid).unwrap();
            assert_relative_eq!(tomo.rho.entry(1, 2).re, -v / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn tomography_warns_on_inconsistent_marginals() {
        // bias the a-side marginal differently per partner basis
        let grid = BasisGrid::compute(|a, b| {
            let raw = if a == Basis::Hv && b == Basis::Pm {
                [0.40, 0.40, 0.10, 0.10]
            } else {
                [0.25, 0.25, 0.25, 0.25]
            };
            SubspaceProbs::from_raw(a, b, raw, 0.0)
        })
        .unwrap();
        let tomo = tomography(&grid).unwrap();
        assert!(!tomo.warnings.is_empty());
    }

    #[test]
    fn tomography_warns_on_spread_rates() {
        let grid = BasisGrid::compute(|a, b| {
            let scale = if a == Basis::Rl { 1.2 } else { 1.0 };
            SubspaceProbs::from_raw(a, b, [0.01 * scale; 4], 0.0)
        })
        .unwrap();
        let tomo = tomography(&grid).unwrap();
        assert!(tomo
            .warnings
            .iter()
            .any(|w| w.contains("coincidence rates")));
    }

    #[test]
    fn grid_assembly_requires_all_nine_cells() {
        let cells: Vec<SubspaceProbs> = Basis::ALL
            .iter()
            .flat_map(|&a| {
                Basis::ALL
                    .iter()
                    .filter(move |&&b| !(a == Basis::Rl && b == Basis::Rl))
                    .map(move |&b| SubspaceProbs::from_raw(a, b, [0.25; 4], 0.0).unwrap())
            })
            .collect();
        assert!(matches!(
            BasisGrid::from_probs(&cells),
            Err(Error::MissingBasisPair {
                a: Basis::Rl,
                b: Basis::Rl
            })
        ));
    }
}
