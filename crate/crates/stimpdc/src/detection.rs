//! Click statistics of four lossy threshold detectors, two per spatial mode.
//!
//! A threshold detector fires when at least one photon survives the loss in
//! front of it, so a detector seeing `m` photons at efficiency `eta` clicks
//! with probability `1 - (1-eta)^m`. Everything observable in a pulse is one
//! of sixteen click patterns over the detector set (a_h, a_v, b_h, b_v).
//!
//! The central computational object is the vector of silent-set expectations
//! `q[S] = E[prod_{d in S} (1-eta_d)^{k_d}]`, the probability that every
//! detector in `S` stays dark, averaged over the photon-number distribution
//! of the state. Pattern probabilities follow by inclusion-exclusion, which
//! turns "these fired, those did not" into an alternating sum of sixteen
//! `q` values. Two independent routes compute `q`:
//!
//! - the block route sums `|amplitude|^2` weights over a truncated
//!   [`PairBlockState`], exact up to the stored tail mass, for any state;
//! - the closed route evaluates a geometric-series formula in
//!   `x = tanh^2(tau)`, exact with no truncation at all, for the source
//!   state in any pair of analysis bases.
//!
//! Agreement of the two within the tail bound is a strong end-to-end check
//! and is enforced in the test suite and the `oracle-check` command.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::state::{
    swap_slots, visit_rotated_blocks, Basis, BlockView, PairBlockState, PolarizationRotation,
};
use crate::{Error, Result};

/// Detector labels in canonical order: index 0 = a_h, 1 = a_v, 2 = b_h, 3 = b_v.
pub const DETECTOR_LABELS: [&str; 4] = ["ah", "av", "bh", "bv"];

/// Number of click patterns over four detectors.
pub const PATTERN_COUNT: usize = 16;

/// Collection/detection efficiency of each detector arm, each in [0, 1].
///
/// The single number quoted for an experiment is the product of coupling,
/// filtering, and detector quantum efficiency; the four arms are kept
/// separate so imbalanced setups can be modeled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    pub eta_ah: f64,
    pub eta_av: f64,
    pub eta_bh: f64,
    pub eta_bv: f64,
}

impl Efficiencies {
    pub fn new(eta_ah: f64, eta_av: f64, eta_bh: f64, eta_bv: f64) -> Result<Self> {
        for (label, eta) in DETECTOR_LABELS.iter().zip([eta_ah, eta_av, eta_bh, eta_bv]) {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Config(format!(
                    "efficiency for {label} must lie in [0, 1], got {eta}"
                )));
            }
        }
        Ok(Self {
            eta_ah,
            eta_av,
            eta_bh,
            eta_bv,
        })
    }

    /// All four arms at the same efficiency.
    pub fn uniform(eta: f64) -> Result<Self> {
        Self::new(eta, eta, eta, eta)
    }

    /// Efficiencies in canonical detector order.
    pub fn as_array(&self) -> [f64; 4] {
        [self.eta_ah, self.eta_av, self.eta_bh, self.eta_bv]
    }

    /// Arithmetic mean over the four arms.
    pub fn mean(&self) -> f64 {
        self.as_array().iter().sum::<f64>() / 4.0
    }
}

/// Parses a pattern mask string like `"1010"`, ordered (a_h, a_v, b_h, b_v),
/// into the pattern index. Bit 3 of the index is a_h, bit 0 is b_v.
pub fn pattern_index(mask: &str) -> Result<usize> {
    if mask.len() != 4 {
        return Err(Error::Config(format!(
            "pattern mask must have 4 characters, got '{mask}'"
        )));
    }
    let mut idx = 0usize;
    for ch in mask.chars() {
        idx <<= 1;
        match ch {
            '1' => idx |= 1,
            '0' => {}
            other => {
                return Err(Error::Config(format!(
                    "pattern mask may only contain 0 and 1, got '{other}'"
                )))
            }
        }
    }
    Ok(idx)
}

/// Renders a pattern index as its mask string, the inverse of [`pattern_index`].
pub fn pattern_mask(index: usize) -> String {
    assert!(index < PATTERN_COUNT, "pattern index out of range");
    format!("{index:04b}")
}

/// Probability that one threshold detector fires when `m` photons arrive at
/// efficiency `eta`.
pub fn click_probability_single(m: usize, eta: f64) -> f64 {
    1.0 - (1.0 - eta).powi(m as i32)
}

/// Closed form for the firing probability of a single detector on one arm of
/// the source: `eta x / (1 - (1-eta) x)` with `x = tanh^2(tau)`.
///
/// The marginal photon number in one polarization of one side is geometric,
/// which makes the threshold average a single geometric series. Singles
/// rates are therefore independent of the analysis basis.
pub fn single_detector_prob_closed(tau: f64, eta: f64) -> f64 {
    let x = tau.tanh().powi(2);
    eta * x / (1.0 - (1.0 - eta) * x)
}

/// Exact probabilities of the sixteen click patterns.
///
/// `probs[i]` is indexed by fired-detector mask (bit 3 = a_h ... bit 0 = b_v)
/// and the sixteen entries sum to one minus the probability mass lost to
/// truncation, bounded by `tail_mass`.
#[derive(Clone, Debug, Serialize)]
pub struct ClickDistribution {
    pub probs: [f64; PATTERN_COUNT],
    pub tail_mass: f64,
}

impl ClickDistribution {
    /// Probability of one exact pattern by fired-detector mask.
    pub fn prob(&self, mask: usize) -> f64 {
        self.probs[mask]
    }

    /// Sum over all sixteen patterns.
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Marginal probability that one detector fires, any pattern.
    pub fn fire_marginal(&self, detector: usize) -> f64 {
        assert!(detector < 4, "detector index out of range");
        let bit = 3 - detector;
        self.probs
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask >> bit & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// Probability of exactly one click on each side, summed over the four
    /// polarization combinations.
    pub fn one_one_prob(&self) -> f64 {
        self.probs[0b1010] + self.probs[0b1001] + self.probs[0b0110] + self.probs[0b0101]
    }

    /// Probability of at least one click on each side.
    pub fn coincidence_prob(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask & 0b1100 != 0 && mask & 0b0011 != 0)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Adds one occupation's weight to the silent-set expectations.
///
/// `s[d]` is the probability that detector `d` stays dark given its photon
/// count; the product over each subset is built by extending the product of
/// the subset with its lowest bit removed.
fn accumulate_silent(q: &mut [f64; PATTERN_COUNT], w: f64, s: [f64; 4]) {
    let by_bit = [s[3], s[2], s[1], s[0]];
    let mut prod = [0.0f64; PATTERN_COUNT];
    prod[0] = w;
    for mask in 1..PATTERN_COUNT {
        let low = mask.trailing_zeros() as usize;
        prod[mask] = prod[mask & (mask - 1)] * by_bit[low];
    }
    for (acc, p) in q.iter_mut().zip(prod) {
        *acc += p;
    }
}

/// Converts silent-set expectations into exact pattern probabilities by
/// inclusion-exclusion: the detectors outside the pattern must be dark, and
/// "every fired detector clicked" unfolds into an alternating sum over the
/// subsets of the fired set. Tiny negative results from rounding are clamped
/// to zero.
fn patterns_from_silent(q: &[f64; PATTERN_COUNT]) -> [f64; PATTERN_COUNT] {
    let mut probs = [0.0f64; PATTERN_COUNT];
    for (fired, prob) in probs.iter_mut().enumerate() {
        let silent = !fired & 0xF;
        let mut acc = 0.0;
        let mut t = fired;
        loop {
            let sign = if (t.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * q[silent | t];
            if t == 0 {
                break;
            }
            t = (t - 1) & fired;
        }
        *prob = acc.max(0.0);
    }
    probs
}

fn pow_tables(etas: &Efficiencies, n_max: usize) -> [Vec<f64>; 4] {
    let e = etas.as_array();
    std::array::from_fn(|d| {
        let f = 1.0 - e[d];
        let mut v = Vec::with_capacity(n_max + 1);
        v.push(1.0);
        for k in 1..=n_max {
            v.push(v[k - 1] * f);
        }
        v
    })
}

/// Silent-set expectations of a state analyzed in rotated bases, by streaming
/// over the rotated blocks without materializing them.
fn silent_expectations_rotated(
    state: &PairBlockState,
    etas: &Efficiencies,
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
) -> [f64; PATTERN_COUNT] {
    let pows = pow_tables(etas, state.n_max());
    let mut q = [0.0f64; PATTERN_COUNT];
    visit_rotated_blocks(state, u_a, u_b, |n, scale, view| {
        let s2 = scale.norm_sqr();
        match view {
            BlockView::Diagonal(d) => {
                for (m, amp) in d.iter().enumerate() {
                    let w = s2 * amp.norm_sqr();
                    if w == 0.0 {
                        continue;
                    }
                    let s = [pows[0][n - m], pows[1][m], pows[2][m], pows[3][n - m]];
                    accumulate_silent(&mut q, w, s);
                }
            }
            BlockView::Dense(mat) => {
                for mb in 0..=n {
                    for ma in 0..=n {
                        let w = s2 * mat[(ma, mb)].norm_sqr();
                        if w == 0.0 {
                            continue;
                        }
                        let s = [pows[0][n - ma], pows[1][ma], pows[2][mb], pows[3][n - mb]];
                        accumulate_silent(&mut q, w, s);
                    }
                }
            }
        }
    });
    q
}

/// Click-pattern distribution of a state measured in its own basis.
pub fn click_distribution(state: &PairBlockState, etas: &Efficiencies) -> ClickDistribution {
    click_distribution_rotated(
        state,
        etas,
        &PolarizationRotation::hv(),
        &PolarizationRotation::hv(),
    )
}

/// Click-pattern distribution of a state analyzed in rotated bases.
pub fn click_distribution_rotated(
    state: &PairBlockState,
    etas: &Efficiencies,
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
) -> ClickDistribution {
    let q = silent_expectations_rotated(state, etas, u_a, u_b);
    ClickDistribution {
        probs: patterns_from_silent(&q),
        tail_mass: state.tail_mass(),
    }
}

/// The 2x2 matrix through which a pair amplitude connects one side-a mode to
/// one side-b mode after both analysis rotations. The source block `n` is the
/// n-th symmetric power of `sz`, so its rotated form is the symmetric power
/// of this single matrix.
pub(crate) fn transfer_matrix(
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
) -> Matrix2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let sz = Matrix2::new(one, zero, zero, -one);
    u_a.matrix() * sz * swap_slots(u_b.matrix()).transpose()
}

/// One silent-set expectation of the source state in closed form.
///
/// Averaging the dark probability over the pair-number distribution leaves a
/// derivative of a geometric series: `(1-x)^2 / (1 - x tr(G) + x^2 det(G))`,
/// where `G` folds the per-detector survival factors around the transfer
/// matrix and `x = tanh^2(tau)`. Exact for every gain, no truncation.
fn silent_expectation_closed(x: f64, m: &Matrix2<Complex64>, f: [f64; 4]) -> f64 {
    // column slot 0 of the transfer matrix feeds b_v, slot 1 feeds b_h
    let row = [f[0], f[1]];
    let col = [f[3], f[2]];
    let mut tr = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            tr += row[i] * col[j] * m[(i, j)].norm_sqr();
        }
    }
    let det_m = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let det = f[0] * f[1] * f[2] * f[3] * det_m.norm_sqr();
    (1.0 - x).powi(2) / (1.0 - x * tr + x * x * det)
}

/// All sixteen silent-set expectations of the source state at gain `tau`,
/// analyzed in the given bases, in closed form.
pub fn silent_expectations_closed(
    tau: f64,
    etas: &Efficiencies,
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
) -> [f64; PATTERN_COUNT] {
    let x = tau.tanh().powi(2);
    let m = transfer_matrix(u_a, u_b);
    let e = etas.as_array();
    std::array::from_fn(|mask| {
        let f = std::array::from_fn(|d| if mask >> (3 - d) & 1 == 1 { 1.0 - e[d] } else { 1.0 });
        silent_expectation_closed(x, &m, f)
    })
}

/// Click-pattern distribution of the source state in closed form, exact with
/// no pair-number truncation.
pub fn click_distribution_closed(
    tau: f64,
    etas: &Efficiencies,
    u_a: &PolarizationRotation,
    u_b: &PolarizationRotation,
) -> ClickDistribution {
    let q = silent_expectations_closed(tau, etas, u_a, u_b);
    ClickDistribution {
        probs: patterns_from_silent(&q),
        tail_mass: 0.0,
    }
}

/// Detection probabilities restricted to the exactly-one-click-per-side
/// subspace, the events a coincidence analysis keeps.
///
/// `raw_*` are absolute per-pulse probabilities of the four patterns, `p11`
/// their sum, and `p_*` the normalized distribution over the four outcomes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SubspaceProbs {
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub raw_hh: f64,
    pub raw_hv: f64,
    pub raw_vh: f64,
    pub raw_vv: f64,
    pub p11: f64,
    pub p_hh: f64,
    pub p_hv: f64,
    pub p_vh: f64,
    pub p_vv: f64,
    pub tail_mass: f64,
}

impl SubspaceProbs {
    /// Builds the record from the four raw pattern probabilities, ordered
    /// (hh, hv, vh, vv) by the first-listed outcomes of each basis.
    pub fn from_raw(basis_a: Basis, basis_b: Basis, raw: [f64; 4], tail_mass: f64) -> Result<Self> {
        let p11: f64 = raw.iter().sum();
        if p11 <= 0.0 {
            return Err(Error::EmptySubspace);
        }
        Ok(Self {
            basis_a,
            basis_b,
            raw_hh: raw[0],
            raw_hv: raw[1],
            raw_vh: raw[2],
            raw_vv: raw[3],
            p11,
            p_hh: raw[0] / p11,
            p_hv: raw[1] / p11,
            p_vh: raw[2] / p11,
            p_vv: raw[3] / p11,
            tail_mass,
        })
    }

    /// Raw pattern probabilities in (hh, hv, vh, vv) order.
    pub fn raw(&self) -> [f64; 4] {
        [self.raw_hh, self.raw_hv, self.raw_vh, self.raw_vv]
    }

    /// Normalized outcome distribution in (hh, hv, vh, vv) order.
    pub fn normalized(&self) -> [f64; 4] {
        [self.p_hh, self.p_hv, self.p_vh, self.p_vv]
    }
}

fn subspace_from_distribution(
    basis_a: Basis,
    basis_b: Basis,
    dist: &ClickDistribution,
) -> Result<SubspaceProbs> {
    let raw = [
        dist.probs[0b1010],
        dist.probs[0b1001],
        dist.probs[0b0110],
        dist.probs[0b0101],
    ];
    SubspaceProbs::from_raw(basis_a, basis_b, raw, dist.tail_mass)
}

/// Coincidence-subspace probabilities of a state analyzed in the given bases,
/// via the block route.
pub fn subspace_probs(
    state: &PairBlockState,
    etas: &Efficiencies,
    basis_a: Basis,
    basis_b: Basis,
) -> Result<SubspaceProbs> {
    let dist = click_distribution_rotated(state, etas, &basis_a.rotation(), &basis_b.rotation());
    subspace_from_distribution(basis_a, basis_b, &dist)
}

/// Coincidence-subspace probabilities of the source state, closed route.
pub fn subspace_probs_closed(
    tau: f64,
    etas: &Efficiencies,
    basis_a: Basis,
    basis_b: Basis,
) -> Result<SubspaceProbs> {
    let dist = click_distribution_closed(tau, etas, &basis_a.rotation(), &basis_b.rotation());
    subspace_from_distribution(basis_a, basis_b, &dist)
}

fn ratio_from_distribution(dist: &ClickDistribution) -> Result<f64> {
    let cc = dist.coincidence_prob();
    if cc <= 0.0 {
        return Err(Error::EmptySubspace);
    }
    Ok((cc - dist.one_one_prob()) / cc)
}

/// Fraction of two-sided coincidence events that fire more than one detector
/// on a side, i.e. leave the exactly-one-click-per-side subspace.
///
/// This is the operational cost of multi-pair emission to a coincidence
/// analysis: at low gain almost every coincidence is a clean (1,1) event,
/// while rising gain (or rising efficiency) makes double clicks on a side
/// increasingly common. Click totals per side are basis independent, so the
/// ratio is computed in the state's own basis.
pub fn subspace_ratio(state: &PairBlockState, etas: &Efficiencies) -> Result<f64> {
    ratio_from_distribution(&click_distribution(state, etas))
}

/// Closed-route version of [`subspace_ratio`] for the source state.
pub fn subspace_ratio_closed(tau: f64, etas: &Efficiencies) -> Result<f64> {
    ratio_from_distribution(&click_distribution_closed(
        tau,
        etas,
        &PolarizationRotation::hv(),
        &PolarizationRotation::hv(),
    ))
}

/// Two-photon visibility predicted by a model of distinguishable pairs.
///
/// Each pair is independently either (a_h, b_v) or (a_v, b_h) polarized with
/// equal probability, keeping the anticorrelation and the pair-number
/// distribution of the real source but discarding the collective coherence
/// between pairs. Averaging the dark probabilities over the binomial
/// orientation split gives each silent set the closed form
/// `(1-x)^2 / (1 - x q_S)^2` with `q_S` the mean per-pair survival factor.
/// Returns NaN when no coincidences occur at all (zero gain or efficiency).
///
/// The gap between this value and the visibility of the entangled state is
/// what certifies that stimulated emission preserves coherence: distinguishable
/// pairs cap the visibility well below what the real source reaches at the
/// same gain and loss.
pub fn ansatz_visibility(tau: f64, eta: f64) -> f64 {
    let x = tau.tanh().powi(2);
    let miss = 1.0 - eta;
    let q: [f64; PATTERN_COUNT] = std::array::from_fn(|mask| {
        let k1 = (mask & 0b1001).count_ones() as i32;
        let k2 = (mask & 0b0110).count_ones() as i32;
        let q_s = 0.5 * (miss.powi(k1) + miss.powi(k2));
        (1.0 - x).powi(2) / (1.0 - x * q_s).powi(2)
    });
    let p = patterns_from_silent(&q);
    let anti = p[0b1001] + p[0b0110];
    let corr = p[0b1010] + p[0b0101];
    (anti - corr) / (anti + corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{build_pdc_state, default_tail_tol, select_n_max};
    use approx::assert_relative_eq;

    fn mixed_etas() -> Efficiencies {
        Efficiencies::new(0.13, 0.08, 0.21, 0.05).unwrap()
    }

    #[test]
    fn pattern_mask_round_trip() {
        for idx in 0..PATTERN_COUNT {
            assert_eq!(pattern_index(&pattern_mask(idx)).unwrap(), idx);
        }
        assert_eq!(pattern_index("1010").unwrap(), 0b1010);
        assert!(pattern_index("10a0").is_err());
        assert!(pattern_index("101").is_err());
    }

    #[test]
    fn efficiencies_validate_range() {
        assert!(Efficiencies::uniform(0.5).is_ok());
        assert!(Efficiencies::uniform(-0.1).is_err());
        assert!(Efficiencies::new(0.5, 0.5, 1.2, 0.5).is_err());
    }

    #[test]
    fn single_click_probability_basics() {
        assert_eq!(click_probability_single(0, 0.7), 0.0);
        assert_eq!(click_probability_single(3, 1.0), 1.0);
        assert_relative_eq!(click_probability_single(2, 0.5), 0.75);
    }

    #[test]
    fn closed_singles_formula_matches_frozen_values() {
        assert_relative_eq!(
            single_detector_prob_closed(2.3, 0.019),
            0.31651889880758405,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            single_detector_prob_closed(1.3, 0.019),
            0.051957969783652,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            single_detector_prob_closed(0.5, 0.5),
            0.119540170749650,
            max_relative = 1e-12
        );
    }

    #[test]
    fn closed_distribution_matches_frozen_mixed_basis_values() {
        let dist = click_distribution_closed(
            0.8,
            &mixed_etas(),
            &Basis::Hv.rotation(),
            &Basis::Pm.rotation(),
        );
        let expect = [
            (0b0000, 7.266539026093389e-01),
            (0b1000, 5.92344092527255e-02),
            (0b1010, 2.182753111327718e-02),
            (0b1001, 5.186713388065534e-03),
            (0b0110, 1.345126390076667e-02),
            (0b1111, 1.252256188837286e-04),
        ];
        for (mask, value) in expect {
            // absolute tolerance: the many-fired patterns come out of an
            // alternating sum over O(1) terms, so their small values carry
            // cancellation noise of order 1e-15
            assert_relative_eq!(dist.prob(mask), value, epsilon = 1e-14);
        }
        assert_relative_eq!(dist.total(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn block_route_agrees_with_closed_route() {
        let tau = 0.8;
        let n_max = select_n_max(tau, 1e-9).unwrap();
        let state = build_pdc_state(tau, n_max);
        let etas = mixed_etas();
        for (ba, bb) in [(Basis::Hv, Basis::Pm), (Basis::Rl, Basis::Rl)] {
            let block =
                click_distribution_rotated(&state, &etas, &ba.rotation(), &bb.rotation());
            let closed = click_distribution_closed(tau, &etas, &ba.rotation(), &bb.rotation());
            for mask in 0..PATTERN_COUNT {
                let dev = (block.prob(mask) - closed.prob(mask)).abs();
                assert!(
                    dev <= state.tail_mass() + 1e-10,
                    "{ba}/{bb} mask {mask:04b}: deviation {dev:.3e}"
                );
            }
        }
    }

    #[test]
    fn block_singles_marginal_matches_closed_formula() {
        let tau = 1.3;
        let eta = 0.019;
        let n_max = select_n_max(tau, default_tail_tol(tau)).unwrap();
        let state = build_pdc_state(tau, n_max);
        let dist = click_distribution(&state, &Efficiencies::uniform(eta).unwrap());
        for detector in 0..4 {
            let dev = (dist.fire_marginal(detector) - single_detector_prob_closed(tau, eta)).abs();
            assert!(dev <= state.tail_mass() + 1e-9, "detector {detector}: {dev:.3e}");
        }
    }

    #[test]
    fn distribution_sums_to_one_within_tail() {
        let tau = 1.3;
        let n_max = select_n_max(tau, default_tail_tol(tau)).unwrap();
        let state = build_pdc_state(tau, n_max);
        let dist = click_distribution(&state, &Efficiencies::uniform(0.019).unwrap());
        assert!((dist.total() - 1.0).abs() <= dist.tail_mass + 1e-10);
    }

    #[test]
    fn subspace_outcomes_are_uniform_in_unbiased_bases() {
        // cross-basis analysis wipes out the correlation: every outcome 1/4
        let s = subspace_probs_closed(
            1.0,
            &Efficiencies::uniform(0.09).unwrap(),
            Basis::Pm,
            Basis::Rl,
        )
        .unwrap();
        for p in s.normalized() {
            assert_relative_eq!(p, 0.25, epsilon = 1e-12);
        }
        let s = subspace_probs_closed(
            0.5,
            &Efficiencies::uniform(0.1).unwrap(),
            Basis::Hv,
            Basis::Pm,
        )
        .unwrap();
        for p in s.normalized() {
            assert_relative_eq!(p, 0.25, epsilon = 1e-12);
        }
        assert_relative_eq!(s.p11, 8.26149806e-03, max_relative = 1e-8);
    }

    #[test]
    fn subspace_is_empty_at_zero_gain() {
        let etas = Efficiencies::uniform(0.1).unwrap();
        assert!(matches!(
            subspace_probs_closed(0.0, &etas, Basis::Hv, Basis::Hv),
            Err(Error::EmptySubspace)
        ));
    }

    #[test]
    fn coincidence_totals_are_basis_independent() {
        let tau = 0.8;
        let n_max = select_n_max(tau, 1e-9).unwrap();
        let state = build_pdc_state(tau, n_max);
        let etas = Efficiencies::uniform(0.13).unwrap();
        let reference = subspace_probs(&state, &etas, Basis::Hv, Basis::Hv).unwrap();
        for basis in [Basis::Pm, Basis::Rl] {
            let probs = subspace_probs(&state, &etas, basis, basis).unwrap();
            assert_relative_eq!(probs.p11, reference.p11, epsilon = 1e-10);
        }
        // singles marginals do not care about either basis choice
        let base = click_distribution(&state, &etas);
        for (ba, bb) in [(Basis::Pm, Basis::Rl), (Basis::Rl, Basis::Hv)] {
            let rot =
                click_distribution_rotated(&state, &etas, &ba.rotation(), &bb.rotation());
            for d in 0..4 {
                assert_relative_eq!(
                    rot.fire_marginal(d),
                    base.fire_marginal(d),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn subspace_ratio_matches_frozen_values() {
        let cases = [
            (1.3, 0.02, 0.073669802),
            (2.3, 0.02, 0.378555512),
            (0.5, 0.02, 0.009047267),
            (1.3, 0.5, 0.566092947),
        ];
        for (tau, eta, expect) in cases {
            let r = subspace_ratio_closed(tau, &Efficiencies::uniform(eta).unwrap()).unwrap();
            assert!(
                (r - expect).abs() < 5e-9,
                "tau = {tau}, eta = {eta}: got {r}, expected {expect}"
            );
        }
        // block route agrees with the closed route
        let n_max = select_n_max(1.3, default_tail_tol(1.3)).unwrap();
        let state = build_pdc_state(1.3, n_max);
        let block = subspace_ratio(&state, &Efficiencies::uniform(0.02).unwrap()).unwrap();
        assert!((block - 0.073669802).abs() < 1e-7);
    }

    #[test]
    fn subspace_ratio_grows_with_efficiency_and_gain() {
        let r = |tau: f64, eta: f64| {
            subspace_ratio_closed(tau, &Efficiencies::uniform(eta).unwrap()).unwrap()
        };
        assert!(r(1.3, 0.019) < r(1.3, 0.02));
        assert!(r(1.3, 0.02) < r(1.3, 0.5));
        assert!(r(0.5, 0.02) < r(1.3, 0.02));
        assert!(r(1.3, 0.02) < r(2.3, 0.02));
    }

    #[test]
    fn ansatz_visibility_matches_frozen_values() {
        let cases = [
            (0.01, 0.999751630054),
            (0.25, 0.865097292622),
            (0.5, 0.613583580688),
            (1.0, 0.285827131009),
            (1.5, 0.169806238091),
            (2.0, 0.135476241977),
        ];
        for (tau, expect) in cases {
            assert_relative_eq!(ansatz_visibility(tau, 0.09), expect, epsilon = 1e-11);
        }
    }

    #[test]
    fn entangled_visibility_matches_frozen_values() {
        // same-basis visibility of the full state, closed route
        let vis = |tau: f64| {
            let s = subspace_probs_closed(
                tau,
                &Efficiencies::uniform(0.09).unwrap(),
                Basis::Hv,
                Basis::Hv,
            )
            .unwrap();
            s.p_hv + s.p_vh - s.p_hh - s.p_vv
        };
        assert_relative_eq!(vis(1.0), 0.562958604915, epsilon = 1e-11);
        assert_relative_eq!(vis(2.0), 0.679361243431, epsilon = 1e-11);
        assert_relative_eq!(vis(0.01), 0.999834421152, epsilon = 1e-11);
    }

    #[test]
    fn inclusion_exclusion_aggregates_back_to_silence() {
        // summing the patterns that keep S dark must recover q[S]
        let q = silent_expectations_closed(
            0.9,
            &mixed_etas(),
            &Basis::Pm.rotation(),
            &Basis::Rl.rotation(),
        );
        let p = patterns_from_silent(&q);
        for (s, &qs) in q.iter().enumerate() {
            let total: f64 = (0..PATTERN_COUNT)
                .filter(|fired| fired & s == 0)
                .map(|fired| p[fired])
                .sum();
            assert_relative_eq!(total, qs, epsilon = 1e-12);
        }
    }
}
