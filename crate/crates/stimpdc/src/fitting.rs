//! Estimation of the source gain and arm efficiencies from count files.
//!
//! The model has five parameters: the gain `tau_max` reached at the largest
//! pump energy in the dataset, and one efficiency per detector arm. Every
//! row of a dataset predicts `n_pulses` times a closed-form click
//! probability, so the objective needs no pair-number truncation and costs
//! microseconds per evaluation.
//!
//! The fit minimizes Poisson-weighted squared residuals
//! `(counts - n_pulses * p)^2 / max(counts, 1)`. Parameters are optimized in
//! an unconstrained chart (log gain, logit efficiencies), first with a
//! Nelder-Mead search to get near the basin, then with a Levenberg-Marquardt
//! polish on the whitened residuals. Standard errors and the condition
//! number come from the Jacobian at the optimum and assume pure Poisson
//! counting statistics.

use nalgebra::{DMatrix, DVector};

use crate::detection::{click_distribution_closed, single_detector_prob_closed, Efficiencies};
use crate::montecarlo::{CountDataset, CountRecord, PatternKey};
use crate::state::Basis;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// A point in parameter space, used as an initial guess.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitParams {
    pub tau_max: f64,
    pub etas: Efficiencies,
}

/// Outcome of a fit.
///
/// `converged` reports whether the optimizer met its step or gradient
/// tolerance; estimates are still returned when it did not, so callers can
/// inspect how far the search got.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitResult {
    pub tau_max: f64,
    pub etas: Efficiencies,
    pub tau_max_err: f64,
    pub eta_errs: [f64; 4],
    /// Final sum of Poisson-weighted squared residuals.
    pub residual: f64,
    pub n_points: usize,
    pub converged: bool,
    /// Eigenvalue ratio of the normal matrix; large values flag nearly
    /// degenerate parameter directions.
    pub condition_number: f64,
    pub n_evaluations: u64,
}

/// Expected per-pulse probability of one count-file row measured in the hv
/// basis on both sides.
pub fn predict_rate(
    tau_max: f64,
    etas: &Efficiencies,
    energy: f64,
    max_energy: f64,
    pattern: PatternKey,
) -> f64 {
    predict_rate_in_bases(tau_max, etas, energy, max_energy, Basis::Hv, Basis::Hv, pattern)
}

/// Expected per-pulse probability of one count-file row.
///
/// The gain scales with pump amplitude, `tau = tau_max sqrt(E / E_max)`.
/// Single-detector marginals are analysis-basis independent, so they use the
/// one-arm closed form directly.
pub fn predict_rate_in_bases(
    tau_max: f64,
    etas: &Efficiencies,
    energy: f64,
    max_energy: f64,
    basis_a: Basis,
    basis_b: Basis,
    pattern: PatternKey,
) -> f64 {
    let tau = tau_max * (energy / max_energy).sqrt();
    match pattern {
        PatternKey::Single(d) => single_detector_prob_closed(tau, etas.as_array()[d]),
        PatternKey::Mask(mask) => {
            click_distribution_closed(tau, etas, &basis_a.rotation(), &basis_b.rotation())
                .prob(mask)
        }
    }
}

const DIM: usize = 5;

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn theta_from_params(params: &FitParams) -> [f64; DIM] {
    let e = params.etas.as_array();
    [
        params.tau_max.max(1e-9).ln(),
        logit(e[0]),
        logit(e[1]),
        logit(e[2]),
        logit(e[3]),
    ]
}

fn params_from_theta(theta: &[f64; DIM]) -> FitParams {
    FitParams {
        tau_max: theta[0].exp(),
        etas: Efficiencies::new(
            expit(theta[1]),
            expit(theta[2]),
            expit(theta[3]),
            expit(theta[4]),
        )
        .expect("logistic map stays inside [0, 1]"),
    }
}

/// Rows regrouped so each distinct (energy, bases) combination computes its
/// click distribution once per objective evaluation.
struct Problem<'a> {
    rows: &'a [CountRecord],
    groups: Vec<(f64, Basis, Basis)>,
    row_group: Vec<usize>,
    max_energy: f64,
    evaluations: u64,
}

impl<'a> Problem<'a> {
    fn new(dataset: &'a CountDataset) -> Result<Self> {
        let rows = dataset.records.as_slice();
        if rows.is_empty() {
            return Err(Error::Unidentifiable {
                reason: "the dataset has no rows".into(),
            });
        }
        if rows.iter().all(|r| r.counts == 0) {
            return Err(Error::Unidentifiable {
                reason: "every row has zero counts".into(),
            });
        }
        let energies = dataset.energies();
        if energies.len() < 2 {
            return Err(Error::Unidentifiable {
                reason: "a single pump energy cannot separate gain from efficiency".into(),
            });
        }
        let max_energy = *energies.last().unwrap();
        let mut groups: Vec<(f64, Basis, Basis)> = Vec::new();
        let mut row_group = Vec::with_capacity(rows.len());
        for r in rows {
            let key = (r.pulse_energy, r.basis_a, r.basis_b);
            let idx = groups.iter().position(|&g| g == key).unwrap_or_else(|| {
                groups.push(key);
                groups.len() - 1
            });
            row_group.push(idx);
        }
        Ok(Self {
            rows,
            groups,
            row_group,
            max_energy,
            evaluations: 0,
        })
    }

    /// Whitened residuals `(counts - n_pulses p) / sqrt(max(counts, 1))`.
    fn residuals(&mut self, theta: &[f64; DIM], out: &mut Vec<f64>) {
        self.evaluations += 1;
        let params = params_from_theta(theta);
        let cache: Vec<([f64; 16], [f64; 4])> = self
            .groups
            .iter()
            .map(|&(energy, basis_a, basis_b)| {
                let tau = params.tau_max * (energy / self.max_energy).sqrt();
                let dist = click_distribution_closed(
                    tau,
                    &params.etas,
                    &basis_a.rotation(),
                    &basis_b.rotation(),
                );
                let mut patterns = [0.0; 16];
                for (mask, p) in patterns.iter_mut().enumerate() {
                    *p = dist.prob(mask);
                }
                let e = params.etas.as_array();
                let singles =
                    std::array::from_fn(|d| single_detector_prob_closed(tau, e[d]));
                (patterns, singles)
            })
            .collect();
        out.clear();
        out.reserve(self.rows.len());
        for (row, &g) in self.rows.iter().zip(&self.row_group) {
            let p = match row.pattern {
                PatternKey::Single(d) => cache[g].1[d],
                PatternKey::Mask(mask) => cache[g].0[mask],
            };
            let expected = row.n_pulses as f64 * p;
            let weight = (row.counts.max(1) as f64).sqrt();
            out.push((row.counts as f64 - expected) / weight);
        }
    }

    fn chi2(&mut self, theta: &[f64; DIM]) -> f64 {
        let mut r = Vec::new();
        self.residuals(theta, &mut r);
        r.iter().map(|x| x * x).sum()
    }

    /// Central-difference Jacobian of the whitened residuals.
    fn jacobian(&mut self, theta: &[f64; DIM]) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut j = DMatrix::zeros(m, DIM);
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for col in 0..DIM {
            let h = 1e-6 * (1.0 + theta[col].abs());
            let mut t = *theta;
            t[col] = theta[col] + h;
            self.residuals(&t, &mut plus);
            t[col] = theta[col] - h;
            self.residuals(&t, &mut minus);
            for row in 0..m {
                j[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
            }
        }
        j
    }
}

/// Marginal click frequency of each detector at the largest pump energy,
/// from singles rows when present and pattern rows otherwise.
fn observed_singles(problem: &Problem) -> [f64; 4] {
    let at_max = |r: &&CountRecord| r.pulse_energy == problem.max_energy;
    let mut freq = [f64::NAN; 4];
    for (d, slot) in freq.iter_mut().enumerate() {
        let mut counts = 0u64;
        let mut pulses = 0u64;
        for r in problem.rows.iter().filter(at_max) {
            if r.pattern == PatternKey::Single(d) {
                counts += r.counts;
                pulses += r.n_pulses;
            }
        }
        if pulses == 0 {
            let bit = 3 - d;
            for r in problem.rows.iter().filter(at_max) {
                if let PatternKey::Mask(mask) = r.pattern {
                    if mask >> bit & 1 == 1 {
                        counts += r.counts;
                    }
                    if mask == 0 {
                        pulses += r.n_pulses;
                    }
                }
            }
        }
        if pulses > 0 {
            *slot = counts as f64 / pulses as f64;
        }
    }
    let fallback = freq
        .iter()
        .copied()
        .filter(|f| f.is_finite())
        .fold(0.0, f64::max)
        .max(1e-4);
    for f in &mut freq {
        if !f.is_finite() {
            *f = fallback;
        }
    }
    freq
}

/// Scans a geometric gain grid, reading off the efficiency each arm's
/// singles rate would imply, and keeps the combination with the smallest
/// objective.
fn initial_guess(problem: &mut Problem) -> [f64; DIM] {
    let singles = observed_singles(problem);
    let mut best = (f64::INFINITY, [0.0; DIM]);
    let n_grid = 25;
    for i in 0..n_grid {
        let tau_max = 0.15 * (4.0f64 / 0.15).powf(i as f64 / (n_grid - 1) as f64);
        let x = tau_max.tanh().powi(2);
        // invert the singles law p = eta x / (1 - (1 - eta) x) for eta
        let eta = |p: f64| (p * (1.0 - x) / (x * (1.0 - p))).clamp(1e-4, 0.999);
        let theta = [
            tau_max.ln(),
            logit(eta(singles[0])),
            logit(eta(singles[1])),
            logit(eta(singles[2])),
            logit(eta(singles[3])),
        ];
        let f = problem.chi2(&theta);
        if f < best.0 {
            best = (f, theta);
        }
    }
    best.1
}

/// Nelder-Mead with the standard reflection, expansion, contraction, and
/// shrink coefficients (1, 2, 1/2, 1/2).
fn nelder_mead(
    problem: &mut Problem,
    start: [f64; DIM],
    max_iter: usize,
) -> ([f64; DIM], f64) {
    let mut simplex: Vec<([f64; DIM], f64)> = Vec::with_capacity(DIM + 1);
    let f0 = problem.chi2(&start);
    simplex.push((start, f0));
    for i in 0..DIM {
        let mut v = start;
        v[i] += 0.4;
        let f = problem.chi2(&v);
        simplex.push((v, f));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[DIM].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-13 * (1.0 + best.abs()) && diameter < 1e-9 {
            break;
        }
        let mut centroid = [0.0; DIM];
        for (v, _) in &simplex[..DIM] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / DIM as f64;
            }
        }
        let worst_vertex = simplex[DIM].0;
        let along = move |t: f64| {
            let mut v = [0.0; DIM];
            for i in 0..DIM {
                v[i] = centroid[i] + t * (worst_vertex[i] - centroid[i]);
            }
            v
        };
        let reflected = along(-1.0);
        let fr = problem.chi2(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = problem.chi2(&expanded);
            simplex[DIM] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (reflected, fr);
            continue;
        }
        let contracted = if fr < simplex[DIM].1 {
            along(-0.5)
        } else {
            along(0.5)
        };
        let fc = problem.chi2(&contracted);
        if fc < simplex[DIM].1.min(fr) {
            simplex[DIM] = (contracted, fc);
            continue;
        }
        for i in 1..=DIM {
            let mut v = simplex[0].0;
            for (vk, &sk) in v.iter_mut().zip(&simplex[i].0) {
                *vk += 0.5 * (sk - *vk);
            }
            let f = problem.chi2(&v);
            simplex[i] = (v, f);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex[0]
}

/// Levenberg-Marquardt polish. Returns the refined point, its objective,
/// and whether a step or gradient tolerance was met.
fn levenberg_marquardt(
    problem: &mut Problem,
    start: [f64; DIM],
    max_iter: usize,
) -> ([f64; DIM], f64, bool) {
    let mut theta = start;
    let mut chi2 = problem.chi2(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut residual = Vec::new();
    for _ in 0..max_iter {
        problem.residuals(&theta, &mut residual);
        let j = problem.jacobian(&theta);
        let r = DVector::from_column_slice(&residual);
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() <= 1e-10 * (1.0 + chi2) {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..10 {
            let mut damped = a.clone();
            for i in 0..DIM {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut candidate = theta;
            for i in 0..DIM {
                candidate[i] += step[i];
            }
            let trial = problem.chi2(&candidate);
            if trial.is_finite() && trial <= chi2 {
                let step_small = step.amax() <= 1e-12 * (1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                let gain_small = chi2 - trial <= 1e-14 * (1.0 + chi2);
                theta = candidate;
                chi2 = trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_small || gain_small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if converged || !accepted {
            if !accepted {
                // no downhill step exists at any damping: treat as stationary
                converged = true;
            }
            break;
        }
    }
    (theta, chi2, converged)
}

/// Fits gain and efficiencies to a count dataset.
///
/// Needs at least two distinct pump energies; with one, gain and efficiency
/// only enter through their product at leading order and the fit is refused
/// as unidentifiable. `initial` seeds the search; otherwise a grid heuristic
/// based on the observed singles rates picks the start.
pub fn fit(dataset: &CountDataset, initial: Option<FitParams>) -> Result<FitResult> {
    let mut problem = Problem::new(dataset)?;
    let start = match &initial {
        Some(p) => theta_from_params(p),
        None => initial_guess(&mut problem),
    };
    let (coarse, _) = nelder_mead(&mut problem, start, 2000);
    let (theta, chi2, converged) = levenberg_marquardt(&mut problem, coarse, 200);

    let j = problem.jacobian(&theta);
    let a = j.transpose() * &j;
    let eigen = a.clone().symmetric_eigen();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &e in eigen.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let sigmas: [f64; DIM] = match a.try_inverse() {
        Some(cov) => std::array::from_fn(|i| cov[(i, i)].max(0.0).sqrt()),
        None => [f64::NAN; DIM],
    };

    let params = params_from_theta(&theta);
    let e = params.etas.as_array();
    Ok(FitResult {
        tau_max: params.tau_max,
        etas: params.etas,
        tau_max_err: params.tau_max * sigmas[0],
        eta_errs: std::array::from_fn(|i| e[i] * (1.0 - e[i]) * sigmas[i + 1]),
        residual: chi2,
        n_points: problem.rows.len(),
        converged,
        condition_number,
        n_evaluations: problem.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::synthesize_dataset_in_bases;

    fn noiseless_dataset(
        params: &FitParams,
        energies: &[f64],
        n_pulses: u64,
        bases: (Basis, Basis),
    ) -> CountDataset {
        let max_energy = energies.iter().cloned().fold(f64::NAN, f64::max);
        let mut records = Vec::new();
        for &energy in energies {
            let mut push = |pattern: PatternKey| {
                let p = predict_rate_in_bases(
                    params.tau_max,
                    &params.etas,
                    energy,
                    max_energy,
                    bases.0,
                    bases.1,
                    pattern,
                );
                records.push(CountRecord {
                    pulse_energy: energy,
                    basis_a: bases.0,
                    basis_b: bases.1,
                    pattern,
                    counts: (n_pulses as f64 * p).round() as u64,
                    n_pulses,
                });
            };
            for d in 0..4 {
                push(PatternKey::Single(d));
            }
            for mask in 0..16 {
                push(PatternKey::Mask(mask));
            }
        }
        CountDataset::new(records).unwrap()
    }

    #[test]
    fn noiseless_data_recovers_parameters() {
        let truth = FitParams {
            tau_max: 1.7,
            etas: Efficiencies::new(0.23, 0.19, 0.27, 0.21).unwrap(),
        };
        let data = noiseless_dataset(&truth, &[0.2, 0.5, 1.0], 1_000_000_000_000, (Basis::Hv, Basis::Hv));
        let result = fit(&data, None).unwrap();
        assert!(result.converged);
        assert!(
            (result.tau_max - truth.tau_max).abs() / truth.tau_max < 1e-6,
            "tau_max {} vs {}",
            result.tau_max,
            truth.tau_max
        );
        let (got, want) = (result.etas.as_array(), truth.etas.as_array());
        for d in 0..4 {
            assert!(
                (got[d] - want[d]).abs() / want[d] < 1e-6,
                "eta[{d}] {} vs {}",
                got[d],
                want[d]
            );
        }
        assert!(result.condition_number.is_finite());
        assert!(result.tau_max_err >= 0.0);
    }

    #[test]
    fn refitting_own_predictions_is_a_fixed_point() {
        let etas = Efficiencies::uniform(0.1).unwrap();
        let noisy = synthesize_dataset_in_bases(
            1.2,
            &etas,
            &[0.3, 0.6, 1.0],
            50_000,
            3,
            &[(Basis::Hv, Basis::Hv)],
        )
        .unwrap();
        let first = fit(&noisy, None).unwrap();
        assert!(first.converged);
        let repro = FitParams {
            tau_max: first.tau_max,
            etas: first.etas,
        };
        let clean = noiseless_dataset(&repro, &[0.3, 0.6, 1.0], 100_000_000_000_000, (Basis::Hv, Basis::Hv));
        let second = fit(&clean, None).unwrap();
        assert!(second.converged);
        assert!(
            (second.tau_max - first.tau_max).abs() / first.tau_max < 1e-8,
            "{} vs {}",
            second.tau_max,
            first.tau_max
        );
        for (a, b) in second.etas.as_array().iter().zip(first.etas.as_array()) {
            assert!((a - b).abs() / b < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn same_basis_datasets_agree_on_parameters() {
        let truth_eta = 0.12;
        let truth_tau = 1.1;
        let etas = Efficiencies::uniform(truth_eta).unwrap();
        let mut results = Vec::new();
        for (seed, basis) in [(7, Basis::Hv), (8, Basis::Pm), (9, Basis::Rl)] {
            let data = synthesize_dataset_in_bases(
                truth_tau,
                &etas,
                &[0.3, 0.65, 1.0],
                100_000,
                seed,
                &[(basis, basis)],
            )
            .unwrap();
            let result = fit(&data, None).unwrap();
            assert!(result.converged, "{basis:?} fit did not converge");
            assert!(
                (result.tau_max - truth_tau).abs() < 0.06,
                "{basis:?}: tau {} vs {truth_tau}",
                result.tau_max
            );
            for eta in result.etas.as_array() {
                assert!(
                    (eta - truth_eta).abs() < 0.01,
                    "{basis:?}: eta {eta} vs {truth_eta}"
                );
            }
            results.push(result.tau_max);
        }
        for pair in results.windows(2) {
            assert!((pair[0] - pair[1]).abs() < 0.08);
        }
    }

    #[test]
    fn single_energy_is_rejected_as_unidentifiable() {
        let truth = FitParams {
            tau_max: 0.9,
            etas: Efficiencies::uniform(0.2).unwrap(),
        };
        let data = noiseless_dataset(&truth, &[1.0], 1_000_000, (Basis::Hv, Basis::Hv));
        match fit(&data, None) {
            Err(Error::Unidentifiable { .. }) => {}
            other => panic!("expected unidentifiable, got {other:?}"),
        }
    }

    #[test]
    fn prediction_matches_singles_law() {
        let etas = Efficiencies::new(0.3, 0.2, 0.25, 0.15).unwrap();
        for (d, eta) in etas.as_array().into_iter().enumerate() {
            let p = predict_rate(1.4, &etas, 0.5, 1.0, PatternKey::Single(d));
            let tau = 1.4 * 0.5f64.sqrt();
            assert!((p - single_detector_prob_closed(tau, eta)).abs() < 1e-15);
        }
    }

    #[test]
    fn mask_predictions_follow_the_click_distribution() {
        let etas = Efficiencies::uniform(0.18).unwrap();
        let dist = click_distribution_closed(
            0.9,
            &etas,
            &Basis::Pm.rotation(),
            &Basis::Pm.rotation(),
        );
        for mask in 0..16 {
            let p = predict_rate_in_bases(
                0.9,
                &etas,
                1.0,
                1.0,
                Basis::Pm,
                Basis::Pm,
                PatternKey::Mask(mask),
            );
            assert!((p - dist.prob(mask)).abs() < 1e-15);
        }
    }
}
