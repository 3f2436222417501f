//! Release gate for the whole pipeline. Each test checks one acceptance
//! criterion end to end at its stated tolerance and prints a single
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`, or automatically on
//! failure) before asserting.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use stimpdc::criteria::{evaluate_criteria, tomography, visibility, BasisGrid, DensityMatrix};
use stimpdc::detection::{
    ansatz_visibility, click_distribution, click_distribution_rotated, single_detector_prob_closed,
    subspace_probs_closed, subspace_ratio, subspace_ratio_closed, Efficiencies, SubspaceProbs,
};
use stimpdc::fitting::fit;
use stimpdc::montecarlo::{simulate_pulses, synthesize_dataset, PulseConfig};
use stimpdc::state::{
    build_pdc_state, default_tail_tol, mean_pairs, rotate, select_n_max, Basis,
};

fn check(name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] {name}: {detail}");
    assert!(pass, "acceptance criterion failed: {name}: {detail}");
}

fn source_state(tau: f64) -> stimpdc::state::PairBlockState {
    let n_max = select_n_max(tau, default_tail_tol(tau)).unwrap();
    build_pdc_state(tau, n_max)
}

/// Closed-route nine-cell grid of the source at one gain and efficiency.
fn closed_grid(tau: f64, etas: &Efficiencies) -> BasisGrid {
    let cells: Vec<SubspaceProbs> = Basis::ALL
        .iter()
        .flat_map(|&a| {
            Basis::ALL
                .iter()
                .map(move |&b| subspace_probs_closed(tau, etas, a, b).unwrap())
        })
        .collect();
    BasisGrid::from_probs(&cells).unwrap()
}

#[test]
fn singles_closed_form_matches_block_route() {
    let start = std::time::Instant::now();
    let taus = [0.2, 0.5, 1.0, 1.3, 1.85];
    let eta_grid = [0.019, 0.09, 0.5, 1.0];
    let mut worst_margin = f64::MIN;
    for &tau in &taus {
        let state = source_state(tau);
        let bound = state.tail_mass() + 1e-9;
        for &eta in &eta_grid {
            let etas = Efficiencies::uniform(eta).unwrap();
            let dist = click_distribution(&state, &etas);
            let closed = single_detector_prob_closed(tau, eta);
            for d in 0..4 {
                let delta = (dist.fire_marginal(d) - closed).abs();
                worst_margin = worst_margin.max(delta - bound);
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        "singles closed form vs block route",
        worst_margin <= 0.0 && elapsed.as_secs() < 60,
        format!(
            "worst |delta| - (tail + 1e-9) = {worst_margin:.3e} over 5 gains x 4 efficiencies in {:.2?}",
            elapsed
        ),
    );
}

#[test]
fn mean_pair_number_anchors() {
    let low = mean_pairs(1.3);
    let high = mean_pairs(2.3);
    check(
        "mean pair number anchors",
        (low - 5.77).abs() <= 0.01 && (high - 48.8).abs() <= 0.1,
        format!("mean_pairs(1.3) = {low:.4} (want 5.77 +- 0.01), mean_pairs(2.3) = {high:.3} (want 48.8 +- 0.1)"),
    );
}

#[test]
fn multi_click_coincidence_ratio() {
    let etas = Efficiencies::uniform(0.02).unwrap();
    let closed = subspace_ratio_closed(1.3, &etas).unwrap();
    let block = subspace_ratio(&source_state(1.3), &etas).unwrap();
    check(
        "multi-click share of coincidences",
        (closed - 0.06).abs() <= 0.015 && (closed - block).abs() <= 1e-6,
        format!("ratio = {closed:.4} (want 0.06 +- 0.015), routes differ by {:.1e}", (closed - block).abs()),
    );
}

#[test]
fn low_gain_unit_efficiency_criteria_limits() {
    let etas = Efficiencies::uniform(1.0).unwrap();
    let grid = closed_grid(0.001, &etas);
    let crit = evaluate_criteria(&grid).unwrap();
    check(
        "criteria limits at vanishing gain and unit efficiency",
        crit.c1 <= 1e-4 && crit.c2 >= 3.0 - 1e-4,
        format!("C1 = {:.2e} (want <= 1e-4), C2 = {:.6} (want >= 3 - 1e-4)", crit.c1, crit.c2),
    );
}

#[test]
fn entanglement_criteria_hold_at_every_gain() {
    let etas = Efficiencies::uniform(0.02).unwrap();
    let mut detail = String::new();
    let mut pass = true;
    for &tau in &[0.1, 0.5, 1.0, 1.3, 1.85, 2.3] {
        let crit = evaluate_criteria(&closed_grid(tau, &etas)).unwrap();
        pass &= crit.c1 < 1.0 && crit.c2 > 1.0;
        detail.push_str(&format!("tau={tau}: C1={:.3} C2={:.3}; ", crit.c1, crit.c2));
        if tau <= 1.3 {
            let state = source_state(tau);
            let cells: Vec<SubspaceProbs> = Basis::ALL
                .iter()
                .flat_map(|&a| {
                    let state = &state;
                    Basis::ALL.iter().map(move |&b| {
                        stimpdc::detection::subspace_probs(state, &etas, a, b).unwrap()
                    })
                })
                .collect();
            let block = evaluate_criteria(&BasisGrid::from_probs(&cells).unwrap()).unwrap();
            pass &= (block.c1 - crit.c1).abs() <= 1e-6 && (block.c2 - crit.c2).abs() <= 1e-6;
        }
    }
    check("C1 < 1 and C2 > 1 across the gain range", pass, detail);
}

#[test]
fn fit_recovers_generating_parameters() {
    let start = std::time::Instant::now();
    let energies: Vec<f64> = (0..12)
        .map(|k| 0.02 * (1.0f64 / 0.02).powf(k as f64 / 11.0))
        .collect();
    let etas = Efficiencies::uniform(0.019).unwrap();
    let dataset = synthesize_dataset(2.30, &etas, &energies, 1_000_000, 11).unwrap();
    let result = fit(&dataset, None).unwrap();
    let elapsed = start.elapsed();
    let eta_hat = result.etas.as_array();
    let eta_ok = eta_hat.iter().all(|&e| (e - 0.019).abs() <= 0.002);
    check(
        "fit recovers the generating parameters",
        (result.tau_max - 2.30).abs() <= 0.05
            && eta_ok
            && result.converged
            && elapsed.as_secs() < 300,
        format!(
            "tau_max = {:.4} (want 2.30 +- 0.05), etas = {:?} (want 0.019 +- 0.002), converged = {}, {:.2?}",
            result.tau_max, eta_hat, result.converged, elapsed
        ),
    );
}

#[test]
fn monte_carlo_matches_exact_distribution() {
    let configs = [
        (0.2, Basis::Hv, Basis::Hv),
        (0.5, Basis::Hv, Basis::Pm),
        (0.8, Basis::Pm, Basis::Rl),
        (1.3, Basis::Rl, Basis::Rl),
        (2.3, Basis::Hv, Basis::Hv),
    ];
    let etas = Efficiencies::new(0.23, 0.19, 0.27, 0.21).unwrap();
    let n_pulses = 1_000_000u64;
    let mut worst_sigma = 0.0f64;
    let mut pass = true;
    for &(tau, a, b) in &configs {
        let state = source_state(tau);
        let exact = click_distribution_rotated(&state, &etas, &a.rotation(), &b.rotation());
        let counts =
            simulate_pulses(&PulseConfig::new(tau, etas, a, b, 7), n_pulses).unwrap();
        for mask in 0..16 {
            let p = exact.prob(mask);
            let sigma = (p * (1.0 - p) / n_pulses as f64).sqrt();
            let delta = (counts.frequency(mask) - p).abs();
            pass &= delta <= 4.0 * sigma + state.tail_mass() + 1e-12;
            if sigma > 0.0 {
                worst_sigma = worst_sigma.max(delta / sigma);
            }
        }
    }
    check(
        "Monte Carlo patterns within 4 sigma of the exact distribution",
        pass,
        format!("worst deviation = {worst_sigma:.2} sigma over 5 configurations x 16 patterns"),
    );
}

fn pauli(basis: Basis) -> Matrix2<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match basis {
        Basis::Hv => Matrix2::new(one, zero, zero, -one),
        Basis::Pm => Matrix2::new(zero, one, one, zero),
        Basis::Rl => Matrix2::new(zero, -i, i, zero),
    }
}

/// Ideal Born-rule grid of a two-qubit density matrix, for feeding the
/// tomography stage a known input.
fn born_grid(rho: &Matrix4<Complex64>) -> BasisGrid {
    let half = Complex64::new(0.5, 0.0);
    let projectors = |basis: Basis| {
        let s = pauli(basis);
        [
            (Matrix2::identity() + s) * half,
            (Matrix2::identity() - s) * half,
        ]
    };
    let cells: Vec<SubspaceProbs> = Basis::ALL
        .iter()
        .flat_map(|&a| {
            Basis::ALL.iter().map(move |&b| {
                let pa = projectors(a);
                let pb = projectors(b);
                let mut raw = [0.0; 4];
                for i in 0..2 {
                    for j in 0..2 {
                        raw[2 * i + j] = (pa[i].kronecker(&pb[j]) * rho).trace().re;
                    }
                }
                SubspaceProbs::from_raw(a, b, raw, 0.0).unwrap()
            })
        })
        .collect();
    BasisGrid::from_probs(&cells).unwrap()
}

#[test]
fn tomography_recovers_singlet_and_pipeline_structure() {
    let singlet = DensityMatrix::singlet();
    let recovered = tomography(&born_grid(singlet.matrix())).unwrap().rho;
    let mut entry_err = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            entry_err = entry_err.max((recovered.entry(i, j) - singlet.entry(i, j)).norm());
        }
    }

    let etas = Efficiencies::uniform(0.019).unwrap();
    let pipeline = tomography(&closed_grid(1.85, &etas)).unwrap().rho;
    let hh = pipeline.entry(0, 0).re;
    let vv = pipeline.entry(3, 3).re;
    check(
        "tomography reproduces the singlet and the high-gain structure",
        entry_err <= 1e-10 && hh > 0.05 && vv > 0.05 && pipeline.max_imag() < 1e-6,
        format!(
            "singlet entry error = {entry_err:.1e} (want <= 1e-10); pipeline rho_hh,hh = {hh:.3}, rho_vv,vv = {vv:.3} (want > 0.05), max |Im| = {:.1e}",
            pipeline.max_imag()
        ),
    );
}

#[test]
fn distinguishable_pair_bound_stays_below_ideal_visibility() {
    let etas = Efficiencies::uniform(0.09).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for &tau in &[0.25, 0.5, 1.0, 1.5, 2.0] {
        let ideal = visibility(&subspace_probs_closed(tau, &etas, Basis::Hv, Basis::Hv).unwrap());
        let bound = ansatz_visibility(tau, 0.09);
        pass &= bound < ideal;
        detail.push_str(&format!("tau={tau}: {bound:.3} < {ideal:.3}; "));
    }
    let ideal0 = visibility(&subspace_probs_closed(0.01, &etas, Basis::Hv, Basis::Hv).unwrap());
    let bound0 = ansatz_visibility(0.01, 0.09);
    pass &= (ideal0 - 1.0).abs() <= 1e-3 && (bound0 - 1.0).abs() <= 1e-3;
    detail.push_str(&format!("tau=0.01: both = 1 within 1e-3 ({ideal0:.5}, {bound0:.5})"));
    check("distinguishable-pair visibility bound", pass, detail);
}

#[test]
fn rotation_invariance_and_criterion_sign_consistency() {
    let etas = Efficiencies::uniform(0.02).unwrap();
    let mut pass = true;

    let mut vis_spread = 0.0f64;
    for &tau in &[0.3, 0.9, 1.5, 2.3] {
        let grid = closed_grid(tau, &etas);
        let v = grid.visibilities().unwrap();
        let v_hv = v.get(Basis::Hv, Basis::Hv);
        for &b in &[Basis::Pm, Basis::Rl] {
            vis_spread = vis_spread.max((v.get(b, b) - v_hv).abs());
        }
    }
    pass &= vis_spread <= 1e-9;

    let state = source_state(0.8);
    let rotated = rotate(
        &rotate(&state, &Basis::Pm.rotation(), &Basis::Rl.rotation()),
        &Basis::Rl.rotation(),
        &Basis::Pm.rotation(),
    );
    let norm_drift = (rotated.total_norm_sq() - state.total_norm_sq()).abs();
    pass &= norm_drift <= 1e-10;

    let mut sign_ok = true;
    for k in 0..20 {
        let tau = 0.05 + (2.3 - 0.05) * k as f64 / 19.0;
        let grid = closed_grid(tau, &etas);
        let crit = evaluate_criteria(&grid).unwrap();
        let rho = tomography(&grid).unwrap().rho;
        let cross = rho.entry(0, 3).norm().max(rho.entry(1, 0).norm());
        if cross < 1e-6 {
            sign_ok &= (crit.c1 < 1.0) == (crit.min_pt_eigenvalue < -1e-10);
        }
    }
    pass &= sign_ok;

    check(
        "rotation invariance and criterion sign consistency",
        pass,
        format!(
            "same-basis visibility spread = {vis_spread:.1e} (want <= 1e-9), norm drift under rotations = {norm_drift:.1e} (want <= 1e-10), C1/PT verdicts agree at 20 gains = {sign_ok}"
        ),
    );
}
