//! Cross-validation of the two computation routes.
//!
//! Every observable in this crate can be computed two ways: from the
//! truncated block representation of the state, or from closed generating
//! functions that never truncate. The routes share no code beyond the basis
//! matrices, so their agreement within the truncation tail bound is a strong
//! end-to-end check. This is the library form of the `oracle-check`
//! subcommand.
//!
//! ```bash
//! cargo run --release --example oracle_check
//! ```

use stimpdc::detection::{
    click_distribution_closed, click_distribution_rotated, single_detector_prob_closed,
    Efficiencies,
};
use stimpdc::state::{build_pdc_state, default_tail_tol, select_n_max, Basis};

fn main() -> stimpdc::Result<()> {
    let etas = Efficiencies::new(0.13, 0.08, 0.21, 0.05)?;
    let pairs = [
        (Basis::Hv, Basis::Hv),
        (Basis::Hv, Basis::Pm),
        (Basis::Pm, Basis::Rl),
        (Basis::Rl, Basis::Rl),
    ];

    println!(
        "{:>5} {:>8} {:>6} {:>10} {:>13} {:>13} {:>6}",
        "tau", "bases", "n_max", "bound", "patterns", "singles", "ok"
    );

    let mut all_ok = true;
    for tau in [0.2, 0.8, 1.3] {
        let n_max = select_n_max(tau, default_tail_tol(tau))?;
        let state = build_pdc_state(tau, n_max);
        let bound = state.tail_mass() + 1e-9;

        for &(a, b) in &pairs {
            let block = click_distribution_rotated(&state, &etas, &a.rotation(), &b.rotation());
            let closed = click_distribution_closed(tau, &etas, &a.rotation(), &b.rotation());

            let mut worst_pattern = 0.0f64;
            for mask in 0..16 {
                worst_pattern = worst_pattern.max((block.prob(mask) - closed.prob(mask)).abs());
            }
            let mut worst_single = 0.0f64;
            for (d, &eta) in etas.as_array().iter().enumerate() {
                let law = single_detector_prob_closed(tau, eta);
                worst_single = worst_single.max((block.fire_marginal(d) - law).abs());
            }

            let ok = worst_pattern <= bound && worst_single <= bound;
            all_ok &= ok;
            println!(
                "{:>5} {:>4}/{:<3} {:>6} {:>10.1e} {:>13.2e} {:>13.2e} {:>6}",
                tau,
                a,
                b,
                n_max,
                bound,
                worst_pattern,
                worst_single,
                if ok { "yes" } else { "NO" },
            );
        }
    }

    println!(
        "\n{}",
        if all_ok {
            "all routes agree within the truncation bound"
        } else {
            "DISAGREEMENT FOUND: the routes have diverged"
        }
    );
    std::process::exit(if all_ok { 0 } else { 3 });
}
