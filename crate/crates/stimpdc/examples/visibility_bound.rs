//! Two-photon visibility of the source versus the distinguishable-pair bound.
//!
//! The bound comes from an ansatz in which each pair is independently
//! (a_h, b_v) or (a_v, b_h) with equal probability: it keeps the pair-number
//! distribution and the anticorrelation but destroys the coherence between
//! pairs. The exact source stays well above it at every gain, which is the
//! operational signature that stimulated emission preserves entanglement.
//!
//! ```bash
//! cargo run --release --example visibility_bound
//! ```

use stimpdc::criteria::visibility;
use stimpdc::detection::{ansatz_visibility, subspace_probs_closed, Efficiencies};
use stimpdc::state::Basis;

fn main() -> stimpdc::Result<()> {
    let eta = 0.09;
    let etas = Efficiencies::uniform(eta)?;

    println!("visibility in the hv basis at eta = {eta}");
    println!("{:>5} {:>10} {:>14} {:>8}", "tau", "source", "distinguishable", "gap");
    for k in 0..=20 {
        let tau = 0.01 + 0.1 * k as f64;
        let ideal = visibility(&subspace_probs_closed(tau, &etas, Basis::Hv, Basis::Hv)?);
        let bound = ansatz_visibility(tau, eta);
        println!(
            "{:>5.2} {:>10.4} {:>14.4} {:>8.4}",
            tau,
            ideal,
            bound,
            ideal - bound
        );
    }

    println!("\nboth curves start at 1 for a lone pair; the ansatz falls markedly");
    println!("faster and never rejoins the exact model, whose visibility even");
    println!("recovers past tau ~ 1.2 while the incoherent bound keeps sinking.");
    Ok(())
}
