//! Entanglement criteria of the lossy source across the gain range.
//!
//! Sweeps the interaction parameter at fixed detection efficiency and
//! evaluates both criteria on the exact model: C1 < 1 and C2 > 1 certify
//! entanglement, and the minimum eigenvalue of the partially transposed
//! density matrix gives the independent PPT verdict. Some entanglement
//! survives arbitrarily high gain even at 2% efficiency.
//!
//! ```bash
//! cargo run --release --example criteria_sweep
//! ```

use stimpdc::criteria::{evaluate_criteria, BasisGrid};
use stimpdc::detection::{subspace_probs_closed, Efficiencies};
use stimpdc::state::Basis;

fn main() -> stimpdc::Result<()> {
    let etas = Efficiencies::uniform(0.019)?;

    println!("eta = 0.019 on all four detectors");
    println!(
        "{:>5} {:>9} {:>9} {:>11} {:>9} {:>10}",
        "tau", "C1", "C2", "min PT eig", "V(hv)", "entangled"
    );

    for k in 1..=23 {
        let tau = 0.1 * k as f64;
        let mut cells = Vec::with_capacity(9);
        for a in Basis::ALL {
            for b in Basis::ALL {
                cells.push(subspace_probs_closed(tau, &etas, a, b)?);
            }
        }
        let grid = BasisGrid::from_probs(&cells)?;
        let crit = evaluate_criteria(&grid)?;
        let verdict = match (crit.entangled_by_c1, crit.entangled_by_c2, crit.entangled_by_ppt) {
            (true, true, true) => "all three",
            (false, false, false) => "none",
            _ => "mixed",
        };
        println!(
            "{:>5.1} {:>9.4} {:>9.4} {:>11.4} {:>9.4} {:>10}",
            tau,
            crit.c1,
            crit.c2,
            crit.min_pt_eigenvalue,
            grid.visibilities()?.get(Basis::Hv, Basis::Hv),
            verdict,
        );
    }

    println!("\nboth criteria certify entanglement at every gain; C1 worsens up to");
    println!("tau ~ 1.5 and then recovers as the visibility rises again deep in");
    println!("detector saturation.");
    Ok(())
}
