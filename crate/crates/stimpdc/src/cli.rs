//! Command-line front end.
//!
//! Five subcommands cover the pipeline: `sweep` tabulates closed-form
//! statistics over a gain grid, `simulate` synthesizes count files,
//! `fit` estimates gain and efficiencies from a count file, `tomo`
//! reconstructs the one-pair density matrix from nine-basis counts, and
//! `oracle-check` cross-validates the closed forms against the exact block
//! computation.
//!
//! Every parameter can come from a JSON config file (`--config`); flags
//! override file values. Commands that write to a file also write a
//! `<output>.config.json` echo of the resolved parameters, which can itself
//! be passed back via `--config` to reproduce the run. Exit codes: 0 on
//! success, 2 for configuration problems, 3 for numeric infeasibility,
//! 4 when a fit does not converge.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::criteria::{evaluate_criteria, pt_spectrum, tomography, BasisGrid};
use crate::detection::{
    ansatz_visibility, click_distribution_closed, click_distribution_rotated,
    single_detector_prob_closed, subspace_probs_closed, subspace_ratio_closed, Efficiencies,
    SubspaceProbs, PATTERN_COUNT,
};
use crate::fitting::{fit, FitParams};
use crate::montecarlo::{synthesize_dataset_in_bases, CountDataset, PatternKey};
use crate::state::{
    build_pdc_state, default_tail_tol, mean_pairs, select_n_max, Basis,
};
use crate::{Error, Result};

/// Version stamp carried by every JSON output and config echo.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "stimpdc",
    version,
    about = "Simulator and analysis toolkit for multiphoton polarization entanglement from stimulated pair sources"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate closed-form statistics over a gain grid.
    Sweep(SweepArgs),
    /// Synthesize a count file from pulse-by-pulse Monte Carlo.
    Simulate(SimulateArgs),
    /// Estimate gain and arm efficiencies from a count file.
    Fit(FitArgs),
    /// Reconstruct the one-pair density matrix from nine-basis counts.
    Tomo(TomoArgs),
    /// Cross-validate closed forms against the exact block computation.
    OracleCheck(OracleArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction parameter values, comma separated
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    /// Interaction parameter reached at the largest pump energy
    #[arg(long)]
    tau_max: Option<f64>,
    /// Detection efficiency, one shared value or four comma-separated
    /// (order a_h, a_v, b_h, b_v)
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Analysis basis on side a: hv, pm, or rl
    #[arg(long)]
    basis_a: Option<Basis>,
    /// Analysis basis on side b: hv, pm, or rl
    #[arg(long)]
    basis_b: Option<Basis>,
    /// Pump pulse energies in microjoules, comma separated
    #[arg(long, value_delimiter = ',')]
    energies: Option<Vec<f64>>,
    /// Pulses to simulate per configuration
    #[arg(long = "pulses")]
    pulses: Option<u64>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Truncation tail tolerance for block computations
    #[arg(long)]
    tail_tol: Option<f64>,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Simulate all nine basis combinations instead of one
    #[arg(long)]
    all_bases: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Count file to fit
    dataset: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct TomoArgs {
    /// Count file with coincidence patterns for all nine basis pairs
    dataset: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!(
                "format must be csv or json, got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// A number or a list of numbers, accepted interchangeably in config files.
#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

/// One basis pair or a list of them, accepted interchangeably.
#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum ConfigBases {
    Pair([String; 2]),
    Pairs(Vec<[String; 2]>),
}

impl ConfigBases {
    fn parse(&self) -> Result<Vec<(Basis, Basis)>> {
        let parse_pair = |[a, b]: &[String; 2]| -> Result<(Basis, Basis)> {
            Ok((a.parse()?, b.parse()?))
        };
        match self {
            ConfigBases::Pair(p) => Ok(vec![parse_pair(p)?]),
            ConfigBases::Pairs(list) => {
                if list.is_empty() {
                    return Err(Error::Config("the bases list is empty".into()));
                }
                list.iter().map(parse_pair).collect()
            }
        }
    }
}

/// On-disk config schema. Every key is optional; flags take precedence.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    tau: Option<OneOrMany>,
    tau_max: Option<f64>,
    etas: Option<OneOrMany>,
    bases: Option<ConfigBases>,
    energies: Option<Vec<f64>>,
    n_pulses: Option<u64>,
    seed: Option<u64>,
    tail_tol: Option<f64>,
    output_path: Option<PathBuf>,
    format: Option<Format>,
}

/// Effective parameters after merging config file and flags. Fields a
/// command does not need simply stay unused; absent values fall back to
/// per-command defaults at the point of use.
#[derive(Debug)]
struct Resolved {
    taus: Option<Vec<f64>>,
    tau_max: Option<f64>,
    etas: Option<Efficiencies>,
    bases: Option<Vec<(Basis, Basis)>>,
    energies: Option<Vec<f64>>,
    n_pulses: u64,
    seed: u64,
    tail_tol: Option<f64>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

fn efficiencies_from_values(values: &[f64]) -> Result<Efficiencies> {
    match values {
        [eta] => Efficiencies::uniform(*eta),
        [ah, av, bh, bv] => Efficiencies::new(*ah, *av, *bh, *bv),
        other => Err(Error::Config(format!(
            "expected one or four efficiencies, got {}",
            other.len()
        ))),
    }
}

/// Reads a config file. Accepts both the bare parameter object and the
/// `{schema_version, command, workers, params}` echo written next to
/// outputs, so an echo reproduces its run when passed straight back.
fn load_config(path: &Path) -> Result<ConfigFile> {
    let value: serde_json::Value = serde_json::from_reader(std::fs::File::open(path)?)?;
    let params = match &value {
        serde_json::Value::Object(map) if map.contains_key("params") => value["params"].clone(),
        _ => value,
    };
    Ok(serde_json::from_value(params)?)
}

fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let file: ConfigFile = match &common.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };

    let taus = common
        .tau
        .clone()
        .or_else(|| file.tau.map(OneOrMany::into_vec));
    if let Some(taus) = &taus {
        if taus.is_empty() {
            return Err(Error::Config("the tau grid is empty".into()));
        }
        for &tau in taus {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::Config(format!(
                    "tau values must be finite and non-negative, got {tau}"
                )));
            }
        }
    }

    let tau_max = common.tau_max.or(file.tau_max);
    if let Some(t) = tau_max {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!(
                "tau_max must be positive and finite, got {t}"
            )));
        }
    }

    let eta_values = common
        .eta
        .clone()
        .or_else(|| file.etas.map(OneOrMany::into_vec));
    let etas = eta_values
        .as_deref()
        .map(efficiencies_from_values)
        .transpose()?;

    let bases = if common.basis_a.is_some() || common.basis_b.is_some() {
        Some(vec![(
            common.basis_a.unwrap_or(Basis::Hv),
            common.basis_b.unwrap_or(Basis::Hv),
        )])
    } else {
        file.bases.as_ref().map(ConfigBases::parse).transpose()?
    };

    let energies = common.energies.clone().or(file.energies);
    if let Some(energies) = &energies {
        if energies.is_empty() {
            return Err(Error::Config("the energy list is empty".into()));
        }
        for &e in energies {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Config(format!(
                    "pump energies must be positive and finite, got {e}"
                )));
            }
        }
    }

    let n_pulses = common.pulses.or(file.n_pulses).unwrap_or(100_000);
    if n_pulses == 0 {
        return Err(Error::Config("the pulse count must be positive".into()));
    }

    let tail_tol = common.tail_tol.or(file.tail_tol);
    if let Some(tol) = tail_tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::Config(format!(
                "tail_tol must lie in (0, 1), got {tol}"
            )));
        }
    }

    Ok(Resolved {
        taus,
        tau_max,
        etas,
        bases,
        energies,
        n_pulses,
        seed: common.seed.or(file.seed).unwrap_or(1),
        tail_tol,
        out: common.out.clone().or(file.output_path),
        format: common.format.or(file.format),
    })
}

impl Resolved {
    fn etas_or_default(&self) -> Efficiencies {
        self.etas
            .unwrap_or_else(|| Efficiencies::uniform(0.019).expect("default is in range"))
    }

    fn tau_max_or_default(&self) -> f64 {
        self.tau_max.unwrap_or(2.30)
    }

    fn taus_or(&self, default: impl FnOnce() -> Vec<f64>) -> Vec<f64> {
        self.taus.clone().unwrap_or_else(default)
    }

    fn bases_or_default(&self) -> Vec<(Basis, Basis)> {
        self.bases
            .clone()
            .unwrap_or_else(|| vec![(Basis::Hv, Basis::Hv)])
    }

    fn energies_or_default(&self) -> Vec<f64> {
        self.energies.clone().unwrap_or_else(|| {
            let n = 12;
            (0..n)
                .map(|i| 0.02 * (1.0f64 / 0.02).powf(i as f64 / (n - 1) as f64))
                .collect()
        })
    }

    /// Echo in the config-file schema, so the sidecar reproduces the run
    /// when passed back through `--config`.
    fn echo_params(&self, format: Format) -> serde_json::Value {
        let bases = self.bases.as_ref().map(|pairs| {
            let pairs: Vec<[String; 2]> = pairs
                .iter()
                .map(|(a, b)| [a.to_string(), b.to_string()])
                .collect();
            match pairs.as_slice() {
                [only] => serde_json::json!(only),
                many => serde_json::json!(many),
            }
        });
        serde_json::json!({
            "tau": self.taus,
            "tau_max": self.tau_max,
            "etas": self.etas.map(|e| e.as_array()),
            "bases": bases,
            "energies": self.energies,
            "n_pulses": self.n_pulses,
            "seed": self.seed,
            "tail_tol": self.tail_tol,
            "output_path": self.out,
            "format": format,
        })
    }
}

fn require_format(resolved: &Resolved, default: Format, supported: &[Format]) -> Result<Format> {
    let format = resolved.format.unwrap_or(default);
    if supported.contains(&format) {
        Ok(format)
    } else {
        Err(Error::Config(format!(
            "this command cannot write {format} output"
        )))
    }
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn write_echo(
    out: &Option<PathBuf>,
    command: &str,
    resolved: &Resolved,
    format: Format,
) -> Result<()> {
    let Some(path) = out else { return Ok(()) };
    let echo = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "workers": 1,
        "params": resolved.echo_params(format),
    });
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".config.json");
    std::fs::write(PathBuf::from(sidecar), serde_json::to_string_pretty(&echo)?)?;
    Ok(())
}

/// Column order of the sweep table.
pub const SWEEP_CSV_HEADER: [&str; 19] = [
    "tau",
    "mean_pairs",
    "p_single_eq4",
    "p11",
    "subspace_ratio",
    "V_hvhv",
    "V_hvpm",
    "V_hvrl",
    "V_pmhv",
    "V_pmpm",
    "V_pmrl",
    "V_rlhv",
    "V_rlpm",
    "V_rlrl",
    "C1",
    "C2",
    "min_pt_eig",
    "ansatz_visibility",
    "tail_mass",
];

#[derive(Serialize, Debug)]
struct SweepRow {
    tau: f64,
    mean_pairs: f64,
    p_single_eq4: f64,
    p11: f64,
    subspace_ratio: f64,
    #[serde(rename = "V_hvhv")]
    v_hvhv: f64,
    #[serde(rename = "V_hvpm")]
    v_hvpm: f64,
    #[serde(rename = "V_hvrl")]
    v_hvrl: f64,
    #[serde(rename = "V_pmhv")]
    v_pmhv: f64,
    #[serde(rename = "V_pmpm")]
    v_pmpm: f64,
    #[serde(rename = "V_pmrl")]
    v_pmrl: f64,
    #[serde(rename = "V_rlhv")]
    v_rlhv: f64,
    #[serde(rename = "V_rlpm")]
    v_rlpm: f64,
    #[serde(rename = "V_rlrl")]
    v_rlrl: f64,
    #[serde(rename = "C1")]
    c1: f64,
    #[serde(rename = "C2")]
    c2: f64,
    min_pt_eig: f64,
    ansatz_visibility: f64,
    tail_mass: f64,
}

/// One sweep row, entirely from the closed-form route, so it is exact and
/// reports zero truncation loss.
fn sweep_row(tau: f64, etas: &Efficiencies) -> Result<SweepRow> {
    let mut cells = Vec::with_capacity(9);
    for a in Basis::ALL {
        for b in Basis::ALL {
            cells.push(subspace_probs_closed(tau, etas, a, b)?);
        }
    }
    let grid = BasisGrid::from_probs(&cells)?;
    let vis = grid.visibilities()?;
    let criteria = evaluate_criteria(&grid)?;
    let eta_scalar = etas.mean();
    Ok(SweepRow {
        tau,
        mean_pairs: mean_pairs(tau),
        p_single_eq4: single_detector_prob_closed(tau, eta_scalar),
        p11: grid.get(Basis::Hv, Basis::Hv).p11,
        subspace_ratio: subspace_ratio_closed(tau, etas)?,
        v_hvhv: vis.get(Basis::Hv, Basis::Hv),
        v_hvpm: vis.get(Basis::Hv, Basis::Pm),
        v_hvrl: vis.get(Basis::Hv, Basis::Rl),
        v_pmhv: vis.get(Basis::Pm, Basis::Hv),
        v_pmpm: vis.get(Basis::Pm, Basis::Pm),
        v_pmrl: vis.get(Basis::Pm, Basis::Rl),
        v_rlhv: vis.get(Basis::Rl, Basis::Hv),
        v_rlpm: vis.get(Basis::Rl, Basis::Pm),
        v_rlrl: vis.get(Basis::Rl, Basis::Rl),
        c1: criteria.c1,
        c2: criteria.c2,
        min_pt_eig: criteria.min_pt_eigenvalue,
        ansatz_visibility: ansatz_visibility(tau, eta_scalar),
        tail_mass: 0.0,
    })
}

fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record(
            [
                r.tau,
                r.mean_pairs,
                r.p_single_eq4,
                r.p11,
                r.subspace_ratio,
                r.v_hvhv,
                r.v_hvpm,
                r.v_hvrl,
                r.v_pmhv,
                r.v_pmpm,
                r.v_pmrl,
                r.v_rlhv,
                r.v_rlpm,
                r.v_rlrl,
                r.c1,
                r.c2,
                r.min_pt_eig,
                r.ansatz_visibility,
                r.tail_mass,
            ]
            .map(|v| format!("{v}")),
        )?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| {
        Error::Config(format!("could not finish csv output: {e}"))
    })?)
    .expect("csv output is valid utf-8"))
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let format = require_format(&resolved, Format::Csv, &[Format::Csv, Format::Json])?;
    let etas = resolved.etas_or_default();
    let taus = resolved.taus_or(|| (1..=23).map(|i| i as f64 * 0.1).collect());
    let rows = taus
        .iter()
        .map(|&tau| {
            // Rows are closed form, but the accepted gain range must stay the
            // same as on the truncated route.
            select_n_max(tau, resolved.tail_tol.unwrap_or_else(|| default_tail_tol(tau)))?;
            sweep_row(tau, &etas)
        })
        .collect::<Result<Vec<_>>>()?;
    let content = match format {
        Format::Csv => sweep_csv(&rows)?,
        Format::Json => {
            let value = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "rows": rows,
            });
            serde_json::to_string_pretty(&value)? + "\n"
        }
    };
    write_output(&resolved.out, &content)?;
    write_echo(&resolved.out, "sweep", &resolved, format)?;
    Ok(0)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut resolved = resolve(&args.common)?;
    let format = require_format(&resolved, Format::Csv, &[Format::Csv])?;
    if args.all_bases {
        resolved.bases = Some(
            Basis::ALL
                .into_iter()
                .flat_map(|a| Basis::ALL.into_iter().map(move |b| (a, b)))
                .collect(),
        );
    }
    let bases = resolved.bases_or_default();
    let dataset = synthesize_dataset_in_bases(
        resolved.tau_max_or_default(),
        &resolved.etas_or_default(),
        &resolved.energies_or_default(),
        resolved.n_pulses,
        resolved.seed,
        &bases,
    )?;
    let mut buf = Vec::new();
    dataset.write_csv(&mut buf)?;
    write_output(
        &resolved.out,
        &String::from_utf8(buf).expect("csv output is valid utf-8"),
    )?;
    write_echo(&resolved.out, "simulate", &resolved, format)?;
    Ok(0)
}

fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let format = require_format(&resolved, Format::Json, &[Format::Json])?;
    let dataset = CountDataset::read_csv_path(&args.dataset)?;
    let initial = if resolved.tau_max.is_some() || resolved.etas.is_some() {
        Some(FitParams {
            tau_max: resolved.tau_max_or_default(),
            etas: resolved.etas_or_default(),
        })
    } else {
        None
    };
    let result = fit(&dataset, initial)?;
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "dataset": args.dataset,
        "fit": result,
    });
    write_output(&resolved.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_echo(&resolved.out, "fit", &resolved, format)?;
    if result.converged {
        Ok(0)
    } else {
        eprintln!("fit did not converge; estimates were still written");
        Ok(4)
    }
}

/// Coincidence masks of the four exactly-one-click-per-side patterns, in
/// (hh, hv, vh, vv) order.
const SUBSPACE_MASKS: [usize; 4] = [0b1010, 0b1001, 0b0110, 0b0101];

/// Assembles the nine-basis subspace probabilities from count rows taken at
/// one pump energy.
fn subspace_from_counts(dataset: &CountDataset, energy: f64) -> Result<Vec<SubspaceProbs>> {
    let mut cells = Vec::new();
    for a in Basis::ALL {
        for b in Basis::ALL {
            let mut raw = [None; 4];
            for r in &dataset.records {
                if r.pulse_energy != energy || r.basis_a != a || r.basis_b != b {
                    continue;
                }
                if let PatternKey::Mask(mask) = r.pattern {
                    if let Some(slot) = SUBSPACE_MASKS.iter().position(|&m| m == mask) {
                        raw[slot] = Some(r.counts as f64 / r.n_pulses as f64);
                    }
                }
            }
            match raw {
                [Some(hh), Some(hv), Some(vh), Some(vv)] => {
                    cells.push(SubspaceProbs::from_raw(a, b, [hh, hv, vh, vv], 0.0)?);
                }
                [None, None, None, None] => {}
                _ => {
                    return Err(Error::Config(format!(
                        "incomplete coincidence patterns for bases {a}/{b} at energy {energy}"
                    )))
                }
            }
        }
    }
    Ok(cells)
}

fn cmd_tomo(args: &TomoArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let format = require_format(&resolved, Format::Json, &[Format::Json])?;
    let dataset = CountDataset::read_csv_path(&args.dataset)?;
    let energies = dataset.energies();
    let Some(&energy) = energies.last() else {
        return Err(Error::Config("the count file has no rows".into()));
    };
    let cells = subspace_from_counts(&dataset, energy)?;
    let grid = BasisGrid::from_probs(&cells)?;
    let tomo = tomography(&grid)?;
    let criteria = evaluate_criteria(&grid)?;
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "dataset": args.dataset,
        "pulse_energy_uJ": energy,
        "subspace": cells,
        "rho_re": tomo.rho.re_array(),
        "rho_im": tomo.rho.im_array(),
        "pt_spectrum": pt_spectrum(&tomo.rho)?,
        "criteria": criteria,
        "warnings": tomo.warnings,
    });
    write_output(&resolved.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_echo(&resolved.out, "tomo", &resolved, format)?;
    Ok(0)
}

#[derive(Serialize, Debug)]
struct OracleRow {
    tau: f64,
    basis_a: Basis,
    basis_b: Basis,
    n_max: usize,
    tail_mass: f64,
    bound: f64,
    max_singles_discrepancy: f64,
    max_pattern_discrepancy: f64,
    pass: bool,
}

fn oracle_row(
    tau: f64,
    etas: &Efficiencies,
    tail_tol: Option<f64>,
    basis_a: Basis,
    basis_b: Basis,
) -> Result<OracleRow> {
    let tol = tail_tol.unwrap_or_else(|| default_tail_tol(tau));
    let n_max = select_n_max(tau, tol)?;
    let state = build_pdc_state(tau, n_max);
    let tail = state.tail_mass();
    let bound = tail + 1e-9;

    let u_a = basis_a.rotation();
    let u_b = basis_b.rotation();
    let block = click_distribution_rotated(&state, etas, &u_a, &u_b);
    let closed = click_distribution_closed(tau, etas, &u_a, &u_b);
    let mut max_pattern = 0.0f64;
    for mask in 0..PATTERN_COUNT {
        max_pattern = max_pattern.max((block.prob(mask) - closed.prob(mask)).abs());
    }
    let mut max_singles = 0.0f64;
    for (d, eta) in etas.as_array().into_iter().enumerate() {
        let exact = block.fire_marginal(d);
        max_singles = max_singles.max((exact - single_detector_prob_closed(tau, eta)).abs());
    }
    Ok(OracleRow {
        tau,
        basis_a,
        basis_b,
        n_max,
        tail_mass: tail,
        bound,
        max_singles_discrepancy: max_singles,
        max_pattern_discrepancy: max_pattern,
        pass: max_singles <= bound && max_pattern <= bound,
    })
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let format = require_format(&resolved, Format::Json, &[Format::Json])?;
    let etas = resolved.etas_or_default();
    let taus = resolved.taus_or(|| vec![0.2, 0.8, 1.3]);
    let pairs = resolved.bases_or_default();
    let mut rows = Vec::with_capacity(taus.len() * pairs.len());
    for &tau in &taus {
        for &(basis_a, basis_b) in &pairs {
            rows.push(oracle_row(tau, &etas, resolved.tail_tol, basis_a, basis_b)?);
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "rows": rows,
        "pass": all_pass,
    });
    write_output(&resolved.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_echo(&resolved.out, "oracle-check", &resolved, format)?;
    if all_pass {
        Ok(0)
    } else {
        let worst = rows
            .iter()
            .map(|r| {
                (r.max_singles_discrepancy.max(r.max_pattern_discrepancy) - r.bound)
                    .max(f64::MIN)
            })
            .fold(f64::MIN, f64::max);
        Err(Error::NumericCheck(format!(
            "closed forms disagree with the block computation by {worst:.3e} beyond the tail bound"
        )))
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Tomo(args) => cmd_tomo(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
    }
}

/// Parses arguments from the process environment, runs the selected
/// command, and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the CLI on an explicit argument list; the entry point for tests.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => match execute(cli) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => e.exit(),
    }
}
