//! Pulse-by-pulse Monte Carlo sampling of the source and detectors.
//!
//! Sampling proceeds in the measurement basis: pair number first (the
//! squared block norms form its distribution), then an occupation within the
//! block (squared amplitudes), then one Bernoulli draw per threshold
//! detector. The per-detector draw uses the fact that a threshold detector
//! with `k` photons at efficiency `eta` fires with probability
//! `1 - (1-eta)^k` independently of everything else in the pulse, so no
//! photon-by-photon loss sampling is needed.
//!
//! The same machinery synthesizes count datasets over a pump-energy sweep
//! and simulates the beam-splitter fan-out configurations that isolate
//! emission of up to four pairs. A mixing weight can replace a fraction of
//! pulses with the distinguishable-pairs model to emulate partially
//! decohered sources.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::detection::{pattern_index, pattern_mask, Efficiencies, DETECTOR_LABELS, PATTERN_COUNT};
use crate::state::{
    build_pdc_state, default_tail_tol, pair_number_weight, select_n_max, tail_mass_beyond,
    visit_rotated_blocks, Basis, BlockView, PairBlockState,
};
use crate::{Error, Result};

/// Everything one simulated acquisition run needs.
#[derive(Clone, Debug)]
pub struct PulseConfig {
    pub tau: f64,
    pub etas: Efficiencies,
    pub basis_a: Basis,
    pub basis_b: Basis,
    /// Pulse repetition rate in Hz, used to convert counts to rates.
    pub rep_rate: f64,
    pub seed: u64,
    /// Fraction of pulses drawn from the distinguishable-pairs model
    /// instead of the entangled state.
    pub ansatz_weight: f64,
}

impl PulseConfig {
    pub fn new(tau: f64, etas: Efficiencies, basis_a: Basis, basis_b: Basis, seed: u64) -> Self {
        Self {
            tau,
            etas,
            basis_a,
            basis_b,
            rep_rate: 20_000.0,
            seed,
            ansatz_weight: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Config(format!(
                "gain must be non-negative, got {}",
                self.tau
            )));
        }
        if !(self.rep_rate.is_finite() && self.rep_rate > 0.0) {
            return Err(Error::Config("repetition rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ansatz_weight) {
            return Err(Error::Config(format!(
                "ansatz weight must lie in [0, 1], got {}",
                self.ansatz_weight
            )));
        }
        Ok(())
    }
}

/// Click-pattern tallies of one simulated run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClickCounts {
    pub patterns: [u64; PATTERN_COUNT],
    pub n_pulses: u64,
}

impl ClickCounts {
    /// Pulses in which one detector fired, regardless of the others.
    pub fn fire_count(&self, detector: usize) -> u64 {
        assert!(detector < 4, "detector index out of range");
        let bit = 3 - detector;
        self.patterns
            .iter()
            .enumerate()
            .filter(|(mask, _)| mask >> bit & 1 == 1)
            .map(|(_, c)| c)
            .sum()
    }

    /// Observed frequency of one exact pattern.
    pub fn frequency(&self, mask: usize) -> f64 {
        self.patterns[mask] as f64 / self.n_pulses as f64
    }
}

/// Cached inverse-CDF sampler for the pair number per pulse,
/// `P(n) = (n+1)(1-x)^2 x^n` with `x = tanh^2(tau)`.
///
/// The table is truncated by the usual tail policy; draws landing in the
/// truncated tail (probability below the tolerance) clamp to the last block.
#[derive(Clone, Debug)]
pub struct PairNumberSampler {
    cdf: Vec<f64>,
}

impl PairNumberSampler {
    pub fn new(tau: f64) -> Result<Self> {
        let n_max = select_n_max(tau, default_tail_tol(tau))?;
        let mut cdf = Vec::with_capacity(n_max + 1);
        let mut acc = 0.0;
        for n in 0..=n_max {
            acc += pair_number_weight(tau, n);
            cdf.push(acc);
        }
        Ok(Self { cdf })
    }

    pub fn n_max(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u).min(self.n_max())
    }
}

/// One-shot convenience draw of a pair number; loops should build a
/// [`PairNumberSampler`] once instead.
pub fn sample_pair_number(tau: f64, rng: &mut impl Rng) -> Result<usize> {
    Ok(PairNumberSampler::new(tau)?.sample(rng))
}

/// Per-block occupation distributions of a state in its measurement basis.
///
/// Block `n` stores the cumulative distribution over its occupations,
/// `(n+1)` entries for a diagonal block and `(n+1)^2` for a dense one,
/// normalized within the block. Built by streaming over rotated blocks, so
/// the full rotated state is never held in memory at once.
struct OccupationSampler {
    blocks: Vec<BlockCdf>,
}

enum BlockCdf {
    Diagonal(Vec<f64>),
    Dense(Vec<f64>),
}

impl OccupationSampler {
    fn new(state: &PairBlockState, basis_a: Basis, basis_b: Basis) -> Self {
        let mut blocks = Vec::with_capacity(state.n_max() + 1);
        visit_rotated_blocks(
            state,
            &basis_a.rotation(),
            &basis_b.rotation(),
            |_, _, view| {
                // the scale factor is common to the block and cancels in the
                // normalized within-block distribution
                let cdf = match view {
                    BlockView::Diagonal(d) => {
                        let mut acc = 0.0;
                        BlockCdf::Diagonal(
                            d.iter()
                                .map(|a| {
                                    acc += a.norm_sqr();
                                    acc
                                })
                                .collect(),
                        )
                    }
                    BlockView::Dense(m) => {
                        let mut acc = 0.0;
                        BlockCdf::Dense(
                            m.iter()
                                .map(|a| {
                                    acc += a.norm_sqr();
                                    acc
                                })
                                .collect(),
                        )
                    }
                };
                blocks.push(cdf);
            },
        );
        Self { blocks }
    }

    /// Draws `(m_a, m_b)` for pair number `n`.
    fn sample(&self, n: usize, rng: &mut impl Rng) -> (usize, usize) {
        match &self.blocks[n] {
            BlockCdf::Diagonal(cdf) => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let m = cdf.partition_point(|&c| c < u).min(n);
                (m, m)
            }
            BlockCdf::Dense(cdf) => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                // dense blocks are stored column major: column m_b, row m_a
                (idx % (n + 1), idx / (n + 1))
            }
        }
    }
}

fn survival_tables(etas: &Efficiencies, n_max: usize) -> [Vec<f64>; 4] {
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

/// Counts `ones` among `n` fair coin flips.
fn binomial_half(n: usize, rng: &mut impl Rng) -> usize {
    (0..n).filter(|_| rng.random::<bool>()).count()
}

/// Occupation (k_ah, k_av, k_bh, k_bv) of one distinguishable-pairs pulse.
///
/// Each of the `n` pairs is independently (a_h, b_v) or (a_v, b_h) polarized.
/// A side analyzed in the hv basis sees those counts directly; a side
/// analyzed in an unbiased basis splits every photon 50/50 on its own,
/// since a photon of definite h/v polarization carries no cross-basis
/// coherence in this model.
fn ansatz_occupation(n: usize, basis_a: Basis, basis_b: Basis, rng: &mut impl Rng) -> [usize; 4] {
    let n1 = binomial_half(n, rng);
    let n2 = n - n1;
    let (k_a0, k_a1) = if basis_a == Basis::Hv {
        (n1, n2)
    } else {
        let k = binomial_half(n, rng);
        (k, n - k)
    };
    let (k_b0, k_b1) = if basis_b == Basis::Hv {
        (n2, n1)
    } else {
        let k = binomial_half(n, rng);
        (k, n - k)
    };
    [k_a0, k_a1, k_b0, k_b1]
}

fn simulate_with_rng(
    config: &PulseConfig,
    n_pulses: u64,
    rng: &mut ChaCha12Rng,
) -> Result<ClickCounts> {
    config.validate()?;
    let pair_sampler = PairNumberSampler::new(config.tau)?;
    let n_max = pair_sampler.n_max();
    let state = build_pdc_state(config.tau, n_max);
    let occupations = OccupationSampler::new(&state, config.basis_a, config.basis_b);
    let survival = survival_tables(&config.etas, n_max);

    let mut patterns = [0u64; PATTERN_COUNT];
    for _ in 0..n_pulses {
        let ansatz = config.ansatz_weight > 0.0 && rng.random::<f64>() < config.ansatz_weight;
        let n = pair_sampler.sample(rng);
        let k = if ansatz {
            ansatz_occupation(n, config.basis_a, config.basis_b, rng)
        } else {
            let (m_a, m_b) = occupations.sample(n, rng);
            [n - m_a, m_a, m_b, n - m_b]
        };
        let mut mask = 0usize;
        for d in 0..4 {
            if k[d] > 0 && rng.random::<f64>() < 1.0 - survival[d][k[d]] {
                mask |= 1 << (3 - d);
            }
        }
        patterns[mask] += 1;
    }
    Ok(ClickCounts { patterns, n_pulses })
}

/// Simulates `n_pulses` pulses of one acquisition configuration.
/// Deterministic: the same config and pulse count always produce the same
/// tallies.
pub fn simulate_pulses(config: &PulseConfig, n_pulses: u64) -> Result<ClickCounts> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    simulate_with_rng(config, n_pulses, &mut rng)
}

/// What one count-file row refers to: the marginal of a single detector or
/// one exact click pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatternKey {
    /// Marginal counts of one detector by canonical index.
    Single(usize),
    /// Exact pattern by fired-detector mask.
    Mask(usize),
}

impl fmt::Display for PatternKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternKey::Single(d) => f.write_str(DETECTOR_LABELS[*d]),
            PatternKey::Mask(mask) => f.write_str(&pattern_mask(*mask)),
        }
    }
}

impl FromStr for PatternKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(d) = DETECTOR_LABELS.iter().position(|&l| l == s) {
            return Ok(PatternKey::Single(d));
        }
        pattern_index(s).map(PatternKey::Mask).map_err(|_| {
            Error::Config(format!(
                "pattern must be a detector label or a 4-bit mask, got '{s}'"
            ))
        })
    }
}

/// One row of a count file: how often `pattern` was observed among
/// `n_pulses` pulses at one pump energy and basis combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountRecord {
    pub pulse_energy: f64,
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub pattern: PatternKey,
    pub counts: u64,
    pub n_pulses: u64,
}

impl CountRecord {
    fn validate(&self) -> Result<()> {
        if self.counts > self.n_pulses {
            return Err(Error::Config(format!(
                "row with pattern {} has more counts ({}) than pulses ({})",
                self.pattern, self.counts, self.n_pulses
            )));
        }
        Ok(())
    }
}

/// Header of every count file, in exact column order.
pub const COUNT_CSV_HEADER: [&str; 6] = [
    "pulse_energy_uJ",
    "basis_a",
    "basis_b",
    "pattern",
    "counts",
    "n_pulses",
];

/// A set of count rows, the on-disk currency between simulation, fitting,
/// and tomography.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountDataset {
    pub records: Vec<CountRecord>,
}

impl CountDataset {
    pub fn new(records: Vec<CountRecord>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        Ok(Self { records })
    }

    /// Distinct pump energies in the dataset, ascending.
    pub fn energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = Vec::new();
        for r in &self.records {
            if !e.contains(&r.pulse_energy) {
                e.push(r.pulse_energy);
            }
        }
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(COUNT_CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                format!("{}", r.pulse_energy),
                r.basis_a.to_string(),
                r.basis_b.to_string(),
                r.pattern.to_string(),
                r.counts.to_string(),
                r.n_pulses.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        {
            let headers = r.headers()?;
            if headers != COUNT_CSV_HEADER.as_slice() {
                return Err(Error::Config(format!(
                    "unexpected count file header: {headers:?}"
                )));
            }
        }
        let mut records = Vec::new();
        for row in r.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or_default();
            let parse_u64 = |i: usize| {
                field(i)
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("bad integer '{}': {e}", field(i))))
            };
            records.push(CountRecord {
                pulse_energy: field(0)
                    .parse()
                    .map_err(|e| Error::Config(format!("bad energy '{}': {e}", field(0))))?,
                basis_a: field(1).parse()?,
                basis_b: field(2).parse()?,
                pattern: field(3).parse()?,
                counts: parse_u64(4)?,
                n_pulses: parse_u64(5)?,
            });
        }
        Self::new(records)
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Simulates a pump-energy sweep and collects the counts into a dataset.
///
/// The gain at each energy follows `tau = tau_max sqrt(E / E_max)` with
/// `E_max` the largest requested energy. Each energy and basis combination
/// gets its own random stream derived from `seed` and its position in the
/// request, so the rows for one combination do not depend on how many pulses
/// the others simulate. Every combination contributes four single-detector
/// marginal rows and all sixteen exact-pattern rows.
pub fn synthesize_dataset(
    tau_max: f64,
    etas: &Efficiencies,
    energies: &[f64],
    n_pulses: u64,
    seed: u64,
) -> Result<CountDataset> {
    synthesize_dataset_in_bases(tau_max, etas, energies, n_pulses, seed, &[(Basis::Hv, Basis::Hv)])
}

/// [`synthesize_dataset`] over an explicit list of basis combinations.
pub fn synthesize_dataset_in_bases(
    tau_max: f64,
    etas: &Efficiencies,
    energies: &[f64],
    n_pulses: u64,
    seed: u64,
    bases: &[(Basis, Basis)],
) -> Result<CountDataset> {
    if energies.is_empty() {
        return Err(Error::Config("at least one pump energy is needed".into()));
    }
    let max_energy = energies.iter().cloned().fold(f64::NAN, f64::max);
    if !(max_energy.is_finite() && max_energy > 0.0) {
        return Err(Error::Config("pump energies must be positive".into()));
    }
    let mut records = Vec::new();
    let mut stream = 0u64;
    for &energy in energies {
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::Config(format!(
                "pump energies must be positive, got {energy}"
            )));
        }
        for &(basis_a, basis_b) in bases {
            let tau = tau_max * (energy / max_energy).sqrt();
            let config = PulseConfig::new(tau, *etas, basis_a, basis_b, seed);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            stream += 1;
            let counts = simulate_with_rng(&config, n_pulses, &mut rng)?;
            for d in 0..4 {
                records.push(CountRecord {
                    pulse_energy: energy,
                    basis_a,
                    basis_b,
                    pattern: PatternKey::Single(d),
                    counts: counts.fire_count(d),
                    n_pulses,
                });
            }
            for mask in 0..PATTERN_COUNT {
                records.push(CountRecord {
                    pulse_energy: energy,
                    basis_a,
                    basis_b,
                    pattern: PatternKey::Mask(mask),
                    counts: counts.patterns[mask],
                    n_pulses,
                });
            }
        }
    }
    CountDataset::new(records)
}

/// Per-pulse probabilities of the five benchmark events that isolate one- to
/// four-pair emission in the hv basis.
///
/// The one- and two-pair coincidences use plain detectors; the three- and
/// four-pair events put a lossless 50/50 splitter on a_h (and on b_h for
/// four pairs) and demand clicks on both halves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiPairRates {
    /// a_h fires.
    pub single_ah: f64,
    /// a_h and b_v fire: one pair suffices.
    pub cc_one_pair: f64,
    /// a_h and b_h fire: needs at least two pairs.
    pub cc_two_pair: f64,
    /// both halves of split a_h and plain b_h fire: at least three pairs.
    pub triple: f64,
    /// both halves of split a_h and both halves of split b_h: four pairs.
    pub quad: f64,
}

/// How one benchmark event taps a mode: the whole detector or one half of a
/// 50/50 split.
#[derive(Clone, Copy, PartialEq)]
enum Tap {
    Full,
    HalfA,
    HalfB,
}

/// Silent-set expectation of the hv-basis source under per-mode survival
/// factors: the two polarization ladders are independent geometric series.
fn silent_expectation_hv(x: f64, f: [f64; 4]) -> f64 {
    (1.0 - x).powi(2) / ((1.0 - x * f[0] * f[3]) * (1.0 - x * f[1] * f[2]))
}

/// Probability that every listed tap fires, by inclusion-exclusion over the
/// subsets of taps forced silent.
fn taps_fire_probability(x: f64, eta: f64, taps: &[(usize, Tap)]) -> f64 {
    let mut total = 0.0;
    for subset in 0..(1usize << taps.len()) {
        let mut f = [1.0f64; 4];
        let mut halves = [0u8; 4];
        for (i, &(mode, tap)) in taps.iter().enumerate() {
            if subset >> i & 1 == 0 {
                continue;
            }
            match tap {
                Tap::Full => f[mode] *= 1.0 - eta,
                Tap::HalfA | Tap::HalfB => halves[mode] += 1,
            }
        }
        for (mode, &n_silent) in halves.iter().enumerate() {
            // a photon avoids one silent half with probability 1 - eta/2 and
            // both halves only by escaping detection entirely
            f[mode] *= match n_silent {
                0 => 1.0,
                1 => 1.0 - eta / 2.0,
                _ => 1.0 - eta,
            };
        }
        let sign = if subset.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * silent_expectation_hv(x, f);
    }
    total
}

/// Closed-form benchmark event probabilities at gain `tau`, all detector
/// arms at efficiency `eta`.
pub fn multi_pair_rates_closed(tau: f64, eta: f64) -> MultiPairRates {
    let x = tau.tanh().powi(2);
    MultiPairRates {
        single_ah: taps_fire_probability(x, eta, &[(0, Tap::Full)]),
        cc_one_pair: taps_fire_probability(x, eta, &[(0, Tap::Full), (3, Tap::Full)]),
        cc_two_pair: taps_fire_probability(x, eta, &[(0, Tap::Full), (2, Tap::Full)]),
        triple: taps_fire_probability(
            x,
            eta,
            &[(0, Tap::HalfA), (0, Tap::HalfB), (2, Tap::Full)],
        ),
        quad: taps_fire_probability(
            x,
            eta,
            &[(0, Tap::HalfA), (0, Tap::HalfB), (2, Tap::HalfA), (2, Tap::HalfB)],
        ),
    }
}

/// Monte Carlo estimate of the same benchmark event frequencies.
///
/// Samples occupations of the hv-basis source and draws the split-detector
/// pair jointly from its exact two-point distribution given the photon
/// count, then tallies all five events per pulse.
pub fn multi_pair_rates_mc(tau: f64, eta: f64, n_pulses: u64, seed: u64) -> Result<MultiPairRates> {
    let sampler = PairNumberSampler::new(tau)?;
    let n_max = sampler.n_max();
    let miss_full: Vec<f64> = {
        let mut v = vec![1.0];
        for k in 1..=n_max {
            v.push(v[k - 1] * (1.0 - eta));
        }
        v
    };
    let miss_half: Vec<f64> = {
        let mut v = vec![1.0];
        for k in 1..=n_max {
            v.push(v[k - 1] * (1.0 - eta / 2.0));
        }
        v
    };
    // joint split-pair outcome given k photons: neither half, one half, both
    let split_pair = |k: usize, rng: &mut ChaCha12Rng| -> (bool, bool) {
        let p00 = miss_full[k];
        let p_one = miss_half[k] - miss_full[k];
        let u: f64 = rng.random();
        if u < p00 {
            (false, false)
        } else if u < p00 + p_one {
            (true, false)
        } else if u < p00 + 2.0 * p_one {
            (false, true)
        } else {
            (true, true)
        }
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut tallies = [0u64; 5];
    for _ in 0..n_pulses {
        let n = sampler.sample(&mut rng);
        let m = if n == 0 {
            0
        } else {
            ((rng.random::<f64>() * (n + 1) as f64) as usize).min(n)
        };
        let (k_ah, k_bh, k_bv) = (n - m, m, n - m);
        let fire = |k: usize, rng: &mut ChaCha12Rng| k > 0 && rng.random::<f64>() < 1.0 - miss_full[k];
        let ah = fire(k_ah, &mut rng);
        let bh = fire(k_bh, &mut rng);
        let bv = fire(k_bv, &mut rng);
        let (ah1, ah2) = split_pair(k_ah, &mut rng);
        let (bh1, bh2) = split_pair(k_bh, &mut rng);
        tallies[0] += ah as u64;
        tallies[1] += (ah && bv) as u64;
        tallies[2] += (ah && bh) as u64;
        tallies[3] += (ah1 && ah2 && bh) as u64;
        tallies[4] += (ah1 && ah2 && bh1 && bh2) as u64;
    }
    let freq = |i: usize| tallies[i] as f64 / n_pulses as f64;
    Ok(MultiPairRates {
        single_ah: freq(0),
        cc_one_pair: freq(1),
        cc_two_pair: freq(2),
        triple: freq(3),
        quad: freq(4),
    })
}

/// Exact tail probability the pair-number sampler cannot reach; useful when
/// judging Monte Carlo agreement tolerances.
pub fn sampler_tail(tau: f64) -> Result<f64> {
    let n_max = select_n_max(tau, default_tail_tol(tau))?;
    Ok(tail_mass_beyond(tau, n_max))
}
