//! Seeded simulation of the coding schemes: draw a source block, encode it
//! with a random codebook, decode under each reception scenario and measure
//! the total variation between the realized joint type and the target.
//!
//! Every trial owns its random streams, derived from
//! `(master_seed, n, trial_index)`, so results do not depend on how trials
//! are spread across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{
    codebook_size, count_typical_tuples, decode_th1, decode_th2, encode_th1, encode_th2, generate_codebook_th1,
    generate_codebook_th2, reduced_epsilon, CaseLabel, CodebookTh1, CodebookTh2, EncodeResult, Sampler, Scenario,
    DEFAULT_CELL_BUDGET,
};
use crate::error::{Error, Result};
use crate::probability::{compose, joint_type, total_variation, ConditionalPmf, JointPmf, Pmf, SymbolSequence};
use crate::region::{RegionQuery, Theorem};
use crate::seeding::{derive_seed, stream_rng};
use crate::typicality::{delta_t, eps_m, is_strongly_typical};

const TAG_SOURCE: u64 = 0x50;
const TAG_CODEBOOK: u64 = 0xCB;
const TAG_KSTATS: u64 = 0x4B;

fn default_true() -> bool {
    true
}

fn default_theorem() -> Theorem {
    Theorem::One
}

fn default_budget() -> u64 {
    DEFAULT_CELL_BUDGET
}

/// One simulation setup.
///
/// `rates` is `(R1, R2)` for the two-layer scheme and `(R0, R1, R2)` with a
/// common layer; `rate_slacks` is `(e1, e2)` or `(e1, e2, e0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub query: RegionQuery,
    #[serde(default = "default_theorem")]
    pub theorem: Theorem,
    /// `p(y1, y2, y12 | x)` or `p(u, y1, y2, y12 | x)`.
    pub candidate: ConditionalPmf,
    pub rates: Vec<f64>,
    pub rate_slacks: Vec<f64>,
    pub epsilon: f64,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub fresh_codebook_per_trial: bool,
    #[serde(default = "default_budget")]
    pub budget: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.query.validate()?;
        let layers = match self.theorem {
            Theorem::One => 2,
            Theorem::Two => 3,
        };
        if self.rates.len() != layers || self.rate_slacks.len() != layers {
            return Err(Error::InvalidParameter(format!(
                "this scheme needs {layers} rates and {layers} slacks"
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::InvalidParameter("n_values must be nonempty and >= 1".into()));
        }
        let y = self.query.y_size();
        let mut axes = vec![y, y, y];
        if self.theorem == Theorem::Two {
            axes.insert(0, self.candidate.target_shape().first().copied().unwrap_or(0));
        }
        if self.candidate.given_shape() != [self.query.x_size()] || self.candidate.target_shape() != axes.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "candidate maps {:?} -> {:?}, expected [{}] -> {:?}",
                self.candidate.given_shape(),
                self.candidate.target_shape(),
                self.query.x_size(),
                axes
            )));
        }
        for &n in &self.n_values {
            let sizes = self.codebook_sizes(n)?;
            let cells = sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128));
            if cells > self.budget as u128 {
                return Err(Error::BudgetExceeded {
                    cells,
                    budget: self.budget,
                });
            }
        }
        Ok(())
    }

    /// Rates and slacks reordered outermost layer first.
    fn layered(&self) -> (Vec<f64>, Vec<f64>) {
        match self.theorem {
            Theorem::One => (self.rates.clone(), self.rate_slacks.clone()),
            Theorem::Two => (
                self.rates.clone(),
                vec![self.rate_slacks[2], self.rate_slacks[0], self.rate_slacks[1]],
            ),
        }
    }

    /// Index ranges of the codebook layers at blocklength `n`.
    pub fn codebook_sizes(&self, n: usize) -> Result<Vec<u64>> {
        let (rates, slacks) = self.layered();
        rates.iter().zip(&slacks).map(|(&r, &s)| codebook_size(r, s, n)).collect()
    }

    /// `p0(x) * candidate` with `X` as axis 0.
    pub fn coding_distribution(&self) -> Result<JointPmf> {
        compose(&self.query.p0, &self.candidate)
    }

    /// Relaxed per-trial bound on the scenario-12 TV of a case-(c) trial.
    pub fn case_c_bound(&self, n: usize) -> f64 {
        self.epsilon / 2.0 + self.query.delta12 + (self.query.x_size() * self.query.y_size()) as f64 / n as f64
    }

    fn codebook_seed(&self, n: usize, trial: usize) -> u64 {
        if self.fresh_codebook_per_trial {
            derive_seed(&[self.master_seed, n as u64, trial as u64, TAG_CODEBOOK])
        } else {
            derive_seed(&[self.master_seed, n as u64, TAG_CODEBOOK])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Codebook {
    Th1(CodebookTh1),
    Th2(CodebookTh2),
}

impl Codebook {
    fn generate(cfg: &ExperimentConfig, dist: &JointPmf, n: usize, seed: u64) -> Result<Self> {
        let (r, s) = cfg.layered();
        Ok(match cfg.theorem {
            Theorem::One => Codebook::Th1(generate_codebook_th1(dist, [r[0], r[1]], [s[0], s[1]], n, seed, cfg.budget)?),
            Theorem::Two => Codebook::Th2(generate_codebook_th2(
                dist,
                [r[0], r[1], r[2]],
                [s[0], s[1], s[2]],
                n,
                seed,
                cfg.budget,
            )?),
        })
    }

    fn encode(&self, xs: &SymbolSequence, dist: &JointPmf, epsilon: f64) -> Result<EncodeResult> {
        match self {
            Codebook::Th1(cb) => encode_th1(xs, cb, dist, epsilon),
            Codebook::Th2(cb) => encode_th2(xs, cb, dist, epsilon),
        }
    }

    fn decode(&self, r: &EncodeResult, scenario: Scenario) -> Result<SymbolSequence> {
        match self {
            Codebook::Th1(cb) => decode_th1(cb, r, scenario),
            Codebook::Th2(cb) => decode_th2(cb, r, scenario),
        }
    }
}

/// Outcome of one simulated block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// TV for scenarios 1, 2 and 12, in that order.
    pub tv: [f64; 3],
    pub encoding: EncodeResult,
}

/// `n` i.i.d. draws from `p0` on the trial's source stream.
pub fn sample_source(p0: &Pmf, n: usize, seed: u64) -> Result<SymbolSequence> {
    let sampler = Sampler::new(p0.probs());
    let mut rng = stream_rng(seed, TAG_SOURCE, 0);
    let symbols = (0..n).map(|_| sampler.sample(rng.gen::<f64>()) as usize).collect();
    SymbolSequence::new(symbols, p0.size())
}

fn trial_seed(cfg: &ExperimentConfig, n: usize, trial: usize) -> u64 {
    derive_seed(&[cfg.master_seed, n as u64, trial as u64])
}

fn run_with(
    cfg: &ExperimentConfig,
    dist: &JointPmf,
    target: &JointPmf,
    n: usize,
    trial: usize,
    shared: Option<&Codebook>,
) -> Result<TrialRecord> {
    let xs = sample_source(&cfg.query.p0, n, trial_seed(cfg, n, trial))?;
    let fresh;
    let cb = match shared {
        Some(cb) => cb,
        None => {
            fresh = Codebook::generate(cfg, dist, n, cfg.codebook_seed(n, trial))?;
            &fresh
        }
    };
    let encoding = cb.encode(&xs, dist, cfg.epsilon)?;
    let mut tv = [0.0; 3];
    for (slot, scenario) in tv.iter_mut().zip(Scenario::ALL) {
        let ys = cb.decode(&encoding, scenario)?;
        *slot = total_variation(&joint_type(&xs, &ys)?, target)?;
    }
    Ok(TrialRecord { trial, tv, encoding })
}

/// Simulates trial `trial` at blocklength `n`.
pub fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<TrialRecord> {
    cfg.validate()?;
    let dist = cfg.coding_distribution()?;
    let target = cfg.query.target_joint()?;
    let shared = if cfg.fresh_codebook_per_trial {
        None
    } else {
        Some(Codebook::generate(cfg, &dist, n, cfg.codebook_seed(n, trial))?)
    };
    run_with(cfg, &dist, &target, n, trial, shared.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub scenario: Scenario,
    pub mean_tv: f64,
    /// Sample standard deviation over `sqrt(trials)`; zero for one trial.
    pub std_err: f64,
    pub case_counts: CaseCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlocklengthResult {
    pub n: usize,
    pub scenarios: Vec<ScenarioStats>,
    pub trials: Vec<TrialRecord>,
}

fn summarize(records: &[TrialRecord]) -> Vec<ScenarioStats> {
    let mut counts = CaseCounts::default();
    for r in records {
        match r.encoding.case_label {
            CaseLabel::A => counts.a += 1,
            CaseLabel::B => counts.b += 1,
            CaseLabel::C => counts.c += 1,
        }
    }
    let t = records.len() as f64;
    Scenario::ALL
        .iter()
        .enumerate()
        .map(|(i, &scenario)| {
            // sums run in trial order so the result is schedule independent
            let mean = records.iter().map(|r| r.tv[i]).sum::<f64>() / t;
            let std_err = if records.len() > 1 {
                let var = records.iter().map(|r| (r.tv[i] - mean).powi(2)).sum::<f64>() / (t - 1.0);
                (var / t).sqrt()
            } else {
                0.0
            };
            ScenarioStats {
                scenario,
                mean_tv: mean,
                std_err,
                case_counts: counts,
            }
        })
        .collect()
}

/// All trials at every blocklength, aggregated per scenario.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<BlocklengthResult>> {
    cfg.validate()?;
    let dist = cfg.coding_distribution()?;
    let target = cfg.query.target_joint()?;
    cfg.n_values
        .iter()
        .map(|&n| {
            let shared = if cfg.fresh_codebook_per_trial {
                None
            } else {
                Some(Codebook::generate(cfg, &dist, n, cfg.codebook_seed(n, 0))?)
            };
            let trials: Vec<TrialRecord> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_with(cfg, &dist, &target, n, t, shared.as_ref()))
                .collect::<Result<_>>()?;
            Ok(BlocklengthResult {
                n,
                scenarios: summarize(&trials),
                trials,
            })
        })
        .collect()
}

/// Length-`n` sequence whose type is the realizable type nearest `p0` in
/// total variation (largest remainders), symbols sorted ascending.
pub fn nearest_type_sequence(p0: &Pmf, n: usize) -> Result<SymbolSequence> {
    let scaled: Vec<f64> = p0.probs().iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let short = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).filter(|&i| p0.probs()[i] > 0.0).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (scaled[i] - scaled[i].floor(), scaled[j] - scaled[j].floor());
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().cycle().take(short) {
        counts[i] += 1;
    }
    let symbols = counts.iter().enumerate().flat_map(|(s, &c)| std::iter::repeat(s).take(c)).collect();
    SymbolSequence::new(symbols, p0.size())
}

/// Closed-form bounds behind the second-moment argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBounds {
    /// Lower bound on `E[K]`; trivial when it is zero.
    pub mean_lower: f64,
    pub mean_lower_trivial: bool,
    /// Chebyshev upper bound on `Pr[K = 0]`, capped at 1; trivial at 1.
    pub zero_prob_upper: f64,
    pub zero_prob_upper_trivial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStats {
    pub n: usize,
    pub draws: usize,
    pub m1: u64,
    pub m2: u64,
    pub mean_k: f64,
    /// Unbiased sample variance.
    pub var_k: f64,
    pub frac_k_zero: f64,
    /// `4 var / mean^2` from the sample moments, capped at 1.
    pub plugin_zero_prob_bound: f64,
    pub bounds: KBounds,
    pub source: Vec<usize>,
    pub samples: Vec<u64>,
}

/// `log(sum exp(terms))` over finite terms.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Second-moment bounds for the two-layer scheme at blocklength `n`.
pub fn k_bounds(dist: &JointPmf, m1: u64, m2: u64, n: usize, epsilon: f64) -> Result<KBounds> {
    let i_all = dist.mutual_information(&[0], &[1, 2, 3])?;
    let i12 = dist.mutual_information(&[1], &[2])?;
    let i1 = dist.mutual_information(&[0], &[1])?;
    let i2 = dist.mutual_information(&[0], &[2])?;
    let em = eps_m(dist, epsilon)?;
    let nf = n as f64;
    let dt = delta_t(n, epsilon / 2.0, dist.shape());
    let (lm1, lm2) = ((m1 as f64).ln(), (m2 as f64).ln());

    let log_lower = if dt < 1.0 && m1 > 0 && m2 > 0 {
        lm1 + lm2 + (-dt).ln_1p() - nf * (i_all + i12 + 4.0 * em)
    } else {
        f64::NEG_INFINITY
    };
    let mean_lower = log_lower.exp();

    let mut terms = vec![lm1 + lm2 - nf * (i_all + i12 - 4.0 * em)];
    if m2 > 1 {
        terms.push(lm1 + lm2 + ((m2 - 1) as f64).ln() - nf * (2.0 * i_all + 2.0 * i12 - i1 - 8.0 * em));
    }
    if m1 > 1 {
        terms.push(lm1 + ((m1 - 1) as f64).ln() + lm2 - nf * (2.0 * i_all + 2.0 * i12 - i2 - 8.0 * em));
    }
    let zero_prob_upper = if log_lower.is_finite() {
        (4f64.ln() + log_sum_exp(&terms) - 2.0 * log_lower).exp().min(1.0)
    } else {
        1.0
    };
    Ok(KBounds {
        mean_lower,
        mean_lower_trivial: mean_lower <= 0.0,
        zero_prob_upper,
        zero_prob_upper_trivial: zero_prob_upper >= 1.0,
    })
}

/// Counts of jointly typical index pairs for a fixed typical source block
/// over `draws` independent two-layer codebooks.
pub fn k_statistics(cfg: &ExperimentConfig, n: usize, draws: usize) -> Result<KStats> {
    cfg.validate()?;
    if cfg.theorem != Theorem::One {
        return Err(Error::InvalidParameter("K statistics are defined for the two-layer scheme".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be >= 1".into()));
    }
    let dist = cfg.coding_distribution()?;
    let xs = nearest_type_sequence(&cfg.query.p0, n)?;
    let px = dist.marginalize(&[0])?;
    if !is_strongly_typical(&[&xs], &px, reduced_epsilon(cfg.epsilon, &dist.shape()[1..]))? {
        return Err(Error::NoTypicalSequence { n });
    }
    let (r, s) = cfg.layered();
    let samples: Vec<u64> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let seed = derive_seed(&[cfg.master_seed, n as u64, d as u64, TAG_KSTATS]);
            let cb = generate_codebook_th1(&dist, [r[0], r[1]], [s[0], s[1]], n, seed, cfg.budget)?;
            count_typical_tuples(&xs, &cb, &dist, cfg.epsilon)
        })
        .collect::<Result<_>>()?;
    let (m1, m2) = (codebook_size(r[0], s[0], n)?, codebook_size(r[1], s[1], n)?);
    let t = draws as f64;
    let mean_k = samples.iter().map(|&k| k as f64).sum::<f64>() / t;
    let var_k = if draws > 1 {
        samples.iter().map(|&k| (k as f64 - mean_k).powi(2)).sum::<f64>() / (t - 1.0)
    } else {
        0.0
    };
    let frac_k_zero = samples.iter().filter(|&&k| k == 0).count() as f64 / t;
    let plugin_zero_prob_bound = if mean_k > 0.0 {
        (4.0 * var_k / (mean_k * mean_k)).min(1.0)
    } else {
        1.0
    };
    Ok(KStats {
        n,
        draws,
        m1,
        m2,
        mean_k,
        var_k,
        frac_k_zero,
        plugin_zero_prob_bound,
        bounds: k_bounds(&dist, m1, m2, n, cfg.epsilon)?,
        source: xs.symbols().to_vec(),
        samples,
    })
}
