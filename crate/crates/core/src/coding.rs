//! Random codebooks, the joint-typicality encoder and the three decoders for
//! both coding schemes.
//!
//! The two-layer scheme draws `M1` first-description codewords and `M2`
//! second-description codewords i.i.d. from their marginals, and one
//! refinement codeword per index pair from the conditional law given the two
//! codewords it refines. The three-layer scheme adds a common codeword `U`
//! below everything else.
//!
//! Codeword symbol `k` of row `w` in table `t` is drawn from the `k`-th
//! uniform of a ChaCha stream keyed by `(seed, t)` with stream number `w`, so
//! any codeword can be regenerated on its own. Refinement codewords are
//! produced that way on demand instead of being stored: there are `M1 * M2`
//! of them and the encoder rarely needs more than a small fraction.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{JointPmf, SymbolSequence};
use crate::seeding::stream_rng;
use crate::typicality::{counts_typical, typicality_threshold};

/// Default cap on the number of index tuples a codebook may span.
pub const DEFAULT_CELL_BUDGET: u64 = 1 << 24;

const TAG_Y0: u64 = 0xC0;
const TAG_Y1: u64 = 0xC1;
const TAG_Y2: u64 = 0xC2;
const TAG_Y12: u64 = 0xC12;

/// Which description indices reach the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "12")]
    Both,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::First, Scenario::Second, Scenario::Both];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::First => "1",
            Scenario::Second => "2",
            Scenario::Both => "12",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Scenario::First),
            "2" => Ok(Scenario::Second),
            "12" => Ok(Scenario::Both),
            other => Err(Error::InvalidParameter(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Encoder outcome class: (a) the source block is atypical at the reduced
/// slack, (b) it is typical but no index tuple works, (c) a tuple was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseLabel {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeResult {
    /// 1-based; `(w1, w2)` or `(w0, w1, w2)`.
    pub indices: Vec<usize>,
    pub found: bool,
    pub case_label: CaseLabel,
}

impl EncodeResult {
    fn fallback(arity: usize, case_label: CaseLabel) -> Self {
        Self {
            indices: vec![1; arity],
            found: false,
            case_label,
        }
    }

    fn found(indices: Vec<usize>) -> Self {
        Self {
            indices,
            found: true,
            case_label: CaseLabel::C,
        }
    }
}

/// `floor(exp(n (rate + slack)))`.
pub fn codebook_size(rate: f64, slack: f64, n: usize) -> Result<u64> {
    if !(rate >= 0.0) || !(slack >= 0.0) || !rate.is_finite() || !slack.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rates and slacks must be finite and nonnegative, got {rate} and {slack}"
        )));
    }
    let size = (n as f64 * (rate + slack)).exp().floor();
    if size >= 2f64.powi(63) {
        return Err(Error::BudgetExceeded {
            cells: u128::MAX,
            budget: u64::MAX,
        });
    }
    Ok(size as u64)
}

fn check_budget(sizes: &[u64], budget: u64) -> Result<()> {
    let cells = sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128));
    if cells > budget as u128 {
        return Err(Error::BudgetExceeded { cells, budget });
    }
    Ok(())
}

/// Inverse-CDF sampler; never returns a zero-probability symbol.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sampler {
    cdf: Vec<f64>,
    last_positive: u8,
}

impl Sampler {
    pub(crate) fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8;
        Self { cdf, last_positive }
    }

    pub(crate) fn sample(&self, u: f64) -> u8 {
        self.cdf
            .iter()
            .position(|&c| u < c)
            .map_or(self.last_positive, |i| i as u8)
    }
}

/// One sampler per conditioning row; `None` for rows with zero mass.
#[derive(Debug, Clone, PartialEq)]
struct ConditionalSampler {
    rows: Vec<Option<Sampler>>,
}

impl ConditionalSampler {
    /// Law of the last axis of `p` given all preceding axes.
    fn last_given_rest(p: &JointPmf) -> Result<Self> {
        let given: Vec<usize> = (0..p.ndim() - 1).collect();
        let c = p.condition(&given)?;
        Ok(Self {
            rows: (0..c.n_rows()).map(|i| c.row(i).map(Sampler::new)).collect(),
        })
    }

    fn get(&self, row: usize) -> Result<&Sampler> {
        self.rows[row]
            .as_ref()
            .ok_or(Error::UndefinedConditional { row })
    }
}

/// `rows x n` symbols, flat.
#[derive(Debug, Clone, PartialEq, Eq)]
struct SymbolTable {
    n: usize,
    data: Vec<u8>,
}

impl SymbolTable {
    fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    fn rows(&self) -> usize {
        self.data.len() / self.n
    }

    fn to_nested(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.n).map(<[u8]>::to_vec).collect()
    }
}

fn generate_table<F>(rows: usize, n: usize, seed: u64, tag: u64, draw: F) -> Result<SymbolTable>
where
    F: Fn(usize, usize, f64) -> Result<u8> + Sync,
{
    let chunks: Vec<Vec<u8>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, tag, r as u64);
            (0..n).map(|k| draw(r, k, rng.gen::<f64>())).collect()
        })
        .collect::<Result<_>>()?;
    Ok(SymbolTable {
        n,
        data: chunks.concat(),
    })
}

fn check_symbol_alphabets(shape: &[usize]) -> Result<()> {
    if shape.iter().any(|&s| s > 256) {
        return Err(Error::InvalidParameter(
            "codebooks support alphabets of at most 256 symbols".into(),
        ));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be >= 1".into()));
    }
    Ok(())
}

fn check_index(index: usize, max: u64) -> Result<usize> {
    if index == 0 || index as u64 > max {
        return Err(Error::IndexOutOfRange {
            index,
            max: max as usize,
        });
    }
    Ok(index - 1)
}

/// Plain tables for inspection and cross-implementation comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookDump {
    pub scheme: u8,
    pub n: usize,
    pub seed: u64,
    pub rates: Vec<f64>,
    pub slacks: Vec<f64>,
    /// Index range of every layer, outermost first.
    pub sizes: Vec<u64>,
    /// Common layer rows (three-layer scheme only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<Vec<u8>>>,
    /// Rows in index order; for the three-layer scheme `w0` is the major index.
    pub y1: Vec<Vec<u8>>,
    pub y2: Vec<Vec<u8>>,
    /// Refinement rows with the outer indices major.
    pub y12: Vec<Vec<u8>>,
}

// ---------------------------------------------------------------------------
// two-layer scheme

/// Codebook for the two-description scheme over `(X, Y1, Y2, Y12)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookTh1 {
    n: usize,
    seed: u64,
    m1: u64,
    m2: u64,
    rates: [f64; 2],
    slacks: [f64; 2],
    alphabets: [usize; 3],
    y1: SymbolTable,
    y2: SymbolTable,
    y12_law: ConditionalSampler,
}

fn check_dist_shape(dist: &JointPmf, axes: usize) -> Result<()> {
    if dist.ndim() != axes {
        return Err(Error::ShapeMismatch(format!(
            "coding distribution needs {axes} axes, got {:?}",
            dist.shape()
        )));
    }
    check_symbol_alphabets(dist.shape())
}

/// Symbols appearing at each position across the rows of a table.
fn seen_per_position(table: &SymbolTable, alphabet: usize) -> Vec<Vec<bool>> {
    let mut seen = vec![vec![false; alphabet]; table.n];
    for r in 0..table.rows() {
        for (k, &s) in table.row(r).iter().enumerate() {
            seen[k][s as usize] = true;
        }
    }
    seen
}

pub fn generate_codebook_th1(
    dist: &JointPmf,
    rates: [f64; 2],
    slacks: [f64; 2],
    n: usize,
    seed: u64,
    budget: u64,
) -> Result<CodebookTh1> {
    check_dist_shape(dist, 4)?;
    check_n(n)?;
    let m1 = codebook_size(rates[0], slacks[0], n)?;
    let m2 = codebook_size(rates[1], slacks[1], n)?;
    check_budget(&[m1, m2], budget)?;
    let s = dist.shape();
    let alphabets = [s[1], s[2], s[3]];

    let law1 = Sampler::new(dist.marginalize(&[1])?.probs());
    let law2 = Sampler::new(dist.marginalize(&[2])?.probs());
    let y12_law = ConditionalSampler::last_given_rest(&dist.marginalize(&[1, 2, 3])?)?;

    let y1 = generate_table(m1 as usize, n, seed, TAG_Y1, |_, _, u| Ok(law1.sample(u)))?;
    let y2 = generate_table(m2 as usize, n, seed, TAG_Y2, |_, _, u| Ok(law2.sample(u)))?;

    // every realized (y1, y2) symbol pair must have a defined refinement law
    let seen1 = seen_per_position(&y1, alphabets[0]);
    let seen2 = seen_per_position(&y2, alphabets[1]);
    for k in 0..n {
        for a in (0..alphabets[0]).filter(|&a| seen1[k][a]) {
            for b in (0..alphabets[1]).filter(|&b| seen2[k][b]) {
                y12_law.get(a * alphabets[1] + b)?;
            }
        }
    }

    Ok(CodebookTh1 {
        n,
        seed,
        m1,
        m2,
        rates,
        slacks,
        alphabets,
        y1,
        y2,
        y12_law,
    })
}

impl CodebookTh1 {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m1(&self) -> u64 {
        self.m1
    }

    pub fn m2(&self) -> u64 {
        self.m2
    }

    /// Alphabet sizes of `(Y1, Y2, Y12)`.
    pub fn alphabets(&self) -> [usize; 3] {
        self.alphabets
    }

    pub fn y1(&self, w1: usize) -> Result<&[u8]> {
        Ok(self.y1.row(check_index(w1, self.m1)?))
    }

    pub fn y2(&self, w2: usize) -> Result<&[u8]> {
        Ok(self.y2.row(check_index(w2, self.m2)?))
    }

    pub fn y12(&self, w1: usize, w2: usize) -> Result<Vec<u8>> {
        let a = check_index(w1, self.m1)?;
        let b = check_index(w2, self.m2)?;
        Ok(self.refinement(a, b))
    }

    /// Zero-based indices.
    fn refinement(&self, a: usize, b: usize) -> Vec<u8> {
        let stream = (a as u64) * self.m2 + b as u64;
        let mut rng = stream_rng(self.seed, TAG_Y12, stream);
        let (r1, r2) = (self.y1.row(a), self.y2.row(b));
        (0..self.n)
            .map(|k| {
                let row = r1[k] as usize * self.alphabets[1] + r2[k] as usize;
                // rows reachable from the stored tables were checked at generation
                self.y12_law.rows[row]
                    .as_ref()
                    .expect("refinement law checked at generation")
                    .sample(rng.gen::<f64>())
            })
            .collect()
    }

    pub fn dump(&self) -> CodebookDump {
        let y12 = (0..self.m1 as usize)
            .flat_map(|a| (0..self.m2 as usize).map(move |b| (a, b)))
            .map(|(a, b)| self.refinement(a, b))
            .collect();
        CodebookDump {
            scheme: 1,
            n: self.n,
            seed: self.seed,
            rates: self.rates.to_vec(),
            slacks: self.slacks.to_vec(),
            sizes: vec![self.m1, self.m2],
            y0: None,
            y1: self.y1.to_nested(),
            y2: self.y2.to_nested(),
            y12,
        }
    }
}

/// A marginal of the coding distribution used as a pruning or final test.
struct TypicalTarget {
    shape: Vec<usize>,
    probs: Vec<f64>,
    threshold: f64,
}

impl TypicalTarget {
    fn new(dist: &JointPmf, axes: &[usize], epsilon: f64) -> Result<Self> {
        let m = dist.marginalize(axes)?;
        Ok(Self {
            threshold: typicality_threshold(epsilon, m.shape()),
            shape: m.shape().to_vec(),
            probs: m.probs().to_vec(),
        })
    }

    fn holds(&self, rows: &[&[u8]]) -> bool {
        let n = rows[0].len();
        let mut counts = vec![0u32; self.probs.len()];
        for k in 0..n {
            let idx = rows
                .iter()
                .zip(&self.shape)
                .fold(0, |acc, (r, &s)| acc * s + r[k] as usize);
            counts[idx] += 1;
        }
        counts_typical(&counts, n, &self.probs, self.threshold)
    }
}

/// Reduced slack used for the case-(a) test on the source block.
pub fn reduced_epsilon(epsilon: f64, reconstruction_alphabets: &[usize]) -> f64 {
    let cells: f64 = reconstruction_alphabets.iter().map(|&s| s as f64).product();
    epsilon / (2.0 * cells)
}

fn source_symbols(xs: &SymbolSequence, dist: &JointPmf, n: usize) -> Result<Vec<u8>> {
    if xs.alphabet() != dist.shape()[0] {
        return Err(Error::ShapeMismatch(format!(
            "source alphabet {} vs distribution axis {}",
            xs.alphabet(),
            dist.shape()[0]
        )));
    }
    if xs.len() != n {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: n,
        });
    }
    Ok(xs.symbols().iter().map(|&s| s as u8).collect())
}

struct Th1Search<'a> {
    cb: &'a CodebookTh1,
    x: Vec<u8>,
    source_typical: bool,
    xy1: TypicalTarget,
    xy1y2: TypicalTarget,
    full: TypicalTarget,
    good_w2: Vec<usize>,
}

impl<'a> Th1Search<'a> {
    fn new(xs: &SymbolSequence, cb: &'a CodebookTh1, dist: &JointPmf, epsilon: f64) -> Result<Self> {
        check_dist_shape(dist, 4)?;
        if dist.shape()[1..] != cb.alphabets {
            return Err(Error::ShapeMismatch(format!(
                "distribution axes {:?} vs codebook alphabets {:?}",
                dist.shape(),
                cb.alphabets
            )));
        }
        let x = source_symbols(xs, dist, cb.n)?;
        let px = TypicalTarget::new(dist, &[0], reduced_epsilon(epsilon, &cb.alphabets))?;
        let source_typical = px.holds(&[&x]);
        let xy2 = TypicalTarget::new(dist, &[0, 2], epsilon)?;
        let good_w2 = if source_typical {
            (0..cb.m2 as usize)
                .filter(|&b| xy2.holds(&[&x, cb.y2.row(b)]))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            cb,
            source_typical,
            xy1: TypicalTarget::new(dist, &[0, 1], epsilon)?,
            xy1y2: TypicalTarget::new(dist, &[0, 1, 2], epsilon)?,
            full: TypicalTarget::new(dist, &[0, 1, 2, 3], epsilon)?,
            good_w2,
            x,
        })
    }

    /// Zero-based index pairs of `w1` row `a` that satisfy the full test.
    fn matches(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        let r1 = self.cb.y1.row(a);
        let row_ok = self.xy1.holds(&[&self.x, r1]);
        self.good_w2
            .iter()
            .copied()
            .filter(move |_| row_ok)
            .filter(move |&b| {
                let r2 = self.cb.y2.row(b);
                self.xy1y2.holds(&[&self.x, r1, r2])
                    && self.full.holds(&[&self.x, r1, r2, &self.cb.refinement(a, b)])
            })
    }

    fn first(&self) -> Option<(usize, usize)> {
        (0..self.cb.m1 as usize)
            .into_par_iter()
            .find_map_first(|a| self.matches(a).next().map(|b| (a, b)))
    }

    fn count(&self) -> u64 {
        (0..self.cb.m1 as usize)
            .into_par_iter()
            .map(|a| self.matches(a).count() as u64)
            .sum()
    }
}

/// Returns the lexicographically first `(w1, w2)` (w1 major) whose codewords
/// are jointly typical with `xs`, or the fallback `(1, 1)`.
pub fn encode_th1(xs: &SymbolSequence, cb: &CodebookTh1, dist: &JointPmf, epsilon: f64) -> Result<EncodeResult> {
    let search = Th1Search::new(xs, cb, dist, epsilon)?;
    if !search.source_typical {
        return Ok(EncodeResult::fallback(2, CaseLabel::A));
    }
    Ok(match search.first() {
        Some((a, b)) => EncodeResult::found(vec![a + 1, b + 1]),
        None => EncodeResult::fallback(2, CaseLabel::B),
    })
}

/// Number of index pairs whose codewords are jointly typical with `xs`;
/// zero when `xs` fails the reduced-slack source test.
pub fn count_typical_tuples(xs: &SymbolSequence, cb: &CodebookTh1, dist: &JointPmf, epsilon: f64) -> Result<u64> {
    let search = Th1Search::new(xs, cb, dist, epsilon)?;
    if !search.source_typical {
        return Ok(0);
    }
    Ok(search.count())
}

fn check_arity(result: &EncodeResult, arity: usize) -> Result<()> {
    if result.indices.len() != arity {
        return Err(Error::InvalidParameter(format!(
            "expected {arity} indices, got {}",
            result.indices.len()
        )));
    }
    Ok(())
}

fn to_sequence(symbols: &[u8], alphabet: usize) -> Result<SymbolSequence> {
    SymbolSequence::new(symbols.iter().map(|&s| s as usize).collect(), alphabet)
}

pub fn decode_th1(cb: &CodebookTh1, result: &EncodeResult, scenario: Scenario) -> Result<SymbolSequence> {
    check_arity(result, 2)?;
    let (w1, w2) = (result.indices[0], result.indices[1]);
    match scenario {
        Scenario::First => to_sequence(cb.y1(w1)?, cb.alphabets[0]),
        Scenario::Second => to_sequence(cb.y2(w2)?, cb.alphabets[1]),
        Scenario::Both => to_sequence(&cb.y12(w1, w2)?, cb.alphabets[2]),
    }
}

// ---------------------------------------------------------------------------
// three-layer scheme

/// Codebook for the scheme with a common layer, over `(X, U, Y1, Y2, Y12)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookTh2 {
    n: usize,
    seed: u64,
    m0: u64,
    m1: u64,
    m2: u64,
    rates: [f64; 3],
    slacks: [f64; 3],
    alphabets: [usize; 4],
    y0: SymbolTable,
    y1: SymbolTable,
    y2: SymbolTable,
    y12_law: ConditionalSampler,
}

/// Rates and slacks are ordered `(common, first, second)`.
pub fn generate_codebook_th2(
    dist: &JointPmf,
    rates: [f64; 3],
    slacks: [f64; 3],
    n: usize,
    seed: u64,
    budget: u64,
) -> Result<CodebookTh2> {
    check_dist_shape(dist, 5)?;
    check_n(n)?;
    let m0 = codebook_size(rates[0], slacks[0], n)?;
    let m1 = codebook_size(rates[1], slacks[1], n)?;
    let m2 = codebook_size(rates[2], slacks[2], n)?;
    check_budget(&[m0, m1, m2], budget)?;
    let s = dist.shape();
    let alphabets = [s[1], s[2], s[3], s[4]];

    let law0 = Sampler::new(dist.marginalize(&[1])?.probs());
    let law1 = ConditionalSampler::last_given_rest(&dist.marginalize(&[1, 2])?)?;
    let law2 = ConditionalSampler::last_given_rest(&dist.marginalize(&[1, 3])?)?;
    let y12_law = ConditionalSampler::last_given_rest(&dist.marginalize(&[1, 2, 3, 4])?)?;

    let y0 = generate_table(m0 as usize, n, seed, TAG_Y0, |_, _, u| Ok(law0.sample(u)))?;
    let (m1u, m2u) = (m1 as usize, m2 as usize);
    let y1 = generate_table(m0 as usize * m1u, n, seed, TAG_Y1, |r, k, u| {
        let u0 = y0.row(r / m1u)[k] as usize;
        Ok(law1.get(u0)?.sample(u))
    })?;
    let y2 = generate_table(m0 as usize * m2u, n, seed, TAG_Y2, |r, k, u| {
        let u0 = y0.row(r / m2u)[k] as usize;
        Ok(law2.get(u0)?.sample(u))
    })?;

    let [_, a1, a2, _] = alphabets;
    for c in 0..m0 as usize {
        for k in 0..n {
            let u0 = y0.row(c)[k] as usize;
            let mut seen1 = vec![false; a1];
            let mut seen2 = vec![false; a2];
            (0..m1u).for_each(|a| seen1[y1.row(c * m1u + a)[k] as usize] = true);
            (0..m2u).for_each(|b| seen2[y2.row(c * m2u + b)[k] as usize] = true);
            for a in (0..a1).filter(|&a| seen1[a]) {
                for b in (0..a2).filter(|&b| seen2[b]) {
                    y12_law.get((u0 * a1 + a) * a2 + b)?;
                }
            }
        }
    }

    Ok(CodebookTh2 {
        n,
        seed,
        m0,
        m1,
        m2,
        rates,
        slacks,
        alphabets,
        y0,
        y1,
        y2,
        y12_law,
    })
}

impl CodebookTh2 {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m0(&self) -> u64 {
        self.m0
    }

    pub fn m1(&self) -> u64 {
        self.m1
    }

    pub fn m2(&self) -> u64 {
        self.m2
    }

    /// Alphabet sizes of `(U, Y1, Y2, Y12)`.
    pub fn alphabets(&self) -> [usize; 4] {
        self.alphabets
    }

    pub fn y0(&self, w0: usize) -> Result<&[u8]> {
        Ok(self.y0.row(check_index(w0, self.m0)?))
    }

    pub fn y1(&self, w0: usize, w1: usize) -> Result<&[u8]> {
        let c = check_index(w0, self.m0)?;
        let a = check_index(w1, self.m1)?;
        Ok(self.y1.row(c * self.m1 as usize + a))
    }

    pub fn y2(&self, w0: usize, w2: usize) -> Result<&[u8]> {
        let c = check_index(w0, self.m0)?;
        let b = check_index(w2, self.m2)?;
        Ok(self.y2.row(c * self.m2 as usize + b))
    }

    pub fn y12(&self, w0: usize, w1: usize, w2: usize) -> Result<Vec<u8>> {
        let c = check_index(w0, self.m0)?;
        let a = check_index(w1, self.m1)?;
        let b = check_index(w2, self.m2)?;
        Ok(self.refinement(c, a, b))
    }

    fn row1(&self, c: usize, a: usize) -> &[u8] {
        self.y1.row(c * self.m1 as usize + a)
    }

    fn row2(&self, c: usize, b: usize) -> &[u8] {
        self.y2.row(c * self.m2 as usize + b)
    }

    fn refinement(&self, c: usize, a: usize, b: usize) -> Vec<u8> {
        let stream = ((c as u64) * self.m1 + a as u64) * self.m2 + b as u64;
        let mut rng = stream_rng(self.seed, TAG_Y12, stream);
        let (r0, r1, r2) = (self.y0.row(c), self.row1(c, a), self.row2(c, b));
        let [_, a1, a2, _] = self.alphabets;
        (0..self.n)
            .map(|k| {
                let row = (r0[k] as usize * a1 + r1[k] as usize) * a2 + r2[k] as usize;
                self.y12_law.rows[row]
                    .as_ref()
                    .expect("refinement law checked at generation")
                    .sample(rng.gen::<f64>())
            })
            .collect()
    }

    pub fn dump(&self) -> CodebookDump {
        let (m0, m1, m2) = (self.m0 as usize, self.m1 as usize, self.m2 as usize);
        let mut y12 = Vec::with_capacity(m0 * m1 * m2);
        for c in 0..m0 {
            for a in 0..m1 {
                for b in 0..m2 {
                    y12.push(self.refinement(c, a, b));
                }
            }
        }
        CodebookDump {
            scheme: 2,
            n: self.n,
            seed: self.seed,
            rates: self.rates.to_vec(),
            slacks: self.slacks.to_vec(),
            sizes: vec![self.m0, self.m1, self.m2],
            y0: Some(self.y0.to_nested()),
            y1: self.y1.to_nested(),
            y2: self.y2.to_nested(),
            y12,
        }
    }
}

struct Th2Search<'a> {
    cb: &'a CodebookTh2,
    x: Vec<u8>,
    source_typical: bool,
    xy0y1: TypicalTarget,
    xy0y1y2: TypicalTarget,
    full: TypicalTarget,
    /// For each common index: `None` if `(x, y0)` fails, else the second
    /// indices passing `(x, y0, y2)`.
    good_w2: Vec<Option<Vec<usize>>>,
}

impl<'a> Th2Search<'a> {
    fn new(xs: &SymbolSequence, cb: &'a CodebookTh2, dist: &JointPmf, epsilon: f64) -> Result<Self> {
        check_dist_shape(dist, 5)?;
        if dist.shape()[1..] != cb.alphabets {
            return Err(Error::ShapeMismatch(format!(
                "distribution axes {:?} vs codebook alphabets {:?}",
                dist.shape(),
                cb.alphabets
            )));
        }
        let x = source_symbols(xs, dist, cb.n)?;
        let px = TypicalTarget::new(dist, &[0], reduced_epsilon(epsilon, &cb.alphabets[1..]))?;
        let source_typical = px.holds(&[&x]);
        let xy0 = TypicalTarget::new(dist, &[0, 1], epsilon)?;
        let xy0y2 = TypicalTarget::new(dist, &[0, 1, 3], epsilon)?;
        let good_w2 = if source_typical {
            (0..cb.m0 as usize)
                .map(|c| {
                    let r0 = cb.y0.row(c);
                    xy0.holds(&[&x, r0]).then(|| {
                        (0..cb.m2 as usize)
                            .filter(|&b| xy0y2.holds(&[&x, r0, cb.row2(c, b)]))
                            .collect()
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            cb,
            source_typical,
            xy0y1: TypicalTarget::new(dist, &[0, 1, 2], epsilon)?,
            xy0y1y2: TypicalTarget::new(dist, &[0, 1, 2, 3], epsilon)?,
            full: TypicalTarget::new(dist, &[0, 1, 2, 3, 4], epsilon)?,
            good_w2,
            x,
        })
    }

    /// Second indices matching common index `c` and first index `a`.
    fn matches(&self, c: usize, a: usize) -> Vec<usize> {
        let Some(good) = &self.good_w2[c] else {
            return Vec::new();
        };
        let r0 = self.cb.y0.row(c);
        let r1 = self.cb.row1(c, a);
        if !self.xy0y1.holds(&[&self.x, r0, r1]) {
            return Vec::new();
        }
        good.iter()
            .copied()
            .filter(|&b| {
                let r2 = self.cb.row2(c, b);
                self.xy0y1y2.holds(&[&self.x, r0, r1, r2])
                    && self.full.holds(&[&self.x, r0, r1, r2, &self.cb.refinement(c, a, b)])
            })
            .collect()
    }

    fn first(&self) -> Option<(usize, usize, usize)> {
        let m1 = self.cb.m1 as usize;
        (0..self.cb.m0 as usize * m1)
            .into_par_iter()
            .find_map_first(|t| {
                let (c, a) = (t / m1, t % m1);
                // cheap path for the whole common row
                self.good_w2[c].as_ref()?;
                self.matches(c, a).first().map(|&b| (c, a, b))
            })
    }

    fn count(&self) -> u64 {
        let m1 = self.cb.m1 as usize;
        (0..self.cb.m0 as usize * m1)
            .into_par_iter()
            .map(|t| self.matches(t / m1, t % m1).len() as u64)
            .sum()
    }
}

/// Returns the lexicographically first `(w0, w1, w2)` (w0 major) whose
/// codewords are jointly typical with `xs`, or the fallback `(1, 1, 1)`.
pub fn encode_th2(xs: &SymbolSequence, cb: &CodebookTh2, dist: &JointPmf, epsilon: f64) -> Result<EncodeResult> {
    let search = Th2Search::new(xs, cb, dist, epsilon)?;
    if !search.source_typical {
        return Ok(EncodeResult::fallback(3, CaseLabel::A));
    }
    Ok(match search.first() {
        Some((c, a, b)) => EncodeResult::found(vec![c + 1, a + 1, b + 1]),
        None => EncodeResult::fallback(3, CaseLabel::B),
    })
}

/// Three-layer analogue of [`count_typical_tuples`].
pub fn count_typical_tuples_th2(xs: &SymbolSequence, cb: &CodebookTh2, dist: &JointPmf, epsilon: f64) -> Result<u64> {
    let search = Th2Search::new(xs, cb, dist, epsilon)?;
    if !search.source_typical {
        return Ok(0);
    }
    Ok(search.count())
}

pub fn decode_th2(cb: &CodebookTh2, result: &EncodeResult, scenario: Scenario) -> Result<SymbolSequence> {
    check_arity(result, 3)?;
    let (w0, w1, w2) = (result.indices[0], result.indices[1], result.indices[2]);
    match scenario {
        Scenario::First => to_sequence(cb.y1(w0, w1)?, cb.alphabets[1]),
        Scenario::Second => to_sequence(cb.y2(w0, w2)?, cb.alphabets[2]),
        Scenario::Both => to_sequence(&cb.y12(w0, w1, w2)?, cb.alphabets[3]),
    }
}

/// Per-link rates once the common layer's `R0` nats ride on both links.
pub fn effective_rates(r0: f64, r1: f64, r2: f64) -> (f64, f64) {
    (r1 + r0, r2 + r0)
}
