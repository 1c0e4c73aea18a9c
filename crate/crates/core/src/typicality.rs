//! Strong typicality membership and the closed-form typicality bounds.
//!
//! A tuple of sequences is strongly `eps`-typical for a table `p` when every
//! cell of its joint type is within `eps / (product of alphabet sizes)` of `p`
//! (strictly) and the type puts no mass where `p` is zero. Tuples of any
//! arity use the same rule with the product over all of their alphabets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{joint_counts, JointPmf, SymbolSequence};

/// Typicality slack and blocklength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub epsilon: f64,
    pub n: usize,
}

impl TypicalityParams {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("blocklength must be >= 1".into()));
        }
        Ok(Self { epsilon, n })
    }
}

/// A two-sided bound. `trivial` is set when neither side says anything beyond
/// the natural range of the bounded quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lower: f64,
    pub upper: f64,
    pub trivial: bool,
}

impl BoundReport {
    /// `floor..=ceil` is the range the bounded quantity can take anyway.
    pub fn new(lower: f64, upper: f64, floor: f64, ceil: f64) -> Self {
        Self {
            lower,
            upper,
            trivial: lower <= floor && upper >= ceil,
        }
    }

    pub fn lower_informative(&self, floor: f64) -> bool {
        self.lower > floor
    }

    pub fn upper_informative(&self, ceil: f64) -> bool {
        self.upper < ceil
    }

    /// `lower <= value <= upper` up to a relative slack for rounding.
    pub fn contains(&self, value: f64, rel_tol: f64) -> bool {
        value >= self.lower - rel_tol * self.lower.abs()
            && value <= self.upper + rel_tol * self.upper.abs()
    }
}

/// `-eps * ln(p_min)` with `p_min` the smallest positive entry of `p`.
pub fn eps_m(p: &JointPmf, epsilon: f64) -> Result<f64> {
    let p_min = p
        .min_positive()
        .ok_or_else(|| Error::InvalidDistribution("no positive entry".into()))?;
    // ln(1) = 0 exactly, keep the sign clean
    Ok((-epsilon * p_min.ln()).max(0.0))
}

/// `(n+1)^c * exp(-n eps^2 / (2 c^2))` with `c` the product of the alphabet
/// sizes. May exceed 1, in which case every bound built on it is vacuous.
pub fn delta_t(n: usize, epsilon: f64, alphabet_sizes: &[usize]) -> f64 {
    let cells: f64 = alphabet_sizes.iter().map(|&s| s as f64).product();
    let n = n as f64;
    (cells * (n + 1.0).ln() - n * epsilon * epsilon / (2.0 * cells * cells)).exp()
}

/// Per-cell deviation threshold for a table with this shape.
pub fn typicality_threshold(epsilon: f64, shape: &[usize]) -> f64 {
    epsilon / shape.iter().map(|&s| s as f64).product::<f64>()
}

/// Membership test on raw counts: `|count/n - p| < threshold` everywhere and
/// zero counts wherever `p` is zero.
pub(crate) fn counts_typical(counts: &[u32], n: usize, probs: &[f64], threshold: f64) -> bool {
    let n = n as f64;
    counts.iter().zip(probs).all(|(&c, &p)| {
        if p == 0.0 {
            c == 0
        } else {
            (c as f64 / n - p).abs() < threshold
        }
    })
}

fn check_alphabets(seqs: &[&SymbolSequence], p: &JointPmf) -> Result<()> {
    let shape: Vec<usize> = seqs.iter().map(|s| s.alphabet()).collect();
    if shape != p.shape() {
        return Err(Error::ShapeMismatch(format!(
            "sequence alphabets {shape:?} vs table axes {:?}",
            p.shape()
        )));
    }
    Ok(())
}

/// Whether the tuple `seqs` lies in the strongly `epsilon`-typical set of `p`.
pub fn is_strongly_typical(seqs: &[&SymbolSequence], p: &JointPmf, epsilon: f64) -> Result<bool> {
    check_alphabets(seqs, p)?;
    let (_, counts) = joint_counts(seqs)?;
    Ok(counts_typical(
        &counts,
        seqs[0].len(),
        p.probs(),
        typicality_threshold(epsilon, p.shape()),
    ))
}

/// Whether `ys` lies in the conditionally typical set of `p` given `xs`. The
/// leading axes of `p` belong to `xs`, the trailing ones to `ys`. Requires
/// `xs` itself to be typical for the marginal of `p` on its axes.
pub fn is_conditionally_typical(
    ys: &[&SymbolSequence],
    xs: &[&SymbolSequence],
    p: &JointPmf,
    epsilon: f64,
) -> Result<bool> {
    let mut all: Vec<&SymbolSequence> = xs.to_vec();
    all.extend_from_slice(ys);
    check_alphabets(&all, p)?;
    let x_axes: Vec<usize> = (0..xs.len()).collect();
    let px = p.marginalize(&x_axes)?;
    if !is_strongly_typical(xs, &px, epsilon)? {
        return Ok(false);
    }
    is_strongly_typical(&all, p, epsilon)
}

/// Bounds on the probability of the typical set and on the probability of
/// any single typical sequence under the i.i.d. law `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaReport {
    pub typical_set_probability: BoundReport,
    pub sequence_probability: BoundReport,
    pub eps_m: f64,
    pub delta_t: f64,
}

pub fn lemma_ta_bounds(p: &JointPmf, params: TypicalityParams) -> Result<TaReport> {
    let n = params.n as f64;
    let em = eps_m(p, params.epsilon)?;
    let dt = delta_t(params.n, params.epsilon, p.shape());
    let h = p.entropy();
    Ok(TaReport {
        typical_set_probability: BoundReport::new(1.0 - dt, 1.0, 0.0, 1.0),
        sequence_probability: BoundReport::new(
            (-n * (h + em)).exp(),
            (-n * (h - em)).exp(),
            0.0,
            1.0,
        ),
        eps_m: em,
        delta_t: dt,
    })
}

/// Bounds for the conditionally typical set given a fixed conditioning tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TbReport {
    /// Window on `p^n(y | x)` for each conditionally typical `y`.
    pub conditional_probability: BoundReport,
    /// Window on the number of conditionally typical `y`.
    pub set_size: BoundReport,
    /// Whether `x` met the reduced-slack condition the lower size bound needs.
    pub lower_applies: bool,
}

/// The leading `xs.len()` axes of `p` are the conditioning variables.
pub fn lemma_tb_size_bounds(
    p: &JointPmf,
    xs: &[&SymbolSequence],
    params: TypicalityParams,
) -> Result<TbReport> {
    let k = xs.len();
    if k == 0 || k >= p.ndim() {
        return Err(Error::InvalidAxes(format!(
            "{k} conditioning sequences for a table with {} axes",
            p.ndim()
        )));
    }
    let x_axes: Vec<usize> = (0..k).collect();
    let px = p.marginalize(&x_axes)?;
    check_alphabets(xs, &px)?;
    if xs[0].len() != params.n {
        return Err(Error::LengthMismatch {
            left: xs[0].len(),
            right: params.n,
        });
    }
    let n = params.n as f64;
    let y_cells: f64 = p.shape()[k..].iter().map(|&s| s as f64).product();
    let em = eps_m(p, params.epsilon)?;
    let h = p.conditional_entropy(&x_axes)?;
    let lower_applies = is_strongly_typical(xs, &px, params.epsilon / (2.0 * y_cells))?;
    let upper = (n * (h + em)).exp();
    let lower = if lower_applies {
        (1.0 - delta_t(params.n, params.epsilon / 2.0, p.shape())) * (n * (h - em)).exp()
    } else {
        0.0
    };
    Ok(TbReport {
        conditional_probability: BoundReport::new(
            (-n * (h + em)).exp(),
            (-n * (h - em)).exp(),
            0.0,
            1.0,
        ),
        set_size: BoundReport::new(lower, upper, 0.0, y_cells.powf(n)),
        lower_applies,
    })
}

/// Probability that independently drawn components land in the typical set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcReport {
    /// `(x, y)` drawn i.i.d. from `p_X p_Y`.
    pub independent_pair: BoundReport,
    /// `y` drawn i.i.d. from `p_Y` against a fixed `x`. The lower side holds
    /// only when `x` is typical at `eps / (2 |Y|)`.
    pub conditional: BoundReport,
    pub eps2: f64,
    pub eps3: f64,
}

/// The leading `x_axes` axes of `p` form X, the rest form Y.
pub fn lemma_tc_prob_bounds(p: &JointPmf, x_axes: usize, params: TypicalityParams) -> Result<TcReport> {
    if x_axes == 0 || x_axes >= p.ndim() {
        return Err(Error::InvalidAxes(format!(
            "split {x_axes} for a table with {} axes",
            p.ndim()
        )));
    }
    let xa: Vec<usize> = (0..x_axes).collect();
    let ya: Vec<usize> = (x_axes..p.ndim()).collect();
    let eps = params.epsilon;
    let n = params.n as f64;
    let em_xy = eps_m(p, eps)?;
    let em_x = eps_m(&p.marginalize(&xa)?, eps)?;
    let em_y = eps_m(&p.marginalize(&ya)?, eps)?;
    let eps2 = em_xy + em_x + em_y;
    let eps3 = em_xy + em_y;
    let mi = p.mutual_information(&xa, &ya)?;
    let dt = delta_t(params.n, eps, p.shape());
    let dt_half = delta_t(params.n, eps / 2.0, p.shape());
    Ok(TcReport {
        independent_pair: BoundReport::new(
            (1.0 - dt) * (-n * (mi + eps2)).exp(),
            (-n * (mi - eps2)).exp(),
            0.0,
            1.0,
        ),
        conditional: BoundReport::new(
            (1.0 - dt_half) * (-n * (mi + eps3)).exp(),
            (-n * (mi - eps3)).exp(),
            0.0,
            1.0,
        ),
        eps2,
        eps3,
    })
}
