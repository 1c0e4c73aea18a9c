//! Finite-alphabet probability tables and information measures.
//!
//! Alphabets are index sets `0..m`. Every joint table is stored flat in
//! row-major order (last axis fastest). All logarithms are natural, so
//! entropies and mutual informations come out in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of an input distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Slack used when comparing quantities that are equal in exact arithmetic.
pub const IDENTITY_TOL: f64 = 1e-12;

fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty table".into()));
    }
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidAxes("at least one axis is required".into()));
    }
    if let Some(pos) = shape.iter().position(|&s| s == 0) {
        return Err(Error::InvalidAxes(format!("axis {pos} has size 0")));
    }
    Ok(shape.iter().product())
}

/// Row-major strides for `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * shape[i + 1];
    }
    out
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy_of_probs(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// A distribution over a single finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probs(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidAxes("alphabet of size 0".into()));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn point_mass(size: usize, symbol: usize) -> Result<Self> {
        if symbol >= size {
            return Err(Error::SymbolOutOfRange {
                symbol,
                alphabet: size,
            });
        }
        let mut probs = vec![0.0; size];
        probs[symbol] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn size(&self) -> usize {
        self.probs.len()
    }

    pub fn entropy(&self) -> f64 {
        entropy_of_probs(&self.probs)
    }

    pub fn to_joint(&self) -> JointPmf {
        JointPmf {
            shape: vec![self.probs.len()],
            probs: self.probs.clone(),
        }
    }
}

/// A distribution over a tuple of finite alphabets; axis `i` is the i-th
/// variable of the tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct JointPmf {
    shape: Vec<usize>,
    probs: Vec<f64>,
}

/// JSON layout shared by [`Pmf`] and [`JointPmf`].
#[derive(Serialize, Deserialize)]
struct TableRepr {
    axes: Vec<usize>,
    probs: Vec<f64>,
}

impl TryFrom<TableRepr> for JointPmf {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        JointPmf::new(r.axes, r.probs)
    }
}

impl From<JointPmf> for TableRepr {
    fn from(p: JointPmf) -> Self {
        TableRepr {
            axes: p.shape,
            probs: p.probs,
        }
    }
}

impl TryFrom<TableRepr> for Pmf {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        if r.axes.len() != 1 || r.axes[0] != r.probs.len() {
            return Err(Error::ShapeMismatch(format!(
                "a pmf needs one axis matching {} entries, got axes {:?}",
                r.probs.len(),
                r.axes
            )));
        }
        Pmf::new(r.probs)
    }
}

impl From<Pmf> for TableRepr {
    fn from(p: Pmf) -> Self {
        TableRepr {
            axes: vec![p.probs.len()],
            probs: p.probs,
        }
    }
}

impl JointPmf {
    pub fn new(shape: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let cells = check_shape(&shape)?;
        if cells != probs.len() {
            return Err(Error::ShapeMismatch(format!(
                "axes {shape:?} need {cells} entries, got {}",
                probs.len()
            )));
        }
        check_probs(&probs)?;
        Ok(Self { shape, probs })
    }

    /// Builds a table from nonnegative weights, dividing by their total.
    pub fn from_weights(shape: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        Self::new(shape, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.probs[self.flat_index(index)]
    }

    /// Smallest strictly positive entry.
    pub fn min_positive(&self) -> Option<f64> {
        self.probs
            .iter()
            .copied()
            .filter(|&p| p > 0.0)
            .min_by(f64::total_cmp)
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.ndim()];
        for &a in axes {
            if a >= self.ndim() {
                return Err(Error::InvalidAxes(format!(
                    "axis {a} out of range for {} axes",
                    self.ndim()
                )));
            }
            if seen[a] {
                return Err(Error::InvalidAxes(format!("axis {a} listed twice")));
            }
            seen[a] = true;
        }
        Ok(())
    }

    /// Sums out every axis not in `keep`. The result's axes follow the order
    /// given in `keep`.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        self.check_axes(keep)?;
        if keep.is_empty() {
            return Err(Error::InvalidAxes("cannot marginalize onto no axes".into()));
        }
        let shape: Vec<usize> = keep.iter().map(|&a| self.shape[a]).collect();
        let out_strides = strides(&shape);
        let mut probs = vec![0.0; shape.iter().product()];
        let mut index = vec![0usize; self.ndim()];
        for &p in &self.probs {
            let target: usize = keep
                .iter()
                .zip(&out_strides)
                .map(|(&a, &s)| index[a] * s)
                .sum();
            probs[target] += p;
            increment(&mut index, &self.shape);
        }
        Ok(JointPmf { shape, probs })
    }

    /// Conditional distribution of the remaining axes (in their original
    /// order) given the axes in `given` (in the order listed).
    pub fn condition(&self, given: &[usize]) -> Result<ConditionalPmf> {
        self.check_axes(given)?;
        let rest: Vec<usize> = (0..self.ndim()).filter(|a| !given.contains(a)).collect();
        if given.is_empty() || rest.is_empty() {
            return Err(Error::InvalidAxes(
                "conditioning needs a nonempty given set and a nonempty remainder".into(),
            ));
        }
        let mut order = given.to_vec();
        order.extend_from_slice(&rest);
        let permuted = self.marginalize(&order)?;
        let given_shape: Vec<usize> = given.iter().map(|&a| self.shape[a]).collect();
        let target_shape: Vec<usize> = rest.iter().map(|&a| self.shape[a]).collect();
        let row_len: usize = target_shape.iter().product();
        let mut table = permuted.probs;
        let mut defined = Vec::with_capacity(table.len() / row_len);
        for row in table.chunks_mut(row_len) {
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                row.iter_mut().for_each(|p| *p /= mass);
                defined.push(true);
            } else {
                defined.push(false);
            }
        }
        Ok(ConditionalPmf {
            given_shape,
            target_shape,
            table,
            defined,
        })
    }

    /// Entropy of the whole table, in nats.
    pub fn entropy(&self) -> f64 {
        entropy_of_probs(&self.probs)
    }

    /// Joint entropy of a subset of axes.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        if axes.is_empty() {
            self.check_axes(axes)?;
            return Ok(0.0);
        }
        Ok(self.marginalize(axes)?.entropy())
    }

    /// `H(rest | given)` where `rest` is every axis outside `given`.
    pub fn conditional_entropy(&self, given: &[usize]) -> Result<f64> {
        self.check_axes(given)?;
        Ok(self.entropy() - self.entropy_of(given)?)
    }

    /// `H(of | given)` for disjoint axis groups.
    pub fn conditional_entropy_of(&self, of: &[usize], given: &[usize]) -> Result<f64> {
        let union = disjoint_union(&[of, given])?;
        Ok(self.entropy_of(&union)? - self.entropy_of(given)?)
    }

    /// `I(A; B) = H(A) + H(B) - H(A, B)` for disjoint, nonempty axis groups.
    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidAxes(
                "mutual information needs two nonempty axis groups".into(),
            ));
        }
        let union = disjoint_union(&[a, b])?;
        Ok(self.entropy_of(a)? + self.entropy_of(b)? - self.entropy_of(&union)?)
    }

    /// `I(A; B | C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)`.
    pub fn conditional_mutual_information(
        &self,
        a: &[usize],
        b: &[usize],
        given: &[usize],
    ) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidAxes(
                "mutual information needs two nonempty axis groups".into(),
            ));
        }
        let abc = disjoint_union(&[a, b, given])?;
        let ac = disjoint_union(&[a, given])?;
        let bc = disjoint_union(&[b, given])?;
        Ok(self.entropy_of(&ac)? + self.entropy_of(&bc)?
            - self.entropy_of(&abc)?
            - self.entropy_of(given)?)
    }
}

fn disjoint_union(groups: &[&[usize]]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::new();
    for g in groups {
        for &a in g.iter() {
            if out.contains(&a) {
                return Err(Error::InvalidAxes(format!(
                    "axis {a} appears in more than one group"
                )));
            }
            out.push(a);
        }
    }
    Ok(out)
}

/// Odometer increment of a multi-index, last axis fastest.
pub(crate) fn increment(index: &mut [usize], shape: &[usize]) {
    for i in (0..shape.len()).rev() {
        index[i] += 1;
        if index[i] < shape[i] {
            return;
        }
        index[i] = 0;
    }
}

/// Rows of distributions over `target_shape`, one per joint symbol of the
/// conditioning variables. Rows obtained by conditioning on zero mass are
/// kept as explicit undefined rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConditionalRepr", into = "ConditionalRepr")]
pub struct ConditionalPmf {
    given_shape: Vec<usize>,
    target_shape: Vec<usize>,
    table: Vec<f64>,
    defined: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct ConditionalRepr {
    given: Vec<usize>,
    axes: Vec<usize>,
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    undefined_rows: Vec<usize>,
}

impl TryFrom<ConditionalRepr> for ConditionalPmf {
    type Error = Error;
    fn try_from(r: ConditionalRepr) -> Result<Self> {
        ConditionalPmf::with_undefined(r.given, r.axes, r.probs, &r.undefined_rows)
    }
}

impl From<ConditionalPmf> for ConditionalRepr {
    fn from(c: ConditionalPmf) -> Self {
        let undefined_rows = c
            .defined
            .iter()
            .enumerate()
            .filter(|(_, &d)| !d)
            .map(|(i, _)| i)
            .collect();
        ConditionalRepr {
            given: c.given_shape,
            axes: c.target_shape,
            probs: c.table,
            undefined_rows,
        }
    }
}

impl ConditionalPmf {
    /// Every row must be a valid distribution.
    pub fn new(given_shape: Vec<usize>, target_shape: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        Self::with_undefined(given_shape, target_shape, table, &[])
    }

    fn with_undefined(
        given_shape: Vec<usize>,
        target_shape: Vec<usize>,
        table: Vec<f64>,
        undefined: &[usize],
    ) -> Result<Self> {
        let rows = check_shape(&given_shape)?;
        let row_len = check_shape(&target_shape)?;
        if rows * row_len != table.len() {
            return Err(Error::ShapeMismatch(format!(
                "{rows} rows of {row_len} entries need {} values, got {}",
                rows * row_len,
                table.len()
            )));
        }
        let mut defined = vec![true; rows];
        for &u in undefined {
            if u >= rows {
                return Err(Error::InvalidAxes(format!("undefined row {u} out of range")));
            }
            defined[u] = false;
        }
        for (i, row) in table.chunks(row_len).enumerate() {
            if defined[i] {
                check_probs(row).map_err(|e| {
                    Error::InvalidDistribution(format!("row {i}: {e}"))
                })?;
            }
        }
        Ok(Self {
            given_shape,
            target_shape,
            table,
            defined,
        })
    }

    /// Single conditioning variable, rows given as nested vectors.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let row_len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != row_len) {
            return Err(Error::ShapeMismatch("rows of unequal length".into()));
        }
        let n = rows.len();
        Self::new(vec![n], vec![row_len], rows.concat())
    }

    /// Every row equal to `row`.
    pub fn constant_rows(given_shape: Vec<usize>, target_shape: Vec<usize>, row: &[f64]) -> Result<Self> {
        let rows: usize = check_shape(&given_shape)?;
        Self::new(given_shape, target_shape, row.repeat(rows))
    }

    pub fn given_shape(&self) -> &[usize] {
        &self.given_shape
    }

    pub fn target_shape(&self) -> &[usize] {
        &self.target_shape
    }

    pub fn n_rows(&self) -> usize {
        self.defined.len()
    }

    pub fn row_len(&self) -> usize {
        self.table.len() / self.defined.len()
    }

    /// Row `i`, or `None` when the row is undefined.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        if self.defined[i] {
            let l = self.row_len();
            Some(&self.table[i * l..(i + 1) * l])
        } else {
            None
        }
    }

    pub fn is_defined(&self, i: usize) -> bool {
        self.defined[i]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `p(given) * cond(target | given)` as a joint over `given ++ target`.
    pub fn compose_with(&self, p: &JointPmf) -> Result<JointPmf> {
        if p.shape() != self.given_shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "prior has axes {:?}, conditional expects {:?}",
                p.shape(),
                self.given_shape
            )));
        }
        let l = self.row_len();
        let mut probs = Vec::with_capacity(self.table.len());
        for (i, &w) in p.probs().iter().enumerate() {
            match self.row(i) {
                Some(row) => probs.extend(row.iter().map(|c| w * c)),
                None if w == 0.0 => probs.extend(std::iter::repeat(0.0).take(l)),
                None => return Err(Error::UndefinedConditional { row: i }),
            }
        }
        let mut shape = self.given_shape.clone();
        shape.extend_from_slice(&self.target_shape);
        JointPmf::new(shape, probs)
    }
}

/// `p0(x) * cond(y | x)`.
pub fn compose(p0: &Pmf, cond: &ConditionalPmf) -> Result<JointPmf> {
    cond.compose_with(&p0.to_joint())
}

/// `1/2 sum |p - q|` over identically shaped tables.
pub fn total_variation(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            p.shape(),
            q.shape()
        )));
    }
    let l1: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * l1).min(1.0))
}

/// Closed ball membership: `TV(p, q) <= delta` (with [`IDENTITY_TOL`] slack).
pub fn in_delta_neighborhood(p: &JointPmf, q: &JointPmf, delta: f64) -> Result<bool> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "neighborhood radius must be nonnegative, got {delta}"
        )));
    }
    Ok(total_variation(p, q)? <= delta + IDENTITY_TOL)
}

/// A length-n block of symbols from an alphabet of known size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolSequence {
    symbols: Vec<usize>,
    alphabet: usize,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&s) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::SymbolOutOfRange {
                symbol: s,
                alphabet,
            });
        }
        Ok(Self { symbols, alphabet })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Occurrence counts of every symbol tuple along a tuple of equal-length
/// sequences, flat in row-major order over the alphabets.
pub fn joint_counts(seqs: &[&SymbolSequence]) -> Result<(Vec<usize>, Vec<u32>)> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::InvalidAxes("no sequences given".into()))?;
    let n = first.len();
    for s in seqs {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: s.len(),
            });
        }
    }
    let shape: Vec<usize> = seqs.iter().map(|s| s.alphabet()).collect();
    let mut counts = vec![0u32; shape.iter().product()];
    for k in 0..n {
        let idx = seqs
            .iter()
            .fold(0, |acc, s| acc * s.alphabet() + s.symbols[k]);
        counts[idx] += 1;
    }
    Ok((shape, counts))
}

/// Empirical distribution of the symbol tuples along `seqs`.
pub fn joint_type_of(seqs: &[&SymbolSequence]) -> Result<JointPmf> {
    let (shape, counts) = joint_counts(seqs)?;
    let n = seqs[0].len() as f64;
    Ok(JointPmf {
        shape,
        probs: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

/// Joint type of a pair of sequences.
pub fn joint_type(xs: &SymbolSequence, ys: &SymbolSequence) -> Result<JointPmf> {
    joint_type_of(&[xs, ys])
}
