//! Hypercube covers of boxes and the joint state-pair dataset.
//!
//! A box is split per dimension into `⌈width/e⌉` cells of edge `e`; the last
//! cell of each dimension is shortened to end on the upper bound and its
//! center is the center of the shortened cell, so every point of the box is
//! within `e/2` (∞-norm) of the center of the cell containing it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxSet;
use crate::scalar::{dist_inf, Scalar};
use crate::system::SystemDef;

/// Relative tolerance under which `width / e` is treated as an integer.
const SNAP: f64 = 1e-9;

fn axis_count_f64(width: f64, e: f64) -> Result<u128> {
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::NonPositiveStep(e));
    }
    if width <= 0.0 {
        return Ok(1);
    }
    let r = width / e;
    let k = r.round();
    let c = if k >= 1.0 && (r - k).abs() <= SNAP * k.max(1.0) {
        k
    } else {
        r.ceil()
    };
    if c >= 1e30 {
        return Err(Error::CoverTooLarge {
            count: format!("{c:e} along one axis"),
        });
    }
    Ok(c as u128)
}

/// Cell counts per dimension of the cover of `bounds` with edge `e`.
pub fn axis_counts<T: Scalar>(bounds: &BoxSet<T>, e: f64) -> Result<Vec<u128>> {
    (0..bounds.dim())
        .map(|d| axis_count_f64(bounds.width(d).as_f64(), e))
        .collect()
}

/// Total number of cells, computed without building the cover.
pub fn cell_count<T: Scalar>(bounds: &BoxSet<T>, e: f64) -> Result<u128> {
    let counts = axis_counts(bounds, e)?;
    checked_product(&counts)
}

fn checked_product(counts: &[u128]) -> Result<u128> {
    counts.iter().try_fold(1u128, |acc, &c| {
        acc.checked_mul(c).ok_or_else(|| Error::CoverTooLarge {
            count: format!(
                "{:e}",
                counts.iter().map(|&c| c as f64).product::<f64>()
            ),
        })
    })
}

fn axis_center<T: Scalar>(lo: T, hi: T, e: T, count: usize, j: usize) -> T {
    if count == 1 && hi == lo {
        return lo;
    }
    let start = lo + e * T::from_usize(j).unwrap();
    let end = if j + 1 == count {
        hi
    } else {
        lo + e * T::from_usize(j + 1).unwrap()
    };
    (start + end) / T::lit(2.0)
}

/// Finite cover of a box by disjoint hypercubes, enumerated in row-major
/// (lexicographic, first dimension slowest) order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCover<T> {
    bounds: BoxSet<T>,
    e: T,
    counts: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl<T: Scalar> GridCover<T> {
    pub fn new(bounds: BoxSet<T>, e: T) -> Result<Self> {
        let counts128 = axis_counts(&bounds, e.as_f64())?;
        let total128 = checked_product(&counts128)?;
        let too_large = || Error::CoverTooLarge {
            count: total128.to_string(),
        };
        let total = usize::try_from(total128).map_err(|_| too_large())?;
        let counts: Vec<usize> = counts128
            .iter()
            .map(|&c| usize::try_from(c).map_err(|_| too_large()))
            .collect::<Result<_>>()?;
        let mut strides = vec![1usize; counts.len()];
        for d in (0..counts.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        Ok(Self {
            bounds,
            e,
            counts,
            strides,
            total,
        })
    }

    pub fn bounds(&self) -> &BoxSet<T> {
        &self.bounds
    }

    pub fn edge(&self) -> T {
        self.e
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Number of cells `M`.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        self.counts
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| (i / s) % c)
            .collect()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(&j, &s)| j * s).sum()
    }

    /// Linear index of the neighbor one cell up along `dim`, if any.
    pub fn step_up(&self, i: usize, dim: usize) -> Option<usize> {
        let j = (i / self.strides[dim]) % self.counts[dim];
        (j + 1 < self.counts[dim]).then(|| i + self.strides[dim])
    }

    pub fn center_into(&self, i: usize, out: &mut [T]) {
        debug_assert!(i < self.total);
        for d in 0..self.dim() {
            let j = (i / self.strides[d]) % self.counts[d];
            out[d] = axis_center(self.bounds.lo[d], self.bounds.hi[d], self.e, self.counts[d], j);
        }
    }

    /// Center `t_i` of cell `i`.
    pub fn center(&self, i: usize) -> Vec<T> {
        let mut c = vec![T::zero(); self.dim()];
        self.center_into(i, &mut c);
        c
    }

    /// Streaming enumeration of all centers.
    pub fn centers(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        (0..self.total).map(move |i| self.center(i))
    }

    /// Cell containing `t` and its center. Points on an upper bound belong to
    /// the last cell of that dimension.
    pub fn nearest_center(&self, t: &[T]) -> Result<(usize, Vec<T>)> {
        if t.len() != self.dim() {
            return Err(Error::Dimension {
                context: "nearest_center".into(),
                expected: self.dim(),
                found: t.len(),
            });
        }
        let mut idx = 0usize;
        for d in 0..self.dim() {
            let (lo, hi) = (self.bounds.lo[d], self.bounds.hi[d]);
            if !(t[d] >= lo && t[d] <= hi) {
                return Err(Error::OutsideBox {
                    dim: d,
                    value: t[d].as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
            let raw = ((t[d] - lo) / self.e).floor().to_usize().unwrap_or(0);
            idx += raw.min(self.counts[d] - 1) * self.strides[d];
        }
        Ok((idx, self.center(idx)))
    }
}

/// Parameters of the dataset construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    /// Output closeness `ε`.
    pub epsilon: f64,
    /// State discretization `𝔢`.
    pub e: f64,
    /// Source input discretization `𝔢̂`.
    pub e_hat: f64,
    /// Extra slack added to `ε` in the pair filter (0 = exact filter).
    #[serde(default)]
    pub filter_slack: f64,
}

/// Output-cached product grid over `X × X̂`; enumerates the filtered pairs
/// lazily.
pub struct JointGrid<T> {
    pub target_cover: GridCover<T>,
    pub source_cover: GridCover<T>,
    target_outputs: Vec<T>,
    source_outputs: Vec<T>,
    l: usize,
    threshold: T,
}

fn outputs_of<T: Scalar>(sys: &SystemDef<T>, cover: &GridCover<T>) -> Vec<T> {
    let (n, l) = (sys.n(), sys.l());
    let mut out = vec![T::zero(); cover.len() * l];
    let mut c = vec![T::zero(); n];
    for i in 0..cover.len() {
        cover.center_into(i, &mut c);
        sys.output_into(&c, &mut out[i * l..(i + 1) * l]);
    }
    out
}

impl<T: Scalar> JointGrid<T> {
    pub fn new(target: &SystemDef<T>, source: &SystemDef<T>, params: &DatasetParams) -> Result<Self> {
        validate_params(target, source, params)?;
        let e = T::lit(params.e);
        let target_cover = GridCover::new(target.state_set.clone(), e)?;
        let source_cover = GridCover::new(source.state_set.clone(), e)?;
        let target_outputs = outputs_of(target, &target_cover);
        let source_outputs = outputs_of(source, &source_cover);
        Ok(Self {
            target_cover,
            source_cover,
            target_outputs,
            source_outputs,
            l: target.l(),
            threshold: T::lit(params.epsilon + params.filter_slack),
        })
    }

    pub fn target_output(&self, i: usize) -> &[T] {
        &self.target_outputs[i * self.l..(i + 1) * self.l]
    }

    pub fn source_output(&self, j: usize) -> &[T] {
        &self.source_outputs[j * self.l..(j + 1) * self.l]
    }

    /// `‖h(x_i) − ĥ(x̂_j)‖ ≤ ε`.
    pub fn passes(&self, i: usize, j: usize) -> bool {
        dist_inf(self.target_output(i), self.source_output(j)) <= self.threshold
    }

    /// Size of the unfiltered product grid.
    pub fn product_len(&self) -> u128 {
        self.target_cover.len() as u128 * self.source_cover.len() as u128
    }

    /// Filtered pairs `(target cell, source cell)` in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ms = self.source_cover.len();
        (0..self.target_cover.len())
            .flat_map(move |i| (0..ms).map(move |j| (i, j)))
            .filter(move |&(i, j)| self.passes(i, j))
    }
}

fn validate_params<T: Scalar>(target: &SystemDef<T>, source: &SystemDef<T>, p: &DatasetParams) -> Result<()> {
    if target.l() != source.l() {
        return Err(Error::Dimension {
            context: "output dimension of source vs target".into(),
            expected: target.l(),
            found: source.l(),
        });
    }
    if !(p.epsilon >= 0.0) || !p.epsilon.is_finite() {
        return Err(Error::invalid("epsilon", format!("must be >= 0, got {}", p.epsilon)));
    }
    if !(p.filter_slack >= 0.0) {
        return Err(Error::invalid("filter_slack", "must be >= 0"));
    }
    if !(p.e > 0.0) {
        return Err(Error::NonPositiveStep(p.e));
    }
    if !(p.e_hat > 0.0) {
        return Err(Error::NonPositiveStep(p.e_hat));
    }
    Ok(())
}

/// The finite training/certification data: `T_d`, `Û_d`, `X₀ᵈ`, `X̂₀ᵈ`,
/// plus source-side successors, which never depend on the networks.
pub struct JointDataset<T> {
    pub params: DatasetParams,
    pub grid: JointGrid<T>,
    /// `T_d` as `(target cell, source cell)` index pairs, lexicographic.
    pub pairs: Vec<(u32, u32)>,
    /// `Û_d`.
    pub inputs: GridCover<T>,
    /// `X₀ᵈ`, grid over the under-approximation of `X₀`.
    pub initial: GridCover<T>,
    /// `X̂₀ᵈ`, grid over the over-approximation of `X̂₀`.
    pub initial_hat: GridCover<T>,
    /// For each `X̂₀ᵈ` cell, the `X₀ᵈ` cells admissible as initial witnesses.
    pub init_candidates: Vec<Vec<u32>>,
    source_next_state: Vec<T>,
    source_next_output: Vec<T>,
    n: usize,
    n_hat: usize,
    m: usize,
    m_hat: usize,
    l: usize,
}

/// Box `X₀ᵘⁿᵈᵉʳ ⊆ X₀`; boxes are represented exactly.
pub fn under_approximation<T: Scalar>(set: &BoxSet<T>) -> BoxSet<T> {
    set.clone()
}

/// Box `X̂₀ᵒᵛᵉʳ ⊇ X̂₀`; boxes are represented exactly.
pub fn over_approximation<T: Scalar>(set: &BoxSet<T>) -> BoxSet<T> {
    set.clone()
}

impl<T: Scalar> JointDataset<T> {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn n_hat(&self) -> usize {
        self.n_hat
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn m_hat(&self) -> usize {
        self.m_hat
    }
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Target and source centers of pair `p`, written into `x` and `x_hat`.
    pub fn pair_into(&self, p: usize, x: &mut [T], x_hat: &mut [T]) {
        let (i, j) = self.pairs[p];
        self.grid.target_cover.center_into(i as usize, x);
        self.grid.source_cover.center_into(j as usize, x_hat);
    }

    /// `(x, x̂)` concatenated, the input layout of `V`.
    pub fn pair_input(&self, p: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.n + self.n_hat];
        let (a, b) = v.split_at_mut(self.n);
        self.pair_into(p, a, b);
        v
    }

    pub fn input(&self, k: usize) -> Vec<T> {
        self.inputs.center(k)
    }

    /// `f̂(x̂_j, û_k)` for source cell `j` and input cell `k`.
    pub fn source_next_state(&self, j: usize, k: usize) -> &[T] {
        let o = (j * self.inputs.len() + k) * self.n_hat;
        &self.source_next_state[o..o + self.n_hat]
    }

    /// `ĥ(f̂(x̂_j, û_k))`.
    pub fn source_next_output(&self, j: usize, k: usize) -> &[T] {
        let o = (j * self.inputs.len() + k) * self.l;
        &self.source_next_output[o..o + self.l]
    }

    /// Index in `T_d` of the cell pair `(i, j)`, if it passed the filter.
    pub fn find_pair(&self, i: usize, j: usize) -> Option<usize> {
        self.pairs.binary_search(&(i as u32, j as u32)).ok()
    }

    /// Indices of `T_d` pairs adjacent (one cell apart along one axis of
    /// the product grid) to pair `p`, looking only upward.
    pub fn upper_neighbors(&self, p: usize) -> Vec<usize> {
        let (i, j) = self.pairs[p];
        let (i, j) = (i as usize, j as usize);
        let mut out = Vec::new();
        for d in 0..self.grid.target_cover.dim() {
            if let Some(ni) = self.grid.target_cover.step_up(i, d) {
                out.extend(self.find_pair(ni, j));
            }
        }
        for d in 0..self.grid.source_cover.dim() {
            if let Some(nj) = self.grid.source_cover.step_up(j, d) {
                out.extend(self.find_pair(i, nj));
            }
        }
        out
    }
}

/// Builds `T_d` (filtered product grid of `X × X̂`), `Û_d`, `X₀ᵈ`, `X̂₀ᵈ`.
///
/// Initial witnesses for a source cell `x̂₀` are the target cells `x₀` with
/// `‖h(x₀) − ĥ(x̂₀)‖ ≤ ε − L_ĥ·𝔢/2`, so that pairing `x₀` with any source
/// state in the cell of `x̂₀` stays output-`ε`-close.
pub fn build_joint_dataset<T: Scalar>(
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    params: &DatasetParams,
) -> Result<JointDataset<T>> {
    let grid = JointGrid::new(target, source, params)?;
    if grid.target_cover.len() > u32::MAX as usize || grid.source_cover.len() > u32::MAX as usize {
        return Err(Error::CoverTooLarge {
            count: grid.product_len().to_string(),
        });
    }
    let pairs: Vec<(u32, u32)> = grid.pairs().map(|(i, j)| (i as u32, j as u32)).collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let e = T::lit(params.e);
    let inputs = GridCover::new(source.input_set.clone(), T::lit(params.e_hat))?;
    let initial = GridCover::new(under_approximation(&target.initial_set), e)?;
    let initial_hat = GridCover::new(over_approximation(&source.initial_set), e)?;

    let witness_radius = T::lit(params.epsilon - source.lipschitz.output * params.e / 2.0);
    let init_out = outputs_of(target, &initial);
    let init_hat_out = outputs_of(source, &initial_hat);
    let l = target.l();
    let init_candidates = (0..initial_hat.len())
        .map(|b| {
            let yb = &init_hat_out[b * l..(b + 1) * l];
            (0..initial.len())
                .filter(|&a| dist_inf(&init_out[a * l..(a + 1) * l], yb) <= witness_radius)
                .map(|a| a as u32)
                .collect()
        })
        .collect();

    let (n_hat, nu) = (source.n(), inputs.len());
    let mut source_next_state = vec![T::zero(); grid.source_cover.len() * nu * n_hat];
    let mut source_next_output = vec![T::zero(); grid.source_cover.len() * nu * l];
    let mut xh = vec![T::zero(); n_hat];
    let mut uh = vec![T::zero(); source.m()];
    for j in 0..grid.source_cover.len() {
        grid.source_cover.center_into(j, &mut xh);
        for k in 0..nu {
            inputs.center_into(k, &mut uh);
            let o = (j * nu + k) * n_hat;
            source.step_into(&xh, &uh, &mut source_next_state[o..o + n_hat]);
            let oy = (j * nu + k) * l;
            let (ns, ny) = (
                &source_next_state[o..o + n_hat],
                &mut source_next_output[oy..oy + l],
            );
            source.output_into(ns, ny);
        }
    }

    Ok(JointDataset {
        params: *params,
        grid,
        pairs,
        inputs,
        initial,
        initial_hat,
        init_candidates,
        source_next_state,
        source_next_output,
        n: target.n(),
        n_hat,
        m: target.m(),
        m_hat: source.m(),
        l,
    })
}

/// Analytic size of `T_d` for systems whose outputs are coordinate
/// projections, computed without enumerating the product grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCount {
    /// `|cover(X)| · |cover(X̂)|`.
    pub unfiltered: u128,
    /// Pairs passing `‖h(x) − ĥ(x̂)‖ ≤ ε`.
    pub filtered: u128,
    /// Cells of the observed (output) coordinates of the target alone.
    pub target_output_cells: u128,
}

fn axis_centers(lo: f64, hi: f64, e: f64) -> Result<Vec<f64>> {
    let c = axis_count_f64(hi - lo, e)?;
    let c = usize::try_from(c).map_err(|_| Error::CoverTooLarge { count: c.to_string() })?;
    Ok((0..c).map(|j| axis_center(lo, hi, e, c, j)).collect())
}

/// Counts `(a, b)` with `|a − b| ≤ eps` for sorted `a`, `b`.
fn close_pairs(a: &[f64], b: &[f64], eps: f64) -> u128 {
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut total = 0u128;
    for &x in a {
        while lo < b.len() && b[lo] < x - eps {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < b.len() && b[hi] <= x + eps {
            hi += 1;
        }
        total += (hi - lo) as u128;
    }
    total
}

pub fn analytic_pair_count<T: Scalar>(
    target: &SystemDef<T>,
    source: &SystemDef<T>,
    e: f64,
    epsilon: f64,
) -> Result<PairCount> {
    let (pt, ps) = match (&target.output_projection, &source.output_projection) {
        (Some(a), Some(b)) if a.len() == b.len() => (a, b),
        _ => {
            return Err(Error::invalid(
                "analytic_pair_count",
                "both systems need coordinate-projection outputs of equal dimension",
            ))
        }
    };
    let tc = axis_counts(&target.state_set, e)?;
    let sc = axis_counts(&source.state_set, e)?;
    let unfiltered = checked_product(&[checked_product(&tc)?, checked_product(&sc)?])?;

    let xs = target.state_set.to_f64();
    let xhs = source.state_set.to_f64();
    let mut factors = Vec::new();
    let mut observed = Vec::new();
    for (&a, &b) in pt.iter().zip(ps) {
        let ca = axis_centers(xs.lo[a], xs.hi[a], e)?;
        let cb = axis_centers(xhs.lo[b], xhs.hi[b], e)?;
        factors.push(close_pairs(&ca, &cb, epsilon));
        observed.push(tc[a]);
    }
    for (d, &c) in tc.iter().enumerate() {
        if !pt.contains(&d) {
            factors.push(c);
        }
    }
    for (d, &c) in sc.iter().enumerate() {
        if !ps.contains(&d) {
            factors.push(c);
        }
    }
    Ok(PairCount {
        unfiltered,
        filtered: checked_product(&factors)?,
        target_output_cells: checked_product(&observed)?,
    })
}
