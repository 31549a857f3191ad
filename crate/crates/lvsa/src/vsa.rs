//! Complex-vector symbolic algebra.
//!
//! Entities, relations, and query nodes all live in `ℂ^d`. The crate carries
//! complex vectors in two interchangeable layouts:
//!
//! - [`ComplexVec`], explicit `re`/`im` arrays — the public algebra type;
//! - "stacked" `[re₀..re_{d−1}, im₀..im_{d−1}]` single `Vec<f64>` slices of
//!   length `2d` — the layout used by tables, the tape, and the MLPs.
//!
//! Both layouts dispatch to the same kernels, so results are bit-identical.
//!
//! Operations:
//!
//! - `bind` — componentwise complex (Hadamard) product; relation application.
//! - `conjugate` — the approximate inverse under binding.
//! - [`norm_add`] — magnitude-preserving bundling: the componentwise mean,
//!   rescaled so the output's mean-absolute-component norm equals the mean of
//!   the inputs' norms. Collapses to the zero vector when the mean's norm
//!   falls below [`NORM_EPS`] (exactly opposing inputs).
//! - `herm_score` — the real part of the Hermitian inner product
//!   `Re⟨q, e̅⟩ = Re(q)·Re(e) + Im(q)·Im(e)`, which equals the plain dot
//!   product of the stacked layouts.

use rand::Rng;

use crate::error::{Error, Result};

/// Bundling collapse threshold: if the bundled mean's mean-absolute-component
/// norm is at or below this, `norm_add` returns the zero vector.
pub const NORM_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Stacked-slice kernels
// ---------------------------------------------------------------------------

/// Mean absolute component: the magnitude measure `L(v) = (1/n)Σ|v_m|`.
pub fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// Sign with `sign(0) = 0` (the subgradient convention used by the backward
/// pass; `f64::signum` maps ±0 to ±1 and is not what we want).
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_same_len(a: &[f64], b: &[f64], op: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{op}: operand lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() || a.len() % 2 != 0 {
        return Err(Error::Dimension(format!(
            "{op}: stacked complex vectors need a positive even length, got {}",
            a.len()
        )));
    }
    Ok(())
}

/// Complex Hadamard product on stacked slices:
/// `out.re = a.re⊙b.re − a.im⊙b.im`, `out.im = a.re⊙b.im + a.im⊙b.re`.
pub fn bind_stacked(a: &[f64], b: &[f64], out: &mut [f64]) {
    let d = a.len() / 2;
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), out.len());
    for m in 0..d {
        let (ar, ai) = (a[m], a[d + m]);
        let (br, bi) = (b[m], b[d + m]);
        out[m] = ar * br - ai * bi;
        out[d + m] = ar * bi + ai * br;
    }
}

/// Complex conjugate on a stacked slice: negates the imaginary half.
pub fn conjugate_stacked(a: &[f64]) -> Vec<f64> {
    let d = a.len() / 2;
    let mut out = a.to_vec();
    for x in &mut out[d..] {
        *x = -*x;
    }
    out
}

/// Plain dot product; on stacked complex layouts this *is* the Hermitian
/// score `Re(q)·Re(e) + Im(q)·Im(e)`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Canonical summation order for bundling: input indices sorted by the
/// lexicographic `total_cmp` order of their contents. Makes `norm_add`
/// *bitwise* permutation-invariant — floating-point summation is
/// order-sensitive, so a fixed content-derived order is required, not just
/// a fixed argument order.
fn canonical_order(inputs: &[&[f64]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..inputs.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (inputs[i], inputs[j]);
        for m in 0..a.len() {
            match a[m].total_cmp(&b[m]) {
                core::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        core::cmp::Ordering::Equal
    });
    idx
}

/// Intermediate quantities of a bundle; shared by forward and backward.
pub(crate) struct NormAddParts {
    /// Componentwise mean of the inputs (canonical summation order).
    pub mean: Vec<f64>,
    /// Mean of the inputs' mean-absolute-component norms.
    pub l_in: f64,
    /// Mean-absolute-component norm of `mean`.
    pub l_bar: f64,
}

pub(crate) fn norm_add_parts(inputs: &[&[f64]]) -> Result<NormAddParts> {
    if inputs.is_empty() {
        return Err(Error::Dimension("norm_add: empty input list".into()));
    }
    let s = inputs[0].len();
    for v in inputs {
        check_same_len(inputs[0], v, "norm_add")?;
    }
    let n = inputs.len() as f64;
    let order = canonical_order(inputs);
    let mut mean = vec![0.0; s];
    let mut l_sum = 0.0;
    for &j in &order {
        let v = inputs[j];
        for m in 0..s {
            mean[m] += v[m];
        }
        l_sum += mean_abs(v);
    }
    for m in &mut mean {
        *m /= n;
    }
    Ok(NormAddParts {
        l_bar: mean_abs(&mean),
        mean,
        l_in: l_sum / n,
    })
}

/// Magnitude-preserving bundle on stacked slices. All inputs must share one
/// length; the list must be non-empty.
pub fn norm_add_stacked(inputs: &[&[f64]]) -> Result<Vec<f64>> {
    let parts = norm_add_parts(inputs)?;
    let mut out = parts.mean;
    if parts.l_bar <= NORM_EPS {
        out.iter_mut().for_each(|x| *x = 0.0);
        return Ok(out);
    }
    let scale = parts.l_in / parts.l_bar;
    out.iter_mut().for_each(|x| *x *= scale);
    Ok(out)
}

// ---------------------------------------------------------------------------
// ComplexVec
// ---------------------------------------------------------------------------

/// A complex vector with explicit real and imaginary component arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVec {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::Dimension(format!(
                "ComplexVec: re length {} != im length {}",
                re.len(),
                im.len()
            )));
        }
        Ok(ComplexVec { re, im })
    }

    pub fn zeros(d: usize) -> Self {
        ComplexVec {
            re: vec![0.0; d],
            im: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    /// Stacked layout `[re…, im…]` of length `2d`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.re.len());
        v.extend_from_slice(&self.re);
        v.extend_from_slice(&self.im);
        v
    }

    pub fn from_stacked(v: &[f64]) -> Self {
        let d = v.len() / 2;
        debug_assert_eq!(v.len(), 2 * d, "stacked layout needs even length");
        ComplexVec {
            re: v[..d].to_vec(),
            im: v[d..].to_vec(),
        }
    }

    /// Componentwise complex product (relation application).
    pub fn bind(&self, other: &ComplexVec) -> Result<ComplexVec> {
        let a = self.stacked();
        let b = other.stacked();
        check_same_len(&a, &b, "bind")?;
        let mut out = vec![0.0; a.len()];
        bind_stacked(&a, &b, &mut out);
        Ok(ComplexVec::from_stacked(&out))
    }

    /// Componentwise conjugate; the approximate inverse under binding.
    pub fn conjugate(&self) -> ComplexVec {
        ComplexVec {
            re: self.re.clone(),
            im: self.im.iter().map(|x| -x).collect(),
        }
    }

    /// Real part of the Hermitian inner product with `other`.
    pub fn herm_score(&self, other: &ComplexVec) -> Result<f64> {
        let a = self.stacked();
        let b = other.stacked();
        check_same_len(&a, &b, "herm_score")?;
        Ok(dot(&a, &b))
    }

    /// Mean absolute component over the stacked layout (the bundling
    /// magnitude measure).
    pub fn magnitude(&self) -> f64 {
        mean_abs(&self.stacked())
    }
}

/// Magnitude-preserving bundle of complex vectors. See [`norm_add_stacked`].
pub fn norm_add(inputs: &[ComplexVec]) -> Result<ComplexVec> {
    let stacked: Vec<Vec<f64>> = inputs.iter().map(|v| v.stacked()).collect();
    let refs: Vec<&[f64]> = stacked.iter().map(|v| v.as_slice()).collect();
    Ok(ComplexVec::from_stacked(&norm_add_stacked(&refs)?))
}

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

/// A dense embedding matrix: `rows` stacked complex vectors of shared `d`,
/// stored contiguously (row-major, each row `[re…, im…]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    d: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, d: usize) -> Self {
        assert!(d >= 1, "embedding dimension must be positive");
        Table {
            d,
            data: vec![0.0; rows * 2 * d],
        }
    }

    /// Seeded init: components uniform in `[−1/√d, 1/√d]`.
    pub fn seeded_uniform(rows: usize, d: usize, rng: &mut impl Rng) -> Self {
        let mut t = Table::zeros(rows, d);
        let amp = 1.0 / (d as f64).sqrt();
        for x in &mut t.data {
            *x = rng.gen_range(-amp..=amp);
        }
        t
    }

    pub fn from_data(rows: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * 2 * d {
            return Err(Error::Dimension(format!(
                "table data length {} != rows {rows} × 2d {}",
                data.len(),
                2 * d
            )));
        }
        Ok(Table { d, data })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> usize {
        self.data.len() / (2 * self.d)
    }

    /// Stacked row view (length `2d`).
    pub fn row(&self, i: usize) -> &[f64] {
        let s = 2 * self.d;
        &self.data[i * s..(i + 1) * s]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let s = 2 * self.d;
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn complex_row(&self, i: usize) -> ComplexVec {
        ComplexVec::from_stacked(self.row(i))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Hermitian score of `q` against every row: one dense pass over the table.
/// Bit-identical to calling [`dot`] row by row (it *is* that loop, over
/// contiguous memory).
pub fn score_all(table: &Table, q: &[f64]) -> Result<Vec<f64>> {
    let s = 2 * table.d();
    if q.len() != s {
        return Err(Error::Dimension(format!(
            "score_all: query length {} != table row length {s}",
            q.len()
        )));
    }
    Ok((0..table.rows()).map(|i| dot(table.row(i), q)).collect())
}
