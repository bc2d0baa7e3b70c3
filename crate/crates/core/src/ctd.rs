//! Canonical tensor decompositions and their exact multilinear algebra.
//!
//! A [`Ctd`] stores a tensor of shape `M_1 x ... x M_d` as
//!
//! ```text
//! U(i_1, ..., i_d) = sum_l s_l * u_1^(l)[i_1] * ... * u_d^(l)[i_d]
//! ```
//!
//! with every factor column of unit Euclidean norm and every s-value strictly
//! positive. Signs live in the factor columns. The zero tensor has rank 0.
//! Nothing in this module approximates: all operations are exact up to
//! floating-point rounding.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default cap on the rank of a Hadamard product.
pub const DEFAULT_MAX_RANK: usize = 1 << 20;

/// Largest number of entries [`Ctd::to_dense`] will materialize.
pub const DENSE_ENTRY_LIMIT: u128 = 10_000_000;

/// Factor columns with a norm below this are treated as zero and their term dropped.
const DROP_NORM: f64 = 1e-300;

/// A position in a tensor, stored 0-based. Serialized and displayed 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>) -> Self {
        MultiIndex(indices)
    }

    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        indices
            .iter()
            .map(|&i| {
                i.checked_sub(1)
                    .ok_or_else(|| Error::InvalidInput("1-based index must be >= 1".into()))
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, ")")
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(deserializer)?;
        MultiIndex::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// A tensor in canonical (CP) format.
///
/// `factors[j]` is an `M_j x r` matrix whose column `l` is the unit vector
/// `u_j^(l)`. CTD values are immutable once built; every operation returns a
/// new value.
#[derive(Clone, Debug, PartialEq)]
pub struct Ctd {
    modes: Vec<usize>,
    svalues: Vec<f64>,
    factors: Vec<DMatrix<f64>>,
}

fn check_modes(modes: &[usize]) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::Shape("a CTD needs at least one dimension".into()));
    }
    if modes.contains(&0) {
        return Err(Error::Shape(format!("mode sizes must be positive, got {modes:?}")));
    }
    Ok(())
}

impl Ctd {
    /// The rank-0 tensor of the given shape.
    pub fn zero(modes: &[usize]) -> Result<Self> {
        check_modes(modes)?;
        Ok(Ctd {
            modes: modes.to_vec(),
            svalues: Vec::new(),
            factors: modes.iter().map(|&m| DMatrix::zeros(m, 0)).collect(),
        })
    }

    /// Builds a CTD from arbitrary (not necessarily normalized) parts and
    /// brings it into canonical form.
    pub fn from_parts(
        modes: Vec<usize>,
        svalues: Vec<f64>,
        factors: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        check_modes(&modes)?;
        if factors.len() != modes.len() {
            return Err(Error::Shape(format!(
                "{} factor matrices for {} dimensions",
                factors.len(),
                modes.len()
            )));
        }
        let r = svalues.len();
        for (j, (f, &m)) in factors.iter().zip(&modes).enumerate() {
            if f.nrows() != m || f.ncols() != r {
                return Err(Error::Shape(format!(
                    "factor {j} is {}x{}, expected {m}x{r}",
                    f.nrows(),
                    f.ncols()
                )));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("factor {j} has non-finite entries")));
            }
        }
        if svalues.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite s-value".into()));
        }
        Ok(Ctd { modes, svalues, factors }.renormalize())
    }

    /// Builds a CTD from a list of `(weight, [vector per dimension])` terms.
    pub fn from_terms(modes: &[usize], terms: &[(f64, Vec<Vec<f64>>)]) -> Result<Self> {
        check_modes(modes)?;
        let r = terms.len();
        let mut factors: Vec<DMatrix<f64>> = modes.iter().map(|&m| DMatrix::zeros(m, r)).collect();
        let mut svalues = Vec::with_capacity(r);
        for (l, (w, vecs)) in terms.iter().enumerate() {
            if vecs.len() != modes.len() {
                return Err(Error::Shape(format!("term {l} has {} vectors", vecs.len())));
            }
            for (j, v) in vecs.iter().enumerate() {
                if v.len() != modes[j] {
                    return Err(Error::Shape(format!(
                        "term {l}, dimension {j}: length {} != {}",
                        v.len(),
                        modes[j]
                    )));
                }
                factors[j].column_mut(l).copy_from_slice(v);
            }
            svalues.push(*w);
        }
        Ctd::from_parts(modes.to_vec(), svalues, factors)
    }

    /// Trusted constructor: parts are assumed to be canonical already.
    pub(crate) fn from_raw(modes: Vec<usize>, svalues: Vec<f64>, factors: Vec<DMatrix<f64>>) -> Self {
        debug_assert_eq!(modes.len(), factors.len());
        debug_assert!(factors.iter().all(|f| f.ncols() == svalues.len()));
        Ctd { modes, svalues, factors }
    }

    /// Rank-1 tensor with every entry equal to `value`.
    pub fn uniform(modes: &[usize], value: f64) -> Result<Self> {
        check_modes(modes)?;
        let factors = modes
            .iter()
            .map(|&m| DMatrix::from_element(m, 1, 1.0 / (m as f64).sqrt()))
            .collect();
        let scale: f64 = modes.iter().map(|&m| (m as f64).sqrt()).product();
        Ctd::from_parts(modes.to_vec(), vec![value * scale], factors)
    }

    /// Rank-1 tensor that is `magnitude` at `loc` and zero elsewhere.
    pub fn spike(modes: &[usize], loc: &MultiIndex, magnitude: f64) -> Result<Self> {
        check_modes(modes)?;
        check_index(modes, loc)?;
        let factors = modes
            .iter()
            .zip(loc.as_slice())
            .map(|(&m, &i)| {
                let mut f = DMatrix::zeros(m, 1);
                f[(i, 0)] = 1.0;
                f
            })
            .collect();
        Ctd::from_parts(modes.to_vec(), vec![magnitude], factors)
    }

    /// Factors drawn i.i.d. uniform on `[low, high]`, s-values 1, then normalized.
    pub fn random<R: Rng + ?Sized>(
        modes: &[usize],
        rank: usize,
        low: f64,
        high: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_modes(modes)?;
        if !(low <= high) {
            return Err(Error::InvalidInput(format!("empty sampling interval [{low}, {high}]")));
        }
        let factors = modes
            .iter()
            .map(|&m| DMatrix::from_fn(m, rank, |_, _| low + (high - low) * rng.random::<f64>()))
            .collect();
        Ctd::from_parts(modes.to_vec(), vec![1.0; rank], factors)
    }

    pub fn dims(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn rank(&self) -> usize {
        self.svalues.len()
    }

    pub fn is_zero(&self) -> bool {
        self.svalues.is_empty()
    }

    pub fn svalues(&self) -> &[f64] {
        &self.svalues
    }

    pub fn factor(&self, dim: usize) -> &DMatrix<f64> {
        &self.factors[dim]
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    /// Total number of entries, `prod_j M_j`.
    pub fn len(&self) -> u128 {
        self.modes.iter().map(|&m| m as u128).product()
    }

    fn check_same_shape(&self, other: &Ctd) -> Result<()> {
        if self.modes != other.modes {
            return Err(Error::Shape(format!("modes {:?} vs {:?}", self.modes, other.modes)));
        }
        Ok(())
    }

    /// `U(i_1, ..., i_d)`.
    pub fn eval(&self, index: &MultiIndex) -> Result<f64> {
        check_index(&self.modes, index)?;
        Ok(self.eval_unchecked(index.as_slice()))
    }

    pub(crate) fn eval_unchecked(&self, index: &[usize]) -> f64 {
        (0..self.rank())
            .map(|l| {
                self.factors
                    .iter()
                    .zip(index)
                    .fold(self.svalues[l], |acc, (f, &i)| acc * f[(i, l)])
            })
            .sum()
    }

    /// Term-by-term Gram matrix `G[l, l'] = s_l s'_l' prod_j <u_j^(l), v_j^(l')>`.
    pub fn cross_gram(&self, other: &Ctd) -> Result<DMatrix<f64>> {
        self.check_same_shape(other)?;
        let mut g = DMatrix::from_fn(self.rank(), other.rank(), |l, m| {
            self.svalues[l] * other.svalues[m]
        });
        for (fu, fv) in self.factors.iter().zip(&other.factors) {
            g.component_mul_assign(&gram(fu, fv));
        }
        Ok(g)
    }

    /// Per-dimension factor Gram matrices `U_j^T V_j`.
    pub(crate) fn factor_grams(&self, other: &Ctd) -> Vec<DMatrix<f64>> {
        self.factors.iter().zip(&other.factors).map(|(a, b)| gram(a, b)).collect()
    }

    /// `<U, V>`, computed in `O(r_u r_v sum_j M_j)`.
    pub fn inner(&self, other: &Ctd) -> Result<f64> {
        Ok(self.cross_gram(other)?.sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        let sq = self.inner(self).expect("same shape");
        sq.max(0.0).sqrt()
    }

    /// Entrywise product. Terms are ordered `l`-major over `l'`.
    pub fn hadamard(&self, other: &Ctd) -> Result<Ctd> {
        self.hadamard_with_limit(other, DEFAULT_MAX_RANK)
    }

    pub fn hadamard_with_limit(&self, other: &Ctd, max_rank: usize) -> Result<Ctd> {
        self.check_same_shape(other)?;
        let requested = self.rank().saturating_mul(other.rank());
        if requested > max_rank {
            return Err(Error::Capacity { requested, limit: max_rank });
        }
        let pairs: Vec<(usize, usize, f64)> = (0..self.rank())
            .flat_map(|l| (0..other.rank()).map(move |m| (l, m, 1.0)))
            .collect();
        Ok(self.pairwise_products(other, &pairs))
    }

    /// `U * U` with the symmetric pairs `(l, l')`, `(l', l)` merged into one
    /// term. Entrywise equal to `self.hadamard(self)` at roughly half the rank.
    pub fn hadamard_square(&self) -> Result<Ctd> {
        let r = self.rank();
        let requested = r * (r + 1) / 2;
        if requested > DEFAULT_MAX_RANK {
            return Err(Error::Capacity { requested, limit: DEFAULT_MAX_RANK });
        }
        let pairs: Vec<(usize, usize, f64)> = (0..r)
            .flat_map(|l| (l..r).map(move |m| (l, m, if l == m { 1.0 } else { 2.0 })))
            .collect();
        Ok(self.pairwise_products(self, &pairs))
    }

    fn pairwise_products(&self, other: &Ctd, pairs: &[(usize, usize, f64)]) -> Ctd {
        let d = self.dims();
        let mut svalues = Vec::with_capacity(pairs.len());
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(pairs.len() * 8); d];
        let mut scratch: Vec<DVector<f64>> = Vec::with_capacity(d);
        for &(l, m, mult) in pairs {
            scratch.clear();
            let mut s = mult * self.svalues[l] * other.svalues[m];
            let mut dropped = false;
            for j in 0..d {
                let col = self.factors[j].column(l).component_mul(&other.factors[j].column(m));
                let n = col.norm();
                if n < DROP_NORM {
                    dropped = true;
                    break;
                }
                s *= n;
                scratch.push(col / n);
            }
            if dropped || s == 0.0 {
                continue;
            }
            svalues.push(s);
            for (j, c) in scratch.iter().enumerate() {
                columns[j].extend_from_slice(c.as_slice());
            }
        }
        let r = svalues.len();
        let factors = columns
            .into_iter()
            .zip(&self.modes)
            .map(|(data, &m)| DMatrix::from_vec(m, r, data))
            .collect();
        Ctd::from_raw(self.modes.clone(), svalues, factors)
    }

    /// Entrywise sum; the terms of `other` follow those of `self`.
    pub fn add(&self, other: &Ctd) -> Result<Ctd> {
        self.check_same_shape(other)?;
        let r = self.rank() + other.rank();
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| {
                let mut f = DMatrix::zeros(a.nrows(), r);
                f.columns_mut(0, a.ncols()).copy_from(a);
                f.columns_mut(a.ncols(), b.ncols()).copy_from(b);
                f
            })
            .collect();
        let mut svalues = self.svalues.clone();
        svalues.extend_from_slice(&other.svalues);
        Ok(Ctd::from_raw(self.modes.clone(), svalues, factors))
    }

    /// `c * U`. A negative sign goes into the first-dimension factors.
    pub fn scale(&self, c: f64) -> Ctd {
        if c == 0.0 || self.is_zero() {
            return Ctd::zero(&self.modes).expect("valid modes");
        }
        let mut out = self.clone();
        for s in &mut out.svalues {
            *s *= c.abs();
        }
        if c < 0.0 {
            out.factors[0].neg_mut();
        }
        out
    }

    /// Unit-norm columns, positive s-values; zero terms are dropped.
    pub fn renormalize(&self) -> Ctd {
        let d = self.dims();
        let mut keep = Vec::with_capacity(self.rank());
        let mut svalues = Vec::with_capacity(self.rank());
        let mut norms = vec![vec![1.0; self.rank()]; d];
        for l in 0..self.rank() {
            let mut s = self.svalues[l];
            let mut dropped = false;
            for j in 0..d {
                let n = self.factors[j].column(l).norm();
                if n < DROP_NORM {
                    dropped = true;
                    break;
                }
                // Columns already unit up to rounding are left bit-for-bit alone.
                if (n - 1.0).abs() > 4.0 * f64::EPSILON {
                    norms[j][l] = n;
                    s *= n;
                }
            }
            if dropped || s == 0.0 {
                continue;
            }
            keep.push(l);
            svalues.push(s);
        }
        let r = keep.len();
        let mut factors: Vec<DMatrix<f64>> = self.modes.iter().map(|&m| DMatrix::zeros(m, r)).collect();
        for (k, &l) in keep.iter().enumerate() {
            for j in 0..d {
                let n = norms[j][l];
                let mut dst = factors[j].column_mut(k);
                dst.copy_from(&self.factors[j].column(l));
                if n != 1.0 {
                    dst /= n;
                }
            }
            if svalues[k] < 0.0 {
                svalues[k] = -svalues[k];
                factors[0].column_mut(k).neg_mut();
            }
        }
        Ctd::from_raw(self.modes.clone(), svalues, factors)
    }

    /// The sub-CTD made of the listed terms, in the listed order.
    pub fn select_terms(&self, terms: &[usize]) -> Ctd {
        let factors = self.factors.iter().map(|f| f.select_columns(terms)).collect();
        let svalues = terms.iter().map(|&l| self.svalues[l]).collect();
        Ctd::from_raw(self.modes.clone(), svalues, factors)
    }

    /// Same terms with new signed weights (one per term), canonicalized.
    pub(crate) fn reweighted(&self, weights: &[f64]) -> Ctd {
        debug_assert_eq!(weights.len(), self.rank());
        Ctd {
            modes: self.modes.clone(),
            svalues: weights.to_vec(),
            factors: self.factors.clone(),
        }
        .renormalize()
    }

    /// `s_l * prod_j max_i |u_j^(l)[i]|` for every term: the largest absolute
    /// entry a term can contribute (exact for a single term).
    pub fn term_max_abs(&self) -> Vec<f64> {
        (0..self.rank())
            .map(|l| {
                self.factors.iter().fold(self.svalues[l], |acc, f| {
                    acc * f.column(l).iter().fold(0.0_f64, |m, x| m.max(x.abs()))
                })
            })
            .collect()
    }

    /// Full materialization, row-major with the last index fastest.
    pub fn to_dense(&self) -> Result<DenseTensor> {
        let entries = self.len();
        if entries > DENSE_ENTRY_LIMIT {
            return Err(Error::SizeGuard { entries, limit: DENSE_ENTRY_LIMIT });
        }
        let n = entries as usize;
        let mut data = vec![0.0; n];
        let mut buf = Vec::with_capacity(n);
        let mut next = Vec::with_capacity(n);
        for l in 0..self.rank() {
            buf.clear();
            buf.push(self.svalues[l]);
            for f in &self.factors {
                next.clear();
                let col = f.column(l);
                for &a in &buf {
                    next.extend(col.iter().map(|&b| a * b));
                }
                std::mem::swap(&mut buf, &mut next);
            }
            for (x, y) in data.iter_mut().zip(&buf) {
                *x += y;
            }
        }
        Ok(DenseTensor { shape: self.modes.clone(), data })
    }
}

pub(crate) fn check_index(modes: &[usize], index: &MultiIndex) -> Result<()> {
    if index.dims() != modes.len() || index.as_slice().iter().zip(modes).any(|(&i, &m)| i >= m) {
        return Err(Error::IndexOutOfRange { index: index.as_slice().to_vec(), modes: modes.to_vec() });
    }
    Ok(())
}

/// Random CTD with i.i.d. uniform `[low, high]` factors, deterministic in `seed`.
pub fn random_ctd(modes: &[usize], rank: usize, low: f64, high: f64, seed: u64) -> Result<Ctd> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ctd::random(modes, rank, low, high, &mut rng)
}

/// Rank-1 CTD equal to `magnitude` at `loc` and zero elsewhere.
pub fn spike_ctd(modes: &[usize], loc: &MultiIndex, magnitude: f64) -> Result<Ctd> {
    Ctd::spike(modes, loc, magnitude)
}

/// A fully materialized tensor. Used for oracles and small-shape checks.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn offset(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &m)| acc * m + i)
    }

    pub fn unravel(&self, mut offset: usize) -> MultiIndex {
        let mut idx = vec![0; self.shape.len()];
        for (slot, &m) in idx.iter_mut().zip(&self.shape).rev() {
            *slot = offset % m;
            offset /= m;
        }
        MultiIndex::new(idx)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Location and value of the entry of largest magnitude (first on ties).
    pub fn argmax_abs(&self) -> (MultiIndex, f64) {
        let (k, v) = self
            .data
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bk, bv), (k, &v)| if v.abs() > bv.abs() { (k, v) } else { (bk, bv) });
        (self.unravel(k), v)
    }

    pub fn dot(&self, other: &DenseTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// `A^T B`. The transpose is materialized so the product runs through the
/// blocked gemm kernel rather than column-by-column dot products.
pub(crate) fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_rank1() -> Ctd {
        let f = DMatrix::from_element(4, 1, 0.5);
        Ctd::from_parts(vec![4, 4], vec![2.0], vec![f.clone(), f]).unwrap()
    }

    fn assert_rel(a: f64, b: f64, tol: f64) {
        let scale = a.abs().max(b.abs()).max(1e-300);
        assert!((a - b).abs() <= tol * scale, "{a} vs {b}");
    }

    #[test]
    fn zero_tensor_evaluates_to_zero() {
        let z = Ctd::zero(&[3, 4]).unwrap();
        assert_eq!(z.eval(&MultiIndex::new(vec![2, 1])).unwrap(), 0.0);
        assert_eq!(z.frobenius_norm(), 0.0);
        assert!(z.to_dense().unwrap().data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_rank_one_entries_and_norm() {
        let u = uniform_rank1();
        for i in 0..4 {
            for j in 0..4 {
                assert_rel(u.eval(&MultiIndex::new(vec![i, j])).unwrap(), 0.5, 1e-15);
            }
        }
        assert_rel(u.inner(&u).unwrap(), 4.0, 1e-14);
        assert_rel(u.frobenius_norm(), 2.0, 1e-14);
        let z = Ctd::zero(&[4, 4]).unwrap();
        assert_eq!(u.inner(&z).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let u = uniform_rank1();
        assert!(matches!(
            u.eval(&MultiIndex::new(vec![4, 0])),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(u.eval(&MultiIndex::new(vec![0])).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let u = uniform_rank1();
        let v = Ctd::uniform(&[4, 5], 1.0).unwrap();
        assert!(matches!(u.inner(&v), Err(Error::Shape(_))));
        assert!(matches!(u.hadamard(&v), Err(Error::Shape(_))));
        assert!(matches!(u.add(&v), Err(Error::Shape(_))));
    }

    #[test]
    fn spikes_multiply_and_add() {
        let loc = MultiIndex::new(vec![1, 2, 0]);
        let a = Ctd::spike(&[3, 3, 3], &loc, 2.0).unwrap();
        let b = Ctd::spike(&[3, 3, 3], &loc, 3.0).unwrap();
        let p = a.hadamard(&b).unwrap().to_dense().unwrap();
        let s = a.add(&b).unwrap().to_dense().unwrap();
        for (k, (&x, &y)) in p.data.iter().zip(&s.data).enumerate() {
            if k == p.offset(loc.as_slice()) {
                assert_rel(x, 6.0, 1e-15);
                assert_rel(y, 5.0, 1e-15);
            } else {
                assert_eq!(x, 0.0);
                assert_eq!(y, 0.0);
            }
        }
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let u = random_ctd(&[5, 4, 3], 3, -1.0, 1.0, 7).unwrap();
        let ones = Ctd::uniform(&[5, 4, 3], 1.0).unwrap();
        let p = u.hadamard(&ones).unwrap();
        for i in 0..5 {
            for k in 0..3 {
                let idx = MultiIndex::new(vec![i, (i + k) % 4, k]);
                assert_rel(p.eval(&idx).unwrap(), u.eval(&idx).unwrap(), 1e-13);
            }
        }
    }

    #[test]
    fn hadamard_rank_guard() {
        let u = random_ctd(&[3, 3], 4, 0.0, 1.0, 1).unwrap();
        assert!(matches!(
            u.hadamard_with_limit(&u, 15),
            Err(Error::Capacity { requested: 16, limit: 15 })
        ));
    }

    #[test]
    fn hadamard_square_matches_general_product() {
        let u = random_ctd(&[4, 5, 3], 4, -1.0, 1.0, 3).unwrap();
        let a = u.hadamard(&u).unwrap().to_dense().unwrap();
        let b = u.hadamard_square().unwrap();
        assert_eq!(b.rank(), 10);
        let b = b.to_dense().unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_rel(*x, *y, 1e-12);
        }
    }

    #[test]
    fn scale_by_one_zero_and_negative() {
        let u = random_ctd(&[3, 4], 2, -1.0, 1.0, 11).unwrap();
        assert_eq!(u.scale(1.0), u);
        assert!(u.scale(0.0).is_zero());
        let n = u.scale(-2.5);
        assert!(n.svalues().iter().all(|&s| s > 0.0));
        let (du, dn) = (u.to_dense().unwrap(), n.to_dense().unwrap());
        for (a, b) in du.data.iter().zip(&dn.data) {
            assert_rel(-2.5 * a, *b, 1e-14);
        }
    }

    #[test]
    fn renormalize_folds_column_norms() {
        let f0 = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        let f1 = DMatrix::from_column_slice(2, 1, &[0.0, 0.5]);
        let raw = Ctd::from_raw(vec![2, 2], vec![3.0], vec![f0, f1]);
        let r = raw.renormalize();
        assert_rel(r.svalues()[0], 3.0, 1e-15);
        assert_rel(r.eval(&MultiIndex::new(vec![0, 1])).unwrap(), 3.0, 1e-15);
        assert_eq!(r.eval(&MultiIndex::new(vec![1, 1])).unwrap(), 0.0);

        let u = random_ctd(&[3, 3], 3, 0.0, 1.0, 5).unwrap();
        let again = u.renormalize();
        for (a, b) in u.svalues().iter().zip(again.svalues()) {
            assert_rel(*a, *b, 1e-15);
        }
    }

    #[test]
    fn renormalize_drops_zero_columns_and_moves_signs() {
        let f0 = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let f1 = DMatrix::from_column_slice(2, 2, &[1.0, -1.0, 1.0, 0.0]);
        let u = Ctd::from_parts(vec![2, 2], vec![-1.0, 4.0], vec![f0, f1]).unwrap();
        assert_eq!(u.rank(), 1);
        assert!(u.svalues()[0] > 0.0);
        assert_rel(u.eval(&MultiIndex::new(vec![0, 1])).unwrap(), 1.0, 1e-15);
        assert_rel(u.eval(&MultiIndex::new(vec![1, 0])).unwrap(), -1.0, 1e-15);
    }

    #[test]
    fn random_is_seed_deterministic_and_positive() {
        let a = random_ctd(&[6, 5, 4], 3, 0.9, 1.0, 42).unwrap();
        let b = random_ctd(&[6, 5, 4], 3, 0.9, 1.0, 42).unwrap();
        let c = random_ctd(&[6, 5, 4], 3, 0.9, 1.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.to_dense().unwrap().data.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn spike_is_one_hot() {
        let loc = MultiIndex::new(vec![2, 0, 3]);
        let s = spike_ctd(&[4, 2, 5], &loc, -1.5).unwrap();
        let dense = s.to_dense().unwrap();
        let (arg, v) = dense.argmax_abs();
        assert_eq!(arg, loc);
        assert_eq!(v, -1.5);
        assert_eq!(dense.data.iter().filter(|&&x| x != 0.0).count(), 1);
        assert!(spike_ctd(&[4, 2, 5], &loc, 0.0).unwrap().is_zero());
    }

    #[test]
    fn dense_guard() {
        let u = Ctd::uniform(&[1000, 1000, 11], 1.0).unwrap();
        assert!(matches!(u.to_dense(), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn multi_index_is_one_based_on_the_wire() {
        let idx = MultiIndex::new(vec![0, 4]);
        assert_eq!(serde_json::to_string(&idx).unwrap(), "[1,5]");
        let back: MultiIndex = serde_json::from_str("[1,5]").unwrap();
        assert_eq!(back, idx);
        assert!(serde_json::from_str::<MultiIndex>("[0,5]").is_err());
        assert_eq!(idx.to_string(), "(1, 5)");
    }
}
