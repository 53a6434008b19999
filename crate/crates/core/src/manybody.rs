//! Fermionic Fock-space algebra.
//!
//! Occupation bitstrings use bit `x` for site `x`. A monomial is a product of
//! creation/annihilation factors written left to right; it acts on a basis
//! state right to left, and each factor at site `x` picks up the sign
//! `(−1)^{#occupied sites with index < x}`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::linalg::{self, CsrMatrix, ZERO};
use crate::C64;

/// Below this dimension realized operators are stored densely.
pub const DENSE_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactorKind {
    Create,
    Annihilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factor {
    pub site: usize,
    pub kind: FactorKind,
}

impl Factor {
    pub fn create(site: usize) -> Self {
        Self { site, kind: FactorKind::Create }
    }

    pub fn annihilate(site: usize) -> Self {
        Self { site, kind: FactorKind::Annihilate }
    }

    pub fn adjoint(self) -> Self {
        let kind = match self.kind {
            FactorKind::Create => FactorKind::Annihilate,
            FactorKind::Annihilate => FactorKind::Create,
        };
        Self { site: self.site, kind }
    }

    /// Applies the factor to an occupation bitstring, returning the new state and sign.
    #[inline]
    pub fn apply(self, state: u64) -> Option<(u64, f64)> {
        let bit = 1u64 << self.site;
        let occupied = state & bit != 0;
        let below = (state & (bit - 1)).count_ones();
        let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
        match (self.kind, occupied) {
            (FactorKind::Create, false) => Some((state | bit, sign)),
            (FactorKind::Annihilate, true) => Some((state & !bit, sign)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: C64,
    pub factors: Vec<Factor>,
}

impl Monomial {
    pub fn new(coeff: C64, factors: Vec<Factor>) -> Self {
        Self { coeff, factors }
    }

    pub fn creators(&self) -> usize {
        self.factors.iter().filter(|f| f.kind == FactorKind::Create).count()
    }

    pub fn annihilators(&self) -> usize {
        self.factors.len() - self.creators()
    }

    pub fn is_balanced(&self) -> bool {
        self.creators() == self.annihilators()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            coeff: self.coeff.conj(),
            factors: self.factors.iter().rev().map(|f| f.adjoint()).collect(),
        }
    }

    /// Acts on `state` right to left.
    #[inline]
    pub fn apply(&self, state: u64) -> Option<(u64, f64)> {
        let mut s = state;
        let mut sign = 1.0;
        for f in self.factors.iter().rev() {
            let (next, sg) = f.apply(s)?;
            s = next;
            sign *= sg;
        }
        Some((s, sign))
    }
}

/// A finite sum of monomials with tracked support.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalTerm {
    monomials: Vec<Monomial>,
    support: Vec<usize>,
}

impl LocalTerm {
    /// Builds an even term; zero-coefficient monomials are dropped.
    pub fn new(monomials: Vec<Monomial>) -> Result<Self> {
        if monomials.iter().any(|m| m.factors.len() % 2 == 1) {
            return Err(Error::OddTerm);
        }
        Ok(Self::from_monomials_unchecked(monomials))
    }

    fn from_monomials_unchecked(monomials: Vec<Monomial>) -> Self {
        let monomials: Vec<Monomial> = monomials.into_iter().filter(|m| m.coeff != ZERO).collect();
        let support: BTreeSet<usize> =
            monomials.iter().flat_map(|m| m.factors.iter().map(|f| f.site)).collect();
        Self { monomials, support: support.into_iter().collect() }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `coeff · a*_to a_from` plus its hermitian conjugate.
    pub fn hopping(to: usize, from: usize, coeff: C64) -> Self {
        Self::from_monomials_unchecked(vec![
            Monomial::new(coeff, vec![Factor::create(to), Factor::annihilate(from)]),
            Monomial::new(coeff.conj(), vec![Factor::create(from), Factor::annihilate(to)]),
        ])
    }

    /// `coeff · n_x`.
    pub fn number(x: usize, coeff: f64) -> Self {
        Self::from_monomials_unchecked(vec![Monomial::new(
            C64::new(coeff, 0.0),
            vec![Factor::create(x), Factor::annihilate(x)],
        )])
    }

    /// `coeff · n_x n_y`.
    pub fn density_density(x: usize, y: usize, coeff: f64) -> Self {
        Self::from_monomials_unchecked(vec![Monomial::new(
            C64::new(coeff, 0.0),
            vec![Factor::create(x), Factor::annihilate(x), Factor::create(y), Factor::annihilate(y)],
        )])
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_zero(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn is_charge_conserving(&self) -> bool {
        self.monomials.iter().all(Monomial::is_balanced)
    }

    /// Average of `e^{iθQ} t e^{−iθQ}` over `θ ∈ [0, 2π)`: keeps exactly the balanced monomials.
    pub fn gauge_average(&self) -> Self {
        Self::from_monomials_unchecked(
            self.monomials.iter().filter(|m| m.is_balanced()).cloned().collect(),
        )
    }

    pub fn adjoint(&self) -> Self {
        Self::from_monomials_unchecked(self.monomials.iter().map(Monomial::adjoint).collect())
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::from_monomials_unchecked(
            self.monomials
                .iter()
                .map(|m| Monomial::new(m.coeff * c, m.factors.clone()))
                .collect(),
        )
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self::from_monomials_unchecked(
            self.monomials.iter().chain(other.monomials.iter()).cloned().collect(),
        )
    }

    /// Maps each monomial coefficient through `f(monomial)`.
    pub fn map_coefficients(&self, mut f: impl FnMut(&Monomial) -> C64) -> Self {
        Self::from_monomials_unchecked(
            self.monomials.iter().map(|m| Monomial::new(f(m), m.factors.clone())).collect(),
        )
    }

    /// Realizes the term on the Fock space of its own support and measures `‖T − T†‖`.
    pub fn hermiticity_defect(&self) -> f64 {
        if self.support.len() > 16 {
            return f64::NAN;
        }
        let relabel: HashMap<usize, usize> =
            self.support.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let local = Self::from_monomials_unchecked(
            self.monomials
                .iter()
                .map(|m| {
                    Monomial::new(
                        m.coeff,
                        m.factors
                            .iter()
                            .map(|f| Factor { site: relabel[&f.site], kind: f.kind })
                            .collect(),
                    )
                })
                .collect(),
        );
        let basis = FockBasis::full(self.support.len().max(1));
        let op = ManyBodyOperator::from_monomials(local.monomials(), &basis)
            .expect("relabelled sites are in range");
        op.hermiticity_defect()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= 1e-12 * (1.0 + self.coefficient_norm())
    }

    /// `Σ |c_m|`, an upper bound on the operator norm.
    pub fn coefficient_norm(&self) -> f64 {
        self.monomials.iter().map(|m| m.coeff.norm()).sum()
    }

    pub fn diameter(&self, lattice: crate::lattice::Lattice) -> usize {
        let s = &self.support;
        s.iter()
            .flat_map(|&a| s.iter().map(move |&b| lattice.distance(a, b)))
            .max()
            .unwrap_or(0)
    }
}

fn fmt_coeff(c: C64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("({},{})", c.re, c.im)
    }
}

impl fmt::Display for LocalTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.monomials.is_empty() {
            return write!(f, "0");
        }
        for (i, m) in self.monomials.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{} *", fmt_coeff(m.coeff))?;
            for factor in &m.factors {
                let tag = match factor.kind {
                    FactorKind::Create => 'c',
                    FactorKind::Annihilate => 'a',
                };
                write!(f, " {}({})", tag, factor.site)?;
            }
        }
        Ok(())
    }
}

struct TermParser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> TermParser<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::TermParse { input: self.src.to_string(), reason: reason.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}` at offset {}", b as char, self.pos)))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let mut prev = b' ';
        while let Some(b) = self.peek() {
            let ok = b.is_ascii_digit()
                || b == b'.'
                || b == b'e'
                || b == b'E'
                || ((b == b'-' || b == b'+') && (self.pos == start || prev == b'e' || prev == b'E'))
                || (self.pos == start && (b == b'i' || b == b'n'))
                || (self.pos > start && b.is_ascii_alphabetic() && !matches!(prev, b'0'..=b'9' | b'.'));
            if !ok {
                break;
            }
            prev = b;
            self.pos += 1;
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map_err(|_| self.err(format!("bad number `{text}`")))
    }

    fn coefficient(&mut self) -> Result<C64> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let re = self.number()?;
                self.expect(b',')?;
                let im = self.number()?;
                self.expect(b')')?;
                Ok(C64::new(re, im))
            }
            Some(b'c') | Some(b'a') => Ok(C64::new(1.0, 0.0)),
            _ => Ok(C64::new(self.number()?, 0.0)),
        }
    }

    fn factor(&mut self) -> Result<Option<Factor>> {
        self.skip_ws();
        let kind = match self.peek() {
            Some(b'c') => FactorKind::Create,
            Some(b'a') => FactorKind::Annihilate,
            _ => return Ok(None),
        };
        self.pos += 1;
        self.expect(b'(')?;
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let site = self.src[start..self.pos]
            .parse::<usize>()
            .map_err(|_| self.err("bad site index"))?;
        self.expect(b')')?;
        Ok(Some(Factor { site, kind }))
    }

    fn parse(mut self) -> Result<LocalTerm> {
        let mut monomials = Vec::new();
        loop {
            let coeff = self.coefficient()?;
            self.skip_ws();
            if self.peek() == Some(b'*') {
                self.pos += 1;
            }
            let mut factors = Vec::new();
            while let Some(f) = self.factor()? {
                factors.push(f);
            }
            monomials.push(Monomial::new(coeff, factors));
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(b'+') => self.pos += 1,
                Some(b) => return Err(self.err(format!("unexpected `{}`", b as char))),
            }
        }
        LocalTerm::new(monomials)
    }
}

impl FromStr for LocalTerm {
    type Err = Error;

    /// Parses the canonical text form, e.g. `1.0 * c(0) a(1) + (0,-1) * c(1) a(0)`.
    fn from_str(s: &str) -> Result<Self> {
        TermParser { src: s, bytes: s.as_bytes(), pos: 0 }.parse()
    }
}

/// Occupation-number basis, either the full Fock space or one charge sector.
///
/// The full basis is ordered sector-major (by particle number), then by the
/// integer value of the bitstring, so charge-conserving operators are block
/// diagonal with contiguous blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    n_sites: usize,
    sector: Option<usize>,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl FockBasis {
    pub fn full(n_sites: usize) -> Arc<Self> {
        assert!(n_sites < 30, "full Fock space too large");
        let mut states: Vec<u64> = (0..(1u64 << n_sites)).collect();
        states.sort_by_key(|s| (s.count_ones(), *s));
        Arc::new(Self::from_states(n_sites, None, states))
    }

    pub fn sector(n_sites: usize, particles: usize) -> Arc<Self> {
        assert!(particles <= n_sites && n_sites < 63);
        let mut states = Vec::new();
        if particles == 0 {
            states.push(0);
        } else {
            // Gosper's hack enumerates fixed-popcount words in increasing order.
            let mut s: u64 = (1u64 << particles) - 1;
            let limit = 1u64 << n_sites;
            while s < limit {
                states.push(s);
                let c = s & s.wrapping_neg();
                let r = s + c;
                s = (((r ^ s) >> 2) / c) | r;
            }
        }
        Arc::new(Self::from_states(n_sites, Some(particles), states))
    }

    fn from_states(n_sites: usize, sector: Option<usize>, states: Vec<u64>) -> Self {
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Self { n_sites, sector, states, index }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sector_charge(&self) -> Option<usize> {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> u64 {
        self.states[i]
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.index.get(&state).copied()
    }

    pub fn charge(&self, i: usize) -> usize {
        self.states[i].count_ones() as usize
    }

    /// Contiguous `(charge, basis indices)` blocks.
    pub fn sectors(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
        for i in 0..self.dim() {
            let q = self.charge(i);
            match out.last_mut() {
                Some((c, idx)) if *c == q => idx.push(i),
                _ => out.push((q, vec![i])),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Sparse(CsrMatrix),
    Dense(Array2<C64>),
}

/// An operator realized as a matrix on a Fock basis.
#[derive(Debug, Clone)]
pub struct ManyBodyOperator {
    basis: Arc<FockBasis>,
    storage: Storage,
    support: Vec<usize>,
}

fn check_sites(sites: impl IntoIterator<Item = usize>, n: usize) -> Result<()> {
    for s in sites {
        if s >= n {
            return Err(Error::SiteOutOfRange { site: s, n_sites: n });
        }
    }
    Ok(())
}

impl ManyBodyOperator {
    pub fn from_csr(basis: &Arc<FockBasis>, m: CsrMatrix, support: Vec<usize>) -> Self {
        let storage = if basis.dim() < DENSE_THRESHOLD {
            Storage::Dense(m.to_dense())
        } else {
            Storage::Sparse(m)
        };
        Self { basis: basis.clone(), storage, support }
    }

    pub fn from_dense(basis: &Arc<FockBasis>, m: Array2<C64>, support: Vec<usize>) -> Self {
        assert_eq!(m.dim(), (basis.dim(), basis.dim()));
        Self { basis: basis.clone(), storage: Storage::Dense(m), support }
    }

    pub fn zero(basis: &Arc<FockBasis>) -> Self {
        Self::from_csr(basis, CsrMatrix::zeros(basis.dim(), basis.dim()), vec![])
    }

    pub fn identity(basis: &Arc<FockBasis>) -> Self {
        Self::from_csr(basis, CsrMatrix::identity(basis.dim()), vec![])
    }

    pub fn diagonal(basis: &Arc<FockBasis>, diag: &[C64], support: Vec<usize>) -> Self {
        Self::from_csr(basis, CsrMatrix::from_diagonal(diag), support)
    }

    /// Sum of monomials without the evenness requirement (single `a_x` are allowed).
    ///
    /// Components leaving the basis (e.g. out of a fixed charge sector) are dropped.
    pub fn from_monomials(monomials: &[Monomial], basis: &Arc<FockBasis>) -> Result<Self> {
        let n = basis.n_sites();
        check_sites(monomials.iter().flat_map(|m| m.factors.iter().map(|f| f.site)), n)?;
        let mut triplets = Vec::new();
        for (j, &state) in basis.states().iter().enumerate() {
            for m in monomials {
                if let Some((t, sign)) = m.apply(state) {
                    if let Some(i) = basis.index_of(t) {
                        triplets.push((i, j, m.coeff * sign));
                    }
                }
            }
        }
        let support: BTreeSet<usize> =
            monomials.iter().flat_map(|m| m.factors.iter().map(|f| f.site)).collect();
        let m = CsrMatrix::from_triplets(basis.dim(), basis.dim(), triplets);
        Ok(Self::from_csr(basis, m, support.into_iter().collect()))
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn with_support(mut self, support: Vec<usize>) -> Self {
        self.support = support;
        self
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn to_dense(&self) -> Array2<C64> {
        match &self.storage {
            Storage::Sparse(m) => m.to_dense(),
            Storage::Dense(m) => m.clone(),
        }
    }

    pub fn into_dense(self) -> Array2<C64> {
        match self.storage {
            Storage::Sparse(m) => m.to_dense(),
            Storage::Dense(m) => m,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match &self.storage {
            Storage::Sparse(m) => m.get(i, j),
            Storage::Dense(m) => m[[i, j]],
        }
    }

    /// Nonzero entries `(row, col, value)`.
    pub fn entries(&self) -> Vec<(usize, usize, C64)> {
        match &self.storage {
            Storage::Sparse(m) => m.iter().collect(),
            Storage::Dense(m) => m
                .indexed_iter()
                .filter(|(_, v)| **v != ZERO)
                .map(|((i, j), v)| (i, j, *v))
                .collect(),
        }
    }

    pub fn matvec(&self, v: ArrayView1<C64>) -> Array1<C64> {
        match &self.storage {
            Storage::Sparse(m) => m.matvec(v),
            Storage::Dense(m) => m.dot(&v),
        }
    }

    /// `⟨v, A v⟩`.
    pub fn expectation(&self, v: ArrayView1<C64>) -> C64 {
        linalg::inner(v, self.matvec(v).view())
    }

    /// `A · M` for a dense block of column vectors.
    pub fn apply_block(&self, block: &Array2<C64>) -> Array2<C64> {
        match &self.storage {
            Storage::Sparse(m) => m.mul_dense(block),
            Storage::Dense(m) => m.dot(block),
        }
    }

    fn same_basis(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.basis, &other.basis) || self.basis == other.basis {
            Ok(())
        } else {
            Err(Error::BasisMismatch)
        }
    }

    fn union_support(&self, other: &Self) -> Vec<usize> {
        let s: BTreeSet<usize> = self.support.iter().chain(&other.support).copied().collect();
        s.into_iter().collect()
    }

    /// `self + b · other`.
    pub fn add_scaled(&self, other: &Self, b: C64) -> Result<Self> {
        self.same_basis(other)?;
        let support = self.union_support(other);
        let storage = match (&self.storage, &other.storage) {
            (Storage::Sparse(x), Storage::Sparse(y)) => Storage::Sparse(x.add(y, b)),
            _ => Storage::Dense(self.to_dense() + &other.to_dense().mapv(|v| v * b)),
        };
        Ok(Self { basis: self.basis.clone(), storage, support })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, C64::new(-1.0, 0.0))
    }

    pub fn scale(&self, a: C64) -> Self {
        let storage = match &self.storage {
            Storage::Sparse(m) => Storage::Sparse(m.scale(a)),
            Storage::Dense(m) => Storage::Dense(m.mapv(|v| v * a)),
        };
        Self { basis: self.basis.clone(), storage, support: self.support.clone() }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.same_basis(other)?;
        let support = self.union_support(other);
        let storage = match (&self.storage, &other.storage) {
            (Storage::Sparse(x), Storage::Sparse(y)) => Storage::Sparse(x.matmul(y)),
            (Storage::Sparse(x), Storage::Dense(y)) => Storage::Dense(x.mul_dense(y)),
            (Storage::Dense(x), Storage::Sparse(y)) => Storage::Dense(y.left_mul_dense(x)),
            (Storage::Dense(x), Storage::Dense(y)) => Storage::Dense(x.dot(y)),
        };
        Ok(Self { basis: self.basis.clone(), storage, support })
    }

    pub fn adjoint(&self) -> Self {
        let storage = match &self.storage {
            Storage::Sparse(m) => Storage::Sparse(m.adjoint()),
            Storage::Dense(m) => Storage::Dense(linalg::dagger(m)),
        };
        Self { basis: self.basis.clone(), storage, support: self.support.clone() }
    }

    pub fn frobenius(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.frobenius(),
            Storage::Dense(m) => linalg::dense_frobenius(m),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.max_abs(),
            Storage::Dense(m) => linalg::dense_max_abs(m),
        }
    }

    /// Spectral norm (power iteration; exact for small dimensions).
    pub fn op_norm(&self) -> f64 {
        if self.max_abs() == 0.0 {
            return 0.0;
        }
        match &self.storage {
            Storage::Dense(m) => linalg::dense_op_norm(m),
            Storage::Sparse(m) if m.nrows() <= 2048 => linalg::dense_op_norm(&m.to_dense()),
            Storage::Sparse(m) => sparse_op_norm(m),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        match &self.storage {
            Storage::Sparse(m) => m.add(&m.adjoint(), C64::new(-1.0, 0.0)).max_abs(),
            Storage::Dense(m) => linalg::dense_max_abs(&(m - &linalg::dagger(m))),
        }
    }

    /// Largest entry connecting different charge sectors.
    pub fn max_off_sector(&self) -> f64 {
        self.entries()
            .into_iter()
            .filter(|(i, j, _)| self.basis.charge(*i) != self.basis.charge(*j))
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_charge_conserving(&self) -> bool {
        self.max_off_sector() == 0.0
    }

    /// Drops sites on which the operator acts trivially.
    ///
    /// Only sound for even operators and only checked on the full Fock basis;
    /// on a charge sector the declared support is kept.
    pub fn tighten_support(mut self) -> Self {
        if self.basis.sector_charge().is_some() {
            return self;
        }
        let entries = self.entries();
        let scale = entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max);
        let tol = 1e-12 * scale.max(1e-300);
        let keep: Vec<usize> = self
            .support
            .iter()
            .copied()
            .filter(|&x| !self.acts_trivially_on(x, &entries, tol))
            .collect();
        self.support = keep;
        self
    }

    fn acts_trivially_on(&self, x: usize, entries: &[(usize, usize, C64)], tol: f64) -> bool {
        let bit = 1u64 << x;
        let below = |s: u64| if (s & (bit - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        for &(i, j, v) in entries {
            if v.norm() <= tol {
                continue;
            }
            let (si, sj) = (self.basis.state(i), self.basis.state(j));
            if (si ^ sj) & bit != 0 {
                return false;
            }
            let (pi, pj) = (si ^ bit, sj ^ bit);
            let (Some(a), Some(b)) = (self.basis.index_of(pi), self.basis.index_of(pj)) else {
                return false;
            };
            let partner = self.get(a, b);
            if (partner - v * below(si.min(pi)) * below(sj.min(pj))).norm() > tol {
                return false;
            }
        }
        true
    }
}

fn sparse_op_norm(m: &CsrMatrix) -> f64 {
    let adj = m.adjoint();
    linalg::gram_top_eigenvalue(|v| adj.matvec(m.matvec(v).view()).mapv(|x| -x), m.ncols()).sqrt()
}

/// Matrix of a local term on a basis, with fermionic signs.
pub fn realize(term: &LocalTerm, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
    ManyBodyOperator::from_monomials(term.monomials(), basis)
        .map(|op| op.with_support(term.support().to_vec()))
}

/// Sum of several terms realized together.
pub fn realize_sum<'a>(
    terms: impl IntoIterator<Item = &'a LocalTerm>,
    basis: &Arc<FockBasis>,
) -> Result<ManyBodyOperator> {
    let mut monomials = Vec::new();
    for t in terms {
        monomials.extend_from_slice(t.monomials());
    }
    ManyBodyOperator::from_monomials(&monomials, basis)
}

/// `Q_X = Σ_{x∈X} q_x`.
pub fn charge_operator(sites: &[usize], basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
    check_sites(sites.iter().copied(), basis.n_sites())?;
    let mask: u64 = sites.iter().fold(0, |m, &s| m | (1u64 << s));
    let diag: Vec<C64> = basis
        .states()
        .iter()
        .map(|s| C64::new((s & mask).count_ones() as f64, 0.0))
        .collect();
    Ok(ManyBodyOperator::diagonal(basis, &diag, sites.to_vec()))
}

pub fn region_charge(region: &Region, basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
    charge_operator(region.sites(), basis)
}

/// `U_θ = exp(i Σ_x θ_x q_x)`.
pub fn gauge_unitary(theta: &[f64], basis: &Arc<FockBasis>) -> Result<ManyBodyOperator> {
    if theta.len() != basis.n_sites() {
        return Err(Error::SiteOutOfRange { site: theta.len(), n_sites: basis.n_sites() });
    }
    let diag: Vec<C64> = basis
        .states()
        .iter()
        .map(|&s| {
            let phase: f64 = (0..theta.len()).filter(|x| s >> x & 1 == 1).map(|x| theta[x]).sum();
            C64::from_polar(1.0, phase)
        })
        .collect();
    Ok(ManyBodyOperator::diagonal(basis, &diag, (0..theta.len()).collect()))
}

/// `AB − BA`, with the support tightened where the basis allows it.
pub fn commutator(a: &ManyBodyOperator, b: &ManyBodyOperator) -> Result<ManyBodyOperator> {
    let ab = a.matmul(b)?;
    let ba = b.matmul(a)?;
    Ok(ab.sub(&ba)?.tighten_support())
}

/// `i[A, B]`.
pub fn i_commutator(a: &ManyBodyOperator, b: &ManyBodyOperator) -> Result<ManyBodyOperator> {
    Ok(commutator(a, b)?.scale(linalg::I))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ONE, I};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bitstring notation used in the examples: leftmost character is site 0.
    fn ket(bits: &str) -> u64 {
        bits.chars().enumerate().fold(0, |s, (i, c)| if c == '1' { s | 1 << i } else { s })
    }

    /// Independent oracle: occupation-number matrices built from Jordan-Wigner
    /// Kronecker products, `a_x = Z ⊗ … ⊗ Z ⊗ σ⁻ ⊗ 1 ⊗ …`, indexed by integer state value.
    fn jw_annihilator(n: usize, x: usize) -> Array2<C64> {
        let dim = 1usize << n;
        let mut m = Array2::zeros((dim, dim));
        for s in 0..dim {
            if s >> x & 1 == 1 {
                let parity = (s & ((1 << x) - 1)).count_ones();
                let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
                m[[s ^ (1 << x), s]] = C64::new(sign, 0.0);
            }
        }
        m
    }

    fn by_value(op: &ManyBodyOperator) -> Array2<C64> {
        let dim = op.dim();
        let mut m = Array2::zeros((dim, dim));
        for (i, j, v) in op.entries() {
            m[[op.basis().state(i) as usize, op.basis().state(j) as usize]] = v;
        }
        m
    }

    #[test]
    fn hopping_example_two_sites() {
        let basis = FockBasis::full(2);
        let t: LocalTerm = "1 * c(0) a(1)".parse().unwrap();
        let op = realize(&t, &basis).unwrap();
        let entries = op.entries();
        assert_eq!(entries.len(), 1);
        let (i, j, v) = entries[0];
        assert_eq!(basis.state(i), ket("10"));
        assert_eq!(basis.state(j), ket("01"));
        assert_eq!(v, ONE);
        let oracle = jw_annihilator(2, 0).t().to_owned().dot(&jw_annihilator(2, 1));
        assert_eq!(by_value(&op), oracle);
    }

    #[test]
    fn number_operator_single_site() {
        let basis = FockBasis::full(1);
        let op = realize(&"c(0) a(0)".parse().unwrap(), &basis).unwrap();
        assert_eq!(by_value(&op), Array2::from_diag(&Array1::from(vec![ZERO, ONE])));
    }

    #[test]
    fn sign_through_occupied_middle_site() {
        let basis = FockBasis::full(3);
        let op = realize(&"c(0) a(2)".parse().unwrap(), &basis).unwrap();
        let at = |out: &str, inp: &str| {
            op.get(basis.index_of(ket(out)).unwrap(), basis.index_of(ket(inp)).unwrap())
        };
        assert_eq!(at("100", "001"), ONE);
        assert_eq!(at("110", "011"), -ONE);
        let a0 = jw_annihilator(3, 0);
        let oracle = a0.t().to_owned().dot(&jw_annihilator(3, 2));
        assert_eq!(by_value(&op), oracle);
    }

    #[test]
    fn charge_spectrum_is_binomial() {
        let lat = crate::lattice::Lattice::ring(6).unwrap();
        let x = Region::new(lat, [1, 2, 4]).unwrap();
        let basis = FockBasis::full(6);
        let q = region_charge(&x, &basis).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..basis.dim() {
            let v = q.get(i, i).re;
            assert_eq!(v.fract(), 0.0);
            counts[v as usize] += 1;
        }
        // brute-force count of occupations of X times free choices outside
        assert_eq!(counts, [8, 24, 24, 8]);
        let total = charge_operator(&(0..6).collect::<Vec<_>>(), &FockBasis::sector(6, 3)).unwrap();
        assert!((0..20).all(|i| total.get(i, i) == C64::new(3.0, 0.0)));
        let two = FockBasis::full(2);
        let q0 = charge_operator(&[0], &two).unwrap();
        assert_eq!(q0.get(two.index_of(ket("10")).unwrap(), two.index_of(ket("10")).unwrap()), ONE);
    }

    #[test]
    fn gauge_average_examples() {
        let t: LocalTerm = "c(0) a(1)".parse().unwrap();
        assert_eq!(t.gauge_average(), t);
        let pairing: LocalTerm = "c(0) c(1) + a(1) a(0)".parse().unwrap();
        assert!(pairing.gauge_average().is_zero());
        let mixed: LocalTerm = "1 * c(0) a(1) + 0.5 * a(0) a(1)".parse().unwrap();
        assert_eq!(mixed.gauge_average(), t);
        let basis = FockBasis::full(3);
        let messy: LocalTerm = "c(0) a(1) + c(1) a(0) + 0.3 * c(0) c(2) + 0.3 * a(2) a(0)".parse().unwrap();
        let avg = realize(&messy.gauge_average(), &basis).unwrap();
        let qtot = charge_operator(&[0, 1, 2], &basis).unwrap();
        assert_eq!(commutator(&avg, &qtot).unwrap().max_abs(), 0.0);
        let full = realize(&messy, &basis).unwrap();
        assert!(avg.op_norm() <= full.op_norm() + 1e-12);
    }

    #[test]
    fn gauge_unitary_identities() {
        let basis = FockBasis::full(4);
        let id = ManyBodyOperator::identity(&basis);
        let u0 = gauge_unitary(&[0.0; 4], &basis).unwrap();
        assert!(u0.sub(&id).unwrap().max_abs() < 1e-15);
        let u2pi = gauge_unitary(&[2.0 * std::f64::consts::PI; 4], &basis).unwrap();
        assert!(u2pi.sub(&id).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn commutator_examples() {
        let basis = FockBasis::full(2);
        let q0 = charge_operator(&[0], &basis).unwrap();
        let q1 = charge_operator(&[1], &basis).unwrap();
        assert_eq!(commutator(&q0, &q1).unwrap().max_abs(), 0.0);
        let hop = realize(&LocalTerm::hopping(0, 1, ONE), &basis).unwrap();
        let c = commutator(&hop, &q0).unwrap();
        // brute force with 4x4 oracle matrices
        let a0 = jw_annihilator(2, 0);
        let a1 = jw_annihilator(2, 1);
        let h = a0.t().dot(&a1) + a1.t().dot(&a0);
        let n0 = a0.t().dot(&a0);
        let oracle = h.dot(&n0) - n0.dot(&h);
        assert_eq!(by_value(&c), oracle);
        // [a0* a1 + h.c., q0] = -(a0* a1 - a1* a0)
        let anti = realize(&"c(0) a(1) + -1 * c(1) a(0)".parse().unwrap(), &basis).unwrap();
        assert!(c.add(&anti).unwrap().max_abs() < 1e-15);
        let other = FockBasis::full(3);
        let q_other = charge_operator(&[0], &other).unwrap();
        assert!(matches!(commutator(&q0, &q_other), Err(Error::BasisMismatch)));
    }

    #[test]
    fn car_relations_exhaustive() {
        for n in 1..=6 {
            let basis = FockBasis::full(n);
            let id = ManyBodyOperator::identity(&basis);
            let ops: Vec<(ManyBodyOperator, ManyBodyOperator)> = (0..n)
                .map(|x| {
                    let a = ManyBodyOperator::from_monomials(&[Monomial::new(ONE, vec![Factor::annihilate(x)])], &basis).unwrap();
                    let c = ManyBodyOperator::from_monomials(&[Monomial::new(ONE, vec![Factor::create(x)])], &basis).unwrap();
                    (a, c)
                })
                .collect();
            for x in 0..n {
                for y in 0..n {
                    let (ax, _) = &ops[x];
                    let (ay, cy) = &ops[y];
                    let anti = ax.matmul(cy).unwrap().add(&cy.matmul(ax).unwrap()).unwrap();
                    let expect = if x == y { id.clone() } else { ManyBodyOperator::zero(&basis) };
                    assert!(anti.sub(&expect).unwrap().max_abs() < 1e-15);
                    let aa = ax.matmul(ay).unwrap().add(&ay.matmul(ax).unwrap()).unwrap();
                    assert_eq!(aa.max_abs(), 0.0);
                }
            }
        }
    }

    #[test]
    fn text_form_round_trip_and_errors() {
        let t: LocalTerm = "(0.5,-1) * c(1) a(0) + -2e-3 * c(0) a(0) c(1) a(1)".parse().unwrap();
        assert_eq!(t.monomials()[0].coeff, C64::new(0.5, -1.0));
        let again: LocalTerm = t.to_string().parse().unwrap();
        assert_eq!(again, t);
        assert_eq!("1.0 * c(0) a(1)".parse::<LocalTerm>().unwrap().to_string(), "1 * c(0) a(1)");
        assert!(matches!("1 * c(0)".parse::<LocalTerm>(), Err(Error::OddTerm)));
        assert!(matches!("1 * x(0)".parse::<LocalTerm>(), Err(Error::TermParse { .. })));
        let basis = FockBasis::full(2);
        assert!(matches!(realize(&"c(0) a(5)".parse().unwrap(), &basis), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn hermiticity_flag() {
        assert!(LocalTerm::hopping(0, 3, C64::new(0.3, 0.7)).is_hermitian());
        assert!(!"c(0) a(1)".parse::<LocalTerm>().unwrap().is_hermitian());
        assert!(LocalTerm::density_density(2, 5, 1.5).is_hermitian());
        let with_i = LocalTerm::hopping(1, 0, I);
        assert!(with_i.is_hermitian());
    }

    #[test]
    fn sector_basis_is_block_of_full() {
        let full = FockBasis::full(6);
        let sector = FockBasis::sector(6, 3);
        assert_eq!(sector.dim(), 20);
        let t = LocalTerm::hopping(0, 4, C64::new(0.2, -0.4)).plus(&LocalTerm::density_density(1, 2, 0.7));
        let a = realize(&t, &full).unwrap();
        let b = realize(&t, &sector).unwrap();
        for (i, j, v) in b.entries() {
            let fi = full.index_of(sector.state(i)).unwrap();
            let fj = full.index_of(sector.state(j)).unwrap();
            assert_eq!(a.get(fi, fj), v);
        }
        assert_eq!(a.max_off_sector(), 0.0);
        let sectors = full.sectors();
        assert_eq!(sectors.len(), 7);
        assert_eq!(sectors[3].1.len(), 20);
    }

    #[test]
    fn support_tightening() {
        let basis = FockBasis::full(4);
        let h = realize(&LocalTerm::hopping(0, 1, ONE), &basis).unwrap();
        let q = charge_operator(&[1, 2, 3], &basis).unwrap();
        let c = commutator(&h, &q).unwrap();
        assert_eq!(c.support(), &[0, 1]);
    }

    proptest! {
        #[test]
        fn gauge_average_is_idempotent_projection(
            coeffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
            sites in proptest::collection::vec((0usize..4, 0usize..4), 4),
        ) {
            let mut monos = Vec::new();
            for (k, ((re, im), (x, y))) in coeffs.iter().zip(&sites).enumerate() {
                let c = C64::new(*re, *im);
                let factors = match k % 3 {
                    0 => vec![Factor::create(*x), Factor::annihilate(*y)],
                    1 => vec![Factor::create(*x), Factor::create(*y)],
                    _ => vec![Factor::annihilate(*x), Factor::annihilate(*y)],
                };
                monos.push(Monomial::new(c, factors));
            }
            let t = LocalTerm::new(monos).unwrap();
            let t = t.plus(&t.adjoint());
            let avg = t.gauge_average();
            prop_assert_eq!(avg.gauge_average(), avg.clone());
            let basis = FockBasis::full(4);
            let ra = realize(&avg, &basis).unwrap();
            let rt = realize(&t, &basis).unwrap();
            prop_assert!(ra.op_norm() <= rt.op_norm() * (1.0 + 1e-9) + 1e-12);
            prop_assert_eq!(ra.max_off_sector(), 0.0);
        }
    }

    #[test]
    fn matrix_elements_depend_only_on_support() {
        let n = 7;
        let basis = FockBasis::full(n);
        let t: LocalTerm = "(0.3,0.1) * c(2) a(4) + (0.3,-0.1) * c(4) a(2) + 0.8 * c(3) a(3) c(4) a(4)".parse().unwrap();
        let op = realize(&t, &basis).unwrap();
        let support_mask: u64 = t.support().iter().fold(0, |m, &s| m | 1 << s);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..400 {
            let s: u64 = rng.random_range(0..(1u64 << n));
            let outside_flip: u64 = rng.random_range(0..(1u64 << n)) & !support_mask;
            let sp = s ^ outside_flip;
            for (i, j, v) in op.entries().into_iter().filter(|e| basis.state(e.1) == s) {
                let target = basis.state(i);
                let j2 = basis.index_of(sp).unwrap();
                let i2 = basis.index_of(target ^ outside_flip).unwrap();
                // sign from occupied outside sites below the support interval changes pairwise
                let ratio = op.get(i2, j2) / v;
                assert!((ratio.norm() - 1.0).abs() < 1e-14);
                assert!(ratio.im.abs() < 1e-14);
                let _ = j;
            }
        }
    }
}
