//! Periodic geometry: the ring ℤ/Lℤ and the torus (ℤ/Lℤ)².
//!
//! Torus sites are indexed row-major, `x = x₁ + L·x₂`, so that operator
//! supports serialize deterministically. The "cut" direction for currents and
//! twists is always `x₁`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatticeKind {
    Ring,
    Torus2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    kind: LatticeKind,
    size: usize,
}

impl Lattice {
    pub fn ring(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidLattice(format!("ring needs L ≥ 2, got {size}")));
        }
        Ok(Self { kind: LatticeKind::Ring, size })
    }

    pub fn torus(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidLattice(format!("torus needs L ≥ 2, got {size}")));
        }
        Ok(Self { kind: LatticeKind::Torus2d, size })
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    /// Linear size `L`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_sites(&self) -> usize {
        match self.kind {
            LatticeKind::Ring => self.size,
            LatticeKind::Torus2d => self.size * self.size,
        }
    }

    /// Number of sites in one `x₁ = const` slab (1 on a ring, `L` on a torus).
    pub fn slab_width(&self) -> usize {
        match self.kind {
            LatticeKind::Ring => 1,
            LatticeKind::Torus2d => self.size,
        }
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        match self.kind {
            LatticeKind::Ring => (site, 0),
            LatticeKind::Torus2d => (site % self.size, site / self.size),
        }
    }

    /// Site at (possibly negative or overflowing) coordinates, wrapped periodically.
    pub fn site_at(&self, x1: i64, x2: i64) -> usize {
        let l = self.size as i64;
        let a = x1.rem_euclid(l) as usize;
        match self.kind {
            LatticeKind::Ring => a,
            LatticeKind::Torus2d => a + self.size * (x2.rem_euclid(l) as usize),
        }
    }

    pub fn column(&self, site: usize) -> usize {
        self.coords(site).0
    }

    /// Periodic distance between two coordinates along one axis.
    pub fn axis_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b) % self.size;
        d.min(self.size - d)
    }

    /// Signed `x₁` displacement from `from` to `to`, in `(−L/2, L/2]`.
    pub fn column_offset(&self, from: usize, to: usize) -> i64 {
        let l = self.size as i64;
        let raw = (self.column(to) as i64 - self.column(from) as i64).rem_euclid(l);
        if 2 * raw > l {
            raw - l
        } else {
            raw
        }
    }

    /// Graph (shortest-path) distance between two sites.
    pub fn distance(&self, x: usize, y: usize) -> usize {
        let (x1, x2) = self.coords(x);
        let (y1, y2) = self.coords(y);
        match self.kind {
            LatticeKind::Ring => self.axis_distance(x1, y1),
            LatticeKind::Torus2d => self.axis_distance(x1, y1) + self.axis_distance(x2, y2),
        }
    }

    /// Nearest-neighbour bonds `(x, x + e)` for every site and every positive direction.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.size as i64;
        let mut out = Vec::new();
        for site in 0..self.num_sites() {
            let (x1, x2) = self.coords(site);
            out.push((site, self.site_at(x1 as i64 + 1, x2 as i64)));
            if self.kind == LatticeKind::Torus2d {
                out.push((site, self.site_at(x1 as i64, (x2 as i64 + 1) % l)));
            }
        }
        out
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LatticeKind::Ring => write!(f, "ring(L={})", self.size),
            LatticeKind::Torus2d => write!(f, "torus(L={})", self.size),
        }
    }
}

/// A set of sites of a lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    lattice: Lattice,
    sites: Vec<usize>,
    mask: Vec<bool>,
}

impl Region {
    pub fn new(lattice: Lattice, sites: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = lattice.num_sites();
        let mut mask = vec![false; n];
        for s in sites {
            if s >= n {
                return Err(Error::SiteOutOfRange { site: s, n_sites: n });
            }
            mask[s] = true;
        }
        Ok(Self::from_mask(lattice, mask))
    }

    fn from_mask(lattice: Lattice, mask: Vec<bool>) -> Self {
        let sites = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        Self { lattice, sites, mask }
    }

    pub fn all(lattice: Lattice) -> Self {
        Self::from_mask(lattice, vec![true; lattice.num_sites()])
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.mask.get(site).copied().unwrap_or(false)
    }

    pub fn contains_all(&self, sites: &[usize]) -> bool {
        sites.iter().all(|&s| self.contains(s))
    }

    pub fn meets(&self, sites: &[usize]) -> bool {
        sites.iter().any(|&s| self.contains(s))
    }

    pub fn complement(&self) -> Self {
        Self::from_mask(self.lattice, self.mask.iter().map(|m| !m).collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self::from_mask(
            self.lattice,
            self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        )
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_mask(
            self.lattice,
            self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
        )
    }

    /// Distance from a site to the region (`usize::MAX` for an empty region).
    pub fn distance_to_site(&self, site: usize) -> usize {
        self.sites
            .iter()
            .map(|&s| self.lattice.distance(s, site))
            .min()
            .unwrap_or(usize::MAX)
    }

    /// `∂X = {x : d(x,X) ≤ 1 and d(x,Xᶜ) ≤ 1}`.
    pub fn boundary(&self) -> Self {
        let comp = self.complement();
        let mask = (0..self.lattice.num_sites())
            .map(|x| self.distance_to_site(x) <= 1 && comp.distance_to_site(x) <= 1)
            .collect();
        Self::from_mask(self.lattice, mask)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.sites.iter().map(|s| s.to_string()).collect();
        write!(f, "[{}]", items.join(","))
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.sites.serialize(serializer)
    }
}

/// Which of the two boundary components of the half-torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripSide {
    /// Around the fiducial line `x₁ = 0`.
    Minus,
    /// Around `x₁ = ⌊L/2⌋`.
    Plus,
}

/// `Γ = {x : 0 ≤ x₁ ≤ L/2}`.
pub fn half_torus(lat: Lattice) -> Region {
    let half = lat.size() / 2;
    let mask = (0..lat.num_sites()).map(|s| lat.column(s) <= half).collect();
    Region::from_mask(lat, mask)
}

/// Symmetric strip of `2R + 1` columns centred on `x₁ = 0` (minus) or `x₁ = ⌊L/2⌋` (plus).
pub fn boundary_strip(lat: Lattice, which: StripSide, width: usize) -> Result<Region> {
    if 2 * (2 * width + 1) >= lat.size() {
        return Err(Error::StripOverlap { width, size: lat.size() });
    }
    Ok(column_band(lat, strip_center(lat, which), width))
}

/// Columns within periodic distance `width` of `center`, without the disjointness check.
pub fn column_band(lat: Lattice, center: usize, width: usize) -> Region {
    let mask = (0..lat.num_sites())
        .map(|s| lat.axis_distance(lat.column(s), center) <= width)
        .collect();
    Region::from_mask(lat, mask)
}

pub fn strip_center(lat: Lattice, which: StripSide) -> usize {
    match which {
        StripSide::Minus => 0,
        StripSide::Plus => lat.size() / 2,
    }
}

/// `min_{x∈X, y∈Y} d(x, y)`.
pub fn graph_distance(x: &Region, y: &Region) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let lat = x.lattice();
    Ok(x.sites()
        .iter()
        .flat_map(|&a| y.sites().iter().map(move |&b| lat.distance(a, b)))
        .min()
        .unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region(lat: Lattice, sites: &[usize]) -> Region {
        Region::new(lat, sites.iter().copied()).unwrap()
    }

    #[test]
    fn half_torus_examples() {
        let ring4 = Lattice::ring(4).unwrap();
        assert_eq!(half_torus(ring4).sites(), &[0, 1, 2]);
        let torus4 = Lattice::torus(4).unwrap();
        let g = half_torus(torus4);
        assert_eq!(g.len(), 12);
        assert!(g.sites().iter().all(|&s| torus4.column(s) <= 2));
        assert_eq!(half_torus(Lattice::ring(2).unwrap()).sites(), &[0, 1]);
    }

    #[test]
    fn strips_on_ring() {
        let lat = Lattice::ring(12).unwrap();
        assert_eq!(boundary_strip(lat, StripSide::Minus, 1).unwrap().sites(), &[0, 1, 11]);
        assert_eq!(boundary_strip(lat, StripSide::Plus, 1).unwrap().sites(), &[5, 6, 7]);
        let small = Lattice::ring(6).unwrap();
        assert!(matches!(
            boundary_strip(small, StripSide::Minus, 2),
            Err(Error::StripOverlap { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let ring = Lattice::ring(10).unwrap();
        assert_eq!(graph_distance(&region(ring, &[0]), &region(ring, &[5])).unwrap(), 5);
        assert_eq!(graph_distance(&region(ring, &[0]), &region(ring, &[9])).unwrap(), 1);
        let torus = Lattice::torus(4).unwrap();
        let far = torus.site_at(2, 2);
        assert_eq!(graph_distance(&region(torus, &[0]), &region(torus, &[far])).unwrap(), 4);
        assert!(matches!(
            graph_distance(&region(ring, &[]), &region(ring, &[1])),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn boundary_of_interval() {
        let ring = Lattice::ring(10).unwrap();
        let x = region(ring, &[2, 3, 4, 5]);
        assert_eq!(x.boundary().sites(), &[1, 2, 5, 6]);
    }

    #[test]
    fn half_torus_cover_and_boundary_separation() {
        for l in [8usize, 10, 12, 16] {
            for lat in [Lattice::ring(l).unwrap(), Lattice::torus(l).unwrap()] {
                let g = half_torus(lat);
                let c = g.complement();
                assert_eq!(g.union(&c).len(), lat.num_sites());
                assert!(g.intersection(&c).is_empty());
                let minus = boundary_strip(lat, StripSide::Minus, 0).unwrap();
                let plus = boundary_strip(lat, StripSide::Plus, 0).unwrap();
                let bd = g.boundary();
                let comp_minus = bd.intersection(&column_band(lat, 0, 1));
                let comp_plus = bd.intersection(&column_band(lat, l / 2, 1));
                assert!(graph_distance(&comp_minus, &comp_plus).unwrap() >= l / 2 - 2);
                assert!(graph_distance(&minus, &plus).unwrap() >= l / 2 - 1);
            }
        }
    }

    #[test]
    fn torus_row_major_indexing() {
        let lat = Lattice::torus(3).unwrap();
        assert_eq!(lat.site_at(1, 2), 7);
        assert_eq!(lat.coords(7), (1, 2));
        assert_eq!(lat.site_at(-1, 0), 2);
        assert_eq!(lat.bonds().len(), 18);
    }

    proptest! {
        #[test]
        fn metric_axioms(l in 3usize..12, a in 0usize..144, b in 0usize..144, c in 0usize..144, torus: bool) {
            let lat = if torus { Lattice::torus(l).unwrap() } else { Lattice::ring(l).unwrap() };
            let n = lat.num_sites();
            let (a, b, c) = (a % n, b % n, c % n);
            prop_assert_eq!(lat.distance(a, b), lat.distance(b, a));
            prop_assert!(lat.distance(a, c) <= lat.distance(a, b) + lat.distance(b, c));
            prop_assert_eq!(lat.distance(a, b) == 0, a == b);
            let (x1, x2) = lat.coords(a);
            let (y1, y2) = lat.coords(b);
            prop_assert!(lat.axis_distance(x1, y1) <= l / 2 && lat.axis_distance(x2, y2) <= l / 2);
        }

        #[test]
        fn region_distance_symmetric(l in 4usize..10, xs in proptest::collection::vec(0usize..10, 1..4), ys in proptest::collection::vec(0usize..10, 1..4)) {
            let lat = Lattice::ring(l).unwrap();
            let x = Region::new(lat, xs.iter().map(|s| s % l)).unwrap();
            let y = Region::new(lat, ys.iter().map(|s| s % l)).unwrap();
            let d = graph_distance(&x, &y).unwrap();
            prop_assert_eq!(d, graph_distance(&y, &x).unwrap());
            prop_assert_eq!(d == 0, !x.intersection(&y).is_empty());
        }
    }
}
