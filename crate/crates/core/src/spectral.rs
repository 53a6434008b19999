//! Per-sector diagonalization, ground spaces, gaps and Gibbs states.

use std::io::Write;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CsrMatrix, ZERO};
use crate::manybody::{FockBasis, ManyBodyOperator, Storage};
use crate::C64;

/// Sectors up to this dimension are diagonalized densely even in `Lowest` mode.
pub const DENSE_SECTOR_LIMIT: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagMode {
    Full,
    /// Lowest `k` eigenpairs of every sector.
    Lowest(usize),
}

#[derive(Debug, Clone)]
pub struct SectorSpectrum {
    pub charge: usize,
    /// Basis indices spanned by this sector.
    pub indices: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors in sector coordinates.
    pub eigenvectors: Array2<C64>,
    pub complete: bool,
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    basis: Arc<FockBasis>,
    sectors: Vec<SectorSpectrum>,
    norm: f64,
}

fn sector_block(h: &ManyBodyOperator, idx: &[usize]) -> CsrMatrix {
    match h.storage() {
        Storage::Sparse(m) => m.submatrix(idx, idx),
        Storage::Dense(m) => {
            let trips = idx.iter().enumerate().flat_map(|(i, &r)| {
                idx.iter().enumerate().map(move |(j, &c)| (i, j, m[[r, c]]))
            });
            CsrMatrix::from_triplets(idx.len(), idx.len(), trips)
        }
    }
}

fn diagonalize_block(
    charge: usize,
    indices: Vec<usize>,
    block: CsrMatrix,
    mode: DiagMode,
    seed: u64,
) -> Result<SectorSpectrum> {
    let dim = indices.len();
    let dense_ok = match mode {
        DiagMode::Full => true,
        DiagMode::Lowest(k) => dim <= DENSE_SECTOR_LIMIT || k >= dim,
    };
    if dense_ok {
        let (e, v) = linalg::hermitian_eigh(&block.to_dense())?;
        let (e, v, complete) = match mode {
            DiagMode::Lowest(k) if k < dim => (e[..k].to_vec(), v.slice(s![.., ..k]).to_owned(), false),
            _ => (e, v, true),
        };
        return Ok(SectorSpectrum {
            charge,
            indices,
            eigenvalues: e,
            eigenvectors: v,
            complete,
            max_residual: 0.0,
        });
    }
    let DiagMode::Lowest(k) = mode else { unreachable!() };
    let res = linalg::lanczos_lowest(|x| block.matvec(x), dim, k, 1e-10, seed)?;
    let max_residual = res.residuals.iter().cloned().fold(0.0, f64::max);
    Ok(SectorSpectrum {
        charge,
        indices,
        eigenvalues: res.eigenvalues,
        eigenvectors: res.eigenvectors,
        complete: false,
        max_residual,
    })
}

/// Diagonalizes a hermitian, charge-conserving operator sector by sector.
pub fn diagonalize(h: &ManyBodyOperator, mode: DiagMode) -> Result<SpectralData> {
    let scale = h.max_abs().max(1e-300);
    let defect = h.hermiticity_defect();
    if defect > 1e-12 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let basis = h.basis().clone();
    let blocks: Vec<(usize, Vec<usize>)> = basis.sectors();
    let sectors: Result<Vec<SectorSpectrum>> = blocks
        .into_par_iter()
        .map(|(q, idx)| {
            let block = sector_block(h, &idx);
            diagonalize_block(q, idx, block, mode, 0x5eed ^ q as u64)
        })
        .collect();
    let sectors = sectors?;
    let norm = sectors
        .iter()
        .flat_map(|s| s.eigenvalues.iter())
        .map(|e| e.abs())
        .fold(0.0, f64::max);
    Ok(SpectralData { basis, sectors, norm })
}

/// Diagonalizes only the listed charge sectors.
pub fn diagonalize_sectors(
    h: &ManyBodyOperator,
    charges: &[usize],
    mode: DiagMode,
) -> Result<SpectralData> {
    let basis = h.basis().clone();
    let sectors: Result<Vec<SectorSpectrum>> = basis
        .sectors()
        .into_iter()
        .filter(|(q, _)| charges.contains(q))
        .map(|(q, idx)| {
            let block = sector_block(h, &idx);
            diagonalize_block(q, idx, block, mode, 0x5eed ^ q as u64)
        })
        .collect();
    let sectors = sectors?;
    let norm = sectors
        .iter()
        .flat_map(|s| s.eigenvalues.iter())
        .map(|e| e.abs())
        .fold(0.0, f64::max);
    Ok(SpectralData { basis, sectors, norm })
}

impl SpectralData {
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn sectors(&self) -> &[SectorSpectrum] {
        &self.sectors
    }

    pub fn is_full(&self) -> bool {
        self.sectors.iter().all(|s| s.complete) && self.sectors.iter().map(|s| s.indices.len()).sum::<usize>() == self.basis.dim()
    }

    /// Largest computed `|E|`; equals `‖H‖` for a full spectrum.
    pub fn norm_estimate(&self) -> f64 {
        self.norm
    }

    pub fn max_residual(&self) -> f64 {
        self.sectors.iter().map(|s| s.max_residual).fold(0.0, f64::max)
    }

    /// All computed eigenvalues, merged and sorted.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.sectors.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// `(sector index, eigen index, energy)` sorted by energy.
    fn ordered_levels(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = self
            .sectors
            .iter()
            .enumerate()
            .flat_map(|(si, s)| s.eigenvalues.iter().enumerate().map(move |(k, &e)| (si, k, e)))
            .collect();
        out.sort_by(|a, b| a.2.total_cmp(&b.2));
        out
    }

    /// Eigenvector embedded in the full basis.
    pub fn eigenvector(&self, sector: usize, k: usize) -> Array1<C64> {
        let s = &self.sectors[sector];
        let mut v = Array1::zeros(self.basis.dim());
        for (i, &b) in s.indices.iter().enumerate() {
            v[b] = s.eigenvectors[[i, k]];
        }
        v
    }

    /// Lowest cluster of eigenvalues within `cluster_tol` of the minimum; never fails.
    pub fn ground_states(&self, cluster_tol: f64) -> GroundSpace {
        let levels = self.ordered_levels();
        let e0 = levels[0].2;
        let cluster: Vec<&(usize, usize, f64)> =
            levels.iter().take_while(|l| l.2 - e0 <= cluster_tol).collect();
        let top = cluster.last().map(|l| l.2).unwrap_or(e0);
        let gap = levels.get(cluster.len()).map(|l| l.2 - top);
        let mut vectors = Array2::zeros((self.basis.dim(), cluster.len()));
        for (c, &&(si, k, _)) in cluster.iter().enumerate() {
            vectors.column_mut(c).assign(&self.eigenvector(si, k));
        }
        let mut sectors: Vec<usize> = cluster.iter().map(|l| self.sectors[l.0].charge).collect();
        sectors.sort_unstable();
        sectors.dedup();
        GroundSpace {
            basis: self.basis.clone(),
            vectors,
            energies: cluster.iter().map(|l| l.2).collect(),
            gap,
            sectors,
        }
    }

    /// Writes `sector,index,eigenvalue` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sector", "index", "eigenvalue"])?;
        for s in &self.sectors {
            for (k, e) in s.eigenvalues.iter().enumerate() {
                w.write_record([s.charge.to_string(), k.to_string(), format!("{e:.15e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Default clustering tolerance `10⁻⁸ ‖H‖`.
pub fn default_cluster_tol(spec: &SpectralData) -> f64 {
    1e-8 * spec.norm_estimate().max(1.0)
}

/// Spectral subspace of the lowest cluster, stored as orthonormal columns.
#[derive(Debug, Clone)]
pub struct GroundSpace {
    basis: Arc<FockBasis>,
    vectors: Array2<C64>,
    pub energies: Vec<f64>,
    /// Distance to the rest of the computed spectrum.
    pub gap: Option<f64>,
    /// Charges of the sectors contributing to the cluster.
    pub sectors: Vec<usize>,
}

/// Ground projector with its rank and gap; `NoGap` if the gap does not exceed `cluster_tol`.
pub fn ground_projector(spec: &SpectralData, cluster_tol: f64) -> Result<GroundSpace> {
    let g = spec.ground_states(cluster_tol);
    match g.gap {
        Some(gap) if gap > cluster_tol => Ok(g),
        Some(gap) => Err(Error::NoGap { gap }),
        None => Err(Error::NoGap { gap: 0.0 }),
    }
}

impl GroundSpace {
    /// Builds a ground space from explicit orthonormal vectors.
    pub fn from_vectors(basis: &Arc<FockBasis>, vectors: Array2<C64>, energies: Vec<f64>, gap: Option<f64>) -> Self {
        let mut sectors: Vec<usize> = (0..vectors.ncols())
            .filter_map(|c| {
                vectors.column(c).iter().position(|v| v.norm() > 1e-8).map(|i| basis.charge(i))
            })
            .collect();
        sectors.sort_unstable();
        sectors.dedup();
        Self { basis: basis.clone(), vectors, energies, gap, sectors }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<C64> {
        &self.vectors
    }

    pub fn energy(&self) -> f64 {
        self.energies[0]
    }

    /// Dense `P = V V†`.
    pub fn projector(&self) -> Array2<C64> {
        self.vectors.dot(&linalg::dagger(&self.vectors))
    }

    /// `V† A V`, the compression of `A` to the ground space.
    pub fn compress(&self, a: &ManyBodyOperator) -> Array2<C64> {
        linalg::dagger(&self.vectors).dot(&a.apply_block(&self.vectors))
    }

    /// `tr(P A)`.
    pub fn trace(&self, a: &ManyBodyOperator) -> C64 {
        self.compress(a).diag().sum()
    }

    /// `p⁻¹ tr(P A)`.
    pub fn mean(&self, a: &ManyBodyOperator) -> C64 {
        self.trace(a) / self.rank() as f64
    }

    /// `‖(1 − P) A P‖`.
    pub fn leakage(&self, a: &ManyBodyOperator) -> f64 {
        let av = a.apply_block(&self.vectors);
        let proj = self.vectors.dot(&linalg::dagger(&self.vectors).dot(&av));
        linalg::dense_op_norm(&(av - proj))
    }

    /// `‖[A, P]‖ = max(‖(1−P)AP‖, ‖PA(1−P)‖)`.
    pub fn commutator_norm(&self, a: &ManyBodyOperator) -> f64 {
        self.leakage(a).max(self.leakage(&a.adjoint()))
    }

    /// `‖P A P‖`.
    pub fn compressed_norm(&self, a: &ManyBodyOperator) -> f64 {
        linalg::dense_op_norm(&self.compress(a))
    }

    /// `P A P` as a dense matrix on the full basis.
    pub fn sandwich(&self, a: &ManyBodyOperator) -> Array2<C64> {
        let c = self.compress(a);
        self.vectors.dot(&c).dot(&linalg::dagger(&self.vectors))
    }

    /// Replaces the basis of the ground space by eigenvectors of `P A P` (for hermitian `A`).
    pub fn rotate_to_eigenbasis(&self, a: &ManyBodyOperator) -> Result<(Vec<f64>, GroundSpace)> {
        let (e, w) = linalg::hermitian_eigh(&self.compress(a))?;
        let mut g = self.clone();
        g.vectors = self.vectors.dot(&w);
        Ok((e, g))
    }

    pub fn column(&self, k: usize) -> ArrayView1<'_, C64> {
        self.vectors.column(k)
    }
}

/// Thermal state `e^{−β(H − μN)}/Z`, stored by its eigen-weights.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub beta: f64,
    pub mu: f64,
    basis: Arc<FockBasis>,
    /// `(sector, eigen index, weight)`.
    weights: Vec<(usize, usize, f64)>,
    pub log_partition: f64,
    energy: f64,
    vectors: Vec<Array2<C64>>,
    indices: Vec<Vec<usize>>,
}

/// Canonical or grand-canonical Gibbs state over the diagonalized sectors.
pub fn gibbs(spec: &SpectralData, beta: f64) -> Result<GibbsState> {
    gibbs_grand(spec, beta, 0.0)
}

/// Gibbs state of `H − μN` over all diagonalized sectors.
pub fn gibbs_grand(spec: &SpectralData, beta: f64, mu: f64) -> Result<GibbsState> {
    if !spec.sectors.iter().all(|s| s.complete) {
        return Err(Error::RequiresFullSpectrum);
    }
    let shifted: Vec<(usize, usize, f64, f64)> = spec
        .sectors
        .iter()
        .enumerate()
        .flat_map(|(si, s)| {
            s.eigenvalues.iter().enumerate().map(move |(k, &e)| (si, k, e, e - mu * s.charge as f64))
        })
        .collect();
    let emin = shifted.iter().map(|x| x.3).fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = shifted.iter().map(|x| (-beta * (x.3 - emin)).exp()).collect();
    let z: f64 = raw.iter().sum();
    let weights: Vec<(usize, usize, f64)> =
        shifted.iter().zip(&raw).map(|(x, w)| (x.0, x.1, w / z)).collect();
    let energy = shifted.iter().zip(&weights).map(|(x, w)| x.2 * w.2).sum();
    Ok(GibbsState {
        beta,
        mu,
        basis: spec.basis.clone(),
        weights,
        log_partition: z.ln() - beta * emin,
        energy,
        vectors: spec.sectors.iter().map(|s| s.eigenvectors.clone()).collect(),
        indices: spec.sectors.iter().map(|s| s.indices.clone()).collect(),
    })
}

impl GibbsState {
    /// `tr(ρ A)`; exact because `ρ` is diagonal in the eigenbasis.
    pub fn expectation(&self, a: &ManyBodyOperator) -> C64 {
        let mut total = ZERO;
        for (si, vecs) in self.vectors.iter().enumerate() {
            let idx = &self.indices[si];
            let relevant: Vec<&(usize, usize, f64)> =
                self.weights.iter().filter(|w| w.0 == si && w.2 > 1e-300).collect();
            if relevant.is_empty() {
                continue;
            }
            let mut block = Array2::zeros((self.basis.dim(), relevant.len()));
            for (c, w) in relevant.iter().enumerate() {
                for (i, &b) in idx.iter().enumerate() {
                    block[[b, c]] = vecs[[i, w.1]];
                }
            }
            let ab = a.apply_block(&block);
            for (c, w) in relevant.iter().enumerate() {
                total += linalg::inner(block.column(c), ab.column(c)) * w.2;
            }
        }
        total
    }

    /// `tr(ρ H)`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Von Neumann entropy `−Σ w log w`.
    pub fn entropy(&self) -> f64 {
        self.weights.iter().filter(|w| w.2 > 0.0).map(|w| -w.2 * w.2.ln()).sum()
    }

    /// `F(ρ) = tr(ρH) − β⁻¹ S(ρ)`.
    pub fn free_energy(&self) -> f64 {
        self.energy - self.entropy() / self.beta
    }

    /// Dense `ρ` on the full basis.
    pub fn density_matrix(&self) -> Array2<C64> {
        let dim = self.basis.dim();
        let mut rho = Array2::zeros((dim, dim));
        for &(si, k, w) in &self.weights {
            let mut v = Array1::zeros(dim);
            for (i, &b) in self.indices[si].iter().enumerate() {
                v[b] = self.vectors[si][[i, k]];
            }
            let col = v.view().insert_axis(Axis(1));
            let row = v.mapv(|x| x.conj()).insert_axis(Axis(0));
            rho = rho + col.dot(&row).mapv(|x| x * w);
        }
        rho
    }
}

/// `tr(σ H) − β⁻¹ S(σ)` for an arbitrary dense density matrix.
pub fn free_energy_of(rho: &Array2<C64>, h: &ManyBodyOperator, beta: f64) -> Result<f64> {
    let energy = h.apply_block(rho).diag().sum().re;
    let p = linalg::hermitian_eigenvalues(rho)?;
    let entropy: f64 = p.iter().filter(|&&x| x > 1e-300).map(|x| -x * x.ln()).sum();
    Ok(energy - entropy / beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manybody::{self, gauge_unitary};
    use crate::models;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full(spec: &models::ModelSpec) -> (Arc<FockBasis>, ManyBodyOperator, SpectralData) {
        let basis = FockBasis::full(spec.n_sites());
        let h = spec.hamiltonian(&basis).unwrap();
        let d = diagonalize(&h, DiagMode::Full).unwrap();
        (basis, h, d)
    }

    #[test]
    fn two_site_sector() {
        let spec = models::tv_ring(2, 1.0, 0.0, 0.0).unwrap();
        let (basis, _, d) = full(&spec);
        assert_eq!(d.sectors().iter().map(|s| s.indices.len()).sum::<usize>(), basis.dim());
        let one = d.sectors().iter().find(|s| s.charge == 1).unwrap();
        assert!((one.eigenvalues[0] + 2.0).abs() < 1e-14 && (one.eigenvalues[1] - 2.0).abs() < 1e-14);
        assert!(d.is_full());
    }

    #[test]
    fn lanczos_matches_dense() {
        let spec = models::tv_ring(12, 1.0, 0.7, 0.3).unwrap();
        let basis = FockBasis::sector(12, 6);
        let h = spec.hamiltonian(&basis).unwrap();
        let block = match h.storage() {
            Storage::Sparse(m) => m.clone(),
            Storage::Dense(_) => unreachable!(),
        };
        let idx: Vec<usize> = (0..basis.dim()).collect();
        let lz = diagonalize_block(6, idx.clone(), block.clone(), DiagMode::Lowest(3), 1).unwrap();
        let dense = linalg::hermitian_eigenvalues(&block.to_dense()).unwrap();
        for k in 0..3 {
            assert!((lz.eigenvalues[k] - dense[k]).abs() < 1e-9, "{k}");
        }
        assert!(lz.max_residual <= 1e-10 * dense.iter().map(|e| e.abs()).fold(0.0, f64::max) * 1.01);
    }

    #[test]
    fn projector_properties() {
        let spec = models::tv_ring(6, 1.0, 0.5, 0.3).unwrap();
        let (_, h, d) = full(&spec);
        let g = ground_projector(&d, default_cluster_tol(&d)).unwrap();
        assert_eq!(g.rank(), 1);
        let p = g.projector();
        assert!(linalg::dense_max_abs(&(p.dot(&p) - &p)) < 1e-12);
        assert!((p.diag().sum().re - 1.0).abs() < 1e-12);
        assert!(g.commutator_norm(&h) < 1e-10);
    }

    #[test]
    fn degenerate_ground_state_at_pi_flux() {
        // Free ring with L = 6, N = 3 at φ = π: the Fermi sea has two degenerate fillings.
        let spec = models::tv_ring(6, 1.0, 0.0, PI).unwrap();
        let basis = FockBasis::sector(6, 3);
        let h = spec.hamiltonian(&basis).unwrap();
        let d = diagonalize(&h, DiagMode::Full).unwrap();
        let g = ground_projector(&d, 1e-8).unwrap();
        assert_eq!(g.rank(), 2);
        let strict = d.ground_states(1e-8);
        assert_eq!(strict.sectors, vec![3]);
    }
    use std::f64::consts::PI;

    #[test]
    fn no_gap_reported() {
        let spec = models::tv_ring(6, 1.0, 0.0, PI).unwrap();
        let basis = FockBasis::sector(6, 3);
        let h = spec.hamiltonian(&basis).unwrap();
        let d = diagonalize(&h, DiagMode::Full).unwrap();
        // A tolerance wider than the bandwidth swallows the whole spectrum.
        assert!(matches!(ground_projector(&d, 1e3), Err(Error::NoGap { .. })));
        // Levels 0 < e₁ < e₂ with e₂ − e₀ > tol ≥ e₂ − e₁: the cluster edge sits inside the band.
        let e = d.eigenvalues();
        let next = e.iter().copied().find(|&x| x > e[0] + 1e-6).unwrap();
        let after = e.iter().copied().find(|&x| x > next + 1e-6).unwrap();
        let tol = (after - e[0]) * 0.999;
        if after - next <= tol {
            assert!(matches!(ground_projector(&d, tol), Err(Error::NoGap { .. })));
        }
    }

    #[test]
    fn trace_of_commutator_vanishes() {
        let spec = models::tv_ring(6, 1.0, 1.0, 0.4).unwrap();
        let (basis, h, d) = full(&spec);
        let g = d.ground_states(default_cluster_tol(&d));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = basis.dim();
        let a = Array2::from_shape_fn((dim, dim), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let a = &a + &linalg::dagger(&a);
        let a = ManyBodyOperator::from_dense(&basis, a, vec![]);
        let c = manybody::commutator(&h, &a).unwrap();
        assert!(g.trace(&c).norm() < 1e-10);
    }

    #[test]
    fn gibbs_limits_and_consistency() {
        let spec = models::tv_ring(4, 1.0, 0.5, 0.2).unwrap();
        let (basis, h, d) = full(&spec);
        let hot = gibbs(&d, 0.0).unwrap();
        let rho = hot.density_matrix();
        let id = Array2::<C64>::eye(basis.dim()).mapv(|x| x / basis.dim() as f64);
        assert!(linalg::dense_max_abs(&(rho - id)) < 1e-14);

        let q = manybody::charge_operator(&[0, 1], &basis).unwrap();
        let cold = gibbs(&d, 200.0).unwrap();
        let g = d.ground_states(1e-8);
        assert!((cold.expectation(&q) - g.mean(&q)).norm() < 1e-10);

        let beta = 1.3;
        let st = gibbs(&d, beta).unwrap();
        let eps = 1e-5;
        let dlogz = (gibbs(&d, beta + eps).unwrap().log_partition
            - gibbs(&d, beta - eps).unwrap().log_partition)
            / (2.0 * eps);
        assert!((dlogz + st.energy()).abs() < 1e-8);
        let rho = st.density_matrix();
        let comm = rho.dot(&h.to_dense()) - h.to_dense().dot(&rho);
        assert!(linalg::dense_max_abs(&comm) < 1e-12);
        assert!((rho.diag().sum().re - 1.0).abs() < 1e-12);
        assert!((free_energy_of(&rho, &h, beta).unwrap() - st.free_energy()).abs() < 1e-10);

        let lowest = diagonalize(&h, DiagMode::Lowest(1)).unwrap();
        assert!(matches!(gibbs(&lowest, 1.0), Err(Error::RequiresFullSpectrum)));
    }

    #[test]
    fn gauge_deformed_gibbs_has_higher_free_energy() {
        let l = 8;
        let spec = models::tv_ring(l, 1.0, 0.6, 0.3).unwrap();
        let basis = FockBasis::sector(l, 4);
        let h = spec.hamiltonian(&basis).unwrap();
        let d = diagonalize(&h, DiagMode::Full).unwrap();
        let beta = 2.0;
        let st = gibbs(&d, beta).unwrap();
        let rho = st.density_matrix();
        for &phi in &[0.3, -0.3, 1.0] {
            let theta: Vec<f64> = (0..l).map(|x| phi * x as f64 / l as f64).collect();
            let u = gauge_unitary(&theta, &basis).unwrap().to_dense();
            let rho_phi = u.dot(&rho).dot(&linalg::dagger(&u));
            assert!(free_energy_of(&rho_phi, &h, beta).unwrap() >= st.free_energy() - 1e-10);
        }
    }

    #[test]
    fn dimerized_gap_uniform_in_length() {
        for l in (4..=12).step_by(2) {
            let spec = models::dimerized_ring(l, 1.0, 0.4, 0.0).unwrap();
            let basis = FockBasis::sector(l, l / 2);
            let h = spec.hamiltonian(&basis).unwrap();
            let d = diagonalize(&h, DiagMode::Lowest(2)).unwrap();
            let g = ground_projector(&d, 1e-8).unwrap();
            assert!(g.gap.unwrap() >= 2.0 * 0.6 - 1e-9, "L={l}");
        }
    }

    #[test]
    fn csv_export() {
        let spec = models::tv_ring(3, 1.0, 0.0, 0.0).unwrap();
        let (_, _, d) = full(&spec);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sector,index,eigenvalue\n"));
        assert_eq!(text.lines().count(), 9);
    }
}
