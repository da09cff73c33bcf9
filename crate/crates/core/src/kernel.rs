//! Facet-averaged geometric kernel matrix of a cavity and its eigensystem.
//!
//! Entry `(i, j)` is the fraction of energy leaving facet `j` that reaches
//! facet `i`: `(S_j/π)·K̄_ij`, with `K̄_ij` the geometric kernel averaged over
//! both facets. Diagonal and same-panel blocks are exactly zero.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometric_kernel_point, point_to_polygon_form_factor, Facet, VCavity};

/// How the four-dimensional facet-pair integral is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelEstimator {
    /// Stratified points on the receiving facet; the integral over the
    /// emitting facet is evaluated in closed form (point-to-polygon form
    /// factor). Finite variance even for pairs touching the fold.
    #[default]
    PointToFacet,
    /// Stratified point pairs on both facets averaging
    /// [`geometric_kernel_point`]. Heavy-tailed next to the fold.
    PointPair,
}

impl KernelEstimator {
    pub fn tag(self) -> &'static str {
        match self {
            KernelEstimator::PointToFacet => "p2f",
            KernelEstimator::PointPair => "pp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub samples_per_pair: usize,
    pub seed: u64,
    pub estimator: KernelEstimator,
    /// Sample multiplier for pairs whose centres are closer than a facet diagonal.
    pub near_field_boost: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            samples_per_pair: 256,
            seed: 0,
            estimator: KernelEstimator::default(),
            near_field_boost: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelProvenance {
    pub angle_deg: f64,
    pub facets_per_side: usize,
    pub samples_per_pair: usize,
    pub seed: u64,
    pub estimator: KernelEstimator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    matrix: DMatrix<f64>,
    pub provenance: KernelProvenance,
    /// `max |K_ij − K_ji|` of the raw estimate, before symmetrization.
    pub symmetry_residual: f64,
}

impl KernelMatrix {
    pub fn new(matrix: DMatrix<f64>, provenance: KernelProvenance) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape("kernel matrix must be square".into()));
        }
        let symmetry_residual = asymmetry(&matrix);
        Ok(Self {
            matrix,
            provenance,
            symmetry_residual,
        })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(m, m),
            provenance: KernelProvenance {
                angle_deg: 180.0,
                facets_per_side: 0,
                samples_per_pair: 0,
                seed: 0,
                estimator: KernelEstimator::default(),
            },
            symmetry_residual: 0.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        asymmetry(&self.matrix) <= tol
    }

    /// Perron root by power iteration (entries are non-negative).
    pub fn spectral_radius(&self) -> f64 {
        let m = self.size();
        if m == 0 {
            return 0.0;
        }
        let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = &self.matrix * &v;
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = v.dot(&w);
            v = w / norm;
            if (next - lambda).abs() <= 1e-15 * next.abs().max(1e-300) {
                return next;
            }
            lambda = next;
        }
        lambda
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Binary layout (little endian): magic `IRKERNEL`, version u32, m u32,
    /// angle f64, n u32, samples u32, seed u64, then m·m row-major f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let m = self.size();
        w.write_all(KERNEL_MAGIC)?;
        w.write_all(&KERNEL_VERSION.to_le_bytes())?;
        w.write_all(&(m as u32).to_le_bytes())?;
        w.write_all(&self.provenance.angle_deg.to_le_bytes())?;
        w.write_all(&(self.provenance.facets_per_side as u32).to_le_bytes())?;
        w.write_all(&(self.provenance.samples_per_pair as u32).to_le_bytes())?;
        w.write_all(&self.provenance.seed.to_le_bytes())?;
        for i in 0..m {
            for j in 0..m {
                w.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, estimator: KernelEstimator) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(f), estimator)
    }

    pub fn read_from<R: Read>(r: &mut R, estimator: KernelEstimator) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != KERNEL_MAGIC {
            return Err(Error::Format("not a kernel cache file".into()));
        }
        let version = read_u32(r)?;
        if version != KERNEL_VERSION {
            return Err(Error::Version {
                found: version,
                expected: KERNEL_VERSION,
            });
        }
        let m = read_u32(r)? as usize;
        let angle_deg = read_f64(r)?;
        let facets_per_side = read_u32(r)? as usize;
        let samples_per_pair = read_u32(r)? as usize;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed).map_err(truncated)?;
        let seed = u64::from_le_bytes(seed);
        let mut matrix = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                matrix[(i, j)] = read_f64(r)?;
            }
        }
        Self::new(
            matrix,
            KernelProvenance {
                angle_deg,
                facets_per_side,
                samples_per_pair,
                seed,
                estimator,
            },
        )
    }
}

const KERNEL_MAGIC: &[u8; 8] = b"IRKERNEL";
const KERNEL_VERSION: u32 = 1;

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated kernel file".into())
    } else {
        e.into()
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Jittered-grid samples on the unit square when `n` is a perfect square,
/// Latin-hypercube samples otherwise.
fn stratified_unit_square<R: Rng>(n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let g = (n as f64).sqrt().round() as usize;
    if g * g == n {
        let mut out = Vec::with_capacity(n);
        for a in 0..g {
            for b in 0..g {
                let u = (a as f64 + rng.random::<f64>()) / g as f64;
                let v = (b as f64 + rng.random::<f64>()) / g as f64;
                out.push((u, v));
            }
        }
        out
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        (0..n)
            .map(|k| {
                let u = (k as f64 + rng.random::<f64>()) / n as f64;
                let v = (perm[k] as f64 + rng.random::<f64>()) / n as f64;
                (u, v)
            })
            .collect()
    }
}

fn coplanar(a: &Facet, b: &Facet) -> bool {
    (a.normal - b.normal).norm() < 1e-12 && a.normal.dot(&(b.center - a.center)).abs() < 1e-12
}

/// Substream for the ordered pair `(i, j)`; independent of evaluation order.
fn pair_rng(seed: u64, i: usize, j: usize, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((i * m + j) as u64);
    rng
}

fn estimate_entry(
    fi: &Facet,
    fj: &Facet,
    samples: usize,
    estimator: KernelEstimator,
    rng: &mut ChaCha8Rng,
) -> f64 {
    match estimator {
        KernelEstimator::PointToFacet => {
            let corners = fj.corners();
            let pts = stratified_unit_square(samples, rng);
            let sum: f64 = pts
                .iter()
                .map(|&(u, v)| point_to_polygon_form_factor(&fi.point(u, v), &fi.normal, &corners))
                .sum();
            sum / samples as f64
        }
        KernelEstimator::PointPair => {
            let pi = stratified_unit_square(samples, rng);
            let mut pj = stratified_unit_square(samples, rng);
            for k in (1..pj.len()).rev() {
                pj.swap(k, rng.random_range(0..=k));
            }
            let sum: f64 = pi
                .iter()
                .zip(&pj)
                .map(|(&(ui, vi), &(uj, vj))| {
                    geometric_kernel_point(&fi.point(ui, vi), &fi.normal, &fj.point(uj, vj), &fj.normal)
                        .unwrap_or(0.0)
                })
                .sum();
            fj.area() / std::f64::consts::PI * sum / samples as f64
        }
    }
}

/// Raw (unsymmetrized) Monte Carlo kernel estimate.
pub fn assemble_kernel(cavity: &VCavity, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    if cfg.samples_per_pair == 0 {
        return Err(Error::Config("samples_per_pair must be at least 1".into()));
    }
    let facets = &cavity.facets;
    let m = facets.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let fi = &facets[i];
            (0..m)
                .map(|j| {
                    let fj = &facets[j];
                    if i == j || fi.panel == fj.panel || coplanar(fi, fj) {
                        return 0.0;
                    }
                    let near = (fi.center - fj.center).norm() < fi.diagonal();
                    let samples = if near {
                        cfg.samples_per_pair * cfg.near_field_boost.max(1)
                    } else {
                        cfg.samples_per_pair
                    };
                    let mut rng = pair_rng(cfg.seed, i, j, m);
                    estimate_entry(fi, fj, samples, cfg.estimator, &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// Monte Carlo kernel matrix, symmetrized when all facets share one area.
pub fn monte_carlo_kernel(cavity: &VCavity, cfg: &KernelConfig) -> Result<KernelMatrix> {
    let raw = assemble_kernel(cavity, cfg)?;
    let provenance = KernelProvenance {
        angle_deg: cavity.angle_deg,
        facets_per_side: cavity.facets_per_side,
        samples_per_pair: cfg.samples_per_pair,
        seed: cfg.seed,
        estimator: cfg.estimator,
    };
    let symmetry_residual = asymmetry(&raw);
    let a0 = cavity.facets.first().map(Facet::area).unwrap_or(0.0);
    let equal_area = cavity
        .facets
        .iter()
        .all(|f| (f.area() - a0).abs() <= 1e-12 * a0);
    let matrix = if equal_area {
        (&raw + raw.transpose()) * 0.5
    } else {
        raw
    };
    Ok(KernelMatrix {
        matrix,
        provenance,
        symmetry_residual,
    })
}

/// Directory for cached kernels: `$INTERSPEC_CACHE`, else `./.interspec-cache`.
pub fn default_cache_dir() -> PathBuf {
    std::env::var_os("INTERSPEC_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".interspec-cache"))
}

pub fn cache_file_name(angle_deg: f64, n: usize, cfg: &KernelConfig) -> String {
    format!(
        "kernel_a{angle_deg}_n{n}_s{}_b{}_seed{}_{}.bin",
        cfg.samples_per_pair,
        cfg.near_field_boost,
        cfg.seed,
        cfg.estimator.tag()
    )
}

/// Loads the kernel for `cavity` from `cache_dir`, computing and storing it
/// on a miss. Panel size is not part of the key: entries are scale invariant.
pub fn cached_kernel(cavity: &VCavity, cfg: &KernelConfig, cache_dir: Option<&Path>) -> Result<KernelMatrix> {
    let Some(dir) = cache_dir else {
        return monte_carlo_kernel(cavity, cfg);
    };
    let path = dir.join(cache_file_name(cavity.angle_deg, cavity.facets_per_side, cfg));
    if path.exists() {
        match KernelMatrix::load(&path, cfg.estimator) {
            Ok(k) if k.size() == cavity.facet_count() => return Ok(k),
            Ok(_) | Err(_) => log::warn!("ignoring unusable kernel cache {path:?}"),
        }
    }
    let k = monte_carlo_kernel(cavity, cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // Write-then-rename so concurrent readers never see a partial file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    k.save(&tmp)?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(k)
}

/// Symmetric eigendecomposition `K = Q·diag(μ)·Qᵀ`, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        q * DMatrix::from_diagonal(&self.eigenvalues) * q.transpose()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

pub fn eigendecompose(k: &KernelMatrix) -> Result<EigenSystem> {
    let m = k.matrix();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if asymmetry(m) > 1e-12 * scale {
        return Err(Error::Contract(
            "eigendecomposition fast path requires a symmetric kernel".into(),
        ));
    }
    let n = m.nrows();
    if m.iter().all(|v| *v == 0.0) {
        return Ok(EigenSystem {
            eigenvalues: DVector::zeros(n),
            eigenvectors: DMatrix::identity(n, n),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_v_cavity;

    fn small_cfg() -> KernelConfig {
        KernelConfig {
            samples_per_pair: 64,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn same_panel_blocks_are_exactly_zero() {
        let c = build_v_cavity(45.0, 1.0, 4).unwrap();
        let k = monte_carlo_kernel(&c, &small_cfg()).unwrap();
        let h = 16;
        for i in 0..32 {
            for j in 0..32 {
                if (i < h) == (j < h) {
                    assert_eq!(k.matrix()[(i, j)], 0.0);
                } else {
                    assert!(k.matrix()[(i, j)] > 0.0);
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = build_v_cavity(60.0, 1.0, 3).unwrap();
        let a = assemble_kernel(&c, &small_cfg()).unwrap();
        let b = assemble_kernel(&c, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let other = KernelConfig { seed: 8, ..small_cfg() };
        assert_ne!(a, assemble_kernel(&c, &other).unwrap());
    }

    #[test]
    fn flat_cavity_gives_zero_matrix() {
        let c = build_v_cavity(180.0, 1.0, 3).unwrap();
        for estimator in [KernelEstimator::PointToFacet, KernelEstimator::PointPair] {
            let k = monte_carlo_kernel(&c, &KernelConfig { estimator, ..small_cfg() }).unwrap();
            assert!(k.matrix().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn row_sums_below_one() {
        for angle in [30.0, 45.0, 90.0, 120.0, 150.0] {
            let c = build_v_cavity(angle, 1.0, 4).unwrap();
            let k = monte_carlo_kernel(&c, &small_cfg()).unwrap();
            for s in k.row_sums() {
                assert!((0.0..1.0).contains(&s), "angle {angle}: row sum {s}");
            }
        }
    }

    #[test]
    fn cache_round_trip_and_truncation() {
        let c = build_v_cavity(45.0, 1.0, 2).unwrap();
        let k = monte_carlo_kernel(&c, &small_cfg()).unwrap();
        let mut buf = Vec::new();
        k.write_to(&mut buf).unwrap();
        let back = KernelMatrix::read_from(&mut buf.as_slice(), KernelEstimator::PointToFacet).unwrap();
        assert_eq!(back.matrix(), k.matrix());
        assert_eq!(back.provenance, k.provenance);
        let cut = &buf[..buf.len() - 3];
        assert!(KernelMatrix::read_from(&mut &cut[..], KernelEstimator::PointToFacet).is_err());
    }

    #[test]
    fn cached_kernel_hits_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = build_v_cavity(45.0, 1.0, 2).unwrap();
        let a = cached_kernel(&c, &small_cfg(), Some(dir.path())).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let b = cached_kernel(&c, &small_cfg(), Some(dir.path())).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn eigen_of_zero_and_reconstruction() {
        let z = KernelMatrix::zeros(5);
        let e = eigendecompose(&z).unwrap();
        assert!(e.eigenvalues.iter().all(|v| *v == 0.0));
        assert_eq!(e.eigenvectors, DMatrix::identity(5, 5));

        let c = build_v_cavity(45.0, 1.0, 4).unwrap();
        let k = monte_carlo_kernel(&c, &small_cfg()).unwrap();
        let e = eigendecompose(&k).unwrap();
        let rel = (e.reconstruct() - k.matrix()).norm() / k.matrix().norm();
        assert!(rel < 1e-10, "{rel}");
        assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 0.3;
        m[(1, 0)] = 0.1;
        let k = KernelMatrix::new(m, KernelMatrix::zeros(2).provenance).unwrap();
        assert!(matches!(eigendecompose(&k), Err(Error::Contract(_))));
    }
}
