//! Physics-based baseline: fit basis coefficients of a reflectance so that
//! its interreflection render matches an observed panel image.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorimetry::CameraSensitivities;
use crate::error::{Error, Result};
use crate::geometry::VCavity;
use crate::kernel::EigenSystem;
use crate::nnls::ldp;
use crate::render::PanelImage;
use crate::spectrum::{IlluminantSpd, ReflectanceSpectrum, Spectrum, WavelengthGrid};

/// Mean spectrum plus `k` orthonormal principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceBasis {
    grid: WavelengthGrid,
    mean: DVector<f64>,
    /// `n × k`, orthonormal columns.
    vectors: DMatrix<f64>,
    /// Singular values of the centred data for each kept direction.
    pub singular_values: Vec<f64>,
}

/// Top-`k` principal components of `reflectances` after mean-centring.
pub fn build_basis(reflectances: &[ReflectanceSpectrum], k: usize) -> Result<ReflectanceBasis> {
    let first = reflectances
        .first()
        .ok_or_else(|| Error::Rank("no spectra to build a basis from".into()))?;
    let grid = *first.grid();
    let n = grid.count();
    if k == 0 || k > n {
        return Err(Error::Config(format!("basis size must be in 1..={n}, got {k}")));
    }
    if reflectances.len() < k {
        return Err(Error::Rank(format!("{} spectra cannot span {k} directions", reflectances.len())));
    }
    if reflectances.iter().any(|r| *r.grid() != grid) {
        return Err(Error::Shape("reflectances must share one grid".into()));
    }
    let count = reflectances.len();
    let mean = DVector::from_fn(n, |l, _| reflectances.iter().map(|r| r.values()[l]).sum::<f64>() / count as f64);
    let centred = DMatrix::from_fn(n, count, |l, j| reflectances[j].values()[l] - mean[l]);
    let svd = centred.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd produced no left vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values[order[0]];
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > 1e-10 * top.max(f64::MIN_POSITIVE)).count();
    if k > rank {
        return Err(Error::Rank(format!("requested {k} components but the data have rank {rank}")));
    }
    let vectors = DMatrix::from_fn(n, k, |l, c| u[(l, order[c])]);
    Ok(ReflectanceBasis {
        grid,
        mean,
        vectors,
        singular_values: order[..k].iter().map(|&i| svd.singular_values[i]).collect(),
    })
}

impl ReflectanceBasis {
    pub fn k(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `mean + B·b`, unclamped.
    pub fn expand(&self, coefficients: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.vectors * coefficients
    }

    /// Least-squares coefficients `Bᵀ(r − mean)`.
    pub fn project(&self, r: &[f64]) -> DVector<f64> {
        self.vectors.tr_mul(&(DVector::from_column_slice(r) - &self.mean))
    }

    pub fn reconstruct(&self, r: &[f64]) -> DVector<f64> {
        self.expand(&self.project(r))
    }
}

/// Metric in which gradient steps are taken and projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StepRule {
    /// Plain projected gradient.
    Euclidean,
    /// Steps scaled by the Gauss–Newton matrix `J_bᵀJ_b`, projected in its norm.
    #[default]
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub k: usize,
    pub step_rule: StepRule,
    pub max_iterations: usize,
    /// Stop once the projected-gradient step norm per unit step falls below
    /// this value times the initial gradient norm.
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant of the sufficient-decrease test.
    pub sufficient_decrease: f64,
    /// Extra seeded starting points tried when the descent from the basis
    /// mean ends above `fit_tolerance`.
    pub restarts: usize,
    pub seed: u64,
    /// Objective, relative to its value at the basis mean, regarded as an
    /// exact fit.
    pub fit_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 8,
            step_rule: StepRule::GaussNewton,
            max_iterations: 20_000,
            gradient_tolerance: 1e-26,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            restarts: 16,
            seed: 0,
            fit_tolerance: 1e-24,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("basis size must be at least 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.initial_step > 0.0) {
            return Err(Error::Config("step rule needs 0 < shrink < 1 and a positive initial step".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::Config("sufficient-decrease constant must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Panel-A render of a uniform reflectance under a known light and camera,
/// evaluated through the kernel eigenbasis.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    grid: WavelengthGrid,
    size: usize,
    channels: usize,
    eigenvalues: Vec<f64>,
    /// `Q` restricted to panel-A rows, scaled column-wise by `Qᵀ·1`.
    qw: DMatrix<f64>,
    /// `c(λ)·E0(λ)·Δλ/π`, `channels × n`.
    a: DMatrix<f64>,
}

impl ForwardOperator {
    pub fn new(cavity: &VCavity, eig: &EigenSystem, illum: &IlluminantSpd, cam: &CameraSensitivities) -> Result<Self> {
        let m = cavity.facet_count();
        if eig.size() != m {
            return Err(Error::Shape("eigensystem does not match the cavity".into()));
        }
        let grid = *cam.grid();
        if *illum.grid() != grid {
            return Err(Error::Shape("illuminant and camera grids differ".into()));
        }
        let n2 = cavity.facets_per_side * cavity.facets_per_side;
        let q = &eig.eigenvectors;
        let w = q.row_sum();
        let mut qw = q.rows(0, n2).into_owned();
        for (i, mut col) in qw.column_iter_mut().enumerate() {
            col *= w[i];
        }
        let mut a = cam.integration_matrix();
        for (l, mut col) in a.column_iter_mut().enumerate() {
            col *= illum.values()[l] / std::f64::consts::PI;
        }
        Ok(Self {
            grid,
            size: cavity.facets_per_side,
            channels: cam.len(),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            qw,
            a,
        })
    }

    pub fn output_len(&self) -> usize {
        self.size * self.size * self.channels
    }

    fn check(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.grid.count() {
            return Err(Error::Shape("reflectance length does not match the grid".into()));
        }
        for (l, &rl) in r.iter().enumerate() {
            for &mu in &self.eigenvalues {
                if 1.0 - rl * mu <= 1e-12 {
                    return Err(Error::Divergence { radius: rl * mu, wavelength: self.grid.wavelength(l) });
                }
            }
        }
        Ok(())
    }

    /// Facet-major image `[facet][channel]`.
    pub fn render(&self, r: &[f64]) -> Result<DVector<f64>> {
        self.check(r)?;
        let p = self.size * self.size;
        let mut img = DMatrix::<f64>::zeros(p, self.channels);
        let mut v = DVector::zeros(self.eigenvalues.len());
        for (l, &rl) in r.iter().enumerate() {
            for (vi, &mu) in v.iter_mut().zip(&self.eigenvalues) {
                *vi = rl / (1.0 - rl * mu);
            }
            let col = &self.qw * &v;
            for c in 0..self.channels {
                img.column_mut(c).axpy(self.a[(c, l)], &col, 1.0);
            }
        }
        Ok(DVector::from_iterator(p * self.channels, (0..p).flat_map(|f| (0..self.channels).map(move |c| (f, c))).map(|(f, c)| img[(f, c)])))
    }

    /// `∂ image / ∂ r`, `(facets·channels) × n`.
    pub fn jacobian(&self, r: &[f64]) -> Result<DMatrix<f64>> {
        self.check(r)?;
        let p = self.size * self.size;
        let s = self.channels;
        let mut jac = DMatrix::zeros(p * s, r.len());
        let mut v = DVector::zeros(self.eigenvalues.len());
        for (l, &rl) in r.iter().enumerate() {
            for (vi, &mu) in v.iter_mut().zip(&self.eigenvalues) {
                let d = 1.0 - rl * mu;
                *vi = 1.0 / (d * d);
            }
            let col = &self.qw * &v;
            for f in 0..p {
                for c in 0..s {
                    jac[(f * s + c, l)] = self.a[(c, l)] * col[f];
                }
            }
        }
        Ok(jac)
    }
}

/// Outcome of one baseline fit.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseEstimate {
    pub reflectance: ReflectanceSpectrum,
    pub coefficients: DVector<f64>,
    /// Objective after each accepted step, starting from the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Numerical rank of `∂ image / ∂ b` at the solution.
    pub jacobian_rank: usize,
    /// The image does not determine all `k` coefficients, as happens on a
    /// flat plate where every facet reads `C·(r ⊙ E)`.
    pub ambiguous: bool,
}

/// `½‖image − render(mean + B·b)‖²` and its gradient in `b`.
pub fn objective_and_gradient(
    op: &ForwardOperator,
    basis: &ReflectanceBasis,
    image: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let r = basis.expand(b);
    let residual = op.render(r.as_slice())? - image;
    let f = 0.5 * residual.norm_squared();
    if !f.is_finite() {
        return Err(Error::Numeric("objective is not finite".into()));
    }
    let jac = op.jacobian(r.as_slice())?;
    let g = basis.vectors().tr_mul(&jac.tr_mul(&residual));
    Ok((f, g))
}

/// Euclidean projection of `z` onto `{b : 0 ≤ mean + B·b ≤ 1}`.
fn project_feasible(basis: &ReflectanceBasis, z: &DVector<f64>) -> Result<DVector<f64>> {
    let r = basis.expand(z);
    if r.iter().all(|v| (0.0..=1.0).contains(v)) {
        return Ok(z.clone());
    }
    let n = r.len();
    let k = basis.k();
    let bmat = basis.vectors();
    let mut g = DMatrix::zeros(2 * n, k);
    g.view_mut((0, 0), (n, k)).copy_from(bmat);
    g.view_mut((n, 0), (n, k)).copy_from(&(-bmat));
    // x = b − z: B·x ≥ −r and −B·x ≥ r − 1
    let mut h = DVector::zeros(2 * n);
    for l in 0..n {
        h[l] = -r[l];
        h[n + l] = r[l] - 1.0;
    }
    Ok(z + ldp(&g, &h)?)
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > 1e-8 * top).count()
}

/// SVD of `J_b` at the current coefficients.
struct JacobianSvd {
    singular_values: DVector<f64>,
    v_t: DMatrix<f64>,
}

impl JacobianSvd {
    fn at(op: &ForwardOperator, basis: &ReflectanceBasis, b: &DVector<f64>) -> Result<Self> {
        let jb = op.jacobian(basis.expand(b).as_slice())? * basis.vectors();
        let svd = jb.svd(false, true);
        Ok(Self {
            v_t: svd.v_t.ok_or_else(|| Error::Numeric("svd produced no right vectors".into()))?,
            singular_values: svd.singular_values,
        })
    }

    fn top(&self) -> f64 {
        self.singular_values.max()
    }

    /// Damped Gauss–Newton direction `(J_bᵀJ_b + λI)⁻¹·g`.
    fn direction(&self, g: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let mut coeff = &self.v_t * g;
        for (c, s) in coeff.iter_mut().zip(self.singular_values.iter()) {
            let d = s * s + lambda;
            *c = if d > 0.0 { *c / d } else { 0.0 };
        }
        self.v_t.tr_mul(&coeff)
    }
}

/// One backtracking search along `−direction`, each trial projected onto
/// the feasible set and tested for sufficient decrease.
#[allow(clippy::too_many_arguments)]
fn backtrack(
    op: &ForwardOperator,
    basis: &ReflectanceBasis,
    target: &DVector<f64>,
    b: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    direction: &DVector<f64>,
    step: &mut f64,
    cfg: &SolverConfig,
) -> Result<Option<Accepted>> {
    backtrack_limited(op, basis, target, b, f, g, direction, step, cfg, 60)
}

type Accepted = (DVector<f64>, f64, DVector<f64>, f64);

#[allow(clippy::too_many_arguments)]
fn backtrack_limited(
    op: &ForwardOperator,
    basis: &ReflectanceBasis,
    target: &DVector<f64>,
    b: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    direction: &DVector<f64>,
    step: &mut f64,
    cfg: &SolverConfig,
    trials: usize,
) -> Result<Option<Accepted>> {
    for _ in 0..trials {
        let cand = project_feasible(basis, &(b - direction * *step))?;
        let decrease = -g.dot(&(&cand - b));
        if decrease > 0.0 {
            match objective_and_gradient(op, basis, target, &cand) {
                Ok((fc, gc)) if fc <= f - cfg.sufficient_decrease * decrease => {
                    return Ok(Some((cand, fc, gc, decrease)));
                }
                Ok(_) | Err(Error::Divergence { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        *step *= cfg.shrink;
    }
    Ok(None)
}

struct Descent {
    b: DVector<f64>,
    f: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// `b` displaced at random along the poorly observed right singular
/// directions of `J_b`.
fn weak_kick(op: &ForwardOperator, basis: &ReflectanceBasis, b: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let jsvd = JacobianSvd::at(op, basis, b)?;
    let cut = 1e-2 * jsvd.top();
    let mut z = b.clone();
    for (row, s) in jsvd.v_t.row_iter().zip(jsvd.singular_values.iter()) {
        if *s < cut {
            z += row.transpose() * rng.random_range(-0.2..0.2);
        }
    }
    Ok(z)
}

/// One projected descent from `start`.
fn descend(
    op: &ForwardOperator,
    basis: &ReflectanceBasis,
    target: &DVector<f64>,
    start: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<Descent> {
    let mut b = project_feasible(basis, &start)?;
    let (mut f, mut g) = objective_and_gradient(op, basis, target, &b)?;
    let mut trace = vec![f];
    let f0 = f.max(f64::MIN_POSITIVE);
    let mut step = cfg.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = f64::NAN;
    while iterations < cfg.max_iterations && f > 0.0 {
        iterations += 1;
        let mut accepted = None;
        if cfg.step_rule == StepRule::GaussNewton {
            let jsvd = JacobianSvd::at(op, basis, &b)?;
            let floor = 1e-24 * jsvd.top().powi(2);
            if lambda.is_nan() {
                lambda = 1e-2 * jsvd.top().powi(2);
            }
            for _ in 0..40 {
                let d = jsvd.direction(&g, lambda);
                let mut t = 1.0;
                let shallow = SolverConfig { shrink: 0.5, ..*cfg };
                if let Some(hit) = backtrack_limited(op, basis, target, &b, f, &g, &d, &mut t, &shallow, 1)? {
                    accepted = Some(hit);
                    lambda = (lambda / 3.0).max(floor);
                    break;
                }
                lambda *= 4.0;
            }
        }
        if accepted.is_none() {
            accepted = backtrack(op, basis, target, &b, f, &g, &g.clone(), &mut step, cfg)?;
            step /= cfg.shrink;
        }
        let Some((cand, fc, gc, decrease)) = accepted else {
            converged = true;
            break;
        };
        b = cand;
        g = gc;
        let improvement = f - fc;
        f = fc;
        trace.push(f);
        if decrease <= cfg.gradient_tolerance * f0 || improvement <= 0.0 {
            converged = true;
            break;
        }
    }
    if f == 0.0 {
        converged = true;
    }
    Ok(Descent { b, f, trace, iterations, converged })
}

/// Projected gradient with backtracking from the basis mean, then from seeded
/// random starts until the image is fit exactly. Under
/// [`StepRule::GaussNewton`] each trial direction is first rescaled by the
/// Gauss–Newton matrix, with a plain gradient step as fallback.
pub fn estimate_reflectance(
    image: &PanelImage,
    op: &ForwardOperator,
    basis: &ReflectanceBasis,
    cfg: &SolverConfig,
) -> Result<InverseEstimate> {
    cfg.validate()?;
    if image.data.len() != op.output_len() {
        return Err(Error::Shape("image does not match the forward operator".into()));
    }
    if *basis.grid() != op.grid {
        return Err(Error::Shape("basis and camera grids differ".into()));
    }
    let target = DVector::from_column_slice(&image.data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = descend(op, basis, &target, DVector::zeros(basis.k()), cfg)?;
    let exact = cfg.fit_tolerance * best.trace[0];
    let mut iterations = best.iterations;
    for attempt in 0..cfg.restarts {
        if best.f <= exact {
            break;
        }
        let z = if attempt % 2 == 0 {
            weak_kick(op, basis, &best.b, &mut rng)?
        } else {
            DVector::from_fn(basis.k(), |j, _| rng.random_range(-1.0..1.0) / (j + 1) as f64)
        };
        let run = descend(op, basis, &target, z, cfg)?;
        iterations += run.iterations;
        if run.f < best.f {
            best = run;
        }
    }
    let Descent { b, trace, converged, .. } = best;
    let r = basis.expand(&b);
    let jac_b = op.jacobian(r.as_slice())? * basis.vectors();
    let rank = numerical_rank(&jac_b);
    Ok(InverseEstimate {
        reflectance: ReflectanceSpectrum::clamped(op.grid, r.as_slice())?,
        coefficients: b,
        objective_trace: trace,
        iterations,
        converged,
        jacobian_rank: rank,
        ambiguous: rank < basis.k(),
    })
}

/// Basis over reflectance spectra given as plain spectra.
pub fn basis_from_spectra(spectra: &[Spectrum], k: usize) -> Result<ReflectanceBasis> {
    let refl = spectra
        .iter()
        .map(|s| ReflectanceSpectrum::clamped(*s.grid(), s.values()))
        .collect::<Result<Vec<_>>>()?;
    build_basis(&refl, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorimetry::ColorMatchingFunctions;
    use crate::data;
    use crate::geometry::build_v_cavity;
    use crate::kernel::{eigendecompose, monte_carlo_kernel, KernelConfig};
    use crate::render::render_panel_image;

    fn grid() -> WavelengthGrid {
        WavelengthGrid::visible()
    }

    fn munsell() -> Vec<ReflectanceSpectrum> {
        data::munsell_patches(&grid()).unwrap().into_iter().map(|p| p.reflectance).collect()
    }

    fn setup(angle: f64) -> (VCavity, EigenSystem, CameraSensitivities, IlluminantSpd) {
        let cav = build_v_cavity(angle, 1.0, 4).unwrap();
        let k = monte_carlo_kernel(&cav, &KernelConfig { samples_per_pair: 64, ..Default::default() }).unwrap();
        let eig = eigendecompose(&k).unwrap();
        let cam = CameraSensitivities::from_cmf(&ColorMatchingFunctions::cie1931(&grid()).unwrap());
        let cam = cam.scaled(cam.unit_gain()).unwrap();
        (cav, eig, cam, data::d50(&grid()).unwrap())
    }

    #[test]
    fn basis_is_orthonormal_and_complete() {
        let all = munsell();
        let b = build_basis(&all, 61).unwrap();
        let gram = b.vectors().tr_mul(b.vectors());
        assert!((gram - DMatrix::identity(61, 61)).amax() < 1e-10);
        let r = all[17].values();
        let rec = b.reconstruct(r);
        assert!(rec.iter().zip(r).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn eight_components_generalize() {
        let all = munsell();
        let (train, test): (Vec<_>, Vec<_>) = all.into_iter().enumerate().partition(|(i, _)| i % 10 != 0);
        let train: Vec<_> = train.into_iter().map(|(_, r)| r).collect();
        let b = build_basis(&train, 8).unwrap();
        let mean_rmse = test
            .iter()
            .map(|(_, r)| {
                let rec = b.reconstruct(r.values());
                (rec.iter().zip(r.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 61.0).sqrt()
            })
            .sum::<f64>()
            / test.len() as f64;
        assert!(mean_rmse < 0.02, "{mean_rmse}");
    }

    #[test]
    fn rank_deficient_request_is_rejected() {
        let all = munsell();
        assert!(matches!(build_basis(&all[..5], 5), Err(Error::Rank(_))));
        assert!(matches!(build_basis(&all[..3], 5), Err(Error::Rank(_))));
    }

    #[test]
    fn operator_matches_renderer() {
        let (cav, eig, cam, illum) = setup(60.0);
        let op = ForwardOperator::new(&cav, &eig, &illum, &cam).unwrap();
        let r = &munsell()[100];
        let want = render_panel_image(&cav, &eig, r, &illum, &cam).unwrap();
        let got = op.render(r.values()).unwrap();
        let scale = want.max();
        assert!(got.iter().zip(&want.data).all(|(a, b)| (a - b).abs() <= 1e-12 * scale));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (cav, eig, cam, illum) = setup(45.0);
        let op = ForwardOperator::new(&cav, &eig, &illum, &cam).unwrap();
        let basis = build_basis(&munsell(), 8).unwrap();
        let image = op.render(munsell()[300].values()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let b = DVector::from_fn(8, |_, _| rng.random_range(-0.1..0.1));
            let (_, g) = objective_and_gradient(&op, &basis, &image, &b).unwrap();
            for j in 0..8 {
                let eps = 1e-6;
                let (mut p, mut m) = (b.clone(), b.clone());
                p[j] += eps;
                m[j] -= eps;
                let fp = objective_and_gradient(&op, &basis, &image, &p).unwrap().0;
                let fm = objective_and_gradient(&op, &basis, &image, &m).unwrap().0;
                let num = (fp - fm) / (2.0 * eps);
                assert!((num - g[j]).abs() <= 1e-5 * num.abs().max(g[j].abs()).max(1e-9), "{num} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn projection_lands_in_the_box() {
        let basis = build_basis(&munsell(), 8).unwrap();
        let z = DVector::from_fn(8, |i, _| if i % 2 == 0 { 3.0 } else { -2.0 });
        let p = project_feasible(&basis, &z).unwrap();
        let r = basis.expand(&p);
        assert!(r.iter().all(|v| *v >= -1e-9 && *v <= 1.0 + 1e-9));
    }

    #[test]
    fn exact_recovery_and_monotone_trace() {
        let (cav, eig, cam, illum) = setup(45.0);
        let op = ForwardOperator::new(&cav, &eig, &illum, &cam).unwrap();
        let basis = build_basis(&munsell(), 8).unwrap();
        let truth = basis.reconstruct(munsell()[640].values());
        let truth = truth.map(|v| v.clamp(0.0, 1.0));
        let truth = basis.reconstruct(truth.as_slice());
        assert!(truth.iter().all(|v| (0.0..=1.0).contains(v)));
        let img = op.render(truth.as_slice()).unwrap();
        let image = PanelImage { size: 4, channels: 3, data: img.iter().copied().collect() };
        let est = estimate_reflectance(&image, &op, &basis, &SolverConfig::default()).unwrap();
        let rmse = (est.reflectance.values().iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 61.0).sqrt();
        assert!(rmse < 1e-4, "rmse {rmse} after {} iterations", est.iterations);
        assert!(est.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(!est.ambiguous);
    }

    #[test]
    fn zero_image_gives_zero_reflectance() {
        let (cav, eig, cam, illum) = setup(45.0);
        let op = ForwardOperator::new(&cav, &eig, &illum, &cam).unwrap();
        let basis = build_basis(&munsell(), 61).unwrap();
        let image = PanelImage { size: 4, channels: 3, data: vec![0.0; 48] };
        // A boundary optimum never meets the exact-fit bar.
        let cfg = SolverConfig { k: 61, restarts: 0, ..Default::default() };
        let est = estimate_reflectance(&image, &op, &basis, &cfg).unwrap();
        let peak = est.reflectance.values().iter().copied().fold(0.0, f64::max);
        assert!(peak < 1e-3, "{:?}", est.reflectance.values());
    }

    #[test]
    fn flat_plate_is_ambiguous() {
        let cav = build_v_cavity(180.0, 1.0, 4).unwrap();
        let eig = eigendecompose(&crate::kernel::KernelMatrix::zeros(cav.facet_count())).unwrap();
        let (_, _, cam, illum) = setup(45.0);
        let op = ForwardOperator::new(&cav, &eig, &illum, &cam).unwrap();
        let basis = build_basis(&munsell(), 8).unwrap();
        let img = op.render(munsell()[640].values()).unwrap();
        let image = PanelImage { size: 4, channels: 3, data: img.iter().copied().collect() };
        let est = estimate_reflectance(&image, &op, &basis, &SolverConfig { max_iterations: 200, ..Default::default() }).unwrap();
        assert!(est.jacobian_rank <= 3);
        assert!(est.ambiguous);
    }
}
