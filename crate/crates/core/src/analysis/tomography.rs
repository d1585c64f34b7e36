//! Maximum-likelihood two-qubit polarization tomography.
//!
//! The state is parameterized as rho = G^dag G / tr(G^dag G) with G lower
//! triangular (real diagonal, 16 real parameters). Settings need not form
//! complete bases, so counts are treated as a multinomial over settings:
//! `l(G) = sum_k f_k ln p_k - ln sum_k p_k` with `p_k = <v_k|G^dag G|v_k>`.
//! A quadratic penalty `(tr G^dag G - 1)^2` fixes the otherwise free scale.

use nalgebra::{DMatrix, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::entanglement::{concurrence, eof, fidelity};
use super::Estimate;
use crate::error::{Error, Result};
use crate::fock::{Matrix4c, TwoQubitDensityMatrix};
use crate::optics::{JonesVector, TomoBasis};
use crate::record::{AnalyzerLabel, CountEntry, CountRecord, SettingLabel};

const N_PARAMS: usize = 16;
/// Strictly-lower entries of G in parameter order.
const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];
const LBFGS_MEMORY: usize = 10;
/// Consecutive steps with only rounding-level decrease before a start is abandoned.
const STALL_LIMIT: usize = 50;

/// Two-photon projection vector |a> (x) |b> in the (HH, HV, VH, VV) basis.
pub(crate) fn pair_vector(a: &JonesVector, b: &JonesVector) -> Vector4<Complex64> {
    Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
}

pub fn projector(b1: TomoBasis, b2: TomoBasis) -> Matrix4c {
    let v = pair_vector(&b1.jones(), &b2.jones());
    v * v.adjoint()
}

/// The standard sixteen-setting two-qubit scheme.
pub fn james_settings() -> Vec<(TomoBasis, TomoBasis)> {
    use TomoBasis::*;
    vec![
        (H, H), (H, V), (V, V), (V, H),
        (R, H), (R, V), (D, V), (D, H),
        (D, R), (D, D), (R, D), (H, D),
        (V, D), (V, L), (H, L), (R, L),
    ]
}

/// All 36 pairs from {H, V, D, A, R, L}.
pub fn overcomplete_settings() -> Vec<(TomoBasis, TomoBasis)> {
    TomoBasis::ALL.iter().flat_map(|&a| TomoBasis::ALL.iter().map(move |&b| (a, b))).collect()
}

/// Expected coincidences `per_setting * <b1 b2|rho|b1 b2>`, rounded to integers.
pub fn analytic_tomography_counts(rho: &TwoQubitDensityMatrix, settings: &[(TomoBasis, TomoBasis)], per_setting: f64) -> CountRecord {
    let mut rec = CountRecord::new();
    for &(a, b) in settings {
        let p = rho.expectation(&projector(a, b));
        rec.push(CountEntry { label: SettingLabel::tomographic(a, b), pulses: 0, counts: (per_setting * p).round() as u64 })
            .expect("settings are unique");
    }
    rec
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub gradient_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { starts: 8, seed: 0, max_iterations: 100_000, gradient_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    #[serde(skip)]
    pub rho: Option<TwoQubitDensityMatrix>,
    /// Mean multinomial log-likelihood per count at the optimum.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Index of the start that produced the selected optimum.
    pub best_start: usize,
    pub warning: Option<String>,
}

impl TomographyResult {
    pub fn density(&self) -> &TwoQubitDensityMatrix {
        self.rho.as_ref().expect("tomography result carries a density matrix")
    }
}

/// Settings and observed frequencies prepared for the optimizer.
#[derive(Debug, Clone)]
struct Problem {
    vectors: Vec<Vector4<Complex64>>,
    /// Counts normalized to unit sum.
    weights: Vec<f64>,
    sum_projector: Matrix4c,
}

impl Problem {
    fn new(data: &[(TomoBasis, TomoBasis, f64)]) -> Result<Self> {
        check_complete(data.iter().map(|d| (d.0, d.1)))?;
        let total: f64 = data.iter().map(|d| d.2).sum();
        if !(total > 0.0) || data.iter().any(|d| !(d.2 >= 0.0)) {
            return Err(Error::IncompleteTomography("counts must be non-negative with a positive total".into()));
        }
        let vectors: Vec<_> = data.iter().map(|d| pair_vector(&d.0.jones(), &d.1.jones())).collect();
        let sum_projector = vectors.iter().fold(Matrix4c::zeros(), |acc, v| acc + v * v.adjoint());
        Ok(Problem { vectors, weights: data.iter().map(|d| d.2 / total).collect(), sum_projector })
    }

    /// Negative penalized log-likelihood and its gradient.
    fn evaluate(&self, params: &[f64; N_PARAMS]) -> (f64, [f64; N_PARAMS]) {
        let g = params_to_g(params);
        let a = g.adjoint() * g;
        let tr_a = a.trace().re;
        let norm = (a * self.sum_projector).trace().re;
        let mut ll = -norm.ln();
        let mut r = -self.sum_projector / Complex64::new(norm, 0.0);
        for (v, &w) in self.vectors.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let p = (v.adjoint() * a * v)[(0, 0)].re;
            if !(p > 0.0) {
                return (f64::INFINITY, [0.0; N_PARAMS]);
            }
            ll += w * p.ln();
            r += v * v.adjoint() * Complex64::new(w / p, 0.0);
        }
        let penalty = (tr_a - 1.0).powi(2);
        // d(-l)/dG = -2 G R, d(penalty)/dG = 4 (tr A - 1) G
        let grad_g = g * r * Complex64::new(-2.0, 0.0) + g * Complex64::new(4.0 * (tr_a - 1.0), 0.0);
        (-ll + penalty, g_to_params(&grad_g))
    }
}

fn params_to_g(p: &[f64; N_PARAMS]) -> Matrix4c {
    let mut g = Matrix4c::zeros();
    for i in 0..4 {
        g[(i, i)] = Complex64::new(p[i], 0.0);
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        g[(i, j)] = Complex64::new(p[4 + 2 * k], p[5 + 2 * k]);
    }
    g
}

/// Inverse of `params_to_g`; the imaginary diagonal is dropped.
fn g_to_params(g: &Matrix4c) -> [f64; N_PARAMS] {
    let mut p = [0.0; N_PARAMS];
    for i in 0..4 {
        p[i] = g[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        p[4 + 2 * k] = g[(i, j)].re;
        p[5 + 2 * k] = g[(i, j)].im;
    }
    p
}

/// Lower-triangular G with G^dag G = rho (slightly mixed toward I/4 to stay full rank).
fn g_from_rho(rho: &TwoQubitDensityMatrix) -> [f64; N_PARAMS] {
    let eps = 1e-6;
    let m = rho.matrix().scale(1.0 - eps) + Matrix4c::identity().scale(eps / 4.0);
    // J m J = L L^dag  =>  m = (J L^dag J)^dag (J L^dag J), J the exchange matrix
    let mut flipped = Matrix4c::zeros();
    for i in 0..4 {
        for j in 0..4 {
            flipped[(i, j)] = m[(3 - i, 3 - j)];
        }
    }
    let l = nalgebra::Cholesky::new(flipped).map(|c| c.l()).unwrap_or_else(|| Matrix4c::identity().scale(0.5));
    let lt = l.adjoint();
    let mut g = Matrix4c::zeros();
    for i in 0..4 {
        for j in 0..4 {
            g[(i, j)] = lt[(3 - i, 3 - j)];
        }
    }
    // fold diagonal phases into the rows so the diagonal is real
    for i in 0..4 {
        let d = g[(i, i)];
        if d.norm() > 0.0 {
            let phase = d.conj() / d.norm();
            for j in 0..4 {
                g[(i, j)] *= phase;
            }
        }
    }
    g_to_params(&g)
}

fn dot(a: &[f64; N_PARAMS], b: &[f64; N_PARAMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Optimum {
    params: [f64; N_PARAMS],
    value: f64,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

/// Limited-memory BFGS with Armijo backtracking.
fn minimize(problem: &Problem, start: [f64; N_PARAMS], max_iterations: usize, tol: f64) -> Optimum {
    let mut x = start;
    let (mut fx, mut gx) = problem.evaluate(&x);
    let mut history: std::collections::VecDeque<([f64; N_PARAMS], [f64; N_PARAMS], f64)> = Default::default();
    let mut iterations = 0;
    let mut stalled = 0;
    while iterations < max_iterations {
        let gnorm = dot(&gx, &gx).sqrt();
        if gnorm < tol {
            return Optimum { params: x, value: fx, iterations, gradient_norm: gnorm, converged: true };
        }
        iterations += 1;
        // two-loop recursion
        let mut q = gx;
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..N_PARAMS {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = history.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or(1.0 / gnorm.max(1.0));
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..N_PARAMS {
                q[i] += s[i] * (a - b);
            }
        }
        let mut dir = q.map(|v| -v);
        let mut slope = dot(&gx, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = gx.map(|v| -v);
            slope = -gnorm * gnorm;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = x;
            for i in 0..N_PARAMS {
                trial[i] += step * dir[i];
            }
            let (ft, gt) = problem.evaluate(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gxn)) = accepted else {
            // no descent possible at machine precision
            return Optimum { params: x, value: fx, iterations, gradient_norm: gnorm, converged: gnorm < tol };
        };
        let mut s = [0.0; N_PARAMS];
        let mut y = [0.0; N_PARAMS];
        for i in 0..N_PARAMS {
            s[i] = xn[i] - x[i];
            y[i] = gxn[i] - gx[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        if fx - fxn <= 4.0 * f64::EPSILON * fx.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = xn;
        fx = fxn;
        gx = gxn;
        if stalled >= STALL_LIMIT {
            break;
        }
    }
    let gnorm = dot(&gx, &gx).sqrt();
    Optimum { params: x, value: fx, iterations, gradient_norm: gnorm, converged: gnorm < tol }
}

/// Real-coefficient rank of the projector set over the 16-dimensional space of
/// Hermitian 4x4 operators.
fn check_complete(settings: impl Iterator<Item = (TomoBasis, TomoBasis)>) -> Result<()> {
    let rows: Vec<[f64; 16]> = settings
        .map(|(a, b)| {
            let m = projector(a, b);
            let mut r = [0.0; 16];
            let mut k = 0;
            for i in 0..4 {
                r[k] = m[(i, i)].re;
                k += 1;
                for j in (i + 1)..4 {
                    r[k] = m[(i, j)].re;
                    r[k + 1] = m[(i, j)].im;
                    k += 2;
                }
            }
            r
        })
        .collect();
    if rows.len() < 16 {
        return Err(Error::IncompleteTomography(format!("{} settings cannot determine 16 parameters", rows.len())));
    }
    let design = DMatrix::from_fn(rows.len(), 16, |i, j| rows[i][j]);
    let sv = design.singular_values();
    let max = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-9 * max).count();
    if rank < 16 {
        return Err(Error::IncompleteTomography(format!("projector set has rank {rank} < 16")));
    }
    Ok(())
}

/// Extracts tomographic (basis, basis, counts) triples from a record.
fn tomographic_data(record: &CountRecord) -> Result<Vec<(TomoBasis, TomoBasis, f64)>> {
    let mut out = Vec::new();
    for e in record.entries() {
        match (e.label.analyzer1, e.label.analyzer2) {
            (AnalyzerLabel::Basis(a), AnalyzerLabel::Basis(b)) => out.push((a, b, e.counts as f64)),
            _ => return Err(Error::IncompleteTomography(format!("setting {} is not a tomographic projector pair", e.label))),
        }
    }
    Ok(out)
}

/// Maximum-likelihood density matrix from a record of projector-pair counts.
pub fn tomography_mle(record: &CountRecord, opts: &MleOptions) -> Result<TomographyResult> {
    mle_from_frequencies(&tomographic_data(record)?, opts)
}

/// Same as [`tomography_mle`] for real-valued (e.g. noiseless expected) counts.
pub fn mle_from_frequencies(data: &[(TomoBasis, TomoBasis, f64)], opts: &MleOptions) -> Result<TomographyResult> {
    let problem = Problem::new(data)?;
    let starts = opts.starts.max(1);
    let results: Vec<Optimum> = (0..starts)
        .into_par_iter()
        .map(|s| minimize(&problem, start_point(opts.seed, s), opts.max_iterations, opts.gradient_tol))
        .collect();
    // highest likelihood, ties to the lowest start index
    let (best_start, best) = results
        .iter()
        .enumerate()
        .fold(None::<(usize, &Optimum)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.value <= r.value => acc,
            _ => Some((i, r)),
        })
        .expect("at least one start");
    finish(best, best_start)
}

fn finish(best: &Optimum, best_start: usize) -> Result<TomographyResult> {
    let g = params_to_g(&best.params);
    let rho = TwoQubitDensityMatrix::from_unnormalized(g.adjoint() * g)?;
    let penalty = ((g.adjoint() * g).trace().re - 1.0).powi(2);
    let warning = (!best.converged).then(|| {
        format!(
            "optimizer stopped after {} iterations with gradient norm {:.3e}; returning best-found state",
            best.iterations, best.gradient_norm
        )
    });
    Ok(TomographyResult {
        rho: Some(rho),
        log_likelihood: -(best.value - penalty),
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
        converged: best.converged,
        best_start,
        warning,
    })
}

/// Start 0 is the maximally mixed state; the others are seeded Gaussian draws.
fn start_point(seed: u64, start: usize) -> [f64; N_PARAMS] {
    if start == 0 {
        let mut p = [0.0; N_PARAMS];
        p[..4].fill(0.5);
        return p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    let normal: Normal<f64> = Normal::new(0.0, 1.0).unwrap();
    let mut p = [0.0; N_PARAMS];
    for v in p.iter_mut() {
        *v = normal.sample(&mut rng);
    }
    for v in p[..4].iter_mut() {
        *v = f64::abs(*v).max(0.05);
    }
    let scale = dot(&p, &p).sqrt();
    p.map(|v| v / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub seed: u64,
    pub fidelity: Estimate,
    pub concurrence: Estimate,
    pub eof: Estimate,
}

/// Parametric bootstrap: every resample redraws each setting's counts from a
/// Poisson law with the observed mean and re-runs the estimator warm-started at
/// `estimate`. Uncertainties are the resample standard deviations around the
/// point estimates.
pub fn bootstrap_metrics(
    record: &CountRecord,
    estimate: &TwoQubitDensityMatrix,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    let data = tomographic_data(record)?;
    Problem::new(&data)?;
    let warm = g_from_rho(estimate);
    let metrics: Vec<[f64; 3]> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let resampled: Vec<(TomoBasis, TomoBasis, f64)> = data
                .iter()
                .map(|&(a, b, n)| {
                    let draw = if n > 0.0 { Poisson::new(n).unwrap().sample(&mut rng) } else { 0.0 };
                    (a, b, draw)
                })
                .collect();
            let problem = Problem::new(&resampled).ok()?;
            let opt = minimize(&problem, warm, 20_000, 1e-7);
            let g = params_to_g(&opt.params);
            let rho = TwoQubitDensityMatrix::from_unnormalized(g.adjoint() * g).ok()?;
            let c = concurrence(&rho);
            Some([fidelity(&rho), c, eof(c)])
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let centre = {
        let c = concurrence(estimate);
        [fidelity(estimate), c, eof(c)]
    };
    let spread = |k: usize| {
        if metrics.len() < 2 {
            return 0.0;
        }
        let mean = metrics.iter().map(|m| m[k]).sum::<f64>() / metrics.len() as f64;
        (metrics.iter().map(|m| (m[k] - mean).powi(2)).sum::<f64>() / (metrics.len() - 1) as f64).sqrt()
    };
    Ok(BootstrapSummary {
        resamples: metrics.len(),
        seed,
        fidelity: Estimate::new(centre[0], spread(0)),
        concurrence: Estimate::new(centre[1], spread(1)),
        eof: Estimate::new(centre[2], spread(2)),
    })
}
