//! Finite-difference bound-state solver for `-(1/m ψ')' + Vψ = Eψ`.
//!
//! The operator is assembled in divergence form with the inverse mass
//! sampled at cell midpoints, giving a symmetric tridiagonal matrix on the
//! interior nodes (Dirichlet at both truncation edges). The lowest
//! eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration. [`solve_extrapolated`] adds one Richardson step using the grid
//! of every other node, which cancels the leading `O(h²)` error.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::MassProfile;
use crate::numgrid::{Grid, SampledFunction};

/// Relative noise floor below which samples are ignored when counting nodes.
pub const NODE_NOISE_FLOOR: f64 = 1e-9;

const BISECTION_MAX_ITER: usize = 400;
const INVERSE_ITERATIONS: usize = 4;

/// Symmetric tridiagonal discretization on the interior nodes `1..N-1`.
#[derive(Debug, Clone)]
pub struct SturmLiouvilleProblem {
    grid: Grid,
    inv_mass_half: Vec<f64>,
    potential: Vec<f64>,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl SturmLiouvilleProblem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `1/m` at the `N - 1` cell midpoints.
    pub fn inv_mass_half(&self) -> &[f64] {
        &self.inv_mass_half
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Diagonal of the interior matrix (length `N - 2`).
    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal of the interior matrix (length `N - 3`).
    pub fn off_diagonal(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Dense copy of the interior matrix. Test/diagnostic use only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diag[i];
            if i + 1 < n {
                a[i][i + 1] = self.offdiag[i];
                a[i + 1][i] = self.offdiag[i];
            }
        }
        a
    }

    /// Matrix-vector product on interior values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.offdiag[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.offdiag[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn diagonal_norm(&self) -> f64 {
        self.diag.iter().fold(0.0, |a, d| a.max(d.abs()))
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.dim() {
            let coupling = if i == 0 {
                0.0
            } else {
                self.offdiag[i - 1] * self.offdiag[i - 1] / q
            };
            q = self.diag[i] - x - coupling;
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 {
                self.offdiag[i - 1].abs()
            } else {
                0.0
            } + if i + 1 < n {
                self.offdiag[i].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// `j`-th eigenvalue (0-based) by bisection on the Sturm count.
    fn bisect(&self, j: usize, lo: f64, hi: f64) -> Result<f64> {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::Solver(format!(
            "bisection for level {j} stalled in [{lo}, {hi}] after {BISECTION_MAX_ITER} steps"
        )))
    }

    /// Solves `(T - σ) y = b` by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let eps = f64::EPSILON * self.diagonal_norm().max(1.0);
        // Rows carry (diag, upper1, upper2) after pivoting.
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - sigma).collect();
        let mut u1: Vec<f64> = self.offdiag.clone();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut l: Vec<f64> = self.offdiag.clone();
        let mut rhs = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if l[i].abs() > d[i].abs() {
                // swap rows i and i+1
                let (di, u1i, u2i, ri) = (d[i], u1[i], u2[i], rhs[i]);
                d[i] = l[i];
                u1[i] = d[i + 1];
                u2[i] = u1[i + 1];
                rhs[i] = rhs[i + 1];
                let sub = (di, u1i, u2i, ri);
                let m = sub.0 / d[i];
                d[i + 1] = sub.1 - m * u1[i];
                u1[i + 1] = sub.2 - m * u2[i];
                rhs[i + 1] = sub.3 - m * rhs[i];
            } else {
                if d[i] == 0.0 {
                    d[i] = eps;
                }
                let m = l[i] / d[i];
                d[i + 1] -= m * u1[i];
                u1[i + 1] -= m * u2[i];
                rhs[i + 1] -= m * rhs[i];
            }
            l[i] = 0.0;
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = eps;
        }
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            if i + 1 < n {
                s -= u1[i] * y[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * y[i + 2];
            }
            y[i] = s / d[i];
        }
        y
    }

    fn eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Vec<f64> {
        let n = self.dim();
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.37 * ((i as f64) * 0.61).sin())
            .collect();
        normalize_inf(&mut v);
        for _ in 0..INVERSE_ITERATIONS {
            let mut y = self.shifted_solve(lambda, &v);
            for p in previous {
                let dot: f64 = y.iter().zip(p).map(|(a, b)| a * b).sum();
                let pp: f64 = p.iter().map(|a| a * a).sum();
                y.iter_mut().zip(p).for_each(|(a, b)| *a -= dot / pp * b);
            }
            normalize_inf(&mut y);
            v = y;
        }
        v
    }
}

fn normalize_inf(v: &mut [f64]) {
    let m = v.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

/// Assembles the divergence-form operator `-(1/m ψ')' + Vψ`.
pub fn discretize(
    mass: &dyn MassProfile,
    potential: &SampledFunction,
    grid: &Grid,
) -> Result<SturmLiouvilleProblem> {
    if potential.grid() != grid {
        return Err(Error::InconsistentInput(
            "potential is sampled on a different grid".into(),
        ));
    }
    if potential.has_singular_points() {
        return Err(Error::Domain(format!(
            "potential has {} singular points; singular potentials cannot be solved",
            potential.masked_count()
        )));
    }
    let n = grid.n_points();
    let inv_mass_half: Vec<f64> = (0..n - 1)
        .map(|i| 1.0 / mass.mass(grid.midpoint(i)))
        .collect();
    if let Some(bad) = inv_mass_half.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!(
            "mass must be positive and finite on the grid (1/m = {bad})"
        )));
    }
    let h2 = grid.h() * grid.h();
    let diag: Vec<f64> = (1..n - 1)
        .map(|i| (inv_mass_half[i - 1] + inv_mass_half[i]) / h2 + potential.value(i))
        .collect();
    let offdiag: Vec<f64> = (1..n - 2).map(|i| -inv_mass_half[i] / h2).collect();
    Ok(SturmLiouvilleProblem {
        grid: *grid,
        inv_mass_half,
        potential: potential.values().to_vec(),
        diag,
        offdiag,
    })
}

/// Eigenvalues, unit-norm states, node counts and residuals.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Best estimates, Richardson-extrapolated when `extrapolated` is set.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues of the matrix on the full grid.
    pub raw_eigenvalues: Vec<f64>,
    pub eigenstates: Vec<SampledFunction>,
    pub node_counts: Vec<usize>,
    /// `‖Tψ − Eψ‖∞ / ‖ψ‖∞` per state, with the raw eigenvalue.
    pub residuals: Vec<f64>,
    pub extrapolated: bool,
    /// `‖diag T‖∞`, the scale the residuals are judged against.
    pub diagonal_norm: f64,
}

#[derive(Serialize)]
struct SpectrumJson<'a> {
    eigenvalues: &'a [f64],
    raw_eigenvalues: &'a [f64],
    node_counts: &'a [usize],
    residuals: &'a [f64],
    extrapolated: bool,
    diagonal_norm: f64,
}

impl SpectrumReport {
    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(SpectrumJson {
            eigenvalues: &self.eigenvalues,
            raw_eigenvalues: &self.raw_eigenvalues,
            node_counts: &self.node_counts,
            residuals: &self.residuals,
            extrapolated: self.extrapolated,
            diagonal_norm: self.diagonal_norm,
        })?)
    }

    /// Levels whose node count is not equal to their index.
    pub fn oscillation_violations(&self) -> Vec<usize> {
        self.node_counts
            .iter()
            .enumerate()
            .filter(|(i, &c)| *i != c)
            .map(|(i, _)| i)
            .collect()
    }
}

/// The `k` lowest eigenpairs of the assembled matrix.
pub fn lowest_eigenpairs(prob: &SturmLiouvilleProblem, k: usize) -> Result<SpectrumReport> {
    let n_points = prob.grid.n_points();
    if k == 0 || k > n_points / 10 {
        return Err(Error::Config(format!(
            "requested {k} levels on a {n_points}-point grid (allowed 1..={})",
            n_points / 10
        )));
    }
    let (lo, hi) = prob.gershgorin();
    let mut eigenvalues = Vec::with_capacity(k);
    for j in 0..k {
        let start = eigenvalues.last().copied().unwrap_or(lo);
        eigenvalues.push(prob.bisect(j, start.min(hi), hi)?);
    }
    let h = prob.grid.h();
    let mut interior_vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenstates = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut node_counts = Vec::with_capacity(k);
    for &lambda in &eigenvalues {
        let mut v = prob.eigenvector(lambda, &interior_vectors);
        let norm = (v.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Solver(format!(
                "inverse iteration produced a degenerate vector at E = {lambda}"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        fix_sign(&mut v);
        let tv = prob.apply(&v);
        let vmax = v.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
        let res = tv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).abs())
            .fold(0.0, f64::max)
            / vmax;
        residuals.push(res);
        let mut full = Vec::with_capacity(n_points);
        full.push(0.0);
        full.extend_from_slice(&v);
        full.push(0.0);
        let state = SampledFunction::new(prob.grid, full)?;
        node_counts.push(count_nodes(&state));
        eigenstates.push(state);
        interior_vectors.push(v);
    }
    Ok(SpectrumReport {
        raw_eigenvalues: eigenvalues.clone(),
        eigenvalues,
        eigenstates,
        node_counts,
        residuals,
        extrapolated: false,
        diagonal_norm: prob.diagonal_norm(),
    })
}

/// Solves on `grid` and on its every-other-node coarsening and combines the
/// eigenvalues as `(4 E_h − E_2h) / 3`. States, nodes and residuals are those
/// of the fine grid.
pub fn solve_extrapolated(
    mass: &dyn MassProfile,
    potential: &SampledFunction,
    k: usize,
) -> Result<SpectrumReport> {
    let grid = *potential.grid();
    let fine = lowest_eigenpairs(&discretize(mass, potential, &grid)?, k)?;
    let coarse_v = potential.coarsened()?;
    let coarse = lowest_eigenpairs(&discretize(mass, &coarse_v, coarse_v.grid())?, k)?;
    let eigenvalues = fine
        .raw_eigenvalues
        .iter()
        .zip(&coarse.raw_eigenvalues)
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect();
    Ok(SpectrumReport {
        eigenvalues,
        extrapolated: true,
        ..fine
    })
}

/// Plain solve on the potential's own grid.
pub fn solve(
    mass: &dyn MassProfile,
    potential: &SampledFunction,
    k: usize,
) -> Result<SpectrumReport> {
    lowest_eigenpairs(&discretize(mass, potential, potential.grid())?, k)
}

/// Makes the first lobe exceeding 1e-3 of the maximum positive.
fn fix_sign(v: &mut [f64]) {
    let vmax = v.iter().fold(0.0, |a: f64, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * vmax) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Strict sign changes among samples above the noise floor
/// (`1e-9 · max|ψ|`). Masked samples are skipped.
pub fn count_nodes(psi: &SampledFunction) -> usize {
    let floor = NODE_NOISE_FLOOR * psi.max_abs();
    let mut last = 0.0f64;
    let mut nodes = 0;
    for (_, v) in psi.unmasked() {
        if v.abs() <= floor {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            nodes += 1;
        }
        last = v;
    }
    nodes
}
