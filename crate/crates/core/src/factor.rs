//! Excited-state factorization and its nonsingular deformation.
//!
//! With `Wₙ = −ψₙ'/(√m ψₙ)` the first-order operators
//!
//! ```text
//! A⁺ = (1/√m) d/dx + W,      A⁻ = −(1/√m) d/dx − (1/√m)' + W
//! ```
//!
//! factor `Hₙ⁻ = A⁻A⁺ = H₀⁻ − Eₙ`. For `n > 0`, `Wₙ` has a pole at every node
//! of `ψₙ` and the partner `Vₙ⁺` is singular. Replacing `W` by `W + fₙ`, with
//! `fₙ` solving
//!
//! ```text
//! fₙ'/√m + (2Wₙ + m'/(2m^{3/2})) fₙ + fₙ² = β,
//! ```
//!
//! keeps `Ãₙ⁺Ãₙ⁻ = Aₙ⁺Aₙ⁻ + β` and yields the regular partner
//! `Ṽₙ⁻ = Vₙ⁻ − 2fₙ'/√m + β`, whose spectrum is that of `Hₙ⁻` shifted by `β`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{MassProfile, PdmModel};
use crate::numgrid::{self, Anchor, Grid, SampledFunction};
use crate::spectra::{count_nodes, NODE_NOISE_FLOOR};

/// Grid points masked on each side of a wavefunction node.
pub const DEFAULT_GUARD: usize = 3;

/// Longest masked run that bridging will fill.
const MAX_BRIDGE_RUN: usize = 24;

/// `ψₙ` must be normalized to this accuracy for the Bernoulli route.
const NORMALIZATION_TOL: f64 = 1e-6;

/// A state is treated as vanishing at a node when its interpolated value
/// there is below this fraction of its maximum.
const VANISHING_AT_NODE: f64 = 1e-6;

/// Relative tolerance of the Wronskian identity used to vet seeds.
const SEED_TOL: f64 = 1e-4;

/// Relative edge amplitude above which a zero mode is declared
/// non-normalizable.
const EDGE_LEAK_TOL: f64 = 1e-3;

/// `Wₙ = −ψₙ'/(√m ψₙ)` with pole bands masked.
#[derive(Debug, Clone)]
pub struct Superpotential {
    level: usize,
    values: SampledFunction,
    node_positions: Vec<f64>,
}

impl Superpotential {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &SampledFunction {
        &self.values
    }

    /// Poles, i.e. the nodes of `ψₙ`.
    pub fn node_positions(&self) -> &[f64] {
        &self.node_positions
    }

    pub fn grid(&self) -> &Grid {
        self.values.grid()
    }
}

/// Node positions by linear interpolation of sign changes above the noise
/// floor.
pub fn locate_nodes(psi: &SampledFunction) -> Vec<f64> {
    let floor = NODE_NOISE_FLOOR * psi.max_abs();
    let grid = psi.grid();
    let mut nodes = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for (i, v) in psi.unmasked() {
        if v.abs() <= floor {
            continue;
        }
        if let Some((j, u)) = last {
            if (u > 0.0) != (v > 0.0) {
                let (xj, xi) = (grid.point(j), grid.point(i));
                nodes.push(xj + (xi - xj) * u / (u - v));
            }
        }
        last = Some((i, v));
    }
    nodes
}

/// Superpotential from the `n`-th state with the default guard band.
pub fn superpotential(
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
    n: usize,
) -> Result<Superpotential> {
    superpotential_with_guard(psi_n, mass, n, DEFAULT_GUARD)
}

pub fn superpotential_with_guard(
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
    n: usize,
    guard: usize,
) -> Result<Superpotential> {
    let node_positions = locate_nodes(psi_n);
    if node_positions.len() != n {
        return Err(Error::InconsistentInput(format!(
            "state used for level {n} has {} nodes",
            node_positions.len()
        )));
    }
    let grid = *psi_n.grid();
    let dpsi = numgrid::derivative(psi_n)?;
    let mut mask: Vec<bool> = dpsi.singular_mask().to_vec();
    for &x0 in &node_positions {
        let c = grid.nearest_index(x0);
        let lo = c.saturating_sub(guard);
        let hi = (c + guard).min(grid.n_points() - 1);
        mask[lo..=hi].iter_mut().for_each(|m| *m = true);
    }
    let values = grid
        .points()
        .enumerate()
        .map(|(i, x)| {
            if mask[i] {
                f64::NAN
            } else {
                -dpsi.value(i) / (mass.mass(x).sqrt() * psi_n.value(i))
            }
        })
        .collect();
    Ok(Superpotential {
        level: n,
        values: SampledFunction::with_mask(grid, values, mask)?,
        node_positions,
    })
}

/// `Vₙ⁻ = V₀⁻ − Eₙ`.
pub fn partner_minus(v0: &SampledFunction, e_n: f64) -> SampledFunction {
    v0.map(|_, v| v - e_n)
}

/// `Vₙ⁺ = Vₙ⁻ + 2Wₙ'/√m − (1/√m)(1/√m)''`, masked around the poles of `Wₙ`.
pub fn partner_plus(
    w: &Superpotential,
    mass: &dyn MassProfile,
    v_n_minus: &SampledFunction,
) -> Result<SampledFunction> {
    w.values.check_same_grid(v_n_minus)?;
    let dw = numgrid::derivative(&w.values)?;
    let grid = *v_n_minus.grid();
    let values = (0..grid.n_points())
        .map(|i| {
            let x = grid.point(i);
            let inv_sqrt_m = 1.0 / mass.mass(x).sqrt();
            v_n_minus.value(i) + 2.0 * dw.value(i) * inv_sqrt_m
                - inv_sqrt_m * mass.inv_sqrt_mass_d2(x)
        })
        .collect();
    let mask = dw
        .singular_mask()
        .iter()
        .zip(v_n_minus.singular_mask())
        .map(|(a, b)| *a || *b)
        .collect();
    SampledFunction::with_mask(grid, values, mask)
}

/// Which integration constant the Bernoulli solution is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `F(x_min) = 0`: nonsingular iff `λ ∉ [−1, 0]`.
    Normalized,
    /// The primitive vanishing at `x = 0`, as in the closed forms of the
    /// first model: nonsingular iff `λ ∉ [−1/2, 1/2]` for an even `ψₙ²`.
    PaperEx1,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Normalized => "normalized",
            Convention::PaperEx1 => "paper-ex1",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Convention::Normalized),
            "paper-ex1" => Ok(Convention::PaperEx1),
            other => Err(Error::Config(format!("unknown convention {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// `β = 0`, closed-form Bernoulli solution.
    Bernoulli,
    /// `β ≠ 0`, through an auxiliary solution at energy `Eₙ − β`.
    Auxiliary,
}

/// `fₙ` together with how it was obtained.
#[derive(Debug, Clone)]
pub struct DeformationFunction {
    values: SampledFunction,
    lambda: Option<f64>,
    beta: f64,
    route: Route,
    convention: Option<Convention>,
    /// `λ + F` (Bernoulli) or `χₙ` (auxiliary): `fₙ = (1/√m)(log denominator)'`.
    log_argument: SampledFunction,
    /// `fₙWₙ` in a form that is regular at the nodes of `ψₙ`.
    times_w: Option<SampledFunction>,
}

impl DeformationFunction {
    pub fn values(&self) -> &SampledFunction {
        &self.values
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn convention(&self) -> Option<Convention> {
        self.convention
    }

    pub fn is_singular(&self) -> bool {
        self.values.has_singular_points()
    }

    /// `λ + F(x)` on the Bernoulli route, `χₙ` on the auxiliary route.
    pub fn log_argument(&self) -> &SampledFunction {
        &self.log_argument
    }
}

/// Masks both ends of every sign change (or exact zero) of `d`.
fn crossing_mask(d: &[f64], zero_tol: f64) -> Vec<bool> {
    let n = d.len();
    let mut mask = vec![false; n];
    for i in 0..n {
        if d[i].abs() <= zero_tol {
            mask[i] = true;
        }
        if i + 1 < n && (d[i] > 0.0) != (d[i + 1] > 0.0) {
            mask[i] = true;
            mask[i + 1] = true;
        }
    }
    mask
}

/// The running integral `F` of `ψₙ²` in the requested convention.
pub fn running_norm(psi_n: &SampledFunction, convention: Convention) -> Result<SampledFunction> {
    let density = psi_n.map(|_, v| v * v);
    let left = numgrid::cumulative_integral(&density, Anchor::LeftEdge)?;
    match convention {
        Convention::Normalized => Ok(left),
        Convention::PaperEx1 => {
            let at_origin = left.interpolate(0.0)?;
            numgrid::cumulative_integral(&density, Anchor::ValueAtLeft(-at_origin))
        }
    }
}

/// `fₙ = ψₙ² / (√m (λ + F))` in the normalized convention.
pub fn bernoulli_f(
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
    lambda: f64,
) -> Result<DeformationFunction> {
    bernoulli_f_with(psi_n, mass, lambda, Convention::Normalized)
}

/// `fₙ = ψₙ² / (√m (λ + F))`. Points where `λ + F` vanishes or changes sign
/// are masked; the singularity is reported through the mask.
pub fn bernoulli_f_with(
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
    lambda: f64,
    convention: Convention,
) -> Result<DeformationFunction> {
    if !lambda.is_finite() {
        return Err(Error::Config(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let norm2 = numgrid::definite_integral(&psi_n.map(|_, v| v * v))?;
    if (norm2 - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InconsistentInput(format!(
            "Bernoulli route needs a normalized state, got ∫ψ² = {norm2}"
        )));
    }
    let big_f = running_norm(psi_n, convention)?;
    let denom: Vec<f64> = big_f.values().iter().map(|v| lambda + v).collect();
    let mask = crossing_mask(&denom, 1e-12);
    let grid = *psi_n.grid();
    let values = (0..grid.n_points())
        .map(|i| {
            if mask[i] {
                f64::NAN
            } else {
                psi_n.value(i).powi(2) / (mass.mass(grid.point(i)).sqrt() * denom[i])
            }
        })
        .collect();
    // fₙWₙ = −ψₙψₙ'/(m(λ + F))
    let dpsi = numgrid::derivative(psi_n)?;
    let times_w = (0..grid.n_points())
        .map(|i| {
            if mask[i] {
                f64::NAN
            } else {
                -psi_n.value(i) * dpsi.value(i) / (mass.mass(grid.point(i)) * denom[i])
            }
        })
        .collect();
    Ok(DeformationFunction {
        values: SampledFunction::with_mask(grid, values, mask.clone())?,
        lambda: Some(lambda),
        beta: 0.0,
        route: Route::Bernoulli,
        convention: Some(convention),
        times_w: Some(SampledFunction::with_mask(grid, times_w, mask.clone())?),
        log_argument: SampledFunction::with_mask(grid, denom, mask)?,
    })
}

/// `ψ⁺ = Aₙ⁺ seed`, masked around the poles of `Wₙ`.
pub fn auxiliary_plus_state(
    seed: &SampledFunction,
    w: &Superpotential,
    mass: &dyn MassProfile,
) -> Result<SampledFunction> {
    apply_ladder(seed, w, None, mass, Ladder::APlus)
}

/// `χₙ = ψₙ ψ⁺/√m` written out as `(ψₙ seed' − ψₙ' seed)/m`, which is free of
/// the removable poles `ψ⁺` carries at the nodes of `ψₙ`.
pub fn chi_wronskian(
    seed: &SampledFunction,
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
) -> Result<SampledFunction> {
    seed.check_same_grid(psi_n)?;
    let ds = numgrid::derivative(seed)?;
    let dp = numgrid::derivative(psi_n)?;
    let grid = *seed.grid();
    let values = (0..grid.n_points())
        .map(|i| {
            (psi_n.value(i) * ds.value(i) - dp.value(i) * seed.value(i)) / mass.mass(grid.point(i))
        })
        .collect();
    SampledFunction::new(grid, values)
}

/// `χₙ`, accurate to relative precision even where it is exponentially
/// small.
///
/// The Wronskian form cancels catastrophically in a tail where both `ψₙ` and
/// the seed decay. Since `χₙ' = β ψₙ seed`, such a tail is integrated from
/// the edge instead, starting from `∫_{-∞}^{x₀} g ≈ g(x₀)/κ` for the product
/// `g = ψₙ seed` with edge log-derivative `κ`.
pub fn chi(
    seed: &SampledFunction,
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
    beta: f64,
) -> Result<SampledFunction> {
    let wr = chi_wronskian(seed, psi_n, mass)?;
    let scale = wr.max_abs();
    let last = wr.len() - 1;
    let small = |v: f64| v.abs() <= 1e-8 * scale;
    if beta == 0.0 || !(small(wr.value(0)) || small(wr.value(last))) {
        return Ok(wr);
    }
    let g = seed.zip_with(psi_n, |a, b| a * b)?;
    let dg = numgrid::derivative(&g)?;
    let from_left = small(wr.value(0));
    let edge = if from_left { 0 } else { last };
    let kappa = dg.value(edge) / g.value(edge);
    let decaying = if from_left { kappa > 0.0 } else { kappa < 0.0 };
    let tail = if decaying && kappa.is_finite() {
        beta * g.value(edge) / kappa
    } else {
        wr.value(edge)
    };
    let src = g.scaled(beta);
    if from_left {
        numgrid::cumulative_integral(&src, Anchor::ValueAtLeft(tail))
    } else {
        let total = numgrid::definite_integral(&src)?;
        numgrid::cumulative_integral(&src, Anchor::ValueAtLeft(tail - total))
    }
}

/// Checks `χₙ' = β ψₙ seed`, which holds whenever `seed` solves the model
/// equation at `Eₙ − β` and `ψₙ` at `Eₙ`. Returns the relative defect.
pub fn seed_consistency(
    seed: &SampledFunction,
    psi_n: &SampledFunction,
    chi_n: &SampledFunction,
    beta: f64,
) -> Result<f64> {
    let dchi = numgrid::derivative(chi_n)?;
    let n = seed.len();
    let margin = numgrid::STENCIL_WIDTH;
    let mut defect: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in margin..n - margin {
        let src = beta * psi_n.value(i) * seed.value(i);
        defect = defect.max((dchi.value(i) - src).abs());
        scale = scale.max(dchi.value(i).abs()).max(src.abs());
    }
    Ok(if scale > 0.0 { defect / scale } else { 0.0 })
}

/// `fₙ = (1/√m)(log χₙ)'` from a solution `seed` of the model equation at
/// energy `Eₙ − β`.
pub fn auxiliary_f(
    seed: &SampledFunction,
    psi_n: &SampledFunction,
    mass: &dyn MassProfile,
    w: &Superpotential,
    beta: f64,
) -> Result<DeformationFunction> {
    seed.check_same_grid(psi_n)?;
    w.values.check_same_grid(psi_n)?;
    if seed.has_singular_points() {
        return Err(Error::InconsistentInput("seed has singular points".into()));
    }
    let defect = seed_consistency(seed, psi_n, &chi_wronskian(seed, psi_n, mass)?, beta)?;
    if defect > SEED_TOL {
        return Err(Error::InconsistentInput(format!(
            "seed does not solve the model equation at E_n − β (Wronskian defect {defect:.3e})"
        )));
    }
    let chi_n = chi(seed, psi_n, mass, beta)?;
    let grid = *seed.grid();
    let crossing = crossing_mask(chi_n.values(), 0.0);
    // χₙ' = β ψₙ seed exactly
    let values = (0..grid.n_points())
        .map(|i| {
            if crossing[i] {
                f64::NAN
            } else {
                beta * psi_n.value(i) * seed.value(i)
                    / (mass.mass(grid.point(i)).sqrt() * chi_n.value(i))
            }
        })
        .collect();
    // fₙWₙ = −β seed ψₙ'/(m χₙ)
    let dpsi = numgrid::derivative(psi_n)?;
    let times_w = (0..grid.n_points())
        .map(|i| {
            if crossing[i] {
                f64::NAN
            } else {
                -beta * seed.value(i) * dpsi.value(i) / (mass.mass(grid.point(i)) * chi_n.value(i))
            }
        })
        .collect();
    Ok(DeformationFunction {
        times_w: Some(SampledFunction::with_mask(grid, times_w, crossing.clone())?),
        values: SampledFunction::with_mask(grid, values, crossing)?,
        lambda: None,
        beta,
        route: Route::Auxiliary,
        convention: None,
        log_argument: chi_n,
    })
}

/// `fₙ'/√m + (2Wₙ + m'/(2m^{3/2})) fₙ + fₙ² − β`, masked wherever `Wₙ` or
/// `fₙ'` is.
pub fn riccati_residual(
    f: &DeformationFunction,
    w: &Superpotential,
    mass: &dyn MassProfile,
) -> Result<SampledFunction> {
    f.values.check_same_grid(&w.values)?;
    let df = numgrid::derivative(&f.values)?;
    let grid = *f.values.grid();
    let values = (0..grid.n_points())
        .map(|i| {
            let x = grid.point(i);
            let m = mass.mass(x);
            let fi = f.values.value(i);
            df.value(i) / m.sqrt()
                + (2.0 * w.values.value(i) + mass.mass_d1(x) / (2.0 * m * m.sqrt())) * fi
                + fi * fi
                - f.beta
        })
        .collect();
    let mask = (0..grid.n_points())
        .map(|i| df.is_masked(i) || w.values.is_masked(i) || f.values.is_masked(i))
        .collect();
    SampledFunction::with_mask(grid, values, mask)
}

/// `Ṽₙ⁻ = Vₙ⁻ − 2fₙ'/√m + β`.
pub fn deformed_partner(
    v_n_minus: &SampledFunction,
    f: &DeformationFunction,
    mass: &dyn MassProfile,
    beta: f64,
) -> Result<SampledFunction> {
    v_n_minus.check_same_grid(&f.values)?;
    let df = numgrid::derivative(&f.values)?;
    let grid = *v_n_minus.grid();
    let values = (0..grid.n_points())
        .map(|i| v_n_minus.value(i) - 2.0 * df.value(i) / mass.mass(grid.point(i)).sqrt() + beta)
        .collect();
    let mask = df
        .singular_mask()
        .iter()
        .zip(v_n_minus.singular_mask())
        .map(|(a, b)| *a || *b)
        .collect();
    SampledFunction::with_mask(grid, values, mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ladder {
    APlus,
    AMinus,
    AtildePlus,
    AtildeMinus,
}

/// Applies one of the four first-order operators. Around the poles of `W`
/// the output is masked, then bridged by interpolation when `ψ` itself
/// vanishes at the pole (the product `Wψ` is finite there).
pub fn apply_ladder(
    psi: &SampledFunction,
    w: &Superpotential,
    f: Option<&DeformationFunction>,
    mass: &dyn MassProfile,
    which: Ladder,
) -> Result<SampledFunction> {
    psi.check_same_grid(&w.values)?;
    let tilde = matches!(which, Ladder::AtildePlus | Ladder::AtildeMinus);
    let f_vals = match (tilde, f) {
        (true, Some(f)) => {
            f.values.check_same_grid(psi)?;
            Some(&f.values)
        }
        (false, None) => None,
        (true, None) => return Err(Error::Config("deformed ladder operators need fₙ".into())),
        (false, Some(_)) => {
            return Err(Error::Config(
                "undeformed ladder operators take no fₙ".into(),
            ))
        }
    };
    let dpsi = numgrid::derivative(psi)?;
    let grid = *psi.grid();
    let mut mask = vec![false; grid.n_points()];
    let values = (0..grid.n_points())
        .map(|i| {
            let x = grid.point(i);
            let mut sup = w.values.value(i);
            mask[i] = w.values.is_masked(i) || dpsi.is_masked(i) || psi.is_masked(i);
            if let Some(fv) = f_vals {
                sup += fv.value(i);
                mask[i] |= fv.is_masked(i);
            }
            let inv_sqrt_m = 1.0 / mass.mass(x).sqrt();
            match which {
                Ladder::APlus | Ladder::AtildePlus => {
                    inv_sqrt_m * dpsi.value(i) + sup * psi.value(i)
                }
                Ladder::AMinus | Ladder::AtildeMinus => {
                    -inv_sqrt_m * dpsi.value(i) - mass.inv_sqrt_mass_d1(x) * psi.value(i)
                        + sup * psi.value(i)
                }
            }
        })
        .collect();
    let out = SampledFunction::with_mask(grid, values, mask)?;
    let psi_max = psi.max_abs();
    let vanishes = w.node_positions.iter().all(|&x0| {
        psi.interpolate(x0)
            .map(|v| v.abs() <= VANISHING_AT_NODE * psi_max)
            .unwrap_or(false)
    });
    Ok(if vanishes {
        out.bridged(MAX_BRIDGE_RUN)
    } else {
        out
    })
}

/// `fₙWₙ`: the regular form recorded with `fₙ`, or else the product with the
/// guard bands of `Wₙ` bridged (`fₙ` vanishes at the nodes of `ψₙ`, so the
/// product is finite there).
fn f_times_w(f: &DeformationFunction, w: &Superpotential) -> Result<SampledFunction> {
    if let Some(p) = &f.times_w {
        if !p.has_singular_points() {
            return Ok(p.clone());
        }
    }
    let prod = f.values.zip_with(&w.values, |a, b| a * b)?;
    let bridged = prod.bridged(MAX_BRIDGE_RUN);
    if bridged.has_singular_points() {
        return Err(Error::Precondition(
            "fₙWₙ could not be bridged across the poles of Wₙ".into(),
        ));
    }
    Ok(bridged)
}

/// Everything one factorization run produces.
#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub model: PdmModel,
    pub n: usize,
    pub grid: Grid,
    pub e_n: f64,
    pub psi_n: SampledFunction,
    pub w_n: Superpotential,
    pub f_n: DeformationFunction,
    pub v0: SampledFunction,
    pub v_n_minus: SampledFunction,
    pub v_n_plus: SampledFunction,
    pub v_tilde_minus: SampledFunction,
    pub spectrum_shift: f64,
    /// Auxiliary route only.
    pub chi_n: Option<SampledFunction>,
    /// Auxiliary route only.
    pub seed: Option<SampledFunction>,
}

/// How `fₙ` is to be obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deformation {
    Bernoulli { lambda: f64, convention: Convention },
    Auxiliary { beta: f64 },
}

/// Runs the whole pipeline for level `n` of `model` on `grid`.
pub fn factorize(
    model: &PdmModel,
    n: usize,
    deformation: Deformation,
    grid: &Grid,
) -> Result<FactorizationResult> {
    let mass = model.mass();
    let psi_n = model.eigenstate(n, grid)?;
    let w_n = superpotential(&psi_n, mass, n)?;
    let e_n = model.energy(n);
    let v0 = model.potential_on(grid);
    let v_n_minus = partner_minus(&v0, e_n);
    let v_n_plus = partner_plus(&w_n, mass, &v_n_minus)?;
    let (f_n, chi_n, seed) = match deformation {
        Deformation::Bernoulli { lambda, convention } => (
            bernoulli_f_with(&psi_n, mass, lambda, convention)?,
            None,
            None,
        ),
        Deformation::Auxiliary { beta } => {
            let seed = model.seed_solution(n, beta, grid)?;
            let f = auxiliary_f(&seed, &psi_n, mass, &w_n, beta)?;
            let chi_n = f.log_argument.clone();
            (f, Some(chi_n), Some(seed))
        }
    };
    let beta = f_n.beta;
    let v_tilde_minus = deformed_partner(&v_n_minus, &f_n, mass, beta)?;
    Ok(FactorizationResult {
        model: model.clone(),
        n,
        grid: *grid,
        e_n,
        psi_n,
        w_n,
        f_n,
        v0,
        v_n_minus,
        v_n_plus,
        v_tilde_minus,
        spectrum_shift: beta,
        chi_n,
        seed,
    })
}

impl FactorizationResult {
    pub fn beta(&self) -> f64 {
        self.spectrum_shift
    }

    pub fn is_nonsingular(&self) -> bool {
        !self.f_n.is_singular() && !self.v_tilde_minus.has_singular_points()
    }

    /// `Hₙ⁻ψ = −(1/m)ψ'' + (m'/m²)ψ' + Vₙ⁻ψ`.
    pub fn apply_h_minus(&self, psi: &SampledFunction) -> Result<SampledFunction> {
        apply_hamiltonian(self.model.mass(), &self.v_n_minus, psi)
    }

    /// `H̃ₙ⁻ψ = −(1/m)ψ'' + (m'/m²)ψ' + Ṽₙ⁻ψ`.
    pub fn apply_h_tilde(&self, psi: &SampledFunction) -> Result<SampledFunction> {
        apply_hamiltonian(self.model.mass(), &self.v_tilde_minus, psi)
    }

    /// The second-order operator `Ãₙ⁻Aₙ⁺`, expanded as
    /// `Hₙ⁻ + fₙWₙ + (fₙ/√m) d/dx` so that no intermediate passes through
    /// the poles of `Wₙ`.
    pub fn intertwiner(&self, psi: &SampledFunction) -> Result<SampledFunction> {
        if self.f_n.is_singular() {
            return Err(Error::Precondition("fₙ is singular".into()));
        }
        let h = self.apply_h_minus(psi)?;
        let fw = f_times_w(&self.f_n, &self.w_n)?;
        let dpsi = numgrid::derivative(psi)?;
        let grid = self.grid;
        let mass = self.model.mass();
        let values = (0..grid.n_points())
            .map(|i| {
                let fi = self.f_n.values.value(i);
                h.value(i)
                    + fw.value(i) * psi.value(i)
                    + fi / mass.mass(grid.point(i)).sqrt() * dpsi.value(i)
            })
            .collect();
        SampledFunction::new(grid, values)
    }

    /// [`intertwiner`](Self::intertwiner) for an eigenstate of `Hₙ⁻` with
    /// eigenvalue `e_k`: `Hₙ⁻ψ` is replaced by `e_k ψ`, which avoids a
    /// second difference where `1/m` is large.
    pub fn intertwiner_on_eigenstate(
        &self,
        psi: &SampledFunction,
        e_k: f64,
    ) -> Result<SampledFunction> {
        if self.f_n.is_singular() {
            return Err(Error::Precondition("fₙ is singular".into()));
        }
        let fw = f_times_w(&self.f_n, &self.w_n)?;
        let dpsi = numgrid::derivative(psi)?;
        let grid = self.grid;
        let mass = self.model.mass();
        let values = (0..grid.n_points())
            .map(|i| {
                let fi = self.f_n.values.value(i);
                (e_k + fw.value(i)) * psi.value(i)
                    + fi / mass.mass(grid.point(i)).sqrt() * dpsi.value(i)
            })
            .collect();
        SampledFunction::new(grid, values)
    }

    /// `Ãₙ⁺Ãₙ⁻ψ` and `(Aₙ⁺Aₙ⁻ + β)ψ`, each composed from the first-order
    /// operators. Both are masked where `Wₙ` is.
    pub fn nonuniqueness_pair(
        &self,
        psi: &SampledFunction,
    ) -> Result<(SampledFunction, SampledFunction)> {
        let mass = self.model.mass();
        let f = Some(&self.f_n);
        let tilde = apply_ladder(
            &apply_ladder(psi, &self.w_n, f, mass, Ladder::AtildeMinus)?,
            &self.w_n,
            f,
            mass,
            Ladder::AtildePlus,
        )?;
        let plain = apply_ladder(
            &apply_ladder(psi, &self.w_n, None, mass, Ladder::AMinus)?,
            &self.w_n,
            None,
            mass,
            Ladder::APlus,
        )?
        .zip_with(psi, |a, b| a + self.spectrum_shift * b)?;
        Ok((tilde, plain))
    }
}

/// `−(1/m)ψ'' + (m'/m²)ψ' + Vψ`.
pub fn apply_hamiltonian(
    mass: &dyn MassProfile,
    potential: &SampledFunction,
    psi: &SampledFunction,
) -> Result<SampledFunction> {
    psi.check_same_grid(potential)?;
    let d1 = numgrid::derivative(psi)?;
    let d2 = numgrid::second_derivative(psi)?;
    let grid = *psi.grid();
    let values = (0..grid.n_points())
        .map(|i| {
            let x = grid.point(i);
            let m = mass.mass(x);
            -d2.value(i) / m
                + mass.mass_d1(x) / (m * m) * d1.value(i)
                + potential.value(i) * psi.value(i)
        })
        .collect();
    let mask = (0..grid.n_points())
        .map(|i| d1.is_masked(i) || d2.is_masked(i) || potential.is_masked(i) || psi.is_masked(i))
        .collect();
    SampledFunction::with_mask(grid, values, mask)
}

/// Unit norm, first lobe above `1e-3·max` positive.
pub fn canonicalize(psi: &SampledFunction) -> Result<SampledFunction> {
    let norm = numgrid::l2_norm(psi)?;
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::NumericalDegeneracy(format!("state has norm {norm}")));
    }
    let scaled = psi.scaled(1.0 / norm);
    let vmax = scaled.max_abs();
    let first = scaled
        .unmasked()
        .map(|(_, v)| v)
        .find(|v| v.abs() > 1e-3 * vmax)
        .unwrap_or(1.0);
    Ok(if first < 0.0 {
        scaled.scaled(-1.0)
    } else {
        scaled
    })
}

/// `ψ̃_k ∝ Ãₙ⁻Aₙ⁺ψ_k`, canonicalized. The state with `n` nodes is
/// annihilated by `Aₙ⁺`; it is routed to [`zero_mode`].
pub fn map_eigenstate(
    psi_k: &SampledFunction,
    fac: &FactorizationResult,
) -> Result<SampledFunction> {
    if count_nodes(psi_k) == fac.n {
        return zero_mode(fac);
    }
    let mapped = fac.intertwiner(psi_k)?;
    let in_norm = numgrid::l2_norm(psi_k)?;
    let out_norm = numgrid::l2_norm(&mapped)?;
    if !(out_norm > 1e-5 * in_norm) {
        return Err(Error::NumericalDegeneracy(format!(
            "Ãₙ⁻Aₙ⁺ψ has norm {out_norm:.3e} for an input of norm {in_norm:.3e}"
        )));
    }
    canonicalize(&mapped)
}

/// The state annihilated by `Ãₙ⁺`: `ψₙ exp(−∫√m fₙ)`, i.e. `ψₙ/(λ + F)` on
/// the Bernoulli route.
pub fn zero_mode(fac: &FactorizationResult) -> Result<SampledFunction> {
    if fac.f_n.is_singular() {
        return Err(Error::Precondition("fₙ is singular; no zero mode".into()));
    }
    let grid = fac.grid;
    let psi_n = &fac.psi_n;
    let raw = match fac.f_n.route {
        Route::Bernoulli => psi_n.zip_with(&fac.f_n.log_argument, |p, d| p / d)?,
        Route::Auxiliary => {
            let mass = fac.model.mass();
            let integrand = fac.f_n.values.map(|x, v| mass.mass(x).sqrt() * v);
            let g = numgrid::cumulative_integral(&integrand, Anchor::LeftEdge)?;
            // exponent shifted so that the largest amplitude is O(1)
            let log_amp: Vec<f64> = (0..grid.n_points())
                .map(|i| psi_n.value(i).abs().ln() - g.value(i))
                .collect();
            let top = log_amp
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(f64::MIN, f64::max);
            let values = (0..grid.n_points())
                .map(|i| psi_n.value(i) * (-g.value(i) - top).exp())
                .collect();
            SampledFunction::new(grid, values)?
        }
    };
    let vmax = raw.max_abs();
    let edge = raw.value(0).abs().max(raw.value(raw.len() - 1).abs());
    if !(vmax.is_finite() && vmax > 0.0) || edge > EDGE_LEAK_TOL * vmax {
        return Err(Error::NonNormalizable(format!(
            "zero mode does not decay at the truncation edges (edge/max = {:.3e})",
            edge / vmax
        )));
    }
    let out = canonicalize(&raw)?;
    let nodes = count_nodes(&out);
    if nodes != fac.n {
        return Err(Error::NumericalDegeneracy(format!(
            "zero mode has {nodes} nodes, expected {}",
            fac.n
        )));
    }
    Ok(out)
}

/// `E_k − Eₙ + β` for every `E_k`.
pub fn spectrum_map(e_k: &[f64], e_n: f64, beta: f64) -> Vec<f64> {
    e_k.iter().map(|e| e - e_n + beta).collect()
}

#[derive(Serialize)]
struct FactorizationFiles {
    w_n: String,
    f_n: String,
    v_n_minus: String,
    v_n_plus: String,
    v_tilde_minus: String,
    mass: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    chi_n: Option<String>,
}

#[derive(Serialize)]
struct FactorizationJson<'a> {
    model: &'a PdmModel,
    n: usize,
    e_n: f64,
    beta: f64,
    lambda: Option<f64>,
    route: Route,
    convention: Option<Convention>,
    nonsingular: bool,
    f_n_singular_points: usize,
    spectrum_shift: f64,
    grid: Grid,
    files: FactorizationFiles,
}

impl FactorizationResult {
    /// JSON summary referencing CSV files that sit next to it.
    pub fn to_json(&self, prefix: &str) -> Result<serde_json::Value> {
        let name = |s: &str| format!("{prefix}{s}.csv");
        let doc = FactorizationJson {
            model: &self.model,
            n: self.n,
            e_n: self.e_n,
            beta: self.spectrum_shift,
            lambda: self.f_n.lambda,
            route: self.f_n.route,
            convention: self.f_n.convention,
            nonsingular: self.is_nonsingular(),
            f_n_singular_points: self.f_n.values.masked_count(),
            spectrum_shift: self.spectrum_shift,
            grid: self.grid,
            files: FactorizationFiles {
                w_n: name("W_n"),
                f_n: name("f_n"),
                v_n_minus: name("V_n_minus"),
                v_n_plus: name("V_n_plus"),
                v_tilde_minus: name("V_tilde_minus"),
                mass: name("mass"),
                chi_n: self.chi_n.as_ref().map(|_| name("chi_n")),
            },
        };
        Ok(serde_json::to_value(doc)?)
    }

    /// The sampled profiles keyed by the file stems used in [`to_json`](Self::to_json).
    pub fn profiles(&self) -> Vec<(&'static str, SampledFunction)> {
        let mass = self.model.mass();
        let mut out = vec![
            ("W_n", self.w_n.values.clone()),
            ("f_n", self.f_n.values.clone()),
            ("V_n_minus", self.v_n_minus.clone()),
            ("V_n_plus", self.v_n_plus.clone()),
            ("V_tilde_minus", self.v_tilde_minus.clone()),
            (
                "mass",
                SampledFunction::from_fn(self.grid, |x| mass.mass(x)),
            ),
        ];
        if let Some(chi) = &self.chi_n {
            out.push(("chi_n", chi.clone()));
        }
        out
    }

    /// Writes the CSV profiles into `dir`.
    pub fn write_profiles(&self, dir: &Path, prefix: &str) -> Result<()> {
        for (stem, f) in self.profiles() {
            let path = dir.join(format!("{prefix}{stem}.csv"));
            crate::cli::write_atomic(&path, |w| f.write_csv(w))?;
        }
        Ok(())
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::models::{model_constant_mass_ho, model_ex1, model_ex2, Ex1Params, Ex2Params};
    use crate::verify::interior_max_abs;
    use proptest::prelude::*;

    fn outside_window() -> impl Strategy<Value = f64> {
        prop_oneof![-4.0..-1.01f64, 0.01..4.0f64]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sign_of_the_state_does_not_matter(lambda in outside_window()) {
            let model = model_ex1(Ex1Params::new(1.0).unwrap());
            let grid = model.recommended_grid();
            let psi = model.eigenstate(1, &grid).unwrap();
            let a = bernoulli_f(&psi, model.mass(), lambda).unwrap();
            let b = bernoulli_f(&psi.scaled(-1.0), model.mass(), lambda).unwrap();
            prop_assert_eq!(a.values().values(), b.values().values());
        }

        #[test]
        fn seed_scale_does_not_matter(scale in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64], n in 1usize..3) {
            let model = model_ex2(Ex2Params::new(1.0, 5.0, 4.0).unwrap());
            let grid = model.recommended_grid();
            let psi = model.eigenstate(n, &grid).unwrap();
            let w = superpotential(&psi, model.mass(), n).unwrap();
            let seed = model.seed_solution(n, 1.0, &grid).unwrap();
            let a = auxiliary_f(&seed, &psi, model.mass(), &w, 1.0).unwrap();
            let b = auxiliary_f(&seed.scaled(scale), &psi, model.mass(), &w, 1.0).unwrap();
            for (x, y) in a.values().values().iter().zip(b.values().values()) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{x} vs {y}");
            }
        }

        #[test]
        fn singular_exactly_inside_the_unit_window(lambda in -3.0..2.0f64, n in 0usize..3) {
            prop_assume!((lambda + 1.0).abs() > 1e-3 && lambda.abs() > 1e-3);
            let model = model_constant_mass_ho();
            let psi = model.eigenstate(n, &model.recommended_grid()).unwrap();
            let f = bernoulli_f(&psi, model.mass(), lambda).unwrap();
            prop_assert_eq!(f.is_singular(), (-1.0..=0.0).contains(&lambda));
        }

        #[test]
        fn riccati_holds_for_any_regular_lambda(lambda in outside_window(), n in 0usize..3) {
            let model = model_constant_mass_ho();
            let fac = factorize(
                &model,
                n,
                Deformation::Bernoulli { lambda, convention: Convention::Normalized },
                &model.recommended_grid(),
            )
            .unwrap();
            let r = riccati_residual(&fac.f_n, &fac.w_n, model.mass()).unwrap();
            prop_assert!(interior_max_abs(&r) <= 1e-5);
        }
    }
}
