//! Checks that tie the factorization pipeline to the independent eigensolver.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{self, Convention, Deformation, FactorizationResult};
use crate::models::{model_constant_mass_ho, PdmModel};
use crate::numgrid::{Grid, SampledFunction, STENCIL_WIDTH};
use crate::spectra;

/// Points at each edge excluded from "interior" maxima (the one-sided
/// stencil zone).
pub const EDGE_MARGIN: usize = STENCIL_WIDTH / 2;

/// Width to which [`scan_lambda`] refines each transition.
pub const SCAN_RESOLUTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelPair {
    pub level: usize,
    /// `E_k + β` for the undeformed `Hₙ⁻`.
    pub expected: f64,
    pub deformed: f64,
    pub gap: f64,
    pub original_nodes: usize,
    pub deformed_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsospectralityReport {
    pub levels_checked: usize,
    pub pairs: Vec<LevelPair>,
    pub max_gap: f64,
    pub node_match: bool,
    pub tolerance: f64,
}

impl IsospectralityReport {
    pub fn passed(&self) -> bool {
        self.max_gap <= self.tolerance && self.node_match
    }

    pub fn deformed_spectrum(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.deformed).collect()
    }
}

/// Solves `(m, Vₙ⁻)` and `(m, Ṽₙ⁻)` with Richardson extrapolation and pairs
/// the sorted levels: `Ẽ_k` against `E_k + β`.
pub fn check_isospectral(
    fac: &FactorizationResult,
    k_levels: usize,
    tol: f64,
) -> Result<IsospectralityReport> {
    if !fac.is_nonsingular() {
        return Err(Error::Precondition("fₙ is singular".into()));
    }
    let mass = fac.model.mass();
    let (orig, tilde) = rayon::join(
        || spectra::solve_extrapolated(mass, &fac.v_n_minus, k_levels),
        || spectra::solve_extrapolated(mass, &fac.v_tilde_minus, k_levels),
    );
    let (orig, tilde) = (orig?, tilde?);
    let pairs: Vec<LevelPair> = (0..k_levels)
        .map(|k| {
            let expected = orig.eigenvalues[k] + fac.beta();
            let deformed = tilde.eigenvalues[k];
            LevelPair {
                level: k,
                expected,
                deformed,
                gap: (deformed - expected).abs(),
                original_nodes: orig.node_counts[k],
                deformed_nodes: tilde.node_counts[k],
            }
        })
        .collect();
    let max_gap = pairs.iter().map(|p| p.gap).fold(0.0, f64::max);
    let node_match = pairs.iter().all(|p| p.original_nodes == p.deformed_nodes);
    Ok(IsospectralityReport {
        levels_checked: k_levels,
        pairs,
        max_gap,
        node_match,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    /// Refined boundary.
    pub lambda: f64,
    /// True when λ just above the boundary is singular.
    pub singular_above: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub convention: Convention,
    pub lambda_values: Vec<f64>,
    pub singular_flags: Vec<bool>,
    /// Boundary between the largest singular and the smallest larger
    /// nonsingular sample.
    pub critical_lambda: Option<f64>,
    /// Every flag change between neighbouring samples, refined.
    pub transitions: Vec<Transition>,
}

/// Flags each λ by running the Bernoulli construction for level `n`, then
/// bisects every flag change to [`SCAN_RESOLUTION`].
pub fn scan_lambda(
    model: &PdmModel,
    n: usize,
    lambdas: &[f64],
    convention: Convention,
    grid: &Grid,
) -> Result<ScanReport> {
    let psi_n = model.eigenstate(n, grid)?;
    let mass = model.mass();
    let singular = |lambda: f64| -> Result<bool> {
        Ok(factor::bernoulli_f_with(&psi_n, mass, lambda, convention)?.is_singular())
    };
    let mut lambda_values = lambdas.to_vec();
    lambda_values.sort_by(f64::total_cmp);
    lambda_values.dedup();
    let singular_flags = lambda_values
        .par_iter()
        .map(|&l| singular(l))
        .collect::<Result<Vec<bool>>>()?;
    let transitions = lambda_values
        .windows(2)
        .zip(singular_flags.windows(2))
        .filter(|(_, f)| f[0] != f[1])
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(l, f)| {
            let (mut lo, mut hi) = (l[0], l[1]);
            while hi - lo > SCAN_RESOLUTION {
                let mid = 0.5 * (lo + hi);
                if singular(mid)? == f[0] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(Transition {
                lambda: 0.5 * (lo + hi),
                singular_above: f[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let critical_lambda = singular_flags
        .iter()
        .rposition(|&s| s)
        .and_then(|i| {
            transitions
                .iter()
                .find(|t| !t.singular_above && t.lambda > lambda_values[i])
        })
        .map(|t| t.lambda);
    Ok(ScanReport {
        convention,
        lambda_values,
        singular_flags,
        critical_lambda,
        transitions,
    })
}

/// `‖H̃ₙ⁻ψ̃ − (E_k + β)ψ̃‖∞ / ‖ψ̃‖∞` with `ψ̃ = Ãₙ⁻Aₙ⁺ψ_k`, over interior
/// points. `e_k` is the eigenvalue of `Hₙ⁻` (that is, `E_k⁽⁰⁾ − Eₙ`), and
/// `Hₙ⁻ψ_k = e_k ψ_k` is used inside `Ãₙ⁻Aₙ⁺`.
pub fn intertwining_residual(
    fac: &FactorizationResult,
    psi_k: &SampledFunction,
    e_k: f64,
) -> Result<f64> {
    let mapped = fac.intertwiner_on_eigenstate(psi_k, e_k)?;
    let out_norm = interior_max_abs(&mapped);
    if !(out_norm > 1e-5 * psi_k.max_abs()) {
        return Err(Error::NumericalDegeneracy(
            "Ãₙ⁻Aₙ⁺ψ_k vanishes; use k ≠ n".into(),
        ));
    }
    let lhs = fac.apply_h_tilde(&mapped)?;
    let eig = e_k + fac.beta();
    let resid = lhs.zip_with(&mapped, |a, b| a - eig * b)?;
    Ok(interior_max_abs(&resid) / out_norm)
}

/// Largest unmasked `|value|` away from the edges.
pub fn interior_max_abs(f: &SampledFunction) -> f64 {
    let n = f.len();
    f.unmasked()
        .filter(|&(i, _)| i >= EDGE_MARGIN && i + EDGE_MARGIN < n)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

/// Harmonic oscillator, `n = 1`, `β = 0`, `λ = 1`: the constant-mass limit
/// of the whole pipeline.
pub fn constant_mass_limit_check(k_levels: usize, tol: f64) -> Result<IsospectralityReport> {
    let model = model_constant_mass_ho();
    let grid = model.recommended_grid();
    let fac = factor::factorize(
        &model,
        1,
        Deformation::Bernoulli {
            lambda: 1.0,
            convention: Convention::Normalized,
        },
        &grid,
    )?;
    check_isospectral(&fac, k_levels, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_ex1, model_ex2, Ex1Params, Ex2Params};

    fn ex1() -> PdmModel {
        model_ex1(Ex1Params::new(1.0).unwrap())
    }

    fn bernoulli(lambda: f64) -> Deformation {
        Deformation::Bernoulli {
            lambda,
            convention: Convention::PaperEx1,
        }
    }

    #[test]
    fn ex1_level_one_is_isospectral() {
        let m = ex1();
        let fac = factor::factorize(&m, 1, bernoulli(1.0), &m.recommended_grid()).unwrap();
        let rep = check_isospectral(&fac, 5, 1e-3).unwrap();
        assert!(rep.passed(), "{rep:?}");
        for (k, e) in rep.deformed_spectrum().iter().enumerate() {
            assert!((e - (2.0 * k as f64 - 2.0)).abs() < 1e-3, "k={k}: {e}");
        }
    }

    #[test]
    fn huge_lambda_leaves_the_potential_alone() {
        let m = ex1();
        let fac = factor::factorize(&m, 1, bernoulli(1e6), &m.recommended_grid()).unwrap();
        let rep = check_isospectral(&fac, 4, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn singular_deformation_is_a_precondition_error() {
        let m = ex1();
        let fac = factor::factorize(&m, 1, bernoulli(0.2), &m.recommended_grid()).unwrap();
        assert!(matches!(
            check_isospectral(&fac, 3, 1e-3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn normalized_scan_finds_the_unit_window() {
        let m = ex1();
        let rep = scan_lambda(
            &m,
            1,
            &[-1.5, -0.5, 0.5, 1.5, 1e6],
            Convention::Normalized,
            &m.recommended_grid(),
        )
        .unwrap();
        assert_eq!(rep.singular_flags, vec![false, true, false, false, false]);
        assert_eq!(rep.transitions.len(), 2);
        assert!((rep.transitions[0].lambda + 1.0).abs() < 1e-3);
        assert!((rep.transitions[1].lambda).abs() < 1e-3);
        assert!((rep.critical_lambda.unwrap()).abs() < 1e-3);
    }

    #[test]
    fn origin_anchored_scan_finds_one_half() {
        let m = ex1();
        let lambdas: Vec<f64> = (0..=12).map(|i| -1.5 + 0.25 * i as f64).collect();
        let rep =
            scan_lambda(&m, 1, &lambdas, Convention::PaperEx1, &m.recommended_grid()).unwrap();
        assert!((rep.critical_lambda.unwrap() - 0.5).abs() < 1e-3, "{rep:?}");
        // no reentrant singularity on either side of the window
        let first = rep.singular_flags.iter().position(|&s| s).unwrap();
        let last = rep.singular_flags.iter().rposition(|&s| s).unwrap();
        assert!(rep.singular_flags[first..=last].iter().all(|&s| s));
    }

    #[test]
    fn intertwining_holds_for_ex1() {
        let m = ex1();
        let g = m.recommended_grid();
        let fac = factor::factorize(&m, 1, bernoulli(1.0), &g).unwrap();
        for k in [0, 2] {
            let psi = m.eigenstate(k, &g).unwrap();
            let r = intertwining_residual(&fac, &psi, m.energy(k) - m.energy(1)).unwrap();
            assert!(r <= 1e-3, "k={k}: {r}");
        }
        let psi1 = m.eigenstate(1, &g).unwrap();
        assert!(matches!(
            intertwining_residual(&fac, &psi1, 0.0),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn intertwining_holds_for_the_oscillator() {
        let m = model_constant_mass_ho();
        let g = m.recommended_grid();
        let fac = factor::factorize(
            &m,
            1,
            Deformation::Bernoulli {
                lambda: 1.0,
                convention: Convention::Normalized,
            },
            &g,
        )
        .unwrap();
        let psi = m.eigenstate(0, &g).unwrap();
        let r = intertwining_residual(&fac, &psi, -2.0).unwrap();
        assert!(r <= 1e-4, "{r}");
    }

    #[test]
    fn constant_mass_limit_gives_the_shifted_ladder() {
        let rep = constant_mass_limit_check(4, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
        for (e, want) in rep.deformed_spectrum().iter().zip([-2.0, 0.0, 2.0, 4.0]) {
            assert!((e - want).abs() < 1e-4, "{e} vs {want}");
        }
    }

    #[test]
    fn auxiliary_route_drops_the_level_at_beta() {
        // Ã⁺ kills no normalizable state, so E = β has no counterpart and the
        // remaining levels are E_k − E_1 + β for k ≠ 1
        let m = model_ex2(Ex2Params::new(1.0, 5.0, 4.0).unwrap());
        let g = m.recommended_grid();
        let fac = factor::factorize(&m, 1, Deformation::Auxiliary { beta: 1.0 }, &g).unwrap();
        let rep = check_isospectral(&fac, 4, 1e-2).unwrap();
        let want: Vec<f64> = [0, 2, 3, 4]
            .iter()
            .map(|&k| m.energy(k) - m.energy(1) + 1.0)
            .collect();
        for (e, w) in rep.deformed_spectrum().iter().zip(&want) {
            assert!((e - w).abs() < 1e-2, "{e} vs {w}");
        }
        assert!(!rep.passed());
        assert!(rep.node_match);
    }
}
