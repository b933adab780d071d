//! The ten acceptance criteria. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stderr (bypassing the harness capture) and then asserts.

use std::io::Write;
use std::time::Instant;

use isospec::cli;
use isospec::error::Error;
use isospec::factor::{self, Convention, Deformation, FactorizationResult};
use isospec::models::{
    model_constant_mass_ho, model_ex1, model_ex2, Ex1Params, Ex2Params, PdmModel,
};
use isospec::numgrid::{Grid, SampledFunction};
use isospec::spectra::{self, count_nodes};
use isospec::verify;

fn report(id: u32, passed: bool, detail: &str) {
    let line = format!(
        "criterion {id}: {} {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn ex1() -> PdmModel {
    model_ex1(Ex1Params::new(1.0).unwrap())
}

fn ex2() -> PdmModel {
    model_ex2(Ex2Params::new(1.0, 5.0, 4.0).unwrap())
}

fn bernoulli(lambda: f64) -> Deformation {
    Deformation::Bernoulli {
        lambda,
        convention: Convention::Normalized,
    }
}

fn origin_anchored(lambda: f64) -> Deformation {
    Deformation::Bernoulli {
        lambda,
        convention: Convention::PaperEx1,
    }
}

fn build(model: &PdmModel, n: usize, d: Deformation) -> FactorizationResult {
    factor::factorize(model, n, d, &model.recommended_grid()).unwrap()
}

// Closed forms for the first example at α = 1, written out independently of
// the library. s = arcsinh x, D = √π e^{s²}(2λ + erf s) − 2s.

fn denom(s: f64, lambda: f64) -> f64 {
    std::f64::consts::PI.sqrt() * (s * s).exp() * (2.0 * lambda + libm::erf(s)) - 2.0 * s
}

/// Ṽ₁⁻(x) = −(2+x²)/(4+4x²) + s² − 3 − 2√(1+x²) d/dx[4s²/D].
/// With ds/dx = 1/√(1+x²) and dD/ds = 2s(D + 2s) the last term is −2 g'(s),
/// g'(s) = (8sD − 8s³(D + 2s))/D².
fn v_tilde_closed(x: f64, lambda: f64) -> f64 {
    let s = x.asinh();
    let d = denom(s, lambda);
    let g_prime = (8.0 * s * d - 8.0 * s.powi(3) * (d + 2.0 * s)) / (d * d);
    -(2.0 + x * x) / (4.0 + 4.0 * x * x) + s * s - 3.0 - 2.0 * g_prime
}

fn psi_tilde_1_closed(x: f64, lambda: f64) -> f64 {
    let s = x.asinh();
    s * (0.5 * s * s).exp() / ((1.0 + x * x).powf(0.25) * denom(s, lambda))
}

fn psi_tilde_0_closed(x: f64, lambda: f64) -> f64 {
    let s = x.asinh();
    (2.0 * lambda + libm::erf(s)) * (0.5 * s * s).exp()
        / ((1.0 + x * x).powf(0.25) * denom(s, lambda))
}

/// Samples `f` and scales it to unit L² norm with the trapezoidal rule.
fn unit_normalized(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let v: Vec<f64> = grid.points().map(f).collect();
    let n = v.len();
    let sq: f64 = v.iter().map(|y| y * y).sum::<f64>() - 0.5 * (v[0] * v[0] + v[n - 1] * v[n - 1]);
    let norm = (sq * grid.h()).sqrt();
    v.into_iter().map(|y| y / norm).collect()
}

/// Distance up to an overall sign.
fn signless_distance(a: &[f64], b: &[f64]) -> f64 {
    let flipped: Vec<f64> = b.iter().map(|y| -y).collect();
    max_abs_diff(a, b).min(max_abs_diff(a, &flipped))
}

#[test]
fn criterion_01_ex1_base_spectrum() {
    let model = ex1();
    let grid = Grid::new(-259.0, 259.0, 8001).unwrap();
    let start = Instant::now();
    let rep = spectra::solve_extrapolated(model.mass(), &model.potential_on(&grid), 6).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let expected: Vec<f64> = (0..6).map(|k| 2.0 * k as f64 + 1.0).collect();
    let err = max_abs_diff(&rep.eigenvalues, &expected);
    let ok = err <= 1e-3 && secs <= 10.0;
    report(
        1,
        ok,
        &format!("E_k vs 2k+1, k=0..5: max error {err:.2e}, {secs:.2} s at N=8001"),
    );
    assert!(ok);
}

#[test]
fn criterion_02_ex1_deformed_spectrum() {
    let fac = build(&ex1(), 1, bernoulli(1.0));
    let rep = verify::check_isospectral(&fac, 6, 1e-3).unwrap();
    let expected: Vec<f64> = (0..6).map(|k| 2.0 * k as f64 - 2.0).collect();
    let err = max_abs_diff(&rep.deformed_spectrum(), &expected);
    let ok = err <= 1e-3 && rep.passed();
    report(
        2,
        ok,
        &format!(
            "Ẽ_k vs 2k−2, k=0..5: max error {err:.2e}, gap to V₁⁻ {:.2e}",
            rep.max_gap
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_03_closed_form_wavefunctions() {
    let lambda = 1.0;
    let model = ex1();
    let fac = build(&model, 1, origin_anchored(lambda));
    let grid = *fac.psi_n.grid();
    let psi0 = model.eigenstate(0, &grid).unwrap();
    let got0 = factor::canonicalize(&factor::map_eigenstate(&psi0, &fac).unwrap()).unwrap();
    let got1 = factor::canonicalize(&factor::zero_mode(&fac).unwrap()).unwrap();
    let want0 = unit_normalized(&grid, |x| psi_tilde_0_closed(x, lambda));
    let want1 = unit_normalized(&grid, |x| psi_tilde_1_closed(x, lambda));
    let e0 = signless_distance(got0.values(), &want0);
    let e1 = signless_distance(got1.values(), &want1);
    let ok = e0 <= 1e-3 && e1 <= 1e-3 && count_nodes(&got0) == 0 && count_nodes(&got1) == 1;
    report(3, ok, &format!("ψ̃₀ L∞ {e0:.2e}, ψ̃₁ L∞ {e1:.2e} at λ=1"));
    assert!(ok);
}

#[test]
fn criterion_04_singularity_threshold() {
    let model = ex1();
    let grid = model.recommended_grid();
    let steps = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    };
    let anchored = verify::scan_lambda(
        &model,
        1,
        &steps(0.0, 1.0, 101),
        Convention::PaperEx1,
        &grid,
    )
    .unwrap();
    let critical = anchored.critical_lambda.unwrap_or(f64::NAN);
    let norm = verify::scan_lambda(
        &model,
        1,
        &steps(-2.0, 1.0, 61),
        Convention::Normalized,
        &grid,
    )
    .unwrap();
    let edges: Vec<(f64, bool)> = norm
        .transitions
        .iter()
        .map(|t| (t.lambda, t.singular_above))
        .collect();
    let window_ok = edges.len() == 2
        && edges[0].1
        && !edges[1].1
        && (edges[0].0 + 1.0).abs() <= 1e-3
        && edges[1].0.abs() <= 1e-3;
    let ok = (critical - 0.5).abs() <= 1e-3 && window_ok;
    report(
        4,
        ok,
        &format!("critical λ {critical:.5} (paper-ex1); singular window {edges:?} (normalized)"),
    );
    assert!(ok);
}

#[test]
fn criterion_05_ex2_spectra() {
    let model = ex2();
    let grid = model.recommended_grid();
    let base = spectra::solve_extrapolated(model.mass(), &model.potential_on(&grid), 3).unwrap();
    let base_err = max_abs_diff(&base.eigenvalues, &[6.0, 13.0, 22.0]);

    let mut lines = vec![format!(
        "base {:?} error {base_err:.2e}",
        rounded(&base.eigenvalues)
    )];
    let mut ok = base_err <= 1e-2;
    for (n, shift) in [(1usize, 6.0), (2, 15.0)] {
        let fac = build(&model, n, Deformation::Auxiliary { beta: 1.0 });
        let rep = spectra::solve_extrapolated(model.mass(), &fac.v_tilde_minus, 4).unwrap();
        let expected: Vec<f64> = (0..4).map(|k| (k * k + 6 * k) as f64 - shift).collect();
        let err = max_abs_diff(&rep.eigenvalues, &expected);
        ok &= err <= 1e-2;
        lines.push(format!(
            "n={n}: {:?} vs {:?} error {err:.2e}",
            rounded(&rep.eigenvalues),
            expected
        ));
    }
    report(5, ok, &lines.join("; "));
    assert!(ok, "{}", lines.join("\n"));
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|e| (e * 1e4).round() / 1e4).collect()
}

/// Every factorization exercised by the acceptance run.
fn catalog() -> Vec<(String, FactorizationResult)> {
    let (e1, e2, ho) = (ex1(), ex2(), model_constant_mass_ho());
    let mut out = vec![
        ("ex1 n=1 λ=1".to_string(), build(&e1, 1, bernoulli(1.0))),
        ("ex1 n=1 λ=0.7".to_string(), build(&e1, 1, bernoulli(0.7))),
        (
            "ex1 n=1 λ=1 paper-ex1".to_string(),
            build(&e1, 1, origin_anchored(1.0)),
        ),
        (
            "ex1 n=1 λ=0.7 paper-ex1".to_string(),
            build(&e1, 1, origin_anchored(0.7)),
        ),
        ("ex1 n=2 λ=1".to_string(), build(&e1, 2, bernoulli(1.0))),
        ("ho n=1 λ=1".to_string(), build(&ho, 1, bernoulli(1.0))),
        ("ho n=2 λ=0.5".to_string(), build(&ho, 2, bernoulli(0.5))),
    ];
    for n in [1, 2] {
        out.push((format!("ex2 n={n} λ=1"), build(&e2, n, bernoulli(1.0))));
        out.push((
            format!("ex2 n={n} β=1"),
            build(&e2, n, Deformation::Auxiliary { beta: 1.0 }),
        ));
    }
    out
}

#[test]
fn criterion_06_riccati_invariant() {
    let mut worst = (0.0, String::new());
    let mut ok = true;
    for (name, fac) in catalog() {
        ok &= fac.is_nonsingular();
        let r = factor::riccati_residual(&fac.f_n, &fac.w_n, fac.model.mass()).unwrap();
        let m = verify::interior_max_abs(&r);
        if m > worst.0 {
            worst = (m, name);
        }
    }
    ok &= worst.0 <= 1e-5;
    report(
        6,
        ok,
        &format!("worst interior residual {:.2e} ({})", worst.0, worst.1),
    );
    assert!(ok);
}

/// Intertwining residual for `k`, or `None` when `k = n` and the image
/// vanishes (the relation then holds trivially).
fn intertwining(fac: &FactorizationResult, k: usize) -> Option<f64> {
    let psi = fac.model.eigenstate(k, fac.psi_n.grid()).unwrap();
    let e_k = fac.model.energy(k) - fac.e_n;
    match verify::intertwining_residual(fac, &psi, e_k) {
        Ok(r) => Some(r),
        Err(Error::NumericalDegeneracy(_)) if k == fac.n => None,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn criterion_07_intertwining() {
    let mut worst = (0.0, String::new());
    let mut ok = true;
    for (name, fac) in catalog() {
        for k in 0..4 {
            match intertwining(&fac, k) {
                Some(r) if r > worst.0 => worst = (r, format!("{name} k={k}")),
                Some(_) => {}
                None => ok &= k == fac.n,
            }
        }
    }
    ok &= worst.0 <= 1e-3;
    report(
        7,
        ok,
        &format!(
            "worst relative residual {:.2e} ({}), k=0..3",
            worst.0, worst.1
        ),
    );
    assert!(ok);
}

/// Node count of the image of `ψ_k` under the deformation.
fn mapped_nodes(fac: &FactorizationResult, k: usize) -> Result<usize, Error> {
    let psi = fac.model.eigenstate(k, fac.psi_n.grid())?;
    factor::map_eigenstate(&psi, fac).map(|m| count_nodes(&m))
}

#[test]
fn criterion_08_node_preservation() {
    let mut bad = Vec::new();
    for (name, fac) in catalog().into_iter().filter(|(_, f)| f.beta() == 0.0) {
        for k in 0..5 {
            match mapped_nodes(&fac, k) {
                Ok(nodes) if nodes == k => {}
                other => bad.push(format!("{name} k={k}: {other:?}")),
            }
        }
    }
    // The seed route at β = 1 is reported alongside: the level at β is absent
    // there, so images above level n drop a node.
    let mut aux = Vec::new();
    for (name, fac) in catalog().into_iter().filter(|(_, f)| f.beta() != 0.0) {
        let counts: Vec<String> = (0..5)
            .map(|k| mapped_nodes(&fac, k).map_or("none".to_string(), |c| c.to_string()))
            .collect();
        aux.push(format!("{name}: [{}]", counts.join(",")));
    }
    let ok = bad.is_empty();
    report(
        8,
        ok,
        &format!(
            "ex1, ex2, ho at β=0, k=0..4: {} mismatches; seed route node counts {}",
            bad.len(),
            aux.join("; ")
        ),
    );
    assert!(ok, "{bad:?}");
}

#[test]
fn criterion_09_constant_mass_limit() {
    let rep = verify::constant_mass_limit_check(4, 1e-4).unwrap();
    let ladder_err = max_abs_diff(&rep.deformed_spectrum(), &[-2.0, 0.0, 2.0, 4.0]);
    let fac = build(&model_constant_mass_ho(), 1, bernoulli(1.0));
    let ric = verify::interior_max_abs(
        &factor::riccati_residual(&fac.f_n, &fac.w_n, fac.model.mass()).unwrap(),
    );
    let inter = (0..4)
        .filter_map(|k| intertwining(&fac, k))
        .fold(0.0, f64::max);
    let nodes_ok = (0..5).all(|k| mapped_nodes(&fac, k).ok() == Some(k));
    let ok = rep.passed() && ladder_err <= 1e-4 && ric <= 1e-5 && inter <= 1e-3 && nodes_ok;
    report(
        9,
        ok,
        &format!("ladder error {ladder_err:.2e}, Riccati {ric:.2e}, intertwining {inter:.2e}, nodes kept {nodes_ok}"),
    );
    assert!(ok);
}

#[test]
fn criterion_10_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    cli::cmd_figures(dir.path()).unwrap();
    let read = |name: &str| -> SampledFunction {
        let file = std::fs::File::open(dir.path().join(name)).unwrap();
        SampledFunction::read_csv(file).unwrap()
    };
    let mut ok = true;
    let mut lines = Vec::new();
    for (lambda, name) in [
        (1.0, "ex1_V1_tilde_lambda_1.csv"),
        (0.7, "ex1_V1_tilde_lambda_0.7.csv"),
    ] {
        let f = read(name);
        let finite = !f.has_singular_points() && f.values().iter().all(|v| v.is_finite());
        let want: Vec<f64> = f
            .grid()
            .points()
            .map(|x| v_tilde_closed(x, lambda))
            .collect();
        let err = max_abs_diff(f.values(), &want);
        ok &= finite && err <= 1e-5;
        lines.push(format!("Ṽ₁⁻ λ={lambda}: max deviation {err:.2e}"));
    }
    for name in [
        "ex1_mass.csv",
        "ex1_V1_minus.csv",
        "ex1_psi_tilde_0_lambda_1.csv",
        "ex1_psi_tilde_1_lambda_1.csv",
        "ex2_mass.csv",
        "ex2_V1_minus.csv",
        "ex2_V1_tilde_beta_1.csv",
        "ex2_V2_minus.csv",
        "ex2_V2_tilde_beta_1.csv",
    ] {
        let f = read(name);
        let finite = !f.has_singular_points() && f.values().iter().all(|v| v.is_finite());
        if !finite {
            lines.push(format!("{name} not finite"));
        }
        ok &= finite;
    }
    report(10, ok, &lines.join("; "));
    assert!(ok, "{}", lines.join("\n"));
}
