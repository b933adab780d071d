//! Exactly solvable PDM models.
//!
//! * `ex1`: `m = 1/(1+α²x²)` with a harmonic-oscillator-like ladder
//!   `E_k = 2k + 1` in the variable `s = arcsinh(αx)/α`.
//! * `ex2`: `m = sech²(x/2)/4` with exponential potential and Jacobi-type
//!   bound states.
//! * `ho`: constant-mass oscillator `V = x² − 1`, used for the `m → 1` limit.
//! * `box`: unit box with `V = 0`, only used as a solver sanity check.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrid::{self, Grid, SampledFunction};
use crate::specfun::{self, HypergeometricParams, HYPERGEOMETRIC_EDGE};

/// Closed-form mass with its first two derivatives.
pub trait MassProfile: Send + Sync {
    fn mass(&self, x: f64) -> f64;
    fn mass_d1(&self, x: f64) -> f64;
    fn mass_d2(&self, x: f64) -> f64;

    /// `(1/√m)'`.
    fn inv_sqrt_mass_d1(&self, x: f64) -> f64 {
        let m = self.mass(x);
        -0.5 * self.mass_d1(x) / (m * m.sqrt())
    }

    /// `(1/√m)''`.
    fn inv_sqrt_mass_d2(&self, x: f64) -> f64 {
        let m = self.mass(x);
        let d1 = self.mass_d1(x);
        -0.5 * self.mass_d2(x) / (m * m.sqrt()) + 0.75 * d1 * d1 / (m * m * m.sqrt())
    }
}

/// The mass profiles of the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mass {
    Constant(f64),
    /// `1/(1+α²x²)`.
    InverseQuadratic {
        alpha: f64,
    },
    /// `sech²(x/2)/4`.
    HalfSechSquared,
}

impl MassProfile for Mass {
    fn mass(&self, x: f64) -> f64 {
        match *self {
            Mass::Constant(c) => c,
            Mass::InverseQuadratic { alpha } => 1.0 / (1.0 + alpha * alpha * x * x),
            Mass::HalfSechSquared => {
                let s = 1.0 / (0.5 * x).cosh();
                0.25 * s * s
            }
        }
    }

    fn mass_d1(&self, x: f64) -> f64 {
        match *self {
            Mass::Constant(_) => 0.0,
            Mass::InverseQuadratic { alpha } => {
                let u = 1.0 + alpha * alpha * x * x;
                -2.0 * alpha * alpha * x / (u * u)
            }
            Mass::HalfSechSquared => {
                let s = 1.0 / (0.5 * x).cosh();
                -0.25 * s * s * (0.5 * x).tanh()
            }
        }
    }

    fn mass_d2(&self, x: f64) -> f64 {
        match *self {
            Mass::Constant(_) => 0.0,
            Mass::InverseQuadratic { alpha } => {
                let a2 = alpha * alpha;
                let u = 1.0 + a2 * x * x;
                (6.0 * a2 * a2 * x * x - 2.0 * a2) / (u * u * u)
            }
            Mass::HalfSechSquared => {
                let s2 = 1.0 / (0.5 * x).cosh().powi(2);
                let t = (0.5 * x).tanh();
                0.25 * (s2 * t * t - 0.5 * s2 * s2)
            }
        }
    }
}

/// Parameter `α > 0` of the first model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ex1Params {
    alpha: f64,
}

impl Ex1Params {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Parameters `(a, b, c)` of the second model, with `c > 1/2` and
/// `a + b − c + 1/2 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ex2Params {
    a: f64,
    b: f64,
    c: f64,
}

impl Ex2Params {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::Config("ex2 parameters must be finite".into()));
        }
        if !(c > 0.5) {
            return Err(Error::Config(format!("ex2 requires c > 1/2, got c = {c}")));
        }
        if !(a + b - c + 0.5 > 0.0) {
            return Err(Error::Config(format!(
                "ex2 requires a + b - c + 1/2 > 0, got {}",
                a + b - c + 0.5
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn sum(&self) -> f64 {
        self.a + self.b
    }

    /// `E_n = n² + n(a+b) + c(a+b−c+1)/2`.
    pub fn energy(&self, n: usize) -> f64 {
        let n = n as f64;
        n * n + n * self.sum() + 0.5 * self.c * (self.sum() - self.c + 1.0)
    }

    /// `P² = (a+b)² − 2c(a+b−c+1) + 4E`.
    pub fn p_squared(&self, energy: f64) -> f64 {
        self.sum().powi(2) - 2.0 * self.c * (self.sum() - self.c + 1.0) + 4.0 * energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "lowercase")]
pub enum ModelKind {
    Ex1(Ex1Params),
    Ex2(Ex2Params),
    Ho,
    Box,
}

/// Model identifiers as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Ex1,
    Ex2,
    Ho,
    Box,
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelId::Ex1 => "ex1",
            ModelId::Ex2 => "ex2",
            ModelId::Ho => "ho",
            ModelId::Box => "box",
        })
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex1" => Ok(ModelId::Ex1),
            "ex2" => Ok(ModelId::Ex2),
            "ho" => Ok(ModelId::Ho),
            "box" => Ok(ModelId::Box),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// A mass profile, a potential `V₀⁻`, and its closed-form bound states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdmModel {
    kind: ModelKind,
    mass: Mass,
    recommended_grid: Grid,
}

/// First model: `m = 1/(1+α²x²)`.
pub fn model_ex1(p: Ex1Params) -> PdmModel {
    // ψ₅ has decayed to the 1e-6 level once s = arcsinh(αx)/α ≈ 6.2.
    let x_max = ((6.25 * p.alpha).sinh() / p.alpha).round().max(10.0);
    PdmModel {
        kind: ModelKind::Ex1(p),
        mass: Mass::InverseQuadratic { alpha: p.alpha },
        recommended_grid: Grid::new(-x_max, x_max, 16001).expect("static grid"),
    }
}

/// Second model: `m = sech²(x/2)/4`.
pub fn model_ex2(p: Ex2Params) -> PdmModel {
    PdmModel {
        kind: ModelKind::Ex2(p),
        mass: Mass::HalfSechSquared,
        recommended_grid: Grid::new(-14.0, 14.0, 4001).expect("static grid"),
    }
}

/// Constant-mass oscillator with zero ground energy.
pub fn model_constant_mass_ho() -> PdmModel {
    PdmModel {
        kind: ModelKind::Ho,
        mass: Mass::Constant(1.0),
        recommended_grid: Grid::new(-8.0, 8.0, 1601).expect("static grid"),
    }
}

/// Unit box, `V = 0` on `[0, 1]`.
pub fn model_box() -> PdmModel {
    PdmModel {
        kind: ModelKind::Box,
        mass: Mass::Constant(1.0),
        recommended_grid: Grid::new(0.0, 1.0, 2001).expect("static grid"),
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

impl PdmModel {
    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn id(&self) -> ModelId {
        match self.kind {
            ModelKind::Ex1(_) => ModelId::Ex1,
            ModelKind::Ex2(_) => ModelId::Ex2,
            ModelKind::Ho => ModelId::Ho,
            ModelKind::Box => ModelId::Box,
        }
    }

    pub fn mass(&self) -> &Mass {
        &self.mass
    }

    pub fn recommended_grid(&self) -> Grid {
        self.recommended_grid
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.recommended_grid = grid;
        self
    }

    /// `V₀⁻(x)`.
    pub fn potential(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::Ex1(p) => {
                let a = p.alpha;
                let s = (a * x).asinh() / a;
                let u = 1.0 + a * a * x * x;
                s * s - 0.25 * a * a * (2.0 + a * a * x * x) / u
            }
            ModelKind::Ex2(p) => {
                let g = p.sum() - p.c;
                0.25 * (g * g - 1.0) * x.exp() + 0.25 * p.c * (p.c - 2.0) * (-x).exp()
            }
            ModelKind::Ho => x * x - 1.0,
            ModelKind::Box => 0.0,
        }
    }

    pub fn potential_on(&self, grid: &Grid) -> SampledFunction {
        SampledFunction::from_fn(*grid, |x| self.potential(x))
    }

    /// `E_k^(0)−`.
    pub fn energy(&self, k: usize) -> f64 {
        match self.kind {
            ModelKind::Ex1(_) => 2.0 * k as f64 + 1.0,
            ModelKind::Ex2(p) => p.energy(k),
            ModelKind::Ho => 2.0 * k as f64,
            ModelKind::Box => ((k + 1) as f64 * PI).powi(2),
        }
    }

    /// Closed-form `ψ_k(x)` with the printed normalization where the model
    /// has one (ex1, ho, box); for ex2 the overall constant is arbitrary.
    pub fn eigenstate_closed_form(&self, k: usize, x: f64) -> Result<f64> {
        match self.kind {
            ModelKind::Ex1(p) => {
                let a = p.alpha;
                let s = (a * x).asinh() / a;
                let pref = (1.0 / (2f64.powi(k as i32) * factorial(k))).sqrt() * PI.powf(-0.25);
                Ok(pref
                    * (-0.5 * s * s).exp()
                    * (1.0 + a * a * x * x).powf(-0.25)
                    * specfun::hermite(k, s)?)
            }
            ModelKind::Ex2(p) => {
                let log_env = 0.5 * p.c * x - 0.5 * (p.sum() + 1.0) * softplus(x);
                let y = -(0.5 * x).tanh();
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                Ok(sign * log_env.exp() * specfun::jacobi(k, p.c - 1.0, p.sum() - p.c, y)?)
            }
            ModelKind::Ho => {
                let norm = (2f64.powi(k as i32) * factorial(k) * PI.sqrt()).sqrt();
                Ok((-0.5 * x * x).exp() * specfun::hermite(k, x)? / norm)
            }
            ModelKind::Box => Ok(2f64.sqrt() * ((k + 1) as f64 * PI * x).sin()),
        }
    }

    /// `ψ_k` on `grid`, renormalized to unit norm by quadrature.
    pub fn eigenstate(&self, k: usize, grid: &Grid) -> Result<SampledFunction> {
        let values = grid
            .points()
            .map(|x| self.eigenstate_closed_form(k, x))
            .collect::<Result<Vec<_>>>()?;
        let psi = SampledFunction::new(*grid, values)?;
        let norm = numgrid::l2_norm(&psi)?;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonNormalizable(format!(
                "closed-form state {k} has norm {norm} on the grid"
            )));
        }
        Ok(psi.scaled(1.0 / norm))
    }

    /// A solution of `H₀⁻ψ = (E_n − β)ψ`, not necessarily normalizable.
    /// Only the second model carries one.
    pub fn seed_solution(&self, n: usize, beta: f64, grid: &Grid) -> Result<SampledFunction> {
        match self.kind {
            ModelKind::Ex2(p) => seed_solution_ex2(p, n, beta, grid),
            _ => Err(Error::Config(format!(
                "model {} provides no seed solution for the auxiliary route",
                self.id()
            ))),
        }
    }
}

/// Hypergeometric solution of the second model at energy `E_n − β`, which is
/// the solution that decays like `e^(cx/2)` as `x → −∞`:
///
/// `ψ = e^(cx/2) (1+eˣ)^(−(a+b+1)/2) ₂F₁((a+b+P)/2, (a+b−P)/2; c; w)`,
/// `w = eˣ/(1+eˣ)`.
///
/// The series is summed while `w < 1 − 10⁻³`; the remaining right part of
/// the grid is filled by RK4 integration of `ψ' = m·φ`, `φ' = (V − E)ψ`
/// started from the closed-form value and derivative at the last series node.
/// `C₁ = 1`.
pub fn seed_solution_ex2(
    p: Ex2Params,
    n: usize,
    beta: f64,
    grid: &Grid,
) -> Result<SampledFunction> {
    let energy = p.energy(n) - beta;
    let p2 = p.p_squared(energy);
    if p2 < 0.0 {
        return Err(Error::Domain(format!(
            "P² = {p2} < 0 at E = {energy}: the seed is oscillatory"
        )));
    }
    let big_p = p2.sqrt();
    let hp = HypergeometricParams::new(0.5 * (p.sum() + big_p), 0.5 * (p.sum() - big_p), p.c)?;
    let hp_d = HypergeometricParams::new(hp.a() + 1.0, hp.b() + 1.0, hp.c() + 1.0)?;
    let w_max = 1.0 - HYPERGEOMETRIC_EDGE;

    // value and x-derivative of the closed form
    let closed = |x: f64| -> Result<(f64, f64)> {
        let w = 1.0 / (1.0 + (-x).exp());
        let env_log = 0.5 * p.c * x - 0.5 * (p.sum() + 1.0) * softplus(x);
        let env = env_log.exp();
        let env_d = env * (0.5 * p.c - 0.5 * (p.sum() + 1.0) * w);
        let f = specfun::gauss_2f1(hp, w)?;
        let f_d = hp.a() * hp.b() / hp.c() * specfun::gauss_2f1(hp_d, w)? * w * (1.0 - w);
        Ok((env * f, env_d * f + env * f_d))
    };

    let nodes = grid.n_points();
    let mut values = vec![0.0; nodes];
    let mut last_series = None;
    for (i, x) in grid.points().enumerate() {
        let w = 1.0 / (1.0 + (-x).exp());
        if w >= w_max {
            break;
        }
        values[i] = closed(x)?.0;
        last_series = Some(i);
    }
    let start = last_series.ok_or_else(|| {
        Error::Domain("grid lies entirely outside the hypergeometric series region".into())
    })?;
    if start + 1 < nodes {
        let mass = Mass::HalfSechSquared;
        let model = model_ex2(p);
        let x0 = grid.point(start);
        let (psi0, dpsi0) = closed(x0)?;
        let rhs = |x: f64, y: [f64; 2]| -> [f64; 2] {
            [mass.mass(x) * y[1], (model.potential(x) - energy) * y[0]]
        };
        let mut y = [psi0, dpsi0 / mass.mass(x0)];
        let h = grid.h();
        for i in start..nodes - 1 {
            let x = grid.point(i);
            let k1 = rhs(x, y);
            let k2 = rhs(
                x + 0.5 * h,
                [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]],
            );
            let k3 = rhs(
                x + 0.5 * h,
                [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]],
            );
            let k4 = rhs(x + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for j in 0..2 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            values[i + 1] = y[0];
        }
    }
    SampledFunction::new(*grid, values)
}

/// `−(1/m)ψ'' + (m'/m²)ψ' + Vψ − Eψ` on the grid, with finite-difference
/// derivatives.
pub fn pdm_residual(
    mass: &dyn MassProfile,
    potential: &SampledFunction,
    psi: &SampledFunction,
    energy: f64,
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
                + (potential.value(i) - energy) * psi.value(i)
        })
        .collect();
    let mask = (0..grid.n_points())
        .map(|i| d1.is_masked(i) || d2.is_masked(i) || potential.is_masked(i) || psi.is_masked(i))
        .collect();
    SampledFunction::with_mask(grid, values, mask)
}

/// Largest residual over interior nodes at least `margin` away from the
/// edges, where the one-sided stencils live.
pub fn interior_max(f: &SampledFunction, margin: usize) -> f64 {
    let n = f.len();
    f.unmasked()
        .filter(|(i, _)| *i >= margin && *i + margin < n)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}
