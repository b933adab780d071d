//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed (or the numerics refused), 2 usage
//! error. All JSON is written pretty-printed with shortest round-trip floats
//! and carries no timestamp, so identical invocations produce identical
//! bytes.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{self, Convention, Deformation, FactorizationResult};
use crate::models::{
    model_box, model_constant_mass_ho, model_ex1, model_ex2, Ex1Params, Ex2Params, MassProfile,
    ModelId, PdmModel,
};
use crate::numgrid::{Grid, SampledFunction};
use crate::spectra::{self, count_nodes};
use crate::verify;

/// Writes through a temporary sibling file, then renames it into place.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn write_profile(path: &Path, f: &SampledFunction) -> Result<()> {
    write_atomic(path, |w| f.write_csv(w))
}

#[derive(Debug, Parser)]
#[command(
    name = "isospec",
    version,
    about = "Nonsingular isospectral partners of position-dependent-mass Hamiltonians"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build Wₙ, fₙ, Vₙ∓ and Ṽₙ⁻ and write them as CSV plus a JSON summary.
    Construct(RunArgs),
    /// Solve the original or the deformed potential.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Which::Original)]
        which: Which,
    },
    /// Isospectrality, Riccati, intertwining and node checks for one run.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Largest allowed eigenvalue gap.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Flag singular deformations over a λ range and refine the boundaries.
    Scan {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, allow_hyphen_values = true)]
        lambda_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda_max: f64,
        #[arg(long, default_value_t = 101)]
        steps: usize,
    },
    /// Write the curve data of the two worked examples.
    Figures {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Original,
    Deformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Normalized,
    PaperEx1,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Normalized => Convention::Normalized,
            ConventionArg::PaperEx1 => Convention::PaperEx1,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// ex1, ex2, ho (or box for spectra only).
    #[arg(long, default_value = "ex1")]
    pub model: ModelId,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub c: f64,
    /// Level whose state is factorized.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta: f64,
    /// Integration constant of the β = 0 route.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Number of levels to solve or check.
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Normalized)]
    pub convention: ConventionArg,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: PdmModel,
    pub grid: Grid,
    pub n: usize,
    pub beta: f64,
    pub lambda: Option<f64>,
    pub convention: Convention,
    pub levels: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self> {
        let model = match a.model {
            ModelId::Ex1 => model_ex1(Ex1Params::new(a.alpha)?),
            ModelId::Ex2 => model_ex2(Ex2Params::new(a.a, a.b, a.c)?),
            ModelId::Ho => model_constant_mass_ho(),
            ModelId::Box => model_box(),
        };
        let rec = model.recommended_grid();
        let grid = Grid::new(
            a.grid_min.unwrap_or(rec.x_min()),
            a.grid_max.unwrap_or(rec.x_max()),
            a.grid_points.unwrap_or(rec.n_points()),
        )?;
        if !a.beta.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        if a.levels == 0 {
            return Err(Error::Config("--levels must be positive".into()));
        }
        Ok(RunConfig {
            model,
            grid,
            n: a.n,
            beta: a.beta,
            lambda: a.lambda,
            convention: a.convention.into(),
            levels: a.levels,
            out: a.out.clone(),
        })
    }

    /// The deformation these flags describe: `λ` goes with `β = 0`, a seed
    /// with `β ≠ 0`.
    pub fn deformation(&self) -> Result<Deformation> {
        match (self.beta == 0.0, self.lambda) {
            (true, Some(lambda)) => Ok(Deformation::Bernoulli {
                lambda,
                convention: self.convention,
            }),
            (true, None) => Err(Error::Config("β = 0 needs --lambda".into())),
            (false, Some(_)) => Err(Error::Config("--lambda only applies when β = 0".into())),
            (false, None) if self.model.id() == ModelId::Ex2 => {
                Ok(Deformation::Auxiliary { beta: self.beta })
            }
            (false, None) => Err(Error::Config(format!(
                "β ≠ 0 needs a seed solution, which model {} does not provide",
                self.model.id()
            ))),
        }
    }

    pub fn factorize(&self) -> Result<FactorizationResult> {
        if self.model.id() == ModelId::Box {
            return Err(Error::Config("the box model is for spectra only".into()));
        }
        factor::factorize(&self.model, self.n, self.deformation()?, &self.grid)
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ Error::Config(_)) => {
            eprintln!("usage error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Construct(a) => cmd_construct(&RunConfig::from_args(&a)?),
        Command::Spectrum { run, which } => cmd_spectrum(&RunConfig::from_args(&run)?, which),
        Command::Verify { run, tol } => cmd_verify(&RunConfig::from_args(&run)?, tol),
        Command::Scan {
            run,
            lambda_min,
            lambda_max,
            steps,
        } => cmd_scan(&RunConfig::from_args(&run)?, lambda_min, lambda_max, steps),
        Command::Figures { out } => cmd_figures(&out),
    }
}

pub fn cmd_construct(cfg: &RunConfig) -> Result<bool> {
    let fac = cfg.factorize()?;
    prepare_dir(&cfg.out)?;
    fac.write_profiles(&cfg.out, "")?;
    write_profile(&cfg.out.join("psi_n.csv"), &fac.psi_n)?;
    write_json(&cfg.out.join("factorization.json"), &fac.to_json("")?)?;
    println!(
        "model {} n={} beta={} lambda={} nonsingular={} spectrum shift {}",
        cfg.model.id(),
        fac.n,
        fac.beta(),
        fac.f_n.lambda().map_or("-".to_string(), |l| l.to_string()),
        fac.is_nonsingular(),
        fac.e_n - fac.beta(),
    );
    Ok(true)
}

#[derive(Serialize)]
struct SpectrumDoc<'a> {
    model: &'a PdmModel,
    which: &'static str,
    n: Option<usize>,
    grid: Grid,
    report: serde_json::Value,
}

pub fn cmd_spectrum(cfg: &RunConfig, which: Which) -> Result<bool> {
    let (potential, n, label) = match which {
        Which::Original => (cfg.model.potential_on(&cfg.grid), None, "original"),
        Which::Deformed => {
            let fac = cfg.factorize()?;
            if !fac.is_nonsingular() {
                eprintln!("deformed potential is singular; nothing to solve");
                return Ok(false);
            }
            (fac.v_tilde_minus, Some(cfg.n), "deformed")
        }
    };
    let report = spectra::solve_extrapolated(cfg.model.mass(), &potential, cfg.levels)?;
    prepare_dir(&cfg.out)?;
    for (k, state) in report.eigenstates.iter().enumerate() {
        write_profile(&cfg.out.join(format!("state_{k}.csv")), state)?;
    }
    let doc = SpectrumDoc {
        model: &cfg.model,
        which: label,
        n,
        grid: cfg.grid,
        report: report.to_json()?,
    };
    write_json(&cfg.out.join("spectrum.json"), &doc)?;
    for (k, e) in report.eigenvalues.iter().enumerate() {
        println!("E_{k} = {e:.10}");
    }
    Ok(report.oscillation_violations().is_empty())
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    value: Option<f64>,
    tolerance: Option<f64>,
    passed: bool,
    note: Option<String>,
}

impl Check {
    fn bound(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value: Some(value),
            tolerance: Some(tolerance),
            passed: value <= tolerance,
            note: None,
        }
    }

    fn flag(name: impl Into<String>, passed: bool, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value: None,
            tolerance: None,
            passed,
            note: Some(note.into()),
        }
    }
}

#[derive(Serialize)]
struct VerifyDoc<'a> {
    model: &'a PdmModel,
    n: usize,
    beta: f64,
    lambda: Option<f64>,
    passed: bool,
    checks: Vec<Check>,
    isospectrality: Option<verify::IsospectralityReport>,
}

/// Tolerance for the Riccati residual of every constructed `fₙ`.
pub const RICCATI_TOL: f64 = 1e-5;
/// Relative tolerance for the intertwining residual.
pub const INTERTWINING_TOL: f64 = 1e-3;

pub fn cmd_verify(cfg: &RunConfig, tol: f64) -> Result<bool> {
    let fac = cfg.factorize()?;
    let mut checks = Vec::new();
    let mut iso = None;
    if !fac.is_nonsingular() {
        let masked = fac.f_n.values().masked_count();
        checks.push(Check::flag(
            "nonsingular",
            false,
            format!("fₙ is singular at {masked} grid points"),
        ));
    } else {
        checks.push(Check::flag(
            "nonsingular",
            true,
            "fₙ finite on the whole grid",
        ));
        let mass = cfg.model.mass();
        let ric = factor::riccati_residual(&fac.f_n, &fac.w_n, mass)?;
        checks.push(Check::bound(
            "riccati_residual",
            verify::interior_max_abs(&ric),
            RICCATI_TOL,
        ));

        let rep = verify::check_isospectral(&fac, cfg.levels, tol)?;
        checks.push(Check::bound("isospectrality_max_gap", rep.max_gap, tol));
        checks.push(Check::flag(
            "spectral_node_match",
            rep.node_match,
            "node counts of paired levels",
        ));
        iso = Some(rep);

        for k in (0..cfg.levels).filter(|&k| k != cfg.n) {
            let psi = cfg.model.eigenstate(k, &cfg.grid)?;
            let r = verify::intertwining_residual(&fac, &psi, cfg.model.energy(k) - fac.e_n)?;
            checks.push(Check::bound(
                format!("intertwining_k{k}"),
                r,
                INTERTWINING_TOL,
            ));
        }
        for k in 0..cfg.levels {
            let psi = cfg.model.eigenstate(k, &cfg.grid)?;
            let name = format!("nodes_preserved_k{k}");
            match factor::map_eigenstate(&psi, &fac) {
                Ok(m) => {
                    let nodes = count_nodes(&m);
                    checks.push(Check::flag(name, nodes == k, format!("{nodes} nodes")));
                }
                Err(e @ Error::NonNormalizable(_)) => {
                    checks.push(Check::flag(name, false, e.to_string()))
                }
                Err(e) => return Err(e),
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    prepare_dir(&cfg.out)?;
    let doc = VerifyDoc {
        model: &cfg.model,
        n: cfg.n,
        beta: cfg.beta,
        lambda: cfg.lambda,
        passed,
        checks,
        isospectrality: iso,
    };
    write_json(&cfg.out.join("verify.json"), &doc)?;
    for c in &doc.checks {
        let detail = match (c.value, c.tolerance, &c.note) {
            (Some(v), Some(t), _) => format!("{v:.3e} (tol {t:.0e})"),
            (_, _, Some(n)) => n.clone(),
            _ => String::new(),
        };
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            detail
        );
    }
    Ok(passed)
}

pub fn cmd_scan(cfg: &RunConfig, lambda_min: f64, lambda_max: f64, steps: usize) -> Result<bool> {
    if !(lambda_min < lambda_max) || steps < 2 {
        return Err(Error::Config(format!(
            "empty λ range [{lambda_min}, {lambda_max}] with {steps} steps"
        )));
    }
    if cfg.model.id() == ModelId::Box {
        return Err(Error::Config("the box model is for spectra only".into()));
    }
    let lambdas: Vec<f64> = (0..steps)
        .map(|i| lambda_min + (lambda_max - lambda_min) * i as f64 / (steps - 1) as f64)
        .collect();
    let rep = verify::scan_lambda(&cfg.model, cfg.n, &lambdas, cfg.convention, &cfg.grid)?;
    prepare_dir(&cfg.out)?;
    write_json(&cfg.out.join("scan.json"), &rep)?;
    for t in &rep.transitions {
        println!(
            "transition at λ = {:.5} ({} above)",
            t.lambda,
            if t.singular_above {
                "singular"
            } else {
                "nonsingular"
            }
        );
    }
    match rep.critical_lambda {
        Some(l) => println!("critical λ = {l:.5}"),
        None => println!("no critical λ in range"),
    }
    Ok(true)
}

/// Curve data of both worked examples, file name → profile.
pub fn figure_profiles() -> Result<Vec<(String, SampledFunction)>> {
    let mut out = Vec::new();
    let ex1 = model_ex1(Ex1Params::new(1.0)?);
    let g1 = ex1.recommended_grid();
    let anchored = |lambda| Deformation::Bernoulli {
        lambda,
        convention: Convention::PaperEx1,
    };
    let f1 = factor::factorize(&ex1, 1, anchored(1.0), &g1)?;
    let f07 = factor::factorize(&ex1, 1, anchored(0.7), &g1)?;
    out.push(("ex1_V1_minus.csv".to_string(), f1.v_n_minus.clone()));
    out.push((
        "ex1_V1_tilde_lambda_1.csv".to_string(),
        f1.v_tilde_minus.clone(),
    ));
    out.push((
        "ex1_V1_tilde_lambda_0.7.csv".to_string(),
        f07.v_tilde_minus.clone(),
    ));
    out.push((
        "ex1_mass.csv".to_string(),
        SampledFunction::from_fn(g1, |x| ex1.mass().mass(x)),
    ));
    let psi0 = ex1.eigenstate(0, &g1)?;
    out.push((
        "ex1_psi_tilde_0_lambda_1.csv".to_string(),
        factor::map_eigenstate(&psi0, &f1)?,
    ));
    out.push((
        "ex1_psi_tilde_1_lambda_1.csv".to_string(),
        factor::zero_mode(&f1)?,
    ));

    let ex2 = model_ex2(Ex2Params::new(1.0, 5.0, 4.0)?);
    let g2 = ex2.recommended_grid();
    out.push((
        "ex2_mass.csv".to_string(),
        SampledFunction::from_fn(g2, |x| ex2.mass().mass(x)),
    ));
    for n in [1, 2] {
        let fac = factor::factorize(&ex2, n, Deformation::Auxiliary { beta: 1.0 }, &g2)?;
        out.push((format!("ex2_V{n}_minus.csv"), fac.v_n_minus.clone()));
        out.push((format!("ex2_V{n}_tilde_beta_1.csv"), fac.v_tilde_minus));
    }
    Ok(out)
}

pub fn cmd_figures(dir: &Path) -> Result<bool> {
    prepare_dir(dir)?;
    let mut all_finite = true;
    for (name, f) in figure_profiles()? {
        write_profile(&dir.join(&name), &f)?;
        let finite = !f.has_singular_points();
        all_finite &= finite;
        println!(
            "{name}{}",
            if finite {
                ""
            } else {
                " (contains singular points)"
            }
        );
    }
    Ok(all_finite)
}
