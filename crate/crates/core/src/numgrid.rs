//! Uniform grids, sampled functions, finite differences and quadrature.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stencil width used by [`derivative`] and [`second_derivative`].
pub const STENCIL_WIDTH: usize = 7;

const MIN_POINTS: usize = 8;

/// Uniform mesh on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    h: f64,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::Config(format!(
                "grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < MIN_POINTS {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_POINTS} points, got {n_points}"
            )));
        }
        let h = (x_max - x_min) / (n_points - 1) as f64;
        Ok(Self {
            x_min,
            x_max,
            n_points,
            h,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }

    /// Midpoint between node `i` and node `i + 1`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.h
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let t = ((x - self.x_min) / self.h).round();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.n_points - 1)
        }
    }

    /// Grid made of every other node. Only defined for odd point counts, so
    /// that both end points are kept.
    pub fn coarsened(&self) -> Result<Self> {
        if self.n_points % 2 == 0 {
            return Err(Error::Config(format!(
                "cannot coarsen a grid with an even number of points ({})",
                self.n_points
            )));
        }
        Grid::new(self.x_min, self.x_max, self.n_points.div_ceil(2))
    }
}

/// Real function tabulated on a [`Grid`].
///
/// Points flagged in `singular_mask` carry no meaningful value (typically a
/// pole of a superpotential). Every unflagged value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
    singular_mask: Vec<bool>,
}

impl SampledFunction {
    /// Wraps raw values; non-finite entries are flagged singular.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let mask = values.iter().map(|v| !v.is_finite()).collect();
        Self::with_mask(grid, values, mask)
    }

    /// Wraps raw values with an explicit mask. Non-finite entries are
    /// flagged even when the supplied mask says otherwise.
    pub fn with_mask(grid: Grid, values: Vec<f64>, mut singular_mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.n_points() || singular_mask.len() != grid.n_points() {
            return Err(Error::InconsistentInput(format!(
                "sampled function has {} values and {} mask entries on a {}-point grid",
                values.len(),
                singular_mask.len(),
                grid.n_points()
            )));
        }
        for (m, v) in singular_mask.iter_mut().zip(&values) {
            *m |= !v.is_finite();
        }
        Ok(Self {
            grid,
            values,
            singular_mask,
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.points().map(f).collect();
        let singular_mask = values.iter().map(|v| !v.is_finite()).collect();
        Self {
            grid,
            values,
            singular_mask,
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_fn(grid, |_| 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn singular_mask(&self) -> &[bool] {
        &self.singular_mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    #[inline]
    pub fn is_masked(&self, i: usize) -> bool {
        self.singular_mask[i]
    }

    pub fn has_singular_points(&self) -> bool {
        self.singular_mask.iter().any(|&m| m)
    }

    pub fn masked_count(&self) -> usize {
        self.singular_mask.iter().filter(|&&m| m).count()
    }

    /// Largest `|value|` over unmasked points (0 when all are masked).
    pub fn max_abs(&self) -> f64 {
        self.unmasked().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// `(index, value)` pairs of the unmasked points.
    pub fn unmasked(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.singular_mask)
            .enumerate()
            .filter(|(_, (_, &m))| !m)
            .map(|(i, (&v, _))| (i, v))
    }

    /// Pointwise map; the mask is carried over unchanged.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.point(i), v))
            .collect();
        Self::with_mask(self.grid, values, self.singular_mask.clone())
            .expect("map preserves the grid length")
    }

    /// Pointwise combination of two functions on the same grid; masks are
    /// OR-ed.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let mask = self
            .singular_mask
            .iter()
            .zip(&other.singular_mask)
            .map(|(&a, &b)| a || b)
            .collect();
        Self::with_mask(self.grid, values, mask)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|_, v| c * v)
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InconsistentInput(
                "sampled functions live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Every other node, matching [`Grid::coarsened`].
    pub fn coarsened(&self) -> Result<Self> {
        let grid = self.grid.coarsened()?;
        let values = self.values.iter().step_by(2).copied().collect();
        let mask = self.singular_mask.iter().step_by(2).copied().collect();
        Self::with_mask(grid, values, mask)
    }

    /// Adds `extra` masked points on each side of every masked point.
    pub fn dilate_mask(&self, extra: usize) -> Self {
        let n = self.len();
        let mut mask = self.singular_mask.clone();
        for (i, _) in self.singular_mask.iter().enumerate().filter(|(_, &m)| m) {
            let lo = i.saturating_sub(extra);
            let hi = (i + extra).min(n - 1);
            mask[lo..=hi].iter_mut().for_each(|m| *m = true);
        }
        Self {
            grid: self.grid,
            values: self.values.clone(),
            singular_mask: mask,
        }
    }

    /// Fills each interior run of masked points by the polynomial through
    /// up to four unmasked neighbours on either side. Runs longer than
    /// `max_run`, and runs touching the grid edge, are left masked.
    pub fn bridged(&self, max_run: usize) -> Self {
        let n = self.len();
        let mut out = self.clone();
        let mut i = 0;
        while i < n {
            if !self.singular_mask[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < n && self.singular_mask[i] {
                i += 1;
            }
            let end = i; // exclusive
            if start == 0 || end == n || end - start > max_run {
                continue;
            }
            let left: Vec<usize> = (0..start)
                .rev()
                .take_while(|&j| !self.singular_mask[j])
                .take(4)
                .collect();
            let right: Vec<usize> = (end..n)
                .take_while(|&j| !self.singular_mask[j])
                .take(4)
                .collect();
            if left.len() < 2 || right.len() < 2 {
                continue;
            }
            let k = left.len().min(right.len());
            let nodes: Vec<usize> = left[..k].iter().chain(&right[..k]).copied().collect();
            for j in start..end {
                out.values[j] = lagrange(&nodes, j, &self.values);
                out.singular_mask[j] = false;
            }
        }
        out
    }

    /// Cubic interpolation at an arbitrary abscissa inside the grid.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        if x < self.grid.x_min() || x > self.grid.x_max() {
            return Err(Error::Domain(format!(
                "x = {x} outside [{}, {}]",
                self.grid.x_min(),
                self.grid.x_max()
            )));
        }
        let n = self.len();
        let t = (x - self.grid.x_min()) / self.grid.h();
        let base = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let nodes: Vec<usize> = (base..base + 4).collect();
        if nodes.iter().any(|&j| self.singular_mask[j]) {
            return Err(Error::Domain(format!(
                "interpolation at x = {x} touches a singular point"
            )));
        }
        let mut acc = 0.0;
        for &j in &nodes {
            let mut w = 1.0;
            for &k in &nodes {
                if k != j {
                    w *= (t - k as f64) / (j as f64 - k as f64);
                }
            }
            acc += w * self.values[j];
        }
        Ok(acc)
    }

    /// Writes `x,value,singular` rows at 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "value", "singular"])?;
        for (i, (&v, &m)) in self.values.iter().zip(&self.singular_mask).enumerate() {
            wtr.write_record([
                format_full(self.grid.point(i)),
                format_full(v),
                m.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv); the grid
    /// is reconstructed from the first and last abscissae.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut xs = Vec::new();
        let mut values = Vec::new();
        let mut mask = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InconsistentInput(format!("bad number {s:?}: {e}")))
            };
            xs.push(parse(&rec[0])?);
            values.push(parse(&rec[1])?);
            mask.push(rec[2].trim() == "true");
        }
        if xs.len() < 2 {
            return Err(Error::InconsistentInput(
                "CSV holds fewer than two rows".into(),
            ));
        }
        let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len())?;
        Self::with_mask(grid, values, mask)
    }
}

/// Decimal representation with 17 significant digits.
pub fn format_full(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn lagrange(nodes: &[usize], at: usize, values: &[f64]) -> f64 {
    let t = at as f64;
    nodes
        .iter()
        .map(|&j| {
            let w: f64 = nodes
                .iter()
                .filter(|&&k| k != j)
                .map(|&k| (t - k as f64) / (j as f64 - k as f64))
                .product();
            w * values[j]
        })
        .sum()
}

/// Finite-difference weights for the `order`-th derivative at `z` from
/// nodes `xs` (Fornberg's recursion).
pub fn fd_weights(z: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

fn apply_stencil(f: &SampledFunction, order: usize) -> Result<SampledFunction> {
    let n = f.len();
    if n < STENCIL_WIDTH {
        return Err(Error::Config(format!(
            "derivative stencil needs {STENCIL_WIDTH} points, grid has {n}"
        )));
    }
    let h = f.grid().h();
    let scale = h.powi(order as i32);
    // Weights indexed by the position of the target inside its window.
    let offsets: Vec<f64> = (0..STENCIL_WIDTH).map(|k| k as f64).collect();
    let table: Vec<Vec<f64>> = (0..STENCIL_WIDTH)
        .map(|p| fd_weights(p as f64, &offsets, order))
        .collect();
    let half = STENCIL_WIDTH / 2;
    let mut values = vec![0.0; n];
    let mut mask = vec![false; n];
    for i in 0..n {
        let start = i.saturating_sub(half).min(n - STENCIL_WIDTH);
        let window = start..start + STENCIL_WIDTH;
        if f.singular_mask[window.clone()].iter().any(|&m| m) {
            mask[i] = true;
            values[i] = f64::NAN;
            continue;
        }
        let w = &table[i - start];
        values[i] = f.values[window]
            .iter()
            .zip(w)
            .map(|(v, c)| v * c)
            .sum::<f64>()
            / scale;
    }
    SampledFunction::with_mask(*f.grid(), values, mask)
}

/// First derivative: sixth-order central differences in the interior,
/// one-sided seven-point stencils near the edges. Any point whose stencil
/// touches a masked input is masked in the output.
pub fn derivative(f: &SampledFunction) -> Result<SampledFunction> {
    apply_stencil(f, 1)
}

/// Second derivative on the same seven-point stencils.
pub fn second_derivative(f: &SampledFunction) -> Result<SampledFunction> {
    apply_stencil(f, 2)
}

/// Where the running integral starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    /// `F(x_min) = 0`.
    LeftEdge,
    /// `F(x_min)` equals the given value.
    ValueAtLeft(f64),
}

/// Nodes per quadrature window.
const QUAD_WIDTH: usize = 8;

/// Weights (over 120960) integrating the degree-7 interpolant through nodes
/// `0..8` over the cell `[p, p+1]`, row `p`.
const CELL_WEIGHTS: [[f64; QUAD_WIDTH]; QUAD_WIDTH - 1] = [
    [
        36799.0, 139849.0, -121797.0, 123133.0, -88547.0, 41499.0, -11351.0, 1375.0,
    ],
    [
        -1375.0, 47799.0, 101349.0, -44797.0, 26883.0, -11547.0, 2999.0, -351.0,
    ],
    [
        351.0, -4183.0, 57627.0, 81693.0, -20227.0, 7227.0, -1719.0, 191.0,
    ],
    [
        -191.0, 1879.0, -9531.0, 68323.0, 68323.0, -9531.0, 1879.0, -191.0,
    ],
    [
        191.0, -1719.0, 7227.0, -20227.0, 81693.0, 57627.0, -4183.0, 351.0,
    ],
    [
        -351.0, 2999.0, -11547.0, 26883.0, -44797.0, 101349.0, 47799.0, -1375.0,
    ],
    [
        1375.0, -11351.0, 41499.0, -88547.0, 123133.0, -121797.0, 139849.0, 36799.0,
    ],
];
const CELL_DENOMINATOR: f64 = 120960.0;

/// Running antiderivative `F(x_i) = F(x_min) + ∫_{x_min}^{x_i} f`.
///
/// Each cell is integrated with the degree-7 interpolant through the eight
/// nearest nodes (shifted inward near the edges), so the rule is exact for
/// polynomials of degree 7 and eighth-order accurate.
pub fn cumulative_integral(f: &SampledFunction, anchor: Anchor) -> Result<SampledFunction> {
    if f.has_singular_points() {
        return Err(Error::Domain(
            "cannot integrate a function with singular points".into(),
        ));
    }
    let n = f.len();
    if n < QUAD_WIDTH {
        return Err(Error::Config(format!(
            "quadrature needs {QUAD_WIDTH} points, grid has {n}"
        )));
    }
    let h = f.grid().h();
    let v = f.values();
    let mut out = vec![0.0; n];
    out[0] = match anchor {
        Anchor::LeftEdge => 0.0,
        Anchor::ValueAtLeft(a) => a,
    };
    for i in 0..n - 1 {
        let start = i.saturating_sub(QUAD_WIDTH / 2 - 1).min(n - QUAD_WIDTH);
        let w = &CELL_WEIGHTS[i - start];
        let cell: f64 = v[start..start + QUAD_WIDTH]
            .iter()
            .zip(w)
            .map(|(a, b)| a * b)
            .sum();
        out[i + 1] = out[i] + cell * h / CELL_DENOMINATOR;
    }
    SampledFunction::new(*f.grid(), out)
}

/// `∫_{x_min}^{x_max} f`, using the same cell rule as
/// [`cumulative_integral`].
pub fn definite_integral(f: &SampledFunction) -> Result<f64> {
    let big_f = cumulative_integral(f, Anchor::LeftEdge)?;
    Ok(big_f.values()[big_f.len() - 1])
}

/// `sqrt(∫ f²)`.
pub fn l2_norm(f: &SampledFunction) -> Result<f64> {
    Ok(definite_integral(&f.map(|_, v| v * v))?.sqrt())
}
