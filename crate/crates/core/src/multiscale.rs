//! The full problem on the perforated domain and the quantities compared
//! against the limit systems: strip averages, the corrector, channel fluxes
//! and channel diagnostics.

use std::ops::Range;
use std::sync::Arc;

use crate::effective::TraceProfile;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_helmholtz_2d, solve_direct, solve_unchecked, AssemblyOptions, Field, SourceTerm,
    GAUSS_2, GAUSS_2_WEIGHT,
};
use crate::geometry::{ChannelSpan, GeometryParams, Grid};

/// Solves the Helmholtz problem on the perforated domain with Neumann walls.
pub fn solve_epsilon_problem(
    grid_eps: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
) -> Result<Field> {
    solve_epsilon_problem_with_residual(grid_eps, p, f).map(|(u, _)| u)
}

/// As [`solve_epsilon_problem`], also returning the relative residual.
pub fn solve_epsilon_problem_with_residual(
    grid_eps: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
) -> Result<(Field, f64)> {
    solve_epsilon_problem_with(grid_eps, p, f, AssemblyOptions::default())
}

/// Full control over source support; returns the field and the relative residual.
pub fn solve_epsilon_problem_with(
    grid_eps: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
    opts: AssemblyOptions,
) -> Result<(Field, f64)> {
    let sys = assemble_helmholtz_2d(grid_eps, p.omega(), f, opts);
    let sol = solve_direct(&sys)?;
    Ok((Field::new(grid_eps.clone(), sol.values)?, sol.residual))
}

/// A perforated-domain solve whose residual has not been checked.
#[derive(Debug, Clone)]
pub struct EpsilonSolve {
    pub u: Field,
    /// `||Ax - b|| / ||b||`
    pub residual: f64,
    /// Componentwise backward error of the returned nodal values.
    pub backward_error: f64,
}

/// As [`solve_epsilon_problem_with`], returning the solution whatever its
/// residual. On grids with very thin channels the relative residual of any
/// `f64` vector stays above the acceptance threshold, so studies keep the
/// field and flag the row instead.
pub fn solve_epsilon_problem_unchecked(
    grid_eps: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
    opts: AssemblyOptions,
) -> Result<EpsilonSolve> {
    let sys = assemble_helmholtz_2d(grid_eps, p.omega(), f, opts);
    let sol = solve_unchecked(&sys)?;
    Ok(EpsilonSolve {
        u: Field::new(grid_eps.clone(), sol.values)?,
        residual: sol.residual,
        backward_error: sol.backward_error,
    })
}

/// Vertical average of `u` over the resonator strip at every x1 line.
///
/// Along a grid line the interpolant is piecewise linear in `x2`, so the
/// trapezoid rule integrates it exactly.
pub fn extract_v_eps(u_eps: &Field, _p: &GeometryParams) -> Result<TraceProfile> {
    let grid = u_eps.grid();
    let layout = grid.layout();
    let (lo, hi) = match (layout.channel_top_line, layout.strip_top_line) {
        (Some(lo), Some(hi)) if hi > lo => (lo, hi),
        _ => return Err(Error::NoStripInGrid),
    };
    let x2 = grid.x2_lines();
    let height = x2[hi] - x2[lo];
    let values = (0..grid.x1_lines().len())
        .map(|j1| {
            let mut total = 0.0;
            for j2 in lo..hi {
                let a = u_eps.at_lines(j1, j2).ok_or(Error::NoStripInGrid)?;
                let b = u_eps.at_lines(j1, j2 + 1).ok_or(Error::NoStripInGrid)?;
                total += 0.5 * (x2[j2 + 1] - x2[j2]) * (a + b);
            }
            Ok(total / height)
        })
        .collect::<Result<Vec<_>>>()?;
    TraceProfile::new(grid.trace_grid(), values)
}

/// `(u_eps - u) / eps` on the bulk grid of `u`.
pub fn extract_corrector(u_eps: &Field, u: &Field, p: &GeometryParams) -> Result<Field> {
    u_eps
        .restrict_to(u.grid())?
        .scaled_difference(u, 1.0 / p.eps())
}

/// Channel flux as a density on `I`, constant on every period.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxDensity {
    /// Period boundaries `0, eps, ..., a`.
    edges: Vec<f64>,
    /// `J_k = (1/(L eps^2)) int_{channel k} d2 u`.
    totals: Vec<f64>,
}

impl FluxDensity {
    pub fn period_count(&self) -> usize {
        self.totals.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Per-channel totals `J_k`.
    pub fn channel_totals(&self) -> &[f64] {
        &self.totals
    }

    /// Density `J_k / |period k|` on period `k`.
    pub fn density(&self, k: usize) -> f64 {
        self.totals[k] / (self.edges[k + 1] - self.edges[k])
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.totals.len()).map(|k| self.density(k)).collect()
    }

    pub fn total(&self) -> f64 {
        self.totals.iter().sum()
    }

    /// `sum_k |period k| * |density(k) - other[k]|`.
    pub fn l1_distance(&self, per_period: &[f64]) -> Result<f64> {
        if per_period.len() != self.totals.len() {
            return Err(Error::DimensionMismatch {
                expected: self.totals.len(),
                got: per_period.len(),
            });
        }
        Ok(per_period
            .iter()
            .enumerate()
            .map(|(k, q)| (self.edges[k + 1] - self.edges[k]) * (self.density(k) - q).abs())
            .sum())
    }

    /// `int_I j psi`, with `psi` integrated over each period by two-point
    /// Gauss on `sub` equal pieces.
    pub fn integrate_against(&self, psi: impl Fn(f64) -> f64, sub: usize) -> f64 {
        let sub = sub.max(1);
        (0..self.totals.len())
            .map(|k| {
                let (lo, hi) = (self.edges[k], self.edges[k + 1]);
                let h = (hi - lo) / sub as f64;
                let mut acc = 0.0;
                for s in 0..sub {
                    let x0 = lo + s as f64 * h;
                    for &t in &GAUSS_2 {
                        acc += GAUSS_2_WEIGHT * h * psi(x0 + t * h);
                    }
                }
                self.density(k) * acc
            })
            .sum()
    }

    /// `(x1, density)` rows describing the step function: two rows per period.
    pub fn step_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.totals.len());
        for k in 0..self.totals.len() {
            let d = self.density(k);
            out.push((self.edges[k], d));
            out.push((self.edges[k + 1], d));
        }
        out
    }
}

fn channels(grid: &Grid) -> Result<(&[ChannelSpan], usize, usize)> {
    let layout = grid.layout();
    match (layout.gamma0_line, layout.channel_top_line) {
        (Some(bottom), Some(top)) if !layout.channels.is_empty() && top > bottom => {
            Ok((&layout.channels, bottom, top))
        }
        _ => Err(Error::NoChannelsInGrid),
    }
}

fn value(u: &Field, j1: usize, j2: usize) -> Result<f64> {
    u.at_lines(j1, j2).ok_or(Error::NoChannelsInGrid)
}

/// `int u dx1` along line `j2` across the channel, trapezoid (exact).
fn line_integral(u: &Field, span: &ChannelSpan, j2: usize) -> Result<f64> {
    let x1 = u.grid().x1_lines();
    let mut total = 0.0;
    for j1 in span.left_line..span.right_line {
        total += 0.5 * (x1[j1 + 1] - x1[j1]) * (value(u, j1, j2)? + value(u, j1 + 1, j2)?);
    }
    Ok(total)
}

/// `int_{channel} d2 u` summed cell by cell.
fn channel_volume_flux(u: &Field, span: &ChannelSpan, bottom: usize, top: usize) -> Result<f64> {
    let x1 = u.grid().x1_lines();
    let mut total = 0.0;
    for j2 in bottom..top {
        for j1 in span.left_line..span.right_line {
            let hx = x1[j1 + 1] - x1[j1];
            let (bl, br) = (value(u, j1, j2)?, value(u, j1 + 1, j2)?);
            let (tl, tr) = (value(u, j1, j2 + 1)?, value(u, j1 + 1, j2 + 1)?);
            total += 0.5 * hx * ((tl - bl) + (tr - br));
        }
    }
    Ok(total)
}

/// Per-channel flux of `u_eps`, spread over each period as a density.
pub fn extract_flux(u_eps: &Field, p: &GeometryParams) -> Result<FluxDensity> {
    let grid = u_eps.grid();
    let (spans, bottom, top) = channels(grid)?;
    let scale = 1.0 / (p.channel_length() * p.eps() * p.eps());
    let totals = spans
        .iter()
        .map(|span| Ok(scale * channel_volume_flux(u_eps, span, bottom, top)?))
        .collect::<Result<Vec<_>>>()?;
    let x1 = grid.x1_lines();
    let edges = grid.layout().period_lines.iter().map(|&j| x1[j]).collect();
    Ok(FluxDensity { edges, totals })
}

/// Flux through a window of channels, computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFlux {
    pub channels: Range<usize>,
    /// `(1/(eps^2 L)) int_{channels} d2 u`.
    pub volume: f64,
    /// `(1/(eps^2 L)) (int_{tops} u - int_{bottoms} u)`.
    pub boundary: f64,
}

impl WindowFlux {
    /// `|volume - boundary| / max(1, |boundary|)`.
    pub fn mismatch(&self) -> f64 {
        (self.volume - self.boundary).abs() / self.boundary.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDiagnostics {
    /// `eps^-2 int_C |d2 u|`.
    pub d2_l1_scaled: f64,
    /// `eps^-1 int_C |d1 u|`.
    pub d1_l1_scaled: f64,
    /// `J_k` per channel.
    pub per_channel_flux: Vec<f64>,
    /// Mean of `u` over each channel top.
    pub top_avgs: Vec<f64>,
    /// Mean of `u` over each channel bottom.
    pub bottom_avgs: Vec<f64>,
    pub b_eps_windows: Vec<WindowFlux>,
}

impl ChannelDiagnostics {
    pub fn max_window_mismatch(&self) -> f64 {
        self.b_eps_windows
            .iter()
            .fold(0.0, |m, w| m.max(w.mismatch()))
    }
}

/// `int_0^1 |a (1 - s) + b s| ds`.
fn abs_linear_mean(a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * (a + b).abs()
    } else {
        0.5 * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// Channel diagnostics, integrating the bilinear interpolant exactly.
pub fn channel_diagnostics(
    u_eps: &Field,
    p: &GeometryParams,
    windows: &[Range<usize>],
) -> Result<ChannelDiagnostics> {
    let grid = u_eps.grid();
    let (spans, bottom, top) = channels(grid)?;
    let (x1, x2) = (grid.x1_lines(), grid.x2_lines());
    let eps = p.eps();
    let scale = 1.0 / (p.channel_length() * eps * eps);

    let mut d2 = 0.0;
    let mut d1 = 0.0;
    let mut per_channel_flux = Vec::with_capacity(spans.len());
    let mut top_avgs = Vec::with_capacity(spans.len());
    let mut bottom_avgs = Vec::with_capacity(spans.len());
    let mut top_ints = Vec::with_capacity(spans.len());
    let mut bottom_ints = Vec::with_capacity(spans.len());
    for span in spans {
        for j2 in bottom..top {
            let hy = x2[j2 + 1] - x2[j2];
            for j1 in span.left_line..span.right_line {
                let hx = x1[j1 + 1] - x1[j1];
                let (bl, br) = (value(u_eps, j1, j2)?, value(u_eps, j1 + 1, j2)?);
                let (tl, tr) = (value(u_eps, j1, j2 + 1)?, value(u_eps, j1 + 1, j2 + 1)?);
                // d2 u is linear in x1 across the cell, d1 u linear in x2
                d2 += hx * abs_linear_mean(tl - bl, tr - br);
                d1 += hy * abs_linear_mean(br - bl, tr - tl);
            }
        }
        let width = x1[span.right_line] - x1[span.left_line];
        let ti = line_integral(u_eps, span, top)?;
        let bi = line_integral(u_eps, span, bottom)?;
        top_avgs.push(ti / width);
        bottom_avgs.push(bi / width);
        top_ints.push(ti);
        bottom_ints.push(bi);
        per_channel_flux.push(scale * channel_volume_flux(u_eps, span, bottom, top)?);
    }

    let b_eps_windows = windows
        .iter()
        .map(|w| {
            if w.start > w.end || w.end > spans.len() {
                return Err(Error::InvalidStudy(format!(
                    "channel window {w:?} outside 0..{}",
                    spans.len()
                )));
            }
            let volume = per_channel_flux[w.clone()].iter().sum();
            let boundary = scale * w.clone().map(|k| top_ints[k] - bottom_ints[k]).sum::<f64>();
            Ok(WindowFlux {
                channels: w.clone(),
                volume,
                boundary,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ChannelDiagnostics {
        d2_l1_scaled: d2 / (eps * eps),
        d1_l1_scaled: d1 / eps,
        per_channel_flux,
        top_avgs,
        bottom_avgs,
        b_eps_windows,
    })
}

/// Mean of a profile over each period `[edges[k], edges[k+1]]`; the edges
/// must be nodes of the profile's grid.
pub fn period_means(profile: &TraceProfile, edges: &[f64]) -> Result<Vec<f64>> {
    let nodes = profile.grid().nodes();
    let values = profile.values();
    let find = |x: f64| {
        nodes
            .iter()
            .position(|&n| n == x)
            .ok_or(Error::GridMismatch)
    };
    edges
        .windows(2)
        .map(|w| {
            let (lo, hi) = (find(w[0])?, find(w[1])?);
            let mut total = 0.0;
            for e in lo..hi {
                total += 0.5 * (nodes[e + 1] - nodes[e]) * (values[e] + values[e + 1]);
            }
            Ok(total / (w[1] - w[0]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        build_grid, build_limit_grid, validate_params, ParamRecord, ResolutionPolicy,
    };

    fn setup() -> (GeometryParams, Arc<Grid>) {
        let p = validate_params(&ParamRecord::default()).unwrap();
        let g = Arc::new(build_grid(&p, &ResolutionPolicy::default()).unwrap());
        (p, g)
    }

    #[test]
    fn constant_source_gives_constant_solution() {
        let (p, g) = setup();
        let one = |_: f64, _: f64| 1.0;
        let everywhere = AssemblyOptions {
            f_support_omega0: false,
        };
        let (u, _) =
            solve_epsilon_problem_with(&g, &p, SourceTerm::Function(&one), everywhere).unwrap();
        let target = -1.0 / (p.omega() * p.omega());
        let worst = u
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max((v - target).abs()));
        assert!(worst < 1e-10, "{worst}");
        let zero = solve_epsilon_problem(&g, &p, SourceTerm::Zero).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn strip_averages() {
        let (p, g) = setup();
        let c = extract_v_eps(&Field::interpolate(g.clone(), |_, _| 2.5), &p).unwrap();
        assert!(c.values().iter().all(|v| (v - 2.5).abs() < 1e-15));
        let lin = extract_v_eps(&Field::interpolate(g.clone(), |_, y| y), &p).unwrap();
        assert!(lin.values().iter().all(|v| (v - 0.375).abs() < 1e-15));
        // separable: cos(pi x1) times the strip mean of y^2 on (0.25, 0.5)
        let sep = extract_v_eps(
            &Field::interpolate(g.clone(), |x, y| (std::f64::consts::PI * x).cos() * y * y),
            &p,
        )
        .unwrap();
        let x2 = g.x2_lines();
        let (lo, hi) = (
            g.layout().channel_top_line.unwrap(),
            g.layout().strip_top_line.unwrap(),
        );
        let mean: f64 = (lo..hi)
            .map(|j| 0.5 * (x2[j + 1] - x2[j]) * (x2[j] * x2[j] + x2[j + 1] * x2[j + 1]))
            .sum::<f64>()
            / (x2[hi] - x2[lo]);
        for (x, v) in sep.points() {
            assert!((v - (std::f64::consts::PI * x).cos() * mean).abs() < 1e-14);
        }
    }

    #[test]
    fn no_strip_in_bulk_grid() {
        let (p, _) = setup();
        let g0 = Arc::new(build_limit_grid(&p, &ResolutionPolicy::default()).unwrap());
        let u = Field::zeros(g0);
        assert_eq!(extract_v_eps(&u, &p), Err(Error::NoStripInGrid));
        assert_eq!(extract_flux(&u, &p), Err(Error::NoChannelsInGrid));
        assert_eq!(
            channel_diagnostics(&u, &p, &[]),
            Err(Error::NoChannelsInGrid)
        );
    }

    #[test]
    fn corrector_extraction() {
        let (p, g) = setup();
        let g0 = Arc::new(g.limit_part().unwrap());
        let phi = |x: f64, y: f64| x * x - 3.0 * y;
        let u = Field::interpolate(g0.clone(), |x, y| (x + y).sin());
        let u_eps = Field::interpolate(g.clone(), |x, y| (x + y).sin() + p.eps() * phi(x, y));
        let w = extract_corrector(&u_eps, &u, &p).unwrap();
        for (k, &v) in w.values().iter().enumerate() {
            let [x, y] = g0.node_coords(k);
            assert!((v - phi(x, y)).abs() < 1e-12);
        }
        let same = Field::interpolate(g.clone(), |x, y| (x + y).sin());
        let zero = extract_corrector(&same, &u, &p).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let foreign = Field::zeros(Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap()));
        assert_eq!(
            extract_corrector(&u_eps, &foreign, &p),
            Err(Error::GridMismatch)
        );
    }

    #[test]
    fn linear_field_flux() {
        let (p, g) = setup();
        let u = Field::interpolate(g, |_, y| y);
        let j = extract_flux(&u, &p).unwrap();
        assert_eq!(j.period_count(), 4);
        for k in 0..4 {
            // (1/(L eps^2)) * alpha eps^3 * L eps * 1
            let expected = p.alpha() * p.eps() * p.eps();
            assert!((j.channel_totals()[k] - expected).abs() < 1e-14);
            assert!((j.density(k) - p.alpha() * p.eps()).abs() < 1e-13);
        }
        let d = channel_diagnostics(&u, &p, &[0..4, 1..3]).unwrap();
        // eps^-2 (a/eps) alpha eps^3 L eps = a alpha L eps
        assert!((d.d2_l1_scaled - 0.25).abs() < 1e-14, "{}", d.d2_l1_scaled);
        assert!(d.d1_l1_scaled.abs() < 1e-15);
        assert!((d.b_eps_windows[0].boundary - j.total()).abs() < 1e-13);
        assert!(d.max_window_mismatch() < 1e-12);
    }

    #[test]
    fn constant_field_has_no_flux() {
        let (p, g) = setup();
        let u = Field::interpolate(g, |_, _| -4.0);
        let j = extract_flux(&u, &p).unwrap();
        assert!(j.densities().iter().all(|&d| d == 0.0));
        let d = channel_diagnostics(&u, &p, &[0..4]).unwrap();
        assert_eq!((d.d1_l1_scaled, d.d2_l1_scaled), (0.0, 0.0));
        assert!(d
            .top_avgs
            .iter()
            .chain(&d.bottom_avgs)
            .all(|&v| (v + 4.0).abs() < 1e-14));
    }

    #[test]
    fn abs_linear_mean_brute_force() {
        for (a, b) in [(1.0, 2.0), (-1.0, 3.0), (0.5, -0.5), (0.0, -2.0)] {
            let n = 200_000;
            let brute: f64 = (0..n)
                .map(|i| (a + (b - a) * (i as f64 + 0.5) / n as f64).abs())
                .sum::<f64>()
                / n as f64;
            assert!((abs_linear_mean(a, b) - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn flux_density_integration() {
        let j = FluxDensity {
            edges: vec![0.0, 0.5, 1.0],
            totals: vec![1.0, -2.0],
        };
        assert_eq!(j.density(0), 2.0);
        assert_eq!(j.integrate_against(|_| 1.0, 1), -1.0);
        assert_eq!(j.l1_distance(&[2.0, -4.0]).unwrap(), 0.0);
        assert_eq!(j.step_points().len(), 4);
    }

    #[test]
    fn period_means_of_linear_profile() {
        let grid1 = crate::geometry::Interval1DGrid::new(vec![0.0, 0.2, 0.5, 0.7, 1.0]).unwrap();
        let t = TraceProfile::interpolate(grid1, |x| x);
        assert_eq!(
            period_means(&t, &[0.0, 0.5, 1.0]).unwrap(),
            vec![0.25, 0.75]
        );
    }
}
