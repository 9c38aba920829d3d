//! The limit systems: the trivial limit `u` on the bulk rectangle, the
//! resonator profile `v` on the interval `I = (0, a)`, and the corrector `w`.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_1d_operator, assemble_1d_v, assemble_helmholtz_2d, assemble_operator, profile_norm,
    solve_direct, solve_unchecked, AssemblyOptions, Field, NormKind, SourceTerm, SparseSystem,
};
use crate::geometry::{GeometryParams, Grid, Interval1DGrid};

/// Relative distance to an eigenvalue below which a solve is flagged.
pub const EIGENVALUE_WARNING: f64 = 1e-3;
/// Largest mode index checked by the eigenvalue guards.
pub const GUARD_MODES: usize = 20;

/// A function on the interval `[0, a]`, one value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProfile {
    grid1: Interval1DGrid,
    values: Vec<f64>,
}

impl TraceProfile {
    pub fn new(grid1: Interval1DGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid1.len() {
            return Err(Error::DimensionMismatch {
                expected: grid1.len(),
                got: values.len(),
            });
        }
        Ok(TraceProfile { grid1, values })
    }

    pub fn constant(grid1: Interval1DGrid, c: f64) -> Self {
        let values = vec![c; grid1.len()];
        TraceProfile { grid1, values }
    }

    pub fn interpolate(grid1: Interval1DGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid1.nodes().iter().map(|&x| f(x)).collect();
        TraceProfile { grid1, values }
    }

    pub fn grid(&self) -> &Interval1DGrid {
        &self.grid1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(x1, value)` pairs in node order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid1
            .nodes()
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        profile_norm(&self.grid1, &self.values, None, kind)
    }

    /// `||self - other||` for profiles on the same nodes.
    pub fn distance(&self, other: &TraceProfile, kind: NormKind) -> Result<f64> {
        if self.grid1 != other.grid1 {
            return Err(Error::GridMismatch);
        }
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        profile_norm(&self.grid1, &diff, None, kind)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The limit triple `(u, v, w)` at one frequency.
#[derive(Debug, Clone)]
pub struct EffectiveSolution {
    pub u: Field,
    pub v: TraceProfile,
    pub w: Field,
    pub omega: f64,
    /// Largest relative residual of the three solves.
    pub residual: f64,
}

/// Neumann eigenvalues `pi^2 (m^2/a^2 + n^2/b^2)` of the rectangle for `m, n <= max_mode`.
pub fn neumann_eigenvalues(a: f64, b: f64, max_mode: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity((max_mode + 1) * (max_mode + 1));
    for m in 0..=max_mode {
        for n in 0..=max_mode {
            let (km, kn) = (m as f64 * PI / a, n as f64 * PI / b);
            out.push((m, n, km * km + kn * kn));
        }
    }
    out.sort_by(|x, y| x.2.total_cmp(&y.2));
    out
}

/// Relative distance of `omega^2` to `lambda`, measured against `max(lambda, omega^2)`.
fn relative_gap(omega_sq: f64, lambda: f64) -> f64 {
    (omega_sq - lambda).abs() / lambda.max(omega_sq)
}

/// The rectangle eigenvalue closest to `omega^2`, if within [`EIGENVALUE_WARNING`].
pub fn near_neumann_eigenvalue(p: &GeometryParams) -> Option<(usize, usize, f64)> {
    let w2 = p.omega() * p.omega();
    neumann_eigenvalues(p.a(), p.b(), GUARD_MODES)
        .into_iter()
        .filter(|&(_, _, l)| relative_gap(w2, l) <= EIGENVALUE_WARNING)
        .min_by(|x, y| relative_gap(w2, x.2).total_cmp(&relative_gap(w2, y.2)))
}

/// The resonator eigenvalue `(m pi/a)^2 + alpha/(LV)` closest to `omega^2`,
/// if within [`EIGENVALUE_WARNING`].
pub fn near_resonator_eigenvalue(p: &GeometryParams) -> Option<(usize, f64)> {
    let w2 = p.omega() * p.omega();
    let beta = p.resonator_coefficient();
    (0..=GUARD_MODES)
        .map(|m| {
            let k = m as f64 * PI / p.a();
            (m, k * k + beta)
        })
        .filter(|&(_, l)| relative_gap(w2, l) <= EIGENVALUE_WARNING)
        .min_by(|x, y| relative_gap(w2, x.1).total_cmp(&relative_gap(w2, y.1)))
}

fn guard_bulk(p: &GeometryParams) {
    if let Some((m, n, l)) = near_neumann_eigenvalue(p) {
        warn!(
            "omega^2 = {} is within {EIGENVALUE_WARNING} of the Neumann eigenvalue {l} (m = {m}, n = {n})",
            p.omega() * p.omega()
        );
    }
}

/// Solves `-Lap u - omega^2 u = f` on the bulk rectangle with Neumann conditions.
pub fn solve_trivial_limit(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
) -> Result<Field> {
    trivial_limit(grid0, p, f, true).map(|(u, _)| u)
}

fn solve(sys: &SparseSystem, checked: bool) -> Result<crate::fem::Solution> {
    if checked {
        solve_direct(sys)
    } else {
        solve_unchecked(sys)
    }
}

fn trivial_limit(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
    checked: bool,
) -> Result<(Field, f64)> {
    guard_bulk(p);
    let sys = assemble_helmholtz_2d(grid0, p.omega(), f, AssemblyOptions::default());
    let sol = solve(&sys, checked)?;
    Ok((Field::new(grid0.clone(), sol.values)?, sol.residual))
}

/// Values of `u` on the line `x2 = 0`.
pub fn trace_on_gamma0(u: &Field) -> Result<TraceProfile> {
    let grid = u.grid();
    let line = grid
        .layout()
        .gamma0_line
        .or_else(|| grid.x2_line_index(0.0))
        .ok_or(Error::NoTraceLine)?;
    let values = (0..grid.x1_lines().len())
        .map(|j1| u.at_lines(j1, line).ok_or(Error::NoTraceLine))
        .collect::<Result<Vec<_>>>()?;
    TraceProfile::new(grid.trace_grid(), values)
}

/// Solves `-v'' + (alpha/(LV) - omega^2) v = alpha/(LV) u` on `I` with Neumann ends.
pub fn solve_v(u_trace: &TraceProfile, p: &GeometryParams) -> Result<TraceProfile> {
    resonator_profile(u_trace, p, None, true).map(|(v, _)| v)
}

/// As [`solve_v`] with a source `s` acting in the strip:
/// `-v'' + (alpha/(LV) - omega^2) v = alpha/(LV) u + s`.
pub fn solve_v_with_source(
    u_trace: &TraceProfile,
    p: &GeometryParams,
    strip_source: Option<&TraceProfile>,
) -> Result<TraceProfile> {
    resonator_profile(u_trace, p, strip_source, true).map(|(v, _)| v)
}

/// As [`solve_v_with_source`], also returning the relative residual.
pub fn solve_v_with_residual(
    u_trace: &TraceProfile,
    p: &GeometryParams,
    strip_source: Option<&TraceProfile>,
) -> Result<(TraceProfile, f64)> {
    resonator_profile(u_trace, p, strip_source, true)
}

fn check_same_nodes(a: &TraceProfile, b: Option<&TraceProfile>) -> Result<()> {
    match b {
        Some(b) if b.grid1 != a.grid1 => Err(Error::GridMismatch),
        _ => Ok(()),
    }
}

fn resonator_profile(
    u_trace: &TraceProfile,
    p: &GeometryParams,
    strip_source: Option<&TraceProfile>,
    checked: bool,
) -> Result<(TraceProfile, f64)> {
    check_same_nodes(u_trace, strip_source)?;
    if let Some((m, l)) = near_resonator_eigenvalue(p) {
        warn!(
            "omega^2 = {} is within {EIGENVALUE_WARNING} of the resonator eigenvalue {l} (m = {m})",
            p.omega() * p.omega()
        );
    }
    let beta = p.resonator_coefficient();
    let c0 = beta - p.omega() * p.omega();
    let mut g: Vec<f64> = u_trace.values.iter().map(|u| beta * u).collect();
    if let Some(s) = strip_source {
        for (gi, si) in g.iter_mut().zip(&s.values) {
            *gi += si;
        }
    }
    let sys = assemble_1d_v(&u_trace.grid1, c0, &g);
    let sol = solve(&sys, checked)?;
    Ok((
        TraceProfile::new(u_trace.grid1.clone(), sol.values)?,
        sol.residual,
    ))
}

fn check_trace_grid(v: &TraceProfile, grid0: &Grid) -> Result<usize> {
    if v.grid1.nodes() != grid0.x1_lines() {
        return Err(Error::GridMismatch);
    }
    grid0
        .layout()
        .gamma0_line
        .or_else(|| grid0.x2_line_index(0.0))
        .ok_or(Error::NoTraceLine)
}

/// Load of the corrector from the weak form: `-V int (v' phi' - omega^2 v phi)`
/// over `Gamma0`, one entry per trace node.
pub fn corrector_boundary_load(v: &TraceProfile, p: &GeometryParams) -> Vec<f64> {
    let w2 = p.omega() * p.omega();
    let op = assemble_1d_operator(&v.grid1, 1.0, -w2);
    op.matvec(&v.values)
        .into_iter()
        .map(|x| -p.strip_height() * x)
        .collect()
}

/// [`corrector_boundary_load`] plus `V int s phi` for a strip source `s`.
pub fn corrector_boundary_load_with_source(
    v: &TraceProfile,
    p: &GeometryParams,
    strip_source: Option<&TraceProfile>,
) -> Result<Vec<f64>> {
    check_same_nodes(v, strip_source)?;
    let mut load = corrector_boundary_load(v, p);
    if let Some(s) = strip_source {
        let mass = assemble_1d_operator(&v.grid1, 0.0, 1.0);
        for (l, m) in load.iter_mut().zip(mass.matvec(&s.values)) {
            *l += p.strip_height() * m;
        }
    }
    Ok(load)
}

/// Load of the corrector from the rewritten flux condition
/// `dw/dn = (alpha/L)(v - u)`. Agrees with [`corrector_boundary_load`]
/// whenever `v` solves the discrete resonator equation for this `u`.
pub fn corrector_flux_load(
    v: &TraceProfile,
    u_trace: &TraceProfile,
    p: &GeometryParams,
) -> Result<Vec<f64>> {
    if v.grid1 != u_trace.grid1 {
        return Err(Error::GridMismatch);
    }
    let mass = assemble_1d_operator(&v.grid1, 0.0, 1.0);
    let jump: Vec<f64> = v
        .values
        .iter()
        .zip(&u_trace.values)
        .map(|(a, b)| a - b)
        .collect();
    let s = p.alpha() / p.channel_length();
    Ok(mass.matvec(&jump).into_iter().map(|x| s * x).collect())
}

/// Solves the homogeneous Helmholtz problem on `grid0` with the given load on
/// the `Gamma0` trace nodes.
pub fn solve_corrector_with_load(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    trace_load: &[f64],
) -> Result<Field> {
    corrector(grid0, p, trace_load, true).map(|(w, _)| w)
}

fn corrector(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    trace_load: &[f64],
    checked: bool,
) -> Result<(Field, f64)> {
    let line = grid0
        .layout()
        .gamma0_line
        .or_else(|| grid0.x2_line_index(0.0))
        .ok_or(Error::NoTraceLine)?;
    if trace_load.len() != grid0.x1_lines().len() {
        return Err(Error::DimensionMismatch {
            expected: grid0.x1_lines().len(),
            got: trace_load.len(),
        });
    }
    guard_bulk(p);
    let mut rhs = vec![0.0; grid0.unknown_count()];
    for (j1, &load) in trace_load.iter().enumerate() {
        let node = grid0.node(j1, line).ok_or(Error::NoTraceLine)?;
        rhs[node] += load;
    }
    let w2 = p.omega() * p.omega();
    let sys = SparseSystem {
        matrix: assemble_operator(grid0, 1.0, -w2),
        rhs,
    };
    let sol = solve(&sys, checked)?;
    Ok((Field::new(grid0.clone(), sol.values)?, sol.residual))
}

/// Solves for the corrector `w` with boundary data assembled from the weak form.
pub fn solve_corrector_w(v: &TraceProfile, p: &GeometryParams, grid0: &Arc<Grid>) -> Result<Field> {
    solve_corrector_w_with_residual(v, p, grid0).map(|(w, _)| w)
}

/// As [`solve_corrector_w`], also returning the relative residual.
pub fn solve_corrector_w_with_residual(
    v: &TraceProfile,
    p: &GeometryParams,
    grid0: &Arc<Grid>,
) -> Result<(Field, f64)> {
    check_trace_grid(v, grid0)?;
    corrector(grid0, p, &corrector_boundary_load(v, p), true)
}

/// Solves the full limit triple on `grid0`.
pub fn solve_effective(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
) -> Result<EffectiveSolution> {
    solve_effective_with_source(grid0, p, f, None)
}

/// Solves the limit triple when the source also acts in the strip, with
/// `strip_source` its restriction there as a function of `x1`.
pub fn solve_effective_with_source(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
    strip_source: Option<&TraceProfile>,
) -> Result<EffectiveSolution> {
    effective(grid0, p, f, strip_source, true)
}

/// As [`solve_effective_with_source`], keeping solutions whose residual is
/// above the acceptance threshold; `residual` reports it.
pub fn solve_effective_unchecked(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
    strip_source: Option<&TraceProfile>,
) -> Result<EffectiveSolution> {
    effective(grid0, p, f, strip_source, false)
}

fn effective(
    grid0: &Arc<Grid>,
    p: &GeometryParams,
    f: SourceTerm<'_>,
    strip_source: Option<&TraceProfile>,
    checked: bool,
) -> Result<EffectiveSolution> {
    let (u, ru) = trivial_limit(grid0, p, f, checked)?;
    let trace = trace_on_gamma0(&u)?;
    let (v, rv) = resonator_profile(&trace, p, strip_source, checked)?;
    check_trace_grid(&v, grid0)?;
    let load = corrector_boundary_load_with_source(&v, p, strip_source)?;
    let (w, rw) = corrector(grid0, p, &load, checked)?;
    Ok(EffectiveSolution {
        u,
        v,
        w,
        omega: p.omega(),
        residual: ru.max(rv).max(rw),
    })
}

/// `sqrt(alpha/(LV))`.
pub fn resonance_frequency(p: &GeometryParams) -> f64 {
    p.resonator_coefficient().sqrt()
}

/// `v0/u0 = (alpha/(LV)) / (k^2 + alpha/(LV) - omega^2)` for the mode `cos(k x1)`.
pub fn mode_amplitude_ratio(k: f64, p: &GeometryParams) -> Result<f64> {
    let beta = p.resonator_coefficient();
    let denominator = k * k + beta - p.omega() * p.omega();
    if denominator.abs() < 1e-12 * beta {
        return Err(Error::ResonantMode { denominator });
    }
    Ok(beta / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{norm, Reference};
    use crate::geometry::{validate_params, ParamRecord};

    fn params(alpha: f64, l: f64, v: f64, omega: f64) -> GeometryParams {
        validate_params(&ParamRecord {
            alpha,
            channel_length: l,
            strip_height: v,
            omega,
            ..ParamRecord::default()
        })
        .unwrap()
    }

    fn rate(e: &[f64]) -> Vec<f64> {
        e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    }

    #[test]
    fn resonance_frequencies() {
        assert_eq!(resonance_frequency(&params(1.0, 1.0, 1.0, 0.5)), 1.0);
        assert_eq!(resonance_frequency(&params(4.0, 1.0, 1.0, 0.5)), 2.0);
        assert_eq!(resonance_frequency(&params(1.0, 2.0, 0.5, 0.5)), 1.0);
    }

    #[test]
    fn amplitude_ratios() {
        let mut rec = ParamRecord::default();
        rec.omega = 1e-300;
        let p = validate_params(&rec).unwrap();
        assert_eq!(mode_amplitude_ratio(0.0, &p).unwrap(), 1.0);
        let p = params(1.0, 1.0, 1.0, 0.5f64.sqrt());
        assert!((mode_amplitude_ratio(0.0, &p).unwrap() - 2.0).abs() < 1e-12);
        let p = params(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            mode_amplitude_ratio(0.0, &p),
            Err(Error::ResonantMode { .. })
        ));
    }

    #[test]
    fn amplitude_ratio_depends_on_alpha_over_lv_only() {
        let p = params(2.0, 1.0, 1.0, 0.7);
        let q = params(1.0, 0.25, 2.0, 0.7);
        for k in [0.0, PI, 2.0 * PI] {
            assert_eq!(
                mode_amplitude_ratio(k, &p).unwrap(),
                mode_amplitude_ratio(k, &q).unwrap()
            );
        }
    }

    #[test]
    fn trivial_limit_constant_and_zero_sources() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.125).unwrap());
        let c = |_: f64, _: f64| 2.0;
        let u = solve_trivial_limit(&g, &p, SourceTerm::Function(&c)).unwrap();
        assert!(u.values().iter().all(|v| (v + 2.0 / 0.25).abs() < 1e-10));
        let zero = solve_trivial_limit(&g, &p, SourceTerm::Zero).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trivial_limit_cosine_converges_at_second_order() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let f = |x: f64, _: f64| (PI * PI - 0.25) * (PI * x).cos();
        let exact = |x: f64, _: f64| (PI * x).cos();
        let errors: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|n| {
                let g = Arc::new(Grid::rectangle(1.0, 1.0, 1.0 / n).unwrap());
                let u = solve_trivial_limit(&g, &p, SourceTerm::Function(&f)).unwrap();
                norm(&u, Reference::Function(&exact), NormKind::L2).unwrap()
            })
            .collect();
        assert!(rate(&errors).iter().all(|&r| r >= 1.8), "{errors:?}");
    }

    #[test]
    fn traces() {
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap());
        let t = trace_on_gamma0(&Field::interpolate(g.clone(), |_, y| y)).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
        let t = trace_on_gamma0(&Field::interpolate(g.clone(), |x, _| (PI * x).cos())).unwrap();
        for (x, v) in t.points() {
            assert_eq!(v, (PI * x).cos());
        }
        let t = trace_on_gamma0(&Field::interpolate(g, |_, _| 3.0)).unwrap();
        assert_eq!(t.values(), &[3.0; 5]);
    }

    #[test]
    fn foreign_trace_grid_is_rejected() {
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap());
        let u = Field::zeros(g);
        // a profile on foreign nodes cannot drive this grid
        let v = TraceProfile::constant(Interval1DGrid::uniform(1.0, 3).unwrap(), 1.0);
        assert_eq!(
            solve_corrector_w(&v, &params(1.0, 1.0, 1.0, 0.5), u.grid()),
            Err(Error::GridMismatch)
        );
    }

    #[test]
    fn constant_trace_gives_exact_constant_v() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let grid1 = Interval1DGrid::new(vec![0.0, 0.1, 0.15, 0.6, 1.0]).unwrap();
        let v = solve_v(&TraceProfile::constant(grid1, 0.8), &p).unwrap();
        let expected = 0.8 * 1.0 / (1.0 - 0.25);
        assert!(v.values().iter().all(|x| (x - expected).abs() < 1e-13));
    }

    #[test]
    fn cosine_trace_gives_mode_relation() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let k = PI;
        let v0 = mode_amplitude_ratio(k, &p).unwrap();
        let errors: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| {
                let grid1 = Interval1DGrid::uniform(1.0, n).unwrap();
                let u = TraceProfile::interpolate(grid1.clone(), |x| (k * x).cos());
                let v = solve_v(&u, &p).unwrap();
                let exact = |x: f64| v0 * (k * x).cos();
                profile_norm(&grid1, v.values(), Some(&exact), NormKind::L2).unwrap()
            })
            .collect();
        assert!(rate(&errors).iter().all(|&r| r >= 1.8), "{errors:?}");
    }

    #[test]
    fn exact_resonance_is_singular() {
        let p = params(1.0, 1.0, 1.0, 1.0);
        let u = TraceProfile::constant(Interval1DGrid::uniform(1.0, 8).unwrap(), 1.0);
        assert!(matches!(solve_v(&u, &p), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn resonance_growth_constant() {
        let u0 = 0.7;
        let grid1 = Interval1DGrid::uniform(1.0, 10).unwrap();
        for delta in [0.1, 0.01, 0.001] {
            let omega = (1.0f64 - delta).sqrt();
            let p = params(1.0, 1.0, 1.0, omega);
            let v = solve_v(&TraceProfile::constant(grid1.clone(), u0), &p).unwrap();
            let scaled = v.max_abs() * (1.0 - omega * omega).abs();
            assert!((scaled - u0).abs() <= 1e-9 * u0, "{scaled}");
        }
    }

    #[test]
    fn zero_v_gives_zero_corrector() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap());
        let v = TraceProfile::constant(g.trace_grid(), 0.0);
        let w = solve_corrector_w(&v, &p, &g).unwrap();
        assert!(w.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn both_corrector_loads_agree() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.1).unwrap());
        for u in [
            TraceProfile::constant(g.trace_grid(), 1.3),
            TraceProfile::interpolate(g.trace_grid(), |x| (2.0 * x).sin() + x * x),
        ] {
            let v = solve_v(&u, &p).unwrap();
            let weak = corrector_boundary_load(&v, &p);
            let flux = corrector_flux_load(&v, &u, &p).unwrap();
            let scale = weak.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (a, b) in weak.iter().zip(&flux) {
                assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_v_load_is_constant_flux() {
        // for constant v the weak-form load is V omega^2 v0 times the trace mass row sums
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap());
        let v = TraceProfile::constant(g.trace_grid(), 2.0);
        let load = corrector_boundary_load(&v, &p);
        let total: f64 = load.iter().sum();
        assert!((total - 1.0 * 0.25 * 2.0 * 1.0).abs() < 1e-14);
        assert!((load[1] - 0.5 * 0.25).abs() < 1e-14);
    }

    #[test]
    fn strip_source_keeps_constant_fixpoint() {
        let p = params(1.0, 1.0, 1.0, 0.5);
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.125).unwrap());
        let one = |_: f64, _: f64| 1.0;
        let s = TraceProfile::constant(g.trace_grid(), 1.0);
        let sol =
            solve_effective_with_source(&g, &p, SourceTerm::Function(&one), Some(&s)).unwrap();
        assert!(sol.v.values().iter().all(|v| (v + 4.0).abs() < 1e-12));
        assert!(sol.w.max_abs() < 1e-12);
        let load = corrector_boundary_load_with_source(&sol.v, &p, Some(&s)).unwrap();
        let flux = corrector_flux_load(&sol.v, &trace_on_gamma0(&sol.u).unwrap(), &p).unwrap();
        for (a, b) in load.iter().zip(&flux) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Separable reference for `v = v0 cos(k x1)`: the corrector has Neumann
    /// data `V (omega^2 - k^2) v0 cos(k x1)` on the top and zero elsewhere.
    fn separable_w(k: f64, v0: f64, p: &GeometryParams) -> impl Fn(f64, f64) -> (f64, [f64; 2]) {
        let (w2, b, vh) = (p.omega() * p.omega(), p.b(), p.strip_height());
        let flux = vh * (w2 - k * k) * v0;
        let lam_sq = k * k - w2;
        move |x, y| {
            let (cx, sx) = ((k * x).cos(), (k * x).sin());
            let s = y + b;
            if lam_sq > 0.0 {
                let l = lam_sq.sqrt();
                let c = flux / (l * (l * b).sinh());
                (
                    c * cx * (l * s).cosh(),
                    [-c * k * sx * (l * s).cosh(), c * cx * l * (l * s).sinh()],
                )
            } else {
                let m = (-lam_sq).sqrt();
                let c = -flux / (m * (m * b).sin());
                (
                    c * cx * (m * s).cos(),
                    [-c * k * sx * (m * s).cos(), -c * cx * m * (m * s).sin()],
                )
            }
        }
    }

    #[test]
    fn corrector_matches_separable_solution() {
        for (k, omega) in [(PI, 0.5), (0.0, 0.5), (PI, 3.5)] {
            let p = params(1.0, 1.0, 1.0, omega);
            let exact = separable_w(k, 1.0, &p);
            let value = |x: f64, y: f64| exact(x, y).0;
            let mut l2 = Vec::new();
            let mut h1 = Vec::new();
            for n in [8.0, 16.0, 32.0] {
                let g = Arc::new(Grid::rectangle(1.0, 1.0, 1.0 / n).unwrap());
                let v = TraceProfile::interpolate(g.trace_grid(), |x| (k * x).cos());
                let w = solve_corrector_w(&v, &p, &g).unwrap();
                l2.push(norm(&w, Reference::Function(&value), NormKind::L2).unwrap());
                h1.push(
                    norm(
                        &w,
                        Reference::FunctionWithGradient(&exact),
                        NormKind::H1Semi,
                    )
                    .unwrap(),
                );
            }
            assert!(
                rate(&l2).iter().all(|&r| r >= 1.8),
                "k={k} omega={omega} {l2:?}"
            );
            assert!(
                rate(&h1).iter().all(|&r| r >= 0.9),
                "k={k} omega={omega} {h1:?}"
            );
        }
    }
}
