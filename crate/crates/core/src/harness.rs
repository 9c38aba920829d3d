//! Verification studies: manufactured solutions, epsilon sweeps against the
//! limit system, and frequency sweeps across the resonator frequency.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::effective::{
    mode_amplitude_ratio, resonance_frequency, solve_corrector_w_with_residual,
    solve_effective_unchecked, solve_v_with_residual, trace_on_gamma0, TraceProfile, GUARD_MODES,
};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_1d_v, norm, profile_norm, solve_direct, AssemblyOptions, Field, NormKind, Reference,
    SourceTerm, GAUSS_2, GAUSS_2_WEIGHT,
};
use crate::geometry::{build_grid, GeometryParams, Grid, Interval1DGrid, ResolutionPolicy};
use crate::multiscale::{
    channel_diagnostics, extract_corrector, extract_flux, extract_v_eps, period_means,
    solve_epsilon_problem_unchecked, FluxDensity,
};

/// Solves with a relative residual above this are reported as invalid.
pub const RESIDUAL_GATE: f64 = 1e-10;
/// Minimum observed L2 rate in the manufactured check.
pub const L2_RATE_GATE: f64 = 1.8;
/// Minimum observed H1-seminorm rate in the manufactured check.
pub const H1_RATE_GATE: f64 = 0.9;
/// Largest error allowed for the constant-source case of the manufactured check.
pub const CONSTANT_GATE: f64 = 1e-10;

/// Source term families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceSpec {
    /// `cos(m pi x1/a) cos(n pi x2/b)` on the bulk rectangle.
    CosineMode { m: usize, n: usize },
    /// `amplitude * exp(-|x - center|^2 / width^2)` on the bulk rectangle.
    GaussianBump {
        center: [f64; 2],
        width: f64,
        amplitude: f64,
    },
    /// `c` on the whole domain, strip and channels included.
    Constant(f64),
}

impl SourceSpec {
    /// Bump centered in the bulk rectangle with width `b/4`.
    pub fn canonical_bump(p: &GeometryParams) -> Self {
        SourceSpec::GaussianBump {
            center: [0.5 * p.a(), -0.5 * p.b()],
            width: 0.25 * p.b(),
            amplitude: 1.0,
        }
    }

    pub fn eval(&self, p: &GeometryParams, x1: f64, x2: f64) -> f64 {
        match *self {
            SourceSpec::Constant(c) => c,
            _ if x2 > 0.0 => 0.0,
            SourceSpec::CosineMode { m, n } => {
                (m as f64 * PI * x1 / p.a()).cos() * (n as f64 * PI * x2 / p.b()).cos()
            }
            SourceSpec::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let (d1, d2) = (x1 - center[0], x2 - center[1]);
                amplitude * (-(d1 * d1 + d2 * d2) / (width * width)).exp()
            }
        }
    }

    /// Assembly options for the perforated domain.
    pub fn assembly_options(&self) -> AssemblyOptions {
        AssemblyOptions {
            f_support_omega0: !matches!(self, SourceSpec::Constant(_)),
        }
    }

    /// Restriction to the strip, for sources that reach it.
    pub fn strip_profile(&self, grid1: &Interval1DGrid) -> Option<TraceProfile> {
        match *self {
            SourceSpec::Constant(c) => Some(TraceProfile::constant(grid1.clone(), c)),
            _ => None,
        }
    }
}

/// How the frequency sweep is driven.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepForcing {
    /// `v` driven by a constant trace `u = u0` (the `k = 0` mode).
    ConstantTrace(f64),
    /// The configured source.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Limit system only.
    Effective,
    /// Perforated-domain solve at the template's `eps`.
    SingleEps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub mode: SweepMode,
    pub forcing: SweepForcing,
    /// Cells of the interval grid for constant-trace sweeps.
    pub trace_cells: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            mode: SweepMode::Effective,
            forcing: SweepForcing::ConstantTrace(1.0),
            trace_cells: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Write `v`, `v_eps` and `j_eps` profiles for every row.
    pub profiles: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            dir: PathBuf::from("out"),
            profiles: false,
        }
    }
}

/// Everything a study needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub params: GeometryParams,
    pub eps_list: Vec<f64>,
    pub omega_list: Vec<f64>,
    pub source: SourceSpec,
    pub resolution: ResolutionPolicy,
    /// Mesh sizes of the manufactured check.
    pub check_levels: Vec<f64>,
    pub sweep: SweepSettings,
    pub output: OutputSettings,
}

/// `n` equispaced samples on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl StudyConfig {
    /// Defaults around a parameter set: `eps, eps/2, eps/4`, the canonical
    /// bump, and 41 frequencies on `[0.7, 1.3]` times the resonator frequency.
    pub fn with_defaults(params: GeometryParams) -> Self {
        let e = params.eps();
        let wh = resonance_frequency(&params);
        StudyConfig {
            eps_list: vec![e, e / 2.0, e / 4.0],
            omega_list: linspace(0.7 * wh, 1.3 * wh, 41),
            source: SourceSpec::canonical_bump(&params),
            resolution: ResolutionPolicy::default(),
            check_levels: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            sweep: SweepSettings::default(),
            output: OutputSettings::default(),
            params,
        }
    }

    /// Checks list invariants and that every `eps` divides `a`.
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::InvalidStudy("eps_list is empty".into()));
        }
        if self.omega_list.is_empty() {
            return Err(Error::InvalidStudy("omega_list is empty".into()));
        }
        for &e in &self.eps_list {
            self.params.with_eps(e)?;
        }
        for &w in &self.omega_list {
            self.params.with_omega(w)?;
        }
        if self.check_levels.len() < 2 || self.check_levels.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidStudy(
                "check.levels needs at least two positive mesh sizes".into(),
            ));
        }
        if let SourceSpec::GaussianBump { width, .. } = self.source {
            if !(width > 0.0) {
                return Err(Error::NonPositiveParameter {
                    name: "source.width",
                    value: width,
                });
            }
        }
        if self.sweep.trace_cells == 0 {
            return Err(Error::InvalidStudy(
                "sweep.trace_cells must be positive".into(),
            ));
        }
        self.resolution.validate()
    }
}

/// Observed order between consecutive rows: `log(e_i/e_{i+1}) / log(s_i/s_{i+1})`,
/// which is `log2(e_i/e_{i+1})` for halving steps.
pub fn observed_rates(steps: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    let mut out: Vec<Option<f64>> = steps
        .windows(2)
        .zip(errors.windows(2))
        .map(|(s, e)| {
            if !(e[0] > 0.0 && e[1] > 0.0) {
                return None;
            }
            let ratio = s[0] / s[1];
            Some(if ratio == 2.0 {
                (e[0] / e[1]).log2()
            } else {
                (e[0] / e[1]).ln() / ratio.ln()
            })
        })
        .collect();
    out.push(None);
    out.truncate(errors.len());
    out
}

/// Outcome of a row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    /// Residual above [`RESIDUAL_GATE`].
    Invalid,
    Failed(String),
}

impl RowStatus {
    pub fn as_str(&self) -> &str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Invalid => "invalid",
            RowStatus::Failed(_) => "failed",
        }
    }

    fn from_residual(r: f64) -> Self {
        if r <= RESIDUAL_GATE {
            RowStatus::Ok
        } else {
            RowStatus::Invalid
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedRow {
    /// `helmholtz_2d`, `v_1d` or `constant`.
    pub case: &'static str,
    pub h: f64,
    pub e_l2: f64,
    pub e_h1: Option<f64>,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub residual: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedReport {
    pub rows: Vec<ManufacturedRow>,
    /// Gate violations; empty when the check passes.
    pub failures: Vec<String>,
}

impl ManufacturedReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Profiles kept for one sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowProfiles {
    pub v: TraceProfile,
    pub v_eps: TraceProfile,
    pub j_eps: FluxDensity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationRow {
    pub eps: f64,
    pub omega: f64,
    pub e_u_l2: f64,
    pub e_v_l2: f64,
    pub e_w_l1: f64,
    pub r_fr_l1: f64,
    pub r_mc: f64,
    pub rate_u: Option<f64>,
    pub d2_l1: f64,
    pub d1_l1: f64,
    /// Largest relative residual of the row's solves.
    pub residual: f64,
    /// Componentwise backward error of the perforated-domain solve.
    pub backward_error: f64,
    /// Largest relative mismatch of the two flux computations.
    pub flux_mismatch: f64,
    pub unknowns: usize,
    pub wall_ms: f64,
    pub status: RowStatus,
    pub profiles: Option<RowProfiles>,
}

impl HomogenizationRow {
    fn failed(eps: f64, omega: f64, why: String, wall_ms: f64) -> Self {
        HomogenizationRow {
            eps,
            omega,
            e_u_l2: f64::NAN,
            e_v_l2: f64::NAN,
            e_w_l1: f64::NAN,
            r_fr_l1: f64::NAN,
            r_mc: f64::NAN,
            rate_u: None,
            d2_l1: f64::NAN,
            d1_l1: f64::NAN,
            residual: f64::NAN,
            backward_error: f64::NAN,
            flux_mismatch: f64::NAN,
            unknowns: 0,
            wall_ms,
            status: RowStatus::Failed(why),
            profiles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationReport {
    pub gate: ManufacturedReport,
    pub rows: Vec<HomogenizationRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceRow {
    pub omega: f64,
    pub v_l2: f64,
    pub w_l1: f64,
    pub residual: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub rows: Vec<ResonanceRow>,
    /// Vertex of the parabola through the three largest amplitudes.
    pub peak: Option<f64>,
    /// `sqrt(k^2 + alpha/(LV))` for the dominant mode `k`.
    pub predicted: f64,
    pub dominant_k: f64,
    /// Slope of `log ||v||` against `log |omega^2 - omega_H^2|`.
    pub growth_exponent: Option<f64>,
    /// Largest gap between neighbouring frequencies.
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyReport {
    Manufactured(ManufacturedReport),
    Homogenization(HomogenizationReport),
    Resonance(ResonanceReport),
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Convergence of the 2D and 1D solvers against exact solutions.
pub fn manufactured_check(cfg: &StudyConfig) -> Result<ManufacturedReport> {
    let (m, n) = match cfg.source {
        SourceSpec::CosineMode { m, n } => (m, n),
        _ => {
            return Err(Error::InvalidStudy(
                "the manufactured check needs a cosine_mode source".into(),
            ))
        }
    };
    let p = &cfg.params;
    let (a, b, omega) = (p.a(), p.b(), p.omega());
    let (km, kn) = (m as f64 * PI / a, n as f64 * PI / b);
    let lambda = km * km + kn * kn - omega * omega;
    let exact = move |x: f64, y: f64| {
        (
            (km * x).cos() * (kn * y).cos(),
            [
                -km * (km * x).sin() * (kn * y).cos(),
                -kn * (km * x).cos() * (kn * y).sin(),
            ],
        )
    };
    let value = move |x: f64, y: f64| exact(x, y).0;
    let source = move |x: f64, y: f64| lambda * value(x, y);
    let levels = &cfg.check_levels;

    let mut rows = Vec::new();
    let mut failures = Vec::new();

    // 2D Helmholtz on the bulk rectangle
    let mut l2 = Vec::new();
    let mut h1 = Vec::new();
    let mut twod = Vec::new();
    for &h in levels {
        let t = Instant::now();
        let grid = Grid::rectangle(a, b, h)?;
        let sys = crate::fem::assemble_helmholtz_2d(
            &grid,
            omega,
            SourceTerm::Function(&source),
            AssemblyOptions::default(),
        );
        let sol = solve_direct(&sys)?;
        let u = Field::new(Arc::new(grid), sol.values)?;
        l2.push(norm(&u, Reference::Function(&value), NormKind::L2)?);
        h1.push(norm(
            &u,
            Reference::FunctionWithGradient(&exact),
            NormKind::H1Semi,
        )?);
        twod.push((h, sol.residual, elapsed_ms(t)));
    }
    let r2 = observed_rates(levels, &l2);
    let rh = observed_rates(levels, &h1);
    for (i, &(h, residual, wall_ms)) in twod.iter().enumerate() {
        rows.push(ManufacturedRow {
            case: "helmholtz_2d",
            h,
            e_l2: l2[i],
            e_h1: Some(h1[i]),
            rate_l2: r2[i],
            rate_h1: rh[i],
            residual,
            wall_ms,
        });
        if let Some(r) = r2[i].filter(|r| !(*r >= L2_RATE_GATE)) {
            failures.push(format!("2D L2 rate {r} below {L2_RATE_GATE} at h = {h}"));
        }
        if let Some(r) = rh[i].filter(|r| !(*r >= H1_RATE_GATE)) {
            failures.push(format!("2D H1 rate {r} below {H1_RATE_GATE} at h = {h}"));
        }
    }

    // 1D resonator operator: -v'' + v = (1 + k^2) cos(k x1)
    let mut e1 = Vec::new();
    let mut oned = Vec::new();
    for &h in levels {
        let t = Instant::now();
        let cells = ((a / h) - 1e-9).ceil().max(1.0) as usize;
        let grid1 = Interval1DGrid::uniform(a, cells)?;
        let g: Vec<f64> = grid1
            .nodes()
            .iter()
            .map(|&x| (1.0 + km * km) * (km * x).cos())
            .collect();
        let sol = solve_direct(&assemble_1d_v(&grid1, 1.0, &g))?;
        let reference = |x: f64| (km * x).cos();
        e1.push(profile_norm(
            &grid1,
            &sol.values,
            Some(&reference),
            NormKind::L2,
        )?);
        oned.push((h, sol.residual, elapsed_ms(t)));
    }
    let r1 = observed_rates(levels, &e1);
    for (i, &(h, residual, wall_ms)) in oned.iter().enumerate() {
        rows.push(ManufacturedRow {
            case: "v_1d",
            h,
            e_l2: e1[i],
            e_h1: None,
            rate_l2: r1[i],
            rate_h1: None,
            residual,
            wall_ms,
        });
        if let Some(r) = r1[i].filter(|r| !(*r >= L2_RATE_GATE)) {
            failures.push(format!("1D L2 rate {r} below {L2_RATE_GATE} at h = {h}"));
        }
    }

    // constants are reproduced exactly
    let one = |_: f64, _: f64| 1.0;
    for &h in levels {
        let t = Instant::now();
        let grid = Grid::rectangle(a, b, h)?;
        let sys = crate::fem::assemble_helmholtz_2d(
            &grid,
            omega,
            SourceTerm::Function(&one),
            AssemblyOptions::default(),
        );
        let sol = solve_direct(&sys)?;
        let target = -1.0 / (omega * omega);
        let err = sol
            .values
            .iter()
            .fold(0.0f64, |e, v| e.max((v - target).abs()));
        rows.push(ManufacturedRow {
            case: "constant",
            h,
            e_l2: err,
            e_h1: None,
            rate_l2: None,
            rate_h1: None,
            residual: sol.residual,
            wall_ms: elapsed_ms(t),
        });
        if !(err <= CONSTANT_GATE) {
            failures.push(format!(
                "constant source error {err} above {CONSTANT_GATE} at h = {h}"
            ));
        }
    }
    for row in &rows {
        if !(row.residual <= RESIDUAL_GATE) {
            failures.push(format!(
                "{} residual {} above {RESIDUAL_GATE}",
                row.case, row.residual
            ));
        }
    }
    Ok(ManufacturedReport { rows, failures })
}

/// The manufactured check used as the gate in front of the epsilon sweep.
pub fn gate_config(cfg: &StudyConfig) -> StudyConfig {
    StudyConfig {
        source: SourceSpec::CosineMode { m: 1, n: 1 },
        ..cfg.clone()
    }
}

/// Weak-form mass balance tested against `psi`:
/// `int j psi + V int v' psi' - V omega^2 int v psi - V int s psi`.
fn mass_balance(
    j: &FluxDensity,
    v_eps: &TraceProfile,
    strip: Option<&TraceProfile>,
    p: &GeometryParams,
    psi: &dyn Fn(f64) -> (f64, f64),
) -> f64 {
    let nodes = v_eps.grid().nodes();
    let vals = v_eps.values();
    let w2 = p.omega() * p.omega();
    let mut stiff = 0.0;
    let mut mass = 0.0;
    let mut src = 0.0;
    for e in 0..nodes.len() - 1 {
        let h = nodes[e + 1] - nodes[e];
        let dv = (vals[e + 1] - vals[e]) / h;
        for &t in &GAUSS_2 {
            let (ps, dps) = psi(nodes[e] + t * h);
            let w = GAUSS_2_WEIGHT * h;
            stiff += w * dv * dps;
            mass += w * (vals[e] + t * (vals[e + 1] - vals[e])) * ps;
            if let Some(s) = strip {
                let sv = s.values();
                src += w * (sv[e] + t * (sv[e + 1] - sv[e])) * ps;
            }
        }
    }
    let flux = j.integrate_against(|x| psi(x).0, 64);
    let vh = p.strip_height();
    flux + vh * stiff - vh * w2 * mass - vh * src
}

/// Test functions of the mass-conservation residual: `1` and `cos(m pi x1/a)`, `m <= 4`.
pub fn mass_test_functions(a: f64) -> Vec<Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>> {
    let mut out: Vec<Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>> = vec![Box::new(|_| (1.0, 0.0))];
    for m in 1..=4 {
        let k = m as f64 * PI / a;
        out.push(Box::new(move |x| ((k * x).cos(), -k * (k * x).sin())));
    }
    out
}

fn homogenization_row(cfg: &StudyConfig, eps: f64) -> Result<HomogenizationRow> {
    let t = Instant::now();
    let p = cfg.params.with_eps(eps)?;
    let grid = Arc::new(build_grid(&p, &cfg.resolution)?);
    let grid0 = Arc::new(grid.limit_part()?);
    let source = cfg.source;
    let f = move |x: f64, y: f64| source.eval(&p, x, y);
    let strip = source.strip_profile(&grid0.trace_grid());

    let solved = solve_epsilon_problem_unchecked(
        &grid,
        &p,
        SourceTerm::Function(&f),
        source.assembly_options(),
    )?;
    let (u_eps, r_eps) = (solved.u, solved.residual);
    let eff = solve_effective_unchecked(&grid0, &p, SourceTerm::Function(&f), strip.as_ref())?;

    let e_u_l2 = norm(
        &u_eps.restrict_to(&grid0)?,
        Reference::Field(&eff.u),
        NormKind::L2,
    )?;
    let v_eps = extract_v_eps(&u_eps, &p)?;
    let e_v_l2 = v_eps.distance(&eff.v, NormKind::L2)?;
    let w_eps = extract_corrector(&u_eps, &eff.u, &p)?;
    let e_w_l1 = norm(&w_eps, Reference::Field(&eff.w), NormKind::L1)?;

    let j = extract_flux(&u_eps, &p)?;
    let diag = channel_diagnostics(&u_eps, &p, &[0..p.period_count()])?;
    let v_means = period_means(&v_eps, j.edges())?;
    let rule = p.alpha() / p.channel_length();
    let predicted: Vec<f64> = v_means
        .iter()
        .zip(&diag.bottom_avgs)
        .map(|(v, u)| rule * (v - u))
        .collect();
    let r_fr_l1 = j.l1_distance(&predicted)?;
    let r_mc = mass_test_functions(p.a())
        .iter()
        .map(|psi| mass_balance(&j, &v_eps, strip.as_ref(), &p, psi.as_ref()).abs())
        .fold(0.0, f64::max);

    let residual = r_eps.max(eff.residual);
    let profiles = cfg.output.profiles.then(|| RowProfiles {
        v: eff.v.clone(),
        v_eps: v_eps.clone(),
        j_eps: j.clone(),
    });
    Ok(HomogenizationRow {
        eps,
        omega: p.omega(),
        e_u_l2,
        e_v_l2,
        e_w_l1,
        r_fr_l1,
        r_mc,
        rate_u: None,
        d2_l1: diag.d2_l1_scaled,
        d1_l1: diag.d1_l1_scaled,
        residual,
        backward_error: solved.backward_error,
        flux_mismatch: diag.max_window_mismatch(),
        unknowns: grid.unknown_count(),
        wall_ms: elapsed_ms(t),
        status: RowStatus::from_residual(residual),
        profiles,
    })
}

/// Runs the epsilon sweep. The manufactured check runs first and must pass.
///
/// Rows are independent and run on the current rayon pool; the report keeps
/// the order of `eps_list`.
pub fn run_homogenization_study(cfg: &StudyConfig) -> Result<HomogenizationReport> {
    cfg.validate()?;
    let gate = manufactured_check(&gate_config(cfg))?;
    if !gate.passed() {
        return Err(Error::GateFailed(gate.failures.join("; ")));
    }
    let mut rows: Vec<HomogenizationRow> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| {
            let t = Instant::now();
            match homogenization_row(cfg, eps) {
                Ok(row) => Ok(row),
                Err(e) if e.is_solver_failure() => {
                    warn!("eps = {eps}: {e}");
                    Ok(HomogenizationRow::failed(
                        eps,
                        cfg.params.omega(),
                        e.to_string(),
                        elapsed_ms(t),
                    ))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let steps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.e_u_l2).collect();
    for (row, rate) in rows.iter_mut().zip(observed_rates(&steps, &errors)) {
        row.rate_u = rate.filter(|r| r.is_finite());
    }
    for row in &rows {
        info!(
            "eps = {}: E_u = {:e}, E_v = {:e}, E_w = {:e}, R_fr = {:e}, R_mc = {:e}, {} unknowns",
            row.eps, row.e_u_l2, row.e_v_l2, row.e_w_l1, row.r_fr_l1, row.r_mc, row.unknowns
        );
    }
    Ok(HomogenizationReport { gate, rows })
}

/// Vertex of the parabola through three points, if it opens downwards.
pub fn parabola_vertex(pts: [(f64, f64); 3]) -> Option<f64> {
    let [(x0, y0), (x1, y1), (x2, y2)] = pts;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let c = (d12 - d01) / (x2 - x0);
    if !(c < 0.0) {
        return None;
    }
    // p(x) = y0 + d01 (x - x0) + c (x - x0)(x - x1)
    Some(0.5 * (x0 + x1) - d01 / (2.0 * c))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Wavenumber `m pi/a` of the cosine mode with the largest coefficient in `trace`.
fn dominant_wavenumber(trace: &TraceProfile, a: f64) -> f64 {
    let nodes = trace.grid().nodes();
    let vals = trace.values();
    let coefficient = |k: f64| {
        let mut acc = 0.0;
        for e in 0..nodes.len() - 1 {
            let h = nodes[e + 1] - nodes[e];
            for &t in &GAUSS_2 {
                let x = nodes[e] + t * h;
                acc += GAUSS_2_WEIGHT * h * (vals[e] + t * (vals[e + 1] - vals[e])) * (k * x).cos();
            }
        }
        // normalize by the squared norm of the mode
        acc / if k == 0.0 { a } else { 0.5 * a }
    };
    (0..=GUARD_MODES)
        .map(|m| m as f64 * PI / a)
        .max_by(|&x, &y| coefficient(x).abs().total_cmp(&coefficient(y).abs()))
        .unwrap_or(0.0)
}

fn resonance_row(
    cfg: &StudyConfig,
    omega: f64,
    grid0: &Arc<Grid>,
) -> Result<(ResonanceRow, Option<TraceProfile>)> {
    let p = cfg.params.with_omega(omega)?;
    let source = cfg.source;
    let f = move |x: f64, y: f64| source.eval(&p, x, y);
    match (cfg.sweep.mode, cfg.sweep.forcing) {
        (SweepMode::Effective, SweepForcing::ConstantTrace(u0)) => {
            // the k = 0 mode is singular exactly at the resonator frequency
            mode_amplitude_ratio(0.0, &p)?;
            let grid1 = Interval1DGrid::uniform(p.a(), cfg.sweep.trace_cells)?;
            let (v, rv) = solve_v_with_residual(&TraceProfile::constant(grid1, u0), &p, None)?;
            let gw = Interval1DGrid::new(grid0.x1_lines().to_vec())?;
            let vw = TraceProfile::constant(gw, v.values()[0]);
            let (w, rw) = solve_corrector_w_with_residual(&vw, &p, grid0)?;
            let residual = rv.max(rw);
            let row = ResonanceRow {
                omega,
                v_l2: v.norm(NormKind::L2)?,
                w_l1: norm(&w, Reference::Zero, NormKind::L1)?,
                residual,
                status: RowStatus::from_residual(residual),
            };
            Ok((row, None))
        }
        (SweepMode::Effective, SweepForcing::Source) => {
            let strip = source.strip_profile(&grid0.trace_grid());
            let eff =
                solve_effective_unchecked(grid0, &p, SourceTerm::Function(&f), strip.as_ref())?;
            let trace = trace_on_gamma0(&eff.u)?;
            let row = ResonanceRow {
                omega,
                v_l2: eff.v.norm(NormKind::L2)?,
                w_l1: norm(&eff.w, Reference::Zero, NormKind::L1)?,
                residual: eff.residual,
                status: RowStatus::from_residual(eff.residual),
            };
            Ok((row, Some(trace)))
        }
        (SweepMode::SingleEps, forcing) => {
            if let SweepForcing::ConstantTrace(_) = forcing {
                return Err(Error::InvalidStudy(
                    "single-eps sweeps are driven by the configured source".into(),
                ));
            }
            let grid = Arc::new(build_grid(&p, &cfg.resolution)?);
            let g0 = Arc::new(grid.limit_part()?);
            let strip = source.strip_profile(&g0.trace_grid());
            let solved = solve_epsilon_problem_unchecked(
                &grid,
                &p,
                SourceTerm::Function(&f),
                source.assembly_options(),
            )?;
            let (u_eps, r) = (solved.u, solved.residual);
            let eff = solve_effective_unchecked(&g0, &p, SourceTerm::Function(&f), strip.as_ref())?;
            let v_eps = extract_v_eps(&u_eps, &p)?;
            let w_eps = extract_corrector(&u_eps, &eff.u, &p)?;
            let residual = r.max(eff.residual);
            let row = ResonanceRow {
                omega,
                v_l2: v_eps.norm(NormKind::L2)?,
                w_l1: norm(&w_eps, Reference::Zero, NormKind::L1)?,
                residual,
                status: RowStatus::from_residual(residual),
            };
            Ok((row, Some(trace_on_gamma0(&eff.u)?)))
        }
    }
}

/// Frequency sweep of the resonator response.
pub fn run_resonance_sweep(cfg: &StudyConfig) -> Result<ResonanceReport> {
    cfg.validate()?;
    let p = &cfg.params;
    let grid0 = Arc::new(Grid::rectangle(
        p.a(),
        p.b(),
        cfg.resolution.bulk_size(p.eps()),
    )?);
    let results: Vec<(ResonanceRow, Option<TraceProfile>)> = cfg
        .omega_list
        .par_iter()
        .map(|&omega| match resonance_row(cfg, omega, &grid0) {
            Ok(r) => Ok(r),
            Err(e) if e.is_solver_failure() || matches!(e, Error::ResonantMode { .. }) => {
                warn!("omega = {omega}: {e}");
                Ok((
                    ResonanceRow {
                        omega,
                        v_l2: f64::NAN,
                        w_l1: f64::NAN,
                        residual: f64::NAN,
                        status: RowStatus::Failed(e.to_string()),
                    },
                    None,
                ))
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;

    let dominant_k = match cfg.sweep.forcing {
        SweepForcing::ConstantTrace(_) => 0.0,
        SweepForcing::Source => results
            .iter()
            .find_map(|(_, t)| t.as_ref())
            .map_or(0.0, |t| dominant_wavenumber(t, p.a())),
    };
    let rows: Vec<ResonanceRow> = results.into_iter().map(|(r, _)| r).collect();
    let beta = p.resonator_coefficient();
    let predicted = (dominant_k * dominant_k + beta).sqrt();

    let mut valid: Vec<&ResonanceRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
    valid.sort_by(|x, y| y.v_l2.total_cmp(&x.v_l2));
    let peak = (valid.len() >= 3)
        .then(|| {
            let mut top = [
                (valid[0].omega, valid[0].v_l2),
                (valid[1].omega, valid[1].v_l2),
                (valid[2].omega, valid[2].v_l2),
            ];
            top.sort_by(|x, y| x.0.total_cmp(&y.0));
            parabola_vertex(top)
        })
        .flatten();
    let target = predicted * predicted;
    let growth: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.status == RowStatus::Ok)
        .map(|r| ((r.omega * r.omega - target).abs(), r.v_l2))
        .collect();
    let mut omegas: Vec<f64> = cfg.omega_list.clone();
    omegas.sort_by(f64::total_cmp);
    let spacing = omegas.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(ResonanceReport {
        rows,
        peak,
        predicted,
        dominant_k,
        growth_exponent: loglog_slope(&growth),
        spacing,
    })
}

/// Largest allowed mismatch of the two flux forms, relative to `max(1, |B|)`.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub eps: f64,
    pub samples: usize,
    pub windows: usize,
    pub max_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.max_mismatch <= IDENTITY_TOLERANCE)
    }
}

/// Compares the volume and boundary forms of the channel flux on random
/// nodal fields: `samples` fields per grid of `eps_list`, each checked on
/// every single channel, on all channels and on one random window.
pub fn integration_by_parts_check(
    cfg: &StudyConfig,
    seed: u64,
    samples: usize,
) -> Result<IdentityReport> {
    use rand::{Rng, SeedableRng};
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.eps_list.len());
    for (g, &eps) in cfg.eps_list.iter().enumerate() {
        let p = cfg.params.with_eps(eps)?;
        let grid = Arc::new(build_grid(&p, &cfg.resolution)?);
        let n = p.period_count();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(g as u64));
        let mut max_mismatch = 0.0f64;
        let mut windows = 0;
        for _ in 0..samples {
            let values: Vec<f64> = (0..grid.unknown_count())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let u = Field::new(grid.clone(), values)?;
            let start = rng.gen_range(0..n);
            let end = rng.gen_range(start..=n);
            let mut ws: Vec<std::ops::Range<usize>> = (0..n).map(|k| k..k + 1).collect();
            ws.push(0..n);
            ws.push(start..end);
            let diag = channel_diagnostics(&u, &p, &ws)?;
            windows += ws.len();
            max_mismatch = max_mismatch.max(diag.max_window_mismatch());
        }
        rows.push(IdentityRow {
            eps,
            samples,
            windows,
            max_mismatch,
        });
    }
    Ok(IdentityReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{validate_params, ParamRecord};

    fn canonical() -> StudyConfig {
        StudyConfig::with_defaults(validate_params(&ParamRecord::default()).unwrap())
    }

    #[test]
    fn defaults() {
        let cfg = canonical();
        assert_eq!(cfg.eps_list, vec![0.25, 0.125, 0.0625]);
        assert_eq!(cfg.omega_list.len(), 41);
        assert_eq!(cfg.omega_list[0], 0.7);
        assert_eq!(cfg.omega_list[40], 1.3);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_eps_is_rejected() {
        let mut cfg = canonical();
        cfg.eps_list = vec![0.3];
        assert!(matches!(
            cfg.validate(),
            Err(Error::NonIntegerPeriodCount { .. })
        ));
    }

    #[test]
    fn rates() {
        let r = observed_rates(&[0.25, 0.125, 0.0625], &[4.0, 1.0, 0.25]);
        assert_eq!(r, vec![Some(2.0), Some(2.0), None]);
        let r = observed_rates(&[0.3, 0.1], &[9.0, 1.0]);
        assert!((r[0].unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(observed_rates(&[], &[]), Vec::<Option<f64>>::new());
    }

    #[test]
    fn parabola() {
        let f = |x: f64| 3.0 - 2.0 * (x - 0.4) * (x - 0.4);
        let v = parabola_vertex([(0.1, f(0.1)), (0.3, f(0.3)), (0.9, f(0.9))]).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
        assert_eq!(parabola_vertex([(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]), None);
    }

    #[test]
    fn slope() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.5].iter().map(|&x| (x, 3.0 / x)).collect();
        assert!((loglog_slope(&pts).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn manufactured_passes() {
        let mut cfg = canonical();
        cfg.source = SourceSpec::CosineMode { m: 1, n: 1 };
        let report = manufactured_check(&cfg).unwrap();
        assert!(report.passed(), "{:?}", report.failures);
        assert_eq!(report.rows.len(), 9);
    }

    #[test]
    fn manufactured_needs_cosine_source() {
        assert!(matches!(
            manufactured_check(&canonical()),
            Err(Error::InvalidStudy(_))
        ));
    }

    #[test]
    fn constant_source_study_is_exact() {
        let mut cfg = canonical();
        cfg.source = SourceSpec::Constant(1.0);
        cfg.eps_list = vec![0.25, 0.125];
        let report = run_homogenization_study(&cfg).unwrap();
        for row in &report.rows {
            assert_eq!(row.status, RowStatus::Ok);
            for e in [
                row.e_u_l2,
                row.e_v_l2,
                row.e_w_l1,
                row.r_fr_l1,
                row.r_mc,
                row.d1_l1,
                row.d2_l1,
            ] {
                assert!(e.abs() < 1e-9, "{row:?}");
            }
        }
    }

    #[test]
    fn resonance_peak_near_one() {
        let cfg = canonical();
        let report = run_resonance_sweep(&cfg).unwrap();
        let failed = report
            .rows
            .iter()
            .filter(|r| r.status != RowStatus::Ok)
            .count();
        assert_eq!(failed, 1);
        let peak = report.peak.unwrap();
        assert!((peak - 1.0).abs() <= report.spacing, "{peak}");
        assert!((report.growth_exponent.unwrap() + 1.0).abs() < 0.1);
    }

    #[test]
    fn identity_holds_on_random_fields() {
        let report = integration_by_parts_check(&canonical(), 7, 5).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[0].windows, 5 * 6);
    }

    #[test]
    fn bump_is_centered() {
        let p = validate_params(&ParamRecord::default()).unwrap();
        let s = SourceSpec::canonical_bump(&p);
        assert_eq!(s.eval(&p, 0.5, -0.5), 1.0);
        assert_eq!(s.eval(&p, 0.5, 0.1), 0.0);
        assert!((s.eval(&p, 0.75, -0.5) - (-1.0f64).exp()).abs() < 1e-15);
    }
}
