//! Problem parameters and conforming rectilinear discretizations of the
//! perforated-wall domain and of its limit rectangle.
//!
//! The full domain is the union of three pieces:
//!
//! * the bulk rectangle `(0, a) x (-b, 0)`,
//! * `a/eps` thin channels `(k eps, k eps + alpha eps^3) x [0, L eps]`,
//! * the resonator strip `(0, a) x (L eps, (L + V) eps)`.
//!
//! All walls are axis aligned, so a tensor-product grid whose lines contain
//! every wall coordinate resolves the domain exactly. Cells outside the
//! domain are masked.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Unvalidated parameter record, as read from a configuration file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRecord {
    pub a: f64,
    pub b: f64,
    /// Relative channel length `L`.
    pub channel_length: f64,
    /// Relative strip thickness `V`.
    pub strip_height: f64,
    /// Relative channel width `alpha`.
    pub alpha: f64,
    pub eps: f64,
    pub omega: f64,
}

impl Default for ParamRecord {
    fn default() -> Self {
        ParamRecord {
            a: 1.0,
            b: 1.0,
            channel_length: 1.0,
            strip_height: 1.0,
            alpha: 1.0,
            eps: 0.25,
            omega: 0.5,
        }
    }
}

/// Validated geometric constants together with the period `eps` and the
/// angular frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams {
    raw: ParamRecord,
    periods: usize,
}

/// Relative tolerance on `a/eps` being an integer.
const PERIOD_COUNT_TOL: f64 = 1e-9;

/// Checks every parameter invariant and returns the validated parameters.
pub fn validate_params(raw: &ParamRecord) -> Result<GeometryParams> {
    let named = [
        ("a", raw.a),
        ("b", raw.b),
        ("L", raw.channel_length),
        ("V", raw.strip_height),
        ("alpha", raw.alpha),
        ("eps", raw.eps),
        ("omega", raw.omega),
    ];
    for (name, value) in named {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }

    let ratio = raw.a / raw.eps;
    let periods = ratio.round();
    if periods < 1.0 || (ratio - periods).abs() > PERIOD_COUNT_TOL * ratio {
        return Err(Error::NonIntegerPeriodCount {
            a: raw.a,
            eps: raw.eps,
            ratio,
        });
    }

    let params = GeometryParams {
        raw: *raw,
        periods: periods as usize,
    };
    if params.channel_width() >= raw.eps {
        return Err(Error::ChannelTooWide {
            width: params.channel_width(),
            eps: raw.eps,
        });
    }
    if params.channel_top() >= params.strip_top() {
        return Err(Error::StripBelowChannel {
            channel_top: params.channel_top(),
            strip_top: params.strip_top(),
        });
    }
    Ok(params)
}

impl GeometryParams {
    pub fn new(raw: &ParamRecord) -> Result<Self> {
        validate_params(raw)
    }

    pub fn record(&self) -> ParamRecord {
        self.raw
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        validate_params(&ParamRecord { eps, ..self.raw })
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        validate_params(&ParamRecord { omega, ..self.raw })
    }

    pub fn a(&self) -> f64 {
        self.raw.a
    }

    pub fn b(&self) -> f64 {
        self.raw.b
    }

    pub fn channel_length(&self) -> f64 {
        self.raw.channel_length
    }

    pub fn strip_height(&self) -> f64 {
        self.raw.strip_height
    }

    pub fn alpha(&self) -> f64 {
        self.raw.alpha
    }

    pub fn eps(&self) -> f64 {
        self.raw.eps
    }

    pub fn omega(&self) -> f64 {
        self.raw.omega
    }

    /// Number of channels, `a/eps`.
    pub fn period_count(&self) -> usize {
        self.periods
    }

    /// Absolute channel width `alpha eps^3`.
    pub fn channel_width(&self) -> f64 {
        let eps = self.raw.eps;
        self.raw.alpha * eps * eps * eps
    }

    /// Height of the channel tops, `L eps`.
    pub fn channel_top(&self) -> f64 {
        self.raw.channel_length * self.raw.eps
    }

    /// Height of the upper wall, `(L + V) eps`.
    pub fn strip_top(&self) -> f64 {
        (self.raw.channel_length + self.raw.strip_height) * self.raw.eps
    }

    /// `alpha / (L V)`, the squared resonator frequency.
    pub fn resonator_coefficient(&self) -> f64 {
        self.raw.alpha / (self.raw.channel_length * self.raw.strip_height)
    }

    /// Left and right wall of channel `k`. Every consumer of wall positions
    /// goes through this one formula, so walls are bit-identical everywhere.
    pub fn channel_walls(&self, k: usize) -> (f64, f64) {
        let left = k as f64 * self.raw.eps;
        (left, left + self.channel_width())
    }

    /// `|Omega_0| + a V eps + (a/eps) alpha eps^3 L eps`.
    pub fn domain_area(&self) -> f64 {
        let bulk = self.raw.a * self.raw.b;
        let strip = self.raw.a * (self.strip_top() - self.channel_top());
        let channels = self.periods as f64 * self.channel_width() * self.channel_top();
        bulk + strip + channels
    }
}

/// Subdomain membership of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Omega0,
    Channel,
    Strip,
    Outside,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Omega0 => "Omega0",
            Region::Channel => "Channel",
            Region::Strip => "Strip",
            Region::Outside => "Outside",
        }
    }

    pub fn is_active(self) -> bool {
        self != Region::Outside
    }
}

/// Classifies a point by the set definitions of the bulk, the channels and
/// the strip. Points on shared boundaries go to the first closure that
/// contains them, in the order bulk, channel, strip.
pub fn classify_point(p: &GeometryParams, x: [f64; 2]) -> Region {
    let [x1, x2] = x;
    let a = p.a();
    if !(0.0..=a).contains(&x1) {
        return Region::Outside;
    }
    if (-p.b()..=0.0).contains(&x2) {
        return Region::Omega0;
    }
    if (0.0..=p.channel_top()).contains(&x2) {
        let guess = (x1 / p.eps()).floor() as i64;
        let n = p.period_count() as i64;
        for k in (guess - 1)..=(guess + 1) {
            if k < 0 || k >= n {
                continue;
            }
            let (left, right) = p.channel_walls(k as usize);
            if (left..=right).contains(&x1) {
                return Region::Channel;
            }
        }
    }
    if (p.channel_top()..=p.strip_top()).contains(&x2) {
        return Region::Strip;
    }
    Region::Outside
}

/// Target cell counts and sizes used to build a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionPolicy {
    /// Cells across each channel (at least 2).
    pub channel_cells: usize,
    /// Cells along each channel (at least 4).
    pub channel_layers: usize,
    /// Cells across the resonator strip.
    pub strip_layers: usize,
    /// Absolute bulk cell size cap; `None` leaves only the `eps` rule.
    pub bulk_h: Option<f64>,
    /// Bulk cells are at most `eps / h_per_eps` wide.
    pub h_per_eps: f64,
    /// Growth factor between neighbouring cells away from a channel mouth.
    pub grading: f64,
    pub max_unknowns: usize,
}

pub const DEFAULT_MAX_UNKNOWNS: usize = 2_000_000;
const MAX_GRADING: f64 = 2.5;

impl Default for ResolutionPolicy {
    fn default() -> Self {
        ResolutionPolicy {
            channel_cells: 2,
            channel_layers: 4,
            strip_layers: 4,
            bulk_h: None,
            h_per_eps: 8.0,
            grading: 2.0,
            max_unknowns: DEFAULT_MAX_UNKNOWNS,
        }
    }
}

impl ResolutionPolicy {
    pub fn validate(&self) -> Result<()> {
        let floors = [
            ("channel_cells", self.channel_cells as f64, 2.0),
            ("channel_layers", self.channel_layers as f64, 4.0),
            ("strip_layers", self.strip_layers as f64, 1.0),
        ];
        for (what, got, min) in floors {
            if got < min {
                return Err(Error::ResolutionTooCoarse { what, got, min });
            }
        }
        if !(self.h_per_eps.is_finite() && self.h_per_eps >= 1.0) {
            return Err(Error::ResolutionTooCoarse {
                what: "h_per_eps",
                got: self.h_per_eps,
                min: 1.0,
            });
        }
        if !(self.grading > 1.0 && self.grading <= MAX_GRADING) {
            return Err(Error::ResolutionTooCoarse {
                what: "grading (must lie in (1, 2.5])",
                got: self.grading,
                min: 1.0,
            });
        }
        if let Some(h) = self.bulk_h {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::NonPositiveParameter {
                    name: "bulk_h",
                    value: h,
                });
            }
        }
        Ok(())
    }

    /// Bulk cell size for period `eps`.
    pub fn bulk_size(&self, eps: f64) -> f64 {
        let by_eps = eps / self.h_per_eps;
        self.bulk_h.map_or(by_eps, |h| h.min(by_eps))
    }
}

/// Which domain a grid discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// The perforated domain: bulk, channels and strip.
    Perforated,
    /// The bulk rectangle, carrying the perforated grid's lines.
    LimitConforming,
    /// A plain uniform grid on the bulk rectangle.
    LimitPlain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetTag {
    Gamma0,
    GammaEps,
    OuterWall,
    ChannelWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// A cell side on the boundary of the active domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub cell: (usize, usize),
    pub side: Side,
    pub tag: FacetTag,
}

/// Line indices of the walls of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSpan {
    pub left_line: usize,
    pub right_line: usize,
}

/// Special lines of a grid built for the perforated domain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    /// x2 line index of `x2 = 0`.
    pub gamma0_line: Option<usize>,
    /// x2 line index of the channel tops.
    pub channel_top_line: Option<usize>,
    /// x2 line index of the upper wall.
    pub strip_top_line: Option<usize>,
    pub channels: Vec<ChannelSpan>,
    /// x1 line index of every period start `k eps`, followed by the index of `a`.
    pub period_lines: Vec<usize>,
}

const NO_NODE: u32 = u32::MAX;

/// Tensor-product rectilinear grid with masked cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: DomainKind,
    x1: Vec<f64>,
    x2: Vec<f64>,
    regions: Vec<Region>,
    node_index: Vec<u32>,
    unknown_lines: Vec<(u32, u32)>,
    boundary_facets: Vec<BoundaryFacet>,
    layout: Layout,
}

/// Builds the conforming grid of the perforated domain.
pub fn build_grid(p: &GeometryParams, res: &ResolutionPolicy) -> Result<Grid> {
    res.validate()?;
    let (x1, layout_x1) = perforated_x1_lines(p, res);
    let h = res.bulk_size(p.eps());
    let mut x2 = uniform_points(-p.b(), 0.0, h);
    let gamma0 = x2.len() - 1;
    let channel_top = p.channel_top();
    let strip_top = p.strip_top();
    let n_l = res.channel_layers;
    for j in 1..n_l {
        x2.push(channel_top * j as f64 / n_l as f64);
    }
    x2.push(channel_top);
    let top_line = x2.len() - 1;
    let n_s = res.strip_layers;
    for j in 1..n_s {
        x2.push(channel_top + (strip_top - channel_top) * j as f64 / n_s as f64);
    }
    x2.push(strip_top);
    let strip_line = x2.len() - 1;

    let layout = Layout {
        gamma0_line: Some(gamma0),
        channel_top_line: Some(top_line),
        strip_top_line: Some(strip_line),
        ..layout_x1
    };
    Grid::assemble(DomainKind::Perforated, x1, x2, layout, res.max_unknowns)
}

/// Builds the bulk-rectangle grid that shares every line of the perforated
/// grid below `x2 = 0`, so fields restrict between the two by index.
pub fn build_limit_grid(p: &GeometryParams, res: &ResolutionPolicy) -> Result<Grid> {
    build_grid(p, res)?.limit_part()
}

fn perforated_x1_lines(p: &GeometryParams, res: &ResolutionPolicy) -> (Vec<f64>, Layout) {
    let h = res.bulk_size(p.eps());
    let n_w = res.channel_cells;
    let fine = p.channel_width() / n_w as f64;
    let n = p.period_count();
    let mut x1 = Vec::new();
    let mut channels = Vec::with_capacity(n);
    let mut period_lines = Vec::with_capacity(n + 1);
    for k in 0..n {
        let (left, right) = p.channel_walls(k);
        period_lines.push(x1.len());
        let left_line = x1.len();
        x1.push(left);
        for j in 1..n_w {
            x1.push(left + p.channel_width() * j as f64 / n_w as f64);
        }
        let right_line = x1.len();
        x1.push(right);
        channels.push(ChannelSpan {
            left_line,
            right_line,
        });
        let (gap_end, end_size) = if k + 1 < n {
            (p.channel_walls(k + 1).0, Some(fine))
        } else {
            (p.a(), None)
        };
        x1.extend(graded_interior(
            right,
            gap_end,
            Some(fine),
            end_size,
            h,
            res.grading,
        ));
    }
    period_lines.push(x1.len());
    x1.push(p.a());
    let layout = Layout {
        channels,
        period_lines,
        ..Layout::default()
    };
    (x1, layout)
}

/// `ceil(len/h)` equal cells on `[lo, hi]`; endpoints are reproduced exactly.
fn uniform_points(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let n = (((hi - lo) / h) - 1e-9).ceil().max(1.0) as usize;
    let mut pts: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    pts.push(hi);
    pts
}

/// Interior points of `[lo, hi]` for a size function that grows
/// geometrically (factor `growth` per cell) away from fine walls at either
/// end and saturates at `h`. Points equidistribute `int dx / size(x)`.
fn graded_interior(
    lo: f64,
    hi: f64,
    left: Option<f64>,
    right: Option<f64>,
    h: f64,
    growth: f64,
) -> Vec<f64> {
    let c = growth.ln();
    let left = left.map(|s| s.min(h));
    let right = right.map(|s| s.min(h));

    #[derive(Clone, Copy)]
    enum Piece {
        Rising(f64),
        Flat,
        Falling(f64),
    }
    // size(x) = min(h, sl + c (x - lo), sr + c (hi - x))
    let size = |x: f64| -> f64 {
        let mut s = h;
        if let Some(sl) = left {
            s = s.min(sl + c * (x - lo));
        }
        if let Some(sr) = right {
            s = s.min(sr + c * (hi - x));
        }
        s
    };
    let mut breaks = vec![lo, hi];
    if let Some(sl) = left {
        breaks.push(lo + (h - sl) / c);
    }
    if let Some(sr) = right {
        breaks.push(hi - (h - sr) / c);
    }
    if let (Some(sl), Some(sr)) = (left, right) {
        breaks.push((sr - sl + c * (lo + hi)) / (2.0 * c));
    }
    breaks.retain(|&x| x >= lo && x <= hi);
    breaks.sort_by(|u, v| u.partial_cmp(v).unwrap());
    breaks.dedup();

    let mut pieces = Vec::new();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 <= x0 {
            continue;
        }
        let mid = 0.5 * (x0 + x1);
        let s = size(mid);
        let piece = if left.is_some_and(|sl| (s - (sl + c * (mid - lo))).abs() <= 1e-12 * h)
            && s < h
        {
            Piece::Rising(size(x0))
        } else if right.is_some_and(|sr| (s - (sr + c * (hi - mid))).abs() <= 1e-12 * h) && s < h {
            Piece::Falling(size(x0))
        } else {
            Piece::Flat
        };
        let weight = match piece {
            Piece::Flat => (x1 - x0) / h,
            Piece::Rising(_) | Piece::Falling(_) => (size(x1) / size(x0)).ln().abs() / c,
        };
        pieces.push((x0, x1, total, weight, piece));
        total += weight;
    }

    let cells = (total - 1e-9).ceil().max(1.0) as usize;
    let step = total / cells as f64;
    let mut pts = Vec::with_capacity(cells.saturating_sub(1));
    let mut idx = 0;
    for i in 1..cells {
        let t = step * i as f64;
        while idx + 1 < pieces.len() && t > pieces[idx].2 + pieces[idx].3 {
            idx += 1;
        }
        let (x0, x1, f0, _, piece) = pieces[idx];
        let dt = t - f0;
        let x = match piece {
            Piece::Flat => x0 + dt * h,
            Piece::Rising(s0) => x0 + s0 * ((c * dt).exp() - 1.0) / c,
            Piece::Falling(s0) => x0 + s0 * (1.0 - (-c * dt).exp()) / c,
        };
        pts.push(x.clamp(x0, x1));
    }
    pts
}

impl Grid {
    /// Uniform grid on the rectangle `(0, a) x (-b, 0)` with cells of size at most `h`.
    pub fn rectangle(a: f64, b: f64, h: f64) -> Result<Grid> {
        for (name, value) in [("a", a), ("b", b), ("h", h)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        let x1 = uniform_points(0.0, a, h);
        let x2 = uniform_points(-b, 0.0, h);
        let layout = Layout {
            gamma0_line: Some(x2.len() - 1),
            ..Layout::default()
        };
        Grid::assemble(DomainKind::LimitPlain, x1, x2, layout, DEFAULT_MAX_UNKNOWNS)
    }

    fn assemble(
        kind: DomainKind,
        x1: Vec<f64>,
        x2: Vec<f64>,
        layout: Layout,
        max_unknowns: usize,
    ) -> Result<Grid> {
        let n1 = x1.len() - 1;
        let n2 = x2.len() - 1;
        let upper_bound = (n1 + 1) * (n2 + 1);
        if kind == DomainKind::LimitPlain && upper_bound > max_unknowns {
            return Err(Error::GridTooLarge {
                unknowns: upper_bound,
                cap: max_unknowns,
            });
        }

        let mut in_channel = vec![false; n1];
        for span in &layout.channels {
            for flag in &mut in_channel[span.left_line..span.right_line] {
                *flag = true;
            }
        }
        let gamma0 = layout.gamma0_line.unwrap_or(n2);
        let top = layout.channel_top_line.unwrap_or(n2);
        let mut regions = Vec::with_capacity(n1 * n2);
        for i2 in 0..n2 {
            for flag in &in_channel {
                let region = if i2 < gamma0 {
                    Region::Omega0
                } else if i2 < top {
                    if *flag {
                        Region::Channel
                    } else {
                        Region::Outside
                    }
                } else {
                    Region::Strip
                };
                regions.push(region);
            }
        }

        let mut node_index = vec![NO_NODE; upper_bound];
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                if regions[i2 * n1 + i1].is_active() {
                    for (d1, d2) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        node_index[(i2 + d2) * (n1 + 1) + i1 + d1] = 0;
                    }
                }
            }
        }
        let mut unknown_lines = Vec::new();
        for (id, slot) in node_index.iter_mut().enumerate() {
            if *slot != NO_NODE {
                *slot = unknown_lines.len() as u32;
                unknown_lines.push(((id % (n1 + 1)) as u32, (id / (n1 + 1)) as u32));
            }
        }
        if unknown_lines.len() > max_unknowns {
            return Err(Error::GridTooLarge {
                unknowns: unknown_lines.len(),
                cap: max_unknowns,
            });
        }

        let mut grid = Grid {
            kind,
            x1,
            x2,
            regions,
            node_index,
            unknown_lines,
            boundary_facets: Vec::new(),
            layout,
        };
        grid.boundary_facets = grid.collect_boundary_facets();
        Ok(grid)
    }

    fn collect_boundary_facets(&self) -> Vec<BoundaryFacet> {
        let (n1, n2) = self.cell_counts();
        let active = |i1: isize, i2: isize| -> bool {
            i1 >= 0
                && i2 >= 0
                && (i1 as usize) < n1
                && (i2 as usize) < n2
                && self.regions[i2 as usize * n1 + i1 as usize].is_active()
        };
        let strip_top = self.layout.strip_top_line;
        let gamma0 = self.layout.gamma0_line;
        let mut facets = Vec::new();
        for (i1, i2) in self.active_cells() {
            let (c1, c2) = (i1 as isize, i2 as isize);
            let sides = [
                (Side::Bottom, c1, c2 - 1),
                (Side::Right, c1 + 1, c2),
                (Side::Top, c1, c2 + 1),
                (Side::Left, c1 - 1, c2),
            ];
            for (side, o1, o2) in sides {
                if active(o1, o2) {
                    continue;
                }
                let tag = match side {
                    Side::Left if i1 == 0 => FacetTag::OuterWall,
                    Side::Right if i1 + 1 == n1 => FacetTag::OuterWall,
                    Side::Bottom if i2 == 0 => FacetTag::OuterWall,
                    Side::Top if Some(i2 + 1) == strip_top => FacetTag::GammaEps,
                    Side::Top if self.kind != DomainKind::Perforated && Some(i2 + 1) == gamma0 => {
                        FacetTag::Gamma0
                    }
                    _ => FacetTag::ChannelWall,
                };
                facets.push(BoundaryFacet {
                    cell: (i1, i2),
                    side,
                    tag,
                });
            }
        }
        facets
    }

    /// The bulk part of a perforated grid: same x1 lines, x2 lines up to 0.
    pub fn limit_part(&self) -> Result<Grid> {
        if self.kind != DomainKind::Perforated {
            return Ok(self.clone());
        }
        let gamma0 = self.layout.gamma0_line.ok_or(Error::NoTraceLine)?;
        let layout = Layout {
            gamma0_line: Some(gamma0),
            channel_top_line: None,
            strip_top_line: None,
            channels: self.layout.channels.clone(),
            period_lines: self.layout.period_lines.clone(),
        };
        Grid::assemble(
            DomainKind::LimitConforming,
            self.x1.clone(),
            self.x2[..=gamma0].to_vec(),
            layout,
            usize::MAX,
        )
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn x1_lines(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2_lines(&self) -> &[f64] {
        &self.x2
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    /// Cell counts along x1 and x2.
    pub fn cell_counts(&self) -> (usize, usize) {
        (self.x1.len() - 1, self.x2.len() - 1)
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_lines.len()
    }

    pub fn region(&self, i1: usize, i2: usize) -> Region {
        let (n1, _) = self.cell_counts();
        self.regions[i2 * n1 + i1]
    }

    /// Active cells in row-major order (x1 fastest).
    pub fn active_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (n1, _) = self.cell_counts();
        self.regions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_active())
            .map(move |(c, _)| (c % n1, c / n1))
    }

    pub fn active_cell_count(&self) -> usize {
        self.regions.iter().filter(|r| r.is_active()).count()
    }

    /// `(x1lo, x1hi, x2lo, x2hi)` of a cell.
    pub fn cell_rect(&self, i1: usize, i2: usize) -> (f64, f64, f64, f64) {
        (self.x1[i1], self.x1[i1 + 1], self.x2[i2], self.x2[i2 + 1])
    }

    /// Unknown index of the node at line indices `(j1, j2)`, if active.
    pub fn node(&self, j1: usize, j2: usize) -> Option<usize> {
        if j1 >= self.x1.len() || j2 >= self.x2.len() {
            return None;
        }
        let id = self.node_index[j2 * self.x1.len() + j1];
        (id != NO_NODE).then_some(id as usize)
    }

    /// Unknowns of an active cell, ordered `(lo,lo), (hi,lo), (lo,hi), (hi,hi)`.
    pub fn cell_nodes(&self, i1: usize, i2: usize) -> [usize; 4] {
        let w = self.x1.len();
        let at = |j1: usize, j2: usize| self.node_index[j2 * w + j1] as usize;
        [
            at(i1, i2),
            at(i1 + 1, i2),
            at(i1, i2 + 1),
            at(i1 + 1, i2 + 1),
        ]
    }

    /// Line indices `(j1, j2)` of an unknown.
    pub fn unknown_lines(&self, unknown: usize) -> (usize, usize) {
        let (j1, j2) = self.unknown_lines[unknown];
        (j1 as usize, j2 as usize)
    }

    pub fn node_coords(&self, unknown: usize) -> [f64; 2] {
        let (j1, j2) = self.unknown_lines(unknown);
        [self.x1[j1], self.x2[j2]]
    }

    /// Index of the x2 line exactly equal to `value`.
    pub fn x2_line_index(&self, value: f64) -> Option<usize> {
        self.x2.iter().position(|&y| y == value)
    }

    pub fn active_area(&self) -> f64 {
        self.active_cells()
            .map(|(i1, i2)| {
                let (x0, x1, y0, y1) = self.cell_rect(i1, i2);
                (x1 - x0) * (y1 - y0)
            })
            .sum()
    }

    /// Writes one line per active cell: `i1 i2 x1lo x1hi x2lo x2hi tag`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i1, i2) in self.active_cells() {
            let (x0, x1, y0, y1) = self.cell_rect(i1, i2);
            writeln!(
                out,
                "{i1} {i2} {x0:?} {x1:?} {y0:?} {y1:?} {}",
                self.region(i1, i2).as_str()
            )?;
        }
        Ok(())
    }

    pub fn dump_to(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_dump(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// The x1 lines as a 1D grid on `[0, a]`.
    pub fn trace_grid(&self) -> Interval1DGrid {
        Interval1DGrid {
            nodes: self.x1.clone(),
        }
    }
}

/// Partition of the interval `[0, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval1DGrid {
    nodes: Vec<f64>,
}

impl Interval1DGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::InvalidStudy(
                "interval grid must start at 0 and have at least two nodes".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidStudy(
                "interval grid nodes must be strictly increasing".into(),
            ));
        }
        Ok(Interval1DGrid { nodes })
    }

    pub fn uniform(a: f64, cells: usize) -> Result<Self> {
        if !(a > 0.0) || cells == 0 {
            return Err(Error::NonPositiveParameter {
                name: "interval cells",
                value: cells as f64,
            });
        }
        let mut nodes: Vec<f64> = (0..cells).map(|i| a * i as f64 / cells as f64).collect();
        nodes.push(a);
        Ok(Interval1DGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn element_sizes(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> GeometryParams {
        validate_params(&ParamRecord::default()).unwrap()
    }

    #[test]
    fn accepts_canonical_parameters() {
        let p = canonical();
        assert_eq!(p.period_count(), 4);
        assert_eq!(p.channel_width(), 0.015625);
    }

    #[test]
    fn rejects_non_integer_period_count() {
        let raw = ParamRecord {
            eps: 0.3,
            ..ParamRecord::default()
        };
        assert!(matches!(
            validate_params(&raw),
            Err(Error::NonIntegerPeriodCount { .. })
        ));
    }

    #[test]
    fn rejects_wide_channels() {
        let raw = ParamRecord {
            alpha: 20.0,
            ..ParamRecord::default()
        };
        assert!(matches!(
            validate_params(&raw),
            Err(Error::ChannelTooWide { .. })
        ));
    }

    #[test]
    fn rejects_non_positive_values() {
        for f in [
            |r: &mut ParamRecord| r.b = 0.0,
            |r: &mut ParamRecord| r.omega = -1.0,
            |r: &mut ParamRecord| r.strip_height = f64::NAN,
        ] {
            let mut raw = ParamRecord::default();
            f(&mut raw);
            assert!(matches!(
                validate_params(&raw),
                Err(Error::NonPositiveParameter { .. })
            ));
        }
    }

    #[test]
    fn classifies_points() {
        let p = canonical();
        assert_eq!(classify_point(&p, [0.5, -0.5]), Region::Omega0);
        assert_eq!(classify_point(&p, [0.26, 0.4]), Region::Strip);
        assert_eq!(classify_point(&p, [0.005, 0.1]), Region::Channel);
        assert_eq!(classify_point(&p, [0.1, 0.1]), Region::Outside);
        assert_eq!(classify_point(&p, [0.5, 0.6]), Region::Outside);
        // shared boundaries
        assert_eq!(classify_point(&p, [0.005, 0.0]), Region::Omega0);
        assert_eq!(classify_point(&p, [0.005, 0.25]), Region::Channel);
        assert_eq!(classify_point(&p, [0.1, 0.25]), Region::Strip);
    }

    #[test]
    fn plain_rectangle_grid() {
        let g = Grid::rectangle(1.0, 1.0, 0.25).unwrap();
        assert_eq!(g.cell_counts(), (4, 4));
        assert_eq!(g.unknown_count(), 25);
        assert!(g
            .active_cells()
            .all(|(i1, i2)| g.region(i1, i2) == Region::Omega0));
    }

    #[test]
    fn perforated_area_matches_closed_form() {
        let p = canonical();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        assert!((p.domain_area() - 1.265625).abs() < 1e-15);
        let rel = (g.active_area() - 1.265625).abs() / 1.265625;
        assert!(rel < 1e-12, "relative area error {rel}");
    }

    #[test]
    fn rejects_single_cell_across_channel() {
        let res = ResolutionPolicy {
            channel_cells: 1,
            ..ResolutionPolicy::default()
        };
        assert!(matches!(
            build_grid(&canonical(), &res),
            Err(Error::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn enforces_unknown_cap() {
        let res = ResolutionPolicy {
            max_unknowns: 100,
            ..ResolutionPolicy::default()
        };
        assert!(matches!(
            build_grid(&canonical(), &res),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn walls_are_grid_lines_bitwise() {
        let p = canonical().with_eps(0.125).unwrap();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        for k in 0..p.period_count() {
            let (l, r) = p.channel_walls(k);
            let span = g.layout().channels[k];
            assert_eq!(g.x1_lines()[span.left_line].to_bits(), l.to_bits());
            assert_eq!(g.x1_lines()[span.right_line].to_bits(), r.to_bits());
        }
        for y in [-1.0, 0.0, p.channel_top(), p.strip_top()] {
            assert!(g.x2_line_index(y).is_some(), "missing x2 line {y}");
        }
    }

    #[test]
    fn grading_bounds_neighbour_ratio() {
        let p = canonical().with_eps(1.0 / 16.0).unwrap();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        let sizes: Vec<f64> = g.x1_lines().windows(2).map(|w| w[1] - w[0]).collect();
        for w in sizes.windows(2) {
            let ratio = (w[1] / w[0]).max(w[0] / w[1]);
            assert!(ratio <= 2.5, "neighbour ratio {ratio}");
        }
        let h = ResolutionPolicy::default().bulk_size(p.eps());
        assert!(sizes.iter().all(|&s| s <= h * (1.0 + 1e-12)));
    }

    #[test]
    fn facets_are_tagged() {
        let p = canonical();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        let count = |tag| g.boundary_facets().iter().filter(|f| f.tag == tag).count();
        let (n1, _) = g.cell_counts();
        assert_eq!(count(FacetTag::GammaEps), n1);
        assert_eq!(count(FacetTag::Gamma0), 0);
        assert!(count(FacetTag::ChannelWall) > 0);

        let g0 = build_limit_grid(&p, &ResolutionPolicy::default()).unwrap();
        let gamma0 = g0
            .boundary_facets()
            .iter()
            .filter(|f| f.tag == FacetTag::Gamma0)
            .count();
        assert_eq!(gamma0, n1);
    }

    #[test]
    fn limit_grid_shares_lines() {
        let p = canonical();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        let g0 = build_limit_grid(&p, &ResolutionPolicy::default()).unwrap();
        assert_eq!(g.x1_lines(), g0.x1_lines());
        let gamma0 = g.layout().gamma0_line.unwrap();
        assert_eq!(&g.x2_lines()[..=gamma0], g0.x2_lines());
        assert!((g0.active_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dump_has_one_line_per_active_cell() {
        let g = Grid::rectangle(1.0, 1.0, 0.5).unwrap();
        let mut buf = Vec::new();
        g.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap(), "0 0 0.0 0.5 -1.0 -0.5 Omega0");
    }
}
