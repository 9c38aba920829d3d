use crate::error::{Error, Result};
use crate::fem::{Field, GAUSS_2, GAUSS_2_WEIGHT};
use crate::geometry::Interval1DGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    L1,
    H1Semi,
}

/// What a field is compared against.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    Zero,
    Field(&'a Field),
    Function(&'a dyn Fn(f64, f64) -> f64),
    /// Value and gradient, needed for the H1 seminorm.
    FunctionWithGradient(&'a dyn Fn(f64, f64) -> (f64, [f64; 2])),
}

/// Value and gradient of a bilinear cell interpolant at local `(s, t)`.
fn bilinear(c: [f64; 4], s: f64, t: f64, hx: f64, hy: f64) -> (f64, [f64; 2]) {
    let v =
        c[0] * (1.0 - s) * (1.0 - t) + c[1] * s * (1.0 - t) + c[2] * (1.0 - s) * t + c[3] * s * t;
    let dx = ((c[1] - c[0]) * (1.0 - t) + (c[3] - c[2]) * t) / hx;
    let dy = ((c[2] - c[0]) * (1.0 - s) + (c[3] - c[1]) * s) / hy;
    (v, [dx, dy])
}

/// `||field - reference||` over the active cells, two-point tensor Gauss
/// per cell (exact for the L2 norm of bilinear differences).
pub fn norm(field: &Field, reference: Reference<'_>, kind: NormKind) -> Result<f64> {
    if let Reference::Field(other) = reference {
        if !field.same_grid(other) {
            return Err(Error::GridMismatch);
        }
    }
    if kind == NormKind::H1Semi && matches!(reference, Reference::Function(_)) {
        return Err(Error::MissingGradient);
    }
    let grid = field.grid();
    let mut total = 0.0;
    for (i1, i2) in grid.active_cells() {
        let (x0, x1, y0, y1) = grid.cell_rect(i1, i2);
        let (hx, hy) = (x1 - x0, y1 - y0);
        let mut coeffs = field.cell_values(i1, i2);
        if let Reference::Field(other) = reference {
            let r = other.cell_values(i1, i2);
            for (c, rv) in coeffs.iter_mut().zip(r) {
                *c -= rv;
            }
        }
        let w = GAUSS_2_WEIGHT * GAUSS_2_WEIGHT * hx * hy;
        for &s in &GAUSS_2 {
            for &t in &GAUSS_2 {
                let (mut v, mut g) = bilinear(coeffs, s, t, hx, hy);
                let (px, py) = (x0 + s * hx, y0 + t * hy);
                match reference {
                    Reference::Function(f) => v -= f(px, py),
                    Reference::FunctionWithGradient(f) => {
                        let (rv, rg) = f(px, py);
                        v -= rv;
                        g[0] -= rg[0];
                        g[1] -= rg[1];
                    }
                    Reference::Zero | Reference::Field(_) => {}
                }
                total += w * match kind {
                    NormKind::L2 => v * v,
                    NormKind::L1 => v.abs(),
                    NormKind::H1Semi => g[0] * g[0] + g[1] * g[1],
                };
            }
        }
    }
    Ok(match kind {
        NormKind::L1 => total,
        NormKind::L2 | NormKind::H1Semi => total.sqrt(),
    })
}

/// Norm of a nodal profile on an interval, minus an optional reference
/// function (L2 and L1 only when a reference function is given).
pub fn profile_norm(
    grid1: &Interval1DGrid,
    values: &[f64],
    reference: Option<&dyn Fn(f64) -> f64>,
    kind: NormKind,
) -> Result<f64> {
    if values.len() != grid1.len() {
        return Err(Error::DimensionMismatch {
            expected: grid1.len(),
            got: values.len(),
        });
    }
    if kind == NormKind::H1Semi && reference.is_some() {
        return Err(Error::MissingGradient);
    }
    let nodes = grid1.nodes();
    let mut total = 0.0;
    for e in 0..nodes.len() - 1 {
        let h = nodes[e + 1] - nodes[e];
        let (v0, v1) = (values[e], values[e + 1]);
        if kind == NormKind::H1Semi {
            let d = (v1 - v0) / h;
            total += h * d * d;
            continue;
        }
        for &s in &GAUSS_2 {
            let mut v = v0 + s * (v1 - v0);
            if let Some(f) = reference {
                v -= f(nodes[e] + s * h);
            }
            total += GAUSS_2_WEIGHT
                * h
                * match kind {
                    NormKind::L2 => v * v,
                    _ => v.abs(),
                };
        }
    }
    Ok(match kind {
        NormKind::L1 => total,
        _ => total.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;
    use std::sync::Arc;

    fn x1_field() -> Field {
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap());
        Field::interpolate(g, |x, _| x)
    }

    #[test]
    fn identical_fields_have_zero_distance() {
        let f = x1_field();
        for kind in [NormKind::L2, NormKind::L1, NormKind::H1Semi] {
            assert_eq!(norm(&f, Reference::Field(&f), kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn norms_of_x1() {
        let f = x1_field();
        let l2 = norm(&f, Reference::Zero, NormKind::L2).unwrap();
        assert!((l2 - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let h1 = norm(&f, Reference::Zero, NormKind::H1Semi).unwrap();
        assert!((h1 - 1.0).abs() < 1e-12);
        let l1 = norm(&f, Reference::Zero, NormKind::L1).unwrap();
        assert!((l1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let f = x1_field();
        let other = Field::zeros(Arc::new(Grid::rectangle(1.0, 1.0, 0.5).unwrap()));
        assert_eq!(
            norm(&f, Reference::Field(&other), NormKind::L2),
            Err(Error::GridMismatch)
        );
    }

    #[test]
    fn h1_needs_gradient() {
        let f = x1_field();
        let zero = |_: f64, _: f64| 0.0;
        assert_eq!(
            norm(&f, Reference::Function(&zero), NormKind::H1Semi),
            Err(Error::MissingGradient)
        );
    }

    #[test]
    fn profile_norms() {
        let g = Interval1DGrid::uniform(1.0, 4).unwrap();
        let v: Vec<f64> = g.nodes().to_vec();
        let l2 = profile_norm(&g, &v, None, NormKind::L2).unwrap();
        assert!((l2 - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        let h1 = profile_norm(&g, &v, None, NormKind::H1Semi).unwrap();
        assert!((h1 - 1.0).abs() < 1e-14);
        let id = |x: f64| x;
        assert!(profile_norm(&g, &v, Some(&id), NormKind::L1).unwrap() < 1e-15);
    }
}
