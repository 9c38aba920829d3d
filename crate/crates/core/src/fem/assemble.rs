use crate::fem::sparse::{SparseSystem, SymmetricMatrix, TripletBuilder};
use crate::fem::{Field, GAUSS_2, GAUSS_2_WEIGHT};
use crate::geometry::{Grid, Interval1DGrid, Region};

/// Right-hand side `f` of the Helmholtz problem.
#[derive(Clone, Copy)]
pub enum SourceTerm<'a> {
    Zero,
    /// Evaluated with the two-point tensor Gauss rule on every cell.
    Function(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    /// A bilinear field, integrated exactly.
    Nodal(&'a Field),
}

impl std::fmt::Debug for SourceTerm<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceTerm::Zero => write!(f, "Zero"),
            SourceTerm::Function(_) => write!(f, "Function(..)"),
            SourceTerm::Nodal(_) => write!(f, "Nodal(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Drop source contributions from cells outside the bulk rectangle.
    pub f_support_omega0: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            f_support_omega0: true,
        }
    }
}

fn stiffness_1d(h: f64) -> [[f64; 2]; 2] {
    [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]]
}

fn mass_1d(h: f64) -> [[f64; 2]; 2] {
    [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
}

/// Local matrix `k_coef * K_e + m_coef * M_e` of an `hx x hy` cell, local
/// node `i + 2 j` sitting at corner `(i, j)`.
fn element_matrix(hx: f64, hy: f64, k_coef: f64, m_coef: f64) -> [[f64; 4]; 4] {
    let (sx, mx) = (stiffness_1d(hx), mass_1d(hx));
    let (sy, my) = (stiffness_1d(hy), mass_1d(hy));
    let mut e = [[0.0; 4]; 4];
    for a in 0..4 {
        let (ia, ja) = (a % 2, a / 2);
        for b in 0..4 {
            let (ib, jb) = (b % 2, b / 2);
            let k = sx[ia][ib] * my[ja][jb] + mx[ia][ib] * sy[ja][jb];
            let m = mx[ia][ib] * my[ja][jb];
            e[a][b] = k_coef * k + m_coef * m;
        }
    }
    e
}

/// Global `k_coef * K + m_coef * M` for bilinear elements on the active cells.
pub fn assemble_operator(grid: &Grid, k_coef: f64, m_coef: f64) -> SymmetricMatrix {
    let mut builder =
        TripletBuilder::with_capacity(grid.unknown_count(), 10 * grid.active_cell_count());
    for (i1, i2) in grid.active_cells() {
        let (x0, x1, y0, y1) = grid.cell_rect(i1, i2);
        let e = element_matrix(x1 - x0, y1 - y0, k_coef, m_coef);
        let nodes = grid.cell_nodes(i1, i2);
        for a in 0..4 {
            for b in a..4 {
                builder.push(nodes[a], nodes[b], e[a][b]);
            }
        }
    }
    builder.build()
}

fn load_vector(grid: &Grid, f: SourceTerm<'_>, opts: AssemblyOptions) -> Vec<f64> {
    let mut rhs = vec![0.0; grid.unknown_count()];
    if let SourceTerm::Zero = f {
        return rhs;
    }
    for (i1, i2) in grid.active_cells() {
        if opts.f_support_omega0 && grid.region(i1, i2) != Region::Omega0 {
            continue;
        }
        let (x0, x1, y0, y1) = grid.cell_rect(i1, i2);
        let (hx, hy) = (x1 - x0, y1 - y0);
        let nodes = grid.cell_nodes(i1, i2);
        let mut local = [0.0; 4];
        match f {
            SourceTerm::Zero => unreachable!(),
            SourceTerm::Function(func) => {
                for &s in &GAUSS_2 {
                    for &t in &GAUSS_2 {
                        let w = GAUSS_2_WEIGHT * GAUSS_2_WEIGHT * hx * hy;
                        let fv = func(x0 + s * hx, y0 + t * hy);
                        let phi = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
                        for a in 0..4 {
                            local[a] += w * fv * phi[a];
                        }
                    }
                }
            }
            SourceTerm::Nodal(field) => {
                let fv = field.cell_values(i1, i2);
                let m = element_matrix(hx, hy, 0.0, 1.0);
                for a in 0..4 {
                    local[a] = (0..4).map(|b| m[a][b] * fv[b]).sum();
                }
            }
        }
        for a in 0..4 {
            rhs[nodes[a]] += local[a];
        }
    }
    rhs
}

/// Assembles `(K - omega^2 M) u = F` with natural Neumann conditions.
pub fn assemble_helmholtz_2d(
    grid: &Grid,
    omega: f64,
    f: SourceTerm<'_>,
    opts: AssemblyOptions,
) -> SparseSystem {
    SparseSystem {
        matrix: assemble_operator(grid, 1.0, -omega * omega),
        rhs: load_vector(grid, f, opts),
    }
}

/// `k_coef * K + m_coef * M` for linear elements on an interval grid.
pub fn assemble_1d_operator(grid1: &Interval1DGrid, k_coef: f64, m_coef: f64) -> SymmetricMatrix {
    let mut builder = TripletBuilder::with_capacity(grid1.len(), 3 * grid1.len());
    for (e, h) in grid1.element_sizes().into_iter().enumerate() {
        let (s, m) = (stiffness_1d(h), mass_1d(h));
        for a in 0..2 {
            for b in a..2 {
                builder.push(e + a, e + b, k_coef * s[a][b] + m_coef * m[a][b]);
            }
        }
    }
    builder.build()
}

/// Assembles `int v' psi' + c0 int v psi = int g psi` with `g` given at the
/// nodes and integrated as its linear interpolant.
pub fn assemble_1d_v(grid1: &Interval1DGrid, c0: f64, g: &[f64]) -> SparseSystem {
    assert_eq!(g.len(), grid1.len(), "nodal right-hand side length");
    let mass = assemble_1d_operator(grid1, 0.0, 1.0);
    SparseSystem {
        matrix: assemble_1d_operator(grid1, 1.0, c0),
        rhs: mass.matvec(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solve_direct;
    use crate::geometry::{build_grid, validate_params, ParamRecord, ResolutionPolicy};
    use crate::Error;
    use std::sync::Arc;

    #[test]
    fn unit_cell_stiffness() {
        let g = Grid::rectangle(1.0, 1.0, 1.0).unwrap();
        let k = assemble_operator(&g, 1.0, 0.0);
        // hand integration of the bilinear stiffness on the unit square
        let expected = [
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((k.get(i, j) - expected[i][j] / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_annihilates_constants_on_perforated_grid() {
        let p = validate_params(&ParamRecord::default()).unwrap();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        let sys = assemble_helmholtz_2d(&g, 0.0, SourceTerm::Zero, AssemblyOptions::default());
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        let ones = vec![1.0; g.unknown_count()];
        let r = sys.matrix.matvec(&ones);
        let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-12 * sys.matrix.max_abs(), "{max}");
    }

    #[test]
    fn mass_sums_to_area() {
        let p = validate_params(&ParamRecord::default()).unwrap();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        let m = assemble_operator(&g, 0.0, 1.0);
        let ones = vec![1.0; g.unknown_count()];
        let total: f64 = m.matvec(&ones).iter().sum();
        assert!((total - p.domain_area()).abs() <= 1e-12 * p.domain_area());
    }

    #[test]
    fn unit_source_partitions_unity() {
        let g = Grid::rectangle(1.0, 1.0, 0.125).unwrap();
        let one = |_: f64, _: f64| 1.0;
        let sys = assemble_helmholtz_2d(
            &g,
            0.5,
            SourceTerm::Function(&one),
            AssemblyOptions::default(),
        );
        let total: f64 = sys.rhs.iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn source_support_flag_drops_channel_and_strip_cells() {
        let p = validate_params(&ParamRecord::default()).unwrap();
        let g = build_grid(&p, &ResolutionPolicy::default()).unwrap();
        let one = |_: f64, _: f64| 1.0;
        let on = assemble_helmholtz_2d(
            &g,
            0.5,
            SourceTerm::Function(&one),
            AssemblyOptions::default(),
        );
        let off = assemble_helmholtz_2d(
            &g,
            0.5,
            SourceTerm::Function(&one),
            AssemblyOptions {
                f_support_omega0: false,
            },
        );
        assert!((on.rhs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((off.rhs.iter().sum::<f64>() - p.domain_area()).abs() < 1e-12);
    }

    #[test]
    fn nodal_source_matches_function_for_bilinear_data() {
        let g = Arc::new(Grid::rectangle(1.0, 1.0, 0.25).unwrap());
        let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * y;
        let field = Field::interpolate(g.clone(), f);
        let a = assemble_helmholtz_2d(
            &g,
            0.5,
            SourceTerm::Function(&f),
            AssemblyOptions::default(),
        );
        let b = assemble_helmholtz_2d(
            &g,
            0.5,
            SourceTerm::Nodal(&field),
            AssemblyOptions::default(),
        );
        for (u, v) in a.rhs.iter().zip(&b.rhs) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_neumann_helmholtz_at_zero_frequency_is_singular() {
        let g = Grid::rectangle(1.0, 1.0, 0.125).unwrap();
        let one = |_: f64, _: f64| 1.0;
        let sys = assemble_helmholtz_2d(
            &g,
            0.0,
            SourceTerm::Function(&one),
            AssemblyOptions::default(),
        );
        assert!(matches!(
            solve_direct(&sys),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn one_d_constant_solution_is_exact() {
        let grid1 = Interval1DGrid::uniform(1.0, 7).unwrap();
        let sys = assemble_1d_v(&grid1, 1.0, &[1.0; 8]);
        let sol = solve_direct(&sys).unwrap();
        assert!(sol.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn one_d_pure_neumann_is_singular() {
        let grid1 = Interval1DGrid::uniform(1.0, 7).unwrap();
        let sys = assemble_1d_v(&grid1, 0.0, &[0.0; 8]);
        assert!(matches!(
            crate::fem::LdlFactorization::new(&sys.matrix),
            Err(Error::SingularMatrix { .. })
        ));
    }
}
