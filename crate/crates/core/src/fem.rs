//! Uniform P1 (1D) and Q1 (2D) finite elements with Gauss quadrature, and
//! band assembly over node maps (Dirichlet interiors, masks, full grids).

use crate::linalg::{BandedMatrix, CMat, C64, ZERO};
use crate::quadrature::gauss_legendre;

/// 2x2 coefficient tensor `c_kl`.
pub type Tensor = [[C64; 2]; 2];

/// Uniform grid of `cells` elements on `[x0, x0 + length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1d {
    pub cells: usize,
    pub x0: f64,
    pub length: f64,
}

impl Grid1d {
    pub fn unit(cells: usize) -> Self {
        Self {
            cells,
            x0: 0.0,
            length: 1.0,
        }
    }

    pub fn h(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x0 + self.length * i as f64 / self.cells as f64
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 2] {
        [e, e + 1]
    }

    /// Interior nodes numbered consecutively, boundary nodes dropped.
    pub fn interior_map(&self) -> Vec<Option<usize>> {
        (0..self.nodes())
            .map(|i| (i > 0 && i < self.cells).then(|| i - 1))
            .collect()
    }

    pub fn full_map(&self) -> Vec<Option<usize>> {
        (0..self.nodes()).map(Some).collect()
    }
}

/// Uniform grid of square elements of side `h`, `nx * ny` elements, nodes
/// numbered row-major with `x` fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2d {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: (f64, f64),
}

impl Grid2d {
    pub fn unit_square(cells: usize) -> Self {
        Self {
            nx: cells,
            ny: cells,
            h: 1.0 / cells as f64,
            origin: (0.0, 0.0),
        }
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + self.h * i as f64,
            self.origin.1 + self.h * j as f64,
        )
    }

    pub fn nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Lower-left corner and node ids of element `e` (row-major).
    pub fn element(&self, e: usize) -> ((f64, f64), [usize; 4]) {
        let (i, j) = (e % self.nx, e / self.nx);
        (
            self.node(i, j),
            [
                self.node_id(i, j),
                self.node_id(i + 1, j),
                self.node_id(i, j + 1),
                self.node_id(i + 1, j + 1),
            ],
        )
    }

    pub fn interior_map(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        let mut map = vec![None; self.nodes()];
        for j in 1..self.ny {
            for i in 1..self.nx {
                map[self.node_id(i, j)] = Some(next);
                next += 1;
            }
        }
        map
    }

    pub fn full_map(&self) -> Vec<Option<usize>> {
        (0..self.nodes()).map(Some).collect()
    }
}

/// Gauss points and weights on `[0, 1]`.
pub fn unit_gauss(order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    x.iter().zip(&w).map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// `a(N_j, N_i) = int d N_j' N_i' + b N_j' N_i + r N_j N_i` on one P1 element.
pub fn p1_element<D>(x0: f64, h: f64, diffusion: D, drift: C64, reaction: C64, order: usize) -> [[C64; 2]; 2]
where
    D: Fn(f64) -> C64,
{
    let dn = [-1.0 / h, 1.0 / h];
    let mut k = [[ZERO; 2]; 2];
    for (s, w) in unit_gauss(order) {
        let n = [1.0 - s, s];
        let d = diffusion(x0 + s * h) * (w * h);
        for i in 0..2 {
            for j in 0..2 {
                k[i][j] += d * (dn[j] * dn[i]) + drift * (w * h * dn[j] * n[i]) + reaction * (w * h * n[j] * n[i]);
            }
        }
    }
    k
}

/// Consistent P1 mass matrix of one element.
pub fn p1_mass(h: f64) -> [[f64; 2]; 2] {
    [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
}

fn q1_shape(s: f64, t: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    (
        [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t],
        [
            [-(1.0 - t), -(1.0 - s)],
            [1.0 - t, -s],
            [-t, 1.0 - s],
            [t, s],
        ],
    )
}

/// `a(N_b, N_a) = int sum_kl c_kl d_k N_b d_l N_a + r N_b N_a` on one Q1 element.
pub fn q1_element<F>(corner: (f64, f64), h: f64, coeff: F, reaction: C64, order: usize) -> [[C64; 4]; 4]
where
    F: Fn(f64, f64) -> Tensor,
{
    let g = unit_gauss(order);
    let mut k = [[ZERO; 4]; 4];
    for &(s, ws) in &g {
        for &(t, wt) in &g {
            let c = coeff(corner.0 + s * h, corner.1 + t * h);
            let (n, dn) = q1_shape(s, t);
            // gradients scale by 1/h, area by h^2
            let w = ws * wt;
            for a in 0..4 {
                for b in 0..4 {
                    let mut v = ZERO;
                    for (kk, ck) in c.iter().enumerate() {
                        for (l, ckl) in ck.iter().enumerate() {
                            v += ckl * (dn[b][kk] * dn[a][l]);
                        }
                    }
                    k[a][b] += v * w + reaction * (w * h * h * n[b] * n[a]);
                }
            }
        }
    }
    k
}

/// Consistent Q1 mass matrix of one element.
pub fn q1_mass(h: f64) -> [[f64; 4]; 4] {
    let m1 = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
    let mut m = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            m[a][b] = h * h * m1[a % 2][b % 2] * m1[a / 2][b / 2];
        }
    }
    m
}

/// Assemble `sum_e local(e)` over the nodes kept by `map` into a band
/// matrix. `local(e)` is row-major `k x k` for `nodes(e)` of length `k`.
pub fn assemble<N, L>(elements: usize, dim: usize, map: &[Option<usize>], nodes: N, local: L) -> BandedMatrix
where
    N: Fn(usize) -> Vec<usize>,
    L: Fn(usize) -> Vec<C64>,
{
    let mut band = 0;
    for e in 0..elements {
        let ids: Vec<usize> = nodes(e).into_iter().filter_map(|n| map[n]).collect();
        for &a in &ids {
            for &b in &ids {
                band = band.max(a.abs_diff(b));
            }
        }
    }
    let mut out = BandedMatrix::zeros(dim, band, band);
    for e in 0..elements {
        let ids = nodes(e);
        let k = ids.len();
        let vals = local(e);
        for a in 0..k {
            let Some(ga) = map[ids[a]] else { continue };
            for b in 0..k {
                if let Some(gb) = map[ids[b]] {
                    out.add(ga, gb, vals[a * k + b]);
                }
            }
        }
    }
    out
}

/// Number of kept nodes in a map.
pub fn map_dim(map: &[Option<usize>]) -> usize {
    map.iter().flatten().map(|&i| i + 1).max().unwrap_or(0)
}

/// 1D matrix of `a` over `map` on `grid`.
pub fn assemble_p1<D>(
    grid: &Grid1d,
    map: &[Option<usize>],
    diffusion: D,
    drift: C64,
    reaction: C64,
    order: usize,
) -> BandedMatrix
where
    D: Fn(f64) -> C64,
{
    let h = grid.h();
    assemble(
        grid.cells,
        map_dim(map),
        map,
        |e| grid.element_nodes(e).to_vec(),
        |e| {
            let k = p1_element(grid.node(e), h, &diffusion, drift, reaction, order);
            vec![k[0][0], k[0][1], k[1][0], k[1][1]]
        },
    )
}

pub fn assemble_p1_mass(grid: &Grid1d, map: &[Option<usize>]) -> BandedMatrix {
    let m = p1_mass(grid.h());
    assemble(
        grid.cells,
        map_dim(map),
        map,
        |e| grid.element_nodes(e).to_vec(),
        |_| m.iter().flatten().map(|&v| C64::new(v, 0.0)).collect(),
    )
}

pub fn assemble_q1<F>(grid: &Grid2d, map: &[Option<usize>], coeff: F, reaction: C64, order: usize) -> BandedMatrix
where
    F: Fn(f64, f64) -> Tensor,
{
    assemble(
        grid.elements(),
        map_dim(map),
        map,
        |e| grid.element(e).1.to_vec(),
        |e| {
            let k = q1_element(grid.element(e).0, grid.h, &coeff, reaction, order);
            k.iter().flatten().copied().collect()
        },
    )
}

pub fn assemble_q1_mass(grid: &Grid2d, map: &[Option<usize>]) -> BandedMatrix {
    let m = q1_mass(grid.h);
    assemble(
        grid.elements(),
        map_dim(map),
        map,
        |e| grid.element(e).1.to_vec(),
        |_| m.iter().flatten().map(|&v| C64::new(v, 0.0)).collect(),
    )
}

/// Isotropic tensor `d I`.
pub fn isotropic(d: C64) -> Tensor {
    [[d, ZERO], [ZERO, d]]
}

/// Largest entrywise difference of two dense matrices.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
