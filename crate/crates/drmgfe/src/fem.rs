//! P1 finite elements on uniform meshes of the unit interval and unit square.
//!
//! Homogeneous Dirichlet boundaries are imposed by eliminating boundary
//! nodes: matrices and state vectors live on interior degrees of freedom
//! only. Mass and stiffness share one CSR sparsity pattern so the shifted
//! operator `M + alpha K` used by the resolvent solves can be formed
//! entrywise per call.
//!
//! The 2D triangulation splits every square cell along the (+1,+1) diagonal,
//! which keeps meshes nested under refinement and the node numbering
//! deterministic.

use thiserror::Error;

/// Spatial dimension of the computational domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn as_usize(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }
}

/// A point of the closed domain; 1D uses the first coordinate only.
pub type Point = [f64; 2];

/// Mesh elements: intervals in 1D, triangles in 2D.
#[derive(Clone, Copy, Debug)]
pub enum Element {
    Line([usize; 2]),
    Triangle([usize; 3]),
}

#[derive(Debug, Error)]
pub enum FemError {
    #[error("cells_per_side must be at least 2 (no interior dof otherwise), got {0}")]
    TooFewCells(usize),
    #[error("state vector length {got} does not match the space dof count {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("resolvent shift alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error(
        "conjugate gradient stalled: residual {residual:.3e} above tolerance {tol:.3e} after {iterations} iterations"
    )]
    SolverStalled {
        residual: f64,
        tol: f64,
        iterations: usize,
    },
    #[error("meshes are not nested: coarse n={coarse}, fine n={fine} (need a power-of-two refinement)")]
    NotNested { coarse: usize, fine: usize },
    #[error("dimension mismatch between spaces ({0:?} vs {1:?})")]
    DimMismatch(Dim, Dim),
}

/// Uniform mesh of (0,1) or (0,1)^2 with `cells_per_side` cells along each axis.
#[derive(Clone, Debug)]
pub struct Mesh {
    dim: Dim,
    cells_per_side: usize,
    nodes: Vec<Point>,
    /// node id -> interior dof index (None on the boundary).
    interior_index: Vec<Option<usize>>,
    /// dof index -> node id.
    interior_nodes: Vec<usize>,
    elements: Vec<Element>,
}

/// Builds the uniform mesh. Requires `cells_per_side >= 2` so that at least
/// one interior degree of freedom exists.
pub fn build_mesh(dim: Dim, cells_per_side: usize) -> Result<Mesh, FemError> {
    if cells_per_side < 2 {
        return Err(FemError::TooFewCells(cells_per_side));
    }
    let n = cells_per_side;
    let h = 1.0 / n as f64;
    match dim {
        Dim::One => {
            let nodes: Vec<Point> = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
            let mut interior_index = vec![None; n + 1];
            let mut interior_nodes = Vec::with_capacity(n - 1);
            for i in 1..n {
                interior_index[i] = Some(interior_nodes.len());
                interior_nodes.push(i);
            }
            let elements = (0..n).map(|i| Element::Line([i, i + 1])).collect();
            Ok(Mesh {
                dim,
                cells_per_side,
                nodes,
                interior_index,
                interior_nodes,
                elements,
            })
        }
        Dim::Two => {
            let side = n + 1;
            let mut nodes = Vec::with_capacity(side * side);
            for iy in 0..side {
                for ix in 0..side {
                    nodes.push([ix as f64 * h, iy as f64 * h]);
                }
            }
            let mut interior_index = vec![None; side * side];
            let mut interior_nodes = Vec::with_capacity((n - 1) * (n - 1));
            for iy in 1..n {
                for ix in 1..n {
                    let id = iy * side + ix;
                    interior_index[id] = Some(interior_nodes.len());
                    interior_nodes.push(id);
                }
            }
            let mut elements = Vec::with_capacity(2 * n * n);
            for cy in 0..n {
                for cx in 0..n {
                    let sw = cy * side + cx;
                    let se = sw + 1;
                    let nw = sw + side;
                    let ne = nw + 1;
                    elements.push(Element::Triangle([sw, se, ne]));
                    elements.push(Element::Triangle([sw, ne, nw]));
                }
            }
            Ok(Mesh {
                dim,
                cells_per_side,
                nodes,
                interior_index,
                interior_nodes,
                elements,
            })
        }
    }
}

impl Mesh {
    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    /// Mesh size h = 1/n.
    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    pub fn dof_count(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    /// Coordinates of the interior node carrying the given dof.
    pub fn dof_point(&self, dof: usize) -> Point {
        self.nodes[self.interior_nodes[dof]]
    }
}

/// Nodal coefficients over the interior dofs of a [`FemSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    coeffs: Vec<f64>,
}

impl StateVector {
    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        StateVector { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        StateVector {
            coeffs: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// P1 space on a [`Mesh`]: the mesh plus assembled mass and stiffness
/// matrices over interior dofs, stored on a shared CSR pattern.
#[derive(Clone, Debug)]
pub struct FemSpace {
    mesh: Mesh,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    mass_vals: Vec<f64>,
    stiff_vals: Vec<f64>,
}

/// Assembles mass and stiffness by exact P1 element integration.
pub fn assemble_space(mesh: Mesh) -> FemSpace {
    let ndof = mesh.dof_count();
    // (row, col, mass, stiffness) triplets over interior dofs.
    let mut triplets: Vec<(usize, usize, f64, f64)> = Vec::new();
    for element in &mesh.elements {
        match *element {
            Element::Line([a, b]) => {
                let h = (mesh.nodes[b][0] - mesh.nodes[a][0]).abs();
                let m = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
                let k = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
                let ids = [a, b];
                for (li, &ni) in ids.iter().enumerate() {
                    let Some(di) = mesh.interior_index[ni] else {
                        continue;
                    };
                    for (lj, &nj) in ids.iter().enumerate() {
                        let Some(dj) = mesh.interior_index[nj] else {
                            continue;
                        };
                        triplets.push((di, dj, m[li][lj], k[li][lj]));
                    }
                }
            }
            Element::Triangle([a, b, c]) => {
                let p = [mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]];
                // Standard P1 gradients: b_i = y_{i+1} - y_{i+2}, c_i = x_{i+2} - x_{i+1}.
                let bx = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
                let cy = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
                let det = bx[0] * cy[1] - bx[1] * cy[0];
                let area = 0.5 * det.abs();
                let ids = [a, b, c];
                for (li, &ni) in ids.iter().enumerate() {
                    let Some(di) = mesh.interior_index[ni] else {
                        continue;
                    };
                    for (lj, &nj) in ids.iter().enumerate() {
                        let Some(dj) = mesh.interior_index[nj] else {
                            continue;
                        };
                        let mass = if li == lj { area / 6.0 } else { area / 12.0 };
                        let stiff = (bx[li] * bx[lj] + cy[li] * cy[lj]) / (4.0 * area);
                        triplets.push((di, dj, mass, stiff));
                    }
                }
            }
        }
    }
    triplets.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    let mut row_ptr = Vec::with_capacity(ndof + 1);
    let mut col_idx = Vec::new();
    let mut mass_vals = Vec::new();
    let mut stiff_vals = Vec::new();
    row_ptr.push(0);
    let mut current_row = 0usize;
    for (r, c, m, k) in triplets {
        while current_row < r {
            row_ptr.push(col_idx.len());
            current_row += 1;
        }
        if col_idx.len() > row_ptr[current_row] && *col_idx.last().unwrap() == c {
            *mass_vals.last_mut().unwrap() += m;
            *stiff_vals.last_mut().unwrap() += k;
        } else {
            col_idx.push(c);
            mass_vals.push(m);
            stiff_vals.push(k);
        }
    }
    while current_row < ndof {
        row_ptr.push(col_idx.len());
        current_row += 1;
    }

    FemSpace {
        mesh,
        row_ptr,
        col_idx,
        mass_vals,
        stiff_vals,
    }
}

impl FemSpace {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    fn check_len(&self, v: &StateVector) -> Result<(), FemError> {
        if v.len() != self.dof_count() {
            return Err(FemError::LengthMismatch {
                got: v.len(),
                expected: self.dof_count(),
            });
        }
        Ok(())
    }

    fn matvec(&self, vals: &[f64], x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += vals[idx] * x[self.col_idx[idx]];
            }
            *yi = acc;
        }
    }

    pub fn mass_matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(&self.mass_vals, x, y)
    }

    pub fn stiffness_matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(&self.stiff_vals, x, y)
    }

    /// Matrix entry accessors for tests and oracles (zero off the pattern).
    pub fn mass_entry(&self, i: usize, j: usize) -> f64 {
        self.entry(&self.mass_vals, i, j)
    }

    pub fn stiffness_entry(&self, i: usize, j: usize) -> f64 {
        self.entry(&self.stiff_vals, i, j)
    }

    fn entry(&self, vals: &[f64], i: usize, j: usize) -> f64 {
        for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[idx] == j {
                return vals[idx];
            }
        }
        0.0
    }

    pub fn dense_mass(&self) -> Vec<Vec<f64>> {
        self.dense(&self.mass_vals)
    }

    pub fn dense_stiffness(&self) -> Vec<Vec<f64>> {
        self.dense(&self.stiff_vals)
    }

    fn dense(&self, vals: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dof_count();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[i][self.col_idx[idx]] = vals[idx];
            }
        }
        out
    }

    /// Largest symmetry defect max |A_ij - A_ji| over both matrices.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dof_count() {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[idx];
                worst = worst
                    .max((self.mass_vals[idx] - self.mass_entry(j, i)).abs())
                    .max((self.stiff_vals[idx] - self.stiffness_entry(j, i)).abs());
            }
        }
        worst
    }

    /// L2 inner product (u, v) restricted to the space: u^T M v.
    pub fn mass_inner(&self, u: &StateVector, v: &StateVector) -> f64 {
        let mut mv = vec![0.0; v.len()];
        self.mass_matvec(v.as_slice(), &mut mv);
        dot(u.as_slice(), &mv)
    }

    /// Discrete L2 norm sqrt(v^T M v); zero iff v = 0.
    pub fn mass_norm(&self, v: &StateVector) -> f64 {
        self.mass_inner(v, v).max(0.0).sqrt()
    }

    /// L2-orthogonal projection of a scalar field onto the space: assembles
    /// the load vector by order-2 Gauss quadrature per element and solves
    /// `M c = load` to relative residual 1e-12.
    pub fn l2_project(&self, f: &dyn Fn(Point) -> f64) -> Result<StateVector, FemError> {
        let ndof = self.dof_count();
        let mut load = vec![0.0; ndof];
        for element in self.mesh.elements() {
            match *element {
                Element::Line([a, b]) => {
                    let xa = self.mesh.nodes[a][0];
                    let xb = self.mesh.nodes[b][0];
                    let h = xb - xa;
                    let mid = 0.5 * (xa + xb);
                    let off = 0.5 * h / 3.0f64.sqrt();
                    for xq in [mid - off, mid + off] {
                        let w = 0.5 * h;
                        let fv = f([xq, 0.0]);
                        // Hat values at the quadrature point.
                        let la = (xb - xq) / h;
                        let lb = (xq - xa) / h;
                        if let Some(da) = self.mesh.interior_index[a] {
                            load[da] += w * fv * la;
                        }
                        if let Some(db) = self.mesh.interior_index[b] {
                            load[db] += w * fv * lb;
                        }
                    }
                }
                Element::Triangle([a, b, c]) => {
                    let p = [self.mesh.nodes[a], self.mesh.nodes[b], self.mesh.nodes[c]];
                    let area = triangle_area(p);
                    // Edge-midpoint rule, exact for quadratics.
                    let mids = [
                        [0.5 * (p[0][0] + p[1][0]), 0.5 * (p[0][1] + p[1][1])],
                        [0.5 * (p[1][0] + p[2][0]), 0.5 * (p[1][1] + p[2][1])],
                        [0.5 * (p[2][0] + p[0][0]), 0.5 * (p[2][1] + p[0][1])],
                    ];
                    // Barycentric values of the three hats at the midpoints.
                    let bary = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
                    let ids = [a, b, c];
                    for (q, mid) in mids.iter().enumerate() {
                        let w = area / 3.0;
                        let fv = f(*mid);
                        for (l, &ni) in ids.iter().enumerate() {
                            if let Some(di) = self.mesh.interior_index[ni] {
                                load[di] += w * fv * bary[q][l];
                            }
                        }
                    }
                }
            }
        }
        let mut x = vec![0.0; ndof];
        let diag = self.combined_diag(0.0);
        self.pcg(&self.mass_vals, &diag, &load, &mut x, 1e-12)?;
        Ok(StateVector::from_vec(x))
    }

    /// Resolvent solve: returns x with `(M + alpha K) x = M v`.
    ///
    /// Conjugate gradients with Jacobi preconditioning, relative residual
    /// 1e-10, iteration cap 10 * dof. `alpha = 0` returns `v` unchanged.
    pub fn resolvent_solve(&self, alpha: f64, v: &StateVector) -> Result<StateVector, FemError> {
        self.check_len(v)?;
        if alpha < 0.0 {
            return Err(FemError::NegativeAlpha(alpha));
        }
        if alpha == 0.0 {
            return Ok(v.clone());
        }
        let vals = self.combined_vals(alpha);
        let diag = self.combined_diag(alpha);
        let mut rhs = vec![0.0; v.len()];
        self.mass_matvec(v.as_slice(), &mut rhs);
        // The solution is a damped version of v, so v is a good initial guess.
        let mut x = v.as_slice().to_vec();
        self.pcg(&vals, &diag, &rhs, &mut x, 1e-10)?;
        Ok(StateVector::from_vec(x))
    }

    fn combined_vals(&self, alpha: f64) -> Vec<f64> {
        self.mass_vals
            .iter()
            .zip(&self.stiff_vals)
            .map(|(m, k)| m + alpha * k)
            .collect()
    }

    fn combined_diag(&self, alpha: f64) -> Vec<f64> {
        (0..self.dof_count())
            .map(|i| self.entry(&self.mass_vals, i, i) + alpha * self.entry(&self.stiff_vals, i, i))
            .collect()
    }

    /// Jacobi-preconditioned CG on the shared pattern. Overwrites `x`
    /// (initial guess in, solution out).
    fn pcg(
        &self,
        vals: &[f64],
        diag: &[f64],
        b: &[f64],
        x: &mut [f64],
        rtol: f64,
    ) -> Result<(), FemError> {
        let n = b.len();
        let nb = norm2(b);
        if nb == 0.0 {
            x.fill(0.0);
            return Ok(());
        }
        let cap = 10 * n;
        let mut r = vec![0.0; n];
        let mut ap = vec![0.0; n];
        self.matvec(vals, x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut iterations = 0usize;
        loop {
            if norm2(&r) <= rtol * nb {
                // Guard against recurrence drift with a true-residual check.
                self.matvec(vals, x, &mut ap);
                let mut true_r = 0.0;
                for i in 0..n {
                    let d = b[i] - ap[i];
                    true_r += d * d;
                }
                let true_r = true_r.sqrt();
                if true_r <= rtol * nb {
                    return Ok(());
                }
                for i in 0..n {
                    r[i] = b[i] - ap[i];
                }
                for i in 0..n {
                    z[i] = r[i] / diag[i];
                }
                p.copy_from_slice(&z);
                rz = dot(&r, &z);
            }
            if iterations >= cap {
                return Err(FemError::SolverStalled {
                    residual: norm2(&r) / nb,
                    tol: rtol,
                    iterations,
                });
            }
            self.matvec(vals, &p, &mut ap);
            let pap = dot(&p, &ap);
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
    }
}

fn triangle_area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
        .abs()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Copies nodal values from coinciding fine-mesh nodes onto the coarse mesh.
/// The fine mesh must be a power-of-two refinement of the coarse one.
pub fn restrict_to_coarse(
    fine: &FemSpace,
    coarse: &FemSpace,
    v: &StateVector,
) -> Result<StateVector, FemError> {
    if fine.mesh.dim != coarse.mesh.dim {
        return Err(FemError::DimMismatch(fine.mesh.dim, coarse.mesh.dim));
    }
    fine.check_len(v)?;
    let nf = fine.mesh.cells_per_side;
    let nc = coarse.mesh.cells_per_side;
    if nf % nc != 0 || !(nf / nc).is_power_of_two() {
        return Err(FemError::NotNested {
            coarse: nc,
            fine: nf,
        });
    }
    let ratio = nf / nc;
    let mut out = vec![0.0; coarse.dof_count()];
    match coarse.mesh.dim {
        Dim::One => {
            for (dof, out_i) in out.iter_mut().enumerate() {
                let coarse_node = dof + 1;
                let fine_node = coarse_node * ratio;
                let fine_dof = fine.mesh.interior_index[fine_node].expect("interior stays interior");
                *out_i = v.as_slice()[fine_dof];
            }
        }
        Dim::Two => {
            let side_f = nf + 1;
            for (dof, out_i) in out.iter_mut().enumerate() {
                let iy = dof / (nc - 1) + 1;
                let ix = dof % (nc - 1) + 1;
                let fine_id = (iy * ratio) * side_f + ix * ratio;
                let fine_dof = fine.mesh.interior_index[fine_id].expect("interior stays interior");
                *out_i = v.as_slice()[fine_dof];
            }
        }
    }
    Ok(StateVector::from_vec(out))
}

/// Reusable solver for a fixed resolvent shift, built once per time level.
///
/// In 1D the shifted matrix is tridiagonal and a cached LDL^T factorization
/// applies; elsewhere this falls back to the per-call CG solve. `alpha = 0`
/// is the identity on the space.
#[derive(Clone, Debug)]
pub struct ResolventCache {
    alpha: f64,
    kind: CacheKind,
}

#[derive(Clone, Debug)]
enum CacheKind {
    Identity,
    Tridiag { sub: Vec<f64>, diag_hat: Vec<f64> },
    Iterative,
}

impl ResolventCache {
    pub fn new(space: &FemSpace, alpha: f64) -> Result<Self, FemError> {
        if alpha < 0.0 {
            return Err(FemError::NegativeAlpha(alpha));
        }
        if alpha == 0.0 {
            return Ok(ResolventCache {
                alpha,
                kind: CacheKind::Identity,
            });
        }
        if space.mesh.dim == Dim::One {
            let n = space.dof_count();
            let mut diag_hat = vec![0.0; n];
            let mut sub = vec![0.0; n.saturating_sub(1)];
            for i in 0..n {
                let d = space.mass_entry(i, i) + alpha * space.stiffness_entry(i, i);
                if i == 0 {
                    diag_hat[0] = d;
                } else {
                    let e = space.mass_entry(i, i - 1) + alpha * space.stiffness_entry(i, i - 1);
                    let l = e / diag_hat[i - 1];
                    sub[i - 1] = l;
                    diag_hat[i] = d - l * e;
                }
            }
            Ok(ResolventCache {
                alpha,
                kind: CacheKind::Tridiag { sub, diag_hat },
            })
        } else {
            Ok(ResolventCache {
                alpha,
                kind: CacheKind::Iterative,
            })
        }
    }

    /// CG-only variant, matching `FemSpace::resolvent_solve` exactly.
    pub fn iterative(alpha: f64) -> Result<Self, FemError> {
        if alpha < 0.0 {
            return Err(FemError::NegativeAlpha(alpha));
        }
        Ok(ResolventCache {
            alpha,
            kind: if alpha == 0.0 {
                CacheKind::Identity
            } else {
                CacheKind::Iterative
            },
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&self, space: &FemSpace, v: &StateVector) -> Result<StateVector, FemError> {
        space.check_len(v)?;
        match &self.kind {
            CacheKind::Identity => Ok(v.clone()),
            CacheKind::Iterative => space.resolvent_solve(self.alpha, v),
            CacheKind::Tridiag { sub, diag_hat } => {
                let n = v.len();
                let mut y = vec![0.0; n];
                space.mass_matvec(v.as_slice(), &mut y);
                // Forward substitution L y, then D, then L^T.
                for i in 1..n {
                    y[i] -= sub[i - 1] * y[i - 1];
                }
                for i in 0..n {
                    y[i] /= diag_hat[i];
                }
                for i in (0..n.saturating_sub(1)).rev() {
                    y[i] -= sub[i] * y[i + 1];
                }
                Ok(StateVector::from_vec(y))
            }
        }
    }
}
