//! Structured grids and masked finite-difference calculus.
//!
//! Three grid kinds cover every solver in the crate: a 1D radial line (soliton
//! profiles), a 2D Cartesian plane, and the axisymmetric (r, z) half-plane.
//! Fields are node-centered; a per-node mask splits nodes into interior,
//! boundary (Dirichlet collar) and outside. All stencils are second-order
//! central differences. At the symmetry axis r = 0 scalar fields are reflected
//! evenly, so the radial derivative vanishes there and r-mixed second
//! derivatives are zero.

use std::io::{BufRead, Write};

use crate::error::Error;
use crate::Result;

/// Grid flavor. `Radial` is a 1D line in the radial coordinate (node 0 may sit
/// on the axis itself or half a cell off it, see `Grid::radial`). `AxisymRz`
/// is the (r, z) half-plane of an axisymmetric 3D domain with r = 0 as axis0's
/// first grid line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Radial,
    Cartesian2d,
    AxisymRz,
}

/// Node address as (i, j) with i along axis0 (fast axis) and j along axis1.
pub type NodeId = (usize, usize);

/// Mask class of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    Boundary,
    Outside,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Boundary => "boundary",
            NodeClass::Outside => "outside",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "interior" => Some(NodeClass::Interior),
            "boundary" => Some(NodeClass::Boundary),
            "outside" => Some(NodeClass::Outside),
            _ => None,
        }
    }
}

/// A structured grid. Node (i, j) sits at
/// `(origin[0] + i * spacing[0], origin[1] + j * spacing[1])`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub kind: GridKind,
    /// Node counts per axis; radial grids store `[n, 1]`.
    pub shape: [usize; 2],
    pub spacing: [f64; 2],
    pub origin: [f64; 2],
}

impl Grid {
    /// 1D radial grid over `[0, rmax]`. With `axis_node = true` node 0 sits
    /// exactly on r = 0 (needed for second-order axis limits); with `false`
    /// the nodes are cell-centered (`r_i = (i + 1/2) dr`), which makes the
    /// interior-node sum an exact midpoint quadrature of `[0, rmax]`.
    pub fn radial(n: usize, rmax: f64, axis_node: bool) -> Result<Self> {
        if n < 3 || rmax <= 0.0 {
            return Err(Error::Parameter(format!(
                "radial grid needs n >= 3 and rmax > 0, got n = {n}, rmax = {rmax}"
            )));
        }
        let (dr, origin) = if axis_node {
            (rmax / (n - 1) as f64, 0.0)
        } else {
            let dr = rmax / n as f64;
            (dr, 0.5 * dr)
        };
        Ok(Grid {
            kind: GridKind::Radial,
            shape: [n, 1],
            spacing: [dr, 1.0],
            origin: [origin, 0.0],
        })
    }

    /// 2D Cartesian grid over `[x0, x0 + (nx-1) dx] x [y0, y0 + (ny-1) dy]`.
    pub fn cartesian2d(shape: [usize; 2], lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        if shape[0] < 3 || shape[1] < 3 {
            return Err(Error::Parameter("cartesian grid needs >= 3 nodes per axis".into()));
        }
        if upper[0] <= lower[0] || upper[1] <= lower[1] {
            return Err(Error::Parameter("grid extents must be nonempty".into()));
        }
        let spacing = [
            (upper[0] - lower[0]) / (shape[0] - 1) as f64,
            (upper[1] - lower[1]) / (shape[1] - 1) as f64,
        ];
        Ok(Grid { kind: GridKind::Cartesian2d, shape, spacing, origin: lower })
    }

    /// Axisymmetric (r, z) half-plane grid with the axis r = 0 included as the
    /// first grid line of axis0.
    pub fn axisym(shape: [usize; 2], rmax: f64, zrange: [f64; 2]) -> Result<Self> {
        if shape[0] < 3 || shape[1] < 3 {
            return Err(Error::Parameter("axisym grid needs >= 3 nodes per axis".into()));
        }
        if rmax <= 0.0 || zrange[1] <= zrange[0] {
            return Err(Error::Parameter("axisym grid extents must be nonempty".into()));
        }
        let spacing = [rmax / (shape[0] - 1) as f64, (zrange[1] - zrange[0]) / (shape[1] - 1) as f64];
        Ok(Grid { kind: GridKind::AxisymRz, shape, spacing, origin: [0.0, zrange[0]] })
    }

    pub fn num_nodes(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    #[inline]
    pub fn linear(&self, node: NodeId) -> usize {
        node.1 * self.shape[0] + node.0
    }

    #[inline]
    pub fn coords(&self, node: NodeId) -> [f64; 2] {
        [
            self.origin[0] + node.0 as f64 * self.spacing[0],
            self.origin[1] + node.1 as f64 * self.spacing[1],
        ]
    }

    /// Largest spacing; the resolution scale used by regularity thresholds.
    pub fn max_spacing(&self) -> f64 {
        match self.kind {
            GridKind::Radial => self.spacing[0],
            _ => self.spacing[0].max(self.spacing[1]),
        }
    }

    /// Cell measure for node-based quadrature (dr, dx*dy, dr*dz).
    pub fn cell_measure(&self) -> f64 {
        match self.kind {
            GridKind::Radial => self.spacing[0],
            _ => self.spacing[0] * self.spacing[1],
        }
    }

    /// True when axis0 reflects evenly across r = 0. Radial grids always do
    /// (either through the axis node or the staggered mirror); Cartesian never.
    fn reflects_at_axis(&self) -> bool {
        matches!(self.kind, GridKind::Radial | GridKind::AxisymRz)
    }

    /// Whether node 0 of axis0 sits exactly on r = 0.
    pub fn has_axis_node(&self) -> bool {
        self.reflects_at_axis() && self.origin[0] == 0.0
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let nx = self.shape[0];
        let ny = self.shape[1];
        (0..ny).flat_map(move |j| (0..nx).map(move |i| (i, j)))
    }
}

/// A real-valued field on a grid with a mask layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Vec<NodeClass>,
}

/// First derivatives per axis at a node.
pub type Gradient = [f64; 2];
/// Symmetric second-derivative matrix `[[f_00, f_01], [f_01, f_11]]`.
pub type Hessian = [[f64; 2]; 2];

impl ScalarField {
    /// Field of zeros with every node interior.
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.num_nodes();
        ScalarField { grid, values: vec![0.0; n], mask: vec![NodeClass::Interior; n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut field = ScalarField::zeros(grid);
        for node in field.grid.iter_nodes() {
            let x = field.grid.coords(node);
            let k = field.grid.linear(node);
            field.values[k] = f(x);
        }
        field
    }

    #[inline]
    pub fn value(&self, node: NodeId) -> f64 {
        self.values[self.grid.linear(node)]
    }

    #[inline]
    pub fn class(&self, node: NodeId) -> NodeClass {
        self.mask[self.grid.linear(node)]
    }

    #[inline]
    pub fn set(&mut self, node: NodeId, v: f64) {
        let k = self.grid.linear(node);
        self.values[k] = v;
    }

    pub fn interior_nodes(&self) -> Vec<NodeId> {
        self.grid
            .iter_nodes()
            .filter(|&n| self.class(n) == NodeClass::Interior)
            .collect()
    }

    /// Checks the type invariants: finite values on interior/boundary nodes,
    /// mask vector of the right length.
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.num_nodes() || self.mask.len() != self.values.len() {
            return Err(Error::GridMismatch);
        }
        for node in self.grid.iter_nodes() {
            let k = self.grid.linear(node);
            if self.mask[k] != NodeClass::Outside && !self.values[k].is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value at {:?} ({})",
                    node,
                    self.mask[k].as_str()
                )));
            }
        }
        Ok(())
    }

    /// Fetch a stencil neighbor at offset (di, dj), applying even reflection
    /// across r = 0 on radial/axisym grids. Returns the value, or an error if
    /// the neighbor is outside the mask or the grid.
    #[inline]
    fn neighbor(&self, node: NodeId, di: isize, dj: isize) -> Result<f64> {
        let (i, j) = (node.0 as isize + di, node.1 as isize + dj);
        let i = if i < 0 && self.grid.reflects_at_axis() {
            // even reflection: with an axis node, -1 mirrors to +1; staggered,
            // -1 mirrors to 0
            if self.grid.has_axis_node() { -i } else { -i - 1 }
        } else {
            i
        };
        if i < 0 || j < 0 || i >= self.grid.shape[0] as isize || j >= self.grid.shape[1] as isize {
            return Err(Error::Stencil(node.0, node.1));
        }
        let nb = (i as usize, j as usize);
        if self.class(nb) == NodeClass::Outside {
            return Err(Error::Stencil(nb.0, nb.1));
        }
        Ok(self.value(nb))
    }

    /// Second-order central gradient. On radial/axisym grids the radial
    /// derivative at r = 0 is exactly 0 by even symmetry.
    pub fn gradient(&self, node: NodeId) -> Result<Gradient> {
        let g = &self.grid;
        let on_axis = g.has_axis_node() && node.0 == 0;
        let d0 = if on_axis {
            0.0
        } else {
            (self.neighbor(node, 1, 0)? - self.neighbor(node, -1, 0)?) / (2.0 * g.spacing[0])
        };
        let d1 = if g.shape[1] == 1 {
            0.0
        } else {
            (self.neighbor(node, 0, 1)? - self.neighbor(node, 0, -1)?) / (2.0 * g.spacing[1])
        };
        Ok([d0, d1])
    }

    /// Second-order central Hessian (full 3x3 stencil). At r = 0 the mixed
    /// derivative vanishes and f_rr uses the even-reflected second difference
    /// `2 (f(dr) - f(0)) / dr^2`.
    pub fn hessian(&self, node: NodeId) -> Result<Hessian> {
        let g = &self.grid;
        let h0 = g.spacing[0];
        let h1 = g.spacing[1];
        let c = self.value(node);
        let on_axis = g.has_axis_node() && node.0 == 0;

        let f00 = if on_axis {
            2.0 * (self.neighbor(node, 1, 0)? - c) / (h0 * h0)
        } else {
            (self.neighbor(node, 1, 0)? - 2.0 * c + self.neighbor(node, -1, 0)?) / (h0 * h0)
        };
        if g.shape[1] == 1 {
            return Ok([[f00, 0.0], [0.0, 0.0]]);
        }
        let f11 = (self.neighbor(node, 0, 1)? - 2.0 * c + self.neighbor(node, 0, -1)?) / (h1 * h1);
        let f01 = if on_axis {
            0.0
        } else {
            (self.neighbor(node, 1, 1)? - self.neighbor(node, 1, -1)?
                - self.neighbor(node, -1, 1)?
                + self.neighbor(node, -1, -1)?)
                / (4.0 * h0 * h1)
        };
        Ok([[f00, f01], [f01, f11]])
    }

    /// CSV serialization: header `axis0,axis1,value,mask`, one row per node in
    /// row-major (j outer, i inner) order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "axis0,axis1,value,mask")?;
        for node in self.grid.iter_nodes() {
            let [x, y] = self.grid.coords(node);
            let k = self.grid.linear(node);
            writeln!(w, "{},{},{},{}", x, y, self.values[k], self.mask[k].as_str())?;
        }
        Ok(())
    }

    /// Reads a field back from `write_csv` output onto the given grid.
    pub fn read_csv<R: BufRead>(grid: Grid, r: R) -> Result<Self> {
        let mut field = ScalarField::zeros(grid);
        let mut rows = 0usize;
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            if ln == 0 {
                if line.trim() != "axis0,axis1,value,mask" {
                    return Err(Error::Config(format!("unexpected CSV header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Config(format!("bad CSV row {ln}: {line}")));
            }
            let value: f64 = cols[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad value on row {ln}")))?;
            let class = NodeClass::parse(cols[3])
                .ok_or_else(|| Error::Config(format!("bad mask on row {ln}")))?;
            if rows >= field.values.len() {
                return Err(Error::Config("CSV has more rows than grid nodes".into()));
            }
            field.values[rows] = value;
            field.mask[rows] = class;
            rows += 1;
        }
        if rows != field.values.len() {
            return Err(Error::Config(format!(
                "CSV has {rows} rows, grid expects {}",
                field.values.len()
            )));
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane_grid(n: usize) -> Grid {
        Grid::cartesian2d([n, n], [-1.0, -1.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn gradient_exact_on_affine() {
        let f = ScalarField::from_fn(plane_grid(17), |[x, y]| 3.0 * x + 2.0 * y);
        for node in f.grid.iter_nodes() {
            if node.0 == 0 || node.1 == 0 || node.0 == 16 || node.1 == 16 {
                continue;
            }
            let g = f.gradient(node).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-13 && (g[1] - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_zero_on_constant() {
        let f = ScalarField::from_fn(plane_grid(9), |_| 7.5);
        let g = f.gradient((4, 4)).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn hessian_exact_on_quadratic() {
        let f = ScalarField::from_fn(plane_grid(17), |[x, y]| x * x + 3.0 * x * y);
        let h = f.hessian((8, 8)).unwrap();
        assert!((h[0][0] - 2.0).abs() < 1e-12);
        assert!((h[0][1] - 3.0).abs() < 1e-12);
        assert!((h[1][0] - 3.0).abs() < 1e-12);
        assert!(h[1][1].abs() < 1e-12);
    }

    #[test]
    fn hessian_zero_on_affine() {
        let f = ScalarField::from_fn(plane_grid(9), |[x, y]| 0.5 * x - 2.0 * y + 1.0);
        let h = f.hessian((4, 4)).unwrap();
        for row in h {
            for v in row {
                assert!(v.abs() < 1e-13);
            }
        }
    }

    /// Sup-norm error of gradient and Hessian on sin(x)cos(y) across dyadic
    /// refinements; observed order must be >= 1.8.
    #[test]
    fn refinement_order_of_stencils() {
        let exact_g = |x: f64, y: f64| [x.cos() * y.cos(), -x.sin() * y.sin()];
        let exact_h = |x: f64, y: f64| {
            [
                [-x.sin() * y.cos(), -x.cos() * y.sin()],
                [-x.cos() * y.sin(), -x.sin() * y.cos()],
            ]
        };
        let mut errs_g = Vec::new();
        let mut errs_h = Vec::new();
        for n in [33usize, 65, 129] {
            let f = ScalarField::from_fn(plane_grid(n), |[x, y]| x.sin() * y.cos());
            let mut eg: f64 = 0.0;
            let mut eh: f64 = 0.0;
            for node in f.grid.iter_nodes() {
                if node.0 == 0 || node.1 == 0 || node.0 == n - 1 || node.1 == n - 1 {
                    continue;
                }
                let [x, y] = f.grid.coords(node);
                let g = f.gradient(node).unwrap();
                let h = f.hessian(node).unwrap();
                let ge = exact_g(x, y);
                let he = exact_h(x, y);
                eg = eg.max((g[0] - ge[0]).abs()).max((g[1] - ge[1]).abs());
                for a in 0..2 {
                    for b in 0..2 {
                        eh = eh.max((h[a][b] - he[a][b]).abs());
                    }
                }
            }
            errs_g.push(eg);
            errs_h.push(eh);
        }
        for w in [&errs_g, &errs_h] {
            for k in 0..w.len() - 1 {
                let order = (w[k] / w[k + 1]).log2();
                assert!(order >= 1.8, "observed order {order} from errors {w:?}");
            }
        }
    }

    #[test]
    fn stencil_error_identifies_outside_node() {
        let mut f = ScalarField::from_fn(plane_grid(9), |[x, y]| x + y);
        let k = f.grid.linear((5, 4));
        f.mask[k] = NodeClass::Outside;
        match f.gradient((4, 4)) {
            Err(Error::Stencil(5, 4)) => {}
            other => panic!("expected stencil error at (5,4), got {other:?}"),
        }
        // the Hessian's corner stencil must also refuse
        let mut f2 = ScalarField::from_fn(plane_grid(9), |[x, y]| x + y);
        let k2 = f2.grid.linear((5, 5));
        f2.mask[k2] = NodeClass::Outside;
        assert!(f2.hessian((4, 4)).is_err());
        assert!(f2.gradient((4, 4)).is_ok());
    }

    #[test]
    fn axis_symmetry_on_axisym_grid() {
        let g = Grid::axisym([33, 33], 1.0, [-1.0, 1.0]).unwrap();
        // even field r^2 + z: f_r(0) = 0, f_rr(0) = 2, f_rz(0) = 0
        let f = ScalarField::from_fn(g, |[r, z]| r * r + z);
        let grad = f.gradient((0, 16)).unwrap();
        assert_eq!(grad[0], 0.0);
        assert!((grad[1] - 1.0).abs() < 1e-12);
        let h = f.hessian((0, 16)).unwrap();
        assert!((h[0][0] - 2.0).abs() < 1e-10);
        assert_eq!(h[0][1], 0.0);
    }

    #[test]
    fn radial_grid_layouts() {
        let g = Grid::radial(11, 1.0, true).unwrap();
        assert_eq!(g.coords((0, 0))[0], 0.0);
        assert!(g.has_axis_node());
        let gs = Grid::radial(10, 1.0, false).unwrap();
        assert!(!gs.has_axis_node());
        assert!((gs.coords((0, 0))[0] - 0.05).abs() < 1e-15);
        // staggered mirror: gradient of an even quadratic at the first node
        // falls back to the one-sided mirror formula (first-order there)
        let f = ScalarField::from_fn(gs, |[r, _]| r * r);
        let d = f.gradient((0, 0)).unwrap();
        assert!(d[0].is_finite());
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::cartesian2d([5, 4], [0.0, 0.0], [1.0, 1.0]).unwrap();
        let mut f = ScalarField::from_fn(g.clone(), |[x, y]| x * y - 0.25);
        f.mask[3] = NodeClass::Boundary;
        f.mask[7] = NodeClass::Outside;
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ScalarField::read_csv(g, std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(f, back);
    }

    proptest! {
        /// Affine fields are differentiated exactly at any interior node of
        /// any modest grid, for random coefficients.
        #[test]
        fn affine_fields_exact(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                               i in 1usize..14, j in 1usize..14) {
            let f = ScalarField::from_fn(plane_grid(16), |[x, y]| a * x + b * y + c);
            let g = f.gradient((i, j)).unwrap();
            prop_assert!((g[0] - a).abs() < 1e-12);
            prop_assert!((g[1] - b).abs() < 1e-12);
            let h = f.hessian((i, j)).unwrap();
            prop_assert!(h[0][0].abs() < 1e-10 && h[0][1].abs() < 1e-10 && h[1][1].abs() < 1e-10);
        }
    }
}
