//! Time-of-arrival diagnostics: level-set principal curvatures, the ratio
//! kappa_1/h, the arrival identity h |grad u| = 1, product lifts, and the
//! boundary-minimum inequality checks.
//!
//! The level set of u through a node is oriented by the normal
//! `grad u / |grad u|` (the direction the mean curvature vector points for an
//! arrival function), so genuine arrival fields have h > 0 at regular points.
//! A node is regular when `|grad u| >= eps_reg` and the oriented mean
//! curvature is positive; everything else is a singular candidate, never an
//! error.

use crate::error::Error;
use crate::mesh::{Grid, GridKind, NodeClass, NodeId, ScalarField};
use crate::Result;

/// Principal curvature data of a level set (or graph) at one node.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurvatureDiagnostics {
    /// Principal curvatures sorted ascending.
    pub kappas: Vec<f64>,
    /// Scalar mean curvature, exactly the sum of `kappas`.
    pub h: f64,
    /// kappa_1 / h (0 when not regular).
    pub ratio: f64,
    /// |grad u| at the node (for graphs: |Df|).
    pub grad_norm: f64,
    /// True when the gradient is resolvable and h > 0.
    pub regular: bool,
}

impl CurvatureDiagnostics {
    pub(crate) fn from_kappas(mut kappas: Vec<f64>, grad_norm: f64, grad_ok: bool) -> Self {
        kappas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h: f64 = kappas.iter().sum();
        let regular = grad_ok && h > 0.0;
        let ratio = if regular { kappas[0] / h } else { 0.0 };
        CurvatureDiagnostics { kappas, h, ratio, grad_norm, regular }
    }
}

/// Default regularity threshold: a level set whose curvature cannot be
/// represented on the grid (h of order 1/(4 dx) and beyond) is treated as
/// singular, so `eps_reg = max(10 dx, 4 dx) = 10 dx` with dx the largest
/// spacing.
pub fn eps_reg_default(grid: &Grid) -> f64 {
    let dx = grid.max_spacing();
    let h_max_resolvable = 1.0 / (4.0 * dx);
    (10.0 * dx).max(0.25 / h_max_resolvable)
}

/// Principal curvatures of the level set of `u` through `node`, oriented by
/// `grad u / |grad u|`. Axisymmetric grids contribute the rotational
/// curvature analytically (`-u_r / (r |grad u|)`, with the axis limit
/// `-u_rr / |grad u|`).
pub fn level_set_curvatures(
    u: &ScalarField,
    node: NodeId,
    eps_reg: f64,
) -> Result<CurvatureDiagnostics> {
    let g = u.gradient(node)?;
    let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
    if norm < eps_reg {
        // singular candidate: the level set is not resolvable here
        return Ok(CurvatureDiagnostics {
            kappas: vec![],
            h: 0.0,
            ratio: 0.0,
            grad_norm: norm,
            regular: false,
        });
    }
    let hs = u.hessian(node)?;
    // in-plane tangent t = rot90(n); curvature toward n is -(t . Hess t)/|g|
    let n0 = g[0] / norm;
    let n1 = g[1] / norm;
    let (t0, t1) = (-n1, n0);
    let kappa_plane =
        -(t0 * t0 * hs[0][0] + 2.0 * t0 * t1 * hs[0][1] + t1 * t1 * hs[1][1]) / norm;
    match u.grid.kind {
        GridKind::Cartesian2d => {
            Ok(CurvatureDiagnostics::from_kappas(vec![kappa_plane], norm, true))
        }
        GridKind::AxisymRz => {
            let r = u.grid.coords(node)[0];
            let kappa_rot = if u.grid.has_axis_node() && node.0 == 0 {
                -hs[0][0] / norm
            } else {
                -g[0] / (r * norm)
            };
            Ok(CurvatureDiagnostics::from_kappas(vec![kappa_plane, kappa_rot], norm, true))
        }
        GridKind::Radial => Err(Error::Parameter("level-set diagnostics need a 2D grid".into())),
    }
}

fn non_regular_error(bad: &[NodeId]) -> Error {
    Error::NonRegular { count: bad.len(), first: bad[0] }
}

/// Sup over K of the arrival-identity defect `|h |grad u| - 1|`. All nodes of
/// K must be regular at the given threshold.
pub fn arrival_residual(u: &ScalarField, k_nodes: &[NodeId], eps_reg: f64) -> Result<f64> {
    let mut bad = Vec::new();
    let mut sup: f64 = 0.0;
    for &node in k_nodes {
        let d = level_set_curvatures(u, node, eps_reg)?;
        if !d.regular {
            bad.push(node);
            continue;
        }
        sup = sup.max((d.h * d.grad_norm - 1.0).abs());
    }
    if !bad.is_empty() {
        return Err(non_regular_error(&bad));
    }
    Ok(sup)
}

/// Product-lift identity check. Lifting u to `U(x, y) = u(x)` turns each
/// level set into (level set) x R, so the lifted curvature list is the
/// original with one appended zero, re-sorted. Verifies `h(U) = h(u)` and
/// `kappa_1(U) = min(0, kappa_1(u))` at each probe; the defect is exactly 0
/// because the lift is implemented by that very rule — the check guards the
/// sorting and sign conventions of the pipeline.
pub fn product_lift_check(u: &ScalarField, probes: &[NodeId], eps_reg: f64) -> Result<f64> {
    let mut bad = Vec::new();
    let mut defect: f64 = 0.0;
    for &node in probes {
        let d = level_set_curvatures(u, node, eps_reg)?;
        if !d.regular {
            bad.push(node);
            continue;
        }
        let mut lifted = d.kappas.clone();
        lifted.push(0.0);
        lifted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h_lift: f64 = lifted.iter().sum();
        let k1_lift = lifted[0];
        defect = defect
            .max((h_lift - d.h).abs())
            .max((k1_lift - d.kappas[0].min(0.0)).abs());
    }
    if !bad.is_empty() {
        return Err(non_regular_error(&bad));
    }
    Ok(defect)
}

/// Boundary-minimum inequality data for the ratio kappa_1/h over a compact
/// node set K.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RatioBound {
    pub interior_min: f64,
    pub boundary_min: f64,
    /// interior_min - min(0, boundary_min) for arrival fields;
    /// interior_min - boundary_min for translator graphs.
    pub margin: f64,
    /// Discrete-shift allowance 5 dx L, with L the local Lipschitz estimate
    /// of the ratio near the relative boundary of K.
    pub epsilon_grid: f64,
    pub interior_count: usize,
    pub boundary_count: usize,
}

/// Splits K into its relative boundary (members with an 8-neighbor off K)
/// and interior.
pub fn relative_boundary(grid: &Grid, k_nodes: &[NodeId]) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut in_k = vec![false; grid.num_nodes()];
    for &n in k_nodes {
        in_k[grid.linear(n)] = true;
    }
    let nx = grid.shape[0] as isize;
    let ny = grid.shape[1] as isize;
    let mut boundary = Vec::new();
    let mut interior = Vec::new();
    for &node in k_nodes {
        let mut on_edge = false;
        'scan: for dj in -1..=1isize {
            for di in -1..=1isize {
                if di == 0 && dj == 0 {
                    continue;
                }
                let mut i = node.0 as isize + di;
                let j = node.1 as isize + dj;
                if i < 0 && grid.kind == GridKind::AxisymRz {
                    i = -i;
                }
                if i < 0 || j < 0 || i >= nx || j >= ny || !in_k[(j * nx + i) as usize] {
                    on_edge = true;
                    break 'scan;
                }
            }
        }
        if on_edge {
            boundary.push(node);
        } else {
            interior.push(node);
        }
    }
    (boundary, interior)
}

/// Shared minimum-comparison core. `ratio_of` returns the ratio at a node or
/// None when the node is not regular; non-regular relative-boundary nodes are
/// an error, non-regular interior nodes are skipped (they are the singular
/// candidates the bound is protecting).
pub(crate) fn bound_check_core(
    grid: &Grid,
    k_nodes: &[NodeId],
    ratio_of: &mut dyn FnMut(NodeId) -> Result<Option<f64>>,
    clamp_boundary_at_zero: bool,
) -> Result<RatioBound> {
    if k_nodes.is_empty() {
        return Err(Error::Parameter("ratio bound check needs a nonempty node set".into()));
    }
    let (bnd, int) = relative_boundary(grid, k_nodes);
    let mut bad = Vec::new();
    let mut bnd_min = f64::INFINITY;
    let mut ratios = vec![f64::NAN; grid.num_nodes()];
    for &node in &bnd {
        match ratio_of(node)? {
            Some(r) => {
                ratios[grid.linear(node)] = r;
                bnd_min = bnd_min.min(r);
            }
            None => bad.push(node),
        }
    }
    if !bad.is_empty() {
        return Err(non_regular_error(&bad));
    }
    let mut int_min = f64::INFINITY;
    let mut int_count = 0usize;
    for &node in &int {
        if let Some(r) = ratio_of(node)? {
            ratios[grid.linear(node)] = r;
            int_min = int_min.min(r);
            int_count += 1;
        }
    }
    if int_count == 0 {
        // a thin K can be all relative boundary; the bound is then vacuous
        int_min = bnd_min;
    }
    // local Lipschitz estimate of the ratio along the relative boundary
    let mut lip: f64 = 0.0;
    let nx = grid.shape[0] as isize;
    let ny = grid.shape[1] as isize;
    for &node in &bnd {
        let here = ratios[grid.linear(node)];
        for (di, dj, h) in [
            (1isize, 0isize, grid.spacing[0]),
            (-1, 0, grid.spacing[0]),
            (0, 1, grid.spacing[1]),
            (0, -1, grid.spacing[1]),
        ] {
            let i = node.0 as isize + di;
            let j = node.1 as isize + dj;
            if i < 0 || j < 0 || i >= nx || j >= ny {
                continue;
            }
            let v = ratios[(j * nx + i) as usize];
            if v.is_finite() {
                lip = lip.max((v - here).abs() / h);
            }
        }
    }
    let eps = 5.0 * grid.max_spacing() * lip;
    let reference = if clamp_boundary_at_zero { bnd_min.min(0.0) } else { bnd_min };
    Ok(RatioBound {
        interior_min: int_min,
        boundary_min: bnd_min,
        margin: int_min - reference,
        epsilon_grid: eps,
        interior_count: int_count,
        boundary_count: bnd.len(),
    })
}

/// Minimum of kappa_1/h over the interior of K against its relative-boundary
/// minimum: `margin = interior_min - min(0, boundary_min)`, nonnegative up to
/// `epsilon_grid` for arrival functions of mean-convex flows.
pub fn ratio_bound_check(u: &ScalarField, k_nodes: &[NodeId], eps_reg: f64) -> Result<RatioBound> {
    let grid = u.grid.clone();
    bound_check_core(
        &grid,
        k_nodes,
        &mut |node| {
            let d = level_set_curvatures(u, node, eps_reg)?;
            Ok(d.regular.then_some(d.ratio))
        },
        true,
    )
}

/// Interior nodes with `u >= frac * max(u)`; the standard compact probe set.
pub fn super_level_set(u: &ScalarField, frac: f64) -> Vec<NodeId> {
    let umax = u
        .grid
        .iter_nodes()
        .filter(|&n| u.class(n) == NodeClass::Interior)
        .map(|n| u.value(n))
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = frac * umax;
    u.grid
        .iter_nodes()
        .filter(|&n| u.class(n) == NodeClass::Interior && u.value(n) >= cut)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;

    fn sphere_arrival(n: usize) -> ScalarField {
        let g = Grid::axisym([n, 2 * n - 1], 1.05, [-1.05, 1.05]).unwrap();
        ScalarField::from_fn(g, |[r, z]| (1.0 - r * r - z * z) / 4.0)
    }

    fn node_at(u: &ScalarField, p: [f64; 2]) -> NodeId {
        let i = ((p[0] - u.grid.origin[0]) / u.grid.spacing[0]).round() as usize;
        let j = ((p[1] - u.grid.origin[1]) / u.grid.spacing[1]).round() as usize;
        (i, j)
    }

    #[test]
    fn sphere_arrival_diagnostics() {
        let u = sphere_arrival(257);
        let node = node_at(&u, [0.3, 0.4]); // radius 0.5
        let d = level_set_curvatures(&u, node, eps_reg_default(&u.grid)).unwrap();
        assert!(d.regular);
        assert!((d.kappas[0] - 2.0).abs() < 2e-2, "kappa1 {}", d.kappas[0]);
        assert!((d.kappas[1] - 2.0).abs() < 2e-2);
        assert!((d.h - 4.0).abs() < 4e-2);
        assert!((d.ratio - 0.5).abs() < 5e-3);
        assert!((d.grad_norm - 0.25).abs() < 1e-3);
        assert!((d.h * d.grad_norm - 1.0).abs() < 1e-2);
    }

    #[test]
    fn cylinder_arrival_diagnostics() {
        // dr = 0.01 exactly, so the probe lands on r = 0.5
        let g = Grid::axisym([106, 101], 1.05, [-0.5, 0.5]).unwrap();
        let u = ScalarField::from_fn(g, |[r, _]| (1.0 - r * r) / 2.0);
        let node = node_at(&u, [0.5, 0.1]);
        let d = level_set_curvatures(&u, node, eps_reg_default(&u.grid)).unwrap();
        assert!(d.regular);
        assert!(d.kappas[0].abs() < 1e-10, "kappa1 {}", d.kappas[0]);
        assert!((d.kappas[1] - 2.0).abs() < 1e-6);
        assert!((d.h - 2.0).abs() < 1e-6);
        assert!(d.ratio.abs() < 1e-10);
    }

    #[test]
    fn circle_arrival_n2() {
        // dx = 0.01 so the probe lands exactly on (0.25, 0)
        let g = Grid::cartesian2d([211, 211], [-1.05, -1.05], [1.05, 1.05]).unwrap();
        let u = ScalarField::from_fn(g, |[x, y]| (1.0 - x * x - y * y) / 2.0);
        let node = node_at(&u, [0.25, 0.0]);
        let d = level_set_curvatures(&u, node, eps_reg_default(&u.grid)).unwrap();
        assert_eq!(d.kappas.len(), 1);
        assert!((d.kappas[0] - 4.0).abs() < 1e-6);
        assert!((d.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_threshold_flags_singular() {
        let u = sphere_arrival(129);
        let center = node_at(&u, [0.0, 0.0]);
        let d = level_set_curvatures(&u, center, eps_reg_default(&u.grid)).unwrap();
        assert!(!d.regular);
        assert!(d.kappas.is_empty());
    }

    #[test]
    fn arrival_residual_on_exact_and_scaled_fields() {
        let u = sphere_arrival(193);
        let eps = eps_reg_default(&u.grid);
        let annulus: Vec<NodeId> = u
            .grid
            .iter_nodes()
            .filter(|&n| {
                let [r, z] = u.grid.coords(n);
                let rho = (r * r + z * z).sqrt();
                u.class(n) == NodeClass::Interior && (0.3..=0.9).contains(&rho)
            })
            .collect();
        let defect = arrival_residual(&u, &annulus, eps).unwrap();
        assert!(defect < 5e-3, "exact arrival defect {defect}");
        // doubling u doubles |grad u| without moving level sets: defect 1
        let mut u2 = u.clone();
        u2.values.iter_mut().for_each(|v| *v *= 2.0);
        let defect2 = arrival_residual(&u2, &annulus, eps).unwrap();
        assert!(defect2 >= 0.5, "scaled-field defect {defect2}");
    }

    #[test]
    fn arrival_residual_rejects_non_regular_nodes() {
        let u = sphere_arrival(129);
        let center = node_at(&u, [0.0, 0.0]);
        match arrival_residual(&u, &[center], eps_reg_default(&u.grid)) {
            Err(Error::NonRegular { count: 1, .. }) => {}
            other => panic!("expected NonRegular, got {other:?}"),
        }
    }

    #[test]
    fn product_lift_defect_exactly_zero() {
        let u = sphere_arrival(193);
        let eps = eps_reg_default(&u.grid);
        let probes: Vec<NodeId> = u
            .grid
            .iter_nodes()
            .filter(|&n| {
                let [r, z] = u.grid.coords(n);
                let rho = (r * r + z * z).sqrt();
                u.class(n) == NodeClass::Interior && (0.4..=0.6).contains(&rho)
            })
            .take(200)
            .collect();
        let defect = product_lift_check(&u, &probes, eps).unwrap();
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn lift_keeps_negative_kappa1() {
        // a saddle-ish field has kappa1 < 0 somewhere; min(0, kappa1) = kappa1
        let g = Grid::axisym([129, 129], 1.0, [-0.5, 0.5]).unwrap();
        let u = ScalarField::from_fn(g, |[r, z]| 1.0 - r + 0.8 * z * z - 0.2 * r * r);
        let node = node_at(&u, [0.5, 0.2]);
        let d = level_set_curvatures(&u, node, 1e-6).unwrap();
        assert!(d.kappas[0] < 0.0, "expected a negative curvature, got {:?}", d.kappas);
        let defect = product_lift_check(&u, &[node], 1e-6).unwrap();
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn ratio_bound_on_sphere_is_tight() {
        let u = sphere_arrival(193);
        let eps = eps_reg_default(&u.grid);
        let k: Vec<NodeId> = u
            .grid
            .iter_nodes()
            .filter(|&n| {
                let [r, z] = u.grid.coords(n);
                let rho = (r * r + z * z).sqrt();
                u.class(n) == NodeClass::Interior && (0.15..=0.9).contains(&rho)
            })
            .collect();
        let rb = ratio_bound_check(&u, &k, eps).unwrap();
        // umbilic everywhere: interior and boundary minima both 1/2
        assert!((rb.interior_min - 0.5).abs() < 2e-2, "{rb:?}");
        assert!((rb.boundary_min - 0.5).abs() < 2e-2);
        assert!(rb.margin >= -rb.epsilon_grid, "{rb:?}");
    }

    #[test]
    fn umbilicity_bound_holds_by_sorting() {
        // kappa_1 <= h/(n-1) is exact algebra once curvatures are sorted
        let u = sphere_arrival(129);
        let eps = eps_reg_default(&u.grid);
        let [nx, ny] = u.grid.shape;
        for j in 1..ny - 1 {
            for i in 0..nx - 1 {
                let d = level_set_curvatures(&u, (i, j), eps).unwrap();
                if d.regular {
                    let n_minus_1 = d.kappas.len() as f64;
                    assert!(d.ratio <= 1.0 / n_minus_1 + 1e-14);
                }
            }
        }
    }

    #[test]
    fn super_level_set_selects_center() {
        let g = Grid::cartesian2d([65, 65], [-1.1, -1.1], [1.1, 1.1]).unwrap();
        let u = ScalarField::from_fn(g, |[x, y]| (1.0 - x * x - y * y) / 2.0);
        let k = super_level_set(&u, 0.05);
        assert!(!k.is_empty());
        for n in &k {
            assert!(u.value(*n) >= 0.05 * 0.5 - 1e-12);
        }
    }
}
