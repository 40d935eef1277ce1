//! Singularity detection and tangent-type classification from ladder data.
//!
//! A point is a singular candidate when the non-resolvable region of
//! u_lambda (gradient below the regularity threshold, or level-set curvature
//! beyond what the grid represents) persists and tightens as lambda grows.
//! Classification reads the principal-curvature ratio signature on dyadic
//! probe shells around each candidate: shrinking spheres show
//! (kappa_1/h, kappa_last/h) -> (1/2, 1/2) in R^3, shrinking cylinders
//! (0, 1); in the plane the single ratio tends to 1. No parabolic rescaling
//! is performed — the signature is read from a single arrival field.

use crate::arrival::{eps_reg_default, level_set_curvatures};
use crate::error::Error;
use crate::mesh::{Grid, GridKind, NodeClass, NodeId, ScalarField};
use crate::regularize::LadderResult;
use crate::Result;

/// Tangent-flow classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentClass {
    Sphere,
    Cylinder,
    Unknown,
}

/// Mean curvature ratios collected on one probe shell.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ShellRatios {
    pub distance: f64,
    pub regular_count: usize,
    pub ratio_first: f64,
    pub ratio_last: f64,
}

/// One detected singular candidate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SingularCandidate {
    pub centroid: [f64; 2],
    pub node_count: usize,
    /// Max resolvable level-set mean curvature near the centroid, one entry
    /// per ladder member (nondecreasing by construction of the candidate).
    pub blowup_trace: Vec<f64>,
    pub classification: TangentClass,
    pub ratio_traces: Vec<ShellRatios>,
    /// Ratios extrapolated to the candidate (kappa_1/h, kappa_last/h).
    pub extrapolated: Option<(f64, f64)>,
    /// Min kappa_1/h over all regular probes within the largest shell.
    pub min_ratio_neighborhood: f64,
}

/// Full detection/classification output.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SingularityReport {
    pub schedule: Vec<f64>,
    pub candidates: Vec<SingularCandidate>,
    pub eps_reg: f64,
    pub h_max_resolvable: f64,
    pub classification_tolerance: f64,
}

/// Ratio-signature tolerance: sits above discretization noise at the
/// resolutions used here while the sphere and cylinder signatures are 0.5
/// apart.
pub const CLASS_TOLERANCE: f64 = 0.05;

fn flagged_set(u: &ScalarField, eps_reg: f64, h_cap: f64) -> Result<Vec<bool>> {
    let grid = &u.grid;
    let mut flags = vec![false; grid.num_nodes()];
    for node in grid.iter_nodes() {
        if u.class(node) != NodeClass::Interior {
            continue;
        }
        let d = level_set_curvatures(u, node, eps_reg)?;
        if !d.regular || d.h > h_cap {
            flags[grid.linear(node)] = true;
        }
    }
    Ok(flags)
}

fn clusters(grid: &Grid, flags: &[bool]) -> Vec<Vec<NodeId>> {
    let nx = grid.shape[0] as isize;
    let ny = grid.shape[1] as isize;
    let mut seen = vec![false; flags.len()];
    let mut out = Vec::new();
    for node in grid.iter_nodes() {
        let k = grid.linear(node);
        if !flags[k] || seen[k] {
            continue;
        }
        let mut stack = vec![node];
        let mut comp = Vec::new();
        seen[k] = true;
        while let Some(n) = stack.pop() {
            comp.push(n);
            for dj in -1..=1isize {
                for di in -1..=1isize {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let i = n.0 as isize + di;
                    let j = n.1 as isize + dj;
                    if i < 0 || j < 0 || i >= nx || j >= ny {
                        continue;
                    }
                    let kk = (j * nx + i) as usize;
                    if flags[kk] && !seen[kk] {
                        seen[kk] = true;
                        stack.push((i as usize, j as usize));
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn centroid(grid: &Grid, nodes: &[NodeId]) -> [f64; 2] {
    let mut c = [0.0, 0.0];
    let mut touches_axis = false;
    for &n in nodes {
        let p = grid.coords(n);
        c[0] += p[0];
        c[1] += p[1];
        touches_axis |= n.0 == 0;
    }
    c[0] /= nodes.len() as f64;
    c[1] /= nodes.len() as f64;
    // an axis-touching cluster of an axisymmetric field represents a ball
    // around an axis point, not a torus: its 3D centroid sits on the axis
    if grid.kind == GridKind::AxisymRz && grid.has_axis_node() && touches_axis {
        c[0] = 0.0;
    }
    c
}

/// Max level-set mean curvature over regular nodes within `radius` of `at`.
fn max_h_near(u: &ScalarField, at: [f64; 2], radius: f64, eps_reg: f64) -> Result<f64> {
    let grid = &u.grid;
    let mut hmax: f64 = 0.0;
    for node in grid.iter_nodes() {
        if u.class(node) != NodeClass::Interior {
            continue;
        }
        let p = grid.coords(node);
        let d2 = (p[0] - at[0]).powi(2) + (p[1] - at[1]).powi(2);
        if d2 > radius * radius {
            continue;
        }
        let d = level_set_curvatures(u, node, eps_reg)?;
        if d.regular {
            hmax = hmax.max(d.h);
        }
    }
    Ok(hmax)
}

/// Detects singular candidates from a ladder of u_lambda fields.
///
/// Requires at least 3 ladder members on a common grid. A node is flagged
/// when it is non-resolvable at the two largest lambdas (persistence); the
/// flagged set must not grow from the second-largest to the largest lambda
/// (the region tightens toward the singular set). Flagged nodes are
/// clustered by grid adjacency; each cluster keeps a blow-up trace of the
/// max resolvable curvature near its centroid, which must be nondecreasing
/// in lambda.
pub fn detect_singular(ladder: &LadderResult, u_fields: &[ScalarField]) -> Result<SingularityReport> {
    if u_fields.len() < 3 || ladder.schedule.len() != u_fields.len() {
        return Err(Error::Parameter(format!(
            "singularity detection needs >= 3 ladder members with matching fields (got {} fields for {} lambdas)",
            u_fields.len(),
            ladder.schedule.len()
        )));
    }
    let grid = u_fields[0].grid.clone();
    for u in u_fields {
        if u.grid != grid {
            return Err(Error::GridMismatch);
        }
    }
    let eps_reg = eps_reg_default(&grid);
    let h_cap = 1.0 / (4.0 * grid.max_spacing());
    let m = u_fields.len();
    let last = flagged_set(&u_fields[m - 1], eps_reg, h_cap)?;
    let prev = flagged_set(&u_fields[m - 2], eps_reg, h_cap)?;

    // persistence: flagged at the largest lambda and within one cell of the
    // previous flagged set
    let nx = grid.shape[0] as isize;
    let ny = grid.shape[1] as isize;
    let mut persistent = vec![false; last.len()];
    for node in grid.iter_nodes() {
        let k = grid.linear(node);
        if !last[k] {
            continue;
        }
        let mut near_prev = false;
        'scan: for dj in -1..=1isize {
            for di in -1..=1isize {
                let i = node.0 as isize + di;
                let j = node.1 as isize + dj;
                if i < 0 || j < 0 || i >= nx || j >= ny {
                    continue;
                }
                if prev[(j * nx + i) as usize] {
                    near_prev = true;
                    break 'scan;
                }
            }
        }
        persistent[k] = near_prev;
    }

    let probe_radius = 16.0 * grid.max_spacing() + 0.5 * grid.max_spacing();
    let mut candidates = Vec::new();
    for comp in clusters(&grid, &persistent) {
        let c = centroid(&grid, &comp);
        // the flagged region must not grow: count previous flags in the
        // component's dilated footprint
        let prev_count = comp
            .iter()
            .flat_map(|&n| {
                let mut hits = 0usize;
                for dj in -1..=1isize {
                    for di in -1..=1isize {
                        let i = n.0 as isize + di;
                        let j = n.1 as isize + dj;
                        if i >= 0 && j >= 0 && i < nx && j < ny && prev[(j * nx + i) as usize] {
                            hits += 1;
                            break;
                        }
                    }
                    if hits > 0 {
                        break;
                    }
                }
                (hits > 0).then_some(())
            })
            .count();
        if (comp.len() as f64) > 1.1 * (prev_count as f64).max(1.0) + 2.0 {
            // growing region: not tightening toward a singular point
            continue;
        }
        let mut trace = Vec::with_capacity(m);
        for u in u_fields {
            trace.push(max_h_near(u, c, probe_radius, eps_reg)?);
        }
        let nondecreasing = trace.windows(2).all(|w| w[1] >= 0.95 * w[0]);
        if !nondecreasing {
            continue;
        }
        candidates.push(SingularCandidate {
            centroid: c,
            node_count: comp.len(),
            blowup_trace: trace,
            classification: TangentClass::Unknown,
            ratio_traces: Vec::new(),
            extrapolated: None,
            min_ratio_neighborhood: f64::INFINITY,
        });
    }

    Ok(SingularityReport {
        schedule: ladder.schedule.clone(),
        candidates,
        eps_reg,
        h_max_resolvable: h_cap,
        classification_tolerance: CLASS_TOLERANCE,
    })
}

/// Classifies each candidate from ratio signatures on dyadic probe shells
/// of the arrival field at the largest lambda. The per-shell mean ratios are
/// extrapolated linearly to zero distance (count-weighted least squares);
/// empty shells are skipped. Fails only when no candidate has a populated
/// shell.
pub fn classify_tangent(mut report: SingularityReport, u: &ScalarField) -> Result<SingularityReport> {
    if report.candidates.is_empty() {
        return Ok(report);
    }
    let grid = &u.grid;
    let dx = grid.max_spacing();
    // Probe floor below the arrival threshold: around a spherical extinction
    // |grad u| = rho/2, so the 16 dx shell carries gradients of only 8 dx and
    // the 10 dx arrival floor would empty every shell. Three cells from a
    // critical point the gradient direction is trustworthy.
    let eps_shell = 3.0 * dx;
    let n_dim = match grid.kind {
        GridKind::AxisymRz => 3,
        GridKind::Cartesian2d => 2,
        GridKind::Radial => {
            return Err(Error::Classification("classification needs a 2D grid".into()))
        }
    };
    let mut any_populated = false;

    for cand in &mut report.candidates {
        let mut shells = Vec::new();
        let mut min_ratio = f64::INFINITY;
        for k in [2.0f64, 4.0, 8.0, 16.0] {
            let d = k * dx;
            let mut sum1 = 0.0;
            let mut sum2 = 0.0;
            let mut count = 0usize;
            for node in grid.iter_nodes() {
                if u.class(node) != NodeClass::Interior {
                    continue;
                }
                let p = grid.coords(node);
                let dist =
                    ((p[0] - cand.centroid[0]).powi(2) + (p[1] - cand.centroid[1]).powi(2)).sqrt();
                if (dist - d).abs() > 0.5 * dx {
                    continue;
                }
                let diag = level_set_curvatures(u, node, eps_shell)?;
                if !diag.regular {
                    continue;
                }
                sum1 += diag.kappas[0] / diag.h;
                sum2 += diag.kappas.last().unwrap() / diag.h;
                min_ratio = min_ratio.min(diag.kappas[0] / diag.h);
                count += 1;
            }
            if count > 0 {
                shells.push(ShellRatios {
                    distance: d,
                    regular_count: count,
                    ratio_first: sum1 / count as f64,
                    ratio_last: sum2 / count as f64,
                });
            }
        }
        if shells.is_empty() {
            cand.classification = TangentClass::Unknown;
            cand.ratio_traces = shells;
            continue;
        }
        any_populated = true;
        // count-weighted linear extrapolation of each ratio to distance 0
        let extrap = |pick: &dyn Fn(&ShellRatios) -> f64| -> f64 {
            if shells.len() == 1 {
                return pick(&shells[0]);
            }
            let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for s in &shells {
                let w = s.regular_count as f64;
                let x = s.distance;
                let y = pick(s);
                sw += w;
                sx += w * x;
                sy += w * y;
                sxx += w * x * x;
                sxy += w * x * y;
            }
            let det = sw * sxx - sx * sx;
            if det.abs() < 1e-300 {
                return sy / sw;
            }
            (sxx * sy - sx * sxy) / det
        };
        let a1 = extrap(&|s| s.ratio_first);
        let a2 = extrap(&|s| s.ratio_last);
        let tol = report.classification_tolerance;
        cand.classification = if n_dim == 3 {
            if (a1 - 0.5).abs() <= tol && (a2 - 0.5).abs() <= tol {
                TangentClass::Sphere
            } else if a1.abs() <= tol && (a2 - 1.0).abs() <= tol {
                TangentClass::Cylinder
            } else {
                TangentClass::Unknown
            }
        } else {
            // n = 2: circles have the single ratio 1/(n-1) = 1
            if (a1 - 1.0).abs() <= tol {
                TangentClass::Sphere
            } else {
                TangentClass::Unknown
            }
        };
        cand.extrapolated = Some((a1, a2));
        cand.ratio_traces = shells;
        cand.min_ratio_neighborhood = min_ratio;
    }

    if !any_populated {
        return Err(Error::Classification(
            "no regular probes on any shell of any candidate".into(),
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;

    /// Marks the one-node rim of an all-interior field as boundary so every
    /// interior node has a full stencil (solver fields come pre-masked).
    fn rim_masked(mut f: ScalarField) -> ScalarField {
        let [nx, ny] = f.grid.shape;
        for j in 0..ny {
            for i in 0..nx {
                let edge =
                    j == 0 || j == ny - 1 || i == nx - 1 || (i == 0 && !f.grid.has_axis_node());
                if edge {
                    let k = f.grid.linear((i, j));
                    f.mask[k] = crate::mesh::NodeClass::Boundary;
                }
            }
        }
        f
    }

    /// Synthetic exact arrival fields exercise the full detect+classify path
    /// without a PDE solve.
    fn ball_ladder_fields(grid: &Grid, lambdas: &[f64]) -> (LadderResult, Vec<ScalarField>) {
        // u_lambda mimicking the sphere arrival sharpening with lambda:
        // u = (1 - rho^2)/4 + smoothing that decays in lambda
        let fields: Vec<ScalarField> = lambdas
            .iter()
            .map(|&l| {
                rim_masked(ScalarField::from_fn(grid.clone(), |[r, z]| {
                    let rho2 = r * r + z * z;
                    (1.0 - rho2) / 4.0 + (1.0 / (l * l)) * (rho2 / 2.0).min(0.3)
                }))
            })
            .collect();
        let ladder = LadderResult {
            schedule: lambdas.to_vec(),
            summaries: vec![],
            u_diffs: vec![],
            probe_nodes: vec![],
        };
        (ladder, fields)
    }

    #[test]
    fn detects_ball_extinction_at_origin() {
        let grid = Grid::axisym([161, 321], 1.05, [-1.05, 1.05]).unwrap();
        let (ladder, fields) = ball_ladder_fields(&grid, &[4.0, 8.0, 16.0]);
        let report = detect_singular(&ladder, &fields).unwrap();
        assert_eq!(report.candidates.len(), 1, "{report:?}");
        let c = &report.candidates[0];
        assert!(c.centroid[0].abs() < 0.05 && c.centroid[1].abs() < 0.05, "{:?}", c.centroid);
        for w in c.blowup_trace.windows(2) {
            assert!(w[1] >= 0.95 * w[0]);
        }
    }

    #[test]
    fn classifies_ball_extinction_as_sphere() {
        let grid = Grid::axisym([161, 321], 1.05, [-1.05, 1.05]).unwrap();
        let (ladder, fields) = ball_ladder_fields(&grid, &[4.0, 8.0, 16.0]);
        let report = detect_singular(&ladder, &fields).unwrap();
        let report = classify_tangent(report, fields.last().unwrap()).unwrap();
        let c = &report.candidates[0];
        assert_eq!(c.classification, TangentClass::Sphere, "{c:?}");
        let (a1, a2) = c.extrapolated.unwrap();
        assert!((a1 - 0.5).abs() <= CLASS_TOLERANCE);
        assert!((a2 - 0.5).abs() <= CLASS_TOLERANCE);
        assert!(c.min_ratio_neighborhood >= -CLASS_TOLERANCE);
    }

    #[test]
    fn classifies_exact_cylinder_field() {
        // z-independent arrival of a shrinking cylinder with an artificial
        // singular dot at the origin provided by the detection step
        let grid = Grid::axisym([161, 161], 1.05, [-0.8, 0.8]).unwrap();
        let fields: Vec<ScalarField> = [4.0f64, 8.0, 16.0]
            .iter()
            .map(|&l| {
                rim_masked(ScalarField::from_fn(grid.clone(), |[r, _]| {
                    (1.0 - r * r) / 2.0 + (1.0 / (l * l)) * (r * r / 2.0).min(0.3)
                }))
            })
            .collect();
        let ladder = LadderResult {
            schedule: vec![4.0, 8.0, 16.0],
            summaries: vec![],
            u_diffs: vec![],
            probe_nodes: vec![],
        };
        let report = detect_singular(&ladder, &fields).unwrap();
        assert!(!report.candidates.is_empty());
        let report = classify_tangent(report, fields.last().unwrap()).unwrap();
        // every candidate along the axis line sees the cylinder signature
        for c in &report.candidates {
            assert_eq!(c.classification, TangentClass::Cylinder, "{c:?}");
            let (a1, a2) = c.extrapolated.unwrap();
            assert!(a1.abs() <= CLASS_TOLERANCE, "a1 = {a1}");
            assert!((a2 - 1.0).abs() <= CLASS_TOLERANCE, "a2 = {a2}");
        }
    }

    #[test]
    fn circle_extinction_is_sphere_type_in_plane() {
        let grid = Grid::cartesian2d([161, 161], [-1.05, -1.05], [1.05, 1.05]).unwrap();
        let fields: Vec<ScalarField> = [4.0f64, 8.0, 16.0]
            .iter()
            .map(|&l| {
                rim_masked(ScalarField::from_fn(grid.clone(), |[x, y]| {
                    let rho2 = x * x + y * y;
                    (1.0 - rho2) / 2.0 + (1.0 / (l * l)) * (rho2 / 2.0).min(0.3)
                }))
            })
            .collect();
        let ladder = LadderResult {
            schedule: vec![4.0, 8.0, 16.0],
            summaries: vec![],
            u_diffs: vec![],
            probe_nodes: vec![],
        };
        let report = detect_singular(&ladder, &fields).unwrap();
        assert_eq!(report.candidates.len(), 1);
        let report = classify_tangent(report, fields.last().unwrap()).unwrap();
        assert_eq!(report.candidates[0].classification, TangentClass::Sphere);
    }

    #[test]
    fn needs_three_ladder_members() {
        let grid = Grid::axisym([65, 65], 1.0, [-1.0, 1.0]).unwrap();
        let (mut ladder, mut fields) = ball_ladder_fields(&grid, &[4.0, 8.0]);
        ladder.schedule = vec![4.0, 8.0];
        fields.truncate(2);
        assert!(detect_singular(&ladder, &fields).is_err());
    }

    #[test]
    fn mismatched_grids_rejected() {
        let g1 = Grid::axisym([65, 65], 1.0, [-1.0, 1.0]).unwrap();
        let g2 = Grid::axisym([63, 65], 1.0, [-1.0, 1.0]).unwrap();
        let (ladder, mut fields) = ball_ladder_fields(&g1, &[4.0, 8.0, 16.0]);
        fields[2] = ScalarField::zeros(g2);
        assert!(matches!(detect_singular(&ladder, &fields), Err(Error::GridMismatch)));
    }
}
