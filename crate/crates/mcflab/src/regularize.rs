//! Elliptic regularization: the translator-graph Dirichlet solve and the
//! lambda ladder.
//!
//! For a mean-convex region and lambda > 0, the graph of f translating with
//! velocity -lambda e_up realizes the flow; f solves
//!
//! ```text
//!     div(Df/W) = -lambda / W,    f = g on the boundary collar,
//! ```
//!
//! discretized in the equivalent non-divergence form
//! `Delta f - (f_i f_j f_ij)/W^2 + lambda = 0`. The residual is evaluated in
//! the grouped form `[f_00 (1 + f_1^2) - 2 f_0 f_1 f_01 + f_11 (1 + f_0^2)]
//! / W^2 + lambda`, which is algebraically identical but avoids the
//! catastrophic cancellation of the two large terms on steep boundary data.
//! Newton's method with an exact 9-point Jacobian, banded LU linear solves
//! and residual-monotone step halving converges quadratically once the
//! lambda continuation provides a warm start; the first ladder member starts
//! from f = 0.
//!
//! The rescaled solution `u_lambda = f/lambda` approximates the time-of-
//! arrival function; its sup-norm increments along the ladder measure the
//! distance to the limit.

use crate::arrival::{bound_check_core, CurvatureDiagnostics, RatioBound};
use crate::domain::{validate_mean_convex, DomainSpec};
use crate::error::Error;
use crate::linsys::BandMatrix;
use crate::mesh::{Grid, GridKind, NodeClass, NodeId, ScalarField};
use crate::Result;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Newton solve controls. The residual tolerance applies to the sup norm of
/// the residual divided by lambda (dimensionless).
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Step-halving attempts per Newton iteration before declaring
    /// stagnation.
    pub max_damping: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        // 24 halvings reach steps of 1e-7; rough warm starts (noise of the
        // uniqueness re-solve) genuinely need line-search steps below 1e-3
        SolveOptions { tol: 1e-8, max_iterations: 120, max_damping: 24 }
    }
}

/// One converged translator-graph solve at a fixed lambda.
#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub lambda: f64,
    pub domain: DomainSpec,
    /// Solution field; boundary collar nodes hold the Dirichlet data.
    pub f: ScalarField,
    /// Per-boundary-node Dirichlet values.
    pub boundary: Vec<(NodeId, f64)>,
    /// Scaled residual sup norm at acceptance.
    pub residual_sup: f64,
    pub newton_iterations: usize,
    /// (lambda, accepted scaled residual) per ladder member so far.
    pub continuation_trace: Vec<(f64, f64)>,
    /// Strong-maximum-principle check: f > 0 at interior nodes (zero-data
    /// solves only; true for nonzero data).
    pub positive_interior: bool,
}

/// Per-lambda summary recorded by the ladder.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub center_value: f64,
    pub sup_grad: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub h_max: f64,
    pub residual_sup: f64,
    pub newton_iterations: usize,
}

/// Ladder output: schedule, summaries, and sup-norm increments of
/// u_lambda on the fixed probe set K.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LadderResult {
    pub schedule: Vec<f64>,
    pub summaries: Vec<LambdaSummary>,
    /// `sup over K of |u_{lambda_{k+1}} - u_{lambda_k}|`, length
    /// schedule.len() - 1.
    pub u_diffs: Vec<f64>,
    pub probe_nodes: Vec<NodeId>,
}

struct Discretization {
    grid: Grid,
    axisym: bool,
    /// Unknown index per grid node (interior nodes only).
    idx: Vec<Option<usize>>,
    unknowns: Vec<NodeId>,
    bandwidth: usize,
}

impl Discretization {
    fn build(mask: &ScalarField) -> Result<Self> {
        let grid = mask.grid.clone();
        let mut idx = vec![None; grid.num_nodes()];
        let mut unknowns = Vec::new();
        for node in grid.iter_nodes() {
            if mask.class(node) == NodeClass::Interior {
                idx[grid.linear(node)] = Some(unknowns.len());
                unknowns.push(node);
            }
        }
        if unknowns.is_empty() {
            return Err(Error::Resolution("no interior nodes to solve on".into()));
        }
        // exact bandwidth over stencil couplings (including the axis mirror)
        let mut bw = 1usize;
        for (k, &node) in unknowns.iter().enumerate() {
            for (di, dj) in NEIGHBOR_OFFSETS {
                if let Some(nb) = mirror_neighbor(&grid, node, di, dj) {
                    if let Some(kk) = idx[grid.linear(nb)] {
                        bw = bw.max(k.abs_diff(kk));
                    }
                }
            }
        }
        Ok(Discretization { axisym: grid.kind == GridKind::AxisymRz, grid, idx, unknowns, bandwidth: bw })
    }
}

const NEIGHBOR_OFFSETS: [(isize, isize); 8] =
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Stencil neighbor with even reflection across the axis; None if off-grid.
fn mirror_neighbor(grid: &Grid, node: NodeId, di: isize, dj: isize) -> Option<NodeId> {
    let mut i = node.0 as isize + di;
    let j = node.1 as isize + dj;
    if i < 0 && grid.kind == GridKind::AxisymRz && grid.has_axis_node() {
        i = -i;
    }
    if i < 0 || j < 0 || i >= grid.shape[0] as isize || j >= grid.shape[1] as isize {
        None
    } else {
        Some((i as usize, j as usize))
    }
}

/// Grouped-form residual of the interior equation at one node.
fn residual_at(f: &ScalarField, node: NodeId, lambda: f64, axisym: bool) -> Result<f64> {
    let g = f.gradient(node)?;
    let hs = f.hessian(node)?;
    let w2 = 1.0 + g[0] * g[0] + g[1] * g[1];
    let bracket = hs[0][0] * (1.0 + g[1] * g[1]) - 2.0 * g[0] * g[1] * hs[0][1]
        + hs[1][1] * (1.0 + g[0] * g[0]);
    let mut r = bracket / w2 + lambda;
    if axisym {
        let on_axis = f.grid.has_axis_node() && node.0 == 0;
        r += if on_axis { hs[0][0] } else { g[0] / f.grid.coords(node)[0] };
    }
    Ok(r)
}

/// Residual vector plus its scaled sup norm and l2 merit (0.5 ||R||^2).
fn residual_vector(
    f: &ScalarField,
    disc: &Discretization,
    lambda: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let mut res = vec![0.0; disc.unknowns.len()];
    let mut sup: f64 = 0.0;
    let mut merit = 0.0;
    for (k, &node) in disc.unknowns.iter().enumerate() {
        let r = residual_at(f, node, lambda, disc.axisym)?;
        if !r.is_finite() {
            return Err(Error::Numeric(format!("non-finite residual at {node:?}")));
        }
        res[k] = r;
        sup = sup.max(r.abs());
        merit += 0.5 * r * r;
    }
    Ok((res, sup / lambda, merit))
}

/// Assembles the exact Jacobian of the grouped residual into a band matrix.
fn assemble_jacobian(
    f: &ScalarField,
    disc: &Discretization,
    jac: &mut BandMatrix,
) -> Result<()> {
    jac.reset();
    let grid = &disc.grid;
    let h0 = grid.spacing[0];
    let h1 = grid.spacing[1];
    for (row, &node) in disc.unknowns.iter().enumerate() {
        let g = f.gradient(node)?;
        let hs = f.hessian(node)?;
        let w2 = 1.0 + g[0] * g[0] + g[1] * g[1];
        let bracket = hs[0][0] * (1.0 + g[1] * g[1]) - 2.0 * g[0] * g[1] * hs[0][1]
            + hs[1][1] * (1.0 + g[0] * g[0]);
        let on_axis = disc.axisym && grid.has_axis_node() && node.0 == 0;

        // coefficients of the derivative contributions:
        // R = bracket / W^2 (+ axis term) + lambda
        let a00 = (1.0 + g[1] * g[1]) / w2;
        let a11 = (1.0 + g[0] * g[0]) / w2;
        let a01 = -2.0 * g[0] * g[1] / w2; // multiplies f_01
        let mut b0 = ((-2.0 * g[1] * hs[0][1] + 2.0 * g[0] * hs[1][1])
            - (bracket / w2) * 2.0 * g[0])
            / w2;
        let b1 = ((2.0 * g[1] * hs[0][0] - 2.0 * g[0] * hs[0][1])
            - (bracket / w2) * 2.0 * g[1])
            / w2;
        let mut axis_f00 = 0.0;
        if disc.axisym {
            if on_axis {
                axis_f00 = 1.0; // f_r / r -> f_rr
            } else {
                b0 += 1.0 / grid.coords(node)[0];
            }
        }

        // accumulate d(stencil value)/d(neighbor) weights
        let mut add = |nb: Option<NodeId>, w: f64| {
            if w == 0.0 {
                return;
            }
            if let Some(nb) = nb {
                if let Some(col) = disc.idx[grid.linear(nb)] {
                    jac.add(row, col, w);
                }
            }
        };
        let e = mirror_neighbor(grid, node, 1, 0);
        let wn = mirror_neighbor(grid, node, -1, 0);
        let nn = mirror_neighbor(grid, node, 0, 1);
        let s = mirror_neighbor(grid, node, 0, -1);
        let ne = mirror_neighbor(grid, node, 1, 1);
        let nw = mirror_neighbor(grid, node, -1, 1);
        let se = mirror_neighbor(grid, node, 1, -1);
        let sw = mirror_neighbor(grid, node, -1, -1);

        if on_axis {
            // f_0 = 0, f_01 = 0, f_00 = 2 (f_E - f_C)/h0^2; W mirrors to E
            let c00 = a00 + axis_f00;
            add(e, c00 * 2.0 / (h0 * h0));
            add(Some(node), -c00 * 2.0 / (h0 * h0));
        } else {
            add(e, a00 / (h0 * h0) + b0 / (2.0 * h0));
            add(wn, a00 / (h0 * h0) - b0 / (2.0 * h0));
            add(Some(node), -2.0 * a00 / (h0 * h0));
            // mixed term: f_01 central cross stencil
            let c = a01 / (4.0 * h0 * h1);
            add(ne, c);
            add(sw, c);
            add(nw, -c);
            add(se, -c);
        }
        add(nn, a11 / (h1 * h1) + b1 / (2.0 * h1));
        add(s, a11 / (h1 * h1) - b1 / (2.0 * h1));
        add(Some(node), -2.0 * a11 / (h1 * h1));
    }
    Ok(())
}

/// Solves the translator-graph Dirichlet problem at one lambda.
///
/// `g` supplies the Dirichlet data on the boundary collar (None = zero data,
/// the no-boundary-motion case); `init` warm-starts Newton (None starts from
/// the zero field). Returns a converged solution or `NonConvergence` carrying
/// the last iterate.
pub fn solve_translator_graph(
    domain: &DomainSpec,
    grid: &Grid,
    lambda: f64,
    g: Option<&ScalarField>,
    init: Option<&ScalarField>,
    opts: &SolveOptions,
) -> Result<RegularizedSolution> {
    if lambda <= 0.0 {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let convexity = validate_mean_convex(domain, 256)?;
    if !convexity.pass {
        return Err(Error::Specification(format!(
            "domain is not mean convex (min h = {})",
            convexity.min_mean_curvature
        )));
    }
    let mask = crate::domain::build_mask(domain, grid)?;
    let disc = Discretization::build(&mask)?;

    // assemble the working field: boundary data + initial interior guess
    let mut f = mask.clone();
    let mut boundary = Vec::new();
    for node in grid.iter_nodes() {
        let k = grid.linear(node);
        match f.mask[k] {
            NodeClass::Boundary => {
                let val = match g {
                    Some(data) => {
                        if data.grid != *grid {
                            return Err(Error::GridMismatch);
                        }
                        data.values[k]
                    }
                    None => 0.0,
                };
                if !val.is_finite() {
                    return Err(Error::Parameter(format!("non-finite boundary value at {node:?}")));
                }
                f.values[k] = val;
                boundary.push((node, val));
            }
            NodeClass::Interior => {
                if let Some(start) = init {
                    if start.grid != *grid {
                        return Err(Error::GridMismatch);
                    }
                    f.values[k] = start.values[k];
                }
            }
            NodeClass::Outside => {}
        }
    }

    let n = disc.unknowns.len();
    let bw = disc.bandwidth;
    let mut jac = BandMatrix::new(n, bw, bw);
    let (mut res, mut sup, mut merit) = residual_vector(&f, &disc, lambda)?;

    // Globalization: solve (J - sigma I) delta = -R. sigma = 0 is Newton;
    // on line-search failure sigma grows (implicit pseudo-time stepping of
    // the parabolic graph flow, which has the same steady state), and decays
    // back toward Newton after accepted steps. The shift scale follows the
    // diagonal magnitude of the stencil.
    let diag_scale = 2.0 / (grid.spacing[0] * grid.spacing[0])
        + 2.0 / (grid.spacing[1] * grid.spacing[1]);
    let sigma_seed = 1e-6 * diag_scale;
    let sigma_cap = 1e9 * diag_scale;
    let mut sigma = 0.0f64;

    let mut iterations = 0usize;
    let mut factorizations = 0usize;
    while sup > opts.tol {
        if iterations >= opts.max_iterations || factorizations >= 4 * opts.max_iterations {
            return Err(Error::NonConvergence {
                lambda,
                residual: sup,
                iterations,
                iterate: Box::new(f),
            });
        }
        assemble_jacobian(&f, &disc, &mut jac)?;
        if sigma > 0.0 {
            for k in 0..n {
                jac.add(k, k, -sigma);
            }
        }
        let piv = jac.factor()?;
        factorizations += 1;
        let mut delta: Vec<f64> = res.iter().map(|r| -r).collect();
        jac.solve_factored(&piv, &mut delta)?;
        let delta_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();

        // damped step, accepted under either of two monotonicity tests:
        // the residual l2 merit (Armijo), or the error-oriented natural
        // criterion |J^{-1} R(trial)| <= (1 - s/2) |delta|, which measures
        // progress in solution units and is immune to the huge residual
        // scale disparity between cliff and smooth nodes
        let mut accepted = false;
        let mut step = 1.0f64;
        for _ in 0..opts.max_damping {
            let mut trial = f.clone();
            for (k, &node) in disc.unknowns.iter().enumerate() {
                let kk = grid.linear(node);
                trial.values[kk] += step * delta[k];
            }
            if let Ok((new_res, new_sup, new_merit)) = residual_vector(&trial, &disc, lambda) {
                let mut accept = new_merit <= merit * (1.0 - 1e-4 * step);
                if !accept {
                    let mut dbar: Vec<f64> = new_res.iter().map(|r| -r).collect();
                    jac.solve_factored(&piv, &mut dbar)?;
                    let dbar_norm = dbar.iter().map(|d| d * d).sum::<f64>().sqrt();
                    accept = dbar_norm <= (1.0 - 0.5 * step) * delta_norm;
                }
                if accept {
                    f = trial;
                    res = new_res;
                    sup = new_sup;
                    merit = new_merit;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if accepted {
            iterations += 1;
            sigma = if sigma > 4.0 * sigma_seed { sigma * 0.25 } else { 0.0 };
        } else {
            sigma = if sigma == 0.0 { sigma_seed } else { sigma * 8.0 };
            if sigma > sigma_cap {
                return Err(Error::NonConvergence {
                    lambda,
                    residual: sup,
                    iterations,
                    iterate: Box::new(f),
                });
            }
        }
    }

    let zero_data = g.is_none();
    let positive_interior = !zero_data
        || disc.unknowns.iter().all(|&node| f.value(node) > 0.0);
    Ok(RegularizedSolution {
        lambda,
        domain: domain.clone(),
        f,
        boundary,
        residual_sup: sup,
        newton_iterations: iterations,
        continuation_trace: vec![(lambda, sup)],
        positive_interior,
    })
}

/// Runs a strictly increasing lambda schedule with continuation: each solve
/// warm-starts from the previous solution scaled by the lambda ratio (since
/// f is close to lambda times the arrival function). Fails with a ladder
/// error naming the offending lambda.
pub fn lambda_ladder(
    domain: &DomainSpec,
    grid: &Grid,
    schedule: &[f64],
    mut g: impl FnMut(f64) -> Result<Option<ScalarField>>,
    opts: &SolveOptions,
) -> Result<(LadderResult, Vec<RegularizedSolution>)> {
    if schedule.is_empty() {
        return Err(Error::Parameter("lambda schedule must be nonempty".into()));
    }
    for w in schedule.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Parameter(format!(
                "lambda schedule must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if schedule[0] <= 0.0 {
        return Err(Error::Parameter("lambda schedule must be positive".into()));
    }

    let mut solutions: Vec<RegularizedSolution> = Vec::with_capacity(schedule.len());
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut summaries = Vec::new();
    let mut probe_nodes: Vec<NodeId> = Vec::new();
    let mut u_diffs = Vec::new();
    let mut prev_u: Option<ScalarField> = None;

    for (step, &lambda) in schedule.iter().enumerate() {
        let data = g(lambda)?;
        let init = solutions.last().map(|prev| {
            let mut guess = prev.f.clone();
            let scale = lambda / prev.lambda;
            guess.values.iter_mut().for_each(|v| *v *= scale);
            guess
        });
        let mut sol =
            solve_translator_graph(domain, grid, lambda, data.as_ref(), init.as_ref(), opts)
                .map_err(|e| Error::Ladder { lambda, source: Box::new(e) })?;
        trace.push((lambda, sol.residual_sup));
        sol.continuation_trace = trace.clone();

        let u = u_lambda(&sol);
        if step == 0 {
            probe_nodes = crate::arrival::super_level_set(&u, 0.05);
        }
        if let Some(prev) = &prev_u {
            let diff = probe_nodes
                .iter()
                .map(|&n| (u.value(n) - prev.value(n)).abs())
                .fold(0.0f64, f64::max);
            u_diffs.push(diff);
        }

        summaries.push(summarize(&sol)?);
        prev_u = Some(u);
        solutions.push(sol);
    }

    Ok((
        LadderResult { schedule: schedule.to_vec(), summaries, u_diffs, probe_nodes },
        solutions,
    ))
}

pub(crate) fn summarize(sol: &RegularizedSolution) -> Result<LambdaSummary> {
    let grid = &sol.f.grid;
    // center = interior node nearest the bounding-box center
    let (lo, hi) = sol.domain.bounding_box();
    let cx = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let mut best = (f64::INFINITY, (0usize, 0usize));
    let mut sup_grad: f64 = 0.0;
    let mut kmin = f64::INFINITY;
    let mut kmax = f64::NEG_INFINITY;
    let mut hmax = f64::NEG_INFINITY;
    for node in grid.iter_nodes() {
        if sol.f.class(node) != NodeClass::Interior {
            continue;
        }
        let p = grid.coords(node);
        let d2 = (p[0] - cx[0]).powi(2) + (p[1] - cx[1]).powi(2);
        if d2 < best.0 {
            best = (d2, node);
        }
        let g = sol.f.gradient(node)?;
        sup_grad = sup_grad.max((g[0] * g[0] + g[1] * g[1]).sqrt());
        let diag = graph_curvatures(sol, node)?;
        kmin = kmin.min(diag.kappas[0]);
        kmax = kmax.max(*diag.kappas.last().unwrap());
        hmax = hmax.max(diag.h);
    }
    Ok(LambdaSummary {
        lambda: sol.lambda,
        center_value: sol.f.value(best.1),
        sup_grad,
        kappa_min: kmin,
        kappa_max: kmax,
        h_max: hmax,
        residual_sup: sol.residual_sup,
        newton_iterations: sol.newton_iterations,
    })
}

/// Eigenvalues of the symmetric pencil det(II - kappa G) = 0 for 2x2
/// matrices with G positive definite; closed-form, branch-free.
fn pencil_eigs(ii: [[f64; 2]; 2], g: [[f64; 2]; 2]) -> (f64, f64) {
    let a = g[0][0] * g[1][1] - g[0][1] * g[0][1];
    let b = -(ii[0][0] * g[1][1] - 2.0 * ii[0][1] * g[0][1] + ii[1][1] * g[0][0]);
    let c = ii[0][0] * ii[1][1] - ii[0][1] * ii[0][1];
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let k1 = (-b - disc) / (2.0 * a);
    let k2 = (-b + disc) / (2.0 * a);
    (k1, k2)
}

/// Principal curvatures of the solution graph at an interior node, signed
/// toward the normal with negative vertical component (the direction of
/// motion), so a converged solve has h = lambda / W > 0. These depend only on
/// f at the planar node: the translating family shares them at every height.
pub fn graph_curvatures(sol: &RegularizedSolution, node: NodeId) -> Result<CurvatureDiagnostics> {
    let f = &sol.f;
    if f.class(node) != NodeClass::Interior {
        return Err(Error::Parameter(format!("graph curvatures need an interior node, got {node:?}")));
    }
    let d = f.gradient(node)?;
    let hs = f.hessian(node)?;
    let w2 = 1.0 + d[0] * d[0] + d[1] * d[1];
    let w = w2.sqrt();
    let grad_norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
    // downward orientation: II = -Hess f / W, metric G = I + Df Df^T
    let ii = [
        [-hs[0][0] / w, -hs[0][1] / w],
        [-hs[0][1] / w, -hs[1][1] / w],
    ];
    let gm = [
        [1.0 + d[0] * d[0], d[0] * d[1]],
        [d[0] * d[1], 1.0 + d[1] * d[1]],
    ];
    let (k1, k2) = pencil_eigs(ii, gm);
    let kappas = match f.grid.kind {
        GridKind::Cartesian2d => vec![k1, k2],
        GridKind::AxisymRz => {
            let r = f.grid.coords(node)[0];
            let k_rot = if f.grid.has_axis_node() && node.0 == 0 {
                -hs[0][0] / w
            } else {
                -d[0] / (r * w)
            };
            vec![k1, k2, k_rot]
        }
        GridKind::Radial => {
            return Err(Error::Parameter("graph curvatures need a 2D solve grid".into()))
        }
    };
    Ok(CurvatureDiagnostics::from_kappas(kappas, grad_norm, true))
}

/// The rescaled field u_lambda = f / lambda whose level sets are the flow
/// surfaces; boundary nodes carry g / lambda.
pub fn u_lambda(sol: &RegularizedSolution) -> ScalarField {
    let mut u = sol.f.clone();
    let inv = 1.0 / sol.lambda;
    u.values.iter_mut().for_each(|v| *v *= inv);
    u
}

/// Translator form of the boundary-minimum inequality on the solution graph:
/// `margin = interior_min - boundary_min` of kappa_1/h over K (no clamp at
/// zero; the graph itself is the translating surface).
pub fn graph_ratio_bound(sol: &RegularizedSolution, k_nodes: &[NodeId]) -> Result<RatioBound> {
    let grid = sol.f.grid.clone();
    bound_check_core(
        &grid,
        k_nodes,
        &mut |node| {
            let d = graph_curvatures(sol, node)?;
            Ok(d.regular.then_some(d.ratio))
        },
        false,
    )
}

/// Gradient-bound check (graph estimate): sup over K of |Df| against the
/// relative-boundary sup. Returns (interior sup, boundary sup, epsilon).
pub fn gradient_bound_check(sol: &RegularizedSolution, k_nodes: &[NodeId]) -> Result<(f64, f64, f64)> {
    let grid = &sol.f.grid;
    let (bnd, int) = crate::arrival::relative_boundary(grid, k_nodes);
    let grad_at = |node: NodeId| -> Result<f64> {
        let g = sol.f.gradient(node)?;
        Ok((g[0] * g[0] + g[1] * g[1]).sqrt())
    };
    let mut bnd_sup: f64 = 0.0;
    for &n in &bnd {
        bnd_sup = bnd_sup.max(grad_at(n)?);
    }
    let mut int_sup: f64 = 0.0;
    for &n in &int {
        int_sup = int_sup.max(grad_at(n)?);
    }
    // Lipschitz estimate of |Df| along the relative boundary
    let mut lip: f64 = 0.0;
    for &n in &bnd {
        let here = grad_at(n)?;
        for (di, dj, h) in [
            (1isize, 0isize, grid.spacing[0]),
            (-1, 0, grid.spacing[0]),
            (0, 1, grid.spacing[1]),
            (0, -1, grid.spacing[1]),
        ] {
            if let Some(nb) = mirror_neighbor(grid, n, di, dj) {
                if sol.f.class(nb) == NodeClass::Interior {
                    lip = lip.max((grad_at(nb)? - here).abs() / h);
                }
            }
        }
    }
    let eps = 5.0 * grid.max_spacing() * lip;
    Ok((int_sup, bnd_sup, eps))
}

/// Adds seeded uniform noise of the given relative amplitude to the interior
/// values (used by the uniqueness re-solve).
pub fn perturb_field(field: &ScalarField, relative_amplitude: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fmax = field
        .values
        .iter()
        .zip(&field.mask)
        .filter(|(_, &m)| m == NodeClass::Interior)
        .map(|(v, _)| v.abs())
        .fold(0.0f64, f64::max);
    let amp = relative_amplitude * fmax;
    let mut out = field.clone();
    for node in field.grid.iter_nodes() {
        let k = field.grid.linear(node);
        if out.mask[k] == NodeClass::Interior {
            out.values[k] += amp * rng.random_range(-1.0..1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> DomainSpec {
        DomainSpec::Disk { radius: 1.0, center: [0.0, 0.0], dim: 2 }
    }

    fn disk_grid(n: usize) -> Grid {
        Grid::cartesian2d([n, n], [-1.1, -1.1], [1.1, 1.1]).unwrap()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // exactness of the assembled 9-point Jacobian on a rough field
        let grid = disk_grid(33);
        let mask = crate::domain::build_mask(&disk(), &grid).unwrap();
        let disc = Discretization::build(&mask).unwrap();
        let mut f = mask.clone();
        for (k, &node) in disc.unknowns.iter().enumerate() {
            let kk = grid.linear(node);
            f.values[kk] = 0.8 * ((k.wrapping_mul(2654435761)) % 1000) as f64 / 1000.0 - 0.3;
        }
        let lambda = 16.0;
        let n = disc.unknowns.len();
        let mut jac = BandMatrix::new(n, disc.bandwidth, disc.bandwidth);
        assemble_jacobian(&f, &disc, &mut jac).unwrap();
        let (r0, _, _) = residual_vector(&f, &disc, lambda).unwrap();
        let eps = 1e-7;
        for probe in [0usize, n / 3, n / 2, n - 1] {
            let mut unit = vec![0.0; n];
            unit[probe] = 1.0;
            let jcol = jac.matvec(&unit);
            let node = disc.unknowns[probe];
            let kk = grid.linear(node);
            let mut fp = f.clone();
            fp.values[kk] += eps;
            let (rp, _, _) = residual_vector(&fp, &disc, lambda).unwrap();
            for row in 0..n {
                let fd = (rp[row] - r0[row]) / eps;
                let scale = 1.0 + jcol[row].abs().max(fd.abs());
                assert!(
                    (jcol[row] - fd).abs() / scale < 2e-5,
                    "J[{row}, {probe}] = {} vs FD {fd}",
                    jcol[row]
                );
            }
        }
    }

    #[test]
    fn small_disk_solve_converges() {
        let opts = SolveOptions::default();
        let sol =
            solve_translator_graph(&disk(), &disk_grid(65), 4.0, None, None, &opts).unwrap();
        assert!(sol.residual_sup <= opts.tol);
        assert!(sol.positive_interior);
        assert!(sol.newton_iterations > 0);
        // u at the center approximates the circle arrival time 0.5 loosely
        // already at lambda = 4 (the lambda gap is about 0.12 there)
        let u = u_lambda(&sol);
        let c = ((0.0 - u.grid.origin[0]) / u.grid.spacing[0]).round() as usize;
        assert!((u.value((c, c)) - 0.5).abs() < 0.15, "u(0) = {}", u.value((c, c)));
    }

    #[test]
    fn converged_init_needs_zero_iterations() {
        let opts = SolveOptions::default();
        let sol =
            solve_translator_graph(&disk(), &disk_grid(65), 8.0, None, None, &opts).unwrap();
        let again = solve_translator_graph(
            &disk(),
            &disk_grid(65),
            8.0,
            None,
            Some(&sol.f),
            &opts,
        )
        .unwrap();
        assert_eq!(again.newton_iterations, 0);
    }

    #[test]
    fn rejects_bad_lambda_and_domains() {
        let opts = SolveOptions::default();
        assert!(solve_translator_graph(&disk(), &disk_grid(65), -1.0, None, None, &opts).is_err());
        let rect = DomainSpec::Rectangle { half_width: 0.5, half_height: 0.5 };
        let grid = Grid::cartesian2d([65, 65], [-0.6, -0.6], [0.6, 0.6]).unwrap();
        assert!(solve_translator_graph(&rect, &grid, 4.0, None, None, &opts).is_err());
    }

    #[test]
    fn ladder_validates_schedule() {
        let opts = SolveOptions::default();
        let g = |_l: f64| Ok(None);
        assert!(lambda_ladder(&disk(), &disk_grid(65), &[], g, &opts).is_err());
        let g = |_l: f64| Ok(None);
        assert!(lambda_ladder(&disk(), &disk_grid(65), &[8.0, 4.0], g, &opts).is_err());
    }

    #[test]
    fn singleton_ladder_has_no_diffs() {
        let opts = SolveOptions::default();
        let (ladder, sols) =
            lambda_ladder(&disk(), &disk_grid(65), &[4.0], |_| Ok(None), &opts).unwrap();
        assert!(ladder.u_diffs.is_empty());
        assert_eq!(sols.len(), 1);
    }

    #[test]
    fn ladder_diffs_decrease_on_disk() {
        let opts = SolveOptions::default();
        let (ladder, _) = lambda_ladder(
            &disk(),
            &disk_grid(97),
            &[4.0, 8.0, 16.0, 32.0],
            |_| Ok(None),
            &opts,
        )
        .unwrap();
        assert_eq!(ladder.u_diffs.len(), 3);
        for w in ladder.u_diffs.windows(2) {
            assert!(w[1] < w[0], "u diffs not decreasing: {:?}", ladder.u_diffs);
        }
    }

    #[test]
    fn graph_mean_curvature_matches_lambda_over_w() {
        // h W / lambda = 1 is the PDE restated; holds to residual accuracy
        let opts = SolveOptions::default();
        let sol =
            solve_translator_graph(&disk(), &disk_grid(129), 16.0, None, None, &opts).unwrap();
        for node in sol.f.interior_nodes() {
            let d = graph_curvatures(&sol, node).unwrap();
            let g = sol.f.gradient(node).unwrap();
            let w = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
            let defect = (d.h * w / sol.lambda - 1.0).abs();
            assert!(defect < 1e-6, "node {node:?}: hW/lambda defect {defect}");
        }
    }

    #[test]
    fn comparison_principle_for_ordered_boundary_data() {
        let opts = SolveOptions::default();
        let grid = disk_grid(65);
        let sol0 =
            solve_translator_graph(&disk(), &grid, 8.0, None, None, &opts).unwrap();
        let mut g2 = ScalarField::zeros(grid.clone());
        g2.values.iter_mut().for_each(|v| *v = 0.1);
        let sol1 =
            solve_translator_graph(&disk(), &grid, 8.0, Some(&g2), Some(&sol0.f), &opts).unwrap();
        for node in sol0.f.interior_nodes() {
            assert!(
                sol0.f.value(node) <= sol1.f.value(node) + 1e-6,
                "ordering violated at {node:?}"
            );
        }
    }

    #[test]
    fn uniqueness_under_perturbed_init() {
        let opts = SolveOptions::default();
        let grid = disk_grid(65);
        let sol = solve_translator_graph(&disk(), &grid, 16.0, None, None, &opts).unwrap();
        let noisy = perturb_field(&sol.f, 0.1, 42);
        let sol2 =
            solve_translator_graph(&disk(), &grid, 16.0, None, Some(&noisy), &opts).unwrap();
        let mut worst: f64 = 0.0;
        for node in sol.f.interior_nodes() {
            worst = worst.max((sol.f.value(node) - sol2.f.value(node)).abs());
        }
        assert!(worst <= 10.0 * opts.tol * 16.0, "solutions differ by {worst}");
    }

    #[test]
    fn plane_graph_flagged_degenerate() {
        // an artificial flat solution: h = 0 fails positivity, so the node
        // is flagged not regular
        let grid = disk_grid(65);
        let mask = crate::domain::build_mask(&disk(), &grid).unwrap();
        let sol = RegularizedSolution {
            lambda: 1.0,
            domain: disk(),
            f: mask,
            boundary: vec![],
            residual_sup: 0.0,
            newton_iterations: 0,
            continuation_trace: vec![],
            positive_interior: false,
        };
        let node = sol.f.interior_nodes()[0];
        let d = graph_curvatures(&sol, node).unwrap();
        assert!(!d.regular);
        assert!(d.kappas.iter().all(|k| k.abs() < 1e-12));
    }

    #[test]
    fn apex_curvatures_of_radial_cap() {
        // f = c (1 - x^2 - y^2): both principal curvatures at the apex are 2c
        // toward the downward normal
        let grid = disk_grid(129);
        let mask = crate::domain::build_mask(&disk(), &grid).unwrap();
        let mut f = mask.clone();
        let c = 0.7;
        for node in grid.iter_nodes() {
            let [x, y] = grid.coords(node);
            let k = grid.linear(node);
            f.values[k] = c * (1.0 - x * x - y * y);
        }
        let sol = RegularizedSolution {
            lambda: 1.0,
            domain: disk(),
            f,
            boundary: vec![],
            residual_sup: 0.0,
            newton_iterations: 0,
            continuation_trace: vec![],
            positive_interior: true,
        };
        let i = ((0.0 - grid.origin[0]) / grid.spacing[0]).round() as usize;
        let d = graph_curvatures(&sol, (i, i)).unwrap();
        assert!((d.kappas[0] - 2.0 * c).abs() < 1e-8, "kappas {:?}", d.kappas);
        assert!((d.kappas[1] - 2.0 * c).abs() < 1e-8);
    }

    #[test]
    fn u_scales_by_lambda() {
        let grid = disk_grid(65);
        let mask = crate::domain::build_mask(&disk(), &grid).unwrap();
        let mut f = mask.clone();
        f.values.iter_mut().for_each(|v| *v = 12.0);
        let sol = RegularizedSolution {
            lambda: 4.0,
            domain: disk(),
            f,
            boundary: vec![],
            residual_sup: 0.0,
            newton_iterations: 0,
            continuation_trace: vec![],
            positive_interior: true,
        };
        let u = u_lambda(&sol);
        assert!(u.values.iter().zip(&u.mask).all(|(v, &m)| {
            m == NodeClass::Outside || (*v - 3.0).abs() < 1e-15
        }));
    }
}
