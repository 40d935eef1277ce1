//! Flows with prescribed boundary motion on planar lens regions.
//!
//! The region W is a lens: the initial curve Sigma is its upper arc (or, in
//! the degenerate variant, the straight chord), the lower arc Sigma' is the
//! track along which the curve's endpoints slide, and Gamma = the two corners
//! is where they start. The motion is given as two monotone arclength
//! parameter functions on Sigma'. Elliptic regularization imposes staircase
//! Dirichlet data: 0 on Sigma, lambda * (passage time) on the swept part of
//! Sigma', lambda * T on the unswept rest, with corners mollified over an
//! arclength collar of width 1/lambda. The rescaled solutions converge to the
//! arrival time of the boundary-driven flow; nodes whose value stays at the
//! horizon are flagged "not reached", and the reached/not-reached interface
//! estimates the limit curve M_infinity (straight segments in the plane).

use crate::domain::DomainSpec;
use crate::error::Error;
use crate::mesh::{Grid, NodeClass, NodeId, ScalarField};
use crate::regularize::{
    solve_translator_graph, u_lambda, LadderResult, RegularizedSolution, SolveOptions,
};
use crate::Result;

/// Shape of the initial curve Sigma (the upper boundary of the lens).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaShape {
    /// The upper circular arc of the lens.
    Arc,
    /// The straight chord between the corners (a minimal curve; the flow is
    /// static unless the boundary moves).
    Chord,
}

/// Horizon rule T(lambda).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// T = lambda^2 (grows superlinearly with lambda).
    LambdaSquared,
    /// Fixed horizon independent of lambda.
    Fixed(f64),
}

impl Horizon {
    pub fn t_of(&self, lambda: f64) -> f64 {
        match *self {
            Horizon::LambdaSquared => lambda * lambda,
            Horizon::Fixed(t) => t,
        }
    }
}

/// Prescribed boundary motion on a lens region.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundaryMotionSpec {
    /// The region W; `Lens` for flows, `Rectangle` admitted so hypothesis
    /// validation can exhibit its failure.
    pub w: DomainSpec,
    pub sigma: SigmaShape,
    /// Samples `(t, s_left, s_right)`: arclength positions of the two
    /// boundary points along Sigma', measured from the left corner.
    /// `Gamma_0 = Gamma` requires `s_left(0) = 0`, `s_right(0) = L'`.
    pub motion: Vec<[f64; 3]>,
    /// Limit parameters (s_left_inf, s_right_inf).
    pub gamma_inf: [f64; 2],
    pub horizon: Horizon,
}

impl BoundaryMotionSpec {
    /// Lens with static boundary points (the corners never move).
    pub fn static_lens(radius: f64, offset: f64, horizon: Horizon) -> Result<Self> {
        let geo = LensGeometry::new(radius, offset)?;
        Ok(BoundaryMotionSpec {
            w: DomainSpec::Lens { radius, offset },
            sigma: SigmaShape::Arc,
            motion: vec![[0.0, 0.0, geo.arc_length], [1.0, 0.0, geo.arc_length]],
            gamma_inf: [0.0, geo.arc_length],
            horizon,
        })
    }

    pub fn is_static(&self) -> bool {
        let l0 = self.motion.first().map(|m| [m[1], m[2]]);
        self.motion
            .iter()
            .all(|m| Some([m[1], m[2]]) == l0)
    }
}

/// Closed-form geometry of the lens boundary.
#[derive(Debug, Clone, Copy)]
pub struct LensGeometry {
    pub radius: f64,
    pub offset: f64,
    /// Corner half-width: corners at (+-corner_x, 0).
    pub corner_x: f64,
    /// Half-angle of each arc seen from its center.
    pub half_angle: f64,
    /// Arclength of each arc (both arcs share it).
    pub arc_length: f64,
}

impl LensGeometry {
    pub fn new(radius: f64, offset: f64) -> Result<Self> {
        DomainSpec::Lens { radius, offset }.validate()?;
        let corner_x = (radius * radius - offset * offset).sqrt();
        let half_angle = (corner_x / radius).asin();
        Ok(LensGeometry {
            radius,
            offset,
            corner_x,
            half_angle,
            arc_length: 2.0 * radius * half_angle,
        })
    }

    /// Point on Sigma' (lower arc) at arclength s from the left corner.
    pub fn sigma_prime_point(&self, s: f64) -> [f64; 2] {
        let psi = -self.half_angle + s / self.radius;
        [self.radius * psi.sin(), self.offset - self.radius * psi.cos()]
    }

    /// Point on the upper arc at parameter s in [0, arc_length] from the
    /// left corner.
    pub fn sigma_point(&self, s: f64) -> [f64; 2] {
        let phi = -self.half_angle + s / self.radius;
        [self.radius * phi.sin(), self.radius * phi.cos() - self.offset]
    }

    /// Distance from p to the upper arc (or chord) and to the lower arc,
    /// with the arclength of the lower-arc projection.
    fn project(&self, p: [f64; 2], sigma: SigmaShape) -> (f64, f64, f64) {
        // lower arc: clamp the angle around (0, offset)
        let psi = (p[0]).atan2(self.offset - p[1]);
        let psi_cl = psi.clamp(-self.half_angle, self.half_angle);
        let s_lower = (psi_cl + self.half_angle) * self.radius;
        let q = self.sigma_prime_point(s_lower);
        let d_lower = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        let d_upper = match sigma {
            SigmaShape::Arc => {
                let phi = (p[0]).atan2(p[1] + self.offset);
                let phi_cl = phi.clamp(-self.half_angle, self.half_angle);
                let s_upper = (phi_cl + self.half_angle) * self.radius;
                let q = self.sigma_point(s_upper);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            }
            SigmaShape::Chord => {
                let x = p[0].clamp(-self.corner_x, self.corner_x);
                ((p[0] - x).powi(2) + p[1] * p[1]).sqrt()
            }
        };
        (d_upper, d_lower, s_lower)
    }
}

/// Per-hypothesis validation outcome.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesisCheck {
    pub pass: bool,
    pub detail: String,
}

/// Report over the six structural hypotheses of the boundary-motion setup.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HypothesesReport {
    pub rows: [HypothesisCheck; 6],
}

impl HypothesesReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn check(pass: bool, detail: impl Into<String>) -> HypothesisCheck {
    HypothesisCheck { pass, detail: detail.into() }
}

/// Validates the six hypotheses: (1) piecewise-smooth decomposition with
/// corner set Gamma, (2) strict mean convexity plus corner angles <= pi,
/// (3) smooth motion starting at Gamma, (4) monotonicity, (5) a minimal
/// Sigma must start moving immediately, (6) smooth convergence to
/// Gamma_infinity.
pub fn validate_hypotheses(spec: &BoundaryMotionSpec) -> Result<HypothesesReport> {
    spec.w.validate()?;
    let (lens, geo) = match spec.w {
        DomainSpec::Lens { radius, offset } => (true, Some(LensGeometry::new(radius, offset)?)),
        DomainSpec::Rectangle { .. } => (false, None),
        _ => {
            return Err(Error::Specification(
                "boundary flows need a lens region (rectangle admitted for validation only)".into(),
            ))
        }
    };
    if spec.motion.len() < 2 {
        return Err(Error::Specification("boundary motion needs at least two samples".into()));
    }
    let arclen = geo.map(|g| g.arc_length).unwrap_or(1.0);

    // (1) decomposition
    let h1 = if lens {
        check(true, "two smooth arcs meeting at two corners")
    } else {
        check(true, "four smooth sides meeting at four corners")
    };

    // (2) mean convexity: Sigma' and Sigma strictly convex, corners <= pi
    let h2 = if !lens {
        check(false, "straight sides have zero mean curvature")
    } else if spec.sigma == SigmaShape::Chord {
        check(false, "the chord Sigma has zero mean curvature (minimal initial curve)")
    } else {
        let rep = crate::domain::validate_mean_convex(&spec.w, 64)?;
        check(
            rep.pass,
            format!("min boundary curvature {:.6}, corner angles <= pi", rep.min_mean_curvature),
        )
    };

    // (3) smooth sampled motion with Gamma_0 = Gamma
    let mut ok3 = (spec.motion[0][1]).abs() <= 1e-9 * arclen.max(1.0)
        && (spec.motion[0][2] - arclen).abs() <= 1e-9 * arclen.max(1.0)
        && spec.motion[0][0] == 0.0;
    for w in spec.motion.windows(2) {
        if w[1][0] <= w[0][0] {
            ok3 = false;
        }
    }
    for m in &spec.motion {
        if !(0.0..=arclen + 1e-12).contains(&m[1]) || !(0.0..=arclen + 1e-12).contains(&m[2]) {
            ok3 = false;
        }
    }
    let h3 = check(ok3, "samples strictly increasing in t, parameters in range, Gamma_0 = Gamma");

    // (4) monotone fronts that do not cross
    let mut ok4 = true;
    for w in spec.motion.windows(2) {
        if w[1][1] < w[0][1] - 1e-12 || w[1][2] > w[0][2] + 1e-12 {
            ok4 = false;
        }
    }
    for m in &spec.motion {
        if m[1] >= m[2] {
            ok4 = false;
        }
    }
    let h4 = check(ok4, "s_left nondecreasing, s_right nonincreasing, fronts disjoint");

    // (5) minimal Sigma must move immediately
    let h5 = if spec.sigma == SigmaShape::Chord {
        let m0 = &spec.motion[0];
        let m1 = &spec.motion[1];
        let moves = (m1[1] - m0[1]).abs() > 1e-12 || (m1[2] - m0[2]).abs() > 1e-12;
        check(moves, "Sigma is minimal (a chord): the boundary must move at t = 0+")
    } else {
        check(true, "Sigma is a strict arc, not minimal: vacuous")
    };

    // (6) smooth convergence to Gamma_infinity
    let last = spec.motion.last().unwrap();
    let prev = &spec.motion[spec.motion.len() - 2];
    let dt = last[0] - prev[0];
    let rate = ((last[1] - prev[1]).abs() + (last[2] - prev[2]).abs()) / dt.max(1e-12);
    let close = (last[1] - spec.gamma_inf[0]).abs() <= 0.01 * arclen
        && (last[2] - spec.gamma_inf[1]).abs() <= 0.01 * arclen;
    let h6 = check(
        close && rate <= 0.05 * arclen.max(1.0),
        format!("final parameters within 1% of Gamma_inf, final rate {rate:.4}"),
    );

    Ok(HypothesesReport { rows: [h1, h2, h3, h4, h5, h6] })
}

/// Generalized-graph certificate of a boundary node: the continuum staircase
/// crosses the vertical line over a static corner in a segment, elsewhere in
/// a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    Point,
    Segment,
}

/// Dirichlet trace of the staircase boundary surface at one lambda.
#[derive(Debug, Clone)]
pub struct StaircaseData {
    pub lambda: f64,
    pub t_horizon: f64,
    /// Full-grid field carrying the trace at boundary nodes (0 elsewhere).
    pub trace: ScalarField,
    pub certificates: Vec<(NodeId, Certificate)>,
    /// Corner mollification collar, arclength 1/lambda.
    pub collar: f64,
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// First passage time of the left front through arclength s (INFINITY when
/// never swept within the sampled motion).
fn passage_left(motion: &[[f64; 3]], s: f64) -> f64 {
    if s <= motion[0][1] {
        return motion[0][0];
    }
    for w in motion.windows(2) {
        if s <= w[1][1] {
            let span = w[1][1] - w[0][1];
            if span <= 0.0 {
                return w[1][0];
            }
            let frac = (s - w[0][1]) / span;
            return w[0][0] + frac * (w[1][0] - w[0][0]);
        }
    }
    f64::INFINITY
}

fn passage_right(motion: &[[f64; 3]], s: f64) -> f64 {
    if s >= motion[0][2] {
        return motion[0][0];
    }
    for w in motion.windows(2) {
        if s >= w[1][2] {
            let span = w[0][2] - w[1][2];
            if span <= 0.0 {
                return w[1][0];
            }
            let frac = (w[0][2] - s) / span;
            return w[0][0] + frac * (w[1][0] - w[0][0]);
        }
    }
    f64::INFINITY
}

/// Builds the staircase Dirichlet trace over the boundary collar of `grid`:
/// 0 on Sigma, `lambda * min(passage time, T)` on Sigma', with corner jumps
/// mollified over an arclength collar of width 1/lambda. Static corners get
/// `Segment` certificates (the continuum staircase is vertical there).
pub fn staircase(spec: &BoundaryMotionSpec, grid: &Grid, lambda: f64) -> Result<StaircaseData> {
    if lambda <= 0.0 {
        return Err(Error::Parameter(format!("staircase needs lambda > 0, got {lambda}")));
    }
    let DomainSpec::Lens { radius, offset } = spec.w else {
        return Err(Error::Specification("staircase data is defined on lens regions".into()));
    };
    let geo = LensGeometry::new(radius, offset)?;
    let t_horizon = spec.horizon.t_of(lambda);
    let collar = 1.0 / lambda;
    let mask = crate::domain::build_mask(&spec.w, grid)?;
    let mut trace = ScalarField::zeros(grid.clone());
    trace.mask = mask.mask.clone();
    let mut certificates = Vec::new();

    // does each corner jump? (static side => vertical segment over Gamma)
    let left_static = passage_left(&spec.motion, 1e-9 * geo.arc_length).is_infinite();
    let right_static = passage_right(&spec.motion, geo.arc_length * (1.0 - 1e-9)).is_infinite();

    for node in grid.iter_nodes() {
        let k = grid.linear(node);
        if trace.mask[k] != NodeClass::Boundary {
            continue;
        }
        let p = grid.coords(node);
        let (d_up, d_low, s) = geo.project(p, spec.sigma);
        let (value, cert) = if d_up <= d_low {
            (0.0, Certificate::Point)
        } else {
            let tau = passage_left(&spec.motion, s).min(passage_right(&spec.motion, s));
            let capped = tau.min(t_horizon);
            // corner mollification: ramp from 0 over an arclength collar
            let ramp_l = smoothstep(s / collar);
            let ramp_r = smoothstep((geo.arc_length - s) / collar);
            let v = capped.min(t_horizon * ramp_l).min(t_horizon * ramp_r);
            let near_left = s <= collar && left_static;
            let near_right = (geo.arc_length - s) <= collar && right_static;
            let cert = if near_left || near_right { Certificate::Segment } else { Certificate::Point };
            (lambda * v, cert)
        };
        trace.values[k] = value;
        certificates.push((node, cert));
    }
    Ok(StaircaseData { lambda, t_horizon, trace, certificates, collar })
}

/// Output of a boundary-driven regularized flow.
#[derive(Debug, Clone)]
pub struct BoundaryFlow {
    pub ladder: LadderResult,
    pub solutions: Vec<RegularizedSolution>,
    /// Arrival estimate u = F_lambda / lambda at the largest lambda.
    pub u: ScalarField,
    /// Per-node flag: true when the flow reaches the node before the horizon.
    pub reached: Vec<bool>,
    pub t_horizon: f64,
}

/// Fraction of the horizon above which a node counts as "not reached".
pub const NOT_REACHED_FRACTION: f64 = 0.5;

/// Solves the boundary-motion flow along a lambda ladder.
///
/// Hypotheses (1), (3), (4), (6) are hard requirements. The degenerate
/// chord-with-static-boundary case (which fails (2) and (5): a minimal
/// initial curve that never moves) short-circuits to the exact answer
/// u = 0 on Sigma, nothing else reached. The first ladder member uses an
/// amplitude homotopy on the staircase data; later members warm-start from
/// the rescaled previous solution.
pub fn solve_boundary_flow(
    spec: &BoundaryMotionSpec,
    grid: &Grid,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<BoundaryFlow> {
    let report = validate_hypotheses(spec)?;
    for (i, row) in report.rows.iter().enumerate() {
        let required = matches!(i, 0 | 2 | 3 | 5);
        if required && !row.pass {
            return Err(Error::Specification(format!(
                "hypothesis ({}) fails: {}",
                i + 1,
                row.detail
            )));
        }
    }
    if schedule.is_empty() {
        return Err(Error::Parameter("lambda schedule must be nonempty".into()));
    }
    let lambda_max = *schedule.last().unwrap();
    let t_horizon = spec.horizon.t_of(lambda_max);

    if spec.sigma == SigmaShape::Chord && spec.is_static() {
        // minimal initial curve, static boundary: the flow never moves;
        // u = 0 on Sigma exactly and no interior point is ever reached
        let mask = crate::domain::build_mask(&spec.w, grid)?;
        let mut u = mask.clone();
        let mut reached = vec![false; grid.num_nodes()];
        for node in grid.iter_nodes() {
            let k = grid.linear(node);
            match u.mask[k] {
                NodeClass::Interior => u.values[k] = t_horizon,
                NodeClass::Boundary => {
                    let DomainSpec::Lens { radius, offset } = spec.w else { unreachable!() };
                    let geo = LensGeometry::new(radius, offset)?;
                    let p = grid.coords(node);
                    let (d_up, d_low, _) = geo.project(p, spec.sigma);
                    if d_up <= d_low {
                        u.values[k] = 0.0;
                        reached[k] = true;
                    } else {
                        u.values[k] = t_horizon;
                    }
                }
                NodeClass::Outside => {}
            }
        }
        return Ok(BoundaryFlow {
            ladder: LadderResult {
                schedule: schedule.to_vec(),
                summaries: vec![],
                u_diffs: vec![],
                probe_nodes: vec![],
            },
            solutions: vec![],
            u,
            reached,
            t_horizon,
        });
    }
    if !report.rows[1].pass {
        return Err(Error::Specification(format!(
            "hypothesis (2) fails: {}",
            report.rows[1].detail
        )));
    }

    let mut solutions: Vec<RegularizedSolution> = Vec::new();
    let mut summaries = Vec::new();
    let mut u_diffs = Vec::new();
    let mut probe_nodes: Vec<NodeId> = Vec::new();
    let mut prev_u: Option<ScalarField> = None;
    let mut trace_hist: Vec<(f64, f64)> = Vec::new();

    for (step, &lambda) in schedule.iter().enumerate() {
        let stair = staircase(spec, grid, lambda)?;
        let warm = solutions.last().map(|prev| {
            let mut f = prev.f.clone();
            let scale = lambda / prev.lambda;
            f.values.iter_mut().for_each(|v| *v *= scale);
            f
        });
        let start_fraction = solutions.last().map(|prev| prev.lambda / lambda).unwrap_or(0.0);
        let mut sol = match solve_translator_graph(
            &spec.w,
            grid,
            lambda,
            Some(&stair.trace),
            warm.as_ref(),
            opts,
        ) {
            Ok(s) => s,
            Err(Error::NonConvergence { .. }) => {
                // amplitude continuation: for the staircase, scaling the data
                // by s equals shrinking the horizon to s T, so this ramps the
                // interior cliff up gradually. The previous rung's unscaled
                // solution is exactly the s = lambda_prev/lambda data level.
                let carry = solutions.last().map(|prev| prev.f.clone());
                amplitude_continuation(&spec.w, grid, lambda, &stair.trace, carry, start_fraction, opts)
                    .map_err(|e| Error::Ladder { lambda, source: Box::new(e) })?
            }
            Err(e) => return Err(Error::Ladder { lambda, source: Box::new(e) }),
        };
        trace_hist.push((lambda, sol.residual_sup));
        sol.continuation_trace = trace_hist.clone();

        let u = u_lambda(&sol);
        if step == 0 {
            // probes: interior nodes clearly reached at the first lambda
            let cut = NOT_REACHED_FRACTION * spec.horizon.t_of(lambda);
            probe_nodes = grid
                .iter_nodes()
                .filter(|&n| u.class(n) == NodeClass::Interior && u.value(n) < cut)
                .collect();
        }
        if let Some(prev) = &prev_u {
            let diff = probe_nodes
                .iter()
                .map(|&n| (u.value(n) - prev.value(n)).abs())
                .fold(0.0f64, f64::max);
            u_diffs.push(diff);
        }
        summaries.push(crate::regularize::summarize(&sol)?);
        prev_u = Some(u);
        solutions.push(sol);
    }

    let last = solutions.last().unwrap();
    let u = u_lambda(last);
    let cut = NOT_REACHED_FRACTION * t_horizon;
    let reached = grid
        .iter_nodes()
        .map(|n| match u.class(n) {
            NodeClass::Outside => false,
            _ => u.value(n) < cut,
        })
        .collect();

    Ok(BoundaryFlow {
        ladder: LadderResult {
            schedule: schedule.to_vec(),
            summaries,
            u_diffs,
            probe_nodes,
        },
        solutions,
        u,
        reached,
        t_horizon,
    })
}

/// Adaptive amplitude continuation for the staircase data: solve with data
/// `s * g` for an increasing sequence of fractions s, warm-starting each
/// stage, growing the increment after successes and shrinking it after
/// failures. Intermediate stages run with a loose tolerance and a fail-fast
/// iteration budget; the final full-amplitude solve uses the caller's
/// options.
fn amplitude_continuation(
    w: &DomainSpec,
    grid: &Grid,
    lambda: f64,
    g_full: &ScalarField,
    mut carry: Option<ScalarField>,
    start_fraction: f64,
    opts: &SolveOptions,
) -> Result<RegularizedSolution> {
    let loose = SolveOptions { tol: 1e-5, max_iterations: 40, ..*opts };
    let mut achieved = start_fraction.clamp(0.0, 0.99);
    let mut step = (0.25 * achieved).max(0.025);
    loop {
        let s = (achieved + step).min(1.0);
        let mut g = g_full.clone();
        g.values.iter_mut().for_each(|v| *v *= s);
        let stage_opts = if s >= 1.0 { *opts } else { loose };
        match solve_translator_graph(w, grid, lambda, Some(&g), carry.as_ref(), &stage_opts) {
            Ok(sol) => {
                if s >= 1.0 {
                    return Ok(sol);
                }
                achieved = s;
                carry = Some(sol.f);
                step = (step * 1.6).min(1.0 - achieved);
            }
            Err(Error::NonConvergence { .. }) => {
                step *= 0.35;
                if step < 1e-3 {
                    return Err(Error::NonConvergence {
                        lambda,
                        residual: f64::NAN,
                        iterations: 0,
                        iterate: Box::new(carry.unwrap_or_else(|| g_full.clone())),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Sampled limit curve M_infinity with its maximum deviation from a straight
/// segment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LimitSurface {
    pub polyline: Vec<[f64; 2]>,
    pub max_deviation_from_straight: f64,
}

/// Extracts the reached/not-reached interface as a polyline (one point per
/// grid column, at the midpoint of the flip) and reports its maximum
/// deviation from the straight segment between its endpoints. When nothing
/// in the interior is reached but Sigma carries zero arrival values (the
/// static minimal curve), M_infinity is Sigma itself.
pub fn limit_surface(spec: &BoundaryMotionSpec, flow: &BoundaryFlow) -> Result<LimitSurface> {
    let grid = &flow.u.grid;
    let [nx, ny] = grid.shape;
    let mut polyline = Vec::new();
    for i in 0..nx {
        // scan the column downward: the interface is the lowest flip from
        // reached to not-reached among interior nodes
        let mut prev: Option<(usize, bool)> = None;
        let mut flip: Option<f64> = None;
        for j in (0..ny).rev() {
            let k = grid.linear((i, j));
            if flow.u.mask[k] != NodeClass::Interior {
                continue;
            }
            let r = flow.reached[k];
            if let Some((jprev, rprev)) = prev {
                if rprev && !r {
                    let y0 = grid.coords((i, jprev))[1];
                    let y1 = grid.coords((i, j))[1];
                    flip = Some(0.5 * (y0 + y1));
                }
            }
            prev = Some((j, r));
        }
        if let Some(y) = flip {
            polyline.push([grid.coords((i, 0))[0], y]);
        }
    }
    if polyline.is_empty() {
        // degenerate: no reached interior region
        let sigma_zero = grid.iter_nodes().any(|n| {
            flow.u.class(n) == NodeClass::Boundary && flow.reached[grid.linear(n)]
        });
        if sigma_zero {
            let DomainSpec::Lens { radius, offset } = spec.w else {
                return Err(Error::Degenerate("empty reached region".into()));
            };
            let geo = LensGeometry::new(radius, offset)?;
            let pts = (0..=64)
                .map(|k| {
                    let s = geo.arc_length * k as f64 / 64.0;
                    match spec.sigma {
                        SigmaShape::Arc => geo.sigma_point(s),
                        SigmaShape::Chord => {
                            [-geo.corner_x + 2.0 * geo.corner_x * k as f64 / 64.0, 0.0]
                        }
                    }
                })
                .collect::<Vec<_>>();
            let dev = deviation_from_segment(&pts);
            return Ok(LimitSurface { polyline: pts, max_deviation_from_straight: dev });
        }
        return Err(Error::Degenerate("empty reached region and no arrival data on Sigma".into()));
    }
    let dev = deviation_from_segment(&polyline);
    Ok(LimitSurface { polyline, max_deviation_from_straight: dev })
}

fn deviation_from_segment(pts: &[[f64; 2]]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let a = pts[0];
    let b = *pts.last().unwrap();
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let mut worst: f64 = 0.0;
    for p in pts {
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + t * d[0], a[1] + t * d[1]];
        worst = worst.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
    }
    worst
}
