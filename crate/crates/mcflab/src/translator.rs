//! Translating solitons and their variational structure.
//!
//! A surface translating with velocity v under mean curvature flow satisfies
//! `H = v^perp`; equivalently it is stationary for the weighted area
//! `integral of exp(v . x) dA`. This module carries the two closed-form(ish)
//! families used everywhere as references — the grim reaper curve and the
//! rotationally symmetric bowl — plus the discrete residual, the weighted-area
//! functional, and a sampled first-variation (stationarity) check.
//!
//! Velocities are slices whose last component is the vertical (graph)
//! direction. Graph surfaces over radial grids represent evenly/rotationally
//! symmetric objects; the weighted area then integrates the full object
//! (factor 2 for curves, 2 pi r for surfaces of revolution).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::mesh::{Grid, GridKind, NodeClass, ScalarField};
use crate::Result;

/// Family tag plus profile data of a translator.
#[derive(Debug, Clone, PartialEq)]
pub enum TranslatorFamily {
    /// Planar curve `y = -(1/c) ln cos(c x)` on `|x| < pi / (2c)`.
    GrimReaper { speed: f64 },
    /// Entire rotationally symmetric graph integrated from
    /// `phi'' / (1 + phi'^2) + phi' / r = c`, `phi(0) = phi'(0) = 0`.
    /// `profile` rows are `(r, phi, phi')` on a uniform radius grid.
    Bowl { speed: f64, max_radius: f64, profile: Vec<[f64; 3]> },
    /// A graph supplied numerically (no closed form attached).
    NumericGraph,
}

/// A translating-soliton candidate: velocity, surface dimension, family.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorSpec {
    /// Ambient velocity; last component is vertical.
    pub velocity: Vec<f64>,
    /// Dimension m of the surface (1 = curve, 2 = surface).
    pub surface_dim: usize,
    pub family: TranslatorFamily,
}

impl TranslatorSpec {
    pub fn validate(&self) -> Result<()> {
        let speed2: f64 = self.velocity.iter().map(|v| v * v).sum();
        if speed2 <= 0.0 {
            return Err(Error::Parameter("translator velocity must be nonzero".into()));
        }
        match (&self.family, self.surface_dim) {
            (TranslatorFamily::GrimReaper { .. }, 1) => Ok(()),
            (TranslatorFamily::Bowl { .. }, 2) => Ok(()),
            (TranslatorFamily::NumericGraph, 1 | 2) => Ok(()),
            (f, m) => Err(Error::Parameter(format!(
                "family {f:?} incompatible with surface dimension {m}"
            ))),
        }
    }
}

/// A graph y = f(x) over a planar or radial grid, oriented by the upward
/// normal `(-Df, 1)/W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSurface {
    pub field: ScalarField,
    /// Ambient space dimension: 2 for curves over radial grids, 3 for
    /// surfaces over radial (rotationally symmetric) or Cartesian grids.
    pub ambient_dim: usize,
}

impl GraphSurface {
    pub fn new(field: ScalarField, ambient_dim: usize) -> Result<Self> {
        match (field.grid.kind, ambient_dim) {
            (GridKind::Radial, 2 | 3) | (GridKind::Cartesian2d, 3) => {}
            _ => {
                return Err(Error::Parameter(format!(
                    "graph over {:?} grid cannot live in dimension {ambient_dim}",
                    field.grid.kind
                )))
            }
        }
        field.validate()?;
        Ok(GraphSurface { field, ambient_dim })
    }

    /// Surface dimension m = ambient - 1.
    pub fn surface_dim(&self) -> usize {
        self.ambient_dim - 1
    }
}

/// The grim reaper translating with velocity (0, c).
pub fn grim_reaper(speed: f64) -> Result<TranslatorSpec> {
    if speed <= 0.0 {
        return Err(Error::Parameter(format!("grim reaper speed must be positive, got {speed}")));
    }
    Ok(TranslatorSpec {
        velocity: vec![0.0, speed],
        surface_dim: 1,
        family: TranslatorFamily::GrimReaper { speed },
    })
}

/// Closed-form grim reaper profile: returns (y, y') at x for speed c.
pub fn grim_reaper_profile(speed: f64, x: f64) -> (f64, f64) {
    let cx = speed * x;
    (-(cx.cos()).ln() / speed, cx.tan())
}

/// The bowl soliton translating with velocity (0, 0, c), sampled on a uniform
/// radius grid out to `max_radius`.
pub fn bowl(speed: f64, max_radius: f64) -> Result<TranslatorSpec> {
    if speed <= 0.0 || max_radius <= 0.0 {
        return Err(Error::Parameter("bowl needs positive speed and max radius".into()));
    }
    let n = 2049usize;
    let radii: Vec<f64> = (0..n).map(|k| max_radius * k as f64 / (n - 1) as f64).collect();
    let prof = bowl_profile_at(speed, &radii)?;
    let profile =
        radii.iter().zip(prof).map(|(&r, (phi, dphi))| [r, phi, dphi]).collect();
    Ok(TranslatorSpec {
        velocity: vec![0.0, 0.0, speed],
        surface_dim: 2,
        family: TranslatorFamily::Bowl { speed, max_radius, profile },
    })
}

/// Integrates the bowl ODE to each requested radius (ascending order
/// required). Returns (phi, phi') per radius.
pub fn bowl_profile_at(speed: f64, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let c = speed;
    let rhs = move |r: f64, y: [f64; 2]| [y[1], (1.0 + y[1] * y[1]) * (c - y[1] / r)];
    // series start away from the axis:
    // phi = c r^2/4 + c^3 r^4/128, phi' = c r/2 + c^3 r^3/32
    let series = |r: f64| {
        let r2 = r * r;
        [c * r2 / 4.0 + c * c * c * r2 * r2 / 128.0, c * r / 2.0 + c * c * c * r * r2 / 32.0]
    };
    let r_start = 1e-6 / c.max(1.0);
    let mut out = Vec::with_capacity(radii.len());
    let mut t = r_start;
    let mut y = series(r_start);
    for &r in radii {
        if r < 0.0 {
            return Err(Error::Parameter("bowl radii must be nonnegative".into()));
        }
        if r <= r_start {
            let s = series(r.max(0.0));
            out.push((s[0], s[1]));
            continue;
        }
        y = rk45(&rhs, t, y, r, 1e-10, 1e-13).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("{msg} (last good radius {t:.6})")),
            other => other,
        })?;
        t = r;
        out.push((y[0], y[1]));
    }
    Ok(out)
}

/// Dormand-Prince 5(4) adaptive step from t0 to t1.
fn rk45(
    f: &impl Fn(f64, [f64; 2]) -> [f64; 2],
    t0: f64,
    y0: [f64; 2],
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<[f64; 2]> {
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = (span / 16.0).min(1e-2).max(1e-12);
    let hmin = span * 1e-14;
    let axpy = |y: [f64; 2], h: f64, ks: &[([f64; 2], f64)]| {
        let mut out = y;
        for (k, w) in ks {
            out[0] += h * w * k[0];
            out[1] += h * w * k[1];
        }
        out
    };
    let mut steps = 0usize;
    while t < t1 {
        if steps > 2_000_000 {
            return Err(Error::Numeric("rk45: step count exceeded".into()));
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }
        let k1 = f(t, y);
        let k2 = f(t + h * 0.2, axpy(y, h, &[(k1, A21)]));
        let k3 = f(t + h * 0.3, axpy(y, h, &[(k1, A31), (k2, A32)]));
        let k4 = f(t + h * 0.8, axpy(y, h, &[(k1, A41), (k2, A42), (k3, A43)]));
        let k5 =
            f(t + h * 8.0 / 9.0, axpy(y, h, &[(k1, A51), (k2, A52), (k3, A53), (k4, A54)]));
        let k6 =
            f(t + h, axpy(y, h, &[(k1, A61), (k2, A62), (k3, A63), (k4, A64), (k5, A65)]));
        let ynew = axpy(y, h, &[(k1, B1), (k3, B3), (k4, B4), (k5, B5), (k6, B6)]);
        let k7 = f(t + h, ynew);
        let mut errn = 0.0f64;
        for i in 0..2 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
            errn = errn.max((e / sc).abs());
        }
        if errn <= 1.0 {
            t += h;
            y = ynew;
        }
        let factor = if errn > 0.0 { 0.9 * errn.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        if h < hmin {
            return Err(Error::Numeric(format!("rk45: step underflow at t = {t:.6e}")));
        }
    }
    Ok(y)
}

/// Samples a translator family onto a radial graph surface. `axis_node` grids
/// put node 0 exactly on r = 0 (use these for residual tests); staggered
/// grids are cell-centered with one padded boundary node at the right end
/// (use these for quadrature, where the interior-node sum is an exact
/// midpoint rule over [0, rmax]).
pub fn sample_surface(
    spec: &TranslatorSpec,
    half_width: f64,
    n: usize,
    axis_node: bool,
) -> Result<GraphSurface> {
    spec.validate()?;
    let grid = radial_patch(half_width, n, axis_node)?;
    let mut field = ScalarField::zeros(grid);
    let last = field.grid.shape[0] - 1;
    let ambient = match &spec.family {
        TranslatorFamily::GrimReaper { speed } => {
            let lim = std::f64::consts::FRAC_PI_2 / speed;
            for i in 0..=last {
                let r = field.grid.coords((i, 0))[0];
                if r >= lim {
                    return Err(Error::Parameter(format!(
                        "grim reaper half-width {half_width} reaches the asymptote at {lim}"
                    )));
                }
                field.values[i] = grim_reaper_profile(*speed, r).0;
            }
            2
        }
        TranslatorFamily::Bowl { speed, .. } => {
            let radii: Vec<f64> = (0..=last).map(|i| field.grid.coords((i, 0))[0]).collect();
            let prof = bowl_profile_at(*speed, &radii)?;
            for (i, (phi, _)) in prof.into_iter().enumerate() {
                field.values[i] = phi;
            }
            3
        }
        TranslatorFamily::NumericGraph => {
            return Err(Error::Parameter("numeric graphs carry their own field".into()))
        }
    };
    field.mask[last] = NodeClass::Boundary;
    GraphSurface::new(field, ambient)
}

/// Radial patch grid over [0, rmax]; see `sample_surface` for the layouts.
pub fn radial_patch(rmax: f64, n: usize, axis_node: bool) -> Result<Grid> {
    if axis_node {
        Grid::radial(n, rmax, true)
    } else {
        if n < 3 || rmax <= 0.0 {
            return Err(Error::Parameter("radial patch needs n >= 3, rmax > 0".into()));
        }
        let dr = rmax / n as f64;
        Ok(Grid {
            kind: GridKind::Radial,
            shape: [n + 1, 1],
            spacing: [dr, 1.0],
            origin: [0.5 * dr, 0.0],
        })
    }
}

fn check_velocity(surface: &GraphSurface, v: &[f64]) -> Result<()> {
    if v.len() != surface.ambient_dim {
        return Err(Error::Parameter(format!(
            "velocity has {} components, ambient dimension is {}",
            v.len(),
            surface.ambient_dim
        )));
    }
    if v.iter().map(|c| c * c).sum::<f64>() <= 0.0 {
        return Err(Error::Parameter("velocity must be nonzero".into()));
    }
    if surface.field.grid.kind == GridKind::Radial && v[..v.len() - 1].iter().any(|&c| c != 0.0) {
        return Err(Error::Parameter(
            "radial graphs only support vertical velocities (symmetry)".into(),
        ));
    }
    Ok(())
}

/// Pointwise translator residual `r = div(Df/W) - (v_up - v_horiz . Df)/W`,
/// the defect of `H = v . nu` for the upward orientation. Zero exactly on
/// translators with velocity v; for a flat graph and vertical unit v it is
/// -1. Boundary nodes carry 0.
pub fn translator_residual(surface: &GraphSurface, v: &[f64]) -> Result<ScalarField> {
    check_velocity(surface, v)?;
    let f = &surface.field;
    let mut out = ScalarField::zeros(f.grid.clone());
    out.mask = f.mask.clone();
    let m = surface.surface_dim();
    let v_up = v[v.len() - 1];
    for node in f.grid.iter_nodes() {
        let k = f.grid.linear(node);
        if f.mask[k] != NodeClass::Interior {
            continue;
        }
        let g = f.gradient(node)?;
        let hs = f.hessian(node)?;
        let r = match f.grid.kind {
            GridKind::Radial => {
                let w2 = 1.0 + g[0] * g[0];
                let w = w2.sqrt();
                let rr = f.grid.coords(node)[0];
                let curv = if m >= 2 {
                    if f.grid.has_axis_node() && node.0 == 0 {
                        // f'/r -> f''(0) at the axis
                        hs[0][0] / (w2 * w) + hs[0][0] / w
                    } else {
                        hs[0][0] / (w2 * w) + g[0] / (rr * w)
                    }
                } else {
                    hs[0][0] / (w2 * w)
                };
                curv - v_up / w
            }
            GridKind::Cartesian2d => {
                let w2 = 1.0 + g[0] * g[0] + g[1] * g[1];
                let w = w2.sqrt();
                let bracket = hs[0][0] * (1.0 + g[1] * g[1]) - 2.0 * g[0] * g[1] * hs[0][1]
                    + hs[1][1] * (1.0 + g[0] * g[0]);
                bracket / (w2 * w) - (v_up - (v[0] * g[0] + v[1] * g[1])) / w
            }
            GridKind::AxisymRz => {
                return Err(Error::Parameter(
                    "translator residual expects radial or Cartesian graphs".into(),
                ))
            }
        };
        out.values[k] = r;
    }
    Ok(out)
}

/// Weighted area in scaled representation `mantissa * exp(log_offset)`.
/// `log_offset` is 0 unless the exponent guard (max |v . x| > 600) trips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedArea {
    pub mantissa: f64,
    pub log_offset: f64,
}

impl WeightedArea {
    pub fn value(&self) -> f64 {
        self.mantissa * self.log_offset.exp()
    }
}

/// Weighted area `sum over interior nodes of exp(v . x) W dV` (midpoint
/// quadrature). Radial graphs integrate the full symmetric object: factor 2
/// for curves (m = 1), 2 pi r for surfaces of revolution (m = 2).
pub fn weighted_area(surface: &GraphSurface, v: &[f64]) -> Result<WeightedArea> {
    check_velocity(surface, v)?;
    let f = &surface.field;
    let m = surface.surface_dim();
    let cell = f.grid.cell_measure();
    let v_up = v[v.len() - 1];

    // first pass: the exponent bound decides the scaling offset
    let mut emax = f64::NEG_INFINITY;
    let mut nodes = Vec::new();
    for node in f.grid.iter_nodes() {
        let k = f.grid.linear(node);
        if f.mask[k] != NodeClass::Interior {
            continue;
        }
        let x = f.grid.coords(node);
        let e = match f.grid.kind {
            GridKind::Radial => v_up * f.values[k],
            _ => v[0] * x[0] + v[1] * x[1] + v_up * f.values[k],
        };
        emax = emax.max(e);
        nodes.push((node, e));
    }
    if nodes.is_empty() {
        return Err(Error::Parameter("surface has no interior nodes".into()));
    }
    let offset = if emax.abs() > 600.0 { emax } else { 0.0 };

    let mut sum = 0.0f64;
    for (node, e) in nodes {
        let g = f.gradient(node)?;
        let w = match f.grid.kind {
            GridKind::Radial => (1.0 + g[0] * g[0]).sqrt(),
            _ => (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt(),
        };
        let measure = match (f.grid.kind, m) {
            (GridKind::Radial, 1) => 2.0 * cell,
            (GridKind::Radial, _) => 2.0 * std::f64::consts::PI * f.grid.coords(node)[0] * cell,
            _ => cell,
        };
        sum += (e - offset).exp() * w * measure;
    }
    Ok(WeightedArea { mantissa: sum, log_offset: offset })
}

/// Max first-variation magnitude of the weighted area over `trials` random
/// compactly supported quartic bump variations (deterministic seed). The
/// centered difference step follows the cube-root rule scaled by the field
/// amplitude. Translators return values at the discretization level;
/// non-stationary graphs return O(bump mass).
pub fn stationarity_check(surface: &GraphSurface, v: &[f64], trials: usize) -> Result<f64> {
    check_velocity(surface, v)?;
    if trials == 0 {
        return Err(Error::Parameter("stationarity check needs at least one trial".into()));
    }
    let f = &surface.field;
    let grid = f.grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d63666c6162);
    let fmax = f
        .values
        .iter()
        .zip(&f.mask)
        .filter(|(_, &m)| m != NodeClass::Outside)
        .map(|(v, _)| v.abs())
        .fold(0.0f64, f64::max);
    let eps = f64::EPSILON.cbrt() * (1.0 + fmax);

    let span0 = (grid.shape[0] - 1) as f64 * grid.spacing[0];
    let lo0 = grid.origin[0];
    let span1 = (grid.shape[1].saturating_sub(1)) as f64 * grid.spacing[1];
    let lo1 = grid.origin[1];

    let mut worst = 0.0f64;
    for _ in 0..trials {
        let c0 = lo0 + span0 * rng.random_range(0.25..0.75);
        let w0 = span0 * rng.random_range(0.08..0.2);
        let (c1, w1) = if grid.shape[1] > 1 {
            (lo1 + span1 * rng.random_range(0.25..0.75), span1 * rng.random_range(0.08..0.2))
        } else {
            (0.0, 1.0)
        };
        let two_d = grid.shape[1] > 1;
        let bump = move |x: [f64; 2]| {
            let s0 = (x[0] - c0) / w0;
            let b0 = if s0.abs() < 1.0 { (1.0 - s0 * s0) * (1.0 - s0 * s0) } else { 0.0 };
            let b1 = if two_d {
                let s1 = (x[1] - c1) / w1;
                if s1.abs() < 1.0 {
                    (1.0 - s1 * s1) * (1.0 - s1 * s1)
                } else {
                    0.0
                }
            } else {
                1.0
            };
            b0 * b1
        };
        let mut plus = surface.clone();
        let mut minus = surface.clone();
        for node in grid.iter_nodes() {
            let k = grid.linear(node);
            let b = bump(grid.coords(node));
            plus.field.values[k] += eps * b;
            minus.field.values[k] -= eps * b;
        }
        let ep = weighted_area(&plus, v)?;
        let em = weighted_area(&minus, v)?;
        let de = (ep.value() - em.value()) / (2.0 * eps);
        worst = worst.max(de.abs());
    }
    Ok(worst)
}
