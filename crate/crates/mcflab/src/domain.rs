//! Compact mean-convex regions: parametric families, masks, convexity checks.
//!
//! Five parametric families cover the experiments: the disk/ball, the ellipse,
//! an axisymmetric dumbbell (two spherical bulbs joined by a flat polynomial
//! neck), the lens (intersection of two disks, the one piecewise-smooth region
//! used by the prescribed-boundary flows), and a rectangle that exists to
//! exercise the mean-convexity failure path. Boundary mean curvature is
//! evaluated analytically from the parametrization, so convexity validation
//! carries no discretization error.

use crate::error::Error;
use crate::mesh::{Grid, GridKind, NodeClass, ScalarField};
use crate::Result;

/// Geometric description of a solve region.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// Disk of radius `radius` (n = 2, Cartesian grid) or ball (n = 3,
    /// axisymmetric grid; center then sits on the axis at z = center[1]).
    Disk {
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
        dim: u8,
    },
    /// Ellipse with semi-axes `a`, `b`; n = 2 only.
    Ellipse {
        a: f64,
        b: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Axisymmetric dumbbell: spherical bulbs of radius `bulb_radius` centered
    /// at z = +-`bulb_center` joined by an even quartic-in-z^2 neck of waist
    /// radius `neck_radius`. The neck meets the bulb circles with C^2 contact
    /// at |z| = `contact_z`; `neck_slope` is dq/dt at the waist in the t = z^2
    /// variable (small values give a long flat neck that pinches
    /// cylindrically). Defaults: contact_z = bulb_center - 0.6 * bulb_radius,
    /// neck_slope = 0.025.
    AxisymDumbbell {
        bulb_radius: f64,
        bulb_center: f64,
        neck_radius: f64,
        #[serde(default)]
        contact_z: Option<f64>,
        #[serde(default)]
        neck_slope: Option<f64>,
    },
    /// Intersection of the disks of radius `radius` centered (0, +-offset);
    /// n = 2 only. Corners at (+-sqrt(radius^2 - offset^2), 0).
    Lens { radius: f64, offset: f64 },
    /// Axis-aligned rectangle; fails mean convexity (straight sides).
    Rectangle { half_width: f64, half_height: f64 },
}

/// Result of a mean-convexity validation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvexityReport {
    pub pass: bool,
    /// Minimum scalar mean curvature of the boundary toward the inward normal.
    pub min_mean_curvature: f64,
    /// Location of that minimum.
    pub location: [f64; 2],
    /// Corner opening angles in radians (piecewise-smooth kinds only).
    pub corner_angles: Vec<f64>,
}

/// Quartic neck profile in the variable t = z^2:
/// `q(t) = r0 + b1 t + c2 t^2 + c3 t^3 + c4 t^4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeckPoly {
    pub r0: f64,
    pub b1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub contact_z: f64,
}

impl NeckPoly {
    pub fn eval(&self, t: f64) -> f64 {
        self.r0 + t * (self.b1 + t * (self.c2 + t * (self.c3 + t * self.c4)))
    }
    pub fn d1(&self, t: f64) -> f64 {
        self.b1 + t * (2.0 * self.c2 + t * (3.0 * self.c3 + t * 4.0 * self.c4))
    }
    pub fn d2(&self, t: f64) -> f64 {
        2.0 * self.c2 + t * (6.0 * self.c3 + t * 12.0 * self.c4)
    }

    /// Profile radius and its z-derivatives at 0 <= z <= contact_z.
    pub fn profile(&self, z: f64) -> (f64, f64, f64) {
        let t = z * z;
        let q = self.eval(t);
        let q1 = self.d1(t);
        let q2 = self.d2(t);
        (q, 2.0 * z * q1, 2.0 * q1 + 4.0 * t * q2)
    }
}

impl DomainSpec {
    /// Ambient dimension of the region (2 or 3).
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Disk { dim, .. } => *dim as usize,
            DomainSpec::AxisymDumbbell { .. } => 3,
            _ => 2,
        }
    }

    /// Grid kind the region is discretized on.
    pub fn grid_kind(&self) -> GridKind {
        if self.dim() == 3 {
            GridKind::AxisymRz
        } else {
            GridKind::Cartesian2d
        }
    }

    /// Checks the structural invariants of the spec itself.
    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainSpec::Disk { radius, dim, .. } => {
                if radius <= 0.0 {
                    return Err(Error::Specification("disk radius must be positive".into()));
                }
                if dim != 2 && dim != 3 {
                    return Err(Error::Specification(format!(
                        "disk dimension must be 2 or 3, got {dim}"
                    )));
                }
            }
            DomainSpec::Ellipse { a, b, .. } => {
                if a <= 0.0 || b <= 0.0 {
                    return Err(Error::Specification("ellipse semi-axes must be positive".into()));
                }
            }
            DomainSpec::AxisymDumbbell {
                bulb_radius,
                bulb_center,
                neck_radius,
                contact_z,
                neck_slope,
            } => {
                if bulb_radius <= 0.0 || neck_radius <= 0.0 {
                    return Err(Error::Specification("dumbbell radii must be positive".into()));
                }
                if neck_radius >= bulb_radius {
                    return Err(Error::Specification(
                        "dumbbell neck radius must be strictly less than the bulb radius".into(),
                    ));
                }
                if bulb_center <= bulb_radius {
                    return Err(Error::Specification(
                        "bulb centers must sit at |z| > bulb radius so the neck exists".into(),
                    ));
                }
                let zc = contact_z.unwrap_or(bulb_center - 0.6 * bulb_radius);
                if zc <= 0.0 || zc >= bulb_center {
                    return Err(Error::Specification(
                        "dumbbell contact_z must lie in (0, bulb_center)".into(),
                    ));
                }
                if (bulb_center - zc) >= bulb_radius {
                    return Err(Error::Specification("dumbbell contact_z misses the bulb circle".into()));
                }
                if let Some(s) = neck_slope {
                    if s < 0.0 {
                        return Err(Error::Specification("dumbbell neck_slope must be nonnegative".into()));
                    }
                }
            }
            DomainSpec::Lens { radius, offset } => {
                if radius <= 0.0 || offset <= 0.0 || offset >= radius {
                    return Err(Error::Specification(
                        "lens needs 0 < offset < radius so the circles intersect".into(),
                    ));
                }
            }
            DomainSpec::Rectangle { half_width, half_height } => {
                if half_width <= 0.0 || half_height <= 0.0 {
                    return Err(Error::Specification("rectangle half-extents must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// The dumbbell neck polynomial with C^2 contact to the bulb circle.
    pub fn neck_poly(&self) -> Result<NeckPoly> {
        let DomainSpec::AxisymDumbbell {
            bulb_radius,
            bulb_center,
            neck_radius,
            contact_z,
            neck_slope,
        } = *self
        else {
            return Err(Error::Specification("neck_poly is defined for dumbbells only".into()));
        };
        self.validate()?;
        let zc = contact_z.unwrap_or(bulb_center - 0.6 * bulb_radius);
        let beta = neck_slope.unwrap_or(0.025);
        // bulb circle values at the contact
        let v = (bulb_radius * bulb_radius - (zc - bulb_center) * (zc - bulb_center)).sqrt();
        let rp = (bulb_center - zc) / v;
        let rpp = -bulb_radius * bulb_radius / (v * v * v);
        // convert to the t = z^2 variable
        let tc = zc * zc;
        let q_c = v;
        let q1_c = rp / (2.0 * zc);
        let q2_c = (rpp - 2.0 * q1_c) / (4.0 * tc);
        // solve the 3x3 system for c2, c3, c4
        let a = [
            [tc * tc, tc * tc * tc, tc * tc * tc * tc],
            [2.0 * tc, 3.0 * tc * tc, 4.0 * tc * tc * tc],
            [2.0, 6.0 * tc, 12.0 * tc * tc],
        ];
        let rhs = [q_c - neck_radius - beta * tc, q1_c - beta, q2_c];
        let c = solve3(a, rhs)
            .ok_or_else(|| Error::Numeric("dumbbell contact system is singular".into()))?;
        let poly =
            NeckPoly { r0: neck_radius, b1: beta, c2: c[0], c3: c[1], c4: c[2], contact_z: zc };
        // the waist must be the global minimum: q positive and nondecreasing
        let steps = 256;
        for k in 0..=steps {
            let t = tc * k as f64 / steps as f64;
            if k > 0 && poly.d1(t) <= 0.0 {
                return Err(Error::Specification(format!(
                    "dumbbell neck is not monotone (q' <= 0 at t = {t:.3}); adjust contact_z or neck_slope"
                )));
            }
            if poly.eval(t) <= 0.0 {
                return Err(Error::Specification("dumbbell neck radius reaches zero".into()));
            }
        }
        Ok(poly)
    }

    /// Dumbbell boundary profile r = rho(z) with first and second derivatives.
    /// Valid for |z| < bulb_center + bulb_radius.
    pub fn dumbbell_profile(&self, z: f64) -> Result<(f64, f64, f64)> {
        let DomainSpec::AxisymDumbbell { bulb_radius, bulb_center, .. } = *self else {
            return Err(Error::Specification("dumbbell_profile is defined for dumbbells only".into()));
        };
        let poly = self.neck_poly()?;
        let az = z.abs();
        let sign = if z < 0.0 { -1.0 } else { 1.0 };
        if az <= poly.contact_z {
            let (r, r1, r2) = poly.profile(az);
            Ok((r, sign * r1, r2))
        } else {
            let dz = az - bulb_center;
            let rr = bulb_radius * bulb_radius - dz * dz;
            if rr <= 0.0 {
                return Err(Error::Parameter(format!("z = {z} is outside the dumbbell profile")));
            }
            let r = rr.sqrt();
            let r1 = -dz / r;
            let r2 = -bulb_radius * bulb_radius / (r * r * r);
            Ok((r, sign * r1, r2))
        }
    }

    /// Bounding box of the region in grid coordinates ((x, y) for planar
    /// kinds, (r, z) for axisymmetric kinds).
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            DomainSpec::Disk { radius, center, dim } => {
                if dim == 3 {
                    ([0.0, center[1] - radius], [radius, center[1] + radius])
                } else {
                    ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
                }
            }
            DomainSpec::Ellipse { a, b, center } => {
                ([center[0] - a, center[1] - b], [center[0] + a, center[1] + b])
            }
            DomainSpec::AxisymDumbbell { bulb_radius, bulb_center, .. } => {
                ([0.0, -(bulb_center + bulb_radius)], [bulb_radius, bulb_center + bulb_radius])
            }
            DomainSpec::Lens { radius, offset } => {
                let xc = (radius * radius - offset * offset).sqrt();
                ([-xc, -(radius - offset)], [xc, radius - offset])
            }
            DomainSpec::Rectangle { half_width, half_height } => {
                ([-half_width, -half_height], [half_width, half_height])
            }
        }
    }

    /// Signed inside/outside indicator in grid coordinates: negative strictly
    /// inside, positive outside. Not a true distance for every kind, but
    /// sign-exact, which is all the mask construction needs.
    pub fn sdf(&self, p: [f64; 2]) -> f64 {
        match *self {
            DomainSpec::Disk { radius, center, dim } => {
                if dim == 3 {
                    let r = p[0];
                    let z = p[1] - center[1];
                    (r * r + z * z).sqrt() - radius
                } else {
                    let dx = p[0] - center[0];
                    let dy = p[1] - center[1];
                    (dx * dx + dy * dy).sqrt() - radius
                }
            }
            DomainSpec::Ellipse { a, b, center } => {
                let dx = (p[0] - center[0]) / a;
                let dy = (p[1] - center[1]) / b;
                (dx * dx + dy * dy).sqrt() - 1.0
            }
            DomainSpec::AxisymDumbbell { bulb_radius, bulb_center, .. } => {
                let (r, z) = (p[0], p[1]);
                let zmax = bulb_center + bulb_radius;
                if z.abs() >= zmax {
                    return z.abs() - zmax + r;
                }
                match self.dumbbell_profile(z) {
                    Ok((rho, _, _)) => r - rho,
                    Err(_) => 1.0,
                }
            }
            DomainSpec::Lens { radius, offset } => {
                let d1 = (p[0] * p[0] + (p[1] - offset) * (p[1] - offset)).sqrt() - radius;
                let d2 = (p[0] * p[0] + (p[1] + offset) * (p[1] + offset)).sqrt() - radius;
                d1.max(d2)
            }
            DomainSpec::Rectangle { half_width, half_height } => {
                (p[0].abs() - half_width).max(p[1].abs() - half_height)
            }
        }
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(a);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for k in 0..3 {
        let mut m = a;
        for (r, row) in m.iter_mut().enumerate() {
            row[k] = b[r];
        }
        x[k] = det3(m) / det;
    }
    Some(x)
}

/// Scalar mean curvature of a surface of revolution r = rho(z) toward the
/// inward normal: `h = -rho'' / s^3 + 1 / (rho s)` with `s = sqrt(1 + rho'^2)`.
pub fn revolution_mean_curvature(rho: f64, rho1: f64, rho2: f64) -> f64 {
    let s2 = 1.0 + rho1 * rho1;
    let s = s2.sqrt();
    -rho2 / (s2 * s) + 1.0 / (rho * s)
}

/// Samples the boundary uniformly in parameter and reports the minimum scalar
/// mean curvature toward the inward normal, computed analytically from the
/// parametrization. For piecewise-smooth kinds the corner angles are checked
/// against pi.
pub fn validate_mean_convex(spec: &DomainSpec, samples: usize) -> Result<ConvexityReport> {
    spec.validate()?;
    if samples < 64 {
        return Err(Error::Parameter(format!("need samples >= 64, got {samples}")));
    }
    let mut min_h = f64::INFINITY;
    let mut loc = [0.0, 0.0];
    let mut corner_angles = Vec::new();
    match *spec {
        DomainSpec::Disk { radius, center, dim } => {
            min_h = if dim == 3 { 2.0 / radius } else { 1.0 / radius };
            loc = if dim == 3 { [radius, center[1]] } else { [center[0] + radius, center[1]] };
        }
        DomainSpec::Ellipse { a, b, center } => {
            for k in 0..samples {
                let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                let (s, c) = th.sin_cos();
                let denom = (a * a * s * s + b * b * c * c).powf(1.5);
                let h = a * b / denom;
                if h < min_h {
                    min_h = h;
                    loc = [center[0] + a * c, center[1] + b * s];
                }
            }
        }
        DomainSpec::AxisymDumbbell { bulb_radius, bulb_center, .. } => {
            // bulb caps are exact spheres: h = 2 / bulb_radius there
            min_h = 2.0 / bulb_radius;
            loc = [0.0, bulb_center + bulb_radius];
            // sample the neck in z; curvature from the closed-form profile
            let poly = spec.neck_poly()?;
            let zc = poly.contact_z;
            for k in 0..=samples {
                let z = -zc + 2.0 * zc * k as f64 / samples as f64;
                let (r, r1, r2) = spec.dumbbell_profile(z)?;
                let h = revolution_mean_curvature(r, r1, r2);
                if h < min_h {
                    min_h = h;
                    loc = [r, z];
                }
            }
        }
        DomainSpec::Lens { radius, offset } => {
            // both arcs are circles curving toward the lens: h = 1/radius on
            // the smooth part
            min_h = 1.0 / radius;
            loc = [0.0, radius - offset];
            let xc = (radius * radius - offset * offset).sqrt();
            let cosang = ((offset * offset - xc * xc) / (radius * radius)).clamp(-1.0, 1.0);
            let ang = cosang.acos();
            corner_angles = vec![ang, ang];
        }
        DomainSpec::Rectangle { .. } => {
            min_h = 0.0;
            loc = [0.0, 0.0];
            corner_angles = vec![std::f64::consts::FRAC_PI_2; 4];
        }
    }
    let corners_ok = corner_angles.iter().all(|&a| a <= std::f64::consts::PI + 1e-12);
    Ok(ConvexityReport {
        pass: min_h > 0.0 && corners_ok,
        min_mean_curvature: min_h,
        location: loc,
        corner_angles,
    })
}

/// Builds the mask layer of a field over `grid`: strictly inside -> interior,
/// the one-node collar just outside (any 8-neighborhood touching the inside)
/// -> boundary (these carry the Dirichlet value slot), the rest -> outside.
/// The collar guarantees every interior node has a full 3x3 stencil of
/// non-outside nodes.
pub fn build_mask(spec: &DomainSpec, grid: &Grid) -> Result<ScalarField> {
    spec.validate()?;
    if grid.kind != spec.grid_kind() {
        return Err(Error::Specification(format!(
            "domain of dimension {} needs a {:?} grid, got {:?}",
            spec.dim(),
            spec.grid_kind(),
            grid.kind
        )));
    }
    // coverage: grid extents must contain the bounding box plus one node
    let (lo, hi) = spec.bounding_box();
    let glo = grid.origin;
    let ghi = [
        grid.origin[0] + (grid.shape[0] - 1) as f64 * grid.spacing[0],
        grid.origin[1] + (grid.shape[1] - 1) as f64 * grid.spacing[1],
    ];
    let covers_low0 = if grid.kind == GridKind::AxisymRz {
        glo[0] <= 0.0 // the axis line is the natural left edge
    } else {
        glo[0] + grid.spacing[0] <= lo[0]
    };
    if !(covers_low0
        && glo[1] + grid.spacing[1] <= lo[1]
        && ghi[0] - grid.spacing[0] >= hi[0]
        && ghi[1] - grid.spacing[1] >= hi[1])
    {
        return Err(Error::Resolution(format!(
            "grid [{glo:?}, {ghi:?}] does not cover the domain box [{lo:?}, {hi:?}] with a one-node margin"
        )));
    }

    let mut field = ScalarField::zeros(grid.clone());
    let nx = grid.shape[0] as isize;
    let ny = grid.shape[1] as isize;
    let inside: Vec<bool> = grid.iter_nodes().map(|n| spec.sdf(grid.coords(n)) < 0.0).collect();
    for node in grid.iter_nodes() {
        let k = grid.linear(node);
        if inside[k] {
            field.mask[k] = NodeClass::Interior;
            continue;
        }
        let mut collar = false;
        'scan: for dj in -1..=1isize {
            for di in -1..=1isize {
                if di == 0 && dj == 0 {
                    continue;
                }
                let mut i = node.0 as isize + di;
                let j = node.1 as isize + dj;
                if i < 0 && grid.kind == GridKind::AxisymRz {
                    i = -i; // even reflection across the axis
                }
                if i < 0 || j < 0 || i >= nx || j >= ny {
                    continue;
                }
                if inside[(j * nx + i) as usize] {
                    collar = true;
                    break 'scan;
                }
            }
        }
        field.mask[k] = if collar { NodeClass::Boundary } else { NodeClass::Outside };
    }

    // resolution: the interior must exist and be at least 3 nodes wide
    // somewhere along each axis
    let mut max_run = [0usize; 2];
    for j in 0..grid.shape[1] {
        let mut run = 0usize;
        for i in 0..grid.shape[0] {
            if field.mask[grid.linear((i, j))] == NodeClass::Interior {
                run += 1;
                max_run[0] = max_run[0].max(run);
            } else {
                run = 0;
            }
        }
    }
    for i in 0..grid.shape[0] {
        let mut run = 0usize;
        for j in 0..grid.shape[1] {
            if field.mask[grid.linear((i, j))] == NodeClass::Interior {
                run += 1;
                max_run[1] = max_run[1].max(run);
            } else {
                run = 0;
            }
        }
    }
    if max_run[0] == 0 {
        return Err(Error::Resolution("no interior nodes: grid entirely outside the domain".into()));
    }
    if max_run[0] < 3 || (grid.shape[1] > 2 && max_run[1] < 3) {
        return Err(Error::Resolution(format!(
            "interior region thinner than 3 nodes everywhere (max runs {max_run:?})"
        )));
    }
    Ok(field)
}
