//! Billiard tables: oriented boundary components and lattice tilings.
//!
//! A table is the intersection of the regions bounded by its components.
//! Each component carries an inward normal (pointing into the region the
//! particle moves in); the tangent at a boundary point is fixed by requiring
//! `cross(tangent, inward_normal) = +1`, which gives every component the same
//! chirality. That matters for the no-slip law, whose rotational/tangential
//! coupling changes sign with the tangent.
//!
//! Unbounded periodic tables (Sinai cells on a torus, the Galton board) are
//! described by a template scatterer replicated over a lattice; scatterers are
//! generated on demand by lattice-cell lookup.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::CollisionRule;

pub type Vec2 = Vector2<f64>;

/// Tolerance used for "point lies on the boundary", relative to the table scale.
pub const ON_BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid table parameter: {0}")]
    InvalidParameter(String),
    #[error("point ({x}, {y}) is {distance:e} away from component {component}")]
    OffBoundary {
        component: usize,
        x: f64,
        y: f64,
        distance: f64,
    },
    #[error("unknown component id {0}")]
    UnknownComponent(usize),
}

fn invalid(msg: impl Into<String>) -> GeometryError {
    GeometryError::InvalidParameter(msg.into())
}

fn rot_cw(v: Vec2) -> Vec2 {
    Vec2::new(v.y, -v.x)
}

fn rot_ccw(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// 2D scalar cross product.
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Geometric shape of a boundary component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Points `origin + u * direction` for `u` in `[start, end]`; either bound
    /// may be infinite (half-lines, full lines).
    Segment {
        origin: Vec2,
        direction: Vec2,
        start: f64,
        end: f64,
        interior_left: bool,
    },
    Circle {
        center: Vec2,
        radius: f64,
        /// `true` for a scatterer (particle moves outside the disk).
        interior_outside: bool,
    },
    /// Counter-clockwise arc from `start_angle` spanning `span` radians.
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        span: f64,
        interior_outside: bool,
    },
}

/// Where a boundary point sits on its component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    Interior,
    /// Within tolerance of a non-smooth endpoint.
    Endpoint,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryComponent {
    pub id: usize,
    pub shape: Shape,
    pub rule: CollisionRule,
    /// Template component replicated over the table's lattice tiling.
    pub replicated: bool,
}

impl BoundaryComponent {
    pub fn segment(
        id: usize,
        a: Vec2,
        b: Vec2,
        interior_left: bool,
    ) -> Result<Self, GeometryError> {
        let d = b - a;
        let len = d.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(invalid("segment endpoints must be distinct"));
        }
        Ok(Self::new(
            id,
            Shape::Segment {
                origin: a,
                direction: d / len,
                start: 0.0,
                end: len,
                interior_left,
            },
        ))
    }

    /// Line or half-line through `origin` along `direction`, oriented so that
    /// `interior_probe` lies on the inward side.
    pub fn line_facing(
        id: usize,
        origin: Vec2,
        direction: Vec2,
        start: f64,
        end: f64,
        interior_probe: Vec2,
    ) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(n > 0.0) || !(start < end) {
            return Err(invalid("degenerate line"));
        }
        let direction = direction / n;
        let interior_left = cross(direction, interior_probe - origin) > 0.0;
        Ok(Self::new(
            id,
            Shape::Segment {
                origin,
                direction,
                start,
                end,
                interior_left,
            },
        ))
    }

    pub fn circle(
        id: usize,
        center: Vec2,
        radius: f64,
        interior_outside: bool,
    ) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("circle radius must be positive"));
        }
        Ok(Self::new(
            id,
            Shape::Circle {
                center,
                radius,
                interior_outside,
            },
        ))
    }

    pub fn arc(
        id: usize,
        center: Vec2,
        radius: f64,
        start_angle: f64,
        span: f64,
        interior_outside: bool,
    ) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(invalid("arc radius must be positive"));
        }
        if !(span > 0.0 && span <= TAU) {
            return Err(invalid("arc span must lie in (0, 2pi]"));
        }
        Ok(Self::new(
            id,
            Shape::Arc {
                center,
                radius,
                start_angle,
                span,
                interior_outside,
            },
        ))
    }

    fn new(id: usize, shape: Shape) -> Self {
        Self {
            id,
            shape,
            rule: CollisionRule::NoSlip,
            replicated: false,
        }
    }

    pub fn with_rule(mut self, rule: CollisionRule) -> Self {
        self.rule = rule;
        self
    }

    /// Copy translated by `offset`.
    pub fn translated(&self, offset: Vec2) -> Self {
        let mut out = *self;
        match &mut out.shape {
            Shape::Segment { origin, .. } => *origin += offset,
            Shape::Circle { center, .. } | Shape::Arc { center, .. } => *center += offset,
        }
        out
    }

    /// Unit inward normal at (or nearest to) `p`.
    pub fn inward_normal(&self, p: Vec2) -> Vec2 {
        match self.shape {
            Shape::Segment {
                direction,
                interior_left,
                ..
            } => {
                if interior_left {
                    rot_ccw(direction)
                } else {
                    rot_cw(direction)
                }
            }
            Shape::Circle {
                center,
                interior_outside,
                ..
            }
            | Shape::Arc {
                center,
                interior_outside,
                ..
            } => {
                let radial = (p - center).normalize();
                if interior_outside {
                    radial
                } else {
                    -radial
                }
            }
        }
    }

    /// Signed offset of `p` from the supporting curve, positive on the
    /// interior side. Arcs use their full circle.
    pub fn signed_offset(&self, p: Vec2) -> f64 {
        match self.shape {
            Shape::Segment { origin, .. } => self.inward_normal(p).dot(&(p - origin)),
            Shape::Circle {
                center,
                radius,
                interior_outside,
            }
            | Shape::Arc {
                center,
                radius,
                interior_outside,
                ..
            } => {
                let r = (p - center).norm() - radius;
                if interior_outside {
                    r
                } else {
                    -r
                }
            }
        }
    }

    /// Distance from `p` to the component itself (respecting segment and arc
    /// extents).
    pub fn distance(&self, p: Vec2) -> f64 {
        match self.shape {
            Shape::Segment {
                origin,
                direction,
                start,
                end,
                ..
            } => {
                let u = (p - origin).dot(&direction).clamp(start, end);
                (p - (origin + direction * u)).norm()
            }
            Shape::Circle { center, radius, .. } => ((p - center).norm() - radius).abs(),
            Shape::Arc {
                center,
                radius,
                start_angle,
                span,
                ..
            } => {
                let rel = p - center;
                let ang = (rel.y.atan2(rel.x) - start_angle).rem_euclid(TAU);
                if ang <= span {
                    (rel.norm() - radius).abs()
                } else {
                    let a = center + radius * Vec2::new(start_angle.cos(), start_angle.sin());
                    let e = start_angle + span;
                    let b = center + radius * Vec2::new(e.cos(), e.sin());
                    (p - a).norm().min((p - b).norm())
                }
            }
        }
    }

    /// Classifies a point already known to lie on the supporting curve.
    pub fn placement(&self, p: Vec2, tol: f64) -> Placement {
        match self.shape {
            Shape::Segment {
                origin,
                direction,
                start,
                end,
                ..
            } => {
                let u = (p - origin).dot(&direction);
                if u < start - tol || u > end + tol {
                    Placement::Outside
                } else if (start.is_finite() && (u - start).abs() <= tol)
                    || (end.is_finite() && (u - end).abs() <= tol)
                {
                    Placement::Endpoint
                } else {
                    Placement::Interior
                }
            }
            Shape::Circle { .. } => Placement::Interior,
            Shape::Arc {
                center,
                radius,
                start_angle,
                span,
                ..
            } => {
                if span >= TAU {
                    return Placement::Interior;
                }
                let rel = p - center;
                let ang = (rel.y.atan2(rel.x) - start_angle).rem_euclid(TAU);
                let atol = tol / radius;
                if ang <= span - atol && ang >= atol {
                    Placement::Interior
                } else if ang <= span + atol || ang >= TAU - atol {
                    Placement::Endpoint
                } else {
                    Placement::Outside
                }
            }
        }
    }

    /// (tangent, inward normal) at `p`, with `cross(tangent, normal) = +1`.
    pub fn frame(&self, p: Vec2) -> (Vec2, Vec2) {
        let n = self.inward_normal(p);
        (rot_cw(n), n)
    }

    /// Normalized arclength position in `[0, 1)`, increasing along the tangent.
    pub fn arclength(&self, p: Vec2) -> f64 {
        let s = match self.shape {
            Shape::Segment {
                origin,
                direction,
                start,
                end,
                interior_left,
            } => {
                let u = (p - origin).dot(&direction);
                let frac = if start.is_finite() && end.is_finite() {
                    (u - start) / (end - start)
                } else {
                    // unbounded: squash onto (0, 1)
                    0.5 + u.atan() / PI
                };
                if interior_left {
                    frac
                } else {
                    1.0 - frac
                }
            }
            Shape::Circle {
                center,
                interior_outside,
                ..
            } => {
                let rel = p - center;
                let ang = rel.y.atan2(rel.x).rem_euclid(TAU) / TAU;
                if interior_outside {
                    1.0 - ang
                } else {
                    ang
                }
            }
            Shape::Arc {
                center,
                start_angle,
                span,
                interior_outside,
                ..
            } => {
                let rel = p - center;
                let frac = (rel.y.atan2(rel.x) - start_angle).rem_euclid(TAU) / span;
                if interior_outside {
                    1.0 - frac
                } else {
                    frac
                }
            }
        };
        let s = s.clamp(0.0, 1.0);
        if s >= 1.0 {
            0.0
        } else {
            s
        }
    }

    /// Ascending coefficients of the crossing polynomial for the trajectory
    /// `p(t) = pos + vel t + acc t^2 / 2`.
    pub fn crossing_coefficients(&self, pos: Vec2, vel: Vec2, acc: Vec2) -> [f64; 5] {
        match self.shape {
            Shape::Segment { origin, .. } => {
                let n = self.inward_normal(pos);
                [
                    n.dot(&(pos - origin)),
                    n.dot(&vel),
                    0.5 * n.dot(&acc),
                    0.0,
                    0.0,
                ]
            }
            Shape::Circle { center, radius, .. } | Shape::Arc { center, radius, .. } => {
                let w = pos - center;
                [
                    w.norm_squared() - radius * radius,
                    2.0 * w.dot(&vel),
                    vel.norm_squared() + w.dot(&acc),
                    vel.dot(&acc),
                    0.25 * acc.norm_squared(),
                ]
            }
        }
    }

    /// Orthogonal projection of `p` onto the supporting curve.
    pub fn project(&self, p: Vec2) -> Vec2 {
        match self.shape {
            Shape::Segment {
                origin, direction, ..
            } => origin + direction * (p - origin).dot(&direction),
            Shape::Circle { center, radius, .. } | Shape::Arc { center, radius, .. } => {
                center + (p - center).normalize() * radius
            }
        }
    }

    /// Axis-aligned bounds (may be infinite for lines).
    pub fn bounds(&self) -> (Vec2, Vec2) {
        match self.shape {
            Shape::Segment {
                origin,
                direction,
                start,
                end,
                ..
            } => {
                let a = point_at(origin, direction, start);
                let b = point_at(origin, direction, end);
                (
                    Vec2::new(a.x.min(b.x), a.y.min(b.y)),
                    Vec2::new(a.x.max(b.x), a.y.max(b.y)),
                )
            }
            Shape::Circle { center, radius, .. } | Shape::Arc { center, radius, .. } => {
                (center - Vec2::repeat(radius), center + Vec2::repeat(radius))
            }
        }
    }

    /// Total arclength (infinite for unbounded lines).
    pub fn length(&self) -> f64 {
        match self.shape {
            Shape::Segment { start, end, .. } => end - start,
            Shape::Circle { radius, .. } => TAU * radius,
            Shape::Arc { radius, span, .. } => radius * span,
        }
    }
}

fn point_at(origin: Vec2, direction: Vec2, u: f64) -> Vec2 {
    if u.is_infinite() {
        Vec2::new(
            if direction.x == 0.0 {
                origin.x
            } else {
                u.signum() * direction.x.signum() * f64::INFINITY
            },
            if direction.y == 0.0 {
                origin.y
            } else {
                u.signum() * direction.y.signum() * f64::INFINITY
            },
        )
    } else {
        origin + direction * u
    }
}

/// Lattice replication of the table's template components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tiling {
    None,
    /// Components inside the cell `[-w/2, w/2] x [-h/2, h/2]` are replicated
    /// at every `(i w, j h)`; the cell walls are identified.
    PeriodicRectangle {
        width: f64,
        height: f64,
    },
    /// Scatterers of radius `radius` at `origin + (j + k/2) a e_x + k a sqrt(3)/2 e_y`,
    /// with the row index `k` optionally restricted to `rows = (k_min, k_max)`.
    TriangularLattice {
        spacing: f64,
        radius: f64,
        origin: Vec2,
        rows: Option<(i64, i64)>,
    },
}

/// Identifies one concrete boundary piece: a component plus the lattice
/// cell it was replicated into (`(0, 0)` for fixed components).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContactId {
    pub component: usize,
    pub cell: (i64, i64),
}

impl ContactId {
    pub fn fixed(component: usize) -> Self {
        Self {
            component,
            cell: (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WedgeOrientation {
    OpeningUp,
    OpeningDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgeSpec {
    /// Angle between each wall and the vertical bisector.
    pub half_angle: f64,
    pub orientation: WedgeOrientation,
    #[serde(default = "origin")]
    pub vertex: [f64; 2],
}

fn origin() -> [f64; 2] {
    [0.0, 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum CellShape {
    Square { side: f64 },
    Hexagon { side: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelAxis {
    /// Walls at `y = +-w/2` running along the vertical axis.
    Vertical,
    /// Walls at `z = +-w/2` running along the horizontal axis.
    Horizontal,
}

/// Serializable description of a table; the CLI config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TableSpec {
    HalfPlane,
    Wedge(WedgeSpec),
    SinaiCell {
        cell: CellShape,
        scatterer_radius: f64,
        periodic: bool,
    },
    GaltonBoard {
        spacing: f64,
        scatterer_radius: f64,
        top_height: f64,
        terminal_height: f64,
    },
    TwoDisk {
        radius: f64,
    },
    Channel {
        width: f64,
        axis: ChannelAxis,
    },
    RegularPolygon {
        sides: usize,
        circumradius: f64,
    },
    Rectangle {
        width: f64,
        height: f64,
    },
}

impl TableSpec {
    pub fn build(&self) -> Result<Table, GeometryError> {
        match *self {
            TableSpec::HalfPlane => Ok(make_half_plane()),
            TableSpec::Wedge(spec) => make_wedge(spec),
            TableSpec::SinaiCell {
                cell,
                scatterer_radius,
                periodic,
            } => make_sinai_cell(cell, scatterer_radius, periodic),
            TableSpec::GaltonBoard {
                spacing,
                scatterer_radius,
                top_height,
                terminal_height,
            } => make_galton_board(spacing, scatterer_radius, top_height, terminal_height),
            TableSpec::TwoDisk { radius } => make_two_disk_table(radius),
            TableSpec::Channel { width, axis } => make_channel(width, axis),
            TableSpec::RegularPolygon {
                sides,
                circumradius,
            } => make_regular_polygon(sides, circumradius),
            TableSpec::Rectangle { width, height } => make_rectangle(width, height),
        }
    }
}

/// A billiard table. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TableSpec", try_from = "TableSpec")]
pub struct Table {
    name: String,
    components: Vec<BoundaryComponent>,
    tiling: Tiling,
    /// Horizontal line below which particles are absorbed.
    sink_height: Option<f64>,
    length_scale: f64,
    spec: TableSpec,
}

impl From<Table> for TableSpec {
    fn from(t: Table) -> Self {
        t.spec
    }
}

impl TryFrom<TableSpec> for Table {
    type Error = GeometryError;
    fn try_from(spec: TableSpec) -> Result<Self, Self::Error> {
        spec.build()
    }
}

impl Table {
    fn new(
        name: &str,
        components: Vec<BoundaryComponent>,
        length_scale: f64,
        spec: TableSpec,
    ) -> Self {
        Self {
            name: name.to_string(),
            components,
            tiling: Tiling::None,
            sink_height: None,
            length_scale,
            spec,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> &[BoundaryComponent] {
        &self.components
    }

    pub fn component(&self, id: usize) -> Result<&BoundaryComponent, GeometryError> {
        self.components
            .iter()
            .find(|c| c.id == id)
            .ok_or(GeometryError::UnknownComponent(id))
    }

    pub fn tiling(&self) -> Tiling {
        self.tiling
    }

    pub fn sink_height(&self) -> Option<f64> {
        self.sink_height
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn spec(&self) -> &TableSpec {
        &self.spec
    }

    /// Replaces the collision rule of every component (including lattice
    /// templates).
    pub fn with_rule(mut self, rule: CollisionRule) -> Self {
        for c in &mut self.components {
            c.rule = rule;
        }
        self
    }

    /// Sets the collision rule of one component.
    pub fn with_component_rule(
        mut self,
        id: usize,
        rule: CollisionRule,
    ) -> Result<Self, GeometryError> {
        let c = self
            .components
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or(GeometryError::UnknownComponent(id))?;
        c.rule = rule;
        Ok(self)
    }

    pub fn fixed_components(&self) -> impl Iterator<Item = &BoundaryComponent> {
        self.components.iter().filter(|c| !c.replicated)
    }

    pub fn has_lattice(&self) -> bool {
        !matches!(self.tiling, Tiling::None)
    }

    /// Size of one lattice cell (or the table scale when untiled).
    pub fn cell_size(&self) -> f64 {
        match self.tiling {
            Tiling::None => self.length_scale,
            Tiling::PeriodicRectangle { width, height } => width.max(height),
            Tiling::TriangularLattice { spacing, .. } => spacing,
        }
    }

    /// The concrete component for a contact.
    pub fn instance(&self, contact: ContactId) -> Result<BoundaryComponent, GeometryError> {
        let c = self.component(contact.component)?;
        if !c.replicated {
            return Ok(*c);
        }
        Ok(c.translated(self.cell_offset(contact.cell)))
    }

    fn cell_offset(&self, (i, j): (i64, i64)) -> Vec2 {
        match self.tiling {
            Tiling::None => Vec2::zeros(),
            Tiling::PeriodicRectangle { width, height } => {
                Vec2::new(i as f64 * width, j as f64 * height)
            }
            Tiling::TriangularLattice { spacing, .. } => {
                // cell = (column, row); the template sits at the lattice origin
                let (col, row) = (i, j);
                let shift = 0.5 * row.rem_euclid(2) as f64;
                Vec2::new(
                    (col as f64 + shift) * spacing,
                    row as f64 * spacing * 3f64.sqrt() / 2.0,
                )
            }
        }
    }

    /// All replicated instances whose bounds intersect the box `[lo, hi]`.
    pub fn replicated_in_box(
        &self,
        lo: Vec2,
        hi: Vec2,
        out: &mut Vec<(ContactId, BoundaryComponent)>,
    ) {
        match self.tiling {
            Tiling::None => {}
            Tiling::PeriodicRectangle { width, height } => {
                for c in self.components.iter().filter(|c| c.replicated) {
                    let (blo, bhi) = c.bounds();
                    let i0 = ((lo.x - bhi.x) / width).ceil() as i64;
                    let i1 = ((hi.x - blo.x) / width).floor() as i64;
                    let j0 = ((lo.y - bhi.y) / height).ceil() as i64;
                    let j1 = ((hi.y - blo.y) / height).floor() as i64;
                    for i in i0..=i1 {
                        for j in j0..=j1 {
                            let id = ContactId {
                                component: c.id,
                                cell: (i, j),
                            };
                            out.push((id, c.translated(self.cell_offset((i, j)))));
                        }
                    }
                }
            }
            Tiling::TriangularLattice {
                spacing,
                radius,
                origin,
                rows,
            } => {
                let Some(template) = self.components.iter().find(|c| c.replicated) else {
                    return;
                };
                let h = spacing * 3f64.sqrt() / 2.0;
                let mut k0 = ((lo.y - radius - origin.y) / h).ceil() as i64;
                let mut k1 = ((hi.y + radius - origin.y) / h).floor() as i64;
                if let Some((kmin, kmax)) = rows {
                    k0 = k0.max(kmin);
                    k1 = k1.min(kmax);
                }
                for k in k0..=k1 {
                    let shift = 0.5 * k.rem_euclid(2) as f64;
                    let j0 = ((lo.x - radius - origin.x) / spacing - shift).ceil() as i64;
                    let j1 = ((hi.x + radius - origin.x) / spacing - shift).floor() as i64;
                    for j in j0..=j1 {
                        let id = ContactId {
                            component: template.id,
                            cell: (j, k),
                        };
                        let center = origin + Vec2::new((j as f64 + shift) * spacing, k as f64 * h);
                        out.push((id, template.translated(center - template_center(template))));
                    }
                }
            }
        }
    }

    /// Whether `p` lies strictly inside the table.
    pub fn contains(&self, p: Vec2) -> bool {
        if let Some(sink) = self.sink_height {
            if p.y <= sink {
                return false;
            }
        }
        if !self.fixed_components().all(|c| c.signed_offset(p) > 0.0) {
            return false;
        }
        if self.has_lattice() {
            let r = Vec2::repeat(1e-12);
            let mut near = Vec::new();
            self.replicated_in_box(p - r, p + r, &mut near);
            if near.iter().any(|(_, c)| c.signed_offset(p) <= 0.0) {
                return false;
            }
        }
        true
    }

    /// The boundary piece `p` lies on, if any (within `tol` times the scale).
    pub fn contact_at(&self, p: Vec2) -> Option<ContactId> {
        let tol = ON_BOUNDARY_TOL * self.length_scale;
        let fixed = self
            .fixed_components()
            .map(|c| (ContactId::fixed(c.id), c.distance(p)))
            .filter(|(_, d)| *d <= tol);
        let mut near = Vec::new();
        self.replicated_in_box(p - Vec2::repeat(tol), p + Vec2::repeat(tol), &mut near);
        let lattice = near
            .iter()
            .map(|(id, c)| (*id, c.distance(p)))
            .filter(|(_, d)| *d <= tol);
        fixed
            .chain(lattice)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(id, _)| id)
    }

    /// Lattice scatterers (or replicated components) within `radius` of `p`,
    /// sorted by distance to their centers.
    pub fn scatterers_near(&self, p: Vec2, radius: f64) -> Vec<(ContactId, Vec2)> {
        let mut near = Vec::new();
        self.replicated_in_box(
            p - Vec2::repeat(radius),
            p + Vec2::repeat(radius),
            &mut near,
        );
        let mut out: Vec<(ContactId, Vec2)> = near
            .into_iter()
            .filter_map(|(id, c)| match c.shape {
                Shape::Circle { center, .. } | Shape::Arc { center, .. } => Some((id, center)),
                Shape::Segment { .. } => None,
            })
            .filter(|(_, c)| (c - p).norm() <= radius)
            .collect();
        out.sort_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()));
        out
    }

    /// Reduces a position into the fundamental cell of a periodic rectangle.
    pub fn wrap_to_cell(&self, p: Vec2) -> Vec2 {
        match self.tiling {
            Tiling::PeriodicRectangle { width, height } => Vec2::new(
                p.x - width * (p.x / width).round(),
                p.y - height * (p.y / height).round(),
            ),
            _ => p,
        }
    }

    /// Tangent and inward normal of component `component_id` at `p`.
    pub fn local_frame(&self, component_id: usize, p: Vec2) -> Result<(Vec2, Vec2), GeometryError> {
        let comp = self.component(component_id)?;
        let tol = ON_BOUNDARY_TOL * self.length_scale;
        let inst = if comp.replicated {
            let mut near = Vec::new();
            self.replicated_in_box(p - Vec2::repeat(tol), p + Vec2::repeat(tol), &mut near);
            near.into_iter()
                .filter(|(id, _)| id.component == component_id)
                .map(|(_, c)| c)
                .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
                .unwrap_or(*comp)
        } else {
            *comp
        };
        let d = inst.distance(p);
        if d > tol {
            return Err(GeometryError::OffBoundary {
                component: component_id,
                x: p.x,
                y: p.y,
                distance: d,
            });
        }
        Ok(inst.frame(p))
    }

    /// Normalized boundary coordinate: per-component arclength in `[0,1)`,
    /// concatenated in component-id order. Lattice instances share the
    /// template's coordinate.
    pub fn boundary_coordinate(&self, contact: ContactId, p: Vec2) -> f64 {
        let n = self.components.len().max(1);
        let idx = self
            .components
            .iter()
            .position(|c| c.id == contact.component)
            .unwrap_or(0);
        let local = self
            .instance(contact)
            .map(|c| c.arclength(p))
            .unwrap_or(0.0);
        ((idx as f64 + local) / n as f64).min(1.0 - f64::EPSILON)
    }
}

fn template_center(c: &BoundaryComponent) -> Vec2 {
    match c.shape {
        Shape::Circle { center, .. } | Shape::Arc { center, .. } => center,
        Shape::Segment { origin, .. } => origin,
    }
}

/// Upper half plane `z > 0` bounded by the line `z = 0`.
pub fn make_half_plane() -> Table {
    let line = BoundaryComponent::line_facing(
        0,
        Vec2::zeros(),
        Vec2::new(1.0, 0.0),
        f64::NEG_INFINITY,
        f64::INFINITY,
        Vec2::new(0.0, 1.0),
    )
    .expect("valid line");
    Table::new("half-plane", vec![line], 1.0, TableSpec::HalfPlane)
}

/// Wedge with vertical bisector; component 0 is the left wall, 1 the right.
pub fn make_wedge(spec: WedgeSpec) -> Result<Table, GeometryError> {
    let phi = spec.half_angle;
    if !(phi > 0.0 && phi < FRAC_PI_2) {
        return Err(invalid(format!("wedge half-angle {phi} outside (0, pi/2)")));
    }
    let v = Vec2::new(spec.vertex[0], spec.vertex[1]);
    let up = match spec.orientation {
        WedgeOrientation::OpeningUp => 1.0,
        WedgeOrientation::OpeningDown => -1.0,
    };
    let probe = v + Vec2::new(0.0, up);
    let left = BoundaryComponent::line_facing(
        0,
        v,
        Vec2::new(-phi.sin(), up * phi.cos()),
        0.0,
        f64::INFINITY,
        probe,
    )?;
    let right = BoundaryComponent::line_facing(
        1,
        v,
        Vec2::new(phi.sin(), up * phi.cos()),
        0.0,
        f64::INFINITY,
        probe,
    )?;
    Ok(Table::new(
        "wedge",
        vec![left, right],
        1.0,
        TableSpec::Wedge(spec),
    ))
}

/// Convex polygon from counter-clockwise vertices; one segment per edge.
fn polygon_components(
    vertices: &[Vec2],
    first_id: usize,
) -> Result<Vec<BoundaryComponent>, GeometryError> {
    let n = vertices.len();
    (0..n)
        .map(|i| BoundaryComponent::segment(first_id + i, vertices[i], vertices[(i + 1) % n], true))
        .collect()
}

fn regular_vertices(sides: usize, circumradius: f64, first_angle: f64) -> Vec<Vec2> {
    (0..sides)
        .map(|k| {
            let a = first_angle + TAU * k as f64 / sides as f64;
            circumradius * Vec2::new(a.cos(), a.sin())
        })
        .collect()
}

/// Regular polygon centered at the origin with a horizontal bottom edge.
pub fn make_regular_polygon(sides: usize, circumradius: f64) -> Result<Table, GeometryError> {
    if sides < 3 {
        return Err(invalid("polygon needs at least 3 sides"));
    }
    if !(circumradius > 0.0) {
        return Err(invalid("circumradius must be positive"));
    }
    let first = -FRAC_PI_2 - PI / sides as f64;
    let comps = polygon_components(&regular_vertices(sides, circumradius, first), 0)?;
    Ok(Table::new(
        "regular-polygon",
        comps,
        circumradius,
        TableSpec::RegularPolygon {
            sides,
            circumradius,
        },
    ))
}

/// Axis-aligned rectangle centered at the origin.
pub fn make_rectangle(width: f64, height: f64) -> Result<Table, GeometryError> {
    if !(width > 0.0 && height > 0.0) {
        return Err(invalid("rectangle sides must be positive"));
    }
    let (w, h) = (0.5 * width, 0.5 * height);
    let verts = [
        Vec2::new(-w, -h),
        Vec2::new(w, -h),
        Vec2::new(w, h),
        Vec2::new(-w, h),
    ];
    Ok(Table::new(
        "rectangle",
        polygon_components(&verts, 0)?,
        width.min(height),
        TableSpec::Rectangle { width, height },
    ))
}

/// Infinite channel between two parallel walls at distance `width`.
pub fn make_channel(width: f64, axis: ChannelAxis) -> Result<Table, GeometryError> {
    if !(width > 0.0) {
        return Err(invalid("channel width must be positive"));
    }
    let half = 0.5 * width;
    let (dir, normal) = match axis {
        ChannelAxis::Vertical => (Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)),
        ChannelAxis::Horizontal => (Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)),
    };
    let inf = f64::INFINITY;
    let a = BoundaryComponent::line_facing(0, -half * normal, dir, -inf, inf, Vec2::zeros())?;
    let b = BoundaryComponent::line_facing(1, half * normal, dir, -inf, inf, Vec2::zeros())?;
    Ok(Table::new(
        "channel",
        vec![a, b],
        width,
        TableSpec::Channel { width, axis },
    ))
}

/// Single disk scatterer in a square or hexagonal cell. Walls reflect when
/// `periodic` is false; otherwise the cell is a torus (square) or the
/// Voronoi cell of a triangular lattice (hexagon).
pub fn make_sinai_cell(
    cell: CellShape,
    scatterer_radius: f64,
    periodic: bool,
) -> Result<Table, GeometryError> {
    let spec = TableSpec::SinaiCell {
        cell,
        scatterer_radius,
        periodic,
    };
    let r = scatterer_radius;
    let (inradius, side) = match cell {
        CellShape::Square { side } => (0.5 * side, side),
        CellShape::Hexagon { side } => (0.5 * 3f64.sqrt() * side, side),
    };
    if !(side > 0.0) {
        return Err(invalid("cell side must be positive"));
    }
    if !(r > 0.0 && r < inradius) {
        return Err(invalid(format!(
            "scatterer radius {r} must lie in (0, {inradius}) to fit inside the cell"
        )));
    }
    let disk = BoundaryComponent::circle(0, Vec2::zeros(), r, true)?;
    let table = match (cell, periodic) {
        (CellShape::Square { side }, false) => {
            let h = 0.5 * side;
            let verts = [
                Vec2::new(-h, -h),
                Vec2::new(h, -h),
                Vec2::new(h, h),
                Vec2::new(-h, h),
            ];
            let mut comps = polygon_components(&verts, 0)?;
            comps.push(BoundaryComponent { id: 4, ..disk });
            Table::new("sinai-square", comps, side, spec)
        }
        (CellShape::Hexagon { side }, false) => {
            // pointy-top hexagon: Voronoi cell of a row-aligned triangular lattice
            let verts = regular_vertices(6, side, -FRAC_PI_2);
            let mut comps = polygon_components(&verts, 0)?;
            comps.push(BoundaryComponent { id: 6, ..disk });
            Table::new("sinai-hexagon", comps, side, spec)
        }
        (CellShape::Square { side }, true) => {
            let mut t = Table::new(
                "sinai-torus-square",
                vec![BoundaryComponent {
                    replicated: true,
                    ..disk
                }],
                side,
                spec,
            );
            t.tiling = Tiling::PeriodicRectangle {
                width: side,
                height: side,
            };
            t
        }
        (CellShape::Hexagon { side }, true) => {
            let mut t = Table::new(
                "sinai-torus-hexagon",
                vec![BoundaryComponent {
                    replicated: true,
                    ..disk
                }],
                side,
                spec,
            );
            t.tiling = Tiling::TriangularLattice {
                spacing: 3f64.sqrt() * side,
                radius: r,
                origin: Vec2::zeros(),
                rows: None,
            };
            t
        }
    };
    Ok(table)
}

/// Galton board: triangular lattice of pegs with rows spaced `a sqrt(3)/2`
/// from `top_height` down to (but not below) `terminal_height`, which acts
/// as an absorbing floor. The top row has a peg at `x = 0`.
pub fn make_galton_board(
    spacing: f64,
    scatterer_radius: f64,
    top_height: f64,
    terminal_height: f64,
) -> Result<Table, GeometryError> {
    let (a, r) = (spacing, scatterer_radius);
    if !(a > 0.0) {
        return Err(invalid("peg spacing must be positive"));
    }
    if !(r > 0.0 && 2.0 * r < a) {
        return Err(invalid(format!(
            "pegs overlap: need 0 < 2r < a (r = {r}, a = {a})"
        )));
    }
    if !(terminal_height < top_height) {
        return Err(invalid("terminal height must lie below the top row"));
    }
    let h = a * 3f64.sqrt() / 2.0;
    let n_rows = ((top_height - terminal_height) / h).floor() as i64;
    let origin = Vec2::new(0.0, top_height);
    let peg = BoundaryComponent {
        replicated: true,
        ..BoundaryComponent::circle(0, origin, r, true)?
    };
    let mut t = Table::new(
        "galton-board",
        vec![peg],
        a,
        TableSpec::GaltonBoard {
            spacing,
            scatterer_radius,
            top_height,
            terminal_height,
        },
    );
    // rows strictly above the floor
    let lowest = if (n_rows as f64) * h >= top_height - terminal_height {
        n_rows - 1
    } else {
        n_rows
    };
    t.tiling = Tiling::TriangularLattice {
        spacing: a,
        radius: r,
        origin,
        rows: Some((-lowest, 0)),
    };
    t.sink_height = Some(terminal_height);
    Ok(t)
}

/// Two disks of radius `radius` centered at `(-1, 0)` (component 0) and
/// `(1, 0)` (component 1).
pub fn make_two_disk_table(radius: f64) -> Result<Table, GeometryError> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(invalid(format!("disk radius {radius} outside (0, 1)")));
    }
    let a = BoundaryComponent::circle(0, Vec2::new(-1.0, 0.0), radius, true)?;
    let b = BoundaryComponent::circle(1, Vec2::new(1.0, 0.0), radius, true)?;
    Ok(Table::new(
        "two-disk",
        vec![a, b],
        1.0,
        TableSpec::TwoDisk { radius },
    ))
}

/// Opposed contact points on the two-disk table at angle `contact_angle`
/// above the horizontal: `q0` on the left disk, `q1` its mirror image.
pub fn two_disk_contact_points(radius: f64, contact_angle: f64) -> (Vec2, Vec2) {
    let (s, c) = contact_angle.sin_cos();
    (
        Vec2::new(-1.0 + radius * c, radius * s),
        Vec2::new(1.0 - radius * c, radius * s),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn half_plane_frame_and_contains() {
        let t = make_half_plane();
        let (tan, n) = t.local_frame(0, Vec2::new(5.0, 0.0)).unwrap();
        assert_relative_eq!(n, Vec2::new(0.0, 1.0));
        assert_relative_eq!(tan, Vec2::new(1.0, 0.0));
        assert!(t.contains(Vec2::new(0.0, 1.0)));
        assert!(!t.contains(Vec2::new(0.0, -1.0)));
        assert!(matches!(
            t.local_frame(0, Vec2::new(3.0, 0.5)),
            Err(GeometryError::OffBoundary { .. })
        ));
    }

    #[test]
    fn scatterer_frame_is_right_handed() {
        let c = BoundaryComponent::circle(0, Vec2::zeros(), 1.0, true).unwrap();
        let (t, n) = c.frame(Vec2::new(1.0, 0.0));
        assert_relative_eq!(n, Vec2::new(1.0, 0.0));
        // cross(t, n) = +1 fixes the tangent to point clockwise around a scatterer
        assert_relative_eq!(t, Vec2::new(0.0, -1.0));
        assert_relative_eq!(cross(t, n), 1.0);
    }

    #[test]
    fn wedge_walls_and_interior() {
        let phi = FRAC_PI_4;
        let t = make_wedge(WedgeSpec {
            half_angle: phi,
            orientation: WedgeOrientation::OpeningUp,
            vertex: [0.0, 0.0],
        })
        .unwrap();
        let dirs: Vec<Vec2> = t
            .components()
            .iter()
            .map(|c| match c.shape {
                Shape::Segment { direction, .. } => direction,
                _ => unreachable!(),
            })
            .collect();
        assert_relative_eq!(dirs[0], Vec2::new(-phi.sin(), phi.cos()), epsilon = 1e-15);
        assert_relative_eq!(dirs[1], Vec2::new(phi.sin(), phi.cos()), epsilon = 1e-15);
        assert!(t.contains(Vec2::new(0.0, 1.0)));
        assert!(!t.contains(Vec2::new(0.0, -1.0)));

        let seventh = PI / 7.0;
        let t7 = make_wedge(WedgeSpec {
            half_angle: seventh,
            orientation: WedgeOrientation::OpeningUp,
            vertex: [0.0, 0.0],
        })
        .unwrap();
        let d: Vec<Vec2> = t7
            .components()
            .iter()
            .map(|c| match c.shape {
                Shape::Segment { direction, .. } => direction,
                _ => unreachable!(),
            })
            .collect();
        assert_relative_eq!(d[0].angle(&d[1]), 2.0 * PI / 7.0, epsilon = 1e-14);

        let down = make_wedge(WedgeSpec {
            half_angle: PI / 3.0,
            orientation: WedgeOrientation::OpeningDown,
            vertex: [0.0, 0.0],
        })
        .unwrap();
        assert!(down.contains(Vec2::new(0.1, -1.0)));
        assert!(!down.contains(Vec2::new(0.0, 1.0)));
        assert!(!down.contains(Vec2::new(3.0, -1.0)));

        for bad in [0.0, FRAC_PI_2, -0.3, 2.0] {
            assert!(make_wedge(WedgeSpec {
                half_angle: bad,
                orientation: WedgeOrientation::OpeningUp,
                vertex: [0.0, 0.0]
            })
            .is_err());
        }
    }

    #[test]
    fn sinai_cells() {
        let t = make_sinai_cell(CellShape::Square { side: 2.0 }, 0.5, true).unwrap();
        assert_eq!(t.components().len(), 1);
        assert!(matches!(t.components()[0].shape, Shape::Circle { .. }));
        assert_eq!(
            t.tiling(),
            Tiling::PeriodicRectangle {
                width: 2.0,
                height: 2.0
            }
        );
        let h = make_sinai_cell(CellShape::Hexagon { side: 1.0 }, 0.3, false).unwrap();
        assert_eq!(h.components().len(), 7);
        assert!(h.contains(Vec2::new(0.5, 0.0)));
        assert!(!h.contains(Vec2::new(0.1, 0.0)));
        assert!(make_sinai_cell(CellShape::Square { side: 2.0 }, 1.1, false).is_err());
        assert!(make_sinai_cell(CellShape::Square { side: 2.0 }, 1.0, true).is_err());
    }

    #[test]
    fn galton_lattice_queries() {
        let t = make_galton_board(1.0, 0.25, 0.0, -20.0).unwrap();
        let lattice_point = Vec2::new(0.5, -3f64.sqrt() / 2.0);
        let near = t.scatterers_near(lattice_point, 0.1);
        assert_eq!(near.len(), 1);
        assert_relative_eq!(near[0].1, lattice_point, epsilon = 1e-12);

        // midway between two pegs of the top row
        let mid = Vec2::new(0.5, 0.0);
        let near = t.scatterers_near(mid, 0.5 + 1e-9);
        let d0 = (near[0].1 - mid).norm();
        let ties = near
            .iter()
            .filter(|(_, c)| ((c - mid).norm() - d0).abs() < 1e-12)
            .count();
        assert!(ties >= 2);
        assert!(make_galton_board(1.0, 0.6, 0.0, -20.0).is_err());
        assert!(!t.contains(Vec2::new(0.0, -20.5)));
        assert!(t.contains(Vec2::new(0.0, 2.0)));
    }

    #[test]
    fn two_disk_contacts() {
        let (q0, q1) = two_disk_contact_points(0.5, 0.0);
        assert_relative_eq!(q0, Vec2::new(-0.5, 0.0));
        assert_relative_eq!(q1, Vec2::new(0.5, 0.0));
        let (q0, q1) = two_disk_contact_points(0.5, FRAC_PI_2);
        assert_relative_eq!(q0, Vec2::new(-1.0, 0.5), epsilon = 1e-15);
        assert_relative_eq!((q1 - q0).norm(), 2.0, epsilon = 1e-15);
        assert!(make_two_disk_table(1.2).is_err());
        assert!(make_two_disk_table(0.5).is_ok());
    }

    #[test]
    fn spec_round_trip() {
        let t = make_galton_board(1.0, 0.25, 0.0, -17.0).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: Table = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"kind":"two-disk","radius":3.0}"#;
        assert!(serde_json::from_str::<Table>(bad).is_err());
    }
}
