//! Ballistic flight, the collision laws and the collision-to-collision event
//! loop.
//!
//! Velocities are 3-vectors `(x', Y', Z')`: the rotational velocity followed
//! by the planar velocity. At a collision they are expressed in the local
//! frame `(rot, tan, nrm)` where `tan` is the table tangent and `nrm` the
//! component along the inward normal, so an incoming particle has `nrm < 0`.

use std::ops::ControlFlow;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundaryComponent, ContactId, GeometryError, Placement, Table, Vec2};
use crate::numerics::{real_roots, NumericsError, Polynomial};

pub type Vec3 = Vector3<f64>;

/// Departure-root exclusion, relative to `length_scale / speed`.
pub const T_MIN_REL: f64 = 1e-9;
/// Roots whose normal approach speed is below this fraction of the speed are
/// treated as tangential grazes.
pub const GRAZING_REL: f64 = 1e-10;
/// Upper bound on lattice chunks searched when no horizon is set.
const MAX_LATTICE_CHUNKS: usize = 200_000;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("mass constant must be finite and non-negative, got {0}")]
    InvalidMass(f64),
    #[error("invalid force field: {0}")]
    InvalidForce(String),
    #[error("velocity is not approaching the wall (normal component {0})")]
    NotApproaching(f64),
    #[error("non-finite particle state")]
    NonFinite,
    #[error("initial position ({0}, {1}) is outside the table")]
    OutsideTable(f64, f64),
    #[error("initial velocity points out of the table at component {0}")]
    LeavingTable(usize),
    #[error("root solver failed on component {component}: {source}")]
    Numerics {
        component: usize,
        #[source]
        source: NumericsError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Collision law attached to a boundary component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionRule {
    #[default]
    NoSlip,
    Specular,
}

/// Mass distribution of the particle: `gamma = sqrt(2 lambda) / R` and the
/// collision angle `beta = 2 atan(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MassDistribution {
    gamma: f64,
    beta: f64,
}

impl MassDistribution {
    pub fn new(gamma: f64) -> Result<Self, DynamicsError> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(DynamicsError::InvalidMass(gamma));
        }
        Ok(Self {
            gamma,
            beta: 2.0 * gamma.atan(),
        })
    }

    pub fn from_beta(beta: f64) -> Result<Self, DynamicsError> {
        if !(0.0..std::f64::consts::PI).contains(&beta) {
            return Err(DynamicsError::InvalidMass(beta));
        }
        Ok(Self {
            gamma: (0.5 * beta).tan(),
            beta,
        })
    }

    /// Uniform disk, `gamma = 1/sqrt(2)`.
    pub fn uniform_disk() -> Self {
        Self::new(std::f64::consts::FRAC_1_SQRT_2).expect("valid")
    }

    pub fn point_mass() -> Self {
        Self::new(0.0).expect("valid")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `cos^2(beta/2) = 1 / (1 + gamma^2)`.
    pub fn cos2_half_beta(&self) -> f64 {
        1.0 / (1.0 + self.gamma * self.gamma)
    }

    /// `(cos beta, sin beta)` computed from `gamma` without trig calls.
    pub fn cos_sin_beta(&self) -> (f64, f64) {
        let g2 = self.gamma * self.gamma;
        ((1.0 - g2) / (1.0 + g2), 2.0 * self.gamma / (1.0 + g2))
    }
}

impl TryFrom<f64> for MassDistribution {
    type Error = DynamicsError;
    fn try_from(gamma: f64) -> Result<Self, Self::Error> {
        Self::new(gamma)
    }
}

impl From<MassDistribution> for f64 {
    fn from(m: MassDistribution) -> f64 {
        m.gamma
    }
}

/// The no-slip collision matrix acting on `(rot, tan, nrm)`.
pub fn collision_matrix(mass: MassDistribution) -> Matrix3<f64> {
    let (c, s) = mass.cos_sin_beta();
    Matrix3::new(-c, -s, 0.0, -s, c, 0.0, 0.0, 0.0, -1.0)
}

fn check_approach(v: &Vec3) -> Result<(), DynamicsError> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    if v.z > GRAZING_REL * v.norm() {
        return Err(DynamicsError::NotApproaching(v.z));
    }
    Ok(())
}

/// No-slip reflection of a local velocity `(rot, tan, nrm)` with `nrm < 0`.
pub fn no_slip_reflect(v_local: Vec3, mass: MassDistribution) -> Result<Vec3, DynamicsError> {
    check_approach(&v_local)?;
    let (c, s) = mass.cos_sin_beta();
    Ok(Vec3::new(
        -c * v_local.x - s * v_local.y,
        -s * v_local.x + c * v_local.y,
        -v_local.z,
    ))
}

/// Mirror reflection: only the normal component changes sign.
pub fn specular_reflect(v_local: Vec3) -> Result<Vec3, DynamicsError> {
    check_approach(&v_local)?;
    Ok(Vec3::new(v_local.x, v_local.y, -v_local.z))
}

/// Constant force acting on the planar position only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForceRepr", into = "ForceRepr")]
pub struct ForceField {
    g: f64,
    direction: Vec2,
}

#[derive(Serialize, Deserialize)]
struct ForceRepr {
    g: f64,
    direction: [f64; 2],
}

impl TryFrom<ForceRepr> for ForceField {
    type Error = DynamicsError;
    fn try_from(r: ForceRepr) -> Result<Self, Self::Error> {
        ForceField::new(r.g, Vec2::new(r.direction[0], r.direction[1]))
    }
}

impl From<ForceField> for ForceRepr {
    fn from(f: ForceField) -> Self {
        ForceRepr {
            g: f.g,
            direction: [f.direction.x, f.direction.y],
        }
    }
}

impl Default for ForceField {
    fn default() -> Self {
        Self::none()
    }
}

impl ForceField {
    /// Force of magnitude `g` along `direction` (normalized here).
    pub fn new(g: f64, direction: Vec2) -> Result<Self, DynamicsError> {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(DynamicsError::InvalidForce(format!("magnitude {g}")));
        }
        let n = direction.norm();
        if g > 0.0 && !(n > 0.0 && n.is_finite()) {
            return Err(DynamicsError::InvalidForce("zero direction".into()));
        }
        let direction = if n > 0.0 {
            direction / n
        } else {
            Vec2::new(0.0, -1.0)
        };
        Ok(Self { g, direction })
    }

    pub fn none() -> Self {
        Self {
            g: 0.0,
            direction: Vec2::new(0.0, -1.0),
        }
    }

    pub fn downward(g: f64) -> Result<Self, DynamicsError> {
        Self::new(g, Vec2::new(0.0, -1.0))
    }

    pub fn upward(g: f64) -> Result<Self, DynamicsError> {
        Self::new(g, Vec2::new(0.0, 1.0))
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn direction(&self) -> Vec2 {
        self.direction
    }

    pub fn acceleration(&self) -> Vec2 {
        self.g * self.direction
    }

    /// Potential energy per unit mass, `g * h` with `h` the height along
    /// `-direction`.
    pub fn potential(&self, pos: Vec2) -> f64 {
        -self.g * self.direction.dot(&pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// Orientation coordinate (rotation angle scaled by `gamma R`).
    pub x: f64,
    pub pos: Vec2,
    /// `(x', Y', Z')`.
    pub vel: Vec3,
    pub t: f64,
}

impl ParticleState {
    pub fn new(pos: Vec2, vel: Vec3) -> Self {
        Self {
            x: 0.0,
            pos,
            vel,
            t: 0.0,
        }
    }

    pub fn spatial_velocity(&self) -> Vec2 {
        Vec2::new(self.vel.y, self.vel.z)
    }

    pub fn energy(&self, force: &ForceField) -> f64 {
        0.5 * self.vel.norm_squared() + force.potential(self.pos)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.t.is_finite()
            && self.pos.iter().all(|c| c.is_finite())
            && self.vel.iter().all(|c| c.is_finite())
    }
}

/// Exact ballistic update over `dt`.
pub fn propagate(state: &ParticleState, dt: f64, force: &ForceField) -> ParticleState {
    let a = force.acceleration();
    let v = state.spatial_velocity();
    let pos = state.pos + v * dt + 0.5 * a * dt * dt;
    let vs = v + a * dt;
    ParticleState {
        x: state.x + state.vel.x * dt,
        pos,
        vel: Vec3::new(state.vel.x, vs.x, vs.y),
        t: state.t + dt,
    }
}

/// Force, mass and optional rule override shared by a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Dynamics {
    #[serde(default)]
    pub force: ForceField,
    pub mass: MassDistribution,
    /// Replaces every component's own rule when set.
    #[serde(default)]
    pub rule_override: Option<CollisionRule>,
}

impl Default for MassDistribution {
    fn default() -> Self {
        Self::uniform_disk()
    }
}

impl Dynamics {
    pub fn new(force: ForceField, mass: MassDistribution) -> Self {
        Self {
            force,
            mass,
            rule_override: None,
        }
    }

    pub fn with_rule(mut self, rule: CollisionRule) -> Self {
        self.rule_override = Some(rule);
        self
    }

    fn rule_for(&self, comp: &BoundaryComponent) -> CollisionRule {
        self.rule_override.unwrap_or(comp.rule)
    }

    /// Applies the collision law in the local frame.
    pub fn reflect(&self, rule: CollisionRule, v_local: Vec3) -> Result<Vec3, DynamicsError> {
        match rule {
            CollisionRule::NoSlip => no_slip_reflect(v_local, self.mass),
            CollisionRule::Specular => specular_reflect(v_local),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t_flight: f64,
    /// Absolute time of the collision.
    pub t: f64,
    pub point: Vec2,
    pub contact: ContactId,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub rule: CollisionRule,
    /// Orientation coordinate at impact.
    pub x: f64,
    pub v_in: Vec3,
    pub v_out: Vec3,
}

impl CollisionEvent {
    pub fn component_id(&self) -> usize {
        self.contact.component
    }

    pub fn state_after(&self) -> ParticleState {
        ParticleState {
            x: self.x,
            pos: self.point,
            vel: self.v_out,
            t: self.t,
        }
    }

    /// Outgoing velocity in the local frame `(rot, tan, nrm)`, `nrm >= 0`.
    pub fn local_out(&self) -> Vec3 {
        to_local(&self.v_out, self.tangent, self.normal)
    }

    pub fn local_in(&self) -> Vec3 {
        to_local(&self.v_in, self.tangent, self.normal)
    }
}

pub fn to_local(v: &Vec3, tangent: Vec2, normal: Vec2) -> Vec3 {
    let s = Vec2::new(v.y, v.z);
    Vec3::new(v.x, s.dot(&tangent), s.dot(&normal))
}

pub fn from_local(v: &Vec3, tangent: Vec2, normal: Vec2) -> Vec3 {
    let s = v.y * tangent + v.z * normal;
    Vec3::new(v.x, s.x, s.y)
}

/// Outcome of one event search.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Collision(CollisionEvent),
    /// Arc meets a corner or segment endpoint, where the law is undefined.
    Vertex {
        t_flight: f64,
        point: Vec2,
        contact: ContactId,
    },
    /// Arc crosses the table's absorbing floor; `state` is at the crossing.
    Escaped {
        t_flight: f64,
        state: ParticleState,
    },
    /// No boundary is met within the search horizon.
    NoEvent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HitKind {
    Smooth,
    Vertex,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    kind: HitKind,
    contact: ContactId,
    comp: BoundaryComponent,
}

struct Flight {
    p0: Vec2,
    v0: Vec2,
    a: Vec2,
    t_min: f64,
    tol: f64,
}

impl Flight {
    fn at(&self, t: f64) -> (Vec2, Vec2) {
        (
            self.p0 + self.v0 * t + 0.5 * self.a * t * t,
            self.v0 + self.a * t,
        )
    }

    /// Earliest valid hit on one concrete component.
    fn first_hit(
        &self,
        contact: ContactId,
        comp: &BoundaryComponent,
        departing: bool,
    ) -> Result<Option<Hit>, DynamicsError> {
        let c = comp.crossing_coefficients(self.p0, self.v0, self.a);
        let coeffs: &[f64] = if departing { &c[1..] } else { &c };
        let poly = Polynomial::new(coeffs).map_err(|source| DynamicsError::Numerics {
            component: comp.id,
            source,
        })?;
        if poly.degree() == 0 {
            return Ok(None);
        }
        let roots = real_roots(&poly).map_err(|source| DynamicsError::Numerics {
            component: comp.id,
            source,
        })?;
        for r in roots.iter().filter(|r| r.value > self.t_min) {
            let (p, v) = self.at(r.value);
            let n = comp.inward_normal(p);
            if v.dot(&n) >= -GRAZING_REL * v.norm() {
                continue;
            }
            let kind = match comp.placement(p, self.tol) {
                Placement::Outside => continue,
                Placement::Interior => HitKind::Smooth,
                Placement::Endpoint => HitKind::Vertex,
            };
            return Ok(Some(Hit {
                t: r.value,
                kind,
                contact,
                comp: *comp,
            }));
        }
        Ok(None)
    }

    /// Bounding box of the arc over `[ta, tb]`.
    fn bbox(&self, ta: f64, tb: f64) -> (Vec2, Vec2) {
        let (pa, _) = self.at(ta);
        let (pb, _) = self.at(tb);
        let mut lo = pa.inf(&pb);
        let mut hi = pa.sup(&pb);
        for k in 0..2 {
            if self.a[k] != 0.0 {
                let te = -self.v0[k] / self.a[k];
                if te > ta && te < tb {
                    let (pe, _) = self.at(te);
                    lo[k] = lo[k].min(pe[k]);
                    hi[k] = hi[k].max(pe[k]);
                }
            }
        }
        (lo, hi)
    }
}

fn earlier(a: Option<Hit>, b: Option<Hit>) -> Option<Hit> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.t < x.t { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Time of the downward crossing of `y = floor`, if any.
fn sink_time(p0: Vec2, v0: Vec2, a: Vec2, floor: f64) -> Option<f64> {
    let c = [p0.y - floor, v0.y, 0.5 * a.y];
    if c[0] <= 0.0 {
        return Some(0.0);
    }
    let poly = Polynomial::new(&c).ok()?;
    if poly.degree() == 0 {
        return None;
    }
    real_roots(&poly)
        .ok()?
        .iter()
        .map(|r| r.value)
        .find(|&t| t > 0.0 && v0.y + a.y * t < 0.0)
}

/// Finds the next event of a particle in `state`, currently touching
/// `contact` (if any), searching up to `horizon` time units ahead.
pub fn next_collision_from(
    state: &ParticleState,
    contact: Option<ContactId>,
    table: &Table,
    dynamics: &Dynamics,
    horizon: f64,
) -> Result<Event, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    let v0 = state.spatial_velocity();
    let speed = v0.norm();
    let a = dynamics.force.acceleration();
    if !(speed * speed).is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    let scale = table.length_scale();
    let speed_scale = speed.max((dynamics.force.g() * scale).sqrt());
    if speed_scale == 0.0 {
        return Ok(Event::NoEvent);
    }
    let flight = Flight {
        p0: state.pos,
        v0,
        a,
        t_min: T_MIN_REL * scale / speed_scale,
        tol: crate::geometry::ON_BOUNDARY_TOL * scale,
    };

    let mut best: Option<Hit> = None;
    for comp in table.fixed_components() {
        let id = ContactId::fixed(comp.id);
        best = earlier(best, flight.first_hit(id, comp, contact == Some(id))?);
    }

    let t_sink = table
        .sink_height()
        .and_then(|floor| sink_time(state.pos, v0, a, floor));
    let mut limit = horizon;
    if let Some(t) = t_sink {
        limit = limit.min(t);
    }
    if let Some(h) = best {
        limit = limit.min(h.t);
    }

    if table.has_lattice() {
        let cell = table.cell_size();
        let g = dynamics.force.g();
        let mut ta = 0.0;
        let mut chunks = 0;
        let mut near = Vec::new();
        while ta < limit && chunks < MAX_LATTICE_CHUNKS {
            let (_, va) = flight.at(ta);
            let dt = cell / (va.norm() + (2.0 * g * cell).sqrt());
            let tb = (ta + dt).min(limit);
            let (lo, hi) = flight.bbox(ta, tb);
            near.clear();
            table.replicated_in_box(lo, hi, &mut near);
            let mut found: Option<Hit> = None;
            for (id, comp) in &near {
                found = earlier(found, flight.first_hit(*id, comp, contact == Some(*id))?);
            }
            if let Some(h) = found {
                if h.t <= tb {
                    best = earlier(best, Some(h));
                    break;
                }
            }
            ta = tb;
            chunks += 1;
        }
    }

    let best = best.filter(|h| h.t <= horizon);
    match (best, t_sink) {
        (Some(h), ts) if ts.is_none_or(|ts| h.t < ts) => build_event(state, &flight, h, dynamics),
        (_, Some(ts)) if ts <= horizon => {
            let mut s = propagate(state, ts, &dynamics.force);
            if let Some(floor) = table.sink_height() {
                s.pos.y = floor;
            }
            Ok(Event::Escaped {
                t_flight: ts,
                state: s,
            })
        }
        _ => Ok(Event::NoEvent),
    }
}

fn build_event(
    state: &ParticleState,
    flight: &Flight,
    hit: Hit,
    dynamics: &Dynamics,
) -> Result<Event, DynamicsError> {
    let (p, _) = flight.at(hit.t);
    if hit.kind == HitKind::Vertex {
        return Ok(Event::Vertex {
            t_flight: hit.t,
            point: p,
            contact: hit.contact,
        });
    }
    let after = propagate(state, hit.t, &dynamics.force);
    let point = hit.comp.project(after.pos);
    let (tangent, normal) = hit.comp.frame(point);
    let v_in = after.vel;
    let rule = dynamics.rule_for(&hit.comp);
    let local_out = dynamics.reflect(rule, to_local(&v_in, tangent, normal))?;
    Ok(Event::Collision(CollisionEvent {
        t_flight: hit.t,
        t: after.t,
        point,
        contact: hit.contact,
        tangent,
        normal,
        rule,
        x: after.x,
        v_in,
        v_out: from_local(&local_out, tangent, normal),
    }))
}

/// Next event for a state strictly inside the table or resting on its
/// boundary with an inward velocity.
pub fn next_collision(
    state: &ParticleState,
    table: &Table,
    dynamics: &Dynamics,
) -> Result<Event, DynamicsError> {
    let contact = initial_contact(state, table)?;
    next_collision_from(state, contact, table, dynamics, f64::INFINITY)
}

fn initial_contact(
    state: &ParticleState,
    table: &Table,
) -> Result<Option<ContactId>, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    match table.contact_at(state.pos) {
        Some(id) => {
            let comp = table.instance(id)?;
            let v = state.spatial_velocity();
            if v.dot(&comp.inward_normal(state.pos)) < 0.0 {
                return Err(DynamicsError::LeavingTable(id.component));
            }
            Ok(Some(id))
        }
        None if table.contains(state.pos) => Ok(None),
        None => Err(DynamicsError::OutsideTable(state.pos.x, state.pos.y)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StopCondition {
    pub max_collisions: Option<u64>,
    pub t_max: Option<f64>,
}

impl StopCondition {
    pub fn collisions(n: u64) -> Self {
        Self {
            max_collisions: Some(n),
            t_max: None,
        }
    }

    pub fn time(t_max: f64) -> Self {
        Self {
            max_collisions: None,
            t_max: Some(t_max),
        }
    }
}

/// Why a pinched orbit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinchReason {
    Vertex,
    Stagnation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum OrbitStatus {
    /// Collision budget exhausted.
    Capped,
    TimeLimit,
    /// Reached the absorbing floor.
    Arrived,
    /// Flew off without meeting the boundary.
    Escaped,
    Pinched {
        reason: PinchReason,
    },
    /// Halted by the caller's visitor.
    Stopped,
}

impl OrbitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrbitStatus::Capped => "capped",
            OrbitStatus::TimeLimit => "time-limit",
            OrbitStatus::Arrived => "arrived",
            OrbitStatus::Escaped => "escaped",
            OrbitStatus::Pinched { .. } => "pinched",
            OrbitStatus::Stopped => "stopped",
        }
    }
}

/// End state of a traced orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSummary {
    pub final_state: ParticleState,
    pub status: OrbitStatus,
    pub collisions: u64,
    pub last_contact: Option<ContactId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub initial: ParticleState,
    pub events: Vec<CollisionEvent>,
    pub final_state: ParticleState,
    pub status: OrbitStatus,
}

/// Event loop over one table with fixed dynamics.
#[derive(Debug, Clone, Copy)]
pub struct Tracer<'a> {
    pub table: &'a Table,
    pub dynamics: &'a Dynamics,
    /// Longest flight searched before declaring an escape.
    pub horizon: f64,
}

impl<'a> Tracer<'a> {
    pub fn new(table: &'a Table, dynamics: &'a Dynamics) -> Self {
        Self {
            table,
            dynamics,
            horizon: f64::INFINITY,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Runs from `state`, calling `visit` after each collision. The visitor
    /// may break to stop the orbit early.
    pub fn trace<F>(
        &self,
        state: &ParticleState,
        stop: StopCondition,
        mut visit: F,
    ) -> Result<TraceSummary, DynamicsError>
    where
        F: FnMut(&CollisionEvent) -> ControlFlow<()>,
    {
        let mut contact = initial_contact(state, self.table)?;
        let mut cur = *state;
        let mut n = 0u64;
        let mut short_flights = 0u32;
        let mut last_short: Option<ContactId> = None;
        let summary = |cur, status, n, contact| TraceSummary {
            final_state: cur,
            status,
            collisions: n,
            last_contact: contact,
        };
        loop {
            if stop.max_collisions.is_some_and(|m| n >= m) {
                return Ok(summary(cur, OrbitStatus::Capped, n, contact));
            }
            let remaining = stop.t_max.map_or(f64::INFINITY, |t| t - cur.t);
            if remaining <= 0.0 {
                return Ok(summary(cur, OrbitStatus::TimeLimit, n, contact));
            }
            let horizon = self.horizon.min(remaining);
            match next_collision_from(&cur, contact, self.table, self.dynamics, horizon)? {
                Event::Collision(ev) => {
                    let t_min = T_MIN_REL * self.table.length_scale()
                        / ev.v_in.fixed_rows::<2>(1).norm().max(f64::MIN_POSITIVE);
                    if ev.t_flight < 10.0 * t_min && last_short == Some(ev.contact) {
                        short_flights += 1;
                    } else if ev.t_flight < 10.0 * t_min {
                        short_flights = 1;
                    } else {
                        short_flights = 0;
                    }
                    last_short = Some(ev.contact);
                    n += 1;
                    cur = ev.state_after();
                    contact = Some(ev.contact);
                    if short_flights >= 2 {
                        return Ok(summary(
                            cur,
                            OrbitStatus::Pinched {
                                reason: PinchReason::Stagnation,
                            },
                            n,
                            contact,
                        ));
                    }
                    if visit(&ev).is_break() {
                        return Ok(summary(cur, OrbitStatus::Stopped, n, contact));
                    }
                }
                Event::Vertex {
                    t_flight,
                    contact: c,
                    ..
                } => {
                    let s = propagate(&cur, t_flight, &self.dynamics.force);
                    return Ok(summary(
                        s,
                        OrbitStatus::Pinched {
                            reason: PinchReason::Vertex,
                        },
                        n,
                        Some(c),
                    ));
                }
                Event::Escaped { state, .. } => {
                    return Ok(summary(state, OrbitStatus::Arrived, n, contact));
                }
                Event::NoEvent => {
                    if horizon < self.horizon {
                        let s = propagate(&cur, remaining, &self.dynamics.force);
                        return Ok(summary(s, OrbitStatus::TimeLimit, n, None));
                    }
                    return Ok(summary(cur, OrbitStatus::Escaped, n, contact));
                }
            }
        }
    }
}

/// Runs an orbit and collects its collisions.
pub fn run_orbit(
    state: &ParticleState,
    table: &Table,
    dynamics: &Dynamics,
    stop: StopCondition,
) -> Result<Orbit, DynamicsError> {
    let mut events = Vec::new();
    let summary = Tracer::new(table, dynamics).trace(state, stop, |ev| {
        events.push(*ev);
        ControlFlow::Continue(())
    })?;
    Ok(Orbit {
        initial: *state,
        events,
        final_state: summary.final_state,
        status: summary.status,
    })
}
