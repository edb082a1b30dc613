//! Periodic-orbit constructors, the no-force ellipticity threshold and
//! survival-count stability grids.
//!
//! All constructions rest on one fact about the no-slip map: an arrival whose
//! local `(rot, tan)` pair satisfies `tan = gamma * rot` is sent straight back
//! (`(rot, tan, nrm) -> (-rot, -tan, -nrm)`), so a flight that arrives that
//! way at both ends retraces itself and the orbit has period two.

use std::f64::consts::FRAC_PI_2;
use std::ops::ControlFlow;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    run_orbit, Dynamics, DynamicsError, ForceField, MassDistribution, OrbitStatus, ParticleState,
    StopCondition, Tracer, Vec3,
};
use crate::geometry::{
    make_two_disk_table, make_wedge, two_disk_contact_points, GeometryError, Table, Vec2,
    WedgeOrientation, WedgeSpec,
};

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no sign choice closes the bounce (errors {0:e}, {1:e})")]
    NoClosingSign(f64, f64),
    #[error("both sign choices close the bounce")]
    AmbiguousSign,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn invalid(msg: impl Into<String>) -> OrbitError {
    OrbitError::InvalidParameter(msg.into())
}

/// Velocity map between consecutive half-plane bounces, written in the
/// lab frame: the collision map conjugated by the flight reversal.
pub fn bounce_velocity_matrix(mass: MassDistribution) -> Matrix3<f64> {
    let (c, s) = mass.cos_sin_beta();
    Matrix3::new(-c, s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0)
}

/// Rotational velocity that makes an arrival with tangential velocity
/// `tangential` path-reversing.
pub fn path_reversing_spin(tangential: f64, mass: MassDistribution) -> Result<f64, OrbitError> {
    if mass.gamma() <= 0.0 {
        return Err(invalid("path reversal needs gamma > 0"));
    }
    Ok(tangential / mass.gamma())
}

fn half_plane_state(mass: MassDistribution, speed: f64, z0: f64, sign: f64) -> ParticleState {
    let g = mass.gamma();
    // half the kinetic energy goes into the vertical motion
    let planar = speed * std::f64::consts::FRAC_1_SQRT_2;
    let spin = planar / (1.0 + g * g).sqrt();
    ParticleState::new(Vec2::new(0.0, z0), Vec3::new(spin, sign * g * spin, planar))
}

/// Distance between the first and third collision points of a half-plane
/// bounce, relative to the first hop length.
fn half_plane_closure(
    mass: MassDistribution,
    force: &ForceField,
    state: &ParticleState,
) -> Result<f64, OrbitError> {
    let table = crate::geometry::make_half_plane();
    let dynamics = Dynamics::new(*force, mass);
    let orbit = run_orbit(state, &table, &dynamics, StopCondition::collisions(4))?;
    if orbit.events.len() < 4 {
        return Err(invalid("half-plane bounce did not collide four times"));
    }
    let p: Vec<Vec2> = orbit.events.iter().map(|e| e.point).collect();
    let hop = (p[1] - p[0]).norm().max(f64::MIN_POSITIVE);
    Ok(((p[2] - p[0]).norm().max((p[3] - p[1]).norm())) / hop)
}

/// Sign `s` for which `Y' = s * gamma * x'` closes a half-plane bounce,
/// decided by simulating both choices.
pub fn half_plane_closure_sign(
    mass: MassDistribution,
    force: &ForceField,
) -> Result<f64, OrbitError> {
    if mass.gamma() <= 0.0 {
        return Err(invalid("gamma = 0 has no rotational coupling"));
    }
    if !(force.g() > 0.0) || force.direction().y >= 0.0 {
        return Err(invalid("half-plane bounce needs a downward force"));
    }
    let plus = half_plane_closure(mass, force, &half_plane_state(mass, 1.0, 0.0, 1.0))?;
    let minus = half_plane_closure(mass, force, &half_plane_state(mass, 1.0, 0.0, -1.0))?;
    const CLOSED: f64 = 1e-9;
    match (plus < CLOSED, minus < CLOSED) {
        (true, false) => Ok(1.0),
        (false, true) => Ok(-1.0),
        (true, true) => Err(OrbitError::AmbiguousSign),
        (false, false) => Err(OrbitError::NoClosingSign(plus, minus)),
    }
}

/// A half-plane bounce at height `z0` with upward vertical velocity whose
/// tangential/rotational ratio closes the orbit after every two collisions.
pub fn construct_half_plane_bounce(
    mass: MassDistribution,
    force: &ForceField,
    speed: f64,
    z0: f64,
) -> Result<ParticleState, OrbitError> {
    if !(speed > 0.0) || !(z0 >= 0.0) {
        return Err(invalid("speed must be positive and z0 non-negative"));
    }
    let sign = half_plane_closure_sign(mass, force)?;
    Ok(half_plane_state(mass, speed, z0, sign))
}

/// Launch speed of a parabola of range `d` at angle `theta` under
/// acceleration `g`.
pub fn wedge_speed(g: f64, d: f64, theta: f64) -> Result<f64, OrbitError> {
    let s = (2.0 * theta).sin();
    if !(theta > 0.0 && theta < FRAC_PI_2) || s <= 0.0 {
        return Err(invalid(format!(
            "launch angle {theta} must lie strictly between 0 and pi/2 (sin 2theta = 0)"
        )));
    }
    if !(g > 0.0 && d > 0.0) {
        return Err(invalid("g and d must be positive"));
    }
    Ok((g * d / s).sqrt())
}

/// Spin of the path-reversing orbit launched at `theta` from the chord in a
/// tangential wedge of half-angle `phi`: `v sin(theta - phi) / gamma`.
pub fn wedge_spin(v: f64, theta: f64, phi: f64, gamma: f64) -> Result<f64, OrbitError> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma must be positive"));
    }
    Ok(v * (theta - phi).sin() / gamma)
}

/// Mass constant for which the force-free wedge orbit with chord velocity
/// `y_dot` and spin `x_dot` has period two.
pub fn no_force_wedge_condition(y_dot: f64, x_dot: f64, phi: f64) -> Result<f64, OrbitError> {
    if x_dot == 0.0 {
        return Err(invalid("rotational velocity must be non-zero"));
    }
    Ok(-(y_dot / x_dot) * phi.sin())
}

/// Critical `kappa * d` below which the force-free 2-periodic orbit between
/// two scatterers with tangential wedge half-angle `phi` is elliptic.
pub fn ellipticity_threshold(mass: MassDistribution, phi: f64) -> Result<f64, OrbitError> {
    let cphi = phi.cos();
    if !(0.0..FRAC_PI_2).contains(&phi) || cphi <= 0.0 {
        return Err(invalid(format!(
            "phi = {phi}: threshold diverges at cos(phi) = 0 (always stable)"
        )));
    }
    let c2 = mass.cos2_half_beta();
    Ok((2.0 - 2.0 * c2 * cphi * cphi) / (c2 * cphi))
}

pub fn is_linearly_stable_no_force(
    kappa: f64,
    d: f64,
    mass: MassDistribution,
    phi: f64,
) -> Result<bool, OrbitError> {
    if !(kappa > 0.0 && d > 0.0) {
        return Err(invalid("kappa and d must be positive"));
    }
    Ok(kappa * d < ellipticity_threshold(mass, phi)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceSense {
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgePeriodicSpec {
    pub phi: f64,
    pub theta: f64,
    pub d: f64,
    pub g: f64,
    pub gamma: f64,
    pub orientation: WedgeOrientation,
    /// Defaults to the sense the orientation requires (down for an upward
    /// opening, up for a downward one).
    #[serde(default)]
    pub force: Option<ForceSense>,
}

/// A constructed 2-periodic orbit and the table it lives on.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub table: Table,
    pub dynamics: Dynamics,
    pub state: ParticleState,
    pub q0: Vec2,
    pub q1: Vec2,
    pub speed: f64,
    pub spin: f64,
}

impl PeriodicOrbit {
    /// Relative return error after each pair of collisions, over `n_pairs`
    /// pairs: the larger of the position error (relative to the chord) and
    /// the velocity error (relative to the speed).
    pub fn closure_errors(&self, n_pairs: usize) -> Result<Vec<f64>, OrbitError> {
        closure_errors(
            &self.state,
            &self.table,
            &self.dynamics,
            self.q0,
            self.q1,
            n_pairs,
        )
    }
}

fn closure_errors(
    state: &ParticleState,
    table: &Table,
    dynamics: &Dynamics,
    q0: Vec2,
    q1: Vec2,
    n_pairs: usize,
) -> Result<Vec<f64>, OrbitError> {
    let orbit = run_orbit(
        state,
        table,
        dynamics,
        StopCondition::collisions(2 * n_pairs as u64),
    )?;
    let d = (q1 - q0).norm();
    let v = state.vel.norm();
    let mut errs: Vec<f64> = orbit
        .events
        .chunks_exact(2)
        .map(|pair| {
            let e = &pair[1];
            ((e.point - state.pos).norm() / d).max((e.v_out - state.vel).norm() / v)
        })
        .collect();
    // pairs missing because the orbit ended early count as open
    errs.resize(n_pairs, f64::INFINITY);
    Ok(errs)
}

/// Path-reversing 2-periodic orbit between opposite points of a wedge with
/// the force along its bisector.
///
/// The chord `q0 -> q1` is horizontal at distance `d / (2 tan phi)` from the
/// vertex; `q0` sits on the right wall of an upward opening wedge (left wall
/// of a downward one) so that the launch spin is `wedge_spin(v, theta, phi,
/// gamma)` with `v = wedge_speed(g, d, theta)`.
pub fn construct_wedge_periodic(spec: &WedgePeriodicSpec) -> Result<PeriodicOrbit, OrbitError> {
    let WedgePeriodicSpec {
        phi,
        theta,
        d,
        g,
        gamma,
        orientation,
        force,
    } = *spec;
    if !(phi > 0.0 && phi < FRAC_PI_2) {
        return Err(invalid(format!("wedge half-angle {phi} outside (0, pi/2)")));
    }
    if !(gamma > 0.0) {
        return Err(invalid("gamma must be positive"));
    }
    let required = match orientation {
        WedgeOrientation::OpeningUp => ForceSense::Down,
        WedgeOrientation::OpeningDown => ForceSense::Up,
    };
    if force.is_some_and(|f| f != required) {
        return Err(invalid(format!(
            "a wedge {orientation:?} needs the force pointing {required:?} along the bisector"
        )));
    }
    let v = wedge_speed(g, d, theta)?;
    let spin = wedge_spin(v, theta, phi, gamma)?;
    let h = d / (2.0 * phi.tan());
    // `up` maps the upward-opening construction onto the downward one by a
    // half-turn, which preserves chirality.
    let up = match orientation {
        WedgeOrientation::OpeningUp => 1.0,
        WedgeOrientation::OpeningDown => -1.0,
    };
    let q0 = up * Vec2::new(h * phi.tan(), h);
    let q1 = up * Vec2::new(-h * phi.tan(), h);
    let launch = up * Vec2::new(-v * theta.cos(), v * theta.sin());
    let table = make_wedge(WedgeSpec {
        half_angle: phi,
        orientation,
        vertex: [0.0, 0.0],
    })?;
    let dynamics = Dynamics::new(
        ForceField::new(g, Vec2::new(0.0, -up))?,
        MassDistribution::new(gamma)?,
    );
    Ok(PeriodicOrbit {
        table,
        dynamics,
        state: ParticleState::new(q0, Vec3::new(spin, launch.x, launch.y)),
        q0,
        q1,
        speed: v,
        spin,
    })
}

/// Launch parameters on the two-disk table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Launch {
    /// Launch angle above the chord; 0 with `g = 0` gives the horizontal orbit.
    pub theta: f64,
    pub g: f64,
}

/// 2-periodic orbit between opposite points of the two-disk table at contact
/// angle `contact_angle`, with `q0` on the left disk.
pub fn two_disk_periodic(
    radius: f64,
    contact_angle: f64,
    launch: Launch,
    mass: MassDistribution,
) -> Result<PeriodicOrbit, OrbitError> {
    if !(0.0..FRAC_PI_2).contains(&contact_angle) {
        return Err(invalid(format!(
            "contact angle {contact_angle} outside [0, pi/2)"
        )));
    }
    let table = make_two_disk_table(radius)?;
    let (q0, q1) = two_disk_contact_points(radius, contact_angle);
    let d = (q1 - q0).norm();
    let (speed, force) = if launch.g > 0.0 {
        (
            wedge_speed(launch.g, d, launch.theta)?,
            ForceField::downward(launch.g)?,
        )
    } else {
        if launch.theta != 0.0 {
            return Err(invalid("without force only the horizontal launch closes"));
        }
        (1.0, ForceField::none())
    };
    let u = speed * Vec2::new(launch.theta.cos(), launch.theta.sin());
    let (tangent, _) = table.local_frame(0, q0)?;
    let spin = path_reversing_spin(u.dot(&tangent), mass)?;
    Ok(PeriodicOrbit {
        table,
        dynamics: Dynamics::new(force, mass),
        state: ParticleState::new(q0, Vec3::new(spin, u.x, u.y)),
        q0,
        q1,
        speed,
        spin,
    })
}

/// Rotates the planar launch velocity so that the launch angle `theta`
/// becomes `theta * (1 + eps)` (or `eps` when `theta = 0`), keeping speed
/// and spin.
pub fn perturb_launch(state: &ParticleState, theta: f64, eps: f64) -> ParticleState {
    let target = if theta == 0.0 {
        eps
    } else {
        theta * (1.0 + eps)
    };
    let (s, c) = (target - theta).sin_cos();
    let v = state.spatial_velocity();
    let r = Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y);
    ParticleState {
        vel: Vec3::new(state.vel.x, r.x, r.y),
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalStatus {
    Capped,
    Escaped,
    Pinched,
    Numerical,
}

impl SurvivalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurvivalStatus::Capped => "capped",
            SurvivalStatus::Escaped => "escaped",
            SurvivalStatus::Pinched => "pinched",
            SurvivalStatus::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Survival {
    pub count: u64,
    pub status: SurvivalStatus,
}

/// Collisions executed before the orbit escapes (no collision within
/// `horizon`, or a collision for which `escaped` returns true), capped at
/// `max_collisions`.
pub fn survival_count<F>(
    state: &ParticleState,
    table: &Table,
    dynamics: &Dynamics,
    max_collisions: u64,
    horizon: f64,
    mut escaped: F,
) -> Survival
where
    F: FnMut(&crate::dynamics::CollisionEvent) -> bool,
{
    let mut left = false;
    let tracer = Tracer::new(table, dynamics).with_horizon(horizon);
    let result = tracer.trace(state, StopCondition::collisions(max_collisions), |ev| {
        if escaped(ev) {
            left = true;
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    match result {
        Err(_) => Survival {
            count: 0,
            status: SurvivalStatus::Numerical,
        },
        Ok(s) => {
            let status = match s.status {
                OrbitStatus::Capped => SurvivalStatus::Capped,
                OrbitStatus::Pinched { .. } => SurvivalStatus::Pinched,
                _ => SurvivalStatus::Escaped,
            };
            // the escaping collision itself does not count
            let count = if left { s.collisions - 1 } else { s.collisions };
            Survival { count, status }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.n <= 1 {
            return self.min;
        }
        self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_max_collisions() -> u64 {
    1000
}

pub fn default_gamma_value() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

/// Survival-count grid over the radius (axis 1) and either the contact
/// angle or the launch angle (axis 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityGridSpec {
    pub radius: GridAxis,
    pub axis2: GridAxis,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_collisions")]
    pub max_collisions: u64,
    #[serde(default = "default_gamma_value")]
    pub gamma: f64,
}

impl StabilityGridSpec {
    pub fn validate(&self) -> Result<(), OrbitError> {
        if self.radius.n < 2 || self.axis2.n < 2 {
            return Err(invalid("grid axes need at least 2 samples"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("perturbation must be positive"));
        }
        if self.max_collisions < 1 {
            return Err(invalid("max_collisions must be at least 1"));
        }
        if !(self.radius.min > 0.0 && self.radius.max < 1.0 && self.radius.min <= self.radius.max) {
            return Err(invalid("radius range must lie in (0, 1)"));
        }
        MassDistribution::new(self.gamma)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum Scenario {
    /// Horizontal orbits without force; axis 2 is the contact angle.
    NoForceHorizontal,
    /// Orbits with force built from the wedge construction at launch angle
    /// `theta`; axis 2 is the contact angle.
    ForceWedgeLaunch { g: f64, theta: f64 },
    /// Fixed contact angle; axis 2 is the launch angle.
    FixedContactAngle { g: f64, contact_angle: f64 },
}

/// Contact angles closer than this to pi/2 are near-tangent and flagged.
pub const NEAR_TANGENT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub i: usize,
    pub j: usize,
    pub axis1: f64,
    pub axis2: f64,
    pub survival_count: u64,
    pub status: SurvivalStatus,
    pub low_confidence: bool,
}

/// Survival count of one grid cell.
pub fn grid_cell(
    spec: &StabilityGridSpec,
    scenario: Scenario,
    radius: f64,
    a2: f64,
) -> (Survival, bool) {
    let mass = match MassDistribution::new(spec.gamma) {
        Ok(m) => m,
        Err(_) => {
            return (
                Survival {
                    count: 0,
                    status: SurvivalStatus::Numerical,
                },
                false,
            )
        }
    };
    let (contact, launch) = match scenario {
        Scenario::NoForceHorizontal => (a2, Launch { theta: 0.0, g: 0.0 }),
        Scenario::ForceWedgeLaunch { g, theta } => (a2, Launch { theta, g }),
        Scenario::FixedContactAngle { g, contact_angle } => {
            (contact_angle, Launch { theta: a2, g })
        }
    };
    let low = contact > FRAC_PI_2 - NEAR_TANGENT;
    let orbit = match two_disk_periodic(radius, contact, launch, mass) {
        Ok(o) => o,
        Err(_) => {
            return (
                Survival {
                    count: 0,
                    status: SurvivalStatus::Numerical,
                },
                low,
            )
        }
    };
    let start = perturb_launch(&orbit.state, launch.theta, spec.epsilon);
    let d = (orbit.q1 - orbit.q0).norm();
    let horizon = 10.0 * d / orbit.speed;
    (
        survival_count(
            &start,
            &orbit.table,
            &orbit.dynamics,
            spec.max_collisions,
            horizon,
            |_| false,
        ),
        low,
    )
}

/// Evaluates every cell in parallel; rows come back in `(i, j)` order.
pub fn stability_grid(
    spec: &StabilityGridSpec,
    scenario: Scenario,
) -> Result<Vec<GridRow>, OrbitError> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.radius.n)
        .flat_map(|i| (0..spec.axis2.n).map(move |j| (i, j)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(i, j)| {
            let (r, a2) = (spec.radius.value(i), spec.axis2.value(j));
            let (s, low) = grid_cell(spec, scenario, r, a2);
            GridRow {
                i,
                j,
                axis1: r,
                axis2: a2,
                survival_count: s.count,
                status: s.status,
                low_confidence: low,
            }
        })
        .collect())
}
