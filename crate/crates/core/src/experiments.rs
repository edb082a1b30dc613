//! Batch drivers: Galton board statistics, velocity phase portraits and
//! channel boundedness probes.
//!
//! Every particle or orbit `i` draws its initial condition from
//! [`rng::stream(seed, i)`](crate::rng::stream), and batches run as parallel
//! maps collected in index order, so results are independent of the thread
//! count.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::ops::ControlFlow;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    from_local, CollisionRule, Dynamics, DynamicsError, ForceField, MassDistribution, OrbitStatus,
    ParticleState, StopCondition, Tracer, Vec3,
};
use crate::geometry::{
    make_channel, make_galton_board, ChannelAxis, ContactId, GeometryError, Shape, Table,
    TableSpec, Vec2,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidConfig(msg.into())
}

/// Relative energy change of `state` against the initial energy `e0`. The
/// scale is the largest of |e0| and the initial and current kinetic energies,
/// which bounds the magnitude of the terms summed in the energy.
pub fn relative_energy_drift(
    e0: f64,
    kinetic0: f64,
    state: &ParticleState,
    force: &ForceField,
) -> f64 {
    let kinetic = 0.5 * state.vel.norm_squared();
    let scale = e0.abs().max(kinetic0).max(kinetic).max(f64::MIN_POSITIVE);
    (state.energy(force) - e0).abs() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LaunchDirections {
    /// Uniform on the downward half circle.
    #[default]
    DownwardSemicircle,
    FullCircle,
}

/// Collision law for a whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RuleChoice {
    NoSlip { gamma: f64 },
    Specular,
}

impl RuleChoice {
    fn dynamics(&self, force: ForceField) -> Result<Dynamics, DynamicsError> {
        Ok(match *self {
            RuleChoice::NoSlip { gamma } => {
                Dynamics::new(force, MassDistribution::new(gamma)?).with_rule(CollisionRule::NoSlip)
            }
            RuleChoice::Specular => Dynamics::new(force, MassDistribution::point_mass())
                .with_rule(CollisionRule::Specular),
        })
    }
}

fn default_spacing() -> f64 {
    1.0
}
fn default_peg_radius() -> f64 {
    0.25
}
fn default_rows() -> usize {
    20
}
fn default_speed() -> f64 {
    1.0
}
fn default_g() -> f64 {
    1.0
}
fn default_galton_g() -> f64 {
    0.08
}
fn default_drop() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_t_max() -> f64 {
    1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaltonConfig {
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_peg_radius")]
    pub peg_radius: f64,
    /// Number of peg rows; the top row sits at height 0 and the floor one
    /// row spacing below the last row.
    #[serde(default = "default_rows")]
    pub rows: usize,
    pub n_particles: u64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default)]
    pub spin: f64,
    /// Half-width of a uniform spin distribution added to `spin`.
    #[serde(default)]
    pub spin_spread: f64,
    #[serde(default = "default_drop")]
    pub drop_point: [f64; 2],
    #[serde(default = "default_galton_g")]
    pub g: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    pub rule: RuleChoice,
    #[serde(default)]
    pub directions: LaunchDirections,
}

impl GaltonConfig {
    pub fn new(n_particles: u64, rule: RuleChoice, seed: u64) -> Self {
        Self {
            spacing: default_spacing(),
            peg_radius: default_peg_radius(),
            rows: default_rows(),
            n_particles,
            speed: default_speed(),
            spin: 0.0,
            spin_spread: 0.0,
            drop_point: default_drop(),
            g: default_galton_g(),
            t_max: default_t_max(),
            seed,
            rule,
            directions: LaunchDirections::default(),
        }
    }

    pub fn row_spacing(&self) -> f64 {
        self.spacing * 3f64.sqrt() / 2.0
    }

    pub fn terminal_height(&self) -> f64 {
        -(self.rows as f64) * self.row_spacing()
    }

    pub fn table(&self) -> Result<Table, ExperimentError> {
        Ok(make_galton_board(
            self.spacing,
            self.peg_radius,
            0.0,
            self.terminal_height(),
        )?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_particles < 1 {
            return Err(invalid("n_particles must be at least 1"));
        }
        if !(self.t_max > 0.0) {
            return Err(invalid("t_max must be positive"));
        }
        if self.rows < 1 {
            return Err(invalid("need at least one row of pegs"));
        }
        if !(self.drop_point[1] > self.terminal_height()) {
            return Err(invalid("terminal height must lie below the drop point"));
        }
        if !(self.speed >= 0.0 && self.g >= 0.0) {
            return Err(invalid("speed and g must be non-negative"));
        }
        let table = self.table()?;
        if !table.contains(Vec2::new(self.drop_point[0], self.drop_point[1])) {
            return Err(invalid("drop point lies inside a peg"));
        }
        Ok(())
    }

    fn initial_state(&self, index: u64) -> ParticleState {
        let mut r = rng::stream(self.seed, index);
        let angle = match self.directions {
            LaunchDirections::DownwardSemicircle => PI + r.random::<f64>() * PI,
            LaunchDirections::FullCircle => r.random::<f64>() * TAU,
        };
        let spin = self.spin + self.spin_spread * (2.0 * r.random::<f64>() - 1.0);
        ParticleState::new(
            Vec2::new(self.drop_point[0], self.drop_point[1]),
            Vec3::new(spin, self.speed * angle.cos(), self.speed * angle.sin()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParticleStatus {
    Arrived,
    Unfinished,
    Failed,
}

impl ParticleStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParticleStatus::Arrived => "arrived",
            ParticleStatus::Unfinished => "unfinished",
            ParticleStatus::Failed => "failed",
        }
    }
}

/// Where an unfinished particle was when time ran out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapDiagnostics {
    pub last_cell: Option<(i64, i64)>,
    /// Bounding box `(min, max)` of the final position and the last (up to) 1000
    /// collision points.
    pub recent_min: [f64; 2],
    pub recent_max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleOutcome {
    pub particle: u64,
    pub status: ParticleStatus,
    /// Horizontal position at the floor.
    pub terminal_y: Option<f64>,
    pub arrival_t: Option<f64>,
    pub n_collisions: u64,
    pub energy_drift: f64,
    pub trap: Option<TrapDiagnostics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaltonResult {
    pub config: GaltonConfig,
    pub outcomes: Vec<ParticleOutcome>,
}

impl GaltonResult {
    pub fn arrived(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.outcomes
            .iter()
            .filter_map(|o| Some((o.terminal_y?, o.arrival_t?)))
    }

    pub fn arrival_fraction(&self) -> f64 {
        self.arrived().count() as f64 / self.outcomes.len().max(1) as f64
    }

    pub fn unfinished(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| o.status == ParticleStatus::Unfinished)
            .count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| o.status == ParticleStatus::Failed)
            .count()
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| o.energy_drift)
            .fold(0.0, f64::max)
    }
}

const RECENT: usize = 1000;

fn run_particle(
    cfg: &GaltonConfig,
    table: &Table,
    dynamics: &Dynamics,
    index: u64,
) -> ParticleOutcome {
    let start = cfg.initial_state(index);
    let e0 = start.energy(&dynamics.force);
    let k0 = 0.5 * start.vel.norm_squared();
    let mut recent: VecDeque<Vec2> = VecDeque::with_capacity(RECENT);
    let mut drift = 0.0_f64;
    let tracer = Tracer::new(table, dynamics);
    let result = tracer.trace(&start, StopCondition::time(cfg.t_max), |ev| {
        if recent.len() == RECENT {
            recent.pop_front();
        }
        recent.push_back(ev.point);
        drift = drift.max(relative_energy_drift(
            e0,
            k0,
            &ev.state_after(),
            &dynamics.force,
        ));
        ControlFlow::Continue(())
    });
    let mut out = ParticleOutcome {
        particle: index,
        status: ParticleStatus::Failed,
        terminal_y: None,
        arrival_t: None,
        n_collisions: 0,
        energy_drift: drift,
        trap: None,
        error: None,
    };
    match result {
        Err(e) => out.error = Some(e.to_string()),
        Ok(s) => {
            out.n_collisions = s.collisions;
            out.energy_drift = drift.max(relative_energy_drift(
                e0,
                k0,
                &s.final_state,
                &dynamics.force,
            ));
            if s.status == OrbitStatus::Arrived {
                out.status = ParticleStatus::Arrived;
                out.terminal_y = Some(s.final_state.pos.x);
                out.arrival_t = Some(s.final_state.t);
            } else {
                out.status = ParticleStatus::Unfinished;
                let here = s.final_state.pos;
                let (lo, hi) = recent
                    .iter()
                    .fold((here, here), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
                out.trap = Some(TrapDiagnostics {
                    last_cell: s.last_contact.map(|c: ContactId| c.cell),
                    recent_min: [lo.x, lo.y],
                    recent_max: [hi.x, hi.y],
                });
            }
        }
    }
    out
}

/// Drops `n_particles` onto the board. Per-particle failures are recorded in
/// the outcome and never abort the batch.
pub fn run_galton(cfg: &GaltonConfig) -> Result<GaltonResult, ExperimentError> {
    cfg.validate()?;
    let table = cfg.table()?;
    let dynamics = cfg.rule.dynamics(ForceField::downward(cfg.g)?)?;
    let outcomes = (0..cfg.n_particles)
        .into_par_iter()
        .map(|i| run_particle(cfg, &table, &dynamics, i))
        .collect();
    Ok(GaltonResult {
        config: *cfg,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        self.lo + (i as f64 + 0.5) * w
    }
}

/// Counts `values` into `n_bins` equal bins over `[lo, hi)`.
pub fn histogram(
    values: &[f64],
    n_bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Histogram, ExperimentError> {
    if n_bins < 1 {
        return Err(invalid("histogram needs at least one bin"));
    }
    if !(hi > lo) {
        return Err(invalid("histogram range must be non-empty"));
    }
    let mut h = Histogram {
        lo,
        hi,
        counts: vec![0; n_bins],
        underflow: 0,
        overflow: 0,
    };
    let w = (hi - lo) / n_bins as f64;
    for &v in values {
        if v < lo {
            h.underflow += 1;
        } else if v >= hi || v.is_nan() {
            h.overflow += 1;
        } else {
            let i = (((v - lo) / w) as usize).min(n_bins - 1);
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

/// Sample skewness `m3 / m2^(3/2)`.
pub fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n < 3.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m3) = values.iter().fold((0.0, 0.0), |(m2, m3), v| {
        let d = v - mean;
        (m2 + d * d, m3 + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Whether a histogram rises to a single peak and then falls, ignoring
/// wiggles smaller than `noise` standard errors (`sqrt(count)`).
pub fn is_unimodal(counts: &[u64], noise: f64) -> bool {
    let Some(peak) = counts
        .iter()
        .enumerate()
        .max_by_key(|(_, c)| **c)
        .map(|(i, _)| i)
    else {
        return true;
    };
    let significant_rise = |a: u64, b: u64| {
        let (a, b) = (a as f64, b as f64);
        b - a > noise * (a + b).sqrt().max(1.0)
    };
    // left of the peak: never a significant drop below a running maximum
    let mut best = 0u64;
    for &c in &counts[..peak] {
        if significant_rise(c, best) {
            return false;
        }
        best = best.max(c);
    }
    best = 0;
    for &c in counts[peak + 1..].iter().rev() {
        if significant_rise(c, best) {
            return false;
        }
        best = best.max(c);
    }
    true
}

/// Initial conditions for phase-portrait orbits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSampling {
    /// Uniform boundary point (by arclength over finite components) and
    /// outgoing unit velocity uniform on the upper hemisphere.
    #[default]
    UniformBoundary,
}

fn default_collisions() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortraitConfig {
    pub table: TableSpec,
    #[serde(default = "crate::orbits::default_gamma_value")]
    pub gamma: f64,
    #[serde(default)]
    pub force: ForceField,
    pub n_orbits: u64,
    #[serde(default = "default_collisions")]
    pub collisions_per_orbit: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: PhaseSampling,
    /// Launch speed; 1 unless a force makes the energy level matter.
    #[serde(default = "default_speed")]
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub orbit_id: u64,
    pub collision_index: u64,
    pub s: f64,
    /// Unit outgoing velocity `(rot, tan, nrm)`.
    pub v: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    pub orbit_id: u64,
    pub status: String,
    pub collisions: u64,
    pub energy_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub points: Vec<PhasePoint>,
    pub orbits: Vec<OrbitSummary>,
}

/// Drops the normal component of a unit outgoing velocity.
pub fn velocity_disk_projection(v: [f64; 3]) -> (f64, f64) {
    (v[0], v[1])
}

fn sample_boundary_start(
    table: &Table,
    speed: f64,
    r: &mut rng::Rng,
) -> Result<(ParticleState, ContactId), ExperimentError> {
    let comps: Vec<_> = table
        .components()
        .iter()
        .filter(|c| c.length().is_finite())
        .collect();
    let total: f64 = comps.iter().map(|c| c.length()).sum();
    if comps.is_empty() || !(total > 0.0) {
        return Err(invalid("table has no finite boundary to sample"));
    }
    let mut u = r.random::<f64>() * total;
    let mut pick = comps[comps.len() - 1];
    for c in &comps {
        if u < c.length() {
            pick = c;
            break;
        }
        u -= c.length();
    }
    let point = match pick.shape {
        Shape::Segment {
            origin,
            direction,
            start,
            ..
        } => origin + direction * (start + u),
        Shape::Circle { center, radius, .. } => {
            let a = u / radius;
            center + radius * Vec2::new(a.cos(), a.sin())
        }
        Shape::Arc {
            center,
            radius,
            start_angle,
            ..
        } => {
            let a = start_angle + u / radius;
            center + radius * Vec2::new(a.cos(), a.sin())
        }
    };
    let (tangent, normal) = pick.frame(point);
    // uniform on the upper unit hemisphere
    let nrm: f64 = r.random::<f64>();
    let az = r.random::<f64>() * TAU;
    let rho = (1.0 - nrm * nrm).sqrt();
    let local = Vec3::new(rho * az.cos(), rho * az.sin(), nrm.max(1e-9));
    let v = from_local(&(local.normalize() * speed), tangent, normal);
    Ok((ParticleState::new(point, v), ContactId::fixed(pick.id)))
}

/// Records the unit outgoing velocity at every collision of `n_orbits`
/// random orbits. Orbits that end early keep their partial data.
pub fn sample_phase_portrait(cfg: &PhasePortraitConfig) -> Result<PhasePortrait, ExperimentError> {
    if cfg.n_orbits < 1 || cfg.collisions_per_orbit < 1 {
        return Err(invalid(
            "n_orbits and collisions_per_orbit must be at least 1",
        ));
    }
    if !(cfg.speed > 0.0) {
        return Err(invalid("speed must be positive"));
    }
    let table = cfg.table.build()?;
    let dynamics = Dynamics::new(cfg.force, MassDistribution::new(cfg.gamma)?);
    let per_orbit: Vec<(Vec<PhasePoint>, OrbitSummary)> = (0..cfg.n_orbits)
        .into_par_iter()
        .map(|id| {
            let mut r = rng::stream(cfg.seed, id);
            let mut points = Vec::new();
            let mut summary = OrbitSummary {
                orbit_id: id,
                status: "failed".into(),
                collisions: 0,
                energy_drift: 0.0,
            };
            let (start, _) = match sample_boundary_start(&table, cfg.speed, &mut r) {
                Ok(s) => s,
                Err(_) => return (points, summary),
            };
            let e0 = start.energy(&dynamics.force);
            let k0 = 0.5 * start.vel.norm_squared();
            let mut drift = 0.0_f64;
            let tracer = Tracer::new(&table, &dynamics);
            let res = tracer.trace(
                &start,
                StopCondition::collisions(cfg.collisions_per_orbit),
                |ev| {
                    let v = ev.local_out();
                    let v = v / v.norm();
                    points.push(PhasePoint {
                        orbit_id: id,
                        collision_index: points.len() as u64,
                        s: table.boundary_coordinate(ev.contact, ev.point),
                        v: [v.x, v.y, v.z.max(0.0)],
                    });
                    drift = drift.max(relative_energy_drift(
                        e0,
                        k0,
                        &ev.state_after(),
                        &dynamics.force,
                    ));
                    ControlFlow::Continue(())
                },
            );
            summary.collisions = points.len() as u64;
            summary.energy_drift = drift;
            summary.status = match res {
                Ok(s) => s.status.as_str().to_string(),
                Err(e) => format!("numerical: {e}"),
            };
            (points, summary)
        })
        .collect();
    let mut points = Vec::new();
    let mut orbits = Vec::new();
    for (p, s) in per_orbit {
        points.extend(p);
        orbits.push(s);
    }
    Ok(PhasePortrait { points, orbits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelForce {
    None,
    /// Force along the channel axis.
    Parallel,
    /// Force across the channel, pushing toward one wall.
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub width: f64,
    pub force: ChannelForce,
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "crate::orbits::default_gamma_value")]
    pub gamma: f64,
    pub n_trials: u64,
    /// Collisions per trial; extents are recorded after half and after all.
    pub n_collisions: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrial {
    pub trial: u64,
    /// Largest axial distance from the start over the first half of the run.
    pub extent_half: f64,
    pub extent_full: f64,
    pub collisions: u64,
    pub energy_drift: f64,
    pub collided: bool,
}

impl ChannelTrial {
    pub fn growth(&self) -> f64 {
        if self.extent_half > 0.0 {
            self.extent_full / self.extent_half - 1.0
        } else {
            0.0
        }
    }
}

/// Random colliding trajectories in a channel, recording how far they
/// travel along the axis. The orthogonal case draws launches with enough
/// energy to reach the far wall.
pub fn run_channel_boundedness(cfg: &ChannelConfig) -> Result<Vec<ChannelTrial>, ExperimentError> {
    if !(cfg.width > 0.0) {
        return Err(invalid("channel width must be positive"));
    }
    if cfg.n_trials < 1 || cfg.n_collisions < 2 {
        return Err(invalid("need at least one trial and two collisions"));
    }
    let (axis, force) = match cfg.force {
        ChannelForce::None => (ChannelAxis::Vertical, ForceField::none()),
        ChannelForce::Parallel => (ChannelAxis::Vertical, ForceField::downward(cfg.g)?),
        ChannelForce::Orthogonal => (ChannelAxis::Horizontal, ForceField::downward(cfg.g)?),
    };
    let table = make_channel(cfg.width, axis)?;
    let dynamics = Dynamics::new(force, MassDistribution::new(cfg.gamma)?);
    let axial = |p: Vec2| match axis {
        ChannelAxis::Vertical => p.y,
        ChannelAxis::Horizontal => p.x,
    };
    let half = cfg.n_collisions / 2;
    // Orthogonal launches need vertical speed to climb the full width
    let (speed, min_cross) = match cfg.force {
        ChannelForce::Orthogonal => {
            let climb = (2.0 * cfg.g * cfg.width).sqrt();
            (2.0 * climb, climb)
        }
        _ => (1.0, 0.0),
    };
    Ok((0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::stream(cfg.seed, trial);
            let start = loop {
                // uniform direction on the unit sphere in (x', Y', Z')
                let z: f64 = 2.0 * r.random::<f64>() - 1.0;
                let az = r.random::<f64>() * TAU;
                let rho = (1.0 - z * z).sqrt();
                let v = speed * Vec3::new(z, rho * az.cos(), rho * az.sin());
                let across = match axis {
                    ChannelAxis::Vertical => v.y,
                    ChannelAxis::Horizontal => v.z,
                };
                if across.abs() > min_cross.max(1e-3) {
                    let offset = (r.random::<f64>() - 0.5) * 0.5 * cfg.width;
                    let pos = match axis {
                        ChannelAxis::Vertical => Vec2::new(offset, 0.0),
                        ChannelAxis::Horizontal => Vec2::new(0.0, offset),
                    };
                    break ParticleState::new(pos, v);
                }
            };
            let e0 = start.energy(&force);
            let k0 = 0.5 * start.vel.norm_squared();
            let a0 = axial(start.pos);
            let (mut ext_half, mut ext) = (0.0_f64, 0.0_f64);
            let mut drift = 0.0_f64;
            let mut n = 0u64;
            let mut prev = start;
            let res = Tracer::new(&table, &dynamics).trace(
                &start,
                StopCondition::collisions(cfg.n_collisions),
                |ev| {
                    n += 1;
                    // the apex of the flight may lie beyond either endpoint
                    let reach = flight_axial_extent(&prev, ev.t_flight, &force, &axial, a0);
                    ext = ext.max(reach);
                    if n <= half {
                        ext_half = ext;
                    }
                    prev = ev.state_after();
                    drift = drift.max(relative_energy_drift(e0, k0, &prev, &force));
                    ControlFlow::Continue(())
                },
            );
            let collided = res.as_ref().map(|s| s.collisions > 0).unwrap_or(false);
            ChannelTrial {
                trial,
                extent_half: ext_half,
                extent_full: ext,
                collisions: n,
                energy_drift: drift,
                collided,
            }
        })
        .collect())
}

fn flight_axial_extent(
    s: &ParticleState,
    dt: f64,
    force: &ForceField,
    axial: &impl Fn(Vec2) -> f64,
    a0: f64,
) -> f64 {
    let end = crate::dynamics::propagate(s, dt, force);
    let mut m = (axial(s.pos) - a0).abs().max((axial(end.pos) - a0).abs());
    let a = axial(force.acceleration());
    let v = axial(s.spatial_velocity());
    if a != 0.0 {
        let te = -v / a;
        if te > 0.0 && te < dt {
            let mid = crate::dynamics::propagate(s, te, force);
            m = m.max((axial(mid.pos) - a0).abs());
        }
    }
    m
}
