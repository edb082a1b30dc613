//! Command implementations. Each writes its artifacts into the output
//! directory and returns their file names.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use noslip_core::dynamics::{
    run_orbit, Dynamics, ForceField, MassDistribution, ParticleState, Vec3,
};
use noslip_core::experiments::{
    histogram, run_channel_boundedness, run_galton, sample_phase_portrait, sample_skewness,
    ChannelConfig, GaltonConfig,
};
use noslip_core::geometry::Vec2;
use noslip_core::orbits::{
    construct_wedge_periodic, default_gamma_value, stability_grid, Scenario, SurvivalStatus,
};
use noslip_core::output::{
    render_grid, render_histogram, render_phase_portrait, render_trajectory, write_events_csv,
    write_galton_csv, write_grid_csv, write_phase_ndjson, write_records_csv, RenderOptions,
};
use noslip_core::Table;
use serde::Serialize;

use crate::config::{GridRunConfig, Initial, PeriodicConfig, PhaseRunConfig, SimulateConfig};
use crate::error::CliError;

pub struct Context {
    pub out: PathBuf,
    pub svg: bool,
}

impl Context {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.out.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(format!("writing {}", self.out.join(name).display()), e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn finish(w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.into_inner()
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e.into_error()))
        .map(|_| ())
}

fn trajectory_outputs(
    ctx: &Context,
    table: &Table,
    dynamics: &Dynamics,
    state: &ParticleState,
    stop: noslip_core::StopCondition,
) -> Result<(Vec<String>, noslip_core::Orbit), CliError> {
    if stop.max_collisions.is_none() && stop.t_max.is_none() {
        return Err(CliError::Config(
            "stop needs max_collisions or t_max".into(),
        ));
    }
    let orbit = run_orbit(state, table, dynamics, stop)?;
    let w = ctx.create("events.csv")?;
    write_events_csv(w, &orbit.events, &orbit.final_state, orbit.status)?;
    let mut outputs = vec!["events.csv".to_string()];
    if ctx.svg {
        let svg = render_trajectory(
            table,
            &orbit.events,
            &dynamics.force,
            &RenderOptions::default(),
        )?;
        ctx.write_text("trajectory.svg", &svg)?;
        outputs.push("trajectory.svg".to_string());
    }
    Ok((outputs, orbit))
}

pub fn simulate(cfg: &SimulateConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let (table, mut dynamics, state) = match &cfg.initial {
        Initial::State { pos, vel } => {
            let spec = cfg.table.as_ref().ok_or_else(|| {
                CliError::Config("an explicit initial state needs a table".into())
            })?;
            let mass = MassDistribution::new(cfg.gamma.unwrap_or_else(default_gamma_value))?;
            let state =
                ParticleState::new(Vec2::new(pos[0], pos[1]), Vec3::new(vel[0], vel[1], vel[2]));
            (
                spec.build()?,
                Dynamics::new(cfg.force.unwrap_or_else(ForceField::none), mass),
                state,
            )
        }
        Initial::WedgePeriodic(spec) => {
            if cfg.table.is_some() || cfg.gamma.is_some() || cfg.force.is_some() {
                return Err(CliError::Config(
                    "a wedge-periodic start defines its own table, gamma and force".into(),
                ));
            }
            let orbit = construct_wedge_periodic(spec)?;
            (orbit.table, orbit.dynamics, orbit.state)
        }
    };
    if let Some(rule) = cfg.rule {
        dynamics = dynamics.with_rule(rule);
    }
    let (outputs, orbit) = trajectory_outputs(ctx, &table, &dynamics, &state, cfg.stop)?;
    println!(
        "{} collisions, status {}, final time {:.6}",
        orbit.events.len(),
        orbit.status.as_str(),
        orbit.final_state.t
    );
    Ok(outputs)
}

#[derive(Serialize)]
struct PeriodicReport {
    speed: f64,
    spin: f64,
    position: [f64; 2],
    velocity: [f64; 3],
    q1: [f64; 2],
    closure_error_two: Option<f64>,
    closure_error_max: Option<f64>,
}

pub fn periodic(cfg: &PeriodicConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let orbit = construct_wedge_periodic(&cfg.wedge)?;
    let s = orbit.state;
    println!("speed v = {:.12}", orbit.speed);
    println!("spin x0' = {:.12}", orbit.spin);
    println!(
        "initial state: position ({:.12}, {:.12}), velocity (rot {:.12}, x {:.12}, y {:.12})",
        s.pos.x, s.pos.y, s.vel.x, s.vel.y, s.vel.z
    );
    let mut report = PeriodicReport {
        speed: orbit.speed,
        spin: orbit.spin,
        position: [s.pos.x, s.pos.y],
        velocity: [s.vel.x, s.vel.y, s.vel.z],
        q1: [orbit.q1.x, orbit.q1.y],
        closure_error_two: None,
        closure_error_max: None,
    };
    let mut outputs = Vec::new();
    if cfg.collisions > 0 {
        let pairs = (cfg.collisions / 2).max(1) as usize;
        let errs = orbit.closure_errors(pairs)?;
        let max = errs.iter().copied().fold(0.0, f64::max);
        println!("closure error after 2 collisions: {:.3e}", errs[0]);
        println!(
            "largest closure error over {} collisions: {max:.3e}",
            2 * pairs
        );
        report.closure_error_two = Some(errs[0]);
        report.closure_error_max = Some(max);
        let stop = noslip_core::StopCondition::collisions(cfg.collisions);
        outputs = trajectory_outputs(ctx, &orbit.table, &orbit.dynamics, &orbit.state, stop)?.0;
    }
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    ctx.write_text("periodic.json", &(json + "\n"))?;
    outputs.push("periodic.json".to_string());
    Ok(outputs)
}

const HISTOGRAM_BINS: usize = 41;

pub fn galton(cfg: &GaltonConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let res = run_galton(cfg)?;
    let path = ctx.path("galton.csv");
    let mut w = ctx.create("galton.csv")?;
    write_galton_csv(&mut w, cfg.seed, &res.outcomes)?;
    finish(w, &path)?;
    let mut outputs = vec!["galton.csv".to_string()];
    let ys: Vec<f64> = res.arrived().map(|(y, _)| y).collect();
    println!(
        "{} particles: arrived {:.4}, unfinished {}, failed {}, skewness {:.4}, max energy drift {:.2e}",
        res.outcomes.len(),
        res.arrival_fraction(),
        res.unfinished(),
        res.failed(),
        sample_skewness(&ys),
        res.max_energy_drift()
    );
    for o in res.outcomes.iter().filter(|o| o.error.is_some()) {
        eprintln!(
            "particle {} failed: {}",
            o.particle,
            o.error.as_deref().unwrap_or_default()
        );
    }
    if ctx.svg && !ys.is_empty() {
        let reach = ys
            .iter()
            .fold(0.0f64, |m, y| m.max(y.abs()))
            .max(cfg.spacing);
        let hist = histogram(&ys, HISTOGRAM_BINS, -reach, reach)?;
        ctx.write_text(
            "galton_histogram.svg",
            &render_histogram(
                &hist,
                "horizontal position at the floor",
                &RenderOptions::default(),
            )?,
        )?;
        outputs.push("galton_histogram.svg".to_string());
    }
    Ok(outputs)
}

pub fn phase_portrait(cfg: &PhaseRunConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let portrait = sample_phase_portrait(&cfg.portrait)?;
    let path = ctx.path("phase.ndjson");
    let mut w = ctx.create("phase.ndjson")?;
    write_phase_ndjson(&mut w, &portrait.points)?;
    finish(w, &path)?;
    let path = ctx.path("orbits.csv");
    let mut w = ctx.create("orbits.csv")?;
    write_records_csv(&mut w, &portrait.orbits)?;
    finish(w, &path)?;
    let mut outputs = vec!["phase.ndjson".to_string(), "orbits.csv".to_string()];
    let drift = portrait
        .orbits
        .iter()
        .map(|o| o.energy_drift)
        .fold(0.0, f64::max);
    println!(
        "{} orbits, {} collision records, max energy drift {drift:.2e}",
        portrait.orbits.len(),
        portrait.points.len()
    );
    if ctx.svg {
        let svg = render_phase_portrait(&portrait.points, cfg.mode, &RenderOptions::default());
        ctx.write_text("phase_portrait.svg", &svg)?;
        outputs.push("phase_portrait.svg".to_string());
    }
    Ok(outputs)
}

pub fn grid(cfg: &GridRunConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let rows = stability_grid(&cfg.grid, cfg.scenario)?;
    let path = ctx.path("grid.csv");
    let mut w = ctx.create("grid.csv")?;
    write_grid_csv(&mut w, &rows)?;
    finish(w, &path)?;
    let mut outputs = vec!["grid.csv".to_string()];
    let capped = rows
        .iter()
        .filter(|r| r.status == SurvivalStatus::Capped)
        .count();
    let numerical = rows
        .iter()
        .filter(|r| r.status == SurvivalStatus::Numerical)
        .count();
    println!(
        "{} cells: {capped} reached the cap, {numerical} numerical failures",
        rows.len()
    );
    if ctx.svg {
        let label = match cfg.scenario {
            Scenario::FixedContactAngle { .. } => "launch angle",
            _ => "contact angle",
        };
        ctx.write_text(
            "grid.svg",
            &render_grid(&rows, label, &RenderOptions::default())?,
        )?;
        outputs.push("grid.svg".to_string());
    }
    Ok(outputs)
}

pub fn channel(cfg: &ChannelConfig, ctx: &Context) -> Result<Vec<String>, CliError> {
    let trials = run_channel_boundedness(cfg)?;
    let path = ctx.path("channel.csv");
    let mut w = ctx.create("channel.csv")?;
    write_records_csv(&mut w, &trials)?;
    finish(w, &path)?;
    let growth = trials.iter().map(|t| t.growth()).fold(0.0, f64::max);
    let extent = trials.iter().map(|t| t.extent_full).fold(0.0, f64::max);
    println!(
        "{} trials: largest extent {extent:.6}, largest growth from half to full run {growth:.3e}",
        trials.len()
    );
    Ok(vec!["channel.csv".to_string()])
}
