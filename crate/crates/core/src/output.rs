//! SVG rendering of tables, trajectories and phase portraits, plus the
//! tabular writers used by the command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::dynamics::{propagate, CollisionEvent, ForceField, OrbitStatus, ParticleState};
use crate::experiments::{Histogram, ParticleOutcome, PhasePoint};
use crate::geometry::{BoundaryComponent, Shape, Table, Vec2};
use crate::orbits::{GridRow, SurvivalStatus};

/// Samples per flight arc.
pub const ARC_SAMPLES: usize = 48;
/// Samples per full circle of boundary.
const CIRCLE_SAMPLES: usize = 96;
/// Marker budget per phase-portrait document.
pub const MAX_MARKERS: usize = 200_000;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("viewport has no area")]
    EmptyViewport,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Stable color for an orbit: golden-angle hue steps at fixed saturation.
pub fn orbit_color(orbit_id: u64) -> String {
    let hue = (orbit_id as f64 * 137.507_764_050_037_85).rem_euclid(360.0);
    let (s, l) = (0.65, 0.45);
    let c = (1.0 - (2.0 * l - 1.0_f64).abs()) * s;
    let hp = hue / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Polyline {
        points: Vec<Vec2>,
        stroke: String,
        width: f64,
    },
    Circle {
        center: Vec2,
        radius: f64,
        stroke: String,
        fill: Option<String>,
    },
    /// Markers of a fixed pixel radius.
    Points {
        points: Vec<Vec2>,
        color: String,
        radius_px: f64,
    },
    Text {
        at: Vec2,
        text: String,
    },
}

/// Axis-aligned world rectangle mapped onto the drawing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Viewport {
    pub fn new(lo: Vec2, hi: Vec2) -> Result<Self, OutputError> {
        let d = hi - lo;
        if !(d.x > 0.0 && d.y > 0.0 && d.x.is_finite() && d.y.is_finite()) {
            return Err(OutputError::EmptyViewport);
        }
        Ok(Self { lo, hi })
    }

    /// Square-ish box around points, padded by `pad` of the larger side.
    pub fn around(points: impl IntoIterator<Item = Vec2>, pad: f64) -> Option<Self> {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in points {
            if p.x.is_finite() && p.y.is_finite() {
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        if !(lo.x <= hi.x) {
            return None;
        }
        let side = (hi - lo).max().max(1e-6);
        let centre = 0.5 * (lo + hi);
        let half = Vec2::new((hi.x - lo.x).max(0.2 * side), (hi.y - lo.y).max(0.2 * side)) * 0.5
            + Vec2::repeat(pad * side);
        Some(Self {
            lo: centre - half,
            hi: centre + half,
        })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.lo.x && p.x <= self.hi.x && p.y >= self.lo.y && p.y <= self.hi.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub viewport: Viewport,
    pub items: Vec<Primitive>,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
}

impl Scene {
    pub fn new(viewport: Viewport) -> Self {
        Self {
            viewport,
            items: Vec::new(),
            x_label: None,
            y_label: None,
        }
    }

    pub fn push(&mut self, item: Primitive) {
        self.items.push(item);
    }

    /// SVG 1.1 document `width_px` wide; the y axis points up.
    pub fn to_svg(&self, width_px: f64) -> String {
        let vp = self.viewport;
        let (w, h) = (vp.hi.x - vp.lo.x, vp.hi.y - vp.lo.y);
        let scale = width_px / w;
        let height_px = (h * scale).clamp(50.0, 4.0 * width_px);
        let sy = height_px / h;
        let map = |p: Vec2| ((p.x - vp.lo.x) * scale, (vp.hi.y - p.y) * sy);
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
            width_px, height_px, width_px, height_px
        );
        let _ = writeln!(
            s,
            r#"<rect x="0" y="0" width="{width_px:.3}" height="{height_px:.3}" fill="white"/>"#
        );
        for item in &self.items {
            match item {
                Primitive::Polyline {
                    points,
                    stroke,
                    width,
                } => {
                    if points.len() < 2 {
                        continue;
                    }
                    s.push_str(r#"<polyline fill="none" stroke=""#);
                    s.push_str(stroke);
                    let _ = write!(s, r#"" stroke-width="{width:.3}" points=""#);
                    for (k, p) in points.iter().enumerate() {
                        let (x, y) = map(*p);
                        if k > 0 {
                            s.push(' ');
                        }
                        let _ = write!(s, "{x:.3},{y:.3}");
                    }
                    s.push_str("\"/>\n");
                }
                Primitive::Circle {
                    center,
                    radius,
                    stroke,
                    fill,
                } => {
                    let (x, y) = map(*center);
                    let _ = writeln!(
                        s,
                        r#"<ellipse cx="{x:.3}" cy="{y:.3}" rx="{:.3}" ry="{:.3}" stroke="{stroke}" stroke-width="1.000" fill="{}"/>"#,
                        radius * scale,
                        radius * sy,
                        fill.as_deref().unwrap_or("none")
                    );
                }
                Primitive::Points {
                    points,
                    color,
                    radius_px,
                } => {
                    let _ = writeln!(s, r#"<g fill="{color}" stroke="none">"#);
                    for p in points {
                        let (x, y) = map(*p);
                        let _ =
                            writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{radius_px:.3}"/>"#);
                    }
                    s.push_str("</g>\n");
                }
                Primitive::Text { at, text } => {
                    let (x, y) = map(*at);
                    let _ = writeln!(
                        s,
                        r#"<text x="{x:.3}" y="{y:.3}" font-family="sans-serif" font-size="12">{}</text>"#,
                        escape(text)
                    );
                }
            }
        }
        if let Some(label) = &self.x_label {
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
                0.5 * width_px,
                height_px - 4.0,
                escape(label)
            );
        }
        if let Some(label) = &self.y_label {
            let _ = writeln!(
                s,
                r#"<text x="14" y="{:.3}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 14 {:.3})">{}</text>"#,
                0.5 * height_px,
                0.5 * height_px,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub width_px: f64,
    pub stroke_px: f64,
    pub marker_px: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            width_px: 800.0,
            stroke_px: 1.2,
            marker_px: 4.0,
        }
    }
}

/// Clips the parameter range of a (possibly infinite) segment to a box.
fn clip_segment(
    origin: Vec2,
    dir: Vec2,
    mut t0: f64,
    mut t1: f64,
    vp: &Viewport,
) -> Option<(f64, f64)> {
    for axis in 0..2 {
        let (o, d, lo, hi) = (origin[axis], dir[axis], vp.lo[axis], vp.hi[axis]);
        if d.abs() < 1e-300 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo - o) / d, (hi - o) / d);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 < t1).then_some((t0, t1))
}

fn component_primitive(c: &BoundaryComponent, vp: &Viewport, stroke_px: f64) -> Option<Primitive> {
    let stroke = "#000000".to_string();
    match c.shape {
        Shape::Segment {
            origin,
            direction,
            start,
            end,
            ..
        } => {
            let (a, b) = clip_segment(origin, direction, start, end, vp)?;
            Some(Primitive::Polyline {
                points: vec![origin + direction * a, origin + direction * b],
                stroke,
                width: 2.0 * stroke_px,
            })
        }
        Shape::Circle { center, radius, .. } => Some(Primitive::Circle {
            center,
            radius,
            stroke,
            fill: Some("#e6e6e6".to_string()),
        }),
        Shape::Arc {
            center,
            radius,
            start_angle,
            span,
            ..
        } => {
            let n = ((span.abs() / std::f64::consts::TAU * CIRCLE_SAMPLES as f64).ceil() as usize)
                .max(8);
            let points = (0..=n)
                .map(|k| {
                    let a = start_angle + span * k as f64 / n as f64;
                    center + radius * Vec2::new(a.cos(), a.sin())
                })
                .collect();
            Some(Primitive::Polyline {
                points,
                stroke,
                width: 2.0 * stroke_px,
            })
        }
    }
}

/// Adds the table outline visible in the scene's viewport.
pub fn draw_table(scene: &mut Scene, table: &Table, stroke_px: f64) {
    let vp = scene.viewport;
    for c in table.fixed_components() {
        if let Some(p) = component_primitive(c, &vp, stroke_px) {
            scene.push(p);
        }
    }
    let mut instances = Vec::new();
    table.replicated_in_box(vp.lo, vp.hi, &mut instances);
    for (_, c) in &instances {
        if let Some(p) = component_primitive(c, &vp, stroke_px) {
            scene.push(p);
        }
    }
}

/// Sampled flight leading into each collision, reconstructed backwards from
/// the incoming velocity.
pub fn flight_arcs(events: &[CollisionEvent], force: &ForceField) -> Vec<Vec<Vec2>> {
    events
        .iter()
        .map(|ev| {
            let arrival = ParticleState {
                x: ev.x,
                pos: ev.point,
                vel: ev.v_in,
                t: ev.t,
            };
            let start = propagate(&arrival, -ev.t_flight, force);
            (0..ARC_SAMPLES)
                .map(|k| {
                    let dt = ev.t_flight * k as f64 / (ARC_SAMPLES - 1) as f64;
                    propagate(&start, dt, force).pos
                })
                .collect()
        })
        .collect()
}

fn finite_table_points(table: &Table) -> Vec<Vec2> {
    table
        .fixed_components()
        .flat_map(|c| {
            let (lo, hi) = c.bounds();
            [lo, hi]
        })
        .filter(|p| p.x.is_finite() && p.y.is_finite())
        .collect()
}

/// Trajectory drawing: table outline, one polyline per flight and dots at
/// the first and last positions. Without events only the table is drawn.
pub fn render_trajectory(
    table: &Table,
    events: &[CollisionEvent],
    force: &ForceField,
    options: &RenderOptions,
) -> Result<String, OutputError> {
    let arcs = flight_arcs(events, force);
    let path_points: Vec<Vec2> = arcs.iter().flatten().copied().collect();
    let viewport = if path_points.is_empty() {
        Viewport::around(finite_table_points(table), 0.1)
    } else {
        Viewport::around(path_points.iter().copied(), 0.15)
    }
    .unwrap_or(Viewport {
        lo: Vec2::new(-1.0, -1.0),
        hi: Vec2::new(1.0, 1.0),
    });
    let mut scene = Scene::new(viewport);
    draw_table(&mut scene, table, options.stroke_px);
    let color = orbit_color(0);
    for arc in arcs {
        scene.push(Primitive::Polyline {
            points: arc,
            stroke: color.clone(),
            width: options.stroke_px,
        });
    }
    if let (Some(first), Some(last)) = (path_points.first(), path_points.last()) {
        scene.push(Primitive::Points {
            points: vec![*first],
            color: "#1a9641".to_string(),
            radius_px: options.marker_px,
        });
        scene.push(Primitive::Points {
            points: vec![*last],
            color: "#d7191c".to_string(),
            radius_px: options.marker_px,
        });
    }
    Ok(scene.to_svg(options.width_px))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// `(rot, tan)` inside the unit disk.
    #[default]
    VelocityDisk,
    /// Boundary coordinate against the outgoing angle from the normal.
    SVsAngle,
}

/// Plot coordinates of a phase point in the given mode.
pub fn phase_coordinates(p: &PhasePoint, mode: PhaseMode) -> Vec2 {
    match mode {
        PhaseMode::VelocityDisk => Vec2::new(p.v[0], p.v[1]),
        PhaseMode::SVsAngle => Vec2::new(p.s, p.v[1].atan2(p.v[2])),
    }
}

/// Every `k`-th point, with `k` the smallest stride fitting the budget.
pub fn thin<T: Clone>(points: &[T], budget: usize) -> Vec<T> {
    if points.len() <= budget || budget == 0 {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(budget);
    points.iter().step_by(stride).cloned().collect()
}

/// Scatter plot of collision records, one color per orbit.
pub fn render_phase_portrait(
    points: &[PhasePoint],
    mode: PhaseMode,
    options: &RenderOptions,
) -> String {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let viewport = match mode {
        PhaseMode::VelocityDisk => Viewport {
            lo: Vec2::new(-1.08, -1.08),
            hi: Vec2::new(1.08, 1.08),
        },
        PhaseMode::SVsAngle => Viewport {
            lo: Vec2::new(-0.04, -half_pi - 0.12),
            hi: Vec2::new(1.04, half_pi + 0.12),
        },
    };
    let mut scene = Scene::new(viewport);
    match mode {
        PhaseMode::VelocityDisk => {
            scene.push(Primitive::Circle {
                center: Vec2::zeros(),
                radius: 1.0,
                stroke: "#000000".to_string(),
                fill: None,
            });
            scene.x_label = Some("rotational".to_string());
            scene.y_label = Some("tangential".to_string());
        }
        PhaseMode::SVsAngle => {
            let frame = vec![
                Vec2::new(0.0, -half_pi),
                Vec2::new(1.0, -half_pi),
                Vec2::new(1.0, half_pi),
                Vec2::new(0.0, half_pi),
                Vec2::new(0.0, -half_pi),
            ];
            scene.push(Primitive::Polyline {
                points: frame,
                stroke: "#000000".to_string(),
                width: options.stroke_px,
            });
            scene.x_label = Some("s".to_string());
            scene.y_label = Some("angle".to_string());
        }
    }
    let kept = thin(points, MAX_MARKERS);
    let mut by_orbit: BTreeMap<u64, Vec<Vec2>> = BTreeMap::new();
    for p in &kept {
        by_orbit
            .entry(p.orbit_id)
            .or_default()
            .push(phase_coordinates(p, mode));
    }
    let marker = (0.25 * options.marker_px).max(0.5);
    for (id, pts) in by_orbit {
        scene.push(Primitive::Points {
            points: pts,
            color: orbit_color(id),
            radius_px: marker,
        });
    }
    scene.to_svg(options.width_px)
}

/// Bar outlines of a histogram, heights scaled to the tallest bin.
pub fn render_histogram(
    hist: &Histogram,
    x_label: &str,
    options: &RenderOptions,
) -> Result<String, OutputError> {
    let peak = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let span = hist.hi - hist.lo;
    let viewport = Viewport::new(
        Vec2::new(hist.lo - 0.05 * span, -0.08),
        Vec2::new(hist.hi + 0.05 * span, 1.05),
    )?;
    let mut scene = Scene::new(viewport);
    let width = span / hist.counts.len().max(1) as f64;
    for (i, &c) in hist.counts.iter().enumerate() {
        let (x0, h) = (hist.lo + i as f64 * width, c as f64 / peak);
        scene.push(Primitive::Polyline {
            points: vec![
                Vec2::new(x0, 0.0),
                Vec2::new(x0, h),
                Vec2::new(x0 + width, h),
                Vec2::new(x0 + width, 0.0),
            ],
            stroke: orbit_color(0),
            width: options.stroke_px,
        });
    }
    scene.push(Primitive::Polyline {
        points: vec![Vec2::new(hist.lo, 0.0), Vec2::new(hist.hi, 0.0)],
        stroke: "#000000".to_string(),
        width: options.stroke_px,
    });
    scene.x_label = Some(x_label.to_string());
    scene.y_label = Some(format!("count (max {})", peak as u64));
    Ok(scene.to_svg(options.width_px))
}

/// Survival grid as a square per cell: black when capped, lighter grey for
/// earlier escapes (log scale), red for numerical failures.
pub fn render_grid(
    rows: &[GridRow],
    axis2_label: &str,
    options: &RenderOptions,
) -> Result<String, OutputError> {
    let max_count = rows
        .iter()
        .map(|r| r.survival_count)
        .max()
        .unwrap_or(0)
        .max(1);
    let n1 = rows.iter().map(|r| r.i).max().map_or(1, |m| m + 1);
    let n2 = rows.iter().map(|r| r.j).max().map_or(1, |m| m + 1);
    let Some(viewport) = Viewport::around(rows.iter().map(|r| Vec2::new(r.axis1, r.axis2)), 0.06)
    else {
        return Err(OutputError::EmptyViewport);
    };
    let mut scene = Scene::new(viewport);
    let cell_px = options.width_px / (n1.max(n2) as f64 + 1.0);
    let mut by_color: BTreeMap<String, Vec<Vec2>> = BTreeMap::new();
    for r in rows {
        let color = match r.status {
            SurvivalStatus::Capped => "#000000".to_string(),
            SurvivalStatus::Numerical => "#d7191c".to_string(),
            _ => {
                let f = ((r.survival_count as f64 + 1.0).ln() / (max_count as f64 + 1.0).ln())
                    .clamp(0.0, 1.0);
                let level = (255.0 * (1.0 - 0.8 * f)).round() as u8;
                format!("#{level:02x}{level:02x}{level:02x}")
            }
        };
        by_color
            .entry(color)
            .or_default()
            .push(Vec2::new(r.axis1, r.axis2));
    }
    for (color, points) in by_color {
        scene.push(Primitive::Points {
            points,
            color,
            radius_px: 0.45 * cell_px,
        });
    }
    scene.x_label = Some("radius".to_string());
    scene.y_label = Some(axis2_label.to_string());
    Ok(scene.to_svg(options.width_px))
}

#[derive(Serialize)]
struct GaltonRecord<'a> {
    particle: u64,
    seed: u64,
    status: &'a str,
    terminal_y: Option<f64>,
    arrival_t: Option<f64>,
    n_collisions: u64,
}

/// Galton outcomes as CSV; missing values are empty cells.
pub fn write_galton_csv<W: Write>(
    w: W,
    seed: u64,
    outcomes: &[ParticleOutcome],
) -> Result<(), OutputError> {
    let mut out = csv::Writer::from_writer(w);
    for o in outcomes {
        out.serialize(GaltonRecord {
            particle: o.particle,
            seed,
            status: o.status.as_str(),
            terminal_y: o.terminal_y,
            arrival_t: o.arrival_t,
            n_collisions: o.n_collisions,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PhaseRecord {
    orbit_id: u64,
    collision_index: u64,
    s: f64,
    v_rot: f64,
    v_tan: f64,
    v_nrm: f64,
}

/// One JSON object per line.
pub fn write_phase_ndjson<W: Write>(mut w: W, points: &[PhasePoint]) -> Result<(), OutputError> {
    for p in points {
        let rec = PhaseRecord {
            orbit_id: p.orbit_id,
            collision_index: p.collision_index,
            s: p.s,
            v_rot: p.v[0],
            v_tan: p.v[1],
            v_nrm: p.v[2],
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GridRecord<'a> {
    axis1: f64,
    axis2: f64,
    survival_count: u64,
    status: &'a str,
    low_confidence: bool,
}

pub fn write_grid_csv<W: Write>(w: W, rows: &[GridRow]) -> Result<(), OutputError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(GridRecord {
            axis1: r.axis1,
            axis2: r.axis2,
            survival_count: r.survival_count,
            status: r.status.as_str(),
            low_confidence: r.low_confidence,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Any flat serializable records as CSV with a header from the field names.
pub fn write_records_csv<W: Write, T: Serialize>(w: W, records: &[T]) -> Result<(), OutputError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EventRecord<'a> {
    index: u64,
    status: &'a str,
    t: f64,
    component: Option<usize>,
    cell_i: Option<i64>,
    cell_j: Option<i64>,
    px: f64,
    py: f64,
    v_rot: f64,
    v_x: f64,
    v_y: f64,
}

/// Collision events, one row each with status `collision`, followed by a row
/// holding the final state and the orbit status.
pub fn write_events_csv<W: Write>(
    w: W,
    events: &[CollisionEvent],
    final_state: &ParticleState,
    status: OrbitStatus,
) -> Result<(), OutputError> {
    let mut out = csv::Writer::from_writer(w);
    for (k, ev) in events.iter().enumerate() {
        out.serialize(EventRecord {
            index: k as u64,
            status: "collision",
            t: ev.t,
            component: Some(ev.contact.component),
            cell_i: Some(ev.contact.cell.0),
            cell_j: Some(ev.contact.cell.1),
            px: ev.point.x,
            py: ev.point.y,
            v_rot: ev.v_out.x,
            v_x: ev.v_out.y,
            v_y: ev.v_out.z,
        })?;
    }
    out.serialize(EventRecord {
        index: events.len() as u64,
        status: status.as_str(),
        t: final_state.t,
        component: None,
        cell_i: None,
        cell_j: None,
        px: final_state.pos.x,
        py: final_state.pos.y,
        v_rot: final_state.vel.x,
        v_x: final_state.vel.y,
        v_y: final_state.vel.z,
    })?;
    out.flush()?;
    Ok(())
}
