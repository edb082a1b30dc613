//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use noslip_core::dynamics::{propagate, ForceField, ParticleState};
use noslip_core::geometry::Vec2;

// ---------------------------------------------------------------------------
// Sturm-sequence root oracle

fn trim(mut p: Vec<f64>) -> Vec<f64> {
    let max = p.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    while p.len() > 1 && p.last().unwrap().abs() <= 1e-13 * max {
        p.pop();
    }
    p
}

fn eval(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn rem(num: &[f64], den: &[f64]) -> Vec<f64> {
    let mut r = num.to_vec();
    let dl = den.len();
    while r.len() >= dl {
        let q = r[r.len() - 1] / den[dl - 1];
        let shift = r.len() - dl;
        for (i, d) in den.iter().enumerate() {
            r[shift + i] -= q * d;
        }
        r.pop();
    }
    if r.is_empty() {
        r.push(0.0);
    }
    r
}

fn sturm_chain(p: &[f64]) -> Vec<Vec<f64>> {
    let d: Vec<f64> = p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * i as f64)
        .collect();
    let mut chain = vec![p.to_vec(), trim(d)];
    loop {
        let n = chain.len();
        if chain[n - 1].len() <= 1 {
            break;
        }
        let r = trim(rem(&chain[n - 2], &chain[n - 1]));
        let scale = chain[n - 2].iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if r.len() == 1 && r[0].abs() <= 1e-13 * scale {
            break;
        }
        let max = r.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        chain.push(r.iter().map(|c| -c / max).collect());
    }
    chain
}

fn sign_changes(chain: &[Vec<f64>], t: f64) -> usize {
    let mut last = 0.0;
    let mut n = 0;
    for p in chain {
        let v = eval(p, t);
        if v != 0.0 {
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                n += 1;
            }
            last = v;
        }
    }
    n
}

/// Distinct real roots of `c` (ascending coefficients) by Sturm isolation and
/// bisection on sign changes.
pub fn sturm_roots(c: &[f64]) -> Vec<f64> {
    let p = trim(c.to_vec());
    if p.len() < 2 {
        return vec![];
    }
    let lead = *p.last().unwrap();
    let bound = 1.0
        + p[..p.len() - 1]
            .iter()
            .fold(0.0_f64, |m, x| m.max((x / lead).abs()));
    let chain = sturm_chain(&p);
    let mut out = Vec::new();
    let mut stack = vec![(-bound, bound)];
    while let Some((a, b)) = stack.pop() {
        let count = sign_changes(&chain, a).saturating_sub(sign_changes(&chain, b));
        if count == 0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        if count == 1 {
            if let Some(r) = bisect(|t| eval(&p, t), a, b) {
                out.push(r);
                continue;
            }
        }
        if b - a <= 1e-12 * mid.abs().max(1.0) {
            out.push(mid);
            continue;
        }
        stack.push((a, mid));
        stack.push((mid, b));
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Root of `f` in `[a, b]` when the endpoint signs differ.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> Option<f64> {
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if (fa > 0.0) == (fb > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

// ---------------------------------------------------------------------------
// Dense-sampling event oracle

/// What the sampled arc ran into first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleHit<K> {
    Boundary {
        t: f64,
        key: K,
        point: Vec2,
    },
    /// Crossed the absorbing floor.
    Floor {
        t: f64,
    },
    None,
}

/// Samples the ballistic arc at `step`, finds the first sample outside the
/// region and bisects the inside test on the bracketing interval. `blocker`
/// names the obstacle violated at a point (`None` means inside); `floor`
/// is an optional absorbing height.
pub fn dense_first_hit<K: Copy>(
    state: &ParticleState,
    force: &ForceField,
    step: f64,
    t_end: f64,
    floor: Option<f64>,
    blocker: impl Fn(Vec2) -> Option<K>,
) -> OracleHit<K> {
    let at = |t: f64| propagate(state, t, force).pos;
    let below = |p: Vec2| floor.is_some_and(|f| p.y < f);
    let blocked = |t: f64| {
        let p = at(t);
        blocker(p).is_some() || below(p)
    };
    let mut t0 = 0.0;
    while t0 < t_end {
        let t1 = t0 + step;
        if blocked(t1) {
            let (mut a, mut b) = (t0, t1);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if blocked(m) {
                    b = m;
                } else {
                    a = m;
                }
            }
            let p = at(b);
            return match blocker(p) {
                Some(key) => OracleHit::Boundary {
                    t: b,
                    key,
                    point: p,
                },
                None => OracleHit::Floor { t: b },
            };
        }
        t0 = t1;
    }
    OracleHit::None
}

/// Peg blocking `p` on a Galton board (pegs of radius `r` on a triangular
/// lattice of spacing `a`, top row at height `top` with a peg at `x = 0`,
/// rows `lowest..=0`), enumerated by a direct loop over nearby indices.
/// Keys are `(column, row)`.
pub fn galton_blocker(p: Vec2, a: f64, r: f64, top: f64, lowest: i64) -> Option<(i64, i64)> {
    let h = a * 3f64.sqrt() / 2.0;
    let k_mid = ((p.y - top) / h).round() as i64;
    for k in (k_mid - 2)..=(k_mid + 2) {
        if k < lowest || k > 0 {
            continue;
        }
        let shift = 0.5 * k.rem_euclid(2) as f64;
        let j_mid = (p.x / a - shift).round() as i64;
        for j in (j_mid - 2)..=(j_mid + 2) {
            let c = Vec2::new((j as f64 + shift) * a, top + k as f64 * h);
            if (p - c).norm_squared() < r * r {
                return Some((j, k));
            }
        }
    }
    None
}

/// Component of an axis-aligned square of half-side `h` with a central
/// scatterer of radius `r` that excludes `p`: walls 0..4 counter-clockwise
/// from the bottom, disk 4.
pub fn sinai_square_blocker(p: Vec2, h: f64, r: f64) -> Option<usize> {
    if p.y < -h {
        Some(0)
    } else if p.x > h {
        Some(1)
    } else if p.y > h {
        Some(2)
    } else if p.x < -h {
        Some(3)
    } else if p.norm_squared() < r * r {
        Some(4)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Randomized event-detection comparison

use noslip_core::dynamics::{next_collision, Dynamics, Event, MassDistribution};
use noslip_core::geometry::{make_galton_board, make_sinai_cell, CellShape, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default)]
pub struct EventComparison {
    pub instances: usize,
    pub max_time_error: f64,
    pub mismatches: Vec<String>,
}

const GALTON_ROWS: i64 = 20;
const SINAI_HALF: f64 = 1.0;
const SINAI_RADIUS: f64 = 0.4;
const ORACLE_HORIZON: f64 = 8.0;

fn galton_table() -> Table {
    let h = 3f64.sqrt() / 2.0;
    make_galton_board(1.0, 0.25, 0.0, -(GALTON_ROWS as f64 + 0.5) * h).unwrap()
}

fn random_force(rng: &mut ChaCha8Rng, downward_only: bool) -> ForceField {
    if rng.random::<f64>() < 0.2 {
        return ForceField::none();
    }
    let g = rng.random_range(0.3..2.0);
    if downward_only {
        ForceField::downward(g).unwrap()
    } else {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        ForceField::new(g, Vec2::new(a.cos(), a.sin())).unwrap()
    }
}

fn random_velocity(rng: &mut ChaCha8Rng, speed: f64) -> noslip_core::dynamics::ParticleState {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let spin = rng.random_range(-1.0..1.0);
    ParticleState::new(
        Vec2::zeros(),
        nalgebra::Vector3::new(spin, speed * a.cos(), speed * a.sin()),
    )
}

/// Starts either in the open region or on an obstacle, moving away from it.
fn galton_instance(rng: &mut ChaCha8Rng) -> ParticleState {
    let (r, h) = (0.25, 3f64.sqrt() / 2.0);
    let speed = rng.random_range(0.3..2.0);
    let mut s = random_velocity(rng, speed);
    if rng.random::<f64>() < 0.3 {
        let k = -rng.random_range(0..GALTON_ROWS);
        let shift = 0.5 * k.rem_euclid(2) as f64;
        let j = rng.random_range(-3..=3);
        let c = Vec2::new(j as f64 + shift, k as f64 * h);
        loop {
            let psi = rng.random_range(0.0..std::f64::consts::TAU);
            let n = Vec2::new(psi.cos(), psi.sin());
            if s.spatial_velocity().dot(&n) > 0.05 * speed {
                s.pos = c + r * n;
                return s;
            }
            s = random_velocity(rng, speed);
        }
    }
    loop {
        let p = Vec2::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-GALTON_ROWS as f64 * h..1.0),
        );
        if galton_blocker(p, 1.0, r, 0.0, -GALTON_ROWS).is_none() {
            s.pos = p;
            return s;
        }
    }
}

fn sinai_instance(rng: &mut ChaCha8Rng) -> ParticleState {
    let speed = rng.random_range(0.3..2.0);
    let mut s = random_velocity(rng, speed);
    loop {
        let p = Vec2::new(
            rng.random_range(-SINAI_HALF..SINAI_HALF),
            rng.random_range(-SINAI_HALF..SINAI_HALF),
        );
        if sinai_square_blocker(p, SINAI_HALF, SINAI_RADIUS).is_none() {
            s.pos = p;
            return s;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn compare<K: Copy + PartialEq + std::fmt::Debug>(
    report: &mut EventComparison,
    label: &str,
    state: &ParticleState,
    force: &ForceField,
    oracle: OracleHit<K>,
    solver: Event,
    key_of: impl Fn(&noslip_core::dynamics::CollisionEvent) -> K,
    corner: impl Fn(Vec2) -> bool,
) {
    report.instances += 1;
    let mut fail = |why: String| {
        report.mismatches.push(format!(
            "{label}: {why}; state {:?} force {:?}",
            state, force
        ));
    };
    match (oracle, solver) {
        (OracleHit::Boundary { t, key, .. }, Event::Collision(ev)) => {
            let dt = (ev.t_flight - t).abs();
            report.max_time_error = report.max_time_error.max(dt);
            if key_of(&ev) != key {
                fail(format!("component {:?} vs oracle {:?}", key_of(&ev), key));
            } else if dt > 1e-8 {
                fail(format!("time {} vs oracle {}", ev.t_flight, t));
            }
        }
        (OracleHit::Boundary { t, point, .. }, Event::Vertex { t_flight, .. }) => {
            if !corner(point) || (t_flight - t).abs() > 1e-8 {
                fail(format!("vertex at {t_flight} vs oracle {t}"));
            }
        }
        (OracleHit::Floor { t }, Event::Escaped { t_flight, .. }) => {
            let dt = (t_flight - t).abs();
            report.max_time_error = report.max_time_error.max(dt);
            if dt > 1e-8 {
                fail(format!("floor time {t_flight} vs oracle {t}"));
            }
        }
        (OracleHit::None, Event::NoEvent) => {}
        (OracleHit::None, Event::Collision(ev)) if ev.t_flight > ORACLE_HORIZON => {}
        (OracleHit::None, Event::Escaped { t_flight, .. }) if t_flight > ORACLE_HORIZON => {}
        (o, s) => fail(format!("oracle {o:?} vs solver {s:?}")),
    }
}

/// Compares `next_collision` with the dense-sampling oracle on `n` random
/// instances split between a Galton board and a Sinai square.
pub fn event_oracle_comparison(n: usize, seed: u64) -> EventComparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let galton = galton_table();
    let sinai = make_sinai_cell(
        CellShape::Square {
            side: 2.0 * SINAI_HALF,
        },
        SINAI_RADIUS,
        false,
    )
    .unwrap();
    let floor = -(GALTON_ROWS as f64 + 0.5) * 3f64.sqrt() / 2.0;
    let mass = MassDistribution::new(std::f64::consts::FRAC_1_SQRT_2).unwrap();
    let mut report = EventComparison::default();
    for i in 0..n {
        if i % 5 < 3 {
            let state = galton_instance(&mut rng);
            let force = random_force(&mut rng, true);
            let dynamics = Dynamics::new(force, mass);
            let step = 1e-4 / state.spatial_velocity().norm();
            let oracle = dense_first_hit(&state, &force, step, ORACLE_HORIZON, Some(floor), |p| {
                galton_blocker(p, 1.0, 0.25, 0.0, -GALTON_ROWS)
            });
            let solver = next_collision(&state, &galton, &dynamics).unwrap();
            compare(
                &mut report,
                "galton",
                &state,
                &force,
                oracle,
                solver,
                |ev| ev.contact.cell,
                |_| false,
            );
        } else {
            let state = sinai_instance(&mut rng);
            let force = random_force(&mut rng, false);
            let dynamics = Dynamics::new(force, mass);
            let step = 2e-4 * SINAI_HALF / state.spatial_velocity().norm();
            let oracle = dense_first_hit(&state, &force, step, ORACLE_HORIZON, None, |p| {
                sinai_square_blocker(p, SINAI_HALF, SINAI_RADIUS)
            });
            let solver = next_collision(&state, &sinai, &dynamics).unwrap();
            let corner = |p: Vec2| {
                (p.x.abs() - SINAI_HALF).abs() < 1e-6 && (p.y.abs() - SINAI_HALF).abs() < 1e-6
            };
            compare(
                &mut report,
                "sinai",
                &state,
                &force,
                oracle,
                solver,
                |ev| ev.contact.component,
                corner,
            );
        }
    }
    report
}
