//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use noslip_core::dynamics::*;
use noslip_core::experiments::*;
use noslip_core::geometry::*;
use noslip_core::orbits::*;
use noslip_core::output::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

/// Worst energy drift per 10^3 collisions seen across the whole run.
#[derive(Default)]
struct EnergyLedger {
    worst: f64,
    runs: usize,
}

impl EnergyLedger {
    fn record(&mut self, drift: f64, collisions: u64) {
        let per_k = drift / (collisions as f64 / 1000.0).max(1.0);
        self.worst = self.worst.max(per_k);
        self.runs += 1;
    }

    fn record_events(
        &mut self,
        start: &ParticleState,
        events: &[CollisionEvent],
        force: &ForceField,
    ) {
        let (e0, k0) = (start.energy(force), 0.5 * start.vel.norm_squared());
        let drift = events
            .iter()
            .map(|ev| relative_energy_drift(e0, k0, &ev.state_after(), force))
            .fold(0.0, f64::max);
        self.record(drift, events.len() as u64);
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mass(gamma: f64) -> MassDistribution {
    MassDistribution::new(gamma).unwrap()
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = mass(rng.random_range(0.0..=10.0));
        let maps = [collision_matrix(m), bounce_velocity_matrix(m)];
        for _ in 0..1000 {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            for map in &maps {
                let once = map * v;
                worst = worst
                    .max((once.norm() - v.norm()).abs())
                    .max((map * once - v).norm());
            }
        }
    }
    let t = start.elapsed();
    verdict(
        worst < 1e-12 && within(t, 1.0),
        format!(
            "max error {worst:.2e} over 10^5 pairs; {:.3}s",
            t.as_secs_f64()
        ),
    )
}

fn criterion_2(energy: &mut EnergyLedger) -> Verdict {
    let start = Instant::now();
    let force = ForceField::downward(1.0).unwrap();
    let table = make_half_plane();
    let m = mass(FRAC_1_SQRT_2);
    let dynamics = Dynamics::new(force, m);

    let s = construct_half_plane_bounce(m, &force, 1.3, 0.0).unwrap();
    let ev = run_orbit(&s, &table, &dynamics, StopCondition::collisions(50))
        .unwrap()
        .events;
    energy.record_events(&s, &ev, &force);
    let closure = ev
        .chunks_exact(2)
        .map(|p| (p[1].point - s.pos).norm())
        .fold(if ev.len() == 50 { 0.0 } else { f64::INFINITY }, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst_var: f64 = 0.0;
    let mut worst_period: f64 = 0.0;
    for _ in 0..20 {
        let mut off =
            construct_half_plane_bounce(m, &force, rng.random_range(0.5..2.0), 0.0).unwrap();
        off.vel.y *= rng.random_range(1.05..1.5);
        off.vel.x += rng.random_range(-0.3..0.3);
        let ev = run_orbit(&off, &table, &dynamics, StopCondition::collisions(202))
            .unwrap()
            .events;
        energy.record_events(&off, &ev, &force);
        let marks: Vec<f64> = ev.chunks_exact(2).map(|p| p[1].point.x).collect();
        let steps: Vec<f64> = marks.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = steps.iter().sum::<f64>() / steps.len() as f64;
        let var = steps.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / steps.len() as f64;
        worst_var = worst_var.max(if steps.len() == 100 {
            var
        } else {
            f64::INFINITY
        });
    }
    for _ in 0..200 {
        let st = ParticleState::new(
            Vec2::zeros(),
            Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.1..2.0),
            ),
        );
        let dyn_g = Dynamics::new(force, mass(rng.random_range(0.05..4.0)));
        let ev = run_orbit(&st, &table, &dyn_g, StopCondition::collisions(20))
            .unwrap()
            .events;
        energy.record_events(&st, &ev, &force);
        for w in ev.windows(3) {
            worst_period = worst_period.max((w[2].v_out - w[0].v_out).norm() / st.vel.norm());
        }
    }
    let t = start.elapsed();
    verdict(
        closure < 1e-8 && worst_var < 1e-18 && worst_period < 1e-10 && within(t, 1.0),
        format!(
            "closure {closure:.2e}, drift variance {worst_var:.2e}, velocity period error {worst_period:.2e}; {:.3}s",
            t.as_secs_f64()
        ),
    )
}

/// Per-pair growth of a 1e-12 relative spin perturbation over eight pairs;
/// values well above one mark an unstable orbit.
fn perturbation_growth(orbit: &PeriodicOrbit) -> f64 {
    let mut s = orbit.state;
    s.vel.x *= 1.0 + 1e-12;
    let ev = run_orbit(
        &s,
        &orbit.table,
        &orbit.dynamics,
        StopCondition::collisions(16),
    )
    .unwrap()
    .events;
    let errs: Vec<f64> = ev
        .chunks_exact(2)
        .map(|p| (p[1].point - orbit.q0).norm())
        .collect();
    if errs.len() < 8 {
        return f64::INFINITY;
    }
    (errs[7] / errs[0].max(1e-16)).powf(1.0 / 7.0)
}

fn criterion_3(energy: &mut EnergyLedger) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let (mut drawn, mut orbits) = (0, 0);
    let (mut worst_two, mut min_broken) = (0.0f64, f64::INFINITY);
    let mut open_after_100 = Vec::new();
    while drawn < 100 {
        let phi: f64 = rng.random_range(0.05..1.52);
        let theta: f64 = rng.random_range(0.05..1.52);
        let d = rng.random_range(0.5..2.0);
        let g = rng.random_range(0.5..2.0);
        let gamma = rng.random_range(0.2..1.5);
        if (theta - phi).sin().abs() < 0.05 {
            continue;
        }
        drawn += 1;
        for orientation in [WedgeOrientation::OpeningUp, WedgeOrientation::OpeningDown] {
            let spec = WedgePeriodicSpec {
                phi,
                theta,
                d,
                g,
                gamma,
                orientation,
                force: None,
            };
            let orbit = construct_wedge_periodic(&spec).unwrap();
            orbits += 1;
            let errs = orbit.closure_errors(50).unwrap();
            worst_two = worst_two.max(errs[0]);
            let ev = run_orbit(
                &orbit.state,
                &orbit.table,
                &orbit.dynamics,
                StopCondition::collisions(100),
            )
            .unwrap()
            .events;
            energy.record_events(&orbit.state, &ev, &orbit.dynamics.force);
            let long = errs.iter().copied().fold(0.0, f64::max);
            if long.is_nan() || long >= 1e-7 {
                open_after_100.push((theta, perturbation_growth(&orbit)));
            }
            let mut bad = orbit.clone();
            bad.state.vel.x *= 1.5;
            min_broken = min_broken.min(bad.closure_errors(1).unwrap()[0]);
        }
    }
    let t = start.elapsed();
    let smallest_open_theta = open_after_100
        .iter()
        .map(|o| o.0)
        .fold(f64::INFINITY, f64::min);
    let weakest_growth = open_after_100
        .iter()
        .map(|o| o.1)
        .fold(f64::INFINITY, f64::min);
    verdict(
        worst_two < 1e-7 && open_after_100.is_empty() && min_broken > 1e-4 && within(t, 10.0),
        format!(
            "{orbits} orbits: 2-collision error {worst_two:.2e}; {} open within 100 collisions (smallest theta {smallest_open_theta:.3}, perturbation growth >= {weakest_growth:.2} per pair); 1.5x spin error >= {min_broken:.2e}; {:.2}s",
            open_after_100.len(),
            t.as_secs_f64()
        ),
    )
}

fn grid_spec(axis2: GridAxis) -> StabilityGridSpec {
    StabilityGridSpec {
        radius: GridAxis::new(0.05, 0.95, 20),
        axis2,
        epsilon: 1e-3,
        max_collisions: 1000,
        gamma: FRAC_1_SQRT_2,
    }
}

fn analytic_stable(radius: f64, contact: f64, m: MassDistribution) -> bool {
    let (q0, q1) = two_disk_contact_points(radius, contact);
    is_linearly_stable_no_force(1.0 / radius, (q1 - q0).norm(), m, contact).unwrap()
}

fn stable_cells(rows: &[GridRow]) -> Vec<bool> {
    rows.iter()
        .map(|r| r.status == SurvivalStatus::Capped)
        .collect()
}

fn criterion_4() -> (Verdict, Vec<GridRow>) {
    let start = Instant::now();
    let spec = grid_spec(GridAxis::new(0.0, 1.5, 20));
    let rows = stability_grid(&spec, Scenario::NoForceHorizontal).unwrap();
    let m = mass(spec.gamma);
    let (nr, na) = (spec.radius.n, spec.axis2.n);
    let analytic: Vec<bool> = rows
        .iter()
        .map(|r| analytic_stable(r.axis1, r.axis2, m))
        .collect();
    let (mut considered, mut agree) = (0, 0);
    for r in &rows {
        let here = analytic[r.i * na + r.j];
        let mut far = true;
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (i, j) = (r.i as i64 + di, r.j as i64 + dj);
                if i >= 0 && j >= 0 && (i as usize) < nr && (j as usize) < na {
                    far &= analytic[i as usize * na + j as usize] == here;
                }
            }
        }
        if far {
            considered += 1;
            agree += usize::from((r.status == SurvivalStatus::Capped) == here);
        }
    }
    let frac = agree as f64 / considered.max(1) as f64;
    let t = start.elapsed();
    (
        verdict(
            considered > 0 && frac >= 0.9 && within(t, 600.0),
            format!(
                "{agree}/{considered} cells away from the threshold agree ({:.1}%); {:.2}s",
                100.0 * frac,
                t.as_secs_f64()
            ),
        ),
        rows,
    )
}

fn criterion_5(no_force: &[GridRow]) -> Verdict {
    let start = Instant::now();
    let spec = grid_spec(GridAxis::new(0.0, 1.5, 20));
    let rows = stability_grid(
        &spec,
        Scenario::ForceWedgeLaunch {
            g: 1.0,
            theta: 0.05,
        },
    )
    .unwrap();
    let agree = stable_cells(&rows)
        .iter()
        .zip(stable_cells(no_force))
        .filter(|(a, b)| **a == *b)
        .count();
    let frac = agree as f64 / rows.len() as f64;
    verdict(
        frac >= 0.85,
        format!(
            "{agree}/{} cells match the no-force grid ({:.1}%); {:.2}s",
            rows.len(),
            100.0 * frac,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let spec = grid_spec(GridAxis::new(0.05, 1.5, 20));
    let rows = stability_grid(
        &spec,
        Scenario::FixedContactAngle {
            g: 1.0,
            contact_angle: 0.4,
        },
    )
    .unwrap();
    let mixed: Vec<f64> = (0..spec.radius.n)
        .filter(|&i| {
            let row: Vec<&GridRow> = rows.iter().filter(|r| r.i == i).collect();
            row.iter().any(|r| r.status == SurvivalStatus::Capped)
                && row.iter().any(|r| {
                    r.status == SurvivalStatus::Escaped
                        && r.survival_count < spec.max_collisions / 2
                })
        })
        .map(|i| spec.radius.value(i))
        .collect();
    verdict(
        !mixed.is_empty(),
        format!(
            "{} radius rows mix capped and early escapes {mixed:.3?}; {:.2}s",
            mixed.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

struct GaltonStats {
    fraction: f64,
    skew: f64,
    unimodal: bool,
}

fn galton_stats(rule: RuleChoice, energy: &mut EnergyLedger) -> (GaltonStats, GaltonResult) {
    let res = run_galton(&GaltonConfig::new(10_000, rule, SEED)).unwrap();
    for o in &res.outcomes {
        energy.record(o.energy_drift, o.n_collisions);
    }
    let ys: Vec<f64> = res.arrived().map(|(y, _)| y).collect();
    let reach = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1.0);
    let hist = histogram(&ys, 41, -reach, reach).unwrap();
    let stats = GaltonStats {
        fraction: res.arrival_fraction(),
        skew: sample_skewness(&ys),
        unimodal: is_unimodal(&hist.counts, 3.0),
    };
    (stats, res)
}

fn criterion_7(energy: &mut EnergyLedger) -> Verdict {
    let start = Instant::now();
    let (spec, spec_res) = galton_stats(RuleChoice::Specular, energy);
    let (ns, ns_res) = galton_stats(
        RuleChoice::NoSlip {
            gamma: FRAC_1_SQRT_2,
        },
        energy,
    );
    let t = start.elapsed();
    let shape_ok = |s: &GaltonStats| s.unimodal && s.skew.abs() < 0.2;
    let failed = spec_res.failed() + ns_res.failed();
    verdict(
        spec.fraction > 0.95
            && ns.fraction < 0.85
            && spec.fraction - ns.fraction >= 0.1
            && shape_ok(&spec)
            && shape_ok(&ns)
            && failed == 0
            && within(t, 600.0),
        format!(
            "arrival specular {:.4}, no-slip {:.4} (gap {:.4}); skew {:.3}/{:.3}; unimodal {}/{}; {failed} failed; {:.1}s",
            spec.fraction,
            ns.fraction,
            spec.fraction - ns.fraction,
            spec.skew,
            ns.skew,
            spec.unimodal,
            ns.unimodal,
            t.as_secs_f64()
        ),
    )
}

fn criterion_8(energy: &mut EnergyLedger) -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for force in [
        ChannelForce::None,
        ChannelForce::Parallel,
        ChannelForce::Orthogonal,
    ] {
        let trials = run_channel_boundedness(&ChannelConfig {
            width: 1.0,
            force,
            g: 1.0,
            gamma: FRAC_1_SQRT_2,
            n_trials: 100,
            n_collisions: 20_000,
            seed: SEED,
        })
        .unwrap();
        for tr in &trials {
            energy.record(tr.energy_drift, tr.collisions);
        }
        let growth = trials.iter().map(|t| t.growth()).fold(0.0, f64::max);
        let short = trials
            .iter()
            .filter(|t| !t.collided || t.collisions < 20_000)
            .count();
        pass &= growth < 0.01 && short == 0 && trials.len() == 100;
        parts.push(format!("{force:?} growth {growth:.2e}"));
    }
    let t = start.elapsed();
    verdict(
        pass && within(t, 300.0),
        format!("{}; {:.1}s", parts.join(", "), t.as_secs_f64()),
    )
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let report = common::event_oracle_comparison(1000, SEED);
    let t = start.elapsed();
    let shown: Vec<&String> = report.mismatches.iter().take(3).collect();
    verdict(
        report.instances == 1000
            && report.mismatches.is_empty()
            && report.max_time_error < 1e-8
            && within(t, 60.0),
        format!(
            "{} instances, {} mismatches {shown:?}, max time error {:.2e}; {:.2}s",
            report.instances,
            report.mismatches.len(),
            report.max_time_error,
            t.as_secs_f64()
        ),
    )
}

fn criterion_10(energy: &EnergyLedger) -> Verdict {
    verdict(
        energy.runs > 0 && energy.worst < 1e-9,
        format!(
            "worst drift {:.2e} per 10^3 collisions over {} runs",
            energy.worst, energy.runs
        ),
    )
}

fn outputs(energy: &mut EnergyLedger) -> (Vec<u8>, Vec<u8>) {
    let mut cfg = GaltonConfig::new(
        500,
        RuleChoice::NoSlip {
            gamma: FRAC_1_SQRT_2,
        },
        SEED,
    );
    cfg.rows = 10;
    let res = run_galton(&cfg).unwrap();
    for o in &res.outcomes {
        energy.record(o.energy_drift, o.n_collisions);
    }
    let mut csv = Vec::new();
    write_galton_csv(&mut csv, cfg.seed, &res.outcomes).unwrap();
    let portrait = sample_phase_portrait(&PhasePortraitConfig {
        table: TableSpec::SinaiCell {
            cell: CellShape::Square { side: 2.0 },
            scatterer_radius: 0.4,
            periodic: false,
        },
        gamma: FRAC_1_SQRT_2,
        force: ForceField::downward(0.5).unwrap(),
        n_orbits: 20,
        collisions_per_orbit: 500,
        seed: SEED,
        sampling: PhaseSampling::UniformBoundary,
        speed: 1.0,
    })
    .unwrap();
    for o in &portrait.orbits {
        energy.record(o.energy_drift, o.collisions);
    }
    let mut ndjson = Vec::new();
    write_phase_ndjson(&mut ndjson, &portrait.points).unwrap();
    (csv, ndjson)
}

fn criterion_11(energy: &mut EnergyLedger) -> Verdict {
    let start = Instant::now();
    let (csv_a, nd_a) = outputs(energy);
    let (csv_b, nd_b) = outputs(energy);
    verdict(
        !csv_a.is_empty() && !nd_a.is_empty() && csv_a == csv_b && nd_a == nd_b,
        format!(
            "CSV {} bytes, NDJSON {} bytes identical across runs; {:.2}s",
            csv_a.len(),
            nd_a.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let mut energy = EnergyLedger::default();
    let mut results: Vec<(u32, Verdict)> = vec![
        (1, criterion_1()),
        (2, criterion_2(&mut energy)),
        (3, criterion_3(&mut energy)),
    ];
    let (v4, no_force) = criterion_4();
    results.push((4, v4));
    results.push((5, criterion_5(&no_force)));
    results.push((6, criterion_6()));
    results.push((7, criterion_7(&mut energy)));
    results.push((8, criterion_8(&mut energy)));
    results.push((9, criterion_9()));
    let v11 = criterion_11(&mut energy);
    results.push((10, criterion_10(&energy)));
    results.push((11, v11));

    let mut failed = 0;
    for (k, v) in &results {
        println!(
            "criterion {k:>2}: {} {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
