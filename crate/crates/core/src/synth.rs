//! Rule-based synthetic waterway traffic.
//!
//! Vessels move in the fairway frame along an S-shaped channel. Upstream
//! vessels keep to a preferred lane and step toward the right border while a
//! downstream vessel approaches, returning after it has passed. Scenarios are
//! separated in time so they never interact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::navframe::{FairwayGeometry, NavError, NavFrameState, Vec2};
use crate::pipeline::{Direction, EventKind, RawFix, SequenceSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    /// Arclength (m).
    pub length: f64,
    /// Signed curvature (1/m), positive turning left.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub segments: Vec<SegmentSpec>,
    pub fairway_width: f64,
    pub vertex_spacing: f64,
    pub km_origin: f64,
    /// Inclusive vessel-count ranges per scenario.
    pub upstream_count: (usize, usize),
    pub downstream_count: (usize, usize),
    /// Preferred speed ranges (m/s).
    pub upstream_speed: (f64, f64),
    pub downstream_speed: (f64, f64),
    /// Preferred lane ranges as distance from the right border (m).
    pub upstream_lane: (f64, f64),
    pub downstream_lane: (f64, f64),
    /// A downstream vessel this close ahead (m) triggers a sidestep.
    pub trigger_distance: f64,
    /// The sidestep holds until the vessel is this far behind (m).
    pub pass_clearance: f64,
    pub sidestep_offset: f64,
    /// Lateral speeds (m/s) of the sidestep and of the return.
    pub sidestep_rate: f64,
    pub return_rate: f64,
    /// Stationary standard deviation (m/s) and correlation time (s) of speed noise.
    pub speed_noise: f64,
    pub speed_correlation: f64,
    /// Stationary standard deviation (m) of lateral noise.
    pub lateral_noise: f64,
    pub sim_dt: f64,
    pub emit_dt: f64,
    pub scenario_duration: f64,
    pub scenario_gap: f64,
    /// Spawn-time windows (s from scenario start).
    pub upstream_spawn: (f64, f64),
    pub downstream_spawn: (f64, f64),
    /// Distance kept from either end of the channel (m).
    pub end_margin: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            segments: vec![
                SegmentSpec { length: 2000.0, curvature: 0.0 },
                SegmentSpec { length: 3000.0, curvature: 1.0 / 2500.0 },
                SegmentSpec { length: 1500.0, curvature: 0.0 },
                SegmentSpec { length: 3000.0, curvature: -1.0 / 2500.0 },
                SegmentSpec { length: 2500.0, curvature: 0.0 },
            ],
            fairway_width: 150.0,
            vertex_spacing: 20.0,
            km_origin: 0.0,
            upstream_count: (2, 3),
            downstream_count: (3, 4),
            upstream_speed: (2.2, 3.2),
            downstream_speed: (3.5, 5.0),
            upstream_lane: (50.0, 60.0),
            downstream_lane: (80.0, 90.0),
            trigger_distance: 600.0,
            pass_clearance: 100.0,
            sidestep_offset: 20.0,
            sidestep_rate: 0.33,
            return_rate: 0.05,
            speed_noise: 0.03,
            speed_correlation: 600.0,
            lateral_noise: 0.0,
            sim_dt: 10.0,
            emit_dt: 30.0,
            scenario_duration: 5400.0,
            scenario_gap: 7200.0,
            upstream_spawn: (0.0, 900.0),
            downstream_spawn: (0.0, 4000.0),
            end_margin: 100.0,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.segments.is_empty() || self.segments.iter().any(|s| !(s.length > 0.0)) {
            return Err("segments need positive lengths".into());
        }
        let positive = [
            self.fairway_width,
            self.vertex_spacing,
            self.trigger_distance,
            self.sidestep_rate,
            self.return_rate,
            self.sim_dt,
            self.emit_dt,
            self.scenario_duration,
            self.speed_correlation,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err("widths, rates, distances and time steps must be positive".into());
        }
        if self.speed_noise < 0.0 || self.lateral_noise < 0.0 || self.sidestep_offset < 0.0 {
            return Err("noise scales and offsets must be non-negative".into());
        }
        if self.upstream_count.0 > self.upstream_count.1 || self.downstream_count.0 > self.downstream_count.1 {
            return Err("count ranges must be ordered".into());
        }
        if (self.emit_dt / self.sim_dt).fract().abs() > 1e-9 {
            return Err("emit_dt must be a multiple of sim_dt".into());
        }
        Ok(())
    }

    pub fn scenario_period(&self) -> f64 {
        self.scenario_duration + self.scenario_gap
    }
}

/// Centerline built from constant-curvature pieces, with borders offset
/// `width / 2` along the vertex normals.
pub fn build_geometry(
    segments: &[SegmentSpec],
    width: f64,
    spacing: f64,
    km_origin: f64,
) -> Result<FairwayGeometry, NavError> {
    let mut p = Vec2::new(0.0, 0.0);
    let mut h: f64 = 0.0;
    let mut pts = vec![p];
    for seg in segments {
        let pieces = (seg.length / spacing).ceil().max(1.0) as usize;
        let step = seg.length / pieces as f64;
        for _ in 0..pieces {
            let mid = h + seg.curvature * step / 2.0;
            p = p + Vec2::from_angle(mid) * step;
            h += seg.curvature * step;
            pts.push(p);
        }
    }
    let n = pts.len();
    let seg_normal = |i: usize| (pts[i + 1] - pts[i]).normalized().perp();
    let normals: Vec<Vec2> = (0..n)
        .map(|i| match i {
            0 => seg_normal(0),
            _ if i == n - 1 => seg_normal(n - 2),
            _ => (seg_normal(i - 1) + seg_normal(i)).normalized(),
        })
        .collect();
    let half = width / 2.0;
    let extend = |v: &mut Vec<Vec2>| {
        let t0 = (v[1] - v[0]).normalized();
        let t1 = (v[v.len() - 1] - v[v.len() - 2]).normalized();
        let first = v[0] - t0 * 50.0;
        let last = v[v.len() - 1] + t1 * 50.0;
        v.insert(0, first);
        v.push(last);
    };
    let mut right: Vec<Vec2> = pts.iter().zip(&normals).map(|(p, n)| *p - *n * half).collect();
    let mut left: Vec<Vec2> = pts.iter().zip(&normals).map(|(p, n)| *p + *n * half).collect();
    extend(&mut right);
    extend(&mut left);
    FairwayGeometry::new(pts, right, left, km_origin, 1e-3)
}

/// Generator-side record of a sign change of the longitudinal offset between
/// an upstream vessel and another vessel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub target: String,
    pub other: String,
    pub kind: EventKind,
    /// First simulation time (s) at which the offset has changed sign.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidestepOnset {
    pub agent: String,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub geometry: FairwayGeometry,
    pub fixes: Vec<RawFix>,
    pub events: Vec<GroundTruthEvent>,
    pub onsets: Vec<SidestepOnset>,
}

#[derive(Debug, Clone)]
struct Vessel {
    id: String,
    dir: Direction,
    spawn: f64,
    s: f64,
    f: f64,
    lane: f64,
    pref_speed: f64,
    speed_dev: f64,
    lat_dev: f64,
    alive: bool,
    done: bool,
    sidestepping: bool,
}

impl Vessel {
    fn speed(&self) -> f64 {
        (self.pref_speed + self.speed_dev).max(0.0)
    }
}

/// Explicit vessel placement for hand-built scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselSpec {
    pub dir: Direction,
    pub spawn: f64,
    /// Starting arclength (m); `None` uses the channel end for the direction.
    pub start_s: Option<f64>,
    pub lane: f64,
    pub speed: f64,
}

fn draw_vessels(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<VesselSpec> {
    let mut out = vec![];
    let nu = rng.gen_range(cfg.upstream_count.0..=cfg.upstream_count.1);
    let nd = rng.gen_range(cfg.downstream_count.0..=cfg.downstream_count.1);
    let range = |rng: &mut ChaCha8Rng, r: (f64, f64)| if r.1 > r.0 { rng.gen_range(r.0..r.1) } else { r.0 };
    for _ in 0..nu {
        out.push(VesselSpec {
            dir: Direction::Upstream,
            spawn: range(rng, cfg.upstream_spawn),
            start_s: None,
            lane: range(rng, cfg.upstream_lane),
            speed: range(rng, cfg.upstream_speed),
        });
    }
    for _ in 0..nd {
        out.push(VesselSpec {
            dir: Direction::Downstream,
            spawn: range(rng, cfg.downstream_spawn),
            start_s: None,
            lane: range(rng, cfg.downstream_lane),
            speed: range(rng, cfg.downstream_speed),
        });
    }
    out
}

struct ScenarioOutput {
    fixes: Vec<RawFix>,
    events: Vec<GroundTruthEvent>,
    onsets: Vec<SidestepOnset>,
}

/// Simulates one scenario. Times are offset by `t0`; agent ids are prefixed.
fn simulate(
    cfg: &ScenarioConfig,
    g: &FairwayGeometry,
    specs: &[VesselSpec],
    prefix: &str,
    t0: f64,
    rng: &mut ChaCha8Rng,
) -> ScenarioOutput {
    let len = g.length();
    let (s_min, s_max) = (cfg.end_margin, len - cfg.end_margin);
    let mut up_n = 0;
    let mut down_n = 0;
    let mut vessels: Vec<Vessel> = specs
        .iter()
        .map(|sp| {
            let id = match sp.dir {
                Direction::Upstream => {
                    up_n += 1;
                    format!("{prefix}-u{}", up_n - 1)
                }
                Direction::Downstream => {
                    down_n += 1;
                    format!("{prefix}-d{}", down_n - 1)
                }
            };
            let start = sp.start_s.unwrap_or(match sp.dir {
                Direction::Upstream => s_min,
                Direction::Downstream => s_max,
            });
            Vessel {
                id,
                dir: sp.dir,
                spawn: sp.spawn,
                s: start,
                f: sp.lane,
                lane: sp.lane,
                pref_speed: sp.speed,
                speed_dev: 0.0,
                lat_dev: 0.0,
                alive: false,
                done: false,
                sidestepping: false,
            }
        })
        .collect();
    let mut out = ScenarioOutput { fixes: vec![], events: vec![], onsets: vec![] };
    let steps = (cfg.scenario_duration / cfg.sim_dt).round() as usize;
    let emit_every = (cfg.emit_dt / cfg.sim_dt).round() as usize;
    let decay = (-cfg.sim_dt / cfg.speed_correlation).exp();
    let kick = (1.0 - decay * decay).sqrt();
    let mut prev_offsets: Vec<Vec<Option<f64>>> = vec![vec![None; vessels.len()]; vessels.len()];
    let map = |s: f64, f: f64| g.from_nav_frame(NavFrameState { km: g.km_at(s), f });
    for step in 0..=steps {
        let t = step as f64 * cfg.sim_dt;
        for v in &mut vessels {
            if !v.alive && !v.done && t >= v.spawn {
                v.alive = true;
            }
        }
        // Ground-truth sign changes, recorded for upstream observers.
        for i in 0..vessels.len() {
            for j in 0..vessels.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&vessels[i], &vessels[j]);
                let cur = (a.alive && b.alive && a.dir == Direction::Upstream).then_some(b.s - a.s);
                if let (Some(prev), Some(cur)) = (prev_offsets[i][j], cur) {
                    if (prev > 0.0 && cur <= 0.0) || (prev < 0.0 && cur >= 0.0) {
                        out.events.push(GroundTruthEvent {
                            target: a.id.clone(),
                            other: b.id.clone(),
                            kind: if b.dir == a.dir { EventKind::Overtaking } else { EventKind::Encounter },
                            t: t0 + t,
                        });
                    }
                }
                prev_offsets[i][j] = cur;
            }
        }
        if step % emit_every == 0 {
            for v in vessels.iter().filter(|v| v.alive) {
                let (Ok(p), Ok(pa), Ok(pb)) = (
                    map(v.s, v.f),
                    map(v.s - 0.5 * v.dir.km_sign() * v.speed(), v.f),
                    map(v.s + 0.5 * v.dir.km_sign() * v.speed(), v.f),
                ) else {
                    continue;
                };
                let lateral_rate = if v.sidestepping && v.f > v.lane - cfg.sidestep_offset {
                    -cfg.sidestep_rate
                } else if !v.sidestepping && v.f < v.lane {
                    cfg.return_rate
                } else {
                    0.0
                };
                let n = g.tangent_at(v.s.clamp(0.0, len)).perp();
                let vel = (pb - pa) + n * lateral_rate;
                out.fixes.push(RawFix {
                    agent_id: v.id.clone(),
                    t: t0 + t,
                    x: p.x,
                    y: p.y,
                    vx: Some(vel.x),
                    vy: Some(vel.y),
                    heading: None,
                    direction: v.dir,
                });
            }
        }
        // Lateral rule for upstream vessels.
        let downs: Vec<f64> = vessels
            .iter()
            .filter(|v| v.alive && v.dir == Direction::Downstream)
            .map(|v| v.s)
            .collect();
        for v in vessels.iter_mut().filter(|v| v.alive && v.dir == Direction::Upstream) {
            let threat = downs
                .iter()
                .any(|&s| s - v.s <= cfg.trigger_distance && s - v.s > -cfg.pass_clearance);
            if threat && !v.sidestepping {
                out.onsets.push(SidestepOnset { agent: v.id.clone(), t: t0 + t });
            }
            v.sidestepping = threat;
            let goal = if threat { v.lane - cfg.sidestep_offset } else { v.lane };
            let base = v.f - v.lat_dev;
            let next = if base > goal {
                (base - cfg.sidestep_rate * cfg.sim_dt).max(goal)
            } else {
                (base + cfg.return_rate * cfg.sim_dt).min(goal)
            };
            if cfg.lateral_noise > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v.lat_dev = v.lat_dev * decay + cfg.lateral_noise * kick * z;
            }
            v.f = next + v.lat_dev;
        }
        for v in vessels.iter_mut().filter(|v| v.alive) {
            if cfg.speed_noise > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                v.speed_dev = v.speed_dev * decay + cfg.speed_noise * kick * z;
            }
            v.s += v.dir.km_sign() * v.speed() * cfg.sim_dt;
            if v.s < s_min || v.s > s_max {
                v.alive = false;
                v.done = true;
            }
        }
    }
    out
}

/// Generates `count` independent scenarios.
pub fn generate(cfg: &ScenarioConfig, count: usize) -> Result<Synthetic, NavError> {
    cfg.validate().map_err(NavError::InvalidGeometry)?;
    let geometry = build_geometry(&cfg.segments, cfg.fairway_width, cfg.vertex_spacing, cfg.km_origin)?;
    let outs: Vec<ScenarioOutput> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let specs = draw_vessels(cfg, &mut rng);
            simulate(cfg, &geometry, &specs, &format!("s{i:05}"), i as f64 * cfg.scenario_period(), &mut rng)
        })
        .collect();
    let mut syn = Synthetic {
        geometry,
        fixes: vec![],
        events: vec![],
        onsets: vec![],
    };
    for o in outs {
        syn.fixes.extend(o.fixes);
        syn.events.extend(o.events);
        syn.onsets.extend(o.onsets);
    }
    Ok(syn)
}

/// Runs a single hand-specified scenario (no spawn randomness).
pub fn generate_explicit(cfg: &ScenarioConfig, specs: &[VesselSpec]) -> Result<Synthetic, NavError> {
    cfg.validate().map_err(NavError::InvalidGeometry)?;
    let geometry = build_geometry(&cfg.segments, cfg.fairway_width, cfg.vertex_spacing, cfg.km_origin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let o = simulate(cfg, &geometry, specs, "x", 0.0, &mut rng);
    Ok(Synthetic {
        geometry,
        fixes: o.fixes,
        events: o.events,
        onsets: o.onsets,
    })
}

/// Ground-truth interactions of each sample: events of its target whose
/// grid step falls inside the prediction horizon.
pub fn label_interactions(events: &[GroundTruthEvent], samples: &[SequenceSample]) -> Vec<Vec<GroundTruthEvent>> {
    samples
        .iter()
        .map(|s| {
            let lo = s.k_start + s.t_obs as i64;
            let hi = s.k_start + (s.t_obs + s.horizon) as i64;
            events
                .iter()
                .filter(|e| e.target == s.agent_id)
                .filter(|e| {
                    let k = (e.t / s.dt - 1e-9).ceil() as i64;
                    k > lo && k <= hi
                })
                .cloned()
                .collect()
        })
        .collect()
}
