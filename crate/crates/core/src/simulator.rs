//! Synthetic pedestrian flows along directed corridor polylines.
//!
//! Each agent walks a corridor chosen by weight, holding a lateral offset for
//! the whole traversal, and picks a new corridor at the end. Speed is drawn
//! from the corridor's distribution at every step. The
//! generator is a pure function of the scenario and its seed.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::MAX_BINS;
use crate::scene_graph::Bounds2;
use crate::swgmm::normal_cdf;
use crate::types::{wrap_unchecked, CylindricalSample, Position3};

pub const DETECTIONS_HEADER: &str = "# flowdyn-detections v1";
pub const DETECTIONS_COLUMNS: &str = "time,agent_id,x,y,z,theta,rho";

/// A directed path with its lateral spread and speed distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corridor {
    pub points: Vec<[f64; 2]>,
    /// Lateral offset standard deviation, meters.
    pub lateral_sigma: f64,
    pub speed_mean: f64,
    pub speed_sigma: f64,
    /// Relative probability of being chosen for a traversal.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowScenario {
    pub bounds: Bounds2,
    pub corridors: Vec<Corridor>,
    pub agents: usize,
    /// Heading noise standard deviation, radians.
    pub heading_noise: f64,
    /// Detections per agent per second.
    pub detection_rate: f64,
    /// Seconds.
    pub duration: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub time: f64,
    pub agent_id: u32,
    pub position: Position3,
    pub theta: f64,
    pub rho: f64,
}

impl Detection {
    pub fn sample(&self) -> CylindricalSample {
        CylindricalSample {
            theta: self.theta,
            rho: self.rho,
            timestamp: self.time,
        }
    }
}

/// Arc-length parametrized polyline.
struct Path2 {
    pts: Vec<[f64; 2]>,
    /// Cumulative length at each vertex.
    cum: Vec<f64>,
}

impl Path2 {
    fn new(pts: &[[f64; 2]]) -> Self {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cum.push(cum.last().unwrap() + l);
        }
        Self { pts: pts.to_vec(), cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= s);
        i.clamp(1, self.pts.len() - 1) - 1
    }

    /// Point and unit tangent at arc length `s`.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let i = self.segment_at(s);
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        let l = self.cum[i + 1] - self.cum[i];
        let t = [(b[0] - a[0]) / l, (b[1] - a[1]) / l];
        let u = s - self.cum[i];
        ([a[0] + u * t[0], a[1] + u * t[1]], t)
    }

    /// Distance from `(x, y)` to the polyline and the tangent angle of the
    /// closest segment. Ties go to the earlier segment.
    fn nearest(&self, x: f64, y: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for w in self.pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let l2 = dx * dx + dy * dy;
            let u = (((x - a[0]) * dx + (y - a[1]) * dy) / l2).clamp(0.0, 1.0);
            let d = (x - a[0] - u * dx).hypot(y - a[1] - u * dy);
            if d < best.0 {
                best = (d, dy.atan2(dx));
            }
        }
        best
    }
}

impl FlowScenario {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.corridors.is_empty() {
            return Err(Error::invalid("scenario has no corridors"));
        }
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("heading_noise", self.heading_noise)?;
        nonneg("duration", self.duration)?;
        if !(self.detection_rate > 0.0) || !self.detection_rate.is_finite() {
            return Err(Error::invalid("detection_rate must be > 0"));
        }
        if self.agents == 0 {
            return Err(Error::invalid("scenario needs at least one agent"));
        }
        for (i, c) in self.corridors.iter().enumerate() {
            if c.points.len() < 2 {
                return Err(Error::invalid(format!("corridor {i} needs >= 2 points")));
            }
            for p in &c.points {
                if !self.bounds.contains(p[0], p[1]) {
                    return Err(Error::invalid(format!(
                        "corridor {i} point {p:?} lies outside the bounds"
                    )));
                }
            }
            if c.points.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("corridor {i} has a zero-length segment")));
            }
            nonneg("lateral_sigma", c.lateral_sigma)?;
            nonneg("speed_sigma", c.speed_sigma)?;
            if !(c.speed_mean > 0.0) || !c.speed_mean.is_finite() {
                return Err(Error::invalid(format!("corridor {i} speed_mean must be > 0")));
            }
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(Error::invalid(format!("corridor {i} weight must be > 0")));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always representable")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..self.clone()
        }
    }

    /// Crossing and counter-flowing corridors over an 18 m × 10 m floor.
    pub fn multimodal() -> Self {
        let c = |pts: &[[f64; 2]], speed: f64, weight: f64| Corridor {
            points: pts.to_vec(),
            lateral_sigma: 0.35,
            speed_mean: speed,
            speed_sigma: 0.15,
            weight,
        };
        Self {
            bounds: Bounds2 {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 18.0,
                max_y: 10.0,
            },
            corridors: vec![
                // main hall, both ways
                c(&[[1.0, 5.0], [17.0, 5.0]], 1.2, 1.0),
                c(&[[17.0, 5.0], [1.0, 5.0]], 1.1, 1.0),
                // cross aisle, both ways
                c(&[[9.0, 1.0], [9.0, 9.0]], 1.0, 0.6),
                c(&[[9.0, 9.0], [9.0, 1.0]], 1.0, 0.6),
                // diagonal shortcut joining the hall
                c(&[[2.0, 1.5], [9.0, 5.0], [16.0, 8.5]], 1.3, 0.5),
                c(&[[16.0, 1.5], [9.0, 5.0], [2.0, 8.5]], 1.3, 0.5),
            ],
            agents: 7,
            heading_noise: 0.15,
            detection_rate: 2.0,
            duration: 2300.0,
            rng_seed: 0,
        }
    }

    /// One-way parallel lanes; every location sees a single flow direction.
    pub fn unimodal() -> Self {
        let c = |y: f64, speed: f64| Corridor {
            points: vec![[1.0, y], [17.0, y]],
            lateral_sigma: 0.3,
            speed_mean: speed,
            speed_sigma: 0.1,
            weight: 1.0,
        };
        Self {
            bounds: Bounds2 {
                min_x: 0.0,
                min_y: 0.0,
                max_x: 18.0,
                max_y: 10.0,
            },
            corridors: vec![c(2.5, 1.0), c(5.0, 1.2), c(7.5, 1.4)],
            agents: 7,
            heading_noise: 0.15,
            detection_rate: 2.0,
            duration: 2300.0,
            rng_seed: 0,
        }
    }
}

struct Traversal {
    corridor: usize,
    s: f64,
    offset: f64,
}

fn positive_speed<R: Rng + ?Sized>(c: &Corridor, rng: &mut R) -> f64 {
    if c.speed_sigma == 0.0 {
        return c.speed_mean;
    }
    let n = Normal::new(c.speed_mean, c.speed_sigma).expect("validated sigma");
    for _ in 0..64 {
        let v = n.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
    c.speed_mean
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    }
}

/// Time-ordered detections; agents are emitted in id order within a step.
pub fn generate(scenario: &FlowScenario) -> Result<Vec<Detection>> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let paths: Vec<Path2> = scenario.corridors.iter().map(|c| Path2::new(&c.points)).collect();
    let pick = WeightedIndex::new(scenario.corridors.iter().map(|c| c.weight))
        .map_err(|e| Error::invalid(format!("corridor weights: {e}")))?;

    let start = |rng: &mut ChaCha8Rng, anywhere: bool| {
        let corridor = pick.sample(rng);
        let c = &scenario.corridors[corridor];
        let s = if anywhere {
            rng.random_range(0.0..paths[corridor].length())
        } else {
            0.0
        };
        Traversal {
            corridor,
            s,
            offset: gaussian(c.lateral_sigma, rng),
        }
    };
    let mut agents: Vec<Traversal> = (0..scenario.agents).map(|_| start(&mut rng, true)).collect();

    let dt = 1.0 / scenario.detection_rate;
    let steps = (scenario.duration * scenario.detection_rate).ceil() as u64;
    let mut out = Vec::with_capacity(steps as usize * scenario.agents);
    for k in 0..steps {
        let time = k as f64 * dt;
        if time >= scenario.duration {
            break;
        }
        for (id, a) in agents.iter_mut().enumerate() {
            let path = &paths[a.corridor];
            let (p, t) = path.at(a.s);
            let (x, y) = (p[0] - a.offset * t[1], p[1] + a.offset * t[0]);
            let heading = t[1].atan2(t[0]) + gaussian(scenario.heading_noise, &mut rng);
            let speed = positive_speed(&scenario.corridors[a.corridor], &mut rng);
            out.push(Detection {
                time,
                agent_id: id as u32,
                position: Position3 { x, y, z: 0.0 },
                theta: wrap_unchecked(heading),
                rho: speed,
            });
            a.s += speed * dt;
            if a.s >= path.length() {
                *a = start(&mut rng, false);
            }
        }
    }
    Ok(out)
}

/// Wrapped-normal mass of `[lo, hi)` around `mu`; a point mass when `sigma == 0`.
fn wrapped_interval_mass(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        let m = wrap_unchecked(mu);
        return if m >= lo && m < hi { 1.0 } else { 0.0 };
    }
    (-4..=4)
        .map(|w| {
            let c = mu + TAU * w as f64;
            normal_cdf((hi - c) / sigma) - normal_cdf((lo - c) / sigma)
        })
        .sum()
}

/// Analytic per-bin direction distribution at `p`.
///
/// Each corridor within three lateral σ contributes a wrapped normal around its
/// local tangent, weighted by how often agents are expected at `p`: choice
/// weight times lateral density over mean speed. Uniform when nothing is near.
pub fn ground_truth_marginal(scenario: &FlowScenario, p: &Position3, bins: usize) -> Result<Vec<f64>> {
    scenario.validate()?;
    if bins == 0 || bins > MAX_BINS {
        return Err(Error::invalid(format!("bins must be in 1..={MAX_BINS}")));
    }
    if !scenario.bounds.contains(p.x, p.y) {
        return Err(Error::invalid(format!("point ({}, {}) outside the bounds", p.x, p.y)));
    }
    let total_w: f64 = scenario.corridors.iter().map(|c| c.weight).sum();
    let mut terms = Vec::new();
    for c in &scenario.corridors {
        let (d, tangent) = Path2::new(&c.points).nearest(p.x, p.y);
        let w = if c.lateral_sigma == 0.0 {
            if d > 1e-9 {
                continue;
            }
            c.weight / total_w / c.speed_mean
        } else {
            let z = d / c.lateral_sigma;
            if z > 3.0 {
                continue;
            }
            c.weight / total_w * (-0.5 * z * z).exp() / c.lateral_sigma / c.speed_mean
        };
        terms.push((w, tangent));
    }
    let width = TAU / bins as f64;
    let norm: f64 = terms.iter().map(|t| t.0).sum();
    if terms.is_empty() || !(norm > 0.0) {
        return Ok(vec![1.0 / bins as f64; bins]);
    }
    Ok((0..bins)
        .map(|b| {
            let lo = -PI + width * b as f64;
            let hi = if b + 1 == bins { PI } else { lo + width };
            terms
                .iter()
                .map(|&(w, mu)| w / norm * wrapped_interval_mass(lo, hi, mu, scenario.heading_noise))
                .sum()
        })
        .collect())
}

pub fn write_detections<W: Write>(mut w: W, dets: &[Detection]) -> std::io::Result<()> {
    writeln!(w, "{DETECTIONS_HEADER}")?;
    writeln!(w, "{DETECTIONS_COLUMNS}")?;
    for d in dets {
        writeln!(
            w,
            "{:.9},{},{:.9},{:.9},{:.9},{:.9},{:.9}",
            d.time, d.agent_id, d.position.x, d.position.y, d.position.z, d.theta, d.rho
        )?;
    }
    w.flush()
}

pub fn save_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections(std::io::BufWriter::new(f), dets).map_err(|e| Error::io(path, e))
}

fn parse_row(line: &str) -> std::result::Result<Detection, String> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, got {}", f.len()));
    }
    let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = f[i].parse().map_err(|e| format!("bad {name}: {e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite {name}"))
        }
    };
    let agent_id = f[1].parse().map_err(|e| format!("bad agent_id: {e}"))?;
    let theta = num(5, "theta")?;
    if !(-PI..PI).contains(&theta) {
        return Err(format!("theta {theta} outside [-pi, pi)"));
    }
    let rho = num(6, "rho")?;
    if rho < 0.0 {
        return Err(format!("negative rho {rho}"));
    }
    Ok(Detection {
        time: num(0, "time")?,
        agent_id,
        position: Position3 {
            x: num(2, "x")?,
            y: num(3, "y")?,
            z: num(4, "z")?,
        },
        theta,
        rho,
    })
}

/// Reads a detection file written by [`write_detections`]. Rows must be time-ordered.
pub fn read_detections<R: BufRead>(r: R, path: &Path) -> Result<Vec<Detection>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out: Vec<Detection> = Vec::new();
    let mut saw_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let n = i + 1;
        saw_header = true;
        match n {
            1 if line.trim() != DETECTIONS_HEADER => {
                return Err(err(n, format!("expected header {DETECTIONS_HEADER:?}")))
            }
            2 if line.trim() != DETECTIONS_COLUMNS => {
                return Err(err(n, format!("expected columns {DETECTIONS_COLUMNS:?}")))
            }
            1 | 2 => continue,
            _ => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let d = parse_row(&line).map_err(|m| err(n, m))?;
        if out.last().is_some_and(|p| d.time < p.time) {
            return Err(err(n, "rows are not time-ordered".into()));
        }
        out.push(d);
    }
    if !saw_header {
        return Err(err(1, "empty file, missing header".into()));
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{bin_of, DirHistogram};

    fn straight_east(heading_noise: f64) -> FlowScenario {
        FlowScenario {
            bounds: Bounds2::new(0.0, 0.0, 18.0, 10.0).unwrap(),
            corridors: vec![Corridor {
                points: vec![[1.0, 5.0], [17.0, 5.0]],
                lateral_sigma: 0.3,
                speed_mean: 1.2,
                speed_sigma: 0.0,
                weight: 1.0,
            }],
            agents: 3,
            heading_noise,
            detection_rate: 2.0,
            duration: 60.0,
            rng_seed: 9,
        }
    }

    #[test]
    fn noise_free_corridor() {
        let d = generate(&straight_east(0.0)).unwrap();
        assert_eq!(d.len(), 3 * 120);
        assert!(d.iter().all(|d| d.theta == 0.0 && d.rho == 1.2));
        assert!(d.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn seeded_determinism() {
        let sc = FlowScenario::multimodal();
        let a = generate(&sc).unwrap();
        let b = generate(&sc).unwrap();
        assert_eq!(a, b);
        let c = generate(&sc.with_seed(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn antiparallel_corridors_are_bimodal() {
        let mut sc = straight_east(0.1);
        let mut back = sc.corridors[0].clone();
        back.points.reverse();
        sc.corridors.push(back);
        sc.duration = 600.0;
        let dets = generate(&sc).unwrap();
        let mut h = DirHistogram::new(8).unwrap();
        for d in dets.iter().filter(|d| (d.position.x - 9.0).abs() < 2.0) {
            h.observe(d.theta);
        }
        let c = h.counts();
        let total = h.total() as f64;
        // bin edges sit at 0 and ±π, so each mode straddles two bins
        assert!((c[3] + c[4]) as f64 / total > 0.3, "{c:?}");
        assert!((c[0] + c[7]) as f64 / total > 0.3, "{c:?}");
        assert!(((c[1] + c[2] + c[5] + c[6]) as f64) / total < 0.05);
    }

    #[test]
    fn ground_truth_examples() {
        let p = Position3 { x: 9.0, y: 5.0, z: 0.0 };
        let mut sc = straight_east(0.0);
        let g = ground_truth_marginal(&sc, &p, 8).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        let far = Position3 { x: 9.0, y: 9.5, z: 0.0 };
        assert_eq!(ground_truth_marginal(&sc, &far, 8).unwrap(), vec![0.125; 8]);

        let mut back = sc.corridors[0].clone();
        back.points = vec![[17.0, 6.0], [1.0, 6.0]];
        sc.corridors[0].points = vec![[1.0, 4.0], [17.0, 4.0]];
        sc.corridors[0].lateral_sigma = 1.0;
        back.lateral_sigma = 1.0;
        sc.corridors.push(back);
        let g = ground_truth_marginal(&sc, &p, 8).unwrap();
        assert!((g[4] - 0.5).abs() < 1e-12 && (g[0] - 0.5).abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn empirical_frequencies_converge_to_ground_truth() {
        let mut sc = FlowScenario::multimodal();
        sc.duration = 20000.0;
        let dets = generate(&sc).unwrap();
        // a dense 0.5 m cell on the main hall, away from the crossing
        let (x0, y0) = (4.0, 4.75);
        let mut h = DirHistogram::new(8).unwrap();
        for d in &dets {
            if (x0..x0 + 0.5).contains(&d.position.x) && (y0..y0 + 0.5).contains(&d.position.y) {
                h.observe(d.theta);
            }
        }
        assert!(h.total() >= 2000, "only {} samples", h.total());
        let g = ground_truth_marginal(
            &sc,
            &Position3 {
                x: x0 + 0.25,
                y: y0 + 0.25,
                z: 0.0,
            },
            8,
        )
        .unwrap();
        let tv: f64 = 0.5 * (0..8).map(|b| (h.bin_prob(b) - g[b]).abs()).sum::<f64>();
        assert!(tv < 0.05, "tv {tv} emp {:?} gt {g:?}", h.counts());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dets = generate(&straight_east(0.1)).unwrap();
        let mut buf = Vec::new();
        write_detections(&mut buf, &dets).unwrap();
        let back = read_detections(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.len(), dets.len());
        for (a, b) in dets.iter().zip(&back) {
            assert!((a.theta - b.theta).abs() < 1e-9);
            assert_eq!(bin_of(a.theta, 8), bin_of(b.theta, 8));
        }
        let bad = format!("{DETECTIONS_HEADER}\n{DETECTIONS_COLUMNS}\n0,0,1,2,0,0.5\n");
        match read_detections(bad.as_bytes(), Path::new("x.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_detections("nope\n".as_bytes(), Path::new("x")).is_err());
    }

    #[test]
    fn zero_duration_is_empty() {
        let mut sc = straight_east(0.1);
        sc.duration = 0.0;
        assert!(generate(&sc).unwrap().is_empty());
    }

    #[test]
    fn validation() {
        let mut sc = straight_east(0.1);
        sc.corridors.clear();
        assert!(matches!(generate(&sc), Err(Error::InvalidArgument(_))));
        let mut sc = straight_east(0.1);
        sc.corridors[0].points[1] = [30.0, 5.0];
        assert!(sc.validate().is_err());
        let text = FlowScenario::multimodal().to_toml_string();
        assert_eq!(FlowScenario::from_toml_str(&text).unwrap(), FlowScenario::multimodal());
        assert!(FlowScenario::from_toml_str(&format!("{text}\nbogus = 1\n")).is_err());
    }
}
