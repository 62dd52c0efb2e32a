//! Moving-glyph event streams used as a small stand-in for recorded DVS
//! datasets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Event, EventStream, Polarity};
use crate::error::{Error, Result};

/// Endpoints of a straight stroke.
type Segment = ((f64, f64), (f64, f64));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Glyph {
    X,
    T,
    L,
    O,
}

impl Glyph {
    pub const ALL: [Glyph; 4] = [Glyph::X, Glyph::T, Glyph::L, Glyph::O];

    pub fn from_class(class_id: usize) -> Option<Glyph> {
        Self::ALL.get(class_id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Glyph::X => "X",
            Glyph::T => "T",
            Glyph::L => "L",
            Glyph::O => "O",
        }
    }

    /// Straight strokes in unit glyph coordinates (`[-0.5, 0.5]^2`, y down).
    /// The ring glyph has no straight strokes.
    fn segments(self) -> &'static [Segment] {
        match self {
            Glyph::X => &[((-0.5, -0.5), (0.5, 0.5)), ((0.5, -0.5), (-0.5, 0.5))],
            Glyph::T => &[((-0.5, -0.5), (0.5, -0.5)), ((0.0, -0.5), (0.0, 0.5))],
            Glyph::L => &[((-0.5, -0.5), (-0.5, 0.5)), ((-0.5, 0.5), (0.5, 0.5))],
            Glyph::O => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub class_id: usize,
    pub seed: u64,
    pub width: u16,
    pub height: u16,
    pub duration: u32,
    /// Signal events per second.
    pub event_rate: f64,
    /// Uniform background events per second.
    pub noise_rate: f64,
}

/// Straight-line path of the glyph center, plus its side length in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub size: f64,
}

impl Trajectory {
    /// Glyph center at time `t` microseconds.
    pub fn center(&self, t: f64, duration: f64) -> (f64, f64) {
        let a = (t / duration).clamp(0.0, 1.0);
        (
            self.start.0 + a * (self.end.0 - self.start.0),
            self.start.1 + a * (self.end.1 - self.start.1),
        )
    }

    /// Pixels per microsecond.
    pub fn velocity(&self, duration: f64) -> (f64, f64) {
        (
            (self.end.0 - self.start.0) / duration,
            (self.end.1 - self.start.1) / duration,
        )
    }
}

impl SyntheticSpec {
    pub const CLASSES: usize = Glyph::ALL.len();
    pub const MIN_SIDE: u16 = 8;

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.class_id >= Self::CLASSES {
            problems.push(format!("class_id {} not below {}", self.class_id, Self::CLASSES));
        }
        if !(self.event_rate > 0.0 && self.event_rate.is_finite()) {
            problems.push(format!("event_rate must be positive, got {}", self.event_rate));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            problems.push(format!("noise_rate must be nonnegative, got {}", self.noise_rate));
        }
        if self.width < Self::MIN_SIDE || self.height < Self::MIN_SIDE {
            problems.push(format!("sensor sides must be at least {}", Self::MIN_SIDE));
        }
        if self.duration == 0 {
            problems.push("duration must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn glyph(&self) -> Glyph {
        Glyph::from_class(self.class_id).expect("validated class id")
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// The path is a function of the seed and geometry only, not of the class.
    /// The glyph sweeps across the sensor horizontally or vertically.
    pub fn trajectory(&self) -> Trajectory {
        let mut rng = self.rng();
        let side = self.width.min(self.height) as f64;
        let size = side * rng.gen_range(0.42..0.52);
        let half = size / 2.0;
        let lo_x = half + 1.0;
        let hi_x = self.width as f64 - 2.0 - half;
        let lo_y = half + 1.0;
        let hi_y = self.height as f64 - 2.0 - half;
        let horizontal = rng.gen_bool(0.5);
        let forward = rng.gen_bool(0.5);
        let (start, end) = if horizontal {
            let y0 = rng.gen_range(lo_y..=hi_y);
            let y1 = (y0 + rng.gen_range(-1.5..1.5)).clamp(lo_y, hi_y);
            ((lo_x, y0), (hi_x, y1))
        } else {
            let x0 = rng.gen_range(lo_x..=hi_x);
            let x1 = (x0 + rng.gen_range(-1.5..1.5)).clamp(lo_x, hi_x);
            ((x0, lo_y), (x1, hi_y))
        };
        let (start, end) = if forward { (start, end) } else { (end, start) };
        Trajectory { start, end, size }
    }

    pub fn expected_signal_events(&self) -> usize {
        (self.event_rate * self.duration as f64 * 1e-6).round() as usize
    }

    pub fn expected_noise_events(&self) -> usize {
        (self.noise_rate * self.duration as f64 * 1e-6).round() as usize
    }
}

/// Samples a stroke point uniformly by arc length. Returns the point in glyph
/// units and the unit stroke normal.
fn sample_stroke(glyph: Glyph, rng: &mut ChaCha8Rng) -> ((f64, f64), (f64, f64)) {
    if glyph == Glyph::O {
        let a = rng.gen_range(0.0..2.0 * PI);
        let (s, c) = a.sin_cos();
        return ((0.5 * c, 0.5 * s), (c, s));
    }
    let segs = glyph.segments();
    let lengths: Vec<f64> = segs
        .iter()
        .map(|((x0, y0), (x1, y1))| ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt())
        .collect();
    let total: f64 = lengths.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    let mut idx = 0;
    while idx + 1 < segs.len() && pick >= lengths[idx] {
        pick -= lengths[idx];
        idx += 1;
    }
    let ((x0, y0), (x1, y1)) = segs[idx];
    let a = rng.gen_range(0.0..1.0);
    let len = lengths[idx];
    let normal = (-(y1 - y0) / len, (x1 - x0) / len);
    ((x0 + a * (x1 - x0), y0 + a * (y1 - y0)), normal)
}

/// Generates one moving-glyph stream. Equal specs give identical streams.
///
/// Signal events sit on the glyph outline at its position at the event time,
/// offset half a pixel to the leading or trailing side of the stroke; the
/// leading side fires ON, the trailing side OFF. Strokes nearly parallel to
/// the motion get a random polarity.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<EventStream> {
    spec.validate()?;
    let glyph = spec.glyph();
    let traj = spec.trajectory();
    let duration = spec.duration as f64;
    let (vx, vy) = traj.velocity(duration);
    let speed = (vx * vx + vy * vy).sqrt();

    // Separate stream from the path RNG so the path does not depend on counts.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E37_79B9_7F4A_7C15);
    let n_signal = spec.expected_signal_events();
    let n_noise = spec.expected_noise_events();
    let w = spec.width as f64;
    let h = spec.height as f64;

    let mut events = Vec::with_capacity(n_signal + n_noise);
    for _ in 0..n_signal {
        let t = rng.gen_range(0..spec.duration);
        let (cx, cy) = traj.center(t as f64, duration);
        let ((gx, gy), (nx, ny)) = sample_stroke(glyph, &mut rng);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let px = cx + gx * traj.size + side * 0.5 * nx;
        let py = cy + gy * traj.size + side * 0.5 * ny;
        let along = if speed > 0.0 { (nx * vx + ny * vy) / speed } else { 0.0 };
        let polarity = if along.abs() < 0.2 {
            if rng.gen_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            }
        } else if side * along > 0.0 {
            Polarity::On
        } else {
            Polarity::Off
        };
        let x = px.round().clamp(0.0, w - 1.0) as u16;
        let y = py.round().clamp(0.0, h - 1.0) as u16;
        events.push(Event::new(t, x, y, polarity));
    }
    for _ in 0..n_noise {
        let t = rng.gen_range(0..spec.duration);
        let x = rng.gen_range(0..spec.width);
        let y = rng.gen_range(0..spec.height);
        let polarity = if rng.gen_bool(0.5) {
            Polarity::On
        } else {
            Polarity::Off
        };
        events.push(Event::new(t, x, y, polarity));
    }
    EventStream::from_unsorted(spec.width, spec.height, spec.duration, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(class_id: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            class_id,
            seed,
            width: 32,
            height: 32,
            duration: 1_000_000,
            event_rate: 10_000.0,
            noise_rate: 0.0,
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic(&spec(1, 42)).unwrap();
        let b = gen_synthetic(&spec(1, 42)).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(&spec(1, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn event_count_near_rate() {
        for class_id in 0..4 {
            let s = gen_synthetic(&spec(class_id, 5)).unwrap();
            assert!((8_000..=12_000).contains(&s.len()), "{}", s.len());
        }
    }

    #[test]
    fn noise_adds_events() {
        let mut sp = spec(0, 5);
        sp.noise_rate = 1_000.0;
        assert_eq!(gen_synthetic(&sp).unwrap().len(), 11_000);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut sp = spec(4, 0);
        assert!(gen_synthetic(&sp).is_err());
        sp.class_id = 0;
        sp.event_rate = 0.0;
        assert!(gen_synthetic(&sp).is_err());
    }

    #[test]
    fn glyph_traverses_the_field() {
        let sp = spec(0, 11);
        let tr = sp.trajectory();
        let dist = ((tr.end.0 - tr.start.0).powi(2) + (tr.end.1 - tr.start.1).powi(2)).sqrt();
        assert!(dist > 10.0, "{dist}");
        let half = tr.size / 2.0;
        for &(x, y) in &[tr.start, tr.end] {
            assert!(x - half >= 0.0 && x + half <= 31.0);
            assert!(y - half >= 0.0 && y + half <= 31.0);
        }
    }
    // Ring events stay within a pixel of the analytic circle at their
    // timestamp and cover every angular sector.
    #[test]
    fn ring_matches_analytic_circle() {
        let sp = spec(3, 21);
        let tr = sp.trajectory();
        let s = gen_synthetic(&sp).unwrap();
        let mut sectors = [0usize; 8];
        for e in s.events() {
            let (cx, cy) = tr.center(e.t as f64, sp.duration as f64);
            let (dx, dy) = (e.x as f64 - cx, e.y as f64 - cy);
            let r = (dx * dx + dy * dy).sqrt();
            // Half-pixel stroke offset plus rounding to the pixel grid.
            let band = 0.5 + std::f64::consts::FRAC_1_SQRT_2 + 1e-9;
            assert!((r - tr.size / 2.0).abs() <= band, "r={r} size={}", tr.size);
            let a = dy.atan2(dx).rem_euclid(2.0 * PI);
            sectors[((a / (2.0 * PI) * 8.0) as usize).min(7)] += 1;
        }
        let min = *sectors.iter().min().unwrap();
        assert!(min > s.len() / 16, "{sectors:?}");
    }
}
