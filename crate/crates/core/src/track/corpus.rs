//! Synthetic racetracks built from straight and circular-arc segments.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use super::{Centerline, Track};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Half-width of every synthetic corpus track, in meters.
pub const CORPUS_HALF_WIDTH: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusTrack {
    /// Mixed-corner training layout.
    Circuit,
    Oval,
    Chicane,
    Hairpin,
}

impl CorpusTrack {
    pub const ALL: [CorpusTrack; 4] =
        [CorpusTrack::Circuit, CorpusTrack::Oval, CorpusTrack::Chicane, CorpusTrack::Hairpin];

    pub fn name(self) -> &'static str {
        match self {
            CorpusTrack::Circuit => "circuit",
            CorpusTrack::Oval => "oval",
            CorpusTrack::Chicane => "chicane",
            CorpusTrack::Hairpin => "hairpin",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, Copy)]
enum Seg {
    Straight(f64),
    /// Signed sweep angle, positive turns left.
    Arc(f64, f64),
    /// Straight whose length is solved for closure.
    Free,
}

fn layout(which: CorpusTrack) -> Vec<Seg> {
    use Seg::*;
    match which {
        CorpusTrack::Oval => vec![Straight(30.0), Arc(8.0, PI), Straight(30.0), Arc(8.0, PI)],
        CorpusTrack::Circuit => vec![
            Free,
            Arc(6.0, FRAC_PI_2),
            Straight(10.0),
            Arc(5.0, FRAC_PI_4),
            Arc(5.0, -FRAC_PI_2),
            Arc(5.0, FRAC_PI_4),
            Straight(6.0),
            Arc(3.0, PI),
            Straight(6.0),
            Arc(4.0, -FRAC_PI_2),
            Straight(6.0),
            Arc(4.0, FRAC_PI_4),
            Arc(4.0, -FRAC_PI_2),
            Arc(4.0, FRAC_PI_4),
            Straight(8.0),
            Arc(6.0, FRAC_PI_2),
            Free,
            Arc(7.0, FRAC_PI_2),
        ],
        CorpusTrack::Chicane => vec![
            Free,
            Arc(5.0, FRAC_PI_4),
            Arc(5.0, -FRAC_PI_2),
            Arc(5.0, FRAC_PI_4),
            Straight(10.0),
            Arc(6.0, FRAC_PI_2),
            Free,
            Arc(6.0, FRAC_PI_2),
            Straight(10.0),
            Arc(4.0, -FRAC_PI_4),
            Arc(4.0, FRAC_PI_2),
            Arc(4.0, -FRAC_PI_4),
            Straight(12.0),
            Arc(6.0, FRAC_PI_2),
            Straight(15.0),
            Arc(6.0, FRAC_PI_2),
        ],
        CorpusTrack::Hairpin => vec![
            Free,
            Arc(3.0, PI),
            Straight(12.0),
            Arc(8.0, -FRAC_PI_2),
            Arc(8.0, FRAC_PI_2),
            Straight(10.0),
            Arc(8.0, FRAC_PI_2),
            Free,
            Arc(8.0, FRAC_PI_2),
        ],
    }
}

/// Net displacement of every non-free segment, plus the heading at each free one.
fn displacement(segs: &[Seg]) -> (Vec2, Vec<f64>) {
    let mut heading = 0.0;
    let mut pos = Vec2::ZERO;
    let mut free = Vec::new();
    for seg in segs {
        match *seg {
            Seg::Straight(l) => pos += Vec2::from_angle(heading) * l,
            Seg::Arc(r, sweep) => {
                let center = pos + Vec2::from_angle(heading).perp() * (r * sweep.signum());
                pos = center + (pos - center).rotate(sweep);
                heading += sweep;
            }
            Seg::Free => free.push(heading),
        }
    }
    (pos, free)
}

fn sample(segs: &[Seg], spacing: f64) -> Vec<Vec2> {
    let mut heading = 0.0;
    let mut pos = Vec2::ZERO;
    let mut out = Vec::new();
    for seg in segs {
        match *seg {
            Seg::Straight(l) => {
                let n = (l / spacing).ceil().max(1.0) as usize;
                let dir = Vec2::from_angle(heading);
                out.extend((0..n).map(|k| pos + dir * (l * k as f64 / n as f64)));
                pos += dir * l;
            }
            Seg::Arc(r, sweep) => {
                let n = (r * sweep.abs() / spacing).ceil().max(1.0) as usize;
                let center = pos + Vec2::from_angle(heading).perp() * (r * sweep.signum());
                let rel = pos - center;
                out.extend((0..n).map(|k| center + rel.rotate(sweep * k as f64 / n as f64)));
                pos = center + rel.rotate(sweep);
                heading += sweep;
            }
            Seg::Free => unreachable!("free segments are resolved before sampling"),
        }
    }
    out
}

/// Builds one of the synthetic corpus tracks (counter-clockwise) resampled at `stepsize`.
pub fn corpus_track(which: CorpusTrack, stepsize: f64) -> Result<Track> {
    let mut segs = layout(which);
    let (rest, headings) = displacement(&segs);
    match headings[..] {
        [] if rest.norm() < 1e-9 => {}
        [ha, hb] => {
            // solve la * u_a + lb * u_b = -rest
            let (ua, ub) = (Vec2::from_angle(ha), Vec2::from_angle(hb));
            let det = ua.cross(ub);
            if det.abs() < 1e-9 {
                return Err(Error::Geometry("free straights are parallel".into()));
            }
            let target = -rest;
            let la = target.cross(ub) / det;
            let lb = ua.cross(target) / det;
            if la <= 0.0 || lb <= 0.0 {
                return Err(Error::Geometry(format!("layout does not close ({la:.3}, {lb:.3})")));
            }
            let mut lens = [la, lb].into_iter();
            for seg in segs.iter_mut() {
                if matches!(seg, Seg::Free) {
                    *seg = Seg::Straight(lens.next().unwrap_or_default());
                }
            }
        }
        _ => return Err(Error::Geometry("corpus layout does not close".into())),
    }
    let points = sample(&segs, 0.5);
    let n = points.len();
    let raw = Centerline::new(points, vec![CORPUS_HALF_WIDTH; n], vec![CORPUS_HALF_WIDTH; n])?;
    Track::resampled(which.name(), raw, stepsize)
}

/// Counter-clockwise circular track centred at the origin.
pub fn circle_track(radius: f64, half_width: f64, stepsize: f64) -> Result<Track> {
    let n = ((2.0 * PI * radius / stepsize).round() as usize).max(16);
    let points = (0..n).map(|i| Vec2::from_angle(2.0 * PI * i as f64 / n as f64) * radius).collect();
    let raw = Centerline::new(points, vec![half_width; n], vec![half_width; n])?;
    Track::from_centerline(format!("circle_r{radius}"), raw)
}
