use std::fs;
use std::path::Path;

use super::Track;
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Pose, Vec2};

pub const DEFAULT_GRID_RESOLUTION: f64 = 0.05;

/// Boolean occupancy map; `true` marks a wall. Row-major, row 0 at the origin's y.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Pose,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn empty(resolution: f64, origin: Pose, width: usize, height: usize) -> Self {
        Self { resolution, origin, width, height, cells: vec![false; width * height] }
    }

    #[inline]
    fn to_grid_frame(&self, p: Vec2) -> Vec2 {
        (p - self.origin.position()).rotate(-self.origin.heading) * (1.0 / self.resolution)
    }

    /// Cell containing a world point, if it lies inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let g = self.to_grid_frame(p);
        let (cx, cy) = (g.x.floor(), g.y.floor());
        (cx >= 0.0 && cy >= 0.0 && (cx as usize) < self.width && (cy as usize) < self.height)
            .then_some((cx as usize, cy as usize))
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, cx: usize, cy: usize) -> Vec2 {
        let local = Vec2::new(cx as f64 + 0.5, cy as f64 + 0.5) * self.resolution;
        self.origin.position() + local.rotate(self.origin.heading)
    }

    #[inline]
    pub fn get(&self, cx: usize, cy: usize) -> bool {
        self.cells[cy * self.width + cx]
    }

    #[inline]
    pub fn set(&mut self, cx: usize, cy: usize, occupied: bool) {
        self.cells[cy * self.width + cx] = occupied;
    }

    /// Points outside the grid count as occupied.
    pub fn is_occupied(&self, p: Vec2) -> bool {
        self.cell_of(p).is_none_or(|(cx, cy)| self.get(cx, cy))
    }

    /// Distance from `origin` along world heading `angle` to the first occupied
    /// cell, capped at `max_range`. Returns 0 when starting inside a wall.
    pub fn cast_ray(&self, origin: Vec2, angle: f64, max_range: f64) -> f64 {
        let start = self.to_grid_frame(origin);
        let dir = Vec2::from_angle(angle - self.origin.heading);
        let mut cx = start.x.floor() as i64;
        let mut cy = start.y.floor() as i64;
        let (w, h) = (self.width as i64, self.height as i64);
        let occupied =
            |x: i64, y: i64| -> bool { x < 0 || y < 0 || x >= w || y >= h || self.cells[(y * w + x) as usize] };
        if occupied(cx, cy) {
            return 0.0;
        }
        let limit = max_range / self.resolution;
        let (step_x, mut t_max_x, t_delta_x) = axis_setup(start.x, dir.x);
        let (step_y, mut t_max_y, t_delta_y) = axis_setup(start.y, dir.y);
        loop {
            let t = if t_max_x < t_max_y {
                cx += step_x;
                let t = t_max_x;
                t_max_x += t_delta_x;
                t
            } else {
                cy += step_y;
                let t = t_max_y;
                t_max_y += t_delta_y;
                t
            };
            if t >= limit {
                return max_range;
            }
            if occupied(cx, cy) {
                return t * self.resolution;
            }
        }
    }

    /// Writes a binary graymap (P5) plus a plain-text metadata sidecar next to it
    /// (same stem, `.yaml` extension). Free cells are white, walls black; the top
    /// image row is the grid's highest row.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for row in (0..self.height).rev() {
            bytes.extend(self.cells[row * self.width..(row + 1) * self.width].iter().map(|&occ| {
                if occ {
                    0u8
                } else {
                    255u8
                }
            }));
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let image = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let meta = format!(
            "image: {image}\nresolution: {}\norigin: [{}, {}, {}]\nwidth: {}\nheight: {}\nnegate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n",
            self.resolution, self.origin.x, self.origin.y, self.origin.heading, self.width, self.height
        );
        let side = path.with_extension("yaml");
        fs::write(&side, meta).map_err(|e| Error::io(side, e))
    }
}

fn axis_setup(start: f64, dir: f64) -> (i64, f64, f64) {
    if dir > 0.0 {
        (1, (start.floor() + 1.0 - start) / dir, 1.0 / dir)
    } else if dir < 0.0 {
        (-1, (start - start.floor()) / -dir, -1.0 / dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Ranges along body-frame `angles` from `pose`, each capped at `max_range`.
pub fn raycast(grid: &OccupancyGrid, pose: Pose, angles: &[f64], max_range: f64) -> Result<Vec<f64>> {
    let origin = pose.position();
    if grid.is_occupied(origin) {
        return Err(Error::OccupiedPose { x: pose.x, y: pose.y });
    }
    Ok(angles.iter().map(|a| grid.cast_ray(origin, pose.heading + a, max_range)).collect())
}

/// Rasterizes a track: the corridor between its boundaries is free, a band
/// about two cells thick traces each boundary, and everything else is wall.
pub fn rasterize(track: &Track, resolution: f64) -> Result<OccupancyGrid> {
    if !(0.01..=0.5).contains(&resolution) {
        return Err(Error::Config(format!("grid resolution {resolution} outside [0.01, 0.5] m")));
    }
    let left = track.centerline.left_boundary(&track.arc);
    let right = track.centerline.right_boundary(&track.arc);

    let margin = 1.0;
    let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
    for p in left.iter().chain(&right) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let origin = Pose::new(lo.x - margin, lo.y - margin, 0.0);
    let width = ((hi.x - lo.x + 2.0 * margin) / resolution).ceil() as usize;
    let height = ((hi.y - lo.y + 2.0 * margin) / resolution).ceil() as usize;
    let mut grid = OccupancyGrid { resolution, origin, width, height, cells: vec![true; width * height] };

    // even-odd scanline fill over the union of both boundary polygons
    let edges: Vec<(Vec2, Vec2)> = [&left, &right]
        .iter()
        .flat_map(|poly| {
            let n = poly.len();
            (0..n).map(move |i| (poly[i], poly[(i + 1) % n]))
        })
        .collect();
    let mut xs = Vec::new();
    for row in 0..height {
        let yc = origin.y + (row as f64 + 0.5) * resolution;
        xs.clear();
        for &(a, b) in &edges {
            if (a.y <= yc) != (b.y <= yc) {
                xs.push(a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            let c0 = ((span[0] - origin.x) / resolution - 0.5).ceil().max(0.0) as usize;
            let c1 = ((span[1] - origin.x) / resolution - 0.5).floor();
            if c1 < 0.0 {
                continue;
            }
            let c1 = (c1 as usize).min(width - 1);
            for cx in c0..=c1 {
                grid.set(cx, row, false);
            }
        }
    }

    let band = 0.75 * resolution;
    for poly in [&left, &right] {
        let n = poly.len();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let cx0 = (((a.x.min(b.x) - origin.x) / resolution).floor() as i64 - 1).max(0) as usize;
            let cy0 = (((a.y.min(b.y) - origin.y) / resolution).floor() as i64 - 1).max(0) as usize;
            let cx1 = ((((a.x.max(b.x) - origin.x) / resolution).floor() as i64 + 1) as usize).min(width - 1);
            let cy1 = ((((a.y.max(b.y) - origin.y) / resolution).floor() as i64 + 1) as usize).min(height - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    if point_segment_distance(grid.cell_center(cx, cy), a, b) <= band {
                        grid.set(cx, cy, true);
                    }
                }
            }
        }
    }

    if let Some(i) = track.points().iter().position(|p| grid.is_occupied(*p)) {
        return Err(Error::Geometry(format!(
            "centerline point {i} rasterized into a wall; track too narrow for resolution {resolution}"
        )));
    }
    Ok(grid)
}
