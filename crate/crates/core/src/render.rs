//! Rasterisation of tables and balls into grayscale frames and
//! object-centred glimpses.
//!
//! A viewport of side `size` world pixels is first drawn on a fine grid of
//! roughly one sample per world pixel, then box-filtered down to the output
//! resolution. Geometry is expressed relative to the viewport centre and
//! snapped to 1/65536 px before drawing, so a glimpse depends only on the
//! scene as seen from the fixated ball and not on absolute coordinates.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Vec2};
use crate::physics::{ForceMap, Table, Trajectory, WorldState};

pub const BALL_INTENSITY: f64 = 1.0;
pub const WALL_INTENSITY: f64 = 0.6;
pub const INTERIOR_INTENSITY: f64 = 0.0;
pub const EXTERIOR_INTENSITY: f64 = 0.3;
/// Wall stroke width in world pixels.
pub const WALL_WIDTH: f64 = 3.0;
pub const MIN_RESOLUTION: usize = 8;
/// Number of frames in a glimpse stack.
pub const STACK_DEPTH: usize = 4;

const SNAP: f64 = 65536.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channel-interleaved, values in `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image { width, height, channels: 1, pixels: vec![value; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Replicates a grayscale image into `channels` identical planes.
    pub fn with_channels(&self, channels: usize) -> Image {
        if channels == self.channels {
            return self.clone();
        }
        let gray = self.to_gray();
        let pixels = gray.pixels.iter().flat_map(|&p| std::iter::repeat_n(p, channels)).collect();
        Image { width: self.width, height: self.height, channels, pixels }
    }

    fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self.pixels.chunks(self.channels).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        Image { width: self.width, height: self.height, channels: 1, pixels }
    }

    /// Binary PPM: `P5` for one channel, `P6` for three.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<()> {
        let magic = match self.channels {
            1 => "P5",
            3 => "P6",
            c => return Err(Error::Format(format!("PPM supports 1 or 3 channels, not {c}"))),
        };
        write!(w, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_ppm(f)
    }
}

/// Square window onto the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewport {
    pub center: Vec2,
    /// Side length in world pixels.
    pub size: f64,
}

fn snap(v: f64) -> f64 {
    (v * SNAP).round() / SNAP
}

/// Renders a table and a set of `(center, radius)` discs.
pub fn render_discs(table: &Table, discs: &[(Vec2, f64)], viewport: Viewport, resolution: usize) -> Image {
    let factor = ((viewport.size / resolution as f64).round() as usize).max(1);
    let fine = resolution * factor;
    let px = viewport.size / fine as f64;
    let half = viewport.size / 2.0;
    let to_fine = |p: Vec2| {
        let rel = p - viewport.center;
        Vec2::new((snap(rel.x) + half) / px, (snap(rel.y) + half) / px)
    };
    let verts: Vec<Vec2> = table.vertices().iter().map(|&v| to_fine(v)).collect();

    let mut buf = vec![EXTERIOR_INTENSITY; fine * fine];
    fill_interior(&mut buf, fine, &verts);
    draw_walls(&mut buf, fine, &verts, WALL_WIDTH / 2.0 / px);
    for &(c, r) in discs {
        draw_disc(&mut buf, fine, to_fine(c), r / px);
    }
    downsample(&buf, fine, factor)
}

/// Scanline fill of the polygon interior at pixel centres.
fn fill_interior(buf: &mut [f64], fine: usize, verts: &[Vec2]) {
    let n = verts.len();
    let (lo, hi) = verts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.y), hi.max(v.y)));
    let row_start = (lo - 0.5).ceil().max(0.0) as usize;
    let row_end = ((hi - 0.5).floor() + 1.0).clamp(0.0, fine as f64) as usize;
    let mut xs = Vec::with_capacity(n);
    for row in row_start..row_end {
        let y = row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        let line = &mut buf[row * fine..(row + 1) * fine];
        for span in xs.chunks_exact(2) {
            let c0 = (span[0] - 0.5).ceil().clamp(0.0, fine as f64) as usize;
            let c1 = (span[1] - 0.5).ceil().clamp(0.0, fine as f64) as usize;
            if c0 < c1 {
                line[c0..c1].fill(INTERIOR_INTENSITY);
            }
        }
    }
}

fn clip_range(lo: f64, hi: f64, fine: usize) -> std::ops::Range<usize> {
    let a = lo.floor().max(0.0);
    let b = (hi.ceil() + 1.0).min(fine as f64);
    if b <= a {
        0..0
    } else {
        a as usize..b as usize
    }
}

fn draw_walls(buf: &mut [f64], fine: usize, verts: &[Vec2], half_width: f64) {
    let n = verts.len();
    let reach = half_width + 0.5;
    // Coverage is kept per touched pixel so overlapping strokes at corners take the max.
    let mut touched: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (a, b) = (verts[i], verts[(i + 1) % n]);
        let rows = clip_range(a.y.min(b.y) - reach - 0.5, a.y.max(b.y) + reach - 0.5, fine);
        let cols = clip_range(a.x.min(b.x) - reach - 0.5, a.x.max(b.x) + reach - 0.5, fine);
        for row in rows {
            for col in cols.clone() {
                let p = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                let cov = (reach - point_segment_distance(p, a, b)).clamp(0.0, 1.0);
                if cov > 0.0 {
                    touched.push((row * fine + col, cov));
                }
            }
        }
    }
    if touched.is_empty() {
        return;
    }
    touched.sort_by_key(|&(idx, _)| idx);
    let mut k = 0;
    while k < touched.len() {
        let idx = touched[k].0;
        let mut cov = 0.0f64;
        while k < touched.len() && touched[k].0 == idx {
            cov = cov.max(touched[k].1);
            k += 1;
        }
        buf[idx] = buf[idx] * (1.0 - cov) + WALL_INTENSITY * cov;
    }
}

fn draw_disc(buf: &mut [f64], fine: usize, c: Vec2, r: f64) {
    let reach = r + 0.5;
    let rows = clip_range(c.y - reach - 0.5, c.y + reach - 0.5, fine);
    let cols = clip_range(c.x - reach - 0.5, c.x + reach - 0.5, fine);
    for row in rows {
        let dy = row as f64 + 0.5 - c.y;
        for col in cols.clone() {
            let dx = col as f64 + 0.5 - c.x;
            let cov = (reach - dx.hypot(dy)).clamp(0.0, 1.0);
            if cov > 0.0 {
                let p = &mut buf[row * fine + col];
                *p = *p * (1.0 - cov) + BALL_INTENSITY * cov;
            }
        }
    }
}

/// Area-averages `factor x factor` blocks.
fn downsample(buf: &[f64], fine: usize, factor: usize) -> Image {
    let res = fine / factor;
    if factor == 1 {
        return Image { width: res, height: res, channels: 1, pixels: buf.to_vec() };
    }
    let mut rows = vec![0.0f64; res * fine];
    // Vertical pass then horizontal pass.
    for (oy, out_row) in rows.chunks_exact_mut(fine).enumerate() {
        for fy in 0..factor {
            let src = &buf[(oy * factor + fy) * fine..(oy * factor + fy + 1) * fine];
            for (o, s) in out_row.iter_mut().zip(src) {
                *o += s;
            }
        }
    }
    let norm = 1.0 / (factor * factor) as f64;
    let pixels = rows
        .chunks_exact(fine)
        .flat_map(|row| row.chunks_exact(factor).map(move |blk| blk.iter().sum::<f64>() * norm))
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Image { width: res, height: res, channels: 1, pixels }
}

fn discs_of(state: &WorldState) -> Vec<(Vec2, f64)> {
    state.balls.iter().map(|b| (b.center, b.radius)).collect()
}

/// Renders the part of the world inside `viewport`.
pub fn render_frame(state: &WorldState, viewport: Viewport, resolution: usize) -> Result<Image> {
    check_resolution(resolution)?;
    Ok(render_discs(&state.table, &discs_of(state), viewport, resolution))
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidConfig(format!("resolution {resolution} below {MIN_RESOLUTION}")));
    }
    Ok(())
}

/// View of side `glimpse_size` centred on ball `ball_id`.
pub fn glimpse(state: &WorldState, ball_id: usize, glimpse_size: f64, resolution: usize) -> Result<Image> {
    let ball = state.ball(ball_id)?;
    render_frame(state, Viewport { center: ball.center, size: glimpse_size }, resolution)
}

/// Viewport that fits the table's bounding box, letterboxed to a square.
pub fn table_viewport(table: &Table) -> Viewport {
    let (min, max) = table.bounding_box();
    let span = max - min;
    Viewport { center: (min + max) * 0.5, size: span.x.max(span.y) }
}

/// Whole-table render used by the frame-centric model.
pub fn render_frame_centric(state: &WorldState, resolution: usize) -> Result<Image> {
    render_frame(state, table_viewport(&state.table), resolution)
}

/// Four consecutive glimpses of one ball plus the force applied at `frames[3]`'s time.
#[derive(Clone, Debug, PartialEq)]
pub struct GlimpseStack {
    /// Oldest first: `t-3, t-2, t-1, t`.
    pub frames: [Image; STACK_DEPTH],
    pub force: Vec2,
    pub ball_id: usize,
}

/// Frame indices feeding the stack at `t`, padding the start with frame 0.
pub fn stack_indices(t: usize) -> [usize; STACK_DEPTH] {
    std::array::from_fn(|k| (t + k).saturating_sub(STACK_DEPTH - 1))
}

/// Builds the input stack for `ball_id` at frame `t`; every frame is centred
/// on the ball's position at that frame's own time.
pub fn glimpse_stack(
    traj: &Trajectory,
    forces: &ForceMap,
    ball_id: usize,
    t: usize,
    glimpse_size: f64,
    resolution: usize,
) -> Result<GlimpseStack> {
    if t >= traj.num_frames() {
        return Err(Error::OutOfRange { index: t, len: traj.num_frames() });
    }
    let idx = stack_indices(t);
    let mut frames = Vec::with_capacity(STACK_DEPTH);
    for &i in &idx {
        frames.push(glimpse(&traj.states[i], ball_id, glimpse_size, resolution)?);
    }
    let force = if t == 0 { forces.get(&ball_id).copied().unwrap_or(Vec2::ZERO) } else { Vec2::ZERO };
    let frames: [Image; STACK_DEPTH] = frames.try_into().expect("stack depth");
    Ok(GlimpseStack { frames, force, ball_id })
}
