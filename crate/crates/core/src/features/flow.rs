use ndarray::Array2;

use super::frame::Frame;
use crate::{Error, Result};

/// Dense displacement field in pixels per frame pair, `(dx, dy)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            data: vec![[0.0, 0.0]; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    pub fn negated(&self) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|[u, v]| [-u, -v]).collect(),
        }
    }

    pub fn scaled(&self, s: f32) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|[u, v]| [u * s, v * s]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatchConfig {
    pub block: usize,
    pub radius: usize,
}

impl Default for BlockMatchConfig {
    fn default() -> Self {
        BlockMatchConfig { block: 8, radius: 6 }
    }
}

/// Coarse optical flow by exhaustive block matching on luma.
pub fn compute_flow(a: &Frame, b: &Frame) -> Result<FlowField> {
    compute_flow_with(a, b, BlockMatchConfig::default())
}

/// Each `block x block` tile of `a` takes the displacement within `radius`
/// that minimizes the sum of absolute differences against `b`. Ties go to
/// the shortest displacement, so identical frames give a zero field.
/// Pixels outside the tiled area copy the nearest tile.
pub fn compute_flow_with(a: &Frame, b: &Frame, config: BlockMatchConfig) -> Result<FlowField> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Argument(format!(
            "frame shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if config.block == 0 {
        return Err(Error::Argument("block size must be positive".into()));
    }
    let (w, h) = (a.width, a.height);
    let bs = config.block;
    let (nbx, nby) = (w / bs, h / bs);
    if nbx == 0 || nby == 0 {
        return Ok(FlowField::zeros(w, h));
    }
    let ga = a.grayscale();
    let gb = b.grayscale();
    let r = config.radius as isize;
    let mut blocks = Array2::<[f32; 2]>::from_elem((nby, nbx), [0.0, 0.0]);
    for by in 0..nby {
        for bx in 0..nbx {
            let (x0, y0) = ((bx * bs) as isize, (by * bs) as isize);
            let mut best = (f32::INFINITY, isize::MAX, 0isize, 0isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (cx, cy) = (x0 + dx, y0 + dy);
                    if cx < 0 || cy < 0 || cx as usize + bs > w || cy as usize + bs > h {
                        continue;
                    }
                    let mut sad = 0.0f32;
                    for yy in 0..bs {
                        for xx in 0..bs {
                            let pa = ga[[y0 as usize + yy, x0 as usize + xx]];
                            let pb = gb[[cy as usize + yy, cx as usize + xx]];
                            sad += (pa - pb).abs();
                        }
                    }
                    let mag = dx * dx + dy * dy;
                    if sad < best.0 || (sad == best.0 && mag < best.1) {
                        best = (sad, mag, dx, dy);
                    }
                }
            }
            blocks[[by, bx]] = [best.2 as f32, best.3 as f32];
        }
    }
    let mut field = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            field.data[y * w + x] = blocks[[(y / bs).min(nby - 1), (x / bs).min(nbx - 1)]];
        }
    }
    Ok(field)
}

/// Colour-wheel rendering: hue is the flow angle, saturation the magnitude
/// normalized by the frame's maximum, value fixed at 1. Zero flow is white.
pub fn render_flow(field: &FlowField) -> Frame {
    let max_mag = field
        .data
        .iter()
        .map(|[u, v]| (u * u + v * v).sqrt())
        .fold(0.0f32, f32::max);
    let mut data = Vec::with_capacity(field.data.len() * 3);
    for &[u, v] in &field.data {
        let mag = (u * u + v * v).sqrt();
        let sat = if max_mag > 0.0 { mag / max_mag } else { 0.0 };
        let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
        data.extend_from_slice(&hsv_to_rgb(hue, sat, 1.0));
    }
    Frame {
        width: field.width,
        height: field.height,
        data,
    }
}

fn hsv_to_rgb(hue: f32, sat: f32, val: f32) -> [f32; 3] {
    let c = val * sat;
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
    let m = val - c;
    [r + m, g + m, b + m]
}
