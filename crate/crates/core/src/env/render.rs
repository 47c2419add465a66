//! Analytic scene rasterizer. Rendering is a pure function of (state,
//! visual params): shapes are evaluated in continuous world coordinates
//! with soft edges and 2x2 supersampling, the camera tilt rotates the
//! sampling frame, and light_level scales the final brightness.

use super::physics::{PUSH_GOAL, PUSH_SUCCESS_RADIUS};
use super::spec::{RenderParams, VisualParams};
use super::types::Observation;
use super::TaskId;

const WORLD_EXTENT: f32 = 1.2; // world coords span [-1.2, 1.2]
// Soft edge half-width in world units, roughly 1.2 pixels at 32x32. Wide
// enough that bilinear resampling of a rendered frame stays faithful.
const EDGE: f32 = 0.09;

#[derive(Clone, Copy)]
struct Palette {
    bg: [f32; 3],
    bg2: [f32; 3],
    primary: [f32; 3],
    secondary: [f32; 3],
    goal: [f32; 3],
}

fn palette(id: u32) -> Palette {
    match id % 3 {
        0 => Palette {
            bg: [0.15, 0.15, 0.18],
            bg2: [0.30, 0.30, 0.34],
            primary: [0.95, 0.55, 0.15],
            secondary: [0.25, 0.55, 0.95],
            goal: [0.20, 0.85, 0.30],
        },
        // palette 1 inverts the figure/ground contrast of palette 0:
        // bright background, dark shapes
        1 => Palette {
            bg: [0.88, 0.84, 0.76],
            bg2: [0.66, 0.62, 0.56],
            primary: [0.14, 0.10, 0.22],
            secondary: [0.10, 0.25, 0.12],
            goal: [0.45, 0.12, 0.10],
        },
        _ => Palette {
            bg: [0.25, 0.22, 0.12],
            bg2: [0.45, 0.40, 0.25],
            primary: [0.30, 0.90, 0.80],
            secondary: [0.85, 0.35, 0.10],
            goal: [0.95, 0.95, 0.95],
        },
    }
}

fn smoothstep(e0: f32, e1: f32, x: f32) -> f32 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Coverage of a shape with signed distance d (negative inside).
fn cover(d: f32) -> f32 {
    smoothstep(EDGE, -EDGE, d)
}

fn sd_disk(px: f32, py: f32, cx: f32, cy: f32, r: f32) -> f32 {
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() - r
}

/// Signed distance to a segment from a to b with half-width r.
fn sd_capsule(px: f32, py: f32, ax: f32, ay: f32, bx: f32, by: f32, r: f32) -> f32 {
    let (abx, aby) = (bx - ax, by - ay);
    let (apx, apy) = (px - ax, py - ay);
    let t = ((apx * abx + apy * aby) / (abx * abx + aby * aby + 1e-12)).clamp(0.0, 1.0);
    let (cx, cy) = (ax + t * abx, ay + t * aby);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() - r
}

fn mix(base: [f32; 3], top: [f32; 3], a: f32) -> [f32; 3] {
    [
        base[0] + (top[0] - base[0]) * a,
        base[1] + (top[1] - base[1]) * a,
        base[2] + (top[2] - base[2]) * a,
    ]
}

fn background(x: f32, y: f32, visual: &VisualParams, pal: &Palette) -> [f32; 3] {
    if visual.background_id == 0 {
        pal.bg
    } else {
        // smooth checker-like pattern; rotates with the camera frame
        let f = std::f32::consts::PI / 0.6;
        let a = 0.5 * (1.0 + (f * x).sin() * (f * y).sin());
        mix(pal.bg, pal.bg2, a)
    }
}

/// Scene color at a world-space point, before lighting.
fn scene(task: TaskId, state: &[f32], x: f32, y: f32, visual: &VisualParams) -> [f32; 3] {
    let pal = palette(visual.palette_id);
    let mut c = background(x, y, visual, &pal);
    match task {
        TaskId::PointPendulum => {
            let (theta, _) = (state[0], state[1]);
            let (tx, ty) = (theta.sin() * 0.7, theta.cos() * 0.7);
            c = mix(c, pal.primary, cover(sd_capsule(x, y, 0.0, 0.0, tx, ty, 0.05)));
            c = mix(c, pal.secondary, cover(sd_disk(x, y, tx, ty, 0.12)));
            c = mix(c, [0.6, 0.6, 0.6], cover(sd_disk(x, y, 0.0, 0.0, 0.05)));
        }
        TaskId::PointPush => {
            let (ax, ay, ah, px, py) = (state[0], state[1], state[2], state[3], state[4]);
            c = mix(
                c,
                pal.goal,
                cover(sd_disk(x, y, PUSH_GOAL.0, PUSH_GOAL.1, PUSH_SUCCESS_RADIUS + 0.02)),
            );
            c = mix(c, pal.secondary, cover(sd_disk(x, y, px, py, 0.10)));
            // the agent dims as it lifts, so height is visible in pixels
            let shade = 0.55 + 0.45 * (1.0 - ah);
            let agent = [
                pal.primary[0] * shade,
                pal.primary[1] * shade,
                pal.primary[2] * shade,
            ];
            c = mix(c, agent, cover(sd_disk(x, y, ax, ay, 0.09)));
        }
    }
    c
}

/// Renders a state under a visual spec. Pure: identical inputs give
/// identical pixels.
pub fn render(task: TaskId, state: &[f32], visual: &VisualParams, rp: &RenderParams) -> Observation {
    let (h, w) = (rp.height, rp.width);
    let mut pixels = vec![0.0f32; 3 * h * w];
    let tilt = visual.camera_tilt_deg.to_radians();
    let (s, c) = tilt.sin_cos();
    let subs = [0.25f32, 0.75];
    for iy in 0..h {
        for ix in 0..w {
            let mut acc = [0.0f32; 3];
            for sy in subs {
                for sx in subs {
                    let x = ((ix as f32 + sx) / w as f32) * 2.0 * WORLD_EXTENT - WORLD_EXTENT;
                    let y = WORLD_EXTENT - ((iy as f32 + sy) / h as f32) * 2.0 * WORLD_EXTENT;
                    // rotate the sampling frame by -tilt so the scene
                    // appears rotated by +tilt
                    let (rx, ry) = (c * x + s * y, -s * x + c * y);
                    let col = scene(task, state, rx, ry, visual);
                    acc[0] += col[0];
                    acc[1] += col[1];
                    acc[2] += col[2];
                }
            }
            for ch in 0..3 {
                pixels[(ch * h + iy) * w + ix] =
                    (acc[ch] / 4.0 * visual.light_level).clamp(0.0, 1.0);
            }
        }
    }
    Observation {
        height: h,
        width: w,
        pixels,
    }
}

/// Rotates an image about its center by `deg` using bilinear resampling,
/// with the same angular convention as `camera_tilt_deg` (so rotating a
/// tilted render by the negated tilt recovers the untilted render).
/// Out-of-frame samples clamp to the nearest edge pixel.
pub fn rotate_image(obs: &Observation, deg: f32) -> Observation {
    let (h, w) = (obs.height, obs.width);
    // pixel rows grow downward, so the world-sense angle flips sign here
    let rad = -deg.to_radians();
    let (s, c) = rad.sin_cos();
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let mut pixels = vec![0.0f32; 3 * h * w];
    for iy in 0..h {
        for ix in 0..w {
            // rotating the image content by +deg samples the source at -deg
            let dx = ix as f32 - cx;
            let dy = iy as f32 - cy;
            let sx = (c * dx + s * dy + cx).clamp(0.0, w as f32 - 1.0);
            let sy = (-s * dx + c * dy + cy).clamp(0.0, h as f32 - 1.0);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
            for ch in 0..3 {
                let v00 = obs.get(ch, y0, x0);
                let v01 = obs.get(ch, y0, x1);
                let v10 = obs.get(ch, y1, x0);
                let v11 = obs.get(ch, y1, x1);
                let v = v00 * (1.0 - fx) * (1.0 - fy)
                    + v01 * fx * (1.0 - fy)
                    + v10 * (1.0 - fx) * fy
                    + v11 * fx * fy;
                pixels[(ch * h + iy) * w + ix] = v;
            }
        }
    }
    Observation {
        height: h,
        width: w,
        pixels,
    }
}
