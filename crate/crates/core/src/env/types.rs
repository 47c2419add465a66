use crate::error::{Error, Result};

pub type StateVector = Vec<f32>;
pub type ActionVector = Vec<f32>;

/// Pixel observation, channel-major (3, h, w), values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl Observation {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != 3 * height * width {
            return Err(Error::ShapeMismatch(format!(
                "observation {}x{} needs {} values, got {}",
                height,
                width,
                3 * height * width,
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Writes the observation as an RGB PNG, for debugging.
    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut buf = vec![0u8; self.height * self.width * 3];
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    buf[(y * self.width + x) * 3 + c] =
                        (self.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
        image::save_buffer(
            path,
            &buf,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|e| Error::InvalidArgument(format!("png write: {e}")))
    }

    pub fn mean_abs_diff(&self, other: &Observation) -> f32 {
        debug_assert_eq!(self.pixels.len(), other.pixels.len());
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum::<f32>()
            / self.pixels.len() as f32
    }
}

/// One environment transition. State and reward are present iff the
/// producing environment is instrumented.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Observation,
    pub state: Option<StateVector>,
    pub action: ActionVector,
    pub reward: Option<f32>,
    pub next_obs: Observation,
    pub next_state: Option<StateVector>,
    pub done: bool,
}
