//! Rain-map PNG rendering with a stepped color ramp.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RainMap;

pub type Rgba = [u8; 4];

/// Ordered breakpoints: a cell takes the color of the highest breakpoint it
/// reaches, or `background` below the first one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub background: Rgba,
    pub stops: Vec<(f32, Rgba)>,
}

impl Default for Palette {
    /// Stops over normalized rain rate.
    fn default() -> Self {
        Self {
            background: [255, 255, 255, 0],
            stops: vec![
                (0.01, [173, 216, 230, 255]),
                (0.05, [0, 0, 255, 255]),
                (0.10, [0, 200, 0, 255]),
                (0.20, [255, 255, 0, 255]),
                (0.35, [255, 165, 0, 255]),
                (0.55, [255, 0, 0, 255]),
                (0.80, [255, 0, 255, 255]),
            ],
        }
    }
}

impl Palette {
    pub fn validate(&self) -> Result<()> {
        if self.stops.is_empty() {
            return Err(Error::Config("palette has no stops".into()));
        }
        if self
            .stops
            .windows(2)
            .any(|w| w[0].0.is_nan() || w[0].0 >= w[1].0)
            || !self.stops[0].0.is_finite()
        {
            return Err(Error::Config(
                "palette stops must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn color(&self, value: f32) -> Rgba {
        self.stops
            .iter()
            .rev()
            .find(|(b, _)| value >= *b)
            .map_or(self.background, |(_, c)| *c)
    }

    pub fn top(&self) -> Rgba {
        self.stops.last().map_or(self.background, |s| s.1)
    }
}

fn to_image(map: &RainMap, palette: &Palette) -> Result<RgbaImage> {
    palette.validate()?;
    let (rows, cols) = map.shape();
    let (w, h) = (u32::try_from(cols), u32::try_from(rows));
    let (Ok(w), Ok(h)) = (w, h) else {
        return Err(Error::Format("map too large to render".into()));
    };
    let values = map.values();
    Ok(RgbaImage::from_fn(w, h, |x, y| {
        image::Rgba(palette.color(values[y as usize * cols + x as usize]))
    }))
}

/// Encodes `map` as an RGBA PNG, one pixel per cell, top row first.
pub fn render_png(map: &RainMap, palette: &Palette) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_image(map, palette)?.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn render_png_file(map: &RainMap, palette: &Palette, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_png(map, palette)?)?;
    Ok(())
}
