//! 8-bit grayscale images and axis-aligned pixel rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Axis-aligned rectangle in pixel units, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    /// Overlap of two rectangles, `None` when they do not share a pixel.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Grayscale {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Grayscale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grayscale({}x{})", self.width, self.height)
    }
}

impl Grayscale {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BufferSize {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Grayscale { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Grayscale {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grayscale { width, height, data }
    }

    /// Converts interleaved 8-bit RGB with rounded integer BT.601 luma.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::BufferSize {
                expected: width * height * 3,
                got: rgb.len(),
            });
        }
        let data = rgb.chunks_exact(3).map(|p| luma_bt601(p[0], p[1], p[2])).collect();
        Ok(Grayscale { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn check_region(&self, region: &Rect) -> Result<()> {
        if self.bounds().contains_rect(region) {
            Ok(())
        } else {
            Err(Error::RegionOutOfBounds {
                x: region.x,
                y: region.y,
                w: region.w,
                h: region.h,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn crop(&self, region: &Rect) -> Result<Grayscale> {
        self.check_region(region)?;
        let mut data = Vec::with_capacity(region.area());
        for y in region.y..region.bottom() {
            data.extend_from_slice(&self.row(y)[region.x..region.right()]);
        }
        Ok(Grayscale {
            width: region.w,
            height: region.h,
            data,
        })
    }

    /// Copies `src` so that its top-left pixel lands on `(x, y)`.
    pub fn paste(&mut self, src: &Grayscale, x: usize, y: usize) -> Result<()> {
        self.check_region(&Rect::new(x, y, src.width, src.height))?;
        for sy in 0..src.height {
            let dst = (y + sy) * self.width + x;
            self.data[dst..dst + src.width].copy_from_slice(src.row(sy));
        }
        Ok(())
    }

    /// Separable Gaussian blur with clamped borders, rounded back to 8 bits.
    /// `sigma <= 0` returns an unchanged copy.
    pub fn gaussian_blur(&self, sigma: f64) -> Grayscale {
        if sigma <= 0.0 || self.data.is_empty() {
            return self.clone();
        }
        let plane: Vec<f32> = self.data.iter().map(|&v| v as f32).collect();
        let blurred = blur_plane(&plane, self.width, self.height, sigma as f32);
        Grayscale {
            width: self.width,
            height: self.height,
            data: blurred.iter().map(|&v| clamp_u8(v)).collect(),
        }
    }

    pub(crate) fn to_plane(&self, scale: f32) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32 * scale).collect()
    }
}

pub fn luma_bt601(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

#[inline]
pub(crate) fn clamp_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub(crate) fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur of a float plane, borders clamped.
pub(crate) fn blur_plane(src: &[f32], width: usize, height: usize, sigma: f32) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (width as isize, height as isize);

    let mut tmp = vec![0.0f32; src.len()];
    par::for_each_row(&mut tmp, width, |y, row| {
        let line = &src[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - radius).clamp(0, w - 1) as usize;
                acc += kv * line[sx];
            }
            *out = acc;
        }
    });

    let mut dst = vec![0.0f32; src.len()];
    par::for_each_row(&mut dst, width, |y, row| {
        row.fill(0.0);
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - radius).clamp(0, h - 1) as usize;
            let line = &tmp[sy * width..(sy + 1) * width];
            for (out, &v) in row.iter_mut().zip(line) {
                *out += kv * v;
            }
        }
    });
    dst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_length_is_checked() {
        assert!(matches!(
            Grayscale::new(3, 3, vec![0; 8]),
            Err(Error::BufferSize { expected: 9, got: 8 })
        ));
    }

    #[test]
    fn crop_and_paste_round_trip() {
        let img = Grayscale::from_fn(10, 8, |x, y| (x * 10 + y) as u8);
        let r = Rect::new(3, 2, 4, 5);
        let c = img.crop(&r).unwrap();
        assert_eq!(c.get(0, 0), img.get(3, 2));
        assert_eq!(c.get(3, 4), img.get(6, 6));
        let mut canvas = Grayscale::filled(10, 8, 0);
        canvas.paste(&c, 3, 2).unwrap();
        assert_eq!(canvas.crop(&r).unwrap(), c);
        assert!(img.crop(&Rect::new(8, 0, 3, 1)).is_err());
    }

    #[test]
    fn rect_intersection() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(5, 7, 10, 10);
        assert_eq!(a.intersect(&b), Some(Rect::new(5, 7, 5, 3)));
        assert_eq!(a.intersect(&Rect::new(10, 0, 2, 2)), None);
        assert!(a.contains_rect(&Rect::new(2, 2, 8, 8)));
        assert!(!a.contains_rect(&Rect::new(2, 2, 9, 8)));
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma_bt601(255, 255, 255), 255);
        assert_eq!(luma_bt601(0, 0, 0), 0);
        // 0.299 * 200 = 59.8
        assert_eq!(luma_bt601(200, 0, 0), 60);
        assert_eq!(luma_bt601(0, 0, 10), 1);
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = Grayscale::filled(17, 9, 77);
        assert_eq!(img.gaussian_blur(2.0), img);
        assert_eq!(img.gaussian_blur(0.0), img);
    }

    #[test]
    fn blur_spreads_an_impulse_symmetrically() {
        let mut img = Grayscale::filled(21, 21, 0);
        img.set(10, 10, 255);
        let b = img.gaussian_blur(1.5);
        assert!(b.get(10, 10) < 255);
        assert_eq!(b.get(9, 10), b.get(11, 10));
        assert_eq!(b.get(10, 9), b.get(10, 11));
        assert!(b.get(10, 10) > b.get(12, 10));
    }
}
