//! Image primitives: the `Frame` pixel container, color conversion, bilinear
//! resize, blank-condition construction, and PNG I/O.
//!
//! Frames live in one of two value spaces. `Storage` is `[0, 1]`, what PNG
//! files decode to. `Model` is `[-1, 1]`, what the networks consume and emit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::num::{real, Scalar};
use crate::tensor::Tensor;

pub mod canny;

pub use canny::{synthesize_lineart, CannyParams};

/// ITU-R BT.601 luminance weights.
pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

const RANGE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    /// Pixel values in `[0, 1]`, the on-disk convention.
    Storage,
    /// Pixel values in `[-1, 1]`, the network convention.
    Model,
}

impl Space {
    fn bounds(self) -> (f64, f64) {
        match self {
            Space::Storage => (0.0, 1.0),
            Space::Model => (-1.0, 1.0),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Space::Storage => "storage",
            Space::Model => "model",
        }
    }
}

/// An image as a (channels, height, width) array of scalars.
///
/// Only 1-channel (greyscale / line art) and 3-channel (RGB) frames are
/// constructible, and values are clamped to the declared space on entry so
/// the range invariant holds exactly afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    data: Tensor<T>,
    space: Space,
}

impl<T: Scalar> Frame<T> {
    pub fn new(data: Tensor<T>, space: Space) -> Result<Self> {
        if data.shape().len() != 3 {
            return Err(Error::InvalidSize(format!(
                "frame needs a (c, h, w) shape, got {:?}",
                data.shape()
            )));
        }
        let channels = data.shape()[0];
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidChannels {
                expected: "1- or 3".into(),
                got: channels,
            });
        }
        if data.shape()[1] == 0 || data.shape()[2] == 0 {
            return Err(Error::InvalidSize("zero-sized frame".into()));
        }
        let (lo, hi) = space.bounds();
        let (lo_t, hi_t) = (real::<T>(lo), real::<T>(hi));
        let mut data = data;
        for v in data.data_mut() {
            let f = v.to_f64().unwrap_or(f64::NAN);
            if !f.is_finite() || f < lo - RANGE_SLACK || f > hi + RANGE_SLACK {
                return Err(Error::OutOfRange {
                    space: space.name(),
                    value: f,
                });
            }
            if *v < lo_t {
                *v = lo_t;
            } else if *v > hi_t {
                *v = hi_t;
            }
        }
        Ok(Frame { data, space })
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: T, space: Space) -> Result<Self> {
        Frame::new(Tensor::full(&[channels, height, width], value), space)
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.data
    }

    /// Map `[0,1]` to `[-1,1]`. Identity if already in model space.
    pub fn to_model(&self) -> Frame<T> {
        match self.space {
            Space::Model => self.clone(),
            Space::Storage => Frame {
                data: self.data.map(|v| v + v - T::one()),
                space: Space::Model,
            },
        }
    }

    /// Map `[-1,1]` to `[0,1]`. Identity if already in storage space.
    pub fn to_storage(&self) -> Frame<T> {
        let half = real::<T>(0.5);
        match self.space {
            Space::Storage => self.clone(),
            Space::Model => Frame {
                data: self.data.map(|v| (v + T::one()) * half),
                space: Space::Storage,
            },
        }
    }
}

/// Weighted RGB-to-luminance conversion (BT.601).
pub fn to_greyscale<T: Scalar>(rgb: &Frame<T>) -> Result<Frame<T>> {
    if rgb.channels() != 3 {
        return Err(Error::InvalidChannels {
            expected: "3".into(),
            got: rgb.channels(),
        });
    }
    let (h, w) = (rgb.height(), rgb.width());
    let (wr, wg, wb) = (real::<T>(LUMA_R), real::<T>(LUMA_G), real::<T>(LUMA_B));
    let mut out = Tensor::zeros(&[1, h, w]);
    for y in 0..h {
        for x in 0..w {
            let v = wr * rgb.tensor().at3(0, y, x)
                + wg * rgb.tensor().at3(1, y, x)
                + wb * rgb.tensor().at3(2, y, x);
            out.set3(0, y, x, v);
        }
    }
    Frame::new(out, rgb.space())
}

/// Replicate a 1-channel frame into 3 identical channels.
pub fn replicate_grey<T: Scalar>(grey: &Frame<T>) -> Result<Frame<T>> {
    if grey.channels() != 1 {
        return Err(Error::InvalidChannels {
            expected: "1".into(),
            got: grey.channels(),
        });
    }
    let (h, w) = (grey.height(), grey.width());
    let mut out = Tensor::zeros(&[3, h, w]);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                out.set3(c, y, x, grey.tensor().at3(0, y, x));
            }
        }
    }
    Frame::new(out, grey.space())
}

/// Bilinear resize with half-pixel sample centers, clamped at the borders.
pub fn resize<T: Scalar>(frame: &Frame<T>, height: usize, width: usize) -> Result<Frame<T>> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidSize(format!(
            "resize target {height}x{width}"
        )));
    }
    if height == frame.height() && width == frame.width() {
        return Ok(frame.clone());
    }
    let (c, sh, sw) = (frame.channels(), frame.height(), frame.width());
    let scale_y = sh as f64 / height as f64;
    let scale_x = sw as f64 / width as f64;
    let mut out = Tensor::zeros(&[c, height, width]);
    for oy in 0..height {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).max(0.0).min((sh - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let fy = real::<T>(sy - y0 as f64);
        for ox in 0..width {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).max(0.0).min((sw - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let fx = real::<T>(sx - x0 as f64);
            for ch in 0..c {
                let v00 = frame.tensor().at3(ch, y0, x0);
                let v01 = frame.tensor().at3(ch, y0, x1);
                let v10 = frame.tensor().at3(ch, y1, x0);
                let v11 = frame.tensor().at3(ch, y1, x1);
                let top = v00 + fx * (v01 - v00);
                let bot = v10 + fx * (v11 - v10);
                out.set3(ch, oy, ox, top + fy * (bot - top));
            }
        }
    }
    Frame::new(out, frame.space())
}

/// The canonical blank condition: an all-zero frame in model space.
pub fn blank_frame<T: Scalar>(channels: usize, height: usize, width: usize) -> Result<Frame<T>> {
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidChannels {
            expected: "1- or 3".into(),
            got: channels,
        });
    }
    Frame::new(Tensor::zeros(&[channels, height, width]), Space::Model)
}

/// Decode an 8-bit PNG into a storage-space frame (1 or 3 channels).
pub fn load_png<T: Scalar>(path: &Path) -> Result<Frame<T>> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let scale = real::<T>(1.0 / 255.0);
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let mut t = Tensor::zeros(&[1, h, w]);
            for (x, y, p) in g.enumerate_pixels() {
                t.set3(0, y as usize, x as usize, real::<T>(p.0[0] as f64) * scale);
            }
            Frame::new(t, Space::Storage)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let mut t = Tensor::zeros(&[3, h, w]);
            for (x, y, p) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    t.set3(c, y as usize, x as usize, real::<T>(p.0[c] as f64) * scale);
                }
            }
            Frame::new(t, Space::Storage)
        }
    }
}

/// Encode a frame as an 8-bit PNG, converting to storage space first.
pub fn save_png<T: Scalar>(frame: &Frame<T>, path: &Path) -> Result<()> {
    let frame = frame.to_storage();
    let (h, w) = (frame.height(), frame.width());
    let quant = |v: T| -> u8 {
        let f = (v.to_f64().unwrap() * 255.0).round();
        f.clamp(0.0, 255.0) as u8
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let write_err = |e: image::ImageError| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if frame.channels() == 1 {
        let mut buf = image::GrayImage::new(w as u32, h as u32);
        for (x, y, p) in buf.enumerate_pixels_mut() {
            p.0[0] = quant(frame.tensor().at3(0, y as usize, x as usize));
        }
        buf.save(path).map_err(write_err)
    } else {
        let mut buf = image::RgbImage::new(w as u32, h as u32);
        for (x, y, p) in buf.enumerate_pixels_mut() {
            for c in 0..3 {
                p.0[c] = quant(frame.tensor().at3(c, y as usize, x as usize));
            }
        }
        buf.save(path).map_err(write_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb_const(r: f64, g: f64, b: f64) -> Frame<f64> {
        let mut t = Tensor::zeros(&[3, 4, 4]);
        for y in 0..4 {
            for x in 0..4 {
                t.set3(0, y, x, r);
                t.set3(1, y, x, g);
                t.set3(2, y, x, b);
            }
        }
        Frame::new(t, Space::Storage).unwrap()
    }

    #[test]
    fn frame_rejects_bad_channels_and_range() {
        assert!(Frame::new(Tensor::<f32>::zeros(&[2, 4, 4]), Space::Storage).is_err());
        assert!(Frame::new(Tensor::<f32>::full(&[1, 2, 2], 1.5), Space::Storage).is_err());
        assert!(Frame::new(Tensor::<f32>::full(&[1, 2, 2], -0.5), Space::Model).is_ok());
    }

    #[test]
    fn space_conversions_invert() {
        let f = Frame::new(
            Tensor::from_vec(&[1, 2, 2], vec![0.0, 0.25, 0.5, 1.0]).unwrap(),
            Space::Storage,
        )
        .unwrap();
        let back = f.to_model().to_storage();
        assert!(f.tensor().max_abs_diff(back.tensor()) < 1e-6);
        // model zero is the blank value, storage mid-grey
        assert_eq!(blank_frame::<f64>(3, 2, 2).unwrap().to_storage().tensor().at3(0, 0, 0), 0.5);
    }

    #[test]
    fn greyscale_white_is_one() {
        // weights sum to 1
        let g = to_greyscale(&rgb_const(1.0, 1.0, 1.0)).unwrap();
        for &v in g.tensor().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn greyscale_pure_red_is_luma_weight() {
        // direct evaluation of 0.299*1 + 0.587*0 + 0.114*0
        let g = to_greyscale(&rgb_const(1.0, 0.0, 0.0)).unwrap();
        for &v in g.tensor().iter() {
            assert!((v - 0.299).abs() < 1e-12);
        }
    }

    #[test]
    fn greyscale_black_is_black() {
        let g = to_greyscale(&rgb_const(0.0, 0.0, 0.0)).unwrap();
        assert!(g.tensor().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn greyscale_rejects_single_channel() {
        let grey = Frame::<f64>::constant(1, 4, 4, 0.5, Space::Storage).unwrap();
        assert!(matches!(
            to_greyscale(&grey),
            Err(Error::InvalidChannels { .. })
        ));
    }

    #[test]
    fn greyscale_is_projection_on_replicated_grey() {
        let mut t = Tensor::zeros(&[1, 3, 3]);
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = i as f64 / 10.0;
        }
        let grey = Frame::new(t, Space::Storage).unwrap();
        let again = to_greyscale(&replicate_grey(&grey).unwrap()).unwrap();
        assert!(grey.tensor().max_abs_diff(again.tensor()) < 1e-6);
    }

    #[test]
    fn resize_identity_is_bit_identical() {
        let f = rgb_const(0.25, 0.5, 0.75);
        let r = resize(&f, 4, 4).unwrap();
        assert_eq!(f.tensor().data(), r.tensor().data());
    }

    #[test]
    fn resize_constant_stays_constant() {
        let f = Frame::<f64>::constant(3, 5, 7, 0.42, Space::Storage).unwrap();
        for (h, w) in [(2, 3), (9, 11), (1, 1)] {
            let r = resize(&f, h, w).unwrap();
            assert_eq!(r.tensor().shape(), &[3, h, w]);
            for &v in r.tensor().iter() {
                assert!((v - 0.42).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resize_2x2_to_2x4_interpolates_columns() {
        // hand evaluation with half-pixel centers:
        // source x-coords for dst cols 0..4 are -0.25, 0.25, 0.75, 1.25
        // clamped to [0,1], giving column values 0, 0.25, 0.75, 1
        let t = Tensor::from_vec(&[1, 2, 2], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let f = Frame::new(t, Space::Storage).unwrap();
        let r = resize(&f, 2, 4).unwrap();
        let expect = [0.0f64, 0.25, 0.75, 1.0];
        for y in 0..2 {
            for (x, e) in expect.iter().enumerate() {
                assert!((r.tensor().at3(0, y, x) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resize_rejects_degenerate_target() {
        let f = rgb_const(0.0, 0.0, 0.0);
        assert!(resize(&f, 0, 4).is_err());
    }

    #[test]
    fn blank_frame_is_deterministic_zeros() {
        let a = blank_frame::<f32>(3, 256, 256).unwrap();
        assert_eq!(a.tensor().shape(), &[3, 256, 256]);
        assert!(a.tensor().iter().all(|&v| v == 0.0));
        let b = blank_frame::<f32>(1, 8, 8).unwrap();
        assert!(b.tensor().iter().all(|&v| v == 0.0));
        assert_eq!(blank_frame::<f32>(3, 8, 8).unwrap(), blank_frame::<f32>(3, 8, 8).unwrap());
        assert!(blank_frame::<f32>(2, 8, 8).is_err());
    }

    #[test]
    fn png_round_trip_preserves_binary_values() {
        let dir = std::env::temp_dir().join("tcvc_img_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bin.png");
        let t = Tensor::from_vec(&[1, 2, 2], vec![0.0f32, 1.0, 1.0, 0.0]).unwrap();
        let f = Frame::new(t, Space::Storage).unwrap();
        save_png(&f, &path).unwrap();
        let back = load_png::<f32>(&path).unwrap();
        assert_eq!(f.tensor().data(), back.tensor().data());
        std::fs::remove_file(&path).ok();
    }
}
