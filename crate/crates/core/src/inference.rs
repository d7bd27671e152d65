//! Sequential colorization: each generated frame becomes the condition for
//! the next, starting from a blank condition. Inference never sees ground
//! truth; the API only accepts line-art (or greyscale) input frames.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{blank_frame, save_png, Frame, Space};
use crate::networks::generator::{concat_channels, Generator};
use crate::networks::layers::Forward;
use crate::num::Scalar;
use crate::tensor::Tensor;

/// Anything that maps (input, condition) to a colorized frame. The trained
/// generator implements it; tests substitute call-recording doubles.
pub trait FrameColorizer<T: Scalar> {
    fn colorize(&mut self, input: &Frame<T>, condition: &Frame<T>) -> Result<Frame<T>>;
}

impl<T: Scalar> FrameColorizer<T> for Generator<T> {
    fn colorize(&mut self, input: &Frame<T>, condition: &Frame<T>) -> Result<Frame<T>> {
        colorize_frame(self, input, condition)
    }
}

/// One conditional generation: `G(input, condition)` in model space.
pub fn colorize_frame<T: Scalar>(
    gen: &mut Generator<T>,
    input: &Frame<T>,
    condition: &Frame<T>,
) -> Result<Frame<T>> {
    if input.channels() != 1 {
        return Err(Error::InvalidChannels {
            expected: "1".into(),
            got: input.channels(),
        });
    }
    if condition.channels() != 3 {
        return Err(Error::InvalidChannels {
            expected: "3".into(),
            got: condition.channels(),
        });
    }
    if input.height() != condition.height() || input.width() != condition.width() {
        return Err(Error::ShapeMismatch {
            op: "colorize_frame",
            left: input.tensor().shape().to_vec(),
            right: condition.tensor().shape().to_vec(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let input_b = Tensor::from_vec(&[1, 1, h, w], input.to_model().tensor().data().to_vec())?;
    let x = match gen.spec().input_channels {
        1 => input_b,
        4 => {
            let cond_b =
                Tensor::from_vec(&[1, 3, h, w], condition.to_model().tensor().data().to_vec())?;
            concat_channels(&input_b, &cond_b)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "generator expects {other} input channels"
            )))
        }
    };
    let y = gen.forward(&x, Forward::INFER);
    let out = Tensor::from_vec(&[3, h, w], y.into_data())?;
    Frame::new(out, Space::Model)
}

/// Colorize an ordered sequence: frame 0 is conditioned on a blank image,
/// frame t on the generated frame t-1.
pub fn colorize_sequence<T: Scalar, C: FrameColorizer<T>>(
    colorizer: &mut C,
    lineart_frames: &[Frame<T>],
) -> Result<Vec<Frame<T>>> {
    let first = lineart_frames.first().ok_or(Error::EmptyDataset)?;
    let mut condition = blank_frame::<T>(3, first.height(), first.width())?;
    let mut out = Vec::with_capacity(lineart_frames.len());
    for frame in lineart_frames {
        let generated = colorizer.colorize(frame, &condition)?;
        condition = generated.clone();
        out.push(generated);
    }
    Ok(out)
}

/// Tile frames row-major into one sheet image.
pub fn contact_sheet<T: Scalar>(frames: &[Frame<T>], columns: usize) -> Result<Frame<T>> {
    let first = frames.first().ok_or(Error::EmptyDataset)?;
    if columns == 0 {
        return Err(Error::InvalidSize("contact sheet needs >= 1 column".into()));
    }
    let (c, h, w) = (first.channels(), first.height(), first.width());
    for f in frames {
        if f.channels() != c || f.height() != h || f.width() != w {
            return Err(Error::ShapeMismatch {
                op: "contact_sheet",
                left: first.tensor().shape().to_vec(),
                right: f.tensor().shape().to_vec(),
            });
        }
    }
    let rows = frames.len().div_ceil(columns);
    let mut sheet = Tensor::full(&[c, rows * h, columns * w], T::one());
    for (i, f) in frames.iter().enumerate() {
        let f = f.to_storage();
        let (row, col) = (i / columns, i % columns);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    sheet.set3(ch, row * h + y, col * w + x, f.tensor().at3(ch, y, x));
                }
            }
        }
    }
    Frame::new(sheet, Space::Storage)
}

/// Render the sheet and write it as a PNG.
pub fn emit_contact_sheet<T: Scalar>(
    frames: &[Frame<T>],
    columns: usize,
    path: &Path,
) -> Result<()> {
    let sheet = contact_sheet(frames, columns)?;
    save_png(&sheet, path)
}
