//! Independent reference implementations kept as verification oracles.
//!
//! Nothing in the production pipeline calls into this module; the test
//! suites compare pipeline output against it. The reference Canny shares the
//! pinned conventions of [`crate::imaging::canny`] (replicate borders, blur
//! radius `ceil(3 sigma)`, magnitude scaled by `4ary sqrt 2`, one-sided
//! non-maximum tie-break, 8-connected hysteresis) but is written the slow
//! way: direct 2D convolutions, angle-based sector quantization via `atan2`,
//! and a breadth-first queue for hysteresis.

use std::collections::VecDeque;

use crate::imaging::{CannyParams, Frame, Space};
use crate::tensor::Tensor;

fn clamp(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

fn grey_of(frame: &Frame<f64>) -> Vec<Vec<f64>> {
    let (h, w) = (frame.height(), frame.width());
    let mut out = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            out[y][x] = if frame.channels() == 3 {
                0.299 * frame.tensor().at3(0, y, x)
                    + 0.587 * frame.tensor().at3(1, y, x)
                    + 0.114 * frame.tensor().at3(2, y, x)
            } else {
                frame.tensor().at3(0, y, x)
            };
        }
    }
    out
}

fn convolve_replicate(img: &[Vec<f64>], kernel: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = img.len();
    let w = img[0].len();
    let kh = kernel.len();
    let kw = kernel[0].len();
    let (ry, rx) = (kh as isize / 2, kw as isize / 2);
    let mut out = vec![vec![0.0; w]; h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in 0..kh as isize {
                for kx in 0..kw as isize {
                    let sy = clamp(y + ky - ry, h);
                    let sx = clamp(x + kx - rx, w);
                    acc += kernel[ky as usize][kx as usize] * img[sy][sx];
                }
            }
            out[y as usize][x as usize] = acc;
        }
    }
    out
}

/// Reference Canny line-art synthesis; output convention matches the
/// production operation (strokes 0 on background 1, storage space).
pub fn reference_canny(frame: &Frame<f64>, params: &CannyParams) -> Frame<f64> {
    let (h, w) = (frame.height(), frame.width());
    assert!(h >= 3 && w >= 3, "reference canny needs at least 3x3");
    let grey = grey_of(frame);

    // full 2D gaussian kernel
    let radius = (3.0 * params.sigma).ceil().max(1.0) as isize;
    let size = (2 * radius + 1) as usize;
    let mut kernel = vec![vec![0.0; size]; size];
    let mut sum = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * params.sigma * params.sigma)).exp();
            kernel[(dy + radius) as usize][(dx + radius) as usize] = v;
            sum += v;
        }
    }
    for row in &mut kernel {
        for v in row {
            *v /= sum;
        }
    }
    let blurred = convolve_replicate(&grey, &kernel);

    let sobel_x = vec![
        vec![-1.0, 0.0, 1.0],
        vec![-2.0, 0.0, 2.0],
        vec![-1.0, 0.0, 1.0],
    ];
    let sobel_y = vec![
        vec![-1.0, -2.0, -1.0],
        vec![0.0, 0.0, 0.0],
        vec![1.0, 2.0, 1.0],
    ];
    let gx = convolve_replicate(&blurred, &sobel_x);
    let gy = convolve_replicate(&blurred, &sobel_y);

    let norm = 4.0 * std::f64::consts::SQRT_2;
    let mut mag = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            let m = (gx[y][x] * gx[y][x] + gy[y][x] * gy[y][x]).sqrt() / norm;
            mag[y][x] = (m * 1e6).round() / 1e6;
        }
    }

    // angle-quantized non-maximum suppression
    let mag_at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize][x as usize]
        }
    };
    let mut thin = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            if mag[y][x] == 0.0 {
                continue;
            }
            let mut theta = gy[y][x].atan2(gx[y][x]).to_degrees();
            if theta < 0.0 {
                theta += 180.0;
            }
            if theta >= 180.0 {
                theta -= 180.0;
            }
            let (fdx, fdy) = if !(22.5..157.5).contains(&theta) {
                (1isize, 0isize)
            } else if theta < 67.5 {
                (1, 1)
            } else if theta < 112.5 {
                (0, 1)
            } else {
                (1, -1)
            };
            let fwd = mag_at(y as isize + fdy, x as isize + fdx);
            let back = mag_at(y as isize - fdy, x as isize - fdx);
            if mag[y][x] > back && mag[y][x] >= fwd {
                thin[y][x] = mag[y][x];
            }
        }
    }

    // BFS hysteresis from strong pixels
    let mut edge = vec![vec![false; w]; h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if thin[y][x] >= params.high && !edge[y][x] {
                edge[y][x] = true;
                queue.push_back((y, x));
                while let Some((cy, cx)) = queue.pop_front() {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            let (ny, nx) = (cy as isize + dy, cx as isize + dx);
                            if (dy == 0 && dx == 0)
                                || ny < 0
                                || nx < 0
                                || ny >= h as isize
                                || nx >= w as isize
                            {
                                continue;
                            }
                            let (ny, nx) = (ny as usize, nx as usize);
                            if !edge[ny][nx] && thin[ny][nx] >= params.low {
                                edge[ny][nx] = true;
                                queue.push_back((ny, nx));
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = Tensor::zeros(&[1, h, w]);
    for y in 0..h {
        for x in 0..w {
            out.set3(0, y, x, if edge[y][x] { 0.0 } else { 1.0 });
        }
    }
    Frame::new(out, Space::Storage).expect("reference canny output")
}

/// Synthetic corpus (all at most 64x64) used for implementation/reference
/// agreement checks.
pub fn canny_corpus() -> Vec<(String, Frame<f64>)> {
    use crate::rng::{normal, stream};

    let mut corpus: Vec<(String, Frame<f64>)> = Vec::new();
    fn entry(name: &str, t: Tensor<f64>) -> (String, Frame<f64>) {
        (name.into(), Frame::new(t, Space::Storage).unwrap())
    }
    let mut push = |name: &str, t: Tensor<f64>| corpus.push(entry(name, t));

    push("constant", Tensor::full(&[1, 32, 32], 0.5));

    let mut t = Tensor::zeros(&[1, 16, 16]);
    for y in 0..16 {
        for x in 8..16 {
            t.set3(0, y, x, 1.0);
        }
    }
    push("vertical_step", t);

    let mut t = Tensor::zeros(&[1, 24, 24]);
    for y in 12..24 {
        for x in 0..24 {
            t.set3(0, y, x, 1.0);
        }
    }
    push("horizontal_step", t);

    let mut t = Tensor::zeros(&[1, 32, 32]);
    for y in 0..32 {
        for x in 0..32 {
            if x > y {
                t.set3(0, y, x, 1.0);
            }
        }
    }
    push("diagonal_step", t);

    let mut t = Tensor::zeros(&[1, 16, 16]);
    for y in 0..16 {
        for x in 0..16 {
            if (x + y) % 2 == 0 {
                t.set3(0, y, x, 1.0);
            }
        }
    }
    push("checkerboard_1px", t);

    let mut t = Tensor::zeros(&[1, 16, 16]);
    for y in 0..16 {
        for x in 0..16 {
            if ((x / 4) + (y / 4)) % 2 == 0 {
                t.set3(0, y, x, 1.0);
            }
        }
    }
    push("checkerboard_4px", t);

    let mut t = Tensor::full(&[1, 32, 32], 1.0);
    for y in 0..32 {
        for x in 0..32 {
            let (dy, dx) = (y as f64 - 15.5, x as f64 - 15.5);
            if dy * dy + dx * dx <= 100.0 {
                t.set3(0, y, x, 0.1);
            }
        }
    }
    push("disk", t);

    let mut t = Tensor::full(&[1, 32, 32], 1.0);
    for i in 6..26 {
        t.set3(0, 6, i, 0.0);
        t.set3(0, 25, i, 0.0);
        t.set3(0, i, 6, 0.0);
        t.set3(0, i, 25, 0.0);
    }
    push("square_outline", t);

    let mut t = Tensor::zeros(&[1, 64, 64]);
    for y in 0..64 {
        for x in 0..64 {
            t.set3(0, y, x, x as f64 / 63.0);
        }
    }
    push("slow_ramp", t);

    let mut t = Tensor::full(&[1, 32, 32], 0.9);
    for y in 0..32 {
        for x in 0..32 {
            if (8..12).contains(&x) || (20..24).contains(&x) {
                t.set3(0, y, x, 0.2);
            }
        }
    }
    push("vertical_bars", t);

    let mut t = Tensor::full(&[1, 32, 32], 1.0);
    for i in 0..32 {
        t.set3(0, 15, i, 0.0);
        t.set3(0, i, 15, 0.0);
    }
    push("cross", t);

    // smooth random field: coarse seeded noise upscaled bilinearly
    let mut rng = stream(42, &[0xC0DE]);
    let mut coarse = Tensor::zeros(&[1, 5, 5]);
    for v in coarse.data_mut() {
        *v = (0.5 + 0.35 * normal::<f64, _>(&mut rng)).clamp(0.0, 1.0);
    }
    let coarse = Frame::new(coarse, Space::Storage).unwrap();
    let smooth = crate::imaging::resize(&coarse, 40, 40).unwrap();
    push("smooth_blobs", smooth.into_tensor());

    // an rgb image exercising the luminance path
    let mut t = Tensor::zeros(&[3, 20, 20]);
    for y in 0..20 {
        for x in 0..20 {
            let left = x < 10;
            t.set3(0, y, x, if left { 0.9 } else { 0.1 });
            t.set3(1, y, x, if left { 0.2 } else { 0.8 });
            t.set3(2, y, x, 0.5);
        }
    }
    push("rgb_split", t);

    corpus
}

/// Fraction of pixels on which two equal-sized line-art frames disagree.
pub fn pixel_disagreement(a: &Frame<f64>, b: &Frame<f64>) -> f64 {
    assert_eq!(a.tensor().shape(), b.tensor().shape());
    let total = a.tensor().len() as f64;
    let diff = a
        .tensor()
        .iter()
        .zip(b.tensor().iter())
        .filter(|(x, y)| (**x < 0.5) != (**y < 0.5))
        .count();
    diff as f64 / total
}
