use std::sync::Arc;

use super::DepthImage;
use crate::nn::{Shape3, Tensor3};

/// One preprocessed square depth frame with values in `[0, 1]`. Shared so
/// consecutive replay records can point at the same frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub size: usize,
    pub data: Arc<[f32]>,
}

/// Per-destination-cell list of `(source index, weight)`; weights sum to 1.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .filter_map(|j| {
                    let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                    (overlap > 0.0).then_some((j, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Box-filter resize: every output pixel is the area-weighted mean of the
/// source pixels its footprint covers.
pub fn area_resize(src: &[f64], src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Vec<f64> {
    assert_eq!(src.len(), src_w * src_h);
    let wx = area_weights(src_w, dst_w);
    let wy = area_weights(src_h, dst_h);
    // horizontal pass, then vertical
    let mut rows = vec![0.0; src_h * dst_w];
    for y in 0..src_h {
        let line = &src[y * src_w..(y + 1) * src_w];
        for (x, taps) in wx.iter().enumerate() {
            rows[y * dst_w + x] = taps.iter().map(|&(j, w)| w * line[j]).sum();
        }
    }
    let mut out = vec![0.0; dst_w * dst_h];
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..dst_w {
            out[y * dst_w + x] = taps.iter().map(|&(j, w)| w * rows[j * dst_w + x]).sum();
        }
    }
    out
}

/// Resizes to `size x size` and normalizes by the far clip into `[0, 1]`.
pub fn preprocess(img: &DepthImage, size: usize) -> Frame {
    let resized = area_resize(&img.data, img.width, img.height, size, size);
    let data: Vec<f32> = resized.iter().map(|&d| (d / img.far_clip).clamp(0.0, 1.0) as f32).collect();
    Frame { size, data: data.into() }
}

/// The last `depth` frames, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    frames: Vec<Frame>,
}

impl FrameStack {
    /// A stack filled with copies of the first frame of a flight.
    pub fn init(frame: Frame, depth: usize) -> Self {
        assert!(depth > 0);
        Self { frames: vec![frame; depth] }
    }

    /// Drops the oldest frame and appends `frame`.
    pub fn push(&self, frame: Frame) -> Self {
        assert_eq!(frame.size, self.frames[0].size, "frame size changed mid-flight");
        let mut frames = Vec::with_capacity(self.frames.len());
        frames.extend(self.frames[1..].iter().cloned());
        frames.push(frame);
        Self { frames }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Network input of shape `size x size x depth`, channel 0 the oldest.
    pub fn to_tensor(&self) -> Tensor3<f32> {
        let size = self.frames[0].size;
        let depth = self.frames.len();
        let mut data = vec![0.0f32; size * size * depth];
        for (c, f) in self.frames.iter().enumerate() {
            for (i, &v) in f.data.iter().enumerate() {
                data[i * depth + c] = v;
            }
        }
        Tensor3::from_vec(Shape3::new(size, size, depth), data).expect("consistent frame sizes")
    }
}
