//! Sharpness scoring and frame-sequence cleanup.

use crate::datamodel::ImageTensor;

/// One frame of a video sequence and its position in the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub image: ImageTensor,
}

/// Ordered frames with strictly increasing source indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    /// Spacing between kept frames, in source frames.
    pub fps_stride: usize,
}

impl FrameSequence {
    /// Returns `None` if source indices are not strictly increasing.
    pub fn new(frames: Vec<Frame>) -> Option<Self> {
        if frames.windows(2).any(|w| w[0].index >= w[1].index) {
            return None;
        }
        Some(Self {
            frames,
            fps_stride: 1,
        })
    }

    /// Frames numbered `0..n` in order.
    pub fn from_images(images: Vec<ImageTensor>) -> Self {
        let frames = images
            .into_iter()
            .enumerate()
            .map(|(index, image)| Frame { index, image })
            .collect();
        Self {
            frames,
            fps_stride: 1,
        }
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn indices(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.index).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn into_images(self) -> Vec<ImageTensor> {
        self.frames.into_iter().map(|f| f.image).collect()
    }
}

/// Variance of the 4-neighbour Laplacian response over the channel-mean
/// grayscale image. Borders wrap around, so cyclic shifts leave the value
/// unchanged.
pub fn variance_of_laplacian(image: &ImageTensor) -> f64 {
    let n = image.size();
    let gray = image.grayscale();
    let at = |y: usize, x: usize| gray[y * n + x];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 0..n {
        let (up, down) = ((y + n - 1) % n, (y + 1) % n);
        for x in 0..n {
            let (left, right) = ((x + n - 1) % n, (x + 1) % n);
            let r = at(up, x) + at(down, x) + at(y, left) + at(y, right) - 4.0 * at(y, x);
            sum += r;
            sum_sq += r * r;
        }
    }
    let count = (n * n) as f64;
    let mean = sum / count;
    (sum_sq / count - mean * mean).max(0.0)
}

/// Keep frames whose sharpness is at least `threshold`, preserving order.
pub fn filter_blurred(frames: FrameSequence, threshold: f64) -> FrameSequence {
    let fps_stride = frames.fps_stride;
    let kept = frames
        .frames
        .into_iter()
        .filter(|f| variance_of_laplacian(&f.image) >= threshold)
        .collect();
    FrameSequence {
        frames: kept,
        fps_stride,
    }
}

/// Keep positions `0, stride, 2*stride, ...` of the input ordering.
///
/// # Panics
/// If `stride` is zero.
pub fn subsample_frames(frames: FrameSequence, stride: usize) -> FrameSequence {
    assert!(stride >= 1, "stride must be at least 1");
    let fps_stride = frames.fps_stride * stride;
    let kept = frames.frames.into_iter().step_by(stride).collect();
    FrameSequence {
        frames: kept,
        fps_stride,
    }
}

/// The `q`-quantile (0..=1, nearest rank) of frame sharpness; the default
/// blur threshold uses `q = 0.1`.
pub fn sharpness_quantile(frames: &FrameSequence, q: f64) -> Option<f64> {
    if frames.is_empty() {
        return None;
    }
    let mut scores: Vec<f64> = frames
        .frames
        .iter()
        .map(|f| variance_of_laplacian(&f.image))
        .collect();
    scores.sort_by(f64::total_cmp);
    let rank = (q.clamp(0.0, 1.0) * (scores.len() - 1) as f64).round() as usize;
    Some(scores[rank])
}

/// Blur filtering followed by temporal subsampling.
pub fn clean_sequence(frames: FrameSequence, threshold: Option<f64>, stride: usize) -> FrameSequence {
    let threshold = threshold
        .or_else(|| sharpness_quantile(&frames, 0.1))
        .unwrap_or(0.0);
    subsample_frames(filter_blurred(frames, threshold), stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_image(n: usize, f: impl Fn(usize, usize) -> f32) -> ImageTensor {
        let mut px = vec![0.0; 3 * n * n];
        for c in 0..3 {
            for y in 0..n {
                for x in 0..n {
                    px[(c * n + y) * n + x] = f(y, x);
                }
            }
        }
        ImageTensor::new(n, px).unwrap()
    }

    fn checkerboard(n: usize) -> ImageTensor {
        gray_image(n, |y, x| if (x + y) % 2 == 0 { 1.0 } else { -1.0 })
    }

    /// 3x3 periodic box filter, the blur used by the ordering check.
    fn box_blur(img: &ImageTensor) -> ImageTensor {
        let n = img.size();
        gray_image(n, |y, x| {
            let mut s = 0.0;
            for dy in [n - 1, 0, 1] {
                for dx in [n - 1, 0, 1] {
                    s += img.at(0, (y + dy) % n, (x + dx) % n);
                }
            }
            s / 9.0
        })
    }

    #[test]
    fn constant_image_has_zero_variance() {
        assert_eq!(variance_of_laplacian(&gray_image(8, |_, _| 0.3)), 0.0);
    }

    #[test]
    fn impulse_matches_hand_convolution() {
        // Response is -4 at the impulse, 1 at its four neighbours, 0 elsewhere:
        // mean 0, variance (16 + 4) / n^2.
        let n = 9;
        let img = gray_image(n, |y, x| if y == 4 && x == 4 { 1.0 } else { 0.0 });
        let expected = 20.0 / (n * n) as f64;
        assert!((variance_of_laplacian(&img) - expected).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_sharper_than_blurred() {
        // Laplacian of a +-1 checkerboard is -8s (variance 64); the 3x3 box
        // blur scales the board by 1/9 (variance 64/81).
        let board = checkerboard(8);
        let sharp = variance_of_laplacian(&board);
        let blurred = variance_of_laplacian(&box_blur(&board));
        assert!((sharp - 64.0).abs() < 1e-9);
        assert!((blurred - 64.0 / 81.0).abs() < 1e-6);
        assert!(sharp > blurred);
    }

    #[test]
    fn cyclic_shift_invariance() {
        let n = 12;
        let f = |y: usize, x: usize| {
            let t = std::f64::consts::TAU;
            (0.5 * (t * x as f64 / 6.0).sin() * (t * y as f64 / 4.0).cos()) as f32
        };
        let a = variance_of_laplacian(&gray_image(n, f));
        let b = variance_of_laplacian(&gray_image(n, |y, x| f((y + 5) % n, (x + 3) % n)));
        assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    fn mixed_sequence() -> FrameSequence {
        let board = checkerboard(8);
        FrameSequence::from_images(vec![box_blur(&board), board])
    }

    #[test]
    fn filter_thresholds() {
        let seq = mixed_sequence();
        assert_eq!(filter_blurred(seq.clone(), 0.0), seq);
        assert!(filter_blurred(seq.clone(), f64::MAX).is_empty());
        // Scores are 64/81 and 64; anything in between keeps only the sharp frame.
        let kept = filter_blurred(seq, 10.0);
        assert_eq!(kept.indices(), vec![1]);
    }

    #[test]
    fn filter_is_idempotent() {
        let once = filter_blurred(mixed_sequence(), 1.0);
        let twice = filter_blurred(once.clone(), 1.0);
        assert_eq!(once, twice);
    }

    fn numbered(n: usize) -> FrameSequence {
        FrameSequence::from_images((0..n).map(|_| gray_image(2, |_, _| 0.0)).collect())
    }

    #[test]
    fn subsample_positions() {
        assert_eq!(subsample_frames(numbered(6), 1).indices(), (0..6).collect::<Vec<_>>());
        assert_eq!(subsample_frames(numbered(10), 5).indices(), vec![0, 5]);
        assert_eq!(subsample_frames(numbered(7), 3).indices(), vec![0, 3, 6]);
        assert_eq!(subsample_frames(numbered(10), 5).fps_stride, 5);
    }

    #[test]
    fn rejects_non_increasing_indices() {
        let img = gray_image(2, |_, _| 0.0);
        let frames = vec![
            Frame { index: 3, image: img.clone() },
            Frame { index: 3, image: img },
        ];
        assert!(FrameSequence::new(frames).is_none());
    }

    proptest::proptest! {
        #[test]
        fn subsample_composes(n in 0usize..60, a in 1usize..6, b in 1usize..6) {
            let twice = subsample_frames(subsample_frames(numbered(n), a), b);
            let once = subsample_frames(numbered(n), a * b);
            proptest::prop_assert_eq!(twice.indices(), once.indices());
        }
    }
}
