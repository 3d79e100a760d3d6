//! Drop blurred frames from a sequence and subsample the rest.
//!
//! cargo run --example preprocess_frames

use adgan::data::synth::texture;
use adgan::data::{clean_sequence, sharpness_quantile, variance_of_laplacian, FrameSequence};
use adgan::datamodel::ImageTensor;
use rand::SeedableRng;

/// 3x3 box blur with wrap-around borders.
fn blur(img: &ImageTensor) -> ImageTensor {
    let s = img.size();
    let mut out = Vec::with_capacity(img.pixels().len());
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                let mut acc = 0.0;
                for dy in [s - 1, 0, 1] {
                    for dx in [s - 1, 0, 1] {
                        acc += img.at(c, (y + dy) % s, (x + dx) % s);
                    }
                }
                out.push(acc / 9.0);
            }
        }
    }
    ImageTensor::new(s, out).expect("same range")
}

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let images: Vec<ImageTensor> = (0..30)
        .map(|i| {
            let t = texture(&mut rng, 32, 3.0);
            if i % 4 == 3 {
                blur(&blur(&t))
            } else {
                t
            }
        })
        .collect();
    let seq = FrameSequence::from_images(images);
    for f in seq.frames().iter().take(4) {
        println!("frame {} sharpness {:.5}", f.index, variance_of_laplacian(&f.image));
    }
    let threshold = sharpness_quantile(&seq, 0.3).expect("nonempty");
    let kept = clean_sequence(seq, Some(threshold), 2);
    println!("threshold {threshold:.5}: kept frames {:?} (stride {})", kept.indices(), kept.fps_stride);
}
