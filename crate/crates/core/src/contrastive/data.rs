use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image_io::Image;

pub const COLORS: [(&str, [u8; 3]); 8] = [
    ("red", [230, 40, 40]),
    ("green", [40, 200, 60]),
    ("blue", [50, 70, 235]),
    ("yellow", [235, 220, 40]),
    ("magenta", [220, 50, 210]),
    ("cyan", [40, 215, 220]),
    ("orange", [245, 140, 30]),
    ("white", [245, 245, 245]),
];
pub const SHAPES: [&str; 4] = ["square", "circle", "triangle", "cross"];
pub const SIZES: [&str; 2] = ["small", "large"];

/// A generated image with its caption as token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    /// `[color, shape, size]`, offset into one shared vocabulary.
    pub tokens: Vec<usize>,
}

/// Deterministic stream of one colored shape on a faintly striped gray background,
/// captioned by color, shape and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticPairs {
    pub seed: u64,
    pub image_size: usize,
}

impl SyntheticPairs {
    pub const VOCAB: usize = COLORS.len() + SHAPES.len() + SIZES.len();

    pub fn new(seed: u64, image_size: usize) -> Self {
        assert!(image_size >= 8, "synthetic images need at least 8x8 pixels");
        Self { seed, image_size }
    }

    pub fn caption(tokens: &[usize]) -> String {
        let shape_base = COLORS.len();
        let size_base = shape_base + SHAPES.len();
        tokens
            .iter()
            .map(|&t| match t {
                t if t < shape_base => COLORS[t].0,
                t if t < size_base => SHAPES[t - shape_base],
                t => SIZES[t - size_base],
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// The `index`-th pair; independent of any other index.
    pub fn sample(&self, index: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let color = rng.gen_range(0..COLORS.len());
        let shape = rng.gen_range(0..SHAPES.len());
        let size = rng.gen_range(0..SIZES.len());

        let s = self.image_size;
        let mut data = Vec::with_capacity(s * s * 3);
        // Faint two-pixel stripes: every background patch looks alike, like sky or a wall.
        let base: u8 = rng.gen_range(100..140);
        for _ in 0..s {
            for x in 0..s {
                let stripe = if x % 4 < 2 { 12 } else { 0 };
                let jitter: u8 = rng.gen_range(0..4);
                data.extend([base + stripe + jitter; 3]);
            }
        }
        let mut image = Image::new(s, s, data).expect("sized above");

        let half = if size == 0 { s as f64 * 0.16 } else { s as f64 * 0.3 };
        let cx = rng.gen_range(half..s as f64 - half);
        let cy = rng.gen_range(half..s as f64 - half);
        let rgb = COLORS[color].1;
        for y in 0..s {
            for x in 0..s {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let inside = match shape {
                    0 => dx.abs() <= half && dy.abs() <= half,
                    1 => dx * dx + dy * dy <= half * half,
                    2 => dy <= half && dy >= -half && dx.abs() <= (dy + half) * 0.5,
                    _ => (dx.abs() <= half && dy.abs() <= half * 0.3) || (dy.abs() <= half && dx.abs() <= half * 0.3),
                };
                if inside {
                    image.set_pixel(x, y, rgb);
                }
            }
        }
        let tokens = vec![color, COLORS.len() + shape, COLORS.len() + SHAPES.len() + size];
        Sample { image, tokens }
    }
}
