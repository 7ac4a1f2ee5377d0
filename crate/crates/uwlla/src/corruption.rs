//! Seeded image corruption: block occlusion, random pixel replacement, and
//! their combination. Every operation is a pure function of (image, level,
//! seed), returns the corrupted image together with a 0/1 provenance mask of
//! the positions it touched, and keeps all intensities in `[0, 1]`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::ImageMatrix;

/// Which corruption to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    Occlusion,
    Pixel,
    Mixed,
}

/// Application order for [`CorruptionKind::Mixed`]. The default puts pixels
/// first so the occluded block ends up as pure occluder content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixedOrder {
    #[default]
    PixelsFirst,
    OcclusionFirst,
}

/// A reusable corruption recipe. `occluder = None` falls back to
/// [`builtin_occluder`] for the kinds that need one.
#[derive(Debug, Clone)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Corrupted fraction, in `[0, 1)`.
    pub level: f64,
    pub seed: u64,
    pub occluder: Option<ImageMatrix>,
    pub mixed_order: MixedOrder,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, level: f64, seed: u64) -> Self {
        CorruptionSpec { kind, level, seed, occluder: None, mixed_order: MixedOrder::default() }
    }

    pub fn with_occluder(mut self, occluder: ImageMatrix) -> Self {
        self.occluder = Some(occluder);
        self
    }

    /// Corrupt `img` according to the recipe; returns the corrupted image
    /// and the provenance mask.
    pub fn apply(&self, img: &ImageMatrix) -> Result<(ImageMatrix, ImageMatrix)> {
        if !(self.level.is_finite() && (0.0..1.0).contains(&self.level)) {
            return Err(Error::InvalidParameter(format!(
                "corruption level must lie in [0, 1), got {}",
                self.level
            )));
        }
        let fallback;
        let occluder = match &self.occluder {
            Some(o) => o,
            None => {
                fallback = builtin_occluder();
                &fallback
            }
        };
        match self.kind {
            CorruptionKind::Occlusion => occlude(img, self.level, occluder, self.seed),
            CorruptionKind::Pixel => pixel_corrupt(img, self.level, self.seed),
            CorruptionKind::Mixed => {
                mixed_corrupt_with_order(img, self.level, occluder, self.seed, self.mixed_order)
            }
        }
    }
}

/// Deterministic high-frequency 64x64 texture used as the default occluder.
/// Built from fixed sinusoids (no randomness), so the block content is the
/// same on every run and every platform.
pub fn builtin_occluder() -> ImageMatrix {
    ImageMatrix::from_fn_clamped(64, 64, |i, j| {
        let x = i as f64;
        let y = j as f64;
        0.5 + 0.2 * (1.9 * x + 0.6 * y).sin()
            + 0.15 * (2.7 * y - 0.8 * x).cos()
            + 0.15 * (0.35 * x * y).sin()
    })
}

/// Paste a resampled copy of `occluder` over a seeded uniformly random block.
///
/// The block side is `z = round(sqrt(m1 * m2 * level))`; the occluder is
/// resampled to `z x z` by bilinear interpolation, and the top-left corner is
/// drawn uniformly over all positions that keep the block inside the image
/// (row first, then column). `z = 0` leaves the image untouched. Returns the
/// corrupted image and a mask that is 1 exactly on the block.
pub fn occlude(
    img: &ImageMatrix,
    level: f64,
    occluder: &ImageMatrix,
    seed: u64,
) -> Result<(ImageMatrix, ImageMatrix)> {
    if !level.is_finite() || level < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "occlusion level must be a nonnegative finite real, got {level}"
        )));
    }
    let (m1, m2) = img.shape();
    let z = (m1 as f64 * m2 as f64 * level).sqrt().round() as usize;
    let mut mask = ImageMatrix::zeros(m1, m2);
    if z == 0 {
        return Ok((img.clone(), mask));
    }
    if z > m1 || z > m2 {
        return Err(Error::InvalidParameter(format!(
            "occluder block side {z} (level {level}) does not fit a {m1}x{m2} image"
        )));
    }
    let patch = occluder.resize_bilinear(z, z)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row0 = rng.gen_range(0..=(m1 - z));
    let col0 = rng.gen_range(0..=(m2 - z));
    let mut out = img.clone();
    for i in 0..z {
        for j in 0..z {
            out.data_mut()[(row0 + i, col0 + j)] = patch.get(i, j);
            mask.data_mut()[(row0 + i, col0 + j)] = 1.0;
        }
    }
    Ok((out, mask))
}

/// Replace exactly `ceil(level * m1 * m2)` distinct seeded positions with
/// uniform draws from `[0, 1)`. Positions are sampled without replacement
/// over row-major linear indices; replacement values are drawn afterwards,
/// one per position in sampling order. Returns the corrupted image and a
/// mask that is 1 exactly on the replaced positions.
pub fn pixel_corrupt(img: &ImageMatrix, level: f64, seed: u64) -> Result<(ImageMatrix, ImageMatrix)> {
    if !(level.is_finite() && (0.0..1.0).contains(&level)) {
        return Err(Error::InvalidParameter(format!(
            "pixel corruption level must lie in [0, 1), got {level}"
        )));
    }
    let (m1, m2) = img.shape();
    let m = m1 * m2;
    let count = (level * m as f64).ceil() as usize;
    let mut out = img.clone();
    let mut mask = ImageMatrix::zeros(m1, m2);
    if count == 0 {
        return Ok((out, mask));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = rand::seq::index::sample(&mut rng, m, count);
    for pos in positions.iter() {
        let (r, c) = (pos / m2, pos % m2);
        out.data_mut()[(r, c)] = rng.gen::<f64>();
        mask.data_mut()[(r, c)] = 1.0;
    }
    Ok((out, mask))
}

/// Apply pixel replacement and block occlusion at the same level, pixels
/// first (see [`mixed_corrupt_with_order`] to flip the order).
pub fn mixed_corrupt(
    img: &ImageMatrix,
    level: f64,
    occluder: &ImageMatrix,
    seed: u64,
) -> Result<(ImageMatrix, ImageMatrix)> {
    mixed_corrupt_with_order(img, level, occluder, seed, MixedOrder::PixelsFirst)
}

/// Mixed corruption with an explicit order. The master seed deterministically
/// derives one sub-seed per constituent (the pixel sub-seed is always drawn
/// first, so flipping the order moves the same two corruptions around rather
/// than re-randomizing them). The returned mask is the union of both masks.
pub fn mixed_corrupt_with_order(
    img: &ImageMatrix,
    level: f64,
    occluder: &ImageMatrix,
    seed: u64,
    order: MixedOrder,
) -> Result<(ImageMatrix, ImageMatrix)> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let pixel_seed = master.next_u64();
    let occlusion_seed = master.next_u64();
    let (corrupted, mask_a, mask_b) = match order {
        MixedOrder::PixelsFirst => {
            let (stage1, pixel_mask) = pixel_corrupt(img, level, pixel_seed)?;
            let (stage2, occ_mask) = occlude(&stage1, level, occluder, occlusion_seed)?;
            (stage2, pixel_mask, occ_mask)
        }
        MixedOrder::OcclusionFirst => {
            let (stage1, occ_mask) = occlude(img, level, occluder, occlusion_seed)?;
            let (stage2, pixel_mask) = pixel_corrupt(&stage1, level, pixel_seed)?;
            (stage2, occ_mask, pixel_mask)
        }
    };
    let (m1, m2) = img.shape();
    let union = ImageMatrix::from_fn_clamped(m1, m2, |i, j| mask_a.get(i, j).max(mask_b.get(i, j)));
    Ok((corrupted, union))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;

    fn gradient_image(rows: usize, cols: usize) -> ImageMatrix {
        ImageMatrix::from_fn_clamped(rows, cols, |i, j| {
            (i as f64 + j as f64) / ((rows + cols) as f64)
        })
    }

    fn mask_count(mask: &ImageMatrix) -> usize {
        mask.to_vec_row_major().iter().filter(|&&v| v == 1.0).count()
    }

    fn diff_count(a: &ImageMatrix, b: &ImageMatrix) -> usize {
        a.to_vec_row_major()
            .iter()
            .zip(b.to_vec_row_major())
            .filter(|&(&x, y)| x != y)
            .count()
    }

    #[test]
    fn builtin_occluder_is_stable_and_textured() {
        let a = builtin_occluder();
        let b = builtin_occluder();
        assert_eq!(a.shape(), (64, 64));
        assert_eq!(a.to_vec_row_major(), b.to_vec_row_major());
        let v = a.to_vec_row_major();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        assert!(var.sqrt() > 0.1, "texture too flat: std = {}", var.sqrt());
    }

    #[test]
    fn occlusion_block_size_96x84_level_030() {
        // z = round(sqrt(96 * 84 * 0.30)) = round(49.18...) = 49.
        let img = gradient_image(96, 84);
        let (out, mask) = occlude(&img, 0.30, &builtin_occluder(), 7).unwrap();
        assert_eq!(mask_count(&mask), 49 * 49);

        // The mask is one contiguous 49x49 block, and the block content is
        // exactly the resampled occluder.
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for i in 0..96 {
            for j in 0..84 {
                if mask.get(i, j) == 1.0 {
                    rows.push(i);
                    cols.push(j);
                }
            }
        }
        let (r0, r1) = (*rows.iter().min().unwrap(), *rows.iter().max().unwrap());
        let (c0, c1) = (*cols.iter().min().unwrap(), *cols.iter().max().unwrap());
        assert_eq!((r1 - r0 + 1, c1 - c0 + 1), (49, 49));
        let patch = builtin_occluder().resize_bilinear(49, 49).unwrap();
        for i in 0..49 {
            for j in 0..49 {
                assert_eq!(out.get(r0 + i, c0 + j), patch.get(i, j));
            }
        }
    }

    #[test]
    fn occlusion_level_zero_is_identity() {
        let img = gradient_image(10, 8);
        let (out, mask) = occlude(&img, 0.0, &builtin_occluder(), 3).unwrap();
        assert_eq!(out.to_vec_row_major(), img.to_vec_row_major());
        assert_eq!(mask_count(&mask), 0);
    }

    #[test]
    fn occlusion_rejects_oversized_block() {
        // 24x21 at level 0.95: z = round(sqrt(504 * 0.95)) = 22 > 21.
        let img = gradient_image(24, 21);
        let err = occlude(&img, 0.95, &builtin_occluder(), 1).unwrap_err();
        assert!(err.to_string().contains("22"), "unexpected message: {err}");
    }

    #[test]
    fn occlusion_is_deterministic_and_seed_sensitive() {
        let img = gradient_image(30, 30);
        let occ = builtin_occluder();
        let (a, am) = occlude(&img, 0.2, &occ, 11).unwrap();
        let (b, bm) = occlude(&img, 0.2, &occ, 11).unwrap();
        assert_eq!(a.to_vec_row_major(), b.to_vec_row_major());
        assert_eq!(am.to_vec_row_major(), bm.to_vec_row_major());

        // Some pair of nearby seeds lands the block elsewhere.
        let (_, m1) = occlude(&img, 0.2, &occ, 1).unwrap();
        let (_, m2) = occlude(&img, 0.2, &occ, 2).unwrap();
        assert_ne!(m1.to_vec_row_major(), m2.to_vec_row_major());
    }

    #[test]
    fn pixel_count_10x10_level_030() {
        let img = gradient_image(10, 10);
        let (out, mask) = pixel_corrupt(&img, 0.30, 42).unwrap();
        assert_eq!(mask_count(&mask), 30);
        assert_eq!(diff_count(&out, &img), 30);
        for v in out.to_vec_row_major() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn pixel_seeds_disagree_on_positions() {
        let img = gradient_image(96, 84);
        let (_, m1) = pixel_corrupt(&img, 0.30, 1).unwrap();
        let (_, m2) = pixel_corrupt(&img, 0.30, 2).unwrap();
        assert_ne!(m1.to_vec_row_major(), m2.to_vec_row_major());
    }

    #[test]
    fn pixel_level_zero_is_identity() {
        let img = gradient_image(5, 5);
        let (out, mask) = pixel_corrupt(&img, 0.0, 9).unwrap();
        assert_eq!(out.to_vec_row_major(), img.to_vec_row_major());
        assert_eq!(mask_count(&mask), 0);
    }

    #[test]
    fn mixed_block_is_pure_occluder_and_rest_is_pixel_noise() {
        let img = gradient_image(96, 84);
        let occ = builtin_occluder();
        let (out, mask) = mixed_corrupt(&img, 0.30, &occ, 5).unwrap();

        // Recompute the constituents with the derived sub-seeds to locate
        // the block and the pixel positions.
        let mut master = ChaCha8Rng::seed_from_u64(5);
        let pixel_seed = master.next_u64();
        let occlusion_seed = master.next_u64();
        let (_, pixel_mask) = pixel_corrupt(&img, 0.30, pixel_seed).unwrap();
        let (occluded_only, occ_mask) = occlude(&img, 0.30, &occ, occlusion_seed).unwrap();

        let mut outside_diffs = 0usize;
        let mut outside_pixel_marks = 0usize;
        for i in 0..96 {
            for j in 0..84 {
                if occ_mask.get(i, j) == 1.0 {
                    // Inside the block: pure occluder content.
                    assert_eq!(out.get(i, j), occluded_only.get(i, j));
                } else {
                    if out.get(i, j) != img.get(i, j) {
                        outside_diffs += 1;
                    }
                    if pixel_mask.get(i, j) == 1.0 {
                        outside_pixel_marks += 1;
                    }
                }
                let expect = pixel_mask.get(i, j).max(occ_mask.get(i, j));
                assert_eq!(mask.get(i, j), expect);
            }
        }
        assert_eq!(outside_diffs, outside_pixel_marks);
        // ~30% of the image is pixel-corrupted; most of it lies outside the
        // 49x49 block.
        assert!(outside_pixel_marks > 1000, "only {outside_pixel_marks} outside marks");
    }

    #[test]
    fn mixed_level_zero_is_identity() {
        let img = gradient_image(12, 9);
        let (out, mask) = mixed_corrupt(&img, 0.0, &builtin_occluder(), 1).unwrap();
        assert_eq!(out.to_vec_row_major(), img.to_vec_row_major());
        assert_eq!(mask_count(&mask), 0);
    }

    #[test]
    fn mixed_is_deterministic() {
        let img = gradient_image(20, 20);
        let occ = builtin_occluder();
        let (a, am) = mixed_corrupt(&img, 0.25, &occ, 77).unwrap();
        let (b, bm) = mixed_corrupt(&img, 0.25, &occ, 77).unwrap();
        assert_eq!(a.to_vec_row_major(), b.to_vec_row_major());
        assert_eq!(am.to_vec_row_major(), bm.to_vec_row_major());
    }

    #[test]
    fn spec_dispatch_and_builtin_fallback() {
        let img = gradient_image(16, 16);
        let spec = CorruptionSpec::new(CorruptionKind::Occlusion, 0.2, 3);
        let (a, _) = spec.apply(&img).unwrap();
        let (b, _) = occlude(&img, 0.2, &builtin_occluder(), 3).unwrap();
        assert_eq!(a.to_vec_row_major(), b.to_vec_row_major());

        let bad = CorruptionSpec::new(CorruptionKind::Pixel, 1.0, 3);
        assert!(bad.apply(&img).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pixel_mask_count_matches_ceiling(level in 0.0f64..0.99, seed in 0u64..1000) {
            let img = gradient_image(9, 7);
            let (out, mask) = pixel_corrupt(&img, level, seed).unwrap();
            let expected = (level * 63.0).ceil() as usize;
            prop_assert_eq!(mask_count(&mask), expected);
            for v in out.to_vec_row_major() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn occlusion_mask_is_exactly_z_squared(level in 0.0f64..0.9, seed in 0u64..1000) {
            let img = gradient_image(12, 12);
            let z = (144.0 * level).sqrt().round() as usize;
            prop_assume!(z <= 12);
            let (_, mask) = occlude(&img, level, &builtin_occluder(), seed).unwrap();
            prop_assert_eq!(mask_count(&mask), z * z);
        }
    }
}
