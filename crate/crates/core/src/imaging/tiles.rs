use crate::error::{invalid, Result};

/// Splits a row-major `h x w` plane into non-overlapping `n x n` tiles, row-major.
pub fn tile_patches<T: Copy>(pixels: &[T], h: usize, w: usize, n: usize) -> Result<Vec<Vec<T>>> {
    if n == 0 || h % n != 0 || w % n != 0 {
        return invalid(format!("{h}x{w} cannot be tiled by {n}x{n} patches"));
    }
    if pixels.len() != h * w {
        return invalid(format!("plane {h}x{w} has {} pixels", pixels.len()));
    }
    let mut tiles = Vec::with_capacity((h / n) * (w / n));
    for ty in 0..h / n {
        for tx in 0..w / n {
            let mut tile = Vec::with_capacity(n * n);
            for y in 0..n {
                let start = (ty * n + y) * w + tx * n;
                tile.extend_from_slice(&pixels[start..start + n]);
            }
            tiles.push(tile);
        }
    }
    Ok(tiles)
}

/// Inverse of [`tile_patches`].
pub fn reassemble_patches<T: Copy + Default>(
    tiles: &[Vec<T>],
    h: usize,
    w: usize,
    n: usize,
) -> Result<Vec<T>> {
    if n == 0 || h % n != 0 || w % n != 0 || tiles.len() != (h / n) * (w / n) {
        return invalid(format!(
            "{} tiles of {n}x{n} do not cover {h}x{w}",
            tiles.len()
        ));
    }
    let mut out = vec![T::default(); h * w];
    let per_row = w / n;
    for (t, tile) in tiles.iter().enumerate() {
        if tile.len() != n * n {
            return invalid(format!("tile {t} has {} pixels, expected {}", tile.len(), n * n));
        }
        let (ty, tx) = (t / per_row, t % per_row);
        for y in 0..n {
            let start = (ty * n + y) * w + tx * n;
            out[start..start + n].copy_from_slice(&tile[y * n..(y + 1) * n]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tile_counts() {
        let img = vec![0u8; 96 * 96];
        assert_eq!(tile_patches(&img, 96, 96, 16).unwrap().len(), 36);
        let img = vec![0u8; 32 * 32];
        assert_eq!(tile_patches(&img, 32, 32, 16).unwrap().len(), 4);
        assert!(tile_patches(&img, 32, 32, 12).is_err());
    }

    #[test]
    fn tiles_are_row_major() {
        let img: Vec<u32> = (0..16).collect();
        let tiles = tile_patches(&img, 4, 4, 2).unwrap();
        assert_eq!(tiles[0], vec![0, 1, 4, 5]);
        assert_eq!(tiles[1], vec![2, 3, 6, 7]);
        assert_eq!(tiles[3], vec![10, 11, 14, 15]);
    }

    proptest! {
        #[test]
        fn reassemble_is_identity(rows in 1usize..5, cols in 1usize..5, n in 1usize..6, seed in any::<u64>()) {
            let (h, w) = (rows * n, cols * n);
            let img: Vec<f64> = (0..h * w).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 999.0).collect();
            let tiles = tile_patches(&img, h, w, n).unwrap();
            prop_assert_eq!(tiles.len(), rows * cols);
            prop_assert_eq!(reassemble_patches(&tiles, h, w, n).unwrap(), img);
        }
    }
}
