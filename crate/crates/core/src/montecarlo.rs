//! Deterministic parallel reduction over sample paths.
//!
//! Paths are grouped into fixed blocks of [`BLOCK`] consecutive indices. Each
//! block is summed sequentially in index order, and the block sums are then
//! added in block order. The summation tree depends only on the number of
//! paths, so results are bit-identical for any worker count.

use rayon::prelude::*;

use crate::error::Result;

pub const BLOCK: usize = 64;

/// Sums the per-path contributions `per_path(i, acc)` for `i in 0..n_paths`
/// into a vector of length `width`. `per_path` adds into `acc`.
pub fn ordered_sum<F>(n_paths: usize, width: usize, per_path: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    let n_blocks = n_paths.div_ceil(BLOCK);
    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; width];
            let mut path = vec![0.0; width];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                path.fill(0.0);
                per_path(i, &mut path)?;
                for (a, p) in acc.iter_mut().zip(&path) {
                    *a += p;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; width];
    for block in &blocks {
        for (t, v) in total.iter_mut().zip(block) {
            *t += v;
        }
    }
    Ok(total)
}
