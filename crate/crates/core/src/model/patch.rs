use cgmrag_numerics::Tensor;

use super::PatchConfig;
use crate::error::Result;

/// `ceil((len - patch_len) / stride) + 1`.
pub fn patch_count(len: usize, patch_len: usize, stride: usize) -> usize {
    (len - patch_len).div_ceil(stride) + 1
}

/// First sample of every patch. A final patch that would run past the end is
/// shifted left so it ends on the last sample.
pub fn patch_starts(len: usize, cfg: PatchConfig) -> Result<Vec<usize>> {
    cfg.validate(len)?;
    let n = patch_count(len, cfg.patch_len, cfg.stride);
    Ok((0..n).map(|i| (i * cfg.stride).min(len - cfg.patch_len)).collect())
}

/// `[N, patch_len]` matrix of patches of `x`.
pub fn patchify(x: &[f64], cfg: PatchConfig) -> Result<Tensor> {
    let starts = patch_starts(x.len(), cfg)?;
    let data: Vec<f64> = starts
        .iter()
        .flat_map(|&s| x[s..s + cfg.patch_len].iter().copied())
        .collect();
    Ok(Tensor::matrix(starts.len(), cfg.patch_len, data)?)
}
