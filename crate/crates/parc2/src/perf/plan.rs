//! Lowering plans: how one depthwise convolution becomes tiled patch-matrix
//! products, with exact arithmetic accounting.

use serde::Serialize;

use crate::{Error, Result};

/// Per-tile patch workspace target: tiles are sized so the gathered patch
/// block stays within this many bytes (typical L2 residency).
pub const DEFAULT_WORKSPACE_BUDGET: usize = 256 * 1024;

/// Deterministic tiling plan for one depthwise convolution shape. Per
/// channel, each tile of output positions is computed as a patch matrix of
/// unrolled receptive fields (zero-filled where the receptive field leaves
/// the input) multiplied by the kernel tap vector. Edge tiles shrink so the
/// tiles cover the output exactly.
#[derive(Clone, Debug, Serialize)]
pub struct LoweringPlan {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    /// Output rows/columns per full tile.
    pub tile_h: usize,
    pub tile_w: usize,
    /// Channels per work unit when executing in parallel.
    pub channel_block: usize,
    /// Kernel taps per output position (= kh * kw): rows of the patch block.
    pub patch_rows: usize,
    /// Output positions per full tile: columns of the patch block.
    pub patch_cols: usize,
    /// Exact multiply-accumulate count: every tap of every output element is
    /// charged, including taps that multiply padding zeros.
    pub macs: u64,
    /// Bytes of the gathered patch block for a full tile.
    pub workspace_bytes: usize,
}

/// Builds the plan for a `channels x h x w` map under a `kh x kw` kernel
/// (odd extents; use `1` for the flat axis of a 1-D kernel). `budget` caps
/// the gathered patch block; a single output column is used when one column
/// of taps already exceeds it.
pub fn plan_lowering(
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    budget: usize,
) -> Result<LoweringPlan> {
    if channels == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "degenerate lowering shape {channels}x{h}x{w}"
        )));
    }
    if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "kernel extents must be odd, got {kh}x{kw}"
        )));
    }
    let taps = kh * kw;
    let bytes_per_col = taps * std::mem::size_of::<f32>();
    let max_cols = (budget / bytes_per_col).max(1);
    let tile_w = w.min(max_cols);
    let tile_h = h.min((max_cols / tile_w).max(1));
    let patch_cols = tile_h * tile_w;
    Ok(LoweringPlan {
        channels,
        h,
        w,
        kh,
        kw,
        tile_h,
        tile_w,
        channel_block: 1,
        patch_rows: taps,
        patch_cols,
        macs: (channels * h * w) as u64 * taps as u64,
        workspace_bytes: patch_cols * bytes_per_col,
    })
}
