//! Task-specific input preparation: orientation standardization, HU
//! windowing + normalization, liver-region masking, bounding boxes, and
//! crop/pad to a fixed grid.
//!
//! The global (liver) branch uses the `(-150, 250)` HU window, the local
//! (tumor) branch `(-200, 250)`; both are configurable through the
//! pipeline config.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::volio::{Mask, Orientation, TissueClass, VoxelKind, Volume};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("volume kind {found:?} where {expected:?} required")]
    KindMismatch {
        expected: VoxelKind,
        found: VoxelKind,
    },
    #[error("grids are not aligned (dims/spacing/orientation differ)")]
    ShapeMismatch,
    #[error("mask has no foreground voxels")]
    EmptyMask,
}

/// Intensity window on the Hounsfield scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuWindow {
    lo: f32,
    hi: f32,
}

impl HuWindow {
    pub fn new(lo: f32, hi: f32) -> Self {
        assert!(lo < hi, "HU window requires lo < hi, got ({lo}, {hi})");
        HuWindow { lo, hi }
    }

    pub fn lo(&self) -> f32 {
        self.lo
    }

    pub fn hi(&self) -> f32 {
        self.hi
    }
}

/// Inclusive axis-aligned voxel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    /// Whole-grid box for the given dims.
    pub fn full(dims: [usize; 3]) -> Self {
        BoundingBox {
            min: [0, 0, 0],
            max: [dims[0] - 1, dims[1] - 1, dims[2] - 1],
        }
    }

    pub fn extent(&self) -> [usize; 3] {
        [
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        ]
    }
}

/// Crop window selection when the box exceeds the target size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    /// Centered sub-window / centered padding (inference default).
    Center,
    /// Uniformly random valid offsets, reproducible for a fixed seed
    /// (training augmentation).
    Random(u64),
}

fn reorder<T: Copy>(
    data: &[T],
    dims: [usize; 3],
    spacing: [f32; 3],
    orientation: &Orientation,
) -> (Vec<T>, [usize; 3], [f32; 3]) {
    let mut out_dims = [0usize; 3];
    let mut out_spacing = [0.0f32; 3];
    for j in 0..3 {
        out_dims[orientation.perm[j]] = dims[j];
        out_spacing[orientation.perm[j]] = spacing[j];
    }
    let mut out = vec![data[0]; data.len()];
    let src_idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let dst_idx = |p: [usize; 3]| p[0] + out_dims[0] * (p[1] + out_dims[1] * p[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let src = [x, y, z];
                let mut dst = [0usize; 3];
                for j in 0..3 {
                    let i = if orientation.flip[j] {
                        dims[j] - 1 - src[j]
                    } else {
                        src[j]
                    };
                    dst[orientation.perm[j]] = i;
                }
                out[dst_idx(dst)] = data[src_idx(x, y, z)];
            }
        }
    }
    (out, out_dims, out_spacing)
}

/// Physically reorders voxels so storage axes run along anatomical R/A/S;
/// the result carries the identity orientation. Idempotent.
pub fn standardize_orientation(v: &Volume) -> Volume {
    if v.orientation().is_identity() {
        return v.clone();
    }
    let (data, dims, spacing) = reorder(v.data(), v.dims(), v.spacing(), v.orientation());
    Volume::new(dims, spacing, Orientation::identity(), v.kind(), data)
        .expect("reordering preserves volume invariants")
}

/// Mask counterpart of [`standardize_orientation`].
pub fn standardize_orientation_mask(m: &Mask) -> Mask {
    if m.orientation().is_identity() {
        return m.clone();
    }
    let (labels, dims, spacing) = reorder(m.labels(), m.dims(), m.spacing(), m.orientation());
    Mask::new(
        dims,
        spacing,
        Orientation::identity(),
        labels,
        m.label_map().clone(),
    )
    .expect("reordering preserves mask invariants")
}

/// Clamps to the window and rescales to `[0, 1]`:
/// `(clamp(v, lo, hi) - lo) / (hi - lo)`.
pub fn window_and_normalize(v: &Volume, w: HuWindow) -> Result<Volume, PreprocessError> {
    if v.kind() != VoxelKind::Hu {
        return Err(PreprocessError::KindMismatch {
            expected: VoxelKind::Hu,
            found: v.kind(),
        });
    }
    let range = w.hi - w.lo;
    let data = v
        .data()
        .iter()
        .map(|&x| (x.clamp(w.lo, w.hi) - w.lo) / range)
        .collect();
    Ok(
        Volume::new(v.dims(), v.spacing(), *v.orientation(), VoxelKind::Normalized, data)
            .expect("windowed values lie in [0, 1]"),
    )
}

/// Zeroes every voxel outside the liver region (liver or tumor class).
pub fn mask_outside_liver(v: &Volume, liver: &Mask) -> Result<Volume, PreprocessError> {
    if v.kind() != VoxelKind::Normalized {
        return Err(PreprocessError::KindMismatch {
            expected: VoxelKind::Normalized,
            found: v.kind(),
        });
    }
    if !v.aligned_with_mask(liver) {
        return Err(PreprocessError::ShapeMismatch);
    }
    let data = v
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| if liver.is_foreground(i) { x } else { 0.0 })
        .collect();
    Ok(
        Volume::new(v.dims(), v.spacing(), *v.orientation(), v.kind(), data)
            .expect("masking preserves range"),
    )
}

/// Tight box over mask foreground, expanded by `margin` and clipped to the
/// grid.
pub fn liver_bbox(liver: &Mask, margin: usize) -> Result<BoundingBox, PreprocessError> {
    let dims = liver.dims();
    let mut min = dims;
    let mut max = [0usize; 3];
    let mut any = false;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if liver.is_foreground(liver.index(x, y, z)) {
                    any = true;
                    let p = [x, y, z];
                    for a in 0..3 {
                        min[a] = min[a].min(p[a]);
                        max[a] = max[a].max(p[a]);
                    }
                }
            }
        }
    }
    if !any {
        return Err(PreprocessError::EmptyMask);
    }
    for a in 0..3 {
        min[a] = min[a].saturating_sub(margin);
        max[a] = (max[a] + margin).min(dims[a] - 1);
    }
    Ok(BoundingBox { min, max })
}

/// Resolved crop/pad geometry shared between a volume and its masks.
///
/// Output voxel `c` maps to source voxel `origin + c` (componentwise; may
/// fall outside the source when that output voxel is padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPlan {
    pub target: [usize; 3],
    pub origin: [i64; 3],
    copy_src: [usize; 3],
    copy_dst: [usize; 3],
    copy_len: [usize; 3],
}

impl CropPlan {
    /// Chooses sub-window offsets (crop) or centered placement (pad) per
    /// axis. `Random` draws offsets in axis order from a seeded stream.
    pub fn compute(box_: BoundingBox, target: [usize; 3], mode: CropMode) -> CropPlan {
        assert!(target.iter().all(|&t| t >= 1), "crop target must be >= 1");
        let extent = box_.extent();
        let mut rng = match mode {
            CropMode::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            CropMode::Center => None,
        };
        let mut origin = [0i64; 3];
        let mut copy_src = [0usize; 3];
        let mut copy_dst = [0usize; 3];
        let mut copy_len = [0usize; 3];
        for a in 0..3 {
            if extent[a] > target[a] {
                let max_off = extent[a] - target[a];
                let off = match rng.as_mut() {
                    Some(r) => r.gen_range(0..=max_off),
                    None => max_off / 2,
                };
                copy_src[a] = box_.min[a] + off;
                copy_dst[a] = 0;
                copy_len[a] = target[a];
            } else {
                copy_src[a] = box_.min[a];
                copy_dst[a] = (target[a] - extent[a]) / 2;
                copy_len[a] = extent[a];
            }
            origin[a] = copy_src[a] as i64 - copy_dst[a] as i64;
        }
        CropPlan {
            target,
            origin,
            copy_src,
            copy_dst,
            copy_len,
        }
    }

    fn apply<T: Copy>(&self, data: &[T], dims: [usize; 3], background: T) -> Vec<T> {
        let mut out = vec![background; self.target[0] * self.target[1] * self.target[2]];
        let src_idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
        let dst_idx = |x: usize, y: usize, z: usize| {
            x + self.target[0] * (y + self.target[1] * z)
        };
        for dz in 0..self.copy_len[2] {
            for dy in 0..self.copy_len[1] {
                for dx in 0..self.copy_len[0] {
                    let s = src_idx(
                        self.copy_src[0] + dx,
                        self.copy_src[1] + dy,
                        self.copy_src[2] + dz,
                    );
                    let d = dst_idx(
                        self.copy_dst[0] + dx,
                        self.copy_dst[1] + dy,
                        self.copy_dst[2] + dz,
                    );
                    out[d] = data[s];
                }
            }
        }
        out
    }

    pub fn apply_to_volume(&self, v: &Volume) -> Volume {
        let box_ok = self.copy_src[0] + self.copy_len[0] <= v.dims()[0]
            && self.copy_src[1] + self.copy_len[1] <= v.dims()[1]
            && self.copy_src[2] + self.copy_len[2] <= v.dims()[2];
        assert!(box_ok, "crop box exceeds volume dims");
        let data = self.apply(v.data(), v.dims(), 0.0f32);
        Volume::new(self.target, v.spacing(), *v.orientation(), v.kind(), data)
            .expect("crop preserves volume invariants")
    }

    pub fn apply_to_mask(&self, m: &Mask) -> Mask {
        let background = m.label_for(TissueClass::Background).unwrap_or(0);
        let labels = self.apply(m.labels(), m.dims(), background);
        let mut map = m.label_map().clone();
        map.entry(background).or_insert(TissueClass::Background);
        Mask::new(self.target, m.spacing(), *m.orientation(), labels, map)
            .expect("crop preserves mask invariants")
    }
}

/// Restricts to `box_` then crops or pads each axis to `target`; padding is
/// 0.0 (the window minimum / background).
pub fn crop_or_pad(v: &Volume, box_: BoundingBox, target: [usize; 3], mode: CropMode) -> Volume {
    CropPlan::compute(box_, target, mode).apply_to_volume(v)
}

/// Mask counterpart of [`crop_or_pad`]; padding is the background label.
pub fn crop_or_pad_mask(m: &Mask, box_: BoundingBox, target: [usize; 3], mode: CropMode) -> Mask {
    CropPlan::compute(box_, target, mode).apply_to_mask(m)
}

/// Inverse placement: embeds a crop-space mask back into whole-volume
/// coordinates using the plan's origin. Crop voxels that map outside the
/// whole grid (padding) are dropped.
pub fn embed_mask(
    crop: &Mask,
    origin: [i64; 3],
    whole_dims: [usize; 3],
    whole_spacing: [f32; 3],
    whole_orientation: Orientation,
) -> Mask {
    let background = crop.label_for(TissueClass::Background).unwrap_or(0);
    let mut labels = vec![background; whole_dims[0] * whole_dims[1] * whole_dims[2]];
    let dims = crop.dims();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let label = crop.labels()[crop.index(x, y, z)];
                if label == background {
                    continue;
                }
                let p = [
                    origin[0] + x as i64,
                    origin[1] + y as i64,
                    origin[2] + z as i64,
                ];
                if p.iter().zip(&whole_dims).all(|(&c, &d)| c >= 0 && (c as usize) < d) {
                    labels[p[0] as usize
                        + whole_dims[0] * (p[1] as usize + whole_dims[1] * p[2] as usize)] = label;
                }
            }
        }
    }
    let mut map = crop.label_map().clone();
    map.entry(background).or_insert(TissueClass::Background);
    Mask::new(whole_dims, whole_spacing, whole_orientation, labels, map)
        .expect("embedding preserves mask invariants")
}
