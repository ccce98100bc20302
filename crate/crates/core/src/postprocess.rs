//! Segmentation output refinement.
//!
//! Liver predictions get the anatomically motivated cleanup: keep the
//! largest 26-connected component, then fill interior holes (background not
//! 6-connected-reachable from the volume border). Tumor predictions instead
//! go through a gradient-free region-based active contour (morphological
//! scheme): per iteration a data-attachment step moves boundary voxels to
//! the region whose mean intensity explains them better, followed by
//! curvature smoothing built from inf-sup/sup-inf compositions of four 2D
//! line structuring elements applied per axial slice.

use std::collections::VecDeque;

use thiserror::Error;

use crate::volio::{Mask, TissueClass, Volume};

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("active contour init must be nonempty and not all-foreground")]
    DegenerateInit,
    #[error("intensity and mask grids are not aligned")]
    ShapeMismatch,
}

/// Active-contour configuration. The pipeline default runs two iterations;
/// synthetic fixtures use more.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourConfig {
    pub iterations: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub smoothing_passes: u32,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig {
            iterations: 2,
            lambda1: 1.0,
            lambda2: 1.0,
            smoothing_passes: 1,
        }
    }
}

/// Refined mask plus a flag set when a region emptied mid-run and the last
/// valid mask was returned instead.
#[derive(Debug, Clone)]
pub struct ContourOutcome {
    pub mask: Mask,
    pub degenerate: bool,
}

const NEIGHBORS_6: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

fn neighbors_26() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if dx != 0 || dy != 0 || dz != 0 {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn in_bounds(p: [i64; 3], dims: [usize; 3]) -> bool {
    p[0] >= 0
        && p[1] >= 0
        && p[2] >= 0
        && (p[0] as usize) < dims[0]
        && (p[1] as usize) < dims[1]
        && (p[2] as usize) < dims[2]
}

fn idx_of(p: [i64; 3], dims: [usize; 3]) -> usize {
    p[0] as usize + dims[0] * (p[1] as usize + dims[1] * p[2] as usize)
}

fn coords_of(i: usize, dims: [usize; 3]) -> [i64; 3] {
    let x = i % dims[0];
    let y = (i / dims[0]) % dims[1];
    let z = i / (dims[0] * dims[1]);
    [x as i64, y as i64, z as i64]
}

/// All 26-connected components of `class`, in scan order (each component's
/// first voxel is its smallest linear index).
pub fn connected_components(m: &Mask, class: TissueClass) -> Vec<Vec<usize>> {
    let dims = m.dims();
    let n = m.num_voxels();
    let offsets = neighbors_26();
    let mut visited = vec![false; n];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if visited[start] || m.class_at(start) != class {
            continue;
        }
        let mut component = vec![start];
        visited[start] = true;
        queue.push_back(start);
        while let Some(cur) = queue.pop_front() {
            let c = coords_of(cur, dims);
            for off in &offsets {
                let p = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                if !in_bounds(p, dims) {
                    continue;
                }
                let j = idx_of(p, dims);
                if !visited[j] && m.class_at(j) == class {
                    visited[j] = true;
                    component.push(j);
                    queue.push_back(j);
                }
            }
        }
        components.push(component);
    }
    components
}

/// Keeps only the largest 26-connected component of `class`; the rest of
/// that class becomes background. Ties go to the component containing the
/// smallest linear index (components are discovered in scan order).
pub fn largest_component(m: &Mask, class: TissueClass) -> Mask {
    let n = m.num_voxels();
    let mut best: Vec<usize> = Vec::new();
    for component in connected_components(m, class) {
        if component.len() > best.len() {
            best = component;
        }
    }

    let background = m.label_for(TissueClass::Background).unwrap_or(0);
    let mut labels = m.labels().to_vec();
    for i in 0..n {
        if m.class_at(i) == class {
            labels[i] = background;
        }
    }
    let class_label = m.label_for(class).unwrap_or(default_label(class));
    for &i in &best {
        labels[i] = class_label;
    }
    rebuild(m, labels, class, background)
}

/// Relabels background voxels that cannot reach the volume border through
/// 6-connected background to `class`. Idempotent.
pub fn fill_holes(m: &Mask, class: TissueClass) -> Mask {
    let dims = m.dims();
    let n = m.num_voxels();
    let mut reachable = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        let c = coords_of(i, dims);
        let on_border = c[0] == 0
            || c[1] == 0
            || c[2] == 0
            || c[0] as usize == dims[0] - 1
            || c[1] as usize == dims[1] - 1
            || c[2] as usize == dims[2] - 1;
        if on_border && m.class_at(i) == TissueClass::Background {
            reachable[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(cur) = queue.pop_front() {
        let c = coords_of(cur, dims);
        for off in &NEIGHBORS_6 {
            let p = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
            if !in_bounds(p, dims) {
                continue;
            }
            let j = idx_of(p, dims);
            if !reachable[j] && m.class_at(j) == TissueClass::Background {
                reachable[j] = true;
                queue.push_back(j);
            }
        }
    }

    let background = m.label_for(TissueClass::Background).unwrap_or(0);
    let class_label = m.label_for(class).unwrap_or(default_label(class));
    let mut labels = m.labels().to_vec();
    for i in 0..n {
        if m.class_at(i) == TissueClass::Background && !reachable[i] {
            labels[i] = class_label;
        }
    }
    rebuild(m, labels, class, background)
}

fn default_label(class: TissueClass) -> u8 {
    match class {
        TissueClass::Background => 0,
        TissueClass::Liver => 1,
        TissueClass::Tumor => 2,
    }
}

fn rebuild(m: &Mask, labels: Vec<u8>, class: TissueClass, background: u8) -> Mask {
    let mut map = m.label_map().clone();
    map.entry(background).or_insert(TissueClass::Background);
    map.entry(m.label_for(class).unwrap_or(default_label(class)))
        .or_insert(class);
    Mask::new(m.dims(), m.spacing(), *m.orientation(), labels, map)
        .expect("postprocessing preserves mask invariants")
}

/// Morphological dilation of `class` by `radius` passes of the
/// 6-neighborhood. Used for label-noise injection and fixtures.
pub fn dilate_class(m: &Mask, class: TissueClass, radius: usize) -> Mask {
    morph(m, class, radius, true)
}

/// Morphological erosion counterpart of [`dilate_class`].
pub fn erode_class(m: &Mask, class: TissueClass, radius: usize) -> Mask {
    morph(m, class, radius, false)
}

fn morph(m: &Mask, class: TissueClass, radius: usize, grow: bool) -> Mask {
    let dims = m.dims();
    let n = m.num_voxels();
    let mut fg: Vec<bool> = (0..n).map(|i| m.class_at(i) == class).collect();
    for _ in 0..radius {
        let prev = fg.clone();
        for i in 0..n {
            let c = coords_of(i, dims);
            let mut hit = prev[i];
            for off in &NEIGHBORS_6 {
                let p = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                // Out-of-bounds neighbors count as background.
                let v = if in_bounds(p, dims) { prev[idx_of(p, dims)] } else { false };
                if grow {
                    hit = hit || v;
                } else {
                    hit = hit && v;
                }
            }
            fg[i] = hit;
        }
    }
    let background = m.label_for(TissueClass::Background).unwrap_or(0);
    let class_label = m.label_for(class).unwrap_or(default_label(class));
    let mut labels = m.labels().to_vec();
    for i in 0..n {
        if m.class_at(i) == class {
            labels[i] = background;
        }
        if fg[i] {
            labels[i] = class_label;
        }
    }
    rebuild(m, labels, class, background)
}

/// Mean intensity inside/outside the foreground; `None` when either region
/// is empty.
pub fn region_means(intensity: &Volume, fg: &[bool]) -> Option<(f64, f64)> {
    let mut sum_in = 0.0;
    let mut n_in = 0u64;
    let mut sum_out = 0.0;
    let mut n_out = 0u64;
    for (&v, &f) in intensity.data().iter().zip(fg) {
        if f {
            sum_in += v as f64;
            n_in += 1;
        } else {
            sum_out += v as f64;
            n_out += 1;
        }
    }
    if n_in == 0 || n_out == 0 {
        None
    } else {
        Some((sum_in / n_in as f64, sum_out / n_out as f64))
    }
}

/// Two-phase region energy `Σ_in λ1 (I - c1)² + Σ_out λ2 (I - c2)²`.
pub fn region_energy(intensity: &Volume, fg: &[bool], l1: f64, l2: f64, c1: f64, c2: f64) -> f64 {
    intensity
        .data()
        .iter()
        .zip(fg)
        .map(|(&v, &f)| {
            let v = v as f64;
            if f {
                l1 * (v - c1) * (v - c1)
            } else {
                l2 * (v - c2) * (v - c2)
            }
        })
        .sum()
}

/// Data-attachment step: at voxels where the discrete mask gradient is
/// nonzero (some 6-neighbor differs, edges replicated), assign foreground
/// when `λ1 (I - c1)² < λ2 (I - c2)²`, background when `>`, unchanged on
/// ties. Synchronous update from the pre-step mask.
pub fn attachment_step(
    intensity: &Volume,
    fg: &[bool],
    l1: f64,
    l2: f64,
    c1: f64,
    c2: f64,
) -> Vec<bool> {
    let dims = intensity.dims();
    let n = fg.len();
    let mut out = fg.to_vec();
    for i in 0..n {
        let c = coords_of(i, dims);
        let mut on_boundary = false;
        for off in &NEIGHBORS_6 {
            let p = [
                (c[0] + off[0]).clamp(0, dims[0] as i64 - 1),
                (c[1] + off[1]).clamp(0, dims[1] as i64 - 1),
                (c[2] + off[2]).clamp(0, dims[2] as i64 - 1),
            ];
            if fg[idx_of(p, dims)] != fg[i] {
                on_boundary = true;
                break;
            }
        }
        if !on_boundary {
            continue;
        }
        let v = intensity.data()[i] as f64;
        let e1 = l1 * (v - c1) * (v - c1);
        let e2 = l2 * (v - c2) * (v - c2);
        if e1 < e2 {
            out[i] = true;
        } else if e1 > e2 {
            out[i] = false;
        }
    }
    out
}

/// One curvature smoothing pass on each axial slice: the composition
/// SI∘IS for even `pass_index`, IS∘SI for odd, where IS/SI are the
/// inf-sup / sup-inf operators over four line structuring elements
/// (horizontal, vertical, both diagonals; length 3, edges replicated).
pub fn curvature_smooth_pass(fg: &[bool], dims: [usize; 3], pass_index: u32) -> Vec<bool> {
    if pass_index % 2 == 0 {
        sup_inf(&inf_sup(fg, dims), dims)
    } else {
        inf_sup(&sup_inf(fg, dims), dims)
    }
}

const SEGMENTS: [[[i64; 2]; 2]; 4] = [
    [[-1, 0], [1, 0]],
    [[0, -1], [0, 1]],
    [[-1, -1], [1, 1]],
    [[-1, 1], [1, -1]],
];

fn line_values(fg: &[bool], dims: [usize; 3], x: i64, y: i64, z: usize, seg: &[[i64; 2]; 2]) -> [bool; 3] {
    let sample = |dx: i64, dy: i64| {
        let px = (x + dx).clamp(0, dims[0] as i64 - 1) as usize;
        let py = (y + dy).clamp(0, dims[1] as i64 - 1) as usize;
        fg[px + dims[0] * (py + dims[1] * z)]
    };
    [sample(seg[0][0], seg[0][1]), sample(0, 0), sample(seg[1][0], seg[1][1])]
}

/// inf-sup: min over orientations of (max over each 3-pixel segment).
fn inf_sup(fg: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let mut out = vec![false; fg.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                let mut acc = true;
                for seg in &SEGMENTS {
                    let vals = line_values(fg, dims, x, y, z, seg);
                    acc &= vals[0] || vals[1] || vals[2];
                    if !acc {
                        break;
                    }
                }
                out[x as usize + dims[0] * (y as usize + dims[1] * z)] = acc;
            }
        }
    }
    out
}

/// sup-inf: max over orientations of (min over each 3-pixel segment).
fn sup_inf(fg: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let mut out = vec![false; fg.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                let mut acc = false;
                for seg in &SEGMENTS {
                    let vals = line_values(fg, dims, x, y, z, seg);
                    acc |= vals[0] && vals[1] && vals[2];
                    if acc {
                        break;
                    }
                }
                out[x as usize + dims[0] * (y as usize + dims[1] * z)] = acc;
            }
        }
    }
    out
}

/// Gradient-free region-based boundary refinement (morphological scheme).
///
/// Per iteration: recompute the 3D inside/outside means, run the
/// data-attachment step on boundary voxels, then `smoothing_passes`
/// curvature passes (alternating composition order across the whole call).
/// If any step would empty the inside or outside region, the last valid
/// mask is returned with the degenerate flag set.
pub fn active_contour_refine(
    intensity: &Volume,
    init: &Mask,
    cfg: &ContourConfig,
) -> Result<ContourOutcome, PostprocessError> {
    if intensity.dims() != init.dims() {
        return Err(PostprocessError::ShapeMismatch);
    }
    let n = init.num_voxels();
    let fg0: Vec<bool> = (0..n).map(|i| init.is_foreground(i)).collect();
    let fg_count = fg0.iter().filter(|&&f| f).count();
    if fg_count == 0 || fg_count == n {
        return Err(PostprocessError::DegenerateInit);
    }
    let class = (0..n)
        .find(|&i| init.is_foreground(i))
        .map(|i| init.class_at(i))
        .unwrap_or(TissueClass::Tumor);

    let dims = init.dims();
    let mut fg = fg0;
    let mut degenerate = false;
    let mut pass_index = 0u32;
    for _ in 0..cfg.iterations {
        let Some((c1, c2)) = region_means(intensity, &fg) else {
            degenerate = true;
            break;
        };
        let mut next = attachment_step(intensity, &fg, cfg.lambda1, cfg.lambda2, c1, c2);
        for _ in 0..cfg.smoothing_passes {
            next = curvature_smooth_pass(&next, dims, pass_index);
            pass_index += 1;
        }
        let count = next.iter().filter(|&&f| f).count();
        if count == 0 || count == n {
            degenerate = true;
            break;
        }
        fg = next;
    }

    let mask = Mask::from_foreground(init.dims(), init.spacing(), *init.orientation(), &fg, class)
        .expect("refined mask geometry matches init");
    Ok(ContourOutcome { mask, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volio::{standard_label_map, Orientation, VoxelKind};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mask_of(labels: Vec<u8>, dims: [usize; 3]) -> Mask {
        Mask::new(dims, [1.0; 3], Orientation::identity(), labels, standard_label_map()).unwrap()
    }

    fn ball(dims: [usize; 3], center: [f64; 3], r: f64, label: u8) -> Vec<u8> {
        let mut labels = vec![0u8; dims[0] * dims[1] * dims[2]];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let d = (x as f64 - center[0]).powi(2)
                        + (y as f64 - center[1]).powi(2)
                        + (z as f64 - center[2]).powi(2);
                    if d <= r * r {
                        labels[x + dims[0] * (y + dims[1] * z)] = label;
                    }
                }
            }
        }
        labels
    }

    #[test]
    fn largest_component_keeps_single_component() {
        let dims = [12, 12, 12];
        let m = mask_of(ball(dims, [6.0, 6.0, 6.0], 3.0, 1), dims);
        let out = largest_component(&m, TissueClass::Liver);
        assert_eq!(out.labels(), m.labels());
    }

    #[test]
    fn largest_component_removes_small_and_breaks_ties_by_index() {
        let dims = [12, 6, 1];
        let mut labels = vec![0u8; 72];
        // Big blob: 100 > 3 voxels is overkill at this size; use 8 vs 3.
        for p in [(1usize, 1usize), (2, 1), (1, 2), (2, 2), (3, 1), (3, 2), (1, 3), (2, 3)] {
            labels[p.0 + 12 * p.1] = 1;
        }
        for p in [(9usize, 4usize), (10, 4), (9, 5)] {
            labels[p.0 + 12 * p.1] = 1;
        }
        let m = mask_of(labels, dims);
        let out = largest_component(&m, TissueClass::Liver);
        assert_eq!(out.count_class(TissueClass::Liver), 8);
        assert_eq!(out.labels()[9 + 12 * 4], 0);

        // Two equal-size components: the one with the smaller linear index
        // survives.
        let mut labels = vec![0u8; 72];
        labels[1] = 1;
        labels[2] = 1;
        labels[40] = 1;
        labels[41] = 1;
        let m = mask_of(labels, dims);
        let out = largest_component(&m, TissueClass::Liver);
        assert_eq!(out.labels()[1], 1);
        assert_eq!(out.labels()[2], 1);
        assert_eq!(out.labels()[40], 0);
    }

    #[test]
    fn fill_holes_shell_and_tunnel() {
        // Solid cube: unchanged.
        let dims = [7, 7, 7];
        let mut solid = vec![0u8; 343];
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    solid[x + 7 * (y + 7 * z)] = 1;
                }
            }
        }
        let m = mask_of(solid.clone(), dims);
        assert_eq!(fill_holes(&m, TissueClass::Liver).labels(), &solid[..]);

        // Hollow 5x5x5 shell: the interior 3x3x3 fills.
        let mut shell = solid.clone();
        for z in 2..5 {
            for y in 2..5 {
                for x in 2..5 {
                    shell[x + 7 * (y + 7 * z)] = 0;
                }
            }
        }
        let m = mask_of(shell, dims);
        let filled = fill_holes(&m, TissueClass::Liver);
        assert_eq!(filled.labels(), &solid[..]);
        // Idempotent.
        assert_eq!(fill_holes(&filled, TissueClass::Liver).labels(), filled.labels());

        // Cavity connected to the border via a 1-voxel tunnel: NOT filled.
        let mut tunneled = solid.clone();
        for z in 2..5 {
            for y in 2..5 {
                for x in 2..5 {
                    tunneled[x + 7 * (y + 7 * z)] = 0;
                }
            }
        }
        tunneled[3 + 7 * (3 + 7 * 5)] = 0; // breach the shell wall at z=5
        tunneled[3 + 7 * (3 + 7 * 6)] = 0; // already background (border)
        let m = mask_of(tunneled.clone(), dims);
        let out = fill_holes(&m, TissueClass::Liver);
        assert_eq!(out.labels(), &tunneled[..], "vented cavity must stay open");
    }

    /// Independent reachability/labeling oracle: union-find over the same
    /// connectivity, no BFS shared with the implementation.
    fn oracle_components(fg: &[bool], dims: [usize; 3], conn26: bool) -> Vec<usize> {
        let n = fg.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let offsets: Vec<[i64; 3]> = if conn26 {
            neighbors_26()
        } else {
            NEIGHBORS_6.to_vec()
        };
        for i in 0..n {
            if !fg[i] {
                continue;
            }
            let c = coords_of(i, dims);
            for off in &offsets {
                let p = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                if in_bounds(p, dims) {
                    let j = idx_of(p, dims);
                    if fg[j] {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            parent[ri] = rj;
                        }
                    }
                }
            }
        }
        (0..n)
            .map(|i| if fg[i] { find(&mut parent, i) } else { usize::MAX })
            .collect()
    }

    #[test]
    fn largest_component_matches_union_find_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dims = [16, 16, 16];
        for _ in 0..10 {
            let fg: Vec<bool> = (0..4096).map(|_| rng.gen_bool(0.35)).collect();
            let labels: Vec<u8> = fg.iter().map(|&f| if f { 2 } else { 0 }).collect();
            let m = mask_of(labels, dims);
            let out = largest_component(&m, TissueClass::Tumor);

            let roots = oracle_components(&fg, dims, true);
            let mut sizes = std::collections::HashMap::new();
            for &r in roots.iter().filter(|&&r| r != usize::MAX) {
                *sizes.entry(r).or_insert(0usize) += 1;
            }
            let expected_max = sizes.values().copied().max().unwrap_or(0);
            assert_eq!(out.count_class(TissueClass::Tumor), expected_max);
            // Output is a subset of the input foreground and is connected.
            for i in 0..4096 {
                if out.class_at(i) == TissueClass::Tumor {
                    assert!(fg[i]);
                }
            }
        }
    }

    #[test]
    fn fill_holes_matches_reachability_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let dims = [16, 16, 16];
        let n = 4096;
        for _ in 0..10 {
            let fg: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.45)).collect();
            let labels: Vec<u8> = fg.iter().map(|&f| if f { 1 } else { 0 }).collect();
            let m = mask_of(labels, dims);
            let out = fill_holes(&m, TissueClass::Liver);

            // Oracle: union-find of background over 6-connectivity; any
            // background component with no border voxel must be filled.
            let bg: Vec<bool> = fg.iter().map(|&f| !f).collect();
            let roots = oracle_components(&bg, dims, false);
            let mut touches_border = std::collections::HashSet::new();
            for i in 0..n {
                if roots[i] == usize::MAX {
                    continue;
                }
                let c = coords_of(i, dims);
                if c.iter().any(|&v| v == 0)
                    || c[0] as usize == dims[0] - 1
                    || c[1] as usize == dims[1] - 1
                    || c[2] as usize == dims[2] - 1
                {
                    touches_border.insert(roots[i]);
                }
            }
            for i in 0..n {
                let expect = if fg[i] {
                    TissueClass::Liver
                } else if touches_border.contains(&roots[i]) {
                    TissueClass::Background
                } else {
                    TissueClass::Liver
                };
                assert_eq!(out.class_at(i), expect, "voxel {i}");
            }
        }
    }

    #[test]
    fn monotonicity_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let dims = [12, 12, 12];
        let fg: Vec<bool> = (0..1728).map(|_| rng.gen_bool(0.4)).collect();
        let labels: Vec<u8> = fg.iter().map(|&f| if f { 1 } else { 0 }).collect();
        let m = mask_of(labels, dims);

        let lc = largest_component(&m, TissueClass::Liver);
        for i in 0..1728 {
            if lc.class_at(i) == TissueClass::Liver {
                assert!(fg[i], "largest_component output must be a subset");
            }
        }
        let lc2 = largest_component(&lc, TissueClass::Liver);
        assert_eq!(lc2.labels(), lc.labels());

        let fh = fill_holes(&m, TissueClass::Liver);
        for i in 0..1728 {
            if fg[i] {
                assert_eq!(fh.class_at(i), TissueClass::Liver, "fill_holes is a superset");
            }
        }
        let fh2 = fill_holes(&fh, TissueClass::Liver);
        assert_eq!(fh2.labels(), fh.labels());
    }

    fn disk_volume(
        dims: [usize; 3],
        r: f64,
        inside: f32,
        outside: f32,
        noise: f32,
        seed: u64,
    ) -> (Volume, Mask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cx = dims[0] as f64 / 2.0;
        let cy = dims[1] as f64 / 2.0;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        let mut labels = Vec::with_capacity(data.capacity());
        for _z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let d = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let inside_disk = d <= r * r;
                    let base = if inside_disk { inside } else { outside };
                    let jitter = rng.gen_range(-noise..=noise);
                    data.push((base + jitter).clamp(0.0, 1.0));
                    labels.push(if inside_disk { 2u8 } else { 0 });
                }
            }
        }
        let v = Volume::new(dims, [1.0; 3], Orientation::identity(), VoxelKind::Normalized, data)
            .unwrap();
        let m = mask_of(labels, dims);
        (v, m)
    }

    fn dice_between(a: &Mask, b: &Mask, class: TissueClass) -> f64 {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for i in 0..a.num_voxels() {
            match (a.class_at(i) == class, b.class_at(i) == class) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        2.0 * tp / (2.0 * tp + fp + fneg)
    }

    #[test]
    fn binary_image_true_region_is_a_fixed_point() {
        let (v, m) = disk_volume([24, 24, 2], 7.0, 1.0, 0.0, 0.0, 1);
        let cfg = ContourConfig {
            iterations: 5,
            smoothing_passes: 0,
            ..ContourConfig::default()
        };
        let out = active_contour_refine(&v, &m, &cfg).unwrap();
        assert!(!out.degenerate);
        assert_eq!(out.mask.labels(), m.labels());
    }

    #[test]
    fn zero_iterations_is_identity() {
        let (v, m) = disk_volume([16, 16, 1], 5.0, 0.8, 0.2, 0.05, 2);
        let cfg = ContourConfig {
            iterations: 0,
            ..ContourConfig::default()
        };
        let out = active_contour_refine(&v, &m, &cfg).unwrap();
        assert_eq!(out.mask.labels(), m.labels());
    }

    #[test]
    fn constant_intensity_never_fires_the_data_term() {
        let dims = [16, 16, 2];
        let v = Volume::new(
            dims,
            [1.0; 3],
            Orientation::identity(),
            VoxelKind::Normalized,
            vec![0.5; 512],
        )
        .unwrap();
        let m = mask_of(ball(dims, [8.0, 8.0, 0.5], 4.0, 2), dims);
        let cfg = ContourConfig {
            iterations: 3,
            smoothing_passes: 0,
            ..ContourConfig::default()
        };
        let out = active_contour_refine(&v, &m, &cfg).unwrap();
        assert_eq!(out.mask.labels(), m.labels(), "c1 == c2 must flip nothing");
    }

    #[test]
    fn noisy_disk_recovered_from_dilated_init() {
        let (v, truth) = disk_volume([48, 48, 2], 12.0, 0.8, 0.2, 0.05, 3);
        let init = dilate_class(&truth, TissueClass::Tumor, 2);
        let cfg = ContourConfig {
            iterations: 10,
            ..ContourConfig::default()
        };
        let out = active_contour_refine(&v, &init, &cfg).unwrap();
        assert!(!out.degenerate);
        let dice = dice_between(&out.mask, &truth, TissueClass::Tumor);
        assert!(dice >= 0.98, "recovered dice {dice}");
    }

    #[test]
    fn attachment_never_increases_region_energy() {
        let (v, truth) = disk_volume([32, 32, 2], 9.0, 0.75, 0.25, 0.08, 4);
        let init = dilate_class(&truth, TissueClass::Tumor, 2);
        let mut fg: Vec<bool> = (0..init.num_voxels()).map(|i| init.is_foreground(i)).collect();
        for _ in 0..8 {
            let Some((c1, c2)) = region_means(&v, &fg) else { break };
            let before = region_energy(&v, &fg, 1.0, 1.0, c1, c2);
            let next = attachment_step(&v, &fg, 1.0, 1.0, c1, c2);
            let after = region_energy(&v, &next, 1.0, 1.0, c1, c2);
            assert!(
                after <= before + 1e-9,
                "energy rose from {before} to {after}"
            );
            fg = next;
        }
    }

    #[test]
    fn degenerate_cases() {
        let dims = [6, 6, 1];
        let v = Volume::new(
            dims,
            [1.0; 3],
            Orientation::identity(),
            VoxelKind::Normalized,
            vec![0.5; 36],
        )
        .unwrap();
        let empty = mask_of(vec![0; 36], dims);
        assert!(matches!(
            active_contour_refine(&v, &empty, &ContourConfig::default()),
            Err(PostprocessError::DegenerateInit)
        ));
        let full = mask_of(vec![2; 36], dims);
        assert!(matches!(
            active_contour_refine(&v, &full, &ContourConfig::default()),
            Err(PostprocessError::DegenerateInit)
        ));

        // Mid-run collapse: a single foreground voxel in a bright field gets
        // absorbed; the last valid mask comes back flagged.
        let mut labels = vec![0u8; 36];
        labels[3 + 6 * 3] = 2;
        let single = mask_of(labels.clone(), dims);
        let bright = Volume::new(
            dims,
            [1.0; 3],
            Orientation::identity(),
            VoxelKind::Normalized,
            vec![1.0; 36],
        )
        .unwrap();
        let out = active_contour_refine(&bright, &single, &ContourConfig::default()).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.mask.labels(), &labels[..]);
    }
}
