//! Core grid types: `Volume`, `Mask`, orientation metadata.

use std::collections::BTreeMap;

use super::VolioError;

/// Unit carried by a [`Volume`]'s voxel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelKind {
    /// Calibrated CT intensity (Hounsfield units).
    Hu,
    /// Window-normalized intensity in `[0, 1]`.
    Normalized,
    /// Per-voxel probability in `[0, 1]`.
    Probability,
}

/// Semantic class of a mask label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TissueClass {
    Background,
    Liver,
    Tumor,
}

/// Mapping from storage axes to anatomical R/A/S axes.
///
/// Storage axis `j` runs along anatomical axis `perm[j]` (0 = R, 1 = A,
/// 2 = S), reversed when `flip[j]` is set. The identity orientation means
/// storage order already is (R, A, S).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orientation {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl Orientation {
    pub fn identity() -> Self {
        Orientation {
            perm: [0, 1, 2],
            flip: [false, false, false],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perm == [0, 1, 2] && self.flip == [false, false, false]
    }

    /// Validates that `perm` is a permutation of `{0, 1, 2}`.
    pub fn validate(&self) -> Result<(), VolioError> {
        let mut seen = [false; 3];
        for &p in &self.perm {
            if p > 2 || seen[p] {
                return Err(VolioError::InvalidGrid(format!(
                    "orientation perm {:?} is not a permutation of axes",
                    self.perm
                )));
            }
            seen[p] = true;
        }
        Ok(())
    }
}

impl Default for Orientation {
    fn default() -> Self {
        Self::identity()
    }
}

fn check_geometry(dims: [usize; 3], spacing: [f32; 3]) -> Result<(), VolioError> {
    if dims.iter().any(|&d| d == 0) {
        return Err(VolioError::InvalidGrid(format!("zero dimension in {dims:?}")));
    }
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(VolioError::InvalidGrid(format!(
            "spacing {spacing:?} must be positive and finite"
        )));
    }
    Ok(())
}

/// 3D scalar grid with voxel spacing (mm) and orientation metadata.
///
/// Carrier of CT intensities, normalized intensities, and probabilities;
/// the unit is recorded in [`VoxelKind`]. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f32; 3],
    orientation: Orientation,
    kind: VoxelKind,
    data: Vec<f32>,
}

impl Volume {
    /// Builds a volume, validating every type invariant: data length equals
    /// the dims product, spacing positive, values finite, and values in
    /// `[0, 1]` for normalized/probability kinds.
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        orientation: Orientation,
        kind: VoxelKind,
        data: Vec<f32>,
    ) -> Result<Self, VolioError> {
        check_geometry(dims, spacing)?;
        orientation.validate()?;
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(VolioError::InvalidGrid(format!(
                "data length {} != dims product {}",
                data.len(),
                n
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(VolioError::NonFinite { index: i });
            }
            if matches!(kind, VoxelKind::Normalized | VoxelKind::Probability)
                && !(0.0..=1.0).contains(&v)
            {
                return Err(VolioError::InvalidGrid(format!(
                    "{kind:?} voxel {i} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(Volume {
            dims,
            spacing,
            orientation,
            kind,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn orientation(&self) -> &Orientation {
        &self.orientation
    }

    pub fn kind(&self) -> VoxelKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn num_voxels(&self) -> usize {
        self.data.len()
    }

    /// Linear index of voxel (x, y, z); x-fastest.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// Same grid geometry (dims, spacing, orientation) as `other`.
    pub fn aligned_with_mask(&self, other: &Mask) -> bool {
        self.dims == other.dims()
            && self.spacing == other.spacing()
            && self.orientation == *other.orientation()
    }
}

/// 3D label grid aligned with a [`Volume`].
///
/// Every label value occurring in `labels` is present in `label_map`;
/// per-voxel class lookup goes through a 256-entry table built once.
#[derive(Debug, Clone)]
pub struct Mask {
    dims: [usize; 3],
    spacing: [f32; 3],
    orientation: Orientation,
    labels: Vec<u8>,
    label_map: BTreeMap<u8, TissueClass>,
    class_table: [Option<TissueClass>; 256],
}

/// Canonical label values used by masks this crate constructs.
pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_LIVER: u8 = 1;
pub const LABEL_TUMOR: u8 = 2;

/// The canonical 0/1/2 → background/liver/tumor mapping.
pub fn standard_label_map() -> BTreeMap<u8, TissueClass> {
    BTreeMap::from([
        (LABEL_BACKGROUND, TissueClass::Background),
        (LABEL_LIVER, TissueClass::Liver),
        (LABEL_TUMOR, TissueClass::Tumor),
    ])
}

impl Mask {
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        orientation: Orientation,
        labels: Vec<u8>,
        label_map: BTreeMap<u8, TissueClass>,
    ) -> Result<Self, VolioError> {
        check_geometry(dims, spacing)?;
        orientation.validate()?;
        let n = dims[0] * dims[1] * dims[2];
        if labels.len() != n {
            return Err(VolioError::InvalidGrid(format!(
                "label length {} != dims product {}",
                labels.len(),
                n
            )));
        }
        let mut class_table = [None; 256];
        for (&label, &class) in &label_map {
            class_table[label as usize] = Some(class);
        }
        for (i, &l) in labels.iter().enumerate() {
            if class_table[l as usize].is_none() {
                return Err(VolioError::InvalidGrid(format!(
                    "label value {l} at voxel {i} missing from label map"
                )));
            }
        }
        Ok(Mask {
            dims,
            spacing,
            orientation,
            labels,
            label_map,
            class_table,
        })
    }

    /// Binary mask from a foreground grid; foreground voxels get the
    /// canonical label for `class`, the rest become background.
    pub fn from_foreground(
        dims: [usize; 3],
        spacing: [f32; 3],
        orientation: Orientation,
        foreground: &[bool],
        class: TissueClass,
    ) -> Result<Self, VolioError> {
        let label = match class {
            TissueClass::Background => LABEL_BACKGROUND,
            TissueClass::Liver => LABEL_LIVER,
            TissueClass::Tumor => LABEL_TUMOR,
        };
        let labels = foreground
            .iter()
            .map(|&f| if f { label } else { LABEL_BACKGROUND })
            .collect();
        let mut map = BTreeMap::from([(LABEL_BACKGROUND, TissueClass::Background)]);
        map.insert(label, class);
        Mask::new(dims, spacing, orientation, labels, map)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn orientation(&self) -> &Orientation {
        &self.orientation
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_map(&self) -> &BTreeMap<u8, TissueClass> {
        &self.label_map
    }

    pub fn num_voxels(&self) -> usize {
        self.labels.len()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn class_at(&self, i: usize) -> TissueClass {
        self.class_table[self.labels[i] as usize].expect("label map validated at construction")
    }

    /// True where the class is anything but background.
    pub fn is_foreground(&self, i: usize) -> bool {
        self.class_at(i) != TissueClass::Background
    }

    pub fn count_class(&self, class: TissueClass) -> usize {
        (0..self.labels.len())
            .filter(|&i| self.class_at(i) == class)
            .count()
    }

    pub fn count_foreground(&self) -> usize {
        (0..self.labels.len()).filter(|&i| self.is_foreground(i)).count()
    }

    /// Smallest label value mapped to `class`, inserting a fresh one into a
    /// copy of the map if absent. Used when an operation must write voxels
    /// of a class the input mask may not contain yet.
    pub fn label_for(&self, class: TissueClass) -> Option<u8> {
        self.label_map
            .iter()
            .find(|(_, &c)| c == class)
            .map(|(&l, _)| l)
    }

    pub fn aligned_with(&self, other: &Mask) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.orientation == other.orientation
    }

    /// Replaces the label grid keeping geometry and map; validates labels.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self, VolioError> {
        Mask::new(
            self.dims,
            self.spacing,
            self.orientation,
            labels,
            self.label_map.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_rejects_bad_lengths_and_spacing() {
        let err = Volume::new([2, 2, 2], [1.0; 3], Orientation::identity(), VoxelKind::Hu, vec![0.0; 7]);
        assert!(err.is_err());
        let err = Volume::new([2, 2, 2], [1.0, 0.0, 1.0], Orientation::identity(), VoxelKind::Hu, vec![0.0; 8]);
        assert!(err.is_err());
    }

    #[test]
    fn normalized_kind_enforces_unit_range() {
        let err = Volume::new(
            [1, 1, 2],
            [1.0; 3],
            Orientation::identity(),
            VoxelKind::Normalized,
            vec![0.5, 1.5],
        );
        assert!(err.is_err());
        assert!(Volume::new(
            [1, 1, 2],
            [1.0; 3],
            Orientation::identity(),
            VoxelKind::Normalized,
            vec![0.0, 1.0],
        )
        .is_ok());
    }

    #[test]
    fn mask_requires_mapped_labels() {
        let map = BTreeMap::from([(0u8, TissueClass::Background)]);
        let err = Mask::new([1, 1, 2], [1.0; 3], Orientation::identity(), vec![0, 3], map);
        assert!(err.is_err());
    }

    #[test]
    fn index_is_x_fastest() {
        let v = Volume::new(
            [3, 2, 2],
            [1.0; 3],
            Orientation::identity(),
            VoxelKind::Hu,
            (0..12).map(|i| i as f32).collect(),
        )
        .unwrap();
        assert_eq!(v.index(1, 0, 0), 1);
        assert_eq!(v.index(0, 1, 0), 3);
        assert_eq!(v.index(0, 0, 1), 6);
        assert_eq!(v.get(2, 1, 1), 11.0);
    }
}
