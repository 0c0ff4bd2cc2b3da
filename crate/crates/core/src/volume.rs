//! 3D voxel grids with physical spacing and the raw CTV1/CTK1 file formats.
//!
//! A [`Volume`] stores signed 16-bit Hounsfield intensities, a [`Mask`] stores
//! binary labels. Both are immutable after construction and share the same
//! header layout on disk: 4-byte magic, dims as three u32, spacing as three
//! f32 (all little-endian), then the raw voxel payload in x-fastest order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VOLUME_MAGIC: [u8; 4] = *b"CTV1";
pub const MASK_MAGIC: [u8; 4] = *b"CTK1";
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated or oversized payload: header implies {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("dimension component is zero")]
    ZeroDim,
    #[error("invalid spacing {0}: must be finite and > 0")]
    BadSpacing(f32),
    #[error("invalid mask value {value} at linear index {index}")]
    InvalidMaskValue { value: u8, index: usize },
    #[error("voxel buffer holds {found} values, dims imply {expected}")]
    VoxelCount { expected: usize, found: usize },
    #[error(transparent)]
    Dims(#[from] DimensionMismatch),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Grid extents. Components are always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
}

#[allow(clippy::len_without_is_empty)] // dims are positive by construction
impl Dims {
    pub fn new(nx: u32, ny: u32, nz: u32) -> Result<Self, VolumeError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::ZeroDim);
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn len(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nz as usize
    }

    /// Linear index with x fastest: `i + nx*(j + ny*k)`.
    pub fn index(&self, i: u32, j: u32, k: u32) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i as usize + self.nx as usize * (j as usize + self.ny as usize * k as usize)
    }

    /// Inverse of [`Dims::index`].
    pub fn coords(&self, index: usize) -> (u32, u32, u32) {
        debug_assert!(index < self.len());
        let nx = self.nx as usize;
        let ny = self.ny as usize;
        let i = index % nx;
        let j = (index / nx) % ny;
        let k = index / (nx * ny);
        (i as u32, j as u32, k as u32)
    }

    pub fn contains(&self, i: i64, j: i64, k: i64) -> bool {
        (0..self.nx as i64).contains(&i)
            && (0..self.ny as i64).contains(&j)
            && (0..self.nz as i64).contains(&k)
    }
}

/// In-bounds voxel coordinate, checked at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelIndex {
    i: u32,
    j: u32,
    k: u32,
}

impl VoxelIndex {
    pub fn new(dims: Dims, i: u32, j: u32, k: u32) -> Option<Self> {
        (i < dims.nx && j < dims.ny && k < dims.nz).then_some(Self { i, j, k })
    }

    pub fn i(&self) -> u32 {
        self.i
    }
    pub fn j(&self) -> u32 {
        self.j
    }
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn linear(&self, dims: Dims) -> usize {
        dims.index(self.i, self.j, self.k)
    }
}

fn check_spacing(spacing_mm: [f32; 3]) -> Result<(), VolumeError> {
    for s in spacing_mm {
        if !s.is_finite() || s <= 0.0 {
            return Err(VolumeError::BadSpacing(s));
        }
    }
    Ok(())
}

/// Shared geometry of volumes and masks.
pub trait VoxelGrid {
    fn dims(&self) -> Dims;
    fn spacing_mm(&self) -> [f32; 3];

    fn spacing_f64(&self) -> [f64; 3] {
        let s = self.spacing_mm();
        [s[0] as f64, s[1] as f64, s[2] as f64]
    }

    /// Physical volume of one voxel in cubic millimeters.
    fn voxel_volume_mm3(&self) -> f64 {
        let [sx, sy, sz] = self.spacing_f64();
        sx * sy * sz
    }

    /// Physical position of a voxel center in millimeters.
    fn center_mm(&self, i: u32, j: u32, k: u32) -> [f64; 3] {
        let [sx, sy, sz] = self.spacing_f64();
        [i as f64 * sx, j as f64 * sy, k as f64 * sz]
    }
}

/// 3D scan of signed 16-bit Hounsfield intensities, x-fastest linear order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing_mm: [f32; 3],
    voxels: Vec<i16>,
}

impl Volume {
    pub fn new(dims: Dims, spacing_mm: [f32; 3], voxels: Vec<i16>) -> Result<Self, VolumeError> {
        check_spacing(spacing_mm)?;
        if voxels.len() != dims.len() {
            return Err(VolumeError::VoxelCount {
                expected: dims.len(),
                found: voxels.len(),
            });
        }
        Ok(Self {
            dims,
            spacing_mm,
            voxels,
        })
    }

    /// Uniform volume filled with one intensity.
    pub fn filled(dims: Dims, spacing_mm: [f32; 3], hu: i16) -> Result<Self, VolumeError> {
        Self::new(dims, spacing_mm, vec![hu; dims.len()])
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn get(&self, i: u32, j: u32, k: u32) -> i16 {
        self.voxels[self.dims.index(i, j, k)]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.voxels.len() * 2);
        encode_header(&mut buf, VOLUME_MAGIC, self.dims, self.spacing_mm);
        for v in &self.voxels {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VolumeError> {
        let (dims, spacing, payload) = decode_header(bytes, VOLUME_MAGIC, 2)?;
        let voxels = payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        Self::new(dims, spacing, voxels)
    }
}

impl VoxelGrid for Volume {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn spacing_mm(&self) -> [f32; 3] {
        self.spacing_mm
    }
}

/// Binary label grid; every stored value is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    dims: Dims,
    spacing_mm: [f32; 3],
    voxels: Vec<u8>,
}

impl Mask {
    pub fn new(dims: Dims, spacing_mm: [f32; 3], voxels: Vec<u8>) -> Result<Self, VolumeError> {
        check_spacing(spacing_mm)?;
        if voxels.len() != dims.len() {
            return Err(VolumeError::VoxelCount {
                expected: dims.len(),
                found: voxels.len(),
            });
        }
        if let Some(index) = voxels.iter().position(|&v| v > 1) {
            return Err(VolumeError::InvalidMaskValue {
                value: voxels[index],
                index,
            });
        }
        Ok(Self {
            dims,
            spacing_mm,
            voxels,
        })
    }

    pub fn empty(dims: Dims, spacing_mm: [f32; 3]) -> Result<Self, VolumeError> {
        Self::new(dims, spacing_mm, vec![0; dims.len()])
    }

    /// Mask with the given linear indices set to 1.
    pub fn from_indices(
        dims: Dims,
        spacing_mm: [f32; 3],
        indices: &[usize],
    ) -> Result<Self, VolumeError> {
        let mut voxels = vec![0u8; dims.len()];
        for &idx in indices {
            if idx >= voxels.len() {
                return Err(VolumeError::VoxelCount {
                    expected: dims.len(),
                    found: idx + 1,
                });
            }
            voxels[idx] = 1;
        }
        Self::new(dims, spacing_mm, voxels)
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn get(&self, i: u32, j: u32, k: u32) -> bool {
        self.voxels[self.dims.index(i, j, k)] != 0
    }

    /// Number of foreground voxels.
    pub fn popcount(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.iter().all(|&v| v == 0)
    }

    /// Linear indices of foreground voxels in scan order.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.voxels
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(idx, _)| idx)
    }

    /// Fails with [`DimensionMismatch`] unless `other` shares dims and spacing.
    pub fn check_compatible<G: VoxelGrid>(&self, other: &G) -> Result<(), DimensionMismatch> {
        check_grids(self, other)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.voxels.len());
        encode_header(&mut buf, MASK_MAGIC, self.dims, self.spacing_mm);
        buf.extend_from_slice(&self.voxels);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VolumeError> {
        let (dims, spacing, payload) = decode_header(bytes, MASK_MAGIC, 1)?;
        Self::new(dims, spacing, payload.to_vec())
    }
}

impl VoxelGrid for Mask {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn spacing_mm(&self) -> [f32; 3] {
        self.spacing_mm
    }
}

/// Guard for any operation combining two grids.
pub fn check_grids<A: VoxelGrid + ?Sized, B: VoxelGrid + ?Sized>(
    a: &A,
    b: &B,
) -> Result<(), DimensionMismatch> {
    if a.dims() != b.dims() || a.spacing_mm() != b.spacing_mm() {
        return Err(DimensionMismatch {
            left: format!("dims {:?} spacing {:?}", a.dims(), a.spacing_mm()),
            right: format!("dims {:?} spacing {:?}", b.dims(), b.spacing_mm()),
        });
    }
    Ok(())
}

fn encode_header(buf: &mut Vec<u8>, magic: [u8; 4], dims: Dims, spacing: [f32; 3]) {
    buf.extend_from_slice(&magic);
    for d in [dims.nx, dims.ny, dims.nz] {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for s in spacing {
        buf.extend_from_slice(&s.to_le_bytes());
    }
}

fn decode_header(
    bytes: &[u8],
    magic: [u8; 4],
    bytes_per_voxel: u64,
) -> Result<(Dims, [f32; 3], &[u8]), VolumeError> {
    if bytes.len() < HEADER_LEN {
        return Err(VolumeError::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[0..4] != magic {
        return Err(VolumeError::BadMagic {
            expected: String::from_utf8_lossy(&magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[0..4]).into_owned(),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let dims = Dims::new(u32_at(4), u32_at(8), u32_at(12))?;
    let spacing = [f32_at(16), f32_at(20), f32_at(24)];
    check_spacing(spacing)?;
    let expected = dims.nx as u64 * dims.ny as u64 * dims.nz as u64 * bytes_per_voxel;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(VolumeError::Truncated {
            expected,
            found: payload.len() as u64,
        });
    }
    Ok((dims, spacing, payload))
}

pub fn read_volume<P: AsRef<Path>>(path: P) -> Result<Volume, VolumeError> {
    Volume::from_bytes(&std::fs::read(path)?)
}

pub fn write_volume<P: AsRef<Path>>(vol: &Volume, path: P) -> Result<(), VolumeError> {
    std::fs::write(path, vol.to_bytes())?;
    Ok(())
}

pub fn read_mask<P: AsRef<Path>>(path: P) -> Result<Mask, VolumeError> {
    Mask::from_bytes(&std::fs::read(path)?)
}

pub fn write_mask<P: AsRef<Path>>(mask: &Mask, path: P) -> Result<(), VolumeError> {
    std::fs::write(path, mask.to_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(nx: u32, ny: u32, nz: u32) -> Dims {
        Dims::new(nx, ny, nz).unwrap()
    }

    #[test]
    fn minimal_volume_file_round_trips() {
        let vol = Volume::new(dims(1, 1, 1), [1.0, 1.0, 1.0], vec![0]).unwrap();
        let bytes = vol.to_bytes();
        assert_eq!(&bytes[0..4], b"CTV1");
        assert_eq!(bytes.len(), HEADER_LEN + 2);
        let back = Volume::from_bytes(&bytes).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let vol = Volume::new(dims(1, 1, 1), [1.0, 1.0, 1.0], vec![0]).unwrap();
        let mut bytes = vol.to_bytes();
        bytes[0..4].copy_from_slice(b"CTM1");
        assert!(matches!(
            Volume::from_bytes(&bytes),
            Err(VolumeError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        // dims (2,2,2) but only 7 voxel values present
        let vol = Volume::new(dims(2, 2, 2), [1.0, 1.0, 1.0], vec![5; 8]).unwrap();
        let mut bytes = vol.to_bytes();
        bytes.truncate(HEADER_LEN + 7 * 2);
        assert!(matches!(
            Volume::from_bytes(&bytes),
            Err(VolumeError::Truncated { .. })
        ));
    }

    #[test]
    fn oversized_payload_is_rejected() {
        let vol = Volume::new(dims(2, 2, 2), [1.0, 1.0, 1.0], vec![5; 8]).unwrap();
        let mut bytes = vol.to_bytes();
        bytes.extend_from_slice(&[0, 0]);
        assert!(matches!(
            Volume::from_bytes(&bytes),
            Err(VolumeError::Truncated { .. })
        ));
    }

    #[test]
    fn zero_dim_and_bad_spacing_are_rejected() {
        let vol = Volume::new(dims(1, 1, 1), [1.0, 1.0, 1.0], vec![0]).unwrap();
        let mut bytes = vol.to_bytes();
        bytes[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            Volume::from_bytes(&bytes),
            Err(VolumeError::ZeroDim)
        ));

        let mut bytes = vol.to_bytes();
        bytes[16..20].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(
            Volume::from_bytes(&bytes),
            Err(VolumeError::BadSpacing(_))
        ));
        let mut bytes = vol.to_bytes();
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            Volume::from_bytes(&bytes),
            Err(VolumeError::BadSpacing(_))
        ));
    }

    #[test]
    fn volume_file_length_matches_format() {
        // header 28 bytes + 3*2*1 voxels * 2 bytes
        let vol = Volume::new(dims(3, 2, 1), [1.0, 1.0, 1.0], vec![0; 6]).unwrap();
        assert_eq!(vol.to_bytes().len(), 28 + 12);
    }

    #[test]
    fn writes_are_deterministic() {
        let vol = Volume::new(dims(2, 3, 4), [0.5, 0.5, 2.0], (0..24).collect()).unwrap();
        assert_eq!(vol.to_bytes(), vol.to_bytes());
    }

    #[test]
    fn mask_round_trip_and_bad_value() {
        let mask = Mask::from_indices(dims(4, 4, 4), [1.0, 1.0, 1.0], &[0, 5, 63]).unwrap();
        let bytes = mask.to_bytes();
        assert_eq!(&bytes[0..4], b"CTK1");
        assert_eq!(Mask::from_bytes(&bytes).unwrap(), mask);

        let mut bytes = mask.to_bytes();
        bytes[HEADER_LEN + 1] = 2;
        assert!(matches!(
            Mask::from_bytes(&bytes),
            Err(VolumeError::InvalidMaskValue { value: 2, index: 1 })
        ));
    }

    #[test]
    fn empty_mask_has_zero_popcount() {
        let mask = Mask::empty(dims(4, 4, 4), [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(mask.popcount(), 0);
        assert!(mask.is_empty());
        let back = Mask::from_bytes(&mask.to_bytes()).unwrap();
        assert_eq!(back.popcount(), 0);
    }

    #[test]
    fn voxel_volume_from_spacing() {
        let v = Volume::filled(dims(1, 1, 1), [1.0, 1.0, 1.0], 0).unwrap();
        assert_eq!(v.voxel_volume_mm3(), 1.0);
        let v = Volume::filled(dims(1, 1, 1), [0.5, 0.5, 2.0], 0).unwrap();
        assert!((v.voxel_volume_mm3() - 0.5).abs() < 1e-9);
        let v = Volume::filled(dims(1, 1, 1), [0.7, 0.7, 3.0], 0).unwrap();
        assert!((v.voxel_volume_mm3() - 1.47).abs() < 1e-6);
    }

    #[test]
    fn joint_guard_rejects_mismatched_grids() {
        let a = Mask::empty(dims(2, 2, 2), [1.0, 1.0, 1.0]).unwrap();
        let b = Volume::filled(dims(2, 2, 3), [1.0, 1.0, 1.0], 0).unwrap();
        assert!(a.check_compatible(&b).is_err());
        let c = Volume::filled(dims(2, 2, 2), [1.0, 1.0, 2.0], 0).unwrap();
        assert!(a.check_compatible(&c).is_err());
        let d = Volume::filled(dims(2, 2, 2), [1.0, 1.0, 1.0], 0).unwrap();
        assert!(a.check_compatible(&d).is_ok());
    }

    #[test]
    fn voxel_index_is_checked() {
        let d = dims(2, 3, 4);
        assert!(VoxelIndex::new(d, 1, 2, 3).is_some());
        assert!(VoxelIndex::new(d, 2, 0, 0).is_none());
        assert_eq!(VoxelIndex::new(d, 1, 2, 3).unwrap().linear(d), d.len() - 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dims() -> impl Strategy<Value = Dims> {
            (1u32..6, 1u32..6, 1u32..6).prop_map(|(nx, ny, nz)| Dims { nx, ny, nz })
        }

        proptest! {
            #[test]
            fn volume_round_trip(d in arb_dims(), seed in any::<u16>()) {
                let n = d.len();
                let voxels: Vec<i16> = (0..n).map(|i| (i as i32 * 31 + seed as i32) as i16).collect();
                let vol = Volume::new(d, [0.5, 1.0, 2.0], voxels).unwrap();
                prop_assert_eq!(Volume::from_bytes(&vol.to_bytes()).unwrap(), vol);
            }

            #[test]
            fn mask_round_trip(d in arb_dims(), seed in any::<u32>()) {
                let n = d.len();
                let voxels: Vec<u8> = (0..n).map(|i| ((i as u32 ^ seed) & 1) as u8).collect();
                let mask = Mask::new(d, [0.8, 0.8, 2.5], voxels).unwrap();
                prop_assert_eq!(Mask::from_bytes(&mask.to_bytes()).unwrap(), mask);
            }

            #[test]
            fn linear_index_is_a_bijection(d in arb_dims()) {
                let mut seen = vec![false; d.len()];
                for k in 0..d.nz {
                    for j in 0..d.ny {
                        for i in 0..d.nx {
                            let idx = d.index(i, j, k);
                            prop_assert!(!seen[idx]);
                            seen[idx] = true;
                            prop_assert_eq!(d.coords(idx), (i, j, k));
                        }
                    }
                }
                prop_assert!(seen.into_iter().all(|b| b));
            }
        }
    }
}
