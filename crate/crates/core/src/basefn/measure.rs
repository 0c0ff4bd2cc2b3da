//! Geometric measurements over masks: diameter estimators, intensity
//! statistics, Hausdorff distance, and border thickness.

use serde::{Deserialize, Serialize};

use crate::volume::{check_grids, Dims, Mask, Volume, VoxelGrid};

use super::BaseFnError;

/// Diameter estimation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMethod {
    Feret,
    EquivSphere,
    Bbox,
}

impl std::str::FromStr for DiameterMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feret" => Ok(Self::Feret),
            "equiv_sphere" => Ok(Self::EquivSphere),
            "bbox" => Ok(Self::Bbox),
            other => Err(format!(
                "unknown diameter method {other:?} (expected feret, equiv_sphere, or bbox)"
            )),
        }
    }
}

impl std::fmt::Display for DiameterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Feret => "feret",
            Self::EquivSphere => "equiv_sphere",
            Self::Bbox => "bbox",
        })
    }
}

fn foreground_centers(mask: &Mask, indices: impl Iterator<Item = usize>) -> Vec<[f64; 3]> {
    let dims = mask.dims();
    indices
        .map(|idx| {
            let (i, j, k) = dims.coords(idx);
            mask.center_mm(i, j, k)
        })
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

const FACE_NEIGHBORS: [(i64, i64, i64); 6] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
];

fn is_boundary(dims: Dims, voxels: &[u8], i: u32, j: u32, k: u32) -> bool {
    FACE_NEIGHBORS.iter().any(|&(di, dj, dk)| {
        let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
        if !dims.contains(ni, nj, nk) {
            return true; // out of bounds counts as background
        }
        voxels[dims.index(ni as u32, nj as u32, nk as u32)] == 0
    })
}

/// Foreground voxels with at least one background (or out-of-bounds)
/// 6-neighbor.
pub fn boundary_mask(mask: &Mask) -> Mask {
    let dims = mask.dims();
    let voxels = mask.voxels();
    let boundary: Vec<usize> = mask
        .foreground()
        .filter(|&idx| {
            let (i, j, k) = dims.coords(idx);
            is_boundary(dims, voxels, i, j, k)
        })
        .collect();
    Mask::from_indices(dims, mask.spacing_mm(), &boundary).expect("indices from the same grid")
}

/// Closes interior cavities: background is flood-filled from the grid border
/// through 6-adjacency, and everything unreached becomes foreground.
pub fn fill_cavities(mask: &Mask) -> Mask {
    let dims = mask.dims();
    let voxels = mask.voxels();
    let mut outside = vec![false; voxels.len()];
    let mut queue = Vec::new();

    let seed = |i: u32, j: u32, k: u32, outside: &mut Vec<bool>, queue: &mut Vec<usize>| {
        let idx = dims.index(i, j, k);
        if voxels[idx] == 0 && !outside[idx] {
            outside[idx] = true;
            queue.push(idx);
        }
    };
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                if i == 0 || j == 0 || k == 0 || i == dims.nx - 1 || j == dims.ny - 1 || k == dims.nz - 1
                {
                    seed(i, j, k, &mut outside, &mut queue);
                }
            }
        }
    }
    while let Some(idx) = queue.pop() {
        let (i, j, k) = dims.coords(idx);
        for &(di, dj, dk) in &FACE_NEIGHBORS {
            let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
            if !dims.contains(ni, nj, nk) {
                continue;
            }
            let nidx = dims.index(ni as u32, nj as u32, nk as u32);
            if voxels[nidx] == 0 && !outside[nidx] {
                outside[nidx] = true;
                queue.push(nidx);
            }
        }
    }

    let filled: Vec<u8> = outside.iter().map(|&o| if o { 0 } else { 1 }).collect();
    Mask::new(dims, mask.spacing_mm(), filled).expect("same grid")
}

/// Maximum pairwise distance between foreground voxel centers, in mm.
///
/// The maximizing pair always lies on the 6-boundary: a voxel with all six
/// face neighbors present can be moved one step along the dominant axis of
/// any pair direction to strictly increase the distance. Restricting the
/// O(n^2) scan to boundary voxels is therefore exact.
pub fn diameter_feret_mm(mask: &Mask) -> Result<f64, BaseFnError> {
    if mask.is_empty() {
        return Err(BaseFnError::EmptyMask);
    }
    let boundary = boundary_mask(mask);
    let centers = foreground_centers(mask, boundary.foreground());
    let mut best = 0.0f64;
    for (n, a) in centers.iter().enumerate() {
        for b in &centers[n + 1..] {
            let d = dist2(a, b);
            if d > best {
                best = d;
            }
        }
    }
    Ok(best.sqrt())
}

/// Diameter of the sphere with the same physical volume as the mask, in mm.
pub fn diameter_equiv_sphere_mm(mask: &Mask) -> Result<f64, BaseFnError> {
    if mask.is_empty() {
        return Err(BaseFnError::EmptyMask);
    }
    let volume = mask.popcount() as f64 * mask.voxel_volume_mm3();
    Ok((6.0 * volume / std::f64::consts::PI).cbrt())
}

/// Largest axis-aligned extent between voxel centers, in mm.
pub fn diameter_bbox_mm(mask: &Mask) -> Result<f64, BaseFnError> {
    if mask.is_empty() {
        return Err(BaseFnError::EmptyMask);
    }
    let dims = mask.dims();
    let [sx, sy, sz] = mask.spacing_f64();
    let mut lo = [u32::MAX; 3];
    let mut hi = [0u32; 3];
    for idx in mask.foreground() {
        let (i, j, k) = dims.coords(idx);
        for (axis, v) in [i, j, k].into_iter().enumerate() {
            lo[axis] = lo[axis].min(v);
            hi[axis] = hi[axis].max(v);
        }
    }
    let ext_x = (hi[0] - lo[0]) as f64 * sx;
    let ext_y = (hi[1] - lo[1]) as f64 * sy;
    let ext_z = (hi[2] - lo[2]) as f64 * sz;
    Ok(ext_x.max(ext_y).max(ext_z))
}

/// Dispatches to the chosen estimator and converts mm to cm.
pub fn calc_mass_diameter_cm(mask: &Mask, method: DiameterMethod) -> Result<f64, BaseFnError> {
    let mm = match method {
        DiameterMethod::Feret => diameter_feret_mm(mask)?,
        DiameterMethod::EquivSphere => diameter_equiv_sphere_mm(mask)?,
        DiameterMethod::Bbox => diameter_bbox_mm(mask)?,
    };
    Ok(mm / 10.0)
}

/// Arithmetic mean HU over the mask's foreground voxels.
pub fn mean_intensity_hu(vol: &Volume, mask: &Mask) -> Result<f64, BaseFnError> {
    mask.check_compatible(vol)?;
    if mask.is_empty() {
        return Err(BaseFnError::EmptyMask);
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for idx in mask.foreground() {
        sum += vol.voxels()[idx] as f64;
        count += 1;
    }
    Ok(sum / count as f64)
}

fn directed_hausdorff2(from: &[[f64; 3]], to: &[[f64; 3]]) -> f64 {
    let mut worst = 0.0f64;
    for a in from {
        let mut best = f64::INFINITY;
        for b in to {
            let d = dist2(a, b);
            if d < best {
                best = d;
                if best == 0.0 {
                    break;
                }
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Symmetric Hausdorff distance between two masks' voxel centers, in mm.
pub fn hausdorff_mm(a: &Mask, b: &Mask) -> Result<f64, BaseFnError> {
    check_grids(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(BaseFnError::EmptyMask);
    }
    let ca = foreground_centers(a, a.foreground());
    let cb = foreground_centers(b, b.foreground());
    let d2 = directed_hausdorff2(&ca, &cb).max(directed_hausdorff2(&cb, &ca));
    Ok(d2.sqrt())
}

/// Hausdorff distance between the shell's boundary and the boundary of its
/// cavity-filled solid. Zero for solid masks, whose two boundaries coincide.
pub fn border_thickness_mm(shell: &Mask) -> Result<f64, BaseFnError> {
    if shell.is_empty() {
        return Err(BaseFnError::EmptyMask);
    }
    let outer = boundary_mask(&fill_cavities(shell));
    let both = boundary_mask(shell);
    hausdorff_mm(&both, &outer)
}
