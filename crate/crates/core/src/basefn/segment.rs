//! Threshold + connected-component segmentation stand-ins for the learned
//! organ and mass models, behind the same operation contracts.

use crate::volume::{Dims, Mask, Volume, VoxelGrid};

use super::{AttributeMap, BaseFnError, LesionRecord, LesionSet, SegmentationParams};

/// 26-connected components of the foreground predicate, in scan discovery
/// order. Each component is a sorted list of linear indices.
pub(crate) fn components_26(dims: Dims, foreground: &[bool]) -> Vec<Vec<usize>> {
    debug_assert_eq!(foreground.len(), dims.len());
    let mut visited = vec![false; foreground.len()];
    let mut components = Vec::new();
    let mut queue = Vec::new();

    for start in 0..foreground.len() {
        if !foreground[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.clear();
        queue.push(start);
        let mut component = Vec::new();
        while let Some(idx) = queue.pop() {
            component.push(idx);
            let (i, j, k) = dims.coords(idx);
            for dk in -1i64..=1 {
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        if di == 0 && dj == 0 && dk == 0 {
                            continue;
                        }
                        let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        if !dims.contains(ni, nj, nk) {
                            continue;
                        }
                        let nidx = dims.index(ni as u32, nj as u32, nk as u32);
                        if foreground[nidx] && !visited[nidx] {
                            visited[nidx] = true;
                            queue.push(nidx);
                        }
                    }
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}

fn window_mask(vol: &Volume, params: &SegmentationParams) -> Vec<bool> {
    vol.voxels().iter().map(|&v| params.contains(v)).collect()
}

/// Largest 26-connected component of voxels inside the HU window; empty mask
/// when nothing qualifies. Ties go to the first component in scan order.
pub fn segment_organ(vol: &Volume, params: &SegmentationParams) -> Mask {
    let foreground = window_mask(vol, params);
    let components = components_26(vol.dims(), &foreground);
    let mut best: Option<&Vec<usize>> = None;
    for c in &components {
        if best.is_none_or(|b| c.len() > b.len()) {
            best = Some(c);
        }
    }
    match best {
        Some(indices) => Mask::from_indices(vol.dims(), vol.spacing_mm(), indices)
            .expect("indices come from the volume grid"),
        None => Mask::empty(vol.dims(), vol.spacing_mm()).expect("spacing already validated"),
    }
}

/// Each sufficiently large 26-connected component of in-window voxels inside
/// the organ mask becomes one lesion. Ids follow scan discovery order; the
/// set is ordered by descending voxel count, ties by ascending id.
pub fn segment_masses(
    vol: &Volume,
    organ: &Mask,
    params: &SegmentationParams,
    source_organ: &str,
) -> Result<LesionSet, BaseFnError> {
    organ.check_compatible(vol)?;
    let organ_voxels = organ.voxels();
    let foreground: Vec<bool> = vol
        .voxels()
        .iter()
        .zip(organ_voxels)
        .map(|(&hu, &inside)| inside != 0 && params.contains(hu))
        .collect();

    let mut lesions: Vec<LesionRecord> = components_26(vol.dims(), &foreground)
        .into_iter()
        .filter(|c| c.len() >= params.min_component_voxels)
        .enumerate()
        .map(|(n, indices)| LesionRecord {
            lesion_id: n as u32 + 1,
            mask: Mask::from_indices(vol.dims(), vol.spacing_mm(), &indices)
                .expect("indices come from the volume grid"),
            attributes: AttributeMap::new(),
        })
        .collect();

    lesions.sort_by_key(|l| (std::cmp::Reverse(l.mask.popcount()), l.lesion_id));

    Ok(LesionSet {
        lesions,
        source_organ: source_organ.to_string(),
    })
}
