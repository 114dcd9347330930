//! Camera back-projection, voxel indexing and view-level overlap.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::index_set::PointIndexSet;
use crate::linalg::{RigidTransform, Vec3};
use crate::IGNORED;

/// Default voxel edge for view overlap, meters.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.05;

/// Pose rotation blocks must be orthonormal (and proper) within this bound.
pub const RIGIDITY_TOLERANCE: f64 = 1e-6;

/// Relative slack on the voxel-center radius test so that lattice distances
/// equal to the radius (the default `radius == voxel_size`) count as inside.
pub const CENTER_DISTANCE_TOLERANCE: f64 = 1e-9;

/// One scene: positions, colors and per-point semantic labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub scene_id: String,
    pub positions: Vec<Vec3>,
    pub colors: Vec<Vec3>,
    /// Category index or [`IGNORED`].
    pub labels: Vec<i32>,
}

impl PointCloud {
    pub fn new(
        scene_id: impl Into<String>,
        positions: Vec<Vec3>,
        colors: Vec<Vec3>,
        labels: Vec<i32>,
        num_categories: usize,
    ) -> Result<Self> {
        let cloud = Self { scene_id: scene_id.into(), positions, colors, labels };
        cloud.validate(num_categories)?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self, num_categories: usize) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::InvalidCloud(alloc::format!("scene `{}` has no points", self.scene_id)));
        }
        if self.colors.len() != n || self.labels.len() != n {
            return Err(Error::InvalidCloud(alloc::format!(
                "scene `{}`: {n} positions, {} colors, {} labels",
                self.scene_id,
                self.colors.len(),
                self.labels.len()
            )));
        }
        if let Some(i) = self.positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteCoordinate(i));
        }
        if let Some(i) = self.colors.iter().position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(Error::InvalidCloud(alloc::format!("color of point {i} outside [0, 1]")));
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l != IGNORED && (l < 0 || l as usize >= num_categories) {
                return Err(Error::LabelOutOfRange { index: i, label: l, classes: num_categories });
            }
        }
        Ok(())
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// One posed depth frame. `depth` is row-major `height × width`, meters, 0 = invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_id: String,
    pub intrinsics: Intrinsics,
    pub world_from_camera: RigidTransform,
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl CameraFrame {
    pub fn new(
        frame_id: impl Into<String>,
        intrinsics: Intrinsics,
        world_from_camera: RigidTransform,
        width: usize,
        height: usize,
        depth: Vec<f64>,
    ) -> Result<Self> {
        let frame = Self { frame_id: frame_id.into(), intrinsics, world_from_camera, width, height, depth };
        frame.validate()?;
        Ok(frame)
    }

    fn invalid(&self, reason: impl ToString) -> Error {
        Error::InvalidFrame { frame: self.frame_id.clone(), reason: reason.to_string() }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || !k.cx.is_finite() || !k.cy.is_finite() {
            return Err(self.invalid("focal lengths must be positive and intrinsics finite"));
        }
        let err = self.world_from_camera.rigidity_error();
        if !(err <= RIGIDITY_TOLERANCE) {
            return Err(self.invalid(alloc::format!("pose is not rigid (deviation {err:e})")));
        }
        if self.depth.len() != self.width * self.height {
            return Err(self.invalid(alloc::format!(
                "{} depth values for {}x{} image",
                self.depth.len(),
                self.height,
                self.width
            )));
        }
        if let Some(i) = self.depth.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(self.invalid(alloc::format!("depth at pixel {i} is negative or non-finite")));
        }
        Ok(())
    }

    #[inline]
    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    /// Forward pinhole projection of a world point: `(u, v, z)` with `z` the
    /// camera-space depth. `None` for points at or behind the camera plane.
    pub fn project(&self, world: Vec3) -> Option<(f64, f64, f64)> {
        let cam = self.world_from_camera.inverse().apply(world);
        project_camera(&self.intrinsics, cam)
    }
}

#[inline]
pub fn project_camera(k: &Intrinsics, cam: Vec3) -> Option<(f64, f64, f64)> {
    if cam[2] <= 0.0 {
        return None;
    }
    Some((k.fx * cam[0] / cam[2] + k.cx, k.fy * cam[1] / cam[2] + k.cy, cam[2]))
}

/// Inverse pinhole: pixel `(u, v)` at depth `d` in camera coordinates.
#[inline]
pub fn unproject_camera(k: &Intrinsics, u: f64, v: f64, d: f64) -> Vec3 {
    [d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d]
}

/// Lifts every `stride`-th pixel with positive depth into world space, row-major.
pub fn back_project(frame: &CameraFrame, stride: usize) -> Result<Vec<Vec3>> {
    if stride == 0 {
        return Err(Error::InvalidParameter { name: "stride", reason: "must be at least 1".into() });
    }
    frame.validate()?;
    let mut out = Vec::new();
    for v in (0..frame.height).step_by(stride) {
        for u in (0..frame.width).step_by(stride) {
            let d = frame.depth_at(u, v);
            if d > 0.0 {
                let cam = unproject_camera(&frame.intrinsics, u as f64, v as f64, d);
                out.push(frame.world_from_camera.apply(cam));
            }
        }
    }
    Ok(out)
}

pub type Cell = [i64; 3];

#[inline]
pub fn cell_of(p: Vec3, voxel_size: f64) -> Cell {
    [
        libm::floor(p[0] / voxel_size) as i64,
        libm::floor(p[1] / voxel_size) as i64,
        libm::floor(p[2] / voxel_size) as i64,
    ]
}

#[inline]
pub fn cell_center(c: Cell, voxel_size: f64) -> Vec3 {
    [
        (c[0] as f64 + 0.5) * voxel_size,
        (c[1] as f64 + 0.5) * voxel_size,
        (c[2] as f64 + 0.5) * voxel_size,
    ]
}

/// Whether a squared center distance counts as within `radius`.
#[inline]
pub fn within_radius(dist_sq: f64, radius: f64) -> bool {
    let r = radius * (1.0 + CENTER_DISTANCE_TOLERANCE);
    dist_sq <= r * r
}

/// Points grouped by floor-quantized voxel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelIndex {
    voxel_size: f64,
    cells: BTreeMap<Cell, Vec<u32>>,
}

impl VoxelIndex {
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn cells(&self) -> &BTreeMap<Cell, Vec<u32>> {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Dense cell id per point, cells numbered in sorted cell order.
    pub fn assignments(&self, num_points: usize) -> Vec<u32> {
        let mut out = alloc::vec![0u32; num_points];
        for (id, members) in self.cells.values().enumerate() {
            for &i in members {
                out[i as usize] = id as u32;
            }
        }
        out
    }
}

pub fn build_voxel_index(points: &[Vec3], voxel_size: f64) -> Result<VoxelIndex> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidParameter { name: "voxel_size", reason: "must be positive".into() });
    }
    let mut cells: BTreeMap<Cell, Vec<u32>> = BTreeMap::new();
    for (i, &p) in points.iter().enumerate() {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoordinate(i));
        }
        cells.entry(cell_of(p, voxel_size)).or_default().push(i as u32);
    }
    Ok(VoxelIndex { voxel_size, cells })
}

/// Cell offsets whose centers lie within `radius` of the origin cell's center.
fn neighborhood_offsets(voxel_size: f64, radius: f64) -> Vec<Cell> {
    let reach = libm::ceil(radius / voxel_size) as i64;
    let mut offsets = Vec::new();
    for dx in -reach..=reach {
        for dy in -reach..=reach {
            for dz in -reach..=reach {
                let d2 = ((dx * dx + dy * dy + dz * dz) as f64) * voxel_size * voxel_size;
                if within_radius(d2, radius) {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    offsets
}

/// Scene points whose voxel center lies within `radius` of an occupied voxel
/// center of the back-projected set.
pub fn view_overlap(
    scene: &PointCloud,
    back_projected: &[Vec3],
    voxel_size: f64,
    radius: f64,
) -> Result<PointIndexSet> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter { name: "radius", reason: "must be positive".into() });
    }
    let scene_index = build_voxel_index(&scene.positions, voxel_size)?;
    if back_projected.is_empty() {
        return Ok(PointIndexSet::empty(scene.scene_id.clone()));
    }
    let view_index = build_voxel_index(back_projected, voxel_size)?;
    // BTreeMap keys are already sorted and unique.
    let occupied: Vec<Cell> = view_index.cells.keys().copied().collect();
    let offsets = neighborhood_offsets(voxel_size, radius);

    let mut hits = Vec::new();
    for (cell, members) in &scene_index.cells {
        let touched = offsets.iter().any(|o| {
            let probe = [cell[0] + o[0], cell[1] + o[1], cell[2] + o[2]];
            occupied.binary_search(&probe).is_ok()
        });
        if touched {
            hits.extend_from_slice(members);
        }
    }
    Ok(PointIndexSet::from_unsorted(scene.scene_id.clone(), hits))
}
