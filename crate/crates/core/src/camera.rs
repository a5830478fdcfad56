//! Pinhole cameras, rays, and stratified sampling along rays.
//!
//! Conventions: camera space is x right, y down, z forward (optical axis);
//! poses are stored camera-to-world; pixel (i, j) is sampled at its center
//! (i + 0.5, j + 0.5). All geometry runs in f64.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Mᵀv, the inverse rotation for orthonormal M.
pub fn mat_tvec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub const MAT3_IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, PartialEq)]
pub enum CameraError {
    BadIntrinsics(String),
    NotOrthonormal { deviation: f64 },
    NotRightHanded { det: f64 },
    BadRayBounds { t_near: f64, t_far: f64 },
    NotUnit { norm: f64 },
    PixelOutOfRange { index: (u32, u32), extent: (u32, u32) },
}

impl fmt::Display for CameraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraError::BadIntrinsics(m) => write!(f, "bad intrinsics: {m}"),
            CameraError::NotOrthonormal { deviation } => {
                write!(f, "rotation not orthonormal (max |RᵀR - I| = {deviation:.2e})")
            }
            CameraError::NotRightHanded { det } => {
                write!(f, "rotation determinant {det:.6} != +1")
            }
            CameraError::BadRayBounds { t_near, t_far } => {
                write!(f, "ray bounds must satisfy 0 <= t_near < t_far, got [{t_near}, {t_far}]")
            }
            CameraError::NotUnit { norm } => write!(f, "direction norm {norm} != 1"),
            CameraError::PixelOutOfRange { index, extent } => write!(
                f,
                "pixel ({}, {}) outside image extent {}x{}",
                index.0, index.1, extent.0, extent.1
            ),
        }
    }
}

impl std::error::Error for CameraError {}

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, CameraError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::BadIntrinsics(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(CameraError::BadIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Symmetric default: principal point at the image center, focal length
    /// chosen so the unit sphere at distance 2 fills most of the frame.
    pub fn simple(width: u32, height: u32, focal_px: f64) -> Self {
        Intrinsics {
            fx: focal_px,
            fy: focal_px,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Columns are the camera basis vectors expressed in world coordinates.
    pub rotation: Mat3,
    /// Camera position in world coordinates.
    pub translation: Vec3,
}

const ORTHO_TOL: f64 = 1e-6;

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, CameraError> {
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut rr = 0.0;
                for k in 0..3 {
                    rr += rotation[k][i] * rotation[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((rr - target).abs());
            }
        }
        if dev > ORTHO_TOL {
            return Err(CameraError::NotOrthonormal { deviation: dev });
        }
        let det = det3(&rotation);
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(CameraError::NotRightHanded { det });
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: MAT3_IDENTITY,
            translation: [0.0; 3],
        }
    }

    /// Camera at `eye` looking at `target`, with `up` fixing the roll.
    /// Camera convention: x right, y down, z toward the target.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self, CameraError> {
        let forward = normalize(sub(target, eye));
        let right = normalize(cross(forward, up));
        let down = cross(forward, right);
        let rotation = [
            [right[0], down[0], forward[0]],
            [right[1], down[1], forward[1]],
            [right[2], down[2], forward[2]],
        ];
        Pose::new(rotation, eye)
    }

    /// World point -> camera-local coordinates.
    pub fn to_local(&self, point: Vec3) -> Vec3 {
        // inverse of an orthonormal matrix is its transpose
        mat_tvec(&self.rotation, sub(point, self.translation))
    }

    /// Camera-local point -> world coordinates.
    pub fn to_world(&self, point: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, point), self.translation)
    }

    /// Rotates a direction from world into the camera frame (no translation).
    pub fn dir_to_local(&self, dir: Vec3) -> Vec3 {
        mat_tvec(&self.rotation, dir)
    }
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// A ray with unit direction and clip bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Self, CameraError> {
        let n = norm(direction);
        if (n - 1.0).abs() > 1e-6 {
            return Err(CameraError::NotUnit { norm: n });
        }
        if !(t_near >= 0.0 && t_near < t_far) {
            return Err(CameraError::BadRayBounds { t_near, t_far });
        }
        Ok(Ray {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        add(self.origin, scale(self.direction, t))
    }
}

/// Scene-wide clip planes: objects are normalized into the unit sphere and
/// cameras sit on a radius-2 sphere.
pub const T_NEAR: f64 = 0.5;
pub const T_FAR: f64 = 3.5;

/// Ray through an arbitrary continuous pixel coordinate (u, v).
pub fn ray_through(intrinsics: &Intrinsics, pose: &Pose, u: f64, v: f64) -> Ray {
    let dir_cam = [
        (u - intrinsics.cx) / intrinsics.fx,
        (v - intrinsics.cy) / intrinsics.fy,
        1.0,
    ];
    let dir_world = normalize(mat_vec(&pose.rotation, dir_cam));
    Ray {
        origin: pose.translation,
        direction: dir_world,
        t_near: T_NEAR,
        t_far: T_FAR,
    }
}

/// One ray per pixel center for the given integer pixel indices.
pub fn generate_rays(
    intrinsics: &Intrinsics,
    pose: &Pose,
    pixel_indices: &[(u32, u32)],
) -> Result<Vec<Ray>, CameraError> {
    let mut rays = Vec::with_capacity(pixel_indices.len());
    for &(i, j) in pixel_indices {
        if i >= intrinsics.width || j >= intrinsics.height {
            return Err(CameraError::PixelOutOfRange {
                index: (i, j),
                extent: (intrinsics.width, intrinsics.height),
            });
        }
        rays.push(ray_through(
            intrinsics,
            pose,
            i as f64 + 0.5,
            j as f64 + 0.5,
        ));
    }
    Ok(rays)
}

/// Projection of a world point: pixel coordinates plus camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub behind_camera: bool,
    pub in_frustum: bool,
}

pub fn project(point: Vec3, intrinsics: &Intrinsics, pose: &Pose) -> Projection {
    let local = pose.to_local(point);
    let depth = local[2];
    if depth <= 1e-8 {
        return Projection {
            u: 0.0,
            v: 0.0,
            depth,
            behind_camera: true,
            in_frustum: false,
        };
    }
    let u = intrinsics.fx * local[0] / depth + intrinsics.cx;
    let v = intrinsics.fy * local[1] / depth + intrinsics.cy;
    let in_frustum =
        u >= 0.0 && u <= intrinsics.width as f64 && v >= 0.0 && v <= intrinsics.height as f64;
    Projection {
        u,
        v,
        depth,
        behind_camera: false,
        in_frustum,
    }
}

/// One uniform draw per equal-width bin of [t_near, t_far], sorted.
pub fn stratified_sample<R: Rng>(ray: &Ray, n_samples: usize, rng: &mut R) -> Vec<f64> {
    assert!(n_samples >= 1, "need at least one sample per ray");
    let width = (ray.t_far - ray.t_near) / n_samples as f64;
    let mut ts = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let jitter: f64 = rng.random::<f64>();
        ts.push(ray.t_near + (i as f64 + jitter) * width);
    }
    ts
}

/// Sample positions at bin midpoints (deterministic; used at eval time).
pub fn midpoint_sample(ray: &Ray, n_samples: usize) -> Vec<f64> {
    let width = (ray.t_far - ray.t_near) / n_samples as f64;
    (0..n_samples)
        .map(|i| ray.t_near + (i as f64 + 0.5) * width)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn principal_point_ray_is_optical_axis() {
        let intr = Intrinsics::simple(64, 64, 80.0);
        let pose = Pose::identity();
        let ray = ray_through(&intr, &pose, intr.cx, intr.cy);
        assert_eq!(ray.origin, [0.0, 0.0, 0.0]);
        assert!((ray.direction[0]).abs() < 1e-12);
        assert!((ray.direction[1]).abs() < 1e-12);
        assert!((ray.direction[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn translation_shifts_origins_not_directions() {
        let intr = Intrinsics::simple(32, 32, 40.0);
        let identity = Pose::identity();
        let shifted = Pose {
            rotation: MAT3_IDENTITY,
            translation: [1.0, -2.0, 3.0],
        };
        let px: Vec<(u32, u32)> = vec![(0, 0), (10, 20), (31, 31)];
        let a = generate_rays(&intr, &identity, &px).unwrap();
        let b = generate_rays(&intr, &shifted, &px).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.direction, rb.direction);
            assert_eq!(rb.origin, [1.0, -2.0, 3.0]);
        }
    }

    #[test]
    fn generated_rays_have_unit_directions() {
        let intr = Intrinsics::simple(64, 48, 30.0);
        let pose = Pose::look_at([2.0, 0.3, -0.5], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        let px: Vec<(u32, u32)> = (0..64).map(|i| (i as u32, (i % 48) as u32)).collect();
        for ray in generate_rays(&intr, &pose, &px).unwrap() {
            assert!((norm(ray.direction) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn project_point_on_axis_hits_principal_point() {
        let intr = Intrinsics::simple(64, 64, 80.0);
        let pose = Pose::identity();
        let p = project([0.0, 0.0, 1.0], &intr, &pose);
        assert!(!p.behind_camera);
        assert!((p.u - intr.cx).abs() < 1e-12);
        assert!((p.v - intr.cy).abs() < 1e-12);
        assert!((p.depth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn project_flags_points_behind_camera() {
        let intr = Intrinsics::simple(64, 64, 80.0);
        let pose = Pose::identity();
        assert!(project([0.0, 0.0, -1.0], &intr, &pose).behind_camera);
    }

    #[test]
    fn ray_pixel_round_trip() {
        let intr = Intrinsics::simple(64, 64, 80.0);
        let pose = Pose::look_at([1.2, -1.5, 0.7], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let i = rng.random_range(0..64u32);
            let j = rng.random_range(0..64u32);
            let ray = generate_rays(&intr, &pose, &[(i, j)]).unwrap()[0];
            let t = rng.random_range(ray.t_near..ray.t_far);
            let p = project(ray.at(t), &intr, &pose);
            assert!(!p.behind_camera);
            assert!((p.u - (i as f64 + 0.5)).abs() < 1e-4, "u {} vs {}", p.u, i);
            assert!((p.v - (j as f64 + 0.5)).abs() < 1e-4);
        }
    }

    #[test]
    fn to_local_inverts_to_world() {
        let pose = Pose::look_at([0.3, 1.9, -0.2], [0.1, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let q = pose.to_world(pose.to_local(p));
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-6);
            }
        }
        // camera position maps to the local origin
        let at_cam = pose.to_local(pose.translation);
        assert!(norm(at_cam) < 1e-12);
        // identity pose leaves points unchanged
        let id = Pose::identity();
        assert_eq!(id.to_local([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn pose_constructor_rejects_non_orthonormal() {
        let bad = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            Pose::new(bad, [0.0; 3]),
            Err(CameraError::NotOrthonormal { .. })
        ));
        // reflection: orthonormal but det = -1
        let refl = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            Pose::new(refl, [0.0; 3]),
            Err(CameraError::NotRightHanded { .. })
        ));
    }

    #[test]
    fn stratified_samples_stay_in_bins() {
        let ray = Ray::new([0.0; 3], [0.0, 0.0, 1.0], T_NEAR, T_FAR).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 64;
        let ts = stratified_sample(&ray, n, &mut rng);
        let width = (T_FAR - T_NEAR) / n as f64;
        for (i, &t) in ts.iter().enumerate() {
            assert!(t >= T_NEAR + i as f64 * width);
            assert!(t <= T_NEAR + (i + 1) as f64 * width);
        }
        assert!(ts.windows(2).all(|w| w[0] < w[1]), "sorted by construction");
        // single sample stays in range
        let one = stratified_sample(&ray, 1, &mut rng);
        assert!(one[0] >= T_NEAR && one[0] <= T_FAR);
    }

    #[test]
    fn stratified_mean_approaches_interval_midpoint() {
        let ray = Ray::new([0.0; 3], [0.0, 0.0, 1.0], 1.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 4000;
        let n = 8;
        let mut total = 0.0;
        for _ in 0..trials {
            total += stratified_sample(&ray, n, &mut rng).iter().sum::<f64>() / n as f64;
        }
        let mean = total / trials as f64;
        // per-draw std of a stratified mean: width/(n*sqrt(12)); 3 sigma bound
        let sigma = (3.0 - 1.0) / (n as f64 * 12f64.sqrt()) / (trials as f64).sqrt();
        assert!(
            (mean - 2.0).abs() < 3.0 * sigma,
            "mean {mean} outside 3 sigma ({sigma})"
        );
    }

    #[test]
    fn stratified_sampling_is_deterministic_by_seed() {
        let ray = Ray::new([0.0; 3], [0.0, 0.0, 1.0], T_NEAR, T_FAR).unwrap();
        let a = stratified_sample(&ray, 16, &mut ChaCha8Rng::seed_from_u64(42));
        let b = stratified_sample(&ray, 16, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }
}
