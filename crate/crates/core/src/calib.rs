//! Pinhole camera model with Brown–Conrady distortion.
//!
//! World coordinates are millimeters. `R`/`t` map world points into the
//! camera frame (`x_cam = R·x_world + t`), with the camera looking down its
//! +z axis, x to the right and y down the image.

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

const ROTATION_TOL: f64 = 1e-6;
const UNDISTORT_ITERATIONS: usize = 50;
const UNDISTORT_TOL: f64 = 1e-14;

/// Continuous pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Radial (`k1`, `k2`, `k3`) and tangential (`p1`, `p2`) coefficients, in
/// OpenCV order `[k1, k2, p1, p2, k3]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    pub fn from_array(c: [f64; 5]) -> Self {
        Self {
            k1: c[0],
            k2: c[1],
            p1: c[2],
            p2: c[3],
            k3: c[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|c| *c == 0.0)
    }

    /// Maps an undistorted normalized image point to its distorted position.
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Newton inversion of [`Distortion::apply`], started at the distorted
    /// point.
    fn remove(&self, xd: f64, yd: f64) -> (f64, f64) {
        let (mut x, mut y) = (xd, yd);
        for _ in 0..UNDISTORT_ITERATIONS {
            let (fx, fy) = self.apply(x, y);
            let (ex, ey) = (fx - xd, fy - yd);
            if ex.abs().max(ey.abs()) < UNDISTORT_TOL {
                break;
            }
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            // d(radial)/d(r2)
            let dr = self.k1 + r2 * (2.0 * self.k2 + 3.0 * r2 * self.k3);
            let a = radial + 2.0 * x * x * dr + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
            let b = 2.0 * x * y * dr + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
            let c = b;
            let d = radial + 2.0 * y * y * dr + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
            let det = a * d - b * c;
            if det.abs() < 1e-12 {
                break;
            }
            x -= (d * ex - b * ey) / det;
            y -= (a * ey - c * ex) / det;
        }
        (x, y)
    }
}

/// Intrinsics and extrinsics of one calibrated view.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    id: String,
    k: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    distortion: Distortion,
    width: u32,
    height: u32,
}

impl CameraCalib {
    /// Validates and builds a calibration. `R` must be a proper rotation
    /// (orthonormal, det +1 within 1e-6) and the focal lengths positive.
    pub fn new(
        id: impl Into<String>,
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        distortion: Distortion,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let id = id.into();
        let fail = |reason: String| Error::InvalidCalibration {
            camera: id.clone(),
            reason,
        };
        let all_finite = k.iter().chain(r.iter()).chain(t.iter()).all(|x| x.is_finite())
            && distortion.to_array().iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(fail("non-finite parameter".into()));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 {
            return Err(fail(format!(
                "focal lengths must be positive (fx={}, fy={})",
                k[(0, 0)],
                k[(1, 1)]
            )));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(fail("K must be upper triangular with K[2][2] = 1".into()));
        }
        let orth_err = (r.transpose() * r - Matrix3::identity()).amax();
        if orth_err > ROTATION_TOL {
            return Err(fail(format!("R is not orthonormal (error {orth_err:e})")));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(fail(format!("det(R) = {det}, expected +1")));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(fail("image size must be positive".into()));
        }
        Ok(Self {
            id,
            k,
            r,
            t,
            distortion,
            width: image_size.0,
            height: image_size.1,
        })
    }

    /// Convenience constructor for a zero-skew, zero-distortion camera placed
    /// at `eye` and aimed at `target`. `up` is the world direction that should
    /// appear upwards in the image.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        id: impl Into<String>,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        focal: (f64, f64),
        principal: (f64, f64),
        image_size: (u32, u32),
    ) -> Result<Self> {
        let id = id.into();
        let forward = target - eye;
        let right = forward.cross(&up);
        if forward.norm() == 0.0 || right.norm() < 1e-9 * forward.norm() * up.norm() {
            return Err(Error::InvalidCalibration {
                camera: id,
                reason: "degenerate look-at (eye = target or up parallel to view)".into(),
            });
        }
        let z = Unit::new_normalize(forward);
        let x = Unit::new_normalize(right);
        let y = Unit::new_normalize(z.cross(&x));
        // Rows of R are the camera axes expressed in world coordinates.
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(r * eye.coords);
        let k = Matrix3::new(
            focal.0,
            0.0,
            principal.0,
            0.0,
            focal.1,
            principal.1,
            0.0,
            0.0,
            1.0,
        );
        Self::new(id, k, r, t, Distortion::default(), image_size)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn distortion(&self) -> Distortion {
        self.distortion
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.r.transpose() * self.t))
    }

    pub fn to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.r * p.coords + self.t
    }

    /// Returns `None` when the point is on or behind the image plane.
    pub fn project(&self, p: &Point3<f64>) -> Option<Pixel> {
        let c = self.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        let (mut x, mut y) = (c.x / c.z, c.y / c.z);
        if !self.distortion.is_zero() {
            (x, y) = self.distortion.apply(x, y);
        }
        let k = &self.k;
        Some(Pixel {
            u: k[(0, 0)] * x + k[(0, 1)] * y + k[(0, 2)],
            v: k[(1, 1)] * y + k[(1, 2)],
        })
    }

    /// Whether `px` lies on the sensor, `[0, width) × [0, height)`.
    pub fn contains(&self, px: &Pixel) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u < self.width as f64 && px.v < self.height as f64
    }

    /// Back-projects a pixel with known camera-frame depth (z, mm) into the
    /// world.
    pub fn unproject_depth(&self, px: Pixel, depth: f64) -> Result<Point3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "depth must be positive and finite, got {depth}"
            )));
        }
        if !px.u.is_finite() || !px.v.is_finite() || !self.contains(&px) {
            return Err(Error::InvalidInput(format!(
                "pixel ({}, {}) outside {}x{} image of camera {:?}",
                px.u, px.v, self.width, self.height, self.id
            )));
        }
        let k = &self.k;
        let yd = (px.v - k[(1, 2)]) / k[(1, 1)];
        let xd = (px.u - k[(0, 2)] - k[(0, 1)] * yd) / k[(0, 0)];
        let (x, y) = if self.distortion.is_zero() {
            (xd, yd)
        } else {
            self.distortion.remove(xd, yd)
        };
        let cam = Vector3::new(x * depth, y * depth, depth);
        Ok(Point3::from(self.r.transpose() * (cam - self.t)))
    }

    /// The same camera after applying the rigid world transform
    /// `p ↦ rot·p + shift`, so that transformed points project to the same
    /// pixels.
    pub fn transformed(&self, rot: &Rotation3<f64>, shift: &Vector3<f64>) -> Result<Self> {
        let r = self.r * rot.matrix().transpose();
        let t = self.t - r * shift;
        Self::new(
            self.id.clone(),
            self.k,
            r,
            t,
            self.distortion,
            (self.width, self.height),
        )
    }
}
