//! Constant-velocity Kalman filter on the ground plane.
//!
//! State is (x, z, vx, vz). Process noise follows the white-acceleration
//! model: per axis, an unknown constant acceleration over the step enters
//! position as dt²/2 and velocity as dt. Updates use the Joseph form so the
//! covariance stays symmetric positive semi-definite under rounding.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Kalman4 {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

impl Kalman4 {
    pub fn new(pos: (f64, f64), pos_std: f64, vel_std: f64) -> Self {
        Self {
            x: Vector4::new(pos.0, pos.1, 0.0, 0.0),
            p: Matrix4::from_diagonal(&Vector4::new(
                pos_std * pos_std,
                pos_std * pos_std,
                vel_std * vel_std,
                vel_std * vel_std,
            )),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.x[2], self.x[3])
    }

    pub fn predict(&mut self, dt: f64, accel_std: f64) {
        let f = Matrix4::new(
            1.0, 0.0, dt, 0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let q2 = accel_std * accel_std;
        let a = dt.powi(4) / 4.0 * q2;
        let b = dt.powi(3) / 2.0 * q2;
        let c = dt * dt * q2;
        let q = Matrix4::new(
            a, 0.0, b, 0.0,
            0.0, a, 0.0, b,
            b, 0.0, c, 0.0,
            0.0, b, 0.0, c,
        );
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + q;
        self.symmetrize();
    }

    pub fn update(&mut self, meas: (f64, f64), meas_std: f64) {
        let h = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        let r = Matrix2::identity() * (meas_std * meas_std);
        let innovation = Vector2::new(meas.0, meas.1) - h * self.x;
        let s = h * self.p * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let k = self.p * h.transpose() * s_inv;
        self.x += k * innovation;
        let i_kh = Matrix4::identity() - k * h;
        self.p = i_kh * self.p * i_kh.transpose() + k * r * k.transpose();
        self.symmetrize();
    }

    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.p
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e))
    }

    fn symmetrize(&mut self) {
        self.p = (self.p + self.p.transpose()) * 0.5;
    }
}
