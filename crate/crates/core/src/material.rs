//! Plane-stress orthotropic constitutive law and its rotation by the
//! material orientation field.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Angle between the principal material axis and the build orientation.
pub const MATERIAL_AXIS_OFFSET: f64 = FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialMode {
    Isotropic,
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub e11: f64,
    pub e22: f64,
    pub g12: f64,
    pub nu12: f64,
    pub nu21: f64,
    pub mode: MaterialMode,
}

impl MaterialModel {
    /// Normalized isotropic material (E = 1, nu = 0.3, G = 0.385).
    pub fn isotropic() -> Self {
        Self {
            e11: 1.0,
            e22: 1.0,
            g12: 0.385,
            nu12: 0.3,
            nu21: 0.3,
            mode: MaterialMode::Isotropic,
        }
    }

    /// Cubic-orthotropic printed material (E = 1, nu = 0.3, G = 0.849).
    pub fn anisotropic() -> Self {
        Self {
            g12: 0.849,
            mode: MaterialMode::Anisotropic,
            ..Self::isotropic()
        }
    }

    pub fn for_mode(mode: MaterialMode) -> Self {
        match mode {
            MaterialMode::Isotropic => Self::isotropic(),
            MaterialMode::Anisotropic => Self::anisotropic(),
        }
    }

    pub fn is_anisotropic(&self) -> bool {
        self.mode == MaterialMode::Anisotropic
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e11 > 0.0 && self.e22 > 0.0 && self.g12 > 0.0) {
            return Err(Error::config("moduli must be positive"));
        }
        if !(1.0 - self.nu12 * self.nu21 > 0.0) {
            return Err(Error::config(
                "1 - nu12 * nu21 must be positive for a plane-stress material",
            ));
        }
        let asym = (self.nu21 * self.e11 - self.nu12 * self.e22).abs();
        if asym > 1e-9 * self.e11.max(self.e22) {
            return Err(Error::config(
                "nu21 * E11 must equal nu12 * E22 (symmetric compliance)",
            ));
        }
        if self.mode == MaterialMode::Isotropic {
            let g = self.e11 / (2.0 * (1.0 + self.nu12));
            if (self.e11 - self.e22).abs() > 1e-12 || (self.g12 - g).abs() > 2e-3 * g {
                return Err(Error::config(format!(
                    "isotropic material needs E11 = E22 and G12 = E / (2 (1 + nu)) = {g:.6} within 0.2%"
                )));
            }
        }
        Ok(())
    }

    /// Plane-stress matrix in the material frame.
    pub fn base_constitutive(&self) -> Result<Mat3> {
        self.validate()?;
        let k = 1.0 / (1.0 - self.nu12 * self.nu21);
        Ok([
            [k * self.e11, k * self.nu21 * self.e11, 0.0],
            [k * self.nu12 * self.e22, k * self.e22, 0.0],
            [0.0, 0.0, self.g12],
        ])
    }
}

/// Stress transformation from the material frame rotated by `phi`.
pub fn rotation(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    [
        [c * c, s * s, -2.0 * c * s],
        [s * s, c * c, 2.0 * c * s],
        [c * s, -c * s, c * c - s * s],
    ]
}

pub fn rotation_derivative(phi: f64) -> Mat3 {
    let (s, c) = phi.sin_cos();
    let s2 = 2.0 * s * c;
    let c2 = c * c - s * s;
    [
        [-s2, s2, -2.0 * c2],
        [s2, -s2, 2.0 * c2],
        [c2, -c2, -2.0 * s2],
    ]
}

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// `D(phi) = T(phi) D0 T(phi)^T`.
pub fn rotated_constitutive(d0: &Mat3, phi: f64) -> Mat3 {
    let t = rotation(phi);
    mul(&mul(&t, d0), &transpose(&t))
}

/// `dD/dphi = T' D0 T^T + T D0 T'^T`.
pub fn d_constitutive_d_phi(d0: &Mat3, phi: f64) -> Mat3 {
    let t = rotation(phi);
    let dt = rotation_derivative(phi);
    let a = mul(&mul(&dt, d0), &transpose(&t));
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + a[j][i];
        }
    }
    out
}

/// `phi_e = sum_{j=1..N} (t-^{j}_e - t-^{j-1}_e) (theta_j + pi/2)`.
pub fn material_orientation(t_bar: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let n = t_bar[0].len();
    (0..n)
        .map(|e| {
            theta
                .iter()
                .enumerate()
                .map(|(k, th)| (t_bar[k + 1][e] - t_bar[k][e]) * (th + MATERIAL_AXIS_OFFSET))
                .sum()
        })
        .collect()
}

/// Partials of the orientation field.
#[derive(Debug, Clone)]
pub struct OrientationSensitivities {
    /// d phi_e / d t_e.
    pub dphi_dt: Vec<f64>,
    /// d phi_e / d theta_j, indexed `[j-1][e]`.
    pub dphi_dtheta: Vec<Vec<f64>>,
}

pub fn orientation_sensitivities(
    t_bar: &[Vec<f64>],
    dt_bar: &[Vec<f64>],
    theta: &[f64],
) -> OrientationSensitivities {
    let n = t_bar[0].len();
    let dphi_dt = (0..n)
        .map(|e| {
            theta
                .iter()
                .enumerate()
                .map(|(k, th)| (dt_bar[k + 1][e] - dt_bar[k][e]) * (th + MATERIAL_AXIS_OFFSET))
                .sum()
        })
        .collect();
    let dphi_dtheta = (1..t_bar.len())
        .map(|j| (0..n).map(|e| t_bar[j][e] - t_bar[j - 1][e]).collect())
        .collect();
    OrientationSensitivities {
        dphi_dt,
        dphi_dtheta,
    }
}
