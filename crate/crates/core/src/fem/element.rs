use crate::scalar::Scalar;

use super::AnalysisMode;

pub(crate) type Matrix8<T> = [[T; 8]; 8];

/// Strain-displacement rows for (ε_rr, ε_zz, ε_θθ, γ_rz).
pub(crate) type BMatrix<T> = [[T; 8]; 4];

pub(crate) const GAUSS: [(f64, f64); 4] = {
    const G: f64 = 0.577_350_269_189_625_8;
    [(-G, -G), (G, -G), (G, G), (-G, G)]
};

const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Constitutive matrix on (ε_rr, ε_zz, ε_θθ, γ_rz). Plane stress leaves the
/// hoop row and column empty so both modes share one code path.
pub(crate) fn constitutive<T: Scalar>(mode: AnalysisMode, e: f64, nu: f64) -> [[T; 4]; 4] {
    let z = 0.0;
    let d = match mode {
        AnalysisMode::Axisymmetric => {
            let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
            [
                [c * (1.0 - nu), c * nu, c * nu, z],
                [c * nu, c * (1.0 - nu), c * nu, z],
                [c * nu, c * nu, c * (1.0 - nu), z],
                [z, z, z, c * (1.0 - 2.0 * nu) / 2.0],
            ]
        }
        AnalysisMode::PlaneStress => {
            let c = e / (1.0 - nu * nu);
            [
                [c, c * nu, z, z],
                [c * nu, c, z, z],
                [z, z, z, z],
                [z, z, z, c * (1.0 - nu) / 2.0],
            ]
        }
    };
    d.map(|row| row.map(T::of))
}

/// B matrix of a square element of side `h` whose inner edge sits at radius `r0`.
/// Returns `(B, r)` with `r` the radius of the sampling point.
pub(crate) fn b_matrix<T: Scalar>(mode: AnalysisMode, h: f64, r0: f64, xi: f64, eta: f64) -> (BMatrix<T>, f64) {
    let mut b = [[T::zero(); 8]; 4];
    let r = r0 + (1.0 + xi) * h / 2.0;
    for (n, &(xn, en)) in CORNERS.iter().enumerate() {
        let shape = (1.0 + xi * xn) * (1.0 + eta * en) / 4.0;
        let d_dr = xn * (1.0 + eta * en) / 4.0 * 2.0 / h;
        let d_dz = en * (1.0 + xi * xn) / 4.0 * 2.0 / h;
        b[0][2 * n] = T::of(d_dr);
        b[1][2 * n + 1] = T::of(d_dz);
        if mode == AnalysisMode::Axisymmetric {
            b[2][2 * n] = T::of(shape / r);
        }
        b[3][2 * n] = T::of(d_dz);
        b[3][2 * n + 1] = T::of(d_dr);
    }
    (b, r)
}

/// Element stiffness by 2×2 Gauss quadrature. Axisymmetric integrals carry
/// the 2πr circumference factor.
pub(crate) fn stiffness<T: Scalar>(mode: AnalysisMode, d: &[[T; 4]; 4], h: f64, r0: f64) -> Matrix8<T> {
    let mut k = [[T::zero(); 8]; 8];
    let det_j = h * h / 4.0;
    for &(xi, eta) in &GAUSS {
        let (b, r) = b_matrix::<T>(mode, h, r0, xi, eta);
        let weight = T::of(match mode {
            AnalysisMode::Axisymmetric => det_j * 2.0 * std::f64::consts::PI * r,
            AnalysisMode::PlaneStress => det_j,
        });
        // DB
        let mut db = [[T::zero(); 8]; 4];
        for i in 0..4 {
            for c in 0..8 {
                db[i][c] = (0..4).map(|m| d[i][m] * b[m][c]).sum();
            }
        }
        for p in 0..8 {
            for q in 0..8 {
                let s: T = (0..4).map(|m| b[m][p] * db[m][q]).sum();
                k[p][q] += s * weight;
            }
        }
    }
    k
}
