//! Pointwise kinematics and the nonlinear constitutive law of small-strain
//! deformation theory.
//!
//! The stress-strain law is
//!
//! ```text
//! sigma_ij = lambda * delta_ij * Theta + 2 mu * eps_ij - 2 mu * omega(e) * e_ij
//! ```
//!
//! where `Theta = trace(eps)`, `e_ij = eps_ij - delta_ij * Theta / 3` is the
//! strain deviator and `e = sqrt(2 g) / 3` is the deformation intensity with
//!
//! ```text
//! g = (eps11-eps22)^2 + (eps22-eps33)^2 + (eps33-eps11)^2
//!   + 6 (eps12^2 + eps23^2 + eps31^2).
//! ```
//!
//! The hardening function ω must satisfy, for all z ≥ 0,
//!
//! ```text
//! 0 <= omega(z) <= d(z omega(z))/dz <= kappa < 1,   omega'(z) >= 0,
//! ```
//!
//! which keeps the tangent operator uniformly elliptic. Everything is plane
//! strain: eps33 = eps13 = eps23 = 0 are kept inside the 3×3 tensor formulas
//! so the law and `g` apply verbatim, with no re-derived 2D constants.

use crate::mesh::{shape_gradients, DegenerateTriangle};

/// Admissible hardening-function families.
///
/// `Rational(c)` is the generic genuinely nonlinear member: ω(z) = c·z/(1+z)
/// with 0 < c < 1. Its primitive is available in closed form, so the energy
/// `H` needs no quadrature in z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaFn {
    /// ω ≡ 0 (linear elasticity).
    Zero,
    /// ω ≡ c with 0 ≤ c < 1.
    Const(f64),
    /// ω(z) = c·z/(1+z) with 0 < c < 1.
    Rational(f64),
}

impl OmegaFn {
    pub fn eval(&self, z: f64) -> f64 {
        match *self {
            OmegaFn::Zero => 0.0,
            OmegaFn::Const(c) => c,
            OmegaFn::Rational(c) => c * z / (1.0 + z),
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match *self {
            OmegaFn::Zero | OmegaFn::Const(_) => 0.0,
            OmegaFn::Rational(c) => c / ((1.0 + z) * (1.0 + z)),
        }
    }

    /// W(t) = ∫₀ᵗ z ω(z) dz, in closed form per family.
    ///
    /// Zero: 0. Const(c): c t²/2. Rational(c): z²/(1+z) = (z-1) + 1/(1+z), so
    /// the integral is c·(t²/2 − t + ln(1+t)); `ln_1p` keeps the small-t
    /// cancellation benign (W(t) = c t³/3 + O(t⁴) there).
    pub fn energy_integral(&self, t: f64) -> f64 {
        match *self {
            OmegaFn::Zero => 0.0,
            OmegaFn::Const(c) => 0.5 * c * t * t,
            OmegaFn::Rational(c) => c * (0.5 * t * t - t + t.ln_1p()),
        }
    }

    /// sup over z ≥ 0 of ω(z): the hardening ceiling. Cheap, exact, and the
    /// source of the proven energy-domination margin 1 − sup ω.
    pub fn sup(&self) -> f64 {
        match *self {
            OmegaFn::Zero => 0.0,
            OmegaFn::Const(c) | OmegaFn::Rational(c) => c,
        }
    }
}

impl std::fmt::Display for OmegaFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            OmegaFn::Zero => write!(f, "zero"),
            OmegaFn::Const(c) => write!(f, "const {c}"),
            OmegaFn::Rational(c) => write!(f, "rational {c}"),
        }
    }
}

/// Elastic coefficients of one body: Lame parameters plus the hardening
/// function, constant over the body.
#[derive(Debug, Clone, Copy)]
pub struct MaterialModel {
    pub lambda: f64,
    pub mu: f64,
    pub omega: OmegaFn,
}

/// Constant plane-strain state of one P1 element.
///
/// Only the in-plane components are stored; `tensor` re-embeds them in the
/// full symmetric 3×3 tensor with eps33 = eps13 = eps23 = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainState {
    pub e11: f64,
    pub e22: f64,
    pub e12: f64,
}

impl StrainState {
    pub const ZERO: StrainState = StrainState {
        e11: 0.0,
        e22: 0.0,
        e12: 0.0,
    };

    /// Volume strain Θ = trace(eps) (eps33 = 0 in plane strain).
    pub fn theta(&self) -> f64 {
        self.e11 + self.e22
    }

    pub fn tensor(&self) -> [[f64; 3]; 3] {
        [
            [self.e11, self.e12, 0.0],
            [self.e12, self.e22, 0.0],
            [0.0, 0.0, 0.0],
        ]
    }

    /// Deviator components (e11, e22, e33, e12); e13 = e23 = 0 stay implicit.
    pub fn deviator4(&self) -> [f64; 4] {
        let third = self.theta() / 3.0;
        [self.e11 - third, self.e22 - third, -third, self.e12]
    }

    pub fn g(&self) -> f64 {
        g_form(&self.tensor())
    }

    /// Deformation intensity e = √(2g)/3.
    pub fn intensity(&self) -> f64 {
        intensity(self)
    }
}

/// The quadratic form g of a general symmetric 3×3 strain tensor.
pub fn g_form(t: &[[f64; 3]; 3]) -> f64 {
    let (a, b, c) = (t[0][0], t[1][1], t[2][2]);
    (a - b) * (a - b)
        + (b - c) * (b - c)
        + (c - a) * (c - a)
        + 6.0 * (t[0][1] * t[0][1] + t[1][2] * t[1][2] + t[2][0] * t[2][0])
}

/// Deformation intensity e = √(2g)/3 of a plane-strain state.
pub fn intensity(s: &StrainState) -> f64 {
    (2.0 * s.g()).sqrt() / 3.0
}

/// Full contraction ⟨a,b⟩ = Σ_ij a_ij b_ij of two deviators stored as
/// (d11, d22, d33, d12); the off-diagonal pair counts twice.
pub fn dev_inner(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * a[3] * b[3]
}

/// Constant strain of a P1 triangle from its vertex coordinates and nodal
/// displacements, via the Cauchy relations eps_ij = (du_i/dx_j + du_j/dx_i)/2.
pub fn element_strain(
    coords: &[[f64; 2]; 3],
    disp: &[[f64; 2]; 3],
) -> Result<StrainState, DegenerateTriangle> {
    let sg = shape_gradients(coords)?;
    let mut du = [[0.0f64; 2]; 2]; // du[i][j] = du_i/dx_j
    for a in 0..3 {
        for i in 0..2 {
            for j in 0..2 {
                du[i][j] += disp[a][i] * sg.grads[a][j];
            }
        }
    }
    Ok(StrainState {
        e11: du[0][0],
        e22: du[1][1],
        e12: 0.5 * (du[0][1] + du[1][0]),
    })
}

/// Stress tensor σ_ij = λ δ_ij Θ + 2μ eps_ij − 2μ ω(e) e_ij (symmetric 3×3;
/// σ33 is generally nonzero in plane strain).
pub fn stress(strain: &StrainState, mat: &MaterialModel) -> [[f64; 3]; 3] {
    let theta = strain.theta();
    let om = mat.omega.eval(strain.intensity());
    let eps = strain.tensor();
    let third = theta / 3.0;
    let mut sig = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let dev = eps[i][j] - if i == j { third } else { 0.0 };
            sig[i][j] = if i == j { mat.lambda * theta } else { 0.0 }
                + 2.0 * mat.mu * eps[i][j]
                - 2.0 * mat.mu * om * dev;
        }
    }
    sig
}

/// One admissibility violation: which inequality failed, where, and by what.
#[derive(Debug, Clone)]
pub struct AdmissibilityViolation {
    pub z: f64,
    pub condition: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub pass: bool,
    pub samples: usize,
    pub first_violation: Option<AdmissibilityViolation>,
}

/// Samples the admissibility inequalities on a uniform grid over [0, z_max]:
///
/// ```text
/// 0 <= omega(z),   omega(z) <= d(z omega)/dz,   d(z omega)/dz < 1,
/// omega'(z) >= 0,
/// ```
///
/// with d(z ω)/dz = ω(z) + z ω′(z) taken analytically.
pub fn check_omega_admissible(omega: &OmegaFn, z_max: f64, n_samples: usize) -> AdmissibilityReport {
    assert!(z_max > 0.0 && n_samples >= 2);
    let mut first = None;
    for k in 0..n_samples {
        let z = z_max * k as f64 / (n_samples - 1) as f64;
        let w = omega.eval(z);
        let wp = omega.deriv(z);
        let dzw = w + z * wp;
        let violation = if w < 0.0 {
            Some(("omega(z) >= 0", w))
        } else if w > dzw + 1e-14 {
            Some(("omega(z) <= d(z omega)/dz", dzw - w))
        } else if dzw >= 1.0 {
            Some(("d(z omega)/dz < 1", dzw))
        } else if wp < 0.0 {
            Some(("omega'(z) >= 0", wp))
        } else {
            None
        };
        if let Some((condition, value)) = violation {
            first = Some(AdmissibilityViolation {
                z,
                condition,
                value,
            });
            break;
        }
    }
    AdmissibilityReport {
        pass: first.is_none(),
        samples: n_samples,
        first_violation: first,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const TRI: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn random_strain(rng: &mut StdRng) -> StrainState {
        StrainState {
            e11: rng.gen_range(-0.5..0.5),
            e22: rng.gen_range(-0.5..0.5),
            e12: rng.gen_range(-0.5..0.5),
        }
    }

    #[test]
    fn zero_displacement_gives_zero_strain() {
        let s = element_strain(&TRI, &[[0.0; 2]; 3]).unwrap();
        assert_eq!(s, StrainState::ZERO);
        assert_eq!(s.theta(), 0.0);
        assert_eq!(s.intensity(), 0.0);
    }

    #[test]
    fn uniaxial_stretch_strain() {
        // u = (a x1, 0) sampled at the vertices
        let a = 0.3;
        let disp = [[0.0, 0.0], [a, 0.0], [0.0, 0.0]];
        let s = element_strain(&TRI, &disp).unwrap();
        assert_relative_eq!(s.e11, a, epsilon = 1e-14);
        assert_abs_diff_eq!(s.e22, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.e12, 0.0, epsilon = 1e-14);
        assert_relative_eq!(s.theta(), a, epsilon = 1e-14);
    }

    #[test]
    fn infinitesimal_rotation_is_strain_free() {
        // u = (-b x2, b x1)
        let b = 0.7;
        let disp: Vec<[f64; 2]> = TRI.iter().map(|p| [-b * p[1], b * p[0]]).collect();
        let s = element_strain(&TRI, &[disp[0], disp[1], disp[2]]).unwrap();
        assert_abs_diff_eq!(s.e11, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.e22, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.e12, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_triangle_is_an_error() {
        let flat = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(element_strain(&flat, &[[0.0; 2]; 3]).is_err());
    }

    #[test]
    fn intensity_uniaxial() {
        let d = 0.2;
        let s = StrainState {
            e11: d,
            e22: 0.0,
            e12: 0.0,
        };
        assert_relative_eq!(s.g(), 2.0 * d * d, epsilon = 1e-14);
        assert_relative_eq!(s.intensity(), 2.0 * d / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn intensity_pure_shear() {
        let sh = 0.15;
        let s = StrainState {
            e11: 0.0,
            e22: 0.0,
            e12: sh,
        };
        assert_relative_eq!(s.g(), 6.0 * sh * sh, epsilon = 1e-14);
        assert_relative_eq!(s.intensity(), 2.0 * sh / 3.0f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn intensity_hydrostatic_vanishes() {
        let d = 0.4;
        let hydro = [[d, 0.0, 0.0], [0.0, d, 0.0], [0.0, 0.0, d]];
        assert_eq!(g_form(&hydro), 0.0);
    }

    #[test]
    fn intensity_ignores_hydrostatic_shift() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let s = random_strain(&mut rng);
            let t = rng.gen_range(-1.0..1.0);
            let mut shifted = s.tensor();
            for i in 0..3 {
                shifted[i][i] += t;
            }
            assert_relative_eq!(g_form(&shifted), s.g(), epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn deviator_is_trace_free() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let d = random_strain(&mut rng).deviator4();
            assert_abs_diff_eq!(d[0] + d[1] + d[2], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn stress_linear_hooke_uniaxial() {
        let d = 0.01;
        let mat = MaterialModel {
            lambda: 1.0,
            mu: 1.0,
            omega: OmegaFn::Zero,
        };
        let s = StrainState {
            e11: d,
            e22: 0.0,
            e12: 0.0,
        };
        let sig = stress(&s, &mat);
        assert_relative_eq!(sig[0][0], 3.0 * d, epsilon = 1e-14);
        assert_relative_eq!(sig[1][1], d, epsilon = 1e-14);
        assert_relative_eq!(sig[2][2], d, epsilon = 1e-14);
        assert_eq!(sig[0][1], 0.0);
    }

    #[test]
    fn stress_constant_omega_uniaxial() {
        // omega = 1/2 softens the deviator: sigma11 = 3d - 2*(1/2)*(2d/3) = 7d/3
        let d = 0.01;
        let mat = MaterialModel {
            lambda: 1.0,
            mu: 1.0,
            omega: OmegaFn::Const(0.5),
        };
        let s = StrainState {
            e11: d,
            e22: 0.0,
            e12: 0.0,
        };
        let sig = stress(&s, &mat);
        assert_relative_eq!(sig[0][0], 7.0 * d / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn stress_deviatoric_linear_case() {
        // Theta = 0 and omega = 0 collapse the law to sigma = 2 mu eps
        let mat = MaterialModel {
            lambda: 3.0,
            mu: 2.0,
            omega: OmegaFn::Zero,
        };
        let s = StrainState {
            e11: 0.1,
            e22: -0.1,
            e12: 0.05,
        };
        let sig = stress(&s, &mat);
        let eps = s.tensor();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(sig[i][j], 2.0 * mat.mu * eps[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn stress_superposition_when_linear() {
        let mat = MaterialModel {
            lambda: 2.5,
            mu: 1.3,
            omega: OmegaFn::Zero,
        };
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_strain(&mut rng);
            let b = random_strain(&mut rng);
            let sum = StrainState {
                e11: a.e11 + b.e11,
                e22: a.e22 + b.e22,
                e12: a.e12 + b.e12,
            };
            let (sa, sb, ss) = (stress(&a, &mat), stress(&b, &mat), stress(&sum, &mat));
            for i in 0..3 {
                for j in 0..3 {
                    assert_relative_eq!(
                        ss[i][j],
                        sa[i][j] + sb[i][j],
                        epsilon = 1e-12,
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn tangent_is_positive_along_sampled_directions() {
        // w : dsigma/deps : w > 0 for admissible omega, by central differences
        let mat = MaterialModel {
            lambda: 1.0,
            mu: 1.0,
            omega: OmegaFn::Rational(0.9),
        };
        let mut rng = StdRng::seed_from_u64(6);
        let h = 1e-6;
        for _ in 0..50 {
            let s = random_strain(&mut rng);
            let w = random_strain(&mut rng);
            let plus = StrainState {
                e11: s.e11 + h * w.e11,
                e22: s.e22 + h * w.e22,
                e12: s.e12 + h * w.e12,
            };
            let minus = StrainState {
                e11: s.e11 - h * w.e11,
                e22: s.e22 - h * w.e22,
                e12: s.e12 - h * w.e12,
            };
            let (sp, sm) = (stress(&plus, &mat), stress(&minus, &mat));
            let wt = w.tensor();
            let mut contraction = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    contraction += wt[i][j] * (sp[i][j] - sm[i][j]) / (2.0 * h);
                }
            }
            let norm_w = w.e11 * w.e11 + w.e22 * w.e22 + 2.0 * w.e12 * w.e12;
            if norm_w > 1e-12 {
                assert!(
                    contraction > 0.0,
                    "tangent lost positivity: w:dsigma:w = {contraction:e}"
                );
            }
        }
    }

    #[test]
    fn omega_zero_is_admissible() {
        assert!(check_omega_admissible(&OmegaFn::Zero, 10.0, 1000).pass);
    }

    #[test]
    fn omega_rational_is_admissible() {
        // d(z omega)/dz = c z(z+2)/(1+z)^2 stays below c < 1, and omega stays
        // below it because (1+z) <= (z+2)
        let rep = check_omega_admissible(&OmegaFn::Rational(0.9), 50.0, 5000);
        assert!(rep.pass, "violation: {:?}", rep.first_violation);
    }

    #[test]
    fn omega_const_above_one_fails() {
        let rep = check_omega_admissible(&OmegaFn::Const(1.5), 10.0, 100);
        assert!(!rep.pass);
        let v = rep.first_violation.unwrap();
        assert_eq!(v.condition, "d(z omega)/dz < 1");
        assert_eq!(v.z, 0.0);
    }

    #[test]
    fn energy_integral_matches_quadrature() {
        // closed forms vs. fine trapezoid integration of z*omega(z)
        for omega in [OmegaFn::Const(0.4), OmegaFn::Rational(0.7)] {
            for t in [0.0, 0.3, 1.7] {
                let n = 20_000;
                let mut acc = 0.0;
                for k in 0..n {
                    let z0 = t * k as f64 / n as f64;
                    let z1 = t * (k + 1) as f64 / n as f64;
                    acc += 0.5 * (z0 * omega.eval(z0) + z1 * omega.eval(z1)) * (z1 - z0);
                }
                assert_abs_diff_eq!(omega.energy_integral(t), acc, epsilon = 1e-8);
            }
        }
    }
}
