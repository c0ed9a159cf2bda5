//! Physical constants (CODATA 2018) and rubidium-85 atomic data.

/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant (J·s).
pub const H_PLANCK: f64 = 6.626_070_15e-34;
/// Vacuum permeability (T·m/A).
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Rubidium-85 atomic mass (kg).
pub const M_RB85: f64 = 84.911_789_738 * AMU;
/// Rubidium D1 vacuum wavelength (m).
pub const LAMBDA_D1: f64 = 794.979e-9;
/// Electron g-factor of the 5S1/2 state.
pub const G_J_5S12: f64 = 2.002_331_13;
/// Nuclear spin of rubidium-85.
pub const I_RB85: f64 = 2.5;

/// One gauss in tesla.
pub const GAUSS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    pub mu_b: f64,
    pub hbar: f64,
    pub mu_0: f64,
    pub k_b: f64,
    pub m_atom: f64,
    pub lambda_signal: f64,
}

impl PhysicalConstants {
    pub const fn standard() -> Self {
        Self {
            mu_b: MU_B,
            hbar: HBAR,
            mu_0: MU_0,
            k_b: K_B,
            m_atom: M_RB85,
            lambda_signal: LAMBDA_D1,
        }
    }

    /// `name,value,unit` rows, in a fixed order.
    pub fn to_csv(&self) -> String {
        let rows = [
            ("mu_B", self.mu_b, "J/T"),
            ("hbar", self.hbar, "J*s"),
            ("mu_0", self.mu_0, "T*m/A"),
            ("k_B", self.k_b, "J/K"),
            ("m_atom", self.m_atom, "kg"),
            ("lambda_signal", self.lambda_signal, "m"),
        ];
        let mut out = String::from("name,value,unit\n");
        for (name, value, unit) in rows {
            out.push_str(&format!("{name},{value:e},{unit}\n"));
        }
        out
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::standard()
    }
}
