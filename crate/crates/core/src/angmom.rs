//! Angular-momentum algebra for hyperfine manifolds.
//!
//! Every matrix in this module uses the basis order `m = F, F-1, ..., -F`
//! (descending), so row/column `i` carries `m = F - i`.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::constants::{HBAR, MU_B};
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest total angular momentum accepted by the matrix constructors.
pub const MAX_F: HalfInt = HalfInt::from_twice(20);

/// A non-negative or signed half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_twice(twice: i32) -> Self {
        Self(twice)
    }

    pub const fn from_int(v: i32) -> Self {
        Self(2 * v)
    }

    /// Parses a real number that must be an integer or half-integer.
    pub fn new(v: f64) -> Result<Self> {
        let twice = 2.0 * v;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 || twice.abs() > 1e6 {
            return Err(Error::invalid(format!("{v} is not a half-integer")));
        }
        Ok(Self(twice.round() as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// Number of magnetic sublevels `2F + 1`.
    pub fn multiplicity(self) -> usize {
        debug_assert!(self.0 >= 0);
        (self.0 + 1) as usize
    }

    /// Sublevels in basis order (descending).
    pub fn sublevels(self) -> impl Iterator<Item = HalfInt> {
        let top = self.0;
        (0..=top).map(move |i| HalfInt(top - 2 * i))
    }

    /// Basis index of sublevel `m` within this manifold.
    pub fn index_of(self, m: HalfInt) -> Option<usize> {
        if m.0.abs() > self.0 || (self.0 - m.0) % 2 != 0 {
            None
        } else {
            Some(((self.0 - m.0) / 2) as usize)
        }
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Circular/linear polarization helicity of a light field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Helicity {
    Minus,
    Pi,
    Plus,
}

impl Helicity {
    pub fn from_i32(v: i32) -> Result<Self> {
        match v {
            -1 => Ok(Helicity::Minus),
            0 => Ok(Helicity::Pi),
            1 => Ok(Helicity::Plus),
            _ => Err(Error::invalid(format!("helicity must be -1, 0 or +1, got {v}"))),
        }
    }

    pub fn value(self) -> i32 {
        match self {
            Helicity::Minus => -1,
            Helicity::Pi => 0,
            Helicity::Plus => 1,
        }
    }

    pub fn as_half_int(self) -> HalfInt {
        HalfInt::from_int(self.value())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinMatrices {
    pub fx: CMatrix,
    pub fy: CMatrix,
    pub fz: CMatrix,
}

/// Builds `Fx, Fy, Fz` from the ladder operators,
/// `<m+1|F+|m> = sqrt(F(F+1) - m(m+1))`.
pub fn spin_matrices(f: HalfInt) -> Result<SpinMatrices> {
    if f.twice() < 1 || f > MAX_F {
        return Err(Error::invalid(format!(
            "total angular momentum F = {f} outside [1/2, {MAX_F}]"
        )));
    }
    let dim = f.multiplicity();
    let ff = f.value();
    let mut raise = CMatrix::zeros(dim, dim);
    let mut fz = CMatrix::zeros(dim, dim);
    for (i, m) in f.sublevels().enumerate() {
        let m = m.value();
        fz[(i, i)] = Complex64::new(m, 0.0);
        if i > 0 {
            raise[(i - 1, i)] = Complex64::new((ff * (ff + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let lower = raise.adjoint();
    let fx = (&raise + &lower).map(|z| z * 0.5);
    let fy = (&raise - &lower).map(|z| z * Complex64::new(0.0, -0.5));
    Ok(SpinMatrices { fx, fy, fz })
}

/// Landé factor of hyperfine level `F`, nuclear term neglected.
pub fn lande_g(f: HalfInt, j: HalfInt, i: HalfInt, g_j: f64) -> Result<f64> {
    if !triangle(j, i, f) || f.twice() <= 0 {
        return Err(Error::invalid(format!(
            "F = {f} is not reachable from J = {j}, I = {i}"
        )));
    }
    let (ff, jj, ii) = (f.value(), j.value(), i.value());
    Ok(g_j * (ff * (ff + 1.0) + jj * (jj + 1.0) - ii * (ii + 1.0)) / (2.0 * ff * (ff + 1.0)))
}

/// A hyperfine level with its Landé factor and spin matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperfineManifold {
    pub f: HalfInt,
    pub g_f: f64,
    pub spin: SpinMatrices,
}

impl HyperfineManifold {
    pub fn new(f: HalfInt, g_f: f64) -> Result<Self> {
        if !g_f.is_finite() {
            return Err(Error::invalid("g_F must be finite"));
        }
        Ok(Self {
            f,
            g_f,
            spin: spin_matrices(f)?,
        })
    }

    /// A level of the rubidium-85 5S1/2 ground state.
    pub fn rb85_ground(f: HalfInt) -> Result<Self> {
        let g = lande_g(
            f,
            HalfInt::from_twice(1),
            HalfInt::from_twice(5),
            crate::constants::G_J_5S12,
        )?;
        Self::new(f, g)
    }

    pub fn dim(&self) -> usize {
        self.f.multiplicity()
    }

    /// `B·F` for a field vector (tesla; the result carries the same units).
    pub fn field_projection(&self, b: [f64; 3]) -> CMatrix {
        let s = &self.spin;
        s.fx.map(|z| z * b[0]) + s.fy.map(|z| z * b[1]) + s.fz.map(|z| z * b[2])
    }
}

fn triangle(a: HalfInt, b: HalfInt, c: HalfInt) -> bool {
    let (a, b, c) = (a.twice(), b.twice(), c.twice());
    a >= 0 && b >= 0 && c >= 0 && c <= a + b && c >= (a - b).abs() && (a + b + c) % 2 == 0
}

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (2..=n).fold(1.0, |acc, k| acc * f64::from(k))
}

fn check_projection(j: HalfInt, m: HalfInt) -> Result<()> {
    if j.twice() < 0 || m.twice().abs() > j.twice() || (j.twice() - m.twice()) % 2 != 0 {
        return Err(Error::invalid(format!("invalid angular momentum pair j = {j}, m = {m}")));
    }
    Ok(())
}

/// Clebsch–Gordan coefficient `<j1 m1; j2 m2 | J M>` (Condon–Shortley
/// phase), from Racah's closed-form sum.
///
/// The squared coefficient is accumulated as an exact rational, so stretched
/// states and other rational-squared values come out exact.
pub fn cg_coefficient(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> Result<f64> {
    check_projection(j1, m1)?;
    check_projection(j2, m2)?;
    check_projection(j, m)?;
    if m1 + m2 != m || !triangle(j1, j2, j) {
        return Ok(0.0);
    }
    // All combinations below are integers; work with twice-values halved.
    let h = |x: i32| {
        debug_assert!(x % 2 == 0);
        x / 2
    };
    let (tj1, tm1, tj2, tm2, tj, tm) = (
        j1.twice(),
        m1.twice(),
        j2.twice(),
        m2.twice(),
        j.twice(),
        m.twice(),
    );
    let a = h(tj1 + tj2 - tj);
    let b = h(tj1 - tm1);
    let c = h(tj2 + tm2);
    let d = h(tj - tj2 + tm1);
    let e = h(tj - tj1 - tm2);

    let k_min = 0.max(-d).max(-e);
    let k_max = a.min(b).min(c);
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let den = big_factorial(k)
            * big_factorial(a - k)
            * big_factorial(b - k)
            * big_factorial(c - k)
            * big_factorial(d + k)
            * big_factorial(e + k);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return Ok(0.0);
    }
    let prefactor_sq = BigRational::new(
        BigInt::from(tj + 1)
            * big_factorial(h(tj + tj1 - tj2))
            * big_factorial(h(tj - tj1 + tj2))
            * big_factorial(a)
            * big_factorial(h(tj + tm))
            * big_factorial(h(tj - tm))
            * big_factorial(h(tj1 - tm1))
            * big_factorial(h(tj1 + tm1))
            * big_factorial(h(tj2 - tm2))
            * big_factorial(h(tj2 + tm2)),
        big_factorial(h(tj1 + tj2 + tj) + 1),
    );
    let sign = if sum.is_negative() { -1.0 } else { 1.0 };
    let squared = prefactor_sq * &sum * &sum;
    Ok(sign * ratio_to_f64(&squared).sqrt())
}

fn big_factorial(n: i32) -> BigInt {
    debug_assert!(n >= 0);
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Nearest f64 to a positive rational whose parts may exceed the f64 range.
fn ratio_to_f64(r: &BigRational) -> f64 {
    let (num, den) = (r.numer(), r.denom());
    let shift = |x: &BigInt| x.bits().saturating_sub(64);
    let (sn, sd) = (shift(num), shift(den));
    let n = (num >> sn).to_f64().unwrap_or(f64::NAN);
    let d = (den >> sd).to_f64().unwrap_or(f64::NAN);
    n / d * 2f64.powi(sn as i32 - sd as i32)
}

/// Relative weight `R_m(α, β)` of the spin wave between `|g, m>` and
/// `|s, m + α - β>`: the ratio of the signal and coupling transition CG
/// factors through the shared excited sublevel `|e, m + α>`.
pub fn r_coefficient(
    fg: HalfInt,
    fs: HalfInt,
    fe: HalfInt,
    m: HalfInt,
    alpha: Helicity,
    beta: Helicity,
) -> Result<f64> {
    check_projection(fg, m)?;
    let one = HalfInt::from_int(1);
    let (a, b) = (alpha.as_half_int(), beta.as_half_int());
    let m_e = m + a;
    let m_s = m + a - b;
    if fe.index_of(m_e).is_none() || fs.index_of(m_s).is_none() {
        return Err(Error::UndefinedWeight(format!(
            "m = {m}: sublevel e({m_e}) or s({m_s}) does not exist"
        )));
    }
    let den = cg_coefficient(fs, m_s, one, b, fe, m_e)?;
    if den.abs() < 1e-14 {
        return Err(Error::UndefinedWeight(format!(
            "m = {m}: coupling CG <{fs} {m_s}; 1 {b} | {fe} {m_e}> vanishes"
        )));
    }
    let num = cg_coefficient(fg, m, one, a, fe, m_e)?;
    Ok(num / den)
}

/// `D^F(t) = exp(-i g_F μ_B (B·F) t / ħ)` for a static field.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationMatrix {
    pub entries: CMatrix,
    pub f: HalfInt,
    pub elapsed: f64,
}

impl RotationMatrix {
    pub fn identity(f: HalfInt) -> Self {
        let n = f.multiplicity();
        Self {
            entries: CMatrix::identity(n, n),
            f,
            elapsed: 0.0,
        }
    }

    /// Element `<F, m'| D |F, m>`.
    pub fn element(&self, m_row: HalfInt, m_col: HalfInt) -> Option<Complex64> {
        let i = self.f.index_of(m_row)?;
        let j = self.f.index_of(m_col)?;
        Some(self.entries[(i, j)])
    }
}

fn check_field(b: [f64; 3], t: f64) -> Result<()> {
    if b.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return Err(Error::invalid("field and time must be finite"));
    }
    if t < 0.0 {
        return Err(Error::invalid(format!("negative evolution time {t}")));
    }
    Ok(())
}

/// Rotation matrix for evolution time `t` (s) in a static field `b` (T),
/// via eigendecomposition of the Hermitian generator `B·F`.
pub fn rotation_matrix(manifold: &HyperfineManifold, b: [f64; 3], t: f64) -> Result<RotationMatrix> {
    check_field(b, t)?;
    let n = manifold.dim();
    if t == 0.0 || b.iter().all(|&v| v == 0.0) {
        return Ok(RotationMatrix {
            entries: CMatrix::identity(n, n),
            f: manifold.f,
            elapsed: t,
        });
    }
    let eig = SymmetricEigen::new(manifold.field_projection(b));
    let b_mag = norm3(b);
    let angle = precession_angle(manifold.g_f, b_mag, t);
    let v = &eig.eigenvectors;
    // eigenvalues are exactly |B| m; snap them so the phase is m·angle
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&lambda| {
            let m = (2.0 * lambda / b_mag).round() / 2.0;
            Complex64::from_polar(1.0, -m * angle)
        })
        .collect();
    let mut entries = CMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += v[(r, k)] * phases[k] * v[(c, k)].conj();
            }
            entries[(r, c)] = acc;
        }
    }
    Ok(RotationMatrix {
        entries,
        f: manifold.f,
        elapsed: t,
    })
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `g_F μ_B |B| t / ħ` reduced into `[0, 4π)`, the period of a half-integer
/// spin rotation. The product is formed exactly with an fma and reduced
/// against a two-term 4π, so angles of 10⁴ rad keep ~1e-15 absolute accuracy.
pub fn precession_angle(g_f: f64, b_mag: f64, t: f64) -> f64 {
    const FOUR_PI_HI: f64 = 4.0 * std::f64::consts::PI;
    const FOUR_PI_LO: f64 = 4.0 * 1.224_646_799_147_353_2e-16;
    let omega = g_f * MU_B * b_mag / HBAR;
    let hi = omega * t;
    let lo = omega.mul_add(t, -hi);
    let k = (hi / FOUR_PI_HI).floor();
    let p = k * FOUR_PI_HI;
    let p_err = k.mul_add(FOUR_PI_HI, -p);
    let mut r = (hi - p) - p_err + lo - k * FOUR_PI_LO;
    if r < 0.0 {
        r += FOUR_PI_HI;
    } else if r >= FOUR_PI_HI {
        r -= FOUR_PI_HI;
    }
    r
}

/// Product of per-segment rotations, earliest segment applied first.
pub fn rotation_piecewise(
    manifold: &HyperfineManifold,
    segments: &[([f64; 3], f64)],
) -> Result<RotationMatrix> {
    let mut total = RotationMatrix::identity(manifold.f);
    for &(b, duration) in segments {
        let step = rotation_matrix(manifold, b, duration)?;
        total.entries = &step.entries * &total.entries;
        total.elapsed += duration;
    }
    Ok(total)
}

/// A 2×2 special-unitary matrix in the spin-1/2 basis `(+1/2, -1/2)`.
///
/// Every rotation `exp(-i φ n·F)` of a spin-F manifold is the spin-F image of
/// the spin-1/2 rotation with the same axis and angle, so a piecewise field
/// history can be composed on 2×2 matrices and mapped to `D^F` once
/// (see [`WignerTable`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2 {
    pub m: [[Complex64; 2]; 2],
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 {
        m: [
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ],
    };

    /// `exp(-i φ n·σ/2)` with `φ n = g_F μ_B B t / ħ`.
    pub fn precession(g_f: f64, b: [f64; 3], t: f64) -> Su2 {
        let mag = norm3(b);
        if mag == 0.0 || t == 0.0 {
            return Self::IDENTITY;
        }
        let n = [b[0] / mag, b[1] / mag, b[2] / mag];
        Self::axis_angle(n, precession_angle(g_f, mag, t))
    }

    /// `exp(-i (v·σ)/2)` for a rotation vector `v` (rad).
    pub fn rotation(v: [f64; 3]) -> Su2 {
        let angle = norm3(v);
        if angle == 0.0 {
            return Self::IDENTITY;
        }
        Self::axis_angle([v[0] / angle, v[1] / angle, v[2] / angle], angle)
    }

    /// `exp(-i φ n·σ/2)` for a unit axis `n`.
    pub fn axis_angle(n: [f64; 3], angle: f64) -> Su2 {
        let (s, c) = (0.5 * angle).sin_cos();
        let [nx, ny, nz] = n;
        // cos(φ/2) I - i sin(φ/2) n·σ
        Su2 {
            m: [
                [Complex64::new(c, -s * nz), Complex64::new(-s * ny, -s * nx)],
                [Complex64::new(s * ny, -s * nx), Complex64::new(c, s * nz)],
            ],
        }
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &Su2) -> Su2 {
        let a = &self.m;
        let b = &rhs.m;
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, out) in row.iter_mut().enumerate() {
                *out = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Su2 { m }
    }
}

#[derive(Clone, Debug)]
struct WignerTerm {
    coef: f64,
    p11: usize,
    p21: usize,
    p12: usize,
    p22: usize,
}

/// Precomputed polynomial expansion of the spin-F representation of SU(2).
///
/// With the Schwinger construction `|F m> ∝ (a†)^{F+m} (b†)^{F-m}|0>`, an SU(2)
/// element `U` maps to `D_{m'm} = Σ_k c_k U11^k U21^{F+m-k} U12^l U22^{F-m-l}`
/// with `l = F + m' - k`.
#[derive(Clone, Debug)]
pub struct WignerTable {
    f: HalfInt,
    terms: Vec<Vec<WignerTerm>>,
}

impl WignerTable {
    pub fn new(f: HalfInt) -> Result<Self> {
        if f.twice() < 0 || f > MAX_F {
            return Err(Error::invalid(format!("F = {f} out of range")));
        }
        let n = f.multiplicity() as i32;
        let binom = |n: i32, k: i32| factorial(n) / (factorial(k) * factorial(n - k));
        let mut terms = Vec::with_capacity((n * n) as usize);
        for row in 0..n {
            for col in 0..n {
                // Basis index i carries m = F - i, so F + m = 2F - i and F - m = i.
                let fp_row = n - 1 - row;
                let fp_col = n - 1 - col;
                let fm_col = col;
                let fm_row = row;
                let norm = (factorial(fp_row) * factorial(fm_row)
                    / (factorial(fp_col) * factorial(fm_col)))
                .sqrt();
                let mut list = Vec::new();
                let k_lo = 0.max(fp_row - fm_col);
                let k_hi = fp_col.min(fp_row);
                for k in k_lo..=k_hi {
                    let l = fp_row - k;
                    list.push(WignerTerm {
                        coef: norm * binom(fp_col, k) * binom(fm_col, l),
                        p11: k as usize,
                        p21: (fp_col - k) as usize,
                        p12: l as usize,
                        p22: (fm_col - l) as usize,
                    });
                }
                terms.push(list);
            }
        }
        Ok(Self { f, terms })
    }

    pub fn f(&self) -> HalfInt {
        self.f
    }

    pub fn dim(&self) -> usize {
        self.f.multiplicity()
    }

    /// Writes `D^F(u)` row-major into `out` (length `dim²`).
    pub fn fill(&self, u: &Su2, out: &mut [Complex64]) {
        let n = self.dim();
        debug_assert_eq!(out.len(), n * n);
        let all: Vec<usize> = (0..n * n).collect();
        self.fill_selected(u, &all, out);
    }

    /// Like [`fill`](Self::fill) but only writes the row-major slots in
    /// `slots`; the rest of `out` is left untouched.
    pub fn fill_selected(&self, u: &Su2, slots: &[usize], out: &mut [Complex64]) {
        let n = self.dim();
        let powers = |z: Complex64| {
            let mut p = [Complex64::new(1.0, 0.0); 2 * MAX_F.twice() as usize + 2];
            for i in 1..n {
                p[i] = p[i - 1] * z;
            }
            p
        };
        let p11 = powers(u.m[0][0]);
        let p12 = powers(u.m[0][1]);
        let p21 = powers(u.m[1][0]);
        let p22 = powers(u.m[1][1]);
        for &slot in slots {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in &self.terms[slot] {
                acc += p11[t.p11] * p21[t.p21] * p12[t.p12] * p22[t.p22] * t.coef;
            }
            out[slot] = acc;
        }
    }

    pub fn matrix(&self, u: &Su2) -> CMatrix {
        let n = self.dim();
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        self.fill(u, &mut buf);
        CMatrix::from_row_slice(n, n, &buf)
    }
}
