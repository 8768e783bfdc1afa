//! Device parameters, random dopants and contact data.
//!
//! User-facing quantities are in the units physicists quote them in: lengths in
//! nm, concentrations in cm^-3, mobilities in cm^2/(V s). The solver works with
//! lengths in nm, potentials in units of `U_T` and concentrations in units of
//! `n_i`; [`Scaling`] holds the conversion factors.

use crate::error::{Error, Result};
use crate::math;
use crate::mesh::Point;
use crate::rng::uniform01;
use alloc::format;
use alloc::vec::Vec;
use rand_core::RngCore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// Silicon bar (source, channel, drain) between two gate oxides.
    DoubleGate,
    /// Plain silicon rectangle `[0, length] x [0, width]` with source on the
    /// left, drain on the right and insulated top and bottom.
    Slab { length: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub geometry: Geometry,
    /// nm
    pub gate_length: f64,
    pub oxide_thickness: f64,
    pub channel_width: f64,
    pub source_drain_length: f64,
    /// Relative permittivities; absolute ones are these times `a0`.
    pub permittivity_si: f64,
    pub permittivity_ox: f64,
    /// Vacuum permittivity, F/m.
    pub a0: f64,
    /// Intrinsic density, cm^-3.
    pub n_i: f64,
    /// Thermal voltage, V.
    pub u_t: f64,
    pub v_gate: f64,
    pub v_sd: f64,
    /// cm^-3
    pub doping_sd: f64,
    pub doping_channel: f64,
    /// Upper bound accepted for the peak doping of a single dopant, cm^-3.
    pub doping_max: f64,
    /// Carrier lifetimes, s. `f64::INFINITY` switches recombination off.
    pub tau_n: f64,
    pub tau_p: f64,
    /// cm^2/(V s)
    pub mu_n: f64,
    pub mu_p: f64,
    /// Elementary charge, C.
    pub q: f64,
    /// Gaussian width of a dopant, nm.
    pub sigma_dopant: f64,
    pub dopants_per_region: usize,
    /// Normalise dopant bumps with `(2 pi sigma^2)^(3/2)` instead of the
    /// in-plane `(2 pi sigma^2)`.
    pub gaussian_exponent_3d: bool,
    /// Add the continuum `doping_sd` in source and drain on top of the dopants.
    pub background_in_sd: bool,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        DeviceSpec {
            geometry: Geometry::DoubleGate,
            gate_length: 30.0,
            oxide_thickness: 2.0,
            channel_width: 15.0,
            source_drain_length: 10.0,
            permittivity_si: 11.7,
            permittivity_ox: 3.9,
            a0: 8.85e-12,
            n_i: 1.5e10,
            u_t: 0.026,
            v_gate: 0.2,
            v_sd: 0.1,
            doping_sd: 1e19,
            doping_channel: 1e16,
            doping_max: 1e22,
            tau_n: 1e-6,
            tau_p: 1e-6,
            mu_n: 1400.0,
            mu_p: 450.0,
            q: 1.602176634e-19,
            sigma_dopant: 0.35,
            dopants_per_region: 23,
            gaussian_exponent_3d: false,
            background_in_sd: false,
        }
    }
}

impl DeviceSpec {
    /// Intrinsic unit square without dopants or bias.
    pub fn unit_square() -> Self {
        DeviceSpec {
            geometry: Geometry::Slab { length: 1.0, width: 1.0 },
            source_drain_length: 0.25,
            v_gate: 0.0,
            v_sd: 0.0,
            doping_sd: 0.0,
            doping_channel: 0.0,
            dopants_per_region: 0,
            ..DeviceSpec::default()
        }
    }

    /// Dopant count that reproduces `doping_sd` in a region of depth `W`.
    pub fn nominal_dopant_count(&self) -> usize {
        let [lo, hi] = self.dopant_region(DopantRegion::Source);
        let volume = (hi[0] - lo[0]) * (hi[1] - lo[1]) * self.silicon_width();
        (self.doping_sd * volume / 1e21 + 0.5) as usize
    }

    pub fn total_length(&self) -> f64 {
        match self.geometry {
            Geometry::DoubleGate => 2.0 * self.source_drain_length + self.gate_length,
            Geometry::Slab { length, .. } => length,
        }
    }

    pub fn silicon_width(&self) -> f64 {
        match self.geometry {
            Geometry::DoubleGate => self.channel_width,
            Geometry::Slab { width, .. } => width,
        }
    }

    /// Lower-left and upper-right corners of the source or drain rectangle.
    pub fn dopant_region(&self, region: DopantRegion) -> [Point; 2] {
        let (l, w, lsd) = (self.total_length(), self.silicon_width(), self.source_drain_length);
        match region {
            DopantRegion::Source => [[0.0, 0.0], [lsd, w]],
            DopantRegion::Drain => [[l - lsd, 0.0], [l, w]],
        }
    }

    pub(crate) fn validate_geometry(&self) -> Result<()> {
        let positive = |name: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Geometry(format!("{name} = {x} must be positive")))
            }
        };
        positive("source_drain_length", self.source_drain_length)?;
        match self.geometry {
            Geometry::DoubleGate => {
                positive("gate_length", self.gate_length)?;
                positive("oxide_thickness", self.oxide_thickness)?;
                positive("channel_width", self.channel_width)?;
            }
            Geometry::Slab { length, width } => {
                positive("length", length)?;
                positive("width", width)?;
                if 2.0 * self.source_drain_length > length {
                    return Err(Error::Geometry(format!(
                        "source and drain ({}) overlap in a slab of length {length}",
                        self.source_drain_length
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks every parameter against its admissible range.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        let check = |name: &'static str, ok: bool, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: reason.into() })
            }
        };
        let pos = |x: f64| x > 0.0 && x.is_finite();
        check("permittivity_si", pos(self.permittivity_si), "must be positive")?;
        check("permittivity_ox", pos(self.permittivity_ox), "must be positive")?;
        check("a0", pos(self.a0), "must be positive")?;
        check("n_i", pos(self.n_i), "must be positive")?;
        check("u_t", pos(self.u_t), "must be positive")?;
        check("q", pos(self.q), "must be positive")?;
        check("mu_n", pos(self.mu_n), "must be positive")?;
        check("mu_p", pos(self.mu_p), "must be positive")?;
        check("tau_n", self.tau_n > 0.0, "must be positive")?;
        check("tau_p", self.tau_p > 0.0, "must be positive")?;
        check("sigma_dopant", pos(self.sigma_dopant), "must be positive")?;
        check("v_gate", self.v_gate.is_finite(), "must be finite")?;
        check("v_sd", self.v_sd.is_finite(), "must be finite")?;
        check("doping_sd", self.doping_sd >= 0.0 && self.doping_sd.is_finite(), "must be non-negative")?;
        check(
            "doping_channel",
            self.doping_channel >= 0.0 && self.doping_channel.is_finite(),
            "must be non-negative",
        )?;
        let peak = self.doping_channel.max(self.doping_sd) + self.dopant_peak();
        if peak > self.doping_max {
            return Err(Error::InvalidParameter {
                name: "doping_max",
                reason: format!("single-dopant peak {peak:e} cm^-3 exceeds the bound {:e}", self.doping_max),
            });
        }
        Ok(())
    }

    /// Dose carried by one dopant, in cm^-3 nm^2.
    pub fn dopant_charge(&self) -> f64 {
        if self.dopants_per_region == 0 {
            return 0.0;
        }
        let [lo, hi] = self.dopant_region(DopantRegion::Source);
        self.doping_sd * (hi[0] - lo[0]) * (hi[1] - lo[1]) / self.dopants_per_region as f64
    }

    fn gaussian_norm(&self) -> f64 {
        let s2 = 2.0 * math::PI * self.sigma_dopant * self.sigma_dopant;
        if self.gaussian_exponent_3d {
            math::powf(s2, 1.5)
        } else {
            s2
        }
    }

    /// Concentration at the centre of an isolated dopant, cm^-3.
    pub fn dopant_peak(&self) -> f64 {
        self.dopant_charge() / self.gaussian_norm()
    }

    /// Nondimensionalisation constants.
    pub fn scaling(&self) -> Scaling {
        let n_i_m3 = self.n_i * 1e6;
        let nm2 = 1e-18;
        Scaling {
            lambda: self.q * n_i_m3 * nm2 / (self.a0 * self.u_t),
            eps_si: self.permittivity_si,
            eps_ox: self.permittivity_ox,
            k_n: self.u_t * self.mu_n * 1e-4 / nm2,
            k_p: self.u_t * self.mu_p * 1e-4 / nm2,
            tau_n: self.tau_n,
            tau_p: self.tau_p,
            n_i: self.n_i,
            u_t: self.u_t,
            current_n: self.q * n_i_m3 * self.u_t * self.mu_n * 1e-4,
            current_p: self.q * n_i_m3 * self.u_t * self.mu_p * 1e-4,
        }
    }
}

/// Factors relating solver units to physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    /// Poisson coupling `q n_i L^2 / (A0 U_T)` with `L = 1 nm`.
    pub lambda: f64,
    pub eps_si: f64,
    pub eps_ox: f64,
    /// Diffusion rates `U_T mu / L^2`, 1/s.
    pub k_n: f64,
    pub k_p: f64,
    pub tau_n: f64,
    pub tau_p: f64,
    /// cm^-3
    pub n_i: f64,
    /// V
    pub u_t: f64,
    /// `q n_i U_T mu` in A/m; multiplies a scaled flux to give a current per
    /// unit device depth.
    pub current_n: f64,
    pub current_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopantRegion {
    Source,
    Drain,
}

/// One realisation of the random dopant configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DopantSample {
    pub positions: Vec<Point>,
    /// cm^-3 nm^2
    pub charges: Vec<f64>,
    pub regions: Vec<DopantRegion>,
}

impl DopantSample {
    pub fn empty() -> Self {
        DopantSample { positions: Vec::new(), charges: Vec::new(), regions: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Maps `omega` in the unit square onto the region rectangle.
pub fn place_dopant(spec: &DeviceSpec, region: DopantRegion, omega: [f64; 2]) -> Point {
    let [lo, hi] = spec.dopant_region(region);
    [lo[0] + omega[0] * (hi[0] - lo[0]), lo[1] + omega[1] * (hi[1] - lo[1])]
}

/// Draws `dopants_per_region` uniform positions in source and in drain.
pub fn sample_dopants<R: RngCore>(spec: &DeviceSpec, rng: &mut R) -> DopantSample {
    let n = spec.dopants_per_region;
    let charge = spec.dopant_charge();
    let mut s = DopantSample {
        positions: Vec::with_capacity(2 * n),
        charges: Vec::with_capacity(2 * n),
        regions: Vec::with_capacity(2 * n),
    };
    for region in [DopantRegion::Source, DopantRegion::Drain] {
        for _ in 0..n {
            let omega = [uniform01(rng), uniform01(rng)];
            s.positions.push(place_dopant(spec, region, omega));
            s.charges.push(charge);
            s.regions.push(region);
        }
    }
    s
}

/// Bumps farther than this many widths away are skipped (relative size e^-50).
const CUTOFF_SIGMAS: f64 = 10.0;

/// Net donor concentration `C(x)` in cm^-3.
pub fn doping_at(x: Point, sample: &DopantSample, spec: &DeviceSpec) -> f64 {
    let (l, lsd) = (spec.total_length(), spec.source_drain_length);
    let mut c = if x[0] >= lsd && x[0] <= l - lsd {
        spec.doping_channel
    } else if spec.background_in_sd {
        spec.doping_sd
    } else {
        0.0
    };
    let s2 = spec.sigma_dopant * spec.sigma_dopant;
    let cut2 = CUTOFF_SIGMAS * CUTOFF_SIGMAS * s2;
    let norm = spec.gaussian_norm();
    for (p, &cj) in sample.positions.iter().zip(&sample.charges) {
        let d2 = (x[0] - p[0]) * (x[0] - p[0]) + (x[1] - p[1]) * (x[1] - p[1]);
        if d2 < cut2 {
            c += cj / norm * math::exp(-d2 / (2.0 * s2));
        }
    }
    c
}

/// Potential and Slotboom data at one ohmic contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhmicContact {
    /// V
    pub potential: f64,
    /// Potential over `U_T`.
    pub psi: f64,
    pub u: f64,
    pub v: f64,
}

/// Charge-neutral, equilibrium carrier densities at a contact with net doping
/// `doping` (cm^-3) and applied bias `bias` (V).
pub fn ohmic_contact(spec: &DeviceSpec, doping: f64, bias: f64) -> Result<OhmicContact> {
    if !(doping >= 0.0) || !doping.is_finite() {
        return Err(Error::ContactDoping(doping));
    }
    let c = doping / spec.n_i;
    let psi_bi = math::asinh(c / 2.0);
    // n/n_i = c/2 + sqrt(c^2/4 + 1) = e^asinh(c/2); p = n_i^2 / n.
    let n = c / 2.0 + math::sqrt(c * c / 4.0 + 1.0);
    let p = 1.0 / n;
    let psi = psi_bi + bias / spec.u_t;
    Ok(OhmicContact {
        potential: spec.u_t * psi,
        psi,
        u: n * math::exp(-psi),
        v: p * math::exp(psi),
    })
}

/// Dirichlet data for all contacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub source: OhmicContact,
    pub drain: OhmicContact,
    /// Gate potential over `U_T`.
    pub psi_gate: f64,
}

impl BoundaryData {
    /// Smallest `K >= 1` with `1/K <= u_D, v_D <= K` on both contacts.
    pub fn k_bound(&self) -> f64 {
        [self.source.u, self.source.v, self.drain.u, self.drain.v]
            .iter()
            .map(|&x| x.max(1.0 / x))
            .fold(1.0, f64::max)
    }
}

/// Contacts use the nominal source/drain doping, so the boundary data is the
/// same for every dopant sample.
pub fn boundary_values(spec: &DeviceSpec) -> Result<BoundaryData> {
    Ok(BoundaryData {
        source: ohmic_contact(spec, spec.doping_sd, 0.0)?,
        drain: ohmic_contact(spec, spec.doping_sd, spec.v_sd)?,
        psi_gate: spec.v_gate / spec.u_t,
    })
}
