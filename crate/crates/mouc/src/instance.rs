//! Hydro-thermal unit-commitment instances: unit data, demand series,
//! validation, (de)serialization, and seeded synthesis of realistic fleets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading or validating an instance.
#[derive(Debug, Error)]
pub enum InstanceError {
    /// The byte stream is not a well-formed instance file.
    #[error("instance parse error: {0}")]
    Parse(#[from] serde_json::Error),
    /// A structural invariant is violated; the message names the offender.
    #[error("instance validation error: {0}")]
    Validation(String),
}

/// A conventional thermal generator.
///
/// Cost is quadratic per period (`cost_quad·g² + cost_lin·g`), plus
/// `cost_const` for every on-period and `startup_cost` per start.  Emissions
/// are `co2_lin·g + co2_quad·g²` in tonnes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalUnit {
    pub id: usize,
    /// $/MW² per period.
    pub cost_quad: f64,
    /// $/MW per period.
    pub cost_lin: f64,
    /// $ per on-period.
    pub cost_const: f64,
    /// $ per start (fixed; no hot/cold decay).
    pub startup_cost: f64,
    /// Minimum stable generation in MW when committed.
    pub p_min: f64,
    /// Maximum generation in MW.
    pub p_max: f64,
    /// Minimum consecutive on-periods after a start.
    pub min_up: usize,
    /// Minimum consecutive off-periods after a stop.
    pub min_down: usize,
    /// t/MW.
    pub co2_lin: f64,
    /// t/MW².
    pub co2_quad: f64,
}

/// A run-of-river hydro generator: always on, zero cost, zero emissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroUnit {
    pub id: usize,
    /// MW produced per volume-unit of flow.
    pub volume_to_power: f64,
    /// Minimum flow in volume-units.
    pub min_flood: f64,
    /// Maximum flow in volume-units.
    pub max_flood: f64,
}

/// A full planning instance over `periods` time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub periods: usize,
    /// Demand per period, MW.
    pub demand: Vec<f64>,
    /// Derating applied to hydro power bounds, in (0, 1].
    pub hydro_scaling: f64,
    pub thermal: Vec<ThermalUnit>,
    pub hydro: Vec<HydroUnit>,
}

/// Hydro generation bounds in MW: `scaling · volume_to_power · flood`.
pub fn hydro_power_bounds(h: &HydroUnit, scaling: f64) -> (f64, f64) {
    let lo = scaling * h.volume_to_power * h.min_flood;
    let hi = scaling * h.volume_to_power * h.max_flood;
    (lo, hi)
}

impl Instance {
    /// Checks every structural invariant; `Err` names the violated rule and unit.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let fail = |msg: String| Err(InstanceError::Validation(msg));
        if self.periods == 0 {
            return fail("periods must be >= 1".into());
        }
        if self.demand.len() != self.periods {
            return fail(format!(
                "demand length {} != periods {}",
                self.demand.len(),
                self.periods
            ));
        }
        if !(self.hydro_scaling > 0.0 && self.hydro_scaling <= 1.0) {
            return fail(format!("hydro_scaling {} not in (0,1]", self.hydro_scaling));
        }
        for (t, d) in self.demand.iter().enumerate() {
            if !d.is_finite() || *d < 0.0 {
                return fail(format!("demand[{t}] = {d} is negative or non-finite"));
            }
        }
        for u in &self.thermal {
            if !(0.0 <= u.p_min && u.p_min <= u.p_max) {
                return fail(format!(
                    "thermal unit {}: p_min {} / p_max {} violate 0 <= p_min <= p_max",
                    u.id, u.p_min, u.p_max
                ));
            }
            if u.min_up < 1 || u.min_down < 1 {
                return fail(format!("thermal unit {}: min_up/min_down must be >= 1", u.id));
            }
            if u.cost_quad < 0.0 || u.co2_quad < 0.0 || u.startup_cost < 0.0 {
                return fail(format!(
                    "thermal unit {}: cost_quad, co2_quad, startup_cost must be >= 0",
                    u.id
                ));
            }
        }
        for h in &self.hydro {
            if !(0.0 <= h.min_flood && h.min_flood <= h.max_flood) {
                return fail(format!(
                    "hydro unit {}: flood bounds {}..{} violate 0 <= min <= max",
                    h.id, h.min_flood, h.max_flood
                ));
            }
            if h.volume_to_power <= 0.0 {
                return fail(format!("hydro unit {}: volume_to_power must be > 0", h.id));
            }
        }
        // Feasibility pre-check: installed capacity covers the demand peak.
        let cap: f64 = self.thermal.iter().map(|u| u.p_max).sum::<f64>()
            + self
                .hydro
                .iter()
                .map(|h| hydro_power_bounds(h, self.hydro_scaling).1)
                .sum::<f64>();
        let peak = self.demand.iter().cloned().fold(0.0, f64::max);
        if cap < peak {
            return fail(format!("peak demand {peak} exceeds installed capacity {cap}"));
        }
        Ok(())
    }

    /// Serializes to the instance file format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("instance serializes");
        out.push(b'\n');
        out
    }
}

/// Parses and validates an instance file.
pub fn load_instance(source: &[u8]) -> Result<Instance, InstanceError> {
    let inst: Instance = serde_json::from_slice(source)?;
    inst.validate()?;
    Ok(inst)
}

/// Generation knobs for [`generate_instance`].
#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub thermal: usize,
    pub hydro: usize,
    pub periods: usize,
    pub seed: u64,
}

/// Emission coefficient table (co2_lin t/MW, co2_quad t/MW²) replicated
/// cyclically over the thermal fleet; values span coal-like to gas-like units.
const BASE_EMISSIONS: [(f64, f64); 10] = [
    (0.95, 4.2e-4),
    (0.88, 3.1e-4),
    (0.74, 5.6e-4),
    (0.61, 2.4e-4),
    (0.55, 6.8e-4),
    (0.49, 1.9e-4),
    (0.42, 7.5e-4),
    (0.37, 2.9e-4),
    (0.58, 4.9e-4),
    (0.66, 3.7e-4),
];

/// Synthesizes a deterministic instance: thermal cost curves and hydro flows
/// are drawn from fixed ranges, emission coefficients come from the base table
/// (cyclic), and the demand profile is capped at 80% of installed capacity.
pub fn generate_instance(cfg: GenConfig) -> Instance {
    assert!(cfg.periods >= 1, "periods must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hydro_scaling = 0.5;

    let mut thermal = Vec::with_capacity(cfg.thermal);
    for i in 0..cfg.thermal {
        let p_max = rng.gen_range(60.0..400.0f64);
        let p_min = p_max * rng.gen_range(0.2..0.45);
        let (co2_lin, co2_quad) = BASE_EMISSIONS[i % BASE_EMISSIONS.len()];
        thermal.push(ThermalUnit {
            id: i,
            cost_quad: rng.gen_range(0.01..0.06),
            cost_lin: rng.gen_range(15.0..45.0),
            cost_const: rng.gen_range(100.0..600.0),
            startup_cost: rng.gen_range(200.0..2000.0),
            p_min: round3(p_min),
            p_max: round3(p_max),
            min_up: rng.gen_range(1..=cfg.periods.min(3)),
            min_down: rng.gen_range(1..=cfg.periods.min(3)),
            co2_lin,
            co2_quad,
        });
    }
    let mut hydro = Vec::with_capacity(cfg.hydro);
    for i in 0..cfg.hydro {
        let min_flood = rng.gen_range(0.0..15.0f64);
        let max_flood = min_flood + rng.gen_range(10.0..80.0);
        hydro.push(HydroUnit {
            id: i,
            volume_to_power: round3(rng.gen_range(1.0..4.0)),
            min_flood: round3(min_flood),
            max_flood: round3(max_flood),
        });
    }

    let cap: f64 = thermal.iter().map(|u| u.p_max).sum::<f64>()
        + hydro
            .iter()
            .map(|h| hydro_power_bounds(h, hydro_scaling).1)
            .sum::<f64>();
    let t_count = cfg.periods as f64;
    let mut demand = Vec::with_capacity(cfg.periods);
    for t in 0..cfg.periods {
        // Diurnal base shape plus noise, clamped to the 80%-of-capacity guard.
        let phase = 2.0 * std::f64::consts::PI * (t as f64) / t_count;
        let shape = 0.55 + 0.18 * (phase - std::f64::consts::FRAC_PI_2).sin();
        let noisy = shape * rng.gen_range(0.92..1.08);
        demand.push(round3((cap * noisy).clamp(0.0, 0.8 * cap)));
    }

    Instance {
        name: format!(
            "gen-t{}-h{}-p{}-s{}",
            cfg.thermal, cfg.hydro, cfg.periods, cfg.seed
        ),
        periods: cfg.periods,
        demand,
        hydro_scaling,
        thermal,
        hydro,
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}
