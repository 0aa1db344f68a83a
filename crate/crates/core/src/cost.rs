//! Parametric cost comparison: per-model compute cost, traditional effort
//! baseline, and the reduction-factor sensitivity analysis.
//!
//! Token costs use exact fixed-point arithmetic (prices in micro-dollars per
//! million tokens) so that half-cent values such as $0.625 round the same way
//! every time. Scenario costs are plain `f64` dollars; reduction factors are
//! returned unrounded.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whole cents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}${}.{:02}", abs / 100, abs % 100)
    }
}

/// Unit prices per one million tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingRow {
    pub model: String,
    /// $ per 1M input tokens.
    pub input_price: f64,
    /// $ per 1M output tokens.
    pub output_price: f64,
    /// Set when the row reproduces an observed bill rather than list pricing.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub observed: bool,
}

impl PricingRow {
    pub fn new(model: impl Into<String>, input_price: f64, output_price: f64) -> Result<Self> {
        let row = PricingRow { model: model.into(), input_price, output_price, observed: false };
        row.validate()?;
        Ok(row)
    }

    pub fn validate(&self) -> Result<()> {
        if !non_negative(self.input_price) || !non_negative(self.output_price) {
            return Err(Error::NegativePrice);
        }
        Ok(())
    }
}

/// False for negative values and NaN.
fn non_negative(v: f64) -> bool {
    v >= 0.0
}

/// Dollars per 1M tokens to micro-dollars per 1M tokens.
fn micros(price: f64) -> u128 {
    libm::round(price * 1e6) as u128
}

/// Half-up rounding of a product `tokens × micro-dollars-per-1M` to cents.
/// The product is in units of 1e-12 dollars; one cent is 1e10 of them.
fn to_cents(pico_dollars: u128) -> Cents {
    Cents(((pico_dollars + 5_000_000_000) / 10_000_000_000) as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeCost {
    pub input_cost: Cents,
    pub output_cost: Cents,
    pub total: Cents,
}

/// Linear token pricing. Components are rounded to cents separately; the
/// total rounds the unrounded sum.
pub fn compute_cost(input_tokens: i64, output_tokens: i64, pricing: &PricingRow) -> Result<ComputeCost> {
    if input_tokens < 0 || output_tokens < 0 {
        return Err(Error::NegativeTokens);
    }
    pricing.validate()?;
    let input = input_tokens as u128 * micros(pricing.input_price);
    let output = output_tokens as u128 * micros(pricing.output_price);
    Ok(ComputeCost { input_cost: to_cents(input), output_cost: to_cents(output), total: to_cents(input + output) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub hours: f64,
    pub cost: f64,
}

/// Sum of phase hours times a blended hourly rate.
pub fn traditional_baseline(phase_hours: &[f64], rate: f64) -> Result<Baseline> {
    if !phase_hours.iter().all(|h| non_negative(*h)) || !non_negative(rate) {
        return Err(Error::InvalidScenario("hours and rate must be non-negative"));
    }
    let hours: f64 = phase_hours.iter().sum();
    Ok(Baseline { hours, cost: hours * rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub traditional_effort_hours: f64,
    /// $ per hour.
    pub labor_rate: f64,
    pub agilev_human_hours: f64,
    pub ai_cycles: u32,
    /// $ of AI compute per cycle.
    pub compute_cost_per_cycle: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let fields = [self.traditional_effort_hours, self.labor_rate, self.agilev_human_hours, self.compute_cost_per_cycle];
        if !fields.iter().all(|v| non_negative(*v) && v.is_finite()) {
            return Err(Error::InvalidScenario("parameters must be finite and non-negative"));
        }
        if self.ai_cycles < 1 {
            return Err(Error::InvalidScenario("at least one AI cycle"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCost {
    pub traditional: f64,
    pub agilev: f64,
    pub compute: f64,
    pub reduction_factor: f64,
}

impl ScenarioCost {
    /// Share of the Agile V cost spent on AI compute.
    pub fn compute_share(&self) -> f64 {
        self.compute / self.agilev
    }
}

pub fn scenario_cost(s: &Scenario) -> Result<ScenarioCost> {
    s.validate()?;
    let traditional = s.traditional_effort_hours * s.labor_rate;
    let compute = s.ai_cycles as f64 * s.compute_cost_per_cycle;
    let agilev = s.agilev_human_hours * s.labor_rate + compute;
    if agilev <= 0.0 {
        return Err(Error::ZeroAgilevCost);
    }
    Ok(ScenarioCost { traditional, agilev, compute, reduction_factor: traditional / agilev })
}

/// Reduction factor with compute cost per cycle scaled by `multiplier`.
pub fn price_stress(s: &Scenario, multiplier: f64) -> Result<ScenarioCost> {
    if multiplier.is_nan() || multiplier <= 0.0 || !multiplier.is_finite() {
        return Err(Error::InvalidScenario("multiplier must be positive"));
    }
    let mut stressed = s.clone();
    stressed.compute_cost_per_cycle *= multiplier;
    scenario_cost(&stressed)
}

/// Reference token volume of the two-cycle HIL delivery.
pub const REFERENCE_TOKENS: (i64, i64) = (500_000, 25_000);

/// Unit prices per 1M tokens, back-derived from the published per-model
/// totals at [`REFERENCE_TOKENS`]. The Gemini 1.5 Pro row reproduces an
/// observed bill and is excluded from list-price checks.
pub fn reference_pricing() -> Vec<PricingRow> {
    let row = |m: &str, i, o, observed| PricingRow { model: m.into(), input_price: i, output_price: o, observed };
    alloc::vec![
        row("gemini-1.5-pro", 3.50, 105.20, true),
        row("gemini-2.5-pro", 1.25, 10.00, false),
        row("claude-sonnet-4.6", 3.00, 15.00, false),
        row("claude-opus-4.6", 5.00, 25.00, false),
        row("gpt-5-mini", 0.25, 2.00, false),
        row("gpt-5.2", 1.75, 14.00, false),
    ]
}

/// Pessimistic, base and optimistic scenarios. Compute per cycle is
/// back-solved from the Agile V totals ($830, $611, $608) minus human cost.
pub fn reference_scenarios() -> Vec<Scenario> {
    let s = |name: &str, effort, rate, human, cycles, compute| Scenario {
        name: name.into(),
        traditional_effort_hours: effort,
        labor_rate: rate,
        agilev_human_hours: human,
        ai_cycles: cycles,
        compute_cost_per_cycle: compute,
    };
    alloc::vec![
        s("pessimistic", 80.0, 100.0, 8.0, 3, 10.0),
        s("base", 104.0, 150.0, 4.0, 1, 11.0),
        s("optimistic", 150.0, 200.0, 3.0, 1, 8.0),
    ]
}

fn money(v: f64) -> String {
    let cents = libm::round(v * 100.0) as i64;
    let whole = cents / 100;
    let mut digits = format!("{}", whole.unsigned_abs());
    let mut i = digits.len();
    while i > 3 {
        i -= 3;
        digits.insert(i, ',');
    }
    let sign = if cents < 0 { "-" } else { "" };
    if cents % 100 == 0 {
        format!("{sign}${digits}")
    } else {
        format!("{sign}${digits}.{:02}", (cents % 100).unsigned_abs())
    }
}

fn num(v: f64) -> String {
    if v == libm::trunc(v) {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Sensitivity table, one column per scenario. Factors are shown to two
/// decimals; the computation itself is unrounded.
pub fn render_sensitivity_table(scenarios: &[Scenario]) -> Result<String> {
    let costs: Vec<ScenarioCost> = scenarios.iter().map(scenario_cost).collect::<Result<_>>()?;
    let mut out = String::from("| Parameter |");
    for s in scenarios {
        let _ = write!(out, " {} |", if s.name.is_empty() { "-" } else { &s.name });
    }
    out.push_str("\n|---|");
    for _ in scenarios {
        out.push_str("---:|");
    }
    out.push('\n');
    let mut line = |label: &str, cell: &dyn Fn(usize) -> String| {
        let _ = write!(out, "| {label} |");
        for i in 0..scenarios.len() {
            let _ = write!(out, " {} |", cell(i));
        }
        out.push('\n');
    };
    line("Traditional effort", &|i| format!("{} h", num(scenarios[i].traditional_effort_hours)));
    line("Labor rate (/hr)", &|i| money(scenarios[i].labor_rate));
    line("Agile V human hours", &|i| format!("{} h", num(scenarios[i].agilev_human_hours)));
    line("AI iteration cycles", &|i| format!("{}", scenarios[i].ai_cycles));
    line("Compute per cycle", &|i| money(scenarios[i].compute_cost_per_cycle));
    line("Traditional cost", &|i| money(costs[i].traditional));
    line("Agile V cost", &|i| money(costs[i].agilev));
    line("Reduction factor", &|i| format!("{:.2}x", costs[i].reduction_factor));
    Ok(out)
}
