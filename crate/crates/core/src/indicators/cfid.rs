//! Carbon footprint per guest and day.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bands::{cfid_bands, classify, ClassifyPolicy};
use super::{IndicatorError, IndicatorValue, ObservationPeriod};

pub const CFID_FORMULA: &str = "(e_app * ef + e_hvac * ef + em) / (n * d)";
pub const CFID_UNIT: &str = "kg CO2e/guest-day";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfidInputs {
    pub e_appliances_kwh: f64,
    pub e_hvac_kwh: f64,
    pub ef_energy_kgco2e_per_kwh: f64,
    pub em_material_kgco2e: f64,
    pub n_guests: u32,
    pub n_days: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfidMode {
    /// Energies and materials of one stay, divided by its guests and days.
    PerStay,
    /// Inputs already averaged per guest-day; guests and days count as 1.
    AggregateAverage,
}

impl CfidInputs {
    /// Averaged inputs for [`CfidMode::AggregateAverage`].
    pub fn averaged(e_app: f64, e_hvac: f64, ef: f64, em: f64) -> Self {
        Self { e_appliances_kwh: e_app, e_hvac_kwh: e_hvac, ef_energy_kgco2e_per_kwh: ef, em_material_kgco2e: em, n_guests: 1, n_days: 1 }
    }

    fn check(&self) -> Result<(), IndicatorError> {
        let fields = [
            ("e_appliances_kwh", self.e_appliances_kwh),
            ("e_hvac_kwh", self.e_hvac_kwh),
            ("ef_energy_kgco2e_per_kwh", self.ef_energy_kgco2e_per_kwh),
            ("em_material_kgco2e", self.em_material_kgco2e),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(IndicatorError::InvalidInputs(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn cfid_value(inputs: &CfidInputs, mode: CfidMode) -> Result<f64, IndicatorError> {
    inputs.check()?;
    let guest_days = match mode {
        CfidMode::AggregateAverage => 1.0,
        CfidMode::PerStay => {
            let nd = f64::from(inputs.n_guests) * f64::from(inputs.n_days);
            if nd == 0.0 {
                return Err(IndicatorError::InvalidInputs("guests × days is zero".into()));
            }
            nd
        }
    };
    let ef = inputs.ef_energy_kgco2e_per_kwh;
    Ok((inputs.e_appliances_kwh * ef + inputs.e_hvac_kwh * ef + inputs.em_material_kgco2e) / guest_days)
}

pub fn compute_cfid(inputs: &CfidInputs, mode: CfidMode, period: Option<ObservationPeriod>) -> Result<IndicatorValue, IndicatorError> {
    let value = cfid_value(inputs, mode)?;
    let provenance = [("mode", json!(mode)), ("inputs", json!(inputs)), ("formula", json!(CFID_FORMULA))]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Ok(IndicatorValue {
        indicator_ref: "CFID".into(),
        value,
        unit: CFID_UNIT.into(),
        observation_period: period,
        band: classify(value, &cfid_bands(), ClassifyPolicy::Strict),
        provenance,
    })
}

/// Average material emissions per stay from replaced key cards.
pub fn em_material_average(cards_replaced: u32, total_stays: u32, kg_per_card: f64) -> Result<f64, IndicatorError> {
    if total_stays == 0 {
        return Err(IndicatorError::InvalidInputs("total_stays must be positive".into()));
    }
    if !(kg_per_card.is_finite() && kg_per_card >= 0.0) {
        return Err(IndicatorError::InvalidInputs("kg_per_card must be non-negative".into()));
    }
    Ok(f64::from(cards_replaced) * kg_per_card / f64::from(total_stays))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::bands::{ACCEPTABLE, EXCELLENT};
    use crate::indicators::formula::{evaluate, parse_formula, Bindings};
    use proptest::prelude::*;

    #[test]
    fn averaged_inputs() {
        let v = compute_cfid(&CfidInputs::averaged(2.5, 4.1, 0.4, 0.004), CfidMode::AggregateAverage, None).unwrap();
        assert!((v.value - 2.644).abs() <= 1e-12);
        assert_eq!(v.display_value(), "2.644");
        assert_eq!(v.band.as_deref(), Some(ACCEPTABLE));
    }

    #[test]
    fn zeros_are_excellent() {
        let v = compute_cfid(&CfidInputs::averaged(0.0, 0.0, 0.0, 0.0), CfidMode::AggregateAverage, None).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.band.as_deref(), Some(EXCELLENT));
    }

    #[test]
    fn per_stay_divides_by_guest_days() {
        let inputs = CfidInputs {
            e_appliances_kwh: 5.0,
            e_hvac_kwh: 8.2,
            ef_energy_kgco2e_per_kwh: 0.4,
            em_material_kgco2e: 0.03,
            n_guests: 2,
            n_days: 1,
        };
        let v = cfid_value(&inputs, CfidMode::PerStay).unwrap();
        assert!((v - (5.0 * 0.4 + 8.2 * 0.4 + 0.03) / 2.0).abs() < 1e-12);
        assert!((v - 2.655).abs() < 1e-12);
        let none = CfidInputs { n_guests: 0, ..inputs };
        assert!(cfid_value(&none, CfidMode::PerStay).is_err());
    }

    #[test]
    fn key_card_materials() {
        let em = em_material_average(15, 122, 0.030).unwrap();
        assert!((em - 0.45 / 122.0).abs() < 1e-15);
        assert!((em - 0.004).abs() <= 0.0005);
        assert_eq!(em_material_average(0, 100, 0.030).unwrap(), 0.0);
        assert!((em_material_average(10, 10, 0.030).unwrap() - 0.030).abs() < 1e-15);
        assert!(em_material_average(1, 0, 0.030).is_err());
    }

    proptest! {
        #[test]
        fn linear_and_homogeneous(
            e_app in 0.0f64..50.0, e_hvac in 0.0f64..50.0, ef in 0.0f64..1.0,
            em in 0.0f64..1.0, n in 1u32..5, d in 1u32..10, k in 0.0f64..10.0,
        ) {
            let base = CfidInputs { e_appliances_kwh: e_app, e_hvac_kwh: e_hvac, ef_energy_kgco2e_per_kwh: ef, em_material_kgco2e: em, n_guests: n, n_days: d };
            let v = cfid_value(&base, CfidMode::PerStay).unwrap();
            let scaled = CfidInputs { e_appliances_kwh: k * e_app, e_hvac_kwh: k * e_hvac, em_material_kgco2e: k * em, ..base };
            let vs = cfid_value(&scaled, CfidMode::PerStay).unwrap();
            prop_assert!((vs - k * v).abs() <= 1e-9 * (1.0 + vs.abs()));

            let doubled = CfidInputs { e_appliances_kwh: 2.0 * e_app, ..base };
            let only_app = CfidInputs { e_hvac_kwh: 0.0, em_material_kgco2e: 0.0, ..base };
            let vd = cfid_value(&doubled, CfidMode::PerStay).unwrap();
            prop_assert!((vd - v - cfid_value(&only_app, CfidMode::PerStay).unwrap()).abs() <= 1e-9 * (1.0 + vd));

            let mut b = Bindings::new();
            for (name, x) in [("e_app", e_app), ("e_hvac", e_hvac), ("ef", ef), ("em", em), ("n", f64::from(n)), ("d", f64::from(d))] {
                b.insert(name.into(), x.into());
            }
            let dsl = evaluate(&parse_formula(CFID_FORMULA).unwrap(), &b).unwrap();
            prop_assert!((dsl - v).abs() <= 1e-12);
        }
    }
}
