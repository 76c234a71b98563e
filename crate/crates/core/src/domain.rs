//! Heat records and the fixed twelve-feature schema.
//!
//! Every other module vectorizes a heat through [`FeatureId::ALL`], so the
//! ordering here is the ordering of model inputs, CSV columns and the
//! feature names accepted by the HTTP service.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Number of model input features.
pub const FEATURE_COUNT: usize = 12;

/// Cubic metres per cubic foot (plant oxygen meters report ft³).
pub const M3_PER_FT3: f64 = 0.028_316_8;

/// Kilograms per avoirdupois pound.
pub const KG_PER_LB: f64 = 0.453_592;

/// Open temperature sanity band in °C. Values outside are almost always a
/// °F/°C mix-up.
pub const TEMPERATURE_BAND_C: (f64, f64) = (1000.0, 2000.0);

/// Closed sanity band for end-point phosphorus in wt%.
pub const ENDPOINT_P_BAND: (f64, f64) = (0.0, 0.1);

/// Input features, x1..x12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    ScrapWeight,
    CScrap,
    MnScrap,
    CrScrap,
    SiScrap,
    SScrap,
    InjectedOxygen,
    InjectedLime,
    Energy,
    DeslagTemp,
    TapTemp,
    Duration,
}

impl FeatureId {
    pub const ALL: [FeatureId; FEATURE_COUNT] = [
        FeatureId::ScrapWeight,
        FeatureId::CScrap,
        FeatureId::MnScrap,
        FeatureId::CrScrap,
        FeatureId::SiScrap,
        FeatureId::SScrap,
        FeatureId::InjectedOxygen,
        FeatureId::InjectedLime,
        FeatureId::Energy,
        FeatureId::DeslagTemp,
        FeatureId::TapTemp,
        FeatureId::Duration,
    ];

    /// Position in the model input vector.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<FeatureId> {
        Self::ALL.get(index).copied()
    }

    /// Machine name, used by the service API and reports.
    pub fn name(self) -> &'static str {
        match self {
            FeatureId::ScrapWeight => "scrap_weight",
            FeatureId::CScrap => "c_scrap",
            FeatureId::MnScrap => "mn_scrap",
            FeatureId::CrScrap => "cr_scrap",
            FeatureId::SiScrap => "si_scrap",
            FeatureId::SScrap => "s_scrap",
            FeatureId::InjectedOxygen => "injected_oxygen",
            FeatureId::InjectedLime => "injected_lime",
            FeatureId::Energy => "energy",
            FeatureId::DeslagTemp => "deslag_temp",
            FeatureId::TapTemp => "tap_temp",
            FeatureId::Duration => "duration",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FeatureId::ScrapWeight => "Scrap weight",
            FeatureId::CScrap => "C content in scrap",
            FeatureId::MnScrap => "Mn content in scrap",
            FeatureId::CrScrap => "Cr content in scrap",
            FeatureId::SiScrap => "Si content in scrap",
            FeatureId::SScrap => "S content in scrap",
            FeatureId::InjectedOxygen => "Injected oxygen",
            FeatureId::InjectedLime => "Injected lime",
            FeatureId::Energy => "Energy consumption",
            FeatureId::DeslagTemp => "Deslagging temperature",
            FeatureId::TapTemp => "Tapping temperature",
            FeatureId::Duration => "Process duration",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            FeatureId::ScrapWeight | FeatureId::InjectedLime => "kg",
            FeatureId::CScrap
            | FeatureId::MnScrap
            | FeatureId::CrScrap
            | FeatureId::SiScrap
            | FeatureId::SScrap => "wt%",
            FeatureId::InjectedOxygen => "m3",
            FeatureId::Energy => "kWh",
            FeatureId::DeslagTemp | FeatureId::TapTemp => "degC",
            FeatureId::Duration => "min",
        }
    }

    pub fn is_temperature(self) -> bool {
        matches!(self, FeatureId::DeslagTemp | FeatureId::TapTemp)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureId::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| DomainError::UnknownFeature(s.to_string()))
    }
}

/// One furnace heat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatRecord {
    pub heat_id: String,
    pub features: BTreeMap<FeatureId, f64>,
    /// Measured end-point phosphorus, wt%.
    pub endpoint_p: Option<f64>,
}

/// A single broken invariant on a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub value: Option<f64>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            Some(v) => write!(f, "{} = {}: {}", self.field, v, self.rule),
            None => write!(f, "{}: {}", self.field, self.rule),
        }
    }
}

impl HeatRecord {
    pub fn from_vector(
        heat_id: impl Into<String>,
        values: [f64; FEATURE_COUNT],
        endpoint_p: Option<f64>,
    ) -> Self {
        let features = FeatureId::ALL.iter().copied().zip(values).collect();
        HeatRecord { heat_id: heat_id.into(), features, endpoint_p }
    }

    pub fn get(&self, feature: FeatureId) -> Option<f64> {
        self.features.get(&feature).copied()
    }

    pub fn set(&mut self, feature: FeatureId, value: f64) {
        self.features.insert(feature, value);
    }

    /// The record's inputs in [`FeatureId::ALL`] order.
    pub fn feature_vector(&self) -> Result<[f64; FEATURE_COUNT], DomainError> {
        let mut out = [0.0; FEATURE_COUNT];
        for feature in FeatureId::ALL {
            out[feature.index()] = self
                .get(feature)
                .ok_or_else(|| DomainError::MissingFeature { heat_id: self.heat_id.clone(), feature })?;
        }
        Ok(out)
    }

    /// Every broken invariant, empty when the record is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for feature in FeatureId::ALL {
            let Some(value) = self.get(feature) else {
                violations.push(Violation {
                    field: feature.name().to_string(),
                    value: None,
                    rule: "feature missing".to_string(),
                });
                continue;
            };
            if let Some(rule) = feature_rule_violation(feature, value) {
                violations.push(Violation {
                    field: feature.name().to_string(),
                    value: Some(value),
                    rule,
                });
            }
        }
        if let Some(p) = self.endpoint_p {
            let (lo, hi) = ENDPOINT_P_BAND;
            if !p.is_finite() || p < lo || p > hi {
                violations.push(Violation {
                    field: "endpoint_p".to_string(),
                    value: Some(p),
                    rule: format!("must be finite and within [{lo}, {hi}] wt%"),
                });
            }
        }
        violations
    }
}

/// Domain rule for a single feature value, `None` if it is acceptable.
pub fn feature_rule_violation(feature: FeatureId, value: f64) -> Option<String> {
    if !value.is_finite() {
        return Some("must be finite".to_string());
    }
    if value < 0.0 {
        return Some("must be non-negative".to_string());
    }
    if feature.is_temperature() {
        let (lo, hi) = TEMPERATURE_BAND_C;
        if value <= lo || value >= hi {
            return Some(format!("temperature must lie in ({lo}, {hi}) degC"));
        }
    }
    None
}

pub fn validate_record(record: &HeatRecord) -> Vec<Violation> {
    record.validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Cleaned,
    Synthetic,
}

/// Ordered collection of heats with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    records: Vec<HeatRecord>,
    provenance: Vec<Provenance>,
    ids: HashSet<String>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: HeatRecord, provenance: Provenance) -> Result<(), DomainError> {
        if !self.ids.insert(record.heat_id.clone()) {
            return Err(DomainError::DuplicateHeatId(record.heat_id));
        }
        self.records.push(record);
        self.provenance.push(provenance);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[HeatRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HeatRecord, Provenance)> {
        self.records.iter().zip(self.provenance.iter().copied())
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new();
        for &i in indices {
            // ids are unique in self, so they stay unique in any selection
            out.push(self.records[i].clone(), self.provenance[i])
                .expect("selection indices must be distinct");
        }
        out
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Dataset {
        self.provenance.iter_mut().for_each(|p| *p = provenance);
        self
    }

    /// Column of one feature; `None` entries for missing values.
    pub fn column(&self, feature: FeatureId) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.get(feature)).collect()
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a HeatRecord;
    type IntoIter = std::slice::Iter<'a, HeatRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2_means() -> [f64; FEATURE_COUNT] {
        [42673.0, 0.2747, 0.798, 0.7456, 0.2345, 0.0127, 179.0483, 1047.7989, 20702.0, 1600.0, 1652.0, 147.0]
    }

    #[test]
    fn vector_follows_feature_order() {
        let record = HeatRecord::from_vector("h1", table2_means(), Some(0.0098));
        let v = record.feature_vector().unwrap();
        assert_eq!(v[0], 42673.0);
        assert_eq!(v, record.feature_vector().unwrap());
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let values = table2_means();
        let mut reversed = HeatRecord { heat_id: "h".into(), features: BTreeMap::new(), endpoint_p: None };
        for f in FeatureId::ALL.iter().rev() {
            reversed.set(*f, values[f.index()]);
        }
        assert_eq!(reversed.feature_vector().unwrap(), values);
    }

    #[test]
    fn valid_record_has_no_violations() {
        let record = HeatRecord::from_vector("h1", table2_means(), Some(0.0098));
        assert!(record.validate().is_empty());
    }

    #[test]
    fn missing_oxygen_is_named() {
        let mut record = HeatRecord::from_vector("h1", table2_means(), None);
        record.features.remove(&FeatureId::InjectedOxygen);
        let v = record.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "injected_oxygen");
        assert!(record.feature_vector().is_err());
    }

    #[test]
    fn room_temperature_tap_is_rejected() {
        let mut record = HeatRecord::from_vector("h1", table2_means(), None);
        record.set(FeatureId::TapTemp, 25.0);
        let v = record.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "tap_temp");
    }

    #[test]
    fn endpoint_outside_band_is_rejected() {
        let record = HeatRecord::from_vector("h1", table2_means(), Some(0.98));
        assert_eq!(record.validate().len(), 1);
        let record = HeatRecord::from_vector("h1", table2_means(), Some(f64::NAN));
        assert_eq!(record.validate().len(), 1);
    }

    #[test]
    fn negative_feature_is_rejected() {
        let mut values = table2_means();
        values[7] = -1.0;
        let record = HeatRecord::from_vector("h1", values, None);
        assert_eq!(record.validate()[0].field, "injected_lime");
    }

    #[test]
    fn names_round_trip() {
        for f in FeatureId::ALL {
            assert_eq!(f.name().parse::<FeatureId>().unwrap(), f);
            assert_eq!(FeatureId::from_index(f.index()), Some(f));
        }
        assert!("oxygen".parse::<FeatureId>().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut ds = Dataset::new();
        let r = HeatRecord::from_vector("h1", table2_means(), None);
        ds.push(r.clone(), Provenance::Raw).unwrap();
        assert!(matches!(ds.push(r, Provenance::Raw), Err(DomainError::DuplicateHeatId(_))));
        assert_eq!(ds.len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn vector_record_bijection(values in proptest::array::uniform12(0.0f64..1e5)) {
                let record = HeatRecord::from_vector("x", values, None);
                let back = HeatRecord::from_vector("x", record.feature_vector().unwrap(), None);
                prop_assert_eq!(back.feature_vector().unwrap(), values);
                prop_assert_eq!(back, record);
            }
        }
    }
}
