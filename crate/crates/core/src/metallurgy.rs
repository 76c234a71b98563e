//! Slag/metal dephosphorization quantities. Pressures are in atm.

use serde::{Deserialize, Serialize};

use crate::error::MetallurgyError;

/// Typical plant range of the phosphorus partition ratio.
pub const PARTITION_BAND: (f64, f64) = (5.0, 15.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlagMetalState {
    /// wt% P in slag.
    pub pct_p_slag: f64,
    /// wt% P in metal.
    pub pct_p_metal: f64,
    /// wt% PO₄³⁻ in slag.
    pub pct_po4_slag: Option<f64>,
    pub p_o2: f64,
    pub p_p2: f64,
    /// Equilibrium constant of phosphorus dissolution in the metal.
    pub k_p: f64,
    /// Henrian activity coefficient of P in the metal.
    pub f_p: f64,
    pub k2: Option<f64>,
    pub a_o2minus: Option<f64>,
    pub gamma0_po4: Option<f64>,
}

impl Default for SlagMetalState {
    fn default() -> Self {
        SlagMetalState {
            pct_p_slag: 0.0,
            pct_p_metal: 0.0,
            pct_po4_slag: None,
            p_o2: 1.0,
            p_p2: 1.0,
            k_p: 1.0,
            f_p: 1.0,
            k2: None,
            a_o2minus: None,
            gamma0_po4: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub l_p: f64,
    /// Set when `l_p` falls outside [`PARTITION_BAND`].
    pub out_of_band: bool,
}

fn finite(value: f64, name: &'static str) -> Result<f64, MetallurgyError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MetallurgyError::NonFinite(name))
    }
}

fn positive(value: f64, name: &'static str) -> Result<f64, MetallurgyError> {
    if finite(value, name)? > 0.0 {
        Ok(value)
    } else {
        Err(MetallurgyError::NonPositive(name))
    }
}

fn non_negative(value: f64, name: &'static str) -> Result<f64, MetallurgyError> {
    if finite(value, name)? >= 0.0 {
        Ok(value)
    } else {
        Err(MetallurgyError::NonPositive(name))
    }
}

/// `L_p = (%P) / [%P]`.
pub fn partition_coefficient(state: &SlagMetalState) -> Result<Partition, MetallurgyError> {
    let slag = non_negative(state.pct_p_slag, "pct_p_slag")?;
    let metal = positive(state.pct_p_metal, "pct_p_metal")?;
    let l_p = slag / metal;
    Ok(Partition { l_p, out_of_band: !(PARTITION_BAND.0..=PARTITION_BAND.1).contains(&l_p) })
}

/// `C = (%PO₄³⁻) / (P_P₂^½ · P_O₂^⁵⁄₄)`.
pub fn phosphate_capacity_gas(state: &SlagMetalState) -> Result<f64, MetallurgyError> {
    let po4 = non_negative(state.pct_po4_slag.ok_or(MetallurgyError::Missing("pct_po4_slag"))?, "pct_po4_slag")?;
    let p_p2 = positive(state.p_p2, "p_p2")?;
    let p_o2 = positive(state.p_o2, "p_o2")?;
    Ok(po4 / (p_p2.sqrt() * p_o2.powf(1.25)))
}

/// `C = K₂ · a_{O²⁻}^{3/2} / γ°_{PO₄³⁻}`, the ionic form of the capacity.
pub fn phosphate_capacity_ionic(state: &SlagMetalState) -> Result<f64, MetallurgyError> {
    let k2 = positive(state.k2.ok_or(MetallurgyError::Missing("k2"))?, "k2")?;
    let a = non_negative(state.a_o2minus.ok_or(MetallurgyError::Missing("a_o2minus"))?, "a_o2minus")?;
    let gamma = positive(state.gamma0_po4.ok_or(MetallurgyError::Missing("gamma0_po4"))?, "gamma0_po4")?;
    Ok(k2 * a.powf(1.5) / gamma)
}

/// `C = L_p · k_p / (f_p · P_O₂^⁵⁄₄)`.
pub fn phosphate_capacity_from_partition(state: &SlagMetalState, l_p: f64) -> Result<f64, MetallurgyError> {
    let l_p = non_negative(l_p, "l_p")?;
    let k_p = finite(state.k_p, "k_p")?;
    let f_p = positive(state.f_p, "f_p")?;
    let p_o2 = positive(state.p_o2, "p_o2")?;
    Ok(l_p * k_p / (f_p * p_o2.powf(1.25)))
}

/// Inverse of [`phosphate_capacity_from_partition`].
pub fn partition_from_capacity(state: &SlagMetalState, capacity: f64) -> Result<f64, MetallurgyError> {
    let c = finite(capacity, "capacity")?;
    let k_p = positive(state.k_p, "k_p")?;
    let f_p = positive(state.f_p, "f_p")?;
    let p_o2 = positive(state.p_o2, "p_o2")?;
    Ok(c * f_p * p_o2.powf(1.25) / k_p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(slag: f64, metal: f64) -> SlagMetalState {
        SlagMetalState { pct_p_slag: slag, pct_p_metal: metal, ..Default::default() }
    }

    #[test]
    fn partition_examples() {
        let p = partition_coefficient(&state(0.10, 0.01)).unwrap();
        assert!((p.l_p - 10.0).abs() < 1e-12);
        assert!(!p.out_of_band);
        let low = partition_coefficient(&state(0.02, 0.01)).unwrap();
        assert!((low.l_p - 2.0).abs() < 1e-12);
        assert!(low.out_of_band);
        assert_eq!(partition_coefficient(&state(0.1, 0.0)), Err(MetallurgyError::NonPositive("pct_p_metal")));
    }

    #[test]
    fn gas_capacity_examples() {
        let mut s = SlagMetalState { pct_po4_slag: Some(1.0), ..Default::default() };
        assert_eq!(phosphate_capacity_gas(&s).unwrap(), 1.0);
        s.pct_po4_slag = Some(2.0);
        s.p_p2 = 4.0;
        assert_eq!(phosphate_capacity_gas(&s).unwrap(), 1.0);
        s.p_o2 = 0.0;
        assert_eq!(phosphate_capacity_gas(&s), Err(MetallurgyError::NonPositive("p_o2")));
        assert_eq!(phosphate_capacity_gas(&SlagMetalState::default()), Err(MetallurgyError::Missing("pct_po4_slag")));
    }

    #[test]
    fn partition_capacity_examples() {
        let s = SlagMetalState::default();
        assert_eq!(phosphate_capacity_from_partition(&s, 10.0).unwrap(), 10.0);
        let doubled = SlagMetalState { p_o2: 2.0, ..Default::default() };
        let ratio = phosphate_capacity_from_partition(&s, 10.0).unwrap()
            / phosphate_capacity_from_partition(&doubled, 10.0).unwrap();
        assert!((ratio - 2f64.powf(1.25)).abs() < 1e-12);
        assert!((ratio - 2.3784).abs() < 1e-4);
        let odd = SlagMetalState { p_o2: 0.37, k_p: 2.5, f_p: 1.3, ..Default::default() };
        let c = phosphate_capacity_from_partition(&odd, 7.25).unwrap();
        assert!((partition_from_capacity(&odd, c).unwrap() - 7.25).abs() < 1e-12);
        let no_f = SlagMetalState { f_p: 0.0, ..Default::default() };
        assert!(phosphate_capacity_from_partition(&no_f, 1.0).is_err());
    }

    #[test]
    fn ionic_capacity() {
        let s = SlagMetalState { k2: Some(2.0), a_o2minus: Some(4.0), gamma0_po4: Some(0.5), ..Default::default() };
        assert_eq!(phosphate_capacity_ionic(&s).unwrap(), 32.0);
        assert_eq!(phosphate_capacity_ionic(&SlagMetalState::default()), Err(MetallurgyError::Missing("k2")));
    }
}
