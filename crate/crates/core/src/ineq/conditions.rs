use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::ScalarField;
use crate::group::GroupDescriptor;
use crate::hcalc::{horizontal_data_real, sublap_real};
use crate::quad::Domain;

pub const SAMPLING_NOTE: &str = "sign conditions checked on a finite deterministic sample; a.e. statements are not certified";

/// Worst-case margins of the sign conditions on a potential `V` over sampled points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub samples: usize,
    pub min_v: f64,
    pub argmin_v: Vec<f64>,
    /// Largest `L V`; negative means `L V < 0` held everywhere sampled.
    pub max_lv: f64,
    pub argmax_lv: Vec<f64>,
    pub min_lv: f64,
    /// Largest `L(V^sigma)` relative to the size of its factorized terms.
    pub max_lv_sigma: Option<f64>,
    pub argmax_lv_sigma: Option<Vec<f64>>,
    /// Largest `(sigma - 1) |grad_G V|^2 - V |L V|`, scaled the same way.
    pub sigma_margin: Option<f64>,
    pub note: String,
}

impl ConditionReport {
    pub fn lv_negative(&self) -> bool {
        self.samples > 0 && self.max_lv < 0.0
    }

    pub fn lv_positive(&self) -> bool {
        self.samples > 0 && self.min_lv > 0.0
    }

    pub fn v_positive(&self) -> bool {
        self.samples > 0 && self.min_v > 0.0
    }

    /// `L(V^sigma) <= 0` up to `1e-10` of the term scale.
    pub fn lv_sigma_nonpositive(&self) -> Option<bool> {
        self.max_lv_sigma.map(|m| m <= 1e-10)
    }
}

/// Samples `domain` with a Halton sequence and records the sign margins of `V`.
pub fn check_pointwise_conditions(
    g: &GroupDescriptor,
    v: &dyn ScalarField,
    sigma: Option<f64>,
    domain: &Domain,
    count: usize,
) -> Result<ConditionReport> {
    let points = domain.sample_points(g, count)?;
    let mut rep = ConditionReport {
        samples: 0,
        min_v: f64::INFINITY,
        argmin_v: Vec::new(),
        max_lv: f64::NEG_INFINITY,
        argmax_lv: Vec::new(),
        min_lv: f64::INFINITY,
        max_lv_sigma: sigma.map(|_| f64::NEG_INFINITY),
        argmax_lv_sigma: sigma.map(|_| Vec::new()),
        sigma_margin: sigma.map(|_| f64::NEG_INFINITY),
        note: SAMPLING_NOTE.to_string(),
    };
    for x in points {
        let frame = g.frame(&x);
        let jet = v.real_jet(&x);
        let (val, grad, lap) = horizontal_data_real(g, &frame, &jet);
        if !(val.is_finite() && lap.is_finite()) {
            continue;
        }
        rep.samples += 1;
        if val < rep.min_v {
            rep.min_v = val;
            rep.argmin_v = x.clone();
        }
        if lap > rep.max_lv {
            rep.max_lv = lap;
            rep.argmax_lv = x.clone();
        }
        rep.min_lv = rep.min_lv.min(lap);
        if let Some(s) = sigma {
            if val <= 0.0 {
                // V^sigma is undefined; report it as a violation of the sigma condition
                rep.max_lv_sigma = Some(f64::INFINITY);
                rep.argmax_lv_sigma = Some(x.clone());
                continue;
            }
            let gv2: f64 = grad[..frame.nh].iter().map(|a| a * a).sum();
            let scale = s * val.powf(s - 2.0) * ((s - 1.0) * gv2 + val * lap.abs());
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let lvs = sublap_real(g, &frame, &jet.powf(s)) / scale;
            if lvs > rep.max_lv_sigma.unwrap() {
                rep.max_lv_sigma = Some(lvs);
                rep.argmax_lv_sigma = Some(x.clone());
            }
            let margin = s * val.powf(s - 2.0) * ((s - 1.0) * gv2 - val * lap.abs()) / scale;
            rep.sigma_margin = Some(rep.sigma_margin.unwrap().max(margin));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{first_stratum_power, gauge_power, JetField};
    use crate::jet::Jet;

    #[test]
    fn hardy_potential_is_superharmonic() {
        // V = |x'|^{2 - gamma}: L V = (2 - gamma)(N - gamma)|x'|^{-gamma}
        let g = GroupDescriptor::abelian(5).unwrap();
        let v = first_stratum_power(&g, 2.0 - 3.0);
        let dom = Domain::ball(vec![0.5; 5], 0.4);
        let rep = check_pointwise_conditions(&g, &v, None, &dom, 50).unwrap();
        assert_eq!(rep.samples, 50);
        assert!(rep.lv_negative());
        let x = &rep.argmax_lv;
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let expect = (2.0 - 3.0) * (5.0 - 3.0) * r.powf(-3.0);
        assert!((rep.max_lv - expect).abs() < 1e-10 * expect.abs());
    }

    #[test]
    fn kombe_potential_on_heisenberg() {
        let g = GroupDescriptor::heisenberg(1).unwrap();
        let v = gauge_power(&g, 0.5 - 2.0);
        let dom = Domain::ball(vec![1.0, 0.3, 0.2], 0.5);
        let rep = check_pointwise_conditions(&g, &v, None, &dom, 40).unwrap();
        assert!(rep.lv_negative() && rep.v_positive());
    }

    #[test]
    fn harmonic_power_of_sigma_vanishes() {
        let g = GroupDescriptor::heisenberg(2).unwrap();
        let alpha = 3.0;
        let n = g.first_stratum_dim() as f64;
        let v = first_stratum_power(&g, -(alpha - 2.0));
        let sigma = (n - 2.0) / (alpha - 2.0);
        let dom = Domain::ball(vec![1.0, 0.5, -0.3, 0.2, 0.1], 0.5);
        let rep = check_pointwise_conditions(&g, &v, Some(sigma), &dom, 40).unwrap();
        assert!(rep.max_lv_sigma.unwrap().abs() < 1e-10);
        assert!(rep.sigma_margin.unwrap() <= 1e-12);
    }

    #[test]
    fn constant_potential_is_flagged() {
        let g = GroupDescriptor::abelian(3).unwrap();
        let v = JetField::real("one", 3, |x: &[Jet]| Jet::constant(x.len(), 1.0));
        let rep = check_pointwise_conditions(&g, &v, None, &Domain::cube(3, 1.0), 20).unwrap();
        assert_eq!(rep.max_lv, 0.0);
        assert!(!rep.lv_negative());
    }
}
