use super::{info_full, Group, Selection, ThetaConfig};
use crate::numerics::normal;

/// Probabilities of each outcome of the threshold selection rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionProbabilities {
    pub s1: f64,
    pub s2: f64,
    pub f: f64,
    pub empty: f64,
}

impl SelectionProbabilities {
    pub fn get(&self, w: Selection) -> f64 {
        match w {
            Selection::S1 => self.s1,
            Selection::S2 => self.s2,
            Selection::F => self.f,
            Selection::Empty => self.empty,
        }
    }
}

/// Selection probabilities from independent stage-1 subgroup statistics
/// `Z_j ~ N(theta_j sqrt(I_j), 1)`.
pub fn selection_probabilities(theta: &ThetaConfig, info1: f64, info2: f64, zeta: f64) -> SelectionProbabilities {
    let p1 = normal::sf(zeta - theta.theta1 * info1.sqrt());
    let p2 = normal::sf(zeta - theta.theta2 * info2.sqrt());
    let q1 = normal::cdf(zeta - theta.theta1 * info1.sqrt());
    let q2 = normal::cdf(zeta - theta.theta2 * info2.sqrt());
    SelectionProbabilities { s1: p1 * q2, s2: q1 * p2, f: p1 * p2, empty: q1 * q2 }
}

/// Precomputed stage-1 law of `(Z_1, Z_2, Z_F)` and the selection rule.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StageOneLaw {
    pub zeta: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu_f: f64,
    pub c1: f64,
    pub c2: f64,
    /// `Phi(zeta - mu_j)`: probability that subgroup `j` is not selected.
    pub q1: f64,
    pub q2: f64,
    s_cond: f64,
}

impl StageOneLaw {
    pub fn new(theta: &ThetaConfig, info1: f64, info2: f64, lambda: f64, zeta: f64) -> Self {
        let i_f = info_full(lambda, info1, info2);
        let c1 = lambda * (i_f / info1).sqrt();
        let c2 = (1.0 - lambda) * (i_f / info2).sqrt();
        let mu1 = theta.theta1 * info1.sqrt();
        let mu2 = theta.theta2 * info2.sqrt();
        Self {
            zeta,
            mu1,
            mu2,
            mu_f: c1 * mu1 + c2 * mu2,
            c1,
            c2,
            q1: normal::cdf(zeta - mu1),
            q2: normal::cdf(zeta - mu2),
            s_cond: (1.0 - c1 * c1).max(0.0).sqrt(),
        }
    }

    /// Lower end of the support of `Z_group` restricted to its selection event.
    pub fn support_lo(&self, group: Group) -> f64 {
        match group {
            Group::S1 | Group::S2 => self.zeta,
            Group::F => (self.c1 + self.c2) * self.zeta,
        }
    }

    pub fn density(&self, z: f64, group: Group) -> f64 {
        match group {
            Group::S1 => {
                if z > self.zeta { self.q2 * normal::pdf(z - self.mu1) } else { 0.0 }
            }
            Group::S2 => {
                if z > self.zeta { self.q1 * normal::pdf(z - self.mu2) } else { 0.0 }
            }
            Group::F => self.density_full(z),
        }
    }

    /// `f(z, F) = int_{zeta}^{(z - c2 zeta)/c1} phi(z1 - mu1) phi((z - c1 z1)/c2 - mu2) / c2 dz1`.
    /// The integrand is a product of Gaussians in `z1`, so the integral reduces to
    /// the law of `Z_1 | Z_F = z`, normal with mean `mu1 + c1 (z - mu_F)` and
    /// variance `1 - c1^2`, evaluated over the truncation interval.
    fn density_full(&self, z: f64) -> f64 {
        let lo = self.zeta;
        let hi = (z - self.c2 * self.zeta) / self.c1;
        if hi <= lo {
            return 0.0;
        }
        let m = self.mu1 + self.c1 * (z - self.mu_f);
        normal::pdf(z - self.mu_f) * normal::interval((lo - m) / self.s_cond, (hi - m) / self.s_cond)
    }

    /// Closed-form mass of a subgroup density above `b`.
    pub fn subgroup_tail(&self, group: Group, b: f64) -> f64 {
        let lo = b.max(self.zeta);
        match group {
            Group::S1 => self.q2 * normal::sf(lo - self.mu1),
            Group::S2 => self.q1 * normal::sf(lo - self.mu2),
            Group::F => unreachable!("full-population tail has no closed form"),
        }
    }
}

/// Joint density of `(Z_w, W = w)` for a subgroup `w`: non-zero only above `zeta`.
pub fn joint_density_subgroup(z: f64, w: Group, theta: &ThetaConfig, info1: f64, info2: f64, zeta: f64) -> f64 {
    assert!(w != Group::F, "use joint_density_full for the full population");
    // lambda does not enter the subgroup densities.
    StageOneLaw::new(theta, info1, info2, 0.5, zeta).density(z, w)
}

/// Joint density of `(Z_F, W = F)`: the full-population statistic restricted to
/// both subgroup statistics exceeding `zeta`.
pub fn joint_density_full(z: f64, theta: &ThetaConfig, info1: f64, info2: f64, lambda: f64, zeta: f64) -> f64 {
    StageOneLaw::new(theta, info1, info2, lambda, zeta).density(z, Group::F)
}

/// Dispatches to the subgroup or full-population density.
pub fn joint_density(z: f64, w: Group, theta: &ThetaConfig, info1: f64, info2: f64, lambda: f64, zeta: f64) -> f64 {
    StageOneLaw::new(theta, info1, info2, lambda, zeta).density(z, w)
}
