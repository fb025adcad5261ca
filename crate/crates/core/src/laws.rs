//! Randomised checks of the laws every maximal monotone atom must obey:
//! firm nonexpansiveness of `J_γ`, the resolvent identity, Yosida membership,
//! monotonicity of `γ ↦ ‖A_γ(x)‖` and monotonicity on sampled graph pairs.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::DomainDescriptor;
use crate::error::Result;
use crate::operator::OperatorAtom;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawConfig {
    pub draws: usize,
    pub seed: u64,
    /// Points are drawn uniformly in `[-radius, radius]^N`.
    pub radius: f64,
    /// Steps are drawn log-uniformly in this range.
    pub gamma_range: (f64, f64),
    /// Number of graph pairs drawn for the monotonicity check.
    pub graph_points: usize,
}

impl Default for LawConfig {
    fn default() -> Self {
        LawConfig { draws: 1000, seed: 0, radius: 5.0, gamma_range: (1e-3, 1e2), graph_points: 40 }
    }
}

/// Largest violation of each law, divided by `1 + ‖x‖` (or by
/// `1 + max(‖x‖, ‖x′‖)` for two-point laws). Values `<= 0` mean no
/// violation at all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawReport {
    pub atom: String,
    pub draws: usize,
    pub firm_nonexpansive: f64,
    pub resolvent_identity: f64,
    pub yosida_membership: f64,
    pub yosida_monotone: f64,
    pub graph_monotone: f64,
    pub strong_monotone: f64,
}

impl LawReport {
    pub fn worst(&self) -> f64 {
        [
            self.firm_nonexpansive,
            self.resolvent_identity,
            self.yosida_membership,
            self.yosida_monotone,
            self.graph_monotone,
            self.strong_monotone,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

pub fn check_laws(atom: &OperatorAtom, config: &LawConfig) -> Result<LawReport> {
    let n = atom.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (glo, ghi) = (config.gamma_range.0.ln(), config.gamma_range.1.ln());
    let r = config.radius;
    let point = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(-r..=r));
    let mut report = LawReport {
        atom: atom.kind_name().to_string(),
        draws: config.draws,
        firm_nonexpansive: f64::NEG_INFINITY,
        resolvent_identity: f64::NEG_INFINITY,
        yosida_membership: f64::NEG_INFINITY,
        yosida_monotone: f64::NEG_INFINITY,
        graph_monotone: f64::NEG_INFINITY,
        strong_monotone: f64::NEG_INFINITY,
    };
    for _ in 0..config.draws {
        let x = point(&mut rng);
        let x2 = point(&mut rng);
        let mut g1 = rng.random_range(glo..=ghi).exp();
        let mut g2 = rng.random_range(glo..=ghi).exp();
        if g1 > g2 {
            std::mem::swap(&mut g1, &mut g2);
        }
        let scale = 1.0 + x.norm();
        let pair_scale = 1.0 + x.norm().max(x2.norm());

        let j = atom.resolvent(g1, &x)?;
        let j2 = atom.resolvent(g1, &x2)?;
        let dj = &j - &j2;
        let firm = dj.norm_squared() - dj.dot(&(&x - &x2));
        report.firm_nonexpansive = report.firm_nonexpansive.max(firm / pair_scale);

        let y = atom.yosida(g1, &x)?;
        let identity = (&x - (&j + &y * g1)).norm();
        report.resolvent_identity = report.resolvent_identity.max(identity / scale);

        let member = atom.value_set(&j)?.distance(&y);
        report.yosida_membership = report.yosida_membership.max(member / scale);

        let xd = atom.project_domain(&x)?;
        let small = atom.yosida(g1, &xd)?.norm();
        let large = atom.yosida(g2, &xd)?.norm();
        let least = atom.least_norm(&xd)?.norm();
        let excess = (large - small).max(small - least);
        report.yosida_monotone = report.yosida_monotone.max(excess / (1.0 + xd.norm()));
    }

    let region = DomainDescriptor::Box { lo: DVector::from_element(n, -r), hi: DVector::from_element(n, r) };
    let pairs = atom.graph_sample(&region, config.graph_points.max(2), config.seed ^ 0x9e37_79b9)?;
    let alpha = atom.strong_monotonicity();
    for (i, (x, y)) in pairs.iter().enumerate() {
        for (x2, y2) in &pairs[i + 1..] {
            let dx = x - x2;
            let inner = (y - y2).dot(&dx);
            let s = 1.0 + x.norm().max(x2.norm());
            report.graph_monotone = report.graph_monotone.max(-inner / s);
            report.strong_monotone = report.strong_monotone.max((alpha * dx.norm_squared() - inner) / s);
        }
    }
    Ok(report)
}
